//! Length-capped beam search over decoder distributions.

use super::network::{argmax, decode_step, log_softmax, Encoded};
use super::params::ModelParams;
use super::vocab::{BOS, EOS};
use crate::attention::AttentionKind;
use crate::deptree::SdcMatrix;
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted ids, ending in EOS unless the length cap was hit.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: Tensor,
}

impl Hypothesis {
    pub fn finished(&self) -> bool {
        self.tokens.last() == Some(&EOS)
    }

    /// Tokens with the trailing EOS removed.
    pub fn words(&self) -> &[usize] {
        match self.tokens.split_last() {
            Some((&EOS, rest)) => rest,
            _ => &self.tokens,
        }
    }
}

/// Keeps the `beam` best extensions at every step, ranked by summed
/// log-probability (ties go to the earlier hypothesis, then the lower token
/// id). Extensions ending in EOS leave the beam as finished. Stops once the
/// best finished score is at least the best live one, since scores never
/// increase. `max_len` counts EOS.
pub fn beam_search(
    params: &ModelParams,
    kind: AttentionKind,
    src: &[usize],
    mask: Option<&SdcMatrix>,
    beam: usize,
    max_len: usize,
) -> Result<Hypothesis> {
    if beam == 0 || max_len == 0 {
        return Err(Error::Config(
            "beam size and maximum length must be positive".into(),
        ));
    }
    let enc = Encoded::new(params, src)?;
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: enc.initial_state.clone(),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        let mut candidates = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (i, hyp) in live.iter().enumerate() {
            let prev = hyp.tokens.last().copied().unwrap_or(BOS);
            let step = decode_step(params, kind, &enc, mask, &hyp.state, prev)?;
            for (k, lp) in log_softmax(&step.logits).into_iter().enumerate() {
                candidates.push((hyp.log_prob + lp, i, k));
            }
            states.push(step.state);
        }
        // Stable sort keeps (hypothesis, token) order among equal scores.
        candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut next = Vec::with_capacity(beam);
        for &(score, i, k) in candidates.iter().take(beam) {
            let mut tokens = live[i].tokens.clone();
            tokens.push(k);
            let hyp = Hypothesis {
                tokens,
                log_prob: score,
                state: states[i].clone(),
            };
            if k == EOS {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        live = next;
        let best_live = live.first().map(|h| h.log_prob);
        let best_done = best_of(&finished).map(|h| h.log_prob);
        match (best_done, best_live) {
            (_, None) => break,
            (Some(d), Some(l)) if d >= l => break,
            _ => {}
        }
    }
    finished.extend(live);
    best_of(&finished)
        .cloned()
        .ok_or_else(|| Error::Contract("beam search produced no hypothesis".into()))
}

fn best_of(hyps: &[Hypothesis]) -> Option<&Hypothesis> {
    hyps.iter()
        .fold(None, |best: Option<&Hypothesis>, h| match best {
            Some(b) if b.log_prob >= h.log_prob => Some(b),
            _ => Some(h),
        })
}

/// Picks the first most likely token at each step.
pub fn greedy_decode(
    params: &ModelParams,
    kind: AttentionKind,
    src: &[usize],
    mask: Option<&SdcMatrix>,
    max_len: usize,
) -> Result<Hypothesis> {
    let enc = Encoded::new(params, src)?;
    let mut hyp = Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: enc.initial_state.clone(),
    };
    while hyp.tokens.len() < max_len && !hyp.finished() {
        let prev = hyp.tokens.last().copied().unwrap_or(BOS);
        let step = decode_step(params, kind, &enc, mask, &hyp.state, prev)?;
        let k = argmax(&step.logits);
        hyp.log_prob += log_softmax(&step.logits)[k];
        hyp.tokens.push(k);
        hyp.state = step.state;
    }
    Ok(hyp)
}
