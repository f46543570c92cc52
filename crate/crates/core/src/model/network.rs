//! Bidirectional GRU encoder and the attention-conditioned decoder.

use rand_chacha::ChaCha8Rng;

use super::data::Example;
use super::params::{GruWeights, ModelParams, ModelWeights};
use super::vocab::{BOS, EOS};
use crate::attention::{
    attend_node, keys_node, AttentionKind, AttentionNodes, AttentionOutput, Keys,
};
use crate::deptree::SdcMatrix;
use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Dropout applied while building a training graph.
pub struct Noise {
    pub rate: f64,
    pub rng: ChaCha8Rng,
}

fn drop(g: &mut Graph<'_>, x: NodeId, noise: &mut Option<Noise>) -> Result<NodeId> {
    match noise {
        Some(n) => g.dropout(x, n.rate, &mut n.rng),
        None => Ok(x),
    }
}

fn affine(
    g: &mut Graph<'_>,
    w: NodeId,
    x: NodeId,
    u: NodeId,
    h: NodeId,
    b: NodeId,
) -> Result<NodeId> {
    let wx = g.matmul(w, x)?;
    let uh = g.matmul(u, h)?;
    let s = g.add(wx, uh)?;
    g.add(s, b)
}

/// One GRU update: `h' = n + z ⊙ (h − n)`.
pub fn gru_step(g: &mut Graph<'_>, w: &GruWeights<NodeId>, x: NodeId, h: NodeId) -> Result<NodeId> {
    let r_pre = affine(g, w.w_r, x, w.u_r, h, w.b_r)?;
    let r = g.sigmoid(r_pre)?;
    let z_pre = affine(g, w.w_z, x, w.u_z, h, w.b_z)?;
    let z = g.sigmoid(z_pre)?;
    let rh = g.mul(r, h)?;
    let n_pre = affine(g, w.w_n, x, w.u_n, rh, w.b_n)?;
    let n = g.tanh(n_pre)?;
    let diff = g.sub(h, n)?;
    let zd = g.mul(z, diff)?;
    g.add(n, zd)
}

/// Graph handles for an encoded sentence.
#[derive(Debug, Clone, Copy)]
pub struct EncoderNodes {
    /// `J × 2h`, row j = [forward_j; backward_j].
    pub annotations: NodeId,
    pub initial_state: NodeId,
}

pub fn encode_node(
    g: &mut Graph<'_>,
    w: &ModelWeights<NodeId>,
    src: &[usize],
    noise: &mut Option<Noise>,
) -> Result<EncoderNodes> {
    if src.is_empty() {
        return Err(Error::Data("cannot encode an empty sentence".into()));
    }
    let hidden = g.value(w.enc_fwd.u_r).rows();
    let mut xs = Vec::with_capacity(src.len());
    for &id in src {
        let e = g.embedding(w.src_embed, id)?;
        xs.push(drop(g, e, noise)?);
    }
    let zero = g.constant(Tensor::zeros(hidden, 1));
    let mut fwd = Vec::with_capacity(src.len());
    let mut h = zero;
    for &x in &xs {
        h = gru_step(g, &w.enc_fwd, x, h)?;
        fwd.push(h);
    }
    let mut bwd = vec![zero; src.len()];
    h = zero;
    for j in (0..src.len()).rev() {
        h = gru_step(g, &w.enc_bwd, xs[j], h)?;
        bwd[j] = h;
    }
    let mut parts = Vec::with_capacity(2 * src.len());
    for j in 0..src.len() {
        parts.push(fwd[j]);
        parts.push(bwd[j]);
    }
    let stacked = g.concat(&parts)?;
    let annotations = g.reshape(stacked, src.len(), 2 * hidden)?;
    let annotations = drop(g, annotations, noise)?;
    let init = g.matmul(w.init_w, bwd[0])?;
    let init = g.add(init, w.init_b)?;
    let initial_state = g.tanh(init)?;
    Ok(EncoderNodes {
        annotations,
        initial_state,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct StepNodes {
    pub logits: NodeId,
    pub state: NodeId,
    pub attention: AttentionNodes,
}

/// One decoder step: attend with `s_prev`, update the GRU on
/// `[E_y[y_prev]; c]`, then `L_o tanh(L_w E_y[y_prev] + L_d s + context terms)`.
#[allow(clippy::too_many_arguments)]
pub fn decode_step_node(
    g: &mut Graph<'_>,
    w: &ModelWeights<NodeId>,
    kind: AttentionKind,
    keys: &Keys,
    mask: Option<&SdcMatrix>,
    s_prev: NodeId,
    y_prev: usize,
    noise: &mut Option<Noise>,
) -> Result<StepNodes> {
    let ey = g.embedding(w.tgt_embed, y_prev)?;
    let ey = drop(g, ey, noise)?;
    let att = attend_node(g, kind, s_prev, keys, mask, &w.score, w.position.as_ref())?;
    let input = g.concat(&[ey, att.context])?;
    let s = gru_step(g, &w.dec, input, s_prev)?;

    let missing =
        |name: &str| Error::Config(format!("{} attention needs weight {name}", kind.name()));
    let wy = g.matmul(w.l_w, ey)?;
    let ds = g.matmul(w.l_d, s)?;
    let mut pre = g.add(wy, ds)?;
    let mut add_term =
        |g: &mut Graph<'_>, m: Option<NodeId>, name: &str, c: NodeId| -> Result<()> {
            let m = m.ok_or_else(|| missing(name))?;
            let t = g.matmul(m, c)?;
            pre = g.add(pre, t)?;
            Ok(())
        };
    match kind {
        AttentionKind::Global => add_term(g, w.l_cg, "pred.l_cg", att.context)?,
        AttentionKind::Local(_) => add_term(g, w.l_cl, "pred.l_cl", att.context)?,
        AttentionKind::SyntaxDirected(_) => add_term(g, w.l_cs, "pred.l_cs", att.context)?,
        AttentionKind::DoubleContext(_) => {
            let (_, cs) = att
                .syntax
                .ok_or_else(|| Error::Contract("double context without syntax context".into()))?;
            add_term(g, w.l_cg, "pred.l_cg", att.context)?;
            add_term(g, w.l_cs, "pred.l_cs", cs)?;
        }
    }
    let act = g.tanh(pre)?;
    let act = drop(g, act, noise)?;
    let logits = g.matmul(w.l_o, act)?;
    Ok(StepNodes {
        logits,
        state: s,
        attention: att,
    })
}

fn check_mask(mask: Option<&SdcMatrix>, len: usize) -> Result<()> {
    match mask {
        Some(m) if m.len() != len => Err(Error::Data(format!(
            "dependency tree has {} words but the source sentence has {len}",
            m.len()
        ))),
        _ => Ok(()),
    }
}

/// Mean cross-entropy of `tgt` followed by EOS under teacher forcing.
pub fn loss_node(
    g: &mut Graph<'_>,
    w: &ModelWeights<NodeId>,
    kind: AttentionKind,
    ex: &Example,
    noise: &mut Option<Noise>,
) -> Result<NodeId> {
    check_mask(ex.mask.as_ref(), ex.src.len())?;
    let enc = encode_node(g, w, &ex.src, noise)?;
    let keys = keys_node(g, enc.annotations, w.score.u)?;
    let mut s = enc.initial_state;
    let mut y_prev = BOS;
    let mut terms = Vec::with_capacity(ex.tgt.len() + 1);
    for &y in ex.tgt.iter().chain(std::iter::once(&EOS)) {
        let step = decode_step_node(g, w, kind, &keys, ex.mask.as_ref(), s, y_prev, noise)?;
        terms.push(g.softmax_cross_entropy(step.logits, y)?);
        s = step.state;
        y_prev = y;
    }
    let all = g.concat(&terms)?;
    let total = g.sum(all)?;
    g.scalar_mul(total, 1.0 / terms.len() as f64)
}

/// Teacher-forced mean negative log-likelihood per target token.
pub fn sentence_loss(params: &ModelParams, kind: AttentionKind, ex: &Example) -> Result<f64> {
    let mut g = Graph::new();
    let w = params.bind(&mut g);
    let loss = loss_node(&mut g, &w, kind, ex, &mut None)?;
    Ok(g.value(loss).item())
}

/// Loss and gradient for one example. Weights the loss never reaches (the
/// position predictor under syntax-directed attention) get zero gradient.
pub fn loss_and_grad(
    params: &ModelParams,
    kind: AttentionKind,
    ex: &Example,
    mut noise: Option<Noise>,
) -> Result<(f64, ModelParams)> {
    let mut g = Graph::new();
    let w = params.bind(&mut g);
    let loss = loss_node(&mut g, &w, kind, ex, &mut noise)?;
    let mut grads = g.backward(loss)?;
    let ids = w.values().into_iter().copied().collect::<Vec<_>>();
    let tensors = ids
        .into_iter()
        .zip(params.values())
        .map(|(id, p)| {
            grads
                .take(id)
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();
    Ok((g.value(loss).item(), params.with_values(tensors)?))
}

/// Teacher-forced argmax predictions for `tgt` followed by EOS.
pub fn teacher_forced_argmax(
    params: &ModelParams,
    kind: AttentionKind,
    ex: &Example,
) -> Result<Vec<usize>> {
    check_mask(ex.mask.as_ref(), ex.src.len())?;
    let enc = Encoded::new(params, &ex.src)?;
    let mut state = enc.initial_state.clone();
    let mut y_prev = BOS;
    let mut out = Vec::with_capacity(ex.tgt.len() + 1);
    for &y in ex.tgt.iter().chain(std::iter::once(&EOS)) {
        let step = decode_step(params, kind, &enc, ex.mask.as_ref(), &state, y_prev)?;
        out.push(argmax(&step.logits));
        state = step.state;
        y_prev = y;
    }
    Ok(out)
}

/// Index of the first maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Encoder output cached for step-by-step decoding.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded {
    pub annotations: Tensor,
    pub initial_state: Tensor,
    annotations_t: Tensor,
    projected: Tensor,
}

impl Encoded {
    pub fn new(params: &ModelParams, src: &[usize]) -> Result<Self> {
        let mut g = Graph::new();
        let w = params.bind(&mut g);
        let enc = encode_node(&mut g, &w, src, &mut None)?;
        let keys = keys_node(&mut g, enc.annotations, w.score.u)?;
        Ok(Encoded {
            annotations: g.value(enc.annotations).clone(),
            initial_state: g.value(enc.initial_state).clone(),
            annotations_t: g.value(keys.annotations_t).clone(),
            projected: g.value(keys.projected).clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.annotations.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Annotations `H` (`J × 2h`) for a source sentence.
pub fn encode(src: &[usize], params: &ModelParams) -> Result<Tensor> {
    Ok(Encoded::new(params, src)?.annotations)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub logits: Vec<f64>,
    pub state: Tensor,
    pub attention: AttentionOutput,
}

/// One inference step from decoder state `state` after emitting `y_prev`.
pub fn decode_step(
    params: &ModelParams,
    kind: AttentionKind,
    enc: &Encoded,
    mask: Option<&SdcMatrix>,
    state: &Tensor,
    y_prev: usize,
) -> Result<StepOutput> {
    let mut g = Graph::new();
    let w = params.bind(&mut g);
    let keys = Keys {
        annotations_t: g.constant(enc.annotations_t.clone()),
        projected: g.constant(enc.projected.clone()),
        len: enc.len(),
    };
    let s = g.constant(state.clone());
    let step = decode_step_node(&mut g, &w, kind, &keys, mask, s, y_prev, &mut None)?;
    let data = |id: NodeId| g.value(id).data().to_vec();
    let att = step.attention;
    Ok(StepOutput {
        logits: data(step.logits),
        state: g.value(step.state).clone(),
        attention: AttentionOutput {
            scores: data(att.scores),
            weights: data(att.weights),
            context: data(att.context),
            position: att.position.map(|p| g.value(p).item()),
            syntax: att.syntax.map(|(a, c)| (data(a), data(c))),
        },
    })
}

/// Log-softmax, stabilised by the maximum.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z = logits.iter().map(|x| (x - m).exp()).sum::<f64>().ln() + m;
    logits.iter().map(|x| x - z).collect()
}
