//! Shuffled minibatch ADADELTA training with best-dev model selection.

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::data::Example;
use super::network::{loss_and_grad, teacher_forced_argmax, Noise};
use super::params::ModelParams;
use super::vocab::EOS;
use crate::attention::AttentionKind;
use crate::diffcore::{stream_rng, AdadeltaState, Stream};
use crate::error::{Error, Result};

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    /// Teacher-forced token accuracy on the dev set, when there is one.
    pub dev_metric: Option<f64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters after the epoch with the best dev metric (the last epoch
    /// without a dev set, the initial values after zero epochs).
    pub params: ModelParams,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Stop after the first epoch whose dev metric exceeds this value.
    pub stop_above: Option<f64>,
}

/// Fraction of gold tokens (including the final EOS) predicted by argmax
/// under teacher forcing.
pub fn token_accuracy(
    params: &ModelParams,
    kind: AttentionKind,
    examples: &[Example],
) -> Result<f64> {
    let counts = examples
        .par_iter()
        .map(|ex| {
            let pred = teacher_forced_argmax(params, kind, ex)?;
            let gold = ex.tgt.iter().copied().chain(std::iter::once(EOS));
            let hits = pred.iter().zip(gold).filter(|(p, g)| **p == *g).count();
            Ok((hits, pred.len()))
        })
        .collect::<Result<Vec<_>>>()?;
    let (hits, total) = counts.iter().fold((0, 0), |(h, t), &(a, b)| (h + a, t + b));
    if total == 0 {
        return Err(Error::EmptyCorpus);
    }
    Ok(hits as f64 / total as f64)
}

fn check_examples(kind: AttentionKind, examples: &[Example], what: &str) -> Result<()> {
    if kind.needs_tree() {
        if let Some(i) = examples.iter().position(|e| e.mask.is_none()) {
            return Err(Error::Config(format!(
                "{} attention needs a dependency tree for every sentence; {what} example {} has none",
                kind.name(),
                i + 1
            )));
        }
    }
    Ok(())
}

fn locate(err: Error, epoch: usize, batch: usize, example: usize) -> Error {
    match err {
        Error::Numeric { op } => Error::Numeric {
            op: format!("{op} (epoch {epoch}, batch {batch}, example {example})"),
        },
        other => other,
    }
}

/// Runs `cfg.epochs` epochs starting from `init`. Each sentence's gradient is
/// computed independently (in parallel) and the batch gradient is their
/// mean, summed in batch order so results do not depend on thread timing.
pub fn train(
    cfg: &ModelConfig,
    init: ModelParams,
    train: &[Example],
    dev: &[Example],
    options: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let kind = cfg.kind();
    init.check_for(cfg)?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    check_examples(kind, train, "training")?;
    check_examples(kind, dev, "dev")?;

    let mut params = init;
    let mut opt = AdadeltaState::new(
        params.values().iter().map(|t| t.len()),
        cfg.rho,
        cfg.epsilon,
    );
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut log = Vec::new();
    let start = Instant::now();

    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(cfg.seed, Stream::Shuffle, epoch as u64, 0));
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let results = batch
                .par_iter()
                .map(|&i| {
                    let noise = (cfg.dropout > 0.0).then(|| Noise {
                        rate: cfg.dropout,
                        rng: stream_rng(cfg.seed, Stream::Dropout, epoch as u64, i as u64),
                    });
                    loss_and_grad(&params, kind, &train[i], noise)
                        .map_err(|e| locate(e, epoch, b + 1, i + 1))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut grad = params.zeros_like();
            for (k, (loss, g)) in results.iter().enumerate() {
                if !loss.is_finite() || !g.all_finite() {
                    return Err(Error::Numeric {
                        op: format!(
                            "loss gradient (epoch {epoch}, batch {}, example {})",
                            b + 1,
                            batch[k] + 1
                        ),
                    });
                }
                loss_sum += loss;
                grad.add_assign(g)?;
            }
            let scale = 1.0 / batch.len() as f64;
            for t in grad.values_mut() {
                for v in t.data_mut() {
                    *v *= scale;
                }
            }
            opt.step(&mut params.values_mut(), &grad.values())?;
            if !params.all_finite() {
                return Err(Error::Numeric {
                    op: format!("parameter update (epoch {epoch}, batch {})", b + 1),
                });
            }
        }
        let dev_metric = if dev.is_empty() {
            None
        } else {
            Some(token_accuracy(&params, kind, dev)?)
        };
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            dev_metric,
            wall_time: start.elapsed().as_secs_f64(),
        };
        on_epoch(&record);
        log.push(record);
        let metric = dev_metric.unwrap_or(f64::NEG_INFINITY);
        let improved = match &best {
            None => true,
            Some((m, _, _)) => dev_metric.is_none() || metric > *m,
        };
        if improved {
            best = Some((metric, epoch, params.clone()));
        }
        if matches!((options.stop_above, dev_metric), (Some(t), Some(m)) if m > t) {
            break;
        }
    }

    let (params, best_epoch) = match best {
        Some((_, e, p)) => (p, e),
        None => (params, 0),
    };
    Ok(TrainOutcome {
        params,
        best_epoch,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::config::AttentionName;

    fn cfg() -> ModelConfig {
        ModelConfig {
            src_vocab_size: 8,
            tgt_vocab_size: 8,
            embedding_dim: 4,
            hidden_dim: 5,
            batch_size: 2,
            epochs: 2,
            ..ModelConfig::default()
        }
    }

    fn data() -> Vec<Example> {
        (0..5)
            .map(|i| Example {
                src: vec![4 + i % 3, 5],
                tgt: vec![5, 4 + i % 3],
                mask: None,
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_init() {
        let c = ModelConfig { epochs: 0, ..cfg() };
        let init = ModelParams::init(&c).unwrap();
        let out = train(
            &c,
            init.clone(),
            &data(),
            &data(),
            &TrainOptions::default(),
            |_| {},
        )
        .unwrap();
        assert_eq!(out.params, init);
        assert!(out.log.is_empty());
    }

    #[test]
    fn same_seed_same_result() {
        let c = cfg();
        let run = || {
            train(
                &c,
                ModelParams::init(&c).unwrap(),
                &data(),
                &data(),
                &TrainOptions::default(),
                |_| {},
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.params, b.params);
        let losses = |o: &TrainOutcome| {
            o.log
                .iter()
                .map(|r| r.train_loss.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(losses(&a), losses(&b));
        assert_ne!(a.params, ModelParams::init(&c).unwrap());
    }

    #[test]
    fn syntax_kind_requires_trees() {
        let c = ModelConfig {
            attention: AttentionName::Syntax,
            ..cfg()
        };
        let err = train(
            &c,
            ModelParams::init(&c).unwrap(),
            &data(),
            &[],
            &TrainOptions::default(),
            |_| {},
        );
        assert!(matches!(err, Err(Error::Config(_))));
        assert!(matches!(
            train(
                &cfg(),
                ModelParams::init(&cfg()).unwrap(),
                &[],
                &[],
                &TrainOptions::default(),
                |_| {}
            ),
            Err(Error::EmptyCorpus)
        ));
    }
}
