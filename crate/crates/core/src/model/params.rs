//! Trainable weights, generic over what is stored per weight.
//!
//! `ModelWeights<Tensor>` holds values (and gradients), `ModelWeights<NodeId>`
//! the same weights bound into a computation graph, and
//! `ModelWeights<[usize; 2]>` the expected shapes.

use rand::Rng;

use super::config::ModelConfig;
use crate::attention::{AttentionKind, PositionWeights, ScoreWeights};
use crate::diffcore::{stream_rng, Graph, NodeId, Stream, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GruWeights<T> {
    pub w_r: T,
    pub w_z: T,
    pub w_n: T,
    pub u_r: T,
    pub u_z: T,
    pub u_n: T,
    pub b_r: T,
    pub b_z: T,
    pub b_n: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T> {
    pub src_embed: T,
    pub tgt_embed: T,
    pub enc_fwd: GruWeights<T>,
    pub enc_bwd: GruWeights<T>,
    /// Maps the backward encoder's first state to the decoder's initial state.
    pub init_w: T,
    pub init_b: T,
    pub dec: GruWeights<T>,
    pub score: ScoreWeights<T>,
    pub position: Option<PositionWeights<T>>,
    /// Output projection onto the target vocabulary.
    pub l_o: T,
    pub l_w: T,
    pub l_d: T,
    pub l_cg: Option<T>,
    pub l_cl: Option<T>,
    pub l_cs: Option<T>,
}

pub type ModelParams = ModelWeights<Tensor>;

type MapFn<'f, T, U> = dyn FnMut(&str, &T) -> Result<U> + 'f;

impl<T> GruWeights<T> {
    fn try_map<U>(&self, prefix: &str, f: &mut MapFn<'_, T, U>) -> Result<GruWeights<U>> {
        let mut m = |name: &str, t: &T| f(&format!("{prefix}.{name}"), t);
        Ok(GruWeights {
            w_r: m("w_r", &self.w_r)?,
            w_z: m("w_z", &self.w_z)?,
            w_n: m("w_n", &self.w_n)?,
            u_r: m("u_r", &self.u_r)?,
            u_z: m("u_z", &self.u_z)?,
            u_n: m("u_n", &self.u_n)?,
            b_r: m("b_r", &self.b_r)?,
            b_z: m("b_z", &self.b_z)?,
            b_n: m("b_n", &self.b_n)?,
        })
    }

    fn each_mut(&mut self) -> [&mut T; 9] {
        [
            &mut self.w_r,
            &mut self.w_z,
            &mut self.w_n,
            &mut self.u_r,
            &mut self.u_z,
            &mut self.u_n,
            &mut self.b_r,
            &mut self.b_z,
            &mut self.b_n,
        ]
    }
}

fn gru_shapes(input: usize, hidden: usize) -> GruWeights<[usize; 2]> {
    GruWeights {
        w_r: [hidden, input],
        w_z: [hidden, input],
        w_n: [hidden, input],
        u_r: [hidden, hidden],
        u_z: [hidden, hidden],
        u_n: [hidden, hidden],
        b_r: [hidden, 1],
        b_z: [hidden, 1],
        b_n: [hidden, 1],
    }
}

impl<T> ModelWeights<T> {
    /// Maps every present weight in a fixed order, passing its dotted name.
    pub fn try_map<U>(&self, f: &mut MapFn<'_, T, U>) -> Result<ModelWeights<U>> {
        Ok(ModelWeights {
            src_embed: f("src_embed", &self.src_embed)?,
            tgt_embed: f("tgt_embed", &self.tgt_embed)?,
            enc_fwd: self.enc_fwd.try_map("enc_fwd", f)?,
            enc_bwd: self.enc_bwd.try_map("enc_bwd", f)?,
            init_w: f("init_w", &self.init_w)?,
            init_b: f("init_b", &self.init_b)?,
            dec: self.dec.try_map("dec", f)?,
            score: ScoreWeights {
                w: f("score.w", &self.score.w)?,
                u: f("score.u", &self.score.u)?,
                b: f("score.b", &self.score.b)?,
                v: f("score.v", &self.score.v)?,
            },
            position: match &self.position {
                Some(p) => Some(PositionWeights {
                    w: f("position.w", &p.w)?,
                    v: f("position.v", &p.v)?,
                }),
                None => None,
            },
            l_o: f("pred.l_o", &self.l_o)?,
            l_w: f("pred.l_w", &self.l_w)?,
            l_d: f("pred.l_d", &self.l_d)?,
            l_cg: self.l_cg.as_ref().map(|t| f("pred.l_cg", t)).transpose()?,
            l_cl: self.l_cl.as_ref().map(|t| f("pred.l_cl", t)).transpose()?,
            l_cs: self.l_cs.as_ref().map(|t| f("pred.l_cs", t)).transpose()?,
        })
    }

    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> ModelWeights<U> {
        self.try_map(&mut |n, t| Ok(f(n, t)))
            .expect("infallible map")
    }

    /// Weights in the same order as [`ModelWeights::try_map`] visits them.
    pub fn named(&self) -> Vec<(String, &T)> {
        let mut names = Vec::new();
        let _ = self.try_map(&mut |n, _| {
            names.push(n.to_string());
            Ok(())
        });
        names.into_iter().zip(self.values()).collect()
    }

    pub fn values(&self) -> Vec<&T> {
        fn gru<T>(g: &GruWeights<T>) -> [&T; 9] {
            [
                &g.w_r, &g.w_z, &g.w_n, &g.u_r, &g.u_z, &g.u_n, &g.b_r, &g.b_z, &g.b_n,
            ]
        }
        let mut out: Vec<&T> = vec![&self.src_embed, &self.tgt_embed];
        out.extend(gru(&self.enc_fwd));
        out.extend(gru(&self.enc_bwd));
        out.push(&self.init_w);
        out.push(&self.init_b);
        out.extend(gru(&self.dec));
        out.extend([&self.score.w, &self.score.u, &self.score.b, &self.score.v]);
        if let Some(p) = &self.position {
            out.extend([&p.w, &p.v]);
        }
        out.extend([&self.l_o, &self.l_w, &self.l_d]);
        out.extend(self.l_cg.as_ref());
        out.extend(self.l_cl.as_ref());
        out.extend(self.l_cs.as_ref());
        out
    }

    pub fn values_mut(&mut self) -> Vec<&mut T> {
        let mut out: Vec<&mut T> = vec![&mut self.src_embed, &mut self.tgt_embed];
        out.extend(self.enc_fwd.each_mut());
        out.extend(self.enc_bwd.each_mut());
        out.push(&mut self.init_w);
        out.push(&mut self.init_b);
        out.extend(self.dec.each_mut());
        out.extend([
            &mut self.score.w,
            &mut self.score.u,
            &mut self.score.b,
            &mut self.score.v,
        ]);
        if let Some(p) = &mut self.position {
            out.extend([&mut p.w, &mut p.v]);
        }
        out.extend([&mut self.l_o, &mut self.l_w, &mut self.l_d]);
        out.extend(self.l_cg.as_mut());
        out.extend(self.l_cl.as_mut());
        out.extend(self.l_cs.as_mut());
        out
    }

    /// Rebuilds a structure with this one's layout from values listed in
    /// [`ModelWeights::named`] order.
    pub fn with_values<U>(&self, values: Vec<U>) -> Result<ModelWeights<U>> {
        let expected = self.named().len();
        if values.len() != expected {
            return Err(Error::dim(
                "weights",
                format!("{} values for {expected} weights", values.len()),
            ));
        }
        let mut it = values.into_iter();
        self.try_map(&mut |_, _| Ok(it.next().expect("length checked")))
    }
}

impl ModelWeights<[usize; 2]> {
    /// Shapes implied by `cfg`; optional weights follow its attention kind.
    pub fn shapes(cfg: &ModelConfig) -> Self {
        let (e, h) = (cfg.embedding_dim, cfg.hidden_dim);
        let d = cfg.annotation_dim();
        let a = h;
        let kind = cfg.kind();
        ModelWeights {
            src_embed: [cfg.src_vocab_size, e],
            tgt_embed: [cfg.tgt_vocab_size, e],
            enc_fwd: gru_shapes(e, h),
            enc_bwd: gru_shapes(e, h),
            init_w: [h, h],
            init_b: [h, 1],
            dec: gru_shapes(e + d, h),
            score: ScoreWeights {
                w: [a, h],
                u: [d, a],
                b: [a, 1],
                v: [a, 1],
            },
            position: kind.needs_position().then_some(PositionWeights {
                w: [a, h],
                v: [a, 1],
            }),
            l_o: [cfg.tgt_vocab_size, h],
            l_w: [h, e],
            l_d: [h, h],
            l_cg: matches!(
                kind,
                AttentionKind::Global | AttentionKind::DoubleContext(_)
            )
            .then_some([h, d]),
            l_cl: matches!(kind, AttentionKind::Local(_)).then_some([h, d]),
            l_cs: matches!(
                kind,
                AttentionKind::SyntaxDirected(_) | AttentionKind::DoubleContext(_)
            )
            .then_some([h, d]),
        }
    }
}

impl ModelParams {
    /// Uniform draws in `[-init_scale, init_scale]` from the run seed.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(cfg.seed, Stream::Init, 0, 0);
        let scale = cfg.init_scale;
        Ok(ModelWeights::shapes(cfg).map(|_, &[r, c]| {
            let data = (0..r * c)
                .map(|_| {
                    if scale > 0.0 {
                        rng.gen_range(-scale..=scale)
                    } else {
                        0.0
                    }
                })
                .collect();
            Tensor::new(r, c, data).expect("positive shape")
        }))
    }

    pub fn zeros(cfg: &ModelConfig) -> Self {
        ModelWeights::shapes(cfg).map(|_, &[r, c]| Tensor::zeros(r, c))
    }

    pub fn zeros_like(&self) -> Self {
        self.map(|_, t| Tensor::zeros(t.rows(), t.cols()))
    }

    pub fn num_values(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) -> Result<()> {
        let others = other.named();
        let mine = self.values_mut();
        if mine.len() != others.len() {
            return Err(Error::dim("add_assign", "weight sets differ"));
        }
        for (m, (_, o)) in mine.into_iter().zip(others) {
            if m.shape() != o.shape() {
                return Err(Error::dim(
                    "add_assign",
                    format!("{:?} vs {:?}", m.shape(), o.shape()),
                ));
            }
            m.add_assign(o);
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.is_finite())
    }

    /// The weights `cfg` uses, taken by name from `self`. Errors when one is
    /// missing or misshaped; weights `cfg` does not use are dropped.
    pub fn for_config(&self, cfg: &ModelConfig) -> Result<ModelParams> {
        let have: std::collections::HashMap<String, &Tensor> = self.named().into_iter().collect();
        ModelWeights::shapes(cfg).try_map(&mut |name, shape| match have.get(name) {
            None => Err(Error::Config(format!(
                "{} attention needs weight {name}, which the parameters lack",
                cfg.kind().name()
            ))),
            Some(t) if t.shape() != *shape => Err(Error::Config(format!(
                "weight {name} has shape {:?}, expected {shape:?}",
                t.shape()
            ))),
            Some(t) => Ok((*t).clone()),
        })
    }

    /// Errors unless every weight `cfg` uses is present with the right shape.
    pub fn check_for(&self, cfg: &ModelConfig) -> Result<()> {
        self.for_config(cfg).map(|_| ())
    }

    /// Registers every weight as a borrowed leaf of `g`.
    pub fn bind<'a>(&'a self, g: &mut Graph<'a>) -> ModelWeights<NodeId> {
        let ids: Vec<NodeId> = self.values().into_iter().map(|t| g.param_ref(t)).collect();
        self.with_values(ids).expect("same layout")
    }
}
