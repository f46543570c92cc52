//! Alignment weights for the four decoder attention variants.
//!
//! Every computation is expressed once, as graph operations (the `*_node`
//! functions used by the model during training and decoding). The plain
//! functions over slices wrap those in a throwaway graph.

use serde::{Deserialize, Serialize};

use crate::deptree::SdcMatrix;
use crate::diffcore::{Graph, NodeId, Tensor};
use crate::error::{Error, Result};

/// Which context vector(s) the decoder builds at each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttentionKind {
    /// Softmax over every source word.
    Global,
    /// Global weights times a Gaussian window of half-width `D` around the
    /// predicted position.
    Local(u32),
    /// Scores damped by tree distance from the aligned word, normalised over
    /// words within `n` hops.
    SyntaxDirected(u32),
    /// Global context plus a syntax-directed context from the same scores.
    DoubleContext(u32),
}

impl AttentionKind {
    pub fn validate(self) -> Result<Self> {
        match self {
            AttentionKind::Local(0) => {
                Err(Error::Config("local window D must be at least 1".into()))
            }
            AttentionKind::SyntaxDirected(0) | AttentionKind::DoubleContext(0) => Err(
                Error::Config("syntax constraint n must be at least 1".into()),
            ),
            k => Ok(k),
        }
    }

    pub fn needs_tree(self) -> bool {
        matches!(
            self,
            AttentionKind::SyntaxDirected(_) | AttentionKind::DoubleContext(_)
        )
    }

    pub fn needs_position(self) -> bool {
        !matches!(self, AttentionKind::Global)
    }

    pub fn name(self) -> &'static str {
        match self {
            AttentionKind::Global => "global",
            AttentionKind::Local(_) => "local",
            AttentionKind::SyntaxDirected(_) => "syntax",
            AttentionKind::DoubleContext(_) => "double",
        }
    }
}

/// Additive scorer `e_j = vᵀ tanh(W s + U h_j + b)`.
///
/// `u` is stored as `annotation_width × attention_width` so that all keys
/// project with a single `H · U`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreWeights<T> {
    pub w: T,
    pub u: T,
    pub b: T,
    pub v: T,
}

/// Aligned-position predictor `p = J · sigmoid(vᵀ tanh(W h))`.
#[derive(Debug, Clone, PartialEq)]
pub struct PositionWeights<T> {
    pub w: T,
    pub v: T,
}

/// Everything attention produced for one decoder step.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub scores: Vec<f64>,
    pub weights: Vec<f64>,
    pub context: Vec<f64>,
    pub position: Option<f64>,
    /// Syntax-directed weights and context, for [`AttentionKind::DoubleContext`].
    pub syntax: Option<(Vec<f64>, Vec<f64>)>,
}

/// Graph handles for one attention step. `weights`/`context` are the
/// global ones for double context, whose syntax pair sits in `syntax`.
#[derive(Debug, Clone, Copy)]
pub struct AttentionNodes {
    pub scores: NodeId,
    pub weights: NodeId,
    pub context: NodeId,
    pub position: Option<NodeId>,
    pub syntax: Option<(NodeId, NodeId)>,
}

/// Per-sentence quantities reused at every decoder step.
#[derive(Debug, Clone, Copy)]
pub struct Keys {
    /// Annotations transposed, `d × J`.
    pub annotations_t: NodeId,
    /// `H · U`, `J × a`.
    pub projected: NodeId,
    pub len: usize,
}

pub fn keys_node(g: &mut Graph<'_>, annotations: NodeId, u: NodeId) -> Result<Keys> {
    let len = g.value(annotations).rows();
    let annotations_t = g.transpose(annotations)?;
    let projected = g.matmul(annotations, u)?;
    Ok(Keys {
        annotations_t,
        projected,
        len,
    })
}

pub fn score_node(
    g: &mut Graph<'_>,
    s_prev: NodeId,
    keys: &Keys,
    w: &ScoreWeights<NodeId>,
) -> Result<NodeId> {
    let ws = g.matmul(w.w, s_prev)?;
    let query = g.add(ws, w.b)?;
    let pre = g.add_row(keys.projected, query)?;
    let act = g.tanh(pre)?;
    g.matmul(act, w.v)
}

pub fn context_node(g: &mut Graph<'_>, alpha: NodeId, keys: &Keys) -> Result<NodeId> {
    g.matmul(keys.annotations_t, alpha)
}

pub fn aligned_position_node(
    g: &mut Graph<'_>,
    h_dec: NodeId,
    len: usize,
    w: &PositionWeights<NodeId>,
) -> Result<NodeId> {
    let proj = g.matmul(w.w, h_dec)?;
    let act = g.tanh(proj)?;
    let vt = g.transpose(w.v)?;
    let inner = g.matmul(vt, act)?;
    let sig = g.sigmoid(inner)?;
    g.scalar_mul(sig, len as f64)
}

/// Integer positions `j` with `p - D <= j <= p + D`, clipped to the sentence.
pub fn local_window(p: f64, window: u32, len: usize) -> std::ops::RangeInclusive<usize> {
    let d = f64::from(window);
    let lo = (p - d).ceil().max(0.0) as usize;
    let hi = (p + d).floor().min(len as f64 - 1.0).max(0.0) as usize;
    lo..=hi
}

pub fn local_weights_node(
    g: &mut Graph<'_>,
    alpha: NodeId,
    p: NodeId,
    window: u32,
) -> Result<NodeId> {
    let len = g.value(alpha).len();
    let sigma = f64::from(window) / 2.0;
    let pv = g.value(p).item();

    let positions = g.constant(Tensor::column(
        &(0..len).map(|j| j as f64).collect::<Vec<_>>(),
    ));
    let ones = g.constant(Tensor::filled(len, 1, 1.0));
    let centre = g.matmul(ones, p)?;
    let diff = g.sub(positions, centre)?;
    let sq = g.mul(diff, diff)?;
    let scaled = g.scalar_mul(sq, -1.0 / (2.0 * sigma * sigma))?;
    let factor = g.exp(scaled)?;
    let damped = g.mul(alpha, factor)?;

    let inside = local_window(pv, window, len);
    let outside: Vec<usize> = (0..len).filter(|j| !inside.contains(j)).collect();
    if outside.is_empty() {
        Ok(damped)
    } else {
        g.masked_fill(damped, &outside, 0.0)
    }
}

pub fn gaussian_factor(distance: f64, sigma: f64) -> f64 {
    (-(distance * distance) / (2.0 * sigma * sigma)).exp()
}

/// Row of the mask matrix for real-valued position `p`: nearest word,
/// halves rounded away from zero, clamped to the sentence.
pub fn mask_index(p: f64, len: usize) -> usize {
    (p.round().max(0.0) as usize).min(len.saturating_sub(1))
}

pub fn sdatt_scores_node(
    g: &mut Graph<'_>,
    e: NodeId,
    mask_row: &[u32],
    sigma: f64,
) -> Result<NodeId> {
    let len = g.value(e).len();
    if mask_row.len() != len {
        return Err(Error::dim(
            "sdatt_scores",
            format!("{len} scores, mask row of {}", mask_row.len()),
        ));
    }
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Contract(format!("sigma {sigma} must be positive")));
    }
    let factor: Vec<f64> = mask_row
        .iter()
        .map(|&d| gaussian_factor(f64::from(d), sigma))
        .collect();
    let factor = g.constant(Tensor::column(&factor));
    g.mul(e, factor)
}

pub fn sdatt_weights_node(
    g: &mut Graph<'_>,
    es: NodeId,
    mask_row: &[u32],
    n: u32,
) -> Result<NodeId> {
    let len = g.value(es).len();
    if mask_row.len() != len {
        return Err(Error::dim(
            "sdatt_weights",
            format!("{len} scores, mask row of {}", mask_row.len()),
        ));
    }
    let support: Vec<bool> = mask_row.iter().map(|&d| d <= n).collect();
    g.softmax_over(es, &support)
}

/// One attention step for `kind`. The query for scores and aligned position
/// is `s_prev`.
pub fn attend_node(
    g: &mut Graph<'_>,
    kind: AttentionKind,
    s_prev: NodeId,
    keys: &Keys,
    mask: Option<&SdcMatrix>,
    score_w: &ScoreWeights<NodeId>,
    position_w: Option<&PositionWeights<NodeId>>,
) -> Result<AttentionNodes> {
    let position_w = || {
        position_w.ok_or_else(|| {
            Error::Config(format!("{} attention needs position weights", kind.name()))
        })
    };
    let mask_for = || {
        let m = mask.ok_or_else(|| {
            Error::Config(format!("{} attention needs a dependency tree", kind.name()))
        })?;
        if m.len() != keys.len {
            return Err(Error::Data(format!(
                "mask for {} words, source has {}",
                m.len(),
                keys.len
            )));
        }
        Ok(m)
    };

    let e = score_node(g, s_prev, keys, score_w)?;
    match kind.validate()? {
        AttentionKind::Global => {
            let alpha = g.softmax(e)?;
            let c = context_node(g, alpha, keys)?;
            Ok(AttentionNodes {
                scores: e,
                weights: alpha,
                context: c,
                position: None,
                syntax: None,
            })
        }
        AttentionKind::Local(window) => {
            let pw = position_w()?;
            let p = aligned_position_node(g, s_prev, keys.len, pw)?;
            let alpha = g.softmax(e)?;
            let local = local_weights_node(g, alpha, p, window)?;
            let c = context_node(g, local, keys)?;
            Ok(AttentionNodes {
                scores: e,
                weights: local,
                context: c,
                position: Some(p),
                syntax: None,
            })
        }
        AttentionKind::SyntaxDirected(n) => {
            let m = mask_for()?;
            let pw = position_w()?;
            let p = aligned_position_node(g, s_prev, keys.len, pw)?;
            let (alpha, c) = syntax_context(g, e, p, m, n, keys)?;
            Ok(AttentionNodes {
                scores: e,
                weights: alpha,
                context: c,
                position: Some(p),
                syntax: None,
            })
        }
        AttentionKind::DoubleContext(n) => {
            let m = mask_for()?;
            let pw = position_w()?;
            let p = aligned_position_node(g, s_prev, keys.len, pw)?;
            let alpha = g.softmax(e)?;
            let c = context_node(g, alpha, keys)?;
            let syn = syntax_context(g, e, p, m, n, keys)?;
            Ok(AttentionNodes {
                scores: e,
                weights: alpha,
                context: c,
                position: Some(p),
                syntax: Some(syn),
            })
        }
    }
}

fn syntax_context(
    g: &mut Graph<'_>,
    e: NodeId,
    p: NodeId,
    mask: &SdcMatrix,
    n: u32,
    keys: &Keys,
) -> Result<(NodeId, NodeId)> {
    let row = mask.row(mask_index(g.value(p).item(), keys.len))?;
    let es = sdatt_scores_node(g, e, row, f64::from(n) / 2.0)?;
    let alpha = sdatt_weights_node(g, es, row, n)?;
    let c = context_node(g, alpha, keys)?;
    Ok((alpha, c))
}

// Slice-level wrappers.

fn vector(values: &[f64], op: &'static str) -> Result<Tensor> {
    if values.is_empty() {
        return Err(Error::dim(op, "empty vector"));
    }
    Ok(Tensor::column(values))
}

fn bind_score<'a>(g: &mut Graph<'a>, w: &'a ScoreWeights<Tensor>) -> ScoreWeights<NodeId> {
    ScoreWeights {
        w: g.param_ref(&w.w),
        u: g.param_ref(&w.u),
        b: g.param_ref(&w.b),
        v: g.param_ref(&w.v),
    }
}

fn bind_position<'a>(g: &mut Graph<'a>, w: &'a PositionWeights<Tensor>) -> PositionWeights<NodeId> {
    PositionWeights {
        w: g.param_ref(&w.w),
        v: g.param_ref(&w.v),
    }
}

/// Alignment scores of every annotation row against `s_prev`.
pub fn score(s_prev: &[f64], annotations: &Tensor, w: &ScoreWeights<Tensor>) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let s = g.constant(vector(s_prev, "score")?);
    let h = g.constant(annotations.clone());
    let sw = bind_score(&mut g, w);
    let keys = keys_node(&mut g, h, sw.u)?;
    let e = score_node(&mut g, s, &keys, &sw)?;
    Ok(g.value(e).data().to_vec())
}

pub fn global_weights(e: &[f64]) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = g.constant(vector(e, "global_weights")?);
    let a = g.softmax(x)?;
    Ok(g.value(a).data().to_vec())
}

/// `Σ_j α_j h_j` over the rows of `annotations`.
pub fn context(alpha: &[f64], annotations: &Tensor) -> Result<Vec<f64>> {
    if alpha.len() != annotations.rows() {
        return Err(Error::dim(
            "context",
            format!(
                "{} weights for {} annotations",
                alpha.len(),
                annotations.rows()
            ),
        ));
    }
    let mut g = Graph::new();
    let a = g.constant(vector(alpha, "context")?);
    let h = g.constant(annotations.clone());
    let ht = g.transpose(h)?;
    let c = g.matmul(ht, a)?;
    Ok(g.value(c).data().to_vec())
}

pub fn aligned_position(h_dec: &[f64], len: usize, w: &PositionWeights<Tensor>) -> Result<f64> {
    if len == 0 {
        return Err(Error::Contract(
            "aligned position needs a non-empty source".into(),
        ));
    }
    let mut g = Graph::new();
    let h = g.constant(vector(h_dec, "aligned_position")?);
    let pw = bind_position(&mut g, w);
    let p = aligned_position_node(&mut g, h, len, &pw)?;
    Ok(g.value(p).item())
}

pub fn local_weights(alpha: &[f64], p: f64, window: u32) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let a = g.constant(vector(alpha, "local_weights")?);
    let pn = g.constant(Tensor::scalar(p));
    let l = local_weights_node(&mut g, a, pn, window)?;
    Ok(g.value(l).data().to_vec())
}

pub fn sdatt_scores(e: &[f64], mask_row: &[u32], sigma: f64) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = g.constant(vector(e, "sdatt_scores")?);
    let es = sdatt_scores_node(&mut g, x, mask_row, sigma)?;
    Ok(g.value(es).data().to_vec())
}

pub fn sdatt_weights(es: &[f64], mask_row: &[u32], n: u32) -> Result<Vec<f64>> {
    let mut g = Graph::new();
    let x = g.constant(vector(es, "sdatt_weights")?);
    let a = sdatt_weights_node(&mut g, x, mask_row, n)?;
    Ok(g.value(a).data().to_vec())
}

/// Runs one attention step outside of any model. `s_prev` is both the
/// scoring query and the position predictor's input.
pub fn attend(
    kind: AttentionKind,
    s_prev: &[f64],
    annotations: &Tensor,
    mask: Option<&SdcMatrix>,
    score_w: &ScoreWeights<Tensor>,
    position_w: Option<&PositionWeights<Tensor>>,
) -> Result<AttentionOutput> {
    let mut g = Graph::new();
    let s = g.constant(vector(s_prev, "attend")?);
    let h = g.constant(annotations.clone());
    let sw = bind_score(&mut g, score_w);
    let pw = position_w.map(|w| bind_position(&mut g, w));
    let keys = keys_node(&mut g, h, sw.u)?;
    let out = attend_node(&mut g, kind, s, &keys, mask, &sw, pw.as_ref())?;
    let data = |id: NodeId| g.value(id).data().to_vec();
    Ok(AttentionOutput {
        scores: data(out.scores),
        weights: data(out.weights),
        context: data(out.context),
        position: out.position.map(|p| g.value(p).item()),
        syntax: out.syntax.map(|(a, c)| (data(a), data(c))),
    })
}
