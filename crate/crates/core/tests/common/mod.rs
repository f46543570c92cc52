//! Plain-`f64` reference implementation of the model's forward pass, written
//! directly from the model definition without the graph engine. Integration tests
//! compare the library against it.

#![allow(dead_code)]

use sdnmt::attention::AttentionKind;
use sdnmt::deptree::{DepTree, SdcMatrix};
use sdnmt::diffcore::Tensor;
use sdnmt::model::{Example, GruWeights, ModelParams};

pub const EOS: usize = 2;
pub const BOS: usize = 1;

pub fn mv(w: &Tensor, x: &[f64]) -> Vec<f64> {
    assert_eq!(w.cols(), x.len());
    (0..w.rows())
        .map(|r| (0..w.cols()).map(|c| w.get(r, c) * x[c]).sum())
        .collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn col(t: &Tensor) -> Vec<f64> {
    t.data().to_vec()
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().map(|v| v / z).collect()
}

pub fn gru(w: &GruWeights<Tensor>, x: &[f64], h: &[f64]) -> Vec<f64> {
    let gate = |wx: &Tensor, uh: &Tensor, b: &Tensor, hh: &[f64]| {
        add(&add(&mv(wx, x), &mv(uh, hh)), &col(b))
    };
    let r: Vec<f64> = gate(&w.w_r, &w.u_r, &w.b_r, h)
        .into_iter()
        .map(sigmoid)
        .collect();
    let z: Vec<f64> = gate(&w.w_z, &w.u_z, &w.b_z, h)
        .into_iter()
        .map(sigmoid)
        .collect();
    let rh: Vec<f64> = r.iter().zip(h).map(|(a, b)| a * b).collect();
    let n: Vec<f64> = gate(&w.w_n, &w.u_n, &w.b_n, &rh)
        .into_iter()
        .map(f64::tanh)
        .collect();
    (0..h.len())
        .map(|i| (1.0 - z[i]) * n[i] + z[i] * h[i])
        .collect()
}

/// Annotation rows `[f_j; b_j]` and the initial decoder state.
pub fn encode(p: &ModelParams, src: &[usize]) -> (Vec<Vec<f64>>, Vec<f64>) {
    let hid = p.enc_fwd.u_r.rows();
    let xs: Vec<Vec<f64>> = src.iter().map(|&i| p.src_embed.row(i).to_vec()).collect();
    let mut fwd = Vec::new();
    let mut h = vec![0.0; hid];
    for x in &xs {
        h = gru(&p.enc_fwd, x, &h);
        fwd.push(h.clone());
    }
    let mut bwd = vec![Vec::new(); xs.len()];
    h = vec![0.0; hid];
    for j in (0..xs.len()).rev() {
        h = gru(&p.enc_bwd, &xs[j], &h);
        bwd[j] = h.clone();
    }
    let rows = fwd
        .iter()
        .zip(&bwd)
        .map(|(f, b)| [f.clone(), b.clone()].concat())
        .collect();
    let s0 = add(&mv(&p.init_w, &bwd[0]), &col(&p.init_b))
        .into_iter()
        .map(f64::tanh)
        .collect();
    (rows, s0)
}

pub fn scores(p: &ModelParams, s: &[f64], hs: &[Vec<f64>]) -> Vec<f64> {
    let q = add(&mv(&p.score.w, s), &col(&p.score.b));
    let ut = p.score.u.transposed();
    hs.iter()
        .map(|h| {
            let k = mv(&ut, h);
            (0..q.len())
                .map(|a| p.score.v.get(a, 0) * (k[a] + q[a]).tanh())
                .sum()
        })
        .collect()
}

pub fn position(p: &ModelParams, s: &[f64], len: usize) -> f64 {
    let pw = p.position.as_ref().expect("position weights");
    let act: Vec<f64> = mv(&pw.w, s).into_iter().map(f64::tanh).collect();
    let inner: f64 = act.iter().zip(pw.v.data()).map(|(a, b)| a * b).sum();
    len as f64 * sigmoid(inner)
}

pub fn weighted(alpha: &[f64], hs: &[Vec<f64>]) -> Vec<f64> {
    let d = hs[0].len();
    (0..d)
        .map(|k| alpha.iter().zip(hs).map(|(a, h)| a * h[k]).sum())
        .collect()
}

pub fn local(alpha: &[f64], p: f64, d: u32) -> Vec<f64> {
    let d = f64::from(d);
    let sigma = d / 2.0;
    alpha
        .iter()
        .enumerate()
        .map(|(j, a)| {
            let x = j as f64;
            if x >= p - d && x <= p + d {
                a * (-(x - p).powi(2) / (2.0 * sigma * sigma)).exp()
            } else {
                0.0
            }
        })
        .collect()
}

pub fn nearest(p: f64, len: usize) -> usize {
    let r = if p.fract() == 0.5 {
        p.ceil()
    } else {
        p.round()
    };
    (r.max(0.0) as usize).min(len - 1)
}

pub fn syntax(e: &[f64], row: &[u32], n: u32) -> Vec<f64> {
    let sigma = f64::from(n) / 2.0;
    let es: Vec<f64> = e
        .iter()
        .zip(row)
        .map(|(v, &d)| v * (-(f64::from(d)).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let inside: Vec<usize> = (0..e.len()).filter(|&j| row[j] <= n).collect();
    let sm = softmax(&inside.iter().map(|&j| es[j]).collect::<Vec<_>>());
    let mut out = vec![0.0; e.len()];
    for (k, &j) in inside.iter().enumerate() {
        out[j] = sm[k];
    }
    out
}

/// Logits and next state of one decoder step.
pub fn step(
    p: &ModelParams,
    kind: AttentionKind,
    hs: &[Vec<f64>],
    mask: Option<&SdcMatrix>,
    s: &[f64],
    y_prev: usize,
) -> (Vec<f64>, Vec<f64>) {
    let ey = p.tgt_embed.row(y_prev).to_vec();
    let e = scores(p, s, hs);
    let len = hs.len();
    let row = |pos: f64| -> Vec<u32> { mask.unwrap().row(nearest(pos, len)).unwrap().to_vec() };
    let (c_gru, terms): (Vec<f64>, Vec<(&Tensor, Vec<f64>)>) = match kind {
        AttentionKind::Global => {
            let c = weighted(&softmax(&e), hs);
            (c.clone(), vec![(p.l_cg.as_ref().unwrap(), c)])
        }
        AttentionKind::Local(d) => {
            let c = weighted(&local(&softmax(&e), position(p, s, len), d), hs);
            (c.clone(), vec![(p.l_cl.as_ref().unwrap(), c)])
        }
        AttentionKind::SyntaxDirected(n) => {
            let c = weighted(&syntax(&e, &row(position(p, s, len)), n), hs);
            (c.clone(), vec![(p.l_cs.as_ref().unwrap(), c)])
        }
        AttentionKind::DoubleContext(n) => {
            let cg = weighted(&softmax(&e), hs);
            let cs = weighted(&syntax(&e, &row(position(p, s, len)), n), hs);
            (
                cg.clone(),
                vec![
                    (p.l_cg.as_ref().unwrap(), cg),
                    (p.l_cs.as_ref().unwrap(), cs),
                ],
            )
        }
    };
    let s_new = gru(&p.dec, &[ey.clone(), c_gru].concat(), s);
    let mut pre = add(&mv(&p.l_w, &ey), &mv(&p.l_d, &s_new));
    for (m, c) in terms {
        pre = add(&pre, &mv(m, &c));
    }
    let act: Vec<f64> = pre.into_iter().map(f64::tanh).collect();
    (mv(&p.l_o, &act), s_new)
}

pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    softmax(x).into_iter().map(f64::ln).collect()
}

/// Teacher-forced mean NLL of `tgt` + EOS.
pub fn loss(p: &ModelParams, kind: AttentionKind, ex: &Example) -> f64 {
    let (hs, mut s) = encode(p, &ex.src);
    let mut prev = BOS;
    let mut total = 0.0;
    let gold: Vec<usize> = ex.tgt.iter().copied().chain([EOS]).collect();
    for &y in &gold {
        let (logits, s2) = step(p, kind, &hs, ex.mask.as_ref(), &s, prev);
        total -= log_softmax(&logits)[y];
        s = s2;
        prev = y;
    }
    total / gold.len() as f64
}

/// All-pairs path lengths by Floyd-Warshall over the undirected head links.
pub fn floyd_warshall(heads: &[usize]) -> Vec<Vec<u32>> {
    let n = heads.len();
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
        if heads[i] > 0 {
            let h = heads[i] - 1;
            d[i][h] = 1;
            d[h][i] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

/// Random rooted tree as 1-based heads (0 = root): node k attaches to a
/// uniformly chosen earlier node of a random order.
pub fn random_heads<R: rand::Rng>(len: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    let mut heads = vec![0; len];
    for k in 1..len {
        heads[order[k]] = order[rng.gen_range(0..k)] + 1;
    }
    heads
}

pub fn random_tree<R: rand::Rng>(len: usize, rng: &mut R) -> DepTree {
    DepTree::from_heads(random_heads(len, rng)).unwrap()
}

/// Central differences of `f` with respect to every coordinate of every
/// weight, compared with `analytic` (same layout).
pub fn max_rel_error(
    params: &ModelParams,
    analytic: &ModelParams,
    eps: f64,
    f: impl Fn(&ModelParams) -> f64,
) -> (f64, String) {
    let mut worst = (0.0, String::new());
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<Tensor> = analytic.values().into_iter().cloned().collect();
    for (w, name) in names.iter().enumerate() {
        let len = params.values()[w].len();
        for k in 0..len {
            let mut plus = params.clone();
            plus.values_mut()[w].data_mut()[k] += eps;
            let mut minus = params.clone();
            minus.values_mut()[w].data_mut()[k] -= eps;
            let numeric = (f(&plus) - f(&minus)) / (2.0 * eps);
            let a = grads[w].data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst.0 {
                worst = (
                    rel,
                    format!("{name}[{k}]: analytic {a:e}, numeric {numeric:e}"),
                );
            }
        }
    }
    worst
}
