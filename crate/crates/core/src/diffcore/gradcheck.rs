use super::graph::{Graph, NodeId};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central differences of an O(1) loss at ε = 1e-5 carry roundoff near
/// 1e-11, so gradients below this size are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

/// Worst disagreement found by [`grad_check_detailed`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares reverse-mode gradients against central differences.
///
/// `builder` must produce the same scalar loss for the same inputs on every
/// call (seed any dropout inside it). Returns the largest
/// `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)` over every
/// coordinate of every input.
pub fn grad_check<F>(builder: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    grad_check_detailed(builder, inputs, eps).map(|r| r.max_rel_error)
}

pub fn grad_check_detailed<F>(builder: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>, &[NodeId]) -> Result<NodeId>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Contract(format!(
            "finite-difference step {eps} must be positive"
        )));
    }
    let mut g = Graph::new();
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let loss = builder(&mut g, &ids)?;
    let grads = g.backward(loss)?;

    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.param(t.clone())).collect();
        let loss = builder(&mut g, &ids)?;
        let v = g.value(loss).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric {
                op: "grad_check".into(),
            })
        }
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        input: 0,
        coord: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (i, id) in ids.iter().enumerate() {
        let zeros = Tensor::zeros(inputs[i].rows(), inputs[i].cols());
        let analytic = grads.get(*id).unwrap_or(&zeros);
        for k in 0..inputs[i].len() {
            let orig = inputs[i].data()[k];
            work[i].data_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work[i].data_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work[i].data_mut()[k] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.data()[k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if !rel.is_finite() {
                return Err(Error::Numeric {
                    op: "grad_check".into(),
                });
            }
            if rel > report.max_rel_error {
                report = GradCheckReport {
                    max_rel_error: rel,
                    input: i,
                    coord: k,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
