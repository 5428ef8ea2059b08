//! Central-difference gradient checking.
//!
//! The oracle only evaluates forward passes, so it stays independent of the
//! backward rules it verifies. Run it on `f64` tensors; the default step of
//! 1e-5 is not resolvable in `f32`.

use crate::num::Scalar;
use crate::tensor::{Tensor, TensorError};

/// Worst observed deviation between analytic and numeric gradients.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

/// Compares backward-pass gradients of `loss_fn` against central differences
/// with step `h`, for every element of every named parameter. `loss_fn` must
/// rebuild its graph from the tensors it is handed and return a scalar.
pub fn central_diff_check<S, F>(
    params: &[(String, Tensor<S>)],
    loss_fn: F,
    h: f64,
) -> Result<GradCheckReport, TensorError>
where
    S: Scalar,
    F: Fn(&[Tensor<S>]) -> Result<Tensor<S>, TensorError>,
{
    central_diff_check_sampled(params, loss_fn, h, usize::MAX)
}

/// Like [`central_diff_check`] but probing at most `per_param` evenly spaced
/// elements of each parameter, which keeps whole-model checks tractable.
pub fn central_diff_check_sampled<S, F>(
    params: &[(String, Tensor<S>)],
    loss_fn: F,
    h: f64,
    per_param: usize,
) -> Result<GradCheckReport, TensorError>
where
    S: Scalar,
    F: Fn(&[Tensor<S>]) -> Result<Tensor<S>, TensorError>,
{
    let tensors: Vec<Tensor<S>> = params.iter().map(|(_, t)| t.clone()).collect();
    for t in &tensors {
        t.zero_grad();
    }
    let loss = loss_fn(&tensors)?;
    if loss.numel() != 1 {
        return Err(TensorError::NonScalarBackward(loss.shape().to_vec()));
    }
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = tensors
        .iter()
        .map(|t| {
            t.grad()
                .map(|g| g.iter().map(|v| v.into_f64()).collect())
                .unwrap_or_else(|| vec![0.0; t.numel()])
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };

    for (pi, (name, tensor)) in params.iter().enumerate() {
        let n = tensor.numel();
        let probes: Vec<usize> = if n <= per_param {
            (0..n).collect()
        } else {
            (0..per_param).map(|k| k * n / per_param).collect()
        };
        for i in probes {
            let eval = |delta: f64| -> Result<f64, TensorError> {
                let mut data = tensor.data().to_vec();
                data[i] += S::of_f64(delta);
                let mut probe = tensors.clone();
                probe[pi] = Tensor::param(data, tensor.shape());
                Ok(loss_fn(&probe)?.item().into_f64())
            };
            let plus = eval(h)?;
            let minus = eval(-h)?;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
            if rel > report.max_rel_err {
                report = GradCheckReport {
                    max_rel_err: rel,
                    worst_param: name.clone(),
                    worst_index: i,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(report)
}
