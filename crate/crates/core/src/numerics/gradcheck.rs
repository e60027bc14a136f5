use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Central-difference gradient of `f` at `params`, one coordinate at a time.
pub fn finite_difference_gradient<F>(mut f: F, params: &[Tensor], epsilon: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> f64,
{
    if !(epsilon > 0.0) {
        return Err(Error::invalid(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut work = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..work.len() {
        let mut g = Tensor::zeros(work[i].shape());
        for k in 0..work[i].len() {
            let orig = work[i].data()[k];
            work[i].data_mut()[k] = orig + epsilon;
            let plus = f(&work);
            work[i].data_mut()[k] = orig - epsilon;
            let minus = f(&work);
            work[i].data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite objective perturbing parameter {i}, coordinate {k}"
                )));
            }
            g.data_mut()[k] = (plus - minus) / (2.0 * epsilon);
        }
        out.push(g);
    }
    Ok(out)
}

/// `|a - b| / max(|a|, |b|, 1)`: relative for large gradients, absolute
/// below unit scale where central differences bottom out.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Largest [`relative_error`] over matching tensors.
pub fn max_relative_error(a: &[Tensor], b: &[Tensor]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.data().iter().zip(y.data()).map(|(p, q)| relative_error(*p, *q)))
        .fold(0.0, f64::max)
}
