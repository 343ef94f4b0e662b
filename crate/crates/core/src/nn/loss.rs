use ndarray::{Array2, Zip};
use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Mse,
    Mae,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mse" => Ok(LossKind::Mse),
            "mae" => Ok(LossKind::Mae),
            other => Err(Error::InvalidInput(format!("unknown loss '{other}'"))),
        }
    }
}

/// Batch loss normalized by `batch * features`, with its gradient w.r.t. `pred`.
/// The MAE subgradient at zero residual is zero.
pub fn loss<T: Scalar>(kind: LossKind, pred: &Array2<T>, target: &Array2<T>) -> Result<(f64, Array2<T>)> {
    if pred.dim() != target.dim() {
        return Err(Error::shape(format!("{:?}", target.dim()), format!("{:?}", pred.dim())));
    }
    let count = pred.len() as f64;
    let norm = T::from_f64_lossy(1.0 / count);
    let mut total = 0.0f64;
    let mut grad = Array2::zeros(pred.dim());
    match kind {
        LossKind::Mse => {
            let two = T::from_f64_lossy(2.0) * norm;
            Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
                let d = p - t;
                let d64 = d.to_f64().unwrap_or(f64::NAN);
                total += d64 * d64;
                *g = two * d;
            });
        }
        LossKind::Mae => {
            Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
                let d = p - t;
                total += d.to_f64().unwrap_or(f64::NAN).abs();
                *g = if d > T::zero() {
                    norm
                } else if d < T::zero() {
                    -norm
                } else {
                    T::zero()
                };
            });
        }
    }
    Ok((total / count, grad))
}
