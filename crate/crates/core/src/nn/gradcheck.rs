use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{loss, DenseNet, LossKind};
use crate::error::Result;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over entries of `|analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
    pub max_rel_error: f64,
    /// Location of the worst entry, e.g. `param 3[17]` or `input[5]`.
    pub worst: String,
    pub checked: usize,
}

const STEP: f64 = 1e-5;

fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compare backpropagated gradients with central differences (`h = 1e-5`).
///
/// Every evaluation runs in train mode with a generator freshly seeded from
/// `seed`, so dropout masks are identical across perturbations and batchnorm
/// uses batch statistics.
pub fn gradient_check(
    net: &DenseNet<f64>,
    input: &Array2<f64>,
    target: &Array2<f64>,
    kind: LossKind,
    seed: u64,
) -> Result<GradCheckReport> {
    let mut work = net.clone();
    let eval = |net: &mut DenseNet<f64>, x: &Array2<f64>| -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pass = net.forward_train(x, &mut rng)?;
        Ok(loss(kind, &pass.output, target)?.0)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pass = work.forward_train(input, &mut rng)?;
    let (_, grad_out) = loss(kind, &pass.output, target)?;
    let back = work.backward(&pass, &grad_out)?;
    let analytic: Vec<Vec<f64>> = back.flat().iter().map(|g| g.to_vec()).collect();
    let analytic_input = back.grad_input.expect("requested");

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let mut record = |err: f64, at: String| {
        report.checked += 1;
        if err > report.max_rel_error || report.worst.is_empty() {
            report.max_rel_error = err.max(report.max_rel_error);
            report.worst = at;
        }
    };

    for (slot, grads) in analytic.iter().enumerate() {
        for (i, &g) in grads.iter().enumerate() {
            let orig = work.params()[slot][i];
            work.params_mut()[slot][i] = orig + STEP;
            let up = eval(&mut work, input)?;
            work.params_mut()[slot][i] = orig - STEP;
            let down = eval(&mut work, input)?;
            work.params_mut()[slot][i] = orig;
            record(rel_error(g, (up - down) / (2.0 * STEP)), format!("param {slot}[{i}]"));
        }
    }

    let mut x = input.clone();
    for (i, &g) in analytic_input.iter().enumerate() {
        let idx = (i / x.ncols(), i % x.ncols());
        let orig = x[idx];
        x[idx] = orig + STEP;
        let up = eval(&mut work, &x)?;
        x[idx] = orig - STEP;
        let down = eval(&mut work, &x)?;
        x[idx] = orig;
        record(rel_error(g, (up - down) / (2.0 * STEP)), format!("input[{i}]"));
    }
    Ok(report)
}
