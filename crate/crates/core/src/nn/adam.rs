use serde::{Deserialize, Serialize};

use super::{Backward, DenseNet, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Moment accumulators for every parameter slice of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    /// Number of steps taken so far.
    pub t: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shapes: &[usize], config: AdamConfig) -> Self {
        AdamState {
            config,
            t: 0,
            m: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: shapes.iter().map(|&n| vec![T::zero(); n]).collect(),
        }
    }

    pub fn for_net(net: &DenseNet<T>, config: AdamConfig) -> Self {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        AdamState::new(&shapes, config)
    }

    /// Apply one update to `net` from the gradients of a backward pass.
    pub fn step(&mut self, net: &mut DenseNet<T>, backward: &Backward<T>) -> Result<()> {
        let grads = backward.flat();
        let mut params = net.params_mut();
        adam_step(&mut params, &grads, self)
    }
}

/// Bias-corrected Adam update of every parameter slice; increments `state.t`.
pub fn adam_step<T: Scalar>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            format!("{} parameter slices", state.m.len()),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.len() != g.len() || p.len() != m.len() {
            return Err(Error::shape(format!("slice of {}", m.len()), format!("{} / {}", p.len(), g.len())));
        }
    }
    state.t += 1;
    let cfg = state.config;
    let t = state.t as i32;
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one_b1 = T::from_f64_lossy(1.0 - cfg.beta1);
    let one_b2 = T::from_f64_lossy(1.0 - cfg.beta2);
    // step size with the first-moment correction folded in
    let lr_t = T::from_f64_lossy(cfg.learning_rate / (1.0 - cfg.beta1.powi(t)));
    let v_corr = T::from_f64_lossy(1.0 / (1.0 - cfg.beta2.powi(t)));
    let eps = T::from_f64_lossy(cfg.epsilon);
    for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mi = b1 * *mi + one_b1 * gi;
            *vi = b2 * *vi + one_b2 * gi * gi;
            *pi -= lr_t * *mi / ((*vi * v_corr).sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(grads: &[f64], steps: usize) -> Vec<f64> {
        let mut w = vec![0.0f64];
        let mut st = AdamState::new(&[1], AdamConfig::default());
        let mut path = Vec::new();
        for s in 0..steps {
            let g = [grads[s % grads.len()]];
            adam_step(&mut [w.as_mut_slice()], &[&g[..]], &mut st).unwrap();
            path.push(w[0]);
        }
        assert_eq!(st.t, steps as u64);
        path
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let w = run(&[1.0], 1)[0];
        assert!((w + 1e-4).abs() < 1e-10, "{w}");
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        assert_eq!(run(&[0.0], 3), vec![0.0; 3]);
    }

    #[test]
    fn constant_gradient_moves_monotonically() {
        let path = run(&[2.5], 2);
        assert!(path[0] < 0.0 && path[1] < path[0]);
        let path = run(&[-0.3], 2);
        assert!(path[0] > 0.0 && path[1] > path[0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut w = vec![0.0f64; 2];
        let mut st = AdamState::new(&[2], AdamConfig::default());
        let g = [1.0];
        assert!(adam_step(&mut [w.as_mut_slice()], &[&g[..]], &mut st).is_err());
        assert_eq!(st.t, 0);
    }
}
