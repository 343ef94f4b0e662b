//! Classical iterative phase retrieval: hybrid input-output, relaxed averaged
//! alternating reflections and error reduction.
//!
//! All three alternate between the Fourier magnitude set `M = {x : |F(x)| = ω}`
//! and the image-domain set `S` of real, non-negative images vanishing outside
//! the support. `P_M` keeps the current phase and imposes `ω`; `P_S` zeroes
//! everything outside the support and clamps negatives to zero.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Fft2Plan, Image, Magnitude};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Hio,
    Raar,
    ErrorReduction,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Hio => "hio",
            SolverKind::Raar => "raar",
            SolverKind::ErrorReduction => "er",
        }
    }

    /// Relaxation used in the reference experiments.
    pub fn default_beta(self) -> f64 {
        match self {
            SolverKind::Hio => 0.8,
            SolverKind::Raar => 0.87,
            SolverKind::ErrorReduction => 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverParams {
    pub beta: f64,
    pub iterations: usize,
    /// Total number of independent runs.
    pub restarts: usize,
    pub seed: u64,
    /// `true` marks pixels allowed to be non-zero; `None` means everywhere.
    #[serde(skip)]
    pub support: Option<Array2<bool>>,
    pub clip_output: bool,
}

impl SolverParams {
    pub fn new(kind: SolverKind) -> Self {
        SolverParams {
            beta: kind.default_beta(),
            iterations: 1000,
            restarts: 3,
            seed: 0,
            support: None,
            clip_output: true,
        }
    }

    pub fn validate(&self, side: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::InvalidInput(format!(
                "beta must lie in (0, 1), got {}",
                self.beta
            )));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidInput("iterations must be at least 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidInput("restarts must be at least 1".into()));
        }
        if let Some(mask) = &self.support {
            if mask.dim() != (side, side) {
                return Err(Error::shape(
                    format!("{side}x{side} support"),
                    format!("{:?}", mask.dim()),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub reconstruction: Image,
    /// `‖|F(x̂)| − ω‖_F` of the returned reconstruction.
    pub magnitude_error: f64,
    pub restart_index: usize,
    /// Magnitude error of the constraint-projected estimate at every iteration.
    pub per_iteration_error: Vec<f64>,
}

impl SolverResult {
    /// Top-left `n`×`n` block, for oversampled runs.
    pub fn cropped(&self, n: usize) -> Image {
        Image::from_fn(n, |(r, c)| self.reconstruction.get(r, c))
    }
}

/// Frobenius norm of `|F(xhat)| − ω`.
pub fn magnitude_error(xhat: &Image, omega: &Magnitude) -> Result<f64> {
    if xhat.side() != omega.side() {
        return Err(Error::shape(
            format!("{0}x{0}", omega.side()),
            format!("{0}x{0}", xhat.side()),
        ));
    }
    let mut engine = Engine::new(omega, None);
    Ok(engine.magnitude_error(xhat.as_slice()))
}

struct Engine {
    n: usize,
    plan: Fft2Plan,
    omega: Vec<f64>,
    support: Vec<bool>,
    buf: Vec<Complex64>,
}

impl Engine {
    fn new(omega: &Magnitude, support: Option<&Array2<bool>>) -> Self {
        let n = omega.side();
        let support = match support {
            Some(mask) => mask.iter().copied().collect(),
            None => vec![true; n * n],
        };
        Engine {
            n,
            plan: Fft2Plan::new(n),
            omega: omega.as_slice().to_vec(),
            support,
            buf: vec![Complex64::default(); n * n],
        }
    }

    fn load(&mut self, x: &[f64]) {
        for (b, &v) in self.buf.iter_mut().zip(x) {
            *b = Complex64::new(v, 0.0);
        }
    }

    /// Real part of the magnitude projection.
    fn project_magnitude(&mut self, x: &[f64], out: &mut [f64]) {
        self.load(x);
        self.plan.forward(&mut self.buf);
        for (b, &w) in self.buf.iter_mut().zip(&self.omega) {
            let r = b.norm();
            *b = if r > 0.0 { *b * (w / r) } else { Complex64::new(w, 0.0) };
        }
        self.plan.inverse(&mut self.buf);
        for (o, b) in out.iter_mut().zip(&self.buf) {
            *o = b.re;
        }
    }

    fn project_constraints(&self, y: &[f64], out: &mut [f64]) {
        for ((o, &v), &inside) in out.iter_mut().zip(y).zip(&self.support) {
            *o = if inside { v.max(0.0) } else { 0.0 };
        }
    }

    fn magnitude_error(&mut self, x: &[f64]) -> f64 {
        self.load(x);
        self.plan.forward(&mut self.buf);
        self.buf
            .iter()
            .zip(&self.omega)
            .map(|(b, &w)| (b.norm() - w).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn random_start(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.support
            .iter()
            .map(|&inside| if inside { rng.random::<f64>() } else { 0.0 })
            .collect()
    }
}

fn check_inputs(omega: &Magnitude, params: &SolverParams) -> Result<()> {
    params.validate(omega.side())
}

/// One solver run from `initial` (or from a seeded random start on the support).
pub fn run_solver(
    kind: SolverKind,
    omega: &Magnitude,
    params: &SolverParams,
    initial: Option<&Image>,
) -> Result<SolverResult> {
    check_inputs(omega, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    run_once(kind, omega, params, initial, &mut rng, 0)
}

fn run_once(
    kind: SolverKind,
    omega: &Magnitude,
    params: &SolverParams,
    initial: Option<&Image>,
    rng: &mut ChaCha8Rng,
    restart_index: usize,
) -> Result<SolverResult> {
    let mut engine = Engine::new(omega, params.support.as_ref());
    let n = engine.n;
    let mut x = match initial {
        Some(img) if img.side() != n => {
            return Err(Error::shape(format!("{n}x{n}"), format!("{0}x{0}", img.side())))
        }
        Some(img) => img.as_slice().to_vec(),
        None => engine.random_start(rng),
    };
    let beta = params.beta;
    let mut pm = vec![0.0; n * n];
    let mut est = vec![0.0; n * n];
    let mut scratch = vec![0.0; n * n];
    let mut reflected = vec![0.0; n * n];
    let mut errors = Vec::with_capacity(params.iterations);

    for _ in 0..params.iterations {
        engine.project_magnitude(&x, &mut pm);
        engine.project_constraints(&pm, &mut est);
        errors.push(engine.magnitude_error(&est));

        match kind {
            SolverKind::ErrorReduction => x.copy_from_slice(&est),
            SolverKind::Hio => {
                for i in 0..x.len() {
                    x[i] = if engine.support[i] && pm[i] >= 0.0 {
                        pm[i]
                    } else {
                        x[i] - beta * pm[i]
                    };
                }
            }
            SolverKind::Raar => {
                // R_M(x) = 2 P_M(x) - x
                for i in 0..x.len() {
                    scratch[i] = 2.0 * pm[i] - x[i];
                }
                engine.project_constraints(&scratch, &mut reflected);
                for i in 0..x.len() {
                    let rs = 2.0 * reflected[i] - scratch[i];
                    x[i] = 0.5 * beta * (rs + x[i]) + (1.0 - beta) * pm[i];
                }
            }
        }
    }

    let mut reconstruction = est;
    if params.clip_output {
        reconstruction.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }
    let magnitude_error = engine.magnitude_error(&reconstruction);
    Ok(SolverResult {
        reconstruction: Image::from_vec(n, reconstruction)?,
        magnitude_error,
        restart_index,
        per_iteration_error: errors,
    })
}

pub fn hio(omega: &Magnitude, params: &SolverParams) -> Result<SolverResult> {
    run_solver(SolverKind::Hio, omega, params, None)
}

pub fn raar(omega: &Magnitude, params: &SolverParams) -> Result<SolverResult> {
    run_solver(SolverKind::Raar, omega, params, None)
}

pub fn error_reduction(omega: &Magnitude, params: &SolverParams) -> Result<SolverResult> {
    run_solver(SolverKind::ErrorReduction, omega, params, None)
}

/// Runs `params.restarts` independently seeded solves and keeps the one with
/// the smallest magnitude error; the lowest restart index wins ties.
///
/// Restart `r` draws its start from stream `r` of the generator seeded with
/// `params.seed`, so restart 0 is exactly the single-run result.
pub fn solve_with_restarts(
    kind: SolverKind,
    omega: &Magnitude,
    params: &SolverParams,
) -> Result<SolverResult> {
    check_inputs(omega, params)?;
    let mut best: Option<SolverResult> = None;
    for r in 0..params.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(r as u64);
        let result = run_once(kind, omega, params, None, &mut rng, r)?;
        let better = match &best {
            None => true,
            Some(b) => result.magnitude_error < b.magnitude_error,
        };
        if better {
            best = Some(result);
        }
    }
    Ok(best.expect("at least one restart"))
}
