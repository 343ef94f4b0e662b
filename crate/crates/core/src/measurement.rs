//! Forward measurement model and the phase/magnitude swap experiment.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{
    compose, decompose, fft2_image, ifft2, mirror, Image, Magnitude, Phase,
};

/// Fourier modulus of `x` at its own size (no oversampling).
pub fn measure(x: &Image) -> Magnitude {
    fft2_image(x).modulus()
}

/// Embed `x` in the top-left corner of an `m`×`m` zero grid and measure.
pub fn pad_and_measure(x: &Image, m: usize) -> Result<Magnitude> {
    Ok(measure(&zero_pad(x, m)?))
}

pub fn zero_pad(x: &Image, m: usize) -> Result<Image> {
    let n = x.side();
    if m < n {
        return Err(Error::InvalidInput(format!(
            "padded size {m} is smaller than the image size {n}"
        )));
    }
    Ok(Image::from_fn(m, |(r, c)| {
        if r < n && c < n {
            x.get(r, c)
        } else {
            0.0
        }
    }))
}

/// Boolean mask selecting the top-left `n`×`n` block of an `m`×`m` grid.
pub fn corner_support(n: usize, m: usize) -> Array2<bool> {
    Array2::from_shape_fn((m, m), |(r, c)| r < n && c < n)
}

/// Uniform random phase that is antisymmetric under `(u, v) -> (-u, -v) mod n`,
/// so that combining it with a centrally symmetric magnitude yields a real image.
/// Self-conjugate frequencies draw from `{0, π}`.
pub fn random_phase(n: usize, seed: u64) -> Result<Phase> {
    if n == 0 {
        return Err(Error::InvalidInput("phase size must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Array2::<f64>::zeros((n, n));
    let mut assigned = Array2::from_elem((n, n), false);
    for u in 0..n {
        for v in 0..n {
            if assigned[[u, v]] {
                continue;
            }
            let (pu, pv) = (mirror(u, n), mirror(v, n));
            if (pu, pv) == (u, v) {
                values[[u, v]] = if rng.random::<bool>() { PI } else { 0.0 };
            } else {
                let theta = rng.random_range(-PI..=PI);
                values[[u, v]] = theta;
                values[[pu, pv]] = -theta;
                assigned[[pu, pv]] = true;
            }
            assigned[[u, v]] = true;
        }
    }
    Phase::new(values)
}

/// Draw from a normal(`mean`, `stddev`) restricted to `[0, ∞)`.
fn truncated_normal<R: Rng>(rng: &mut R, mean: f64, stddev: f64) -> f64 {
    // standardized lower bound
    let alpha = -mean / stddev;
    let z = if alpha < 0.5 {
        loop {
            let z: f64 = StandardNormal.sample(rng);
            if z >= alpha {
                break z;
            }
        }
    } else {
        // exponential proposal for far tails
        let rate = 0.5 * (alpha + (alpha * alpha + 4.0).sqrt());
        let exp = Exp::new(rate).expect("positive rate");
        loop {
            let z = alpha + exp.sample(rng);
            let accept = (-(z - rate) * (z - rate) / 2.0).exp();
            if rng.random::<f64>() <= accept {
                break z;
            }
        }
    };
    (mean + stddev * z).max(0.0)
}

/// Truncated-normal magnitudes made centrally symmetric by averaging each
/// entry with its conjugate partner.
pub fn random_magnitude(n: usize, mean: f64, stddev: f64, seed: u64) -> Result<Magnitude> {
    if !(stddev > 0.0) || !mean.is_finite() || n == 0 {
        return Err(Error::InvalidInput(format!(
            "random magnitude needs n >= 1 and stddev > 0 (got n={n}, stddev={stddev})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = Array2::from_shape_simple_fn((n, n), || truncated_normal(&mut rng, mean, stddev));
    let sym = Array2::from_shape_fn((n, n), |(u, v)| {
        0.5 * (raw[[u, v]] + raw[[mirror(u, n), mirror(v, n)]])
    });
    Magnitude::new(sym)
}

#[derive(Clone, Debug)]
pub struct SwapDemoResult {
    /// Inverse transform of the true magnitude with a random phase.
    pub x_random_phase: Image,
    /// Inverse transform of a random magnitude with the true phase.
    pub x_random_magnitude: Image,
    pub phase_used: Phase,
    pub magnitude_used: Magnitude,
    pub true_magnitude: Magnitude,
    pub true_phase: Phase,
    /// Largest imaginary component discarded from either reconstruction.
    pub imag_residue: f64,
}

/// Exchange phase and magnitude with random counterparts.
///
/// The random magnitude uses the sample mean and standard deviation of the
/// non-DC entries of `measure(x)`; its DC entry is copied from the true one.
pub fn swap_demo(x: &Image, seed: u64) -> Result<SwapDemoResult> {
    let n = x.side();
    let (omega, phi) = decompose(&fft2_image(x));

    let phase_used = random_phase(n, seed)?;
    let field = ifft2(&compose(&omega, &phase_used)?);
    let mut residue = field.max_abs_imag();
    let x_random_phase = field.real_part();

    let ac: Vec<f64> = omega.as_slice().iter().skip(1).copied().collect();
    let (mean, stddev) = if ac.len() > 1 {
        let mean = ac.iter().sum::<f64>() / ac.len() as f64;
        let var = ac.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ac.len() - 1) as f64;
        (mean, var.sqrt())
    } else {
        (0.0, 0.0)
    };
    let magnitude_used = if stddev > 0.0 {
        let m = random_magnitude(n, mean, stddev, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
        let mut values = m.values().clone();
        values[[0, 0]] = omega.values()[[0, 0]];
        Magnitude::new(values)?
    } else {
        omega.clone()
    };
    let field = ifft2(&compose(&magnitude_used, &phi)?);
    residue = residue.max(field.max_abs_imag());
    let x_random_magnitude = field.real_part();

    Ok(SwapDemoResult {
        x_random_phase,
        x_random_magnitude,
        phase_used,
        magnitude_used,
        true_magnitude: omega,
        true_phase: phi,
        imag_residue: residue,
    })
}
