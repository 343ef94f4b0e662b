//! Registration under the trivial ambiguities of Fourier magnitudes (circular
//! shift and 180° rotation) followed by MSE / MAE / SSIM scoring.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{fft2_image, ifft2, ComplexField, Image};

#[derive(Clone, Debug, PartialEq)]
pub struct Registration {
    /// Circular shift applied to the (possibly rotated) estimate.
    pub shift: (usize, usize),
    pub rotated: bool,
    pub aligned: Image,
    /// Cross-correlation value at the selected alignment.
    pub score: f64,
}

fn same_size(a: &Image, b: &Image) -> Result<()> {
    if a.side() != b.side() {
        return Err(Error::shape(
            format!("{0}x{0}", b.side()),
            format!("{0}x{0}", a.side()),
        ));
    }
    Ok(())
}

/// Circular cross-correlation `c[s] = Σ_i x[i] · candidate[i − s]`, via FFT.
pub fn cross_correlation(candidate: &Image, x: &Image) -> Result<Array2<f64>> {
    same_size(candidate, x)?;
    let fx = fft2_image(x);
    let fc = fft2_image(candidate);
    let n = x.side();
    let product = ComplexField::from_fn(n, |(u, v)| fx.values()[[u, v]] * fc.values()[[u, v]].conj());
    Ok(ifft2(&product).values().mapv(|c: Complex64| c.re))
}

/// Align `xhat` to `x` over all circular shifts of `xhat` and of its 180°
/// rotation, maximizing raw cross-correlation.
///
/// Correlation values within a relative `1e-10` of the maximum count as ties;
/// ties prefer the unrotated candidate, then the smallest shift in row-major
/// order.
pub fn register(xhat: &Image, x: &Image) -> Result<Registration> {
    same_size(xhat, x)?;
    let rotated = xhat.rotate180();
    let maps = [cross_correlation(xhat, x)?, cross_correlation(&rotated, x)?];
    let best = maps
        .iter()
        .flat_map(|m| m.iter())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let tol = 1e-10 * best.abs().max(1e-300);
    for (rot, map) in maps.iter().enumerate() {
        if let Some(((du, dv), &score)) = map.indexed_iter().find(|(_, &v)| v >= best - tol) {
            let source = if rot == 0 { xhat } else { &rotated };
            return Ok(Registration {
                shift: (du, dv),
                rotated: rot == 1,
                aligned: source.circular_shift(du, dv),
                score,
            });
        }
    }
    unreachable!("the maximum is attained by some candidate")
}

pub fn mse(xhat: &Image, x: &Image) -> Result<f64> {
    same_size(xhat, x)?;
    let n2 = (x.side() * x.side()) as f64;
    Ok(xhat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b).powi(2))
        .sum::<f64>()
        / n2)
}

pub fn mae(xhat: &Image, x: &Image) -> Result<f64> {
    same_size(xhat, x)?;
    let n2 = (x.side() * x.side()) as f64;
    Ok(xhat
        .as_slice()
        .iter()
        .zip(x.as_slice())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n2)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        SsimParams {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

fn gaussian_window(size: usize, sigma: f64) -> Array2<f64> {
    let center = (size as f64 - 1.0) / 2.0;
    let g: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - center).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = g.iter().sum();
    Array2::from_shape_fn((size, size), |(r, c)| g[r] * g[c] / (total * total))
}

/// Mean SSIM over all window positions that fit entirely inside the image.
/// Windows larger than the image shrink to the image size.
pub fn ssim_with(xhat: &Image, x: &Image, params: &SsimParams) -> Result<f64> {
    same_size(xhat, x)?;
    let n = x.side();
    let size = params.window.min(n);
    let w = gaussian_window(size, params.sigma);
    let c1 = (params.k1 * params.dynamic_range).powi(2);
    let c2 = (params.k2 * params.dynamic_range).powi(2);
    let (a, b) = (xhat.pixels(), x.pixels());
    let positions = n - size + 1;
    let mut total = 0.0;
    for r0 in 0..positions {
        for c0 in 0..positions {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ((i, j), &wt) in w.indexed_iter() {
                let pa = a[[r0 + i, c0 + j]];
                let pb = b[[r0 + i, c0 + j]];
                ma += wt * pa;
                mb += wt * pb;
                saa += wt * pa * pa;
                sbb += wt * pb * pb;
                sab += wt * pa * pb;
            }
            let var_a = saa - ma * ma;
            let var_b = sbb - mb * mb;
            let cov = sab - ma * mb;
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
    }
    Ok(total / (positions * positions) as f64)
}

pub fn ssim(xhat: &Image, x: &Image) -> Result<f64> {
    ssim_with(xhat, x, &SsimParams::default())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageMetrics {
    pub mse: f64,
    pub mae: f64,
    pub ssim: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub per_image: Vec<ImageMetrics>,
    pub mean_mse: f64,
    pub mean_mae: f64,
    pub mean_ssim: f64,
    /// Half-width of the normal-approximation 95% interval of `mean_mse`.
    pub ci95_mse: f64,
    pub count: usize,
    pub ssim_params: SsimParams,
    pub registration: String,
}

/// Sum in sorted order so aggregates do not depend on the order of images.
fn order_free_mean(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

impl EvalReport {
    pub fn from_metrics(per_image: Vec<ImageMetrics>) -> Self {
        let count = per_image.len();
        let mean_mse = order_free_mean(per_image.iter().map(|m| m.mse));
        let mean_mae = order_free_mean(per_image.iter().map(|m| m.mae));
        let mean_ssim = order_free_mean(per_image.iter().map(|m| m.ssim));
        let ci95_mse = if count > 1 {
            let var = order_free_mean(per_image.iter().map(|m| (m.mse - mean_mse).powi(2)))
                * count as f64
                / (count - 1) as f64;
            1.96 * var.sqrt() / (count as f64).sqrt()
        } else {
            0.0
        };
        EvalReport {
            method: String::new(),
            dataset: String::new(),
            per_image,
            mean_mse,
            mean_mae,
            mean_ssim,
            ci95_mse,
            count,
            ssim_params: SsimParams::default(),
            registration: "circular shift + 180deg rotation, max cross-correlation".into(),
        }
    }

    pub fn labeled(mut self, method: &str, dataset: &str) -> Self {
        self.method = method.to_string();
        self.dataset = dataset.to_string();
        self
    }
}

/// Register one reconstruction and score it against the original.
pub fn score_pair(xhat: &Image, x: &Image) -> Result<ImageMetrics> {
    let aligned = register(xhat, x)?.aligned;
    Ok(ImageMetrics {
        mse: mse(&aligned, x)?,
        mae: mae(&aligned, x)?,
        ssim: ssim(&aligned, x)?,
    })
}

pub fn evaluate(reconstructions: &[Image], originals: &[Image]) -> Result<EvalReport> {
    if reconstructions.len() != originals.len() {
        return Err(Error::shape(
            format!("{} reconstructions", originals.len()),
            reconstructions.len(),
        ));
    }
    let per_image = reconstructions
        .par_iter()
        .zip(originals.par_iter())
        .map(|(xhat, x)| score_pair(xhat, x))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_metrics(per_image))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(n, |_| rng.random::<f64>())
    }

    fn glyph(n: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(n, |_| if rng.random::<f64>() < 0.3 { 1.0 } else { 0.0 })
    }

    #[test]
    fn recovers_shift_and_rotation() {
        let x = random_image(12, 1);
        let reg = register(&x.circular_shift(3, 5), &x).unwrap();
        assert!(!reg.rotated);
        assert_eq!(mse(&reg.aligned, &x).unwrap(), 0.0);

        let reg = register(&x.rotate180(), &x).unwrap();
        assert!(reg.rotated);
        assert_eq!(mse(&reg.aligned, &x).unwrap(), 0.0);

        let reg = register(&x, &x).unwrap();
        assert_eq!((reg.shift, reg.rotated), ((0, 0), false));
    }

    #[test]
    fn identity_tie_break_on_symmetric_image() {
        // invariant under 180° rotation, so both candidates tie at zero shift
        let x = Image::from_fn(6, |(r, c)| ((r as f64 - 2.5).powi(2) + (c as f64 - 2.5).powi(2)).sqrt());
        let reg = register(&x, &x).unwrap();
        assert_eq!((reg.shift, reg.rotated), ((0, 0), false));
    }

    #[test]
    fn fft_correlation_matches_exhaustive_search() {
        for seed in 0..10 {
            let x = random_image(8, seed);
            let xhat = random_image(8, seed + 100);
            let mut best = f64::NEG_INFINITY;
            for cand in [xhat.clone(), xhat.rotate180()] {
                for du in 0..8 {
                    for dv in 0..8 {
                        let s = cand.circular_shift(du, dv);
                        let corr: f64 = s.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
                        best = best.max(corr);
                    }
                }
            }
            let reg = register(&xhat, &x).unwrap();
            assert!((reg.score - best).abs() < 1e-10, "seed {seed}");
            let direct: f64 = reg.aligned.as_slice().iter().zip(x.as_slice()).map(|(a, b)| a * b).sum();
            assert!((direct - best).abs() < 1e-10);
        }
    }

    #[test]
    fn metric_values() {
        let zeros = Image::zeros(5);
        let halves = Image::from_fn(5, |_| 0.5);
        assert_eq!(mse(&zeros, &halves).unwrap(), 0.25);
        assert_eq!(mae(&zeros, &halves).unwrap(), 0.5);
        assert_eq!(mse(&halves, &halves).unwrap(), 0.0);

        let a = random_image(7, 3);
        let b = random_image(7, 4);
        let (mut s2, mut s1) = (0.0, 0.0);
        for r in 0..7 {
            for c in 0..7 {
                s2 += (a.get(r, c) - b.get(r, c)).powi(2);
                s1 += (a.get(r, c) - b.get(r, c)).abs();
            }
        }
        assert!((mse(&a, &b).unwrap() - s2 / 49.0).abs() < 1e-15);
        assert!((mae(&a, &b).unwrap() - s1 / 49.0).abs() < 1e-15);
        assert!(mse(&a, &Image::zeros(3)).is_err());
    }

    #[test]
    fn ssim_identity_inverse_and_symmetry() {
        let x = glyph(28, 1);
        assert_eq!(ssim(&x, &x).unwrap(), 1.0);
        let inv = x.map(|v| 1.0 - v);
        assert!(ssim(&inv, &x).unwrap() < 0.2);
        let y = random_image(28, 2);
        assert_eq!(ssim(&x, &y).unwrap(), ssim(&y, &x).unwrap());
    }

    #[test]
    fn ssim_decreases_with_noise() {
        let mut means = Vec::new();
        for sigma in [0.05, 0.1, 0.2] {
            let mut acc = 0.0;
            for k in 0..10 {
                let x = glyph(28, k);
                let mut rng = ChaCha8Rng::seed_from_u64(1000 + k);
                let noisy = Image::from_fn(28, |(r, c)| {
                    let z: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                    x.get(r, c) + sigma * z
                });
                acc += ssim(&noisy, &x).unwrap();
            }
            means.push(acc / 10.0);
        }
        assert!(means[0] > means[1] && means[1] > means[2], "{means:?}");
    }

    #[test]
    fn report_aggregates() {
        let xs: Vec<Image> = (0..6).map(|k| glyph(10, k)).collect();
        let rep = evaluate(&xs, &xs).unwrap();
        assert_eq!((rep.mean_mse, rep.mean_mae, rep.mean_ssim, rep.ci95_mse), (0.0, 0.0, 1.0, 0.0));

        let noisy: Vec<Image> = (0..6).map(|k| random_image(10, 50 + k)).collect();
        let single = evaluate(&noisy[..1], &xs[..1]).unwrap();
        assert_eq!(single.mean_mse, single.per_image[0].mse);
        assert_eq!(single.mean_ssim, single.per_image[0].ssim);

        let rep = evaluate(&noisy, &xs).unwrap();
        let mut order: Vec<usize> = (0..6).collect();
        order.reverse();
        order.swap(1, 4);
        let shuffled_n: Vec<Image> = order.iter().map(|&i| noisy[i].clone()).collect();
        let shuffled_x: Vec<Image> = order.iter().map(|&i| xs[i].clone()).collect();
        let rep2 = evaluate(&shuffled_n, &shuffled_x).unwrap();
        assert_eq!(
            (rep.mean_mse, rep.mean_mae, rep.mean_ssim, rep.ci95_mse),
            (rep2.mean_mse, rep2.mean_mae, rep2.mean_ssim, rep2.ci95_mse)
        );
        assert!(evaluate(&noisy[..2], &xs).is_err());
    }
}
