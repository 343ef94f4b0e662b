//! Square images, complex spectra and the 2D DFT pair.
//!
//! Convention: the forward transform is unnormalized and the inverse carries
//! the full `1/n²` factor, so `ifft2(fft2(x)) == x`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Real-valued square pixel grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Image(Array2<f64>);

impl Image {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        check_square(pixels.dim())?;
        if let Some(v) = pixels.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite pixel value {v}")));
        }
        Ok(Image(pixels))
    }

    pub fn zeros(n: usize) -> Self {
        Image(Array2::zeros((n, n)))
    }

    pub fn from_fn(n: usize, f: impl FnMut((usize, usize)) -> f64) -> Self {
        Image(Array2::from_shape_fn((n, n), f))
    }

    /// Row-major pixels of an `n`×`n` image.
    pub fn from_vec(n: usize, pixels: Vec<f64>) -> Result<Self> {
        let len = pixels.len();
        let arr = Array2::from_shape_vec((n, n), pixels)
            .map_err(|_| Error::shape(format!("{} pixels", n * n), len))?;
        Image::new(arr)
    }

    pub fn side(&self) -> usize {
        self.0.nrows()
    }

    pub fn pixels(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_pixels(self) -> Array2<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0
            .as_slice()
            .expect("images are always stored in standard layout")
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.0[[r, c]]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image(self.0.mapv(f))
    }

    pub fn clipped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// `out[i, j] = self[(i - du) mod n, (j - dv) mod n]`.
    pub fn circular_shift(&self, du: usize, dv: usize) -> Image {
        let n = self.side();
        Image::from_fn(n, |(i, j)| {
            self.0[[(i + n - du % n) % n, (j + n - dv % n) % n]]
        })
    }

    /// Rotation by 180°: `out[i, j] = self[n-1-i, n-1-j]`.
    pub fn rotate180(&self) -> Image {
        let n = self.side();
        Image::from_fn(n, |(i, j)| self.0[[n - 1 - i, n - 1 - j]])
    }

    pub fn transpose(&self) -> Image {
        Image(self.0.t().as_standard_layout().into_owned())
    }

    pub fn to_field(&self) -> ComplexField {
        ComplexField(self.0.mapv(|v| Complex64::new(v, 0.0)))
    }
}

/// Square array of complex values, typically a spectrum.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexField(Array2<Complex64>);

impl ComplexField {
    pub fn new(values: Array2<Complex64>) -> Result<Self> {
        check_square(values.dim())?;
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite complex value".into()));
        }
        Ok(ComplexField(values))
    }

    pub fn from_fn(n: usize, f: impl FnMut((usize, usize)) -> Complex64) -> Self {
        ComplexField(Array2::from_shape_fn((n, n), f))
    }

    pub fn side(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.0
    }

    pub fn values_mut(&mut self) -> &mut Array2<Complex64> {
        &mut self.0
    }

    /// Real part as an image; the imaginary residue is dropped.
    pub fn real_part(&self) -> Image {
        Image(self.0.mapv(|c| c.re))
    }

    pub fn max_abs_imag(&self) -> f64 {
        self.0.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }

    pub fn modulus(&self) -> Magnitude {
        Magnitude(self.0.mapv(|c| c.norm()))
    }
}

/// Non-negative Fourier modulus.
#[derive(Clone, Debug, PartialEq)]
pub struct Magnitude(Array2<f64>);

impl Magnitude {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_square(values.dim())?;
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidInput(
                "magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(Magnitude(values))
    }

    pub fn side(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice().expect("standard layout")
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Fourier phase in `[-π, π]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Phase(Array2<f64>);

impl Phase {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        check_square(values.dim())?;
        if values.iter().any(|v| !v.is_finite() || v.abs() > PI) {
            return Err(Error::InvalidInput("phase values must lie in [-pi, pi]".into()));
        }
        Ok(Phase(values))
    }

    pub fn side(&self) -> usize {
        self.0.nrows()
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.0
    }
}

fn check_square((rows, cols): (usize, usize)) -> Result<()> {
    if rows != cols || rows == 0 {
        return Err(Error::InvalidInput(format!(
            "expected a non-empty square array, got {rows}x{cols}"
        )));
    }
    Ok(())
}

/// Index of the conjugate-symmetric partner of frequency `k` on an axis of length `n`.
#[inline]
pub fn mirror(k: usize, n: usize) -> usize {
    (n - k % n) % n
}

/// Reusable 2D transform for one side length, with its own scratch buffers.
pub struct Fft2Plan {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2Plan {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Fft2Plan {
            n,
            forward,
            inverse,
            scratch: vec![Complex64::default(); scratch_len],
            transposed: vec![Complex64::default(); n * n],
        }
    }

    pub fn side(&self) -> usize {
        self.n
    }

    /// Unnormalized forward DFT of a row-major `n*n` buffer, in place.
    pub fn forward(&mut self, data: &mut [Complex64]) {
        let fft = Arc::clone(&self.forward);
        self.separable(data, fft.as_ref());
    }

    /// Inverse DFT including the `1/n²` factor, in place.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        let fft = Arc::clone(&self.inverse);
        self.separable(data, fft.as_ref());
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter_mut().for_each(|v| *v *= scale);
    }

    fn separable(&mut self, data: &mut [Complex64], fft: &dyn Fft<f64>) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "buffer does not match plan size");
        fft.process_with_scratch(data, &mut self.scratch);
        transpose(data, &mut self.transposed, n);
        fft.process_with_scratch(&mut self.transposed, &mut self.scratch);
        transpose(&self.transposed, data, n);
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], n: usize) {
    for r in 0..n {
        for c in 0..n {
            dst[c * n + r] = src[r * n + c];
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Fft2Plan>> = RefCell::new(HashMap::new());
}

fn with_plan<R>(n: usize, f: impl FnOnce(&mut Fft2Plan) -> R) -> R {
    PLANS.with(|plans| {
        let mut plans = plans.borrow_mut();
        let plan = plans.entry(n).or_insert_with(|| Fft2Plan::new(n));
        f(plan)
    })
}

/// Unnormalized forward 2D DFT.
pub fn fft2(field: &ComplexField) -> ComplexField {
    let mut out = field.0.as_standard_layout().into_owned();
    let n = field.side();
    with_plan(n, |plan| {
        plan.forward(out.as_slice_mut().expect("standard layout"))
    });
    ComplexField(out)
}

pub fn fft2_image(image: &Image) -> ComplexField {
    fft2(&image.to_field())
}

/// Inverse 2D DFT with `1/n²` normalization.
pub fn ifft2(field: &ComplexField) -> ComplexField {
    let mut out = field.0.as_standard_layout().into_owned();
    let n = field.side();
    with_plan(n, |plan| {
        plan.inverse(out.as_slice_mut().expect("standard layout"))
    });
    ComplexField(out)
}

/// Split a field into modulus and argument; zero entries get phase 0.
pub fn decompose(field: &ComplexField) -> (Magnitude, Phase) {
    let magnitude = field.0.mapv(|c| c.norm());
    let phase = field
        .0
        .mapv(|c| if c.norm() == 0.0 { 0.0 } else { c.im.atan2(c.re) });
    (Magnitude(magnitude), Phase(phase))
}

/// Elementwise `magnitude * exp(i * phase)`.
pub fn compose(magnitude: &Magnitude, phase: &Phase) -> Result<ComplexField> {
    if magnitude.0.dim() != phase.0.dim() {
        return Err(Error::shape(
            format!("{:?}", magnitude.0.dim()),
            format!("{:?}", phase.0.dim()),
        ));
    }
    let mut out = Array2::zeros(magnitude.0.dim());
    Zip::from(&mut out)
        .and(&magnitude.0)
        .and(&phase.0)
        .for_each(|o, &m, &p| *o = Complex64::from_polar(m, p));
    Ok(ComplexField(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(n: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(n, |_| rng.random::<f64>())
    }

    /// Direct O(n⁴) DFT, independent of the FFT path.
    fn naive_dft(x: &Image) -> Array2<Complex64> {
        let n = x.side();
        Array2::from_shape_fn((n, n), |(u, v)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for r in 0..n {
                for c in 0..n {
                    let angle = -2.0 * PI * ((u * r + v * c) % n) as f64 / n as f64;
                    acc += Complex64::from_polar(x.get(r, c), angle);
                }
            }
            acc
        })
    }

    #[test]
    fn delta_transforms_to_ones() {
        let delta = Image::from_fn(6, |(r, c)| if r == 0 && c == 0 { 1.0 } else { 0.0 });
        let f = fft2_image(&delta);
        for v in f.values() {
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_image_has_dc_only() {
        let n = 7;
        let c = 0.3;
        let f = fft2_image(&Image::from_fn(n, |_| c));
        for ((u, v), val) in f.values().indexed_iter() {
            let expect = if u == 0 && v == 0 { c * (n * n) as f64 } else { 0.0 };
            assert!((val - Complex64::new(expect, 0.0)).norm() < 1e-12, "{u},{v}");
        }
    }

    #[test]
    fn matches_direct_dft_and_parseval() {
        let x = random_image(8, 3);
        let fast = fft2_image(&x);
        let slow = naive_dft(&x);
        for (a, b) in fast.values().iter().zip(slow.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
        let energy: f64 = slow.iter().map(|v| v.norm_sqr()).sum();
        let pixels: f64 = x.as_slice().iter().map(|v| v * v).sum();
        assert!((energy - 64.0 * pixels).abs() / energy < 1e-10);
    }

    #[test]
    fn inverse_of_ones_is_delta() {
        let ones = ComplexField::from_fn(5, |_| Complex64::new(1.0, 0.0));
        let x = ifft2(&ones);
        for ((r, c), v) in x.values().indexed_iter() {
            let expect = if r == 0 && c == 0 { 1.0 } else { 0.0 };
            assert!((v - Complex64::new(expect, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn symmetrized_field_inverts_to_real() {
        let n = 9;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let raw = ComplexField::from_fn(n, |_| Complex64::new(rng.random(), rng.random()));
        let sym = ComplexField::from_fn(n, |(u, v)| {
            (raw.values()[[u, v]] + raw.values()[[mirror(u, n), mirror(v, n)]].conj()) * 0.5
        });
        assert!(ifft2(&sym).max_abs_imag() < 1e-10);
    }

    #[test]
    fn decompose_known_value() {
        let f = ComplexField::from_fn(1, |_| Complex64::new(3.0, 4.0));
        let (m, p) = decompose(&f);
        assert_eq!(m.values()[[0, 0]], 5.0);
        assert_eq!(p.values()[[0, 0]], 4f64.atan2(3.0));
    }

    #[test]
    fn decompose_zero_and_positive_real() {
        let f = ComplexField::from_fn(3, |(r, _)| Complex64::new(r as f64, 0.0));
        let (_, p) = decompose(&f);
        assert!(p.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn compose_ones_and_shape_mismatch() {
        let m = Magnitude::new(Array2::ones((4, 4))).unwrap();
        let p = Phase::new(Array2::zeros((4, 4))).unwrap();
        let f = compose(&m, &p).unwrap();
        assert!(f.values().iter().all(|&v| v == Complex64::new(1.0, 0.0)));
        let small = Phase::new(Array2::zeros((3, 3))).unwrap();
        assert!(matches!(compose(&m, &small), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn compose_of_own_decomposition_recovers_image() {
        let x = random_image(28, 5);
        let (m, p) = decompose(&fft2_image(&x));
        let back = ifft2(&compose(&m, &p).unwrap());
        for (a, b) in back.values().iter().zip(x.as_slice()) {
            assert!((a.re - b).abs() < 1e-10 && a.im.abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_non_square_and_non_finite() {
        assert!(Image::new(Array2::zeros((3, 4))).is_err());
        assert!(Image::new(Array2::from_elem((2, 2), f64::NAN)).is_err());
        assert!(ComplexField::new(Array2::from_elem((2, 3), Complex64::default())).is_err());
    }

    #[test]
    fn shift_and_rotation_helpers() {
        let x = random_image(5, 1);
        let s = x.circular_shift(2, 3);
        assert_eq!(s.get(2, 3), x.get(0, 0));
        assert_eq!(s.get(0, 0), x.get(3, 2));
        assert_eq!(x.rotate180().rotate180(), x);
        assert_eq!(x.rotate180().get(0, 0), x.get(4, 4));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn inverse_pair(seed in any::<u64>(), n in 1usize..30) {
            let x = random_image(n, seed);
            let back = ifft2(&fft2_image(&x));
            for (a, b) in back.values().iter().zip(x.as_slice()) {
                prop_assert!((a.re - b).abs() < 1e-10 && a.im.abs() < 1e-10);
            }
        }

        #[test]
        fn conjugate_symmetry_of_real_input(seed in any::<u64>(), n in 1usize..20) {
            let f = fft2_image(&random_image(n, seed));
            for ((u, v), val) in f.values().indexed_iter() {
                let partner = f.values()[[mirror(u, n), mirror(v, n)]];
                prop_assert!((val - partner.conj()).norm() < 1e-10);
            }
        }

        #[test]
        fn linearity(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let x = random_image(12, seed);
            let y = random_image(12, seed ^ 0xdead_beef);
            let combo = Image::from_fn(12, |(r, c)| a * x.get(r, c) + b * y.get(r, c));
            let lhs = fft2_image(&combo);
            let fx = fft2_image(&x);
            let fy = fft2_image(&y);
            for ((l, p), q) in lhs.values().iter().zip(fx.values()).zip(fy.values()) {
                prop_assert!((l - (p * a + q * b)).norm() < 1e-10);
            }
        }

        #[test]
        fn decompose_compose_roundtrip(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = ComplexField::from_fn(6, |_| Complex64::new(rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)));
            let (m, p) = decompose(&f);
            prop_assert!(m.values().iter().all(|&v| v >= 0.0));
            prop_assert!(p.values().iter().all(|&v| v.abs() <= PI));
            let g = compose(&m, &p).unwrap();
            for (a, b) in f.values().iter().zip(g.values()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }
    }
}
