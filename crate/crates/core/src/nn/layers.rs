use ndarray::{Array1, Array2, Axis, Zip};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::Scalar;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
}

/// Fully connected layer, `y = x · weight + bias` with `weight` of shape `(d_in, d_out)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub momentum: f64,
    pub eps: f64,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(dim: usize) -> Self {
        BatchNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
            running_mean: Array1::zeros(dim),
            running_var: Array1::ones(dim),
            momentum: 0.1,
            eps: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Dense(Dense<T>),
    BatchNorm(BatchNorm<T>),
    Dropout { rate: f64 },
    Activation(Activation),
}

/// Serializable layer description used by checkpoints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerKind {
    Dense { d_in: usize, d_out: usize },
    BatchNorm { dim: usize, momentum: f64, eps: f64 },
    Dropout { rate: f64 },
    Activation { activation: Activation },
}

impl<T: Scalar> Layer<T> {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Dense(d) => LayerKind::Dense {
                d_in: d.weight.nrows(),
                d_out: d.weight.ncols(),
            },
            Layer::BatchNorm(bn) => LayerKind::BatchNorm {
                dim: bn.gamma.len(),
                momentum: bn.momentum,
                eps: bn.eps,
            },
            Layer::Dropout { rate } => LayerKind::Dropout { rate: *rate },
            Layer::Activation(a) => LayerKind::Activation { activation: *a },
        }
    }

    /// `(input dim, output dim)`; `None` for shape-preserving layers without parameters.
    fn dims(&self) -> Option<(usize, usize)> {
        match self {
            Layer::Dense(d) => Some((d.weight.nrows(), d.weight.ncols())),
            Layer::BatchNorm(bn) => Some((bn.gamma.len(), bn.gamma.len())),
            _ => None,
        }
    }
}

/// Forward mode. Training draws dropout masks from the supplied generator and
/// normalizes with batch statistics; inference is deterministic.
pub enum Mode<'a> {
    Train(&'a mut dyn RngCore),
    Infer,
}

enum LayerCache<T> {
    Dense { input: Array2<T> },
    BatchNorm { xhat: Array2<T>, inv_std: Array1<T> },
    Dropout { mask: Option<Array2<T>> },
    Relu { output: Array2<T> },
    Sigmoid { output: Array2<T> },
}

/// Output of a forward pass plus what backpropagation needs.
pub struct ForwardPass<T> {
    pub output: Array2<T>,
    cache: Vec<LayerCache<T>>,
    version: u64,
    trained: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamGrads<T> {
    Dense { weight: Array2<T>, bias: Array1<T> },
    BatchNorm { gamma: Array1<T>, beta: Array1<T> },
}

pub struct Backward<T> {
    /// One entry per layer, `None` for layers without parameters.
    pub grads: Vec<Option<ParamGrads<T>>>,
    pub grad_input: Option<Array2<T>>,
}

impl<T: Scalar> Backward<T> {
    /// Gradients flattened in the same order as [`DenseNet::params_mut`].
    pub fn flat(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for g in self.grads.iter().flatten() {
            match g {
                ParamGrads::Dense { weight, bias } => {
                    out.push(weight.as_slice().expect("standard layout"));
                    out.push(bias.as_slice().expect("standard layout"));
                }
                ParamGrads::BatchNorm { gamma, beta } => {
                    out.push(gamma.as_slice().expect("standard layout"));
                    out.push(beta.as_slice().expect("standard layout"));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct DenseNet<T> {
    layers: Vec<Layer<T>>,
    /// Bumped on every parameter mutation so stale caches can be detected.
    version: u64,
}

/// Equal layers; the cache version is bookkeeping and is ignored.
impl<T: PartialEq> PartialEq for DenseNet<T> {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

fn uniform_matrix<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, scale: f64, rng: &mut R) -> Array2<T> {
    Array2::from_shape_simple_fn((rows, cols), || T::from_f64_lossy(rng.random_range(-scale..scale)))
}

impl<T: Scalar> DenseNet<T> {
    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        let mut width: Option<usize> = None;
        for (i, layer) in layers.iter().enumerate() {
            if let Some((d_in, d_out)) = layer.dims() {
                if let Some(w) = width {
                    if w != d_in {
                        return Err(Error::DimensionInconsistency(format!(
                            "layer {i} expects {d_in} inputs but the previous layer produces {w}"
                        )));
                    }
                }
                width = Some(d_out);
            }
            if let Layer::Dense(d) = layer {
                if d.bias.len() != d.weight.ncols() {
                    return Err(Error::DimensionInconsistency(format!(
                        "layer {i}: bias length {} does not match {} outputs",
                        d.bias.len(),
                        d.weight.ncols()
                    )));
                }
            }
            if let Layer::BatchNorm(bn) = layer {
                let dim = bn.gamma.len();
                if [bn.beta.len(), bn.running_mean.len(), bn.running_var.len()] != [dim; 3] {
                    return Err(Error::DimensionInconsistency(format!(
                        "layer {i}: batchnorm arrays disagree in length"
                    )));
                }
                if bn.running_var.iter().any(|v| !(*v > T::zero())) {
                    return Err(Error::DimensionInconsistency(format!(
                        "layer {i}: batchnorm running variance must be positive"
                    )));
                }
            }
            if let Layer::Dropout { rate } = layer {
                if !(0.0..1.0).contains(rate) {
                    return Err(Error::InvalidInput(format!("dropout rate {rate} outside [0, 1)")));
                }
            }
        }
        if width.is_none() {
            return Err(Error::InvalidInput("network needs at least one dense layer".into()));
        }
        Ok(DenseNet { layers, version: 0 })
    }

    /// `hidden.len()` blocks of dense → batchnorm → ReLU → dropout, then
    /// dense → sigmoid. ReLU-fed weights are uniform in `±√(6/fan_in)`, the
    /// output layer in `±√(6/(fan_in+fan_out))`; biases start at zero.
    pub fn mlp<R: Rng + ?Sized>(
        input: usize,
        hidden: &[usize],
        output: usize,
        dropout: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut layers = Vec::with_capacity(4 * hidden.len() + 2);
        let mut fan_in = input;
        for &width in hidden {
            layers.push(Layer::Dense(Dense {
                weight: uniform_matrix(fan_in, width, (6.0 / fan_in as f64).sqrt(), rng),
                bias: Array1::zeros(width),
            }));
            layers.push(Layer::BatchNorm(BatchNorm::new(width)));
            layers.push(Layer::Activation(Activation::Relu));
            layers.push(Layer::Dropout { rate: dropout });
            fan_in = width;
        }
        layers.push(Layer::Dense(Dense {
            weight: uniform_matrix(fan_in, output, (6.0 / (fan_in + output) as f64).sqrt(), rng),
            bias: Array1::zeros(output),
        }));
        layers.push(Layer::Activation(Activation::Sigmoid));
        DenseNet::from_layers(layers)
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Mutable access to the layers; invalidates outstanding forward caches.
    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.version += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers.iter().find_map(Layer::dims).map(|d| d.0).expect("validated")
    }

    pub fn output_dim(&self) -> usize {
        self.layers.iter().rev().find_map(Layer::dims).map(|d| d.1).expect("validated")
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Trainable parameters: (weight, bias) per dense layer and (gamma, beta)
    /// per batchnorm, in layer order.
    pub fn params(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice().expect("standard layout"));
                    out.push(d.bias.as_slice().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_slice().expect("standard layout"));
                    out.push(bn.beta.as_slice().expect("standard layout"));
                }
                _ => {}
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        self.version += 1;
        let mut out = Vec::new();
        for layer in &mut self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.push(d.weight.as_slice_mut().expect("standard layout"));
                    out.push(d.bias.as_slice_mut().expect("standard layout"));
                }
                Layer::BatchNorm(bn) => {
                    out.push(bn.gamma.as_slice_mut().expect("standard layout"));
                    out.push(bn.beta.as_slice_mut().expect("standard layout"));
                }
                _ => {}
            }
        }
        out
    }

    fn check_input(&self, input: &Array2<T>) -> Result<()> {
        if input.ncols() != self.input_dim() || input.nrows() == 0 {
            return Err(Error::shape(
                format!("(batch >= 1, {})", self.input_dim()),
                format!("{:?}", input.dim()),
            ));
        }
        Ok(())
    }

    pub fn forward(&mut self, input: &Array2<T>, mode: Mode<'_>) -> Result<ForwardPass<T>> {
        match mode {
            Mode::Train(rng) => self.forward_train(input, rng),
            Mode::Infer => Ok(ForwardPass {
                output: self.forward_infer(input)?,
                cache: Vec::new(),
                version: self.version,
                trained: false,
            }),
        }
    }

    /// Inference: no dropout, batchnorm with running statistics. Row `i` of the
    /// output depends only on row `i` of the input.
    pub fn forward_infer(&self, input: &Array2<T>) -> Result<Array2<T>> {
        self.check_input(input)?;
        let mut x = input.to_owned();
        for layer in &self.layers {
            x = match layer {
                Layer::Dense(d) => x.dot(&d.weight) + &d.bias,
                Layer::BatchNorm(bn) => {
                    let eps = T::from_f64_lossy(bn.eps);
                    let scale = Zip::from(&bn.gamma)
                        .and(&bn.running_var)
                        .map_collect(|&g, &v| g / (v + eps).sqrt());
                    let shift = Zip::from(&bn.beta)
                        .and(&bn.running_mean)
                        .and(&scale)
                        .map_collect(|&b, &m, &s| b - m * s);
                    x * &scale + &shift
                }
                Layer::Dropout { .. } => x,
                Layer::Activation(Activation::Relu) => x.mapv_into(|v| v.max(T::zero())),
                Layer::Activation(Activation::Sigmoid) => x.mapv_into(sigmoid),
            };
        }
        Ok(x)
    }

    /// Training-mode forward pass. Updates batchnorm running statistics.
    pub fn forward_train<R: RngCore + ?Sized>(&mut self, input: &Array2<T>, rng: &mut R) -> Result<ForwardPass<T>> {
        self.check_input(input)?;
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut x = input.to_owned();
        for layer in &mut self.layers {
            x = match layer {
                Layer::Dense(d) => {
                    let y = x.dot(&d.weight) + &d.bias;
                    cache.push(LayerCache::Dense { input: x });
                    y
                }
                Layer::BatchNorm(bn) => {
                    let (y, xhat, inv_std) = batchnorm_train(bn, &x);
                    cache.push(LayerCache::BatchNorm { xhat, inv_std });
                    y
                }
                Layer::Dropout { rate } => {
                    if *rate > 0.0 {
                        let keep = 1.0 - *rate;
                        let scale = T::from_f64_lossy(1.0 / keep);
                        // keep with probability `keep`, to 2^-32 resolution
                        let threshold = (keep * 4_294_967_296.0) as u64;
                        let mask = Array2::from_shape_simple_fn(x.dim(), || {
                            if u64::from(rng.next_u32()) < threshold {
                                scale
                            } else {
                                T::zero()
                            }
                        });
                        let y = &x * &mask;
                        cache.push(LayerCache::Dropout { mask: Some(mask) });
                        y
                    } else {
                        cache.push(LayerCache::Dropout { mask: None });
                        x
                    }
                }
                Layer::Activation(Activation::Relu) => {
                    let y = x.mapv_into(|v| v.max(T::zero()));
                    cache.push(LayerCache::Relu { output: y.clone() });
                    y
                }
                Layer::Activation(Activation::Sigmoid) => {
                    let y = x.mapv_into(sigmoid);
                    cache.push(LayerCache::Sigmoid { output: y.clone() });
                    y
                }
            };
        }
        Ok(ForwardPass {
            output: x,
            cache,
            version: self.version,
            trained: true,
        })
    }

    /// Gradients of a scalar loss with respect to every parameter and the input.
    pub fn backward(&self, pass: &ForwardPass<T>, grad_output: &Array2<T>) -> Result<Backward<T>> {
        self.backward_with(pass, grad_output, true)
    }

    /// As [`backward`](Self::backward); skips the input gradient when
    /// `want_input_grad` is false.
    pub fn backward_with(
        &self,
        pass: &ForwardPass<T>,
        grad_output: &Array2<T>,
        want_input_grad: bool,
    ) -> Result<Backward<T>> {
        if !pass.trained || pass.version != self.version || pass.cache.len() != self.layers.len() {
            return Err(Error::StaleCache);
        }
        if grad_output.dim() != pass.output.dim() {
            return Err(Error::shape(
                format!("{:?}", pass.output.dim()),
                format!("{:?}", grad_output.dim()),
            ));
        }
        let mut grads = vec![None; self.layers.len()];
        let mut g = grad_output.to_owned();
        let first_param = self.layers.iter().position(|l| l.dims().is_some()).expect("validated");
        for (i, (layer, cache)) in self.layers.iter().zip(&pass.cache).enumerate().rev() {
            let need_dx = want_input_grad || i > first_param;
            g = match (layer, cache) {
                (Layer::Dense(d), LayerCache::Dense { input }) => {
                    let weight = input.t().dot(&g);
                    let bias = g.sum_axis(Axis(0));
                    let dx = if need_dx { g.dot(&d.weight.t()) } else { Array2::zeros((0, 0)) };
                    grads[i] = Some(ParamGrads::Dense { weight, bias });
                    dx
                }
                (Layer::BatchNorm(bn), LayerCache::BatchNorm { xhat, inv_std }) => {
                    let gamma = (&g * xhat).sum_axis(Axis(0));
                    let beta = g.sum_axis(Axis(0));
                    let dx = if need_dx {
                        let b = T::from_usize(g.nrows()).expect("batch size fits");
                        let dxhat = &g * &bn.gamma;
                        let sum_dxhat = dxhat.sum_axis(Axis(0));
                        let sum_dxhat_xhat = (&dxhat * xhat).sum_axis(Axis(0));
                        let mut dx = dxhat * b - &sum_dxhat - &(xhat * &sum_dxhat_xhat);
                        dx *= &(inv_std / b);
                        dx
                    } else {
                        Array2::zeros((0, 0))
                    };
                    grads[i] = Some(ParamGrads::BatchNorm { gamma, beta });
                    dx
                }
                (Layer::Dropout { .. }, LayerCache::Dropout { mask }) => match mask {
                    Some(mask) => g * mask,
                    None => g,
                },
                (Layer::Activation(Activation::Relu), LayerCache::Relu { output }) => {
                    Zip::from(&mut g).and(output).for_each(|gv, &o| {
                        if o <= T::zero() {
                            *gv = T::zero();
                        }
                    });
                    g
                }
                (Layer::Activation(Activation::Sigmoid), LayerCache::Sigmoid { output }) => {
                    Zip::from(&mut g)
                        .and(output)
                        .for_each(|gv, &s| *gv = *gv * s * (T::one() - s));
                    g
                }
                _ => return Err(Error::StaleCache),
            };
            if !need_dx && i <= first_param {
                break;
            }
        }
        Ok(Backward {
            grads,
            grad_input: want_input_grad.then_some(g),
        })
    }
}

fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

fn batchnorm_train<T: Scalar>(bn: &mut BatchNorm<T>, x: &Array2<T>) -> (Array2<T>, Array2<T>, Array1<T>) {
    let b = x.nrows();
    let bt = T::from_usize(b).expect("batch size fits");
    let mean = x.sum_axis(Axis(0)) / bt;
    let centered = x - &mean;
    let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / bt;
    let eps = T::from_f64_lossy(bn.eps);
    let inv_std = var.mapv(|v| T::one() / (v + eps).sqrt());
    let xhat = centered * &inv_std;
    let y = &xhat * &bn.gamma + &bn.beta;

    let m = T::from_f64_lossy(bn.momentum);
    let unbias = if b > 1 {
        bt / (bt - T::one())
    } else {
        T::one()
    };
    Zip::from(&mut bn.running_mean)
        .and(&mean)
        .for_each(|r, &mu| *r = (T::one() - m) * *r + m * mu);
    Zip::from(&mut bn.running_var)
        .and(&var)
        .for_each(|r, &v| *r = (T::one() - m) * *r + m * v * unbias);
    (y, xhat, inv_std)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net_f64(seed: u64, dropout: f64) -> DenseNet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DenseNet::mlp(5, &[7, 6], 3, dropout, &mut rng).unwrap()
    }

    fn input(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_network_outputs_half() {
        let mut net = net_f64(0, 0.2);
        for p in net.params_mut() {
            p.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = net.forward_infer(&input(4, 5, 1)).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn single_dense_layer_hand_example() {
        let mut net = DenseNet::from_layers(vec![Layer::Dense(Dense {
            weight: array![[1.0, 0.0], [0.0, 2.0]],
            bias: array![0.5, -1.0],
        })])
        .unwrap();
        let out = net.forward(&array![[3.0, 4.0]], Mode::Infer).unwrap().output;
        assert_eq!(out, array![[3.5, 7.0]]);
    }

    #[test]
    fn dimension_checks() {
        let bad = DenseNet::<f64>::from_layers(vec![
            Layer::Dense(Dense { weight: Array2::zeros((3, 4)), bias: Array1::zeros(4) }),
            Layer::Dense(Dense { weight: Array2::zeros((5, 2)), bias: Array1::zeros(2) }),
        ]);
        assert!(matches!(bad, Err(Error::DimensionInconsistency(_))));
        let net = net_f64(0, 0.0);
        assert!(net.forward_infer(&input(2, 4, 0)).is_err());
    }

    #[test]
    fn infer_is_deterministic_and_row_local() {
        let net = net_f64(3, 0.5);
        let x = input(6, 5, 2);
        let a = net.forward_infer(&x).unwrap();
        assert_eq!(a, net.forward_infer(&x).unwrap());
        let rev = x.slice(ndarray::s![..;-1, ..]).to_owned();
        let b = net.forward_infer(&rev).unwrap();
        for i in 0..6 {
            assert_eq!(a.row(i), b.row(5 - i));
        }
        let single = net.forward_infer(&x.slice(ndarray::s![2..3, ..]).to_owned()).unwrap();
        assert_eq!(single.row(0), a.row(2));
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn batchnorm_standardizes_in_train_mode() {
        let mut bn = BatchNorm::<f64>::new(4);
        let x = input(32, 4, 9).mapv(|v| 3.0 * v + 2.0);
        let (_, xhat, _) = batchnorm_train(&mut bn, &x);
        for col in xhat.columns() {
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| (v - mean).powi(2)).mean().unwrap();
            assert!(mean.abs() < 1e-6);
            assert!((var - 1.0).abs() < 1e-4);
        }
        assert!(bn.running_mean.iter().all(|&m| m != 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let mut net = net_f64(1, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = net.forward_train(&input(4, 5, 1), &mut rng).unwrap();
        net.params_mut()[0][0] += 1.0;
        let g = Array2::ones(pass.output.dim());
        assert!(matches!(net.backward(&pass, &g), Err(Error::StaleCache)));
        let infer = net.forward(&input(4, 5, 1), Mode::Infer).unwrap();
        assert!(matches!(net.backward(&infer, &g), Err(Error::StaleCache)));
    }

    #[test]
    fn saturated_sigmoid_has_vanishing_gradient() {
        let mut net = DenseNet::from_layers(vec![
            Layer::Dense(Dense { weight: array![[0.0], [0.0]], bias: array![60.0] }),
            Layer::Activation(Activation::Sigmoid),
        ])
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pass = net.forward_train(&array![[1.0, -2.0]], &mut rng).unwrap();
        let back = net.backward(&pass, &array![[1.0]]).unwrap();
        for g in back.flat() {
            assert!(g.iter().all(|v: &f64| v.abs() < 1e-20));
        }
    }

    #[test]
    fn zero_dropout_matches_network_without_dropout() {
        let with = net_f64(4, 0.0);
        let layers: Vec<Layer<f64>> = with
            .layers()
            .iter()
            .filter(|l| !matches!(l, Layer::Dropout { .. }))
            .cloned()
            .collect();
        let mut without = DenseNet::from_layers(layers).unwrap();
        let mut with = with;
        let x = input(5, 5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pa = with.forward_train(&x, &mut rng).unwrap();
        let pb = without.forward_train(&x, &mut rng).unwrap();
        assert_eq!(pa.output, pb.output);
        let g = Array2::from_elem(pa.output.dim(), 0.3);
        let ga = with.backward(&pa, &g).unwrap();
        let gb = without.backward(&pb, &g).unwrap();
        assert_eq!(ga.flat(), gb.flat());
        assert_eq!(ga.grad_input, gb.grad_input);
    }

    #[test]
    fn skipping_input_gradient_keeps_parameter_gradients() {
        let mut net = net_f64(5, 0.3);
        let x = input(8, 5, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let pass = net.forward_train(&x, &mut rng).unwrap();
        let g = Array2::from_elem(pass.output.dim(), -0.2);
        let full = net.backward(&pass, &g).unwrap();
        let partial = net.backward_with(&pass, &g, false).unwrap();
        assert_eq!(full.flat(), partial.flat());
        assert!(partial.grad_input.is_none());
    }
}
