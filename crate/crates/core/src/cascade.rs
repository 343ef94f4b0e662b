//! Cascaded reconstruction network.
//!
//! A cascade is a chain of `q` dense networks. Stage 1 maps the normalized
//! Fourier magnitude to an `n_1 × n_1` image; stage `p > 1` receives the
//! magnitude concatenated with the stage `p − 1` reconstruction and predicts an
//! `n_p × n_p` image. Stages are trained one after another within every batch,
//! each with its own loss and optimizer, and no gradient crosses a stage
//! boundary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::{self, BatchPlan, DatasetName, ImageDataset};
use crate::error::{Error, Result};
use crate::measurement::measure;
use crate::nn::{loss, AdamConfig, AdamState, BatchNorm, Dense, DenseNet, Layer, LayerKind, LossKind};
use crate::numerics::{Image, Magnitude};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const TENSOR_MAGIC: &[u8; 8] = b"PFTENSOR";
const MANIFEST: &str = "manifest.json";
/// Rows per forward pass when running inference over many inputs.
const INFER_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeSpec {
    pub q: usize,
    /// Output side length of every stage; the last equals `input_size`.
    pub scales: Vec<usize>,
    /// Hidden width of every stage.
    pub widths: Vec<usize>,
    pub hidden_layers_per_stage: usize,
    pub loss_per_stage: Vec<LossKind>,
    /// Side length of the magnitude measurement.
    pub input_size: usize,
    pub dropout: f64,
}

impl CascadeSpec {
    /// Five stages at increasing resolution.
    pub fn cpr() -> Self {
        CascadeSpec::uniform_hidden(vec![7, 12, 17, 22, 28], vec![1136, 1336, 1536, 1736, 1936])
    }

    /// `q` stages, all at full resolution.
    pub fn cpr_fs(q: usize) -> Self {
        CascadeSpec::uniform_hidden(vec![28; q], vec![1936; q])
    }

    /// A single full-resolution stage.
    pub fn mlp() -> Self {
        CascadeSpec::cpr_fs(1)
    }

    fn uniform_hidden(scales: Vec<usize>, widths: Vec<usize>) -> Self {
        CascadeSpec {
            q: scales.len(),
            loss_per_stage: vec![LossKind::Mse; scales.len()],
            scales,
            widths,
            hidden_layers_per_stage: 3,
            input_size: 28,
            dropout: 0.2,
        }
    }

    /// Default loss wiring: MSE everywhere, except MAE at the last stage for
    /// Fashion-MNIST.
    pub fn with_dataset_losses(mut self, dataset: DatasetName) -> Self {
        self.loss_per_stage = vec![LossKind::Mse; self.q];
        if dataset == DatasetName::Fashion {
            if let Some(last) = self.loss_per_stage.last_mut() {
                *last = LossKind::Mae;
            }
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::DimensionInconsistency(msg));
        if self.q == 0 {
            return bad("a cascade needs at least one stage".into());
        }
        for (name, len) in [
            ("scales", self.scales.len()),
            ("widths", self.widths.len()),
            ("loss_per_stage", self.loss_per_stage.len()),
        ] {
            if len != self.q {
                return bad(format!("{name} has {len} entries for q = {}", self.q));
            }
        }
        if self.scales.windows(2).any(|w| w[0] > w[1]) {
            return bad(format!("scales must be non-decreasing: {:?}", self.scales));
        }
        if self.scales[0] == 0 || self.scales[self.q - 1] != self.input_size {
            return bad(format!(
                "scales {:?} must be positive and end at the input size {}",
                self.scales, self.input_size
            ));
        }
        if self.widths.contains(&0) || self.hidden_layers_per_stage == 0 {
            return bad("hidden widths and depth must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidInput(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Input width of stage `p` (0-based).
    pub fn stage_input_dim(&self, p: usize) -> usize {
        let n2 = self.input_size * self.input_size;
        if p == 0 {
            n2
        } else {
            n2 + self.scales[p - 1] * self.scales[p - 1]
        }
    }

    pub fn stage_output_dim(&self, p: usize) -> usize {
        self.scales[p] * self.scales[p]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub net: DenseNet<f32>,
    pub adam: AdamState<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeModel {
    pub spec: CascadeSpec,
    pub stages: Vec<Stage>,
    /// Completed training epochs.
    pub epoch: usize,
    pub seed: u64,
    /// Magnitudes are divided by this before entering any stage.
    pub normalization: f64,
}

impl CascadeModel {
    pub fn parameter_count(&self) -> usize {
        self.stages.iter().map(|s| s.net.parameter_count()).sum()
    }
}

/// Fresh model; stage `p` draws its weights from generator stream `p` of `seed`.
pub fn build_cascade(spec: CascadeSpec, seed: u64) -> Result<CascadeModel> {
    spec.validate()?;
    let mut stages = Vec::with_capacity(spec.q);
    for p in 0..spec.q {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(p as u64);
        let hidden = vec![spec.widths[p]; spec.hidden_layers_per_stage];
        let net = DenseNet::mlp(
            spec.stage_input_dim(p),
            &hidden,
            spec.stage_output_dim(p),
            spec.dropout,
            &mut rng,
        )?;
        let adam = AdamState::for_net(&net, AdamConfig::default());
        stages.push(Stage { net, adam });
    }
    Ok(CascadeModel {
        normalization: spec.input_size as f64,
        spec,
        stages,
        epoch: 0,
        seed,
    })
}

/// Nearest-neighbour downsampling with centre-aligned sampling: output pixel
/// `(r, c)` copies input pixel `(⌊(r + ½)·n/n_p⌋, ⌊(c + ½)·n/n_p⌋)`.
pub fn downsample_nn(x: &Image, n_p: usize) -> Result<Image> {
    let n = x.side();
    if n_p == 0 || n_p > n {
        return Err(Error::InvalidInput(format!("target side {n_p} outside 1..={n}")));
    }
    let src = |k: usize| (2 * k + 1) * n / (2 * n_p);
    Ok(Image::from_fn(n_p, |(r, c)| x.get(src(r), src(c))))
}

/// Stage-1 input rows: the flattened magnitude of every image divided by `normalization`.
pub fn magnitude_features(magnitudes: &[&Magnitude], normalization: f64) -> Array2<f32> {
    let d = magnitudes.first().map_or(0, |m| m.as_slice().len());
    let mut out = Array2::zeros((magnitudes.len(), d));
    for (mut row, m) in out.rows_mut().into_iter().zip(magnitudes) {
        for (o, &v) in row.iter_mut().zip(m.as_slice()) {
            *o = (v / normalization) as f32;
        }
    }
    out
}

/// Flattened images downsampled to `side`.
pub fn stage_targets(images: &[&Image], side: usize) -> Result<Array2<f32>> {
    let mut out = Array2::zeros((images.len(), side * side));
    for (mut row, x) in out.rows_mut().into_iter().zip(images) {
        let small = if x.side() == side { (*x).clone() } else { downsample_nn(x, side)? };
        for (o, &v) in row.iter_mut().zip(small.as_slice()) {
            *o = v as f32;
        }
    }
    Ok(out)
}

fn stage_input(omega: &Array2<f32>, prev: Option<&Array2<f32>>) -> Result<Array2<f32>> {
    match prev {
        None => Ok(omega.clone()),
        Some(prev) => {
            if prev.nrows() != omega.nrows() {
                return Err(Error::shape(
                    format!("{} rows", omega.nrows()),
                    format!("{} rows", prev.nrows()),
                ));
            }
            let d = omega.ncols();
            let mut x = Array2::zeros((omega.nrows(), d + prev.ncols()));
            x.slice_mut(s![.., ..d]).assign(omega);
            x.slice_mut(s![.., d..]).assign(prev);
            Ok(x)
        }
    }
}

/// One optimizer step on stage `p` alone. Returns the batch loss and the
/// stage's train-mode output, computed before the update.
pub fn train_stage_step(
    model: &mut CascadeModel,
    p: usize,
    omega: &Array2<f32>,
    prev: Option<&Array2<f32>>,
    target: &Array2<f32>,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, Array2<f32>)> {
    if p >= model.spec.q {
        return Err(Error::InvalidInput(format!("stage {p} out of range for q = {}", model.spec.q)));
    }
    let kind = model.spec.loss_per_stage[p];
    let epoch = model.epoch + 1;
    let input = stage_input(omega, prev)?;
    let stage = &mut model.stages[p];
    let pass = stage.net.forward_train(&input, rng)?;
    let (value, grad) = loss(kind, &pass.output, target)?;
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { epoch, stage: p + 1, value });
    }
    let back = stage.net.backward_with(&pass, &grad, false)?;
    stage.adam.step(&mut stage.net, &back)?;
    Ok((value, pass.output))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub val_fraction: f64,
    /// Replaces `CascadeSpec::loss_per_stage` when set.
    pub loss_override: Option<Vec<LossKind>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-4,
            seed: 0,
            val_fraction: 0.1,
            loss_override: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, q: usize) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if let Some(l) = &self.loss_override {
            if l.len() != q {
                return Err(Error::DimensionInconsistency(format!(
                    "{} loss overrides for {q} stages",
                    l.len()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss of every stage over the epoch's batches.
    pub train_loss: Vec<f64>,
    /// Unregistered MSE of every stage against its downsampled validation targets.
    pub val_mse: Vec<f64>,
    pub seconds: f64,
}

/// Train for `config.epochs` further epochs. A seeded `val_fraction` of
/// `data` is held out for validation; `on_epoch` runs after every epoch.
pub fn train_cascade(
    model: &mut CascadeModel,
    data: &ImageDataset,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&CascadeModel, &EpochRecord) -> Result<()>,
) -> Result<Vec<EpochRecord>> {
    config.validate(model.spec.q)?;
    if let Some(bad) = data.images.iter().find(|x| x.side() != model.spec.input_size) {
        return Err(Error::shape(
            format!("{0}x{0} images", model.spec.input_size),
            format!("{0}x{0}", bad.side()),
        ));
    }
    if let Some(l) = &config.loss_override {
        model.spec.loss_per_stage = l.clone();
    }
    for stage in &mut model.stages {
        stage.adam.config.learning_rate = config.learning_rate;
    }
    let (train, val) = data_io::split(data, config.val_fraction, config.seed)?;
    if train.is_empty() {
        return Err(Error::InvalidInput("no training images after the validation split".into()));
    }
    let train_mags: Vec<Magnitude> = train.images.iter().map(measure).collect();
    let plan = BatchPlan {
        batch_size: config.batch_size,
        seed: config.seed,
    };

    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let started = Instant::now();
        let epoch = model.epoch + 1;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_d80f);
        rng.set_stream(epoch as u64);
        let mut sums = vec![0.0; model.spec.q];
        let batches = plan.batches(train.len(), epoch)?;
        for idx in &batches {
            let images: Vec<&Image> = idx.iter().map(|&i| &train.images[i]).collect();
            let mags: Vec<&Magnitude> = idx.iter().map(|&i| &train_mags[i]).collect();
            let omega = magnitude_features(&mags, model.normalization);
            let mut prev: Option<Array2<f32>> = None;
            for p in 0..model.spec.q {
                let target = stage_targets(&images, model.spec.scales[p])?;
                let (value, out) = train_stage_step(model, p, &omega, prev.as_ref(), &target, &mut rng)?;
                sums[p] += value;
                prev = Some(out);
            }
        }
        model.epoch = epoch;
        let record = EpochRecord {
            epoch,
            train_loss: sums.iter().map(|s| s / batches.len() as f64).collect(),
            val_mse: validation_mse(model, &val)?,
            seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(model, &record)?;
        history.push(record);
    }
    Ok(history)
}

fn validation_mse(model: &CascadeModel, val: &ImageDataset) -> Result<Vec<f64>> {
    let q = model.spec.q;
    if val.is_empty() {
        return Ok(vec![f64::NAN; q]);
    }
    let mut sums = vec![0.0f64; q];
    for chunk in val.images.chunks(INFER_CHUNK) {
        let images: Vec<&Image> = chunk.iter().collect();
        let mags: Vec<Magnitude> = chunk.iter().map(measure).collect();
        let outputs = forward_chain(model, &mags.iter().collect::<Vec<_>>())?;
        for (p, out) in outputs.iter().enumerate() {
            let target = stage_targets(&images, model.spec.scales[p])?;
            let sq: f64 = out
                .iter()
                .zip(&target)
                .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
                .sum();
            sums[p] += sq / out.ncols() as f64;
        }
    }
    Ok(sums.into_iter().map(|s| s / val.len() as f64).collect())
}

/// Inference-mode outputs of every stage for a batch of magnitudes.
fn forward_chain(model: &CascadeModel, magnitudes: &[&Magnitude]) -> Result<Vec<Array2<f32>>> {
    let n = model.spec.input_size;
    if let Some(bad) = magnitudes.iter().find(|m| m.side() != n) {
        return Err(Error::shape(format!("{n}x{n} magnitude"), format!("{0}x{0}", bad.side())));
    }
    let omega = magnitude_features(magnitudes, model.normalization);
    let mut outputs: Vec<Array2<f32>> = Vec::with_capacity(model.spec.q);
    for stage in &model.stages {
        let input = stage_input(&omega, outputs.last())?;
        outputs.push(stage.net.forward_infer(&input)?);
    }
    Ok(outputs)
}

fn row_image(row: ndarray::ArrayView1<'_, f32>, side: usize) -> Image {
    Image::from_vec(side, row.iter().map(|&v| v as f64).collect()).expect("row length is side²")
}

/// Reconstructions of every stage for one magnitude; the last entry is the
/// final `n × n` estimate.
pub fn reconstruct(model: &CascadeModel, omega: &Magnitude) -> Result<Vec<Image>> {
    let outputs = forward_chain(model, &[omega])?;
    Ok(outputs
        .iter()
        .zip(&model.spec.scales)
        .map(|(out, &side)| row_image(out.row(0), side))
        .collect())
}

/// Final reconstructions for many magnitudes, evaluated in chunks.
pub fn reconstruct_batch(model: &CascadeModel, magnitudes: &[Magnitude]) -> Result<Vec<Image>> {
    let side = model.spec.input_size;
    let mut out = Vec::with_capacity(magnitudes.len());
    for chunk in magnitudes.chunks(INFER_CHUNK) {
        let refs: Vec<&Magnitude> = chunk.iter().collect();
        let outputs = forward_chain(model, &refs)?;
        let last = outputs.last().expect("q >= 1");
        out.extend(last.rows().into_iter().map(|r| row_image(r, side)));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct StageManifest {
    layers: Vec<LayerKind>,
    adam_t: u64,
    adam: AdamConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    spec: CascadeSpec,
    epoch: usize,
    seed: u64,
    normalization: f64,
    stages: Vec<StageManifest>,
}

/// Names of the trainable arrays of a layer, in parameter-slot order.
fn param_names(kind: &LayerKind) -> &'static [&'static str] {
    match kind {
        LayerKind::Dense { .. } => &["weight", "bias"],
        LayerKind::BatchNorm { .. } => &["gamma", "beta"],
        _ => &[],
    }
}

fn tensor_name(p: usize, layer: usize, name: &str) -> String {
    format!("stage{}.{layer}.{name}.bin", p + 1)
}

fn write_tensor(path: &Path, dims: &[usize], data: &[f32]) -> Result<()> {
    debug_assert_eq!(dims.iter().product::<usize>(), data.len());
    let mut buf = Vec::with_capacity(8 + 4 * (1 + dims.len() + data.len()));
    buf.extend_from_slice(TENSOR_MAGIC);
    buf.extend_from_slice(&(dims.len() as u32).to_le_bytes());
    for &d in dims {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

fn read_tensor(path: &Path, dims: &[usize]) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let truncated = |detail: &str| Error::Truncated {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if bytes.len() < 12 {
        return Err(truncated("missing header"));
    }
    if &bytes[..8] != TENSOR_MAGIC {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            detail: "bad tensor magic".into(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let rank = word(8);
    let header = 12 + 4 * rank;
    if bytes.len() < header {
        return Err(truncated("missing dimensions"));
    }
    let found: Vec<usize> = (0..rank).map(|i| word(12 + 4 * i)).collect();
    if found != dims {
        return Err(Error::DimensionInconsistency(format!(
            "{} holds {found:?}, manifest implies {dims:?}",
            path.display()
        )));
    }
    let count: usize = found.iter().product();
    if bytes.len() != header + 4 * count {
        return Err(truncated(&format!(
            "expected {} payload bytes, found {}",
            4 * count,
            bytes.len() - header
        )));
    }
    Ok(bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

fn layer_dims(kind: &LayerKind) -> Vec<Vec<usize>> {
    match *kind {
        LayerKind::Dense { d_in, d_out } => vec![vec![d_in, d_out], vec![d_out]],
        LayerKind::BatchNorm { dim, .. } => vec![vec![dim]; 2],
        _ => Vec::new(),
    }
}

/// Write `model` into directory `dir` (created if needed).
pub fn save_checkpoint(model: &CascadeModel, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut stages = Vec::with_capacity(model.stages.len());
    for (p, stage) in model.stages.iter().enumerate() {
        let kinds: Vec<LayerKind> = stage.net.layers().iter().map(Layer::kind).collect();
        let mut slot = 0;
        for (i, (layer, kind)) in stage.net.layers().iter().zip(&kinds).enumerate() {
            let params = match layer {
                Layer::Dense(d) => vec![
                    d.weight.as_slice().expect("standard layout"),
                    d.bias.as_slice().expect("standard layout"),
                ],
                Layer::BatchNorm(bn) => {
                    let dims = [bn.gamma.len()];
                    write_tensor(&dir.join(tensor_name(p, i, "running_mean")), &dims, bn.running_mean.as_slice().expect("standard layout"))?;
                    write_tensor(&dir.join(tensor_name(p, i, "running_var")), &dims, bn.running_var.as_slice().expect("standard layout"))?;
                    vec![
                        bn.gamma.as_slice().expect("standard layout"),
                        bn.beta.as_slice().expect("standard layout"),
                    ]
                }
                _ => Vec::new(),
            };
            for ((name, data), dims) in param_names(kind).iter().zip(params).zip(layer_dims(kind)) {
                write_tensor(&dir.join(tensor_name(p, i, name)), &dims, data)?;
                let m_name = format!("{name}.adam_m");
                let v_name = format!("{name}.adam_v");
                write_tensor(&dir.join(tensor_name(p, i, &m_name)), &dims, &stage.adam.m[slot])?;
                write_tensor(&dir.join(tensor_name(p, i, &v_name)), &dims, &stage.adam.v[slot])?;
                slot += 1;
            }
        }
        stages.push(StageManifest {
            layers: kinds,
            adam_t: stage.adam.t,
            adam: stage.adam.config,
        });
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        spec: model.spec.clone(),
        epoch: model.epoch,
        seed: model.seed,
        normalization: model.normalization,
        stages,
    };
    let path = dir.join(MANIFEST);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Read a checkpoint directory written by [`save_checkpoint`].
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<CascadeModel> {
    let dir = dir.as_ref();
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Corrupt {
        path: path.clone(),
        detail: "missing format_version".into(),
    })?;
    if found != CHECKPOINT_FORMAT_VERSION as u64 {
        return Err(Error::VersionMismatch {
            found: found as u32,
            expected: CHECKPOINT_FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(value).map_err(|e| Error::Json {
        path: path.clone(),
        source: e,
    })?;
    manifest.spec.validate()?;
    if manifest.stages.len() != manifest.spec.q {
        return Err(Error::DimensionInconsistency(format!(
            "manifest lists {} stages for q = {}",
            manifest.stages.len(),
            manifest.spec.q
        )));
    }

    let mut stages = Vec::with_capacity(manifest.spec.q);
    for (p, sm) in manifest.stages.iter().enumerate() {
        let mut layers = Vec::with_capacity(sm.layers.len());
        let mut m = Vec::new();
        let mut v = Vec::new();
        for (i, kind) in sm.layers.iter().enumerate() {
            let mut arrays = Vec::new();
            for (name, dims) in param_names(kind).iter().zip(layer_dims(kind)) {
                arrays.push((read_tensor(&dir.join(tensor_name(p, i, name)), &dims)?, dims.clone()));
                m.push(read_tensor(&dir.join(tensor_name(p, i, &format!("{name}.adam_m"))), &dims)?);
                v.push(read_tensor(&dir.join(tensor_name(p, i, &format!("{name}.adam_v"))), &dims)?);
            }
            let layer = match *kind {
                LayerKind::Dense { d_in, d_out } => {
                    let mut it = arrays.into_iter();
                    let (w, _) = it.next().expect("two arrays");
                    let (b, _) = it.next().expect("two arrays");
                    Layer::Dense(Dense {
                        weight: Array2::from_shape_vec((d_in, d_out), w).expect("dims checked"),
                        bias: Array1::from_vec(b),
                    })
                }
                LayerKind::BatchNorm { dim, momentum, eps } => {
                    let mut it = arrays.into_iter();
                    let (gamma, _) = it.next().expect("two arrays");
                    let (beta, _) = it.next().expect("two arrays");
                    let mean = read_tensor(&dir.join(tensor_name(p, i, "running_mean")), &[dim])?;
                    let var = read_tensor(&dir.join(tensor_name(p, i, "running_var")), &[dim])?;
                    Layer::BatchNorm(BatchNorm {
                        gamma: Array1::from_vec(gamma),
                        beta: Array1::from_vec(beta),
                        running_mean: Array1::from_vec(mean),
                        running_var: Array1::from_vec(var),
                        momentum,
                        eps,
                    })
                }
                LayerKind::Dropout { rate } => Layer::Dropout { rate },
                LayerKind::Activation { activation } => Layer::Activation(activation),
            };
            layers.push(layer);
        }
        let net = DenseNet::from_layers(layers)?;
        if net.input_dim() != manifest.spec.stage_input_dim(p) || net.output_dim() != manifest.spec.stage_output_dim(p) {
            return Err(Error::DimensionInconsistency(format!(
                "stage {} maps {} -> {}, spec requires {} -> {}",
                p + 1,
                net.input_dim(),
                net.output_dim(),
                manifest.spec.stage_input_dim(p),
                manifest.spec.stage_output_dim(p)
            )));
        }
        let adam = AdamState {
            config: sm.adam,
            t: sm.adam_t,
            m,
            v,
        };
        stages.push(Stage { net, adam });
    }
    Ok(CascadeModel {
        spec: manifest.spec,
        stages,
        epoch: manifest.epoch,
        seed: manifest.seed,
        normalization: manifest.normalization,
    })
}

/// Checkpoint directory for `epoch` under `root`.
pub fn epoch_dir(root: &Path, epoch: usize) -> PathBuf {
    root.join(format!("epoch{epoch:04}"))
}
