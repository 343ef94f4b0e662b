//! Dataset ingestion (IDX files as distributed for MNIST-family datasets),
//! deterministic splits and batching, and PNG / JSON / CSV output.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Read};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::EvalReport;
use crate::numerics::Image;

pub const IMAGE_SIDE: usize = 28;
const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    /// EMNIST, balanced split.
    Emnist,
    Fashion,
    Kmnist,
}

impl DatasetName {
    pub const ALL: [DatasetName; 4] = [
        DatasetName::Mnist,
        DatasetName::Emnist,
        DatasetName::Fashion,
        DatasetName::Kmnist,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Emnist => "emnist",
            DatasetName::Fashion => "fashion",
            DatasetName::Kmnist => "kmnist",
        }
    }

    /// Image file name (without `.gz`) for a split.
    pub fn file_name(self, split: Split) -> &'static str {
        match (self, split) {
            (DatasetName::Emnist, Split::Test) => "emnist-balanced-test-images-idx3-ubyte",
            (DatasetName::Emnist, _) => "emnist-balanced-train-images-idx3-ubyte",
            (_, Split::Test) => "t10k-images-idx3-ubyte",
            (_, _) => "train-images-idx3-ubyte",
        }
    }

    /// EMNIST stores glyphs transposed relative to the other datasets.
    pub fn stored_transposed(self) -> bool {
        self == DatasetName::Emnist
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mnist" => Ok(DatasetName::Mnist),
            "emnist" | "emnist-balanced" => Ok(DatasetName::Emnist),
            "fashion" | "fashion-mnist" | "fashionmnist" => Ok(DatasetName::Fashion),
            "kmnist" => Ok(DatasetName::Kmnist),
            other => Err(Error::InvalidInput(format!("unknown dataset '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImageDataset {
    pub name: String,
    pub split: Split,
    pub images: Vec<Image>,
}

impl ImageDataset {
    pub fn new(name: impl Into<String>, split: Split, images: Vec<Image>) -> Self {
        ImageDataset {
            name: name.into(),
            split,
            images,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// First `k` images after a seeded shuffle; `k == 0` or `k >= len` keeps everything
    /// (still shuffled, so `k` and `len` agree on the prefix).
    pub fn subset(&self, k: usize, seed: u64) -> ImageDataset {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let take = if k == 0 { self.len() } else { k.min(self.len()) };
        ImageDataset::new(
            self.name.clone(),
            self.split,
            order[..take].iter().map(|&i| self.images[i].clone()).collect(),
        )
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::Corrupt {
                path: path.to_path_buf(),
                detail: format!("gzip: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parse a (possibly gzip-compressed) IDX image file of 28×28 images,
/// scaling bytes to `[0, 1]`.
pub fn load_idx(path: impl AsRef<Path>) -> Result<Vec<Image>> {
    let path = path.as_ref();
    let bytes = read_all(path)?;
    let truncated = |detail: String| Error::Truncated {
        path: path.to_path_buf(),
        detail,
    };
    if bytes.len() < 4 {
        return Err(truncated("missing header".into()));
    }
    let magic = be_u32(&bytes, 0);
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
            found: magic,
        });
    }
    if bytes.len() < 16 {
        return Err(truncated("missing dimension header".into()));
    }
    let count = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    if rows != IMAGE_SIDE || cols != IMAGE_SIDE {
        return Err(Error::InvalidInput(format!(
            "{}: expected 28x28 images, found {rows}x{cols}",
            path.display()
        )));
    }
    let per_image = rows * cols;
    let needed = 16 + count * per_image;
    if bytes.len() < needed {
        return Err(truncated(format!(
            "header announces {count} images ({needed} bytes), file has {}",
            bytes.len()
        )));
    }
    bytes[16..needed]
        .chunks_exact(per_image)
        .map(|chunk| Image::from_vec(IMAGE_SIDE, chunk.iter().map(|&b| f64::from(b) / 255.0).collect()))
        .collect()
}

/// Environment variable naming the dataset root directory.
pub const DATA_ROOT_ENV: &str = "PHASERET_DATA_ROOT";

/// `$PHASERET_DATA_ROOT` if set, otherwise `data/` at the workspace root.
pub fn default_data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// Locate `<root>/<dataset>/<file>[.gz]`.
pub fn dataset_path(root: &Path, name: DatasetName, split: Split) -> Result<PathBuf> {
    let base = root.join(name.as_str()).join(name.file_name(split));
    let gz = base.with_file_name(format!("{}.gz", name.file_name(split)));
    [gz, base.clone()]
        .into_iter()
        .find(|p| p.is_file())
        .ok_or_else(|| {
            Error::io(
                base,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
            )
        })
}

/// Load the train or test images of a dataset; EMNIST glyphs are transposed
/// upright on load.
pub fn load_dataset(root: &Path, name: DatasetName, split: Split) -> Result<ImageDataset> {
    let path = dataset_path(root, name, split)?;
    let mut images = load_idx(&path)?;
    if name.stored_transposed() {
        images = images.iter().map(Image::transpose).collect();
    }
    Ok(ImageDataset::new(name.as_str(), split, images))
}

/// Seeded partition into (train, validation); the validation part holds
/// `round(val_fraction * len)` images.
pub fn split(dataset: &ImageDataset, val_fraction: f64, seed: u64) -> Result<(ImageDataset, ImageDataset)> {
    if !(0.0..1.0).contains(&val_fraction) {
        return Err(Error::InvalidInput(format!(
            "validation fraction must lie in [0, 1), got {val_fraction}"
        )));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (val_fraction * dataset.len() as f64).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| dataset.images[i].clone()).collect();
    Ok((
        ImageDataset::new(dataset.name.clone(), Split::Train, pick(&order[n_val..])),
        ImageDataset::new(dataset.name.clone(), Split::Val, pick(&order[..n_val])),
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    /// Permutation of `0..len` for `epoch`, drawn from its own generator stream.
    pub fn epoch_order(&self, len: usize, epoch: usize) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(epoch as u64);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        order
    }

    /// Index batches for one epoch; the final short batch is kept.
    pub fn batches(&self, len: usize, epoch: usize) -> Result<Vec<Vec<usize>>> {
        if self.batch_size == 0 {
            return Err(Error::InvalidInput("batch size must be at least 1".into()));
        }
        Ok(self
            .epoch_order(len, epoch)
            .chunks(self.batch_size)
            .map(<[usize]>::to_vec)
            .collect())
    }
}

/// Image batches of `dataset` for one epoch.
pub fn batches<'a>(dataset: &'a ImageDataset, plan: &BatchPlan, epoch: usize) -> Result<Vec<Vec<&'a Image>>> {
    Ok(plan
        .batches(dataset.len(), epoch)?
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| &dataset.images[i]).collect())
        .collect())
}

/// Tile same-size images into an 8-bit grayscale PNG, `cols` per row.
/// Pixels are clamped to `[0, 1]` and scaled to `0..=255`.
pub fn write_image_grid(images: &[Image], cols: usize, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let Some(first) = images.first() else {
        return Err(Error::InvalidInput("no images to write".into()));
    };
    let n = first.side();
    if images.iter().any(|im| im.side() != n) {
        return Err(Error::InvalidInput("grid images must share one size".into()));
    }
    let cols = cols.clamp(1, images.len());
    let rows = images.len().div_ceil(cols);
    let (width, height) = (cols * n, rows * n);
    let mut buf = vec![0u8; width * height];
    for (k, im) in images.iter().enumerate() {
        let (gr, gc) = (k / cols, k % cols);
        for ((r, c), &v) in im.pixels().indexed_iter() {
            buf[(gr * n + r) * width + gc * n + c] = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| Error::Png {
        path: path.to_path_buf(),
        detail: e.to_string(),
    };
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&buf).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

pub const CSV_HEADER: [&str; 7] = ["method", "dataset", "mse", "mae", "ssim", "ci95_mse", "count"];

pub fn write_report_json(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(reports).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<Vec<EvalReport>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// One row per report: `method,dataset,mse,mae,ssim,ci95_mse,count`.
pub fn write_report_csv(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.write_record([
            r.method.clone(),
            r.dataset.clone(),
            r.mean_mse.to_string(),
            r.mean_mae.to_string(),
            r.mean_ssim.to_string(),
            r.ci95_mse.to_string(),
            r.count.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `report.json` and `report.csv` inside `dir`.
pub fn write_report(reports: &[EvalReport], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_report_json(reports, dir.join("report.json"))?;
    write_report_csv(reports, dir.join("report.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::{evaluate, EvalReport};
    use std::io::Write;

    pub(crate) fn idx_bytes(magic: u32, images: &[Vec<u8>], side: u32) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&magic.to_be_bytes());
        out.extend_from_slice(&(images.len() as u32).to_be_bytes());
        out.extend_from_slice(&side.to_be_bytes());
        out.extend_from_slice(&side.to_be_bytes());
        for im in images {
            out.extend_from_slice(im);
        }
        out
    }

    fn fixture() -> Vec<Vec<u8>> {
        vec![
            (0..784).map(|i| (i % 256) as u8).collect(),
            (0..784).map(|i| 255 - (i % 251) as u8).collect(),
        ]
    }

    #[test]
    fn parses_handmade_fixture_plain_and_gzip() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = idx_bytes(IDX_IMAGE_MAGIC, &fixture(), 28);
        let plain = dir.path().join("a-idx3-ubyte");
        std::fs::write(&plain, &bytes).unwrap();
        let gz = dir.path().join("a-idx3-ubyte.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::default());
        enc.write_all(&bytes).unwrap();
        enc.finish().unwrap();

        for path in [plain, gz] {
            let images = load_idx(&path).unwrap();
            assert_eq!(images.len(), 2);
            for (j, im) in images.iter().enumerate() {
                for (i, &v) in im.as_slice().iter().enumerate() {
                    assert_eq!(v, f64::from(bytes[16 + j * 784 + i]) / 255.0);
                }
            }
        }
    }

    #[test]
    fn rejects_label_files_truncation_and_wrong_dims() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("labels");
        std::fs::write(&p, idx_bytes(0x0000_0801, &fixture(), 28)).unwrap();
        assert!(matches!(load_idx(&p), Err(Error::BadMagic { found: 0x801, .. })));

        let mut bytes = idx_bytes(IDX_IMAGE_MAGIC, &fixture(), 28);
        bytes.truncate(bytes.len() - 10);
        std::fs::write(&p, &bytes).unwrap();
        assert!(matches!(load_idx(&p), Err(Error::Truncated { .. })));

        std::fs::write(&p, idx_bytes(IDX_IMAGE_MAGIC, &[vec![0; 64]], 8)).unwrap();
        assert!(matches!(load_idx(&p), Err(Error::InvalidInput(_))));
        assert!(matches!(load_idx(dir.path().join("missing")), Err(Error::Io { .. })));
    }

    #[test]
    fn emnist_is_transposed_on_load() {
        let dir = tempfile::tempdir().unwrap();
        // an "L" stored transposed: a vertical bar in the stored rows becomes
        // a horizontal bar after loading
        let mut glyph = vec![0u8; 784];
        for c in 4..20 {
            glyph[5 * 28 + c] = 255;
        }
        for name in [DatasetName::Emnist, DatasetName::Mnist] {
            let sub = dir.path().join(name.as_str());
            std::fs::create_dir_all(&sub).unwrap();
            std::fs::write(sub.join(name.file_name(Split::Test)), idx_bytes(IDX_IMAGE_MAGIC, &[glyph.clone()], 28)).unwrap();
        }
        let e = load_dataset(dir.path(), DatasetName::Emnist, Split::Test).unwrap();
        let m = load_dataset(dir.path(), DatasetName::Mnist, Split::Test).unwrap();
        assert_eq!(m.images[0].get(5, 10), 1.0);
        assert_eq!(e.images[0].get(10, 5), 1.0);
        assert_eq!(e.images[0].get(5, 10), 0.0);
        assert_eq!(e.images[0], m.images[0].transpose());
    }

    fn dummy(len: usize) -> ImageDataset {
        ImageDataset::new(
            "dummy",
            Split::Train,
            (0..len).map(|k| Image::from_fn(2, |_| k as f64)).collect(),
        )
    }

    #[test]
    fn split_sizes_and_determinism() {
        let d = dummy(60);
        let (tr, va) = split(&d, 0.0, 1).unwrap();
        assert_eq!((tr.len(), va.len()), (60, 0));
        let (tr, va) = split(&d, 0.1, 1).unwrap();
        assert_eq!((tr.len(), va.len()), (54, 6));
        let (tr2, va2) = split(&d, 0.1, 1).unwrap();
        assert_eq!((tr.images.clone(), va.images.clone()), (tr2.images, va2.images));
        let mut all: Vec<f64> = tr.images.iter().chain(&va.images).map(|im| im.get(0, 0)).collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..60).map(|k| k as f64).collect::<Vec<_>>());
        assert!(split(&d, 1.0, 0).is_err());
        assert!(split(&d, -0.1, 0).is_err());
        // 60000 * 0.1
        assert_eq!((0.1f64 * 60000.0).round() as usize, 6000);
    }

    #[test]
    fn batching_covers_each_index_once() {
        let d = dummy(10);
        let plan = BatchPlan { batch_size: 10, seed: 3 };
        assert_eq!(batches(&d, &plan, 0).unwrap().len(), 1);
        let plan = BatchPlan { batch_size: 3, seed: 3 };
        let b = plan.batches(10, 0).unwrap();
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut flat: Vec<usize> = b.concat();
        flat.sort();
        assert_eq!(flat, (0..10).collect::<Vec<_>>());
        assert_ne!(plan.epoch_order(10, 1), plan.epoch_order(10, 2));
        assert!(BatchPlan { batch_size: 0, seed: 0 }.batches(3, 0).is_err());
    }

    #[test]
    fn png_grid_of_black_image() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.png");
        write_image_grid(&[Image::zeros(28)], 4, &path).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(File::open(&path).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (28, 28));
        assert_eq!(info.color_type, png::ColorType::Grayscale);
        assert!(buf[..info.buffer_size()].iter().all(|&b| b == 0));
    }

    #[test]
    fn report_roundtrip_and_csv_header() {
        let dir = tempfile::tempdir().unwrap();
        let a = Image::from_fn(12, |(r, c)| ((r * c) % 5) as f64 / 4.0);
        let b = Image::from_fn(12, |(r, c)| ((r + c) % 3) as f64 / 2.0);
        let rep: EvalReport = evaluate(&[a.clone(), b.clone()], &[b, a]).unwrap().labeled("hio", "mnist");
        write_report(std::slice::from_ref(&rep), dir.path()).unwrap();
        let back = read_report_json(dir.path().join("report.json")).unwrap();
        assert_eq!(back, vec![rep]);
        let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
        assert_eq!(csv.lines().next().unwrap(), "method,dataset,mse,mae,ssim,ci95_mse,count");
        assert!(csv.lines().nth(1).unwrap().starts_with("hio,mnist,"));
    }
}
