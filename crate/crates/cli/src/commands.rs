use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use phaseret::cascade::{
    build_cascade, epoch_dir, load_checkpoint, reconstruct, reconstruct_batch, save_checkpoint, train_cascade,
    CascadeModel, EpochRecord,
};
use phaseret::data_io::{load_dataset, write_image_grid, write_report, ImageDataset, Split};
use phaseret::evaluation::{evaluate, mse, register, EvalReport};
use phaseret::measurement::{corner_support, measure, pad_and_measure, swap_demo};
use phaseret::numerics::{Image, Magnitude, Phase};
use phaseret::solvers::{solve_with_restarts, SolverKind, SolverParams};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Method, RunConfig};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load(cfg: &RunConfig, split: Split, subset: usize) -> Result<ImageDataset> {
    let data = load_dataset(&cfg.data_root, cfg.dataset, split).with_context(|| {
        format!(
            "cannot load {} {:?} images from {} (see scripts/fetch_data.sh)",
            cfg.dataset,
            split,
            cfg.data_root.display()
        )
    })?;
    Ok(data.subset(subset, cfg.seed))
}

/// Originals on the first row, registered reconstructions below.
fn write_comparison(cfg: &RunConfig, name: &str, originals: &[Image], recons: &[Image]) -> Result<()> {
    let k = cfg.grid_count.min(originals.len());
    if k == 0 {
        return Ok(());
    }
    let mut tiles: Vec<Image> = originals[..k].to_vec();
    for (xhat, x) in recons[..k].iter().zip(originals) {
        tiles.push(register(xhat, x)?.aligned);
    }
    write_image_grid(&tiles, k, cfg.out.join("grids").join(format!("{name}.png")))?;
    Ok(())
}

fn finish(cfg: &RunConfig, reports: &[EvalReport]) -> Result<()> {
    write_report(reports, &cfg.out)?;
    for r in reports {
        println!(
            "{:<8} {:<8} mse {:.4} ± {:.4}  mae {:.4}  ssim {:.4}  (n = {})",
            r.method, r.dataset, r.mean_mse, r.ci95_mse, r.mean_mae, r.mean_ssim, r.count
        );
    }
    Ok(())
}

fn solver_params(cfg: &RunConfig, kind: SolverKind) -> SolverParams {
    let mut p = SolverParams::new(kind);
    p.beta = cfg.solver.beta.unwrap_or(kind.default_beta());
    p.iterations = cfg.solver.iterations;
    p.restarts = cfg.solver.restarts;
    p.clip_output = cfg.solver.clip_output;
    p
}

/// Solve every image independently; image `i` uses seed `seed + i`, so
/// results do not depend on the thread count.
fn run_solver(cfg: &RunConfig, kind: SolverKind, images: &[Image]) -> Result<Vec<Image>> {
    let base = solver_params(cfg, kind);
    let m = cfg.solver.oversample;
    images
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut params = base.clone();
            params.seed = cfg.seed.wrapping_add(i as u64);
            let n = x.side();
            let omega = if m > n {
                params.support = Some(corner_support(n, m));
                pad_and_measure(x, m)?
            } else {
                measure(x)
            };
            Ok(solve_with_restarts(kind, &omega, &params)?.cropped(n))
        })
        .collect::<phaseret::Result<Vec<_>>>()
        .map_err(Into::into)
}

fn solve_and_score(cfg: &RunConfig, method: Method, test: &ImageDataset) -> Result<EvalReport> {
    let kind = method.solver().expect("classical method");
    let started = Instant::now();
    eprintln!("{method}: solving {} images", test.len());
    let recons = run_solver(cfg, kind, &test.images)?;
    eprintln!("{method}: done in {:.1}s", started.elapsed().as_secs_f64());
    write_comparison(cfg, method.as_str(), &test.images, &recons)?;
    Ok(evaluate(&recons, &test.images)?.labeled(method.as_str(), cfg.dataset.as_str()))
}

fn network_label(model: &CascadeModel) -> &'static str {
    let s = &model.spec;
    if s.q == 1 {
        "mlp"
    } else if s.scales.iter().all(|&v| v == s.input_size) {
        "cpr-fs"
    } else {
        "cpr"
    }
}

fn score_network(cfg: &RunConfig, model: &CascadeModel, label: &str, test: &ImageDataset) -> Result<EvalReport> {
    let mags: Vec<Magnitude> = test.images.iter().map(measure).collect();
    let recons = reconstruct_batch(model, &mags)?;
    write_comparison(cfg, label, &test.images, &recons)?;
    Ok(evaluate(&recons, &test.images)?.labeled(label, cfg.dataset.as_str()))
}

fn train_network(
    cfg: &RunConfig,
    method: Method,
    q: usize,
    data: &ImageDataset,
    dir: &Path,
) -> Result<(CascadeModel, Vec<EpochRecord>)> {
    let spec = cfg.cascade_spec(method, q)?;
    let mut model = build_cascade(spec, cfg.seed)?;
    if let Some(n) = cfg.normalization {
        model.normalization = n;
    }
    eprintln!(
        "{method} (q = {}): {} parameters, {} training images",
        model.spec.q,
        model.parameter_count(),
        data.len()
    );
    let mut train = cfg.train.clone();
    train.seed = cfg.seed;
    let started = Instant::now();
    let mut seen: Vec<EpochRecord> = Vec::new();
    let history = train_cascade(&mut model, data, &train, |m, rec| {
        eprintln!(
            "epoch {:>3}  loss {:.5}  val mse {:.5}  {:.0}s",
            rec.epoch,
            rec.train_loss.last().copied().unwrap_or(f64::NAN),
            rec.val_mse.last().copied().unwrap_or(f64::NAN),
            started.elapsed().as_secs_f64()
        );
        save_checkpoint(m, dir.join("last"))?;
        if cfg.checkpoint_every > 0 && rec.epoch % cfg.checkpoint_every == 0 {
            save_checkpoint(m, epoch_dir(dir, rec.epoch))?;
        }
        seen.push(rec.clone());
        let path = dir.join("history.json");
        let text = serde_json::to_string_pretty(&seen).expect("history serializes");
        std::fs::write(&path, text).map_err(|source| phaseret::Error::Io { path, source })
    })?;
    Ok((model, history))
}

pub fn demo_swap(cfg: &RunConfig) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        index: usize,
        mse_random_phase: f64,
        mse_random_magnitude: f64,
    }
    #[derive(Serialize)]
    struct Summary {
        count: usize,
        phase_dominates: usize,
        mean_mse_random_phase: f64,
        mean_mse_random_magnitude: f64,
        per_image: Vec<Row>,
    }
    let test = load(cfg, Split::Test, cfg.subset)?;
    let mut rows = Vec::with_capacity(test.len());
    let mut tiles = Vec::new();
    for (i, x) in test.images.iter().enumerate() {
        let demo = swap_demo(x, cfg.seed.wrapping_add(i as u64))?;
        rows.push(Row {
            index: i,
            mse_random_phase: mse(&demo.x_random_phase, x)?,
            mse_random_magnitude: mse(&demo.x_random_magnitude, x)?,
        });
        if i < cfg.grid_count {
            tiles.extend([
                x.clone(),
                magnitude_view(&demo.true_magnitude),
                phase_view(&demo.phase_used),
                stretch(&demo.x_random_phase),
                phase_view(&demo.true_phase),
                magnitude_view(&demo.magnitude_used),
                stretch(&demo.x_random_magnitude),
            ]);
        }
    }
    let count = rows.len().max(1) as f64;
    let summary = Summary {
        count: rows.len(),
        phase_dominates: rows.iter().filter(|r| r.mse_random_phase > r.mse_random_magnitude).count(),
        mean_mse_random_phase: rows.iter().map(|r| r.mse_random_phase).sum::<f64>() / count,
        mean_mse_random_magnitude: rows.iter().map(|r| r.mse_random_magnitude).sum::<f64>() / count,
        per_image: rows,
    };
    if !tiles.is_empty() {
        write_image_grid(&tiles, 7, cfg.out.join("grids").join("swap.png"))?;
    }
    write_json(&cfg.out.join("swap.json"), &summary)?;
    println!(
        "random phase: mse {:.4}; random magnitude: mse {:.4}; phase matters more in {}/{} images",
        summary.mean_mse_random_phase, summary.mean_mse_random_magnitude, summary.phase_dominates, summary.count
    );
    Ok(())
}

fn fftshift(values: &ndarray::Array2<f64>) -> Image {
    let n = values.nrows();
    Image::from_fn(n, |(r, c)| values[[(r + n - n / 2) % n, (c + n - n / 2) % n]])
}

/// Centered log-magnitude scaled to `[0, 1]`.
fn magnitude_view(m: &Magnitude) -> Image {
    let shifted = fftshift(m.values()).map(f64::ln_1p);
    let max = shifted.as_slice().iter().copied().fold(0.0, f64::max);
    shifted.map(|v| if max > 0.0 { v / max } else { 0.0 })
}

/// Centered phase mapped from `[-π, π]` to `[0, 1]`.
fn phase_view(p: &Phase) -> Image {
    fftshift(p.values()).map(|v| (v + std::f64::consts::PI) / (2.0 * std::f64::consts::PI))
}

/// Min-max stretch for display.
fn stretch(x: &Image) -> Image {
    let lo = x.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    x.map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
}

pub fn solve(cfg: &RunConfig) -> Result<()> {
    let test = load(cfg, Split::Test, cfg.subset)?;
    let report = solve_and_score(cfg, cfg.method, &test)?;
    finish(cfg, &[report])
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg, Split::Train, cfg.subset)?;
    let dir = cfg.out.join("checkpoints");
    let (model, history) = train_network(cfg, cfg.method, cfg.q, &data, &dir)?;
    if let Some(last) = history.last() {
        println!(
            "{} trained for {} epochs; final validation mse {:.5}; checkpoint in {}",
            network_label(&model),
            model.epoch,
            last.val_mse.last().copied().unwrap_or(f64::NAN),
            dir.join("last").display()
        );
    }
    Ok(())
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let path = cfg.checkpoint.as_ref().expect("validated");
    let model = load_checkpoint(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    let test = load(cfg, Split::Test, cfg.subset)?;
    let label = network_label(&model);
    let report = score_network(cfg, &model, label, &test)?;
    let k = cfg.grid_count.min(test.len());
    for p in 0..model.spec.q {
        let tiles = test.images[..k]
            .iter()
            .map(|x| Ok(reconstruct(&model, &measure(x))?.swap_remove(p)))
            .collect::<Result<Vec<_>>>()?;
        if !tiles.is_empty() {
            write_image_grid(&tiles, k, cfg.out.join("grids").join(format!("stage{}.png", p + 1)))?;
        }
    }
    finish(cfg, &[report])
}

pub fn bench(cfg: &RunConfig) -> Result<()> {
    let test = load(cfg, Split::Test, cfg.test_subset)?;
    let mut train_data = None;
    let mut reports = Vec::new();
    for &method in &cfg.methods {
        let report = if method.solver().is_some() {
            solve_and_score(cfg, method, &test)?
        } else {
            if train_data.is_none() {
                train_data = Some(load(cfg, Split::Train, cfg.subset)?);
            }
            let data = train_data.as_ref().expect("loaded");
            let dir = cfg.out.join("checkpoints").join(method.as_str());
            let (model, _) = train_network(cfg, method, cfg.q, data, &dir)?;
            score_network(cfg, &model, method.as_str(), &test)?
        };
        write_report(std::slice::from_ref(&report), cfg.out.join("methods").join(method.as_str()))?;
        reports.push(report);
    }
    finish(cfg, &reports)
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let data = load(cfg, Split::Train, cfg.subset)?;
    let test = load(cfg, Split::Test, cfg.test_subset)?;
    let mut reports = Vec::new();
    let csv_path = cfg.out.join("ablation.csv");
    for q in 1..=cfg.max_q {
        let label = format!("cpr-fs-q{q}");
        let dir = cfg.out.join("checkpoints").join(&label);
        let (model, _) = train_network(cfg, Method::CprFs, q, &data, &dir)?;
        reports.push(score_network(cfg, &model, &label, &test)?);
        let mut w = csv::Writer::from_path(&csv_path)?;
        w.write_record(["q", "mse", "ci95_mse", "mae", "ssim", "count"])?;
        for (i, r) in reports.iter().enumerate() {
            w.write_record([
                (i + 1).to_string(),
                r.mean_mse.to_string(),
                r.ci95_mse.to_string(),
                r.mean_mae.to_string(),
                r.mean_ssim.to_string(),
                r.count.to_string(),
            ])?;
        }
        w.flush()?;
    }
    finish(cfg, &reports)
}
