//! Optimization loop: L1 + grid total-variation loss, per-class Adam
//! updates, warm-up at reduced resolution, and adaptive density control.

mod adam;
mod densify;
mod loss;

pub use adam::{adam_step, AdamParams, AdamTensor};
pub use densify::{densify_and_prune, DensifyOutcome, DensifyStats};
pub use loss::photometric_loss;

use crate::deform::{
    DeformationField, FieldConfig, FieldParamClass, SceneBounds, TemporalQuantizer,
};
use crate::error::{Error, Result};
use crate::gaussians::{GaussianParams, GaussianSet};
use crate::geometry::{inverse_sigmoid, Camera, SH_C0};
use crate::img::ImageRgb;
use crate::metrics::{psnr, ssim};
use crate::render::{render, render_backward, Framebuffer, RenderOptions};
use crate::scene::{load_frame_image, DatasetFrame, Split};
use crate::windows::WindowSet;
use nalgebra::{Vector3, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Desk-scale default; the paper-scale schedule uses 30000.
    pub total_iterations: u64,
    pub warmup_iterations: u64,
    pub warmup_downscale: usize,
    pub densify_interval: u64,
    pub densify_until: u64,
    /// Mean screen-space positional gradient that triggers densification.
    pub densify_grad_threshold: f64,
    /// Gaussians above this world-space sigma split; smaller ones clone.
    pub densify_split_sigma: f64,
    /// Opacity below this is pruned.
    pub opacity_prune_threshold: f64,
    pub lr_means: f64,
    /// Exponential decay target: final means lr = lr_means * this ratio.
    pub lr_means_final_ratio: f64,
    pub lr_grids: f64,
    pub lr_networks: f64,
    pub lr_opacity: f64,
    pub lr_scales: f64,
    pub lr_rotations: f64,
    pub lr_sh: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub tv_weight: f64,
    pub seed: u64,
    pub deterministic: bool,
    pub eval_interval: u64,
    pub background: [f64; 3],
    pub sh_degree: usize,
    pub tile_size: usize,
    /// Random-init point count when no point file is given.
    pub init_count: usize,
    /// Half extent of the random-init cube.
    pub init_extent: f64,
    pub init_points_file: Option<String>,
    /// Margin added around the initial point cloud for encoder bounds.
    pub bounds_margin: f64,
    pub quantize_q: f64,
    pub field: FieldConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            total_iterations: 5000,
            warmup_iterations: 3000,
            warmup_downscale: 2,
            densify_interval: 100,
            densify_until: 10000,
            densify_grad_threshold: 2e-4,
            densify_split_sigma: 0.08,
            opacity_prune_threshold: 0.005,
            lr_means: 1.6e-4,
            lr_means_final_ratio: 0.01,
            lr_grids: 1.6e-2,
            lr_networks: 1.6e-3,
            lr_opacity: 5e-2,
            lr_scales: 5e-3,
            lr_rotations: 5e-3,
            lr_sh: 2.5e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-15,
            tv_weight: 1e-4,
            seed: 0,
            deterministic: true,
            eval_interval: 250,
            background: [0.0; 3],
            sh_degree: 1,
            tile_size: 16,
            init_count: 400,
            init_extent: 1.0,
            init_points_file: None,
            bounds_margin: 0.6,
            quantize_q: 0.5,
            field: FieldConfig::default(),
        }
    }
}

/// Warm-up renders at reduced resolution for exactly the first
/// `warmup_iterations` iterations (0-based).
pub fn is_warmup(iteration: u64, cfg: &TrainConfig) -> bool {
    iteration < cfg.warmup_iterations
}

/// Densification fires at every positive multiple of the interval up to and
/// including `densify_until`.
pub fn densify_due(iteration: u64, cfg: &TrainConfig) -> bool {
    iteration > 0 && iteration % cfg.densify_interval == 0 && iteration <= cfg.densify_until
}

/// Means learning rate at an iteration (exponential decay to the final
/// ratio over the full schedule).
pub fn means_lr_at(iteration: u64, cfg: &TrainConfig) -> f64 {
    if cfg.total_iterations <= 1 {
        return cfg.lr_means;
    }
    let t = iteration as f64 / cfg.total_iterations as f64;
    cfg.lr_means * cfg.lr_means_final_ratio.powf(t.min(1.0))
}

#[derive(Debug, Clone)]
pub struct LoadedFrame {
    pub camera: Camera,
    pub image: ImageRgb,
    pub camera_small: Camera,
    pub image_small: ImageRgb,
    pub t: f64,
}

impl LoadedFrame {
    pub fn new(camera: Camera, image: ImageRgb, t: f64, downscale: usize) -> LoadedFrame {
        let camera_small = camera.downscaled(downscale);
        let image_small = image.downscale(downscale);
        LoadedFrame { camera, image, camera_small, image_small, t }
    }
}

#[derive(Debug, Clone)]
pub struct TrainDataset {
    pub train: Vec<LoadedFrame>,
    pub val: Vec<LoadedFrame>,
}

impl TrainDataset {
    pub fn load(frames: &[DatasetFrame], cfg: &TrainConfig) -> Result<TrainDataset> {
        let mut train = Vec::new();
        let mut val = Vec::new();
        for frame in frames {
            let image = load_frame_image(frame)?;
            let loaded =
                LoadedFrame::new(frame.camera.clone(), image, frame.t, cfg.warmup_downscale);
            match frame.split {
                Split::Train => train.push(loaded),
                Split::Val => val.push(loaded),
            }
        }
        if train.is_empty() {
            return Err(Error::Ingestion("dataset has no training frames".into()));
        }
        Ok(TrainDataset { train, val })
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.train.iter().chain(self.val.iter()).map(|f| f.t).collect()
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub step: u64,
    /// Means, rotations, log-scales, opacity logits, SH.
    pub gaussians: [AdamTensor; 5],
    /// One state per field tensor, in field parameter order.
    pub field: Vec<AdamTensor>,
}

impl OptimizerState {
    pub fn new(set: &GaussianSet, field: &DeformationField) -> OptimizerState {
        let field_states = crate::deform::FieldGrads::zeros_like(field)
            .tensors()
            .iter()
            .map(|t| AdamTensor::zeros(t.len()))
            .collect();
        OptimizerState {
            step: 0,
            gaussians: [
                AdamTensor::zeros(set.means.len()),
                AdamTensor::zeros(set.rotations.len()),
                AdamTensor::zeros(set.log_scales.len()),
                AdamTensor::zeros(set.opacity_logits.len()),
                AdamTensor::zeros(set.sh.len()),
            ],
            field: field_states,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub config: TrainConfig,
    pub set: GaussianSet,
    pub field: DeformationField,
    pub quantizer: TemporalQuantizer,
    pub opt: OptimizerState,
    pub stats: DensifyStats,
    pub rng: ChaCha8Rng,
    pub iteration: u64,
}

impl TrainState {
    /// Fresh training state: point-cloud init, encoder bounds from the
    /// initial points, quantizer over the provided windows with segment
    /// indices precomputed for the dataset timestamps.
    pub fn new(dataset: &TrainDataset, windows: WindowSet, config: TrainConfig) -> Result<TrainState> {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let set = init_gaussian_set(&config, &mut rng)?;
        let bounds = bounds_from_points(&set, config.bounds_margin);
        let field = DeformationField::new(config.field, bounds, &mut rng);
        let mut quantizer = TemporalQuantizer::new(windows, config.quantize_q)?;
        quantizer.cache_timestamps(&dataset.timestamps());
        let opt = OptimizerState::new(&set, &field);
        let stats = DensifyStats::zeros(set.len());
        Ok(TrainState { config, set, field, quantizer, opt, stats, rng, iteration: 0 })
    }

    pub fn render_options(&self) -> RenderOptions {
        RenderOptions { tile_size: self.config.tile_size, ..Default::default() }
    }

    /// Deform to time `t` and render, as used for training, eval, and the
    /// render command.
    pub fn render_at(&self, camera: &Camera, t: f64) -> Framebuffer {
        let deformed = self.field.deform(&self.set, t, &self.quantizer);
        let source = deformed.as_source(&self.set);
        render(&source, camera, self.config.background, &self.render_options()).0
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepRecord {
    pub iteration: u64,
    pub loss: f64,
    pub l1: f64,
    pub tv: f64,
    pub downscaled: bool,
    pub densify: Option<DensifyOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub iter: u64,
    pub loss: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Default)]
pub struct TrainEvents {
    pub downscaled_iters: Vec<u64>,
    pub densify_iters: Vec<u64>,
    pub densify_outcomes: Vec<DensifyOutcome>,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub metrics: Vec<EvalRecord>,
    pub events: TrainEvents,
}

/// One optimization step on a single (camera, image, t) sample.
pub fn train_step(state: &mut TrainState, frame: &LoadedFrame) -> Result<StepRecord> {
    let iteration = state.iteration;
    let downscaled = is_warmup(iteration, &state.config);
    let (camera, target) = if downscaled {
        (&frame.camera_small, &frame.image_small)
    } else {
        (&frame.camera, &frame.image)
    };

    let opts = state.render_options();
    let deformed = state.field.deform(&state.set, frame.t, &state.quantizer);
    let source = deformed.as_source(&state.set);
    let (fb, artifacts) = render(&source, camera, state.config.background, &opts);

    let (l1, d_image) = photometric_loss(&fb.image, target)?;

    // Grid total-variation regularizer.
    let mut tv = 0.0;
    let mut tv_grads: Option<Vec<Vec<f64>>> = None;
    if state.config.tv_weight > 0.0 {
        let mut buffers: Vec<Vec<f64>> = state
            .field
            .grids
            .levels
            .iter()
            .flat_map(|l| l.planes.iter().map(|p| vec![0.0; p.data.len()]))
            .collect();
        tv = state.field.grids.total_variation(Some(&mut buffers));
        tv_grads = Some(buffers);
    }
    let loss = l1 + state.config.tv_weight * tv;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss at iteration {iteration}: l1={l1}, tv={tv}, \
             gaussians={}, splats={}",
            state.set.len(),
            artifacts.splats.len()
        )));
    }

    let (splat_grads, d_deformed) =
        render_backward(&source, camera, &artifacts, state.config.background, &d_image, &opts);
    let (d_canonical, mut field_grads) =
        state
            .field
            .deform_backward(&state.set, frame.t, &state.quantizer, &d_deformed);
    if let Some(buffers) = tv_grads {
        for (dst, src) in field_grads.planes.iter_mut().zip(buffers.iter()) {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += state.config.tv_weight * s;
            }
        }
    }

    // Densification statistics from screen-space positional gradients of
    // the deformed means.
    if state.stats.grad_norm_sum.len() != state.set.len() {
        state.stats.reset(state.set.len());
    }
    for (splat, g) in artifacts.splats.iter().zip(splat_grads.mean2d.iter()) {
        state.stats.grad_norm_sum[splat.source_index] += g.norm();
        state.stats.observations[splat.source_index] += 1;
    }

    // Parameter updates.
    let hp = AdamParams {
        beta1: state.config.adam_beta1,
        beta2: state.config.adam_beta2,
        eps: state.config.adam_eps,
    };
    state.opt.step += 1;
    let step = state.opt.step;
    let lr_means = means_lr_at(iteration, &state.config);
    adam_step(&mut state.set.means, &d_canonical.means, &mut state.opt.gaussians[0], lr_means, &hp, step);
    adam_step(
        &mut state.set.rotations,
        &d_canonical.rotations,
        &mut state.opt.gaussians[1],
        state.config.lr_rotations,
        &hp,
        step,
    );
    adam_step(
        &mut state.set.log_scales,
        &d_canonical.log_scales,
        &mut state.opt.gaussians[2],
        state.config.lr_scales,
        &hp,
        step,
    );
    adam_step(
        &mut state.set.opacity_logits,
        &d_canonical.opacity_logits,
        &mut state.opt.gaussians[3],
        state.config.lr_opacity,
        &hp,
        step,
    );
    adam_step(
        &mut state.set.sh,
        &d_canonical.sh,
        &mut state.opt.gaussians[4],
        state.config.lr_sh,
        &hp,
        step,
    );
    {
        let grads = field_grads.tensors();
        let params = state.field.param_tensors_mut();
        for ((class, tensor), (g, adam_state)) in params
            .into_iter()
            .zip(grads.iter().zip(state.opt.field.iter_mut()))
        {
            let lr = match class {
                FieldParamClass::Grids => state.config.lr_grids,
                FieldParamClass::Networks => state.config.lr_networks,
            };
            adam_step(tensor, g, adam_state, lr, &hp, step);
        }
    }
    if state.config.lr_rotations != 0.0 {
        state.set.renormalize_rotations();
    }

    // Density control.
    let mut densify = None;
    if densify_due(iteration, &state.config) {
        let outcome = densify_and_prune(
            &mut state.set,
            &mut state.opt.gaussians,
            &mut state.stats,
            &state.config,
            &mut state.rng,
        );
        densify = Some(outcome);
    }

    state.iteration += 1;
    Ok(StepRecord { iteration, loss, l1, tv, downscaled, densify })
}

/// Mean PSNR/SSIM over a frame list at full resolution.
pub fn evaluate(state: &TrainState, frames: &[LoadedFrame]) -> Result<(f64, f64)> {
    if frames.is_empty() {
        return Err(Error::Usage("evaluation split is empty".into()));
    }
    let mut psnr_sum = 0.0;
    let mut ssim_sum = 0.0;
    for frame in frames {
        let fb = state.render_at(&frame.camera, frame.t);
        psnr_sum += psnr(&fb.image, &frame.image)?;
        ssim_sum += ssim(&fb.image, &frame.image)?;
    }
    let n = frames.len() as f64;
    Ok((psnr_sum / n, ssim_sum / n))
}

/// Run the loop from the state's current iteration up to the configured
/// total. Frames are sampled uniformly from the training split with the
/// state's own generator, so a resumed run replays the uninterrupted one.
pub fn train(state: &mut TrainState, dataset: &TrainDataset) -> Result<TrainReport> {
    train_until(state, dataset, state.config.total_iterations)
}

/// Train up to `until` iterations (capped by the configured total) without
/// touching the schedule, so a run can stop for checkpointing and resume
/// bit-exactly.
pub fn train_until(state: &mut TrainState, dataset: &TrainDataset, until: u64) -> Result<TrainReport> {
    let until = until.min(state.config.total_iterations);
    let mut report = TrainReport { metrics: Vec::new(), events: TrainEvents::default() };
    while state.iteration < until {
        let pick = state.rng.gen_range(0..dataset.train.len());
        let record = train_step(state, &dataset.train[pick])?;
        if record.downscaled {
            report.events.downscaled_iters.push(record.iteration);
        }
        if let Some(outcome) = record.densify {
            report.events.densify_iters.push(record.iteration);
            report.events.densify_outcomes.push(outcome);
        }
        let done = state.iteration == state.config.total_iterations;
        if state.iteration % state.config.eval_interval == 0 || done {
            let (p, s) = if dataset.val.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                evaluate(state, &dataset.val)?
            };
            report.metrics.push(EvalRecord {
                iter: state.iteration,
                loss: record.loss,
                psnr: p,
                ssim: s,
            });
        }
    }
    Ok(report)
}

/// Metrics log: `iter,loss,psnr,ssim` per evaluation, decimal text.
pub fn write_metrics_csv(records: &[EvalRecord], path: &std::path::Path) -> Result<()> {
    use std::io::Write;
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "iter,loss,psnr,ssim")?;
    for r in records {
        writeln!(f, "{},{},{},{}", r.iter, r.loss, r.psnr, r.ssim)?;
    }
    Ok(())
}

fn bounds_from_points(set: &GaussianSet, margin: f64) -> SceneBounds {
    let mut min = [f64::INFINITY; 3];
    let mut max = [f64::NEG_INFINITY; 3];
    for i in 0..set.len() {
        for a in 0..3 {
            let v = set.means[i * 3 + a];
            min[a] = min[a].min(v);
            max[a] = max[a].max(v);
        }
    }
    for a in 0..3 {
        if !min[a].is_finite() || !max[a].is_finite() || max[a] - min[a] < 1e-6 {
            min[a] = -1.0;
            max[a] = 1.0;
        }
        min[a] -= margin;
        max[a] += margin;
    }
    SceneBounds { min, max }
}

/// Random or file-supplied point-cloud initialization; per-point scale from
/// the mean distance to the three nearest neighbors.
pub fn init_gaussian_set(cfg: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<GaussianSet> {
    let points: Vec<Vector3<f64>> = match &cfg.init_points_file {
        Some(path) => read_points_file(std::path::Path::new(path))?,
        None => (0..cfg.init_count)
            .map(|_| {
                Vector3::new(
                    rng.gen_range(-cfg.init_extent..cfg.init_extent),
                    rng.gen_range(-cfg.init_extent..cfg.init_extent),
                    rng.gen_range(-cfg.init_extent..cfg.init_extent),
                )
            })
            .collect(),
    };
    if points.is_empty() {
        return Err(Error::InvalidParameter("initial point cloud is empty".into()));
    }
    let k = if cfg.sh_degree == 0 { 1 } else { 4 };
    let mut set = GaussianSet::empty(k);
    for (i, p) in points.iter().enumerate() {
        let sigma = knn_sigma(&points, i).clamp(1e-3, 0.3);
        let mut sh = vec![0.0; k * 3];
        for c in 0..3 {
            sh[c] = 0.5 / SH_C0;
        }
        set.push(&GaussianParams {
            mean: *p,
            rotation: Vector4::new(1.0, 0.0, 0.0, 0.0),
            log_scale: Vector3::new(sigma.ln(), sigma.ln(), sigma.ln()),
            opacity_logit: inverse_sigmoid(0.1),
            sh_coeffs: sh,
        });
    }
    Ok(set)
}

fn knn_sigma(points: &[Vector3<f64>], i: usize) -> f64 {
    let mut dists: Vec<f64> = points
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, p)| (p - points[i]).norm())
        .collect();
    if dists.is_empty() {
        return 0.1;
    }
    dists.sort_by(f64::total_cmp);
    let k = dists.len().min(3);
    dists[..k].iter().sum::<f64>() / k as f64
}

fn read_points_file(path: &std::path::Path) -> Result<Vec<Vector3<f64>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Ingestion(format!("cannot read points file {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .take(3)
            .map(|v| v.parse())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| {
                Error::Ingestion(format!("{}: bad point on line {}", path.display(), ln + 1))
            })?;
        if vals.len() != 3 {
            return Err(Error::Ingestion(format!(
                "{}: point on line {} needs 3 coordinates",
                path.display(),
                ln + 1
            )));
        }
        out.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}
