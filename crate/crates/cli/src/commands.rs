//! Implementations of the six pipeline subcommands.

use crate::config::{persist_config, resolve_config};
use clap::Args;
use ctrlgs_core::checkpoint::{load_checkpoint, save_checkpoint};
use ctrlgs_core::error::{Error, Result};
use ctrlgs_core::flow_proxy::{estimate_flow_proxy_with_timestamps, FlowProxyParams};
use ctrlgs_core::img::ImageRgb;
use ctrlgs_core::metrics::{ms_ssim, psnr, ssim};
use ctrlgs_core::scene::{
    generate_synthetic, load_dataset, load_manifest, load_manifest_image, SyntheticSceneSpec,
};
use ctrlgs_core::train::{
    train_until, write_metrics_csv, TrainDataset, TrainState,
};
use ctrlgs_core::windows::{
    equal_windows, greedy_threshold_windows, n_highest_windows, FlowSeries, WindowSet,
};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

#[derive(Args)]
pub struct GenArgs {
    /// Scene preset: `static` or `two-burst`.
    #[arg(long, default_value = "two-burst")]
    preset: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    frames: Option<usize>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    gaussians: Option<usize>,
}

pub fn gen(args: GenArgs) -> Result<()> {
    let mut spec = SyntheticSceneSpec::preset(&args.preset, args.seed)?;
    if let Some(f) = args.frames {
        if f < 2 {
            return Err(Error::Usage("need at least 2 frames".into()));
        }
        spec.frame_count = f;
    }
    if let Some(r) = args.resolution {
        spec.resolution = r;
    }
    if let Some(g) = args.gaussians {
        spec.gaussian_count = g;
    }
    let scene = generate_synthetic(&spec, &args.out)?;
    let train = scene.splits.iter().filter(|s| matches!(s, Some(ctrlgs_core::scene::Split::Train))).count();
    let val = scene.splits.iter().filter(|s| matches!(s, Some(ctrlgs_core::scene::Split::Val))).count();
    println!(
        "generated {} frames ({} train / {} val) of {}x{} with {} gaussians into {}",
        spec.frame_count,
        train,
        val,
        spec.resolution,
        spec.resolution,
        spec.gaussian_count,
        args.out.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct FlowArgs {
    /// Manifest whose full frame sequence is analyzed.
    #[arg(long, conflicts_with = "frames_dir")]
    manifest: Option<PathBuf>,
    /// Alternatively: a directory of .pfm/.ppm frames in filename order.
    #[arg(long)]
    frames_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Plot-ready CSV (pair index, mid-pair time, magnitude).
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    block_size: usize,
    #[arg(long, default_value_t = 6)]
    search_radius: usize,
}

pub fn flow(args: FlowArgs) -> Result<()> {
    let (frames, timestamps): (Vec<ImageRgb>, Option<Vec<f64>>) = match (&args.manifest, &args.frames_dir) {
        (Some(manifest), None) => {
            let entries = load_manifest(manifest)?;
            let images = entries
                .iter()
                .map(load_manifest_image)
                .collect::<Result<Vec<_>>>()?;
            let ts: Vec<f64> = entries.iter().map(|f| f.t).collect();
            (images, Some(ts))
        }
        (None, Some(dir)) => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(|e| Error::Ingestion(format!("cannot read {}: {e}", dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| {
                    matches!(
                        p.extension().and_then(|e| e.to_str()),
                        Some("pfm") | Some("ppm")
                    )
                })
                .collect();
            paths.sort();
            let images = paths
                .iter()
                .map(|p| match p.extension().and_then(|e| e.to_str()) {
                    Some("pfm") => ImageRgb::read_pfm(p),
                    _ => ImageRgb::read_ppm(p),
                })
                .collect::<Result<Vec<_>>>()?;
            (images, None)
        }
        _ => {
            return Err(Error::Usage(
                "flow needs exactly one of --manifest or --frames-dir".into(),
            ))
        }
    };
    if frames.len() < 2 {
        return Err(Error::Usage(format!(
            "flow needs at least 2 frames, found {}",
            frames.len()
        )));
    }

    let params = FlowProxyParams {
        block_size: args.block_size,
        search_radius: args.search_radius,
        ..Default::default()
    };
    let series = estimate_flow_proxy_with_timestamps(&frames, timestamps.as_deref(), &params)?;
    series.write_file(&args.out)?;

    let mags = series.magnitudes();
    let mean = series.total() / mags.len() as f64;
    let (peak_idx, peak) = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, m)| (i, *m))
        .unwrap_or((0, 0.0));
    println!(
        "flow over {} pairs: mean {:.4}, max {:.4} at pair {} (frames {}-{})",
        mags.len(),
        mean,
        peak,
        peak_idx,
        peak_idx,
        peak_idx + 1
    );
    // Report local peaks above twice the mean, mirroring per-scene flow
    // curve summaries.
    let peaks: Vec<usize> = (0..mags.len())
        .filter(|&i| {
            mags[i] > 2.0 * mean
                && (i == 0 || mags[i] >= mags[i - 1])
                && (i + 1 == mags.len() || mags[i] >= mags[i + 1])
        })
        .collect();
    if !peaks.is_empty() {
        println!("high-motion peaks at pairs: {peaks:?}");
    }

    if let Some(csv) = &args.csv {
        let mut f = std::io::BufWriter::new(std::fs::File::create(csv)?);
        writeln!(f, "pair,t_mid,magnitude")?;
        let ts = series.timestamps();
        for (i, m) in mags.iter().enumerate() {
            writeln!(f, "{},{},{}", i, 0.5 * (ts[i] + ts[i + 1]), m)?;
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct SegmentArgs {
    /// Flow file from `ctrlgs flow` (required for dynamic methods).
    #[arg(long)]
    flow: Option<PathBuf>,
    /// `equal`, `nhighest`, or `threshold`.
    #[arg(long)]
    method: String,
    /// Window count N.
    #[arg(long)]
    windows: usize,
    #[arg(long)]
    out: PathBuf,
}

pub fn segment(args: SegmentArgs) -> Result<()> {
    let flow = match &args.flow {
        Some(path) => Some(FlowSeries::read_file(path)?),
        None => None,
    };
    let set = match args.method.as_str() {
        "equal" => equal_windows(args.windows)?,
        "nhighest" => {
            let flow = flow.as_ref().ok_or_else(|| {
                Error::Usage("method nhighest needs --flow".into())
            })?;
            n_highest_windows(flow, args.windows)?
        }
        "threshold" => {
            let flow = flow.as_ref().ok_or_else(|| {
                Error::Usage("method threshold needs --flow".into())
            })?;
            greedy_threshold_windows(flow, args.windows)?
        }
        other => {
            return Err(Error::Usage(format!(
                "unknown method {other:?} (equal | nhighest | threshold)"
            )))
        }
    };
    set.write_file(&args.out)?;

    println!("window  span                 flow");
    for k in 0..set.window_count() {
        let (a, b) = set.span(k);
        let flow_sum = flow
            .as_ref()
            .map(|f| {
                f.magnitudes()
                    .iter()
                    .enumerate()
                    .filter(|(p, _)| {
                        let mid = 0.5 * (f.timestamps()[*p] + f.timestamps()[*p + 1]);
                        mid > a && mid <= b
                    })
                    .map(|(_, m)| m)
                    .sum::<f64>()
            })
            .unwrap_or(f64::NAN);
        println!("{k:>6}  [{a:.4}, {b:.4})    {flow_sum:.4}");
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Windows file from `ctrlgs segment`; omitted means a single window.
    #[arg(long)]
    windows: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// TOML config file (fields as in the documented TrainConfig).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override single config keys, e.g. `--set lr_means=1e-4`.
    #[arg(long = "set")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<u64>,
    /// Disable the segment decoder bank (frame-residual-only baseline).
    #[arg(long)]
    no_segment_heads: bool,
    /// Apply the every-4th-frame auto split to untagged manifests.
    #[arg(long)]
    auto_split: bool,
    /// Resume from a checkpoint (with optimizer state).
    #[arg(long)]
    resume: Option<PathBuf>,
}

pub fn train(args: TrainArgs) -> Result<()> {
    let segment_heads = if args.no_segment_heads { Some(false) } else { None };
    let config = resolve_config(
        args.config.as_deref(),
        &args.overrides,
        args.seed,
        args.iterations,
        segment_heads,
    )?;

    let frames = load_dataset(&args.manifest, args.auto_split)?;
    let dataset = TrainDataset::load(&frames, &config)?;

    let windows = match &args.windows {
        Some(path) => WindowSet::read_file(path)?,
        None if config.field.segment_heads_enabled => {
            return Err(Error::Usage(
                "segment heads are enabled but no --windows file was given \
                 (pass --windows or --no-segment-heads)"
                    .into(),
            ))
        }
        None => equal_windows(1)?,
    };

    std::fs::create_dir_all(&args.out)?;
    persist_config(&config, &args.out)?;

    let mut state = match &args.resume {
        Some(ckpt) => {
            let mut st = load_checkpoint(ckpt)?;
            st.config.total_iterations = config.total_iterations;
            st
        }
        None => TrainState::new(&dataset, windows, config)?,
    };

    let start = Instant::now();
    let until = state.config.total_iterations;
    let report = train_until(&mut state, &dataset, until)?;
    let elapsed = start.elapsed();

    let ckpt_path = args.out.join("model.ckpt");
    save_checkpoint(&state, &ckpt_path, true)?;
    write_metrics_csv(&report.metrics, &args.out.join("metrics.csv"))?;

    if let Some(last) = report.metrics.last() {
        println!(
            "trained {} iterations in {:.1} s: loss {:.6}, val psnr {:.2} dB, val ssim {:.4}",
            state.iteration,
            elapsed.as_secs_f64(),
            last.loss,
            last.psnr,
            last.ssim
        );
    } else {
        println!(
            "trained {} iterations in {:.1} s",
            state.iteration,
            elapsed.as_secs_f64()
        );
    }
    println!(
        "gaussians {} | densify events {} | checkpoint {}",
        state.set.len(),
        report.events.densify_iters.len(),
        ckpt_path.display()
    );
    Ok(())
}

#[derive(Args)]
pub struct RenderArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated normalized timestamps, e.g. `0.0,0.25,0.5`.
    #[arg(long)]
    times: String,
    /// Manifest supplying the camera.
    #[arg(long)]
    manifest: PathBuf,
    /// Frame index (in timestamp order) whose camera to render from.
    #[arg(long, default_value_t = 0)]
    frame: usize,
}

pub fn render(args: RenderArgs) -> Result<()> {
    let times: Vec<f64> = args
        .times
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad timestamp {s:?}")))
        })
        .collect::<Result<_>>()?;
    if times.is_empty() {
        return Err(Error::Usage("no timestamps given".into()));
    }
    for &t in &times {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Usage(format!("timestamp {t} outside [0,1]")));
        }
    }
    let state = load_checkpoint(&args.checkpoint)?;
    let frames = load_manifest(&args.manifest)?;
    let frame = frames.get(args.frame).ok_or_else(|| {
        Error::Usage(format!(
            "frame index {} out of range ({} frames)",
            args.frame,
            frames.len()
        ))
    })?;
    std::fs::create_dir_all(&args.out)?;
    for &t in &times {
        let fb = state.render_at(&frame.camera, t);
        let stem = format!("render_t{:.6}", t);
        fb.image.write_pfm(&args.out.join(format!("{stem}.pfm")))?;
        fb.image.write_ppm(&args.out.join(format!("{stem}.ppm")))?;
        println!("rendered t={t} -> {}/{stem}.pfm", args.out.display());
    }
    Ok(())
}

#[derive(Args)]
pub struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// `train` or `val`.
    #[arg(long, default_value = "val")]
    split: String,
    /// Per-frame metrics CSV.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    auto_split: bool,
}

pub fn eval(args: EvalArgs) -> Result<()> {
    let want = match args.split.as_str() {
        "train" => ctrlgs_core::scene::Split::Train,
        "val" => ctrlgs_core::scene::Split::Val,
        other => return Err(Error::Usage(format!("unknown split {other:?} (train | val)"))),
    };
    let state = load_checkpoint(&args.checkpoint)?;
    let frames = load_dataset(&args.manifest, args.auto_split)?;
    let selected: Vec<_> = frames.into_iter().filter(|f| f.split == want).collect();
    if selected.is_empty() {
        return Err(Error::Usage(format!("split {:?} is empty", args.split)));
    }

    let mut rows = Vec::new();
    let mut render_time = 0.0f64;
    println!("frame      t        psnr     ssim    ms-ssim");
    for (i, frame) in selected.iter().enumerate() {
        let target = ctrlgs_core::scene::load_frame_image(frame)?;
        let start = Instant::now();
        let fb = state.render_at(&frame.camera, frame.t);
        render_time += start.elapsed().as_secs_f64();
        let p = psnr(&fb.image, &target)?;
        let s = ssim(&fb.image, &target)?;
        let (m, _) = ms_ssim(&fb.image, &target)?;
        println!("{i:>5}  {:.4}  {p:>8.3}  {s:.4}  {m:.4}", frame.t);
        rows.push((i, frame.t, p, s, m));
    }
    let n = rows.len() as f64;
    let mean_p = rows.iter().map(|r| r.2).sum::<f64>() / n;
    let mean_s = rows.iter().map(|r| r.3).sum::<f64>() / n;
    let mean_m = rows.iter().map(|r| r.4).sum::<f64>() / n;
    let fps = n / render_time.max(1e-12);
    println!("aggregate  psnr {mean_p:.3} dB | ssim {mean_s:.4} | ms-ssim {mean_m:.4} | {fps:.1} fps");

    if let Some(path) = &args.out {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "frame,t,psnr,ssim,ms_ssim")?;
        for (i, t, p, s, m) in &rows {
            writeln!(f, "{i},{t},{p},{s},{m}")?;
        }
        writeln!(f, "aggregate,,{mean_p},{mean_s},{mean_m}")?;
        writeln!(f, "fps,,{fps},,")?;
    }
    Ok(())
}
