//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Run with `cargo test --test acceptance` (add
//! `-- --nocapture` to see the lines for passing criteria).

mod common;

use common::*;
use ctrlgs_core::deform::{
    DeformationField, FieldConfig, GridConfig, SceneBounds, TemporalQuantizer,
};
use ctrlgs_core::gaussians::{GaussianGrads, GaussianSet};
use ctrlgs_core::img::ImageRgb;
use ctrlgs_core::metrics::{psnr, ssim};
use ctrlgs_core::render::{render, render_backward, render_reference, RenderOptions};
use ctrlgs_core::train::{
    densify_and_prune, densify_due, is_warmup, AdamTensor, DensifyStats, TrainConfig,
};
use ctrlgs_core::windows::{
    equal_windows, greedy_threshold_windows, n_highest_windows, FlowSeries, WindowSet,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn pass(criterion: u32, detail: &str) {
    println!("ACCEPTANCE {criterion}: PASS - {detail}");
}

// ---------------------------------------------------------------------------
// 1. Rasterizer oracle equivalence
// ---------------------------------------------------------------------------

#[test]
fn acceptance_01_rasterizer_oracle_equivalence() {
    let start = Instant::now();
    let opts = RenderOptions::default();
    let mut max_diff = 0.0f64;
    for seed in 0..100u64 {
        let n = 1 + (seed as usize * 7) % 64;
        let set = random_scene(n, 1000 + seed, (seed % 2) as usize);
        let camera = test_camera(64, 70.0 + (seed % 5) as f64 * 4.0);
        let background = [0.02 * (seed % 3) as f64, 0.01, 0.05];
        let source = set.as_source();
        let (tiled, _) = render(&source, &camera, background, &opts);
        let reference = render_reference(&source, &camera, background);
        for (a, b) in tiled.image.data.iter().zip(reference.image.data.iter()) {
            for c in 0..3 {
                max_diff = max_diff.max((a[c] - b[c]).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(
        max_diff <= 1e-6,
        "tiled vs reference max abs channel difference {max_diff:e}"
    );
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "oracle comparison took {elapsed:?} (budget 30 s)"
    );
    pass(
        1,
        &format!(
            "100 scenes, max |tiled - reference| = {max_diff:.2e}, {:.2} s",
            elapsed.as_secs_f64()
        ),
    );
}

// ---------------------------------------------------------------------------
// 2. Gradient suite
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
enum ParamHandle {
    /// (tensor id 0..5, flat index): means, rotations, log_scales,
    /// opacity_logits, sh.
    Gauss(usize, usize),
    /// (field tensor index, flat index) in field parameter order.
    Field(usize, usize),
}

fn perturb(set: &mut GaussianSet, field: &mut DeformationField, h: &ParamHandle, delta: f64) {
    match *h {
        ParamHandle::Gauss(0, i) => set.means[i] += delta,
        ParamHandle::Gauss(1, i) => set.rotations[i] += delta,
        ParamHandle::Gauss(2, i) => set.log_scales[i] += delta,
        ParamHandle::Gauss(3, i) => set.opacity_logits[i] += delta,
        ParamHandle::Gauss(4, i) => set.sh[i] += delta,
        ParamHandle::Gauss(..) => unreachable!(),
        ParamHandle::Field(t, i) => field.param_tensors_mut()[t].1[i] += delta,
    }
}

fn analytic_grad(
    d_canonical: &GaussianGrads,
    field_tensors: &[&Vec<f64>],
    h: &ParamHandle,
) -> f64 {
    match *h {
        ParamHandle::Gauss(0, i) => d_canonical.means[i],
        ParamHandle::Gauss(1, i) => d_canonical.rotations[i],
        ParamHandle::Gauss(2, i) => d_canonical.log_scales[i],
        ParamHandle::Gauss(3, i) => d_canonical.opacity_logits[i],
        ParamHandle::Gauss(4, i) => d_canonical.sh[i],
        ParamHandle::Gauss(..) => unreachable!(),
        ParamHandle::Field(t, i) => field_tensors[t][i],
    }
}

#[test]
fn acceptance_02_gradient_suite() {
    const REL: f64 = 1e-3;
    const ABS_FLOOR: f64 = 1e-6;
    const FD_STEP: f64 = 1e-4;
    const TARGET: usize = 200;
    const PER_SCENE: usize = 10;

    let field_config = FieldConfig {
        grid: GridConfig {
            feature_dim: 4,
            base_spatial_res: 6,
            base_temporal_res: 4,
            level_count: 2,
            upsample: 2,
        },
        hidden_width: 16,
        segment_heads_enabled: true,
    };
    // Field tensor ranges per class: 12 plane tensors, then 7 MLPs with 2
    // layers of (weight, bias) each.
    let field_classes: [(&str, std::ops::Range<usize>); 8] = [
        ("grid features", 0..12),
        ("fusion network", 12..16),
        ("frame position head", 16..20),
        ("frame rotation head", 20..24),
        ("frame scale head", 24..28),
        ("segment position head", 28..32),
        ("segment rotation head", 32..36),
        ("segment scale head", 36..40),
    ];
    let gauss_classes = ["means", "rotations", "log-scales", "opacity logits", "sh"];

    let quant = TemporalQuantizer::new(equal_windows(3).unwrap(), 0.5).unwrap();
    let opts = RenderOptions::default();
    let background = [0.05, 0.02, 0.04];
    let t = 0.37;

    let mut counts = std::collections::BTreeMap::<String, usize>::new();
    let mut worst: Option<(String, f64, f64)> = None;
    let mut kinks_skipped = 0usize;
    let mut checked_total = 0usize;
    let mut scene_seed = 0u64;
    while counts.len() < 13 || counts.values().any(|&c| c < TARGET) {
        scene_seed += 1;
        assert!(scene_seed < 80, "gradient suite failed to accumulate samples");
        let mut set = gradcheck_scene(8, 7000 + scene_seed, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9000 + scene_seed);
        let mut field =
            DeformationField::new(field_config, SceneBounds::cube(1.6), &mut rng);
        field.randomize_output_layers(&mut rng);
        // Gradcheck conditioning: lift grid features to O(1) so the fused
        // products keep every pre-activation far from the ReLU kink relative
        // to the 1e-4 finite-difference step.
        for level in &mut field.grids.levels {
            for plane in &mut level.planes {
                for v in &mut plane.data {
                    *v = rng.gen_range(0.75..1.3);
                }
            }
        }

        let camera = test_camera(32, 40.0);
        let weights = weight_image(32, 32, 4200 + scene_seed);

        // Analytic gradients through the full pipeline.
        let deformed = field.deform(&set, t, &quant);
        let source = deformed.as_source(&set);
        let (_, artifacts) = render(&source, &camera, background, &opts);
        let (_, d_deformed) =
            render_backward(&source, &camera, &artifacts, background, &weights, &opts);
        let (d_canonical, field_grads) = field.deform_backward(&set, t, &quant, &d_deformed);

        // Collect the handles to check this scene.
        let mut handles: Vec<(String, ParamHandle)> = Vec::new();
        let widths = [
            set.means.len(),
            set.rotations.len(),
            set.log_scales.len(),
            set.opacity_logits.len(),
            set.sh.len(),
        ];
        for (class_id, (name, len)) in gauss_classes.iter().zip(widths.iter()).enumerate() {
            for _ in 0..PER_SCENE {
                let idx = rng.gen_range(0..*len);
                handles.push((name.to_string(), ParamHandle::Gauss(class_id, idx)));
            }
            let _ = name;
        }
        let tensor_lens: Vec<usize> = field_grads.tensors().iter().map(|t| t.len()).collect();
        for (name, range) in &field_classes {
            for _ in 0..PER_SCENE {
                let tensor = rng.gen_range(range.clone());
                let idx = rng.gen_range(0..tensor_lens[tensor]);
                handles.push((name.to_string(), ParamHandle::Field(tensor, idx)));
            }
        }

        let field_tensors = field_grads.tensors();
        for (class, handle) in handles {
            let analytic = analytic_grad(&d_canonical, &field_tensors, &handle);
            let mut eval_at = |delta: f64| -> f64 {
                perturb(&mut set, &mut field, &handle, delta);
                let deformed = field.deform(&set, t, &quant);
                let source = deformed.as_source(&set);
                let (fb, _) = render(&source, &camera, background, &opts);
                perturb(&mut set, &mut field, &handle, -delta);
                weighted_sum(&fb.image, &weights)
            };
            let fd = (eval_at(FD_STEP) - eval_at(-FD_STEP)) / (2.0 * FD_STEP);
            // Step-halving consistency guard: central differences are only a
            // derivative estimate where the pipeline is smooth across the
            // step. A ReLU pre-activation inside the +-h window makes the
            // h and h/2 estimates disagree; such samples are resampled (a
            // genuine analytic-gradient bug keeps both estimates consistent
            // with each other and still fails below).
            let fd_half = (eval_at(FD_STEP / 2.0) - eval_at(-FD_STEP / 2.0)) / FD_STEP;
            let scale = analytic.abs().max(fd.abs()).max(fd_half.abs());
            if (fd - fd_half).abs() > (0.5 * REL * scale).max(ABS_FLOOR) {
                kinks_skipped += 1;
                continue;
            }

            let sample = GradSample { analytic, fd };
            assert!(
                sample.within(REL, ABS_FLOOR),
                "{class} {handle:?}: analytic {analytic:.9e} vs finite difference {fd:.9e} \
                 (scene seed {scene_seed})"
            );
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-12);
            if worst.as_ref().map_or(true, |w| err > w.1) {
                worst = Some((class.clone(), err, analytic));
            }
            *counts.entry(class).or_insert(0) += 1;
            checked_total += 1;
        }
    }

    let min_count = counts.values().min().copied().unwrap_or(0);
    assert!(min_count >= TARGET);
    assert!(
        (kinks_skipped as f64) < 0.02 * checked_total as f64,
        "too many kink-contaminated samples: {kinks_skipped} of {checked_total}"
    );
    let (wclass, werr, _) = worst.unwrap();
    pass(
        2,
        &format!(
            "13 classes x >= {min_count} parameters, worst relative error {werr:.2e} \
             ({wclass}); {kinks_skipped} kink-adjacent samples resampled"
        ),
    );
}

// ---------------------------------------------------------------------------
// 3. Timestamp quantization exactness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_03_quantization_exactness() {
    // Hand evaluation: locate the containing window by linear scan (last
    // window closed, boundary starts the next window) and interpolate by q.
    fn hand_quantize(t: f64, n: usize, q: f64) -> f64 {
        let boundaries: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let mut window = n - 1;
        for k in 0..n {
            if t >= boundaries[k] && (t < boundaries[k + 1] || k == n - 1) {
                window = k;
                break;
            }
        }
        boundaries[window] + q * (boundaries[window + 1] - boundaries[window])
    }

    let qs = [0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 0.9];
    let mut max_err = 0.0f64;
    for n in 2..=9usize {
        for &q in &qs {
            let quant = TemporalQuantizer::new(equal_windows(n).unwrap(), q).unwrap();
            for step in 0..=10 {
                let t = step as f64 / 10.0;
                let got = quant.quantize(t);
                let want = hand_quantize(t, n, q);
                max_err = max_err.max((got - want).abs());
                assert!(
                    (got - want).abs() <= 1e-12,
                    "t={t} n={n} q={q}: {got} vs {want}"
                );
            }
        }
    }

    // Idempotence and monotonicity on 1e5 random timestamps.
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut total = 0usize;
    for n in 2..=9usize {
        for &q in &qs {
            let quant = TemporalQuantizer::new(equal_windows(n).unwrap(), q).unwrap();
            let mut ts: Vec<f64> = (0..1800).map(|_| rng.gen_range(0.0..=1.0)).collect();
            ts.sort_by(f64::total_cmp);
            let mut prev = f64::NEG_INFINITY;
            for &t in &ts {
                let out = quant.quantize(t);
                assert_eq!(quant.quantize(out), out, "idempotence at t={t}, n={n}, q={q}");
                assert!(out >= prev, "monotonicity at t={t}, n={n}, q={q}");
                prev = out;
                total += 1;
            }
        }
    }
    assert!(total >= 100_000);
    pass(
        3,
        &format!("grid max error {max_err:.2e}; idempotence+monotonicity on {total} samples"),
    );
}

// ---------------------------------------------------------------------------
// 4. Window constructor exactness
// ---------------------------------------------------------------------------

#[test]
fn acceptance_04_window_constructors() {
    // Worked example 1: n-highest with flows (0.1,0.9,0.2,0.8,0.3).
    let flow = FlowSeries::new(vec![0.1, 0.9, 0.2, 0.8, 0.3]).unwrap();
    let w = n_highest_windows(&flow, 3).unwrap();
    assert_eq!(w.boundaries().len(), 4);
    assert!((w.boundaries()[1] - 0.3).abs() < 1e-15);
    assert!((w.boundaries()[2] - 0.7).abs() < 1e-15);

    // Worked example 2: greedy with flows (1,2,3,2,1,3), T = 4.
    let flow = FlowSeries::new(vec![1.0, 2.0, 3.0, 2.0, 1.0, 3.0]).unwrap();
    let w = greedy_threshold_windows(&flow, 3).unwrap();
    let ts = flow.timestamps();
    assert_eq!(w.window_count(), 3);
    assert_eq!(w.window_index(ts[2]), 0);
    assert_eq!(w.window_index(ts[3]), 1);
    assert_eq!(w.window_index(ts[6]), 2);

    // Worked example 3: front-loaded greedy, short first window.
    let flow = FlowSeries::new(vec![10.0, 0.1, 0.1, 0.1]).unwrap();
    let w = greedy_threshold_windows(&flow, 2).unwrap();
    assert!((w.boundaries()[1] - 0.125).abs() < 1e-15);

    // Property suite over 1000 random flow series.
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for trial in 0..1000 {
        let pairs = rng.gen_range(3..60);
        let mags: Vec<f64> = (0..pairs).map(|_| rng.gen_range(0.0..5.0)).collect();
        let flow = FlowSeries::new(mags.clone()).unwrap();
        let n = rng.gen_range(1..=8usize).min(flow.frame_count());

        for w in [
            equal_windows(n).unwrap(),
            n_highest_windows(&flow, n).unwrap(),
            greedy_threshold_windows(&flow, n).unwrap(),
        ] {
            let b = w.boundaries();
            assert_eq!(b[0], 0.0, "trial {trial}");
            assert_eq!(*b.last().unwrap(), 1.0, "trial {trial}");
            assert!(b.windows(2).all(|p| p[0] < p[1]), "trial {trial}");
        }

        // Greedy: every window except the last accumulates at least T.
        let greedy = greedy_threshold_windows(&flow, n).unwrap();
        let threshold = flow.total() / n as f64;
        if flow.total() > 0.0 {
            let mut sums = vec![0.0; greedy.window_count()];
            for (pair, &m) in flow.magnitudes().iter().enumerate() {
                let mid = 0.5 * (flow.timestamps()[pair] + flow.timestamps()[pair + 1]);
                let b = greedy.boundaries();
                let mut k = greedy.window_count() - 1;
                for i in 0..greedy.window_count() {
                    if mid <= b[i + 1] {
                        k = i;
                        break;
                    }
                }
                sums[k] += m;
            }
            assert!(greedy.window_count() <= n, "trial {trial}");
            for (k, s) in sums.iter().enumerate() {
                if k + 1 < greedy.window_count() {
                    assert!(
                        *s >= threshold - 1e-9,
                        "trial {trial} window {k}: {s} < {threshold}"
                    );
                }
            }
        }

        // Flow-scale invariance for both dynamic constructors.
        for scale in [0.5, 2.0, 3.0, 4.0] {
            let scaled =
                FlowSeries::new(mags.iter().map(|m| m * scale).collect()).unwrap();
            assert_eq!(
                n_highest_windows(&flow, n).unwrap().boundaries(),
                n_highest_windows(&scaled, n).unwrap().boundaries(),
                "trial {trial} scale {scale}"
            );
            assert_eq!(
                greedy_threshold_windows(&flow, n).unwrap().boundaries(),
                greedy_threshold_windows(&scaled, n).unwrap().boundaries(),
                "trial {trial} scale {scale}"
            );
        }

        // N-highest determinism under rerun (tie-break included).
        assert_eq!(
            n_highest_windows(&flow, n).unwrap().boundaries(),
            n_highest_windows(&flow, n).unwrap().boundaries()
        );
    }

    // Constructed exact ties select the earliest pairs.
    let tied = FlowSeries::new(vec![2.0; 7]).unwrap();
    let w = n_highest_windows(&tied, 4).unwrap();
    assert_eq!(w.window_count(), 4);
    for (k, b) in w.boundaries()[1..4].iter().enumerate() {
        let expected = 0.5 * (k as f64 / 7.0 + (k + 1) as f64 / 7.0);
        assert!((b - expected).abs() < 1e-15);
    }

    pass(4, "worked examples exact; 1000-series property suite clean");
}

// ---------------------------------------------------------------------------
// 5. Residual identity at initialization
// ---------------------------------------------------------------------------

#[test]
fn acceptance_05_residual_identity_at_init() {
    let set = random_scene(48, 90, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(91);
    // Freshly constructed field: decoder output layers are zero-initialized.
    let field = DeformationField::new(FieldConfig::default(), SceneBounds::cube(1.5), &mut rng);
    let quant = TemporalQuantizer::new(
        greedy_threshold_windows(&FlowSeries::new(vec![1.0, 3.0, 0.5, 2.0, 1.5]).unwrap(), 3)
            .unwrap(),
        0.5,
    )
    .unwrap();
    let camera = test_camera(64, 80.0);
    let opts = RenderOptions::default();
    let background = [0.01, 0.0, 0.03];

    let canonical = render(&set.as_source(), &camera, background, &opts).0;
    for step in 0..10 {
        let t = step as f64 / 9.0;
        let deformed = field.deform(&set, t, &quant);
        let fb = render(&deformed.as_source(&set), &camera, background, &opts).0;
        for (a, b) in fb.image.data.iter().zip(canonical.image.data.iter()) {
            for c in 0..3 {
                assert_eq!(
                    a[c].to_bits(),
                    b[c].to_bits(),
                    "pixel differs from canonical render at t={t}"
                );
            }
        }
    }
    pass(5, "renders at 10 timestamps bit-identical to the canonical static render");
}

// ---------------------------------------------------------------------------
// 6. Segment constancy (post-training)
// ---------------------------------------------------------------------------

#[test]
fn acceptance_06_segment_constancy() {
    use ctrlgs_core::scene::{build_synthetic, SyntheticSceneSpec};
    use ctrlgs_core::train::{train, LoadedFrame, TrainDataset, TrainState};

    let mut spec = SyntheticSceneSpec::preset("two-burst", 61).unwrap();
    spec.frame_count = 24;
    spec.gaussian_count = 40;
    spec.resolution = 32;
    let scene = build_synthetic(&spec);
    let frames: Vec<LoadedFrame> = (0..spec.frame_count)
        .map(|f| {
            LoadedFrame::new(scene.cameras[f].clone(), scene.render_frame(f), scene.timestamps[f], 2)
        })
        .collect();
    let dataset = TrainDataset { train: frames, val: vec![] };
    let config = TrainConfig {
        total_iterations: 300,
        warmup_iterations: 100,
        densify_until: 0, // keep the population fixed for this check
        init_count: 60,
        eval_interval: 1000,
        ..Default::default()
    };
    let windows = equal_windows(4).unwrap();
    let mut state = TrainState::new(&dataset, windows, config).unwrap();
    train(&mut state, &dataset).unwrap();

    let probe = state.set.mean(3);
    let mut per_window: Vec<(nalgebra::Vector3<f64>, [f64; 4], nalgebra::Vector3<f64>)> =
        Vec::new();
    for k in 0..4 {
        let (a, b) = state.quantizer.windows().span(k);
        let ts = [a + 0.13 * (b - a), a + 0.55 * (b - a), a + 0.92 * (b - a)];
        let t_q = state.quantizer.quantize(ts[0]);
        let first = state
            .field
            .decode_segment(&state.field.encode(&probe, t_q), t_q);
        for &t in &ts {
            let tq = state.quantizer.quantize(t);
            assert_eq!(tq.to_bits(), t_q.to_bits(), "window {k}: quantized time differs");
            let deltas = state.field.decode_segment(&state.field.encode(&probe, tq), tq);
            assert_eq!(deltas.0, first.0, "window {k}: position delta differs within window");
            assert_eq!(deltas.1, first.1, "window {k}: rotation delta differs within window");
            assert_eq!(deltas.2, first.2, "window {k}: scale delta differs within window");
        }
        per_window.push(first);
    }
    // Trained heads see different quantized inputs per window, so deltas
    // must differ across windows.
    for k in 1..4 {
        assert_ne!(
            per_window[0].0, per_window[k].0,
            "segment deltas identical across windows 0 and {k} after training"
        );
    }
    pass(6, "segment deltas bitwise constant within windows, distinct across them");
}

// ---------------------------------------------------------------------------
// 8. Metrics correctness
// ---------------------------------------------------------------------------

/// Frozen cross-check values produced by tools/ssim_reference.py
/// (scikit-image structural_similarity, original algorithm parameters;
/// verified there against an independent valid-mode implementation).
const SSIM_REFERENCE: [(&str, usize, usize, u64, f64); 20] = [
    ("invert", 32, 24, 1, -0.9678030297015283),
    ("invert", 48, 36, 18, -0.9639826224300975),
    ("invert", 64, 64, 35, -0.9657677763340667),
    ("scale_shift", 32, 24, 52, 0.9754827756543554),
    ("scale_shift", 48, 36, 69, 0.9755565923674339),
    ("scale_shift", 64, 64, 86, 0.9755413260826021),
    ("blend", 32, 24, 103, 0.8776635688803532),
    ("blend", 48, 36, 120, 0.8827568490539869),
    ("blend", 64, 64, 137, 0.8826515745453322),
    ("offset", 32, 24, 154, 0.9950593899228318),
    ("offset", 48, 36, 171, 0.9951116806245978),
    ("offset", 64, 64, 188, 0.9952668048144181),
    ("roll", 32, 24, 205, -0.003835913663830693),
    ("roll", 48, 36, 222, -0.03507215470140219),
    ("roll", 64, 64, 239, -0.013736217224756786),
    ("independent", 32, 24, 256, 0.02493142366547843),
    ("independent", 48, 36, 273, -0.03007217251598927),
    ("independent", 64, 64, 290, 0.009717202978055684),
    ("invert", 32, 24, 307, -0.9638996475825733),
    ("invert", 48, 36, 324, -0.9665381125254443),
];

fn reference_pair(recipe: &str, width: usize, height: usize, seed: u64) -> (ImageRgb, ImageRgb) {
    let a = splitmix_image(width, height, seed);
    let mut b = a.clone();
    match recipe {
        "invert" => {
            for p in &mut b.data {
                for c in 0..3 {
                    p[c] = 1.0 - p[c];
                }
            }
        }
        "scale_shift" => {
            for p in &mut b.data {
                for c in 0..3 {
                    p[c] = (p[c] * 0.8 + 0.1).clamp(0.0, 1.0);
                }
            }
        }
        "blend" => {
            let n = splitmix_image(width, height, seed + 1000);
            for (p, q) in b.data.iter_mut().zip(n.data.iter()) {
                for c in 0..3 {
                    p[c] = p[c] * 0.7 + q[c] * 0.3;
                }
            }
        }
        "offset" => {
            for p in &mut b.data {
                for c in 0..3 {
                    p[c] = (p[c] + 0.05).clamp(0.0, 1.0);
                }
            }
        }
        "roll" => {
            // numpy.roll(a, 2, axis=1): columns shift right by two.
            let mut rolled = ImageRgb::new(width, height);
            for y in 0..height {
                for x in 0..width {
                    *rolled.pixel_mut((x + 2) % width, y) = a.pixel(x, y);
                }
            }
            b = rolled;
        }
        "independent" => {
            b = splitmix_image(width, height, seed + 5000);
        }
        other => panic!("unknown recipe {other}"),
    }
    (a, b)
}

#[test]
fn acceptance_08_metrics_correctness() {
    // PSNR hand cases.
    let a = ImageRgb::filled(16, 16, [0.5; 3]);
    let b = ImageRgb::filled(16, 16, [0.25; 3]);
    let p1 = psnr(&a, &b).unwrap();
    assert!((p1 - 12.0411998265592478).abs() <= 1e-6, "got {p1}");
    let c = ImageRgb::filled(16, 16, [0.6; 3]);
    let d = ImageRgb::filled(16, 16, [0.5; 3]);
    let p2 = psnr(&c, &d).unwrap();
    assert!((p2 - 20.0).abs() <= 1e-6, "got {p2}");

    // SSIM self-identity.
    let img = splitmix_image(48, 40, 999);
    let s_self = ssim(&img, &img).unwrap();
    assert!((s_self - 1.0).abs() <= 1e-9, "ssim(a,a) = {s_self}");

    // Cross-check against the published reference implementation.
    let mut max_err = 0.0f64;
    for (recipe, w, h, seed, expected) in SSIM_REFERENCE {
        let (a, b) = reference_pair(recipe, w, h, seed);
        let got = ssim(&a, &b).unwrap();
        let err = (got - expected).abs();
        max_err = max_err.max(err);
        assert!(
            err <= 1e-6,
            "{recipe} {w}x{h} seed {seed}: {got} vs reference {expected} (err {err:.2e})"
        );
    }
    pass(
        8,
        &format!("PSNR hand cases exact; SSIM reference cross-check max err {max_err:.2e}"),
    );
}

// ---------------------------------------------------------------------------
// 9. Schedule conformance
// ---------------------------------------------------------------------------

#[test]
fn acceptance_09_schedule_conformance() {
    use ctrlgs_core::scene::{build_synthetic, SyntheticSceneSpec};
    use ctrlgs_core::train::{train, LoadedFrame, TrainDataset, TrainState};

    // Paper-scale schedule: warm-up exactly below 3000, densification at
    // every positive multiple of 100 up to 10000.
    let cfg = TrainConfig { total_iterations: 30000, ..Default::default() };
    for iter in 0..=30000u64 {
        assert_eq!(is_warmup(iter, &cfg), iter < 3000, "warm-up predicate at {iter}");
        assert_eq!(
            densify_due(iter, &cfg),
            iter > 0 && iter % 100 == 0 && iter <= 10000,
            "densify predicate at {iter}"
        );
    }

    // Instrumented short run: recorded events match the predicates exactly.
    let mut spec = SyntheticSceneSpec::preset("static", 17).unwrap();
    spec.frame_count = 6;
    spec.gaussian_count = 25;
    spec.resolution = 24;
    let scene = build_synthetic(&spec);
    let frames: Vec<LoadedFrame> = (0..spec.frame_count)
        .map(|f| {
            LoadedFrame::new(scene.cameras[f].clone(), scene.render_frame(f), scene.timestamps[f], 2)
        })
        .collect();
    let dataset = TrainDataset { train: frames, val: vec![] };
    let config = TrainConfig {
        total_iterations: 350,
        warmup_iterations: 150,
        densify_interval: 100,
        densify_until: 300,
        init_count: 30,
        eval_interval: 1000,
        ..Default::default()
    };
    let mut state = TrainState::new(&dataset, equal_windows(2).unwrap(), config.clone()).unwrap();
    let report = train(&mut state, &dataset).unwrap();
    let expected_downscaled: Vec<u64> = (0..150).collect();
    assert_eq!(report.events.downscaled_iters, expected_downscaled);
    assert_eq!(report.events.densify_iters, vec![100, 200, 300]);

    // Opacity pruning removes exactly the below-threshold set.
    let alphas = [0.001, 0.3, 0.0049, 0.0051, 0.9, 0.002];
    let mut set = GaussianSet::empty(1);
    for (i, &a) in alphas.iter().enumerate() {
        set.push(&ctrlgs_core::gaussians::GaussianParams {
            mean: nalgebra::Vector3::new(i as f64, 0.0, 0.0),
            rotation: nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0),
            log_scale: nalgebra::Vector3::new(-3.0, -3.0, -3.0),
            opacity_logit: ctrlgs_core::geometry::inverse_sigmoid(a),
            sh_coeffs: vec![0.5; 3],
        });
    }
    let mut adam = [
        AdamTensor::zeros(set.means.len()),
        AdamTensor::zeros(set.rotations.len()),
        AdamTensor::zeros(set.log_scales.len()),
        AdamTensor::zeros(set.opacity_logits.len()),
        AdamTensor::zeros(set.sh.len()),
    ];
    let mut stats = DensifyStats::zeros(set.len());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let outcome = densify_and_prune(&mut set, &mut adam, &mut stats, &TrainConfig::default(), &mut rng);
    assert_eq!(outcome.pruned, 3);
    let survivors: Vec<f64> = (0..set.len()).map(|i| set.mean(i).x).collect();
    assert_eq!(survivors, vec![1.0, 3.0, 4.0]);

    pass(9, "warm-up < 3000 exact, densify at 100..=10000 multiples, pruning removes alpha < 0.005 exactly");
}

// ---------------------------------------------------------------------------
// 10. Determinism and persistence
// ---------------------------------------------------------------------------

#[test]
fn acceptance_10_determinism_and_persistence() {
    use ctrlgs_core::checkpoint::{load_checkpoint, save_checkpoint};
    use ctrlgs_core::scene::{build_synthetic, SyntheticSceneSpec};
    use ctrlgs_core::train::{train, LoadedFrame, TrainDataset, TrainState};

    let mut spec = SyntheticSceneSpec::preset("two-burst", 23).unwrap();
    spec.frame_count = 10;
    spec.gaussian_count = 20;
    spec.resolution = 24;
    let scene = build_synthetic(&spec);
    let frames: Vec<LoadedFrame> = (0..spec.frame_count)
        .map(|f| {
            LoadedFrame::new(scene.cameras[f].clone(), scene.render_frame(f), scene.timestamps[f], 2)
        })
        .collect();
    let dataset = TrainDataset { train: frames.clone(), val: vec![frames[5].clone()] };
    let config = TrainConfig {
        total_iterations: 120,
        warmup_iterations: 40,
        init_count: 25,
        eval_interval: 60,
        deterministic: true,
        ..Default::default()
    };

    let dir = tempfile::tempdir().unwrap();
    let run = |path: &std::path::Path| {
        let mut state =
            TrainState::new(&dataset, equal_windows(3).unwrap(), config.clone()).unwrap();
        train(&mut state, &dataset).unwrap();
        save_checkpoint(&state, path, true).unwrap();
        state
    };
    let path_a = dir.path().join("a.ckpt");
    let path_b = dir.path().join("b.ckpt");
    let state = run(&path_a);
    run(&path_b);
    let bytes_a = std::fs::read(&path_a).unwrap();
    let bytes_b = std::fs::read(&path_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same-seed checkpoints differ");

    // Save/load/render round trip.
    let loaded = load_checkpoint(&path_a).unwrap();
    for &t in &[0.0, 0.33, 0.77, 1.0] {
        let a = state.render_at(&frames[0].camera, t);
        let b = loaded.render_at(&frames[0].camera, t);
        let bits_a: Vec<u64> = a.image.data.iter().flatten().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u64> = b.image.data.iter().flatten().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b, "round-trip render differs at t={t}");
    }

    // Segment-index lookup table vs linear scan on 1e5 random timestamps.
    let windows = state.quantizer.windows().clone();
    let linear = |t: f64, w: &WindowSet| -> usize {
        let b = w.boundaries();
        let n = w.window_count();
        let mut idx = n - 1;
        for k in 0..n {
            if t >= b[k] && (t < b[k + 1] || k == n - 1) {
                idx = k;
                break;
            }
        }
        idx
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5150);
    for _ in 0..100_000 {
        let t: f64 = rng.gen_range(0.0..=1.0);
        assert_eq!(state.quantizer.segment_index(t), linear(t, &windows));
    }
    pass(10, "bit-identical same-seed checkpoints, exact round-trip renders, table == linear scan on 1e5 samples");
}
