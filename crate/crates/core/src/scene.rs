//! Dataset manifests and synthetic scene generation.
//!
//! The manifest is a versioned JSON document (`ctrlgs_manifest_v1`) listing
//! per-frame camera intrinsics/extrinsics, image path, normalized timestamp,
//! and an optional train/val split tag. Synthetic scenes are generated from a
//! seeded spec with a piecewise-linear motion profile; targets are rendered
//! by the brute-force reference renderer so the data is exactly realizable
//! by the Gaussian model class, and stored as float PFM.

use crate::error::{Error, Result};
use crate::gaussians::{GaussianParams, GaussianSet};
use crate::geometry::{inverse_sigmoid, Camera, SH_C0};
use crate::img::ImageRgb;
use crate::render::render_reference;
use nalgebra::{Matrix3, Vector3, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

pub const MANIFEST_SCHEMA: &str = "ctrlgs_manifest_v1";
pub const TRACKS_HEADER: &str = "ctrlgs_tracks_v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

impl CameraSpec {
    pub fn from_camera(c: &Camera) -> CameraSpec {
        let r = &c.rotation;
        CameraSpec {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [c.translation.x, c.translation.y, c.translation.z],
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            near: c.near,
        }
    }

    pub fn to_camera(&self) -> Result<Camera> {
        let camera = Camera {
            rotation: Matrix3::from_rows(&[
                nalgebra::RowVector3::from_row_slice(&self.rotation[0]),
                nalgebra::RowVector3::from_row_slice(&self.rotation[1]),
                nalgebra::RowVector3::from_row_slice(&self.rotation[2]),
            ]),
            translation: Vector3::from_column_slice(&self.translation),
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            near: self.near,
        };
        camera.validate()?;
        Ok(camera)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameEntry {
    pub image: String,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<String>,
    pub camera: CameraSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema: String,
    pub frames: Vec<FrameEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DatasetFrame {
    pub camera: Camera,
    pub image_path: PathBuf,
    pub t: f64,
    pub split: Split,
}

/// A validated manifest entry before split resolution.
#[derive(Debug, Clone)]
pub struct ManifestFrame {
    pub camera: Camera,
    pub image_path: PathBuf,
    pub t: f64,
    pub split: Option<Split>,
}

/// Load and validate every frame of a manifest, sorted by timestamp, with
/// split tags parsed but not yet applied (flow estimation wants the full
/// sequence).
pub fn load_manifest(manifest_path: &Path) -> Result<Vec<ManifestFrame>> {
    let text = std::fs::read_to_string(manifest_path).map_err(|e| {
        Error::Ingestion(format!("cannot read manifest {}: {e}", manifest_path.display()))
    })?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Ingestion(format!("{}: {e}", manifest_path.display())))?;
    if manifest.schema != MANIFEST_SCHEMA {
        return Err(Error::Ingestion(format!(
            "{}: unsupported manifest schema {:?} (this build reads {MANIFEST_SCHEMA})",
            manifest_path.display(),
            manifest.schema
        )));
    }
    if manifest.frames.is_empty() {
        return Err(Error::Ingestion(format!(
            "{}: manifest lists no frames",
            manifest_path.display()
        )));
    }
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut indexed: Vec<(usize, FrameEntry)> = manifest.frames.into_iter().enumerate().collect();
    indexed.sort_by(|a, b| a.1.t.total_cmp(&b.1.t));

    let mut out = Vec::new();
    for (entry_idx, entry) in indexed {
        if !(0.0..=1.0).contains(&entry.t) {
            return Err(Error::Ingestion(format!(
                "frame {entry_idx} ({}): timestamp {} outside [0,1]",
                entry.image, entry.t
            )));
        }
        let image_path = base.join(&entry.image);
        if !image_path.is_file() {
            return Err(Error::Ingestion(format!(
                "frame {entry_idx}: missing image {}",
                image_path.display()
            )));
        }
        let camera = entry
            .camera
            .to_camera()
            .map_err(|e| Error::Ingestion(format!("frame {entry_idx} ({}): {e}", entry.image)))?;
        let split = match &entry.split {
            Some(s) if s == "train" => Some(Split::Train),
            Some(s) if s == "val" => Some(Split::Val),
            Some(other) => {
                return Err(Error::Ingestion(format!(
                    "frame {entry_idx}: unknown split tag {other:?}"
                )))
            }
            None => None,
        };
        out.push(ManifestFrame { camera, image_path, t: entry.t, split });
    }
    Ok(out)
}

/// Load and validate a manifest, applying split selection. Frames come back
/// sorted by timestamp.
///
/// Explicit split tags are honored (untagged frames in a tagged manifest are
/// dropped). With `auto_split` and no tags, every 4th frame becomes training
/// data and the middle frame between each training pair becomes validation;
/// without `auto_split`, untagged frames default to training.
pub fn load_dataset(manifest_path: &Path, auto_split: bool) -> Result<Vec<DatasetFrame>> {
    let frames = load_manifest(manifest_path)?;
    let any_tagged = frames.iter().any(|f| f.split.is_some());
    let mut out = Vec::new();
    for (order, frame) in frames.into_iter().enumerate() {
        let split = match frame.split {
            Some(s) => Some(s),
            None if any_tagged => None,
            None if auto_split => match order % 4 {
                0 => Some(Split::Train),
                2 => Some(Split::Val),
                _ => None,
            },
            None => Some(Split::Train),
        };
        if let Some(split) = split {
            out.push(DatasetFrame {
                camera: frame.camera,
                image_path: frame.image_path,
                t: frame.t,
                split,
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Ingestion("no frames left after split selection".into()));
    }
    Ok(out)
}

/// Load the image behind a manifest frame (shared with [`DatasetFrame`]).
pub fn load_manifest_image(frame: &ManifestFrame) -> Result<ImageRgb> {
    load_image_checked(&frame.image_path, &frame.camera)
}

/// Load a frame's image and check it against the camera resolution.
pub fn load_frame_image(frame: &DatasetFrame) -> Result<ImageRgb> {
    load_image_checked(&frame.image_path, &frame.camera)
}

fn load_image_checked(path: &Path, camera: &Camera) -> Result<ImageRgb> {
    let img = match path.extension().and_then(|e| e.to_str()) {
        Some("pfm") => ImageRgb::read_pfm(path)?,
        _ => ImageRgb::read_ppm(path)?,
    };
    if img.width != camera.width || img.height != camera.height {
        return Err(Error::Ingestion(format!(
            "{}: image is {}x{} but camera expects {}x{}",
            path.display(),
            img.width,
            img.height,
            camera.width,
            camera.height
        )));
    }
    Ok(img)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionSegment {
    /// Segment covers time up to this boundary.
    pub t_end: f64,
    /// Relative displacement rate within the segment.
    pub rate: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MotionProgram {
    pub segments: Vec<MotionSegment>,
    /// Shared displacement direction (normalized at use).
    pub direction: [f64; 3],
    /// Total shared displacement over the video, world units.
    pub amplitude: f64,
    /// Per-Gaussian random-direction displacement share, world units.
    pub wiggle_amplitude: f64,
}

impl MotionProgram {
    pub fn static_scene() -> MotionProgram {
        MotionProgram {
            segments: vec![MotionSegment { t_end: 1.0, rate: 0.0 }],
            direction: [1.0, 0.0, 0.0],
            amplitude: 0.0,
            wiggle_amplitude: 0.0,
        }
    }

    /// Two short high-motion bursts separated by quiet plateaus.
    pub fn two_burst() -> MotionProgram {
        MotionProgram {
            segments: vec![
                MotionSegment { t_end: 0.22, rate: 0.06 },
                MotionSegment { t_end: 0.29, rate: 6.0 },
                MotionSegment { t_end: 0.52, rate: 0.06 },
                MotionSegment { t_end: 0.59, rate: 6.0 },
                MotionSegment { t_end: 1.0, rate: 0.06 },
            ],
            direction: [1.0, 0.3, 0.0],
            amplitude: 0.45,
            wiggle_amplitude: 0.1,
        }
    }

    /// Normalized displacement profile at `t`: piecewise-linear, 0 at t=0,
    /// 1 at t=1 (identically 0 for zero-rate programs).
    pub fn profile(&self, t: f64) -> f64 {
        let total = self.integral(1.0);
        if total <= 0.0 {
            return 0.0;
        }
        self.integral(t) / total
    }

    fn integral(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut start = 0.0;
        for seg in &self.segments {
            let end = seg.t_end.min(t);
            if end > start {
                acc += seg.rate * (end - start);
            }
            start = seg.t_end;
            if start >= t {
                break;
            }
        }
        acc
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub radius: f64,
    pub height: f64,
    pub start_degrees: f64,
    pub span_degrees: f64,
    pub focal: f64,
}

impl Default for OrbitSpec {
    fn default() -> Self {
        OrbitSpec { radius: 3.4, height: 0.7, start_degrees: -35.0, span_degrees: 70.0, focal: 85.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticSceneSpec {
    pub name: String,
    pub gaussian_count: usize,
    pub resolution: usize,
    pub frame_count: usize,
    pub seed: u64,
    pub motion: MotionProgram,
    pub orbit: OrbitSpec,
    pub sh_degree: usize,
    /// Half extent of the canonical point cloud.
    pub spread: f64,
    pub scale_range: (f64, f64),
    pub background: [f64; 3],
}

impl SyntheticSceneSpec {
    pub fn preset(name: &str, seed: u64) -> Result<SyntheticSceneSpec> {
        let motion = match name {
            "static" => MotionProgram::static_scene(),
            "two-burst" => MotionProgram::two_burst(),
            other => {
                return Err(Error::Usage(format!(
                    "unknown scene preset {other:?} (available: static, two-burst)"
                )))
            }
        };
        Ok(SyntheticSceneSpec {
            name: name.to_string(),
            gaussian_count: 200,
            resolution: 64,
            frame_count: 60,
            seed,
            motion,
            orbit: OrbitSpec::default(),
            sh_degree: 1,
            spread: 0.65,
            scale_range: (0.05, 0.1),
            background: [0.0; 3],
        })
    }
}

/// Fully generated scene: canonical Gaussians, per-Gaussian wiggle
/// directions, camera path, and the realized displacement profile.
#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub spec: SyntheticSceneSpec,
    pub canonical: GaussianSet,
    pub wiggle_dirs: Vec<Vector3<f64>>,
    pub cameras: Vec<Camera>,
    pub timestamps: Vec<f64>,
    pub splits: Vec<Option<Split>>,
    pub profile: Vec<f64>,
}

impl GeneratedScene {
    /// Ground-truth Gaussian set at frame `k` (canonical means displaced by
    /// the motion program).
    pub fn set_at(&self, frame: usize) -> GaussianSet {
        let mut set = self.canonical.clone();
        let s = self.profile[frame];
        let dir = Vector3::from_column_slice(&self.spec.motion.direction).normalize();
        for i in 0..set.len() {
            let disp = s
                * (dir * self.spec.motion.amplitude
                    + self.wiggle_dirs[i] * self.spec.motion.wiggle_amplitude);
            for a in 0..3 {
                set.means[i * 3 + a] += disp[a];
            }
        }
        set
    }

    pub fn render_frame(&self, frame: usize) -> ImageRgb {
        let set = self.set_at(frame);
        render_reference(&set.as_source(), &self.cameras[frame], self.spec.background).image
    }
}

fn build_scene(spec: &SyntheticSceneSpec) -> GeneratedScene {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = if spec.sh_degree == 0 { 1 } else { 4 };
    let mut canonical = GaussianSet::empty(k);
    let mut wiggle_dirs = Vec::with_capacity(spec.gaussian_count);
    for _ in 0..spec.gaussian_count {
        let mean = Vector3::new(
            rng.gen_range(-spec.spread..spec.spread),
            rng.gen_range(-spec.spread..spec.spread),
            rng.gen_range(-spec.spread..spec.spread),
        );
        let raw_q = Vector4::new(
            rng.gen_range(-1.0..1.0f64),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let rotation = if raw_q.norm() > 1e-6 {
            raw_q / raw_q.norm()
        } else {
            Vector4::new(1.0, 0.0, 0.0, 0.0)
        };
        let sigma = rng.gen_range(spec.scale_range.0..spec.scale_range.1);
        let aniso = [
            sigma * rng.gen_range(0.7..1.4),
            sigma * rng.gen_range(0.7..1.4),
            sigma * rng.gen_range(0.7..1.4),
        ];
        let opacity = rng.gen_range(0.55..0.92);
        let mut sh = vec![0.0; k * 3];
        for c in 0..3 {
            sh[c] = rng.gen_range(0.15..0.85) / SH_C0;
        }
        if k == 4 {
            for idx in 3..12 {
                sh[idx] = rng.gen_range(-0.15..0.15);
            }
        }
        canonical.push(&GaussianParams {
            mean,
            rotation,
            log_scale: Vector3::new(aniso[0].ln(), aniso[1].ln(), aniso[2].ln()),
            opacity_logit: inverse_sigmoid(opacity),
            sh_coeffs: sh,
        });
        let mut w = Vector3::new(
            rng.gen_range(-1.0..1.0f64),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        if w.norm() < 1e-6 {
            w = Vector3::new(0.0, 1.0, 0.0);
        }
        wiggle_dirs.push(w.normalize());
    }

    let m = spec.frame_count;
    let mut cameras = Vec::with_capacity(m);
    let mut timestamps = Vec::with_capacity(m);
    let mut splits = Vec::with_capacity(m);
    let mut profile = Vec::with_capacity(m);
    for f in 0..m {
        let t = if m > 1 { f as f64 / (m - 1) as f64 } else { 0.0 };
        let angle = (spec.orbit.start_degrees + spec.orbit.span_degrees * t).to_radians();
        let eye = Vector3::new(
            spec.orbit.radius * angle.sin(),
            spec.orbit.height,
            -spec.orbit.radius * angle.cos(),
        );
        cameras.push(Camera::look_at(
            eye,
            Vector3::zeros(),
            spec.orbit.focal,
            spec.resolution,
            spec.resolution,
            0.1,
        ));
        timestamps.push(t);
        splits.push(match f % 4 {
            0 => Some(Split::Train),
            2 => Some(Split::Val),
            _ => None,
        });
        profile.push(spec.motion.profile(t));
    }

    GeneratedScene { spec: spec.clone(), canonical, wiggle_dirs, cameras, timestamps, splits, profile }
}

/// Generate a scene in memory without touching the filesystem.
pub fn build_synthetic(spec: &SyntheticSceneSpec) -> GeneratedScene {
    build_scene(spec)
}

/// Generate a scene and write images (PFM + PPM preview), the manifest, the
/// ground-truth track table, and the spec snapshot into `out_dir`.
/// Reproducible byte-for-byte for a fixed spec.
pub fn generate_synthetic(spec: &SyntheticSceneSpec, out_dir: &Path) -> Result<GeneratedScene> {
    let scene = build_scene(spec);
    std::fs::create_dir_all(out_dir)?;
    let images_dir = out_dir.join("images");
    std::fs::create_dir_all(&images_dir)?;

    let mut entries = Vec::new();
    for f in 0..spec.frame_count {
        let img = scene.render_frame(f);
        let name = format!("images/frame_{f:04}.pfm");
        img.write_pfm(&out_dir.join(&name))?;
        img.write_ppm(&out_dir.join(format!("images/frame_{f:04}.ppm")))?;
        entries.push(FrameEntry {
            image: name,
            t: scene.timestamps[f],
            split: scene.splits[f].map(|s| s.as_str().to_string()),
            camera: CameraSpec::from_camera(&scene.cameras[f]),
        });
    }
    let manifest = Manifest { schema: MANIFEST_SCHEMA.to_string(), frames: entries };
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Ingestion(format!("manifest serialization: {e}")))?;
    std::fs::write(out_dir.join("manifest.json"), manifest_json)?;

    write_tracks(&scene, &out_dir.join("tracks.txt"))?;
    let spec_json = serde_json::to_string_pretty(spec)
        .map_err(|e| Error::Ingestion(format!("spec serialization: {e}")))?;
    std::fs::write(out_dir.join("scene_spec.json"), spec_json)?;
    Ok(scene)
}

/// Versioned text table with everything needed to reconstruct every
/// trajectory: shared direction/amplitudes, per-frame profile values, and
/// per-Gaussian base positions and wiggle directions.
fn write_tracks(scene: &GeneratedScene, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{TRACKS_HEADER}")?;
    let m = &scene.spec.motion;
    writeln!(f, "direction {} {} {}", m.direction[0], m.direction[1], m.direction[2])?;
    writeln!(f, "amplitude {}", m.amplitude)?;
    writeln!(f, "wiggle_amplitude {}", m.wiggle_amplitude)?;
    writeln!(f, "frames {}", scene.timestamps.len())?;
    for (t, s) in scene.timestamps.iter().zip(scene.profile.iter()) {
        writeln!(f, "profile {t} {s}")?;
    }
    writeln!(f, "gaussians {}", scene.canonical.len())?;
    for i in 0..scene.canonical.len() {
        let b = scene.canonical.mean(i);
        let w = scene.wiggle_dirs[i];
        writeln!(f, "point {} {} {} {} {} {}", b.x, b.y, b.z, w.x, w.y, w.z)?;
    }
    Ok(())
}

/// Read back the per-frame profile values of a tracks file (used by tests
/// and diagnostics; full reconstruction uses the remaining records).
pub fn read_tracks_profile(path: &Path) -> Result<Vec<(f64, f64)>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut lines = f.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Ingestion("empty tracks file".into()))??;
    if header.trim() != TRACKS_HEADER {
        return Err(Error::Ingestion(format!(
            "expected {TRACKS_HEADER} header, got {header:?}"
        )));
    }
    let mut out = Vec::new();
    for line in lines {
        let line = line?;
        if let Some(rest) = line.strip_prefix("profile ") {
            let mut it = rest.split_whitespace();
            let t: f64 = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Ingestion("bad profile line".into()))?;
            let s: f64 = it
                .next()
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Ingestion("bad profile line".into()))?;
            out.push((t, s));
        }
    }
    Ok(out)
}
