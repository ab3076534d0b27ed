//! Tile-binned, depth-sorted, front-to-back alpha compositing of projected
//! Gaussians, with an exact brute-force reference renderer and reverse-mode
//! gradients for every splat attribute.
//!
//! The tiled and reference paths share the projection, the influence-
//! footprint cutoff, and the effective-alpha clamp, so on scenes where early
//! termination never fires they agree bitwise. Gradient accumulation runs
//! per tile into local buffers that are reduced in tile order, which makes
//! the backward pass bitwise reproducible regardless of thread scheduling.

mod composite;
mod projection;
mod tiles;

pub use composite::{composite_backward, composite_forward, render_reference};
pub use projection::{backproject_splats, cull_and_project};
pub use tiles::{bin_tiles, TileGrid};

use crate::gaussians::{GaussianGrads, SplatSource};
use crate::geometry::Camera;
use crate::img::ImageRgb;
use nalgebra::{Matrix2, Vector2};

/// Effective per-splat alpha is clamped below 1 so the transmittance update
/// stays invertible in the backward pass.
pub const ALPHA_MAX: f64 = 0.9999;

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    pub tile_size: usize,
    /// Front-to-back compositing stops once transmittance drops below this.
    pub term_threshold: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { tile_size: 16, term_threshold: 1e-4 }
    }
}

/// One projected Gaussian ready for compositing.
#[derive(Debug, Clone)]
pub struct SplatInstance {
    pub mean2d: Vector2<f64>,
    pub conic_inv: Matrix2<f64>,
    /// Axis-aligned half-extents (pixels) of the compositing footprint; the
    /// AABB of the `CUTOFF_SQ` influence ellipse, a superset of the 3-sigma
    /// extent used for culling.
    pub radii: Vector2<f64>,
    pub depth: f64,
    pub alpha: f64,
    /// Clamped RGB used for blending.
    pub color: [f64; 3],
    pub source_index: usize,
}

/// Rendered image plus per-pixel residual transmittance.
#[derive(Debug, Clone)]
pub struct Framebuffer {
    pub image: ImageRgb,
    pub transmittance: Vec<f64>,
    pub background: [f64; 3],
}

impl Framebuffer {
    pub fn new(width: usize, height: usize, background: [f64; 3]) -> Self {
        Framebuffer {
            image: ImageRgb::filled(width, height, background),
            transmittance: vec![1.0; width * height],
            background,
        }
    }
}

/// Per-splat partial derivatives produced by the compositing backward pass.
#[derive(Debug, Clone)]
pub struct SplatGrads {
    pub mean2d: Vec<Vector2<f64>>,
    pub conic_inv: Vec<Matrix2<f64>>,
    pub alpha: Vec<f64>,
    pub color: Vec<[f64; 3]>,
}

impl SplatGrads {
    pub fn zeros(n: usize) -> Self {
        SplatGrads {
            mean2d: vec![Vector2::zeros(); n],
            conic_inv: vec![Matrix2::zeros(); n],
            alpha: vec![0.0; n],
            color: vec![[0.0; 3]; n],
        }
    }
}

/// Projection artifacts retained between the forward and backward passes.
pub struct RenderArtifacts {
    pub splats: Vec<SplatInstance>,
    pub tiles: TileGrid,
}

/// Full forward pass: cull, project, bin, composite.
pub fn render(
    source: &SplatSource<'_>,
    camera: &Camera,
    background: [f64; 3],
    opts: &RenderOptions,
) -> (Framebuffer, RenderArtifacts) {
    let splats = cull_and_project(source, camera);
    let tiles = bin_tiles(&splats, (camera.width, camera.height), opts.tile_size);
    let fb = composite_forward(&splats, &tiles, (camera.width, camera.height), background, opts);
    (fb, RenderArtifacts { splats, tiles })
}

/// Full backward pass: composite gradients per splat, then chain them back
/// to the source Gaussian parameters.
///
/// Requires the artifacts of the matching forward pass; the per-pixel
/// blending is replayed rather than stored.
pub fn render_backward(
    source: &SplatSource<'_>,
    camera: &Camera,
    artifacts: &RenderArtifacts,
    background: [f64; 3],
    d_image: &ImageRgb,
    opts: &RenderOptions,
) -> (SplatGrads, GaussianGrads) {
    let splat_grads = composite_backward(
        &artifacts.splats,
        &artifacts.tiles,
        (camera.width, camera.height),
        background,
        d_image,
        opts,
    );
    let gauss_grads = backproject_splats(source, camera, &artifacts.splats, &splat_grads);
    (splat_grads, gauss_grads)
}
