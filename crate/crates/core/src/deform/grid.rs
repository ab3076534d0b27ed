//! Multi-resolution HexPlane feature grids.
//!
//! A 4D (x, y, z, t) field factorized into six 2D planes over the coordinate
//! pairs (x,y), (x,z), (y,z), (x,t), (y,t), (z,t), at two resolutions.
//! Queries bilinearly interpolate each plane, fuse the six features by
//! elementwise product, and concatenate across resolutions.

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Coordinate-axis pairs of the six planes; axis 3 is time.
pub const PLANE_AXES: [(usize, usize); 6] = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3)];

/// Axis-aligned bounds used to normalize spatial queries into [0,1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SceneBounds {
    pub fn cube(half_extent: f64) -> SceneBounds {
        SceneBounds { min: [-half_extent; 3], max: [half_extent; 3] }
    }

    /// Normalize one spatial coordinate; returns (u, du/dx, clamped).
    #[inline]
    pub fn normalize_axis(&self, axis: usize, v: f64) -> (f64, f64, bool) {
        let range = self.max[axis] - self.min[axis];
        let u = (v - self.min[axis]) / range;
        if u < 0.0 {
            (0.0, 0.0, true)
        } else if u > 1.0 {
            (1.0, 0.0, true)
        } else {
            (u, 1.0 / range, false)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    /// Vertex count along the first / second axis of the pair.
    pub res0: usize,
    pub res1: usize,
    pub feature_dim: usize,
    /// `res0 * res1 * feature_dim`, row-major over (i0, i1).
    pub data: Vec<f64>,
}

impl Plane {
    fn idx(&self, i0: usize, i1: usize) -> usize {
        (i0 * self.res1 + i1) * self.feature_dim
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridLevel {
    pub spatial_res: usize,
    pub temporal_res: usize,
    pub planes: Vec<Plane>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub feature_dim: usize,
    pub base_spatial_res: usize,
    pub base_temporal_res: usize,
    pub level_count: usize,
    pub upsample: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            feature_dim: 8,
            base_spatial_res: 16,
            base_temporal_res: 8,
            level_count: 2,
            upsample: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HexPlaneGrid {
    pub config: GridConfig,
    pub bounds: SceneBounds,
    pub levels: Vec<GridLevel>,
}

/// Bilinear sample footprint on one plane: four corners and their weights.
#[derive(Debug, Clone, Copy)]
pub struct PlaneSample {
    pub i0: usize,
    pub i1: usize,
    pub f0: f64,
    pub f1: f64,
    /// d(grid coordinate)/d(normalized coordinate) = res - 1.
    pub scale0: f64,
    pub scale1: f64,
}

impl HexPlaneGrid {
    /// Multiplicative-fusion init: features uniform in [0.1, 0.5] so plane
    /// products stay well away from zero.
    pub fn new<R: Rng>(config: GridConfig, bounds: SceneBounds, rng: &mut R) -> HexPlaneGrid {
        let mut levels = Vec::new();
        for l in 0..config.level_count {
            let mul = config.upsample.pow(l as u32);
            let spatial = config.base_spatial_res * mul;
            let temporal = config.base_temporal_res * mul;
            let planes = PLANE_AXES
                .iter()
                .map(|&(a0, a1)| {
                    let res0 = if a0 == 3 { temporal } else { spatial };
                    let res1 = if a1 == 3 { temporal } else { spatial };
                    Plane {
                        res0,
                        res1,
                        feature_dim: config.feature_dim,
                        data: (0..res0 * res1 * config.feature_dim)
                            .map(|_| rng.gen_range(0.1..0.5))
                            .collect(),
                    }
                })
                .collect();
            levels.push(GridLevel { spatial_res: spatial, temporal_res: temporal, planes });
        }
        HexPlaneGrid { config, bounds, levels }
    }

    /// Fused feature width fed to the fusion network.
    pub fn fused_dim(&self) -> usize {
        self.config.feature_dim * self.levels.len()
    }

    /// Fused features at normalized coordinates `[x, y, z, t]` (all in
    /// [0,1]). Returns the fused vector plus per-plane samples and per-plane
    /// interpolated features for the backward pass.
    pub fn sample(
        &self,
        coords: &[f64; 4],
    ) -> (Vec<f64>, Vec<[PlaneSample; 6]>, Vec<[Vec<f64>; 6]>) {
        let f = self.config.feature_dim;
        let mut fused = Vec::with_capacity(self.fused_dim());
        let mut samples = Vec::with_capacity(self.levels.len());
        let mut features = Vec::with_capacity(self.levels.len());
        for level in &self.levels {
            let mut level_samples = [PlaneSample {
                i0: 0,
                i1: 0,
                f0: 0.0,
                f1: 0.0,
                scale0: 0.0,
                scale1: 0.0,
            }; 6];
            let mut level_features: [Vec<f64>; 6] = Default::default();
            for (p, &(a0, a1)) in PLANE_AXES.iter().enumerate() {
                let plane = &level.planes[p];
                let s = plane_sample(plane, coords[a0], coords[a1]);
                let feat = interpolate(plane, &s);
                level_samples[p] = s;
                level_features[p] = feat;
            }
            // Elementwise product across the six planes.
            for c in 0..f {
                let mut prod = 1.0;
                for lf in &level_features {
                    prod *= lf[c];
                }
                fused.push(prod);
            }
            samples.push(level_samples);
            features.push(level_features);
        }
        (fused, samples, features)
    }

    /// Backward of [`sample`]: scatter dL/dfused into per-plane gradient
    /// buffers (indexed `level * 6 + plane`) and accumulate
    /// dL/d(normalized coords).
    pub fn sample_backward(
        &self,
        d_fused: &[f64],
        samples: &[[PlaneSample; 6]],
        features: &[[Vec<f64>; 6]],
        grads: &mut [Vec<f64>],
        d_coords: &mut [f64; 4],
    ) {
        let f = self.config.feature_dim;
        for (l, level) in self.levels.iter().enumerate() {
            let upstream = &d_fused[l * f..(l + 1) * f];
            for (p, &(a0, a1)) in PLANE_AXES.iter().enumerate() {
                let plane = &level.planes[p];
                let s = &samples[l][p];
                // dL/d(this plane's feature c) = upstream_c * prod of others.
                let mut d_feat = vec![0.0; f];
                for c in 0..f {
                    let mut other = 1.0;
                    for (q, lf) in features[l].iter().enumerate() {
                        if q != p {
                            other *= lf[c];
                        }
                    }
                    d_feat[c] = upstream[c] * other;
                }
                let (d0, d1) =
                    interpolate_backward(plane, s, &d_feat, &mut grads[l * 6 + p]);
                d_coords[a0] += d0 * s.scale0;
                d_coords[a1] += d1 * s.scale1;
            }
        }
    }

    /// L2 total variation over all planes (mean of squared neighbor
    /// differences along both plane axes), with optional gradients into
    /// per-plane buffers indexed `level * 6 + plane`.
    pub fn total_variation(&self, grads: Option<&mut [Vec<f64>]>) -> f64 {
        let mut total = 0.0;
        let mut count = 0usize;
        let mut grads = grads;
        for (l, level) in self.levels.iter().enumerate() {
            for (p, plane) in level.planes.iter().enumerate() {
                for i0 in 0..plane.res0 {
                    for i1 in 0..plane.res1 {
                        let base = plane.idx(i0, i1);
                        if i0 + 1 < plane.res0 {
                            let nb = plane.idx(i0 + 1, i1);
                            for c in 0..plane.feature_dim {
                                let d = plane.data[nb + c] - plane.data[base + c];
                                total += d * d;
                                count += 1;
                                if let Some(g) = grads.as_deref_mut() {
                                    g[l * 6 + p][nb + c] += 2.0 * d;
                                    g[l * 6 + p][base + c] -= 2.0 * d;
                                }
                            }
                        }
                        if i1 + 1 < plane.res1 {
                            let nb = plane.idx(i0, i1 + 1);
                            for c in 0..plane.feature_dim {
                                let d = plane.data[nb + c] - plane.data[base + c];
                                total += d * d;
                                count += 1;
                                if let Some(g) = grads.as_deref_mut() {
                                    g[l * 6 + p][nb + c] += 2.0 * d;
                                    g[l * 6 + p][base + c] -= 2.0 * d;
                                }
                            }
                        }
                    }
                }
            }
        }
        if count == 0 {
            return 0.0;
        }
        // Normalizing by the pair count keeps tv_weight resolution-agnostic;
        // gradients above are pre-normalization, fixed here.
        let norm = 1.0 / count as f64;
        if let Some(g) = grads.as_deref_mut() {
            for plane in g.iter_mut() {
                for v in plane.iter_mut() {
                    *v *= norm;
                }
            }
        }
        total * norm
    }
}

fn plane_sample(plane: &Plane, u0: f64, u1: f64) -> PlaneSample {
    let g0 = u0.clamp(0.0, 1.0) * (plane.res0 - 1) as f64;
    let g1 = u1.clamp(0.0, 1.0) * (plane.res1 - 1) as f64;
    let i0 = (g0.floor() as usize).min(plane.res0.saturating_sub(2));
    let i1 = (g1.floor() as usize).min(plane.res1.saturating_sub(2));
    PlaneSample {
        i0,
        i1,
        f0: g0 - i0 as f64,
        f1: g1 - i1 as f64,
        scale0: (plane.res0 - 1) as f64,
        scale1: (plane.res1 - 1) as f64,
    }
}

fn interpolate(plane: &Plane, s: &PlaneSample) -> Vec<f64> {
    let f = plane.feature_dim;
    let w00 = (1.0 - s.f0) * (1.0 - s.f1);
    let w01 = (1.0 - s.f0) * s.f1;
    let w10 = s.f0 * (1.0 - s.f1);
    let w11 = s.f0 * s.f1;
    let i00 = plane.idx(s.i0, s.i1);
    let i01 = plane.idx(s.i0, s.i1 + 1);
    let i10 = plane.idx(s.i0 + 1, s.i1);
    let i11 = plane.idx(s.i0 + 1, s.i1 + 1);
    (0..f)
        .map(|c| {
            w00 * plane.data[i00 + c]
                + w01 * plane.data[i01 + c]
                + w10 * plane.data[i10 + c]
                + w11 * plane.data[i11 + c]
        })
        .collect()
}

/// Scatter feature gradients to the four corners; returns dL/d(grid coords).
fn interpolate_backward(
    plane: &Plane,
    s: &PlaneSample,
    d_feat: &[f64],
    grad: &mut [f64],
) -> (f64, f64) {
    let w00 = (1.0 - s.f0) * (1.0 - s.f1);
    let w01 = (1.0 - s.f0) * s.f1;
    let w10 = s.f0 * (1.0 - s.f1);
    let w11 = s.f0 * s.f1;
    let i00 = plane.idx(s.i0, s.i1);
    let i01 = plane.idx(s.i0, s.i1 + 1);
    let i10 = plane.idx(s.i0 + 1, s.i1);
    let i11 = plane.idx(s.i0 + 1, s.i1 + 1);
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for (c, &df) in d_feat.iter().enumerate() {
        grad[i00 + c] += df * w00;
        grad[i01 + c] += df * w01;
        grad[i10 + c] += df * w10;
        grad[i11 + c] += df * w11;
        let v00 = plane.data[i00 + c];
        let v01 = plane.data[i01 + c];
        let v10 = plane.data[i10 + c];
        let v11 = plane.data[i11 + c];
        // d(feature)/df0 and /df1 of the bilinear form.
        d0 += df * ((1.0 - s.f1) * (v10 - v00) + s.f1 * (v11 - v01));
        d1 += df * ((1.0 - s.f0) * (v01 - v00) + s.f0 * (v11 - v10));
    }
    (d0, d1)
}
