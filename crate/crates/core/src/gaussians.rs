//! Canonical Gaussian storage (structure-of-arrays) and the borrowed view the
//! rasterizer consumes.
//!
//! Scales live in log domain and opacities in logit domain so unconstrained
//! optimizer steps keep them valid. Rotations are stored as raw quaternions
//! and normalized wherever a rotation matrix is built.

use nalgebra::{Vector3, Vector4};

/// Per-Gaussian parameters for a single primitive. Convenience view; bulk
/// storage is the SoA [`GaussianSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianParams {
    pub mean: Vector3<f64>,
    /// Raw quaternion (w, x, y, z); unit after optimizer renormalization.
    pub rotation: Vector4<f64>,
    /// Log of the per-axis standard deviation.
    pub log_scale: Vector3<f64>,
    /// Sigmoid-mapped to opacity in (0,1).
    pub opacity_logit: f64,
    /// Flat `k * 3` coefficients, `k` in {1,4}, coefficient-major `[r,g,b]`.
    pub sh_coeffs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSet {
    pub means: Vec<f64>,          // n * 3
    pub rotations: Vec<f64>,      // n * 4, (w, x, y, z)
    pub log_scales: Vec<f64>,     // n * 3
    pub opacity_logits: Vec<f64>, // n
    pub sh: Vec<f64>,             // n * k * 3, coefficient-major per Gaussian
    pub sh_coeff_count: usize,
}

impl GaussianSet {
    pub fn empty(sh_coeff_count: usize) -> Self {
        GaussianSet {
            means: Vec::new(),
            rotations: Vec::new(),
            log_scales: Vec::new(),
            opacity_logits: Vec::new(),
            sh: Vec::new(),
            sh_coeff_count,
        }
    }

    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logits.is_empty()
    }

    pub fn push(&mut self, g: &GaussianParams) {
        assert_eq!(g.sh_coeffs.len(), self.sh_coeff_count * 3);
        self.means.extend_from_slice(g.mean.as_slice());
        self.rotations.extend_from_slice(g.rotation.as_slice());
        self.log_scales.extend_from_slice(g.log_scale.as_slice());
        self.opacity_logits.push(g.opacity_logit);
        self.sh.extend_from_slice(&g.sh_coeffs);
    }

    pub fn get(&self, i: usize) -> GaussianParams {
        GaussianParams {
            mean: self.mean(i),
            rotation: self.rotation(i),
            log_scale: self.log_scale(i),
            opacity_logit: self.opacity_logits[i],
            sh_coeffs: self.sh_coeffs(i).to_vec(),
        }
    }

    #[inline]
    pub fn mean(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.means[i * 3..i * 3 + 3])
    }

    #[inline]
    pub fn rotation(&self, i: usize) -> Vector4<f64> {
        Vector4::from_column_slice(&self.rotations[i * 4..i * 4 + 4])
    }

    #[inline]
    pub fn log_scale(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.log_scales[i * 3..i * 3 + 3])
    }

    #[inline]
    pub fn sh_coeffs(&self, i: usize) -> &[f64] {
        let k3 = self.sh_coeff_count * 3;
        &self.sh[i * k3..(i + 1) * k3]
    }

    /// Renormalize all stored quaternions (called after optimizer steps).
    pub fn renormalize_rotations(&mut self) {
        for i in 0..self.len() {
            let q = self.rotation(i);
            let n = q.norm();
            if n > 0.0 {
                for (dst, v) in self.rotations[i * 4..i * 4 + 4].iter_mut().zip(q.iter()) {
                    *dst = v / n;
                }
            }
        }
    }

    pub fn as_source(&self) -> SplatSource<'_> {
        SplatSource {
            means: &self.means,
            rotations: &self.rotations,
            log_scales: &self.log_scales,
            opacity_logits: &self.opacity_logits,
            sh: &self.sh,
            sh_coeff_count: self.sh_coeff_count,
        }
    }
}

/// Borrowed, possibly deformed view of a Gaussian population that the
/// rasterizer renders. Deformation replaces means/rotations/log-scales while
/// opacity and SH stay bound to the canonical set.
#[derive(Debug, Clone, Copy)]
pub struct SplatSource<'a> {
    pub means: &'a [f64],
    pub rotations: &'a [f64],
    pub log_scales: &'a [f64],
    pub opacity_logits: &'a [f64],
    pub sh: &'a [f64],
    pub sh_coeff_count: usize,
}

impl<'a> SplatSource<'a> {
    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logits.is_empty()
    }

    #[inline]
    pub fn mean(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.means[i * 3..i * 3 + 3])
    }

    #[inline]
    pub fn rotation(&self, i: usize) -> Vector4<f64> {
        Vector4::from_column_slice(&self.rotations[i * 4..i * 4 + 4])
    }

    #[inline]
    pub fn log_scale(&self, i: usize) -> Vector3<f64> {
        Vector3::from_column_slice(&self.log_scales[i * 3..i * 3 + 3])
    }

    #[inline]
    pub fn sh_coeffs(&self, i: usize) -> &'a [f64] {
        let k3 = self.sh_coeff_count * 3;
        &self.sh[i * k3..(i + 1) * k3]
    }
}

/// Gradients for every tensor of a [`GaussianSet`] (or a deformed view of
/// one). Shapes mirror the set exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianGrads {
    pub means: Vec<f64>,
    pub rotations: Vec<f64>,
    pub log_scales: Vec<f64>,
    pub opacity_logits: Vec<f64>,
    pub sh: Vec<f64>,
}

impl GaussianGrads {
    pub fn zeros(n: usize, sh_coeff_count: usize) -> Self {
        GaussianGrads {
            means: vec![0.0; n * 3],
            rotations: vec![0.0; n * 4],
            log_scales: vec![0.0; n * 3],
            opacity_logits: vec![0.0; n],
            sh: vec![0.0; n * sh_coeff_count * 3],
        }
    }

    pub fn len(&self) -> usize {
        self.opacity_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.opacity_logits.is_empty()
    }
}
