//! Closed-form splat geometry: covariance construction from rotation and
//! scale, perspective projection of covariances to screen space, Gaussian
//! falloff evaluation, and low-order spherical-harmonic color decoding.
//!
//! Every forward operation here has a matching analytic backward used by the
//! rasterizer's reverse pass; all of them are checked against central finite
//! differences in the gradient suite.

use crate::error::{Error, Result};
use nalgebra::{Matrix2, Matrix3, Vector2, Vector3, Vector4};

/// Screen-space low-pass dilation added to both diagonal entries of the
/// projected covariance. Guarantees invertibility and anti-aliases sub-pixel
/// splats.
pub const CONIC_DILATION: f64 = 0.3;

/// Squared Mahalanobis extent used for visibility culling (3 sigma).
pub const CULL_SIGMA: f64 = 3.0;

/// Squared Mahalanobis cutoff for splat influence during compositing,
/// shared by the tiled and reference renderers (and by tile binning, whose
/// extent must contain it). The boundary weight exp(-16) ~ 1e-7 sits below
/// both the oracle tolerance and finite-difference resolution.
pub const CUTOFF_SQ: f64 = 32.0;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;

/// Pinhole camera with a rigid world-to-camera transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Camera {
    /// Rotation block of the viewing transform (world to camera).
    pub rotation: Matrix3<f64>,
    /// Translation part of the viewing transform.
    pub translation: Vector3<f64>,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub near: f64,
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.near > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "camera near plane must be positive, got {}",
                self.near
            )));
        }
        let rtr = self.rotation.transpose() * self.rotation;
        let det = self.rotation.determinant();
        if (rtr - Matrix3::identity()).norm() > 1e-7 || (det - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter(
                "camera rotation block is not a proper rotation".into(),
            ));
        }
        if self.width == 0 || self.height == 0 || !self.fx.is_finite() || !self.fy.is_finite() {
            return Err(Error::InvalidParameter("degenerate camera intrinsics".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn world_to_cam(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Unit vector from the camera center toward a world point.
    pub fn view_direction(&self, world: &Vector3<f64>) -> Vector3<f64> {
        let v = world - self.center();
        let n = v.norm();
        if n > 0.0 {
            v / n
        } else {
            Vector3::new(0.0, 0.0, 1.0)
        }
    }

    #[inline]
    pub fn project(&self, cam: &Vector3<f64>) -> Vector2<f64> {
        Vector2::new(
            self.fx * cam.x / cam.z + self.cx,
            self.fy * cam.y / cam.z + self.cy,
        )
    }

    /// Camera scaled for warm-up rendering at `1/factor` resolution.
    pub fn downscaled(&self, factor: usize) -> Camera {
        let f = factor as f64;
        Camera {
            rotation: self.rotation,
            translation: self.translation,
            fx: self.fx / f,
            fy: self.fy / f,
            cx: self.cx / f,
            cy: self.cy / f,
            width: self.width.div_ceil(factor),
            height: self.height.div_ceil(factor),
            near: self.near,
        }
    }

    /// Camera at `eye` looking toward `target` with +y world up.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
        near: f64,
    ) -> Camera {
        let forward = (target - eye).normalize();
        let world_up = Vector3::new(0.0, 1.0, 0.0);
        let right = forward.cross(&world_up);
        let right = if right.norm() < 1e-9 {
            Vector3::new(1.0, 0.0, 0.0)
        } else {
            right.normalize()
        };
        let up = right.cross(&forward);
        // Camera axes: +x right, +y down, +z forward.
        let rotation = Matrix3::from_rows(&[
            right.transpose(),
            (-up).transpose(),
            forward.transpose(),
        ]);
        let translation = -(rotation * eye);
        Camera {
            rotation,
            translation,
            fx: focal,
            fy: focal,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            near,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn inverse_sigmoid(a: f64) -> f64 {
    (a / (1.0 - a)).ln()
}

/// Normalize a raw quaternion `(w, x, y, z)`.
#[inline]
pub fn normalize_quaternion(q: &Vector4<f64>) -> Vector4<f64> {
    let n = q.norm();
    if n > 0.0 {
        q / n
    } else {
        Vector4::new(1.0, 0.0, 0.0, 0.0)
    }
}

/// Rotation matrix of a unit quaternion `(w, x, y, z)`.
pub fn quaternion_to_rotation(q: &Vector4<f64>) -> Matrix3<f64> {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Partial derivatives of the rotation matrix w.r.t. each unit-quaternion
/// component, in the order (w, x, y, z).
pub fn rotation_quaternion_partials(q: &Vector4<f64>) -> [Matrix3<f64>; 4] {
    let (w, x, y, z) = (q[0], q[1], q[2], q[3]);
    let dw = Matrix3::new(0.0, -z, y, z, 0.0, -x, -y, x, 0.0) * 2.0;
    let dx = Matrix3::new(0.0, y, z, y, -2.0 * x, -w, z, w, -2.0 * x) * 2.0;
    let dy = Matrix3::new(-2.0 * y, x, w, x, 0.0, z, -w, z, -2.0 * y) * 2.0;
    let dz = Matrix3::new(-2.0 * z, -w, x, w, -2.0 * z, y, x, y, 0.0) * 2.0;
    [dw, dx, dy, dz]
}

/// World-space covariance from a rotation quaternion and per-axis standard
/// deviations: `R * diag(s^2) * R^T`.
pub fn build_covariance(rotation: &Vector4<f64>, scale: &Vector3<f64>) -> Result<Matrix3<f64>> {
    if !rotation.iter().all(|v| v.is_finite()) || !scale.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidParameter(
            "non-finite rotation or scale in covariance construction".into(),
        ));
    }
    if scale.iter().any(|&s| s <= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "covariance scale must be positive, got {:?}",
            scale
        )));
    }
    let q = normalize_quaternion(rotation);
    let r = quaternion_to_rotation(&q);
    let d = Matrix3::from_diagonal(&Vector3::new(
        scale.x * scale.x,
        scale.y * scale.y,
        scale.z * scale.z,
    ));
    Ok(r * d * r.transpose())
}

/// Backward of [`build_covariance`] w.r.t. the raw (unnormalized) quaternion
/// and the log of the scale. `upstream` is dL/dSigma as a full 3x3.
pub fn build_covariance_backward(
    rotation: &Vector4<f64>,
    log_scale: &Vector3<f64>,
    upstream: &Matrix3<f64>,
) -> (Vector4<f64>, Vector3<f64>) {
    let q = normalize_quaternion(rotation);
    let r = quaternion_to_rotation(&q);
    let s2 = Vector3::new(
        (2.0 * log_scale.x).exp(),
        (2.0 * log_scale.y).exp(),
        (2.0 * log_scale.z).exp(),
    );
    let d = Matrix3::from_diagonal(&s2);

    // Sigma = R D R^T:  dL/dR = (G + G^T) R D,  dL/dD = R^T G R (diagonal).
    let g_sym = upstream + upstream.transpose();
    let d_r = g_sym * r * d;
    let rt_g_r = r.transpose() * upstream * r;
    let d_log_scale = Vector3::new(
        2.0 * s2.x * rt_g_r[(0, 0)],
        2.0 * s2.y * rt_g_r[(1, 1)],
        2.0 * s2.z * rt_g_r[(2, 2)],
    );

    // Chain through the quaternion normalization.
    let partials = rotation_quaternion_partials(&q);
    let mut d_unit = Vector4::zeros();
    for (k, p) in partials.iter().enumerate() {
        d_unit[k] = p.component_mul(&d_r).sum();
    }
    let norm = rotation.norm().max(1e-300);
    let d_raw = (d_unit - q * q.dot(&d_unit)) / norm;
    (d_raw, d_log_scale)
}

/// Perspective Jacobian of the projection at a camera-space point, top two
/// rows: `[[fx/z, 0, -fx*x/z^2], [0, fy/z, -fy*y/z^2]]`.
pub fn perspective_jacobian(mean_cam: &Vector3<f64>, fx: f64, fy: f64) -> nalgebra::Matrix2x3<f64> {
    let (x, y, z) = (mean_cam.x, mean_cam.y, mean_cam.z);
    nalgebra::Matrix2x3::new(
        fx / z,
        0.0,
        -fx * x / (z * z),
        0.0,
        fy / z,
        -fy * y / (z * z),
    )
}

/// Project a camera-frame covariance to screen space: `J * cov * J^T` plus
/// the low-pass dilation on the diagonal. Returns `None` when the point sits
/// behind the near plane (culled, not fatal).
pub fn project_covariance(
    cov_cam: &Matrix3<f64>,
    mean_cam: &Vector3<f64>,
    fx: f64,
    fy: f64,
    near: f64,
) -> Option<Matrix2<f64>> {
    if mean_cam.z <= near {
        return None;
    }
    let j = perspective_jacobian(mean_cam, fx, fy);
    let mut s = j * cov_cam * j.transpose();
    s[(0, 0)] += CONIC_DILATION;
    s[(1, 1)] += CONIC_DILATION;
    // Exact symmetry keeps the inverse symmetric downstream.
    let off = 0.5 * (s[(0, 1)] + s[(1, 0)]);
    s[(0, 1)] = off;
    s[(1, 0)] = off;
    Some(s)
}

/// Backward of [`project_covariance`]: given dL/dSigma2d, produce
/// dL/dcov_cam and the dL/dmean_cam contribution that flows through the
/// Jacobian entries.
pub fn project_covariance_backward(
    cov_cam: &Matrix3<f64>,
    mean_cam: &Vector3<f64>,
    fx: f64,
    fy: f64,
    upstream: &Matrix2<f64>,
) -> (Matrix3<f64>, Vector3<f64>) {
    let j = perspective_jacobian(mean_cam, fx, fy);
    let d_cov_cam = j.transpose() * upstream * j;
    // dL/dJ = (G + G^T) J cov.
    let d_j = (upstream + upstream.transpose()) * j * cov_cam;
    let (x, y, z) = (mean_cam.x, mean_cam.y, mean_cam.z);
    let z2 = z * z;
    let z3 = z2 * z;
    let d_x = d_j[(0, 2)] * (-fx / z2);
    let d_y = d_j[(1, 2)] * (-fy / z2);
    let d_z = d_j[(0, 0)] * (-fx / z2)
        + d_j[(1, 1)] * (-fy / z2)
        + d_j[(0, 2)] * (2.0 * fx * x / z3)
        + d_j[(1, 2)] * (2.0 * fy * y / z3);
    (d_cov_cam, Vector3::new(d_x, d_y, d_z))
}

/// Gaussian falloff weight `exp(-0.5 * offset^T conic_inv offset)`.
#[inline]
pub fn evaluate_gaussian(conic_inv: &Matrix2<f64>, offset: &Vector2<f64>) -> f64 {
    let q = quadratic_form(conic_inv, offset);
    (-0.5 * q).exp()
}

#[inline]
pub fn quadratic_form(m: &Matrix2<f64>, d: &Vector2<f64>) -> f64 {
    m[(0, 0)] * d.x * d.x + (m[(0, 1)] + m[(1, 0)]) * d.x * d.y + m[(1, 1)] * d.y * d.y
}

/// Decode RGB from SH coefficients (`k` per channel, degree <= 1) and a unit
/// view direction. Output clamped to [0,1].
///
/// Layout of `coeffs`: flat `k * 3`, coefficient-major `[r, g, b]` triplets.
pub fn sh_to_color(coeffs: &[f64], view_dir: &Vector3<f64>) -> Result<[f64; 3]> {
    let basis = sh_basis(coeffs.len() / 3, view_dir)?;
    let mut rgb = [0.0f64; 3];
    for (coeff, b) in coeffs.chunks_exact(3).zip(basis.iter()) {
        for c in 0..3 {
            rgb[c] += coeff[c] * b;
        }
    }
    for c in &mut rgb {
        *c = c.clamp(0.0, 1.0);
    }
    Ok(rgb)
}

/// SH basis values for k in {1, 4}; degree-1 ordering follows the usual
/// real-SH convention (-y, z, -x scaled by the degree-1 constant).
pub fn sh_basis(k: usize, dir: &Vector3<f64>) -> Result<Vec<f64>> {
    match k {
        1 => Ok(vec![SH_C0]),
        4 => Ok(vec![SH_C0, -SH_C1 * dir.y, SH_C1 * dir.z, -SH_C1 * dir.x]),
        _ => Err(Error::Config(format!(
            "unsupported SH coefficient count {k} (only degree <= 1, k in {{1,4}})"
        ))),
    }
}

/// Backward of [`sh_to_color`]: accumulates dL/dcoeffs into `d_coeffs`
/// (flat `k * 3`) and returns the dL/dview_dir contribution. `pre_clamp` is
/// the unclamped color; gradient is zero where the clamp saturated.
pub fn sh_color_backward(
    coeffs: &[f64],
    view_dir: &Vector3<f64>,
    pre_clamp: &[f64; 3],
    upstream: &[f64; 3],
    d_coeffs: &mut [f64],
) -> Vector3<f64> {
    let k = coeffs.len() / 3;
    let basis = sh_basis(k, view_dir).expect("validated upstream");
    let mut gate = [0.0f64; 3];
    for c in 0..3 {
        gate[c] = if (0.0..=1.0).contains(&pre_clamp[c]) {
            upstream[c]
        } else {
            0.0
        };
    }
    for (i, b) in basis.iter().enumerate() {
        for c in 0..3 {
            d_coeffs[i * 3 + c] += gate[c] * b;
        }
    }
    let mut d_dir = Vector3::zeros();
    if k == 4 {
        for c in 0..3 {
            d_dir.y += gate[c] * -SH_C1 * coeffs[3 + c];
            d_dir.z += gate[c] * SH_C1 * coeffs[6 + c];
            d_dir.x += gate[c] * -SH_C1 * coeffs[9 + c];
        }
    }
    d_dir
}

/// Unclamped SH decode, needed by the backward pass to detect saturation.
pub fn sh_to_color_unclamped(coeffs: &[f64], view_dir: &Vector3<f64>) -> Result<[f64; 3]> {
    let basis = sh_basis(coeffs.len() / 3, view_dir)?;
    let mut rgb = [0.0f64; 3];
    for (coeff, b) in coeffs.chunks_exact(3).zip(basis.iter()) {
        for c in 0..3 {
            rgb[c] += coeff[c] * b;
        }
    }
    Ok(rgb)
}

/// dL/dworld of a normalized direction `dir = v / |v|` where `v = world - c`.
pub fn normalize_backward(v: &Vector3<f64>, d_dir: &Vector3<f64>) -> Vector3<f64> {
    let n = v.norm();
    if n <= 0.0 {
        return Vector3::zeros();
    }
    let dir = v / n;
    (d_dir - dir * dir.dot(d_dir)) / n
}

/// Largest eigenvalue of a symmetric 2x2 matrix.
#[inline]
pub fn max_eigenvalue_2x2(m: &Matrix2<f64>) -> f64 {
    let half_trace = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    half_trace + (half_trace * half_trace - det).max(0.0).sqrt()
}

/// Inverse of a symmetric positive-definite 2x2 matrix.
#[inline]
pub fn invert_spd_2x2(m: &Matrix2<f64>) -> Option<Matrix2<f64>> {
    let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
    if det <= 0.0 || !det.is_finite() {
        return None;
    }
    Some(Matrix2::new(
        m[(1, 1)] / det,
        -m[(0, 1)] / det,
        -m[(1, 0)] / det,
        m[(0, 0)] / det,
    ))
}
