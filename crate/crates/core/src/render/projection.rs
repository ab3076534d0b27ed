//! Culling, projection to screen space, and the chain from splat gradients
//! back to Gaussian parameters.

use super::{SplatGrads, SplatInstance};
use crate::gaussians::{GaussianGrads, SplatSource};
use crate::geometry::{
    build_covariance, build_covariance_backward, invert_spd_2x2, normalize_backward,
    perspective_jacobian, project_covariance, project_covariance_backward, sh_color_backward,
    sh_to_color_unclamped, sigmoid, Camera, CULL_SIGMA, CUTOFF_SQ,
};
use nalgebra::Vector2;

/// Project visible Gaussians to splats. A Gaussian is dropped when it sits
/// behind the near plane or its 3-sigma screen extent misses the image
/// rectangle entirely. At most one splat per Gaussian. Emitted splats carry
/// the wider compositing-footprint radii used for tile binning.
pub fn cull_and_project(source: &SplatSource<'_>, camera: &Camera) -> Vec<SplatInstance> {
    let mut splats = Vec::new();
    let width = camera.width as f64;
    let height = camera.height as f64;
    let footprint_sigma = CUTOFF_SQ.sqrt();
    for i in 0..source.len() {
        let mean = source.mean(i);
        let mean_cam = camera.world_to_cam(&mean);
        if mean_cam.z <= camera.near {
            continue;
        }
        let scale = source.log_scale(i).map(f64::exp);
        let rotation = source.rotation(i);
        let cov_world = match build_covariance(&rotation, &scale) {
            Ok(c) => c,
            Err(_) => continue,
        };
        let cov_cam = camera.rotation * cov_world * camera.rotation.transpose();
        let sigma2d = match project_covariance(&cov_cam, &mean_cam, camera.fx, camera.fy, camera.near)
        {
            Some(s) => s,
            None => continue,
        };
        let mean2d = camera.project(&mean_cam);
        let sigma_px = Vector2::new(
            sigma2d[(0, 0)].max(0.0).sqrt(),
            sigma2d[(1, 1)].max(0.0).sqrt(),
        );
        let cull_radii = sigma_px * CULL_SIGMA;
        if mean2d.x + cull_radii.x < 0.0
            || mean2d.x - cull_radii.x > width
            || mean2d.y + cull_radii.y < 0.0
            || mean2d.y - cull_radii.y > height
        {
            continue;
        }
        let radii = sigma_px * footprint_sigma;
        let conic_inv = match invert_spd_2x2(&sigma2d) {
            Some(m) => m,
            None => continue,
        };
        let alpha = sigmoid(source.opacity_logits[i]);
        let view_dir = camera.view_direction(&mean);
        let color = match sh_to_color_unclamped(source.sh_coeffs(i), &view_dir) {
            Ok(c) => [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)],
            Err(_) => continue,
        };
        splats.push(SplatInstance {
            mean2d,
            conic_inv,
            radii,
            depth: mean_cam.z,
            alpha,
            color,
            source_index: i,
        });
    }
    splats
}

/// Chain per-splat gradients back to the parameters of the source view:
/// world means, raw quaternions, log scales, opacity logits, SH coefficients.
///
/// Gaussians without a splat keep exactly zero gradients.
pub fn backproject_splats(
    source: &SplatSource<'_>,
    camera: &Camera,
    splats: &[SplatInstance],
    grads: &SplatGrads,
) -> GaussianGrads {
    let mut out = GaussianGrads::zeros(source.len(), source.sh_coeff_count);
    let k3 = source.sh_coeff_count * 3;
    for (s_idx, splat) in splats.iter().enumerate() {
        let i = splat.source_index;
        let mean = source.mean(i);
        let mean_cam = camera.world_to_cam(&mean);
        let rotation = source.rotation(i);
        let log_scale = source.log_scale(i);
        let scale = log_scale.map(f64::exp);
        let cov_world = build_covariance(&rotation, &scale).expect("validated in forward");
        let cov_cam = camera.rotation * cov_world * camera.rotation.transpose();

        // conic_inv = inv(sigma2d):  dL/dSigma = -M G M  (M symmetric).
        let m = splat.conic_inv;
        let d_sigma2d = -(m * grads.conic_inv[s_idx] * m);
        let (d_cov_cam, mut d_mean_cam) =
            project_covariance_backward(&cov_cam, &mean_cam, camera.fx, camera.fy, &d_sigma2d);
        let d_cov_world = camera.rotation.transpose() * d_cov_cam * camera.rotation;
        let (d_rot, d_log_scale) =
            build_covariance_backward(&rotation, &log_scale, &d_cov_world);

        // Pixel-space mean gradient through the projection Jacobian.
        let j = perspective_jacobian(&mean_cam, camera.fx, camera.fy);
        d_mean_cam += j.transpose() * grads.mean2d[s_idx];
        let mut d_mean = camera.rotation.transpose() * d_mean_cam;

        // Opacity through the sigmoid.
        let alpha = splat.alpha;
        out.opacity_logits[i] += grads.alpha[s_idx] * alpha * (1.0 - alpha);

        // Color: SH coefficients plus the view-direction dependence of the
        // basis on the mean.
        let coeffs = source.sh_coeffs(i);
        let view_dir = camera.view_direction(&mean);
        let pre_clamp = sh_to_color_unclamped(coeffs, &view_dir).expect("validated in forward");
        let d_dir = sh_color_backward(
            coeffs,
            &view_dir,
            &pre_clamp,
            &grads.color[s_idx],
            &mut out.sh[i * k3..(i + 1) * k3],
        );
        d_mean += normalize_backward(&(mean - camera.center()), &d_dir);

        for a in 0..3 {
            out.means[i * 3 + a] += d_mean[a];
            out.log_scales[i * 3 + a] += d_log_scale[a];
        }
        for a in 0..4 {
            out.rotations[i * 4 + a] += d_rot[a];
        }
    }
    out
}
