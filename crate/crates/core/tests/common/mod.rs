//! Shared builders and finite-difference machinery for the oracle tests.

use ctrlgs_core::gaussians::{GaussianParams, GaussianSet};
use ctrlgs_core::geometry::{inverse_sigmoid, Camera, SH_C0};
use ctrlgs_core::img::ImageRgb;
use nalgebra::{Vector3, Vector4};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn test_camera(resolution: usize, focal: f64) -> Camera {
    Camera::look_at(
        Vector3::new(0.0, 0.0, -5.0),
        Vector3::zeros(),
        focal,
        resolution,
        resolution,
        0.1,
    )
}

/// Random scene for oracle comparisons: moderate opacities and small
/// footprints keep per-pixel stacks shallow, so early termination never
/// fires and the tiled/reference paths are exactly equal.
pub fn random_scene(n: usize, seed: u64, sh_degree: usize) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = if sh_degree == 0 { 1 } else { 4 };
    let mut set = GaussianSet::empty(k);
    for _ in 0..n {
        let sigma: f64 = rng.gen_range(0.02..0.1);
        let mut sh = vec![0.0; k * 3];
        for c in 0..3 {
            sh[c] = rng.gen_range(0.1..0.9) / SH_C0;
        }
        if k == 4 {
            for v in sh.iter_mut().skip(3) {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
        let raw_q = Vector4::new(
            rng.gen_range(-1.0..1.0f64),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        set.push(&GaussianParams {
            mean: Vector3::new(
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
                rng.gen_range(-0.9..0.9),
            ),
            rotation: if raw_q.norm() > 1e-3 {
                raw_q / raw_q.norm()
            } else {
                Vector4::new(1.0, 0.0, 0.0, 0.0)
            },
            log_scale: Vector3::new(
                (sigma * rng.gen_range(0.8..1.25)).ln(),
                (sigma * rng.gen_range(0.8..1.25)).ln(),
                (sigma * rng.gen_range(0.8..1.25)).ln(),
            ),
            opacity_logit: inverse_sigmoid(rng.gen_range(0.06..0.6)),
            sh_coeffs: sh,
        });
    }
    set
}

/// Scene tailored for gradient checks: projected means well inside the
/// image, depths separated so a 1e-4 nudge cannot reorder splats, colors
/// clear of the [0,1] clamp.
pub fn gradcheck_scene(n: usize, seed: u64, sh_degree: usize) -> GaussianSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = if sh_degree == 0 { 1 } else { 4 };
    let mut set = GaussianSet::empty(k);
    for i in 0..n {
        let mut sh = vec![0.0; k * 3];
        for c in 0..3 {
            sh[c] = rng.gen_range(0.2..0.8) / SH_C0;
        }
        if k == 4 {
            for v in sh.iter_mut().skip(3) {
                *v = rng.gen_range(-0.08..0.08);
            }
        }
        let raw_q = Vector4::new(
            rng.gen_range(-1.0..1.0f64),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        set.push(&GaussianParams {
            mean: Vector3::new(
                rng.gen_range(-0.55..0.55),
                rng.gen_range(-0.55..0.55),
                // Depth slots 0.15 apart.
                -0.75 + 0.15 * i as f64 + rng.gen_range(0.01..0.08),
            ),
            rotation: if raw_q.norm() > 1e-3 {
                raw_q / raw_q.norm()
            } else {
                Vector4::new(1.0, 0.0, 0.0, 0.0)
            },
            log_scale: Vector3::new(
                rng.gen_range(0.05f64..0.12).ln(),
                rng.gen_range(0.05f64..0.12).ln(),
                rng.gen_range(0.05f64..0.12).ln(),
            ),
            opacity_logit: inverse_sigmoid(rng.gen_range(0.15..0.55)),
            sh_coeffs: sh,
        });
    }
    set
}

/// Fixed random pixel weights defining the scalar test loss
/// `sum_px w_px . pixel_px`.
pub fn weight_image(width: usize, height: usize, seed: u64) -> ImageRgb {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ImageRgb::new(width, height);
    for p in &mut img.data {
        *p = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
    }
    img
}

pub fn weighted_sum(image: &ImageRgb, weights: &ImageRgb) -> f64 {
    image
        .data
        .iter()
        .zip(weights.data.iter())
        .map(|(p, w)| p[0] * w[0] + p[1] * w[1] + p[2] * w[2])
        .sum()
}

/// Check one analytic gradient against a central difference.
pub struct GradSample {
    pub analytic: f64,
    pub fd: f64,
}

impl GradSample {
    pub fn within(&self, rel: f64, abs_floor: f64) -> bool {
        let scale = self.analytic.abs().max(self.fd.abs());
        (self.analytic - self.fd).abs() <= (rel * scale).max(abs_floor)
    }
}

/// splitmix64 stream matching tools/ssim_reference.py.
pub struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_f64(&mut self) -> f64 {
        self.0 = self.0.wrapping_add(0x9E3779B97F4A7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
        z ^= z >> 31;
        (z >> 11) as f64 * (1.0 / 9007199254740992.0)
    }
}

pub fn splitmix_image(width: usize, height: usize, seed: u64) -> ImageRgb {
    let mut rng = SplitMix(seed);
    let mut img = ImageRgb::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let p = img.pixel_mut(x, y);
            for c in p.iter_mut() {
                *c = rng.next_f64();
            }
        }
    }
    img
}
