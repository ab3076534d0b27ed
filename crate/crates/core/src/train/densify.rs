//! Adaptive density control: opacity pruning plus gradient-driven cloning
//! and splitting, with optimizer moment rows kept in lockstep.

use super::adam::AdamTensor;
use super::TrainConfig;
use crate::gaussians::GaussianSet;
use crate::geometry::{normalize_quaternion, quaternion_to_rotation, sigmoid};
use nalgebra::Vector3;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Accumulated screen-space positional gradient per Gaussian since the last
/// densification event.
#[derive(Debug, Clone, Default)]
pub struct DensifyStats {
    pub grad_norm_sum: Vec<f64>,
    pub observations: Vec<u32>,
}

impl DensifyStats {
    pub fn zeros(n: usize) -> DensifyStats {
        DensifyStats { grad_norm_sum: vec![0.0; n], observations: vec![0; n] }
    }

    pub fn reset(&mut self, n: usize) {
        self.grad_norm_sum.clear();
        self.grad_norm_sum.resize(n, 0.0);
        self.observations.clear();
        self.observations.resize(n, 0);
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DensifyOutcome {
    pub pruned: usize,
    pub cloned: usize,
    pub split: usize,
}

/// Children of a split sit at `mean +- offset` with all scales divided by
/// 1.6; the per-axis offset magnitude (in units of the parent sigma) keeps
/// the pair's combined 3-sigma extent covering the parent's.
const SPLIT_SCALE_SHRINK: f64 = 1.6;
const SPLIT_OFFSET_SIGMA: f64 = 1.2;

/// Remove near-transparent Gaussians and densify high-gradient ones: clone
/// below the size threshold, split above it. Adam moment rows follow the
/// surviving/cloned rows; new rows start with zero moments.
pub fn densify_and_prune(
    set: &mut GaussianSet,
    adam: &mut [AdamTensor; 5],
    stats: &mut DensifyStats,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> DensifyOutcome {
    let n = set.len();
    let k3 = set.sh_coeff_count * 3;
    let widths = [3usize, 4, 3, 1, k3];
    let mut outcome = DensifyOutcome::default();

    let mut new_set = GaussianSet::empty(set.sh_coeff_count);
    let mut new_adam: Vec<(Vec<f64>, Vec<f64>)> =
        widths.iter().map(|_| (Vec::new(), Vec::new())).collect();

    let copy_row = |dst: &mut GaussianSet,
                        adam_rows: &mut Vec<(Vec<f64>, Vec<f64>)>,
                        src_idx: usize,
                        mean_override: Option<Vector3<f64>>,
                        log_scale_shift: f64,
                        keep_moments: bool| {
        let mean = mean_override.unwrap_or_else(|| set.mean(src_idx));
        dst.means.extend_from_slice(mean.as_slice());
        dst.rotations
            .extend_from_slice(&set.rotations[src_idx * 4..src_idx * 4 + 4]);
        for a in 0..3 {
            dst.log_scales
                .push(set.log_scales[src_idx * 3 + a] + log_scale_shift);
        }
        dst.opacity_logits.push(set.opacity_logits[src_idx]);
        dst.sh.extend_from_slice(set.sh_coeffs(src_idx));
        for (tensor, (m_dst, v_dst)) in adam_rows.iter_mut().enumerate() {
            let w = widths[tensor];
            if keep_moments {
                m_dst.extend_from_slice(&adam[tensor].m[src_idx * w..(src_idx + 1) * w]);
                v_dst.extend_from_slice(&adam[tensor].v[src_idx * w..(src_idx + 1) * w]);
            } else {
                m_dst.extend(std::iter::repeat(0.0).take(w));
                v_dst.extend(std::iter::repeat(0.0).take(w));
            }
        }
    };

    for i in 0..n {
        let alpha = sigmoid(set.opacity_logits[i]);
        if alpha < cfg.opacity_prune_threshold {
            outcome.pruned += 1;
            continue;
        }
        let avg_grad = if stats.observations[i] > 0 {
            stats.grad_norm_sum[i] / stats.observations[i] as f64
        } else {
            0.0
        };
        if avg_grad <= cfg.densify_grad_threshold {
            copy_row(&mut new_set, &mut new_adam, i, None, 0.0, true);
            continue;
        }
        let sigma = set.log_scale(i).map(f64::exp);
        let max_sigma = sigma.max();
        if max_sigma > cfg.densify_split_sigma {
            // Split: the parent is replaced by two offset children.
            let rot = quaternion_to_rotation(&normalize_quaternion(&set.rotation(i)));
            let signs = Vector3::new(
                if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
                if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
            );
            let local = Vector3::new(
                SPLIT_OFFSET_SIGMA * sigma.x * signs.x,
                SPLIT_OFFSET_SIGMA * sigma.y * signs.y,
                SPLIT_OFFSET_SIGMA * sigma.z * signs.z,
            );
            let offset = rot * local;
            let mean = set.mean(i);
            let shrink = -SPLIT_SCALE_SHRINK.ln();
            copy_row(&mut new_set, &mut new_adam, i, Some(mean + offset), shrink, false);
            copy_row(&mut new_set, &mut new_adam, i, Some(mean - offset), shrink, false);
            outcome.split += 1;
        } else {
            // Clone: keep the original (with moments) plus a fresh copy.
            copy_row(&mut new_set, &mut new_adam, i, None, 0.0, true);
            copy_row(&mut new_set, &mut new_adam, i, None, 0.0, false);
            outcome.cloned += 1;
        }
    }

    *set = new_set;
    for (tensor, (m, v)) in new_adam.into_iter().enumerate() {
        adam[tensor] = AdamTensor { m, v };
    }
    stats.reset(set.len());
    outcome
}
