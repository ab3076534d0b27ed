//! Cascaded temporal residue deformation.
//!
//! A spatial-temporal encoder (multi-resolution HexPlane + fusion network)
//! feeds two decoder banks: frame heads see the encoder at the continuous
//! timestamp and produce per-frame residuals; segment heads see the encoder
//! at the window-quantized timestamp (with that timestamp appended as an
//! extra channel) and produce per-window means. Deformed Gaussians combine
//! canonical parameters, segment deltas, and frame deltas by plain addition:
//! position and rotation in their raw parameter spaces, scale in log domain.
//! Opacity and SH coefficients are never deformed.
//!
//! With all decoder output layers zero-initialized the whole pipeline is an
//! exact identity, so optimization starts from the canonical static scene.

mod grid;
mod mlp;
mod quantize;

pub use grid::{GridConfig, HexPlaneGrid, SceneBounds, PLANE_AXES};
pub use mlp::{MlpGrads, TinyMlp};
pub use quantize::{quantize_time, TemporalQuantizer};

use crate::gaussians::{GaussianGrads, GaussianSet, SplatSource};
use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub grid: GridConfig,
    /// Width of the fused hidden feature and of every decoder hidden layer.
    pub hidden_width: usize,
    /// Disabling the segment bank reduces the model to frame-only residuals.
    pub segment_heads_enabled: bool,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            grid: GridConfig::default(),
            hidden_width: 32,
            segment_heads_enabled: true,
        }
    }
}

/// Position / rotation / scale decoder bank.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderHeads {
    pub position: TinyMlp,
    pub rotation: TinyMlp,
    pub scale: TinyMlp,
}

impl DecoderHeads {
    fn new<R: Rng>(input_width: usize, hidden: usize, rng: &mut R) -> DecoderHeads {
        DecoderHeads {
            position: TinyMlp::new(&[input_width, hidden, 3], true, rng),
            rotation: TinyMlp::new(&[input_width, hidden, 4], true, rng),
            scale: TinyMlp::new(&[input_width, hidden, 3], true, rng),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeformationField {
    pub config: FieldConfig,
    pub grids: HexPlaneGrid,
    /// Fusion network mapping fused grid features to the hidden feature.
    pub fusion: TinyMlp,
    pub frame_heads: DecoderHeads,
    pub segment_heads: DecoderHeads,
}

/// Deformed copy of the time-dependent tensors; opacity and SH stay with the
/// canonical set.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformedGaussians {
    pub means: Vec<f64>,
    pub rotations: Vec<f64>,
    pub log_scales: Vec<f64>,
    /// Encoder queries whose spatial coordinate left the scene bounds.
    pub clamped_queries: usize,
}

impl DeformedGaussians {
    pub fn as_source<'a>(&'a self, set: &'a GaussianSet) -> SplatSource<'a> {
        SplatSource {
            means: &self.means,
            rotations: &self.rotations,
            log_scales: &self.log_scales,
            opacity_logits: &set.opacity_logits,
            sh: &set.sh,
            sh_coeff_count: set.sh_coeff_count,
        }
    }
}

/// Gradient mirror of every trainable tensor of the field.
#[derive(Debug, Clone)]
pub struct FieldGrads {
    /// Per-plane buffers indexed `level * 6 + plane`.
    pub planes: Vec<Vec<f64>>,
    pub fusion: MlpGrads,
    pub frame_position: MlpGrads,
    pub frame_rotation: MlpGrads,
    pub frame_scale: MlpGrads,
    pub segment_position: MlpGrads,
    pub segment_rotation: MlpGrads,
    pub segment_scale: MlpGrads,
}

impl FieldGrads {
    pub fn zeros_like(field: &DeformationField) -> FieldGrads {
        FieldGrads {
            planes: field
                .grids
                .levels
                .iter()
                .flat_map(|l| l.planes.iter().map(|p| vec![0.0; p.data.len()]))
                .collect(),
            fusion: MlpGrads::zeros_like(&field.fusion),
            frame_position: MlpGrads::zeros_like(&field.frame_heads.position),
            frame_rotation: MlpGrads::zeros_like(&field.frame_heads.rotation),
            frame_scale: MlpGrads::zeros_like(&field.frame_heads.scale),
            segment_position: MlpGrads::zeros_like(&field.segment_heads.position),
            segment_rotation: MlpGrads::zeros_like(&field.segment_heads.rotation),
            segment_scale: MlpGrads::zeros_like(&field.segment_heads.scale),
        }
    }

    /// Flat tensor views in the same order as
    /// [`DeformationField::param_tensors_mut`].
    pub fn tensors(&self) -> Vec<&Vec<f64>> {
        let mut out: Vec<&Vec<f64>> = self.planes.iter().collect();
        for g in [
            &self.fusion,
            &self.frame_position,
            &self.frame_rotation,
            &self.frame_scale,
            &self.segment_position,
            &self.segment_rotation,
            &self.segment_scale,
        ] {
            for (w, b) in g.weights.iter().zip(g.biases.iter()) {
                out.push(w);
                out.push(b);
            }
        }
        out
    }
}

/// Optimizer parameter class of a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldParamClass {
    Grids,
    Networks,
}

impl DeformationField {
    pub fn new<R: Rng>(config: FieldConfig, bounds: SceneBounds, rng: &mut R) -> DeformationField {
        let grids = HexPlaneGrid::new(config.grid, bounds, rng);
        let fused = grids.fused_dim();
        let hidden = config.hidden_width;
        DeformationField {
            config,
            grids,
            fusion: TinyMlp::new(&[fused, hidden, hidden], false, rng),
            frame_heads: DecoderHeads::new(hidden, hidden, rng),
            segment_heads: DecoderHeads::new(hidden + 1, hidden, rng),
        }
    }

    /// Mutable flat views of every trainable tensor with its optimizer
    /// class. Order is stable and mirrored by [`FieldGrads::tensors`].
    pub fn param_tensors_mut(&mut self) -> Vec<(FieldParamClass, &mut Vec<f64>)> {
        let mut out: Vec<(FieldParamClass, &mut Vec<f64>)> = Vec::new();
        for level in &mut self.grids.levels {
            for plane in &mut level.planes {
                out.push((FieldParamClass::Grids, &mut plane.data));
            }
        }
        for mlp in [
            &mut self.fusion,
            &mut self.frame_heads.position,
            &mut self.frame_heads.rotation,
            &mut self.frame_heads.scale,
            &mut self.segment_heads.position,
            &mut self.segment_heads.rotation,
            &mut self.segment_heads.scale,
        ] {
            for layer in &mut mlp.layers {
                out.push((FieldParamClass::Networks, &mut layer.weight));
                out.push((FieldParamClass::Networks, &mut layer.bias));
            }
        }
        out
    }

    /// Test-and-gradcheck helper: give every decoder output layer small
    /// random weights so gradients flow through the whole cascade.
    pub fn randomize_output_layers<R: Rng>(&mut self, rng: &mut R) {
        for mlp in [
            &mut self.frame_heads.position,
            &mut self.frame_heads.rotation,
            &mut self.frame_heads.scale,
            &mut self.segment_heads.position,
            &mut self.segment_heads.rotation,
            &mut self.segment_heads.scale,
        ] {
            let last = mlp.layers.len() - 1;
            let layer = &mut mlp.layers[last];
            let bound = 0.3 / (layer.in_dim as f64).sqrt();
            for w in &mut layer.weight {
                *w = rng.gen_range(-bound..bound);
            }
            for b in &mut layer.bias {
                *b = rng.gen_range(-0.01..0.01);
            }
        }
    }

    /// Normalized 4D query coordinates for a mean at time `t`, with the
    /// per-axis chain factors (zero where the bounds clamp).
    fn query_coords(&self, mean: &Vector3<f64>, t: f64) -> ([f64; 4], [f64; 3], bool) {
        let mut coords = [0.0; 4];
        let mut scales = [0.0; 3];
        let mut clamped = false;
        for axis in 0..3 {
            let (u, du, cl) = self.grids.bounds.normalize_axis(axis, mean[axis]);
            coords[axis] = u;
            scales[axis] = du;
            clamped |= cl;
        }
        coords[3] = t.clamp(0.0, 1.0);
        (coords, scales, clamped)
    }

    /// Hidden spatial-temporal feature for a point at time `t`.
    pub fn encode(&self, mean: &Vector3<f64>, t: f64) -> Vec<f64> {
        let (coords, _, _) = self.query_coords(mean, t);
        let (fused, _, _) = self.grids.sample(&coords);
        self.fusion.forward(&fused)
    }

    /// Frame-level residuals from a hidden feature.
    pub fn decode_frame(&self, feature: &[f64]) -> (Vector3<f64>, [f64; 4], Vector3<f64>) {
        let dx = self.frame_heads.position.forward(feature);
        let dr = self.frame_heads.rotation.forward(feature);
        let ds = self.frame_heads.scale.forward(feature);
        (
            Vector3::new(dx[0], dx[1], dx[2]),
            [dr[0], dr[1], dr[2], dr[3]],
            Vector3::new(ds[0], ds[1], ds[2]),
        )
    }

    /// Segment-level deltas from a hidden feature evaluated at the quantized
    /// time, which is also appended as the final input channel.
    pub fn decode_segment(
        &self,
        feature: &[f64],
        t_quantized: f64,
    ) -> (Vector3<f64>, [f64; 4], Vector3<f64>) {
        let mut input = feature.to_vec();
        input.push(t_quantized);
        let dx = self.segment_heads.position.forward(&input);
        let dr = self.segment_heads.rotation.forward(&input);
        let ds = self.segment_heads.scale.forward(&input);
        (
            Vector3::new(dx[0], dx[1], dx[2]),
            [dr[0], dr[1], dr[2], dr[3]],
            Vector3::new(ds[0], ds[1], ds[2]),
        )
    }

    /// Apply the cascaded deformation to every Gaussian at time `t`.
    /// Evaluation is parallel over Gaussians (read-only parameters).
    pub fn deform(
        &self,
        set: &GaussianSet,
        t: f64,
        quantizer: &TemporalQuantizer,
    ) -> DeformedGaussians {
        use rayon::prelude::*;
        let n = set.len();
        let t_q = quantizer.quantize(t);

        struct PerGaussian {
            frame: (Vector3<f64>, [f64; 4], Vector3<f64>),
            segment: (Vector3<f64>, [f64; 4], Vector3<f64>),
            clamped: bool,
        }
        let results: Vec<PerGaussian> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mean = set.mean(i);
                let frame = self.decode_frame(&self.encode(&mean, t));
                let segment = if self.config.segment_heads_enabled {
                    let seg_feature = self.encode(&mean, t_q);
                    self.decode_segment(&seg_feature, t_q)
                } else {
                    (Vector3::zeros(), [0.0; 4], Vector3::zeros())
                };
                let (_, _, clamped) = self.query_coords(&mean, t);
                PerGaussian { frame, segment, clamped }
            })
            .collect();

        let mut out = DeformedGaussians {
            means: vec![0.0; n * 3],
            rotations: vec![0.0; n * 4],
            log_scales: vec![0.0; n * 3],
            clamped_queries: 0,
        };
        for (i, r) in results.iter().enumerate() {
            let (fdx, fdr, fds) = &r.frame;
            let (sdx, sdr, sds) = &r.segment;
            if r.clamped {
                out.clamped_queries += 1;
            }
            for a in 0..3 {
                out.means[i * 3 + a] = set.means[i * 3 + a] + sdx[a] + fdx[a];
                out.log_scales[i * 3 + a] = set.log_scales[i * 3 + a] + sds[a] + fds[a];
            }
            for a in 0..4 {
                out.rotations[i * 4 + a] = set.rotations[i * 4 + a] + sdr[a] + fdr[a];
            }
        }
        out
    }

    /// Reverse of [`deform`]: given gradients w.r.t. the deformed tensors,
    /// accumulate gradients for the canonical set and for every field
    /// parameter. Opacity and SH gradients pass through untouched.
    ///
    /// Gaussians are processed in index order so accumulation into the
    /// shared field tensors is deterministic.
    pub fn deform_backward(
        &self,
        set: &GaussianSet,
        t: f64,
        quantizer: &TemporalQuantizer,
        d_deformed: &GaussianGrads,
    ) -> (GaussianGrads, FieldGrads) {
        let n = set.len();
        let mut d_canonical = GaussianGrads::zeros(n, set.sh_coeff_count);
        let mut field_grads = FieldGrads::zeros_like(self);
        d_canonical.opacity_logits.copy_from_slice(&d_deformed.opacity_logits);
        d_canonical.sh.copy_from_slice(&d_deformed.sh);

        let t_q = quantizer.quantize(t);
        for i in 0..n {
            let mean = set.mean(i);
            let d_dx = &d_deformed.means[i * 3..i * 3 + 3];
            let d_dr = &d_deformed.rotations[i * 4..i * 4 + 4];
            let d_ds = &d_deformed.log_scales[i * 3..i * 3 + 3];

            // Direct residual paths.
            for a in 0..3 {
                d_canonical.means[i * 3 + a] += d_dx[a];
                d_canonical.log_scales[i * 3 + a] += d_ds[a];
            }
            for a in 0..4 {
                d_canonical.rotations[i * 4 + a] += d_dr[a];
            }

            let mut d_mean_extra = Vector3::<f64>::zeros();

            // Frame path at continuous t.
            {
                let (coords, scales, _) = self.query_coords(&mean, t);
                let (fused, samples, features) = self.grids.sample(&coords);
                let (hidden, fusion_trace) = self.fusion.forward_traced(&fused);
                let mut d_hidden = vec![0.0; hidden.len()];

                let (_, tr) = self.frame_heads.position.forward_traced(&hidden);
                accumulate(&mut d_hidden, &self.frame_heads.position.backward(
                    &tr,
                    d_dx,
                    &mut field_grads.frame_position,
                ));
                let (_, tr) = self.frame_heads.rotation.forward_traced(&hidden);
                accumulate(&mut d_hidden, &self.frame_heads.rotation.backward(
                    &tr,
                    d_dr,
                    &mut field_grads.frame_rotation,
                ));
                let (_, tr) = self.frame_heads.scale.forward_traced(&hidden);
                accumulate(&mut d_hidden, &self.frame_heads.scale.backward(
                    &tr,
                    d_ds,
                    &mut field_grads.frame_scale,
                ));

                let d_fused =
                    self.fusion.backward(&fusion_trace, &d_hidden, &mut field_grads.fusion);
                let mut d_coords = [0.0; 4];
                self.grids.sample_backward(
                    &d_fused,
                    &samples,
                    &features,
                    &mut field_grads.planes,
                    &mut d_coords,
                );
                for a in 0..3 {
                    d_mean_extra[a] += d_coords[a] * scales[a];
                }
            }

            // Segment path at quantized t.
            if self.config.segment_heads_enabled {
                let (coords, scales, _) = self.query_coords(&mean, t_q);
                let (fused, samples, features) = self.grids.sample(&coords);
                let (hidden, fusion_trace) = self.fusion.forward_traced(&fused);
                let mut input = hidden.clone();
                input.push(t_q);
                let mut d_input = vec![0.0; input.len()];

                let (_, tr) = self.segment_heads.position.forward_traced(&input);
                accumulate(&mut d_input, &self.segment_heads.position.backward(
                    &tr,
                    d_dx,
                    &mut field_grads.segment_position,
                ));
                let (_, tr) = self.segment_heads.rotation.forward_traced(&input);
                accumulate(&mut d_input, &self.segment_heads.rotation.backward(
                    &tr,
                    d_dr,
                    &mut field_grads.segment_rotation,
                ));
                let (_, tr) = self.segment_heads.scale.forward_traced(&input);
                accumulate(&mut d_input, &self.segment_heads.scale.backward(
                    &tr,
                    d_ds,
                    &mut field_grads.segment_scale,
                ));

                // Last channel is the (non-trainable) quantized time.
                let d_hidden = &d_input[..input.len() - 1];
                let d_fused =
                    self.fusion.backward(&fusion_trace, d_hidden, &mut field_grads.fusion);
                let mut d_coords = [0.0; 4];
                self.grids.sample_backward(
                    &d_fused,
                    &samples,
                    &features,
                    &mut field_grads.planes,
                    &mut d_coords,
                );
                for a in 0..3 {
                    d_mean_extra[a] += d_coords[a] * scales[a];
                }
            }

            for a in 0..3 {
                d_canonical.means[i * 3 + a] += d_mean_extra[a];
            }
        }
        (d_canonical, field_grads)
    }
}

fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src.iter()) {
        *d += s;
    }
}
