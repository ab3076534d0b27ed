//! Coarse block-matching flow proxy.
//!
//! Stands in for a learned optical-flow model: per consecutive frame pair it
//! reports the mean best-match displacement magnitude over blocks that
//! actually changed. Quiet blocks (no difference at zero displacement) are
//! excluded so static background does not dilute the motion estimate.

use crate::error::{Error, Result};
use crate::img::ImageRgb;
use crate::windows::FlowSeries;

#[derive(Debug, Clone, Copy)]
pub struct FlowProxyParams {
    pub block_size: usize,
    pub search_radius: usize,
    /// Mean absolute luma difference per pixel (at zero displacement) above
    /// which a block counts as active.
    pub activity_threshold: f64,
}

impl Default for FlowProxyParams {
    fn default() -> Self {
        FlowProxyParams { block_size: 8, search_radius: 6, activity_threshold: 2e-3 }
    }
}

/// Estimate per-pair flow magnitudes for an ordered frame sequence.
pub fn estimate_flow_proxy(frames: &[ImageRgb], params: &FlowProxyParams) -> Result<FlowSeries> {
    estimate_flow_proxy_with_timestamps(frames, None, params)
}

pub fn estimate_flow_proxy_with_timestamps(
    frames: &[ImageRgb],
    timestamps: Option<&[f64]>,
    params: &FlowProxyParams,
) -> Result<FlowSeries> {
    if frames.len() < 2 {
        return Err(Error::InvalidParameter(
            "flow proxy needs at least two frames".into(),
        ));
    }
    if params.block_size == 0 {
        return Err(Error::InvalidParameter("block size must be positive".into()));
    }
    let (w, h) = (frames[0].width, frames[0].height);
    for (k, f) in frames.iter().enumerate() {
        if f.width != w || f.height != h {
            return Err(Error::Ingestion(format!(
                "frame {k} dimensions {}x{} do not match {}x{}",
                f.width, f.height, w, h
            )));
        }
    }
    let lumas: Vec<Vec<f64>> = frames.iter().map(|f| f.luminance()).collect();
    let mut magnitudes = Vec::with_capacity(frames.len() - 1);
    for pair in 0..frames.len() - 1 {
        magnitudes.push(pair_flow(&lumas[pair], &lumas[pair + 1], w, h, params));
    }
    match timestamps {
        Some(ts) => FlowSeries::with_timestamps(magnitudes, ts.to_vec()),
        None => FlowSeries::new(magnitudes),
    }
}

fn pair_flow(a: &[f64], b: &[f64], width: usize, height: usize, params: &FlowProxyParams) -> f64 {
    let bs = params.block_size;
    let r = params.search_radius as isize;

    // Displacements ordered by growing radius so exact SAD ties keep the
    // smallest motion.
    let mut offsets: Vec<(isize, isize)> = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            offsets.push((dx, dy));
        }
    }
    offsets.sort_by(|p, q| {
        let dp = p.0 * p.0 + p.1 * p.1;
        let dq = q.0 * q.0 + q.1 * q.1;
        dp.cmp(&dq).then(p.1.cmp(&q.1)).then(p.0.cmp(&q.0))
    });

    let mut total_mag = 0.0;
    let mut active = 0usize;
    let mut by = 0;
    while by + bs <= height {
        let mut bx = 0;
        while bx + bs <= width {
            let zero_sad = block_sad(a, b, width, height, bx, by, 0, 0, bs).unwrap_or(f64::MAX);
            let area = (bs * bs) as f64;
            if zero_sad / area > params.activity_threshold {
                let mut best_sad = zero_sad;
                let mut best_d2 = 0.0f64;
                for &(dx, dy) in &offsets {
                    if let Some(sad) = block_sad(a, b, width, height, bx, by, dx, dy, bs) {
                        if sad < best_sad {
                            best_sad = sad;
                            best_d2 = (dx * dx + dy * dy) as f64;
                        }
                    }
                }
                total_mag += best_d2.sqrt();
                active += 1;
            }
            bx += bs;
        }
        by += bs;
    }

    if active == 0 {
        0.0
    } else {
        total_mag / active as f64
    }
}

/// SAD of block (bx,by) in `a` against the block displaced by (dx,dy) in `b`;
/// `None` when the displaced block leaves the image.
fn block_sad(
    a: &[f64],
    b: &[f64],
    width: usize,
    height: usize,
    bx: usize,
    by: usize,
    dx: isize,
    dy: isize,
    bs: usize,
) -> Option<f64> {
    let tx = bx as isize + dx;
    let ty = by as isize + dy;
    if tx < 0 || ty < 0 || tx + bs as isize > width as isize || ty + bs as isize > height as isize {
        return None;
    }
    let (tx, ty) = (tx as usize, ty as usize);
    let mut sad = 0.0;
    for row in 0..bs {
        let ia = (by + row) * width + bx;
        let ib = (ty + row) * width + tx;
        for col in 0..bs {
            sad += (a[ia + col] - b[ib + col]).abs();
        }
    }
    Some(sad)
}
