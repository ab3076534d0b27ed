//! Timestamp quantization onto temporal windows.
//!
//! Each window maps every contained timestamp to the same representative
//! time `start + q * (end - start)`. The quantization coefficient `q` in
//! [0,1) balances segment-level against frame-level modeling: 0 pins the
//! representative to the window start, 0.5 to its midpoint. A timestamp
//! sitting exactly on a boundary belongs to the window it begins (matching
//! the half-open window convention), which also makes quantization
//! idempotent at q = 0.

use crate::error::{Error, Result};
use crate::windows::{SegmentIndexTable, WindowSet};

#[derive(Debug, Clone)]
pub struct TemporalQuantizer {
    windows: WindowSet,
    q: f64,
    table: SegmentIndexTable,
}

impl TemporalQuantizer {
    pub fn new(windows: WindowSet, q: f64) -> Result<TemporalQuantizer> {
        if !(0.0..1.0).contains(&q) {
            return Err(Error::InvalidParameter(format!(
                "quantization coefficient must lie in [0,1), got {q}"
            )));
        }
        Ok(TemporalQuantizer { windows, q, table: SegmentIndexTable::default() })
    }

    /// Precompute segment indices for a known timestamp set (the training
    /// frames); lookups for other timestamps fall back to binary search.
    pub fn cache_timestamps(&mut self, timestamps: &[f64]) {
        self.table = SegmentIndexTable::build(&self.windows, timestamps);
    }

    pub fn windows(&self) -> &WindowSet {
        &self.windows
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn cached_timestamps(&self) -> Vec<f64> {
        self.table.cached_timestamps()
    }

    #[inline]
    pub fn segment_index(&self, t: f64) -> usize {
        self.table.lookup(t, &self.windows)
    }

    /// Quantized representative time of the window containing `t`.
    #[inline]
    pub fn quantize(&self, t: f64) -> f64 {
        let k = self.segment_index(t);
        let (start, end) = self.windows.span(k);
        start + self.q * (end - start)
    }
}

/// Convenience: quantize against equal windows without building a set.
pub fn quantize_time(t: f64, quantizer: &TemporalQuantizer) -> f64 {
    quantizer.quantize(t)
}
