//! Temporal window construction from per-frame-pair optical-flow magnitudes.
//!
//! Three constructors: equal-length windows, cuts at the N-1 highest-flow
//! frame pairs, and greedy flow-threshold cuts that concentrate short windows
//! in high-motion spans. Windows partition normalized time [0,1]; frames fall
//! into half-open intervals `[b_k, b_{k+1})` with the last window closed.

use crate::error::{Error, Result};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const FLOW_FILE_HEADER: &str = "frame_pair_flow_v1";
pub const WINDOWS_FILE_HEADER: &str = "windows_v1";

/// Scalar flow magnitude between each pair of consecutive frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSeries {
    magnitudes: Vec<f64>,
    /// Normalized frame timestamps, strictly increasing, first 0 last 1.
    timestamps: Vec<f64>,
}

impl FlowSeries {
    /// Build from magnitudes with uniform frame timestamps.
    pub fn new(magnitudes: Vec<f64>) -> Result<FlowSeries> {
        let frames = magnitudes.len() + 1;
        if frames < 2 {
            return Err(Error::InvalidParameter(
                "flow series needs at least one frame pair".into(),
            ));
        }
        let timestamps = (0..frames)
            .map(|k| k as f64 / (frames - 1) as f64)
            .collect();
        FlowSeries::with_timestamps(magnitudes, timestamps)
    }

    pub fn with_timestamps(magnitudes: Vec<f64>, timestamps: Vec<f64>) -> Result<FlowSeries> {
        if timestamps.len() != magnitudes.len() + 1 {
            return Err(Error::InvalidParameter(format!(
                "flow series length mismatch: {} magnitudes vs {} timestamps",
                magnitudes.len(),
                timestamps.len()
            )));
        }
        if magnitudes.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::InvalidParameter(
                "flow magnitudes must be finite and non-negative".into(),
            ));
        }
        if !timestamps.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "frame timestamps must be strictly increasing".into(),
            ));
        }
        Ok(FlowSeries { magnitudes, timestamps })
    }

    pub fn magnitudes(&self) -> &[f64] {
        &self.magnitudes
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn frame_count(&self) -> usize {
        self.timestamps.len()
    }

    pub fn total(&self) -> f64 {
        self.magnitudes.iter().sum()
    }

    /// Normalized time of the cut between frames `k` and `k+1` (midpoint).
    fn cut_time(&self, pair: usize) -> f64 {
        0.5 * (self.timestamps[pair] + self.timestamps[pair + 1])
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{FLOW_FILE_HEADER}")?;
        for m in &self.magnitudes {
            writeln!(f, "{m}")?;
        }
        Ok(())
    }

    /// Parse a flow file; shortest-representation decimals round-trip
    /// exactly through Rust's float formatter.
    pub fn read_file(path: &Path) -> Result<FlowSeries> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Ingestion(format!("{}: empty flow file", path.display())))??;
        if header.trim() != FLOW_FILE_HEADER {
            return Err(Error::Ingestion(format!(
                "{}: expected {FLOW_FILE_HEADER} header, got {header:?}",
                path.display()
            )));
        }
        let mut magnitudes = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Ingestion(format!("{}: bad flow magnitude {line:?}", path.display()))
            })?;
            magnitudes.push(v);
        }
        FlowSeries::new(magnitudes)
    }
}

/// Ordered partition of normalized time [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    /// Strictly increasing, first 0, last 1; `len() == window_count + 1`.
    boundaries: Vec<f64>,
}

impl WindowSet {
    pub fn from_boundaries(boundaries: Vec<f64>) -> Result<WindowSet> {
        if boundaries.len() < 2 {
            return Err(Error::InvalidParameter(
                "window set needs at least boundaries 0 and 1".into(),
            ));
        }
        if boundaries[0] != 0.0 || *boundaries.last().unwrap() != 1.0 {
            return Err(Error::InvalidParameter(
                "window boundaries must start at 0 and end at 1".into(),
            ));
        }
        if !boundaries.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidParameter(
                "window boundaries must be strictly increasing".into(),
            ));
        }
        Ok(WindowSet { boundaries })
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn window_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    pub fn span(&self, k: usize) -> (f64, f64) {
        (self.boundaries[k], self.boundaries[k + 1])
    }

    /// Index of the window containing `t`: half-open `[b_k, b_{k+1})`, last
    /// window closed at 1. Binary search; `t` is clamped into [0,1].
    pub fn window_index(&self, t: f64) -> usize {
        let t = t.clamp(0.0, 1.0);
        let n = self.window_count();
        // partition_point returns the count of boundaries <= t.
        let k = self.boundaries.partition_point(|b| *b <= t);
        k.saturating_sub(1).min(n - 1)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "{WINDOWS_FILE_HEADER}")?;
        for b in &self.boundaries {
            writeln!(f, "{b}")?;
        }
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<WindowSet> {
        let f = BufReader::new(std::fs::File::open(path)?);
        let mut lines = f.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Ingestion(format!("{}: empty windows file", path.display())))??;
        if header.trim() != WINDOWS_FILE_HEADER {
            return Err(Error::Ingestion(format!(
                "{}: expected {WINDOWS_FILE_HEADER} header, got {header:?}",
                path.display()
            )));
        }
        let mut boundaries = Vec::new();
        for line in lines {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| {
                Error::Ingestion(format!("{}: bad boundary {line:?}", path.display()))
            })?;
            boundaries.push(v);
        }
        WindowSet::from_boundaries(boundaries)
    }
}

/// `N` equal windows with boundaries at `k/N`.
pub fn equal_windows(n: usize) -> Result<WindowSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("window count must be positive".into()));
    }
    let boundaries = (0..=n).map(|k| k as f64 / n as f64).collect();
    WindowSet::from_boundaries(boundaries)
}

/// Cut at the `N-1` frame pairs with highest flow; ties prefer the earlier
/// pair. Each cut sits at the timestamp midpoint of its pair, so the earlier
/// frame ends one window and the later frame begins the next.
pub fn n_highest_windows(flow: &FlowSeries, n: usize) -> Result<WindowSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("window count must be positive".into()));
    }
    if n > flow.frame_count() {
        return Err(Error::InvalidParameter(format!(
            "cannot build {n} windows from {} frames",
            flow.frame_count()
        )));
    }
    let mut order: Vec<usize> = (0..flow.magnitudes.len()).collect();
    order.sort_by(|&a, &b| {
        flow.magnitudes[b]
            .total_cmp(&flow.magnitudes[a])
            .then(a.cmp(&b))
    });
    let mut cuts: Vec<usize> = order.into_iter().take(n - 1).collect();
    cuts.sort_unstable();
    let mut boundaries = vec![0.0];
    boundaries.extend(cuts.iter().map(|&p| flow.cut_time(p)));
    boundaries.push(1.0);
    WindowSet::from_boundaries(boundaries)
}

/// Greedy threshold construction: with `T = total_flow / N`, scan pairs in
/// order keeping a running flow sum; on reaching `T` (inclusive) emit a cut
/// after the current pair and reset the sum. Produces at most `N` windows —
/// possibly fewer when flow is front-loaded. All-zero flow falls back to
/// equal windows.
pub fn greedy_threshold_windows(flow: &FlowSeries, n: usize) -> Result<WindowSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("window count must be positive".into()));
    }
    let total = flow.total();
    if total <= 0.0 {
        return equal_windows(n);
    }
    let threshold = total / n as f64;
    let mut boundaries = vec![0.0];
    let mut running = 0.0;
    for (pair, &f) in flow.magnitudes.iter().enumerate() {
        if boundaries.len() - 1 >= n - 1 {
            break;
        }
        running += f;
        if running >= threshold {
            boundaries.push(flow.cut_time(pair));
            running = 0.0;
        }
    }
    boundaries.push(1.0);
    WindowSet::from_boundaries(boundaries)
}

/// Cached segment lookup: constant-time for the timestamps seen at build
/// time (keyed on exact bits), binary-search fallback for anything else.
#[derive(Debug, Clone, Default)]
pub struct SegmentIndexTable {
    map: HashMap<u64, usize>,
}

impl SegmentIndexTable {
    pub fn build(windows: &WindowSet, timestamps: &[f64]) -> SegmentIndexTable {
        let mut map = HashMap::with_capacity(timestamps.len());
        for &t in timestamps {
            map.insert(t.to_bits(), windows.window_index(t));
        }
        SegmentIndexTable { map }
    }

    pub fn cached_timestamps(&self) -> Vec<f64> {
        let mut ts: Vec<f64> = self.map.keys().map(|b| f64::from_bits(*b)).collect();
        ts.sort_by(f64::total_cmp);
        ts
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn lookup(&self, t: f64, windows: &WindowSet) -> usize {
        match self.map.get(&t.to_bits()) {
            Some(&k) => k,
            None => windows.window_index(t),
        }
    }
}

/// Window index of `t`; cached-table variant is [`SegmentIndexTable`].
pub fn segment_index(t: f64, windows: &WindowSet) -> usize {
    windows.window_index(t)
}
