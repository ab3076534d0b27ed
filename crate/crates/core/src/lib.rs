//! Desk-scale differentiable 4D Gaussian splatting engine.
//!
//! Dynamic scenes are decomposed into a canonical Gaussian set, per-window
//! (segment) deformation means, and per-frame residuals; temporal windows
//! come from optical-flow statistics. The crate provides:
//!
//! - [`geometry`]: covariance construction/projection, SH color, and their
//!   analytic backward passes;
//! - [`render`]: a tile-binned differentiable rasterizer plus a brute-force
//!   reference renderer used as an oracle;
//! - [`deform`]: the HexPlane encoder, decoder heads, timestamp quantizer,
//!   and cascaded residue combination;
//! - [`windows`] / [`flow_proxy`]: temporal window construction from flow
//!   magnitudes, with file ingestion and a built-in block-matching proxy;
//! - [`train`]: L1 + grid-TV loss, Adam updates, warm-up schedule, and
//!   adaptive densification/pruning;
//! - [`scene`] / [`metrics`]: synthetic scene generation with exact ground
//!   truth, dataset manifests, and PSNR/SSIM/MS-SSIM;
//! - [`checkpoint`]: single-file binary checkpoints that reload to
//!   bit-identical renders.

pub mod checkpoint;
pub mod deform;
pub mod error;
pub mod flow_proxy;
pub mod gaussians;
pub mod geometry;
pub mod img;
pub mod metrics;
pub mod render;
pub mod scene;
pub mod train;
pub mod windows;

pub use error::{Error, Result};
