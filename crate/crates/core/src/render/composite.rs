//! Front-to-back alpha compositing: tiled forward, replay backward, and the
//! per-pixel brute-force reference renderer used as an oracle.

use super::{RenderOptions, SplatGrads, SplatInstance, TileGrid, ALPHA_MAX};
use crate::gaussians::SplatSource;
use crate::geometry::{quadratic_form, Camera, CUTOFF_SQ};
use crate::img::ImageRgb;
use crate::render::{cull_and_project, Framebuffer};
use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

/// Effective alpha of a splat at a pixel center, `None` outside the
/// influence footprint. Shared by the tiled renderer, the reference
/// renderer, and the backward replay so all three agree exactly.
#[inline]
fn effective_alpha(splat: &SplatInstance, pixel: &Vector2<f64>) -> Option<f64> {
    let d = pixel - splat.mean2d;
    let q = quadratic_form(&splat.conic_inv, &d);
    if q > CUTOFF_SQ {
        return None;
    }
    let a = splat.alpha * (-0.5 * q).exp();
    Some(a.min(ALPHA_MAX))
}

struct TileOutput {
    tx: usize,
    ty: usize,
    pixels: Vec<[f64; 3]>,
    transmittance: Vec<f64>,
}

/// Composite depth-sorted tile lists over a background color.
pub fn composite_forward(
    splats: &[SplatInstance],
    tiles: &TileGrid,
    resolution: (usize, usize),
    background: [f64; 3],
    opts: &RenderOptions,
) -> Framebuffer {
    let (width, height) = resolution;
    let mut fb = Framebuffer::new(width, height, background);

    let tile_outputs: Vec<TileOutput> = (0..tiles.lists.len())
        .into_par_iter()
        .map(|tile_idx| {
            let tx = tile_idx % tiles.tiles_x;
            let ty = tile_idx / tiles.tiles_x;
            let (x0, x1, y0, y1) = tiles.tile_rect(tx, ty, width, height);
            let list = &tiles.lists[tile_idx];
            let mut pixels = Vec::with_capacity((x1 - x0) * (y1 - y0));
            let mut transmittance = Vec::with_capacity((x1 - x0) * (y1 - y0));
            for y in y0..y1 {
                for x in x0..x1 {
                    let pixel = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                    let mut color = [0.0f64; 3];
                    let mut t = 1.0f64;
                    for &idx in list {
                        let splat = &splats[idx as usize];
                        let Some(a) = effective_alpha(splat, &pixel) else {
                            continue;
                        };
                        for c in 0..3 {
                            color[c] += splat.color[c] * a * t;
                        }
                        t *= 1.0 - a;
                        if t < opts.term_threshold {
                            break;
                        }
                    }
                    for c in 0..3 {
                        color[c] = (color[c] + background[c] * t).clamp(0.0, 1.0);
                    }
                    pixels.push(color);
                    transmittance.push(t);
                }
            }
            TileOutput { tx, ty, pixels, transmittance }
        })
        .collect();

    for out in tile_outputs {
        let (x0, x1, y0, y1) = tiles.tile_rect(out.tx, out.ty, width, height);
        let mut k = 0;
        for y in y0..y1 {
            for x in x0..x1 {
                *fb.image.pixel_mut(x, y) = out.pixels[k];
                fb.transmittance[y * width + x] = out.transmittance[k];
                k += 1;
            }
        }
    }
    fb
}

/// Reverse of [`composite_forward`]. Per pixel the blending is replayed
/// front to back (recomputing each splat's contribution and transmittance),
/// then walked back to front to accumulate gradients. Tile-local gradient
/// buffers are reduced in tile order so the result is bitwise reproducible.
pub fn composite_backward(
    splats: &[SplatInstance],
    tiles: &TileGrid,
    resolution: (usize, usize),
    background: [f64; 3],
    d_image: &ImageRgb,
    opts: &RenderOptions,
) -> SplatGrads {
    let (width, height) = resolution;
    assert_eq!(
        (d_image.width, d_image.height),
        (width, height),
        "loss gradient image must match render resolution"
    );
    let mut grads = SplatGrads::zeros(splats.len());

    struct TileGrads {
        // Parallel to the tile's splat list.
        mean2d: Vec<Vector2<f64>>,
        conic_inv: Vec<Matrix2<f64>>,
        alpha: Vec<f64>,
        color: Vec<[f64; 3]>,
    }

    let tile_grads: Vec<TileGrads> = (0..tiles.lists.len())
        .into_par_iter()
        .map(|tile_idx| {
            let tx = tile_idx % tiles.tiles_x;
            let ty = tile_idx / tiles.tiles_x;
            let (x0, x1, y0, y1) = tiles.tile_rect(tx, ty, width, height);
            let list = &tiles.lists[tile_idx];
            let mut local = TileGrads {
                mean2d: vec![Vector2::zeros(); list.len()],
                conic_inv: vec![Matrix2::zeros(); list.len()],
                alpha: vec![0.0; list.len()],
                color: vec![[0.0; 3]; list.len()],
            };
            // (position in list, effective alpha, falloff, T before splat)
            let mut contribs: Vec<(usize, f64, f64, f64)> = Vec::with_capacity(list.len());
            for y in y0..y1 {
                for x in x0..x1 {
                    let upstream = d_image.pixel(x, y);
                    if upstream == [0.0; 3] {
                        continue;
                    }
                    let pixel = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);

                    // Forward replay, identical to composite_forward.
                    contribs.clear();
                    let mut t = 1.0f64;
                    for (pos, &idx) in list.iter().enumerate() {
                        let splat = &splats[idx as usize];
                        let d = pixel - splat.mean2d;
                        let q = quadratic_form(&splat.conic_inv, &d);
                        if q > CUTOFF_SQ {
                            continue;
                        }
                        let g = (-0.5 * q).exp();
                        let a = (splat.alpha * g).min(ALPHA_MAX);
                        contribs.push((pos, a, g, t));
                        t *= 1.0 - a;
                        if t < opts.term_threshold {
                            break;
                        }
                    }
                    let t_final = t;

                    // suffix = color composited behind the current splat.
                    let mut suffix = [
                        background[0] * t_final,
                        background[1] * t_final,
                        background[2] * t_final,
                    ];
                    for &(pos, a, g, t_before) in contribs.iter().rev() {
                        let idx = list[pos] as usize;
                        let splat = &splats[idx];
                        let clamped = splat.alpha * g > ALPHA_MAX;

                        let mut d_a = 0.0;
                        for c in 0..3 {
                            // dC/dcolor = a * T; dC/da = color * T - suffix/(1-a).
                            local.color[pos][c] += upstream[c] * a * t_before;
                            d_a += upstream[c]
                                * (splat.color[c] * t_before - suffix[c] / (1.0 - a));
                            suffix[c] += splat.color[c] * a * t_before;
                        }
                        if !clamped {
                            // a = alpha * exp(-q/2):  d/dalpha = g,
                            // d/dq = -a/2, q = d^T M d.
                            local.alpha[pos] += d_a * g;
                            let d_q = d_a * splat.alpha * g * -0.5;
                            let d = pixel - splat.mean2d;
                            let md = splat.conic_inv * d;
                            local.mean2d[pos] += -2.0 * d_q * md;
                            local.conic_inv[pos] += d_q * (d * d.transpose());
                        }
                    }
                }
            }
            local
        })
        .collect();

    for (tile_idx, local) in tile_grads.into_iter().enumerate() {
        for (pos, &idx) in tiles.lists[tile_idx].iter().enumerate() {
            let i = idx as usize;
            grads.mean2d[i] += local.mean2d[pos];
            grads.conic_inv[i] += local.conic_inv[pos];
            grads.alpha[i] += local.alpha[pos];
            for c in 0..3 {
                grads.color[i][c] += local.color[pos][c];
            }
        }
    }
    grads
}

/// Brute-force oracle renderer: per-pixel global depth sort over all splats,
/// no tiles, no early termination. Shares projection, the influence cutoff,
/// and the alpha clamp with the tiled path.
pub fn render_reference(
    source: &SplatSource<'_>,
    camera: &Camera,
    background: [f64; 3],
) -> Framebuffer {
    let mut splats = cull_and_project(source, camera);
    splats.sort_by(|a, b| {
        a.depth
            .total_cmp(&b.depth)
            .then(a.source_index.cmp(&b.source_index))
    });
    let mut fb = Framebuffer::new(camera.width, camera.height, background);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let pixel = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut color = [0.0f64; 3];
            let mut t = 1.0f64;
            for splat in &splats {
                let Some(a) = effective_alpha(splat, &pixel) else {
                    continue;
                };
                for c in 0..3 {
                    color[c] += splat.color[c] * a * t;
                }
                t *= 1.0 - a;
            }
            for c in 0..3 {
                color[c] = (color[c] + background[c] * t).clamp(0.0, 1.0);
            }
            *fb.image.pixel_mut(x, y) = color;
            fb.transmittance[y * camera.width + x] = t;
        }
    }
    fb
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::bin_tiles;
    use nalgebra::Matrix2;

    fn splat(alpha: f64, color: [f64; 3], depth: f64, source_index: usize) -> SplatInstance {
        // Unit conic centered mid-image with a generous footprint.
        SplatInstance {
            mean2d: Vector2::new(8.5, 8.5),
            conic_inv: Matrix2::identity(),
            radii: Vector2::new(6.0, 6.0),
            depth,
            alpha,
            color,
            source_index,
        }
    }

    fn composite_one_pixel(splats: &[SplatInstance], background: [f64; 3]) -> [f64; 3] {
        let tiles = bin_tiles(splats, (17, 17), 17);
        let fb = composite_forward(splats, &tiles, (17, 17), background, &RenderOptions::default());
        fb.image.pixel(8, 8)
    }

    #[test]
    fn opaque_splat_renders_its_color() {
        // alpha -> 1 with weight 1 at the pixel center: the pixel takes the
        // splat color (up to the stability clamp on effective alpha).
        let c = [0.3, 0.7, 0.2];
        let px = composite_one_pixel(&[splat(0.999999, c, 1.0, 0)], [0.0; 3]);
        for ch in 0..3 {
            assert!((px[ch] - c[ch]).abs() <= 2e-4, "{px:?} vs {c:?}");
        }
    }

    #[test]
    fn two_coincident_half_splats_blend_front_to_back() {
        // Effective a = 0.5 each, black background: 0.5 c1 + 0.25 c2.
        let c1 = [1.0, 0.0, 0.4];
        let c2 = [0.0, 1.0, 0.8];
        let px = composite_one_pixel(
            &[splat(0.5, c1, 1.0, 0), splat(0.5, c2, 2.0, 1)],
            [0.0; 3],
        );
        for ch in 0..3 {
            let expected = 0.5 * c1[ch] + 0.25 * c2[ch];
            assert!((px[ch] - expected).abs() < 1e-12, "{px:?}");
        }
    }

    #[test]
    fn empty_scene_is_background() {
        let bg = [0.2, 0.4, 0.6];
        let px = composite_one_pixel(&[], bg);
        assert_eq!(px, bg);
        let fb = render_reference(
            &crate::gaussians::GaussianSet::empty(1).as_source(),
            &Camera::look_at(
                nalgebra::Vector3::new(0.0, 0.0, -4.0),
                nalgebra::Vector3::zeros(),
                30.0,
                9,
                9,
                0.1,
            ),
            bg,
        );
        assert!(fb.image.data.iter().all(|p| *p == bg));
        assert!(fb.transmittance.iter().all(|t| *t == 1.0));
    }

    #[test]
    fn transmittance_never_increases_with_more_splats() {
        let splats: Vec<SplatInstance> = (0..6)
            .map(|i| splat(0.3 + 0.05 * i as f64, [0.5; 3], 1.0 + i as f64, i))
            .collect();
        let mut prev = vec![1.0f64; 17 * 17];
        for n in 0..=splats.len() {
            let prefix = &splats[..n];
            let tiles = bin_tiles(prefix, (17, 17), 17);
            let fb =
                composite_forward(prefix, &tiles, (17, 17), [0.0; 3], &RenderOptions::default());
            for (t, p) in fb.transmittance.iter().zip(prev.iter()) {
                assert!(*t <= *p + 1e-15);
            }
            prev = fb.transmittance;
        }
    }

    #[test]
    fn rendering_invariant_under_input_permutation() {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(40);

        // Distinct depths: permuting the input order must not change pixels.
        let camera = Camera::look_at(
            nalgebra::Vector3::new(0.0, 0.0, -5.0),
            nalgebra::Vector3::zeros(),
            60.0,
            48,
            48,
            0.1,
        );
        let mut set = crate::gaussians::GaussianSet::empty(1);
        for i in 0..12 {
            set.push(&crate::gaussians::GaussianParams {
                mean: nalgebra::Vector3::new(
                    -0.6 + 0.1 * i as f64,
                    0.5 - 0.09 * i as f64,
                    -0.6 + 0.11 * i as f64,
                ),
                rotation: nalgebra::Vector4::new(1.0, 0.0, 0.0, 0.0),
                log_scale: nalgebra::Vector3::new(-2.3, -2.4, -2.2),
                opacity_logit: 0.4,
                sh_coeffs: vec![0.3 + 0.04 * i as f64, 0.5, 0.9 - 0.05 * i as f64],
            });
        }
        let base = render_reference(&set.as_source(), &camera, [0.0; 3]);

        let mut order: Vec<usize> = (0..set.len()).collect();
        order.shuffle(&mut rng);
        let mut permuted = crate::gaussians::GaussianSet::empty(1);
        for &i in &order {
            permuted.push(&set.get(i));
        }
        let shuffled = render_reference(&permuted.as_source(), &camera, [0.0; 3]);
        assert_eq!(base.image.data, shuffled.image.data);
    }
}
