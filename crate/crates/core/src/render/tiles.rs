//! Screen-space tile binning.

use super::SplatInstance;

/// Splat index lists per tile, each sorted ascending by depth with ties
/// broken by source index.
#[derive(Debug, Clone)]
pub struct TileGrid {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub lists: Vec<Vec<u32>>,
}

impl TileGrid {
    /// Pixel rectangle `[x0, x1) x [y0, y1)` of a tile, clamped to the image.
    pub fn tile_rect(&self, tx: usize, ty: usize, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (
            x0,
            (x0 + self.tile_size).min(width),
            y0,
            (y0 + self.tile_size).min(height),
        )
    }
}

/// Bin splats into tiles. A splat lands in every tile its axis-aligned
/// compositing footprint overlaps (which covers every tile its 3-sigma
/// extent overlaps).
pub fn bin_tiles(
    splats: &[SplatInstance],
    resolution: (usize, usize),
    tile_size: usize,
) -> TileGrid {
    assert!(tile_size >= 1, "tile size must be at least one pixel");
    let (width, height) = resolution;
    let tiles_x = width.div_ceil(tile_size);
    let tiles_y = height.div_ceil(tile_size);
    let mut lists = vec![Vec::new(); tiles_x * tiles_y];

    for (idx, splat) in splats.iter().enumerate() {
        let x0 = splat.mean2d.x - splat.radii.x;
        let x1 = splat.mean2d.x + splat.radii.x;
        let y0 = splat.mean2d.y - splat.radii.y;
        let y1 = splat.mean2d.y + splat.radii.y;
        if x1 < 0.0 || y1 < 0.0 || x0 >= width as f64 || y0 >= height as f64 {
            continue;
        }
        let ts = tile_size as f64;
        let tx0 = (x0.max(0.0) / ts) as usize;
        let ty0 = (y0.max(0.0) / ts) as usize;
        let tx1 = ((x1 / ts) as usize).min(tiles_x - 1);
        let ty1 = ((y1 / ts) as usize).min(tiles_y - 1);
        for ty in ty0..=ty1 {
            for tx in tx0..=tx1 {
                lists[ty * tiles_x + tx].push(idx as u32);
            }
        }
    }

    for list in &mut lists {
        list.sort_by(|&a, &b| {
            let (sa, sb) = (&splats[a as usize], &splats[b as usize]);
            sa.depth
                .total_cmp(&sb.depth)
                .then(sa.source_index.cmp(&sb.source_index))
        });
    }

    TileGrid { tile_size, tiles_x, tiles_y, lists }
}
