use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular grid of tile identities, stored row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct TileGrid {
    width: usize,
    height: usize,
    tileset_size: u8,
    tiles: Vec<u8>,
}

#[derive(Deserialize)]
struct RawGrid {
    width: usize,
    height: usize,
    tileset_size: u8,
    tiles: Vec<u8>,
}

impl TryFrom<RawGrid> for TileGrid {
    type Error = Error;

    fn try_from(r: RawGrid) -> Result<Self> {
        TileGrid::new(r.width, r.height, r.tileset_size, r.tiles)
    }
}

impl TileGrid {
    pub fn new(width: usize, height: usize, tileset_size: u8, tiles: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::input("grid dimensions must be positive"));
        }
        if tileset_size == 0 {
            return Err(Error::input("tileset size must be positive"));
        }
        if tiles.len() != width * height {
            return Err(Error::input(format!(
                "grid of {}x{} needs {} tiles, got {}",
                width,
                height,
                width * height,
                tiles.len()
            )));
        }
        if let Some(bad) = tiles.iter().find(|&&t| t >= tileset_size) {
            return Err(Error::input(format!(
                "tile {bad} outside tileset of size {tileset_size}"
            )));
        }
        Ok(Self {
            width,
            height,
            tileset_size,
            tiles,
        })
    }

    pub fn filled(width: usize, height: usize, tileset_size: u8, tile: u8) -> Result<Self> {
        Self::new(width, height, tileset_size, vec![tile; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn tileset_size(&self) -> u8 {
        self.tileset_size
    }

    pub fn tiles(&self) -> &[u8] {
        &self.tiles
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.tiles[y * self.width + x]
    }

    /// Panics if `tile` is outside the tileset or the cell is out of bounds.
    pub fn set(&mut self, x: usize, y: usize, tile: u8) {
        assert!(tile < self.tileset_size, "tile {tile} outside tileset");
        self.tiles[y * self.width + x] = tile;
    }

    pub fn row(&self, y: usize) -> &[u8] {
        &self.tiles[y * self.width..(y + 1) * self.width]
    }

    /// Columns `x0 .. x0 + w` as a new grid.
    pub fn columns(&self, x0: usize, w: usize) -> Result<TileGrid> {
        if w == 0 || x0 + w > self.width {
            return Err(Error::input("column range outside grid"));
        }
        let mut tiles = Vec::with_capacity(w * self.height);
        for y in 0..self.height {
            tiles.extend_from_slice(&self.row(y)[x0..x0 + w]);
        }
        TileGrid::new(w, self.height, self.tileset_size, tiles)
    }

    /// Upper-left `w` x `h` region.
    pub fn crop(&self, w: usize, h: usize) -> Result<TileGrid> {
        if w == 0 || h == 0 || w > self.width || h > self.height {
            return Err(Error::input(format!(
                "crop {w}x{h} exceeds grid {}x{}",
                self.width, self.height
            )));
        }
        let mut tiles = Vec::with_capacity(w * h);
        for y in 0..h {
            tiles.extend_from_slice(&self.row(y)[..w]);
        }
        TileGrid::new(w, h, self.tileset_size, tiles)
    }

    /// Joins grids of equal height left to right.
    pub fn stitch_horizontal(parts: &[TileGrid]) -> Result<TileGrid> {
        let first = parts
            .first()
            .ok_or_else(|| Error::input("nothing to stitch"))?;
        let height = first.height;
        let tileset_size = parts.iter().map(|p| p.tileset_size).max().unwrap_or(1);
        if parts.iter().any(|p| p.height != height) {
            return Err(Error::input("stitched grids must share a height"));
        }
        let width: usize = parts.iter().map(|p| p.width).sum();
        let mut tiles = Vec::with_capacity(width * height);
        for y in 0..height {
            for p in parts {
                tiles.extend_from_slice(p.row(y));
            }
        }
        TileGrid::new(width, height, tileset_size, tiles)
    }

    pub fn count(&self, mut pred: impl FnMut(u8) -> bool) -> usize {
        self.tiles.iter().filter(|&&t| pred(t)).count()
    }
}
