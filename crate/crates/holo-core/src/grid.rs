//! Pixel grids with physical coordinates.

use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid must be a power of two at least 8 on each side, got {width}x{height}")]
    BadDimensions { width: usize, height: usize },
    #[error("pixel pitch must be positive, got {0}")]
    BadPitch(f64),
}

/// Rectangular pixel grid at a fixed physical pitch.
///
/// Pixel `(i, j)` sits at `x = (i - width/2) * pitch + x0`,
/// `y = (j - height/2) * pitch + y0`. Arrays over the grid are stored
/// row-major as `[j][i]`, i.e. shape `(height, width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Meters per pixel.
    pub pitch: f64,
    /// Physical position of the grid center.
    pub origin: (f64, f64),
}

fn pow2_at_least_8(n: usize) -> bool {
    n >= 8 && n.is_power_of_two()
}

impl GridSpec {
    pub fn new(
        width: usize,
        height: usize,
        pitch: f64,
        origin: (f64, f64),
    ) -> Result<Self, GridError> {
        if !pow2_at_least_8(width) || !pow2_at_least_8(height) {
            return Err(GridError::BadDimensions { width, height });
        }
        if !(pitch > 0.0) {
            return Err(GridError::BadPitch(pitch));
        }
        Ok(GridSpec { width, height, pitch, origin })
    }

    pub fn square(size: usize, pitch: f64) -> Result<Self, GridError> {
        Self::new(size, size, pitch, (0.0, 0.0))
    }

    /// `(height, width)`, the ndarray shape of maps over this grid.
    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - (self.width / 2) as f64) * self.pitch + self.origin.0
    }

    pub fn y(&self, j: usize) -> f64 {
        (j as f64 - (self.height / 2) as f64) * self.pitch + self.origin.1
    }

    /// Spectral bin spacing along x, radians per meter.
    pub fn dk_x(&self) -> f64 {
        TAU / (self.width as f64 * self.pitch)
    }

    pub fn dk_y(&self) -> f64 {
        TAU / (self.height as f64 * self.pitch)
    }

    /// Spatial frequency of column `i` in a centered spectrum (DC at `width/2`).
    pub fn kx(&self, i: usize) -> f64 {
        (i as f64 - (self.width / 2) as f64) * self.dk_x()
    }

    pub fn ky(&self, j: usize) -> f64 {
        (j as f64 - (self.height / 2) as f64) * self.dk_y()
    }
}
