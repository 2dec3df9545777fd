//! Scan and reconstruction geometry.
//!
//! The relay wall is the plane `z = 0`, centered on the origin, scanned on a
//! `scan_res x scan_res` lattice of confocal points. Time is stored as optical
//! path length: bin `j` covers round-trip path `j * bin_width` meters, so a
//! point at distance `r` from a scan point returns in bin `round(2r / bin_width)`.
//! The reconstruction volume shares the lateral lattice of the scan and spans
//! depths `k * depth_pitch` for `k` in `0..depth_res`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanGrid {
    pub wall_width_m: f64,
    pub scan_res: usize,
    pub bin_width: f64,
    pub num_bins: usize,
    pub depth_res: usize,
    pub light_speed: f64,
}

impl ScanGrid {
    pub fn new(
        wall_width_m: f64,
        scan_res: usize,
        bin_width: f64,
        num_bins: usize,
        depth_res: usize,
    ) -> Result<Self> {
        let grid = ScanGrid {
            wall_width_m,
            scan_res,
            bin_width,
            num_bins,
            depth_res,
            light_speed: 1.0,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn with_light_speed(mut self, light_speed: f64) -> Result<Self> {
        self.light_speed = light_speed;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidGrid(msg));
        if !(self.wall_width_m.is_finite() && self.wall_width_m > 0.0) {
            return bad(format!("wall_width_m must be > 0, got {}", self.wall_width_m));
        }
        if !(self.bin_width.is_finite() && self.bin_width > 0.0) {
            return bad(format!("bin_width must be > 0, got {}", self.bin_width));
        }
        if !(self.light_speed.is_finite() && self.light_speed > 0.0) {
            return bad(format!("light_speed must be > 0, got {}", self.light_speed));
        }
        if self.scan_res < 2 {
            return bad(format!("scan_res must be >= 2, got {}", self.scan_res));
        }
        if self.num_bins < 2 {
            return bad(format!("num_bins must be >= 2, got {}", self.num_bins));
        }
        if self.depth_res < 2 {
            return bad(format!("depth_res must be >= 2, got {}", self.depth_res));
        }
        Ok(())
    }

    /// Lateral spacing of scan points and voxels.
    pub fn lateral_pitch(&self) -> f64 {
        self.wall_width_m / self.scan_res as f64
    }

    /// Lateral coordinate of scan point / voxel column `i` (pixel centers).
    pub fn lateral_coord(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.lateral_pitch() - 0.5 * self.wall_width_m
    }

    /// Fractional lateral index of coordinate `x` (inverse of [`Self::lateral_coord`]).
    pub fn lateral_index(&self, x: f64) -> f64 {
        (x + 0.5 * self.wall_width_m) / self.lateral_pitch() - 0.5
    }

    /// Largest reconstructable depth, `num_bins * bin_width / 2`.
    pub fn max_depth(&self) -> f64 {
        self.num_bins as f64 * self.bin_width / 2.0
    }

    pub fn depth_pitch(&self) -> f64 {
        self.max_depth() / self.depth_res as f64
    }

    pub fn depth_coord(&self, k: usize) -> f64 {
        k as f64 * self.depth_pitch()
    }

    /// Time-bin duration in seconds.
    pub fn bin_seconds(&self) -> f64 {
        self.bin_width / self.light_speed
    }

    pub fn transient_shape(&self) -> (usize, usize, usize) {
        (self.scan_res, self.scan_res, self.num_bins)
    }

    pub fn albedo_shape(&self) -> (usize, usize, usize, usize) {
        (3, self.scan_res, self.scan_res, self.depth_res)
    }
}
