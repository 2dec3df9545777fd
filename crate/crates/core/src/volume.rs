//! Dense volume containers and preprocessing.

use ndarray::{s, Array3, Array4, Axis};

use crate::error::{Error, Result};
use crate::grid::ScanGrid;

fn check_finite<'a>(values: impl Iterator<Item = &'a f64>) -> Result<()> {
    match values.enumerate().find(|(_, v)| !v.is_finite()) {
        Some((index, _)) => Err(Error::NonFinite { index }),
        None => Ok(()),
    }
}

/// Photon histogram cube indexed `(scan_x, scan_y, time_bin)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransientVolume {
    grid: ScanGrid,
    data: Array3<f64>,
}

impl TransientVolume {
    pub fn new(grid: ScanGrid, data: Array3<f64>) -> Result<Self> {
        grid.validate()?;
        if data.dim() != grid.transient_shape() {
            return Err(Error::DimensionMismatch(format!(
                "transient data has shape {:?}, grid expects {:?}",
                data.dim(),
                grid.transient_shape()
            )));
        }
        check_finite(data.iter())?;
        Ok(Self {
            grid,
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(grid: ScanGrid) -> Self {
        Self {
            grid,
            data: Array3::zeros(grid.transient_shape()),
        }
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }

    pub fn data(&self) -> &Array3<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array3<f64> {
        self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Directional albedo `rho * n`, indexed `(component, x, y, depth)` with
/// component order `(x, y, z)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalAlbedoVolume {
    grid: ScanGrid,
    data: Array4<f64>,
}

impl DirectionalAlbedoVolume {
    pub fn new(grid: ScanGrid, data: Array4<f64>) -> Result<Self> {
        grid.validate()?;
        if data.dim() != grid.albedo_shape() {
            return Err(Error::DimensionMismatch(format!(
                "directional data has shape {:?}, grid expects {:?}",
                data.dim(),
                grid.albedo_shape()
            )));
        }
        check_finite(data.iter())?;
        Ok(Self {
            grid,
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(grid: ScanGrid) -> Self {
        Self {
            grid,
            data: Array4::zeros(grid.albedo_shape()),
        }
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }

    pub fn data(&self) -> &Array4<f64> {
        &self.data
    }

    pub fn into_data(self) -> Array4<f64> {
        self.data
    }

    pub fn vector(&self, x: usize, y: usize, z: usize) -> [f64; 3] {
        [
            self.data[[0, x, y, z]],
            self.data[[1, x, y, z]],
            self.data[[2, x, y, z]],
        ]
    }

    /// Scalar albedo, the Euclidean norm of each voxel's 3-vector.
    pub fn albedo(&self) -> Array3<f64> {
        let (_, nx, ny, nz) = self.data.dim();
        Array3::from_shape_fn((nx, ny, nz), |(x, y, z)| {
            let v = self.vector(x, y, z);
            (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
        })
    }

    /// Unit normal at a voxel, or `None` where the directional albedo vanishes.
    pub fn normal(&self, x: usize, y: usize, z: usize) -> Option<[f64; 3]> {
        let v = self.vector(x, y, z);
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        (n > 0.0).then(|| [v[0] / n, v[1] / n, v[2] / n])
    }
}

/// Block-average a transient cube by `spatial_factor` along both scan axes and
/// `temporal_factor` along time.
///
/// The output grid has `scan_res / spatial_factor` points and
/// `num_bins / temporal_factor` bins of width `bin_width * temporal_factor`.
/// The depth resolution is divided by `temporal_factor` when it divides evenly
/// (never below 2), otherwise it is kept.
pub fn downsample_transient(
    volume: &TransientVolume,
    spatial_factor: usize,
    temporal_factor: usize,
) -> Result<TransientVolume> {
    let grid = volume.grid();
    if spatial_factor == 0 || temporal_factor == 0 {
        return Err(Error::InvalidArgument(
            "downsampling factors must be positive".into(),
        ));
    }
    if !grid.scan_res.is_multiple_of(spatial_factor) {
        return Err(Error::DimensionMismatch(format!(
            "spatial factor {spatial_factor} does not divide scan_res {}",
            grid.scan_res
        )));
    }
    if !grid.num_bins.is_multiple_of(temporal_factor) {
        return Err(Error::DimensionMismatch(format!(
            "temporal factor {temporal_factor} does not divide num_bins {}",
            grid.num_bins
        )));
    }
    if spatial_factor == 1 && temporal_factor == 1 {
        return Ok(volume.clone());
    }
    let depth_res = if grid.depth_res.is_multiple_of(temporal_factor) {
        (grid.depth_res / temporal_factor).max(2)
    } else {
        grid.depth_res
    };
    let out_grid = ScanGrid {
        scan_res: grid.scan_res / spatial_factor,
        num_bins: grid.num_bins / temporal_factor,
        bin_width: grid.bin_width * temporal_factor as f64,
        depth_res,
        ..*grid
    };
    out_grid.validate()?;

    let (n, _, nt) = out_grid.transient_shape();
    let block = (spatial_factor * spatial_factor * temporal_factor) as f64;
    let data = volume.data();
    let out = Array3::from_shape_fn((n, n, nt), |(x, y, t)| {
        let view = data.slice(s![
            x * spatial_factor..(x + 1) * spatial_factor,
            y * spatial_factor..(y + 1) * spatial_factor,
            t * temporal_factor..(t + 1) * temporal_factor
        ]);
        view.sum() / block
    });
    TransientVolume::new(out_grid, out)
}

/// Sum of a transient volume over its scan axes, one value per time bin.
pub fn temporal_profile(volume: &TransientVolume) -> Vec<f64> {
    volume
        .data()
        .sum_axis(Axis(0))
        .sum_axis(Axis(0))
        .into_raw_vec_and_offset()
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, nt: usize) -> ScanGrid {
        ScanGrid::new(0.6, n, 0.0025, nt, nt).unwrap()
    }

    #[test]
    fn constant_volume_stays_constant() {
        let g = grid(8, 16);
        let v = TransientVolume::new(g, Array3::from_elem((8, 8, 16), 5.0)).unwrap();
        let d = downsample_transient(&v, 2, 2).unwrap();
        assert_eq!(d.data().dim(), (4, 4, 8));
        assert!(d.data().iter().all(|&x| x == 5.0));
        assert_eq!(d.grid().bin_width, 0.005);
    }

    #[test]
    fn unit_factors_are_identity() {
        let g = grid(4, 8);
        let data = Array3::from_shape_fn((4, 4, 8), |(a, b, c)| (a * 100 + b * 10 + c) as f64);
        let v = TransientVolume::new(g, data).unwrap();
        assert_eq!(downsample_transient(&v, 1, 1).unwrap(), v);
    }

    #[test]
    fn non_divisible_factor_is_rejected() {
        let v = TransientVolume::zeros(grid(6, 8));
        assert!(matches!(
            downsample_transient(&v, 4, 1),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            downsample_transient(&v, 1, 3),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn dragon_style_downsampling() {
        // 512 x 512 scan at 32 ps bins -> 128 x 128 at 64 ps.
        let bin = 32e-12 * 3e8;
        let g = ScanGrid::new(2.0, 512, bin, 4, 4)
            .unwrap()
            .with_light_speed(3e8)
            .unwrap();
        let v = TransientVolume::zeros(g);
        let d = downsample_transient(&v, 4, 2).unwrap();
        assert_eq!(d.grid().scan_res, 128);
        assert_eq!(d.grid().num_bins, 2);
        assert!((d.grid().bin_seconds() - 64e-12).abs() < 1e-24);
    }

    #[test]
    fn constructors_reject_non_finite() {
        let g = grid(2, 2);
        let mut data = Array3::zeros((2, 2, 2));
        data[[1, 0, 1]] = f64::NAN;
        assert!(matches!(
            TransientVolume::new(g, data),
            Err(Error::NonFinite { index: 5 })
        ));
        let mut data = Array4::zeros((3, 2, 2, 2));
        data[[2, 1, 1, 1]] = f64::INFINITY;
        assert!(DirectionalAlbedoVolume::new(g, data).is_err());
        assert!(DirectionalAlbedoVolume::new(g, Array4::zeros((3, 2, 2, 3))).is_err());
    }

    #[test]
    fn normal_of_zero_voxel_is_undefined() {
        let g = grid(2, 2);
        let mut v = DirectionalAlbedoVolume::zeros(g).into_data();
        v[[0, 0, 0, 1]] = 3.0;
        v[[1, 0, 0, 1]] = 4.0;
        let v = DirectionalAlbedoVolume::new(g, v).unwrap();
        assert_eq!(v.normal(0, 0, 0), None);
        assert_eq!(v.normal(0, 0, 1), Some([0.6, 0.8, 0.0]));
        assert_eq!(v.albedo()[[0, 0, 1]], 5.0);
    }
}
