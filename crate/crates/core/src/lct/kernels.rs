use ndarray::Array3;

use crate::grid::ScanGrid;

/// Shift-invariant light-cone kernels on the `(dx, dy, u)` lattice.
///
/// Lateral offset `(a, b)` is stored at index `(a + n - 1, b + n - 1)` where
/// `n = scan_res`, and `a`, `b` are the scan-point-minus-voxel offsets in
/// lattice units. The third index is the shift `s` in transformed bins between
/// a voxel's squared depth and the squared path radius it reaches.
#[derive(Debug, Clone)]
pub struct ConeKernelSet {
    /// Scalar cone kernel, unit absolute sum.
    pub h_s: Array3<f64>,
    /// `h_s` weighted by the lateral x offset in meters (odd in `a`).
    pub h_x: Array3<f64>,
    /// `h_s` weighted by the lateral y offset in meters (odd in `b`).
    pub h_y: Array3<f64>,
    /// Depth channel. Its `-z` factor lives in the volume-side resampling, so
    /// it coincides with `h_s`.
    pub h_z: Array3<f64>,
    pub scan_res: usize,
    /// Length of the transformed axis (equals the grid's `depth_res`).
    pub transformed_len: usize,
    /// Pitch of the transformed axis in m^2.
    pub transformed_pitch: f64,
    /// Number of lateral offsets whose shell lands inside the transformed axis.
    pub shell_count: usize,
    /// Unit entries before normalization (`shell_count` without blur).
    pub entry_count: usize,
    pub shell_blur: usize,
}

impl ConeKernelSet {
    pub fn lateral_len(&self) -> usize {
        2 * self.scan_res - 1
    }

    pub fn center(&self) -> usize {
        self.scan_res - 1
    }

    /// Nearest transformed bin of the shell for lateral offset `(a, b)`.
    pub fn shell_bin(grid: &ScanGrid, a: isize, b: isize) -> usize {
        let pitch = grid.lateral_pitch();
        let ax = a as f64 * pitch;
        let by = b as f64 * pitch;
        let du = transformed_pitch(grid);
        ((ax * ax + by * by) / du + 0.5).floor() as usize
    }

    /// Nonzero entries as `(a, b, s, h_s, h_x, h_y)`.
    pub fn entries(&self) -> impl Iterator<Item = (isize, isize, usize, f64, f64, f64)> + '_ {
        let c = self.center() as isize;
        self.h_s
            .indexed_iter()
            .filter(|&(_, &hs)| hs != 0.0)
            .map(move |((i, j, s), &hs)| {
                (
                    i as isize - c,
                    j as isize - c,
                    s,
                    hs,
                    self.h_x[[i, j, s]],
                    self.h_y[[i, j, s]],
                )
            })
    }
}

/// Pitch of the squared-depth / squared-radius axis: `max_depth^2 / depth_res`.
pub fn transformed_pitch(grid: &ScanGrid) -> f64 {
    let zmax = grid.max_depth();
    zmax * zmax / grid.depth_res as f64
}

/// Builds the shell kernels. Each lateral offset places a unit entry at the
/// transformed bin nearest `a^2 + b^2` (plus `shell_blur` bins either side);
/// the scalar kernel is then scaled to unit absolute sum.
pub fn build_cone_kernels(grid: &ScanGrid, shell_blur: usize) -> ConeKernelSet {
    let n = grid.scan_res;
    let m = grid.depth_res;
    let side = 2 * n - 1;
    let pitch = grid.lateral_pitch();
    let mut h_s = Array3::<f64>::zeros((side, side, m));
    let mut h_x = Array3::<f64>::zeros((side, side, m));
    let mut h_y = Array3::<f64>::zeros((side, side, m));
    let mut shell_count = 0usize;
    let mut entries = 0usize;
    for i in 0..side {
        for j in 0..side {
            let a = i as isize - (n as isize - 1);
            let b = j as isize - (n as isize - 1);
            let s = ConeKernelSet::shell_bin(grid, a, b);
            if s >= m {
                continue;
            }
            shell_count += 1;
            let lo = s.saturating_sub(shell_blur);
            let hi = (s + shell_blur).min(m - 1);
            for t in lo..=hi {
                h_s[[i, j, t]] = 1.0;
                h_x[[i, j, t]] = a as f64 * pitch;
                h_y[[i, j, t]] = b as f64 * pitch;
                entries += 1;
            }
        }
    }
    let norm = 1.0 / entries as f64;
    h_s.mapv_inplace(|v| v * norm);
    h_x.mapv_inplace(|v| v * norm);
    h_y.mapv_inplace(|v| v * norm);
    let h_z = h_s.clone();
    ConeKernelSet {
        h_s,
        h_x,
        h_y,
        h_z,
        scan_res: n,
        transformed_len: m,
        transformed_pitch: transformed_pitch(grid),
        shell_count,
        entry_count: entries,
        shell_blur,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kernels() -> ConeKernelSet {
        let g = ScanGrid::new(0.8, 8, 0.02, 32, 32).unwrap();
        build_cone_kernels(&g, 0)
    }

    #[test]
    fn shape_and_normalization() {
        let k = kernels();
        assert_eq!(k.h_s.dim(), (15, 15, 32));
        let total: f64 = k.h_s.iter().map(|v| v.abs()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(k.h_s.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn zero_offset_sits_at_bin_zero() {
        let k = kernels();
        let c = k.center();
        assert!(k.h_s[[c, c, 0]] > 0.0);
        assert_eq!(k.h_x[[c, c, 0]], 0.0);
        assert_eq!(k.h_y[[c, c, 0]], 0.0);
        assert_eq!(k.h_s.slice(ndarray::s![c, c, 1..]).sum(), 0.0);
    }

    #[test]
    fn symmetries_hold_exactly() {
        let k = kernels();
        let side = k.lateral_len();
        for i in 0..side {
            for j in 0..side {
                for s in 0..k.transformed_len {
                    let (mi, mj) = (side - 1 - i, side - 1 - j);
                    assert_eq!(k.h_x[[i, j, s]], -k.h_x[[mi, j, s]]);
                    assert_eq!(k.h_x[[i, j, s]], k.h_x[[i, mj, s]]);
                    assert_eq!(k.h_y[[i, j, s]], -k.h_y[[i, mj, s]]);
                    assert_eq!(k.h_y[[i, j, s]], k.h_y[[mi, j, s]]);
                    assert_eq!(k.h_s[[i, j, s]], k.h_s[[mi, j, s]]);
                    assert_eq!(k.h_s[[i, j, s]], k.h_s[[i, mj, s]]);
                    assert_eq!(k.h_z[[i, j, s]], k.h_z[[mi, mj, s]]);
                }
            }
        }
    }

    #[test]
    fn support_lies_on_the_shell() {
        let g = ScanGrid::new(0.8, 8, 0.02, 32, 32).unwrap();
        let k = build_cone_kernels(&g, 0);
        let du = k.transformed_pitch;
        for (a, b, s, _, _, _) in k.entries() {
            let r2 = ((a * a + b * b) as f64) * g.lateral_pitch().powi(2);
            assert!((s as f64 * du - r2).abs() <= 0.5 * du + 1e-15);
        }
    }

    #[test]
    fn blur_widens_each_shell_entry() {
        let g = ScanGrid::new(0.8, 4, 0.02, 32, 32).unwrap();
        let k0 = build_cone_kernels(&g, 0);
        let k1 = build_cone_kernels(&g, 1);
        assert_eq!(k0.shell_count, k1.shell_count);
        assert!(k1.entries().count() > k0.entries().count());
        let total: f64 = k1.h_s.sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
