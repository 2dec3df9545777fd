//! Reference implementations used to certify [`DlctOperator`](super::DlctOperator).

use ndarray::{Array3, Axis, Zip};

use crate::error::{Error, Result};
use crate::grid::ScanGrid;
use crate::lct::kernels::ConeKernelSet;
use crate::lct::resample::Resampler;
use crate::volume::{DirectionalAlbedoVolume, TransientVolume};

/// Largest reconstruction volume (in voxels) the direct convolution accepts.
pub const DIRECT_CONV_CAP: usize = 16 * 16 * 16;

/// A scene element: position in meters and directional albedo `rho * n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenePoint {
    pub position: [f64; 3],
    pub directional: [f64; 3],
}

/// Nonzero voxels of a directional volume placed at their voxel centers.
pub fn volume_points(volume: &DirectionalAlbedoVolume) -> Vec<ScenePoint> {
    let grid = volume.grid();
    let (_, nx, ny, nz) = volume.data().dim();
    let mut points = Vec::new();
    for x in 0..nx {
        for y in 0..ny {
            for z in 0..nz {
                let v = volume.vector(x, y, z);
                if v != [0.0; 3] {
                    points.push(ScenePoint {
                        position: [grid.lateral_coord(x), grid.lateral_coord(y), grid.depth_coord(z)],
                        directional: v,
                    });
                }
            }
        }
    }
    points
}

/// Direct summation of the confocal single-bounce transient.
///
/// Each (point, scan point) pair at distance `r` deposits `<v, w> / r^4` into
/// bin `round(2r / bin_width)`, where `w` is the unit vector from the point to
/// the scan point. With `clamp_cosine`, the shading is `max(0, <v, w>)`.
/// Cost is `O(points * scan_res^2)`.
pub fn brute_force_forward(points: &[ScenePoint], grid: &ScanGrid, clamp_cosine: bool) -> TransientVolume {
    let mut out = Array3::<f64>::zeros(grid.transient_shape());
    let nt = grid.num_bins;
    Zip::indexed(out.lanes_mut(Axis(2))).par_for_each(|(i, j), mut hist| {
        let sx = grid.lateral_coord(i);
        let sy = grid.lateral_coord(j);
        for p in points {
            let d = [sx - p.position[0], sy - p.position[1], -p.position[2]];
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r == 0.0 {
                continue;
            }
            let bin = (2.0 * r / grid.bin_width + 0.5).floor() as usize;
            if bin >= nt {
                continue;
            }
            let v = p.directional;
            let mut shade = (v[0] * d[0] + v[1] * d[1] + v[2] * d[2]) / r;
            if clamp_cosine {
                shade = shade.max(0.0);
            }
            hist[bin] += shade / (r * r * r * r);
        }
    });
    TransientVolume::new(*grid, out).expect("brute-force output is finite for finite scenes")
}

/// The forward operator evaluated with nested loops in place of the FFT.
pub fn discrete_conv_oracle(
    rho: &DirectionalAlbedoVolume,
    kernels: &ConeKernelSet,
    resampler: &Resampler,
) -> Result<TransientVolume> {
    let grid = rho.grid();
    let (_, n, _, nz) = rho.data().dim();
    let voxels = n * n * nz;
    if voxels > DIRECT_CONV_CAP {
        return Err(Error::OracleCapExceeded {
            voxels,
            cap: DIRECT_CONV_CAP,
        });
    }
    let fields = resampler.splat_depth(rho.data());
    let m = kernels.transformed_len;
    let entries: Vec<_> = kernels.entries().collect();
    let mut cone = Array3::<f64>::zeros((n, n, m));
    let n_i = n as isize;
    for xo in 0..n_i {
        for yo in 0..n_i {
            for &(a, b, s, hs, hx, hy) in &entries {
                let (xi, yi) = (xo - a, yo - b);
                if xi < 0 || yi < 0 || xi >= n_i || yi >= n_i {
                    continue;
                }
                let (xi, yi) = (xi as usize, yi as usize);
                for v in s..m {
                    let u = v - s;
                    cone[[xo as usize, yo as usize, v]] += hx * fields[0][[xi, yi, u]]
                        + hy * fields[1][[xi, yi, u]]
                        + hs * fields[2][[xi, yi, u]];
                }
            }
        }
    }
    TransientVolume::new(*grid, resampler.gather_time(&cone))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_grid() -> ScanGrid {
        // Odd scan resolution so a scan point sits at the lateral origin.
        ScanGrid::new(0.6, 9, 0.0025, 512, 512).unwrap()
    }

    #[test]
    fn single_surfel_contribution_by_hand() {
        let g = reference_grid();
        let pts = [ScenePoint {
            position: [0.0, 0.0, 0.5],
            directional: [0.0, 0.0, -1.0],
        }];
        let tau = brute_force_forward(&pts, &g, true);
        // r = 0.5, cosine 1: 1 / 0.5^4 = 16 in bin 2 * 0.5 / 0.0025 = 400.
        let v = tau.data()[[4, 4, 400]];
        assert!((v - 16.0).abs() < 1e-9, "{v}");
        assert_eq!(tau.data().slice(ndarray::s![4, 4, ..]).sum(), v);
    }

    #[test]
    fn empty_scene_gives_zero_histogram() {
        let tau = brute_force_forward(&[], &reference_grid(), true);
        assert!(tau.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn back_facing_surfel_is_invisible_when_clamped() {
        let g = reference_grid();
        let pts = [ScenePoint {
            position: [0.01, -0.02, 0.4],
            directional: [0.0, 0.0, 1.0],
        }];
        assert!(brute_force_forward(&pts, &g, true).data().iter().all(|&v| v == 0.0));
        assert!(brute_force_forward(&pts, &g, false).data().iter().any(|&v| v < 0.0));
    }

    #[test]
    fn direct_convolution_respects_cap() {
        let g = ScanGrid::new(0.5, 16, 0.01, 32, 32).unwrap();
        let rho = DirectionalAlbedoVolume::zeros(g);
        let k = crate::lct::build_cone_kernels(&g, 0);
        let r = Resampler::new(&g, 5, k.entry_count);
        assert!(matches!(
            discrete_conv_oracle(&rho, &k, &r),
            Err(Error::OracleCapExceeded { .. })
        ));
    }
}
