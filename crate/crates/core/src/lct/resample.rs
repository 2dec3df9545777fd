//! Resampling between the physical grids and the light-cone lattice.
//!
//! Volume side: voxel `k` occupies the depth cell `[z_k - dz/2, z_k + dz/2]`,
//! i.e. an interval of `u = z^2`. Its value is spread over that interval with
//! unit total weight, using the integral of the linear interpolation basis.
//! The depth channel carries the extra factor `-z_k` (the depth component of
//! the voxel-to-scan-point direction).
//!
//! Measurement side: time bin `j` covers squared radii between the ends of its
//! path-length cell and collects the integral of the linear interpolant of the
//! transformed lattice over that interval, scaled by `gain * r_j^(-p)`. This
//! conserves mass at any ratio of time bins to transformed bins. The gain undoes
//! the unit-sum kernel normalization.

use ndarray::{Array3, Array4, Axis, Zip};

use crate::grid::ScanGrid;
use crate::lct::kernels::transformed_pitch;

/// Two-tap linear weights onto `bin` and `bin + 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub bin: usize,
    pub lo: f64,
    pub hi: f64,
}

fn tap_at(pos: f64, len: usize, scale: f64) -> Tap {
    let bin = pos.floor() as usize;
    let frac = pos - bin as f64;
    Tap {
        bin,
        lo: if bin < len { scale * (1.0 - frac) } else { 0.0 },
        hi: if bin + 1 < len { scale * frac } else { 0.0 },
    }
}

/// A field over `(x, y, u)` or `(x', y', v)` on the transformed lattice.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedVolume {
    pub data: Array3<f64>,
    /// Spacing of the last axis in m^2.
    pub pitch: f64,
}

/// Weights of one time bin over transformed bins `start..start + weights.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRow {
    pub start: usize,
    pub weights: Vec<f64>,
}

/// Integral of the unit hat on `[-1, 1]` up to `x`.
fn hat_cdf(x: f64) -> f64 {
    if x <= -1.0 {
        0.0
    } else if x <= 0.0 {
        0.5 * (x + 1.0) * (x + 1.0)
    } else if x <= 1.0 {
        1.0 - 0.5 * (1.0 - x) * (1.0 - x)
    } else {
        1.0
    }
}

fn time_row(lo: f64, hi: f64, len: usize, scale: f64) -> TimeRow {
    let first = (lo.floor() as usize).saturating_sub(1);
    let last = ((hi.ceil() as usize) + 1).min(len.saturating_sub(1));
    if scale == 0.0 || first > last || first >= len {
        return TimeRow {
            start: 0,
            weights: Vec::new(),
        };
    }
    let weights = (first..=last)
        .map(|m| scale * (hat_cdf(hi - m as f64) - hat_cdf(lo - m as f64)))
        .collect();
    TimeRow {
        start: first,
        weights,
    }
}

#[derive(Debug, Clone)]
pub struct Resampler {
    grid: ScanGrid,
    exponent: i32,
    gain: f64,
    /// Unit-sum splat rows, one per voxel depth.
    depth: Vec<TimeRow>,
    /// Unnormalized cell integrals used by the approximate inverse.
    cells: Vec<TimeRow>,
    depth_factor: Vec<f64>,
    time: Vec<TimeRow>,
}

impl Resampler {
    /// `kernel_entries` is the number of unit entries the kernel set was
    /// normalized by.
    pub fn new(grid: &ScanGrid, exponent: i32, kernel_entries: usize) -> Self {
        let m = grid.depth_res;
        let du = transformed_pitch(grid);
        let gain = kernel_entries as f64;
        let pitch = grid.depth_pitch();
        let cells: Vec<TimeRow> = (0..grid.depth_res)
            .map(|k| {
                let z = grid.depth_coord(k);
                let lo = (z - pitch / 2.0).max(0.0);
                let hi = z + pitch / 2.0;
                time_row(lo * lo / du, hi * hi / du, m, 1.0)
            })
            .collect();
        let depth = cells
            .iter()
            .map(|c| {
                let total: f64 = c.weights.iter().sum();
                let scale = if total > 0.0 { 1.0 / total } else { 0.0 };
                TimeRow {
                    start: c.start,
                    weights: c.weights.iter().map(|w| w * scale).collect(),
                }
            })
            .collect();
        let depth_factor = (0..grid.depth_res).map(|k| -grid.depth_coord(k)).collect();
        let half = grid.bin_width / 2.0;
        let time = (0..grid.num_bins)
            .map(|j| {
                if j == 0 {
                    return time_row(0.0, 0.0, m, 0.0);
                }
                let r = j as f64 * half;
                let lo = (j as f64 - 0.5) * half;
                let hi = (j as f64 + 0.5) * half;
                time_row(lo * lo / du, hi * hi / du, m, gain * r.powi(-exponent))
            })
            .collect();
        Self {
            grid: *grid,
            exponent,
            gain,
            depth,
            cells,
            depth_factor,
            time,
        }
    }

    pub fn exponent(&self) -> i32 {
        self.exponent
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn depth_rows(&self) -> &[TimeRow] {
        &self.depth
    }

    pub fn time_rows(&self) -> &[TimeRow] {
        &self.time
    }

    pub fn transformed_len(&self) -> usize {
        self.grid.depth_res
    }

    pub fn transformed_pitch(&self) -> f64 {
        transformed_pitch(&self.grid)
    }

    /// Channel weight applied before splatting voxel depth `k`.
    fn channel_weight(&self, channel: usize, k: usize) -> f64 {
        if channel == 2 {
            self.depth_factor[k]
        } else {
            1.0
        }
    }

    /// Volume side: `(3, x, y, z)` -> three `(x, y, u)` fields.
    pub fn splat_depth(&self, rho: &Array4<f64>) -> [Array3<f64>; 3] {
        let (_, nx, ny, _) = rho.dim();
        let m = self.transformed_len();
        std::array::from_fn(|c| {
            let mut out = Array3::<f64>::zeros((nx, ny, m));
            let src = rho.index_axis(Axis(0), c);
            Zip::from(out.lanes_mut(Axis(2)))
                .and(src.lanes(Axis(2)))
                .par_for_each(|mut dst, col| {
                    for (k, (&v, row)) in col.iter().zip(&self.depth).enumerate() {
                        let w = v * self.channel_weight(c, k);
                        if w == 0.0 {
                            continue;
                        }
                        for (i, r) in row.weights.iter().enumerate() {
                            dst[row.start + i] += r * w;
                        }
                    }
                });
            out
        })
    }

    /// Transpose of [`Self::splat_depth`].
    pub fn splat_depth_adjoint(&self, fields: &[Array3<f64>; 3]) -> Array4<f64> {
        let (nx, ny, _) = fields[0].dim();
        let nz = self.grid.depth_res;
        let mut out = Array4::<f64>::zeros((3, nx, ny, nz));
        for (c, field) in fields.iter().enumerate() {
            let mut dst = out.index_axis_mut(Axis(0), c);
            Zip::from(dst.lanes_mut(Axis(2)))
                .and(field.lanes(Axis(2)))
                .par_for_each(|mut col, src| {
                    for (k, row) in self.depth.iter().enumerate() {
                        let acc: f64 = row
                            .weights
                            .iter()
                            .zip(src.iter().skip(row.start))
                            .map(|(w, v)| w * v)
                            .sum();
                        col[k] = acc * self.channel_weight(c, k);
                    }
                });
        }
        out
    }

    /// Approximate inverse of [`Self::splat_depth`]: each voxel collects the
    /// mass of the interpolated field over its own depth cell in `u`, then
    /// the depth-channel factor is removed (using a quarter pitch for the
    /// cell on the wall).
    pub fn unsplat_depth(&self, fields: &[Array3<f64>; 3]) -> Array4<f64> {
        let (nx, ny, _) = fields[0].dim();
        let nz = self.grid.depth_res;
        let pitch = self.grid.depth_pitch();
        let mut out = Array4::<f64>::zeros((3, nx, ny, nz));
        for (c, field) in fields.iter().enumerate() {
            let mut dst = out.index_axis_mut(Axis(0), c);
            Zip::from(dst.lanes_mut(Axis(2)))
                .and(field.lanes(Axis(2)))
                .par_for_each(|mut col, src| {
                    for (k, cell) in self.cells.iter().enumerate() {
                        let mass: f64 = cell
                            .weights
                            .iter()
                            .zip(src.iter().skip(cell.start))
                            .map(|(w, v)| w * v)
                            .sum();
                        let weight = if c == 2 {
                            -self.grid.depth_coord(k).max(pitch / 4.0)
                        } else {
                            1.0
                        };
                        col[k] = mass / weight;
                    }
                });
        }
        out
    }

    /// Measurement side: `(x', y', v)` -> `(x', y', t)`.
    pub fn gather_time(&self, field: &Array3<f64>) -> Array3<f64> {
        let (nx, ny, _) = field.dim();
        let nt = self.grid.num_bins;
        let mut out = Array3::<f64>::zeros((nx, ny, nt));
        Zip::from(out.lanes_mut(Axis(2)))
            .and(field.lanes(Axis(2)))
            .par_for_each(|mut dst, src| {
                for (j, row) in self.time.iter().enumerate() {
                    dst[j] = row
                        .weights
                        .iter()
                        .zip(src.iter().skip(row.start))
                        .map(|(w, v)| w * v)
                        .sum();
                }
            });
        out
    }

    /// Transpose of [`Self::gather_time`].
    pub fn gather_time_adjoint(&self, tau: &Array3<f64>) -> Array3<f64> {
        let (nx, ny, _) = tau.dim();
        let m = self.transformed_len();
        let mut out = Array3::<f64>::zeros((nx, ny, m));
        Zip::from(out.lanes_mut(Axis(2)))
            .and(tau.lanes(Axis(2)))
            .par_for_each(|mut dst, src| {
                for (j, row) in self.time.iter().enumerate() {
                    let v = src[j];
                    for (k, w) in row.weights.iter().enumerate() {
                        dst[row.start + k] += w * v;
                    }
                }
            });
        out
    }

    /// Per-bin reciprocal of the total measurement-side weight; zero for
    /// bins that see no transformed sample. Multiplying `H rho` by these turns
    /// every bin into the average of the cone field over its `v` interval.
    pub fn bin_weights(&self) -> Vec<f64> {
        self.time
            .iter()
            .map(|row| {
                let total: f64 = row.weights.iter().sum();
                if total > 0.0 {
                    1.0 / total
                } else {
                    0.0
                }
            })
            .collect()
    }

    /// Attenuation compensation `a(v) = v^((p - 1)/2) * du / (gain * bin_width)`.
    /// The extra `1/sqrt(v)` is the width in `v` of one time bin.
    pub fn compensation(&self, v: f64) -> f64 {
        v.powf((self.exponent - 1) as f64 / 2.0) * self.transformed_pitch()
            / (self.gain * self.grid.bin_width)
    }

    /// Attenuation-compensated light-cone resampling of a measurement:
    /// `out(v_k) = a(v_k) * interp(tau, t = 2 sqrt(v_k))`.
    pub fn transform_measurement(&self, tau: &Array3<f64>) -> TransformedVolume {
        let (nx, ny, nt) = tau.dim();
        let m = self.transformed_len();
        let du = self.transformed_pitch();
        let weights: Vec<(usize, f64, f64)> = (0..m)
            .map(|k| {
                let v = k as f64 * du;
                let pos = 2.0 * v.sqrt() / self.grid.bin_width;
                let t = tap_at(pos, nt, self.compensation(v));
                (t.bin, t.lo, t.hi)
            })
            .collect();
        let mut out = Array3::<f64>::zeros((nx, ny, m));
        Zip::from(out.lanes_mut(Axis(2)))
            .and(tau.lanes(Axis(2)))
            .par_for_each(|mut dst, src| {
                for (k, &(bin, lo, hi)) in weights.iter().enumerate() {
                    let mut acc = 0.0;
                    if bin < nt {
                        acc += lo * src[bin];
                    }
                    if bin + 1 < nt {
                        acc += hi * src[bin + 1];
                    }
                    dst[k] = acc;
                }
            });
        TransformedVolume {
            data: out,
            pitch: du,
        }
    }

    /// Approximate inverse of [`Self::transform_measurement`] (the
    /// measurement-side map of the forward operator).
    pub fn inverse_transform_measurement(&self, field: &TransformedVolume) -> Array3<f64> {
        self.gather_time(&field.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize, nt: usize) -> ScanGrid {
        ScanGrid::new(0.5, n, 0.01, nt, nt).unwrap()
    }

    fn dot3(a: &Array3<f64>, b: &Array3<f64>) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = grid(2, 16);
        let r = Resampler::new(&g, 4, 3);
        let z = Array3::zeros((2, 2, 16));
        assert!(r.transform_measurement(&z).data.iter().all(|&v| v == 0.0));
        assert!(r.gather_time(&z).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn impulse_lands_at_the_squared_radius() {
        let g = ScanGrid::new(0.5, 2, 0.01, 64, 64).unwrap();
        let r = Resampler::new(&g, 4, 1);
        let k = 40usize;
        let mut tau = Array3::zeros((1, 1, 64));
        tau[[0, 0, k]] = 1.0;
        let out = r.transform_measurement(&tau);
        let du = out.pitch;
        let target = (k as f64 * 0.01 / 2.0).powi(2) / du;
        // By hand: v-bin i reads tau at time position 2 sqrt(i du) / bin_width,
        // a tent of half-width one bin around k, times v^(3/2) du / (gain bw).
        for (i, &val) in out.data.iter().enumerate() {
            let v = i as f64 * du;
            let pos = 2.0 * v.sqrt() / 0.01;
            let tent = (1.0 - (pos - k as f64).abs()).max(0.0);
            let expect = tent * v.powf(1.5) * du / (r.gain() * 0.01);
            assert!((val - expect).abs() <= 1e-12 * expect.abs().max(1.0), "bin {i}");
        }
        let nonzero: Vec<usize> = (0..64).filter(|&i| out.data[[0, 0, i]] != 0.0).collect();
        assert!(nonzero.first().unwrap().to_owned() as f64 <= target);
        assert!(nonzero.last().unwrap().to_owned() as f64 >= target);
    }

    #[test]
    fn round_trip_on_smooth_histogram() {
        let nt = 256;
        let g = grid(2, nt);
        let r = Resampler::new(&g, 4, 5);
        // Cubic bump with a double root where it switches on, zero before the
        // first return (the attenuation compensation is singular at t = 0).
        let tau = Array3::from_shape_fn((1, 1, nt), |(_, _, j)| {
            let x = j as f64 / nt as f64;
            if x > 0.3 {
                (x - 0.3).powi(2) * (1.0 - x)
            } else {
                0.0
            }
        });
        let back = r.inverse_transform_measurement(&r.transform_measurement(&tau));
        let err: f64 = tau
            .iter()
            .zip(&back)
            .skip(1)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let norm: f64 = tau.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(err / norm < 1e-3, "relative error {}", err / norm);
    }

    #[test]
    fn transposes_are_exact() {
        let g = ScanGrid::new(0.5, 3, 0.02, 20, 12).unwrap();
        let r = Resampler::new(&g, 3, 7);
        let y = Array3::from_shape_fn((3, 3, 12), |(a, b, c)| ((a * 7 + b * 3 + c) as f64).sin());
        let t = Array3::from_shape_fn((3, 3, 20), |(a, b, c)| ((a + 5 * b + 2 * c) as f64).cos());
        let lhs = dot3(&r.gather_time(&y), &t);
        let rhs = dot3(&y, &r.gather_time_adjoint(&t));
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));

        let rho = Array4::from_shape_fn((3, 3, 3, 12), |(c, a, b, k)| {
            ((c * 11 + a * 5 + b + k * 3) as f64 * 0.7).sin()
        });
        let fields = [
            Array3::from_shape_fn((3, 3, 12), |(a, _, k)| (a as f64 - k as f64 * 0.2).cos()),
            Array3::from_shape_fn((3, 3, 12), |(_, b, k)| (b as f64 * k as f64).sin()),
            Array3::from_shape_fn((3, 3, 12), |(a, b, k)| ((a + b + k) as f64).sqrt()),
        ];
        let fwd = r.splat_depth(&rho);
        let lhs: f64 = (0..3).map(|c| dot3(&fwd[c], &fields[c])).sum();
        let back = r.splat_depth_adjoint(&fields);
        let rhs: f64 = rho.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn unsplat_recovers_depth_smooth_fields() {
        let g = ScanGrid::new(0.5, 2, 0.01, 128, 64).unwrap();
        let r = Resampler::new(&g, 4, 1);
        let rho = Array4::from_shape_fn((3, 2, 2, 64), |(c, _, _, k)| [1.0, -0.5, 0.25][c] * (1.0 + k as f64 / 64.0));
        let back = r.unsplat_depth(&r.splat_depth(&rho));
        // Shallow cells share transformed bins and are not separable.
        for k in 16..60 {
            for c in 0..3 {
                let (a, b) = (back[[c, 1, 0, k]], rho[[c, 1, 0, k]]);
                assert!((a - b).abs() <= 0.01 * b.abs(), "c={c} k={k}: {a} vs {b}");
            }
        }
    }
}
