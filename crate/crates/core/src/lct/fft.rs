//! Pruned real 3D FFT over a zero-padded box.
//!
//! The forward transform takes a field that sits in the leading corner of
//! the box and skips lines that are identically zero; the inverse only
//! completes the lines that land in the leading `crop` corner.

use std::sync::Arc;

use ndarray::{Array3, ArrayView3, Axis};
use rayon::prelude::*;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Real-input 3D transform; spectra keep the non-negative half of the last
/// axis, `dims[2] / 2 + 1` entries per line.
pub(crate) struct Fft3 {
    dims: [usize; 3],
    half: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fwd: [Arc<dyn Fft<f64>>; 2],
    inv: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for Fft3 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft3").field("dims", &self.dims).finish()
    }
}

impl Fft3 {
    pub fn new(dims: [usize; 3]) -> Self {
        let mut real = RealFftPlanner::new();
        let mut planner = FftPlanner::new();
        Self {
            dims,
            half: dims[2] / 2 + 1,
            r2c: real.plan_fft_forward(dims[2]),
            c2r: real.plan_fft_inverse(dims[2]),
            fwd: [planner.plan_fft_forward(dims[0]), planner.plan_fft_forward(dims[1])],
            inv: [planner.plan_fft_inverse(dims[0]), planner.plan_fft_inverse(dims[1])],
        }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Number of real samples in the box.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    /// Number of stored spectrum entries.
    pub fn spectrum_len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.half
    }

    /// Unnormalized forward transform of `field` placed in the leading
    /// corner of the box, zero elsewhere.
    pub fn forward(&self, field: ArrayView3<f64>) -> Vec<Complex64> {
        let [_, d1, d2] = self.dims;
        let h = self.half;
        let (s0, s1, s2) = field.dim();
        let mut spec = vec![Complex64::default(); self.spectrum_len()];
        spec.par_chunks_mut(d1 * h)
            .zip(field.axis_iter(Axis(0)).into_par_iter())
            .for_each(|(plane, rows)| {
                let mut line = vec![0.0; d2];
                for (j, row) in rows.axis_iter(Axis(0)).enumerate() {
                    line[..s2].iter_mut().zip(row.iter()).for_each(|(l, &v)| *l = v);
                    line[s2..].iter_mut().for_each(|l| *l = 0.0);
                    self.r2c
                        .process(&mut line, &mut plane[j * h..(j + 1) * h])
                        .expect("line lengths match the plan");
                }
                strided_pass(plane, d1, h, &*self.fwd[1]);
            });
        debug_assert!(s0 <= self.dims[0] && s1 <= d1);
        axis0(&mut spec, self.dims[0], d1 * h, &*self.fwd[0]);
        spec
    }

    /// Inverse transform scaled by `1 / len`, evaluated only on the leading
    /// `crop` corner.
    pub fn inverse(&self, mut spec: Vec<Complex64>, crop: [usize; 3]) -> Array3<f64> {
        let [_, d1, d2] = self.dims;
        let h = self.half;
        let scale = 1.0 / self.len() as f64;
        axis0(&mut spec, self.dims[0], d1 * h, &*self.inv[0]);
        let mut out = Array3::zeros((crop[0], crop[1], crop[2]));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .zip(spec.par_chunks_mut(d1 * h))
            .for_each(|(mut rows, plane)| {
                strided_pass(plane, d1, h, &*self.inv[1]);
                let mut line = vec![Complex64::default(); h];
                let mut real = vec![0.0; d2];
                for (j, mut row) in rows.axis_iter_mut(Axis(0)).enumerate() {
                    line.copy_from_slice(&plane[j * h..(j + 1) * h]);
                    // Roundoff leaves tiny imaginary parts on the self-conjugate bins.
                    line[0].im = 0.0;
                    if d2 % 2 == 0 {
                        line[h - 1].im = 0.0;
                    }
                    self.c2r
                        .process(&mut line, &mut real)
                        .expect("line lengths match the plan");
                    row.iter_mut().zip(&real).for_each(|(o, &v)| *o = v * scale);
                }
            });
        out
    }
}

/// FFT along the slowest axis: every column across `d0` planes.
fn axis0(buf: &mut [Complex64], d0: usize, plane_len: usize, fft: &dyn Fft<f64>) {
    let mut cols = vec![Complex64::default(); buf.len()];
    cols.par_chunks_mut(d0).enumerate().for_each(|(c, col)| {
        for (i, v) in col.iter_mut().enumerate() {
            *v = buf[i * plane_len + c];
        }
    });
    fft.process(&mut cols);
    buf.par_chunks_mut(plane_len).enumerate().for_each(|(i, plane)| {
        for (c, v) in plane.iter_mut().enumerate() {
            *v = cols[c * d0 + i];
        }
    });
}

/// FFT along the middle axis of a `rows x cols` row-major plane.
fn strided_pass(plane: &mut [Complex64], rows: usize, cols: usize, fft: &dyn Fft<f64>) {
    let mut scratch = vec![Complex64::default(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            scratch[c * rows + r] = plane[r * cols + c];
        }
    }
    fft.process(&mut scratch);
    for r in 0..rows {
        for c in 0..cols {
            plane[r * cols + c] = scratch[c * rows + r];
        }
    }
}
