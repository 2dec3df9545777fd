use ndarray::{Array3, Array4};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::grid::ScanGrid;
use crate::lct::fft::Fft3;
use crate::lct::kernels::{build_cone_kernels, ConeKernelSet};
use crate::lct::resample::{Resampler, TransformedVolume};
use crate::volume::{DirectionalAlbedoVolume, TransientVolume};

/// Discretization knobs of the directional light-cone operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorOptions {
    /// Exponent `p` of the measurement-side falloff `r^(-p)`.
    pub attenuation_exponent: i32,
    /// Extra transformed bins on either side of each shell entry.
    pub shell_blur: usize,
}

pub const DEFAULT_ATTENUATION_EXPONENT: i32 = 5;

impl Default for OperatorOptions {
    fn default() -> Self {
        Self {
            attenuation_exponent: DEFAULT_ATTENUATION_EXPONENT,
            shell_blur: 0,
        }
    }
}

/// The confocal directional light-cone transform `H` and its adjoint.
///
/// `H` maps a directional albedo volume to a transient: the three components
/// are resampled to squared depth, convolved with their cone kernels (by
/// zero-padded FFT), summed, and resampled back to time with attenuation.
pub struct DlctOperator {
    grid: ScanGrid,
    options: OperatorOptions,
    kernels: ConeKernelSet,
    resampler: Resampler,
    fft: Fft3,
    spectra: [Vec<Complex64>; 3],
}

impl std::fmt::Debug for DlctOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DlctOperator")
            .field("grid", &self.grid)
            .field("options", &self.options)
            .field("fft", &self.fft)
            .finish()
    }
}

impl DlctOperator {
    pub fn new(grid: &ScanGrid) -> Result<Self> {
        Self::with_options(grid, OperatorOptions::default())
    }

    pub fn with_options(grid: &ScanGrid, options: OperatorOptions) -> Result<Self> {
        grid.validate()?;
        let kernels = build_cone_kernels(grid, options.shell_blur);
        let resampler = Resampler::new(grid, options.attenuation_exponent, kernels.entry_count);
        let n = grid.scan_res;
        let m = grid.depth_res;
        let fft = Fft3::new([2 * n, 2 * n, 2 * m]);
        let spectra = [&kernels.h_x, &kernels.h_y, &kernels.h_z].map(|k| kernel_spectrum(k, &fft, n));
        Ok(Self {
            grid: *grid,
            options,
            kernels,
            resampler,
            fft,
            spectra,
        })
    }

    pub fn grid(&self) -> &ScanGrid {
        &self.grid
    }

    pub fn options(&self) -> &OperatorOptions {
        &self.options
    }

    pub fn kernels(&self) -> &ConeKernelSet {
        &self.kernels
    }

    pub fn resampler(&self) -> &Resampler {
        &self.resampler
    }

    /// Kernel spectra on the padded FFT box (non-negative half of the last
    /// axis), channel order `(x, y, z)`.
    pub fn spectra(&self) -> &[Vec<Complex64>; 3] {
        &self.spectra
    }

    pub fn fft_dims(&self) -> [usize; 3] {
        self.fft.dims()
    }

    fn check_grid(&self, other: &ScanGrid) -> Result<()> {
        if other != &self.grid {
            return Err(Error::DimensionMismatch(format!(
                "volume grid {other:?} does not match operator grid {:?}",
                self.grid
            )));
        }
        Ok(())
    }

    pub fn forward(&self, rho: &DirectionalAlbedoVolume) -> Result<TransientVolume> {
        self.check_grid(rho.grid())?;
        TransientVolume::new(self.grid, self.apply(rho.data()))
    }

    pub fn adjoint(&self, tau: &TransientVolume) -> Result<DirectionalAlbedoVolume> {
        self.check_grid(tau.grid())?;
        DirectionalAlbedoVolume::new(self.grid, self.apply_adjoint(tau.data()))
    }

    /// `H rho` on raw arrays of shape `(3, n, n, depth_res)`.
    pub fn apply(&self, rho: &Array4<f64>) -> Array3<f64> {
        let fields = self.resampler.splat_depth(rho);
        let cone = self.convolve(&fields);
        self.resampler.gather_time(&cone)
    }

    /// `H^T tau` on raw arrays of shape `(n, n, num_bins)`.
    pub fn apply_adjoint(&self, tau: &Array3<f64>) -> Array4<f64> {
        let cone = self.resampler.gather_time_adjoint(tau);
        let fields = self.correlate(&cone);
        self.resampler.splat_depth_adjoint(&fields)
    }

    /// Sum of the three channel convolutions on the transformed lattice.
    pub fn convolve(&self, fields: &[Array3<f64>; 3]) -> Array3<f64> {
        let mut acc = vec![Complex64::default(); self.fft.spectrum_len()];
        for (field, spectrum) in fields.iter().zip(&self.spectra) {
            let buf = self.fft.forward(field.view());
            acc.par_iter_mut()
                .zip(buf.par_iter())
                .zip(spectrum.par_iter())
                .for_each(|((a, b), k)| *a += b * k);
        }
        self.fft.inverse(acc, self.crop())
    }

    /// Transpose of [`Self::convolve`]: one correlation per channel.
    pub fn correlate(&self, field: &Array3<f64>) -> [Array3<f64>; 3] {
        let buf = self.fft.forward(field.view());
        std::array::from_fn(|c| {
            let prod: Vec<Complex64> = buf
                .par_iter()
                .zip(self.spectra[c].par_iter())
                .map(|(b, k)| b * k.conj())
                .collect();
            self.fft.inverse(prod, self.crop())
        })
    }

    /// Joint per-frequency Wiener deconvolution of a transformed measurement;
    /// returns the three transformed-domain channel estimates.
    pub fn wiener_deconvolve(&self, measurement: &TransformedVolume, alpha: f64) -> [Array3<f64>; 3] {
        let buf = self.fft.forward(measurement.data.view());
        let estimates = wiener_filter(&buf, &self.spectra, alpha);
        estimates.map(|spec| self.fft.inverse(spec, self.crop()))
    }

    fn crop(&self) -> [usize; 3] {
        let n = self.grid.scan_res;
        [n, n, self.grid.depth_res]
    }
}

/// `conj(K_d) Y / (sum_d |K_d|^2 + 1/alpha)` per frequency.
pub fn wiener_filter(
    measurement: &[Complex64],
    spectra: &[Vec<Complex64>; 3],
    alpha: f64,
) -> [Vec<Complex64>; 3] {
    let inv_alpha = 1.0 / alpha;
    let denom: Vec<f64> = (0..measurement.len())
        .into_par_iter()
        .map(|f| spectra.iter().map(|s| s[f].norm_sqr()).sum::<f64>() + inv_alpha)
        .collect();
    std::array::from_fn(|c| {
        measurement
            .par_iter()
            .zip(spectra[c].par_iter())
            .zip(denom.par_iter())
            .map(|((y, k), d)| k.conj() * y / d)
            .collect()
    })
}

/// Places kernel offset `a` at circular index `a mod P` and transforms.
fn kernel_spectrum(kernel: &Array3<f64>, fft: &Fft3, n: usize) -> Vec<Complex64> {
    let [d0, d1, d2] = fft.dims();
    let mut buf = Array3::zeros((d0, d1, d2));
    let c = n as isize - 1;
    for ((i, j, s), &v) in kernel.indexed_iter() {
        if v == 0.0 {
            continue;
        }
        let a = (i as isize - c).rem_euclid(d0 as isize) as usize;
        let b = (j as isize - c).rem_euclid(d1 as isize) as usize;
        buf[[a, b, s]] = v;
    }
    fft.forward(buf.view())
}
