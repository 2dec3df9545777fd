//! Map extraction and image-quality metrics.

use ndarray::{Array2, Array3, Axis};

use crate::error::{Error, Result};
use crate::volume::DirectionalAlbedoVolume;

pub const DEFAULT_MASK_THRESHOLD: f64 = 0.1;
const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Per-pixel projections of a directional volume along depth.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconMaps {
    /// Maximum of `|rho|` over depth, divided by the global maximum.
    pub albedo: Array2<f64>,
    /// Depth in meters of the brightest voxel of each column.
    pub depth: Array2<f64>,
    /// Unit normal `(x, y, 3)` at that voxel; zero where undefined.
    pub normal: Array3<f64>,
    pub mask: Array2<bool>,
    pub depth_pitch: f64,
}

pub fn extract_maps(rho: &DirectionalAlbedoVolume, mask_threshold: f64) -> ReconMaps {
    let data = rho.data();
    let (_, nx, ny, nz) = data.dim();
    let pitch = rho.grid().depth_pitch();
    let mut albedo = Array2::<f64>::zeros((nx, ny));
    let mut depth = Array2::<f64>::zeros((nx, ny));
    let mut normal = Array3::<f64>::zeros((nx, ny, 3));
    for x in 0..nx {
        for y in 0..ny {
            let mut best = (0usize, 0.0f64);
            for z in 0..nz {
                let v = rho.vector(x, y, z);
                let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                if n > best.1 {
                    best = (z, n);
                }
            }
            let (k, n) = best;
            albedo[[x, y]] = n;
            depth[[x, y]] = k as f64 * pitch;
            if n > 0.0 {
                let v = rho.vector(x, y, k);
                for c in 0..3 {
                    normal[[x, y, c]] = v[c] / n;
                }
            }
        }
    }
    let peak = albedo.iter().fold(0.0f64, |m, &v| m.max(v));
    if peak > 0.0 {
        albedo.mapv_inplace(|v| v / peak);
    }
    let mask = albedo.mapv(|v| peak > 0.0 && v >= mask_threshold);
    ReconMaps {
        albedo,
        depth,
        normal,
        mask,
        depth_pitch: pitch,
    }
}

fn same_shape(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "maps have shapes {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// `10 log10(1 / MSE)` for maps in `[0, 1]`; identical maps give `+inf`.
pub fn psnr(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    let mse = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

/// PSNR between the `|rho|` volumes, each normalized by its own maximum.
pub fn volume_psnr(a: &DirectionalAlbedoVolume, b: &DirectionalAlbedoVolume) -> Result<f64> {
    let norm = |v: &DirectionalAlbedoVolume| {
        let m = v.albedo();
        let peak = m.iter().fold(0.0f64, |p, &x| p.max(x));
        if peak > 0.0 {
            m / peak
        } else {
            m
        }
    };
    let (x, y) = (norm(a), norm(b));
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch(format!("volumes {:?} and {:?}", x.dim(), y.dim())));
    }
    let mse = x.iter().zip(&y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / x.len() as f64;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

fn gaussian_window() -> Vec<f64> {
    let c = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| (-(i as f64 - c).powi(2) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp())
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable valid-mode filtering with the SSIM window.
fn filter_valid(img: &Array2<f64>, w: &[f64]) -> Array2<f64> {
    let (h, wd) = img.dim();
    let k = w.len();
    let rows = Array2::from_shape_fn((h - k + 1, wd), |(i, j)| (0..k).map(|t| w[t] * img[[i + t, j]]).sum::<f64>());
    Array2::from_shape_fn((h - k + 1, wd - k + 1), |(i, j)| (0..k).map(|t| w[t] * rows[[i, j + t]]).sum::<f64>())
}

/// Mean local SSIM with an 11 x 11 Gaussian window (sigma 1.5), unit range.
pub fn ssim(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    same_shape(a, b)?;
    let (h, w) = a.dim();
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "SSIM needs maps of at least {SSIM_WINDOW} x {SSIM_WINDOW}, got {h} x {w}"
        )));
    }
    let win = gaussian_window();
    let mu_a = filter_valid(a, &win);
    let mu_b = filter_valid(b, &win);
    let aa = filter_valid(&(a * a), &win);
    let bb = filter_valid(&(b * b), &win);
    let ab = filter_valid(&(a * b), &win);
    let mut total = 0.0;
    for ((((ma, mb), saa), sbb), sab) in mu_a.iter().zip(&mu_b).zip(&aa).zip(&bb).zip(&ab) {
        let va = saa - ma * ma;
        let vb = sbb - mb * mb;
        let cov = sab - ma * mb;
        let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
        let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
        total += num / den;
    }
    Ok(total / mu_a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleStats {
    pub median_deg: f64,
    pub mean_deg: f64,
    pub count: usize,
}

fn joint_mask(recon: &ReconMaps, truth: &ReconMaps) -> Result<Vec<(usize, usize)>> {
    if recon.mask.dim() != truth.mask.dim() {
        return Err(Error::DimensionMismatch(format!(
            "maps have shapes {:?} and {:?}",
            recon.mask.dim(),
            truth.mask.dim()
        )));
    }
    let px: Vec<_> = recon
        .mask
        .indexed_iter()
        .filter(|(i, &m)| m && truth.mask[*i])
        .map(|(i, _)| i)
        .collect();
    if px.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(px)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Angle between normals over pixels present in both masks.
pub fn normal_angle_error(recon: &ReconMaps, truth: &ReconMaps) -> Result<AngleStats> {
    let px = joint_mask(recon, truth)?;
    let angles: Vec<f64> = px
        .iter()
        .map(|&(x, y)| {
            let a = recon.normal.index_axis(Axis(0), x);
            let b = truth.normal.index_axis(Axis(0), x);
            let d: f64 = (0..3).map(|c| a[[y, c]] * b[[y, c]]).sum();
            d.clamp(-1.0, 1.0).acos().to_degrees()
        })
        .collect();
    let mean = angles.iter().sum::<f64>() / angles.len() as f64;
    Ok(AngleStats {
        count: angles.len(),
        mean_deg: mean,
        median_deg: median(angles),
    })
}

/// RMSE of the depth maps over pixels present in both masks, in meters.
pub fn depth_rmse(recon: &ReconMaps, truth: &ReconMaps) -> Result<f64> {
    let px = joint_mask(recon, truth)?;
    let s: f64 = px
        .iter()
        .map(|&i| (recon.depth[i] - truth.depth[i]).powi(2))
        .sum();
    Ok((s / px.len() as f64).sqrt())
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub scene: String,
    pub method: String,
    pub lambda: f64,
    pub psnr: f64,
    pub ssim: f64,
    pub normal_median_deg: Option<f64>,
    pub depth_rmse_m: Option<f64>,
    pub runtime_s: Option<f64>,
}

pub const METRIC_CSV_HEADER: &str = "scene,method,lambda,psnr,ssim,normal_median_deg,depth_rmse_m,runtime_s";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

fn fmt_num(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v}")
    }
}

impl MetricRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.scene,
            self.method,
            fmt_num(self.lambda),
            fmt_num(self.psnr),
            fmt_num(self.ssim),
            fmt_opt(self.normal_median_deg),
            fmt_opt(self.depth_rmse_m),
            fmt_opt(self.runtime_s)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ScanGrid;
    use ndarray::Array4;

    #[test]
    fn single_voxel_maps() {
        let g = ScanGrid::new(0.5, 4, 0.02, 32, 16).unwrap();
        let mut d = Array4::zeros(g.albedo_shape());
        d[[0, 1, 2, 7]] = 1.0;
        d[[1, 1, 2, 7]] = 2.0;
        d[[2, 1, 2, 7]] = 3.0;
        let rho = DirectionalAlbedoVolume::new(g, d).unwrap();
        let m = extract_maps(&rho, DEFAULT_MASK_THRESHOLD);
        assert_eq!(m.albedo[[1, 2]], 1.0);
        assert_eq!(m.albedo.iter().filter(|&&v| v != 0.0).count(), 1);
        assert!((m.depth[[1, 2]] - 7.0 * g.depth_pitch()).abs() < 1e-15);
        let s = 14f64.sqrt();
        for (c, e) in [1.0, 2.0, 3.0].iter().enumerate() {
            assert!((m.normal[[1, 2, c]] - e / s).abs() < 1e-15);
        }
        assert_eq!(m.mask.iter().filter(|&&b| b).count(), 1);
    }

    #[test]
    fn zero_volume_gives_empty_maps() {
        let g = ScanGrid::new(0.5, 4, 0.02, 32, 16).unwrap();
        let m = extract_maps(&DirectionalAlbedoVolume::zeros(g), 0.1);
        assert!(m.albedo.iter().all(|&v| v == 0.0));
        assert!(m.mask.iter().all(|&b| !b));
    }

    #[test]
    fn psnr_closed_forms() {
        let a = Array2::from_elem((8, 8), 0.3);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let z = Array2::zeros((4, 4));
        let o = Array2::from_elem((4, 4), 1.0);
        assert!(psnr(&z, &o).unwrap().abs() < 1e-12);
        let b = &a + 0.1;
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert!(psnr(&z, &Array2::zeros((4, 5))).is_err());
    }

    #[test]
    fn ssim_examples() {
        let half = Array2::from_shape_fn((32, 32), |(_, j)| if j < 16 { 0.0 } else { 1.0 });
        assert_eq!(ssim(&half, &half).unwrap(), 1.0);
        let inv = half.mapv(|v| 1.0 - v);
        assert!(ssim(&half, &inv).unwrap() < 0.1);
        assert!(ssim(&Array2::zeros((10, 12)), &Array2::zeros((10, 12))).is_err());
    }

    fn maps_with_normals(n: [f64; 3], depth: f64) -> ReconMaps {
        ReconMaps {
            albedo: Array2::from_elem((3, 3), 1.0),
            depth: Array2::from_elem((3, 3), depth),
            normal: Array3::from_shape_fn((3, 3, 3), |(_, _, c)| n[c]),
            mask: Array2::from_elem((3, 3), true),
            depth_pitch: 0.01,
        }
    }

    #[test]
    fn angle_and_depth_statistics() {
        let a = maps_with_normals([0.0, 0.0, -1.0], 0.5);
        let s = normal_angle_error(&a, &a).unwrap();
        assert_eq!((s.median_deg, s.mean_deg, s.count), (0.0, 0.0, 9));
        let b = maps_with_normals([1.0, 0.0, 0.0], 0.53);
        assert!((normal_angle_error(&a, &b).unwrap().median_deg - 90.0).abs() < 1e-12);
        let c = maps_with_normals([0.0, 0.0, 1.0], 0.5);
        assert!((normal_angle_error(&a, &c).unwrap().median_deg - 180.0).abs() < 1e-12);
        assert_eq!(depth_rmse(&a, &a).unwrap(), 0.0);
        assert!((depth_rmse(&a, &b).unwrap() - 0.03).abs() < 1e-12);
        let mut empty = a.clone();
        empty.mask.fill(false);
        assert!(matches!(depth_rmse(&a, &empty), Err(Error::EmptyMask)));
    }

    #[test]
    fn csv_row_formatting() {
        let row = MetricRow {
            scene: "t-plane".into(),
            method: "ss".into(),
            lambda: 0.01,
            psnr: f64::INFINITY,
            ssim: 1.0,
            normal_median_deg: Some(0.0),
            depth_rmse_m: Some(0.0),
            runtime_s: None,
        };
        assert_eq!(row.to_csv_line(), "t-plane,ss,0.01,inf,1,0,0,");
    }
}
