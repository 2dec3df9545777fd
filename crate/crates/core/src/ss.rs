//! Structure-sparsity regularizer and the simpler proxes it is compared with.
//!
//! The patch matrix at voxel `n` stacks `sqrt(w_l) * rho(n + off_l)` as the
//! columns of a 3 x L matrix. The penalty is the sum over voxels of its nuclear
//! norm. The proximal map is approximated by thresholding every patch and
//! averaging the overlapping estimates, which is the exact prox when windows
//! do not overlap.
//!
//! Every 3 x L decomposition goes through the 3 x 3 Gram matrix `P P^T`, so a
//! patch costs one symmetric eigenproblem no matter how large `L` is.

use ndarray::{Array4, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::volume::DirectionalAlbedoVolume;

pub const DEFAULT_WINDOW_LEN: usize = 27;
pub const DEFAULT_SIGMA_SYNTHETIC: f64 = 0.5;
pub const DEFAULT_SIGMA_REAL: f64 = 0.35;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 30;

/// Cubic neighbourhood with Gaussian weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    /// Total voxels in the window; a cube of an odd side.
    pub len: usize,
    pub sigma: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            len: DEFAULT_WINDOW_LEN,
            sigma: DEFAULT_SIGMA_SYNTHETIC,
        }
    }
}

impl WindowSpec {
    pub fn new(len: usize, sigma: f64) -> Result<Self> {
        let spec = Self { len, sigma };
        spec.side()?;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "window sigma must be positive, got {sigma}"
            )));
        }
        Ok(spec)
    }

    /// Side length of the cube, checking that `len` is an odd cube.
    pub fn side(&self) -> Result<usize> {
        let side = (self.len as f64).cbrt().round() as usize;
        if side * side * side != self.len || side.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "window length {} is not the cube of an odd side",
                self.len
            )));
        }
        Ok(side)
    }

    /// Offsets in raster order, last axis fastest.
    pub fn offsets(&self) -> Result<Vec<[isize; 3]>> {
        let side = self.side()? as isize;
        let h = side / 2;
        let mut out = Vec::with_capacity(self.len);
        for dx in -h..=h {
            for dy in -h..=h {
                for dz in -h..=h {
                    out.push([dx, dy, dz]);
                }
            }
        }
        Ok(out)
    }
}

/// `w_l = exp(-|off_l|^2 / (2 sigma^2))`, normalized to unit sum.
pub fn gaussian_window_weights(spec: &WindowSpec) -> Result<Vec<f64>> {
    let spec = WindowSpec::new(spec.len, spec.sigma)?;
    let two_s2 = 2.0 * spec.sigma * spec.sigma;
    let raw: Vec<f64> = spec
        .offsets()?
        .iter()
        .map(|o| {
            let d2 = (o[0] * o[0] + o[1] * o[1] + o[2] * o[2]) as f64;
            (-d2 / two_s2).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Offsets and weights resolved once for repeated prox calls.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub spec: WindowSpec,
    pub offsets: Vec<[isize; 3]>,
    pub weights: Vec<f64>,
    /// Normalized 1D factor of the weights: `weights` is its outer cube.
    profile: Vec<f64>,
}

impl Window {
    pub fn new(spec: WindowSpec) -> Result<Self> {
        let h = (spec.side()? / 2) as isize;
        let two_s2 = 2.0 * spec.sigma * spec.sigma;
        let raw: Vec<f64> = (-h..=h).map(|d| (-((d * d) as f64) / two_s2).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            offsets: spec.offsets()?,
            weights: gaussian_window_weights(&spec)?,
            profile: raw.into_iter().map(|w| w / total).collect(),
            spec,
        })
    }

    /// `out(m) = sum_l w_l f(m + off_l)` with zero outside the volume. The
    /// weights are symmetric, so this is also `sum_l w_l f(m - off_l)`.
    fn blur<const K: usize>(&self, dims: [usize; 3], field: Vec<[f64; K]>) -> Vec<[f64; K]> {
        let mut field = field;
        for axis in 0..3 {
            field = blur_axis(dims, &field, axis, &self.profile);
        }
        field
    }

    /// Total in-volume window weight seen from each voxel.
    fn coverage(&self, dims: [usize; 3]) -> Vec<f64> {
        let h = (self.profile.len() / 2) as isize;
        let sums: Vec<Vec<f64>> = dims
            .iter()
            .map(|&n| {
                (0..n as isize)
                    .map(|i| {
                        (-h..=h)
                            .filter(|d| (0..n as isize).contains(&(i + d)))
                            .map(|d| self.profile[(d + h) as usize])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        let [nx, ny, nz] = dims;
        let mut out = Vec::with_capacity(nx * ny * nz);
        for x in 0..nx {
            for y in 0..ny {
                for z in 0..nz {
                    out.push(sums[0][x] * sums[1][y] * sums[2][z]);
                }
            }
        }
        out
    }
}

fn blur_axis<const K: usize>(dims: [usize; 3], field: &[[f64; K]], axis: usize, profile: &[f64]) -> Vec<[f64; K]> {
    let [_, ny, nz] = dims;
    let stride = [ny * nz, nz, 1][axis];
    let n = dims[axis] as isize;
    let h = (profile.len() / 2) as isize;
    (0..field.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|i| {
            let pos = ((i / stride) % dims[axis]) as isize;
            let mut acc = [0.0; K];
            for (t, &w) in profile.iter().enumerate() {
                let d = t as isize - h;
                if (0..n).contains(&(pos + d)) {
                    let src = &field[(i as isize + d * stride as isize) as usize];
                    for (a, s) in acc.iter_mut().zip(src) {
                        *a += w * s;
                    }
                }
            }
            acc
        })
        .collect()
}

/// Upper triangle of a symmetric 3 x 3 matrix, row by row.
fn pack(g: &[[f64; 3]; 3]) -> [f64; 6] {
    [g[0][0], g[0][1], g[0][2], g[1][1], g[1][2], g[2][2]]
}

fn unpack(p: &[f64; 6]) -> [[f64; 3]; 3] {
    [[p[0], p[1], p[2]], [p[1], p[3], p[4]], [p[2], p[4], p[5]]]
}

/// A 3 x L patch stored column by column.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    pub columns: Vec<[f64; 3]>,
}

impl PatchMatrix {
    pub fn gram(&self) -> [[f64; 3]; 3] {
        let mut g = [[0.0; 3]; 3];
        for c in &self.columns {
            accumulate_outer(&mut g, c, 1.0);
        }
        symmetrize(&mut g);
        g
    }
}

/// Singular values (descending) with their left singular vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchFactorization {
    pub values: [f64; 3],
    /// `vectors[i]` pairs with `values[i]`.
    pub vectors: [[f64; 3]; 3],
}

fn accumulate_outer(g: &mut [[f64; 3]; 3], v: &[f64; 3], w: f64) {
    for i in 0..3 {
        for j in i..3 {
            g[i][j] += w * v[i] * v[j];
        }
    }
}

fn symmetrize(g: &mut [[f64; 3]; 3]) {
    g[1][0] = g[0][1];
    g[2][0] = g[0][2];
    g[2][1] = g[1][2];
}

/// Cyclic Jacobi on a symmetric 3 x 3 matrix. Returns eigenvalues in
/// descending order and the matching unit eigenvectors.
pub fn sym_eigen3(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
    let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>();
    let tol2 = JACOBI_TOL * JACOBI_TOL * scale;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
        if off <= tol2 || off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[p][q];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[q][q] - a[p][p]) / (2.0 * apq);
            let t = if theta.abs() > 1e150 {
                0.5 / theta
            } else {
                theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
            };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            for row in a.iter_mut() {
                let (kp, kq) = (row[p], row[q]);
                row[p] = c * kp - s * kq;
                row[q] = s * kp + c * kq;
            }
            #[allow(clippy::needless_range_loop)]
            for k in 0..3 {
                let (pk, qk) = (a[p][k], a[q][k]);
                a[p][k] = c * pk - s * qk;
                a[q][k] = s * pk + c * qk;
            }
            for row in v.iter_mut() {
                let (kp, kq) = (row[p], row[q]);
                row[p] = c * kp - s * kq;
                row[q] = s * kp + c * kq;
            }
        }
    }
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.map(|i| a[i][i]);
    let vectors = order.map(|i| [v[0][i], v[1][i], v[2][i]]);
    (values, vectors)
}

/// Singular values and left vectors from the eigenpairs of `P P^T`.
fn factorize_gram(g: &[[f64; 3]; 3]) -> PatchFactorization {
    let (lambda, vectors) = sym_eigen3(*g);
    PatchFactorization {
        values: lambda.map(|l| l.max(0.0).sqrt()),
        vectors,
    }
}

pub fn factorize_patch(p: &PatchMatrix) -> PatchFactorization {
    factorize_gram(&p.gram())
}

pub fn patch_nuclear_norm(p: &PatchMatrix) -> f64 {
    factorize_patch(p).values.iter().sum()
}

/// `U diag(max(s - theta, 0) / s) U^T`, with `0/0 := 0`.
fn shrink_matrix(f: &PatchFactorization, theta: f64) -> [[f64; 3]; 3] {
    let mut m = [[0.0; 3]; 3];
    for (s, u) in f.values.iter().zip(&f.vectors) {
        if *s <= 0.0 {
            continue;
        }
        let ratio = (s - theta).max(0.0) / s;
        if ratio > 0.0 {
            accumulate_outer(&mut m, u, ratio);
        }
    }
    symmetrize(&mut m);
    m
}

fn mat_vec(m: &[[f64; 3]; 3], v: &[f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

/// Singular-value soft thresholding of one patch.
pub fn svt_patch(p: &PatchMatrix, theta: f64) -> PatchMatrix {
    let s = shrink_matrix(&factorize_patch(p), theta);
    PatchMatrix {
        columns: p.columns.iter().map(|c| mat_vec(&s, c)).collect(),
    }
}

/// Voxel vectors of a `(3, nx, ny, nz)` array, flattened in raster order.
struct VectorField {
    dims: [usize; 3],
    v: Vec<[f64; 3]>,
}

impl VectorField {
    fn from_array(data: &Array4<f64>) -> Self {
        let (_, nx, ny, nz) = data.dim();
        let (cx, cy, cz) = (
            data.index_axis(Axis(0), 0),
            data.index_axis(Axis(0), 1),
            data.index_axis(Axis(0), 2),
        );
        let mut v = Vec::with_capacity(nx * ny * nz);
        for ((a, b), c) in cx.iter().zip(cy.iter()).zip(cz.iter()) {
            v.push([*a, *b, *c]);
        }
        Self { dims: [nx, ny, nz], v }
    }

    fn into_array(self) -> Array4<f64> {
        let [nx, ny, nz] = self.dims;
        let n = nx * ny * nz;
        let mut flat = vec![0.0; 3 * n];
        for (i, v) in self.v.iter().enumerate() {
            flat[i] = v[0];
            flat[n + i] = v[1];
            flat[2 * n + i] = v[2];
        }
        Array4::from_shape_vec((3, nx, ny, nz), flat).expect("shape matches length")
    }

    /// Packed `P P^T` of every voxel's patch matrix.
    fn grams(&self, window: &Window) -> Vec<[f64; 6]> {
        let outer = self
            .v
            .par_iter()
            .map(|v| [v[0] * v[0], v[0] * v[1], v[0] * v[2], v[1] * v[1], v[1] * v[2], v[2] * v[2]])
            .collect();
        window.blur(self.dims, outer)
    }
}

fn nuclear_from_gram(g: &[f64; 6]) -> f64 {
    if g.iter().all(|&x| x == 0.0) {
        return 0.0;
    }
    factorize_gram(&unpack(g)).values.iter().sum()
}

/// Patch matrix of voxel `(x, y, z)`; out-of-volume neighbours give zero columns.
pub fn extract_patch_matrix(
    rho: &DirectionalAlbedoVolume,
    voxel: [usize; 3],
    window: &Window,
) -> PatchMatrix {
    let (_, nx, ny, nz) = rho.data().dim();
    let columns = window
        .offsets
        .iter()
        .zip(&window.weights)
        .map(|(off, &w)| {
            let x = voxel[0].checked_add_signed(off[0]).filter(|&x| x < nx);
            let y = voxel[1].checked_add_signed(off[1]).filter(|&y| y < ny);
            let z = voxel[2].checked_add_signed(off[2]).filter(|&z| z < nz);
            match (x, y, z) {
                (Some(x), Some(y), Some(z)) => rho.vector(x, y, z).map(|c| c * w.sqrt()),
                _ => [0.0; 3],
            }
        })
        .collect();
    PatchMatrix { columns }
}

/// `sum_n ||(W rho)_n||_*` over every voxel of a raw `(3, nx, ny, nz)` array.
pub fn ss_value_data(data: &Array4<f64>, window: &Window) -> f64 {
    let norms: Vec<f64> = VectorField::from_array(data)
        .grams(window)
        .par_iter()
        .map(nuclear_from_gram)
        .collect();
    norms.iter().sum()
}

pub fn ss_value(rho: &DirectionalAlbedoVolume, window: &Window) -> f64 {
    ss_value_data(rho.data(), window)
}

/// Sum of voxel vector norms (the `L = 1` penalty).
pub fn local_ss_value_data(data: &Array4<f64>) -> f64 {
    VectorField::from_array(data)
        .v
        .iter()
        .map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())
        .sum()
}

pub fn l1_value_data(data: &Array4<f64>) -> f64 {
    data.iter().map(|x| x.abs()).sum()
}

fn prox_ss_field(field: &VectorField, theta: f64, window: &Window) -> VectorField {
    let shrink: Vec<[f64; 6]> = field
        .grams(window)
        .par_iter()
        .map(|g| {
            if g.iter().all(|&x| x == 0.0) {
                [0.0; 6]
            } else {
                pack(&shrink_matrix(&factorize_gram(&unpack(g)), theta))
            }
        })
        .collect();
    // Voxel m appears in the window centred at m - off with weight w(off).
    let acc = window.blur(field.dims, shrink);
    let coverage = window.coverage(field.dims);
    let v = acc
        .par_iter()
        .zip(&field.v)
        .zip(&coverage)
        .map(|((a, v), &total)| mat_vec(&unpack(a), v).map(|x| x / total))
        .collect();
    VectorField { dims: field.dims, v }
}

/// Approximate prox of `theta * ss_value` on a raw array.
pub fn prox_ss_data(data: &Array4<f64>, theta: f64, window: &Window) -> Array4<f64> {
    if theta == 0.0 {
        return data.clone();
    }
    prox_ss_field(&VectorField::from_array(data), theta, window).into_array()
}

pub fn prox_ss(rho: &DirectionalAlbedoVolume, theta: f64, window: &Window) -> Result<DirectionalAlbedoVolume> {
    check_theta(theta)?;
    DirectionalAlbedoVolume::new(*rho.grid(), prox_ss_data(rho.data(), theta, window))
}

/// Voxelwise group soft threshold `v * max(0, 1 - theta / |v|)`.
pub fn prox_local_ss_data(data: &Array4<f64>, theta: f64) -> Array4<f64> {
    let mut field = VectorField::from_array(data);
    field.v.par_iter_mut().for_each(|v| {
        let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let f = if norm > 0.0 { (norm - theta).max(0.0) / norm } else { 0.0 };
        *v = v.map(|x| x * f);
    });
    field.into_array()
}

pub fn prox_local_ss(rho: &DirectionalAlbedoVolume, theta: f64) -> Result<DirectionalAlbedoVolume> {
    check_theta(theta)?;
    DirectionalAlbedoVolume::new(*rho.grid(), prox_local_ss_data(rho.data(), theta))
}

pub fn prox_l1_data(data: &Array4<f64>, theta: f64) -> Array4<f64> {
    data.mapv(|x| x.signum() * (x.abs() - theta).max(0.0))
}

pub fn prox_l1(rho: &DirectionalAlbedoVolume, theta: f64) -> Result<DirectionalAlbedoVolume> {
    check_theta(theta)?;
    DirectionalAlbedoVolume::new(*rho.grid(), prox_l1_data(rho.data(), theta))
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {theta}")));
    }
    Ok(())
}
