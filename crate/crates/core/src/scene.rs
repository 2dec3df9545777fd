//! Parametric ground-truth scenes, transient rendering and the noise model.

use ndarray::{Array3, Array4, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::grid::ScanGrid;
use crate::lct::{brute_force_forward, ScenePoint};
use crate::volume::{DirectionalAlbedoVolume, TransientVolume};

/// An oriented surface element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Surfel {
    pub position: [f64; 3],
    /// Unit normal; surfaces seen from the wall have `normal[2] < 0`.
    pub normal: [f64; 3],
    pub albedo: f64,
}

impl Surfel {
    pub fn directional(&self) -> [f64; 3] {
        self.normal.map(|n| n * self.albedo)
    }
}

/// Normal pointing from the scene back toward the wall.
pub const TOWARD_WALL: [f64; 3] = [0.0, 0.0, -1.0];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SurfelScene {
    pub surfels: Vec<Surfel>,
}

/// Membership of the letter T in wall-relative coordinates, `u, v` in `[-1, 1]`
/// (fractions of the half wall). The bar runs along the first axis.
pub fn t_mask(u: f64, v: f64) -> bool {
    let bar = u.abs() <= 0.6 && (0.3..=0.6).contains(&v);
    let stem = u.abs() <= 0.15 && (-0.6..0.3).contains(&v);
    bar || stem
}

impl SurfelScene {
    pub fn new(surfels: Vec<Surfel>) -> Result<Self> {
        let scene = Self { surfels };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        for (i, s) in self.surfels.iter().enumerate() {
            let n2: f64 = s.normal.iter().map(|v| v * v).sum();
            if (n2.sqrt() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("surfel {i}: normal is not unit length")));
            }
            if !(s.albedo >= 0.0 && s.albedo.is_finite()) || s.position.iter().any(|p| !p.is_finite()) {
                return Err(Error::InvalidArgument(format!("surfel {i}: invalid albedo or position")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.surfels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfels.is_empty()
    }

    fn columns(grid: &ScanGrid) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = grid.scan_res;
        (0..n).flat_map(move |i| (0..n).map(move |j| (grid.lateral_coord(i), grid.lateral_coord(j))))
    }

    /// Letter T facing the wall at `depth`, one surfel per voxel column.
    pub fn t_plane(grid: &ScanGrid, depth: f64) -> Self {
        let h = 0.5 * grid.wall_width_m;
        let surfels = Self::columns(grid)
            .filter(|&(x, y)| t_mask(x / h, y / h))
            .map(|(x, y)| Surfel {
                position: [x, y, depth],
                normal: TOWARD_WALL,
                albedo: 1.0,
            })
            .collect();
        Self { surfels }
    }

    /// Square plane through `(0, 0, depth)` rotated by `angle` (radians) about
    /// the second axis, covering the central `extent` fraction of the wall.
    pub fn inclined_plane(grid: &ScanGrid, depth: f64, angle: f64, extent: f64) -> Self {
        let h = 0.5 * grid.wall_width_m * extent;
        let (s, c) = angle.sin_cos();
        let surfels = Self::columns(grid)
            .filter(|&(x, y)| x.abs() <= h && y.abs() <= h)
            .map(|(x, y)| Surfel {
                position: [x, y, depth + x * angle.tan()],
                normal: [s, 0.0, -c],
                albedo: 1.0,
            })
            .collect();
        Self { surfels }
    }

    /// Near cap of a sphere of `radius` whose front point sits at `(0, 0, depth)`,
    /// limited to lateral distance `cap` from the axis.
    pub fn sphere_cap(grid: &ScanGrid, depth: f64, radius: f64, cap: f64) -> Self {
        let cz = depth + radius;
        let surfels = Self::columns(grid)
            .filter(|&(x, y)| x * x + y * y <= cap * cap && x * x + y * y < radius * radius)
            .map(|(x, y)| {
                let z = cz - (radius * radius - x * x - y * y).sqrt();
                Surfel {
                    position: [x, y, z],
                    normal: [x / radius, y / radius, (z - cz) / radius],
                    albedo: 1.0,
                }
            })
            .collect();
        Self { surfels }
    }

    /// One wall-facing surfel on the voxel column nearest the lateral centre.
    pub fn single_surfel(grid: &ScanGrid, depth: f64) -> Self {
        let c = grid.lateral_coord(grid.scan_res / 2);
        Self {
            surfels: vec![Surfel {
                position: [c, c, depth],
                normal: TOWARD_WALL,
                albedo: 1.0,
            }],
        }
    }

    /// `count x count` wall-facing dots spread over the central half of the wall.
    pub fn dot_grid(grid: &ScanGrid, depth: f64, count: usize) -> Self {
        let n = grid.scan_res;
        let mut surfels = Vec::new();
        for a in 0..count {
            for b in 0..count {
                let pick = |k: usize| {
                    let f = (k as f64 + 0.5) / count as f64;
                    let i = ((0.25 + 0.5 * f) * n as f64).floor() as usize;
                    grid.lateral_coord(i.min(n - 1))
                };
                surfels.push(Surfel {
                    position: [pick(a), pick(b), depth],
                    normal: TOWARD_WALL,
                    albedo: 1.0,
                });
            }
        }
        Self { surfels }
    }

    pub fn scale_albedo(&self, factor: f64) -> Self {
        Self {
            surfels: self
                .surfels
                .iter()
                .map(|s| Surfel {
                    albedo: s.albedo * factor,
                    ..*s
                })
                .collect(),
        }
    }

    /// `x,y,z,nx,ny,nz,albedo` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,z,nx,ny,nz,albedo\n");
        for s in &self.surfels {
            let [x, y, z] = s.position;
            let [a, b, c] = s.normal;
            out.push_str(&format!("{x},{y},{z},{a},{b},{c},{}\n", s.albedo));
        }
        out
    }

    pub fn points(&self) -> Vec<ScenePoint> {
        self.surfels
            .iter()
            .map(|s| ScenePoint {
                position: s.position,
                directional: s.directional(),
            })
            .collect()
    }
}

/// Nearest voxel of a position, or `None` outside the reconstruction volume.
pub fn nearest_voxel(grid: &ScanGrid, p: [f64; 3]) -> Option<[usize; 3]> {
    let n = grid.scan_res as f64;
    let ix = grid.lateral_index(p[0]).round();
    let iy = grid.lateral_index(p[1]).round();
    let iz = (p[2] / grid.depth_pitch()).round();
    let inside = |v: f64, len: f64| v >= 0.0 && v < len;
    (inside(ix, n) && inside(iy, n) && inside(iz, grid.depth_res as f64))
        .then_some([ix as usize, iy as usize, iz as usize])
}

/// Deposits `albedo * normal` of every surfel into its nearest voxel.
pub fn rasterize_scene(scene: &SurfelScene, grid: &ScanGrid) -> Result<DirectionalAlbedoVolume> {
    let mut data = Array4::<f64>::zeros(grid.albedo_shape());
    for (index, s) in scene.surfels.iter().enumerate() {
        let [x, y, z] = s.position;
        let [i, j, k] = nearest_voxel(grid, s.position).ok_or(Error::OutsideFrustum { index, x, y, z })?;
        for (c, v) in s.directional().iter().enumerate() {
            data[[c, i, j, k]] += v;
        }
    }
    DirectionalAlbedoVolume::new(*grid, data)
}

/// Single-bounce confocal transient of a surfel scene.
pub fn render_transients(scene: &SurfelScene, grid: &ScanGrid, clamp_cosine: bool) -> Result<TransientVolume> {
    scene.validate()?;
    Ok(brute_force_forward(&scene.points(), grid, clamp_cosine))
}

/// Peak-scaled Poisson counts plus additive Gaussian read noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Expected counts at the brightest bin.
    pub peak_photons: f64,
    /// Read-noise standard deviation in counts.
    pub gaussian_sigma: f64,
    pub seed: u64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            peak_photons: 100.0,
            gaussian_sigma: 1.0,
            seed: 0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_photons > 0.0 && self.peak_photons.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "peak_photons must be positive, got {}",
                self.peak_photons
            )));
        }
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gaussian_sigma must be >= 0, got {}",
                self.gaussian_sigma
            )));
        }
        Ok(())
    }
}

/// Draws one noisy bin. Each bin owns ChaCha8 stream `index` under the seed,
/// so the result does not depend on evaluation order.
fn noisy_count(seed: u64, index: usize, mean: f64, sigma: f64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let counts = if mean > 0.0 {
        Poisson::new(mean).expect("finite positive mean").sample(&mut rng)
    } else {
        0.0
    };
    let read = if sigma > 0.0 {
        Normal::new(0.0, sigma).expect("finite sigma").sample(&mut rng)
    } else {
        0.0
    };
    counts + read
}

/// `(Poisson(s tau) + N(0, sigma^2)) / s` with `s = peak_photons / max(tau)`.
pub fn apply_noise(clean: &TransientVolume, spec: &NoiseSpec) -> Result<TransientVolume> {
    spec.validate()?;
    let data = clean.data();
    if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeBin { index, value });
    }
    let peak = data.iter().fold(0.0f64, |m, &v| m.max(v));
    let scale = if peak > 0.0 { spec.peak_photons / peak } else { 1.0 };
    let (_, ny, nt) = data.dim();
    let mut out = Array3::<f64>::zeros(data.dim());
    Zip::indexed(&mut out).and(data).par_for_each(|(i, j, k), o, &v| {
        let index = (i * ny + j) * nt + k;
        *o = noisy_count(spec.seed, index, scale * v, spec.gaussian_sigma) / scale;
    });
    TransientVolume::new(*clean.grid(), out)
}
