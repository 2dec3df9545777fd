//! Built-in oracle checks, run by `nlos selftest`.

use nalgebra::DMatrix;
use ndarray::{Array3, Array4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::grid::ScanGrid;
use crate::lct::{discrete_conv_oracle, DlctOperator};
use crate::ss::{prox_local_ss_data, prox_ss_data, svt_patch, PatchMatrix, Window, WindowSpec};
use crate::volume::DirectionalAlbedoVolume;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    /// Worst measured error over the check's trials.
    pub error: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

const SEED: u64 = 0x5E1F_7E57;

fn random4(rng: &mut ChaCha8Rng, shape: (usize, usize, usize, usize)) -> Array4<f64> {
    Array4::from_shape_simple_fn(shape, || rng.gen_range(-1.0..1.0))
}

fn random3(rng: &mut ChaCha8Rng, shape: (usize, usize, usize)) -> Array3<f64> {
    Array3::from_shape_simple_fn(shape, || rng.gen_range(-1.0..1.0))
}

fn small_grid() -> ScanGrid {
    ScanGrid::new(0.4, 8, 0.025, 16, 16).expect("valid built-in grid")
}

pub fn adjoint_check(trials: usize) -> Check {
    let g = small_grid();
    let op = DlctOperator::new(&g).expect("valid operator");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let rho = random4(&mut rng, g.albedo_shape());
        let tau = random3(&mut rng, g.transient_shape());
        let lhs: f64 = op.apply(&rho).iter().zip(&tau).map(|(a, b)| a * b).sum();
        let rhs: f64 = rho.iter().zip(&op.apply_adjoint(&tau)).map(|(a, b)| a * b).sum();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE));
    }
    Check {
        name: "adjoint dot-product identity",
        error: worst,
        tolerance: 1e-6,
    }
}

pub fn convolution_check(trials: usize) -> Check {
    let g = small_grid();
    let op = DlctOperator::new(&g).expect("valid operator");
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 1);
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let rho = DirectionalAlbedoVolume::new(g, random4(&mut rng, g.albedo_shape())).expect("shape");
        let fast = op.apply(rho.data());
        let slow = discrete_conv_oracle(&rho, op.kernels(), op.resampler()).expect("within cap");
        let num: f64 = fast.iter().zip(slow.data()).map(|(a, b)| (a - b) * (a - b)).sum();
        let den: f64 = slow.data().iter().map(|b| b * b).sum();
        worst = worst.max((num / den).sqrt());
    }
    Check {
        name: "FFT path vs direct convolution",
        error: worst,
        tolerance: 1e-10,
    }
}

pub fn svt_check(trials: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 2);
    let mut worst = 0.0f64;
    let singular = |p: &PatchMatrix| {
        let m = DMatrix::from_fn(3, p.columns.len(), |r, c| p.columns[c][r]);
        let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        s
    };
    for _ in 0..trials {
        let p = PatchMatrix {
            columns: (0..27)
                .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                .collect(),
        };
        let sigma = singular(&p);
        let theta = rng.gen_range(0.0..1.2 * sigma[0]);
        let out = singular(&svt_patch(&p, theta));
        for (o, s) in out.iter().zip(&sigma) {
            worst = worst.max((o - (s - theta).max(0.0)).abs());
        }
    }
    Check {
        name: "SVT vs dense SVD",
        error: worst,
        tolerance: 1e-8,
    }
}

pub fn prox_identity_checks() -> [Check; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED ^ 3);
    let a = random4(&mut rng, (3, 6, 5, 7));
    let full = Window::new(WindowSpec::default()).expect("default window");
    let unit = Window::new(WindowSpec::new(1, WindowSpec::default().sigma).expect("unit window")).expect("unit window");
    let max_diff = |x: &Array4<f64>, y: &Array4<f64>| x.iter().zip(y).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    [
        Check {
            name: "windowed prox with zero threshold is identity",
            error: max_diff(&prox_ss_data(&a, 0.0, &full), &a),
            tolerance: 1e-12,
        },
        Check {
            name: "unit window equals local prox",
            error: max_diff(&prox_ss_data(&a, 0.3, &unit), &prox_local_ss_data(&a, 0.3)),
            tolerance: 1e-12,
        },
    ]
}

pub fn run_all() -> Vec<Check> {
    let mut checks = vec![adjoint_check(20), convolution_check(5), svt_check(200)];
    checks.extend(prox_identity_checks());
    checks
}
