//! FISTA with pluggable proxes and the closed-form Wiener baseline.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use ndarray::{Array3, Array4, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lct::DlctOperator;
use crate::ss::{
    l1_value_data, local_ss_value_data, prox_l1_data, prox_local_ss_data, prox_ss_data, ss_value_data,
    Window, WindowSpec,
};
use crate::volume::{DirectionalAlbedoVolume, TransientVolume};

/// Safety margin applied to the power-iteration estimate before taking `1/L`.
pub const LIPSCHITZ_SAFETY: f64 = 1.05;
const LIPSCHITZ_SEED: u64 = 0x5EED_1195;

/// A linear map from `(c, x, y, z)` arrays to `(x, y, t)` arrays.
pub trait LinearOperator: Sync {
    fn domain_shape(&self) -> (usize, usize, usize, usize);
    fn apply(&self, x: &Array4<f64>) -> Array3<f64>;
    fn apply_adjoint(&self, y: &Array3<f64>) -> Array4<f64>;
}

impl LinearOperator for DlctOperator {
    fn domain_shape(&self) -> (usize, usize, usize, usize) {
        self.grid().albedo_shape()
    }

    fn apply(&self, x: &Array4<f64>) -> Array3<f64> {
        DlctOperator::apply(self, x)
    }

    fn apply_adjoint(&self, y: &Array3<f64>) -> Array4<f64> {
        DlctOperator::apply_adjoint(self, y)
    }
}

/// `diag(w) H` for a light-cone operator `H`.
pub struct WeightedDlct<'a> {
    op: &'a DlctOperator,
    weights: Vec<f64>,
}

impl<'a> WeightedDlct<'a> {
    pub fn new(op: &'a DlctOperator, fidelity: Fidelity) -> Self {
        let weights = match fidelity {
            Fidelity::Plain => vec![1.0; op.grid().num_bins],
            Fidelity::Compensated => op.resampler().bin_weights(),
        };
        Self { op, weights }
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Applies the bin weights to a measurement-shaped array.
    pub fn weigh(&self, tau: &Array3<f64>) -> Array3<f64> {
        let mut out = tau.clone();
        for mut lane in out.lanes_mut(Axis(2)) {
            lane.iter_mut().zip(&self.weights).for_each(|(v, w)| *v *= w);
        }
        out
    }
}

impl LinearOperator for WeightedDlct<'_> {
    fn domain_shape(&self) -> (usize, usize, usize, usize) {
        self.op.grid().albedo_shape()
    }

    fn apply(&self, x: &Array4<f64>) -> Array3<f64> {
        self.weigh(&self.op.apply(x))
    }

    fn apply_adjoint(&self, y: &Array3<f64>) -> Array4<f64> {
        self.op.apply_adjoint(&self.weigh(y))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Ss,
    LocalSs,
    L1,
    Wiener,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ss, Method::LocalSs, Method::L1, Method::Wiener];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ss => "ss",
            Method::LocalSs => "local-ss",
            Method::L1 => "l1",
            Method::Wiener => "wiener",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method {s:?} (ss, local-ss, l1, wiener)")))
    }
}

/// Data term used by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fidelity {
    /// `0.5 |H rho - tau|^2`.
    Plain,
    /// `0.5 |w (H rho - tau)|^2` with the per-bin weights of
    /// [`crate::lct::Resampler::bin_weights`], which undo the attenuation.
    Compensated,
}

impl Fidelity {
    pub const ALL: [Fidelity; 2] = [Fidelity::Plain, Fidelity::Compensated];

    pub fn name(self) -> &'static str {
        match self {
            Fidelity::Plain => "plain",
            Fidelity::Compensated => "compensated",
        }
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Fidelity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Fidelity::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown fidelity {s:?} (plain, compensated)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub fidelity: Fidelity,
    pub lambda: f64,
    pub max_iters: usize,
    /// Stop when `|x_k - x_{k-1}| / |x_k|` drops below this.
    pub rel_tol: f64,
    pub window: WindowSpec,
    pub wiener_alpha: f64,
    pub lipschitz_iters: usize,
    /// Known `|H|^2`; skips the power iteration when set.
    pub lipschitz: Option<f64>,
    pub monotone_restart: bool,
    /// Keep only components facing the wall (`rho_z <= 0`).
    pub front_facing: bool,
    /// Start FISTA from the Wiener estimate instead of zero.
    pub warm_start: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Ss,
            fidelity: Fidelity::Compensated,
            lambda: 1e-2,
            max_iters: 100,
            rel_tol: 1e-4,
            window: WindowSpec::default(),
            wiener_alpha: 0.1,
            lipschitz_iters: 30,
            lipschitz: None,
            monotone_restart: true,
            front_facing: false,
            warm_start: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("max_iters must be at least 1".into()));
        }
        if self.lipschitz_iters == 0 {
            return Err(Error::InvalidArgument("lipschitz_iters must be at least 1".into()));
        }
        if !(self.wiener_alpha > 0.0 && self.wiener_alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "wiener_alpha must be positive, got {}",
                self.wiener_alpha
            )));
        }
        if let Some(l) = self.lipschitz {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::InvalidArgument(format!("lipschitz must be >= 0, got {l}")));
            }
        }
        WindowSpec::new(self.window.len, self.window.sigma)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Objective {
    pub fidelity: f64,
    pub penalty: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    Converged,
    /// A restarted, momentum-free step still raised the objective.
    Stalled,
    ClosedForm,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxIters => "max-iters",
            StopReason::Converged => "converged",
            StopReason::Stalled => "stalled",
            StopReason::ClosedForm => "closed-form",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// One entry per accepted iterate, starting at iteration 1.
    pub history: Vec<Objective>,
    pub iterations: usize,
    pub restarts: usize,
    pub stop_reason: StopReason,
    pub lipschitz: f64,
    pub elapsed: Duration,
}

impl SolveReport {
    pub fn final_objective(&self) -> Option<Objective> {
        self.history.last().copied()
    }

    /// `iteration,fidelity,penalty,total` with one row per history entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,fidelity,penalty,total\n");
        for (i, o) in self.history.iter().enumerate() {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", i + 1, o.fidelity, o.penalty, o.total));
        }
        out
    }
}

fn dot4(a: &Array4<f64>, b: &Array4<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm4(a: &Array4<f64>) -> f64 {
    dot4(a, a).sqrt()
}

/// Largest eigenvalue of `H^T H` by power iteration from a fixed random start.
/// Returns the last Rayleigh quotient; no safety margin is applied.
pub fn estimate_lipschitz(op: &dyn LinearOperator, iters: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(LIPSCHITZ_SEED);
    let mut x = Array4::from_shape_simple_fn(op.domain_shape(), || rng.gen_range(-1.0..1.0));
    let n = norm4(&x);
    x.mapv_inplace(|v| v / n);
    let mut estimate = 0.0;
    for _ in 0..iters.max(1) {
        let y = op.apply_adjoint(&op.apply(&x));
        estimate = dot4(&x, &y);
        let ny = norm4(&y);
        if ny == 0.0 {
            return 0.0;
        }
        x = y / ny;
    }
    estimate
}

fn penalty_value(method: Method, window: &Window, x: &Array4<f64>) -> f64 {
    match method {
        Method::Ss => ss_value_data(x, window),
        Method::LocalSs => local_ss_value_data(x),
        Method::L1 => l1_value_data(x),
        Method::Wiener => 0.0,
    }
}

fn prox(method: Method, window: &Window, x: &Array4<f64>, theta: f64) -> Array4<f64> {
    match method {
        Method::Ss => prox_ss_data(x, theta, window),
        Method::LocalSs => prox_local_ss_data(x, theta),
        Method::L1 => prox_l1_data(x, theta),
        Method::Wiener => x.clone(),
    }
}

fn fidelity_of(hx: &Array3<f64>, tau: &Array3<f64>) -> f64 {
    0.5 * hx.iter().zip(tau).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
}

fn objective_parts(
    method: Method,
    lambda: f64,
    window: &Window,
    x: &Array4<f64>,
    hx: &Array3<f64>,
    tau: &Array3<f64>,
) -> Objective {
    let fidelity = fidelity_of(hx, tau);
    let penalty = if lambda == 0.0 {
        0.0
    } else {
        lambda * penalty_value(method, window, x)
    };
    Objective {
        fidelity,
        penalty,
        total: fidelity + penalty,
    }
}

/// `0.5 |w (H rho - tau)|^2 + lambda * R(rho)` for the configured method and
/// fidelity.
pub fn objective(
    op: &DlctOperator,
    rho: &DirectionalAlbedoVolume,
    tau: &TransientVolume,
    config: &SolverConfig,
) -> Result<Objective> {
    check_grids(op, rho.grid(), tau.grid())?;
    let window = Window::new(config.window)?;
    let weighted = WeightedDlct::new(op, config.fidelity);
    Ok(objective_parts(
        config.method,
        config.lambda,
        &window,
        rho.data(),
        &weighted.apply(rho.data()),
        &weighted.weigh(tau.data()),
    ))
}

/// Gradient of the fidelity term, `(wH)^T (w H rho - w tau)`.
pub fn fidelity_gradient(
    op: &DlctOperator,
    rho: &DirectionalAlbedoVolume,
    tau: &TransientVolume,
    fidelity: Fidelity,
) -> Result<Array4<f64>> {
    check_grids(op, rho.grid(), tau.grid())?;
    let weighted = WeightedDlct::new(op, fidelity);
    let mut residual = weighted.apply(rho.data());
    Zip::from(&mut residual)
        .and(&weighted.weigh(tau.data()))
        .for_each(|r, &b| *r -= b);
    Ok(weighted.apply_adjoint(&residual))
}

/// [`estimate_lipschitz`] for the light-cone operator under a given fidelity.
pub fn dlct_lipschitz(op: &DlctOperator, fidelity: Fidelity, iters: usize) -> f64 {
    estimate_lipschitz(&WeightedDlct::new(op, fidelity), iters)
}

fn check_grids(op: &DlctOperator, a: &crate::ScanGrid, b: &crate::ScanGrid) -> Result<()> {
    if a != op.grid() || b != op.grid() {
        return Err(Error::DimensionMismatch(
            "volume grid does not match operator grid".into(),
        ));
    }
    Ok(())
}

fn clamp_front_facing(x: &mut Array4<f64>) {
    x.index_axis_mut(Axis(0), 2).mapv_inplace(|v| v.min(0.0));
}

/// FISTA on a generic operator.
///
/// With `monotone_restart`, an iterate that raises the objective is rejected,
/// the momentum is reset and the step is retried from the last accepted point.
/// If that plain proximal step also raises the objective the solve stops.
pub fn fista(
    op: &dyn LinearOperator,
    tau: &Array3<f64>,
    config: &SolverConfig,
    start: Option<Array4<f64>>,
) -> Result<(Array4<f64>, SolveReport)> {
    config.validate()?;
    if config.method == Method::Wiener {
        return Err(Error::InvalidArgument("FISTA needs a regularized method, not wiener".into()));
    }
    let clock = Instant::now();
    let window = Window::new(config.window)?;
    let lipschitz = LIPSCHITZ_SAFETY
        * config
            .lipschitz
            .unwrap_or_else(|| estimate_lipschitz(op, config.lipschitz_iters));
    let shape = op.domain_shape();
    let mut report = SolveReport {
        history: Vec::new(),
        iterations: 0,
        restarts: 0,
        stop_reason: StopReason::MaxIters,
        lipschitz,
        elapsed: Duration::ZERO,
    };
    if lipschitz == 0.0 {
        report.elapsed = clock.elapsed();
        return Ok((Array4::zeros(shape), report));
    }
    let step = 1.0 / lipschitz;
    let theta = config.lambda * step;

    let mut x_prev = start.unwrap_or_else(|| Array4::zeros(shape));
    let mut hx_prev = op.apply(&x_prev);
    let mut obj_prev = objective_parts(config.method, config.lambda, &window, &x_prev, &hx_prev, tau).total;
    let mut y = x_prev.clone();
    let mut hy = hx_prev.clone();
    let mut t = 1.0f64;
    let mut plain_step = true;

    for k in 1..=config.max_iters {
        report.iterations = k;
        let mut residual = hy.clone();
        Zip::from(&mut residual).and(tau).for_each(|r, &b| *r -= b);
        let grad = op.apply_adjoint(&residual);
        let mut z = y.clone();
        Zip::from(&mut z).and(&grad).for_each(|a, &g| *a -= step * g);
        let mut x = prox(config.method, &window, &z, theta);
        if config.front_facing {
            clamp_front_facing(&mut x);
        }
        let hx = op.apply(&x);
        let obj = objective_parts(config.method, config.lambda, &window, &x, &hx, tau);
        if !obj.total.is_finite() {
            return Err(Error::Diverged { iteration: k });
        }
        if config.monotone_restart && obj.total > obj_prev {
            if plain_step {
                report.stop_reason = StopReason::Stalled;
                break;
            }
            report.restarts += 1;
            t = 1.0;
            y = x_prev.clone();
            hy = hx_prev.clone();
            plain_step = true;
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_next;
        let mut diff = x.clone();
        Zip::from(&mut diff).and(&x_prev).for_each(|d, &p| *d -= p);
        let change = norm4(&diff);
        let size = norm4(&x);
        // H is linear, so H y follows from the two stored products.
        y = x.clone();
        Zip::from(&mut y).and(&diff).for_each(|a, &d| *a += beta * d);
        hy = hx.clone();
        Zip::from(&mut hy).and(&hx).and(&hx_prev).for_each(|a, &n, &p| *a += beta * (n - p));
        plain_step = beta == 0.0;
        x_prev = x;
        hx_prev = hx;
        obj_prev = obj.total;
        t = t_next;
        report.history.push(obj);
        if size > 0.0 && change / size < config.rel_tol || size == 0.0 && change == 0.0 {
            report.stop_reason = StopReason::Converged;
            break;
        }
    }
    report.elapsed = clock.elapsed();
    Ok((x_prev, report))
}

/// FISTA reconstruction with the light-cone operator under the configured
/// fidelity.
pub fn fista_reconstruct(
    op: &DlctOperator,
    tau: &TransientVolume,
    config: &SolverConfig,
) -> Result<(DirectionalAlbedoVolume, SolveReport)> {
    if tau.grid() != op.grid() {
        return Err(Error::DimensionMismatch("measurement grid does not match operator grid".into()));
    }
    let start = if config.warm_start {
        Some(wiener_dlct_reconstruct(op, tau, config.wiener_alpha)?.into_data())
    } else {
        None
    };
    let weighted = WeightedDlct::new(op, config.fidelity);
    let (x, report) = fista(&weighted, &weighted.weigh(tau.data()), config, start)?;
    Ok((DirectionalAlbedoVolume::new(*op.grid(), x)?, report))
}

/// Closed-form Wiener deconvolution in the light-cone domain.
pub fn wiener_dlct_reconstruct(
    op: &DlctOperator,
    tau: &TransientVolume,
    alpha: f64,
) -> Result<DirectionalAlbedoVolume> {
    if tau.grid() != op.grid() {
        return Err(Error::DimensionMismatch("measurement grid does not match operator grid".into()));
    }
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!("wiener alpha must be positive, got {alpha}")));
    }
    let transformed = op.resampler().transform_measurement(tau.data());
    let fields = op.wiener_deconvolve(&transformed, alpha);
    DirectionalAlbedoVolume::new(*op.grid(), op.resampler().unsplat_depth(&fields))
}

/// Runs the configured method; Wiener reports zero iterations.
pub fn reconstruct(
    op: &DlctOperator,
    tau: &TransientVolume,
    config: &SolverConfig,
) -> Result<(DirectionalAlbedoVolume, SolveReport)> {
    config.validate()?;
    if config.method == Method::Wiener {
        let clock = Instant::now();
        let rho = wiener_dlct_reconstruct(op, tau, config.wiener_alpha)?;
        let report = SolveReport {
            history: Vec::new(),
            iterations: 0,
            restarts: 0,
            stop_reason: StopReason::ClosedForm,
            lipschitz: 0.0,
            elapsed: clock.elapsed(),
        };
        return Ok((rho, report));
    }
    fista_reconstruct(op, tau, config)
}

/// Smallest `lambda` for which zero is a fixed point of the first step:
/// the dual norm of `H^T tau` for the method's penalty. For the windowed
/// penalty this uses the local bound, which is an upper estimate.
pub fn lambda_max(op: &dyn LinearOperator, tau: &Array3<f64>, method: Method) -> f64 {
    let g = op.apply_adjoint(tau);
    match method {
        Method::L1 => g.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        Method::Ss | Method::LocalSs => {
            let (_, nx, ny, nz) = g.dim();
            let mut best = 0.0f64;
            for x in 0..nx {
                for y in 0..ny {
                    for z in 0..nz {
                        let n2 = g[[0, x, y, z]].powi(2) + g[[1, x, y, z]].powi(2) + g[[2, x, y, z]].powi(2);
                        best = best.max(n2.sqrt());
                    }
                }
            }
            best
        }
        Method::Wiener => 0.0,
    }
}

/// [`lambda_max`] for the light-cone operator under a given fidelity.
pub fn dlct_lambda_max(op: &DlctOperator, tau: &TransientVolume, method: Method, fidelity: Fidelity) -> f64 {
    let weighted = WeightedDlct::new(op, fidelity);
    lambda_max(&weighted, &weighted.weigh(tau.data()), method)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("tv".parse::<Method>().is_err());
    }

    #[test]
    fn momentum_sequence() {
        let t2 = 0.5 * (1.0 + (1.0f64 + 4.0).sqrt());
        assert!((t2 - 1.618034).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig {
            lambda: -1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            max_iters: 0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = SolverConfig {
            wiener_alpha: 0.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn csv_layout() {
        let r = SolveReport {
            history: vec![Objective {
                fidelity: 1.5,
                penalty: 0.25,
                total: 1.75,
            }],
            iterations: 1,
            restarts: 0,
            stop_reason: StopReason::MaxIters,
            lipschitz: 1.0,
            elapsed: Duration::ZERO,
        };
        assert_eq!(r.to_csv(), "iteration,fidelity,penalty,total\n1,1.5e0,2.5e-1,1.75e0\n");
    }
}
