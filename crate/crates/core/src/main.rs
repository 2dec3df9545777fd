use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{ArgMatches, Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use nlos::images;
use nlos::io::{read_volume, write_volume, Volume, VolumeMeta};
use nlos::lct::DlctOperator;
use nlos::metrics::{depth_rmse, extract_maps, normal_angle_error, psnr, ssim, MetricRow, METRIC_CSV_HEADER};
use nlos::scene::{apply_noise, rasterize_scene, render_transients, NoiseSpec, SurfelScene};
use nlos::selftest;
use nlos::solvers::{dlct_lambda_max, dlct_lipschitz, reconstruct, Fidelity, Method, SolverConfig};
use nlos::ss::WindowSpec;
use nlos::volume::downsample_transient;
use nlos::{DirectionalAlbedoVolume, Error, ScanGrid, TransientVolume};

const CONFIG_FILE: &str = "run.cfg";

/// Confocal NLOS reconstruction toolkit.
#[derive(Parser, Debug)]
#[command(name = "nlos", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene into a transient measurement.
    Simulate(SimulateArgs),
    /// Reconstruct a directional albedo volume from a measurement.
    Reconstruct(ReconstructArgs),
    /// Write albedo, depth and normal images of a reconstruction.
    Render(RenderArgs),
    /// Compare reconstructions against a ground-truth volume.
    Evaluate(EvaluateArgs),
    /// Run the built-in oracle checks.
    Selftest(SelftestArgs),
    /// Reconstruct over a log-spaced lambda grid and evaluate each result.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// key=value file supplying defaults for any flag of this command
    #[arg(long)]
    config: Option<PathBuf>,
    /// t-plane, inclined-plane, sphere-cap, single-surfel or dot-grid
    #[arg(long, default_value = "t-plane")]
    scene: String,
    /// Scene depth in meters
    #[arg(long, default_value_t = 0.5)]
    depth: f64,
    /// Wall side length in meters
    #[arg(long, default_value_t = 0.6)]
    wall: f64,
    /// Scan points per side
    #[arg(long, default_value_t = 32)]
    res: usize,
    /// Number of time bins
    #[arg(long, default_value_t = 512)]
    bins: usize,
    /// Bin width as optical path length in meters
    #[arg(long, default_value_t = 0.0025)]
    bin_width: f64,
    /// Reconstruction depth voxels
    #[arg(long, default_value_t = 64)]
    depth_res: usize,
    /// Inclination in degrees (inclined-plane)
    #[arg(long, default_value_t = 30.0)]
    angle: f64,
    /// Fraction of the wall covered (inclined-plane)
    #[arg(long, default_value_t = 0.5)]
    extent: f64,
    /// Sphere radius in meters (sphere-cap)
    #[arg(long, default_value_t = 0.2)]
    radius: f64,
    /// Lateral cap radius in meters (sphere-cap)
    #[arg(long, default_value_t = 0.15)]
    cap: f64,
    /// Dots per side (dot-grid)
    #[arg(long, default_value_t = 3)]
    count: usize,
    /// Multiply every albedo by this factor
    #[arg(long, default_value_t = 1.0)]
    albedo: f64,
    /// Shade with max(0, cos) as a physical renderer would
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    clamp_cosine: bool,
    /// `none` or `poisson:eta=<peak counts>[,gauss:sigma=<read noise>]`
    #[arg(long, default_value = "none")]
    noise: String,
    /// Noise seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Block-average by `<spatial>x<temporal>` after rendering
    #[arg(long, default_value = "1x1")]
    downsample: String,
    /// Apply noise `before` or `after` downsampling
    #[arg(long, default_value = "after")]
    noise_order: String,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// key=value file supplying defaults for any flag of this command
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurement volume (NLV1 transient)
    #[arg(long, default_value = "out/meas.nlv")]
    input: PathBuf,
    /// ss, local-ss, l1 or wiener
    #[arg(long, default_value = "ss")]
    method: String,
    /// Regularization weight
    #[arg(long, default_value_t = 1e-2)]
    lambda: f64,
    /// Interpret --lambda as a fraction of the data-dependent lambda_max
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    relative_lambda: bool,
    /// Maximum FISTA iterations
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Relative iterate change at which FISTA stops
    #[arg(long, default_value_t = 1e-4)]
    rel_tol: f64,
    /// Window size L (an odd cube: 1, 27, 125, ...)
    #[arg(long, default_value_t = 27)]
    window: usize,
    /// Window Gaussian sigma in voxels
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Wiener signal-to-noise parameter
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Power iterations for the Lipschitz estimate
    #[arg(long, default_value_t = 30)]
    lipschitz_iters: usize,
    /// Reject objective increases and reset momentum
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    monotone_restart: bool,
    /// Clamp the depth component to face the wall
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    front_facing: bool,
    /// Start FISTA from the Wiener estimate
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    warm_start: bool,
    /// Data term: compensated or plain
    #[arg(long, default_value = "compensated")]
    fidelity: String,
    /// Store the wall-clock time in the volume metadata (breaks bit-exact reruns)
    #[arg(long, default_value_t = false, action = clap::ArgAction::Set)]
    record_runtime: bool,
    /// Output directory
    #[arg(long, default_value = "out/recon")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    /// key=value file supplying defaults for any flag of this command
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directional volume (NLV1)
    #[arg(long, default_value = "out/recon/recon.nlv")]
    input: PathBuf,
    /// Mask threshold on the normalized albedo
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Output directory
    #[arg(long, default_value = "out/render")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// key=value file supplying defaults for any flag of this command
    #[arg(long)]
    config: Option<PathBuf>,
    /// Reconstructions to score, comma-separated
    #[arg(long, default_value = "out/recon/recon.nlv", value_delimiter = ',')]
    recon: Vec<PathBuf>,
    /// Ground-truth directional volume
    #[arg(long, default_value = "out/truth.nlv")]
    truth: PathBuf,
    /// Scene label for the report
    #[arg(long, default_value = "scene")]
    scene: String,
    /// Mask threshold on the normalized albedo
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Output directory
    #[arg(long, default_value = "out/eval")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SelftestArgs {}

#[derive(Args, Debug)]
struct SweepArgs {
    /// key=value file supplying defaults for any flag of this command
    #[arg(long)]
    config: Option<PathBuf>,
    /// Measurement volume (NLV1 transient)
    #[arg(long, default_value = "out/meas.nlv")]
    input: PathBuf,
    /// Ground-truth directional volume
    #[arg(long, default_value = "out/truth.nlv")]
    truth: PathBuf,
    /// ss, local-ss, l1 or wiener
    #[arg(long, default_value = "ss")]
    method: String,
    /// Smallest grid value (lambda, or alpha for wiener)
    #[arg(long, default_value_t = 1e-3)]
    min: f64,
    /// Largest grid value
    #[arg(long, default_value_t = 1e-1)]
    max: f64,
    /// Grid points, log-spaced
    #[arg(long, default_value_t = 5)]
    points: usize,
    /// Interpret lambda grid values as fractions of lambda_max
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    relative_lambda: bool,
    /// Maximum FISTA iterations
    #[arg(long, default_value_t = 100)]
    iters: usize,
    /// Window size L
    #[arg(long, default_value_t = 27)]
    window: usize,
    /// Window Gaussian sigma in voxels
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    /// Data term: compensated or plain
    #[arg(long, default_value = "compensated")]
    fidelity: String,
    /// Scene label for the report
    #[arg(long, default_value = "scene")]
    scene: String,
    /// Mask threshold on the normalized albedo
    #[arg(long, default_value_t = 0.1)]
    threshold: f64,
    /// Output directory
    #[arg(long, default_value = "out/sweep")]
    out: PathBuf,
}

type CliResult<T> = std::result::Result<T, String>;

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    match run(args) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(args: Vec<OsString>) -> CliResult<ExitCode> {
    let args = expand_config(args)?;
    let matches = match Cli::command().try_get_matches_from(&args) {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return Ok(ExitCode::from(code));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(|e| e.to_string())?;
    let sub = matches.subcommand().map(|(_, m)| m);
    match cli.command {
        Command::Simulate(a) => simulate(&a, sub.expect("subcommand")).map(|_| ExitCode::SUCCESS),
        Command::Reconstruct(a) => cmd_reconstruct(&a, sub.expect("subcommand")).map(|_| ExitCode::SUCCESS),
        Command::Render(a) => render(&a, sub.expect("subcommand")).map(|_| ExitCode::SUCCESS),
        Command::Evaluate(a) => evaluate(&a, sub.expect("subcommand")).map(|_| ExitCode::SUCCESS),
        Command::Selftest(_) => Ok(run_selftest()),
        Command::Sweep(a) => sweep(&a, sub.expect("subcommand")).map(|_| ExitCode::SUCCESS),
    }
}

/// Inserts `--key=value` for every config-file entry not given on the command
/// line. Keys are the long flag names; unknown keys are rejected.
fn expand_config(args: Vec<OsString>) -> CliResult<Vec<OsString>> {
    let strs: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let Some(sub_pos) = strs.iter().skip(1).position(|a| !a.starts_with('-')).map(|p| p + 1) else {
        return Ok(args);
    };
    let mut config_path = None;
    for (i, a) in strs.iter().enumerate().skip(sub_pos + 1) {
        if a == "--config" {
            config_path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config_path = Some(p.to_string());
        }
    }
    let Some(path) = config_path else {
        return Ok(args);
    };
    let command = Cli::command();
    let Some(sub) = command.find_subcommand(&strs[sub_pos]) else {
        return Ok(args);
    };
    let known: Vec<String> = sub
        .get_arguments()
        .filter_map(|a| a.get_long().map(str::to_string))
        .filter(|l| l != "config" && l != "help")
        .collect();
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let meta = VolumeMeta::from_text(&text).map_err(|e| format!("{path}: {e}"))?;
    let mut out = args;
    for (key, value) in meta.iter() {
        if key == "command" {
            if value != strs[sub_pos] {
                return Err(format!("{path}: config is for `{value}`, not `{}`", strs[sub_pos]));
            }
            continue;
        }
        if !known.iter().any(|k| k == key) {
            return Err(format!("{path}: unknown config key `{key}`"));
        }
        let flag = format!("--{key}");
        let given = strs.iter().any(|a| a == &flag || a.starts_with(&format!("{flag}=")));
        if !given {
            out.push(OsString::from(format!("{flag}={value}")));
        }
    }
    Ok(out)
}

/// Every flag of the subcommand with its resolved value, one `key=value` per
/// line in flag order.
fn resolved_config(command: &str, matches: &ArgMatches) -> String {
    let cli = Cli::command();
    let sub = cli.find_subcommand(command).expect("known subcommand");
    let mut out = format!("command={command}\n");
    for arg in sub.get_arguments() {
        let Some(long) = arg.get_long() else { continue };
        if long == "config" || long == "help" {
            continue;
        }
        let id = arg.get_id().as_str();
        let values: Vec<String> = matches
            .get_raw(id)
            .map(|vs| vs.map(|v| v.to_string_lossy().into_owned()).collect())
            .unwrap_or_default();
        out.push_str(&format!("{long}={}\n", values.join(",")));
    }
    out
}

fn write_config(dir: &Path, command: &str, matches: &ArgMatches) -> CliResult<()> {
    write_file(&dir.join(CONFIG_FILE), resolved_config(command, matches).as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    fs::write(path, bytes).map_err(|e| format!("{}: {e}", path.display()))
}

fn make_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn lib(e: Error) -> String {
    e.to_string()
}

fn parse_noise(text: &str, seed: u64) -> CliResult<Option<NoiseSpec>> {
    if text == "none" {
        return Ok(None);
    }
    let mut eta = None;
    let mut sigma = 0.0;
    for part in text.split(',') {
        let (model, kv) = part
            .split_once(':')
            .ok_or_else(|| format!("noise: expected `model:key=value`, got `{part}`"))?;
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| format!("noise: expected `key=value` in `{part}`"))?;
        let value: f64 = value.parse().map_err(|_| format!("noise: bad number in `{part}`"))?;
        match (model, key) {
            ("poisson", "eta") => eta = Some(value),
            ("gauss", "sigma") => sigma = value,
            _ => return Err(format!("noise: unknown parameter `{model}:{key}`")),
        }
    }
    let eta = eta.ok_or("noise: `poisson:eta=` is required")?;
    let spec = NoiseSpec {
        peak_photons: eta,
        gaussian_sigma: sigma,
        seed,
    };
    spec.validate().map_err(lib)?;
    Ok(Some(spec))
}

fn parse_downsample(text: &str) -> CliResult<(usize, usize)> {
    let bad = || format!("downsample: expected `<spatial>x<temporal>`, got `{text}`");
    let (a, b) = text.split_once('x').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

fn build_scene(a: &SimulateArgs, grid: &ScanGrid) -> CliResult<SurfelScene> {
    let scene = match a.scene.as_str() {
        "t-plane" => SurfelScene::t_plane(grid, a.depth),
        "inclined-plane" => SurfelScene::inclined_plane(grid, a.depth, a.angle.to_radians(), a.extent),
        "sphere-cap" => SurfelScene::sphere_cap(grid, a.depth, a.radius, a.cap),
        "single-surfel" => SurfelScene::single_surfel(grid, a.depth),
        "dot-grid" => SurfelScene::dot_grid(grid, a.depth, a.count),
        other => {
            return Err(format!(
                "unknown scene `{other}` (t-plane, inclined-plane, sphere-cap, single-surfel, dot-grid)"
            ))
        }
    };
    Ok(scene.scale_albedo(a.albedo))
}

fn simulate(a: &SimulateArgs, matches: &ArgMatches) -> CliResult<()> {
    let fine = ScanGrid::new(a.wall, a.res, a.bin_width, a.bins, a.depth_res).map_err(lib)?;
    let noise = parse_noise(&a.noise, a.seed)?;
    let (spatial, temporal) = parse_downsample(&a.downsample)?;
    let before = match a.noise_order.as_str() {
        "before" => true,
        "after" => false,
        other => return Err(format!("noise-order: expected `before` or `after`, got `{other}`")),
    };
    let scene = build_scene(a, &fine)?;
    let mut meas = render_transients(&scene, &fine, a.clamp_cosine).map_err(lib)?;
    let noisy = |m: &TransientVolume| match &noise {
        Some(spec) => apply_noise(m, spec).map_err(lib),
        None => Ok(m.clone()),
    };
    if before {
        meas = noisy(&meas)?;
    }
    meas = downsample_transient(&meas, spatial, temporal).map_err(lib)?;
    if !before {
        meas = noisy(&meas)?;
    }
    let grid = *meas.grid();
    let truth = rasterize_scene(&build_scene(a, &grid)?, &grid).map_err(lib)?;

    make_dir(&a.out)?;
    let mut meta = VolumeMeta::new();
    meta.set_grid(&grid);
    meta.set("scene", &a.scene).set("noise", &a.noise).set("seed", a.seed);
    write_volume(&a.out.join("meas.nlv"), &Volume::from(meas), &meta).map_err(lib)?;
    write_volume(&a.out.join("truth.nlv"), &Volume::from(truth), &meta).map_err(lib)?;
    write_file(&a.out.join("scene.csv"), scene.to_csv().as_bytes())?;
    write_config(&a.out, "simulate", matches)
}

fn read_transient(path: &Path) -> CliResult<TransientVolume> {
    let (v, _) = read_volume(path).map_err(lib)?;
    v.into_transient().map_err(|e| format!("{}: {e}", path.display()))
}

fn read_directional(path: &Path) -> CliResult<(DirectionalAlbedoVolume, VolumeMeta)> {
    let (v, meta) = read_volume(path).map_err(lib)?;
    let rho = v.into_directional().map_err(|e| format!("{}: {e}", path.display()))?;
    Ok((rho, meta))
}

fn solver_config(
    method: &str,
    lambda: f64,
    iters: usize,
    window: usize,
    sigma: f64,
    fidelity: &str,
) -> CliResult<SolverConfig> {
    let method: Method = method.parse().map_err(lib)?;
    let config = SolverConfig {
        method,
        fidelity: fidelity.parse::<Fidelity>().map_err(lib)?,
        lambda,
        wiener_alpha: if method == Method::Wiener { lambda } else { 0.1 },
        max_iters: iters,
        window: WindowSpec::new(window, sigma).map_err(lib)?,
        ..SolverConfig::default()
    };
    Ok(config)
}

fn cmd_reconstruct(a: &ReconstructArgs, matches: &ArgMatches) -> CliResult<()> {
    let tau = read_transient(&a.input)?;
    let op = DlctOperator::new(tau.grid()).map_err(lib)?;
    let mut config = solver_config(&a.method, a.lambda, a.iters, a.window, a.sigma, &a.fidelity)?;
    config.wiener_alpha = a.alpha;
    config.rel_tol = a.rel_tol;
    config.lipschitz_iters = a.lipschitz_iters;
    config.monotone_restart = a.monotone_restart;
    config.front_facing = a.front_facing;
    config.warm_start = a.warm_start;
    if a.relative_lambda {
        config.lambda = a.lambda * dlct_lambda_max(&op, &tau, config.method, config.fidelity);
    }
    let clock = Instant::now();
    let (rho, report) = reconstruct(&op, &tau, &config).map_err(lib)?;
    let elapsed = clock.elapsed().as_secs_f64();

    make_dir(&a.out)?;
    let mut meta = VolumeMeta::new();
    meta.set_grid(rho.grid());
    meta.set("method", config.method)
        .set("lambda", format!("{:e}", config.lambda))
        .set("alpha", format!("{:e}", config.wiener_alpha))
        .set("iterations", report.iterations)
        .set("stop_reason", report.stop_reason);
    if a.record_runtime {
        meta.set("runtime_s", format!("{elapsed:.3}"));
    }
    write_volume(&a.out.join("recon.nlv"), &Volume::from(rho), &meta).map_err(lib)?;
    write_file(&a.out.join("report.csv"), report.to_csv().as_bytes())?;
    write_config(&a.out, "reconstruct", matches)?;
    println!(
        "{}: {} iterations ({}), {} restarts",
        config.method, report.iterations, report.stop_reason, report.restarts
    );
    Ok(())
}

fn render(a: &RenderArgs, matches: &ArgMatches) -> CliResult<()> {
    let (rho, _) = read_directional(&a.input)?;
    let maps = extract_maps(&rho, a.threshold);
    make_dir(&a.out)?;
    write_file(&a.out.join("albedo.pgm"), &images::albedo_image(&maps))?;
    write_file(&a.out.join("depth.pgm"), &images::depth_image(&maps, rho.grid().max_depth()))?;
    write_file(&a.out.join("normal.ppm"), &images::normal_image(&maps))?;
    write_config(&a.out, "render", matches)
}

fn score(
    scene: &str,
    method: &str,
    lambda: f64,
    rho: &DirectionalAlbedoVolume,
    truth: &DirectionalAlbedoVolume,
    threshold: f64,
    runtime_s: Option<f64>,
) -> CliResult<MetricRow> {
    if rho.grid() != truth.grid() {
        return Err(format!(
            "shape mismatch: reconstruction {:?} vs truth {:?}",
            rho.data().dim(),
            truth.data().dim()
        ));
    }
    let r = extract_maps(rho, threshold);
    let t = extract_maps(truth, threshold);
    Ok(MetricRow {
        scene: scene.to_string(),
        method: method.to_string(),
        lambda,
        psnr: psnr(&r.albedo, &t.albedo).map_err(lib)?,
        ssim: ssim(&r.albedo, &t.albedo).map_err(lib)?,
        normal_median_deg: normal_angle_error(&r, &t).ok().map(|s| s.median_deg),
        depth_rmse_m: depth_rmse(&r, &t).ok(),
        runtime_s,
    })
}

fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut out = format!("{METRIC_CSV_HEADER}\n");
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

fn evaluate(a: &EvaluateArgs, matches: &ArgMatches) -> CliResult<()> {
    let (truth, _) = read_directional(&a.truth)?;
    let mut rows = Vec::new();
    for path in &a.recon {
        let (rho, meta) = read_directional(path)?;
        let method = meta.get("method").unwrap_or("unknown").to_string();
        let key = if method == "wiener" { "alpha" } else { "lambda" };
        let lambda = meta.get(key).and_then(|v| v.parse().ok()).unwrap_or(f64::NAN);
        let runtime = meta.get("runtime_s").and_then(|v| v.parse().ok());
        rows.push(score(&a.scene, &method, lambda, &rho, &truth, a.threshold, runtime)?);
    }
    make_dir(&a.out)?;
    write_file(&a.out.join("report.csv"), metrics_csv(&rows).as_bytes())?;
    write_config(&a.out, "evaluate", matches)
}

fn run_selftest() -> ExitCode {
    let mut ok = true;
    for c in selftest::run_all() {
        let pass = c.passed();
        ok &= pass;
        println!(
            "{} {}: error {:.3e} (tolerance {:.0e})",
            if pass { "PASS" } else { "FAIL" },
            c.name,
            c.error,
            c.tolerance
        );
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn log_grid(min: f64, max: f64, points: usize) -> CliResult<Vec<f64>> {
    if !(min > 0.0 && max >= min && points >= 1) {
        return Err(format!("sweep: need 0 < min <= max and points >= 1, got {min}, {max}, {points}"));
    }
    if points == 1 {
        return Ok(vec![min]);
    }
    let (lo, hi) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|i| (lo + (hi - lo) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

fn sweep(a: &SweepArgs, matches: &ArgMatches) -> CliResult<()> {
    let tau = read_transient(&a.input)?;
    let (truth, _) = read_directional(&a.truth)?;
    let op = DlctOperator::new(tau.grid()).map_err(lib)?;
    let mut base = solver_config(&a.method, 0.0, a.iters, a.window, a.sigma, &a.fidelity)?;
    if base.method != Method::Wiener {
        // The step size depends only on the operator; share it across the grid.
        base.lipschitz = Some(dlct_lipschitz(&op, base.fidelity, base.lipschitz_iters));
    }
    let scale = if a.relative_lambda && base.method != Method::Wiener {
        dlct_lambda_max(&op, &tau, base.method, base.fidelity)
    } else {
        1.0
    };
    make_dir(&a.out)?;
    let mut rows = Vec::new();
    for (i, value) in log_grid(a.min, a.max, a.points)?.into_iter().enumerate() {
        let mut config = base.clone();
        if config.method == Method::Wiener {
            config.wiener_alpha = value;
        } else {
            config.lambda = value * scale;
        }
        let (rho, _) = reconstruct(&op, &tau, &config).map_err(lib)?;
        let reported = if config.method == Method::Wiener {
            config.wiener_alpha
        } else {
            config.lambda
        };
        let row = score(&a.scene, config.method.name(), reported, &rho, &truth, a.threshold, None)?;
        println!("{}", row.to_csv_line());
        rows.push(row);
        let mut meta = VolumeMeta::new();
        meta.set_grid(rho.grid());
        meta.set("method", config.method)
            .set("lambda", format!("{:e}", config.lambda))
            .set("alpha", format!("{:e}", config.wiener_alpha));
        write_volume(&a.out.join(format!("recon_{i}.nlv")), &Volume::from(rho), &meta).map_err(lib)?;
    }
    write_file(&a.out.join("report.csv"), metrics_csv(&rows).as_bytes())?;
    write_config(&a.out, "sweep", matches)
}
