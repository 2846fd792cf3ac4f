//! Command-line front end: input-model fitting, synthetic sampling, density
//! estimation, the simulation-study benchmark, L1 comparison of exported
//! densities, and a line-protocol simulator stub.

mod config;

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{sig6, RunConfig};
use updens_core::benchmark::{
    ingest_real_data, reference_density, report_to_csv, report_to_markdown, run_matrix,
    TestFunctionId,
};
use updens_core::estimators::{
    estimate_est1, run_est2, run_est3, run_est4, EstimatorConfig, EstimatorKind, GridProfile,
    LabeledSample,
};
use updens_core::input_model::{sample_gaussian, GaussianInputModel};
use updens_core::kde::{
    read_density_csv, write_density_csv, DensityGrid, TabulatedDensity,
    DEFAULT_SUBINTERVALS,
};
use updens_core::rng::RngStream;
use updens_core::simulator::SimulationModel;
use updens_core::surrogate::{LmConfig, TrainingDomain, TruncationLevel};

/// Errors sorted by exit code: usage and IO problems exit with 2, numerical
/// failures during a run exit with 1.
enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => m,
        }
    }
}

fn usage<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Usage(format!("{context}: {e}"))
}

fn runtime<E: std::fmt::Display>(context: &str) -> impl FnOnce(E) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{context}: {e}"))
}

#[derive(Parser)]
#[command(
    name = "updens",
    version,
    about = "Output-density estimation from small samples and simulation models"
)]
struct Cli {
    /// Cap the worker thread count.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a multivariate normal input model from a measurement CSV.
    FitInput {
        /// CSV with `name:e<exp>` header columns; last column is the output.
        #[arg(long)]
        data: PathBuf,
        /// Output path for the model JSON.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw synthetic inputs from a fitted model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one density estimator on a measurement CSV.
    Estimate(EstimateArgs),
    /// Reproduce the simulation study over functions, sigmas and estimators.
    Benchmark(BenchmarkArgs),
    /// L1 distance between two exported densities on an identical grid.
    L1 {
        #[arg(long)]
        density_a: PathBuf,
        #[arg(long)]
        density_b: PathBuf,
    },
    /// Export an analytic or reference density as CSV.
    ExportDensity(ExportArgs),
    /// Serve a builtin function over the line protocol (reads `x1,..,xd`
    /// lines from stdin, answers one decimal per line).
    SimStub {
        /// One of m1, m2, m3, m4, beam-proxy.
        #[arg(long)]
        function: String,
        /// Constant added to every response.
        #[arg(long, default_value_t = 0.0)]
        offset: f64,
    },
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Estimator number 1..4.
    #[arg(long)]
    estimator: u8,
    #[arg(long)]
    seed: u64,
    /// Output CSV for the estimated density.
    #[arg(long)]
    out_density: PathBuf,
    /// External simulator command line (program plus arguments).
    #[arg(long)]
    simulator: Option<String>,
    /// Builtin simulator name (m1..m4, beam-proxy).
    #[arg(long)]
    sim_builtin: Option<String>,
    /// Constant offset added to the simulator.
    #[arg(long, default_value_t = 0.0)]
    sim_offset: f64,
    #[arg(long, default_value_t = 200)]
    design_size: usize,
    #[arg(long, default_value_t = 200)]
    anchor_size: usize,
    #[arg(long, default_value_t = 10_000)]
    kde_size: usize,
    /// Architecture grid: desk or paper.
    #[arg(long, default_value = "desk")]
    grid: String,
    /// Bandwidth override for the final KDE.
    #[arg(long)]
    bandwidth: Option<f64>,
    #[arg(long, default_value_t = 80)]
    lm_iterations: usize,
    #[arg(long, default_value_t = 3)]
    lm_starts: usize,
    /// Truncate the base surrogate at this height.
    #[arg(long)]
    truncate: Option<f64>,
    /// Truncate the residual network at this height.
    #[arg(long)]
    truncate_residual: Option<f64>,
    /// Subintervals of the exported density grid.
    #[arg(long, default_value_t = DEFAULT_SUBINTERVALS)]
    subintervals: usize,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Comma-separated test functions (m1..m4).
    #[arg(long, value_delimiter = ',', default_value = "m1,m2,m3,m4")]
    functions: Vec<String>,
    /// Comma-separated imperfection levels.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.5")]
    sigmas: Vec<f64>,
    /// Comma-separated estimator numbers.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
    estimators: Vec<u8>,
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long)]
    seed: u64,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
    /// Optional Markdown table output.
    #[arg(long)]
    markdown: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 200)]
    design_size: usize,
    #[arg(long, default_value_t = 200)]
    anchor_size: usize,
    #[arg(long, default_value_t = 10_000)]
    kde_size: usize,
    #[arg(long, default_value_t = 100_000)]
    reference_size: usize,
    #[arg(long, default_value_t = 1_000_000)]
    lambda_star_size: usize,
    /// Architecture grid: desk or paper.
    #[arg(long, default_value = "desk")]
    grid: String,
    #[arg(long, default_value_t = 80)]
    lm_iterations: usize,
    #[arg(long, default_value_t = 3)]
    lm_starts: usize,
    /// Restore the published scale: 50 repetitions, 1e6 reference samples,
    /// the full architecture grid and the reference optimizer budget.
    #[arg(long, default_value_t = false)]
    paper_scale: bool,
    /// Reference-density cache directory.
    #[arg(long)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ExportArgs {
    /// Analytic normal density: `MU,SIGMA`.
    #[arg(long, conflicts_with = "reference")]
    normal: Option<String>,
    /// Reference density of a test function (m1..m4).
    #[arg(long)]
    reference: Option<String>,
    /// Grid `LOWER:UPPER:SUBINTERVALS` (required for --normal).
    #[arg(long)]
    grid: Option<String>,
    /// Reference sample size.
    #[arg(long, default_value_t = 100_000)]
    size: usize,
    /// Seed for the reference sample.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        // Ignore failure: the global pool can only be set once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads.max(1))
            .build_global();
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::FitInput { data, out } => cmd_fit_input(&data, &out),
        Command::Sample {
            model,
            count,
            seed,
            out,
        } => cmd_sample(&model, count, seed, &out),
        Command::Estimate(args) => cmd_estimate(args),
        Command::Benchmark(args) => cmd_benchmark(args),
        Command::L1 {
            density_a,
            density_b,
        } => cmd_l1(&density_a, &density_b),
        Command::ExportDensity(args) => cmd_export_density(args),
        Command::SimStub { function, offset } => cmd_sim_stub(&function, offset),
    }
}

fn builtin_simulator(name: &str) -> Result<SimulationModel, CliError> {
    match name {
        "m1" | "m2" | "m3" | "m4" => {
            let id = TestFunctionId::parse(name).expect("name checked");
            Ok(id.simulation_model())
        }
        "beam-proxy" => Ok(beam_proxy()),
        other => Err(CliError::Usage(format!(
            "unknown builtin simulator '{other}' (expected m1..m4 or beam-proxy)"
        ))),
    }
}

/// Smooth stand-in for the physical beam model, on the raw measurement
/// scales (two rotatory stiffnesses, two lateral stiffnesses, membrane
/// height). Output is calibrated to the measured amplitude range.
fn beam_proxy() -> SimulationModel {
    const CENTER: [f64; 5] = [124.96, 125.89, 3.3047e7, 3.2835e7, 6.78e-4];
    const SPREAD: [f64; 5] = [9.4, 8.9, 1.03e6, 1.26e6, 4.6e-6];
    SimulationModel::from_fn("beam-proxy", |x| {
        let z: Vec<f64> = x
            .iter()
            .zip(CENTER.iter().zip(SPREAD.iter()))
            .map(|(v, (c, s))| (v - c) / s)
            .collect();
        14.24 + 0.55 * z[0] - 0.30 * z[1] + 0.20 * z[2] + 0.15 * z[3] - 0.25 * z[4]
            + 0.10 * z[0] * z[1]
            + 0.05 * z[2] * z[2]
    })
}

fn read_labeled(path: &PathBuf) -> Result<LabeledSample, CliError> {
    let file = std::fs::File::open(path)
        .map_err(usage(&format!("cannot open {}", path.display())))?;
    let data = ingest_real_data(file).map_err(usage("parsing data CSV"))?;
    Ok(data.sample)
}

fn cmd_fit_input(data: &PathBuf, out: &PathBuf) -> Result<(), CliError> {
    let sample = read_labeled(data)?;
    if sample.len() == 1 {
        eprintln!("warning: single-row sample, covariance is identically zero");
    }
    let inputs = updens_core::input_model::InputSample::new(sample.inputs().to_vec())
        .map_err(runtime("building input sample"))?;
    let model = GaussianInputModel::fit(&inputs).map_err(runtime("fitting input model"))?;
    std::fs::write(out, model.to_json())
        .map_err(runtime(&format!("writing {}", out.display())))?;
    println!("input model: dim = {}", model.dim());
    let mean = model.mean();
    println!(
        "mean = [{}]",
        (0..model.dim())
            .map(|j| sig6(mean[j]))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("covariance diagonal = [{}]",
        (0..model.dim())
            .map(|j| sig6(model.covariance()[(j, j)]))
            .collect::<Vec<_>>()
            .join(", ")
    );
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_sample(model: &PathBuf, count: usize, seed: u64, out: &PathBuf) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Usage("--count must be at least 1".into()));
    }
    let text = std::fs::read_to_string(model)
        .map_err(usage(&format!("cannot open {}", model.display())))?;
    let model_path = model.display().to_string();
    let model = GaussianInputModel::from_json(&text).map_err(usage("parsing model JSON"))?;
    let mut rng = RngStream::new(seed).rng();
    let sample =
        sample_gaussian(&model, count, &mut rng).map_err(runtime("sampling input model"))?;
    let cfg = RunConfig::Sample {
        model: model_path,
        count,
        seed,
    };
    let mut text = String::new();
    for line in cfg.echo_lines() {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str(
        &(1..=model.dim())
            .map(|j| format!("x{j}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    text.push('\n');
    for row in sample.rows() {
        let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&fields.join(","));
        text.push('\n');
    }
    std::fs::write(out, text).map_err(runtime(&format!("writing {}", out.display())))?;
    println!("wrote {count} samples to {}", out.display());
    Ok(())
}

fn resolve_simulator(
    simulator: &Option<String>,
    sim_builtin: &Option<String>,
    sim_offset: f64,
) -> Result<Option<SimulationModel>, CliError> {
    let base = match (simulator, sim_builtin) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "--simulator and --sim-builtin are mutually exclusive".into(),
            ))
        }
        (Some(cmdline), None) => {
            let parts: Vec<String> = cmdline.split_whitespace().map(String::from).collect();
            if parts.is_empty() {
                return Err(CliError::Usage("empty --simulator command".into()));
            }
            Some(
                SimulationModel::external(&parts[0], &parts[1..])
                    .map_err(runtime("spawning simulator"))?,
            )
        }
        (None, Some(name)) => Some(builtin_simulator(name)?),
        (None, None) => None,
    };
    Ok(base.map(|m| m.with_offset(sim_offset)))
}

fn grid_profile(name: &str) -> Result<GridProfile, CliError> {
    match name {
        "desk" => Ok(GridProfile::Desk),
        "paper" => Ok(GridProfile::Paper),
        other => Err(CliError::Usage(format!(
            "unknown grid profile '{other}' (expected desk or paper)"
        ))),
    }
}

fn truncation(beta: Option<f64>) -> Result<TruncationLevel, CliError> {
    match beta {
        None => Ok(TruncationLevel::Disabled),
        Some(b) => TruncationLevel::bounded(b).map_err(usage("--truncate")),
    }
}

fn cmd_estimate(args: EstimateArgs) -> Result<(), CliError> {
    let kind = EstimatorKind::from_id(args.estimator).map_err(usage("--estimator"))?;
    let sample = read_labeled(&args.data)?;
    let sim = resolve_simulator(&args.simulator, &args.sim_builtin, args.sim_offset)?;
    if kind.needs_simulator() && sim.is_none() {
        return Err(CliError::Usage(format!(
            "simulator required: estimator {} evaluates the simulation model (pass --simulator or --sim-builtin)",
            args.estimator
        )));
    }

    let config = EstimatorConfig {
        design_size: args.design_size,
        anchor_size: args.anchor_size,
        kde_size: args.kde_size,
        grid: grid_profile(&args.grid)?,
        lm: LmConfig {
            max_iterations: args.lm_iterations,
            starts: args.lm_starts,
            ..Default::default()
        },
        bandwidth_override: args.bandwidth,
        base_truncation: truncation(args.truncate)?,
        residual_truncation: truncation(args.truncate_residual)?,
        ..Default::default()
    };
    config.validate().map_err(usage("configuration"))?;

    let inputs = updens_core::input_model::InputSample::new(sample.inputs().to_vec())
        .map_err(runtime("building input sample"))?;
    let input_model = GaussianInputModel::fit(&inputs).map_err(runtime("fitting input model"))?;
    let domain =
        TrainingDomain::from_input_model(&input_model).map_err(runtime("training domain"))?;
    let stream = RngStream::new(args.seed);

    let density = match kind {
        EstimatorKind::Est1 => {
            estimate_est1(&sample, config.bandwidth_override).map_err(runtime("est1"))?
        }
        EstimatorKind::Est2 => {
            let run = run_est2(sim.as_ref().unwrap(), &input_model, &domain, &config, stream)
                .map_err(runtime("est2"))?;
            let e = run.selection.chosen_entry();
            println!(
                "selected architecture: level {} M {} d* {} (test risk {})",
                e.arch.level,
                e.arch.hidden_units,
                e.arch.interaction_order,
                sig6(e.validation_risk)
            );
            run.density
        }
        EstimatorKind::Est3 => {
            let run =
                run_est3(&sample, &input_model, &config, stream).map_err(runtime("est3"))?;
            let e = run.selection.chosen_entry();
            println!(
                "selected architecture: level {} M {} d* {} (test risk {})",
                e.arch.level,
                e.arch.hidden_units,
                e.arch.interaction_order,
                sig6(e.validation_risk)
            );
            run.density
        }
        EstimatorKind::Est4 => {
            let run = run_est4(
                &sample,
                sim.as_ref().unwrap(),
                &input_model,
                &domain,
                &config,
                stream,
            )
            .map_err(runtime("est4"))?;
            let b = run.base_selection.chosen_entry();
            let r = run.residual_selection.chosen_entry();
            println!(
                "base architecture: level {} M {} d* {} (test risk {})",
                b.arch.level,
                b.arch.hidden_units,
                b.arch.interaction_order,
                sig6(b.validation_risk)
            );
            println!(
                "residual architecture: M {} d* {} w = {}",
                r.arch.hidden_units,
                r.arch.interaction_order,
                sig6(run.chosen_weight)
            );
            run.density
        }
    };

    let mut grid = density.default_grid();
    grid.points = args.subintervals.max(2);
    let tab = TabulatedDensity::from_model(&density, &grid);
    println!("density integral on grid: {}", sig6(tab.integral()));

    let cfg = RunConfig::Estimate {
        data: args.data.display().to_string(),
        estimator: args.estimator,
        simulator: args.simulator.clone(),
        sim_builtin: args.sim_builtin.clone(),
        sim_offset: args.sim_offset,
        seed: args.seed,
        design_size: args.design_size,
        anchor_size: args.anchor_size,
        kde_size: args.kde_size,
        grid: args.grid.clone(),
        bandwidth: args.bandwidth,
        lm_iterations: args.lm_iterations,
        lm_starts: args.lm_starts,
        truncate: args.truncate,
        truncate_residual: args.truncate_residual,
        subintervals: args.subintervals,
    };
    let file = std::fs::File::create(&args.out_density)
        .map_err(runtime(&format!("creating {}", args.out_density.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    write_density_csv(&mut writer, &tab, &cfg.echo_lines())
        .map_err(runtime("writing density CSV"))?;
    writer.flush().map_err(runtime("writing density CSV"))?;
    println!("wrote {}", args.out_density.display());
    Ok(())
}

fn cmd_benchmark(args: BenchmarkArgs) -> Result<(), CliError> {
    let mut functions = Vec::new();
    for f in &args.functions {
        functions.push(TestFunctionId::parse(f).map_err(usage("--functions"))?);
    }
    if args.sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(CliError::Usage(
            "every sigma must be a finite number >= 0".into(),
        ));
    }
    let mut kinds = Vec::new();
    for id in &args.estimators {
        kinds.push(EstimatorKind::from_id(*id).map_err(usage("--estimators"))?);
    }

    let (reps, reference_size, grid, lm) = if args.paper_scale {
        (
            50,
            1_000_000,
            GridProfile::Paper,
            LmConfig::default(),
        )
    } else {
        (
            args.reps,
            args.reference_size,
            grid_profile(&args.grid)?,
            LmConfig {
                max_iterations: args.lm_iterations,
                starts: args.lm_starts,
                ..Default::default()
            },
        )
    };

    let config = updens_core::benchmark::ExperimentConfig {
        n: args.n,
        repetitions: reps,
        reference_size,
        lambda_star_size: args.lambda_star_size,
        cache_dir: args.cache_dir.clone(),
        estimator: EstimatorConfig {
            design_size: args.design_size,
            anchor_size: args.anchor_size,
            kde_size: args.kde_size,
            grid,
            lm,
            ..Default::default()
        },
    };
    config.validate().map_err(usage("configuration"))?;

    let report = run_matrix(&functions, &args.sigmas, &kinds, &config, args.seed)
        .map_err(runtime("benchmark"))?;

    let cfg = RunConfig::Benchmark {
        functions: args.functions.clone(),
        sigmas: args.sigmas.clone(),
        estimators: args.estimators.clone(),
        repetitions: reps,
        seed: args.seed,
        n: args.n,
        design_size: args.design_size,
        anchor_size: args.anchor_size,
        kde_size: args.kde_size,
        reference_size,
        lambda_star_size: args.lambda_star_size,
        grid: if args.paper_scale {
            "paper".into()
        } else {
            args.grid.clone()
        },
        lm_iterations: config.estimator.lm.max_iterations,
        lm_starts: config.estimator.lm.starts,
        cache_dir: args.cache_dir.as_ref().map(|p| p.display().to_string()),
    };
    std::fs::write(&args.out, report_to_csv(&report, &cfg.echo_lines()))
        .map_err(runtime(&format!("writing {}", args.out.display())))?;
    println!("wrote {}", args.out.display());
    if let Some(md) = &args.markdown {
        std::fs::write(md, report_to_markdown(&report))
            .map_err(runtime(&format!("writing {}", md.display())))?;
        println!("wrote {}", md.display());
    }
    for c in &report.cells {
        println!(
            "{} sigma={} {}: median {} (iqr {})",
            c.function,
            c.sigma_m,
            c.estimator,
            sig6(c.median_l1),
            sig6(c.iqr_l1)
        );
    }
    Ok(())
}

fn cmd_l1(a: &PathBuf, b: &PathBuf) -> Result<(), CliError> {
    let read = |p: &PathBuf| -> Result<TabulatedDensity, CliError> {
        let file = std::fs::File::open(p)
            .map_err(usage(&format!("cannot open {}", p.display())))?;
        let (tab, _) = read_density_csv(std::io::BufReader::new(file))
            .map_err(usage(&format!("parsing {}", p.display())))?;
        Ok(tab)
    };
    let da = read(a)?;
    let db = read(b)?;
    if !da.same_grid(&db) {
        return Err(CliError::Usage(
            "density grids do not match (same lower, upper and subinterval count required)"
                .into(),
        ));
    }
    let l1 = da.l1(&db).map_err(runtime("computing L1"))?;
    println!("L1 = {}", sig6(l1));
    Ok(())
}

fn parse_grid_spec(spec: &str) -> Result<DensityGrid, CliError> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "grid spec '{spec}' must be LOWER:UPPER:SUBINTERVALS"
        )));
    }
    let lower: f64 = parts[0]
        .parse()
        .map_err(usage("grid lower bound"))?;
    let upper: f64 = parts[1]
        .parse()
        .map_err(usage("grid upper bound"))?;
    let points: usize = parts[2]
        .parse()
        .map_err(usage("grid subintervals"))?;
    DensityGrid::new(lower, upper, points).map_err(usage("grid"))
}

fn cmd_export_density(args: ExportArgs) -> Result<(), CliError> {
    let cfg = RunConfig::ExportDensity {
        source: args
            .normal
            .clone()
            .map(|n| format!("normal:{n}"))
            .or_else(|| args.reference.clone().map(|r| format!("reference:{r}")))
            .unwrap_or_default(),
        grid: args.grid.clone(),
        size: args.reference.is_some().then_some(args.size),
        seed: args.seed,
    };
    let tab = match (&args.normal, &args.reference) {
        (Some(spec), None) => {
            let (mu, sigma) = spec
                .split_once(',')
                .ok_or_else(|| CliError::Usage("--normal expects MU,SIGMA".into()))?;
            let mu: f64 = mu.trim().parse().map_err(usage("--normal mu"))?;
            let sigma: f64 = sigma.trim().parse().map_err(usage("--normal sigma"))?;
            if !(sigma > 0.0) {
                return Err(CliError::Usage("--normal sigma must be positive".into()));
            }
            let grid_spec = args.grid.as_ref().ok_or_else(|| {
                CliError::Usage("--grid LOWER:UPPER:SUBINTERVALS is required with --normal".into())
            })?;
            let grid = parse_grid_spec(grid_spec)?;
            let values: Vec<f64> = grid
                .midpoints()
                .map(|y| {
                    let z = (y - mu) / sigma;
                    (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
                })
                .collect();
            TabulatedDensity {
                grid,
                abscissae: grid.midpoints().collect(),
                values,
            }
        }
        (None, Some(name)) => {
            let id = TestFunctionId::parse(name).map_err(usage("--reference"))?;
            let seed = args.seed.ok_or_else(|| {
                CliError::Usage("--seed is required with --reference".into())
            })?;
            if args.grid.is_some() {
                return Err(CliError::Usage(
                    "--grid cannot be combined with --reference (the reference defines its own grid)"
                        .into(),
                ));
            }
            let reference = reference_density(
                id,
                args.size,
                RngStream::new(seed),
                None,
                args.cache_dir.as_deref(),
            )
            .map_err(runtime("reference density"))?;
            reference.tabulated()
        }
        _ => {
            return Err(CliError::Usage(
                "exactly one of --normal or --reference is required".into(),
            ))
        }
    };

    let file = std::fs::File::create(&args.out)
        .map_err(runtime(&format!("creating {}", args.out.display())))?;
    let mut writer = std::io::BufWriter::new(file);
    write_density_csv(&mut writer, &tab, &cfg.echo_lines())
        .map_err(runtime("writing density CSV"))?;
    writer.flush().map_err(runtime("writing density CSV"))?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_sim_stub(function: &str, offset: f64) -> Result<(), CliError> {
    let sim = builtin_simulator(function)?.with_offset(offset);
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for line in stdin.lock().lines() {
        let line = line.map_err(runtime("reading request"))?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let parsed: Result<Vec<f64>, _> =
            trimmed.split(',').map(|f| f.trim().parse::<f64>()).collect();
        match parsed {
            Ok(x) => match sim.eval(&x) {
                Ok(v) => writeln!(out, "{v}").map_err(runtime("writing response"))?,
                Err(e) => writeln!(out, "ERROR {e}").map_err(runtime("writing response"))?,
            },
            Err(e) => writeln!(out, "ERROR bad request: {e}")
                .map_err(runtime("writing response"))?,
        }
        out.flush().map_err(runtime("flushing response"))?;
    }
    Ok(())
}
