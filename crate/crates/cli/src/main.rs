use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, CommandFactory, Parser, Subcommand, ValueEnum};
use projsep_core::bodies::{CircularCone, Ellipsoid};
use projsep_core::classify::{load_dataset, reports_to_csv, run_pipeline, save_dataset, Method, MlrOptions};
use projsep_core::escape::{akf_bounds, escape_probability_lower, plan_multiclass, required_dim_gordon};
use projsep_core::exec::Exec;
use projsep_core::experiments::{
    estimate_transition, meta_path, parse_grid, parse_int_grid, run_cone_phase, run_ellipsoid_phase,
    EllipsoidPhaseOptions, PhaseGrid, Variant,
};
use projsep_core::pca::{inertia_of_rows, principal_subspace, toy_cross_polytope_balls, toy_two_balls};
use projsep_core::separation::{decide_disjoint_with, SolverOptions};
use projsep_core::widths::{circular_width_sq, mc_expected_map_norm, mc_width_circular, mc_width_pseudoprojection, width_bound_ellipsoids};
use projsep_core::{rng, Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::json;

mod config;

/// Random projections of disjoint convex bodies: bounds, oracles and sweeps.
#[derive(Parser, Debug)]
#[command(name = "projsep", disable_version_flag = true)]
struct Cli {
    /// Worker threads; 1 runs sequentially. Results do not depend on it.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,

    /// JSON object of flag defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print library and schema versions.
    #[arg(short = 'V', long)]
    version: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Serialize, Debug)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Width bound and required projection rank.
    Bound(BoundArgs),
    /// Decide whether two ellipsoids are disjoint.
    Separate(SeparateArgs),
    /// Null-space phase transition for circular cones.
    ConePhase(ConePhaseArgs),
    /// Disjointness phase transition for projected random ellipsoids.
    EllipsoidPhase(EllipsoidPhaseArgs),
    /// Projection rank keeping K ellipsoids pairwise separated.
    Plan(PlanArgs),
    /// Monte Carlo width estimates.
    WidthMc(WidthMcArgs),
    /// Sample a toy data set and summarize its principal components.
    PcaToy(PcaToyArgs),
    /// Compare random projection, PCA and raw features under a linear classifier.
    Classify(ClassifyArgs),
}

#[derive(Args, Serialize, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["ellipsoids", "alpha", "width"])))]
struct BoundArgs {
    /// JSON array of two ellipsoids `{"center": [..], "shape": [[..], ..]}`.
    #[arg(long)]
    ellipsoids: Option<PathBuf>,
    /// Circular cone half-angle in radians (needs --n).
    #[arg(long, requires = "n")]
    alpha: Option<f64>,
    /// Ambient dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Known Gaussian width.
    #[arg(long)]
    width: Option<f64>,
    /// Failure probability.
    #[arg(long, default_value_t = 0.01)]
    eta: f64,
    /// Also report the escape probability at this rank.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct SeparateArgs {
    /// First ellipsoid (JSON).
    #[arg(long)]
    a: PathBuf,
    /// Second ellipsoid (JSON).
    #[arg(long)]
    b: PathBuf,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    /// Iteration budget; defaults to 50 per dimension.
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct ConePhaseArgs {
    #[arg(long)]
    n: usize,
    /// Half-angle grid `lo:step:hi` or a comma list; values may use pi, e.g. `pi/8:pi/8:3pi/8`.
    #[arg(long)]
    grid: String,
    /// Rank grid (`lo:step:hi` or a comma list), defaults to `1:1:N`.
    #[arg(long)]
    m_grid: Option<String>,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Success level reported as the transition point.
    #[arg(long, default_value_t = 0.5)]
    level: f64,
    /// CSV path; metadata goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct EllipsoidPhaseArgs {
    #[arg(long)]
    n: usize,
    /// Center separation grid `lo:step:hi` or a comma list.
    #[arg(long)]
    grid: String,
    /// Rank grid (`lo:step:hi` or a comma list), defaults to `1:1:N`.
    #[arg(long)]
    m_grid: Option<String>,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// `general` or `hyperplane`.
    #[arg(long, default_value = "general")]
    variant: Variant,
    /// Also decide the unprojected pairs.
    #[arg(long)]
    check_unprojected: bool,
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
    #[arg(long, default_value_t = 0.5)]
    level: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct PlanArgs {
    /// JSON array of ellipsoids.
    #[arg(long)]
    ellipsoids: PathBuf,
    /// Overall failure probability.
    #[arg(long)]
    p: f64,
    /// JSON output; the table always goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
#[command(group(ArgGroup::new("source").required(true).args(["ellipsoids", "alpha", "matrix"])))]
struct WidthMcArgs {
    /// Pair of ellipsoids: pseudo-projection estimate next to the closed form.
    #[arg(long)]
    ellipsoids: Option<PathBuf>,
    /// Circular cone half-angle (needs --n).
    #[arg(long, requires = "n")]
    alpha: Option<f64>,
    #[arg(long)]
    n: Option<usize>,
    /// JSON matrix (array of rows): estimate `E|A g|`.
    #[arg(long)]
    matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Serialize, Clone, Copy, Debug)]
#[serde(rename_all = "kebab-case")]
enum Toy {
    TwoBalls,
    CrossPolytope,
}

#[derive(Args, Serialize, Debug)]
struct PcaToyArgs {
    #[arg(long, value_enum)]
    toy: Toy,
    #[arg(long)]
    n: usize,
    /// Ball radius.
    #[arg(long)]
    r: f64,
    /// Ball center for two-balls, comma separated; defaults to `4r e1`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    c: Option<Vec<f64>>,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Labeled CSV export of the samples.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Serialize, Debug)]
struct ClassifyArgs {
    /// Labeled CSV with header `label,f0,...`.
    #[arg(long)]
    data: PathBuf,
    /// Training fraction.
    #[arg(long, default_value_t = 0.5)]
    ratio: f64,
    /// `identity`, `rp:M` or `pca:M`; repeat or comma separate.
    #[arg(long, value_delimiter = ',', required = true)]
    method: Vec<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    #[arg(long, default_value_t = 5000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    /// Report CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Command {
    fn seed_slot(&mut self) -> Option<&mut Option<u64>> {
        match self {
            Command::ConePhase(a) => Some(&mut a.seed),
            Command::EllipsoidPhase(a) => Some(&mut a.seed),
            Command::WidthMc(a) => Some(&mut a.seed),
            Command::PcaToy(a) => Some(&mut a.seed),
            Command::Classify(a) => Some(&mut a.seed),
            Command::Bound(_) | Command::Separate(_) | Command::Plan(_) => None,
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn pretty(value: &impl Serialize) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn read_pair(path: &Path) -> Result<(Ellipsoid, Ellipsoid)> {
    let mut list: Vec<Ellipsoid> = read_json(path)?;
    if list.len() != 2 {
        return Err(Error::InvalidParameter(format!(
            "{} holds {} ellipsoids, expected 2",
            path.display(),
            list.len()
        )));
    }
    let b = list.pop().unwrap();
    Ok((list.pop().unwrap(), b))
}

fn bound(args: &BoundArgs) -> Result<()> {
    let (width, detail, n) = if let Some(path) = &args.ellipsoids {
        let (a, b) = read_pair(path)?;
        let wb = width_bound_ellipsoids(&a, &b)?;
        if !wb.valid {
            return Err(Error::HypothesisViolated(wb.reason.unwrap_or_default()));
        }
        (wb.value, serde_json::to_value(&wb)?, Some(a.dim()))
    } else if let Some(alpha) = args.alpha {
        let n = args.n.expect("clap enforces --n with --alpha");
        let wb = circular_width_sq(n, alpha)?;
        (wb.value.max(0.0).sqrt(), serde_json::to_value(&wb)?, Some(n))
    } else {
        let w = args.width.expect("clap enforces one source");
        (w, serde_json::Value::Null, args.n)
    };
    let report = json!({
        "width": width,
        "bound": detail,
        "eta": args.eta,
        "N": n,
        "required_dim_gordon": required_dim_gordon(width, args.eta)?,
        "akf": n.map(|n| akf_bounds(width, n, args.eta)).transpose()?,
        "M": args.m,
        "escape_probability": args.m.map(|m| escape_probability_lower(m, width)).transpose()?,
    });
    emit(args.out.as_deref(), &pretty(&report)?)
}

fn separate(args: &SeparateArgs) -> Result<()> {
    let a: Ellipsoid = read_json(&args.a)?;
    let b: Ellipsoid = read_json(&args.b)?;
    let mut opts = SolverOptions::for_dim(a.dim()).with_tol(args.tol);
    if let Some(it) = args.max_iter {
        opts.max_iter = it;
    }
    let verdict = decide_disjoint_with(&a, &b, opts)?;
    emit(args.out.as_deref(), &pretty(&verdict)?)
}

fn finish_phase(grid: &PhaseGrid, level: f64, out: Option<&Path>, config: &serde_json::Value) -> Result<()> {
    let estimates = estimate_transition(grid, level)?;
    match out {
        Some(path) => {
            grid.write_csv(path)?;
            grid.write_meta(&meta_path(path), config.clone())?;
            print!("{}", pretty(&estimates)?);
        }
        None => {
            print!("{}", grid.to_csv());
            for e in &estimates {
                eprintln!("transition: param={:.6} level={} M={:?} status={:?}", e.param, e.level, e.m_half, e.status);
            }
        }
    }
    Ok(())
}

fn rank_grid(spec: &Option<String>, n: usize) -> Result<Vec<usize>> {
    match spec {
        Some(s) => parse_int_grid(s),
        None => Ok((1..=n).collect()),
    }
}

fn cone_phase(args: &ConePhaseArgs, seed: u64, exec: Exec, config: &serde_json::Value) -> Result<()> {
    let alphas = parse_grid(&args.grid)?;
    let ms = rank_grid(&args.m_grid, args.n)?;
    let grid = run_cone_phase(args.n, &alphas, &ms, args.trials, seed, exec)?;
    finish_phase(&grid, args.level, args.out.as_deref(), config)
}

fn ellipsoid_phase(args: &EllipsoidPhaseArgs, seed: u64, exec: Exec, config: &serde_json::Value) -> Result<()> {
    let zetas = parse_grid(&args.grid)?;
    let ms = rank_grid(&args.m_grid, args.n)?;
    let opts = EllipsoidPhaseOptions {
        variant: args.variant,
        tol: args.tol,
        check_unprojected: args.check_unprojected,
        ..Default::default()
    };
    let grid = run_ellipsoid_phase(args.n, &zetas, &ms, args.trials, seed, opts, exec)?;
    finish_phase(&grid, args.level, args.out.as_deref(), config)
}

fn plan(args: &PlanArgs) -> Result<()> {
    let bodies: Vec<Ellipsoid> = read_json(&args.ellipsoids)?;
    let plan = plan_multiclass(&bodies, args.p)?;
    print!("{}", plan.to_table());
    if let Some(path) = &args.out {
        std::fs::write(path, pretty(&plan)?)?;
    }
    Ok(())
}

fn width_mc(args: &WidthMcArgs, seed: u64, exec: Exec) -> Result<()> {
    let report = if let Some(path) = &args.ellipsoids {
        let (a, b) = read_pair(path)?;
        json!({
            "estimate": mc_width_pseudoprojection(&a, &b, args.trials, seed, exec)?,
            "closed_form": width_bound_ellipsoids(&a, &b)?,
        })
    } else if let Some(alpha) = args.alpha {
        let n = args.n.expect("clap enforces --n with --alpha");
        let cone = CircularCone::around_first_axis(n, alpha)?;
        json!({
            "estimate": mc_width_circular(&cone, args.trials, seed, exec)?,
            "curve_sq": circular_width_sq(n, alpha)?,
        })
    } else {
        let path = args.matrix.as_ref().expect("clap enforces one source");
        let rows: Vec<Vec<f64>> = read_json(path)?;
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0 || rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidParameter(format!("{} is not a rectangular matrix", path.display())));
        }
        let a = DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]);
        json!({ "map_norm": mc_expected_map_norm(&a, args.trials, seed, exec)? })
    };
    emit(args.out.as_deref(), &pretty(&report)?)
}

fn pca_toy(args: &PcaToyArgs, seed: u64) -> Result<()> {
    let mut summary = json!({ "toy": args.toy, "N": args.n, "r": args.r, "samples": args.samples });
    let data = match args.toy {
        Toy::TwoBalls => {
            let c = match &args.c {
                Some(c) => DVector::from_vec(c.clone()),
                None => DVector::from_fn(args.n, |i, _| if i == 0 { 4.0 * args.r } else { 0.0 }),
            };
            summary["c"] = json!(c.as_slice());
            toy_two_balls(args.n, &c, args.r, args.samples, seed)?
        }
        Toy::CrossPolytope => toy_cross_polytope_balls(args.n, args.r, args.samples, seed)?,
    };
    let model = inertia_of_rows(&data.features)?;
    let pcs = principal_subspace(&model, 1)?;
    let top = pcs.basis.column(0);
    summary["spectrum"] = json!(pcs.spectrum);
    summary["top_component"] = json!(top.iter().collect::<Vec<_>>());
    if let (Toy::TwoBalls, Some(c)) = (args.toy, summary["c"].as_array()) {
        let c = DVector::from_iterator(c.len(), c.iter().map(|v| v.as_f64().unwrap_or(0.0)));
        summary["alignment"] = json!((top.dot(&c) / c.norm()).abs());
    }
    let (lo, hi) = (pcs.spectrum.iter().cloned().fold(f64::INFINITY, f64::min), pcs.spectrum[0]);
    summary["spectrum_ratio"] = json!(hi / lo);
    if let Some(path) = &args.out {
        save_dataset(&data, path)?;
    }
    print!("{}", pretty(&summary)?);
    Ok(())
}

fn classify(args: &ClassifyArgs, seed: u64) -> Result<()> {
    let data = load_dataset(&args.data)?;
    let opts = MlrOptions {
        l2: args.l2,
        max_iters: args.max_iters,
        tol: args.tol,
    };
    let reports = run_pipeline(&data, args.ratio, &args.method, seed, opts)?;
    emit(args.out.as_deref(), &reports_to_csv(&reports))
}

fn run(command: &Command, seed: Option<u64>, exec: Exec, config: &serde_json::Value) -> Result<()> {
    let seed = seed.unwrap_or_default();
    match command {
        Command::Bound(a) => bound(a),
        Command::Separate(a) => separate(a),
        Command::ConePhase(a) => cone_phase(a, seed, exec, config),
        Command::EllipsoidPhase(a) => ellipsoid_phase(a, seed, exec, config),
        Command::Plan(a) => plan(a),
        Command::WidthMc(a) => width_mc(a, seed, exec),
        Command::PcaToy(a) => pca_toy(a, seed),
        Command::Classify(a) => classify(a, seed),
    }
}

fn main() -> ExitCode {
    let argv = match config::merge(std::env::args_os().collect()) {
        Ok(argv) => argv,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    if cli.version {
        println!(
            "projsep {} (projsep-core {}, schema {})",
            env!("CARGO_PKG_VERSION"),
            projsep_core::VERSION,
            projsep_core::SCHEMA_VERSION
        );
        return ExitCode::SUCCESS;
    }
    let Some(mut command) = cli.command else {
        eprint!("{}", Cli::command().render_help());
        return ExitCode::from(2);
    };

    let mut seed = None;
    if let Some(slot) = command.seed_slot() {
        let s = *slot.get_or_insert_with(|| {
            let fresh = rng::fresh_seed();
            eprintln!("seed: {fresh} (fresh)");
            fresh
        });
        seed = Some(s);
    }
    let jobs = cli.jobs.map(|j| j as usize);
    let mut config = serde_json::to_value(&command).expect("arguments serialize");
    config["jobs"] = json!(jobs);
    eprintln!("config: {config}");

    match Exec::with_jobs(jobs, |exec| run(&command, seed, exec, &config)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {}", e.code(), e.to_string().replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
