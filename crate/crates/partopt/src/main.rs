use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use partopt::core::corpus::builtin_configs;
use partopt::core::empirical::{
    generate_cantor, uniform_pool, CantorSpec, HistBox, HistogramJob, DEFAULT_RESOLUTION, DEFAULT_TUPLES,
};
use partopt::core::rng::{substream, Purpose};
use partopt::core::{Mode, Tolerances};
use partopt::golden::{run_golden, GoldenOptions};
use partopt::pipeline::{self, ConfigSource, RunConfig, DEFAULT_SAMPLES, WORKERS_ENV};
use partopt::report;

#[derive(Parser)]
#[command(name = "partopt", version, about = "Partition-optimization thresholds for k-point configuration sets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute thresholds and write a JSON report.
    Analyze(AnalyzeArgs),
    /// Recompute every registered threshold and compare exactly.
    Golden(GoldenArgs),
    /// List the registered configurations.
    List,
    /// Compare autodiff derivatives against central differences.
    ValidateDerivatives(DerivArgs),
    /// Histogram of Φ over product samples of a point set.
    Empirical(EmpiricalArgs),
    /// Write every rank cell as CSV.
    DumpCells(DumpArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Global,
    Local,
    Microlocal,
    All,
}

#[derive(Args, Clone)]
struct TolArgs {
    #[arg(long, default_value_t = Tolerances::default().tol_res)]
    tol_res: f64,
    #[arg(long, default_value_t = Tolerances::default().tol_rank)]
    tol_rank: f64,
    #[arg(long, default_value_t = Tolerances::default().tol_zero)]
    tol_zero: f64,
    #[arg(long, default_value_t = Tolerances::default().eps_dom)]
    eps_dom: f64,
}

impl TolArgs {
    fn tolerances(&self) -> Tolerances {
        Tolerances {
            tol_res: self.tol_res,
            tol_rank: self.tol_rank,
            tol_zero: self.tol_zero,
            eps_dom: self.eps_dom,
            ..Tolerances::default()
        }
    }
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Registered name or path to a TOML config file.
    #[arg(long)]
    config: String,
    /// Ambient dimension of each point (registered configs).
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_enum, default_value = "all", num_args = 1..)]
    mode: Vec<ModeArg>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    /// Number of τ directions; defaults to 64 p.
    #[arg(long)]
    tau_samples: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fixed target, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    target: Option<Vec<f64>>,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

impl RunArgs {
    fn run_config(&self) -> RunConfig {
        let mut modes: Vec<Mode> = Vec::new();
        for m in &self.mode {
            match m {
                ModeArg::Global => modes.push(Mode::Global),
                ModeArg::Local => modes.push(Mode::Local),
                ModeArg::Microlocal => modes.push(Mode::Microlocal),
                ModeArg::All => modes.extend(Mode::ALL),
            }
        }
        RunConfig {
            source: ConfigSource::from_arg(&self.config),
            d: self.d,
            modes,
            samples: self.samples,
            tau_samples: self.tau_samples,
            seed: self.seed,
            target: self.target.clone(),
            tol: self.tol.tolerances(),
            workers: self.workers,
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    run: RunArgs,
    /// JSON report path; stdout if absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Also write the rank cells as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct DumpArgs {
    #[command(flatten)]
    run: RunArgs,
    /// CSV path; stdout if absent.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct GoldenArgs {
    /// Only configs whose name contains this.
    #[arg(long)]
    filter: Option<String>,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long)]
    tau_samples: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[command(flatten)]
    tol: TolArgs,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Args)]
struct DerivArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, default_value_t = 100)]
    points: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    /// Largest accepted relative error.
    #[arg(long, default_value_t = 1e-6)]
    max_error: f64,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SetArg {
    /// Uniform samples of the unit cube.
    Uniform,
    /// Middle-thirds Cantor set on the first axis.
    MiddleThirds,
    /// Product of a 1-dimensional self-similar set given by --ratio and --offsets.
    Cantor,
}

#[derive(Args)]
struct EmpiricalArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long, value_enum, default_value = "uniform")]
    set: SetArg,
    #[arg(long, default_value_t = 1.0 / 3.0)]
    ratio: f64,
    #[arg(long, value_delimiter = ',', default_value = "0,0.6666666666666666")]
    offsets: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    depth: usize,
    /// Points in the sample of the set.
    #[arg(long, default_value_t = 4096)]
    pool: usize,
    #[arg(long, default_value_t = DEFAULT_TUPLES)]
    tuples: usize,
    /// Lower box corner, one value or p values.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    lo: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    hi: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// JSON summary path; stdout if absent.
    #[arg(long)]
    output: Option<PathBuf>,
    /// gnuplot histogram path.
    #[arg(long)]
    hist: Option<PathBuf>,
}

fn writer(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<i32> {
    let a = pipeline::analyze(&args.run.run_config())?;
    let mut w = writer(args.output.as_ref())?;
    w.write_all(report::to_json(&a).as_bytes())?;
    w.flush()?;
    if let Some(p) = &args.csv {
        report::write_cells_csv(&a, writer(Some(p))?)?;
    }
    let code = report::exit_code(&a);
    match code {
        2 => eprintln!("status disagrees with the registry for {:?}", a.status_mismatches()),
        3 => eprintln!("{}", a.ordering.as_ref().unwrap_err()),
        4 => eprintln!("{:.1}% of cells are marginal; result untrusted", 100.0 * a.marginal_fraction()),
        _ => {}
    }
    Ok(code)
}

fn dump_cells(args: DumpArgs) -> anyhow::Result<i32> {
    let a = pipeline::analyze(&args.run.run_config())?;
    report::write_cells_csv(&a, writer(args.csv.as_ref())?)?;
    Ok(0)
}

fn golden(args: GoldenArgs) -> anyhow::Result<i32> {
    let opts = GoldenOptions {
        filter: args.filter,
        samples: args.samples,
        tau_samples: args.tau_samples,
        seed: args.seed,
        tol: Tolerances {
            tol_res: args.tol.tol_res,
            tol_rank: args.tol.tol_rank,
            tol_zero: args.tol.tol_zero,
            eps_dom: args.tol.eps_dom,
            ..Tolerances::default()
        },
        workers: args.workers,
    };
    opts.tol.validate()?;
    let out = run_golden(&opts);
    print!("{}", out.table());
    Ok(if out.passed() { 0 } else { 1 })
}

fn list() -> i32 {
    for c in builtin_configs() {
        let d = if c.valid_d.start() == c.valid_d.end() {
            format!("d={}", c.valid_d.start())
        } else {
            format!("d={}..{}", c.valid_d.start(), c.valid_d.end())
        };
        println!("{:<22} k={} p={} {:<9} {}", c.name, c.k, c.p, d, c.description);
        if let Some(n) = &c.note {
            println!("{:<22} note: {}", "", n.text);
        }
    }
    0
}

fn validate_derivatives(args: DerivArgs) -> anyhow::Result<i32> {
    let resolved = pipeline::resolve(&ConfigSource::from_arg(&args.config), args.d)?;
    let tol = Tolerances::default();
    let reports = pipeline::derivative_check(&resolved, args.points, args.seed, args.step, &tol)?;
    let checked: Vec<_> = reports.iter().filter(|r| !r.skipped).collect();
    let jac = checked.iter().map(|r| r.jacobian_error).fold(0.0, f64::max);
    let hess = checked.iter().map(|r| r.hessian_error).fold(0.0, f64::max);
    println!(
        "{}: {} points checked, {} skipped; max relative error jacobian {jac:.3e}, hessian {hess:.3e}",
        resolved.spec.name(),
        checked.len(),
        reports.len() - checked.len()
    );
    Ok(if checked.is_empty() || jac.max(hess) >= args.max_error { 1 } else { 0 })
}

fn empirical(args: EmpiricalArgs) -> anyhow::Result<i32> {
    let resolved = pipeline::resolve(&ConfigSource::from_arg(&args.config), args.d)?;
    let spec = &resolved.spec;
    let Some(d) = spec.uniform_dim() else {
        bail!("empirical runs need equal dimensions for all variables");
    };
    let p = spec.p();
    let expand = |v: &[f64]| if v.len() == 1 { vec![v[0]; p] } else { v.to_vec() };
    let hbox = HistBox::new(expand(&args.lo), expand(&args.hi))?;
    let mut rng = substream(args.seed, Purpose::Points, 0);
    let (pool, label) = match args.set {
        SetArg::Uniform => (uniform_pool(d, args.pool, &mut rng), "uniform".to_string()),
        SetArg::MiddleThirds => {
            let c = CantorSpec::middle_thirds(d, args.depth)?;
            (generate_cantor(&c, args.pool, &mut rng), format!("middle-thirds s={:.4}", c.similarity_dimension()))
        }
        SetArg::Cantor => {
            let base = CantorSpec::new(1, args.ratio, args.depth, args.offsets.iter().map(|&o| vec![o]).collect())?;
            let c = CantorSpec::product(&base, d)?;
            (generate_cantor(&c, args.pool, &mut rng), format!("cantor s={:.4}", c.similarity_dimension()))
        }
    };
    let job = HistogramJob {
        spec,
        pool: &pool,
        tuples: args.tuples,
        hbox: &hbox,
        resolution: args.resolution,
        seed: args.seed,
    };
    let r = partopt::empirical::histogram(&job, args.workers)?;
    let mut w = writer(args.output.as_ref())?;
    w.write_all(report::empirical_json(spec.name(), &label, pool.len(), &r).as_bytes())?;
    w.flush()?;
    if let Some(h) = &args.hist {
        let mut hw = writer(Some(h))?;
        report::write_gnuplot(&r, &mut hw)?;
        hw.flush()?;
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Golden(g) => golden(g),
        Command::List => Ok(list()),
        Command::ValidateDerivatives(a) => validate_derivatives(a),
        Command::Empirical(a) => empirical(a),
        Command::DumpCells(a) => dump_cells(a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
