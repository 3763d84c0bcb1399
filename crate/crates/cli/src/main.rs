mod config;

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;
use std::time::Instant;

use anyhow::Context;
use biharm_core::experiments::{
    self, fujita_study, lifespan_csv, lifespan_plot_script, lifespan_study, phase_csv, phase_diagram, phase_plot_script, read_records,
    second_critical_sweep, Classification, RecordStore, RunRecord, Runner, SweepReport, SweepStats, CODE_VERSION, SCHEMA_VERSION,
};
use biharm_core::solver::{simulate, write_snapshots_csv, OutcomeKind, RadialRule};
use biharm_core::verify::{self, CheckRow};
use biharm_core::{BoundaryCondition, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Config;

const EXIT_USAGE: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

/// Failure carrying its exit status.
#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn numerical(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERICAL, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Singular { .. } | Error::NoConvergence { .. } | Error::Integration { .. } => Failure::numerical(e.to_string()),
            _ => Failure::usage(e.to_string()),
        }
    }
}

impl From<experiments::ExperimentError> for Failure {
    fn from(e: experiments::ExperimentError) -> Self {
        match e {
            experiments::ExperimentError::Core(c) => c.into(),
            other => Failure::numerical(other.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::numerical(format!("{e:#}"))
    }
}

type CmdResult = Result<u8, Failure>;

#[derive(Parser, Debug)]
#[command(name = "biharm", version, about = "Radial semilinear biharmonic heat equation on the exterior of the unit ball")]
struct Cli {
    /// Record store directory.
    #[arg(long, global = true, env = "BIHARM_RECORD_DIR", default_value = "biharm-records")]
    records: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one simulation and commit its record.
    Simulate(SimulateArgs),
    /// Run a verification catalog and print one CSV row per check.
    Verify {
        #[command(subcommand)]
        suite: VerifySuite,
    },
    /// Run a parameter study on a bounded worker pool.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Summarize committed records as CSV.
    Report(ReportArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Profile {
    Zero,
    /// `exp(-(r-2)^2)`
    Bump,
}

impl Profile {
    fn rule(self) -> RadialRule<f64> {
        match self {
            Profile::Zero => RadialRule::Zero,
            Profile::Bump => RadialRule::bump(1.0, 2.0, 1.0),
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// TOML or JSON config; the `[problem]` table overrides the defaults below.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Space dimension (config default 3).
    #[arg(short = 'N', long = "N")]
    dim: Option<u32>,
    /// Exponent p > 1 (config default 2).
    #[arg(long)]
    p: Option<f64>,
    /// Boundary condition by name or roman numeral (config default navier).
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Truncation radius (config default 30).
    #[arg(long)]
    r_max: Option<f64>,
    /// Number of cells (config default 232).
    #[arg(long)]
    cells: Option<usize>,
    /// Final time (config default 100).
    #[arg(long)]
    t_max: Option<f64>,
    /// Initial amplitude eps (config default 1).
    #[arg(long)]
    amplitude: Option<f64>,
    /// Include the |u|^p term (config default on).
    #[arg(long, value_enum)]
    nonlinearity: Option<Switch>,
    /// Forcing profile (config default zero).
    #[arg(long = "f", value_enum)]
    forcing: Option<Profile>,
    /// Initial profile (config default zero).
    #[arg(long, value_enum)]
    u0: Option<Profile>,
    /// Write `t,r,u` snapshot rows to this CSV file.
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Snapshot spacing in time [default: t_max / 200 when --snapshots is set].
    #[arg(long)]
    snapshot_every: Option<f64>,
    /// Do not commit a record.
    #[arg(long)]
    no_record: bool,
}

#[derive(Subcommand, Debug)]
enum VerifySuite {
    /// Harmonic and biharmonic weights: finite-difference convergence and boundary values.
    ClosedForms(VerifyOut),
    /// Integral scaling estimates for the test-function families.
    Lemmas(LemmaArgs),
    /// Flatness of the lifespan cutoff derivative ratios over R in {10, 100, 1000}.
    LifespanCutoffs(CutoffArgs),
    /// Supersolution coefficient, forcing sign and boundary signs.
    Supersolution(SupersolutionArgs),
}

#[derive(Args, Debug)]
struct VerifyOut {
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LemmaArgs {
    #[arg(short = 'N', long = "N", default_value_t = 3)]
    dim: u32,
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Select the logarithmic catalog at p = N/(N-4).
    #[arg(long)]
    critical: bool,
    /// Only checks whose id contains this text.
    #[arg(long)]
    id: Option<String>,
    #[command(flatten)]
    out: VerifyOut,
}

#[derive(Args, Debug)]
struct CutoffArgs {
    #[arg(short = 'N', long = "N", default_value_t = 3)]
    dim: u32,
    #[arg(long, default_value_t = 1.5)]
    p: f64,
    #[command(flatten)]
    out: VerifyOut,
}

#[derive(Args, Debug)]
struct SupersolutionArgs {
    #[arg(short = 'N', long = "N", default_value_t = 6)]
    dim: u32,
    #[arg(long, default_value_t = 4.0)]
    p: f64,
    #[arg(long, default_value_t = 1.5)]
    m: f64,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    /// Also check this many random admissible parameter sets.
    #[arg(long, default_value_t = 0)]
    random: usize,
    #[arg(long, default_value_t = experiments::DEFAULT_SEED)]
    seed: u64,
    #[command(flatten)]
    out: VerifyOut,
}

#[derive(Args, Debug)]
struct SweepCommon {
    /// TOML or JSON config; the `[run]` table and the study's own table apply.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads (config default: available parallelism).
    #[arg(long)]
    jobs: Option<usize>,
    /// Seed for the truncation spot check (config default 24301).
    #[arg(long)]
    seed: Option<u64>,
    /// Recompute arms already committed to the store.
    #[arg(long)]
    no_resume: bool,
    /// Directory for the CSV summary, JSON report and plot script [default: the record directory].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Truncation radius.
    #[arg(long)]
    r_max: Option<f64>,
    #[arg(long)]
    cells: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum SweepKind {
    /// Forced problem across a p-ladder. Config defaults: N=3, navier, R_max=30, 232 cells,
    /// t_max=2000, bump forcing c=1 at r=2, eps=0.01, ladder 0.6/0.9/1.1/1.4 x p_crit
    /// or {1.5, 2, 3, 5} when N <= 4.
    Phase(PhaseArgs),
    /// Forcing decay rate omega across omega_crit. Config defaults: N=6, p=4, navier,
    /// c=10, eps=0.01, ladder 0.6/0.9 x omega_crit and omega_crit + (N - omega_crit)/4, /2.
    Omega(OmegaArgs),
    /// Unforced problem across p_fuj. Config defaults: N=4, kuttler-sigillito, eps in {1, 0.1},
    /// R_max=60, 480 cells, t_max=5000, ladder 1+(p_fuj-1)/2, p_fuj, 1.1 and 1.4 x p_fuj.
    Fujita(FujitaArgs),
    /// Lifespan against amplitude. Config defaults: N=3, p=1.5, kuttler-sigillito,
    /// eps in {0.3, 0.1, 0.03, 0.01, 0.003}, R_max=200, 800 cells, t_max=1e6, dt_max=100.
    Lifespan(LifespanArgs),
}

#[derive(Args, Debug)]
struct PhaseArgs {
    #[arg(short = 'N', long = "N")]
    dim: Option<u32>,
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Comma-separated p values.
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    /// Envelope exponent for supercritical arms.
    #[arg(long)]
    m: Option<f64>,
    /// Envelope amplitude for supercritical arms.
    #[arg(long)]
    eps: Option<f64>,
    #[command(flatten)]
    common: SweepCommon,
}

#[derive(Args, Debug)]
struct OmegaArgs {
    #[arg(short = 'N', long = "N")]
    dim: Option<u32>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    /// Comma-separated omega values.
    #[arg(long, value_delimiter = ',')]
    omega: Option<Vec<f64>>,
    /// Coefficient of c r^-omega below omega_crit.
    #[arg(long)]
    coeff: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[command(flatten)]
    common: SweepCommon,
}

#[derive(Args, Debug)]
struct FujitaArgs {
    #[arg(short = 'N', long = "N")]
    dim: Option<u32>,
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    #[arg(long, value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[command(flatten)]
    common: SweepCommon,
}

#[derive(Args, Debug)]
struct LifespanArgs {
    #[arg(short = 'N', long = "N")]
    dim: Option<u32>,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long)]
    bc: Option<BoundaryCondition>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[command(flatten)]
    common: SweepCommon,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Only records of this study.
    #[arg(long)]
    study: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(args) => cmd_simulate(&cli.records, args),
        Command::Verify { suite } => cmd_verify(suite),
        Command::Sweep { kind } => cmd_sweep(&cli.records, kind),
        Command::Report(args) => cmd_report(&cli.records, args),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_simulate(records: &Path, args: SimulateArgs) -> CmdResult {
    let cfg = Config::load_or_default(args.config.as_ref()).map_err(Failure::usage)?;
    let mut spec = cfg.problem().map_err(Failure::usage)?;
    if let Some(v) = args.dim {
        spec.dim = v;
    }
    if let Some(v) = args.p {
        spec.p = v;
    }
    if let Some(v) = args.bc {
        spec.bc = v;
    }
    if let Some(v) = args.r_max {
        spec.r_max = v;
    }
    if let Some(v) = args.cells {
        spec.cells = v;
    }
    if let Some(v) = args.t_max {
        spec.t_max = v;
    }
    if let Some(v) = args.amplitude {
        spec.amplitude = v;
    }
    if let Some(v) = args.nonlinearity {
        spec.nonlinear = matches!(v, Switch::On);
    }
    if let Some(v) = args.forcing {
        spec.forcing = v.rule();
    }
    if let Some(v) = args.u0 {
        spec.initial = v.rule();
    }
    if let Some(v) = args.snapshot_every {
        spec.snapshot_every = Some(v);
    } else if args.snapshots.is_some() && spec.snapshot_every.is_none() {
        spec.snapshot_every = Some(spec.t_max / 200.0);
    }
    spec.validate()?;

    let start = Instant::now();
    let outcome = simulate(&spec)?;
    let wall = start.elapsed().as_secs_f64();
    let classification = Classification::of(&outcome);
    let id = experiments::run_id(&spec)?;
    let mut resolved = serde_json::to_value(&cfg).context("serializing config")?;
    resolved["problem"] = serde_json::to_value(&spec).context("serializing spec")?;
    if !args.no_record {
        let store = RecordStore::open(records)?;
        store.append(&RunRecord {
            schema_version: SCHEMA_VERSION,
            run_id: id.clone(),
            study: "simulate".into(),
            arm: "single".into(),
            spec: spec.clone(),
            outcome: outcome.clone(),
            classification,
            timings: experiments::Timings { wall_seconds: wall, steps: outcome.diagnostics.steps },
            code_version: CODE_VERSION.into(),
            seed: cfg.run.seed,
            config: resolved,
        })?;
    }
    if let Some(path) = &args.snapshots {
        let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_snapshots_csv(&spec.grid()?, &outcome.snapshots, std::io::BufWriter::new(file)).context("writing snapshots")?;
    }
    let summary = serde_json::json!({
        "run_id": id,
        "classification": classification.label(),
        "outcome": outcome.kind,
        "steps": outcome.diagnostics.steps,
        "wall_seconds": wall,
    });
    println!("{summary}");
    Ok(if matches!(outcome.kind, OutcomeKind::Invalid { .. }) { EXIT_NUMERICAL } else { 0 })
}

fn emit_rows(rows: &[CheckRow], out: &VerifyOut) -> CmdResult {
    let mut text = String::from(CheckRow::CSV_HEADER);
    text.push('\n');
    for r in rows {
        text.push_str(&r.csv());
        text.push('\n');
    }
    match &out.out {
        Some(path) => fs::write(path, &text).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    if failed > 0 {
        eprintln!("{failed} of {} checks failed", rows.len());
        Ok(EXIT_NUMERICAL)
    } else {
        Ok(0)
    }
}

fn cmd_verify(suite: VerifySuite) -> CmdResult {
    match suite {
        VerifySuite::ClosedForms(out) => emit_rows(&verify::closed_forms_suite()?, &out),
        VerifySuite::Lemmas(a) => {
            let checks = verify::lemma_suite(a.dim, a.p, a.critical, a.id.as_deref())?;
            let mut rows = verify::lemma_rows(&checks);
            if a.id.is_none() && !a.critical {
                rows.extend(verify::time_scaling_rows(a.dim, a.p)?);
            }
            if rows.is_empty() {
                return Err(Failure::usage(format!("no cataloged check applies to N={} p={}", a.dim, a.p)));
            }
            emit_rows(&rows, &a.out)
        }
        VerifySuite::LifespanCutoffs(a) => emit_rows(&verify::lifespan_cutoff_suite(a.p, a.dim)?, &a.out),
        VerifySuite::Supersolution(a) => {
            let mut rows = verify::supersolution_suite(a.dim, a.p, a.m, a.eps)?;
            if a.random > 0 {
                rows.extend(verify::random_supersolution_suite(a.random, a.seed)?);
            }
            emit_rows(&rows, &a.out)
        }
    }
}

fn make_runner(records: &Path, cfg: &Config, common: &SweepCommon) -> Result<Runner, Failure> {
    let jobs = common.jobs.unwrap_or(cfg.run.jobs);
    let seed = common.seed.unwrap_or(cfg.run.seed);
    let store = RecordStore::open(records)?;
    let runner = Runner::new(jobs)?
        .with_store(store)
        .with_resume(!common.no_resume)
        .with_seed(seed)
        .with_config(serde_json::to_value(cfg).context("serializing config")?);
    let flag = runner.cancel_flag();
    let _ = ctrlc::set_handler(move || {
        if flag.swap(true, Ordering::SeqCst) {
            std::process::exit(i32::from(EXIT_PARTIAL));
        }
        eprintln!("interrupted: committed records are kept; waiting for running arms (press again to abort)");
    });
    Ok(runner)
}

fn write_outputs(dir: &Path, stem: &str, csv: &str, script: &str, json: &serde_json::Value) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(format!("{stem}.csv")), csv)?;
    fs::write(dir.join(format!("{stem}_plot.py")), script)?;
    fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(json)?)?;
    Ok(())
}

fn sweep_exit(stats: &SweepStats) -> u8 {
    eprintln!("computed {} arms, reused {}, cancelled {}, failed {}", stats.computed, stats.reused, stats.cancelled, stats.failures.len());
    for f in &stats.failures {
        eprintln!("  failed: {f}");
    }
    if stats.is_partial() {
        EXIT_PARTIAL
    } else {
        0
    }
}

fn finish_sweep(records: &Path, common: &SweepCommon, report: &SweepReport, extra: serde_json::Value) -> CmdResult {
    let csv = phase_csv(report);
    print!("{csv}");
    let mut json = serde_json::to_value(report).context("serializing report")?;
    if let (Some(obj), serde_json::Value::Object(more)) = (json.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_outputs(common.out.as_deref().unwrap_or(records), &report.study, &csv, &phase_plot_script(report)?, &json)?;
    Ok(sweep_exit(&report.stats))
}

fn apply_grid(common: &SweepCommon, r_max: &mut f64, cells: &mut usize, t_max: &mut f64) {
    if let Some(v) = common.r_max {
        *r_max = v;
    }
    if let Some(v) = common.cells {
        *cells = v;
    }
    if let Some(v) = common.t_max {
        *t_max = v;
    }
}

fn cmd_sweep(records: &Path, kind: SweepKind) -> CmdResult {
    match kind {
        SweepKind::Phase(a) => {
            let mut cfg = Config::load_or_default(a.common.config.as_ref()).map_err(Failure::usage)?;
            let c = &mut cfg.phase;
            c.dim = a.dim.unwrap_or(c.dim);
            c.bc = a.bc.unwrap_or(c.bc);
            if a.p.is_some() {
                c.p_ladder = a.p.clone();
            }
            c.m = a.m.or(c.m);
            c.epsilon = a.eps.unwrap_or(c.epsilon);
            apply_grid(&a.common, &mut c.r_max, &mut c.cells, &mut c.t_max);
            let runner = make_runner(records, &cfg, &a.common)?;
            let report = phase_diagram(&runner, &cfg.phase)?;
            finish_sweep(records, &a.common, &report, serde_json::json!({}))
        }
        SweepKind::Omega(a) => {
            let mut cfg = Config::load_or_default(a.common.config.as_ref()).map_err(Failure::usage)?;
            let c = &mut cfg.omega;
            c.dim = a.dim.unwrap_or(c.dim);
            c.p = a.p.unwrap_or(c.p);
            c.bc = a.bc.unwrap_or(c.bc);
            if a.omega.is_some() {
                c.omega_ladder = a.omega.clone();
            }
            c.coeff = a.coeff.unwrap_or(c.coeff);
            c.epsilon = a.eps.unwrap_or(c.epsilon);
            apply_grid(&a.common, &mut c.r_max, &mut c.cells, &mut c.t_max);
            let runner = make_runner(records, &cfg, &a.common)?;
            let report = second_critical_sweep(&runner, &cfg.omega)?;
            finish_sweep(records, &a.common, &report, serde_json::json!({}))
        }
        SweepKind::Fujita(a) => {
            let mut cfg = Config::load_or_default(a.common.config.as_ref()).map_err(Failure::usage)?;
            let c = &mut cfg.fujita;
            c.dim = a.dim.unwrap_or(c.dim);
            c.bc = a.bc.unwrap_or(c.bc);
            if a.p.is_some() {
                c.p_ladder = a.p.clone();
            }
            if let Some(e) = &a.eps {
                c.eps_ladder = e.clone();
            }
            apply_grid(&a.common, &mut c.r_max, &mut c.cells, &mut c.t_max);
            let runner = make_runner(records, &cfg, &a.common)?;
            let report = fujita_study(&runner, &cfg.fujita)?;
            if !report.monotone_in_eps {
                eprintln!("warning: T_est not monotone in eps within some arm");
            }
            finish_sweep(records, &a.common, &report.sweep, serde_json::json!({ "monotone_in_eps": report.monotone_in_eps }))
        }
        SweepKind::Lifespan(a) => {
            let mut cfg = Config::load_or_default(a.common.config.as_ref()).map_err(Failure::usage)?;
            let c = &mut cfg.lifespan;
            c.dim = a.dim.unwrap_or(c.dim);
            c.p = a.p.unwrap_or(c.p);
            c.bc = a.bc.unwrap_or(c.bc);
            if let Some(e) = &a.eps {
                c.eps_ladder = e.clone();
            }
            apply_grid(&a.common, &mut c.r_max, &mut c.cells, &mut c.t_max);
            let runner = make_runner(records, &cfg, &a.common)?;
            let report = lifespan_study(&runner, &cfg.lifespan)?;
            let csv = lifespan_csv(&report);
            print!("{csv}");
            let mut out = std::io::stdout().lock();
            if let Some(f) = &report.fit {
                let _ = writeln!(
                    out,
                    "fit,slope={},theory={},r_squared={},points={}",
                    f.slope,
                    report.theoretical_slope.map_or_else(|| "none (critical)".into(), |s| s.to_string()),
                    f.r_squared,
                    f.points
                );
            }
            if let Some(ik) = &report.ikeda {
                let _ = writeln!(out, "ikeda,C0={},R1={},all_below={}", ik.c0, ik.r1, ik.all_below);
            }
            if let Some(c) = report.convex {
                let _ = writeln!(out, "critical,convex={c}");
            }
            if report.outside_theorem {
                let _ = writeln!(out, "note,N < 3 lies outside the proven lifespan range");
            }
            let json = serde_json::to_value(&report).context("serializing report")?;
            write_outputs(a.common.out.as_deref().unwrap_or(records), "lifespan", &csv, &lifespan_plot_script(&report)?, &json)?;
            let code = sweep_exit(&report.stats);
            if code == 0 && report.fit.is_none() {
                eprintln!("{}", report.fit_note);
                return Ok(EXIT_NUMERICAL);
            }
            Ok(code)
        }
    }
}

fn cmd_report(records: &Path, args: ReportArgs) -> CmdResult {
    let recs = read_records(records.join(experiments::RECORD_FILE))?;
    println!("run_id,study,arm,N,p,bc,forcing,amplitude,classification,outcome,t_est,wall_seconds,schema_version");
    for r in recs.iter().filter(|r| args.study.as_ref().map_or(true, |s| &r.study == s)) {
        let t_est = match r.outcome.kind {
            OutcomeKind::BlowUp { t_est, .. } => t_est.to_string(),
            _ => String::new(),
        };
        println!(
            "{},{},{},{},{},{},{},{},{},{},{},{:.3},{}",
            r.run_id,
            r.study,
            r.arm.replace(',', ";"),
            r.spec.dim,
            r.spec.p,
            r.spec.bc,
            r.spec.forcing.describe().replace(',', ";"),
            r.spec.amplitude,
            r.classification.label(),
            r.outcome.kind.label(),
            t_est,
            r.timings.wall_seconds,
            r.schema_version
        );
    }
    Ok(0)
}
