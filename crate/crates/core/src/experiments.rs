//! Parameter studies over the forced problem, with an append-only record store.
//!
//! Every simulated arm is keyed by the SHA-256 of its serialized [`ProblemSpec`].
//! A [`Runner`] executes arms on a bounded pool and skips arms whose key is
//! already committed to the store.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::boundary::BoundaryCondition;
use crate::closed_forms::{compute_exponents, forcing_in_class, make_supersolution, ClassMode, WeightA};
use crate::error::Error;
use crate::radial::{fit_power_law, FitResult};
use crate::solver::{
    lifespan_preconditions, sign_functional, Envelope, FarFieldMode, OutcomeKind, ProblemSpec, RadialRule, Sign, SimOutcome,
};
use crate::testfn::ikeda_bound;

pub const SCHEMA_VERSION: u32 = 1;
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 0x5eed;
pub const RECORD_FILE: &str = "records.jsonl";
pub const SPOT_CHECK_FRACTION: f64 = 0.2;
pub const LIFESPAN_SLOPE_BAND: f64 = 0.3;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("record store: {0}")]
    Io(#[from] std::io::Error),
    #[error("record encoding: {0}")]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub type ExpResult<T> = std::result::Result<T, ExperimentError>;

/// Content hash of a spec. Closure-valued sources cannot be hashed.
pub fn run_id(spec: &ProblemSpec<f64>) -> ExpResult<String> {
    if spec.source.is_some() || spec.far_field.is_some() {
        return Err(Error::Hypothesis("specs with closure data cannot be recorded".into()).into());
    }
    Ok(hex::encode(Sha256::digest(serde_json::to_vec(spec)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classification {
    Blowup,
    BoundedUnderEnvelope,
    Stationary,
    Undetermined,
}

impl Classification {
    pub fn of(outcome: &SimOutcome<f64>) -> Self {
        match outcome.kind {
            OutcomeKind::BlowUp { .. } => Classification::Blowup,
            OutcomeKind::Stationary { .. } => Classification::Stationary,
            OutcomeKind::Survived { .. } if outcome.diagnostics.envelope_held == Some(true) => Classification::BoundedUnderEnvelope,
            _ => Classification::Undetermined,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Classification::Blowup => "blowup",
            Classification::BoundedUnderEnvelope => "bounded-under-envelope",
            Classification::Stationary => "stationary",
            Classification::Undetermined => "undetermined",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub wall_seconds: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub schema_version: u32,
    pub run_id: String,
    pub study: String,
    pub arm: String,
    pub spec: ProblemSpec<f64>,
    pub outcome: SimOutcome<f64>,
    pub classification: Classification,
    pub timings: Timings,
    pub code_version: String,
    pub seed: u64,
    /// Fully resolved configuration of the invoking command.
    pub config: serde_json::Value,
}

/// Append-only JSON-lines store. One line is one committed record.
#[derive(Debug)]
pub struct RecordStore {
    path: PathBuf,
    file: Mutex<File>,
}

impl RecordStore {
    /// Opens `dir/records.jsonl`, dropping any uncommitted trailing fragment.
    pub fn open(dir: impl AsRef<Path>) -> ExpResult<Self> {
        fs::create_dir_all(dir.as_ref())?;
        let path = dir.as_ref().join(RECORD_FILE);
        let mut file = OpenOptions::new().read(true).write(true).create(true).truncate(false).open(&path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;
        let committed = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        if committed < bytes.len() {
            file.set_len(committed as u64)?;
        }
        file.seek(SeekFrom::End(0))?;
        Ok(Self { path, file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &RunRecord) -> ExpResult<()> {
        let mut line = serde_json::to_string(record)?;
        line.push('\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(line.as_bytes())?;
        file.flush()?;
        file.sync_data()?;
        Ok(())
    }

    pub fn load(&self) -> ExpResult<Vec<RunRecord>> {
        read_records(&self.path)
    }

    /// Latest committed record per run id.
    pub fn completed(&self) -> ExpResult<HashMap<String, RunRecord>> {
        Ok(self.load()?.into_iter().map(|r| (r.run_id.clone(), r)).collect())
    }
}

/// Reads committed lines only; a trailing line without newline is ignored.
pub fn read_records(path: impl AsRef<Path>) -> ExpResult<Vec<RunRecord>> {
    let text = match fs::read_to_string(path.as_ref()) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let end = text.rfind('\n').map_or(0, |i| i + 1);
    text[..end].lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

#[derive(Debug, Clone)]
pub struct Arm {
    pub name: String,
    pub spec: ProblemSpec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArmStatus {
    Computed,
    Reused,
    Failed(String),
    Cancelled,
}

#[derive(Debug, Clone)]
pub struct ArmResult {
    pub arm: String,
    pub run_id: String,
    pub status: ArmStatus,
    pub outcome: Option<SimOutcome<f64>>,
}

impl ArmResult {
    pub fn classification(&self) -> Option<Classification> {
        self.outcome.as_ref().map(Classification::of)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepStats {
    pub computed: usize,
    pub reused: usize,
    pub cancelled: usize,
    pub failures: Vec<String>,
}

impl SweepStats {
    fn absorb(&mut self, results: &[ArmResult]) {
        for r in results {
            match &r.status {
                ArmStatus::Computed => self.computed += 1,
                ArmStatus::Reused => self.reused += 1,
                ArmStatus::Cancelled => self.cancelled += 1,
                ArmStatus::Failed(e) => self.failures.push(format!("{}: {e}", r.arm)),
            }
        }
    }

    pub fn is_partial(&self) -> bool {
        self.cancelled > 0 || !self.failures.is_empty()
    }
}

/// Executes arms on a bounded worker pool.
pub struct Runner {
    store: Option<Arc<RecordStore>>,
    pool: rayon::ThreadPool,
    cancel: Arc<AtomicBool>,
    resume: bool,
    pub seed: u64,
    pub config: serde_json::Value,
}

impl Runner {
    pub fn new(jobs: usize) -> ExpResult<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| ExperimentError::Pool(e.to_string()))?;
        Ok(Self {
            store: None,
            pool,
            cancel: Arc::new(AtomicBool::new(false)),
            resume: true,
            seed: DEFAULT_SEED,
            config: serde_json::Value::Null,
        })
    }

    pub fn with_store(mut self, store: RecordStore) -> Self {
        self.store = Some(Arc::new(store));
        self
    }

    /// With `false`, committed arms are recomputed and appended again.
    pub fn with_resume(mut self, resume: bool) -> Self {
        self.resume = resume;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_config(mut self, config: serde_json::Value) -> Self {
        self.config = config;
        self
    }

    /// Setting the flag stops new arms from starting.
    pub fn cancel_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.cancel)
    }

    pub fn store(&self) -> Option<&RecordStore> {
        self.store.as_deref()
    }

    pub fn run(&self, study: &str, arms: Vec<Arm>) -> ExpResult<Vec<ArmResult>> {
        let done = match (&self.store, self.resume) {
            (Some(s), true) => s.completed()?,
            _ => HashMap::new(),
        };
        let results = self.pool.install(|| arms.into_par_iter().map(|arm| self.run_arm(study, arm, &done)).collect());
        Ok(results)
    }

    fn run_arm(&self, study: &str, arm: Arm, done: &HashMap<String, RunRecord>) -> ArmResult {
        let id = match run_id(&arm.spec) {
            Ok(id) => id,
            Err(e) => return ArmResult { arm: arm.name, run_id: String::new(), status: ArmStatus::Failed(e.to_string()), outcome: None },
        };
        if let Some(rec) = done.get(&id) {
            return ArmResult { arm: arm.name, run_id: id, status: ArmStatus::Reused, outcome: Some(rec.outcome.clone()) };
        }
        if self.cancel.load(Ordering::SeqCst) {
            return ArmResult { arm: arm.name, run_id: id, status: ArmStatus::Cancelled, outcome: None };
        }
        let start = Instant::now();
        let outcome = match crate::solver::simulate(&arm.spec) {
            Ok(o) => o,
            Err(e) => return ArmResult { arm: arm.name, run_id: id, status: ArmStatus::Failed(e.to_string()), outcome: None },
        };
        let timings = Timings { wall_seconds: start.elapsed().as_secs_f64(), steps: outcome.diagnostics.steps };
        if let Some(store) = &self.store {
            let record = RunRecord {
                schema_version: SCHEMA_VERSION,
                run_id: id.clone(),
                study: study.into(),
                arm: arm.name.clone(),
                spec: arm.spec.clone(),
                outcome: outcome.clone(),
                classification: Classification::of(&outcome),
                timings,
                code_version: CODE_VERSION.into(),
                seed: self.seed,
                config: self.config.clone(),
            };
            if let Err(e) = store.append(&record) {
                return ArmResult { arm: arm.name, run_id: id, status: ArmStatus::Failed(e.to_string()), outcome: Some(outcome) };
            }
        }
        ArmResult { arm: arm.name, run_id: id, status: ArmStatus::Computed, outcome: Some(outcome) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub dim: u32,
    pub p: f64,
    pub bc: BoundaryCondition,
    pub forcing: String,
    pub omega: Option<f64>,
    pub epsilon: Option<f64>,
    pub classification: Classification,
    pub t_est: Option<f64>,
    pub envelope_ratio: Option<f64>,
    pub run_id: Option<String>,
    /// `Some(same)` when the arm was rerun on the doubled domain.
    pub truncation_checked: Option<bool>,
    pub skipped: bool,
    pub note: String,
}

impl PhasePoint {
    fn skipped(dim: u32, p: f64, bc: BoundaryCondition, forcing: String, reason: impl Into<String>) -> Self {
        Self {
            dim,
            p,
            bc,
            forcing,
            omega: None,
            epsilon: None,
            classification: Classification::Undetermined,
            t_est: None,
            envelope_ratio: None,
            run_id: None,
            truncation_checked: None,
            skipped: true,
            note: format!("skipped: {}", reason.into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub study: String,
    /// Name of the swept variable, `p` or `omega`.
    pub axis: String,
    pub points: Vec<PhasePoint>,
    pub markers: Vec<(String, f64)>,
    pub stats: SweepStats,
}

/// Arm awaiting its run, with the point it will fill.
struct Pending {
    point: PhasePoint,
    arm: Option<Arm>,
}

fn resolve(runner: &Runner, study: &str, pending: Vec<Pending>, fraction: f64) -> ExpResult<(Vec<PhasePoint>, SweepStats)> {
    let mut stats = SweepStats::default();
    let arms: Vec<Arm> = pending.iter().filter_map(|p| p.arm.clone()).collect();
    let results = runner.run(study, arms)?;
    stats.absorb(&results);
    let mut by_name: HashMap<String, ArmResult> = results.into_iter().map(|r| (r.arm.clone(), r)).collect();
    let mut points = Vec::with_capacity(pending.len());
    let mut checkable = Vec::new();
    for (k, p) in pending.iter().enumerate() {
        let mut point = p.point.clone();
        if let Some(arm) = &p.arm {
            let res = by_name.remove(&arm.name).expect("every arm returns a result");
            point.run_id = Some(res.run_id.clone());
            match (&res.status, &res.outcome) {
                (_, Some(o)) => {
                    point.classification = Classification::of(o);
                    point.envelope_ratio = o.diagnostics.envelope_ratio;
                    if let OutcomeKind::BlowUp { t_est, .. } = o.kind {
                        point.t_est = Some(t_est);
                    }
                    if let OutcomeKind::Invalid { reason, .. } = &o.kind {
                        point.note = join_note(&point.note, &format!("numerical failure: {reason}"));
                    }
                    if o.diagnostics.far_field_flag && arm.spec.far_field_mode == FarFieldMode::Zero {
                        point.note = join_note(&point.note, "far-field decay flagged");
                    }
                    checkable.push(k);
                }
                (ArmStatus::Failed(e), None) => point.note = join_note(&point.note, &format!("failed: {e}")),
                _ => point.note = join_note(&point.note, "cancelled"),
            }
        }
        points.push(point);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(runner.seed);
    let count = ((checkable.len() as f64 * fraction).ceil() as usize).min(checkable.len());
    let chosen: Vec<usize> = checkable.choose_multiple(&mut rng, count).copied().collect();
    let doubled: Vec<Arm> = chosen
        .iter()
        .map(|&k| {
            let arm = pending[k].arm.as_ref().expect("checkable arms exist");
            Arm { name: format!("{}/doubled-domain", arm.name), spec: arm.spec.doubled_domain() }
        })
        .collect();
    let rerun = runner.run(study, doubled)?;
    stats.absorb(&rerun);
    for (&k, res) in chosen.iter().zip(rerun) {
        if let Some(c) = res.classification() {
            points[k].truncation_checked = Some(c == points[k].classification);
            if c != points[k].classification {
                points[k].note = join_note(&points[k].note, &format!("doubled domain gives {}", c.label()));
            }
        }
    }
    Ok((points, stats))
}

fn join_note(a: &str, b: &str) -> String {
    if a.is_empty() {
        b.to_string()
    } else {
        format!("{a}; {b}")
    }
}

/// Two points on each side of `line` at relative offsets 10% and 40%.
pub fn critical_ladder(line: f64) -> Vec<f64> {
    [0.6, 0.9, 1.1, 1.4].iter().map(|k| k * line).filter(|&p| p > 1.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseConfig {
    pub dim: u32,
    pub bc: BoundaryCondition,
    /// Defaults to [`critical_ladder`] around `p_crit`, or `{1.5, 2, 3, 5}` for `N <= 4`.
    pub p_ladder: Option<Vec<f64>>,
    pub r_max: f64,
    pub cells: usize,
    pub t_max: f64,
    pub bump_coeff: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    /// Envelope exponent; defaults to a quarter of the way into `(4/(p-1), N-4)`.
    pub m: Option<f64>,
    pub epsilon: f64,
    pub spot_check_fraction: f64,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            bc: BoundaryCondition::Navier,
            p_ladder: None,
            r_max: 30.0,
            cells: 232,
            t_max: 2000.0,
            bump_coeff: 1.0,
            bump_center: 2.0,
            bump_width: 1.0,
            m: None,
            epsilon: 0.01,
            spot_check_fraction: SPOT_CHECK_FRACTION,
        }
    }
}

fn base_spec(dim: u32, p: f64, bc: BoundaryCondition, r_max: f64, cells: usize, t_max: f64) -> ProblemSpec<f64> {
    let mut s = ProblemSpec::new(dim, p, bc, r_max, cells);
    s.t_max = t_max;
    s
}

fn envelope_spec(mut s: ProblemSpec<f64>, m: f64, epsilon: f64) -> ProblemSpec<f64> {
    s.forcing = RadialRule::Supersolution { m, epsilon };
    s.initial = RadialRule::Supersolution { m, epsilon };
    s.envelope = Some(Envelope { m, epsilon });
    s.far_field_mode = FarFieldMode::Envelope;
    s
}

/// Admissible envelope for `(p, N, m, eps)` or the reason it is not.
fn envelope_admissible(p: f64, dim: u32, m: f64, epsilon: f64) -> Result<(), String> {
    let v = make_supersolution(p, dim, m, epsilon).map_err(|e| e.to_string())?;
    if epsilon.powf(p - 1.0) >= v.big_m {
        return Err(format!("eps^(p-1) = {:e} >= M = {:e}", epsilon.powf(p - 1.0), v.big_m));
    }
    Ok(())
}

pub fn phase_diagram(runner: &Runner, cfg: &PhaseConfig) -> ExpResult<SweepReport> {
    let ex = compute_exponents(2.0f64, cfg.dim)?;
    let ladder =
        cfg.p_ladder.clone().unwrap_or_else(|| if ex.p_crit.is_finite() { critical_ladder(ex.p_crit) } else { vec![1.5, 2.0, 3.0, 5.0] });
    let weight = WeightA::for_bc(cfg.bc, cfg.dim)?;
    let mut pending = Vec::new();
    for &p in &ladder {
        if !(p > 1.0) {
            return Err(Error::Hypothesis(format!("p must exceed 1 (got {p})")).into());
        }
        let base = base_spec(cfg.dim, p, cfg.bc, cfg.r_max, cfg.cells, cfg.t_max);
        if p <= ex.p_crit {
            let forcing = RadialRule::bump(cfg.bump_coeff, cfg.bump_center, cfg.bump_width);
            let desc = forcing.describe();
            let sf = sign_functional(|r| forcing.profile(r, p, cfg.dim).unwrap_or(f64::NAN), &weight, &base.grid()?)?;
            if sf.sign != Sign::Positive {
                pending.push(Pending {
                    point: PhasePoint::skipped(cfg.dim, p, cfg.bc, desc, format!("sign functional {:?} ({:e})", sf.sign, sf.value)),
                    arm: None,
                });
                continue;
            }
            let mut spec = base;
            spec.forcing = forcing;
            let mut point = PhasePoint::skipped(cfg.dim, p, cfg.bc, desc, "");
            point.skipped = false;
            point.note = "blow-up arm".into();
            pending.push(Pending { point, arm: Some(Arm { name: format!("p={p}"), spec }) });
        } else {
            let (lo, hi) = (4.0 / (p - 1.0), cfg.dim as f64 - 4.0);
            let m = cfg.m.unwrap_or(lo + (hi - lo) / 4.0);
            let desc = RadialRule::Supersolution { m, epsilon: cfg.epsilon }.describe();
            if let Err(reason) = envelope_admissible(p, cfg.dim, m, cfg.epsilon) {
                pending.push(Pending { point: PhasePoint::skipped(cfg.dim, p, cfg.bc, desc, reason), arm: None });
                continue;
            }
            let mut point = PhasePoint::skipped(cfg.dim, p, cfg.bc, desc, "");
            point.skipped = false;
            point.epsilon = Some(cfg.epsilon);
            point.note = "existence arm".into();
            pending.push(Pending { point, arm: Some(Arm { name: format!("p={p}"), spec: envelope_spec(base, m, cfg.epsilon) }) });
        }
    }
    let (points, stats) = resolve(runner, "phase", pending, cfg.spot_check_fraction)?;
    let markers = if ex.p_crit.is_finite() { vec![("p_crit".to_string(), ex.p_crit)] } else { Vec::new() };
    Ok(SweepReport { study: "phase".into(), axis: "p".into(), points, markers, stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OmegaConfig {
    pub dim: u32,
    pub p: f64,
    pub bc: BoundaryCondition,
    /// Defaults to `0.6 w_c, 0.9 w_c` below and `w_c + (N - w_c)/4, w_c + (N - w_c)/2` above.
    pub omega_ladder: Option<Vec<f64>>,
    /// Coefficient `c` of `c r^-omega` below `omega_crit`.
    pub coeff: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub cells: usize,
    pub t_max: f64,
    pub spot_check_fraction: f64,
}

impl Default for OmegaConfig {
    fn default() -> Self {
        Self {
            dim: 6,
            p: 4.0,
            bc: BoundaryCondition::Navier,
            omega_ladder: None,
            coeff: 10.0,
            epsilon: 0.01,
            r_max: 30.0,
            cells: 232,
            t_max: 2000.0,
            spot_check_fraction: SPOT_CHECK_FRACTION,
        }
    }
}

/// Envelope exponent placed midway between `max(omega - 4, 4/(p-1))` and `N - 4`.
pub fn omega_envelope_exponent(omega: f64, p: f64, dim: u32) -> Option<f64> {
    let lo = (omega - 4.0).max(4.0 / (p - 1.0));
    let hi = dim as f64 - 4.0;
    (lo < hi).then(|| (lo + hi) / 2.0)
}

pub fn second_critical_sweep(runner: &Runner, cfg: &OmegaConfig) -> ExpResult<SweepReport> {
    let ex = compute_exponents(cfg.p, cfg.dim)?;
    if !(cfg.p > ex.p_crit) {
        return Err(Error::Hypothesis(format!("omega sweep requires p > p_crit = {} (got {})", ex.p_crit, cfg.p)).into());
    }
    let wc = ex.omega_crit;
    let n = cfg.dim as f64;
    let ladder = cfg.omega_ladder.clone().unwrap_or_else(|| vec![0.6 * wc, 0.9 * wc, wc + (n - wc) / 4.0, wc + (n - wc) / 2.0]);
    let probes: Vec<f64> = (0..=400).map(|i| 10f64.powf(4.0 * i as f64 / 400.0)).collect();
    let mut pending = Vec::new();
    for &omega in &ladder {
        let base = base_spec(cfg.dim, cfg.p, cfg.bc, cfg.r_max, cfg.cells, cfg.t_max);
        let name = format!("omega={omega}");
        if omega < wc {
            let mut spec = base;
            spec.forcing = RadialRule::Power { coeff: cfg.coeff, omega };
            let mut point = PhasePoint::skipped(cfg.dim, cfg.p, cfg.bc, spec.forcing.describe(), "");
            point.skipped = false;
            point.omega = Some(omega);
            point.note = "blow-up arm".into();
            pending.push(Pending { point, arm: Some(Arm { name, spec }) });
            continue;
        }
        let Some(m) = omega_envelope_exponent(omega, cfg.p, cfg.dim) else {
            let mut point = PhasePoint::skipped(cfg.dim, cfg.p, cfg.bc, "supersolution".into(), "empty admissible m-window");
            point.omega = Some(omega);
            pending.push(Pending { point, arm: None });
            continue;
        };
        let desc = RadialRule::Supersolution { m, epsilon: cfg.epsilon }.describe();
        if let Err(reason) = envelope_admissible(cfg.p, cfg.dim, m, cfg.epsilon) {
            let mut point = PhasePoint::skipped(cfg.dim, cfg.p, cfg.bc, desc, reason);
            point.omega = Some(omega);
            pending.push(Pending { point, arm: None });
            continue;
        }
        let v = make_supersolution(cfg.p, cfg.dim, m, cfg.epsilon)?;
        let in_class = forcing_in_class(|r| v.forcing(r), omega, ClassMode::Minus, &probes)?;
        let mut point = PhasePoint::skipped(cfg.dim, cfg.p, cfg.bc, desc, "");
        point.skipped = false;
        point.omega = Some(omega);
        point.epsilon = Some(cfg.epsilon);
        point.note = format!("existence arm; forcing in I^-_omega: {in_class}");
        pending.push(Pending { point, arm: Some(Arm { name, spec: envelope_spec(base, m, cfg.epsilon) }) });
    }
    let (points, stats) = resolve(runner, "omega", pending, cfg.spot_check_fraction)?;
    Ok(SweepReport { study: "omega".into(), axis: "omega".into(), points, markers: vec![("omega_crit".into(), wc)], stats })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FujitaConfig {
    pub dim: u32,
    pub bc: BoundaryCondition,
    /// Defaults to `1 + (p_fuj - 1)/2, p_fuj, 1.1 p_fuj, 1.4 p_fuj`.
    pub p_ladder: Option<Vec<f64>>,
    pub eps_ladder: Vec<f64>,
    pub r_max: f64,
    pub cells: usize,
    pub t_max: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    pub spot_check_fraction: f64,
}

impl Default for FujitaConfig {
    fn default() -> Self {
        Self {
            dim: 4,
            bc: BoundaryCondition::KuttlerSigillito,
            p_ladder: None,
            eps_ladder: vec![1.0, 0.1],
            r_max: 60.0,
            cells: 480,
            t_max: 5000.0,
            bump_center: 3.0,
            bump_width: 1.0,
            spot_check_fraction: SPOT_CHECK_FRACTION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FujitaReport {
    pub sweep: SweepReport,
    /// `T_est` non-increasing in `eps` within every `p`; survivors count as infinite.
    pub monotone_in_eps: bool,
}

pub fn fujita_study(runner: &Runner, cfg: &FujitaConfig) -> ExpResult<FujitaReport> {
    let pf = compute_exponents(2.0f64, cfg.dim)?.p_fuj;
    let ladder = cfg.p_ladder.clone().unwrap_or_else(|| vec![1.0 + (pf - 1.0) / 2.0, pf, 1.1 * pf, 1.4 * pf]);
    let weight = WeightA::for_bc(cfg.bc, cfg.dim)?;
    let profile = RadialRule::bump(1.0, cfg.bump_center, cfg.bump_width);
    let mut pending = Vec::new();
    for &p in &ladder {
        for &eps in &cfg.eps_ladder {
            let mut spec = base_spec(cfg.dim, p, cfg.bc, cfg.r_max, cfg.cells, cfg.t_max);
            spec.initial = profile.clone();
            spec.amplitude = eps;
            spec.validate()?;
            let desc = "zero".to_string();
            let sf = sign_functional(|r| profile.profile(r, p, cfg.dim).unwrap_or(f64::NAN), &weight, &spec.grid()?)?;
            let mut point = PhasePoint::skipped(cfg.dim, p, cfg.bc, desc, "");
            point.epsilon = Some(eps);
            if sf.sign != Sign::Positive {
                point.note = format!("skipped: initial sign functional {:?}", sf.sign);
                pending.push(Pending { point, arm: None });
                continue;
            }
            point.skipped = false;
            point.note = if p > pf * (1.0 + 1e-12) { "p > p_fuj: conjectured global regime, not asserted".into() } else { String::new() };
            pending.push(Pending { point, arm: Some(Arm { name: format!("p={p},eps={eps}"), spec }) });
        }
    }
    let (points, stats) = resolve(runner, "fujita", pending, cfg.spot_check_fraction)?;
    let monotone_in_eps = ladder.iter().all(|&p| {
        let mut arm: Vec<(f64, f64)> = points
            .iter()
            .filter(|q| q.p == p && !q.skipped)
            .map(|q| (q.epsilon.unwrap_or(0.0), q.t_est.unwrap_or(f64::INFINITY)))
            .collect();
        arm.sort_by(|a, b| a.0.total_cmp(&b.0));
        arm.windows(2).all(|w| w[1].1 <= w[0].1)
    });
    Ok(FujitaReport {
        sweep: SweepReport { study: "fujita".into(), axis: "p".into(), points, markers: vec![("p_fuj".into(), pf)], stats },
        monotone_in_eps,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifespanConfig {
    pub dim: u32,
    pub p: f64,
    pub bc: BoundaryCondition,
    pub eps_ladder: Vec<f64>,
    pub r_max: f64,
    pub cells: usize,
    pub t_max: f64,
    pub dt_max: f64,
    pub bump_center: f64,
    pub bump_width: f64,
    /// Radius `R1` in the calibrated bound; lowered to `T/2` when the calibration lifespan is shorter.
    pub ikeda_r1: f64,
}

impl Default for LifespanConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            p: 1.5,
            bc: BoundaryCondition::KuttlerSigillito,
            eps_ladder: vec![0.3, 0.1, 0.03, 0.01, 0.003],
            r_max: 200.0,
            cells: 800,
            t_max: 1e6,
            dt_max: 100.0,
            bump_center: 3.0,
            bump_width: 1.0,
            ikeda_r1: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanRow {
    pub epsilon: f64,
    pub t_est: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub outcome: String,
    pub run_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkedaRow {
    pub epsilon: f64,
    pub t_est: f64,
    pub bound: f64,
    pub below: bool,
}

/// Bound with `delta = eps`, `C0` fitted at the largest `eps` and then fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IkedaComparison {
    pub c0: f64,
    pub r1: f64,
    pub rows: Vec<IkedaRow>,
    pub all_below: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanReport {
    pub dim: u32,
    pub p: f64,
    pub theta: f64,
    pub rows: Vec<LifespanRow>,
    pub fit: Option<FitResult<f64>>,
    pub fit_note: String,
    /// `-1/theta`; absent in the critical case.
    pub theoretical_slope: Option<f64>,
    pub slope_within_band: Option<bool>,
    pub ikeda: Option<IkedaComparison>,
    /// Convexity of `ln T` against `ln(1/eps)`, reported when `theta = 0`.
    pub convex: Option<bool>,
    /// Set for `N < 3`.
    pub outside_theorem: bool,
    pub stats: SweepStats,
}

/// `C0` making the bound equal `t` at amplitude `delta`.
pub fn calibrate_ikeda_c0(theta: f64, t: f64, r1: f64, delta: f64, p: f64) -> ExpResult<f64> {
    if !(t > r1) {
        return Err(Error::Domain(format!("calibration lifespan {t} must exceed R1 = {r1}")).into());
    }
    let ln2 = std::f64::consts::LN_2;
    let c0p = if theta == 0.0 {
        (t.ln() - r1.ln()) * (p - 1.0) * delta.powf(p - 1.0) / ln2
    } else {
        let e = (p - 1.0) * theta;
        (t.powf(e) - r1.powf(e)) * delta.powf(p - 1.0) / (ln2 * theta)
    };
    Ok(c0p.powf(1.0 / p))
}

const CRITICAL_THETA: f64 = 1e-12;

pub fn lifespan_study(runner: &Runner, cfg: &LifespanConfig) -> ExpResult<LifespanReport> {
    let ex = compute_exponents(cfg.p, cfg.dim)?;
    let mut template = base_spec(cfg.dim, cfg.p, cfg.bc, cfg.r_max, cfg.cells, cfg.t_max);
    template.initial = RadialRule::bump(1.0, cfg.bump_center, cfg.bump_width);
    template.dt_max = cfg.dt_max;
    template.stationary_delta = cfg.t_max;
    lifespan_preconditions(&template)?;
    let (lo, hi) = cfg.eps_ladder.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if !(lo > 0.0) || (hi / lo).log10() < 1.5 {
        return Err(Error::Hypothesis(format!("eps ladder must be positive and span >= 1.5 decades (got [{lo}, {hi}])")).into());
    }
    let arms = cfg
        .eps_ladder
        .iter()
        .map(|&eps| {
            let mut spec = template.clone();
            spec.amplitude = eps;
            Arm { name: format!("eps={eps}"), spec }
        })
        .collect();
    let results = runner.run("lifespan", arms)?;
    let mut stats = SweepStats::default();
    stats.absorb(&results);
    let rows: Vec<LifespanRow> = cfg
        .eps_ladder
        .iter()
        .zip(&results)
        .map(|(&epsilon, r)| match r.outcome.as_ref().map(|o| &o.kind) {
            Some(&OutcomeKind::BlowUp { t_est, t_lo, t_hi, .. }) => LifespanRow {
                epsilon,
                t_est: Some(t_est),
                bracket: Some((t_lo, t_hi)),
                outcome: "blowup".into(),
                run_id: Some(r.run_id.clone()),
            },
            Some(k) => LifespanRow { epsilon, t_est: None, bracket: None, outcome: k.label().into(), run_id: Some(r.run_id.clone()) },
            None => LifespanRow { epsilon, t_est: None, bracket: None, outcome: format!("{:?}", r.status), run_id: None },
        })
        .collect();
    let mut measured: Vec<(f64, f64)> = rows.iter().filter_map(|r| r.t_est.map(|t| (r.epsilon, t))).collect();
    measured.sort_by(|a, b| b.0.total_cmp(&a.0));
    let critical = ex.theta.abs() < CRITICAL_THETA;
    let theta = if critical { 0.0 } else { ex.theta };
    let theoretical_slope = (!critical).then(|| -1.0 / theta);
    let (fit, fit_note) = if measured.len() < 4 {
        (None, format!("fit refused: {} bracketed lifespans, need 4", measured.len()))
    } else {
        (Some(fit_power_law(&measured)?), String::new())
    };
    let slope_within_band = match (&fit, theoretical_slope) {
        (Some(f), Some(s)) => Some((f.slope - s).abs() <= LIFESPAN_SLOPE_BAND),
        _ => None,
    };
    let ikeda = match measured.first() {
        Some(&(eps0, t0)) => {
            let r1 = cfg.ikeda_r1.min(t0 / 2.0);
            let c0 = calibrate_ikeda_c0(theta, t0, r1, eps0, cfg.p)?;
            let rows = measured
                .iter()
                .map(|&(epsilon, t_est)| {
                    let bound = ikeda_bound(theta, c0, r1, epsilon, cfg.p)?;
                    Ok(IkedaRow { epsilon, t_est, bound, below: t_est <= bound * (1.0 + 1e-9) })
                })
                .collect::<ExpResult<Vec<_>>>()?;
            Some(IkedaComparison { c0, r1, all_below: rows.iter().all(|r| r.below), rows })
        }
        None => None,
    };
    let convex = critical.then(|| {
        let pts: Vec<(f64, f64)> = measured.iter().map(|&(e, t)| (-e.ln(), t.ln())).collect();
        let slopes: Vec<f64> = pts.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        slopes.len() >= 2 && slopes.windows(2).all(|s| s[1] > s[0])
    });
    Ok(LifespanReport {
        dim: cfg.dim,
        p: cfg.p,
        theta,
        rows,
        fit,
        fit_note,
        theoretical_slope,
        slope_within_band,
        ikeda,
        convex,
        outside_theorem: cfg.dim < 3,
        stats,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(String::new, |v| format!("{v}"))
}

fn csv_field(s: &str) -> String {
    s.replace(',', ";")
}

pub const PHASE_CSV_HEADER: &str = "study,N,p,bc,forcing,omega,epsilon,classification,t_est,envelope_ratio,truncation_checked,run_id,note";

pub fn phase_csv(report: &SweepReport) -> String {
    let mut out = String::from(PHASE_CSV_HEADER);
    out.push('\n');
    for q in &report.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            report.study,
            q.dim,
            q.p,
            q.bc,
            csv_field(&q.forcing),
            opt(q.omega),
            opt(q.epsilon),
            q.classification.label(),
            opt(q.t_est),
            opt(q.envelope_ratio),
            q.truncation_checked.map_or_else(String::new, |b| b.to_string()),
            q.run_id.clone().unwrap_or_default(),
            csv_field(&q.note)
        ));
    }
    out
}

pub const LIFESPAN_CSV_HEADER: &str = "N,p,epsilon,t_est,t_lo,t_hi,outcome,ikeda_bound,below_bound,run_id";

pub fn lifespan_csv(report: &LifespanReport) -> String {
    let mut out = String::from(LIFESPAN_CSV_HEADER);
    out.push('\n');
    for r in &report.rows {
        let ik = report.ikeda.as_ref().and_then(|c| c.rows.iter().find(|k| k.epsilon == r.epsilon));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            report.dim,
            report.p,
            r.epsilon,
            opt(r.t_est),
            opt(r.bracket.map(|b| b.0)),
            opt(r.bracket.map(|b| b.1)),
            csv_field(&r.outcome),
            opt(ik.map(|k| k.bound)),
            ik.map_or_else(String::new, |k| k.below.to_string()),
            r.run_id.clone().unwrap_or_default()
        ));
    }
    out
}

/// Standalone matplotlib script with the points inlined.
pub fn phase_plot_script(report: &SweepReport) -> ExpResult<String> {
    let data: Vec<serde_json::Value> = report
        .points
        .iter()
        .map(|q| {
            serde_json::json!({
                "x": if report.axis == "omega" { q.omega } else { Some(q.p) },
                "eps": q.epsilon,
                "class": q.classification.label(),
            })
        })
        .collect();
    Ok(format!(
        r#"import json
import matplotlib.pyplot as plt

DATA = json.loads({data:?})
MARKERS = json.loads({markers:?})
COLORS = {{"blowup": "tab:red", "bounded-under-envelope": "tab:blue", "stationary": "tab:green", "undetermined": "tab:gray"}}

fig, ax = plt.subplots(figsize=(6, 3))
for cls, color in COLORS.items():
    pts = [d for d in DATA if d["class"] == cls and d["x"] is not None]
    ax.scatter([d["x"] for d in pts], [d["eps"] or 1.0 for d in pts], c=color, label=cls)
for name, value in MARKERS:
    ax.axvline(value, ls="--", c="k")
    ax.annotate(name, (value, 1.0), rotation=90, va="bottom")
ax.set_xlabel({axis:?})
ax.set_ylabel("amplitude")
ax.set_yscale("log")
ax.set_title({title:?})
ax.legend(fontsize="small")
fig.tight_layout()
fig.savefig({out:?})
"#,
        data = serde_json::to_string(&data)?,
        markers = serde_json::to_string(&report.markers)?,
        axis = report.axis,
        title = format!("{} sweep", report.study),
        out = format!("{}.png", report.study),
    ))
}

/// Standalone matplotlib script for `ln T` against `ln eps` with the fitted line.
pub fn lifespan_plot_script(report: &LifespanReport) -> ExpResult<String> {
    let pts: Vec<(f64, f64)> = report.rows.iter().filter_map(|r| r.t_est.map(|t| (r.epsilon, t))).collect();
    let bound: Vec<(f64, f64)> = report.ikeda.iter().flat_map(|c| c.rows.iter().map(|k| (k.epsilon, k.bound))).collect();
    let fit = report.fit.map(|f| (f.slope, f.intercept));
    Ok(format!(
        r#"import json
import math
import matplotlib.pyplot as plt

POINTS = json.loads({pts:?})
BOUND = json.loads({bound:?})
FIT = json.loads({fit:?})

fig, ax = plt.subplots(figsize=(5, 4))
ax.loglog([e for e, _ in POINTS], [t for _, t in POINTS], "o", label="measured")
if BOUND:
    ax.loglog([e for e, _ in BOUND], [b for _, b in BOUND], "k--", label="calibrated bound")
if FIT:
    s, c = FIT
    xs = sorted(e for e, _ in POINTS)
    ax.loglog(xs, [math.exp(c) * x ** s for x in xs], "-", label="fit slope %.3f" % s)
ax.set_xlabel("epsilon")
ax.set_ylabel("T_est")
ax.set_title({title:?})
ax.legend()
fig.tight_layout()
fig.savefig("lifespan.png")
"#,
        pts = serde_json::to_string(&pts)?,
        bound = serde_json::to_string(&bound)?,
        fit = serde_json::to_string(&fit)?,
        title = format!("lifespan N={} p={}", report.dim, report.p),
    ))
}
