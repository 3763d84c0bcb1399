//! IMEX time integration of `u_t + bilap u = |u|^p + f(r)` on `[1, R_max]`.
//!
//! The bilaplacian with its boundary closure is implicit, the power
//! nonlinearity and forcing explicit, so each step is one banded solve.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::banded::{BandedLu, BandedMatrix};
use crate::boundary::{assemble_closure, far_field_decay_check, Closure, FarField};
use crate::closed_forms::{compute_exponents, make_supersolution, Exponents, Supersolution, WeightA};
use crate::error::{domain, Error, Result};
use crate::radial::{fit_power_law, RadialField, RadialGrid};
use crate::scalar::{int, lit, sphere_area, to_f64, Scalar};
use crate::testfn::{TestFunction, Want};
use crate::BoundaryCondition;

/// Radial profile used for forcing and initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RadialRule<T> {
    Zero,
    /// `c exp(-((r - center) / width)^2)`.
    Bump {
        coeff: T,
        center: T,
        width: T,
    },
    /// `c r^(-omega)`.
    Power {
        coeff: T,
        omega: T,
    },
    /// `c exp(-rate r)`.
    Exp {
        coeff: T,
        rate: T,
    },
    /// `v = eps r^(-m)` as a profile, `bilap v - v^p` as a forcing.
    Supersolution {
        m: T,
        epsilon: T,
    },
    /// Piecewise linear through `(r, v)`, zero outside.
    Tabulated {
        r: Vec<T>,
        v: Vec<T>,
    },
}

impl<T: Scalar> RadialRule<T> {
    pub fn bump(coeff: T, center: T, width: T) -> Self {
        RadialRule::Bump { coeff, center, width }
    }

    fn base(&self, r: T) -> Option<T> {
        Some(match self {
            RadialRule::Zero => T::zero(),
            RadialRule::Bump { coeff, center, width } => {
                let z = (r - *center) / *width;
                *coeff * (-z * z).exp()
            }
            RadialRule::Power { coeff, omega } => *coeff * r.powf(-*omega),
            RadialRule::Exp { coeff, rate } => *coeff * (-*rate * r).exp(),
            RadialRule::Supersolution { .. } => return None,
            RadialRule::Tabulated { r: xs, v } => {
                if xs.is_empty() || r < xs[0] || r > xs[xs.len() - 1] {
                    return Some(T::zero());
                }
                let k = xs.partition_point(|&x| x <= r).clamp(1, xs.len() - 1);
                let (x0, x1) = (xs[k - 1], xs[k]);
                if x1 == x0 {
                    v[k]
                } else {
                    v[k - 1] + (v[k] - v[k - 1]) * (r - x0) / (x1 - x0)
                }
            }
        })
    }

    fn envelope(&self, p: T, dim: u32) -> Result<Option<Supersolution<T>>> {
        match self {
            RadialRule::Supersolution { m, epsilon } => Ok(Some(make_supersolution(p, dim, *m, *epsilon)?)),
            _ => Ok(None),
        }
    }

    /// Value of the rule read as a profile.
    pub fn profile(&self, r: T, p: T, dim: u32) -> Result<T> {
        match self.base(r) {
            Some(v) => Ok(v),
            None => Ok(self.envelope(p, dim)?.map_or(T::zero(), |s| s.value(r))),
        }
    }

    /// Value of the rule read as a forcing.
    pub fn forcing(&self, r: T, p: T, dim: u32) -> Result<T> {
        match self.base(r) {
            Some(v) => Ok(v),
            None => Ok(self.envelope(p, dim)?.map_or(T::zero(), |s| s.forcing(r))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            RadialRule::Zero => true,
            RadialRule::Bump { coeff, .. } | RadialRule::Power { coeff, .. } | RadialRule::Exp { coeff, .. } => *coeff == T::zero(),
            RadialRule::Supersolution { .. } => false,
            RadialRule::Tabulated { v, .. } => v.iter().all(|x| *x == T::zero()),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            RadialRule::Zero => "zero".into(),
            RadialRule::Bump { coeff, center, width } => format!("bump(c={coeff},r0={center},w={width})"),
            RadialRule::Power { coeff, omega } => format!("power(c={coeff},omega={omega})"),
            RadialRule::Exp { coeff, rate } => format!("exp(c={coeff},rate={rate})"),
            RadialRule::Supersolution { m, epsilon } => format!("supersolution(m={m},eps={epsilon})"),
            RadialRule::Tabulated { r, .. } => format!("tabulated({} points)", r.len()),
        }
    }
}

/// Space-time source `g(r, t)` added to the forcing.
#[derive(Clone)]
pub struct Source<T>(pub Arc<dyn Fn(T, T) -> T + Send + Sync>);

/// Time-dependent far-field data at `R_max`.
#[derive(Clone)]
pub struct FarFieldData<T>(pub Arc<dyn Fn(T) -> FarField<T> + Send + Sync>);

impl<T> fmt::Debug for Source<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Source(..)")
    }
}

impl<T> fmt::Debug for FarFieldData<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("FarFieldData(..)")
    }
}

/// Data held at `R_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FarFieldMode {
    /// `u = lap u = 0`.
    #[default]
    Zero,
    /// `u = v`, `lap u = lap v` for the envelope `v`.
    Envelope,
}

/// Supersolution parameters whose profile must bound `u` from above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<T> {
    pub m: T,
    pub epsilon: T,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec<T> {
    pub dim: u32,
    pub p: T,
    pub bc: BoundaryCondition,
    pub r_max: T,
    pub cells: usize,
    pub forcing: RadialRule<T>,
    pub initial: RadialRule<T>,
    /// Scale `eps >= 0` applied to the initial profile.
    pub amplitude: T,
    pub t_max: T,
    pub u_blow: T,
    pub dt_min: T,
    pub dt_init: T,
    pub dt_max: T,
    pub nonlinear: bool,
    pub adaptive: bool,
    pub max_steps: usize,
    pub envelope: Option<Envelope<T>>,
    /// Snapshot spacing in time; `Some(0)` keeps every accepted step.
    pub snapshot_every: Option<T>,
    pub stationary_tol: T,
    pub stationary_delta: T,
    #[serde(default)]
    pub far_field_mode: FarFieldMode,
    #[serde(skip)]
    pub source: Option<Source<T>>,
    #[serde(skip)]
    pub far_field: Option<FarFieldData<T>>,
}

impl<T: Scalar> ProblemSpec<T> {
    /// Defaults: zero data, adaptive stepping, `U_blow = 1e8`.
    pub fn new(dim: u32, p: T, bc: BoundaryCondition, r_max: T, cells: usize) -> Self {
        Self {
            dim,
            p,
            bc,
            r_max,
            cells,
            forcing: RadialRule::Zero,
            initial: RadialRule::Zero,
            amplitude: T::one(),
            t_max: lit(100.0),
            u_blow: lit(1e8),
            dt_min: lit(1e-12),
            dt_init: lit(1e-3),
            dt_max: lit(1.0),
            nonlinear: true,
            adaptive: true,
            max_steps: 2_000_000,
            envelope: None,
            snapshot_every: None,
            stationary_tol: lit(1e-8),
            stationary_delta: T::one(),
            far_field_mode: FarFieldMode::Zero,
            source: None,
            far_field: None,
        }
    }

    pub fn exponents(&self) -> Result<Exponents<T>> {
        compute_exponents(self.p, self.dim)
    }

    pub fn grid(&self) -> Result<RadialGrid<T>> {
        RadialGrid::new(self.dim, self.r_max, self.cells)
    }

    pub fn initial_value(&self, r: T) -> Result<T> {
        Ok(self.amplitude * self.initial.profile(r, self.p, self.dim)?)
    }

    pub fn envelope_profile(&self) -> Result<Option<Supersolution<T>>> {
        self.envelope.map(|e| make_supersolution(self.p, self.dim, e.m, e.epsilon)).transpose()
    }

    /// Same problem with `h -> h/2` and `dt_min -> dt_min/4`.
    pub fn refined(&self) -> Self {
        let mut s = self.clone();
        s.cells *= 2;
        s.dt_min = s.dt_min / lit(4.0);
        s.dt_init = s.dt_init / lit(4.0);
        s
    }

    /// Same problem on `[1, 2 R_max]` at the same spacing.
    pub fn doubled_domain(&self) -> Self {
        let mut s = self.clone();
        let r = s.r_max;
        s.r_max = lit::<T>(2.0) * r - T::one();
        s.cells *= 2;
        s
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > T::one()) {
            return domain(format!("p must exceed 1 (got {})", self.p));
        }
        self.exponents()?;
        let grid = self.grid()?;
        if !(self.t_max > T::zero()) {
            return domain("t_max must be positive");
        }
        if !(self.dt_min > T::zero()) || !(self.dt_init >= self.dt_min) || !(self.dt_max >= self.dt_init) {
            return domain("time steps must satisfy 0 < dt_min <= dt_init <= dt_max");
        }
        if !(self.amplitude >= T::zero()) {
            return domain("amplitude must be non-negative");
        }
        if !(self.stationary_tol > T::zero()) || !(self.stationary_delta > T::zero()) {
            return domain("stationarity tolerance and window must be positive");
        }
        self.forcing.envelope(self.p, self.dim)?;
        self.initial.envelope(self.p, self.dim)?;
        if self.far_field_mode == FarFieldMode::Envelope && self.envelope.is_none() {
            return domain("envelope far-field data needs an envelope");
        }
        self.envelope_profile()?;
        let mut sup = T::zero();
        for r in grid.nodes() {
            let v = self.initial_value(r)?;
            if !v.is_finite() {
                return domain(format!("initial data not finite at r = {r}"));
            }
            sup = sup.max(v.abs());
        }
        if !(self.u_blow > sup) {
            return domain(format!("u_blow = {} must exceed sup|u0| = {sup}", self.u_blow));
        }
        Ok(())
    }
}

/// One-step integrator holding the closure and cached factorisations.
pub struct Stepper<T: Scalar> {
    pub grid: RadialGrid<T>,
    closure: Closure<T>,
    a: BandedMatrix<T>,
    forcing: Vec<T>,
    p: T,
    nonlinear: bool,
    source: Option<Source<T>>,
    far_field: Option<FarFieldData<T>>,
    cache: Vec<(T, BandedLu<T>)>,
}

const LU_CACHE: usize = 8;

impl<T: Scalar> Stepper<T> {
    pub fn new(spec: &ProblemSpec<T>) -> Result<Self> {
        let grid = spec.grid()?;
        let closure = assemble_closure(spec.bc, &grid, spec.dim)?;
        let (a, _) = closure.assemble();
        let first = closure.first_unknown();
        let forcing = (first..grid.cells).map(|i| spec.forcing.forcing(grid.r(i), spec.p, spec.dim)).collect::<Result<Vec<_>>>()?;
        let far_field = match (&spec.far_field, spec.far_field_mode, spec.envelope_profile()?) {
            (Some(f), _, _) => Some(f.clone()),
            (None, FarFieldMode::Envelope, Some(v)) => {
                let r = grid.r_max;
                let far = FarField { u: v.value(r), lap: v.laplacian(r) };
                Some(FarFieldData(Arc::new(move |_| far)))
            }
            _ => None,
        };
        Ok(Self {
            grid,
            closure,
            a,
            forcing,
            p: spec.p,
            nonlinear: spec.nonlinear,
            source: spec.source.clone(),
            far_field,
            cache: Vec::new(),
        })
    }

    pub fn first_unknown(&self) -> usize {
        self.closure.first_unknown()
    }

    fn far(&self, t: T) -> FarField<T> {
        self.far_field.as_ref().map_or(FarField::default(), |f| (f.0)(t))
    }

    /// Unknowns restricted from a full nodal vector.
    pub fn restrict(&self, u: &[T]) -> Vec<T> {
        u[self.first_unknown()..self.grid.cells].to_vec()
    }

    /// Full nodal vector at time `t`.
    pub fn expand(&self, x: &[T], t: T) -> Vec<T> {
        self.closure.clone().with_far_field(self.far(t)).expand(x)
    }

    fn factor(&mut self, dt: T) -> Result<&BandedLu<T>> {
        if let Some(k) = self.cache.iter().position(|(d, _)| *d == dt) {
            return Ok(&self.cache[k].1);
        }
        let mut m = self.a.clone();
        m.scale(dt);
        m.add_diagonal(T::one());
        let lu = m.factor().map_err(|e| match e {
            Error::Singular { row, .. } => Error::Singular { row, condition: f64::INFINITY },
            other => other,
        })?;
        if self.cache.len() == LU_CACHE {
            self.cache.remove(0);
        }
        self.cache.push((dt, lu));
        Ok(&self.cache.last().unwrap().1)
    }

    /// One IMEX Euler step from `x` at time `t`.
    pub fn step(&mut self, x: &[T], t: T, dt: T) -> Result<Vec<T>> {
        if !(dt > T::zero()) {
            return domain(format!("dt must be positive (got {dt})"));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return domain("state is not finite");
        }
        let first = self.first_unknown();
        let offset = self.closure.clone().with_far_field(self.far(t + dt)).apply(&vec![T::zero(); x.len()]);
        let mut rhs = Vec::with_capacity(x.len());
        for (k, &xi) in x.iter().enumerate() {
            let r = self.grid.r(first + k);
            let mut g = self.forcing[k];
            if self.nonlinear {
                g = g + xi.abs().powf(self.p);
            }
            if let Some(s) = &self.source {
                g = g + (s.0)(r, t);
            }
            rhs.push(xi + dt * (g - offset[k]));
        }
        let lu = self.factor(dt)?;
        let cond = lu.condition();
        lu.solve_in_place(&mut rhs);
        if rhs.iter().any(|v| !v.is_finite()) && cond.is_finite() {
            return Err(Error::Singular { row: 0, condition: to_f64(cond) });
        }
        Ok(rhs)
    }

    /// Weights making `diag(w) L` symmetric for the discrete Laplacian `L`.
    pub fn energy_weights(&self) -> Vec<T> {
        let g = &self.grid;
        let a: T = int(g.dim as i64 - 1);
        let half: T = lit(0.5);
        let first = self.first_unknown();
        let mut w = vec![T::one()];
        for i in first..g.cells - 1 {
            let up = T::one() + half * a * g.h / g.r(i);
            let down = T::one() - half * a * g.h / g.r(i + 1);
            let prev = *w.last().unwrap();
            w.push(prev * up / down);
        }
        w
    }
}

/// Weighted discrete `L^2` energy of the unknowns.
pub fn discrete_energy<T: Scalar>(weights: &[T], x: &[T], h: T) -> T {
    weights.iter().zip(x).fold(T::zero(), |acc, (w, v)| acc + *w * *v * *v) * h
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignPattern {
    pub positive_nodes: usize,
    pub negative_nodes: usize,
    pub sign_changes: usize,
    /// Sign of the entry of largest modulus.
    pub peak_sign: i8,
}

impl SignPattern {
    pub fn of<T: Scalar>(u: &[T]) -> Self {
        let mut pos = 0;
        let mut neg = 0;
        let mut changes = 0;
        let mut last = 0i8;
        let mut peak = (T::zero(), 0i8);
        for &v in u {
            let s = if v > T::zero() {
                pos += 1;
                1
            } else if v < T::zero() {
                neg += 1;
                -1
            } else {
                0
            };
            if s != 0 {
                if last != 0 && s != last {
                    changes += 1;
                }
                last = s;
            }
            if v.abs() > peak.0 {
                peak = (v.abs(), s);
            }
        }
        SignPattern { positive_nodes: pos, negative_nodes: neg, sign_changes: changes, peak_sign: peak.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OutcomeKind<T> {
    BlowUp {
        t_est: T,
        t_lo: T,
        t_hi: T,
        via_dt_collapse: bool,
    },
    Survived {
        t_max: T,
        sup: T,
    },
    Stationary {
        t: T,
        residual: T,
    },
    /// Numerical failure; never folded into another class.
    Invalid {
        t: T,
        reason: String,
    },
}

impl<T> OutcomeKind<T> {
    pub fn label(&self) -> &'static str {
        match self {
            OutcomeKind::BlowUp { .. } => "blowup",
            OutcomeKind::Survived { .. } => "survived",
            OutcomeKind::Stationary { .. } => "stationary",
            OutcomeKind::Invalid { .. } => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics<T> {
    pub steps: usize,
    pub rejected: usize,
    pub dt_largest: T,
    pub dt_smallest: T,
    /// `(t, E)` at snapshot times.
    pub energy: Vec<(T, T)>,
    /// Largest relative energy increase over one accepted step.
    pub energy_max_increase: T,
    pub far_field_flag: bool,
    pub far_field_ratio: T,
    /// `Some(true)` when `u <= v (1 + 10 h^2)` held at every accepted step.
    pub envelope_held: Option<bool>,
    /// Largest `u / v` seen.
    pub envelope_ratio: Option<T>,
    pub sign_pattern: Option<SignPattern>,
    pub sup_max: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot<T> {
    pub t: T,
    pub u: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome<T> {
    pub kind: OutcomeKind<T>,
    pub diagnostics: Diagnostics<T>,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot<T>>,
    #[serde(skip)]
    pub final_u: Vec<T>,
    #[serde(skip)]
    pub final_t: T,
}

fn sup<T: Scalar>(x: &[T]) -> T {
    x.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

const GROW_REJECT: f64 = 0.2;
const GROW_ACCEPT: f64 = 0.01;
const CHANGE_FLOOR: f64 = 1e-6;

pub fn simulate<T: Scalar>(spec: &ProblemSpec<T>) -> Result<SimOutcome<T>> {
    spec.validate()?;
    let mut st = Stepper::new(spec)?;
    let grid = st.grid;
    let u0: Vec<T> = grid.nodes().into_iter().map(|r| spec.initial_value(r)).collect::<Result<_>>()?;
    let mut x = st.restrict(&u0);
    let weights = st.energy_weights();
    let envelope = spec.envelope_profile()?;
    let env_values: Option<Vec<T>> = envelope.map(|v| grid.nodes().into_iter().map(|r| v.value(r)).collect());
    let env_slack = T::one() + lit::<T>(10.0) * grid.h * grid.h;

    let mut t = T::zero();
    let mut dt = spec.dt_init.min(spec.dt_max);
    let mut diag = Diagnostics {
        steps: 0,
        rejected: 0,
        dt_largest: T::zero(),
        dt_smallest: T::infinity(),
        energy: Vec::new(),
        energy_max_increase: T::neg_infinity(),
        far_field_flag: false,
        far_field_ratio: T::zero(),
        envelope_held: env_values.as_ref().map(|_| true),
        envelope_ratio: None,
        sign_pattern: None,
        sup_max: sup(&u0),
    };
    let mut energy = discrete_energy(&weights, &x, grid.h);
    diag.energy.push((t, energy));
    let mut snapshots = vec![Snapshot { t, u: u0.clone() }];
    let mut next_snap = spec.snapshot_every.map(|s| t + s);
    let mut checkpoint = (t, x.clone());
    let mut last_below = t;
    let mut crossing: Option<T> = None;
    let mut prev_sup = sup(&x);
    let blow = spec.u_blow;
    let floor: T = lit(CHANGE_FLOOR);

    let check_envelope = |u: &[T], diag: &mut Diagnostics<T>| {
        if let Some(v) = &env_values {
            let mut ratio = diag.envelope_ratio.unwrap_or(T::neg_infinity());
            for (ui, vi) in u.iter().zip(v) {
                ratio = ratio.max(*ui / *vi);
                if *ui > *vi * env_slack {
                    diag.envelope_held = Some(false);
                }
            }
            diag.envelope_ratio = Some(ratio);
        }
    };
    check_envelope(&u0, &mut diag);

    let kind = loop {
        if t >= spec.t_max {
            break OutcomeKind::Survived { t_max: t, sup: sup(&x) };
        }
        if diag.steps + diag.rejected >= spec.max_steps {
            break OutcomeKind::Invalid { t, reason: format!("step budget {} exhausted", spec.max_steps) };
        }
        let h = dt.min(spec.t_max - t);
        let trial = match st.step(&x, t, h) {
            Ok(v) => v,
            Err(Error::Singular { row, condition }) => {
                break OutcomeKind::Invalid { t, reason: format!("singular banded system at row {row}, condition estimate {condition:e}") }
            }
            Err(e) => return Err(e),
        };
        let cur = sup(&x);
        let finite = trial.iter().all(|v| v.is_finite());
        let change =
            if finite { trial.iter().zip(&x).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())) / cur.max(floor) } else { T::infinity() };
        if !finite || (spec.adaptive && change > lit(GROW_REJECT)) {
            diag.rejected += 1;
            if !spec.adaptive || h / lit(2.0) < spec.dt_min {
                let growing = cur > prev_sup || !finite;
                let rest = cur.powf(T::one() - spec.p) / (spec.p - T::one());
                if let Some(t_est) = crossing {
                    break OutcomeKind::BlowUp { t_est, t_lo: last_below, t_hi: t + rest, via_dt_collapse: true };
                }
                if growing && spec.nonlinear {
                    let t_hi = t + rest;
                    break OutcomeKind::BlowUp { t_est: t_hi, t_lo: t, t_hi, via_dt_collapse: true };
                }
                break OutcomeKind::Invalid {
                    t,
                    reason: if finite { "time step collapsed without growth".into() } else { "non-finite state".into() },
                };
            }
            dt = h / lit(2.0);
            continue;
        }

        // accepted
        prev_sup = cur;
        x = trial;
        t = t + h;
        diag.steps += 1;
        diag.dt_largest = diag.dt_largest.max(h);
        diag.dt_smallest = diag.dt_smallest.min(h);
        let e_new = discrete_energy(&weights, &x, grid.h);
        if energy > T::zero() {
            diag.energy_max_increase = diag.energy_max_increase.max((e_new - energy) / energy);
        }
        energy = e_new;
        let s = sup(&x);
        diag.sup_max = diag.sup_max.max(s);
        let full = st.expand(&x, t);
        check_envelope(&full, &mut diag);

        if let Some(ns) = next_snap {
            if t >= ns {
                snapshots.push(Snapshot { t, u: full.clone() });
                diag.energy.push((t, energy));
                let every = spec.snapshot_every.unwrap();
                next_snap = Some(if every > T::zero() { ns + every * ((t - ns) / every).floor() + every } else { t });
            }
        }

        if s <= blow {
            last_below = t;
        } else if crossing.is_none() {
            // log-linear interpolation of the crossing between the last two accepted states
            let (t0, s0) = (t - h, cur.max(floor));
            let frac = if s > s0 { ((blow / s0).ln() / (s / s0).ln()).clamp(T::zero(), T::one()) } else { T::one() };
            crossing = Some((t0 + frac * h).max(last_below + (t - last_below) * lit(1e-9)));
            diag.sign_pattern = Some(SignPattern::of(&full));
        }
        if s > lit::<T>(10.0) * blow {
            let t_est = crossing.unwrap();
            break OutcomeKind::BlowUp { t_est, t_lo: last_below, t_hi: t, via_dt_collapse: false };
        }

        if t - checkpoint.0 >= spec.stationary_delta {
            let q = x.iter().zip(&checkpoint.1).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())) / (t - checkpoint.0);
            if q < spec.stationary_tol {
                break OutcomeKind::Stationary { t, residual: q };
            }
            checkpoint = (t, x.clone());
        }

        if spec.adaptive && change < lit(GROW_ACCEPT) {
            dt = (h * lit(2.0)).min(spec.dt_max).max(dt);
        }
    };

    if let OutcomeKind::BlowUp { .. } = kind {
        if diag.sign_pattern.is_none() {
            diag.sign_pattern = Some(SignPattern::of(&st.expand(&x, t)));
        }
    }
    let full = st.expand(&x, t);
    if full.iter().all(|v| v.is_finite()) {
        let field = RadialField::new(grid, full.clone())?;
        let rep = far_field_decay_check(&field, lit(0.1))?;
        diag.far_field_flag = rep.flagged;
        diag.far_field_ratio = rep.ratio;
    }
    if snapshots.last().map(|s| s.t) != Some(t) {
        snapshots.push(Snapshot { t, u: full.clone() });
        diag.energy.push((t, energy));
    }
    if diag.dt_smallest == T::infinity() {
        diag.dt_smallest = T::zero();
    }
    if diag.energy_max_increase == T::neg_infinity() {
        diag.energy_max_increase = T::zero();
    }
    Ok(SimOutcome { kind, diagnostics: diag, snapshots, final_u: full, final_t: t })
}

/// Trapezoid weights `omega_{N-1} r^(N-1) h` on the grid nodes.
fn space_weights<T: Scalar>(grid: &RadialGrid<T>) -> Vec<T> {
    let k: T = int(grid.dim as i64 - 1);
    let area = sphere_area::<T>(grid.dim);
    let n = grid.len();
    (0..n)
        .map(|i| {
            let end = if i == 0 || i == n - 1 { lit(0.5) } else { T::one() };
            area * grid.r(i).powf(k) * grid.h * end
        })
        .collect()
}

/// Absolute residual of the weak identity
/// `int int |u|^p phi + int int f phi + int u0 phi(., 0) + int int u phi_t - int int u bilap phi`
/// over the sampled history.
pub fn weak_residual<T: Scalar>(spec: &ProblemSpec<T>, history: &[Snapshot<T>], tf: &TestFunction<T>) -> Result<T> {
    let grid = spec.grid()?;
    if history.is_empty() {
        return domain("empty history");
    }
    let big_t = tf.spec.t_big;
    if tf.support_radius() > spec.r_max {
        return domain(format!("test function support {} exceeds R_max = {}", tf.support_radius(), spec.r_max));
    }
    let t_last = history.last().unwrap().t;
    if big_t > t_last * (T::one() + lit(1e-12)) || history[0].t > T::zero() {
        return domain(format!("test function time support [0, {big_t}] exceeds the history [{}, {t_last}]", history[0].t));
    }
    let wq = space_weights(&grid);
    let nodes = grid.nodes();
    let mut psi = Vec::with_capacity(nodes.len());
    let mut bpsi = Vec::with_capacity(nodes.len());
    let mut forcing = Vec::with_capacity(nodes.len());
    for &r in &nodes {
        let s = tf.spatial(r)?;
        psi.push(s.value);
        bpsi.push(s.bilaplacian);
        forcing.push(spec.forcing.forcing(r, spec.p, spec.dim)?);
    }
    let slice = |snap: &Snapshot<T>| -> T {
        let (eta, deta) = tf.temporal(snap.t);
        let mut acc = T::zero();
        for i in 0..nodes.len() {
            if psi[i] == T::zero() && bpsi[i] == T::zero() {
                continue;
            }
            let u = snap.u[i];
            let mut g = forcing[i];
            if spec.nonlinear {
                g = g + u.abs().powf(spec.p);
            }
            if let Some(s) = &spec.source {
                g = g + (s.0)(nodes[i], snap.t);
            }
            acc = acc + wq[i] * (g * eta * psi[i] + u * deta * psi[i] - u * eta * bpsi[i]);
        }
        acc
    };
    let mut total = T::zero();
    let mut prev: Option<(T, T)> = None;
    for snap in history {
        if snap.t > big_t * (T::one() + lit(1e-12)) {
            break;
        }
        let v = slice(snap);
        if let Some((t0, v0)) = prev {
            total = total + (snap.t - t0) * (v + v0) / lit(2.0);
        }
        prev = Some((snap.t, v));
    }
    let initial: T = (0..nodes.len()).fold(T::zero(), |acc, i| {
        acc + wq[i] * spec.initial_value(nodes[i]).unwrap_or(T::nan()) * tf.eval(T::zero(), nodes[i], Want::Value).unwrap_or(T::nan())
    });
    Ok((total + initial).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sign {
    Positive,
    Negative,
    Undetermined,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignFunctional<T> {
    pub value: T,
    pub tail_bound: T,
    pub sign: Sign,
}

/// `int g A dx` over `[1, R_max]` with a tail estimate from the last decade.
pub fn sign_functional<T: Scalar>(g: impl Fn(T) -> T, weight: &WeightA, grid: &RadialGrid<T>) -> Result<SignFunctional<T>> {
    let dim = grid.dim;
    let integrand = |r: T| -> T { g(r) * weight.value(r).unwrap_or(T::nan()) };
    let r_max = grid.r_max;
    let value = crate::radial::annulus_quadrature_split(
        dim,
        integrand,
        T::one(),
        r_max,
        &[lit(2.0), lit(4.0), lit(8.0), lit(16.0), lit(32.0), lit(64.0)],
        &Default::default(),
    )?;
    if !value.is_finite() {
        return domain("sign functional integrand is not finite");
    }
    // power-law trend of r^N |g A| over the last decade
    let k: T = int(dim as i64);
    let lo = r_max / lit(10.0);
    let pts: Vec<(T, T)> = (0..=16)
        .map(|i| {
            let r = lo * (r_max / lo).powf(int::<T>(i) / lit(16.0));
            (r, (integrand(r) * r.powf(k)).abs())
        })
        .collect();
    let area = sphere_area::<T>(dim);
    // trailing zeros come from compact support or underflow
    let kept = pts.iter().rposition(|p| p.1 != T::zero()).map_or(0, |i| i + 1);
    let pts = &pts[..kept];
    let tail_bound = if pts.is_empty() {
        T::zero()
    } else if pts.len() < 3 || pts.iter().any(|p| p.1 == T::zero()) {
        // integrand vanishing inside the decade: bound by its largest sample
        area * pts.iter().fold(T::zero(), |m, p| m.max(p.1))
    } else {
        let fit = fit_power_law(pts)?;
        if fit.slope < lit(-0.1) {
            // int_R^inf c r^(s-1) dr with c r^s the last nonzero value
            area * pts.last().unwrap().1 / (-fit.slope)
        } else {
            T::infinity()
        }
    };
    let sign = if value.abs() > tail_bound && value > T::zero() {
        Sign::Positive
    } else if value.abs() > tail_bound && value < T::zero() {
        Sign::Negative
    } else {
        Sign::Undetermined
    };
    Ok(SignFunctional { value, tail_bound, sign })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifespanPoint<T> {
    pub epsilon: T,
    /// `None` when the run did not blow up before `t_max`.
    pub t_est: Option<T>,
    pub bracket: Option<(T, T)>,
    pub outcome: String,
}

/// Checks `f = 0`, `p <= p_fuj` and `int u0 A >= 0` with `u0 != 0`.
pub fn lifespan_preconditions<T: Scalar>(template: &ProblemSpec<T>) -> Result<()> {
    template.validate()?;
    if !template.forcing.is_zero() {
        return Err(Error::Hypothesis("lifespan runs require f = 0".into()));
    }
    let ex = template.exponents()?;
    if template.p > ex.p_fuj * (T::one() + lit(1e-12)) {
        return Err(Error::Hypothesis(format!("p = {} exceeds p_fuj = {}", template.p, ex.p_fuj)));
    }
    let weight = WeightA::for_bc(template.bc, template.dim)?;
    let grid = template.grid()?;
    let sf = sign_functional(|r| template.initial.profile(r, template.p, template.dim).unwrap_or(T::nan()), &weight, &grid)?;
    let nonzero = grid.nodes().into_iter().any(|r| template.initial.profile(r, template.p, template.dim).map_or(false, |v| v != T::zero()));
    if sf.sign == Sign::Negative || !nonzero {
        return Err(Error::Hypothesis(format!("initial data must satisfy int u0 A >= 0 and u0 != 0 (value {})", sf.value)));
    }
    Ok(())
}

/// One run per amplitude, in parallel.
pub fn measure_lifespan<T: Scalar>(template: &ProblemSpec<T>, epsilons: &[T]) -> Result<Vec<LifespanPoint<T>>> {
    use rayon::prelude::*;
    lifespan_preconditions(template)?;
    epsilons
        .par_iter()
        .map(|&eps| {
            let mut s = template.clone();
            s.amplitude = eps;
            let out = simulate(&s)?;
            Ok(match out.kind {
                OutcomeKind::BlowUp { t_est, t_lo, t_hi, .. } => {
                    LifespanPoint { epsilon: eps, t_est: Some(t_est), bracket: Some((t_lo, t_hi)), outcome: "blowup".into() }
                }
                k => LifespanPoint { epsilon: eps, t_est: None, bracket: None, outcome: format!("lifespan not bracketed ({})", k.label()) },
            })
        })
        .collect()
}

/// Writes `t,r,u` rows for every snapshot.
pub fn write_snapshots_csv<T: Scalar, W: std::io::Write>(
    grid: &RadialGrid<T>,
    snapshots: &[Snapshot<T>],
    mut out: W,
) -> std::io::Result<()> {
    writeln!(out, "t,r,u")?;
    for s in snapshots {
        for (i, u) in s.u.iter().enumerate() {
            writeln!(out, "{:e},{:e},{:e}", s.t, grid.r(i), u)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::BiharmonicB;
    use crate::testfn::{Argument, Family, TestFunctionSpec};
    use crate::BoundaryCondition::*;

    #[test]
    fn zero_is_a_fixed_point() {
        let mut spec = ProblemSpec::<f64>::new(3, 2.0, Navier, 20.0, 80);
        spec.t_max = 5.0;
        let mut st = Stepper::new(&spec).unwrap();
        let x = vec![0.0; st.grid.cells - st.first_unknown()];
        for dt in [1e-6, 1e-2, 10.0] {
            assert!(st.step(&x, 0.0, dt).unwrap().iter().all(|v| *v == 0.0));
        }
        let out = simulate(&spec).unwrap();
        assert!(matches!(out.kind, OutcomeKind::Stationary { .. }), "{:?}", out.kind);
        assert!(out.final_u.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = ProblemSpec::<f64>::new(3, 0.5, Navier, 20.0, 80);
        assert!(simulate(&spec).unwrap_err().to_string().contains("p must exceed 1"));
        let mut spec = ProblemSpec::<f64>::new(3, 2.0, Navier, 20.0, 80);
        spec.initial = RadialRule::bump(1.0, 3.0, 1.0);
        spec.amplitude = 1e9;
        assert!(simulate(&spec).is_err());
        let mut spec = ProblemSpec::<f64>::new(6, 4.0, Navier, 20.0, 80);
        spec.envelope = Some(Envelope { m: 3.0, epsilon: 0.01 });
        assert!(simulate(&spec).is_err());
    }

    #[test]
    fn linear_decay_energy_is_monotone() {
        for bc in [Navier, Dirichlet] {
            let mut spec = ProblemSpec::<f64>::new(3, 2.0, bc, 20.0, 120);
            spec.nonlinear = false;
            spec.initial = RadialRule::bump(1.0, 4.0, 1.5);
            spec.t_max = 2.0;
            spec.snapshot_every = Some(0.0);
            let out = simulate(&spec).unwrap();
            assert!(out.diagnostics.energy_max_increase <= 1e-13, "{bc}: {}", out.diagnostics.energy_max_increase);
            let e = &out.diagnostics.energy;
            assert!(e.last().unwrap().1 < e[0].1);
        }
    }

    #[test]
    fn manufactured_solution_converges() {
        let b = BiharmonicB::new(3).unwrap();
        let run = |cells: usize, dt: f64| -> f64 {
            let mut spec = ProblemSpec::<f64>::new(3, 2.0, Dirichlet, 6.0, cells);
            spec.nonlinear = false;
            spec.adaptive = false;
            spec.dt_init = dt;
            spec.dt_max = dt;
            spec.dt_min = dt;
            spec.t_max = 0.5;
            spec.stationary_delta = 1e9;
            spec.initial = RadialRule::Tabulated { r: vec![], v: vec![] };
            let grid = spec.grid().unwrap();
            let tab: Vec<f64> = grid.nodes().iter().map(|&r| b.eval(r).unwrap().value).collect();
            spec.initial = RadialRule::Tabulated { r: grid.nodes(), v: tab };
            spec.source = Some(Source(Arc::new(move |r: f64, t: f64| -(-t).exp() * BiharmonicB::new(3).unwrap().eval(r).unwrap().value)));
            spec.far_field = Some(FarFieldData(Arc::new(move |t: f64| {
                let v = BiharmonicB::new(3).unwrap().eval(6.0).unwrap();
                FarField { u: (-t).exp() * v.value, lap: (-t).exp() * v.laplacian }
            })));
            let out = simulate(&spec).unwrap();
            assert!(matches!(out.kind, OutcomeKind::Survived { .. }));
            let t = out.final_t;
            grid.nodes().iter().zip(&out.final_u).map(|(&r, u)| (u - (-t).exp() * b.eval(r).unwrap().value).abs()).fold(0.0, f64::max)
        };
        let e0 = run(40, 0.02);
        let e1 = run(80, 0.005);
        let e2 = run(160, 0.00125);
        assert!(e0 / e1 > 3.0 && e1 / e2 > 3.0, "{e0} {e1} {e2}");
    }

    #[test]
    fn sign_functional_examples() {
        let grid = RadialGrid::<f64>::new(3, 60.0, 64).unwrap();
        let h = WeightA::for_bc(Navier, 3).unwrap();
        let one = WeightA::Unit;
        assert_eq!(sign_functional(|r: f64| (-r).exp(), &h, &grid).unwrap().sign, Sign::Positive);
        assert_eq!(sign_functional(|r: f64| -(-r).exp(), &h, &grid).unwrap().sign, Sign::Negative);
        assert_eq!(sign_functional(|r: f64| (-r).exp(), &one, &grid).unwrap().sign, Sign::Positive);
        let bump = |r: f64| (-(r - 2.0) * (r - 2.0)).exp();
        let sf = sign_functional(bump, &h, &grid).unwrap();
        assert_eq!(sf.sign, Sign::Positive);
        assert!(sf.tail_bound < 1e-300);
        // slowly decaying: tail dominates
        assert_eq!(sign_functional(|r: f64| r.powf(-2.0), &one, &grid).unwrap().sign, Sign::Undetermined);
    }

    #[test]
    fn weak_residual_vanishes_for_zero() {
        let mut spec = ProblemSpec::<f64>::new(3, 2.0, Navier, 24.0, 96);
        spec.t_max = 2.0;
        spec.snapshot_every = Some(0.0);
        spec.stationary_delta = 1e9;
        let out = simulate(&spec).unwrap();
        let tf = TestFunctionSpec::new(Family::Phi1, Argument::Standard, 3, 2.0, 5.0, 1.0).unwrap().with_time(1.5).build().unwrap();
        assert_eq!(weak_residual(&spec, &out.snapshots, &tf).unwrap(), 0.0);
        let wide = TestFunctionSpec::new(Family::Phi1, Argument::Standard, 3, 2.0, 15.0, 1.0).unwrap().with_time(1.5).build().unwrap();
        assert!(weak_residual(&spec, &out.snapshots, &wide).is_err());
    }

    #[test]
    fn sign_pattern_counts() {
        let s = SignPattern::of(&[0.0, 1.0, 2.0, -3.0, 0.0, 1.0]);
        assert_eq!((s.positive_nodes, s.negative_nodes, s.sign_changes, s.peak_sign), (3, 1, 2, -1));
    }
}
