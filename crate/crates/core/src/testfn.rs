//! Smooth cut-offs, the three weighted test-function families and the
//! quadrature machinery that measures their scaling in `R` and `T`.
//!
//! Cut-off powers `K^l` are handled through the derivatives of `ln K`, so
//! quotients such as `bilap(K^l) / K^l` stay finite where `K^l` itself
//! underflows.

use crate::closed_forms::{compute_exponents, BiharmonicB, HarmonicH, WeightA};
use crate::error::{domain, Error, Result};
use crate::radial::{annulus_quadrature_log, annulus_quadrature_with, fit_power_law, simpson, FitResult, QuadOptions};
use crate::scalar::{int, lit, Scalar};

/// Value and first four derivatives.
pub type Jet<T> = [T; 5];

/// Faa di Bruno: derivatives of `outer(inner(x))` given the outer jet at
/// `inner(x)` and the inner jet at `x`.
pub fn compose<T: Scalar>(outer: &Jet<T>, inner: &Jet<T>) -> Jet<T> {
    let [_, i1, i2, i3, i4] = *inner;
    let [f0, f1, f2, f3, f4] = *outer;
    let three: T = lit(3.0);
    let four: T = lit(4.0);
    let six: T = lit(6.0);
    [
        f0,
        f1 * i1,
        f1 * i2 + f2 * i1 * i1,
        f1 * i3 + three * f2 * i1 * i2 + f3 * i1 * i1 * i1,
        f1 * i4 + f2 * (four * i1 * i3 + three * i2 * i2) + six * f3 * i1 * i1 * i2 + f4 * i1 * i1 * i1 * i1,
    ]
}

/// Complete Bell polynomials `B_1..B_4`: derivatives of `exp(g)` divided by `exp(g)`.
pub fn bell<T: Scalar>(g: &Jet<T>) -> [T; 4] {
    let [_, a1, a2, a3, a4] = *g;
    let three: T = lit(3.0);
    let four: T = lit(4.0);
    let six: T = lit(6.0);
    [a1, a1 * a1 + a2, a1 * a1 * a1 + three * a1 * a2 + a3, a1 * a1 * a1 * a1 + six * a1 * a1 * a2 + four * a1 * a3 + three * a2 * a2 + a4]
}

/// `[lap g, (lap g)', bilap g]` of a radial function from its jet.
pub fn radial_operators<T: Scalar>(g: &Jet<T>, r: T, dim: u32) -> [T; 3] {
    let a: T = int(dim as i64 - 1);
    let two: T = lit(2.0);
    let [_, g1, g2, g3, g4] = *g;
    let lap = g2 + a * g1 / r;
    let dlap = g3 + a * g2 / r - a * g1 / (r * r);
    let bilap = g4 + two * a * g3 / r + a * (a - two) * (g2 / (r * r) - g1 / (r * r * r));
    [lap, dlap, bilap]
}

#[inline]
fn sigmoid<T: Scalar>(y: T) -> T {
    if y >= T::zero() {
        T::one() / (T::one() + (-y).exp())
    } else {
        let e = y.exp();
        e / (T::one() + e)
    }
}

#[inline]
fn log_sigmoid<T: Scalar>(y: T) -> T {
    // -softplus(-y)
    let z = -y;
    -(z.max(T::zero()) + (-z.abs()).exp().ln_1p())
}

/// Jet of `ln D(x)` for the decreasing profile `D(x) = sigma(1/x - 1/(1-x))` on `0 < x < 1`.
fn log_profile_jet<T: Scalar>(x: T) -> Jet<T> {
    let one = T::one();
    let u = one - x;
    let y = one / x - one / u;
    let x2 = x * x;
    let u2 = u * u;
    let yj = [
        y,
        -(one / x2 + one / u2),
        lit::<T>(2.0) * (one / (x2 * x) - one / (u2 * u)),
        lit::<T>(-6.0) * (one / (x2 * x2) + one / (u2 * u2)),
        lit::<T>(24.0) * (one / (x2 * x2 * x) - one / (u2 * u2 * u)),
    ];
    let s = sigmoid(y);
    let t = sigmoid(-y);
    let st = s * t;
    let fj = [log_sigmoid(y), t, -st, -st * (one - lit::<T>(2.0) * s), -st * (one - lit::<T>(6.0) * st)];
    compose(&fj, &yj)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CutoffKind {
    /// 1 on `[0, 1/2]`, 0 from 1 on.
    Zeta,
    /// 1 on `[0, 1]`, 0 from 2 on.
    Xi,
    /// 1 on `[-1, 0]`, 0 from 1 on.
    F,
}

/// Where a cut-off sits relative to its transition window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Region<T> {
    Plateau,
    /// Inside the window, carrying the jet of `ln K` in `s`.
    Transition(Jet<T>),
    Outside,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffSpec<T> {
    pub kind: CutoffKind,
    pub ell: u32,
    /// Fraction of the window by which the plateau end is moved right.
    pub shift: T,
}

impl<T: Scalar> CutoffSpec<T> {
    pub fn new(kind: CutoffKind, ell: u32) -> Self {
        Self { kind, ell, shift: T::zero() }
    }

    pub fn shifted(mut self, shift: T) -> Self {
        self.shift = shift;
        self
    }

    /// Transition window `[a, b]`.
    pub fn window(&self) -> (T, T) {
        let (a, b): (T, T) = match self.kind {
            CutoffKind::Zeta => (lit(0.5), T::one()),
            CutoffKind::Xi => (T::one(), lit(2.0)),
            CutoffKind::F => (T::zero(), T::one()),
        };
        (a + self.shift * (b - a), b)
    }

    pub fn region(&self, s: T) -> Region<T> {
        let (a, b) = self.window();
        if s <= a {
            return Region::Plateau;
        }
        if s >= b {
            return Region::Outside;
        }
        let w = b - a;
        let x = (s - a) / w;
        let inner = [x, T::one() / w, T::zero(), T::zero(), T::zero()];
        Region::Transition(compose(&log_profile_jet(x), &inner))
    }

    /// Profile value (`order = 0`) or derivative up to order 4 at `s`.
    pub fn eval(&self, s: T, order: usize) -> T {
        match self.region(s) {
            Region::Plateau => {
                if order == 0 {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Region::Outside => T::zero(),
            Region::Transition(lj) => {
                let k = lj[0].exp();
                if order == 0 {
                    k
                } else {
                    let b = bell(&lj);
                    k * b[order.min(4) - 1]
                }
            }
        }
    }

    /// Max of `|K^(k)|`, `k = 0..=4`, from dense sampling of the window.
    pub fn derivative_bounds(&self, samples: usize) -> [T; 5] {
        let (a, b) = self.window();
        let mut out = [T::zero(); 5];
        for i in 1..samples {
            let s = a + (b - a) * int::<T>(i as i64) / int::<T>(samples as i64);
            for (k, slot) in out.iter_mut().enumerate() {
                *slot = slot.max(self.eval(s, k).abs());
            }
        }
        out
    }
}

pub fn eval_cutoff<T: Scalar>(c: &CutoffSpec<T>, s: T, order: usize) -> Result<T> {
    if order > 4 {
        return domain(format!("derivative order {order} exceeds 4"));
    }
    Ok(c.eval(s, order))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// Harmonic weight.
    Phi1,
    /// Biharmonic weight.
    Phi2,
    /// Unit weight.
    Phi3,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Phi1 => "phi1",
            Family::Phi2 => "phi2",
            Family::Phi3 => "phi3",
        }
    }

    pub fn for_bc(bc: crate::BoundaryCondition) -> Self {
        use crate::BoundaryCondition::*;
        match bc {
            Navier | Neumann => Family::Phi1,
            Dirichlet => Family::Phi2,
            DirichletNavier | KuttlerSigillito | NeumannNavier => Family::Phi3,
        }
    }

    pub fn weight(self, dim: u32) -> Result<WeightA> {
        Ok(match self {
            Family::Phi1 => WeightA::Harmonic(HarmonicH::new(dim)?),
            Family::Phi2 => WeightA::Biharmonic(BiharmonicB::new(dim)?),
            Family::Phi3 => WeightA::Unit,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Argument {
    /// `xi^l(r / R)`.
    Standard,
    /// `F^l(ln(r / sqrt R) / ln sqrt R)`.
    Logarithmic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunctionSpec<T> {
    pub family: Family,
    pub argument: Argument,
    pub r_big: T,
    pub t_big: T,
    pub ell: u32,
    pub dim: u32,
    pub p: T,
    /// Plateau shift applied to both cut-offs.
    pub shift: T,
}

impl<T: Scalar> TestFunctionSpec<T> {
    /// Family member with `T = R^j` and the default cut-off power.
    pub fn new(family: Family, argument: Argument, dim: u32, p: T, r_big: T, j: T) -> Result<Self> {
        let ex = compute_exponents(p, dim)?;
        if !(r_big > lit(4.0)) {
            return domain(format!("R must exceed 4 (got {r_big})"));
        }
        Ok(Self { family, argument, r_big, t_big: r_big.powf(j), ell: ex.default_ell(), dim, p, shift: T::zero() })
    }

    pub fn with_time(mut self, t_big: T) -> Self {
        self.t_big = t_big;
        self
    }

    pub fn with_ell(mut self, ell: u32) -> Self {
        self.ell = ell;
        self
    }

    pub fn with_shift(mut self, shift: T) -> Self {
        self.shift = shift;
        self
    }

    pub fn build(&self) -> Result<TestFunction<T>> {
        let weight = self.family.weight(self.dim)?;
        let kind = match self.argument {
            Argument::Standard => CutoffKind::Xi,
            Argument::Logarithmic => CutoffKind::F,
        };
        Ok(TestFunction {
            spec: *self,
            weight,
            space: CutoffSpec::new(kind, self.ell).shifted(self.shift),
            time: CutoffSpec::new(CutoffKind::Zeta, self.ell).shifted(self.shift),
        })
    }
}

/// Spatial part `W K^l` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialSample<T> {
    pub weight: T,
    /// `K^l`.
    pub cutoff: T,
    pub value: T,
    pub bilaplacian: T,
    /// `bilap(W K^l) / K^l`; finite wherever the cut-off is active.
    pub reduced_bilaplacian: T,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Want {
    Value,
    Dt,
    Bilaplacian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestFunction<T> {
    pub spec: TestFunctionSpec<T>,
    pub weight: WeightA,
    pub space: CutoffSpec<T>,
    pub time: CutoffSpec<T>,
}

/// Radial `bilap(f g)` with every cross term, in terms of the jet of `f`
/// given as `[f, f', f'', lap f, (lap f)', bilap f]` and the jet of `g`.
pub fn bilaplacian_product<T: Scalar>(f: &[T; 6], g: &Jet<T>, r: T, dim: u32) -> T {
    let a: T = int(dim as i64 - 1);
    let [gl, gdl, gbl] = radial_operators(g, r, dim);
    let [fv, f1, f2, fl, fdl, fbl] = *f;
    let two: T = lit(2.0);
    let four: T = lit(4.0);
    let hessian = f2 * g[2] + a * f1 * g[1] / (r * r);
    fv * gbl + g[0] * fbl + two * fl * gl + four * f1 * gdl + four * g[1] * fdl + four * hessian
}

/// The one-dimensional Leibniz pattern `f bilap g + 4 grad(lap f).grad g + 6 lap f lap g
/// + 4 grad f.grad(lap g) + g bilap f`, which drops the Hessian contraction.
pub fn bilaplacian_leibniz_pattern<T: Scalar>(f: &[T; 6], g: &Jet<T>, r: T, dim: u32) -> T {
    let [gl, gdl, gbl] = radial_operators(g, r, dim);
    let [fv, f1, _, fl, fdl, fbl] = *f;
    fv * gbl + lit::<T>(4.0) * fdl * g[1] + lit::<T>(6.0) * fl * gl + lit::<T>(4.0) * f1 * gdl + g[0] * fbl
}

impl<T: Scalar> TestFunction<T> {
    /// Jet of the spatial argument `s(r)`.
    fn arg_jet(&self, r: T) -> Jet<T> {
        let rb = self.spec.r_big;
        match self.spec.argument {
            Argument::Standard => [r / rb, T::one() / rb, T::zero(), T::zero(), T::zero()],
            Argument::Logarithmic => {
                let l = rb.sqrt().ln();
                let r2 = r * r;
                [
                    r.ln() / l - T::one(),
                    T::one() / (r * l),
                    -T::one() / (r2 * l),
                    lit::<T>(2.0) / (r2 * r * l),
                    lit::<T>(-6.0) / (r2 * r2 * l),
                ]
            }
        }
    }

    /// Active annulus of the spatial cut-off.
    pub fn active_annulus(&self) -> (T, T) {
        let (a, b) = self.space.window();
        match self.spec.argument {
            Argument::Standard => (a * self.spec.r_big, b * self.spec.r_big),
            Argument::Logarithmic => {
                let l = self.spec.r_big.sqrt().ln();
                (((a + T::one()) * l).exp(), ((b + T::one()) * l).exp())
            }
        }
    }

    /// Outer edge of the spatial support.
    pub fn support_radius(&self) -> T {
        self.active_annulus().1
    }

    /// Jet of `K^l` divided by `K^l`, and `K^l`, at radius `r`.
    fn cutoff_power(&self, r: T) -> (T, Jet<T>) {
        let ell: T = int(self.spec.ell as i64);
        let s = self.arg_jet(r);
        match self.space.region(s[0]) {
            Region::Plateau => (T::one(), [T::one(), T::zero(), T::zero(), T::zero(), T::zero()]),
            Region::Outside => (T::zero(), [T::one(), T::zero(), T::zero(), T::zero(), T::zero()]),
            Region::Transition(lj) => {
                let lr = compose(&lj, &s);
                let scaled = [ell * lr[0], ell * lr[1], ell * lr[2], ell * lr[3], ell * lr[4]];
                let b = bell(&scaled);
                ((ell * lr[0]).exp(), [T::one(), b[0], b[1], b[2], b[3]])
            }
        }
    }

    pub fn spatial(&self, r: T) -> Result<SpatialSample<T>> {
        let w = self.weight.jet(r)?;
        let (kl, g) = self.cutoff_power(r);
        let reduced = bilaplacian_product(&w, &g, r, self.spec.dim);
        Ok(SpatialSample {
            weight: w[0],
            cutoff: kl,
            value: w[0] * kl,
            bilaplacian: if kl == T::zero() { T::zero() } else { reduced * kl },
            reduced_bilaplacian: reduced,
        })
    }

    /// `eta(t) = zeta^l(t / T)` and its derivative.
    pub fn temporal(&self, t: T) -> (T, T) {
        let tb = self.spec.t_big;
        let ell: T = int(self.spec.ell as i64);
        match self.time.region(t / tb) {
            Region::Plateau => (T::one(), T::zero()),
            Region::Outside => (T::zero(), T::zero()),
            Region::Transition(lj) => {
                let eta = (ell * lj[0]).exp();
                (eta, eta * ell * lj[1] / tb)
            }
        }
    }

    /// Logarithmic derivative `eta'/eta` on the active interval.
    fn temporal_log_rate(&self, t: T) -> T {
        let tb = self.spec.t_big;
        let ell: T = int(self.spec.ell as i64);
        match self.time.region(t / tb) {
            Region::Transition(lj) => ell * lj[1] / tb,
            _ => T::zero(),
        }
    }

    pub fn eval(&self, t: T, r: T, want: Want) -> Result<T> {
        let (eta, deta) = self.temporal(t);
        Ok(match want {
            Want::Value => eta * self.spatial(r)?.value,
            Want::Dt => deta * self.spatial(r)?.value,
            Want::Bilaplacian => eta * self.spatial(r)?.bilaplacian,
        })
    }

    /// `int_0^T eta^(-1/(p-1)) |eta'|^p' dt`.
    pub fn time_factor(&self, opts: &QuadOptions<T>) -> Result<T> {
        let pc = self.spec.p / (self.spec.p - T::one());
        let (a, b) = self.time.window();
        let tb = self.spec.t_big;
        simpson(
            |t| {
                let (eta, _) = self.temporal(t);
                if eta == T::zero() {
                    T::zero()
                } else {
                    eta * self.temporal_log_rate(t).abs().powf(pc)
                }
            },
            a * tb,
            b * tb,
            opts,
        )
    }

    /// `int_0^T eta dt`.
    pub fn eta_integral(&self, opts: &QuadOptions<T>) -> Result<T> {
        let (a, b) = self.time.window();
        let tb = self.spec.t_big;
        Ok(a * tb + simpson(|t| self.temporal(t).0, a * tb, b * tb, opts)?)
    }

    fn split_integral(&self, g: impl Fn(T) -> T, opts: &QuadOptions<T>) -> Result<T> {
        let (lo, hi) = self.active_annulus();
        let dim = self.spec.dim;
        let inner = if lo > T::one() {
            if lo / T::one() > lit(8.0) {
                annulus_quadrature_log(dim, &g, T::one(), lo, opts)?
            } else {
                annulus_quadrature_with(dim, &g, T::one(), lo, opts)?
            }
        } else {
            T::zero()
        };
        let outer = if hi / lo > lit(8.0) {
            annulus_quadrature_log(dim, &g, lo.max(T::one()), hi, opts)?
        } else {
            annulus_quadrature_with(dim, &g, lo.max(T::one()), hi, opts)?
        };
        Ok(inner + outer)
    }

    /// `int psi dx` over the spatial support.
    pub fn space_mass(&self, opts: &QuadOptions<T>) -> Result<T> {
        self.split_integral(|r| self.spatial(r).map(|s| s.value).unwrap_or(T::nan()), opts)
    }

    /// `int psi^(-1/(p-1)) |bilap psi|^p' dx` with `0 * 0^(-1/(p-1)) := 0`.
    pub fn space_bilap_factor(&self, opts: &QuadOptions<T>) -> Result<T> {
        let p = self.spec.p;
        let pc = p / (p - T::one());
        let expo = -T::one() / (p - T::one());
        let (lo, hi) = self.active_annulus();
        let g = |r: T| -> T {
            let s = match self.spatial(r) {
                Ok(s) => s,
                Err(_) => return T::nan(),
            };
            if s.cutoff == T::zero() || s.reduced_bilaplacian == T::zero() {
                return T::zero();
            }
            // K^l W^(-1/(p-1)) |rho|^p', since p' - 1/(p-1) = 1.
            s.cutoff * s.weight.powf(expo) * s.reduced_bilaplacian.abs().powf(pc)
        };
        let dim = self.spec.dim;
        let lo = lo.max(T::one());
        if hi / lo > lit(8.0) {
            annulus_quadrature_log(dim, g, lo, hi, opts)
        } else {
            annulus_quadrature_with(dim, g, lo, hi, opts)
        }
    }

    /// `int f A K^l dx` over the spatial support.
    pub fn forcing_space_factor(&self, f: impl Fn(T) -> T, opts: &QuadOptions<T>) -> Result<T> {
        self.split_integral(|r| f(r) * self.spatial(r).map(|s| s.value).unwrap_or(T::nan()), opts)
    }
}

pub fn eval_testfn<T: Scalar>(tf: &TestFunction<T>, t: T, r: T, want: Want) -> Result<T> {
    if t < T::zero() || r < T::one() {
        return domain(format!("(t, r) = ({t}, {r}) outside the space-time box"));
    }
    tf.eval(t, r, want)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Which {
    TimeFactor,
    BilapFactor,
    ForcingFactor,
    SpaceMass,
}

/// Reference forcing used by the forcing reduction check.
pub fn reference_forcing<T: Scalar>(r: T) -> T {
    (-r).exp()
}

/// Full space-time integral of one separable lemma quantity.
pub fn lemma_integral<T: Scalar>(tf: &TestFunction<T>, which: Which) -> Result<T> {
    let opts = QuadOptions::default();
    match which {
        Which::TimeFactor => Ok(tf.time_factor(&opts)? * tf.space_mass(&opts)?),
        Which::BilapFactor => Ok(tf.eta_integral(&opts)? * tf.space_bilap_factor(&opts)?),
        Which::ForcingFactor => Ok(tf.eta_integral(&opts)? * tf.forcing_space_factor(reference_forcing, &opts)?),
        Which::SpaceMass => tf.space_mass(&opts),
    }
}

/// Which dimensions a catalog entry covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DimRule {
    Exactly(u32),
    AtLeast(u32),
    ThreeOrAtLeastFive,
    /// `N >= 5` with `p = N/(N-4)`.
    Critical,
}

impl DimRule {
    fn admits<T: Scalar>(self, dim: u32, p: T) -> std::result::Result<(), String> {
        match self {
            DimRule::Exactly(n) if dim != n => Err(format!("requires N = {n}")),
            DimRule::AtLeast(n) if dim < n => Err(format!("requires N >= {n}")),
            DimRule::ThreeOrAtLeastFive if !(dim == 3 || dim >= 5) => Err("requires N = 3 or N >= 5".into()),
            DimRule::Critical => {
                if dim < 5 {
                    return Err("requires N >= 5".into());
                }
                let pc = dim as f64 / (dim as f64 - 4.0);
                let pv = p.to_f64().unwrap_or(f64::NAN);
                if (pv - pc).abs() > 1e-9 * pc {
                    return Err(format!("requires p = N/(N-4) = {pc}"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogBase {
    LnR,
    LnSqrtR,
}

/// One entry of the estimate catalog: the integral, its admissible
/// parameters and the predicted growth `R^alpha (log)^beta`.
#[derive(Debug, Clone, Copy)]
pub struct LemmaTemplate {
    pub id: &'static str,
    pub family: Family,
    pub argument: Argument,
    pub which: Which,
    pub dims: DimRule,
    pub exponent: fn(f64, f64) -> f64,
    pub log_power: fn(f64, f64) -> f64,
    pub log_base: LogBase,
}

fn pc(p: f64) -> f64 {
    p / (p - 1.0)
}

/// The catalog. Exponents are functions of `(N, p)`.
pub fn lemma_catalog() -> Vec<LemmaTemplate> {
    use Argument::*;
    use Family::*;
    use Which::*;
    let t = |id, family, argument, which, dims, exponent: fn(f64, f64) -> f64, log_power: fn(f64, f64) -> f64| LemmaTemplate {
        id,
        family,
        argument,
        which,
        dims,
        exponent,
        log_power,
        log_base: LogBase::LnR,
    };
    vec![
        t("phi1-time-n2", Phi1, Standard, TimeFactor, DimRule::Exactly(2), |_, _| 2.0, |_, _| 1.0),
        t("phi1-time", Phi1, Standard, TimeFactor, DimRule::AtLeast(3), |n, _| n, |_, _| 0.0),
        t("phi1-bilap-n2", Phi1, Standard, BilapFactor, DimRule::Exactly(2), |_, p| -2.0 * (p + 1.0) / (p - 1.0), |_, p| pc(p)),
        t("phi1-bilap", Phi1, Standard, BilapFactor, DimRule::AtLeast(3), |n, p| n - 4.0 * pc(p), |_, _| 0.0),
        t("phi1-log-time", Phi1, Logarithmic, TimeFactor, DimRule::Critical, |n, _| n, |_, _| 0.0),
        t("phi1-log-bilap", Phi1, Logarithmic, BilapFactor, DimRule::Critical, |_, _| 0.0, |n, _| -n / 4.0),
        t("phi2-time-n2", Phi2, Standard, TimeFactor, DimRule::Exactly(2), |_, _| 4.0, |_, _| 1.0),
        t("phi2-time-n4", Phi2, Standard, TimeFactor, DimRule::Exactly(4), |_, _| 4.0, |_, _| 1.0),
        t("phi2-time", Phi2, Standard, TimeFactor, DimRule::ThreeOrAtLeastFive, |n, _| n, |_, _| 0.0),
        t("phi2-bilap-n2", Phi2, Standard, BilapFactor, DimRule::Exactly(2), |_, p| -2.0 / (p - 1.0), |_, p| pc(p)),
        t("phi2-bilap-n4", Phi2, Standard, BilapFactor, DimRule::Exactly(4), |_, p| -4.0 / (p - 1.0), |_, p| pc(p)),
        t("phi2-bilap", Phi2, Standard, BilapFactor, DimRule::ThreeOrAtLeastFive, |n, p| n - 4.0 * pc(p), |_, _| 0.0),
        t("phi2-log-time", Phi2, Logarithmic, TimeFactor, DimRule::Critical, |n, _| n, |_, _| 0.0),
        t("phi2-log-bilap", Phi2, Logarithmic, BilapFactor, DimRule::Critical, |_, _| 2.0, |n, _| -n / 4.0),
        t("phi3-time", Phi3, Standard, TimeFactor, DimRule::AtLeast(2), |n, _| n, |_, _| 0.0),
        t("phi3-bilap", Phi3, Standard, BilapFactor, DimRule::AtLeast(2), |n, p| n - 4.0 * pc(p), |_, _| 0.0),
        t("phi3-log-time", Phi3, Logarithmic, TimeFactor, DimRule::Critical, |n, _| n, |_, _| 0.0),
        LemmaTemplate {
            id: "phi3-log-bilap",
            family: Phi3,
            argument: Logarithmic,
            which: BilapFactor,
            dims: DimRule::Critical,
            exponent: |_, _| 0.0,
            log_power: |n, _| 1.0 - n / 4.0,
            log_base: LogBase::LnSqrtR,
        },
        t("forcing", Phi1, Standard, ForcingFactor, DimRule::AtLeast(2), |_, _| 0.0, |_, _| 0.0),
    ]
}

pub fn find_lemma(id: &str) -> Option<LemmaTemplate> {
    lemma_catalog().into_iter().find(|l| l.id == id)
}

/// Measured ladder and verdict for one catalog entry.
#[derive(Debug, Clone)]
pub struct LemmaCheck {
    pub id: &'static str,
    pub dim: u32,
    pub p: f64,
    pub ell: u32,
    /// Set when the requested `l` was below `ceil(4p') + 1` and was raised.
    pub ell_requested: u32,
    pub j: f64,
    /// `(R, full integral)`.
    pub rows: Vec<(f64, f64)>,
    /// `(R, integral / (T-power * log factor))`, the fitted series.
    pub reduced: Vec<(f64, f64)>,
    pub predicted_exponent: f64,
    pub log_power: f64,
    pub fit: FitResult<f64>,
    /// `max / min` of `reduced / R^predicted` over the ladder.
    pub ratio_spread: f64,
    pub pass: bool,
    /// Fitted exponent does not exceed the prediction by more than the tolerance.
    pub upper_bound_ok: bool,
}

pub const EXPONENT_TOL: f64 = 0.2;
pub const RATIO_SPREAD_MAX: f64 = 3.0;
pub const DEFAULT_LADDER: [f64; 5] = [16.0, 32.0, 64.0, 128.0, 256.0];
/// Ladder for estimates carrying logarithms, whose asymptotics live in `ln R`.
pub const LOG_LADDER: [f64; 6] = [1e4, 1e8, 1e12, 1e16, 1e20, 1e24];

impl LemmaTemplate {
    pub fn has_logarithm(&self, dim: u32, p: f64) -> bool {
        self.argument == Argument::Logarithmic || (self.log_power)(dim as f64, p) != 0.0
    }

    pub fn default_ladder(&self, dim: u32, p: f64) -> &'static [f64] {
        if self.has_logarithm(dim, p) {
            &LOG_LADDER
        } else {
            &DEFAULT_LADDER
        }
    }
}

/// Parameters of one lemma verification.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaParams {
    pub dim: u32,
    pub p: f64,
    pub ell: Option<u32>,
    pub j: f64,
    pub shift: f64,
}

impl LemmaParams {
    pub fn new(dim: u32, p: f64) -> Self {
        Self { dim, p, ell: None, j: 5.0, shift: 0.0 }
    }
}

pub fn verify_lemma(template: &LemmaTemplate, params: &LemmaParams, ladder: &[f64]) -> Result<LemmaCheck> {
    let LemmaParams { dim, p, j, shift, .. } = *params;
    template.dims.admits(dim, p).map_err(|h| Error::Hypothesis(format!("{}: {h} (got N = {dim}, p = {p})", template.id)))?;
    let ex = compute_exponents(p, dim)?;
    if ladder.len() < 4 {
        return Err(Error::Hypothesis(format!("ladder needs at least 4 radii (got {})", ladder.len())));
    }
    let lo = ladder.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ladder.iter().cloned().fold(0.0, f64::max);
    if (hi / lo).log10() < 1.2 - 1e-9 {
        return Err(Error::Hypothesis(format!("ladder spans {:.2} decades, need 1.2", (hi / lo).log10())));
    }
    let min_ell = ex.default_ell();
    let ell_requested = params.ell.unwrap_or(min_ell);
    let ell = ell_requested.max(min_ell);
    let pcj = pc(p);
    let mut rows = Vec::with_capacity(ladder.len());
    let mut reduced = Vec::with_capacity(ladder.len());
    let log_power = (template.log_power)(dim as f64, p);
    let predicted = (template.exponent)(dim as f64, p);
    let results: Vec<Result<(f64, f64, f64)>> = {
        use rayon::prelude::*;
        ladder
            .par_iter()
            .map(|&r| {
                let tf =
                    TestFunctionSpec::new(template.family, template.argument, dim, p, r, j)?.with_ell(ell).with_shift(shift).build()?;
                let value = lemma_integral(&tf, template.which)?;
                let t_power = match template.which {
                    Which::TimeFactor => 1.0 - pcj,
                    Which::BilapFactor | Which::ForcingFactor => 1.0,
                    Which::SpaceMass => 0.0,
                };
                let log_base = match template.log_base {
                    LogBase::LnR => r.ln(),
                    LogBase::LnSqrtR => r.sqrt().ln(),
                };
                let norm = tf.spec.t_big.powf(t_power) * log_base.powf(log_power);
                Ok((r, value, value / norm))
            })
            .collect()
    };
    for res in results {
        let (r, v, red) = res?;
        rows.push((r, v));
        reduced.push((r, red));
    }
    let fit = fit_power_law(&reduced)?;
    let ratios: Vec<f64> = reduced.iter().map(|&(r, v)| v / r.powf(predicted)).collect();
    let rmax = ratios.iter().cloned().fold(0.0, f64::max);
    let rmin = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio_spread = rmax / rmin;
    let close = (fit.slope - predicted).abs() <= EXPONENT_TOL;
    Ok(LemmaCheck {
        id: template.id,
        dim,
        p,
        ell,
        ell_requested,
        j,
        rows,
        reduced,
        predicted_exponent: predicted,
        log_power,
        fit,
        ratio_spread,
        pass: close && ratio_spread <= RATIO_SPREAD_MAX,
        upper_bound_ok: fit.slope <= predicted + EXPONENT_TOL,
    })
}

/// Catalog entries applicable at `(N, p)`; critical entries only when `p = N/(N-4)`.
pub fn applicable_lemmas(dim: u32, p: f64, critical: bool) -> Vec<LemmaTemplate> {
    lemma_catalog().into_iter().filter(|l| (l.dims == DimRule::Critical) == critical).filter(|l| l.dims.admits(dim, p).is_ok()).collect()
}

impl LemmaCheck {
    pub const CSV_HEADER: &'static str = "lemma_id,N,p,ell,j,R,measured,predicted_exponent,fitted,verdict";

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.rows
            .iter()
            .map(|(r, v)| {
                format!(
                    "{},{},{},{},{},{},{:e},{},{:.4},{}",
                    self.id,
                    self.dim,
                    self.p,
                    self.ell,
                    self.j,
                    r,
                    v,
                    self.predicted_exponent,
                    self.fit.slope,
                    self.verdict()
                )
            })
            .collect()
    }
}

/// `psi_R = phi(((r-1)^4 + t)/R)^(4p')` and its annular companion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifespanCutoff<T> {
    pub r_big: T,
    pub p: T,
    pub dim: u32,
    profile: CutoffSpec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LifespanSample<T> {
    pub psi: T,
    pub psi_star: T,
    pub dt: T,
    pub bilaplacian: T,
}

impl<T: Scalar> LifespanCutoff<T> {
    pub fn new(r_big: T, p: T, dim: u32) -> Result<Self> {
        compute_exponents(p, dim)?;
        if !(r_big > T::zero()) {
            return domain("R must be positive");
        }
        Ok(Self { r_big, p, dim, profile: CutoffSpec::new(CutoffKind::Zeta, 1) })
    }

    fn power(&self) -> T {
        lit::<T>(4.0) * self.p / (self.p - T::one())
    }

    pub fn argument(&self, t: T, r: T) -> T {
        ((r - T::one()).powi(4) + t) / self.r_big
    }

    pub fn eval(&self, t: T, r: T) -> LifespanSample<T> {
        let rb = self.r_big;
        let q = self.power();
        let d = r - T::one();
        let s = [
            (d.powi(4) + t) / rb,
            lit::<T>(4.0) * d.powi(3) / rb,
            lit::<T>(12.0) * d * d / rb,
            lit::<T>(24.0) * d / rb,
            lit::<T>(24.0) / rb,
        ];
        let zero = T::zero();
        match self.profile.region(s[0]) {
            Region::Plateau => LifespanSample { psi: T::one(), psi_star: zero, dt: zero, bilaplacian: zero },
            Region::Outside => LifespanSample { psi: zero, psi_star: zero, dt: zero, bilaplacian: zero },
            Region::Transition(lj) => {
                let psi = (q * lj[0]).exp();
                let lr = compose(&lj, &s);
                let scaled = [q * lr[0], q * lr[1], q * lr[2], q * lr[3], q * lr[4]];
                let b = bell(&scaled);
                let jet = [T::one(), b[0], b[1], b[2], b[3]];
                let rho = radial_operators(&jet, r, self.dim)[2];
                let star = if s[0] >= lit(0.5) { psi } else { zero };
                LifespanSample { psi, psi_star: star, dt: psi * q * lj[1] / rb, bilaplacian: psi * rho }
            }
        }
    }

    /// `R |d_t psi| / psi*^(1/p)` and `R |bilap psi| / psi*^(1/p)` at one point.
    ///
    /// Both are computed without forming `psi*^(1/p)`: on the annulus the
    /// quotients reduce to `4p' phi^3 |phi'|` and `phi^4 |rho|`.
    pub fn ratios(&self, t: T, r: T) -> Option<(T, T)> {
        let rb = self.r_big;
        let q = self.power();
        let d = r - T::one();
        let s = [
            (d.powi(4) + t) / rb,
            lit::<T>(4.0) * d.powi(3) / rb,
            lit::<T>(12.0) * d * d / rb,
            lit::<T>(24.0) * d / rb,
            lit::<T>(24.0) / rb,
        ];
        if s[0] < lit(0.5) {
            return None;
        }
        match self.profile.region(s[0]) {
            Region::Transition(lj) => {
                let phi4 = (lit::<T>(4.0) * lj[0]).exp();
                let time = q * phi4 * lj[1].abs();
                let lr = compose(&lj, &s);
                let scaled = [q * lr[0], q * lr[1], q * lr[2], q * lr[3], q * lr[4]];
                let b = bell(&scaled);
                let rho = radial_operators(&[T::one(), b[0], b[1], b[2], b[3]], r, self.dim)[2];
                Some((time, rb * phi4 * rho.abs()))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LifespanCutoffReport {
    /// `(R, sup time ratio, sup bilaplacian ratio)`.
    pub rows: Vec<(f64, f64, f64)>,
    pub time_slope: f64,
    pub bilap_slope: f64,
    pub pass: bool,
    pub samples: usize,
}

pub const LIFESPAN_SLOPE_TOL: f64 = 0.1;

/// Samples points with `1/2 <= s < 1`, splitting `s R` between `(r-1)^4` and `t`.
pub fn verify_lifespan_cutoff_bounds(p: f64, dim: u32, ladder: &[f64], samples: usize, seed: u64) -> Result<LifespanCutoffReport> {
    use rand::{Rng, SeedableRng};
    let mut rows = Vec::new();
    for &rb in ladder {
        let lc = LifespanCutoff::new(rb, p, dim)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (mut st, mut sb) = (0.0f64, 0.0f64);
        for _ in 0..samples {
            let s: f64 = rng.gen_range(0.5..1.0);
            let frac: f64 = rng.gen_range(0.0..=1.0);
            let r = 1.0 + (frac * s * rb).powf(0.25);
            let t = (1.0 - frac) * s * rb;
            if let Some((a, b)) = lc.ratios(t, r) {
                st = st.max(a);
                sb = sb.max(b);
            }
        }
        rows.push((rb, st, sb));
    }
    let fit_t = fit_power_law(&rows.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>())?;
    let fit_b = fit_power_law(&rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>())?;
    Ok(LifespanCutoffReport {
        pass: fit_t.slope.abs() <= LIFESPAN_SLOPE_TOL && fit_b.slope.abs() <= LIFESPAN_SLOPE_TOL,
        time_slope: fit_t.slope,
        bilap_slope: fit_b.slope,
        rows,
        samples,
    })
}

/// Upper bound on the existence time from the iteration inequality with
/// constants `(theta, C0, R1, delta)`.
pub fn ikeda_bound<T: Scalar>(theta: T, c0: T, r1: T, delta: T, p: T) -> Result<T> {
    if !(delta > T::zero()) || !(c0 > T::zero()) || !(r1 > T::zero()) || !(p > T::one()) {
        return domain("ikeda bound requires delta, C0, R1 > 0 and p > 1");
    }
    if theta < T::zero() {
        return domain(format!("theta = {theta} < 0: no finite bound"));
    }
    let pm1 = p - T::one();
    let ln2 = T::LN_2();
    if theta == T::zero() {
        return Ok((r1.ln() + ln2 / pm1 * c0.powf(p) * delta.powf(-pm1)).exp());
    }
    let e = pm1 * theta;
    Ok((r1.powf(e) + ln2 * c0.powf(p) * theta * delta.powf(-pm1)).powf(T::one() / e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{assemble_closure, FarField};
    use crate::radial::{radial_bilaplacian, RadialGrid};
    use approx::assert_relative_eq;

    #[test]
    fn cutoff_examples() {
        let z = CutoffSpec::<f64>::new(CutoffKind::Zeta, 1);
        assert_eq!(z.eval(0.25, 0), 1.0);
        assert_eq!(z.eval(0.5, 1), 0.0);
        let x = CutoffSpec::<f64>::new(CutoffKind::Xi, 1);
        for k in 0..=4 {
            assert_eq!(x.eval(3.0, k), 0.0);
        }
        assert!(eval_cutoff(&x, 1.5, 5).is_err());
    }

    #[test]
    fn cutoff_values_and_flats() {
        for kind in [CutoffKind::Zeta, CutoffKind::Xi, CutoffKind::F] {
            let c = CutoffSpec::<f64>::new(kind, 1);
            let (a, b) = c.window();
            for i in 0..1000 {
                let s_plateau = a - 1.0 + i as f64 / 1000.0;
                let s_out = b + i as f64 / 100.0;
                assert_eq!(c.eval(s_plateau, 0), 1.0);
                assert_eq!(c.eval(s_out, 0), 0.0);
                for k in 1..=4 {
                    assert_eq!(c.eval(s_plateau, k), 0.0);
                    assert_eq!(c.eval(s_out, k), 0.0);
                }
                let s = a + (b - a) * (i as f64 + 0.5) / 1000.0;
                let v = c.eval(s, 0);
                assert!((0.0..=1.0).contains(&v));
                assert!(c.eval(s, 1) <= 0.0);
            }
        }
    }

    #[test]
    fn cutoff_derivatives_match_finite_differences() {
        let c = CutoffSpec::<f64>::new(CutoffKind::Xi, 1);
        let h = 1e-4;
        for &s in &[1.2, 1.5, 1.8] {
            for k in 1..=4 {
                let fd = (c.eval(s + h, k - 1) - c.eval(s - h, k - 1)) / (2.0 * h);
                assert_relative_eq!(c.eval(s, k), fd, max_relative = 1e-5, epsilon = 1e-8);
            }
        }
        let b = c.derivative_bounds(2000);
        assert_relative_eq!(b[0], 1.0, epsilon = 1e-3);
        assert!(b.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn product_rule_matches_leibniz_in_one_variable() {
        // Independent route: expand f g by Leibniz, then apply the radial formula.
        let f = |r: f64| [r.ln(), 1.0 / r, -1.0 / (r * r), 2.0 / r.powi(3), -6.0 / r.powi(4)];
        let g = |r: f64| [r.powi(3), 3.0 * r * r, 6.0 * r, 6.0, 0.0];
        for n in [2u32, 3, 5, 8] {
            let r = 1.7;
            let (fj, gj) = (f(r), g(r));
            let binom = [
                [1.0, 0.0, 0.0, 0.0, 0.0],
                [1.0, 1.0, 0.0, 0.0, 0.0],
                [1.0, 2.0, 1.0, 0.0, 0.0],
                [1.0, 3.0, 3.0, 1.0, 0.0],
                [1.0, 4.0, 6.0, 4.0, 1.0],
            ];
            let mut prod = [0.0; 5];
            for k in 0..5 {
                for i in 0..=k {
                    prod[k] += binom[k][i] * fj[i] * gj[k - i];
                }
            }
            let direct = radial_operators(&prod, r, n)[2];
            let ops = radial_operators(&fj, r, n);
            let fw = [fj[0], fj[1], fj[2], ops[0], ops[1], ops[2]];
            assert_relative_eq!(bilaplacian_product(&fw, &gj, r, n), direct, max_relative = 1e-12);
            if n >= 2 {
                let five = bilaplacian_leibniz_pattern(&fw, &gj, r, n);
                assert!((five - direct).abs() > 1e-3 * direct.abs().max(1.0), "N={n}");
            }
        }
    }

    fn fd_bilap_error(tf: &TestFunction<f64>, cells: usize, r_max: f64, window: (f64, f64)) -> f64 {
        let n = tf.spec.dim;
        let g = RadialGrid::new(n, r_max, cells).unwrap();
        let field = g.tabulate(|r| tf.spatial(r).unwrap().value);
        let last = field.values[g.cells];
        let c = assemble_closure(crate::BoundaryCondition::Navier, &g, n).unwrap().with_far_field(FarField { u: last, lap: 0.0 });
        let bl = radial_bilaplacian(&g, &field, Some(&c)).unwrap();
        let mut err = 0.0f64;
        for i in 2..g.cells - 1 {
            let r = g.r(i);
            if r >= window.0 && r <= window.1 {
                err = err.max((bl.values[i] - tf.spatial(r).unwrap().bilaplacian).abs());
            }
        }
        err
    }

    #[test]
    fn analytic_bilaplacian_matches_discrete_operator() {
        for family in [Family::Phi1, Family::Phi2, Family::Phi3] {
            for n in [2u32, 3, 4, 5, 6, 8] {
                let tf = TestFunctionSpec::new(family, Argument::Standard, n, 2.0, 5.0, 5.0).unwrap().with_ell(9).build().unwrap();
                let win = (5.2, 9.8);
                let e1 = fd_bilap_error(&tf, 200, 12.0, win);
                let e2 = fd_bilap_error(&tf, 400, 12.0, win);
                let ratio = e1 / e2;
                assert!((3.5..=4.5).contains(&ratio), "{family:?} N={n} ratio {ratio}");
            }
        }
    }

    #[test]
    fn log_argument_bilaplacian_matches_discrete_operator() {
        for family in [Family::Phi1, Family::Phi2, Family::Phi3] {
            let tf = TestFunctionSpec::new(family, Argument::Logarithmic, 5, 5.0, 36.0, 5.0).unwrap().build().unwrap();
            let e1 = fd_bilap_error(&tf, 400, 40.0, (6.5, 35.0));
            let e2 = fd_bilap_error(&tf, 800, 40.0, (6.5, 35.0));
            let ratio = e1 / e2;
            assert!((3.5..=4.5).contains(&ratio), "{family:?} ratio {ratio}");
        }
    }

    #[test]
    fn plateau_examples() {
        let tf = TestFunctionSpec::new(Family::Phi1, Argument::Standard, 3, 2.0, 10.0, 5.0).unwrap().build().unwrap();
        assert_eq!(tf.eval(1.0, 5.0, Want::Bilaplacian).unwrap(), 0.0);
        let tf3 = TestFunctionSpec::new(Family::Phi3, Argument::Standard, 3, 2.0, 10.0, 5.0).unwrap().build().unwrap();
        assert_eq!(tf3.spatial(3.0).unwrap().weight, 1.0);
        assert_eq!(tf3.spatial(3.0).unwrap().value, 1.0);
        for family in [Family::Phi1, Family::Phi2, Family::Phi3] {
            let tf = TestFunctionSpec::new(family, Argument::Logarithmic, 8, 2.0, 400.0, 5.0).unwrap().build().unwrap();
            let peak = (0..200).map(|i| tf.spatial(20.0 + i as f64 * 1.9).unwrap().bilaplacian.abs()).fold(0.0, f64::max);
            for i in 0..100 {
                let r = 1.0 + 18.99 * i as f64 / 100.0;
                assert!(tf.spatial(r).unwrap().bilaplacian.abs() <= 1e-12 * peak);
            }
        }
    }

    #[test]
    fn time_factor_scales_exactly() {
        let opts = QuadOptions::default();
        let base = TestFunctionSpec::new(Family::Phi3, Argument::Standard, 3, 2.0, 10.0, 1.0).unwrap();
        let i1 = base.with_time(7.0).build().unwrap().time_factor(&opts).unwrap();
        for lam in [2.0f64, 5.0, 10.0] {
            let il = base.with_time(7.0 * lam).build().unwrap().time_factor(&opts).unwrap();
            assert_relative_eq!(il / i1, lam.powf(1.0 - 2.0), max_relative = 1e-8);
        }
    }

    #[test]
    fn phi1_mass_grows_like_volume() {
        let pts: Vec<(f64, f64)> = [16.0, 32.0, 64.0, 128.0, 256.0]
            .iter()
            .map(|&r| {
                let tf = TestFunctionSpec::new(Family::Phi1, Argument::Standard, 3, 2.0, r, 5.0).unwrap().build().unwrap();
                (r, lemma_integral(&tf, Which::SpaceMass).unwrap())
            })
            .collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.slope - 3.0).abs() <= 0.1, "slope {}", fit.slope);
    }

    #[test]
    fn lemma_hypotheses_are_enforced() {
        let t = find_lemma("phi3-log-bilap").unwrap();
        let err = verify_lemma(&t, &LemmaParams::new(6, 2.0), &DEFAULT_LADDER).unwrap_err();
        assert!(err.to_string().contains("p = N/(N-4)"), "{err}");
        let t = find_lemma("phi1-time-n2").unwrap();
        assert!(verify_lemma(&t, &LemmaParams::new(3, 2.0), &DEFAULT_LADDER).is_err());
        let t = find_lemma("phi3-bilap").unwrap();
        assert!(verify_lemma(&t, &LemmaParams::new(3, 2.0), &[16.0, 32.0, 64.0, 128.0]).is_err());
    }

    #[test]
    fn phi3_bilap_exponent_in_three_dimensions() {
        let t = find_lemma("phi3-bilap").unwrap();
        let chk = verify_lemma(&t, &LemmaParams::new(3, 2.0), &DEFAULT_LADDER).unwrap();
        assert!((chk.fit.slope + 5.0).abs() <= 0.2, "slope {}", chk.fit.slope);
        assert!(chk.pass);
    }

    #[test]
    fn requested_ell_is_raised_to_admissible() {
        let t = find_lemma("phi3-bilap").unwrap();
        let params = LemmaParams { ell: Some(2), ..LemmaParams::new(3, 2.0) };
        let chk = verify_lemma(&t, &params, &DEFAULT_LADDER).unwrap();
        assert_eq!(chk.ell_requested, 2);
        assert_eq!(chk.ell, 9);
    }

    #[test]
    fn lifespan_cutoff_examples() {
        let lc = LifespanCutoff::<f64>::new(100.0, 2.0, 3).unwrap();
        // plateau: s < 1/2
        let s = lc.eval(10.0, 2.0);
        assert_eq!(s.dt, 0.0);
        assert_eq!(s.psi_star, 0.0);
        assert!(lc.ratios(10.0, 2.0).is_none());
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let r = 1.0 + rng.gen_range(0.0..4.0);
            let t = rng.gen_range(0.0..120.0);
            let e = lc.eval(t, r);
            assert!(e.psi_star <= e.psi);
        }
    }

    #[test]
    fn lifespan_time_derivative_matches_finite_difference() {
        let lc = LifespanCutoff::<f64>::new(50.0, 2.0, 3).unwrap();
        let (t, r) = (30.0, 2.3);
        let h = 1e-5;
        let fd = (lc.eval(t + h, r).psi - lc.eval(t - h, r).psi) / (2.0 * h);
        assert_relative_eq!(lc.eval(t, r).dt, fd, max_relative = 1e-6);
        let (ratio, _) = lc.ratios(t, r).unwrap();
        let e = lc.eval(t, r);
        assert_relative_eq!(ratio, 50.0 * e.dt.abs() / e.psi_star.powf(0.5), max_relative = 1e-9);
    }

    #[test]
    fn lifespan_ratios_flat_in_r() {
        let rep = verify_lifespan_cutoff_bounds(2.0, 3, &[10.0, 100.0, 1000.0], 4000, 11).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn ikeda_examples() {
        let v = ikeda_bound(1.25, 1.0, 1.0, 0.01, 1.5).unwrap();
        // (1 + ln2 * 1.25 * 0.01^-0.5)^(1/0.625), evaluated independently
        let oracle = (1.0f64 + std::f64::consts::LN_2 * 1.25 * 10.0).powf(1.6);
        assert_relative_eq!(v, oracle, max_relative = 1e-14);
        assert!((v - 37.7).abs() < 0.05);
        assert_relative_eq!(ikeda_bound(1.25, 1.0, 3.0, 1e12, 1.5).unwrap(), 3.0, max_relative = 1e-5);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let d = 10f64.powf(-3.0 + 0.3 * k as f64);
            let b = ikeda_bound(1.25, 1.0, 1.0, d, 1.5).unwrap();
            assert!(b <= prev);
            prev = b;
        }
        assert!(ikeda_bound(-0.5, 1.0, 1.0, 0.1, 2.0).is_err());
        let z = ikeda_bound(0.0, 1.0, 2.0, 0.5, 2.0).unwrap();
        assert_relative_eq!(z, (2f64.ln() + std::f64::consts::LN_2 * 2.0).exp(), max_relative = 1e-14);
    }
}
