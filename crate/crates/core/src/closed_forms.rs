//! Exact radial closed forms: exponent bookkeeping, the harmonic and
//! biharmonic weights vanishing on the unit sphere, and the power-law
//! supersolution `v = eps * r^-m` with its derived forcing.

use crate::boundary::BoundaryCondition;
use crate::error::{domain, Error, Result};
use crate::scalar::{int, lit, Scalar};

/// Critical exponents attached to a pair `(p, N)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Exponents<T> {
    pub p: T,
    /// Hoelder conjugate `p / (p - 1)`.
    pub p_conj: T,
    pub dim: u32,
    /// `N / (N - 4)` for `N >= 5`, `+inf` otherwise.
    pub p_crit: T,
    pub p_fuj: T,
    pub omega_crit: T,
    pub theta: T,
}

pub fn compute_exponents<T: Scalar>(p: T, dim: u32) -> Result<Exponents<T>> {
    if !(p > T::one()) || !p.is_finite() {
        return domain(format!("p must exceed 1 (got {p})"));
    }
    if dim < 2 {
        return domain(format!("dimension must be at least 2 (got {dim})"));
    }
    let n: T = int(dim as i64);
    let one = T::one();
    let four: T = lit(4.0);
    let p_crit = if dim >= 5 { n / (n - four) } else { T::infinity() };
    Ok(Exponents {
        p,
        p_conj: p / (p - one),
        dim,
        p_crit,
        p_fuj: one + four / n,
        omega_crit: four * p / (p - one),
        theta: one / (p - one) - n / four,
    })
}

impl<T: Scalar> Exponents<T> {
    /// `p <= p_crit`, with an infinite critical exponent absorbing every `p`.
    pub fn is_subcritical(&self) -> bool {
        self.p_crit.is_infinite() || self.p <= self.p_crit
    }

    pub fn is_fujita_regime(&self) -> bool {
        self.p <= self.p_fuj
    }

    /// Smallest admissible cut-off power, `ceil(4p/(p-1)) + 1`.
    pub fn default_ell(&self) -> u32 {
        to_u32(self.omega_crit.ceil()) + 1
    }
}

fn to_u32<T: Scalar>(x: T) -> u32 {
    x.to_u32().unwrap_or(u32::MAX)
}

/// Values of the harmonic weight and its radial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicValue<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
    pub laplacian: T,
}

/// Radial harmonic function vanishing on the unit sphere:
/// `ln r` in the plane, `1 - r^(2-N)` for `N >= 3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HarmonicH {
    pub dim: u32,
}

impl HarmonicH {
    pub fn new(dim: u32) -> Result<Self> {
        if dim < 2 {
            return domain(format!("dimension must be at least 2 (got {dim})"));
        }
        Ok(Self { dim })
    }

    pub fn eval<T: Scalar>(&self, r: T) -> Result<HarmonicValue<T>> {
        check_radius(r)?;
        let one = T::one();
        Ok(if self.dim == 2 {
            HarmonicValue { value: r.ln(), d1: one / r, d2: -one / (r * r), laplacian: T::zero() }
        } else {
            let k: T = int(self.dim as i64 - 2);
            let rk = r.powf(-k);
            HarmonicValue { value: one - rk, d1: k * rk / r, d2: -k * (k + one) * rk / (r * r), laplacian: T::zero() }
        })
    }
}

/// Values of the biharmonic weight and its radial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiharmonicValue<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
    pub laplacian: T,
    pub d_laplacian: T,
    pub bilaplacian: T,
}

/// Radial biharmonic function with `B = B' = 0` on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BiharmonicB {
    pub dim: u32,
}

impl BiharmonicB {
    pub fn new(dim: u32) -> Result<Self> {
        if dim < 2 {
            return domain(format!("dimension must be at least 2 (got {dim})"));
        }
        Ok(Self { dim })
    }

    pub fn eval<T: Scalar>(&self, r: T) -> Result<BiharmonicValue<T>> {
        check_radius(r)?;
        let one = T::one();
        let two: T = lit(2.0);
        let lnr = r.ln();
        let r2 = r * r;
        let (value, d1, laplacian, d_laplacian) = match self.dim {
            2 => (r2 * lnr - r2 + lnr + one, two * r * lnr - r + one / r, lit::<T>(4.0) * lnr, lit::<T>(4.0) / r),
            3 => (one / r + r - two, one - one / r2, two / r, -two / r2),
            4 => (two * lnr + one / r2 - one, two / r - two / (r2 * r), lit::<T>(4.0) / r2, lit::<T>(-8.0) / (r2 * r)),
            n => {
                let n: T = int(n as i64);
                let a = n - two;
                let b = n - lit(4.0);
                let ra = r.powf(-a);
                let rb = r.powf(-b);
                (ra - one + a / b * (one - rb), -a * ra / r + a * rb / r, two * a * ra, -two * a * a * ra / r)
            }
        };
        let nm1: T = int(self.dim as i64 - 1);
        Ok(BiharmonicValue { value, d1, d2: laplacian - nm1 * d1 / r, laplacian, d_laplacian, bilaplacian: T::zero() })
    }
}

fn check_radius<T: Scalar>(r: T) -> Result<()> {
    if !(r >= T::one()) || !r.is_finite() {
        return domain(format!("radius must satisfy r >= 1 (got {r})"));
    }
    Ok(())
}

/// Radial supersolution `v = eps * r^-m` for supercritical `p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Supersolution<T> {
    pub epsilon: T,
    pub m: T,
    pub dim: u32,
    pub p: T,
    /// `m (m+2) (m-N+2) (m-N+4)`, so that `bilap v = eps * M * r^(-m-4)`.
    pub big_m: T,
}

/// Coefficient `m (m+2) (m-N+2) (m-N+4)` of the bilaplacian of `r^-m`.
pub fn bilaplacian_coefficient<T: Scalar>(m: T, dim: u32) -> T {
    let n: T = int(dim as i64);
    m * (m + lit(2.0)) * (m - n + lit(2.0)) * (m - n + lit(4.0))
}

/// Coefficient `m (m-N+2)` of the Laplacian of `r^-m`.
pub fn laplacian_coefficient<T: Scalar>(m: T, dim: u32) -> T {
    let n: T = int(dim as i64);
    m * (m - n + lit(2.0))
}

pub fn make_supersolution<T: Scalar>(p: T, dim: u32, m: T, epsilon: T) -> Result<Supersolution<T>> {
    if dim < 5 {
        return Err(Error::Window(format!("N >= 5 required (got {dim})")));
    }
    let ex = compute_exponents(p, dim)?;
    if p <= ex.p_crit {
        return Err(Error::Window(format!("p > N/(N-4) = {} required (got {p})", ex.p_crit)));
    }
    if !(epsilon > T::zero()) {
        return Err(Error::Window(format!("eps > 0 required (got {epsilon})")));
    }
    let lower = lit::<T>(4.0) / (p - T::one());
    let upper: T = int(dim as i64 - 4);
    if !(m > lower) {
        return Err(Error::Window(format!("m <= 4/(p-1) = {lower} (got m = {m})")));
    }
    if !(m < upper) {
        return Err(Error::Window(format!("m >= N-4 = {upper} (got m = {m})")));
    }
    Ok(Supersolution { epsilon, m, dim, p, big_m: bilaplacian_coefficient(m, dim) })
}

impl<T: Scalar> Supersolution<T> {
    pub fn value(&self, r: T) -> T {
        self.epsilon * r.powf(-self.m)
    }

    pub fn d1(&self, r: T) -> T {
        -self.m * self.epsilon * r.powf(-self.m - T::one())
    }

    pub fn laplacian(&self, r: T) -> T {
        self.epsilon * laplacian_coefficient(self.m, self.dim) * r.powf(-self.m - lit(2.0))
    }

    pub fn d_laplacian(&self, r: T) -> T {
        let c = laplacian_coefficient(self.m, self.dim);
        -(self.m + lit(2.0)) * self.epsilon * c * r.powf(-self.m - lit(3.0))
    }

    pub fn bilaplacian(&self, r: T) -> T {
        self.epsilon * self.big_m * r.powf(-self.m - lit(4.0))
    }

    /// Derived forcing `bilap v - v^p`.
    pub fn forcing(&self, r: T) -> T {
        self.bilaplacian(r) - self.value(r).powf(self.p)
    }

    /// Sign table of the four boundary quantities at `r = 1`.
    pub fn boundary_signs(&self) -> SignReport<T> {
        let one = T::one();
        let entry = |name: &'static str, radial: T, is_normal: bool| SignEntry {
            name,
            outward: radial,
            inward: if is_normal { -radial } else { radial },
        };
        SignReport {
            entries: [
                entry("v", self.value(one), false),
                entry("dv/dnu", self.d1(one), true),
                entry("-lap v", -self.laplacian(one), false),
                entry("d(lap v)/dnu", self.d_laplacian(one), true),
            ],
        }
    }
}

/// One boundary quantity evaluated with `nu = +e_r` (`outward`) and
/// `nu = -e_r` (`inward`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignEntry<T> {
    pub name: &'static str,
    pub outward: T,
    pub inward: T,
}

impl<T: Scalar> SignEntry<T> {
    /// Conventions under which the quantity is strictly positive.
    pub fn positive_under(&self) -> (bool, bool) {
        (self.outward > T::zero(), self.inward > T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignReport<T> {
    pub entries: [SignEntry<T>; 4],
}

pub fn check_supersolution_boundary_signs<T: Scalar>(s: &Supersolution<T>) -> SignReport<T> {
    s.boundary_signs()
}

/// Weight `A` paired with each boundary-condition family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightA {
    Harmonic(HarmonicH),
    Biharmonic(BiharmonicB),
    Unit,
}

impl WeightA {
    pub fn for_bc(bc: BoundaryCondition, dim: u32) -> Result<Self> {
        use BoundaryCondition::*;
        Ok(match bc {
            Navier | Neumann => WeightA::Harmonic(HarmonicH::new(dim)?),
            Dirichlet => WeightA::Biharmonic(BiharmonicB::new(dim)?),
            DirichletNavier | KuttlerSigillito | NeumannNavier => WeightA::Unit,
        })
    }

    /// Value, first through fourth radial derivatives packed as
    /// `[w, w', w'', lap w, (lap w)', bilap w]`.
    pub fn jet<T: Scalar>(&self, r: T) -> Result<[T; 6]> {
        let z = T::zero();
        Ok(match self {
            WeightA::Harmonic(h) => {
                let v = h.eval(r)?;
                [v.value, v.d1, v.d2, z, z, z]
            }
            WeightA::Biharmonic(b) => {
                let v = b.eval(r)?;
                [v.value, v.d1, v.d2, v.laplacian, v.d_laplacian, v.bilaplacian]
            }
            WeightA::Unit => [T::one(), z, z, z, z, z],
        })
    }

    pub fn value<T: Scalar>(&self, r: T) -> Result<T> {
        Ok(self.jet(r)?[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassMode {
    /// `f >= 0` and `f >= C r^-omega` eventually.
    Plus,
    /// `f > 0` and `f <= C r^-omega` eventually.
    Minus,
}

/// Tests membership of a sampled forcing in the decay classes around `r^-omega`.
///
/// The ratio `f r^omega` is fitted on the upper half (in log scale) of the
/// probe range; a bounded-below ratio means the lower bound holds with some
/// `C > 0`, a bounded-above ratio the upper bound.
pub fn forcing_in_class<T: Scalar, F: Fn(T) -> T>(f: F, omega: T, mode: ClassMode, r_probe: &[T]) -> Result<bool> {
    if r_probe.is_empty() {
        return domain("empty probe set");
    }
    let mut probes: Vec<T> = r_probe.to_vec();
    probes.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let lo = probes[0];
    let hi = probes[probes.len() - 1];
    if !(lo >= T::one()) || hi / lo < lit(100.0) {
        return domain("probes must lie in r >= 1 and span at least two decades");
    }
    let values: Vec<T> = probes.iter().map(|&r| f(r)).collect();
    if values.iter().any(|v| !v.is_finite()) {
        return domain("forcing is not finite on the probe set");
    }
    let sign_ok = match mode {
        ClassMode::Plus => values.iter().all(|&v| v >= T::zero()),
        ClassMode::Minus => values.iter().all(|&v| v > T::zero()),
    };
    if !sign_ok {
        return Ok(false);
    }
    let mid = (lo * hi).sqrt();
    let mut tail: Vec<(T, T)> = probes.iter().zip(&values).filter(|(r, _)| **r >= mid).map(|(&r, &v)| (r, v)).collect();
    if tail.len() < 2 {
        let k = probes.len().min(2);
        tail = probes.iter().zip(&values).skip(probes.len() - k).map(|(&r, &v)| (r, v)).collect();
    }
    if tail.iter().any(|(_, v)| !(*v > T::zero())) {
        return Ok(false);
    }
    let slope = log_slope(tail.iter().map(|&(r, v)| (r, v * r.powf(omega))));
    let tol: T = lit(0.05);
    Ok(match mode {
        ClassMode::Plus => slope >= -tol,
        ClassMode::Minus => slope <= tol,
    })
}

fn log_slope<T: Scalar>(pts: impl Iterator<Item = (T, T)>) -> T {
    let pts: Vec<(T, T)> = pts.map(|(x, y)| (x.ln(), y.ln())).collect();
    let n: T = int(pts.len() as i64);
    let mx = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for &(x, y) in &pts {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn exponent_examples() {
        let e = compute_exponents(2.0, 5).unwrap();
        assert_relative_eq!(e.p_crit, 5.0);
        let e = compute_exponents(2.0f64, 4).unwrap();
        assert!(e.p_crit.is_infinite());
        assert_relative_eq!(e.p_fuj, 2.0);
        let e = compute_exponents(2.0, 6).unwrap();
        assert_relative_eq!(e.omega_crit, 8.0);
        assert_relative_eq!(e.theta, -0.5);
        let e = compute_exponents(1.5, 3).unwrap();
        assert_relative_eq!(e.theta, 1.25);
        assert!(compute_exponents(1.0, 3).is_err());
        assert!(compute_exponents(2.0, 1).is_err());
    }

    #[test]
    fn default_ell_exceeds_omega_crit() {
        let e = compute_exponents(2.0, 3).unwrap();
        assert_eq!(e.default_ell(), 9);
        let e = compute_exponents(1.5, 3).unwrap();
        assert_eq!(e.default_ell(), 13);
    }

    #[test]
    fn harmonic_examples() {
        assert_relative_eq!(HarmonicH::new(3).unwrap().eval(2.0).unwrap().value, 0.5);
        let e = std::f64::consts::E;
        assert_relative_eq!(HarmonicH::new(2).unwrap().eval(e).unwrap().value, 1.0);
        for n in 2..=10 {
            let v = HarmonicH::new(n).unwrap().eval(1.0).unwrap();
            assert_eq!(v.value, 0.0);
            assert_eq!(v.laplacian, 0.0);
        }
        assert!(HarmonicH::new(3).unwrap().eval(0.5).is_err());
    }

    #[test]
    fn biharmonic_examples() {
        assert_relative_eq!(BiharmonicB::new(3).unwrap().eval(2.0).unwrap().value, 0.5);
        assert_relative_eq!(BiharmonicB::new(5).unwrap().eval(2.0).unwrap().value, 0.625);
        let v = BiharmonicB::new(4).unwrap().eval(1.0).unwrap();
        assert_eq!(v.value, 0.0);
        assert_eq!(v.d1, 0.0);
        assert_relative_eq!(v.laplacian, 4.0);
    }

    #[test]
    fn biharmonic_vanishes_with_slope_on_unit_sphere() {
        for n in 2..=10 {
            let v = BiharmonicB::new(n).unwrap().eval(1.0f64).unwrap();
            assert!(v.value.abs() < 1e-15, "N={n}");
            assert!(v.d1.abs() < 1e-15, "N={n}");
            assert_eq!(v.bilaplacian, 0.0);
        }
    }

    #[test]
    fn supersolution_example() {
        let s = make_supersolution(4.0, 6, 1.5, 0.1).unwrap();
        assert_relative_eq!(s.big_m, 6.5625);
        let err = make_supersolution(4.0, 6, 3.0, 0.1).unwrap_err();
        assert!(err.to_string().contains("m >= N-4"), "{err}");
        assert!(make_supersolution(4.0, 6, 1.0, 0.1).unwrap_err().to_string().contains("4/(p-1)"));
        assert!(make_supersolution(2.0, 6, 1.5, 0.1).is_err());
        assert!(make_supersolution(4.0, 4, 1.5, 0.1).is_err());
    }

    #[test]
    fn supersolution_forcing_positive_on_grid() {
        let s = make_supersolution(4.0, 6, 1.5, 0.1).unwrap();
        for k in 0..=3000 {
            let r = 10f64.powf(k as f64 / 1000.0);
            let f = s.epsilon * 6.5625 * r.powf(-5.5) - (0.1 * r.powf(-1.5)).powi(4);
            assert!(f > 0.0);
            assert_relative_eq!(s.forcing(r), f, max_relative = 1e-12);
        }
    }

    #[test]
    fn sign_report_matches_radial_derivatives() {
        let s = make_supersolution(4.0, 6, 1.5, 0.1).unwrap();
        let rep = s.boundary_signs();
        assert_relative_eq!(rep.entries[0].outward, 0.1);
        // -lap v at r = 1 by central differences of v.
        let h = 1e-4;
        let v = |r: f64| 0.1 * r.powf(-1.5);
        let lap = (v(1.0 + h) - 2.0 * v(1.0) + v(1.0 - h)) / (h * h) + 5.0 * (v(1.0 + h) - v(1.0 - h)) / (2.0 * h);
        assert_relative_eq!(rep.entries[2].outward, -lap, max_relative = 1e-6);
        assert_relative_eq!(rep.entries[2].outward, 0.375, max_relative = 1e-12);
        assert_eq!(rep.entries[1].positive_under(), (false, true));
        assert_eq!(rep.entries[3].positive_under(), (true, false));
    }

    #[test]
    fn forcing_class_examples() {
        let probes = [1.0, 10.0, 100.0, 1000.0];
        assert!(forcing_in_class(|r: f64| r.powi(-4), 4.0, ClassMode::Plus, &probes).unwrap());
        assert!(!forcing_in_class(|r: f64| r.powi(-6), 4.0, ClassMode::Plus, &probes).unwrap());
        let s = make_supersolution(4.0, 6, 1.75, 0.01).unwrap();
        assert!(forcing_in_class(|r| s.forcing(r), 5.5, ClassMode::Minus, &probes).unwrap());
        assert!(!forcing_in_class(|r| s.forcing(r), 5.5, ClassMode::Plus, &probes).unwrap());
        assert!(forcing_in_class(|r: f64| r.powi(-4), 4.0, ClassMode::Plus, &[]).is_err());
        assert!(!forcing_in_class(|r: f64| -r.powi(-4), 4.0, ClassMode::Minus, &probes).unwrap());
    }

    #[test]
    fn weight_selection() {
        use BoundaryCondition::*;
        assert!(matches!(WeightA::for_bc(Navier, 3).unwrap(), WeightA::Harmonic(_)));
        assert!(matches!(WeightA::for_bc(Neumann, 3).unwrap(), WeightA::Harmonic(_)));
        assert!(matches!(WeightA::for_bc(Dirichlet, 3).unwrap(), WeightA::Biharmonic(_)));
        for bc in [DirichletNavier, KuttlerSigillito, NeumannNavier] {
            assert_eq!(WeightA::for_bc(bc, 3).unwrap(), WeightA::Unit);
        }
    }

    #[test]
    fn generic_over_f32() {
        let v = HarmonicH::new(3).unwrap().eval(2.0f32).unwrap();
        assert!((v.value - 0.5).abs() < 1e-6);
        let e = compute_exponents(2.0f32, 6).unwrap();
        assert!((e.p_crit - 3.0).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn exponent_invariants(p in 1.0001f64..20.0, n in 2u32..12) {
            let e = compute_exponents(p, n).unwrap();
            prop_assert!((e.p_conj * (p - 1.0) - p).abs() < 1e-12 * p.max(1.0));
            if n >= 5 { prop_assert!(e.p_crit > 1.0) } else { prop_assert!(e.p_crit.is_infinite()) }
            if p > e.p_crit { prop_assert!(e.omega_crit < n as f64) }
            prop_assert_eq!(p < e.p_fuj, e.theta > 0.0);
        }

        #[test]
        fn admissible_window_gives_positive_coefficient(n in 5u32..14, a in 0.0f64..1.0, b in 0.01f64..0.99) {
            let pc = n as f64 / (n as f64 - 4.0);
            let p = pc + 0.01 + a * 10.0;
            let lo = 4.0 / (p - 1.0);
            let hi = n as f64 - 4.0;
            let m = lo + b * (hi - lo);
            let s = make_supersolution(p, n, m, 0.05).unwrap();
            prop_assert!(s.big_m > 0.0);
            prop_assert!(-m * p + m + 4.0 < 0.0);
        }
    }
}
