//! Ghost-node closures for the six boundary-condition pairs at `r = 1`
//! and the clamped far field at `r = R_max`.
//!
//! The discrete bilaplacian is `L(L u)` with `L` the central radial
//! Laplacian. Writing `w = L u`, each pair fixes the boundary rows:
//!
//! | tag | node 0 | `w_0` | extra ghost |
//! |-----|--------|-------|-------------|
//! | navier | `u_0 = 0` | `0` | |
//! | dirichlet | `u_0 = 0` | from `u_-1 = u_1` | |
//! | dirichlet-navier | `u_0 = 0` | `(4 w_1 - w_2) / 3` | |
//! | kuttler-sigillito | unknown | from `u_-1 = u_1` | `w_-1 = w_1` |
//! | neumann-navier | unknown | `0` | `w_-1 = w_1` |
//! | neumann | `(4 u_1 - u_2) / 3` | `0` | |
//!
//! At the far end `u_M` and `w_M` are prescribed (zero unless set).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::banded::BandedMatrix;
use crate::error::{domain, Error, Result};
use crate::radial::{RadialField, RadialGrid};
use crate::scalar::{int, lit, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryCondition {
    /// I: `u = lap u = 0`.
    Navier,
    /// II: `u = du/dn = 0`.
    Dirichlet,
    /// III: `u = d(lap u)/dn = 0`.
    DirichletNavier,
    /// IV: `du/dn = d(lap u)/dn = 0`.
    KuttlerSigillito,
    /// V: `lap u = d(lap u)/dn = 0`.
    NeumannNavier,
    /// VI: `du/dn = lap u = 0`.
    Neumann,
}

impl BoundaryCondition {
    pub const ALL: [BoundaryCondition; 6] = [
        BoundaryCondition::Navier,
        BoundaryCondition::Dirichlet,
        BoundaryCondition::DirichletNavier,
        BoundaryCondition::KuttlerSigillito,
        BoundaryCondition::NeumannNavier,
        BoundaryCondition::Neumann,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundaryCondition::Navier => "navier",
            BoundaryCondition::Dirichlet => "dirichlet",
            BoundaryCondition::DirichletNavier => "dirichlet-navier",
            BoundaryCondition::KuttlerSigillito => "kuttler-sigillito",
            BoundaryCondition::NeumannNavier => "neumann-navier",
            BoundaryCondition::Neumann => "neumann",
        }
    }

    pub fn roman(self) -> &'static str {
        ["I", "II", "III", "IV", "V", "VI"][self as usize]
    }

    /// Whether `u(1)` is an unknown of the discrete system.
    pub fn boundary_node_free(self) -> bool {
        matches!(self, BoundaryCondition::KuttlerSigillito | BoundaryCondition::NeumannNavier)
    }
}

impl fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundaryCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        BoundaryCondition::ALL.into_iter().find(|bc| bc.name() == key || bc.roman().eq_ignore_ascii_case(&key)).ok_or_else(|| {
            let names: Vec<&str> = BoundaryCondition::ALL.iter().map(|b| b.name()).collect();
            Error::Domain(format!("unknown boundary condition '{s}' (expected one of {})", names.join(", ")))
        })
    }
}

/// Orientation of the normal derivative on the unit sphere.
///
/// Every constraint is homogeneous, so the discrete closures are the same
/// under both conventions; only reported normal derivatives change sign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalConvention {
    /// `nu = +e_r`, pointing away from the ball.
    #[default]
    Outward,
    /// `nu = -e_r`.
    Inward,
}

impl NormalConvention {
    pub fn normal_derivative<T: Scalar>(self, d_dr: T) -> T {
        match self {
            NormalConvention::Outward => d_dr,
            NormalConvention::Inward => -d_dr,
        }
    }
}

/// Prescribed `u` and `lap u` at `R_max`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FarField<T> {
    pub u: T,
    pub lap: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Closure<T> {
    pub bc: BoundaryCondition,
    pub grid: RadialGrid<T>,
    pub far: FarField<T>,
}

pub fn assemble_closure<T: Scalar>(bc: BoundaryCondition, grid: &RadialGrid<T>, dim: u32) -> Result<Closure<T>> {
    if dim != grid.dim {
        return domain(format!("closure dimension {dim} differs from grid dimension {}", grid.dim));
    }
    Ok(Closure { bc, grid: *grid, far: FarField { u: T::zero(), lap: T::zero() } })
}

impl<T: Scalar> Closure<T> {
    pub fn with_far_field(mut self, far: FarField<T>) -> Self {
        self.far = far;
        self
    }

    /// Index of the first unknown node.
    pub fn first_unknown(&self) -> usize {
        if self.bc.boundary_node_free() {
            0
        } else {
            1
        }
    }

    pub fn unknowns(&self) -> usize {
        self.grid.cells - self.first_unknown()
    }

    /// Full nodal vector from the unknowns.
    pub fn expand(&self, x: &[T]) -> Vec<T> {
        let m = self.grid.cells;
        let first = self.first_unknown();
        let mut u = vec![T::zero(); m + 1];
        u[first..m].copy_from_slice(x);
        u[m] = self.far.u;
        if self.bc == BoundaryCondition::Neumann {
            u[0] = (lit::<T>(4.0) * u[1] - u[2]) / lit(3.0);
        }
        u
    }

    /// Discrete `lap u` at every node, boundary values from the closure.
    pub fn laplacian_full(&self, u: &[T]) -> Vec<T> {
        let g = &self.grid;
        let m = g.cells;
        let h2 = g.h * g.h;
        let mut w = vec![T::zero(); m + 1];
        for i in 1..m {
            w[i] = g.laplacian_at(u[i - 1], u[i], u[i + 1], i);
        }
        w[m] = self.far.lap;
        use BoundaryCondition::*;
        w[0] = match self.bc {
            Navier | NeumannNavier | Neumann => T::zero(),
            Dirichlet | KuttlerSigillito => lit::<T>(2.0) * (u[1] - u[0]) / h2,
            DirichletNavier => (lit::<T>(4.0) * w[1] - w[2]) / lit(3.0),
        };
        w
    }

    /// Discrete bilaplacian at every node; NaN where the closure prescribes the value.
    pub fn bilaplacian_full(&self, u: &[T]) -> Vec<T> {
        let g = &self.grid;
        let m = g.cells;
        let w = self.laplacian_full(u);
        let mut out = vec![T::nan(); m + 1];
        for i in 1..m {
            out[i] = g.laplacian_at(w[i - 1], w[i], w[i + 1], i);
        }
        if self.first_unknown() == 0 {
            out[0] = lit::<T>(2.0) * (w[1] - w[0]) / (g.h * g.h);
        }
        out
    }

    /// Discrete bilaplacian restricted to the unknowns.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let u = self.expand(x);
        let full = self.bilaplacian_full(&u);
        full[self.first_unknown()..self.grid.cells].to_vec()
    }

    /// Matrix `A` and offset `b` with `apply(x) = A x + b`.
    pub fn assemble(&self) -> (BandedMatrix<T>, Vec<T>) {
        let n = self.unknowns();
        let zero = vec![T::zero(); n];
        let b = self.apply(&zero);
        let mut a = BandedMatrix::zeros(n, 2, 2);
        for group in 0..5 {
            let mut x = zero.clone();
            for j in (group..n).step_by(5) {
                x[j] = T::one();
            }
            let y = self.apply(&x);
            for j in (group..n).step_by(5) {
                for i in j.saturating_sub(2)..=(j + 2).min(n - 1) {
                    a.set(i, j, y[i] - b[i]);
                }
            }
        }
        (a, b)
    }

    /// Second-order one-sided discretisations of the two constraints at `r = 1`.
    pub fn constraint_residuals(&self, field: &RadialField<T>) -> [T; 2] {
        let u = &field.values;
        let g = &self.grid;
        let h = g.h;
        let a: T = int(g.dim as i64 - 1);
        let two: T = lit(2.0);
        let value = u[0];
        let slope = (lit::<T>(-3.0) * u[0] + lit::<T>(4.0) * u[1] - u[2]) / (two * h);
        let curv = (two * u[0] - lit::<T>(5.0) * u[1] + lit::<T>(4.0) * u[2] - u[3]) / (h * h);
        let lap = curv + a * slope;
        let w: Vec<T> = (1..=3).map(|i| g.laplacian_at(u[i - 1], u[i], u[i + 1], i)).collect();
        let dlap = (lit::<T>(-2.5) * w[0] + lit::<T>(4.0) * w[1] - lit::<T>(1.5) * w[2]) / h;
        use BoundaryCondition::*;
        match self.bc {
            Navier => [value, lap],
            Dirichlet => [value, slope],
            DirichletNavier => [value, dlap],
            KuttlerSigillito => [slope, dlap],
            NeumannNavier => [lap, dlap],
            Neumann => [slope, lap],
        }
    }

    /// Coefficient matrix of the two left relations in their boundary or ghost unknowns.
    pub fn ghost_matrix(&self) -> [[T; 2]; 2] {
        ghost_matrix(self.bc, self.grid.h)
    }
}

/// Row-normalised ghost system of a tag at spacing `h`.
pub fn ghost_matrix<T: Scalar>(bc: BoundaryCondition, h: T) -> [[T; 2]; 2] {
    let one = T::one();
    let z = T::zero();
    let half_h = one / (lit::<T>(2.0) * h);
    let norm = |row: [T; 2], extra: T| {
        let s = row[0].abs().max(row[1].abs()).max(extra.abs());
        [row[0] / s, row[1] / s]
    };
    use BoundaryCondition::*;
    match bc {
        Navier => [[one, z], [z, one]],
        // (u_0, u_-1): u_0 = 0 and (u_1 - u_-1) / 2h = 0
        Dirichlet => [[one, z], norm([z, -half_h], half_h)],
        // (u_0, w_0): u_0 = 0 and (3 w_0 - 4 w_1 + w_2) / 2h = 0
        DirichletNavier => [[one, z], norm([z, lit::<T>(3.0) * half_h], lit::<T>(4.0) * half_h)],
        // (u_-1, w_-1): both mirror relations
        KuttlerSigillito => [norm([-half_h, z], half_h), norm([z, -half_h], half_h)],
        // (w_0, w_-1)
        NeumannNavier => [[one, z], norm([z, -half_h], half_h)],
        // (u_0, w_0): (-3 u_0 + 4 u_1 - u_2) / 2h = 0 and w_0 = 0
        Neumann => [norm([lit::<T>(-3.0) * half_h, z], lit::<T>(4.0) * half_h), [z, one]],
    }
}

pub fn ghost_determinant<T: Scalar>(bc: BoundaryCondition, h: T) -> T {
    let m = ghost_matrix(bc, h);
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

/// Outer-tail magnitude of a field relative to its global maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FarFieldReport<T> {
    pub tail_max: T,
    pub global_max: T,
    pub ratio: T,
    pub flagged: bool,
}

pub const FAR_FIELD_THRESHOLD: f64 = 1e-4;

pub fn far_field_decay_check<T: Scalar>(field: &RadialField<T>, tail_fraction: T) -> Result<FarFieldReport<T>> {
    if !(tail_fraction > T::zero() && tail_fraction < lit(0.5)) {
        return domain(format!("tail fraction must lie in (0, 0.5) (got {tail_fraction})"));
    }
    let g = &field.grid;
    let start = g.r_max - tail_fraction * (g.r_max - T::one());
    let mut tail_max = T::zero();
    let mut global_max = T::zero();
    for (i, v) in field.values.iter().enumerate() {
        let a = v.abs();
        global_max = global_max.max(a);
        if g.r(i) >= start {
            tail_max = tail_max.max(a);
        }
    }
    let ratio = if global_max > T::zero() { tail_max / global_max } else { T::zero() };
    Ok(FarFieldReport { tail_max, global_max, ratio, flagged: ratio > lit(FAR_FIELD_THRESHOLD) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{BiharmonicB, HarmonicH};
    use proptest::prelude::*;

    fn constraint_ratio(bc: BoundaryCondition, dim: u32, u: impl Fn(f64) -> f64) -> [f64; 2] {
        let res = |cells| {
            let g = RadialGrid::new(dim, 2.0, cells).unwrap();
            let c = assemble_closure(bc, &g, dim).unwrap();
            c.constraint_residuals(&g.tabulate(&u))
        };
        let a = res(40);
        let b = res(80);
        [ratio(a[0], b[0]), ratio(a[1], b[1])]
    }

    fn ratio(a: f64, b: f64) -> f64 {
        if a.abs() < 1e-11 && b.abs() < 1e-11 {
            4.0
        } else {
            a / b
        }
    }

    fn second_order(r: [f64; 2]) -> bool {
        r.iter().all(|x| *x >= 3.3)
    }

    #[test]
    fn names_round_trip() {
        for bc in BoundaryCondition::ALL {
            assert_eq!(bc.name().parse::<BoundaryCondition>().unwrap(), bc);
            assert_eq!(bc.roman().parse::<BoundaryCondition>().unwrap(), bc);
            let json = serde_json::to_string(&bc).unwrap();
            assert_eq!(json, format!("\"{}\"", bc.name()));
        }
        assert!("robin".parse::<BoundaryCondition>().is_err());
    }

    #[test]
    fn dirichlet_on_shifted_quadratic() {
        let g = RadialGrid::new(3, 2.0, 40).unwrap();
        let c = assemble_closure(BoundaryCondition::Dirichlet, &g, 3).unwrap();
        let r = c.constraint_residuals(&g.tabulate(|r: f64| (r - 1.0).powi(2)));
        assert!(r[0].abs() < 1e-14 && r[1].abs() < 1e-12);
        let r = c.constraint_residuals(&g.tabulate(|r: f64| (r - 1.0).powi(2) + (r - 1.0).powi(3)));
        // one-sided slope of s^3 is exactly -2 h^2
        assert!((r[1] + 2.0 * g.h * g.h).abs() < 1e-12);
    }

    #[test]
    fn matching_fields_satisfy_constraints_at_second_order() {
        use BoundaryCondition::*;
        for n in [2u32, 3, 4, 5, 7] {
            let a = (n - 1) as f64;
            let h = HarmonicH::new(n).unwrap();
            let b = BiharmonicB::new(n).unwrap();
            let cases: [(BoundaryCondition, Box<dyn Fn(f64) -> f64>); 6] = [
                (Navier, Box::new(move |r| h.eval(r).unwrap().value)),
                (Dirichlet, Box::new(move |r| b.eval(r).unwrap().value)),
                (
                    DirichletNavier,
                    Box::new(move |r| {
                        let s = r - 1.0;
                        s + a / 6.0 * s.powi(3)
                    }),
                ),
                (
                    KuttlerSigillito,
                    Box::new(move |r| {
                        let s = r - 1.0;
                        1.0 + s * s - a / 3.0 * s.powi(3)
                    }),
                ),
                (
                    NeumannNavier,
                    Box::new(move |r| {
                        let s = r - 1.0;
                        s - a / 2.0 * s * s + n as f64 * a / 6.0 * s.powi(3)
                    }),
                ),
                (Neumann, Box::new(|r| 1.0 + (r - 1.0).powi(3))),
            ];
            for (bc, u) in cases {
                let ratios = constraint_ratio(bc, n, u);
                assert!(second_order(ratios), "{bc} N={n}: {ratios:?}");
            }
        }
    }

    #[test]
    fn assembly_reproduces_apply() {
        for bc in BoundaryCondition::ALL {
            let g = RadialGrid::new(4, 3.0, 23).unwrap();
            let c = assemble_closure(bc, &g, 4).unwrap().with_far_field(FarField { u: 0.3, lap: -0.2 });
            let (a, b) = c.assemble();
            let x: Vec<f64> = (0..c.unknowns()).map(|i| (i as f64 * 0.7).cos()).collect();
            let y = a.matvec(&x);
            let z = c.apply(&x);
            for i in 0..x.len() {
                assert!((y[i] + b[i] - z[i]).abs() < 1e-8 * (1.0 + z[i].abs()), "{bc} row {i}");
            }
        }
    }

    #[test]
    fn constant_field_has_zero_bilaplacian_in_interior() {
        let g = RadialGrid::new(3, 3.0, 20).unwrap();
        let c = assemble_closure(BoundaryCondition::NeumannNavier, &g, 3).unwrap().with_far_field(FarField { u: 1.0, lap: 0.0 });
        let out = c.bilaplacian_full(&vec![1.0; g.len()]);
        for v in &out[0..g.cells] {
            assert_eq!(*v, 0.0);
        }
    }

    #[test]
    fn far_field_examples() {
        let g = RadialGrid::new(3, 10.0, 90).unwrap();
        let bump = g.tabulate(|r: f64| if r < 5.0 { (r - 1.0) * (5.0 - r) } else { 0.0 });
        let rep = far_field_decay_check(&bump, 0.2).unwrap();
        assert_eq!(rep.ratio, 0.0);
        assert!(!rep.flagged);
        let rep = far_field_decay_check(&g.tabulate(|_| 1.0), 0.2).unwrap();
        assert_eq!(rep.ratio, 1.0);
        assert!(rep.flagged);
        assert!(far_field_decay_check(&bump, 0.7).is_err());
    }

    #[test]
    fn normal_convention_flips_derivatives() {
        assert_eq!(NormalConvention::Outward.normal_derivative(2.0), 2.0);
        assert_eq!(NormalConvention::Inward.normal_derivative(2.0), -2.0);
    }

    proptest! {
        #[test]
        fn ghost_relations_are_solvable(h in 1e-4f64..1e-1) {
            for bc in BoundaryCondition::ALL {
                prop_assert!(ghost_determinant(bc, h).abs() >= 0.5, "{}", bc);
            }
        }
    }
}
