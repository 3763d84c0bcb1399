//! Uniform radial grids on `[1, R_max]`, second-order radial stencils,
//! annulus quadrature in `N` dimensions and log-log power-law fits.

use crate::banded::BandedMatrix;
use crate::boundary::Closure;
use crate::error::{domain, Error, Result};
use crate::scalar::{int, lit, sphere_area, Scalar};

/// Uniform grid `r_i = 1 + i h`, `i = 0..=cells`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid<T> {
    pub dim: u32,
    pub r_max: T,
    pub cells: usize,
    pub h: T,
}

impl<T: Scalar> RadialGrid<T> {
    pub fn new(dim: u32, r_max: T, cells: usize) -> Result<Self> {
        if dim < 2 {
            return domain(format!("dimension must be at least 2 (got {dim})"));
        }
        if !(r_max > T::one()) || !r_max.is_finite() {
            return domain(format!("R_max must exceed 1 (got {r_max})"));
        }
        if cells < 8 {
            return domain(format!("at least 8 cells required (got {cells})"));
        }
        let h = (r_max - T::one()) / int(cells as i64);
        Ok(Self { dim, r_max, cells, h })
    }

    /// Grid with spacing as close as possible to `h` from below.
    pub fn with_spacing(dim: u32, r_max: T, h: T) -> Result<Self> {
        let cells = ((r_max - T::one()) / h).ceil().to_usize().unwrap_or(0);
        Self::new(dim, r_max, cells.max(8))
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn r(&self, i: usize) -> T {
        if i == self.cells {
            self.r_max
        } else {
            T::one() + int::<T>(i as i64) * self.h
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..self.len()).map(|i| self.r(i)).collect()
    }

    /// Same domain with half the spacing.
    pub fn refined(&self) -> Self {
        Self { cells: 2 * self.cells, h: self.h / lit(2.0), ..*self }
    }

    pub fn tabulate(&self, f: impl Fn(T) -> T) -> RadialField<T> {
        RadialField { grid: *self, values: self.nodes().into_iter().map(f).collect() }
    }

    /// Second-order central radial Laplacian at interior node `i`.
    #[inline]
    pub fn laplacian_at(&self, um: T, u0: T, up: T, i: usize) -> T {
        let h = self.h;
        let a: T = int(self.dim as i64 - 1);
        (up - lit::<T>(2.0) * u0 + um) / (h * h) + a / self.r(i) * (up - um) / (lit::<T>(2.0) * h)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadialField<T> {
    pub grid: RadialGrid<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> RadialField<T> {
    pub fn new(grid: RadialGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return domain(format!("field has {} values, grid has {} nodes", values.len(), grid.len()));
        }
        Ok(Self { grid, values })
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// Interior radial Laplacian. Endpoint entries are NaN: the boundary rows
/// belong to the closures.
pub fn radial_laplacian<T: Scalar>(grid: &RadialGrid<T>, field: &RadialField<T>) -> Result<RadialField<T>> {
    if field.grid != *grid || field.values.len() != grid.len() {
        return domain("field is not tabulated on this grid");
    }
    let u = &field.values;
    let mut out = vec![T::nan(); grid.len()];
    for i in 1..grid.cells {
        out[i] = grid.laplacian_at(u[i - 1], u[i], u[i + 1], i);
    }
    Ok(RadialField { grid: *grid, values: out })
}

/// Discrete bilaplacian as a Laplacian of the Laplacian, with the ghost
/// relations at both ends supplied by `closure`.
///
/// Entries at nodes the closure prescribes (for instance `u(1) = 0`) are NaN.
pub fn radial_bilaplacian<T: Scalar>(grid: &RadialGrid<T>, field: &RadialField<T>, closure: Option<&Closure<T>>) -> Result<RadialField<T>> {
    let closure = closure.ok_or_else(|| Error::Domain("bilaplacian requires a closure".into()))?;
    if field.grid != *grid || closure.grid != *grid {
        return domain("field, closure and grid disagree");
    }
    let values = closure.bilaplacian_full(&field.values);
    Ok(RadialField { grid: *grid, values })
}

/// Tridiagonal interior Laplacian; first and last rows are identity rows.
pub fn laplacian_operator<T: Scalar>(grid: &RadialGrid<T>) -> BandedMatrix<T> {
    let n = grid.len();
    let mut m = BandedMatrix::zeros(n, 1, 1);
    let h = grid.h;
    let a: T = int(grid.dim as i64 - 1);
    m.set(0, 0, T::one());
    m.set(n - 1, n - 1, T::one());
    for i in 1..n - 1 {
        let c = a / grid.r(i) / (lit::<T>(2.0) * h);
        m.set(i, i - 1, T::one() / (h * h) - c);
        m.set(i, i, lit::<T>(-2.0) / (h * h));
        m.set(i, i + 1, T::one() / (h * h) + c);
    }
    m
}

/// Quadrature controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions<T> {
    pub rel_tol: T,
    pub abs_floor: T,
    pub min_intervals: usize,
    pub max_intervals: usize,
}

impl<T: Scalar> Default for QuadOptions<T> {
    fn default() -> Self {
        let eps = T::epsilon().to_f64().unwrap_or(1e-16);
        Self { rel_tol: lit(1e-8f64.max(100.0 * eps)), abs_floor: lit(1e-14f64.max(eps * eps)), min_intervals: 16, max_intervals: 1 << 22 }
    }
}

/// Composite Simpson rule with interval doubling on `[a, b]`.
pub fn simpson<T: Scalar>(g: impl Fn(T) -> T, a: T, b: T, opts: &QuadOptions<T>) -> Result<T> {
    if a == b {
        return Ok(T::zero());
    }
    let eval = |x: T| -> Result<T> {
        let v = g(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Integration { abscissa: x.to_f64().unwrap_or(f64::NAN) })
        }
    };
    let mut n = opts.min_intervals.max(2);
    n += n % 2;
    let mut h = (b - a) / int(n as i64);
    let ends = eval(a)? + eval(b)?;
    let mut odd = T::zero();
    let mut even = T::zero();
    for k in 1..n {
        let v = eval(a + int::<T>(k as i64) * h)?;
        if k % 2 == 1 {
            odd = odd + v;
        } else {
            even = even + v;
        }
    }
    let three: T = lit(3.0);
    let four: T = lit(4.0);
    let two: T = lit(2.0);
    let mut prev = h / three * (ends + four * odd + two * even);
    loop {
        if 2 * n > opts.max_intervals {
            return Err(Error::NoConvergence {
                intervals: n,
                prev: prev.to_f64().unwrap_or(f64::NAN),
                last: prev.to_f64().unwrap_or(f64::NAN),
            });
        }
        even = even + odd;
        n *= 2;
        h = h / two;
        odd = T::zero();
        for k in (1..n).step_by(2) {
            odd = odd + eval(a + int::<T>(k as i64) * h)?;
        }
        let next = h / three * (ends + four * odd + two * even);
        if (next - prev).abs() <= opts.rel_tol * next.abs() + opts.abs_floor {
            return Ok(next);
        }
        prev = next;
    }
}

/// `omega_{N-1} * int_{r_lo}^{r_hi} g(r) r^(N-1) dr`.
pub fn annulus_quadrature<T: Scalar>(dim: u32, g: impl Fn(T) -> T, r_lo: T, r_hi: T) -> Result<T> {
    annulus_quadrature_with(dim, g, r_lo, r_hi, &QuadOptions::default())
}

pub fn annulus_quadrature_with<T: Scalar>(dim: u32, g: impl Fn(T) -> T, r_lo: T, r_hi: T, opts: &QuadOptions<T>) -> Result<T> {
    check_annulus(r_lo, r_hi)?;
    let k: T = int(dim as i64 - 1);
    let raw = simpson(|r| g(r) * r.powf(k), r_lo, r_hi, opts)?;
    Ok(sphere_area::<T>(dim) * raw)
}

/// Same integral in the variable `u = ln r`, for ranges over many decades.
pub fn annulus_quadrature_log<T: Scalar>(dim: u32, g: impl Fn(T) -> T, r_lo: T, r_hi: T, opts: &QuadOptions<T>) -> Result<T> {
    check_annulus(r_lo, r_hi)?;
    let n: T = int(dim as i64);
    let raw = simpson(|u: T| g(u.exp()) * (n * u).exp(), r_lo.ln(), r_hi.ln(), opts)?;
    Ok(sphere_area::<T>(dim) * raw)
}

/// Splits the annulus at `breaks` (sorted, inside `(r_lo, r_hi)`) and sums.
pub fn annulus_quadrature_split<T: Scalar>(
    dim: u32,
    g: impl Fn(T) -> T,
    r_lo: T,
    r_hi: T,
    breaks: &[T],
    opts: &QuadOptions<T>,
) -> Result<T> {
    check_annulus(r_lo, r_hi)?;
    let mut pts = vec![r_lo];
    pts.extend(breaks.iter().copied().filter(|&b| b > r_lo && b < r_hi));
    pts.push(r_hi);
    let mut total = T::zero();
    for w in pts.windows(2) {
        total = total + annulus_quadrature_with(dim, &g, w[0], w[1], opts)?;
    }
    Ok(total)
}

fn check_annulus<T: Scalar>(r_lo: T, r_hi: T) -> Result<()> {
    if !(r_lo >= T::one()) || !(r_hi > r_lo) || !r_hi.is_finite() {
        return domain(format!("annulus requires 1 <= r_lo < r_hi (got [{r_lo}, {r_hi}])"));
    }
    Ok(())
}

/// Least-squares fit of `ln y = slope * ln x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitResult<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
    pub residual_max: T,
    pub points: usize,
}

pub fn fit_power_law<T: Scalar>(points: &[(T, T)]) -> Result<FitResult<T>> {
    if points.iter().any(|&(x, y)| !(x > T::zero()) || !(y > T::zero()) || !x.is_finite() || !y.is_finite()) {
        return domain("power-law fit needs positive finite coordinates");
    }
    let logs: Vec<(T, T)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    fit_line(&logs)
}

/// Ordinary least squares on already-transformed data.
pub fn fit_line<T: Scalar>(pts: &[(T, T)]) -> Result<FitResult<T>> {
    if pts.len() < 2 {
        return Err(Error::Fit(format!("need at least 2 points (got {})", pts.len())));
    }
    let n: T = int(pts.len() as i64);
    let mx = pts.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pts.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in pts {
        sxx = sxx + (x - mx) * (x - mx);
        sxy = sxy + (x - mx) * (y - my);
        syy = syy + (y - my) * (y - my);
    }
    if !(sxx > T::zero()) {
        return Err(Error::Fit("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut ss_res = T::zero();
    let mut residual_max = T::zero();
    for &(x, y) in pts {
        let e = y - (slope * x + intercept);
        ss_res = ss_res + e * e;
        residual_max = residual_max.max(e.abs());
    }
    let r_squared = if syy > T::zero() { (T::one() - ss_res / syy).max(T::zero()).min(T::one()) } else { T::one() };
    Ok(FitResult { slope, intercept, r_squared, residual_max, points: pts.len() })
}
