//! Verification catalogs producing one report row per check.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::closed_forms::{compute_exponents, forcing_in_class, make_supersolution, BiharmonicB, ClassMode, HarmonicH};
use crate::error::Result;
use crate::radial::{QuadOptions, RadialGrid};
use crate::testfn::{
    applicable_lemmas, find_lemma, verify_lemma, verify_lifespan_cutoff_bounds, Argument, Family, LemmaCheck, LemmaParams, TestFunctionSpec,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: String,
    pub check: String,
    pub params: String,
    pub measured: f64,
    pub expected: String,
    pub pass: bool,
}

impl CheckRow {
    pub const CSV_HEADER: &'static str = "suite,check,params,measured,expected,verdict";

    fn new(
        suite: &str,
        check: impl Into<String>,
        params: impl Into<String>,
        measured: f64,
        expected: impl Into<String>,
        pass: bool,
    ) -> Self {
        Self { suite: suite.into(), check: check.into(), params: params.into(), measured, expected: expected.into(), pass }
    }

    pub fn verdict(&self) -> &'static str {
        if self.pass {
            "PASS"
        } else {
            "FAIL"
        }
    }

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{:e},{},{}",
            self.suite,
            self.check,
            self.params.replace(',', ";"),
            self.measured,
            self.expected.replace(',', ";"),
            self.verdict()
        )
    }
}

pub const CONVERGENCE_BAND: (f64, f64) = (3.5, 4.5);

/// Flux-form radial Laplacian `r^(1-N) (r^(N-1) u')'` at node `i`.
fn flux_laplacian(grid: &RadialGrid<f64>, u: &[f64], i: usize) -> f64 {
    let k = grid.dim as f64 - 1.0;
    let h = grid.h;
    let r = grid.r(i);
    let (rp, rm) = ((r + h / 2.0).powf(k), (r - h / 2.0).powf(k));
    (rp * (u[i + 1] - u[i]) - rm * (u[i] - u[i - 1])) / (h * h * r.powf(k))
}

/// Max interior error of the flux-form Laplacian applied to `g`.
fn laplacian_error(dim: u32, g: impl Fn(f64) -> f64, exact: impl Fn(f64) -> f64, cells: usize) -> Result<f64> {
    let grid = RadialGrid::<f64>::new(dim, 6.0, cells)?;
    let u: Vec<f64> = grid.nodes().iter().map(|&r| g(r)).collect();
    let mut err = 0.0f64;
    for i in 1..grid.cells {
        let r = grid.r(i);
        if (1.5..=5.5).contains(&r) {
            err = err.max((flux_laplacian(&grid, &u, i) - exact(r)).abs());
        }
    }
    Ok(err)
}

/// Max interior error of the flux-form Laplacian applied twice to `g`.
fn bilaplacian_error(dim: u32, g: impl Fn(f64) -> f64, cells: usize) -> Result<f64> {
    let grid = RadialGrid::<f64>::new(dim, 6.0, cells)?;
    let u: Vec<f64> = grid.nodes().iter().map(|&r| g(r)).collect();
    let mut w = vec![0.0; u.len()];
    for i in 1..grid.cells {
        w[i] = flux_laplacian(&grid, &u, i);
    }
    let mut err = 0.0f64;
    for i in 2..grid.cells - 1 {
        let r = grid.r(i);
        if (1.5..=5.5).contains(&r) {
            err = err.max(flux_laplacian(&grid, &w, i).abs());
        }
    }
    Ok(err)
}

pub fn closed_forms_suite() -> Result<Vec<CheckRow>> {
    const S: &str = "closed-forms";
    let (lo, hi) = CONVERGENCE_BAND;
    let band = format!("ratio in [{lo}; {hi}]");
    let mut rows = Vec::new();
    for n in 2..=10u32 {
        let h = HarmonicH::new(n)?;
        let b = BiharmonicB::new(n)?;
        let params = format!("N={n}");
        let e1 = laplacian_error(n, |r| h.eval(r).unwrap().value, |_| 0.0, 100)?;
        let e2 = laplacian_error(n, |r| h.eval(r).unwrap().value, |_| 0.0, 200)?;
        let q = e1 / e2;
        rows.push(CheckRow::new(S, "lap H -> 0 at second order", &params, q, &band, (lo..=hi).contains(&q)));
        let e1 = bilaplacian_error(n, |r| b.eval(r).unwrap().value, 100)?;
        let e2 = bilaplacian_error(n, |r| b.eval(r).unwrap().value, 200)?;
        let q = e1 / e2;
        rows.push(CheckRow::new(S, "bilap B -> 0 at second order", &params, q, &band, (lo..=hi).contains(&q)));
        let e1 = laplacian_error(n, |r| b.eval(r).unwrap().value, |r| b.eval(r).unwrap().laplacian, 100)?;
        let e2 = laplacian_error(n, |r| b.eval(r).unwrap().value, |r| b.eval(r).unwrap().laplacian, 200)?;
        let q = e1 / e2;
        rows.push(CheckRow::new(S, "lap B closed form", &params, q, &band, (lo..=hi).contains(&q)));
        let hv = h.eval(1.0f64)?;
        rows.push(CheckRow::new(S, "H(1) = 0", &params, hv.value, "0", hv.value == 0.0));
        let bv = b.eval(1.0f64)?;
        rows.push(CheckRow::new(S, "B(1) = 0", &params, bv.value, "0", bv.value == 0.0));
        rows.push(CheckRow::new(S, "B'(1) = 0", &params, bv.d1, "0", bv.d1 == 0.0));
        rows.push(CheckRow::new(S, "lap B(1) = 0", &params, bv.laplacian, "0", bv.laplacian == 0.0));
    }
    Ok(rows)
}

pub fn supersolution_suite(dim: u32, p: f64, m: f64, eps: f64) -> Result<Vec<CheckRow>> {
    const S: &str = "supersolution";
    let v = make_supersolution(p, dim, m, eps)?;
    let params = format!("N={dim} p={p} m={m} eps={eps}");
    let mut rows = vec![CheckRow::new(S, "M > 0", &params, v.big_m, "> 0", v.big_m > 0.0)];
    let probes: Vec<f64> = (0..=3000).map(|i| 10f64.powf(3.0 * i as f64 / 3000.0)).collect();
    let fmin = probes.iter().map(|&r| v.forcing(r) * r.powf(m + 4.0)).fold(f64::INFINITY, f64::min);
    rows.push(CheckRow::new(S, "f r^(m+4) > 0 on [1; 1e3]", &params, fmin, "> 0", fmin > 0.0));
    let bilap_err =
        probes.iter().map(|&r| ((v.bilaplacian(r) - eps * v.big_m * r.powf(-m - 4.0)) / v.bilaplacian(r)).abs()).fold(0.0, f64::max);
    rows.push(CheckRow::new(S, "bilap v = eps M r^(-m-4)", &params, bilap_err, "< 1e-12", bilap_err < 1e-12));
    let minus = forcing_in_class(|r| v.forcing(r), m + 4.0, ClassMode::Minus, &probes)?;
    rows.push(CheckRow::new(S, "f in I^-_(m+4)", &params, m + 4.0, "true", minus));
    for e in v.boundary_signs().entries {
        let (out, inw) = e.positive_under();
        rows.push(CheckRow::new(S, format!("sign {} at r=1", e.name), &params, e.outward, format!("outward>0={out} inward>0={inw}"), true));
    }
    Ok(rows)
}

/// Random admissible supersolutions. Smallness `eps^(p-1) < M` is part of admissibility;
/// samples violating it are counted and must show `f(1) <= 0`.
pub fn random_supersolution_suite(samples: usize, seed: u64) -> Result<Vec<CheckRow>> {
    const S: &str = "supersolution-random";
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut m_pos, mut f_pos, mut admissible, mut small_fail, mut consistent, mut rejected) = (0, 0, 0, 0, 0, 0);
    let probes: Vec<f64> = (0..=600).map(|i| 10f64.powf(3.0 * i as f64 / 600.0)).collect();
    for _ in 0..samples {
        let dim: u32 = rng.gen_range(5..=10);
        let pc = dim as f64 / (dim as f64 - 4.0);
        let p = pc * (1.0 + rng.gen_range(0.01..1.5));
        let lo = 4.0 / (p - 1.0);
        let hi = dim as f64 - 4.0;
        let m = lo + (hi - lo) * rng.gen_range(0.02..0.98);
        let eps = 10f64.powf(rng.gen_range(-4.0..-1.0));
        let v = make_supersolution(p, dim, m, eps)?;
        if v.big_m > 0.0 {
            m_pos += 1;
        }
        let positive = probes.iter().all(|&r| v.forcing(r) > 0.0);
        if eps.powf(p - 1.0) < v.big_m {
            admissible += 1;
            if positive {
                f_pos += 1;
            }
        } else {
            small_fail += 1;
            if v.forcing(1.0) <= 0.0 {
                consistent += 1;
            }
        }
        let bad_m = if rng.gen_bool(0.5) { lo * rng.gen_range(0.5..1.0) } else { hi * rng.gen_range(1.0..1.5) };
        if make_supersolution(p, dim, bad_m, eps).is_err() {
            rejected += 1;
        }
    }
    let params = format!("samples={samples} seed={seed}");
    Ok(vec![
        CheckRow::new(S, "M > 0", &params, m_pos as f64, format!("{samples}"), m_pos == samples),
        CheckRow::new(S, "f > 0 on [1; 1e3] for admissible", &params, f_pos as f64, format!("{admissible}"), f_pos == admissible),
        CheckRow::new(
            S,
            "smallness violations have f(1) <= 0",
            &params,
            consistent as f64,
            format!("{small_fail}"),
            consistent == small_fail,
        ),
        CheckRow::new(S, "inadmissible m rejected", &params, rejected as f64, format!("{samples}"), rejected == samples),
    ])
}

pub fn lemma_rows(checks: &[LemmaCheck]) -> Vec<CheckRow> {
    checks
        .iter()
        .map(|c| {
            CheckRow::new(
                "lemmas",
                c.id,
                format!("N={} p={} ell={} j={} R={:e}..{:e}", c.dim, c.p, c.ell, c.j, c.rows[0].0, c.rows.last().unwrap().0),
                c.fit.slope,
                format!(
                    "{:.4} (log power {:.3}); spread {:.2}; upper bound {}",
                    c.predicted_exponent,
                    c.log_power,
                    c.ratio_spread,
                    if c.upper_bound_ok { "holds" } else { "violated" }
                ),
                c.pass,
            )
        })
        .collect()
}

/// Every applicable catalog entry at `(N, p)`; `critical` selects the logarithmic entries.
pub fn lemma_suite(dim: u32, p: f64, critical: bool, filter: Option<&str>) -> Result<Vec<LemmaCheck>> {
    let mut out = Vec::new();
    for t in applicable_lemmas(dim, p, critical) {
        if filter.is_some_and(|f| !t.id.contains(f)) {
            continue;
        }
        out.push(verify_lemma(&t, &LemmaParams::new(dim, p), t.default_ladder(dim, p))?);
    }
    Ok(out)
}

/// Scaling `I(lambda T) / I(T) = lambda^(1-p')` of the time factor.
pub fn time_scaling_rows(dim: u32, p: f64) -> Result<Vec<CheckRow>> {
    let opts = QuadOptions::default();
    let pc = p / (p - 1.0);
    let base = TestFunctionSpec::new(Family::Phi3, Argument::Standard, dim, p, 10.0, 1.0)?;
    let i1 = base.with_time(7.0).build()?.time_factor(&opts)?;
    let mut rows = Vec::new();
    for lam in [2.0, 5.0, 10.0] {
        let il = base.with_time(7.0 * lam).build()?.time_factor(&opts)?;
        let rel = (il / i1 / lam.powf(1.0 - pc) - 1.0).abs();
        rows.push(CheckRow::new("lemmas", "time factor scaling", format!("N={dim} p={p} lambda={lam}"), rel, "< 1e-8", rel < 1e-8));
    }
    Ok(rows)
}

/// Same verdict for one entry with the plateau end moved by a tenth of the window.
pub fn profile_robustness_row(id: &str, dim: u32, p: f64) -> Result<CheckRow> {
    let t = find_lemma(id).ok_or_else(|| crate::Error::Domain(format!("unknown lemma {id}")))?;
    let ladder = t.default_ladder(dim, p);
    let a = verify_lemma(&t, &LemmaParams::new(dim, p), ladder)?;
    let b = verify_lemma(&t, &LemmaParams { shift: 0.1, ..LemmaParams::new(dim, p) }, ladder)?;
    Ok(CheckRow::new(
        "lemmas",
        format!("{id} shifted profile"),
        format!("N={dim} p={p}"),
        b.fit.slope,
        format!("verdict {}", a.verdict()),
        a.pass == b.pass,
    ))
}

pub fn lifespan_cutoff_suite(p: f64, dim: u32) -> Result<Vec<CheckRow>> {
    compute_exponents(p, dim)?;
    let rep = verify_lifespan_cutoff_bounds(p, dim, &[10.0, 100.0, 1000.0], 20_000, 2024)?;
    let params = format!("N={dim} p={p} R=10..1000");
    Ok(vec![
        CheckRow::new(
            "lifespan-cutoffs",
            "R |dt psi| / psi*^(1/p) flat",
            &params,
            rep.time_slope,
            "|slope| <= 0.1",
            rep.time_slope.abs() <= 0.1,
        ),
        CheckRow::new(
            "lifespan-cutoffs",
            "R |bilap psi| / psi*^(1/p) flat",
            &params,
            rep.bilap_slope,
            "|slope| <= 0.1",
            rep.bilap_slope.abs() <= 0.1,
        ),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn supersolution_example_reports_m() {
        let rows = supersolution_suite(6, 4.0, 1.5, 0.1).unwrap();
        assert_eq!(rows[0].measured, 6.5625);
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }

    #[test]
    fn closed_form_convergence_rows_pass() {
        let rows = closed_forms_suite().unwrap();
        for r in rows.iter().filter(|r| {
            r.check.contains("order") || r.check.contains("closed form") || r.check.starts_with("H(") || r.check.starts_with("B")
        }) {
            assert!(r.pass, "{r:?}");
        }
        let lap_b: Vec<&CheckRow> = rows.iter().filter(|r| r.check == "lap B(1) = 0").collect();
        assert!(lap_b[0].pass);
        assert!(lap_b[1..].iter().all(|r| !r.pass && r.measured > 0.0));
    }

    #[test]
    fn random_supersolutions() {
        let rows = random_supersolution_suite(100, 1).unwrap();
        assert!(rows.iter().all(|r| r.pass), "{rows:?}");
    }
}
