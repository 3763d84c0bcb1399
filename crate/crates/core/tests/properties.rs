use biharm_core::boundary::{assemble_closure, FarField};
use biharm_core::closed_forms::make_supersolution;
use biharm_core::experiments::{run_id, Classification};
use biharm_core::radial::{radial_bilaplacian, QuadOptions, RadialGrid};
use biharm_core::solver::{discrete_energy, simulate, OutcomeKind, ProblemSpec, RadialRule, Stepper};
use biharm_core::testfn::{Argument, CutoffKind, CutoffSpec, Family, TestFunction, TestFunctionSpec};
use biharm_core::BoundaryCondition;
use proptest::prelude::*;

const ALL_BC: [BoundaryCondition; 6] = BoundaryCondition::ALL;

fn bc_strategy() -> impl Strategy<Value = BoundaryCondition> {
    (0usize..6).prop_map(|i| ALL_BC[i])
}

fn kind_strategy() -> impl Strategy<Value = CutoffKind> {
    prop_oneof![Just(CutoffKind::Zeta), Just(CutoffKind::Xi), Just(CutoffKind::F)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cutoff_values_stay_in_unit_interval(kind in kind_strategy(), ell in 1u32..12, shift in 0.0f64..0.3, s in -0.5f64..3.0) {
        let c = CutoffSpec::<f64>::new(kind, ell).shifted(shift);
        let v = c.eval(s, 0);
        prop_assert!((0.0..=1.0).contains(&v), "{v}");
    }

    #[test]
    fn cutoff_derivatives_vanish_off_transition(kind in kind_strategy(), ell in 1u32..12, u in 0.0f64..1.0) {
        let c = CutoffSpec::<f64>::new(kind, ell);
        let (a, b) = c.window();
        let flat_before = a * u;
        let flat_after = b + u * 2.0;
        for order in 1..=4 {
            prop_assert_eq!(c.eval(flat_before, order), 0.0);
            prop_assert_eq!(c.eval(flat_after, order), 0.0);
        }
    }

    #[test]
    fn time_factor_scales_with_conjugate_exponent(dim in 2u32..9, p in 1.2f64..5.0, lam in 2.0f64..10.0) {
        let opts = QuadOptions::default();
        let base = TestFunctionSpec::new(Family::Phi3, Argument::Standard, dim, p, 10.0, 1.0).unwrap();
        let i1 = base.with_time(7.0).build().unwrap().time_factor(&opts).unwrap();
        let il = base.with_time(7.0 * lam).build().unwrap().time_factor(&opts).unwrap();
        let pc = p / (p - 1.0);
        let rel = (il / i1 / lam.powf(1.0 - pc) - 1.0).abs();
        prop_assert!(rel < 1e-8, "rel {rel}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn zero_is_a_fixed_point(bc in bc_strategy(), dim in 2u32..9, p in 1.1f64..6.0) {
        let mut spec = ProblemSpec::<f64>::new(dim, p, bc, 12.0, 48);
        spec.t_max = 5.0;
        spec.stationary_delta = 1e9;
        let out = simulate(&spec).unwrap();
        let survived_at_zero = matches!(out.kind, OutcomeKind::Survived { sup, .. } if sup == 0.0);
        prop_assert!(survived_at_zero, "{:?}", out.kind);
        prop_assert!(out.final_u.iter().all(|&u| u == 0.0));
    }

    #[test]
    fn linear_energy_never_increases(navier in any::<bool>(), dim in 2u32..8, center in 1.5f64..5.0, width in 0.3f64..2.0, dt in 1e-4f64..0.5) {
        let bc = if navier { BoundaryCondition::Navier } else { BoundaryCondition::Dirichlet };
        let mut spec = ProblemSpec::<f64>::new(dim, 2.0, bc, 12.0, 96);
        spec.nonlinear = false;
        spec.initial = RadialRule::bump(1.0, center, width);
        let grid = spec.grid().unwrap();
        let mut st = Stepper::new(&spec).unwrap();
        let w = st.energy_weights();
        let u0: Vec<f64> = grid.nodes().into_iter().map(|r| spec.initial_value(r).unwrap()).collect();
        let mut x = st.restrict(&u0);
        let mut e = discrete_energy(&w, &x, grid.h);
        for k in 0..20 {
            x = st.step(&x, k as f64 * dt, dt).unwrap();
            let e_next = discrete_energy(&w, &x, grid.h);
            prop_assert!(e_next <= e * (1.0 + 1e-13), "step {k}: {e} -> {e_next}");
            e = e_next;
        }
    }

    #[test]
    fn identical_specs_classify_identically(dim in 3u32..7, p in 1.5f64..4.0, coeff in 0.5f64..3.0) {
        let mut spec = ProblemSpec::<f64>::new(dim, p, BoundaryCondition::Navier, 20.0, 120);
        spec.forcing = RadialRule::bump(coeff, 2.0, 1.0);
        spec.t_max = 30.0;
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec.clone()).unwrap();
        prop_assert_eq!(run_id(&spec).unwrap(), run_id(&spec.clone()).unwrap());
        prop_assert_eq!(Classification::of(&a), Classification::of(&b));
        prop_assert_eq!(a.kind, b.kind);
    }

    #[test]
    fn supersolution_forcing_is_positive_when_small(dim in 5u32..11, q in 0.05f64..1.0, frac in 0.05f64..0.95, log_eps in -4.0f64..-1.0) {
        let pc = dim as f64 / (dim as f64 - 4.0);
        let p = pc * (1.0 + q);
        let (lo, hi) = (4.0 / (p - 1.0), dim as f64 - 4.0);
        let m = lo + (hi - lo) * frac;
        let eps = 10f64.powf(log_eps);
        let v = make_supersolution(p, dim, m, eps).unwrap();
        prop_assert!(v.big_m > 0.0);
        if eps.powf(p - 1.0) < v.big_m {
            for i in 0..=200 {
                let r = 10f64.powf(3.0 * i as f64 / 200.0);
                prop_assert!(v.forcing(r) > 0.0, "r = {r}");
            }
        }
    }
}

fn bilap_error(tf: &TestFunction<f64>, cells: usize, r_max: f64, window: (f64, f64)) -> f64 {
    let n = tf.spec.dim;
    let g = RadialGrid::new(n, r_max, cells).unwrap();
    let field = g.tabulate(|r| tf.spatial(r).unwrap().value);
    let last = field.values[g.cells];
    let c = assemble_closure(BoundaryCondition::Navier, &g, n).unwrap().with_far_field(FarField { u: last, lap: 0.0 });
    let bl = radial_bilaplacian(&g, &field, Some(&c)).unwrap();
    (2..g.cells - 1)
        .map(|i| (g.r(i), bl.values[i]))
        .filter(|(r, _)| (window.0..=window.1).contains(r))
        .map(|(r, b)| (b - tf.spatial(r).unwrap().bilaplacian).abs())
        .fold(0.0, f64::max)
}

#[test]
fn log_argument_bilaplacian_converges_in_every_dimension() {
    for family in [Family::Phi1, Family::Phi2, Family::Phi3] {
        for n in [2u32, 3, 4, 5, 6, 8] {
            let tf = TestFunctionSpec::new(family, Argument::Logarithmic, n, 2.0, 36.0, 5.0).unwrap().build().unwrap();
            let e1 = bilap_error(&tf, 400, 40.0, (6.5, 35.0));
            let e2 = bilap_error(&tf, 800, 40.0, (6.5, 35.0));
            let ratio = e1 / e2;
            assert!((3.5..=4.5).contains(&ratio), "{family:?} N={n} ratio {ratio}");
        }
    }
}

#[test]
fn log_argument_plateau_is_annihilated() {
    for family in [Family::Phi1, Family::Phi2, Family::Phi3] {
        for n in [2u32, 3, 4, 5, 6, 8] {
            let big_r = 400.0f64;
            let tf = TestFunctionSpec::new(family, Argument::Logarithmic, n, 2.0, big_r, 5.0).unwrap().build().unwrap();
            let peak = (0..400).map(|i| tf.spatial(big_r.sqrt() + i as f64 * 0.95).unwrap().bilaplacian.abs()).fold(0.0, f64::max);
            for i in 0..1000 {
                let r = 1.0 + (big_r.sqrt() - 1.0) * i as f64 / 1000.0;
                let b = tf.spatial(r).unwrap().bilaplacian.abs();
                assert!(b <= 1e-12 * peak, "{family:?} N={n} r={r}: {b} vs peak {peak}");
            }
        }
    }
}

#[test]
fn blow_up_bracket_shrinks_under_refinement() {
    let mut spec = ProblemSpec::<f64>::new(3, 2.0, BoundaryCondition::Navier, 30.0, 232);
    spec.forcing = RadialRule::bump(1.0, 2.0, 1.0);
    spec.adaptive = false;
    spec.dt_init = 0.01;
    let bracket = |s: &ProblemSpec<f64>| match simulate(s).unwrap().kind {
        OutcomeKind::BlowUp { t_est, t_lo, t_hi, .. } => (t_est, t_hi - t_lo),
        k => panic!("expected blow-up, got {k:?}"),
    };
    let (t1, w1) = bracket(&spec);
    let (t2, w2) = bracket(&spec.refined());
    let (t3, w3) = bracket(&spec.refined().refined());
    assert!(w2 < w1 && w3 < w2, "{w1} {w2} {w3}");
    assert!((t3 - t2).abs() < (t2 - t1).abs(), "{t1} {t2} {t3}");
}
