use std::f64::consts::PI;
use std::sync::Arc;

use kahler_lab::functionals::am;
use kahler_lab::model::{ricci_potential_of, ModelGeometry, ModelKind};
use kahler_lab::make_model;
use kahler_lab::sample::{random_field, random_potential, rng, SampleSpec};
use kahler_lab::solver::{apriori_report, c_t, continuity_run, default_schedule, solve_node, spectral_gap, NewtonOptions, ParamPoint, RunOptions};
use kahler_lab::Error;
use proptest::prelude::*;

fn yau_torus(seed: u64) -> Arc<ModelGeometry> {
    let m = make_model(ModelKind::Torus2, 24, 0.0).unwrap();
    let f = random_field(&m, &mut rng(seed), 3);
    Arc::new(ModelGeometry::new(ModelKind::Torus2, 24, 0.0).unwrap().with_mu(0.0).with_ricci(f).unwrap())
}

#[test]
fn parameter_set_membership() {
    for mu in [1.0, 0.0, -1.0] {
        assert!(ParamPoint::new(-3.0, 0.5).in_set(mu));
        assert!(ParamPoint::new(0.0, 1.0).in_set(mu));
        assert!(!ParamPoint::new(0.0, 1.5).in_set(mu));
        assert!(!ParamPoint::new(0.5, 0.5).in_set(mu));
    }
    assert!(ParamPoint::new(1.0, 1.0).in_set(1.0));
    assert!(!ParamPoint::new(1.0, 1.0).in_set(0.0));
}

#[test]
fn t_zero_nodes_are_exactly_zero() {
    let m = make_model(ModelKind::P1Symmetric, 256, 12.0).unwrap();
    let start = random_potential(&m, &mut rng(3), &SampleSpec::default());
    for s in [-64.0, -1.0, -1.0 / 64.0] {
        let sol = solve_node(&start, ParamPoint::new(s, 0.0), &NewtonOptions::default()).unwrap();
        assert!(sol.potential.samples().iter().all(|&v| v == 0.0), "s = {s}");
    }
}

#[test]
fn c_t_vanishes_for_zero_ricci_potential() {
    let m = make_model(ModelKind::P1Symmetric, 128, 12.0).unwrap();
    for t in [0.0, 0.3, 1.0] {
        assert_eq!(c_t(&m, t), 0.0);
    }
    // f_ω is normalized so that c_1 = 0; Jensen gives c_t > 0 in between
    let y = yau_torus(1);
    assert!(c_t(&y, 1.0).abs() <= 1e-14);
    assert!(c_t(&y, 0.5) > 1e-6);
    assert_eq!(c_t(&y, 0.0), 0.0);
}

#[test]
fn calabi_yau_node_solves_the_equation() {
    let m = yau_torus(5);
    let sol = solve_node(&m.zero(), ParamPoint::new(0.0, 1.0), &NewtonOptions::default()).unwrap();
    assert!(sol.residual <= 1e-10);
    // fixed point: log ρ = f_ω + c_1 for the solution
    let phi = &sol.potential;
    let c1 = c_t(&m, 1.0);
    let d = phi.density();
    let err = d.samples.iter().zip(m.ricci()).map(|(r, f)| (r.ln() - f - c1).abs()).fold(0.0, f64::max);
    assert!(err <= 1e-9, "fixed-point residual {err}");
    // ∫ φ ω_φ = 0 and Ricci-flat
    let mean: f64 = (0..m.len()).map(|k| m.weights[k] * d.samples[k] * phi.samples()[k]).sum();
    assert!(mean.abs() <= 1e-12);
    assert!(am(phi).unwrap().abs() > 1e-6);
    let f_phi = ricci_potential_of(phi).unwrap();
    assert!(f_phi.iter().map(|v| v.abs()).fold(0.0, f64::max) <= 1e-8);
}

#[test]
fn calabi_yau_solution_is_independent_of_the_start() {
    let m = yau_torus(9);
    let opts = NewtonOptions::default();
    let a = solve_node(&m.zero(), ParamPoint::new(0.0, 1.0), &opts).unwrap();
    let start = random_potential(&m, &mut rng(10), &SampleSpec::default());
    let b = solve_node(&start, ParamPoint::new(0.0, 1.0), &opts).unwrap();
    assert!(a.potential.sup_distance(&b.potential) <= 1e-8);
}

#[test]
fn newton_tail_is_quadratic() {
    let m = yau_torus(2);
    let sol = solve_node(&m.zero(), ParamPoint::new(0.0, 1.0), &NewtonOptions { tol: 1e-13, ..Default::default() }).unwrap();
    let h: Vec<f64> = sol.history.iter().copied().filter(|r| *r > 1e-12).collect();
    assert!(h.len() >= 3, "history {h:?}");
    let k = h.len() - 1;
    let order = (h[k] / h[k - 1]).ln() / (h[k - 1] / h[k - 2]).ln();
    assert!(order >= 1.8, "order {order}, history {h:?}");
}

#[test]
fn s_zero_needs_the_normalization() {
    let m = yau_torus(4);
    let opts = NewtonOptions { normalize: false, ..Default::default() };
    assert!(matches!(solve_node(&m.zero(), ParamPoint::new(0.0, 1.0), &opts), Err(Error::NormalizationAmbiguity)));
    assert!(solve_node(&m.zero(), ParamPoint::new(-1.0, 1.0), &opts).is_ok());
}

#[test]
fn points_outside_the_set_are_rejected() {
    let m = make_model(ModelKind::P1Symmetric, 64, 12.0).unwrap();
    assert!(matches!(solve_node(&m.zero(), ParamPoint::new(0.5, 0.5), &NewtonOptions::default()), Err(Error::OutsideParameterSet { .. })));
    let bad = [ParamPoint::new(-1.0, 0.0), ParamPoint::new(-1.0, 1.0), ParamPoint::new(2.0, 1.0)];
    let err = continuity_run(&m, &bad, &RunOptions::default()).unwrap_err();
    assert!(matches!(err.error, Error::OutsideParameterSet { .. }));
    assert!(err.trace.nodes.is_empty());
    let late = [ParamPoint::new(-1.0, 0.5)];
    assert!(matches!(continuity_run(&m, &late, &RunOptions::default()).unwrap_err().error, Error::InvalidArgument(_)));
}

#[test]
fn default_schedule_has_three_stages() {
    let s = default_schedule(1.0);
    assert_eq!(s[0], ParamPoint::new(-64.0, 0.0));
    assert_eq!(s.iter().filter(|p| p.t == 0.0).count(), 13);
    assert_eq!(*s.last().unwrap(), ParamPoint::new(1.0, 1.0));
    assert_eq!(s.iter().filter(|p| p.t == 1.0 && p.s > 0.0).count(), 32);
    assert!(s.iter().all(|p| p.in_set(1.0)));
    assert_eq!(*default_schedule(0.0).last().unwrap(), ParamPoint::new(0.0, 1.0));
}

#[test]
fn round_sphere_gap_is_one() {
    let m = make_model(ModelKind::P1Symmetric, 512, 12.0).unwrap();
    let l = spectral_gap(&m.zero()).unwrap();
    assert!((l - 1.0).abs() <= 1e-3, "λ₁ = {l}");
}

#[test]
fn flat_torus_gap_is_the_lattice_constant() {
    let n = 32;
    let m = make_model(ModelKind::Torus2, n, 0.0).unwrap();
    let l = spectral_gap(&m.zero()).unwrap();
    // (1,0) Fourier mode of half the 5-point Laplacian
    let expect = 2.0 * (PI / n as f64).sin().powi(2) / (m.h * m.h);
    assert!((l - expect).abs() <= 1e-9 * expect, "λ₁ = {l}, expected {expect}");
    assert!((expect - 2.0 * PI * PI).abs() < 0.1);
}

#[test]
fn perturbed_sphere_reaches_the_einstein_point() {
    let (m, _) = ModelGeometry::p1_perturbed(256, 12.0, &[0.0, 0.0, 0.2, 0.03]).unwrap();
    let trace = continuity_run(&m, &default_schedule(m.mu), &RunOptions::default()).unwrap();
    let last = trace.last().unwrap();
    assert_eq!(last.point, ParamPoint::new(1.0, 1.0));
    // f of the solution is constant: the Einstein condition
    let f = ricci_potential_of(&last.potential).unwrap();
    let osc = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - f.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(osc <= 1e-4, "osc f = {osc}");
    // K-energy decreases along the final interval
    let tail: Vec<f64> = trace.nodes.iter().filter(|n| n.point.t == 1.0).map(|n| n.diag.energy).collect();
    assert!(tail.windows(2).all(|w| w[1] <= w[0] + 1e-10));
    let report = apriori_report(&trace).unwrap();
    assert_eq!(report.violations(), 0);
    for (n, r) in trace.nodes.iter().zip(&report.rows) {
        if n.point.t == 1.0 && n.point.s < 1.0 {
            assert!(r.gap_margin > 0.0, "λ₁ ≤ s at {}", n.point);
        }
    }
    assert!(trace.continuity_modulus().is_finite());
}

#[test]
fn zero_trace_has_trivial_slack() {
    let m = make_model(ModelKind::P1Symmetric, 64, 12.0).unwrap();
    let sched = [ParamPoint::new(-4.0, 0.0), ParamPoint::new(-1.0, 0.0)];
    let trace = continuity_run(&m, &sched, &RunOptions { spectral: false, ..Default::default() }).unwrap();
    let report = apriori_report(&trace).unwrap();
    assert_eq!(report.violations(), 0);
    for r in &report.rows { assert!(r.osc == 0.0 && r.sup_slack >= 0.0, "{r:?}"); }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn negative_s_solutions_obey_the_maximum_principle(seed in any::<u64>(), s in -8.0f64..-0.25, t in 0.0f64..=1.0) {
        let m = yau_torus(seed);
        let sol = solve_node(&m.zero(), ParamPoint::new(s, t), &NewtonOptions::default()).unwrap();
        prop_assert!(sol.residual <= 1e-10);
        let bound = kahler_lab::solver::max_principle_bound(&m, s, t);
        prop_assert!(sol.potential.max() <= bound + 1e-9);
    }
}
