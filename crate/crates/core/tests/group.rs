use std::f64::consts::{E, PI};
use std::sync::Arc;

use kahler_lab::functionals::{aubin, am, k_energy};
use kahler_lab::group::{
    a_grid, act, act_raw, alpha_scan, first_eigen, futaki_derivative, golden_min, hormander_check, jg, log_exp_integral, ls_slope, mt_scan, orbit_critical_derivative,
    orbit_family, orbit_j_exact, orbit_scan, perp_project, window, DiscGrid, MtOptions,
};
use kahler_lab::make_model;
use kahler_lab::metric::d1_value;
use kahler_lab::model::{moment_z, ModelGeometry, ModelKind};
use kahler_lab::sample::{random_potential, rng, SampleSpec};
use kahler_lab::Error;
use proptest::prelude::*;

fn sphere(n: usize, x: f64) -> Arc<ModelGeometry> {
    make_model(ModelKind::P1Symmetric, n, x).unwrap()
}

#[test]
fn orbit_j_matches_closed_form() {
    let m = sphere(4096, 16.0);
    let zero = m.zero();
    for a in [0.25, -0.5, 1.0, 2.0] {
        let j = aubin(&act(a, &zero).unwrap()).unwrap().j;
        let exact = orbit_j_exact(a);
        assert!((j - exact).abs() <= 1e-5 * (1.0 + exact), "a = {a}: {j} vs {exact}");
    }
    assert!((orbit_j_exact(1e-5) - orbit_j_exact(-1e-5)).abs() < 1e-20);
    assert!((orbit_j_exact(2e-4) - (2.0 * 2e-4 / (2e-4f64).tanh() - 2.0)).abs() < 1e-12);
}

#[test]
fn act_is_normalized_and_composes() {
    let m = sphere(2048, 16.0);
    let zero = m.zero();
    let p = act(0.7, &zero).unwrap();
    assert!(am(&p).unwrap().abs() <= 1e-12);
    assert!(act(0.0, &zero).unwrap().sup_distance(&zero) == 0.0);
    let twice = act(0.4, &act(0.3, &zero).unwrap()).unwrap();
    assert!(twice.sup_distance(&p) <= 1e-6, "{}", twice.sup_distance(&p));
    let back = act(-0.7, &p).unwrap();
    assert!(back.sup_distance(&zero) <= 1e-6);
    // raw and normalized differ by a constant
    let raw = act_raw(0.7, &zero).unwrap();
    let gap: Vec<f64> = raw.samples().iter().zip(p.samples()).map(|(a, b)| a - b).collect();
    assert!(gap.iter().all(|g| (g - gap[0]).abs() <= 1e-12));
}

#[test]
fn act_respects_the_window() {
    let m = sphere(256, 12.0);
    assert_eq!(window(&m), 3.0);
    assert!(matches!(act(3.0, &m.zero()), Err(Error::TruncationExceeded { .. })));
    assert!(matches!(act(-3.5, &m.zero()), Err(Error::TruncationExceeded { .. })));
    let t = make_model(ModelKind::Torus2, 16, 0.0).unwrap();
    assert!(act(0.1, &t.zero()).is_err());
}

#[test]
fn futaki_vanishes_at_the_einstein_point() {
    let m = sphere(2048, 16.0);
    assert!(futaki_derivative(&m.zero()).unwrap().abs() <= 1e-6);
    // and K-energy is flat along the orbit
    let zero = m.zero();
    let e: Vec<f64> = [-1.0, 0.0, 1.0].iter().map(|&a| k_energy(&act(a, &zero).unwrap()).unwrap()).collect();
    assert!(e.iter().all(|v| v.abs() <= 1e-5), "{e:?}");
}

#[test]
fn orbit_scan_of_the_einstein_point() {
    // the spread is O(h²): about 5e-6 at this resolution
    let m = sphere(4096, 16.0);
    let scan = orbit_scan(&m.zero(), &a_grid(0.9 * window(&m), 17)).unwrap();
    assert!(scan.energy_spread() <= 1e-5);
    assert!(scan.min_second_difference() > 0.0);
}

#[test]
fn jg_recovers_the_orbit_point() {
    let m = sphere(2048, 16.0);
    let zero = m.zero();
    let r = jg(&zero).unwrap();
    assert!(r.minimizer.abs() <= 1e-4 && r.value.abs() <= 1e-8, "{r:?}");
    let p = act(1.3, &zero).unwrap();
    let r = jg(&p).unwrap();
    assert!((r.minimizer + 1.3).abs() <= 1e-3 && r.value <= 1e-6, "{r:?}");
    let d = kahler_lab::group::d1g(&zero, &p).unwrap();
    assert!(d.value <= 1e-4 && d1_value(&zero, &p).unwrap() > 0.1);
}

#[test]
fn golden_section_finds_a_parabola_minimum() {
    let (a, v) = golden_min(|x| Ok((x - 0.3) * (x - 0.3) + 2.0), -1.0, 2.0, 1e-10).unwrap();
    assert!((a - 0.3).abs() <= 1e-6 && (v - 2.0).abs() <= 1e-12);
}

#[test]
fn first_eigenvalue_is_one() {
    let m = sphere(1024, 12.0);
    let eig = first_eigen(&m).unwrap();
    assert!((eig.value - 1.0).abs() <= 1e-3);
    let norm: f64 = m.weights.iter().zip(&eig.vector).map(|(w, v)| w * v * v).sum();
    assert!((norm - 1.0).abs() <= 1e-12);
    // affine in the moment coordinate
    let z: Vec<f64> = m.nodes.iter().map(|&x| moment_z(x)).collect();
    let k = m.len() / 2 + 40;
    let ratio = eig.vector[k] / z[k];
    assert!(eig.vector.iter().zip(&z).all(|(v, z)| (v - ratio * z).abs() <= 1e-3 * ratio.abs()));
}

#[test]
fn projection_removes_the_eigen_component() {
    let m = sphere(1024, 12.0);
    let eig = first_eigen(&m).unwrap();
    let tiny = m.zero().add_field(&eig.vector, 1e-3);
    let pr = perp_project(&tiny, &eig).unwrap();
    assert!(pr.potential.samples().iter().all(|v| v.abs() <= 1e-12));
    assert_eq!(pr.removed, 1.0);
    let p = random_potential(&m, &mut rng(4), &SampleSpec { x_only: false, ..SampleSpec::default() });
    let once = perp_project(&p, &eig).unwrap().potential;
    let twice = perp_project(&once, &eig).unwrap().potential;
    assert!(once.sup_distance(&twice) <= 1e-12);
    assert!(orbit_critical_derivative(&once).unwrap().abs() <= 1e-5);
}

#[test]
fn mt_scan_of_small_grid_is_well_formed() {
    let m = sphere(1024, 16.0);
    let s = mt_scan(&m, &mut rng(3), &MtOptions { rays: 4, steps: 4, ..Default::default() }).unwrap();
    assert_eq!(s.points.len(), 16);
    assert_eq!(s.ray_slopes.len(), 4);
    assert!(s.slope > 0.0 && s.offset >= 0.0);
    assert!(s.points.iter().all(|p| p.energy >= s.slope * p.j - s.offset - 1e-12));
    // the orbit of 0 carries no energy
    assert!(s.control_slope.abs() <= 1e-3 * s.slope);
}

#[test]
fn ls_slope_of_a_line() {
    let pts: Vec<(f64, f64)> = (0..10).map(|k| (k as f64, 3.0 * k as f64 - 1.0)).collect();
    assert!((ls_slope(&pts) - 3.0).abs() <= 1e-12);
}

#[test]
fn disc_integrals_match_radial_quadrature() {
    let grid = DiscGrid::new(400, 1.0);
    let rho = 0.55;
    let zero = vec![0.0; grid.interior.len()];
    assert_eq!(grid.integral(&zero, rho), grid.area(rho));
    assert!((grid.area(rho) - 2.0 * PI * rho * rho).abs() <= 0.01 * 2.0 * PI * rho * rho);
    let psi: Vec<f64> = grid
        .interior
        .iter()
        .map(|&idx| {
            let (x, y) = grid.xy(idx);
            x * x + y * y - 1.0
        })
        .collect();
    // 2∫_0^ρ e^{1−r²} 2πr dr
    let exact = 2.0 * PI * E * (1.0 - (-rho * rho).exp());
    let ratio = grid.integral(&psi, rho) / grid.area(rho);
    let exact_ratio = exact / (2.0 * PI * rho * rho);
    assert!((ratio - exact_ratio).abs() <= 1e-3 * exact_ratio, "{ratio} vs {exact_ratio}");
}

#[test]
fn hormander_integrals_stay_bounded() {
    let r = hormander_check(16, 1.0, 0.55, 7, 80).unwrap();
    assert!(r.min_integral >= r.area && r.max_integral.is_finite());
    assert!(matches!(hormander_check(4, 1.0, 0.7, 7, 40), Err(Error::InvalidArgument(_))));
}

#[test]
fn alpha_scan_of_zero_is_the_volume() {
    let m = sphere(512, 12.0);
    let t = alpha_scan(&[m.zero()], &[0.1, 1.0, 2.0]).unwrap();
    assert!(t.log_sup.iter().all(|v| (v - m.volume.ln()).abs() <= 1e-12));
    assert_eq!(t.stable_beta, 2.0);
    assert!(alpha_scan(&[], &[1.0]).is_err());
}

#[test]
fn alpha_scan_is_monotone_in_beta() {
    let m = sphere(1024, 16.0);
    let fam = orbit_family(&m, 3.0, 9).unwrap();
    let betas: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
    let t = alpha_scan(&fam, &betas).unwrap();
    assert!(t.log_sup.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(t.log_sup_half.iter().zip(&t.log_sup).all(|(h, f)| h <= f));
    // growth rate along the family is 4β − 2 past β = 1/2
    let slope = (log_exp_integral(&fam[8], 1.5) - log_exp_integral(&fam[6], 1.5)) / 0.75;
    assert!((slope - 4.0).abs() <= 0.1, "slope {slope}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn orbit_minimum_is_a_group_invariant(b in -1.5f64..1.5) {
        let m = sphere(1024, 16.0);
        let p = act(b, &m.zero()).unwrap();
        let r = jg(&p).unwrap();
        prop_assert!((r.minimizer + b).abs() <= 2e-3);
        prop_assert!(r.value <= 1e-5);
    }

    #[test]
    fn futaki_first_difference_is_odd(a in 0.05f64..2.0) {
        let m = sphere(4096, 16.0);
        let zero = m.zero();
        let fwd = k_energy(&act(a, &zero).unwrap()).unwrap() - k_energy(&zero).unwrap();
        let bwd = k_energy(&act(-a, &zero).unwrap()).unwrap() - k_energy(&zero).unwrap();
        prop_assert!((fwd + bwd).abs() <= 1e-5);
    }
}
