use std::f64::consts::PI;
use std::sync::Arc;

use kahler_lab::functionals::k_energy;
use kahler_lab::make_model;
use kahler_lab::metric::{
    calabi_distance, calabi_distance_densities, d1, d1_initial_speed, d1_value, geodesic, geodesic_residual, path_length, rooftop, rooftop_jacobi,
    root_density_pullback, speeds, PathRecord, Which,
};
use kahler_lab::model::{ModelGeometry, ModelKind, Potential};
use kahler_lab::sample::{random_field, random_potential, rng, SampleSpec};
use kahler_lab::Error;
use proptest::prelude::*;

fn sphere(n: usize) -> Arc<ModelGeometry> {
    make_model(ModelKind::P1Symmetric, n, 12.0).unwrap()
}

fn torus(n: usize) -> Arc<ModelGeometry> {
    make_model(ModelKind::Torus2, n, 0.0).unwrap()
}

fn pot(m: &Arc<ModelGeometry>, seed: u64) -> Potential {
    random_potential(m, &mut rng(seed), &SampleSpec::default())
}

/// Torus potential depending on `x` only, with values up to `amp`.
fn x_only(m: &Arc<ModelGeometry>, seed: u64, amp: f64) -> Potential {
    let n = m.n;
    let mut r = rng(seed);
    let p = random_potential(m, &mut r, &SampleSpec::default());
    let row: Vec<f64> = (0..n).map(|i| p.samples()[i]).collect();
    let top = row.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-12);
    // scale down until admissible
    let mut s = amp / top;
    loop {
        let q = Potential::from_samples(m.clone(), (0..n * n).map(|k| s * row[k % n]).collect()).unwrap();
        if q.is_admissible() {
            return q;
        }
        s *= 0.5;
    }
}

/// Lower convex hull of `(x_i, y_i)` by checking every chord.
fn brute_hull(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            let mut best = y[i];
            for j in 0..i {
                for k in i + 1..n {
                    let t = (x[i] - x[j]) / (x[k] - x[j]);
                    best = best.min((1.0 - t) * y[j] + t * y[k]);
                }
            }
            best
        })
        .collect()
}

#[test]
fn sphere_rooftop_is_the_lower_hull() {
    let m = sphere(64);
    for seed in 0..10 {
        let (u, v) = (pot(&m, seed), pot(&m, seed + 100));
        let p = rooftop(&u, &v).unwrap();
        let r = &m.reference_potential;
        let low: Vec<f64> = (0..m.len()).map(|i| r[i] + u.samples()[i].min(v.samples()[i])).collect();
        let hull = brute_hull(&m.nodes, &low);
        for i in 0..m.len() {
            assert!((p.samples()[i] + r[i] - hull[i]).abs() <= 1e-11, "seed {seed} node {i}");
        }
    }
}

#[test]
fn torus_rooftop_agrees_with_jacobi() {
    let m = torus(16);
    for seed in 0..3 {
        let (u, v) = (pot(&m, seed), pot(&m, seed + 50));
        let a = rooftop(&u, &v).unwrap();
        let b = rooftop_jacobi(&u, &v, 1e-14, 5_000_000).unwrap();
        assert!(a.sup_distance(&b) <= 1e-7);
    }
    assert!(matches!(rooftop_jacobi(&sphere(16).zero(), &sphere(16).zero(), 1e-10, 10), Err(Error::Unsupported(_))));
}

#[test]
fn distances_between_equal_potentials_vanish() {
    for m in [sphere(128), torus(16)] {
        let u = pot(&m, 1);
        assert!(d1_value(&u, &u).unwrap().abs() <= 1e-12);
        assert!(calabi_distance(&u, &u).unwrap().abs() <= 1e-6);
    }
}

#[test]
fn constant_shift_distance_is_the_constant() {
    for m in [sphere(256), torus(16)] {
        let u = pot(&m, 3);
        for c in [-1.5, 0.25, 4.0] {
            assert!((d1_value(&u, &u.shifted(c)).unwrap() - c.abs()).abs() <= 1e-12);
        }
    }
}

#[test]
fn lowering_a_potential_moves_d1_by_at_most_the_shift() {
    let m = sphere(256);
    let (u, v) = (pot(&m, 80), pot(&m, 81));
    let base = d1_value(&u, &v).unwrap();
    for delta in [0.5, 0.1, 0.01] {
        let moved = d1_value(&u.shifted(-delta), &v).unwrap();
        assert!((moved - base).abs() <= delta + 1e-12);
    }
}

#[test]
fn k_energy_is_convex_along_geodesics() {
    let m = sphere(1024);
    for seed in 0..3 {
        let path = geodesic(&pot(&m, 90 + seed), &pot(&m, 95 + seed), 16).unwrap();
        let e: Vec<f64> = path.potentials.iter().map(|p| k_energy(p).unwrap()).collect();
        assert!(e.windows(3).all(|w| w[0] - 2.0 * w[1] + w[2] >= -1e-6), "{e:?}");
    }
}

#[test]
fn calabi_distance_quarter_circle_bound() {
    let m = sphere(256);
    let n = m.len();
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    // two bumps with almost disjoint support, each of total mass V
    for i in 0..n {
        let x = m.nodes[i];
        a[i] = (-((x + 2.0) * 4.0).powi(2)).exp();
        b[i] = (-((x - 2.0) * 4.0).powi(2)).exp();
    }
    let norm = |f: &mut Vec<f64>| {
        let s = m.integrate(f);
        f.iter_mut().for_each(|v| *v *= m.volume / s);
    };
    norm(&mut a);
    norm(&mut b);
    let d = calabi_distance_densities(&m, &a, &b);
    let top = PI * m.volume.sqrt();
    assert!(d <= top && d > 0.999 * top, "{d} vs {top}");
}

#[test]
fn geodesic_between_equal_potentials_is_constant() {
    let m = sphere(128);
    let u = pot(&m, 5);
    let path = geodesic(&u, &u, 8).unwrap();
    assert!(path.potentials.iter().all(|p| p.sup_distance(&u) <= 1e-12));
    assert!(path_length(&path, Which::Darvas) <= 1e-12);
    assert!(geodesic_residual(&path).unwrap() <= 1e-8);
}

#[test]
fn geodesic_endpoints_match() {
    let m = sphere(256);
    let (u, v) = (pot(&m, 6), pot(&m, 7));
    let path = geodesic(&u, &v, 16).unwrap();
    assert!(path.potentials[0].sup_distance(&u) <= 1e-12);
    assert!(path.potentials[16].sup_distance(&v) <= 1e-12);
    assert!(path.speeds.iter().all(|s| s.mabuchi >= 0.0 && s.calabi >= 0.0 && s.darvas >= 0.0));
}

#[test]
fn torus_geodesic_matches_d1() {
    let t = torus(32);
    let (u, v) = (x_only(&t, 3, 0.01), x_only(&t, 4, 0.01));
    let path = geodesic(&u, &v, 16).unwrap();
    assert!(path.potentials[0].sup_distance(&u) <= 1e-12 && path.potentials[16].sup_distance(&v) <= 1e-12);
    assert!(path.potentials.iter().all(|p| p.is_admissible()));
    let (a, b) = (d1_value(&u, &v).unwrap(), path_length(&path, Which::Darvas));
    assert!((a - b).abs() <= 0.01 * a, "{a} vs {b}");
}

#[test]
fn k_energy_along_geodesics_is_stable_under_refinement() {
    let e = |n: usize| -> Vec<f64> {
        let m = sphere(n);
        let path = geodesic(&pot(&m, 92), &pot(&m, 97), 8).unwrap();
        path.potentials.iter().map(|p| k_energy(p).unwrap()).collect()
    };
    let (a, b) = (e(1024), e(2048));
    assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() <= 1e-5), "{a:?} vs {b:?}");
}

#[test]
fn chord_is_not_a_geodesic() {
    let m = sphere(512);
    let (u, v) = (pot(&m, 8), pot(&m, 9));
    let chord = PathRecord::chord(&u, &v, 16).unwrap();
    assert!(geodesic_residual(&chord).unwrap() > 1e-2);
}

#[test]
fn geodesic_length_refines_at_second_order() {
    let m = sphere(1024);
    let (u, v) = (pot(&m, 10), pot(&m, 11));
    let l = |k: usize| path_length(&geodesic(&u, &v, k).unwrap(), Which::Mabuchi);
    let (a, b, c) = (l(8), l(16), l(32));
    let ratio = (a - b) / (b - c);
    assert!((a - b).abs() < 1e-2 * a);
    assert!(ratio > 3.0, "K-refinement ratio {ratio}");
}

#[test]
fn three_d1_routes_agree() {
    let m = sphere(2048);
    for seed in 0..3 {
        let (u, v) = (pot(&m, 20 + seed), pot(&m, 40 + seed));
        let a = d1_value(&u, &v).unwrap();
        let b = path_length(&geodesic(&u, &v, 16).unwrap(), Which::Darvas);
        let c = d1_initial_speed(&u, &v).unwrap();
        assert!((a - b).abs() <= 0.01 * a && (a - c).abs() <= 0.01 * a, "{a} {b} {c}");
    }
    let t = torus(32);
    let (u, v) = (x_only(&t, 1, 0.01), x_only(&t, 2, 0.01));
    let a = d1_value(&u, &v).unwrap();
    let c = d1_initial_speed(&u, &v).unwrap();
    assert!((a - c).abs() <= 0.01 * a, "{a} {c}");
}

#[test]
fn d1_report_brackets() {
    let m = sphere(512);
    let (u, v) = (pot(&m, 60), pot(&m, 61));
    let r = d1(&u, &v).unwrap();
    assert!(r.mixed_lower <= r.d1 * (1.0 + 1e-9) && r.d1 <= r.mixed_upper * (1.0 + 1e-9), "{r:?}");
    assert!(r.d_c > 0.0 && r.geodesic_residual_max.is_finite());
    let t = torus(16);
    let r = d1(&pot(&t, 1), &pot(&t, 2)).unwrap();
    assert!(r.d1_dtn.is_nan());
}

#[test]
fn pullback_matches_calabi_speed() {
    for m in [sphere(2048), torus(32)] {
        let u = pot(&m, 70);
        let v = random_field(&m, &mut rng(71), 3);
        let pb = root_density_pullback(&u, &v, 1e-6);
        let c = speeds(&u, &v).unwrap().calabi.powi(2);
        assert!((pb - c).abs() <= 1e-6 * c, "{pb} vs {c}");
    }
}

#[test]
fn mismatched_grids_are_rejected() {
    let (a, b) = (sphere(64), sphere(128));
    assert!(matches!(d1_value(&a.zero(), &b.zero()), Err(Error::ModelMismatch(_))));
    assert!(matches!(rooftop(&torus(16).zero(), &torus(32).zero()), Err(Error::ModelMismatch(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn d1_is_a_metric(seed in any::<u64>()) {
        let m = sphere(256);
        let (u, v, w) = (pot(&m, seed), pot(&m, seed ^ 0x55), pot(&m, seed ^ 0xaa));
        let (uv, vu) = (d1_value(&u, &v).unwrap(), d1_value(&v, &u).unwrap());
        prop_assert!((uv - vu).abs() <= 1e-9);
        prop_assert!(uv >= -1e-12);
        let uw = d1_value(&u, &w).unwrap();
        let vw = d1_value(&v, &w).unwrap();
        prop_assert!(uw <= uv + vw + 1e-8);
    }

    #[test]
    fn rooftop_is_admissible_and_below_both(seed in any::<u64>(), sphere_model in any::<bool>()) {
        let m = if sphere_model { sphere(128) } else { torus(12) };
        let (u, v) = (pot(&m, seed), pot(&m, seed ^ 3));
        let p = rooftop(&u, &v).unwrap();
        prop_assert!(p.density().min() >= -1e-9);
        for i in 0..m.len() {
            prop_assert!(p.samples()[i] <= u.samples()[i].min(v.samples()[i]) + 1e-12);
        }
        // idempotent on an admissible potential
        let q = rooftop(&u, &u).unwrap();
        prop_assert!(q.sup_distance(&u) <= 1e-9);
    }

    #[test]
    fn calabi_distance_is_bounded(seed in any::<u64>()) {
        let m = sphere(128);
        let d = calabi_distance(&pot(&m, seed), &pot(&m, seed ^ 9)).unwrap();
        prop_assert!((0.0..=PI * m.volume.sqrt()).contains(&d));
    }
}
