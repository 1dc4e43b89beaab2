use std::f64::consts::PI;

use approx::assert_relative_eq;
use kahler_lab::model::{
    grad_norm_sq, green_mean_value_bound, laplacian_at, ma_density, make_model, psi, psi_second, ricci_potential_of, scalar_curvature, ModelGeometry,
    ModelKind, Potential,
};
use kahler_lab::sample::{random_field, random_potential, rng, SampleSpec};
use kahler_lab::Error;

fn torus(n: usize) -> std::sync::Arc<ModelGeometry> {
    make_model(ModelKind::Torus2, n, 0.0).unwrap()
}

fn sphere(n: usize, x: f64) -> std::sync::Arc<ModelGeometry> {
    make_model(ModelKind::P1Symmetric, n, x).unwrap()
}

fn smooth_field(m: &std::sync::Arc<ModelGeometry>, seed: u64) -> Vec<f64> {
    random_field(m, &mut rng(seed), 4)
}

#[test]
fn torus_volume_is_the_convention() {
    let m = torus(64);
    assert_eq!(m.volume, 1.0);
    let total: f64 = m.weights.iter().sum();
    assert!((total - 1.0).abs() <= 10.0 * f64::EPSILON * 64.0 * 64.0);
}

#[test]
fn sphere_volume_matches_reference_integral() {
    let m = sphere(256, 12.0);
    let total: f64 = m.weights.iter().sum();
    assert_relative_eq!(total, 4.0 * PI, max_relative = 1e-8);
    // cell-by-cell against Simpson quadrature of 2π ψ'' over the dual cells
    let h = m.h;
    for i in 1..m.n {
        let (a, b) = (m.nodes[i] - 0.5 * h, m.nodes[i] + 0.5 * h);
        let k = 64;
        let dx = (b - a) / k as f64;
        let mut s = psi_second(a) + psi_second(b);
        for j in 1..k {
            s += psi_second(a + j as f64 * dx) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        let exact = 2.0 * PI * s * dx / 3.0;
        // dual-cell integral vs secant jump differ at O(h²) relative
        assert!((m.weights[i] - exact).abs() <= 0.05 * h * h * exact + 1e-300, "cell {i}");
    }
}

#[test]
fn reference_slopes_are_monotone_in_range() {
    let m = sphere(512, 12.0);
    assert!(m.ref_slopes.windows(2).all(|p| p[1] > p[0]));
    assert!(m.ref_slopes[0] > 0.0 && *m.ref_slopes.last().unwrap() < 2.0);
    assert!(m.ref_jumps.iter().all(|&j| j > 0.0));
}

#[test]
fn rejects_small_or_odd_grids() {
    assert!(matches!(make_model(ModelKind::Torus2, 7, 0.0), Err(Error::BadGrid(7))));
    assert!(matches!(make_model(ModelKind::Torus2, 6, 0.0), Err(Error::BadGrid(6))));
    assert!(matches!(make_model(ModelKind::P1Symmetric, 64, 4.0), Err(Error::BadTruncation(_))));
}

#[test]
fn reference_ricci_normalization() {
    for m in [torus(16), sphere(128, 12.0)] {
        let e: Vec<f64> = m.ricci().iter().map(|f| f.exp()).collect();
        assert_relative_eq!(m.integrate(&e), m.volume, max_relative = 1e-12);
    }
}

#[test]
fn constant_potentials_have_unit_density() {
    for m in [torus(16), sphere(64, 10.0)] {
        for c in [0.0, 3.5, -1e3] {
            let d = ma_density(&m.constant(c));
            assert!(d.samples.iter().all(|&x| (x - 1.0).abs() < 1e-12));
        }
    }
}

#[test]
fn torus_sine_density_uses_the_five_point_constant() {
    let n = 32;
    let m = torus(n);
    let h = m.h;
    let eps = 0.01;
    let samples: Vec<f64> = (0..n * n).map(|k| eps * (2.0 * PI * m.torus_xy(k).0).sin()).collect();
    let d = ma_density(&Potential::from_samples(m.clone(), samples).unwrap());
    // second difference of sin(2πx) is −4 sin²(πh)/h² sin(2πx); the trace carries ½
    let kappa = -2.0 * (PI * h).sin().powi(2) / (h * h);
    for k in 0..n * n {
        let expect = 1.0 + eps * kappa * (2.0 * PI * m.torus_xy(k).0).sin();
        assert!((d.samples[k] - expect).abs() < 1e-12);
    }
    assert!((kappa + 2.0 * PI * PI).abs() < 0.1);
}

#[test]
fn torus_laplacian_matches_spectral_oracle() {
    let n = 16;
    let m = torus(n);
    let v: Vec<f64> = (0..n * n).map(|k| (2.0 * PI * m.torus_xy(k).0).sin()).collect();
    let lap = laplacian_at(&m.zero(), &v);
    // DFT oracle: eigenvalue of the lattice operator on the (1,0) mode
    let sym = 4.0 * (PI / n as f64).sin().powi(2);
    let lambda = 0.5 * sym / (m.h * m.h);
    for k in 0..n * n {
        assert!((lap[k] + lambda * v[k]).abs() < 1e-10);
    }
}

#[test]
fn laplacian_is_self_adjoint_and_kills_constants() {
    for (mi, m) in [torus(24), sphere(128, 12.0)].into_iter().enumerate() {
        let base = random_potential(&m, &mut rng(3 + mi as u64), &SampleSpec::default());
        let d = ma_density(&base);
        let u = smooth_field(&m, 11);
        let v = smooth_field(&m, 12);
        let lu = laplacian_at(&base, &u);
        let lv = laplacian_at(&base, &v);
        let wd: Vec<f64> = (0..m.len()).map(|k| m.weights[k] * d.samples[k]).collect();
        let a: f64 = (0..m.len()).map(|k| wd[k] * u[k] * lv[k]).sum();
        let b: f64 = (0..m.len()).map(|k| wd[k] * v[k] * lu[k]).sum();
        assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
        let total: f64 = (0..m.len()).map(|k| wd[k] * lv[k]).sum();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(total.abs() <= 1e-10 * vn);
        let lc = laplacian_at(&base, &vec![1.0; m.len()]);
        assert!(lc.iter().all(|x| x.abs() < 1e-12));
    }
}

#[test]
fn gradient_norm_integrates_by_parts() {
    for (mi, m) in [torus(24), sphere(256, 12.0)].into_iter().enumerate() {
        let mut r = rng(100 + mi as u64);
        for trial in 0..100 {
            let base = random_potential(&m, &mut r, &SampleSpec::default());
            let d = ma_density(&base);
            let v = random_field(&m, &mut r, 4);
            let g = grad_norm_sq(&base, &v);
            assert!(g.iter().all(|&x| x >= 0.0));
            let lv = laplacian_at(&base, &v);
            let lhs: f64 = (0..m.len()).map(|k| m.weights[k] * d.samples[k] * g[k]).sum();
            let rhs: f64 = -(0..m.len()).map(|k| m.weights[k] * d.samples[k] * v[k] * lv[k]).sum::<f64>();
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs(), "model {mi} trial {trial}: {lhs} vs {rhs}");
        }
        let c = grad_norm_sq(&m.zero(), &vec![2.0; m.len()]);
        assert!(c.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn sphere_gradient_of_linear_field_matches_closed_form() {
    let m = sphere(1024, 12.0);
    let v: Vec<f64> = m.nodes.clone();
    let g = grad_norm_sq(&m.zero(), &v);
    for i in (8..m.n - 8).step_by(37) {
        let x = m.nodes[i];
        // |∇x|² = 1/ψ''(x); the cell stencil is second order
        let exact = 1.0 / psi_second(x);
        assert!((g[i] - exact).abs() <= 2e-3 * exact, "x = {x}");
        let fd = m.h * m.h / (psi(x + m.h) - 2.0 * psi(x) + psi(x - m.h));
        assert!((g[i] - fd).abs() <= 1e-6 * fd);
    }
}

#[test]
fn density_integrates_to_volume() {
    for m in [torus(32), sphere(256, 12.0)] {
        let mut r = rng(5);
        for _ in 0..50 {
            let p = random_potential(&m, &mut r, &SampleSpec::default());
            assert!((ma_density(&p).total() - m.volume).abs() <= 1e-8 * m.volume);
        }
    }
}

#[test]
fn log_density_linearization_is_second_order() {
    // ρ is affine in φ for n = 1, so the check is made on log ρ
    for m in [torus(32), sphere(256, 12.0)] {
        let mut r = rng(21);
        let phi = random_potential(&m, &mut r, &SampleSpec::default());
        let v = random_field(&m, &mut r, 3);
        let d0 = ma_density(&phi);
        let lin = laplacian_at(&phi, &v);
        let scale = 0.1 / lin.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let d0l: Vec<f64> = d0.samples.iter().map(|x| x.ln()).collect();
        // Taylor remainder of log ρ is quadratic in ε
        let err = |eps: f64| -> f64 {
            let e = eps * scale;
            let dp = ma_density(&phi.add_field(&v, e));
            (0..m.len()).map(|k| (dp.samples[k].ln() - d0l[k] - e * lin[k]).abs()).fold(0.0, f64::max)
        };
        let (e1, e2) = (err(1e-1), err(5e-2));
        let order = (e1 / e2).log2();
        assert!(order >= 1.9, "order {order}");
        // and the density itself is exactly linear
        let dp = ma_density(&phi.add_field(&v, 1e-3));
        for k in 0..m.len() {
            let pred = d0.samples[k] * (1.0 + 1e-3 * lin[k]);
            assert!((dp.samples[k] - pred).abs() < 1e-10);
        }
    }
}

#[test]
fn scalar_curvature_reference_values_and_mean() {
    let (s, _) = scalar_curvature(&torus(16).zero());
    assert!(s.iter().all(|x| x.abs() < 1e-12));
    let sp = sphere(256, 12.0);
    let (s, _) = scalar_curvature(&sp.zero());
    assert!(s.iter().all(|x| (x - 1.0).abs() < 1e-12));
    for m in [torus(32), sp] {
        let mut r = rng(8);
        for _ in 0..20 {
            let p = random_potential(&m, &mut r, &SampleSpec::default());
            let d = ma_density(&p);
            let (s, flag) = scalar_curvature(&p);
            assert!(!flag);
            let mean: f64 = (0..m.len()).map(|k| m.weights[k] * d.samples[k] * s[k]).sum::<f64>() / m.volume;
            assert!((mean - m.mu).abs() < 1e-6);
        }
    }
}

#[test]
fn ricci_potential_normalization_and_reference() {
    for m in [torus(32), sphere(256, 12.0)] {
        let f0 = ricci_potential_of(&m.zero()).unwrap();
        assert!(f0.iter().zip(m.ricci()).all(|(a, b)| (a - b).abs() < 1e-12));
        let mut r = rng(13);
        for _ in 0..20 {
            let p = random_potential(&m, &mut r, &SampleSpec::default());
            let d = ma_density(&p);
            let f = ricci_potential_of(&p).unwrap();
            let total: f64 = (0..m.len()).map(|k| m.weights[k] * d.samples[k] * f[k].exp()).sum();
            assert!((total - m.volume).abs() <= 1e-8 * m.volume);
        }
    }
}

#[test]
fn torus_green_constant_matches_fourier_sum() {
    let n = 16;
    let m = torus(n);
    let a = green_mean_value_bound(&m).unwrap();
    // explicit DFT sum for the zero-mean kernel with source at the origin
    let h = m.h;
    let mut gmin = f64::INFINITY;
    for j in 0..n {
        for i in 0..n {
            let mut g = 0.0;
            for ky in 0..n {
                for kx in 0..n {
                    if kx == 0 && ky == 0 {
                        continue;
                    }
                    let sx = (PI * kx as f64 / n as f64).sin();
                    let sy = (PI * ky as f64 / n as f64).sin();
                    let lambda = 2.0 * (sx * sx + sy * sy) / (h * h);
                    g += (2.0 * PI * (kx * i + ky * j) as f64 / n as f64).cos() / lambda;
                }
            }
            gmin = gmin.min(g);
        }
    }
    assert!(a > 0.0);
    assert_relative_eq!(a, -gmin, max_relative = 1e-8);
}

#[test]
fn torus_green_constant_is_refinement_stable() {
    let a32 = green_mean_value_bound(&torus(32)).unwrap();
    let a64 = green_mean_value_bound(&torus(64)).unwrap();
    let a128 = green_mean_value_bound(&torus(128)).unwrap();
    assert!(((a64 - a32) / a64).abs() < 0.05);
    assert!(((a128 - a64) / a128).abs() < 0.05);
}

#[test]
fn mean_value_bound_holds() {
    for m in [torus(32), sphere(128, 12.0)] {
        let a = green_mean_value_bound(&m).unwrap();
        assert!(a > 0.0);
        let c = m.constant(2.0);
        assert!((c.max() - (m.mean(c.samples()) + a) + a).abs() < 1e-12);
        let mut r = rng(77);
        for _ in 0..200 {
            let p = random_potential(&m, &mut r, &SampleSpec { depth: (0.5, 0.999), ..SampleSpec::default() });
            assert!(p.max() <= m.mean(p.samples()) + m.dim() * a + 1e-10);
        }
    }
}

#[test]
fn torus_scale_leaves_dimensionless_checks_unchanged() {
    use kahler_lab::functionals::{aubin, mabuchi};
    let base = torus(32);
    let scaled = std::sync::Arc::new((*base).clone().with_scale(3.0).unwrap());
    assert_eq!(scaled.volume, 3.0);
    let mut r = rng(4);
    for _ in 0..10 {
        let p = random_potential(&base, &mut r, &SampleSpec::default());
        let q = Potential::from_samples(scaled.clone(), p.samples().to_vec()).unwrap();
        let (a, b) = (aubin(&p).unwrap(), aubin(&q).unwrap());
        assert_relative_eq!(a.i / a.j, b.i / b.j, max_relative = 1e-9);
        assert_relative_eq!(a.i, 3.0 * b.i, max_relative = 1e-9);
        let (ep, eq) = (mabuchi(&p).unwrap(), mabuchi(&q).unwrap());
        assert!((ep.e_fano - ep.e_fano_ij).abs() < 1e-12 && (eq.e_fano - eq.e_fano_ij).abs() < 1e-12);
    }
}
