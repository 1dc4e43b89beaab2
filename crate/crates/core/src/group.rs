//! The dilation group on the circle-symmetric sphere.
//!
//! `g_a : z ↦ e^a z` acts in the log coordinate as `x ↦ x + 2a`, so
//!
//! ```text
//! act(a, φ)(x) = ψ(x + 2a) − ψ(x) + φ(x + 2a) + c,
//! ```
//!
//! with `c` restoring `AM = 0`. Off-grid values of `φ` come from local
//! degree-7 Lagrange interpolation; beyond the truncation they follow the
//! polar expansion `A + B e^{∓x}`.
//!
//! Also here: `J_G`, `d₁,G`, the Futaki derivative, the projection onto
//! the complement of the first eigenspace, Moser–Trudinger ray scans, and
//! integrability scans (a disc-grid check of `∫ e^{−ψ}` for subharmonic
//! `ψ`, and `α`-type tables).

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::functionals::{aubin, am, j_relative, k_energy, mabuchi};
use crate::linalg;
use crate::metric;
use crate::model::{log_mean_exp, psi, psi_secant, ModelGeometry, ModelKind, Potential};
use crate::sample::{self, Rng64, SampleSpec};

fn check_round(m: &ModelGeometry) -> Result<()> {
    if m.kind != ModelKind::P1Symmetric {
        return Err(Error::Unsupported("the dilation action lives on the sphere model"));
    }
    let n = m.n;
    for i in [0, n / 2, n] {
        if (m.reference_potential[i] - psi(m.nodes[i])).abs() > 1e-12 * (1.0 + psi(m.nodes[i])) {
            return Err(Error::Unsupported("the dilation action needs the round reference"));
        }
    }
    Ok(())
}

/// Half-width of the admissible orbit window, `X/4`.
pub fn window(m: &ModelGeometry) -> f64 {
    0.25 * m.x_trunc
}

fn check_window(m: &ModelGeometry, a: f64) -> Result<()> {
    if !(a.abs() < window(m)) {
        return Err(Error::TruncationExceeded { a, window: window(m) });
    }
    Ok(())
}

/// Values and face slopes of `φ(· + shift)` on the grid.
///
/// Face slopes are interpolated from the stored slopes of `φ` rather than
/// differenced, since near the poles they are far below the size of `φ`.
fn shifted_samples(m: &ModelGeometry, phi: &Potential, shift: f64) -> (Vec<f64>, Vec<f64>) {
    let n = m.n;
    let x = &m.nodes;
    let (v, sl) = (phi.samples(), phi.slopes());
    let (xl, xr) = (x[0], x[n]);
    let bl = sl[0] * m.h / (x[1].exp() - xl.exp());
    let al = v[0] - bl * xl.exp();
    let br = sl[n - 1] * m.h / ((-xr).exp() - (-x[n - 1]).exp());
    let ar = v[n] - br * (-xr).exp();
    let value = |y: f64| -> f64 {
        if y >= xr {
            ar + br * (-y).exp()
        } else if y <= xl {
            al + bl * y.exp()
        } else {
            let j0 = (((y - xl) / m.h).floor() as isize - 3).clamp(0, n as isize - 7) as usize;
            lagrange8(&x[j0..j0 + 8], &v[j0..j0 + 8], y)
        }
    };
    let mids: Vec<f64> = (0..n).map(|i| x[i] + 0.5 * m.h).collect();
    let values: Vec<f64> = x.iter().map(|&xi| value(xi + shift)).collect();
    let inner_slope = |y: f64| -> f64 {
        let j0 = (((y - mids[0]) / m.h).floor() as isize - 3).clamp(0, n as isize - 8) as usize;
        lagrange8(&mids[j0..j0 + 8], &sl[j0..j0 + 8], y)
    };
    // increment of φ over [ya, yb], split at the truncation ends
    let increment = |ya: f64, yb: f64| -> f64 {
        let mut total = 0.0;
        if ya < xl {
            let e = yb.min(xl);
            total += bl * (e.exp() - ya.exp());
        }
        if yb > xr {
            let s = ya.max(xr);
            total += br * ((-yb).exp() - (-s).exp());
        }
        let (a, b) = (ya.max(xl), yb.min(xr));
        if b > a {
            total += (b - a) * inner_slope(0.5 * (a + b));
        }
        total
    };
    let slopes = (0..n).map(|i| increment(x[i] + shift, x[i + 1] + shift) / m.h).collect();
    (values, slopes)
}

fn lagrange8(xs: &[f64], ys: &[f64], y: f64) -> f64 {
    let mut total = 0.0;
    for j in 0..xs.len() {
        if y == xs[j] {
            return ys[j];
        }
        let mut l = 1.0;
        for k in 0..xs.len() {
            if k != j {
                l *= (y - xs[k]) / (xs[j] - xs[k]);
            }
        }
        total += l * ys[j];
    }
    total
}

/// Pullback of `ω_φ` by the dilation `z ↦ e^a z`, normalized to `AM = 0`.
pub fn act(a: f64, phi: &Potential) -> Result<Potential> {
    let p = act_raw(a, phi)?;
    Ok(p.shifted(-am(&p)?))
}

/// `act` before the `AM` normalization.
pub fn act_raw(a: f64, phi: &Potential) -> Result<Potential> {
    let m = phi.model().clone();
    check_round(&m)?;
    check_window(&m, a)?;
    if a == 0.0 {
        return Ok(phi.clone());
    }
    let n = m.n;
    let shift = 2.0 * a;
    let (tail, tail_slopes) = shifted_samples(&m, phi, shift);
    let samples: Vec<f64> = (0..=n).map(|i| psi(m.nodes[i] + shift) - m.reference_potential[i] + tail[i]).collect();
    let slopes: Vec<f64> = (0..n)
        .map(|i| {
            let (s, c) = psi_secant(m.nodes[i] + shift, m.nodes[i + 1] + shift);
            let base = if s + m.ref_slopes[i] <= 2.0 { s - m.ref_slopes[i] } else { m.ref_slopes_c[i] - c };
            base + tail_slopes[i]
        })
        .collect();
    Potential::with_slopes(m, samples, slopes)
}

/// `J(act(a, 0)) = 2a·coth(a) − 2`.
pub fn orbit_j_exact(a: f64) -> f64 {
    if a.abs() < 1e-4 {
        2.0 * a * a / 3.0
    } else {
        2.0 * a / a.tanh() - 2.0
    }
}

#[derive(Debug, Clone)]
pub struct OrbitScan {
    pub a: Vec<f64>,
    /// `F_η(a) = (I − J)(act(a, η))`.
    pub f_eta: Vec<f64>,
    pub energy: Vec<f64>,
    pub j: Vec<f64>,
    /// Constant added by the `AM` normalization.
    pub am_shift: Vec<f64>,
}

impl OrbitScan {
    /// Largest `|E(a) − E(0)|` (or `E` at the grid point nearest 0).
    pub fn energy_spread(&self) -> f64 {
        let k0 = (0..self.a.len()).min_by(|&i, &j| self.a[i].abs().total_cmp(&self.a[j].abs())).unwrap_or(0);
        self.energy.iter().map(|e| (e - self.energy[k0]).abs()).fold(0.0, f64::max)
    }

    /// Smallest second difference of `F_η` over interior points.
    pub fn min_second_difference(&self) -> f64 {
        (1..self.a.len().saturating_sub(1))
            .map(|k| {
                let (h0, h1) = (self.a[k] - self.a[k - 1], self.a[k + 1] - self.a[k]);
                2.0 * (h0 * self.f_eta[k + 1] - (h0 + h1) * self.f_eta[k] + h1 * self.f_eta[k - 1]) / (h0 * h1 * (h0 + h1))
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,F_eta,E,J,am_shift\n");
        for k in 0..self.a.len() {
            out.push_str(&format!("{:e},{:e},{:e},{:e},{:e}\n", self.a[k], self.f_eta[k], self.energy[k], self.j[k], self.am_shift[k]));
        }
        out
    }
}

/// Tabulates `F_η`, `E` and `J` along the orbit of `η`.
pub fn orbit_scan(eta: &Potential, a_grid: &[f64]) -> Result<OrbitScan> {
    let mut s = OrbitScan { a: Vec::new(), f_eta: Vec::new(), energy: Vec::new(), j: Vec::new(), am_shift: Vec::new() };
    for &a in a_grid {
        let raw = act_raw(a, eta)?;
        let shift = -am(&raw)?;
        let r = mabuchi(&raw.shifted(shift))?;
        s.a.push(a);
        s.f_eta.push(r.i_minus_j);
        s.energy.push(r.e_fano);
        s.j.push(r.j);
        s.am_shift.push(shift);
    }
    Ok(s)
}

/// Uniform grid of `count` points on `[-w, w]`.
pub fn a_grid(w: f64, count: usize) -> Vec<f64> {
    let count = count.max(2);
    (0..count).map(|k| -w + 2.0 * w * k as f64 / (count - 1) as f64).collect()
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
pub fn golden_min<F: FnMut(f64) -> Result<f64>>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c)?;
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d)?;
        }
    }
    Ok(if fc <= fd { (c, fc) } else { (d, fd) })
}

/// Minimizes `f` over `[-w, w]`: coarse scan, then golden section around
/// the best grid point. The minimizer must be interior.
fn orbit_min<F: FnMut(f64) -> Result<f64>>(mut f: F, w: f64, coarse: usize, tol: f64) -> Result<(f64, f64)> {
    let grid = a_grid(w, coarse);
    let vals = grid.iter().map(|&a| f(a)).collect::<Result<Vec<f64>>>()?;
    let k = (0..vals.len()).min_by(|&i, &j| vals[i].total_cmp(&vals[j])).unwrap_or(0);
    if k == 0 || k == grid.len() - 1 {
        return Err(Error::TruncationExceeded { a: grid[k], window: w });
    }
    golden_min(f, grid[k - 1], grid[k + 1], tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrbitMin {
    pub value: f64,
    pub minimizer: f64,
}

fn search_width(m: &ModelGeometry) -> f64 {
    window(m) * (1.0 - 1e-9)
}

/// `J_G(φ) = inf_a J(act(a, φ))`.
pub fn jg(phi: &Potential) -> Result<OrbitMin> {
    check_round(phi.model())?;
    let w = search_width(phi.model());
    let (a, v) = orbit_min(|a| Ok(aubin(&act(a, phi)?)?.j), w, 65, 1e-9)?;
    Ok(OrbitMin { value: v, minimizer: a })
}

/// `d₁,G(u, v) = inf_a d₁(u, act(a, v))`.
pub fn d1g(u: &Potential, v: &Potential) -> Result<OrbitMin> {
    check_round(u.model())?;
    let w = search_width(u.model());
    let (a, d) = orbit_min(|a| metric::d1_value(u, &act(a, v)?), w, 65, 1e-9)?;
    Ok(OrbitMin { value: d, minimizer: a })
}

/// `dE/da` along the orbit at `a = 0`, by a centered difference.
pub fn futaki_derivative(phi: &Potential) -> Result<f64> {
    let da = 1e-3;
    Ok((k_energy(&act(da, phi)?)? - k_energy(&act(-da, phi)?)?) / (2.0 * da))
}

/// `dF/da` at `a = 0` for `F(a) = J(ω_φ, ω_{act(a,0)})`; it vanishes when
/// `φ` is orthogonal to the first eigenspace.
pub fn orbit_critical_derivative(phi: &Potential) -> Result<f64> {
    let zero = phi.model().zero();
    let da = 1e-3;
    Ok((j_relative(phi, &act(da, &zero)?)? - j_relative(phi, &act(-da, &zero)?)?) / (2.0 * da))
}

// ---------------------------------------------------------------- H^⊥

/// First invariant eigenfunction of `−Δ_ω` on the sphere model,
/// `L²(ω)`-normalized, with its eigenvalue.
#[derive(Debug, Clone)]
pub struct FirstEigen {
    pub value: f64,
    pub vector: Vec<f64>,
}

pub fn first_eigen(m: &Arc<ModelGeometry>) -> Result<FirstEigen> {
    check_round(m)?;
    let mut v: Vec<f64> = m.nodes.iter().map(|&x| crate::model::moment_z(x)).collect();
    let norm = |v: &mut Vec<f64>| {
        let mean = m.mean(v);
        v.iter_mut().for_each(|x| *x -= mean);
        let s = m.weights.iter().zip(v.iter()).map(|(w, x)| w * x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= s);
    };
    norm(&mut v);
    let mut value = 0.0;
    for _ in 0..200 {
        let b: Vec<f64> = v.iter().zip(&m.weights).map(|(x, w)| w * x).collect();
        let mut next = m.solve_neg_div(&b, 1e-14)?;
        norm(&mut next);
        let lv = m.div(&next);
        let rq = -next.iter().zip(&lv).map(|(a, b)| a * b).sum::<f64>();
        let done = (rq - value).abs() <= 1e-14 * rq;
        value = rq;
        v = next;
        if done {
            break;
        }
    }
    Ok(FirstEigen { value, vector: v })
}

#[derive(Debug, Clone)]
pub struct PerpProjection {
    pub potential: Potential,
    /// Fraction of the eigen-component that was removed (1 unless admissibility forced less).
    pub removed: f64,
    pub admissibility_loss: bool,
}

/// Removes the first-eigenspace component of `φ` in `L²(ω)`.
pub fn perp_project(phi: &Potential, eig: &FirstEigen) -> Result<PerpProjection> {
    let m = phi.model();
    let c: f64 = (0..m.len()).map(|k| m.weights[k] * phi.samples()[k] * eig.vector[k]).sum();
    let mut frac = 1.0;
    for _ in 0..60 {
        let p = phi.add_field(&eig.vector, -frac * c);
        if p.is_admissible() {
            return Ok(PerpProjection { potential: p, removed: frac, admissibility_loss: frac < 1.0 });
        }
        frac *= 0.5;
    }
    Err(Error::NotAdmissible { node: 0, min_density: phi.density().min() })
}

// ---------------------------------------------------------------- Moser–Trudinger

#[derive(Debug, Clone, Copy)]
pub struct RayPoint {
    pub ray: usize,
    pub t: f64,
    pub j: f64,
    pub energy: f64,
    /// `dF/da(0)` for the projected point (criticality of the identity).
    pub critical: f64,
}

#[derive(Debug, Clone)]
pub struct MtScan {
    pub points: Vec<RayPoint>,
    /// Orbit control rays `act(a, 0)`: `(J, E)` pairs.
    pub control: Vec<(f64, f64)>,
    /// Least-squares slope through the origin of `E` on `J` along each ray.
    pub ray_slopes: Vec<f64>,
    /// `C`: mean of `ray_slopes`, so every ray counts once.
    pub slope: f64,
    /// Least-squares slope of the pooled points (dominated by the rays reaching the largest `J`).
    pub pooled_slope: f64,
    /// `D = max(C·J − E, 0)` over the sample.
    pub offset: f64,
    pub control_slope: f64,
    pub max_critical: f64,
}

impl MtScan {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kind,ray,t,J,E,critical\n");
        for p in &self.points {
            out.push_str(&format!("perp,{},{:e},{:e},{:e},{:e}\n", p.ray, p.t, p.j, p.energy, p.critical));
        }
        for (k, (j, e)) in self.control.iter().enumerate() {
            out.push_str(&format!("orbit,{},{:e},{:e},{:e},0\n", k, k, j, e));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct MtOptions {
    pub rays: usize,
    pub steps: usize,
    /// Lowest Legendre degree in ray directions.
    pub min_degree: usize,
    pub modes: usize,
    /// Ray end is where the minimum density reaches this value.
    pub end_density: f64,
}

impl Default for MtOptions {
    fn default() -> Self {
        MtOptions { rays: 32, steps: 8, min_degree: 2, modes: 6, end_density: 0.02 }
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
}

/// Rays `t ↦ t v` projected into `H^⊥`, with the supporting line `E ≥ CJ − D`.
///
/// Ray `k` is drawn before ray `k + 1`, so a scan with more rays extends
/// one with fewer.
pub fn mt_scan(m: &Arc<ModelGeometry>, rng: &mut Rng64, opts: &MtOptions) -> Result<MtScan> {
    let eig = first_eigen(m)?;
    let spec = SampleSpec { modes: opts.modes, min_degree: opts.min_degree, depth: (1.0 - opts.end_density, 1.0 - opts.end_density), constant: 0.0, x_only: false };
    let mut points = Vec::new();
    for ray in 0..opts.rays {
        let shape = sample::random_shape(m, rng, &spec);
        let end = sample::scale_to_depth(&shape, 1.0 - opts.end_density, 0.0);
        for k in 1..=opts.steps {
            let t = k as f64 / opts.steps as f64;
            let pr = perp_project(&end.scaled(t), &eig)?;
            let p = pr.potential.shifted(-am(&pr.potential)?);
            let r = mabuchi(&p)?;
            points.push(RayPoint { ray, t, j: r.j, energy: r.e_fano, critical: orbit_critical_derivative(&p)? });
        }
    }
    let ray_slopes: Vec<f64> = (0..opts.rays)
        .map(|r| {
            let on_ray = points.iter().filter(|p| p.ray == r);
            let (je, jj) = on_ray.fold((0.0, 0.0), |(a, b), p| (a + p.j * p.energy, b + p.j * p.j));
            je / jj
        })
        .collect();
    let slope = ray_slopes.iter().sum::<f64>() / ray_slopes.len() as f64;
    let all: Vec<(f64, f64)> = points.iter().map(|p| (p.j, p.energy)).collect();
    let pooled_slope = ls_slope(&all);
    let offset = all.iter().map(|(j, e)| slope * j - e).fold(0.0, f64::max);
    let w = 0.9 * window(m);
    let zero = m.zero();
    let control = (0..=opts.steps)
        .map(|k| {
            let p = act(w * k as f64 / opts.steps as f64, &zero)?;
            let r = mabuchi(&p)?;
            Ok((r.j, r.e_fano))
        })
        .collect::<Result<Vec<_>>>()?;
    let control_slope = ls_slope(&control);
    let max_critical = points.iter().map(|p| p.critical.abs()).fold(0.0, f64::max);
    Ok(MtScan { points, control, ray_slopes, slope, pooled_slope, offset, control_slope, max_critical })
}

// ---------------------------------------------------------------- integrability

#[derive(Debug, Clone, Copy)]
pub struct HormanderReport {
    pub samples: usize,
    pub max_integral: f64,
    pub min_integral: f64,
    /// `∫_{B_ρ} √−1 dz∧dz̄`, the value for `ψ ≡ 0`.
    pub area: f64,
}

/// Disc grid `[-R, R]²` with Dirichlet data outside `B_R`.
pub struct DiscGrid {
    pub m: usize,
    pub radius: f64,
    pub h: f64,
    /// Grid index of each interior unknown.
    pub interior: Vec<usize>,
    /// Unknown number for each grid node, or `usize::MAX` outside.
    pub slot: Vec<usize>,
}

impl DiscGrid {
    pub fn new(m: usize, radius: f64) -> DiscGrid {
        let h = 2.0 * radius / m as f64;
        let mut slot = vec![usize::MAX; (m + 1) * (m + 1)];
        let mut interior = Vec::new();
        for j in 1..m {
            for i in 1..m {
                let (x, y) = (-radius + i as f64 * h, -radius + j as f64 * h);
                if x * x + y * y < radius * radius {
                    slot[j * (m + 1) + i] = interior.len();
                    interior.push(j * (m + 1) + i);
                }
            }
        }
        DiscGrid { m, radius, h, interior, slot }
    }

    pub fn xy(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx % (self.m + 1), idx / (self.m + 1));
        (-self.radius + i as f64 * self.h, -self.radius + j as f64 * self.h)
    }

    /// `−Δ_h` on interior unknowns with zero data outside.
    fn neg_laplacian(&self, x: &[f64], out: &mut [f64]) {
        let s = self.m + 1;
        let inv = 1.0 / (self.h * self.h);
        for (k, &idx) in self.interior.iter().enumerate() {
            let mut acc = 4.0 * x[k];
            for nb in [idx - 1, idx + 1, idx - s, idx + s] {
                let q = self.slot[nb];
                if q != usize::MAX {
                    acc -= x[q];
                }
            }
            out[k] = acc * inv;
        }
    }

    /// Solves `Δ_h ψ = μ` with `ψ = 0` off the disc.
    pub fn green_potential(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let b: Vec<f64> = mu.iter().map(|v| -v).collect();
        linalg::pcg(|x, out| self.neg_laplacian(x, out), |r, z| z.copy_from_slice(r), &b, None, 1e-10, 20_000)
    }

    /// Value at the origin (the grid has a node there when `m` is even).
    pub fn at_origin(&self, psi: &[f64]) -> f64 {
        let c = (self.m / 2) * (self.m + 1) + self.m / 2;
        psi[self.slot[c]]
    }

    /// `∫_{B_ρ} e^{−ψ} √−1 dz∧dz̄` by the midpoint rule on grid cells.
    pub fn integral(&self, psi: &[f64], rho: f64) -> f64 {
        let mut total = 0.0;
        for (k, &idx) in self.interior.iter().enumerate() {
            let (x, y) = self.xy(idx);
            if x * x + y * y < rho * rho {
                total += (-psi[k]).exp();
            }
        }
        2.0 * self.h * self.h * total
    }

    /// Area weight `2h²` times the number of nodes in `B_ρ`.
    pub fn area(&self, rho: f64) -> f64 {
        self.integral(&vec![0.0; self.interior.len()], rho)
    }
}

fn check_rho(radius: f64, rho: f64) -> Result<()> {
    if !(rho >= 0.5 * radius && rho < (-0.5f64).exp() * radius) {
        return Err(Error::InvalidArgument(format!("rho = {rho} outside [R/2, R e^(-1/2))")));
    }
    Ok(())
}

/// Random subharmonic `ψ ≤ 0` with `ψ(0) ≥ −1`: the Green potential of a
/// few positive bumps, rescaled when the value at the origin is below −1.
pub fn random_subharmonic(grid: &DiscGrid, rng: &mut Rng64) -> Result<Vec<f64>> {
    let r = grid.radius;
    let bumps = rng.gen_range(1..=4);
    let mut mu = vec![0.0; grid.interior.len()];
    for _ in 0..bumps {
        let rad = r * rng.gen_range(0.0f64..0.95).sqrt();
        let th = rng.gen_range(0.0..2.0 * PI);
        let (cx, cy) = (rad * th.cos(), rad * th.sin());
        let width = rng.gen_range(2.0..6.0) * grid.h;
        let mass = rng.gen_range(0.5..12.0);
        let mut local = vec![0.0; mu.len()];
        for (k, &idx) in grid.interior.iter().enumerate() {
            let (x, y) = grid.xy(idx);
            let d2 = (x - cx).powi(2) + (y - cy).powi(2);
            local[k] = (-d2 / (2.0 * width * width)).exp();
        }
        let total: f64 = local.iter().sum::<f64>() * grid.h * grid.h;
        for k in 0..mu.len() {
            mu[k] += mass * local[k] / total;
        }
    }
    let mut psi = grid.green_potential(&mu)?;
    let at0 = grid.at_origin(&psi);
    if at0 < -1.0 {
        let s = -1.0 / at0;
        psi.iter_mut().for_each(|v| *v *= s);
    }
    Ok(psi)
}

/// Maximum of `∫_{B_ρ} e^{−ψ}` over `samples` random subharmonic functions.
pub fn hormander_check(samples: usize, radius: f64, rho: f64, seed: u64, grid_size: usize) -> Result<HormanderReport> {
    check_rho(radius, rho)?;
    let grid = DiscGrid::new(grid_size + grid_size % 2, radius);
    let mut rng = sample::rng(seed);
    let mut max_integral: f64 = 0.0;
    let mut min_integral = f64::INFINITY;
    for _ in 0..samples {
        let psi = random_subharmonic(&grid, &mut rng)?;
        let v = grid.integral(&psi, rho);
        max_integral = max_integral.max(v);
        min_integral = min_integral.min(v);
    }
    Ok(HormanderReport { samples, max_integral, min_integral, area: grid.area(rho) })
}

#[derive(Debug, Clone)]
pub struct AlphaTable {
    pub betas: Vec<f64>,
    /// `log sup_family ∫ e^{−β(φ − sup φ)} ω`.
    pub log_sup: Vec<f64>,
    /// The same over the first half of the family.
    pub log_sup_half: Vec<f64>,
    /// Largest β up to which every entry is stable under doubling the family (ratio < 2).
    pub stable_beta: f64,
}

impl AlphaTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("beta,log_sup,log_sup_half,stable\n");
        for k in 0..self.betas.len() {
            let stable = self.log_sup[k] - self.log_sup_half[k] < 2f64.ln();
            out.push_str(&format!("{:e},{:e},{:e},{}\n", self.betas[k], self.log_sup[k], self.log_sup_half[k], stable as u8));
        }
        out
    }
}

/// `log ∫ e^{−β(φ − sup φ)} ω`, evaluated in log-sum-exp form.
pub fn log_exp_integral(phi: &Potential, beta: f64) -> f64 {
    let m = phi.model();
    let top = phi.max();
    let g: Vec<f64> = phi.samples().iter().map(|p| -beta * (p - top)).collect();
    log_mean_exp(&m.weights, &g, m.volume) + m.volume.ln()
}

/// Sup over `family` of `∫ e^{−β(φ − sup φ)} ω` for each β; a lower-bound
/// certificate for the sampled family only.
pub fn alpha_scan(family: &[Potential], betas: &[f64]) -> Result<AlphaTable> {
    if family.is_empty() {
        return Err(Error::InvalidArgument("empty family".into()));
    }
    let half = family.len().div_ceil(2);
    let mut log_sup = Vec::with_capacity(betas.len());
    let mut log_sup_half = Vec::with_capacity(betas.len());
    for &b in betas {
        let vals: Vec<f64> = family.iter().map(|p| log_exp_integral(p, b)).collect();
        log_sup.push(vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
        log_sup_half.push(vals[..half].iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    }
    let mut stable_beta = 0.0;
    let mut order: Vec<usize> = (0..betas.len()).collect();
    order.sort_by(|&i, &j| betas[i].total_cmp(&betas[j]));
    for k in order {
        if log_sup[k] - log_sup_half[k] < 2f64.ln() {
            stable_beta = betas[k];
        } else {
            break;
        }
    }
    Ok(AlphaTable { betas: betas.to_vec(), log_sup, log_sup_half, stable_beta })
}

/// The orbit family `act(a, 0)` for `a` on `[0, a_max]`.
pub fn orbit_family(m: &Arc<ModelGeometry>, a_max: f64, count: usize) -> Result<Vec<Potential>> {
    let zero = m.zero();
    (0..count).map(|k| act(a_max * k as f64 / (count - 1).max(1) as f64, &zero)).collect()
}
