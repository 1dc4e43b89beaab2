//! Model geometries and pointwise operators.
//!
//! Two reference Kähler structures in complex dimension one:
//!
//! * `Torus2`: the flat torus on `[0,1)²`, sampled on a periodic `N × N`
//!   lattice. `ω = scale · dx∧dy`, so `V = scale` (1 by default).
//! * `P1Symmetric`: circle-invariant metrics on the sphere written in
//!   `x = log|z|²`, reference potential `ψ(x) = 2 log(1 + eˣ)`, `Ric ω = ω`,
//!   `V = 4π`. The interval `[-X, X]` carries `N + 1` nodes.
//!
//! Both discretizations are written in divergence form: a potential `φ`
//! has a discrete "divergence" `L(φ)` with `Σ L(φ) = 0`, cell weights `w`
//! integrate against `ω`, and
//!
//! ```text
//! Δ_ω v = L(v) / w,        ω_φ / ω = 1 + L(φ) / w.
//! ```
//!
//! On the torus `L` is half the periodic 5-point Laplacian. On the sphere
//! each node owns the cell between neighbouring faces; `L(v)_i =
//! 2π (F_{i+½} − F_{i−½})` with `F` the face slopes of `v` and zero flux
//! through the two polar faces. The weight of a cell is `2π` times the jump
//! of the reference slope across it, and the polar caps absorb the tails
//! beyond `±X`, so the weights telescope to `4π` exactly.
//!
//! Sphere potentials carry their face slopes alongside the node values.
//! Near the caps the reference density is `~e^{-X}`, far below the rounding
//! level of the node values, and densities must be formed from slopes that
//! were computed without cancellation.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg;

/// Densities at or below this level are flagged as degenerate.
pub const DEGENERATE_DENSITY: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Torus2,
    P1Symmetric,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Torus2 => "torus",
            ModelKind::P1Symmetric => "p1",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "torus" | "Torus2" | "torus2" => Some(ModelKind::Torus2),
            "p1" | "P1Symmetric" | "p1symmetric" | "sphere" => Some(ModelKind::P1Symmetric),
            _ => None,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone)]
pub struct ModelGeometry {
    pub kind: ModelKind,
    pub n: usize,
    /// Truncation half-width (sphere only; 0 on the torus).
    pub x_trunc: f64,
    pub h: f64,
    pub mu: f64,
    pub volume: f64,
    /// Torus area scale; 1 on the sphere.
    pub scale: f64,
    /// Node coordinates `x_i` (sphere only).
    pub nodes: Vec<f64>,
    pub reference_potential: Vec<f64>,
    /// Reference face slopes, `N` interior faces (sphere only).
    pub ref_slopes: Vec<f64>,
    /// `2 − ref_slopes`, computed without cancellation (sphere only).
    pub ref_slopes_c: Vec<f64>,
    /// Jump of the reference slope across each cell (sphere only).
    pub ref_jumps: Vec<f64>,
    pub weights: Vec<f64>,
    /// Ricci potential `f_ω` of the reference.
    pub ricci_reference: Vec<f64>,
}

/// Builds one of the two model geometries with default normalizations.
pub fn make_model(kind: ModelKind, n: usize, x_trunc: f64) -> Result<Arc<ModelGeometry>> {
    Ok(Arc::new(ModelGeometry::new(kind, n, x_trunc)?))
}

/// `ψ(x) = 2 log(1 + eˣ)` without overflow.
pub fn psi(x: f64) -> f64 {
    if x > 0.0 {
        2.0 * (x + (-x).exp().ln_1p())
    } else {
        2.0 * x.exp().ln_1p()
    }
}

/// Moment coordinate minus one: `ψ'(x) − 1 = tanh(x/2)`.
pub fn moment_z(x: f64) -> f64 {
    (0.5 * x).tanh()
}

/// Reference density `ψ''(x) = 2eˣ/(1+eˣ)²`.
pub fn psi_second(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    2.0 * e / ((1.0 + e) * (1.0 + e))
}

/// Secant slope of `ψ` over `[a, b]` as `(S, 2 − S)`, each computed
/// without cancellation in the regime where it is small.
pub fn psi_secant(a: f64, b: f64) -> (f64, f64) {
    let h = b - a;
    if 0.5 * (a + b) <= 0.0 {
        let s = (psi(b) - psi(a)) / h;
        (s, 2.0 - s)
    } else {
        // ψ(x) = 2x + ψ(−x)
        let c = (psi(-a) - psi(-b)) / h;
        (2.0 - c, c)
    }
}

/// Legendre polynomial `P_l(z)` by the three-term recurrence.
pub fn legendre(l: usize, z: f64) -> f64 {
    if l == 0 {
        return 1.0;
    }
    let (mut p0, mut p1) = (1.0, z);
    for k in 1..l {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * z * p1 - kf * p0) / (kf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Derivative `P_l'(z)`.
pub fn legendre_deriv(l: usize, z: f64) -> f64 {
    if l == 0 {
        return 0.0;
    }
    // (1 − z²) P_l' = l (P_{l−1} − z P_l); use the sum form to stay finite at z = ±1.
    let mut d = 0.0;
    let mut k = l as isize - 1;
    while k >= 0 {
        d += (2 * k + 1) as f64 * legendre(k as usize, z);
        k -= 2;
    }
    d
}

impl ModelGeometry {
    pub fn new(kind: ModelKind, n: usize, x_trunc: f64) -> Result<ModelGeometry> {
        if n < 8 || n % 2 == 1 {
            return Err(Error::BadGrid(n));
        }
        match kind {
            ModelKind::Torus2 => {
                let h = 1.0 / n as f64;
                let mut reference_potential = Vec::with_capacity(n * n);
                for j in 0..n {
                    for i in 0..n {
                        let (x, y) = (i as f64 * h, j as f64 * h);
                        reference_potential.push(0.5 * (x * x + y * y));
                    }
                }
                Ok(ModelGeometry {
                    kind,
                    n,
                    x_trunc: 0.0,
                    h,
                    mu: 0.0,
                    volume: 1.0,
                    scale: 1.0,
                    nodes: Vec::new(),
                    reference_potential,
                    ref_slopes: Vec::new(),
                    ref_slopes_c: Vec::new(),
                    ref_jumps: Vec::new(),
                    weights: vec![h * h; n * n],
                    ricci_reference: vec![0.0; n * n],
                })
            }
            ModelKind::P1Symmetric => {
                if !(x_trunc >= 8.0) {
                    return Err(Error::BadTruncation(x_trunc));
                }
                let h = 2.0 * x_trunc / n as f64;
                let nodes: Vec<f64> = (0..=n).map(|i| -x_trunc + i as f64 * h).collect();
                let pairs: Vec<(f64, f64)> = (0..n).map(|i| psi_secant(nodes[i], nodes[i + 1])).collect();
                let ref_slopes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let ref_slopes_c: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                let mut ref_jumps = vec![0.0; n + 1];
                ref_jumps[0] = pairs[0].0;
                ref_jumps[n] = pairs[n - 1].1;
                for i in 1..n {
                    ref_jumps[i] = if nodes[i] <= 0.0 {
                        pairs[i].0 - pairs[i - 1].0
                    } else {
                        pairs[i - 1].1 - pairs[i].1
                    };
                }
                let weights: Vec<f64> = ref_jumps.iter().map(|d| 2.0 * PI * d).collect();
                Ok(ModelGeometry {
                    kind,
                    n,
                    x_trunc,
                    h,
                    mu: 1.0,
                    volume: 4.0 * PI,
                    scale: 1.0,
                    reference_potential: nodes.iter().map(|&x| psi(x)).collect(),
                    nodes,
                    ref_slopes,
                    ref_slopes_c,
                    ref_jumps,
                    weights,
                    ricci_reference: vec![0.0; n + 1],
                })
            }
        }
    }

    /// Rescales the torus form `ω ↦ λ ω`.
    pub fn with_scale(mut self, scale: f64) -> Result<ModelGeometry> {
        if self.kind != ModelKind::Torus2 {
            return Err(Error::Unsupported("area scale is a torus knob"));
        }
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
        }
        let ratio = scale / self.scale;
        self.scale = scale;
        self.volume *= ratio;
        self.weights.iter_mut().for_each(|w| *w *= ratio);
        Ok(self)
    }

    /// Overrides the Einstein constant (synthetic runs only).
    pub fn with_mu(mut self, mu: f64) -> ModelGeometry {
        self.mu = mu;
        self
    }

    /// Replaces `f_ω` by `F − log(V⁻¹∫e^F ω)` so the normalization holds.
    pub fn with_ricci(mut self, f: Vec<f64>) -> Result<ModelGeometry> {
        if f.len() != self.len() {
            return Err(Error::InvalidArgument(format!("ricci field has {} samples, grid has {}", f.len(), self.len())));
        }
        let c = log_mean_exp(&self.weights, &f, self.volume);
        self.ricci_reference = f.into_iter().map(|v| v - c).collect();
        Ok(self)
    }

    /// Sphere model whose reference is `ψ + φ₀` with `φ₀ = Σ c_l P_l(z)`.
    ///
    /// Returns the new model together with `φ₀` as a potential on the round
    /// model. The new Ricci potential is sampled from its closed form
    /// `−log(ω_{φ₀}/ω) − φ₀` and then normalized by quadrature.
    pub fn p1_perturbed(n: usize, x_trunc: f64, coeffs: &[f64]) -> Result<(Arc<ModelGeometry>, Potential)> {
        let round = make_model(ModelKind::P1Symmetric, n, x_trunc)?;
        let phi0 = Potential::legendre(round.clone(), coeffs)?;
        let dens0 = phi0.density();
        if let Some(&node) = dens0.nonpositive.first() {
            return Err(Error::NotAdmissible { node, min_density: dens0.samples[node] });
        }
        let mut m = (*round).clone();
        m.reference_potential = round.reference_potential.iter().zip(phi0.samples()).map(|(a, b)| a + b).collect();
        m.ref_slopes = round.ref_slopes.iter().zip(phi0.slopes()).map(|(a, b)| a + b).collect();
        m.ref_slopes_c = round.ref_slopes_c.iter().zip(phi0.slopes()).map(|(a, b)| a - b).collect();
        for i in 0..=n {
            m.ref_jumps[i] *= dens0.samples[i];
            m.weights[i] *= dens0.samples[i];
        }
        let ricci: Vec<f64> = round
            .nodes
            .iter()
            .zip(phi0.samples())
            .map(|(&x, &p)| {
                let z = moment_z(x);
                let d = 1.0 - 0.5 * coeffs.iter().enumerate().map(|(l, c)| c * (l * (l + 1)) as f64 * legendre(l, z)).sum::<f64>();
                -d.ln() - round.mu * p
            })
            .collect();
        let m = m.with_ricci(ricci)?;
        Ok((Arc::new(m), phi0))
    }

    pub fn len(&self) -> usize {
        match self.kind {
            ModelKind::Torus2 => self.n * self.n,
            ModelKind::P1Symmetric => self.n + 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Complex dimension.
    pub fn dim(&self) -> f64 {
        1.0
    }

    /// `∫ f ω` by cell quadrature.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        linalg::dot(&self.weights, f)
    }

    /// `V⁻¹ ∫ f ω`.
    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate(f) / self.volume
    }

    pub fn same_grid(&self, other: &ModelGeometry) -> bool {
        self.kind == other.kind && self.n == other.n && self.x_trunc == other.x_trunc
    }

    /// Interior face slopes of a node field (sphere only).
    pub fn face_slopes(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.kind, ModelKind::P1Symmetric);
        v.windows(2).map(|p| (p[1] - p[0]) / self.h).collect()
    }

    /// Divergence `L(v)` from sphere face slopes, zero polar flux.
    pub fn div_from_slopes(&self, slopes: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n + 1];
        for i in 0..=n {
            let right = if i < n { slopes[i] } else { 0.0 };
            let left = if i > 0 { slopes[i - 1] } else { 0.0 };
            out[i] = 2.0 * PI * (right - left);
        }
        out
    }

    /// Divergence `L(v)` of a raw node field, so that `Δ_ω v = L(v)/w`.
    pub fn div(&self, v: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::Torus2 => {
                let n = self.n;
                let mut out = vec![0.0; n * n];
                for j in 0..n {
                    let jp = (j + 1) % n;
                    let jm = (j + n - 1) % n;
                    for i in 0..n {
                        let ip = (i + 1) % n;
                        let im = (i + n - 1) % n;
                        let c = v[j * n + i];
                        out[j * n + i] = 0.5 * (v[j * n + ip] + v[j * n + im] + v[jp * n + i] + v[jm * n + i] - 4.0 * c);
                    }
                }
                out
            }
            ModelKind::P1Symmetric => self.div_from_slopes(&self.face_slopes(v)),
        }
    }

    /// Tridiagonal coefficients of `L` on the sphere: `(lower, diag, upper)`.
    pub fn div_tridiagonal(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let n = self.n;
        let c = 2.0 * PI / self.h;
        let off = vec![c; n];
        let mut diag = vec![-2.0 * c; n + 1];
        diag[0] = -c;
        diag[n] = -c;
        (off.clone(), diag, off)
    }

    /// Reference Laplacian `Δ_ω v`.
    pub fn laplacian(&self, v: &[f64]) -> Vec<f64> {
        self.div(v).iter().zip(&self.weights).map(|(l, w)| l / w).collect()
    }

    /// `V⁻¹ ∫ (Δ_ω)⁻¹`-type solve: returns the mean-zero `g` with `−L(g) = b`.
    ///
    /// `b` must sum to zero. Sphere solves integrate the flux directly;
    /// torus solves use conjugate gradients with an FFT preconditioner.
    pub fn solve_neg_div(&self, b: &[f64], rtol: f64) -> Result<Vec<f64>> {
        let mut g = match self.kind {
            ModelKind::P1Symmetric => {
                let n = self.n;
                let mut g = vec![0.0; n + 1];
                let mut flux = 0.0;
                for i in 0..n {
                    // 2π (F_{i+½} − F_{i−½}) = −b_i
                    flux -= b[i] / (2.0 * PI);
                    g[i + 1] = g[i] + self.h * flux;
                }
                g
            }
            ModelKind::Torus2 => {
                let n = self.n;
                let fft = linalg::PeriodicFft::new(n);
                let mean_b = b.iter().sum::<f64>() / b.len() as f64;
                let rhs: Vec<f64> = b.iter().map(|v| v - mean_b).collect();
                let apply = |x: &[f64], out: &mut [f64]| {
                    let l = self.div(x);
                    for k in 0..out.len() {
                        out[k] = -l[k];
                    }
                };
                let pre = |r: &[f64], z: &mut [f64]| {
                    fft.apply_symbol(r, z, |i, j| {
                        let s = 0.5 * linalg::five_point_symbol(n, i, j);
                        if s == 0.0 {
                            0.0
                        } else {
                            1.0 / s
                        }
                    })
                };
                linalg::pcg(apply, pre, &rhs, None, rtol, 10 * n * n)?
            }
        };
        let m = self.mean(&g);
        g.iter_mut().for_each(|v| *v -= m);
        Ok(g)
    }

    /// Samples of `f_ω` (the stored Ricci potential).
    pub fn ricci(&self) -> &[f64] {
        &self.ricci_reference
    }

    /// Constant potential `c`.
    pub fn constant(self: &Arc<Self>, c: f64) -> Potential {
        Potential::from_samples(self.clone(), vec![c; self.len()]).expect("length matches")
    }

    pub fn zero(self: &Arc<Self>) -> Potential {
        self.constant(0.0)
    }

    /// One-line descriptor `kind N X mu V` used by snapshots.
    pub fn descriptor(&self) -> String {
        format!("{} {} {} {} {}", self.kind.name(), self.n, fmt17(self.x_trunc), fmt17(self.mu), fmt17(self.volume))
    }

    /// Torus node coordinates `(x, y)` for a flat index.
    pub fn torus_xy(&self, k: usize) -> (f64, f64) {
        ((k % self.n) as f64 * self.h, (k / self.n) as f64 * self.h)
    }
}

/// `Σ c_l P_l(z)`.
pub fn legendre_series(coeffs: &[f64], z: f64) -> f64 {
    coeffs.iter().enumerate().map(|(l, c)| c * legendre(l, z)).sum()
}

/// Divided difference `(S(b) − S(a))/(b − a)` of `S = Σ c_l P_l`.
pub fn legendre_series_divided(coeffs: &[f64], a: f64, b: f64) -> f64 {
    // D[z P](a, b) = P(a) + b D[P](a, b)
    let (mut p0, mut p1) = (1.0, a);
    let (mut d0, mut d1) = (0.0, 1.0);
    let mut total = coeffs.get(1).copied().unwrap_or(0.0);
    for (k, c) in coeffs.iter().enumerate().skip(2) {
        let kf = (k - 1) as f64;
        let p2 = ((2.0 * kf + 1.0) * a * p1 - kf * p0) / (kf + 1.0);
        let d2 = ((2.0 * kf + 1.0) * (p1 + b * d1) - kf * d0) / (kf + 1.0);
        total += c * d2;
        (p0, p1, d0, d1) = (p1, p2, d1, d2);
    }
    total
}

/// `log(V⁻¹ Σ w e^f)` with a max shift.
pub fn log_mean_exp(weights: &[f64], f: &[f64], volume: f64) -> f64 {
    let m = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = weights.iter().zip(f).map(|(w, v)| w * (v - m).exp()).sum();
    m + (s / volume).ln()
}

/// Formats with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Grid samples of a relative Kähler potential.
#[derive(Clone)]
pub struct Potential {
    model: Arc<ModelGeometry>,
    samples: Vec<f64>,
    /// Face slopes (sphere only).
    slopes: Vec<f64>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential").field("model", &self.model.kind).field("n", &self.model.n).field("len", &self.samples.len()).finish()
    }
}

impl Potential {
    pub fn from_samples(model: Arc<ModelGeometry>, samples: Vec<f64>) -> Result<Potential> {
        if samples.len() != model.len() {
            return Err(Error::InvalidArgument(format!("{} samples for a grid of {}", samples.len(), model.len())));
        }
        let slopes = match model.kind {
            ModelKind::P1Symmetric => model.face_slopes(&samples),
            ModelKind::Torus2 => Vec::new(),
        };
        Ok(Potential { model, samples, slopes })
    }

    /// Sphere potential `Σ c_l P_l(z(x))`. Face slopes come from divided
    /// differences, which keeps them accurate where `z` is close to `±1`.
    pub fn legendre(model: Arc<ModelGeometry>, coeffs: &[f64]) -> Result<Potential> {
        if model.kind != ModelKind::P1Symmetric {
            return Err(Error::Unsupported("Legendre series live on the sphere model"));
        }
        let x = &model.nodes;
        let z: Vec<f64> = x.iter().map(|&v| moment_z(v)).collect();
        let samples = z.iter().map(|&v| legendre_series(coeffs, v)).collect();
        let sh = (0.5 * model.h).sinh();
        let slopes = (0..model.n)
            .map(|i| {
                let dz = sh / ((0.5 * x[i]).cosh() * (0.5 * x[i + 1]).cosh());
                legendre_series_divided(coeffs, z[i], z[i + 1]) * dz / model.h
            })
            .collect();
        Potential::with_slopes(model, samples, slopes)
    }

    /// Sphere potential with separately computed face slopes.
    pub fn with_slopes(model: Arc<ModelGeometry>, samples: Vec<f64>, slopes: Vec<f64>) -> Result<Potential> {
        if model.kind != ModelKind::P1Symmetric || samples.len() != model.len() || slopes.len() != model.n {
            return Err(Error::InvalidArgument("slopes require a sphere grid of matching size".into()));
        }
        Ok(Potential { model, samples, slopes })
    }

    pub fn model(&self) -> &Arc<ModelGeometry> {
        &self.model
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    /// `φ + c`.
    pub fn shifted(&self, c: f64) -> Potential {
        Potential { model: self.model.clone(), samples: self.samples.iter().map(|v| v + c).collect(), slopes: self.slopes.clone() }
    }

    /// `a·φ + b·ψ` for two potentials on the same model.
    pub fn combine(&self, a: f64, other: &Potential, b: f64) -> Potential {
        debug_assert!(self.model.same_grid(&other.model));
        Potential {
            model: self.model.clone(),
            samples: self.samples.iter().zip(&other.samples).map(|(x, y)| a * x + b * y).collect(),
            slopes: self.slopes.iter().zip(&other.slopes).map(|(x, y)| a * x + b * y).collect(),
        }
    }

    pub fn scaled(&self, a: f64) -> Potential {
        Potential {
            model: self.model.clone(),
            samples: self.samples.iter().map(|x| a * x).collect(),
            slopes: self.slopes.iter().map(|x| a * x).collect(),
        }
    }

    /// `φ + v` for a raw node field.
    pub fn add_field(&self, v: &[f64], c: f64) -> Potential {
        let samples: Vec<f64> = self.samples.iter().zip(v).map(|(x, y)| x + c * y).collect();
        let slopes = match self.model.kind {
            ModelKind::P1Symmetric => {
                let dv = self.model.face_slopes(v);
                self.slopes.iter().zip(&dv).map(|(s, d)| s + c * d).collect()
            }
            ModelKind::Torus2 => Vec::new(),
        };
        Potential { model: self.model.clone(), samples, slopes }
    }

    /// Discrete divergence `L(φ)`.
    pub fn div(&self) -> Vec<f64> {
        match self.model.kind {
            ModelKind::Torus2 => self.model.div(&self.samples),
            ModelKind::P1Symmetric => self.model.div_from_slopes(&self.slopes),
        }
    }

    /// Monge–Ampère density `ω_φ/ω = 1 + Δ_ω φ`.
    pub fn density(&self) -> DensityField {
        let l = self.div();
        let samples: Vec<f64> = l.iter().zip(&self.model.weights).map(|(l, w)| 1.0 + l / w).collect();
        DensityField::new(self.model.clone(), samples)
    }

    /// Density, or `NotAdmissible` at the first nonpositive node.
    pub fn admissible_density(&self) -> Result<DensityField> {
        let d = self.density();
        if let Some(&node) = d.nonpositive.first() {
            return Err(Error::NotAdmissible { node, min_density: d.samples[node] });
        }
        Ok(d)
    }

    pub fn is_admissible(&self) -> bool {
        self.density().nonpositive.is_empty()
    }

    /// Values at the two truncation ends `(a₋, a₊)` (sphere only).
    pub fn asymptotes(&self) -> (f64, f64) {
        (self.samples[0], *self.samples.last().unwrap())
    }

    /// Size of the polar face slopes; zero for an exactly flat tail.
    pub fn flatness_residual(&self) -> f64 {
        match self.model.kind {
            ModelKind::Torus2 => 0.0,
            ModelKind::P1Symmetric => self.slopes[0].abs().max(self.slopes[self.model.n - 1].abs()),
        }
    }

    pub fn sup_distance(&self, other: &Potential) -> f64 {
        self.samples.iter().zip(&other.samples).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn oscillation(&self) -> f64 {
        self.max() - self.min()
    }
}

/// Nonnegative samples of `ω_φ / ω`.
#[derive(Debug, Clone)]
pub struct DensityField {
    pub model: Arc<ModelGeometry>,
    pub samples: Vec<f64>,
    /// Nodes with density in `(0, DEGENERATE_DENSITY]`.
    pub degenerate: Vec<usize>,
    /// Nodes with density `≤ 0`.
    pub nonpositive: Vec<usize>,
}

impl DensityField {
    pub fn new(model: Arc<ModelGeometry>, samples: Vec<f64>) -> DensityField {
        let mut degenerate = Vec::new();
        let mut nonpositive = Vec::new();
        for (i, &d) in samples.iter().enumerate() {
            if !(d > 0.0) {
                nonpositive.push(i);
            } else if d <= DEGENERATE_DENSITY {
                degenerate.push(i);
            }
        }
        DensityField { model, samples, degenerate, nonpositive }
    }

    /// `∫ ρ ω`.
    pub fn total(&self) -> f64 {
        self.model.integrate(&self.samples)
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `∫ |ρ − σ| ω`.
    pub fn l1_distance(&self, other: &DensityField) -> f64 {
        self.samples.iter().zip(&other.samples).zip(&self.model.weights).map(|((a, b), w)| w * (a - b).abs()).sum()
    }
}

/// `ω_φ / ω`, flagging nonpositive nodes rather than failing.
pub fn ma_density(phi: &Potential) -> DensityField {
    phi.density()
}

/// `Δ_{ω_base} v = Δ_ω v / density(base)`.
pub fn laplacian_at(base: &Potential, v: &[f64]) -> Vec<f64> {
    let dens = base.density();
    let l = base.model.div(v);
    l.iter().zip(&base.model.weights).zip(&dens.samples).map(|((l, w), d)| l / (w * d)).collect()
}

/// `|∇v|²` measured in `ω_base`.
///
/// The interior stencils average the squared one-sided differences, which
/// makes `∫|∇v|² ω_base = −∫ v Δ_base v ω_base` an exact discrete identity
/// on the torus. On the sphere the two polar nodes switch to one-sided
/// second-order formulas, which costs the identity only the (tiny) polar
/// cell masses.
pub fn grad_norm_sq(base: &Potential, v: &[f64]) -> Vec<f64> {
    let m = &base.model;
    let dens = base.density();
    match m.kind {
        ModelKind::Torus2 => {
            let n = m.n;
            let mut out = vec![0.0; n * n];
            let c = 1.0 / (4.0 * m.scale * m.h * m.h);
            for j in 0..n {
                let jp = (j + 1) % n;
                let jm = (j + n - 1) % n;
                for i in 0..n {
                    let ip = (i + 1) % n;
                    let im = (i + n - 1) % n;
                    let k = j * n + i;
                    let s = (v[j * n + ip] - v[k]).powi(2) + (v[j * n + im] - v[k]).powi(2) + (v[jp * n + i] - v[k]).powi(2) + (v[jm * n + i] - v[k]).powi(2);
                    out[k] = c * s / dens.samples[k];
                }
            }
            out
        }
        ModelKind::P1Symmetric => grad_norm_sq_slopes(base, &m.face_slopes(v)),
    }
}

/// Sphere `|∇v|²_{ω_φ}` from the face slopes of `v`.
pub fn grad_norm_sq_slopes(base: &Potential, f: &[f64]) -> Vec<f64> {
    let m = &base.model;
    let dens = base.density();
    {
        {
            let n = m.n;
            let h = m.h;
            let jump: Vec<f64> = m.ref_jumps.iter().zip(&dens.samples).map(|(j, d)| j * d).collect();
            let mut out = vec![0.0; n + 1];
            for i in 1..n {
                out[i] = h * 0.5 * (f[i - 1] * f[i - 1] + f[i] * f[i]) / jump[i];
            }
            // Polar nodes carry the half face so summation by parts stays exact.
            out[0] = h * 0.5 * f[0] * f[0] / jump[0];
            out[n] = h * 0.5 * f[n - 1] * f[n - 1] / jump[n];
            out
        }
    }
}

/// Scalar curvature `s_φ = (μ + Δ_ω f_ω − Δ_ω log ρ)/ρ`.
///
/// Its `ω_φ`-mean equals `nμ` exactly on the grid. Returns the field and a
/// flag that is set when the density drops below the degeneracy level.
pub fn scalar_curvature(phi: &Potential) -> (Vec<f64>, bool) {
    let m = &phi.model;
    let dens = phi.density();
    let logd: Vec<f64> = dens.samples.iter().map(|d| d.max(f64::MIN_POSITIVE).ln()).collect();
    let lf = m.div(&m.ricci_reference);
    let ll = m.div(&logd);
    let s = (0..m.len()).map(|i| (m.mu * m.dim() + (lf[i] - ll[i]) / m.weights[i]) / dens.samples[i]).collect();
    (s, dens.min() <= DEGENERATE_DENSITY)
}

/// Ricci potential `f_{ω_φ}` normalized by `∫ e^{f} ω_φ = V`.
pub fn ricci_potential_of(phi: &Potential) -> Result<Vec<f64>> {
    let m = &phi.model;
    let dens = phi.admissible_density()?;
    let g: Vec<f64> = m.ricci_reference.iter().zip(phi.samples()).map(|(f, p)| f - m.mu * p).collect();
    let c = log_mean_exp(&m.weights, &g, m.volume);
    Ok(g.iter().zip(&dens.samples).map(|(g, d)| g - d.ln() - c).collect())
}

/// Constant `A_ω = −min G` of the zero-mean discrete Green kernel.
///
/// For every admissible `φ` this yields `sup φ ≤ V⁻¹∫φ ω + n A_ω` exactly on
/// the grid. On the torus the kernel is translation invariant and one
/// column suffices; the sphere computes every column.
pub fn green_mean_value_bound(model: &ModelGeometry) -> Result<f64> {
    let len = model.len();
    let column = |src: usize| -> Result<Vec<f64>> {
        let b: Vec<f64> = (0..len).map(|k| (if k == src { 1.0 } else { 0.0 }) - model.weights[k] / model.volume).collect();
        let g = model.solve_neg_div(&b, 1e-13)?;
        Ok(g.into_iter().map(|v| v * model.volume).collect())
    };
    let mut gmin = f64::INFINITY;
    match model.kind {
        ModelKind::Torus2 => {
            let g = column(0)?;
            gmin = g.iter().cloned().fold(gmin, f64::min);
        }
        ModelKind::P1Symmetric => {
            for src in 0..len {
                let g = column(src)?;
                gmin = g.iter().cloned().fold(gmin, f64::min);
            }
        }
    }
    Ok(-gmin)
}
