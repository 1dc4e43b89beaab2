//! Newton solver for the two-parameter continuity equation
//!
//! ```text
//! log(ω_φ/ω) = t f_ω + c_t − s φ,     c_t = −log V⁻¹∫ e^{t f_ω} ω,
//! ```
//!
//! and the driver that walks a schedule through the parameter set
//! `A = (−∞,0]×[0,1] ∪ [0,μ]×{1}`.
//!
//! The linearization of `log ρ` in direction `v` is `Δ_φ v = L(v)/(wρ)`,
//! so each Newton step solves `(L + s wρ) v = −wρ R`. Sphere systems are
//! tridiagonal; torus systems go through preconditioned CG, which needs
//! `s ≤ 0`. At `s = 0` an extra unknown constant absorbs the mean of the
//! residual and the iterate is projected onto `∫ φ ω_φ = 0`.

use std::fmt;

use crate::error::{Error, Result};
use crate::functionals;
use crate::linalg;
use crate::model::{log_mean_exp, ModelGeometry, ModelKind, Potential};

/// A point `(s, t)` of the continuity parameter set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamPoint {
    pub s: f64,
    pub t: f64,
}

impl ParamPoint {
    pub fn new(s: f64, t: f64) -> ParamPoint {
        ParamPoint { s, t }
    }

    /// Membership in `A` for Einstein constant `mu`.
    pub fn in_set(&self, mu: f64) -> bool {
        let t_ok = (0.0..=1.0).contains(&self.t);
        (self.s <= 0.0 && t_ok) || (self.t == 1.0 && self.s >= 0.0 && self.s <= mu)
    }
}

impl fmt::Display for ParamPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(s = {}, t = {})", self.s, self.t)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Sup-norm residual target.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Impose `∫ φ ω_φ = 0` when `s = 0`.
    pub normalize: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        NewtonOptions { tol: 1e-10, max_iter: 60, max_halvings: 30, normalize: true }
    }
}

/// Result of one Newton solve.
#[derive(Debug, Clone)]
pub struct NodeSolution {
    pub potential: Potential,
    pub iterations: usize,
    pub residual: f64,
    /// Sup-norm residual before each iteration and at the end.
    pub history: Vec<f64>,
}

/// `c_t = −log V⁻¹∫ e^{t f_ω} ω`.
pub fn c_t(model: &ModelGeometry, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let tf: Vec<f64> = model.ricci().iter().map(|f| t * f).collect();
    -log_mean_exp(&model.weights, &tf, model.volume)
}

/// Maximum-principle bound `(−c_t − t min f_ω)/|s|` for `s < 0`.
pub fn max_principle_bound(model: &ModelGeometry, s: f64, t: f64) -> f64 {
    let fmin = model.ricci().iter().cloned().fold(f64::INFINITY, f64::min);
    (-c_t(model, t) - t * fmin) / s.abs()
}

/// Equation `log ρ + s φ − target + [c(φ)] = 0`; the bracketed term is
/// `log V⁻¹∫ e^{f_ω − μφ} ω` and appears only in flow steps.
pub(crate) struct Problem<'a> {
    pub s: f64,
    pub target: &'a [f64],
    pub flow_constant: bool,
    pub normalize: bool,
}

impl Problem<'_> {
    fn residual(&self, phi: &Potential) -> Option<Vec<f64>> {
        let m = phi.model();
        let d = phi.density();
        if !d.nonpositive.is_empty() {
            return None;
        }
        let c = if self.flow_constant { flow_constant(phi) } else { 0.0 };
        Some((0..m.len()).map(|k| d.samples[k].ln() + self.s * phi.samples()[k] - self.target[k] + c).collect())
    }
}

/// `log V⁻¹∫ e^{f_ω − μφ} ω`.
pub(crate) fn flow_constant(phi: &Potential) -> f64 {
    let m = phi.model();
    let g: Vec<f64> = m.ricci().iter().zip(phi.samples()).map(|(f, p)| f - m.mu * p).collect();
    log_mean_exp(&m.weights, &g, m.volume)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, b| a.max(b.abs()))
}

fn rms(v: &[f64]) -> f64 {
    (linalg::dot(v, v) / v.len() as f64).sqrt()
}

/// Solves `(L + s·wd) v = rhs`.
pub(crate) fn solve_shifted(model: &ModelGeometry, s: f64, wd: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    match model.kind {
        ModelKind::P1Symmetric => {
            let (lo, mut diag, up) = model.div_tridiagonal();
            for (d, w) in diag.iter_mut().zip(wd) {
                *d += s * w;
            }
            linalg::solve_tridiagonal(&lo, &diag, &up, rhs)
        }
        ModelKind::Torus2 => {
            if s > 0.0 {
                return Err(Error::Unsupported("torus Newton systems need s <= 0"));
            }
            if s == 0.0 {
                return Err(Error::SingularSystem);
            }
            let n = model.n;
            let fft = linalg::PeriodicFft::new(n);
            let wbar = wd.iter().sum::<f64>() / wd.len() as f64;
            let b: Vec<f64> = rhs.iter().map(|r| -r).collect();
            let apply = |x: &[f64], out: &mut [f64]| {
                let l = model.div(x);
                for k in 0..out.len() {
                    out[k] = -l[k] - s * wd[k] * x[k];
                }
            };
            let pre = |r: &[f64], z: &mut [f64]| fft.apply_symbol(r, z, |i, j| 1.0 / (0.5 * linalg::five_point_symbol(n, i, j) - s * wbar));
            linalg::pcg(apply, pre, &b, None, 1e-13, 20 * n * n)
        }
    }
}

fn project_mean(phi: Potential) -> Potential {
    let m = phi.model().clone();
    let d = phi.density();
    let c = (0..m.len()).map(|k| m.weights[k] * d.samples[k] * phi.samples()[k]).sum::<f64>() / m.volume;
    phi.shifted(-c)
}

/// Damped Newton iteration shared by the continuity solver and the flow.
pub(crate) fn newton(problem: &Problem<'_>, init: &Potential, opts: &NewtonOptions) -> Result<NodeSolution> {
    let m = init.model().clone();
    let len = m.len();
    let s_zero = problem.s == 0.0 && !problem.flow_constant;
    if s_zero && !problem.normalize {
        return Err(Error::NormalizationAmbiguity);
    }
    let mut phi = if s_zero { project_mean(init.clone()) } else { init.clone() };
    let mut r = problem.residual(&phi).ok_or_else(|| {
        let d = phi.density();
        Error::NotAdmissible { node: d.nonpositive[0], min_density: d.samples[d.nonpositive[0]] }
    })?;
    let mut history = vec![sup(&r)];
    for iter in 0..opts.max_iter {
        if sup(&r) <= opts.tol {
            return Ok(NodeSolution { potential: phi, iterations: iter, residual: sup(&r), history });
        }
        let d = phi.density();
        let wd: Vec<f64> = (0..len).map(|k| m.weights[k] * d.samples[k]).collect();
        let v = if s_zero {
            // (L v)/wρ = −(R − κ) with κ the ω_φ-mean of R
            let kappa = linalg::dot(&wd, &r) / m.volume;
            let b: Vec<f64> = (0..len).map(|k| wd[k] * (r[k] - kappa)).collect();
            m.solve_neg_div(&b, 1e-13)?
        } else {
            let rhs: Vec<f64> = (0..len).map(|k| -wd[k] * r[k]).collect();
            let y = solve_shifted(&m, problem.s, &wd, &rhs)?;
            if problem.flow_constant && m.mu != 0.0 {
                // rank-one term from c(φ): d c[v] = ⟨q, v⟩
                let g: Vec<f64> = m.ricci().iter().zip(phi.samples()).map(|(f, p)| f - m.mu * p).collect();
                let c = log_mean_exp(&m.weights, &g, m.volume);
                let q: Vec<f64> = (0..len).map(|k| -m.mu * m.weights[k] * (g[k] - c).exp() / m.volume).collect();
                let z = solve_shifted(&m, problem.s, &wd, &wd)?;
                let qv = linalg::dot(&q, &y) / (1.0 + linalg::dot(&q, &z));
                y.iter().zip(&z).map(|(a, b)| a - qv * b).collect()
            } else {
                y
            }
        };
        let base = rms(&r);
        let mut step = 1.0;
        let mut accepted = None;
        let mut saw_admissible = false;
        for _ in 0..=opts.max_halvings {
            let mut trial = phi.add_field(&v, step);
            if s_zero {
                trial = project_mean(trial);
            }
            if let Some(rt) = problem.residual(&trial) {
                saw_admissible = true;
                if rms(&rt) < base || sup(&rt) <= opts.tol {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((p, rt)) => {
                phi = p;
                r = rt;
                history.push(sup(&r));
            }
            None if !saw_admissible => return Err(Error::PositivityLoss { halvings: opts.max_halvings }),
            None => {
                // stagnation at round-off counts as converged when close
                let res = sup(&r);
                if res <= 100.0 * opts.tol {
                    return Ok(NodeSolution { potential: phi, iterations: iter + 1, residual: res, history });
                }
                return Err(Error::NonConvergence { what: "Newton line search", iterations: iter + 1 });
            }
        }
    }
    let res = sup(&r);
    if res <= opts.tol {
        return Ok(NodeSolution { potential: phi, iterations: opts.max_iter, residual: res, history });
    }
    Err(Error::NonConvergence { what: "Newton", iterations: opts.max_iter })
}

/// Solves the continuity equation at `(s, t)` starting from `init`.
pub fn solve_node(init: &Potential, p: ParamPoint, opts: &NewtonOptions) -> Result<NodeSolution> {
    let m = init.model().clone();
    if !p.in_set(m.mu) {
        return Err(Error::OutsideParameterSet { s: p.s, t: p.t });
    }
    if p.t == 0.0 {
        // the target vanishes and φ = 0 solves the equation exactly
        return newton(&Problem { s: p.s, target: &vec![0.0; m.len()], flow_constant: false, normalize: opts.normalize }, &m.zero(), opts);
    }
    let ct = c_t(&m, p.t);
    let target: Vec<f64> = m.ricci().iter().map(|f| p.t * f + ct).collect();
    let problem = Problem { s: p.s, target: &target, flow_constant: false, normalize: opts.normalize };
    newton(&problem, init, opts)
}

/// Smallest positive eigenvalue of `−Δ_φ` by inverse iteration.
pub fn spectral_gap(base: &Potential) -> Result<f64> {
    let m = base.model().clone();
    let d = base.admissible_density()?;
    let len = m.len();
    let wd: Vec<f64> = (0..len).map(|k| m.weights[k] * d.samples[k]).collect();
    let center = |v: &mut Vec<f64>| {
        let c = linalg::dot(&wd, v) / m.volume;
        v.iter_mut().for_each(|x| *x -= c);
        let nrm = linalg::dot(&wd, &v.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
        v.iter_mut().for_each(|x| *x /= nrm);
    };
    let mut v: Vec<f64> = match m.kind {
        ModelKind::P1Symmetric => m.nodes.iter().map(|&x| crate::model::moment_z(x) + 0.1 * (x / m.x_trunc).powi(2)).collect(),
        ModelKind::Torus2 => (0..len)
            .map(|k| {
                let (x, y) = m.torus_xy(k);
                let tau = 2.0 * std::f64::consts::PI;
                (tau * x).sin() + 0.7 * (tau * y).cos() + 0.3 * (tau * (x + 2.0 * y)).sin()
            })
            .collect(),
    };
    center(&mut v);
    let mut lambda = f64::NAN;
    for it in 0..2000 {
        let b: Vec<f64> = (0..len).map(|k| wd[k] * v[k]).collect();
        let mut next = m.solve_neg_div(&b, 1e-13)?;
        center(&mut next);
        let lv = m.div(&next);
        let rq = -linalg::dot(&next, &lv);
        let done = it > 2 && (rq - lambda).abs() <= 1e-12 * rq.abs();
        lambda = rq;
        v = next;
        if done {
            return Ok(lambda);
        }
    }
    Err(Error::NonConvergence { what: "inverse iteration", iterations: 2000 })
}

/// Per-node diagnostics stored in a trace.
#[derive(Debug, Clone, Copy)]
pub struct NodeDiagnostics {
    pub max_abs: f64,
    pub max: f64,
    pub osc: f64,
    pub iterations: usize,
    pub residual: f64,
    /// `NaN` when the gap was not computed.
    pub lambda1: f64,
    pub density_min: f64,
    pub density_max: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct TraceNode {
    pub point: ParamPoint,
    pub potential: Potential,
    pub diag: NodeDiagnostics,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ContinuityTrace {
    pub nodes: Vec<TraceNode>,
}

impl ContinuityTrace {
    pub fn last(&self) -> Option<&TraceNode> {
        self.nodes.last()
    }

    /// Largest `sup|φ_k − φ_{k−1}| / |p_k − p_{k−1}|` over consecutive nodes.
    pub fn continuity_modulus(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| {
                let dp = (w[1].point.s - w[0].point.s).hypot(w[1].point.t - w[0].point.t);
                if dp > 0.0 {
                    w[1].potential.sup_distance(&w[0].potential) / dp
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    /// Trace CSV with columns `s,t,iters,residual,maxphi,osc,lambda1,gap_margin`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,t,iters,residual,maxphi,osc,lambda1,gap_margin\n");
        for n in &self.nodes {
            let d = &n.diag;
            out.push_str(&format!(
                "{:e},{:e},{},{:e},{:e},{:e},{:e},{:e}\n",
                n.point.s,
                n.point.t,
                d.iterations,
                d.residual,
                d.max,
                d.osc,
                d.lambda1,
                d.lambda1 - n.point.s
            ));
        }
        out
    }
}

/// A run that stopped early, with the nodes solved so far.
#[derive(Debug)]
pub struct RunAborted {
    pub trace: ContinuityTrace,
    pub error: Error,
}

impl fmt::Display for RunAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "continuity run aborted after {} nodes: {}", self.trace.nodes.len(), self.error)
    }
}

impl std::error::Error for RunAborted {}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub newton: NewtonOptions,
    /// Bisections allowed per schedule step before `StepTooLarge`.
    pub max_bisections: usize,
    pub spectral: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { newton: NewtonOptions::default(), max_bisections: 12, spectral: true }
    }
}

/// Geometric `s`-ladder `−64 … −1/64` at `t = 0`, a `t`-ladder at
/// `s = −1/64`, then `s = 0 … μ` in steps of `μ/32` at `t = 1`.
pub fn default_schedule(mu: f64) -> Vec<ParamPoint> {
    let mut out = Vec::new();
    let mut s = -64.0;
    while s <= -1.0 / 64.0 {
        out.push(ParamPoint::new(s, 0.0));
        s /= 2.0;
    }
    let s_last = -1.0 / 64.0;
    for k in 1..=16 {
        out.push(ParamPoint::new(s_last, k as f64 / 16.0));
    }
    out.push(ParamPoint::new(0.0, 1.0));
    if mu > 0.0 {
        for k in 1..=32 {
            out.push(ParamPoint::new(mu * k as f64 / 32.0, 1.0));
        }
    }
    out
}

fn diagnostics(sol: &NodeSolution, spectral: bool) -> Result<NodeDiagnostics> {
    let p = &sol.potential;
    let d = p.density();
    Ok(NodeDiagnostics {
        max_abs: p.max().abs().max(p.min().abs()),
        max: p.max(),
        osc: p.oscillation(),
        iterations: sol.iterations,
        residual: sol.residual,
        lambda1: if spectral { spectral_gap(p)? } else { f64::NAN },
        density_min: d.min(),
        density_max: d.max(),
        energy: functionals::k_energy(p)?,
    })
}

/// Walks `schedule`, warm-starting every node from its predecessor.
pub fn continuity_run(model: &std::sync::Arc<ModelGeometry>, schedule: &[ParamPoint], opts: &RunOptions) -> std::result::Result<ContinuityTrace, RunAborted> {
    let mut trace = ContinuityTrace::default();
    let abort = |trace: ContinuityTrace, error: Error| Err(RunAborted { trace, error });
    let Some(first) = schedule.first() else {
        return abort(trace, Error::InvalidArgument("empty schedule".into()));
    };
    if first.t != 0.0 {
        return abort(trace, Error::InvalidArgument("schedule must start at t = 0".into()));
    }
    if let Some(p) = schedule.iter().find(|p| !p.in_set(model.mu)) {
        return abort(trace, Error::OutsideParameterSet { s: p.s, t: p.t });
    }
    let mut current = model.zero();
    let mut prev_point: Option<ParamPoint> = None;
    for &target in schedule {
        // bisect toward the target when a warm start fails
        let mut pending = vec![target];
        let mut depth = 0;
        while let Some(p) = pending.last().copied() {
            // near a fold the plain iteration cap is too short; retry once
            // with a longer budget before bisecting
            let long = NewtonOptions { max_iter: 20 * opts.newton.max_iter, ..opts.newton };
            let attempt = match solve_node(&current, p, &opts.newton) {
                Err(Error::NonConvergence { .. } | Error::PositivityLoss { .. }) => solve_node(&current, p, &long),
                other => other,
            };
            match attempt {
                Ok(sol) => {
                    pending.pop();
                    let diag = match diagnostics(&sol, opts.spectral) {
                        Ok(d) => d,
                        Err(e) => return abort(trace, e),
                    };
                    current = sol.potential.clone();
                    prev_point = Some(p);
                    trace.nodes.push(TraceNode { point: p, potential: sol.potential, diag, history: sol.history });
                }
                Err(e @ (Error::NonConvergence { .. } | Error::PositivityLoss { .. })) => {
                    let Some(q) = prev_point else { return abort(trace, e) };
                    depth += 1;
                    if depth > opts.max_bisections {
                        return abort(trace, Error::StepTooLarge { s: p.s, t: p.t });
                    }
                    pending.push(ParamPoint::new(0.5 * (q.s + p.s), 0.5 * (q.t + p.t)));
                }
                Err(e) => return abort(trace, e),
            }
        }
    }
    Ok(trace)
}

/// One row of [`apriori_report`].
#[derive(Debug, Clone, Copy)]
pub struct AprioriRow {
    pub point: ParamPoint,
    pub osc: f64,
    /// `bound − max φ`: maximum principle for `s < 0`, fitted `C(1 + 1/s)` for `s > 0`.
    pub sup_slack: f64,
    /// `λ₁ − s` (`NaN` without spectral data).
    pub gap_margin: f64,
    /// `max ρ / exp(c · osc φ)` with the fitted `c`.
    pub laplacian_ratio: f64,
    pub violation: bool,
}

#[derive(Debug, Clone)]
pub struct AprioriReport {
    pub rows: Vec<AprioriRow>,
    /// Fitted `C` in `max|φ| ≤ C(1 + 1/|s|)` over nodes with `s < 0`.
    pub c_negative: f64,
    /// Fitted `C` in `max φ ≤ C(1 + 1/s)` over nodes with `s > 0`.
    pub c_positive: f64,
    /// Fitted `c` in `max ρ ≤ exp(c · osc φ)`.
    pub c_laplacian: f64,
}

impl AprioriReport {
    pub fn violations(&self) -> usize {
        self.rows.iter().filter(|r| r.violation).count()
    }
}

/// Oscillation, sup-bound slack, spectral margin and Laplacian ratio per node.
pub fn apriori_report(trace: &ContinuityTrace) -> Result<AprioriReport> {
    let first = trace.nodes.first().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    let model = first.potential.model().clone();
    let mut c_negative: f64 = 0.0;
    let mut c_positive: f64 = 0.0;
    let mut c_laplacian: f64 = 0.0;
    for n in &trace.nodes {
        let s = n.point.s;
        if s < 0.0 {
            c_negative = c_negative.max(n.diag.max_abs / (1.0 + 1.0 / s.abs()));
        } else if s > 0.0 {
            c_positive = c_positive.max(n.diag.max / (1.0 + 1.0 / s));
        }
        if n.diag.osc > 1e-12 {
            c_laplacian = c_laplacian.max(n.diag.density_max.ln() / n.diag.osc);
        }
    }
    let rows = trace
        .nodes
        .iter()
        .map(|n| {
            let ParamPoint { s, t } = n.point;
            let tol = n.diag.residual.max(1e-10);
            let (sup_slack, sup_violation) = if s < 0.0 {
                let b = max_principle_bound(&model, s, t);
                (b - n.diag.max, n.diag.max > b + tol)
            } else if s > 0.0 {
                (c_positive * (1.0 + 1.0 / s) - n.diag.max, false)
            } else {
                (f64::INFINITY, false)
            };
            let gap_margin = n.diag.lambda1 - s;
            let gap_violation = t == 1.0 && s < model.mu && gap_margin.is_finite() && gap_margin <= 0.0;
            let laplacian_ratio = n.diag.density_max / (c_laplacian * n.diag.osc).exp();
            AprioriRow { point: n.point, osc: n.diag.osc, sup_slack, gap_margin, laplacian_ratio, violation: sup_violation || gap_violation }
        })
        .collect();
    Ok(AprioriReport { rows, c_negative, c_positive, c_laplacian })
}
