//! Kähler–Ricci flow as a parabolic Monge–Ampère equation.
//!
//! The integrated quantity is `φ̇ = −f_{ω_φ}`, i.e.
//!
//! ```text
//! φ̇ = log ρ − f_ω + μφ + log V⁻¹∫ e^{f_ω − μφ} ω,
//! ```
//!
//! which differs from `φ̇ = log ρ − f_ω + μφ` by a spatial constant at each
//! time, so it traces the same metrics. The extra constant keeps `φ`
//! bounded instead of growing like `e^{μt}` through its mean. Steps are
//! implicit Euler solved by the continuity-method Newton core with
//! zeroth-order coefficient `μ − 1/dt`.

use std::fmt;

use crate::error::{Error, Result};
use crate::functionals;
use crate::metric::{speeds, Speeds};
use crate::model::{ricci_potential_of, scalar_curvature, Potential};
use crate::solver::{newton, NewtonOptions, Problem};

/// Diagnostics at one stored time.
#[derive(Debug, Clone, Copy)]
pub struct FlowDiag {
    pub time: f64,
    pub energy: f64,
    /// `‖s − nμ‖_{L²(ω_φ)}`.
    pub calabi_speed: f64,
    /// `‖s − nμ‖_{L¹(ω_φ)}`.
    pub calabi_l1: f64,
    /// `V⁻¹‖f_φ‖_{L¹(ω_φ)}`.
    pub darvas_speed: f64,
    /// `‖f_φ‖_{L²(ω_φ)}`.
    pub mabuchi_speed: f64,
    /// `‖ρ_k − ρ_{k−1}‖_{L¹(ω)}` (0 at the first time).
    pub dens_l1_increment: f64,
    /// Metric speeds of the backward difference quotient `(φ_k − φ_{k−1})/dt`.
    pub path: Speeds,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub times: Vec<f64>,
    pub potentials: Vec<Potential>,
    pub diags: Vec<FlowDiag>,
    /// Number of `dt` halvings used per step (0 for supplied paths).
    pub halvings: Vec<usize>,
}

#[derive(Debug)]
pub struct FlowAborted {
    pub trajectory: FlowTrajectory,
    pub error: Error,
}

impl fmt::Display for FlowAborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "flow aborted at t = {}: {}", self.trajectory.times.last().copied().unwrap_or(0.0), self.error)
    }
}

impl std::error::Error for FlowAborted {}

fn closed_form(phi: &Potential) -> Result<(f64, f64, f64, f64)> {
    let m = phi.model();
    let d = phi.admissible_density()?;
    let f = ricci_potential_of(phi)?;
    let (s, _) = scalar_curvature(phi);
    let mut c2 = 0.0;
    let mut c1 = 0.0;
    let mut d1 = 0.0;
    let mut m2 = 0.0;
    for k in 0..m.len() {
        let wd = m.weights[k] * d.samples[k];
        let e = s[k] - m.dim() * m.mu;
        c2 += wd * e * e;
        c1 += wd * e.abs();
        d1 += wd * f[k].abs();
        m2 += wd * f[k] * f[k];
    }
    Ok((c2.sqrt(), c1, d1 / m.volume, m2.sqrt()))
}

impl FlowTrajectory {
    fn empty() -> FlowTrajectory {
        FlowTrajectory { times: Vec::new(), potentials: Vec::new(), diags: Vec::new(), halvings: Vec::new() }
    }

    fn push(&mut self, time: f64, phi: Potential, halvings: usize) -> Result<()> {
        let (calabi_speed, calabi_l1, darvas_speed, mabuchi_speed) = closed_form(&phi)?;
        let (inc, path) = match (self.potentials.last(), self.times.last()) {
            (Some(prev), Some(&t0)) => {
                let dt = time - t0;
                let v: Vec<f64> = phi.samples().iter().zip(prev.samples()).map(|(a, b)| (a - b) / dt).collect();
                (phi.density().l1_distance(&prev.density()), speeds(&phi, &v)?)
            }
            _ => (0.0, Speeds::default()),
        };
        let energy = functionals::k_energy(&phi)?;
        self.diags.push(FlowDiag { time, energy, calabi_speed, calabi_l1, darvas_speed, mabuchi_speed, dens_l1_increment: inc, path });
        self.times.push(time);
        self.potentials.push(phi);
        self.halvings.push(halvings);
        Ok(())
    }

    /// Diagnoses an arbitrary time-parameterized path of potentials.
    pub fn from_path(times: &[f64], potentials: Vec<Potential>) -> Result<FlowTrajectory> {
        if times.len() != potentials.len() || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("path needs increasing times, one per potential".into()));
        }
        let mut t = FlowTrajectory::empty();
        for (time, p) in times.iter().zip(potentials) {
            t.push(*time, p, 0)?;
        }
        Ok(t)
    }

    pub fn duration(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// CSV with columns `time,E,calabi_speed,darvas_speed,mabuchi_speed,densL1_increment`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,E,calabi_speed,darvas_speed,mabuchi_speed,densL1_increment\n");
        for d in &self.diags {
            out.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e}\n",
                d.time, d.energy, d.calabi_speed, d.darvas_speed, d.mabuchi_speed, d.dens_l1_increment
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FlowOptions {
    pub newton: NewtonOptions,
    pub max_halvings: usize,
    /// Keep every `stride`-th step.
    pub stride: usize,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions { newton: NewtonOptions { tol: 1e-10, max_iter: 50, ..NewtonOptions::default() }, max_halvings: 20, stride: 1 }
    }
}

/// One implicit Euler step of length `dt` from `phi`.
pub fn implicit_step(phi: &Potential, dt: f64, opts: &NewtonOptions) -> Result<Potential> {
    let m = phi.model();
    let target: Vec<f64> = m.ricci().iter().zip(phi.samples()).map(|(f, p)| f - p / dt).collect();
    let problem = Problem { s: m.mu - 1.0 / dt, target: &target, flow_constant: true, normalize: true };
    Ok(newton(&problem, phi, opts)?.potential)
}

/// Integrates the flow from `phi0` to time `t_end` with nominal step `dt`.
///
/// A rejected step is retried with `dt/2`, up to `max_halvings` times, and
/// the step size recovers after each success.
pub fn krf_run(phi0: &Potential, t_end: f64, dt: f64, opts: &FlowOptions) -> std::result::Result<FlowTrajectory, FlowAborted> {
    let mut traj = FlowTrajectory::empty();
    if let Err(error) = traj.push(0.0, phi0.clone(), 0) {
        return Err(FlowAborted { trajectory: traj, error });
    }
    if !(dt > 0.0) || !(t_end > 0.0) {
        return Err(FlowAborted { trajectory: traj, error: Error::InvalidArgument("flow needs dt > 0 and T > 0".into()) });
    }
    let mut phi = phi0.clone();
    let mut time = 0.0;
    let mut step_count = 0usize;
    while time < t_end - 1e-12 * t_end {
        let h_nominal = dt.min(t_end - time);
        let mut h = h_nominal;
        let mut halvings = 0;
        let next = loop {
            match implicit_step(&phi, h, &opts.newton) {
                Ok(p) => break p,
                Err(_) if halvings < opts.max_halvings => {
                    halvings += 1;
                    h *= 0.5;
                }
                Err(_) => return Err(FlowAborted { trajectory: traj, error: Error::StepRejected { time, halvings } }),
            }
        };
        time += h;
        phi = next;
        step_count += 1;
        let last = time >= t_end - 1e-12 * t_end;
        if step_count % opts.stride.max(1) == 0 || last {
            if let Err(error) = traj.push(time, phi.clone(), halvings) {
                return Err(FlowAborted { trajectory: traj, error });
            }
        }
    }
    Ok(traj)
}

/// `V⁻¹∫ e^{f_ω − μφ + φ̇} ω` at `t = 0` for the unmodified equation
/// `φ̇ = log ρ − f_ω + μφ`; equal to one for every admissible start.
pub fn initial_normalization(phi0: &Potential) -> Result<f64> {
    let m = phi0.model();
    let d = phi0.admissible_density()?;
    let mut s = 0.0;
    for k in 0..m.len() {
        let p = phi0.samples()[k];
        let f = m.ricci()[k];
        let dot = d.samples[k].ln() - f + m.mu * p;
        s += m.weights[k] * (f - m.mu * p + dot).exp();
    }
    Ok(s / m.volume)
}

/// Lengths accumulated along a trajectory.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowLengths {
    pub calabi_len: f64,
    pub darvas_len: f64,
    pub mabuchi_len: f64,
}

/// `Σ dt·speed` with speeds from the closed-form integrands at each new time.
pub fn flow_lengths(traj: &FlowTrajectory) -> Result<FlowLengths> {
    if traj.times.len() < 2 {
        return Err(Error::InvalidArgument("lengths need at least two times".into()));
    }
    let mut l = FlowLengths::default();
    for k in 1..traj.times.len() {
        let dt = traj.times[k] - traj.times[k - 1];
        let d = &traj.diags[k];
        l.calabi_len += dt * d.calabi_speed;
        l.darvas_len += dt * d.darvas_speed;
        l.mabuchi_len += dt * d.mabuchi_speed;
    }
    Ok(l)
}

/// `Σ dt·speed` with speeds of the difference quotients of the path.
pub fn path_lengths(traj: &FlowTrajectory) -> FlowLengths {
    let mut l = FlowLengths::default();
    for k in 1..traj.times.len() {
        let dt = traj.times[k] - traj.times[k - 1];
        let p = &traj.diags[k].path;
        l.calabi_len += dt * p.calabi;
        l.darvas_len += dt * p.darvas;
        l.mabuchi_len += dt * p.mabuchi;
    }
    l
}

/// Thresholds for [`convergence_verdict`].
#[derive(Debug, Clone, Copy)]
pub struct VerdictThresholds {
    /// Minimum duration; `None` means `20/μ`, or 20 when `μ ≤ 0`.
    pub t_min: Option<f64>,
    /// Fraction of the run treated as the tail.
    pub tail_fraction: f64,
    /// Bound on `sup_{tail} ‖ρ_k − ρ_end‖_{L¹}`.
    pub density_tol: f64,
    /// Bound on `sup_{tail} sup|φ_k − φ_end|` after `AM` normalization.
    pub sup_tol: f64,
}

impl Default for VerdictThresholds {
    fn default() -> Self {
        VerdictThresholds { t_min: None, tail_fraction: 0.25, density_tol: 1e-4, sup_tol: 1e-4 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerdictStatus {
    Converged,
    NotConverged,
    Inconclusive,
}

#[derive(Debug, Clone, Copy)]
pub struct VerdictEvidence {
    pub flow: FlowLengths,
    pub path: FlowLengths,
    pub density_tail: f64,
    pub sup_tail: f64,
    /// Least-squares slope of `log(darvas path speed)` over the tail.
    pub speed_log_slope: f64,
    /// Darvas path length gained over the tail per unit time.
    pub darvas_growth_rate: f64,
    pub t_min: f64,
    pub thresholds: VerdictThresholds,
}

#[derive(Debug, Clone, Copy)]
pub struct Verdict {
    pub status: VerdictStatus,
    pub evidence: VerdictEvidence,
}

/// Tail-Cauchy test in density `L¹` and in `AM`-normalized sup norm.
pub fn convergence_verdict(traj: &FlowTrajectory, th: &VerdictThresholds) -> Result<Verdict> {
    let n = traj.times.len();
    if n < 2 {
        return Err(Error::InvalidArgument("verdict needs at least two times".into()));
    }
    let mu = traj.potentials[0].model().mu;
    let t_min = th.t_min.unwrap_or(if mu > 0.0 { 20.0 / mu } else { 20.0 });
    let t_end = traj.times[n - 1];
    let t_tail = t_end - th.tail_fraction * traj.duration();
    let tail: Vec<usize> = (0..n).filter(|&k| traj.times[k] >= t_tail).collect();
    let end = &traj.potentials[n - 1];
    let end_dens = end.density();
    let normalize = |p: &Potential| -> Result<Potential> { Ok(p.shifted(-functionals::am(p)?)) };
    let end_n = normalize(end)?;
    let mut density_tail: f64 = 0.0;
    let mut sup_tail: f64 = 0.0;
    for &k in &tail {
        let p = &traj.potentials[k];
        density_tail = density_tail.max(p.density().l1_distance(&end_dens));
        sup_tail = sup_tail.max(normalize(p)?.sup_distance(&end_n));
    }
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .filter(|&&k| k > 0 && traj.diags[k].path.darvas > 0.0)
        .map(|&k| (traj.times[k], traj.diags[k].path.darvas.ln()))
        .collect();
    let speed_log_slope = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx
    } else {
        f64::NEG_INFINITY
    };
    let mut tail_len = 0.0;
    for &k in tail.iter().filter(|&&k| k > 0) {
        tail_len += (traj.times[k] - traj.times[k - 1]) * traj.diags[k].path.darvas;
    }
    let span = t_end - traj.times[tail[0].saturating_sub(1)];
    let evidence = VerdictEvidence {
        flow: flow_lengths(traj)?,
        path: path_lengths(traj),
        density_tail,
        sup_tail,
        speed_log_slope,
        darvas_growth_rate: if span > 0.0 { tail_len / span } else { 0.0 },
        t_min,
        thresholds: *th,
    };
    let status = if traj.duration() < t_min {
        VerdictStatus::Inconclusive
    } else if density_tail <= th.density_tol && sup_tail <= th.sup_tol {
        VerdictStatus::Converged
    } else {
        VerdictStatus::NotConverged
    };
    Ok(Verdict { status, evidence })
}
