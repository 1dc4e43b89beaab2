//! The acceptance suite: ten end-to-end checks with fixed sizes and
//! tolerances. Every check is deterministic for a given seed; artifacts
//! are CSV strings and carry no timing data.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::flow::{convergence_verdict, flow_lengths, krf_run, FlowOptions, FlowTrajectory, VerdictStatus, VerdictThresholds};
use crate::functionals::{aubin, mabuchi};
use crate::group::{self, act, alpha_scan, d1g, hormander_check, jg, log_exp_integral, ls_slope, mt_scan, orbit_family, orbit_scan, window, MtOptions};
use crate::metric::{self, d1_initial_speed, d1_value, geodesic, path_length, rooftop, rooftop_jacobi, root_density_pullback, speeds, PathRecord, Which};
use crate::model::{make_model, ricci_potential_of, ModelGeometry, ModelKind, Potential};
use crate::sample::{random_field, random_potential, rng, SampleSpec};
use crate::solver::{apriori_report, continuity_run, default_schedule, RunOptions};

/// Outcome of one criterion.
#[derive(Debug, Clone)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub csv: String,
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub criteria: Vec<Criterion>,
    pub artifacts: Vec<Artifact>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    /// `id,name,pass,detail` with the detail quoted.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from("id,name,pass,detail\n");
        for c in &self.criteria {
            out.push_str(&format!("{},{},{},\"{}\"\n", c.id, c.name, if c.pass { "PASS" } else { "FAIL" }, c.detail.replace('"', "'")));
        }
        out
    }
}

struct Outcome {
    pass: bool,
    detail: String,
    artifacts: Vec<Artifact>,
}

fn artifact(name: &str, csv: String) -> Artifact {
    Artifact { name: name.to_string(), csv }
}

pub const NAMES: [&str; 10] = [
    "functional identities",
    "Kähler-Einstein solve",
    "a priori diagnostics",
    "Calabi-Yau solve and flow",
    "metric suite",
    "flow lengths",
    "orbit suite",
    "Moser-Trudinger scan",
    "integrability suite",
    "determinism",
];

/// Runs the criteria in `ids` (all ten when empty). Criterion 10 reruns
/// criteria 1 to 9 and compares every artifact byte for byte.
pub fn run(seed: u64, ids: &[u8]) -> Report {
    let wanted = |id: u8| ids.is_empty() || ids.contains(&id);
    let mut report = Report::default();
    let primary: Vec<u8> = (1..=9).filter(|&i| wanted(i)).collect();
    for &id in &primary {
        merge(&mut report, run_one(id, seed));
    }
    if wanted(10) {
        let first = if primary.len() == 9 { report.artifacts.clone() } else { artifacts_of(seed) };
        let second = artifacts_of(seed);
        report.criteria.push(determinism(&first, &second));
    }
    report
}

fn artifacts_of(seed: u64) -> Vec<Artifact> {
    (1..=9).flat_map(|i| run_one(i, seed).artifacts).collect()
}

/// Appends `part` to `report`.
pub fn merge(report: &mut Report, part: Report) {
    report.criteria.extend(part.criteria);
    report.artifacts.extend(part.artifacts);
}

/// One of criteria 1 to 9.
pub fn run_one(id: u8, seed: u64) -> Report {
    let mut report = Report::default();
    if (1..=9).contains(&id) {
        push(&mut report, id, evaluate(id, seed));
    }
    report
}

/// Criterion 10 from the artifacts of two runs.
pub fn determinism(a: &[Artifact], b: &[Artifact]) -> Criterion {
    let same = a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.name == y.name && x.csv == y.csv);
    let bytes: usize = a.iter().map(|x| x.csv.len()).sum();
    Criterion { id: 10, name: NAMES[9], pass: same && !a.is_empty(), detail: format!("{} artifacts, {bytes} bytes, identical on rerun: {same}", a.len()) }
}

fn push(report: &mut Report, id: u8, r: Result<Outcome>) {
    let name = NAMES[id as usize - 1];
    match r {
        Ok(o) => {
            report.criteria.push(Criterion { id, name, pass: o.pass, detail: o.detail });
            report.artifacts.extend(o.artifacts);
        }
        Err(e) => report.criteria.push(Criterion { id, name, pass: false, detail: format!("error: {e}") }),
    }
}

fn evaluate(id: u8, seed: u64) -> Result<Outcome> {
    match id {
        1 => functional_identities(seed),
        2 => kahler_einstein(),
        3 => apriori(),
        4 => calabi_yau(seed),
        5 => metric_suite(seed),
        6 => flow_suite(seed),
        7 => orbit_suite(seed),
        8 => moser_trudinger(seed),
        9 => integrability(seed),
        _ => Err(Error::InvalidArgument(format!("no criterion {id}"))),
    }
}

fn e(v: f64) -> String {
    format!("{v:e}")
}

// ---------------------------------------------------------------- 1

fn functional_identities(seed: u64) -> Result<Outcome> {
    let models = [make_model(ModelKind::Torus2, 128, 0.0)?, make_model(ModelKind::P1Symmetric, 512, 12.0)?];
    let mut csv = String::from("model,count,am_identity,chain_violation,translation,e_forms,min_entropy\n");
    let mut pass = true;
    let mut detail = Vec::new();
    for (k, m) in models.iter().enumerate() {
        let mut r = rng(seed.wrapping_add(k as u64));
        let (mut ident, mut chain, mut trans, mut forms): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        let mut min_ent = f64::INFINITY;
        for _ in 0..500 {
            let p = random_potential(m, &mut r, &SampleSpec::default());
            let rep = mabuchi(&p)?;
            let a = aubin(&p)?;
            let d = p.density();
            let moment: f64 = (0..m.len()).map(|i| m.weights[i] * d.samples[i] * p.samples()[i]).sum::<f64>() / m.volume;
            ident = ident.max((rep.am - rep.i_minus_j - moment).abs());
            chain = chain.max(crate::functionals::ij_chain_violation(&a, m.dim()));
            let c = 2.0 * p.samples()[0].fract();
            trans = trans.max((mabuchi(&p.shifted(c))?.e_fano - rep.e_fano).abs());
            forms = forms.max((rep.e_fano - rep.e_fano_ij).abs()).max((rep.e_fano - rep.e_csc).abs());
            min_ent = min_ent.min(rep.entropy_ref).min(rep.entropy_plain);
        }
        let ok = ident <= 1e-8 && chain <= 1e-9 && trans <= 1e-10 && forms <= 1e-7 && min_ent >= 0.0;
        pass &= ok;
        let name = m.kind.name();
        csv.push_str(&format!("{name},500,{},{},{},{},{}\n", e(ident), e(chain), e(trans), e(forms), e(min_ent)));
        detail.push(format!("{name}: identity {ident:.1e} chain {chain:.1e} translation {trans:.1e} forms {forms:.1e} entropy >= {min_ent:.1e}"));
    }
    Ok(Outcome { pass, detail: detail.join("; "), artifacts: vec![artifact("c01_functionals.csv", csv)] })
}

// ---------------------------------------------------------------- 2, 3

const PERTURBATION: [f64; 4] = [0.0, 0.0, 0.2, 0.03];

fn kahler_einstein() -> Result<Outcome> {
    let mut csv = String::from("N,s,t,f_osc,d1_orbit,orbit_a,order\n");
    let mut pass = true;
    let mut prev: Option<f64> = None;
    let mut min_order = f64::INFINITY;
    let mut worst_osc: f64 = 0.0;
    let mut worst_d: f64 = 0.0;
    let mut trace_csv = String::new();
    for n in [256usize, 512, 1024, 2048] {
        let (m, phi0) = ModelGeometry::p1_perturbed(n, 12.0, &PERTURBATION)?;
        let trace = continuity_run(&m, &default_schedule(m.mu), &RunOptions { spectral: false, ..Default::default() }).map_err(|a| a.error)?;
        let last = trace.last().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
        let reached = last.point.s == m.mu && last.point.t == 1.0;
        let f = ricci_potential_of(&last.potential)?;
        let osc = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - f.iter().cloned().fold(f64::INFINITY, f64::min);
        // the solution relative to the round reference
        let round = phi0.model().clone();
        let rel = Potential::with_slopes(round, last.potential.samples().to_vec(), last.potential.slopes().to_vec())?;
        let total = phi0.combine(1.0, &rel, 1.0);
        let total = total.shifted(-crate::functionals::am(&total)?);
        let d = d1g(&total, &total.model().zero())?;
        let order = prev.map(|p| (p / d.value).log2()).unwrap_or(f64::NAN);
        if order.is_finite() {
            min_order = min_order.min(order);
        }
        prev = Some(d.value);
        pass &= reached && osc <= 1e-4 && d.value <= 1e-3;
        worst_osc = worst_osc.max(osc);
        worst_d = worst_d.max(d.value);
        csv.push_str(&format!("{n},{},{},{},{},{},{}\n", e(last.point.s), e(last.point.t), e(osc), e(d.value), e(d.minimizer), e(order)));
        if n == 256 {
            trace_csv = trace.to_csv();
        }
    }
    pass &= min_order >= 1.8;
    let detail = format!("reached (1,1); max f oscillation {worst_osc:.1e}; max d1 to orbit {worst_d:.1e}; refinement order >= {min_order:.2}");
    Ok(Outcome { pass, detail, artifacts: vec![artifact("c02_ke.csv", csv), artifact("c02_trace_N256.csv", trace_csv)] })
}

fn apriori() -> Result<Outcome> {
    let (m, _) = ModelGeometry::p1_perturbed(256, 12.0, &PERTURBATION)?;
    let trace = continuity_run(&m, &default_schedule(m.mu), &RunOptions::default()).map_err(|a| a.error)?;
    let rep = apriori_report(&trace)?;
    let mut csv = String::from("s,t,osc,sup_slack,gap_margin,energy,violation\n");
    let mut energy_increases = 0;
    let mut prev = f64::INFINITY;
    for (row, node) in rep.rows.iter().zip(&trace.nodes) {
        if row.point.t == 1.0 && row.point.s >= 0.0 {
            if node.diag.energy > prev + 1e-12 {
                energy_increases += 1;
            }
            prev = node.diag.energy;
        }
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            e(row.point.s),
            e(row.point.t),
            e(row.osc),
            e(row.sup_slack),
            e(row.gap_margin),
            e(node.diag.energy),
            row.violation as u8
        ));
    }
    let gaps_checked = rep.rows.iter().filter(|r| r.point.t == 1.0 && r.point.s < m.mu && r.gap_margin.is_finite()).count();
    let min_gap = rep.rows.iter().filter(|r| r.point.t == 1.0 && r.point.s < m.mu).map(|r| r.gap_margin).fold(f64::INFINITY, f64::min);
    let pass = rep.violations() == 0 && energy_increases == 0 && gaps_checked > 0;
    let detail = format!("{} nodes, {} bound or gap violations, min gap margin {min_gap:.3e}, {energy_increases} energy increases", rep.rows.len(), rep.violations());
    Ok(Outcome { pass, detail, artifacts: vec![artifact("c03_apriori.csv", csv)] })
}

// ---------------------------------------------------------------- 4

fn yau_model(seed: u64) -> Result<Arc<ModelGeometry>> {
    let base = ModelGeometry::new(ModelKind::Torus2, 32, 0.0)?.with_mu(0.0);
    let f = random_field(&Arc::new(base.clone()), &mut rng(seed), 3);
    Ok(Arc::new(base.with_ricci(f)?))
}

fn calabi_yau(seed: u64) -> Result<Outcome> {
    let m = yau_model(seed)?;
    let trace = continuity_run(&m, &default_schedule(0.0), &RunOptions { spectral: false, ..Default::default() }).map_err(|a| a.error)?;
    let last = trace.last().ok_or_else(|| Error::InvalidArgument("empty trace".into()))?;
    let start = random_potential(&m, &mut rng(seed.wrapping_add(1)), &SampleSpec::default());
    let traj = krf_run(&start, 3.0, 0.05, &FlowOptions::default()).map_err(|a| a.error)?;
    let end = traj.potentials.last().ok_or_else(|| Error::InvalidArgument("empty flow".into()))?;
    let l1 = end.density().l1_distance(&last.potential.density());
    let pass = last.point.t == 1.0 && last.point.s == 0.0 && last.diag.residual <= 1e-9 && l1 <= 1e-5;
    let detail = format!("solve residual {:.1e}; flow end vs solve density L1 {l1:.1e}", last.diag.residual);
    let csv = format!("residual,density_l1\n{},{}\n", e(last.diag.residual), e(l1));
    Ok(Outcome { pass, detail, artifacts: vec![artifact("c04_yau.csv", csv), artifact("c04_flow.csv", traj.to_csv())] })
}

// ---------------------------------------------------------------- 5

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs())
}

fn metric_suite(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed);
    let sphere = make_model(ModelKind::P1Symmetric, 2048, 12.0)?;
    let torus = make_model(ModelKind::Torus2, 32, 0.0)?;
    let spec = SampleSpec::default();
    let xspec = SampleSpec { x_only: true, ..SampleSpec::default() };
    let mut csv = String::from("check,model,value\n");

    // pullback of the root-density map against the Calabi form
    let mut pull: f64 = 0.0;
    for m in [&sphere, &torus] {
        for _ in 0..10 {
            let p = random_potential(m, &mut r, &spec);
            let v = random_field(m, &mut r, 3);
            let g = speeds(&p, &v)?.calabi.powi(2);
            pull = pull.max(rel(root_density_pullback(&p, &v, 1e-6), g));
        }
    }
    csv.push_str(&format!("pullback,both,{}\n", e(pull)));

    // three routes to d1
    let mut three: f64 = 0.0;
    for (m, sp) in [(&sphere, &spec), (&torus, &xspec)] {
        for _ in 0..10 {
            let u = random_potential(m, &mut r, sp);
            let v = random_potential(m, &mut r, sp);
            let a = d1_value(&u, &v)?;
            let b = path_length(&geodesic(&u, &v, 16)?, Which::Darvas);
            let c = d1_initial_speed(&u, &v)?;
            three = three.max(rel(a, b)).max(rel(a, c)).max(rel(b, c));
        }
    }
    csv.push_str(&format!("d1_routes,both,{}\n", e(three)));

    // triangle inequality
    let small = make_model(ModelKind::P1Symmetric, 256, 12.0)?;
    let mut tri = f64::INFINITY;
    for _ in 0..200 {
        let (a, b, c) = (random_potential(&small, &mut r, &spec), random_potential(&small, &mut r, &spec), random_potential(&small, &mut r, &spec));
        let slack = d1_value(&a, &b)? + d1_value(&b, &c)? - d1_value(&a, &c)?;
        tri = tri.min(slack);
    }
    csv.push_str(&format!("triangle_min_slack,p1,{}\n", e(tri)));

    // d1(u, u + c) = |c|
    let mut shift: f64 = 0.0;
    for m in [&sphere, &torus] {
        for c in [0.5, -1.25, 3.0] {
            let u = random_potential(m, &mut r, &spec);
            shift = shift.max((d1_value(&u, &u.shifted(c))? - c.abs()).abs());
        }
    }
    csv.push_str(&format!("shift,both,{}\n", e(shift)));

    // envelope against the slow projected iteration
    let mut roof: f64 = 0.0;
    for _ in 0..5 {
        let u = random_potential(&torus, &mut r, &spec);
        let v = random_potential(&torus, &mut r, &spec);
        let fast = rooftop(&u, &v)?;
        let slow = rooftop_jacobi(&u, &v, 1e-14, 5_000_000)?;
        roof = roof.max(fast.sup_distance(&slow));
    }
    csv.push_str(&format!("rooftop_vs_jacobi,torus,{}\n", e(roof)));

    let pass = pull <= 1e-6 && three <= 0.01 && tri >= -1e-10 && shift <= 1e-12 && roof <= 1e-7;
    let detail = format!("pullback {pull:.1e}; d1 routes {three:.1e}; triangle slack >= {tri:.1e}; shift {shift:.1e}; rooftop {roof:.1e}");
    Ok(Outcome { pass, detail, artifacts: vec![artifact("c05_metric.csv", csv)] })
}

// ---------------------------------------------------------------- 6

fn speeds_agreement(traj: &FlowTrajectory, floor: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for d in traj.diags.iter().skip(1) {
        for (closed, path) in [(d.calabi_speed, d.path.calabi), (d.darvas_speed, d.path.darvas), (d.mabuchi_speed, d.path.mabuchi)] {
            if closed >= floor {
                worst = worst.max(rel(closed, path));
            }
        }
    }
    worst
}

fn flow_suite(seed: u64) -> Result<Outcome> {
    let mut csv = String::from("run,calabi_len,darvas_len,mabuchi_len,tail_share,speed_match,status\n");
    let mut pass = true;
    let mut detail = Vec::new();
    let runs = [
        ("sphere", make_model(ModelKind::P1Symmetric, 1024, 12.0)?, 20.0),
        ("yau", yau_model(seed)?, 3.0),
        ("negative", Arc::new(ModelGeometry::new(ModelKind::Torus2, 32, 0.0)?.with_mu(-1.0)), 3.0),
    ];
    for (k, (name, m, t_end)) in runs.iter().enumerate() {
        let mut start = random_potential(m, &mut rng(seed.wrapping_add(10 + k as u64)), &SampleSpec::default());
        if m.kind == ModelKind::P1Symmetric {
            // even part: the odd orbit direction is neutral for the flow
            let s = start.samples();
            let even = s.iter().zip(s.iter().rev()).map(|(a, b)| 0.5 * (a + b)).collect();
            start = Potential::from_samples(m.clone(), even)?;
        }
        let traj = krf_run(&start, *t_end, 0.05, &FlowOptions::default()).map_err(|a| a.error)?;
        let v = convergence_verdict(&traj, &VerdictThresholds { t_min: Some(0.8 * t_end), ..Default::default() })?;
        let total = flow_lengths(&traj)?;
        let half = traj.times.len() / 2;
        let head = flow_lengths(&FlowTrajectory { times: traj.times[..=half].to_vec(), potentials: traj.potentials[..=half].to_vec(), diags: traj.diags[..=half].to_vec(), halvings: traj.halvings[..=half].to_vec() })?;
        let tail_share = [(total.calabi_len, head.calabi_len), (total.darvas_len, head.darvas_len), (total.mabuchi_len, head.mabuchi_len)]
            .iter()
            .map(|(t, h)| (t - h) / t)
            .fold(0.0, f64::max);
        let finite = total.calabi_len.is_finite() && total.darvas_len.is_finite() && total.mabuchi_len.is_finite();
        let matched = speeds_agreement(&traj, 1e-7);
        let ok = finite && v.status == VerdictStatus::Converged && tail_share <= 1e-3 && matched <= 0.01;
        pass &= ok;
        csv.push_str(&format!("{name},{},{},{},{},{},{:?}\n", e(total.calabi_len), e(total.darvas_len), e(total.mabuchi_len), e(tail_share), e(matched), v.status));
        detail.push(format!("{name}: {:?}, tail share {tail_share:.1e}, speed match {matched:.1e}", v.status));
    }

    // escape along the orbit of 0: darvas length grows linearly
    let m = make_model(ModelKind::P1Symmetric, 1024, 12.0)?;
    let a_end = 0.9 * window(&m);
    let times: Vec<f64> = (0..=40).map(|k| a_end * k as f64 / 40.0).collect();
    let zero = m.zero();
    let pots = times.iter().map(|&a| act(a, &zero)).collect::<Result<Vec<_>>>()?;
    let path = PathRecord::new(times.clone(), pots)?;
    let sp: Vec<f64> = path.speeds.iter().map(|s| s.darvas).collect();
    let (lo, hi) = (sp.iter().cloned().fold(f64::INFINITY, f64::min), sp.iter().cloned().fold(0.0, f64::max));
    let full = path_length(&path, Which::Darvas);
    let half_len: f64 = sp[..20].iter().map(|s| s * a_end / 40.0).sum();
    let growth = full / half_len;
    let escape_ok = lo > 0.0 && (hi - lo) / lo <= 0.01 && (growth - 2.0).abs() <= 0.02;
    pass &= escape_ok;
    csv.push_str(&format!("escape,,{},,{},{},{}\n", e(full), e((hi - lo) / lo), e(growth), if escape_ok { "Linear" } else { "NotLinear" }));
    detail.push(format!("escape: darvas speed {lo:.4}..{hi:.4}, length ratio {growth:.4}"));
    Ok(Outcome { pass, detail: detail.join("; "), artifacts: vec![artifact("c06_flow.csv", csv)] })
}

// ---------------------------------------------------------------- 7

/// Downhill bracketing from `a0`, then golden section.
fn descend<F: FnMut(f64) -> Result<f64>>(mut f: F, a0: f64, w: f64) -> Result<f64> {
    let mut step = 0.25;
    let f0 = f(a0)?;
    let dir = if f(a0 + 1e-3)? < f0 { 1.0 } else { -1.0 };
    let (mut a, mut fa) = (a0, f0);
    let mut prev = a0;
    loop {
        let b = (a + dir * step).clamp(-w, w);
        let fb = f(b)?;
        if fb >= fa || b.abs() >= w {
            let (lo, hi) = if dir > 0.0 { (prev, b) } else { (b, prev) };
            return Ok(group::golden_min(&mut f, lo, hi, 1e-9)?.0);
        }
        prev = a;
        a = b;
        fa = fb;
        step *= 2.0;
    }
}

fn orbit_suite(seed: u64) -> Result<Outcome> {
    let mut csv_detail = Vec::new();
    // E along the orbit of the Kähler-Einstein point
    let big = make_model(ModelKind::P1Symmetric, 8192, 32.0)?;
    let w = window(&big);
    let grid: Vec<f64> = group::a_grid(0.99 * w, 33);
    let scan = orbit_scan(&big.zero(), &grid)?;
    let spread = scan.energy_spread();
    let jmax = scan.j.iter().cloned().fold(0.0, f64::max);
    let j0 = aubin(&big.zero())?.j;
    let e_ok = spread <= 1e-5 && jmax > 10.0 * j0 + 10.0;
    csv_detail.push(format!("E spread {spread:.1e}, max J {jmax:.2}"));

    // strict convexity and a unique minimizer of F_eta
    let m = make_model(ModelKind::P1Symmetric, 2048, 32.0)?;
    let wm = window(&m);
    let mut r = rng(seed);
    let eta = act(1.0, &random_potential(&m, &mut r, &SampleSpec { depth: (0.3, 0.6), ..SampleSpec::default() }))?;
    let f_scan = orbit_scan(&eta, &group::a_grid(0.9 * wm, 65))?;
    let convex = f_scan.min_second_difference();
    let f_eta = |a: f64| -> Result<f64> {
        let raw = group::act_raw(a, &eta)?;
        Ok(aubin(&raw)?.i_minus_j)
    };
    let starts = [-0.5 * wm, 0.0, 0.5 * wm];
    let mins = starts.iter().map(|&a0| descend(f_eta, a0, 0.95 * wm)).collect::<Result<Vec<f64>>>()?;
    let spread_min = mins.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - mins.iter().cloned().fold(f64::INFINITY, f64::min);
    let interior = mins.iter().all(|a| a.abs() < 0.9 * wm);
    let f_ok = convex > 0.0 && spread_min <= 1e-6 && interior;
    csv_detail.push(format!("F_eta min second difference {convex:.2e}, minimizers {:.6}..{:.6}", mins[0], mins[2]));

    // the orbit path solves the geodesic equation
    let fine = make_model(ModelKind::P1Symmetric, 16384, 16.0)?;
    let zero = fine.zero();
    let times: Vec<f64> = (0..=128).map(|k| k as f64 / 128.0).collect();
    let pots = times.iter().map(|&t| act(0.25 * t, &zero)).collect::<Result<Vec<_>>>()?;
    let residual = metric::geodesic_residual(&PathRecord::new(times, pots)?)?;
    let g_ok = residual <= 1e-6;
    csv_detail.push(format!("orbit geodesic residual {residual:.1e}"));

    // J_G / d1G band under window doubling
    let mut band_csv = String::from("X,N,a,jg,d1g,ratio\n");
    let mut bands = Vec::new();
    for (n, x) in [(1024usize, 16.0), (2048, 32.0)] {
        let m = make_model(ModelKind::P1Symmetric, n, x)?;
        let mut r = rng(seed.wrapping_add(1));
        let spec = SampleSpec { min_degree: 2, depth: (0.2, 0.6), constant: 0.0, ..SampleSpec::default() };
        let z = m.zero();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 0..8 {
            let a = -2.0 + 0.5 * k as f64;
            let p = act(a, &random_potential(&m, &mut r, &spec))?;
            let j = jg(&p)?;
            let d = d1g(&p, &z)?;
            let ratio = d.value / j.value;
            lo = lo.min(ratio);
            hi = hi.max(ratio);
            band_csv.push_str(&format!("{},{n},{},{},{},{}\n", e(x), e(a), e(j.value), e(d.value), e(ratio)));
        }
        bands.push((lo, hi));
    }
    let band_ok = bands.iter().all(|(l, h)| *l > 0.0 && h.is_finite()) && rel(bands[0].0, bands[1].0) <= 0.1 && rel(bands[0].1, bands[1].1) <= 0.1;
    csv_detail.push(format!("d1G/J_G band [{:.3}, {:.3}] vs [{:.3}, {:.3}] after doubling", bands[0].0, bands[0].1, bands[1].0, bands[1].1));

    let pass = e_ok && f_ok && g_ok && band_ok;
    let summary = format!(
        "check,value\nenergy_spread,{}\nj_max,{}\nf_eta_min_second_difference,{}\nminimizer_spread,{}\norbit_geodesic_residual,{}\n",
        e(spread),
        e(jmax),
        e(convex),
        e(spread_min),
        e(residual)
    );
    Ok(Outcome {
        pass,
        detail: csv_detail.join("; "),
        artifacts: vec![artifact("c07_orbit.csv", summary), artifact("c07_orbit_scan.csv", scan.to_csv()), artifact("c07_band.csv", band_csv)],
    })
}

// ---------------------------------------------------------------- 8

fn moser_trudinger(seed: u64) -> Result<Outcome> {
    let m = make_model(ModelKind::P1Symmetric, 2048, 32.0)?;
    let a = mt_scan(&m, &mut rng(seed), &MtOptions { rays: 32, ..MtOptions::default() })?;
    let b = mt_scan(&m, &mut rng(seed), &MtOptions { rays: 64, ..MtOptions::default() })?;
    let jmax = a.control.iter().map(|c| c.0).fold(0.0, f64::max);
    let stable = rel(a.slope, b.slope) <= 0.2;
    let flat = a.control_slope.abs() <= 0.01 * a.slope;
    let pass = a.slope > 0.0 && b.slope > 0.0 && stable && flat && jmax >= 10.0 && a.max_critical <= 1e-5;
    let detail = format!(
        "C = {:.3} (32 rays), {:.3} (64 rays); control slope {:.1e} with J up to {jmax:.2}; max critical derivative {:.1e}",
        a.slope, b.slope, a.control_slope, a.max_critical
    );
    let summary = format!("rays,C,D,pooled,control_slope,max_critical\n32,{},{},{},{},{}\n64,{},{},{},{},{}\n", e(a.slope), e(a.offset), e(a.pooled_slope), e(a.control_slope), e(a.max_critical), e(b.slope), e(b.offset), e(b.pooled_slope), e(b.control_slope), e(b.max_critical));
    Ok(Outcome { pass, detail, artifacts: vec![artifact("c08_mt.csv", summary), artifact("c08_mt_rays.csv", b.to_csv())] })
}

// ---------------------------------------------------------------- 9

fn integrability(seed: u64) -> Result<Outcome> {
    let (radius, rho) = (1.0, 0.55);
    let h1 = hormander_check(32, radius, rho, seed, 100)?;
    let h2 = hormander_check(64, radius, rho, seed, 100)?;
    let h_ok = h1.max_integral.is_finite() && h2.max_integral / h1.max_integral < 2.0 && h1.min_integral >= h1.area;

    let m = make_model(ModelKind::P1Symmetric, 2048, 32.0)?;
    let family = orbit_family(&m, 6.0, 25)?;
    let betas: Vec<f64> = (1..=20).map(|k| 0.1 * k as f64).collect();
    let table = alpha_scan(&family, &betas)?;
    let monotone = table.log_sup.windows(2).all(|w| w[1] >= w[0] - 1e-12);
    let a_vals: Vec<f64> = (0..25).map(|k| 6.0 * k as f64 / 24.0).collect();
    let mut asym = String::from("beta,slope,expected\n");
    let mut worst: f64 = 0.0;
    for beta in [1.0, 1.5, 2.0] {
        let pts: Vec<(f64, f64)> = a_vals.iter().zip(&family).filter(|(a, _)| **a >= 3.0).map(|(a, p)| (*a, log_exp_integral(p, beta))).collect();
        let slope = ls_slope(&pts);
        let expected = 4.0 * beta - 2.0;
        worst = worst.max(rel(slope, expected));
        asym.push_str(&format!("{},{},{}\n", e(beta), e(slope), e(expected)));
    }
    let pass = h_ok && monotone && worst <= 0.05;
    let detail = format!(
        "Hörmander max {:.4} (32) vs {:.4} (64), area {:.4}; alpha table monotone {monotone}, stable to beta {:.2}; asymptotic slopes within {worst:.1e}",
        h1.max_integral, h2.max_integral, h1.area, table.stable_beta
    );
    let hcsv = format!(
        "samples,max,min,area\n{},{},{},{}\n{},{},{},{}\n",
        h1.samples,
        e(h1.max_integral),
        e(h1.min_integral),
        e(h1.area),
        h2.samples,
        e(h2.max_integral),
        e(h2.min_integral),
        e(h2.area)
    );
    Ok(Outcome { pass, detail, artifacts: vec![artifact("c09_hormander.csv", hcsv), artifact("c09_alpha.csv", table.to_csv()), artifact("c09_asymptotics.csv", asym)] })
}
