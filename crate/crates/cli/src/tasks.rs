use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use kahler_lab::acceptance::{self, Report};
use kahler_lab::flow::{convergence_verdict, flow_lengths, krf_run, path_lengths, FlowAborted, FlowOptions, FlowTrajectory, VerdictThresholds};
use kahler_lab::functionals::mabuchi;
use kahler_lab::group::{a_grid, alpha_scan, mt_scan, orbit_family, orbit_scan, window, MtOptions};
use kahler_lab::metric::{d1, geodesic, geodesic_residual, path_length, Which};
use kahler_lab::model::{fmt17, ModelGeometry, ModelKind, Potential};
use kahler_lab::sample::{random_potential, rng, SampleSpec};
use kahler_lab::solver::{apriori_report, continuity_run, default_schedule, NewtonOptions, RunAborted, RunOptions};
use kahler_lab::{snapshot, Error};

use crate::config::{ConfigError, Settings};

/// Maps a failure to the documented exit status.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    let inner = if let Some(a) = e.downcast_ref::<RunAborted>() {
        Some(&a.error)
    } else if let Some(a) = e.downcast_ref::<FlowAborted>() {
        Some(&a.error)
    } else {
        e.downcast_ref::<Error>()
    };
    match inner {
        Some(Error::NonConvergence { .. } | Error::PositivityLoss { .. } | Error::StepTooLarge { .. } | Error::StepRejected { .. }) => 3,
        Some(Error::TruncationExceeded { .. }) => 4,
        Some(Error::BadGrid(_) | Error::BadTruncation(_) | Error::ModelMismatch(_) | Error::Snapshot(_) | Error::InvalidArgument(_)) => 2,
        _ => 1,
    }
}

fn config_err(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(msg.into()))
}

struct Output {
    dir: PathBuf,
    header: String,
}

impl Output {
    fn new(s: &Settings, seed: u64) -> Result<Output> {
        let dir = PathBuf::from(s.string("out").unwrap_or("out"));
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let header = format!("# klab {} config={} seed={seed}\n", env!("CARGO_PKG_VERSION"), s.hash());
        Ok(Output { dir, header })
    }

    fn csv(&self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, format!("{}{body}", self.header)).with_context(|| format!("writing {}", path.display()))
    }

    fn snapshot(&self, name: &str, phi: &Potential) -> Result<()> {
        snapshot::write_file(&self.dir.join(name), phi).with_context(|| format!("writing {name}"))
    }
}

fn positive(s: &Settings, key: &str, default: i64) -> Result<usize> {
    let v = s.int(key).unwrap_or(default);
    if v <= 0 {
        return Err(config_err(format!("{key} must be positive, got {v}")));
    }
    Ok(v as usize)
}

fn build_model(s: &Settings) -> Result<Arc<ModelGeometry>> {
    let kind = match s.string("model").unwrap_or("p1") {
        "p1" | "sphere" => ModelKind::P1Symmetric,
        "torus" => ModelKind::Torus2,
        other => return Err(config_err(format!("unknown model '{other}' (expected p1 or torus)"))),
    };
    let n = positive(s, "N", if kind == ModelKind::Torus2 { 32 } else { 2048 })?;
    let x = s.float("X").unwrap_or(32.0);
    let mut geom = match s.string("perturb") {
        Some(list) => {
            if kind != ModelKind::P1Symmetric {
                return Err(config_err("perturb applies to the p1 model"));
            }
            let coeffs = list.split(',').map(|c| c.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| config_err(format!("bad perturb list '{list}'")))?;
            let (m, _) = ModelGeometry::p1_perturbed(n, x, &coeffs)?;
            (*m).clone()
        }
        None => ModelGeometry::new(kind, n, x)?,
    };
    if let Some(path) = s.string("ricci") {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{path}: {e}")))?;
        let f = text.split_whitespace().map(|t| t.parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>().map_err(|_| config_err(format!("{path}: bad number")))?;
        geom = geom.with_ricci(f)?;
    }
    if let Some(mu) = s.float("mu") {
        geom = geom.with_mu(mu);
    }
    Ok(Arc::new(geom))
}

fn load(path: &str, m: &Arc<ModelGeometry>) -> Result<Potential> {
    Ok(snapshot::read_file(Path::new(path), Some(m)).with_context(|| format!("reading {path}"))?)
}

fn potential_or_random(s: &Settings, key: &str, m: &Arc<ModelGeometry>, r: &mut kahler_lab::sample::Rng64) -> Result<Potential> {
    match s.string(key) {
        Some(p) => load(p, m),
        None => Ok(random_potential(m, r, &SampleSpec::default())),
    }
}

fn e(v: f64) -> String {
    format!("{v:e}")
}

pub fn run(s: &Settings) -> Result<u8> {
    let seed = s.int("seed").unwrap_or(7);
    if seed < 0 {
        return Err(config_err("seed must be non-negative"));
    }
    let seed = seed as u64;
    let jobs = positive(s, "jobs", 1)?;
    let task = s.string("task").unwrap_or_default().to_string();
    if task == "acceptance" {
        let ids = parse_ids(s.string("acceptance.only"))?;
        let out = Output::new(s, seed)?;
        return acceptance_task(&out, seed, &ids, jobs);
    }
    let m = build_model(s)?;
    let newton = NewtonOptions { tol: s.float("tol.newton").unwrap_or(1e-10), ..NewtonOptions::default() };
    let mut r = rng(seed);
    match task.as_str() {
        "continuity" => {
            let out = Output::new(s, seed)?;
            let opts = RunOptions { newton, spectral: s.boolean("continuity.spectral").unwrap_or(true), ..RunOptions::default() };
            match continuity_run(&m, &default_schedule(m.mu), &opts) {
                Ok(trace) => {
                    out.csv("trace.csv", &trace.to_csv())?;
                    let rep = apriori_report(&trace)?;
                    let mut csv = String::from("s,t,osc,sup_slack,gap_margin,laplacian_ratio,violation\n");
                    for row in &rep.rows {
                        csv.push_str(&format!("{},{},{},{},{},{},{}\n", e(row.point.s), e(row.point.t), e(row.osc), e(row.sup_slack), e(row.gap_margin), e(row.laplacian_ratio), row.violation as u8));
                    }
                    out.csv("apriori.csv", &csv)?;
                    let last = trace.last().ok_or_else(|| anyhow!("empty trace"))?;
                    out.snapshot("final.klab", &last.potential)?;
                    println!("reached {} residual {:e}, {} a priori violations", last.point, last.diag.residual, rep.violations());
                    Ok(0)
                }
                Err(aborted) => {
                    out.csv("trace.csv", &aborted.trace.to_csv())?;
                    Err(aborted.into())
                }
            }
        }
        "flow" => {
            let init = potential_or_random(s, "flow.init", &m, &mut r)?;
            let t_end = s.float("flow.T").unwrap_or(if m.mu > 0.0 { 20.0 / m.mu } else { 5.0 });
            let dt = s.float("flow.dt").unwrap_or(0.05);
            if !(t_end > 0.0 && dt > 0.0) {
                return Err(config_err("flow.T and flow.dt must be positive"));
            }
            let out = Output::new(s, seed)?;
            let opts = FlowOptions { newton, ..FlowOptions::default() };
            match krf_run(&init, t_end, dt, &opts) {
                Ok(traj) => {
                    out.csv("flow.csv", &traj.to_csv())?;
                    let v = convergence_verdict(&traj, &VerdictThresholds::default())?;
                    out.csv("lengths.csv", &lengths_csv(&traj)?)?;
                    let ev = &v.evidence;
                    out.csv(
                        "verdict.csv",
                        &format!(
                            "status,density_tail,sup_tail,speed_log_slope,darvas_growth_rate,t_min\n{:?},{},{},{},{},{}\n",
                            v.status,
                            e(ev.density_tail),
                            e(ev.sup_tail),
                            e(ev.speed_log_slope),
                            e(ev.darvas_growth_rate),
                            e(ev.t_min)
                        ),
                    )?;
                    out.snapshot("final.klab", traj.potentials.last().ok_or_else(|| anyhow!("empty flow"))?)?;
                    println!("flow to t = {t_end}: {:?}", v.status);
                    Ok(0)
                }
                Err(aborted) => {
                    out.csv("flow.csv", &aborted.trajectory.to_csv())?;
                    Err(aborted.into())
                }
            }
        }
        "distance" => {
            let u = potential_or_random(s, "distance.u", &m, &mut r)?;
            let v = potential_or_random(s, "distance.v", &m, &mut r)?;
            let out = Output::new(s, seed)?;
            let d = d1(&u, &v)?;
            out.csv(
                "distance.csv",
                &format!(
                    "d1,d1_initial_speed,mixed_lower,mixed_upper,d_calabi,geodesic_residual\n{},{},{},{},{},{}\n",
                    e(d.d1),
                    e(d.d1_dtn),
                    e(d.mixed_lower),
                    e(d.mixed_upper),
                    e(d.d_c),
                    e(d.geodesic_residual_max)
                ),
            )?;
            println!("d1 = {} (initial speed {}), d_C = {}", fmt17(d.d1), fmt17(d.d1_dtn), fmt17(d.d_c));
            Ok(0)
        }
        "geodesic" => {
            let u = potential_or_random(s, "geodesic.u", &m, &mut r)?;
            let v = potential_or_random(s, "geodesic.v", &m, &mut r)?;
            let k = positive(s, "geodesic.K", 16)?;
            let out = Output::new(s, seed)?;
            let path = geodesic(&u, &v, k)?;
            let mut csv = String::from("t0,t1,mabuchi,calabi,darvas\n");
            for (w, sp) in path.times.windows(2).zip(&path.speeds) {
                csv.push_str(&format!("{},{},{},{},{}\n", e(w[0]), e(w[1]), e(sp.mabuchi), e(sp.calabi), e(sp.darvas)));
            }
            out.csv("geodesic.csv", &csv)?;
            let res = if k >= 2 { geodesic_residual(&path)? } else { f64::NAN };
            let (lm, lc, ld) = (path_length(&path, Which::Mabuchi), path_length(&path, Which::Calabi), path_length(&path, Which::Darvas));
            out.csv("geodesic_summary.csv", &format!("K,residual,mabuchi_len,calabi_len,darvas_len\n{k},{},{},{},{}\n", e(res), e(lm), e(lc), e(ld)))?;
            println!("geodesic residual {res:e}, darvas length {ld}");
            Ok(0)
        }
        "orbit" => {
            let eta = match s.string("orbit.eta") {
                Some(p) => load(p, &m)?,
                None => m.zero(),
            };
            let w = s.float("orbit.window").unwrap_or(0.5 * window(&m));
            let steps = positive(s, "orbit.steps", 201)?;
            let out = Output::new(s, seed)?;
            let scan = orbit_scan(&eta, &a_grid(w, steps))?;
            out.csv("orbit.csv", &scan.to_csv())?;
            out.csv("orbit_summary.csv", &format!("window,energy_spread,min_second_difference\n{},{},{}\n", e(w), e(scan.energy_spread()), e(scan.min_second_difference())))?;
            println!("E spread {:e}, min second difference of F {:e}", scan.energy_spread(), scan.min_second_difference());
            Ok(0)
        }
        "mt-scan" => {
            let opts = MtOptions { rays: positive(s, "mt.rays", 32)?, steps: positive(s, "mt.steps", 8)?, ..MtOptions::default() };
            let out = Output::new(s, seed)?;
            let scan = mt_scan(&m, &mut r, &opts)?;
            out.csv("mt.csv", &scan.to_csv())?;
            out.csv(
                "mt_summary.csv",
                &format!("rays,C,D,pooled_slope,control_slope,max_critical\n{},{},{},{},{},{}\n", opts.rays, e(scan.slope), e(scan.offset), e(scan.pooled_slope), e(scan.control_slope), e(scan.max_critical)),
            )?;
            println!("C = {}, D = {}, control slope {:e}", scan.slope, scan.offset, scan.control_slope);
            Ok(0)
        }
        "alpha" => {
            let betas = parse_range(s.string("alpha.beta").unwrap_or("0.1:0.05:2.0"))?;
            let family = match s.string("alpha.family") {
                Some(dir) => {
                    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
                        .map_err(|e| config_err(format!("{dir}: {e}")))?
                        .filter_map(|ent| ent.ok().map(|e| e.path()))
                        .filter(|p| p.extension().is_some_and(|x| x == "klab"))
                        .collect();
                    paths.sort();
                    if paths.is_empty() {
                        return Err(config_err(format!("{dir}: no .klab snapshots")));
                    }
                    paths.iter().map(|p| load(&p.to_string_lossy(), &m)).collect::<Result<Vec<_>>>()?
                }
                None => {
                    let a_max = s.float("alpha.a_max").unwrap_or(0.75 * window(&m));
                    orbit_family(&m, a_max, positive(s, "alpha.count", 25)?)?
                }
            };
            let out = Output::new(s, seed)?;
            let table = alpha_scan(&family, &betas)?;
            out.csv("alpha.csv", &table.to_csv())?;
            println!("{} family members, stable up to beta = {}", family.len(), table.stable_beta);
            Ok(0)
        }
        "functionals" => {
            let phi = potential_or_random(s, "functionals.phi", &m, &mut r)?;
            let out = Output::new(s, seed)?;
            let f = mabuchi(&phi)?;
            out.csv(
                "functionals.csv",
                &format!(
                    "I,J,I_minus_J,AM,entropy_ref,entropy_plain,E_fano,E_fano_ij,E_csc,degenerate\n{},{},{},{},{},{},{},{},{},{}\n",
                    e(f.i),
                    e(f.j),
                    e(f.i_minus_j),
                    e(f.am),
                    e(f.entropy_ref),
                    e(f.entropy_plain),
                    e(f.e_fano),
                    e(f.e_fano_ij),
                    e(f.e_csc),
                    f.degenerate as u8
                ),
            )?;
            println!("E = {}, J = {}", fmt17(f.e_fano), fmt17(f.j));
            Ok(0)
        }
        other => Err(config_err(format!("unknown task '{other}'"))),
    }
}

fn lengths_csv(traj: &FlowTrajectory) -> Result<String> {
    let f = flow_lengths(traj)?;
    let p = path_lengths(traj);
    Ok(format!(
        "source,calabi,darvas,mabuchi\nclosed_form,{},{},{}\npath,{},{},{}\n",
        e(f.calabi_len),
        e(f.darvas_len),
        e(f.mabuchi_len),
        e(p.calabi_len),
        e(p.darvas_len),
        e(p.mabuchi_len)
    ))
}

fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = spec.split(':').map(|t| t.trim().parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| config_err(format!("bad range '{spec}'")))?;
    let [a, step, b] = parts[..] else {
        return Err(config_err(format!("range '{spec}' needs start:step:end")));
    };
    if !(step > 0.0) || b < a {
        return Err(config_err(format!("range '{spec}' is empty")));
    }
    let count = ((b - a) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|k| a + step * k as f64).collect())
}

fn parse_ids(list: Option<&str>) -> Result<Vec<u8>> {
    let Some(list) = list else { return Ok(Vec::new()) };
    list.split(',')
        .map(|t| match t.trim().parse::<u8>() {
            Ok(id @ 1..=10) => Ok(id),
            _ => Err(config_err(format!("bad criterion '{t}'"))),
        })
        .collect()
}

/// Criteria in parallel over `jobs` threads, merged in id order.
fn run_parallel(ids: &[u8], seed: u64, jobs: usize) -> Vec<Report> {
    let next = AtomicUsize::new(0);
    let mut slots: Vec<Option<Report>> = vec![None; ids.len()];
    let results = std::sync::Mutex::new(&mut slots);
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(ids.len()).max(1) {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                if k >= ids.len() {
                    break;
                }
                let rep = acceptance::run_one(ids[k], seed);
                results.lock().expect("poisoned")[k] = Some(rep);
            });
        }
    });
    slots.into_iter().map(|r| r.expect("every slot filled")).collect()
}

fn acceptance_task(out: &Output, seed: u64, ids: &[u8], jobs: usize) -> Result<u8> {
    let wanted = |id: u8| ids.is_empty() || ids.contains(&id);
    let primary: Vec<u8> = (1..=9).filter(|&i| wanted(i)).collect();
    let mut report = Report::default();
    for part in run_parallel(&primary, seed, jobs) {
        acceptance::merge(&mut report, part);
    }
    if wanted(10) {
        let all: Vec<u8> = (1..=9).collect();
        let first = if primary.len() == 9 { report.artifacts.clone() } else { run_parallel(&all, seed, jobs).into_iter().flat_map(|r| r.artifacts).collect() };
        let second: Vec<_> = run_parallel(&all, seed, jobs).into_iter().flat_map(|r| r.artifacts).collect();
        report.criteria.push(acceptance::determinism(&first, &second));
    }
    for a in &report.artifacts {
        out.csv(&a.name, &a.csv)?;
    }
    out.csv("criteria.csv", &report.summary_csv())?;
    for c in &report.criteria {
        println!("criterion {:>2} {} {}: {}", c.id, if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    Ok(if report.all_pass() { 0 } else { 1 })
}
