use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod tasks;

use config::{ConfigError, Settings, Value};

#[derive(Parser, Debug)]
#[command(name = "klab", version, about = "Experiments on discrete Kähler potentials")]
struct Cli {
    /// Flat `key = value` config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// `p1` or `torus`.
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long = "N", global = true)]
    n: Option<i64>,
    #[arg(long = "X", global = true)]
    x: Option<f64>,
    /// Einstein constant override.
    #[arg(long, global = true, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Legendre coefficients of a sphere reference perturbation, comma separated.
    #[arg(long, global = true)]
    perturb: Option<String>,
    /// File of `f_ω` samples, one per node.
    #[arg(long, global = true)]
    ricci: Option<String>,
    #[arg(long, global = true)]
    seed: Option<i64>,
    #[arg(long, global = true)]
    jobs: Option<i64>,
    #[arg(long, global = true)]
    out: Option<String>,
    #[command(subcommand)]
    task: Task,
}

#[derive(Subcommand, Debug)]
enum Task {
    /// Walk the continuity schedule to the Einstein node.
    Continuity {
        #[arg(long)]
        spectral: Option<bool>,
    },
    /// Integrate the Kähler-Ricci flow.
    Flow {
        #[arg(long = "T")]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        /// Starting snapshot (random when absent).
        #[arg(long)]
        init: Option<String>,
    },
    /// Distances between two potentials.
    Distance(Pair),
    /// Legendre geodesic between two potentials.
    Geodesic {
        #[command(flatten)]
        pair: Pair,
        #[arg(long = "K")]
        k: Option<i64>,
    },
    /// Tabulate functionals along a dilation orbit.
    Orbit {
        #[arg(long)]
        eta: Option<String>,
        #[arg(long)]
        window: Option<f64>,
        #[arg(long)]
        steps: Option<i64>,
    },
    /// Rays in the slice orthogonal to the first eigenspace.
    MtScan {
        #[arg(long)]
        rays: Option<i64>,
        #[arg(long)]
        steps: Option<i64>,
    },
    /// Exponential integrability table over a family.
    Alpha {
        /// Directory of snapshots (the orbit family of 0 when absent).
        #[arg(long)]
        family: Option<String>,
        /// `start:step:end`.
        #[arg(long)]
        beta: Option<String>,
    },
    /// Energy functionals of one potential.
    Functionals {
        #[arg(long)]
        phi: Option<String>,
    },
    /// The full acceptance suite.
    Acceptance {
        /// Comma-separated criterion numbers.
        #[arg(long)]
        only: Option<String>,
    },
}

#[derive(Args, Debug)]
struct Pair {
    #[arg(long)]
    u: Option<String>,
    #[arg(long)]
    v: Option<String>,
}

impl Task {
    fn name(&self) -> &'static str {
        match self {
            Task::Continuity { .. } => "continuity",
            Task::Flow { .. } => "flow",
            Task::Distance(_) => "distance",
            Task::Geodesic { .. } => "geodesic",
            Task::Orbit { .. } => "orbit",
            Task::MtScan { .. } => "mt-scan",
            Task::Alpha { .. } => "alpha",
            Task::Functionals { .. } => "functionals",
            Task::Acceptance { .. } => "acceptance",
        }
    }

    fn overrides(&self, s: &mut Settings) -> Result<(), ConfigError> {
        let mut put = |k: &str, v: Option<Value>| match v {
            Some(v) => s.set(k, v),
            None => Ok(()),
        };
        let st = |v: &Option<String>| v.clone().map(Value::Str);
        let int = |v: &Option<i64>| v.map(Value::Int);
        let fl = |v: &Option<f64>| v.map(Value::Float);
        match self {
            Task::Continuity { spectral } => put("continuity.spectral", spectral.map(Value::Bool)),
            Task::Flow { t_end, dt, init } => {
                put("flow.T", fl(t_end))?;
                put("flow.dt", fl(dt))?;
                put("flow.init", st(init))
            }
            Task::Distance(p) => {
                put("distance.u", st(&p.u))?;
                put("distance.v", st(&p.v))
            }
            Task::Geodesic { pair, k } => {
                put("geodesic.u", st(&pair.u))?;
                put("geodesic.v", st(&pair.v))?;
                put("geodesic.K", int(k))
            }
            Task::Orbit { eta, window, steps } => {
                put("orbit.eta", st(eta))?;
                put("orbit.window", fl(window))?;
                put("orbit.steps", int(steps))
            }
            Task::MtScan { rays, steps } => {
                put("mt.rays", int(rays))?;
                put("mt.steps", int(steps))
            }
            Task::Alpha { family, beta } => {
                put("alpha.family", st(family))?;
                put("alpha.beta", st(beta))
            }
            Task::Functionals { phi } => put("functionals.phi", st(phi)),
            Task::Acceptance { only } => put("acceptance.only", st(only)),
        }
    }
}

fn settings(cli: &Cli) -> Result<Settings, ConfigError> {
    let mut s = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
            Settings::parse(&text)?
        }
        None => Settings::default(),
    };
    if let Some(t) = s.string("task") {
        if t != cli.task.name() {
            return Err(ConfigError(format!("config is for task '{t}', command is '{}'", cli.task.name())));
        }
    }
    let mut flags = Settings::default();
    let pairs = [
        ("model", cli.model.clone().map(Value::Str)),
        ("N", cli.n.map(Value::Int)),
        ("X", cli.x.map(Value::Float)),
        ("mu", cli.mu.map(Value::Float)),
        ("perturb", cli.perturb.clone().map(Value::Str)),
        ("ricci", cli.ricci.clone().map(Value::Str)),
        ("seed", cli.seed.map(Value::Int)),
        ("jobs", cli.jobs.map(Value::Int)),
        ("out", cli.out.clone().map(Value::Str)),
    ];
    for (k, v) in pairs {
        if let Some(v) = v {
            flags.set(k, v)?;
        }
    }
    cli.task.overrides(&mut flags)?;
    s.overlay(&flags);
    s.set("task", Value::Str(cli.task.name().to_string()))?;
    Ok(s)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let s = match settings(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("klab: {e}");
            return ExitCode::from(2);
        }
    };
    match tasks::run(&s) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("klab: {e:#}");
            ExitCode::from(tasks::exit_code(&e))
        }
    }
}
