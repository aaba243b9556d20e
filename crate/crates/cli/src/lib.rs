//! Command implementations behind the `delaywarp` binary.
//!
//! Settings are layered: built-in preset, then `--config` file, then flags.
//! Every command writes its artifacts into the output directory and prints a
//! JSON summary on stdout. Failures print a JSON error record on stderr and
//! map to an exit code through [`exit_code`].

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use delaywarp::abel::{exact_transform, PropagatedTransform};
use delaywarp::dde_sim::{default_step, ProbeOptions, ProbeTarget};
use delaywarp::experiments::{error_point, hdot_curves, ErrorSweep};
use delaywarp::presets::{preset, system_from_rows, Preset, FIG3_EPS};
use delaywarp::robust::analytic_hdot_bounds;
use delaywarp::{
    assemble_feedback_form, assemble_pie, compute_hdot_bounds, stability_probe, verify_equivalence, DdeSystem,
    DelayProfile, Error, ExpansionOrder, PeriodicDelay, PropagationOptions, TimeTransform,
};

/// Environment variable capping the worker threads of sweep commands.
pub const THREADS_ENV: &str = "DELAYWARP_THREADS";

const DEFAULT_TAU0: f64 = 3.0;
const DEFAULT_OMEGA: f64 = 5.0;
const DEFAULT_EPS: f64 = 0.01;
const DEFAULT_EQUIVALENCE_HORIZON: f64 = 30.0;
const DEFAULT_PROBE_HORIZON: f64 = 200.0;
const DEFAULT_POINTS: usize = 3000;

#[derive(Debug, Parser)]
#[command(name = "delaywarp", version, about = "Time-transformations for DDEs with periodic delay")]
#[command(allow_negative_numbers = true)]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OrderChoice {
    #[value(name = "1")]
    #[serde(rename = "1")]
    One,
    #[value(name = "2")]
    #[serde(rename = "2")]
    Two,
    Exact,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML or JSON file with run settings.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Built-in parameter set: fig1, fig2, fig3, gu-example.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Option<String>,
    /// Delay profile file (TOML or JSON).
    #[arg(long, global = true, value_name = "PATH")]
    pub delay: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub order: Option<OrderChoice>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub tau0: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub omega: Option<f64>,
    #[arg(long = "tau-star", global = true, allow_hyphen_values = true)]
    pub tau_star: Option<f64>,
    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// End of the new-time window (simulations, propagation).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub horizon: Option<f64>,
    /// Integrator step.
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub step: Option<f64>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
#[command(allow_negative_numbers = true)]
pub enum Command {
    /// h' of the first- and second-order and exact transforms: hdot_curves.csv.
    Approx,
    /// Seed-compatibility error against eps: error_sweep.csv.
    ErrorSweep,
    /// Compares x(h(l)) with the transformed solution: equivalence.json.
    Equivalence,
    /// Decay/growth verdict from the canonical history: probe.json.
    Probe,
    /// PI-operator data and feedback form: pie_operators.json, feedback_form.json.
    PieExport,
    /// Knot table of the exact transform: knots.csv.
    Propagate,
    /// Hypothesis report for the delay: hypotheses.json.
    Check,
}

/// Settings file; every field optional.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub preset: Option<String>,
    /// Relative paths are resolved against the config file's directory.
    pub delay_file: Option<PathBuf>,
    pub tau0: Option<f64>,
    pub omega: Option<f64>,
    pub eps: Option<f64>,
    pub tau_star: Option<f64>,
    pub order: Option<OrderChoice>,
    pub window: Option<[f64; 2]>,
    pub points: Option<usize>,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub root_tol: Option<f64>,
    pub samples_per_interval: Option<usize>,
    pub eps_grid: Option<Vec<f64>>,
    pub a0: Option<Vec<Vec<f64>>>,
    pub a1: Option<Vec<Vec<f64>>>,
    pub out: Option<PathBuf>,
}

impl ConfigFile {
    pub fn from_path(path: &Path) -> delaywarp::Result<Self> {
        if !path.exists() {
            return Err(Error::InvalidParameter(format!("config file {} does not exist", path.display())));
        }
        let text = fs::read_to_string(path)?;
        let mut cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text)?,
            Some("toml") => toml::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?,
            other => return Err(Error::Parse(format!("unsupported config extension {other:?}"))),
        };
        if let (Some(file), Some(dir)) = (&cfg.delay_file, path.parent()) {
            if file.is_relative() {
                cfg.delay_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub profile: DelayProfile,
    pub tau_star: f64,
    pub order: Option<OrderChoice>,
    pub window: [f64; 2],
    pub points: usize,
    pub horizon: Option<f64>,
    pub step: Option<f64>,
    pub propagation: PropagationOptions,
    pub eps_grid: Vec<f64>,
    pub a0: Option<Vec<Vec<f64>>>,
    pub a1: Option<Vec<Vec<f64>>>,
    pub out: PathBuf,
}

fn positive(name: &str, v: Option<f64>) -> delaywarp::Result<Option<f64>> {
    match v {
        Some(x) if !(x.is_finite() && x > 0.0) => {
            Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
        }
        _ => Ok(v),
    }
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> delaywarp::Result<Self> {
        let file = match &args.config {
            Some(path) => ConfigFile::from_path(path)?,
            None => ConfigFile::default(),
        };
        let preset_name = args.preset.clone().or(file.preset.clone());
        let base: Option<Preset> = preset_name.as_deref().map(preset).transpose()?;

        let delay_file = args.delay.clone().or(file.delay_file.clone());
        let mut profile = match &delay_file {
            Some(path) => {
                if !path.exists() {
                    return Err(Error::InvalidParameter(format!("delay file {} does not exist", path.display())));
                }
                DelayProfile::from_path(path)?
            }
            None => match &base {
                Some(p) => DelayProfile::sinusoid(p.tau0, p.omega, p.eps),
                None => DelayProfile::sinusoid(DEFAULT_TAU0, DEFAULT_OMEGA, DEFAULT_EPS),
            },
        };
        if let Some(v) = positive("tau0", args.tau0.or(file.tau0))? {
            profile.tau0 = v;
        }
        if let Some(v) = positive("omega", args.omega.or(file.omega))? {
            profile.omega = v;
        }
        if let Some(v) = args.eps.or(file.eps) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("eps must be non-negative, got {v}")));
            }
            profile.eps = v;
        }

        let tau_star = positive("tau-star", args.tau_star.or(file.tau_star))?.unwrap_or(profile.tau0);
        let window = file.window.or(base.as_ref().map(|p| [p.window.0, p.window.1])).unwrap_or([0.0, 3.0]);
        if !(window[1] > window[0]) {
            return Err(Error::InvalidParameter(format!("window [{}, {}] is empty", window[0], window[1])));
        }
        let points = file.points.unwrap_or(DEFAULT_POINTS);
        if points == 0 {
            return Err(Error::InvalidParameter("points must be positive".into()));
        }

        let mut propagation = PropagationOptions::default();
        if let Some(tol) = positive("root_tol", file.root_tol)? {
            propagation.root.ftol = tol;
        }
        if let Some(n) = file.samples_per_interval {
            propagation.samples_per_interval = n;
        }

        let eps_grid = file
            .eps_grid
            .or(base.as_ref().filter(|p| !p.eps_grid.is_empty()).map(|p| p.eps_grid.clone()))
            .unwrap_or_else(|| FIG3_EPS.to_vec());

        Ok(Self {
            preset: preset_name,
            profile,
            tau_star,
            order: args.order.or(file.order),
            window,
            points,
            horizon: positive("horizon", args.horizon.or(file.horizon))?,
            step: positive("step", args.step.or(file.step))?,
            propagation,
            eps_grid,
            a0: file.a0.or(base.as_ref().and_then(|p| p.a0.clone())),
            a1: file.a1.or(base.as_ref().and_then(|p| p.a1.clone())),
            out: args.out.clone().or(file.out).unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    pub fn delay(&self) -> delaywarp::Result<PeriodicDelay> {
        self.profile.to_delay()
    }

    /// The configured system, or the `gu-example` matrices.
    pub fn system(&self) -> delaywarp::Result<DdeSystem> {
        match (&self.a0, &self.a1) {
            (Some(a0), Some(a1)) => system_from_rows(a0, a1),
            (None, None) => Ok(preset("gu-example")?.system().expect("preset has a system")),
            _ => Err(Error::InvalidParameter("a0 and a1 must be given together".into())),
        }
    }

    fn transform(&self, delay: &PeriodicDelay, order: OrderChoice, horizon: f64) -> delaywarp::Result<TimeTransform> {
        Ok(match order {
            OrderChoice::One => TimeTransform::perturbative(delay, self.tau_star, ExpansionOrder::First)?,
            OrderChoice::Two => TimeTransform::perturbative(delay, self.tau_star, ExpansionOrder::Second)?,
            OrderChoice::Exact => {
                TimeTransform::Exact(exact_transform(delay, self.tau_star, horizon, &self.propagation)?)
            }
        })
    }
}

/// Exit status for a failed command, grouped by error kind.
///
/// 2: bad input, 3: delay hypotheses or resonance, 4: numerical failure, 5: I/O.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::InvalidParameter(_) | Error::Parse(_) | Error::Dimension(_) | Error::Json(_) | Error::Domain { .. } => 2,
        Error::Hypothesis(_) | Error::Resonance { .. } | Error::ConstraintViolation(_) => 3,
        Error::Io(_) => 5,
        _ => 4,
    }
}

/// Machine-readable error record.
pub fn error_json(err: &Error) -> Value {
    json!({ "status": "error", "error": err.code(), "message": err.to_string(), "exit_code": exit_code(err) })
}

fn write(out: &Path, name: &str, contents: &str) -> delaywarp::Result<PathBuf> {
    fs::create_dir_all(out)?;
    let path = out.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn write_json(out: &Path, name: &str, value: &impl Serialize) -> delaywarp::Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(out, name, &text)
}

fn files(paths: &[PathBuf]) -> Vec<String> {
    paths.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect()
}

/// Runs one command; returns the summary printed on stdout.
pub fn run(cli: &Cli) -> delaywarp::Result<Value> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match cli.command {
        Command::Approx => cmd_approx(&cfg),
        Command::ErrorSweep => cmd_error_sweep(&cfg),
        Command::Equivalence => cmd_equivalence(&cfg),
        Command::Probe => cmd_probe(&cfg),
        Command::PieExport => cmd_pie_export(&cfg),
        Command::Propagate => cmd_propagate(&cfg),
        Command::Check => cmd_check(&cfg),
    }
}

fn checked_delay(cfg: &RunConfig) -> delaywarp::Result<PeriodicDelay> {
    let delay = cfg.delay()?;
    let report = delay.validate_hypotheses();
    if !report.passed() {
        return Err(Error::Hypothesis(format!("failed checks: {}", report.failures().join(", "))));
    }
    Ok(delay)
}

pub fn cmd_approx(cfg: &RunConfig) -> delaywarp::Result<Value> {
    let delay = checked_delay(cfg)?;
    let window = (cfg.window[0], cfg.window[1]);
    let curves = hdot_curves(&delay, cfg.tau_star, window, cfg.points, Some(&cfg.propagation))?;
    let csv = write(&cfg.out, "hdot_curves.csv", &curves.to_csv())?;
    let summary = json!({
        "command": "approx",
        "preset": cfg.preset,
        "delay": cfg.profile,
        "tau_star": cfg.tau_star,
        "window": cfg.window,
        "points": cfg.points,
        "samples_per_interval": cfg.propagation.samples_per_interval,
        "spreads": curves.spreads,
    });
    let js = write_json(&cfg.out, "approx_summary.json", &summary)?;
    Ok(json!({ "status": "ok", "files": files(&[csv, js]), "spreads": curves.spreads }))
}

/// Thread pool capped by `DELAYWARP_THREADS` when it is set.
pub fn sweep_pool() -> delaywarp::Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::InvalidParameter(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))
}

pub fn cmd_error_sweep(cfg: &RunConfig) -> delaywarp::Result<Value> {
    let delay = cfg.delay()?;
    let pool = sweep_pool()?;
    log::info!("error sweep over {} eps values on {} threads", cfg.eps_grid.len(), pool.current_num_threads());
    let points = pool.install(|| {
        cfg.eps_grid.par_iter().map(|eps| error_point(&delay, cfg.tau_star, *eps)).collect::<Result<Vec<_>, _>>()
    })?;
    let sweep = ErrorSweep::from_points(points)?;
    let csv = write(&cfg.out, "error_sweep.csv", &sweep.to_csv())?;
    let monotone = sweep.points.windows(2).all(|w| w[1].order1 > w[0].order1 && w[1].order2 > w[0].order2);
    let summary = json!({
        "command": "error-sweep",
        "preset": cfg.preset,
        "delay": cfg.profile,
        "tau_star": cfg.tau_star,
        "eps_grid": cfg.eps_grid,
        "slope_order1": sweep.slope_order1,
        "slope_order2": sweep.slope_order2,
        "monotone_in_eps": monotone,
    });
    let js = write_json(&cfg.out, "error_sweep_summary.json", &summary)?;
    Ok(json!({
        "status": "ok",
        "files": files(&[csv, js]),
        "slope_order1": sweep.slope_order1,
        "slope_order2": sweep.slope_order2,
    }))
}

pub fn cmd_equivalence(cfg: &RunConfig) -> delaywarp::Result<Value> {
    let delay = checked_delay(cfg)?;
    let sys = cfg.system()?;
    let t_end = cfg.horizon.unwrap_or(DEFAULT_EQUIVALENCE_HORIZON);
    let step = cfg.step.unwrap_or_else(|| default_step(&delay));
    let order = cfg.order.unwrap_or(OrderChoice::Exact);
    let tt = cfg.transform(&delay, order, t_end)?;
    let report = verify_equivalence(&sys, &delay, &tt, t_end, step)?;
    let summary = json!({
        "command": "equivalence",
        "preset": cfg.preset,
        "delay": cfg.profile,
        "tau_star": cfg.tau_star,
        "transform": tt.label(),
        "report": report,
    });
    let js = write_json(&cfg.out, "equivalence.json", &summary)?;
    Ok(json!({ "status": "ok", "files": files(&[js]), "sup": report.sup, "rms": report.rms }))
}

pub fn cmd_probe(cfg: &RunConfig) -> delaywarp::Result<Value> {
    let delay = checked_delay(cfg)?;
    let sys = cfg.system()?;
    let t_end = cfg.horizon.unwrap_or(DEFAULT_PROBE_HORIZON);
    let opts = ProbeOptions { step: cfg.step, ..Default::default() };
    let (target, report) = match cfg.order {
        None => ("original", stability_probe(&sys, ProbeTarget::Original(&delay), t_end, &opts)?),
        Some(order) => {
            let tt = cfg.transform(&delay, order, t_end)?;
            (tt.label(), stability_probe(&sys, ProbeTarget::Transformed(&tt), t_end, &opts)?)
        }
    };
    let summary = json!({
        "command": "probe",
        "preset": cfg.preset,
        "delay": cfg.profile,
        "target": target,
        "report": report,
    });
    let js = write_json(&cfg.out, "probe.json", &summary)?;
    Ok(json!({ "status": "ok", "files": files(&[js]), "verdict": report.verdict }))
}

pub fn cmd_pie_export(cfg: &RunConfig) -> delaywarp::Result<Value> {
    let delay = checked_delay(cfg)?;
    let sys = cfg.system()?;
    let order = cfg.order.unwrap_or(OrderChoice::Two);
    let bounds = match order {
        OrderChoice::Exact => {
            let horizon = cfg.horizon.unwrap_or(DEFAULT_EQUIVALENCE_HORIZON);
            let tt = cfg.transform(&delay, order, horizon)?;
            compute_hdot_bounds(&tt, (0.0, horizon))?
        }
        _ => {
            let tt = cfg.transform(&delay, order, 0.0)?;
            let period = tt.period().expect("perturbative transforms are periodic");
            let mut b = compute_hdot_bounds(&tt, (0.0, period))?;
            if let Ok(a) = analytic_hdot_bounds(&tt) {
                b.analytic_radius = a.analytic_radius;
            }
            b
        }
    };
    let pie = assemble_pie(&sys, &bounds, cfg.tau_star);
    let feedback = assemble_feedback_form(&sys, &bounds, cfg.tau_star);
    let p = write_json(&cfg.out, "pie_operators.json", &pie)?;
    let f = write_json(&cfg.out, "feedback_form.json", &json!({ "bounds": bounds, "feedback": feedback }))?;
    Ok(json!({ "status": "ok", "files": files(&[p, f]), "h_bar": bounds.h_bar, "gamma": bounds.gamma }))
}

pub fn cmd_propagate(cfg: &RunConfig) -> delaywarp::Result<Value> {
    let delay = checked_delay(cfg)?;
    let horizon = cfg.horizon.unwrap_or(cfg.window[1].max(cfg.tau_star));
    let p: PropagatedTransform = exact_transform(&delay, cfg.tau_star, horizon, &cfg.propagation)?;
    let mut buf = Vec::new();
    p.write_csv(&mut buf)?;
    let csv = write(&cfg.out, "knots.csv", &String::from_utf8(buf).expect("ascii csv"))?;
    let summary = json!({
        "command": "propagate",
        "delay": cfg.profile,
        "tau_star": cfg.tau_star,
        "horizon": p.horizon(),
        "seed": p.seed(),
        "diagnostics": p.diagnostics(),
        "root_tol": p.root_tol(),
        "samples_per_interval": cfg.propagation.samples_per_interval,
    });
    let js = write_json(&cfg.out, "propagate_summary.json", &summary)?;
    Ok(json!({ "status": "ok", "files": files(&[csv, js]), "horizon": p.horizon() }))
}

pub fn cmd_check(cfg: &RunConfig) -> delaywarp::Result<Value> {
    let delay = cfg.delay()?;
    let report = delay.validate_hypotheses();
    let js = write_json(&cfg.out, "hypotheses.json", &json!({ "delay": cfg.profile, "report": report }))?;
    if !report.passed() {
        return Err(Error::Hypothesis(format!("failed checks: {}", report.failures().join(", "))));
    }
    Ok(json!({ "status": "ok", "files": files(&[js]), "passed": true }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(preset: Option<&str>) -> CommonArgs {
        CommonArgs { preset: preset.map(String::from), ..Default::default() }
    }

    #[test]
    fn defaults_without_preset() {
        let cfg = RunConfig::resolve(&args(None)).unwrap();
        assert_eq!((cfg.profile.tau0, cfg.profile.omega, cfg.profile.eps), (3.0, 5.0, 0.01));
        assert_eq!(cfg.tau_star, 3.0);
        assert_eq!(cfg.eps_grid, FIG3_EPS.to_vec());
        assert_eq!(cfg.system().unwrap().dim(), 2);
    }

    #[test]
    fn flags_override_preset() {
        let mut a = args(Some("fig2"));
        let base = RunConfig::resolve(&a).unwrap();
        assert_eq!(base.profile.eps, 0.1);
        a.eps = Some(0.02);
        a.tau_star = Some(2.5);
        let cfg = RunConfig::resolve(&a).unwrap();
        assert_eq!((cfg.profile.eps, cfg.tau_star), (0.02, 2.5));
        assert_eq!(cfg.window, base.window);
    }

    #[test]
    fn json_config_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"eps": 0.03, "order": "exact", "eps_grid": [0.01, 0.02]}"#).unwrap();
        let cfg = RunConfig::resolve(&CommonArgs { config: Some(path), ..Default::default() }).unwrap();
        assert_eq!(cfg.profile.eps, 0.03);
        assert_eq!(cfg.order, Some(OrderChoice::Exact));
        assert_eq!(cfg.eps_grid, [0.01, 0.02]);
    }

    #[test]
    fn half_specified_system_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "a0 = [[-1.0]]\n").unwrap();
        let cfg = RunConfig::resolve(&CommonArgs { config: Some(path), ..Default::default() }).unwrap();
        assert_eq!(exit_code(&cfg.system().unwrap_err()), 2);
    }

    #[test]
    fn exit_code_groups() {
        assert_eq!(exit_code(&Error::Parse("x".into())), 2);
        assert_eq!(exit_code(&Error::Resonance { harmonic: 1, magnitude: 0.0 }), 3);
        assert_eq!(exit_code(&Error::Divergence { time: 1.0 }), 4);
        assert_eq!(exit_code(&Error::Io(std::io::Error::other("x"))), 5);
        let v = error_json(&Error::Hypothesis("tau_dot".into()));
        assert_eq!(v["error"], "hypothesis");
        assert_eq!(v["exit_code"], 3);
    }

    #[test]
    fn thread_env_must_be_positive() {
        std::env::set_var(THREADS_ENV, "0");
        let r = sweep_pool();
        std::env::remove_var(THREADS_ENV);
        assert!(r.is_err());
    }
}
