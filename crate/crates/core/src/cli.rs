//! Command-line front end: flat `key = value` configuration with
//! `--key value` overrides, one subcommand per analysis, CSV and report
//! output.
//!
//! Exit codes: 0 success, 1 configuration error, 2 inconclusive result,
//! 3 runtime failure.

use std::collections::HashSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Arg, ArgAction, ArgMatches, Command};

use crate::decay::{max_r_beta, PhiTransform, RateFunction};
use crate::ergodic::{
    annulus_exit_time, constant_noise_log_density, density_bin_masses, mean_hitting_time,
    noise_floor, occupancy_bound_for, time_average_measure, Bins, ExitStats, MeasureOptions,
};
use crate::error::Error;
use crate::model::{DiffusionSpec, PotentialParams, Slope};
use crate::report::Report;
use crate::sde::{check_inputs, simulate, Scheme, SimConfig, StoppingRule};
use crate::stability::{classify, decay_rate, Evidence};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Ordered `key = value` pairs as read from a configuration file.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawConfig {
    entries: Vec<(String, String)>,
}

/// Keys are `[a-z_][a-z0-9_]*`.
pub fn valid_key(k: &str) -> bool {
    let mut chars = k.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_lowercase() || c == '_')
        && chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl RawConfig {
    /// Parses lines of `key = value`; `#` starts a comment, blank lines are
    /// skipped, duplicate keys are rejected.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = RawConfig::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected `key = value`", n + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !valid_key(k) {
                return Err(format!("line {}: invalid key `{k}`", n + 1));
            }
            if v.is_empty() {
                return Err(format!("line {}: missing value for `{k}`", n + 1));
            }
            if cfg.get(k).is_some() {
                return Err(format!("line {}: duplicate key `{k}`", n + 1));
            }
            cfg.entries.push((k.to_string(), v.to_string()));
        }
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Inserts or replaces `key`, keeping the original position.
    pub fn set(&mut self, key: &str, value: &str) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(e) => e.1 = value.to_string(),
            None => self.entries.push((key.to_string(), value.to_string())),
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}

impl fmt::Display for RawConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.entries {
            writeln!(f, "{k} = {v}")?;
        }
        Ok(())
    }
}

/// A configuration key a subcommand reads.
#[derive(Debug, Clone, Copy)]
pub struct Key {
    pub name: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn key(name: &'static str, default: &'static str, help: &'static str) -> Key {
    Key {
        name,
        default,
        help,
    }
}

const MODEL_KEYS: &[Key] = &[
    key("a", "1", "linear drift coefficient"),
    key("b", "1", "cubic drift coefficient"),
    key("lambda", "1", "drift time constant"),
    key(
        "sigma",
        "constant",
        "diffusion family: constant|linear|oscillatory|polynomial|tabulated",
    ),
    key("sigma_s", "1", "constant: value of sigma"),
    key("sigma_x_e", "0", "linear/oscillatory: root of sigma"),
    key(
        "sigma_kappa",
        "1",
        "linear: slope at the root (number or `sqrt2`)",
    ),
    key(
        "sigma_cap",
        "10",
        "linear/oscillatory: distance beyond which sigma is frozen",
    ),
    key("sigma_lo", "1", "oscillatory: lower ratio limit"),
    key("sigma_hi", "3", "oscillatory: upper ratio limit"),
    key(
        "sigma_coeffs",
        "0",
        "polynomial: comma-separated coefficients c0,c1,...",
    ),
    key(
        "sigma_knots",
        "0",
        "tabulated: comma-separated increasing knots",
    ),
    key(
        "sigma_values",
        "0",
        "tabulated: comma-separated values at the knots",
    ),
];

const SIM_KEYS: &[Key] = &[
    key("dt", "1e-3", "time step"),
    key("t_max", "10", "time horizon"),
    key("scheme", "em", "em|milstein"),
    key(
        "truncation_radius",
        "50",
        "stop a path once |X| reaches this",
    ),
    key("seed", "0", "base seed"),
];

const BATCH_KEYS: &[Key] = &[
    key("n_paths", "1000", "number of paths"),
    key(
        "parallelism",
        "1",
        "worker threads (1 = sequential, 0 = all cores)",
    ),
];

const SIMULATE_KEYS: &[Key] = &[
    key("x0", "0.5", "initial state"),
    key("stop", "none", "stopping rule: none|exit|annulus|hit"),
    key("stop_lo", "-1", "exit/hit: lower end of the interval"),
    key("stop_hi", "1", "exit/hit: upper end of the interval"),
    key("stop_center", "0", "annulus: centre"),
    key("stop_r1", "0.1", "annulus: inner radius"),
    key("stop_r2", "0.5", "annulus: outer radius"),
];

const CLASSIFY_KEYS: &[Key] = &[key("x_e", "0", "equilibrium to classify")];

const EXIT_KEYS: &[Key] = &[
    key("mode", "annulus", "annulus|hit"),
    key("x0", "0.3", "initial state"),
    key("x_e", "0", "annulus: centre equilibrium"),
    key("eps1", "0.1", "annulus: inner radius"),
    key("eps2", "0.5", "annulus: outer radius"),
    key("target_lo", "-1.5", "hit: lower end of the target interval"),
    key("target_hi", "1.5", "hit: upper end of the target interval"),
];

const INVARIANT_KEYS: &[Key] = &[
    key("x0", "0", "initial state"),
    key("bins", "200", "number of histogram bins"),
    key("bin_lo", "-3", "left end of the histogram range"),
    key("bin_hi", "3", "right end of the histogram range"),
    key(
        "burn_in",
        "auto",
        "discarded initial time (`auto` = 10% of t_max)",
    ),
    key(
        "allow_degenerate",
        "false",
        "run even if sigma vanishes near the equilibria",
    ),
    key("delta", "1", "occupancy bound parameter in (0, 2)"),
];

const ENVELOPE_KEYS: &[Key] = &[
    key(
        "rate",
        "linear",
        "rate function: linear|supergeometric|power",
    ),
    key("rate_r", "1", "linear/power: cap"),
    key("rate_beta", "2", "supergeometric: exponent > 1"),
    key(
        "rate_r_beta",
        "auto",
        "supergeometric: cap (`auto` = e^(1/beta-1))",
    ),
    key("rate_gamma", "0.5", "power: exponent in (0, 1)"),
    key(
        "smooth",
        "false",
        "use the C1 concave smoothing of the rate",
    ),
    key(
        "smooth_eps",
        "auto",
        "smoothing half-width (`auto` = cap/10)",
    ),
    key("c", "1", "drift constant"),
    key("v0", "0.5", "initial value"),
    key(
        "grid_lo",
        "1e-2",
        "smallest positive time of the geometric grid",
    ),
    key("grid_hi", "1e8", "largest time of the grid"),
    key("grid_n", "81", "number of positive grid times"),
];

const DECAY_KEYS: &[Key] = &[
    key("x_e", "1", "well (+-sqrt(a/b))"),
    key("alpha", "1", "moment order"),
];

struct Sub {
    name: &'static str,
    about: &'static str,
    groups: &'static [&'static [Key]],
}

const SUBCOMMANDS: &[Sub] = &[
    Sub {
        name: "simulate",
        about: "Simulate one path and write trajectory.csv",
        groups: &[MODEL_KEYS, SIM_KEYS, SIMULATE_KEYS],
    },
    Sub {
        name: "classify",
        about: "Classify the stability of an equilibrium",
        groups: &[MODEL_KEYS, CLASSIFY_KEYS],
    },
    Sub {
        name: "exit-time",
        about: "Monte Carlo exit/hitting times with the matching bound",
        groups: &[MODEL_KEYS, SIM_KEYS, BATCH_KEYS, EXIT_KEYS],
    },
    Sub {
        name: "invariant",
        about: "Time-average histogram of one long path",
        groups: &[MODEL_KEYS, SIM_KEYS, INVARIANT_KEYS],
    },
    Sub {
        name: "envelope",
        about: "Decay envelope of a rate function and its fitted asymptotic rate",
        groups: &[ENVELOPE_KEYS],
    },
    Sub {
        name: "decay-rate",
        about: "Moment decay constant at a well",
        groups: &[MODEL_KEYS, DECAY_KEYS],
    },
];

fn keys_of(sub: &Sub) -> impl Iterator<Item = &'static Key> {
    sub.groups.iter().flat_map(|g| g.iter())
}

/// Builds the clap command tree. Every key a subcommand reads is an option
/// of that subcommand, so `--help` lists them all.
pub fn command() -> Command {
    let mut root = Command::new("langevin")
        .about("Double-well Langevin SDE: simulation, stability and decay analysis")
        .subcommand_required(true)
        .arg_required_else_help(true)
        .arg(
            Arg::new("config")
                .long("config")
                .value_name("PATH")
                .global(true)
                .help("configuration file of `key = value` lines"),
        )
        .arg(
            Arg::new("out")
                .long("out")
                .value_name("DIR")
                .global(true)
                .help("output directory [default: out]"),
        );
    for sub in SUBCOMMANDS {
        let mut cmd = Command::new(sub.name).about(sub.about);
        for k in keys_of(sub) {
            cmd = cmd.arg(
                Arg::new(k.name)
                    .long(k.name)
                    .value_name("VALUE")
                    .action(ArgAction::Set)
                    .allow_hyphen_values(true)
                    .help(format!("{} [default: {}]", k.help, k.default)),
            );
        }
        root = root.subcommand(cmd);
    }
    root
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Runtime(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Config(_) => EXIT_CONFIG,
            Failure::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

fn cfg_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn run_err(e: Error) -> Failure {
    Failure::Runtime(e.to_string())
}

fn io_err(e: std::io::Error) -> Failure {
    Failure::Runtime(e.to_string())
}

/// Resolved configuration of one subcommand: file values, then command-line
/// overrides, then defaults.
pub struct Settings {
    raw: RawConfig,
    defaults: Vec<&'static Key>,
}

impl Settings {
    fn lookup(&self, name: &str) -> Result<&str, Failure> {
        if let Some(v) = self.raw.get(name) {
            return Ok(v);
        }
        self.defaults
            .iter()
            .find(|k| k.name == name)
            .map(|k| k.default)
            .ok_or_else(|| Failure::Config(format!("unknown key `{name}`")))
    }

    pub fn str(&self, name: &str) -> Result<String, Failure> {
        self.lookup(name).map(str::to_string)
    }

    pub fn f64(&self, name: &str) -> Result<f64, Failure> {
        let v = self.lookup(name)?;
        v.parse::<f64>()
            .map_err(|_| Failure::Config(format!("`{name}`: expected a number, got `{v}`")))
    }

    /// `None` for the value `auto`.
    pub fn f64_auto(&self, name: &str) -> Result<Option<f64>, Failure> {
        if self.lookup(name)? == "auto" {
            Ok(None)
        } else {
            self.f64(name).map(Some)
        }
    }

    pub fn usize(&self, name: &str) -> Result<usize, Failure> {
        let v = self.lookup(name)?;
        v.parse::<usize>().map_err(|_| {
            Failure::Config(format!(
                "`{name}`: expected a non-negative integer, got `{v}`"
            ))
        })
    }

    pub fn u64(&self, name: &str) -> Result<u64, Failure> {
        let v = self.lookup(name)?;
        v.parse::<u64>().map_err(|_| {
            Failure::Config(format!("`{name}`: expected an unsigned integer, got `{v}`"))
        })
    }

    pub fn bool(&self, name: &str) -> Result<bool, Failure> {
        match self.lookup(name)? {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(Failure::Config(format!(
                "`{name}`: expected true/false, got `{v}`"
            ))),
        }
    }

    pub fn list(&self, name: &str) -> Result<Vec<f64>, Failure> {
        self.lookup(name)?
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Failure::Config(format!("`{name}`: bad list entry `{s}`")))
            })
            .collect()
    }
}

pub fn potential(s: &Settings) -> Result<PotentialParams, Failure> {
    PotentialParams::new(s.f64("a")?, s.f64("b")?, s.f64("lambda")?).map_err(cfg_err)
}

pub fn diffusion(s: &Settings) -> Result<DiffusionSpec, Failure> {
    let d = match s.str("sigma")?.as_str() {
        "constant" => DiffusionSpec::constant(s.f64("sigma_s")?),
        "linear" => {
            let kappa = match s.str("sigma_kappa")?.as_str() {
                "sqrt2" => Slope::Sqrt2,
                _ => Slope::Value(s.f64("sigma_kappa")?),
            };
            DiffusionSpec::LinearAtRoot {
                x_e: s.f64("sigma_x_e")?,
                kappa,
                cap: s.f64("sigma_cap")?,
            }
        }
        "oscillatory" => DiffusionSpec::oscillatory(
            s.f64("sigma_x_e")?,
            s.f64("sigma_lo")?,
            s.f64("sigma_hi")?,
            s.f64("sigma_cap")?,
        ),
        "polynomial" => DiffusionSpec::polynomial(s.list("sigma_coeffs")?),
        "tabulated" => DiffusionSpec::tabulated(s.list("sigma_knots")?, s.list("sigma_values")?),
        other => return Err(Failure::Config(format!("unknown sigma family `{other}`"))),
    };
    d.validate().map_err(cfg_err)?;
    Ok(d)
}

pub fn sim_config(s: &Settings, p: &PotentialParams) -> Result<SimConfig, Failure> {
    let scheme = match s.str("scheme")?.as_str() {
        "em" => Scheme::EulerMaruyama,
        "milstein" => Scheme::Milstein,
        other => return Err(Failure::Config(format!("unknown scheme `{other}`"))),
    };
    let cfg = SimConfig {
        dt: s.f64("dt")?,
        t_max: s.f64("t_max")?,
        scheme,
        seed: s.u64("seed")?,
        truncation_radius: s.f64("truncation_radius")?,
    };
    cfg.validate(p).map_err(cfg_err)?;
    Ok(cfg)
}

/// Model and simulation checks that would otherwise fail inside a run.
fn preflight(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    rule: &StoppingRule,
) -> Result<(), Failure> {
    check_inputs(p, d, x0, cfg, rule).map_err(cfg_err)
}

fn rate_function(s: &Settings) -> Result<RateFunction, Failure> {
    let base = match s.str("rate")?.as_str() {
        "linear" => RateFunction::linear_capped(s.f64("rate_r")?),
        "supergeometric" => {
            let beta = s.f64("rate_beta")?;
            let r = s
                .f64_auto("rate_r_beta")?
                .unwrap_or_else(|| max_r_beta(beta));
            RateFunction::super_geometric(beta, r)
        }
        "power" => RateFunction::power_capped(s.f64("rate_gamma")?, s.f64("rate_r")?),
        other => return Err(Failure::Config(format!("unknown rate function `{other}`"))),
    };
    base.validate().map_err(cfg_err)?;
    if !s.bool("smooth")? {
        return Ok(base);
    }
    let rate = match s.f64_auto("smooth_eps")? {
        Some(eps) => RateFunction::SmoothedConcave {
            base: Box::new(base),
            eps,
        },
        None => RateFunction::smoothed(base),
    };
    rate.validate().map_err(cfg_err)?;
    Ok(rate)
}

/// Output of one subcommand.
struct Outcome {
    report: Report,
    files: Vec<(&'static str, Vec<u8>)>,
    inconclusive: bool,
}

fn csv<F>(f: F) -> Result<Vec<u8>, Failure>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), Failure>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn cmd_simulate(s: &Settings) -> Result<Outcome, Failure> {
    let p = potential(s)?;
    let d = diffusion(s)?;
    let cfg = sim_config(s, &p)?;
    let x0 = s.f64("x0")?;
    let rule = match s.str("stop")?.as_str() {
        "none" => StoppingRule::None,
        "exit" => StoppingRule::ExitInterval {
            lo: s.f64("stop_lo")?,
            hi: s.f64("stop_hi")?,
        },
        "hit" => StoppingRule::HitInterval {
            lo: s.f64("stop_lo")?,
            hi: s.f64("stop_hi")?,
        },
        "annulus" => StoppingRule::ExitAnnulus {
            center: s.f64("stop_center")?,
            r1: s.f64("stop_r1")?,
            r2: s.f64("stop_r2")?,
        },
        other => return Err(Failure::Config(format!("unknown stopping rule `{other}`"))),
    };
    preflight(&p, &d, x0, &cfg, &rule)?;
    let traj = simulate(&p, &d, x0, &cfg, &rule).map_err(run_err)?;
    let mut r = Report::new();
    r.text("command", "simulate")
        .text("seed", cfg.seed)
        .text("points", traj.times.len())
        .num("terminal_time", traj.times.last().copied().unwrap_or(0.0))
        .num("terminal_state", traj.terminal());
    match traj.stopped {
        Some(st) => {
            r.text("stopped", "true")
                .text("stop_cause", st.cause.as_str())
                .num("stop_time", st.time)
                .num("stop_state", st.state);
        }
        None => {
            r.text("stopped", "false");
        }
    }
    let data = csv(|b| traj.write_csv(b).map_err(io_err))?;
    Ok(Outcome {
        report: r,
        files: vec![("trajectory.csv", data)],
        inconclusive: false,
    })
}

fn cmd_classify(s: &Settings) -> Result<Outcome, Failure> {
    let p = potential(s)?;
    let d = diffusion(s)?;
    let x_e = s.f64("x_e")?;
    let v = classify(&p, &d, x_e).map_err(cfg_err)?;
    let mut r = Report::new();
    r.text("command", "classify")
        .text("verdict", v.case.as_str())
        .num("x_e", v.x_e);
    match &v.evidence {
        Evidence::Kappa(k) => {
            let (gs, gi) = k.grid_tail();
            r.num("limsup_at_root", k.limsup_at_root)
                .num("liminf_at_root", k.liminf_at_root)
                .num("grid_sup_smallest_eps", gs)
                .num("grid_inf_smallest_eps", gi);
        }
        Evidence::Decay(dr) => {
            r.num("alpha", dr.alpha).num("c", dr.c);
        }
    }
    Ok(Outcome {
        report: r,
        files: Vec::new(),
        inconclusive: !v.case.is_definitive(),
    })
}

fn exit_report(r: &mut Report, st: &ExitStats) {
    r.text("n_paths", st.n_paths)
        .num("mean", st.estimate.mean)
        .num("se", st.estimate.se)
        .num("max", st.max)
        .text("unfinished", st.unfinished);
    match (st.bound, st.bound_holds()) {
        (Some(b), Some(h)) => {
            r.num("bound", b).text("bound_holds", h);
        }
        _ => {
            r.text("bound", "none");
        }
    }
}

fn cmd_exit_time(s: &Settings) -> Result<Outcome, Failure> {
    let p = potential(s)?;
    let d = diffusion(s)?;
    let cfg = sim_config(s, &p)?;
    let n = s.usize("n_paths")?;
    let par = s.usize("parallelism")?;
    let x0 = s.f64("x0")?;
    if n == 0 {
        return Err(Failure::Config("`n_paths` must be at least 1".into()));
    }
    preflight(&p, &d, x0, &cfg, &StoppingRule::None)?;
    let mode = s.str("mode")?;
    let st = match mode.as_str() {
        "annulus" => {
            let (x_e, e1, e2) = (s.f64("x_e")?, s.f64("eps1")?, s.f64("eps2")?);
            let dist = (x0 - x_e).abs();
            if p.equilibrium_index(x_e).is_none()
                || !(e1 > 0.0 && e1 < dist && dist < e2 && e2 < p.well())
            {
                return Err(Failure::Config(format!(
                    "annulus needs x_e an equilibrium and 0 < eps1 < |x0 - x_e| < eps2 < {}",
                    p.well()
                )));
            }
            annulus_exit_time(&p, &d, x_e, e1, e2, x0, &cfg, n, par).map_err(run_err)?
        }
        "hit" => {
            let t = (s.f64("target_lo")?, s.f64("target_hi")?);
            if !(t.0 < t.1) {
                return Err(Failure::Config("need target_lo < target_hi".into()));
            }
            mean_hitting_time(&p, &d, x0, t, &cfg, n, par).map_err(run_err)?
        }
        other => return Err(Failure::Config(format!("unknown mode `{other}`"))),
    };
    let mut r = Report::new();
    r.text("command", "exit-time")
        .text("mode", mode)
        .text("seed", cfg.seed);
    exit_report(&mut r, &st);
    let data = csv(|b| st.write_csv(b).map_err(io_err))?;
    Ok(Outcome {
        report: r,
        files: vec![("exit_times.csv", data)],
        inconclusive: false,
    })
}

fn cmd_invariant(s: &Settings) -> Result<Outcome, Failure> {
    let p = potential(s)?;
    let d = diffusion(s)?;
    let cfg = sim_config(s, &p)?;
    let bins = Bins::new(s.f64("bin_lo")?, s.f64("bin_hi")?, s.usize("bins")?).map_err(cfg_err)?;
    let opts = MeasureOptions {
        burn_in: s.f64_auto("burn_in")?,
        allow_degenerate: s.bool("allow_degenerate")?,
    };
    let delta = s.f64("delta")?;
    let x0 = s.f64("x0")?;
    if opts.burn_in.is_some_and(|b| !(b >= 0.0 && b < cfg.t_max)) {
        return Err(Failure::Config("need 0 <= burn_in < t_max".into()));
    }
    if !opts.allow_degenerate && !(noise_floor(&p, &d) > 0.0) {
        return Err(Failure::Config(
            "sigma vanishes near the equilibria; set allow_degenerate = true to run anyway".into(),
        ));
    }
    preflight(&p, &d, x0, &cfg, &StoppingRule::None)?;
    let m = time_average_measure(&p, &d, x0, &cfg, &bins, &opts).map_err(run_err)?;
    let mut r = Report::new();
    r.text("command", "invariant")
        .text("seed", cfg.seed)
        .num("total_time", m.total_time)
        .num("burn_in", m.burn_in)
        .num("coverage", m.coverage);
    if let DiffusionSpec::Constant { s: sig } = d {
        if sig > 0.0 {
            let q = density_bin_masses(|x| constant_noise_log_density(&p, sig, x), &bins)
                .map_err(run_err)?;
            r.num("oracle_l1", m.l1_to(&q).map_err(run_err)?);
        }
    }
    if bins.lo == -bins.hi {
        if let Ok(b) = occupancy_bound_for(&d, delta, bins.hi) {
            r.num("occupancy_bound", b)
                .text("occupancy_holds", m.coverage >= b);
        }
    }
    for w in &m.warnings {
        r.text("warning", w);
    }
    let data = csv(|b| m.write_csv(b).map_err(io_err))?;
    Ok(Outcome {
        report: r,
        files: vec![("histogram.csv", data)],
        inconclusive: false,
    })
}

fn cmd_envelope(s: &Settings) -> Result<Outcome, Failure> {
    let rate = rate_function(s)?;
    let tr = PhiTransform::new(rate, s.f64("c")?).map_err(cfg_err)?;
    let v0 = s.f64("v0")?;
    let (lo, hi, n) = (s.f64("grid_lo")?, s.f64("grid_hi")?, s.usize("grid_n")?);
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(Failure::Config("`v0` must be positive".into()));
    }
    if !(lo > 0.0 && lo < hi && hi.is_finite()) || n < 2 {
        return Err(Failure::Config(
            "need 0 < grid_lo < grid_hi and grid_n >= 2".into(),
        ));
    }
    let q = (hi / lo).ln() / (n - 1) as f64;
    let mut grid = vec![0.0];
    grid.extend((0..n).map(|i| {
        if i + 1 == n {
            hi
        } else {
            lo * (q * i as f64).exp()
        }
    }));
    let data = csv(|b| tr.write_envelope_csv(v0, &grid, b).map_err(run_err))?;
    let mut r = Report::new();
    r.text("command", "envelope")
        .text("onto", tr.onto.is_onto())
        .num("c", tr.c)
        .num("v0", v0);
    let mut inconclusive = false;
    if tr.onto.is_onto() {
        let fit = tr.asymptotic_rate(v0, &grid).map_err(run_err)?;
        r.num("beta", fit.beta)
            .num("rate", fit.rate)
            .num("fit_residual", fit.residual)
            .text("conclusive", fit.conclusive);
        inconclusive = !fit.conclusive;
    } else {
        r.num("phi_at_zero", tr.phi_at_zero().map_err(run_err)?);
    }
    Ok(Outcome {
        report: r,
        files: vec![("envelope.csv", data)],
        inconclusive,
    })
}

fn cmd_decay_rate(s: &Settings) -> Result<Outcome, Failure> {
    let p = potential(s)?;
    let d = diffusion(s)?;
    let dr = decay_rate(&p, &d, s.f64("x_e")?, s.f64("alpha")?).map_err(cfg_err)?;
    let mut r = Report::new();
    r.text("command", "decay-rate")
        .num("alpha", dr.alpha)
        .num("c", dr.c)
        .num("grid_inf", dr.grid_inf)
        .num("tail_inf", dr.tail_inf)
        .num("tail_radius", dr.tail_radius)
        .text("certified", dr.certified());
    if let Some(b) = dr.analytic_bounds {
        r.num("bound_lower", b.lower)
            .num("bound_upper", b.upper)
            .text("within_bounds", b.contains(dr.c / dr.alpha));
    }
    Ok(Outcome {
        report: r,
        files: Vec::new(),
        inconclusive: !dr.certified(),
    })
}

fn settings(sub: &Sub, m: &ArgMatches, config: Option<&Path>) -> Result<Settings, Failure> {
    let mut raw = match config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RawConfig::parse(&text).map_err(Failure::Config)?
        }
        None => RawConfig::default(),
    };
    let known: HashSet<&str> = keys_of(sub).map(|k| k.name).collect();
    if let Some(bad) = raw.keys().find(|k| !known.contains(k)) {
        return Err(Failure::Config(format!(
            "key `{bad}` is not read by `{}`",
            sub.name
        )));
    }
    for k in keys_of(sub) {
        if let Some(v) = m.get_one::<String>(k.name) {
            raw.set(k.name, v);
        }
    }
    Ok(Settings {
        raw,
        defaults: keys_of(sub).collect(),
    })
}

fn write_outputs(dir: &Path, out: &Outcome) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(io_err)?;
    for (name, data) in &out.files {
        fs::write(dir.join(name), data).map_err(io_err)?;
    }
    let mut f = BufWriter::new(File::create(dir.join("report.txt")).map_err(io_err)?);
    f.write_all(out.report.render().as_bytes())
        .map_err(io_err)?;
    f.flush().map_err(io_err)
}

/// Runs the CLI on `args` (including the program name), printing the
/// rounded report to `stdout` and errors to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = match command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_CONFIG;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_OK;
        }
    };
    let Some((name, sub_m)) = matches.subcommand() else {
        return EXIT_CONFIG;
    };
    let Some(sub) = SUBCOMMANDS.iter().find(|s| s.name == name) else {
        return EXIT_CONFIG;
    };
    let config = sub_m.get_one::<String>("config").map(PathBuf::from);
    let out_dir = sub_m
        .get_one::<String>("out")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"));

    let result = settings(sub, sub_m, config.as_deref()).and_then(|s| match name {
        "simulate" => cmd_simulate(&s),
        "classify" => cmd_classify(&s),
        "exit-time" => cmd_exit_time(&s),
        "invariant" => cmd_invariant(&s),
        "envelope" => cmd_envelope(&s),
        "decay-rate" => cmd_decay_rate(&s),
        _ => Err(Failure::Config(format!("unknown subcommand `{name}`"))),
    });
    let outcome = match result.and_then(|o| write_outputs(&out_dir, &o).map(|_| o)) {
        Ok(o) => o,
        Err(f) => {
            let _ = writeln!(stderr, "{f}");
            return f.code();
        }
    };
    let _ = write!(stdout, "{}", outcome.report.render_display());
    if outcome.inconclusive {
        EXIT_INCONCLUSIVE
    } else {
        EXIT_OK
    }
}
