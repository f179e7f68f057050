//! Fixed-step strong simulation with stopping rules and seeded batches.
//!
//! A path is advanced on the grid `t_i = i·dt`, `i = 0..=⌊t_max/dt⌋`.
//! Stopping conditions are only checked on grid points, so recorded exit
//! times carry an `O(√dt)` bias and a resolution of one step.
//!
//! Determinism: path `k` of a batch is driven by a ChaCha8 stream seeded
//! with [`derive_seed`]`(base_seed, k)`. Results are keyed by path index, so
//! batch output does not depend on the number of worker threads.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{finite, invalid, Error, Result};
use crate::model::{validate_assumptions, DiffusionSpec, PotentialParams};
use crate::report::fmt17;
use crate::stats::Estimate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    EulerMaruyama,
    Milstein,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_max: f64,
    pub scheme: Scheme,
    pub seed: u64,
    /// Paths are stopped once `|X| ≥ truncation_radius`.
    pub truncation_radius: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            t_max: 10.0,
            scheme: Scheme::EulerMaruyama,
            seed: 0,
            truncation_radius: 50.0,
        }
    }
}

impl SimConfig {
    pub fn new(dt: f64, t_max: f64, seed: u64) -> Self {
        Self {
            dt,
            t_max,
            seed,
            ..Self::default()
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, p: &PotentialParams) -> Result<()> {
        finite("dt", self.dt)?;
        finite("t_max", self.t_max)?;
        finite("truncation_radius", self.truncation_radius)?;
        if self.dt <= 0.0 {
            return Err(invalid("dt", "must be positive"));
        }
        if self.t_max <= 0.0 || self.dt >= self.t_max {
            return Err(invalid("t_max", "need 0 < dt < t_max"));
        }
        if self.truncation_radius <= p.well() {
            return Err(invalid(
                "truncation_radius",
                format!("must exceed the well position {}", p.well()),
            ));
        }
        Ok(())
    }

    /// Number of steps on the grid, `⌊t_max/dt⌋`.
    pub fn n_steps(&self) -> usize {
        (self.t_max / self.dt * (1.0 + 1e-12)).floor() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StoppingRule {
    #[default]
    None,
    /// Stop at the first grid time with `X ∉ (lo, hi)`.
    ExitInterval { lo: f64, hi: f64 },
    /// Stop at the first grid time with `X ∉ {r1 < |x − center| < r2}`.
    ExitAnnulus { center: f64, r1: f64, r2: f64 },
    /// Stop at the first grid time with `X ∈ (lo, hi)`.
    HitInterval { lo: f64, hi: f64 },
}

impl StoppingRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            StoppingRule::None => Ok(()),
            StoppingRule::ExitInterval { lo, hi } | StoppingRule::HitInterval { lo, hi } => {
                finite("lo", lo)?;
                finite("hi", hi)?;
                if lo < hi {
                    Ok(())
                } else {
                    Err(invalid("lo", "need lo < hi"))
                }
            }
            StoppingRule::ExitAnnulus { center, r1, r2 } => {
                finite("center", center)?;
                if r1 > 0.0 && r1 < r2 && r2.is_finite() {
                    Ok(())
                } else {
                    Err(invalid("r1", "need 0 < r1 < r2"))
                }
            }
        }
    }

    pub fn fires(&self, x: f64) -> bool {
        match *self {
            StoppingRule::None => false,
            StoppingRule::ExitInterval { lo, hi } => !(x > lo && x < hi),
            StoppingRule::ExitAnnulus { center, r1, r2 } => {
                let r = (x - center).abs();
                !(r > r1 && r < r2)
            }
            StoppingRule::HitInterval { lo, hi } => x > lo && x < hi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopCause {
    Rule,
    Truncation,
}

impl StopCause {
    pub fn as_str(self) -> &'static str {
        match self {
            StopCause::Rule => "rule",
            StopCause::Truncation => "truncation",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopInfo {
    pub time: f64,
    pub state: f64,
    pub cause: StopCause,
}

/// A simulated path on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    pub stopped: Option<StopInfo>,
    pub seed: u64,
}

impl Trajectory {
    pub fn terminal(&self) -> f64 {
        *self
            .states
            .last()
            .expect("trajectory has at least the initial point")
    }

    /// Writes `t,x` rows at 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,x")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            writeln!(w, "{},{}", fmt17(*t), fmt17(*x))?;
        }
        Ok(())
    }
}

/// Source of independent standard normal draws.
pub trait NoiseSource {
    fn next_gaussian(&mut self) -> f64;
}

/// ChaCha8-backed standard normals.
#[derive(Debug, Clone)]
pub struct SeededNoise {
    rng: ChaCha8Rng,
}

impl SeededNoise {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl NoiseSource for SeededNoise {
    fn next_gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }
}

/// Negates every draw of the wrapped source.
#[derive(Debug, Clone)]
pub struct Mirrored<N>(pub N);

impl<N: NoiseSource> NoiseSource for Mirrored<N> {
    fn next_gaussian(&mut self) -> f64 {
        -self.0.next_gaussian()
    }
}

impl<N: NoiseSource + ?Sized> NoiseSource for &mut N {
    fn next_gaussian(&mut self) -> f64 {
        (**self).next_gaussian()
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of path `index` in a batch with `base_seed`.
///
/// Stateless: `splitmix64(base_seed ⊕ splitmix64(index ⊕ 0xD1B54A32D192ED03))`.
pub fn derive_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index ^ 0xD1B5_4A32_D192_ED03))
}

/// One update of the scheme from `x` with the standard normal draw `g`.
///
/// Euler–Maruyama: `x + b(x)·dt + σ(x)·√dt·g`. Milstein adds
/// `σ(x)σ′(x)/2·(dt·g² − dt)`.
pub fn step(
    p: &PotentialParams,
    d: &DiffusionSpec,
    scheme: Scheme,
    x: f64,
    dt: f64,
    g: f64,
) -> Result<f64> {
    let s = d.sigma(x);
    let mut next = x + p.drift(x) * dt + s * dt.sqrt() * g;
    if scheme == Scheme::Milstein && s != 0.0 {
        next += 0.5 * s * d.sigma_prime(x) * dt * (g * g - 1.0);
    }
    if next.is_finite() {
        Ok(next)
    } else {
        Err(Error::BlowUp {
            time: f64::NAN,
            state: x,
        })
    }
}

/// End-of-path metadata returned by [`simulate_path`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathOutcome {
    pub stopped: Option<StopInfo>,
    pub terminal: f64,
    pub terminal_time: f64,
}

/// Core path loop: advances from `x0`, calling `observe(t, x)` at every grid
/// point (including `t = 0` and the stopping point).
///
/// Precondition checks are the caller's job; see [`simulate`].
pub fn simulate_path<N, F>(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    rule: &StoppingRule,
    noise: &mut N,
    mut observe: F,
) -> Result<PathOutcome>
where
    N: NoiseSource + ?Sized,
    F: FnMut(f64, f64),
{
    let check = |t: f64, x: f64| -> Option<StopInfo> {
        if rule.fires(x) {
            Some(StopInfo {
                time: t,
                state: x,
                cause: StopCause::Rule,
            })
        } else if x.abs() >= cfg.truncation_radius {
            Some(StopInfo {
                time: t,
                state: x,
                cause: StopCause::Truncation,
            })
        } else {
            None
        }
    };
    let mut x = x0;
    observe(0.0, x);
    if let Some(stop) = check(0.0, x) {
        return Ok(PathOutcome {
            stopped: Some(stop),
            terminal: x,
            terminal_time: 0.0,
        });
    }
    let n = cfg.n_steps();
    let mut t = 0.0;
    for i in 1..=n {
        let g = noise.next_gaussian();
        t = i as f64 * cfg.dt;
        x = step(p, d, cfg.scheme, x, cfg.dt, g)
            .map_err(|_| Error::BlowUp { time: t, state: x })?;
        observe(t, x);
        if let Some(stop) = check(t, x) {
            return Ok(PathOutcome {
                stopped: Some(stop),
                terminal: x,
                terminal_time: t,
            });
        }
    }
    Ok(PathOutcome {
        stopped: None,
        terminal: x,
        terminal_time: t,
    })
}

pub(crate) fn check_inputs(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    rule: &StoppingRule,
) -> Result<()> {
    finite("x0", x0)?;
    d.validate()?;
    cfg.validate(p)?;
    rule.validate()?;
    let report = validate_assumptions(d);
    if !report.admissible() {
        return Err(Error::Precondition(format!(
            "diffusion fails the growth condition (margin {})",
            report.a2_margin
        )));
    }
    Ok(())
}

/// Simulates one path with the stream seeded by `cfg.seed`.
pub fn simulate(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    rule: &StoppingRule,
) -> Result<Trajectory> {
    check_inputs(p, d, x0, cfg, rule)?;
    let mut noise = SeededNoise::new(cfg.seed);
    simulate_with_noise(p, d, x0, cfg, rule, &mut noise)
}

/// [`simulate`] with a caller-supplied noise source.
pub fn simulate_with_noise<N: NoiseSource + ?Sized>(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    rule: &StoppingRule,
    noise: &mut N,
) -> Result<Trajectory> {
    let cap = cfg.n_steps() + 1;
    let mut times = Vec::with_capacity(cap);
    let mut states = Vec::with_capacity(cap);
    let out = simulate_path(p, d, x0, cfg, rule, noise, |t, x| {
        times.push(t);
        states.push(x);
    })?;
    Ok(Trajectory {
        times,
        states,
        stopped: out.stopped,
        seed: cfg.seed,
    })
}

/// Per-path summary inside a [`BatchResult`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSummary {
    pub index: usize,
    pub seed: u64,
    pub stopped: Option<StopInfo>,
    pub terminal: f64,
    /// `sup_t |X_t − reference|` over the simulated grid.
    pub sup_dev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub n_paths: usize,
    pub base_seed: u64,
    pub reference: f64,
    pub paths: Vec<PathSummary>,
}

impl BatchResult {
    /// Fraction of paths stopped by the rule, with its standard error.
    pub fn stopped_fraction(&self) -> Estimate {
        let hits = self
            .paths
            .iter()
            .filter(|s| {
                matches!(
                    s.stopped,
                    Some(StopInfo {
                        cause: StopCause::Rule,
                        ..
                    })
                )
            })
            .count();
        Estimate::proportion(hits, self.n_paths)
    }

    /// Fraction of paths that hit the truncation radius.
    pub fn truncated(&self) -> usize {
        self.paths
            .iter()
            .filter(|s| {
                matches!(
                    s.stopped,
                    Some(StopInfo {
                        cause: StopCause::Truncation,
                        ..
                    })
                )
            })
            .count()
    }

    /// Fraction of paths with `sup_dev > threshold`.
    pub fn exceedance_fraction(&self, threshold: f64) -> Estimate {
        let hits = self.paths.iter().filter(|s| s.sup_dev > threshold).count();
        Estimate::proportion(hits, self.n_paths)
    }

    /// Mean stop time over the paths stopped by the rule.
    pub fn stop_time(&self) -> Estimate {
        let times: Vec<f64> = self
            .paths
            .iter()
            .filter_map(|s| {
                s.stopped
                    .filter(|i| i.cause == StopCause::Rule)
                    .map(|i| i.time)
            })
            .collect();
        Estimate::from_samples(&times)
    }

    pub fn terminal_mean(&self) -> Estimate {
        let xs: Vec<f64> = self.paths.iter().map(|s| s.terminal).collect();
        Estimate::from_samples(&xs)
    }

    /// Writes `path,stop_time,stop_state,terminal,sup_dev`; unstopped paths
    /// leave the stop columns empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path,stop_time,stop_state,terminal,sup_dev")?;
        for s in &self.paths {
            let (st, ss) = match s.stopped {
                Some(i) => (fmt17(i.time), fmt17(i.state)),
                None => (String::new(), String::new()),
            };
            writeln!(
                w,
                "{},{},{},{},{}",
                s.index,
                st,
                ss,
                fmt17(s.terminal),
                fmt17(s.sup_dev)
            )?;
        }
        Ok(())
    }
}

/// Evaluates `f(k)` for `k = 0..n` and returns the results in index order.
///
/// `parallelism = 1` runs sequentially on the calling thread; `0` uses the
/// global rayon pool; otherwise a dedicated pool of that many threads.
pub fn map_paths<T, F>(n: usize, parallelism: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match parallelism {
        1 => (0..n).map(f).collect(),
        0 => (0..n).into_par_iter().map(f).collect(),
        k => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        },
    }
}

/// Runs `n_paths` independent paths; path `k` uses `derive_seed(cfg.seed, k)`.
#[allow(clippy::too_many_arguments)]
pub fn run_batch(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    rule: &StoppingRule,
    n_paths: usize,
    reference: f64,
    parallelism: usize,
) -> Result<BatchResult> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    check_inputs(p, d, x0, cfg, rule)?;
    let results = map_paths(n_paths, parallelism, |k| {
        let seed = derive_seed(cfg.seed, k as u64);
        let mut noise = SeededNoise::new(seed);
        let mut sup_dev = 0.0f64;
        let out = simulate_path(p, d, x0, cfg, rule, &mut noise, |_, x| {
            sup_dev = sup_dev.max((x - reference).abs());
        })?;
        Ok(PathSummary {
            index: k,
            seed,
            stopped: out.stopped,
            terminal: out.terminal,
            sup_dev,
        })
    });
    let paths = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(BatchResult {
        n_paths,
        base_seed: cfg.seed,
        reference,
        paths,
    })
}
