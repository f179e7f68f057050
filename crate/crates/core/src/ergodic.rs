//! Time-average estimates of the invariant measure, exit and hitting time
//! statistics, and the occupancy lower bound for a centred ball.

use std::io::{self, Write};

use crate::error::{finite, invalid, Error, Result};
use crate::model::{DiffusionSpec, PotentialParams};
use crate::quad::integrate;
use crate::report::fmt17;
use crate::sde::{
    check_inputs, derive_seed, map_paths, simulate_path, SeededNoise, SimConfig, StopCause,
    StoppingRule,
};
use crate::stats::Estimate;

/// Equal-width bins on `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bins {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Bins {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self> {
        finite("lo", lo)?;
        finite("hi", hi)?;
        if !(lo < hi) {
            return Err(invalid("lo", "need lo < hi"));
        }
        if n == 0 {
            return Err(invalid("bins", "need at least one bin"));
        }
        Ok(Self { lo, hi, n })
    }

    pub fn edges(&self) -> Vec<f64> {
        let w = (self.hi - self.lo) / self.n as f64;
        (0..=self.n)
            .map(|i| {
                if i == self.n {
                    self.hi
                } else {
                    self.lo + i as f64 * w
                }
            })
            .collect()
    }

    /// Bin containing `x`; the right edge belongs to the last bin.
    pub fn index(&self, x: f64) -> Option<usize> {
        if !(x >= self.lo && x <= self.hi) {
            return None;
        }
        let i = ((x - self.lo) / (self.hi - self.lo) * self.n as f64) as usize;
        Some(i.min(self.n - 1))
    }
}

/// Occupation-time histogram of one path after burn-in.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasure {
    pub edges: Vec<f64>,
    /// Fraction of in-range samples per bin; sums to 1.
    pub mass: Vec<f64>,
    pub counts: Vec<u64>,
    pub total_time: f64,
    pub burn_in: f64,
    /// Fraction of post-burn-in samples that fell inside the bin range.
    pub coverage: f64,
    pub warnings: Vec<String>,
}

impl EmpiricalMeasure {
    /// `Σ |m_i − m'_i|` over matching bins.
    pub fn l1_distance(&self, other: &EmpiricalMeasure) -> Result<f64> {
        if self.edges != other.edges {
            return Err(invalid("bins", "histograms use different bins"));
        }
        Ok(self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// `Σ |m_i − q_i|` against reference bin masses.
    pub fn l1_to(&self, reference: &[f64]) -> Result<f64> {
        if reference.len() != self.mass.len() {
            return Err(invalid("reference", "length differs from the bin count"));
        }
        Ok(self
            .mass
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).abs())
            .sum())
    }

    /// Writes `bin_lo,bin_hi,mass`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_lo,bin_hi,mass")?;
        for (e, m) in self.edges.windows(2).zip(&self.mass) {
            writeln!(w, "{},{},{}", fmt17(e[0]), fmt17(e[1]), fmt17(*m))?;
        }
        Ok(())
    }
}

/// Options for [`time_average_measure`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MeasureOptions {
    /// Discarded initial time; `None` uses 10% of `t_max`.
    pub burn_in: Option<f64>,
    /// Run even when σ vanishes near the equilibria (recorded as a warning).
    pub allow_degenerate: bool,
}

/// Lower bound on `σ` over an interval strictly containing the three
/// equilibria, `[−1.5·w, 1.5·w]` with `w` the well position.
pub fn noise_floor(p: &PotentialParams, d: &DiffusionSpec) -> f64 {
    let w = 1.5 * p.well();
    d.inf_on(-w, w)
}

/// Occupation histogram of a single path on the grid `t_i = i·dt`,
/// counting every grid point with `t_i ≥ burn_in`.
pub fn time_average_measure(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    bins: &Bins,
    opts: &MeasureOptions,
) -> Result<EmpiricalMeasure> {
    check_inputs(p, d, x0, cfg, &StoppingRule::None)?;
    let mut warnings = Vec::new();
    let floor = noise_floor(p, d);
    if !(floor > 0.0) {
        let msg = format!("sigma is not bounded away from 0 around the equilibria (inf = {floor})");
        if !opts.allow_degenerate {
            return Err(Error::Precondition(msg));
        }
        warnings.push(msg);
    }
    let burn_in = opts.burn_in.unwrap_or(0.1 * cfg.t_max);
    if !(burn_in >= 0.0 && burn_in < cfg.t_max) {
        return Err(invalid("burn_in", "need 0 <= burn_in < t_max"));
    }
    let first = (burn_in / cfg.dt).ceil() as usize;
    let mut counts = vec![0u64; bins.n];
    let (mut inside, mut total) = (0u64, 0u64);
    let mut step = 0usize;
    let mut noise = SeededNoise::new(cfg.seed);
    let out = simulate_path(p, d, x0, cfg, &StoppingRule::None, &mut noise, |_, x| {
        if step >= first {
            total += 1;
            if let Some(i) = bins.index(x) {
                counts[i] += 1;
                inside += 1;
            }
        }
        step += 1;
    })?;
    if let Some(stop) = out.stopped {
        return Err(Error::Precondition(format!(
            "path reached the truncation radius at t = {}",
            stop.time
        )));
    }
    if inside == 0 {
        return Err(Error::Precondition(
            "no samples inside the bin range".into(),
        ));
    }
    let mass = counts.iter().map(|&c| c as f64 / inside as f64).collect();
    Ok(EmpiricalMeasure {
        edges: bins.edges(),
        mass,
        counts,
        total_time: cfg.t_max,
        burn_in,
        coverage: inside as f64 / total as f64,
        warnings,
    })
}

/// Log of the unnormalized stationary density for constant noise `s`:
/// `(2/(λ s²))·(a x²/2 − b x⁴/4)`.
///
/// This is the one-dimensional Fokker–Planck solution `∝ exp(2∫b/σ²)/σ²`,
/// used as an independent oracle for the time averages.
pub fn constant_noise_log_density(p: &PotentialParams, s: f64, x: f64) -> f64 {
    let x2 = x * x;
    2.0 / (p.lambda * s * s) * (p.a * x2 / 2.0 - p.b * x2 * x2 / 4.0)
}

/// Bin masses of the density `exp(log_density)` restricted to the bin
/// range and normalized there.
pub fn density_bin_masses<F: Fn(f64) -> f64>(log_density: F, bins: &Bins) -> Result<Vec<f64>> {
    let edges = bins.edges();
    // shift by a rough maximum to keep exp in range
    let peak = (0..=2000)
        .map(|i| log_density(bins.lo + (bins.hi - bins.lo) * i as f64 / 2000.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let f = |x: f64| (log_density(x) - peak).exp();
    let raw = edges
        .windows(2)
        .map(|e| integrate(f, e[0], e[1], 1e-12, 1e-300))
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|m| m / total).collect())
}

/// `(δ/2)r⁴ / ((δ/2)r⁴ + 2r² + σ̄² + (2−δ)r⁴)`, the lower bound on the
/// long-run fraction of time spent in `[−r, r]`.
pub fn occupancy_lower_bound(delta: f64, r: f64, sigma_bar: f64) -> Result<f64> {
    finite("delta", delta)?;
    finite("r", r)?;
    finite("sigma_bar", sigma_bar)?;
    if !(delta > 0.0 && delta < 2.0) {
        return Err(invalid("delta", "need 0 < delta < 2"));
    }
    if !(r > 2.0 / delta.sqrt()) {
        return Err(invalid("r", "need r > 2/sqrt(delta)"));
    }
    if sigma_bar < 0.0 {
        return Err(invalid("sigma_bar", "must be non-negative"));
    }
    let r2 = r * r;
    let r4 = r2 * r2;
    let num = 0.5 * delta * r4;
    Ok(num / (num + 2.0 * r2 + sigma_bar * sigma_bar + (2.0 - delta) * r4))
}

/// [`occupancy_lower_bound`] with `σ̄ = sup_{|x| ≤ r} |σ(x)|`.
pub fn occupancy_bound_for(d: &DiffusionSpec, delta: f64, r: f64) -> Result<f64> {
    occupancy_lower_bound(delta, r, d.sup_abs_on(-r, r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitSide {
    Inner,
    Outer,
    FromBelow,
    FromAbove,
    Unfinished,
}

impl ExitSide {
    pub fn as_str(self) -> &'static str {
        match self {
            ExitSide::Inner => "inner",
            ExitSide::Outer => "outer",
            ExitSide::FromBelow => "below",
            ExitSide::FromAbove => "above",
            ExitSide::Unfinished => "none",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExitStats {
    pub n_paths: usize,
    /// Mean and standard error over the finished paths.
    pub estimate: Estimate,
    pub max: f64,
    /// Paths that neither exited by `t_max` nor stopped by the rule.
    pub unfinished: usize,
    pub times: Vec<Option<f64>>,
    pub sides: Vec<ExitSide>,
    pub bound: Option<f64>,
}

impl ExitStats {
    fn from_paths(times: Vec<Option<f64>>, sides: Vec<ExitSide>, bound: Option<f64>) -> Self {
        let done: Vec<f64> = times.iter().flatten().copied().collect();
        let unfinished = times.len() - done.len();
        Self {
            n_paths: times.len(),
            estimate: Estimate::from_samples(&done),
            max: done.iter().copied().fold(f64::NAN, f64::max),
            unfinished,
            times,
            sides,
            bound,
        }
    }

    /// `mean − 2·SE ≤ bound` with every path finished; `None` without a bound.
    pub fn bound_holds(&self) -> Option<bool> {
        self.bound
            .map(|b| self.unfinished == 0 && self.estimate.lower(2.0) <= b)
    }

    /// Writes `path,exit_time,exit_side`; unfinished paths leave the time empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "path,exit_time,exit_side")?;
        for (i, (t, s)) in self.times.iter().zip(&self.sides).enumerate() {
            let t = t.map(fmt17).unwrap_or_default();
            writeln!(w, "{i},{t},{}", s.as_str())?;
        }
        Ok(())
    }
}

#[allow(clippy::too_many_arguments)]
fn run_stopped<S>(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    cfg: &SimConfig,
    rule: &StoppingRule,
    n_paths: usize,
    parallelism: usize,
    side: S,
) -> Result<(Vec<Option<f64>>, Vec<ExitSide>)>
where
    S: Fn(f64) -> ExitSide + Sync,
{
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    check_inputs(p, d, x0, cfg, rule)?;
    let out = map_paths(n_paths, parallelism, |k| {
        let mut noise = SeededNoise::new(derive_seed(cfg.seed, k as u64));
        simulate_path(p, d, x0, cfg, rule, &mut noise, |_, _| {})
    });
    let mut times = Vec::with_capacity(n_paths);
    let mut sides = Vec::with_capacity(n_paths);
    for o in out {
        match o?.stopped {
            Some(s) if s.cause == StopCause::Rule => {
                times.push(Some(s.time));
                sides.push(side(s.state));
            }
            _ => {
                times.push(None);
                sides.push(ExitSide::Unfinished);
            }
        }
    }
    Ok((times, sides))
}

/// Hitting time of the open interval `target` from `x0`.
///
/// With normalized parameters and `target = (−1−ε, 1+ε)` the bound
/// `|x0|/((1+ε)³ − (1+ε))` on the mean is attached.
#[allow(clippy::too_many_arguments)]
pub fn mean_hitting_time(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x0: f64,
    target: (f64, f64),
    cfg: &SimConfig,
    n_paths: usize,
    parallelism: usize,
) -> Result<ExitStats> {
    let (lo, hi) = target;
    let rule = StoppingRule::HitInterval { lo, hi };
    let (times, sides) = run_stopped(p, d, x0, cfg, &rule, n_paths, parallelism, |x| {
        if x0 <= lo && x > lo {
            ExitSide::FromBelow
        } else if x0 >= hi && x < hi {
            ExitSide::FromAbove
        } else {
            ExitSide::Inner
        }
    })?;
    Ok(ExitStats::from_paths(
        times,
        sides,
        hitting_bound(p, x0, target),
    ))
}

/// Mean-hitting-time bound for the symmetric interval `(−1−ε, 1+ε)`.
pub fn hitting_bound(p: &PotentialParams, x0: f64, target: (f64, f64)) -> Option<f64> {
    let (lo, hi) = target;
    if !p.is_normalized() || lo != -hi || !(hi > 1.0) {
        return None;
    }
    let e = hi;
    Some(x0.abs() / (e * e * e - e))
}

/// Bound on the mean exit time from `{ε1 < |x − x_e| < ε2}` in normalized
/// units: `(ε2−ε1)/m` at the origin and `ε2/m` at the wells, with
/// `m = min(ε1−ε1³, ε2−ε2³)`.
pub fn annulus_bound(x_e: f64, eps1: f64, eps2: f64) -> f64 {
    let m = (eps1 - eps1.powi(3)).min(eps2 - eps2.powi(3));
    if x_e == 0.0 {
        (eps2 - eps1) / m
    } else {
        eps2 / m
    }
}

/// Exit time from the annulus `{ε1 < |x − x_e| < ε2}` around an equilibrium.
#[allow(clippy::too_many_arguments)]
pub fn annulus_exit_time(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x_e: f64,
    eps1: f64,
    eps2: f64,
    x0: f64,
    cfg: &SimConfig,
    n_paths: usize,
    parallelism: usize,
) -> Result<ExitStats> {
    finite("x_e", x_e)?;
    finite("eps1", eps1)?;
    finite("eps2", eps2)?;
    let idx = p
        .equilibrium_index(x_e)
        .ok_or_else(|| Error::Precondition(format!("{x_e} is not an equilibrium")))?;
    let x_e = p.equilibria()[idx];
    let dist = (x0 - x_e).abs();
    if !(eps1 > 0.0 && eps1 < dist && dist < eps2 && eps2 < p.well()) {
        return Err(Error::Precondition(format!(
            "need 0 < eps1 < |x0 - x_e| < eps2 < {} (eps1 = {eps1}, |x0 - x_e| = {dist}, eps2 = {eps2})",
            p.well()
        )));
    }
    let rule = StoppingRule::ExitAnnulus {
        center: x_e,
        r1: eps1,
        r2: eps2,
    };
    let (times, sides) = run_stopped(p, d, x0, cfg, &rule, n_paths, parallelism, |x| {
        if (x - x_e).abs() <= eps1 {
            ExitSide::Inner
        } else {
            ExitSide::Outer
        }
    })?;
    let bound = p.is_normalized().then(|| annulus_bound(x_e, eps1, eps2));
    Ok(ExitStats::from_paths(times, sides, bound))
}
