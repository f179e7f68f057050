//! Stability classification of the equilibria, the moment-decay constant at
//! the wells with its analytic sandwich, and pointwise Lyapunov checks.
//!
//! All thresholds are stated for the normalized equation (`a = b = λ = 1`).
//! General parameters are mapped onto it with `y = x/√(a/b)`, `τ = (a/λ)t`,
//! under which the ratio `σ(x)/|x − x_e|` picks up a factor `√(λ/a)` and
//! decay constants a factor `a/λ`.

use std::f64::consts::SQRT_2;

use crate::decay::RateFunction;
use crate::error::{finite, invalid, Error, Result};
use crate::model::{DiffusionSpec, PotentialParams, Slope};
use crate::sde::{
    check_inputs, derive_seed, map_paths, simulate_path, SeededNoise, SimConfig, StoppingRule,
};
use crate::stats::{linear_fit, Estimate};

/// Largest |σ(x_e)| accepted as a degenerate root.
pub const ROOT_TOL: f64 = 1e-12;

const KAPPA_LEVELS: usize = 40;
const KAPPA_STEP: f64 = 1e-3;

/// Upper and lower limits of `σ(x)/|x − x_e|` at the root, with the
/// per-radius grid values used as a cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct KappaEstimate {
    pub limsup_at_root: f64,
    pub liminf_at_root: f64,
    /// `ε_k = 2^{−k}`, `k = 1..=40`.
    pub eps_grid: Vec<f64>,
    /// Sup of the ratio over `0 < |x − x_e| < ε_k` on the sample grid.
    pub per_eps_sup: Vec<f64>,
    /// Inf of the ratio over the same sets.
    pub per_eps_inf: Vec<f64>,
}

impl KappaEstimate {
    /// Grid values at the smallest radius.
    pub fn grid_tail(&self) -> (f64, f64) {
        (
            self.per_eps_sup.last().copied().unwrap_or(f64::NAN),
            self.per_eps_inf.last().copied().unwrap_or(f64::NAN),
        )
    }
}

fn require_degenerate(d: &DiffusionSpec, x_e: f64) -> Result<()> {
    let s = d.sigma(x_e);
    if s.abs() > ROOT_TOL {
        return Err(Error::Precondition(format!(
            "sigma does not vanish at x_e = {x_e} (sigma = {s})"
        )));
    }
    Ok(())
}

/// Limits of `σ(x)/|x − x_e|` as `x → x_e`.
///
/// The limits come from the family's closed form. The grid samples
/// `u = 0.5·e^{−j·10⁻³}` on both sides of the root down to below
/// `2^{−40}·e^{−13}`, and `per_eps_*` are running sup/inf over the nested
/// sets, so they are monotone in `k` by construction.
pub fn kappa_at_root(d: &DiffusionSpec, x_e: f64) -> Result<KappaEstimate> {
    d.validate()?;
    finite("x_e", x_e)?;
    require_degenerate(d, x_e)?;

    let (ls_r, li_r) = d.root_ratio_limits(x_e, 1.0);
    let (ls_l, li_l) = d.root_ratio_limits(x_e, -1.0);

    let u_min = 2f64.powi(-(KAPPA_LEVELS as i32)) * (-13.0f64).exp();
    let n = ((0.5 / u_min).ln() / KAPPA_STEP).ceil() as usize + 1;
    let ratio = |u: f64| {
        let r = d.sigma_offset(x_e, u) / u;
        let l = d.sigma_offset(x_e, -u) / u;
        (r.max(l), r.min(l))
    };
    // suffix sup/inf from the smallest offsets outwards
    let mut sup = vec![0.0; n];
    let mut inf = vec![0.0; n];
    let (mut s, mut i) = (f64::NEG_INFINITY, f64::INFINITY);
    for j in (0..n).rev() {
        let (hi, lo) = ratio(0.5 * (-(j as f64) * KAPPA_STEP).exp());
        s = s.max(hi);
        i = i.min(lo);
        sup[j] = s;
        inf[j] = i;
    }
    let mut eps_grid = Vec::with_capacity(KAPPA_LEVELS);
    let mut per_eps_sup = Vec::with_capacity(KAPPA_LEVELS);
    let mut per_eps_inf = Vec::with_capacity(KAPPA_LEVELS);
    for k in 1..=KAPPA_LEVELS {
        let eps = 2f64.powi(-(k as i32));
        // first j with 0.5·e^{−jh} < ε
        let mut j = (((k - 1) as f64) * std::f64::consts::LN_2 / KAPPA_STEP).floor() as usize;
        while j < n && 0.5 * (-(j as f64) * KAPPA_STEP).exp() >= eps {
            j += 1;
        }
        let j = j.min(n - 1);
        eps_grid.push(eps);
        per_eps_sup.push(sup[j]);
        per_eps_inf.push(inf[j]);
    }
    Ok(KappaEstimate {
        limsup_at_root: ls_r.max(ls_l),
        liminf_at_root: li_r.min(li_l),
        eps_grid,
        per_eps_sup,
        per_eps_inf,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityCase {
    UnstableBelowSqrt2,
    UnstableCriticalLinear,
    AsymptoticallyStableInProb,
    StableNondegenerateWell,
    Inconclusive,
}

impl StabilityCase {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityCase::UnstableBelowSqrt2 => "UnstableBelowSqrt2",
            StabilityCase::UnstableCriticalLinear => "UnstableCriticalLinear",
            StabilityCase::AsymptoticallyStableInProb => "AsymptoticallyStableInProb",
            StabilityCase::StableNondegenerateWell => "StableNondegenerateWell",
            StabilityCase::Inconclusive => "Inconclusive",
        }
    }

    pub fn is_definitive(self) -> bool {
        self != StabilityCase::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    Kappa(KappaEstimate),
    Decay(DecayRate),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityVerdict {
    pub case: StabilityCase,
    pub evidence: Evidence,
    pub x_e: f64,
}

/// Classifies the equilibrium `x_e` of the process.
///
/// At the origin the limits of `σ(x)/|x|` (rescaled to the normalized
/// equation) are compared with √2; the critical case is recognised only
/// from the family structure (`Slope::Sqrt2` with `a = λ`). At the wells
/// the verdict is always stable and the evidence is the `α = 1` decay rate.
pub fn classify(p: &PotentialParams, d: &DiffusionSpec, x_e: f64) -> Result<StabilityVerdict> {
    d.validate()?;
    finite("x_e", x_e)?;
    let idx = p
        .equilibrium_index(x_e)
        .ok_or_else(|| Error::Precondition(format!("{x_e} is not an equilibrium of the drift")))?;
    let x_e = p.equilibria()[idx];
    require_degenerate(d, x_e)?;
    if idx != 1 {
        let rate = decay_rate(p, d, x_e, 1.0)?;
        return Ok(StabilityVerdict {
            case: StabilityCase::StableNondegenerateWell,
            evidence: Evidence::Decay(rate),
            x_e,
        });
    }
    let kappa = kappa_at_root(d, x_e)?;
    let structural = matches!(
        d,
        DiffusionSpec::LinearAtRoot {
            kappa: Slope::Sqrt2,
            ..
        }
    ) && p.a == p.lambda;
    let case = if structural {
        StabilityCase::UnstableCriticalLinear
    } else {
        let scale = if p.a == p.lambda {
            1.0
        } else {
            (p.lambda / p.a).sqrt()
        };
        if kappa.limsup_at_root * scale < SQRT_2 {
            StabilityCase::UnstableBelowSqrt2
        } else if kappa.liminf_at_root * scale > SQRT_2 {
            StabilityCase::AsymptoticallyStableInProb
        } else {
            StabilityCase::Inconclusive
        }
    };
    Ok(StabilityVerdict {
        case,
        evidence: Evidence::Kappa(kappa),
        x_e,
    })
}

/// Bounds on `c/α`, in the same time units as `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayBounds {
    pub lower: f64,
    pub upper: f64,
}

impl DecayBounds {
    pub fn contains(&self, v: f64) -> bool {
        let tol = 1e-12 * v.abs().max(1.0);
        v >= self.lower - tol && v <= self.upper + tol
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayRate {
    pub alpha: f64,
    /// `α·min(grid_inf, tail_inf)`; `c ≤ 0` means no exponential certificate.
    pub c: f64,
    /// Infimum of `g` over the grid on `(1, R]` including the limit at the root.
    pub grid_inf: f64,
    /// Analytic lower bound of `g` beyond `R`.
    pub tail_inf: f64,
    pub tail_radius: f64,
    pub analytic_bounds: Option<DecayBounds>,
}

impl DecayRate {
    pub fn certified(&self) -> bool {
        self.c > 0.0
    }
}

const DECAY_GRID: usize = 100_000;
const DECAY_DELTA_MIN: f64 = 1e-9;

/// Geometric offsets `w − 1` from `1e−9` to `R − 1`.
fn offsets(r: f64) -> impl Iterator<Item = f64> {
    let hi = r - 1.0;
    let q = (hi / DECAY_DELTA_MIN).ln() / (DECAY_GRID - 1) as f64;
    (0..DECAY_GRID).map(move |i| {
        if i + 1 == DECAY_GRID {
            hi
        } else {
            DECAY_DELTA_MIN * (q * i as f64).exp()
        }
    })
}

/// Decay constant of `E|X_t − x_e|^α` at a well.
///
/// Minimizes `g(w) = w(w+1) − (α−1)/2·σ̃(w)²/(w−1)²` over `w = x·x_e > 1` in
/// normalized units: a geometric grid on `(1, R]` together with the exact
/// limit at `w → 1` from the family's root slopes, and a quadratic lower
/// bound on `[R, ∞)` from `σ ≤ A x² + B`. `R` starts at 16 and doubles until
/// the tail bound no longer undercuts the grid.
pub fn decay_rate(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x_e: f64,
    alpha: f64,
) -> Result<DecayRate> {
    d.validate()?;
    finite("alpha", alpha)?;
    if alpha <= 0.0 {
        return Err(invalid("alpha", "must be positive"));
    }
    let idx = p.equilibrium_index(x_e);
    if !matches!(idx, Some(0) | Some(2)) {
        return Err(Error::Precondition(format!(
            "{x_e} is not a well of the drift"
        )));
    }
    let x_e = p.equilibria()[idx.unwrap_or(2)];
    require_degenerate(d, x_e)?;

    let s = p.well();
    let dir = x_e.signum();
    let ts = p.time_scale();
    let scale = (p.lambda / p.a).sqrt() / s;
    // σ(x)/|x − x_e| → σ̃(w)/(w − 1)
    let rscale = s * scale;
    let k1 = alpha - 1.0;

    let tail = d.tail_ratio() * s * s * scale;
    if k1 > 0.0 && !(0.5 * k1 * tail * tail < 1.0) {
        return Err(Error::Precondition(format!(
            "tail growth {tail} too steep for alpha = {alpha}: need limsup sigma/x^2 < sqrt(2/(alpha-1))"
        )));
    }

    let ratio = |delta: f64| d.sigma_offset(x_e, dir * s * delta) * scale / delta;
    let g = |w: f64, r: f64| w * (w + 1.0) - 0.5 * k1 * r * r;

    let (ls, li) = d.root_ratio_limits(x_e, dir);
    let boundary = if k1 == 0.0 {
        2.0
    } else if k1 > 0.0 {
        g(1.0, ls * rscale)
    } else {
        g(1.0, li * rscale)
    };

    let tail_bound = |r: f64| -> Result<f64> {
        if k1 <= 0.0 {
            return Ok(r * (r + 1.0));
        }
        let (a, b) = d
            .quadratic_tail_bound(s * r)
            .ok_or_else(|| Error::Precondition("sigma grows faster than quadratically".into()))?;
        let (a, b) = (a * s * s * scale, b * scale);
        let k = k1 / (2.0 * (1.0 - 1.0 / r).powi(2));
        let a2 = 1.0 - k * a * a;
        if a2 <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let a1 = 1.0 - 2.0 * k * a * b / r;
        let a0 = -k * b * b / (r * r);
        let w = r.max(-a1 / (2.0 * a2));
        Ok(a2 * w * w + a1 * w + a0)
    };

    let mut r = 16.0f64;
    let (grid_inf, tail_inf) = loop {
        let grid_inf = offsets(r)
            .map(|dl| g(1.0 + dl, ratio(dl)))
            .fold(boundary, f64::min);
        let tail_inf = tail_bound(r)?;
        if tail_inf >= grid_inf {
            break (grid_inf, tail_inf);
        }
        r *= 2.0;
        if r > 2f64.powi(60) {
            return Err(Error::Precondition("tail bound does not close".into()));
        }
    };
    let c = alpha * grid_inf.min(tail_inf);

    let analytic_bounds =
        decay_bounds(d, x_e, alpha, r, &ratio, rscale, tail).map(|b| DecayBounds {
            lower: b.lower * ts,
            upper: b.upper * ts,
        });

    Ok(DecayRate {
        alpha,
        c: c * ts,
        grid_inf: grid_inf * ts,
        tail_inf: tail_inf * ts,
        tail_radius: r * s,
        analytic_bounds,
    })
}

/// Sandwich on `c/α` in normalized units, when one applies.
fn decay_bounds(
    d: &DiffusionSpec,
    x_e: f64,
    alpha: f64,
    radius: f64,
    ratio: &dyn Fn(f64) -> f64,
    rscale: f64,
    tail: f64,
) -> Option<DecayBounds> {
    let (ls_r, _) = d.root_ratio_limits(x_e, 1.0);
    let (ls_l, _) = d.root_ratio_limits(x_e, -1.0);
    if alpha <= 1.0 {
        let kappa = ls_r.max(ls_l) * rscale;
        return Some(DecayBounds {
            lower: 2.0,
            upper: 2.0 + (1.0 - alpha) * kappa * kappa / 2.0,
        });
    }
    // ρ(w) bounds σ̃ by θ·(w−1)·w on w ≥ r
    let theta = if alpha <= 2.0 {
        SQRT_2
    } else {
        (2.0 / (alpha - 1.0)).sqrt()
    };
    if tail >= theta {
        return None;
    }
    let mut r = 2.0f64;
    for dl in offsets(radius) {
        let w = 1.0 + dl;
        if w >= 2.0 && ratio(dl) > theta * w {
            r = r.max(w);
        }
    }
    let dir = x_e.signum();
    let (ls, _) = d.root_ratio_limits(x_e, dir);
    let beta = offsets(radius)
        .take_while(|&dl| 1.0 + dl <= r)
        .map(ratio)
        .fold(ls * rscale, f64::max);
    if beta >= 2.0 / (alpha - 1.0).sqrt() {
        return None;
    }
    Some(DecayBounds {
        lower: 2.0 - (alpha - 1.0) * beta * beta / 2.0,
        upper: 2.0,
    })
}

/// Monte Carlo estimate of `E|X_t − x_e|^α` against `|x0 − x_e|^α e^{−ct}`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentDecayReport {
    pub c: f64,
    pub times: Vec<f64>,
    pub estimates: Vec<Estimate>,
    pub bounds: Vec<f64>,
    /// Times where `estimate − 2·SE > bound`.
    pub flagged: Vec<f64>,
    pub truncated: usize,
}

impl MomentDecayReport {
    pub fn pass(&self) -> bool {
        self.flagged.is_empty()
    }
}

fn grid_index(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// Checks the moment bound at the given times with `n_paths` paths.
///
/// `cfg.t_max` is replaced by the largest requested time; the other
/// settings (step, scheme, seed, truncation) are used as given.
#[allow(clippy::too_many_arguments)]
pub fn moment_decay_check(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x_e: f64,
    alpha: f64,
    x0: f64,
    times: &[f64],
    n_paths: usize,
    cfg: &SimConfig,
    parallelism: usize,
) -> Result<MomentDecayReport> {
    if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err(invalid("times", "need at least one positive finite time"));
    }
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    let rate = decay_rate(p, d, x_e, alpha)?;
    let s = p.well();
    if x0 * x_e < s * s * (1.0 - 1e-12) {
        return Err(Error::Precondition(format!(
            "need x0 on the outer side of the well (x0 = {x0}, x_e = {x_e})"
        )));
    }
    if !rate.certified() {
        return Err(Error::Precondition(format!(
            "no exponential certificate at alpha = {alpha}"
        )));
    }
    let t_max = times.iter().copied().fold(0.0, f64::max);
    let mut cfg = *cfg;
    cfg.t_max = t_max;
    if cfg.dt >= t_max {
        cfg.t_max = cfg.dt * 2.0;
    }
    check_inputs(p, d, x0, &cfg, &StoppingRule::None)?;
    let idx: Vec<usize> = times.iter().map(|&t| grid_index(t, cfg.dt)).collect();

    let per_path = map_paths(n_paths, parallelism, |k| -> Result<(Vec<f64>, bool)> {
        let mut noise = SeededNoise::new(derive_seed(cfg.seed, k as u64));
        let mut vals = vec![f64::NAN; idx.len()];
        let mut step = 0usize;
        let mut last = x0;
        let out = simulate_path(p, d, x0, &cfg, &StoppingRule::None, &mut noise, |_, x| {
            for (v, &i) in vals.iter_mut().zip(&idx) {
                if i == step {
                    *v = (x - x_e).abs().powf(alpha);
                }
            }
            last = x;
            step += 1;
        })?;
        for v in vals.iter_mut().filter(|v| v.is_nan()) {
            *v = (last - x_e).abs().powf(alpha);
        }
        Ok((vals, out.stopped.is_some()))
    });
    let per_path = per_path.into_iter().collect::<Result<Vec<_>>>()?;
    let truncated = per_path.iter().filter(|(_, t)| *t).count();

    let v0 = (x0 - x_e).abs().powf(alpha);
    let mut estimates = Vec::with_capacity(times.len());
    let mut bounds = Vec::with_capacity(times.len());
    let mut flagged = Vec::new();
    for (j, &t) in times.iter().enumerate() {
        let col: Vec<f64> = per_path.iter().map(|(v, _)| v[j]).collect();
        let e = Estimate::from_samples(&col);
        let b = v0 * (-rate.c * t).exp();
        if e.lower(2.0) > b {
            flagged.push(t);
        }
        estimates.push(e);
        bounds.push(b);
    }
    Ok(MomentDecayReport {
        c: rate.c,
        times: times.to_vec(),
        estimates,
        bounds,
        flagged,
        truncated,
    })
}

/// Per-path least-squares slopes of `ln|X_t − x_e|` against `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExponentCheck {
    /// `−c/α + 0.1`.
    pub threshold: f64,
    pub slopes: Vec<f64>,
    pub passed: usize,
}

impl ExponentCheck {
    /// Majority of paths have slope at or below the threshold.
    pub fn majority(&self) -> bool {
        2 * self.passed > self.slopes.len()
    }
}

/// Distance below which `ln|X_t − x_e|` is dominated by rounding.
pub const EXPONENT_FLOOR: f64 = 1e-12;

/// Fits the almost-sure exponential rate on single paths started at `x0`.
///
/// Each fit uses the grid points before the distance first drops below
/// [`EXPONENT_FLOOR`].
#[allow(clippy::too_many_arguments)]
pub fn lyapunov_exponent_check(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x_e: f64,
    alpha: f64,
    x0: f64,
    cfg: &SimConfig,
    n_paths: usize,
    parallelism: usize,
) -> Result<ExponentCheck> {
    if n_paths == 0 {
        return Err(invalid("n_paths", "must be at least 1"));
    }
    let rate = decay_rate(p, d, x_e, alpha)?;
    if !rate.certified() {
        return Err(Error::Precondition(format!(
            "no exponential certificate at alpha = {alpha}"
        )));
    }
    check_inputs(p, d, x0, cfg, &StoppingRule::None)?;
    let threshold = -rate.c / alpha + 0.1;
    let slopes = map_paths(n_paths, parallelism, |k| -> Result<f64> {
        let mut noise = SeededNoise::new(derive_seed(cfg.seed, k as u64));
        let (mut ts, mut ys) = (Vec::new(), Vec::new());
        let mut live = true;
        simulate_path(p, d, x0, cfg, &StoppingRule::None, &mut noise, |t, x| {
            let dist = (x - x_e).abs();
            if live && dist > EXPONENT_FLOOR {
                ts.push(t);
                ys.push(dist.ln());
            } else {
                live = false;
            }
        })?;
        Ok(linear_fit(&ts, &ys).map_or(f64::NAN, |f| f.0))
    });
    let slopes = slopes.into_iter().collect::<Result<Vec<_>>>()?;
    let passed = slopes.iter().filter(|s| **s <= threshold).count();
    Ok(ExponentCheck {
        threshold,
        slopes,
        passed,
    })
}

/// Fraction of paths from `x0` that reach `|X − x_e| ≥ eps` by `cfg.t_max`.
#[allow(clippy::too_many_arguments)]
pub fn exceedance_probability(
    p: &PotentialParams,
    d: &DiffusionSpec,
    x_e: f64,
    x0: f64,
    eps: f64,
    cfg: &SimConfig,
    n_paths: usize,
    parallelism: usize,
) -> Result<Estimate> {
    finite("eps", eps)?;
    if eps <= 0.0 {
        return Err(invalid("eps", "must be positive"));
    }
    let rule = StoppingRule::ExitInterval {
        lo: x_e - eps,
        hi: x_e + eps,
    };
    let batch = crate::sde::run_batch(p, d, x0, cfg, &rule, n_paths, x_e, parallelism)?;
    let hits = batch.paths.iter().filter(|s| s.stopped.is_some()).count();
    Ok(Estimate::proportion(hits, n_paths))
}

/// `V` and `L V` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovSample {
    pub v: f64,
    pub lv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftCheck {
    pub pass: bool,
    /// `max (LV + c·φ(V))` over the samples.
    pub worst_margin: f64,
    pub worst_index: usize,
}

/// Checks `L V ≤ −c·φ(V)` at every sample.
pub fn lyapunov_drift_check(
    samples: &[LyapunovSample],
    rate: &RateFunction,
    c: f64,
) -> Result<DriftCheck> {
    rate.validate()?;
    finite("c", c)?;
    if c <= 0.0 {
        return Err(invalid("c", "must be positive"));
    }
    if samples.is_empty() {
        return Err(invalid("samples", "empty"));
    }
    let mut worst = (f64::NEG_INFINITY, 0usize);
    for (i, s) in samples.iter().enumerate() {
        if !(s.v > 0.0) || !s.lv.is_finite() {
            return Err(invalid(
                "samples",
                format!("sample {i} needs V > 0 and finite LV"),
            ));
        }
        let m = s.lv + c * rate.eval(s.v);
        if m > worst.0 {
            worst = (m, i);
        }
    }
    Ok(DriftCheck {
        pass: worst.0 <= 0.0,
        worst_margin: worst.0,
        worst_index: worst.1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignCheck {
    pub pass: bool,
    /// `sgn(u)·b ≤ −c|u|^γ` on `0 < |u| ≤ r`.
    pub near: bool,
    /// `sgn(u)·b ≤ −c r^γ` on `|u| ≥ r`.
    pub far: bool,
    /// Point with the largest violation, if any.
    pub worst_x: Option<f64>,
}

const SIGN_GRID: usize = 2000;

/// Grid check of the Hölder sign conditions on the drift `b` around `x_e`:
/// near the root on `r·[10⁻¹², 1]` and away from it on `r·[1, 10⁴]`, both
/// sides, geometric spacing.
pub fn sign_condition_check<B: Fn(f64) -> f64>(
    b: B,
    x_e: f64,
    c: f64,
    r: f64,
    gamma: f64,
) -> Result<SignCheck> {
    finite("x_e", x_e)?;
    for (name, v) in [("c", c), ("r", r)] {
        if !(finite(name, v)? > 0.0) {
            return Err(invalid(name, "must be positive"));
        }
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(invalid("gamma", "need 0 < gamma < 1"));
    }
    let geo = |lo: f64, hi: f64| {
        let q = (hi / lo).ln() / (SIGN_GRID - 1) as f64;
        (0..SIGN_GRID).map(move |i| lo * (q * i as f64).exp())
    };
    let mut worst: Option<(f64, f64)> = None;
    let mut note = |x: f64, excess: f64| {
        if excess > 0.0 && worst.is_none_or(|(_, e)| excess > e) {
            worst = Some((x, excess));
        }
    };
    let mut near = true;
    for u in geo(r * 1e-12, r) {
        let bound = c * u.powf(gamma);
        for side in [1.0, -1.0] {
            let x = x_e + side * u;
            let lhs = side * b(x);
            let excess = lhs + bound - 1e-12 * bound;
            if excess > 0.0 {
                near = false;
                note(x, excess / bound);
            }
        }
    }
    let mut far = true;
    let bound = c * r.powf(gamma);
    for u in geo(r, r * 1e4) {
        for side in [1.0, -1.0] {
            let x = x_e + side * u;
            let excess = side * b(x) + bound - 1e-12 * bound;
            if excess > 0.0 {
                far = false;
                note(x, excess / bound);
            }
        }
    }
    Ok(SignCheck {
        pass: near && far,
        near,
        far,
        worst_x: worst.map(|w| w.0),
    })
}
