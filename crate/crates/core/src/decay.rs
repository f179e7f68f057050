//! Concave rate functions φ, the transform `Φ_c(t) = c⁻¹∫₁ᵗ ds/φ(s)` and the
//! decay envelopes `t ↦ Φ_c⁻¹(Φ_c(v₀) − t)` it generates.
//!
//! A drift condition `L V ≤ −c·φ(V)` turns into the pathwise envelope
//! `V(X_t) ≤ Φ_c⁻¹(Φ_c(Y) − t)`; the envelopes here are reported as functions
//! of the initial value `v₀` standing in for `Y`.
//!
//! Everything is evaluated in the logarithmic variable `u = ln t` so that
//! envelopes decaying like `exp(−c·t^β)` stay representable long after
//! `exp` would underflow.

use std::io::{self, Write};

use crate::error::{finite, invalid, Error, Result};
use crate::quad::{bisect_increasing, integrate_pieces};
use crate::report::fmt17;
use crate::stats::linear_fit;

const QUAD_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum RateFunction {
    /// φ(t) = min(t, r).
    LinearCapped { r: f64 },
    /// φ(t) = β t (−ln t)^{1−1/β} on `[0, r_β]`, constant beyond.
    SuperGeometric { beta: f64, r_beta: f64 },
    /// φ(t) = min(t, r)^γ with `0 < γ < 1`.
    PowerCapped { gamma: f64, r: f64 },
    /// C¹ concave version of `base`: equal to it on `[0, r − ε]`, a
    /// quadratic blend on `(r − ε, r + ε)` and constant afterwards.
    SmoothedConcave { base: Box<RateFunction>, eps: f64 },
}

/// Largest cap keeping φ_β non-decreasing, `e^{1/β − 1}`.
pub fn max_r_beta(beta: f64) -> f64 {
    (1.0 / beta - 1.0).exp()
}

impl RateFunction {
    pub fn linear_capped(r: f64) -> Self {
        RateFunction::LinearCapped { r }
    }

    pub fn super_geometric(beta: f64, r_beta: f64) -> Self {
        RateFunction::SuperGeometric { beta, r_beta }
    }

    /// φ_β with the largest admissible cap.
    pub fn super_geometric_max(beta: f64) -> Self {
        RateFunction::SuperGeometric {
            beta,
            r_beta: max_r_beta(beta),
        }
    }

    pub fn power_capped(gamma: f64, r: f64) -> Self {
        RateFunction::PowerCapped { gamma, r }
    }

    /// Smoothing of `base` with the default width `ε = r/10`.
    pub fn smoothed(base: RateFunction) -> Self {
        let eps = base.cap() / 10.0;
        RateFunction::SmoothedConcave {
            base: Box::new(base),
            eps,
        }
    }

    /// Point after which φ is constant (before smoothing).
    pub fn cap(&self) -> f64 {
        match self {
            RateFunction::LinearCapped { r } | RateFunction::PowerCapped { r, .. } => *r,
            RateFunction::SuperGeometric { r_beta, .. } => *r_beta,
            RateFunction::SmoothedConcave { base, eps } => base.cap() + eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            RateFunction::LinearCapped { r } => {
                if !(finite("r", *r)? > 0.0) {
                    return Err(invalid("r", "must be positive"));
                }
            }
            RateFunction::SuperGeometric { beta, r_beta } => {
                finite("beta", *beta)?;
                finite("r_beta", *r_beta)?;
                if *beta <= 1.0 {
                    return Err(invalid("beta", "must exceed 1"));
                }
                if *r_beta <= 0.0 || *r_beta > max_r_beta(*beta) {
                    return Err(invalid(
                        "r_beta",
                        format!("need 0 < r_beta <= e^(1/beta-1) = {}", max_r_beta(*beta)),
                    ));
                }
            }
            RateFunction::PowerCapped { gamma, r } => {
                finite("gamma", *gamma)?;
                finite("r", *r)?;
                if *gamma <= 0.0 || *gamma >= 1.0 {
                    return Err(invalid("gamma", "need 0 < gamma < 1"));
                }
                if *r <= 0.0 {
                    return Err(invalid("r", "must be positive"));
                }
            }
            RateFunction::SmoothedConcave { base, eps } => {
                if matches!(**base, RateFunction::SmoothedConcave { .. }) {
                    return Err(invalid("base", "cannot smooth twice"));
                }
                base.validate()?;
                finite("eps", *eps)?;
                if *eps <= 0.0 || *eps >= base.cap() {
                    return Err(invalid("eps", "need 0 < eps < cap"));
                }
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match self {
            RateFunction::LinearCapped { r } => t.min(*r),
            RateFunction::SuperGeometric { beta, r_beta } => {
                let s = t.min(*r_beta);
                beta * s * (-s.ln()).powf(1.0 - 1.0 / beta)
            }
            RateFunction::PowerCapped { gamma, r } => t.min(*r).powf(*gamma),
            RateFunction::SmoothedConcave { base, eps } => {
                let (t0, v0, s0) = blend_start(base, *eps);
                if t <= t0 {
                    base.eval(t)
                } else {
                    let h = (t - t0).min(2.0 * eps);
                    v0 + s0 * h - s0 * h * h / (4.0 * eps)
                }
            }
        }
    }

    /// Derivative of φ (left derivative at kinks).
    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            RateFunction::LinearCapped { r } => {
                if t <= *r {
                    1.0
                } else {
                    0.0
                }
            }
            RateFunction::SuperGeometric { beta, r_beta } => {
                if t > *r_beta || t <= 0.0 {
                    return if t <= 0.0 { f64::INFINITY } else { 0.0 };
                }
                let l = -t.ln();
                beta * (l.powf(1.0 - 1.0 / beta) - (1.0 - 1.0 / beta) * l.powf(-1.0 / beta))
            }
            RateFunction::PowerCapped { gamma, r } => {
                if t > *r {
                    0.0
                } else {
                    gamma * t.powf(gamma - 1.0)
                }
            }
            RateFunction::SmoothedConcave { base, eps } => {
                let (t0, _, s0) = blend_start(base, *eps);
                if t <= t0 {
                    base.derivative(t)
                } else {
                    let h = (t - t0).min(2.0 * eps);
                    s0 - s0 * h / (2.0 * eps)
                }
            }
        }
    }

    /// Antiderivative of 1/φ at `s = e^u` (closed form where one exists).
    fn antiderivative_ln(&self, u: f64) -> Result<f64> {
        Ok(match self {
            RateFunction::LinearCapped { r } => {
                let lr = r.ln();
                if u <= lr {
                    u
                } else {
                    lr + (u - lr).exp_m1()
                }
            }
            RateFunction::SuperGeometric { beta, r_beta } => {
                let lr = r_beta.ln();
                let g = |v: f64| -(-v).powf(1.0 / beta);
                if u <= lr {
                    g(u)
                } else {
                    g(lr) + r_beta * (u - lr).exp_m1() / self.eval(*r_beta)
                }
            }
            RateFunction::PowerCapped { gamma, r } => {
                let lr = r.ln();
                let g = |v: f64| ((1.0 - gamma) * v).exp() / (1.0 - gamma);
                if u <= lr {
                    g(u)
                } else {
                    g(lr) + r * (u - lr).exp_m1() / r.powf(*gamma)
                }
            }
            RateFunction::SmoothedConcave { base, eps } => {
                let (t0, _, _) = blend_start(base, *eps);
                let l0 = t0.ln();
                if u <= l0 {
                    return base.antiderivative_ln(u);
                }
                let t1 = t0 + 2.0 * eps;
                let l1 = t1.ln();
                let g0 = base.antiderivative_ln(l0)?;
                let integrand = |w: f64| w.exp() / self.eval(w.exp());
                let blend = integrate_pieces(integrand, &[l0, u.min(l1)], QUAD_REL_TOL, 1e-15)?;
                if u <= l1 {
                    g0 + blend
                } else {
                    g0 + blend + t1 * (u - l1).exp_m1() / self.eval(t1)
                }
            }
        })
    }

    /// Points where 1/φ is not smooth, as `ln t`.
    fn log_kinks(&self) -> Vec<f64> {
        match self {
            RateFunction::SmoothedConcave { base, eps } => {
                let (t0, _, _) = blend_start(base, *eps);
                vec![t0.ln(), (t0 + 2.0 * eps).ln()]
            }
            other => vec![other.cap().ln()],
        }
    }
}

/// `(t0, φ(t0), φ′(t0))` at the start `t0 = r − ε` of the smoothing blend.
fn blend_start(base: &RateFunction, eps: f64) -> (f64, f64, f64) {
    let t0 = base.cap() - eps;
    (t0, base.eval(t0), base.derivative(t0))
}

/// Whether `∫ ds/φ(s)` diverges at 0 and at ∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OntoCertificate {
    pub diverges_at_zero: bool,
    pub diverges_at_infinity: bool,
}

impl OntoCertificate {
    /// Φ_c maps (0, ∞) onto ℝ.
    pub fn is_onto(&self) -> bool {
        self.diverges_at_zero && self.diverges_at_infinity
    }
}

/// Analytic divergence test per family.
///
/// Near 0: `∫ ds/s` and `∫ ds/(s(−ln s)^{1−1/β})` diverge, `∫ s^{−γ} ds`
/// converges. At ∞ every variant is eventually constant, so the integral
/// diverges linearly.
pub fn onto_check(rate: &RateFunction) -> OntoCertificate {
    let at_zero = match rate {
        RateFunction::LinearCapped { .. } | RateFunction::SuperGeometric { .. } => true,
        RateFunction::PowerCapped { .. } => false,
        RateFunction::SmoothedConcave { base, .. } => onto_check(base).diverges_at_zero,
    };
    OntoCertificate {
        diverges_at_zero: at_zero,
        diverges_at_infinity: true,
    }
}

/// A rate function together with the drift constant `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiTransform {
    pub rate: RateFunction,
    pub c: f64,
    pub onto: OntoCertificate,
}

/// Result of fitting `ln envelope(t) ≈ −rate·t^β` on the tail of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub beta: f64,
    pub rate: f64,
    /// RMS residual of the log–log fit.
    pub residual: f64,
    pub conclusive: bool,
}

/// Maximum RMS residual of the log–log tail fit for a conclusive rate.
pub const FIT_RESIDUAL_MAX: f64 = 1e-2;

impl PhiTransform {
    pub fn new(rate: RateFunction, c: f64) -> Result<Self> {
        rate.validate()?;
        finite("c", c)?;
        if c <= 0.0 {
            return Err(invalid("c", "must be positive"));
        }
        let onto = onto_check(&rate);
        Ok(Self { rate, c, onto })
    }

    /// Φ_c(e^u).
    pub fn phi_ln(&self, u: f64) -> Result<f64> {
        Ok((self.rate.antiderivative_ln(u)? - self.rate.antiderivative_ln(0.0)?) / self.c)
    }

    /// Φ_c(t) for `t > 0`.
    pub fn phi_c(&self, t: f64) -> Result<f64> {
        finite("t", t)?;
        if t <= 0.0 {
            return Err(invalid("t", "must be positive"));
        }
        self.phi_ln(t.ln())
    }

    /// Φ_c(t) by adaptive Gauss–Kronrod quadrature of `1/φ`, independent of
    /// the closed forms.
    pub fn phi_c_quadrature(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(invalid("t", "must be positive"));
        }
        let u = t.ln();
        let mut pts = vec![0.0, u];
        pts.extend(
            self.rate
                .log_kinks()
                .into_iter()
                .filter(|&k| k > u.min(0.0) && k < u.max(0.0)),
        );
        pts.sort_by(f64::total_cmp);
        if u < 0.0 {
            pts.reverse();
        }
        let integrand = |w: f64| w.exp() / self.rate.eval(w.exp());
        Ok(integrate_pieces(integrand, &pts, 1e-13, 1e-15)? / self.c)
    }

    /// Φ_c(0+), finite only when the integral converges at 0.
    pub fn phi_at_zero(&self) -> Result<f64> {
        if self.onto.diverges_at_zero {
            return Ok(f64::NEG_INFINITY);
        }
        let g0 = self.rate.antiderivative_ln(0.0)?;
        let base = match &self.rate {
            RateFunction::SmoothedConcave { base, .. } => base.as_ref(),
            other => other,
        };
        match base {
            // G(s) = s^{1−γ}/(1−γ) → 0
            RateFunction::PowerCapped { .. } => Ok(-g0 / self.c),
            _ => Ok(f64::NEG_INFINITY),
        }
    }

    fn require_onto(&self) -> Result<()> {
        if self.onto.is_onto() {
            Ok(())
        } else {
            Err(Error::NotOnto(format!("{:?}", self.onto)))
        }
    }

    /// `ln Φ_c⁻¹(y)` by bisection in the logarithmic variable.
    ///
    /// The bracket starts at `[ln 1e−30, ln 1e30]` and is grown
    /// geometrically until it contains the solution.
    pub fn phi_c_inverse_ln(&self, y: f64) -> Result<f64> {
        self.require_onto()?;
        finite("y", y)?;
        self.invert_ln(y)
    }

    fn invert_ln(&self, y: f64) -> Result<f64> {
        let f = |u: f64| self.phi_ln(u).unwrap_or(f64::NAN);
        let (mut lo, mut hi) = ((1e-30f64).ln(), (1e30f64).ln());
        while f(lo) > y {
            lo *= 2.0;
            if lo < -1e300 {
                return Err(invalid("y", "below the range of the transform"));
            }
        }
        while f(hi) < y {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(invalid("y", "above the range of the transform"));
            }
        }
        let tol = 1e-12 * y.abs().max(1.0);
        Ok(bisect_increasing(f, y, lo, hi, tol))
    }

    /// Φ_c⁻¹(y).
    pub fn phi_c_inverse(&self, y: f64) -> Result<f64> {
        Ok(self.phi_c_inverse_ln(y)?.exp())
    }

    /// `ln` of the envelope `Φ_c⁻¹(Φ_c(v0) − t)`.
    pub fn envelope_ln(&self, v0: f64, t: f64) -> Result<f64> {
        self.require_onto()?;
        check_envelope_args(v0, t)?;
        if t == 0.0 {
            return Ok(v0.ln());
        }
        self.invert_ln(self.phi_c(v0)? - t)
    }

    /// `Φ_c⁻¹(Φ_c(v0) − t)`, the decay envelope started from `v0`.
    pub fn envelope(&self, v0: f64, t: f64) -> Result<f64> {
        if t == 0.0 {
            check_envelope_args(v0, t)?;
            self.require_onto()?;
            return Ok(v0);
        }
        Ok(self.envelope_ln(v0, t)?.exp())
    }

    /// Envelope for rates whose transform is bounded below at 0: defined as
    /// above until `Φ_c(v0) − t` leaves the range, and 0 afterwards
    /// (finite-time extinction). Coincides with [`Self::envelope`] when onto.
    pub fn extinction_envelope(&self, v0: f64, t: f64) -> Result<f64> {
        check_envelope_args(v0, t)?;
        if self.onto.is_onto() {
            return self.envelope(v0, t);
        }
        if t == 0.0 {
            return Ok(v0);
        }
        let y = self.phi_c(v0)? - t;
        if y <= self.phi_at_zero()? {
            return Ok(0.0);
        }
        Ok(self.invert_ln(y)?.exp())
    }

    /// Fits `−ln envelope(t) ≈ rate·t^β` on the upper half of `t_grid`.
    pub fn asymptotic_rate(&self, v0: f64, t_grid: &[f64]) -> Result<RateFit> {
        self.require_onto()?;
        let mut pts: Vec<f64> = t_grid.iter().copied().filter(|t| *t > 0.0).collect();
        pts.sort_by(f64::total_cmp);
        let tail = &pts[pts.len() / 2..];
        let mut xs = Vec::with_capacity(tail.len());
        let mut ys = Vec::with_capacity(tail.len());
        for &t in tail {
            let neg_ln = -self.envelope_ln(v0, t)?;
            if neg_ln > 0.0 {
                xs.push(t.ln());
                ys.push(neg_ln.ln());
            }
        }
        let Some((beta, intercept, residual)) = linear_fit(&xs, &ys) else {
            return Ok(RateFit {
                beta: f64::NAN,
                rate: f64::NAN,
                residual: f64::INFINITY,
                conclusive: false,
            });
        };
        Ok(RateFit {
            beta,
            rate: intercept.exp(),
            residual,
            conclusive: xs.len() >= 3 && residual <= FIT_RESIDUAL_MAX,
        })
    }

    /// Writes `t,envelope` rows for the given grid.
    pub fn write_envelope_csv<W: Write>(&self, v0: f64, t_grid: &[f64], mut w: W) -> Result<()> {
        let io = |e: io::Error| Error::Precondition(format!("write failed: {e}"));
        writeln!(w, "t,envelope").map_err(io)?;
        for &t in t_grid {
            let e = self.extinction_envelope(v0, t)?;
            writeln!(w, "{},{}", fmt17(t), fmt17(e)).map_err(io)?;
        }
        Ok(())
    }
}

fn check_envelope_args(v0: f64, t: f64) -> Result<()> {
    finite("v0", v0)?;
    finite("t", t)?;
    if v0 <= 0.0 {
        return Err(invalid("v0", "must be positive"));
    }
    if t < 0.0 {
        return Err(invalid("t", "must be non-negative"));
    }
    Ok(())
}

/// Pointwise comparison `a(t) ≥ b(t)` on a geometric grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    pub holds: bool,
    /// Smallest grid point where `a(t) < b(t)`.
    pub crossover: Option<f64>,
}

/// Checks `rate_a ≥ rate_b` on a 4000-point geometric grid over `(lo, hi]`
/// (`lo = 0` starts the grid at `1e−12·hi`).
pub fn dominate(rate_a: &RateFunction, rate_b: &RateFunction, lo: f64, hi: f64) -> Dominance {
    const N: usize = 4000;
    let start = if lo > 0.0 { lo } else { hi * 1e-12 };
    let ratio = (hi / start).ln() / N as f64;
    let crossover = (1..=N)
        .map(|i| {
            if i == N {
                hi
            } else {
                start * (ratio * i as f64).exp()
            }
        })
        .find(|&t| {
            let (a, b) = (rate_a.eval(t), rate_b.eval(t));
            a < b - 1e-14 * b.abs()
        });
    Dominance {
        holds: crossover.is_none(),
        crossover,
    }
}
