//! Double-well drift, diffusion-coefficient families, the generator and the
//! closed-form noiseless flow.
//!
//! The process is `dX = b(X) dt + σ(X) dB` with drift
//! `b(x) = (a·x − b·x³) / λ`, i.e. the overdamped motion in the Landau
//! potential `V(x) = −a x²/2 + b x⁴/4`. The diffusion coefficient is drawn
//! from a small set of closed-form families so that local Lipschitz
//! continuity and the quadratic tail growth condition
//! `limsup |σ(x)|/x² < √2` can be certified instead of assumed.

use std::f64::consts::SQRT_2;

use crate::error::{finite, invalid, Result};

/// Coefficients of the double-well drift `(a x − b x³)/λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialParams {
    pub a: f64,
    pub b: f64,
    pub lambda: f64,
}

impl Default for PotentialParams {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            lambda: 1.0,
        }
    }
}

impl PotentialParams {
    pub fn new(a: f64, b: f64, lambda: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("lambda", lambda)] {
            finite(name, v)?;
            if v <= 0.0 {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self { a, b, lambda })
    }

    /// `a = b = λ = 1`, the normalization used by all the analytic bounds.
    pub fn is_normalized(&self) -> bool {
        self.a == 1.0 && self.b == 1.0 && self.lambda == 1.0
    }

    /// Position of the right well, `√(a/b)`.
    pub fn well(&self) -> f64 {
        if self.a == self.b {
            1.0
        } else {
            (self.a / self.b).sqrt()
        }
    }

    /// The three zeros of the drift, in increasing order.
    pub fn equilibria(&self) -> [f64; 3] {
        let w = self.well();
        [-w, 0.0, w]
    }

    /// Time scale `a/λ` that maps the process onto the normalized one.
    pub fn time_scale(&self) -> f64 {
        self.a / self.lambda
    }

    /// Returns the equilibrium `x` matches, if any (tolerance `1e-12` relative).
    pub fn equilibrium_index(&self, x: f64) -> Option<usize> {
        let tol = 1e-12 * self.well().max(1.0);
        self.equilibria().iter().position(|&e| (x - e).abs() <= tol)
    }

    pub fn drift(&self, x: f64) -> f64 {
        let w = self.well();
        if x == 0.0 || x.abs() == w {
            return 0.0;
        }
        x * (self.a - self.b * x * x) / self.lambda
    }
}

/// Free function form of [`PotentialParams::drift`].
pub fn drift(p: &PotentialParams, x: f64) -> f64 {
    p.drift(x)
}

/// Linear coefficient of [`DiffusionSpec::LinearAtRoot`].
///
/// `Sqrt2` is the exact critical coefficient. It is kept symbolic because
/// the critical case is a structural property of the family; no float
/// compares equal to √2 in a meaningful way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slope {
    Value(f64),
    Sqrt2,
}

impl Slope {
    pub fn value(self) -> f64 {
        match self {
            Slope::Value(v) => v,
            Slope::Sqrt2 => SQRT_2,
        }
    }
}

impl From<f64> for Slope {
    fn from(v: f64) -> Self {
        Slope::Value(v)
    }
}

/// Closed-form families for the diffusion coefficient σ.
#[derive(Debug, Clone, PartialEq)]
pub enum DiffusionSpec {
    /// σ(x) = s.
    Constant { s: f64 },
    /// σ(x) = κ·min(|x − x_e|, cap).
    LinearAtRoot { x_e: f64, kappa: Slope, cap: f64 },
    /// σ(x) = |u|·(m + h·sin(ln|u|)) with u = x − x_e, m = (hi+lo)/2,
    /// h = (hi−lo)/2, frozen at its value on |u| = cap beyond the cap.
    ///
    /// The ratio σ(x)/|x − x_e| oscillates between `lo` and `hi` on every
    /// neighbourhood of `x_e`, so the upper and lower limits at the root
    /// differ while σ stays Lipschitz.
    Oscillatory {
        x_e: f64,
        lo: f64,
        hi: f64,
        cap: f64,
    },
    /// σ(x) = |Σ c_k x^k| with `coeffs[k] = c_k`.
    PolynomialBounded { coeffs: Vec<f64> },
    /// σ = |piecewise-linear interpolant|, constant outside the knot range.
    TabulatedLipschitz { knots: Vec<f64>, values: Vec<f64> },
}

/// Outcome of checking local Lipschitz continuity and the tail condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionReport {
    pub a1: bool,
    /// `√2 − limsup |σ(x)|/x²`; `−∞` for super-quadratic growth.
    pub a2_margin: f64,
}

impl AssumptionReport {
    pub fn admissible(&self) -> bool {
        self.a1 && self.a2_margin > 0.0
    }
}

impl DiffusionSpec {
    pub fn constant(s: f64) -> Self {
        DiffusionSpec::Constant { s }
    }

    pub fn linear_at_root(x_e: f64, kappa: f64, cap: f64) -> Self {
        DiffusionSpec::LinearAtRoot {
            x_e,
            kappa: Slope::Value(kappa),
            cap,
        }
    }

    /// σ(x) = √2·min(|x − x_e|, cap), the structurally critical family.
    pub fn critical_linear(x_e: f64, cap: f64) -> Self {
        DiffusionSpec::LinearAtRoot {
            x_e,
            kappa: Slope::Sqrt2,
            cap,
        }
    }

    pub fn oscillatory(x_e: f64, lo: f64, hi: f64, cap: f64) -> Self {
        DiffusionSpec::Oscillatory { x_e, lo, hi, cap }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        DiffusionSpec::PolynomialBounded { coeffs }
    }

    pub fn tabulated(knots: Vec<f64>, values: Vec<f64>) -> Self {
        DiffusionSpec::TabulatedLipschitz { knots, values }
    }

    /// Checks the family parameters.
    pub fn validate(&self) -> Result<()> {
        match self {
            DiffusionSpec::Constant { s } => {
                finite("s", *s)?;
                if *s < 0.0 {
                    return Err(invalid("s", "must be non-negative"));
                }
            }
            DiffusionSpec::LinearAtRoot { x_e, kappa, cap } => {
                finite("x_e", *x_e)?;
                let k = finite("kappa", kappa.value())?;
                if k < 0.0 {
                    return Err(invalid("kappa", "must be non-negative"));
                }
                finite("cap", *cap)?;
                if *cap <= 0.0 {
                    return Err(invalid("cap", "must be positive"));
                }
            }
            DiffusionSpec::Oscillatory { x_e, lo, hi, cap } => {
                finite("x_e", *x_e)?;
                finite("lo", *lo)?;
                finite("hi", *hi)?;
                finite("cap", *cap)?;
                if *lo < 0.0 || lo > hi {
                    return Err(invalid("lo", "need 0 <= lo <= hi"));
                }
                if *cap <= 0.0 {
                    return Err(invalid("cap", "must be positive"));
                }
            }
            DiffusionSpec::PolynomialBounded { coeffs } => {
                if coeffs.is_empty() {
                    return Err(invalid("coeffs", "at least one coefficient required"));
                }
                for &c in coeffs {
                    finite("coeffs", c)?;
                }
            }
            DiffusionSpec::TabulatedLipschitz { knots, values } => {
                if knots.is_empty() || knots.len() != values.len() {
                    return Err(invalid(
                        "knots",
                        "knots and values must be non-empty and of equal length",
                    ));
                }
                for (&k, &v) in knots.iter().zip(values) {
                    finite("knots", k)?;
                    finite("values", v)?;
                }
                if knots.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("knots", "must be strictly increasing"));
                }
            }
        }
        Ok(())
    }

    pub fn sigma(&self, x: f64) -> f64 {
        match self {
            DiffusionSpec::Constant { s } => *s,
            DiffusionSpec::LinearAtRoot { x_e, kappa, cap } => {
                kappa.value() * (x - x_e).abs().min(*cap)
            }
            DiffusionSpec::Oscillatory { x_e, lo, hi, cap } => oscillatory(x - x_e, *lo, *hi, *cap),
            DiffusionSpec::PolynomialBounded { coeffs } => horner(coeffs, x).abs(),
            DiffusionSpec::TabulatedLipschitz { knots, values } => {
                interpolate(knots, values, x, 0.0).abs()
            }
        }
    }

    /// σ(base + d), evaluated without first rounding `base + d`.
    ///
    /// Near a root away from the origin `base + d` collapses onto `base`
    /// once `|d|` drops below an ulp of `base`; the offset form keeps the
    /// ratio σ/|d| meaningful down to subnormal offsets.
    pub fn sigma_offset(&self, base: f64, d: f64) -> f64 {
        match self {
            DiffusionSpec::Constant { s } => *s,
            DiffusionSpec::LinearAtRoot { x_e, kappa, cap } => {
                kappa.value() * ((base - x_e) + d).abs().min(*cap)
            }
            DiffusionSpec::Oscillatory { x_e, lo, hi, cap } => {
                oscillatory((base - x_e) + d, *lo, *hi, *cap)
            }
            DiffusionSpec::PolynomialBounded { coeffs } => {
                horner(&taylor_shift(coeffs, base), d).abs()
            }
            DiffusionSpec::TabulatedLipschitz { knots, values } => {
                interpolate(knots, values, base, d).abs()
            }
        }
    }

    /// Closed-form derivative of σ, used by the Milstein correction.
    ///
    /// At kinks the one-sided derivative pointing away from the family's
    /// root is returned (for `LinearAtRoot` at `|x − x_e| = cap` that is the
    /// flat outer side).
    pub fn sigma_prime(&self, x: f64) -> f64 {
        match self {
            DiffusionSpec::Constant { .. } => 0.0,
            DiffusionSpec::LinearAtRoot { x_e, kappa, cap } => {
                let u = x - x_e;
                if u.abs() >= *cap {
                    0.0
                } else if u < 0.0 {
                    -kappa.value()
                } else {
                    kappa.value()
                }
            }
            DiffusionSpec::Oscillatory { x_e, lo, hi, cap } => {
                let u = x - x_e;
                if u == 0.0 || u.abs() >= *cap {
                    return 0.0;
                }
                let (m, h) = ((hi + lo) / 2.0, (hi - lo) / 2.0);
                let l = u.abs().ln();
                let slope = m + h * (l.sin() + l.cos());
                slope * u.signum()
            }
            DiffusionSpec::PolynomialBounded { coeffs } => {
                let p = horner(coeffs, x);
                let dp = horner(&derivative(coeffs), x);
                if p < 0.0 {
                    -dp
                } else {
                    dp
                }
            }
            DiffusionSpec::TabulatedLipschitz { knots, values } => {
                let n = knots.len();
                if n < 2 || x < knots[0] || x >= knots[n - 1] {
                    return 0.0;
                }
                let i = segment(knots, x);
                let slope = (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
                if interpolate(knots, values, x, 0.0) < 0.0 {
                    -slope
                } else {
                    slope
                }
            }
        }
    }

    /// `limsup_{|x|→∞} |σ(x)|/x²`, read off the family's closed form.
    pub fn tail_ratio(&self) -> f64 {
        match self {
            DiffusionSpec::PolynomialBounded { coeffs } => match effective_degree(coeffs) {
                Some(d) if d > 2 => f64::INFINITY,
                Some(2) => coeffs[2].abs(),
                _ => 0.0,
            },
            _ => 0.0,
        }
    }

    /// Constants `(A, B)` with `σ(x) ≤ A·x² + B` for `|x| ≥ radius ≥ 1`, or
    /// `None` when σ grows faster than quadratically.
    pub fn quadratic_tail_bound(&self, radius: f64) -> Option<(f64, f64)> {
        let radius = radius.max(1.0);
        match self {
            DiffusionSpec::Constant { s } => Some((0.0, *s)),
            DiffusionSpec::LinearAtRoot { kappa, cap, .. } => Some((0.0, kappa.value() * cap)),
            DiffusionSpec::Oscillatory { hi, cap, .. } => Some((0.0, hi * cap)),
            DiffusionSpec::TabulatedLipschitz { values, .. } => {
                Some((0.0, values.iter().fold(0.0f64, |m, v| m.max(v.abs()))))
            }
            DiffusionSpec::PolynomialBounded { coeffs } => {
                if effective_degree(coeffs).is_some_and(|d| d > 2) {
                    return None;
                }
                let c = |k: usize| coeffs.get(k).copied().unwrap_or(0.0).abs();
                Some((c(2) + c(1) / radius, c(0)))
            }
        }
    }

    /// Upper bound on `sup |σ|` over `[lo, hi]` (exact for every family
    /// except `Oscillatory`, where `hi·|u|` is used).
    pub fn sup_abs_on(&self, lo: f64, hi: f64) -> f64 {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        match self {
            DiffusionSpec::Constant { s } => *s,
            DiffusionSpec::LinearAtRoot { x_e, kappa, cap } => {
                kappa.value() * (lo - x_e).abs().max((hi - x_e).abs()).min(*cap)
            }
            DiffusionSpec::Oscillatory {
                x_e, hi: h, cap, ..
            } => h * (lo - x_e).abs().max((hi - x_e).abs()).min(*cap),
            DiffusionSpec::TabulatedLipschitz { knots, .. } => {
                let mut m = self.sigma(lo).max(self.sigma(hi));
                for &k in knots.iter().filter(|&&k| k > lo && k < hi) {
                    m = m.max(self.sigma(k));
                }
                m
            }
            DiffusionSpec::PolynomialBounded { .. } => {
                // |p| attains its max on a compact interval at an endpoint or
                // at a critical point; a dense grid plus endpoints suffices
                // for the low degrees admissible here.
                grid(lo, hi, 20_001)
                    .map(|x| self.sigma(x))
                    .fold(0.0, f64::max)
            }
        }
    }

    /// Grid estimate of `inf σ` over `[lo, hi]`.
    pub fn inf_on(&self, lo: f64, hi: f64) -> f64 {
        let mut m = grid(lo, hi, 20_001)
            .map(|x| self.sigma(x))
            .fold(f64::INFINITY, f64::min);
        match self {
            DiffusionSpec::LinearAtRoot { x_e, .. } | DiffusionSpec::Oscillatory { x_e, .. }
                if *x_e >= lo && *x_e <= hi =>
            {
                m = m.min(self.sigma(*x_e));
            }
            DiffusionSpec::TabulatedLipschitz { knots, .. } => {
                for &k in knots.iter().filter(|&&k| k >= lo && k <= hi) {
                    m = m.min(self.sigma(k));
                }
            }
            _ => {}
        }
        m
    }

    /// `true` when σ is symmetric under `x → −x` by construction.
    pub fn is_even(&self) -> bool {
        match self {
            DiffusionSpec::Constant { .. } => true,
            DiffusionSpec::LinearAtRoot { x_e, .. } | DiffusionSpec::Oscillatory { x_e, .. } => {
                *x_e == 0.0
            }
            DiffusionSpec::PolynomialBounded { coeffs } => {
                coeffs.iter().skip(1).step_by(2).all(|&c| c == 0.0)
            }
            DiffusionSpec::TabulatedLipschitz { .. } => false,
        }
    }

    /// `(limsup, liminf)` of `σ(x_e + side·u)/u` as `u ↓ 0`, in closed form.
    ///
    /// Assumes σ vanishes at `x_e`; `side` selects the half-line by sign.
    pub fn root_ratio_limits(&self, x_e: f64, side: f64) -> (f64, f64) {
        match self {
            DiffusionSpec::Constant { .. } => (0.0, 0.0),
            DiffusionSpec::LinearAtRoot { kappa, .. } => (kappa.value(), kappa.value()),
            DiffusionSpec::Oscillatory { lo, hi, .. } => (*hi, *lo),
            DiffusionSpec::PolynomialBounded { coeffs } => {
                let s = horner(&derivative(coeffs), x_e).abs();
                (s, s)
            }
            DiffusionSpec::TabulatedLipschitz { knots, values } => {
                let n = knots.len();
                let outside = if side > 0.0 {
                    x_e < knots[0] || x_e >= knots[n - 1]
                } else {
                    x_e <= knots[0] || x_e > knots[n - 1]
                };
                if n < 2 || outside {
                    return (0.0, 0.0);
                }
                let i = if side > 0.0 {
                    segment(knots, x_e)
                } else {
                    knots.partition_point(|&k| k < x_e) - 1
                };
                let s = ((values[i + 1] - values[i]) / (knots[i + 1] - knots[i])).abs();
                (s, s)
            }
        }
    }
}

/// Free function form of [`DiffusionSpec::sigma`].
pub fn sigma(d: &DiffusionSpec, x: f64) -> f64 {
    d.sigma(x)
}

/// Certifies (A1) and computes the (A2) margin from the family's closed form.
///
/// Every admissible family is locally Lipschitz by construction, so `a1`
/// reflects only parameter validity.
pub fn validate_assumptions(d: &DiffusionSpec) -> AssumptionReport {
    let a1 = d.validate().is_ok();
    let ratio = d.tail_ratio();
    let a2_margin = if ratio.is_finite() {
        SQRT_2 - ratio
    } else {
        f64::NEG_INFINITY
    };
    AssumptionReport { a1, a2_margin }
}

/// Point evaluation data for the generator: `x` and `f, f′, f″` at `x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorInput {
    pub x: f64,
    pub f: f64,
    pub fp: f64,
    pub fpp: f64,
}

/// `L f(x) = b(x) f′(x) + σ(x)²/2 · f″(x)`.
pub fn generator_apply(p: &PotentialParams, d: &DiffusionSpec, g: &GeneratorInput) -> f64 {
    let s = d.sigma(g.x);
    p.drift(g.x) * g.fp + 0.5 * s * s * g.fpp
}

/// Exact solution of `ẋ = (a x − b x³)/λ` at time `t` (which may be `+∞`).
pub fn deterministic_flow(p: &PotentialParams, x0: f64, t: f64) -> Result<f64> {
    finite("x0", x0)?;
    if t.is_nan() || t < 0.0 {
        return Err(invalid("t", format!("must be non-negative, got {t}")));
    }
    let w = p.well();
    if x0 == 0.0 || x0.abs() == w || t == 0.0 {
        return Ok(x0);
    }
    let y0 = x0 / w;
    let tau = p.time_scale() * t;
    // e^τ / √(e^{2τ} − 1 + 1/y0²), divided through by e^τ so that large τ
    // neither overflows nor loses the 1/y0² term to cancellation.
    let decay = (-2.0 * tau).exp();
    let y = 1.0 / (-(-2.0 * tau).exp_m1() + decay / (y0 * y0)).sqrt();
    Ok(w * y.copysign(y0))
}

/// Time for the noiseless flow started at `x0` to reach `x1`, if it ever does.
pub fn deterministic_hitting_time(p: &PotentialParams, x0: f64, x1: f64) -> Option<f64> {
    if !x0.is_finite() || !x1.is_finite() {
        return None;
    }
    if x0 == x1 {
        return Some(0.0);
    }
    let w = p.well();
    let (y0, y1) = (x0 / w, x1 / w);
    if y0 == 0.0 || y0.signum() != y1.signum() {
        return None;
    }
    let (a0, a1) = (y0.abs(), y1.abs());
    // The flow moves monotonically from |y0| towards 1 and never reaches it.
    let reachable = if a0 < 1.0 {
        a1 > a0 && a1 < 1.0
    } else {
        a1 < a0 && a1 > 1.0
    };
    if !reachable {
        return None;
    }
    let g = |y: f64| 1.0 - 1.0 / (y * y);
    Some(0.5 * (g(a0) / g(a1)).ln() / p.time_scale())
}

fn oscillatory(u: f64, lo: f64, hi: f64, cap: f64) -> f64 {
    if u == 0.0 {
        return 0.0;
    }
    let r = u.abs().min(cap);
    let (m, h) = ((hi + lo) / 2.0, (hi - lo) / 2.0);
    (r * (m + h * r.ln().sin())).max(0.0)
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c)
}

fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .map(|(k, &c)| k as f64 * c)
        .collect()
}

/// Coefficients of `q(d) = p(base + d)`.
fn taylor_shift(coeffs: &[f64], base: f64) -> Vec<f64> {
    let mut q = coeffs.to_vec();
    let n = q.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            q[j] += base * q[j + 1];
        }
    }
    q
}

fn effective_degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|&c| c != 0.0)
}

fn segment(knots: &[f64], x: f64) -> usize {
    // Largest i with knots[i] <= x, clamped to a valid segment start.
    let i = knots.partition_point(|&k| k <= x);
    i.saturating_sub(1).min(knots.len().saturating_sub(2))
}

/// Piecewise-linear interpolant at `base + d`, constant outside the knots.
fn interpolate(knots: &[f64], values: &[f64], base: f64, d: f64) -> f64 {
    let n = knots.len();
    let x = base + d;
    if n == 1 || x <= knots[0] {
        return values[0];
    }
    if x >= knots[n - 1] {
        return values[n - 1];
    }
    let i = segment(knots, x);
    let slope = (values[i + 1] - values[i]) / (knots[i + 1] - knots[i]);
    // anchor at the nearer knot so values near a root keep relative accuracy
    let (kl, kr) = ((base - knots[i]) + d, (base - knots[i + 1]) + d);
    if kl.abs() <= kr.abs() {
        values[i] + slope * kl
    } else {
        values[i + 1] + slope * kr
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + i as f64 * h })
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: PotentialParams = PotentialParams {
        a: 1.0,
        b: 1.0,
        lambda: 1.0,
    };

    #[test]
    fn drift_examples() {
        assert_eq!(drift(&P, 0.0), 0.0);
        assert_eq!(drift(&P, 1.0), 0.0);
        assert_eq!(drift(&P, -1.0), 0.0);
        assert_eq!(drift(&P, 2.0), -6.0);
    }

    #[test]
    fn drift_vanishes_at_generalized_equilibria() {
        let p = PotentialParams::new(3.0, 7.0, 2.0).unwrap();
        for e in p.equilibria() {
            assert_eq!(p.drift(e), 0.0);
        }
        assert_eq!(p.equilibria()[2], (3.0f64 / 7.0).sqrt());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(PotentialParams::new(0.0, 1.0, 1.0).is_err());
        assert!(PotentialParams::new(1.0, -1.0, 1.0).is_err());
        assert!(PotentialParams::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(DiffusionSpec::constant(1.0).sigma(3.7), 1.0);
        assert_eq!(
            DiffusionSpec::linear_at_root(0.0, 2.0, 10.0).sigma(0.25),
            0.5
        );
        assert_eq!(
            DiffusionSpec::linear_at_root(1.0, 0.5, 10.0).sigma(1.0),
            0.0
        );
        assert_eq!(
            DiffusionSpec::linear_at_root(0.0, 2.0, 1.0).sigma(-5.0),
            2.0
        );
    }

    #[test]
    fn oscillatory_ratio_stays_in_band() {
        let d = DiffusionSpec::oscillatory(0.5, 1.0, 3.0, 0.25);
        for k in 1..2000 {
            let u = 0.25 * (-(k as f64) * 0.01).exp();
            for x in [0.5 + u, 0.5 - u] {
                let r = d.sigma(x) / (x - 0.5).abs();
                assert!((1.0 - 1e-9..=3.0 + 1e-9).contains(&r), "ratio {r} at {x}");
            }
        }
        // frozen beyond the cap
        assert_eq!(d.sigma(10.0), d.sigma(0.75));
    }

    #[test]
    fn polynomial_and_tabulated() {
        let d = DiffusionSpec::polynomial(vec![0.0, 0.0, 1.0]);
        assert_eq!(d.sigma(-3.0), 9.0);
        let d = DiffusionSpec::polynomial(vec![1.0, -2.0]);
        assert_eq!(d.sigma(2.0), 3.0);
        let t = DiffusionSpec::tabulated(vec![-1.0, 0.0, 2.0], vec![1.0, 0.0, 4.0]);
        assert_eq!(t.sigma(-5.0), 1.0);
        assert_eq!(t.sigma(-0.5), 0.5);
        assert_eq!(t.sigma(1.0), 2.0);
        assert_eq!(t.sigma(9.0), 4.0);
        assert!(DiffusionSpec::tabulated(vec![0.0, 0.0], vec![1.0, 1.0])
            .validate()
            .is_err());
    }

    #[test]
    fn sigma_offset_matches_sigma_where_representable() {
        let specs = [
            DiffusionSpec::linear_at_root(1.0, 0.7, 3.0),
            DiffusionSpec::oscillatory(1.0, 0.5, 2.0, 0.5),
            DiffusionSpec::polynomial(vec![-1.0, 0.0, 1.0]),
            DiffusionSpec::tabulated(vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 3.0]),
        ];
        for d in &specs {
            for dx in [-0.75, -0.3, 0.01, 0.2, 0.9] {
                let a = d.sigma(1.0 + dx);
                let b = d.sigma_offset(1.0, dx);
                assert!((a - b).abs() < 1e-12, "{d:?} at {dx}: {a} vs {b}");
            }
        }
        // below an ulp of the base the offset form keeps the linear ratio
        let d = DiffusionSpec::polynomial(vec![-1.0, 0.0, 1.0]);
        let r = d.sigma_offset(1.0, 1e-20) / 1e-20;
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_prime_matches_finite_differences() {
        let specs = [
            DiffusionSpec::linear_at_root(0.3, 1.5, 2.0),
            DiffusionSpec::oscillatory(0.0, 1.0, 3.0, 1.0),
            DiffusionSpec::polynomial(vec![0.5, -1.0, 0.8]),
            DiffusionSpec::tabulated(vec![-1.0, 1.0], vec![2.0, -2.0]),
        ];
        let h = 1e-6;
        for d in &specs {
            for x in [-0.83, -0.21, 0.47, 0.91] {
                let fd = (d.sigma(x + h) - d.sigma(x - h)) / (2.0 * h);
                assert!((fd - d.sigma_prime(x)).abs() < 1e-5, "{d:?} at {x}");
            }
        }
        // kink of the cap: flat outer side
        let d = DiffusionSpec::linear_at_root(0.0, 2.0, 1.0);
        assert_eq!(d.sigma_prime(1.0), 0.0);
        assert_eq!(d.sigma_prime(0.999), 2.0);
    }

    #[test]
    fn assumption_margins() {
        let m = validate_assumptions(&DiffusionSpec::constant(5.0));
        assert!(m.a1);
        assert_eq!(m.a2_margin, SQRT_2);
        let m = validate_assumptions(&DiffusionSpec::linear_at_root(0.0, 3.0, 10.0));
        assert_eq!(m.a2_margin, SQRT_2);
        let m = validate_assumptions(&DiffusionSpec::polynomial(vec![0.0, 0.0, 1.0]));
        assert_eq!(m.a2_margin, SQRT_2 - 1.0);
        assert!(m.admissible());
        let m = validate_assumptions(&DiffusionSpec::polynomial(vec![0.0, 0.0, 0.0, 1.0]));
        assert_eq!(m.a2_margin, f64::NEG_INFINITY);
        let m = validate_assumptions(&DiffusionSpec::polynomial(vec![0.0, 0.0, 2.0, 0.0]));
        assert!(m.a2_margin < 0.0);
    }

    #[test]
    fn generator_examples() {
        let g = GeneratorInput {
            x: 0.0,
            f: 0.0,
            fp: 0.0,
            fpp: 2.0,
        };
        assert_eq!(generator_apply(&P, &DiffusionSpec::constant(1.0), &g), 1.0);
        let g = GeneratorInput {
            x: 2.0,
            f: 123.0,
            fp: 1.0,
            fpp: 0.0,
        };
        assert_eq!(generator_apply(&P, &DiffusionSpec::constant(0.0), &g), -6.0);
        // V(x) = x²: L V = −2x⁴ + 2x² + σ² at x = 1
        let g = GeneratorInput {
            x: 1.0,
            f: 1.0,
            fp: 2.0,
            fpp: 2.0,
        };
        assert_eq!(generator_apply(&P, &DiffusionSpec::constant(1.0), &g), 1.0);
    }

    #[test]
    fn flow_examples() {
        assert_eq!(deterministic_flow(&P, 1.0, 17.0).unwrap(), 1.0);
        let e = std::f64::consts::E;
        let want = e / (e * e - 1.0 + 4.0).sqrt();
        let got = deterministic_flow(&P, 0.5, 1.0).unwrap();
        assert!((got - want).abs() < 1e-15);
        assert!((got - 0.843347).abs() < 1e-6);
        assert_eq!(deterministic_flow(&P, -0.5, f64::INFINITY).unwrap(), -1.0);
        assert!((deterministic_flow(&P, -0.5, 40.0).unwrap() + 1.0).abs() < 1e-15);
        assert!(deterministic_flow(&P, f64::NAN, 1.0).is_err());
        assert!(deterministic_flow(&P, 1.0, -1.0).is_err());
    }

    #[test]
    fn flow_matches_printed_formula_for_positive_and_negative_starts() {
        for x0 in [-2.0, -0.3, 0.3, 0.5, 2.0, 5.0] {
            for t in [0.1, 0.5, 1.0, 3.0] {
                let e = f64::exp(t);
                let printed = e / (e * e - 1.0 + 1.0 / (x0 * x0)).sqrt() * f64::signum(x0);
                let got = deterministic_flow(&P, x0, t).unwrap();
                assert!((got - printed).abs() < 1e-13 * printed.abs());
            }
        }
    }

    #[test]
    fn generalized_flow_solves_the_ode() {
        let p = PotentialParams::new(2.0, 0.5, 3.0).unwrap();
        let (x0, t, h) = (0.4, 0.8, 1e-5);
        let xp = deterministic_flow(&p, x0, t + h).unwrap();
        let xm = deterministic_flow(&p, x0, t - h).unwrap();
        let x = deterministic_flow(&p, x0, t).unwrap();
        let fd = (xp - xm) / (2.0 * h);
        assert!((fd - p.drift(x)).abs() < 1e-8);
        assert!((deterministic_flow(&p, x0, 1e3).unwrap() - p.well()).abs() < 1e-12);
    }

    #[test]
    fn hitting_time_inverts_the_flow() {
        let t = deterministic_hitting_time(&P, 2.0, 1.5).unwrap();
        assert!((t - 0.5 * (0.75f64 / (1.0 - 1.0 / 2.25)).ln()).abs() < 1e-15);
        assert!((deterministic_flow(&P, 2.0, t).unwrap() - 1.5).abs() < 1e-14);
        let t = deterministic_hitting_time(&P, 0.3, 0.5).unwrap();
        assert!((deterministic_flow(&P, 0.3, t).unwrap() - 0.5).abs() < 1e-14);
        assert!(deterministic_hitting_time(&P, 0.3, 1.0).is_none());
        assert!(deterministic_hitting_time(&P, 0.3, 0.2).is_none());
        assert!(deterministic_hitting_time(&P, 0.3, -0.5).is_none());
    }
}
