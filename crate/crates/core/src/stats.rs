//! Monte Carlo summary statistics.

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Mean and standard error (`s/√n`, unbiased `s`) of `samples`.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut acc = Welford::default();
        for &x in samples {
            acc.push(x);
        }
        acc.estimate()
    }

    /// Fraction of `hits` among `n` trials with its binomial standard error.
    pub fn proportion(hits: usize, n: usize) -> Self {
        if n == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let p = hits as f64 / n as f64;
        Self {
            mean: p,
            se: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        }
    }

    pub fn upper(&self, k: f64) -> f64 {
        self.mean + k * self.se
    }

    pub fn lower(&self, k: f64) -> f64 {
        self.mean - k * self.se
    }
}

/// Online mean/variance (Welford's algorithm).
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        };
        Estimate {
            mean: if self.n == 0 { f64::NAN } else { self.mean },
            se,
            n: self.n,
        }
    }
}

/// Ordinary least-squares fit `y ≈ intercept + slope·x`; returns
/// `(slope, intercept, rms_residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || n != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(&a, &b)| (b - intercept - slope * a).powi(2))
        .sum();
    Some((slope, intercept, (rss / n as f64).sqrt()))
}
