//! Log-space helpers shared by the spectral and series code.

pub use statrs::function::gamma::ln_gamma;

/// Running sum of positive terms kept in log space.
#[derive(Debug, Clone, Copy)]
pub struct LogSum {
    log_total: f64,
}

impl Default for LogSum {
    fn default() -> Self {
        Self { log_total: f64::NEG_INFINITY }
    }
}

impl LogSum {
    pub fn add_log(&mut self, log_term: f64) {
        if log_term == f64::NEG_INFINITY {
            return;
        }
        if self.log_total == f64::NEG_INFINITY {
            self.log_total = log_term;
            return;
        }
        let (hi, lo) = if self.log_total >= log_term {
            (self.log_total, log_term)
        } else {
            (log_term, self.log_total)
        };
        self.log_total = hi + (lo - hi).exp().ln_1p();
    }

    pub fn ln(&self) -> f64 {
        self.log_total
    }

    pub fn value(&self) -> f64 {
        self.log_total.exp()
    }
}

/// Compensated (Neumaier) summation.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `ln C(n, k)` through log-gamma.
pub fn ln_binomial(n: f64, k: f64) -> f64 {
    ln_gamma(n + 1.0) - ln_gamma(k + 1.0) - ln_gamma(n - k + 1.0)
}

/// Ordinary least squares of `y` on `x` with intercept: `(intercept, slope, mean squared residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    debug_assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let mse = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let r = yi - intercept - slope * xi;
            r * r
        })
        .sum::<f64>()
        / n;
    (intercept, slope, mse)
}

/// Linear-interpolated quantile of an unsorted sample, `q` in `[0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    v[lo] * (1.0 - w) + v[hi] * w
}

pub fn median(values: &[f64]) -> f64 {
    quantile(values, 0.5)
}
