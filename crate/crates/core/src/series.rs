//! Truncated power series for activation stacks.
//!
//! Every series here holds the *absolute* Taylor coefficients of an
//! activation (`b_n = |σ^{(n)}(0)| / n!`), which is the function `f` that
//! enters the dot-product kernel `K(x, x') = f_N ∘ … ∘ f_1(⟨x, x'⟩)`.
//! Coefficients are therefore nonnegative, and composition never cancels.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{linear_fit, ln_gamma};

/// Default truncation degree for composed series.
pub const DEFAULT_DEGREE: usize = 80;

/// Catalog of activations with a Taylor expansion at zero.
///
/// `erf_sigmoid` is `σ(x) = (1 + erf(√π x)) / 2` and `smooth_hinge` is its
/// antiderivative `σ(x) = x·σ_erf(x) + exp(−π x²) / (2π)`, the smooth
/// surrogate of the rectifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Activation {
    Exp,
    Square,
    /// `1 / (2 − x)`
    InversePoly,
    ErfSigmoid,
    SmoothHinge,
    /// `Σ coeffs[k] x^k`
    Polynomial { coeffs: Vec<f64> },
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exp" => Ok(Self::Exp),
            "square" => Ok(Self::Square),
            "inverse_poly" => Ok(Self::InversePoly),
            "erf_sigmoid" => Ok(Self::ErfSigmoid),
            "smooth_hinge" => Ok(Self::SmoothHinge),
            other => Err(Error::Catalog(other.to_string())),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exp => f.write_str("exp"),
            Self::Square => f.write_str("square"),
            Self::InversePoly => f.write_str("inverse_poly"),
            Self::ErfSigmoid => f.write_str("erf_sigmoid"),
            Self::SmoothHinge => f.write_str("smooth_hinge"),
            Self::Polynomial { coeffs } => {
                f.write_str("polynomial(")?;
                for (i, c) in coeffs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(",")?;
                    }
                    write!(f, "{c}")?;
                }
                f.write_str(")")
            }
        }
    }
}

// Σ_k π^k a^{2k+1} / (k! (2k+1)), a ≥ 0: odd part of the erf kernel function.
fn erf_odd_series(a: f64) -> f64 {
    let a2 = PI * a * a;
    let mut power = a; // π^k a^{2k+1} / k!
    let mut sum = a;
    let mut k = 0usize;
    loop {
        k += 1;
        power *= a2 / k as f64;
        let term = power / (2 * k + 1) as f64;
        sum += term;
        if (k as f64) > a2 && term <= 1e-17 * sum {
            return sum;
        }
        if !sum.is_finite() {
            return sum;
        }
    }
}

// Σ_k π^k x^{2k+2} / (k! (2k+1)(2k+2)): even part of the smooth-hinge kernel function.
fn sh_even_series(a: f64) -> f64 {
    let a2 = PI * a * a;
    let mut power = a * a;
    let mut sum = power / 2.0;
    let mut k = 0usize;
    loop {
        k += 1;
        power *= a2 / k as f64;
        let term = power / ((2 * k + 1) * (2 * k + 2)) as f64;
        sum += term;
        if ((k as f64) > a2 && term <= 1e-17 * sum) || !sum.is_finite() {
            return sum;
        }
    }
}

fn complex_series<F: Fn(usize) -> f64>(coeff_log: F, z: Complex64, start: usize, step: usize) -> Complex64 {
    // Σ_j exp(coeff_log(j)) z^{start + step j}; coefficients positive.
    let r = z.norm();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut abs_sum = 0.0_f64;
    let zs = z.powu(step as u32);
    let mut zp = z.powu(start as u32);
    let mut prev_abs = f64::INFINITY;
    for j in 0.. {
        let c = coeff_log(j).exp();
        let term = zp * c;
        let ta = term.norm();
        sum += term;
        abs_sum += ta;
        let past_peak = ta <= prev_abs && (j as f64) > PI * r * r;
        if (past_peak && ta <= 1e-17 * abs_sum) || !abs_sum.is_finite() || j > 100_000 {
            break;
        }
        prev_abs = ta;
        zp *= zs;
    }
    sum
}

fn erf_coeff_log(k: usize) -> f64 {
    // π^k / (k! (2k+1))
    k as f64 * PI.ln() - ln_gamma(k as f64 + 1.0) - ((2 * k + 1) as f64).ln()
}

fn sh_coeff_log(k: usize) -> f64 {
    // π^k / (k! (2k+1)(2k+2))
    erf_coeff_log(k) - ((2 * k + 2) as f64).ln()
}

impl Activation {
    /// The activation σ itself.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Exp => x.exp(),
            Self::Square => x * x,
            Self::InversePoly => 1.0 / (2.0 - x),
            Self::ErfSigmoid => 0.5 * (1.0 + statrs::function::erf::erf(PI.sqrt() * x)),
            Self::SmoothHinge => {
                x * Self::ErfSigmoid.eval(x) + (-PI * x * x).exp() / (2.0 * PI)
            }
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c),
        }
    }

    /// The kernel function `f(x) = Σ |σ^{(n)}(0)|/n! xⁿ`, evaluated in closed form.
    pub fn kernel_fn(&self, x: f64) -> f64 {
        match self {
            Self::Exp | Self::Square | Self::InversePoly => self.eval(x),
            Self::ErfSigmoid => 0.5 + x.signum() * erf_odd_series(x.abs()),
            Self::SmoothHinge => 1.0 / (2.0 * PI) + 0.5 * x + sh_even_series(x.abs()),
            Self::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, &c| acc * x + c.abs()),
        }
    }

    /// [`Activation::kernel_fn`] continued to complex arguments.
    pub fn kernel_fn_complex(&self, z: Complex64) -> Complex64 {
        match self {
            Self::Exp => z.exp(),
            Self::Square => z * z,
            Self::InversePoly => 1.0 / (2.0 - z),
            Self::ErfSigmoid => 0.5 + complex_series(erf_coeff_log, z, 1, 2),
            Self::SmoothHinge => {
                1.0 / (2.0 * PI) + 0.5 * z + complex_series(sh_coeff_log, z, 2, 2)
            }
            Self::Polynomial { coeffs } => coeffs
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c.abs()),
        }
    }

    /// Degree when the activation is a polynomial.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match self {
            Self::Square => Some(2),
            Self::Polynomial { coeffs } => {
                Some(coeffs.iter().rposition(|&c| c != 0.0).unwrap_or(0))
            }
            _ => None,
        }
    }

    /// Natural logs of the kernel-function coefficients at 0, `-inf` for exact zeros.
    pub fn log_taylor_coeffs(&self, degree: usize) -> Vec<f64> {
        let zero = f64::NEG_INFINITY;
        match self {
            Self::Exp => {
                // ln of the rounded factorial is far more accurate than lnΓ
                // while m! is finite
                let mut fact = 1.0f64;
                (0..=degree)
                    .map(|m| {
                        if m > 0 {
                            fact *= m as f64;
                        }
                        if fact.is_finite() { -fact.ln() } else { -ln_gamma(m as f64 + 1.0) }
                    })
                    .collect()
            }
            Self::InversePoly => (0..=degree).map(|m| -((m + 1) as f64) * 2f64.ln()).collect(),
            Self::Square => (0..=degree).map(|m| if m == 2 { 0.0 } else { zero }).collect(),
            Self::Polynomial { coeffs } => (0..=degree)
                .map(|m| match coeffs.get(m) {
                    Some(&c) if c != 0.0 => c.abs().ln(),
                    _ => zero,
                })
                .collect(),
            Self::ErfSigmoid | Self::SmoothHinge => {
                // Derivatives of the Gaussian integrand obey
                // c_{2k+3} / c_{2k+1} = π (2k+1) / ((k+1)(2k+3)).
                let mut out = vec![zero; degree + 1];
                let hinge = matches!(self, Self::SmoothHinge);
                let (c0, c1) = if hinge { (-(2.0 * PI).ln(), -(2f64.ln())) } else { (-(2f64.ln()), 0.0) };
                out[0] = c0;
                if degree >= 1 {
                    out[1] = c1;
                }
                let mut log_odd = 0.0; // log c_{2k+1} of the erf series
                let mut k = 0usize;
                loop {
                    let idx = if hinge { 2 * k + 2 } else { 2 * k + 1 };
                    if idx > degree {
                        break;
                    }
                    if hinge {
                        out[idx] = log_odd - ((2 * k + 2) as f64).ln();
                    } else {
                        out[idx] = log_odd;
                    }
                    log_odd += PI.ln() + ((2 * k + 1) as f64).ln()
                        - ((k + 1) as f64).ln()
                        - ((2 * k + 3) as f64).ln();
                    k += 1;
                }
                out
            }
        }
    }

    /// Coefficients of the kernel function re-expanded around `c0`:
    /// `f(c0 + h) = Σ a_n hⁿ`.
    pub fn taylor_at(&self, c0: f64, degree: usize) -> Result<Vec<f64>> {
        let mut out = vec![0.0; degree + 1];
        match self {
            Self::Exp => {
                for (n, a) in out.iter_mut().enumerate() {
                    *a = (c0 - ln_gamma(n as f64 + 1.0)).exp();
                }
            }
            Self::InversePoly => {
                if c0 >= 2.0 {
                    return Err(Error::CompositionUnsupported {
                        outer: self.to_string(),
                        reason: format!("inner constant term {c0} reaches the pole at 2"),
                    });
                }
                let base = 2.0 - c0;
                for (n, a) in out.iter_mut().enumerate() {
                    *a = (-((n + 1) as f64) * base.ln()).exp();
                }
            }
            Self::Square | Self::Polynomial { .. } => {
                let poly: Vec<f64> = match self {
                    Self::Square => vec![0.0, 0.0, 1.0],
                    Self::Polynomial { coeffs } => coeffs.iter().map(|c| c.abs()).collect(),
                    _ => unreachable!(),
                };
                // binomial shift p(c0 + h)
                for (k, &p) in poly.iter().enumerate() {
                    if p == 0.0 {
                        continue;
                    }
                    let mut binom = 1.0;
                    for j in 0..=k.min(degree) {
                        out[j] += p * binom * c0.powi((k - j) as i32);
                        binom = binom * (k - j) as f64 / (j + 1) as f64;
                    }
                }
            }
            Self::ErfSigmoid | Self::SmoothHinge => {
                // f_erf'(x) = exp(π x²); expand exp(π(c0+h)²) by the
                // exponential recurrence n e_n = 2π c0 e_{n-1} + 2π e_{n-2}.
                let mut gauss = vec![0.0; degree + 1];
                gauss[0] = (PI * c0 * c0).exp();
                for n in 1..=degree {
                    let prev2 = if n >= 2 { gauss[n - 2] } else { 0.0 };
                    gauss[n] = (2.0 * PI * c0 * gauss[n - 1] + 2.0 * PI * prev2) / n as f64;
                }
                let mut erf = vec![0.0; degree + 2];
                erf[0] = Self::ErfSigmoid.kernel_fn(c0);
                for n in 1..=degree + 1 {
                    erf[n] = gauss.get(n - 1).copied().unwrap_or(0.0) / n as f64;
                }
                if matches!(self, Self::ErfSigmoid) {
                    out.copy_from_slice(&erf[..=degree]);
                } else {
                    out[0] = self.kernel_fn(c0);
                    for n in 1..=degree {
                        out[n] = erf[n - 1] / n as f64;
                    }
                }
            }
        }
        if out.iter().any(|a| !a.is_finite()) {
            return Err(Error::CompositionUnsupported {
                outer: self.to_string(),
                reason: format!("re-expansion around {c0} overflows"),
            });
        }
        Ok(out)
    }
}

/// Nonnegative truncated Taylor series `b_0 … b_M`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerSeries {
    coeffs: Vec<f64>,
    log_coeffs: Vec<f64>,
    exact_degree: Option<usize>,
}

impl PowerSeries {
    /// Builds a series from linear coefficients; all must be finite and ≥ 0.
    pub fn from_coeffs(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Domain("empty coefficient list".into()));
        }
        if let Some(i) = coeffs.iter().position(|c| !(c.is_finite() && *c >= 0.0)) {
            return Err(Error::Domain(format!("coefficient {i} is {}", coeffs[i])));
        }
        let log_coeffs = coeffs.iter().map(|&c| if c > 0.0 { c.ln() } else { f64::NEG_INFINITY }).collect();
        Ok(Self { coeffs, log_coeffs, exact_degree: None })
    }

    /// Builds from logs; linear values may underflow to zero while logs stay exact.
    pub fn from_log_coeffs(log_coeffs: Vec<f64>) -> Self {
        let coeffs = log_coeffs.iter().map(|l| l.exp()).collect();
        Self { coeffs, log_coeffs, exact_degree: None }
    }

    /// Marks the series as a polynomial: coefficients past the stored range are zero.
    pub fn with_exact_degree(mut self, degree: Option<usize>) -> Self {
        self.exact_degree = degree.map(|d| d.min(self.degree()));
        self
    }

    /// `x ↦ x`, truncated at `degree`.
    pub fn identity(degree: usize) -> Self {
        let mut c = vec![0.0; degree + 1];
        if degree >= 1 {
            c[1] = 1.0;
        }
        Self::from_coeffs(c).expect("valid").with_exact_degree(Some(1))
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn log_coeffs(&self) -> &[f64] {
        &self.log_coeffs
    }

    /// `Some(k)` when the series is known to be a polynomial of degree ≤ k.
    pub fn exact_degree(&self) -> Option<usize> {
        self.exact_degree
    }

    /// Coefficient `m`; `None` past the truncation unless the series is exact.
    pub fn log_coeff(&self, m: usize) -> Option<f64> {
        match self.log_coeffs.get(m) {
            Some(&l) => Some(l),
            None if self.exact_degree.is_some() => Some(f64::NEG_INFINITY),
            None => None,
        }
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs[0]
    }

    /// Horner evaluation of the truncated series.
    pub fn eval(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    /// Every coefficient is strictly positive (cc-universality witness).
    pub fn all_positive(&self) -> bool {
        self.log_coeffs.iter().all(|l| l.is_finite())
    }

    /// Copy truncated to `degree`.
    pub fn truncated(&self, degree: usize) -> Self {
        let d = degree.min(self.degree());
        Self {
            coeffs: self.coeffs[..=d].to_vec(),
            log_coeffs: self.log_coeffs[..=d].to_vec(),
            exact_degree: self.exact_degree.filter(|&e| e <= d),
        }
    }

    /// CSV with header `m,b_m,log_b_m`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("m,b_m,log_b_m\n");
        for (m, (b, l)) in self.coeffs.iter().zip(&self.log_coeffs).enumerate() {
            out.push_str(&format!("{m},{b:e},{l:e}\n"));
        }
        out
    }

    fn padded(&self, degree: usize) -> Result<Vec<f64>> {
        if degree > self.degree() && self.exact_degree.is_none() {
            return Err(Error::InsufficientDegree { required: degree, available: self.degree() });
        }
        let mut c = self.coeffs.clone();
        c.resize(degree + 1, 0.0);
        c.truncate(degree + 1);
        Ok(c)
    }
}

/// Kernel-function series of a single activation to degree `degree`.
pub fn activation_series(act: &Activation, degree: usize) -> Result<PowerSeries> {
    if let Activation::Polynomial { coeffs } = act {
        if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::Catalog(format!("invalid polynomial coefficients {coeffs:?}")));
        }
    }
    Ok(PowerSeries::from_log_coeffs(act.log_taylor_coeffs(degree)).with_exact_degree(act.polynomial_degree()))
}

fn mul_truncated(a: &[f64], b: &[f64], degree: usize) -> Vec<f64> {
    let mut out = vec![0.0; degree + 1];
    for (i, &ai) in a.iter().enumerate().take(degree + 1) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(degree + 1 - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

fn composed_exactness(outer: &Activation, inner: &PowerSeries, degree: usize) -> Option<usize> {
    let q = inner.exact_degree()?;
    if q == 0 {
        return Some(0);
    }
    let p = outer.polynomial_degree()?;
    (p * q <= degree).then_some(p * q)
}

/// Series of `x ↦ outer(inner(x))` to degree `degree`.
///
/// An exponential outer layer uses the recurrence
/// `(m+1) b_{m+1} = Σ_{k=0}^{m} b_k c_{m+1-k} (m+1-k)`; every other outer
/// layer goes through [`compose_reexpanded`].
pub fn compose(outer: &Activation, inner: &PowerSeries, degree: usize) -> Result<PowerSeries> {
    match outer {
        Activation::Exp => {
            let c = inner.padded(degree)?;
            let mut b = vec![0.0; degree + 1];
            b[0] = c[0].exp();
            for n in 1..=degree {
                let mut acc = 0.0;
                for k in 1..=n {
                    acc += k as f64 * c[k] * b[n - k];
                }
                b[n] = acc / n as f64;
            }
            if !b[0].is_finite() {
                return Err(Error::CompositionUnsupported {
                    outer: outer.to_string(),
                    reason: "constant term overflows".into(),
                });
            }
            Ok(PowerSeries::from_coeffs(b)?.with_exact_degree(composed_exactness(outer, inner, degree)))
        }
        _ => compose_reexpanded(outer, inner, degree),
    }
}

/// General composition: expand `outer` around `c0 = inner(0)` and substitute
/// the zero-constant remainder `inner − c0` formally (Horner scheme).
pub fn compose_reexpanded(outer: &Activation, inner: &PowerSeries, degree: usize) -> Result<PowerSeries> {
    let mut h = inner.padded(degree)?;
    let c0 = h[0];
    h[0] = 0.0;
    let a = outer.taylor_at(c0, degree)?;
    let top = outer.polynomial_degree().unwrap_or(degree).min(degree);
    let mut acc = vec![0.0; degree + 1];
    acc[0] = a[top];
    for j in (0..top).rev() {
        acc = mul_truncated(&acc, &h, degree);
        acc[0] += a[j];
    }
    Ok(PowerSeries::from_coeffs(acc)?.with_exact_degree(composed_exactness(outer, inner, degree)))
}

/// Series of `f_N ∘ … ∘ f_1` where `acts = [σ_1, …, σ_N]` lists the
/// innermost layer first.
pub fn compose_stack(acts: &[Activation], degree: usize) -> Result<PowerSeries> {
    let (first, rest) = acts
        .split_first()
        .ok_or_else(|| Error::Config("empty activation stack".into()))?;
    rest.iter()
        .try_fold(activation_series(first, degree)?, |acc, act| compose(act, &acc, degree))
}

/// `b_m / b_{m-1}` for `m = 1..=M`, computed from log coefficients.
pub fn ratio_sequence(s: &PowerSeries) -> Result<Vec<f64>> {
    let logs = s.log_coeffs();
    if let Some(index) = logs.iter().position(|l| !l.is_finite()) {
        return Err(Error::RatioUndefined { index });
    }
    Ok(logs.windows(2).map(|w| (w[1] - w[0]).exp()).collect())
}

/// Like [`ratio_sequence`] but yields `None` where a coefficient is zero.
pub fn ratio_sequence_partial(s: &PowerSeries) -> Vec<Option<f64>> {
    s.log_coeffs()
        .windows(2)
        .map(|w| (w[0].is_finite() && w[1].is_finite()).then(|| (w[1] - w[0]).exp()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Geometric,
    SuperGeometric,
    Other,
}

/// Tuning of [`classify_regime_with`].
#[derive(Debug, Clone, Copy)]
pub struct RegimeOptions {
    pub m_min: usize,
    /// Mean-squared log residual above which a fit is rejected.
    pub threshold: f64,
    /// Fitted exponents below this collapse the super-geometric model onto
    /// the geometric one.
    pub min_delta: f64,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        Self { m_min: 5, threshold: 0.1, min_delta: 0.05 }
    }
}

/// Outcome of a coefficient-decay fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRegime {
    pub kind: RegimeKind,
    /// Geometric rate, set iff `kind == Geometric`.
    pub r: Option<f64>,
    /// Super-geometric exponent, set iff `kind == SuperGeometric`.
    pub delta: Option<f64>,
    /// Residual of the selected model (mean squared, log scale).
    pub fit_residual: f64,
    pub geometric_residual: f64,
    pub super_geometric_residual: f64,
    /// Tightest `c_1 ≥ b_m / r^m` and `c_2 ≤ b_m / r^m` on the fitted range.
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    /// Fitted `Q` in `b_m / b_{m-1} ≈ Q m^{-δ}`.
    pub ratio_constant: Option<f64>,
    pub fitted_from: usize,
    pub fitted_to: usize,
}

impl DecayRegime {
    /// `1 / (1 − 2δ)` for super-geometric fits with `δ < 1/2`.
    pub fn alpha(&self) -> Option<f64> {
        self.delta.filter(|&d| d < 0.5).map(|d| 1.0 / (1.0 - 2.0 * d))
    }
}

/// [`classify_regime_with`] using default threshold and `m_min`.
pub fn classify_regime(s: &PowerSeries, m_min: usize) -> Result<DecayRegime> {
    classify_regime_with(s, &RegimeOptions { m_min, ..Default::default() })
}

/// Fits `log b_m` linearly in `m` (geometric) and the per-step
/// `log(b_m / b_{m'})` linearly in `log m` (super-geometric) over the
/// positive coefficients with index ≥ `m_min`. Lacunary series are fitted on
/// their nonzero subsequence.
pub fn classify_regime_with(s: &PowerSeries, opts: &RegimeOptions) -> Result<DecayRegime> {
    let logs = s.log_coeffs();
    let idx: Vec<usize> = (opts.m_min..logs.len()).filter(|&m| logs[m].is_finite()).collect();
    if idx.len() < 8 {
        return Err(Error::Fit(format!(
            "{} positive coefficients at or beyond m = {}; need 8",
            idx.len(),
            opts.m_min
        )));
    }

    let xg: Vec<f64> = idx.iter().map(|&m| m as f64).collect();
    let yg: Vec<f64> = idx.iter().map(|&m| logs[m]).collect();
    let (_, sg, geometric_residual) = linear_fit(&xg, &yg);
    let r = sg.exp();

    let (xs, ys): (Vec<f64>, Vec<f64>) = idx
        .windows(2)
        .map(|w| {
            let gap = (w[1] - w[0]) as f64;
            ((w[1] as f64).ln(), (logs[w[1]] - logs[w[0]]) / gap)
        })
        .unzip();
    let (is, ss, super_geometric_residual) = linear_fit(&xs, &ys);
    let delta = -ss;

    let geometric_ok = r > 0.0 && r < 1.0 && geometric_residual <= opts.threshold;
    let super_ok = delta >= opts.min_delta && super_geometric_residual <= opts.threshold;
    let kind = match (geometric_ok, super_ok) {
        (true, true) if super_geometric_residual < geometric_residual => RegimeKind::SuperGeometric,
        (true, _) => RegimeKind::Geometric,
        (false, true) => RegimeKind::SuperGeometric,
        (false, false) => RegimeKind::Other,
    };

    let mut out = DecayRegime {
        kind,
        r: None,
        delta: None,
        fit_residual: geometric_residual.min(super_geometric_residual),
        geometric_residual,
        super_geometric_residual,
        c1: None,
        c2: None,
        ratio_constant: None,
        fitted_from: idx[0],
        fitted_to: *idx.last().expect("nonempty"),
    };
    match kind {
        RegimeKind::Geometric => {
            let excess: Vec<f64> = idx.iter().map(|&m| logs[m] - m as f64 * sg).collect();
            out.r = Some(r);
            out.fit_residual = geometric_residual;
            out.c1 = Some(excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max).exp());
            out.c2 = Some(excess.iter().cloned().fold(f64::INFINITY, f64::min).exp());
        }
        RegimeKind::SuperGeometric => {
            out.delta = Some(delta);
            out.fit_residual = super_geometric_residual;
            out.ratio_constant = Some(is.exp());
        }
        RegimeKind::Other => {}
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn assert_coeffs(s: &PowerSeries, expected: &[f64]) {
        assert_eq!(s.coeffs().len(), expected.len());
        for (a, b) in s.coeffs().iter().zip(expected) {
            assert_relative_eq!(*a, *b, max_relative = 1e-14, epsilon = 1e-300);
        }
    }

    #[test]
    fn catalog_series() {
        assert_coeffs(&activation_series(&Activation::Exp, 3).unwrap(), &[1.0, 1.0, 0.5, 1.0 / 6.0]);
        assert_coeffs(&activation_series(&Activation::Square, 3).unwrap(), &[0.0, 0.0, 1.0, 0.0]);
        assert_coeffs(
            &activation_series(&Activation::InversePoly, 3).unwrap(),
            &[0.5, 0.25, 0.125, 0.0625],
        );
    }

    #[test]
    fn erf_and_hinge_low_order() {
        let e = activation_series(&Activation::ErfSigmoid, 5).unwrap();
        assert_coeffs(&e, &[0.5, 1.0, 0.0, PI / 3.0, 0.0, PI * PI / 10.0]);
        let h = activation_series(&Activation::SmoothHinge, 4).unwrap();
        assert_coeffs(&h, &[1.0 / (2.0 * PI), 0.5, 0.5, 0.0, PI / 12.0]);
    }

    #[test]
    fn unknown_activation_is_catalog_error() {
        assert!(matches!("relu".parse::<Activation>(), Err(Error::Catalog(_))));
        assert_eq!("inverse_poly".parse::<Activation>().unwrap(), Activation::InversePoly);
    }

    #[test]
    fn serde_shape() {
        let a: Activation = serde_json::from_str(r#"{"kind":"polynomial","coeffs":[0,0,1]}"#).unwrap();
        assert_eq!(a, Activation::Polynomial { coeffs: vec![0.0, 0.0, 1.0] });
        let b: Activation = serde_json::from_str(r#"{"kind":"exp"}"#).unwrap();
        assert_eq!(b, Activation::Exp);
        assert!(serde_json::from_str::<Activation>(r#"{"kind":"relu"}"#).is_err());
    }

    #[test]
    fn taylor_at_zero_matches_series() {
        for act in [
            Activation::Exp,
            Activation::InversePoly,
            Activation::ErfSigmoid,
            Activation::SmoothHinge,
            Activation::Polynomial { coeffs: vec![1.0, -2.0, 0.5] },
        ] {
            let a = act.taylor_at(0.0, 12).unwrap();
            let s = activation_series(&act, 12).unwrap();
            for (x, y) in a.iter().zip(s.coeffs()) {
                assert_relative_eq!(*x, *y, max_relative = 1e-13, epsilon = 1e-300);
            }
        }
    }

    #[test]
    fn kernel_fn_matches_its_series() {
        for act in [Activation::ErfSigmoid, Activation::SmoothHinge] {
            let s = activation_series(&act, 120).unwrap();
            for t in [-1.0, -0.3, 0.0, 0.7, 1.0, 1.8] {
                assert_relative_eq!(act.kernel_fn(t), s.eval(t), max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn hinge_derivative_is_erf_sigmoid() {
        let h = 1e-5;
        for x in [-1.2, -0.1, 0.4, 2.0] {
            let d = (Activation::SmoothHinge.eval(x + h) - Activation::SmoothHinge.eval(x - h)) / (2.0 * h);
            assert_relative_eq!(d, Activation::ErfSigmoid.eval(x), max_relative = 1e-8);
        }
    }

    #[test]
    fn exp_of_exp_constant_term() {
        let s = compose_stack(&[Activation::Exp, Activation::Exp], 3).unwrap();
        let e = std::f64::consts::E;
        assert_coeffs(&s, &[e, e, e, 5.0 * e / 6.0]);
    }

    #[test]
    fn square_of_identity() {
        let id = PowerSeries::from_coeffs(vec![0.0, 1.0]).unwrap().with_exact_degree(Some(1));
        let s = compose(&Activation::Polynomial { coeffs: vec![0.0, 0.0, 1.0] }, &id, 4).unwrap();
        assert_coeffs(&s, &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(s.exact_degree(), Some(2));
    }

    #[test]
    fn exp_of_zero_series() {
        let zero = PowerSeries::from_coeffs(vec![0.0; 4]).unwrap();
        assert_coeffs(&compose(&Activation::Exp, &zero, 3).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn single_layer_stack_is_activation() {
        let s = compose_stack(&[Activation::Exp], 3).unwrap();
        assert_coeffs(&s, &[1.0, 1.0, 0.5, 1.0 / 6.0]);
    }

    #[test]
    fn inverse_poly_of_square() {
        // innermost first: 1 / (2 − x²)
        let s = compose_stack(&[Activation::Square, Activation::InversePoly], 4).unwrap();
        assert_coeffs(&s, &[0.5, 0.0, 0.25, 0.0, 0.125]);
    }

    #[test]
    fn inverse_poly_pole_is_reported() {
        let inner = PowerSeries::from_coeffs(vec![2.5, 1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            compose(&Activation::InversePoly, &inner, 3),
            Err(Error::CompositionUnsupported { .. })
        ));
    }

    #[test]
    fn compose_needs_enough_inner_terms() {
        let inner = activation_series(&Activation::Exp, 3).unwrap();
        assert!(matches!(compose(&Activation::Exp, &inner, 5), Err(Error::InsufficientDegree { .. })));
    }

    #[test]
    fn ratios() {
        let r = ratio_sequence(&activation_series(&Activation::Exp, 6).unwrap()).unwrap();
        for (m, v) in r.iter().enumerate() {
            assert_relative_eq!(*v, 1.0 / (m + 1) as f64, max_relative = 1e-14);
        }
        let r = ratio_sequence(&activation_series(&Activation::InversePoly, 6).unwrap()).unwrap();
        assert!(r.iter().all(|v| (v - 0.5).abs() < 1e-15));
        let lacunary = compose_stack(&[Activation::Square, Activation::Exp], 6).unwrap();
        assert!(matches!(ratio_sequence(&lacunary), Err(Error::RatioUndefined { index: 1 })));
        let partial = ratio_sequence_partial(&lacunary);
        assert_eq!(partial[0], None);
        assert_eq!(partial[1], None);
    }

    #[test]
    fn classify_inverse_poly_geometric() {
        let s = activation_series(&Activation::InversePoly, 80).unwrap();
        let reg = classify_regime(&s, 5).unwrap();
        assert_eq!(reg.kind, RegimeKind::Geometric);
        assert!((reg.r.unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn classify_exp_super_geometric() {
        let s = activation_series(&Activation::Exp, 80).unwrap();
        let reg = classify_regime(&s, 5).unwrap();
        assert_eq!(reg.kind, RegimeKind::SuperGeometric);
        assert!((reg.delta.unwrap() - 1.0).abs() < 0.05);
        assert!(reg.alpha().is_none());
    }

    #[test]
    fn classify_lacunary_fits_even_subsequence() {
        // exp(x²): b_{2k} = 1/k!, i.e. δ = 1/2 per unit step of m
        let s = compose_stack(&[Activation::Square, Activation::Exp], 80).unwrap();
        let reg = classify_regime(&s, 5).unwrap();
        assert_eq!(reg.kind, RegimeKind::SuperGeometric);
        assert!((reg.delta.unwrap() - 0.5).abs() < 0.05, "{reg:?}");
    }

    #[test]
    fn classify_needs_enough_terms() {
        let s = activation_series(&Activation::Exp, 10).unwrap();
        assert!(matches!(classify_regime(&s, 5), Err(Error::Fit(_))));
    }

    #[test]
    fn csv_export() {
        let csv = activation_series(&Activation::Square, 2).unwrap().to_csv();
        assert_eq!(csv, "m,b_m,log_b_m\n0,0e0,-inf\n1,0e0,-inf\n2,1e0,0e0\n");
    }
}
