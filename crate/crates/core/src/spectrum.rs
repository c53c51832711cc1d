//! Mercer spectrum of dot-product kernels `K(x, y) = f(⟨x, y⟩)` on `S^{d-1}`.
//!
//! Distinct eigenvalues come from the Taylor coefficients `b_n` of `f`:
//!
//! `λ_m = |S^{d-2}| Γ((d-1)/2) / 2^{m+1} · Σ_s b_{2s+m} (2s+m)!/(2s)! · Γ(s+1/2) / Γ(s+m+d/2)`
//!
//! Every term is nonnegative, so the sum is accumulated in log space and
//! stopped once a term is both negligible and shrinking at least
//! geometrically with ratio 1/2.
//!
//! Against direct quadrature this value is exactly half the eigenvalue of
//! `g ↦ ∫ K(x, ·) g(x) dσ(x)` with unnormalized surface measure
//! ([`FORMULA_TO_LEBESGUE`]). [`Normalization`] converts between the raw
//! formula, that operator, and the operator under the uniform probability
//! measure. All decay checks here are invariant under the choice.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::series::{DecayRegime, PowerSeries, RegimeKind};
use crate::special::{linear_fit, ln_gamma, neumaier_sum, LogSum};
use crate::sphere::{cumulative_dim, harmonic_dim, surface_area};

/// Ratio between the Lebesgue-measure operator eigenvalue and the formula
/// value, measured with the `d = 2` quadrature oracle.
pub const FORMULA_TO_LEBESGUE: f64 = 2.0;

/// Default relative tolerance for the eigenvalue series.
pub const DEFAULT_TOL: f64 = 1e-16;

/// Relative tail allowance for [`degrees_of_freedom`].
pub const DF_TAIL_TOL: f64 = 1e-4;

/// Largest multiplicity-expanded spectrum materialized in a table.
const MAX_SORTED: u64 = 50_000_000;

/// Smallest `b_n` index gap that identifies a structurally vanishing λ_m.
const STRUCTURAL_ZERO_TERMS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Value of the eigenvalue formula as written.
    #[default]
    Formula,
    /// Operator with unnormalized surface measure.
    Lebesgue,
    /// Operator with the uniform probability measure.
    Probability,
}

impl Normalization {
    /// Multiplier from formula values to this normalization.
    pub fn factor(self, d: usize) -> f64 {
        match self {
            Normalization::Formula => 1.0,
            Normalization::Lebesgue => FORMULA_TO_LEBESGUE,
            Normalization::Probability => FORMULA_TO_LEBESGUE / surface_area(d),
        }
    }
}

/// One eigenvalue with its truncation record (formula normalization).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenTerm {
    pub m: usize,
    pub value: f64,
    pub log_value: f64,
    /// Number of `s` terms visited.
    pub terms: usize,
    /// Bound on the omitted part of the `s`-sum.
    pub tail_bound: f64,
}

fn eigen_term(s: &PowerSeries, d: usize, m: usize, tol: f64) -> Result<EigenTerm> {
    let dd = d as f64;
    let log_pref = surface_area(d - 1).ln() + ln_gamma((dd - 1.0) / 2.0) - (m as f64 + 1.0) * LN_2;
    let log_tol = tol.ln();
    let mut acc = LogSum::default();
    let mut prev: Option<f64> = None;
    let mut ratio_ok = false;
    let mut terms = 0;
    let mut log_tail = f64::NEG_INFINITY;
    let mut si = 0usize;
    loop {
        let n = 2 * si + m;
        if s.exact_degree().is_some_and(|e| n > e) {
            break;
        }
        let Some(lb) = s.log_coeff(n) else {
            if acc.ln() == f64::NEG_INFINITY && terms >= STRUCTURAL_ZERO_TERMS {
                // every coefficient of this parity vanishes
                break;
            }
            return Err(if ratio_ok {
                Error::Truncation { m, terms }
            } else {
                Error::InsufficientDegree { required: n + 2, available: s.degree() }
            });
        };
        terms += 1;
        if lb > f64::NEG_INFINITY {
            let (sf, nf) = (si as f64, n as f64);
            let lt = lb + ln_gamma(nf + 1.0) - ln_gamma(2.0 * sf + 1.0) + ln_gamma(sf + 0.5)
                - ln_gamma(sf + m as f64 + dd / 2.0);
            acc.add_log(lt);
            if let Some(p) = prev {
                ratio_ok = lt - p < -LN_2;
                if ratio_ok && lt < log_tol + acc.ln() {
                    log_tail = lt;
                    break;
                }
            }
            prev = Some(lt);
        }
        si += 1;
    }
    let log_value = log_pref + acc.ln();
    Ok(EigenTerm {
        m,
        value: log_value.exp(),
        log_value,
        terms,
        tail_bound: (log_pref + log_tail).exp(),
    })
}

/// `λ_0, …, λ_{m_deg}` in formula normalization, with truncation records.
///
/// Fails with an insufficient-degree error when the series ends before the
/// tail is certified geometric, and with a truncation error when it is
/// geometric but still above `tol`.
pub fn distinct_eigenvalues_report(s: &PowerSeries, d: usize, m_deg: usize, tol: f64) -> Result<Vec<EigenTerm>> {
    if d < 2 {
        return Err(Error::Domain(format!("ambient dimension must be ≥ 2, got {d}")));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return Err(Error::Domain(format!("tolerance {tol} outside (0, 1)")));
    }
    (0..=m_deg).into_par_iter().map(|m| eigen_term(s, d, m, tol)).collect()
}

/// `λ_0, …, λ_{m_deg}` in formula normalization.
pub fn distinct_eigenvalues(s: &PowerSeries, d: usize, m_deg: usize, tol: f64) -> Result<Vec<f64>> {
    Ok(distinct_eigenvalues_report(s, d, m_deg, tol)?.into_iter().map(|t| t.value).collect())
}

/// Series degree that comfortably certifies every `λ_m` up to `m_deg` for the
/// catalog stacks.
pub fn recommended_series_degree(m_deg: usize) -> usize {
    4 * m_deg + 60
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoundaryPolicy {
    /// Refuse counts within 10% of the computed boundary.
    #[default]
    Refuse,
    /// Return whatever the computed degrees cover.
    Allow,
}

/// Largest `η_1 ≥ η_2 ≥ …` obtained by repeating each `λ_m` with
/// multiplicity `α_{m,d}`.
///
/// Entries beyond the computed degrees are assumed smaller than the last
/// computed eigenvalue; under [`BoundaryPolicy::Refuse`] that assumption is
/// checked on the tail of `distinct` and counts above 90% of the computed
/// total are rejected.
pub fn sorted_spectrum(distinct: &[f64], d: usize, count: usize, policy: BoundaryPolicy) -> Result<Vec<f64>> {
    if distinct.is_empty() {
        return Err(Error::ExtendDegree("no eigenvalues computed".into()));
    }
    let boundary = cumulative_dim(distinct.len() - 1, d)?;
    if count as u64 > boundary {
        return Err(Error::ExtendDegree(format!(
            "{count} eigenvalues requested but degrees ≤ {} only provide {boundary}",
            distinct.len() - 1
        )));
    }
    if policy == BoundaryPolicy::Refuse {
        if count as f64 > 0.9 * boundary as f64 {
            return Err(Error::ExtendDegree(format!(
                "{count} eigenvalues is within 10% of the {boundary} covered by computed degrees"
            )));
        }
        let tail: Vec<f64> = distinct.iter().rev().copied().filter(|&v| v > 0.0).take(3).collect();
        if tail.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::ExtendDegree("eigenvalues still increasing at the last computed degree".into()));
        }
    }
    let mut pairs: Vec<(f64, u64)> = distinct
        .iter()
        .enumerate()
        .map(|(m, &v)| Ok((v, harmonic_dim(m, d)?)))
        .collect::<Result<_>>()?;
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut out = Vec::with_capacity(count);
    for (v, mult) in pairs {
        let take = (count - out.len()).min(mult as usize);
        out.extend(std::iter::repeat_n(v, take));
        if out.len() == count {
            break;
        }
    }
    Ok(out)
}

/// Per-degree truncation record of a [`SpectrumTable`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationEntry {
    pub m: usize,
    pub terms: usize,
    pub tail_bound: f64,
}

/// Distinct and multiplicity-expanded spectrum in one normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumTable {
    pub d: usize,
    pub normalization: Normalization,
    /// `(m, λ_m)` for `m = 0..=max_degree`.
    pub distinct: Vec<(usize, f64)>,
    pub log_distinct: Vec<f64>,
    pub multiplicities: Vec<u64>,
    /// All computed eigenvalues with multiplicity, non-increasing.
    pub sorted: Vec<f64>,
    pub truncation_report: Vec<TruncationEntry>,
    /// Trace of the full operator (all degrees).
    pub trace: f64,
    /// Upper bound on the sum of all eigenvalues not in `sorted`.
    pub tail_mass: f64,
}

impl SpectrumTable {
    /// Spectrum of the kernel whose function is the series itself.
    pub fn compute(s: &PowerSeries, d: usize, m_deg: usize, tol: f64, normalization: Normalization) -> Result<Self> {
        let f_one = neumaier_sum(s.coeffs().iter().copied());
        Self::compute_with_trace(s, d, m_deg, tol, normalization, f_one)
    }

    /// As [`compute`](Self::compute), with `f(1)` supplied from a closed form
    /// so that the tail mass covers coefficients beyond the series degree.
    pub fn compute_with_trace(
        s: &PowerSeries,
        d: usize,
        m_deg: usize,
        tol: f64,
        normalization: Normalization,
        f_one: f64,
    ) -> Result<Self> {
        let total = cumulative_dim(m_deg, d)?;
        if total > MAX_SORTED {
            return Err(Error::Width(format!("{total} eigenvalues with multiplicity")));
        }
        let terms = distinct_eigenvalues_report(s, d, m_deg, tol)?;
        let scale = normalization.factor(d);
        let multiplicities: Vec<u64> = (0..=m_deg).map(|m| harmonic_dim(m, d)).collect::<Result<_>>()?;
        let distinct: Vec<(usize, f64)> = terms.iter().map(|t| (t.m, t.value * scale)).collect();
        let log_distinct = terms.iter().map(|t| t.log_value + scale.ln()).collect();
        let mut sorted = Vec::with_capacity(total as usize);
        for (&(_, v), &mult) in distinct.iter().zip(&multiplicities) {
            sorted.extend(std::iter::repeat_n(v, mult as usize));
        }
        sorted.sort_by(|a, b| b.total_cmp(a));

        // Σ_m α_{m,d} λ_m^{Leb} = |S^{d-1}| f(1)
        let trace = surface_area(d) * f_one / FORMULA_TO_LEBESGUE * scale;
        let partial = neumaier_sum(sorted.iter().rev().copied());
        let truncation: f64 =
            terms.iter().zip(&multiplicities).map(|(t, &a)| a as f64 * t.tail_bound * scale).sum();
        let tail_mass = (trace - partial).max(0.0) + truncation + 8.0 * f64::EPSILON * trace * (m_deg as f64 + 1.0);

        Ok(Self {
            d,
            normalization,
            distinct,
            log_distinct,
            multiplicities,
            sorted,
            truncation_report: terms
                .iter()
                .map(|t| TruncationEntry { m: t.m, terms: t.terms, tail_bound: t.tail_bound * scale })
                .collect(),
            trace,
            tail_mass,
        })
    }

    pub fn max_degree(&self) -> usize {
        self.distinct.len() - 1
    }

    pub fn distinct_values(&self) -> Vec<f64> {
        self.distinct.iter().map(|&(_, v)| v).collect()
    }

    /// Same spectrum in another normalization.
    pub fn rescaled(&self, normalization: Normalization) -> Self {
        let k = normalization.factor(self.d) / self.normalization.factor(self.d);
        Self {
            d: self.d,
            normalization,
            distinct: self.distinct.iter().map(|&(m, v)| (m, v * k)).collect(),
            log_distinct: self.log_distinct.iter().map(|l| l + k.ln()).collect(),
            multiplicities: self.multiplicities.clone(),
            sorted: self.sorted.iter().map(|v| v * k).collect(),
            truncation_report: self
                .truncation_report
                .iter()
                .map(|t| TruncationEntry { tail_bound: t.tail_bound * k, ..*t })
                .collect(),
            trace: self.trace * k,
            tail_mass: self.tail_mass * k,
        }
    }

    /// CSV with header `m,alpha_m_d,lambda_m,log_lambda_m`.
    pub fn distinct_csv(&self) -> String {
        let mut out = String::from("m,alpha_m_d,lambda_m,log_lambda_m\n");
        for ((&(m, v), a), l) in self.distinct.iter().zip(&self.multiplicities).zip(&self.log_distinct) {
            out.push_str(&format!("{m},{a},{v:e},{l:e}\n"));
        }
        out
    }

    /// CSV with header `i,eta_i` (1-based).
    pub fn sorted_csv(&self) -> String {
        let mut out = String::from("i,eta_i\n");
        for (i, v) in self.sorted.iter().enumerate() {
            out.push_str(&format!("{},{v:e}\n", i + 1));
        }
        out
    }
}

/// `Σ_i η_i / (η_i + λ)` over a finite list.
pub fn df_of(eta: &[f64], lambda: f64) -> f64 {
    neumaier_sum(eta.iter().rev().map(|&e| e / (e + lambda)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfValue {
    pub value: f64,
    /// Bound on the contribution of eigenvalues outside the table.
    pub tail_bound: f64,
}

/// Degrees of freedom `df(λ) = Σ_i μ_i / (μ_i + λ)` of the table's operator.
pub fn degrees_of_freedom(spec: &SpectrumTable, lambda: f64) -> Result<DfValue> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("regularization {lambda} must be positive")));
    }
    let value = df_of(&spec.sorted, lambda);
    let tail_bound = spec.tail_mass / lambda;
    if tail_bound > DF_TAIL_TOL * value {
        return Err(Error::ExtendDegree(format!(
            "omitted eigenvalues may add {tail_bound:e} to df({lambda:e}) = {value:e}"
        )));
    }
    Ok(DfValue { value, tail_bound })
}

/// Envelope `μ_i ≤ C_0 e^{-γ i^{1/α}}` (1-based `i`) and the resulting
/// constant `Q` in `df(λ) ≤ Q log(1/λ)^α`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfBoundParams {
    pub c0: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub q: f64,
}

/// `∫_1^∞ (log u + 1)^{α-1} / (C_0 u + u²) du`, computed as
/// `∫_0^∞ (x + 1)^{α-1} / (C_0 + e^x) dx`.
pub fn df_bound_integral(c0: f64, alpha: f64) -> Result<f64> {
    let f = |x: f64| (x + 1.0).powf(alpha - 1.0) / (c0 + x.exp());
    // integrand ≤ (x+1)^{α-1} e^{-x}; past `hi` it is below 1e-300
    let hi = 700.0 + 2.0 * (alpha - 1.0).max(0.0) * 700f64.ln();
    let q = quad::integrate(f, 0.0, hi.min(708.0), 0.0, 1e-12)?;
    Ok(q.value)
}

impl DfBoundParams {
    /// Computes `Q = γ^{-α} [1 + α C_0 I]` with `I` from [`df_bound_integral`].
    ///
    /// The factor `α` on the integral comes from `Σ_i` of the envelope being
    /// compared with `∫ dt` after the change of variable `u = e^{γ t^{1/α}}`
    /// (`dt = α γ^{-α} (log u)^{α-1} du / u`).
    pub fn new(c0: f64, gamma: f64, alpha: f64) -> Result<Self> {
        for (name, v) in [("C_0", c0), ("γ", gamma), ("α", alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} = {v} must be positive")));
            }
        }
        let q = gamma.powf(-alpha) * (1.0 + alpha * c0 * df_bound_integral(c0, alpha)?);
        Ok(Self { c0, gamma, alpha, q })
    }

    /// Fits `γ` by least squares of `log η_i` on `i^{1/α}`, then the smallest
    /// `C_0` making the envelope hold on every positive `η_i`.
    pub fn fit(eta: &[f64], alpha: f64) -> Result<Self> {
        let pts: Vec<(f64, f64)> = eta
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0.0)
            .map(|(i, &e)| (((i + 1) as f64).powf(1.0 / alpha), e.ln()))
            .collect();
        if pts.len() < 3 {
            return Err(Error::Fit("fewer than three positive eigenvalues".into()));
        }
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let (_, slope, _) = linear_fit(&x, &y);
        let gamma = -slope;
        if !(gamma > 0.0) {
            return Err(Error::Fit(format!("envelope rate {gamma} is not positive")));
        }
        let log_c0 = pts.iter().map(|(x, y)| y + gamma * x).fold(f64::NEG_INFINITY, f64::max);
        Self::new(log_c0.exp(), gamma, alpha)
    }

    /// `Q log(1/λ)^α`, stated for `0 < λ ≤ e^{-1}`.
    pub fn bound(&self, lambda: f64) -> Result<f64> {
        df_bound_geometric(self, lambda)
    }
}

/// `Q log(1/λ)^α` for `0 < λ ≤ e^{-1}`.
pub fn df_bound_geometric(p: &DfBoundParams, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= (-1f64).exp()) {
        return Err(Error::Domain(format!("df bound needs 0 < λ ≤ 1/e, got {lambda}")));
    }
    Ok(p.q * (-lambda.ln()).powf(p.alpha))
}

/// Largest λ at which the super-geometric shape is used (`log log(1/λ) ≥ 1`).
pub fn supergeometric_lambda_max() -> f64 {
    (-std::f64::consts::E).exp()
}

/// `log(1/λ)^{d-1} / (log log(1/λ))^{d-1}`.
pub fn supergeometric_shape(lambda: f64, d: usize) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= supergeometric_lambda_max()) {
        return Err(Error::Domain(format!("super-geometric df shape needs 0 < λ ≤ e^(-e), got {lambda}")));
    }
    let l = -lambda.ln();
    Ok((l / l.ln()).powi(d as i32 - 1))
}

/// Reference regularization at which the super-geometric constant is fitted.
pub const SUPERGEOMETRIC_LAMBDA_REF: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfRow {
    pub lambda: f64,
    pub df: f64,
    pub bound: f64,
    /// `df / bound`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperGeometricDfReport {
    pub c: f64,
    pub lambda_ref: f64,
    pub rows: Vec<DfRow>,
    pub max_ratio: f64,
    /// Whether `c · shape` dominates `df` at every grid point.
    pub dominates: bool,
}

/// Fits `c = df(λ_ref) / shape(λ_ref)` and evaluates `c · shape(λ)` against
/// `df(λ)` on `grid`.
pub fn df_bound_supergeometric(spec: &SpectrumTable, regime: &DecayRegime, grid: &[f64]) -> Result<SuperGeometricDfReport> {
    if regime.kind != RegimeKind::SuperGeometric {
        return Err(Error::Regime(format!("super-geometric df bound applied to a {:?} series", regime.kind)));
    }
    let lambda_ref = SUPERGEOMETRIC_LAMBDA_REF;
    let c = degrees_of_freedom(spec, lambda_ref)?.value / supergeometric_shape(lambda_ref, spec.d)?;
    let rows: Vec<DfRow> = grid
        .iter()
        .map(|&lambda| {
            let df = degrees_of_freedom(spec, lambda)?.value;
            let bound = c * supergeometric_shape(lambda, spec.d)?;
            Ok(DfRow { lambda, df, bound, ratio: df / bound })
        })
        .collect::<Result<_>>()?;
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(SuperGeometricDfReport { c, lambda_ref, dominates: max_ratio <= 1.0 + 1e-12, max_ratio, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SandwichConstants {
    pub r: f64,
    pub c1: f64,
    pub c2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    pub regime: RegimeKind,
    pub fitted_constants: SandwichConstants,
    pub slope: f64,
    /// `[log(r/4), log r]`
    pub slope_range: [f64; 2],
    pub pass: bool,
}

/// Tightest `C_2 (r/4)^m ≤ λ_m ≤ C_1 r^m` over the given range, plus the
/// regression slope of `log λ_m` on `m`, which must lie in `[log(r/4), log r]`.
pub fn check_geometric_sandwich(distinct: &[f64], r: f64) -> Result<SandwichReport> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("rate {r} outside (0, 1)")));
    }
    if let Some(i) = distinct.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Positivity(i));
    }
    if distinct.len() < 2 {
        return Err(Error::Fit("need at least two eigenvalues".into()));
    }
    let (lr, lq) = (r.ln(), (r / 4.0).ln());
    let logs: Vec<f64> = distinct.iter().map(|v| v.ln()).collect();
    let ms: Vec<f64> = (0..distinct.len()).map(|m| m as f64).collect();
    let c1 = logs.iter().zip(&ms).map(|(l, m)| l - m * lr).fold(f64::NEG_INFINITY, f64::max).exp();
    let c2 = logs.iter().zip(&ms).map(|(l, m)| l - m * lq).fold(f64::INFINITY, f64::min).exp();
    let (_, slope, _) = linear_fit(&ms, &logs);
    Ok(SandwichReport {
        regime: RegimeKind::Geometric,
        fitted_constants: SandwichConstants { r, c1, c2 },
        slope,
        slope_range: [lq, lr],
        pass: lq <= slope && slope <= lr,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuperGeometricConstants {
    /// Fitted coefficient `ĉ` of `−i^{1/(d-1)} log i`.
    pub c_hat: f64,
    pub intercept: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MenegatoReport {
    pub delta: f64,
    pub alpha: f64,
    /// Fitted constant `K`.
    pub k: f64,
    pub fitted_upto: usize,
    /// Largest `λ_m / (K · rhs_m)` beyond the fitted range.
    pub max_later_ratio: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperGeometricReport {
    pub regime: RegimeKind,
    pub fitted_constants: SuperGeometricConstants,
    /// Same as `fitted_constants.c_hat`.
    pub slope: f64,
    /// Mean squared residual of the super-geometric model.
    pub residual: f64,
    /// Mean squared residual of the geometric alternative `−i^{1/(d-1)}`.
    pub geometric_residual: f64,
    /// Residual slope against normalized position, relative to the range of `log η`.
    pub residual_trend: f64,
    pub menegato: Option<MenegatoReport>,
    pub pass: bool,
}

impl SuperGeometricReport {
    pub fn with_menegato(mut self, m: MenegatoReport) -> Self {
        self.pass &= m.pass;
        self.menegato = Some(m);
        self
    }
}

/// Regresses `log η_i` on `−i^{1/(d-1)} log i` (1-based `i`).
///
/// Passes when the coefficient is positive and the model explains the data
/// better than the geometric alternative `−i^{1/(d-1)}`, i.e. the residuals
/// carry no systematic `log i` trend.
pub fn check_supergeometric_decay(eta: &[f64], delta: f64, d: usize) -> Result<SuperGeometricReport> {
    if !(delta > 0.0) {
        return Err(Error::Domain(format!("δ = {delta} must be positive")));
    }
    if d < 2 {
        return Err(Error::Domain(format!("ambient dimension must be ≥ 2, got {d}")));
    }
    if let Some(i) = eta.iter().position(|&v| !(v > 0.0)) {
        return Err(Error::Positivity(i));
    }
    if eta.len() < 4 {
        return Err(Error::Fit("need at least four eigenvalues".into()));
    }
    let p = 1.0 / (d as f64 - 1.0);
    let idx: Vec<f64> = (1..=eta.len()).map(|i| i as f64).collect();
    let y: Vec<f64> = eta.iter().map(|v| v.ln()).collect();
    let xs: Vec<f64> = idx.iter().map(|i| -i.powf(p) * i.ln()).collect();
    let xg: Vec<f64> = idx.iter().map(|i| -i.powf(p)).collect();
    let (intercept, c_hat, residual) = linear_fit(&xs, &y);
    let (_, _, geometric_residual) = linear_fit(&xg, &y);

    let n = eta.len() as f64;
    let pos: Vec<f64> = (0..eta.len()).map(|i| i as f64 / (n - 1.0)).collect();
    let res: Vec<f64> = xs.iter().zip(&y).map(|(x, y)| y - intercept - c_hat * x).collect();
    let range = y.iter().copied().fold(f64::NEG_INFINITY, f64::max) - y.iter().copied().fold(f64::INFINITY, f64::min);
    let (_, trend, _) = linear_fit(&pos, &res);

    Ok(SuperGeometricReport {
        regime: RegimeKind::SuperGeometric,
        fitted_constants: SuperGeometricConstants { c_hat, intercept, delta },
        slope: c_hat,
        residual,
        geometric_residual,
        residual_trend: if range > 0.0 { trend / range } else { 0.0 },
        menegato: None,
        pass: c_hat > 0.0 && residual < geometric_residual,
    })
}

/// Checks `λ_m ≤ K m^{mδ/(2α) + 1/α} b_m / (2^{m+1} m^{(d-2)/2})`,
/// `α = 1/(1 − 2δ)`, with `K` fitted on `1 ≤ m ≤ fit_upto`.
pub fn check_menegato_bound(
    distinct: &[f64],
    s: &PowerSeries,
    delta: f64,
    d: usize,
    fit_upto: usize,
) -> Result<MenegatoReport> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::Domain(format!("bound needs 0 < δ < 1/2, got {delta}")));
    }
    if fit_upto < 1 || distinct.len() <= fit_upto + 1 {
        return Err(Error::Fit("no degrees left beyond the fitted range".into()));
    }
    let alpha = 1.0 / (1.0 - 2.0 * delta);
    let mut log_ratio = Vec::with_capacity(distinct.len() - 1);
    for (m, &lam) in distinct.iter().enumerate().skip(1) {
        let lb = s.log_coeff(m).ok_or(Error::InsufficientDegree { required: m, available: s.degree() })?;
        if !(lam > 0.0) || lb == f64::NEG_INFINITY {
            return Err(Error::Positivity(m));
        }
        let mf = m as f64;
        let rhs = (mf * delta / (2.0 * alpha) + 1.0 / alpha) * mf.ln() + lb
            - (mf + 1.0) * LN_2
            - (d as f64 - 2.0) / 2.0 * mf.ln();
        log_ratio.push(lam.ln() - rhs);
    }
    let log_k = log_ratio[..fit_upto].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let later = log_ratio[fit_upto..].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(MenegatoReport {
        delta,
        alpha,
        k: log_k.exp(),
        fitted_upto: fit_upto,
        max_later_ratio: (later - log_k).exp(),
        pass: later <= log_k + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::series::{activation_series, compose_stack, Activation};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn bessel_i(m: usize, x: f64) -> f64 {
        (0..60)
            .map(|k| {
                let lt = (2 * k + m) as f64 * (x / 2.0).ln() - ln_gamma(k as f64 + 1.0) - ln_gamma((k + m) as f64 + 1.0);
                lt.exp()
            })
            .sum()
    }

    #[test]
    fn exp_circle_matches_bessel() {
        // ∫ e^{cos θ} cos(mθ) dθ = 2π I_m(1)
        let s = activation_series(&Activation::Exp, 120).unwrap();
        let lam = distinct_eigenvalues(&s, 2, 12, DEFAULT_TOL).unwrap();
        for (m, l) in lam.iter().enumerate() {
            assert_relative_eq!(FORMULA_TO_LEBESGUE * l, 2.0 * PI * bessel_i(m, 1.0), max_relative = 1e-12);
        }
    }

    #[test]
    fn polynomial_kernel_has_finite_spectrum() {
        let s = PowerSeries::from_coeffs(vec![0.0, 0.0, 1.0]).unwrap().with_exact_degree(Some(2));
        let lam = distinct_eigenvalues(&s, 3, 8, DEFAULT_TOL).unwrap();
        assert!(lam[0] > 0.0 && lam[2] > 0.0);
        assert_eq!(lam[1], 0.0);
        assert!(lam[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_series_is_rejected() {
        let s = activation_series(&Activation::InversePoly, 10).unwrap();
        assert!(matches!(
            distinct_eigenvalues(&s, 3, 8, DEFAULT_TOL),
            Err(Error::InsufficientDegree { .. } | Error::Truncation { .. })
        ));
    }

    #[test]
    fn lacunary_series_gives_structural_zeros() {
        let s = compose_stack(&[Activation::Square, Activation::Exp], 100).unwrap();
        let lam = distinct_eigenvalues(&s, 3, 6, DEFAULT_TOL).unwrap();
        assert!(lam[1] == 0.0 && lam[3] == 0.0 && lam[2] > 0.0);
    }

    #[test]
    fn trace_identity() {
        for d in [2, 3, 4, 5] {
            let s = activation_series(&Activation::Exp, 150).unwrap();
            let t = SpectrumTable::compute(&s, d, 40, DEFAULT_TOL, Normalization::Probability).unwrap();
            let sum: f64 = t.sorted.iter().sum();
            // log-gamma round-off at large arguments is ~1e-13
            assert_relative_eq!(sum, std::f64::consts::E, max_relative = 1e-12);
            assert!(t.tail_mass < 1e-11);
        }
    }

    #[test]
    fn sorted_examples() {
        let s = sorted_spectrum(&[4.0, 2.0, 1.0], 3, 9, BoundaryPolicy::Allow).unwrap();
        assert_eq!(s, vec![4.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        assert_eq!(sorted_spectrum(&[1.0, 3.0, 2.0, 1.5], 3, 1, BoundaryPolicy::Refuse).unwrap(), vec![3.0]);
        assert!(matches!(sorted_spectrum(&[4.0, 2.0, 1.0], 3, 9, BoundaryPolicy::Refuse), Err(Error::ExtendDegree(_))));
        assert!(matches!(sorted_spectrum(&[4.0, 2.0, 1.0], 3, 10, BoundaryPolicy::Allow), Err(Error::ExtendDegree(_))));
        assert!(matches!(sorted_spectrum(&[1.0, 2.0, 3.0], 3, 2, BoundaryPolicy::Refuse), Err(Error::ExtendDegree(_))));
    }

    #[test]
    fn table_multiplicities() {
        let s = activation_series(&Activation::InversePoly, 200).unwrap();
        let t = SpectrumTable::compute(&s, 3, 20, DEFAULT_TOL, Normalization::Formula).unwrap();
        assert_eq!(t.sorted.len() as u64, cumulative_dim(20, 3).unwrap());
        assert!(t.sorted.windows(2).all(|w| w[0] >= w[1]));
        for (&(_, v), &a) in t.distinct.iter().zip(&t.multiplicities) {
            assert_eq!(t.sorted.iter().filter(|&&x| x == v).count() as u64, a);
        }
        let p = t.rescaled(Normalization::Lebesgue);
        assert_relative_eq!(p.sorted[0], 2.0 * t.sorted[0]);
    }

    #[test]
    fn df_examples() {
        assert_relative_eq!(df_of(&[1.0, 1.0], 1.0), 1.0);
        let s = activation_series(&Activation::Exp, 150).unwrap();
        let t = SpectrumTable::compute(&s, 3, 30, DEFAULT_TOL, Normalization::Probability).unwrap();
        let big = 1e12 * t.sorted[0];
        assert!(degrees_of_freedom(&t, big).unwrap().value < 1e-10 * t.sorted.len() as f64);
        // strictly decreasing in λ
        let mut last = 0.0;
        for k in 1..10 {
            let v = degrees_of_freedom(&t, 10f64.powi(-k)).unwrap().value;
            assert!(v > last);
            last = v;
        }
        assert!(degrees_of_freedom(&t, 0.0).is_err());
    }

    #[test]
    fn df_tail_certification() {
        let s = activation_series(&Activation::InversePoly, 60).unwrap();
        let t = SpectrumTable::compute_with_trace(&s, 3, 4, 1e-12, Normalization::Probability, 1.0).unwrap();
        assert!(matches!(degrees_of_freedom(&t, 1e-8), Err(Error::ExtendDegree(_))));
    }

    #[test]
    fn q_closed_form_alpha_one() {
        for c0 in [0.5, 3.0, 40.0] {
            let p = DfBoundParams::new(c0, 2.0, 1.0).unwrap();
            let integral = (1.0 + c0).ln() / c0;
            assert_relative_eq!(df_bound_integral(c0, 1.0).unwrap(), integral, max_relative = 1e-10);
            assert_relative_eq!(p.q, 0.5 * (1.0 + c0 * integral), max_relative = 1e-10);
            assert_relative_eq!(p.bound((-1f64).exp()).unwrap(), p.q, max_relative = 1e-14);
        }
    }

    #[test]
    fn geometric_bound_domain() {
        let p = DfBoundParams::new(1.0, 1.0, 2.0).unwrap();
        assert!(matches!(p.bound(0.5), Err(Error::Domain(_))));
        assert!(matches!(p.bound(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn geometric_bound_dominates_exact_envelope() {
        // μ_i = C_0 e^{-γ i^{1/α}} is the extremal spectrum
        for alpha in [1.0, 2.0, 3.0] {
            let (c0, gamma) = (5.0, 0.7);
            let eta: Vec<f64> =
                (1..200_000).map(|i| c0 * (-gamma * (i as f64).powf(1.0 / alpha)).exp()).collect();
            let p = DfBoundParams::new(c0, gamma, alpha).unwrap();
            for k in 1..9 {
                let l = (-(k as f64) * 2.0).exp();
                assert!(df_of(&eta, l) <= p.bound(l).unwrap(), "α={alpha}, λ={l}");
            }
        }
    }

    #[test]
    fn sandwich_synthetic() {
        let geo: Vec<f64> = (0..30).map(|m| 0.3f64.powi(m)).collect();
        let rep = check_geometric_sandwich(&geo, 0.5).unwrap();
        assert!(rep.pass && rep.fitted_constants.c1.is_finite() && rep.fitted_constants.c2 > 0.0);
        assert_relative_eq!(rep.slope, 0.3f64.ln(), max_relative = 1e-12);
        let poly: Vec<f64> = (1..60).map(|m| (m as f64).powi(-2)).collect();
        assert!(!check_geometric_sandwich(&poly, 0.5).unwrap().pass);
        assert!(matches!(check_geometric_sandwich(&[1.0, 0.0], 0.5), Err(Error::Positivity(1))));
    }

    #[test]
    fn geometric_input_fails_supergeometric_check() {
        let lam: Vec<f64> = (0..=30).map(|m| 0.5f64.powi(m)).collect();
        let eta = sorted_spectrum(&lam, 3, 800, BoundaryPolicy::Refuse).unwrap();
        assert!(!check_supergeometric_decay(&eta, 0.5, 3).unwrap().pass);
    }

    #[test]
    fn exp_passes_supergeometric_check() {
        let s = activation_series(&Activation::Exp, 200).unwrap();
        let t = SpectrumTable::compute(&s, 3, 30, DEFAULT_TOL, Normalization::Formula).unwrap();
        let rep = check_supergeometric_decay(&t.sorted, 1.0, 3).unwrap();
        assert!(rep.pass, "{rep:?}");
    }

    #[test]
    fn supergeometric_df_rejects_geometric_regime() {
        let s = activation_series(&Activation::InversePoly, 200).unwrap();
        let regime = crate::series::classify_regime(&s, 5).unwrap();
        let t = SpectrumTable::compute(&s, 3, 20, DEFAULT_TOL, Normalization::Probability).unwrap();
        assert!(matches!(df_bound_supergeometric(&t, &regime, &[1e-4]), Err(Error::Regime(_))));
    }

    #[test]
    fn csv_headers() {
        let s = PowerSeries::from_coeffs(vec![1.0, 1.0]).unwrap().with_exact_degree(Some(1));
        let t = SpectrumTable::compute(&s, 3, 2, DEFAULT_TOL, Normalization::Formula).unwrap();
        assert!(t.distinct_csv().starts_with("m,alpha_m_d,lambda_m,log_lambda_m\n0,1,"));
        assert_eq!(t.sorted_csv().lines().count(), 1 + 9);
    }
}
