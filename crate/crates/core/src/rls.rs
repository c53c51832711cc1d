//! Regularized least squares on the sphere: zonal targets with an exact
//! source condition, regularization schedules, kernel ridge regression and
//! learning-curve experiments.
//!
//! Everything here uses the uniform probability measure on `S^{d-1}`: the
//! operator eigenvalues are the [`Normalization::Probability`] values `μ_m`
//! and a zonal term `a P_{m,d}(⟨x, p⟩)` has squared norm `a² / α_{m,d}`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{gram_matrix, KernelSpec};
use crate::linalg::{cholesky_solve, mat_vec};
use crate::series::{classify_regime, Activation, RegimeKind};
use crate::special::{linear_fit, median, quantile};
use crate::spectrum::{Normalization, SpectrumTable, DEFAULT_TOL};
use crate::sphere::{dot, harmonic_dim, rng_for, sample_uniform_sphere_with, zonal_poly_unchecked};

/// Zonal target `f_ρ(x) = Σ a_m P_{m,d}(⟨x, p⟩)` with `f_ρ = T^{β/2} g`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub d: usize,
    pub pole: Vec<f64>,
    /// `(m, a_m)`
    pub terms: Vec<(usize, f64)>,
    pub beta: f64,
    /// Probability-measure eigenvalue `μ_m` of each term's degree.
    pub eigenvalues: Vec<f64>,
    /// `‖g‖²_ρ = Σ a_m² μ_m^{-β} / α_{m,d}`
    pub g_norm_sq: f64,
    /// `(Σ |a_m|)² ≥ sup |f_ρ|²`
    pub f_sup_sq: f64,
    /// Set when `g_norm_sq` exceeds the budget passed at construction.
    pub budget_warning: Option<String>,
}

impl TargetSpec {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let t = dot(x, &self.pole).clamp(-1.0, 1.0);
        self.terms.iter().map(|&(m, a)| a * zonal_poly_unchecked(m, self.d, t)).sum()
    }

    /// `‖f_ρ‖²_ρ`
    pub fn norm_sq(&self) -> f64 {
        self.terms.iter().map(|&(m, a)| a * a * zonal_weight(m, self.d)).sum()
    }
}

/// Squared `L²(ρ)` norm of `P_{m,d}(⟨·, p⟩)`, i.e. `1 / α_{m,d}`.
pub fn zonal_weight(m: usize, d: usize) -> f64 {
    1.0 / harmonic_dim(m, d).expect("dimension validated") as f64
}

/// Builds a zonal target; `spec` may be in any normalization.
///
/// Repeated degrees are merged. `budget` bounds `‖g‖²_ρ`; exceeding it
/// records a warning instead of failing.
pub fn make_zonal_target(
    spec: &SpectrumTable,
    beta: f64,
    terms: &[(usize, f64)],
    pole: &[f64],
    budget: Option<f64>,
) -> Result<TargetSpec> {
    if !(beta > 0.0 && beta <= 2.0) {
        return Err(Error::Domain(format!("source exponent β = {beta} outside (0, 2]")));
    }
    let d = spec.d;
    if pole.len() != d || (dot(pole, pole).sqrt() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain("pole must be a unit vector of the ambient dimension".into()));
    }
    let spec = spec.rescaled(Normalization::Probability);
    let mut merged: Vec<(usize, f64)> = Vec::new();
    for &(m, a) in terms {
        match merged.iter_mut().find(|(k, _)| *k == m) {
            Some(slot) => slot.1 += a,
            None => merged.push((m, a)),
        }
    }
    merged.sort_by_key(|&(m, _)| m);
    let mut eigenvalues = Vec::with_capacity(merged.len());
    let mut g_norm_sq = 0.0;
    for &(m, a) in &merged {
        let &(_, mu) = spec
            .distinct
            .get(m)
            .ok_or_else(|| Error::ExtendDegree(format!("target degree {m} beyond computed degree {}", spec.max_degree())))?;
        if !(mu > 0.0) {
            return Err(Error::UnrealizableSource(m));
        }
        eigenvalues.push(mu);
        g_norm_sq += a * a * zonal_weight(m, d) * mu.powf(-beta);
    }
    let f_sup_sq = merged.iter().map(|(_, a)| a.abs()).sum::<f64>().powi(2);
    let budget_warning = budget
        .filter(|&b| g_norm_sq > b)
        .map(|b| format!("‖g‖² = {g_norm_sq:e} exceeds the budget {b:e}; target is outside the intended source class"));
    Ok(TargetSpec { d, pole: pole.to_vec(), terms: merged, beta, eigenvalues, g_norm_sq, f_sup_sq, budget_warning })
}

/// First basis vector of `R^d`.
pub fn default_pole(d: usize) -> Vec<f64> {
    let mut p = vec![0.0; d];
    p[0] = 1.0;
    p
}

/// Population regularized solution: coefficient `μ_m a_m / (μ_m + λ)` per term.
pub fn population_solution(t: &TargetSpec, lambda: f64) -> Vec<(usize, f64)> {
    t.terms.iter().zip(&t.eigenvalues).map(|(&(m, a), &mu)| (m, mu * a / (mu + lambda))).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproximationCheck {
    pub lambda: f64,
    /// `‖f_{ρ,λ} − f_ρ‖²_ρ`
    pub error_sq: f64,
    /// `λ^β ‖g‖²_ρ`
    pub bound: f64,
    pub holds: bool,
}

/// Exact approximation error of the population solution against `λ^β ‖g‖²`.
pub fn approximation_error(t: &TargetSpec, lambda: f64) -> Result<ApproximationCheck> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("regularization {lambda} must be positive")));
    }
    let error_sq: f64 = t
        .terms
        .iter()
        .zip(&t.eigenvalues)
        .map(|(&(m, a), &mu)| {
            let r = lambda / (mu + lambda);
            a * a * zonal_weight(m, t.d) * r * r
        })
        .sum();
    let bound = lambda.powf(t.beta) * t.g_norm_sq;
    Ok(ApproximationCheck { lambda, error_sq, bound, holds: error_sq <= bound })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    /// Uniform on `[-m, m]`.
    Bounded { m: f64 },
}

impl Default for NoiseKind {
    fn default() -> Self {
        NoiseKind::Gaussian { sigma: 0.1 }
    }
}

impl NoiseKind {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            NoiseKind::Bounded { m } => rng.random_range(-m..=m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<f64>,
    pub noise: NoiseKind,
    pub seed: u64,
}

/// `ell` uniform inputs with `y = f_ρ(x) + ε`. Inputs and noise use separate
/// streams of `seed`.
pub fn sample_dataset(t: &TargetSpec, noise: NoiseKind, ell: usize, seed: u64) -> Dataset {
    let inputs = sample_uniform_sphere_with(ell, t.d, &mut rng_for(seed, 1));
    let mut rng = rng_for(seed, 2);
    let outputs = inputs.iter().map(|x| t.eval(x) + noise.sample(&mut rng)).collect();
    Dataset { inputs, outputs, noise, seed }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub regime: RegimeKind,
    pub beta: f64,
    pub d: usize,
    /// Log exponent used when `β = 1`.
    pub mu: Option<f64>,
}

/// Regularization `λ_ℓ` prescribed for the regime and source exponent.
pub fn schedule_lambda(s: &ScheduleSpec, ell: f64) -> Result<f64> {
    if !(ell >= 3.0) {
        return Err(Error::Schedule(format!("ℓ = {ell} < 3 leaves log log ℓ nonpositive")));
    }
    if !(s.beta > 0.0 && s.beta <= 2.0) {
        return Err(Error::Schedule(format!("β = {} outside (0, 2]", s.beta)));
    }
    let dm1 = s.d as f64 - 1.0;
    let (l, ll) = (ell.ln(), ell.ln().ln());
    let mu = || s.mu.ok_or_else(|| Error::Schedule("β = 1 needs the log exponent μ".into()));
    match s.regime {
        RegimeKind::Geometric => {
            if s.beta > 1.0 {
                Ok(ell.powf(-1.0 / s.beta))
            } else if s.beta == 1.0 {
                let mu = mu()?;
                if !(mu > dm1) {
                    return Err(Error::Schedule(format!("μ = {mu} must exceed d − 1 = {dm1}")));
                }
                Ok(l.powf(mu) / ell)
            } else {
                Ok(l.powf(dm1 / s.beta) / ell)
            }
        }
        RegimeKind::SuperGeometric => {
            if s.beta > 1.0 {
                Ok(ell.powf(-1.0 / s.beta))
            } else if s.beta == 1.0 {
                let mu = mu()?;
                Ok(l.powf(mu) / (ll.powf(mu) * ell))
            } else {
                let e = dm1 / s.beta;
                Ok(l.powf(e) / (ll.powf(e) * ell))
            }
        }
        RegimeKind::Other => Err(Error::Schedule("no schedule for an unclassified regime".into())),
    }
}

/// Number of tenfold jitter escalations attempted by [`fit_krr`].
pub const MAX_ESCALATIONS: usize = 3;

/// `f_z(x) = Σ a_i K(x_i, x)` with its solve diagnostics.
#[derive(Debug, Clone)]
pub struct KrrEstimator {
    kernel: KernelSpec,
    pub points: Vec<Vec<f64>>,
    pub coeffs: Vec<f64>,
    pub lambda: f64,
    /// `λ` after jitter escalation.
    pub effective_lambda: f64,
    pub escalations: usize,
    /// `(tr G + λℓ) / (λℓ)`, an upper bound on the condition number.
    pub condition_estimate: f64,
    /// `(1/ℓ) Σ (f_z(x_i) − y_i)² + λ aᵀGa`
    pub primal_objective: f64,
    /// `λ aᵀy`, equal to the primal value at the optimum.
    pub dual_objective: f64,
}

impl KrrEstimator {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .zip(&self.coeffs)
            .map(|(p, a)| a * self.kernel.eval_t(dot(p, x).clamp(-1.0, 1.0)))
            .sum()
    }
}

/// Solves `(G + λℓ I) a = y` by Cholesky, escalating `λ` tenfold up to
/// [`MAX_ESCALATIONS`] times if the factorization fails.
pub fn fit_krr(data: &Dataset, k: &KernelSpec, lambda: f64) -> Result<KrrEstimator> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("regularization {lambda} must be positive")));
    }
    let ell = data.inputs.len();
    if ell == 0 || data.outputs.len() != ell {
        return Err(Error::Shape(format!("{ell} inputs with {} outputs", data.outputs.len())));
    }
    let g = gram_matrix(k, &data.inputs)?;
    let trace: f64 = (0..ell).map(|i| g[(i, i)]).sum();
    let mut lam = lambda;
    let mut last_err = None;
    for escalations in 0..=MAX_ESCALATIONS {
        let shift = lam * ell as f64;
        let mut a = g.clone();
        for i in 0..ell {
            a[(i, i)] += shift;
        }
        match cholesky_solve(&a, &data.outputs) {
            Ok(coeffs) => {
                let fitted = mat_vec(&g, &coeffs);
                let resid: f64 = fitted.iter().zip(&data.outputs).map(|(f, y)| (f - y) * (f - y)).sum();
                let quad: f64 = coeffs.iter().zip(&fitted).map(|(a, f)| a * f).sum();
                let primal_objective = resid / ell as f64 + lam * quad;
                let dual_objective = lam * coeffs.iter().zip(&data.outputs).map(|(a, y)| a * y).sum::<f64>();
                return Ok(KrrEstimator {
                    kernel: k.clone(),
                    points: data.inputs.clone(),
                    coeffs,
                    lambda,
                    effective_lambda: lam,
                    escalations,
                    condition_estimate: (trace + shift) / shift,
                    primal_objective,
                    dual_objective,
                });
            }
            Err(e) => {
                last_err = Some(e);
                lam *= 10.0;
            }
        }
    }
    let shift = lambda * ell as f64;
    Err(Error::Numerical(format!(
        "kernel ridge solve failed after {MAX_ESCALATIONS} escalations (condition estimate {:e}): {}",
        (trace + shift) / shift,
        last_err.expect("at least one attempt")
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub mean: f64,
    pub std_err: f64,
}

/// Monte-Carlo estimate of `‖f_z − f_ρ‖²_ρ` on `n_test` fresh uniform points.
pub fn excess_risk(est: &KrrEstimator, t: &TargetSpec, n_test: usize, seed: u64) -> Result<RiskEstimate> {
    risk_of(|x| est.predict(x), t, n_test, seed)
}

/// Monte-Carlo `‖h − f_ρ‖²_ρ` for an arbitrary predictor `h`.
pub fn risk_of<F: Fn(&[f64]) -> f64 + Sync>(h: F, t: &TargetSpec, n_test: usize, seed: u64) -> Result<RiskEstimate> {
    if n_test < 100 {
        return Err(Error::Domain(format!("n_test = {n_test} below 100")));
    }
    let pts = sample_uniform_sphere_with(n_test, t.d, &mut rng_for(seed, 3));
    let sq: Vec<f64> = pts
        .par_iter()
        .map(|x| {
            let e = h(x) - t.eval(x);
            e * e
        })
        .collect();
    let n = n_test as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = sq.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    Ok(RiskEstimate { mean, std_err: (var / n).sqrt() })
}

fn default_ell_grid() -> Vec<usize> {
    (6..=12).map(|k| 1 << k).collect()
}
fn default_replicates() -> usize {
    10
}
fn default_n_test() -> usize {
    10_000
}
fn default_target() -> Vec<(usize, f64)> {
    vec![(0, 0.5), (1, 0.5)]
}
fn default_spectrum_degree() -> usize {
    30
}

/// Learning-curve experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearningCurveConfig {
    pub stack: Vec<Activation>,
    pub d: usize,
    pub beta: f64,
    /// Classified from the kernel series when absent.
    #[serde(default)]
    pub regime: Option<RegimeKind>,
    #[serde(default = "default_ell_grid")]
    pub ell_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default)]
    pub noise: NoiseKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n_test")]
    pub n_test: usize,
    #[serde(default)]
    pub mu: Option<f64>,
    /// Zonal terms `(m, a_m)` of the target.
    #[serde(default = "default_target")]
    pub target: Vec<(usize, f64)>,
    #[serde(default = "default_spectrum_degree")]
    pub spectrum_degree: usize,
}

impl LearningCurveConfig {
    pub fn new(stack: Vec<Activation>, d: usize, beta: f64) -> Self {
        Self {
            stack,
            d,
            beta,
            regime: None,
            ell_grid: default_ell_grid(),
            replicates: default_replicates(),
            noise: NoiseKind::default(),
            seed: 0,
            n_test: default_n_test(),
            mu: None,
            target: default_target(),
            spectrum_degree: default_spectrum_degree(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveRow {
    pub ell: usize,
    pub lambda: f64,
    pub risk_median: f64,
    pub risk_iqr: f64,
    pub risks: Vec<f64>,
    /// Total jitter escalations over replicates.
    pub escalations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurve {
    pub regime: RegimeKind,
    pub d: usize,
    pub beta: f64,
    pub rows: Vec<LearningCurveRow>,
    /// Slope of `log risk_median` on `log` of [`compensated_sample_size`].
    pub rate_exponent: f64,
    /// Number of `ℓ` steps where the median risk increased.
    pub inversions: usize,
    pub target: TargetSpec,
}

impl LearningCurve {
    /// CSV `ell,lambda,risk_median,risk_iqr` with a final `rate_exponent` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("ell,lambda,risk_median,risk_iqr\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:e},{:e},{:e}\n", r.ell, r.lambda, r.risk_median, r.risk_iqr));
        }
        out.push_str(&format!("rate_exponent,{},,\n", self.rate_exponent));
        out
    }
}

/// `ℓ / log(ℓ)^{d-1}`, times `(log log ℓ)^{d-1}` in the super-geometric regime.
pub fn compensated_sample_size(ell: f64, d: usize, regime: RegimeKind) -> f64 {
    let p = d as i32 - 1;
    let base = ell / ell.ln().powi(p);
    match regime {
        RegimeKind::SuperGeometric => base * ell.ln().ln().powi(p),
        _ => base,
    }
}

fn split_seed(base: u64, a: u64, b: u64) -> u64 {
    // splitmix64 finalizer over the combined key
    let mut z = base ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the experiment. Replicates are independent and seeded by
/// `(seed, ℓ index, replicate)`, so results do not depend on scheduling.
pub fn learning_curve(cfg: &LearningCurveConfig) -> Result<LearningCurve> {
    if cfg.replicates == 0 || cfg.ell_grid.len() < 2 {
        return Err(Error::Config("need at least one replicate and two sample sizes".into()));
    }
    let k = KernelSpec::for_spectrum(cfg.stack.clone(), cfg.d, cfg.spectrum_degree)?;
    let regime = match cfg.regime {
        Some(r) => r,
        None => classify_regime(k.series(), 5)?.kind,
    };
    let spec = k.spectrum(cfg.spectrum_degree, DEFAULT_TOL, Normalization::Probability)?;
    let target = make_zonal_target(&spec, cfg.beta, &cfg.target, &default_pole(cfg.d), None)?;
    let schedule = ScheduleSpec { regime, beta: cfg.beta, d: cfg.d, mu: cfg.mu };

    let mut rows = Vec::with_capacity(cfg.ell_grid.len());
    for (j, &ell) in cfg.ell_grid.iter().enumerate() {
        let lambda = schedule_lambda(&schedule, ell as f64)?;
        let runs: Vec<(f64, usize)> = (0..cfg.replicates)
            .into_par_iter()
            .map(|r| {
                let seed = split_seed(cfg.seed, j as u64, r as u64);
                let data = sample_dataset(&target, cfg.noise, ell, seed);
                let est = fit_krr(&data, &k, lambda)?;
                Ok((excess_risk(&est, &target, cfg.n_test, seed)?.mean, est.escalations))
            })
            .collect::<Result<_>>()?;
        let risks: Vec<f64> = runs.iter().map(|r| r.0).collect();
        rows.push(LearningCurveRow {
            ell,
            lambda,
            risk_median: median(&risks),
            risk_iqr: quantile(&risks, 0.75) - quantile(&risks, 0.25),
            escalations: runs.iter().map(|r| r.1).sum(),
            risks,
        });
    }
    let x: Vec<f64> = rows.iter().map(|r| compensated_sample_size(r.ell as f64, cfg.d, regime).ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.risk_median.ln()).collect();
    let (_, rate_exponent, _) = linear_fit(&x, &y);
    let inversions = rows.windows(2).filter(|w| w[1].risk_median > w[0].risk_median).count();
    Ok(LearningCurve { regime, d: cfg.d, beta: cfg.beta, rows, rate_exponent, inversions, target })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::sample_uniform_sphere;
    use approx::assert_relative_eq;

    fn inv_spec(d: usize) -> (KernelSpec, SpectrumTable) {
        let k = KernelSpec::for_spectrum(vec![Activation::InversePoly], d, 20).unwrap();
        let s = k.spectrum(20, DEFAULT_TOL, Normalization::Probability).unwrap();
        (k, s)
    }

    #[test]
    fn target_examples() {
        let (_, s) = inv_spec(3);
        let p = default_pole(3);
        let t = make_zonal_target(&s, 1.0, &[(0, 1.0)], &p, None).unwrap();
        assert_relative_eq!(t.eval(&[0.0, 1.0, 0.0]), 1.0);
        assert_relative_eq!(t.g_norm_sq, 1.0 / s.distinct[0].1);

        let z = make_zonal_target(&s, 1.0, &[], &p, None).unwrap();
        assert_eq!((z.g_norm_sq, z.eval(&p)), (0.0, 0.0));

        let beta = 1.5;
        let terms: Vec<(usize, f64)> = (0..=5).map(|m| (m, s.distinct[m].1.powf(beta / 2.0))).collect();
        let t = make_zonal_target(&s, beta, &terms, &p, Some(1e-3)).unwrap();
        let expected: f64 = (0..=5).map(|m| zonal_weight(m, 3)).sum();
        assert_relative_eq!(t.g_norm_sq, expected, max_relative = 1e-12);
        assert!(t.budget_warning.is_some());
        assert!(t.f_sup_sq >= t.eval(&p).powi(2));
    }

    #[test]
    fn target_errors() {
        let k = KernelSpec::new(vec![Activation::Square], 3, 10).unwrap();
        let s = k.spectrum(4, DEFAULT_TOL, Normalization::Probability).unwrap();
        let p = default_pole(3);
        assert!(matches!(make_zonal_target(&s, 1.0, &[(1, 1.0)], &p, None), Err(Error::UnrealizableSource(1))));
        assert!(matches!(make_zonal_target(&s, 2.5, &[(0, 1.0)], &p, None), Err(Error::Domain(_))));
        assert!(matches!(make_zonal_target(&s, 1.0, &[(9, 1.0)], &p, None), Err(Error::ExtendDegree(_))));
    }

    #[test]
    fn schedule_examples() {
        let g2 = ScheduleSpec { regime: RegimeKind::Geometric, beta: 2.0, d: 3, mu: None };
        assert_relative_eq!(schedule_lambda(&g2, 1e6).unwrap(), 1e-3, max_relative = 1e-12);
        let g1 = ScheduleSpec { regime: RegimeKind::Geometric, beta: 1.0, d: 3, mu: Some(3.0) };
        let e10 = 10f64.exp();
        assert_relative_eq!(schedule_lambda(&g1, e10).unwrap(), 1e3 / e10, max_relative = 1e-12);
        assert!(matches!(schedule_lambda(&g2, 2.0), Err(Error::Schedule(_))));
        let bad = ScheduleSpec { mu: Some(2.0), ..g1 };
        assert!(matches!(schedule_lambda(&bad, 100.0), Err(Error::Schedule(_))));
        let s1 = ScheduleSpec { regime: RegimeKind::SuperGeometric, beta: 0.5, d: 3, mu: None };
        let l = 1e4f64;
        assert_relative_eq!(
            schedule_lambda(&s1, l).unwrap(),
            (l.ln() / l.ln().ln()).powf(4.0) / l,
            max_relative = 1e-12
        );
    }

    #[test]
    fn schedules_decrease() {
        for regime in [RegimeKind::Geometric, RegimeKind::SuperGeometric] {
            for beta in [0.5, 1.0, 2.0] {
                let s = ScheduleSpec { regime, beta, d: 3, mu: Some(3.0) };
                let v: Vec<f64> = (10..30).map(|k| schedule_lambda(&s, 2f64.powi(k)).unwrap()).collect();
                assert!(v.windows(2).all(|w| w[1] < w[0]), "{regime:?} β={beta}");
            }
        }
    }

    #[test]
    fn dataset_properties() {
        let (_, s) = inv_spec(3);
        let t = make_zonal_target(&s, 1.0, &[(0, 0.3), (2, 0.7)], &default_pole(3), None).unwrap();
        let clean = sample_dataset(&t, NoiseKind::Gaussian { sigma: 0.0 }, 50, 4);
        for (x, y) in clean.inputs.iter().zip(&clean.outputs) {
            assert_eq!(*y, t.eval(x));
        }
        let a = sample_dataset(&t, NoiseKind::default(), 10_000, 5);
        assert_eq!(a, sample_dataset(&t, NoiseKind::default(), 10_000, 5));
        let res: Vec<f64> = a.inputs.iter().zip(&a.outputs).map(|(x, y)| y - t.eval(x)).collect();
        let mean = res.iter().sum::<f64>() / res.len() as f64;
        let var = res.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (res.len() - 1) as f64;
        assert!((var - 0.01).abs() < 0.001, "{var}");
        let b = sample_dataset(&t, NoiseKind::Bounded { m: 0.2 }, 1000, 5);
        assert!(b.inputs.iter().zip(&b.outputs).all(|(x, y)| (y - t.eval(x)).abs() <= 0.2));
    }

    #[test]
    fn krr_examples() {
        let (k, s) = inv_spec(3);
        let t = make_zonal_target(&s, 1.0, &[(1, 1.0)], &default_pole(3), None).unwrap();
        let data = sample_dataset(&t, NoiseKind::default(), 40, 6);

        let big = fit_krr(&data, &k, 1e12).unwrap();
        assert!(big.coeffs.iter().all(|a| a.abs() < 1e-12));

        let one = Dataset { inputs: vec![default_pole(3)], outputs: vec![2.0], noise: NoiseKind::default(), seed: 0 };
        let est = fit_krr(&one, &k, 0.25).unwrap();
        assert_relative_eq!(est.coeffs[0], 2.0 / (k.eval_t(1.0) + 0.25), max_relative = 1e-14);

        let est = fit_krr(&data, &k, 1e-3).unwrap();
        assert_relative_eq!(est.primal_objective, est.dual_objective, max_relative = 1e-8);
        assert!(fit_krr(&data, &k, 0.0).is_err());
    }

    #[test]
    fn near_interpolation() {
        let (k, _) = inv_spec(3);
        let pts = sample_uniform_sphere(30, 3, 8);
        // target in span{K(x_i, ·)}
        let c: Vec<f64> = (0..30).map(|i| ((i % 5) as f64 - 2.0) * 0.1).collect();
        let outputs: Vec<f64> =
            pts.iter().map(|x| pts.iter().zip(&c).map(|(p, ci)| ci * k.eval_t(dot(p, x))).sum()).collect();
        let data = Dataset { inputs: pts.clone(), outputs: outputs.clone(), noise: NoiseKind::default(), seed: 0 };
        let est = fit_krr(&data, &k, 1e-12).unwrap();
        for (x, y) in pts.iter().zip(&outputs) {
            assert!((est.predict(x) - y).abs() < 1e-6);
        }
    }

    #[test]
    fn risk_of_zero_predictor() {
        let (_, s) = inv_spec(3);
        let t = make_zonal_target(&s, 1.0, &[(2, 0.8)], &default_pole(3), None).unwrap();
        let r = risk_of(|_| 0.0, &t, 20_000, 1).unwrap();
        let exact = 0.64 * zonal_weight(2, 3);
        assert!((r.mean - exact).abs() < 4.0 * r.std_err, "{r:?} vs {exact}");
        assert_eq!(r, risk_of(|_| 0.0, &t, 20_000, 1).unwrap());
        let perfect = risk_of(|x| t.eval(x), &t, 1000, 1).unwrap();
        assert_eq!(perfect.mean, 0.0);
        assert!(risk_of(|_| 0.0, &t, 10, 1).is_err());
    }

    #[test]
    fn approximation_bound_holds() {
        let (_, s) = inv_spec(3);
        for beta in [0.5, 1.0, 2.0] {
            let t = make_zonal_target(&s, beta, &[(0, 0.4), (1, -0.3), (3, 0.2)], &default_pole(3), None).unwrap();
            for k in 0..20 {
                let c = approximation_error(&t, 10f64.powf(-8.0 + 0.5 * k as f64)).unwrap();
                assert!(c.holds, "{c:?}");
            }
        }
    }

    #[test]
    fn zero_noise_easy_case() {
        // μ_1 = 1/e for exp on S², so the regularization bias at ℓ = 1024 is ≈ 5e-4
        let mut cfg = LearningCurveConfig::new(vec![Activation::Exp], 3, 2.0);
        cfg.ell_grid = vec![256, 1024];
        cfg.replicates = 2;
        cfg.n_test = 2000;
        cfg.noise = NoiseKind::Gaussian { sigma: 0.0 };
        cfg.target = vec![(1, 0.5)];
        let lc = learning_curve(&cfg).unwrap();
        assert_eq!(lc.regime, RegimeKind::SuperGeometric);
        assert!(lc.rows[1].risk_median < 1e-3, "{:?}", lc.rows);
        assert!(lc.to_csv().lines().last().unwrap().starts_with("rate_exponent,"));
    }

    #[test]
    fn config_roundtrip() {
        let cfg = LearningCurveConfig::new(vec![Activation::InversePoly], 3, 2.0);
        let back: LearningCurveConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
        let minimal: LearningCurveConfig =
            serde_json::from_str(r#"{"stack":[{"kind":"inverse_poly"}],"d":3,"beta":2.0}"#).unwrap();
        assert_eq!(minimal, cfg);
    }
}
