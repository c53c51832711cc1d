//! Direct evaluation of `K(x, y) = f_N(…f_1(⟨x, y⟩))`, Gram matrices and
//! the two independent spectral oracles (Monte-Carlo Gram spectrum and, on
//! the circle, Fourier quadrature).

use faer::Mat;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigenvalues;
use crate::quad;
use crate::series::{compose_stack, Activation, PowerSeries};
use crate::spectrum::{recommended_series_degree, Normalization, SpectrumTable};
use crate::sphere::{dot, sample_uniform_sphere, surface_area};

/// Largest Gram matrix assembled by the Monte-Carlo oracle.
pub const MAX_GRAM_N: usize = 8000;

/// Tolerance on `|x| = 1` for kernel inputs.
pub const UNIT_TOL: f64 = 1e-9;

/// An activation stack on `S^{d-1}` with its composed Taylor series.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    stack: Vec<Activation>,
    d: usize,
    series: PowerSeries,
}

impl KernelSpec {
    /// Builds the kernel and its series to `series_degree`. Stacks whose
    /// intermediate values reach the pole of `inverse_poly` on `[-1, 1]` are
    /// rejected.
    pub fn new(stack: Vec<Activation>, d: usize, series_degree: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Domain(format!("ambient dimension must be ≥ 2, got {d}")));
        }
        // nonnegative coefficients: |f(t)| ≤ f(1) on [-1, 1]
        let mut v = 1.0;
        for act in &stack {
            if *act == Activation::InversePoly && v >= 2.0 {
                return Err(Error::CompositionUnsupported {
                    outer: act.to_string(),
                    reason: format!("inner kernel reaches {v} ≥ 2 on [-1, 1]"),
                });
            }
            v = act.kernel_fn(v);
        }
        if !v.is_finite() {
            return Err(Error::Numerical("kernel value at t = 1 is not finite".into()));
        }
        let series = compose_stack(&stack, series_degree)?;
        Ok(Self { stack, d, series })
    }

    /// Series degree sized for spectra up to degree `m_deg`.
    pub fn for_spectrum(stack: Vec<Activation>, d: usize, m_deg: usize) -> Result<Self> {
        Self::new(stack, d, recommended_series_degree(m_deg))
    }

    pub fn stack(&self) -> &[Activation] {
        &self.stack
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn series(&self) -> &PowerSeries {
        &self.series
    }

    /// `f_N ∘ … ∘ f_1 (t)` by closed-form evaluation.
    pub fn eval_t(&self, t: f64) -> f64 {
        self.stack.iter().fold(t, |v, act| act.kernel_fn(v))
    }

    pub fn eval_t_complex(&self, z: Complex64) -> Complex64 {
        self.stack.iter().fold(z, |v, act| act.kernel_fn_complex(v))
    }

    /// Spectrum table whose trace uses the closed-form `f(1)`.
    pub fn spectrum(&self, m_deg: usize, tol: f64, normalization: Normalization) -> Result<SpectrumTable> {
        SpectrumTable::compute_with_trace(&self.series, self.d, m_deg, tol, normalization, self.eval_t(1.0))
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::Shape(format!("point of length {} on S^{}", x.len(), self.d - 1)));
        }
        let norm = dot(x, x).sqrt();
        if (norm - 1.0).abs() > UNIT_TOL {
            return Err(Error::Domain(format!("point norm {norm} is not 1")));
        }
        Ok(())
    }
}

/// `K(x, y)` for unit vectors `x`, `y`.
pub fn kernel_eval(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    k.check_point(x)?;
    k.check_point(y)?;
    Ok(k.eval_t(dot(x, y).clamp(-1.0, 1.0)))
}

/// `G_{ij} = K(x_i, x_j)`, exactly symmetric.
pub fn gram_matrix(k: &KernelSpec, pts: &[Vec<f64>]) -> Result<Mat<f64>> {
    for p in pts {
        k.check_point(p)?;
    }
    let n = pts.len();
    let lower: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..=i).map(|j| k.eval_t(dot(&pts[i], &pts[j]).clamp(-1.0, 1.0))).collect())
        .collect();
    Ok(Mat::from_fn(n, n, |i, j| if j <= i { lower[i][j] } else { lower[j][i] }))
}

/// `K(a_i, b_j)` as an `|a| × |b|` matrix.
pub fn cross_gram(k: &KernelSpec, a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<Mat<f64>> {
    for p in a.iter().chain(b) {
        k.check_point(p)?;
    }
    let rows: Vec<Vec<f64>> = a
        .par_iter()
        .map(|x| b.iter().map(|y| k.eval_t(dot(x, y).clamp(-1.0, 1.0))).collect())
        .collect();
    Ok(Mat::from_fn(a.len(), b.len(), |i, j| rows[i][j]))
}

/// Top eigenvalues of `(|S^{d-1}|/n) G` on the given points, non-increasing.
pub fn empirical_spectrum_of(k: &KernelSpec, pts: &[Vec<f64>], top: usize) -> Result<Vec<f64>> {
    let n = pts.len();
    if top > n {
        return Err(Error::Domain(format!("{top} eigenvalues requested from {n} points")));
    }
    if n > MAX_GRAM_N {
        return Err(Error::Domain(format!("{n} points exceeds the Gram size cap {MAX_GRAM_N}")));
    }
    let g = gram_matrix(k, pts)?;
    let scale = surface_area(k.d) / n as f64;
    let mut ev = symmetric_eigenvalues(&g)?;
    ev.truncate(top);
    Ok(ev.into_iter().map(|v| v * scale).collect())
}

/// [`empirical_spectrum_of`] on `n` uniform points drawn from `seed`.
pub fn empirical_spectrum(k: &KernelSpec, n: usize, seed: u64, top: usize) -> Result<Vec<f64>> {
    if top > n {
        return Err(Error::Domain(format!("{top} eigenvalues requested from {n} points")));
    }
    empirical_spectrum_of(k, &sample_uniform_sphere(n, k.d, seed), top)
}

/// CSV with header `i,eigenvalue` (1-based).
pub fn eigen_csv(values: &[f64]) -> String {
    let mut out = String::from("i,eigenvalue\n");
    for (i, v) in values.iter().enumerate() {
        out.push_str(&format!("{},{v:e}\n", i + 1));
    }
    out
}

/// Conservative radius of convergence of the kernel series, from the upper
/// half of the available coefficients.
fn convergence_radius(s: &PowerSeries) -> f64 {
    if s.exact_degree().is_some() {
        return f64::INFINITY;
    }
    let logs = s.log_coeffs();
    let n = logs.len();
    let worst = (n / 2..n)
        .filter(|&i| i > 0 && logs[i] > f64::NEG_INFINITY)
        .map(|i| logs[i] / i as f64)
        .fold(f64::NEG_INFINITY, f64::max);
    if worst == f64::NEG_INFINITY {
        f64::INFINITY
    } else {
        (-worst).exp()
    }
}

/// `∫_{-π}^{π} f(cos θ) cos(mθ) dθ` for `m = 0..=m_max` on the circle.
///
/// The contour is shifted to `θ − iy`, which leaves the integral of the
/// periodic analytic integrand unchanged and replaces the cancelling
/// oscillation by an integrand of the size of the result. `y` is chosen per
/// `m` inside the convergence ellipse of the series.
pub fn quadrature_spectrum_d2(k: &KernelSpec, m_max: usize) -> Result<Vec<f64>> {
    if k.d != 2 {
        return Err(Error::Domain(format!("circle quadrature needs d = 2, got {}", k.d)));
    }
    let radius = convergence_radius(&k.series);
    let y_max = if radius > 1.0 { (0.95 * radius.min(1e4).acosh()).min(8.0) } else { 0.0 };
    const SCAN: usize = 160;
    const PROBE: usize = 64;
    // log max_θ |f(cos(θ − iy))| on a y-grid, shared by every m
    let profile: Vec<(f64, f64)> = (0..=SCAN)
        .map(|j| {
            let y = y_max * j as f64 / SCAN as f64;
            let lm = (0..=PROBE)
                .map(|i| {
                    let th = std::f64::consts::PI * i as f64 / PROBE as f64;
                    k.eval_t_complex(Complex64::new(th, -y).cos()).norm()
                })
                .fold(0.0, f64::max)
                .ln();
            (y, lm)
        })
        .filter(|(_, lm)| lm.is_finite())
        .collect();
    if profile.is_empty() {
        return Err(Error::Numerical("kernel not finite on the circle".into()));
    }
    (0..=m_max)
        .into_par_iter()
        .map(|m| {
            let mf = m as f64;
            let (y, log_scale) = profile
                .iter()
                .map(|&(y, lm)| (y, lm - mf * y))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("nonempty");
            let scale = log_scale.exp();
            let g = |th: f64| {
                let z = Complex64::new(th, -y);
                (k.eval_t_complex(z.cos()) * (Complex64::new(0.0, -mf) * z).exp()).re / scale
            };
            // the real part is even in θ
            let q = quad::integrate(g, 0.0, std::f64::consts::PI, 1e-13, 1e-12)?;
            Ok(2.0 * q.value * scale)
        })
        .collect()
}

/// Agreement of a reference spectrum with `κ ·` an analytic one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumComparison {
    pub kappa: f64,
    pub max_rel_err: f64,
    /// Relative error per index; absolute where the analytic value is exactly 0.
    pub per_index_errors: Vec<f64>,
}

/// `reference / analytic` at the largest analytic entry.
pub fn measure_kappa(reference: &[f64], analytic: &[f64]) -> Result<f64> {
    let (i, &a) = analytic
        .iter()
        .enumerate()
        .max_by(|x, y| x.1.total_cmp(y.1))
        .ok_or_else(|| Error::Shape("empty spectrum".into()))?;
    if !(a > 0.0) {
        return Err(Error::Positivity(i));
    }
    let r = *reference.get(i).ok_or_else(|| Error::Shape("reference shorter than analytic".into()))?;
    Ok(r / a)
}

pub fn compare_spectra(reference: &[f64], analytic: &[f64], kappa: f64) -> Result<SpectrumComparison> {
    if reference.len() != analytic.len() {
        return Err(Error::Shape(format!("{} reference vs {} analytic values", reference.len(), analytic.len())));
    }
    let per_index_errors: Vec<f64> = reference
        .iter()
        .zip(analytic)
        .map(|(&r, &a)| if a == 0.0 { r.abs() } else { (r - kappa * a).abs() / (kappa * a).abs() })
        .collect();
    let max_rel_err = per_index_errors.iter().copied().fold(0.0, f64::max);
    Ok(SpectrumComparison { kappa, max_rel_err, per_index_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::sample_uniform_sphere;
    use approx::assert_relative_eq;
    use std::f64::consts::{E, PI};

    fn exp_kernel(d: usize) -> KernelSpec {
        KernelSpec::new(vec![Activation::Exp], d, 80).unwrap()
    }

    #[test]
    fn eval_examples() {
        let k = exp_kernel(3);
        let x = [1.0, 0.0, 0.0];
        assert_relative_eq!(kernel_eval(&k, &x, &x).unwrap(), E);
        assert_relative_eq!(kernel_eval(&k, &x, &[-1.0, 0.0, 0.0]).unwrap(), 1.0 / E);
        let kk = KernelSpec::new(vec![Activation::Exp, Activation::Exp], 3, 20).unwrap();
        assert_relative_eq!(kernel_eval(&kk, &x, &[0.0, 1.0, 0.0]).unwrap(), E);
        assert!(matches!(kernel_eval(&k, &[1.0, 1.0, 0.0], &x), Err(Error::Domain(_))));
        assert!(matches!(kernel_eval(&k, &[1.0, 0.0], &x), Err(Error::Shape(_))));
    }

    #[test]
    fn pole_reaching_stack_is_rejected() {
        assert!(KernelSpec::new(vec![Activation::Exp, Activation::InversePoly], 3, 20).is_err());
    }

    #[test]
    fn gram_basics() {
        let k = exp_kernel(3);
        let p = sample_uniform_sphere(1, 3, 1);
        let g = gram_matrix(&k, &p).unwrap();
        assert_relative_eq!(g[(0, 0)], E, max_relative = 1e-15);

        let mut pts = sample_uniform_sphere(5, 3, 2);
        pts.push(pts[0].clone());
        let g = gram_matrix(&k, &pts).unwrap();
        for j in 0..6 {
            assert_eq!(g[(0, j)], g[(5, j)]);
        }
        let ev = symmetric_eigenvalues(&g).unwrap();
        assert!(ev[5].abs() < 1e-12 * ev[0]);
    }

    #[test]
    fn gram_is_psd() {
        let k = exp_kernel(3);
        let g = gram_matrix(&k, &sample_uniform_sphere(200, 3, 7)).unwrap();
        let trace: f64 = (0..200).map(|i| g[(i, i)]).sum();
        for i in 0..200 {
            for j in 0..200 {
                assert_eq!(g[(i, j)], g[(j, i)]);
            }
        }
        let ev = symmetric_eigenvalues(&g).unwrap();
        assert!(*ev.last().unwrap() >= -1e-8 * trace);
    }

    #[test]
    fn constant_kernel_is_rank_one() {
        let k = KernelSpec::new(vec![Activation::Polynomial { coeffs: vec![2.0] }], 3, 4).unwrap();
        let ev = empirical_spectrum(&k, 50, 3, 3).unwrap();
        assert_relative_eq!(ev[0], 2.0 * 4.0 * PI, max_relative = 1e-12);
        assert!(ev[1].abs() < 1e-10);
    }

    #[test]
    fn empirical_is_deterministic() {
        let k = exp_kernel(3);
        assert_eq!(empirical_spectrum(&k, 100, 9, 5).unwrap(), empirical_spectrum(&k, 100, 9, 5).unwrap());
        assert!(empirical_spectrum(&k, 4, 9, 5).is_err());
    }

    #[test]
    fn circle_quadrature_examples() {
        let q = quadrature_spectrum_d2(&exp_kernel(2), 2).unwrap();
        assert_relative_eq!(q[0], 7.954926521012845, max_relative = 1e-12);
        assert_relative_eq!(q[1], 3.5509993784243616, max_relative = 1e-12);

        let one = KernelSpec::new(vec![Activation::Polynomial { coeffs: vec![1.0] }], 2, 4).unwrap();
        let q = quadrature_spectrum_d2(&one, 3).unwrap();
        assert_relative_eq!(q[0], 2.0 * PI, max_relative = 1e-13);
        assert!(q[1..].iter().all(|v| v.abs() < 1e-12));

        let id = KernelSpec::new(vec![Activation::Polynomial { coeffs: vec![0.0, 1.0] }], 2, 4).unwrap();
        let q = quadrature_spectrum_d2(&id, 3).unwrap();
        assert!(q[0].abs() < 1e-12 && q[2].abs() < 1e-12);
        assert_relative_eq!(q[1], PI, max_relative = 1e-13);

        assert!(quadrature_spectrum_d2(&exp_kernel(3), 2).is_err());
    }

    #[test]
    fn comparison_handles_zeros() {
        let c = compare_spectra(&[2.0, 1e-14, 1.0], &[1.0, 0.0, 0.5], 2.0).unwrap();
        assert_eq!(c.per_index_errors, vec![0.0, 1e-14, 0.0]);
        assert_relative_eq!(measure_kappa(&[2.0, 0.0], &[1.0, 0.0]).unwrap(), 2.0);
    }
}
