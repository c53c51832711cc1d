//! Multi-layer perceptrons `x ↦ ⟨W^{N+1}, σ_N(W^N … σ_1(W^1 x))⟩`, their
//! RKHS-norm bound and the Rademacher-style generalization certificate.
//!
//! # Weight files
//!
//! ```json
//! {
//!   "d": 3,
//!   "activations": [{"kind": "exp"}],
//!   "layers": [
//!     {"rows": 2, "cols": 3, "data": [1, 0, 0, 0, 1, 0]},
//!     {"rows": 1, "cols": 2, "offset": 0}
//!   ],
//!   "payload": "weights.bin"
//! }
//! ```
//!
//! Layer `k` is stored row-major with shape `m_k × m_{k-1}` (`m_0 = d`, the
//! last layer has one row). Each layer gives either inline `data` or a byte
//! `offset` into `payload`, a file of little-endian `f64` resolved relative
//! to the JSON file.

use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::rls::Dataset;
use crate::series::Activation;
use crate::sphere::rng_for;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!("{rows}×{cols} matrix with {} entries", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn identity(n: usize) -> Self {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { data: self.data.iter().map(|v| v * c).collect(), ..self.clone() }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data.chunks_exact(self.cols).map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum()).collect()
    }

    pub fn mul_t_vec(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &yi) in self.data.chunks_exact(self.cols).zip(y) {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yi;
            }
        }
        out
    }

    fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub d: usize,
    pub activations: Vec<Activation>,
    /// `W^1, …, W^{N+1}`
    pub weights: Vec<Matrix>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    rows: usize,
    cols: usize,
    #[serde(default)]
    data: Option<Vec<f64>>,
    #[serde(default)]
    offset: Option<u64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    d: usize,
    activations: Vec<Activation>,
    layers: Vec<LayerFile>,
    #[serde(default)]
    payload: Option<String>,
}

impl MlpModel {
    pub fn new(d: usize, activations: Vec<Activation>, weights: Vec<Matrix>) -> Result<Self> {
        if weights.len() != activations.len() + 1 {
            return Err(Error::Shape(format!(
                "{} activations need {} weight matrices, got {}",
                activations.len(),
                activations.len() + 1,
                weights.len()
            )));
        }
        let mut width = d;
        for (k, w) in weights.iter().enumerate() {
            if w.cols != width {
                return Err(Error::Shape(format!("layer {} expects input width {}, previous width is {width}", k + 1, w.cols)));
            }
            width = w.rows;
        }
        if width != 1 {
            return Err(Error::Shape(format!("output layer has {width} rows, expected 1")));
        }
        Ok(Self { d, activations, weights })
    }

    /// Parses the JSON weight format; `base` resolves a relative payload path.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(text)?;
        let payload = match &file.payload {
            Some(p) => {
                let path = base.map_or_else(|| Path::new(p).to_path_buf(), |b| b.join(p));
                Some(std::fs::read(path)?)
            }
            None => None,
        };
        let weights = file
            .layers
            .into_iter()
            .enumerate()
            .map(|(k, l)| {
                let data = match (l.data, l.offset) {
                    (Some(data), None) => data,
                    (None, Some(offset)) => {
                        let bytes = payload
                            .as_ref()
                            .ok_or_else(|| Error::Config(format!("layer {} uses an offset but no payload is given", k + 1)))?;
                        let start = offset as usize;
                        let end = start + 8 * l.rows * l.cols;
                        let chunk = bytes.get(start..end).ok_or_else(|| {
                            Error::Shape(format!("layer {} reads bytes {start}..{end} past the payload end {}", k + 1, bytes.len()))
                        })?;
                        chunk.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect()
                    }
                    _ => return Err(Error::Config(format!("layer {} needs exactly one of `data` or `offset`", k + 1))),
                };
                Matrix::new(l.rows, l.cols, data)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.d, file.activations, weights)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text, path.parent())
    }

    /// Inline-data JSON in the weight-file format.
    pub fn to_json(&self) -> Result<String> {
        let layers: Vec<serde_json::Value> = self
            .weights
            .iter()
            .map(|w| serde_json::json!({"rows": w.rows, "cols": w.cols, "data": w.data}))
            .collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({
            "d": self.d,
            "activations": self.activations,
            "layers": layers,
        }))?)
    }

    /// Gaussian weights with variance `scale² / fan_in`.
    pub fn random(d: usize, widths: &[usize], activations: Vec<Activation>, scale: f64, seed: u64) -> Result<Self> {
        let mut rng = rng_for(seed, 0);
        let mut shapes: Vec<(usize, usize)> = Vec::new();
        let mut prev = d;
        for &w in widths.iter().chain(std::iter::once(&1)) {
            shapes.push((w, prev));
            prev = w;
        }
        let weights = shapes
            .into_iter()
            .map(|(r, c)| {
                let s = scale / (c as f64).sqrt();
                let data = (0..r * c)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        s * z
                    })
                    .collect();
                Matrix::new(r, c, data)
            })
            .collect::<Result<_>>()?;
        Self::new(d, activations, weights)
    }

    pub fn depth(&self) -> usize {
        self.activations.len()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.d {
            return Err(Error::Shape(format!("input of length {}, model expects {}", x.len(), self.d)));
        }
        let mut h = x.to_vec();
        for (w, act) in self.weights.iter().zip(&self.activations) {
            h = w.mul_vec(&h).into_iter().map(|v| act.eval(v)).collect();
        }
        Ok(self.weights.last().expect("validated").mul_vec(&h)[0])
    }
}

/// Iteration cap for [`spectral_norm`].
pub const POWER_MAX_ITER: usize = 10_000;
/// Relative change in `σ²` at which power iteration stops.
pub const POWER_TOL: f64 = 1e-14;

fn unit(v: Vec<f64>) -> Option<Vec<f64>> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0).then(|| v.into_iter().map(|x| x / n).collect())
}

/// Largest singular value by power iteration on `AᵀA`.
///
/// Starts from the normalized all-ones vector; if that lies in the kernel, a
/// fixed quasi-random vector and then the largest column are used instead.
pub fn spectral_norm(a: &Matrix) -> Result<f64> {
    if a.frobenius() == 0.0 {
        return Ok(0.0);
    }
    let n = a.cols;
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    let best_col = (0..n)
        .max_by(|&i, &j| {
            let ci: f64 = (0..a.rows).map(|r| a.get(r, i).powi(2)).sum();
            let cj: f64 = (0..a.rows).map(|r| a.get(r, j).powi(2)).sum();
            ci.total_cmp(&cj)
        })
        .expect("nonempty");
    let starts = [
        vec![1.0; n],
        (0..n).map(|i| ((i + 1) as f64 * golden).fract() - 0.5).collect(),
        (0..n).map(|i| if i == best_col { 1.0 } else { 0.0 }).collect(),
    ];
    let mut v = starts
        .into_iter()
        .filter_map(unit)
        .find(|v| a.mul_vec(v).iter().any(|x| *x != 0.0))
        .ok_or_else(|| Error::Numerical("no start vector outside the kernel".into()))?;
    let mut sigma_sq = 0.0;
    for _ in 0..POWER_MAX_ITER {
        let av = a.mul_vec(&v);
        let next_sq: f64 = av.iter().map(|x| x * x).sum();
        let w = a.mul_t_vec(&av);
        if (next_sq - sigma_sq).abs() <= POWER_TOL * next_sq {
            return Ok(next_sq.sqrt());
        }
        sigma_sq = next_sq;
        v = unit(w).ok_or_else(|| Error::Numerical("power iteration collapsed".into()))?;
    }
    Err(Error::Numerical(format!("power iteration did not converge in {POWER_MAX_ITER} steps")))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RkhsBound {
    pub spectral_norms: Vec<f64>,
    /// Bound on `‖N‖²_H`.
    pub value: f64,
}

/// `‖W^{N+1}‖² f_N(‖W^N‖² f_{N-1}(… f_1(‖W^1‖²)))` with `f_i` the kernel
/// function of `σ_i`.
pub fn rkhs_norm_bound(m: &MlpModel) -> Result<RkhsBound> {
    let spectral_norms: Vec<f64> = m.weights.iter().map(spectral_norm).collect::<Result<_>>()?;
    let mut v = spectral_norms[0].powi(2);
    for (act, s) in m.activations.iter().zip(&spectral_norms[1..]) {
        if *act == Activation::InversePoly && v >= 2.0 {
            return Err(Error::Numerical(format!("bound diverges: inverse_poly evaluated at {v} ≥ 2")));
        }
        v = s * s * act.kernel_fn(v);
    }
    if !v.is_finite() {
        return Err(Error::Numerical("bound is not finite".into()));
    }
    Ok(RkhsBound { spectral_norms, value: v })
}

/// Constants of the generalization display. `g`, `b` and `m` have no
/// canonical values and must be supplied.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateConstants {
    pub g: Option<f64>,
    pub b: Option<f64>,
    pub m: Option<f64>,
    #[serde(default = "one")]
    pub gamma: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for CertificateConstants {
    fn default() -> Self {
        Self { g: None, b: None, m: None, gamma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateInputs {
    pub n: usize,
    pub delta: f64,
    pub g: f64,
    pub b: f64,
    pub m: f64,
    pub gamma: f64,
    pub rkhs_norm_sq_bound: f64,
    pub kernel_diagonal_sum: f64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub empirical_risk: f64,
    pub complexity_term: f64,
    pub slack_terms: f64,
    pub total: f64,
    pub inputs_echo: CertificateInputs,
}

/// `R̂(N) + (2G‖N‖_H / (γ n)) √(Σ K(x_i, x_i)) + 2M²/√n + 3B √(log(2/δ) / 2n)`
/// with the squared loss as empirical risk.
pub fn generalization_bound(
    model: &MlpModel,
    data: &Dataset,
    k: &KernelSpec,
    delta: f64,
    consts: &CertificateConstants,
) -> Result<Certificate> {
    let missing = |name: &str| Error::Config(format!("certificate constant `{name}` must be supplied"));
    let g = consts.g.ok_or_else(|| missing("g"))?;
    let b = consts.b.ok_or_else(|| missing("b"))?;
    let m = consts.m.ok_or_else(|| missing("m"))?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Domain(format!("confidence δ = {delta} outside (0, 1)")));
    }
    if !(consts.gamma > 0.0) {
        return Err(Error::Domain(format!("γ = {} must be positive", consts.gamma)));
    }
    if k.d() != model.d || k.stack() != model.activations.as_slice() {
        return Err(Error::Config("kernel stack and dimension must match the model".into()));
    }
    let n = data.inputs.len();
    if n == 0 {
        return Err(Error::Shape("empty dataset".into()));
    }
    let nf = n as f64;
    let mut resid = 0.0;
    for (x, y) in data.inputs.iter().zip(&data.outputs) {
        resid += (model.forward(x)? - y).powi(2);
    }
    let empirical_risk = resid / nf;
    let norm_sq = rkhs_norm_bound(model)?.value;
    let diag: f64 = data
        .inputs
        .iter()
        .map(|x| k.eval_t(crate::sphere::dot(x, x).clamp(-1.0, 1.0)))
        .sum();
    let complexity_term = 2.0 * g * norm_sq.sqrt() / (consts.gamma * nf) * diag.sqrt();
    let slack_terms = 2.0 * m * m / nf.sqrt() + 3.0 * b * ((2.0 / delta).ln() / (2.0 * nf)).sqrt();
    Ok(Certificate {
        empirical_risk,
        complexity_term,
        slack_terms,
        total: empirical_risk + complexity_term + slack_terms,
        inputs_echo: CertificateInputs {
            n,
            delta,
            g,
            b,
            m,
            gamma: consts.gamma,
            rkhs_norm_sq_bound: norm_sq,
            kernel_diagonal_sum: diag,
            notes: vec!["γ is a caller-supplied scale without a canonical value".into()],
        },
    })
}
