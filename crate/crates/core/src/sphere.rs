//! Geometry of `S^{d-1}`: harmonic-space dimensions, zonal polynomials and
//! uniform sampling.
//!
//! Zonal polynomials are normalized so that `P_{m,d}(1) = 1`. With that
//! convention the addition theorem gives
//! `∫_{S^{d-1}} P_{m,d}(⟨x,p⟩)² dσ(x) = |S^{d-1}| / α_{m,d}`, so under the
//! uniform probability measure the squared norm is `1 / α_{m,d}`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Ambient dimension `d` of the sphere `S^{d-1}` with its surface areas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereDim {
    d: usize,
    surface_area: f64,
    subsurface_area: f64,
}

/// `|S^{n-1}| = 2 π^{n/2} / Γ(n/2)`.
pub fn surface_area(n: usize) -> f64 {
    let h = n as f64 / 2.0;
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

impl SphereDim {
    pub fn new(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::Domain(format!("ambient dimension must be ≥ 2, got {d}")));
        }
        Ok(Self { d, surface_area: surface_area(d), subsurface_area: surface_area(d - 1) })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// `|S^{d-1}|`
    pub fn surface_area(&self) -> f64 {
        self.surface_area
    }

    /// `|S^{d-2}|`
    pub fn subsurface_area(&self) -> f64 {
        self.subsurface_area
    }
}

fn binomial(n: u64, k: u64) -> Option<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) is divisible by (i + 1) at every step
        acc = acc.checked_mul((n - i) as u128)? / (i + 1) as u128;
    }
    Some(acc)
}

/// Dimension `α_{m,d}` of degree-`m` spherical harmonics on `S^{d-1}`.
pub fn harmonic_dim(m: usize, d: usize) -> Result<u64> {
    if d < 2 {
        return Err(Error::Domain(format!("ambient dimension must be ≥ 2, got {d}")));
    }
    let width = || Error::Width(format!("α_({m},{d})"));
    match m {
        0 => Ok(1),
        1 => Ok(d as u64),
        _ => {
            let (m64, d64) = (m as u64, d as u64);
            let a = binomial(m64 + d64 - 1, m64).ok_or_else(width)?;
            let b = binomial(m64 + d64 - 3, m64 - 2).ok_or_else(width)?;
            u64::try_from(a - b).map_err(|_| width())
        }
    }
}

/// `Σ_{i=0}^{k} α_{i,d}`
pub fn cumulative_dim(k: usize, d: usize) -> Result<u64> {
    (0..=k).try_fold(0u64, |acc, i| {
        acc.checked_add(harmonic_dim(i, d)?)
            .ok_or_else(|| Error::Width(format!("cumulative dimension up to {k}")))
    })
}

/// Zonal polynomial `P_{m,d}(t)` with `P_{m,d}(1) = 1` (Legendre for
/// `d = 3`, Chebyshev for `d = 2`), by the three-term recurrence
/// `(m+d-2) P_{m+1} = (2m+d-2) t P_m − m P_{m-1}`.
pub fn zonal_poly(m: usize, d: usize, t: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::Domain(format!("ambient dimension must be ≥ 2, got {d}")));
    }
    if !(t.abs() <= 1.0 + 1e-12) {
        return Err(Error::Domain(format!("zonal argument {t} outside [-1, 1]")));
    }
    Ok(zonal_poly_unchecked(m, d, t))
}

pub(crate) fn zonal_poly_unchecked(m: usize, d: usize, t: f64) -> f64 {
    if m == 0 {
        return 1.0;
    }
    let dd = d as f64;
    let (mut prev, mut cur) = (1.0, t);
    for k in 1..m {
        let kf = k as f64;
        let next = ((2.0 * kf + dd - 2.0) * t * cur - kf * prev) / (kf + dd - 2.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Deterministic generator for `(seed, stream)`; streams are independent.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` i.i.d. uniform points on `S^{d-1}` from normalized Gaussian draws.
pub fn sample_uniform_sphere(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    sample_uniform_sphere_with(n, d, &mut rng_for(seed, 0))
}

pub fn sample_uniform_sphere_with<R: rand::Rng + ?Sized>(n: usize, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| loop {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-300 {
                break v.into_iter().map(|x| x / norm).collect();
            }
        })
        .collect()
}

/// One row per point, columns `x0..x{d-1}`.
pub fn points_to_csv(points: &[Vec<f64>]) -> String {
    let d = points.first().map_or(0, Vec::len);
    let header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
    let mut out = header.join(",");
    out.push('\n');
    for p in points {
        let row: Vec<String> = p.iter().map(|v| format!("{v:e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}
