//! Hyperplane parameters, sphere sampling and data standardization.

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Inner weights `(a, b)` of one ridge feature, `a` on the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct Neuron {
    pub a: DVector<f64>,
    pub b: f64,
}

impl Neuron {
    /// Normalizes `direction` onto the sphere.
    pub fn new(direction: DVector<f64>, b: f64) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::DegenerateGradient);
        }
        Ok(Neuron { a: direction / norm, b })
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    pub fn preactivation(&self, x: &[f64]) -> f64 {
        self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() + self.b
    }

    pub fn negate(&self) -> Neuron {
        Neuron { a: -&self.a, b: -self.b }
    }
}

/// Hyperplane through `x` with normal along `g`: `(g, -x.g) / |g|`.
pub fn hyperplane_from_point_gradient(x: &[f64], g: &[f64]) -> Result<Neuron> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::DegenerateGradient);
    }
    let a = DVector::from_iterator(g.len(), g.iter().map(|v| v / norm));
    let b = -a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
    Ok(Neuron { a, b })
}

/// Seeded random stream. Equal `(seed, stream)` pairs replay identical draws.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        RngStream { seed, stream, inner }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Independent stream keyed by `label`, unaffected by draws already taken
    /// from `self`.
    pub fn substream(&self, label: &str) -> RngStream {
        RngStream::new(self.seed, stable_hash(&[&self.stream.to_le_bytes(), label.as_bytes()]))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(self)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// 64-bit key from a SHA-256 digest of the parts; stable across platforms
/// and compiler versions.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

/// Stream id of one experiment cell.
pub fn cell_stream_id(benchmark: &str, sampler: &str, n: usize, replicate: usize) -> u64 {
    stable_hash(&[
        benchmark.as_bytes(),
        sampler.as_bytes(),
        &(n as u64).to_le_bytes(),
        &(replicate as u64).to_le_bytes(),
    ])
}

/// Factor `F` of a covariance `C = F F^T`; the covariance is never formed.
#[derive(Clone, Debug)]
pub struct GaussianFactor {
    columns: DMatrix<f64>,
}

impl GaussianFactor {
    pub fn new(columns: DMatrix<f64>) -> Result<Self> {
        if columns.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("covariance factor"));
        }
        if columns.iter().all(|v| *v == 0.0) {
            return Err(Error::ZeroCovariance);
        }
        Ok(GaussianFactor { columns })
    }

    pub fn dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn rank(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &DMatrix<f64> {
        &self.columns
    }
}

/// Angular central Gaussian draw: normalize `F xi` with `xi ~ N(0, I_r)`.
pub fn sample_acg(factor: &GaussianFactor, rng: &mut RngStream) -> DVector<f64> {
    let r = factor.rank();
    loop {
        let xi = DVector::from_fn(r, |_, _| rng.standard_normal());
        let z = factor.columns() * xi;
        let norm = z.norm();
        if norm >= 1e-300 {
            return z / norm;
        }
    }
}

/// Per-coordinate affine map `x = scale * raw + shift`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
}

impl AffineMap {
    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn forward(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter().zip(&self.scale).zip(&self.shift).map(|((r, s), t)| s * r + t).collect()
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).zip(&self.shift).map(|((x, s), t)| (x - t) / s).collect()
    }

    /// Gradient in standardized coordinates from the raw gradient (`A^{-T} g`).
    pub fn pull_gradient(&self, raw_grad: &[f64]) -> Vec<f64> {
        raw_grad.iter().zip(&self.scale).map(|(g, s)| g / s).collect()
    }

    /// Hessian in standardized coordinates (`A^{-T} H A^{-1}`).
    pub fn pull_hessian(&self, raw: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(raw.nrows(), raw.ncols(), |i, j| raw[(i, j)] / (self.scale[i] * self.scale[j]))
    }
}

/// Map sending `bounds` to the centered cube of side `2/sqrt(d)`, whose
/// corners lie on the unit sphere.
pub fn standardizing_map(bounds: &[(f64, f64)]) -> Result<AffineMap> {
    let d = bounds.len();
    if d == 0 {
        return Err(Error::invalid("box has no coordinates"));
    }
    let side = 2.0 / (d as f64).sqrt();
    let mut scale = Vec::with_capacity(d);
    let mut shift = Vec::with_capacity(d);
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite()) {
            return Err(Error::invalid(format!("box coordinate {i} is not finite")));
        }
        if !(hi > lo) {
            return Err(Error::EmptyBox { coord: i });
        }
        let s = side / (hi - lo);
        scale.push(s);
        shift.push(-s * 0.5 * (lo + hi));
    }
    Ok(AffineMap { scale, shift })
}

/// Standardizes the rows of `raw` (points in `bounds`).
pub fn standardize(raw: &DMatrix<f64>, bounds: &[(f64, f64)]) -> Result<(DMatrix<f64>, AffineMap)> {
    if raw.ncols() != bounds.len() {
        return Err(Error::invalid("point dimension does not match box"));
    }
    let map = standardizing_map(bounds)?;
    let x = DMatrix::from_fn(raw.nrows(), raw.ncols(), |k, i| map.scale[i] * raw[(k, i)] + map.shift[i]);
    Ok((x, map))
}
