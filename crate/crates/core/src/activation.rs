//! Spline activations, their smoothed versions and the Radon weight kernels.
//!
//! The activation of order `s` is `max(0, t)^(s-1) / (s-1)!`: Heaviside for
//! `s = 1`, ReLU for `s = 2`. Smoothing by convolution with the logistic bump
//! of width `delta` turns them into the sigmoid and softplus.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Activation order and smoothing width.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub s: u8,
    pub delta: f64,
}

impl ActivationSpec {
    pub fn new(s: u8, delta: f64) -> Result<Self> {
        let spec = ActivationSpec { s, delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn heaviside() -> Self {
        ActivationSpec { s: 1, delta: 0.0 }
    }

    pub fn sigmoid(delta: f64) -> Self {
        ActivationSpec { s: 1, delta }
    }

    pub fn relu() -> Self {
        ActivationSpec { s: 2, delta: 0.0 }
    }

    pub fn softplus(delta: f64) -> Self {
        ActivationSpec { s: 2, delta }
    }

    pub fn validate(&self) -> Result<()> {
        if self.s != 1 && self.s != 2 {
            return Err(Error::invalid(format!("activation order must be 1 or 2, got {}", self.s)));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::invalid(format!("smoothing width must be finite and >= 0, got {}", self.delta)));
        }
        Ok(())
    }

    pub fn is_smooth(&self) -> bool {
        self.delta > 0.0
    }

    /// Number of polynomial columns of degree `< s` in `d` dimensions.
    pub fn poly_len(&self, d: usize) -> usize {
        if self.s == 1 {
            1
        } else {
            d + 1
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        eval_activation(self, t)
    }

    /// Derivative of the activation; the bump for `s = 1`, the sigmoid (or
    /// Heaviside) for `s = 2`.
    pub fn derivative(&self, t: f64) -> Result<f64> {
        match self.s {
            1 => eval_bump(self, t),
            _ => Ok(eval_activation(&ActivationSpec { s: 1, delta: self.delta }, t)),
        }
    }
}

/// `sigma_s(t)` for `delta = 0`, otherwise the sigmoid or softplus.
///
/// The Heaviside is right-continuous: `sigma_1(0) = 1`.
pub fn eval_activation(spec: &ActivationSpec, t: f64) -> f64 {
    let delta = spec.delta;
    match (spec.s, delta > 0.0) {
        (1, false) => {
            if t >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        (1, true) => {
            let u = t / delta;
            if u >= 0.0 {
                1.0 / (1.0 + (-u).exp())
            } else {
                let e = u.exp();
                e / (1.0 + e)
            }
        }
        (_, false) => t.max(0.0),
        (_, true) => {
            let u = t / delta;
            delta * (u.max(0.0) + (-u.abs()).exp().ln_1p())
        }
    }
}

/// Unit-width logistic bump `sech(t/2)^2 / 4`.
fn unit_bump(t: f64) -> f64 {
    // e^{-|t|} / (1 + e^{-|t|})^2 is the same function without overflow.
    let e = (-t.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// Scaled bump `eta(t/delta)/delta`, the derivative of the sigmoid.
pub fn eval_bump(spec: &ActivationSpec, t: f64) -> Result<f64> {
    if !(spec.delta > 0.0) {
        return Err(Error::invalid("bump kernel needs delta > 0"));
    }
    Ok(unit_bump(t / spec.delta) / spec.delta)
}

/// Radon inversion constant `c_d = 1 / (2 (2 pi)^(d-1))`.
pub fn radon_constant(d: usize) -> f64 {
    0.5 / (2.0 * PI).powi(d as i32 - 1)
}

/// Modes with `pi * delta * |xi|` above this carry a bump spectrum below
/// `1e-40` and are dropped.
const SPECTRAL_CUTOFF: f64 = 100.0;

/// Relative magnitude allowed at the table ends.
pub const END_DECAY_LIMIT: f64 = 1e-8;

/// Largest table the automatic widening in [`PsiTable::for_radius`] will build.
const MAX_TABLE_LEN: usize = 1 << 23;

/// Tabulated weight kernel `c_d (-d/db)^m Lambda^(d-1) eta_delta` on a
/// symmetric uniform grid.
#[derive(Clone, Debug)]
pub struct PsiTable {
    order: usize,
    dim: usize,
    delta: f64,
    spacing: f64,
    half_width: f64,
    values: Arc<[f64]>,
}

impl PsiTable {
    /// Builds the table on `[-half_width, half_width]` with spacing `delta / 16`.
    pub fn build(order: usize, dim: usize, delta: f64, half_width: f64) -> Result<Self> {
        Self::build_with_spacing(order, dim, delta, half_width, delta / 16.0)
    }

    pub fn build_with_spacing(order: usize, dim: usize, delta: f64, half_width: f64, spacing: f64) -> Result<Self> {
        if order > 2 {
            return Err(Error::invalid(format!("derivative order must be <= 2, got {order}")));
        }
        if dim == 0 {
            return Err(Error::invalid("dimension must be >= 1"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid("psi table needs delta > 0"));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid("half width must be positive"));
        }
        if !(spacing > 0.0 && spacing <= delta / 16.0 * (1.0 + 1e-12)) {
            return Err(Error::invalid("grid spacing must be in (0, delta/16]"));
        }
        let half = (half_width / spacing).ceil() as usize;
        let len = 2 * half + 1;
        if len > MAX_TABLE_LEN {
            return Err(Error::invalid(format!("psi table of {len} nodes is too large")));
        }
        let half_width = half as f64 * spacing;

        // Poisson summation: the inverse DFT of the exact spectrum sampled at
        // the grid frequencies is the periodized kernel on the grid.
        let period = len as f64 * spacing;
        let scale = radon_constant(dim) / period;
        let lambda_pow = (dim - 1) as i32;
        let mut buf: Vec<Complex64> = (0..len)
            .map(|k| {
                let wave = if k <= half { k as f64 } else { k as f64 - len as f64 };
                let xi = 2.0 * PI * wave / period;
                let u = PI * delta * xi;
                if u.abs() > SPECTRAL_CUTOFF {
                    return Complex64::new(0.0, 0.0);
                }
                let bump = if u == 0.0 { 1.0 } else { u / u.sinh() };
                // (-i xi)^m |xi|^(d-1), shifted so that node `half` sits at b = 0.
                let mult = Complex64::new(0.0, -xi).powi(order as i32) * xi.abs().powi(lambda_pow);
                let shift = Complex64::from_polar(1.0, -xi * half as f64 * spacing);
                mult * shift * (bump * scale)
            })
            .collect();

        let mut planner = FftPlanner::<f64>::new();
        planner.plan_fft_inverse(len).process(&mut buf);
        let values: Vec<f64> = buf.iter().map(|z| z.re).collect();

        let peak = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let ends = values[0].abs().max(values[len - 1].abs());
        let ratio = if peak > 0.0 { ends / peak } else { 0.0 };
        if !(ratio <= END_DECAY_LIMIT) {
            return Err(Error::GridResolution { half_width, ratio, limit: END_DECAY_LIMIT });
        }

        Ok(PsiTable { order, dim, delta, spacing, half_width, values: values.into() })
    }

    /// Table covering data of radius `radius`: starts at `radius + 10 delta`
    /// and doubles the half width until the ends have decayed. Odd dimensions
    /// never need widening; even dimensions have algebraic tails.
    pub fn for_radius(order: usize, dim: usize, delta: f64, radius: f64) -> Result<Self> {
        let mut half_width = radius + 10.0 * delta;
        loop {
            match Self::build(order, dim, delta, half_width) {
                Err(Error::GridResolution { .. }) if 2.0 * half_width / (delta / 16.0) < MAX_TABLE_LEN as f64 / 2.0 => {
                    half_width *= 2.0;
                }
                other => return other,
            }
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Grid node `j`.
    pub fn node(&self, j: usize) -> f64 {
        (j as f64 - ((self.values.len() - 1) / 2) as f64) * self.spacing
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Linear interpolation; zero outside the grid.
    pub fn eval(&self, t: f64) -> f64 {
        if !(t.abs() <= self.half_width) {
            return 0.0;
        }
        let pos = (t + self.half_width) / self.spacing;
        let j = pos.floor() as usize;
        let last = self.values.len() - 1;
        if j >= last {
            return self.values[last];
        }
        let frac = pos - j as f64;
        if frac == 0.0 {
            return self.values[j];
        }
        self.values[j] + frac * (self.values[j + 1] - self.values[j])
    }

    /// Grid quadrature of `int psi(b) b^k db`.
    pub fn moment(&self, k: u32) -> f64 {
        let sum: f64 = self.values.iter().enumerate().map(|(j, v)| v * self.node(j).powi(k as i32)).sum();
        sum * self.spacing
    }
}

pub fn eval_psi(table: &PsiTable, t: f64) -> f64 {
    table.eval(t)
}

pub fn build_psi_table(order: usize, dim: usize, delta: f64, half_width: f64) -> Result<PsiTable> {
    PsiTable::build(order, dim, delta, half_width)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
        h * (inner + 0.5 * (f(lo) + f(hi)))
    }

    #[test]
    fn activation_examples() {
        assert_eq!(eval_activation(&ActivationSpec::sigmoid(0.1), 0.0), 0.5);
        let sp = eval_activation(&ActivationSpec::softplus(1.0 / 40.0), 0.0);
        assert_relative_eq!(sp, std::f64::consts::LN_2 / 40.0, max_relative = 1e-15);
        assert!((sp - 0.01733).abs() < 1e-5);
        assert_eq!(eval_activation(&ActivationSpec::relu(), 3.0), 3.0);
        assert_eq!(eval_activation(&ActivationSpec::heaviside(), 0.0), 1.0);
        assert_eq!(eval_activation(&ActivationSpec::heaviside(), -1e-300), 0.0);
    }

    #[test]
    fn activation_is_stable_for_large_arguments() {
        for &(s, t) in &[(1u8, 1e4), (1, -1e4), (2, 1e4), (2, -1e4)] {
            let v = eval_activation(&ActivationSpec { s, delta: 1.0 }, t);
            assert!(v.is_finite());
        }
        assert_eq!(eval_activation(&ActivationSpec::softplus(1.0), 1e4), 1e4);
        assert_eq!(eval_activation(&ActivationSpec::softplus(1.0), -1e4), 0.0);
    }

    #[test]
    fn spec_validation() {
        assert!(ActivationSpec::new(3, 0.1).is_err());
        assert!(ActivationSpec::new(1, -0.1).is_err());
        assert!(ActivationSpec::new(2, 0.0).is_ok());
    }

    #[test]
    fn bump_examples() {
        assert_eq!(eval_bump(&ActivationSpec::sigmoid(1.0), 0.0).unwrap(), 0.25);
        assert_relative_eq!(eval_bump(&ActivationSpec::sigmoid(1.0 / 80.0), 0.0).unwrap(), 20.0, max_relative = 1e-14);
        assert!(eval_bump(&ActivationSpec::heaviside(), 0.0).is_err());
        let spec = ActivationSpec::sigmoid(1.0);
        let mass = trapezoid(|t| eval_bump(&spec, t).unwrap(), -60.0, 60.0, 200_000);
        assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
    }

    #[test]
    fn bump_is_sigmoid_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &delta in &[1.0 / 40.0, 1.0 / 80.0] {
            let spec = ActivationSpec::sigmoid(delta);
            for _ in 0..100 {
                let t: f64 = rng.random_range(-0.2..0.2);
                let h = 1e-6 * delta;
                let fd = (eval_activation(&spec, t + h) - eval_activation(&spec, t - h)) / (2.0 * h);
                let exact = eval_bump(&spec, t).unwrap();
                assert!((fd - exact).abs() <= 1e-6 * 0.25 / delta, "t={t} fd={fd} exact={exact}");
            }
        }
    }

    #[test]
    fn smoothed_activation_is_a_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let delta = 0.05;
        for s in [1u8, 2] {
            let spec = ActivationSpec { s, delta };
            let raw = ActivationSpec { s, delta: 0.0 };
            for _ in 0..20 {
                let t: f64 = rng.random_range(-0.5..0.5);
                // sigma_s vanishes for tau < 0; the bump is negligible 60 delta away.
                let hi = t.max(0.0) + 60.0 * delta;
                let conv =
                    trapezoid(|tau| eval_activation(&raw, tau) * eval_bump(&spec, t - tau).unwrap(), 0.0, hi, 400_000);
                let direct = eval_activation(&spec, t);
                assert!((conv - direct).abs() <= 1e-6, "s={s} t={t} conv={conv} direct={direct}");
            }
        }
    }

    #[test]
    fn psi_d1_is_half_bump() {
        let table = PsiTable::build(0, 1, 0.1, 4.0).unwrap();
        let spec = ActivationSpec::sigmoid(0.1);
        for j in 0..table.len() {
            let b = table.node(j);
            if b.abs() > 2.0 {
                continue;
            }
            let expect = 0.5 * eval_bump(&spec, b).unwrap();
            assert!((table.values()[j] - expect).abs() <= 1e-10, "b={b}");
        }
    }

    #[test]
    fn psi_d3_low_moments_vanish_and_top_is_delta_invariant() {
        let a = PsiTable::build(0, 3, 0.05, 2.0).unwrap();
        let scale = a.max_abs() * a.half_width();
        assert!(a.moment(0).abs() <= 1e-6 * scale);
        assert!(a.moment(1).abs() <= 1e-6 * scale * a.half_width());
        let b = PsiTable::build(0, 3, 0.1, 4.0).unwrap();
        let (ma, mb) = (a.moment(2), b.moment(2));
        assert!((ma - mb).abs() <= 1e-4 * ma.abs(), "{ma} vs {mb}");
        // Integrating by parts twice: c_3 * (-2) = -1 / (4 pi^2).
        let exact = -1.0 / (4.0 * PI * PI);
        assert!((ma - exact).abs() <= 1e-8 * exact.abs(), "{ma} vs {exact}");
    }

    #[test]
    fn psi_eval_interpolates() {
        let table = PsiTable::build(1, 3, 0.1, 4.0).unwrap();
        let j = table.len() / 3;
        assert_eq!(table.eval(table.node(j)), table.values()[j]);
        assert_eq!(table.eval(table.half_width() + 1.0), 0.0);
        assert_eq!(table.eval(-table.half_width() - 1.0), 0.0);
        let mid = 0.5 * (table.node(j) + table.node(j + 1));
        let mean = 0.5 * (table.values()[j] + table.values()[j + 1]);
        assert!((table.eval(mid) - mean).abs() <= 1e-12 * table.max_abs());
    }

    #[test]
    fn narrow_table_is_rejected() {
        // Lambda is nonlocal in even dimension; a tight window cannot hold the tail.
        let err = PsiTable::build(0, 2, 0.05, 1.0).unwrap_err();
        assert!(matches!(err, Error::GridResolution { .. }));
        let t = PsiTable::for_radius(0, 2, 0.05, 1.0).unwrap();
        assert!(t.half_width() > 1.5);
    }

    #[test]
    fn bad_table_arguments() {
        assert!(PsiTable::build(3, 1, 0.1, 2.0).is_err());
        assert!(PsiTable::build(0, 0, 0.1, 2.0).is_err());
        assert!(PsiTable::build(0, 1, 0.0, 2.0).is_err());
        assert!(PsiTable::build_with_spacing(0, 1, 0.1, 2.0, 0.1).is_err());
    }
}
