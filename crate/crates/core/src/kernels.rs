//! Finite-rank feature kernels and Monte Carlo estimates of the limit kernel.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::activation::ActivationSpec;
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::geometry::{Neuron, RngStream};
use crate::regression::{feature_matrix, preactivations};
use crate::samplers::{sample, SamplerSpec};

/// Monte Carlo kernel value with its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KernelEstimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

/// `(1/N) sum_n phi(x; w_n) phi(x'; w_n)`.
pub fn finite_rank_kernel(x: &[f64], xp: &[f64], neurons: &[Neuron], activation: &ActivationSpec) -> f64 {
    if neurons.is_empty() {
        return 0.0;
    }
    let sum: f64 =
        neurons.iter().map(|n| activation.eval(n.preactivation(x)) * activation.eval(n.preactivation(xp))).sum();
    sum / neurons.len() as f64
}

/// Gram matrix `(1/N) Phi Phi^T` over the rows of `x`.
pub fn gram_matrix(x: &DMatrix<f64>, neurons: &[Neuron], activation: &ActivationSpec) -> DMatrix<f64> {
    let phi = feature_matrix(x, neurons, activation, false).phi;
    let n = neurons.len().max(1) as f64;
    &phi * phi.transpose() / n
}

/// Neurons drawn per batch in [`mc_kernel`].
const MC_BATCH: usize = 10_000;

/// Monte Carlo estimate of `k_M(x, x')` from `n_samples` fresh neurons of `spec`.
pub fn mc_kernel(
    x: &[f64],
    xp: &[f64],
    spec: &SamplerSpec,
    ds: &DataSet,
    activation: &ActivationSpec,
    n_samples: usize,
    rng: &mut RngStream,
) -> Result<KernelEstimate> {
    if n_samples < 100 {
        return Err(Error::invalid("mc_kernel needs at least 100 samples"));
    }
    if x.len() != ds.dim() || xp.len() != ds.dim() {
        return Err(Error::invalid("kernel arguments do not match the data dimension"));
    }
    let pts = DMatrix::from_fn(2, ds.dim(), |r, c| if r == 0 { x[c] } else { xp[c] });
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut done = 0;
    while done < n_samples {
        let batch = MC_BATCH.min(n_samples - done);
        let neurons = sample(spec, ds, batch, activation, None, rng)?.neurons;
        let pre = preactivations(&pts, &neurons);
        for n in 0..batch {
            let v = activation.eval(pre[(0, n)]) * activation.eval(pre[(1, n)]);
            sum += v;
            sum_sq += v * v;
        }
        done += batch;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok(KernelEstimate { value: mean, stderr: (var / n).sqrt(), n_samples })
}

/// A point pair `(x, x')`.
pub type Pair = (Vec<f64>, Vec<f64>);

/// `(|x|, |x'|, |x - x'|)`.
pub fn pair_invariants(pair: &Pair) -> [f64; 3] {
    let (x, xp) = pair;
    let norm = |v: &[f64]| v.iter().map(|t| t * t).sum::<f64>().sqrt();
    let diff: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
    [norm(x), norm(xp), norm(&diff)]
}

/// One invariant group and its kernel estimates.
#[derive(Clone, Debug, Serialize)]
pub struct GroupCheck {
    pub estimates: Vec<KernelEstimate>,
    /// Largest pairwise `|k_i - k_j| / sqrt(se_i^2 + se_j^2)`.
    pub max_z: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RadialReport {
    pub groups: Vec<GroupCheck>,
    pub pass: bool,
}

/// Pairwise z-score threshold for invariance groups.
pub const INVARIANCE_Z: f64 = 4.0;

/// Checks that the uniform-sampler kernel depends only on the invariant
/// triple of each pair: estimates within a group must agree to `4` combined
/// standard errors. `resolution` is the smallest kernel difference the check
/// must be able to see; larger standard errors are an error.
pub fn radial_structure_check(
    groups: &[Vec<Pair>],
    ds: &DataSet,
    activation: &ActivationSpec,
    n_samples: usize,
    resolution: f64,
    rng: &mut RngStream,
) -> Result<RadialReport> {
    let mut out = Vec::with_capacity(groups.len());
    for group in groups {
        if let Some(first) = group.first() {
            let t0 = pair_invariants(first);
            for pair in group {
                let t = pair_invariants(pair);
                if t.iter().zip(&t0).any(|(a, b)| (a - b).abs() > 1e-9) {
                    return Err(Error::invalid("pairs in a group must share norms and separation"));
                }
            }
        }
        let mut estimates = Vec::with_capacity(group.len());
        for (x, xp) in group {
            let est = mc_kernel(x, xp, &SamplerSpec::Uniform, ds, activation, n_samples, rng)?;
            let combined = INVARIANCE_Z * est.stderr * std::f64::consts::SQRT_2;
            if combined > resolution {
                return Err(Error::InsufficientSamples { stderr: est.stderr, tolerance: resolution });
            }
            estimates.push(est);
        }
        let mut max_z: f64 = 0.0;
        for i in 0..estimates.len() {
            for j in i + 1..estimates.len() {
                let (a, b) = (&estimates[i], &estimates[j]);
                let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
                let z = if se > 0.0 {
                    (a.value - b.value).abs() / se
                } else if a.value == b.value {
                    0.0
                } else {
                    f64::INFINITY
                };
                max_z = max_z.max(z);
            }
        }
        out.push(GroupCheck { estimates, max_z, pass: max_z <= INVARIANCE_Z });
    }
    let pass = out.iter().all(|g| g.pass);
    Ok(RadialReport { groups: out, pass })
}

/// Weighted least-squares fit `k = p - c |x - x'|` across pairs of equal norms.
#[derive(Clone, Debug, Serialize)]
pub struct RadialSlopeFit {
    pub intercept: f64,
    pub slope: f64,
    /// Largest `|residual| / stderr`.
    pub max_residual_z: f64,
}

pub fn fit_radial_slope(separations: &[f64], estimates: &[KernelEstimate]) -> Result<RadialSlopeFit> {
    if separations.len() != estimates.len() || separations.len() < 2 {
        return Err(Error::invalid("radial fit needs at least two matching separations and estimates"));
    }
    let n = separations.len();
    let w: Vec<f64> = estimates.iter().map(|e| 1.0 / e.stderr.max(1e-300)).collect();
    let a = DMatrix::from_fn(n, 2, |r, c| if c == 0 { w[r] } else { -separations[r] * w[r] });
    let y = DVector::from_fn(n, |r, _| estimates[r].value * w[r]);
    let sol =
        a.clone().svd(true, true).solve(&y, 1e-14).map_err(|e| Error::invalid(format!("radial fit failed: {e}")))?;
    let resid = &a * &sol - &y;
    Ok(RadialSlopeFit { intercept: sol[0], slope: sol[1], max_residual_z: resid.amax() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ball(d: usize) -> DataSet {
        DataSet::new(DMatrix::zeros(1, d), DVector::zeros(1), 1.0).unwrap()
    }

    #[test]
    fn finite_rank_basics() {
        let act = ActivationSpec::heaviside();
        let n = Neuron::new(DVector::from_vec(vec![1.0, 0.0]), 0.0).unwrap();
        assert_eq!(finite_rank_kernel(&[0.3, 0.1], &[0.5, -0.2], &[n], &act), 1.0);

        let mut rng = RngStream::new(1, 0);
        let act = ActivationSpec::sigmoid(0.1);
        let neurons = crate::samplers::sample_uniform(&ball(3), 50, &mut rng);
        let x = [0.1, -0.2, 0.3];
        let xp = [-0.4, 0.0, 0.2];
        assert!(finite_rank_kernel(&x, &x, &neurons, &act) >= 0.0);
        assert_eq!(finite_rank_kernel(&x, &xp, &neurons, &act), finite_rank_kernel(&xp, &x, &neurons, &act));
    }

    #[test]
    fn gram_is_positive_semidefinite() {
        let mut rng = RngStream::new(2, 0);
        let act = ActivationSpec::sigmoid(0.05);
        let neurons = crate::samplers::sample_uniform(&ball(2), 30, &mut rng);
        let x = DMatrix::from_fn(20, 2, |_, _| rng.random_range(-0.7..0.7));
        let g = gram_matrix(&x, &neurons, &act);
        let min = g.clone().symmetric_eigenvalues().min();
        assert!(min >= -1e-10 * g.trace(), "{min}");
        assert!(
            (g[(3, 5)] - finite_rank_kernel(&[x[(3, 0)], x[(3, 1)]], &[x[(5, 0)], x[(5, 1)]], &neurons, &act)).abs()
                <= 1e-14
        );
    }

    #[test]
    fn mc_kernel_matches_d1_closed_form() {
        let mut rng = RngStream::new(3, 0);
        let act = ActivationSpec::heaviside();
        let ds = ball(1);
        for (x, xp) in [(0.5, -0.5), (0.0, 0.0), (0.2, 0.7)] {
            let est = mc_kernel(&[x], &[xp], &SamplerSpec::Uniform, &ds, &act, 100_000, &mut rng).unwrap();
            let exact = 0.5 - (x - xp).abs() / 4.0;
            assert!((est.value - exact).abs() <= 3.0 * est.stderr, "{est:?} vs {exact}");
        }
    }

    #[test]
    fn mc_stderr_scales_as_inverse_sqrt() {
        let act = ActivationSpec::heaviside();
        let ds = ball(1);
        let a =
            mc_kernel(&[0.3], &[-0.4], &SamplerSpec::Uniform, &ds, &act, 20_000, &mut RngStream::new(4, 0)).unwrap();
        let b =
            mc_kernel(&[0.3], &[-0.4], &SamplerSpec::Uniform, &ds, &act, 80_000, &mut RngStream::new(4, 1)).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio - 2.0).abs() <= 0.2, "{ratio}");
    }

    #[test]
    fn mc_kernel_rejects_few_samples() {
        let ds = ball(1);
        let r = mc_kernel(
            &[0.0],
            &[0.0],
            &SamplerSpec::Uniform,
            &ds,
            &ActivationSpec::heaviside(),
            10,
            &mut RngStream::new(0, 0),
        );
        assert!(r.is_err());
    }

    #[test]
    fn rotated_pairs_share_kernel_values() {
        let mut rng = RngStream::new(5, 0);
        let act = ActivationSpec::heaviside();
        let rotate = |v: &[f64], t: f64| vec![t.cos() * v[0] - t.sin() * v[1], t.sin() * v[0] + t.cos() * v[1]];
        let x = vec![0.4, 0.1];
        let xp = vec![-0.2, 0.5];
        let group: Vec<Pair> = [0.0, 1.1, 2.5].iter().map(|&t| (rotate(&x, t), rotate(&xp, t))).collect();
        let report = radial_structure_check(&[group], &ball(2), &act, 50_000, 0.05, &mut rng).unwrap();
        assert!(report.pass, "{report:?}");
        let err = radial_structure_check(&[vec![(x, xp)]], &ball(2), &act, 100, 1e-4, &mut rng).unwrap_err();
        assert!(matches!(err, Error::InsufficientSamples { .. }));
    }

    #[test]
    fn radial_fit_recovers_a_line() {
        let seps = [0.1, 0.3, 0.5, 0.7];
        let est: Vec<KernelEstimate> =
            seps.iter().map(|t| KernelEstimate { value: 0.5 - 0.2 * t, stderr: 1e-3, n_samples: 1000 }).collect();
        let fit = fit_radial_slope(&seps, &est).unwrap();
        assert!((fit.intercept - 0.5).abs() < 1e-10);
        assert!((fit.slope - 0.2).abs() < 1e-10);
        assert!(fit.max_residual_z < 1e-6);
    }

    fn trapezoid(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let inner: f64 = (1..n).map(|i| f(lo + i as f64 * h)).sum();
        h * (0.5 * (f(lo) + f(hi)) + inner)
    }

    #[test]
    fn smoothed_kernel_is_doubly_convolved() {
        // d = 1, uniform M: k_delta(x, x') against bumps applied to both arguments of
        // the delta = 0 closed form 1/2 - |u - v| / 4.
        let delta = 0.05;
        let act = ActivationSpec::sigmoid(delta);
        let bump = |t: f64| crate::activation::eval_bump(&act, t).unwrap();
        let direct = |x: f64, xp: f64| {
            let half = |a: f64| trapezoid(|b| act.eval(a * x + b) * act.eval(a * xp + b), -1.0, 1.0, 4000) / 2.0;
            0.5 * (half(1.0) + half(-1.0))
        };
        for (x, xp) in [(0.3, -0.2), (0.0, 0.0), (-0.4, 0.4)] {
            let w = 12.0 * delta;
            let conv = trapezoid(
                |u| bump(x - u) * trapezoid(|v| bump(xp - v) * (0.5 - (u - v).abs() / 4.0), xp - w, xp + w, 400),
                x - w,
                x + w,
                400,
            );
            let k = direct(x, xp);
            assert!((k - conv).abs() <= 1e-3, "{x} {xp}: {k} vs {conv}");
        }
    }
}
