//! Weight samplers: given data and a count, produce hyperplanes `(a, b)`.
//!
//! Every gradient-driven sampler keeps `a` inside the range of the gradient
//! data and `b` close to `-a . x_k` for the data point `x_k` that seeded it.

use std::io::{BufRead, Write};

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::activation::{ActivationSpec, PsiTable};
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::geometry::{hyperplane_from_point_gradient, sample_acg, GaussianFactor, Neuron, RngStream};
use crate::regression::{eval_model_gradient, FitReport, RidgeModel};

/// How the data density enters the integral-density estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoMode {
    /// Use the density values stored with the data.
    Known,
    /// Treat the density as constant.
    #[default]
    Constant,
}

fn default_safety() -> f64 {
    1.5
}

fn default_kappa() -> f64 {
    2.0
}

fn default_n0() -> usize {
    10
}

/// Sampling strategy and its hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SamplerSpec {
    Uniform,
    ActiveSubspace,
    LocalGradient,
    /// `delta_w` defaults to twice the activation width.
    NonlocalGradient {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_w: Option<f64>,
    },
    NonlocalHessian {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta_w: Option<f64>,
    },
    IntegralDensity {
        #[serde(default = "default_safety")]
        safety: f64,
        #[serde(default)]
        rho_mode: RhoMode,
    },
    Residual {
        base: Box<SamplerSpec>,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default = "default_n0")]
        n0: usize,
    },
}

impl SamplerSpec {
    pub fn label(&self) -> &'static str {
        match self {
            SamplerSpec::Uniform => "uniform",
            SamplerSpec::ActiveSubspace => "active_subspace",
            SamplerSpec::LocalGradient => "local_gradient",
            SamplerSpec::NonlocalGradient { .. } => "nonlocal_gradient",
            SamplerSpec::NonlocalHessian { .. } => "nonlocal_hessian",
            SamplerSpec::IntegralDensity { .. } => "integral_density",
            SamplerSpec::Residual { .. } => "residual",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SamplerSpec::NonlocalGradient { delta_w: Some(w) } | SamplerSpec::NonlocalHessian { delta_w: Some(w) }
                if !(*w > 0.0) =>
            {
                Err(Error::invalid("delta_w must be positive"))
            }
            SamplerSpec::IntegralDensity { safety, .. } if !(*safety >= 1.0) => {
                Err(Error::invalid("safety factor must be >= 1"))
            }
            SamplerSpec::Residual { base, kappa, n0 } => {
                if !(*kappa > 1.0) {
                    return Err(Error::invalid("kappa must exceed 1"));
                }
                if *n0 < 1 {
                    return Err(Error::invalid("n0 must be at least 1"));
                }
                match **base {
                    SamplerSpec::LocalGradient | SamplerSpec::NonlocalGradient { .. } => base.validate(),
                    _ => Err(Error::invalid("residual base must be a local or nonlocal gradient sampler")),
                }
            }
            _ => Ok(()),
        }
    }

    /// Whether sampling needs a tabulated psi kernel.
    pub fn needs_psi(&self) -> bool {
        matches!(self, SamplerSpec::IntegralDensity { .. })
    }
}

/// Nonlocal width: explicit value, else twice the activation width.
pub fn resolve_delta_w(explicit: Option<f64>, activation: &ActivationSpec) -> Result<f64> {
    match explicit {
        Some(w) if w > 0.0 => Ok(w),
        Some(_) => Err(Error::invalid("delta_w must be positive")),
        None if activation.delta > 0.0 => Ok(2.0 * activation.delta),
        None => Err(Error::invalid("delta_w has no default when delta = 0")),
    }
}

/// Output of a sampler run.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub neurons: Vec<Neuron>,
    /// Rejection samplers only.
    pub accept_rate: Option<f64>,
}

impl Sampled {
    fn direct(neurons: Vec<Neuron>) -> Self {
        Sampled { neurons, accept_rate: None }
    }
}

/// Dispatches every non-residual sampler. `psi` is required for the
/// integral density.
pub fn sample(
    spec: &SamplerSpec,
    ds: &DataSet,
    n: usize,
    activation: &ActivationSpec,
    psi: Option<&PsiTable>,
    rng: &mut RngStream,
) -> Result<Sampled> {
    spec.validate()?;
    match spec {
        SamplerSpec::Uniform => Ok(Sampled::direct(sample_uniform(ds, n, rng))),
        SamplerSpec::ActiveSubspace => sample_active_subspace(ds, n, rng).map(Sampled::direct),
        SamplerSpec::LocalGradient => sample_local_gradient(ds, n, rng).map(Sampled::direct),
        SamplerSpec::NonlocalGradient { delta_w } => {
            sample_nonlocal_gradient(ds, n, resolve_delta_w(*delta_w, activation)?, rng).map(Sampled::direct)
        }
        SamplerSpec::NonlocalHessian { delta_w } => {
            sample_nonlocal_hessian(ds, n, resolve_delta_w(*delta_w, activation)?, rng).map(Sampled::direct)
        }
        SamplerSpec::IntegralDensity { safety, rho_mode } => {
            let psi = psi.ok_or_else(|| Error::invalid("integral density sampler needs a psi table"))?;
            sample_integral_density(ds, psi, *rho_mode, n, *safety, rng)
        }
        SamplerSpec::Residual { .. } => {
            Err(Error::invalid("residual sampling needs a regression callback; use sample_residual"))
        }
    }
}

fn uniform_direction(d: usize, rng: &mut RngStream) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(d, |_, _| rng.standard_normal());
        let norm = v.norm();
        if norm > 1e-300 {
            return v / norm;
        }
    }
}

fn uniform_neuron(d: usize, radius: f64, rng: &mut RngStream) -> Neuron {
    let a = uniform_direction(d, rng);
    let b = rng.random_range(-radius..=radius);
    Neuron { a, b }
}

/// Normalized Gaussian direction and offset uniform on `[-R, R]`.
pub fn sample_uniform(ds: &DataSet, n: usize, rng: &mut RngStream) -> Vec<Neuron> {
    (0..n).map(|_| uniform_neuron(ds.dim(), ds.radius(), rng)).collect()
}

/// Directions from the angular central Gaussian with covariance `G G^T`.
pub fn sample_active_subspace(ds: &DataSet, n: usize, rng: &mut RngStream) -> Result<Vec<Neuron>> {
    let grads = ds.require_gradients()?;
    let factor = match GaussianFactor::new(grads.transpose()) {
        Err(Error::ZeroCovariance) => return Err(Error::AllZeroGradients),
        other => other?,
    };
    let radius = ds.radius();
    Ok((0..n)
        .map(|_| {
            let a = sample_acg(&factor, rng);
            let b = rng.random_range(-radius..=radius);
            Neuron { a, b }
        })
        .collect())
}

/// Gradient norms, with norms below `1e-14` of the largest set to zero.
fn gradient_weights(grads: &DMatrix<f64>) -> Result<Vec<f64>> {
    let norms: Vec<f64> = grads.row_iter().map(|r| r.norm()).collect();
    let max = norms.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(Error::AllZeroGradients);
    }
    Ok(norms.into_iter().map(|v| if v > 1e-14 * max { v } else { 0.0 }).collect())
}

/// Atoms `+-w(x_k, g_k)` with point `k` drawn with probability `|g_k| / sum |g|`.
pub fn sample_local_gradient(ds: &DataSet, n: usize, rng: &mut RngStream) -> Result<Vec<Neuron>> {
    let grads = ds.require_gradients()?;
    let weights = gradient_weights(grads)?;
    let pick = WeightedIndex::new(&weights).map_err(|_| Error::AllZeroGradients)?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(rng);
        let g: Vec<f64> = grads.row(k).iter().copied().collect();
        let neuron = hyperplane_from_point_gradient(&ds.point(k), &g)?;
        out.push(if rng.random::<bool>() { neuron } else { neuron.negate() });
    }
    Ok(out)
}

/// Nonlocal weights `exp(-|x_k - x_k'| / (2 delta_w))`, truncated below 1e-6.
pub struct NonlocalKernel {
    points: DMatrix<f64>,
    inv_width: f64,
}

/// Truncation threshold for nonlocal weights (relative to the diagonal, 1).
pub const NONLOCAL_CUTOFF: f64 = 1e-6;

impl NonlocalKernel {
    pub fn new(ds: &DataSet, delta_w: f64) -> Result<Self> {
        if !(delta_w > 0.0 && delta_w.is_finite()) {
            return Err(Error::invalid("delta_w must be positive"));
        }
        Ok(NonlocalKernel { points: ds.x().transpose(), inv_width: 0.5 / delta_w })
    }

    pub fn len(&self) -> usize {
        self.points.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.points.ncols() == 0
    }

    pub fn weight(&self, k: usize, j: usize) -> f64 {
        let dist = (self.points.column(k) - self.points.column(j)).norm();
        let w = (-dist * self.inv_width).exp();
        if w >= NONLOCAL_CUTOFF {
            w
        } else {
            0.0
        }
    }

    /// Nonzero entries of row `k`.
    pub fn row(&self, k: usize, out: &mut Vec<(usize, f64)>) {
        out.clear();
        for j in 0..self.len() {
            let w = self.weight(k, j);
            if w > 0.0 {
                out.push((j, w));
            }
        }
    }

    /// `sqrt(sum_j w_kj^2 s_j)` for every row, given per-point magnitudes `s_j`.
    pub fn mixture_weights(&self, sq_norms: &[f64]) -> Vec<f64> {
        let mut row = Vec::new();
        (0..self.len())
            .map(|k| {
                self.row(k, &mut row);
                row.iter().map(|&(j, w)| w * w * sq_norms[j]).sum::<f64>().sqrt()
            })
            .collect()
    }
}

fn jittered_neuron(direction: DVector<f64>, x: &[f64], delta_w: f64, rng: &mut RngStream) -> Neuron {
    let a = direction;
    let center = -a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
    let b = center + delta_w * rng.standard_normal();
    Neuron { a, b }
}

/// Mixture over points of angular central Gaussians with covariance
/// `G diag(W_k^2) G^T`, offsets jittered by `N(0, delta_w^2)` around `x_k`.
pub fn sample_nonlocal_gradient(ds: &DataSet, n: usize, delta_w: f64, rng: &mut RngStream) -> Result<Vec<Neuron>> {
    let grads = ds.require_gradients()?;
    let kernel = NonlocalKernel::new(ds, delta_w)?;
    let sq: Vec<f64> = grads.row_iter().map(|r| r.norm_squared()).collect();
    if sq.iter().all(|v| *v == 0.0) {
        return Err(Error::AllZeroGradients);
    }
    let mix = kernel.mixture_weights(&sq);
    let pick = WeightedIndex::new(&mix).map_err(|_| Error::ZeroTrace)?;
    let gt = grads.transpose();
    let d = ds.dim();
    let mut row = Vec::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(rng);
        kernel.row(k, &mut row);
        let dir = loop {
            let mut g = DVector::zeros(d);
            for &(j, w) in &row {
                g.axpy(w * rng.standard_normal(), &gt.column(j), 1.0);
            }
            let norm = g.norm();
            if norm >= 1e-300 {
                break g / norm;
            }
        };
        out.push(jittered_neuron(dir, &ds.point(k), delta_w, rng));
    }
    Ok(out)
}

/// Hessian analogue of [`sample_nonlocal_gradient`]: directions
/// `sum_j w_kj H_j xi_j` with `xi_j ~ N(0, I_d)`.
pub fn sample_nonlocal_hessian(ds: &DataSet, n: usize, delta_w: f64, rng: &mut RngStream) -> Result<Vec<Neuron>> {
    let hessians = ds.hessians().ok_or(Error::MissingHessians)?;
    let kernel = NonlocalKernel::new(ds, delta_w)?;
    let sq: Vec<f64> = hessians.iter().map(|h| h.norm_squared()).collect();
    if sq.iter().all(|v| *v == 0.0) {
        return Err(Error::ZeroTrace);
    }
    let mix = kernel.mixture_weights(&sq);
    let pick = WeightedIndex::new(&mix).map_err(|_| Error::ZeroTrace)?;
    let d = ds.dim();
    let mut row = Vec::new();
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let k = pick.sample(rng);
        kernel.row(k, &mut row);
        let dir = loop {
            let mut h = DVector::zeros(d);
            for &(j, w) in &row {
                let xi = DVector::from_fn(d, |_, _| rng.standard_normal());
                h.gemv(w, &hessians[j], &xi, 1.0);
            }
            let norm = h.norm();
            if norm >= 1e-300 {
                break h / norm;
            }
        };
        out.push(jittered_neuron(dir, &ds.point(k), delta_w, rng));
    }
    Ok(out)
}

/// Monte Carlo estimate `|(1/K) sum_k (a . g_k) psi(a . x_k + b) / rho_k|` of
/// the mollified exact density.
pub struct IntegralDensity<'a> {
    points: DMatrix<f64>,
    weighted_grads: DMatrix<f64>,
    psi: &'a PsiTable,
}

impl<'a> IntegralDensity<'a> {
    pub fn new(ds: &DataSet, psi: &'a PsiTable, rho_mode: RhoMode) -> Result<Self> {
        let grads = ds.require_gradients()?;
        let k = ds.len() as f64;
        let mut weighted = grads.transpose() / k;
        if rho_mode == RhoMode::Known {
            let rho = ds.rho().ok_or(Error::MissingRho)?;
            for (j, mut col) in weighted.column_iter_mut().enumerate() {
                col /= rho[j];
            }
        }
        Ok(IntegralDensity { points: ds.x().transpose(), weighted_grads: weighted, psi })
    }

    pub fn eval(&self, a: &DVector<f64>, b: f64) -> f64 {
        let sum: f64 = self
            .points
            .column_iter()
            .zip(self.weighted_grads.column_iter())
            .map(|(x, g)| a.dot(&g) * self.psi.eval(a.dot(&x) + b))
            .sum();
        sum.abs()
    }
}

pub fn eval_integral_density(ds: &DataSet, psi: &PsiTable, rho_mode: RhoMode, a: &DVector<f64>, b: f64) -> Result<f64> {
    Ok(IntegralDensity::new(ds, psi, rho_mode)?.eval(a, b))
}

/// Pilot proposals used to set the rejection envelope.
pub const PILOT_PROPOSALS: usize = 10_000;
/// Proposals per acceptance-rate check.
pub const COLLAPSE_WINDOW: u64 = 1_000_000;
/// Acceptance rate below which a window counts as collapsed.
pub const COLLAPSE_RATE: f64 = 1e-4;

/// Rejection sampling from the integral density with uniform proposals.
///
/// The envelope is `safety` times the largest density seen over the pilot
/// proposals. Whenever a proposal exceeds the envelope it is doubled and the
/// accepted set is discarded.
pub fn sample_integral_density(
    ds: &DataSet,
    psi: &PsiTable,
    rho_mode: RhoMode,
    n: usize,
    safety: f64,
    rng: &mut RngStream,
) -> Result<Sampled> {
    if !(safety >= 1.0) {
        return Err(Error::invalid("safety factor must be >= 1"));
    }
    let grads = ds.require_gradients()?;
    if grads.iter().all(|v| *v == 0.0) {
        return Err(Error::AllZeroGradients);
    }
    let density = IntegralDensity::new(ds, psi, rho_mode)?;
    let (d, radius) = (ds.dim(), ds.radius());

    let mut pilot_rng = rng.substream("integral-density-pilot");
    let pilot_max = (0..PILOT_PROPOSALS)
        .map(|_| {
            let p = uniform_neuron(d, radius, &mut pilot_rng);
            density.eval(&p.a, p.b)
        })
        .fold(0.0, f64::max);
    if !(pilot_max > 0.0) {
        return Err(Error::AcceptanceCollapse { rate: 0.0, proposals: PILOT_PROPOSALS as u64 });
    }
    let mut envelope = safety * pilot_max;

    let mut accepted = Vec::with_capacity(n);
    let mut proposals: u64 = 0;
    let mut window = (0u64, 0u64);
    while accepted.len() < n {
        let p = uniform_neuron(d, radius, rng);
        let m = density.eval(&p.a, p.b);
        proposals += 1;
        window.0 += 1;
        if m > envelope {
            warn!("integral density {m:.4e} exceeds envelope {envelope:.4e}; doubling and restarting");
            envelope *= 2.0;
            accepted.clear();
            proposals = 0;
            window = (0, 0);
            continue;
        }
        if rng.random::<f64>() * envelope < m {
            accepted.push(p);
            window.1 += 1;
        }
        if window.0 >= COLLAPSE_WINDOW {
            let rate = window.1 as f64 / window.0 as f64;
            if rate < COLLAPSE_RATE {
                return Err(Error::AcceptanceCollapse { rate, proposals: window.0 });
            }
            window = (0, 0);
        }
    }
    let accept_rate = if proposals > 0 { n as f64 / proposals as f64 } else { 1.0 };
    Ok(Sampled { neurons: accepted, accept_rate: Some(accept_rate) })
}

/// Cumulative neuron counts `min(ceil(kappa^i n0), n_target)`, ending at `n_target`.
pub fn residual_schedule(n_target: usize, kappa: f64, n0: usize) -> Result<Vec<usize>> {
    if !(kappa > 1.0) || n0 == 0 || n_target == 0 {
        return Err(Error::invalid("residual schedule needs kappa > 1, n0 >= 1 and a positive target"));
    }
    let mut counts = Vec::new();
    let mut i = 0i32;
    loop {
        let stage = (kappa.powi(i) * n0 as f64).ceil() as usize;
        let count = stage.min(n_target);
        if counts.last() != Some(&count) {
            counts.push(count);
        }
        if stage >= n_target {
            return Ok(counts);
        }
        i += 1;
    }
}

/// Output of the residual sampler.
#[derive(Clone, Debug)]
pub struct ResidualOutcome {
    pub neurons: Vec<Neuron>,
    pub model: RidgeModel,
    pub report: FitReport,
    /// Cumulative neuron count after each completed stage.
    pub stage_counts: Vec<usize>,
    pub stopped_early: bool,
}

/// Stagewise sampling from the gradients of the current residual.
///
/// `fit` fits outer weights for a neuron set (cross-validation included).
/// When the residual gradients vanish the sampler stops with the current
/// model instead of failing.
#[allow(clippy::too_many_arguments)]
pub fn sample_residual<F>(
    ds: &DataSet,
    base: &SamplerSpec,
    n_target: usize,
    kappa: f64,
    n0: usize,
    activation: &ActivationSpec,
    mut fit: F,
    rng: &mut RngStream,
) -> Result<ResidualOutcome>
where
    F: FnMut(&[Neuron]) -> Result<(RidgeModel, FitReport)>,
{
    if !(activation.delta > 0.0) {
        return Err(Error::DeltaZero);
    }
    if !matches!(base, SamplerSpec::LocalGradient | SamplerSpec::NonlocalGradient { .. }) {
        return Err(Error::invalid("residual base must be a local or nonlocal gradient sampler"));
    }
    let grads = ds.require_gradients()?.clone();
    let schedule = residual_schedule(n_target, kappa, n0)?;

    let mut neurons = sample(base, ds, schedule[0], activation, None, rng)?.neurons;
    let mut stage_counts = vec![neurons.len()];
    let mut stopped_early = false;
    let mut fitted = None;
    for &count in &schedule[1..] {
        let (model, report) = fit(&neurons)?;
        let residual = &grads - eval_model_gradient(&model, ds.x())?;
        let ds_res = ds.replace_gradients(residual)?;
        match sample(base, &ds_res, count - neurons.len(), activation, None, rng) {
            Ok(s) => {
                neurons.extend(s.neurons);
                stage_counts.push(neurons.len());
            }
            Err(Error::AllZeroGradients | Error::ZeroTrace) => {
                stopped_early = true;
                fitted = Some((model, report));
                break;
            }
            Err(e) => return Err(e),
        }
    }
    let (model, report) = match fitted {
        Some(f) => f,
        None => fit(&neurons)?,
    };
    Ok(ResidualOutcome { neurons, model, report, stage_counts, stopped_early })
}

/// Writes one neuron per line as `a_1 ... a_d b`, 17 significant digits.
pub fn write_weights<W: Write>(mut out: W, neurons: &[Neuron]) -> Result<()> {
    for n in neurons {
        let mut line = String::new();
        for v in n.a.iter().chain(std::iter::once(&n.b)) {
            if !line.is_empty() {
                line.push(' ');
            }
            line.push_str(&format!("{v:.16e}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Parses the format of [`write_weights`].
pub fn read_weights<R: BufRead>(input: R) -> Result<Vec<Neuron>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|e| Error::invalid(format!("bad weight `{t}`: {e}"))))
            .collect::<Result<_>>()?;
        if vals.len() < 2 {
            return Err(Error::invalid("weight line needs at least a_1 and b"));
        }
        let (a, b) = vals.split_at(vals.len() - 1);
        out.push(Neuron { a: DVector::from_column_slice(a), b: b[0] });
    }
    Ok(out)
}
