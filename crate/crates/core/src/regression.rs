//! Ridge regression of the outer weights.
//!
//! The objective is `(1/2K) |Phi c + P p - y|^2 + (alpha N / 2) |c|^2`, where
//! `P` holds the unregularized polynomial columns (degree `< s`).

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::activation::ActivationSpec;
use crate::data::DataSet;
use crate::error::{Error, Result};
use crate::geometry::Neuron;

/// Feature matrix and polynomial columns evaluated at a set of points.
#[derive(Clone, Debug)]
pub struct Features {
    pub phi: DMatrix<f64>,
    pub poly: DMatrix<f64>,
}

impl Features {
    pub fn n_points(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_neurons(&self) -> usize {
        self.phi.ncols()
    }

    pub fn predict(&self, coef: &DVector<f64>, poly: &DVector<f64>) -> DVector<f64> {
        let mut out = &self.phi * coef;
        if !poly.is_empty() {
            out += &self.poly * poly;
        }
        out
    }
}

fn direction_matrix(neurons: &[Neuron], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, neurons.len(), |i, n| neurons[n].a[i])
}

/// Preactivations `a_n . x_k + b_n` as a `K x N` matrix.
pub fn preactivations(x: &DMatrix<f64>, neurons: &[Neuron]) -> DMatrix<f64> {
    let mut z = x * direction_matrix(neurons, x.ncols());
    for (n, mut col) in z.column_iter_mut().enumerate() {
        col.add_scalar_mut(neurons[n].b);
    }
    z
}

fn poly_columns(x: &DMatrix<f64>, activation: &ActivationSpec) -> DMatrix<f64> {
    let k = x.nrows();
    let p = activation.poly_len(x.ncols());
    DMatrix::from_fn(k, p, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] })
}

/// `Phi[k, n] = sigma(a_n . x_k + b_n)`, plus the polynomial block when `poly`.
pub fn feature_matrix(x: &DMatrix<f64>, neurons: &[Neuron], activation: &ActivationSpec, poly: bool) -> Features {
    let mut phi = preactivations(x, neurons);
    phi.apply(|t| *t = activation.eval(*t));
    let poly = if poly { poly_columns(x, activation) } else { DMatrix::zeros(x.nrows(), 0) };
    Features { phi, poly }
}

/// Outer weights and polynomial coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    pub c: DVector<f64>,
    pub p: DVector<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveForm {
    Primal,
    Dual,
}

enum Prepared {
    Primal { gram: DMatrix<f64>, rhs: DVector<f64> },
    Dual { kernel: DMatrix<f64> },
}

/// Ridge system with the `alpha`-independent products precomputed, so that
/// a grid of regularization values costs one factorization each.
pub struct RidgeProblem<'a> {
    features: &'a Features,
    y: &'a DVector<f64>,
    prepared: Prepared,
}

impl<'a> RidgeProblem<'a> {
    pub fn new(features: &'a Features, y: &'a DVector<f64>) -> Result<Self> {
        let form = if features.n_neurons() <= features.n_points() { SolveForm::Primal } else { SolveForm::Dual };
        Self::with_form(features, y, form)
    }

    pub fn with_form(features: &'a Features, y: &'a DVector<f64>, form: SolveForm) -> Result<Self> {
        let k = features.n_points();
        if y.len() != k {
            return Err(Error::invalid("target length does not match feature rows"));
        }
        if features.n_neurons() == 0 {
            return Err(Error::invalid("ridge solve needs at least one neuron"));
        }
        if features.phi.iter().chain(features.poly.iter()).chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ridge inputs"));
        }
        let prepared = match form {
            SolveForm::Primal => {
                let mut full = features.phi.clone();
                if features.poly.ncols() > 0 {
                    full = concat_columns(&features.phi, &features.poly);
                }
                let inv_k = 1.0 / k as f64;
                let gram = full.tr_mul(&full) * inv_k;
                let rhs = full.tr_mul(y) * inv_k;
                Prepared::Primal { gram, rhs }
            }
            SolveForm::Dual => {
                let inv_n = 1.0 / features.n_neurons() as f64;
                Prepared::Dual { kernel: (&features.phi * features.phi.transpose()) * inv_n }
            }
        };
        Ok(RidgeProblem { features, y, prepared })
    }

    pub fn form(&self) -> SolveForm {
        match self.prepared {
            Prepared::Primal { .. } => SolveForm::Primal,
            Prepared::Dual { .. } => SolveForm::Dual,
        }
    }

    pub fn solve(&self, alpha: f64) -> Result<Coefficients> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
        }
        let k = self.features.n_points() as f64;
        let n_feat = self.features.n_neurons();
        let n = n_feat as f64;
        match &self.prepared {
            Prepared::Primal { gram, rhs } => {
                let mut sys = gram.clone();
                for i in 0..n_feat {
                    sys[(i, i)] += alpha * n;
                }
                let sol = factor(sys, alpha)?.solve(rhs);
                Ok(Coefficients {
                    c: sol.rows(0, n_feat).into_owned(),
                    p: sol.rows(n_feat, sol.len() - n_feat).into_owned(),
                })
            }
            Prepared::Dual { kernel } => {
                let mut sys = kernel.clone();
                for i in 0..sys.nrows() {
                    sys[(i, i)] += alpha * k;
                }
                let chol = factor(sys, alpha)?;
                let poly = &self.features.poly;
                let (beta, p) = if poly.ncols() == 0 {
                    (chol.solve(self.y), DVector::zeros(0))
                } else {
                    // Saddle point [A P; P^T 0]: eliminate beta through A^{-1}.
                    let a_inv_p = chol.solve(poly);
                    let schur = poly.tr_mul(&a_inv_p);
                    let a_inv_y = chol.solve(self.y);
                    let p = factor(schur, alpha)?.solve(&poly.tr_mul(&a_inv_y));
                    let beta = a_inv_y - a_inv_p * &p;
                    (beta, p)
                };
                let c = self.features.phi.tr_mul(&beta) / n;
                Ok(Coefficients { c, p })
            }
        }
    }
}

fn concat_columns(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

fn factor(sys: DMatrix<f64>, alpha: f64) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(sys).ok_or(Error::Factorization { alpha })
}

/// Solves the ridge problem, primal when `N <= K` and dual otherwise.
pub fn ridge_solve(features: &Features, y: &DVector<f64>, alpha: f64) -> Result<Coefficients> {
    RidgeProblem::new(features, y)?.solve(alpha)
}

/// Value of the regularized least-squares objective.
pub fn ridge_objective(features: &Features, y: &DVector<f64>, alpha: f64, coef: &Coefficients) -> f64 {
    let r = features.predict(&coef.c, &coef.p) - y;
    let k = features.n_points() as f64;
    let n = features.n_neurons() as f64;
    r.norm_squared() / (2.0 * k) + 0.5 * alpha * n * coef.c.norm_squared()
}

/// Fitted shallow network `sum_n c_n sigma(a_n . x + b_n) + p0(x)`.
#[derive(Clone, Debug)]
pub struct RidgeModel {
    pub neurons: Vec<Neuron>,
    pub c: DVector<f64>,
    /// Constant term, then linear coefficients for `s = 2`. Empty when the
    /// polynomial block is disabled.
    pub poly: DVector<f64>,
    pub activation: ActivationSpec,
}

impl RidgeModel {
    pub fn new(neurons: Vec<Neuron>, c: DVector<f64>, poly: DVector<f64>, activation: ActivationSpec) -> Result<Self> {
        if neurons.len() != c.len() {
            return Err(Error::invalid("one outer weight per neuron required"));
        }
        if let Some(d) = neurons.first().map(Neuron::dim) {
            if neurons.iter().any(|n| n.dim() != d) {
                return Err(Error::invalid("neurons have mixed dimensions"));
            }
            if !poly.is_empty() && poly.len() != activation.poly_len(d) {
                return Err(Error::invalid("polynomial coefficient count does not match activation"));
            }
        }
        if c.iter().chain(poly.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model coefficients"));
        }
        Ok(RidgeModel { neurons, c, poly, activation })
    }

    pub fn n_neurons(&self) -> usize {
        self.neurons.len()
    }
}

/// Model predictions at the rows of `x`.
pub fn eval_model(model: &RidgeModel, x: &DMatrix<f64>) -> DVector<f64> {
    let features = feature_matrix(x, &model.neurons, &model.activation, !model.poly.is_empty());
    features.predict(&model.c, &model.poly)
}

/// Gradients of the model at the rows of `x` (one row per point).
pub fn eval_model_gradient(model: &RidgeModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let act = model.activation;
    if act.s == 1 && !act.is_smooth() {
        return Err(Error::NonsmoothModel);
    }
    let d = x.ncols();
    let mut weights = preactivations(x, &model.neurons);
    for t in weights.iter_mut() {
        *t = act.derivative(*t)?;
    }
    for (n, mut col) in weights.column_iter_mut().enumerate() {
        col *= model.c[n];
    }
    let mut grad = weights * direction_matrix(&model.neurons, d).transpose();
    if act.s == 2 && model.poly.len() == d + 1 {
        for mut row in grad.row_iter_mut() {
            for i in 0..d {
                row[i] += model.poly[i + 1];
            }
        }
    }
    Ok(grad)
}

/// Twenty-five log-spaced values from 1 down to 1e-12.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..25).map(|i| 10f64.powf(-12.0 * i as f64 / 24.0)).collect()
}

/// Outcome of the regularization grid search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitReport {
    pub alpha: f64,
    pub alpha_grid: Vec<f64>,
    pub train_rmse: Vec<f64>,
    /// RMSE on training plus validation points, per grid value.
    pub val_rmse: Vec<f64>,
    pub chosen_index: usize,
}

impl FitReport {
    pub fn chosen_train_rmse(&self) -> f64 {
        self.train_rmse[self.chosen_index]
    }

    pub fn chosen_val_rmse(&self) -> f64 {
        self.val_rmse[self.chosen_index]
    }
}

/// Tolerance of the selection rule: the largest alpha within 5% of the best.
pub const SELECTION_SLACK: f64 = 1.05;

/// Index of the largest alpha (grid is descending) whose error is within the
/// slack of the minimum.
pub fn select_alpha(val_rmse: &[f64]) -> Option<usize> {
    let best = val_rmse.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if !best.is_finite() {
        return None;
    }
    val_rmse.iter().position(|v| *v <= SELECTION_SLACK * best)
}

fn sum_sq(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

pub fn rmse(pred: &DVector<f64>, truth: &DVector<f64>) -> f64 {
    (sum_sq(pred, truth) / truth.len() as f64).sqrt()
}

/// Fits on `train` for every alpha, scores on train plus validation, picks
/// alpha by the 5% rule and returns the model refit at that alpha.
pub fn cross_validate(
    train: &DataSet,
    val: &DataSet,
    neurons: &[Neuron],
    activation: &ActivationSpec,
    alpha_grid: &[f64],
    poly: bool,
) -> Result<(RidgeModel, FitReport)> {
    if alpha_grid.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    if alpha_grid.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::invalid("alpha grid must be strictly descending"));
    }
    if train.dim() != val.dim() {
        return Err(Error::invalid("train and validation dimensions differ"));
    }
    let f_train = feature_matrix(train.x(), neurons, activation, poly);
    let f_val = feature_matrix(val.x(), neurons, activation, poly);
    let problem = RidgeProblem::new(&f_train, train.y())?;

    let n_all = (train.len() + val.len()) as f64;
    let mut fits = Vec::with_capacity(alpha_grid.len());
    let mut train_rmse = Vec::with_capacity(alpha_grid.len());
    let mut val_rmse = Vec::with_capacity(alpha_grid.len());
    for &alpha in alpha_grid {
        // A grid value whose system cannot be factored is skipped, not fatal.
        let coef = match problem.solve(alpha) {
            Ok(c) => c,
            Err(Error::Factorization { .. }) => {
                train_rmse.push(f64::INFINITY);
                val_rmse.push(f64::INFINITY);
                fits.push(None);
                continue;
            }
            Err(e) => return Err(e),
        };
        let sse_train = sum_sq(&f_train.predict(&coef.c, &coef.p), train.y());
        let sse_val = sum_sq(&f_val.predict(&coef.c, &coef.p), val.y());
        train_rmse.push((sse_train / train.len() as f64).sqrt());
        val_rmse.push(((sse_train + sse_val) / n_all).sqrt());
        fits.push(Some(coef));
    }
    let chosen_index =
        select_alpha(&val_rmse).ok_or(Error::Factorization { alpha: alpha_grid[alpha_grid.len() - 1] })?;
    let coef = fits.swap_remove(chosen_index).expect("selected fit is finite");
    let model = RidgeModel::new(neurons.to_vec(), coef.c, coef.p, *activation)?;
    let report = FitReport {
        alpha: alpha_grid[chosen_index],
        alpha_grid: alpha_grid.to_vec(),
        train_rmse,
        val_rmse,
        chosen_index,
    };
    Ok((model, report))
}
