use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Standardized regression data with optional derivative information.
#[derive(Clone, Debug)]
pub struct DataSet {
    x: DMatrix<f64>,
    y: DVector<f64>,
    grads: Option<DMatrix<f64>>,
    hessians: Option<Vec<DMatrix<f64>>>,
    radius: f64,
    rho: Option<Vec<f64>>,
}

impl DataSet {
    /// Points are rows of `x`; all of them must lie in the ball of `radius`.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, radius: f64) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::invalid(format!("{} points but {} targets", x.nrows(), y.len())));
        }
        if x.ncols() == 0 {
            return Err(Error::invalid("points have dimension zero"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::invalid("radius must be positive"));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("data"));
        }
        for (k, row) in x.row_iter().enumerate() {
            if row.norm() > radius + 1e-9 {
                return Err(Error::invalid(format!("point {k} lies outside the ball of radius {radius}")));
            }
        }
        Ok(DataSet { x, y, grads: None, hessians: None, radius, rho: None })
    }

    pub fn with_gradients(mut self, grads: DMatrix<f64>) -> Result<Self> {
        if grads.shape() != self.x.shape() {
            return Err(Error::invalid("gradient matrix shape does not match points"));
        }
        if grads.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("gradients"));
        }
        self.grads = Some(grads);
        Ok(self)
    }

    pub fn with_hessians(mut self, hessians: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = self.dim();
        if hessians.len() != self.len() {
            return Err(Error::invalid("one Hessian per point required"));
        }
        for (k, h) in hessians.iter().enumerate() {
            if h.shape() != (d, d) {
                return Err(Error::invalid(format!("Hessian {k} is not {d}x{d}")));
            }
            if h.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("Hessians"));
            }
            let scale = h.amax().max(1.0);
            if (h - h.transpose()).amax() > 1e-10 * scale {
                return Err(Error::invalid(format!("Hessian {k} is not symmetric")));
            }
        }
        self.hessians = Some(hessians);
        Ok(self)
    }

    pub fn with_rho(mut self, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != self.len() {
            return Err(Error::invalid("one density value per point required"));
        }
        if rho.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::invalid("density values must be positive"));
        }
        self.rho = Some(rho);
        Ok(self)
    }

    /// Same points and targets with gradient data replaced.
    pub fn replace_gradients(&self, grads: DMatrix<f64>) -> Result<Self> {
        let mut out = self.clone();
        out.grads = None;
        out.with_gradients(grads)
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn gradients(&self) -> Option<&DMatrix<f64>> {
        self.grads.as_ref()
    }

    pub fn hessians(&self) -> Option<&[DMatrix<f64>]> {
        self.hessians.as_deref()
    }

    pub fn rho(&self) -> Option<&[f64]> {
        self.rho.as_deref()
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.x.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    pub fn point(&self, k: usize) -> Vec<f64> {
        self.x.row(k).iter().copied().collect()
    }

    pub(crate) fn require_gradients(&self) -> Result<&DMatrix<f64>> {
        self.grads.as_ref().ok_or(Error::MissingGradients)
    }
}
