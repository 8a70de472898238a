//! SIMPLS for a univariate response, plain and with observation weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{center_columns, column_means, weighted_column_means, weighted_mean, weighted_normal_solve};

/// Relative size of the deflated cross-covariance below which no further
/// component is extracted.
const EXHAUSTION_TOL: f64 = 1e-10;

/// A fitted PLS regression `y ≈ gamma0 + scores · gamma`.
#[derive(Debug, Clone)]
pub struct PlsFit {
    /// `p × h`, unit-norm columns.
    pub weights: DMatrix<f64>,
    /// `n × h` component scores of the centered training rows.
    pub scores: DMatrix<f64>,
    pub gamma0: f64,
    pub gamma: DVector<f64>,
    pub x_center: DVector<f64>,
    pub y_center: f64,
    /// Number of components asked for; `components()` may be smaller.
    pub requested: usize,
    /// Set when the cross-covariance ran out before `requested` components.
    pub rank_exhausted: bool,
}

impl PlsFit {
    pub fn components(&self) -> usize {
        self.weights.ncols()
    }

    /// Regression coefficients on the original (uncentered) columns.
    pub fn coefficients(&self) -> DVector<f64> {
        &self.weights * &self.gamma
    }

    /// Intercept on the original columns: `gamma0 - x_centerᵀ W gamma`.
    pub fn intercept(&self) -> f64 {
        self.gamma0 - self.x_center.dot(&self.coefficients())
    }

    pub fn fitted_values(&self) -> DVector<f64> {
        (&self.scores * &self.gamma).add_scalar(self.gamma0)
    }

    /// Scores of new rows: `(A_new - x_center) W`.
    pub fn transform(&self, a_new: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if a_new.ncols() != self.x_center.len() {
            return Err(Error::DimensionMismatch {
                what: "design columns",
                expected: self.x_center.len(),
                found: a_new.ncols(),
            });
        }
        Ok(center_columns(a_new, &self.x_center) * &self.weights)
    }
}

/// Weight vectors from already centered (and possibly row-scaled) data.
fn simpls_weights(x: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> (DMatrix<f64>, bool) {
    let p = x.ncols();
    let mut s = x.transpose() * y;
    let s0 = s.norm();
    let scale = x.norm() * y.norm();
    let mut weights: Vec<DVector<f64>> = Vec::with_capacity(h);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(h);
    let mut exhausted = false;

    if s0 == 0.0 || s0 <= f64::EPSILON * scale {
        return (DMatrix::zeros(p, 0), h > 0);
    }
    for a in 0..h {
        let s_norm = s.norm();
        if a > 0 && s_norm <= EXHAUSTION_TOL * s0 {
            exhausted = true;
            break;
        }
        let r = &s / s_norm;
        let t = x * &r;
        let t_norm = t.norm();
        if t_norm <= EXHAUSTION_TOL * x.norm() {
            exhausted = true;
            break;
        }
        let mut v = x.transpose() * &t / (t_norm * t_norm);
        // two Gram–Schmidt passes against the earlier loadings
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v.axpy(-proj, b, 1.0);
            }
        }
        let v_norm = v.norm();
        if v_norm == 0.0 {
            exhausted = true;
            break;
        }
        v /= v_norm;
        let proj = v.dot(&s);
        s.axpy(-proj, &v, 1.0);
        weights.push(r);
        basis.push(v);
    }
    let w = if weights.is_empty() {
        DMatrix::zeros(p, 0)
    } else {
        DMatrix::from_columns(&weights)
    };
    (w, exhausted)
}

fn max_components(n: usize, p: usize, h: usize) -> usize {
    h.min(n.saturating_sub(1)).min(p)
}

fn regress_on_scores(scores: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if scores.ncols() == 0 {
        return Ok(DVector::zeros(0));
    }
    weighted_normal_solve(scores, y, None)
}

fn check_inputs(a: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> Result<()> {
    if h == 0 {
        return Err(Error::InvalidArgument("number of components must be at least 1".into()));
    }
    if a.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "design rows vs response length",
            expected: a.nrows(),
            found: y.len(),
        });
    }
    if a.nrows() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: a.nrows(),
        });
    }
    if a.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("design and response must be finite".into()));
    }
    Ok(())
}

/// Mean-centered SIMPLS of `y` on the columns of `a` with up to `h` components.
pub fn simpls_fit(a: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> Result<PlsFit> {
    check_inputs(a, y, h)?;
    let x_center = column_means(a);
    let y_center = y.mean();
    let x = center_columns(a, &x_center);
    let y0 = y.add_scalar(-y_center);
    let hmax = max_components(a.nrows(), a.ncols(), h);
    let (weights, exhausted) = simpls_weights(&x, &y0, hmax);
    let scores = &x * &weights;
    let gamma = regress_on_scores(&scores, &y0)?;
    Ok(PlsFit {
        weights,
        scores,
        gamma0: y_center,
        gamma,
        x_center,
        y_center,
        requested: h,
        rank_exhausted: exhausted || hmax < h,
    })
}

/// SIMPLS on the rows scaled by `√r_i`, centered at the `r`-weighted means.
///
/// The returned scores are the corrected scores, i.e. the weighted scores with
/// each row divided by `√r_i`; rows with zero weight are projected directly.
pub fn weighted_simpls_fit(a: &DMatrix<f64>, y: &DVector<f64>, r: &DVector<f64>, h: usize) -> Result<PlsFit> {
    check_inputs(a, y, h)?;
    if r.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            what: "observation weights",
            expected: a.nrows(),
            found: r.len(),
        });
    }
    if r.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("observation weights must be finite and nonnegative".into()));
    }
    let positive = r.iter().filter(|&&w| w > 0.0).count();
    if positive < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: positive,
        });
    }
    let x_center = weighted_column_means(a, r);
    let y_center = weighted_mean(y, r);
    let sqrt_r = r.map(f64::sqrt);
    let centered = center_columns(a, &x_center);
    let mut xw = centered.clone();
    for (i, mut row) in xw.row_iter_mut().enumerate() {
        row *= sqrt_r[i];
    }
    let yw = DVector::from_iterator(y.len(), y.iter().zip(sqrt_r.iter()).map(|(v, s)| s * (v - y_center)));

    let hmax = max_components(positive, a.ncols(), h);
    let (weights, exhausted) = simpls_weights(&xw, &yw, hmax);
    let weighted_scores = &xw * &weights;
    let gamma = regress_on_scores(&weighted_scores, &yw)?;

    let mut scores = weighted_scores;
    for i in 0..scores.nrows() {
        if sqrt_r[i] > 0.0 {
            let mut row = scores.row_mut(i);
            row /= sqrt_r[i];
        } else {
            let projected = centered.row(i) * &weights;
            scores.row_mut(i).copy_from(&projected);
        }
    }
    Ok(PlsFit {
        weights,
        scores,
        gamma0: y_center,
        gamma,
        x_center,
        y_center,
        requested: h,
        rank_exhausted: exhausted || hmax < h,
    })
}

pub fn pls_predict(fit: &PlsFit, a_new: &DMatrix<f64>) -> Result<DVector<f64>> {
    let scores = fit.transform(a_new)?;
    Ok((scores * &fit.gamma).add_scalar(fit.gamma0))
}
