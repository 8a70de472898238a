//! Partial robust M-regression: PLS components extracted by iteratively
//! reweighted SIMPLS, where each observation's weight is the product of a
//! residual weight and a leverage weight in score space.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::row_distances;
use crate::robust::{hampel_weight, l1_median, mad_scale, median, HampelConstants};
use crate::simpls::{weighted_simpls_fit, PlsFit};

/// Lower clip for observation weights; keeps `1/√r` finite in score correction.
pub const WEIGHT_FLOOR: f64 = 1e-6;

/// How observation weights are produced. `Unit` switches reweighting off and
/// reduces the procedure to ordinary SIMPLS.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Weighting {
    #[default]
    Hampel,
    Unit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrmOptions {
    /// Relative change in the score-regression coefficients that ends the loop.
    pub tol: f64,
    pub max_iter: usize,
    pub hampel: HampelConstants,
    pub weighting: Weighting,
}

impl Default for PrmOptions {
    fn default() -> Self {
        Self {
            tol: 1e-2,
            max_iter: 100,
            hampel: HampelConstants::default(),
            weighting: Weighting::Hampel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RobustPlsFit {
    /// Last weighted SIMPLS fit; `pls.weights` is `W_r`, `pls.scores` the
    /// corrected components `ξ_r` and `pls.gamma` the coefficients `γ̂_r`.
    pub pls: PlsFit,
    /// Final observation weights `r_i = r_i^e · r_i^a`.
    pub weights: DVector<f64>,
    pub residual_weights: DVector<f64>,
    pub leverage_weights: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl RobustPlsFit {
    pub fn weight_matrix(&self) -> &DMatrix<f64> {
        &self.pls.weights
    }

    pub fn scores(&self) -> &DMatrix<f64> {
        &self.pls.scores
    }

    pub fn gamma(&self) -> &DVector<f64> {
        &self.pls.gamma
    }
}

/// Hampel weights of `‖row_i − L1-median‖ / median_i ‖row_i − L1-median‖`.
pub fn leverage_weights(rows: &DMatrix<f64>, hampel: &HampelConstants) -> Result<DVector<f64>> {
    let center = l1_median(rows);
    let dist = row_distances(rows, &center);
    let scale = median(&dist);
    if scale == 0.0 {
        return Err(Error::DegenerateScale("distances to the spatial median"));
    }
    Ok(DVector::from_iterator(
        dist.len(),
        dist.iter().map(|d| hampel_weight(d / scale, hampel)),
    ))
}

/// Hampel weights of MAD-standardized residuals.
pub fn residual_weights(residuals: &[f64], hampel: &HampelConstants) -> Result<DVector<f64>> {
    let scale = mad_scale(residuals)?;
    Ok(DVector::from_iterator(
        residuals.len(),
        residuals.iter().map(|e| hampel_weight(e / scale, hampel)),
    ))
}

fn combine(re: &DVector<f64>, ra: &DVector<f64>) -> DVector<f64> {
    re.zip_map(ra, |a, b| (a * b).clamp(WEIGHT_FLOOR, 1.0))
}

fn check(a: &DMatrix<f64>, y: &DVector<f64>, min_rows: usize) -> Result<()> {
    if a.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "design rows vs response length",
            expected: a.nrows(),
            found: y.len(),
        });
    }
    if a.nrows() < min_rows {
        return Err(Error::TooFewObservations {
            needed: min_rows,
            found: a.nrows(),
        });
    }
    Ok(())
}

/// Starting weights: residuals are deviations of `y` from its median, leverage
/// is measured on the rows of `a` themselves.
pub fn initial_weights(a: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    initial_weights_with(a, y, &HampelConstants::default())
}

pub fn initial_weights_with(a: &DMatrix<f64>, y: &DVector<f64>, hampel: &HampelConstants) -> Result<DVector<f64>> {
    check(a, y, 3)?;
    let ys: Vec<f64> = y.iter().copied().collect();
    let med = median(&ys);
    let dev: Vec<f64> = ys.iter().map(|v| v - med).collect();
    let re = residual_weights(&dev, hampel)?;
    let ra = leverage_weights(a, hampel)?;
    Ok(combine(&re, &ra))
}

/// Weights implied by a weighted fit: residuals of `y` on the corrected scores
/// and leverage of those scores.
pub fn update_weights(fit: &PlsFit, y: &DVector<f64>, hampel: &HampelConstants) -> Result<(DVector<f64>, DVector<f64>)> {
    let residuals: Vec<f64> = (y - fit.fitted_values()).iter().copied().collect();
    let re = residual_weights(&residuals, hampel)?;
    let ra = leverage_weights(&fit.scores, hampel)?;
    Ok((re, ra))
}

fn relative_change(new: &DVector<f64>, old: &DVector<f64>) -> f64 {
    if new.len() != old.len() {
        return f64::INFINITY;
    }
    let denom = old.norm();
    if denom == 0.0 {
        return if new.norm() == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (new - old).norm() / denom
}

/// One reweighting step from an existing weighted fit. Returns the new weights
/// (combined, residual, leverage) and the refit.
pub fn irpls_step(
    a: &DMatrix<f64>,
    y: &DVector<f64>,
    fit: &PlsFit,
    h: usize,
    hampel: &HampelConstants,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, PlsFit)> {
    let (re, ra) = update_weights(fit, y, hampel)?;
    let r = combine(&re, &ra);
    let refit = weighted_simpls_fit(a, y, &r, h)?;
    Ok((r, re, ra, refit))
}

pub fn prm_fit(a: &DMatrix<f64>, y: &DVector<f64>, h: usize) -> Result<RobustPlsFit> {
    prm_fit_with(a, y, h, &PrmOptions::default())
}

pub fn prm_fit_with(a: &DMatrix<f64>, y: &DVector<f64>, h: usize, opts: &PrmOptions) -> Result<RobustPlsFit> {
    if h == 0 {
        return Err(Error::InvalidArgument("number of components must be at least 1".into()));
    }
    check(a, y, h + 2)?;
    let n = a.nrows();

    if opts.weighting == Weighting::Unit {
        let ones = DVector::from_element(n, 1.0);
        let pls = weighted_simpls_fit(a, y, &ones, h)?;
        return Ok(RobustPlsFit {
            pls,
            weights: ones.clone(),
            residual_weights: ones.clone(),
            leverage_weights: ones,
            iterations: 1,
            converged: true,
        });
    }

    let ys: Vec<f64> = y.iter().copied().collect();
    let med = median(&ys);
    let dev: Vec<f64> = ys.iter().map(|v| v - med).collect();
    let mut re = residual_weights(&dev, &opts.hampel)?;
    let mut ra = leverage_weights(a, &opts.hampel)?;
    let mut r = combine(&re, &ra);
    let mut fit = weighted_simpls_fit(a, y, &r, h)?;
    let mut converged = false;
    let mut iterations = 1;

    while iterations < opts.max_iter {
        let (r_new, re_new, ra_new, refit) = irpls_step(a, y, &fit, h, &opts.hampel)?;
        iterations += 1;
        let change = relative_change(&refit.gamma, &fit.gamma);
        r = r_new;
        re = re_new;
        ra = ra_new;
        fit = refit;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(RobustPlsFit {
        pls: fit,
        weights: r,
        residual_weights: re,
        leverage_weights: ra,
        iterations,
        converged,
    })
}
