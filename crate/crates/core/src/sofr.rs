//! Scalar-on-multiple-function regression: FPLS, robust FPLS and the FPC
//! baseline, all expressed through the basis coefficients of the curves.
//!
//! Every method fits a linear model on `A = D (Ψ^{1/2})ᵀ` with coefficient
//! vector `b`, and maps it back to basis coefficients of the coefficient
//! functions via `β̂ = (Ψ^{-1/2})ᵀ b`, so that `A b = D Ψ β̂`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::basis::{block_gram, block_ranges, smooth_all, BasisSystem, MultiFunctionalDesign};
use crate::error::{Error, Result};
use crate::linalg::{center_columns, column_means, weighted_normal_solve};
use crate::prm::{prm_fit_with, PrmOptions};
use crate::robust::{m_estimate, m_estimate_with, select_tuning, Loss};
use crate::simpls::simpls_fit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fpc,
    Fpls,
    Rfpls,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Fpc, Method::Fpls, Method::Rfpls];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Fpc => "fpc",
            Method::Fpls => "fpls",
            Method::Rfpls => "rfpls",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fpc" => Ok(Method::Fpc),
            "fpls" => Ok(Method::Fpls),
            "rfpls" => Ok(Method::Rfpls),
            other => Err(Error::InvalidArgument(format!(
                "unknown method '{other}' (expected fpls, rfpls or fpc)"
            ))),
        }
    }
}

/// Diagnostics of a robust fit.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustReport {
    /// Final IRPLS observation weights.
    pub weights: DVector<f64>,
    /// Bisquare tuning constant (NaN when the quadratic loss was forced).
    pub tuning_c: f64,
    pub irpls_iterations: usize,
    pub irpls_converged: bool,
    pub m_iterations: usize,
    pub m_converged: bool,
    /// Residual scale of the final M-estimation step.
    pub scale: f64,
}

/// A fitted model `y = intercept + Σ_m ∫ X_m(t) β̂_m(t) dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSofr {
    pub method: Method,
    pub systems: Vec<BasisSystem>,
    /// Stacked basis coefficients of the `M` coefficient functions.
    pub beta_coefs: DVector<f64>,
    pub intercept: f64,
    /// Number of components used.
    pub components: usize,
    /// Center of the basis coefficients used when fitting.
    pub coef_center: DVector<f64>,
    pub robust: Option<RobustReport>,
}

impl FittedSofr {
    pub fn num_predictors(&self) -> usize {
        self.systems.len()
    }

    /// Basis coefficients of `β̂_m`.
    pub fn beta_block(&self, m: usize) -> DVector<f64> {
        let r = block_ranges(&self.systems)[m].clone();
        self.beta_coefs.rows(r.start, r.len()).into_owned()
    }

    /// `intercept + D Ψ β̂` for rows of basis coefficients.
    pub fn predict_coefficients(&self, d: &DMatrix<f64>) -> Result<DVector<f64>> {
        if d.ncols() != self.beta_coefs.len() {
            return Err(Error::DimensionMismatch {
                what: "coefficient columns",
                expected: self.beta_coefs.len(),
                found: d.ncols(),
            });
        }
        let psi_beta = block_gram(&self.systems) * &self.beta_coefs;
        Ok((d * psi_beta).add_scalar(self.intercept))
    }

    pub fn predict_design(&self, design: &MultiFunctionalDesign) -> Result<DVector<f64>> {
        self.predict_coefficients(design.coefficients())
    }
}

/// Options for [`fit_rfpls_with`]. The defaults give the full robust method.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RfplsOptions {
    pub prm: PrmOptions,
    pub loss: RobustLoss,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum RobustLoss {
    /// Bisquare with the constant chosen by maximal efficiency.
    #[default]
    AutoBisquare,
    Bisquare(f64),
    /// Least squares on the robust components.
    Quadratic,
}

fn check_response(design: &MultiFunctionalDesign, y: &DVector<f64>) -> Result<()> {
    if design.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "observations vs response length",
            expected: design.nrows(),
            found: y.len(),
        });
    }
    Ok(())
}

/// `(Ψ^{-1/2})ᵀ b`
fn to_basis_coefficients(design: &MultiFunctionalDesign, b: &DVector<f64>) -> DVector<f64> {
    design.psi_half_inv().transpose() * b
}

/// `Ψ^{-1/2}`-image of a center in `A`-space, i.e. the matching `D`-space center.
fn coef_center(design: &MultiFunctionalDesign, a_center: &DVector<f64>) -> DVector<f64> {
    design.psi_half_inv() * a_center
}

pub fn fit_fpls(design: &MultiFunctionalDesign, y: &DVector<f64>, h: usize) -> Result<FittedSofr> {
    check_response(design, y)?;
    let pls = simpls_fit(design.a(), y, h)?;
    let b = pls.coefficients();
    Ok(FittedSofr {
        method: Method::Fpls,
        systems: design.systems().to_vec(),
        beta_coefs: to_basis_coefficients(design, &b),
        intercept: pls.intercept(),
        components: pls.components(),
        coef_center: coef_center(design, &pls.x_center),
        robust: None,
    })
}

pub fn fit_rfpls(design: &MultiFunctionalDesign, y: &DVector<f64>, h: usize) -> Result<FittedSofr> {
    fit_rfpls_with(design, y, h, &RfplsOptions::default())
}

pub fn fit_rfpls_with(
    design: &MultiFunctionalDesign,
    y: &DVector<f64>,
    h: usize,
    opts: &RfplsOptions,
) -> Result<FittedSofr> {
    check_response(design, y)?;
    let prm = prm_fit_with(design.a(), y, h, &opts.prm)?;
    let scores = prm.scores();
    let m = match opts.loss {
        RobustLoss::AutoBisquare => {
            let c = select_tuning(scores, y)?;
            m_estimate(scores, y, c)?
        }
        RobustLoss::Bisquare(c) => m_estimate(scores, y, c)?,
        RobustLoss::Quadratic => m_estimate_with(scores, y, Loss::Quadratic)?,
    };
    let b = prm.weight_matrix() * &m.delta;
    let intercept = m.intercept - prm.pls.x_center.dot(&b);
    Ok(FittedSofr {
        method: Method::Rfpls,
        systems: design.systems().to_vec(),
        beta_coefs: to_basis_coefficients(design, &b),
        intercept,
        components: prm.pls.components(),
        coef_center: coef_center(design, &prm.pls.x_center),
        robust: Some(RobustReport {
            weights: prm.weights.clone(),
            tuning_c: m.c,
            irpls_iterations: prm.iterations,
            irpls_converged: prm.converged,
            m_iterations: m.iterations,
            m_converged: m.converged,
            scale: m.scale,
        }),
    })
}

/// Principal directions of the centered rows of `A`.
#[derive(Debug, Clone)]
pub struct FpcDecomposition {
    pub center: DVector<f64>,
    /// `p × k`, orthonormal columns ordered by decreasing variance.
    pub loadings: DMatrix<f64>,
    pub eigenvalues: DVector<f64>,
}

impl FpcDecomposition {
    pub fn scores(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        center_columns(a, &self.center) * &self.loadings
    }
}

/// PCA of `A`, which is functional PCA of the curves in the `L2` metric.
pub fn functional_pca(a: &DMatrix<f64>, k: usize) -> Result<FpcDecomposition> {
    if k == 0 {
        return Err(Error::InvalidArgument("number of components must be at least 1".into()));
    }
    let center = column_means(a);
    let x = center_columns(a, &center);
    let cov = x.transpose() * &x;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > 1e-10 * top && top > 0.0)
        .count()
        .min(a.nrows().saturating_sub(1));
    if k > rank {
        return Err(Error::RankDeficient(format!(
            "{k} principal components requested but the curves span only {rank}"
        )));
    }
    let mut loadings = DMatrix::zeros(a.ncols(), k);
    for (c, &i) in order.iter().take(k).enumerate() {
        let mut v = eig.eigenvectors.column(i).into_owned();
        // sign convention: largest-magnitude entry positive
        let imax = v.iamax();
        if v[imax] < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(c, &v);
    }
    let eigenvalues = DVector::from_iterator(k, order.iter().take(k).map(|&i| eig.eigenvalues[i]));
    Ok(FpcDecomposition {
        center,
        loadings,
        eigenvalues,
    })
}

pub fn fit_fpc(design: &MultiFunctionalDesign, y: &DVector<f64>, num_components: usize) -> Result<FittedSofr> {
    check_response(design, y)?;
    let pca = functional_pca(design.a(), num_components)?;
    let scores = pca.scores(design.a());
    let y_mean = y.mean();
    let g = weighted_normal_solve(&scores, &y.add_scalar(-y_mean), None)?;
    let b = &pca.loadings * g;
    Ok(FittedSofr {
        method: Method::Fpc,
        systems: design.systems().to_vec(),
        beta_coefs: to_basis_coefficients(design, &b),
        intercept: y_mean - pca.center.dot(&b),
        components: num_components,
        coef_center: coef_center(design, &pca.center),
        robust: None,
    })
}

/// Fits `method` with `h` components (principal components for FPC).
pub fn fit_method(method: Method, design: &MultiFunctionalDesign, y: &DVector<f64>, h: usize) -> Result<FittedSofr> {
    match method {
        Method::Fpls => fit_fpls(design, y, h),
        Method::Rfpls => fit_rfpls(design, y, h),
        Method::Fpc => fit_fpc(design, y, h),
    }
}

/// `β̂_m(t)` sampled on one grid per predictor.
pub fn coefficient_functions(fit: &FittedSofr, grids: &[Vec<f64>]) -> Result<Vec<DVector<f64>>> {
    if grids.len() != fit.systems.len() {
        return Err(Error::DimensionMismatch {
            what: "number of evaluation grids",
            expected: fit.systems.len(),
            found: grids.len(),
        });
    }
    fit.systems
        .iter()
        .zip(grids)
        .enumerate()
        .map(|(m, (system, grid))| Ok(system.evaluate(grid)? * fit.beta_block(m)))
        .collect()
}

/// Smooths raw curves with the model's basis systems and predicts.
pub fn predict(fit: &FittedSofr, curves: &[DMatrix<f64>], grids: &[Vec<f64>]) -> Result<DVector<f64>> {
    if curves.len() != fit.systems.len() {
        return Err(Error::DimensionMismatch {
            what: "number of functional predictors",
            expected: fit.systems.len(),
            found: curves.len(),
        });
    }
    let d = smooth_all(curves, grids, &fit.systems)?;
    fit.predict_coefficients(&d)
}

/// PLS components computed directly on the basis coefficients in the `Ψ`
/// metric: each weight function maximizes the squared covariance with the
/// deflated response, and curves and response are deflated on the new
/// component. Used to cross-check SIMPLS on `A`.
pub fn functional_pls_scores(design: &MultiFunctionalDesign, y: &DVector<f64>, h: usize) -> DMatrix<f64> {
    let n = design.nrows();
    let psi = design.psi();
    let mut d = center_columns(design.coefficients(), &column_means(design.coefficients()));
    let mut yk = y.add_scalar(-y.mean());
    let mut cols = Vec::with_capacity(h);
    for _ in 0..h {
        let sigma = d.transpose() * &yk / n as f64;
        let norm2 = sigma.dot(&(psi * &sigma));
        if norm2 <= 0.0 {
            break;
        }
        let w = sigma / norm2.sqrt();
        let xi = &d * (psi * &w);
        let xx = xi.dot(&xi);
        if xx == 0.0 {
            break;
        }
        let loading = d.transpose() * &xi / xx;
        d -= &xi * loading.transpose();
        let c = yk.dot(&xi) / xx;
        yk.axpy(-c, &xi, 1.0);
        cols.push(xi);
    }
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}
