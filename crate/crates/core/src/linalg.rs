//! Small dense helpers shared by the estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub(crate) fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows() as f64;
    DVector::from_iterator(
        x.ncols(),
        x.column_iter().map(|col| col.iter().sum::<f64>() / n),
    )
}

/// Means of the columns under nonnegative row weights. Summation order matches
/// [`column_means`] so unit weights reproduce it bit for bit.
pub(crate) fn weighted_column_means(x: &DMatrix<f64>, w: &DVector<f64>) -> DVector<f64> {
    let total: f64 = w.iter().sum();
    DVector::from_iterator(
        x.ncols(),
        x.column_iter()
            .map(|col| col.iter().zip(w.iter()).map(|(v, wi)| wi * v).sum::<f64>() / total),
    )
}

pub(crate) fn weighted_mean(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
    let total: f64 = w.iter().sum();
    v.iter().zip(w.iter()).map(|(a, b)| b * a).sum::<f64>() / total
}

pub(crate) fn center_columns(x: &DMatrix<f64>, center: &DVector<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col.add_scalar_mut(-center[j]);
    }
    out
}

/// `[1 | x]`
pub(crate) fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    out.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    out
}

/// Solves `(Xᵀ W X) b = Xᵀ W y` through a Cholesky factorization.
pub(crate) fn weighted_normal_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: Option<&DVector<f64>>,
) -> Result<DVector<f64>> {
    let p = x.ncols();
    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut rhs = DVector::<f64>::zeros(p);
    for i in 0..x.nrows() {
        let wi = w.map_or(1.0, |w| w[i]);
        if wi == 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..p {
            let ra = wi * row[a];
            rhs[a] += ra * y[i];
            for b in a..p {
                gram[(a, b)] += ra * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Breakdown("weighted normal matrix is singular".into()))?;
    Ok(chol.solve(&rhs))
}

pub(crate) fn row_distances(x: &DMatrix<f64>, center: &DVector<f64>) -> Vec<f64> {
    (0..x.nrows())
        .map(|i| {
            x.row(i)
                .iter()
                .zip(center.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}
