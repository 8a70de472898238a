//! Prediction and estimation metrics, k-fold selection of the number of
//! components, and the IQR outlier screen.

use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::MultiFunctionalDesign;
use crate::error::{Error, Result};
use crate::sofr::{fit_method, Method};

fn check_pair(y: &[f64], yhat: &[f64]) -> Result<()> {
    if y.len() != yhat.len() {
        return Err(Error::DimensionMismatch {
            what: "response vs prediction length",
            expected: y.len(),
            found: yhat.len(),
        });
    }
    if y.is_empty() {
        return Err(Error::InvalidArgument("empty response".into()));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::OutOfDomain {
            value: alpha,
            lower: 0.0,
            upper: 1.0,
        });
    }
    Ok(())
}

/// Number of observations discarded by trimming `n` squared errors at `alpha`.
/// Always keeps at least one.
pub fn trim_count(n: usize, alpha: f64) -> usize {
    let drop = (alpha * n as f64 - 1e-9).ceil().max(0.0) as usize;
    drop.min(n.saturating_sub(1))
}

/// Indices of the observations kept after trimming, in original order.
fn kept_indices(y: &[f64], yhat: &[f64], alpha: f64) -> Vec<usize> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    let sq = |i: usize| (y[i] - yhat[i]).powi(2);
    order.sort_by(|&a, &b| sq(a).total_cmp(&sq(b)).then(a.cmp(&b)));
    order.truncate(n - trim_count(n, alpha));
    order.sort_unstable();
    order
}

/// Mean squared prediction error after discarding the largest `alpha`
/// fraction of squared errors.
pub fn trimmed_mspe(y: &[f64], yhat: &[f64], alpha: f64) -> Result<f64> {
    check_pair(y, yhat)?;
    check_alpha(alpha)?;
    let kept = kept_indices(y, yhat, alpha);
    let total: f64 = kept.iter().map(|&i| (y[i] - yhat[i]).powi(2)).sum();
    Ok(total / kept.len() as f64)
}

/// Trimmed `R²` as the mean of per-observation ratios `(y−ŷ)²/(y−ȳ*)²` over
/// the kept set, `ȳ*` being the kept-set mean. Observations equal to `ȳ*`
/// are left out of the average.
pub fn trimmed_r2(y: &[f64], yhat: &[f64], alpha: f64) -> Result<f64> {
    check_pair(y, yhat)?;
    check_alpha(alpha)?;
    let kept = kept_indices(y, yhat, alpha);
    let y_bar = kept.iter().map(|&i| y[i]).sum::<f64>() / kept.len() as f64;
    let mut sum = 0.0;
    let mut count = 0usize;
    for &i in &kept {
        let dev = (y[i] - y_bar).powi(2);
        if dev > 0.0 {
            sum += (y[i] - yhat[i]).powi(2) / dev;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::DegenerateScale("all kept responses equal their mean"));
    }
    Ok(1.0 - sum / count as f64)
}

/// Left Riemann sum of `f` on `grid`.
pub fn left_riemann(grid: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    grid.windows(2)
        .enumerate()
        .map(|(j, w)| (w[1] - w[0]) * f(j))
        .sum()
}

/// Relative integrated squared estimation error `‖β−β̂‖²/‖β‖²` by a left
/// Riemann sum on the common grid.
pub fn risee(grid: &[f64], beta_true: &[f64], beta_hat: &[f64]) -> Result<f64> {
    if grid.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: grid.len(),
        });
    }
    for (what, v) in [("true curve", beta_true), ("estimated curve", beta_hat)] {
        if v.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                what,
                expected: grid.len(),
                found: v.len(),
            });
        }
    }
    let norm = left_riemann(grid, |j| beta_true[j].powi(2));
    if norm <= 0.0 {
        return Err(Error::DegenerateScale("true coefficient function has zero norm"));
    }
    Ok(left_riemann(grid, |j| (beta_true[j] - beta_hat[j]).powi(2)) / norm)
}

/// A `(h, fold)` cell that could not be scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedCell {
    pub h: usize,
    pub fold: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub method: Method,
    /// Component counts tried, `1..=H_max`.
    pub grid: Vec<usize>,
    /// Mean over folds of the per-fold trimmed MSPE; NaN when every fold was skipped.
    pub scores: Vec<f64>,
    pub chosen_h: usize,
    pub folds: usize,
    pub alpha: f64,
    pub skipped: Vec<SkippedCell>,
}

/// Seeded assignment of `n` observations to `folds` groups of near-equal size.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub max_components: usize,
    pub folds: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            max_components: 10,
            folds: 5,
            alpha: 0.1,
            seed: 0,
        }
    }
}

/// Chooses the number of components minimizing the k-fold trimmed MSPE.
pub fn select_num_components(
    design: &MultiFunctionalDesign,
    y: &DVector<f64>,
    method: Method,
    opts: &CvOptions,
) -> Result<CvReport> {
    let n = design.nrows();
    if y.len() != n {
        return Err(Error::DimensionMismatch {
            what: "observations vs response length",
            expected: n,
            found: y.len(),
        });
    }
    if opts.folds < 2 {
        return Err(Error::InvalidArgument("at least 2 folds are required".into()));
    }
    if opts.max_components == 0 {
        return Err(Error::InvalidArgument("maximum number of components must be at least 1".into()));
    }
    if n < 2 * opts.folds {
        return Err(Error::TooFewObservations {
            needed: 2 * opts.folds,
            found: n,
        });
    }
    check_alpha(opts.alpha)?;

    let assignment = fold_assignment(n, opts.folds, opts.seed);
    let splits: Vec<(Vec<usize>, Vec<usize>)> = (0..opts.folds)
        .map(|k| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == k);
            (train, test)
        })
        .collect();
    let train_designs: Vec<_> = splits.iter().map(|(tr, _)| design.select_rows(tr)).collect();
    let test_coefs: Vec<_> = splits
        .iter()
        .map(|(_, te)| design.coefficients().select_rows(te))
        .collect();

    let cells: Vec<(usize, usize)> = (1..=opts.max_components)
        .flat_map(|h| (0..opts.folds).map(move |k| (h, k)))
        .collect();
    let outcomes: Vec<std::result::Result<f64, String>> = cells
        .par_iter()
        .map(|&(h, k)| {
            let (train, test) = &splits[k];
            if train.len() <= h + 1 {
                return Err(format!("training size {} too small for {h} components", train.len()));
            }
            let y_train = DVector::from_iterator(train.len(), train.iter().map(|&i| y[i]));
            let fit = fit_method(method, &train_designs[k], &y_train, h).map_err(|e| e.to_string())?;
            let pred = fit.predict_coefficients(&test_coefs[k]).map_err(|e| e.to_string())?;
            let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
            trimmed_mspe(&y_test, pred.as_slice(), opts.alpha).map_err(|e| e.to_string())
        })
        .collect();

    let mut scores = Vec::with_capacity(opts.max_components);
    let mut skipped = Vec::new();
    for (h, chunk) in (1..=opts.max_components).zip(outcomes.chunks(opts.folds)) {
        let mut total = 0.0;
        let mut used = 0usize;
        for (fold, outcome) in chunk.iter().enumerate() {
            match outcome {
                Ok(v) => {
                    total += v;
                    used += 1;
                }
                Err(reason) => skipped.push(SkippedCell {
                    h,
                    fold,
                    reason: reason.clone(),
                }),
            }
        }
        scores.push(if used == 0 { f64::NAN } else { total / used as f64 });
    }

    let chosen = scores
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_finite())
        .fold(None::<(usize, f64)>, |best, (i, &s)| match best {
            Some((_, b)) if b <= s => best,
            _ => Some((i, s)),
        })
        .ok_or_else(|| Error::Breakdown(format!("no component count could be cross-validated for {method}")))?;

    Ok(CvReport {
        method,
        grid: (1..=opts.max_components).collect(),
        scores,
        chosen_h: chosen.0 + 1,
        folds: opts.folds,
        alpha: opts.alpha,
        skipped,
    })
}

/// Sample quantile by linear interpolation between order statistics.
pub fn quantile_linear(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices of points outside `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`.
pub fn iqr_outliers(y: &[f64]) -> Result<Vec<usize>> {
    if y.len() < 4 {
        return Err(Error::TooFewObservations {
            needed: 4,
            found: y.len(),
        });
    }
    let mut sorted = y.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_linear(&sorted, 0.25);
    let q3 = quantile_linear(&sorted, 0.75);
    let iqr = q3 - q1;
    let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    Ok((0..y.len()).filter(|&i| y[i] < lo || y[i] > hi).collect())
}
