//! Robust building blocks: bisquare loss, Hampel weights, MAD, spatial median,
//! and the bisquare M-estimator with a data-driven tuning constant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{weighted_normal_solve, with_intercept};

/// Cutoffs of Hampel's three-part redescending function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HampelConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for HampelConstants {
    fn default() -> Self {
        Self {
            c1: 1.65,
            c2: 1.96,
            c3: 3.09,
        }
    }
}

impl HampelConstants {
    pub fn new(c1: f64, c2: f64, c3: f64) -> Result<Self> {
        if !(0.0 < c1 && c1 < c2 && c2 < c3) {
            return Err(Error::InvalidArgument(format!(
                "Hampel constants must satisfy 0 < c1 < c2 < c3, got ({c1}, {c2}, {c3})"
            )));
        }
        Ok(Self { c1, c2, c3 })
    }
}

/// Tukey's bisquare loss, normalized to saturate at 1.
pub fn tukey_rho(u: f64, c: f64) -> f64 {
    if u.abs() > c {
        return 1.0;
    }
    let q = 1.0 - (u / c).powi(2);
    1.0 - q * q * q
}

/// `u (1 - (u/c)²)²` inside `[-c, c]`, zero outside.
///
/// This is the derivative of [`tukey_rho`] divided by `6 / c²`. Outside the
/// window the loss is flat, so the score function vanishes there.
pub fn tukey_kappa(u: f64, c: f64) -> f64 {
    if u.abs() > c {
        return 0.0;
    }
    let q = 1.0 - (u / c).powi(2);
    u * q * q
}

/// Hampel's piecewise function.
pub fn hampel_f(x: f64, k: &HampelConstants) -> f64 {
    let a = x.abs();
    let magnitude = if a <= k.c1 {
        a
    } else if a <= k.c2 {
        k.c1
    } else if a <= k.c3 {
        k.c1 * (k.c3 - a) / (k.c3 - k.c2)
    } else {
        0.0
    };
    magnitude.copysign(x)
}

/// `f(x) / x`: one up to `c1`, falling to zero at `c3`.
pub fn hampel_weight(x: f64, k: &HampelConstants) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        return 1.0;
    }
    hampel_f(a, k) / a
}

/// Median with the even-length convention of averaging the two middle values.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of an empty set");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Raw median absolute deviation `median |e_i - median e|` (no consistency factor).
///
/// Returns [`Error::DegenerateScale`] when the MAD is zero.
pub fn mad_scale(e: &[f64]) -> Result<f64> {
    if e.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: e.len(),
        });
    }
    let mad = raw_mad(e);
    if mad == 0.0 {
        return Err(Error::DegenerateScale("residual vector"));
    }
    Ok(mad)
}

fn raw_mad(e: &[f64]) -> f64 {
    let m = median(e);
    let dev: Vec<f64> = e.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

const L1_MAX_ITER: usize = 500;
const L1_STEP_TOL: f64 = 1e-8;

/// Spatial (L1) median of the rows of `points`.
///
/// Weiszfeld iterations with the Vardi–Zhang correction for iterates that land
/// on a data point.
pub fn l1_median(points: &DMatrix<f64>) -> DVector<f64> {
    let (n, dim) = points.shape();
    assert!(n >= 1, "spatial median of an empty set");
    let mut y = DVector::from_fn(dim, |j, _| {
        let col: Vec<f64> = points.column(j).iter().copied().collect();
        median(&col)
    });
    if n == 1 {
        return points.row(0).transpose();
    }
    let dist = |y: &DVector<f64>, i: usize| -> f64 {
        points
            .row(i)
            .iter()
            .zip(y.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let spread = (0..n).map(|i| dist(&y, i)).sum::<f64>() / n as f64;
    if spread == 0.0 {
        return y;
    }
    let coincide = 1e-12 * spread;
    for _ in 0..L1_MAX_ITER {
        let mut numerator = DVector::zeros(dim);
        let mut pull = DVector::zeros(dim);
        let mut inv_sum = 0.0;
        let mut eta = 0.0;
        for i in 0..n {
            let d = dist(&y, i);
            if d <= coincide {
                eta += 1.0;
                continue;
            }
            let row = points.row(i).transpose();
            numerator.axpy(1.0 / d, &row, 1.0);
            pull.axpy(1.0 / d, &(&row - &y), 1.0);
            inv_sum += 1.0 / d;
        }
        if inv_sum == 0.0 {
            break;
        }
        let target = numerator / inv_sum;
        let next = if eta > 0.0 {
            let r = pull.norm();
            if r <= eta {
                break;
            }
            let lam = eta / r;
            target * (1.0 - lam) + &y * lam
        } else {
            target
        };
        let step = (&next - &y).norm();
        y = next;
        if step < L1_STEP_TOL * spread {
            break;
        }
    }
    y
}

/// Efficiency factor `[Σ κ'(e_i)]² / (n Σ κ(e_i)²)` with a central-difference
/// derivative of step `step` (in the units of `e`).
pub fn efficiency_factor(e: &[f64], c: f64, step: f64) -> Result<f64> {
    if e.len() < 2 {
        return Err(Error::TooFewObservations {
            needed: 2,
            found: e.len(),
        });
    }
    if !(step > 0.0) || !(c > 0.0) {
        return Err(Error::InvalidArgument("tuning constant and step must be positive".into()));
    }
    let slope: f64 = e
        .iter()
        .map(|&u| (tukey_kappa(u + step, c) - tukey_kappa(u - step, c)) / (2.0 * step))
        .sum();
    let energy: f64 = e.iter().map(|&u| tukey_kappa(u, c).powi(2)).sum();
    if energy == 0.0 {
        return Err(Error::UndefinedEfficiency);
    }
    Ok(slope * slope / (e.len() as f64 * energy))
}

/// Candidate tuning constants `1.0, 1.1, …, 10.0`.
pub fn tuning_grid() -> Vec<f64> {
    (10..=100).map(|k| k as f64 / 10.0).collect()
}

/// Central-difference step for the efficiency factor, in units of the scale.
const EFFICIENCY_STEP: f64 = 1e-4;

/// Residual scale below which a fit counts as exact, relative to the response size.
const EXACT_FIT_TOL: f64 = 1e-12;

fn response_size(y: &DVector<f64>) -> f64 {
    let ys: Vec<f64> = y.iter().copied().collect();
    let m = median(&ys);
    let spread = ys.iter().map(|v| (v - m).abs()).fold(0.0, f64::max);
    let size = spread.max(m.abs());
    if size > 0.0 {
        size
    } else {
        f64::MIN_POSITIVE
    }
}

fn check_scores(scores: &DMatrix<f64>, y: &DVector<f64>, min_rows: usize) -> Result<()> {
    if scores.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "score rows vs response length",
            expected: scores.nrows(),
            found: y.len(),
        });
    }
    if y.len() < min_rows {
        return Err(Error::TooFewObservations {
            needed: min_rows,
            found: y.len(),
        });
    }
    Ok(())
}

/// Bisquare constant in `[1, 10]` maximizing the efficiency factor of the
/// least-squares residuals. Ties go to the larger constant.
pub fn select_tuning(scores: &DMatrix<f64>, y: &DVector<f64>) -> Result<f64> {
    check_scores(scores, y, scores.ncols() + 1)?;
    let x = with_intercept(scores);
    let theta = weighted_normal_solve(&x, y, None)?;
    let residuals = y - &x * theta;
    let res: Vec<f64> = residuals.iter().copied().collect();
    let scale = raw_mad(&res);
    if scale <= EXACT_FIT_TOL * response_size(y) {
        return Err(Error::DegenerateScale("least-squares residuals"));
    }
    let e: Vec<f64> = res.iter().map(|r| r / scale).collect();
    let mut best: Option<(f64, f64)> = None;
    for c in tuning_grid() {
        let tau = match efficiency_factor(&e, c, EFFICIENCY_STEP) {
            Ok(t) => t,
            Err(Error::UndefinedEfficiency) => continue,
            Err(err) => return Err(err),
        };
        if best.is_none_or(|(_, b)| tau >= b) {
            best = Some((c, tau));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::UndefinedEfficiency)
}

/// Loss used by [`m_estimate_with`]. `Quadratic` turns the estimator into
/// ordinary least squares.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Loss {
    Bisquare(f64),
    Quadratic,
}

/// Result of the IRLS M-estimation of `y = intercept + scores · delta`.
#[derive(Debug, Clone)]
pub struct MEstimate {
    pub delta: DVector<f64>,
    pub intercept: f64,
    /// Bisquare constant; NaN for the quadratic loss.
    pub c: f64,
    /// MAD of the residuals at the last reweighting (zero for exact fits).
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
    /// IRLS weights `κ(e_i) / e_i` used in the final solve.
    pub weights: DVector<f64>,
}

const IRLS_TOL: f64 = 1e-8;
const IRLS_MAX_ITER: usize = 100;

/// Bisquare M-estimate with tuning constant `c`.
pub fn m_estimate(scores: &DMatrix<f64>, y: &DVector<f64>, c: f64) -> Result<MEstimate> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!("tuning constant must be positive, got {c}")));
    }
    m_estimate_with(scores, y, Loss::Bisquare(c))
}

pub fn m_estimate_with(scores: &DMatrix<f64>, y: &DVector<f64>, loss: Loss) -> Result<MEstimate> {
    check_scores(scores, y, scores.ncols() + 2)?;
    let n = y.len();
    let x = with_intercept(scores);
    let mut theta = weighted_normal_solve(&x, y, None)?;
    let mut weights = DVector::from_element(n, 1.0);
    let mut scale = 0.0;
    let mut converged = false;
    let mut iterations = 0;
    let tiny = EXACT_FIT_TOL * response_size(y);

    for it in 1..=IRLS_MAX_ITER {
        iterations = it;
        let residuals = y - &x * &theta;
        let res: Vec<f64> = residuals.iter().copied().collect();
        scale = raw_mad(&res);
        if scale <= tiny {
            // the current fit is exact on at least half of the observations
            converged = true;
            break;
        }
        weights = match loss {
            Loss::Quadratic => DVector::from_element(n, 1.0),
            Loss::Bisquare(c) => DVector::from_iterator(
                n,
                res.iter().map(|r| {
                    let e = r / scale;
                    if e == 0.0 {
                        1.0
                    } else {
                        tukey_kappa(e, c) / e
                    }
                }),
            ),
        };
        let next = weighted_normal_solve(&x, y, Some(&weights))?;
        let change = (&next - &theta).norm() / theta.norm().max(f64::MIN_POSITIVE);
        theta = next;
        if change < IRLS_TOL {
            converged = true;
            break;
        }
    }
    let c = match loss {
        Loss::Bisquare(c) => c,
        Loss::Quadratic => f64::NAN,
    };
    Ok(MEstimate {
        delta: theta.rows(1, theta.len() - 1).into_owned(),
        intercept: theta[0],
        c,
        scale,
        iterations,
        converged,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    const C: f64 = 4.685;

    #[test]
    fn rho_values() {
        assert_eq!(tukey_rho(0.0, C), 0.0);
        for u in [C, C + 1e-9, 2.0 * C, -3.0 * C] {
            assert!((tukey_rho(u, C) - 1.0).abs() < 1e-15);
        }
        // 1 - (3/4)^3
        assert!((tukey_rho(C / 2.0, C) - 0.578125).abs() < 1e-15);
    }

    #[test]
    fn kappa_values() {
        assert_eq!(tukey_kappa(0.0, C), 0.0);
        assert_eq!(tukey_kappa(C, C), 0.0);
        assert_eq!(tukey_kappa(2.0 * C, C), 0.0);
        // (1 - 1/4)^2
        assert!((tukey_kappa(C / 2.0, C) - C / 2.0 * 0.5625).abs() < 1e-15);
        assert_eq!(tukey_kappa(-1.3, C), -tukey_kappa(1.3, C));
    }

    #[test]
    fn kappa_is_scaled_rho_derivative() {
        let h = 1e-6;
        for k in -99..100 {
            let u = C * k as f64 / 100.0;
            let d = (tukey_rho(u + h, C) - tukey_rho(u - h, C)) / (2.0 * h);
            assert!((tukey_kappa(u, C) * 6.0 / (C * C) - d).abs() < 1e-6, "u={u}");
        }
    }

    #[test]
    fn hampel_piecewise() {
        let k = HampelConstants::default();
        assert_eq!(hampel_f(1.0, &k), 1.0);
        assert_eq!(hampel_f(1.8, &k), 1.65);
        let expected = 1.65 * (3.09 - 2.5) / (3.09 - 1.96);
        assert!((hampel_f(2.5, &k) - expected).abs() < 1e-15);
        assert!((hampel_f(2.5, &k) - 0.86150).abs() < 5e-6);
        assert_eq!(hampel_f(4.0, &k), 0.0);
        assert_eq!(hampel_f(-1.8, &k), -1.65);
    }

    #[test]
    fn hampel_weights() {
        let k = HampelConstants::default();
        assert_eq!(hampel_weight(0.5, &k), 1.0);
        assert_eq!(hampel_weight(0.0, &k), 1.0);
        assert_eq!(hampel_weight(4.0, &k), 0.0);
        assert!((hampel_weight(2.5, &k) - 0.3446).abs() < 1e-4);
        assert_eq!(hampel_weight(-2.5, &k), hampel_weight(2.5, &k));
        // continuity at the cutoffs
        for cut in [k.c1, k.c2, k.c3] {
            let gap = (hampel_weight(cut - 1e-10, &k) - hampel_weight(cut + 1e-10, &k)).abs();
            assert!(gap < 1e-8);
        }
    }

    #[test]
    fn hampel_constants_validated() {
        assert!(HampelConstants::new(1.0, 2.0, 3.0).is_ok());
        assert!(HampelConstants::new(2.0, 1.0, 3.0).is_err());
        assert!(HampelConstants::new(0.0, 1.0, 3.0).is_err());
    }

    #[test]
    fn mad_examples() {
        assert_eq!(mad_scale(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap(), 1.0);
        assert_eq!(mad_scale(&[-2.5, 0.0, 2.5]).unwrap(), 2.5);
        assert!(matches!(mad_scale(&[3.0; 6]), Err(Error::DegenerateScale(_))));
        // even length: midpoint of the central order statistics
        assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    }

    #[test]
    fn l1_median_trivial_cases() {
        let one = DMatrix::from_row_slice(1, 3, &[1.0, -2.0, 5.0]);
        assert_eq!(l1_median(&one), DVector::from_vec(vec![1.0, -2.0, 5.0]));
        // regular simplex in 3 dims centred at the origin (tetrahedron)
        let s = DMatrix::from_row_slice(
            4,
            3,
            &[1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0],
        );
        assert!(l1_median(&s).norm() < 1e-6);
        // equilateral triangle
        let h = 3f64.sqrt() / 2.0;
        let tri = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, -0.5, h, -0.5, -h]);
        assert!(l1_median(&tri).norm() < 1e-6);
    }

    #[test]
    fn l1_median_matches_grid_search() {
        let pts = DMatrix::from_row_slice(4, 2, &[0.0, 0.0, 4.0, 0.5, 1.0, 3.0, 3.5, 2.5]);
        let objective = |x: f64, y: f64| -> f64 {
            (0..4)
                .map(|i| ((pts[(i, 0)] - x).powi(2) + (pts[(i, 1)] - y).powi(2)).sqrt())
                .sum()
        };
        // coarse grid then a refined grid around the best cell
        let mut best = (0.0, 0.0, f64::INFINITY);
        for i in 0..=400 {
            for j in 0..=300 {
                let (x, y) = (i as f64 * 0.01, j as f64 * 0.01);
                let f = objective(x, y);
                if f < best.2 {
                    best = (x, y, f);
                }
            }
        }
        let (cx, cy) = (best.0, best.1);
        for i in -100..=100 {
            for j in -100..=100 {
                let (x, y) = (cx + i as f64 * 1e-4, cy + j as f64 * 1e-4);
                let f = objective(x, y);
                if f < best.2 {
                    best = (x, y, f);
                }
            }
        }
        let m = l1_median(&pts);
        assert!((m[0] - best.0).abs() < 1e-3 && (m[1] - best.1).abs() < 1e-3, "{m} vs {best:?}");
    }

    #[test]
    fn l1_median_with_anchor_point() {
        // the middle point is the minimizer and also a data point
        let pts = DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
        assert!(l1_median(&pts).norm() < 1e-9);
    }

    fn kappa_prime(u: f64, c: f64) -> f64 {
        if u.abs() > c {
            return 0.0;
        }
        let q = (u / c).powi(2);
        (1.0 - q) * (1.0 - 5.0 * q)
    }

    fn tau_oracle(e: &[f64], c: f64) -> f64 {
        let s: f64 = e.iter().map(|&u| kappa_prime(u, c)).sum();
        let k: f64 = e.iter().map(|&u| tukey_kappa(u, c).powi(2)).sum();
        s * s / (e.len() as f64 * k)
    }

    #[test]
    fn efficiency_against_symbolic_derivative() {
        let e = [-1.0, 0.0, 1.0];
        let tau = efficiency_factor(&e, C, 1e-4).unwrap();
        assert!((tau - tau_oracle(&e, C)).abs() < 1e-6);
    }

    #[test]
    fn efficiency_near_one_for_small_residuals() {
        // unit mean square, all inside [-c/10, c/10]
        let e = [-1.2, -0.9, -0.5, 0.3, 0.8, 1.1, -1.0, 1.25];
        let ms: f64 = e.iter().map(|v| v * v).sum::<f64>() / e.len() as f64;
        let e: Vec<f64> = e.iter().map(|v| v / ms.sqrt()).collect();
        let c = 40.0;
        let tau = efficiency_factor(&e, c, 1e-4).unwrap();
        assert!((tau - tau_oracle(&e, c)).abs() < 1e-6);
        assert!((tau - 1.0).abs() < 0.01, "{tau}");
    }

    #[test]
    fn efficiency_undefined_beyond_c() {
        assert_eq!(efficiency_factor(&[5.0, -6.0, 7.0], 2.0, 1e-4), Err(Error::UndefinedEfficiency));
    }

    fn normal_problem(n: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scores = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |i, _| {
            1.0 + 2.0 * scores[(i, 0)] - scores[(i, 1)] + rng.sample::<f64, _>(StandardNormal)
        });
        (scores, y)
    }

    #[test]
    fn tuning_on_clean_gaussian_data_favours_efficiency() {
        for seed in 0..5 {
            let (s, y) = normal_problem(200, seed);
            let c = select_tuning(&s, &y).unwrap();
            assert!((1.0..=10.0).contains(&c));
            assert!(c >= 4.0, "seed {seed}: c = {c}");
        }
    }

    #[test]
    fn tuning_grid_spans_one_to_ten() {
        let g = tuning_grid();
        assert_eq!(g.len(), 91);
        assert_eq!(g[0], 1.0);
        assert_eq!(g[90], 10.0);
    }

    #[test]
    fn tuning_rejects_exact_fit() {
        let s = DMatrix::from_fn(10, 1, |i, _| i as f64);
        let y = DVector::from_element(10, 2.0);
        assert!(matches!(select_tuning(&s, &y), Err(Error::DegenerateScale(_))));
    }

    fn ls(scores: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        with_intercept(scores).svd(true, true).solve(y, 1e-14).unwrap()
    }

    #[test]
    fn quadratic_loss_is_least_squares() {
        let (s, y) = normal_problem(50, 9);
        let m = m_estimate_with(&s, &y, Loss::Quadratic).unwrap();
        let oracle = ls(&s, &y);
        assert!((m.intercept - oracle[0]).abs() < 1e-10);
        assert!((m.delta[0] - oracle[1]).abs() < 1e-10);
        assert!((m.delta[1] - oracle[2]).abs() < 1e-10);
        assert!(m.converged);
    }

    #[test]
    fn noise_free_line_is_recovered_immediately() {
        let s = DMatrix::from_fn(12, 1, |i, _| i as f64 - 4.0);
        let y = s.column(0) * 2.0;
        let m = m_estimate(&s, &y, C).unwrap();
        assert!((m.delta[0] - 2.0).abs() < 1e-12);
        assert_eq!(m.iterations, 1);
        assert!(m.converged);
    }

    #[test]
    fn gross_outlier_gets_zero_weight() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = DMatrix::from_fn(n, 1, |_, _| rng.random_range(-2.0..2.0));
        let mut y = DVector::from_fn(n, |i, _| 0.5 + 3.0 * s[(i, 0)] + 0.1 * rng.sample::<f64, _>(StandardNormal));
        y[11] += 500.0;
        let m = m_estimate(&s, &y, C).unwrap();
        assert_eq!(m.weights[11], 0.0);
        let keep: Vec<usize> = (0..n).filter(|&i| i != 11).collect();
        let oracle = ls(&s.select_rows(&keep), &y.select_rows(&keep));
        assert!((m.intercept - oracle[0]).abs() < 0.05);
        assert!((m.delta[0] - oracle[1]).abs() < 0.05);
        // fixed point: weighted LS at the final weights reproduces the estimate
        let x = DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { s[(i, 0)] });
        let w = DMatrix::from_diagonal(&m.weights);
        let refit = (x.transpose() * &w * &x).cholesky().unwrap().solve(&(x.transpose() * &w * &y));
        assert!((refit[0] - m.intercept).abs() < 1e-6);
        assert!((refit[1] - m.delta[0]).abs() < 1e-6);
    }

    #[test]
    fn m_estimate_needs_enough_rows() {
        let s = DMatrix::zeros(3, 2);
        let y = DVector::zeros(3);
        assert!(matches!(m_estimate(&s, &y, C), Err(Error::TooFewObservations { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn rho_is_even_bounded_monotone(u in -20.0f64..20.0, c in 0.5f64..10.0) {
            let r = tukey_rho(u, c);
            prop_assert!((0.0..=1.0).contains(&r));
            prop_assert_eq!(r, tukey_rho(-u, c));
            prop_assert!(tukey_rho(u.abs() + 0.01, c) >= r);
        }

        #[test]
        fn hampel_weight_in_unit_interval(x in -10.0f64..10.0) {
            let w = hampel_weight(x, &HampelConstants::default());
            prop_assert!((0.0..=1.0).contains(&w));
        }

        #[test]
        fn mad_is_affine_equivariant(
            v in proptest::collection::vec(-100.0f64..100.0, 3..30),
            a in -5.0f64..5.0,
            b in -50.0f64..50.0,
        ) {
            let base = raw_mad(&v);
            let moved: Vec<f64> = v.iter().map(|x| a * x + b).collect();
            prop_assert!((raw_mad(&moved) - a.abs() * base).abs() < 1e-9 * (1.0 + base * a.abs()));
        }

        #[test]
        fn l1_median_equivariance(
            seed in 0u64..500,
            shift in proptest::collection::vec(-10.0f64..10.0, 3),
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts = DMatrix::from_fn(9, 3, |_, _| rng.random_range(-3.0..3.0));
            let m = l1_median(&pts);
            let shift = DVector::from_vec(shift);
            let moved = DMatrix::from_fn(9, 3, |i, j| pts[(i, j)] + shift[j]);
            prop_assert!((l1_median(&moved) - (&m + &shift)).norm() < 1e-6);
            let (s, c) = angle.sin_cos();
            let rot = DMatrix::from_row_slice(3, 3, &[c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0]);
            let rotated = &pts * rot.transpose();
            // the stopping rule bounds the step, not the error, so compare objectives
            let objective = |p: &DMatrix<f64>, c: &DVector<f64>| {
                (0..p.nrows()).map(|i| (p.row(i).transpose() - c).norm()).sum::<f64>()
            };
            let mr = l1_median(&rotated);
            let fr = objective(&rotated, &mr);
            prop_assert!((fr - objective(&rotated, &(&rot * &m))).abs() < 1e-9 * fr);
            prop_assert!((mr - &rot * &m).norm() < 1e-4);
        }

        #[test]
        fn m_estimate_regression_equivariant(seed in 0u64..300, v0 in -3.0f64..3.0, v1 in -3.0f64..3.0) {
            let (s, y) = normal_problem(60, seed);
            let base = m_estimate(&s, &y, C).unwrap();
            let shifted_y = &y + &s * DVector::from_vec(vec![v0, v1]);
            let moved = m_estimate(&s, &shifted_y, C).unwrap();
            // relative-change stopping leaves differences at the 1e-8 level
            let tol = 1e-6 * (1.0 + moved.delta.norm());
            prop_assert!((moved.delta[0] - base.delta[0] - v0).abs() < tol);
            prop_assert!((moved.delta[1] - base.delta[1] - v1).abs() < tol);
        }
    }
}
