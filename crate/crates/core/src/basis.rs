//! B-spline basis systems, curve smoothing and the finite-dimensional design.
//!
//! A discretely sampled curve is represented by its coefficient vector in a
//! clamped B-spline basis. For `M` predictors the coefficient rows are stacked
//! into `D`, the basis inner products into the block-diagonal Gram matrix `Ψ`,
//! and PLS runs on `A = D (Ψ^{1/2})ᵀ`, whose Euclidean geometry matches the
//! L2 geometry of the curves.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const DOMAIN_SLACK: f64 = 1e-12;

/// A family of functions on a closed interval that are polynomial between
/// consecutive breakpoints. Anything implementing this gets an exact Gram matrix.
pub trait FunctionBasis {
    fn domain(&self) -> (f64, f64);

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sorted points, including both endpoints, between which every function
    /// is a single polynomial.
    fn breakpoints(&self) -> Vec<f64>;

    /// Largest polynomial degree on any piece.
    fn piece_degree(&self) -> usize;

    /// Writes the value of every function at `t` into `out` (length `len()`).
    /// `t` is assumed to lie inside the domain.
    fn eval_into(&self, t: f64, out: &mut [f64]);
}

/// Clamped B-spline basis with equally spaced interior knots.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisSystem {
    lower: f64,
    upper: f64,
    order: usize,
    num_basis: usize,
    knots: Vec<f64>,
}

impl BasisSystem {
    /// Cubic (order 4) system.
    pub fn cubic(domain: (f64, f64), num_basis: usize) -> Result<Self> {
        Self::new(domain, num_basis, 4)
    }

    pub fn new(domain: (f64, f64), num_basis: usize, order: usize) -> Result<Self> {
        let (lower, upper) = domain;
        if !(lower.is_finite() && upper.is_finite()) || upper <= lower {
            return Err(Error::InvalidArgument(format!(
                "basis domain [{lower}, {upper}] is empty or inverted"
            )));
        }
        if order < 2 {
            return Err(Error::InvalidArgument(format!(
                "spline order must be at least 2, got {order}"
            )));
        }
        if num_basis < order {
            return Err(Error::InvalidArgument(format!(
                "number of basis functions ({num_basis}) is smaller than the spline order ({order})"
            )));
        }
        let interior = num_basis - order;
        let width = upper - lower;
        let mut knots = Vec::with_capacity(num_basis + order);
        knots.extend(std::iter::repeat_n(lower, order));
        for i in 1..=interior {
            knots.push(lower + width * (i as f64) / ((interior + 1) as f64));
        }
        knots.extend(std::iter::repeat_n(upper, order));
        Ok(Self {
            lower,
            upper,
            order,
            num_basis,
            knots,
        })
    }

    pub fn num_basis(&self) -> usize {
        self.num_basis
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Full clamped knot vector (length `num_basis + order`).
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn interior_knots(&self) -> &[f64] {
        &self.knots[self.order..self.num_basis]
    }

    fn check_point(&self, t: f64) -> Result<f64> {
        let slack = DOMAIN_SLACK * (self.upper - self.lower);
        if !t.is_finite() || t < self.lower - slack || t > self.upper + slack {
            return Err(Error::OutOfDomain {
                value: t,
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(t.clamp(self.lower, self.upper))
    }

    /// Index `μ` with `knots[μ] <= t < knots[μ + 1]`; the last span is closed.
    fn span(&self, t: f64) -> usize {
        let last = self.num_basis - 1;
        if t >= self.knots[last + 1] {
            return last;
        }
        // knots[order-1..=num_basis] are the distinct breakpoints (with the
        // clamped ends); partition_point gives the first knot strictly above t.
        let idx = self.knots[..=last + 1].partition_point(|&k| k <= t);
        (idx - 1).clamp(self.order - 1, last)
    }

    /// Values of the `order` functions that can be nonzero at `t`, along with
    /// the index of the first of them.
    fn nonzero_at(&self, t: f64, values: &mut [f64]) -> usize {
        let degree = self.order - 1;
        let mu = self.span(t);
        let mut left = vec![0.0; self.order];
        let mut right = vec![0.0; self.order];
        values[0] = 1.0;
        for j in 1..=degree {
            left[j] = t - self.knots[mu + 1 - j];
            right[j] = self.knots[mu + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        mu - degree
    }

    /// Basis matrix with one row per point.
    pub fn evaluate(&self, points: &[f64]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(points.len(), self.num_basis);
        let mut local = vec![0.0; self.order];
        for (i, &t) in points.iter().enumerate() {
            let t = self.check_point(t)?;
            let first = self.nonzero_at(t, &mut local);
            for (k, v) in local.iter().enumerate() {
                out[(i, first + k)] = *v;
            }
        }
        Ok(out)
    }
}

impl FunctionBasis for BasisSystem {
    fn domain(&self) -> (f64, f64) {
        (self.lower, self.upper)
    }

    fn len(&self) -> usize {
        self.num_basis
    }

    fn breakpoints(&self) -> Vec<f64> {
        let mut pts = self.knots[self.order - 1..=self.num_basis].to_vec();
        pts.dedup();
        pts
    }

    fn piece_degree(&self) -> usize {
        self.order - 1
    }

    fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.fill(0.0);
        let mut local = vec![0.0; self.order];
        let first = self.nonzero_at(t.clamp(self.lower, self.upper), &mut local);
        out[first..first + self.order].copy_from_slice(&local);
    }
}

pub fn build_bspline_system(domain: (f64, f64), num_basis: usize, order: usize) -> Result<BasisSystem> {
    BasisSystem::new(domain, num_basis, order)
}

pub fn evaluate_basis(system: &BasisSystem, points: &[f64]) -> Result<DMatrix<f64>> {
    system.evaluate(points)
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "quadrature needs at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// `Ψ[j][k] = ∫ ψ_j(t) ψ_k(t) dt`, integrated piece by piece with a
/// Gauss–Legendre rule that is exact for the products.
pub fn gram_matrix_of<B: FunctionBasis + ?Sized>(basis: &B) -> DMatrix<f64> {
    let k = basis.len();
    // 2 * degree is the product degree; n nodes integrate degree 2n - 1 exactly.
    let nodes_per_piece = basis.piece_degree() + 2;
    let (nodes, weights) = gauss_legendre(nodes_per_piece);
    let mut gram = DMatrix::<f64>::zeros(k, k);
    let mut row = vec![0.0; k];
    for piece in basis.breakpoints().windows(2) {
        let (a, b) = (piece[0], piece[1]);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        for (x, w) in nodes.iter().zip(&weights) {
            basis.eval_into(mid + half * x, &mut row);
            let scale = w * half;
            for j in 0..k {
                if row[j] == 0.0 {
                    continue;
                }
                let sj = scale * row[j];
                for l in j..k {
                    gram[(j, l)] += sj * row[l];
                }
            }
        }
    }
    for j in 0..k {
        for l in 0..j {
            gram[(j, l)] = gram[(l, j)];
        }
    }
    gram
}

pub fn gram_matrix(system: &BasisSystem) -> DMatrix<f64> {
    gram_matrix_of(system)
}

/// Symmetric square root of a Gram matrix and its (pseudo-)inverse.
#[derive(Debug, Clone)]
pub struct GramRoot {
    pub sqrt: DMatrix<f64>,
    pub inv_sqrt: DMatrix<f64>,
}

/// Relative eigenvalue below which `Ψ` counts as indefinite.
const PSD_TOLERANCE: f64 = 1e-8;
/// Relative eigenvalue below which the inverse root treats a direction as null.
const INVERSE_FLOOR: f64 = 1e-12;

pub fn sqrt_gram(psi: &DMatrix<f64>) -> Result<GramRoot> {
    if !psi.is_square() {
        return Err(Error::DimensionMismatch {
            what: "Gram matrix columns",
            expected: psi.nrows(),
            found: psi.ncols(),
        });
    }
    let eig = SymmetricEigen::new(psi.clone());
    let max = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -PSD_TOLERANCE * max.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    let n = psi.nrows();
    let mut root_diag = DVector::zeros(n);
    let mut inv_diag = DVector::zeros(n);
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        let lambda = lambda.max(0.0);
        root_diag[i] = lambda.sqrt();
        if lambda > INVERSE_FLOOR * max {
            inv_diag[i] = 1.0 / lambda.sqrt();
        }
    }
    let v = &eig.eigenvectors;
    let sqrt = symmetrize(v * DMatrix::from_diagonal(&root_diag) * v.transpose());
    let inv_sqrt = symmetrize(v * DMatrix::from_diagonal(&inv_diag) * v.transpose());
    Ok(GramRoot { sqrt, inv_sqrt })
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Least-squares basis coefficients, one row per curve in `raw`.
pub fn smooth_curves(raw: &DMatrix<f64>, grid: &[f64], system: &BasisSystem) -> Result<DMatrix<f64>> {
    if raw.ncols() != grid.len() {
        return Err(Error::DimensionMismatch {
            what: "curve samples per row vs grid length",
            expected: grid.len(),
            found: raw.ncols(),
        });
    }
    let k = system.num_basis();
    if grid.len() < k {
        return Err(Error::RankDeficient(format!(
            "{} grid points cannot determine {} basis coefficients",
            grid.len(),
            k
        )));
    }
    let phi = system.evaluate(grid)?;
    let qr = phi.qr();
    let r = qr.r();
    let diag_max = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-10 * diag_max) {
        return Err(Error::RankDeficient(
            "basis evaluation matrix on the grid is rank deficient".into(),
        ));
    }
    // Solve R c = Qᵀ x for every curve at once.
    let qt_x = qr.q().transpose() * raw.transpose();
    let coefs = r
        .solve_upper_triangular(&qt_x)
        .ok_or_else(|| Error::RankDeficient("triangular solve failed".into()))?;
    Ok(coefs.transpose())
}

/// Coefficients, Gram blocks and transformed design for `M` functional predictors.
#[derive(Debug, Clone)]
pub struct MultiFunctionalDesign {
    systems: Vec<BasisSystem>,
    d: DMatrix<f64>,
    psi: DMatrix<f64>,
    psi_half: DMatrix<f64>,
    psi_half_inv: DMatrix<f64>,
    a: DMatrix<f64>,
}

impl MultiFunctionalDesign {
    /// Assembles the design from coefficient rows already expressed in `systems`.
    pub fn from_coefficients(systems: Vec<BasisSystem>, d: DMatrix<f64>) -> Result<Self> {
        if systems.is_empty() {
            return Err(Error::InvalidArgument("at least one predictor is required".into()));
        }
        let total: usize = systems.iter().map(BasisSystem::num_basis).sum();
        if d.ncols() != total {
            return Err(Error::DimensionMismatch {
                what: "coefficient columns",
                expected: total,
                found: d.ncols(),
            });
        }
        let psi = block_gram(&systems);
        let root = sqrt_gram(&psi)?;
        let a = &d * root.sqrt.transpose();
        Ok(Self {
            systems,
            d,
            psi,
            psi_half: root.sqrt,
            psi_half_inv: root.inv_sqrt,
            a,
        })
    }

    pub fn systems(&self) -> &[BasisSystem] {
        &self.systems
    }

    pub fn num_predictors(&self) -> usize {
        self.systems.len()
    }

    pub fn nrows(&self) -> usize {
        self.d.nrows()
    }

    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn psi(&self) -> &DMatrix<f64> {
        &self.psi
    }

    pub fn psi_half(&self) -> &DMatrix<f64> {
        &self.psi_half
    }

    pub fn psi_half_inv(&self) -> &DMatrix<f64> {
        &self.psi_half_inv
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// Column range of predictor `m` inside `D`, `A` and coefficient vectors.
    pub fn block(&self, m: usize) -> Range<usize> {
        block_ranges(&self.systems)[m].clone()
    }

    /// Same basis and Gram matrices restricted to the given observations.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            systems: self.systems.clone(),
            d: self.d.select_rows(rows),
            psi: self.psi.clone(),
            psi_half: self.psi_half.clone(),
            psi_half_inv: self.psi_half_inv.clone(),
            a: self.a.select_rows(rows),
        }
    }
}

pub fn block_ranges(systems: &[BasisSystem]) -> Vec<Range<usize>> {
    let mut start = 0;
    systems
        .iter()
        .map(|s| {
            let r = start..start + s.num_basis();
            start = r.end;
            r
        })
        .collect()
}

pub fn block_gram(systems: &[BasisSystem]) -> DMatrix<f64> {
    let ranges = block_ranges(systems);
    let total = ranges.last().map_or(0, |r| r.end);
    let mut psi = DMatrix::zeros(total, total);
    for (system, range) in systems.iter().zip(&ranges) {
        let g = gram_matrix(system);
        psi.view_mut((range.start, range.start), (g.nrows(), g.ncols()))
            .copy_from(&g);
    }
    psi
}

/// Smooths every predictor and assembles `D`, `Ψ`, `Ψ^{1/2}` and `A`.
pub fn build_design(
    curves: &[DMatrix<f64>],
    grids: &[Vec<f64>],
    systems: &[BasisSystem],
) -> Result<MultiFunctionalDesign> {
    let d = smooth_all(curves, grids, systems)?;
    MultiFunctionalDesign::from_coefficients(systems.to_vec(), d)
}

/// Column-block concatenation of the smoothed coefficients of every predictor.
pub fn smooth_all(
    curves: &[DMatrix<f64>],
    grids: &[Vec<f64>],
    systems: &[BasisSystem],
) -> Result<DMatrix<f64>> {
    if curves.is_empty() {
        return Err(Error::InvalidArgument("at least one predictor is required".into()));
    }
    if curves.len() != systems.len() || grids.len() != systems.len() {
        return Err(Error::DimensionMismatch {
            what: "number of predictors",
            expected: systems.len(),
            found: curves.len().min(grids.len()),
        });
    }
    let n = curves[0].nrows();
    if let Some(bad) = curves.iter().find(|c| c.nrows() != n) {
        return Err(Error::DimensionMismatch {
            what: "observations per predictor",
            expected: n,
            found: bad.nrows(),
        });
    }
    let ranges = block_ranges(systems);
    let total = ranges.last().map_or(0, |r| r.end);
    let mut d = DMatrix::zeros(n, total);
    for ((raw, grid), (system, range)) in curves.iter().zip(grids).zip(systems.iter().zip(&ranges)) {
        let block = smooth_curves(raw, grid, system)?;
        d.view_mut((0, range.start), (n, range.len())).copy_from(&block);
    }
    Ok(d)
}
