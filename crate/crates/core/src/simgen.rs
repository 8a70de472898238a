//! Monte Carlo data for three functional predictors, clean and contaminated,
//! and the replication harness comparing FPLS, RFPLS and FPC.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{build_design, BasisSystem};
use crate::error::{Error, Result};
use crate::eval::{risee, select_num_components, trimmed_mspe, trimmed_r2, CvOptions};
use crate::sofr::{coefficient_functions, fit_method, predict, Method};

pub const NUM_PREDICTORS: usize = 3;
pub const NUM_TERMS: usize = 5;
pub const GRID_POINTS: usize = 200;
const SIMPSON_INTERVALS: usize = 2000;
/// Variance of the response error on contaminated rows: a standard deviation
/// of 10.
pub const CONTAMINATED_NOISE_VARIANCE: f64 = 100.0;

pub fn sim_grid() -> Vec<f64> {
    (0..GRID_POINTS).map(|j| j as f64 / (GRID_POINTS - 1) as f64).collect()
}

/// Term `j` (1-based) of the curve expansion; contaminated curves double the sine.
pub fn upsilon(j: usize, t: f64, contaminated: bool) -> f64 {
    let a = j as f64 * PI * t;
    let s = if contaminated { 2.0 } else { 1.0 };
    s * a.sin() - a.cos()
}

/// True coefficient function `m` (0-based).
pub fn beta_true(m: usize, t: f64) -> f64 {
    match m {
        0 => (2.0 * PI * t).sin(),
        1 => (3.0 * PI * t).sin(),
        2 => (2.0 * PI * t).cos(),
        _ => panic!("only {NUM_PREDICTORS} coefficient functions"),
    }
}

pub fn kappa_sd(j: usize) -> f64 {
    (4.0 * (j as f64).powf(-1.5)).sqrt()
}

/// Composite Simpson rule on `[0, 1]`.
pub fn simpson(f: impl Fn(f64) -> f64, intervals: usize) -> f64 {
    let h = 1.0 / intervals as f64;
    let mut acc = f(0.0) + f(1.0);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(i as f64 * h);
    }
    acc * h / 3.0
}

/// `∫ υ_j β_m` for every predictor and term, clean and contaminated.
fn term_integrals(contaminated: bool) -> &'static [[f64; NUM_TERMS]; NUM_PREDICTORS] {
    static CLEAN: OnceLock<[[f64; NUM_TERMS]; NUM_PREDICTORS]> = OnceLock::new();
    static DIRTY: OnceLock<[[f64; NUM_TERMS]; NUM_PREDICTORS]> = OnceLock::new();
    let cell = if contaminated { &DIRTY } else { &CLEAN };
    cell.get_or_init(|| {
        let mut out = [[0.0; NUM_TERMS]; NUM_PREDICTORS];
        for (m, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = simpson(|t| upsilon(j + 1, t, contaminated) * beta_true(m, t), SIMPSON_INTERVALS);
            }
        }
        out
    })
}

/// `∫ X_m β_m` for a curve with expansion weights `kappa`.
pub fn response_term(m: usize, kappa: &[f64; NUM_TERMS], contaminated: bool) -> f64 {
    let table = term_integrals(contaminated);
    kappa.iter().zip(table[m].iter()).map(|(k, i)| k * i).sum()
}

pub fn curve_values(kappa: &[f64; NUM_TERMS], grid: &[f64], contaminated: bool) -> Vec<f64> {
    grid.iter()
        .map(|&t| {
            kappa
                .iter()
                .enumerate()
                .map(|(j, k)| k * upsilon(j + 1, t, contaminated))
                .sum()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub grids: Vec<Vec<f64>>,
    /// One `n × 200` matrix per predictor.
    pub curves: Vec<DMatrix<f64>>,
    pub y: DVector<f64>,
    /// True coefficient functions sampled on the grids.
    pub beta_true: Vec<DVector<f64>>,
    pub contamination_mask: Vec<bool>,
    pub level: f64,
    pub seed: u64,
}

impl SimDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn num_contaminated(&self) -> usize {
        self.contamination_mask.iter().filter(|&&b| b).count()
    }

    pub fn select_rows(&self, rows: &[usize]) -> SimDataset {
        SimDataset {
            grids: self.grids.clone(),
            curves: self.curves.iter().map(|c| c.select_rows(rows)).collect(),
            y: self.y.select_rows(rows),
            beta_true: self.beta_true.clone(),
            contamination_mask: rows.iter().map(|&i| self.contamination_mask[i]).collect(),
            level: self.level,
            seed: self.seed,
        }
    }
}

fn draw_kappa(rng: &mut ChaCha8Rng) -> [f64; NUM_TERMS] {
    let mut k = [0.0; NUM_TERMS];
    for (j, v) in k.iter_mut().enumerate() {
        *v = Normal::new(0.0, kappa_sd(j + 1)).unwrap().sample(rng);
    }
    k
}

/// Clean sample of size `n`. `noise_sd` scales the response error; 1 in the
/// standard design.
pub fn generate_clean_with(n: usize, seed: u64, noise_sd: f64) -> Result<SimDataset> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, found: n });
    }
    let grid = sim_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut curves = vec![DMatrix::zeros(n, GRID_POINTS); NUM_PREDICTORS];
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let mut value = 0.0;
        for (m, c) in curves.iter_mut().enumerate() {
            let kappa = draw_kappa(&mut rng);
            for (j, v) in curve_values(&kappa, &grid, false).into_iter().enumerate() {
                c[(i, j)] = v;
            }
            value += response_term(m, &kappa, false);
        }
        let e: f64 = noise.sample(&mut rng);
        y[i] = value + noise_sd * e;
    }
    Ok(SimDataset {
        beta_true: (0..NUM_PREDICTORS)
            .map(|m| DVector::from_iterator(GRID_POINTS, grid.iter().map(|&t| beta_true(m, t))))
            .collect(),
        grids: vec![grid; NUM_PREDICTORS],
        curves,
        y,
        contamination_mask: vec![false; n],
        level: 0.0,
        seed,
    })
}

pub fn generate_clean(n: usize, seed: u64) -> Result<SimDataset> {
    generate_clean_with(n, seed, 1.0)
}

/// Replaces `round(level·n)` randomly chosen rows by curves from the
/// contaminated expansion with response noise of standard deviation 10.
pub fn contaminate(clean: &SimDataset, level: f64, seed: u64) -> Result<SimDataset> {
    contaminate_with(clean, level, seed, CONTAMINATED_NOISE_VARIANCE)
}

/// [`contaminate`] with a chosen variance for the contaminated response error.
pub fn contaminate_with(clean: &SimDataset, level: f64, seed: u64, noise_variance: f64) -> Result<SimDataset> {
    if !(noise_variance >= 0.0 && noise_variance.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid noise variance {noise_variance}")));
    }
    if !(level > 0.0 && level < 0.5) {
        return Err(Error::OutOfDomain {
            value: level,
            lower: 0.0,
            upper: 0.5,
        });
    }
    let n = clean.len();
    let count = (level * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = sample(&mut rng, n, count).into_vec();
    rows.sort_unstable();
    let noise = Normal::new(0.0, noise_variance.sqrt()).unwrap();
    let mut out = clean.clone();
    for &i in &rows {
        let mut value = 0.0;
        for m in 0..NUM_PREDICTORS {
            let kappa = draw_kappa(&mut rng);
            let values = curve_values(&kappa, &out.grids[m], true);
            for (j, v) in values.into_iter().enumerate() {
                out.curves[m][(i, j)] = v;
            }
            value += response_term(m, &kappa, true);
        }
        out.y[i] = value + noise.sample(&mut rng);
        out.contamination_mask[i] = true;
    }
    out.level = level;
    Ok(out)
}

/// Deterministic child seed for stream `stream` of `master` (splitmix64).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master.wrapping_add(stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub methods: Vec<Method>,
    pub contamination_levels: Vec<f64>,
    pub replications: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// B-spline basis size per predictor.
    pub num_basis: usize,
    pub h_max: usize,
    pub cv_folds: usize,
    pub trim_alpha: f64,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
    /// Variance of the response error on contaminated rows.
    pub contaminated_noise_variance: f64,
    /// Worker threads for replications; `None` uses all cores.
    pub workers: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Fpls, Method::Rfpls, Method::Fpc],
            contamination_levels: vec![0.0, 0.01, 0.05, 0.10],
            replications: 100,
            n_train: 200,
            n_test: 200,
            num_basis: 20,
            h_max: 10,
            cv_folds: 5,
            trim_alpha: 0.1,
            seed: 2024,
            output_path: None,
            contaminated_noise_variance: CONTAMINATED_NOISE_VARIANCE,
            workers: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.contamination_levels.is_empty() {
            return bad("contamination_levels must not be empty");
        }
        if let Some(l) = self.contamination_levels.iter().find(|l| !(0.0..0.5).contains(*l)) {
            return bad(&format!("contamination level {l} outside [0, 0.5)"));
        }
        for (name, v) in [
            ("replications", self.replications),
            ("n_train", self.n_train),
            ("n_test", self.n_test),
            ("num_basis", self.num_basis),
            ("h_max", self.h_max),
        ] {
            if v == 0 {
                return bad(&format!("{name} must be positive"));
            }
        }
        if self.workers == Some(0) {
            return bad("workers must be positive");
        }
        if self.cv_folds < 2 {
            return bad("cv_folds must be at least 2");
        }
        if self.n_train < 2 * self.cv_folds {
            return bad("n_train must be at least twice cv_folds");
        }
        if self.num_basis < 4 {
            return bad("num_basis must be at least 4 for cubic splines");
        }
        if !(self.contaminated_noise_variance >= 0.0 && self.contaminated_noise_variance.is_finite()) {
            return bad("contaminated_noise_variance must be finite and nonnegative");
        }
        if !(0.0..0.5).contains(&self.trim_alpha) {
            return bad("trim_alpha outside [0, 0.5)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TrimmedMspe,
    TrimmedR2,
    Risee,
    Components,
}

impl Metric {
    pub fn as_str(&self) -> &'static str {
        match self {
            Metric::TrimmedMspe => "trimmed_mspe",
            Metric::TrimmedR2 => "trimmed_r2",
            Metric::Risee => "risee",
            Metric::Components => "components",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub replication: usize,
    pub method: Method,
    pub level: f64,
    pub metric: Metric,
    /// `response`, `beta1`..`beta3` or `h`.
    pub target: String,
    /// `None` when the fit failed.
    pub value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub replication: usize,
    pub method: Method,
    pub level: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentResults {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub level: f64,
    pub target: String,
    /// Median RISEE per method, in the order of the config's methods.
    pub medians: Vec<(Method, f64)>,
}

pub fn median_of(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

impl ExperimentResults {
    pub fn values(&self, method: Method, level: f64, metric: Metric, target: &str) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.level == level && r.metric == metric && r.target == target)
            .filter_map(|r| r.value)
            .collect()
    }

    pub fn median(&self, method: Method, level: f64, metric: Metric, target: &str) -> f64 {
        median_of(self.values(method, level, metric, target))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("replication,method,level,metric,target,value\n");
        for r in &self.rows {
            let value = r.value.map_or_else(|| "NA".to_string(), |v| v.to_string());
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.replication,
                r.method,
                r.level,
                r.metric.as_str(),
                r.target,
                value
            )
            .unwrap();
        }
        out
    }

    /// Median RISEE per level and coefficient function.
    pub fn summary(&self, config: &ExperimentConfig) -> Vec<SummaryRow> {
        let mut rows = Vec::new();
        for &level in &config.contamination_levels {
            for m in 0..NUM_PREDICTORS {
                let target = format!("beta{}", m + 1);
                let medians = config
                    .methods
                    .iter()
                    .map(|&method| (method, self.median(method, level, Metric::Risee, &target)))
                    .collect();
                rows.push(SummaryRow { level, target, medians });
            }
        }
        rows
    }

    pub fn summary_csv(&self, config: &ExperimentConfig) -> String {
        let mut out = String::from("level,target");
        for m in &config.methods {
            write!(out, ",{}", m.as_str().to_uppercase()).unwrap();
        }
        out.push('\n');
        for row in self.summary(config) {
            write!(out, "{},{}", row.level, row.target).unwrap();
            for (_, v) in &row.medians {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

struct Scored {
    rows: Vec<ResultRow>,
    failure: Option<CellFailure>,
}

fn evaluate_method(
    config: &ExperimentConfig,
    replication: usize,
    level: f64,
    method: Method,
    train: &SimDataset,
    test: &SimDataset,
    systems: &[BasisSystem],
    cv_seed: u64,
) -> Scored {
    let row = |metric, target: &str, value| ResultRow {
        replication,
        method,
        level,
        metric,
        target: target.to_string(),
        value,
    };
    let attempt = || -> Result<Vec<ResultRow>> {
        let design = build_design(&train.curves, &train.grids, systems)?;
        let cv = select_num_components(
            &design,
            &train.y,
            method,
            &CvOptions {
                max_components: config.h_max,
                folds: config.cv_folds,
                alpha: config.trim_alpha,
                seed: cv_seed,
            },
        )?;
        let fit = fit_method(method, &design, &train.y, cv.chosen_h)?;
        let pred = predict(&fit, &test.curves, &test.grids)?;
        let mut rows = vec![
            row(
                Metric::TrimmedMspe,
                "response",
                Some(trimmed_mspe(test.y.as_slice(), pred.as_slice(), config.trim_alpha)?),
            ),
            row(
                Metric::TrimmedR2,
                "response",
                Some(trimmed_r2(test.y.as_slice(), pred.as_slice(), config.trim_alpha)?),
            ),
        ];
        let betas = coefficient_functions(&fit, &train.grids)?;
        for (m, beta_hat) in betas.iter().enumerate() {
            let value = risee(&train.grids[m], train.beta_true[m].as_slice(), beta_hat.as_slice())?;
            rows.push(row(Metric::Risee, &format!("beta{}", m + 1), Some(value)));
        }
        rows.push(row(Metric::Components, "h", Some(cv.chosen_h as f64)));
        Ok(rows)
    };
    match attempt() {
        Ok(rows) => Scored { rows, failure: None },
        Err(e) => {
            let mut rows = vec![
                row(Metric::TrimmedMspe, "response", None),
                row(Metric::TrimmedR2, "response", None),
            ];
            for m in 0..NUM_PREDICTORS {
                rows.push(row(Metric::Risee, &format!("beta{}", m + 1), None));
            }
            rows.push(row(Metric::Components, "h", None));
            Scored {
                rows,
                failure: Some(CellFailure {
                    replication,
                    method,
                    level,
                    reason: e.to_string(),
                }),
            }
        }
    }
}

/// Training and test samples of one replication at one contamination level.
/// The test half is never contaminated.
pub fn replication_data(config: &ExperimentConfig, replication: usize, level_index: usize) -> Result<(SimDataset, SimDataset)> {
    let rep_seed = derive_seed(config.seed, replication as u64);
    let pool = generate_clean(config.n_train + config.n_test, derive_seed(rep_seed, 0))?;
    let train_rows: Vec<usize> = (0..config.n_train).collect();
    let test_rows: Vec<usize> = (config.n_train..config.n_train + config.n_test).collect();
    let mut train = pool.select_rows(&train_rows);
    let test = pool.select_rows(&test_rows);
    let level = config.contamination_levels[level_index];
    if level > 0.0 {
        train = contaminate_with(
            &train,
            level,
            derive_seed(rep_seed, 1 + level_index as u64),
            config.contaminated_noise_variance,
        )?;
    }
    Ok((train, test))
}

fn run_replication(config: &ExperimentConfig, replication: usize, systems: &[BasisSystem]) -> Vec<Scored> {
    let rep_seed = derive_seed(config.seed, replication as u64);
    let mut out = Vec::new();
    for (li, &level) in config.contamination_levels.iter().enumerate() {
        match replication_data(config, replication, li) {
            Ok((train, test)) => {
                let cv_seed = derive_seed(rep_seed, 1000 + li as u64);
                for &method in &config.methods {
                    out.push(evaluate_method(config, replication, level, method, &train, &test, systems, cv_seed));
                }
            }
            Err(e) => {
                for &method in &config.methods {
                    out.push(Scored {
                        rows: Vec::new(),
                        failure: Some(CellFailure {
                            replication,
                            method,
                            level,
                            reason: e.to_string(),
                        }),
                    });
                }
            }
        }
    }
    out
}

/// Runs every replication; results are ordered by replication, level and
/// method and do not depend on the number of workers.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResults> {
    config.validate()?;
    let systems = vec![BasisSystem::cubic((0.0, 1.0), config.num_basis)?; NUM_PREDICTORS];
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = config.workers {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let per_rep: Vec<Vec<Scored>> = pool.install(|| {
        (0..config.replications)
            .into_par_iter()
            .map(|rep| run_replication(config, rep, &systems))
            .collect()
    });
    let mut results = ExperimentResults::default();
    for scored in per_rep.into_iter().flatten() {
        results.rows.extend(scored.rows);
        results.failures.extend(scored.failure);
    }
    Ok(results)
}

/// Draws `n` values of `κ_j` with the generator's distribution.
pub fn sample_kappa(j: usize, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Normal::new(0.0, kappa_sd(j)).unwrap();
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}
