use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rfpls_core::basis::build_design;
use rfpls_core::eval::{select_num_components, CvOptions};
use rfpls_core::simgen::{contaminate_with, generate_clean, run_experiment, ExperimentConfig, CONTAMINATED_NOISE_VARIANCE};
use rfpls_core::sofr::{coefficient_functions, fit_method, predict};
use rfpls_core::{BasisSystem, CvReport, FittedSofr, Method, MultiFunctionalDesign};

use crate::error::{CliError, CliResult};
use crate::io::{check_ids, read_curves, read_response, write_curves, write_response, write_text, CurveTable};
use crate::model::ModelFile;

pub const REPORT_GRID_POINTS: usize = 101;

fn say(out: &mut dyn Write, line: &str) -> CliResult<()> {
    writeln!(out, "{line}").map_err(|e| CliError::input(format!("stdout: {e}")))
}

/// Training data shared by `fit` and `cv`.
pub struct TrainingData {
    pub tables: Vec<CurveTable>,
    pub y: DVector<f64>,
    pub design: MultiFunctionalDesign,
}

pub fn load_training(curves: &[PathBuf], response: &Path, num_basis: usize) -> CliResult<TrainingData> {
    if curves.is_empty() {
        return Err(CliError::config("at least one curve file is required"));
    }
    if num_basis < 4 {
        return Err(CliError::config(format!("--num-basis {num_basis} is below 4, the cubic minimum")));
    }
    let tables = curves.iter().map(|p| read_curves(p)).collect::<CliResult<Vec<_>>>()?;
    let (ids, y) = read_response(response)?;
    check_ids(&tables, Some(&ids))?;
    let systems = tables
        .iter()
        .map(|t| BasisSystem::cubic(t.domain(), num_basis))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::stage("basis", e))?;
    let raw: Vec<DMatrix<f64>> = tables.iter().map(|t| t.values.clone()).collect();
    let grids: Vec<Vec<f64>> = tables.iter().map(|t| t.grid.clone()).collect();
    let design = build_design(&raw, &grids, &systems).map_err(|e| CliError::stage("smoothing", e))?;
    Ok(TrainingData { tables, y, design })
}

pub struct CvSettings {
    pub max_components: usize,
    pub folds: usize,
    pub trim_alpha: f64,
    pub seed: u64,
}

impl CvSettings {
    fn validate(&self) -> CliResult<()> {
        if self.max_components == 0 {
            return Err(CliError::config("--max-components must be at least 1"));
        }
        if self.folds < 2 {
            return Err(CliError::config("--folds must be at least 2"));
        }
        if !(0.0..0.5).contains(&self.trim_alpha) {
            return Err(CliError::config(format!("--trim-alpha {} outside [0, 0.5)", self.trim_alpha)));
        }
        Ok(())
    }

    fn options(&self) -> CvOptions {
        CvOptions {
            max_components: self.max_components,
            folds: self.folds,
            alpha: self.trim_alpha,
            seed: self.seed,
        }
    }
}

pub fn cross_validate(data: &TrainingData, method: Method, settings: &CvSettings) -> CliResult<CvReport> {
    settings.validate()?;
    select_num_components(&data.design, &data.y, method, &settings.options())
        .map_err(|e| CliError::stage("cross-validation", e))
}

pub fn cv_csv(report: &CvReport) -> String {
    let mut s = String::from("h,trimmed_mspe\n");
    for (h, v) in report.grid.iter().zip(&report.scores) {
        if v.is_finite() {
            writeln!(s, "{h},{v}").unwrap();
        } else {
            writeln!(s, "{h},NA").unwrap();
        }
    }
    s
}

pub struct FitRequest<'a> {
    pub method: Method,
    pub curves: &'a [PathBuf],
    pub response: &'a Path,
    pub num_basis: usize,
    /// Fixed number of components; cross-validated when `None`.
    pub components: Option<usize>,
    pub cv: CvSettings,
    pub out: &'a Path,
    pub report: Option<&'a Path>,
}

pub fn cmd_fit(req: &FitRequest, out: &mut dyn Write) -> CliResult<()> {
    let data = load_training(req.curves, req.response, req.num_basis)?;
    let (h, cv) = match req.components {
        Some(0) => return Err(CliError::config("--components must be at least 1")),
        Some(h) => (h, None),
        None => {
            let report = cross_validate(&data, req.method, &req.cv)?;
            (report.chosen_h, Some(report))
        }
    };
    let fit = fit_method(req.method, &data.design, &data.y, h).map_err(|e| CliError::stage("fit", e))?;
    let ids = data.tables[0].sample_ids.clone();
    write_text(req.out, &ModelFile::from_fit(&fit, ids).to_json())?;
    let report = fit_report(&fit, &data, cv.as_ref())?;
    match req.report {
        Some(path) => write_text(path, &report)?,
        None => out.write_all(report.as_bytes()).map_err(|e| CliError::input(format!("stdout: {e}")))?,
    }
    say(out, &format!("wrote model to {}", req.out.display()))
}

pub fn fit_report(fit: &FittedSofr, data: &TrainingData, cv: Option<&CvReport>) -> CliResult<String> {
    let fitted = fit.predict_design(&data.design).map_err(|e| CliError::stage("fitted values", e))?;
    let weights: Vec<f64> = match &fit.robust {
        Some(r) => r.weights.iter().copied().collect(),
        None => vec![1.0; data.y.len()],
    };
    let mut s = String::new();
    writeln!(s, "method: {}", fit.method).unwrap();
    writeln!(s, "components: {}", fit.components).unwrap();
    writeln!(s, "observations: {}", data.y.len()).unwrap();
    writeln!(s, "predictors: {}", fit.num_predictors()).unwrap();
    writeln!(s, "intercept: {}", fit.intercept).unwrap();
    if let Some(r) = &fit.robust {
        writeln!(s, "tuning_c: {}", r.tuning_c).unwrap();
        writeln!(s, "irpls_iterations: {}", r.irpls_iterations).unwrap();
        writeln!(s, "irpls_converged: {}", r.irpls_converged).unwrap();
        writeln!(s, "m_iterations: {}", r.m_iterations).unwrap();
        writeln!(s, "m_converged: {}", r.m_converged).unwrap();
        writeln!(s, "residual_scale: {}", r.scale).unwrap();
        let low = weights.iter().filter(|&&w| w < 0.5).count();
        writeln!(s, "weights_below_0.5: {low}").unwrap();
    }
    if let Some(cv) = cv {
        writeln!(s, "\n[cross_validation]").unwrap();
        writeln!(s, "folds: {}", cv.folds).unwrap();
        writeln!(s, "trim_alpha: {}", cv.alpha).unwrap();
        writeln!(s, "skipped_cells: {}", cv.skipped.len()).unwrap();
        s.push_str(&cv_csv(cv));
    }

    writeln!(s, "\n[coefficient_functions]").unwrap();
    writeln!(s, "predictor,t,beta").unwrap();
    let grids: Vec<Vec<f64>> = fit
        .systems
        .iter()
        .map(|sys| {
            let (a, b) = (sys.lower(), sys.upper());
            (0..REPORT_GRID_POINTS)
                .map(|j| a + (b - a) * j as f64 / (REPORT_GRID_POINTS - 1) as f64)
                .collect()
        })
        .collect();
    let curves = coefficient_functions(fit, &grids).map_err(|e| CliError::stage("coefficient functions", e))?;
    for (m, (grid, curve)) in grids.iter().zip(&curves).enumerate() {
        for (t, v) in grid.iter().zip(curve.iter()) {
            writeln!(s, "{},{t},{v}", m + 1).unwrap();
        }
    }

    writeln!(s, "\n[observations]").unwrap();
    writeln!(s, "id,y,fitted,weight").unwrap();
    for (i, id) in data.tables[0].sample_ids.iter().enumerate() {
        writeln!(s, "{id},{},{},{}", data.y[i], fitted[i], weights[i]).unwrap();
    }
    Ok(s)
}

/// Rows of one section (`[name]`) of a fit report, header included.
pub fn report_section<'a>(report: &'a str, name: &str) -> Vec<&'a str> {
    let tag = format!("[{name}]");
    report
        .lines()
        .skip_while(|l| *l != tag)
        .skip(1)
        .take_while(|l| !l.is_empty())
        .collect()
}

pub fn cmd_predict(model: &Path, curves: &[PathBuf], dest: Option<&Path>, out: &mut dyn Write) -> CliResult<()> {
    let model = ModelFile::load(model)?;
    let fit = model.to_fit()?;
    if curves.len() != fit.num_predictors() {
        return Err(CliError::input(format!(
            "model expects {} curve files, got {}",
            fit.num_predictors(),
            curves.len()
        )));
    }
    let tables = curves.iter().map(|p| read_curves(p)).collect::<CliResult<Vec<_>>>()?;
    check_ids(&tables, None)?;
    for (m, (t, sys)) in tables.iter().zip(&fit.systems).enumerate() {
        let (lo, hi) = t.domain();
        let slack = 1e-9 * (sys.upper() - sys.lower());
        if lo < sys.lower() - slack || hi > sys.upper() + slack {
            return Err(CliError::input(format!(
                "curve file {} spans [{lo}, {hi}] outside the model domain [{}, {}]",
                m + 1,
                sys.lower(),
                sys.upper()
            )));
        }
    }
    let raw: Vec<DMatrix<f64>> = tables.iter().map(|t| t.values.clone()).collect();
    let grids: Vec<Vec<f64>> = tables.iter().map(|t| t.grid.clone()).collect();
    let pred = predict(&fit, &raw, &grids).map_err(|e| CliError::stage("prediction", e))?;
    let mut s = String::from("sample_id,prediction\n");
    for (id, v) in tables[0].sample_ids.iter().zip(pred.iter()) {
        writeln!(s, "{id},{v}").unwrap();
    }
    match dest {
        Some(path) => {
            write_text(path, &s)?;
            say(out, &format!("wrote {} predictions to {}", pred.len(), path.display()))
        }
        None => out.write_all(s.as_bytes()).map_err(|e| CliError::input(format!("stdout: {e}"))),
    }
}

pub fn cmd_cv(
    method: Method,
    curves: &[PathBuf],
    response: &Path,
    num_basis: usize,
    settings: &CvSettings,
    dest: Option<&Path>,
    out: &mut dyn Write,
) -> CliResult<CvReport> {
    let data = load_training(curves, response, num_basis)?;
    let report = cross_validate(&data, method, settings)?;
    let csv = cv_csv(&report);
    match dest {
        Some(path) => write_text(path, &csv)?,
        None => out.write_all(csv.as_bytes()).map_err(|e| CliError::input(format!("stdout: {e}")))?,
    }
    say(out, &format!("chosen_h: {}", report.chosen_h))?;
    Ok(report)
}

pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let config: ExperimentConfig =
        toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {}", path.display(), e.message())))?;
    config
        .validate()
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(config)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}{suffix}"))
}

pub fn cmd_simulate(
    config_path: &Path,
    dest: Option<&Path>,
    summary: Option<&Path>,
    workers: Option<usize>,
    out: &mut dyn Write,
) -> CliResult<()> {
    let mut config = load_config(config_path)?;
    if let Some(w) = workers {
        config.workers = Some(w);
    }
    let results_path = dest
        .map(Path::to_path_buf)
        .or_else(|| config.output_path.clone())
        .ok_or_else(|| CliError::config("no output path: pass --out or set output_path"))?;
    let summary_path = summary
        .map(Path::to_path_buf)
        .unwrap_or_else(|| sibling(&results_path, "_summary.csv"));
    let results = run_experiment(&config).map_err(|e| CliError::config(e.to_string()))?;
    write_text(&results_path, &results.to_csv())?;
    write_text(&summary_path, &results.summary_csv(&config))?;
    say(out, &format!("wrote {} rows to {}", results.rows.len(), results_path.display()))?;
    say(out, &format!("wrote median RISEE summary to {}", summary_path.display()))?;
    for f in &results.failures {
        say(
            out,
            &format!(
                "failed: replication {} method {} level {}: {}",
                f.replication, f.method, f.level, f.reason
            ),
        )?;
    }
    Ok(())
}

/// Writes a simulated sample as `x1.csv .. x3.csv`, `y.csv` and `mask.csv`.
pub fn cmd_generate(
    n: usize,
    level: f64,
    seed: u64,
    noise_variance: Option<f64>,
    dir: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let clean = generate_clean(n, seed).map_err(|e| CliError::config(e.to_string()))?;
    let data = if level > 0.0 {
        contaminate_with(
            &clean,
            level,
            seed.wrapping_add(1),
            noise_variance.unwrap_or(CONTAMINATED_NOISE_VARIANCE),
        )
        .map_err(|e| CliError::config(format!("--level: {e}")))?
    } else if level == 0.0 {
        clean
    } else {
        return Err(CliError::config(format!("--level {level} is negative")));
    };
    let ids: Vec<String> = (1..=n).map(|i| format!("s{i}")).collect();
    for (m, curves) in data.curves.iter().enumerate() {
        let table = CurveTable::new(ids.clone(), data.grids[m].clone(), curves.clone())?;
        write_curves(&dir.join(format!("x{}.csv", m + 1)), &table)?;
    }
    write_response(&dir.join("y.csv"), &ids, &data.y)?;
    let mut mask = String::from("id,contaminated\n");
    for (id, &b) in ids.iter().zip(&data.contamination_mask) {
        writeln!(mask, "{id},{}", u8::from(b)).unwrap();
    }
    write_text(&dir.join("mask.csv"), &mask)?;
    say(
        out,
        &format!("wrote {n} samples ({} contaminated) to {}", data.num_contaminated(), dir.display()),
    )
}
