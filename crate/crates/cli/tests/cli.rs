use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use rfpls_cli::commands::report_section;
use rfpls_cli::model::ModelFile;
use rfpls_cli::{run, Kind};
use tempfile::TempDir;

fn rfpls(args: &[&str]) -> Result<String, rfpls_cli::CliError> {
    let mut out = Vec::new();
    let mut full = vec!["rfpls"];
    full.extend_from_slice(args);
    run(full, &mut out)?;
    Ok(String::from_utf8(out).unwrap())
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn curves_arg(dir: &Path) -> String {
    (1..=3).map(|m| p(dir, &format!("x{m}.csv"))).collect::<Vec<_>>().join(",")
}

fn generate(dir: &Path, n: usize, level: f64, seed: u64) {
    rfpls(&[
        "generate",
        "--n",
        &n.to_string(),
        "--level",
        &level.to_string(),
        "--seed",
        &seed.to_string(),
        "--out-dir",
        dir.to_str().unwrap(),
    ])
    .unwrap();
}

/// Parses `id,y,fitted,weight` rows of the report.
fn observations(report: &str) -> Vec<(String, f64, f64, f64)> {
    report_section(report, "observations")
        .into_iter()
        .skip(1)
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].to_string(), f[1].parse().unwrap(), f[2].parse().unwrap(), f[3].parse().unwrap())
        })
        .collect()
}

fn predictions(csv: &str) -> Vec<(String, f64)> {
    csv.lines()
        .skip(1)
        .map(|l| {
            let (id, v) = l.split_once(',').unwrap();
            (id.to_string(), v.parse().unwrap())
        })
        .collect()
}

#[test]
fn fit_then_predict_reproduces_fitted_values() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    generate(d, 80, 0.0, 11);
    for method in ["fpls", "rfpls", "fpc"] {
        let model = p(d, &format!("{method}.json"));
        let report = p(d, &format!("{method}.txt"));
        rfpls(&[
            "fit", "--method", method, "--curves", &curves_arg(d), "--response", &p(d, "y.csv"),
            "--num-basis", "10", "--components", "3", "--out", &model, "--report", &report,
        ])
        .unwrap();
        let obs = observations(&fs::read_to_string(&report).unwrap());
        assert_eq!(obs.len(), 80);
        let out = p(d, "pred.csv");
        rfpls(&["predict", "--model", &model, "--curves", &curves_arg(d), "--out", &out]).unwrap();
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.starts_with("sample_id,prediction\n"));
        let pred = predictions(&text);
        for ((id, _, fitted, _), (pid, v)) in obs.iter().zip(&pred) {
            assert_eq!(id, pid);
            assert!((fitted - v).abs() < 1e-8, "{method}: {fitted} vs {v}");
        }
    }
}

#[test]
fn report_has_coefficient_samples() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    generate(d, 60, 0.0, 12);
    let out = rfpls(&[
        "fit", "--method", "fpls", "--curves", &curves_arg(d), "--response", &p(d, "y.csv"),
        "--num-basis", "8", "--max-components", "4", "--out", &p(d, "m.json"),
    ])
    .unwrap();
    let coefs = report_section(&out, "coefficient_functions");
    assert_eq!(coefs[0], "predictor,t,beta");
    assert_eq!(coefs.len(), 1 + 3 * 101);
    let cv = report_section(&out, "cross_validation");
    assert_eq!(cv.iter().filter(|l| l.starts_with(char::is_numeric)).count(), 4);
}

#[test]
fn model_round_trip_is_bitwise() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    generate(d, 60, 0.1, 13);
    let model = p(d, "m.json");
    rfpls(&[
        "fit", "--curves", &curves_arg(d), "--response", &p(d, "y.csv"), "--num-basis", "8",
        "--components", "2", "--out", &model, "--report", &p(d, "r.txt"),
    ])
    .unwrap();
    let loaded = ModelFile::load(Path::new(&model)).unwrap();
    let again = ModelFile::from_json(&loaded.to_json()).unwrap();
    assert_eq!(loaded, again);
    let fit = loaded.to_fit().unwrap();
    assert_eq!(ModelFile::from_fit(&fit, loaded.training_ids.clone()), loaded);

    // in-memory prediction through the library equals the CLI output bit for bit
    let tables: Vec<_> = (1..=3)
        .map(|m| rfpls_cli::io::read_curves(&d.join(format!("x{m}.csv"))).unwrap())
        .collect();
    let raw: Vec<_> = tables.iter().map(|t| t.values.clone()).collect();
    let grids: Vec<_> = tables.iter().map(|t| t.grid.clone()).collect();
    let direct = rfpls_core::sofr::predict(&fit, &raw, &grids).unwrap();
    let cli = predictions(&rfpls(&["predict", "--model", &model, "--curves", &curves_arg(d)]).unwrap());
    for (a, (_, b)) in direct.iter().zip(&cli) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn predict_rejects_wrong_predictor_count_and_version() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    generate(d, 40, 0.0, 14);
    let model = p(d, "m.json");
    rfpls(&[
        "fit", "--method", "fpls", "--curves", &curves_arg(d), "--response", &p(d, "y.csv"),
        "--num-basis", "6", "--components", "2", "--out", &model, "--report", &p(d, "r.txt"),
    ])
    .unwrap();
    let err = rfpls(&["predict", "--model", &model, "--curves", &p(d, "x1.csv")]).unwrap_err();
    assert_eq!(err.kind, Kind::Input);
    assert!(err.message.contains("expects 3 curve files"), "{}", err.message);

    let text = fs::read_to_string(&model).unwrap().replace("\"schema_version\": 1", "\"schema_version\": 99");
    let bad = p(d, "bad.json");
    fs::write(&bad, text).unwrap();
    let err = rfpls(&["predict", "--model", &bad, "--curves", &curves_arg(d)]).unwrap_err();
    assert!(err.message.contains("schema version"), "{}", err.message);
}

#[test]
fn malformed_rows_are_reported_with_line() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("x.csv"), "id,0,0.5,1\na,1,2,3\nb,1,oops,3\n").unwrap();
    fs::write(d.join("y.csv"), "id,y\na,1\nb,2\n").unwrap();
    let err = rfpls(&["fit", "--curves", &p(d, "x.csv"), "--response", &p(d, "y.csv"), "--out", &p(d, "m")])
        .unwrap_err();
    assert_eq!(err.kind, Kind::Input);
    assert!(err.message.contains("line 3") && err.message.contains("oops"), "{}", err.message);

    fs::write(d.join("x.csv"), "id,0,0.5,1\na,1,2,3\nb,1,3\n").unwrap();
    let err = rfpls(&["fit", "--curves", &p(d, "x.csv"), "--response", &p(d, "y.csv"), "--out", &p(d, "m")])
        .unwrap_err();
    assert!(err.message.contains("line 3"), "{}", err.message);

    fs::write(d.join("x.csv"), "id,0,1,0.5\na,1,2,3\n").unwrap();
    let err = rfpls(&["fit", "--curves", &p(d, "x.csv"), "--response", &p(d, "y.csv"), "--out", &p(d, "m")])
        .unwrap_err();
    assert!(err.message.contains("strictly increasing"), "{}", err.message);
}

#[test]
fn mismatched_ids_are_rejected() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    generate(d, 20, 0.0, 15);
    let y = fs::read_to_string(d.join("y.csv")).unwrap().replace("s7,", "s77,");
    fs::write(d.join("y.csv"), y).unwrap();
    let err = rfpls(&["fit", "--curves", &curves_arg(d), "--response", &p(d, "y.csv"), "--out", &p(d, "m")])
        .unwrap_err();
    assert!(err.message.contains("s77"), "{}", err.message);
}

fn rank3_files(dir: &Path) {
    // curves spanned by three fixed functions, response linear in their weights
    let grid: Vec<f64> = (0..41).map(|j| j as f64 / 40.0).collect();
    let mut header = String::from("id");
    for t in &grid {
        header.push_str(&format!(",{t}"));
    }
    let mut x = header.clone() + "\n";
    let mut y = String::from("id,y\n");
    for i in 0..60 {
        let a = ((i * 37 % 23) as f64 - 11.0) / 5.0;
        let b = ((i * 17 % 19) as f64 - 9.0) / 4.0;
        let c = ((i * 29 % 13) as f64 - 6.0) / 3.0;
        x.push_str(&format!("r{i}"));
        for t in &grid {
            let v = a * (std::f64::consts::PI * t).sin() + b * t * t + c * (1.0 - t).powi(3);
            x.push_str(&format!(",{v}"));
        }
        x.push('\n');
        y.push_str(&format!("r{i},{}\n", 2.0 * a - b + 0.5 * c + 1.0));
    }
    fs::write(dir.join("x.csv"), x).unwrap();
    fs::write(dir.join("y.csv"), y).unwrap();
}

#[test]
fn cv_grid_and_rank_three_choice() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    rank3_files(d);
    let out = rfpls(&[
        "cv", "--method", "fpls", "--curves", &p(d, "x.csv"), "--response", &p(d, "y.csv"),
        "--num-basis", "8", "--max-components", "6", "--folds", "5", "--out", &p(d, "cv.csv"),
    ])
    .unwrap();
    assert!(out.contains("chosen_h: 3"), "{out}");
    let csv = fs::read_to_string(d.join("cv.csv")).unwrap();
    let rows: Vec<(usize, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let (h, v) = l.split_once(',').unwrap();
            (h.parse().unwrap(), v.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 6);
    let min = rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    assert_eq!(rows[2].1, min);
}

#[test]
fn case_two_export_flags_contaminated_rows() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    generate(d, 200, 0.1, 21);
    let report = p(d, "r.txt");
    rfpls(&[
        "fit", "--method", "rfpls", "--curves", &curves_arg(d), "--response", &p(d, "y.csv"),
        "--out", &p(d, "m.json"), "--report", &report,
    ])
    .unwrap();
    let obs = observations(&fs::read_to_string(&report).unwrap());
    let mask: Vec<bool> = fs::read_to_string(d.join("mask.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.ends_with(",1"))
        .collect();
    let flagged: Vec<f64> = obs.iter().zip(&mask).filter(|(_, &m)| m).map(|(o, _)| o.3).collect();
    assert_eq!(flagged.len(), 20);
    let hit = flagged.iter().filter(|&&w| w < 0.5).count();
    assert!(hit as f64 >= 0.8 * 20.0, "{hit} of 20");
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("experiment.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn simulate_smoke_and_summary_layout() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "replications = 2\ncontamination_levels = [0.0, 0.05]\nn_train = 60\nn_test = 30\nnum_basis = 8\nh_max = 3\nseed = 5\n",
    );
    let out = p(d, "res.csv");
    rfpls(&["simulate", "--config", cfg.to_str().unwrap(), "--out", &out]).unwrap();
    let res = fs::read_to_string(&out).unwrap();
    assert!(res.starts_with("replication,method,level,metric,target,value\n"));
    // 2 replications × 2 levels × 3 methods × 6 metric rows
    assert_eq!(res.lines().count(), 1 + 72);
    let summary = fs::read_to_string(d.join("res_summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 6);
    for level in ["0", "0.05"] {
        assert_eq!(rows.iter().filter(|r| r.starts_with(&format!("{level},beta"))).count(), 3);
    }
}

#[test]
fn simulate_rejects_unknown_keys() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "replications = 2\nreplicates = 3\n");
    let err = rfpls(&["simulate", "--config", cfg.to_str().unwrap(), "--out", &p(dir.path(), "r.csv")]).unwrap_err();
    assert_eq!(err.kind, Kind::Config);
    assert!(err.message.contains("replicates"), "{}", err.message);

    let cfg = write_config(dir.path(), "trim_alpha = 0.7\n");
    let err = rfpls(&["simulate", "--config", cfg.to_str().unwrap(), "--out", &p(dir.path(), "r.csv")]).unwrap_err();
    assert_eq!(err.kind, Kind::Config);
}

#[test]
fn binary_exit_codes_and_single_line_errors() {
    let bin = env!("CARGO_BIN_EXE_rfpls");
    let dir = TempDir::new().unwrap();
    let d = dir.path();

    let ok = Command::new(bin).arg("--help").output().unwrap();
    assert_eq!(ok.status.code(), Some(0));

    let missing = Command::new(bin)
        .args(["fit", "--curves", &p(d, "none.csv"), "--response", &p(d, "y.csv"), "--out", &p(d, "m")])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(2));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("rfpls: error[input]:"));

    let usage = Command::new(bin).args(["fit", "--bogus"]).output().unwrap();
    assert_eq!(usage.status.code(), Some(4));

    // constant response: the robust scale is zero
    fs::write(d.join("x.csv"), "id,0,0.25,0.5,0.75,1\na,1,2,3,4,6\nb,2,1,0,1,2\nc,0,1,0,1,0\nd,3,3,1,0,1\ne,1,0,0,2,2\nf,2,2,2,1,0\n").unwrap();
    fs::write(d.join("y.csv"), "id,y\na,1\nb,1\nc,1\nd,1\ne,1\nf,1\n").unwrap();
    let numerical = Command::new(bin)
        .args([
            "fit", "--method", "rfpls", "--curves", &p(d, "x.csv"), "--response", &p(d, "y.csv"),
            "--num-basis", "4", "--components", "1", "--out", &p(d, "m"),
        ])
        .output()
        .unwrap();
    let err = String::from_utf8(numerical.stderr).unwrap();
    assert_eq!(numerical.status.code(), Some(3), "{err}");
    assert!(err.starts_with("rfpls: error[numerical]: fit:"), "{err}");
}
