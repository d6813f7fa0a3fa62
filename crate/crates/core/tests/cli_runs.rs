use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use proptest::prelude::*;
use tempfile::TempDir;
use toml::Table;

use worldsheet::cli::*;
use worldsheet::optimizer::fit_loglog_slope;
use worldsheet::Error;

const SPHERE: &str = r#"
schema = 1
kind = "geometry_check"
[grid]
extents = [[0.0, 1.0], [1.2, 1.95], [0.0, 0.8]]
counts = [9, 9, 9]
[fields]
embedding = "sphere_product"
radius = 1.3
[geometry]
levels = 3
order_band = [1.7, 2.3]
"#;

const FLAT: &str = r#"
schema = 1
kind = "geometry_check"
[grid]
extents = [[0.0, 1.0], [0.0, 1.0]]
counts = [9, 9]
[fields]
embedding = "flat"
"#;

const MINIMIZE: &str = r#"
schema = 1
kind = "minimize"
[grid]
extents = [[0.0, 4.0], [0.0, 1.0]]
counts = [9, 9]
[fields]
embedding = "perturbed_flat"
seed = 3
[optimizer]
free_r = false
check_slopes = true
"#;

const ENERGY: &str = r#"
schema = 1
kind = "energy_eval"
[grid]
extents = [[0.0, 1.0], [0.0, 2.0]]
counts = [9, 9]
[fields]
embedding = "cylinder"
radius = 1.3
[constants]
mass = 1.0
[energy]
k = 10.0
"#;

const CAUSAL: &str = r#"
schema = 1
kind = "causal"
[causal]
events = "events.txt"
radius = 1.5
queries = ["chronological_future", "causal_past", "future_boundary", "future_dependence", "is_achronal", "is_cauchy_surface", "intercept_check", "null_boundary_check"]
set = [12, 13, 14, 15, 16, 17]
path = [0, 7, 14]
samples = 50
seed = 9
"#;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

/// 5 x 6 unit grid, time in the first column.
fn events(dir: &Path) {
    let mut s = String::from("# t x\n");
    for t in 0..5 {
        for x in 0..6 {
            s.push_str(&format!("{t} {x}\n"));
        }
    }
    write(dir, "events.txt", &s);
}

fn args(v: &[&str]) -> Vec<String> {
    std::iter::once("worldsheet").chain(v.iter().copied()).map(String::from).collect()
}

#[test]
fn convergence_table_examples() {
    let rows = [
        StudyRow {
            parameter: 0.1,
            residuals: vec![1e-2],
        },
        StudyRow {
            parameter: 0.05,
            residuals: vec![2.5e-3],
        },
    ];
    let t = emit_convergence_table(&["e"], &rows).unwrap();
    assert!((t.observed[1][0].unwrap() - 2.0).abs() < 1e-12);
    assert!(t.observed[0][0].is_none());

    let err = emit_convergence_table(&["e"], &rows[..1]).unwrap_err();
    assert!(err.to_string().contains("need ≥2 rows"));
    assert!(matches!(
        emit_convergence_table(&["a", "b"], &rows),
        Err(Error::LengthMismatch { .. })
    ));

    let ks = [10.0, 100.0, 1000.0, 10000.0];
    let res = [3e-2, 2.9e-3, 3.2e-4, 2.95e-5];
    let rows: Vec<StudyRow> = ks
        .iter()
        .zip(res)
        .map(|(k, r)| StudyRow {
            parameter: *k,
            residuals: vec![r],
        })
        .collect();
    let t = emit_convergence_table(&["norm"], &rows).unwrap();
    assert!((t.fit[0].unwrap() - fit_loglog_slope(&ks, &res).unwrap()).abs() < 1e-9);
    let csv = t.to_csv();
    assert!(csv.starts_with("parameter,norm,observed_order_norm\n"));
    assert!(csv.lines().last().unwrap().starts_with("fit,,"));
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn overrides_win_and_are_typed() {
    let mut t: Table = "[optimizer]\nmax_iters = 10\n".parse().unwrap();
    apply_overrides(
        &mut t,
        &[
            "optimizer.max_iters=20".into(),
            "optimizer.k_schedule=[1.0, 2.0]".into(),
            "fields.embedding=flat".into(),
        ],
    )
    .unwrap();
    assert_eq!(t["optimizer"]["max_iters"].as_integer(), Some(20));
    assert_eq!(t["optimizer"]["k_schedule"].as_array().unwrap().len(), 2);
    assert_eq!(t["fields"]["embedding"].as_str(), Some("flat"));
    assert!(apply_overrides(&mut t, &["novalue".into()]).is_err());
    assert!(apply_overrides(&mut t, &["optimizer..x=1".into()]).is_err());
    assert!(apply_overrides(&mut t, &["optimizer.max_iters.deep=1".into()]).is_err());
}

#[test]
fn scenario_validation_errors() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "flat.toml", FLAT);
    let err = Scenario::load(&p, &["grid.bogus=1".into(), "surprise=2".into()]).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("grid.bogus") && msg.contains("surprise"), "{msg}");
    assert_eq!(exit_code(&err), 1);

    for (ov, needle) in [
        ("schema=2", "schema"),
        ("kind=\"sculpt\"", "sculpt"),
        ("fields.embedding=\"torus\"", "torus"),
        ("grid.counts=[9]", "counts"),
        ("geometry.levels=0", "levels"),
        ("fields.embedding=\"cylinder\"", "radius"),
    ] {
        let e = Scenario::load(&p, &[ov.into()]).unwrap_err();
        assert!(e.to_string().contains(needle), "{ov}: {e}");
    }
    let sc = Scenario::load(&p, &[]).unwrap();
    assert_eq!(sc.kind, Kind::GeometryCheck);

    let m = write(dir.path(), "m.toml", MINIMIZE);
    let e = Scenario::load(&m, &["optimizer.k_schedule=[100.0, 10.0]".into()]).unwrap_err();
    assert!(e.to_string().contains("increasing"));
}

#[test]
fn flat_geometry_check_has_zero_gauss_residual() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "flat.toml", FLAT);
    let out = dir.path().join("out");
    assert_eq!(main_with_args(args(&["run", p.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("gauss_residual = 0.0000000000000000e0"), "{summary}");
    assert!(fs::read_to_string(out.join("geometry.csv")).unwrap().starts_with("level,"));
}

#[test]
fn sphere_refinement_order_is_checked() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "s.toml", SPHERE);
    let out = dir.path().join("out");
    let o = run(&p, &out, &[]).unwrap();
    assert!(o.passed);
    let table = fs::read_to_string(out.join("convergence.csv")).unwrap();
    assert_eq!(table.lines().count(), 5);
    // An impossible band turns the same run into a validation failure.
    let code = main_with_args(args(&[
        "run",
        p.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "geometry.order_band=[3.0, 4.0]",
    ]));
    assert_eq!(code, 2);
}

#[test]
fn minimize_with_slope_check() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "m.toml", MINIMIZE);
    let out = dir.path().join("out");
    let o = run(&p, &out, &[]).unwrap();
    assert!(o.passed, "{}", o.summary);
    let rec = fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(rec.lines().count(), 5);
    assert!(o.summary.contains("slopes norm=-"));
    assert!(o.summary.contains("notice: m = 1"));
    let table = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let fit: Vec<f64> = table.lines().last().unwrap().split(',').skip(4).map(|v| v.parse().unwrap()).collect();
    assert!(fit.iter().all(|s| (-1.3..=-0.7).contains(s)), "{fit:?}");

    let code = main_with_args(args(&[
        "run",
        p.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--set",
        "optimizer.slope_band=[0.0, 1.0]",
        "--set",
        "optimizer.k_schedule=[10.0, 100.0]",
    ]));
    assert_eq!(code, 2);
}

#[test]
fn energy_eval_writes_breakdown() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "e.toml", ENERGY);
    let out = dir.path().join("out");
    let o = run(&p, &out, &[]).unwrap();
    assert!(o.passed && o.summary.contains("full_action = "));
    let csv = fs::read_to_string(out.join("energy.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), worldsheet::energy::EnergyBreakdown::CSV_HEADER);
    let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 10.0);
    assert!((row[8] - (row[7] + 5.0 * (row[4] + row[5] + row[6]))).abs() < 1e-14);
}

#[test]
fn causal_queries_report_sorted_lists() {
    let dir = TempDir::new().unwrap();
    events(dir.path());
    let p = write(dir.path(), "c.toml", CAUSAL);
    let out = dir.path().join("out");
    let o = run(&p, &out, &[]).unwrap();
    assert!(o.passed);
    let q = fs::read_to_string(out.join("queries.txt")).unwrap();
    let line = |name: &str| q.lines().find(|l| l.starts_with(&format!("{name}:"))).unwrap().to_string();
    assert_eq!(line("chronological_future"), "chronological_future: 18 19 20 21 22 23 24 25 26 27 28 29");
    assert_eq!(line("future_boundary"), "future_boundary: 12 13 14 15 16 17");
    assert_eq!(line("is_cauchy_surface"), "is_cauchy_surface: true");
    assert_eq!(line("intercept_check"), "intercept_check: paths=50 exhaustive=false violations=0");
    assert!(line("null_boundary_check").ends_with("null=true"));
    assert!(q.lines().last().unwrap().starts_with("summary events=30 edges="));
}

#[test]
fn missing_event_file_is_an_io_error_naming_it() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "c.toml", CAUSAL);
    let err = Scenario::load(&p, &[]).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("events.txt"));
    assert_eq!(exit_code(&err), 1);
    assert_eq!(main_with_args(args(&["check", p.to_str().unwrap()])), 1);
}

#[test]
fn check_and_usage() {
    let dir = TempDir::new().unwrap();
    let p = write(dir.path(), "flat.toml", FLAT);
    assert_eq!(main_with_args(args(&["check", p.to_str().unwrap()])), 0);
    assert_eq!(main_with_args(args(&["run", p.to_str().unwrap()])), 1);
    assert_eq!(main_with_args(args(&["frobnicate"])), 1);
    assert!(!dir.path().join("out").exists());
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn reports_are_byte_identical_across_runs_and_thread_counts() {
    let dir = TempDir::new().unwrap();
    events(dir.path());
    let scenarios = [
        write(dir.path(), "s.toml", SPHERE),
        write(dir.path(), "e.toml", ENERGY),
        write(dir.path(), "c.toml", CAUSAL),
        write(dir.path(), "m.toml", MINIMIZE),
    ];
    for (i, sc) in scenarios.iter().enumerate() {
        let mut snaps = Vec::new();
        for threads in ["1", "4", "4"] {
            let out = dir.path().join(format!("out{i}_{}", snaps.len()));
            let status = Command::new(env!("CARGO_BIN_EXE_worldsheet"))
                .env("WORLDSHEET_THREADS", threads)
                .args(["run", sc.to_str().unwrap(), "--out", out.to_str().unwrap()])
                .args(if i == 3 { vec!["--set", "optimizer.k_schedule=[10.0, 100.0]"] } else { vec![] })
                .status()
                .unwrap();
            assert!(status.success());
            snaps.push(snapshot(&out));
        }
        assert!(!snaps[0].is_empty());
        assert!(snaps.windows(2).all(|w| w[0] == w[1]), "{}", sc.display());
    }
}

proptest! {
    #[test]
    fn numbers_round_trip(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        prop_assert_eq!(num(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
    }
}
