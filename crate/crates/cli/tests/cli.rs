use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mscan::{DetectionReport, Field};
use mscan_cli::commands::read_power_csv;
use mscan_cli::grid::{to_csv_grid, write_grid, Dtype};

fn mscan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mscan")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn planted(n: usize) -> Field {
    let mut v = vec![0.0; n * n];
    for i in 4..9 {
        for j in 6..11 {
            v[i * n + j] = 2.5;
        }
    }
    Field::new(2, n, v).unwrap()
}

fn write_both(dir: &Path, f: &Field) -> (PathBuf, PathBuf) {
    let csv = dir.join("g.csv");
    let bin = dir.join("g.grd");
    std::fs::write(&csv, to_csv_grid(f).unwrap()).unwrap();
    write_grid(&bin, f, Dtype::F64).unwrap();
    (csv, bin)
}

#[test]
fn exit_status_two_on_detection() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = write_both(dir.path(), &planted(16));
    let out = mscan(&["scan", s(&csv), "--reps", "200", "--exit-status"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let quiet = dir.path().join("zero.csv");
    std::fs::write(&quiet, to_csv_grid(&Field::zeros(2, 16)).unwrap()).unwrap();
    assert_eq!(mscan(&["scan", s(&quiet), "--reps", "200", "--exit-status"]).status.code(), Some(0));
    // without the flag a detection still exits 0
    assert_eq!(mscan(&["scan", s(&csv), "--reps", "200"]).status.code(), Some(0));
}

#[test]
fn csv_and_binary_grids_give_the_same_report() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, bin) = write_both(dir.path(), &planted(16));
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert!(mscan(&["scan", s(&csv), "--reps", "200", "--out", s(&a)]).status.success());
    assert!(mscan(&["scan", s(&bin), "--reps", "200", "--out", s(&b)]).status.success());
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn local_maxima_is_a_subset_of_all() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = write_both(dir.path(), &planted(16));
    let all = dir.path().join("all.json");
    let max = dir.path().join("max.json");
    assert!(mscan(&["scan", s(&csv), "--reps", "200", "--out", s(&all)]).status.success());
    assert!(mscan(&["scan", s(&csv), "--reps", "200", "--mode", "local-maxima", "--out", s(&max)]).status.success());
    let all = DetectionReport::from_json(&std::fs::read_to_string(all).unwrap()).unwrap();
    let max = DetectionReport::from_json(&std::fs::read_to_string(max).unwrap()).unwrap();
    assert!(!max.regions.is_empty());
    assert!(max.regions.len() <= all.regions.len());
    assert!(max.regions.iter().all(|r| all.regions.contains(r)));
}

#[test]
fn calibrated_table_is_reused_and_mismatch_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, _) = write_both(dir.path(), &planted(16));
    let table = dir.path().join("t.qt");
    let out = mscan(&["calibrate", "--n", "16", "--d", "2", "--reps", "200", "--seed", "3", "--out", s(&table)]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("q(0.1)="));
    assert!(mscan(&["scan", s(&csv), "--table", s(&table)]).status.success());
    let bad = mscan(&["scan", s(&csv), "--table", s(&table), "--rn", "9"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("r_n"));
    let forced = mscan(&["scan", s(&csv), "--table", s(&table), "--rn", "9", "--allow-mismatch"]);
    assert!(forced.status.success());
    assert!(String::from_utf8_lossy(&forced.stdout).contains("warning"));
}

#[test]
fn text_tables_load_like_binary_ones() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("t.qt");
    let txt = dir.path().join("t.txt");
    for (p, fmt) in [(&bin, "bin"), (&txt, "csv")] {
        assert!(mscan(&["calibrate", "--n", "32", "--d", "1", "--reps", "150", "--format", fmt, "--out", s(p)]).status.success());
    }
    let a = mscan::calibrate::load_table(&bin).unwrap();
    let b = mscan::calibrate::load_table(&txt).unwrap();
    assert_eq!(a.sample(), b.sample());
    assert_eq!(a.meta, b.meta);
}

#[test]
fn empty_scale_set_is_an_error() {
    let out = mscan(&["calibrate", "--n", "8", "--d", "2", "--rn", "100", "--reps", "100", "--out", "/dev/null"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn power_csv_round_trips() {
    let out = mscan(&["power", "--n", "16", "--blocks", "4", "--theta1", "0,1.5", "--v", "1", "--alpha", "0.1", "--reps", "40", "--cal-reps", "100"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_power_csv(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(rows.len(), 2);
    for row in &rows {
        let p: f64 = row["power"].parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(row["replicates"], "40");
    }
    let null: f64 = rows[0]["power"].parse().unwrap();
    let alt: f64 = rows[1]["power"].parse().unwrap();
    assert!(alt > null);
}

#[test]
fn simulate_null_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("null");
    let out = mscan(&["simulate-null", "--d", "1", "--n", "32,64", "--reps", "10", "--budget", "100000", "--out", s(&out_dir)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ks = std::fs::read_to_string(out_dir.join("ks.csv")).unwrap();
    assert_eq!(ks.lines().count(), 2);
    let t = mscan::calibrate::load_table(out_dir.join("M_n32_r2.qt")).unwrap();
    assert_eq!(t.len(), 10);
}

#[test]
fn malformed_grid_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "1,2\n3\n").unwrap();
    let out = mscan(&["scan", s(&p), "--reps", "100"]);
    assert_eq!(out.status.code(), Some(1));
}
