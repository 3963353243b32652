use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn tps(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tps")).args(args).output().expect("run tps")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_owned()
}

#[test]
fn simulate_writes_sweep_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let res = tps(&["simulate", "--config", "C-C-C", "--steps", "40", "--out", &out_arg(&out)]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(csv.starts_with("T_s,T1,T2,"));
    assert!(csv.lines().count() >= 42);
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command = simulate"));
    assert!(manifest.contains("output.sweep.csv = sha256:"));
    // nothing else lands in the output directory
    let mut names: Vec<_> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names, ["manifest.txt", "sweep.csv"]);
}

#[test]
fn config_file_and_overrides_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("finger.cfg");
    fs::write(&file, "config = C-D-C\nh_a = 2.0\n").unwrap();
    let out = tmp.path().join("run");
    let res = tps(&[
        "simulate",
        "--config-file",
        file.to_str().unwrap(),
        "--set",
        "w_a=3",
        "--steps",
        "20",
        "--out",
        &out_arg(&out),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest = fs::read_to_string(out.join("manifest.txt")).unwrap();
    assert!(manifest.contains("param.config = C-D-C"));
    assert!(manifest.contains("param.h_a = 2.0"));
    assert!(manifest.contains("param.w_a = 3"));
    assert!(manifest.contains("input."));
}

#[test]
fn usage_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = out_arg(&tmp.path().join("run"));
    assert_eq!(tps(&["bogus"]).status.code(), Some(1));
    assert_eq!(tps(&["simulate", "--out", &out]).status.code(), Some(1));
    assert_eq!(tps(&["simulate", "--config", "C-Q-C", "--out", &out]).status.code(), Some(1));
    assert_eq!(
        tps(&["simulate", "--config", "C-C-C", "--set", "k1=-1", "--out", &out]).status.code(),
        Some(1)
    );
    assert_eq!(tps(&["figure", "nope", "--out", &out]).status.code(), Some(1));
    assert_eq!(tps(&["--help"]).status.code(), Some(0));
    assert_eq!(tps(&["--version"]).status.code(), Some(0));
}

#[test]
fn table2_fds_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let res = tps(&["table2", "--filter", "fds", "--out", &out_arg(&out)]);
    assert_eq!(res.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("table2.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn figure_writes_one_csv_per_curve() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f");
    let res = tps(&["figure", "a-width", "--steps", "40", "--out", &out_arg(&out)]);
    assert_eq!(res.status.code(), Some(0));
    let dir = out.join("a-width");
    let plot = fs::read_to_string(dir.join("plot.txt")).unwrap();
    let curves: Vec<_> = plot.lines().filter(|l| l.starts_with("curve = ")).collect();
    assert_eq!(curves.len(), 6);
    let csvs = fs::read_dir(&dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "csv"))
        .count();
    assert_eq!(csvs, 6);
}

#[test]
fn study_grid_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("s");
    let res = tps(&[
        "study", "--tendon", "fdp", "--a2", "CD", "--a4", "C", "--tap", "CP", "--steps", "60", "--out",
        &out_arg(&out),
    ]);
    assert_eq!(res.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn compare_fem_coarse() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("c");
    let res = tps(&[
        "compare-fem", "--config", "C-C-C", "--tmax", "1", "--steps", "2", "--elements", "4", "--out",
        &out_arg(&out),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("compare_fem.csv")).unwrap();
    assert!(csv.starts_with("sum_deg,T_prbm,T_fem,rel_gap"));
    assert_eq!(csv.lines().count(), 3);
    assert!(String::from_utf8_lossy(&res.stdout).contains("max relative tension gap"));
}

#[test]
fn unsupported_fem_configuration_is_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let res = tps(&["compare-fem", "--config", "C~D-C~D-C", "--out", &out_arg(&tmp.path().join("c"))]);
    assert_eq!(res.status.code(), Some(1));
}
