//! Regenerates the reference-row study table and compares it with the
//! checked-in CSV. Run with `TPS_BLESS=1` to rewrite the file.

use std::path::PathBuf;

use tps_core::study::{study_csv, table2_rows, RowFilter, StudySettings, STUDY_CSV_HEADER};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/table2.csv")
}

/// Per-column absolute tolerances; text columns must match exactly.
fn tolerance(column: &str) -> Option<f64> {
    match column {
        "rof5_deg" | "rof8_deg" => Some(0.15),
        "bw_mm" | "ps_mpa" => Some(0.015),
        "h_a" | "h_c" | "w_a" | "w_c" => Some(1e-9),
        _ => None,
    }
}

#[test]
fn table2_matches_golden_file() {
    let rows = table2_rows(RowFilter::All, &StudySettings::default()).unwrap();
    let fresh = study_csv(&rows);
    if std::env::var_os("TPS_BLESS").is_some() {
        std::fs::write(golden_path(), &fresh).unwrap();
    }
    let golden = std::fs::read_to_string(golden_path()).expect("golden file present");
    let columns: Vec<&str> = STUDY_CSV_HEADER.split(',').collect();
    let (g_lines, f_lines): (Vec<&str>, Vec<&str>) = (golden.lines().collect(), fresh.lines().collect());
    assert_eq!(g_lines.len(), f_lines.len());
    assert_eq!(g_lines[0], STUDY_CSV_HEADER);
    for (g, f) in g_lines.iter().zip(&f_lines).skip(1) {
        let (gv, fv): (Vec<&str>, Vec<&str>) = (g.split(',').collect(), f.split(',').collect());
        assert_eq!(gv.len(), columns.len());
        for ((col, a), b) in columns.iter().zip(&gv).zip(&fv) {
            match tolerance(col) {
                Some(tol) => {
                    let (x, y): (f64, f64) = (a.parse().unwrap(), b.parse().unwrap());
                    assert!((x - y).abs() <= tol, "{col}: {a} vs {b} in row {g}");
                }
                None => assert_eq!(a, b, "{col} in row {g}"),
            }
        }
    }
}

#[test]
fn rows_are_sorted_by_reference_flexion() {
    let rows = table2_rows(RowFilter::Fdp, &StudySettings::default()).unwrap();
    assert!(rows.windows(2).all(|w| w[0].rof_high_deg >= w[1].rof_high_deg));
    let fds = table2_rows(RowFilter::Fds, &StudySettings::default()).unwrap();
    assert_eq!(fds.len(), 4);
    assert!(fds.iter().all(|r| r.name.ends_with('-')));
}
