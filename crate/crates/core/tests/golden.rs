use std::path::Path;

use cvqkd::sweep::{run, write_csv, RunConfig, COLUMNS};

fn read_rows(bytes: &[u8]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_reader(bytes);
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader
        .records()
        .map(|r| r.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn cells_match(expected: &str, actual: &str) -> bool {
    if expected == actual {
        return true;
    }
    match (expected.parse::<f64>(), actual.parse::<f64>()) {
        (Ok(e), Ok(a)) => (e - a).abs() <= 1e-9 * e.abs().max(1.0),
        _ => false,
    }
}

#[test]
fn collective_distance_sweep_matches_golden_file() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data");
    let config = RunConfig::load(&dir.join("collective_distance.toml")).unwrap();
    let mut buf = Vec::new();
    write_csv(&run(&config).unwrap(), &mut buf).unwrap();

    let (exp_header, exp_rows) =
        read_rows(&std::fs::read(dir.join("collective_distance.csv")).unwrap());
    let (header, rows) = read_rows(&buf);
    assert_eq!(header, COLUMNS);
    assert_eq!(header, exp_header);
    assert_eq!(rows.len(), exp_rows.len());
    for (i, (exp, act)) in exp_rows.iter().zip(&rows).enumerate() {
        for (j, (e, a)) in exp.iter().zip(act).enumerate() {
            assert!(
                cells_match(e, a),
                "row {i} column {}: expected {e}, got {a}",
                COLUMNS[j]
            );
        }
    }
}
