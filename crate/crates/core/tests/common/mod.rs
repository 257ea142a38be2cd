#![allow(dead_code)]

use std::path::PathBuf;

/// Compares `values` with the recorded snapshot `tests/golden/<name>.json`.
///
/// Set `BMSEG_BLESS=1` to (re)record. A missing snapshot is an error so a
/// fresh checkout never passes vacuously.
pub fn check_golden(name: &str, values: &[f64], rel_tol: f64) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{name}.json"));
    let encoded: Vec<Option<f64>> = values.iter().map(|v| v.is_finite().then_some(*v)).collect();
    if std::env::var_os("BMSEG_BLESS").is_some() {
        std::fs::write(&path, serde_json::to_string(&encoded).unwrap()).unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("missing snapshot {} ({e}); record with BMSEG_BLESS=1", path.display()));
    let recorded: Vec<Option<f64>> = serde_json::from_str(&text).unwrap();
    assert_eq!(recorded.len(), encoded.len(), "{name}: length changed");
    for (i, (r, v)) in recorded.iter().zip(&encoded).enumerate() {
        match (r, v) {
            (Some(r), Some(v)) => {
                let tol = rel_tol * r.abs().max(1.0);
                assert!((r - v).abs() <= tol, "{name}[{i}]: recorded {r}, got {v}");
            }
            (None, None) => {}
            _ => panic!("{name}[{i}]: validity changed ({r:?} vs {v:?})"),
        }
    }
}
