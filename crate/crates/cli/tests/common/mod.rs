#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn bmseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bmseg"))
        .args(args)
        .env_remove("BMSEG_OUT_ROOT")
        .output()
        .expect("spawn bmseg")
}

/// Runs `bmseg` and panics with its stderr unless it exits 0.
pub fn bmseg_ok(args: &[&str]) {
    let out = bmseg(args);
    assert!(
        out.status.success(),
        "bmseg {args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

/// Every file in `dir` except the run manifest, by name.
pub fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap())
        .filter(|e| e.file_type().unwrap().is_file())
        .map(|e| (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap()))
        .filter(|(n, _)| n != "run.json")
        .collect()
}

/// Names of files whose bytes differ, or that exist on one side only.
pub fn differing_files(a: &Path, b: &Path) -> Vec<String> {
    let (x, y) = (dir_contents(a), dir_contents(b));
    let mut names: Vec<String> = x.keys().chain(y.keys()).cloned().collect();
    names.sort();
    names.dedup();
    names.into_iter().filter(|n| x.get(n) != y.get(n)).collect()
}

/// Small dataset: `count` volumes of 4 B-scans, 64 rows, 32 columns.
pub fn phantoms(dir: &Path, suite: &str, count: usize, seed: u64) {
    bmseg_ok(&[
        "phantom", "--suite", suite, "--count", &count.to_string(), "--seed", &seed.to_string(),
        "--bscans", "4", "--height", "64", "--width", "32", "--out", s(dir),
    ]);
}
