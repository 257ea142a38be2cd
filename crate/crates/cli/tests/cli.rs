mod common;

use std::path::Path;

use bmseg::geometry::VolumeGeometry;
use bmseg::surface::SurfaceGrid;
use bmseg::tensor_io::{load_surface, load_tensor, save_surface, save_tensor, Tensor};
use common::{bmseg, bmseg_ok, differing_files, phantoms, read_json, s};
use tempfile::tempdir;

fn train(data: &Path, out: &Path, extra: &[&str]) {
    let mut args = vec!["train", "--data", s(data), "--batch-size", "4", "--out", s(out)];
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs", "2"]);
    }
    args.extend_from_slice(extra);
    bmseg_ok(&args);
}

fn loss_rows(dir: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(dir.join("loss_log.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "epoch,lr,total,l1,l2,l3");
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn missing_required_argument_is_a_usage_error() {
    assert_eq!(bmseg(&["phantom"]).status.code(), Some(2));
    assert_eq!(bmseg(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one() {
    let tmp = tempdir().unwrap();
    let out = bmseg(&["infer", "--checkpoint", s(&tmp.path().join("nope")), "--data", s(tmp.path()), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    let bad_tau = bmseg(&["postprocess", "--input", s(tmp.path()), "--tau", "0", "--out", s(&tmp.path().join("p"))]);
    assert_eq!(bad_tau.status.code(), Some(1));
}

#[test]
fn phantom_output_is_deterministic() {
    let tmp = tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    phantoms(&a, "mixed", 2, 3);
    phantoms(&b, "mixed", 2, 3);
    phantoms(&c, "mixed", 2, 4);
    assert!(differing_files(&a, &b).is_empty());
    assert!(!differing_files(&a, &c).is_empty());
    let index = read_json(&a.join("dataset.json"));
    assert_eq!(index["entries"].as_array().unwrap().len(), 2);
    let run = read_json(&a.join("run.json"));
    assert_eq!(run["command"], "phantom");
    assert_eq!(run["seeds"][0], 3);
}

#[test]
fn gamma_zero_logs_no_curvature_term() {
    let tmp = tempdir().unwrap();
    let (data, ck) = (tmp.path().join("d"), tmp.path().join("ck"));
    phantoms(&data, "clean", 2, 1);
    train(&data, &ck, &["--gamma", "0", "--epochs", "1"]);
    let rows = loss_rows(&ck);
    assert_eq!(rows.len(), 1);
    assert!(rows.iter().all(|r| r[5] == 0.0));
    assert!(rows.iter().all(|r| r[2].is_finite() && r[2] > 0.0));
    assert!(ck.join("checkpoint.json").exists());
}

#[test]
fn infer_writes_valid_surfaces_and_optional_probmaps() {
    let tmp = tempdir().unwrap();
    let (data, ck, pred, maps) = (tmp.path().join("d"), tmp.path().join("ck"), tmp.path().join("p"), tmp.path().join("m"));
    phantoms(&data, "clean", 1, 2);
    train(&data, &ck, &[]);
    bmseg_ok(&["infer", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&pred)]);
    let surf = load_surface(&pred.join("vol_000.surface")).unwrap();
    assert_eq!(surf.n_valid(), 4 * 32);
    assert!(!pred.join("vol_000.probmap.tns").exists());
    let sigma = load_tensor(&pred.join("vol_000.sigma")).unwrap();
    assert_eq!(sigma.shape, vec![4, 32]);
    assert!(sigma.to_f64().iter().all(|v| *v > 0.0));

    bmseg_ok(&["infer", "--checkpoint", s(&ck), "--data", s(&data), "--save-probmaps", "--out", s(&maps)]);
    let pm = load_tensor(&maps.join("vol_000.probmap")).unwrap();
    assert_eq!(pm.shape, vec![4, 64, 32]);
    let v = pm.to_f64();
    for col in 0..32 {
        let total: f64 = (0..64).map(|y| v[y * 32 + col]).sum();
        assert!((total - 1.0).abs() < 1e-4);
    }
}

#[test]
fn postprocess_replaces_exactly_the_uncertain_positions() {
    let tmp = tempdir().unwrap();
    let (data, ck, pred) = (tmp.path().join("d"), tmp.path().join("ck"), tmp.path().join("p"));
    phantoms(&data, "noisy", 1, 5);
    train(&data, &ck, &["--epochs", "1"]);
    bmseg_ok(&["infer", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&pred)]);
    let sigma = load_tensor(&pred.join("vol_000.sigma")).unwrap().to_f64();
    let before = load_surface(&pred.join("vol_000.surface")).unwrap();

    let mut sorted = sigma.clone();
    sorted.sort_by(f64::total_cmp);
    let tau = sorted[sorted.len() * 3 / 4];
    let out = tmp.path().join("pp");
    bmseg_ok(&["postprocess", "--input", s(&pred), "--tau", &tau.to_string(), "--out", s(&out)]);
    let expected = sigma.iter().filter(|v| **v > tau).count();
    assert_eq!(read_json(&out.join("postprocess.json"))["replaced"], expected);
    let after = load_surface(&out.join("vol_000.surface")).unwrap();
    for (i, (a, b)) in after.to_flat().iter().zip(before.to_flat()).enumerate() {
        if sigma[i] <= tau {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    let same = tmp.path().join("same");
    bmseg_ok(&["postprocess", "--input", s(&pred), "--tau", "1e9", "--out", s(&same)]);
    assert_eq!(read_json(&same.join("postprocess.json"))["replaced"], 0);
    assert_eq!(load_surface(&same.join("vol_000.surface")).unwrap(), before);
}

#[test]
fn three_control_points_without_rigidity_reproduce_a_plane() {
    let tmp = tempdir().unwrap();
    let dir = tmp.path().join("plane");
    std::fs::create_dir(&dir).unwrap();
    let (nb, w) = (4, 16);
    let g = VolumeGeometry::new(nb, 64, w);
    // dyadic plane so the stored f32 values are exact
    let plane = |b: usize, x: usize| 30.0 + 0.5 * b as f64 + 0.25 * x as f64;
    let values: Vec<f64> = (0..nb).flat_map(|b| (0..w).map(move |x| plane(b, x))).collect();
    let mut sigma = vec![0.5; nb * w];
    let mut holed = values.clone();
    for i in [9, 22, 40, 63] {
        sigma[i] = 3.0;
    }
    for b in 0..nb {
        holed[b * w + 5] = f64::NAN;
    }
    save_surface(&dir.join("v.surface"), &SurfaceGrid::from_flat(g, &holed).unwrap()).unwrap();
    save_tensor(&dir.join("v.sigma"), &Tensor::from_f64(vec![nb, w], &sigma).unwrap()).unwrap();
    let index = serde_json::json!({"entries": [{"name": "v", "surface": "v.surface", "sigma": "v.sigma", "probmap": null, "report": null}]});
    std::fs::write(dir.join("surfaces.json"), index.to_string()).unwrap();

    let out = tmp.path().join("o");
    bmseg_ok(&["postprocess", "--input", s(&dir), "--n-control", "3", "--rigidity", "0", "--out", s(&out)]);
    let rep = read_json(&out.join("v.postproc.json"));
    assert_eq!(rep["replaced"], 8);
    let fixed = load_surface(&out.join("v.surface")).unwrap().to_flat();
    for (i, (a, e)) in fixed.iter().zip(&values).enumerate() {
        assert!((a - e).abs() < 1e-6, "index {i}: {a} vs {e}");
    }
}

#[test]
fn eval_of_truth_against_itself_is_zero() {
    let tmp = tempdir().unwrap();
    let (data, out) = (tmp.path().join("d"), tmp.path().join("e"));
    phantoms(&data, "mixed", 2, 8);
    bmseg_ok(&["eval", "--pred", s(&data), "--truth", s(&data), "--out", s(&out)]);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["pooled"]["mae_px"], 0.0);
    assert_eq!(summary["pooled"]["n"], 2 * 4 * 32);
    assert!(summary["uncertainty"].is_null());
    assert!(out.join("histogram.dat").exists());
    assert!(!out.join("ascans.csv").exists());
}

#[test]
fn eval_with_uncertainty_writes_tables() {
    let tmp = tempdir().unwrap();
    let (data, ck, pred, out) = (tmp.path().join("d"), tmp.path().join("ck"), tmp.path().join("p"), tmp.path().join("e"));
    phantoms(&data, "shadowed", 2, 6);
    train(&data, &ck, &["--epochs", "1"]);
    bmseg_ok(&["infer", "--checkpoint", s(&ck), "--data", s(&data), "--out", s(&pred)]);
    bmseg_ok(&["eval", "--pred", s(&pred), "--truth", s(&data), "--permutations", "99", "--out", s(&out)]);
    for f in ["ascans.csv", "bscans.csv", "volumes.csv", "quintiles.csv", "calibration.dat", "plots.gp"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let ascans = std::fs::read_to_string(out.join("ascans.csv")).unwrap();
    assert_eq!(ascans.lines().count(), 1 + 2 * 4 * 32);
    let summary = read_json(&out.join("summary.json"));
    assert_eq!(summary["uncertainty"]["n_ascans"], 2 * 4 * 32);
}

#[test]
fn ablate_reports_three_variants() {
    let tmp = tempdir().unwrap();
    let (tr, te, out) = (tmp.path().join("tr"), tmp.path().join("te"), tmp.path().join("ab"));
    phantoms(&tr, "mixed", 2, 1);
    phantoms(&te, "mixed", 2, 2);
    bmseg_ok(&["ablate", "--train", s(&tr), "--test", s(&te), "--epochs", "1", "--out", s(&out)]);
    let csv = std::fs::read_to_string(out.join("ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let rep = read_json(&out.join("ablation.json"));
    assert_eq!(rep["results"].as_array().unwrap().len(), 3);
    assert_eq!(rep["comparisons"].as_array().unwrap().len(), 2);
}

#[test]
fn out_root_prefixes_relative_outputs() {
    let tmp = tempdir().unwrap();
    let st = std::process::Command::new(env!("CARGO_BIN_EXE_bmseg"))
        .args(["phantom", "--bscans", "2", "--width", "16", "--out", "rel"])
        .env("BMSEG_OUT_ROOT", tmp.path())
        .status()
        .unwrap();
    assert!(st.success());
    assert!(tmp.path().join("rel/dataset.json").exists());
}

#[test]
fn replay_reproduces_every_stage() {
    let tmp = tempdir().unwrap();
    let p = |n: &str| tmp.path().join(n);
    phantoms(&p("d"), "mixed", 2, 9);
    train(&p("d"), &p("ck"), &["--jobs", "2"]);
    bmseg_ok(&["infer", "--checkpoint", s(&p("ck")), "--data", s(&p("d")), "--out", s(&p("inf"))]);
    bmseg_ok(&["postprocess", "--input", s(&p("inf")), "--out", s(&p("pp"))]);
    bmseg_ok(&["eval", "--pred", s(&p("pp")), "--truth", s(&p("d")), "--permutations", "49", "--out", s(&p("ev"))]);
    for stage in ["d", "ck", "inf", "pp", "ev"] {
        let again = p(&format!("{stage}_again"));
        bmseg_ok(&["replay", "--manifest", s(&p(stage).join("run.json")), "--jobs", "4", "--out", s(&again)]);
        assert_eq!(differing_files(&p(stage), &again), Vec::<String>::new(), "stage {stage}");
    }
}

#[test]
fn loss_log_matches_golden() {
    let tmp = tempdir().unwrap();
    let (data, ck) = (tmp.path().join("d"), tmp.path().join("ck"));
    phantoms(&data, "mixed", 2, 21);
    train(&data, &ck, &["--epochs", "3", "--seed", "4"]);
    let got: Vec<f64> = loss_rows(&ck).into_iter().flatten().collect();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/loss_log_seed4.json");
    if std::env::var_os("BMSEG_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, serde_json::to_string_pretty(&got).unwrap()).unwrap();
    }
    let want: Vec<f64> = serde_json::from_slice(&std::fs::read(&path).expect("golden missing; record with BMSEG_BLESS=1")).unwrap();
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(&want) {
        assert!((g - w).abs() <= 1e-9 * w.abs().max(1.0), "{g} vs {w}");
    }
}
