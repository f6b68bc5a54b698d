use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use gvtcnn_core::gvtcnn::{build_model, save_weights};
use gvtcnn_core::plane::write_pgm;
use gvtcnn_core::synth::{synthetic_plane, synthetic_sequence};
use gvtcnn_core::{GvtcnnConfig, GvtcnnModel, Variant};

fn gvtcnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gvtcnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = gvtcnn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    gvtcnn(dir, args).status.code().expect("exit code")
}

fn write_corpus(dir: &Path, name: &str, count: usize, size: usize, seed: u64) {
    let d = dir.join(name);
    fs::create_dir_all(&d).unwrap();
    for i in 0..count {
        write_pgm(d.join(format!("img_{i:02}.pgm")), &synthetic_plane(size, size, seed + i as u64)).unwrap();
    }
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(str::to_string).collect()).collect()
}

fn untrained(dir: &Path, name: &str, variant: Variant, zero_heads: bool) {
    let mut m: GvtcnnModel = build_model(&GvtcnnConfig::new(variant, 37), 11).unwrap();
    if zero_heads {
        for head in &mut m.params_mut().heads {
            head.weights.data_mut().fill(0.0);
            head.bias.fill(0.0);
        }
    }
    save_weights(&m, dir.join(name)).unwrap();
}

#[test]
fn gen_data_reports_pairs_and_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    write_corpus(t.path(), "corpus", 1, 96, 1);
    let out = ok(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "corpus", "--out-dir", "a", "--threads", "1"]);
    assert!(out.starts_with("4 pairs"), "{out}");
    ok(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "corpus", "--out-dir", "b", "--threads", "1"]);
    let a = fs::read(t.path().join("a/dataset.gvtd")).unwrap();
    let b = fs::read(t.path().join("b/dataset.gvtd")).unwrap();
    assert_eq!(a, b);
    assert!(t.path().join("a/manifest.json").is_file());
}

#[test]
fn usage_and_data_errors_map_to_exit_codes() {
    let t = tempfile::tempdir().unwrap();
    write_corpus(t.path(), "corpus", 1, 64, 1);
    assert_eq!(code(t.path(), &["gen-data", "--variant", "h", "--corpus", "corpus"]), 2);
    assert_eq!(code(t.path(), &["gen-data", "--variant", "x", "--qp", "3", "--corpus", "corpus"]), 2);
    assert_eq!(code(t.path(), &["--help"]), 0);
    fs::create_dir_all(t.path().join("empty")).unwrap();
    assert_eq!(code(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "empty"]), 3);
    fs::create_dir_all(t.path().join("broken")).unwrap();
    fs::write(t.path().join("broken/x.pgm"), b"P5\n4 4\n255\nab").unwrap();
    assert_eq!(code(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "broken"]), 3);
    assert_eq!(code(t.path(), &["train", "--dataset", "missing.gvtd"]), 3);
}

#[test]
fn train_writes_one_loss_row_per_iteration() {
    let t = tempfile::tempdir().unwrap();
    write_corpus(t.path(), "corpus", 1, 96, 2);
    ok(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "corpus", "--out-dir", "ds"]);
    let out = ok(
        t.path(),
        &["train", "--dataset", "ds/dataset.gvtd", "--iters", "500", "--batch", "8", "--lr", "1e-3", "--out-dir", "tr"],
    );
    assert!(out.starts_with("500 iterations"), "{out}");
    let rows = csv_rows(&t.path().join("tr/loss.csv"));
    assert_eq!(rows.len(), 500);
    assert_eq!(rows[0][0], "1");
    assert_eq!(rows[499][0], "500");
    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(t.path().join("tr/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["lr_drop_iter"], 300);
    assert_eq!(manifest["upstream_inputs"].as_array().unwrap().len(), 1);
}

#[test]
fn zero_learning_rate_leaves_weights_unchanged() {
    let t = tempfile::tempdir().unwrap();
    write_corpus(t.path(), "corpus", 1, 96, 3);
    ok(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "corpus", "--out-dir", "ds"]);
    ok(t.path(), &["train", "--dataset", "ds/dataset.gvtd", "--iters", "3", "--batch", "4", "--lr", "0", "--save-initial", "--out-dir", "tr"]);
    let initial = fs::read(t.path().join("tr/initial.gvtw")).unwrap();
    let trained = fs::read(t.path().join("tr/weights.gvtw")).unwrap();
    assert_eq!(initial, trained);
}

#[test]
fn train_rejects_variant_mismatch() {
    let t = tempfile::tempdir().unwrap();
    write_corpus(t.path(), "corpus", 1, 96, 4);
    ok(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "corpus", "--out-dir", "ds"]);
    assert_eq!(code(t.path(), &["train", "--dataset", "ds/dataset.gvtd", "--variant", "q", "--iters", "2"]), 2);
}

#[test]
fn eval_zero_residual_model_equals_copy_and_is_repeatable() {
    let t = tempfile::tempdir().unwrap();
    write_corpus(t.path(), "held", 2, 64, 50);
    untrained(t.path(), "zero_h.gvtw", Variant::H, true);
    ok(t.path(), &["eval-interp", "--weights", "zero_h.gvtw", "--corpus", "held", "--seed", "9", "--out-dir", "e1"]);
    ok(t.path(), &["eval-interp", "--weights", "zero_h.gvtw", "--corpus", "held", "--seed", "9", "--out-dir", "e2"]);
    let rows = csv_rows(&t.path().join("e1/eval.csv"));
    assert_eq!(rows.len(), 4);
    for r in &rows {
        assert_eq!(r[4], r[6], "copy and gvtcnn differ: {r:?}");
        assert_eq!(r[10], "0");
    }
    assert_eq!(fs::read(t.path().join("e1/eval.csv")).unwrap(), fs::read(t.path().join("e2/eval.csv")).unwrap());
}

#[test]
fn eval_flags_training_overlap() {
    let t = tempfile::tempdir().unwrap();
    write_corpus(t.path(), "corpus", 1, 96, 5);
    ok(t.path(), &["gen-data", "--variant", "h", "--qp", "37", "--corpus", "corpus", "--out-dir", "ds"]);
    ok(t.path(), &["train", "--dataset", "ds/dataset.gvtd", "--iters", "2", "--batch", "2", "--out-dir", "tr"]);
    let out = gvtcnn(t.path(), &["eval-interp", "--weights", "tr/weights.gvtw", "--corpus", "corpus", "--out-dir", "ev"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("also appear in the training inputs"));
    let rows = csv_rows(&t.path().join("ev/eval.csv"));
    assert!(rows.iter().all(|r| r[10] == "1"));
}

fn write_sequence(dir: &Path, name: &str, frames: &[gvtcnn_core::Plane]) {
    let d = dir.join(name);
    fs::create_dir_all(&d).unwrap();
    for (i, f) in frames.iter().enumerate() {
        write_pgm(d.join(format!("frame_{i:02}.pgm")), f).unwrap();
    }
}

#[test]
fn simulate_static_input_and_mode_requirements() {
    let t = tempfile::tempdir().unwrap();
    let still = synthetic_plane(64, 48, 8);
    write_sequence(t.path(), "still", &[still.clone(), still]);
    ok(t.path(), &["simulate", "--frames", "still", "--mode", "dctif_only", "--qp", "4", "--out-dir", "s"]);
    let rows = csv_rows(&t.path().join("s/report.csv"));
    let psnr: f64 = rows[0][1].parse().unwrap();
    assert!(psnr >= 50.0, "static psnr {psnr}");
    assert_eq!(code(t.path(), &["simulate", "--frames", "still", "--mode", "per_block_best"]), 2);
    assert_eq!(code(t.path(), &["simulate", "--frames", "still", "--mode", "sideways"]), 2);
}

#[test]
fn per_block_best_costs_no_more_than_single_modes_plus_flags() {
    let t = tempfile::tempdir().unwrap();
    write_sequence(t.path(), "seq", &synthetic_sequence(64, 64, 4, (0.75, -0.5), 21));
    untrained(t.path(), "h.gvtw", Variant::H, false);
    untrained(t.path(), "q.gvtw", Variant::Q, false);
    let mut totals = Vec::new();
    for mode in ["dctif_only", "gvtcnn_only", "per_block_best"] {
        let args = [
            "simulate", "--frames", "seq", "--weights-h", "h.gvtw", "--weights-q", "q.gvtw", "--mode", mode, "--out-dir", mode,
        ];
        ok(t.path(), &args);
        let rows = csv_rows(&t.path().join(mode).join("report.csv"));
        let per_frame: Vec<(f64, f64)> = rows[..rows.len() - 1]
            .iter()
            .map(|r| (r[9].parse().unwrap(), r[10].parse().unwrap()))
            .collect();
        totals.push(per_frame);
    }
    let lambda = 4.0;
    for f in 0..totals[0].len() {
        let (d, g, b) = (totals[0][f], totals[1][f], totals[2][f]);
        assert!(b.0 <= d.0.min(g.0) + lambda * b.1, "frame {f}: {b:?} vs {d:?} {g:?}");
    }
}

#[test]
fn replay_reproduces_outputs() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth", "--count", "1", "--width", "128", "--height", "128", "--seed", "4", "--out-dir", "c"]);
    ok(t.path(), &["gen-data", "--variant", "q", "--qp", "32", "--corpus", "c", "--threads", "1", "--out-dir", "ds"]);
    ok(t.path(), &["train", "--dataset", "ds/dataset.gvtd", "--iters", "4", "--batch", "2", "--threads", "1", "--out-dir", "tr"]);
    for dir in ["c", "ds", "tr"] {
        let replayed = format!("{dir}_again");
        ok(t.path(), &["replay", "--manifest", &format!("{dir}/manifest.json"), "--out-dir", &replayed]);
        let m: serde_json::Value = serde_json::from_slice(&fs::read(t.path().join(dir).join("manifest.json")).unwrap()).unwrap();
        for o in m["outputs"].as_array().unwrap() {
            let name = o["path"].as_str().unwrap();
            assert_eq!(
                fs::read(t.path().join(dir).join(name)).unwrap(),
                fs::read(t.path().join(&replayed).join(name)).unwrap(),
                "{dir}/{name}"
            );
        }
    }
}
