use std::path::Path;
use std::process::{Command, Output};

use octoscan::io::{tensor_load, tensor_save};
use octoscan::Tensor;

fn octoscan(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_octoscan"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run octoscan")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn index_writes_tables_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let o = octoscan(&["index", "--height", "3", "--width", "4", "--out", "idx"], tmp.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let idx = tensor_load(tmp.path().join("idx/idx.oten")).unwrap();
    let mask = tensor_load(tmp.path().join("idx/mask.oten")).unwrap();
    assert_eq!(idx.shape()[0], 8);
    assert_eq!(idx.shape(), mask.shape());
    // every direction covers each pixel exactly once
    let cover: f64 = mask.data().iter().sum();
    assert_eq!(cover, (8 * 12) as f64);
    assert!(tmp.path().join("idx/summary.txt").exists());
}

#[test]
fn bad_direction_count_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = octoscan(&["index", "--height", "3", "--width", "4", "--directions", "6", "--out", "x"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = octoscan(&["bench", "--nope"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn oracle_check_passes_and_fails_on_tolerance() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = octoscan(&["oracle-check", "--trials", "4", "--len", "12"], tmp.path());
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).contains("PASS"));
    let bad = octoscan(&["oracle-check", "--trials", "4", "--len", "12", "--tolerance", "0"], tmp.path());
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).contains("FAIL"));
}

#[test]
fn operator_learned_keeps_line_support() {
    let tmp = tempfile::tempdir().unwrap();
    let o = octoscan(
        &["operator", "--size", "4x5", "--weights", "learned", "--channels", "2", "--out", "m.oten"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("2/2 channels"));
    let m = tensor_load(tmp.path().join("m.oten")).unwrap();
    assert_eq!(m.shape(), &[2, 20, 20]);
}

#[test]
fn train_then_forward_and_erf() {
    let tmp = tempfile::tempdir().unwrap();
    let o = octoscan(
        &[
            "toy-train", "--epochs", "2", "--size", "8", "--train-count", "16", "--eval-count", "8",
            "--directions", "4", "--out", "run",
        ],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let log = std::fs::read_to_string(tmp.path().join("run/log.csv")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(tmp.path().join("run/checkpoints").is_dir());

    let x = Tensor::new(vec![2, 1, 8, 8], (0..128).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    tensor_save(&x, tmp.path().join("x.oten")).unwrap();
    let o = octoscan(
        &["forward", "--model", "run/model", "--input", "x.oten", "--out", "y.oten", "--logits"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let y = tensor_load(tmp.path().join("y.oten")).unwrap();
    assert_eq!(y.shape(), &[2, 4]);

    let o = octoscan(
        &["erf", "--model", "run/model", "--size", "8x8", "--epoch-tag", "final", "--out", "erf.pgm"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(tmp.path().join("erf.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("final,"));
    let o = octoscan(&["isotropy", "--erf", "erf.oten"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o).lines().last().unwrap().to_string();
    let score: f64 = line.trim_start_matches("isotropy ").parse().unwrap();
    assert!((0.0..=1.0).contains(&score));
}

#[test]
fn forward_from_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("cfg.txt"), "channels = 2\nstages = 1x4\nclasses = 4\n").unwrap();
    let x = Tensor::new(vec![2, 5, 6], vec![0.5; 60]).unwrap();
    tensor_save(&x, tmp.path().join("x.oten")).unwrap();
    let o = octoscan(
        &["forward", "--model", "cfg.txt", "--input", "x.oten", "--out", "f.oten", "--save-model", "saved"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let f = tensor_load(tmp.path().join("f.oten")).unwrap();
    assert_eq!(f.shape(), &[1, 4, 5, 6]);
    // the saved model reproduces the output
    let o = octoscan(&["forward", "--model", "saved", "--input", "x.oten", "--out", "g.oten"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let g = tensor_load(tmp.path().join("g.oten")).unwrap();
    assert_eq!(f.data(), g.data());
}

#[test]
fn forward_rejects_channel_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("cfg.txt"), "channels = 3\nstages = 1x4\n").unwrap();
    let x = Tensor::new(vec![1, 1, 4, 4], vec![0.0; 16]).unwrap();
    tensor_save(&x, tmp.path().join("x.oten")).unwrap();
    let o = octoscan(&["forward", "--model", "cfg.txt", "--input", "x.oten", "--out", "y.oten"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn repro_fig6_and_bench_write_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let o = octoscan(&["repro-fig6", "--size", "4x4", "--out", "fig"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("aggregate support equals"));
    for name in ["row_pair", "col_pair", "diag_dr_pair", "diag_dl_pair", "aggregate"] {
        assert!(tmp.path().join(format!("fig/{name}.pgm")).exists());
    }
    let o = octoscan(&["bench", "--sizes", "4,8", "--reps", "1", "--out", "b.csv"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(tmp.path().join("b.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("hw,median_seconds"));
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn outputs_are_deterministic_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let dir = tmp.path().join(run);
        std::fs::create_dir(&dir).unwrap();
        let cmds: [&[&str]; 3] = [
            &["operator", "--size", "3x4", "--weights", "learned", "--seed", "7", "--out", "m.oten"],
            &["erf", "--size", "7x7", "--seed", "7", "--out", "erf.pgm"],
            &["toy-train", "--epochs", "1", "--size", "6", "--train-count", "8", "--eval-count", "4", "--seed", "7", "--out", "t"],
        ];
        for args in cmds {
            let o = octoscan(args, &dir);
            assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        }
    }
    let read = |run: &str, f: &str| std::fs::read(tmp.path().join(run).join(f)).unwrap();
    for f in ["m.oten", "erf.oten", "erf.csv", "erf.pgm", "t/model/head.w.oten"] {
        assert_eq!(read("a", f), read("b", f), "{f} differs between runs");
    }
    // the log matches except for the wall-clock column
    let strip = |run: &str| -> Vec<String> {
        String::from_utf8(read(run, "t/log.csv"))
            .unwrap()
            .lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(strip("a"), strip("b"));
}
