use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn esgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_esgnn")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn gen(dir: &Path, scenes: &str, seed: &str, extra: &[&str]) -> Output {
    let mut args = vec!["gen-data", "--out", p(dir), "--scenes", scenes, "--seed", seed];
    args.extend_from_slice(extra);
    esgnn(&args)
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

struct Trained {
    _tmp: tempfile::TempDir,
    data: PathBuf,
    ckpt: PathBuf,
    history: PathBuf,
}

fn trained(mode: &str, epochs: &str, extra: &[&str]) -> Trained {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    assert_eq!(code(&gen(&data, "12", "3", &[])), 0);
    let ckpt = tmp.path().join("ckpt.json");
    let history = tmp.path().join("history.csv");
    let mut args = vec![
        "train", "--data", p(&data), "--epochs", epochs, "--mode", mode, "--compact", "--eval-every", "5",
        "--out", p(&ckpt), "--history", p(&history),
    ];
    args.extend_from_slice(extra);
    let o = esgnn(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    Trained { _tmp: tmp, data, ckpt, history }
}

#[test]
fn gen_data_is_deterministic_with_default_split() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert_eq!(code(&gen(&a, "20", "7", &[])), 0);
    assert_eq!(code(&gen(&b, "20", "7", &[])), 0);
    assert_eq!(read_dir_sorted(&a), read_dir_sorted(&b));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.join("manifest.json")).unwrap()).unwrap();
    let count = |k: &str| manifest[k].as_array().unwrap().len();
    assert_eq!((count("train"), count("val"), count("test")), (14, 3, 3));
}

#[test]
fn gen_data_flag_and_refusal_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("d");
    assert_eq!(code(&gen(&dir, "4", "0", &["--split", "0.5,0.5,0.5"])), 1);
    assert_eq!(code(&gen(&dir, "4", "0", &[])), 0);
    let o = gen(&dir, "4", "0", &[]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("--force"));
    assert_eq!(code(&gen(&dir, "4", "1", &["--force"])), 0);
    assert_eq!(code(&esgnn(&["gen-data"])), 1);
    assert_eq!(code(&esgnn(&["--help"])), 0);
}

#[test]
fn zero_epoch_training_writes_step_zero_history() {
    let t = trained("strict", "0", &[]);
    let csv = std::fs::read_to_string(&t.history).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "step,epoch,split,loss,node_recall,edge_recall");
    assert!(lines[1..].iter().all(|l| l.starts_with("0,0,")));
    let ck: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&t.ckpt).unwrap()).unwrap();
    assert_eq!(ck["schema"], "esgnn-ckpt/1");
    assert_eq!(ck["step"], 0);
    for key in ["preset", "params", "adam", "rng"] {
        assert!(!ck[key].is_null(), "{key}");
    }
}

#[test]
fn unknown_preset_lists_names() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    gen(&data, "4", "0", &[]);
    let o = esgnn(&[
        "train", "--data", p(&data), "--preset", "gcn", "--out", p(&tmp.path().join("c")), "--history",
        p(&tmp.path().join("h")),
    ]);
    assert_eq!(code(&o), 1);
    let err = stderr(&o);
    for name in ["sgfn", "esgnn1", "esgnn2", "esgnn1x", "esgnn2x"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn preset_equals_manual_layer_list() {
    let a = trained("strict", "1", &["--preset", "esgnn1"]);
    let b = trained("strict", "1", &["--layers", "FAN,EGCL"]);
    assert_eq!(std::fs::read(&a.history).unwrap(), std::fs::read(&b.history).unwrap());
}

#[test]
fn resume_matches_uninterrupted_training() {
    let full = trained("strict", "3", &[]);
    let part = trained("strict", "2", &[]);
    let resumed = part.ckpt.with_file_name("resumed.json");
    let o = esgnn(&[
        "train", "--data", p(&part.data), "--epochs", "3", "--resume", p(&part.ckpt), "--out", p(&resumed),
        "--history", p(&part.history),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let load = |path: &Path| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
    };
    let (x, y) = (load(&full.ckpt), load(&resumed));
    for key in ["params", "adam", "rng", "step"] {
        assert_eq!(x[key], y[key], "{key}");
    }
}

#[test]
fn eval_prints_a_lossless_report() {
    let t = trained("strict", "1", &[]);
    let json_path = t.ckpt.with_file_name("report.json");
    let csv_path = t.ckpt.with_file_name("report.csv");
    let o = esgnn(&[
        "eval", "--ckpt", p(&t.ckpt), "--data", p(&t.data), "--split", "test", "--json", p(&json_path), "--csv",
        p(&csv_path),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = std::fs::read_to_string(&json_path).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["split"], "test");
    let again = serde_json::to_string_pretty(&v).unwrap();
    assert_eq!(serde_json::from_str::<serde_json::Value>(&again).unwrap(), v);
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    assert!(csv.starts_with("step,epoch,split,loss,node_recall,edge_recall,"));
    assert_eq!(String::from_utf8(o.stdout).unwrap().trim(), text.trim());
}

#[test]
fn eval_compatibility_and_empty_errors() {
    let t = trained("strict", "0", &[]);
    let text = std::fs::read_to_string(&t.ckpt).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let first = v["params"].as_object().unwrap().keys().next().unwrap().clone();
    v["params"][&first]["shape"] = serde_json::json!([1, 1]);
    let bad = t.ckpt.with_file_name("bad.json");
    std::fs::write(&bad, v.to_string()).unwrap();
    let o = esgnn(&["eval", "--ckpt", p(&bad), "--data", p(&t.data)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));

    std::fs::write(&bad, text.replace("esgnn-ckpt/1", "esgnn-ckpt/0")).unwrap();
    assert_eq!(code(&esgnn(&["eval", "--ckpt", p(&bad), "--data", p(&t.data)])), 2);

    let empty = t.ckpt.with_file_name("allmost");
    gen(&empty, "3", "3", &["--split", "1,0,0"]);
    let o = esgnn(&["eval", "--ckpt", p(&t.ckpt), "--data", p(&empty), "--split", "test"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8(o.stdout).unwrap().contains("\"empty\": true"));
}

#[test]
fn layer_suite_passes_and_canary_fails() {
    let o = esgnn(&["equiv-test", "--family", "so3", "--trials", "5", "--tol", "1e-9"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.starts_with("seed,family,max_prob_dev,argmax_ok,max_coord_dev\n"));
    assert_eq!(out.lines().count(), 6);
    let o = esgnn(&["equiv-test", "--family", "so3", "--trials", "3", "--inject-canary"]);
    assert_eq!(code(&o), 5);
    let o = esgnn(&["equiv-test", "--trials", "0"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("vacuous"));
}

#[test]
fn scene_invariance_by_mode_and_family() {
    let strict = trained("strict", "1", &[]);
    let args = |t: &Trained, family: &'static str| {
        vec![
            "equiv-test".to_string(), "--ckpt".into(), p(&t.ckpt).into(), "--data".into(), p(&t.data).into(),
            "--family".into(), family.into(), "--trials".into(), "4".into(),
        ]
    };
    let run = |a: Vec<String>| esgnn(&a.iter().map(String::as_str).collect::<Vec<_>>());
    let o = run(args(&strict, "yaw"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut canary = args(&strict, "yaw");
    canary.push("--inject-canary".into());
    assert_eq!(code(&run(canary)), 5);

    let literal = trained("paper-literal", "0", &[]);
    let o = run(args(&literal, "yaw"));
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("paper-literal"));
    assert_eq!(code(&run(args(&literal, "translation"))), 0);
}

#[test]
fn gradcheck_command() {
    let o = esgnn(&["gradcheck", "--preset", "esgnn2x"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("max relative error"));
    let o = esgnn(&["gradcheck", "--eps", "1e-12"]);
    assert!(stderr(&o).contains("roundoff"));
}

#[test]
fn thread_cap_is_validated() {
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_esgnn"))
            .args(["equiv-test", "--trials", "2"])
            .env("ESGNN_THREADS", v)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("1")), 0);
    assert_eq!(code(&run("zero")), 1);
}
