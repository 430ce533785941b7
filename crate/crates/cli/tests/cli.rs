use std::path::Path;
use std::process::{Command, Output};

fn mtcae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mtcae")).args(args).output().expect("spawn mtcae")
}

fn small(out_dir: &Path) -> Vec<String> {
    [
        "preset=micro",
        "subjects=4",
        "samples_per_subject=4",
        "folds=2",
        "epochs=2",
    ]
    .iter()
    .map(|s| s.to_string())
    .chain([format!("--out_dir={}", out_dir.display())])
    .collect()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn inspect_reports_parameter_count() {
    let o = mtcae(&["inspect", "--preset=micro"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("total parameters: 5280"), "{text}");
}

#[test]
fn configuration_errors_exit_with_one() {
    assert_eq!(code(&mtcae(&["inspect", "--bogus=1"])), 1);
    assert_eq!(code(&mtcae(&["inspect", "encoder_heads=5"])), 1);
    assert_eq!(code(&mtcae(&["train", "--config", "/nonexistent.cfg"])), 1);
    assert_eq!(code(&mtcae(&["no-such-command"])), 1);
    assert_eq!(code(&mtcae(&["--help"])), 0);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "preset = micro\nencoder_layers = 3\n").unwrap();
    let o = mtcae(&["inspect", "--config", cfg.to_str().unwrap(), "--decoder_layers=1"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("encoder.2.") && !text.contains("encoder.3."), "{text}");
}

#[test]
fn gen_data_train_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let mut args = vec!["gen-data".to_string(), "--out".into(), data.display().to_string()];
    args.extend(small(&run));
    let o = mtcae(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(data.join("manifest.json").exists());

    let mut args = vec!["train".to_string(), format!("--dataset={}", data.display())];
    args.extend(small(&run));
    let o = mtcae(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stream = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<serde_json::Value> = stream.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[0]["epoch"], 0);
    assert!(lines[2]["train_loss"].is_number());
    assert_eq!(std::fs::read_to_string(run.join("metrics.jsonl")).unwrap(), stream);

    let ck = run.join("checkpoint.bin");
    let o = mtcae(&["eval", "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["war"], lines[2]["val"]["war"]);
    assert_eq!(report["uar"], lines[2]["val"]["uar"]);

    let again = mtcae(&["eval", "--checkpoint", ck.to_str().unwrap()]);
    assert_eq!(again.stdout, o.stdout);
    assert_eq!(code(&mtcae(&["eval", "--checkpoint", ck.to_str().unwrap(), "--split", "dev"])), 1);
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train".to_string()];
    args.extend(small(&run));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let first = mtcae(&args);
    assert_eq!(code(&first), 0);
    let ckpt = std::fs::read(run.join("checkpoint.bin")).unwrap();
    let second = mtcae(&args);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(ckpt, std::fs::read(run.join("checkpoint.bin")).unwrap());
}

#[test]
fn divergent_training_exits_with_two_and_keeps_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train".to_string(), "lr=1e30".into(), "weight_decay=0".into()];
    args.extend(small(&run));
    args.push("epochs=20".into());
    let o = mtcae(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("non-finite"));
    let ck = run.join("checkpoint.bin");
    assert_eq!(code(&mtcae(&["eval", "--checkpoint", ck.to_str().unwrap(), "--split", "all"])), 0);
}

#[test]
fn gradcheck_exit_status_tracks_faults() {
    let o = mtcae(&["gradcheck", "preset=micro"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("vit_decoder") && text.contains("model.cascaded_vit"));
    assert!(!text.contains("FAIL"));

    let o = mtcae(&["gradcheck", "--fault", "layer_norm", "preset=micro"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8(o.stdout).unwrap().contains("FAIL"));
    assert_eq!(code(&mtcae(&["gradcheck", "--fault", "conv", "preset=micro"])), 1);
}

#[test]
fn ablate_writes_table_and_per_fold_json() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("abl");
    let mut args = vec!["ablate".to_string(), "strategies=stl,cascaded_vit".into()];
    args.extend(small(&run));
    args.push("epochs=1".into());
    let o = mtcae(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("| stl |") && table.contains("| cascaded_vit |"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("ablation.json")).unwrap()).unwrap();
    assert_eq!(json["rows"].as_array().unwrap().len(), 2);
    assert_eq!(json["rows"][1]["folds"].as_array().unwrap().len(), 2);
    assert_eq!(json["loss_reduction"], "batch_mean");
    assert!(run.join("ablation.md").exists());
}
