use super::*;
use crate::data::{generate_dataset, DatasetSpec, PreparedSample};
use crate::error::Error;
use crate::model::{Model, StrategyKind};
use crate::numerics::BackwardFault;
use crate::ModelConfig;

fn micro_run(epochs: usize) -> RunConfig {
    let mut cfg = RunConfig::with_preset("micro").unwrap();
    cfg.train.epochs = epochs;
    cfg.data = DatasetSpec {
        num_subjects: 4,
        samples_per_subject: 4,
        ..cfg.data
    };
    cfg.folds = 2;
    cfg
}

fn split(cfg: &RunConfig) -> (Vec<PreparedSample<f32>>, Vec<PreparedSample<f32>>) {
    let ds = resolve_dataset(cfg).unwrap();
    let (a, b) = fold_split(&ds, cfg.folds, cfg.fold, cfg.data.seed).unwrap();
    (prepare(&ds, &a, cfg).unwrap(), prepare(&ds, &b, cfg).unwrap())
}

#[test]
fn zero_epochs_reports_initialization_only() {
    let cfg = micro_run(0);
    let (tr, va) = split(&cfg);
    let out = train(&cfg, &tr, &va, &mut |_, _| Ok(())).unwrap();
    assert_eq!(out.history.len(), 1);
    assert_eq!(out.history[0].epoch, 0);
    assert!(out.history[0].train_loss.is_none() && out.history[0].val.is_some());
    let (_, init) = Model::init::<f32>(&cfg.model).unwrap();
    for (a, b) in init.tensors().zip(out.checkpoint.params.tensors()) {
        assert!(a.bit_eq(b));
    }
    assert_eq!(out.checkpoint.step, 0);
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let cfg = micro_run(6);
    let (tr, va) = split(&cfg);
    let a = train(&cfg, &tr, &va, &mut |_, _| Ok(())).unwrap();
    let b = train(&cfg, &tr, &va, &mut |_, _| Ok(())).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.checkpoint.to_bytes(), b.checkpoint.to_bytes());
    assert_eq!(a.checkpoint.step, 6 * tr.len().div_ceil(cfg.train.batch_size) as u64);
    let first = a.history[1].train_loss.unwrap();
    let last = a.history.last().unwrap().train_loss.unwrap();
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn evaluation_is_pure() {
    let cfg = micro_run(1);
    let (tr, va) = split(&cfg);
    let out = train(&cfg, &tr, &va, &mut |_, _| Ok(())).unwrap();
    let before = out.checkpoint.params.clone();
    let r1 = evaluate(&out.model, &out.checkpoint.params, &va).unwrap();
    let r2 = evaluate(&out.model, &out.checkpoint.params, &va).unwrap();
    assert_eq!(r1, r2);
    for (a, b) in before.tensors().zip(out.checkpoint.params.tensors()) {
        assert!(a.bit_eq(b));
    }
    assert!(r1.detect_mse.is_some() && r1.landmark_mse.is_some());
}

/// A predictor that ignores the input hits each class of a balanced set
/// equally often, so its accuracy is `1/K` up to how its outputs vary.
/// With 140 samples a binomial 3σ band around 1/7 is about ±0.09.
#[test]
fn random_init_is_near_chance_on_balanced_data() {
    let mut cfg = RunConfig::with_preset("micro").unwrap();
    cfg.set("num_classes", "7").unwrap();
    cfg.data.num_subjects = 10;
    cfg.data.samples_per_subject = 14;
    let ds = generate_dataset(&cfg.data).unwrap();
    let all: Vec<usize> = (0..ds.samples.len()).collect();
    let samples = prepare::<f32>(&ds, &all, &cfg).unwrap();
    for seed in 0..3 {
        cfg.model.seed = seed;
        let (model, store) = Model::init::<f32>(&cfg.model).unwrap();
        let report = evaluate(&model, &store, &samples).unwrap();
        assert!((report.war - 1.0 / 7.0).abs() <= 0.1, "seed {seed}: {}", report.war);
    }
}

#[test]
fn non_finite_loss_aborts_before_updating() {
    let cfg = micro_run(3);
    let (mut tr, va) = split(&cfg);
    tr[1].video.data_mut()[0] = f32::NAN;
    let mut seen = Vec::new();
    let err = train(&cfg, &tr, &va, &mut |r, _| {
        seen.push(r.epoch);
        Ok(())
    })
    .err()
    .unwrap();
    assert!(err.is_numerical(), "{err}");
    assert_eq!(seen, vec![0]);
}

#[test]
fn run_train_writes_stream_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = micro_run(2);
    cfg.out_dir = dir.path().join("run");
    let mut stdout = Vec::new();
    let out = run_train::<f32>(&cfg, &mut stdout).unwrap();
    let text = String::from_utf8(stdout).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(cfg.out_dir.join(METRICS_FILE)).unwrap(), text);
    let line: EpochRecord = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    assert_eq!(&line, out.history.last().unwrap());

    let ck_path = cfg.out_dir.join(CHECKPOINT_FILE);
    let saved = Checkpoint::<f32>::load(&ck_path).unwrap();
    assert_eq!(saved.to_bytes(), out.checkpoint.to_bytes());
    let report = run_eval::<f32>(&ck_path, None, Split::Test).unwrap();
    assert_eq!(Some(report), out.history.last().unwrap().val);
    assert_eq!(RunConfig::load(&cfg.out_dir.join(CONFIG_FILE)).unwrap(), cfg);
}

#[test]
fn missing_dataset_path_is_a_config_error() {
    let mut cfg = micro_run(0);
    cfg.dataset = Some("/nonexistent/mtcae".into());
    assert!(matches!(resolve_dataset(&cfg), Err(Error::Config(_))));
}

#[test]
fn single_fold_ablation_is_train_then_evaluate() {
    let mut cfg = micro_run(2);
    cfg.folds = 1;
    let ds = resolve_dataset(&cfg).unwrap();
    let report = ablate::<f32>(&cfg, &ds, &[StrategyKind::NonSharedMlp], &mut |_| {}).unwrap();
    assert_eq!(report.rows.len(), 1);

    let all: Vec<usize> = (0..ds.samples.len()).collect();
    let samples = prepare::<f32>(&ds, &all, &cfg).unwrap();
    let mut direct_cfg = cfg.clone();
    direct_cfg.model.strategy = StrategyKind::NonSharedMlp;
    let out = train(&direct_cfg, &samples, &[], &mut |_, _| Ok(())).unwrap();
    let direct = evaluate(&out.model, &out.checkpoint.params, &samples).unwrap();
    assert_eq!((report.rows[0].uar, report.rows[0].war), (direct.uar, direct.war));
    assert!(ablate::<f32>(&cfg, &ds, &[], &mut |_| {}).is_err());
}

#[test]
fn ablation_table_has_one_row_per_strategy() {
    let cfg = micro_run(1);
    let ds = resolve_dataset(&cfg).unwrap();
    let mut progress = 0;
    let report = ablate::<f32>(&cfg, &ds, &StrategyKind::ALL, &mut |_| progress += 1).unwrap();
    assert_eq!(progress, 6 * cfg.folds);
    assert_eq!(report.rows.len(), 6);
    for row in &report.rows {
        assert!((0.0..=1.0).contains(&row.uar) && (0.0..=1.0).contains(&row.war));
        assert_eq!(row.folds.len(), cfg.folds);
    }
    let table = report.table();
    assert_eq!(table.lines().count(), 8);
    assert!(table.contains("| cascaded_vit | cascaded | ViT |"));
    assert!(report.mtl_margin().is_some());
}

#[test]
fn gradcheck_passes_and_detects_faults() {
    let cfg = ModelConfig::micro();
    let clean = run_gradcheck(&cfg, &[StrategyKind::CascadedVit], None, 1).unwrap();
    assert!(clean.iter().all(|c| c.passed), "{clean:?}");
    assert!(clean.iter().any(|c| c.component == "model.cascaded_vit"));
    let faulty = run_gradcheck(&cfg, &[StrategyKind::CascadedVit], Some(BackwardFault::Softmax), 1).unwrap();
    assert!(faulty.iter().any(|c| !c.passed && c.component == "attention"));
}

#[test]
fn split_names() {
    assert_eq!("test".parse::<Split>().unwrap(), Split::Test);
    assert_eq!("all".parse::<Split>().unwrap(), Split::All);
    assert!("dev".parse::<Split>().is_err());
    assert_eq!(select(&[0, 2], &[1], Split::All), vec![0, 1, 2]);
}
