use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::config::ModelConfig;
use crate::numerics::{Graph, ParamStore, Tensor};

fn video(cfg: &ModelConfig, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(cfg.video_shape().to_vec(), |_| rng.random_range(0.0..1.0))
}

fn with_strategy(strategy: StrategyKind) -> ModelConfig {
    ModelConfig {
        strategy,
        ..ModelConfig::micro()
    }
}

/// Rescales matrices to std 0.5 so outputs react strongly to inputs.
fn amplify(store: &mut ParamStore<f64>) {
    let k = 0.5 / ModelConfig::micro().init_std;
    for t in store.tensors_mut() {
        if t.ndim() == 2 {
            *t = t.map(|v| v * k);
        }
    }
}

#[test]
fn every_strategy_emits_uniform_shapes() {
    for strategy in StrategyKind::ALL {
        let cfg = with_strategy(strategy);
        let (model, store) = Model::init::<f64>(&cfg).unwrap();
        let mut g = Graph::new();
        let pass = model.forward(&mut g, &store, &video(&cfg, 1)).unwrap();
        let out = pass.output;
        let expr = out.expression.expect("expression always present in tiny config");
        assert_eq!(g.shape(expr), &[1, cfg.num_classes], "{strategy}");
        if strategy == StrategyKind::Stl {
            assert!(out.boxes.is_none() && out.landmarks.is_none());
        } else {
            assert_eq!(g.shape(out.boxes.unwrap()), &[cfg.frames, 4]);
            assert_eq!(g.shape(out.landmarks.unwrap()), &[cfg.frames, 10]);
        }
        assert!(g.value(expr).is_finite());

        // Symbolic shapes agree with the executed graph.
        let trace = activation_shapes(&cfg).unwrap();
        assert_eq!(trace.get("features").unwrap(), g.shape(pass.features));
        for (task, y) in &pass.task_features {
            if strategy.is_multi_task() {
                assert_eq!(trace.get(&format!("decoder.{task}")).unwrap(), g.shape(*y));
            }
            let o = out.get(*task).unwrap();
            assert_eq!(trace.get(&format!("output.{task}")).unwrap(), g.shape(o));
        }
    }
}

#[test]
fn single_task_strategy_can_target_any_task() {
    let cfg = ModelConfig {
        strategy: StrategyKind::Stl,
        stl_task: Task::Landmark,
        ..ModelConfig::micro()
    };
    let (model, store) = Model::init::<f32>(&cfg).unwrap();
    let pred = model.predict(&store, &video(&cfg, 2).cast()).unwrap();
    assert!(pred.expression.is_none() && pred.boxes.is_none());
    assert_eq!(pred.landmarks.unwrap().shape(), &[cfg.frames, 10]);
}

#[test]
fn zero_detect_head_outputs_half() {
    let cfg = ModelConfig::micro();
    let (model, mut store) = Model::init::<f64>(&cfg).unwrap();
    let head = model.heads.iter().find(|h| h.task == Task::Detect).unwrap();
    let (w, b) = (head.fc.weight, head.fc.bias);
    *store.get_mut(w) = Tensor::zeros(store.get(w).shape());
    let pred = model.predict(&store, &video(&cfg, 3)).unwrap();
    assert!(pred.boxes.unwrap().data().iter().all(|&v| v == 0.5));
    assert!(store.get(b).data().iter().all(|&v| v == 0.0));
}

#[test]
fn regression_outputs_are_bounded() {
    let cfg = ModelConfig::micro();
    let (model, mut store) = Model::init::<f64>(&cfg).unwrap();
    amplify(&mut store);
    let pred = model.predict(&store, &video(&cfg, 4)).unwrap();
    for t in [pred.boxes.unwrap(), pred.landmarks.unwrap()] {
        assert!(t.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

#[test]
fn fully_shared_and_cascaded_differ_on_shared_weights() {
    let cas_cfg = with_strategy(StrategyKind::CascadedVit);
    let fs_cfg = with_strategy(StrategyKind::FullySharedVit);
    let (cas, mut cas_store) = Model::init::<f64>(&cas_cfg).unwrap();
    let (fs, mut fs_store) = Model::init::<f64>(&fs_cfg).unwrap();
    amplify(&mut cas_store);
    amplify(&mut fs_store);
    let mut copied = 0;
    for id in cas_store.ids() {
        let name = cas_store.name(id).to_string();
        if let Some(fid) = fs_store.id(&name) {
            if fs_store.get(fid).shape() == cas_store.get(id).shape() {
                *fs_store.get_mut(fid) = cas_store.get(id).clone();
                copied += 1;
            }
        }
    }
    assert!(copied > cas_store.len() / 2);
    let v = video(&cas_cfg, 5);
    let a = cas.predict(&cas_store, &v).unwrap().expression.unwrap();
    let b = fs.predict(&fs_store, &v).unwrap().expression.unwrap();
    assert!(a.max_abs_diff(&b) > 1e-9);
}

fn perturb_prefix(store: &mut ParamStore<f64>, prefix: &str, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().filter(|&id| store.name(id).starts_with(prefix)).collect();
    assert!(!ids.is_empty(), "no parameters under {prefix}");
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
}

fn task_outputs(model: &Model, store: &ParamStore<f64>, v: &Tensor<f64>) -> Vec<Tensor<f64>> {
    let mut g = Graph::new();
    let pass = model.forward(&mut g, store, v).unwrap();
    pass.task_features
        .iter()
        .map(|(_, y)| g.value(*y).clone())
        .chain(Task::ALL.iter().map(|&t| g.value(pass.output.get(t).unwrap()).clone()))
        .collect()
}

#[test]
fn cascade_information_flows_downstream_only() {
    let cfg = with_strategy(StrategyKind::CascadedVit);
    let (model, mut store) = Model::init::<f64>(&cfg).unwrap();
    amplify(&mut store);
    let v = video(&cfg, 6);
    let base = task_outputs(&model, &store, &v);

    let mut up = store.clone();
    perturb_prefix(&mut up, "decoder.detect.", 7);
    let after = task_outputs(&model, &up, &v);
    assert!(after[2].max_abs_diff(&base[2]) > 1e-9, "Y3 unchanged");
    assert!(after[5].max_abs_diff(&base[5]) > 1e-12, "E unchanged");

    let mut down = store.clone();
    perturb_prefix(&mut down, "decoder.expression.", 8);
    let after = task_outputs(&model, &down, &v);
    assert!(after[0].bit_eq(&base[0]) && after[3].bit_eq(&base[3]));
    assert!(after[1].bit_eq(&base[1]) && after[4].bit_eq(&base[4]));
}

#[test]
fn non_shared_decoders_are_independent() {
    let cfg = with_strategy(StrategyKind::NonSharedVit);
    let (model, mut store) = Model::init::<f64>(&cfg).unwrap();
    amplify(&mut store);
    let v = video(&cfg, 9);
    let base = task_outputs(&model, &store, &v);
    for (i, task) in Task::ALL.iter().enumerate() {
        let mut p = store.clone();
        perturb_prefix(&mut p, &format!("decoder.{task}."), 10 + i as u64);
        let after = task_outputs(&model, &p, &v);
        for j in 0..3 {
            let same = after[j].bit_eq(&base[j]) && after[j + 3].bit_eq(&base[j + 3]);
            assert_eq!(same, i != j, "perturbing {task} vs output {j}");
        }
    }
}

#[test]
fn zero_layer_single_task_counts_embedding_and_head_only() {
    let cfg = ModelConfig {
        strategy: StrategyKind::Stl,
        encoder_layers: 0,
        decoder_layers: 0,
        ..ModelConfig::micro()
    };
    let embed = cfg.token_dim() * cfg.encoder_dim + cfg.encoder_dim;
    let head = cfg.encoder_dim * cfg.num_classes + cfg.num_classes;
    assert_eq!(parameter_count(&cfg).unwrap(), embed + head);
    let (_, store) = Model::init::<f32>(&cfg).unwrap();
    assert_eq!(count_parameters(&store), embed + head);
}

#[test]
fn more_decoder_layers_means_more_parameters() {
    for strategy in [StrategyKind::NonSharedVit, StrategyKind::FullySharedVit, StrategyKind::CascadedVit] {
        let small = with_strategy(strategy);
        let big = ModelConfig {
            decoder_layers: small.decoder_layers * 2,
            ..small.clone()
        };
        assert!(parameter_count(&big).unwrap() > parameter_count(&small).unwrap());
    }
}

#[test]
fn tiny_parameter_count_matches_closed_form() {
    let cfg = ModelConfig::micro();
    let lin = |i: usize, o: usize| i * o + o;
    let ln = |d: usize| 2 * d;
    let (d_e, d_d, r) = (cfg.encoder_dim, cfg.decoder_dim, cfg.mlp_ratio);
    let block = |d: usize| 2 * ln(d) + 4 * lin(d, d) + lin(d, r * d) + lin(r * d, d);
    let decoder = |d_in: usize| lin(d_in, d_d) + lin(d_e, d_d) + ln(d_d) + cfg.decoder_layers * block(d_d);
    let heads = 3 * ln(d_d) + lin(d_d, 2 * 4) + lin(d_d, 2 * 10) + lin(d_d, cfg.num_classes);
    let total = lin(cfg.token_dim(), d_e) + block(d_e) + decoder(d_e) + 2 * decoder(d_d) + heads;
    assert_eq!(total, 5280);
    assert_eq!(parameter_count(&cfg).unwrap(), total);
    let (_, store) = Model::init::<f64>(&cfg).unwrap();
    assert_eq!(count_parameters(&store), total);
}

#[test]
fn describe_lists_every_parameter() {
    let cfg = ModelConfig::micro();
    let report = describe(&cfg).unwrap();
    for (name, _) in parameter_shapes(&cfg).unwrap() {
        assert!(report.contains(&name), "{name} missing");
    }
    assert!(report.contains("total"));
    assert!(report.contains("5280"));
}

#[test]
fn full_scale_shapes_are_exact() {
    let cfg = ModelConfig::full();
    let t = activation_shapes(&cfg).unwrap();
    assert_eq!(t.get("patches").unwrap(), &[1568, 1536]);
    assert_eq!(t.get("embedded").unwrap(), &[1568, 1024]);
    assert_eq!(t.get("features").unwrap(), &[1568, 1024]);
    for task in Task::ALL {
        assert_eq!(t.get(&format!("decoder.{task}")).unwrap(), &[1568, 512]);
    }
    assert_eq!(t.get("output.detect").unwrap(), &[16, 4]);
    assert_eq!(t.get("output.landmark").unwrap(), &[16, 10]);
    assert_eq!(t.get("output.expression").unwrap(), &[1, 7]);
}

#[test]
fn strategy_names_round_trip() {
    for s in StrategyKind::ALL {
        assert_eq!(s.name().parse::<StrategyKind>().unwrap(), s);
    }
    assert_eq!("CascadedViT".parse::<StrategyKind>().unwrap(), StrategyKind::CascadedVit);
    assert!("bogus".parse::<StrategyKind>().is_err());
    assert!("pose".parse::<Task>().is_err());
}

#[test]
fn full_model_gradient_check_cascaded() {
    use crate::numerics::grad_check_store;
    let cfg = ModelConfig::micro();
    let (model, mut store) = Model::init::<f64>(&cfg).unwrap();
    amplify(&mut store);
    let v = video(&cfg, 11);
    let report = grad_check_store(&store, |g, s| {
        let pass = model.forward(g, s, &v)?;
        let e = g.sparse_cross_entropy(pass.output.expression.unwrap(), 1)?;
        let b = g.sum(pass.output.boxes.unwrap());
        g.add(e, b)
    })
    .unwrap();
    assert!(report.max_rel_error < 1e-4, "{report:?}");
}
