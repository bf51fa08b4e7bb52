use std::fs;

use rwc_core::trainer::{
    loss_and_grads, make_blobs, sgd_step, train, DeskRng, ModelState, OptimizerState, SgdConfig, Stream, TrainerConfig,
};

fn random_instance(seed: u64) -> (ModelState, Vec<f64>, Vec<usize>, usize) {
    let mut rng = DeskRng::new(seed, Stream::Init);
    let inputs = 2 + rng.below(3) as usize;
    let hidden = 3 + rng.below(4) as usize;
    let classes = 2 + rng.below(3) as usize;
    let mut model = ModelState::he_normal(&[inputs, hidden, hidden, classes], &mut rng);
    for layer in &mut model.layers {
        layer.bias.iter_mut().for_each(|b| *b = 0.3 * rng.standard_normal());
    }
    let rows = 1 + rng.below(6) as usize;
    let features: Vec<f64> = (0..rows * inputs).map(|_| rng.standard_normal()).collect();
    let labels: Vec<usize> = (0..rows).map(|_| rng.below(classes as u64) as usize).collect();
    (model, features, labels, inputs)
}

fn loss(model: &ModelState, x: &[f64], width: usize, y: &[usize]) -> f64 {
    loss_and_grads(model, x, width, y).unwrap().0
}

#[test]
fn gradients_match_central_differences() {
    let h = 1e-5;
    for seed in 0..20 {
        let (model, x, y, width) = random_instance(seed);
        let (_, grads) = loss_and_grads(&model, &x, width, &y).unwrap();
        for l in 0..model.layers.len() {
            for which in 0..2 {
                let count = if which == 0 { model.layers[l].weight.len() } else { model.layers[l].bias.len() };
                for i in 0..count {
                    let probe = |delta: f64| {
                        let mut m = model.clone();
                        let p = if which == 0 { &mut m.layers[l].weight[i] } else { &mut m.layers[l].bias[i] };
                        *p += delta;
                        loss(&m, &x, width, &y)
                    };
                    let numeric = (probe(h) - probe(-h)) / (2.0 * h);
                    let analytic = if which == 0 { grads.layers[l].weight[i] } else { grads.layers[l].bias[i] };
                    let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
                    assert!(err <= 1e-4, "seed {seed} layer {l} param {which}/{i}: {analytic} vs {numeric}");
                }
            }
        }
    }
}

#[test]
fn zero_model_loss_is_log_k() {
    for k in 2..6 {
        let model = ModelState::zeros(&[3, 4, k]);
        let x: Vec<f64> = (0..3 * k).map(|i| i as f64 * 0.7 - 1.0).collect();
        let y: Vec<usize> = (0..k).collect();
        let l = loss(&model, &x, 3, &y);
        assert!((l - (k as f64).ln()).abs() <= 1e-12, "k={k}: {l}");
    }
}

#[test]
fn confident_logits_fixture() {
    let mut model = ModelState::zeros(&[1, 1, 3]);
    model.layers[0].bias[0] = 1.0;
    model.layers[1].weight = vec![10.0, 0.0, 0.0];
    let l = loss(&model, &[0.0], 1, &[0]);
    let expected = (2.0 * (-10.0f64).exp()).ln_1p();
    assert!((l - expected).abs() / expected <= 1e-12, "{l} vs {expected}");
}

fn scalar_model(w: f64) -> ModelState {
    let mut m = ModelState::zeros(&[1, 1, 1]);
    m.layers[0].weight[0] = w;
    m
}

fn unit_grads() -> ModelState {
    let mut g = ModelState::zeros(&[1, 1, 1]);
    g.layers[0].weight[0] = 1.0;
    g
}

#[test]
fn momentum_hand_iteration() {
    let mut model = scalar_model(1.0);
    let mut opt = OptimizerState::new(&model);
    let cfg = SgdConfig {
        lr: 0.1,
        momentum: 0.9,
        weight_decay: 0.0,
    };
    sgd_step(&mut model, &mut opt, &unit_grads(), cfg).unwrap();
    assert!((model.layers[0].weight[0] - 0.9).abs() <= 1e-15);
    assert_eq!(opt.velocity.layers[0].weight[0], 1.0);
    sgd_step(&mut model, &mut opt, &unit_grads(), cfg).unwrap();
    assert!((opt.velocity.layers[0].weight[0] - 1.9).abs() <= 1e-15);
    assert!((model.layers[0].weight[0] - 0.71).abs() <= 1e-15);
}

#[test]
fn weight_decay_hand_arithmetic() {
    let mut model = scalar_model(2.0);
    model.layers[0].bias[0] = 2.0;
    let mut opt = OptimizerState::new(&model);
    let cfg = SgdConfig {
        lr: 0.5,
        momentum: 0.0,
        weight_decay: 0.1,
    };
    sgd_step(&mut model, &mut opt, &ModelState::zeros(&[1, 1, 1]), cfg).unwrap();
    assert!((model.layers[0].weight[0] - 1.9).abs() <= 1e-15);
    assert_eq!(model.layers[0].bias[0], 2.0);
}

#[test]
fn plain_step_is_gradient_descent() {
    let (mut model, x, y, width) = random_instance(99);
    let before = model.clone();
    let (_, grads) = loss_and_grads(&model, &x, width, &y).unwrap();
    let mut opt = OptimizerState::new(&model);
    let cfg = SgdConfig {
        lr: 0.03,
        momentum: 0.0,
        weight_decay: 0.0,
    };
    sgd_step(&mut model, &mut opt, &grads, cfg).unwrap();
    for ((after, prev), g) in model.layers.iter().zip(&before.layers).zip(&grads.layers) {
        for i in 0..after.weight.len() {
            assert_eq!(after.weight[i], prev.weight[i] - 0.03 * g.weight[i]);
        }
        for i in 0..after.bias.len() {
            assert_eq!(after.bias[i], prev.bias[i] - 0.03 * g.bias[i]);
        }
    }
}

#[test]
fn blobs_are_deterministic() {
    let cfg = TrainerConfig::default().dataset;
    assert_eq!(make_blobs(&cfg, 3), make_blobs(&cfg, 3));
}

#[test]
fn training_is_byte_reproducible() {
    let config = TrainerConfig {
        seed: 7,
        epochs: 3,
        ..TrainerConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let manifest = train(&config, a.path()).unwrap();
    train(&config, b.path()).unwrap();
    assert_eq!(manifest.epochs, 3);
    assert!(manifest.includes_initial);
    let mut names: Vec<String> = fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["epoch_0.lws", "epoch_1.lws", "epoch_2.lws", "epoch_3.lws", "manifest.json"]);
    for name in &names {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn snapshots_carry_parameter_names() {
    let dir = tempfile::tempdir().unwrap();
    let config = TrainerConfig {
        epochs: 1,
        ..TrainerConfig::default()
    };
    train(&config, dir.path()).unwrap();
    let snap = rwc_core::snapshot::load_snapshot(dir.path().join("epoch_1.lws")).unwrap();
    let names: Vec<&str> = snap.names().collect();
    assert_eq!(names, ["fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias", "fc3.weight", "fc3.bias"]);
    assert_eq!(snap.get("fc2.weight").unwrap().shape(), [32, 32]);
    assert_eq!(snap.metadata()["epoch"], "1");
}
