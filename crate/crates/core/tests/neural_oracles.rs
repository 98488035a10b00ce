//! Forward-pass oracles, gradient checks, training contracts and weight
//! files for both classifiers.

// Oracles are written as plain index loops on purpose.
#![allow(clippy::needless_range_loop)]

use fallsense::csi::CsiTensor;
use fallsense::imu::FeatureVector20;
use fallsense::neural::{
    encode, evaluate, gradient_check, gradient_check_with, load_cnn, load_mlp, save_weights, train, CnnModel, Dense,
    MlpModel, Mode, Network, NnError, NormParams, TrainConfig,
};
use fallsense::sensor_model::N_CHANNELS;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn naive_dense(layer: &Dense, x: &[f64], relu: bool) -> Vec<f64> {
    let mut out = vec![0.0; layer.n_out];
    for o in 0..layer.n_out {
        let mut s = layer.bias[o];
        for i in 0..layer.n_in {
            s += layer.weight[o * layer.n_in + i] * x[i];
        }
        out[o] = if relu && s < 0.0 { 0.0 } else { s };
    }
    out
}

fn naive_softmax(z: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = z.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn mlp_oracle(m: &MlpModel, x: &FeatureVector20) -> Vec<f64> {
    let mut h: Vec<f64> = (0..20).map(|j| (x.0[j] - m.norm.mean[j]) / m.norm.std[j]).collect();
    for layer in [&m.dense1, &m.dense2, &m.dense3] {
        h = naive_dense(layer, &h, true);
    }
    naive_softmax(&naive_dense(&m.out, &h, false))
}

fn cnn_oracle(m: &CnnModel, x: &CsiTensor) -> Vec<f64> {
    let scale = m.input_scale[0];
    let mut conv = vec![[0.0; 32]; 27];
    for (t, row) in conv.iter_mut().enumerate() {
        for (f, out) in row.iter_mut().enumerate() {
            let mut s = m.conv_bias[f];
            for j in 0..3 {
                for c in 0..N_CHANNELS {
                    s += m.conv_weight[f * 3 * N_CHANNELS + j * N_CHANNELS + c] * scale * x.get(t + j, c);
                }
            }
            *out = s;
        }
    }
    let pooled: Vec<[f64; 32]> = (0..13)
        .map(|u| std::array::from_fn(|f| conv[2 * u][f].max(conv[2 * u + 1][f])))
        .collect();
    let scores: Vec<f64> = pooled
        .iter()
        .map(|h| (0..32).map(|f| h[f] * m.attention[f]).sum())
        .collect();
    let a = naive_softmax(&scores);
    let context: Vec<f64> = (0..32).map(|f| (0..13).map(|u| a[u] * pooled[u][f]).sum()).collect();
    let hidden = naive_dense(&m.dense1, &context, true);
    naive_softmax(&naive_dense(&m.out, &hidden, false))
}

fn random_features(rng: &mut ChaCha8Rng) -> FeatureVector20 {
    FeatureVector20(std::array::from_fn(|_| rng.random_range(0.0..5.0)))
}

fn random_tensor(rng: &mut ChaCha8Rng) -> CsiTensor {
    CsiTensor::from_values((0..CsiTensor::LEN).map(|_| rng.random_range(-150.0..150.0)).collect()).unwrap()
}

#[test]
fn mlp_forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut m = MlpModel::new(11, 5);
    m.norm = NormParams {
        mean: std::array::from_fn(|_| rng.random_range(-1.0..1.0)),
        std: std::array::from_fn(|_| rng.random_range(0.5..2.0)),
    };
    for _ in 0..20 {
        let x = random_features(&mut rng);
        let got = m.forward(&x, Mode::Infer).unwrap();
        let want = mlp_oracle(&m, &x);
        assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6 && (0.0..=1.0).contains(g));
        }
    }
}

#[test]
fn cnn_forward_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let m = CnnModel::new(9);
    for _ in 0..5 {
        let x = random_tensor(&mut rng);
        let got = m.forward(&x, Mode::Infer).unwrap();
        let want = cnn_oracle(&m, &x);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-5, "{g} vs {w}");
        }
        let tr = m.trace(&x, Mode::Infer).unwrap();
        assert_eq!(
            (
                tr.conv.len(),
                tr.pooled.len(),
                tr.context.len(),
                tr.hidden.len(),
                tr.probs.len()
            ),
            (27 * 32, 13 * 32, 32, 64, 2)
        );
        assert!((tr.attention.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in [1u64, 2, 3] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mlp = MlpModel::new(10, seed);
        let x = random_features(&mut rng);
        let err = gradient_check(&mlp, &x, seed as usize, 1e-5).unwrap();
        assert!(err < 1e-4, "mlp seed {seed}: {err}");

        let cnn = CnnModel::new(seed);
        let x = random_tensor(&mut rng);
        let err = gradient_check_with(&cnn, &x, (seed % 2) as usize, 1e-5, 128, seed).unwrap();
        assert!(err < 1e-4, "cnn seed {seed}: {err}");
    }
    let m = MlpModel::new(10, 1);
    let x = FeatureVector20([0.0; 20]);
    assert!(matches!(
        gradient_check(&m, &x, 0, 1e-2),
        Err(NnError::InvalidConfig(_))
    ));
}

#[test]
fn saturated_prediction_has_flat_output_gradient() {
    let mut m = MlpModel::new(4, 3);
    m.out.bias[2] = 1000.0;
    let x = FeatureVector20([0.3; 20]);
    let mut grads = m.zero_gradients();
    let (loss, probs) = m.accumulate_gradients(&x, 2, Mode::Infer, &mut grads).unwrap();
    assert_eq!(probs[2], 1.0);
    assert_eq!(loss, 0.0);
    let n = grads.len();
    assert!(grads[n - 2..].iter().flatten().all(|g| g.abs() < 1e-12));
}

fn toy_set(seed: u64, n: usize) -> Vec<(FeatureVector20, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: [f64; 20] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x: [f64; 20] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let s: f64 = x.iter().zip(&w).map(|(a, b)| a * b).sum();
        if s.abs() > 0.3 {
            out.push((FeatureVector20(x), usize::from(s > 0.0)));
        }
    }
    out
}

#[test]
fn separable_toy_set_is_learned() {
    let data = toy_set(4, 400);
    let cfg = TrainConfig {
        learning_rate: 0.01,
        seed: 4,
        ..Default::default()
    };
    let (model, history) = train(&MlpModel::new(2, 4), &data, &cfg).unwrap();
    assert_eq!(history.len(), 50);
    assert!(history.last().unwrap().loss < history[0].loss);
    let acc = evaluate(&model, &data).unwrap().accuracy;
    assert!(acc >= 0.99, "{acc}");
}

#[test]
fn zero_learning_rate_keeps_weights() {
    let data = toy_set(5, 64);
    let m = MlpModel::new(2, 5);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        epochs: 3,
        ..Default::default()
    };
    let (trained, history) = train(&m, &data, &cfg).unwrap();
    assert_eq!(history.len(), 3);
    assert_eq!(trained, m);
}

#[test]
fn training_is_deterministic() {
    let data = toy_set(6, 128);
    let cfg = TrainConfig {
        epochs: 5,
        seed: 11,
        ..Default::default()
    };
    let (a, ha) = train(&MlpModel::new(2, 1), &data, &cfg).unwrap();
    let (b, hb) = train(&MlpModel::new(2, 1), &data, &cfg).unwrap();
    assert_eq!(encode(&a), encode(&b));
    assert_eq!(ha, hb);

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let csi: Vec<(CsiTensor, usize)> = (0..16).map(|i| (random_tensor(&mut rng), i % 2)).collect();
    let cfg = TrainConfig { epochs: 2, ..cfg };
    let (a, _) = train(&CnnModel::new(2), &csi, &cfg).unwrap();
    let (b, _) = train(&CnnModel::new(2), &csi, &cfg).unwrap();
    assert_eq!(encode(&a), encode(&b));
}

#[test]
fn training_rejects_bad_input() {
    let cfg = TrainConfig::default();
    let empty: Vec<(FeatureVector20, usize)> = Vec::new();
    assert!(matches!(
        train(&MlpModel::new(2, 1), &empty, &cfg),
        Err(NnError::EmptyDataset)
    ));
    let bad = vec![(FeatureVector20([0.0; 20]), 5)];
    assert!(matches!(
        train(&MlpModel::new(2, 1), &bad, &cfg),
        Err(NnError::LabelOutOfRange { label: 5, classes: 2 })
    ));
    let cfg = TrainConfig {
        train_fraction: 1.0,
        ..cfg
    };
    assert!(cfg.validate().is_err());
}

#[test]
fn weight_files_round_trip_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mlp = MlpModel::new(10, 3);
    let path = dir.path().join("mlp.fsnn");
    save_weights(&mlp, &path).unwrap();
    let back = load_mlp(&path, Some(10)).unwrap();
    let x = random_features(&mut rng);
    assert_eq!(
        back.forward(&x, Mode::Infer).unwrap(),
        mlp.forward(&x, Mode::Infer).unwrap()
    );
    assert!(matches!(load_mlp(&path, Some(11)), Err(NnError::ShapeMismatch(_))));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
    assert!(matches!(load_mlp(&path, None), Err(NnError::CorruptFile(_))));

    let cnn = CnnModel::new(3);
    let path = dir.path().join("cnn.fsnn");
    save_weights(&cnn, &path).unwrap();
    let back = load_cnn(&path).unwrap();
    let x = random_tensor(&mut rng);
    assert_eq!(
        back.forward(&x, Mode::Infer).unwrap(),
        cnn.forward(&x, Mode::Infer).unwrap()
    );
    assert!(matches!(load_mlp(&path, None), Err(NnError::SchemaMismatch(_))));
    assert!(matches!(load_cnn(dir.path().join("missing.fsnn")), Err(NnError::Io(_))));
}
