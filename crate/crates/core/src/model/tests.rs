use super::*;
use proptest::prelude::*;
use rand_distr::StandardNormal;

fn small_spec(seed: u64) -> SnnSpec {
    SnnSpec {
        input_dim: 5,
        hidden_dim: 8,
        trunk_layers: 2,
        upper_layers: 2,
        projection_dim: 4,
        alpha_dropout_rate: 0.1,
        seed,
    }
}

fn normal_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Matrix::new(rows, cols, data).unwrap()
}

#[test]
fn spec_defaults_and_validation() {
    let s = SnnSpec::new(10);
    assert_eq!((s.hidden_dim, s.trunk_layers, s.upper_layers), (512, 12, 6));
    assert_eq!(s.projection_dim, 128);
    assert_eq!(s.alpha_dropout_rate, 0.0003);
    assert!(SnnSpec { alpha_dropout_rate: 1.0, ..s.clone() }.validate().is_err());
    assert!(SnnSpec { hidden_dim: 0, ..s }.validate().is_err());
}

#[test]
fn layer_count_includes_both_heads() {
    let m = SnnModel::lecun_init(&small_spec(0)).unwrap();
    assert_eq!(m.layer_count(), 2 + 2 + 2);
    assert_eq!(m.params().len(), 2 * m.layer_count());
}

#[test]
fn zero_model_outputs() {
    let m = SnnModel::zeros(&small_spec(0)).unwrap();
    let out = m.forward(&normal_matrix(3, 5, 1)).unwrap();
    assert!(out.mu.iter().all(|&v| v == 0.0));
    assert!(out.sigma.iter().all(|&s| (s - std::f64::consts::LN_2).abs() < 1e-15));
}

#[test]
fn lecun_weight_statistics() {
    let spec = SnnSpec {
        input_dim: 512,
        hidden_dim: 512,
        trunk_layers: 1,
        upper_layers: 1,
        projection_dim: 1,
        alpha_dropout_rate: 0.0,
        seed: 3,
    };
    let m = SnnModel::lecun_init(&spec).unwrap();
    let w = &m.layers().next().unwrap().weight;
    assert!(w.len() >= 100_000);
    let n = w.len() as f64;
    let mean = w.sum() / n;
    let var = w.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!((var * 512.0 - 1.0).abs() < 0.1, "var {var}");
    assert!(m.layers().all(|d| d.bias.as_slice().iter().all(|&b| b == 0.0)));

    let spec = SnnSpec { input_dim: 1, hidden_dim: 20_000, ..spec };
    let m = SnnModel::lecun_init(&spec).unwrap();
    let w = &m.layers().next().unwrap().weight;
    let std = (w.as_slice().iter().map(|v| v * v).sum::<f64>() / w.len() as f64).sqrt();
    assert!((std - 1.0).abs() < 0.03, "std {std}");
}

#[test]
fn same_seed_same_weights() {
    let a = SnnModel::lecun_init(&small_spec(11)).unwrap();
    let b = SnnModel::lecun_init(&small_spec(11)).unwrap();
    let c = SnnModel::lecun_init(&small_spec(12)).unwrap();
    assert_eq!(a.to_bytes(), b.to_bytes());
    assert_ne!(a.to_bytes(), c.to_bytes());
}

#[test]
fn projection_rows_have_unit_norm() {
    let m = SnnModel::lecun_init(&small_spec(2)).unwrap();
    let out = m.forward(&normal_matrix(20, 5, 4)).unwrap();
    for r in 0..20 {
        let norm: f64 = out.projection.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-10);
    }
    assert_eq!(out.trunk_out.shape(), (20, 8));
}

#[test]
fn inference_is_row_independent() {
    let m = SnnModel::lecun_init(&small_spec(5)).unwrap();
    let x = normal_matrix(10, 5, 6);
    let full = m.forward(&x).unwrap();
    for r in [0, 4, 9] {
        let single = m.forward(&x.select_rows(&[r])).unwrap();
        assert_eq!(single.mu[0].to_bits(), full.mu[r].to_bits());
        assert_eq!(single.sigma[0].to_bits(), full.sigma[r].to_bits());
    }
    let again = m.forward(&x).unwrap();
    assert_eq!(again.mu, full.mu);
}

#[test]
fn tape_forward_matches_plain_forward() {
    let m = SnnModel::lecun_init(&small_spec(8)).unwrap();
    let x = normal_matrix(7, 5, 9);
    let plain = m.forward_train(&x, &mut ChaCha8Rng::seed_from_u64(100)).unwrap();
    let mut tape = Tape::new();
    let heads = m.record(&mut tape, &x, Some(&mut ChaCha8Rng::seed_from_u64(100))).unwrap();
    assert_eq!(tape.value(heads.mu).as_slice(), &plain.mu[..]);
    assert_eq!(tape.value(heads.sigma).as_slice(), &plain.sigma[..]);
    assert_eq!(tape.value(heads.projection), &plain.projection);
    assert_eq!(heads.params.len(), m.params().len());
    // dropout is active in training mode
    let inference = m.forward(&x).unwrap();
    assert_ne!(inference.mu, plain.mu);
}

#[test]
fn input_width_mismatch_is_rejected() {
    let m = SnnModel::lecun_init(&small_spec(0)).unwrap();
    assert!(matches!(m.forward(&Matrix::zeros(2, 4)), Err(Error::Shape { .. })));
}

#[test]
fn self_normalization_at_moderate_width() {
    let spec = SnnSpec {
        input_dim: 64,
        hidden_dim: 256,
        trunk_layers: 12,
        upper_layers: 6,
        projection_dim: 16,
        alpha_dropout_rate: 0.0003,
        seed: 1,
    };
    let m = SnnModel::lecun_init(&spec).unwrap();
    let (_, trace) = m.forward_traced(&normal_matrix(256, 64, 2)).unwrap();
    assert_eq!(trace.len(), 18);
    for (layer, a) in trace.iter().enumerate() {
        let n = a.len() as f64;
        let mean = a.sum() / n;
        let var = a.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!(mean.abs() < 0.1, "layer {layer}: mean {mean}");
        assert!((0.8..=1.25).contains(&var), "layer {layer}: var {var}");
    }
}

#[test]
fn bytes_round_trip() {
    let m = SnnModel::lecun_init(&small_spec(4)).unwrap();
    let back = SnnModel::from_bytes(&m.to_bytes()).unwrap();
    assert_eq!(back, m);
    let bytes = m.to_bytes();
    assert!(SnnModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
}

proptest! {
    #[test]
    fn sigma_is_positive_for_any_parameters(seed in 0u64..500, scale in 1e-3f64..1e3, shift in -1e4f64..1e4) {
        let mut m = SnnModel::lecun_init(&small_spec(seed)).unwrap();
        for p in m.params_mut() {
            for v in p.as_mut_slice() {
                *v = *v * scale + shift * 1e-3;
            }
        }
        let x = normal_matrix(4, 5, seed).scale(scale);
        let out = m.forward(&x).unwrap();
        prop_assert!(out.sigma.iter().all(|&s| s > 0.0));
    }
}
