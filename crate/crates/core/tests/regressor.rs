mod common;

use onestep_vqa::regressor::{grid_search, train_rows, HyperGrid};
use onestep_vqa::{predict, train, FeatureVector, Hyperparams, TrainedModel, VariantConfig, VqaError};
use rand::seq::SliceRandom;
use rand::Rng;

fn sine_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let mut r = common::rng(seed);
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();
    let y = x
        .iter()
        .map(|v| 50.0 + 30.0 * (3.0 * v[0]).sin() + 10.0 * v[1])
        .collect();
    (x, y)
}

fn hp(cost: f64, gamma: f64) -> Hyperparams {
    Hyperparams {
        cost,
        gamma,
        epsilon: 0.1,
    }
}

#[test]
fn round_trip_predictions_are_bit_identical() {
    let (x, y) = sine_data(60, 1);
    let model = train_rows(&x, &y, hp(32.0, 1.0), None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    model.save(&path).unwrap();
    let back = TrainedModel::load(&path).unwrap();
    assert_eq!(back, model);
    let mut r = common::rng(2);
    for _ in 0..100 {
        let probe = vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)];
        let (a, b) = (
            model.predict_values(&probe).unwrap(),
            back.predict_values(&probe).unwrap(),
        );
        assert_eq!(a.to_bits(), b.to_bits());
    }
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"version\": \"onestep-vqa-svr/1\""));
}

#[test]
fn row_order_does_not_change_the_solution() {
    let (x, y) = sine_data(80, 3);
    let (probe, _) = sine_data(50, 4);
    let base = train_rows(&x, &y, hp(16.0, 2.0), None).unwrap();
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut r = common::rng(5);
    for _ in 0..5 {
        order.shuffle(&mut r);
        let px: Vec<_> = order.iter().map(|&i| x[i].clone()).collect();
        let py: Vec<_> = order.iter().map(|&i| y[i]).collect();
        let m = train_rows(&px, &py, hp(16.0, 2.0), None).unwrap();
        for p in &probe {
            let d = (m.predict_values(p).unwrap() - base.predict_values(p).unwrap()).abs();
            assert!(d < 1e-6, "difference {d}");
        }
    }
}

#[test]
fn training_is_deterministic_and_respects_the_box() {
    let (x, y) = sine_data(70, 6);
    let a = train_rows(&x, &y, hp(4.0, 1.0), None).unwrap();
    let b = train_rows(&x, &y, hp(4.0, 1.0), None).unwrap();
    assert_eq!(a, b);
    assert!(!a.support_vectors.is_empty());
    assert!(a.dual_coefficients.iter().all(|c| c.abs() <= 4.0));
}

#[test]
fn grid_search_recovers_a_planted_gamma() {
    // a fast oscillation: small gammas underfit, huge gammas memorize
    let x: Vec<Vec<f64>> = (0..90).map(|i| vec![-1.0 + 2.0 * (i as f64 + 0.5) / 90.0]).collect();
    let y: Vec<f64> = x
        .iter()
        .map(|v| 50.0 + 40.0 * (2.5 * std::f64::consts::PI * v[0]).sin())
        .collect();
    let contents: Vec<String> = (0..90).map(|i| format!("c{}", i / 3)).collect();
    let grid = HyperGrid {
        costs: vec![64.0],
        gammas: vec![2f64.powi(-8), 8.0, 2f64.powi(14)],
        epsilon: 0.1,
    };
    let result = grid_search(&x, &y, &contents, &grid, 5).unwrap();
    assert_eq!(result.best.gamma, 8.0, "{:?}", result.points);
}

#[test]
fn feature_vector_api_checks_the_variant() {
    let mut r = common::rng(7);
    let cfg = VariantConfig::base();
    let rows: Vec<FeatureVector> = (0..12)
        .map(|_| FeatureVector::new((0..36).map(|_| r.random_range(0.0..3.0)).collect(), cfg).unwrap())
        .collect();
    let scores: Vec<f64> = rows.iter().map(|f| 20.0 + 10.0 * f.values[0]).collect();
    let model = train(&rows, &scores, hp(8.0, 1.0 / 36.0)).unwrap();
    assert_eq!(model.variant, Some(cfg));
    assert!(predict(&model, &rows[0]).is_ok());
    let other = FeatureVector::new(vec![1.0; 20], VariantConfig::of(onestep_vqa::Variant::I)).unwrap();
    assert!(matches!(predict(&model, &other), Err(VqaError::Contract(_))));
}

#[test]
fn constant_columns_are_tolerated() {
    let (mut x, y) = sine_data(30, 8);
    for row in &mut x {
        row.push(7.0);
    }
    let m = train_rows(&x, &y, hp(8.0, 1.0), None).unwrap();
    let mut probe = x[0].clone();
    assert!(m.predict_values(&probe).unwrap().is_finite());
    probe[2] = 123.0;
    assert!(m.predict_values(&probe).unwrap().is_finite());
}
