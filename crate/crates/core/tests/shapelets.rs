mod common;

use common::*;
use shapegraph::shapelet::{
    candidate_loss, extract_static_shapelets, generate_candidates, static_loss, train_timing_factors, KlDirection,
};
use shapegraph::warp::{weighted_distance, WarpConfig};
use shapegraph::{extract_shapelets, TrainConfig};

fn exact_cfg(lambda: f64, epsilon: f64) -> TrainConfig {
    TrainConfig {
        lambda,
        epsilon,
        warp: WarpConfig::exact(),
        ..TrainConfig::default()
    }
}

fn fixture_factors() -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let v = vec![0.1, 0.3, 0.5, 0.7, 0.9];
    let w = vec![1.0, 0.5, 2.0, 1.5, 0.8];
    let u = vec![0.9, 1.2, 0.7];
    (v, w, u)
}

#[test]
fn golden_loss_matches_direct_computation() {
    let (v, w, u) = fixture_factors();
    let ds = ten_series();
    let cfg = exact_cfg(0.5, 0.1);
    let got = candidate_loss(&v, &w, &u, &ds, &cfg).unwrap();
    let settings = OracleSettings {
        temperature: 1.0,
        lambda: 0.5,
        epsilon: 0.1,
    };
    let want = oracle_loss(&v, &w, &u, &ten_series_raw(), 5, &settings);
    assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    assert!((got - GOLDEN_LOSS).abs() < 1e-9, "{got} vs frozen {GOLDEN_LOSS}");
}

const GOLDEN_LOSS: f64 = -34.314_090_942_695_66;

#[test]
fn weighted_distance_matches_enumeration() {
    let (v, w, _) = fixture_factors();
    for (x, _) in ten_series_raw() {
        let x = normalize(&x);
        for seg in x.chunks(5) {
            let got = weighted_distance(&v, &w, seg, &WarpConfig::exact()).unwrap();
            let want = enumerated_weighted(&v, &w, seg);
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }
}

#[test]
fn separated_classes_give_negative_loss() {
    let ds = ten_series();
    let cfg = exact_cfg(0.0, 0.0);
    let v = normalize(&ten_series_raw()[0].0)[0..5].to_vec();
    let loss = candidate_loss(&v, &[1.0; 5], &[1.0; 3], &ds, &cfg).unwrap();
    assert!(loss < 0.0, "loss {loss}");
}

#[test]
fn large_penalties_shrink_factors() {
    let ds = six_series();
    let v = normalize(&six_series_raw()[0].0)[5..10].to_vec();
    let mut cfg = exact_cfg(1e6, 1e6);
    cfg.epochs = 200;
    cfg.learning_rate = 0.05;
    let out = train_timing_factors(&v, &ds, &cfg, 3).unwrap();
    let s = &out.shapelet;
    let norm = |z: &[f64]| z.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(norm(&s.w) < 0.1 && norm(&s.u) < 0.1, "w {:?} u {:?}", s.w, s.u);
    assert!(s.w.iter().chain(&s.u).all(|&x| x >= 0.0));
}

#[test]
fn training_lowers_the_loss() {
    let ds = six_series();
    let mut cfg = exact_cfg(0.01, 0.01);
    cfg.epochs = 30;
    for start in [0usize, 5, 10] {
        let v = normalize(&six_series_raw()[0].0)[start..start + 5].to_vec();
        let out = train_timing_factors(&v, &ds, &cfg, 11).unwrap();
        assert!(
            out.shapelet.loss < out.initial_loss,
            "start {start}: {} -> {}",
            out.initial_loss,
            out.shapelet.loss
        );
    }
}

#[test]
fn full_pool_is_returned_in_loss_order() {
    let ds = six_series();
    let mut cfg = exact_cfg(0.1, 0.1);
    let available = ds.len() * ds.num_segments;
    cfg.num_shapelets = available;
    cfg.pool_factor = 1;
    cfg.epochs = 3;
    let shapelets = extract_shapelets(&ds, &cfg).unwrap();
    assert_eq!(shapelets.len(), available);
    for (i, s) in shapelets.iter().enumerate() {
        assert_eq!(s.rank, i + 1);
        assert_eq!(s.w.len(), 5);
        assert_eq!(s.u.len(), 4);
        assert!(s.w.iter().chain(&s.u).all(|&x| x >= 0.0));
    }
    assert!(shapelets.windows(2).all(|p| p[0].loss <= p[1].loss));
}

#[test]
fn static_shapelets_have_unit_factors() {
    let ds = six_series();
    let mut cfg = exact_cfg(0.0, 0.0);
    cfg.num_shapelets = 5;
    cfg.pool_factor = 2;
    let shapelets = extract_static_shapelets(&ds, &cfg).unwrap();
    assert_eq!(shapelets.len(), 5);
    for s in &shapelets {
        assert!(s.w.iter().chain(&s.u).all(|&x| x == 1.0));
        let direct = static_loss(&s.values, &ds, &cfg).unwrap();
        assert_eq!(s.loss, direct);
    }
}

#[test]
fn timing_factors_do_not_hurt_without_penalties() {
    let ds = six_series();
    let mut cfg = exact_cfg(0.0, 0.0);
    cfg.epochs = 30;
    let pool = generate_candidates(&ds, 6).unwrap();
    for c in &pool.candidates {
        let fixed = candidate_loss(&c.values, &[1.0; 5], &[1.0; 4], &ds, &cfg).unwrap();
        let trained = train_timing_factors(&c.values, &ds, &cfg, 5).unwrap().shapelet.loss;
        assert!(trained <= fixed + 1e-9, "{trained} > {fixed}");
    }
}

#[test]
fn low_temperature_approaches_hard_minimum() {
    let (v, w, u) = fixture_factors();
    let ds = ten_series();
    let hard = |x: &[f64]| {
        let x = normalize(x);
        (0..3)
            .map(|k| u[k] * enumerated_weighted(&v, &w, &x[k * 5..k * 5 + 5]))
            .fold(f64::INFINITY, f64::min)
    };
    let raw = ten_series_raw();
    let pos: Vec<f64> = raw.iter().filter(|r| r.1).map(|r| hard(&r.0)).collect();
    let neg: Vec<f64> = raw.iter().filter(|r| !r.1).map(|r| hard(&r.0)).collect();
    let fit = |xs: &[f64]| {
        let mu = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64;
        (mu, var.max(1e-4))
    };
    let ((mp, vp), (mn, vn)) = (fit(&pos), fit(&neg));
    let hard_loss = -(0.5 * (vn / vp).ln() + (vp + (mp - mn).powi(2)) / (2.0 * vn) - 0.5);

    let gap = |t: f64| {
        let mut cfg = exact_cfg(0.0, 0.0);
        cfg.temperature = t;
        (candidate_loss(&v, &w, &u, &ds, &cfg).unwrap() - hard_loss).abs()
    };
    assert!(gap(1e-4) < gap(1.0));
    assert!(gap(1e-4) < 1e-6, "gap {}", gap(1e-4));
}

#[test]
fn kl_direction_is_configurable() {
    let (v, w, u) = fixture_factors();
    let ds = ten_series();
    let mut cfg = exact_cfg(0.0, 0.0);
    let a = candidate_loss(&v, &w, &u, &ds, &cfg).unwrap();
    cfg.kl_direction = KlDirection::NegPos;
    let b = candidate_loss(&v, &w, &u, &ds, &cfg).unwrap();
    assert!(a < 0.0 && b < 0.0);
    assert_ne!(a, b);
}

#[test]
fn extraction_is_deterministic_across_workers() {
    let ds = six_series();
    let mut cfg = exact_cfg(0.1, 0.1);
    cfg.num_shapelets = 4;
    cfg.pool_factor = 3;
    cfg.epochs = 5;
    cfg.seed = 42;
    cfg.workers = Some(1);
    let a = extract_shapelets(&ds, &cfg).unwrap();
    cfg.workers = Some(4);
    let b = extract_shapelets(&ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(generate_candidates(&ds, 10).unwrap().candidates, generate_candidates(&ds, 10).unwrap().candidates);
}
