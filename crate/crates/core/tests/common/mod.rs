//! Fixtures and independent reference implementations shared by the
//! integration tests.

#![allow(dead_code)]

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shapegraph::data::{Delimiter, Label, TimeSeries, UcrOptions};
use shapegraph::{load_ucr, Dataset};

pub fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn synthetic_train() -> PathBuf {
    repo_root().join("data/synthetic/train.tsv")
}

pub fn synthetic_test() -> PathBuf {
    repo_root().join("data/synthetic/test.tsv")
}

pub fn load_synthetic(l: usize) -> Dataset<f64> {
    let opts = UcrOptions {
        delimiter: Delimiter::Tab,
        label_map: None,
        segment_length: Some(l),
    };
    load_ucr(synthetic_train(), &opts).unwrap()
}

/// Every valid alignment of lengths `l1` x `l2` as index pairs.
pub fn all_alignments(l1: usize, l2: usize) -> Vec<Vec<(usize, usize)>> {
    fn go(i: usize, j: usize, l1: usize, l2: usize, path: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        path.push((i, j));
        if i + 1 == l1 && j + 1 == l2 {
            out.push(path.clone());
        } else {
            if i + 1 < l1 && j + 1 < l2 {
                go(i + 1, j + 1, l1, l2, path, out);
            }
            if i + 1 < l1 {
                go(i + 1, j, l1, l2, path, out);
            }
            if j + 1 < l2 {
                go(i, j + 1, l1, l2, path, out);
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    go(0, 0, l1, l2, &mut Vec::new(), &mut out);
    out
}

fn path_cost(a: &[f64], b: &[f64], path: &[(usize, usize)]) -> f64 {
    path.iter().map(|&(i, j)| (a[i] - b[j]).powi(2)).sum()
}

/// Exact DTW by enumeration: square root of the cheapest alignment cost.
pub fn enumerated_dtw(a: &[f64], b: &[f64]) -> f64 {
    all_alignments(a.len(), b.len())
        .iter()
        .map(|p| path_cost(a, b, p))
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

/// Weighted distance along the cheapest unweighted alignment.
pub fn enumerated_weighted(v: &[f64], w: &[f64], s: &[f64]) -> f64 {
    let paths = all_alignments(v.len(), s.len());
    let best = paths
        .iter()
        .min_by(|p, q| path_cost(v, s, p).partial_cmp(&path_cost(v, s, q)).unwrap())
        .unwrap();
    best.iter().map(|&(i, j)| w[i] * (v[i] - s[j]).powi(2)).sum::<f64>().sqrt()
}

pub fn normalize(x: &[f64]) -> Vec<f64> {
    let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        x.iter().map(|v| (v - lo) / (hi - lo)).collect()
    } else {
        vec![0.0; x.len()]
    }
}

pub struct OracleSettings {
    pub temperature: f64,
    pub lambda: f64,
    pub epsilon: f64,
}

/// Penalized loss written out directly: softmin over per-segment scaled
/// distances, Gaussian fits per class, `-KL(pos || neg)` plus L2 penalties.
pub fn oracle_loss(v: &[f64], w: &[f64], u: &[f64], raw: &[(Vec<f64>, bool)], l: usize, s: &OracleSettings) -> f64 {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (x, is_pos) in raw {
        let x = normalize(x);
        let m = x.len() / l;
        let d: Vec<f64> = (0..m).map(|k| u[k] * enumerated_weighted(v, w, &x[k * l..(k + 1) * l])).collect();
        let num: f64 = d.iter().map(|&dk| dk * (-dk / s.temperature).exp()).sum();
        let den: f64 = d.iter().map(|&dk| (-dk / s.temperature).exp()).sum();
        if *is_pos {
            pos.push(num / den);
        } else {
            neg.push(num / den);
        }
    }
    let fit = |xs: &[f64]| {
        let mu = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64;
        (mu, var.max(1e-4))
    };
    let (mp, vp) = fit(&pos);
    let (mn, vn) = fit(&neg);
    let kl = 0.5 * (vn / vp).ln() + (vp + (mp - mn).powi(2)) / (2.0 * vn) - 0.5;
    let norm = |z: &[f64]| z.iter().map(|x| x * x).sum::<f64>().sqrt();
    -kl + s.lambda * norm(w) + s.epsilon * norm(u)
}

pub fn labeled(x: Vec<f64>, pos: bool) -> TimeSeries<f64> {
    TimeSeries::new(x, Some(if pos { Label::Positive } else { Label::Negative })).unwrap()
}

/// Three positive and three negative series of length 20 (`l = 5`, `m = 4`).
pub fn six_series_raw() -> Vec<(Vec<f64>, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    (0..6)
        .map(|i| {
            let pos = i % 2 == 0;
            let x = (0..20)
                .map(|t| {
                    let bump = if pos && (5..10).contains(&t) { 0.8 } else { 0.0 };
                    (t as f64 * 0.4).sin() * 0.5 + bump + rng.gen_range(-0.2..0.2)
                })
                .collect();
            (x, pos)
        })
        .collect()
}

pub fn six_series() -> Dataset<f64> {
    let series = six_series_raw().into_iter().map(|(x, p)| labeled(x, p)).collect();
    Dataset::new(series, 5).unwrap()
}

/// Earthquake-shaped data: length 512, one positive in four, positives carry
/// short high bursts.
pub fn eqs_like(n: usize, seed: u64) -> Dataset<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let series = (0..n)
        .map(|i| {
            let pos = i % 4 == 0;
            let mut x: Vec<f64> = (0..512).map(|_| rng.gen_range(0.0..0.3)).collect();
            let bursts = if pos { 3 } else { 1 };
            for _ in 0..bursts {
                let c = rng.gen_range(0..500);
                let h = if pos { rng.gen_range(2.0..4.0) } else { rng.gen_range(0.5..1.5) };
                for t in c..(c + 8).min(512) {
                    x[t] += h;
                }
            }
            labeled(x, pos)
        })
        .collect();
    Dataset::new(series, 24).unwrap()
}

/// Five positive and five negative series of length 15 (`l = 5`, `m = 3`).
pub fn ten_series_raw() -> Vec<(Vec<f64>, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    (0..10)
        .map(|i| {
            let pos = i < 5;
            let x = (0..15)
                .map(|t| {
                    let ramp = if pos { t as f64 / 15.0 } else { 1.0 - t as f64 / 15.0 };
                    ramp + rng.gen_range(-0.3..0.3)
                })
                .collect();
            (x, pos)
        })
        .collect()
}

pub fn ten_series() -> Dataset<f64> {
    let series = ten_series_raw().into_iter().map(|(x, p)| labeled(x, p)).collect();
    Dataset::new(series, 5).unwrap()
}
