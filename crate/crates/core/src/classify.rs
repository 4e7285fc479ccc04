//! Gradient-boosted trees on logistic loss, classification metrics, and the
//! nested cross-validation harness.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{argument, Error, Result};
use crate::scalar::Scalar;
use crate::shapelet::run_in_pool;

pub const REPORT_SCHEMA: &str = "shapegraph.report/1.0";

/// Splits must improve the second-order objective by more than this.
pub const MIN_GAIN: f64 = 1e-12;
const MIN_HESSIAN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub max_depth: usize,
    pub learning_rate: f64,
    /// Multiplier on the loss of positive examples.
    pub class_weight: f64,
    pub num_rounds: usize,
    /// Fraction of rows drawn (without replacement, per row) for each tree.
    pub subsample: f64,
    /// Patience in rounds when a validation set is supplied.
    pub early_stopping: Option<usize>,
    pub seed: u64,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            max_depth: 6,
            learning_rate: 0.1,
            class_weight: 1.0,
            num_rounds: 100,
            subsample: 1.0,
            early_stopping: Some(10),
            seed: 0,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::Config {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.max_depth == 0 {
            return bad("max_depth", "must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate", "must lie in (0, 1]");
        }
        if !(self.class_weight >= 1.0) || !self.class_weight.is_finite() {
            return bad("class_weight", "must be finite and at least 1");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample", "must lie in (0, 1]");
        }
        if self.early_stopping == Some(0) {
            return bad("early_stopping", "patience must be at least 1");
        }
        Ok(())
    }
}

/// Depth x learning rate x class weight grid, other fields taken from `base`.
pub fn full_grid(base: &BoostConfig) -> Vec<BoostConfig> {
    let mut grid = Vec::with_capacity(40);
    for max_depth in [1, 3, 5, 7, 9] {
        for learning_rate in [0.1, 0.2] {
            for class_weight in [1.0, 10.0, 50.0, 100.0] {
                grid.push(BoostConfig {
                    max_depth,
                    learning_rate,
                    class_weight,
                    ..base.clone()
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Rows with `x[feature] <= threshold` go left. Node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split { feature, threshold, left, right } => {
                    i = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub num_features: usize,
    /// Log-odds of the class-weighted positive prior.
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl GbtModel {
    pub fn prior(&self) -> f64 {
        sigmoid(self.base_score)
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.base_score + self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }

    pub fn predict_proba<T: Scalar>(&self, features: &[Vec<T>]) -> Result<Vec<f64>> {
        let rows = to_rows(features, Some(self.num_features))?;
        Ok(rows.iter().map(|r| sigmoid(self.margin(r))).collect())
    }

    /// Labels at the 0.5 probability threshold.
    pub fn predict<T: Scalar>(&self, features: &[Vec<T>]) -> Result<Vec<Label>> {
        Ok(self
            .predict_proba(features)?
            .into_iter()
            .map(|p| if p >= 0.5 { Label::Positive } else { Label::Negative })
            .collect())
    }
}

fn to_rows<T: Scalar>(features: &[Vec<T>], width: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let expected = match width {
        Some(w) => w,
        None => features
            .first()
            .map(Vec::len)
            .ok_or_else(|| argument("feature matrix has no rows"))?,
    };
    features
        .iter()
        .enumerate()
        .map(|(i, row)| {
            if row.len() != expected {
                return Err(Error::Dimension(format!(
                    "feature row {i} has {} columns, expected {expected}",
                    row.len()
                )));
            }
            row.iter()
                .map(|&x| {
                    let x = x.as_f64();
                    if x.is_finite() {
                        Ok(x)
                    } else {
                        Err(argument(format!("feature row {i} contains a non-finite value")))
                    }
                })
                .collect()
        })
        .collect()
}

fn check_labels(labels: &[Label], rows: usize) -> Result<()> {
    if labels.len() != rows {
        return Err(Error::Dimension(format!("{} labels for {rows} feature rows", labels.len())));
    }
    let pos = labels.iter().filter(|l| l.is_positive()).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::TrainingData("training labels contain a single class".into()));
    }
    Ok(())
}

fn log_loss(margins: &[f64], labels: &[Label]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .map(|(&m, l)| {
            // log(1 + e^-m) for positives, log(1 + e^m) for negatives, computed stably
            let z = if l.is_positive() { -m } else { m };
            z.max(0.0) + (-z.abs()).exp().ln_1p()
        })
        .sum();
    total / margins.len() as f64
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    sorted: &'a [Vec<usize>],
    max_depth: usize,
    learning_rate: f64,
}

impl Grower<'_> {
    fn leaf(&self, g: f64, h: f64) -> Node {
        let value = if h > MIN_HESSIAN { -self.learning_rate * g / h } else { 0.0 };
        Node::Leaf { value }
    }

    /// Best split per frontier node for one feature as `(gain, threshold)`.
    fn scan(&self, f: usize, node_of: &[Option<usize>], totals: &[(f64, f64)], grad: &[(f64, f64)]) -> Vec<Option<(f64, f64)>> {
        let n = totals.len();
        let mut left = vec![(0.0f64, 0.0f64); n];
        let mut last = vec![f64::NAN; n];
        let mut best: Vec<Option<(f64, f64)>> = vec![None; n];
        let col = &self.columns[f];
        for &r in &self.sorted[f] {
            let Some(a) = node_of[r] else { continue };
            let v = col[r];
            if v > last[a] {
                let (gl, hl) = left[a];
                let (g, h) = totals[a];
                let (gr, hr) = (g - gl, h - hl);
                if hl > MIN_HESSIAN && hr > MIN_HESSIAN {
                    let gain = gl * gl / hl + gr * gr / hr - g * g / h;
                    if best[a].map_or(true, |(b, _)| gain > b) {
                        let lo = last[a];
                        let mid = lo + (v - lo) / 2.0;
                        best[a] = Some((gain, if mid < v { mid } else { lo }));
                    }
                }
            }
            left[a].0 += grad[r].0;
            left[a].1 += grad[r].1;
            last[a] = v;
        }
        best
    }

    fn grow(&self, grad: &[(f64, f64)], in_sample: &[bool]) -> Tree {
        let n = grad.len();
        let mut node_of: Vec<Option<usize>> = in_sample.iter().map(|&s| s.then_some(0)).collect();
        let root = (0..n).filter(|&r| in_sample[r]).fold((0.0, 0.0), |(g, h), r| (g + grad[r].0, h + grad[r].1));
        let mut nodes = vec![self.leaf(root.0, root.1)];
        // frontier entry: (node id, gradient totals)
        let mut frontier = vec![(0usize, root)];
        for _ in 0..self.max_depth {
            if frontier.is_empty() {
                break;
            }
            let totals: Vec<(f64, f64)> = frontier.iter().map(|&(_, t)| t).collect();
            let per_feature: Vec<Vec<Option<(f64, f64)>>> = (0..self.columns.len())
                .into_par_iter()
                .map(|f| self.scan(f, &node_of, &totals, grad))
                .collect();

            let mut splits: Vec<Option<(usize, f64)>> = vec![None; frontier.len()];
            for (a, split) in splits.iter_mut().enumerate() {
                let mut best_gain = MIN_GAIN;
                for (f, cands) in per_feature.iter().enumerate() {
                    if let Some((gain, thr)) = cands[a] {
                        if gain > best_gain {
                            best_gain = gain;
                            *split = Some((f, thr));
                        }
                    }
                }
            }

            let mut child_slot: Vec<Option<(usize, usize)>> = vec![None; frontier.len()];
            let mut next = Vec::new();
            let mut child_totals: Vec<(f64, f64)> = Vec::new();
            for (a, split) in splits.iter().enumerate() {
                if let Some((feature, threshold)) = *split {
                    let (left, right) = (nodes.len(), nodes.len() + 1);
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes.push(Node::Leaf { value: 0.0 });
                    nodes[frontier[a].0] = Node::Split { feature, threshold, left, right };
                    child_slot[a] = Some((next.len(), next.len() + 1));
                    next.push(left);
                    next.push(right);
                    child_totals.push((0.0, 0.0));
                    child_totals.push((0.0, 0.0));
                }
            }
            for r in 0..n {
                let Some(a) = node_of[r] else { continue };
                node_of[r] = match (splits[a], child_slot[a]) {
                    (Some((f, thr)), Some((l, rt))) => {
                        let c = if self.columns[f][r] <= thr { l } else { rt };
                        child_totals[c].0 += grad[r].0;
                        child_totals[c].1 += grad[r].1;
                        Some(c)
                    }
                    _ => None,
                };
            }
            frontier = next.into_iter().zip(child_totals).collect();
            for &(id, (g, h)) in &frontier {
                nodes[id] = self.leaf(g, h);
            }
        }
        Tree { nodes }
    }
}

/// Train on the full data for `cfg.num_rounds` rounds.
pub fn train_gbt<T: Scalar>(features: &[Vec<T>], labels: &[Label], cfg: &BoostConfig) -> Result<GbtModel> {
    fit(features, labels, cfg, None)
}

/// Train with early stopping on a held-out set; the returned ensemble is
/// truncated to the round with the lowest validation log loss.
pub fn train_gbt_early_stopping<T: Scalar>(
    features: &[Vec<T>],
    labels: &[Label],
    valid_features: &[Vec<T>],
    valid_labels: &[Label],
    cfg: &BoostConfig,
) -> Result<GbtModel> {
    fit(features, labels, cfg, Some((valid_features, valid_labels)))
}

fn fit<T: Scalar>(
    features: &[Vec<T>],
    labels: &[Label],
    cfg: &BoostConfig,
    valid: Option<(&[Vec<T>], &[Label])>,
) -> Result<GbtModel> {
    cfg.validate()?;
    let rows = to_rows(features, None)?;
    check_labels(labels, rows.len())?;
    let width = rows[0].len();
    let n = rows.len();
    let columns: Vec<Vec<f64>> = (0..width).map(|f| rows.iter().map(|r| r[f]).collect()).collect();
    let sorted: Vec<Vec<usize>> = columns
        .iter()
        .map(|col| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            idx
        })
        .collect();

    let y: Vec<f64> = labels.iter().map(|l| if l.is_positive() { 1.0 } else { 0.0 }).collect();
    let weight: Vec<f64> = y.iter().map(|&y| if y > 0.0 { cfg.class_weight } else { 1.0 }).collect();
    let pos_w: f64 = y.iter().zip(&weight).map(|(y, w)| y * w).sum();
    let neg_w: f64 = y.iter().zip(&weight).map(|(y, w)| (1.0 - y) * w).sum();
    let base_score = (pos_w / neg_w).ln();

    let valid_rows = match valid {
        Some((vx, vy)) => {
            let vr = to_rows(vx, Some(width))?;
            if vy.len() != vr.len() || vr.is_empty() {
                return Err(Error::Dimension(format!("{} validation labels for {} rows", vy.len(), vr.len())));
            }
            Some((vr, vy))
        }
        None => None,
    };
    let patience = valid_rows.as_ref().and(cfg.early_stopping);

    let grower = Grower {
        columns: &columns,
        sorted: &sorted,
        max_depth: cfg.max_depth,
        learning_rate: cfg.learning_rate,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut margin = vec![base_score; n];
    let mut valid_margin: Vec<f64> = valid_rows.as_ref().map_or(Vec::new(), |(vr, _)| vec![base_score; vr.len()]);
    let mut best = (f64::INFINITY, 0usize);
    if let Some((_, vy)) = &valid_rows {
        best = (log_loss(&valid_margin, vy), 0);
    }
    let mut trees = Vec::with_capacity(cfg.num_rounds);
    for round in 0..cfg.num_rounds {
        let grad: Vec<(f64, f64)> = (0..n)
            .map(|r| {
                let p = sigmoid(margin[r]);
                (weight[r] * (p - y[r]), weight[r] * p * (1.0 - p))
            })
            .collect();
        let in_sample: Vec<bool> = if cfg.subsample < 1.0 {
            (0..n).map(|_| rng.gen::<f64>() < cfg.subsample).collect()
        } else {
            vec![true; n]
        };
        let tree = grower.grow(&grad, &in_sample);
        for (m, row) in margin.iter_mut().zip(&rows) {
            *m += tree.predict(row);
        }
        trees.push(tree);
        if let (Some(patience), Some((vr, vy))) = (patience, &valid_rows) {
            let tree = trees.last().unwrap();
            for (m, row) in valid_margin.iter_mut().zip(vr) {
                *m += tree.predict(row);
            }
            let loss = log_loss(&valid_margin, vy);
            if loss < best.0 {
                best = (loss, round + 1);
            } else if round + 1 - best.1 >= patience {
                break;
            }
        }
    }
    if patience.is_some() {
        trees.truncate(best.1);
    }
    Ok(GbtModel {
        num_features: width,
        base_score,
        trees,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_predictions(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Dimension(format!("{} predictions for {} labels", predicted.len(), truth.len())));
        }
        let mut c = Self::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t.is_positive(), p.is_positive()) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self {
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            tn: self.tn + other.tn,
            fn_: self.fn_ + other.fn_,
        }
    }

    pub fn metrics(&self) -> Metrics {
        let ratio = |a: usize, b: usize| if b > 0 { a as f64 / b as f64 } else { 0.0 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Metrics {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    F1,
    Accuracy,
}

impl SelectionMetric {
    /// F1 for imbalanced data (positive ratio below 0.35), accuracy otherwise.
    pub fn for_positive_ratio(ratio: f64) -> Self {
        if ratio < 0.35 {
            Self::F1
        } else {
            Self::Accuracy
        }
    }

    pub fn score(self, c: &Confusion) -> f64 {
        let m = c.metrics();
        match self {
            Self::F1 => m.f1,
            Self::Accuracy => m.accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub config: BoostConfig,
    /// Inner cross-validation score of the chosen config; absent when the
    /// grid has a single entry.
    pub inner_score: Option<f64>,
    pub confusion: Confusion,
    pub metrics: Metrics,
}

/// Test metrics over the pooled confusion counts of all folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub version: String,
    pub selection: SelectionMetric,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    pub folds: Vec<FoldReport>,
}

impl EvalReport {
    pub fn from_folds(selection: SelectionMetric, folds: Vec<FoldReport>) -> Self {
        let confusion = folds.iter().fold(Confusion::default(), |acc, f| acc.merge(&f.confusion));
        let m = confusion.metrics();
        Self {
            version: REPORT_SCHEMA.to_string(),
            selection,
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            confusion,
            folds,
        }
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{:<6} {:>6} {:>9} {:>9} {:>9} {:>9}  config", "fold", "n", "accuracy", "precision", "recall", "f1").unwrap();
        for f in &self.folds {
            let c = &f.config;
            writeln!(
                s,
                "{:<6} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}  depth={} lr={} cw={}",
                f.fold, f.test_size, f.metrics.accuracy, f.metrics.precision, f.metrics.recall, f.metrics.f1, c.max_depth, c.learning_rate, c.class_weight
            )
            .unwrap();
        }
        writeln!(
            s,
            "{:<6} {:>6} {:>9.4} {:>9.4} {:>9.4} {:>9.4}",
            "all",
            self.confusion.total(),
            self.accuracy,
            self.precision,
            self.recall,
            self.f1
        )
        .unwrap();
        let c = &self.confusion;
        writeln!(s, "confusion: tp={} fp={} tn={} fn={}", c.tp, c.fp, c.tn, c.fn_).unwrap();
        s
    }
}

/// Stratified k-fold partition: each class is shuffled and dealt round-robin,
/// so per-fold class counts differ by at most one.
pub fn stratified_folds(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(argument(format!("need at least 2 folds, got {k}")));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    if pos.len() < k || neg.len() < k {
        return Err(Error::Stratification(format!(
            "{k} folds need at least {k} examples per class, have {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![Vec::new(); k];
    for (i, &idx) in pos.iter().chain(&neg).enumerate() {
        folds[i % k].push(idx);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub outer_folds: usize,
    pub inner_folds: usize,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            outer_folds: 5,
            inner_folds: 5,
            seed: 0,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub config: BoostConfig,
    pub score: Option<f64>,
}

fn pick<T: Copy>(xs: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| xs[i]).collect()
}

fn pick_rows<T: Clone>(xs: &[Vec<T>], idx: &[usize]) -> Vec<Vec<T>> {
    idx.iter().map(|&i| xs[i].clone()).collect()
}

fn complement(n: usize, fold: &[usize]) -> Vec<usize> {
    let mut in_fold = vec![false; n];
    fold.iter().for_each(|&i| in_fold[i] = true);
    (0..n).filter(|&i| !in_fold[i]).collect()
}

/// Choose a config from `grid` by inner stratified cross-validation on the
/// training data. Candidates are scored on pooled inner-fold confusion counts;
/// ties keep the earlier grid entry.
pub fn select_config<T: Scalar>(features: &[Vec<T>], labels: &[Label], grid: &[BoostConfig], cv: &CvConfig) -> Result<Selected> {
    match grid {
        [] => Err(argument("hyperparameter grid is empty")),
        [only] => Ok(Selected {
            config: only.clone(),
            score: None,
        }),
        _ => {
            let ratio = labels.iter().filter(|l| l.is_positive()).count() as f64 / labels.len() as f64;
            let metric = SelectionMetric::for_positive_ratio(ratio);
            let folds = stratified_folds(labels, cv.inner_folds, cv.seed.wrapping_add(1))?;
            let jobs: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
            let results: Vec<Result<Confusion>> = run_in_pool(cv.workers, || {
                jobs.par_iter()
                    .map(|&(c, f)| {
                        let valid = &folds[f];
                        let train = complement(labels.len(), valid);
                        let (tx, ty) = (pick_rows(features, &train), pick(labels, &train));
                        let (vx, vy) = (pick_rows(features, valid), pick(labels, valid));
                        let model = train_gbt_early_stopping(&tx, &ty, &vx, &vy, &grid[c])?;
                        Confusion::from_predictions(&vy, &model.predict(&vx)?)
                    })
                    .collect()
            })?;
            let mut pooled = vec![Confusion::default(); grid.len()];
            for (&(c, _), r) in jobs.iter().zip(results) {
                pooled[c] = pooled[c].merge(&r?);
            }
            let mut best = 0;
            let scores: Vec<f64> = pooled.iter().map(|c| metric.score(c)).collect();
            for (c, &s) in scores.iter().enumerate() {
                if s > scores[best] {
                    best = c;
                }
            }
            log::debug!("inner selection by {metric:?}: config {best} scored {:.4}", scores[best]);
            Ok(Selected {
                config: grid[best].clone(),
                score: Some(scores[best]),
            })
        }
    }
}

/// Pre-split protocol: select on the training data, refit on all of it and
/// report on the test data. Returns the refitted model with the report.
pub fn evaluate_split<T: Scalar>(
    train_features: &[Vec<T>],
    train_labels: &[Label],
    test_features: &[Vec<T>],
    test_labels: &[Label],
    grid: &[BoostConfig],
    cv: &CvConfig,
) -> Result<(EvalReport, GbtModel)> {
    let (fold, model) = fit_and_score(0, train_features, train_labels, test_features, test_labels, grid, cv)?;
    let ratio = train_labels.iter().filter(|l| l.is_positive()).count() as f64 / train_labels.len() as f64;
    Ok((EvalReport::from_folds(SelectionMetric::for_positive_ratio(ratio), vec![fold]), model))
}

fn fit_and_score<T: Scalar>(
    fold: usize,
    train_features: &[Vec<T>],
    train_labels: &[Label],
    test_features: &[Vec<T>],
    test_labels: &[Label],
    grid: &[BoostConfig],
    cv: &CvConfig,
) -> Result<(FoldReport, GbtModel)> {
    if test_labels.len() != test_features.len() {
        return Err(Error::Dimension(format!(
            "{} test labels for {} rows",
            test_labels.len(),
            test_features.len()
        )));
    }
    let selected = select_config(train_features, train_labels, grid, cv)?;
    let model = train_gbt(train_features, train_labels, &selected.config)?;
    let confusion = Confusion::from_predictions(test_labels, &model.predict(test_features)?)?;
    let report = FoldReport {
        fold,
        train_size: train_labels.len(),
        test_size: test_labels.len(),
        config: selected.config,
        inner_score: selected.score,
        confusion,
        metrics: confusion.metrics(),
    };
    Ok((report, model))
}

/// Features for one outer fold: `(train rows, test rows)` given the training
/// and test indices. Representation learning belongs inside this closure so
/// that test series never influence it.
pub trait Featurize<T>: Fn(&[usize], &[usize]) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> + Sync {}
impl<T, F: Fn(&[usize], &[usize]) -> Result<(Vec<Vec<T>>, Vec<Vec<T>>)> + Sync> Featurize<T> for F {}

/// Outer stratified k-fold with inner selection on each training part.
pub fn nested_cv<T: Scalar, F: Featurize<T>>(labels: &[Label], grid: &[BoostConfig], cv: &CvConfig, featurize: F) -> Result<EvalReport> {
    if grid.is_empty() {
        return Err(argument("hyperparameter grid is empty"));
    }
    let folds = stratified_folds(labels, cv.outer_folds, cv.seed)?;
    let reports: Vec<Result<FoldReport>> = run_in_pool(cv.workers, || {
        folds
            .par_iter()
            .enumerate()
            .map(|(k, test)| {
                let train = complement(labels.len(), test);
                let (tx, ex) = featurize(&train, test)?;
                let (ty, ey) = (pick(labels, &train), pick(labels, test));
                fit_and_score(k, &tx, &ty, &ex, &ey, grid, cv).map(|(r, _)| r)
            })
            .collect()
    })?;
    let reports = reports.into_iter().collect::<Result<Vec<_>>>()?;
    let ratio = labels.iter().filter(|l| l.is_positive()).count() as f64 / labels.len() as f64;
    Ok(EvalReport::from_folds(SelectionMetric::for_positive_ratio(ratio), reports))
}
