//! Time-aware shapelet learning.
//!
//! Candidates are picked from the dataset's segments by greedy max-spread
//! selection. Each candidate then learns a local factor `w` (one weight per
//! shapelet element) and a global factor `u` (one weight per segment
//! position) by minimizing
//!
//! ```text
//! loss = -KL(fit(pos distances) || fit(neg distances)) + lambda*|w|_2 + epsilon*|u|_2
//! ```
//!
//! where each series distance is the softmin over segments of
//! `u[k] * weighted_distance(v, s_k | w)` and `fit` is a Gaussian with
//! closed-form mean and (floored) population variance.
//!
//! The warping path is computed on the unweighted cost, so it does not depend
//! on `w` or `u`. Per-element aligned costs are therefore computed once per
//! candidate and reused by every optimizer step.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact;
use crate::data::{Dataset, Label};
use crate::error::{argument, Error, Result};
use crate::scalar::{l2_norm, mean, Scalar};
use crate::warp::{aligned_costs, softmin_with_grad, weighted_from_costs, WarpConfig};

pub const SHAPELET_SCHEMA: &str = "shapegraph.shapelets/1.0";

/// Lower bound applied to fitted variances.
pub const VARIANCE_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shapelet<T> {
    pub rank: usize,
    pub loss: T,
    pub values: Vec<T>,
    pub w: Vec<T>,
    pub u: Vec<T>,
}

impl<T: Scalar> Shapelet<T> {
    /// A shapelet with neutral timing factors.
    pub fn unweighted(values: Vec<T>, m: usize) -> Self {
        let l = values.len();
        Self {
            rank: 0,
            loss: T::zero(),
            values,
            w: vec![T::one(); l],
            u: vec![T::one(); m],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A candidate subsequence and where it was taken from.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate<T> {
    pub values: Vec<T>,
    pub series_index: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePool<T> {
    pub candidates: Vec<Candidate<T>>,
}

impl<T> CandidatePool<T> {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

fn euclidean<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>().sqrt()
}

/// Greedy max-spread candidate selection over all segments.
///
/// The first pick is the segment closest to the centroid of all segments;
/// each later pick maximizes the summed Euclidean distance to everything
/// picked so far. Ties go to the lowest `(series_index, position)`.
pub fn generate_candidates<T: Scalar>(ds: &Dataset<T>, size: usize) -> Result<CandidatePool<T>> {
    let seq = ds.all_segments();
    if size > seq.len() {
        return Err(argument(format!(
            "candidate pool size {size} exceeds the {} available subsequences",
            seq.len()
        )));
    }
    if size == 0 {
        return Ok(CandidatePool::default());
    }
    let l = ds.segment_length;
    let n = T::of(seq.len() as f64);
    let centroid: Vec<T> = (0..l)
        .map(|p| seq.iter().map(|s| s.values[p]).sum::<T>() / n)
        .collect();

    let mut seed = 0;
    let mut best = T::infinity();
    for (i, s) in seq.iter().enumerate() {
        let d = euclidean(s.values, &centroid);
        if d < best {
            best = d;
            seed = i;
        }
    }

    let mut dist = vec![T::zero(); seq.len()];
    dist[seed] = T::one();
    let mut taken = vec![false; seq.len()];
    let mut candidates = Vec::with_capacity(size);
    for _ in 0..size {
        let mut pick = usize::MAX;
        let mut top = T::neg_infinity();
        for (j, &d) in dist.iter().enumerate() {
            if !taken[j] && d > top {
                top = d;
                pick = j;
            }
        }
        taken[pick] = true;
        let chosen = seq[pick];
        candidates.push(Candidate {
            values: chosen.values.to_vec(),
            series_index: chosen.series_index,
            position: chosen.position,
        });
        for (j, s) in seq.iter().enumerate() {
            if !taken[j] {
                dist[j] = dist[j] + euclidean(chosen.values, s.values);
            }
        }
    }
    Ok(CandidatePool { candidates })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit<T> {
    pub mu: T,
    pub sigma2: T,
}

impl<T: Scalar> GaussianFit<T> {
    pub fn new(mu: T, sigma2: T) -> Self {
        Self {
            mu,
            sigma2: sigma2.max(T::of(VARIANCE_FLOOR)),
        }
    }

    /// Mean and population variance of `xs`, variance floored.
    pub fn fit(xs: &[T]) -> Self {
        let mu = mean(xs);
        let var = xs.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>() / T::of(xs.len().max(1) as f64);
        Self::new(mu, var)
    }
}

/// `KL(p || q)` between univariate Gaussians.
pub fn gaussian_kl<T: Scalar>(p: &GaussianFit<T>, q: &GaussianFit<T>) -> T {
    let half = T::of(0.5);
    let dm = p.mu - q.mu;
    half * (q.sigma2 / p.sigma2).ln() + (p.sigma2 + dm * dm) / (T::of(2.0) * q.sigma2) - half
}

/// Partial derivatives of `KL(p || q)` w.r.t. `(mu_p, var_p, mu_q, var_q)`.
fn gaussian_kl_grad<T: Scalar>(p: &GaussianFit<T>, q: &GaussianFit<T>) -> [T; 4] {
    let two = T::of(2.0);
    let dm = p.mu - q.mu;
    [
        dm / q.sigma2,
        -T::one() / (two * p.sigma2) + T::one() / (two * q.sigma2),
        -dm / q.sigma2,
        T::one() / (two * q.sigma2) - (p.sigma2 + dm * dm) / (two * q.sigma2 * q.sigma2),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    #[default]
    PosNeg,
    NegPos,
}

impl std::str::FromStr for KlDirection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pos-neg" => Ok(KlDirection::PosNeg),
            "neg-pos" => Ok(KlDirection::NegPos),
            other => Err(argument(format!("unknown KL direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub num_shapelets: usize,
    /// Candidate pool size as a multiple of `num_shapelets`.
    pub pool_factor: usize,
    pub lambda: f64,
    pub epsilon: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub warp: WarpConfig,
    pub kl_direction: KlDirection,
    /// Train timing factors only on the `10 * K` best candidates by static loss.
    pub prefilter: bool,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_shapelets: 50,
            pool_factor: 100,
            lambda: 0.5,
            epsilon: 0.1,
            epochs: 50,
            learning_rate: 0.01,
            batch_size: 50,
            temperature: 1.0,
            warp: WarpConfig::default(),
            kl_direction: KlDirection::PosNeg,
            prefilter: false,
            seed: 0,
            workers: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, reason: &str| {
            Err(Error::Config {
                field: field.into(),
                reason: reason.into(),
            })
        };
        if self.num_shapelets == 0 {
            return bad("num_shapelets", "must be positive");
        }
        if self.pool_factor == 0 {
            return bad("pool_factor", "must be positive");
        }
        if !(self.lambda >= 0.0) {
            return bad("lambda", "must be non-negative");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon", "must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", "must be positive");
        }
        if !(self.temperature > 0.0) {
            return bad("temperature", "must be positive");
        }
        self.warp.validate()
    }
}

/// Aligned costs of one candidate against every segment of every series,
/// laid out `[series][segment][element]`.
#[derive(Debug, Clone)]
pub struct CandidateCosts<T> {
    costs: Vec<T>,
    labels: Vec<Label>,
    l: usize,
    m: usize,
}

impl<T: Scalar> CandidateCosts<T> {
    pub fn compute(values: &[T], ds: &Dataset<T>, warp: &WarpConfig) -> Result<Self> {
        let (l, m) = (values.len(), ds.num_segments);
        let mut labels = Vec::with_capacity(ds.len());
        let mut costs = Vec::with_capacity(ds.len() * m * l);
        for (i, series) in ds.series.iter().enumerate() {
            labels.push(series.label.ok_or_else(|| {
                Error::TrainingData(format!("series {i} is unlabeled"))
            })?);
            for k in 0..m {
                costs.extend(aligned_costs(values, ds.segment(i, k), warp)?);
            }
        }
        Ok(Self { costs, labels, l, m })
    }

    fn cell(&self, i: usize, k: usize) -> &[T] {
        let start = (i * self.m + k) * self.l;
        &self.costs[start..start + self.l]
    }

    pub fn num_series(&self) -> usize {
        self.labels.len()
    }
}

/// Loss and, optionally, its gradient with respect to `w` and `u`.
#[derive(Debug, Clone)]
pub struct LossEval<T> {
    pub loss: T,
    pub kl: T,
    pub grad_w: Vec<T>,
    pub grad_u: Vec<T>,
}

/// What the loss optimizes: the full penalized objective, or the static
/// criterion (KL only, factors fixed at one).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Objective {
    TimeAware,
    Static,
}

fn evaluate<T: Scalar>(
    costs: &CandidateCosts<T>,
    rows: &[usize],
    w: &[T],
    u: &[T],
    cfg: &TrainConfig,
    objective: Objective,
    with_grad: bool,
) -> Result<LossEval<T>> {
    let (l, m) = (costs.l, costs.m);
    let temperature = T::of(cfg.temperature);
    let mut dist = Vec::with_capacity(rows.len());
    let mut seg_wd = Vec::with_capacity(if with_grad { rows.len() * m } else { 0 });
    let mut seg_grad = Vec::with_capacity(if with_grad { rows.len() * m } else { 0 });
    let mut d = vec![T::zero(); m];
    let mut wd = vec![T::zero(); m];
    for &i in rows {
        for k in 0..m {
            wd[k] = weighted_from_costs(w, costs.cell(i, k));
            d[k] = u[k] * wd[k];
        }
        let (s, g) = softmin_with_grad(&d, temperature);
        dist.push(s);
        if with_grad {
            seg_wd.extend_from_slice(&wd);
            seg_grad.extend(g);
        }
    }

    let class_of = |r: usize| costs.labels[rows[r]];
    let pos: Vec<T> = (0..rows.len()).filter(|&r| class_of(r).is_positive()).map(|r| dist[r]).collect();
    let neg: Vec<T> = (0..rows.len()).filter(|&r| !class_of(r).is_positive()).map(|r| dist[r]).collect();
    if pos.len() < 2 || neg.len() < 2 {
        return Err(Error::TrainingData(format!(
            "need at least 2 series per class, got {} positive and {} negative",
            pos.len(),
            neg.len()
        )));
    }
    let (fp, fn_) = (GaussianFit::fit(&pos), GaussianFit::fit(&neg));
    let (p, q) = match cfg.kl_direction {
        KlDirection::PosNeg => (&fp, &fn_),
        KlDirection::NegPos => (&fn_, &fp),
    };
    let kl = gaussian_kl(p, q);
    let (lambda, epsilon) = match objective {
        Objective::TimeAware => (T::of(cfg.lambda), T::of(cfg.epsilon)),
        Objective::Static => (T::zero(), T::zero()),
    };
    let (nw, nu) = (l2_norm(w), l2_norm(u));
    let loss = -kl + lambda * nw + epsilon * nu;

    let mut grad_w = vec![T::zero(); l];
    let mut grad_u = vec![T::zero(); m];
    if with_grad {
        let kg = gaussian_kl_grad(p, q);
        // (d/dmu, d/dvar) for the positive fit, then the negative fit.
        let (gp, gn) = match cfg.kl_direction {
            KlDirection::PosNeg => ([kg[0], kg[1]], [kg[2], kg[3]]),
            KlDirection::NegPos => ([kg[2], kg[3]], [kg[0], kg[1]]),
        };
        let class_term = |xs: &[T], g: [T; 2]| {
            let n = T::of(xs.len() as f64);
            let mu = mean(xs);
            let raw_var = xs.iter().map(|&x| (x - mu) * (x - mu)).sum::<T>() / n;
            let var_live = raw_var > T::of(VARIANCE_FLOOR);
            (mu, n, var_live, g)
        };
        let pos_term = class_term(&pos, gp);
        let neg_term = class_term(&neg, gn);
        let two = T::of(2.0);
        for (r, &di) in dist.iter().enumerate() {
            let (mu, n, var_live, g) = if class_of(r).is_positive() { pos_term } else { neg_term };
            let mut dkl = g[0] / n;
            if var_live {
                dkl = dkl + g[1] * two * (di - mu) / n;
            }
            let dloss = -dkl;
            let i = rows[r];
            for k in 0..m {
                let gk = dloss * seg_grad[r * m + k];
                let wdk = seg_wd[r * m + k];
                if objective == Objective::TimeAware {
                    grad_u[k] = grad_u[k] + gk * wdk;
                }
                if wdk > T::zero() {
                    let scale = gk * u[k] / (two * wdk);
                    for (gw, &c) in grad_w.iter_mut().zip(costs.cell(i, k)) {
                        *gw = *gw + scale * c;
                    }
                }
            }
        }
        if objective == Objective::TimeAware {
            if nw > T::zero() {
                for (g, &x) in grad_w.iter_mut().zip(w) {
                    *g = *g + lambda * x / nw;
                }
            }
            if nu > T::zero() {
                for (g, &x) in grad_u.iter_mut().zip(u) {
                    *g = *g + epsilon * x / nu;
                }
            }
        } else {
            grad_w.iter_mut().for_each(|g| *g = T::zero());
        }
    }
    Ok(LossEval { loss, kl, grad_w, grad_u })
}

fn check_factors<T: Scalar>(v: &[T], w: &[T], u: &[T], ds: &Dataset<T>) -> Result<()> {
    if w.len() != v.len() || u.len() != ds.num_segments {
        return Err(Error::Dimension(format!(
            "factors (w: {}, u: {}) do not match shapelet length {} and {} segments",
            w.len(),
            u.len(),
            v.len(),
            ds.num_segments
        )));
    }
    Ok(())
}

/// Penalized time-aware loss of candidate `v` with factors `(w, u)` on the whole dataset.
pub fn candidate_loss<T: Scalar>(v: &[T], w: &[T], u: &[T], ds: &Dataset<T>, cfg: &TrainConfig) -> Result<T> {
    Ok(candidate_loss_and_grad(v, w, u, ds, cfg)?.loss)
}

/// As [`candidate_loss`], with the analytic gradient.
pub fn candidate_loss_and_grad<T: Scalar>(
    v: &[T],
    w: &[T],
    u: &[T],
    ds: &Dataset<T>,
    cfg: &TrainConfig,
) -> Result<LossEval<T>> {
    check_factors(v, w, u, ds)?;
    let costs = CandidateCosts::compute(v, ds, &cfg.warp)?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    evaluate(&costs, &rows, w, u, cfg, Objective::TimeAware, true)
}

/// Static criterion: `-KL` with unit timing factors and no penalty.
pub fn static_loss<T: Scalar>(v: &[T], ds: &Dataset<T>, cfg: &TrainConfig) -> Result<T> {
    let costs = CandidateCosts::compute(v, ds, &cfg.warp)?;
    static_loss_cached(&costs, cfg)
}

fn static_loss_cached<T: Scalar>(costs: &CandidateCosts<T>, cfg: &TrainConfig) -> Result<T> {
    let rows: Vec<usize> = (0..costs.num_series()).collect();
    let ones_w = vec![T::one(); costs.l];
    let ones_u = vec![T::one(); costs.m];
    Ok(evaluate(costs, &rows, &ones_w, &ones_u, cfg, Objective::Static, false)?.loss)
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
    lr: T,
}

impl<T: Scalar> Adam<T> {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            t: 0,
            lr: T::of(lr),
        }
    }

    /// One update, then projection onto the non-negative orthant.
    fn step(&mut self, params: &mut [T], grad: &[T]) {
        let (b1, b2) = (T::of(Self::BETA1), T::of(Self::BETA2));
        self.t += 1;
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * grad[i];
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] = (params[i] - self.lr * mh / (vh.sqrt() + T::of(Self::EPS))).max(T::zero());
        }
    }
}

/// Splits series into `ceil(n / batch_size)` batches, each holding at least
/// two series of either class; the class mix is spread round-robin.
fn stratified_batches(labels: &[Label], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i].is_positive()).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i].is_positive()).collect();
    pos.shuffle(rng);
    neg.shuffle(rng);
    let nb = labels
        .len()
        .div_ceil(batch_size)
        .min(pos.len() / 2)
        .min(neg.len() / 2)
        .max(1);
    let mut batches = vec![Vec::new(); nb];
    for (j, &i) in pos.iter().enumerate() {
        batches[j % nb].push(i);
    }
    for (j, &i) in neg.iter().enumerate() {
        batches[j % nb].push(i);
    }
    batches.shuffle(rng);
    batches
}

/// Result of training one candidate's timing factors.
#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub shapelet: Shapelet<T>,
    /// Full-dataset loss at the initial unit factors.
    pub initial_loss: T,
    /// Mean mini-batch loss per epoch.
    pub epoch_losses: Vec<T>,
}

/// Learn `w` and `u` for one candidate with mini-batch Adam, projecting onto
/// `w, u >= 0` after every step.
pub fn train_timing_factors<T: Scalar>(
    values: &[T],
    ds: &Dataset<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    let costs = CandidateCosts::compute(values, ds, &cfg.warp)?;
    train_cached(values, &costs, cfg, seed)
}

fn train_cached<T: Scalar>(
    values: &[T],
    costs: &CandidateCosts<T>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome<T>> {
    let (l, m) = (costs.l, costs.m);
    let all: Vec<usize> = (0..costs.num_series()).collect();
    let mut w = vec![T::one(); l];
    let mut u = vec![T::one(); m];
    let initial_loss = evaluate(costs, &all, &w, &u, cfg, Objective::TimeAware, false)?.loss;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adam_w = Adam::new(l, cfg.learning_rate);
    let mut adam_u = Adam::new(m, cfg.learning_rate);
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let batches = stratified_batches(&costs.labels, cfg.batch_size, &mut rng);
        let mut total = T::zero();
        for batch in &batches {
            let eval = evaluate(costs, batch, &w, &u, cfg, Objective::TimeAware, true)?;
            if !eval.loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    learning_rate: cfg.learning_rate,
                });
            }
            total = total + eval.loss;
            adam_w.step(&mut w, &eval.grad_w);
            adam_u.step(&mut u, &eval.grad_u);
        }
        epoch_losses.push(total / T::of(batches.len() as f64));
    }

    let loss = evaluate(costs, &all, &w, &u, cfg, Objective::TimeAware, false)?.loss;
    if !loss.is_finite() {
        return Err(Error::Diverged {
            epoch: cfg.epochs,
            learning_rate: cfg.learning_rate,
        });
    }
    Ok(TrainOutcome {
        shapelet: Shapelet {
            rank: 0,
            loss,
            values: values.to_vec(),
            w,
            u,
        },
        initial_loss,
        epoch_losses,
    })
}

/// Runs `f` on a pool of `workers` threads, or on the current pool when
/// `workers` is `None`.
pub(crate) fn run_in_pool<R: Send>(workers: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match workers {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| argument(format!("cannot build worker pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

fn candidate_seed(seed: u64, index: usize) -> u64 {
    seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn pool_for<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig) -> Result<CandidatePool<T>> {
    cfg.validate()?;
    let available = ds.len() * ds.num_segments;
    let wanted = cfg.num_shapelets * cfg.pool_factor;
    let size = if wanted > available {
        log::warn!("candidate pool capped at {available} subsequences (requested {wanted})");
        available
    } else {
        wanted
    };
    if size < cfg.num_shapelets {
        return Err(argument(format!(
            "only {size} candidates available for {} shapelets",
            cfg.num_shapelets
        )));
    }
    generate_candidates(ds, size)
}

fn rank_and_truncate<T: Scalar>(mut scored: Vec<(usize, Shapelet<T>)>, k: usize) -> Vec<Shapelet<T>> {
    scored.sort_by(|a, b| a.1.loss.partial_cmp(&b.1.loss).unwrap().then(a.0.cmp(&b.0)));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(r, (_, mut s))| {
            s.rank = r + 1;
            s
        })
        .collect()
}

/// Train every candidate and keep the `K` with the smallest loss.
pub fn extract_shapelets<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig) -> Result<Vec<Shapelet<T>>> {
    let pool = pool_for(ds, cfg)?;
    let mut indices: Vec<usize> = (0..pool.len()).collect();

    if cfg.prefilter {
        let keep = (10 * cfg.num_shapelets).min(pool.len());
        let scores = run_in_pool(cfg.workers, || {
            indices
                .par_iter()
                .map(|&c| {
                    let costs = CandidateCosts::compute(&pool.candidates[c].values, ds, &cfg.warp)?;
                    static_loss_cached(&costs, cfg)
                })
                .collect::<Result<Vec<T>>>()
        })??;
        indices.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap().then(a.cmp(&b)));
        indices.truncate(keep);
        indices.sort_unstable();
        log::info!("prefilter kept {keep} of {} candidates", pool.len());
    }

    let trained = run_in_pool(cfg.workers, || {
        indices
            .par_iter()
            .map(|&c| {
                let values = &pool.candidates[c].values;
                let costs = CandidateCosts::compute(values, ds, &cfg.warp)?;
                let out = train_cached(values, &costs, cfg, candidate_seed(cfg.seed, c))?;
                Ok((c, out.shapelet))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    log_loss_summary(trained.iter().map(|(_, s)| s.loss.as_f64()));
    Ok(rank_and_truncate(trained, cfg.num_shapelets))
}

/// Shapelets ranked by the static criterion, with `w` and `u` fixed at one.
pub fn extract_static_shapelets<T: Scalar>(ds: &Dataset<T>, cfg: &TrainConfig) -> Result<Vec<Shapelet<T>>> {
    let pool = pool_for(ds, cfg)?;
    let m = ds.num_segments;
    let scored = run_in_pool(cfg.workers, || {
        pool.candidates
            .par_iter()
            .enumerate()
            .map(|(c, cand)| {
                let costs = CandidateCosts::compute(&cand.values, ds, &cfg.warp)?;
                let mut s = Shapelet::unweighted(cand.values.clone(), m);
                s.loss = static_loss_cached(&costs, cfg)?;
                Ok((c, s))
            })
            .collect::<Result<Vec<_>>>()
    })??;
    log_loss_summary(scored.iter().map(|(_, s)| s.loss.as_f64()));
    Ok(rank_and_truncate(scored, cfg.num_shapelets))
}

fn log_loss_summary(losses: impl Iterator<Item = f64>) {
    let mut v: Vec<f64> = losses.collect();
    if v.is_empty() {
        return;
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    log::info!(
        "candidate losses: n={} min={:.4} p25={:.4} median={:.4} p75={:.4} max={:.4}",
        v.len(),
        q(0.0),
        q(0.25),
        q(0.5),
        q(0.75),
        q(1.0)
    );
}

/// Serialized shapelet set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeletSet<T> {
    pub version: String,
    pub l: usize,
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(default)]
    pub static_factors: bool,
    pub shapelets: Vec<Shapelet<T>>,
}

impl<T: Scalar> ShapeletSet<T> {
    pub fn new(shapelets: Vec<Shapelet<T>>, l: usize, m: usize) -> Self {
        Self {
            version: SHAPELET_SCHEMA.into(),
            l,
            m,
            k: shapelets.len(),
            static_factors: false,
            shapelets,
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        artifact::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let set: Self = artifact::read_json(path)?;
        artifact::check_version(&set.version, SHAPELET_SCHEMA)?;
        if set.k != set.shapelets.len()
            || set.shapelets.iter().any(|s| s.values.len() != set.l || s.w.len() != set.l || s.u.len() != set.m)
        {
            return Err(Error::Dimension("shapelet set does not match its declared l, m, K".into()));
        }
        Ok(set)
    }
}
