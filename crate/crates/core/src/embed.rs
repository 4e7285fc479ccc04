//! Shapelet embeddings from weighted random walks and skip-gram with negative
//! sampling, and the per-series representation built from them.

use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{argument, Error, Result};
use crate::graph::{Assignment, EvolutionGraph};
use crate::scalar::{mean, variance, Scalar};
use crate::shapelet::run_in_pool;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub walks_per_vertex: usize,
    pub walk_length: usize,
    pub window_size: usize,
    pub embedding_dim: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub workers: Option<usize>,
}

impl Default for WalkConfig {
    fn default() -> Self {
        Self {
            walks_per_vertex: 10,
            walk_length: 40,
            window_size: 5,
            embedding_dim: 32,
            negative_samples: 5,
            epochs: 5,
            learning_rate: 0.025,
            seed: 0,
            workers: None,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("walks_per_vertex", self.walks_per_vertex),
            ("walk_length", self.walk_length),
            ("window_size", self.window_size),
            ("embedding_dim", self.embedding_dim),
            ("negative_samples", self.negative_samples),
            ("epochs", self.epochs),
        ] {
            if v == 0 {
                return Err(Error::Config {
                    field: field.into(),
                    reason: "must be at least 1".into(),
                });
            }
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config {
                field: "learning_rate".into(),
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
}

/// `walks_per_vertex` walks from every vertex. The next vertex is drawn in
/// proportion to outgoing edge weight; a walk stops early at a vertex with no
/// outgoing edges. Each start vertex has its own RNG stream, so the corpus
/// does not depend on the worker count.
pub fn random_walks<T: Scalar>(g: &EvolutionGraph<T>, cfg: &WalkConfig) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let samplers: Vec<Option<(Vec<usize>, WeightedIndex<f64>)>> = (0..g.vertex_count)
        .map(|v| {
            let out = g.out_edges(v);
            if out.is_empty() {
                return None;
            }
            let targets = out.iter().map(|e| e.dst).collect();
            let weights = out.iter().map(|e| e.weight.as_f64());
            Some((targets, WeightedIndex::new(weights).expect("edge weights are positive")))
        })
        .collect();

    let per_vertex = run_in_pool(cfg.workers, || {
        (0..g.vertex_count)
            .into_par_iter()
            .map(|start| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(start as u64);
                (0..cfg.walks_per_vertex)
                    .map(|_| {
                        let mut walk = Vec::with_capacity(cfg.walk_length);
                        let mut cur = start;
                        walk.push(cur);
                        while walk.len() < cfg.walk_length {
                            let Some((targets, dist)) = &samplers[cur] else { break };
                            cur = targets[dist.sample(&mut rng)];
                            walk.push(cur);
                        }
                        walk
                    })
                    .collect::<Vec<_>>()
            })
            .collect::<Vec<_>>()
    })?;
    Ok(per_vertex.into_iter().flatten().collect())
}

/// One `embedding_dim`-vector per shapelet vertex, each of unit length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel<T> {
    pub dim: usize,
    pub vectors: Vec<Vec<T>>,
}

impl<T: Scalar> EmbeddingModel<T> {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vector(&self, v: usize) -> &[T] {
        &self.vectors[v]
    }

    /// `K B` header, then one whitespace-separated row per vertex.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.len(), self.dim);
        for row in &self.vectors {
            let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
            writeln!(s, "{}", cells.join(" ")).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Artifact(format!("embedding matrix: {msg}"));
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| bad("missing header".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|x| x.parse().map_err(|_| bad(format!("bad header {header:?}"))))
            .collect::<Result<_>>()?;
        let [k, dim] = dims[..] else {
            return Err(bad(format!("bad header {header:?}")));
        };
        let vectors: Vec<Vec<T>> = lines
            .enumerate()
            .map(|(r, line)| {
                let row: Vec<T> = line
                    .split_whitespace()
                    .map(|x| x.parse::<f64>().map(T::of).map_err(|_| bad(format!("row {r}: bad value {x:?}"))))
                    .collect::<Result<_>>()?;
                if row.len() != dim {
                    return Err(bad(format!("row {r} has {} values, expected {dim}", row.len())));
                }
                Ok(row)
            })
            .collect::<Result<_>>()?;
        if vectors.len() != k {
            return Err(bad(format!("{} rows, header says {k}", vectors.len())));
        }
        Ok(Self { dim, vectors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Trained model plus the sampled objective per epoch.
#[derive(Debug, Clone)]
pub struct SkipGramOutcome<T> {
    pub model: EmbeddingModel<T>,
    /// Mean negative-sampling loss per (center, context) pair, per epoch.
    pub epoch_losses: Vec<f64>,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Skip-gram with negative sampling over a walk corpus with `vocab` vertices.
///
/// Negatives are drawn from the unigram distribution raised to 3/4; the
/// learning rate decays linearly to `1e-4` of its initial value. Rows of the
/// input embedding are L2-normalized before returning.
pub fn train_skipgram<T: Scalar>(corpus: &[Vec<usize>], vocab: usize, cfg: &WalkConfig) -> Result<SkipGramOutcome<T>> {
    cfg.validate()?;
    let tokens: usize = corpus.iter().map(Vec::len).sum();
    if vocab == 0 || tokens == 0 {
        return Err(argument("skip-gram needs a non-empty vocabulary and corpus"));
    }
    let mut counts = vec![0usize; vocab];
    for &v in corpus.iter().flatten() {
        if v >= vocab {
            return Err(Error::Dimension(format!("walk visits vertex {v} of {vocab}")));
        }
        counts[v] += 1;
    }
    let noise = WeightedIndex::new(counts.iter().map(|&c| (c as f64).powf(0.75))).expect("corpus is non-empty");

    let dim = cfg.embedding_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5EED_5EED);
    let init = Uniform::new(-0.5 / dim as f64, 0.5 / dim as f64);
    let mut syn0: Vec<T> = (0..vocab * dim).map(|_| T::of(init.sample(&mut rng))).collect();
    let mut syn1: Vec<T> = vec![T::zero(); vocab * dim];
    let mut neu1e = vec![T::zero(); dim];

    let mut order: Vec<usize> = (0..corpus.len()).collect();
    let total = (cfg.epochs * tokens) as f64;
    let mut processed = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut pairs) = (0.0f64, 0usize);
        for &wi in &order {
            let walk = &corpus[wi];
            for (c, &center) in walk.iter().enumerate() {
                let lr = T::of(cfg.learning_rate * (1.0 - processed as f64 / total).max(1e-4));
                processed += 1;
                let lo = c.saturating_sub(cfg.window_size);
                let hi = (c + cfg.window_size + 1).min(walk.len());
                for (x, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if x == c {
                        continue;
                    }
                    neu1e.iter_mut().for_each(|e| *e = T::zero());
                    let input = center * dim;
                    for n in 0..=cfg.negative_samples {
                        let (target, label) = if n == 0 {
                            (context, T::one())
                        } else {
                            let t = noise.sample(&mut rng);
                            if t == context {
                                continue;
                            }
                            (t, T::zero())
                        };
                        let out = target * dim;
                        let score: T = (0..dim).map(|d| syn0[input + d] * syn1[out + d]).sum();
                        let f = sigmoid(score);
                        let p = if label == T::one() { f } else { T::one() - f };
                        loss -= p.as_f64().max(1e-12).ln();
                        let g = (label - f) * lr;
                        for d in 0..dim {
                            neu1e[d] = neu1e[d] + g * syn1[out + d];
                            syn1[out + d] = syn1[out + d] + g * syn0[input + d];
                        }
                    }
                    for d in 0..dim {
                        syn0[input + d] = syn0[input + d] + neu1e[d];
                    }
                    pairs += 1;
                }
            }
        }
        epoch_losses.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
    }

    let vectors = syn0
        .chunks_exact(dim)
        .map(|row| {
            let norm = row.iter().map(|&x| x * x).sum::<T>().sqrt();
            if norm > T::zero() {
                row.iter().map(|&x| x / norm).collect()
            } else {
                // Never produced in practice; keeps rows non-zero regardless.
                let mut e = vec![T::zero(); dim];
                e[0] = T::one();
                e
            }
        })
        .collect();
    Ok(SkipGramOutcome {
        model: EmbeddingModel { dim, vectors },
        epoch_losses,
    })
}

/// Concatenated segment embeddings followed by per-segment mean and std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesRepresentation<T> {
    pub phi: Vec<T>,
    pub handcrafted: Vec<T>,
}

impl<T: Scalar> SeriesRepresentation<T> {
    /// Feature vector `[phi | handcrafted]`.
    pub fn features(&self) -> Vec<T> {
        self.phi.iter().chain(&self.handcrafted).copied().collect()
    }
}

/// Representation of one series from its segment assignments.
///
/// Segment block `i` is `sum_j p_ij * mu(v_ij)`; unassigned segments
/// contribute a zero block.
pub fn embed_series<T: Scalar>(
    assignments: &[Assignment<T>],
    segments: &[&[T]],
    model: &EmbeddingModel<T>,
) -> Result<SeriesRepresentation<T>> {
    if assignments.len() != segments.len() {
        return Err(Error::Dimension(format!(
            "{} assignments for {} segments",
            assignments.len(),
            segments.len()
        )));
    }
    let dim = model.dim;
    let mut phi = vec![T::zero(); assignments.len() * dim];
    for (i, a) in assignments.iter().enumerate() {
        let block = &mut phi[i * dim..(i + 1) * dim];
        for e in &a.entries {
            if e.shapelet >= model.len() {
                return Err(Error::Dimension(format!(
                    "assignment to shapelet {} but the embedding has {} rows",
                    e.shapelet,
                    model.len()
                )));
            }
            for (b, &x) in block.iter_mut().zip(model.vector(e.shapelet)) {
                *b = *b + e.probability * x;
            }
        }
    }
    let handcrafted = segments
        .iter()
        .flat_map(|s| [mean(s), variance(s).sqrt()])
        .collect();
    Ok(SeriesRepresentation { phi, handcrafted })
}

/// CSV with the label (0/1, empty when unlabeled) first, then the features.
pub fn write_representations_csv<T: Scalar>(
    path: impl AsRef<Path>,
    reps: &[SeriesRepresentation<T>],
    labels: &[Option<Label>],
) -> Result<()> {
    let mut s = String::new();
    for (rep, label) in reps.iter().zip(labels) {
        let mut cells = vec![label.map(|l| l.as_u8().to_string()).unwrap_or_default()];
        cells.extend(rep.features().iter().map(|x| x.to_string()));
        writeln!(s, "{}", cells.join(",")).unwrap();
    }
    std::fs::write(path, s)?;
    Ok(())
}
