//! Staged batch pipeline: configuration, artifacts and the stage runners
//! behind the command-line tool.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::artifact::{self, check_version};
use crate::classify::{
    nested_cv, full_grid, select_config, train_gbt, BoostConfig, Confusion, CvConfig, EvalReport, FoldReport,
    GbtModel, SelectionMetric,
};
use crate::data::{load_ucr, Dataset, Delimiter, Label, LabelMap, UcrOptions};
use crate::embed::{embed_series, random_walks, train_skipgram, write_representations_csv, EmbeddingModel, WalkConfig};
use crate::error::{Error, Result};
use crate::graph::{assign_segments, build_graph, compute_threshold, DistanceTable, EvolutionGraph, GRAPH_SCHEMA};
use crate::scalar::Scalar;
use crate::shapelet::{extract_shapelets, extract_static_shapelets, run_in_pool, ShapeletSet, TrainConfig};
use crate::warp::{dtw_exact, dtw_greedy, WarpConfig, WarpMode};

pub const MODEL_SCHEMA: &str = "shapegraph.model/1.0";
pub const BENCH_SCHEMA: &str = "shapegraph.bench/1.0";

pub const SHAPELETS_FILE: &str = "shapelets.json";
pub const GRAPH_FILE: &str = "graph.json";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const REPRESENTATIONS_FILE: &str = "representations.csv";
pub const MODEL_FILE: &str = "model.json";
pub const REPORT_FILE: &str = "report.json";
pub const BENCH_FILE: &str = "bench.json";

/// How the classifier hyperparameters are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridChoice {
    /// Use the configured boosting parameters as they are.
    #[default]
    Fixed,
    /// Search depth, learning rate and class weight by inner cross-validation.
    Full,
}

impl FromStr for GridChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "full" => Ok(Self::Full),
            other => Err(config_err("grid", format!("unknown grid {other:?} (expected fixed or full)"))),
        }
    }
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub delimiter: Delimiter,
    /// Raw label treated as positive; the minority class when unset.
    pub positive_label: Option<i64>,
    pub segment_length: usize,
    pub shapelet: TrainConfig,
    pub static_shapelets: bool,
    pub delta_percentile: f64,
    pub walk: WalkConfig,
    pub boost: BoostConfig,
    pub grid: GridChoice,
    pub folds: usize,
    pub seed: Option<u64>,
    #[serde(skip)]
    pub workers: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            train: None,
            test: None,
            delimiter: Delimiter::Comma,
            positive_label: None,
            segment_length: 24,
            shapelet: TrainConfig::default(),
            static_shapelets: false,
            delta_percentile: 10.0,
            walk: WalkConfig::default(),
            boost: BoostConfig::default(),
            grid: GridChoice::Fixed,
            folds: 5,
            seed: None,
            workers: None,
            out: PathBuf::from("out"),
        }
    }
}

fn parse<V: FromStr>(field: &str, value: &str) -> Result<V>
where
    V::Err: Display,
{
    value
        .parse()
        .map_err(|e| config_err(field, format!("cannot parse {value:?}: {e}")))
}

fn parse_bool(field: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        other => Err(config_err(field, format!("expected a boolean, got {other:?}"))),
    }
}

fn parse_optional<V: FromStr>(field: &str, value: &str) -> Result<Option<V>>
where
    V::Err: Display,
{
    match value {
        "" | "none" | "auto" => Ok(None),
        v => parse(field, v).map(Some),
    }
}

impl PipelineConfig {
    pub const PRESETS: [&'static str; 3] = ["eqs", "wtc", "stb"];

    /// Tuned settings for the Earthquakes (`eqs`), WormsTwoClass (`wtc`) and
    /// Strawberry (`stb`) datasets.
    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let (k, l, b, depth, lr, cw) = match name {
            "eqs" => (50, 24, 32, 8, 0.1, 10.0),
            "wtc" => (20, 30, 128, 12, 0.2, 1.0),
            "stb" => (50, 15, 256, 4, 0.2, 10.0),
            other => {
                return Err(config_err(
                    "preset",
                    format!("unknown preset {other:?} (expected one of {})", Self::PRESETS.join(", ")),
                ))
            }
        };
        self.shapelet.num_shapelets = k;
        self.segment_length = l;
        self.walk.embedding_dim = b;
        self.boost.max_depth = depth;
        self.boost.learning_rate = lr;
        self.boost.class_weight = cw;
        Ok(())
    }

    /// Set one field by its config-file key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        match key {
            "preset" => self.apply_preset(value)?,
            "train" => self.train = Some(PathBuf::from(value)),
            "test" => self.test = parse_optional::<PathBuf>(key, value)?,
            "delimiter" => self.delimiter = parse(key, value)?,
            "positive_label" => self.positive_label = parse_optional(key, value)?,
            "K" | "num_shapelets" => self.shapelet.num_shapelets = parse(key, value)?,
            "l" | "segment_length" => self.segment_length = parse(key, value)?,
            "B" | "embedding_dim" => self.walk.embedding_dim = parse(key, value)?,
            "lambda" => self.shapelet.lambda = parse(key, value)?,
            "epsilon" => self.shapelet.epsilon = parse(key, value)?,
            "epochs" => self.shapelet.epochs = parse(key, value)?,
            "shapelet_lr" => self.shapelet.learning_rate = parse(key, value)?,
            "batch_size" => self.shapelet.batch_size = parse(key, value)?,
            "pool_factor" => self.shapelet.pool_factor = parse(key, value)?,
            "softmin_temp" => self.shapelet.temperature = parse(key, value)?,
            "kl_direction" => self.shapelet.kl_direction = parse(key, value)?,
            "prefilter" => self.shapelet.prefilter = parse_bool(key, value)?,
            "static" => self.static_shapelets = parse_bool(key, value)?,
            "warp_mode" => self.shapelet.warp.mode = parse::<WarpMode>(key, value)?,
            "warp_window" => self.shapelet.warp.window = parse_optional(key, value)?,
            "delta_percentile" => self.delta_percentile = parse(key, value)?,
            "walks_per_vertex" => self.walk.walks_per_vertex = parse(key, value)?,
            "walk_length" => self.walk.walk_length = parse(key, value)?,
            "window_size" => self.walk.window_size = parse(key, value)?,
            "negative_samples" => self.walk.negative_samples = parse(key, value)?,
            "walk_epochs" => self.walk.epochs = parse(key, value)?,
            "walk_lr" => self.walk.learning_rate = parse(key, value)?,
            "max_depth" => self.boost.max_depth = parse(key, value)?,
            "boost_lr" => self.boost.learning_rate = parse(key, value)?,
            "class_weight" => self.boost.class_weight = parse(key, value)?,
            "num_rounds" => self.boost.num_rounds = parse(key, value)?,
            "subsample" => self.boost.subsample = parse(key, value)?,
            "early_stopping" => self.boost.early_stopping = parse_optional(key, value)?,
            "grid" => self.grid = parse(key, value)?,
            "folds" => self.folds = parse(key, value)?,
            "seed" => self.seed = parse_optional(key, value)?,
            "workers" => self.workers = parse_optional(key, value)?,
            "out" => self.out = PathBuf::from(value),
            other => return Err(config_err(other, "unknown key")),
        }
        Ok(())
    }

    /// Apply a flat `key = value` file. `#` starts a comment; a `preset`
    /// line is applied before the other keys regardless of its position.
    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err("config", format!("cannot read {}: {e}", path.display())))?;
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                config_err("config", format!("{}:{}: expected key = value", path.display(), n + 1))
            })?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        pairs.sort_by_key(|(k, _)| k != "preset");
        for (k, v) in pairs {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Check field ranges and that the training file (and the test file, if
    /// set) exists.
    pub fn validate(&self) -> Result<()> {
        for (field, path) in [("train", &self.train), ("test", &self.test)] {
            match path {
                Some(p) if !p.is_file() => {
                    return Err(config_err(field, format!("{} does not exist", p.display())))
                }
                None if field == "train" => return Err(config_err(field, "no training file given")),
                _ => {}
            }
        }
        if self.segment_length == 0 {
            return Err(config_err("segment_length", "must be positive"));
        }
        if !(0.0..=100.0).contains(&self.delta_percentile) {
            return Err(config_err("delta_percentile", "must lie in [0, 100]"));
        }
        if self.folds < 2 {
            return Err(config_err("folds", "must be at least 2"));
        }
        if self.workers == Some(0) {
            return Err(config_err("workers", "must be at least 1"));
        }
        self.shapelet.validate()?;
        self.walk.validate()?;
        self.boost.validate()
    }

    /// Fix the seed, drawing one from the OS when unset, and return it.
    pub fn resolve_seed(&mut self) -> u64 {
        let seed = match self.seed {
            Some(s) => s,
            None => {
                let s = rand::thread_rng().gen();
                log::info!("no seed given, using {s}");
                s
            }
        };
        self.seed = Some(seed);
        self.shapelet.seed = seed;
        self.walk.seed = seed;
        self.boost.seed = seed;
        seed
    }

    fn seed_value(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn grid(&self) -> Vec<BoostConfig> {
        match self.grid {
            GridChoice::Fixed => vec![self.boost.clone()],
            GridChoice::Full => full_grid(&self.boost),
        }
    }

    fn cv(&self) -> CvConfig {
        CvConfig {
            outer_folds: self.folds,
            inner_folds: self.folds,
            seed: self.seed_value(),
            workers: None,
        }
    }

    fn ucr_options(&self, label_map: Option<LabelMap>) -> UcrOptions {
        UcrOptions {
            delimiter: self.delimiter,
            label_map: label_map.or(self.positive_label.map(|p| LabelMap {
                positive: p,
                negative: None,
            })),
            segment_length: Some(self.segment_length),
        }
    }

    pub fn load_train<T: Scalar>(&self) -> Result<Dataset<T>> {
        let path = self.train.as_ref().ok_or_else(|| config_err("train", "no training file given"))?;
        let ds = load_ucr(path, &self.ucr_options(None))?;
        log::info!(
            "loaded {} training series, m = {}, positive ratio {:.3}",
            ds.len(),
            ds.num_segments,
            ds.positive_ratio()
        );
        Ok(ds)
    }

    pub fn load_test<T: Scalar>(&self, label_map: Option<LabelMap>) -> Result<Option<Dataset<T>>> {
        self.test
            .as_ref()
            .map(|p| load_ucr(p, &self.ucr_options(label_map)))
            .transpose()
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }
}

/// `graph.json`: the evolution graph with the threshold used to build it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact<T> {
    pub delta: T,
    pub delta_percentile: f64,
    pub graph: EvolutionGraph<T>,
}

impl<T: Scalar> GraphArtifact<T> {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let a: Self = artifact::read_json(path)?;
        check_version(&a.graph.version, GRAPH_SCHEMA)?;
        a.graph.validate()?;
        Ok(a)
    }
}

/// Everything needed to featurize and classify new series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle<T> {
    pub version: String,
    pub config: PipelineConfig,
    pub label_map: Option<LabelMap>,
    pub train_positive_ratio: f64,
    pub shapelets: ShapeletSet<T>,
    pub delta: T,
    pub graph: EvolutionGraph<T>,
    pub embeddings: EmbeddingModel<T>,
    /// Features are `[phi | handcrafted]`: `m * B` embedding values then
    /// per-segment mean and std.
    pub phi_len: usize,
    pub handcrafted_len: usize,
    pub classifier: GbtModel,
    pub selected: BoostConfig,
    pub inner_score: Option<f64>,
    pub report: Option<EvalReport>,
}

impl<T: Scalar> ModelBundle<T> {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        artifact::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let b: Self = artifact::read_json(path)?;
        check_version(&b.version, MODEL_SCHEMA)?;
        check_version(&b.graph.version, GRAPH_SCHEMA)?;
        let k = b.shapelets.shapelets.len();
        if b.embeddings.len() != k || b.graph.vertex_count != k {
            return Err(Error::Dimension(format!(
                "bundle has {k} shapelets, {} embedding rows and {} graph vertices",
                b.embeddings.len(),
                b.graph.vertex_count
            )));
        }
        if b.classifier.num_features != b.phi_len + b.handcrafted_len {
            return Err(Error::Dimension("classifier width does not match the feature layout".into()));
        }
        Ok(b)
    }

    pub fn features(&self, ds: &Dataset<T>) -> Result<Vec<Vec<T>>> {
        if ds.segment_length != self.shapelets.l || ds.num_segments != self.shapelets.m {
            return Err(Error::Dimension(format!(
                "dataset has l = {}, m = {}; model expects l = {}, m = {}",
                ds.segment_length, ds.num_segments, self.shapelets.l, self.shapelets.m
            )));
        }
        featurize(ds, &self.shapelets, self.delta, &self.embeddings, &self.config.shapelet.warp)
    }

    /// Report on a labeled dataset.
    pub fn evaluate(&self, ds: &Dataset<T>) -> Result<EvalReport> {
        let x = self.features(ds)?;
        let truth = labels_of(ds)?;
        let confusion = Confusion::from_predictions(&truth, &self.classifier.predict(&x)?)?;
        let fold = FoldReport {
            fold: 0,
            train_size: 0,
            test_size: truth.len(),
            config: self.selected.clone(),
            inner_score: self.inner_score,
            confusion,
            metrics: confusion.metrics(),
        };
        Ok(EvalReport::from_folds(
            SelectionMetric::for_positive_ratio(self.train_positive_ratio),
            vec![fold],
        ))
    }
}

fn labels_of<T>(ds: &Dataset<T>) -> Result<Vec<Label>> {
    ds.series
        .iter()
        .enumerate()
        .map(|(i, s)| s.label.ok_or_else(|| Error::TrainingData(format!("series {i} is unlabeled"))))
        .collect()
}

/// `[phi | handcrafted]` rows for every series in `ds`.
pub fn featurize<T: Scalar>(
    ds: &Dataset<T>,
    shapelets: &ShapeletSet<T>,
    delta: T,
    model: &EmbeddingModel<T>,
    warp: &WarpConfig,
) -> Result<Vec<Vec<T>>> {
    Ok(representations(ds, shapelets, delta, model, warp)?
        .iter()
        .map(|r| r.features())
        .collect())
}

pub fn representations<T: Scalar>(
    ds: &Dataset<T>,
    shapelets: &ShapeletSet<T>,
    delta: T,
    model: &EmbeddingModel<T>,
    warp: &WarpConfig,
) -> Result<Vec<crate::embed::SeriesRepresentation<T>>> {
    if model.len() != shapelets.shapelets.len() {
        return Err(Error::Dimension(format!(
            "embedding has {} rows for {} shapelets",
            model.len(),
            shapelets.shapelets.len()
        )));
    }
    let table = DistanceTable::compute(ds, &shapelets.shapelets, warp, None)?;
    let assignments = assign_segments(&table, delta)?;
    assignments
        .iter()
        .enumerate()
        .map(|(i, a)| {
            let segs: Vec<&[T]> = (0..ds.num_segments).map(|p| ds.segment(i, p)).collect();
            embed_series(a, &segs, model)
        })
        .collect()
}

/// Learned representation: shapelets, threshold, graph and embeddings.
#[derive(Debug, Clone)]
pub struct Representation<T> {
    pub shapelets: ShapeletSet<T>,
    pub delta: T,
    pub graph: EvolutionGraph<T>,
    pub embeddings: EmbeddingModel<T>,
}

fn learn_shapelets<T: Scalar>(ds: &Dataset<T>, cfg: &PipelineConfig) -> Result<ShapeletSet<T>> {
    let tc = &cfg.shapelet;
    let shapelets = if cfg.static_shapelets {
        extract_static_shapelets(ds, tc)?
    } else {
        extract_shapelets(ds, tc)?
    };
    let mut set = ShapeletSet::new(shapelets, ds.segment_length, ds.num_segments);
    set.static_factors = cfg.static_shapelets;
    Ok(set)
}

fn learn_graph<T: Scalar>(ds: &Dataset<T>, set: &ShapeletSet<T>, cfg: &PipelineConfig) -> Result<GraphArtifact<T>> {
    let table = DistanceTable::compute(ds, &set.shapelets, &cfg.shapelet.warp, None)?;
    let delta = compute_threshold(&table, cfg.delta_percentile)?;
    let assignments = assign_segments(&table, delta)?;
    let graph = build_graph(&assignments, set.shapelets.len())?;
    log::info!(
        "graph: {} vertices, {} edges, delta = {delta} ({}th percentile)",
        graph.vertex_count,
        graph.edges.len(),
        cfg.delta_percentile
    );
    Ok(GraphArtifact {
        delta,
        delta_percentile: cfg.delta_percentile,
        graph,
    })
}

fn learn_embeddings<T: Scalar>(graph: &EvolutionGraph<T>, cfg: &PipelineConfig) -> Result<EmbeddingModel<T>> {
    let walks = random_walks(graph, &cfg.walk)?;
    let out = train_skipgram(&walks, graph.vertex_count, &cfg.walk)?;
    if let (Some(first), Some(last)) = (out.epoch_losses.first(), out.epoch_losses.last()) {
        log::info!("skip-gram loss {first:.4} -> {last:.4} over {} walks", walks.len());
    }
    Ok(out.model)
}

/// Run representation learning end to end on one training set.
pub fn learn_representation<T: Scalar>(ds: &Dataset<T>, cfg: &PipelineConfig) -> Result<Representation<T>> {
    let shapelets = learn_shapelets(ds, cfg)?;
    let g = learn_graph(ds, &shapelets, cfg)?;
    let embeddings = learn_embeddings(&g.graph, cfg)?;
    Ok(Representation {
        shapelets,
        delta: g.delta,
        graph: g.graph,
        embeddings,
    })
}

fn prepare(cfg: &PipelineConfig) -> Result<PipelineConfig> {
    let mut cfg = cfg.clone();
    cfg.resolve_seed();
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out)?;
    Ok(cfg)
}

fn require<P: AsRef<Path>>(path: P, stage: &str) -> Result<P> {
    if path.as_ref().is_file() {
        Ok(path)
    } else {
        Err(Error::Artifact(format!(
            "{} not found; run the {stage} stage first",
            path.as_ref().display()
        )))
    }
}

fn load_shapelets<T: Scalar>(cfg: &PipelineConfig, ds: &Dataset<T>) -> Result<ShapeletSet<T>> {
    let set = ShapeletSet::load(require(cfg.path(SHAPELETS_FILE), "extract")?)?;
    if set.l != ds.segment_length || set.m != ds.num_segments {
        return Err(Error::Dimension(format!(
            "shapelets were learned with l = {}, m = {}; data has l = {}, m = {}",
            set.l, set.m, ds.segment_length, ds.num_segments
        )));
    }
    Ok(set)
}

/// Learn shapelets and write `shapelets.json`.
pub fn extract_stage<T: Scalar>(cfg: &PipelineConfig) -> Result<ShapeletSet<T>> {
    let cfg = prepare(cfg)?;
    run_in_pool(cfg.workers, || {
        let ds = cfg.load_train::<T>()?;
        let set = learn_shapelets(&ds, &cfg)?;
        set.save(cfg.path(SHAPELETS_FILE))?;
        Ok(set)
    })?
}

/// Build the evolution graph and write `graph.json`.
pub fn graph_stage<T: Scalar>(cfg: &PipelineConfig) -> Result<GraphArtifact<T>> {
    let cfg = prepare(cfg)?;
    run_in_pool(cfg.workers, || {
        let ds = cfg.load_train::<T>()?;
        let set = load_shapelets(&cfg, &ds)?;
        let g = learn_graph(&ds, &set, &cfg)?;
        artifact::write_json(cfg.path(GRAPH_FILE), &g)?;
        Ok(g)
    })?
}

/// Embed the graph; writes `embeddings.txt` and the training set's
/// representations to `representations.csv`.
pub fn embed_stage<T: Scalar>(cfg: &PipelineConfig) -> Result<EmbeddingModel<T>> {
    let cfg = prepare(cfg)?;
    run_in_pool(cfg.workers, || {
        let ds = cfg.load_train::<T>()?;
        let set = load_shapelets(&cfg, &ds)?;
        let g = GraphArtifact::<T>::load(require(cfg.path(GRAPH_FILE), "graph")?)?;
        if g.graph.vertex_count != set.shapelets.len() {
            return Err(Error::Dimension(format!(
                "graph has {} vertices for {} shapelets",
                g.graph.vertex_count,
                set.shapelets.len()
            )));
        }
        let model = learn_embeddings(&g.graph, &cfg)?;
        model.save(cfg.path(EMBEDDINGS_FILE))?;
        let reps = representations(&ds, &set, g.delta, &model, &cfg.shapelet.warp)?;
        write_representations_csv(cfg.path(REPRESENTATIONS_FILE), &reps, &ds.labels())?;
        Ok(model)
    })?
}

fn fit_bundle<T: Scalar>(cfg: &PipelineConfig, ds: &Dataset<T>, rep: Representation<T>) -> Result<ModelBundle<T>> {
    let x = featurize(ds, &rep.shapelets, rep.delta, &rep.embeddings, &cfg.shapelet.warp)?;
    let y = labels_of(ds)?;
    let selected = select_config(&x, &y, &cfg.grid(), &cfg.cv())?;
    let classifier = train_gbt(&x, &y, &selected.config)?;
    let m = ds.num_segments;
    Ok(ModelBundle {
        version: MODEL_SCHEMA.into(),
        config: cfg.clone(),
        label_map: ds.label_map,
        train_positive_ratio: ds.positive_ratio(),
        phi_len: m * rep.embeddings.dim,
        handcrafted_len: 2 * m,
        shapelets: rep.shapelets,
        delta: rep.delta,
        graph: rep.graph,
        embeddings: rep.embeddings,
        classifier,
        selected: selected.config,
        inner_score: selected.score,
        report: None,
    })
}

/// Train the classifier on the stored artifacts and write `model.json`.
pub fn train_stage<T: Scalar>(cfg: &PipelineConfig) -> Result<ModelBundle<T>> {
    let cfg = prepare(cfg)?;
    run_in_pool(cfg.workers, || {
        let ds = cfg.load_train::<T>()?;
        let shapelets = load_shapelets(&cfg, &ds)?;
        let g = GraphArtifact::<T>::load(require(cfg.path(GRAPH_FILE), "graph")?)?;
        let embeddings = EmbeddingModel::load(require(cfg.path(EMBEDDINGS_FILE), "embed")?)?;
        let rep = Representation {
            shapelets,
            delta: g.delta,
            graph: g.graph,
            embeddings,
        };
        let bundle = fit_bundle(&cfg, &ds, rep)?;
        bundle.save(cfg.path(MODEL_FILE))?;
        Ok(bundle)
    })?
}

/// Nested cross-validation over the training file, relearning the whole
/// representation inside every outer fold.
pub fn cross_validate<T: Scalar>(cfg: &PipelineConfig, ds: &Dataset<T>) -> Result<EvalReport> {
    let y = labels_of(ds)?;
    nested_cv(&y, &cfg.grid(), &cfg.cv(), |train: &[usize], test: &[usize]| {
        let (tr, te) = (ds.subset(train), ds.subset(test));
        let rep = learn_representation(&tr, cfg)?;
        let warp = &cfg.shapelet.warp;
        Ok((
            featurize(&tr, &rep.shapelets, rep.delta, &rep.embeddings, warp)?,
            featurize(&te, &rep.shapelets, rep.delta, &rep.embeddings, warp)?,
        ))
    })
}

/// Evaluate `model.json` on the test file, or by nested cross-validation on
/// the training file when no test file is configured. Writes `report.json`
/// and stores the report in the bundle.
pub fn evaluate_stage<T: Scalar>(cfg: &PipelineConfig) -> Result<EvalReport> {
    let cfg = prepare(cfg)?;
    run_in_pool(cfg.workers, || {
        let model_path = require(cfg.path(MODEL_FILE), "train")?;
        let mut bundle = ModelBundle::<T>::load(&model_path)?;
        let report = match cfg.load_test::<T>(bundle.label_map)? {
            Some(test) => bundle.evaluate(&test)?,
            None => cross_validate(&cfg, &cfg.load_train::<T>()?)?,
        };
        artifact::write_json(cfg.path(REPORT_FILE), &report)?;
        bundle.report = Some(report.clone());
        bundle.save(&model_path)?;
        Ok(report)
    })?
}

/// All stages in order.
pub fn run_all<T: Scalar>(cfg: &PipelineConfig) -> Result<EvalReport> {
    let cfg = prepare(cfg)?;
    extract_stage::<T>(&cfg)?;
    graph_stage::<T>(&cfg)?;
    embed_stage::<T>(&cfg)?;
    train_stage::<T>(&cfg)?;
    evaluate_stage::<T>(&cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub pairs: usize,
    pub length: usize,
    pub window: Option<usize>,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            pairs: 1000,
            length: 24,
            window: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub version: String,
    pub pairs: usize,
    pub length: usize,
    pub window: usize,
    pub exact_seconds: f64,
    pub greedy_seconds: f64,
    /// Mean of `(greedy - exact) / exact` over pairs with a non-zero exact
    /// distance.
    pub mean_relative_gap: f64,
    pub max_relative_gap: f64,
    pub max_cells_visited: usize,
    /// `2 * length`: the most cells a greedy path can visit.
    pub cell_bound: usize,
    pub greedy_never_below_exact: bool,
}

/// Greedy against exact warping on sampled pairs: segments of `ds` when given,
/// uniform random sequences otherwise.
pub fn bench<T: Scalar>(cfg: &BenchConfig, ds: Option<&Dataset<T>>) -> Result<BenchReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (length, pairs): (usize, Vec<(Vec<T>, Vec<T>)>) = match ds {
        Some(ds) => {
            let segs = ds.all_segments();
            let pick = |rng: &mut ChaCha8Rng| segs[rng.gen_range(0..segs.len())].values.to_vec();
            (ds.segment_length, (0..cfg.pairs).map(|_| (pick(&mut rng), pick(&mut rng))).collect())
        }
        None => {
            if cfg.length == 0 {
                return Err(config_err("length", "must be positive"));
            }
            let draw = |rng: &mut ChaCha8Rng| (0..cfg.length).map(|_| T::of(rng.gen::<f64>())).collect::<Vec<T>>();
            (cfg.length, (0..cfg.pairs).map(|_| (draw(&mut rng), draw(&mut rng))).collect())
        }
    };
    bench_pairs(&pairs, length, cfg.window.unwrap_or(length.div_ceil(2)))
}

/// Exact and greedy warping over the given equal-length pairs.
pub fn bench_pairs<T: Scalar>(pairs: &[(Vec<T>, Vec<T>)], length: usize, window: usize) -> Result<BenchReport> {
    if let Some((a, b)) = pairs.iter().find(|(a, b)| a.len() != length || b.len() != length) {
        return Err(Error::Dimension(format!(
            "bench pair of lengths {} and {}, expected {length}",
            a.len(),
            b.len()
        )));
    }
    let warp = WarpConfig::greedy(window);
    warp.validate()?;

    let t0 = Instant::now();
    let exact = pairs.iter().map(|(a, b)| dtw_exact(a, b)).collect::<Result<Vec<_>>>()?;
    let exact_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let greedy = pairs.iter().map(|(a, b)| dtw_greedy(a, b, &warp)).collect::<Result<Vec<_>>>()?;
    let greedy_seconds = t1.elapsed().as_secs_f64();

    let gaps: Vec<f64> = exact
        .iter()
        .zip(&greedy)
        .filter(|(e, _)| e.distance > T::zero())
        .map(|(e, g)| ((g.distance - e.distance) / e.distance).as_f64())
        .collect();
    let mean_relative_gap = if gaps.is_empty() { 0.0 } else { gaps.iter().sum::<f64>() / gaps.len() as f64 };
    Ok(BenchReport {
        version: BENCH_SCHEMA.into(),
        pairs: pairs.len(),
        length,
        window,
        exact_seconds,
        greedy_seconds,
        mean_relative_gap,
        max_relative_gap: gaps.iter().copied().fold(0.0, f64::max),
        max_cells_visited: greedy.iter().map(|g| g.cells_visited).max().unwrap_or(0),
        cell_bound: 2 * length,
        greedy_never_below_exact: exact.iter().zip(&greedy).all(|(e, g)| g.distance >= e.distance),
    })
}
