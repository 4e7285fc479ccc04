use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use shapegraph::artifact::write_json;
use shapegraph::graph::GraphFormat;
use shapegraph::pipeline::{self, BenchConfig, GraphArtifact, PipelineConfig, BENCH_FILE};
use shapegraph::{Error, Result, Scalar};

#[derive(Parser)]
#[command(name = "shapegraph", version, about = "Time series classification with time-aware shapelets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn shapelets from the training file.
    Extract(Common),
    /// Build the shapelet evolution graph.
    Graph {
        #[command(flatten)]
        common: Common,
        /// Also write the graph as an edge list or Graphviz file.
        #[arg(long, value_enum)]
        export: Option<Export>,
    },
    /// Embed graph vertices and represent the training series.
    Embed(Common),
    /// Train the classifier and write the model bundle.
    Train(Common),
    /// Evaluate the model bundle on the test file (or by nested CV).
    Evaluate(Common),
    /// Run every stage.
    Run(Common),
    /// Compare greedy and exact warping on sampled pairs.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Sequence length when no training file is given.
        #[arg(long)]
        length: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Export {
    Edges,
    Dot,
}

#[derive(Clone, Copy, Default, ValueEnum)]
enum Precision {
    F32,
    #[default]
    F64,
}

/// Flags shared by all subcommands. Precedence: defaults, `--preset`,
/// `--config`, `--set`, then the dedicated flags.
#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    /// Extra `key=value` settings (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    delimiter: Option<String>,
    #[arg(long)]
    positive_label: Option<i64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "SHAPEGRAPH_WORKERS")]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value_t)]
    precision: Precision,

    #[arg(short = 'K', long)]
    num_shapelets: Option<usize>,
    #[arg(short = 'l', long)]
    segment_length: Option<usize>,
    #[arg(short = 'B', long)]
    embedding_dim: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    shapelet_lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    pool_factor: Option<usize>,
    #[arg(long)]
    softmin_temp: Option<f64>,
    #[arg(long)]
    kl_direction: Option<String>,
    /// Train timing factors only for the best candidates by static loss.
    #[arg(long)]
    prefilter: bool,
    /// Shapelets without timing factors.
    #[arg(long = "static")]
    static_shapelets: bool,
    #[arg(long)]
    warp_mode: Option<String>,
    #[arg(long)]
    warp_window: Option<usize>,
    #[arg(long)]
    delta_percentile: Option<f64>,

    #[arg(long)]
    walks_per_vertex: Option<usize>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    negative_samples: Option<usize>,
    #[arg(long)]
    walk_epochs: Option<usize>,
    #[arg(long)]
    walk_lr: Option<f64>,

    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long)]
    boost_lr: Option<f64>,
    #[arg(long)]
    class_weight: Option<f64>,
    #[arg(long)]
    num_rounds: Option<usize>,
    #[arg(long)]
    subsample: Option<f64>,
    /// `fixed` or `full`.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    folds: Option<usize>,
}

impl Common {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn put<V: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<V>) {
            if let Some(v) = v {
                out.push((key, v.to_string()));
            }
        }
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        let mut o = Vec::new();
        put(&mut o, "train", &path(&self.train));
        put(&mut o, "test", &path(&self.test));
        put(&mut o, "out", &path(&self.out));
        put(&mut o, "delimiter", &self.delimiter);
        put(&mut o, "positive_label", &self.positive_label);
        put(&mut o, "seed", &self.seed);
        put(&mut o, "workers", &self.workers);
        put(&mut o, "K", &self.num_shapelets);
        put(&mut o, "l", &self.segment_length);
        put(&mut o, "B", &self.embedding_dim);
        put(&mut o, "lambda", &self.lambda);
        put(&mut o, "epsilon", &self.epsilon);
        put(&mut o, "epochs", &self.epochs);
        put(&mut o, "shapelet_lr", &self.shapelet_lr);
        put(&mut o, "batch_size", &self.batch_size);
        put(&mut o, "pool_factor", &self.pool_factor);
        put(&mut o, "softmin_temp", &self.softmin_temp);
        put(&mut o, "kl_direction", &self.kl_direction);
        put(&mut o, "warp_mode", &self.warp_mode);
        put(&mut o, "warp_window", &self.warp_window);
        put(&mut o, "delta_percentile", &self.delta_percentile);
        put(&mut o, "walks_per_vertex", &self.walks_per_vertex);
        put(&mut o, "walk_length", &self.walk_length);
        put(&mut o, "window_size", &self.window_size);
        put(&mut o, "negative_samples", &self.negative_samples);
        put(&mut o, "walk_epochs", &self.walk_epochs);
        put(&mut o, "walk_lr", &self.walk_lr);
        put(&mut o, "max_depth", &self.max_depth);
        put(&mut o, "boost_lr", &self.boost_lr);
        put(&mut o, "class_weight", &self.class_weight);
        put(&mut o, "num_rounds", &self.num_rounds);
        put(&mut o, "subsample", &self.subsample);
        put(&mut o, "grid", &self.grid);
        put(&mut o, "folds", &self.folds);
        if self.prefilter {
            o.push(("prefilter", "true".into()));
        }
        if self.static_shapelets {
            o.push(("static", "true".into()));
        }
        o
    }

    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        if let Some(p) = &self.preset {
            cfg.apply_preset(p)?;
        }
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config {
                field: "set".into(),
                reason: format!("expected KEY=VALUE, got {kv:?}"),
            })?;
            cfg.set(k.trim(), v)?;
        }
        for (k, v) in self.overrides() {
            cfg.set(k, &v)?;
        }
        if cfg.workers.is_none() {
            cfg.workers = std::thread::available_parallelism().ok().map(|n| n.get());
        }
        Ok(cfg)
    }
}

fn dispatch<T: Scalar>(command: &Command) -> Result<()> {
    match command {
        Command::Extract(c) => {
            let set = pipeline::extract_stage::<T>(&c.config()?)?;
            println!("extracted {} shapelets (l = {}, m = {})", set.k, set.l, set.m);
        }
        Command::Graph { common, export } => {
            let cfg = common.config()?;
            let g: GraphArtifact<T> = pipeline::graph_stage(&cfg)?;
            if let Some(e) = export {
                let (file, format) = match e {
                    Export::Edges => ("graph.edges", GraphFormat::EdgeList),
                    Export::Dot => ("graph.dot", GraphFormat::Dot),
                };
                g.graph.export(cfg.path(file), format)?;
            }
            println!(
                "graph: {} vertices, {} edges, delta = {}",
                g.graph.vertex_count,
                g.graph.edges.len(),
                g.delta
            );
        }
        Command::Embed(c) => {
            let m = pipeline::embed_stage::<T>(&c.config()?)?;
            println!("embedded {} vertices in {} dimensions", m.len(), m.dim);
        }
        Command::Train(c) => {
            let b = pipeline::train_stage::<T>(&c.config()?)?;
            let s = &b.selected;
            println!(
                "trained {} trees (depth {}, lr {}, class weight {})",
                b.classifier.trees.len(),
                s.max_depth,
                s.learning_rate,
                s.class_weight
            );
        }
        Command::Evaluate(c) => {
            print!("{}", pipeline::evaluate_stage::<T>(&c.config()?)?.to_table());
        }
        Command::Run(c) => {
            print!("{}", pipeline::run_all::<T>(&c.config()?)?.to_table());
        }
        Command::Bench { common, pairs, length } => {
            let mut cfg = common.config()?;
            let seed = cfg.resolve_seed();
            let ds = match &cfg.train {
                Some(_) => Some(cfg.load_train::<T>()?),
                None => None,
            };
            let bench = BenchConfig {
                pairs: *pairs,
                length: length.unwrap_or(cfg.segment_length),
                window: cfg.shapelet.warp.window,
                seed,
            };
            let report = pipeline::bench(&bench, ds.as_ref())?;
            std::fs::create_dir_all(&cfg.out)?;
            write_json(cfg.path(BENCH_FILE), &report)?;
            println!(
                "{} pairs: exact {:.4}s, greedy {:.4}s, mean relative gap {:.4}, max cells {} (bound {})",
                report.pairs,
                report.exact_seconds,
                report.greedy_seconds,
                report.mean_relative_gap,
                report.max_cells_visited,
                report.cell_bound
            );
        }
    }
    Ok(())
}

fn precision(command: &Command) -> Precision {
    match command {
        Command::Extract(c) | Command::Embed(c) | Command::Train(c) | Command::Evaluate(c) | Command::Run(c) => {
            c.precision
        }
        Command::Graph { common, .. } | Command::Bench { common, .. } => common.precision,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("error[usage]: {first}");
            return ExitCode::from(2);
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();

    let result = match precision(&cli.command) {
        Precision::F32 => dispatch::<f32>(&cli.command),
        Precision::F64 => dispatch::<f64>(&cli.command),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.kind());
            ExitCode::from(match e {
                Error::Config { .. } | Error::Argument(_) => 2,
                _ => 1,
            })
        }
    }
}
