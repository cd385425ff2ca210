use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod options;

use config::Config;
use options::{AxisArg, DelimiterArg, KindArg, MetricArg, RefineArg, StoppingArg, TransformArg, WeightsArg};

/// Tree-based organization of data matrices.
#[derive(Debug, Parser)]
#[command(name = "treeorg", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to TREEORG_THREADS, then all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Flat `key = value` file supplying defaults for flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct InputArgs {
    /// Matrix file: header of observation ids, then one feature per line.
    #[arg(long)]
    pub input: PathBuf,
    /// `comma` or `tab`; inferred from the extension when absent.
    #[arg(long)]
    pub delimiter: Option<DelimiterArg>,
    /// Z-score every feature before use.
    #[arg(long)]
    pub zscore: bool,
}

#[derive(Debug, Args, Clone, Default)]
pub struct TreeArgs {
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Diffusion embedding dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub diffusion_time: Option<u32>,
    #[arg(long)]
    pub max_levels: Option<usize>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct WeightArgs {
    /// `data-driven`, `size` or `level`.
    #[arg(long)]
    pub weights: Option<WeightsArg>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
}

#[derive(Debug, Args, Clone, Default)]
pub struct OrganizeArgs {
    #[arg(long)]
    pub iters: Option<usize>,
    #[command(flatten)]
    pub weights: WeightArgs,
    /// Initial metric: `correlation` or `euclidean`.
    #[arg(long)]
    pub metric: Option<MetricArg>,
    /// `fixed` or `coherence`.
    #[arg(long)]
    pub stopping: Option<StoppingArg>,
    #[command(flatten)]
    pub tree: TreeArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a flexible tree over the rows or columns from the initial metric.
    BuildTree {
        #[command(flatten)]
        input: InputArgs,
        /// Axis whose elements the tree partitions.
        #[arg(long, default_value = "cols")]
        axis: AxisArg,
        #[arg(long)]
        metric: Option<MetricArg>,
        #[command(flatten)]
        tree: TreeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Iteratively organize features and observations.
    Biorg {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        organize: OrganizeArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write heatmap.svg.
        #[arg(long)]
        heatmap: bool,
        /// `id,label` files drawn as tracks under the heatmap columns.
        #[arg(long)]
        annotations: Vec<PathBuf>,
    },
    /// Refine trees from a previous run folder by folder.
    Refine {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        tree_x: PathBuf,
        #[arg(long)]
        tree_y: PathBuf,
        /// Axis to refine: `rows` (feature tree), `cols` (observation tree) or `both`.
        #[arg(long, default_value = "cols")]
        axis: RefineArg,
        /// Level whose folders are refined; defaults to two below the root.
        #[arg(long)]
        level: Option<usize>,
        #[command(flatten)]
        organize: OrganizeArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pairwise tree distances as CSV.
    Metric {
        #[command(flatten)]
        input: InputArgs,
        /// Tree over the other axis; repeat for the multi-tree distance.
        #[arg(long = "tree", required = true)]
        trees: Vec<PathBuf>,
        /// Axis whose elements are compared.
        #[arg(long, default_value = "cols")]
        between: AxisArg,
        #[command(flatten)]
        weights: WeightArgs,
        /// CSV path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a tree transform as `row,col,value` triplets plus a JSON sidecar.
    Transform {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        kind: TransformArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the coherence of a matrix under a pair of trees.
    Coherence {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        tree_x: PathBuf,
        #[arg(long)]
        tree_y: PathBuf,
    },
    /// Compare a tree level with reference labels or survival data.
    Evaluate {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        level: Option<usize>,
        /// Use the coarsest level with this many folders.
        #[arg(long, conflicts_with = "level")]
        folders: Option<usize>,
        /// `id,label` file in element order.
        #[arg(long)]
        labels: Option<PathBuf>,
        /// `id,time,event,group` file in element order; groups are replaced by clusters.
        #[arg(long)]
        survival: Option<PathBuf>,
        /// JSON report path; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Place new samples into a trained organization.
    Insert {
        #[command(flatten)]
        input: InputArgs,
        #[arg(long)]
        tree_x: PathBuf,
        #[arg(long)]
        tree_y: PathBuf,
        /// Matrix of new observations over the same features.
        #[arg(long)]
        new: PathBuf,
        #[command(flatten)]
        weights: WeightArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a matrix with planted structure and its labels.
    Synth {
        #[arg(long, default_value = "blocks")]
        kind: KindArg,
        /// Row and column groups, `RxC`.
        #[arg(long, default_value = "4x4")]
        blocks: String,
        /// Rows and columns, `RxC`.
        #[arg(long, default_value = "200x200")]
        size: String,
        /// Noise standard deviation relative to the contrast; 0.5 for
        /// blocks and 0.02 for sub-populations.
        #[arg(long)]
        noise: Option<f64>,
        /// Step between block levels.
        #[arg(long, default_value_t = 1.0)]
        contrast: f64,
        /// Bump width of the sub-population kind.
        #[arg(long, default_value_t = 0.1)]
        width: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

fn threads(flag: Option<usize>, config: &Config) -> Result<usize> {
    let env = match std::env::var("TREEORG_THREADS") {
        Ok(v) => v
            .parse()
            .map_err(|_| anyhow::anyhow!("TREEORG_THREADS must be a non-negative integer, got {v:?}"))?,
        Err(_) => 0,
    };
    config.pick(flag, "threads", env)
}

fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = config.pick(cli.seed, "seed", 0u64)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads(cli.threads, &config)?)
        .build()?;
    pool.install(|| dispatch(cli.command, &config, seed))
}

fn dispatch(command: Command, config: &Config, seed: u64) -> Result<()> {
    match command {
        Command::BuildTree {
            input,
            axis,
            metric,
            tree,
            out,
        } => commands::build_tree(config, &input, axis, metric, &tree, &out),
        Command::Biorg {
            input,
            organize,
            out,
            heatmap,
            annotations,
        } => commands::biorg(config, &input, &organize, &out, heatmap, &annotations),
        Command::Refine {
            input,
            tree_x,
            tree_y,
            axis,
            level,
            organize,
            out,
        } => commands::refine(config, &input, &tree_x, &tree_y, axis, level, &organize, &out),
        Command::Metric {
            input,
            trees,
            between,
            weights,
            out,
        } => commands::metric(config, &input, &trees, between, &weights, out.as_deref()),
        Command::Transform { tree, kind, out } => commands::transform(&tree, kind, &out),
        Command::Coherence { input, tree_x, tree_y } => commands::coherence(config, &input, &tree_x, &tree_y),
        Command::Evaluate {
            tree,
            level,
            folders,
            labels,
            survival,
            out,
        } => commands::evaluate(
            config,
            &tree,
            level,
            folders,
            labels.as_deref(),
            survival.as_deref(),
            out.as_deref(),
        ),
        Command::Insert {
            input,
            tree_x,
            tree_y,
            new,
            weights,
            out,
        } => commands::insert(config, &input, &tree_x, &tree_y, &new, &weights, &out),
        Command::Synth {
            kind,
            blocks,
            size,
            noise,
            contrast,
            width,
            out,
        } => commands::synth(kind, &blocks, &size, noise, contrast, width, seed, &out),
    }
}

/// One line: `error kind=<tag>: <message>`.
fn error_line(err: &anyhow::Error) -> String {
    let kind = err
        .chain()
        .find_map(|e| e.downcast_ref::<treeorg::Error>())
        .map_or("cli", |e| e.kind());
    let mut message = String::new();
    for cause in err.chain().map(|e| e.to_string()) {
        if message.ends_with(&cause) {
            continue;
        }
        if !message.is_empty() {
            message.push_str(": ");
        }
        message.push_str(&cause);
    }
    let message = message.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("error kind={kind}: {message}")
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let message = e.to_string();
            let text: Vec<&str> = message
                .lines()
                .take_while(|l| !l.starts_with("Usage:"))
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .collect();
            let text = text.join(" ");
            eprintln!("error kind=usage: {}", text.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", error_line(&e));
            ExitCode::FAILURE
        }
    }
}
