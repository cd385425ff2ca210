use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use log::info;
use ndarray::Array2;
use serde_json::json;
use treeorg::biorg::{bi_organize, coherence as tree_coherence, BiOrgConfig, Stopping};
use treeorg::embedding::{initial_metric, MetricKind};
use treeorg::evaluation::{
    adjusted_rand_index, clusters_at_level, insert_samples, level_with_folder_count, log_rank, rand_index,
    variation_of_information,
};
use treeorg::flexible::{build_flexible_tree, FlexibleTreeConfig};
use treeorg::heatmap::{heatmap_svg, Annotation, HeatmapStyle};
use treeorg::io::{encode_labels, read_labels, read_matrix_path, read_survival, write_labels, write_matrix, Delimiter};
use treeorg::metrics::{
    folder_weights, multi_tree_pairwise_distances, pairwise_distances, write_distance_csv, FolderWeights, WeightScheme,
};
use treeorg::refinement::{default_refine_level, local_refine, local_refine_features, Refinement};
use treeorg::synth::{planted_blocks, planted_subpopulations, BlockConfig, Planted, SubpopulationConfig};
use treeorg::transforms::{build_averaging, build_difference, build_structure, TransformKind, TreeTransform};
use treeorg::{Axis, DataMatrix, PartitionTree};

use crate::config::Config;
use crate::options::{parse_pair, AxisArg, KindArg, MetricArg, RefineArg, StoppingArg, TransformArg, WeightsArg};
use crate::{InputArgs, OrganizeArgs, TreeArgs, WeightArgs};

fn load_matrix(config: &Config, input: &InputArgs) -> Result<DataMatrix> {
    let delimiter = config.pick_opt(input.delimiter, "delimiter")?.map(Delimiter::from);
    let zscore = config.pick(input.zscore.then_some(true), "zscore", false)?;
    let m = read_matrix_path(&input.input, delimiter).with_context(|| format!("reading {}", input.input.display()))?;
    info!(
        "read {}x{} matrix from {}",
        m.n_features(),
        m.n_observations(),
        input.input.display()
    );
    Ok(if zscore { m.zscore_rows() } else { m })
}

fn read_tree(path: &Path) -> Result<PartitionTree> {
    PartitionTree::read(path).with_context(|| format!("reading tree {}", path.display()))
}

fn tree_config(config: &Config, args: &TreeArgs) -> Result<FlexibleTreeConfig> {
    let d = FlexibleTreeConfig::default();
    let c = FlexibleTreeConfig {
        epsilon: config.pick(args.epsilon, "epsilon", d.epsilon)?,
        dim: config.pick_opt(args.dim, "dim")?,
        diffusion_time: config.pick(args.diffusion_time, "diffusion-time", d.diffusion_time)?,
        max_levels: config.pick(args.max_levels, "max-levels", d.max_levels)?,
        ..d
    };
    c.validate()?;
    Ok(c)
}

fn weight_scheme(config: &Config, args: &WeightArgs) -> Result<WeightScheme> {
    let kind = config.pick(args.weights, "weights", WeightsArg::DataDriven)?;
    let alpha = config.pick(args.alpha, "alpha", 1.0)?;
    let beta = config.pick(args.beta, "beta", 0.0)?;
    Ok(kind.scheme(alpha, beta))
}

fn organize_config(config: &Config, args: &OrganizeArgs) -> Result<BiOrgConfig> {
    let scheme = weight_scheme(config, &args.weights)?;
    let tree = tree_config(config, &args.tree)?;
    let c = BiOrgConfig {
        max_iterations: config.pick(args.iters, "iters", 2)?,
        weights_x: scheme,
        weights_y: scheme,
        tree_x: tree,
        tree_y: tree,
        initial_metric: config.pick(args.metric, "metric", MetricArg::Correlation)?.into(),
        stopping: Stopping::from(config.pick(args.stopping, "stopping", StoppingArg::Fixed)?),
    };
    c.validate()?;
    Ok(c)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

pub fn build_tree(
    config: &Config,
    input: &InputArgs,
    axis: AxisArg,
    metric: Option<MetricArg>,
    tree: &TreeArgs,
    out: &Path,
) -> Result<()> {
    let m = load_matrix(config, input)?;
    let kind: MetricKind = config.pick(metric, "metric", MetricArg::Correlation)?.into();
    let d = initial_metric(m.values(), axis.into(), kind);
    let t = build_flexible_tree(&d, &tree_config(config, tree)?)?;
    t.write(out)?;
    Ok(())
}

pub fn biorg(
    config: &Config,
    input: &InputArgs,
    organize: &OrganizeArgs,
    out: &Path,
    heatmap: bool,
    annotations: &[std::path::PathBuf],
) -> Result<()> {
    let m = load_matrix(config, input)?;
    let c = organize_config(config, organize)?;
    let r = bi_organize(m.values(), &c)?;
    r.write_dir(out, m.feature_ids(), m.observation_ids())?;
    info!("coherence trace {:?}", r.coherence_trace);
    if heatmap {
        let tracks = annotations
            .iter()
            .map(|p| annotation(p, m.observation_ids()))
            .collect::<Result<Vec<_>>>()?;
        let svg = heatmap_svg(
            m.values(),
            &r.leaf_order_x,
            &r.leaf_order_y,
            &tracks,
            &HeatmapStyle::default(),
        )?;
        fs::write(out.join("heatmap.svg"), svg)?;
    }
    Ok(())
}

/// Labels from an `id,label` file, matched to `ids`.
fn annotation(path: &Path, ids: &[String]) -> Result<Annotation> {
    let (file_ids, labels) = read_labels(File::open(path).with_context(|| format!("reading {}", path.display()))?)?;
    let by_id: std::collections::HashMap<&str, &str> = file_ids
        .iter()
        .map(String::as_str)
        .zip(labels.iter().map(String::as_str))
        .collect();
    let labels = ids
        .iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|l| l.to_string())
                .with_context(|| format!("{} has no label for {id}", path.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let name = path
        .file_stem()
        .map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Ok(Annotation { name, labels })
}

fn write_other_trees(dir: &Path, prefix: &str, r: &Refinement) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::new();
    for (folder, tree) in r.folders.iter().zip(&r.other_trees) {
        let name = format!("{prefix}_{folder}.json");
        tree.write(&dir.join(&name))?;
        names.push(name);
    }
    Ok(names)
}

#[allow(clippy::too_many_arguments)]
pub fn refine(
    config: &Config,
    input: &InputArgs,
    tree_x: &Path,
    tree_y: &Path,
    axis: RefineArg,
    level: Option<usize>,
    organize: &OrganizeArgs,
    out: &Path,
) -> Result<()> {
    let m = load_matrix(config, input)?;
    let z = m.values();
    let c = organize_config(config, organize)?;
    let (mut tx, mut ty) = (read_tree(tree_x)?, read_tree(tree_y)?);
    let level = config.pick_opt(level, "level")?;
    let global = tree_coherence(z, &tx, &ty)?;
    fs::create_dir_all(out)?;
    let mut local = serde_json::Map::new();
    if matches!(axis, RefineArg::Cols | RefineArg::Both) {
        let l = level.map_or_else(|| default_refine_level(&ty), Ok)?;
        let r = local_refine(z, &ty, l, &c)?;
        local.insert(
            "feature_trees".into(),
            json!(write_other_trees(&out.join("local"), "tree_x", &r)?),
        );
        ty = r.tree;
    }
    if matches!(axis, RefineArg::Rows | RefineArg::Both) {
        let l = level.map_or_else(|| default_refine_level(&tx), Ok)?;
        let r = local_refine_features(z, &tx, l, &c)?;
        local.insert(
            "observation_trees".into(),
            json!(write_other_trees(&out.join("local"), "tree_y", &r)?),
        );
        tx = r.tree;
    }
    tx.write(&out.join("tree_x.json"))?;
    ty.write(&out.join("tree_y.json"))?;
    fs::write(
        out.join("local_trees.json"),
        serde_json::to_string_pretty(&local)? + "\n",
    )?;
    let refined = tree_coherence(z, &tx, &ty)?;
    let mut f = create(&out.join("coherence.csv"))?;
    writeln!(f, "stage,coherence")?;
    writeln!(f, "global,{global:?}")?;
    writeln!(f, "refined,{refined:?}")?;
    f.flush()?;
    Ok(())
}

fn weights_for(tree: &PartitionTree, scheme: WeightScheme, z: &Array2<f64>, axis: Axis) -> Result<FolderWeights> {
    Ok(folder_weights(tree, scheme, Some((z, axis)))?)
}

pub fn metric(
    config: &Config,
    input: &InputArgs,
    trees: &[std::path::PathBuf],
    between: AxisArg,
    weights: &WeightArgs,
    out: Option<&Path>,
) -> Result<()> {
    let m = load_matrix(config, input)?;
    let z = m.values();
    let between = Axis::from(between);
    let scheme = weight_scheme(config, weights)?;
    let trees = trees.iter().map(|p| read_tree(p)).collect::<Result<Vec<_>>>()?;
    let w = trees
        .iter()
        .map(|t| weights_for(t, scheme, z, between.other()))
        .collect::<Result<Vec<_>>>()?;
    let d = if trees.len() == 1 {
        pairwise_distances(&trees[0], &w[0], z, between)?
    } else {
        let tr: Vec<&PartitionTree> = trees.iter().collect();
        let wr: Vec<&FolderWeights> = w.iter().collect();
        multi_tree_pairwise_distances(&tr, &wr, z, between)?
    };
    let ids = m.ids(between);
    match out {
        Some(p) => {
            let mut f = create(p)?;
            write_distance_csv(&mut f, ids, &d)?;
            f.flush()?;
        }
        None => write_distance_csv(io::stdout().lock(), ids, &d)?,
    }
    Ok(())
}

pub fn transform(tree: &Path, kind: TransformArg, out: &Path) -> Result<()> {
    let t = read_tree(tree)?;
    let op: TreeTransform = match TransformKind::from(kind) {
        TransformKind::Structure => build_structure(&t),
        TransformKind::Averaging => build_averaging(&t),
        TransformKind::Difference => build_difference(&t),
    };
    let mut f = create(out)?;
    op.write_triplets(&mut f)?;
    f.flush()?;
    fs::write(out.with_extension("json"), op.sidecar_json() + "\n")?;
    Ok(())
}

pub fn coherence(config: &Config, input: &InputArgs, tree_x: &Path, tree_y: &Path) -> Result<()> {
    let m = load_matrix(config, input)?;
    let c = tree_coherence(m.values(), &read_tree(tree_x)?, &read_tree(tree_y)?)?;
    println!("{c:?}");
    Ok(())
}

pub fn evaluate(
    config: &Config,
    tree: &Path,
    level: Option<usize>,
    folders: Option<usize>,
    labels: Option<&Path>,
    survival: Option<&Path>,
    out: Option<&Path>,
) -> Result<()> {
    let t = read_tree(tree)?;
    let level = match (config.pick_opt(level, "level")?, folders) {
        (_, Some(k)) => level_with_folder_count(&t, k).with_context(|| format!("no level has {k} folders"))?,
        (Some(l), None) => l,
        (None, None) => bail!("give --level or --folders"),
    };
    if labels.is_none() && survival.is_none() {
        bail!("give --labels and/or --survival");
    }
    let clusters = clusters_at_level(&t, level)?;
    let mut report = serde_json::Map::new();
    report.insert("level".into(), json!(level));
    report.insert("folders".into(), json!(t.level(level).len()));
    if let Some(p) = labels {
        let (_, raw) = read_labels(File::open(p).with_context(|| format!("reading {}", p.display()))?)?;
        let truth = encode_labels(&raw);
        report.insert(
            "clustering".into(),
            json!({
                "rand_index": rand_index(&clusters, &truth)?,
                "adjusted_rand_index": adjusted_rand_index(&clusters, &truth)?,
                "variation_of_information": variation_of_information(&clusters, &truth)?,
            }),
        );
    }
    if let Some(p) = survival {
        let (_, cohort) = read_survival(File::open(p).with_context(|| format!("reading {}", p.display()))?)?;
        let cohort = cohort.with_groups(clusters.iter().map(|&c| c as i64).collect())?;
        let groups = cohort.groups();
        report.insert("log_rank".into(), serde_json::to_value(log_rank(&cohort, &groups)?)?);
    }
    let text = serde_json::to_string_pretty(&report)? + "\n";
    match out {
        Some(p) => fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn insert(
    config: &Config,
    input: &InputArgs,
    tree_x: &Path,
    tree_y: &Path,
    new: &Path,
    weights: &WeightArgs,
    out: &Path,
) -> Result<()> {
    let train = load_matrix(config, input)?;
    let fresh = load_matrix(
        config,
        &InputArgs {
            input: new.to_path_buf(),
            ..input.clone()
        },
    )?;
    if fresh.feature_ids() != train.feature_ids() {
        bail!("new samples must have the training features in the same order");
    }
    let (tx, ty) = (read_tree(tree_x)?, read_tree(tree_y)?);
    let w = weights_for(&tx, weight_scheme(config, weights)?, train.values(), Axis::Rows)?;
    let ins = insert_samples(train.values(), &ty, &tx, &w, fresh.values())?;
    fs::create_dir_all(out)?;
    let mut f = create(&out.join("assignments.csv"))?;
    writeln!(f, "id,folder")?;
    for (id, a) in fresh.observation_ids().iter().zip(&ins.assignments) {
        writeln!(f, "{id},{a}")?;
    }
    f.flush()?;
    ins.tree.write(&out.join("tree.json"))?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn synth(
    kind: KindArg,
    blocks: &str,
    size: &str,
    noise: Option<f64>,
    contrast: f64,
    width: f64,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let (row_blocks, col_blocks) = parse_pair(blocks).map_err(anyhow::Error::msg)?;
    let (n_rows, n_cols) = parse_pair(size).map_err(anyhow::Error::msg)?;
    let planted: Planted = match kind {
        KindArg::Blocks => planted_blocks(&BlockConfig {
            n_rows,
            n_cols,
            row_blocks,
            col_blocks,
            contrast,
            noise: noise.unwrap_or(0.5),
            seed,
        })?,
        KindArg::Subpopulations => {
            if row_blocks != col_blocks {
                bail!("sub-populations need the same number of row and column groups");
            }
            planted_subpopulations(&SubpopulationConfig {
                n_rows,
                n_cols,
                groups: row_blocks,
                width,
                offset: contrast,
                noise: noise.unwrap_or(0.02),
                seed,
            })?
        }
    };
    let m = DataMatrix::from_values(planted.values)?;
    fs::create_dir_all(out)?;
    let mut f = create(&out.join("matrix.csv"))?;
    write_matrix(&mut f, &m, Delimiter::Comma)?;
    f.flush()?;
    let mut f = create(&out.join("row_labels.csv"))?;
    write_labels(&mut f, m.feature_ids(), &planted.row_labels)?;
    f.flush()?;
    let mut f = create(&out.join("col_labels.csv"))?;
    write_labels(&mut f, m.observation_ids(), &planted.col_labels)?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_config() {
        let config = Config::parse("epsilon = 0.5\nweights = size\nbeta = 2\n").unwrap();
        let args = TreeArgs {
            epsilon: Some(2.0),
            ..Default::default()
        };
        assert_eq!(tree_config(&config, &args).unwrap().epsilon, 2.0);
        assert_eq!(tree_config(&config, &TreeArgs::default()).unwrap().epsilon, 0.5);
        let w = weight_scheme(&config, &WeightArgs::default()).unwrap();
        assert_eq!(w, WeightScheme::SizeBeta { beta: 2.0 });
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let config = Config::parse("epsilon = -1\n").unwrap();
        assert!(tree_config(&config, &TreeArgs::default()).is_err());
    }
}
