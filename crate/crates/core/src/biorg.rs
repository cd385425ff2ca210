//! Iterative bi-organization of the rows and columns of a data matrix.
//!
//! Starting from an initial metric on the features, the loop alternates:
//! a feature tree induces a tree metric between observations, from which an
//! observation tree is built, which in turn induces a metric between
//! features and a refreshed feature tree. The result is scored with the
//! coherence of the matrix in a bi-Haar-like basis.

use std::fs;
use std::io::Write;
use std::path::Path;

use log::{debug, info};
use ndarray::Array2;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::embedding::{initial_metric, median, MetricKind};
use crate::error::{check_len, Error, Result};
use crate::flexible::{build_flexible_tree, FlexibleTreeConfig};
use crate::matrix::Axis;
use crate::metrics::{folder_weights, pairwise_distances, WeightScheme};
use crate::tree::{leaf_order, PartitionTree};

/// An orthonormal basis of `R^n` adapted to a tree, stored as sparse rows.
///
/// Row 0 is the constant vector. Every other row is supported on a single
/// folder, constant on each of its children and orthogonal to the rows of
/// coarser folders.
#[derive(Clone, Debug, PartialEq)]
pub struct HaarBasis {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    /// Folder each row is supported on; `None` for the constant row.
    folders: Vec<Option<usize>>,
}

impl HaarBasis {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn support_folder(&self, i: usize) -> Option<usize> {
        self.folders[i]
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for (i, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                out[[i, c]] = v;
            }
        }
        out
    }

    /// `Ψ Z` for `Z` with one row per axis element.
    pub fn apply_to_rows(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        check_len(self.n, z.nrows())?;
        let mut out = Array2::zeros((self.n, z.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(c, v) in row {
                o.scaled_add(v, &z.row(c));
            }
        }
        Ok(out)
    }

    /// `Z Ψᵀ` for `Z` with one column per axis element.
    pub fn apply_to_cols(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        check_len(self.n, z.ncols())?;
        let mut out = Array2::zeros((z.nrows(), self.n));
        for (i, row) in self.rows.iter().enumerate() {
            let mut o = out.column_mut(i);
            for &(c, v) in row {
                o.scaled_add(v, &z.column(c));
            }
        }
        Ok(out)
    }
}

/// Builds the Haar-like basis of a tree.
///
/// For a folder with children `c_1, …, c_k` (ordered by smallest member),
/// row `m < k` is the normalized `1_{c_m} − (|c_m|/|R_m|)·1_{R_m}` with
/// `R_m = c_m ∪ … ∪ c_k`, which is what Gram–Schmidt produces from the child
/// indicators after removing the folder's constant vector. Pass-through
/// folders contribute nothing. Rows are listed coarse to fine.
pub fn haar_like_basis(tree: &PartitionTree) -> HaarBasis {
    let n = tree.axis_size();
    let mut rows = vec![(0..n).map(|x| (x, 1.0 / (n as f64).sqrt())).collect::<Vec<_>>()];
    let mut folders = vec![None];
    for l in (1..=tree.depth()).rev() {
        for &id in tree.level(l) {
            let mut kids: Vec<&[usize]> = tree
                .children(id)
                .iter()
                .map(|&c| tree.folder(c).members.as_slice())
                .collect();
            kids.sort_by_key(|m| m[0]);
            let mut rest: usize = kids.iter().map(|m| m.len()).sum();
            for m in 0..kids.len().saturating_sub(1) {
                let a = kids[m].len() as f64;
                let r = rest as f64;
                let norm = (a * (r - a) / r).sqrt();
                let inside = (1.0 - a / r) / norm;
                let outside = -(a / r) / norm;
                let mut row: Vec<(usize, f64)> = kids[m].iter().map(|&x| (x, inside)).collect();
                row.extend(kids[m + 1..].iter().flat_map(|k| k.iter().map(|&x| (x, outside))));
                row.sort_unstable_by_key(|e| e.0);
                rows.push(row);
                folders.push(Some(id));
                rest -= kids[m].len();
            }
        }
    }
    debug_assert_eq!(rows.len(), n);
    HaarBasis { n, rows, folders }
}

/// `(1/(n_X n_Y))·‖Ψ_X Z Ψ_Yᵀ‖₁`. Lower is smoother.
pub fn coherence(z: &Array2<f64>, tree_x: &PartitionTree, tree_y: &PartitionTree) -> Result<f64> {
    check_len(tree_x.axis_size(), z.nrows())?;
    check_len(tree_y.axis_size(), z.ncols())?;
    coherence_in(z, &haar_like_basis(tree_x), &haar_like_basis(tree_y))
}

fn coherence_in(z: &Array2<f64>, psi_x: &HaarBasis, psi_y: &HaarBasis) -> Result<f64> {
    let c = psi_y.apply_to_cols(&psi_x.apply_to_rows(z)?)?;
    let total: f64 = c.iter().map(|v| v.abs()).sum();
    Ok(total / (z.nrows() * z.ncols()) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stopping {
    /// Always run `max_iterations`.
    #[default]
    FixedIterations,
    /// Stop at the first iteration whose coherence does not decrease and
    /// keep the trees of the previous iteration.
    CoherenceDecrease,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiOrgConfig {
    pub max_iterations: usize,
    /// Weights on the feature tree, used for distances between observations.
    pub weights_x: WeightScheme,
    /// Weights on the observation tree, used for distances between features.
    pub weights_y: WeightScheme,
    pub tree_x: FlexibleTreeConfig,
    pub tree_y: FlexibleTreeConfig,
    pub initial_metric: MetricKind,
    pub stopping: Stopping,
}

impl Default for BiOrgConfig {
    fn default() -> Self {
        Self {
            max_iterations: 2,
            weights_x: WeightScheme::DataDriven,
            weights_y: WeightScheme::DataDriven,
            tree_x: FlexibleTreeConfig::default(),
            tree_y: FlexibleTreeConfig::default(),
            initial_metric: MetricKind::Correlation,
            stopping: Stopping::FixedIterations,
        }
    }
}

impl BiOrgConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        self.tree_x.validate()?;
        self.tree_y.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrganizationResult {
    pub tree_x: PartitionTree,
    pub tree_y: PartitionTree,
    /// Coherence after each completed iteration.
    pub coherence_trace: Vec<f64>,
    pub leaf_order_x: Vec<usize>,
    pub leaf_order_y: Vec<usize>,
}

impl OrganizationResult {
    fn new(tree_x: PartitionTree, tree_y: PartitionTree, coherence_trace: Vec<f64>) -> Self {
        let leaf_order_x = leaf_order(&tree_x);
        let leaf_order_y = leaf_order(&tree_y);
        Self {
            tree_x,
            tree_y,
            coherence_trace,
            leaf_order_x,
            leaf_order_y,
        }
    }

    /// Writes `tree_x.json`, `tree_y.json`, `coherence.csv`,
    /// `leaf_order_x.csv` and `leaf_order_y.csv` into `dir`.
    pub fn write_dir(&self, dir: &Path, feature_ids: &[String], observation_ids: &[String]) -> Result<()> {
        check_len(self.tree_x.axis_size(), feature_ids.len())?;
        check_len(self.tree_y.axis_size(), observation_ids.len())?;
        fs::create_dir_all(dir)?;
        self.tree_x.write(&dir.join("tree_x.json"))?;
        self.tree_y.write(&dir.join("tree_y.json"))?;
        let mut f = fs::File::create(dir.join("coherence.csv"))?;
        writeln!(f, "iteration,coherence")?;
        for (i, c) in self.coherence_trace.iter().enumerate() {
            writeln!(f, "{},{c:?}", i + 1)?;
        }
        write_leaf_order(&dir.join("leaf_order_x.csv"), &self.leaf_order_x, feature_ids)?;
        write_leaf_order(&dir.join("leaf_order_y.csv"), &self.leaf_order_y, observation_ids)?;
        Ok(())
    }
}

fn write_leaf_order(path: &Path, order: &[usize], ids: &[String]) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "position,index,id")?;
    for (p, &i) in order.iter().enumerate() {
        writeln!(f, "{p},{i},{}", ids[i])?;
    }
    Ok(())
}

/// Flexible tree on one axis of `z` from a tree over the other axis.
fn tree_from_other(
    z: &Array2<f64>,
    other: &PartitionTree,
    scheme: WeightScheme,
    axis: Axis,
    config: &FlexibleTreeConfig,
) -> Result<PartitionTree> {
    let w = folder_weights(other, scheme, Some((z, axis.other())))?;
    let d = pairwise_distances(other, &w, z, axis)?;
    build_flexible_tree(&d, config)
}

/// Runs the full loop: an initial feature tree from `config.initial_metric`,
/// then [`iterate_from`].
pub fn bi_organize(z: &Array2<f64>, config: &BiOrgConfig) -> Result<OrganizationResult> {
    config.validate()?;
    if z.nrows() < 2 {
        return Err(Error::InvalidInput(
            "bi-organization needs at least two features".into(),
        ));
    }
    let d0 = initial_metric(z, Axis::Rows, config.initial_metric);
    let tree_x0 = build_flexible_tree(&d0, &config.tree_x)?;
    iterate_from(z, tree_x0, config)
}

/// The iterative part of the loop, starting from a given feature tree.
///
/// Iteration `n` builds the observation tree from the current feature tree,
/// then refreshes the feature tree from that observation tree, and records
/// the coherence of the resulting pair.
pub fn iterate_from(z: &Array2<f64>, tree_x0: PartitionTree, config: &BiOrgConfig) -> Result<OrganizationResult> {
    config.validate()?;
    check_len(tree_x0.axis_size(), z.nrows())?;
    if z.nrows() < 2 || z.ncols() < 2 {
        return Err(Error::InvalidInput(
            "bi-organization needs at least a 2 x 2 matrix".into(),
        ));
    }
    let mut tree_x = tree_x0;
    let mut best: Option<(PartitionTree, PartitionTree)> = None;
    let mut trace = Vec::new();
    for n in 1..=config.max_iterations {
        let tree_y = tree_from_other(z, &tree_x, config.weights_x, Axis::Cols, &config.tree_y)?;
        let next_x = tree_from_other(z, &tree_y, config.weights_y, Axis::Rows, &config.tree_x)?;
        let c = coherence(z, &next_x, &tree_y)?;
        info!("iteration {n}: coherence {c:.6}");
        let stop = config.stopping == Stopping::CoherenceDecrease && trace.last().is_some_and(|&prev| c >= prev);
        trace.push(c);
        if stop {
            debug!("coherence did not decrease; keeping iteration {}", n - 1);
            break;
        }
        tree_x = next_x.clone();
        best = Some((next_x, tree_y));
    }
    let (tree_x, tree_y) = best.expect("at least one iteration");
    Ok(OrganizationResult::new(tree_x, tree_y, trace))
}

/// Four-point differences `|Z(x,y) − Z(x′,y) − Z(x,y′) + Z(x′,y′)|` on
/// neighbouring leaves versus random pairs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HolderDiagnostic {
    pub adjacent_median: f64,
    pub random_median: f64,
}

/// Compares four-point differences of `z` between pairs that are adjacent in
/// the given leaf orders and `samples` random pairs drawn with `seed`.
pub fn mixed_holder_diagnostic(
    z: &Array2<f64>,
    leaf_order_x: &[usize],
    leaf_order_y: &[usize],
    samples: usize,
    seed: u64,
) -> Result<HolderDiagnostic> {
    check_len(z.nrows(), leaf_order_x.len())?;
    check_len(z.ncols(), leaf_order_y.len())?;
    if z.nrows() < 2 || z.ncols() < 2 || samples == 0 {
        return Err(Error::InvalidInput(
            "diagnostic needs a 2 x 2 matrix and samples".into(),
        ));
    }
    let four = |x: usize, x2: usize, y: usize, y2: usize| (z[[x, y]] - z[[x2, y]] - z[[x, y2]] + z[[x2, y2]]).abs();
    let mut adjacent: Vec<f64> = leaf_order_x
        .windows(2)
        .collect::<Vec<_>>()
        .par_iter()
        .flat_map_iter(|wx| leaf_order_y.windows(2).map(move |wy| four(wx[0], wx[1], wy[0], wy[1])))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<usize> = (0..z.nrows()).collect();
    let cols: Vec<usize> = (0..z.ncols()).collect();
    let mut random: Vec<f64> = (0..samples)
        .map(|_| {
            let x: Vec<&usize> = rows.choose_multiple(&mut rng, 2).collect();
            let y: Vec<&usize> = cols.choose_multiple(&mut rng, 2).collect();
            four(*x[0], *x[1], *y[0], *y[1])
        })
        .collect();
    Ok(HolderDiagnostic {
        adjacent_median: median(&mut adjacent).unwrap_or(0.0),
        random_median: median(&mut random).unwrap_or(0.0),
    })
}
