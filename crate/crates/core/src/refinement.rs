//! Local refinement of a bi-organization.
//!
//! Every folder of one level of the observation tree is organized on its
//! own: the features get a fresh tree from the metric restricted to that
//! branch, the loop runs on the folder's columns, and the resulting local
//! observation trees are grafted back in place of the original branches.

use ndarray::{Array2, Axis as NdAxis};
use rayon::prelude::*;

use crate::biorg::{iterate_from, BiOrgConfig};
use crate::error::{Error, Result};
use crate::flexible::build_flexible_tree;
use crate::matrix::Axis;
use crate::metrics::{folder_weights, pairwise_distances, WeightScheme};
use crate::tree::PartitionTree;

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    /// The tree with every level-`l` branch replaced by its local tree.
    pub tree: PartitionTree,
    /// One tree over the other axis per refined folder, in folder-id order.
    pub other_trees: Vec<PartitionTree>,
    /// The refined folders, in the same order.
    pub folders: Vec<usize>,
}

/// Default level to refine: `L − 2`, kept within `1..=L−1`.
pub fn default_refine_level(tree: &PartitionTree) -> Result<usize> {
    let depth = tree.depth();
    if depth < 2 {
        return Err(Error::LevelOutOfRange {
            level: 1,
            min: 1,
            max: depth.saturating_sub(1),
        });
    }
    Ok(depth.saturating_sub(2).clamp(1, depth - 1))
}

/// Refines the observation tree `tree_y` of `z` at `level`.
pub fn local_refine(z: &Array2<f64>, tree_y: &PartitionTree, level: usize, config: &BiOrgConfig) -> Result<Refinement> {
    config.validate()?;
    if tree_y.axis_size() != z.ncols() {
        return Err(Error::DimensionMismatch {
            expected: z.ncols(),
            actual: tree_y.axis_size(),
        });
    }
    let depth = tree_y.depth();
    if depth < 2 || level < 1 || level > depth - 1 {
        return Err(Error::LevelOutOfRange {
            level,
            min: 1,
            max: depth.saturating_sub(1),
        });
    }
    let folders = tree_y.level(level).to_vec();
    let local: Vec<(PartitionTree, PartitionTree)> = folders
        .par_iter()
        .map(|&id| refine_folder(z, tree_y, id, config))
        .collect::<Result<_>>()?;
    let (locals, other_trees): (Vec<_>, Vec<_>) = local.into_iter().unzip();
    let replacements: Vec<(usize, PartitionTree)> = folders.iter().copied().zip(locals).collect();
    let tree = merge_subtrees(tree_y, &replacements)?;
    Ok(Refinement {
        tree,
        other_trees,
        folders,
    })
}

/// Refines the feature tree `tree_x` of `z` at `level` by running
/// [`local_refine`] on `Zᵀ` with the roles of the axes swapped.
pub fn local_refine_features(
    z: &Array2<f64>,
    tree_x: &PartitionTree,
    level: usize,
    config: &BiOrgConfig,
) -> Result<Refinement> {
    let swapped = BiOrgConfig {
        weights_x: config.weights_y,
        weights_y: config.weights_x,
        tree_x: config.tree_y,
        tree_y: config.tree_x,
        ..*config
    };
    local_refine(&z.t().to_owned(), tree_x, level, &swapped)
}

/// Local observation tree and feature tree for one folder.
fn refine_folder(
    z: &Array2<f64>,
    tree_y: &PartitionTree,
    folder: usize,
    config: &BiOrgConfig,
) -> Result<(PartitionTree, PartitionTree)> {
    let w = folder_weights(tree_y, WeightScheme::BranchIndicator { root: folder }, None)?;
    let d0 = pairwise_distances(tree_y, &w, z, Axis::Rows)?;
    let tree_x0 = build_flexible_tree(&d0, &config.tree_x)?;
    let members = &tree_y.folder(folder).members;
    if members.len() < 2 {
        return Ok((PartitionTree::trivial(members.len()), tree_x0));
    }
    let sub = z.select(NdAxis(1), members);
    let r = iterate_from(&sub, tree_x0, config)?;
    Ok((r.tree_y, r.tree_x))
}

/// Replaces the branch below `folder` with `local`, whose elements are the
/// folder's members in ascending order.
pub fn merge_subtree(global: &PartitionTree, folder: usize, local: &PartitionTree) -> Result<PartitionTree> {
    merge_subtrees(global, &[(folder, local.clone())])
}

/// Replaces several branches rooted at folders of one level.
///
/// With the folders at level `l` and the deepest local tree of depth `L′`,
/// the merged tree has `D = max(l, L′)` levels up to the refined level.
/// Shallower branches (original or local) are padded with pass-through
/// folders above their own top, and the original levels above `l` follow.
pub fn merge_subtrees(global: &PartitionTree, replacements: &[(usize, PartitionTree)]) -> Result<PartitionTree> {
    let Some(&(first, _)) = replacements.first() else {
        return Ok(global.clone());
    };
    if first >= global.num_folders() {
        return Err(Error::InvalidInput(format!("folder {first} does not exist")));
    }
    let l = global.folder(first).level;
    let mut by_folder = vec![None; global.num_folders()];
    for (id, local) in replacements {
        if *id >= global.num_folders() || global.folder(*id).level != l {
            return Err(Error::InvalidInput(format!("folder {id} is not at level {l}")));
        }
        if local.axis_size() != global.folder(*id).len() {
            return Err(Error::InvalidInput(format!(
                "member-set mismatch: folder {id} has {} members, local tree has {}",
                global.folder(*id).len(),
                local.axis_size()
            )));
        }
        if by_folder[*id].replace(local).is_some() {
            return Err(Error::InvalidInput(format!("folder {id} replaced twice")));
        }
    }
    let d = replacements.iter().map(|(_, t)| t.depth()).max().unwrap_or(0).max(l);
    let mut partitions: Vec<Vec<Vec<usize>>> = Vec::new();
    for k in 0..=d {
        let mut level = Vec::new();
        for &id in global.level(l) {
            let members = &global.folder(id).members;
            match by_folder[id] {
                Some(local) => {
                    let lk = k.min(local.depth());
                    level.extend(
                        local
                            .level(lk)
                            .iter()
                            .map(|&f| local.folder(f).members.iter().map(|&i| members[i]).collect::<Vec<_>>()),
                    );
                }
                None => {
                    let lk = k.min(l);
                    level.extend(
                        global
                            .level(lk)
                            .iter()
                            .map(|&f| &global.folder(f).members)
                            .filter(|m| members.binary_search(&m[0]).is_ok())
                            .cloned(),
                    );
                }
            }
        }
        partitions.push(level);
    }
    for k in l + 1..=global.depth() {
        partitions.push(
            global
                .level(k)
                .iter()
                .map(|&f| global.folder(f).members.clone())
                .collect(),
        );
    }
    PartitionTree::from_partitions(global.axis_size(), partitions)
}

/// Difference energy of the folders of one level.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelScore {
    pub level: usize,
    /// `(folder id, ℓ₂ norm of its difference-transform row over the data)`.
    pub folders: Vec<(usize, f64)>,
    pub mean: f64,
}

/// Per-folder difference energies grouped by level, to help choose a level
/// whose folders differ from their parents. `axis` is the axis of `z` that
/// `tree` indexes.
pub fn level_energy_scores(tree: &PartitionTree, z: &Array2<f64>, axis: Axis) -> Result<Vec<LevelScore>> {
    let w = folder_weights(tree, WeightScheme::DataDriven, Some((z, axis)))?;
    Ok(tree
        .levels()
        .iter()
        .enumerate()
        .map(|(level, ids)| {
            let folders: Vec<(usize, f64)> = ids.iter().map(|&id| (id, w.get(id))).collect();
            let mean = folders.iter().map(|f| f.1).sum::<f64>() / folders.len() as f64;
            LevelScore { level, folders, mean }
        })
        .collect())
}
