//! Folder weights and the tree-based earth mover's distance.
//!
//! For a tree over one axis, the distance between two vectors `y, y'` on
//! that axis is `Σ_I ω(I)·|m(y − y', I)|`, which equals the weighted ℓ₁
//! norm `‖W M (y − y')‖₁` of the averaging-transform coefficients. The
//! joint-tree and multi-tree variants follow from the same identity.

use std::io::Write;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::matrix::Axis;
use crate::transforms::{build_averaging, build_difference, build_multi_tree, TreeTransform};
use crate::tree::PartitionTree;

/// How a weight `ω(I)` is assigned to every folder.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum WeightScheme {
    /// `(|I|/n)^β`.
    SizeBeta { beta: f64 },
    /// `2^(−α·l(I))·(|I|/n)^β`.
    LevelAlphaBeta { alpha: f64, beta: f64 },
    /// ℓ₂ norm of the folder's difference-transform row over the data.
    #[default]
    DataDriven,
    /// 1 on a branch (the folder and everything below it), 0 elsewhere.
    BranchIndicator { root: usize },
}

/// One non-negative weight per folder of a tree.
#[derive(Clone, Debug, PartialEq)]
pub struct FolderWeights {
    scheme: WeightScheme,
    values: Vec<f64>,
    signature: u64,
}

impl FolderWeights {
    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, folder: usize) -> f64 {
        self.values[folder]
    }

    /// Data-driven weights from precomputed difference coefficients, one row
    /// per folder.
    pub fn from_difference_coefficients(tree: &PartitionTree, delta_z: &Array2<f64>) -> Result<Self> {
        check_len(tree.num_folders(), delta_z.nrows())?;
        Ok(Self {
            scheme: WeightScheme::DataDriven,
            values: delta_z
                .rows()
                .into_iter()
                .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
                .collect(),
            signature: tree.signature(),
        })
    }

    fn check_tree(&self, tree: &PartitionTree) -> Result<()> {
        if self.signature != tree.signature() {
            return Err(Error::ProvenanceMismatch);
        }
        Ok(())
    }
}

/// Computes folder weights. `data` is required by the data-driven scheme:
/// the matrix and the axis of it that `tree` indexes.
pub fn folder_weights(
    tree: &PartitionTree,
    scheme: WeightScheme,
    data: Option<(&Array2<f64>, Axis)>,
) -> Result<FolderWeights> {
    let n = tree.axis_size() as f64;
    let values = match scheme {
        WeightScheme::SizeBeta { beta } => tree.folders().iter().map(|f| (f.len() as f64 / n).powf(beta)).collect(),
        WeightScheme::LevelAlphaBeta { alpha, beta } => tree
            .folders()
            .iter()
            .map(|f| (-alpha * f.level as f64).exp2() * (f.len() as f64 / n).powf(beta))
            .collect(),
        WeightScheme::DataDriven => {
            let (z, axis) = data.ok_or(Error::MissingInput("data-driven weights need a data matrix"))?;
            let d: TreeTransform = build_difference(tree);
            let coeffs = match axis {
                Axis::Rows => d.apply_to_rows(z)?,
                Axis::Cols => d.apply_to_cols(z)?.t().to_owned(),
            };
            return FolderWeights::from_difference_coefficients(tree, &coeffs);
        }
        WeightScheme::BranchIndicator { root } => {
            if root >= tree.num_folders() {
                return Err(Error::InvalidInput(format!("branch root {root} is not a folder")));
            }
            let mut w = vec![0.0; tree.num_folders()];
            for id in tree.descendants(root) {
                w[id] = 1.0;
            }
            w
        }
    };
    Ok(FolderWeights {
        scheme,
        values,
        signature: tree.signature(),
    })
}

/// Tree distance between two vectors over the tree's axis.
pub fn tree_distance(tree: &PartitionTree, weights: &FolderWeights, y: &[f64], y2: &[f64]) -> Result<f64> {
    weights.check_tree(tree)?;
    check_len(tree.axis_size(), y.len())?;
    check_len(tree.axis_size(), y2.len())?;
    let m: TreeTransform = build_averaging(tree);
    let diff: Vec<f64> = y.iter().zip(y2).map(|(a, b)| a - b).collect();
    let coeffs = m.apply(&diff)?;
    Ok(coeffs.iter().zip(weights.values()).map(|(c, w)| w * c.abs()).sum())
}

/// Weighted averaging coefficients, one row per element of `between`, with
/// zero-weight folders dropped.
fn embedded_coefficients(
    tree: &PartitionTree,
    weights: &FolderWeights,
    z: &Array2<f64>,
    between: Axis,
) -> Result<Array2<f64>> {
    weights.check_tree(tree)?;
    let m: TreeTransform = build_averaging(tree);
    // Rows of `coeffs` are the elements being compared.
    let coeffs = match between {
        Axis::Cols => m.apply_to_rows(z)?.t().to_owned(),
        Axis::Rows => m.apply_to_cols(z)?,
    };
    let keep: Vec<usize> = (0..tree.num_folders()).filter(|&i| weights.get(i) != 0.0).collect();
    Ok(Array2::from_shape_fn((coeffs.nrows(), keep.len()), |(a, k)| {
        weights.get(keep[k]) * coeffs[[a, keep[k]]]
    }))
}

/// ℓ₁ distances between all rows of `points`. Each entry is accumulated in a
/// fixed order, so the result does not depend on the thread count.
pub(crate) fn l1_pairwise(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let pa = points.row(a);
            (a + 1..n)
                .map(|b| pa.iter().zip(points.row(b)).map(|(u, v)| (u - v).abs()).sum())
                .collect()
        })
        .collect();
    let mut out = Array2::zeros((n, n));
    for (a, row) in upper.into_iter().enumerate() {
        for (k, d) in row.into_iter().enumerate() {
            let b = a + 1 + k;
            out[[a, b]] = d;
            out[[b, a]] = d;
        }
    }
    out
}

/// Tree distances between every pair of elements of the axis `between`,
/// using a tree over the other axis of `z`.
pub fn pairwise_distances(
    tree: &PartitionTree,
    weights: &FolderWeights,
    z: &Array2<f64>,
    between: Axis,
) -> Result<Array2<f64>> {
    check_len(tree.axis_size(), between.other().len_of(z))?;
    let points = embedded_coefficients(tree, weights, z, between)?;
    Ok(l1_pairwise(&points))
}

/// Joint-tree distance between two matrices of the same shape:
/// `‖Wx Mx (Z1 − Z2) Myᵀ Wy‖₁`.
pub fn joint_distance(
    tree_x: &PartitionTree,
    tree_y: &PartitionTree,
    wx: &FolderWeights,
    wy: &FolderWeights,
    z1: &Array2<f64>,
    z2: &Array2<f64>,
) -> Result<f64> {
    wx.check_tree(tree_x)?;
    wy.check_tree(tree_y)?;
    if z1.dim() != z2.dim() {
        return Err(Error::InvalidInput(format!(
            "matrix shapes differ: {:?} vs {:?}",
            z1.dim(),
            z2.dim()
        )));
    }
    check_len(tree_x.axis_size(), z1.nrows())?;
    check_len(tree_y.axis_size(), z1.ncols())?;
    let diff = z1 - z2;
    let mx: TreeTransform = build_averaging(tree_x);
    let my: TreeTransform = build_averaging(tree_y);
    let c = my.apply_to_cols(&mx.apply_to_rows(&diff)?)?;
    let mut total = 0.0;
    for (i, row) in c.rows().into_iter().enumerate() {
        let wi = wx.get(i);
        if wi == 0.0 {
            continue;
        }
        total += wi * row.iter().zip(wy.values()).map(|(v, w)| w * v.abs()).sum::<f64>();
    }
    Ok(total)
}

/// Diagonal weights of the multi-tree transform. A deduplicated root or leaf
/// row carries the sum of its weights over all trees, so the metric equals
/// the average of the single-tree metrics.
fn multi_tree_weights(trees: &[&PartitionTree], weights: &[&FolderWeights]) -> Result<Vec<f64>> {
    check_len(trees.len(), weights.len())?;
    for (t, w) in trees.iter().zip(weights) {
        w.check_tree(t)?;
    }
    let mt = build_multi_tree(trees)?;
    Ok(mt
        .provenance()
        .iter()
        .zip(mt.multiplicity())
        .map(|(&(t, id), &mult)| {
            if mult == 1 {
                weights[t].get(id)
            } else {
                // Shared rows come from tree 0; map to each tree's own folder.
                let f = trees[t].folder(id);
                trees
                    .iter()
                    .zip(weights)
                    .map(|(tree, w)| {
                        let own = if f.level == 0 {
                            tree.folder_of(0, f.members[0])
                        } else {
                            tree.root()
                        };
                        w.get(own)
                    })
                    .sum()
            }
        })
        .collect())
}

/// Multi-tree distance `(1/n_T)·‖W̃ M̃ (y − y')‖₁`.
pub fn multi_tree_distance(trees: &[&PartitionTree], weights: &[&FolderWeights], y: &[f64], y2: &[f64]) -> Result<f64> {
    let w = multi_tree_weights(trees, weights)?;
    let mt = build_multi_tree(trees)?;
    check_len(mt.n_cols(), y.len())?;
    check_len(mt.n_cols(), y2.len())?;
    let diff: Vec<f64> = y.iter().zip(y2).map(|(a, b)| a - b).collect();
    let coeffs = mt.apply(&diff)?;
    let total: f64 = coeffs.iter().zip(&w).map(|(c, w)| w * c.abs()).sum();
    Ok(total / trees.len() as f64)
}

/// Multi-tree distances between every pair of elements of `between`.
pub fn multi_tree_pairwise_distances(
    trees: &[&PartitionTree],
    weights: &[&FolderWeights],
    z: &Array2<f64>,
    between: Axis,
) -> Result<Array2<f64>> {
    let w = multi_tree_weights(trees, weights)?;
    let mt = build_multi_tree(trees)?;
    check_len(mt.n_cols(), between.other().len_of(z))?;
    let n = between.len_of(z);
    let scale = 1.0 / trees.len() as f64;
    let mut points = Array2::zeros((n, mt.n_rows()));
    for a in 0..n {
        let c = mt.apply_view(between.lane(z, a))?;
        for (k, (cv, wv)) in c.iter().zip(&w).enumerate() {
            points[[a, k]] = scale * wv * cv;
        }
    }
    Ok(l1_pairwise(&points))
}

/// Writes a square distance matrix as CSV with an id header row and column.
pub fn write_distance_csv<W: Write>(mut w: W, ids: &[String], d: &Array2<f64>) -> Result<()> {
    check_len(ids.len(), d.nrows())?;
    write!(w, "id")?;
    for id in ids {
        write!(w, ",{id}")?;
    }
    writeln!(w)?;
    for (id, row) in ids.iter().zip(d.rows()) {
        write!(w, "{id}")?;
        for v in row {
            write!(w, ",{v:?}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::fixtures::eight_leaf_tree;
    use ndarray::array;

    /// Σ_I ω(I)·|mean of (y − y') over I|, straight from the definition.
    fn naive_distance(tree: &PartitionTree, w: &FolderWeights, y: &[f64], y2: &[f64]) -> f64 {
        tree.folders()
            .iter()
            .map(|f| {
                let m: f64 = f.members.iter().map(|&x| y[x] - y2[x]).sum::<f64>() / f.len() as f64;
                w.get(f.id) * m.abs()
            })
            .sum()
    }

    #[test]
    fn unit_weights_when_exponents_vanish() {
        let t = eight_leaf_tree();
        let w = folder_weights(&t, WeightScheme::LevelAlphaBeta { alpha: 0.0, beta: 0.0 }, None).unwrap();
        assert!(w.values().iter().all(|&v| v == 1.0));
        for beta in [-1.5, 0.5, 2.0] {
            let w = folder_weights(&t, WeightScheme::SizeBeta { beta }, None).unwrap();
            assert_eq!(w.get(t.root()), 1.0);
            assert!(w.values().iter().all(|v| v.is_finite() && *v > 0.0));
        }
        let w = folder_weights(&t, WeightScheme::SizeBeta { beta: -1.0 }, None).unwrap();
        assert_eq!(w.get(0), 8.0);
    }

    #[test]
    fn level_alpha_weights() {
        let t = eight_leaf_tree();
        let w = folder_weights(&t, WeightScheme::LevelAlphaBeta { alpha: 1.0, beta: 1.0 }, None).unwrap();
        // Folder {5,6,7} at level 1: 2^-1 * 3/8.
        let id = t.folder_of(1, 5);
        assert!((w.get(id) - 0.5 * 3.0 / 8.0).abs() < 1e-15);
    }

    #[test]
    fn data_driven_on_constant_data() {
        let t = eight_leaf_tree();
        let z = Array2::from_elem((8, 5), -3.0);
        let w = folder_weights(&t, WeightScheme::DataDriven, Some((&z, Axis::Rows))).unwrap();
        for (i, v) in w.values().iter().enumerate() {
            if i == t.root() {
                assert!((v - 5f64.sqrt() * 3.0).abs() < 1e-12);
            } else {
                assert!(v.abs() < 1e-12);
            }
        }
        assert!(folder_weights(&t, WeightScheme::DataDriven, None).is_err());
        // Same tree over the columns of the transposed matrix.
        let wt = folder_weights(&t, WeightScheme::DataDriven, Some((&z.t().to_owned(), Axis::Cols))).unwrap();
        for (a, b) in w.values().iter().zip(wt.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn branch_indicator_weights() {
        let t = eight_leaf_tree();
        let branch = t.folder_of(2, 0);
        let w = folder_weights(&t, WeightScheme::BranchIndicator { root: branch }, None).unwrap();
        for f in t.folders() {
            let inside = f.members.iter().all(|&x| x < 5);
            assert_eq!(w.get(f.id), if inside { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn two_leaf_distance() {
        let t = PartitionTree::trivial(2);
        let w = folder_weights(&t, WeightScheme::SizeBeta { beta: 1.0 }, None).unwrap();
        let d = tree_distance(&t, &w, &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((d - 1.0).abs() < 1e-15);
        assert_eq!(tree_distance(&t, &w, &[1.0, 0.0], &[1.0, 0.0]).unwrap(), 0.0);
        assert!(tree_distance(&t, &w, &[1.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn transform_form_matches_naive_sum() {
        let t = eight_leaf_tree();
        let y: Vec<f64> = (0..8).map(|i| (i as f64 * 1.3).sin()).collect();
        let y2: Vec<f64> = (0..8).map(|i| (i as f64 * 0.7).cos()).collect();
        for scheme in [
            WeightScheme::SizeBeta { beta: 0.5 },
            WeightScheme::LevelAlphaBeta { alpha: -0.5, beta: 1.0 },
            WeightScheme::BranchIndicator { root: 9 },
        ] {
            let w = folder_weights(&t, scheme, None).unwrap();
            let a = tree_distance(&t, &w, &y, &y2).unwrap();
            let b = naive_distance(&t, &w, &y, &y2);
            assert!((a - b).abs() <= 1e-12 * (1.0 + b));
        }
    }

    #[test]
    fn pairwise_matches_single_calls() {
        let t = eight_leaf_tree();
        let z = Array2::from_shape_fn((8, 3), |(i, j)| ((i * 3 + j) as f64).sin());
        let w = folder_weights(&t, WeightScheme::DataDriven, Some((&z, Axis::Rows))).unwrap();
        let d = pairwise_distances(&t, &w, &z, Axis::Cols).unwrap();
        for a in 0..3 {
            assert_eq!(d[[a, a]], 0.0);
            for b in 0..3 {
                let ya = z.column(a).to_vec();
                let yb = z.column(b).to_vec();
                let single = tree_distance(&t, &w, &ya, &yb).unwrap();
                assert!((d[[a, b]] - single).abs() < 1e-12);
                assert_eq!(d[[a, b]], d[[b, a]]);
            }
        }
    }

    #[test]
    fn duplicate_columns_have_zero_distance() {
        let t = PartitionTree::trivial(3);
        let z = array![[1.0, 1.0, 0.0], [2.0, 2.0, 5.0], [3.0, 3.0, 1.0]];
        let w = folder_weights(&t, WeightScheme::SizeBeta { beta: 0.0 }, None).unwrap();
        let d = pairwise_distances(&t, &w, &z, Axis::Cols).unwrap();
        assert_eq!(d[[0, 1]], 0.0);
        assert!(d[[0, 2]] > 0.0);
    }

    #[test]
    fn leaf_only_weights_give_l1() {
        let t = eight_leaf_tree();
        let z = Array2::from_shape_fn((8, 4), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0);
        let mut w = folder_weights(&t, WeightScheme::SizeBeta { beta: 0.0 }, None).unwrap();
        for f in t.folders() {
            w.values[f.id] = if f.level == 0 { 1.0 } else { 0.0 };
        }
        let d = pairwise_distances(&t, &w, &z, Axis::Cols).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let l1: f64 = (0..8).map(|x| (z[[x, a]] - z[[x, b]]).abs()).sum();
                assert!((d[[a, b]] - l1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn row_distances_use_tree_over_columns() {
        let t = PartitionTree::trivial(3);
        let z = array![[1.0, 2.0, 3.0], [1.0, 2.0, 4.0]];
        let w = folder_weights(&t, WeightScheme::SizeBeta { beta: 1.0 }, None).unwrap();
        let d = pairwise_distances(&t, &w, &z, Axis::Rows).unwrap();
        // leaves: (1/3)*1, root: 1 * 1/3
        assert!((d[[0, 1]] - 2.0 / 3.0).abs() < 1e-15);
        assert!(pairwise_distances(&t, &w, &z, Axis::Cols).is_err());
    }

    #[test]
    fn joint_distance_examples() {
        let tx = PartitionTree::trivial(2);
        let ty = PartitionTree::trivial(3);
        let wx = folder_weights(&tx, WeightScheme::SizeBeta { beta: 0.0 }, None).unwrap();
        let wy = folder_weights(&ty, WeightScheme::SizeBeta { beta: 0.0 }, None).unwrap();
        let z1 = array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]];
        assert_eq!(joint_distance(&tx, &ty, &wx, &wy, &z1, &z1).unwrap(), 0.0);
        let z2 = z1.mapv(|v| v + 1.0);
        // Every joint folder mean shifts by 1: (2+1)·(3+1) = 12 folders.
        let d = joint_distance(&tx, &ty, &wx, &wy, &z1, &z2).unwrap();
        assert!((d - 12.0).abs() < 1e-12);
    }

    #[test]
    fn multi_tree_reduces_to_single_tree() {
        let t = eight_leaf_tree();
        let w = folder_weights(&t, WeightScheme::SizeBeta { beta: 0.5 }, None).unwrap();
        let y: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y2: Vec<f64> = (0..8).map(|i| (8 - i) as f64 * 0.5).collect();
        let single = tree_distance(&t, &w, &y, &y2).unwrap();
        let one = multi_tree_distance(&[&t], &[&w], &y, &y2).unwrap();
        let two = multi_tree_distance(&[&t, &t], &[&w, &w], &y, &y2).unwrap();
        assert!((single - one).abs() < 1e-12);
        assert!((single - two).abs() < 1e-12);
    }

    #[test]
    fn multi_tree_averages_distinct_trees() {
        let t1 = PartitionTree::from_partitions(
            4,
            vec![
                (0..4).map(|i| vec![i]).collect(),
                vec![vec![0, 1], vec![2, 3]],
                vec![(0..4).collect()],
            ],
        )
        .unwrap();
        let t2 = PartitionTree::from_partitions(
            4,
            vec![
                (0..4).map(|i| vec![i]).collect(),
                vec![vec![0, 3], vec![1], vec![2]],
                vec![(0..4).collect()],
            ],
        )
        .unwrap();
        let y = [1.0, -2.0, 0.5, 4.0];
        let y2 = [0.0, 1.0, 1.0, 1.0];
        let z = Array2::from_shape_fn((4, 3), |(i, j)| (i * j) as f64 + 0.25 * i as f64);
        for scheme in [WeightScheme::SizeBeta { beta: 1.0 }, WeightScheme::DataDriven] {
            let w1 = folder_weights(&t1, scheme, Some((&z, Axis::Rows))).unwrap();
            let w2 = folder_weights(&t2, scheme, Some((&z, Axis::Rows))).unwrap();
            let expected = 0.5 * (naive_distance(&t1, &w1, &y, &y2) + naive_distance(&t2, &w2, &y, &y2));
            let got = multi_tree_distance(&[&t1, &t2], &[&w1, &w2], &y, &y2).unwrap();
            assert!((got - expected).abs() < 1e-12 * (1.0 + expected), "{got} vs {expected}");
        }
    }

    #[test]
    fn weights_from_other_tree_are_rejected() {
        let t = eight_leaf_tree();
        let w = folder_weights(&PartitionTree::trivial(8), WeightScheme::SizeBeta { beta: 1.0 }, None).unwrap();
        assert!(matches!(
            tree_distance(&t, &w, &[0.0; 8], &[1.0; 8]),
            Err(Error::ProvenanceMismatch)
        ));
    }

    #[test]
    fn distance_csv_has_headers() {
        let d = array![[0.0, 1.5], [1.5, 0.0]];
        let mut buf = Vec::new();
        write_distance_csv(&mut buf, &["a".into(), "b".into()], &d).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "id,a,b\na,0.0,1.5\nb,1.5,0.0\n");
    }
}
