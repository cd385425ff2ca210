//! Linear transforms induced by partition trees.
//!
//! Every transform maps `R^n -> R^N` with one row per folder, rows indexed by
//! canonical folder id. They are stored as compressed sparse rows; the
//! structure matrix has exactly `(L+1)·n` non-zeros.
//!
//! Entry values are generic over [`Coefficient`] so the same construction can
//! be evaluated in exact rational arithmetic. Application to data is `f64`
//! only.

use std::io::Write;
use std::ops::Range;

use ndarray::{Array2, ArrayView1};
use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, Error, Result};
use crate::tree::PartitionTree;

/// Scalar type a transform can be built over.
pub trait Coefficient: Clone + PartialEq + num_traits::Num + std::fmt::Debug {
    /// The value `k` as a coefficient.
    fn from_count(k: usize) -> Self;
}

impl Coefficient for f64 {
    fn from_count(k: usize) -> Self {
        k as f64
    }
}

impl Coefficient for Ratio<i64> {
    fn from_count(k: usize) -> Self {
        Ratio::from_integer(k as i64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Structure,
    Averaging,
    Difference,
}

/// Sparse row-indexed operator whose rows are tagged with folder ids.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeTransform<T = f64> {
    kind: TransformKind,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    folder_ids: Vec<usize>,
    signature: u64,
}

impl<T: Coefficient> TreeTransform<T> {
    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn n_rows(&self) -> usize {
        self.folder_ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Folder id of each row.
    pub fn folder_ids(&self) -> &[usize] {
        &self.folder_ids
    }

    /// Fingerprint of the tree this transform was built from.
    pub fn signature(&self) -> u64 {
        self.signature
    }

    fn range(&self, i: usize) -> Range<usize> {
        self.row_ptr[i]..self.row_ptr[i + 1]
    }

    /// `(column, value)` pairs of row `i`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, &T)> + '_ {
        let r = self.range(i);
        self.col_idx[r.clone()].iter().copied().zip(&self.values[r])
    }

    /// `(row, col, value)` triplets in row-major order.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, &T)> + '_ {
        (0..self.n_rows()).flat_map(move |i| self.row(i).map(move |(c, v)| (i, c, v)))
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n_rows())
            .map(|i| self.row(i).fold(T::zero(), |acc, (_, v)| acc + v.clone()))
            .collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.n_cols];
        for (c, v) in self.col_idx.iter().zip(&self.values) {
            sums[*c] = sums[*c].clone() + v.clone();
        }
        sums
    }
}

impl TreeTransform<f64> {
    /// Dense copy, for small problems and test oracles.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows(), self.n_cols));
        for (i, c, v) in self.triplets() {
            out[[i, c]] = *v;
        }
        out
    }

    /// `T y`.
    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_cols, y.len())?;
        Ok((0..self.n_rows())
            .map(|i| self.row(i).map(|(c, v)| v * y[c]).sum())
            .collect())
    }

    /// `T y` wrapped with provenance, for later reconstruction.
    pub fn analyze(&self, y: &[f64]) -> Result<TreeCoefficients> {
        Ok(TreeCoefficients {
            values: self.apply(y)?,
            signature: self.signature,
        })
    }

    /// `Tᵀ c`.
    pub fn apply_transpose(&self, c: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_rows(), c.len())?;
        let mut out = vec![0.0; self.n_cols];
        for (i, ci) in c.iter().enumerate() {
            for (col, v) in self.row(i) {
                out[col] += v * ci;
            }
        }
        Ok(out)
    }

    /// `T Z` for a transform over the rows of `Z`: `N x n_cols(Z)`.
    pub fn apply_to_rows(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        check_len(self.n_cols, z.nrows())?;
        let width = z.ncols();
        let rows: Vec<Vec<f64>> = (0..self.n_rows())
            .into_par_iter()
            .map(|i| {
                let mut acc = vec![0.0; width];
                for (c, v) in self.row(i) {
                    for (a, zv) in acc.iter_mut().zip(z.row(c)) {
                        *a += v * zv;
                    }
                }
                acc
            })
            .collect();
        Ok(stack_rows(rows, width))
    }

    /// `Z Tᵀ` for a transform over the columns of `Z`: `n_rows(Z) x N`.
    pub fn apply_to_cols(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        check_len(self.n_cols, z.ncols())?;
        let n_out = self.n_rows();
        let rows: Vec<Vec<f64>> = (0..z.nrows())
            .into_par_iter()
            .map(|r| {
                let zr = z.row(r);
                (0..n_out).map(|i| self.row(i).map(|(c, v)| v * zr[c]).sum()).collect()
            })
            .collect();
        Ok(stack_rows(rows, n_out))
    }

    /// `Tᵀ C` for `C` with one row per transform row: `n x ncols(C)`.
    pub fn transpose_apply_to_rows(&self, c: &Array2<f64>) -> Result<Array2<f64>> {
        check_len(self.n_rows(), c.nrows())?;
        let mut out = Array2::zeros((self.n_cols, c.ncols()));
        for i in 0..self.n_rows() {
            let ci = c.row(i);
            for (col, v) in self.row(i) {
                let mut o = out.row_mut(col);
                o.scaled_add(*v, &ci);
            }
        }
        Ok(out)
    }

    /// Writes `row,col,value` triplets with a header line.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "row,col,value")?;
        for (i, c, v) in self.triplets() {
            writeln!(w, "{i},{c},{v:?}")?;
        }
        Ok(())
    }

    /// Sidecar metadata mapping rows to folder ids.
    pub fn sidecar_json(&self) -> String {
        #[derive(Serialize)]
        struct Sidecar<'a> {
            kind: TransformKind,
            rows: usize,
            cols: usize,
            folder_ids: &'a [usize],
        }
        serde_json::to_string_pretty(&Sidecar {
            kind: self.kind,
            rows: self.n_rows(),
            cols: self.n_cols,
            folder_ids: &self.folder_ids,
        })
        .expect("sidecar serializes")
    }
}

fn stack_rows(rows: Vec<Vec<f64>>, width: usize) -> Array2<f64> {
    let n = rows.len();
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Array2::from_shape_vec((n, width), flat).expect("rows have equal width")
}

fn build<T: Coefficient>(
    tree: &PartitionTree,
    kind: TransformKind,
    mut row: impl FnMut(usize, &mut Vec<(usize, T)>),
) -> TreeTransform<T> {
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut buf = Vec::new();
    for id in 0..tree.num_folders() {
        buf.clear();
        row(id, &mut buf);
        buf.sort_by_key(|(c, _)| *c);
        for (c, v) in buf.drain(..) {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }
    TreeTransform {
        kind,
        n_cols: tree.axis_size(),
        row_ptr,
        col_idx,
        values,
        folder_ids: (0..tree.num_folders()).collect(),
        signature: tree.signature(),
    }
}

/// Structure matrix `S`: row `i` is the indicator of folder `I_i`.
pub fn build_structure<T: Coefficient>(tree: &PartitionTree) -> TreeTransform<T> {
    build(tree, TransformKind::Structure, |id, out| {
        out.extend(tree.folder(id).members.iter().map(|&x| (x, T::one())));
    })
}

/// Averaging transform `M = D⁻¹S`: row `i` is `1/|I_i|` on `I_i`.
pub fn build_averaging<T: Coefficient>(tree: &PartitionTree) -> TreeTransform<T> {
    build(tree, TransformKind::Averaging, |id, out| {
        let f = tree.folder(id);
        let w = T::one() / T::from_count(f.len());
        out.extend(f.members.iter().map(|&x| (x, w.clone())));
    })
}

/// Difference transform `Δ`: each row is the folder's averaging row minus its
/// parent's; the root row is the global average. Pass-through folders keep
/// their (all-zero) row.
pub fn build_difference<T: Coefficient>(tree: &PartitionTree) -> TreeTransform<T> {
    build(tree, TransformKind::Difference, |id, out| {
        let f = tree.folder(id);
        let own = T::one() / T::from_count(f.len());
        match f.parent {
            None => out.extend(f.members.iter().map(|&x| (x, own.clone()))),
            Some(p) => {
                let parent = tree.folder(p);
                let up = T::one() / T::from_count(parent.len());
                let mut inside = f.members.iter().peekable();
                for &x in &parent.members {
                    if inside.peek() == Some(&&x) {
                        inside.next();
                        out.push((x, own.clone() - up.clone()));
                    } else {
                        out.push((x, T::zero() - up.clone()));
                    }
                }
            }
        }
    })
}

/// Coefficients of a single-tree transform, tagged with the tree they came
/// from.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeCoefficients {
    pub values: Vec<f64>,
    signature: u64,
}

/// `Sᵀ c`; inverts the difference transform exactly.
pub fn reconstruct(structure: &TreeTransform, coeffs: &TreeCoefficients) -> Result<Vec<f64>> {
    if structure.kind != TransformKind::Structure {
        return Err(Error::InvalidInput("reconstruction needs the structure matrix".into()));
    }
    if structure.signature != coeffs.signature {
        return Err(Error::ProvenanceMismatch);
    }
    structure.apply_transpose(&coeffs.values)
}

/// Two-sided coefficients `Tx Z Tyᵀ`, tagged with both trees.
#[derive(Clone, Debug, PartialEq)]
pub struct JointCoefficients {
    pub values: Array2<f64>,
    signature_x: u64,
    signature_y: u64,
}

fn joint(tx: &TreeTransform, z: &Array2<f64>, ty: &TreeTransform) -> Result<JointCoefficients> {
    let left = tx.apply_to_rows(z)?;
    Ok(JointCoefficients {
        values: ty.apply_to_cols(&left)?,
        signature_x: tx.signature,
        signature_y: ty.signature,
    })
}

/// `Mx Z Myᵀ`; entry `(i, j)` is the mean of `Z` over `I_i × J_j`.
pub fn joint_average(mx: &TreeTransform, z: &Array2<f64>, my: &TreeTransform) -> Result<JointCoefficients> {
    joint(mx, z, my)
}

/// `Δx Z Δyᵀ`.
pub fn joint_difference(dx: &TreeTransform, z: &Array2<f64>, dy: &TreeTransform) -> Result<JointCoefficients> {
    joint(dx, z, dy)
}

/// `Sxᵀ C Sy`; inverts the joint difference transform.
pub fn reconstruct_joint(sx: &TreeTransform, coeffs: &JointCoefficients, sy: &TreeTransform) -> Result<Array2<f64>> {
    if sx.kind != TransformKind::Structure || sy.kind != TransformKind::Structure {
        return Err(Error::InvalidInput("reconstruction needs structure matrices".into()));
    }
    if sx.signature != coeffs.signature_x || sy.signature != coeffs.signature_y {
        return Err(Error::ProvenanceMismatch);
    }
    let left = sx.transpose_apply_to_rows(&coeffs.values)?;
    // (Sxᵀ C) Sy = ((Syᵀ (Sxᵀ C)ᵀ))ᵀ
    let right = sy.transpose_apply_to_rows(&left.t().to_owned())?;
    Ok(right.t().to_owned())
}

/// Folder centroids: `M Z` (one row per folder) for a tree over the rows of
/// `Z`, or `Z Mᵀ` (one column per folder) for a tree over the columns.
pub fn centroids(m: &TreeTransform, z: &Array2<f64>, axis: crate::Axis) -> Result<Array2<f64>> {
    match axis {
        crate::Axis::Rows => m.apply_to_rows(z),
        crate::Axis::Cols => m.apply_to_cols(z),
    }
}

/// Stacked averaging rows of several trees over the same axis. Root and leaf
/// rows are shared by all trees and appear once, taken from the first tree.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTreeTransform {
    n_trees: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    /// `(tree index, folder id)` of every row.
    provenance: Vec<(usize, usize)>,
    /// Number of trees sharing each row.
    multiplicity: Vec<usize>,
}

pub fn build_multi_tree(trees: &[&PartitionTree]) -> Result<MultiTreeTransform> {
    let first = trees.first().ok_or(Error::InvalidInput(
        "multi-tree transform needs at least one tree".into(),
    ))?;
    let n = first.axis_size();
    for t in trees {
        check_len(n, t.axis_size())?;
    }
    let n_trees = trees.len();
    let mut row_ptr = vec![0];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut provenance = Vec::new();
    let mut multiplicity = Vec::new();
    for (t, tree) in trees.iter().enumerate() {
        for f in tree.folders() {
            let shared = f.level == 0 || f.id == tree.root();
            if shared && t > 0 {
                continue;
            }
            let w = 1.0 / f.len() as f64;
            for &x in &f.members {
                col_idx.push(x);
                values.push(w);
            }
            row_ptr.push(col_idx.len());
            provenance.push((t, f.id));
            multiplicity.push(if shared { n_trees } else { 1 });
        }
    }
    Ok(MultiTreeTransform {
        n_trees,
        n_cols: n,
        row_ptr,
        col_idx,
        values,
        provenance,
        multiplicity,
    })
}

impl MultiTreeTransform {
    pub fn n_rows(&self) -> usize {
        self.provenance.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    pub fn provenance(&self) -> &[(usize, usize)] {
        &self.provenance
    }

    pub fn multiplicity(&self) -> &[usize] {
        &self.multiplicity
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()]
            .iter()
            .copied()
            .zip(self.values[r].iter().copied())
    }

    pub fn apply(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.n_cols, y.len())?;
        Ok((0..self.n_rows())
            .map(|i| self.row(i).map(|(c, v)| v * y[c]).sum())
            .collect())
    }

    pub fn apply_view(&self, y: ArrayView1<'_, f64>) -> Result<Vec<f64>> {
        check_len(self.n_cols, y.len())?;
        Ok((0..self.n_rows())
            .map(|i| self.row(i).map(|(c, v)| v * y[c]).sum())
            .collect())
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }
}
