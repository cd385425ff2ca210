//! Bottom-up flexible trees built from a diffusion embedding.
//!
//! Level 1 groups elements by their Euclidean distances in a diffusion
//! embedding of the input affinity. Each later level treats the previous
//! level's folders as points: folder centroids in the base embedding get
//! their own affinity and embedding, and distances are measured there.
//!
//! Within a level with threshold `τ = p/ε` (`p` the median pairwise
//! distance), each unassigned point `i` with nearest neighbour `j` at
//! distance `d < τ` starts a folder with `j` when `j` is unassigned, or joins
//! `j`'s folder `I` when `d < τ·2^(1−|I|)`. Otherwise `i` stays alone.

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::{
    affinity_kernel, diffusion_embedding, euclidean_distances, median, upper_triangle, Bandwidth, Embedding, KernelForm,
};
use crate::error::{Error, Result};
use crate::tree::PartitionTree;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexibleTreeConfig {
    /// Merge-threshold divisor ε.
    pub epsilon: f64,
    /// Embedding dimension; `None` means `min(10, n − 1)`.
    pub dim: Option<usize>,
    pub diffusion_time: u32,
    pub bandwidth: Bandwidth,
    pub kernel: KernelForm,
    /// Upper bound on `L`; remaining folders are merged into the root there.
    pub max_levels: usize,
}

impl Default for FlexibleTreeConfig {
    fn default() -> Self {
        Self {
            epsilon: 1.0,
            dim: None,
            diffusion_time: 1,
            bandwidth: Bandwidth::Median,
            kernel: KernelForm::Linear,
            max_levels: 64,
        }
    }
}

impl FlexibleTreeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "epsilon {} must be positive",
                self.epsilon
            )));
        }
        if self.max_levels < 2 {
            return Err(Error::InvalidInput("max_levels must be at least 2".into()));
        }
        if self.dim == Some(0) {
            return Err(Error::InvalidInput("embedding dimension must be positive".into()));
        }
        Ok(())
    }

    fn dim_for(&self, n: usize) -> usize {
        self.dim.unwrap_or(10).min(n - 1).max(1)
    }
}

/// Embeds points given by a distance matrix. Degenerate inputs (all points
/// coincide) get all-zero coordinates.
fn embed(distances: &Array2<f64>, config: &FlexibleTreeConfig) -> Result<Embedding> {
    let n = distances.nrows();
    let dim = config.dim_for(n);
    if upper_triangle(distances).iter().all(|&v| v == 0.0) {
        return Ok(Embedding {
            coordinates: Array2::zeros((n, dim)),
            eigenvalues: vec![0.0; dim],
        });
    }
    let k = affinity_kernel(distances, config.bandwidth, config.kernel)?;
    diffusion_embedding(&k, dim, config.diffusion_time)
}

/// Pairwise distances between the current folders.
///
/// When every folder is a singleton these are the Euclidean distances in the
/// base embedding. Otherwise the folder centroids are re-embedded from their
/// own affinities and distances are taken in that embedding.
pub fn level_distances(folders: &[Vec<usize>], base: &Embedding, config: &FlexibleTreeConfig) -> Result<Array2<f64>> {
    let m = folders.len();
    if m < 2 {
        return Err(Error::InvalidInput("level distances need at least two folders".into()));
    }
    let coords = &base.coordinates;
    let dim = coords.ncols();
    let mut centroids = Array2::zeros((m, dim));
    for (k, f) in folders.iter().enumerate() {
        for &x in f {
            for c in 0..dim {
                centroids[[k, c]] += coords[[x, c]];
            }
        }
        for c in 0..dim {
            centroids[[k, c]] /= f.len() as f64;
        }
    }
    let direct = euclidean_distances(&centroids);
    if folders.iter().all(|f| f.len() == 1) {
        return Ok(direct);
    }
    let level = embed(&direct, config)?;
    Ok(euclidean_distances(&level.coordinates))
}

/// One merge pass over `m` points. Returns groups of point indices.
fn merge_pass(d: &Array2<f64>, threshold: f64) -> Vec<Vec<usize>> {
    let m = d.nrows();
    let nearest: Vec<(f64, usize)> = (0..m)
        .map(|i| {
            (0..m)
                .filter(|&j| j != i)
                .map(|j| (d[[i, j]], j))
                .fold(
                    (f64::INFINITY, usize::MAX),
                    |best, c| if c.0 < best.0 { c } else { best },
                )
        })
        .collect();
    // Closest pairs first; index breaks ties.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| nearest[a].0.total_cmp(&nearest[b].0).then(a.cmp(&b)));

    let mut group_of: Vec<Option<usize>> = vec![None; m];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        if group_of[i].is_some() {
            continue;
        }
        let (dmin, j) = nearest[i];
        let target = if dmin < threshold {
            match group_of[j] {
                None => {
                    groups.push(vec![j]);
                    group_of[j] = Some(groups.len() - 1);
                    group_of[j]
                }
                Some(g) => {
                    let shrink = (1.0 - groups[g].len() as f64).exp2();
                    (dmin < threshold * shrink).then_some(g)
                }
            }
        } else {
            None
        };
        let g = target.unwrap_or_else(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[g].push(i);
        group_of[i] = Some(g);
    }
    groups
}

/// Builds a flexible tree over `n` elements from their pairwise distances.
pub fn build_flexible_tree(distances: &Array2<f64>, config: &FlexibleTreeConfig) -> Result<PartitionTree> {
    config.validate()?;
    let n = distances.nrows();
    if distances.ncols() != n {
        return Err(Error::InvalidInput("distance matrix must be square".into()));
    }
    if n < 2 {
        return Err(Error::InvalidInput("flexible trees need at least two elements".into()));
    }
    let mut current: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut partitions = vec![current.clone()];
    if n == 2 {
        partitions.push(vec![vec![0, 1]]);
        return PartitionTree::from_partitions(n, partitions);
    }
    let base = embed(distances, config)?;

    while current.len() > 1 {
        let level = partitions.len();
        let groups = if level >= config.max_levels {
            warn!(
                "flexible tree reached {} levels; merging {} folders into the root",
                level,
                current.len()
            );
            vec![(0..current.len()).collect()]
        } else {
            let d = level_distances(&current, &base, config)?;
            let p = median(&mut upper_triangle(&d)).unwrap_or(0.0);
            let mut groups = merge_pass(&d, p / config.epsilon);
            if groups.len() == current.len() {
                groups = merge_pass(&d, 2.0 * p / config.epsilon);
            }
            if groups.len() == current.len() {
                warn!(
                    "no merges at level {level}; merging {} folders into the root",
                    current.len()
                );
                groups = vec![(0..current.len()).collect()];
            }
            groups
        };
        let mut next: Vec<Vec<usize>> = groups
            .into_iter()
            .map(|g| {
                let mut members: Vec<usize> = g.into_iter().flat_map(|k| current[k].iter().copied()).collect();
                members.sort_unstable();
                members
            })
            .collect();
        next.sort_by_key(|m| m[0]);
        partitions.push(next.clone());
        current = next;
    }
    PartitionTree::from_partitions(n, partitions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::validate_tree;
    use ndarray::array;

    fn line_embedding(points: &[f64]) -> Embedding {
        Embedding {
            coordinates: Array2::from_shape_fn((points.len(), 1), |(i, _)| points[i]),
            eigenvalues: vec![1.0],
        }
    }

    #[test]
    fn singleton_level_distances_are_euclidean() {
        let base = line_embedding(&[0.0, 1.0, 3.0]);
        let d = level_distances(&[vec![0], vec![1], vec![2]], &base, &FlexibleTreeConfig::default()).unwrap();
        assert_eq!((d[[0, 1]], d[[0, 2]], d[[1, 2]]), (1.0, 3.0, 2.0));
        let base = line_embedding(&[2.0, 2.0]);
        let d = level_distances(&[vec![0], vec![1]], &base, &FlexibleTreeConfig::default()).unwrap();
        assert_eq!(d[[0, 1]], 0.0);
        assert!(level_distances(&[vec![0, 1]], &base, &FlexibleTreeConfig::default()).is_err());
    }

    #[test]
    fn two_elements_give_minimal_tree() {
        let d = array![[0.0, 1.0], [1.0, 0.0]];
        let t = build_flexible_tree(&d, &FlexibleTreeConfig::default()).unwrap();
        assert_eq!((t.depth(), t.num_folders()), (1, 3));
    }

    #[test]
    fn two_tight_pairs() {
        let d = array![
            [0.0, 0.1, 5.0, 5.2],
            [0.1, 0.0, 5.1, 5.0],
            [5.0, 5.1, 0.0, 0.2],
            [5.2, 5.0, 0.2, 0.0]
        ];
        let t = build_flexible_tree(&d, &FlexibleTreeConfig::default()).unwrap();
        assert!(validate_tree(&t.to_raw()).is_ok());
        assert_eq!(t.partitions()[1], vec![vec![0, 1], vec![2, 3]]);
        assert_eq!(t.depth(), 2);
    }

    #[test]
    fn merge_pass_equidistant_trace() {
        // Six equidistant points, τ = 1.25·D: 0 takes 1, then every other
        // point's nearest is 0, whose folder has size 2 and needs d < τ/2.
        let d = Array2::from_shape_fn((6, 6), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let groups = merge_pass(&d, 1.25);
        assert_eq!(groups, vec![vec![1, 0], vec![2], vec![3], vec![4], vec![5]]);
        // With τ = 2.5·D the folder keeps growing while 2^(1−|I|)·τ > D.
        let groups = merge_pass(&d, 2.5);
        assert_eq!(groups, vec![vec![1, 0, 2], vec![3], vec![4], vec![5]]);
    }

    #[test]
    fn merge_pass_processes_closest_first() {
        // Chain a - b - c with b closer to c: (b, c) pair first, a joins only
        // under the halved threshold.
        let d = array![[0.0, 2.0, 5.0], [2.0, 0.0, 1.0], [5.0, 1.0, 0.0]];
        assert_eq!(merge_pass(&d, 3.0), vec![vec![2, 1], vec![0]]);
        assert_eq!(merge_pass(&d, 4.5), vec![vec![2, 1, 0]]);
    }

    #[test]
    fn equidistant_points_still_terminate() {
        let d = Array2::from_shape_fn((7, 7), |(i, j)| if i == j { 0.0 } else { 1.0 });
        let t = build_flexible_tree(&d, &FlexibleTreeConfig::default()).unwrap();
        assert!(validate_tree(&t.to_raw()).is_ok());
        let counts: Vec<usize> = t.levels().iter().map(Vec::len).collect();
        assert!(counts.windows(2).all(|w| w[1] < w[0]), "{counts:?}");
    }

    #[test]
    fn max_levels_forces_root() {
        let d = Array2::from_shape_fn((16, 16), |(i, j)| (i as f64 - j as f64).abs());
        let config = FlexibleTreeConfig {
            max_levels: 2,
            ..Default::default()
        };
        let t = build_flexible_tree(&d, &config).unwrap();
        assert!(t.depth() <= 2);
        assert!(validate_tree(&t.to_raw()).is_ok());
    }

    #[test]
    fn rejects_bad_config() {
        let d = Array2::zeros((3, 3));
        let bad = FlexibleTreeConfig {
            epsilon: 0.0,
            ..Default::default()
        };
        assert!(build_flexible_tree(&d, &bad).is_err());
        let bad = FlexibleTreeConfig {
            max_levels: 1,
            ..Default::default()
        };
        assert!(build_flexible_tree(&d, &bad).is_err());
    }

    #[test]
    fn identical_points_collapse_to_root() {
        let t = build_flexible_tree(&Array2::zeros((5, 5)), &FlexibleTreeConfig::default()).unwrap();
        assert!(validate_tree(&t.to_raw()).is_ok());
    }
}
