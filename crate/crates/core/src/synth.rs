//! Seeded synthetic matrices with planted structure.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A synthetic matrix with the planted group of every row and column.
#[derive(Clone, Debug, PartialEq)]
pub struct Planted {
    pub values: Array2<f64>,
    pub row_labels: Vec<usize>,
    pub col_labels: Vec<usize>,
}

/// Rows and columns split into equal-size groups; block `(a, b)` has mean
/// `contrast·((a + b) mod max(k_r, k_c))` plus Gaussian noise with standard
/// deviation `noise·contrast`. Rows and columns are shuffled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_blocks: usize,
    pub col_blocks: usize,
    pub contrast: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for BlockConfig {
    fn default() -> Self {
        Self {
            n_rows: 200,
            n_cols: 200,
            row_blocks: 4,
            col_blocks: 4,
            contrast: 1.0,
            noise: 0.5,
            seed: 0,
        }
    }
}

fn shuffled_labels(n: usize, groups: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut labels: Vec<usize> = (0..n).map(|i| i * groups / n).collect();
    labels.shuffle(rng);
    labels
}

fn check_groups(n: usize, groups: usize, what: &str) -> Result<()> {
    if groups == 0 || groups > n || n < 2 {
        return Err(Error::InvalidInput(format!(
            "cannot split {n} {what} into {groups} groups"
        )));
    }
    Ok(())
}

fn noise(noise: f64, contrast: f64) -> Result<Normal<f64>> {
    Normal::new(0.0, noise * contrast).map_err(|e| Error::InvalidInput(format!("noise: {e}")))
}

pub fn planted_blocks(config: &BlockConfig) -> Result<Planted> {
    check_groups(config.n_rows, config.row_blocks, "rows")?;
    check_groups(config.n_cols, config.col_blocks, "columns")?;
    let dist = noise(config.noise, config.contrast)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let row_labels = shuffled_labels(config.n_rows, config.row_blocks, &mut rng);
    let col_labels = shuffled_labels(config.n_cols, config.col_blocks, &mut rng);
    let k = config.row_blocks.max(config.col_blocks);
    let values = Array2::from_shape_fn((config.n_rows, config.n_cols), |(i, j)| {
        let level = (row_labels[i] + col_labels[j]) % k;
        config.contrast * level as f64 + dist.sample(&mut rng)
    });
    Ok(Planted {
        values,
        row_labels,
        col_labels,
    })
}

/// Sub-populations whose internal organization differs by group.
///
/// Features and observations are each assigned uniformly at random to one of
/// `groups` groups. Every feature `x` has a latent position `u_g(x)` for each
/// observation group `g` and every observation `y` a position `v_h(y)` for
/// each feature group `h`, all uniform on `[0, 1]`. The entry is a Gaussian
/// bump of width `width` in `u_{g(y)}(x) − v_{h(x)}(y)`, plus
/// `offset·((h(x) + g(y)) mod groups)` and Gaussian noise. Within each block
/// the smooth ordering of one axis depends on the group of the other, so no
/// single pair of global trees orders every block well.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SubpopulationConfig {
    pub n_rows: usize,
    pub n_cols: usize,
    pub groups: usize,
    pub width: f64,
    pub offset: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SubpopulationConfig {
    fn default() -> Self {
        Self {
            n_rows: 100,
            n_cols: 100,
            groups: 2,
            width: 0.1,
            offset: 1.0,
            noise: 0.02,
            seed: 0,
        }
    }
}

/// `row_labels` and `col_labels` hold the feature and observation groups.
pub fn planted_subpopulations(config: &SubpopulationConfig) -> Result<Planted> {
    let (nf, no, g) = (config.n_rows, config.n_cols, config.groups);
    check_groups(nf, g, "rows")?;
    check_groups(no, g, "columns")?;
    if config.width.is_nan() || config.width <= 0.0 {
        return Err(Error::InvalidInput("bump width must be positive".into()));
    }
    let dist = noise(config.noise, 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let u: Vec<Vec<f64>> = (0..g).map(|_| (0..nf).map(|_| rng.random::<f64>()).collect()).collect();
    let v: Vec<Vec<f64>> = (0..g).map(|_| (0..no).map(|_| rng.random::<f64>()).collect()).collect();
    let col_labels: Vec<usize> = (0..no).map(|_| rng.random_range(0..g)).collect();
    let row_labels: Vec<usize> = (0..nf).map(|_| rng.random_range(0..g)).collect();
    let two_w2 = 2.0 * config.width * config.width;
    let values = Array2::from_shape_fn((nf, no), |(i, j)| {
        let d = u[col_labels[j]][i] - v[row_labels[i]][j];
        (-d * d / two_w2).exp() + config.offset * ((row_labels[i] + col_labels[j]) % g) as f64 + dist.sample(&mut rng)
    });
    Ok(Planted {
        values,
        row_labels,
        col_labels,
    })
}
