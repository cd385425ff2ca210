//! Initial metrics, affinity kernels and diffusion embeddings.

use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Axis;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    /// `1 − Pearson correlation`, in `[0, 2]`.
    Correlation,
    Euclidean,
}

/// Distances between every pair of elements of the axis `between`.
///
/// Under the correlation metric a zero-variance vector is at distance 2 from
/// every other element.
pub fn initial_metric(z: &Array2<f64>, between: Axis, kind: MetricKind) -> Array2<f64> {
    let n = between.len_of(z);
    let lanes: Vec<Vec<f64>> = (0..n).map(|i| between.lane(z, i).to_vec()).collect();
    let mut d = Array2::zeros((n, n));
    match kind {
        MetricKind::Euclidean => {
            for a in 0..n {
                for b in a + 1..n {
                    let v = lanes[a]
                        .iter()
                        .zip(&lanes[b])
                        .map(|(u, v)| (u - v) * (u - v))
                        .sum::<f64>()
                        .sqrt();
                    d[[a, b]] = v;
                    d[[b, a]] = v;
                }
            }
        }
        MetricKind::Correlation => {
            let centered: Vec<Option<Vec<f64>>> = lanes
                .iter()
                .map(|l| {
                    let mean = l.iter().sum::<f64>() / l.len() as f64;
                    let c: Vec<f64> = l.iter().map(|v| v - mean).collect();
                    let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
                    (norm > 0.0).then(|| c.into_iter().map(|v| v / norm).collect())
                })
                .collect();
            let flat = centered.iter().filter(|c| c.is_none()).count();
            if flat > 0 {
                warn!("{flat} zero-variance vector(s) under correlation metric; distances set to 2");
            }
            for a in 0..n {
                for b in a + 1..n {
                    let v = match (&centered[a], &centered[b]) {
                        (Some(u), Some(w)) => {
                            let r: f64 = u.iter().zip(w).map(|(p, q)| p * q).sum();
                            (1.0 - r.clamp(-1.0, 1.0)).max(0.0)
                        }
                        _ => 2.0,
                    };
                    d[[a, b]] = v;
                    d[[b, a]] = v;
                }
            }
        }
    }
    d
}

/// How the kernel bandwidth σ is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bandwidth {
    Fixed(f64),
    /// Scale σ so the kernel denominator equals the median positive distance.
    Median,
}

/// Numerator of the kernel exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelForm {
    /// `exp(−d/σ²)`.
    #[default]
    Linear,
    /// `exp(−d²/σ²)`.
    Squared,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AffinityMatrix {
    pub values: Array2<f64>,
    pub sigma: f64,
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Off-diagonal upper-triangle entries.
pub(crate) fn upper_triangle(d: &Array2<f64>) -> Vec<f64> {
    let n = d.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            out.push(d[[a, b]]);
        }
    }
    out
}

pub fn affinity_kernel(distances: &Array2<f64>, bandwidth: Bandwidth, form: KernelForm) -> Result<AffinityMatrix> {
    if distances.nrows() != distances.ncols() {
        return Err(Error::InvalidInput("distance matrix must be square".into()));
    }
    if distances.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidInput("distances must be finite and non-negative".into()));
    }
    let sigma = match bandwidth {
        Bandwidth::Fixed(s) if s > 0.0 && s.is_finite() => s,
        Bandwidth::Fixed(s) => return Err(Error::InvalidInput(format!("bandwidth {s} must be positive"))),
        Bandwidth::Median => {
            let mut positive: Vec<f64> = upper_triangle(distances).into_iter().filter(|&v| v > 0.0).collect();
            let med = median(&mut positive).ok_or(Error::InvalidInput(
                "median bandwidth is undefined for an all-zero distance matrix".into(),
            ))?;
            match form {
                KernelForm::Linear => med.sqrt(),
                KernelForm::Squared => med,
            }
        }
    };
    let s2 = sigma * sigma;
    let values = distances.mapv(|d| {
        let num = match form {
            KernelForm::Linear => d,
            KernelForm::Squared => d * d,
        };
        (-num / s2).exp().max(f64::MIN_POSITIVE)
    });
    Ok(AffinityMatrix { values, sigma })
}

/// Diffusion-map coordinates of the nodes of an affinity graph.
#[derive(Clone, Debug, PartialEq)]
pub struct Embedding {
    /// `n x d`; column `k` is the `k`-th non-trivial right eigenvector of the
    /// row-stochastic operator scaled by `λ_k^t`.
    pub coordinates: Array2<f64>,
    /// Non-increasing.
    pub eigenvalues: Vec<f64>,
}

const EIGEN_RESIDUAL_TOL: f64 = 1e-8;

/// Eigenpairs of a symmetric matrix, eigenvalues sorted non-increasing.
pub(crate) fn symmetric_eigen(a: &Array2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
    let eig = SymmetricEigen::try_new(m.clone(), 1e-14, 10_000).ok_or(Error::EigenSolver {
        residual: f64::INFINITY,
    })?;
    let residual = (&m * &eig.eigenvectors - &eig.eigenvectors * DMatrix::from_diagonal(&eig.eigenvalues)).amax();
    if residual > EIGEN_RESIDUAL_TOL * (1.0 + m.amax()) {
        return Err(Error::EigenSolver { residual });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(r, k)| eig.eigenvectors[(r, idx[k])]);
    Ok((values, vectors))
}

/// Embeds the nodes of `k` into `dim` diffusion coordinates at time `t`.
///
/// The eigenproblem is solved on `D^(−1/2) K D^(−1/2)` and mapped back to
/// right eigenvectors `ψ = v / √π` of `P = D⁻¹K`, with `π` the stationary
/// distribution, so that `ψ_0 ≡ 1`. The trivial pair is dropped.
pub fn diffusion_embedding(k: &AffinityMatrix, dim: usize, t: u32) -> Result<Embedding> {
    let kv = &k.values;
    let n = kv.nrows();
    if kv.ncols() != n {
        return Err(Error::InvalidInput("affinity matrix must be square".into()));
    }
    if dim == 0 || dim >= n {
        return Err(Error::InvalidInput(format!(
            "embedding dimension {dim} must be in 1..{n}"
        )));
    }
    let degree: Vec<f64> = kv.rows().into_iter().map(|r| r.sum()).collect();
    if degree.iter().any(|&q| q <= 0.0 || !q.is_finite()) {
        return Err(Error::InvalidInput("affinity rows must have positive mass".into()));
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|q| q.sqrt().recip()).collect();
    let a = Array2::from_shape_fn((n, n), |(i, j)| {
        // Symmetrize explicitly; K may carry roundoff asymmetry.
        0.5 * (kv[[i, j]] + kv[[j, i]]) * inv_sqrt[i] * inv_sqrt[j]
    });
    let (values, vectors) = symmetric_eigen(&a)?;
    let total: f64 = degree.iter().sum();
    let sqrt_pi: Vec<f64> = degree.iter().map(|q| (q / total).sqrt()).collect();

    let mut coordinates = Array2::zeros((n, dim));
    let mut eigenvalues = Vec::with_capacity(dim);
    for k in 0..dim {
        let lambda = values[k + 1];
        let mut psi: Vec<f64> = (0..n).map(|r| vectors[[r, k + 1]] / sqrt_pi[r]).collect();
        // Fix the sign: largest-magnitude entry positive, earliest on ties.
        let pivot = psi
            .iter()
            .enumerate()
            .fold(0, |best, (i, v)| if v.abs() > psi[best].abs() { i } else { best });
        if psi[pivot] < 0.0 {
            psi.iter_mut().for_each(|v| *v = -*v);
        }
        let scale = lambda.powi(t as i32);
        for r in 0..n {
            coordinates[[r, k]] = psi[r] * scale;
        }
        eigenvalues.push(lambda);
    }
    Ok(Embedding {
        coordinates,
        eigenvalues,
    })
}

/// Euclidean distances between the rows of `points`.
pub fn euclidean_distances(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for a in 0..n {
        for b in a + 1..n {
            let v = points
                .row(a)
                .iter()
                .zip(points.row(b))
                .map(|(u, w)| (u - w) * (u - w))
                .sum::<f64>()
                .sqrt();
            d[[a, b]] = v;
            d[[b, a]] = v;
        }
    }
    d
}
