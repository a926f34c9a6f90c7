//! Recovery metrics, silhouette scores and the cPCA baseline.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::sym_eig;

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    /// `permutation[j]` is the estimated column matched to true column `j`.
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
}

impl Alignment {
    /// Reorders and sign-flips `est` so column `j` lines up with true column `j`.
    pub fn apply(&self, est: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(est.nrows(), self.permutation.len(), |i, j| {
            self.signs[j] * est[(i, self.permutation[j])]
        })
    }
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!(
            "matrices are {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    Ok(())
}

fn cosine(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    let (x, y) = (a.column(i), b.column(j));
    let d = x.norm() * y.norm();
    if d == 0.0 {
        0.0
    } else {
        x.dot(&y) / d
    }
}

/// Greedy matching: each true column in turn takes the unmatched estimate
/// with the largest absolute cosine similarity, flipped to be positive.
pub fn greedy_align(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<Alignment> {
    same_shape(truth, est)?;
    let c = truth.ncols();
    let mut used = vec![false; c];
    let mut permutation = Vec::with_capacity(c);
    let mut signs = Vec::with_capacity(c);
    for j in 0..c {
        let mut best: Option<(usize, f64)> = None;
        for k in (0..c).filter(|k| !used[*k]) {
            let s = cosine(truth, j, est, k);
            if best.map_or(true, |(_, b)| s.abs() > b.abs()) {
                best = Some((k, s));
            }
        }
        let (k, s) = best.expect("an unmatched column remains");
        used[k] = true;
        permutation.push(k);
        signs.push(if s < 0.0 { -1.0 } else { 1.0 });
    }
    Ok(Alignment { permutation, signs })
}

/// `(1/c) Σ_j ⟨b_j, b′_j⟩` over the `c` columns.
pub fn mean_cosine_similarity(truth: &DMatrix<f64>, aligned: &DMatrix<f64>) -> Result<f64> {
    same_shape(truth, aligned)?;
    let c = truth.ncols();
    if c == 0 {
        return Err(Error::DimensionMismatch("no columns to compare".into()));
    }
    let s: f64 = (0..c).map(|j| truth.column(j).dot(&aligned.column(j))).sum();
    Ok(s / c as f64)
}

/// `sqrt(Σ_ij (b_ij − b′_ij)² / c)` over the `c` columns.
pub fn relative_frobenius_error(truth: &DMatrix<f64>, aligned: &DMatrix<f64>) -> Result<f64> {
    same_shape(truth, aligned)?;
    let c = truth.ncols();
    if c == 0 {
        return Err(Error::DimensionMismatch("no columns to compare".into()));
    }
    Ok(((truth - aligned).norm_squared() / c as f64).sqrt())
}

/// Aligns `est` to `truth` and returns `(mean cosine, relative Frobenius error)`.
pub fn recovery_scores(truth: &DMatrix<f64>, est: &DMatrix<f64>) -> Result<(f64, f64)> {
    let aligned = greedy_align(truth, est)?.apply(est);
    Ok((
        mean_cosine_similarity(truth, &aligned)?,
        relative_frobenius_error(truth, &aligned)?,
    ))
}

/// Mean silhouette coefficient with Euclidean distances. Points in a
/// singleton cluster contribute 0.
pub fn silhouette(points: &DMatrix<f64>, labels: &[usize]) -> Result<f64> {
    let n = points.nrows();
    if labels.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{n} points but {} labels",
            labels.len()
        )));
    }
    let mut ids: Vec<usize> = labels.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if ids.len() < 2 {
        return Err(Error::SilhouetteUndefined(format!(
            "silhouette undefined for {} cluster(s)",
            ids.len()
        )));
    }
    let slot: Vec<usize> = labels.iter().map(|l| ids.binary_search(l).unwrap()).collect();
    let mut sizes = vec![0usize; ids.len()];
    for &s in &slot {
        sizes[s] += 1;
    }
    let rows: Vec<Vec<f64>> = (0..n).map(|i| points.row(i).iter().copied().collect()).collect();
    let per_point: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let own = slot[i];
            if sizes[own] == 1 {
                return 0.0;
            }
            let mut sums = vec![0.0; ids.len()];
            for j in 0..n {
                if j != i {
                    let d: f64 = rows[i]
                        .iter()
                        .zip(&rows[j])
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    sums[slot[j]] += d;
                }
            }
            let a = sums[own] / (sizes[own] - 1) as f64;
            let b = (0..ids.len())
                .filter(|k| *k != own)
                .map(|k| sums[k] / sizes[k] as f64)
                .fold(f64::INFINITY, f64::min);
            let m = a.max(b);
            if m == 0.0 {
                0.0
            } else {
                (b - a) / m
            }
        })
        .collect();
    Ok(per_point.iter().sum::<f64>() / n as f64)
}

/// Top `c` eigenvectors of `κ2x − α κ2y` by algebraic eigenvalue.
pub fn cpca_components(k2x: &DMatrix<f64>, k2y: &DMatrix<f64>, alpha: f64, c: usize) -> Result<DMatrix<f64>> {
    same_shape(k2x, k2y)?;
    let p = k2x.nrows();
    if c > p {
        return Err(Error::InvalidArgument(format!(
            "cannot take {c} components in dimension {p}"
        )));
    }
    let eig = sym_eig(&(k2x - k2y * alpha))?;
    let mut order: Vec<usize> = (0..eig.len()).collect();
    order.sort_by(|a, b| eig.values[*b].total_cmp(&eig.values[*a]));
    Ok(DMatrix::from_fn(p, c, |i, j| eig.vectors[(i, order[j])]))
}

/// cPCA hyperparameter grid: 0 followed by `count - 1` log-spaced values
/// from `1e-2` to `1e3`.
pub fn cpca_alpha_grid(count: usize) -> Vec<f64> {
    let mut grid = vec![0.0];
    let m = count.saturating_sub(1);
    for i in 0..m {
        let t = if m == 1 { 1.0 } else { i as f64 / (m - 1) as f64 };
        grid.push(10f64.powf(-2.0 + 5.0 * t));
    }
    grid.truncate(count);
    grid
}
