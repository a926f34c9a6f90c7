//! Sample cumulants of a data matrix and exact cumulant tensors of a known
//! linear mixing model.
//!
//! Both the covariance and the central fourth moment use divisor `n`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{for_each_sorted, SymTensor4};

/// Rows per block in the parallel moment accumulation. Fixed so that the
/// reduction order, and therefore the result, does not depend on the number
/// of worker threads.
const ROW_BLOCK: usize = 4096;

/// `n x p` sample matrix, rows are observations.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() == 0 || values.ncols() == 0 {
            return Err(Error::InvalidArgument("data matrix has no rows or no columns".into()));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            let n = values.nrows();
            return Err(Error::NonFinite(format!("row {}, column {}", pos % n, pos / n)));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != p) {
            return Err(Error::DimensionMismatch(format!(
                "row {i} has {} values, expected {p}",
                r.len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), p, &flat))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    /// Row-major copy with the column means removed.
    fn centered_rows(&self) -> Vec<f64> {
        let mean = sample_mean(self);
        let (n, p) = self.values.shape();
        let mut out = vec![0.0; n * p];
        for t in 0..n {
            for i in 0..p {
                out[t * p + i] = self.values[(t, i)] - mean[i];
            }
        }
        out
    }
}

pub fn sample_mean(data: &DataMatrix) -> DVector<f64> {
    let n = data.nrows() as f64;
    DVector::from_iterator(
        data.ncols(),
        data.values.column_iter().map(|c| c.iter().sum::<f64>() / n),
    )
}

fn check_samples(data: &DataMatrix) -> Result<()> {
    if data.nrows() < 2 {
        return Err(Error::TooFewSamples(data.nrows()));
    }
    Ok(())
}

fn covariance_from_centered(rows: &[f64], n: usize, p: usize) -> DMatrix<f64> {
    let mut cov = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            let s: f64 = (0..n).map(|t| rows[t * p + i] * rows[t * p + j]).sum();
            cov[(i, j)] = s / n as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    cov
}

/// `σ_ij = (1/n) Σ_t (X_ti − X̄_i)(X_tj − X̄_j)`.
pub fn sample_covariance(data: &DataMatrix) -> Result<DMatrix<f64>> {
    check_samples(data)?;
    let rows = data.centered_rows();
    Ok(covariance_from_centered(&rows, data.nrows(), data.ncols()))
}

/// Second and fourth sample cumulants of one dataset.
#[derive(Debug, Clone)]
pub struct Cumulants {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub fourth: SymTensor4,
}

impl Cumulants {
    pub fn estimate(data: &DataMatrix) -> Result<Self> {
        check_samples(data)?;
        let (n, p) = (data.nrows(), data.ncols());
        if n < 5 {
            log::warn!("fourth cumulant from only {n} samples is unreliable");
        }
        let rows = data.centered_rows();
        let covariance = covariance_from_centered(&rows, n, p);
        let fourth = fourth_from_centered(&rows, n, p, &covariance);
        Ok(Self {
            mean: sample_mean(data),
            covariance,
            fourth,
        })
    }
}

fn fourth_from_centered(rows: &[f64], n: usize, p: usize, cov: &DMatrix<f64>) -> SymTensor4 {
    // Index of the pair (i, j), i <= j, in the per-row table of products.
    let mut pair_index = vec![0usize; p * p];
    let mut npairs = 0;
    for i in 0..p {
        for j in i..p {
            pair_index[i * p + j] = npairs;
            npairs += 1;
        }
    }
    let mut tuples = Vec::new();
    for_each_sorted(p, |[i, j, k, l]| {
        tuples.push((pair_index[i * p + j], pair_index[k * p + l]));
    });

    let partials: Vec<Vec<f64>> = rows
        .par_chunks(ROW_BLOCK * p)
        .map(|block| {
            let mut acc = vec![0.0; tuples.len()];
            let mut pairs = vec![0.0; npairs];
            for row in block.chunks_exact(p) {
                let mut idx = 0;
                for i in 0..p {
                    for j in i..p {
                        pairs[idx] = row[i] * row[j];
                        idx += 1;
                    }
                }
                for (a, &(u, v)) in acc.iter_mut().zip(&tuples) {
                    *a += pairs[u] * pairs[v];
                }
            }
            acc
        })
        .collect();
    let mut moment = vec![0.0; tuples.len()];
    for part in &partials {
        for (m, v) in moment.iter_mut().zip(part) {
            *m += v;
        }
    }

    let nf = n as f64;
    let mut pos = 0;
    SymTensor4::from_sorted_fn(p, |[i, j, k, l]| {
        let m = moment[pos] / nf;
        pos += 1;
        m - cov[(i, j)] * cov[(k, l)] - cov[(i, k)] * cov[(j, l)] - cov[(i, l)] * cov[(j, k)]
    })
}

/// Fourth-order sample cumulant:
/// `M_ijkl − σ_ij σ_kl − σ_ik σ_jl − σ_il σ_jk` with `M` the central fourth
/// moment.
pub fn fourth_cumulant(data: &DataMatrix) -> Result<SymTensor4> {
    Ok(Cumulants::estimate(data)?.fourth)
}

/// `Σ coef_i v_i^{⊗4}`, the exact fourth cumulant of a mixing model.
pub fn build_exact_tensor(dim: usize, terms: &[(f64, DVector<f64>)]) -> Result<SymTensor4> {
    if let Some((_, v)) = terms.iter().find(|(_, v)| v.len() != dim) {
        return Err(Error::DimensionMismatch(format!(
            "vector of length {} in a p={dim} tensor",
            v.len()
        )));
    }
    Ok(SymTensor4::from_sorted_fn(dim, |[i, j, k, l]| {
        terms
            .iter()
            .map(|(c, v)| c * (v[i] * v[j]) * (v[k] * v[l]))
            .sum()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Rank1Term, SymDecomposition};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn random_data(n: usize, p: usize, seed: u64) -> DataMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DataMatrix::new(DMatrix::from_fn(n, p, |_, _| rng.gen_range(-2.0..3.0))).unwrap()
    }

    fn naive_fourth(data: &DataMatrix) -> Vec<f64> {
        let x = data.values();
        let (n, p) = x.shape();
        let nf = n as f64;
        let mean: Vec<f64> = (0..p).map(|i| x.column(i).sum() / nf).collect();
        let c = |t: usize, i: usize| x[(t, i)] - mean[i];
        let sigma = |i: usize, j: usize| (0..n).map(|t| c(t, i) * c(t, j)).sum::<f64>() / nf;
        let mut out = Vec::with_capacity(p.pow(4));
        for i in 0..p {
            for j in 0..p {
                for k in 0..p {
                    for l in 0..p {
                        let m = (0..n).map(|t| c(t, i) * c(t, j) * c(t, k) * c(t, l)).sum::<f64>() / nf;
                        out.push(m - sigma(i, j) * sigma(k, l) - sigma(i, k) * sigma(j, l) - sigma(i, l) * sigma(j, k));
                    }
                }
            }
        }
        out
    }

    #[test]
    fn mean_examples() {
        let d = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(sample_mean(&d)[0], 0.0);
        let c = DataMatrix::from_rows(&[vec![2.5, 1.0], vec![2.5, 3.0], vec![2.5, 5.0]]).unwrap();
        assert_eq!(sample_mean(&c)[0], 2.5);

        let r = random_data(10, 3, 5);
        let m = sample_mean(&r);
        for i in 0..3 {
            let mut s = 0.0;
            for t in 0..10 {
                s += r.values()[(t, i)];
            }
            assert!((m[i] - s / 10.0).abs() < 1e-15);
        }
    }

    #[test]
    fn covariance_examples() {
        let d = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(sample_covariance(&d).unwrap()[(0, 0)], 1.0);

        let c = DataMatrix::from_rows(&[vec![4.0, 1.0], vec![4.0, 3.0], vec![4.0, -2.0]]).unwrap();
        let cov = sample_covariance(&c).unwrap();
        assert_eq!(cov[(0, 0)], 0.0);
        assert_eq!(cov[(0, 1)], 0.0);

        let r = random_data(20, 3, 9);
        let doubled = DataMatrix::new(r.values() * 2.0).unwrap();
        let diff = sample_covariance(&doubled).unwrap() - sample_covariance(&r).unwrap() * 4.0;
        assert!(diff.amax() < 1e-12);

        let one = DataMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(matches!(sample_covariance(&one), Err(Error::TooFewSamples(1))));
        assert!(fourth_cumulant(&one).is_err());
    }

    #[test]
    fn fourth_cumulant_two_points() {
        let d = DataMatrix::from_rows(&[vec![1.0], vec![-1.0]]).unwrap();
        assert_eq!(fourth_cumulant(&d).unwrap().as_slice(), &[-2.0]);
    }

    #[test]
    fn fourth_cumulant_matches_naive_formula() {
        let d = random_data(50, 4, 17);
        let got = fourth_cumulant(&d).unwrap();
        let oracle = naive_fourth(&d);
        for (g, o) in got.as_slice().iter().zip(&oracle) {
            assert!((g - o).abs() < 1e-12, "{g} vs {o}");
        }
    }

    #[test]
    fn fourth_cumulant_of_exponential() {
        let theta = 2.0;
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let exp = Exp::new(theta).unwrap();
        let rows: Vec<Vec<f64>> = (0..100_000).map(|_| vec![exp.sample(&mut rng) - 1.0 / theta]).collect();
        let k4 = fourth_cumulant(&DataMatrix::from_rows(&rows).unwrap()).unwrap().as_slice()[0];
        let expected = 6.0 / theta.powi(4);
        assert!((k4 - expected).abs() < 0.1 * expected, "{k4} vs {expected}");
    }

    #[test]
    fn fourth_cumulant_of_gaussian_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let data = DMatrix::from_fn(100_000, 3, |_, _| StandardNormal.sample(&mut rng));
        let k4 = fourth_cumulant(&DataMatrix::new(data).unwrap()).unwrap();
        assert!(k4.as_slice().iter().all(|v| v.abs() < 0.1));
    }

    #[test]
    fn exact_tensor_builder() {
        let e1 = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let t = build_exact_tensor(3, &[(1.0, e1)]).unwrap();
        assert_eq!(t.get(0, 0, 0, 0), 1.0);
        assert_eq!(t.as_slice().iter().filter(|v| **v != 0.0).count(), 1);

        let ex = build_exact_tensor(
            2,
            &[
                (2.0, DVector::from_vec(vec![1.0, 0.0])),
                (1.0, DVector::from_vec(vec![0.0998, 0.995])),
            ],
        )
        .unwrap();
        let m = ex.flatten();
        assert!((m[(0, 0)] - 2.0001).abs() < 1e-3);
        assert!((m[(3, 3)] - 0.9801).abs() < 1e-3);
        assert!((m[(1, 3)] - 0.0983).abs() < 1e-3);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let terms: Vec<(f64, DVector<f64>)> = (0..3)
            .map(|_| (rng.gen_range(-2.0..2.0), DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0)).normalize()))
            .collect();
        let t = build_exact_tensor(4, &terms).unwrap();
        let dec = SymDecomposition::new(terms.iter().map(|(c, v)| Rank1Term::new(*c, v.clone()).unwrap()).collect());
        assert!(t.subtract_rank_ones(&dec).unwrap().frobenius_norm() < 1e-12);
        assert!(build_exact_tensor(3, &[(1.0, DVector::zeros(2))]).is_err());
    }

    #[test]
    fn shift_invariance_is_exact() {
        let d = random_data(40, 3, 31);
        let shifted = DataMatrix::new(DMatrix::from_fn(40, 3, |t, i| d.values()[(t, i)] + [1.5, -2.0, 0.0][i])).unwrap();
        let a = fourth_cumulant(&d).unwrap();
        let b = fourth_cumulant(&shifted).unwrap();
        // Centering removes the shift up to the rounding of the mean itself.
        assert!(a.add_scaled(-1.0, &b).unwrap().frobenius_norm() < 1e-12);
    }

    #[test]
    fn multilinearity() {
        let d = random_data(200, 3, 37);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let w = DMatrix::from_fn(3, 3, |_, _| rng.gen_range(-1.0..1.0));
        let mapped = DataMatrix::new(d.values() * w.transpose()).unwrap();
        let lhs = fourth_cumulant(&mapped).unwrap();
        let rhs = fourth_cumulant(&d).unwrap().transform(&w).unwrap();
        let rel = lhs.add_scaled(-1.0, &rhs).unwrap().frobenius_norm() / rhs.frobenius_norm();
        assert!(rel < 1e-8, "{rel}");
    }

    #[test]
    fn independence_shows_as_diagonal_trend() {
        // A z with independent exponential z: A^{-1} · κ4 should approach diagonal.
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.4, -0.2, 0.3, 1.0, 0.5, -0.1, 0.2, 1.0]);
        let a_inv = a.clone().try_inverse().unwrap();
        let exp = Exp::new(1.0).unwrap();
        let mut offdiag = Vec::new();
        for &n in &[1_000usize, 10_000, 100_000] {
            let z = DMatrix::from_fn(n, 3, |_, _| exp.sample(&mut rng));
            let x = DataMatrix::new(z * a.transpose()).unwrap();
            let back = fourth_cumulant(&x).unwrap().transform(&a_inv).unwrap();
            let mut off = 0.0;
            for_each_sorted(3, |[i, j, k, l]| {
                if !(i == j && j == k && k == l) {
                    off += back.get(i, j, k, l).powi(2);
                }
            });
            offdiag.push(off.sqrt());
        }
        assert!(offdiag[2] < offdiag[0], "{offdiag:?}");
    }
}
