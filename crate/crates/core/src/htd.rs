//! Hierarchical tensor decomposition.
//!
//! The rank-`r` approximation comes from two levels of eigendecomposition:
//! the top `r` eigenpairs `(μ_i, v_i)` of the `p^2 x p^2` flattening, then the
//! top eigenpair `(β_i, b_i)` of each `v_i` reshaped to a `p x p` matrix. The
//! output is `Σ μ_i β_i^2 b_i^{⊗4}`. Nothing here is random.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::tensor::{reshape_vec, sym_eig, Rank1Term, SpectralPair, SymDecomposition, SymTensor4};

/// Relative gap under which the top two eigenvalues of a reshaped
/// eigenvector count as tied.
const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HtdDiagnostics {
    pub requested_rank: usize,
    /// Numerical rank of the flattening.
    pub numerical_rank: usize,
    /// Set when fewer than `requested_rank` terms could be formed.
    pub truncated: bool,
    /// Positions (in flattening eigen-order) whose reshaped matrix had a
    /// magnitude-tied top eigenvalue.
    pub tied: Vec<usize>,
}

struct Levels {
    outer: SpectralPair,
    inner: Vec<SpectralPair>,
    used: usize,
}

fn check_rank(t: &SymTensor4, rank: usize) -> Result<()> {
    let max = t.dim().pow(2);
    if rank == 0 || rank > max {
        return Err(Error::InvalidRank(format!(
            "HTD rank must be in 1..={max} for p={}, got {rank}",
            t.dim()
        )));
    }
    Ok(())
}

fn levels(t: &SymTensor4, rank: usize) -> Result<Levels> {
    check_rank(t, rank)?;
    let outer = sym_eig(&t.flatten())?;
    let used = rank.min(outer.numerical_rank());
    let inner = (0..used)
        .map(|i| reshape_vec(&outer.vectors.column(i).into_owned()).and_then(|m| sym_eig(&m)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Levels { outer, inner, used })
}

/// Rank-`r` HTD, also reporting truncation and tie diagnostics.
pub fn htd_with_diagnostics(t: &SymTensor4, rank: usize) -> Result<(SymDecomposition, HtdDiagnostics)> {
    let lv = levels(t, rank)?;
    let mut diag = HtdDiagnostics {
        requested_rank: rank,
        numerical_rank: lv.outer.numerical_rank(),
        truncated: lv.used < rank,
        tied: vec![],
    };
    if diag.truncated {
        log::warn!(
            "HTD rank {rank} exceeds the numerical rank {} of the flattening; returning {} terms",
            diag.numerical_rank,
            lv.used
        );
    }
    let mut terms = Vec::with_capacity(lv.used);
    for (i, inner) in lv.inner.iter().enumerate() {
        let mu = lv.outer.values[i];
        let beta = inner.values[0];
        if inner.len() > 1 && (beta.abs() - inner.values[1].abs()) <= TIE_TOLERANCE * beta.abs() {
            diag.tied.push(i);
            log::warn!("HTD term {i}: reshaped eigenvector has a tied top eigenvalue");
        }
        let b: DVector<f64> = inner.vectors.column(0).into_owned();
        terms.push(Rank1Term::new(mu * beta * beta, b)?);
    }
    Ok((SymDecomposition::new(terms), diag))
}

/// Rank-`r` HTD of a symmetric tensor.
pub fn htd(t: &SymTensor4, rank: usize) -> Result<SymDecomposition> {
    htd_with_diagnostics(t, rank).map(|(d, _)| d)
}

/// A-priori bound on `‖HTD_r(T) − T‖`:
///
/// `(Σ_{i>r} μ_i²)^{1/2} + Σ_{i≤r} |μ_i| (1 + |β_i|) (Σ_{j≥2} (β_i^{(j)})²)^{1/2}`
///
/// evaluated on the full computed spectra.
pub fn htd_error_bound(t: &SymTensor4, rank: usize) -> Result<f64> {
    let lv = levels(t, rank)?;
    let tail: f64 = lv.outer.values[lv.used..].iter().map(|m| m * m).sum::<f64>().sqrt();
    let head: f64 = lv
        .inner
        .iter()
        .enumerate()
        .map(|(i, inner)| {
            let beta = inner.values[0].abs();
            let rest: f64 = inner.values[1..].iter().map(|b| b * b).sum::<f64>().sqrt();
            lv.outer.values[i].abs() * (1.0 + beta) * rest
        })
        .sum();
    Ok(tail + head)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::build_exact_tensor;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn example() -> SymTensor4 {
        build_exact_tensor(
            2,
            &[
                (2.0, DVector::from_vec(vec![1.0, 0.0])),
                (1.0, DVector::from_vec(vec![0.0998, 0.995])),
            ],
        )
        .unwrap()
    }

    fn random_orthonormal(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
        m.qr().q()
    }

    fn aligned_error(v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (v - w).norm().min((v + w).norm())
    }

    #[test]
    fn worked_two_by_two_example() {
        let d = htd(&example(), 2).unwrap();
        assert_eq!(d.len(), 2);
        let t = d.terms();
        assert!((t[0].weight - 1.99999).abs() < 1e-3, "{}", t[0].weight);
        assert!((t[1].weight - 0.99937).abs() < 1e-3, "{}", t[1].weight);
        assert!(aligned_error(&t[0].vector, &DVector::from_vec(vec![0.99999, 0.00099])) < 1e-3);
        assert!(aligned_error(&t[1].vector, &DVector::from_vec(vec![0.09787, 0.99519])) < 1e-3);
    }

    #[test]
    fn rank_one_exact() {
        let b = DVector::from_vec(vec![0.48, -0.6, 0.64]);
        let t = SymTensor4::rank_one(5.0, &b);
        let d = htd(&t, 1).unwrap();
        assert!((d.terms()[0].weight - 5.0).abs() < 1e-10);
        assert!(aligned_error(&d.terms()[0].vector, &b) < 1e-10);
    }

    #[test]
    fn standard_basis_exact() {
        let p = 4;
        let nus = [4.0, -3.0, 2.0, 1.0];
        let terms: Vec<_> = (0..p)
            .map(|i| (nus[i], DVector::from_fn(p, |j, _| if i == j { 1.0 } else { 0.0 })))
            .collect();
        let t = build_exact_tensor(p, &terms).unwrap();
        let d = htd(&t, p).unwrap();
        for (i, term) in d.terms().iter().enumerate() {
            assert!((term.weight - nus[i]).abs() < 1e-12);
            assert!(aligned_error(&term.vector, &terms[i].1) < 1e-12);
        }
        assert!(htd_error_bound(&t, p).unwrap() < 1e-8);
    }

    #[test]
    fn rank_bounds() {
        let t = example();
        assert!(matches!(htd(&t, 0), Err(Error::InvalidRank(_))));
        assert!(matches!(htd(&t, 5), Err(Error::InvalidRank(_))));
        let (d, diag) = htd_with_diagnostics(&t, 4).unwrap();
        assert!(diag.truncated);
        assert_eq!(d.len(), 2);
    }

    #[test]
    fn zero_tensor() {
        let z = SymTensor4::zeros(3);
        assert!(htd(&z, 2).unwrap().is_empty());
        assert_eq!(htd_error_bound(&z, 2).unwrap(), 0.0);
    }

    #[test]
    fn orthogonal_inputs_are_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let p = rng.gen_range(3..=7);
            let q = random_orthonormal(p, &mut rng);
            let r = rng.gen_range(1..=p);
            let terms: Vec<_> = (0..r)
                .map(|i| ((i + 1) as f64 * if i % 2 == 0 { 1.0 } else { -1.0 }, q.column(i).into_owned()))
                .collect();
            let t = build_exact_tensor(p, &terms).unwrap();
            let d = htd(&t, r).unwrap();
            let recon = d.to_tensor(p).unwrap();
            assert!(recon.add_scaled(-1.0, &t).unwrap().frobenius_norm() < 1e-8);
            assert!(htd_error_bound(&t, r).unwrap() < 1e-8);
        }
    }

    #[test]
    fn bound_holds_on_random_tensors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let p = rng.gen_range(2..=4);
            let raw: Vec<f64> = (0..p * p * p * p).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = SymTensor4::symmetrize(p, &raw).unwrap();
            for r in 1..=3 {
                let d = htd(&t, r).unwrap();
                let err = d.to_tensor(p).unwrap().add_scaled(-1.0, &t).unwrap().frobenius_norm();
                assert!(err <= htd_error_bound(&t, r).unwrap());
            }
        }
    }

    #[test]
    fn deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let raw: Vec<f64> = (0..81).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = SymTensor4::symmetrize(3, &raw).unwrap();
        assert_eq!(htd(&t, 3).unwrap(), htd(&t, 3).unwrap());
    }
}
