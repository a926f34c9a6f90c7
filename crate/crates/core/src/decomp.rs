//! Symmetric decomposition of order-4 tensors with non-orthogonal
//! components, plus the closed-form coefficient fit used for background
//! deflation and for the proportionality constant γ.
//!
//! The decomposition is a subspace-projected power method. Let `V` hold the
//! leading eigenvectors of the flattening (one per remaining component). The
//! iteration
//!
//! ```text
//! x ← normalize(reshape(V Vᵀ vec(x xᵀ)) · x)
//! ```
//!
//! has every true component as a fixed point, because `vec(a aᵀ)` lies in the
//! span of `V`. A candidate is scored by `‖Vᵀ vec(x xᵀ)‖`, which equals one
//! exactly when `x xᵀ` is in the subspace. The best candidate over a number of
//! seeded restarts is fitted, subtracted from the tensor, and the process
//! repeats on the deflated tensor.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{sym_eig, RANK_CUTOFF, vec_outer, Rank1Term, SpectralPair, SymDecomposition, SymTensor4};

/// A candidate whose square sits this close to the eigen-subspace counts as
/// a genuine component.
pub const ACCEPT_SCORE: f64 = 1.0 - 1e-6;

/// Quadratic forms below this magnitude mean the pattern is absent.
const MIN_QUADRATIC_FORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompConfig {
    pub restarts: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
}

impl Default for DecompConfig {
    fn default() -> Self {
        Self {
            restarts: 30,
            max_iters: 500,
            tol: 1e-10,
            seed: 0,
        }
    }
}

impl DecompConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.restarts == 0 || self.max_iters == 0 {
            return Err(Error::InvalidArgument("restarts and max_iters must be positive".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidArgument(format!("tol must lie in (0, 1), got {}", self.tol)));
        }
        Ok(())
    }
}

/// `binom(p + 1, 2)`, the dimension of the symmetric `p x p` matrices.
pub fn max_identifiable_rank(p: usize) -> usize {
    p * (p + 1) / 2
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionReport {
    /// `‖Vᵀ vec(x xᵀ)‖` of the chosen candidate.
    pub score: f64,
    pub coefficient: f64,
    /// Whether the candidate met [`ACCEPT_SCORE`].
    pub accepted: bool,
    pub restart: usize,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpmReport {
    pub seed: u64,
    pub extractions: Vec<ExtractionReport>,
}

struct Candidate {
    vector: DVector<f64>,
    score: f64,
    iterations: usize,
    restart: usize,
}

/// `Y x` where `Y` is the reshaped projection of `vec(x xᵀ)` onto `basis`.
fn projected_step(basis: &DMatrix<f64>, x: &DVector<f64>) -> (DVector<f64>, f64) {
    let p = x.len();
    let coords = basis.tr_mul(&vec_outer(x));
    let proj = basis * &coords;
    let y = DVector::from_fn(p, |i, _| (0..p).map(|j| proj[i * p + j] * x[j]).sum());
    (y, coords.norm())
}

fn power_iterate(basis: &DMatrix<f64>, start: DVector<f64>, cfg: &DecompConfig, restart: usize) -> Candidate {
    let mut x = start;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let (y, _) = projected_step(basis, &x);
        let norm = y.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            break;
        }
        let y = y / norm;
        let change = (&y - &x).norm().min((&y + &x).norm());
        x = y;
        if change < cfg.tol {
            break;
        }
    }
    let score = basis.tr_mul(&vec_outer(&x)).norm();
    Candidate {
        vector: x,
        score,
        iterations,
        restart,
    }
}

fn random_unit(p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 0.0 {
            return v / n;
        }
    }
}

/// General symmetric decomposition into `rank` terms, with per-extraction
/// diagnostics.
pub fn decompose_general_with_report(
    t: &SymTensor4,
    rank: usize,
    cfg: &DecompConfig,
) -> Result<(SymDecomposition, SpmReport)> {
    cfg.validate()?;
    let p = t.dim();
    let bound = max_identifiable_rank(p);
    if rank == 0 {
        return Err(Error::InvalidRank("decomposition rank must be positive".into()));
    }
    if rank > bound {
        return Err(Error::NotIdentifiable(format!(
            "rank {rank} exceeds binom(p+1, 2) = {bound} for p = {p}"
        )));
    }

    // Residual eigenvalues are judged against the input's scale, so round-off
    // left after removing every true term does not pass for structure.
    let scale = sym_eig(&t.flatten())?.values.first().map_or(0.0, |v| v.abs());
    let mut current = t.clone();
    let mut terms = Vec::with_capacity(rank);
    let mut report = SpmReport {
        seed: cfg.seed,
        extractions: Vec::with_capacity(rank),
    };
    for k in 0..rank {
        let spectrum = sym_eig(&current.flatten())?;
        let live = spectrum.values.iter().take_while(|v| v.abs() > RANK_CUTOFF * scale).count();
        let thin = spectrum.truncated(live.min(rank - k));
        if thin.is_empty() {
            return Err(Error::InvalidRank(format!(
                "tensor has numerical rank {k}, below the requested rank {rank}"
            )));
        }
        let basis = &thin.vectors;
        let candidates: Vec<Candidate> = (0..cfg.restarts)
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream((k * cfg.restarts + s) as u64);
                power_iterate(basis, random_unit(p, &mut rng), cfg, s)
            })
            .collect();

        let fitted: Vec<(Candidate, f64)> = candidates
            .into_iter()
            .filter_map(|c| fit_coefficient(&thin, &c.vector).ok().map(|coef| (c, coef)))
            .collect();
        let accepted = fitted.iter().filter(|(c, _)| c.score >= ACCEPT_SCORE);
        let best = accepted
            .fold(None::<&(Candidate, f64)>, |best, cur| match best {
                Some(b) if b.1.abs() >= cur.1.abs() => Some(b),
                _ => Some(cur),
            })
            .or_else(|| {
                fitted.iter().fold(None::<&(Candidate, f64)>, |best, cur| match best {
                    Some(b) if b.0.score >= cur.0.score => Some(b),
                    _ => Some(cur),
                })
            });
        let Some((cand, coef)) = best else {
            return Err(Error::PatternNotRepresented(0.0));
        };
        let accepted = cand.score >= ACCEPT_SCORE;
        if !accepted {
            log::debug!(
                "component {k}: no restart reached the subspace (best score {:.9}, residual {:.3e})",
                cand.score,
                1.0 - cand.score
            );
        }
        report.extractions.push(ExtractionReport {
            score: cand.score,
            coefficient: *coef,
            accepted,
            restart: cand.restart,
            iterations: cand.iterations,
        });
        let term = Rank1Term::new(*coef, cand.vector.clone())?;
        current = current.subtract_rank_ones(&SymDecomposition::new(vec![term.clone()]))?;
        terms.push(term);
    }
    Ok((SymDecomposition::new(terms), report))
}

/// General symmetric decomposition into `rank` terms.
pub fn decompose_general(t: &SymTensor4, rank: usize, cfg: &DecompConfig) -> Result<SymDecomposition> {
    decompose_general_with_report(t, rank, cfg).map(|(d, _)| d)
}

/// Coefficient of `a^{⊗4}` in the tensor whose flattening has the given
/// (thin) spectrum: `(vec(aaᵀ)ᵀ V D⁻¹ Vᵀ vec(aaᵀ))⁻¹`.
///
/// Eigenpairs below the numerical-rank cutoff are ignored, so a full
/// spectrum can be passed as well.
pub fn fit_coefficient(spectral: &SpectralPair, a: &DVector<f64>) -> Result<f64> {
    let p = a.len();
    if spectral.vectors.nrows() != p * p {
        return Err(Error::DimensionMismatch(format!(
            "pattern of length {p} against a flattening with {} rows",
            spectral.vectors.nrows()
        )));
    }
    let norm = a.norm();
    if !(norm > 0.0) {
        return Err(Error::InvalidArgument("pattern vector is zero".into()));
    }
    let av = vec_outer(&(a / norm));
    let q = spectral.numerical_rank();
    let mut form = 0.0;
    for k in 0..q {
        let w = spectral.vectors.column(k).dot(&av);
        form += w * w / spectral.values[k];
    }
    if !(form.abs() >= MIN_QUADRATIC_FORM) {
        return Err(Error::PatternNotRepresented(form));
    }
    Ok(1.0 / form)
}

/// Fits the coefficients of known background patterns in `k4x` against one
/// thin spectrum of its flattening and subtracts them.
///
/// `rank_cap` bounds the thin spectrum; for sample cumulants it should be
/// the total number of components `r + ℓ`.
pub fn deflate_background(
    k4x: &SymTensor4,
    background: &[DVector<f64>],
    rank_cap: Option<usize>,
) -> Result<(Vec<f64>, SymTensor4)> {
    if background.is_empty() {
        return Ok((vec![], k4x.clone()));
    }
    let thin = sym_eig(&k4x.flatten())?.thin(rank_cap);
    let coefs = background
        .iter()
        .enumerate()
        .map(|(index, a)| {
            fit_coefficient(&thin, a).map_err(|e| Error::BackgroundPattern {
                index,
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    let terms = background
        .iter()
        .zip(&coefs)
        .map(|(a, &c)| Rank1Term::new(c, a.clone()))
        .collect::<Result<Vec<_>>>()?;
    let residual = k4x.subtract_rank_ones(&SymDecomposition::new(terms))?;
    Ok((coefs, residual))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GammaEstimate {
    /// Median of the per-index values.
    pub gamma: f64,
    /// `(λ′_i / λ_i)^{1/4}` per background term; `NaN` where excluded.
    pub per_index: Vec<f64>,
    /// Foreground coefficients `λ′_i` fitted in `κ4(x)`.
    pub lambda_prime: Vec<f64>,
    /// `max |per_index − γ| / γ` over the included indices.
    pub spread: f64,
    pub excluded: Vec<usize>,
}

/// Estimates the proportionality constant γ in `z′ = γ z` from the
/// background terms and the foreground cumulant.
pub fn estimate_gamma(
    k4x: &SymTensor4,
    y_terms: &SymDecomposition,
    rank_cap: Option<usize>,
) -> Result<GammaEstimate> {
    if y_terms.is_empty() {
        return Err(Error::NotProportional("no background terms to compare".into()));
    }
    let thin = sym_eig(&k4x.flatten())?.thin(rank_cap);
    let mut per_index = Vec::with_capacity(y_terms.len());
    let mut lambda_prime = Vec::with_capacity(y_terms.len());
    let mut excluded = vec![];
    for (i, term) in y_terms.terms().iter().enumerate() {
        let lp = fit_coefficient(&thin, &term.vector).map_err(|e| Error::BackgroundPattern {
            index: i,
            source: Box::new(e),
        })?;
        lambda_prime.push(lp);
        let ratio = lp / term.weight;
        if ratio > 0.0 && ratio.is_finite() {
            per_index.push(ratio.powf(0.25));
        } else {
            log::warn!("background term {i}: coefficient ratio {ratio:.4e} is not positive; excluded");
            per_index.push(f64::NAN);
            excluded.push(i);
        }
    }
    let mut included: Vec<f64> = per_index.iter().copied().filter(|v| !v.is_nan()).collect();
    if included.is_empty() {
        return Err(Error::NotProportional(
            "every background coefficient ratio is non-positive".into(),
        ));
    }
    included.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let m = included.len();
    let gamma = if m % 2 == 1 {
        included[m / 2]
    } else {
        0.5 * (included[m / 2 - 1] + included[m / 2])
    };
    let spread = included
        .iter()
        .map(|v| (v - gamma).abs())
        .fold(0.0, f64::max)
        / gamma;
    Ok(GammaEstimate {
        gamma,
        per_index,
        lambda_prime,
        spread,
        excluded,
    })
}
