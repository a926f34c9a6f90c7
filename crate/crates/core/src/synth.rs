//! Seeded synthetic foreground/background data with known mixing matrices.
//!
//! Background rows are `y = A z`, foreground rows are `x = A z′ + B s` with
//! independent exponential sources. Everything is drawn from one ChaCha8
//! stream (`rand_chacha::ChaCha8Rng::seed_from_u64(seed)`) in a fixed order:
//! `A`, then `B`, then the background rows, then the foreground rows.
//! Exponential and normal variates come from `rand_distr`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cumulants::DataMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthMode {
    General,
    Proportional,
}

/// How a schedule value `θ` in `exp(θ)` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThetaConvention {
    /// `θ` is the rate: mean `1/θ`, fourth cumulant `6/θ^4`.
    Rate,
    /// `θ` is the scale: mean `θ`, fourth cumulant `6 θ^4`.
    Scale,
}

impl ThetaConvention {
    pub fn to_rate(self, theta: f64) -> f64 {
        match self {
            ThetaConvention::Rate => theta,
            ThetaConvention::Scale => 1.0 / theta,
        }
    }
}

/// Exponential rates per source. Source `i` is `Exp(rate)` with mean
/// `1/rate` and fourth cumulant `6/rate^4`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRates {
    pub z: Vec<f64>,
    pub z_prime: Vec<f64>,
    pub s: Vec<f64>,
}

impl SourceRates {
    /// Standard schedule, indices counted from one: salient `s_i` has
    /// `θ = 2` for odd `i` and `1.5` for even `i`. In general mode `z_i, z′_i`
    /// have `θ = (2, 1)` for odd `i` and `(1, 2)` for even `i`; in
    /// proportional mode every background `θ` is 1.
    pub fn standard(mode: SynthMode, r: usize, l: usize, convention: ThetaConvention) -> Self {
        let odd = |i: usize| i % 2 == 0; // zero-based index of an odd source
        let c = |theta: f64| convention.to_rate(theta);
        let s = (0..l).map(|i| c(if odd(i) { 2.0 } else { 1.5 })).collect();
        match mode {
            SynthMode::General => Self {
                z: (0..r).map(|i| c(if odd(i) { 2.0 } else { 1.0 })).collect(),
                z_prime: (0..r).map(|i| c(if odd(i) { 1.0 } else { 2.0 })).collect(),
                s,
            },
            SynthMode::Proportional => Self {
                z: vec![1.0; r],
                z_prime: vec![1.0; r],
                s,
            },
        }
    }

    /// `γ` with `z′ = γ z` in distribution, when every rate ratio agrees.
    pub fn gamma(&self) -> Option<f64> {
        let g = self.z.first()? / self.z_prime.first()?;
        self.z
            .iter()
            .zip(&self.z_prime)
            .all(|(a, b)| ((a / b) - g).abs() <= 1e-12 * g)
            .then_some(g)
    }
}

/// Replaces one salient source by an equal mixture of `Exp(rate)` and
/// `Exp(rate) + shift`, recording which half each foreground row came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bimodal {
    pub source: usize,
    pub shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub p: usize,
    pub r: usize,
    pub l: usize,
    pub n_fg: usize,
    pub n_bg: usize,
    pub seed: u64,
    pub mode: SynthMode,
    pub rates: SourceRates,
    pub orthonormal_b: bool,
    /// Draw the columns of `A` inside the orthogonal complement of `B`.
    pub background_orthogonal: bool,
    pub bimodal: Option<Bimodal>,
}

impl SyntheticSpec {
    /// The benchmark protocol: `A` is `p x p`, `B` is `p x (p-1)` with
    /// orthonormal columns, `10^5` rows in each dataset, and the standard
    /// schedule read as exponential scales.
    pub fn benchmark(p: usize, seed: u64, mode: SynthMode) -> Self {
        let mut spec = Self::new(p, p, p.saturating_sub(1), 100_000, seed, mode);
        spec.rates = SourceRates::standard(mode, p, p.saturating_sub(1), ThetaConvention::Scale);
        spec
    }

    /// Standard schedule read as rates.
    pub fn new(p: usize, r: usize, l: usize, n: usize, seed: u64, mode: SynthMode) -> Self {
        Self {
            p,
            r,
            l,
            n_fg: n,
            n_bg: n,
            seed,
            mode,
            rates: SourceRates::standard(mode, r, l, ThetaConvention::Rate),
            orthonormal_b: true,
            background_orthogonal: false,
            bimodal: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.p == 0 || self.r == 0 {
            return bad("p and r must be positive".into());
        }
        if self.n_fg == 0 || self.n_bg == 0 {
            return bad("sample counts must be positive".into());
        }
        if self.orthonormal_b && self.l > self.p {
            return bad(format!("{} orthonormal columns do not fit in dimension {}", self.l, self.p));
        }
        if self.background_orthogonal && self.l >= self.p {
            return bad("background_orthogonal needs l < p".into());
        }
        if self.rates.z.len() != self.r || self.rates.z_prime.len() != self.r || self.rates.s.len() != self.l {
            return bad("source rate lists must have lengths r, r and l".into());
        }
        let all = self.rates.z.iter().chain(&self.rates.z_prime).chain(&self.rates.s);
        if all.clone().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return bad("source rates must be positive and finite".into());
        }
        if let Some(b) = self.bimodal {
            if b.source >= self.l || !b.shift.is_finite() {
                return bad("bimodal source must index a salient source with finite shift".into());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `p x r`, unit columns.
    pub a: DMatrix<f64>,
    /// `p x l`, unit columns.
    pub b: DMatrix<f64>,
    pub rates: SourceRates,
    pub gamma: Option<f64>,
    /// Mixture component of the bimodal source for each foreground row.
    pub labels: Option<Vec<usize>>,
}

fn gaussian_column(p: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(p, |_, _| StandardNormal.sample(rng));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

fn unit_columns_from(p: usize, r: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(p, r);
    for j in 0..r {
        m.set_column(j, &gaussian_column(p, rng));
    }
    m
}

/// Removes the components along the columns of `basis` (assumed
/// orthonormal), twice, then renormalizes. Returns `None` when nothing
/// is left.
fn orthogonalize(v: &DVector<f64>, basis: &[DVector<f64>]) -> Option<DVector<f64>> {
    let mut w = v.clone();
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(&w);
            w -= c * q;
        }
    }
    let n = w.norm();
    (n > 1e-8).then(|| w / n)
}

fn orthonormal_from(p: usize, l: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    if l > p {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {l} orthonormal columns in dimension {p}"
        )));
    }
    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(l);
    while cols.len() < l {
        if let Some(q) = orthogonalize(&gaussian_column(p, rng), &cols) {
            cols.push(q);
        }
    }
    Ok(columns(p, &cols))
}

fn columns(p: usize, cols: &[DVector<f64>]) -> DMatrix<f64> {
    DMatrix::from_fn(p, cols.len(), |i, j| cols[j][i])
}

/// `p x r` matrix of independent uniformly random unit columns.
pub fn random_unit_columns(p: usize, r: usize, seed: u64) -> DMatrix<f64> {
    unit_columns_from(p, r, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `p x l` matrix with orthonormal columns (Gram–Schmidt on Gaussian draws).
pub fn random_orthonormal(p: usize, l: usize, seed: u64) -> Result<DMatrix<f64>> {
    orthonormal_from(p, l, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Draws `(X, Y, truth)`: foreground, background, and the generating model.
pub fn generate(spec: &SyntheticSpec) -> Result<(DataMatrix, DataMatrix, GroundTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (p, r, l) = (spec.p, spec.r, spec.l);

    let (a, b) = if spec.background_orthogonal {
        let b = if spec.orthonormal_b {
            orthonormal_from(p, l, &mut rng)?
        } else {
            unit_columns_from(p, l, &mut rng)
        };
        let fg_basis: Vec<DVector<f64>> = b
            .clone()
            .qr()
            .q()
            .column_iter()
            .take(l)
            .map(|c| c.into_owned())
            .collect();
        let mut a_cols = Vec::with_capacity(r);
        while a_cols.len() < r {
            if let Some(c) = orthogonalize(&gaussian_column(p, &mut rng), &fg_basis) {
                a_cols.push(c);
            }
        }
        (columns(p, &a_cols), b)
    } else {
        let a = unit_columns_from(p, r, &mut rng);
        let b = if spec.orthonormal_b {
            orthonormal_from(p, l, &mut rng)?
        } else {
            unit_columns_from(p, l, &mut rng)
        };
        (a, b)
    };

    let exps = |rates: &[f64]| -> Vec<Exp<f64>> {
        rates.iter().map(|&t| Exp::new(t).expect("validated rate")).collect()
    };
    let z = exps(&spec.rates.z);
    let zp = exps(&spec.rates.z_prime);
    let s = exps(&spec.rates.s);

    let mut y = DMatrix::zeros(spec.n_bg, p);
    let mut src = DVector::zeros(r);
    for t in 0..spec.n_bg {
        for (i, d) in z.iter().enumerate() {
            src[i] = d.sample(&mut rng);
        }
        y.set_row(t, &(&a * &src).transpose());
    }

    let mut x = DMatrix::zeros(spec.n_fg, p);
    let mut src_p = DVector::zeros(r);
    let mut src_s = DVector::zeros(l);
    let mut labels = spec.bimodal.map(|_| Vec::with_capacity(spec.n_fg));
    for t in 0..spec.n_fg {
        for (i, d) in zp.iter().enumerate() {
            src_p[i] = d.sample(&mut rng);
        }
        for (i, d) in s.iter().enumerate() {
            src_s[i] = d.sample(&mut rng);
        }
        if let (Some(bm), Some(labels)) = (spec.bimodal, labels.as_mut()) {
            let label = usize::from(rng.gen_bool(0.5));
            src_s[bm.source] += bm.shift * label as f64;
            labels.push(label);
        }
        x.set_row(t, &(&a * &src_p + &b * &src_s).transpose());
    }

    let truth = GroundTruth {
        a,
        b,
        rates: spec.rates.clone(),
        gamma: spec.rates.gamma(),
        labels,
    };
    Ok((DataMatrix::new(x)?, DataMatrix::new(y)?, truth))
}
