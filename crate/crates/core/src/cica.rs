//! Contrastive ICA pipelines.
//!
//! General mode recovers the background patterns from `κ4(y)`, fits and
//! subtracts their coefficients from `κ4(x)`, and decomposes the residual.
//! Proportional mode assumes `z′ = γ z` and decomposes `κ4(x) − γ⁴ κ4(y)`.
//! Foreground patterns are ranked by the variance ratio
//! `k(b) = bᵀκ2(x)b / bᵀκ2(y)b`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cumulants::{sample_covariance, Cumulants, DataMatrix};
use crate::decomp::{
    decompose_general, deflate_background, estimate_gamma, max_identifiable_rank, DecompConfig,
};
use crate::error::{Error, Result};
use crate::htd::htd;
use crate::tensor::{canonical_sign, sym_eig, SymDecomposition, SymTensor4};

pub const SCHEMA_VERSION: u32 = 1;

/// Automatic PCA keeps at most this many components.
pub const PCA_AUTO_MAX: usize = 30;
/// Automatic PCA stops once this fraction of variance is explained.
pub const PCA_AUTO_VARIANCE: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaBasis {
    /// `p x k`, orthonormal columns.
    pub u: DMatrix<f64>,
    pub center: DVector<f64>,
    /// Variance ratio of each kept component.
    pub explained: Vec<f64>,
}

impl PcaBasis {
    pub fn input_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn dim(&self) -> usize {
        self.u.ncols()
    }
}

#[derive(Serialize, Deserialize)]
struct PcaBasisJson {
    #[serde(rename = "U")]
    u: Vec<Vec<f64>>,
    center: Vec<f64>,
    explained: Vec<f64>,
}

impl Serialize for PcaBasis {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PcaBasisJson {
            u: matrix_rows(&self.u),
            center: self.center.iter().copied().collect(),
            explained: self.explained.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PcaBasis {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = PcaBasisJson::deserialize(d)?;
        let p = j.u.len();
        let k = j.u.first().map_or(0, Vec::len);
        if j.u.iter().any(|r| r.len() != k) || j.center.len() != p || j.explained.len() != k {
            return Err(serde::de::Error::custom("inconsistent PCA block dimensions"));
        }
        Ok(PcaBasis {
            u: DMatrix::from_fn(p, k, |i, c| j.u[i][c]),
            center: DVector::from_vec(j.center),
            explained: j.explained,
        })
    }
}

pub(crate) fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn stack(x: &DataMatrix, y: &DataMatrix) -> Result<DataMatrix> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "foreground has {} columns, background has {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let (m, n, p) = (x.nrows(), y.nrows(), x.ncols());
    let (xv, yv) = (x.values(), y.values());
    DataMatrix::new(DMatrix::from_fn(m + n, p, |i, j| {
        if i < m {
            xv[(i, j)]
        } else {
            yv[(i - m, j)]
        }
    }))
}

/// Principal directions of the stacked foreground and background rows.
///
/// With `k = None` the number of components is the smaller of 30 and the
/// count needed to explain 90% of the variance.
pub fn pca_fit(x: &DataMatrix, y: &DataMatrix, k: Option<usize>) -> Result<PcaBasis> {
    let both = stack(x, y)?;
    let p = both.ncols();
    if let Some(k) = k {
        if k == 0 || k > p {
            return Err(Error::InvalidArgument(format!(
                "PCA dimension must be in 1..={p}, got {k}"
            )));
        }
    }
    let center = crate::cumulants::sample_mean(&both);
    let cov = sample_covariance(&both)?;
    let eig = sym_eig(&cov)?;
    let values: Vec<f64> = eig.values.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = values.iter().sum();
    let rank = eig.numerical_rank();
    if rank == 0 || total <= 0.0 {
        return Err(Error::NonFinite("combined data has zero variance".into()));
    }
    let explained_all: Vec<f64> = values.iter().map(|v| v / total).collect();
    let mut k = match k {
        Some(k) => k,
        None => {
            let mut acc = 0.0;
            let mut k90 = p;
            for (i, e) in explained_all.iter().enumerate() {
                acc += e;
                if acc >= PCA_AUTO_VARIANCE {
                    k90 = i + 1;
                    break;
                }
            }
            k90.min(PCA_AUTO_MAX)
        }
    };
    if k > rank {
        log::warn!("PCA dimension {k} exceeds the numerical rank {rank} of the data; using {rank}");
        k = rank;
    }
    Ok(PcaBasis {
        u: eig.vectors.columns(0, k).into_owned(),
        center,
        explained: explained_all[..k].to_vec(),
    })
}

/// `(D − center) U`.
pub fn pca_transform(data: &DataMatrix, basis: &PcaBasis) -> Result<DataMatrix> {
    if data.ncols() != basis.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, PCA basis expects {}",
            data.ncols(),
            basis.input_dim()
        )));
    }
    let mut centered = data.values().clone();
    for mut row in centered.row_iter_mut() {
        row -= basis.center.transpose();
    }
    DataMatrix::new(centered * &basis.u)
}

/// `U B` with unit columns, plus the norm each column had before scaling.
pub fn back_project(patterns: &DMatrix<f64>, basis: &PcaBasis) -> Result<(DMatrix<f64>, Vec<f64>)> {
    if patterns.nrows() != basis.dim() {
        return Err(Error::DimensionMismatch(format!(
            "patterns have {} rows, PCA basis has {} components",
            patterns.nrows(),
            basis.dim()
        )));
    }
    let mut full = &basis.u * patterns;
    let mut factors = Vec::with_capacity(full.ncols());
    for mut col in full.column_iter_mut() {
        let n = col.norm();
        if !(n > 0.0) {
            return Err(Error::PatternNotRepresented(n));
        }
        col /= n;
        factors.push(n);
    }
    Ok((full, factors))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeReport {
    /// `|eigenvalues|` of the flattening, descending.
    pub magnitudes: Vec<f64>,
    pub suggested_rank: usize,
}

/// Eigenvalue magnitudes of the flattening and the position of the largest
/// ratio between consecutive magnitudes within the first half.
pub fn scree(t: &SymTensor4) -> Result<ScreeReport> {
    let magnitudes: Vec<f64> = sym_eig(&t.flatten())?.values.iter().map(|v| v.abs()).collect();
    let mut best: Option<(usize, f64)> = None;
    let half = (magnitudes.len() / 2).min(magnitudes.len().saturating_sub(1));
    for i in 0..half {
        let (a, b) = (magnitudes[i], magnitudes[i + 1]);
        if a == 0.0 {
            break;
        }
        let ratio = if b == 0.0 { f64::INFINITY } else { a / b };
        if best.map_or(true, |(_, r)| ratio > r) {
            best = Some((i, ratio));
        }
    }
    let suggested_rank = match best {
        Some((i, _)) => i + 1,
        None if magnitudes.first().is_some_and(|m| *m > 0.0) => magnitudes.len(),
        None => 0,
    };
    Ok(ScreeReport {
        magnitudes,
        suggested_rank,
    })
}

/// `k(b) = bᵀκ2x b / bᵀκ2y b` for each pattern. A denominator below
/// `1e-12 · trace(κ2y)` yields `+∞`.
pub fn rank_patterns(patterns: &[DVector<f64>], k2x: &DMatrix<f64>, k2y: &DMatrix<f64>) -> Result<Vec<f64>> {
    let p = k2x.nrows();
    if k2x.shape() != (p, p) || k2y.shape() != (p, p) {
        return Err(Error::DimensionMismatch("covariances must be square and equal-sized".into()));
    }
    let floor = 1e-12 * k2y.trace();
    patterns
        .iter()
        .enumerate()
        .map(|(i, b)| {
            if b.len() != p {
                return Err(Error::DimensionMismatch(format!(
                    "pattern {i} has length {}, covariances are {p}x{p}",
                    b.len()
                )));
            }
            let num = b.dot(&(k2x * b));
            let den = b.dot(&(k2y * b));
            if den < floor * b.norm_squared() {
                log::warn!("pattern {i} has near-zero background variance; score set to +inf");
                Ok(f64::INFINITY)
            } else {
                Ok(num / den)
            }
        })
        .collect()
}

mod score_serde {
    use serde::{de, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_infinite() && *x > 0.0 => s.serialize_str("inf"),
            Some(x) => s.serialize_f64(*x),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Option::<Repr>::deserialize(d)? {
            None => Ok(None),
            Some(Repr::Num(x)) => Ok(Some(x)),
            Some(Repr::Text(t)) if t == "inf" => Ok(Some(f64::INFINITY)),
            Some(Repr::Text(t)) => Err(de::Error::custom(format!("invalid k_score {t:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    General,
    Proportional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundTerm {
    pub vector: Vec<f64>,
    pub lambda: f64,
    pub lambda_prime: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForegroundTerm {
    /// Unit pattern in model coordinates (PCA space when a basis is present).
    pub vector: Vec<f64>,
    pub nu: f64,
    #[serde(with = "score_serde")]
    pub k_score: Option<f64>,
    /// Unit pattern in the original coordinates, when a PCA basis is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector_original: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranks {
    pub r: Option<usize>,
    pub l: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaDiagnostics {
    /// `NaN` entries (excluded indices) are written as `null`.
    pub per_index: Vec<Option<f64>>,
    pub spread: f64,
    pub excluded: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CicaModel {
    pub schema: u32,
    pub mode: FitMode,
    pub ranks: Ranks,
    pub seed: u64,
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_diagnostics: Option<GammaDiagnostics>,
    pub background: Vec<BackgroundTerm>,
    pub foreground: Vec<ForegroundTerm>,
    /// Frobenius norm of the tensor left after removing the background.
    pub residual_norm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca: Option<PcaBasis>,
}

fn to_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn foreground_terms(d: &SymDecomposition) -> Vec<ForegroundTerm> {
    d.terms()
        .iter()
        .map(|t| ForegroundTerm {
            vector: to_vec(&t.vector),
            nu: t.weight,
            k_score: None,
            vector_original: None,
        })
        .collect()
}

/// Checks the joint rank `r + ℓ` against the identifiability bound.
pub fn check_identifiable(p: usize, r: usize, l: usize) -> Result<()> {
    let bound = max_identifiable_rank(p);
    if r + l > bound {
        return Err(Error::NotIdentifiable(format!(
            "r + l = {} exceeds binom(p+1, 2) = {bound} for p = {p}",
            r + l
        )));
    }
    if p == 4 && (r + l > 9 || r == 8 || l == 8) {
        return Err(Error::NotIdentifiable(format!(
            "p = 4 requires r + l <= 9 with r, l != 8; got r = {r}, l = {l}"
        )));
    }
    Ok(())
}

fn same_dim(k4x: &SymTensor4, k4y: &SymTensor4) -> Result<usize> {
    if k4x.dim() != k4y.dim() {
        return Err(Error::DimensionMismatch(format!(
            "foreground tensor has dimension {}, background {}",
            k4x.dim(),
            k4y.dim()
        )));
    }
    Ok(k4x.dim())
}

/// General cICA on fourth cumulants. Foreground terms come out in
/// decomposition order with no `k_score`; see [`CicaModel::rank_by`].
pub fn fit_general(
    k4x: &SymTensor4,
    k4y: &SymTensor4,
    r: usize,
    l: usize,
    cfg: &DecompConfig,
) -> Result<CicaModel> {
    let p = same_dim(k4x, k4y)?;
    if r == 0 {
        return Err(Error::InvalidRank("background rank must be positive".into()));
    }
    check_identifiable(p, r, l)?;
    let bg = decompose_general(k4y, r, cfg).map_err(Error::at_step("recover background"))?;
    let a: Vec<DVector<f64>> = bg.terms().iter().map(|t| t.vector.clone()).collect();
    let (lambda_prime, residual) =
        deflate_background(k4x, &a, Some(r + l)).map_err(Error::at_step("subtract background"))?;
    let fg = if l == 0 {
        SymDecomposition::new(vec![])
    } else {
        htd(&residual, l).map_err(Error::at_step("recover foreground"))?
    };
    Ok(CicaModel {
        schema: SCHEMA_VERSION,
        mode: FitMode::General,
        ranks: Ranks { r: Some(r), l },
        seed: cfg.seed,
        gamma: None,
        gamma_diagnostics: None,
        background: bg
            .terms()
            .iter()
            .zip(&lambda_prime)
            .map(|(t, lp)| BackgroundTerm {
                vector: to_vec(&t.vector),
                lambda: t.weight,
                lambda_prime: *lp,
            })
            .collect(),
        foreground: foreground_terms(&fg),
        residual_norm: residual.frobenius_norm(),
        pca: None,
    })
}

/// Proportional cICA. With `gamma = None` it is estimated from a rank-`r`
/// decomposition of `κ4(y)`, so `r` is then required.
pub fn fit_proportional(
    k4x: &SymTensor4,
    k4y: &SymTensor4,
    l: usize,
    gamma: Option<f64>,
    r: Option<usize>,
    cfg: &DecompConfig,
) -> Result<CicaModel> {
    let p = same_dim(k4x, k4y)?;
    if l == 0 || l > p * p {
        return Err(Error::InvalidRank(format!(
            "foreground rank must be in 1..={} for p = {p}, got {l}",
            p * p
        )));
    }
    let (gamma, diagnostics, background) = match gamma {
        Some(g) => {
            if !g.is_finite() || g < 0.0 {
                return Err(Error::InvalidArgument(format!("gamma must be finite and >= 0, got {g}")));
            }
            (g, None, vec![])
        }
        None => {
            let r = r.ok_or_else(|| {
                Error::InvalidArgument("estimating gamma needs a background rank r".into())
            })?;
            if r == 0 {
                return Err(Error::InvalidRank("background rank must be positive".into()));
            }
            check_identifiable(p, r, l)?;
            let bg = decompose_general(k4y, r, cfg).map_err(Error::at_step("recover background"))?;
            let est = estimate_gamma(k4x, &bg, Some(r + l)).map_err(Error::at_step("estimate gamma"))?;
            log::info!(
                "gamma = {:.6}, spread = {:.4}, per-index = {:?}",
                est.gamma,
                est.spread,
                est.per_index
            );
            let background = bg
                .terms()
                .iter()
                .zip(&est.lambda_prime)
                .map(|(t, lp)| BackgroundTerm {
                    vector: to_vec(&t.vector),
                    lambda: t.weight,
                    lambda_prime: *lp,
                })
                .collect();
            let diag = GammaDiagnostics {
                per_index: est.per_index.iter().map(|v| v.is_finite().then_some(*v)).collect(),
                spread: est.spread,
                excluded: est.excluded.clone(),
            };
            (est.gamma, Some(diag), background)
        }
    };
    let residual = k4x.add_scaled(-gamma.powi(4), k4y)?;
    let fg = htd(&residual, l).map_err(Error::at_step("recover foreground"))?;
    Ok(CicaModel {
        schema: SCHEMA_VERSION,
        mode: FitMode::Proportional,
        ranks: Ranks { r, l },
        seed: cfg.seed,
        gamma: Some(gamma),
        gamma_diagnostics: diagnostics,
        background,
        foreground: foreground_terms(&fg),
        residual_norm: residual.frobenius_norm(),
        pca: None,
    })
}

impl CicaModel {
    /// Dimension of the model coordinates (PCA space when present).
    pub fn dim(&self) -> usize {
        self.foreground
            .first()
            .map(|t| t.vector.len())
            .or_else(|| self.background.first().map(|t| t.vector.len()))
            .or_else(|| self.pca.as_ref().map(PcaBasis::dim))
            .unwrap_or(0)
    }

    /// Foreground patterns as the columns of a `dim x ℓ` matrix.
    pub fn foreground_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, self.foreground.len(), |i, j| self.foreground[j].vector[i])
    }

    pub fn background_matrix(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, self.background.len(), |i, j| self.background[j].vector[i])
    }

    /// Foreground patterns in the original coordinates.
    pub fn foreground_original(&self) -> DMatrix<f64> {
        match &self.pca {
            None => self.foreground_matrix(),
            Some(basis) => {
                let p = basis.input_dim();
                DMatrix::from_fn(p, self.foreground.len(), |i, j| {
                    self.foreground[j].vector_original.as_ref().map_or(f64::NAN, |v| v[i])
                })
            }
        }
    }

    /// Scores the foreground patterns with `k(b)` against the given
    /// covariances (model coordinates) and sorts them by descending score.
    pub fn rank_by(&mut self, k2x: &DMatrix<f64>, k2y: &DMatrix<f64>) -> Result<()> {
        let vs: Vec<DVector<f64>> = self
            .foreground
            .iter()
            .map(|t| DVector::from_column_slice(&t.vector))
            .collect();
        let scores = rank_patterns(&vs, k2x, k2y)?;
        for (t, s) in self.foreground.iter_mut().zip(scores) {
            t.k_score = Some(s);
        }
        self.foreground
            .sort_by(|a, b| b.k_score.unwrap_or(f64::NAN).total_cmp(&a.k_score.unwrap_or(f64::NAN)));
        Ok(())
    }

    /// Records a PCA basis and the back-projected foreground patterns.
    pub fn attach_pca(&mut self, basis: PcaBasis) -> Result<()> {
        let (full, _) = back_project(&self.foreground_matrix(), &basis)?;
        for (j, t) in self.foreground.iter_mut().enumerate() {
            let mut v = full.column(j).into_owned();
            canonical_sign(&mut v);
            t.vector_original = Some(to_vec(&v));
        }
        self.pca = Some(basis);
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and checks a model document.
    pub fn from_json(text: &str) -> Result<Self> {
        let m: CicaModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model schema {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let d = self.dim();
        let vectors = self
            .foreground
            .iter()
            .map(|t| &t.vector)
            .chain(self.background.iter().map(|t| &t.vector));
        for v in vectors {
            if v.len() != d {
                return Err(Error::Parse("model vectors have inconsistent lengths".into()));
            }
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !((n - 1.0).abs() < 1e-6) {
                return Err(Error::Parse(format!("model vector has norm {n}, expected 1")));
            }
        }
        if let Some(basis) = &self.pca {
            if basis.dim() != d {
                return Err(Error::Parse(format!(
                    "PCA basis has {} components but patterns have length {d}",
                    basis.dim()
                )));
            }
        }
        Ok(())
    }
}

/// `(X b_i, X b_j)` for two foreground patterns, applying the model's PCA
/// transform to `X` first when it has one.
pub fn project(x: &DataMatrix, model: &CicaModel, i: usize, j: usize) -> Result<DMatrix<f64>> {
    let l = model.foreground.len();
    if i >= l || j >= l || i == j {
        return Err(Error::InvalidArgument(format!(
            "pattern indices ({i}, {j}) must be distinct and below {l}"
        )));
    }
    let transformed;
    let data = match &model.pca {
        Some(basis) => {
            transformed = pca_transform(x, basis)?;
            &transformed
        }
        None => x,
    };
    if data.ncols() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "data has {} columns, model patterns have length {}",
            data.ncols(),
            model.dim()
        )));
    }
    let bi = DVector::from_column_slice(&model.foreground[i].vector);
    let bj = DVector::from_column_slice(&model.foreground[j].vector);
    let v = data.values();
    Ok(DMatrix::from_fn(data.nrows(), 2, |row, c| {
        let b = if c == 0 { &bi } else { &bj };
        v.row(row).iter().zip(b.iter()).map(|(a, b)| a * b).sum()
    }))
}

/// How the data pipeline reduces dimension before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcaChoice {
    None,
    Auto,
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub mode: FitMode,
    pub r: Option<usize>,
    pub l: Option<usize>,
    /// Total rank `r + ℓ`; used to derive `ℓ` when only `q` is given.
    pub q: Option<usize>,
    pub gamma: Option<f64>,
    pub pca: PcaChoice,
    pub decomp: DecompConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mode: FitMode::General,
            r: None,
            l: None,
            q: None,
            gamma: None,
            pca: PcaChoice::None,
            decomp: DecompConfig::default(),
        }
    }
}

/// Everything the data pipeline computed on the way to the model.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub model: CicaModel,
    pub scree_x: ScreeReport,
    pub scree_y: ScreeReport,
    pub cumulants_x: Cumulants,
    pub cumulants_y: Cumulants,
}

fn resolve_ranks(opts: &FitOptions, sx: &ScreeReport, sy: &ScreeReport) -> Result<(Option<usize>, usize)> {
    let r = match (opts.r, opts.mode, opts.gamma) {
        (Some(r), _, _) => Some(r),
        (None, FitMode::Proportional, Some(_)) => None,
        (None, _, _) => Some(sy.suggested_rank),
    };
    let l = match (opts.l, opts.q) {
        (Some(l), _) => l,
        (None, q) => {
            let q = q.unwrap_or(sx.suggested_rank);
            match (opts.mode, r) {
                (FitMode::Proportional, None) => q,
                (_, r) => {
                    let r = r.unwrap_or(0);
                    q.checked_sub(r).ok_or_else(|| {
                        Error::InvalidRank(format!("total rank q = {q} is smaller than r = {r}"))
                    })?
                }
            }
        }
    };
    Ok((r, l))
}

/// Full pipeline from raw foreground and background rows to a ranked model.
pub fn fit_data(x: &DataMatrix, y: &DataMatrix, opts: &FitOptions) -> Result<FitOutput> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "foreground has {} columns, background has {}",
            x.ncols(),
            y.ncols()
        )));
    }
    let basis = match opts.pca {
        PcaChoice::None => None,
        PcaChoice::Auto => Some(pca_fit(x, y, None).map_err(Error::at_step("pca"))?),
        PcaChoice::Fixed(k) => Some(pca_fit(x, y, Some(k)).map_err(Error::at_step("pca"))?),
    };
    let (xs, ys);
    let (xd, yd) = match &basis {
        Some(b) => {
            xs = pca_transform(x, b)?;
            ys = pca_transform(y, b)?;
            (&xs, &ys)
        }
        None => (x, y),
    };
    let cx = Cumulants::estimate(xd).map_err(Error::at_step("foreground cumulants"))?;
    let cy = Cumulants::estimate(yd).map_err(Error::at_step("background cumulants"))?;
    let scree_x = scree(&cx.fourth)?;
    let scree_y = scree(&cy.fourth)?;
    let (r, l) = resolve_ranks(opts, &scree_x, &scree_y)?;
    log::info!("fitting with r = {r:?}, l = {l}");
    let mut model = match opts.mode {
        FitMode::General => fit_general(&cx.fourth, &cy.fourth, r.unwrap_or(0), l, &opts.decomp)?,
        FitMode::Proportional => fit_proportional(&cx.fourth, &cy.fourth, l, opts.gamma, r, &opts.decomp)?,
    };
    model.rank_by(&cx.covariance, &cy.covariance)?;
    if let Some(b) = basis {
        model.attach_pca(b)?;
    }
    Ok(FitOutput {
        model,
        scree_x,
        scree_y,
        cumulants_x: cx,
        cumulants_y: cy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cumulants::build_exact_tensor;
    use crate::eval::{greedy_align, recovery_scores};
    use crate::synth::{random_orthonormal, random_unit_columns};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp, StandardNormal};

    fn gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| StandardNormal.sample(rng))
    }

    fn columns(m: &DMatrix<f64>) -> Vec<DVector<f64>> {
        m.column_iter().map(|c| c.into_owned()).collect()
    }

    fn terms(weights: &[f64], m: &DMatrix<f64>) -> Vec<(f64, DVector<f64>)> {
        weights.iter().copied().zip(columns(m)).collect()
    }

    fn model_with(patterns: &DMatrix<f64>) -> CicaModel {
        CicaModel {
            schema: SCHEMA_VERSION,
            mode: FitMode::General,
            ranks: Ranks { r: Some(0), l: patterns.ncols() },
            seed: 0,
            gamma: None,
            gamma_diagnostics: None,
            background: vec![],
            foreground: columns(patterns)
                .iter()
                .map(|b| ForegroundTerm {
                    vector: to_vec(&b.normalize()),
                    nu: 1.0,
                    k_score: None,
                    vector_original: None,
                })
                .collect(),
            residual_norm: 0.0,
            pca: None,
        }
    }

    /// Foreground and background tensors of a general model with
    /// orthonormal `B`, plus the pieces used to build them.
    struct Exact {
        kx: SymTensor4,
        ky: SymTensor4,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        lambda_prime: Vec<f64>,
    }

    fn exact_general(p: usize, r: usize, l: usize, seed: u64) -> Exact {
        let a = random_unit_columns(p, r, seed);
        let b = random_orthonormal(p, l, seed + 1).unwrap();
        let lambda: Vec<f64> = (0..r).map(|i| 1.0 + 0.5 * i as f64).collect();
        let lambda_prime: Vec<f64> = (0..r).map(|i| 2.5 - 0.4 * i as f64).collect();
        let nu: Vec<f64> = (0..l).map(|j| 3.0 - 0.7 * j as f64).collect();
        let ky = build_exact_tensor(p, &terms(&lambda, &a)).unwrap();
        let mut xt = terms(&lambda_prime, &a);
        xt.extend(terms(&nu, &b));
        let kx = build_exact_tensor(p, &xt).unwrap();
        Exact { kx, ky, a, b, lambda_prime }
    }

    #[test]
    fn pca_on_exact_low_rank_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let basis = random_orthonormal(5, 2, 7).unwrap();
        let x = DataMatrix::new(gaussian(40, 2, &mut rng) * basis.transpose()).unwrap();
        let y = DataMatrix::new(gaussian(30, 2, &mut rng) * basis.transpose()).unwrap();
        let pca = pca_fit(&x, &y, Some(2)).unwrap();
        assert!((pca.explained.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        let auto = pca_fit(&x, &y, None).unwrap();
        assert!(auto.dim() <= 2);
        let truncated = pca_fit(&x, &y, Some(4)).unwrap();
        assert_eq!(truncated.dim(), 2);
        assert!(pca_fit(&x, &y, Some(6)).is_err());
    }

    #[test]
    fn pca_full_rank_is_a_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = DataMatrix::new(gaussian(50, 4, &mut rng)).unwrap();
        let y = DataMatrix::new(gaussian(50, 4, &mut rng)).unwrap();
        let pca = pca_fit(&x, &y, Some(4)).unwrap();
        assert!((&pca.u * pca.u.transpose() - DMatrix::<f64>::identity(4, 4)).amax() < 1e-8);
        assert!((pca.u.transpose() * &pca.u - DMatrix::<f64>::identity(4, 4)).amax() < 1e-10);
        let t = pca_transform(&x, &pca).unwrap();
        let mut back = t.values() * pca.u.transpose();
        for mut row in back.row_iter_mut() {
            row += pca.center.transpose();
        }
        assert!((back - x.values()).amax() < 1e-8);
        assert!(pca.explained.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn pca_matches_covariance_eigenvectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let scales = DMatrix::from_diagonal(&DVector::from_vec(vec![5.0, 3.0, 2.0, 1.0, 0.5]));
        let rot = random_orthonormal(5, 5, 11).unwrap();
        let mix = &scales * rot.transpose();
        let x = gaussian(300, 5, &mut rng) * &mix;
        let y = gaussian(200, 5, &mut rng) * &mix;
        let (xd, yd) = (DataMatrix::new(x.clone()).unwrap(), DataMatrix::new(y.clone()).unwrap());
        let pca = pca_fit(&xd, &yd, Some(3)).unwrap();
        // Oracle: eigenvectors of the covariance of the stacked rows.
        let stacked = DMatrix::from_fn(500, 5, |i, j| if i < 300 { x[(i, j)] } else { y[(i - 300, j)] });
        let mean = stacked.row_mean();
        let mut c = stacked.clone();
        for mut row in c.row_iter_mut() {
            row -= &mean;
        }
        let cov = c.transpose() * &c / 500.0;
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]));
        for j in 0..3 {
            let v = eig.eigenvectors.column(order[j]);
            assert!((pca.u.column(j).dot(&v).abs() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn back_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = DataMatrix::new(gaussian(60, 5, &mut rng)).unwrap();
        let pca = pca_fit(&x, &x, Some(3)).unwrap();
        // A vector inside span(U) survives the round trip.
        let a = (&pca.u * DVector::from_vec(vec![0.3, -0.5, 0.8])).normalize();
        let b = pca.u.transpose() * &a;
        let (full, _) = back_project(&DMatrix::from_column_slice(3, 1, b.as_slice()), &pca).unwrap();
        assert!((full.column(0) - &a).norm().min((full.column(0) + &a).norm()) < 1e-12);
        let r = DMatrix::from_fn(3, 2, |_, _| rng.gen_range(-1.0..1.0));
        let (full, factors) = back_project(&r, &pca).unwrap();
        let direct = &pca.u * &r;
        for j in 0..2 {
            let d = direct.column(j) / factors[j];
            assert!((d - full.column(j)).amax() < 1e-12);
        }
        assert!(back_project(&DMatrix::zeros(4, 1), &pca).is_err());
    }

    #[test]
    fn scree_exact_rank() {
        let t = build_exact_tensor(4, &terms(&[3.0, -2.0, 1.0], &random_unit_columns(4, 3, 5))).unwrap();
        let s = scree(&t).unwrap();
        assert_eq!(s.suggested_rank, 3);
        assert!(s.magnitudes[3..].iter().all(|m| *m < 1e-10 * s.magnitudes[0]));
        assert!(s.magnitudes.windows(2).all(|w| w[0] >= w[1]));
        let z = scree(&SymTensor4::zeros(3)).unwrap();
        assert_eq!(z.suggested_rank, 0);
        assert!(z.magnitudes.iter().all(|m| *m == 0.0));
    }

    #[test]
    fn identifiability_bounds() {
        assert!(check_identifiable(6, 4, 3).is_ok());
        assert!(check_identifiable(3, 4, 3).is_err());
        assert!(check_identifiable(4, 8, 1).is_err());
        assert!(check_identifiable(4, 1, 8).is_err());
        assert!(check_identifiable(4, 5, 4).is_ok());
        assert!(check_identifiable(4, 6, 4).is_err());
        let e = exact_general(3, 4, 3, 0);
        let err = fit_general(&e.kx, &e.ky, 4, 3, &DecompConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotIdentifiable(_)));
    }

    #[test]
    fn general_pipeline_exact() {
        let e = exact_general(6, 4, 3, 20);
        let m = fit_general(&e.kx, &e.ky, 4, 3, &DecompConfig::default()).unwrap();
        let al = greedy_align(&e.b, &m.foreground_matrix()).unwrap();
        assert!((al.apply(&m.foreground_matrix()) - &e.b).amax() < 1e-6);
        let aal = greedy_align(&e.a, &m.background_matrix()).unwrap();
        for (i, k) in aal.permutation.iter().enumerate() {
            assert!((m.background[*k].lambda_prime - e.lambda_prime[i]).abs() < 1e-8);
        }
        assert!(m.foreground.iter().all(|t| t.k_score.is_none()));
        assert_eq!(m.gamma, None);
    }

    #[test]
    fn general_pipeline_without_foreground() {
        let e = exact_general(5, 3, 0, 30);
        let m = fit_general(&e.kx, &e.ky, 3, 0, &DecompConfig::default()).unwrap();
        assert!(m.foreground.is_empty());
        assert!(m.residual_norm < 1e-8 * e.kx.frobenius_norm());
    }

    #[test]
    fn step_labels_on_failure() {
        let e = exact_general(4, 2, 1, 31);
        let err = fit_general(&e.kx, &SymTensor4::zeros(4), 2, 1, &DecompConfig::default()).unwrap_err();
        assert!(err.to_string().contains("recover background"), "{err}");
    }

    /// `κ4x = γ⁴ κ4y + Σ ν b⊗4`.
    fn exact_proportional(p: usize, r: usize, l: usize, gamma: f64, seed: u64) -> (SymTensor4, SymTensor4, DMatrix<f64>) {
        let a = random_unit_columns(p, r, seed);
        let b = random_orthonormal(p, l, seed + 1).unwrap();
        let lambda: Vec<f64> = (0..r).map(|i| 1.0 + 0.3 * i as f64).collect();
        let ky = build_exact_tensor(p, &terms(&lambda, &a)).unwrap();
        let nu: Vec<f64> = (0..l).map(|j| 2.0 + j as f64).collect();
        let fg = build_exact_tensor(p, &terms(&nu, &b)).unwrap();
        let kx = fg.add_scaled(gamma.powi(4), &ky).unwrap();
        (kx, ky, b)
    }

    #[test]
    fn proportional_exact_gamma_two() {
        let (kx, ky, b) = exact_proportional(6, 3, 2, 2.0, 40);
        let m = fit_proportional(&kx, &ky, 2, None, Some(3), &DecompConfig::default()).unwrap();
        assert!((m.gamma.unwrap() - 2.0).abs() < 1e-6);
        assert!(m.gamma_diagnostics.as_ref().unwrap().spread < 1e-6);
        let al = greedy_align(&b, &m.foreground_matrix()).unwrap();
        assert!((al.apply(&m.foreground_matrix()) - &b).amax() < 1e-6);
        assert!(fit_proportional(&kx, &ky, 2, None, None, &DecompConfig::default()).is_err());
    }

    #[test]
    fn proportional_gamma_zero_is_pure_foreground() {
        let (kx, ky, _) = exact_proportional(4, 2, 2, 1.0, 41);
        let m = fit_proportional(&kx, &ky, 3, Some(0.0), None, &DecompConfig::default()).unwrap();
        let direct = htd(&kx, 3).unwrap();
        assert_eq!(m.gamma, Some(0.0));
        assert!(m.background.is_empty());
        for (t, d) in m.foreground.iter().zip(direct.terms()) {
            assert_eq!(t.vector, to_vec(&d.vector));
            assert_eq!(t.nu, d.weight);
        }
        assert!(fit_proportional(&kx, &ky, 0, Some(1.0), None, &DecompConfig::default()).is_err());
        assert!(fit_proportional(&kx, &ky, 2, Some(-1.0), None, &DecompConfig::default()).is_err());
    }

    #[test]
    fn proportional_and_general_share_the_foreground_subspace() {
        let (kx, ky, _) = exact_proportional(5, 3, 2, 1.3, 42);
        let g = fit_general(&kx, &ky, 3, 2, &DecompConfig::default()).unwrap();
        let p = fit_proportional(&kx, &ky, 2, None, Some(3), &DecompConfig::default()).unwrap();
        let qg = g.foreground_matrix().qr().q();
        let qp = p.foreground_matrix().qr().q();
        let cosines = (qg.transpose() * qp).singular_values();
        for c in cosines.iter() {
            assert!(c.min(1.0).acos() < 1e-4, "{cosines}");
        }
    }

    #[test]
    fn pattern_scores() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let ky = &m * m.transpose() + DMatrix::<f64>::identity(4, 4);
        let kx = &ky * 2.0;
        let bs: Vec<DVector<f64>> = (0..3).map(|_| DVector::from_fn(4, |_, _| rng.gen_range(-1.0..1.0))).collect();
        for s in rank_patterns(&bs, &kx, &ky).unwrap() {
            assert!((s - 2.0).abs() < 1e-12);
        }
        let kx = DMatrix::from_diagonal(&DVector::from_vec(vec![6.0, 1.0]));
        let ky = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 1.0]));
        let e1 = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(rank_patterns(&[e1], &kx, &ky).unwrap(), vec![2.0]);
        // Background variance vanishes along e2.
        let ky = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 0.0]));
        let e2 = DVector::from_vec(vec![0.0, 1.0]);
        assert_eq!(rank_patterns(&[e2], &kx, &ky).unwrap(), vec![f64::INFINITY]);
    }

    #[test]
    fn pattern_scores_match_direct_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let p = rng.gen_range(2..=6);
            let g1 = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
            let g2 = DMatrix::from_fn(p, p, |_, _| rng.gen_range(-1.0..1.0));
            let (kx, ky) = (&g1 * g1.transpose(), &g2 * g2.transpose() + DMatrix::identity(p, p) * 0.1);
            let b = DVector::from_fn(p, |_, _| rng.gen_range(-1.0..1.0));
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..p {
                for j in 0..p {
                    num += b[i] * kx[(i, j)] * b[j];
                    den += b[i] * ky[(i, j)] * b[j];
                }
            }
            let got = rank_patterns(&[b.clone()], &kx, &ky).unwrap()[0];
            assert!((got - num / den).abs() < 1e-12 * (num / den).abs().max(1.0));
            let scaled = rank_patterns(&[b * -3.7], &kx, &ky).unwrap()[0];
            assert!((scaled - got).abs() < 1e-12 * got.abs().max(1.0));
        }
    }

    #[test]
    fn ranking_survives_common_rescaling() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g1 = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let g2 = DMatrix::from_fn(4, 4, |_, _| rng.gen_range(-1.0..1.0));
        let (kx, ky) = (&g1 * g1.transpose(), &g2 * g2.transpose());
        let mut m1 = model_with(&random_unit_columns(4, 4, 9));
        let mut m2 = m1.clone();
        m1.rank_by(&kx, &ky).unwrap();
        m2.rank_by(&(&kx * 17.0), &(&ky * 17.0)).unwrap();
        let order = |m: &CicaModel| m.foreground.iter().map(|t| t.vector.clone()).collect::<Vec<_>>();
        assert_eq!(order(&m1), order(&m2));
        let scores: Vec<f64> = m1.foreground.iter().map(|t| t.k_score.unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn projection_coordinates() {
        let b = DMatrix::<f64>::identity(3, 3);
        let m = model_with(&b);
        let row = DataMatrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let c = project(&row, &m, 0, 1).unwrap();
        assert_eq!((c[(0, 0)], c[(0, 1)]), (1.0, 0.0));
        assert!(project(&row, &m, 0, 3).is_err());
        assert!(project(&row, &m, 1, 1).is_err());
        let wide = DataMatrix::from_rows(&[vec![1.0, 0.0, 0.0, 0.0]]).unwrap();
        assert!(matches!(project(&wide, &m, 0, 1), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn projection_tracks_salient_sources() {
        // x = A z′ + B s with B orthonormal and A ⟂ B; estimated patterns are
        // within ε of the true ones.
        let (p, r, l, n) = (6, 3, 3, 20_000);
        let b = random_orthonormal(p, l, 50).unwrap();
        let q = random_orthonormal(p, p, 51).unwrap();
        // Columns of A drawn from the complement of span(B).
        let comp: DMatrix<f64> = {
            let mut cols = vec![];
            for c in columns(&q) {
                let mut v = c.clone();
                for bj in columns(&b) {
                    let d = bj.dot(&v);
                    v -= bj * d;
                }
                if v.norm() > 1e-6 {
                    cols.push(v.normalize());
                }
            }
            let mut basis: Vec<DVector<f64>> = vec![];
            for v in cols {
                let mut w = v;
                for u in &basis {
                    let d = u.dot(&w);
                    w -= u * d;
                }
                if w.norm() > 1e-6 {
                    basis.push(w.normalize());
                }
            }
            DMatrix::from_columns(&basis[..p - l])
        };
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let a_mix = DMatrix::from_fn(p - l, r, |_, _| rng.gen_range(-1.0..1.0));
        let mut a = &comp * a_mix;
        for mut c in a.column_iter_mut() {
            let nrm = c.norm();
            c /= nrm;
        }
        assert!((b.transpose() * &a).amax() < 1e-10);
        let ez = Exp::new(1.0).unwrap();
        let es = Exp::new(2.0).unwrap();
        let zp = DMatrix::from_fn(n, r, |_, _| ez.sample(&mut rng));
        let s = DMatrix::from_fn(n, l, |_, _| es.sample(&mut rng));
        let x = DataMatrix::new(&zp * a.transpose() + &s * b.transpose()).unwrap();
        let eps = 1e-3;
        let noise = DMatrix::from_fn(p, l, |_, _| rng.gen_range(-1.0..1.0));
        let est = (&b + noise * eps).map_with_location(|_, _, v| v);
        let model = model_with(&est);
        let bhat = model.foreground_matrix();
        let mut e = 0.0f64;
        for i in 0..l {
            for k in 0..r {
                e = e.max(bhat.column(i).dot(&a.column(k)).abs());
            }
            for j in 0..l {
                if i != j {
                    e = e.max(bhat.column(i).dot(&b.column(j)).abs());
                }
            }
            e = e.max(1.0 - bhat.column(i).dot(&b.column(i)));
        }
        let quantile = |m: &DMatrix<f64>| {
            let mut v: Vec<f64> = m.iter().map(|x| x.abs()).collect();
            v.sort_by(f64::total_cmp);
            v[(v.len() as f64 * 0.999) as usize]
        };
        let (cz, cs) = (quantile(&zp), quantile(&s));
        let coords = project(&x, &model, 0, 1).unwrap();
        // One extra C_s covers the own-pattern term 1 − ⟨b̂_i, b_i⟩.
        let bound = (r as f64 * cz + (l - 1) as f64 * cs + cs) * e;
        let within = (0..n)
            .filter(|t| (coords[(*t, 0)] - s[(*t, 0)]).abs() <= bound && (coords[(*t, 1)] - s[(*t, 1)]).abs() <= bound)
            .count();
        assert!(within as f64 >= 0.99 * n as f64, "{within} of {n}");
        let (cz_max, cs_max) = (zp.amax(), s.amax());
        let hard = (r as f64 * cz_max + l as f64 * cs_max) * e;
        assert!((0..n).all(|t| (coords[(t, 0)] - s[(t, 0)]).abs() <= hard));
    }

    #[test]
    fn uncorrelated_iff_orthogonal_mixed_patterns() {
        // Patterns whose images under Aᵀ are orthogonal give uncorrelated
        // projections of A z′ when z′ has equal variances.
        let (p, r, n) = (4, 4, 100_000);
        let a = random_unit_columns(p, r, 60);
        let at_inv = a.transpose().try_inverse().unwrap();
        let u = random_orthonormal(r, 2, 61).unwrap();
        let bi = &at_inv * u.column(0);
        let bj = &at_inv * u.column(1);
        assert!((a.transpose() * &bi).dot(&(a.transpose() * &bj)).abs() < 1e-10);
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let ez = Exp::new(1.0).unwrap();
        let zp = DMatrix::from_fn(n, r, |_, _| ez.sample(&mut rng));
        let xa = &zp * a.transpose();
        let corr = |u: &DVector<f64>, v: &DVector<f64>| {
            let pu = &xa * u;
            let pv = &xa * v;
            let (mu, mv) = (pu.mean(), pv.mean());
            let cov = pu.iter().zip(pv.iter()).map(|(x, y)| (x - mu) * (y - mv)).sum::<f64>();
            let su = pu.iter().map(|x| (x - mu).powi(2)).sum::<f64>().sqrt();
            let sv = pv.iter().map(|y| (y - mv).powi(2)).sum::<f64>().sqrt();
            cov / (su * sv)
        };
        assert!(corr(&bi, &bj).abs() < 0.05);
        let bk = &at_inv * (u.column(0) + u.column(1));
        assert!(corr(&bi, &bk).abs() > 0.3);
    }

    #[test]
    fn json_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DataMatrix::new(gaussian(30, 4, &mut rng)).unwrap();
        let pca = pca_fit(&x, &x, Some(3)).unwrap();
        let mut m = model_with(&random_unit_columns(3, 2, 10));
        m.foreground[0].k_score = Some(f64::INFINITY);
        m.foreground[1].k_score = Some(1.25);
        m.attach_pca(pca).unwrap();
        let text = m.to_json().unwrap();
        assert!(text.contains("\"schema\": 1"));
        assert!(text.contains("\"inf\""));
        let back = CicaModel::from_json(&text).unwrap();
        assert_eq!(back, m);
        let coords1 = project(&x, &m, 0, 1).unwrap();
        let coords2 = project(&x, &back, 0, 1).unwrap();
        assert_eq!(coords1, coords2);
        let bad = text.replace("\"schema\": 1", "\"schema\": 2");
        assert!(CicaModel::from_json(&bad).is_err());
    }

    #[test]
    fn data_pipeline_end_to_end() {
        use crate::synth::{generate, SynthMode, SyntheticSpec};
        let mut spec = SyntheticSpec::benchmark(4, 3, SynthMode::General);
        spec.n_fg = 20_000;
        spec.n_bg = 20_000;
        let (x, y, truth) = generate(&spec).unwrap();
        let opts = FitOptions {
            r: Some(4),
            l: Some(3),
            ..FitOptions::default()
        };
        let out = fit_data(&x, &y, &opts).unwrap();
        let scores: Vec<f64> = out.model.foreground.iter().map(|t| t.k_score.unwrap()).collect();
        assert!(scores.windows(2).all(|w| w[0] >= w[1]));
        let (cos, _) = recovery_scores(&truth.b, &out.model.foreground_matrix()).unwrap();
        assert!(cos > 0.5, "{cos}");
        let opts = FitOptions {
            q: Some(7),
            r: Some(4),
            pca: PcaChoice::Fixed(4),
            ..FitOptions::default()
        };
        let out = fit_data(&x, &y, &opts).unwrap();
        assert_eq!(out.model.ranks, Ranks { r: Some(4), l: 3 });
        assert!(out.model.foreground.iter().all(|t| t.vector_original.is_some()));
        let bad = FitOptions { q: Some(2), r: Some(4), ..FitOptions::default() };
        assert!(fit_data(&x, &y, &bad).is_err());
    }
}
