//! Dense symmetric order-4 tensors and the small amount of symmetric linear
//! algebra every other module builds on.
//!
//! A [`SymTensor4`] stores all `p^4` entries in row-major `(i, j, k, l)` order.
//! Every constructor writes a single value per index orbit, so the stored
//! entries are invariant under all 24 index permutations bit for bit.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const fn index_permutations() -> [[usize; 4]; 24] {
    let mut out = [[0usize; 4]; 24];
    let mut n = 0;
    let mut a = 0;
    while a < 4 {
        let mut b = 0;
        while b < 4 {
            let mut c = 0;
            while c < 4 {
                let mut d = 0;
                while d < 4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        out[n] = [a, b, c, d];
                        n += 1;
                    }
                    d += 1;
                }
                c += 1;
            }
            b += 1;
        }
        a += 1;
    }
    out
}

/// All rearrangements of four index positions.
pub(crate) const PERMUTATIONS: [[usize; 4]; 24] = index_permutations();

/// Relative cutoff below which an eigenvalue counts as zero when computing
/// numerical ranks.
pub const RANK_CUTOFF: f64 = 1e-10;

#[inline]
fn flat_index(p: usize, i: usize, j: usize, k: usize, l: usize) -> usize {
    ((i * p + j) * p + k) * p + l
}

/// Calls `f` once per sorted index tuple `i <= j <= k <= l`.
pub(crate) fn for_each_sorted(p: usize, mut f: impl FnMut([usize; 4])) {
    for i in 0..p {
        for j in i..p {
            for k in j..p {
                for l in k..p {
                    f([i, j, k, l]);
                }
            }
        }
    }
}

/// Writes `value` into every permutation of `idx`.
#[inline]
fn write_orbit(p: usize, data: &mut [f64], idx: [usize; 4], value: f64) {
    for perm in &PERMUTATIONS {
        data[flat_index(p, idx[perm[0]], idx[perm[1]], idx[perm[2]], idx[perm[3]])] = value;
    }
}

/// Dense symmetric tensor of format `p x p x p x p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTensor4 {
    dim: usize,
    data: Vec<f64>,
}

impl SymTensor4 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim.pow(4)],
        }
    }

    /// Builds a tensor by evaluating `f` on each sorted index tuple and
    /// copying the value across the orbit.
    pub(crate) fn from_sorted_fn(dim: usize, mut f: impl FnMut([usize; 4]) -> f64) -> Self {
        let mut data = vec![0.0; dim.pow(4)];
        for_each_sorted(dim, |idx| {
            let v = f(idx);
            write_orbit(dim, &mut data, idx, v);
        });
        Self { dim, data }
    }

    /// Projects an arbitrary `p^4` array onto the symmetric tensors by
    /// averaging each entry over the permutations of its index.
    pub fn symmetrize(dim: usize, raw: &[f64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("tensor dimension must be positive".into()));
        }
        if raw.len() != dim.pow(4) {
            return Err(Error::DimensionMismatch(format!(
                "expected {} entries for p={dim}, got {}",
                dim.pow(4),
                raw.len()
            )));
        }
        if let Some(pos) = raw.iter().position(|v| !v.is_finite()) {
            let (i, j, k, l) = (
                pos / dim.pow(3),
                (pos / dim.pow(2)) % dim,
                (pos / dim) % dim,
                pos % dim,
            );
            return Err(Error::NonFinite(format!("index ({i},{j},{k},{l}) = {}", raw[pos])));
        }
        Ok(Self::from_sorted_fn(dim, |idx| {
            let first = raw[flat_index(dim, idx[0], idx[1], idx[2], idx[3])];
            let mut sum = 0.0;
            let mut all_equal = true;
            for perm in &PERMUTATIONS {
                let v = raw[flat_index(dim, idx[perm[0]], idx[perm[1]], idx[perm[2]], idx[perm[3]])];
                all_equal &= v == first;
                sum += v;
            }
            if all_equal {
                first
            } else {
                sum / 24.0
            }
        }))
    }

    /// `weight * v^{⊗4}`.
    pub fn rank_one(weight: f64, v: &DVector<f64>) -> Self {
        Self::from_sorted_fn(v.len(), |[i, j, k, l]| weight * (v[i] * v[j]) * (v[k] * v[l]))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        self.data[flat_index(self.dim, i, j, k, l)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &SymTensor4) -> Result<Self> {
        self.check_dim(other.dim)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(Self { dim: self.dim, data })
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| alpha * v).collect(),
        }
    }

    fn check_dim(&self, p: usize) -> Result<()> {
        if p != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "tensor has p={}, operand has length {p}",
                self.dim
            )));
        }
        Ok(())
    }

    /// The `p^2 x p^2` matrix with entry `((i1,i2),(j1,j2)) = T[i1,i2,j1,j2]`,
    /// rows indexed by `i1*p + i2`.
    pub fn flatten(&self) -> DMatrix<f64> {
        let n = self.dim * self.dim;
        DMatrix::from_row_slice(n, n, &self.data)
    }

    /// `T - Σ w_i v_i^{⊗4}`.
    pub fn subtract_rank_ones(&self, terms: &SymDecomposition) -> Result<Self> {
        for t in terms.terms() {
            self.check_dim(t.vector.len())?;
        }
        let p = self.dim;
        Ok(Self::from_sorted_fn(p, |[i, j, k, l]| {
            let mut v = self.data[flat_index(p, i, j, k, l)];
            for t in terms.terms() {
                let b = &t.vector;
                v -= t.weight * (b[i] * b[j]) * (b[k] * b[l]);
            }
            v
        }))
    }

    /// `out[i] = Σ_{j,k,l} T[i,j,k,l] x_j x_k x_l`.
    pub fn contract3(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        let p = self.dim;
        let mut out = DVector::zeros(p);
        for i in 0..p {
            let mut acc_i = 0.0;
            for j in 0..p {
                let mut acc_j = 0.0;
                for k in 0..p {
                    let row = &self.data[flat_index(p, i, j, k, 0)..flat_index(p, i, j, k, 0) + p];
                    let s: f64 = row.iter().zip(x.iter()).map(|(t, xl)| t * xl).sum();
                    acc_j += s * x[k];
                }
                acc_i += acc_j * x[j];
            }
            out[i] = acc_i;
        }
        Ok(out)
    }

    /// `Σ T[i,j,k,l] x_i x_j x_k x_l`, evaluated as `<contract3(x), x>`.
    pub fn quad_form(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.contract3(x)?.dot(x))
    }

    /// Multilinear action `W · T`, i.e. `T'[a,b,c,d] = Σ W[a,i] W[b,j] W[c,k] W[d,l] T[i,j,k,l]`.
    /// `W` is `q x p`; the result has dimension `q`.
    pub fn transform(&self, w: &DMatrix<f64>) -> Result<Self> {
        self.check_dim(w.ncols())?;
        let p = self.dim;
        let q = w.nrows();
        // Contract one mode at a time; the last mode index is contiguous.
        let mut cur = self.data.clone();
        let mut shape = [p, p, p, p];
        for mode in 0..4 {
            let mut next_shape = shape;
            next_shape[mode] = q;
            let stride: usize = shape[mode + 1..].iter().product();
            let outer: usize = shape[..mode].iter().product();
            let mut next = vec![0.0; outer * q * stride];
            for o in 0..outer {
                for a in 0..q {
                    for s in 0..stride {
                        let mut acc = 0.0;
                        for i in 0..p {
                            acc += w[(a, i)] * cur[(o * p + i) * stride + s];
                        }
                        next[(o * q + a) * stride + s] = acc;
                    }
                }
            }
            cur = next;
            shape = next_shape;
        }
        Self::symmetrize(q, &cur)
    }
}

impl fmt::Display for SymTensor4 {
    /// `symtensor4 p=<p>` followed by the entries in row-major order, `p`
    /// values per line.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "symtensor4 p={}", self.dim)?;
        for row in self.data.chunks(self.dim.max(1)) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(f, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

impl FromStr for SymTensor4 {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut lines = s.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty tensor file".into()))?;
        let p: usize = header
            .trim()
            .strip_prefix("symtensor4 p=")
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad tensor header {header:?}")))?;
        let mut raw = Vec::with_capacity(p.pow(4));
        for (lineno, line) in lines.enumerate() {
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| {
                    Error::Parse(format!("line {}: not a number: {tok:?}", lineno + 2))
                })?;
                raw.push(v);
            }
        }
        Self::symmetrize(p, &raw)
    }
}

/// Reshapes a length-`p^2` vector into the `p x p` matrix with entry
/// `(i, j) = v[i*p + j]`.
pub fn reshape_vec(v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let p = (v.len() as f64).sqrt().round() as usize;
    if p == 0 || p * p != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "length {} is not a positive perfect square",
            v.len()
        )));
    }
    Ok(DMatrix::from_row_slice(p, p, v.as_slice()))
}

/// `vec(b bᵀ)` in the same row-major layout used by [`SymTensor4::flatten`].
pub fn vec_outer(b: &DVector<f64>) -> DVector<f64> {
    let p = b.len();
    DVector::from_fn(p * p, |idx, _| b[idx / p] * b[idx % p])
}

/// Flips `v` so that its largest-magnitude entry is positive. Ties go to the
/// lowest index.
pub fn canonical_sign(v: &mut DVector<f64>) {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i].abs() > v[best].abs() {
            best = i;
        }
    }
    if !v.is_empty() && v[best] < 0.0 {
        v.neg_mut();
    }
}

/// Eigenpairs of a symmetric matrix ordered by descending `|eigenvalue|`.
#[derive(Debug, Clone)]
pub struct SpectralPair {
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored as columns, paired with `values`.
    pub vectors: DMatrix<f64>,
}

impl SpectralPair {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Number of eigenvalues above `RANK_CUTOFF * |μ_1|`.
    pub fn numerical_rank(&self) -> usize {
        let top = self.values.first().map_or(0.0, |v| v.abs());
        if top == 0.0 {
            return 0;
        }
        self.values
            .iter()
            .take_while(|v| v.abs() > RANK_CUTOFF * top)
            .count()
    }

    /// Leading `k` pairs.
    pub fn truncated(&self, k: usize) -> SpectralPair {
        let k = k.min(self.len());
        SpectralPair {
            values: self.values[..k].to_vec(),
            vectors: self.vectors.columns(0, k).into_owned(),
        }
    }

    /// Thin spectrum: truncated to the numerical rank, optionally capped.
    pub fn thin(&self, cap: Option<usize>) -> SpectralPair {
        let q = self.numerical_rank();
        self.truncated(cap.map_or(q, |c| c.min(q)))
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        let mut m = DMatrix::zeros(n, n);
        for (i, mu) in self.values.iter().enumerate() {
            let v = self.vectors.column(i);
            m += *mu * &v * v.transpose();
        }
        m
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// Input asymmetry up to `1e-8` relative is tolerated and removed by
/// averaging with the transpose. Eigenvalues come back sorted by descending
/// magnitude (stable, so exact ties keep solver order) and every eigenvector
/// follows [`canonical_sign`].
pub fn sym_eig(m: &DMatrix<f64>) -> Result<SpectralPair> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to sym_eig".into()));
    }
    let norm = m.norm();
    let asym = (m - m.transpose()).norm();
    if asym > 1e-8 * norm.max(1.0) {
        return Err(Error::NotSymmetric(asym / norm.max(1.0)));
    }
    if n == 0 {
        return Ok(SpectralPair {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, 1000 * n.max(1)).ok_or(
        Error::NoConvergence {
            dim: n,
            residual: norm,
        },
    )?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .partial_cmp(&eig.eigenvalues[a].abs())
            .expect("finite eigenvalues")
    });
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut v = eig.eigenvectors.column(src).into_owned();
        canonical_sign(&mut v);
        vectors.set_column(dst, &v);
    }
    Ok(SpectralPair { values, vectors })
}

/// One weighted rank-one term `weight * vector^{⊗4}` with a unit vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Rank1Term {
    pub weight: f64,
    pub vector: DVector<f64>,
}

impl Rank1Term {
    /// Normalizes `vector`, folding its norm into the weight, and applies the
    /// sign convention.
    pub fn new(weight: f64, vector: DVector<f64>) -> Result<Self> {
        let norm = vector.norm();
        if !(norm > 0.0) || !norm.is_finite() || !weight.is_finite() {
            return Err(Error::InvalidArgument(
                "rank-one term needs a finite nonzero vector and finite weight".into(),
            ));
        }
        let mut vector = vector / norm;
        canonical_sign(&mut vector);
        Ok(Self {
            weight: weight * norm.powi(4),
            vector,
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Rank-one terms sorted by descending `|weight|`; exact zeros are dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SymDecomposition {
    terms: Vec<Rank1Term>,
}

impl SymDecomposition {
    pub fn new(mut terms: Vec<Rank1Term>) -> Self {
        terms.retain(|t| t.weight != 0.0);
        terms.sort_by(|a, b| {
            b.weight
                .abs()
                .partial_cmp(&a.weight.abs())
                .expect("finite weights")
        });
        Self { terms }
    }

    pub fn terms(&self) -> &[Rank1Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.weight).collect()
    }

    /// Vectors as the columns of a `p x len` matrix.
    pub fn vectors(&self) -> DMatrix<f64> {
        let p = self.terms.first().map_or(0, Rank1Term::dim);
        let mut m = DMatrix::zeros(p, self.terms.len());
        for (i, t) in self.terms.iter().enumerate() {
            m.set_column(i, &t.vector);
        }
        m
    }

    /// `Σ w_i v_i^{⊗4}` as a dense tensor of dimension `dim`.
    pub fn to_tensor(&self, dim: usize) -> Result<SymTensor4> {
        if let Some(t) = self.terms.iter().find(|t| t.dim() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "term of length {} in a p={dim} tensor",
                t.dim()
            )));
        }
        Ok(SymTensor4::from_sorted_fn(dim, |[i, j, k, l]| {
            self.terms
                .iter()
                .map(|t| t.weight * (t.vector[i] * t.vector[j]) * (t.vector[k] * t.vector[l]))
                .sum()
        }))
    }
}
