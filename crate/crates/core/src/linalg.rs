//! Dense Hermitian matrix kernel.
//!
//! Matrices are tiny (the systems in scope live in ambients of dimension at
//! most a few dozen), so everything is dense. Eigenvalues come from
//! nalgebra's Hermitian eigensolver (Householder tridiagonalization followed
//! by implicit QR). Diagonal instances can be lifted to [`RationalVector`]
//! and decided exactly.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{Field, Real};

/// Dense complex matrix.
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// Near-Hermitian inputs within this absolute deviation (relative to the
/// largest entry, floored at one) are symmetrized; larger deviations are
/// rejected.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Default tolerance for PSD and membership tests.
pub const DEFAULT_TOL: f64 = 1e-9;

/// A Hermitian matrix. Adjoint symmetry is validated at construction and
/// all values are immutable afterwards.
#[derive(Clone, PartialEq)]
pub struct HermMatrix<T: Real> {
    m: CMatrix<T>,
}

impl<T: Real> fmt::Debug for HermMatrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(d) = self.real_diagonal() {
            return write!(f, "diag{:?}", d.iter().map(|x| x.to_f64().unwrap()).collect::<Vec<_>>());
        }
        write!(f, "Herm{}[", self.dim())?;
        for i in 0..self.dim() {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.dim() {
                let z = self.m[(i, j)];
                write!(f, " {}{:+}i", z.re, z.im)?;
            }
        }
        write!(f, " ]")
    }
}

fn c<T: Real>(re: T, im: T) -> Complex<T> {
    Complex::new(re, im)
}

/// Modulus of a complex scalar.
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    (z.re * z.re + z.im * z.im).sqrt()
}

impl<T: Real> HermMatrix<T> {
    /// Validate and wrap a square matrix.
    pub fn new(m: CMatrix<T>) -> Result<Self> {
        if m.nrows() == 0 {
            return Err(Error::Empty("matrix"));
        }
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let n = m.nrows();
        let mut scale = T::one();
        let mut dev = T::zero();
        for i in 0..n {
            for j in 0..n {
                let a = m[(i, j)];
                let b = m[(j, i)].conj();
                scale = scale.max(cabs(a));
                dev = dev.max(cabs(a - b));
            }
        }
        if dev > T::lit(HERMITIAN_TOL) * scale {
            return Err(Error::NotHermitian { deviation: dev.to_f64().unwrap_or(f64::NAN) });
        }
        Ok(Self::symmetrize(m))
    }

    /// Wrap a matrix known to be Hermitian up to rounding.
    pub(crate) fn symmetrize(m: CMatrix<T>) -> Self {
        let half = T::lit(0.5);
        let mut out = m.clone();
        let n = m.nrows();
        for i in 0..n {
            out[(i, i)] = c(m[(i, i)].re, T::zero());
            for j in (i + 1)..n {
                let z = (m[(i, j)] + m[(j, i)].conj()) * c(half, T::zero());
                out[(i, j)] = z;
                out[(j, i)] = z.conj();
            }
        }
        Self { m: out }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Complex<T>) -> Result<Self> {
        Self::new(CMatrix::from_fn(n, n, f))
    }

    /// Real symmetric matrix from row-major entries.
    pub fn from_real_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, found: rows.iter().map(Vec::len).max().unwrap_or(0) });
        }
        Self::from_fn(n, |i, j| c(rows[i][j], T::zero()))
    }

    pub fn from_real_diag(d: &[T]) -> Self {
        assert!(!d.is_empty(), "diagonal must be nonempty");
        let n = d.len();
        Self { m: CMatrix::from_fn(n, n, |i, j| if i == j { c(d[i], T::zero()) } else { Complex::new(T::zero(), T::zero()) }) }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_real_diag(&vec![T::one(); n])
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_real_diag(&vec![T::zero(); n])
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.m[(i, j)]
    }

    pub fn as_matrix(&self) -> &CMatrix<T> {
        &self.m
    }

    pub fn into_matrix(self) -> CMatrix<T> {
        self.m
    }

    fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: other.dim() });
        }
        Ok(())
    }

    pub fn try_add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self { m: &self.m + &other.m })
    }

    /// `self + other`; panics on dimension mismatch.
    pub fn add(&self, other: &Self) -> Self {
        self.try_add(other).expect("dimension mismatch in add")
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in sub");
        Self { m: &self.m - &other.m }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { m: self.m.map(|z| z * c(s, T::zero())) }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: T, other: &Self) -> Self {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in add_scaled");
        Self { m: &self.m + other.m.map(|z| z * c(s, T::zero())) }
    }

    pub fn neg(&self) -> Self {
        self.scale(-T::one())
    }

    /// `self + s·I`.
    pub fn shift(&self, s: T) -> Self {
        let mut m = self.m.clone();
        for i in 0..self.dim() {
            m[(i, i)] += c(s, T::zero());
        }
        Self { m }
    }

    pub fn trace(&self) -> T {
        (0..self.dim()).fold(T::zero(), |acc, i| acc + self.m[(i, i)].re)
    }

    /// Real Frobenius pairing `Re tr(self · other)`.
    pub fn inner(&self, other: &Self) -> T {
        assert_eq!(self.dim(), other.dim(), "dimension mismatch in inner");
        self.m
            .iter()
            .zip(other.m.iter())
            .fold(T::zero(), |acc, (a, b)| acc + (*a * b.conj()).re)
    }

    pub fn frobenius_norm(&self) -> T {
        self.inner(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.m.iter().fold(T::zero(), |acc, z| acc.max(cabs(*z)))
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<T> {
        if let Some(d) = self.real_diagonal() {
            let mut d = d;
            d.sort_by(|a, b| a.partial_cmp(b).unwrap());
            return d;
        }
        let ev = self.m.clone().symmetric_eigenvalues();
        let mut v: Vec<T> = ev.iter().copied().collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    pub fn min_eig(&self) -> T {
        self.eigenvalues()[0]
    }

    pub fn max_eig(&self) -> T {
        *self.eigenvalues().last().unwrap()
    }

    /// Largest eigenvalue magnitude.
    pub fn op_norm(&self) -> T {
        let ev = self.eigenvalues();
        ev[0].abs().max(ev[ev.len() - 1].abs())
    }

    pub fn is_psd(&self, tol: T) -> bool {
        self.min_eig() >= -tol
    }

    /// `f` applied to the spectrum.
    pub fn map_spectrum(&self, f: impl Fn(T) -> T) -> Self {
        let eig = self.m.clone().symmetric_eigen();
        let u = &eig.eigenvectors;
        let d = CMatrix::from_diagonal(&eig.eigenvalues.map(|l| Complex::new(f(l), T::zero())));
        Self::symmetrize(u * d * u.adjoint())
    }

    /// Square root of the positive part.
    pub fn sqrt_psd(&self) -> Self {
        self.map_spectrum(|l| l.max(T::zero()).sqrt())
    }

    /// Kronecker product, row index `(i, k) -> i * dim(b) + k`.
    pub fn kron(&self, other: &Self) -> Self {
        Self { m: self.m.kronecker(&other.m) }
    }

    /// Block-diagonal assembly.
    pub fn direct_sum(parts: &[Self]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::Empty("direct_sum parts"));
        }
        let n: usize = parts.iter().map(Self::dim).sum();
        let mut m = CMatrix::zeros(n, n);
        let mut off = 0;
        for p in parts {
            m.view_mut((off, off), (p.dim(), p.dim())).copy_from(&p.m);
            off += p.dim();
        }
        Ok(Self { m })
    }

    /// `(ab + ba) / 2`.
    pub fn jordan(&self, other: &Self) -> Self {
        let ab = &self.m * &other.m;
        let ba = &other.m * &self.m;
        Self::symmetrize((ab + ba).map(|z| z * c(T::lit(0.5), T::zero())))
    }

    /// `i (ab - ba)`, Hermitian for Hermitian `a`, `b`.
    pub fn commutator_i(&self, other: &Self) -> Self {
        let ab = &self.m * &other.m;
        let ba = &other.m * &self.m;
        Self::symmetrize((ab - ba).map(|z| z * c(T::zero(), T::one())))
    }

    /// `u · self · u*`.
    pub fn congruence(&self, u: &CMatrix<T>) -> Self {
        Self::symmetrize(u * &self.m * u.adjoint())
    }

    /// Exactly diagonal with real entries.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let z = self.m[(i, j)];
                if i != j && (z.re != T::zero() || z.im != T::zero()) {
                    return false;
                }
            }
        }
        true
    }

    pub fn real_diagonal(&self) -> Option<Vec<T>> {
        self.is_diagonal().then(|| (0..self.dim()).map(|i| self.m[(i, i)].re).collect())
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.m[(i, i)].re).collect()
    }

    /// Real coordinates against [`hermitian_basis`]: diagonal entries first,
    /// then `(re, im)` of each strictly upper entry in row-major order.
    pub fn to_coords(&self) -> Vec<T> {
        let n = self.dim();
        let mut v = Vec::with_capacity(n * n);
        v.extend((0..n).map(|i| self.m[(i, i)].re));
        for i in 0..n {
            for j in (i + 1)..n {
                v.push(self.m[(i, j)].re);
                v.push(self.m[(i, j)].im);
            }
        }
        v
    }

    pub fn from_coords(n: usize, coords: &[T]) -> Result<Self> {
        if coords.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: coords.len() });
        }
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = c(coords[i], T::zero());
        }
        let mut k = n;
        for i in 0..n {
            for j in (i + 1)..n {
                let z = c(coords[k], coords[k + 1]);
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
                k += 2;
            }
        }
        Ok(Self { m })
    }

    /// Extract the principal submatrix on `range`.
    pub fn principal(&self, start: usize, len: usize) -> Self {
        Self { m: self.m.view((start, start), (len, len)).into_owned() }
    }

    pub fn cast_f64(&self) -> HermMatrix<f64> {
        HermMatrix {
            m: self.m.map(|z| Complex::new(z.re.to_f64().unwrap(), z.im.to_f64().unwrap())),
        }
    }
}

/// Orthonormal basis (as columns) of the null space of a real matrix,
/// dropping singular values below `rel_tol · σ_max`.
pub fn real_null_space(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let svd = a.clone().svd(false, true);
    let vt = svd.v_t.expect("requested");
    let cut = rel_tol * svd.singular_values.max();
    // the row space may be thin when a is wide, so take the complement
    let mut proj = DMatrix::<f64>::identity(n, n);
    for k in 0..svd.singular_values.len() {
        if svd.singular_values[k] > cut && svd.singular_values[k] > 0.0 {
            let row = vt.row(k);
            proj -= row.transpose() * row;
        }
    }
    let eig = proj.symmetric_eigen();
    let mut keep: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > 0.5).collect();
    keep.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let mut null = DMatrix::zeros(n, keep.len());
    for (c, &k) in keep.iter().enumerate() {
        null.set_column(c, &eig.eigenvectors.column(k));
    }
    null
}

/// Real basis of the Hermitian `n × n` matrices matching
/// [`HermMatrix::to_coords`].
pub fn hermitian_basis<T: Real>(n: usize) -> Vec<HermMatrix<T>> {
    let mut out = Vec::with_capacity(n * n);
    for k in 0..(n * n) {
        let mut coords = vec![T::zero(); n * n];
        coords[k] = T::one();
        out.push(HermMatrix::from_coords(n, &coords).expect("sized coords"));
    }
    out
}

/// Smallest eigenvalue; rejects non-square or non-Hermitian input.
pub fn min_eig<T: Real>(m: &CMatrix<T>) -> Result<T> {
    Ok(HermMatrix::new(m.clone())?.min_eig())
}

pub fn is_psd<T: Real>(m: &HermMatrix<T>, tol: T) -> Result<bool> {
    if tol < T::zero() {
        return Err(Error::InvalidArgument("tolerance must be nonnegative".into()));
    }
    Ok(m.is_psd(tol))
}

pub fn kron<T: Real>(a: &HermMatrix<T>, b: &HermMatrix<T>) -> HermMatrix<T> {
    a.kron(b)
}

pub fn direct_sum<T: Real>(parts: &[HermMatrix<T>]) -> Result<HermMatrix<T>> {
    HermMatrix::direct_sum(parts)
}

impl Serialize for HermMatrix<f64> {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        MatrixRepr::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for HermMatrix<f64> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        repr.to_herm().map_err(serde::de::Error::custom)
    }
}

/// Text representation of a Hermitian matrix: either a real diagonal
/// shorthand or explicit rows of `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub enum MatrixRepr {
    #[serde(rename = "diag")]
    Diag(Vec<f64>),
    #[serde(rename = "rows")]
    Rows(Vec<Vec<[f64; 2]>>),
}

impl MatrixRepr {
    pub fn to_herm(&self) -> Result<HermMatrix<f64>> {
        match self {
            MatrixRepr::Diag(d) if d.is_empty() => Err(Error::Empty("diagonal")),
            MatrixRepr::Diag(d) => Ok(HermMatrix::from_real_diag(d)),
            MatrixRepr::Rows(rows) => {
                let n = rows.len();
                if let Some(bad) = rows.iter().find(|r| r.len() != n) {
                    return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
                }
                HermMatrix::from_fn(n, |i, j| Complex::new(rows[i][j][0], rows[i][j][1]))
            }
        }
    }
}

impl From<&HermMatrix<f64>> for MatrixRepr {
    fn from(h: &HermMatrix<f64>) -> Self {
        match h.real_diagonal() {
            Some(d) => MatrixRepr::Diag(d),
            None => MatrixRepr::Rows(
                (0..h.dim())
                    .map(|i| (0..h.dim()).map(|j| [h.get(i, j).re, h.get(i, j).im]).collect())
                    .collect(),
            ),
        }
    }
}

/// Ordered block dimensions of a block-diagonal ambient `⊕ M_{d_i}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BlockShape {
    blocks: Vec<usize>,
}

impl BlockShape {
    pub fn new(blocks: Vec<usize>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Empty("block shape"));
        }
        if blocks.contains(&0) {
            return Err(Error::InvalidArgument("block dimensions must be positive".into()));
        }
        Ok(Self { blocks })
    }

    /// `n` one-dimensional blocks.
    pub fn commutative(n: usize) -> Result<Self> {
        Self::new(vec![1; n])
    }

    pub fn full(d: usize) -> Result<Self> {
        Self::new(vec![d])
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn total(&self) -> usize {
        self.blocks.iter().sum()
    }

    /// Real dimension of the self-adjoint part of the ambient algebra.
    pub fn real_dim(&self) -> usize {
        self.blocks.iter().map(|b| b * b).sum()
    }

    pub fn is_commutative(&self) -> bool {
        self.blocks.iter().all(|&b| b == 1)
    }

    /// `(offset, size)` of each block.
    pub fn ranges(&self) -> Vec<(usize, usize)> {
        let mut off = 0;
        self.blocks
            .iter()
            .map(|&b| {
                let r = (off, b);
                off += b;
                r
            })
            .collect()
    }

    /// Shape of `self ⊗ M_m` under the `x ⊗ I_m` ordering.
    pub fn amplified(&self, m: usize) -> Self {
        Self { blocks: self.blocks.iter().map(|b| b * m).collect() }
    }

    pub fn concat(shapes: &[&BlockShape]) -> Result<Self> {
        Self::new(shapes.iter().flat_map(|s| s.blocks.iter().copied()).collect())
    }

    /// Whether `m` vanishes outside the diagonal blocks.
    pub fn is_block_diagonal<T: Real>(&self, m: &HermMatrix<T>, tol: T) -> bool {
        if m.dim() != self.total() {
            return false;
        }
        let mut owner = Vec::with_capacity(self.total());
        for (k, &b) in self.blocks.iter().enumerate() {
            owner.extend(std::iter::repeat_n(k, b));
        }
        for i in 0..m.dim() {
            for j in 0..m.dim() {
                if owner[i] != owner[j] && cabs(m.get(i, j)) > tol {
                    return false;
                }
            }
        }
        true
    }

    /// Diagonal blocks of `m`.
    pub fn split<T: Real>(&self, m: &HermMatrix<T>) -> Vec<HermMatrix<T>> {
        self.ranges().into_iter().map(|(o, b)| m.principal(o, b)).collect()
    }

    /// Hermitian real basis of the ambient self-adjoint part, block by block.
    pub fn ambient_basis<T: Real>(&self) -> Vec<HermMatrix<T>> {
        let n = self.total();
        let mut out = Vec::with_capacity(self.real_dim());
        for (off, b) in self.ranges() {
            for h in hermitian_basis::<T>(b) {
                let mut m = CMatrix::zeros(n, n);
                m.view_mut((off, off), (b, b)).copy_from(h.as_matrix());
                out.push(HermMatrix { m });
            }
        }
        out
    }
}

/// Exact coordinates of a diagonal element.
#[derive(Debug, Clone, PartialEq)]
pub struct RationalVector<F: Field> {
    pub coords: Vec<F>,
}

impl<F: Field> RationalVector<F> {
    pub fn new(coords: Vec<F>) -> Self {
        Self { coords }
    }

    /// Exact lift of a diagonal matrix; `None` when off-diagonal entries are present.
    pub fn from_diagonal(m: &HermMatrix<f64>) -> Option<Self> {
        m.real_diagonal().map(|d| Self { coords: d.into_iter().map(F::from_f64_exact).collect() })
    }

    /// Exact PSD test of a diagonal matrix: every coordinate nonnegative.
    pub fn is_nonneg(&self) -> bool {
        self.coords.iter().all(|c| *c >= F::zero())
    }

    pub fn min(&self) -> Option<F> {
        self.coords
            .iter()
            .cloned()
            .fold(None, |acc: Option<F>, c| match acc {
                Some(a) if a <= c => Some(a),
                _ => Some(c),
            })
    }
}
