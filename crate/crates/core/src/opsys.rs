//! Concrete operator systems inside block-diagonal matrix algebras.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::cpmaps::{self, CpMap};
use crate::error::{Error, Result};
use crate::exact;
use crate::lp::{self, LpOutcome, StandardLp};
use crate::linalg::{hermitian_basis, real_null_space, BlockShape, HermMatrix, DEFAULT_TOL};
use crate::scalar::Field;
use crate::sdp::{self, LmiBlock, LmiProblem, Status, Strictness};

type Herm = HermMatrix<f64>;
type Q = BigRational;

/// Relative tolerance of the rank-revealing basis reduction.
pub const RANK_TOL: f64 = 1e-10;

/// A unital self-adjoint subspace of `⊕ M_{d_i}`, stored by a linearly
/// independent Hermitian basis whose real span is the self-adjoint part.
#[derive(Clone)]
pub struct OperatorSystem {
    ambient: BlockShape,
    basis: Vec<Herm>,
    unit: Herm,
    label: String,
    gram: Cholesky<f64, Dyn>,
}

impl fmt::Debug for OperatorSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "OperatorSystem({:?}, dim {}, ambient {:?})", self.label, self.dim(), self.ambient.blocks())
    }
}

impl PartialEq for OperatorSystem {
    fn eq(&self, other: &Self) -> bool {
        self.ambient == other.ambient && self.basis == other.basis
    }
}

fn all_diagonal(v: &[Herm]) -> bool {
    v.iter().all(Herm::is_diagonal)
}

/// Indices of a maximal independent subset, greedily in order.
fn independent_indices(cands: &[Herm]) -> Vec<usize> {
    if all_diagonal(cands) {
        let rows: Vec<Vec<Q>> = cands.iter().map(|c| c.diagonal().into_iter().map(Q::from_f64_exact).collect()).collect();
        return exact::independent_subset(&rows);
    }
    // modified Gram-Schmidt with reorthogonalization
    let mut qs: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    for (k, c) in cands.iter().enumerate() {
        let v = DVector::from_vec(c.to_coords());
        let norm = v.norm();
        let mut r = v;
        for _ in 0..2 {
            for q in &qs {
                let d = q.dot(&r);
                r -= q * d;
            }
        }
        let rn = r.norm();
        if rn > RANK_TOL * norm.max(1.0) {
            qs.push(r / rn);
            keep.push(k);
        }
    }
    keep
}

fn gram_of(basis: &[Herm]) -> Cholesky<f64, Dyn> {
    let p = basis.len();
    let g = DMatrix::from_fn(p, p, |i, j| basis[i].inner(&basis[j]));
    Cholesky::new(g).expect("independent basis has a positive definite Gram matrix")
}

impl OperatorSystem {
    /// Span of `generators` together with the unit, in the ambient `shape`.
    /// The basis starts with the unit followed by an independent subset of
    /// the generators.
    pub fn from_generators(shape: BlockShape, generators: &[Herm], label: impl Into<String>) -> Result<Self> {
        let n = shape.total();
        for g in generators {
            if g.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: g.dim() });
            }
            if !shape.is_block_diagonal(g, 0.0) {
                return Err(Error::NotInSystem("generator is not block diagonal in the ambient".into()));
            }
        }
        let unit = Herm::identity(n);
        let mut cands = vec![unit.clone()];
        cands.extend(generators.iter().cloned());
        Ok(Self::from_candidates(shape, cands, label.into()))
    }

    /// Builds a system from candidates whose span is known to contain the unit.
    fn from_candidates(shape: BlockShape, cands: Vec<Herm>, label: String) -> Self {
        let keep = independent_indices(&cands);
        let basis: Vec<Herm> = keep.into_iter().map(|k| cands[k].clone()).collect();
        Self::from_basis_unchecked(shape, basis, label)
    }

    fn from_basis_unchecked(shape: BlockShape, basis: Vec<Herm>, label: String) -> Self {
        let unit = Herm::identity(shape.total());
        let gram = gram_of(&basis);
        Self { ambient: shape, basis, unit, label, gram }
    }

    pub fn ambient(&self) -> &BlockShape {
        &self.ambient
    }

    pub fn basis(&self) -> &[Herm] {
        &self.basis
    }

    pub fn unit(&self) -> &Herm {
        &self.unit
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Real dimension of the self-adjoint part.
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Total matrix size of the ambient.
    pub fn ambient_dim(&self) -> usize {
        self.ambient.total()
    }

    pub fn is_diagonal(&self) -> bool {
        all_diagonal(&self.basis)
    }

    /// Whether the system is all of its ambient algebra.
    pub fn is_full(&self) -> bool {
        self.dim() == self.ambient.real_dim()
    }

    fn check_dim(&self, x: &Herm) -> Result<()> {
        if x.dim() != self.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: self.ambient_dim(), found: x.dim() });
        }
        Ok(())
    }

    /// Least-squares coordinates and the Frobenius residual.
    pub fn project_coords(&self, x: &Herm) -> Result<(Vec<f64>, f64)> {
        self.check_dim(x)?;
        let rhs = DVector::from_iterator(self.dim(), self.basis.iter().map(|b| b.inner(x)));
        let c = self.gram.solve(&rhs);
        let c: Vec<f64> = c.iter().copied().collect();
        let resid = x.sub(&self.combine(&c)).frobenius_norm();
        Ok((c, resid))
    }

    /// Orthogonal (Hilbert-Schmidt) projection onto the span.
    pub fn project(&self, x: &Herm) -> Result<Herm> {
        let (c, _) = self.project_coords(x)?;
        Ok(self.combine(&c))
    }

    /// Exact coordinates of a diagonal element in a diagonal system.
    pub fn exact_coordinates(&self, x: &Herm) -> Option<Option<Vec<Q>>> {
        if !self.is_diagonal() || !x.is_diagonal() || x.dim() != self.ambient_dim() {
            return None;
        }
        let n = self.ambient_dim();
        let a: Vec<Vec<Q>> = (0..n).map(|r| self.basis.iter().map(|b| Q::from_f64_exact(b.diagonal()[r])).collect()).collect();
        let rhs: Vec<Q> = x.diagonal().into_iter().map(Q::from_f64_exact).collect();
        Some(exact::solve(&a, &rhs, self.dim()))
    }

    /// Coordinates of a member; errors when `x` is farther than `tol`
    /// (relative to `max(1, ‖x‖)`) from the span.
    pub fn coordinates(&self, x: &Herm, tol: f64) -> Result<Vec<f64>> {
        match self.exact_coordinates(x) {
            Some(Some(q)) => return Ok(q.iter().map(Field::to_f64_lossy).collect()),
            Some(None) => return Err(Error::NotInSystem(self.label.clone())),
            None => {}
        }
        let (c, resid) = self.project_coords(x)?;
        if resid > tol * x.frobenius_norm().max(1.0) {
            return Err(Error::NotInSystem(format!("{} (distance {resid:.3e})", self.label)));
        }
        Ok(c)
    }

    /// `Σ c_i b_i`.
    pub fn combine(&self, c: &[f64]) -> Herm {
        assert_eq!(c.len(), self.dim(), "coordinate length");
        c.iter().zip(&self.basis).fold(Herm::zeros(self.ambient_dim()), |acc, (ci, b)| acc.add_scaled(*ci, b))
    }

    /// Membership; exact for diagonal inputs in diagonal systems.
    pub fn contains(&self, x: &Herm, tol: f64) -> Result<bool> {
        self.check_dim(x)?;
        if let Some(sol) = self.exact_coordinates(x) {
            return Ok(sol.is_some());
        }
        let (_, resid) = self.project_coords(x)?;
        Ok(resid <= tol * x.frobenius_norm().max(1.0))
    }

    /// Whether every basis element of `self` lies in `other`.
    pub fn is_subsystem_of(&self, other: &OperatorSystem, tol: f64) -> Result<bool> {
        if self.ambient != other.ambient {
            return Ok(false);
        }
        for b in &self.basis {
            if !other.contains(b, tol)? {
                return Ok(false);
            }
        }
        Ok(true)
    }

    pub fn same_span(&self, other: &OperatorSystem, tol: f64) -> Result<bool> {
        Ok(self.dim() == other.dim() && self.is_subsystem_of(other, tol)? && other.is_subsystem_of(self, tol)?)
    }

    /// `M_m(S)` inside `M_m(⊕ M_{d_i})`, ordered as `x ⊗ I_m`.
    pub fn amplify(&self, m: usize) -> Result<OperatorSystem> {
        if m == 0 {
            return Err(Error::InvalidArgument("amplification level must be positive".into()));
        }
        if m == 1 {
            return Ok(self.clone());
        }
        let hs = hermitian_basis::<f64>(m);
        let basis: Vec<Herm> = self.basis.iter().flat_map(|b| hs.iter().map(move |h| b.kron(h))).collect();
        Ok(Self::from_basis_unchecked(self.ambient.amplified(m), basis, format!("M_{m}({})", self.label)))
    }

    /// `⊕ S_i` in the concatenated ambient.
    pub fn direct_sum(parts: &[&OperatorSystem], label: impl Into<String>) -> Result<OperatorSystem> {
        if parts.is_empty() {
            return Err(Error::Empty("direct sum parts"));
        }
        let shape = BlockShape::concat(&parts.iter().map(|p| &p.ambient).collect::<Vec<_>>())?;
        let mut basis = Vec::new();
        for (k, p) in parts.iter().enumerate() {
            for b in &p.basis {
                basis.push(embed(parts, k, b));
            }
        }
        Ok(Self::from_basis_unchecked(shape, basis, label.into()))
    }
}

/// Places `x` in slot `k` of the direct sum of `parts`.
pub fn embed(parts: &[&OperatorSystem], k: usize, x: &Herm) -> Herm {
    let pieces: Vec<Herm> =
        parts.iter().enumerate().map(|(j, p)| if j == k { x.clone() } else { Herm::zeros(p.ambient_dim()) }).collect();
    Herm::direct_sum(&pieces).expect("nonempty")
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemRepr {
    label: String,
    ambient: BlockShape,
    basis: Vec<Herm>,
}

impl Serialize for OperatorSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SystemRepr { label: self.label.clone(), ambient: self.ambient.clone(), basis: self.basis.clone() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for OperatorSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SystemRepr::deserialize(d)?;
        OperatorSystem::from_generators(r.ambient, &r.basis, r.label).map_err(serde::de::Error::custom)
    }
}

/// `ℓ∞_n`: diagonal `n × n` matrices with the coordinate projections as basis.
pub fn make_linf(n: usize) -> Result<OperatorSystem> {
    if n == 0 {
        return Err(Error::InvalidArgument("ℓ∞ dimension must be positive".into()));
    }
    let basis = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = 1.0;
            Herm::from_real_diag(&d)
        })
        .collect();
    Ok(OperatorSystem::from_basis_unchecked(BlockShape::commutative(n)?, basis, format!("l_inf_{n}")))
}

/// The full matrix algebra `M_d`.
pub fn make_full(d: usize) -> Result<OperatorSystem> {
    if d == 0 {
        return Err(Error::InvalidArgument("matrix size must be positive".into()));
    }
    Ok(OperatorSystem::from_basis_unchecked(BlockShape::full(d)?, hermitian_basis(d), format!("M_{d}")))
}

/// The full block algebra `⊕ M_{d_i}`.
pub fn make_block_algebra(shape: BlockShape) -> OperatorSystem {
    let basis = shape.ambient_basis();
    let label = format!("block{:?}", shape.blocks());
    OperatorSystem::from_basis_unchecked(shape, basis, label)
}

/// Span of the unit and `generators`, which must lie in `ambient`.
pub fn make_subsystem(ambient: &OperatorSystem, generators: &[Herm], label: impl Into<String>) -> Result<OperatorSystem> {
    for (k, g) in generators.iter().enumerate() {
        if !ambient.contains(g, DEFAULT_TOL)? {
            return Err(Error::NotInSystem(format!("generator {k} is outside {}", ambient.label())));
        }
    }
    OperatorSystem::from_generators(ambient.ambient().clone(), generators, label)
}

/// The test system `{a : a_1 + a_2 = a_3 + a_4} ⊂ ℓ∞_4`.
pub fn namioka_phelps() -> OperatorSystem {
    let big = make_linf(4).expect("n > 0");
    let gens = [Herm::from_real_diag(&[1.0, 0.0, 1.0, 0.0]), Herm::from_real_diag(&[1.0, 0.0, 0.0, 1.0])];
    make_subsystem(&big, &gens, "V").expect("generators lie in l_inf_4")
}

/// A linear functional on a system, stored by its values on the basis.
#[derive(Debug, Clone)]
pub struct StateFunctional {
    system: Arc<OperatorSystem>,
    coords: Vec<f64>,
}

impl StateFunctional {
    /// Validates unitality and positivity.
    pub fn new(system: Arc<OperatorSystem>, coords: Vec<f64>, tol: f64) -> Result<Self> {
        let s = Self::new_unchecked(system, coords)?;
        let u = s.value(s.system.unit())?;
        if (u - 1.0).abs() > tol.max(1e-12) {
            return Err(Error::InvalidArgument(format!("state takes value {u} on the unit")));
        }
        if !cpmaps::is_cp(&s.as_map(), tol)? {
            return Err(Error::NotCompletelyPositive { index: 0 });
        }
        Ok(s)
    }

    pub fn new_unchecked(system: Arc<OperatorSystem>, coords: Vec<f64>) -> Result<Self> {
        if coords.len() != system.dim() {
            return Err(Error::DimensionMismatch { expected: system.dim(), found: coords.len() });
        }
        Ok(Self { system, coords })
    }

    /// `x ↦ tr(ρ x)` restricted to the system.
    pub fn from_density(system: Arc<OperatorSystem>, rho: &Herm) -> Result<Self> {
        if rho.dim() != system.ambient_dim() {
            return Err(Error::DimensionMismatch { expected: system.ambient_dim(), found: rho.dim() });
        }
        let coords = system.basis().iter().map(|b| rho.inner(b)).collect();
        Ok(Self { system, coords })
    }

    /// The normalized trace of the ambient.
    pub fn normalized_trace(system: Arc<OperatorSystem>) -> Self {
        let n = system.ambient_dim() as f64;
        let coords = system.basis().iter().map(|b| b.trace() / n).collect();
        Self { system, coords }
    }

    pub fn system(&self) -> &Arc<OperatorSystem> {
        &self.system
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn value(&self, x: &Herm) -> Result<f64> {
        let c = self.system.coordinates(x, DEFAULT_TOL)?;
        Ok(c.iter().zip(&self.coords).map(|(a, b)| a * b).sum())
    }

    /// The functional as a map into `M_1`.
    pub fn as_map(&self) -> CpMap {
        let values = self.coords.iter().map(|c| Herm::from_real_diag(&[*c])).collect();
        CpMap::new(self.system.clone(), 1, values).expect("sized values")
    }

    /// Faithfulness: no trace-one positive element of the system has a
    /// nonpositive value.
    pub fn is_faithful(&self, tol: f64) -> Result<bool> {
        let s = &self.system;
        let p = s.dim();
        let mut lmi = LmiProblem::new(p, Strictness::Closed);
        let mut pos = LmiBlock::with_identity_margin(Herm::zeros(s.ambient_dim()));
        for (i, b) in s.basis().iter().enumerate() {
            pos.add_term(i, b.clone());
        }
        lmi.add_block_split(pos, s.ambient());
        let mut val = LmiBlock::with_identity_margin(Herm::zeros(1));
        for (i, w) in self.coords.iter().enumerate() {
            if *w != 0.0 {
                val.add_term(i, Herm::from_real_diag(&[-w]));
            }
        }
        lmi.add_block(val);
        lmi.add_eq(s.basis().iter().enumerate().map(|(i, b)| (i, b.trace())).collect(), 1.0);
        let v = sdp::solve(&lmi, tol)?;
        Ok(v.status == Status::Infeasible)
    }
}

/// Pullback of `(S_i, w_i)`: tuples of the direct sum on which all states
/// agree, with the common value as state.
pub fn pullback(parts: &[(Arc<OperatorSystem>, StateFunctional)]) -> Result<(OperatorSystem, StateFunctional)> {
    if parts.is_empty() {
        return Err(Error::Empty("pullback parts"));
    }
    for (k, (s, w)) in parts.iter().enumerate() {
        if !Arc::ptr_eq(s, w.system()) && **s != **w.system() {
            return Err(Error::InvalidArgument(format!("state {k} is defined on a different system")));
        }
    }
    if parts.len() == 1 {
        return Ok(((*parts[0].0).clone(), parts[0].1.clone()));
    }
    let systems: Vec<&OperatorSystem> = parts.iter().map(|(s, _)| s.as_ref()).collect();
    let sum = OperatorSystem::direct_sum(&systems, "pullback")?;
    let offsets: Vec<usize> = systems
        .iter()
        .scan(0, |acc, s| {
            let o = *acc;
            *acc += s.dim();
            Some(o)
        })
        .collect();
    let total = sum.dim();
    let mut rows = Vec::new();
    for k in 1..parts.len() {
        let mut r = vec![0.0; total];
        for (i, w) in parts[0].1.coords().iter().enumerate() {
            r[offsets[0] + i] += w;
        }
        for (i, w) in parts[k].1.coords().iter().enumerate() {
            r[offsets[k] + i] -= w;
        }
        rows.push(r);
    }
    let null: Vec<Vec<f64>> = if sum.is_diagonal() {
        let q: Vec<Vec<Q>> = rows.iter().map(|r| r.iter().map(|x| Q::from_f64_exact(*x)).collect()).collect();
        exact::null_space(&q, total).into_iter().map(|v| v.iter().map(Field::to_f64_lossy).collect()).collect()
    } else {
        numeric_null_space(&rows, total)
    };
    let gens: Vec<Herm> = null.iter().map(|c| sum.combine(c)).collect();
    let label = parts.iter().map(|(s, _)| s.label().to_string()).collect::<Vec<_>>().join(" ⊓ ");
    let sys = OperatorSystem::from_generators(sum.ambient().clone(), &gens, label)?;
    // state: w_0 on the first component
    let first = &parts[0].1;
    let coords = sys
        .basis()
        .iter()
        .map(|b| {
            let c = sum.coordinates(b, DEFAULT_TOL).expect("pullback lies in the direct sum");
            first.coords().iter().enumerate().map(|(i, w)| w * c[offsets[0] + i]).sum()
        })
        .collect();
    let state = StateFunctional::new_unchecked(Arc::new(sys.clone()), coords)?;
    Ok((sys, state))
}

fn numeric_null_space(rows: &[Vec<f64>], ncols: usize) -> Vec<Vec<f64>> {
    let a = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
    let null = real_null_space(&a, RANK_TOL);
    null.column_iter().map(|c| c.iter().copied().collect()).collect()
}

/// `S / J` for a null-subspace `J`.
#[derive(Debug, Clone)]
pub struct QuotientSystem {
    system: Arc<OperatorSystem>,
    kernel: Vec<Herm>,
}

impl QuotientSystem {
    /// Validates that `kernel` lies in the system, avoids the unit, and
    /// contains no nonzero positive element.
    pub fn new(system: Arc<OperatorSystem>, kernel: Vec<Herm>, tol: f64) -> Result<Self> {
        let q = Self::new_unchecked(system, kernel)?;
        for k in &q.kernel {
            if !q.system.contains(k, tol.max(DEFAULT_TOL))? {
                return Err(Error::NotInSystem("kernel element".into()));
            }
        }
        let mut with_unit = q.kernel.clone();
        with_unit.push(q.system.unit().clone());
        if independent_indices(&with_unit).len() != with_unit.len() {
            return Err(Error::InvalidKernel);
        }
        if !q.null_subspace_check(tol)? {
            return Err(Error::InvalidKernel);
        }
        Ok(q)
    }

    /// Reduces the kernel to an independent spanning set without further checks.
    pub fn new_unchecked(system: Arc<OperatorSystem>, kernel: Vec<Herm>) -> Result<Self> {
        for k in &kernel {
            if k.dim() != system.ambient_dim() {
                return Err(Error::DimensionMismatch { expected: system.ambient_dim(), found: k.dim() });
            }
        }
        let keep = independent_indices(&kernel);
        let kernel = keep.into_iter().map(|i| kernel[i].clone()).collect();
        Ok(Self { system, kernel })
    }

    pub fn system(&self) -> &Arc<OperatorSystem> {
        &self.system
    }

    pub fn kernel(&self) -> &[Herm] {
        &self.kernel
    }

    /// `J ∩ PSD = {0}`, decided by searching for a trace-one positive
    /// element of `J`. An undecided search counts as failure.
    pub fn null_subspace_check(&self, tol: f64) -> Result<bool> {
        if self.kernel.is_empty() {
            return Ok(true);
        }
        let n = self.system.ambient_dim();
        let mut lmi = LmiProblem::new(self.kernel.len(), Strictness::Closed);
        let mut b = LmiBlock::with_identity_margin(Herm::zeros(n));
        for (i, k) in self.kernel.iter().enumerate() {
            b.add_term(i, k.clone());
        }
        lmi.add_block_split(b, self.system.ambient());
        lmi.add_eq(self.kernel.iter().enumerate().map(|(i, k)| (i, k.trace())).collect(), 1.0);
        Ok(sdp::solve(&lmi, tol)?.status == Status::Infeasible)
    }
}

/// Pushout of unital systems as `(⊕ S_i) / span{(e, −e, 0, …), …}`.
pub fn pushout_quotient(systems: &[&OperatorSystem]) -> Result<QuotientSystem> {
    if systems.is_empty() {
        return Err(Error::Empty("pushout parts"));
    }
    let label = systems.iter().map(|s| s.label().to_string()).collect::<Vec<_>>().join(" ⊔ ");
    let sum = OperatorSystem::direct_sum(systems, label)?;
    let first = embed(systems, 0, systems[0].unit());
    let kernel = (1..systems.len()).map(|k| first.sub(&embed(systems, k, systems[k].unit()))).collect();
    QuotientSystem::new_unchecked(Arc::new(sum), kernel)
}

/// Dual of a finite-dimensional system ordered by CP-ness of functional
/// tuples, with a faithful state as order unit.
#[derive(Debug, Clone)]
pub struct DualSystem {
    predual: Arc<OperatorSystem>,
    unit_state: StateFunctional,
}

pub fn dual(s: &Arc<OperatorSystem>, w: StateFunctional, tol: f64) -> Result<DualSystem> {
    if !Arc::ptr_eq(s, w.system()) && **s != **w.system() {
        return Err(Error::InvalidArgument("state is defined on a different system".into()));
    }
    if !w.is_faithful(tol)? {
        return Err(Error::NotFaithful);
    }
    Ok(DualSystem { predual: s.clone(), unit_state: w })
}

impl DualSystem {
    pub fn predual(&self) -> &Arc<OperatorSystem> {
        &self.predual
    }

    pub fn order_unit(&self) -> &StateFunctional {
        &self.unit_state
    }

    pub fn dim(&self) -> usize {
        self.predual.dim()
    }

    /// A matrix of functionals `(f_ij)` is positive iff `s ↦ (f_ij(s))` is CP.
    pub fn is_positive(&self, f: &CpMap, tol: f64) -> Result<bool> {
        if **f.domain() != *self.predual {
            return Err(Error::InvalidArgument("functional tuple lives on a different system".into()));
        }
        cpmaps::is_cp(f, tol)
    }

    /// Exact positivity of a functional on a diagonal predual, given by its
    /// values on the basis: positive iff it extends to a nonnegative vector
    /// on the ambient `ℓ∞`. `None` for non-diagonal preduals.
    pub fn is_positive_exact(&self, values: &[Q]) -> Option<bool> {
        if !self.predual.is_diagonal() || values.len() != self.predual.dim() {
            return None;
        }
        let a: Vec<Vec<Q>> =
            self.predual.basis().iter().map(|b| b.diagonal().into_iter().map(Q::from_f64_exact).collect()).collect();
        let lp = StandardLp { a, b: values.to_vec(), c: vec![Q::zero(); self.predual.ambient_dim()] };
        Some(matches!(lp::solve(&lp), LpOutcome::Optimal { .. }))
    }
}

/// Smallest unital *-subalgebra containing `s`, by closing the span under
/// Jordan products and `i[a, b]` until the dimension stabilizes.
pub fn generated_algebra(s: &OperatorSystem) -> OperatorSystem {
    let mut basis = s.basis().to_vec();
    loop {
        let mut cands = basis.clone();
        for i in 0..basis.len() {
            for j in i..basis.len() {
                cands.push(basis[i].jordan(&basis[j]));
                if i != j && !(basis[i].is_diagonal() && basis[j].is_diagonal()) {
                    cands.push(basis[i].commutator_i(&basis[j]));
                }
            }
        }
        let keep = independent_indices(&cands);
        if keep.len() == basis.len() {
            break;
        }
        basis = keep.into_iter().map(|k| cands[k].clone()).collect();
    }
    OperatorSystem::from_basis_unchecked(s.ambient().clone(), basis, format!("C*({})", s.label()))
}

/// Whether `s` is closed under products.
pub fn is_algebra(s: &OperatorSystem) -> bool {
    generated_algebra(s).dim() == s.dim()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex;

    fn d(v: &[f64]) -> Herm {
        Herm::from_real_diag(v)
    }

    #[test]
    fn linf_and_full() {
        assert!(make_linf(0).is_err());
        assert_eq!(make_linf(1).unwrap().dim(), 1);
        let l4 = make_linf(4).unwrap();
        assert_eq!(l4.dim(), 4);
        assert!(l4.contains(l4.unit(), 0.0).unwrap());
        assert!(make_full(0).is_err());
        assert_eq!(make_full(2).unwrap().dim(), 4);
        assert_eq!(make_full(3).unwrap().unit(), &Herm::identity(3));
    }

    #[test]
    fn namioka_phelps_system() {
        let v = namioka_phelps();
        assert_eq!(v.dim(), 3);
        assert!(v.contains(&d(&[1.0, 1.0, 1.0, 1.0]), 0.0).unwrap());
        assert!(!v.contains(&d(&[1.0, 1.0, -1.0, -1.0]), 0.0).unwrap());
        for g in [d(&[1.0, 0.0, 1.0, 0.0]), d(&[0.0, 1.0, 0.0, 1.0]), d(&[1.0, 0.0, 0.0, 1.0])] {
            assert!(v.contains(&g, 0.0).unwrap());
        }
        // a redundant generator does not raise the dimension
        let big = make_linf(4).unwrap();
        let w = make_subsystem(&big, &[d(&[1.0, 0.0, 1.0, 0.0]), d(&[0.0, 1.0, 0.0, 1.0]), d(&[1.0, 0.0, 0.0, 1.0])], "V'")
            .unwrap();
        assert!(w.same_span(&v, 1e-12).unwrap());
    }

    #[test]
    fn subsystem_rejects_outsiders() {
        let l2 = make_linf(2).unwrap();
        let off = Herm::from_fn(2, |i, j| if i != j { Complex::new(1.0, 0.0) } else { Complex::new(0.0, 0.0) }).unwrap();
        assert!(matches!(make_subsystem(&l2, &[off], "x"), Err(Error::NotInSystem(_))));
        let trivial = make_subsystem(&l2, &[], "one").unwrap();
        assert_eq!(trivial.dim(), 1);
    }

    #[test]
    fn pullback_of_two_l2_is_v() {
        let l2 = Arc::new(make_linf(2).unwrap());
        let w = StateFunctional::normalized_trace(l2.clone());
        let (p, state) = pullback(&[(l2.clone(), w.clone()), (l2.clone(), w)]).unwrap();
        assert!(p.same_span(&namioka_phelps(), 1e-12).unwrap());
        assert!((state.value(p.unit()).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pullback_dimensions() {
        let l3 = Arc::new(make_linf(3).unwrap());
        let w = StateFunctional::normalized_trace(l3.clone());
        let (p, _) = pullback(&[(l3.clone(), w.clone()), (l3.clone(), w.clone())]).unwrap();
        assert_eq!(p.dim(), 5);
        let (p3, _) = pullback(&[(l3.clone(), w.clone()), (l3.clone(), w.clone()), (l3.clone(), w.clone())]).unwrap();
        assert_eq!(p3.dim(), 7);
        let (single, s) = pullback(&[(l3.clone(), w.clone())]).unwrap();
        assert_eq!(single, *l3);
        assert_eq!(s.coords(), w.coords());
    }

    #[test]
    fn pushout_kernels() {
        let l2 = make_linf(2).unwrap();
        let l3 = make_linf(3).unwrap();
        let q = pushout_quotient(&[&l2]).unwrap();
        assert!(q.kernel().is_empty());
        assert!(q.null_subspace_check(1e-9).unwrap());
        let q = pushout_quotient(&[&l2, &l2]).unwrap();
        assert_eq!(q.kernel(), &[d(&[1.0, 1.0, -1.0, -1.0])]);
        assert!(q.null_subspace_check(1e-9).unwrap());
        let q = pushout_quotient(&[&l2, &l3]).unwrap();
        assert_eq!(q.kernel(), &[d(&[1.0, 1.0, -1.0, -1.0, -1.0])]);
    }

    #[test]
    fn null_subspace_rejects_projection() {
        let l4 = Arc::new(make_linf(4).unwrap());
        assert!(matches!(QuotientSystem::new(l4.clone(), vec![d(&[1.0, 0.0, 0.0, 0.0])], 1e-9), Err(Error::InvalidKernel)));
        assert!(QuotientSystem::new(l4, vec![d(&[1.0, 1.0, -1.0, -1.0])], 1e-9).is_ok());
    }

    #[test]
    fn null_subspace_noncommutative() {
        // span{σ_z} in M_2 is null; span{σ_z + I} is not
        let m2 = Arc::new(make_full(2).unwrap());
        let q = QuotientSystem::new_unchecked(m2.clone(), vec![d(&[1.0, -1.0])]).unwrap();
        assert!(q.null_subspace_check(1e-9).unwrap());
        let q = QuotientSystem::new_unchecked(m2, vec![d(&[2.0, 0.0])]).unwrap();
        assert!(!q.null_subspace_check(1e-9).unwrap());
    }

    #[test]
    fn faithful_states() {
        let l3 = Arc::new(make_linf(3).unwrap());
        let w = StateFunctional::normalized_trace(l3.clone());
        assert!(w.is_faithful(1e-9).unwrap());
        let dual_sys = dual(&l3, w.clone(), 1e-9).unwrap();
        assert!((dual_sys.order_unit().value(l3.unit()).unwrap() - 1.0).abs() < 1e-15);
        let point = StateFunctional::new(l3.clone(), vec![1.0, 0.0, 0.0], 1e-9).unwrap();
        assert!(!point.is_faithful(1e-9).unwrap());
        assert!(matches!(dual(&l3, point, 1e-9), Err(Error::NotFaithful)));
        let m2 = Arc::new(make_full(2).unwrap());
        let tr = StateFunctional::normalized_trace(m2);
        assert!(tr.is_faithful(1e-9).unwrap());
    }

    #[test]
    fn exact_dual_positivity_of_v() {
        let v = Arc::new(namioka_phelps());
        let dv = dual(&v, StateFunctional::normalized_trace(v.clone()), 1e-9).unwrap();
        let restrict = |g: [i64; 4]| -> Vec<Q> {
            v.basis().iter().map(|b| b.diagonal().iter().zip(g).map(|(x, y)| Q::from_f64_exact(*x) * Q::from(num_bigint::BigInt::from(y))).sum()).collect()
        };
        assert_eq!(dv.is_positive_exact(&restrict([1, 0, 0, 0])), Some(true));
        assert_eq!(dv.is_positive_exact(&restrict([1, -1, 0, 0])), Some(false));
        // (2, 2, -1, 0) ≡ (1, 1, 0, 1) modulo (1, 1, -1, -1)
        assert_eq!(dv.is_positive_exact(&restrict([2, 2, -1, 0])), Some(true));
        let m2 = Arc::new(make_full(2).unwrap());
        let dm = dual(&m2, StateFunctional::normalized_trace(m2.clone()), 1e-9).unwrap();
        assert_eq!(dm.is_positive_exact(&vec![Q::zero(); 4]), None);
    }

    #[test]
    fn state_validation() {
        let l2 = Arc::new(make_linf(2).unwrap());
        assert!(StateFunctional::new(l2.clone(), vec![0.5, 0.5], 1e-9).is_ok());
        assert!(StateFunctional::new(l2.clone(), vec![1.5, -0.5], 1e-9).is_err());
        assert!(StateFunctional::new(l2, vec![0.5, 0.6], 1e-9).is_err());
    }

    #[test]
    fn generated_algebras() {
        let l3 = make_linf(3).unwrap();
        assert_eq!(generated_algebra(&l3).dim(), 3);
        let m2 = make_full(2).unwrap();
        let flip = Herm::from_fn(2, |i, j| Complex::new(if i != j { 1.0 } else { 0.0 }, 0.0)).unwrap();
        let s = make_subsystem(&m2, std::slice::from_ref(&flip), "flip").unwrap();
        assert_eq!(generated_algebra(&s).dim(), 2);
        let y = Herm::from_fn(2, |i, j| match (i, j) {
            (0, 1) => Complex::new(0.0, 1.0),
            (1, 0) => Complex::new(0.0, -1.0),
            _ => Complex::new(0.0, 0.0),
        })
        .unwrap();
        let s = make_subsystem(&m2, &[flip, y], "xy").unwrap();
        assert_eq!(s.dim(), 3);
        assert_eq!(generated_algebra(&s).dim(), 4);
        let v = namioka_phelps();
        assert_eq!(generated_algebra(&v).dim(), 4);
    }

    #[test]
    fn amplification() {
        let v = namioka_phelps();
        let v2 = v.amplify(2).unwrap();
        assert_eq!(v2.dim(), 12);
        assert_eq!(v2.ambient().blocks(), &[2, 2, 2, 2]);
        assert!(v2.contains(&d(&[1.0, 0.0, 1.0, 0.0]).kron(&Herm::identity(2)), 1e-12).unwrap());
        assert!(!v2.contains(&d(&[1.0, 0.0, 0.0, 0.0]).kron(&Herm::identity(2)), 1e-9).unwrap());
    }

    #[test]
    fn serde_roundtrip() {
        let v = namioka_phelps();
        let j = serde_json::to_string(&v).unwrap();
        let back: OperatorSystem = serde_json::from_str(&j).unwrap();
        assert!(back.same_span(&v, 1e-12).unwrap());
    }
}
