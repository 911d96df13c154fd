//! Completely positive maps on concrete systems, decided through Choi
//! matrices on the ambient block algebra.
//!
//! A map on `⊕ M_{d_k}` into `M_m` has one Choi block `C_k = Σ E_ij ⊗ Φ(E_ij)`
//! of size `d_k·m` per ambient block, indexed `(i, p) -> i·m + p`, and
//! `Φ(X)_pq = Σ_ij X_ij C_k[(i,p),(j,q)]`. A map on a subsystem is CP iff
//! some positive Choi family reproduces it there.

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hermitian_basis, CMatrix, HermMatrix, DEFAULT_TOL};
use crate::opsys::{is_algebra, OperatorSystem};
use crate::sdp::{self, FeasibilityVerdict, LmiBlock, LmiProblem, Status, Strictness};

type Herm = HermMatrix<f64>;

/// Linear map from a system into `M_m`, stored by its values on the basis.
#[derive(Debug, Clone)]
pub struct CpMap {
    domain: Arc<OperatorSystem>,
    codomain_dim: usize,
    values: Vec<Herm>,
}

impl CpMap {
    pub fn new(domain: Arc<OperatorSystem>, codomain_dim: usize, values: Vec<Herm>) -> Result<Self> {
        if values.len() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), found: values.len() });
        }
        if let Some(v) = values.iter().find(|v| v.dim() != codomain_dim) {
            return Err(Error::DimensionMismatch { expected: codomain_dim, found: v.dim() });
        }
        Ok(Self { domain, codomain_dim, values })
    }

    /// Restriction of an ambient map `x ↦ f(x)` to the domain basis.
    pub fn from_fn(domain: Arc<OperatorSystem>, codomain_dim: usize, f: impl Fn(&Herm) -> Herm) -> Result<Self> {
        let values = domain.basis().iter().map(f).collect();
        Self::new(domain, codomain_dim, values)
    }

    pub fn zero(domain: Arc<OperatorSystem>, codomain_dim: usize) -> Self {
        let values = vec![Herm::zeros(codomain_dim); domain.dim()];
        Self { domain, codomain_dim, values }
    }

    /// The inclusion of a system of `M_d` into `M_d`.
    pub fn identity(domain: Arc<OperatorSystem>) -> Self {
        let m = domain.ambient_dim();
        Self::from_fn(domain, m, Herm::clone).expect("sized values")
    }

    /// Transpose on a system of `M_d`.
    pub fn transpose(domain: Arc<OperatorSystem>) -> Self {
        let m = domain.ambient_dim();
        Self::from_fn(domain, m, |x| Herm::from_fn(x.dim(), |i, j| x.get(j, i)).expect("transpose is Hermitian"))
            .expect("sized values")
    }

    pub fn domain(&self) -> &Arc<OperatorSystem> {
        &self.domain
    }

    pub fn codomain_dim(&self) -> usize {
        self.codomain_dim
    }

    pub fn values(&self) -> &[Herm] {
        &self.values
    }

    /// `Σ c_i f(b_i)` for the coordinates `c` of `x`.
    pub fn apply(&self, x: &Herm) -> Result<Herm> {
        let c = self.domain.coordinates(x, DEFAULT_TOL)?;
        Ok(self.apply_coords(&c))
    }

    pub fn apply_coords(&self, c: &[f64]) -> Herm {
        c.iter().zip(&self.values).fold(Herm::zeros(self.codomain_dim), |acc, (ci, v)| acc.add_scaled(*ci, v))
    }

    fn check_compatible(&self, other: &CpMap) -> Result<()> {
        if self.codomain_dim != other.codomain_dim {
            return Err(Error::DimensionMismatch { expected: self.codomain_dim, found: other.codomain_dim });
        }
        if !Arc::ptr_eq(&self.domain, &other.domain) && *self.domain != *other.domain {
            return Err(Error::InvalidArgument("maps have different domains".into()));
        }
        Ok(())
    }

    pub fn add(&self, other: &CpMap) -> Result<CpMap> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.add(b)).collect();
        Ok(CpMap { domain: self.domain.clone(), codomain_dim: self.codomain_dim, values })
    }

    pub fn sub(&self, other: &CpMap) -> Result<CpMap> {
        self.check_compatible(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a.sub(b)).collect();
        Ok(CpMap { domain: self.domain.clone(), codomain_dim: self.codomain_dim, values })
    }

    pub fn scale(&self, s: f64) -> CpMap {
        CpMap { domain: self.domain.clone(), codomain_dim: self.codomain_dim, values: self.values.iter().map(|v| v.scale(s)).collect() }
    }

    /// Largest deviation between the values of two maps on the basis.
    pub fn distance(&self, other: &CpMap) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a.sub(b).max_abs()).fold(0.0, f64::max))
    }

    /// The component map into the `k`-th diagonal block of the codomain.
    pub fn compress(&self, offset: usize, size: usize) -> CpMap {
        CpMap {
            domain: self.domain.clone(),
            codomain_dim: size,
            values: self.values.iter().map(|v| v.principal(offset, size)).collect(),
        }
    }
}

/// `Φ(X)` for a single Choi block.
fn choi_apply(c: &CMatrix<f64>, d: usize, m: usize, x: &CMatrix<f64>) -> Herm {
    let mut out = CMatrix::zeros(m, m);
    for i in 0..d {
        for j in 0..d {
            let xij = x[(i, j)];
            if xij == Complex::new(0.0, 0.0) {
                continue;
            }
            for p in 0..m {
                for q in 0..m {
                    out[(p, q)] += xij * c[(i * m + p, j * m + q)];
                }
            }
        }
    }
    Herm::new(out).expect("Hermitian Choi block maps Hermitian inputs to Hermitian outputs")
}

/// Choi variables of one map: a Hermitian coordinate vector per ambient block.
struct ChoiLayout {
    blocks: Vec<(usize, usize)>,
    m: usize,
    bases: Vec<Vec<Herm>>,
    per_map: usize,
}

impl ChoiLayout {
    fn new(system: &OperatorSystem, m: usize) -> Self {
        let blocks = system.ambient().ranges();
        let bases: Vec<Vec<Herm>> = blocks.iter().map(|&(_, d)| hermitian_basis(d * m)).collect();
        let per_map = bases.iter().map(Vec::len).sum();
        Self { blocks, m, bases, per_map }
    }

    /// `Φ_r(x)` for every Choi coordinate `r`.
    fn responses(&self, x: &Herm) -> Vec<Herm> {
        let mut out = Vec::with_capacity(self.per_map);
        for (k, &(off, d)) in self.blocks.iter().enumerate() {
            let xk = x.principal(off, d);
            for h in &self.bases[k] {
                out.push(choi_apply(h.as_matrix(), d, self.m, xk.as_matrix()));
            }
        }
        out
    }

    /// Positivity constraints for a map whose variables start at `start`.
    fn add_psd_blocks(&self, lmi: &mut LmiProblem, start: usize) {
        let mut var = start;
        for (k, &(_, d)) in self.blocks.iter().enumerate() {
            let mut b = LmiBlock::with_identity_margin(Herm::zeros(d * self.m));
            for h in &self.bases[k] {
                b.add_term(var, h.clone());
                var += 1;
            }
            lmi.add_block(b);
        }
    }

    fn decode_blocks(&self, y: &[f64]) -> Vec<Herm> {
        let mut var = 0;
        self.blocks
            .iter()
            .enumerate()
            .map(|(k, &(_, d))| {
                let mut c = Herm::zeros(d * self.m);
                for h in &self.bases[k] {
                    c = c.add_scaled(y[var], h);
                    var += 1;
                }
                c
            })
            .collect()
    }
}

/// Adds `Σ_t sign_t · Φ_{map_t}(x) = rhs` as real equations.
fn add_response_eqs(lmi: &mut LmiProblem, resp: &[Herm], terms: &[(usize, f64)], rhs: &Herm) {
    let m = rhs.dim();
    let coords: Vec<Vec<f64>> = resp.iter().map(Herm::to_coords).collect();
    let target = rhs.to_coords();
    for e in 0..m * m {
        let mut row = Vec::new();
        for &(start, sign) in terms {
            for (r, c) in coords.iter().enumerate() {
                if c[e] != 0.0 {
                    row.push((start + r, sign * c[e]));
                }
            }
        }
        if row.is_empty() && target[e] == 0.0 {
            continue;
        }
        lmi.add_eq(row, target[e]);
    }
}

/// Choi blocks of a map whose domain is its full ambient algebra.
pub fn choi_blocks(f: &CpMap) -> Result<Vec<Herm>> {
    let dom = f.domain();
    if !dom.is_full() {
        return Err(Error::InvalidArgument("Choi matrix requires a full-algebra domain".into()));
    }
    let n = dom.ambient_dim();
    let m = f.codomain_dim();
    let value_of = |x: &Herm| f.apply(x).expect("full domain contains every block element");
    let mut out = Vec::new();
    for (off, d) in dom.ambient().ranges() {
        let mut c = CMatrix::zeros(d * m, d * m);
        for i in 0..d {
            for j in i..d {
                let (fe, fe_t) = if i == j {
                    let mut e = vec![0.0; n];
                    e[off + i] = 1.0;
                    let v = value_of(&Herm::from_real_diag(&e)).into_matrix();
                    (v.clone(), v)
                } else {
                    let s = Herm::from_fn(n, |a, b| {
                        if (a, b) == (off + i, off + j) || (a, b) == (off + j, off + i) {
                            Complex::new(1.0, 0.0)
                        } else {
                            Complex::new(0.0, 0.0)
                        }
                    })?;
                    let t = Herm::from_fn(n, |a, b| {
                        if (a, b) == (off + i, off + j) {
                            Complex::new(0.0, 1.0)
                        } else if (a, b) == (off + j, off + i) {
                            Complex::new(0.0, -1.0)
                        } else {
                            Complex::new(0.0, 0.0)
                        }
                    })?;
                    let fs = value_of(&s).into_matrix();
                    let ft = value_of(&t).into_matrix();
                    let half_i = Complex::new(0.0, 0.5);
                    // E_ij = (S − iT)/2, E_ji = (S + iT)/2
                    (fs.map(|z| z * 0.5) - ft.map(|z| z * half_i), fs.map(|z| z * 0.5) + ft.map(|z| z * half_i))
                };
                for p in 0..m {
                    for q in 0..m {
                        c[(i * m + p, j * m + q)] = fe[(p, q)];
                        if i != j {
                            c[(j * m + p, i * m + q)] = fe_t[(p, q)];
                        }
                    }
                }
            }
        }
        out.push(Herm::new(c)?);
    }
    Ok(out)
}

/// Outcome of a CP test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpCheck {
    pub cp: bool,
    /// Smallest Choi eigenvalue, on full-algebra domains.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub min_choi_eig: Option<f64>,
    /// Extension search, on proper subsystems.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub verdict: Option<FeasibilityVerdict>,
}

impl CpCheck {
    /// CP only up to the tolerance.
    pub fn marginal(&self) -> bool {
        self.cp
            && (self.min_choi_eig.is_some_and(|e| e < 0.0) || self.verdict.as_ref().is_some_and(|v| v.best_delta < 0.0))
    }
}

/// The Choi-extension problem deciding whether `f` is CP.
pub fn cp_lmi(f: &CpMap) -> LmiProblem {
    let layout = ChoiLayout::new(f.domain(), f.codomain_dim());
    let mut lmi = LmiProblem::new(layout.per_map, Strictness::Closed);
    layout.add_psd_blocks(&mut lmi, 0);
    for (b, v) in f.domain().basis().iter().zip(f.values()) {
        let resp = layout.responses(b);
        add_response_eqs(&mut lmi, &resp, &[(0, 1.0)], v);
    }
    lmi
}

pub fn cp_check(f: &CpMap, tol: f64) -> Result<CpCheck> {
    if f.domain().is_full() {
        let blocks = choi_blocks(f)?;
        let mut worst = f64::INFINITY;
        for c in &blocks {
            worst = worst.min(c.min_eig() / c.max_abs().max(1.0));
        }
        return Ok(CpCheck { cp: worst >= -tol, min_choi_eig: Some(worst), verdict: None });
    }
    let lmi = cp_lmi(f);
    let v = sdp::solve(&lmi, tol)?;
    Ok(CpCheck { cp: v.status == Status::Feasible, min_choi_eig: None, verdict: Some(v) })
}

pub fn is_cp(f: &CpMap, tol: f64) -> Result<bool> {
    Ok(cp_check(f, tol)?.cp)
}

/// `f ≤ g` in the CP order.
pub fn cp_leq(f: &CpMap, g: &CpMap, tol: f64) -> Result<bool> {
    is_cp(&g.sub(f)?, tol)
}

/// `Σ_{left} φ̃_i = Σ_{right} φ̃_j` on the big system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SumConstraint {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
}

/// `tr(W φ̃_left(·)) = tr(W φ̃_right(·))` on the big system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionalConstraint {
    pub weight: Herm,
    pub left: usize,
    pub right: usize,
}

#[derive(Debug, Clone)]
pub struct ExtensionProblem {
    pub small: Arc<OperatorSystem>,
    pub big: Arc<OperatorSystem>,
    pub maps: Vec<CpMap>,
    pub sum_constraints: Vec<SumConstraint>,
    /// `(i, j)` asks for `φ̃_i ≤ φ̃_j`.
    pub dominance: Vec<(usize, usize)>,
    pub functional_constraints: Vec<FunctionalConstraint>,
}

impl ExtensionProblem {
    pub fn new(small: Arc<OperatorSystem>, big: Arc<OperatorSystem>, maps: Vec<CpMap>) -> Self {
        Self { small, big, maps, sum_constraints: Vec::new(), dominance: Vec::new(), functional_constraints: Vec::new() }
    }

    pub fn codomain_dim(&self) -> usize {
        self.maps.first().map_or(1, CpMap::codomain_dim)
    }

    /// Structural checks: shared domain and codomain, valid indices, and
    /// `small ⊆ big` in a common ambient.
    pub fn validate(&self, tol: f64) -> Result<()> {
        if self.maps.is_empty() {
            return Err(Error::Empty("extension maps"));
        }
        let m = self.codomain_dim();
        for f in &self.maps {
            if f.codomain_dim() != m {
                return Err(Error::DimensionMismatch { expected: m, found: f.codomain_dim() });
            }
            if !Arc::ptr_eq(f.domain(), &self.small) && **f.domain() != *self.small {
                return Err(Error::InvalidArgument("every map must be defined on the small system".into()));
            }
        }
        let n = self.maps.len();
        let bad = |i: &usize| *i >= n;
        if self.sum_constraints.iter().any(|c| c.left.iter().any(bad) || c.right.iter().any(bad))
            || self.dominance.iter().any(|(i, j)| bad(i) || bad(j))
            || self.functional_constraints.iter().any(|c| bad(&c.left) || bad(&c.right))
        {
            return Err(Error::InvalidArgument("constraint references a missing map".into()));
        }
        if let Some(c) = self.functional_constraints.iter().find(|c| c.weight.dim() != m) {
            return Err(Error::DimensionMismatch { expected: m, found: c.weight.dim() });
        }
        if !self.small.is_subsystem_of(&self.big, tol.max(DEFAULT_TOL))? {
            return Err(Error::NotInSystem(format!("{} is not contained in {}", self.small.label(), self.big.label())));
        }
        Ok(())
    }

    /// Variables: one Choi family per map, then one per dominance pair.
    pub fn to_lmi(&self) -> LmiProblem {
        let m = self.codomain_dim();
        let layout = ChoiLayout::new(&self.big, m);
        let families = self.maps.len() + self.dominance.len();
        let mut lmi = LmiProblem::new(families * layout.per_map, Strictness::Closed);
        let start = |a: usize| a * layout.per_map;
        for a in 0..families {
            layout.add_psd_blocks(&mut lmi, start(a));
        }
        for (r, b) in self.small.basis().iter().enumerate() {
            let resp = layout.responses(b);
            for (a, f) in self.maps.iter().enumerate() {
                add_response_eqs(&mut lmi, &resp, &[(start(a), 1.0)], &f.values()[r]);
            }
        }
        let zero = Herm::zeros(m);
        for b in self.big.basis() {
            let resp = layout.responses(b);
            for c in &self.sum_constraints {
                let mut terms: Vec<(usize, f64)> = c.left.iter().map(|&i| (start(i), 1.0)).collect();
                terms.extend(c.right.iter().map(|&j| (start(j), -1.0)));
                add_response_eqs(&mut lmi, &resp, &terms, &zero);
            }
            for (t, &(i, j)) in self.dominance.iter().enumerate() {
                let d = self.maps.len() + t;
                add_response_eqs(&mut lmi, &resp, &[(start(d), 1.0), (start(j), -1.0), (start(i), 1.0)], &zero);
            }
            for c in &self.functional_constraints {
                let w: Vec<f64> = resp.iter().map(|r| c.weight.inner(r)).collect();
                let mut row = Vec::new();
                for (r, wr) in w.iter().enumerate() {
                    if *wr != 0.0 {
                        row.push((start(c.left) + r, *wr));
                        row.push((start(c.right) + r, -*wr));
                    }
                }
                if !row.is_empty() {
                    lmi.add_eq(row, 0.0);
                }
            }
        }
        lmi
    }
}

/// Searches for CP extensions to the big system meeting every constraint.
/// Input maps must be CP; maps that are CP only within `tol` are accepted
/// with a warning.
pub fn solve_extension(p: &ExtensionProblem, tol: f64) -> Result<FeasibilityVerdict> {
    p.validate(tol)?;
    let mut warnings = Vec::new();
    for (i, f) in p.maps.iter().enumerate() {
        let c = cp_check(f, tol)?;
        if !c.cp {
            return Err(Error::NotCompletelyPositive { index: i });
        }
        if c.marginal() {
            warnings.push(format!("input map {i} is completely positive only within tolerance"));
        }
    }
    let mut v = sdp::solve(&p.to_lmi(), tol)?;
    v.warnings.extend(warnings);
    Ok(v)
}

/// The extensions encoded by a feasible verdict, as maps on the big system.
pub fn decode_extensions(p: &ExtensionProblem, v: &FeasibilityVerdict) -> Result<Vec<CpMap>> {
    let w = v.witness.as_ref().ok_or(Error::NothingToReplay)?;
    let layout = ChoiLayout::new(&p.big, p.codomain_dim());
    let per = layout.per_map;
    if w.x.len() < per * p.maps.len() {
        return Err(Error::DimensionMismatch { expected: per * p.maps.len(), found: w.x.len() });
    }
    let resp: Vec<Vec<Herm>> = p.big.basis().iter().map(|b| layout.responses(b)).collect();
    (0..p.maps.len())
        .map(|a| {
            let y = &w.x[a * per..(a + 1) * per];
            let values = resp
                .iter()
                .map(|rs| rs.iter().zip(y).fold(Herm::zeros(layout.m), |acc, (r, yi)| acc.add_scaled(*yi, r)))
                .collect();
            CpMap::new(p.big.clone(), layout.m, values)
        })
        .collect()
}

/// Choi blocks of each extension in a feasible verdict.
pub fn decode_choi(p: &ExtensionProblem, v: &FeasibilityVerdict) -> Result<Vec<Vec<Herm>>> {
    let w = v.witness.as_ref().ok_or(Error::NothingToReplay)?;
    let layout = ChoiLayout::new(&p.big, p.codomain_dim());
    let per = layout.per_map;
    Ok((0..p.maps.len()).map(|a| layout.decode_blocks(&w.x[a * per..(a + 1) * per])).collect())
}

/// Extension of `φ_1..φ_{n+k}` with `Σ_{i≤n} φ_i = Σ_{j>n} φ_j`, keeping the identity.
pub fn riesz_arveson(
    small: Arc<OperatorSystem>,
    big: Arc<OperatorSystem>,
    n: usize,
    k: usize,
    maps: Vec<CpMap>,
    tol: f64,
) -> Result<FeasibilityVerdict> {
    riesz_arveson_problem(small, big, n, k, maps, tol).and_then(|p| solve_extension(&p, tol))
}

pub fn riesz_arveson_problem(
    small: Arc<OperatorSystem>,
    big: Arc<OperatorSystem>,
    n: usize,
    k: usize,
    maps: Vec<CpMap>,
    tol: f64,
) -> Result<ExtensionProblem> {
    if n == 0 || k == 0 || maps.len() != n + k {
        return Err(Error::InvalidArgument(format!("expected {} maps for ({n}, {k}), found {}", n + k, maps.len())));
    }
    let lhs = maps[..n].iter().skip(1).try_fold(maps[0].clone(), |acc, f| acc.add(f))?;
    let rhs = maps[n..].iter().skip(1).try_fold(maps[n].clone(), |acc, f| acc.add(f))?;
    let gap = lhs.distance(&rhs)?;
    let scale = lhs.values().iter().map(Herm::max_abs).fold(1.0, f64::max);
    if gap > tol.max(1e-12) * scale {
        return Err(Error::IdentityViolated(format!("sums differ by {gap:.3e}")));
    }
    let mut p = ExtensionProblem::new(small, big, maps);
    p.sum_constraints.push(SumConstraint { left: (0..n).collect(), right: (n..n + k).collect() });
    Ok(p)
}

/// Extensions `φ̃ ≥ φ̃_i` of a dominating map and maps below it.
pub fn dominated_extend(
    small: Arc<OperatorSystem>,
    big: Arc<OperatorSystem>,
    dominated: Vec<CpMap>,
    dominating: CpMap,
    tol: f64,
) -> Result<FeasibilityVerdict> {
    dominated_problem(small, big, dominated, dominating, tol).and_then(|p| solve_extension(&p, tol))
}

pub fn dominated_problem(
    small: Arc<OperatorSystem>,
    big: Arc<OperatorSystem>,
    dominated: Vec<CpMap>,
    dominating: CpMap,
    tol: f64,
) -> Result<ExtensionProblem> {
    for (i, f) in dominated.iter().enumerate() {
        if !cp_leq(f, &dominating, tol)? {
            return Err(Error::InvalidArgument(format!("dominated map {i} is not below the dominating map")));
        }
    }
    let k = dominated.len();
    let mut maps = vec![dominating];
    maps.extend(dominated);
    let mut p = ExtensionProblem::new(small, big, maps);
    p.dominance = (1..=k).map(|i| (i, 0)).collect();
    Ok(p)
}

/// The trace-preserving conditional expectation onto a unital
/// *-subalgebra, i.e. the Hilbert-Schmidt orthogonal projection.
#[derive(Debug, Clone)]
pub struct ConditionalExpectation {
    algebra: Arc<OperatorSystem>,
}

impl ConditionalExpectation {
    pub fn new(algebra: Arc<OperatorSystem>) -> Result<Self> {
        if !is_algebra(&algebra) {
            return Err(Error::InvalidArgument(format!("{} is not closed under products", algebra.label())));
        }
        Ok(Self { algebra })
    }

    pub fn algebra(&self) -> &Arc<OperatorSystem> {
        &self.algebra
    }

    pub fn apply(&self, x: &Herm) -> Result<Herm> {
        self.algebra.project(x)
    }

    /// `f ∘ E` on `big`, for `f` defined on the algebra.
    pub fn compose(&self, f: &CpMap, big: Arc<OperatorSystem>) -> Result<CpMap> {
        let values = big
            .basis()
            .iter()
            .map(|b| {
                let (c, _) = self.algebra.project_coords(b)?;
                Ok(f.apply_coords(&c))
            })
            .collect::<Result<Vec<_>>>()?;
        CpMap::new(big, f.codomain_dim(), values)
    }
}

/// Replays extension maps against a problem: every map CP, restrictions
/// equal to the inputs and all constraints within `tol`.
pub fn replay_extensions(p: &ExtensionProblem, ext: &[CpMap], tol: f64) -> Result<bool> {
    if ext.len() != p.maps.len() {
        return Ok(false);
    }
    for f in ext {
        if !is_cp(f, tol)? {
            return Ok(false);
        }
    }
    let close = |a: &Herm, b: &Herm| a.sub(b).max_abs() <= tol * a.max_abs().max(1.0);
    for b in p.small.basis() {
        for (f, g) in p.maps.iter().zip(ext) {
            if !close(&f.apply(b)?, &g.apply(b)?) {
                return Ok(false);
            }
        }
    }
    let m = p.codomain_dim();
    for b in p.big.basis() {
        let vals: Vec<Herm> = ext.iter().map(|g| g.apply(b)).collect::<Result<_>>()?;
        for c in &p.sum_constraints {
            let l = c.left.iter().fold(Herm::zeros(m), |acc, &i| acc.add(&vals[i]));
            let r = c.right.iter().fold(Herm::zeros(m), |acc, &j| acc.add(&vals[j]));
            if !close(&l, &r) {
                return Ok(false);
            }
        }
        for c in &p.functional_constraints {
            if (c.weight.inner(&vals[c.left]) - c.weight.inner(&vals[c.right])).abs() > tol * c.weight.max_abs().max(1.0) {
                return Ok(false);
            }
        }
    }
    for &(i, j) in &p.dominance {
        if !cp_leq(&ext[i], &ext[j], tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}
