//! Membership in tensor cones of two systems and in strict quotient cones.
//!
//! Tensors at level `n` are assembled as `Σ b_i ⊗ c_j ⊗ H_ij`, ordered
//! (left ambient, right ambient, level).

use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::cpmaps::CpMap;
use crate::exact;
use crate::linalg::{hermitian_basis, CMatrix, HermMatrix, DEFAULT_TOL};
use crate::opsys::{embed, make_linf, pullback, pushout_quotient, OperatorSystem, QuotientSystem, StateFunctional};
use crate::scalar::Field;
use crate::sdp::{self, FeasibilityVerdict, LmiBlock, LmiProblem, Status, Strictness};

type Herm = HermMatrix<f64>;
type Q = num_rational::BigRational;

/// Default shift used by relaxed (closed cone) membership.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TensorElement {
    left: Arc<OperatorSystem>,
    right: Arc<OperatorSystem>,
    /// `coeffs[i][j]` multiplies `b_i ⊗ c_j`.
    coeffs: Vec<Vec<Herm>>,
    level: usize,
}

impl TensorElement {
    pub fn new(left: Arc<OperatorSystem>, right: Arc<OperatorSystem>, coeffs: Vec<Vec<Herm>>, level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidArgument("tensor level must be positive".into()));
        }
        if coeffs.len() != left.dim() {
            return Err(Error::DimensionMismatch { expected: left.dim(), found: coeffs.len() });
        }
        for row in &coeffs {
            if row.len() != right.dim() {
                return Err(Error::DimensionMismatch { expected: right.dim(), found: row.len() });
            }
            if let Some(h) = row.iter().find(|h| h.dim() != level) {
                return Err(Error::DimensionMismatch { expected: level, found: h.dim() });
            }
        }
        Ok(Self { left, right, coeffs, level })
    }

    /// Level-one element from a real coefficient matrix.
    pub fn from_scalars(left: Arc<OperatorSystem>, right: Arc<OperatorSystem>, c: &[Vec<f64>]) -> Result<Self> {
        let coeffs = c.iter().map(|row| row.iter().map(|v| Herm::from_real_diag(&[*v])).collect()).collect();
        Self::new(left, right, coeffs, 1)
    }

    /// `s ⊗ t` for `s` in the left system and `t` in the right one.
    pub fn elementary(left: Arc<OperatorSystem>, right: Arc<OperatorSystem>, s: &Herm, t: &Herm) -> Result<Self> {
        let a = left.coordinates(s, DEFAULT_TOL)?;
        let b = right.coordinates(t, DEFAULT_TOL)?;
        let c: Vec<Vec<f64>> = a.iter().map(|ai| b.iter().map(|bj| ai * bj).collect()).collect();
        Self::from_scalars(left, right, &c)
    }

    /// `1 ⊗ 1 ⊗ I_n`.
    pub fn unit(left: Arc<OperatorSystem>, right: Arc<OperatorSystem>, level: usize) -> Result<Self> {
        let a = left.coordinates(left.unit(), DEFAULT_TOL)?;
        let b = right.coordinates(right.unit(), DEFAULT_TOL)?;
        let coeffs = a.iter().map(|ai| b.iter().map(|bj| Herm::identity(level).scale(ai * bj)).collect()).collect();
        Self::new(left, right, coeffs, level)
    }

    pub fn left(&self) -> &Arc<OperatorSystem> {
        &self.left
    }

    pub fn right(&self) -> &Arc<OperatorSystem> {
        &self.right
    }

    pub fn coeffs(&self) -> &[Vec<Herm>] {
        &self.coeffs
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn assemble(&self) -> Herm {
        let n = self.left.ambient_dim() * self.right.ambient_dim() * self.level;
        let mut out = Herm::zeros(n);
        for (b, row) in self.left.basis().iter().zip(&self.coeffs) {
            for (c, h) in self.right.basis().iter().zip(row) {
                if h.max_abs() != 0.0 {
                    out = out.add(&b.kron(c).kron(h));
                }
            }
        }
        out
    }

    /// Right-hand slices `Σ_j c_j ⊗ H_ij`, one per left basis element.
    fn right_slices(&self) -> Vec<Herm> {
        let n = self.right.ambient_dim() * self.level;
        self.coeffs
            .iter()
            .map(|row| {
                self.right.basis().iter().zip(row).fold(Herm::zeros(n), |acc, (c, h)| acc.add(&c.kron(h)))
            })
            .collect()
    }
}

/// Membership in the spatial (minimal) tensor cone: PSD-ness of the
/// assembled matrix.
pub fn min_cone_member(x: &TensorElement, tol: f64) -> bool {
    let m = x.assemble();
    if let Some(d) = m.real_diagonal() {
        return d.iter().all(|v| *v >= -tol);
    }
    m.min_eig() >= -tol * m.max_abs().max(1.0)
}

/// Membership of `(s_1, …, s_k)` in `S ⊗_max ℓ∞_k = ⊕_k S`: every component
/// PSD, or strictly positive when `strict`.
pub fn max_commutative_member(s: &OperatorSystem, tuple: &[Herm], strict: bool, tol: f64) -> Result<bool> {
    for (k, x) in tuple.iter().enumerate() {
        if !s.contains(x, tol.max(DEFAULT_TOL))? {
            return Err(Error::NotInSystem(format!("component {k} is outside {}", s.label())));
        }
    }
    Ok(tuple.iter().all(|x| {
        let m = match x.real_diagonal() {
            Some(d) => d.into_iter().fold(f64::INFINITY, f64::min),
            None => x.min_eig(),
        };
        if strict {
            m > tol
        } else {
            m >= -tol
        }
    }))
}

/// A coset representative at matrix level `level` of a quotient system.
#[derive(Debug, Clone)]
pub struct QuotientElement {
    quotient: Arc<QuotientSystem>,
    representative: Herm,
    level: usize,
}

impl QuotientElement {
    pub fn new(quotient: Arc<QuotientSystem>, representative: Herm, level: usize) -> Result<Self> {
        if level == 0 {
            return Err(Error::InvalidArgument("quotient level must be positive".into()));
        }
        let n = quotient.system().ambient_dim() * level;
        if representative.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: representative.dim() });
        }
        let shape = quotient.system().ambient().amplified(level);
        if !shape.is_block_diagonal(&representative, 0.0) {
            return Err(Error::NotInSystem("representative is not block diagonal in the ambient".into()));
        }
        Ok(Self { quotient, representative, level })
    }

    pub fn quotient(&self) -> &Arc<QuotientSystem> {
        &self.quotient
    }

    pub fn representative(&self) -> &Herm {
        &self.representative
    }

    pub fn level(&self) -> usize {
        self.level
    }

    /// Kernel generators at this level, `j ⊗ h` over Hermitian units `h`.
    pub fn kernel_basis(&self) -> Vec<Herm> {
        if self.level == 1 {
            return self.quotient.kernel().to_vec();
        }
        let hs = hermitian_basis::<f64>(self.level);
        self.quotient.kernel().iter().flat_map(|j| hs.iter().map(move |h| j.kron(h))).collect()
    }

    pub fn shifted(&self, eps: f64) -> Self {
        Self { representative: self.representative.shift(eps), ..self.clone() }
    }

    pub fn with_representative(&self, representative: Herm) -> Result<Self> {
        Self::new(self.quotient.clone(), representative, self.level)
    }

    pub fn lmi(&self) -> LmiProblem {
        let kb = self.kernel_basis();
        let mut lmi = LmiProblem::new(kb.len(), Strictness::Strict);
        let mut b = LmiBlock::with_identity_margin(self.representative.clone());
        for (i, k) in kb.iter().enumerate() {
            b.add_term(i, k.clone());
        }
        lmi.add_block_split(b, &self.quotient.system().ambient().amplified(self.level));
        lmi
    }
}

/// Whether the coset dominates `δ·1` for some `δ > 0`, i.e. some
/// `representative + j − δ·1 ⪰ 0` with `j` in the kernel. The kernel is
/// assumed to be a null subspace; `QuotientSystem::new` enforces this.
pub fn quotient_strict_member(e: &QuotientElement, tol: f64) -> Result<FeasibilityVerdict> {
    sdp::solve(&e.lmi(), tol)
}

/// Strict membership of the coset of `representative + eps·1`.
pub fn quotient_relaxed_member(e: &QuotientElement, eps: f64, tol: f64) -> Result<FeasibilityVerdict> {
    quotient_strict_member(&e.shifted(eps), tol)
}

/// The kernel element of a feasible verdict.
pub fn kernel_witness(e: &QuotientElement, v: &FeasibilityVerdict) -> Result<Herm> {
    let w = v.witness.as_ref().ok_or(Error::NothingToReplay)?;
    let kb = e.kernel_basis();
    Ok(kb.iter().zip(&w.x).fold(Herm::zeros(e.representative.dim()), |acc, (k, c)| acc.add_scaled(*c, k)))
}

/// `(⊕^{n+k} S) / {(s, …, s, −s, …, −s)}` with `n` plus and `k` minus slots.
/// A tuple is strictly positive here iff `−s_1..−s_n < a < s_{n+1}..s_{n+k}`
/// for some `a` in `S`. The kernel is null by construction: `(s, −s)` positive
/// forces `s = 0`.
pub fn interpolation_quotient(s: &OperatorSystem, n: usize, k: usize) -> Result<QuotientSystem> {
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument("both sides of the tuple need at least one slot".into()));
    }
    let copies: Vec<&OperatorSystem> = vec![s; n + k];
    let sum = OperatorSystem::direct_sum(&copies, format!("{}^{}", s.label(), n + k))?;
    let kernel = s
        .basis()
        .iter()
        .map(|b| {
            let parts: Vec<Herm> = (0..n + k).map(|i| if i < n { b.clone() } else { b.neg() }).collect();
            Herm::direct_sum(&parts).expect("nonempty")
        })
        .collect();
    QuotientSystem::new_unchecked(Arc::new(sum), kernel)
}

/// Coset of the tuple `(s_1, …, s_{n+k})` in an interpolation quotient,
/// amplified entries allowed at `level`.
pub fn tuple_element(q: Arc<QuotientSystem>, tuple: &[Herm], level: usize) -> Result<QuotientElement> {
    let rep = Herm::direct_sum(tuple)?;
    QuotientElement::new(q, rep, level)
}

/// Places a level-`m` element of slot `k` into the direct sum of `parts`.
pub fn embed_amplified(parts: &[&OperatorSystem], k: usize, x: &Herm) -> Herm {
    let m = x.dim() / parts[k].ambient_dim();
    if m == 1 {
        return embed(parts, k, x);
    }
    let pieces: Vec<Herm> = parts
        .iter()
        .enumerate()
        .map(|(j, p)| if j == k { x.clone() } else { Herm::zeros(p.ambient_dim() * m) })
        .collect();
    Herm::direct_sum(&pieces).expect("nonempty")
}

/// Outcome of the bounded-rank test, recording the caps it used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundedRankReport {
    pub accepted: bool,
    pub p_max: usize,
    pub q_max: usize,
    pub eps: f64,
    /// Size of the compression that accepted.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p_used: Option<usize>,
    /// Per-size solver outcomes, in order of `p`.
    pub attempts: Vec<Status>,
}

fn rank_one(v: &[Complex<f64>]) -> Herm {
    Herm::from_fn(v.len(), |i, j| v[i] * v[j].conj()).expect("rank one is Hermitian")
}

/// `e_a e_a*`, `(e_a + e_b)(…)*` and `(e_a + i e_b)(…)*`.
fn rank_one_family(r: usize) -> Vec<Herm> {
    let one = Complex::new(1.0, 0.0);
    let mut out = Vec::new();
    for a in 0..r {
        let mut v = vec![Complex::new(0.0, 0.0); r];
        v[a] = one;
        out.push(rank_one(&v));
        for b in a + 1..r {
            let mut w = v.clone();
            w[b] = one;
            out.push(rank_one(&w));
            w[b] = Complex::new(0.0, 1.0);
            out.push(rank_one(&w));
        }
    }
    out
}

/// Positive elements of `M_p(M_n(T))`, ordered (p, right ambient, level).
fn dictionary(x: &TensorElement, p: usize) -> Vec<Herm> {
    let n = x.level;
    let dt = x.right.ambient_dim();
    let mut out = vec![Herm::identity(p * dt * n)];
    let psd_right: Vec<&Herm> = x.right.basis().iter().filter(|t| t.min_eig() >= -1e-12).collect();
    let gp = rank_one_family(p);
    let gn = rank_one_family(n);
    for t in &psd_right {
        for g in &gp {
            for h in &gn {
                out.push(g.kron(t).kron(h));
            }
        }
    }
    for s in x.right_slices() {
        let scale = s.max_abs();
        if scale == 0.0 {
            continue;
        }
        let s = s.scale(1.0 / scale);
        let lo = s.min_eig();
        let hi = s.max_eig();
        let mut cands = Vec::new();
        if lo >= -1e-12 {
            cands.push(s.clone());
        } else if hi <= 1e-12 {
            cands.push(s.neg());
        } else {
            cands.push(s.shift(-lo));
            cands.push(s.neg().shift(hi));
        }
        for c in cands {
            for g in &gp {
                out.push(g.kron(&c));
            }
        }
    }
    out
}

/// `x + eps·1 = Σ_R Σ_ab (P_R)_ab ⊗ R_ab` with every `P_R ∈ M_p(S)^+`.
fn compression_problem(x: &TensorElement, p: usize, eps: f64, tol: f64) -> Option<LmiProblem> {
    let ds = x.left.ambient_dim();
    let target = x.assemble().shift(eps);
    let size = target.dim();
    let blk = size / ds;
    let hs = hermitian_basis::<f64>(p);
    let shape = x.left.ambient().amplified(p);
    let mut lmi = LmiProblem::new(0, Strictness::Closed);
    let mut contributions: Vec<(usize, Vec<f64>)> = Vec::new();
    for r in dictionary(x, p) {
        // Σ_ab h_ab R_ab for each Hermitian unit h
        let folded: Vec<Herm> = hs
            .iter()
            .map(|h| {
                Herm::from_fn(blk, |u, v| {
                    let mut z = Complex::new(0.0, 0.0);
                    for a in 0..p {
                        for b in 0..p {
                            z += h.get(a, b) * r.get(a * blk + u, b * blk + v);
                        }
                    }
                    z
                })
                .expect("folding a positive block matrix by a Hermitian matrix stays Hermitian")
            })
            .collect();
        let mut psd = LmiBlock::with_identity_margin(Herm::zeros(ds * p));
        for b in x.left.basis() {
            for (h, f) in hs.iter().zip(&folded) {
                let var = lmi.add_var();
                psd.add_term(var, b.kron(h));
                contributions.push((var, b.kron(f).to_coords()));
            }
        }
        lmi.add_block_split(psd, &shape);
    }
    let rhs = target.to_coords();
    for (e, target_e) in rhs.iter().enumerate() {
        let row: Vec<(usize, f64)> =
            contributions.iter().filter(|(_, c)| c[e] != 0.0).map(|(v, c)| (*v, c[e])).collect();
        if row.is_empty() {
            if target_e.abs() > tol {
                return None;
            }
            continue;
        }
        lmi.add_eq(row, *target_e);
    }
    Some(lmi)
}

/// Sound inner test for the maximal tensor cone. Accepts when, for some
/// `p ≤ p_max` with `p·n ≤ q_max`, `x + eps·(1⊗1)` is a sum of compressions
/// `α(P ⊗ R)α*` with `P ∈ M_p(S)^+` free and `R` from a fixed dictionary of
/// positive elements of `M_{p·n}(T)`. Sizes are tried in increasing order, so
/// acceptance at `p` persists at every larger cap. Rejection says nothing
/// about the true cone.
pub fn max_bounded_rank_member(
    x: &TensorElement,
    p_max: usize,
    q_max: usize,
    eps: f64,
    tol: f64,
) -> Result<BoundedRankReport> {
    if p_max == 0 || q_max == 0 {
        return Err(Error::InvalidArgument("rank caps must be positive".into()));
    }
    let mut report = BoundedRankReport { accepted: false, p_max, q_max, eps, p_used: None, attempts: Vec::new() };
    for p in (1..=p_max).take_while(|p| p * x.level <= q_max) {
        let status = match compression_problem(x, p, eps, tol) {
            Some(lmi) => sdp::solve(&lmi, tol)?.status,
            None => Status::Infeasible,
        };
        report.attempts.push(status);
        if status == Status::Feasible {
            report.accepted = true;
            report.p_used = Some(p);
            break;
        }
    }
    Ok(report)
}

/// The pullback `V_{n,k}` of `k` copies of `ℓ∞_n` over normalized traces,
/// paired with the pushout `⊔^k ℓ∞_n` through `⟨t + J, v⟩ = Σ_x t_x v_x`.
///
/// A map `f: V_{n,k} → M_m` corresponds to the coset of any tuple `(t_x)`
/// with `f(v) = Σ_x v_x t_x`; the tuple is unique up to the pushout kernel.
#[derive(Debug, Clone)]
pub struct DualityPairing {
    n: usize,
    k: usize,
    pullback: Arc<OperatorSystem>,
    pushout: Arc<QuotientSystem>,
}

impl DualityPairing {
    pub fn new(n: usize, k: usize) -> Result<Self> {
        if n == 0 || k == 0 {
            return Err(Error::InvalidArgument("pairing needs n, k ≥ 1".into()));
        }
        let linf = Arc::new(make_linf(n)?);
        let parts: Vec<_> = (0..k).map(|_| (linf.clone(), StateFunctional::normalized_trace(linf.clone()))).collect();
        let (v, _) = pullback(&parts)?;
        let v = v.with_label(format!("V_{{{n},{k}}}"));
        let copies: Vec<&OperatorSystem> = vec![linf.as_ref(); k];
        let np = pushout_quotient(&copies)?;
        Ok(Self { n, k, pullback: Arc::new(v), pushout: Arc::new(np) })
    }

    pub fn nk(&self) -> (usize, usize) {
        (self.n, self.k)
    }

    pub fn pullback(&self) -> &Arc<OperatorSystem> {
        &self.pullback
    }

    pub fn pushout(&self) -> &Arc<QuotientSystem> {
        &self.pushout
    }

    /// `v ↦ Σ_x v_x t_x` for a tuple of `n·k` matrices of one size.
    pub fn map_of(&self, tuple: &[Herm]) -> Result<CpMap> {
        let nk = self.n * self.k;
        if tuple.len() != nk {
            return Err(Error::DimensionMismatch { expected: nk, found: tuple.len() });
        }
        let m = tuple[0].dim();
        CpMap::from_fn(self.pullback.clone(), m, |b| {
            b.diagonal().iter().zip(tuple).fold(Herm::zeros(m), |acc, (w, t)| acc.add_scaled(*w, t))
        })
    }

    /// A representative tuple of the coset paired with `f`, solved exactly.
    pub fn tuple_of(&self, f: &CpMap) -> Result<Vec<Herm>> {
        if **f.domain() != *self.pullback {
            return Err(Error::InvalidArgument("map is not defined on the pullback".into()));
        }
        let nk = self.n * self.k;
        let m = f.codomain_dim();
        let a: Vec<Vec<Q>> =
            self.pullback.basis().iter().map(|b| b.diagonal().into_iter().map(Q::from_f64_exact).collect()).collect();
        let mut tuple = vec![CMatrix::<f64>::zeros(m, m); nk];
        for p in 0..m {
            for q in p..m {
                let re: Vec<Q> = f.values().iter().map(|v| Q::from_f64_exact(v.get(p, q).re)).collect();
                let im: Vec<Q> = f.values().iter().map(|v| Q::from_f64_exact(v.get(p, q).im)).collect();
                let unsolvable = || Error::NotInSystem("map values are not a pairing image".into());
                let xr = exact::solve(&a, &re, nk).ok_or_else(unsolvable)?;
                let xi = exact::solve(&a, &im, nk).ok_or_else(unsolvable)?;
                for x in 0..nk {
                    let z = Complex::new(xr[x].to_f64_lossy(), xi[x].to_f64_lossy());
                    tuple[x][(p, q)] = z;
                    tuple[x][(q, p)] = z.conj();
                }
            }
        }
        tuple.into_iter().map(Herm::new).collect()
    }

    /// The level-`m` pushout element paired with `f`.
    pub fn element_of(&self, f: &CpMap) -> Result<QuotientElement> {
        let tuple = self.tuple_of(f)?;
        QuotientElement::new(self.pushout.clone(), Herm::direct_sum(&tuple)?, f.codomain_dim())
    }
}
