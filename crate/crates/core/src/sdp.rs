//! Margin-maximizing feasibility for affine Hermitian block constraints.
//!
//! A problem asks for real `x` and a margin `δ` with
//! `C_b + Σ x_i A_bi − δ U_b ⪰ 0` for every block `b` and `E x = f`.
//! When every block is diagonal the question is a linear program and is
//! decided exactly over the rationals, with a Farkas certificate on the
//! infeasible side. Otherwise a log-det barrier path maximizes `δ`.

use nalgebra::{DMatrix, DVector};
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::linalg::{real_null_space, BlockShape, CMatrix, HermMatrix};
use crate::lp::{self, LpOutcome, StandardLp};
use crate::scalar::{serde_rational, Field};

type Herm = HermMatrix<f64>;
type Q = BigRational;

/// Whether the margin must be strictly positive or only nonnegative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strictness {
    /// Feasible iff some `δ > 0` works.
    #[default]
    Strict,
    /// Feasible iff `δ = 0` works (closed cone membership).
    Closed,
}

/// One affine Hermitian constraint `constant + Σ x_i coeff_i − δ margin_unit ⪰ 0`.
/// Coefficients are stored sparsely by variable index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmiBlock {
    pub constant: Herm,
    pub coeffs: Vec<(usize, Herm)>,
    pub margin_unit: Herm,
}

impl LmiBlock {
    pub fn new(constant: Herm, margin_unit: Herm) -> Self {
        Self { constant, coeffs: Vec::new(), margin_unit }
    }

    /// Block with the identity as margin unit.
    pub fn with_identity_margin(constant: Herm) -> Self {
        let n = constant.dim();
        Self::new(constant, Herm::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.constant.dim()
    }

    /// Adds `coeff` to the coefficient of variable `var`.
    pub fn add_term(&mut self, var: usize, coeff: Herm) {
        match self.coeffs.iter_mut().find(|(i, _)| *i == var) {
            Some((_, c)) => *c = c.add(&coeff),
            None => self.coeffs.push((var, coeff)),
        }
    }

    /// `constant + Σ x_i coeff_i`.
    pub fn evaluate(&self, x: &[f64]) -> Herm {
        self.coeffs.iter().fold(self.constant.clone(), |acc, (i, a)| acc.add_scaled(x[*i], a))
    }

    fn is_diagonal(&self) -> bool {
        self.constant.is_diagonal()
            && self.margin_unit.is_diagonal()
            && self.coeffs.iter().all(|(_, a)| a.is_diagonal())
    }

    /// Splits a block living in a block-diagonal ambient into its diagonal
    /// blocks, dropping coefficients that vanish on a piece.
    pub fn split(&self, shape: &BlockShape) -> Vec<LmiBlock> {
        let constants = shape.split(&self.constant);
        let units = shape.split(&self.margin_unit);
        let coeffs: Vec<(usize, Vec<Herm>)> = self.coeffs.iter().map(|(i, a)| (*i, shape.split(a))).collect();
        constants
            .into_iter()
            .zip(units)
            .enumerate()
            .map(|(k, (constant, margin_unit))| LmiBlock {
                constant,
                margin_unit,
                coeffs: coeffs
                    .iter()
                    .filter(|(_, parts)| parts[k].max_abs() > 0.0)
                    .map(|(i, parts)| (*i, parts[k].clone()))
                    .collect(),
            })
            .collect()
    }
}

/// Linear equality `Σ coeff · x_var = rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearEq {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub blocks: Vec<LmiBlock>,
    #[serde(default)]
    pub linear_eqs: Vec<LinearEq>,
    #[serde(default)]
    pub strictness: Strictness,
}

impl LmiProblem {
    pub fn new(num_vars: usize, strictness: Strictness) -> Self {
        Self { num_vars, blocks: Vec::new(), linear_eqs: Vec::new(), strictness }
    }

    /// Appends a fresh variable and returns its index.
    pub fn add_var(&mut self) -> usize {
        self.num_vars += 1;
        self.num_vars - 1
    }

    pub fn add_block(&mut self, b: LmiBlock) {
        self.blocks.push(b);
    }

    /// Adds `b` split along `shape`.
    pub fn add_block_split(&mut self, b: LmiBlock, shape: &BlockShape) {
        self.blocks.extend(b.split(shape));
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.linear_eqs.push(LinearEq { terms, rhs });
    }

    pub fn validate(&self) -> Result<()> {
        for (k, b) in self.blocks.iter().enumerate() {
            let n = b.dim();
            if b.margin_unit.dim() != n {
                return Err(Error::DimensionMismatch { expected: n, found: b.margin_unit.dim() });
            }
            let min = b.margin_unit.min_eig();
            if !(min > 0.0) {
                return Err(Error::MarginNotPositive { block: k, min_eig: min });
            }
            for (i, a) in &b.coeffs {
                if *i >= self.num_vars {
                    return Err(Error::InvalidArgument(format!("block {k} references variable {i} of {}", self.num_vars)));
                }
                if a.dim() != n {
                    return Err(Error::DimensionMismatch { expected: n, found: a.dim() });
                }
            }
        }
        for (k, e) in self.linear_eqs.iter().enumerate() {
            if let Some((i, _)) = e.terms.iter().find(|(i, _)| *i >= self.num_vars) {
                return Err(Error::InvalidArgument(format!("equation {k} references variable {i} of {}", self.num_vars)));
            }
            if !e.rhs.is_finite() || e.terms.iter().any(|(_, c)| !c.is_finite()) {
                return Err(Error::InvalidArgument(format!("equation {k} has a non-finite coefficient")));
            }
        }
        Ok(())
    }

    pub fn is_diagonal(&self) -> bool {
        self.blocks.iter().all(LmiBlock::is_diagonal)
    }

    /// Dense equality matrix and right-hand side.
    fn eq_dense(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut a = vec![vec![0.0; self.num_vars]; self.linear_eqs.len()];
        let mut f = Vec::with_capacity(self.linear_eqs.len());
        for (r, e) in self.linear_eqs.iter().enumerate() {
            for (i, c) in &e.terms {
                a[r][*i] += c;
            }
            f.push(e.rhs);
        }
        (a, f)
    }

    /// Smallest eigenvalue of `F_b(x) − δ U_b` over all blocks, each
    /// measured relative to `max(1, ‖U_b‖)`.
    pub fn worst_block(&self, x: &[f64], delta: f64) -> f64 {
        self.blocks
            .iter()
            .map(|b| b.evaluate(x).add_scaled(-delta, &b.margin_unit).min_eig() / b.margin_unit.op_norm().max(1.0))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Feasible,
    Infeasible,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    ExactLp,
    Barrier,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactWitness {
    #[serde(with = "serde_rational::vec")]
    pub x: Vec<Q>,
    #[serde(with = "serde_rational")]
    pub delta: Q,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub x: Vec<f64>,
    pub delta: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact: Option<ExactWitness>,
}

/// Nonnegative weights on the diagonal entries of each block together with
/// free weights on the equalities. Replaying the combination eliminates
/// every variable and leaves `δ · Σ y·u ≤ Σ y·c − w·f`, which contradicts
/// the required margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate {
    #[serde(with = "serde_rational::vec_vec")]
    pub block_multipliers: Vec<Vec<Q>>,
    #[serde(with = "serde_rational::vec")]
    pub eq_multipliers: Vec<Q>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub status: Status,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub certificate: Option<FarkasCertificate>,
    /// Largest margin reached; `null` in JSON when nothing was reached.
    #[serde(with = "margin_or_null")]
    pub best_delta: f64,
    /// Upper bound on the optimal margin, when one is known.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_upper: Option<f64>,
    #[serde(skip_serializing_if = "String::is_empty", default)]
    pub note: String,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

mod margin_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_finite() {
            s.serialize_f64(*x)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
    }
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        self.status == Status::Feasible
    }

    pub fn is_infeasible(&self) -> bool {
        self.status == Status::Infeasible
    }

    fn infeasible(method: Method, note: impl Into<String>) -> Self {
        Self {
            status: Status::Infeasible,
            method,
            witness: None,
            certificate: None,
            best_delta: f64::NEG_INFINITY,
            delta_upper: None,
            note: note.into(),
            warnings: Vec::new(),
        }
    }
}

/// Decides `p`, using the exact path whenever every block is diagonal.
pub fn solve(p: &LmiProblem, tol: f64) -> Result<FeasibilityVerdict> {
    p.validate()?;
    if p.is_diagonal() {
        solve_exact_lp(p)
    } else {
        solve_barrier(p, tol)
    }
}

// ---------------------------------------------------------------------------
// exact path

struct DiagRows {
    a: Vec<Vec<Q>>,
    c: Vec<Q>,
    u: Vec<Q>,
    sizes: Vec<usize>,
}

fn diag_rows(p: &LmiProblem) -> Result<DiagRows> {
    let mut rows = DiagRows { a: Vec::new(), c: Vec::new(), u: Vec::new(), sizes: Vec::new() };
    for (k, b) in p.blocks.iter().enumerate() {
        let c = b.constant.real_diagonal().ok_or(Error::NotDiagonal(k))?;
        let u = b.margin_unit.real_diagonal().ok_or(Error::NotDiagonal(k))?;
        let mut a = vec![vec![Q::zero(); p.num_vars]; b.dim()];
        for (i, m) in &b.coeffs {
            let d = m.real_diagonal().ok_or(Error::NotDiagonal(k))?;
            for (r, v) in d.into_iter().enumerate() {
                a[r][*i] = a[r][*i].clone() + Q::from_f64_exact(v);
            }
        }
        rows.a.extend(a);
        rows.c.extend(c.into_iter().map(Q::from_f64_exact));
        rows.u.extend(u.into_iter().map(Q::from_f64_exact));
        rows.sizes.push(b.dim());
    }
    Ok(rows)
}

fn exact_eqs(p: &LmiProblem) -> (Vec<Vec<Q>>, Vec<Q>) {
    let mut e = vec![vec![Q::zero(); p.num_vars]; p.linear_eqs.len()];
    let mut f = Vec::with_capacity(p.linear_eqs.len());
    for (r, eq) in p.linear_eqs.iter().enumerate() {
        for (i, c) in &eq.terms {
            e[r][*i] = e[r][*i].clone() + Q::from_f64_exact(*c);
        }
        f.push(Q::from_f64_exact(eq.rhs));
    }
    (e, f)
}

fn split_by(sizes: &[usize], v: Vec<Q>) -> Vec<Vec<Q>> {
    let mut it = v.into_iter();
    sizes.iter().map(|&s| it.by_ref().take(s).collect()).collect()
}

/// Exact rational decision for all-diagonal problems. Never `Unknown`.
pub fn solve_exact_lp(p: &LmiProblem) -> Result<FeasibilityVerdict> {
    p.validate()?;
    let rows = diag_rows(p)?;
    let (e, f) = exact_eqs(p);
    let n = p.num_vars;
    let m = rows.a.len();
    let q = e.len();

    let cap = Q::from_f64_exact(1.0) + rows.c.iter().map(|c| c.abs()).fold(Q::zero(), |a, b| if b > a { b } else { a });

    // columns: x⁺ (n) x⁻ (n) δ⁺ δ⁻ slacks (m) cap slack
    let ncols = 2 * n + 2 + m + 1;
    let mut a = Vec::with_capacity(m + q + 1);
    let mut b = Vec::with_capacity(m + q + 1);
    for k in 0..m {
        let mut row = vec![Q::zero(); ncols];
        for i in 0..n {
            row[i] = rows.a[k][i].clone();
            row[n + i] = -rows.a[k][i].clone();
        }
        row[2 * n] = -rows.u[k].clone();
        row[2 * n + 1] = rows.u[k].clone();
        row[2 * n + 2 + k] = -Q::from_f64_exact(1.0);
        a.push(row);
        b.push(-rows.c[k].clone());
    }
    for r in 0..q {
        let mut row = vec![Q::zero(); ncols];
        for i in 0..n {
            row[i] = e[r][i].clone();
            row[n + i] = -e[r][i].clone();
        }
        a.push(row);
        b.push(f[r].clone());
    }
    let mut row = vec![Q::zero(); ncols];
    row[2 * n] = Q::from_f64_exact(1.0);
    row[2 * n + 1] = -Q::from_f64_exact(1.0);
    row[ncols - 1] = Q::from_f64_exact(1.0);
    a.push(row);
    b.push(cap.clone());
    let mut c = vec![Q::zero(); ncols];
    c[2 * n] = Q::from_f64_exact(1.0);
    c[2 * n + 1] = -Q::from_f64_exact(1.0);

    match lp::solve(&StandardLp { a, b, c }) {
        LpOutcome::Optimal { x: sol, value } => {
            let x: Vec<Q> = (0..n).map(|i| sol[i].clone() - sol[n + i].clone()).collect();
            let delta = value;
            let feasible = match p.strictness {
                Strictness::Strict => delta.is_positive(),
                Strictness::Closed => !delta.is_negative(),
            };
            if feasible {
                let xf: Vec<f64> = x.iter().map(Field::to_f64_lossy).collect();
                return Ok(FeasibilityVerdict {
                    status: Status::Feasible,
                    method: Method::ExactLp,
                    best_delta: delta.to_f64_lossy(),
                    delta_upper: (delta < cap).then(|| delta.to_f64_lossy()),
                    witness: Some(Witness { x: xf, delta: delta.to_f64_lossy(), exact: Some(ExactWitness { x, delta }) }),
                    certificate: None,
                    note: String::new(),
                    warnings: Vec::new(),
                });
            }
            let cert = dual_certificate(&rows, &e, &f);
            Ok(FeasibilityVerdict {
                status: Status::Infeasible,
                method: Method::ExactLp,
                witness: None,
                best_delta: delta.to_f64_lossy(),
                delta_upper: Some(delta.to_f64_lossy()),
                certificate: Some(cert),
                note: "optimal margin is not admissible".into(),
                warnings: Vec::new(),
            })
        }
        LpOutcome::Infeasible => {
            // only the equalities can be inconsistent: pick w with Eᵀw = 0, f·w = 1
            let mut sys: Vec<Vec<Q>> = (0..n).map(|i| (0..q).map(|r| e[r][i].clone()).collect()).collect();
            sys.push(f.clone());
            let mut rhs = vec![Q::zero(); n];
            rhs.push(Q::from_f64_exact(1.0));
            let w = exact::solve(&sys, &rhs, q).expect("inconsistent equalities admit a separating functional");
            let mut v = FeasibilityVerdict::infeasible(Method::ExactLp, "linear equalities are inconsistent");
            v.certificate = Some(FarkasCertificate { block_multipliers: split_by(&rows.sizes, vec![Q::zero(); m]), eq_multipliers: w });
            Ok(v)
        }
        LpOutcome::Unbounded => unreachable!("margin is capped"),
    }
}

/// Optimal dual of `max δ`: `y ≥ 0`, `Σ y_k a_k + Eᵀ w = 0`, `Σ y u = 1`,
/// minimizing `Σ y c − w·f`.
fn dual_certificate(rows: &DiagRows, e: &[Vec<Q>], f: &[Q]) -> FarkasCertificate {
    let m = rows.a.len();
    let n = rows.a.first().map_or_else(|| e.first().map_or(0, Vec::len), Vec::len);
    let q = e.len();
    let ncols = m + 2 * q;
    let mut a = Vec::with_capacity(n + 1);
    for i in 0..n {
        let mut row = vec![Q::zero(); ncols];
        for k in 0..m {
            row[k] = rows.a[k][i].clone();
        }
        for r in 0..q {
            row[m + r] = e[r][i].clone();
            row[m + q + r] = -e[r][i].clone();
        }
        a.push(row);
    }
    let mut row = vec![Q::zero(); ncols];
    row[..m].clone_from_slice(&rows.u);
    a.push(row);
    let mut b = vec![Q::zero(); n];
    b.push(Q::from_f64_exact(1.0));
    let mut c = vec![Q::zero(); ncols];
    for k in 0..m {
        c[k] = -rows.c[k].clone();
    }
    for r in 0..q {
        c[m + r] = f[r].clone();
        c[m + q + r] = -f[r].clone();
    }
    match lp::solve(&StandardLp { a, b, c }) {
        LpOutcome::Optimal { x, .. } => FarkasCertificate {
            block_multipliers: split_by(&rows.sizes, x[..m].to_vec()),
            eq_multipliers: (0..q).map(|r| x[m + r].clone() - x[m + q + r].clone()).collect(),
        },
        other => unreachable!("dual of a bounded feasible margin program: {other:?}"),
    }
}

/// Replays a certificate exactly. `Ok(true)` when it proves that no
/// admissible margin exists.
fn replay_certificate(p: &LmiProblem, cert: &FarkasCertificate) -> Result<bool> {
    let rows = diag_rows(p)?;
    let (e, f) = exact_eqs(p);
    if cert.block_multipliers.len() != rows.sizes.len()
        || cert.block_multipliers.iter().zip(&rows.sizes).any(|(y, s)| y.len() != *s)
        || cert.eq_multipliers.len() != e.len()
    {
        return Ok(false);
    }
    let y: Vec<Q> = cert.block_multipliers.iter().flatten().cloned().collect();
    if y.iter().any(Signed::is_negative) {
        return Ok(false);
    }
    let w = &cert.eq_multipliers;
    for i in 0..p.num_vars {
        let mut s = Q::zero();
        for (k, yk) in y.iter().enumerate() {
            s += yk.clone() * rows.a[k][i].clone();
        }
        for (r, wr) in w.iter().enumerate() {
            s += wr.clone() * e[r][i].clone();
        }
        if !s.is_zero() {
            return Ok(false);
        }
    }
    let yu = y.iter().zip(&rows.u).fold(Q::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
    let bound = y.iter().zip(&rows.c).fold(Q::zero(), |acc, (a, b)| acc + a.clone() * b.clone())
        - w.iter().zip(&f).fold(Q::zero(), |acc, (a, b)| acc + a.clone() * b.clone());
    Ok(match p.strictness {
        Strictness::Closed => bound.is_negative(),
        Strictness::Strict => bound.is_negative() || (yu.is_positive() && !bound.is_positive()),
    })
}

fn replay_exact_witness(p: &LmiProblem, w: &ExactWitness) -> Result<bool> {
    if w.x.len() != p.num_vars {
        return Ok(false);
    }
    let rows = diag_rows(p)?;
    let (e, f) = exact_eqs(p);
    for k in 0..rows.a.len() {
        let v = rows.a[k].iter().zip(&w.x).fold(rows.c[k].clone(), |acc, (a, x)| acc + a.clone() * x.clone())
            - w.delta.clone() * rows.u[k].clone();
        if v.is_negative() {
            return Ok(false);
        }
    }
    for (r, fr) in f.iter().enumerate() {
        let v = e[r].iter().zip(&w.x).fold(Q::zero(), |acc, (a, x)| acc + a.clone() * x.clone());
        if v != *fr {
            return Ok(false);
        }
    }
    Ok(match p.strictness {
        Strictness::Strict => w.delta.is_positive(),
        Strictness::Closed => !w.delta.is_negative(),
    })
}

/// Re-verifies a verdict against the problem alone. A witness must satisfy
/// every block within `tol` and every equality within `tol·(1+|rhs|)`, with
/// an admissible margin. Exact witnesses and certificates are checked in
/// rational arithmetic with zero tolerance instead; their float copies are
/// only rounded.
pub fn replay_check(p: &LmiProblem, v: &FeasibilityVerdict, tol: f64) -> Result<bool> {
    p.validate()?;
    if v.witness.is_none() && v.certificate.is_none() {
        return Err(Error::NothingToReplay);
    }
    if let Some(w) = v.witness.as_ref().filter(|w| w.exact.is_none()) {
        if w.x.len() != p.num_vars || !w.delta.is_finite() {
            return Ok(false);
        }
        let ok_margin = match p.strictness {
            Strictness::Strict => w.delta > 0.0,
            Strictness::Closed => w.delta >= -tol,
        };
        if !ok_margin || p.worst_block(&w.x, w.delta) < -tol {
            return Ok(false);
        }
        for eq in &p.linear_eqs {
            let lhs: f64 = eq.terms.iter().map(|(i, c)| c * w.x[*i]).sum();
            if (lhs - eq.rhs).abs() > tol * (1.0 + eq.rhs.abs()) {
                return Ok(false);
            }
        }
    }
    if let Some(ex) = v.witness.as_ref().and_then(|w| w.exact.as_ref()) {
        if !replay_exact_witness(p, ex)? {
            return Ok(false);
        }
    }
    if let Some(c) = &v.certificate {
        if !replay_certificate(p, c)? {
            return Ok(false);
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// barrier path

struct Reduced {
    x0: DVector<f64>,
    basis: DMatrix<f64>,
    blocks: Vec<RBlock>,
}

struct RBlock {
    c: CMatrix<f64>,
    dirs: Vec<CMatrix<f64>>,
    u: CMatrix<f64>,
}

impl Reduced {
    fn nz(&self) -> usize {
        self.basis.ncols()
    }

    fn x_of(&self, z: &[f64]) -> Vec<f64> {
        (&self.x0 + &self.basis * DVector::from_column_slice(z)).iter().copied().collect()
    }

    fn block_at(&self, b: &RBlock, v: &[f64]) -> CMatrix<f64> {
        let nz = self.nz();
        let mut g = &b.c - b.u.map(|z| z * v[nz]);
        for (j, d) in b.dirs.iter().enumerate() {
            if v[j] != 0.0 {
                g += d.map(|z| z * v[j]);
            }
        }
        g
    }
}

/// Eliminates the equalities (`x = x0 + N z`) and drops directions that do
/// not move any block; the kept directions are whitened.
fn reduce(p: &LmiProblem) -> std::result::Result<Reduced, String> {
    let n = p.num_vars;
    let (e, f) = p.eq_dense();
    let q = e.len();
    let (x0, null) = if q == 0 {
        (DVector::zeros(n), DMatrix::identity(n, n))
    } else {
        let mut em = DMatrix::zeros(q, n);
        for r in 0..q {
            for i in 0..n {
                em[(r, i)] = e[r][i];
            }
        }
        let fv = DVector::from_vec(f);
        let svd = em.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let cut = 1e-10 * smax.max(1e-300);
        let x0 = svd.solve(&fv, cut).map_err(|e| e.to_string())?;
        let resid = (&em * &x0 - &fv).norm();
        if resid > 1e-8 * (1.0 + fv.norm()) {
            return Err(format!("linear equalities are inconsistent (residual {resid:.3e})"));
        }
        let null = real_null_space(&em, 1e-10);
        (x0, null)
    };

    // blocks at x0 and projected directions
    let mut pre: Vec<(CMatrix<f64>, Vec<CMatrix<f64>>, CMatrix<f64>)> = Vec::new();
    for b in &p.blocks {
        let d = b.dim();
        let mut c = b.constant.as_matrix().clone();
        for (i, a) in &b.coeffs {
            if x0[*i] != 0.0 {
                c += a.as_matrix().map(|z| z * x0[*i]);
            }
        }
        let mut dirs = vec![CMatrix::zeros(d, d); null.ncols()];
        for (i, a) in &b.coeffs {
            for (j, dir) in dirs.iter_mut().enumerate() {
                let w = null[(*i, j)];
                if w != 0.0 {
                    *dir += a.as_matrix().map(|z| z * w);
                }
            }
        }
        pre.push((c, dirs, b.margin_unit.as_matrix().clone()));
    }

    // effect matrix: one column per direction, stacked (re, im) of every block
    let p0 = null.ncols();
    let height: usize = pre.iter().map(|(c, _, _)| 2 * c.len()).sum();
    let mut w = DMatrix::zeros(height, p0);
    for j in 0..p0 {
        let mut r = 0;
        for (_, dirs, _) in &pre {
            for z in dirs[j].iter() {
                w[(r, j)] = z.re;
                w[(r + 1, j)] = z.im;
                r += 2;
            }
        }
    }
    let (basis, whiten) = if p0 == 0 || height == 0 {
        (DMatrix::zeros(n, 0), DMatrix::zeros(0, 0))
    } else {
        let svd = w.svd(false, true);
        let vt = svd.v_t.expect("requested");
        let smax = svd.singular_values.max();
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&k| smax > 0.0 && svd.singular_values[k] > 1e-10 * smax)
            .collect();
        let mut whiten = DMatrix::zeros(p0, keep.len());
        for (c, &k) in keep.iter().enumerate() {
            for i in 0..p0 {
                whiten[(i, c)] = vt[(k, i)] / svd.singular_values[k];
            }
        }
        (&null * &whiten, whiten)
    };
    let blocks = pre
        .into_iter()
        .map(|(c, dirs, u)| {
            let d = c.nrows();
            let new_dirs = (0..whiten.ncols())
                .map(|k| {
                    let mut acc = CMatrix::zeros(d, d);
                    for (j, dir) in dirs.iter().enumerate() {
                        let s = whiten[(j, k)];
                        if s != 0.0 {
                            acc += dir.map(|z| z * s);
                        }
                    }
                    acc
                })
                .collect();
            RBlock { c, dirs: new_dirs, u }
        })
        .collect();
    Ok(Reduced { x0, basis, blocks })
}

fn herm_min_eig(m: &CMatrix<f64>) -> f64 {
    Herm::symmetrize(m.clone()).min_eig()
}

/// `log det` of a Hermitian matrix, `None` unless positive definite.
fn logdet(m: &CMatrix<f64>) -> Option<f64> {
    let ch = m.clone().cholesky()?;
    let l = ch.l_dirty();
    let mut s = 0.0;
    for i in 0..m.nrows() {
        let d = l[(i, i)].re;
        if !(d > 0.0) {
            return None;
        }
        s += d.ln();
    }
    Some(2.0 * s)
}

struct Barrier<'a> {
    red: &'a Reduced,
    cap: f64,
    radius2: f64,
}

impl Barrier<'_> {
    fn value(&self, t: f64, v: &[f64]) -> Option<f64> {
        let nz = self.red.nz();
        let delta = v[nz];
        let slack_cap = self.cap - delta;
        let ball = self.radius2 - v[..nz].iter().map(|z| z * z).sum::<f64>();
        if !(slack_cap > 0.0) || !(ball > 0.0) {
            return None;
        }
        let mut f = -t * delta - slack_cap.ln() - ball.ln();
        for b in &self.red.blocks {
            f -= logdet(&self.red.block_at(b, v))?;
        }
        Some(f)
    }

    fn grad_hess(&self, t: f64, v: &[f64]) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let nz = self.red.nz();
        let dim = nz + 1;
        let mut g = DVector::zeros(dim);
        let mut h = DMatrix::zeros(dim, dim);
        g[nz] = -t;
        for b in &self.red.blocks {
            let gm = self.red.block_at(b, v);
            let d = gm.nrows();
            let inv = gm.cholesky()?.inverse();
            let mut left = CMatrix::zeros(d * d, dim);
            let mut right = CMatrix::zeros(d * d, dim);
            let neg_u = b.u.map(|z| -z);
            for j in 0..dim {
                let dir = if j < nz { &b.dirs[j] } else { &neg_u };
                let pj = &inv * dir;
                let mut tr = 0.0;
                for a in 0..d {
                    tr += pj[(a, a)].re;
                    for c in 0..d {
                        left[(a * d + c, j)] = pj[(a, c)];
                        right[(c * d + a, j)] = pj[(a, c)];
                    }
                }
                g[j] -= tr;
            }
            let prod = left.transpose() * right;
            for j in 0..dim {
                for k in 0..dim {
                    h[(j, k)] += prod[(j, k)].re;
                }
            }
        }
        let slack_cap = self.cap - v[nz];
        g[nz] += 1.0 / slack_cap;
        h[(nz, nz)] += 1.0 / (slack_cap * slack_cap);
        let norm2: f64 = v[..nz].iter().map(|z| z * z).sum();
        let s = self.radius2 - norm2;
        for j in 0..nz {
            g[j] += 2.0 * v[j] / s;
            h[(j, j)] += 2.0 / s;
            for k in 0..nz {
                h[(j, k)] += 4.0 * v[j] * v[k] / (s * s);
            }
        }
        let h = (&h + h.transpose()) * 0.5;
        Some((g, h))
    }

    fn newton_step(&self, t: f64, v: &mut Vec<f64>) -> Option<f64> {
        let (g, h) = self.grad_hess(t, v)?;
        let dim = g.len();
        let mut reg = 0.0;
        let step = loop {
            let mut hr = h.clone();
            for i in 0..dim {
                hr[(i, i)] += reg;
            }
            if let Some(ch) = hr.cholesky() {
                break -ch.solve(&g);
            }
            reg = if reg == 0.0 { 1e-12 * (1.0 + h.diagonal().amax()) } else { reg * 100.0 };
            if reg > 1e12 {
                return None;
            }
        };
        let dec2 = -g.dot(&step);
        if !(dec2 > 0.0) {
            return Some(0.0);
        }
        let f0 = self.value(t, v)?;
        let mut s = 1.0;
        while s > 1e-14 {
            let trial: Vec<f64> = v.iter().zip(step.iter()).map(|(a, b)| a + s * b).collect();
            if let Some(f1) = self.value(t, &trial) {
                if f1 <= f0 - 0.25 * s * dec2 {
                    *v = trial;
                    return Some(dec2);
                }
            }
            s *= 0.5;
        }
        None
    }
}

/// Numerical decision by a log-det barrier path maximizing the margin.
/// Besides the blocks, the search is confined to `δ ≤ cap` and a large
/// ball in the reduced coordinates so that the barrier has a minimizer.
pub fn solve_barrier(p: &LmiProblem, tol: f64) -> Result<FeasibilityVerdict> {
    p.validate()?;
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let red = match reduce(p) {
        Ok(r) => r,
        Err(note) => return Ok(FeasibilityVerdict::infeasible(Method::Barrier, note)),
    };
    let nz = red.nz();
    let scale = red.blocks.iter().map(|b| b.c.iter().map(|z| z.norm()).fold(0.0, f64::max)).fold(0.0, f64::max);
    // starting margin making every block positive definite at z = 0
    let mut delta0 = f64::INFINITY;
    let mut cap: f64 = 1.0;
    for b in &red.blocks {
        let cmin = herm_min_eig(&b.c);
        let cnorm = Herm::symmetrize(b.c.clone()).op_norm();
        let umin = herm_min_eig(&b.u);
        let umax = Herm::symmetrize(b.u.clone()).op_norm();
        let d = if cmin > 0.0 { 0.5 * cmin / umax } else { (cmin - 1.0) / umin };
        delta0 = delta0.min(d);
        cap = cap.max(1.0 + cnorm / umin);
    }
    if red.blocks.is_empty() {
        delta0 = 0.0;
    }
    let barrier = Barrier { red: &red, cap, radius2: (1e4 * (1.0 + scale)).powi(2) };
    let nu: f64 = p.blocks.iter().map(LmiBlock::dim).sum::<usize>() as f64 + 2.0;
    let mut v = vec![0.0; nz + 1];
    v[nz] = delta0.min(cap - 1.0);

    let witness = |v: &[f64]| Witness { x: red.x_of(&v[..nz]), delta: v[nz], exact: None };
    let feasible_now = |delta: f64| match p.strictness {
        Strictness::Strict => delta >= 10.0 * tol,
        Strictness::Closed => delta >= -tol,
    };
    let done = |v: &[f64], upper: Option<f64>| {
        let delta = v[nz];
        FeasibilityVerdict {
            status: Status::Feasible,
            method: Method::Barrier,
            witness: Some(witness(v)),
            certificate: None,
            best_delta: delta,
            delta_upper: upper,
            note: String::new(),
            warnings: Vec::new(),
        }
    };
    if feasible_now(v[nz]) && p.worst_block(&red.x_of(&v[..nz]), v[nz]) >= -tol {
        return Ok(done(&v, None));
    }

    let mut t = 1.0 / (1.0 + scale);
    let mut last_upper = f64::INFINITY;
    loop {
        let mut centered = false;
        for _ in 0..200 {
            match barrier.newton_step(t, &mut v) {
                Some(dec2) => {
                    if feasible_now(v[nz]) && p.worst_block(&red.x_of(&v[..nz]), v[nz]) >= -tol {
                        return Ok(done(&v, None));
                    }
                    if dec2 < 1e-10 {
                        centered = true;
                        break;
                    }
                }
                None => break,
            }
        }
        let delta = v[nz];
        let gap = nu / t;
        if centered {
            last_upper = last_upper.min(delta + gap);
            if last_upper < -10.0 * tol {
                let mut out = FeasibilityVerdict::infeasible(Method::Barrier, "no witness found above margin");
                out.best_delta = delta;
                out.delta_upper = Some(last_upper);
                return Ok(out);
            }
        }
        if gap < 0.1 * tol || t > 1e13 || !centered && t > 1e6 {
            let mut note = format!("margin undecided within tolerance: best δ = {delta:.3e}");
            if !centered {
                note.push_str(" (centering stalled)");
            }
            return Ok(FeasibilityVerdict {
                status: Status::Unknown,
                method: Method::Barrier,
                witness: None,
                certificate: None,
                best_delta: delta,
                delta_upper: last_upper.is_finite().then_some(last_upper),
                note,
                warnings: Vec::new(),
            });
        }
        t *= 10.0;
    }
}
