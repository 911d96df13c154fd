//! Strict interpolation between lists of self-adjoint elements, the
//! implications between a system and a larger one, and seeded campaigns
//! over families of inclusions.

use std::fmt::Write as _;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cones::{self, interpolation_quotient, tuple_element};
use crate::cpmaps::{self, ConditionalExpectation, CpMap};
use crate::error::{Error, Result};
use crate::linalg::{BlockShape, HermMatrix, DEFAULT_TOL};
use crate::opsys::{generated_algebra, make_full, make_linf, make_subsystem, namioka_phelps, OperatorSystem};
use crate::sdp::{self, FeasibilityVerdict, LmiBlock, LmiProblem, Method, Status, Strictness, Witness};

type Herm = HermMatrix<f64>;

/// Lower and upper lists whose strict interpolant is sought in `system`.
#[derive(Debug, Clone)]
pub struct InterpolationInstance {
    pub system: Arc<OperatorSystem>,
    pub lower: Vec<Herm>,
    pub upper: Vec<Herm>,
    /// An interpolant known in some larger system.
    pub ambient_witness: Option<Herm>,
}

impl InterpolationInstance {
    pub fn new(system: Arc<OperatorSystem>, lower: Vec<Herm>, upper: Vec<Herm>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Empty("lower list"));
        }
        if upper.is_empty() {
            return Err(Error::Empty("upper list"));
        }
        let shape = system.ambient();
        for x in lower.iter().chain(&upper) {
            if x.dim() != shape.total() {
                return Err(Error::DimensionMismatch { expected: shape.total(), found: x.dim() });
            }
            if !shape.is_block_diagonal(x, 0.0) {
                return Err(Error::NotInSystem("element is not block diagonal in the ambient".into()));
            }
        }
        Ok(Self { system, lower, upper, ambient_witness: None })
    }

    pub fn with_witness(mut self, b: Herm) -> Self {
        self.ambient_witness = Some(b);
        self
    }

    /// The same data, searched for in another system.
    pub fn in_system(&self, system: Arc<OperatorSystem>) -> Result<Self> {
        let mut out = Self::new(system, self.lower.clone(), self.upper.clone())?;
        out.ambient_witness = self.ambient_witness.clone();
        Ok(out)
    }

    /// Data and system amplified by `⊗ I_m`.
    pub fn amplify(&self, m: usize) -> Result<Self> {
        let id = Herm::identity(m);
        let amp = |v: &[Herm]| v.iter().map(|x| x.kron(&id)).collect::<Vec<_>>();
        let mut out = Self::new(Arc::new(self.system.amplify(m)?), amp(&self.lower), amp(&self.upper))?;
        out.ambient_witness = self.ambient_witness.as_ref().map(|b| b.kron(&id));
        Ok(out)
    }

    /// Every element translated by `c·1`.
    pub fn shifted(&self, c: f64) -> Self {
        let sh = |v: &[Herm]| v.iter().map(|x| x.shift(c)).collect();
        Self {
            system: self.system.clone(),
            lower: sh(&self.lower),
            upper: sh(&self.upper),
            ambient_witness: self.ambient_witness.as_ref().map(|b| b.shift(c)),
        }
    }

    /// Every element scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let sc = |v: &[Herm]| v.iter().map(|x| x.scale(c)).collect();
        Self {
            system: self.system.clone(),
            lower: sc(&self.lower),
            upper: sc(&self.upper),
            ambient_witness: self.ambient_witness.as_ref().map(|b| b.scale(c)),
        }
    }

    /// Variables are coordinates of the interpolant in the system basis;
    /// `a − x_i − δ·1 ⪰ 0` and `y_j − a − δ·1 ⪰ 0`, split along the ambient.
    pub fn lmi(&self) -> LmiProblem {
        let basis = self.system.basis();
        let shape = self.system.ambient();
        let mut lmi = LmiProblem::new(basis.len(), Strictness::Strict);
        for x in &self.lower {
            let mut b = LmiBlock::with_identity_margin(x.neg());
            for (r, e) in basis.iter().enumerate() {
                b.add_term(r, e.clone());
            }
            lmi.add_block_split(b, shape);
        }
        for y in &self.upper {
            let mut b = LmiBlock::with_identity_margin(y.clone());
            for (r, e) in basis.iter().enumerate() {
                b.add_term(r, e.neg());
            }
            lmi.add_block_split(b, shape);
        }
        lmi
    }

    /// Smallest gap `min(λ_min(a − x_i), λ_min(y_j − a))`.
    pub fn margin_of(&self, a: &Herm) -> f64 {
        let gap = |m: Herm| m.min_eig();
        let lo = self.lower.iter().map(|x| gap(a.sub(x))).fold(f64::INFINITY, f64::min);
        let hi = self.upper.iter().map(|y| gap(y.sub(a))).fold(f64::INFINITY, f64::min);
        lo.min(hi)
    }

    /// A verdict carrying `a` as its witness, when `a` lies in the system and
    /// interpolates strictly.
    pub fn verdict_for(&self, a: &Herm, tol: f64) -> Result<Option<FeasibilityVerdict>> {
        let x = match self.system.coordinates(a, tol.max(DEFAULT_TOL)) {
            Ok(x) => x,
            Err(Error::NotInSystem(_)) => return Ok(None),
            Err(e) => return Err(e),
        };
        let delta = self.margin_of(a);
        if !(delta > 0.0) {
            return Ok(None);
        }
        Ok(Some(FeasibilityVerdict {
            status: Status::Feasible,
            method: Method::Barrier,
            witness: Some(Witness { x, delta: 0.5 * delta, exact: None }),
            certificate: None,
            best_delta: 0.5 * delta,
            delta_upper: None,
            note: "constructed witness".into(),
            warnings: Vec::new(),
        }))
    }

    /// Replays `a` as a witness against this instance's problem.
    pub fn replay_interpolant(&self, a: &Herm, tol: f64) -> Result<bool> {
        match self.verdict_for(a, tol)? {
            Some(v) => sdp::replay_check(&self.lmi(), &v, tol),
            None => Ok(false),
        }
    }
}

/// Decides whether some `a` in the system has `x_i < a < y_j` for all `i, j`.
pub fn interpolate(inst: &InterpolationInstance, tol: f64) -> Result<FeasibilityVerdict> {
    sdp::solve(&inst.lmi(), tol)
}

/// The interpolant of a feasible verdict.
pub fn interpolant(inst: &InterpolationInstance, v: &FeasibilityVerdict) -> Result<Herm> {
    let w = v.witness.as_ref().ok_or(Error::NothingToReplay)?;
    Ok(inst.system.combine(&w.x))
}

/// `x_1 = (−3,1,−1,−1)`, `x_2 = (1,−3,−1,−1)` below `y_1 = (2,2,4,0)`,
/// `y_2 = (2,2,0,4)`: interpolable in `ℓ∞_4` but not in `V`.
pub fn classic_interpolation_data() -> (Vec<Herm>, Vec<Herm>) {
    let d = Herm::from_real_diag;
    (
        vec![d(&[-3.0, 1.0, -1.0, -1.0]), d(&[1.0, -3.0, -1.0, -1.0])],
        vec![d(&[2.0, 2.0, 4.0, 0.0]), d(&[2.0, 2.0, 0.0, 4.0])],
    )
}

/// Coordinate functionals `a ↦ a_i` on `V`, whose pairwise sums agree on `V`
/// but admit no positive extensions to `ℓ∞_4` keeping that identity.
pub fn classic_functionals(v: &Arc<OperatorSystem>) -> Result<Vec<CpMap>> {
    (0..4).map(|i| CpMap::from_fn(v.clone(), 1, |x| Herm::from_real_diag(&[x.diagonal()[i]]))).collect()
}

/// Feasibility of the same data in the big and the small system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImplicationRecord {
    pub big: FeasibilityVerdict,
    pub small: FeasibilityVerdict,
}

impl ImplicationRecord {
    /// Big feasible and small infeasible.
    pub fn violated(&self) -> bool {
        self.big.status == Status::Feasible && self.small.status == Status::Infeasible
    }

    pub fn undecided(&self) -> bool {
        self.big.status == Status::Unknown || (self.big.status == Status::Feasible && self.small.status == Status::Unknown)
    }

    pub fn holds(&self) -> bool {
        !self.violated() && !self.undecided()
    }
}

fn check_data_in(s: &OperatorSystem, lower: &[Herm], upper: &[Herm], tol: f64) -> Result<()> {
    for (k, x) in lower.iter().chain(upper).enumerate() {
        if !s.contains(x, tol.max(DEFAULT_TOL))? {
            return Err(Error::NotInSystem(format!("element {k} is outside {}", s.label())));
        }
    }
    Ok(())
}

/// The tight interpolation implication for one instance.
pub fn tr_instance_check(
    small: &Arc<OperatorSystem>,
    big: &Arc<OperatorSystem>,
    lower: &[Herm],
    upper: &[Herm],
    tol: f64,
) -> Result<ImplicationRecord> {
    check_data_in(small, lower, upper, tol)?;
    if !small.is_subsystem_of(big, tol.max(DEFAULT_TOL))? {
        return Err(Error::NotInSystem(format!("{} is not contained in {}", small.label(), big.label())));
    }
    let inst = InterpolationInstance::new(big.clone(), lower.to_vec(), upper.to_vec())?;
    let big_v = interpolate(&inst, tol)?;
    let small_v = interpolate(&inst.in_system(small.clone())?, tol)?;
    Ok(ImplicationRecord { big: big_v, small: small_v })
}

/// The same implication with the interpolant sought in the algebra
/// generated by `s`.
pub fn cstr_instance_check(
    s: &Arc<OperatorSystem>,
    big: &Arc<OperatorSystem>,
    lower: &[Herm],
    upper: &[Herm],
    tol: f64,
) -> Result<ImplicationRecord> {
    check_data_in(s, lower, upper, tol)?;
    let alg = Arc::new(generated_algebra(s));
    tr_instance_check(&alg, big, lower, upper, tol)
}

/// Statuses of the quotient-cone and interpolation encodings of a tuple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosscheckRecord {
    pub quotient: Status,
    pub interpolation: Status,
    /// Both sides decided by the exact path.
    pub exact: bool,
}

impl CrosscheckRecord {
    pub fn matches(&self) -> bool {
        self.quotient == self.interpolation
            || (!self.exact && (self.quotient == Status::Unknown || self.interpolation == Status::Unknown))
    }
}

/// Compares strict positivity of `(s_1, …, s_{n+k})` in the interpolation
/// quotient with interpolation of `−s_1..−s_n` below `s_{n+1}..s_{n+k}`.
pub fn lemma_crosscheck(s: &Arc<OperatorSystem>, n: usize, tuple: &[Herm], tol: f64) -> Result<CrosscheckRecord> {
    if n == 0 || n >= tuple.len() {
        return Err(Error::InvalidArgument(format!("split {n} of a tuple of length {}", tuple.len())));
    }
    let k = tuple.len() - n;
    let q = Arc::new(interpolation_quotient(s, n, k)?);
    let elem = tuple_element(q, tuple, 1)?;
    let qv = cones::quotient_strict_member(&elem, tol)?;
    let lower = tuple[..n].iter().map(Herm::neg).collect();
    let inst = InterpolationInstance::new(s.clone(), lower, tuple[n..].to_vec())?;
    let iv = interpolate(&inst, tol)?;
    Ok(CrosscheckRecord {
        quotient: qv.status,
        interpolation: iv.status,
        exact: qv.method == Method::ExactLp && iv.method == Method::ExactLp,
    })
}

/// Inclusion families for campaigns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairFamily {
    /// A diagonal algebra constant on random index classes, inside `M_d`.
    DiagonalInFull,
    /// `⊕ M_{d_i}` placed block-diagonally inside `M_d`.
    BlockDiagonalInFull,
    /// Indicators of random index classes inside `ℓ∞_d`.
    LinfInLinf,
    /// `V ⊂ ℓ∞_4`, a system that is not an algebra.
    NamiokaPhelps,
}

impl PairFamily {
    pub const ALL: [PairFamily; 4] =
        [PairFamily::DiagonalInFull, PairFamily::BlockDiagonalInFull, PairFamily::LinfInLinf, PairFamily::NamiokaPhelps];

    /// Whether the small system is a *-subalgebra of a finite-dimensional
    /// algebra, so a conditional expectation exists.
    pub fn is_algebra_pair(self) -> bool {
        self != PairFamily::NamiokaPhelps
    }

    pub fn name(self) -> &'static str {
        match self {
            PairFamily::DiagonalInFull => "diagonal-in-full",
            PairFamily::BlockDiagonalInFull => "block-diagonal-in-full",
            PairFamily::LinfInLinf => "linf-in-linf",
            PairFamily::NamiokaPhelps => "namioka-phelps",
        }
    }
}

impl FromStr for PairFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub count: usize,
    pub dimension_cap: usize,
    pub family: PairFamily,
    pub seed: u64,
    pub level: usize,
    pub nk: (usize, usize),
    /// Also run the extension check on sum-identity functional families.
    pub check_riesz_arveson: bool,
    pub tol: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            count: 200,
            dimension_cap: 6,
            family: PairFamily::DiagonalInFull,
            seed: 0,
            level: 1,
            nk: (2, 2),
            check_riesz_arveson: true,
            tol: DEFAULT_TOL,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.level == 0 || self.nk.0 == 0 || self.nk.1 == 0 || !(self.tol > 0.0) {
            return Err(Error::InvalidArgument("level, n, k and tol must be positive".into()));
        }
        let min_dim = if self.family == PairFamily::NamiokaPhelps { 4 } else { 2 };
        if self.dimension_cap < min_dim {
            return Err(Error::InvalidArgument(format!(
                "{} needs a dimension cap of at least {min_dim}",
                self.family.name()
            )));
        }
        Ok(())
    }

    pub fn instance_seed(&self, index: usize) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index as u64)
    }
}

/// One generated inclusion with interpolation data.
#[derive(Debug, Clone)]
pub struct CampaignInstance {
    pub index: usize,
    pub small: Arc<OperatorSystem>,
    pub big: Arc<OperatorSystem>,
    /// Interpolation data at the configured level.
    pub data: InterpolationInstance,
    /// Level-one systems, for extension checks.
    pub small_base: Arc<OperatorSystem>,
    pub big_base: Arc<OperatorSystem>,
    pub label: Option<String>,
}

const GRID: f64 = 8.0;

fn grid_value(rng: &mut ChaCha8Rng, half_width: i32) -> f64 {
    rng.gen_range(-half_width..=half_width) as f64 / GRID
}

/// Random element with grid coefficients in the basis.
fn random_element(s: &OperatorSystem, rng: &mut ChaCha8Rng) -> Herm {
    let c: Vec<f64> = (0..s.dim()).map(|_| grid_value(rng, 16)).collect();
    s.combine(&c)
}

/// Random partition of `0..d` into nonempty classes.
fn random_classes(d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let count = rng.gen_range(1..=d);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.shuffle(rng);
    let mut classes: Vec<Vec<usize>> = idx[..count].iter().map(|&i| vec![i]).collect();
    for &i in &idx[count..] {
        let c = rng.gen_range(0..count);
        classes[c].push(i);
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    classes.sort();
    classes
}

fn class_indicators(d: usize, classes: &[Vec<usize>]) -> Vec<Herm> {
    classes
        .iter()
        .map(|c| {
            let mut v = vec![0.0; d];
            for &i in c {
                v[i] = 1.0;
            }
            Herm::from_real_diag(&v)
        })
        .collect()
}

fn random_pair(family: PairFamily, cap: usize, rng: &mut ChaCha8Rng) -> Result<(OperatorSystem, OperatorSystem)> {
    match family {
        PairFamily::NamiokaPhelps => Ok((namioka_phelps(), make_linf(4)?)),
        PairFamily::LinfInLinf => {
            let d = rng.gen_range(2..=cap);
            let big = make_linf(d)?;
            let classes = random_classes(d, rng);
            let small = make_subsystem(&big, &class_indicators(d, &classes), format!("classes{classes:?}"))?;
            Ok((small, big))
        }
        PairFamily::DiagonalInFull => {
            let d = rng.gen_range(2..=cap);
            let big = make_full(d)?;
            let classes = random_classes(d, rng);
            let small = make_subsystem(&big, &class_indicators(d, &classes), format!("diag{classes:?}"))?;
            Ok((small, big))
        }
        PairFamily::BlockDiagonalInFull => {
            let d = rng.gen_range(2..=cap);
            let big = make_full(d)?;
            // a composition of d whose first part is at least 2
            let mut sizes = vec![rng.gen_range(2..=d)];
            let mut left = d - sizes[0];
            while left > 0 {
                let s = rng.gen_range(1..=left);
                sizes.push(s);
                left -= s;
            }
            let shape = BlockShape::new(sizes.clone())?;
            let small = make_subsystem(&big, &shape.ambient_basis(), format!("blocks{sizes:?}"))?;
            Ok((small, big))
        }
    }
}

/// Smallest grid point at or above `v`.
fn grid_ceil(v: f64) -> f64 {
    (v * GRID).ceil() / GRID
}

/// Builds instance `index`: an element `b` of the big system, then lower
/// elements `a − (λ_max(a − b) + μ)·1` and upper elements
/// `a + (λ_max(b − a) + μ)·1` for random `a` in the small system, so `b`
/// interpolates with margin at least `μ ≥ 1/8`.
pub fn generate_instance(cfg: &CampaignConfig, index: usize) -> Result<CampaignInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.instance_seed(index));
    let (small, big) = random_pair(cfg.family, cfg.dimension_cap, &mut rng)?;
    let small_base = Arc::new(small);
    let big_base = Arc::new(big);
    let (small_m, big_m) = if cfg.level == 1 {
        (small_base.clone(), big_base.clone())
    } else {
        (Arc::new(small_base.amplify(cfg.level)?), Arc::new(big_base.amplify(cfg.level)?))
    };
    let classic = cfg.family == PairFamily::NamiokaPhelps && cfg.nk == (2, 2) && cfg.level == 1 && index == 0;
    let (data, label) = if classic {
        let (lower, upper) = classic_interpolation_data();
        let b = Herm::from_real_diag(&[1.5, 1.5, -0.5, -0.5]);
        (InterpolationInstance::new(big_m.clone(), lower, upper)?.with_witness(b), Some("classic".to_string()))
    } else {
        let b = random_element(&big_m, &mut rng);
        let mut lower = Vec::with_capacity(cfg.nk.0);
        for _ in 0..cfg.nk.0 {
            let a = random_element(&small_m, &mut rng);
            let mu = rng.gen_range(1..=4) as f64 / GRID;
            lower.push(a.shift(-grid_ceil(a.sub(&b).max_eig() + mu)));
        }
        let mut upper = Vec::with_capacity(cfg.nk.1);
        for _ in 0..cfg.nk.1 {
            let a = random_element(&small_m, &mut rng);
            let mu = rng.gen_range(1..=4) as f64 / GRID;
            upper.push(a.shift(grid_ceil(b.sub(&a).max_eig() + mu)));
        }
        (InterpolationInstance::new(big_m.clone(), lower, upper)?.with_witness(b), None)
    };
    Ok(CampaignInstance { index, small: small_m, big: big_m, data, small_base, big_base, label })
}

fn random_psd(dim: usize, diagonal: bool, rng: &mut ChaCha8Rng) -> Herm {
    if diagonal {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(0..=16) as f64 / GRID).collect();
        return Herm::from_real_diag(&v);
    }
    let l = crate::linalg::CMatrix::<f64>::from_fn(dim, dim, |_, _| Complex::new(grid_value(rng, 8), grid_value(rng, 8)));
    Herm::new(&l * l.adjoint()).expect("L L* is Hermitian")
}

/// Densities for `n + k` positive functionals on `small` whose first `n`
/// and last `k` sum to the same functional on `small` but not on `big`.
fn sum_family_densities(
    family: PairFamily,
    small: &OperatorSystem,
    big: &OperatorSystem,
    n: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Herm> {
    let dim = big.ambient_dim();
    let commutative = big.ambient().is_commutative();
    let mut rho: Vec<Herm> = (0..n).map(|_| random_psd(dim, commutative, rng)).collect();
    let total = rho.iter().fold(Herm::zeros(dim), |acc, r| acc.add(r));
    if commutative {
        // move mass along directions invisible to `small`, then split by weights
        let t = total.diagonal();
        let moved = match family {
            PairFamily::NamiokaPhelps => {
                let hi = t[0].min(t[1]);
                let lo = -t[2].min(t[3]);
                let steps = ((hi - lo) * GRID).round() as i64;
                let c = lo + rng.gen_range(0..=steps) as f64 / GRID;
                vec![t[0] - c, t[1] - c, t[2] + c, t[3] + c]
            }
            _ => {
                // permute within the classes of constant coordinates of `small`
                let mut moved = t.clone();
                let classes = diagonal_classes(small);
                for c in classes {
                    let mut perm = c.clone();
                    perm.shuffle(rng);
                    for (from, to) in c.iter().zip(&perm) {
                        moved[*to] = t[*from];
                    }
                }
                moved
            }
        };
        // weights on the 1/8 grid summing to one in every coordinate
        let mut remaining = vec![GRID as i64; dim];
        for j in 0..k {
            let w: Vec<f64> = (0..dim)
                .map(|c| {
                    let take = if j + 1 == k { remaining[c] } else { rng.gen_range(0..=remaining[c]) };
                    remaining[c] -= take;
                    take as f64 / GRID
                })
                .collect();
            let v: Vec<f64> = moved.iter().zip(&w).map(|(a, b)| a * b).collect();
            rho.push(Herm::from_real_diag(&v));
        }
    } else {
        // E(T)^{1/2} K_j E(T)^{1/2} with Σ K_j = I
        let et = small.project(&total).expect("same ambient");
        let root = et.sqrt_psd();
        let ls: Vec<Herm> = (0..k).map(|_| random_psd(dim, false, rng).shift(0.125)).collect();
        let s = ls.iter().fold(Herm::zeros(dim), |acc, l| acc.add(l));
        let s_inv_root = s.map_spectrum(|l| 1.0 / l.sqrt());
        for l in &ls {
            let kj = l.congruence(s_inv_root.as_matrix());
            rho.push(kj.congruence(root.as_matrix()));
        }
    }
    rho
}

/// Classes of coordinates on which every element of a diagonal system is
/// constant.
fn diagonal_classes(s: &OperatorSystem) -> Vec<Vec<usize>> {
    let d = s.ambient_dim();
    let diags: Vec<Vec<f64>> = s.basis().iter().map(Herm::diagonal).collect();
    let mut classes: Vec<Vec<usize>> = Vec::new();
    for i in 0..d {
        match classes.iter_mut().find(|c| diags.iter().all(|v| v[c[0]] == v[i])) {
            Some(c) => c.push(i),
            None => classes.push(vec![i]),
        }
    }
    classes
}

fn density_functional(s: &Arc<OperatorSystem>, rho: &Herm) -> Result<CpMap> {
    CpMap::from_fn(s.clone(), 1, |b| Herm::from_real_diag(&[rho.inner(b)]))
}

/// Per-instance outcome of a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub label: Option<String>,
    pub small_system: String,
    pub ambient_dim: usize,
    pub big: Status,
    pub small: Status,
    pub big_method: Method,
    pub small_method: Method,
    /// Status of the small search after triage, when it ran.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub small_triaged: Option<Status>,
    pub violation: bool,
    pub undecided: bool,
    /// Every feasible verdict of this instance passed replay.
    pub replay_ok: bool,
    /// The interpolant `E(b)` replayed in the small system.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub expectation_replay: Option<bool>,
    /// Level-one interpolants `a ⊗ I_2` replayed at level two.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub amplified_replay: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extension: Option<Status>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extension_triaged: Option<Status>,
    /// Extensions `φ_i ∘ E` replayed against the extension problem.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub expectation_extension_replay: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CampaignCounts {
    pub instances: usize,
    pub big_feasible: usize,
    pub small_feasible: usize,
    pub violations: usize,
    pub undecided: usize,
    pub replay_failures: usize,
    pub expectation_replay_failures: usize,
    pub amplified_replay_failures: usize,
    pub extension_checked: usize,
    pub extension_feasible: usize,
    pub extension_infeasible: usize,
    pub extension_undecided: usize,
    pub expectation_extension_failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignReport {
    pub config: CampaignConfig,
    pub algebra_pair: bool,
    pub counts: CampaignCounts,
    /// Indices whose implication failed after triage.
    pub violations: Vec<usize>,
    /// Indices whose extension problem stayed infeasible after triage.
    pub extension_infeasible: Vec<usize>,
    pub records: Vec<InstanceRecord>,
    #[serde(skip)]
    pub runtime: Duration,
}

impl CampaignReport {
    /// For algebra pairs: no violation, no infeasible extension and every
    /// replay passed. For other pairs only replays are required.
    pub fn passed(&self) -> bool {
        let c = &self.counts;
        let replays =
            c.replay_failures == 0 && c.expectation_replay_failures == 0 && c.amplified_replay_failures == 0
                && c.expectation_extension_failures == 0;
        replays && (!self.algebra_pair || (self.violations.is_empty() && self.extension_infeasible.is_empty()))
    }

    pub fn summary(&self) -> String {
        let c = &self.counts;
        let cfg = &self.config;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "campaign {} (n,k)=({},{}) level {} seed {} count {} cap {}",
            cfg.family.name(),
            cfg.nk.0,
            cfg.nk.1,
            cfg.level,
            cfg.seed,
            cfg.count,
            cfg.dimension_cap
        );
        let _ = writeln!(s, "  big feasible {}/{}, small feasible {}", c.big_feasible, c.instances, c.small_feasible);
        let _ = writeln!(s, "  violations {} {:?}, undecided {}", c.violations, self.violations, c.undecided);
        let _ = writeln!(
            s,
            "  replay failures {}, expectation replay failures {}, amplified replay failures {}",
            c.replay_failures, c.expectation_replay_failures, c.amplified_replay_failures
        );
        if c.extension_checked > 0 {
            let _ = writeln!(
                s,
                "  extensions checked {}: feasible {}, infeasible {} {:?}, undecided {}, expectation replay failures {}",
                c.extension_checked,
                c.extension_feasible,
                c.extension_infeasible,
                self.extension_infeasible,
                c.extension_undecided,
                c.expectation_extension_failures
            );
        }
        let _ = writeln!(s, "  result {}", if self.passed() { "PASS" } else { "FAIL" });
        s
    }
}

fn replays(lmi: &LmiProblem, v: &FeasibilityVerdict, tol: f64) -> Result<bool> {
    if v.status != Status::Feasible {
        return Ok(true);
    }
    sdp::replay_check(lmi, v, tol)
}

/// Replay tolerance for witnesses found by the barrier path.
fn replay_tol(tol: f64) -> f64 {
    (tol * 100.0).max(1e-8)
}

fn evaluate(cfg: &CampaignConfig, index: usize) -> Result<InstanceRecord> {
    let inst = generate_instance(cfg, index)?;
    let tol = cfg.tol;
    let rtol = replay_tol(tol);
    let big_inst = &inst.data;
    let small_inst = big_inst.in_system(inst.small.clone())?;
    let big_v = interpolate(big_inst, tol)?;
    let small_v = interpolate(&small_inst, tol)?;
    let mut replay_ok = replays(&big_inst.lmi(), &big_v, rtol)? && replays(&small_inst.lmi(), &small_v, rtol)?;

    let mut small_status = small_v.status;
    let mut small_triaged = None;
    if big_v.status == Status::Feasible && small_status != Status::Feasible && small_v.method == Method::Barrier {
        let again = interpolate(&small_inst, tol / 10.0)?;
        replay_ok &= replays(&small_inst.lmi(), &again, rtol)?;
        small_triaged = Some(again.status);
        small_status = again.status;
    }
    let violation = big_v.status == Status::Feasible && small_status == Status::Infeasible;
    let undecided = big_v.status == Status::Unknown || (big_v.status == Status::Feasible && small_status == Status::Unknown);

    let algebra = cfg.family.is_algebra_pair();
    let expectation_replay = match (&big_inst.ambient_witness, algebra) {
        (Some(b), true) => Some(small_inst.replay_interpolant(&inst.small.project(b)?, rtol)?),
        _ => None,
    };

    let amplified_replay = if cfg.level == 1 {
        let mut ok = true;
        for (data, v) in [(big_inst, &big_v), (&small_inst, &small_v)] {
            if v.status == Status::Feasible {
                let a = interpolant(data, v)?;
                ok &= data.amplify(2)?.replay_interpolant(&a.kron(&Herm::identity(2)), rtol)?;
            }
        }
        Some(ok)
    } else {
        None
    };

    let (mut extension, mut extension_triaged, mut expectation_extension_replay) = (None, None, None);
    if cfg.check_riesz_arveson && cfg.level == 1 {
        let (n, k) = cfg.nk;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.instance_seed(index) ^ 0xA5A5_A5A5_A5A5_A5A5);
        let maps = if inst.label.is_some() {
            classic_functionals(&inst.small_base)?
        } else {
            sum_family_densities(cfg.family, &inst.small_base, &inst.big_base, n, k, &mut rng)
                .iter()
                .map(|r| density_functional(&inst.small_base, r))
                .collect::<Result<Vec<_>>>()?
        };
        let problem = cpmaps::riesz_arveson_problem(inst.small_base.clone(), inst.big_base.clone(), n, k, maps, tol)?;
        let v = cpmaps::solve_extension(&problem, tol)?;
        let lmi = problem.to_lmi();
        replay_ok &= replays(&lmi, &v, rtol)?;
        let mut status = v.status;
        if algebra && status != Status::Feasible && v.method == Method::Barrier {
            let again = cpmaps::solve_extension(&problem, tol / 10.0)?;
            replay_ok &= replays(&lmi, &again, rtol)?;
            extension_triaged = Some(again.status);
            status = again.status;
        }
        extension = Some(v.status);
        if extension_triaged.is_none() {
            extension_triaged = (status != v.status).then_some(status);
        }
        if algebra {
            let e = ConditionalExpectation::new(inst.small_base.clone())?;
            let composed =
                problem.maps.iter().map(|f| e.compose(f, inst.big_base.clone())).collect::<Result<Vec<_>>>()?;
            expectation_extension_replay = Some(cpmaps::replay_extensions(&problem, &composed, rtol)?);
        }
    }

    Ok(InstanceRecord {
        index,
        seed: cfg.instance_seed(index),
        label: inst.label.clone(),
        small_system: inst.small_base.label().to_string(),
        ambient_dim: inst.big.ambient_dim(),
        big: big_v.status,
        small: small_v.status,
        big_method: big_v.method,
        small_method: small_v.method,
        small_triaged,
        violation,
        undecided,
        replay_ok,
        expectation_replay,
        amplified_replay,
        extension,
        extension_triaged,
        expectation_extension_replay,
    })
}

/// Runs `cfg.count` seeded instances in parallel, reporting in index order.
pub fn run_campaign(cfg: &CampaignConfig) -> Result<CampaignReport> {
    cfg.validate()?;
    let start = Instant::now();
    let records = (0..cfg.count).into_par_iter().map(|i| evaluate(cfg, i)).collect::<Result<Vec<_>>>()?;
    let mut counts = CampaignCounts { instances: records.len(), ..Default::default() };
    let mut violations = Vec::new();
    let mut extension_infeasible = Vec::new();
    for r in &records {
        counts.big_feasible += (r.big == Status::Feasible) as usize;
        counts.small_feasible += (r.small_triaged.unwrap_or(r.small) == Status::Feasible) as usize;
        if r.violation {
            counts.violations += 1;
            violations.push(r.index);
        }
        counts.undecided += r.undecided as usize;
        counts.replay_failures += (!r.replay_ok) as usize;
        counts.expectation_replay_failures += (r.expectation_replay == Some(false)) as usize;
        counts.amplified_replay_failures += (r.amplified_replay == Some(false)) as usize;
        if let Some(first) = r.extension {
            counts.extension_checked += 1;
            match r.extension_triaged.unwrap_or(first) {
                Status::Feasible => counts.extension_feasible += 1,
                Status::Infeasible => {
                    counts.extension_infeasible += 1;
                    extension_infeasible.push(r.index);
                }
                Status::Unknown => counts.extension_undecided += 1,
            }
        }
        counts.expectation_extension_failures += (r.expectation_extension_replay == Some(false)) as usize;
    }
    Ok(CampaignReport {
        config: cfg.clone(),
        algebra_pair: cfg.family.is_algebra_pair(),
        counts,
        violations,
        extension_infeasible,
        records,
        runtime: start.elapsed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;

    fn d(v: &[f64]) -> Herm {
        Herm::from_real_diag(v)
    }

    #[test]
    fn classic_data_in_both_systems() {
        let (lower, upper) = classic_interpolation_data();
        let l4 = Arc::new(make_linf(4).unwrap());
        let inst = InterpolationInstance::new(l4.clone(), lower.clone(), upper.clone()).unwrap();
        let v = interpolate(&inst, 0.0).unwrap();
        assert_eq!(v.status, Status::Feasible);
        let ex = v.witness.as_ref().unwrap().exact.as_ref().unwrap();
        assert!(ex.delta >= ratio(1, 2));
        assert!(sdp::replay_check(&inst.lmi(), &v, 0.0).unwrap());
        assert!(inst.replay_interpolant(&d(&[1.5, 1.5, -0.5, -0.5]), 0.0).unwrap());

        let v4 = Arc::new(namioka_phelps());
        let inst = inst.in_system(v4.clone()).unwrap();
        let v = interpolate(&inst, 0.0).unwrap();
        assert_eq!(v.status, Status::Infeasible);
        assert!(v.certificate.is_some());
        assert!(sdp::replay_check(&inst.lmi(), &v, 0.0).unwrap());

        let rec = tr_instance_check(&v4, &l4, &lower, &upper, 1e-9).unwrap();
        assert!(rec.violated());
        let rec = cstr_instance_check(&v4, &l4, &lower, &upper, 1e-9).unwrap();
        assert!(rec.holds());
    }

    #[test]
    fn zero_below_unit() {
        let v = Arc::new(namioka_phelps());
        let inst = InterpolationInstance::new(v, vec![Herm::zeros(4)], vec![Herm::identity(4)]).unwrap();
        let verdict = interpolate(&inst, 0.0).unwrap();
        let ex = verdict.witness.as_ref().unwrap().exact.as_ref().unwrap();
        assert_eq!(ex.delta, ratio(1, 2));
        assert_eq!(interpolant(&inst, &verdict).unwrap(), Herm::identity(4).scale(0.5));
    }

    #[test]
    fn flip_system_uses_generated_algebra() {
        let m2 = Arc::new(make_full(2).unwrap());
        let flip = Herm::from_real_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let s = Arc::new(make_subsystem(&m2, std::slice::from_ref(&flip), "flip").unwrap());
        let lower = vec![flip.scale(0.5).shift(-1.0)];
        let upper = vec![flip.scale(-0.5).shift(1.0)];
        let rec = cstr_instance_check(&s, &m2, &lower, &upper, 1e-9).unwrap();
        assert!(rec.holds() && rec.small.is_feasible());
        assert_eq!(tr_instance_check(&s, &m2, &lower, &upper, 1e-9).unwrap(), rec);
    }

    #[test]
    fn rejects_data_outside_small() {
        let v = Arc::new(namioka_phelps());
        let l4 = Arc::new(make_linf(4).unwrap());
        let r = tr_instance_check(&v, &l4, &[d(&[1.0, 0.0, 0.0, 0.0])], &[Herm::identity(4)], 1e-9);
        assert!(matches!(r, Err(Error::NotInSystem(_))));
    }

    #[test]
    fn crosscheck_on_classic_tuple() {
        let (lower, upper) = classic_interpolation_data();
        let mut tuple: Vec<Herm> = lower.iter().map(Herm::neg).collect();
        tuple.extend(upper);
        for s in [namioka_phelps(), make_linf(4).unwrap()] {
            let r = lemma_crosscheck(&Arc::new(s), 2, &tuple, 0.0).unwrap();
            assert!(r.exact && r.matches(), "{r:?}");
        }
        let r = lemma_crosscheck(&Arc::new(namioka_phelps()), 2, &vec![Herm::identity(4); 4], 0.0).unwrap();
        assert_eq!(r.quotient, Status::Feasible);
        assert!(r.matches());
    }

    #[test]
    fn family_names_round_trip() {
        for f in PairFamily::ALL {
            assert_eq!(f.name().parse::<PairFamily>().unwrap(), f);
            assert_eq!(serde_json::to_string(&f).unwrap(), format!("\"{}\"", f.name()));
        }
        assert!("cube".parse::<PairFamily>().is_err());
    }

    #[test]
    fn generated_data_is_interpolable_in_big() {
        for family in PairFamily::ALL {
            let cfg = CampaignConfig { family, count: 4, dimension_cap: 4, ..Default::default() };
            for i in 0..4 {
                let inst = generate_instance(&cfg, i).unwrap();
                let b = inst.data.ambient_witness.clone().unwrap();
                assert!(inst.data.margin_of(&b) >= 0.125 - 1e-12, "{family:?} {i}");
                for x in inst.data.lower.iter().chain(&inst.data.upper) {
                    assert!(inst.small.contains(x, 1e-9).unwrap());
                }
            }
        }
    }

    #[test]
    fn sum_families_satisfy_identity() {
        for family in PairFamily::ALL {
            let cfg = CampaignConfig { family, dimension_cap: 4, ..Default::default() };
            for i in 0..3 {
                let inst = generate_instance(&cfg, i).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
                let rho = sum_family_densities(family, &inst.small_base, &inst.big_base, 2, 3, &mut rng);
                assert!(rho.iter().all(|r| r.min_eig() > -1e-12));
                let maps: Vec<CpMap> = rho.iter().map(|r| density_functional(&inst.small_base, r).unwrap()).collect();
                assert!(cpmaps::riesz_arveson_problem(inst.small_base.clone(), inst.big_base.clone(), 2, 3, maps, 1e-9).is_ok());
            }
        }
    }

    #[test]
    fn small_campaigns() {
        let cfg = CampaignConfig { count: 0, ..Default::default() };
        let r = run_campaign(&cfg).unwrap();
        assert!(r.records.is_empty() && r.passed());

        let cfg = CampaignConfig { count: 6, family: PairFamily::NamiokaPhelps, ..Default::default() };
        let r = run_campaign(&cfg).unwrap();
        assert!(r.violations.contains(&0));
        assert!(r.extension_infeasible.contains(&0));
        assert!(r.passed(), "{}", r.summary());

        let cfg = CampaignConfig { count: 6, family: PairFamily::LinfInLinf, nk: (2, 3), ..Default::default() };
        let r = run_campaign(&cfg).unwrap();
        assert!(r.passed(), "{}", r.summary());
        assert_eq!(r.counts.extension_feasible, 6);
    }

    #[test]
    fn invalid_configs() {
        let bad = CampaignConfig { level: 0, ..Default::default() };
        assert!(run_campaign(&bad).is_err());
        let bad = CampaignConfig { family: PairFamily::NamiokaPhelps, dimension_cap: 3, ..Default::default() };
        assert!(run_campaign(&bad).is_err());
    }
}
