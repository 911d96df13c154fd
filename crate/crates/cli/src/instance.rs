//! Instance files: JSON with named systems and a list of problems.
//!
//! Matrices are written either as `{"diag": [..]}` or as `{"rows": [[..]]}`
//! where an entry is a real number, a rational string such as `"3/2"`, or a
//! `[re, im]` pair.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use opsys_core::cpmaps::{CpMap, SumConstraint};
use opsys_core::linalg::BlockShape;
use opsys_core::opsys::{self, OperatorSystem, QuotientSystem, StateFunctional};
use opsys_core::riesz::{CampaignConfig, PairFamily};
use opsys_core::scalar::{rational_from_str, rational_to_string, Field};
use opsys_core::sdp::Status;
use opsys_core::{Herm, Rational};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum InputError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("{context}: {message}")]
    Invalid { context: String, message: String },
}

fn invalid(context: impl Into<String>, message: impl ToString) -> InputError {
    InputError::Invalid { context: context.into(), message: message.to_string() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Number(f64),
    Text(String),
}

impl Scalar {
    fn value(&self) -> Result<f64, String> {
        match self {
            Scalar::Number(x) => Ok(*x),
            Scalar::Text(s) => {
                rational_from_str(s).map(|q| q.to_f64_lossy()).ok_or_else(|| format!("{s:?} is not a number"))
            }
        }
    }

    fn exact(x: f64) -> Self {
        if x.fract() == 0.0 {
            Scalar::Number(x)
        } else {
            Scalar::Text(rational_to_string(&Rational::from_f64_exact(x)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Real(Scalar),
    Complex([Scalar; 2]),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag: Option<Vec<Scalar>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<Entry>>>,
}

impl MatrixDef {
    pub fn diagonal(d: &[f64]) -> Self {
        Self { diag: Some(d.iter().map(|x| Scalar::exact(*x)).collect()), rows: None }
    }

    pub fn from_herm(h: &Herm) -> Self {
        if h.is_diagonal() {
            return Self::diagonal(&h.diagonal());
        }
        let n = h.dim();
        let rows = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let z = h.get(i, j);
                        if z.im == 0.0 {
                            Entry::Real(Scalar::exact(z.re))
                        } else {
                            Entry::Complex([Scalar::exact(z.re), Scalar::exact(z.im)])
                        }
                    })
                    .collect()
            })
            .collect();
        Self { diag: None, rows: Some(rows) }
    }

    pub fn build(&self, context: &str) -> Result<Herm, InputError> {
        match (&self.diag, &self.rows) {
            (Some(d), None) => {
                let v = d.iter().map(Scalar::value).collect::<Result<Vec<_>, _>>().map_err(|e| invalid(context, e))?;
                if v.is_empty() {
                    return Err(invalid(context, "empty matrix"));
                }
                Ok(Herm::from_real_diag(&v))
            }
            (None, Some(rows)) => {
                let n = rows.len();
                if n == 0 || rows.iter().any(|r| r.len() != n) {
                    return Err(invalid(context, "matrix is not square"));
                }
                let mut m = opsys_core::linalg::CMatrix::<f64>::zeros(n, n);
                for (i, r) in rows.iter().enumerate() {
                    for (j, e) in r.iter().enumerate() {
                        m[(i, j)] = match e {
                            Entry::Real(x) => Complex::new(x.value().map_err(|e| invalid(context, e))?, 0.0),
                            Entry::Complex([re, im]) => Complex::new(
                                re.value().map_err(|e| invalid(context, e))?,
                                im.value().map_err(|e| invalid(context, e))?,
                            ),
                        };
                    }
                }
                Herm::new(m).map_err(|e| invalid(context, e))
            }
            _ => Err(invalid(context, "give exactly one of `diag` or `rows`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemDef {
    Linf { n: usize },
    Full { d: usize },
    BlockAlgebra { blocks: Vec<usize> },
    NamiokaPhelps,
    /// Span of the generators and the unit inside a block-diagonal ambient.
    Span { blocks: Vec<usize>, generators: Vec<MatrixDef> },
    /// Pullback of `k` copies of `ℓ∞_n` over normalized traces.
    Pullback { n: usize, k: usize },
}

impl SystemDef {
    pub fn from_system(s: &OperatorSystem) -> Self {
        SystemDef::Span {
            blocks: s.ambient().blocks().to_vec(),
            generators: s.basis().iter().map(MatrixDef::from_herm).collect(),
        }
    }

    pub fn build(&self, name: &str) -> Result<OperatorSystem, InputError> {
        let ctx = format!("system {name:?}");
        let s = match self {
            SystemDef::Linf { n } => opsys::make_linf(*n).map_err(|e| invalid(&ctx, e))?,
            SystemDef::Full { d } => opsys::make_full(*d).map_err(|e| invalid(&ctx, e))?,
            SystemDef::BlockAlgebra { blocks } => {
                opsys::make_block_algebra(BlockShape::new(blocks.clone()).map_err(|e| invalid(&ctx, e))?)
            }
            SystemDef::NamiokaPhelps => opsys::namioka_phelps(),
            SystemDef::Span { blocks, generators } => {
                let shape = BlockShape::new(blocks.clone()).map_err(|e| invalid(&ctx, e))?;
                let gens = generators
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g.build(&format!("{ctx} generators[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let ambient = opsys::make_block_algebra(shape);
                opsys::make_subsystem(&ambient, &gens, name).map_err(|e| invalid(&ctx, e))?
            }
            SystemDef::Pullback { n, k } => {
                let linf = Arc::new(opsys::make_linf(*n).map_err(|e| invalid(&ctx, e))?);
                let parts: Vec<_> =
                    (0..*k).map(|_| (linf.clone(), StateFunctional::normalized_trace(linf.clone()))).collect();
                opsys::pullback(&parts).map_err(|e| invalid(&ctx, e))?.0
            }
        };
        Ok(s.with_label(name))
    }
}

/// A quotient written as its system and kernel generators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotientDef {
    pub system: SystemDef,
    pub kernel: Vec<MatrixDef>,
}

impl QuotientDef {
    pub fn from_quotient(q: &QuotientSystem) -> Self {
        Self { system: SystemDef::from_system(q.system()), kernel: q.kernel().iter().map(MatrixDef::from_herm).collect() }
    }

    pub fn build(&self, name: &str, tol: f64) -> Result<QuotientSystem, InputError> {
        let s = Arc::new(self.system.build(name)?);
        let kernel = self
            .kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k.build(&format!("quotient {name:?} kernel[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        QuotientSystem::new(s, kernel, tol).map_err(|e| invalid(format!("quotient {name:?}"), e))
    }
}

/// A map out of a named system: a density `ρ` gives `x ↦ tr(ρx)`, `values`
/// lists images of the system basis in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<MatrixDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<MatrixDef>>,
}

impl MapDef {
    pub fn build(&self, domain: &Arc<OperatorSystem>, context: &str) -> Result<CpMap, InputError> {
        match (&self.density, &self.values) {
            (Some(rho), None) => {
                let rho = rho.build(&format!("{context} density"))?;
                if rho.dim() != domain.ambient_dim() {
                    return Err(invalid(context, "density does not match the ambient dimension"));
                }
                let r = StateFunctional::from_density(domain.clone(), &rho).map_err(|e| invalid(context, e))?;
                Ok(r.as_map())
            }
            (None, Some(vals)) => {
                let vals = vals
                    .iter()
                    .enumerate()
                    .map(|(i, v)| v.build(&format!("{context} values[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let m = vals.first().map_or(1, Herm::dim);
                CpMap::new(domain.clone(), m, vals).map_err(|e| invalid(context, e))
            }
            _ => Err(invalid(context, "give exactly one of `density` or `values`")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignDef {
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub dimension_cap: Option<usize>,
    #[serde(default)]
    pub family: Option<PairFamily>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub level: Option<usize>,
    #[serde(default)]
    pub nk: Option<(usize, usize)>,
    #[serde(default)]
    pub check_riesz_arveson: Option<bool>,
}

impl CampaignDef {
    pub fn config(&self, tol: f64) -> CampaignConfig {
        let d = CampaignConfig::default();
        CampaignConfig {
            count: self.count.unwrap_or(d.count),
            dimension_cap: self.dimension_cap.unwrap_or(d.dimension_cap),
            family: self.family.unwrap_or(d.family),
            seed: self.seed.unwrap_or(d.seed),
            level: self.level.unwrap_or(d.level),
            nk: self.nk.unwrap_or(d.nk),
            check_riesz_arveson: self.check_riesz_arveson.unwrap_or(d.check_riesz_arveson),
            tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ProblemDef {
    /// Strict interpolant `x_i < a < y_j` in `system`.
    Interpolation {
        name: String,
        system: String,
        lower: Vec<MatrixDef>,
        upper: Vec<MatrixDef>,
        #[serde(default)]
        expect: Option<Status>,
    },
    /// CP extensions of maps on `small` to `big` under sum identities.
    Extension {
        name: String,
        small: String,
        big: String,
        maps: Vec<MapDef>,
        #[serde(default)]
        sums: Vec<SumConstraint>,
        #[serde(default)]
        dominance: Vec<(usize, usize)>,
        #[serde(default)]
        expect: Option<Status>,
    },
    /// Strict positivity of a tuple in the interpolation quotient of
    /// `system` with `lower` plus slots.
    Cone {
        name: String,
        system: String,
        lower: usize,
        tuple: Vec<MatrixDef>,
        #[serde(default)]
        expect: Option<Status>,
    },
    Campaign {
        name: String,
        #[serde(default)]
        config: CampaignDef,
    },
}

impl ProblemDef {
    pub fn name(&self) -> &str {
        match self {
            ProblemDef::Interpolation { name, .. }
            | ProblemDef::Extension { name, .. }
            | ProblemDef::Cone { name, .. }
            | ProblemDef::Campaign { name, .. } => name,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub version: u32,
    #[serde(default)]
    pub systems: BTreeMap<String, SystemDef>,
    #[serde(default)]
    pub problems: Vec<ProblemDef>,
}

impl InstanceFile {
    pub fn parse(text: &str, path: &str) -> Result<Self, InputError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: InstanceFile = serde_path_to_error::deserialize(de).map_err(|e| InputError::Parse {
            path: path.to_string(),
            message: format!("at `{}`: {}", e.path(), e.inner()),
        })?;
        if file.version != FORMAT_VERSION {
            return Err(InputError::Version(file.version));
        }
        Ok(file)
    }

    pub fn load(path: &Path) -> Result<Self, InputError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| InputError::Io { path: p.clone(), source })?;
        Self::parse(&text, &p)
    }

    /// Builds every named system.
    pub fn systems(&self) -> Result<BTreeMap<String, Arc<OperatorSystem>>, InputError> {
        self.systems.iter().map(|(k, v)| Ok((k.clone(), Arc::new(v.build(k)?)))).collect()
    }
}
