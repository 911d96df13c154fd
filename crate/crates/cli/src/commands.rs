//! The three subcommands, as library functions returning reports.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use opsys_core::cones::{interpolation_quotient, quotient_strict_member, tuple_element};
use opsys_core::cpmaps::{self, ExtensionProblem};
use opsys_core::opsys::{make_linf, namioka_phelps, OperatorSystem};
use opsys_core::riesz::{
    classic_functionals, classic_interpolation_data, interpolate, run_campaign, CampaignConfig, InterpolationInstance,
};
use opsys_core::scalar::{rational_to_string, Field};
use opsys_core::sdp::{self, FeasibilityVerdict, LmiProblem, Method, Status};
use opsys_core::{Herm, Rational};

use crate::instance::{InputError, InstanceFile, MatrixDef, ProblemDef, Scalar};
use crate::report::{status_name, CampaignEntry, Outcome, ProblemReport, RunReport};

pub const DEFAULT_TOL: f64 = 1e-9;

/// Tolerance used to re-check barrier witnesses; exact ones replay at zero.
fn replay_tol(v: &FeasibilityVerdict, tol: f64) -> f64 {
    match v.method {
        Method::ExactLp => 0.0,
        Method::Barrier => (100.0 * tol).max(1e-8),
    }
}

/// Replays the verdict, demoting it to Unknown when the replay fails, and
/// scores it against the expectation.
fn finish(
    name: &str,
    kind: &str,
    systems: Vec<String>,
    lmi: &LmiProblem,
    mut verdict: FeasibilityVerdict,
    expected: Option<Status>,
    tol: f64,
) -> ProblemReport {
    let mut notes = Vec::new();
    let replayed = match verdict.status {
        Status::Unknown => false,
        _ => match sdp::replay_check(lmi, &verdict, replay_tol(&verdict, tol)) {
            Ok(true) => true,
            Ok(false) | Err(_) => {
                notes.push(format!("{} verdict failed replay", status_name(verdict.status)));
                verdict.status = Status::Unknown;
                false
            }
        },
    };
    let outcome = match expected {
        None => Outcome::Ok,
        Some(_) if verdict.status == Status::Unknown => Outcome::Unknown,
        Some(e) if e == verdict.status => Outcome::Ok,
        Some(_) => Outcome::Mismatch,
    };
    ProblemReport { name: name.into(), kind: kind.into(), systems, verdict, expected, replayed, interpolant: None, notes, outcome }
}

/// The interpolant of a feasible verdict; exact entries for exact witnesses
/// on diagonal systems.
fn interpolant_of(inst: &InterpolationInstance, v: &FeasibilityVerdict) -> Option<MatrixDef> {
    let w = v.witness.as_ref()?;
    if let (Some(ex), true) = (&w.exact, inst.system.is_diagonal()) {
        let n = inst.system.ambient_dim();
        let mut diag = vec![Rational::from_f64_exact(0.0); n];
        for (c, b) in ex.x.iter().zip(inst.system.basis()) {
            for (r, e) in b.diagonal().into_iter().enumerate() {
                diag[r] = diag[r].clone() + c.clone() * Rational::from_f64_exact(e);
            }
        }
        return Some(MatrixDef { diag: Some(diag.iter().map(|q| Scalar::Text(rational_to_string(q))).collect()), rows: None });
    }
    let a = inst.system.combine(&w.x);
    if a.is_diagonal() {
        return Some(MatrixDef { diag: Some(a.diagonal().into_iter().map(Scalar::Number).collect()), rows: None });
    }
    None
}

fn interpolation_report(
    name: &str,
    inst: &InterpolationInstance,
    expected: Option<Status>,
    tol: f64,
) -> Result<ProblemReport, opsys_core::Error> {
    let lmi = inst.lmi();
    let v = interpolate(inst, tol)?;
    let interpolant = if v.is_feasible() { interpolant_of(inst, &v) } else { None };
    let mut r = finish(name, "interpolation", vec![inst.system.label().to_string()], &lmi, v, expected, tol);
    r.interpolant = interpolant;
    Ok(r)
}

fn extension_report(
    name: &str,
    p: &ExtensionProblem,
    expected: Option<Status>,
    tol: f64,
) -> Result<ProblemReport, opsys_core::Error> {
    let v = cpmaps::solve_extension(p, tol)?;
    let systems = vec![p.small.label().to_string(), p.big.label().to_string()];
    Ok(finish(name, "extension", systems, &p.to_lmi(), v, expected, tol))
}

/// The worked counterexamples: interpolation of the classic data in `ℓ∞_4`
/// (feasible, margin 1/2) and in `V` (infeasible), and the coordinate
/// functionals on `V` (no positive extensions keeping the sum identity).
///
/// With `loosen_v` the system `V` is replaced by `ℓ∞_4`, which flips the
/// second verdict and must be reported as a mismatch.
pub fn cmd_examples(tol: f64, loosen_v: bool) -> Result<RunReport, opsys_core::Error> {
    let start = Instant::now();
    let mut report = RunReport::new(if loosen_v { "examples --loosen-v" } else { "examples" }, tol);
    let l4 = Arc::new(make_linf(4)?.with_label("l∞4"));
    let v = Arc::new(namioka_phelps().with_label("V"));
    let (lower, upper) = classic_interpolation_data();

    let big = InterpolationInstance::new(l4.clone(), lower.clone(), upper.clone())?;
    let mut r = interpolation_report("interpolation-linf4", &big, Some(Status::Feasible), tol)?;
    require_exact(&mut r);
    if r.verdict.is_feasible() && r.verdict.best_delta < 0.5 {
        r.notes.push(format!("margin {} is below 1/2", r.verdict.best_delta));
        r.outcome = Outcome::Mismatch;
    }
    report.push(r);

    let small_system = if loosen_v { Arc::new(make_linf(4)?.with_label("V without its constraint")) } else { v.clone() };
    let small = InterpolationInstance::new(small_system, lower, upper)?;
    let mut r = interpolation_report("interpolation-v", &small, Some(Status::Infeasible), tol)?;
    require_exact(&mut r);
    if r.verdict.is_infeasible() && r.verdict.certificate.is_none() {
        r.notes.push("no exact certificate".into());
        r.outcome = Outcome::Mismatch;
    }
    report.push(r);

    let maps = classic_functionals(&v)?;
    let p = cpmaps::riesz_arveson_problem(v.clone(), l4, 2, 2, maps, tol)?;
    let mut r = extension_report("extension-v-linf4", &p, Some(Status::Infeasible), tol)?;
    require_exact(&mut r);
    report.push(r);

    report.elapsed = start.elapsed();
    Ok(report)
}

fn require_exact(r: &mut ProblemReport) {
    if r.verdict.method != Method::ExactLp {
        r.notes.push("expected the exact path".into());
        r.outcome = r.outcome.max(Outcome::Mismatch);
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CheckError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("problem {problem:?}: {source}")]
    Solver { problem: String, source: opsys_core::Error },
}

fn lookup<'a>(
    systems: &'a BTreeMap<String, Arc<OperatorSystem>>,
    problem: &str,
    name: &str,
) -> Result<&'a Arc<OperatorSystem>, InputError> {
    systems.get(name).ok_or_else(|| InputError::Invalid {
        context: format!("problem {problem:?}"),
        message: format!("unknown system {name:?}"),
    })
}

fn matrices(defs: &[MatrixDef], context: &str) -> Result<Vec<Herm>, InputError> {
    defs.iter().enumerate().map(|(i, m)| m.build(&format!("{context}[{i}]"))).collect()
}

/// Matrix level of data written over `s`.
fn level_of(s: &OperatorSystem, data: &[Herm], context: &str) -> Result<usize, InputError> {
    let n = s.ambient_dim();
    let d = data.first().map_or(n, Herm::dim);
    if !d.is_multiple_of(n) || d == 0 {
        return Err(InputError::Invalid {
            context: context.into(),
            message: format!("dimension {d} is not a multiple of the ambient dimension {n}"),
        });
    }
    Ok(d / n)
}

/// Runs every problem of an instance file.
pub fn cmd_check(file: &InstanceFile, tol: f64) -> Result<RunReport, CheckError> {
    let start = Instant::now();
    let mut report = RunReport::new("check", tol);
    let systems = file.systems()?;
    for prob in &file.problems {
        let pname = prob.name().to_string();
        let solver = |source| CheckError::Solver { problem: pname.clone(), source };
        let ctx = format!("problem {pname:?}");
        match prob {
            ProblemDef::Interpolation { name, system, lower, upper, expect } => {
                let s = lookup(&systems, name, system)?;
                let lower = matrices(lower, &format!("{ctx} lower"))?;
                let upper = matrices(upper, &format!("{ctx} upper"))?;
                let m = level_of(s, &lower, &ctx)?;
                let s = if m == 1 { s.clone() } else { Arc::new(s.amplify(m).map_err(solver)?) };
                let inst = InterpolationInstance::new(s, lower, upper).map_err(solver)?;
                report.push(interpolation_report(name, &inst, *expect, tol).map_err(solver)?);
            }
            ProblemDef::Extension { name, small, big, maps, sums, dominance, expect } => {
                let small = lookup(&systems, name, small)?.clone();
                let big = lookup(&systems, name, big)?.clone();
                let maps = maps
                    .iter()
                    .enumerate()
                    .map(|(i, m)| m.build(&small, &format!("{ctx} maps[{i}]")))
                    .collect::<Result<Vec<_>, _>>()?;
                let mut p = ExtensionProblem::new(small, big, maps);
                p.sum_constraints = sums.clone();
                p.dominance = dominance.clone();
                report.push(extension_report(name, &p, *expect, tol).map_err(solver)?);
            }
            ProblemDef::Cone { name, system, lower, tuple, expect } => {
                let s = lookup(&systems, name, system)?;
                let tuple = matrices(tuple, &format!("{ctx} tuple"))?;
                if *lower == 0 || *lower >= tuple.len() {
                    return Err(InputError::Invalid {
                        context: ctx,
                        message: "`lower` must leave at least one slot on each side".into(),
                    }
                    .into());
                }
                let m = level_of(s, &tuple, &ctx)?;
                let q = Arc::new(interpolation_quotient(s, *lower, tuple.len() - lower).map_err(solver)?);
                let e = tuple_element(q, &tuple, m).map_err(solver)?;
                let v = quotient_strict_member(&e, tol).map_err(solver)?;
                report.push(finish(name, "cone", vec![s.label().to_string()], &e.lmi(), v, *expect, tol));
            }
            ProblemDef::Campaign { name, config } => {
                let cfg = config.config(tol);
                report.push_campaign(campaign_entry(name, &cfg).map_err(solver)?);
            }
        }
    }
    report.elapsed = start.elapsed();
    Ok(report)
}

pub fn cmd_check_path(path: &Path, tol: f64) -> Result<RunReport, CheckError> {
    cmd_check(&InstanceFile::load(path)?, tol)
}

fn campaign_entry(name: &str, cfg: &CampaignConfig) -> Result<CampaignEntry, opsys_core::Error> {
    let report = run_campaign(cfg)?;
    let outcome = if report.passed() { Outcome::Ok } else { Outcome::Mismatch };
    Ok(CampaignEntry { name: name.into(), outcome, report })
}

/// One seeded campaign; fails when an algebra pair shows a violation that
/// survives triage, or any replay fails.
pub fn cmd_campaign(cfg: &CampaignConfig) -> Result<RunReport, opsys_core::Error> {
    let start = Instant::now();
    let mut report = RunReport::new("campaign", cfg.tol);
    let name = format!("{}-n{}-k{}-level{}-seed{}", cfg.family.name(), cfg.nk.0, cfg.nk.1, cfg.level, cfg.seed);
    report.push_campaign(campaign_entry(&name, cfg)?);
    report.elapsed = start.elapsed();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples_meet_expectations() {
        let r = cmd_examples(DEFAULT_TOL, false).unwrap();
        assert_eq!(r.outcome, Outcome::Ok, "{}", r.to_text());
        let d = r.problems[0].interpolant.as_ref().unwrap().diag.as_ref().unwrap();
        assert_eq!(d.len(), 4);
        assert!(r.problems.iter().all(|p| p.replayed));
        assert!(r.problems[1].verdict.certificate.is_some());
    }

    #[test]
    fn loosened_v_flips_to_feasible() {
        let r = cmd_examples(DEFAULT_TOL, true).unwrap();
        assert_eq!(r.problems[1].verdict.status, Status::Feasible);
        assert_eq!(r.problems[1].outcome, Outcome::Mismatch);
        assert_eq!(r.outcome.exit_code(), 1);
    }

    #[test]
    fn empty_file_is_an_empty_success() {
        let f = InstanceFile::parse(r#"{"version": 1, "problems": []}"#, "empty").unwrap();
        let r = cmd_check(&f, DEFAULT_TOL).unwrap();
        assert!(r.problems.is_empty());
        assert_eq!(r.outcome, Outcome::Ok);
    }

    #[test]
    fn zero_count_campaign_is_empty() {
        let cfg = CampaignConfig { count: 0, ..Default::default() };
        let r = cmd_campaign(&cfg).unwrap();
        assert!(r.campaigns[0].report.records.is_empty());
        assert_eq!(r.outcome, Outcome::Ok);
    }

    #[test]
    fn replay_failure_demotes_to_unknown() {
        let (lower, upper) = classic_interpolation_data();
        let inst = InterpolationInstance::new(Arc::new(make_linf(4).unwrap()), lower, upper).unwrap();
        let mut v = interpolate(&inst, DEFAULT_TOL).unwrap();
        let w = v.witness.as_mut().unwrap();
        w.x[0] += 10.0;
        w.exact = None;
        v.method = Method::Barrier;
        let r = finish("tampered", "interpolation", vec![], &inst.lmi(), v, Some(Status::Feasible), DEFAULT_TOL);
        assert_eq!(r.verdict.status, Status::Unknown);
        assert_eq!(r.outcome, Outcome::Unknown);
    }
}
