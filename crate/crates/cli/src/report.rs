//! Run reports: a JSON document for machines and a text rendering for people.
//!
//! Wall-clock time appears only in the text, so identical runs produce
//! byte-identical JSON.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use opsys_core::riesz::CampaignReport;
use opsys_core::sdp::{FeasibilityVerdict, Method, Status};

use crate::instance::MatrixDef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Ok,
    /// A required decision came back undecided.
    Unknown,
    /// A verdict contradicted its expectation, or a campaign failed.
    Mismatch,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Ok => 0,
            Outcome::Mismatch => 1,
            Outcome::Unknown => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemReport {
    pub name: String,
    pub kind: String,
    pub systems: Vec<String>,
    pub verdict: FeasibilityVerdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub expected: Option<Status>,
    /// Witness or certificate re-checked against the problem.
    pub replayed: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub interpolant: Option<MatrixDef>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
    pub outcome: Outcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignEntry {
    pub name: String,
    pub outcome: Outcome,
    pub report: CampaignReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub tol: f64,
    pub problems: Vec<ProblemReport>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub campaigns: Vec<CampaignEntry>,
    pub outcome: Outcome,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl RunReport {
    pub fn new(command: impl Into<String>, tol: f64) -> Self {
        Self {
            command: command.into(),
            tol,
            problems: Vec::new(),
            campaigns: Vec::new(),
            outcome: Outcome::Ok,
            elapsed: Duration::ZERO,
        }
    }

    pub fn push(&mut self, p: ProblemReport) {
        self.outcome = self.outcome.max(p.outcome);
        self.problems.push(p);
    }

    pub fn push_campaign(&mut self, c: CampaignEntry) {
        self.outcome = self.outcome.max(c.outcome);
        self.campaigns.push(c);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports serialize");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} (tol {:e})", self.command, self.tol);
        for p in &self.problems {
            let v = &p.verdict;
            let method = match v.method {
                Method::ExactLp => "exact",
                Method::Barrier => "barrier",
            };
            let _ = write!(s, "  {:<28} {:<13} {:<10} {:<7}", p.name, p.kind, status_name(v.status), method);
            if v.best_delta.is_finite() {
                let _ = write!(s, " δ={:.6}", v.best_delta);
            }
            if let Some(e) = p.expected {
                let _ = write!(s, " expected {}", status_name(e));
            }
            let _ = writeln!(s, " [{}]", outcome_name(p.outcome));
            if let Some(d) = p.interpolant.as_ref().and_then(|m| m.diag.as_ref()) {
                let entries: Vec<String> = d
                    .iter()
                    .map(|x| match x {
                        crate::instance::Scalar::Number(v) => format!("{v}"),
                        crate::instance::Scalar::Text(t) => t.clone(),
                    })
                    .collect();
                let _ = writeln!(s, "      interpolant ({})", entries.join(", "));
            }
            if v.certificate.is_some() {
                let _ = writeln!(s, "      exact infeasibility certificate replayed: {}", p.replayed);
            }
            for n in &p.notes {
                let _ = writeln!(s, "      {n}");
            }
        }
        for c in &self.campaigns {
            let _ = writeln!(s, "  {} [{}]", c.name, outcome_name(c.outcome));
            for line in c.report.summary().lines() {
                let _ = writeln!(s, "    {line}");
            }
        }
        let _ = writeln!(s, "result {} in {:.3} s", outcome_name(self.outcome), self.elapsed.as_secs_f64());
        s
    }

    /// Writes `<stem>.json` and `<stem>.txt`.
    pub fn write(&self, stem: &Path) -> std::io::Result<()> {
        let with = |ext: &str| {
            let mut p = stem.as_os_str().to_owned();
            p.push(ext);
            std::path::PathBuf::from(p)
        };
        std::fs::write(with(".json"), self.to_json())?;
        std::fs::write(with(".txt"), self.to_text())
    }
}

pub fn status_name(s: Status) -> &'static str {
    match s {
        Status::Feasible => "feasible",
        Status::Infeasible => "infeasible",
        Status::Unknown => "unknown",
    }
}

fn outcome_name(o: Outcome) -> &'static str {
    match o {
        Outcome::Ok => "ok",
        Outcome::Unknown => "UNKNOWN",
        Outcome::Mismatch => "MISMATCH",
    }
}
