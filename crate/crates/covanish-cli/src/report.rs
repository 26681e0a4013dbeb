//! Structured command reports.
//!
//! A report echoes the command, carries one verdict per check with an
//! optional witness, and records cost as guard steps. Guard steps are the
//! only timing notion anywhere, so a report is a pure function of the
//! workspace, the command, and the seed: two runs with identical inputs
//! emit identical bytes in both formats.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The check does not apply to this input; never counts as a failure.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    pub status: Status,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl Verdict {
    pub fn pass(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Verdict { name: name.into(), status: Status::Pass, detail: detail.into(), witness: None }
    }

    pub fn fail(
        name: impl Into<String>,
        detail: impl Into<String>,
        witness: Option<String>,
    ) -> Self {
        Verdict { name: name.into(), status: Status::Fail, detail: detail.into(), witness }
    }

    pub fn skip(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Verdict { name: name.into(), status: Status::Skip, detail: detail.into(), witness: None }
    }

    pub fn check(
        name: impl Into<String>,
        ok: bool,
        detail: impl Into<String>,
        witness: Option<String>,
    ) -> Self {
        if ok {
            Verdict::pass(name, detail)
        } else {
            Verdict::fail(name, detail, witness)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub args: Vec<String>,
    pub workspace: String,
    pub seed: u64,
    pub guard_limit: u64,
    /// Deterministic cost: guard steps spent on load plus command.
    pub guard_used: u64,
    pub verdicts: Vec<Verdict>,
    pub overall: Status,
}

impl Report {
    pub fn new(
        command: &str,
        args: &[String],
        workspace: &str,
        seed: u64,
        guard_limit: u64,
        guard_used: u64,
        verdicts: Vec<Verdict>,
    ) -> Self {
        let overall = if verdicts.iter().any(|v| v.status == Status::Fail) {
            Status::Fail
        } else {
            Status::Pass
        };
        Report {
            command: command.to_string(),
            args: args.to_vec(),
            workspace: workspace.to_string(),
            seed,
            guard_limit,
            guard_used,
            verdicts,
            overall,
        }
    }

    pub fn passed(&self) -> bool {
        self.overall == Status::Pass
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("command: {}", self.command));
        for a in &self.args {
            out.push_str(&format!(" {a}"));
        }
        out.push('\n');
        out.push_str(&format!("workspace: {}\n", self.workspace));
        out.push_str(&format!("seed: {}\n", self.seed));
        for v in &self.verdicts {
            let word = match v.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Skip => "SKIP",
            };
            out.push_str(&format!("{word} {}: {}", v.name, v.detail));
            if let Some(w) = &v.witness {
                out.push_str(&format!(" [witness: {w}]"));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "guard steps: {} of {} used\n",
            self.guard_used, self.guard_limit
        ));
        out.push_str(&format!(
            "overall: {}\n",
            match self.overall {
                Status::Pass => "pass",
                Status::Fail => "fail",
                Status::Skip => "skip",
            }
        ));
        out
    }

    pub fn render_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Structured reports are self-describing: the JSON emission parses
    /// back into the same value.
    pub fn from_json(text: &str) -> Result<Report, serde_json::Error> {
        serde_json::from_str(text)
    }
}
