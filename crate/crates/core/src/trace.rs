//! Per-iteration run records consumed by the experiment harness.

use serde::Serialize;

use crate::problem::{EvalRecord, TrialHistory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Attack-only baseline.
    Atk,
    /// Random line search baseline.
    Rls,
    /// Covering direct search.
    Cdsm,
    /// Attack first, covering direct search when the attack is not enough.
    Hyb,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Atk, Method::Rls, Method::Cdsm, Method::Hyb];

    pub fn name(self) -> &'static str {
        match self {
            Method::Atk => "atk",
            Method::Rls => "rls",
            Method::Cdsm => "cdsm",
            Method::Hyb => "hyb",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown method {s:?} (expected atk, rls, cdsm or hyb)"))
    }
}

/// How the attack step of a hybrid iteration ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackResult {
    /// Passed the sufficient-increase test; direct search was skipped.
    Sufficient,
    /// Improved the incumbent, but not enough to skip direct search.
    Simple,
    Fail,
}

/// The step that produced the next incumbent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WinningStep {
    AttackSkip,
    /// Attack-only baseline improvement.
    Attack,
    /// Random line search improvement.
    LineSearch,
    Covering,
    Search,
    Poll,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    /// Hybrid runs only.
    pub attack_outcome: Option<AttackResult>,
    pub winning_step: WinningStep,
    /// Attack radius used in this iteration (attack-based methods).
    pub r_atk: Option<f64>,
    /// Direct-search or line-search radius used in this iteration.
    pub r_dsm: Option<f64>,
    pub next_r_atk: Option<f64>,
    pub next_r_dsm: Option<f64>,
    /// Indices into the history of the points tried this iteration, cache
    /// hits included.
    pub trials: Vec<usize>,
    pub evals_so_far: usize,
    pub incumbent_f: f64,
    pub incumbent_index: usize,
    /// Hybrid runs: history index of the attack-step winner `t_atk`, the
    /// base point of the direct-search phase.
    pub dsm_base: Option<usize>,
    /// Cut short by the evaluation budget; radii were not updated.
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    Radius,
    Budget,
}

/// Running best feasible objective after a given number of evaluations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub eval_count: usize,
    pub best_f: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunTrace {
    pub method: Method,
    pub iterations: Vec<IterationRecord>,
    /// One point per evaluation at which the incumbent value changed, plus
    /// the first evaluation.
    pub curve: Vec<CurvePoint>,
    pub stop: StopReason,
    pub evaluations: usize,
}

impl RunTrace {
    /// Incumbent value after `evals` evaluations, `None` before the first.
    pub fn best_at(&self, evals: usize) -> Option<f64> {
        self.curve
            .iter()
            .take_while(|p| p.eval_count <= evals)
            .last()
            .map(|p| p.best_f)
    }

    /// First evaluation count whose incumbent value reaches `target`.
    pub fn evals_to_reach(&self, target: f64) -> Option<usize> {
        self.curve
            .iter()
            .find(|p| p.best_f >= target)
            .map(|p| p.eval_count)
    }
}

/// Running maximum of feasible values in evaluation order.
pub fn incumbent_curve(history: &TrialHistory) -> Vec<CurvePoint> {
    let mut curve: Vec<CurvePoint> = Vec::new();
    let mut best = f64::NEG_INFINITY;
    for r in history.records() {
        if r.feasible && r.fval > best {
            best = r.fval;
        }
        if curve.last().map_or(true, |p| p.best_f != best) {
            curve.push(CurvePoint {
                eval_count: r.index + 1,
                best_f: best,
            });
        }
    }
    curve
}

/// A finished run: final incumbent, trace and the full evaluation history.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub incumbent: EvalRecord,
    pub trace: RunTrace,
    pub history: TrialHistory,
}
