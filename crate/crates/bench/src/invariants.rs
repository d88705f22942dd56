//! Post-hoc checks of a finished run against the algorithm laws: monotone
//! incumbent, radius update ratios, the sufficient-increase skip rule,
//! termination and budget accounting, step ordering and history coverage.

use dirattack_core::hybrid::{
    sufficient_increase, HybridConfig, ATK_EXPAND, ATK_SHRINK, RLS_EXPAND, RLS_FAIL, RLS_SHRINK,
};
use dirattack_core::problem::TrialTag;
use dirattack_core::trace::{AttackResult, IterationRecord, Method, StopReason, WinningStep};
use dirattack_core::RunResult;
use serde::Serialize;

use crate::catalog::KnownOptimum;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub rule: &'static str,
    pub detail: String,
}

struct Checker {
    violations: Vec<Violation>,
}

impl Checker {
    fn require(&mut self, ok: bool, rule: &'static str, detail: impl FnOnce() -> String) {
        if !ok {
            self.violations.push(Violation {
                rule,
                detail: detail(),
            });
        }
    }
}

/// All violations found in `run`, which was produced by `method` under
/// `config`. `optimum`, when known, bounds every reported value.
pub fn check_run(
    method: Method,
    config: &HybridConfig,
    run: &RunResult,
    optimum: Option<&KnownOptimum>,
) -> Vec<Violation> {
    let mut ck = Checker {
        violations: Vec::new(),
    };
    check_monotone(&mut ck, run);
    check_history(&mut ck, run);
    check_budget(&mut ck, config, run);
    match method {
        Method::Cdsm => check_cdsm(&mut ck, run),
        Method::Hyb => check_hybrid(&mut ck, config, run),
        Method::Atk => check_attack_only(&mut ck, run),
        Method::Rls => check_rls(&mut ck, run),
    }
    check_step_order(&mut ck, run);
    check_termination(&mut ck, method, config, run);
    if let Some(opt) = optimum {
        ck.require(
            run.incumbent.fval <= opt.value + opt.tolerance,
            "oracle soundness",
            || {
                format!(
                    "{} exceeds {} + {}",
                    run.incumbent.fval, opt.value, opt.tolerance
                )
            },
        );
    }
    ck.violations
}

fn start_value(run: &RunResult) -> f64 {
    run.history.get(0).map_or(f64::NAN, |r| r.fval)
}

fn check_monotone(ck: &mut Checker, run: &RunResult) {
    let mut prev = start_value(run);
    for it in &run.trace.iterations {
        ck.require(it.incumbent_f >= prev, "monotone incumbent", || {
            format!("iteration {}: {} after {}", it.k, it.incumbent_f, prev)
        });
        prev = it.incumbent_f;
    }
    for w in run.trace.curve.windows(2) {
        ck.require(
            w[1].best_f >= w[0].best_f && w[1].eval_count > w[0].eval_count,
            "monotone curve",
            || format!("{:?} then {:?}", w[0], w[1]),
        );
    }
    let end = run.trace.curve.last().map(|p| p.best_f);
    ck.require(
        end == Some(run.incumbent.fval),
        "curve ends at incumbent",
        || format!("curve end {:?}, incumbent {}", end, run.incumbent.fval),
    );
}

fn check_history(ck: &mut Checker, run: &RunResult) {
    let len = run.history.len();
    ck.require(
        run.history.evaluations() == run.trace.evaluations,
        "evaluation count",
        || {
            format!(
                "history {} vs trace {}",
                run.history.evaluations(),
                run.trace.evaluations
            )
        },
    );
    for it in &run.trace.iterations {
        ck.require(
            it.trials.iter().all(|&i| i < len) && it.incumbent_index < len,
            "history superset",
            || format!("iteration {} refers past the history ({len})", it.k),
        );
        if let Some(rec) = run.history.get(it.incumbent_index) {
            ck.require(rec.fval == it.incumbent_f, "incumbent in history", || {
                format!("iteration {}: {} vs {}", it.k, rec.fval, it.incumbent_f)
            });
        }
    }
    let same = run
        .history
        .get(run.incumbent.index)
        .is_some_and(|r| r.x == run.incumbent.x && r.fval == run.incumbent.fval);
    ck.require(same, "incumbent in history", || {
        format!("final incumbent #{} not in history", run.incumbent.index)
    });
}

fn check_budget(ck: &mut Checker, config: &HybridConfig, run: &RunResult) {
    let cap = config.dsm.budget.max(1);
    ck.require(run.trace.evaluations <= cap, "budget cap", || {
        format!("{} evaluations, budget {}", run.trace.evaluations, cap)
    });
}

/// Iterations whose radii were updated, with their predecessor value.
fn updated(run: &RunResult) -> impl Iterator<Item = (f64, &IterationRecord)> {
    let mut prev = start_value(run);
    run.trace.iterations.iter().filter_map(move |it| {
        let before = prev;
        prev = it.incumbent_f;
        (!it.truncated).then_some((before, it))
    })
}

fn ratio_rule(
    ck: &mut Checker,
    rule: &'static str,
    it: &IterationRecord,
    r: Option<f64>,
    next: Option<f64>,
    expected: f64,
) {
    ck.require(r.is_some() && next == r.map(|r| r * expected), rule, || {
        format!(
            "iteration {}: {:?} -> {:?}, expected ratio {}",
            it.k, r, next, expected
        )
    });
}

fn dsm_improved(step: WinningStep) -> bool {
    matches!(
        step,
        WinningStep::Covering | WinningStep::Search | WinningStep::Poll
    )
}

fn check_cdsm(ck: &mut Checker, run: &RunResult) {
    for (_, it) in updated(run) {
        let ratio = if dsm_improved(it.winning_step) {
            2.0
        } else {
            0.5
        };
        ratio_rule(ck, "cdsm radius law", it, it.r_dsm, it.next_r_dsm, ratio);
    }
}

fn check_hybrid(ck: &mut Checker, config: &HybridConfig, run: &RunResult) {
    let mut skips = 0usize;
    let mut min_abs = f64::INFINITY;
    for (before, it) in updated(run) {
        let outcome = it.attack_outcome;
        let improved = matches!(
            outcome,
            Some(AttackResult::Sufficient | AttackResult::Simple)
        );
        ratio_rule(
            ck,
            "attack radius law",
            it,
            it.r_atk,
            it.next_r_atk,
            if improved { 2.0 } else { 0.5 },
        );
        if outcome == Some(AttackResult::Sufficient) {
            skips += 1;
            min_abs = min_abs.min(before.abs());
            ck.require(
                it.winning_step == WinningStep::AttackSkip
                    && sufficient_increase(&config.si, it.incumbent_f, before),
                "skip soundness",
                || {
                    format!(
                        "iteration {}: {:?}, {} from {}",
                        it.k, it.winning_step, it.incumbent_f, before
                    )
                },
            );
            ck.require(it.next_r_dsm == it.r_dsm, "skip keeps dsm radius", || {
                format!("iteration {}: {:?} -> {:?}", it.k, it.r_dsm, it.next_r_dsm)
            });
        } else {
            ck.require(
                it.winning_step != WinningStep::AttackSkip,
                "skip soundness",
                || format!("iteration {}: skip without sufficient increase", it.k),
            );
            let ratio = if dsm_improved(it.winning_step) {
                2.0
            } else {
                0.5
            };
            ratio_rule(ck, "dsm radius law", it, it.r_dsm, it.next_r_dsm, ratio);
        }
    }
    if skips > 0 {
        let gain = run.incumbent.fval - start_value(run);
        let per_skip = config.si.tau * (min_abs + config.si.eps);
        let bound = (gain / per_skip).floor();
        ck.require(skips as f64 <= bound, "skip count bound", || {
            format!("{skips} skips, bound {bound}")
        });
    }
}

fn check_attack_only(ck: &mut Checker, run: &RunResult) {
    for (_, it) in updated(run) {
        let ratio = if it.winning_step == WinningStep::Attack {
            ATK_EXPAND
        } else {
            ATK_SHRINK
        };
        ratio_rule(
            ck,
            "attack-only radius law",
            it,
            it.r_atk,
            it.next_r_atk,
            ratio,
        );
    }
}

fn check_rls(ck: &mut Checker, run: &RunResult) {
    let mut prev_x = run.history.get(0).map(|r| r.x.clone()).unwrap_or_default();
    for it in &run.trace.iterations {
        let x = run
            .history
            .get(it.incumbent_index)
            .map(|r| r.x.clone())
            .unwrap_or_default();
        if !it.truncated {
            if it.winning_step == WinningStep::LineSearch {
                let r = it.r_dsm.unwrap_or(f64::NAN);
                let next = it.next_r_dsm.unwrap_or(f64::NAN);
                let allowed = [r * RLS_EXPAND, r, r * RLS_SHRINK];
                let step: f64 = x
                    .iter()
                    .zip(&prev_x)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                ck.require(
                    allowed.contains(&next) && (step - next).abs() <= 1e-9 * next.max(1.0),
                    "line-search radius law",
                    || format!("iteration {}: r {r}, next {next}, step {step}", it.k),
                );
            } else {
                ratio_rule(
                    ck,
                    "line-search radius law",
                    it,
                    it.r_dsm,
                    it.next_r_dsm,
                    RLS_FAIL,
                );
            }
        }
        prev_x = x;
    }
}

fn rank(tag: TrialTag) -> u8 {
    match tag {
        TrialTag::Initial => 0,
        TrialTag::Attack | TrialTag::LineSearch => 1,
        TrialTag::Covering => 2,
        TrialTag::Search => 3,
        TrialTag::Poll => 4,
    }
}

/// New evaluations of an iteration follow the step order, and none comes
/// from a step after the improving one.
fn check_step_order(ck: &mut Checker, run: &RunResult) {
    let mut seen = 1usize;
    for it in &run.trace.iterations {
        // a later step may revisit a point first evaluated earlier in the
        // same iteration; only first occurrences carry step order
        let mut first = std::collections::HashSet::new();
        let fresh: Vec<TrialTag> = it
            .trials
            .iter()
            .filter(|&&i| i >= seen && first.insert(i))
            .filter_map(|&i| run.history.get(i).map(|r| r.tag))
            .collect();
        ck.require(
            fresh.windows(2).all(|w| rank(w[0]) <= rank(w[1])),
            "opportunistic ordering",
            || format!("iteration {}: {:?}", it.k, fresh),
        );
        let last_allowed = match it.winning_step {
            WinningStep::AttackSkip => Some(rank(TrialTag::Attack)),
            WinningStep::Covering => Some(rank(TrialTag::Covering)),
            WinningStep::Search => Some(rank(TrialTag::Search)),
            _ => None,
        };
        if let Some(limit) = last_allowed {
            ck.require(
                fresh.iter().all(|t| rank(*t) <= limit),
                "opportunistic ordering",
                || {
                    format!(
                        "iteration {}: {:?} after {:?}",
                        it.k, fresh, it.winning_step
                    )
                },
            );
        }
        seen = seen.max(it.evals_so_far);
    }
}

fn check_termination(ck: &mut Checker, method: Method, config: &HybridConfig, run: &RunResult) {
    let dsm = &config.dsm;
    match run.trace.stop {
        StopReason::Radius => {
            let last = run.trace.iterations.last();
            let final_radius = match method {
                Method::Cdsm | Method::Rls => last.and_then(|i| i.next_r_dsm).unwrap_or(dsm.r0),
                Method::Atk => last.and_then(|i| i.next_r_atk).unwrap_or(config.r_atk0),
                Method::Hyb => {
                    let a = last.and_then(|i| i.next_r_atk).unwrap_or(config.r_atk0);
                    let d = last.and_then(|i| i.next_r_dsm).unwrap_or(dsm.r0);
                    a.max(d)
                }
            };
            ck.require(final_radius < dsm.stop_radius, "termination", || {
                format!("stopped on radius {final_radius}")
            });
        }
        StopReason::Budget => {
            ck.require(run.trace.evaluations >= dsm.budget, "termination", || {
                format!(
                    "budget stop after {} of {}",
                    run.trace.evaluations, dsm.budget
                )
            });
        }
    }
}
