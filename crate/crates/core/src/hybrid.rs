//! The attack/direct-search hybrid and the two baselines built from its
//! pieces: attack only and random line search.
//!
//! A hybrid iteration first attacks the incumbent. When the attack winner
//! passes the sufficient-increase test the direct-search steps are skipped;
//! otherwise covering, search and poll run around the attack winner.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attack::{attack_operator, AttackConfig, AttackOutcome};
use crate::dsm::{dsm_phase, unit_sphere, DsmConfig, Runner};
use crate::error::{Error, Result};
use crate::problem::{best_feasible, EvalRecord, ProblemSpec, TrialTag};
use crate::trace::{AttackResult, IterationRecord, Method, RunResult, StopReason, WinningStep};
use crate::vecops::add;

/// Attack-only radius growth after an improvement.
pub const ATK_EXPAND: f64 = 11.0 / 10.0;
/// Attack-only radius shrink after a failure; also used by line search.
pub const ATK_SHRINK: f64 = 2.0 / 3.0;
/// Line-search step multipliers; steps are tried as `13/10·r, r, 10/13·r`.
pub const RLS_EXPAND: f64 = 13.0 / 10.0;
pub const RLS_SHRINK: f64 = 10.0 / 13.0;
/// Line-search radius shrink after a failure.
pub const RLS_FAIL: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SufficientIncreaseParams {
    pub tau: f64,
    pub eps: f64,
}

impl Default for SufficientIncreaseParams {
    fn default() -> Self {
        Self {
            tau: 1e-3,
            eps: 1e-10,
        }
    }
}

/// `(f1 − f2) / (|f2| + ε) ≥ τ`.
pub fn sufficient_increase(si: &SufficientIncreaseParams, f1: f64, f2: f64) -> bool {
    (f1 - f2) / (f2.abs() + si.eps) >= si.tau
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub attack: AttackConfig,
    pub dsm: DsmConfig,
    /// Initial attack radius. Zero turns the attack off entirely.
    pub r_atk0: f64,
    pub si: SufficientIncreaseParams,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            attack: AttackConfig::default(),
            dsm: DsmConfig::default(),
            r_atk0: 1.0,
            si: SufficientIncreaseParams::default(),
        }
    }
}

impl HybridConfig {
    pub fn validate(&self, problem: &ProblemSpec) -> Result<()> {
        self.dsm.validate()?;
        self.attack.validate(problem.m() + problem.p())?;
        if !(self.r_atk0 == 0.0 || (self.r_atk0 > self.dsm.stop_radius && self.r_atk0.is_finite()))
        {
            return Err(Error::Config(format!(
                "r_atk0 must be 0 or exceed stop_radius, got {}",
                self.r_atk0
            )));
        }
        if !(self.si.tau > 0.0 && self.si.eps > 0.0) {
            return Err(Error::Config("tau and eps must be positive".into()));
        }
        Ok(())
    }
}

/// Trial points `x + d` for the evaluable directions of an attack outcome.
fn attack_points(x: &[f64], outcome: &AttackOutcome) -> Vec<Vec<f64>> {
    outcome
        .trial_directions()
        .into_iter()
        .map(|d| add(x, d))
        .collect()
}

/// Attack at `(x, r)`, with no network access at all when `r = 0`.
fn attack_trials(
    problem: &ProblemSpec,
    x: &EvalRecord,
    r: f64,
    config: &AttackConfig,
) -> Result<Vec<Vec<f64>>> {
    if r == 0.0 {
        return Ok(Vec::new());
    }
    Ok(attack_points(
        &x.x,
        &attack_operator(problem, &x.x, r, config)?,
    ))
}

/// The hybrid method.
pub fn hybrid_run(problem: &ProblemSpec, config: &HybridConfig) -> Result<RunResult> {
    config.validate(problem)?;
    let dsm = &config.dsm;
    let mut rng = ChaCha8Rng::seed_from_u64(dsm.rng_seed);
    let (mut runner, mut x) = Runner::start(problem, dsm.budget)?;
    let mut r_atk = config.r_atk0;
    let mut r_dsm = dsm.r0;
    let mut search_count = 0;
    let mut iterations = Vec::new();
    let stop = loop {
        if r_atk.max(r_dsm) < dsm.stop_radius {
            break StopReason::Radius;
        }
        if runner.exhausted() {
            break StopReason::Budget;
        }
        let points = attack_trials(problem, &x, r_atk, &config.attack)?;
        let batch = runner.batch(&points, TrialTag::Attack)?;
        let t_atk = best_feasible(&batch.records, &x).clone();
        let mut trials: Vec<usize> = batch.records.iter().map(|r| r.index).collect();
        let attack_improved = t_atk.fval > x.fval;
        let mut record = IterationRecord {
            k: iterations.len(),
            attack_outcome: None,
            winning_step: WinningStep::None,
            r_atk: Some(r_atk),
            r_dsm: Some(r_dsm),
            next_r_atk: Some(r_atk),
            next_r_dsm: Some(r_dsm),
            trials: Vec::new(),
            evals_so_far: 0,
            incumbent_f: 0.0,
            incumbent_index: 0,
            dsm_base: None,
            truncated: false,
        };
        let next_r_atk = if attack_improved {
            2.0 * r_atk
        } else {
            0.5 * r_atk
        };
        let sufficient = attack_improved && sufficient_increase(&config.si, t_atk.fval, x.fval);
        record.attack_outcome = Some(if sufficient {
            AttackResult::Sufficient
        } else if attack_improved {
            AttackResult::Simple
        } else {
            AttackResult::Fail
        });
        let truncated;
        let next_x;
        if batch.truncated {
            truncated = true;
            record.winning_step = if attack_improved {
                WinningStep::Attack
            } else {
                WinningStep::None
            };
            next_x = t_atk;
        } else if sufficient {
            truncated = false;
            record.winning_step = WinningStep::AttackSkip;
            record.next_r_atk = Some(next_r_atk);
            next_x = t_atk;
        } else {
            let phase = dsm_phase(&mut runner, &t_atk, r_dsm, &mut search_count, dsm, &mut rng)?;
            trials.extend(&phase.trials);
            record.dsm_base = Some(t_atk.index);
            truncated = phase.truncated;
            let dsm_improved = phase.winner.index != t_atk.index;
            record.winning_step = if dsm_improved {
                phase.winning_step
            } else if attack_improved {
                WinningStep::Attack
            } else {
                WinningStep::None
            };
            if !truncated {
                record.next_r_atk = Some(next_r_atk);
                record.next_r_dsm = Some(if dsm_improved {
                    2.0 * r_dsm
                } else {
                    0.5 * r_dsm
                });
            }
            next_x = phase.winner;
        }
        x = next_x;
        record.trials = trials;
        record.truncated = truncated;
        record.evals_so_far = runner.history.evaluations();
        record.incumbent_f = x.fval;
        record.incumbent_index = x.index;
        r_atk = record.next_r_atk.unwrap_or(r_atk);
        r_dsm = record.next_r_dsm.unwrap_or(r_dsm);
        iterations.push(record);
        if truncated {
            break StopReason::Budget;
        }
    };
    Ok(runner.finish(Method::Hyb, x, iterations, stop))
}

#[allow(clippy::too_many_arguments)]
fn simple_record(
    k: usize,
    improved_step: WinningStep,
    improved: bool,
    radius_is_attack: bool,
    r: f64,
    next_r: f64,
    trials: Vec<usize>,
    runner: &Runner<'_>,
    x: &EvalRecord,
    truncated: bool,
) -> IterationRecord {
    let (r_atk, r_dsm, next_r_atk, next_r_dsm) = if radius_is_attack {
        (Some(r), None, Some(next_r), None)
    } else {
        (None, Some(r), None, Some(next_r))
    };
    IterationRecord {
        k,
        attack_outcome: None,
        winning_step: if improved {
            improved_step
        } else {
            WinningStep::None
        },
        r_atk,
        r_dsm,
        next_r_atk,
        next_r_dsm,
        trials,
        evals_so_far: runner.history.evaluations(),
        incumbent_f: x.fval,
        incumbent_index: x.index,
        dsm_base: None,
        truncated,
    }
}

/// Attack-only baseline: the trial set is the union of the attacks at `r`
/// and at `11/10·r`; the radius grows by `11/10` after an improvement and
/// shrinks by `2/3` otherwise. Starts at `r_atk0`.
pub fn attack_only_run(problem: &ProblemSpec, config: &HybridConfig) -> Result<RunResult> {
    config.validate(problem)?;
    let dsm = &config.dsm;
    if !(config.r_atk0 > 0.0) {
        return Err(Error::Config("attack-only runs need r_atk0 > 0".into()));
    }
    let (mut runner, mut x) = Runner::start(problem, dsm.budget)?;
    let mut r = config.r_atk0;
    let mut iterations = Vec::new();
    let stop = loop {
        if r < dsm.stop_radius {
            break StopReason::Radius;
        }
        if runner.exhausted() {
            break StopReason::Budget;
        }
        let mut points = attack_trials(problem, &x, r, &config.attack)?;
        points.extend(attack_trials(problem, &x, r * ATK_EXPAND, &config.attack)?);
        let batch = runner.batch(&points, TrialTag::Attack)?;
        let t = best_feasible(&batch.records, &x).clone();
        let improved = t.fval > x.fval;
        let next_r = if batch.truncated {
            r
        } else if improved {
            r * ATK_EXPAND
        } else {
            r * ATK_SHRINK
        };
        x = t;
        let trials = batch.records.iter().map(|r| r.index).collect();
        iterations.push(simple_record(
            iterations.len(),
            WinningStep::Attack,
            improved,
            true,
            r,
            next_r,
            trials,
            &runner,
            &x,
            batch.truncated,
        ));
        if batch.truncated {
            break StopReason::Budget;
        }
        r = next_r;
    };
    Ok(runner.finish(Method::Atk, x, iterations, stop))
}

/// Random line search baseline: along a uniform unit direction `v`, try
/// `x + s·v` for `s ∈ {13/10·r, r, 10/13·r}`. After an improvement the next
/// radius is the winning step length, otherwise `2/3·r`. Starts at `dsm.r0`.
pub fn rls_run(problem: &ProblemSpec, config: &HybridConfig) -> Result<RunResult> {
    config.validate(problem)?;
    let dsm = &config.dsm;
    let mut rng = ChaCha8Rng::seed_from_u64(dsm.rng_seed);
    let (mut runner, mut x) = Runner::start(problem, dsm.budget)?;
    let mut r = dsm.r0;
    let mut iterations = Vec::new();
    let stop = loop {
        if r < dsm.stop_radius {
            break StopReason::Radius;
        }
        if runner.exhausted() {
            break StopReason::Budget;
        }
        let v = unit_sphere(problem.n(), &mut rng);
        let steps = [r * RLS_EXPAND, r, r * RLS_SHRINK];
        let points: Vec<Vec<f64>> = steps
            .iter()
            .map(|s| x.x.iter().zip(&v).map(|(xi, vi)| xi + s * vi).collect())
            .collect();
        let batch = runner.batch(&points, TrialTag::LineSearch)?;
        let t = best_feasible(&batch.records, &x).clone();
        let improved = t.fval > x.fval;
        let next_r = if batch.truncated {
            r
        } else if improved {
            let pos = batch.records.iter().position(|rec| rec.index == t.index);
            pos.map_or(r, |i| steps[i])
        } else {
            r * RLS_FAIL
        };
        x = t;
        let trials = batch.records.iter().map(|r| r.index).collect();
        iterations.push(simple_record(
            iterations.len(),
            WinningStep::LineSearch,
            improved,
            false,
            r,
            next_r,
            trials,
            &runner,
            &x,
            batch.truncated,
        ));
        if batch.truncated {
            break StopReason::Budget;
        }
        r = next_r;
    };
    Ok(runner.finish(Method::Rls, x, iterations, stop))
}

/// Dispatches to the run function of `method`; `Cdsm` uses `config.dsm`.
pub fn run_method(
    method: Method,
    problem: &ProblemSpec,
    config: &HybridConfig,
) -> Result<RunResult> {
    match method {
        Method::Atk => attack_only_run(problem, config),
        Method::Rls => rls_run(problem, config),
        Method::Cdsm => crate::dsm::cdsm_run(problem, &config.dsm),
        Method::Hyb => hybrid_run(problem, config),
    }
}
