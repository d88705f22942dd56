//! Covering direct search: covering, search and poll steps and the run loop.
//!
//! Each iteration tries, in order, a covering step (a probe of the unit
//! max-norm ball around the incumbent, far from evaluated points), a search
//! step and a poll along a random orthonormal positive spanning set. The
//! first step that strictly improves ends the iteration; the poll radius
//! doubles after an improvement and halves otherwise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{best_feasible, EvalRecord, ProblemSpec, TrialHistory, TrialTag};
use crate::trace::{
    incumbent_curve, IterationRecord, Method, RunResult, RunTrace, StopReason, WinningStep,
};
use crate::vecops::{add, norm2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoveringMode {
    /// One uniform draw from the unit max-norm ball.
    RandomUnitBall,
    /// The draw farthest from the history among `k_samples` draws.
    FarthestOfK,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DsmConfig {
    /// Initial poll radius; also the search-step length scale.
    pub r0: f64,
    pub covering_mode: CoveringMode,
    pub k_samples: usize,
    pub search_enabled: bool,
    pub rng_seed: u64,
    pub stop_radius: f64,
    /// Maximum number of evaluations of `Φ`, the initial point included.
    pub budget: usize,
}

impl Default for DsmConfig {
    fn default() -> Self {
        Self {
            r0: 1.0,
            covering_mode: CoveringMode::RandomUnitBall,
            k_samples: 64,
            search_enabled: true,
            rng_seed: 0,
            stop_radius: 1e-5,
            budget: 5000,
        }
    }
}

impl DsmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_radius > 0.0 && self.r0 > self.stop_radius && self.r0.is_finite()) {
            return Err(Error::Config(format!(
                "need r0 > stop_radius > 0, got r0 = {}, stop_radius = {}",
                self.r0, self.stop_radius
            )));
        }
        if self.k_samples == 0 {
            return Err(Error::Config("k_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which of the three direct-search steps a result belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DsmStep {
    Covering,
    Search,
    Poll,
}

impl DsmStep {
    fn tag(self) -> TrialTag {
        match self {
            DsmStep::Covering => TrialTag::Covering,
            DsmStep::Search => TrialTag::Search,
            DsmStep::Poll => TrialTag::Poll,
        }
    }

    fn winning(self) -> WinningStep {
        match self {
            DsmStep::Covering => WinningStep::Covering,
            DsmStep::Search => WinningStep::Search,
            DsmStep::Poll => WinningStep::Poll,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub step: DsmStep,
    pub trial_points: Vec<EvalRecord>,
    pub winner: EvalRecord,
    /// The winner strictly beats the step's base point.
    pub improved: bool,
}

fn uniform_ball(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Uniform point on the Euclidean unit sphere (normalized Gaussian draw).
pub fn unit_sphere(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = norm2(&v);
        if norm > 0.0 && norm.is_finite() {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// Covering directions around `x`; `{0}` on an empty history.
pub fn covering_step(
    x: &[f64],
    history: &TrialHistory,
    config: &DsmConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let n = x.len();
    if history.is_empty() {
        return vec![vec![0.0; n]];
    }
    match config.covering_mode {
        CoveringMode::RandomUnitBall => vec![uniform_ball(n, rng)],
        CoveringMode::FarthestOfK => {
            let mut best: Option<(f64, Vec<f64>)> = None;
            for _ in 0..config.k_samples {
                let d = uniform_ball(n, rng);
                let dist = history.distance_to(&add(x, &d));
                if best.as_ref().map_or(true, |(b, _)| dist > *b) {
                    best = Some((dist, d));
                }
            }
            best.map(|(_, d)| vec![d]).unwrap_or_default()
        }
    }
}

/// One direction of Euclidean length `r0·√s` in a uniform random direction,
/// where `s ≥ 1` counts the search steps executed so far (this one
/// included). Empty when search is disabled.
pub fn search_step(n: usize, s: usize, config: &DsmConfig, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if !config.search_enabled {
        return Vec::new();
    }
    let length = config.r0 * (s as f64).sqrt();
    vec![unit_sphere(n, rng)
        .into_iter()
        .map(|v| length * v)
        .collect()]
}

/// `{+r·M e_1, −r·M e_1, …, +r·M e_n, −r·M e_n}` with `M = I − 2vvᵀ`.
pub fn householder_poll(v: &[f64], r: f64) -> Vec<Vec<f64>> {
    let n = v.len();
    let mut dirs = Vec::with_capacity(2 * n);
    for i in 0..n {
        let column: Vec<f64> = (0..n)
            .map(|j| {
                let kron = if i == j { 1.0 } else { 0.0 };
                kron - 2.0 * v[j] * v[i]
            })
            .collect();
        dirs.push(column.iter().map(|c| r * c).collect());
        dirs.push(column.iter().map(|c| -r * c).collect());
    }
    dirs
}

/// Poll directions of length `r` from a uniformly drawn Householder basis.
pub fn poll_step(n: usize, r: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    householder_poll(&unit_sphere(n, rng), r)
}

/// Evaluation context of a single run: the history plus the budget.
pub(crate) struct Runner<'p> {
    pub problem: &'p ProblemSpec,
    pub history: TrialHistory,
    budget: usize,
}

/// Records evaluated for a trial set; `truncated` when the budget ran out
/// before the whole set was evaluated.
pub(crate) struct Batch {
    pub records: Vec<EvalRecord>,
    pub truncated: bool,
}

impl<'p> Runner<'p> {
    /// Evaluates `x0`, which is charged to the budget like any other point.
    pub fn start(problem: &'p ProblemSpec, budget: usize) -> Result<(Self, EvalRecord)> {
        let mut history = TrialHistory::new();
        let x0 = history
            .evaluate(problem, problem.x0(), TrialTag::Initial)?
            .clone();
        Ok((
            Self {
                problem,
                history,
                budget,
            },
            x0,
        ))
    }

    pub fn exhausted(&self) -> bool {
        self.history.evaluations() >= self.budget
    }

    /// Evaluates `points` in order. Cached points are free; a new point is
    /// evaluated only while the budget lasts.
    pub fn batch(&mut self, points: &[Vec<f64>], tag: TrialTag) -> Result<Batch> {
        let mut records = Vec::with_capacity(points.len());
        for x in points {
            if let Some(r) = self.history.lookup(x) {
                records.push(r.clone());
                continue;
            }
            if self.exhausted() {
                return Ok(Batch {
                    records,
                    truncated: true,
                });
            }
            records.push(self.history.evaluate(self.problem, x, tag)?.clone());
        }
        Ok(Batch {
            records,
            truncated: false,
        })
    }

    pub fn finish(
        self,
        method: Method,
        incumbent: EvalRecord,
        iterations: Vec<IterationRecord>,
        stop: StopReason,
    ) -> RunResult {
        let trace = RunTrace {
            method,
            iterations,
            curve: incumbent_curve(&self.history),
            stop,
            evaluations: self.history.evaluations(),
        };
        RunResult {
            incumbent,
            trace,
            history: self.history,
        }
    }
}

/// Result of one covering → search → poll pass.
pub(crate) struct Phase {
    pub winner: EvalRecord,
    pub winning_step: WinningStep,
    pub steps: Vec<StepResult>,
    pub trials: Vec<usize>,
    pub truncated: bool,
}

/// Opportunistic covering, search and poll around `base` with poll radius
/// `r`. `search_count` is the number of search steps executed so far in the
/// run and is advanced here.
pub(crate) fn dsm_phase(
    runner: &mut Runner<'_>,
    base: &EvalRecord,
    r: f64,
    search_count: &mut usize,
    config: &DsmConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Phase> {
    let n = base.x.len();
    let mut phase = Phase {
        winner: base.clone(),
        winning_step: WinningStep::None,
        steps: Vec::new(),
        trials: Vec::new(),
        truncated: false,
    };
    for step in [DsmStep::Covering, DsmStep::Search, DsmStep::Poll] {
        let dirs = match step {
            DsmStep::Covering => covering_step(&base.x, &runner.history, config, rng),
            DsmStep::Search => {
                if !config.search_enabled {
                    continue;
                }
                *search_count += 1;
                search_step(n, *search_count, config, rng)
            }
            DsmStep::Poll => poll_step(n, r, rng),
        };
        let points: Vec<Vec<f64>> = dirs.iter().map(|d| add(&base.x, d)).collect();
        let batch = runner.batch(&points, step.tag())?;
        phase.trials.extend(batch.records.iter().map(|r| r.index));
        let winner = best_feasible(&batch.records, base).clone();
        let improved = winner.fval > base.fval;
        phase.steps.push(StepResult {
            step,
            trial_points: batch.records,
            winner: winner.clone(),
            improved,
        });
        if improved {
            phase.winner = winner;
            phase.winning_step = step.winning();
        }
        if batch.truncated {
            phase.truncated = true;
            break;
        }
        if improved {
            break;
        }
    }
    Ok(phase)
}

/// Covering direct search from `problem.x0()`.
pub fn cdsm_run(problem: &ProblemSpec, config: &DsmConfig) -> Result<RunResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let (mut runner, mut x) = Runner::start(problem, config.budget)?;
    let mut r = config.r0;
    let mut search_count = 0;
    let mut iterations = Vec::new();
    let stop = loop {
        if r < config.stop_radius {
            break StopReason::Radius;
        }
        if runner.exhausted() {
            break StopReason::Budget;
        }
        let phase = dsm_phase(&mut runner, &x, r, &mut search_count, config, &mut rng)?;
        let improved = phase.winner.fval > x.fval;
        let next_r = if phase.truncated {
            r
        } else if improved {
            2.0 * r
        } else {
            0.5 * r
        };
        x = phase.winner;
        iterations.push(IterationRecord {
            k: iterations.len(),
            attack_outcome: None,
            winning_step: phase.winning_step,
            r_atk: None,
            r_dsm: Some(r),
            next_r_atk: None,
            next_r_dsm: Some(next_r),
            trials: phase.trials,
            evals_so_far: runner.history.evaluations(),
            incumbent_f: x.fval,
            incumbent_index: x.index,
            dsm_base: None,
            truncated: phase.truncated,
        });
        if phase.truncated {
            break StopReason::Budget;
        }
        r = next_r;
    };
    Ok(runner.finish(Method::Cdsm, x, iterations, stop))
}
