//! Directional attacks on the augmented network.
//!
//! Given an anchor `x` and radius `r`, an attack looks for `d` with
//! `‖d‖_∞ ≤ r` such that `Φ̃(x+d) − Φ̃(x)` moves along the target
//! `u = ∇f̃(Φ̃(x))`, by minimizing `L(Φ̃_x(d), u)`. With a well-suited loss a
//! successful attack is an ascent direction once `r` is small enough, which
//! [`calibrate_radius`] exploits by halving.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::losses::{loss, loss_grad, LossKind};
use crate::netdiff::{AugmentedMap, DifferentiableMap, ScaledDifferentialMap};
use crate::problem::{Mode, ProblemSpec};
use crate::vecops::{add, all_finite, sign};

/// Largest input dimension the lattice oracle accepts.
pub const ORACLE_MAX_DIM: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackSolver {
    Fgsm,
    Pgd,
    /// Exhaustive lattice search, for small test problems.
    Oracle,
}

impl std::str::FromStr for AttackSolver {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "fgsm" => Ok(AttackSolver::Fgsm),
            "pgd" => Ok(AttackSolver::Pgd),
            "oracle" => Ok(AttackSolver::Oracle),
            other => Err(format!(
                "unknown solver {other:?} (expected fgsm, pgd or oracle)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub solver: AttackSolver,
    pub loss: LossKind,
    /// Number of signed-gradient steps taken by PGD.
    pub pgd_steps: usize,
    /// PGD step length as a fraction of the box width.
    pub pgd_step_scale: f64,
    /// Restrict the attack to the first `a` output components.
    pub component_count: Option<usize>,
    /// Lattice points per axis for the oracle; odd so that `d = 0` is on it.
    pub oracle_grid: usize,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            solver: AttackSolver::Fgsm,
            loss: LossKind::SquaredError,
            pgd_steps: 10,
            pgd_step_scale: 2.5 / 10.0,
            component_count: None,
            oracle_grid: 41,
        }
    }
}

impl AttackConfig {
    pub fn with_solver(self, solver: AttackSolver) -> Self {
        Self { solver, ..self }
    }

    /// PGD with `steps` steps and the default scale `2.5 / steps`.
    pub fn pgd(self, steps: usize) -> Self {
        Self {
            solver: AttackSolver::Pgd,
            pgd_steps: steps,
            pgd_step_scale: 2.5 / steps as f64,
            ..self
        }
    }

    pub fn validate(&self, out_dim: usize) -> Result<()> {
        if self.pgd_steps == 0 {
            return Err(Error::Config("pgd_steps must be at least 1".into()));
        }
        if !(self.pgd_step_scale.is_finite() && self.pgd_step_scale > 0.0) {
            return Err(Error::Config("pgd_step_scale must be positive".into()));
        }
        if let Some(a) = self.component_count {
            if a == 0 || a > out_dim {
                return Err(Error::Config(format!(
                    "component_count {a} outside 1..={out_dim}"
                )));
            }
        }
        if self.oracle_grid < 3 || self.oracle_grid % 2 == 0 {
            return Err(Error::Config(
                "oracle_grid must be odd and at least 3".into(),
            ));
        }
        Ok(())
    }
}

/// Attack loss seen through the projection onto the first `active`
/// components (all components when `None`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedLoss {
    pub kind: LossKind,
    pub active: Option<usize>,
}

impl RestrictedLoss {
    fn cut(&self, len: usize) -> usize {
        self.active.map_or(len, |a| a.min(len))
    }

    pub fn value(&self, y1: &[f64], u: &[f64]) -> Result<f64> {
        check_dim(y1.len(), u.len())?;
        let a = self.cut(y1.len());
        loss(self.kind, &y1[..a], &u[..a])
    }

    pub fn grad(&self, y1: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        check_dim(y1.len(), u.len())?;
        let a = self.cut(y1.len());
        let mut g = loss_grad(self.kind, &y1[..a], &u[..a])?;
        g.resize(y1.len(), 0.0);
        Ok(g)
    }

    /// `L(0, u)`, the value any successful attack must beat.
    pub fn null_value(&self, u: &[f64]) -> Result<f64> {
        self.value(&vec![0.0; u.len()], u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackClass {
    /// Feasible and strictly below the null loss.
    Successful,
    /// Feasible, nonzero, but not below the null loss.
    FeasibleOnly,
    /// Zero, non-finite, or infeasible in exact mode.
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackOutcome {
    pub radius: f64,
    pub directions: Vec<Vec<f64>>,
    pub classes: Vec<AttackClass>,
    /// Vector-Jacobian products of the network spent by the solver.
    pub gradient_evals: usize,
    /// Forward evaluations of the network spent by the solver.
    pub forward_evals: usize,
    /// `L(0, u)`.
    pub loss_before: f64,
    /// `L(Φ̃_x(d), u)` per direction.
    pub loss_after: Vec<f64>,
    /// The target direction `u`.
    pub target: Vec<f64>,
}

impl AttackOutcome {
    fn empty(radius: f64, loss_before: f64, target: Vec<f64>) -> Self {
        Self {
            radius,
            directions: Vec::new(),
            classes: Vec::new(),
            gradient_evals: 0,
            forward_evals: 0,
            loss_before,
            loss_after: Vec::new(),
            target,
        }
    }

    /// Directions worth evaluating as trial points: every non-failed one.
    pub fn trial_directions(&self) -> Vec<&[f64]> {
        self.directions
            .iter()
            .zip(&self.classes)
            .filter(|(_, c)| **c != AttackClass::Failed)
            .map(|(d, _)| d.as_slice())
            .collect()
    }

    pub fn successful(&self) -> Vec<&[f64]> {
        self.directions
            .iter()
            .zip(&self.classes)
            .filter(|(_, c)| **c == AttackClass::Successful)
            .map(|(d, _)| d.as_slice())
            .collect()
    }

    pub fn has_success(&self) -> bool {
        self.classes.contains(&AttackClass::Successful)
    }
}

/// `u = ∇f̃(Φ̃(x)) = (∇f(Φ(x)), −2·relu(c(Φ(x))))`, zeroed beyond the first
/// `component_count` entries when set.
pub fn target_direction(
    problem: &ProblemSpec,
    x: &[f64],
    component_count: Option<usize>,
) -> Result<Vec<f64>> {
    check_dim(problem.n(), x.len())?;
    if !all_finite(x) {
        return Err(Error::NonFinitePoint);
    }
    let y = problem.phi().eval(x)?;
    let c = problem.constraint().eval(&y)?;
    let mut u = problem.goal().gradient(&y);
    check_dim(problem.m(), u.len())?;
    u.extend(c.iter().map(|v| -2.0 * v.max(0.0)));
    if let Some(a) = component_count {
        for v in u.iter_mut().skip(a) {
            *v = 0.0;
        }
    }
    Ok(u)
}

/// A direction found by a box solver, in the centred variable `δ − ½𝟙`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSolve {
    pub centered: Vec<f64>,
    pub gradient_evals: usize,
    pub forward_evals: usize,
}

/// One signed step from the centre to the boundary of the box:
/// `δ − ½𝟙 = −½ sign(g)` with `g` the loss gradient at the centre.
/// `None` when the gradient is not finite.
pub fn fgsm_attack(
    map: &ScaledDifferentialMap,
    loss: RestrictedLoss,
    u: &[f64],
) -> Result<Option<BoxSolve>> {
    let zero = vec![0.0; map.anchor().len()];
    let cot = loss.grad(&vec![0.0; u.len()], u)?;
    let g = map.vjp_centered(&zero, &cot)?;
    if !all_finite(&g) {
        return Ok(None);
    }
    let centered = g.iter().map(|v| -0.5 * sign(*v) + 0.0).collect();
    Ok(Some(BoxSolve {
        centered,
        gradient_evals: 1,
        forward_evals: 0,
    }))
}

/// Projected signed-gradient descent on the box, started at the centre.
/// Takes exactly `steps` gradient evaluations and returns the iterate with
/// the lowest loss among `δ_1, …, δ_steps` (earliest on ties).
pub fn pgd_attack(
    map: &ScaledDifferentialMap,
    loss: RestrictedLoss,
    u: &[f64],
    steps: usize,
    step_scale: f64,
) -> Result<Option<BoxSolve>> {
    if steps == 0 {
        return Err(Error::Config("pgd_steps must be at least 1".into()));
    }
    let n = map.anchor().len();
    let mut current = vec![0.0; n];
    let mut output = vec![0.0; u.len()];
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut forward_evals = 0;
    for _ in 0..steps {
        let cot = loss.grad(&output, u)?;
        let g = map.vjp_centered(&current, &cot)?;
        if !all_finite(&g) {
            return Ok(None);
        }
        for (c, gi) in current.iter_mut().zip(&g) {
            *c = (*c - 0.5 * step_scale * sign(*gi)).clamp(-0.5, 0.5) + 0.0;
        }
        output = map.eval_centered(&current)?;
        forward_evals += 1;
        let value = loss.value(&output, u)?;
        let better = match &best {
            None => true,
            Some((b, _)) => value < *b || (b.is_nan() && !value.is_nan()),
        };
        if better {
            best = Some((value, current.clone()));
        }
    }
    Ok(best.map(|(_, centered)| BoxSolve {
        centered,
        gradient_evals: steps,
        forward_evals,
    }))
}

fn lattice_coordinate(r: f64, j: usize, grid: usize) -> f64 {
    r * ((2 * j) as f64 / (grid - 1) as f64 - 1.0)
}

/// Exhaustive attack over the `grid^n` lattice of the max-norm ball of
/// radius `r`. Returns the lattice minimizer of the attack loss among
/// feasible points (exact mode) when it beats the null loss, and nothing
/// otherwise. Ties go to the first point in lexicographic lattice order.
pub fn oracle_attack(
    problem: &ProblemSpec,
    x: &[f64],
    r: f64,
    u: &[f64],
    grid: usize,
    loss: RestrictedLoss,
) -> Result<AttackOutcome> {
    let n = problem.n();
    if n > ORACLE_MAX_DIM {
        return Err(Error::OracleTooLarge {
            max: ORACLE_MAX_DIM,
            got: n,
        });
    }
    if grid < 3 || grid % 2 == 0 {
        return Err(Error::Config(
            "oracle_grid must be odd and at least 3".into(),
        ));
    }
    check_dim(problem.m() + problem.p(), u.len())?;
    let augmented = AugmentedMap::new(problem);
    let aug = augmented.eval(x)?;
    let m = problem.m();
    let loss_before = loss.null_value(u)?;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; n];
    let total = grid.pow(n as u32);
    let mut forward_evals = 0;
    for _ in 0..total {
        let d: Vec<f64> = idx
            .iter()
            .map(|&j| lattice_coordinate(r, j, grid))
            .collect();
        let point = add(x, &d);
        let value = augmented.eval(&point)?;
        forward_evals += 1;
        let feasible_ok = problem.mode() == Mode::Relaxed || value[m..].iter().all(|z| *z == 0.0);
        if feasible_ok && all_finite(&value) {
            let diff: Vec<f64> = value.iter().zip(&aug).map(|(a, b)| a - b).collect();
            let l = loss.value(&diff, u)?;
            if l.is_finite() && best.as_ref().map_or(true, |(b, _)| l < *b) {
                best = Some((l, d));
            }
        }
        // odometer, last coordinate fastest
        for k in (0..n).rev() {
            idx[k] += 1;
            if idx[k] < grid {
                break;
            }
            idx[k] = 0;
        }
    }
    let mut outcome = AttackOutcome::empty(r, loss_before, u.to_vec());
    outcome.forward_evals = forward_evals;
    if let Some((l, d)) = best {
        if l < loss_before {
            outcome.directions.push(d);
            outcome.classes.push(AttackClass::Successful);
            outcome.loss_after.push(l);
        }
    }
    Ok(outcome)
}

fn classify(
    problem: &ProblemSpec,
    map: &ScaledDifferentialMap,
    centered: &[f64],
    loss: RestrictedLoss,
    u: &[f64],
    loss_before: f64,
) -> Result<(AttackClass, f64)> {
    let raw = map.base_eval_centered(centered)?;
    let diff: Vec<f64> = raw
        .iter()
        .zip(map.anchor_value())
        .map(|(a, b)| a - b)
        .collect();
    let l = loss.value(&diff, u)?;
    if centered.iter().all(|c| *c == 0.0) || !all_finite(&diff) || !l.is_finite() {
        return Ok((AttackClass::Failed, l));
    }
    // relu(c) vanishes exactly where c ≤ 0
    let feasible = raw[problem.m()..].iter().all(|z| *z == 0.0);
    if problem.mode() == Mode::Exact && !feasible {
        return Ok((AttackClass::Failed, l));
    }
    if l < loss_before {
        Ok((AttackClass::Successful, l))
    } else {
        Ok((AttackClass::FeasibleOnly, l))
    }
}

/// Runs the configured solver at `(x, r)` and classifies its candidates.
pub fn attack_operator(
    problem: &ProblemSpec,
    x: &[f64],
    r: f64,
    config: &AttackConfig,
) -> Result<AttackOutcome> {
    config.validate(problem.m() + problem.p())?;
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Config(format!(
            "attack radius must be nonnegative, got {r}"
        )));
    }
    let u = target_direction(problem, x, config.component_count)?;
    let loss = RestrictedLoss {
        kind: config.loss,
        active: config.component_count,
    };
    let loss_before = loss.null_value(&u)?;
    if r == 0.0 {
        let mut outcome = AttackOutcome::empty(0.0, loss_before, u);
        outcome.directions.push(vec![0.0; problem.n()]);
        outcome.classes.push(AttackClass::Failed);
        outcome.loss_after.push(loss_before);
        return Ok(outcome);
    }
    if config.solver == AttackSolver::Oracle {
        return oracle_attack(problem, x, r, &u, config.oracle_grid, loss);
    }
    let map = ScaledDifferentialMap::augmented(problem, x.to_vec(), r)?;
    let solve = match config.solver {
        AttackSolver::Fgsm => fgsm_attack(&map, loss, &u)?,
        AttackSolver::Pgd => pgd_attack(&map, loss, &u, config.pgd_steps, config.pgd_step_scale)?,
        AttackSolver::Oracle => unreachable!(),
    };
    let mut outcome = AttackOutcome::empty(r, loss_before, u);
    let Some(solve) = solve else {
        return Ok(outcome);
    };
    let (class, l) = classify(
        problem,
        &map,
        &solve.centered,
        loss,
        &outcome.target,
        loss_before,
    )?;
    outcome
        .directions
        .push(map.direction_centered(&solve.centered));
    outcome.classes.push(class);
    outcome.loss_after.push(l);
    outcome.gradient_evals = solve.gradient_evals;
    outcome.forward_evals = solve.forward_evals + 1;
    Ok(outcome)
}

/// A radius at which the attack produced an ascent direction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub radius: f64,
    pub halvings: usize,
    pub outcome: AttackOutcome,
    /// Index into `outcome.directions` of the first ascent direction.
    pub ascent: usize,
}

/// Tries `r_init, r_init/2, …` (at most `max_halvings` halvings) and returns
/// the first radius whose attack yields a direction `d` with `x + d`
/// feasible and strictly better than `x`.
pub fn calibrate_radius(
    problem: &ProblemSpec,
    x: &[f64],
    r_init: f64,
    config: &AttackConfig,
    max_halvings: usize,
) -> Result<Option<Calibration>> {
    if !(r_init > 0.0) {
        return Err(Error::Config("r_init must be positive".into()));
    }
    let base = problem.assess(x)?;
    let mut r = r_init;
    for halvings in 0..=max_halvings {
        let outcome = attack_operator(problem, x, r, config)?;
        for (i, (d, class)) in outcome.directions.iter().zip(&outcome.classes).enumerate() {
            if *class == AttackClass::Failed {
                continue;
            }
            let trial = problem.assess(&add(x, d))?;
            if trial.feasible && trial.fval > base.fval {
                return Ok(Some(Calibration {
                    radius: r,
                    halvings,
                    outcome,
                    ascent: i,
                }));
            }
        }
        r *= 0.5;
    }
    Ok(None)
}
