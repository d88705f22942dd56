//! The invariant suite behind the `selftest` command: catalog problem
//! checks and algorithm-law checks on short runs of every method.

use dirattack_core::trace::Method;
use dirattack_core::Mode;

use crate::catalog::{self, active_subspace_solution, goal_at, target_recovery_vertex};
use crate::error::BenchResult;
use crate::experiments::run_cells;
use crate::invariants::check_run;

const SEEDS: [u64; 2] = [0, 1];
const BUDGET: usize = 1000;
/// Largest accepted relative error of goal gradients against central
/// differences.
pub const GOAL_GRADIENT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {}", self.name, self.detail)
    }
}

fn line(name: String, passed: bool, detail: String) -> CheckLine {
    CheckLine {
        name,
        passed,
        detail,
    }
}

/// Certificate point of a known optimum, where the goal must come within
/// tolerance of the optimum value.
fn certificate(name: &str, seed: u64) -> BenchResult<Option<Vec<f64>>> {
    Ok(match name {
        "quadratic_1d" => Some(vec![0.0]),
        "target_recovery" => Some(target_recovery_vertex(catalog::TARGET_N)),
        "active_subspace" => Some(active_subspace_solution(
            seed,
            catalog::ACTIVE_N,
            catalog::ACTIVE_K,
        )?),
        "surrogate_reactor" => Some(crate::reactor::certified_optimum(seed)?.1),
        _ => None,
    })
}

/// Catalog checks: start feasibility, goal gradients, and optimum
/// certificates.
pub fn catalog_checks(seeds: &[u64]) -> BenchResult<Vec<CheckLine>> {
    let mut lines = Vec::new();
    for entry in catalog::catalog() {
        for &seed in seeds {
            let problem = entry.build(seed)?;
            let tag = format!("{} seed {seed}", entry.name);
            let start = problem.assess(problem.x0())?;
            lines.push(line(
                format!("{tag} start"),
                start.fval.is_finite() && (problem.mode() == Mode::Relaxed || start.feasible),
                format!("f(x0) = {}, feasible = {}", start.fval, start.feasible),
            ));
            let err = problem.goal_gradient_error(8, seed)?;
            lines.push(line(
                format!("{tag} goal gradient"),
                err < GOAL_GRADIENT_TOL,
                format!("relative error {err:e}"),
            ));
            let Some(opt) = entry.known_optimum(seed)? else {
                continue;
            };
            if let Some(x) = certificate(entry.name, seed)? {
                let at = problem.assess(&x)?;
                let goal = goal_at(&problem, &x)?;
                lines.push(line(
                    format!("{tag} optimum certificate"),
                    at.feasible
                        && (goal - opt.value).abs() <= opt.tolerance
                        && start.fval <= opt.value + opt.tolerance,
                    format!(
                        "goal {goal} at {x:?}, optimum {} ({})",
                        opt.value, opt.provenance
                    ),
                ));
            }
        }
    }
    Ok(lines)
}

/// Algorithm-law checks on every method, problem and seed.
pub fn run_checks(seeds: &[u64], budget: usize) -> BenchResult<Vec<CheckLine>> {
    let names: Vec<String> = catalog::problem_names()
        .into_iter()
        .map(String::from)
        .collect();
    let cells = run_cells(&names, &Method::ALL, seeds, budget, None)?;
    Ok(cells
        .iter()
        .map(|c| {
            let v = check_run(c.method, &c.config, &c.result, c.optimum.as_ref());
            let detail = if v.is_empty() {
                format!(
                    "{} iterations, {} evaluations, best {}",
                    c.result.trace.iterations.len(),
                    c.result.trace.evaluations,
                    c.result.incumbent.fval
                )
            } else {
                v.iter()
                    .map(|v| format!("{}: {}", v.rule, v.detail))
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            line(
                format!(
                    "{} {} seed {} invariants",
                    c.problem,
                    c.method.name(),
                    c.seed
                ),
                v.is_empty(),
                detail,
            )
        })
        .collect())
}

/// The whole suite with its default seeds and budget.
pub fn selftest() -> BenchResult<Vec<CheckLine>> {
    let mut lines = catalog_checks(&SEEDS)?;
    lines.extend(run_checks(&SEEDS, BUDGET)?);
    Ok(lines)
}
