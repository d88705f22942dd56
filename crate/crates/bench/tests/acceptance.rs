//! Acceptance criteria, one test per criterion. Each prints a single
//! `ACCEPTANCE <n> PASS|FAIL ...` line to the uncaptured stdout; the tests
//! are serialised so the runtime figures are not inflated by each other.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use dirattack_bench::catalog::{build_random_box_2d, find};
use dirattack_bench::experiments::{median_evals_to_tolerance, run_cell, run_cells};
use dirattack_bench::invariants::check_run;
use dirattack_core::attack::{attack_operator, calibrate_radius, AttackConfig, AttackSolver};
use dirattack_core::losses::{find_wslp_counterexample, wslp_check, LossKind, WslpWitness};
use dirattack_core::netdiff::{finite_difference_jacobian, Activation, MlpNetwork};
use dirattack_core::trace::Method;
use dirattack_core::Mode;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn report(n: u32, passed: bool, elapsed: Duration, limit: Option<Duration>, detail: &str) {
    let within = limit.map_or(true, |l| elapsed <= l);
    let status = if passed && within { "PASS" } else { "FAIL" };
    let limit = limit.map_or_else(|| "none".to_string(), |l| format!("{l:.0?}"));
    let mut out = std::io::stdout().lock();
    let _ = writeln!(
        out,
        "ACCEPTANCE {n} {status} ({elapsed:.2?}, limit {limit}): {detail}"
    );
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

fn random_network(rng: &mut ChaCha8Rng) -> MlpNetwork {
    let depth = rng.random_range(1..=3);
    let widths: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=8)).collect();
    let output = match rng.random_range(0..3) {
        0 => Activation::Identity,
        1 => Activation::Relu,
        _ => Activation::Softmax,
    };
    MlpNetwork::random(&widths, Activation::Relu, output, rng).unwrap()
}

#[test]
fn criterion_1_vjp_matches_central_differences() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let net = random_network(&mut rng);
        let x = loop {
            let x: Vec<f64> = (0..net.in_dim())
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            if net.relu_margin(&x).unwrap() > 1e-4 {
                break x;
            }
        };
        let jac = finite_difference_jacobian(&net, &x, 1e-6).unwrap();
        for (j, row) in jac.iter().enumerate() {
            let mut e = vec![0.0; net.out_dim()];
            e[j] = 1.0;
            let g = net.vjp(&x, &e).unwrap();
            for (a, b) in g.iter().zip(row) {
                worst = worst.max(rel_err(*a, *b));
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = worst < 1e-6;
    report(
        1,
        passed,
        elapsed,
        Some(Duration::from_secs(5)),
        &format!("100 networks, worst relative error {worst:e} (< 1e-6)"),
    );
    assert!(passed && elapsed < Duration::from_secs(5));
}

#[test]
fn criterion_2_wslp_suite() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    for i in 0..100_000 {
        let dim = [2, 3, 5][i % 3];
        let y1: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        let y2: Vec<f64> = (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect();
        if !wslp_check(LossKind::SquaredError, &y1, &y2).unwrap() {
            violations += 1;
        }
    }
    let fixture =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/ce_wslp_witness.json");
    let stored: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fixture).unwrap()).unwrap();
    let dim = stored["dim"].as_u64().unwrap() as usize;
    let seed = stored["seed"].as_u64().unwrap();
    let found = find_wslp_counterexample(LossKind::CrossEntropy, dim, seed, 100_000);
    let stored_pair: WslpWitness = serde_json::from_value(stored).unwrap();
    let reproduces = found.as_ref() == Some(&stored_pair);
    let violates = !wslp_check(LossKind::CrossEntropy, &stored_pair.y1, &stored_pair.y2).unwrap();
    let elapsed = start.elapsed();
    let passed = violations == 0 && reproduces && violates;
    report(
        2,
        passed,
        elapsed,
        Some(Duration::from_secs(10)),
        &format!("1e5 SE pairs, {violations} violations; CE witness found and matches fixture: {reproduces}"),
    );
    assert!(passed && elapsed < Duration::from_secs(10));
}

#[test]
fn criterion_3_successful_oracle_attacks_ascend() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let config = AttackConfig {
        solver: AttackSolver::Oracle,
        loss: LossKind::SquaredError,
        oracle_grid: 41,
        ..AttackConfig::default()
    };
    let (mut calibrated, mut checked, mut violations) = (0, 0, 0);
    for seed in 0..50 {
        let p = build_random_box_2d(seed, Mode::Exact).unwrap();
        let x = p.x0().to_vec();
        let f0 = p.assess(&x).unwrap().fval;
        let Some(cal) = calibrate_radius(&p, &x, 1.0, &config, 40).unwrap() else {
            continue;
        };
        calibrated += 1;
        for d in cal.outcome.successful() {
            checked += 1;
            let xd: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + b).collect();
            let v = p.assess(&xd).unwrap();
            if !(v.feasible && v.fval > f0) {
                violations += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = violations == 0 && calibrated > 0;
    report(
        3,
        passed,
        elapsed,
        Some(Duration::from_secs(60)),
        &format!("{calibrated}/50 problems calibrated, {checked} successful attacks, {violations} non-ascent"),
    );
    assert!(passed && elapsed < Duration::from_secs(60));
}

#[test]
fn criterion_4_algorithm_invariants() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let names: Vec<String> = dirattack_bench::catalog::problem_names()
        .into_iter()
        .map(String::from)
        .collect();
    let mut runs = 0;
    let mut failures = Vec::new();
    for budget in [200, 2000] {
        let cells = run_cells(&names, &Method::ALL, &[0, 1, 2], budget, None).unwrap();
        for c in &cells {
            runs += 1;
            let v = check_run(c.method, &c.config, &c.result, c.optimum.as_ref());
            if !v.is_empty() {
                failures.push(format!(
                    "{} {} {}: {:?}",
                    c.problem,
                    c.method.name(),
                    c.seed,
                    v[0]
                ));
            }
        }
    }
    let elapsed = start.elapsed();
    let passed = failures.is_empty();
    report(
        4,
        passed,
        elapsed,
        None,
        &format!(
            "{runs} runs, {} with violations {:?}",
            failures.len(),
            failures.first()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_5_oracle_certified_convergence() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut detail = Vec::new();
    let mut passed = true;
    for problem in ["quadratic_1d", "surrogate_reactor"] {
        let entry = find(problem).unwrap();
        for method in [Method::Cdsm, Method::Hyb] {
            let mut hits = 0;
            for seed in 0..10 {
                let opt = entry.known_optimum(seed).unwrap().unwrap();
                let cell = run_cell(problem, method, seed, 5000, None).unwrap();
                let best = cell.result.incumbent.fval;
                if (best - opt.value).abs() <= 1e-3 {
                    hits += 1;
                }
            }
            passed &= hits >= 9;
            detail.push(format!("{problem}/{}: {hits}/10", method.name()));
        }
    }
    let elapsed = start.elapsed();
    report(
        5,
        passed,
        elapsed,
        Some(Duration::from_secs(120)),
        &format!("within 1e-3: {}", detail.join(", ")),
    );
    assert!(passed && elapsed < Duration::from_secs(120));
}

#[test]
fn criterion_6_pgd_one_step_equals_fgsm() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let one_step = AttackConfig {
        solver: AttackSolver::Pgd,
        pgd_steps: 1,
        pgd_step_scale: 1.0,
        ..AttackConfig::default()
    };
    let pgd = AttackConfig::default().pgd(10);
    let (mut mismatches, mut count_errors) = (0, 0);
    for i in 0..100u64 {
        let mode = if i % 2 == 0 {
            Mode::Exact
        } else {
            Mode::Relaxed
        };
        let p = build_random_box_2d(1000 + i, mode).unwrap();
        let x = p.x0().to_vec();
        let r = rng.random_range(1e-3..2.0);
        let a = attack_operator(&p, &x, r, &AttackConfig::default()).unwrap();
        let b = attack_operator(&p, &x, r, &one_step).unwrap();
        let bits = |v: &Vec<Vec<f64>>| -> Vec<Vec<u64>> {
            v.iter()
                .map(|d| d.iter().map(|x| x.to_bits()).collect())
                .collect()
        };
        if bits(&a.directions) != bits(&b.directions) || a.classes != b.classes {
            mismatches += 1;
        }
        let c = attack_operator(&p, &x, r, &pgd).unwrap();
        // a vanishing target leaves no direction and spends nothing to count
        if !a.directions.is_empty() && (a.gradient_evals != 1 || c.gradient_evals != pgd.pgd_steps)
        {
            count_errors += 1;
        }
    }
    let elapsed = start.elapsed();
    let passed = mismatches == 0 && count_errors == 0;
    report(
        6,
        passed,
        elapsed,
        None,
        &format!("100 instances, {mismatches} bitwise mismatches, {count_errors} gradient-count errors (fgsm 1, pgd {})", pgd.pgd_steps),
    );
    assert!(passed);
}

#[test]
fn criterion_7_hybrid_vs_cdsm_on_target_recovery() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let cells = run_cells(
        &["target_recovery".to_string()],
        &[Method::Cdsm, Method::Hyb],
        &(0..10).collect::<Vec<_>>(),
        5000,
        None,
    )
    .unwrap();
    let summaries: Vec<_> = cells.iter().map(|c| c.summary()).collect();
    let median = |m: Method| {
        median_evals_to_tolerance(
            &summaries
                .iter()
                .filter(|s| s.method == m)
                .collect::<Vec<_>>(),
        )
    };
    let (hyb, cdsm) = (median(Method::Hyb), median(Method::Cdsm));
    let elapsed = start.elapsed();
    // Reported only: the ordering is expected, not guaranteed.
    report(
        7,
        hyb <= cdsm,
        elapsed,
        None,
        &format!("soft check, median evaluations to tolerance: hyb {hyb}, cdsm {cdsm}"),
    );
}

#[test]
fn criterion_8_run_outputs_are_byte_identical() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let cases = [
        ["target_recovery", "hyb", "3", "exact"],
        ["surrogate_reactor", "cdsm", "1", "exact"],
        ["active_subspace", "atk", "2", "relaxed"],
        ["quadratic_1d", "rls", "0", "exact"],
    ];
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut compared = 0;
    let mut differing = Vec::new();
    for [problem, method, seed, mode] in cases {
        for dir in &dirs {
            let status = Command::new(env!("CARGO_BIN_EXE_dirattack"))
                .args([
                    "run",
                    "--problem",
                    problem,
                    "--method",
                    method,
                    "--seed",
                    seed,
                ])
                .args(["--budget", "1500", "--mode", mode, "--out"])
                .arg(dir.path())
                .output()
                .unwrap()
                .status;
            assert!(status.success());
        }
    }
    let mut names: Vec<_> = std::fs::read_dir(dirs[0].path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    for name in &names {
        let a = std::fs::read(dirs[0].path().join(name)).unwrap();
        let b = std::fs::read(dirs[1].path().join(name)).unwrap_or_default();
        compared += 1;
        if a != b {
            differing.push(name.to_string_lossy().into_owned());
        }
    }
    let elapsed = start.elapsed();
    let passed = differing.is_empty() && compared == 3 * cases.len();
    report(
        8,
        passed,
        elapsed,
        None,
        &format!("{compared} files compared across two invocations, differing: {differing:?}"),
    );
    assert!(passed);
}
