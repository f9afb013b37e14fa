//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fracpmp::cli::convergence::{caputo_power_error, mittag_leffler_ivp_error, richardson_orders};
use fracpmp::fracops::{caputo_derivative, integration_by_parts_residual, MultiOrder, SampledPath, Side, TimeGrid};
use fracpmp::pmp::{
    adjoint, estimate_constants, forward_backward_sweep, needle_distance_bound, needle_experiment, pmp_residual, simulate,
    NeedleVariation, PmpSolution, SweepConfig,
};
use fracpmp::problem::expr::{parse_expression, BinaryOp, Expr, UnaryOp};
use fracpmp::problem::{builtin, ProblemSpec};
use fracpmp::specfun::{gamma_fn, mittag_leffler, MittagLefflerParams};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn e<T: std::fmt::Display>(x: T) -> String {
    x.to_string()
}

fn solve(name: &str, n: usize) -> Result<(ProblemSpec, PmpSolution), String> {
    let problem = builtin(name).map_err(e)?;
    let grid = problem.grid(n).map_err(e)?;
    let sol = forward_backward_sweep(&problem, &grid, &SweepConfig::from_settings(&problem.solver)).map_err(e)?;
    if !sol.converged {
        return Err(format!("{name} did not converge"));
    }
    Ok((problem, sol))
}

fn special_functions() -> Outcome {
    let start = Instant::now();
    let ml = MittagLefflerParams::new(1.0, 1.0).map_err(e)?;
    let mut exp_err: f64 = 0.0;
    for i in 0..=1000 {
        let x = -5.0 + 10.0 * i as f64 / 1000.0;
        exp_err = exp_err.max((mittag_leffler(ml, x).map_err(e)? - x.exp()).abs() / x.exp());
    }
    let mut rec_err: f64 = 0.0;
    for i in 1..=2000 {
        let x = 0.01 * i as f64;
        let lhs = gamma_fn(x + 1.0).map_err(e)?;
        rec_err = rec_err.max((lhs - x * gamma_fn(x).map_err(e)?).abs() / lhs.abs());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        exp_err <= 1e-10 && rec_err <= 1e-12 && secs < 1.0,
        format!("E_1,1 vs exp rel {exp_err:.2e}, Gamma recurrence rel {rec_err:.2e}, {secs:.3} s"),
    )
}

fn power_rules() -> Outcome {
    let grid = TimeGrid::new(0.0, 1.0, 1024).map_err(e)?;
    let p = SampledPath::from_fn(grid, 1, |t| vec![t.powf(1.7)]).map_err(e)?;
    let d = caputo_derivative(&p, &MultiOrder::new(vec![0.3]).map_err(e)?, Side::Left).map_err(e)?;
    let c = gamma_fn(2.7).map_err(e)? / gamma_fn(2.4).map_err(e)?;
    let sup = (1..grid.len()).map(|k| (d.value(0, k) - c * grid.t(k).powf(1.4)).abs()).fold(0.0, f64::max);
    let n_list = [128, 256, 512, 1024];
    let errors = n_list.iter().map(|&n| caputo_power_error(n)).collect::<Result<Vec<_>, _>>().map_err(e)?;
    let order = *richardson_orders(&n_list, &errors).last().unwrap();
    check(sup <= 1e-3 && order >= 1.5, format!("sup error {sup:.2e} at N = 1024, L1 order {order:.3} on t >= 0.1"))
}

fn ibp_residual() -> Outcome {
    let orders = MultiOrder::new(vec![0.5]).map_err(e)?;
    let mut res = Vec::new();
    for n in [128, 256, 512, 1024] {
        let grid = TimeGrid::new(0.0, 1.0, n).map_err(e)?;
        let x = SampledPath::from_fn(grid, 1, |t| vec![t]).map_err(e)?;
        let y = SampledPath::from_fn(grid, 1, |t| vec![t * t]).map_err(e)?;
        res.push(integration_by_parts_residual(&x, &y, &orders).map_err(e)?);
    }
    let decreasing = res.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing && res[2] <= 0.05,
        format!("residuals {:.2e} {:.2e} {:.2e} {:.2e}", res[0], res[1], res[2], res[3]),
    )
}

fn forward_solver() -> Outcome {
    let start = Instant::now();
    let err = mittag_leffler_ivp_error(512).map_err(e)?;
    let n_list = [128, 256, 512, 1024];
    let errors = n_list.iter().map(|&n| mittag_leffler_ivp_error(n)).collect::<Result<Vec<_>, _>>().map_err(e)?;
    let order = *richardson_orders(&n_list, &errors).last().unwrap();
    let secs = start.elapsed().as_secs_f64();
    check(
        err <= 2e-3 && order >= 0.54 && secs < 5.0,
        format!("sup error {err:.2e} at N = 512, order {order:.3}, {secs:.2} s"),
    )
}

fn example_adjoint() -> Outcome {
    let problem = builtin("paper_example").map_err(e)?;
    let grid = problem.grid(1024).map_err(e)?;
    let u = SampledPath::new(grid, vec![vec![problem.omega.midpoint()[0]; grid.len()]]).map_err(e)?;
    let x = simulate(&problem, &u).map_err(e)?;
    let lambda = adjoint(&problem, &x, &u).map_err(e)?;
    let g56 = gamma_fn(5.0 / 6.0).map_err(e)?;
    let g12 = gamma_fn(0.5).map_err(e)?;
    let (mut e1, mut e2): (f64, f64) = (0.0, 0.0);
    for k in (0..grid.len()).filter(|&k| grid.t(k) <= 4.9 + 1e-12) {
        let s = 5.0 - grid.t(k);
        e1 = e1.max((lambda.value(0, k) - s.powf(-1.0 / 6.0) / g56).abs());
        e2 = e2.max((lambda.value(1, k) - s.powf(-0.5) / g12).abs());
    }
    check(e1 <= 1e-2 && e2 <= 1e-2, format!("lambda1 sup error {e1:.2e}, lambda2 sup error {e2:.2e} on [1, 4.9]"))
}

const THETA_STEPS: [usize; 4] = [8, 4, 2, 1];

struct NeedleRun {
    theta: f64,
    sup_dist: f64,
    bound: f64,
    eta_gap: f64,
}

fn lq_needles() -> Result<Vec<NeedleRun>, String> {
    let (problem, sol) = solve("lq_smoke", 512)?;
    let grid = *sol.grid();
    let constants = estimate_constants(&problem, &grid, 2000, 0).map_err(e)?;
    let tau = grid.nearest_node(0.5);
    let window = grid.t(tau) + 8.0 * grid.h();
    THETA_STEPS
        .iter()
        .map(|&s| {
            let theta = s as f64 * grid.h();
            let var = NeedleVariation { tau, v: problem.omega.upper().to_vec(), theta };
            let rec = needle_experiment(&problem, &sol, &var, Some(window)).map_err(e)?;
            let bound = needle_distance_bound(&constants, problem.orders.min(), theta, problem.b - problem.a).map_err(e)?;
            Ok(NeedleRun { theta, sup_dist: rec.sup_dist, bound, eta_gap: rec.eta_gap })
        })
        .collect()
}

fn distance_bound(runs: &[NeedleRun]) -> Outcome {
    let passed = runs.iter().filter(|r| r.sup_dist <= r.bound).count();
    let detail = runs
        .iter()
        .map(|r| format!("theta {:.2e}: {:.3e} <= {:.3e}", r.theta, r.sup_dist, r.bound))
        .collect::<Vec<_>>()
        .join("; ");
    check(passed == runs.len(), format!("{passed}/{} cases; {detail}", runs.len()))
}

fn variational_limit(runs: &[NeedleRun]) -> Outcome {
    let ok = runs.windows(2).all(|w| w[1].eta_gap <= 1.1 * w[0].eta_gap);
    let gaps = runs.iter().map(|r| format!("{:.3e}", r.eta_gap)).collect::<Vec<_>>().join(" ");
    check(ok, format!("eta_gap over theta = 8h, 4h, 2h, h: {gaps}"))
}

fn sampled_needles(problem: &ProblemSpec, sol: &PmpSolution, count: usize, seed: u64) -> Result<f64, String> {
    let grid = *sol.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..count {
        let cells = 1usize << rng.random_range(0..4);
        let tau = rng.random_range(1..grid.n_steps() - cells);
        let v = (0..problem.control_dim())
            .map(|j| rng.random_range(problem.omega.lower()[j]..=problem.omega.upper()[j]))
            .collect();
        let var = NeedleVariation { tau, v, theta: cells as f64 * grid.h() };
        worst = worst.max(needle_experiment(problem, sol, &var, None).map_err(e)?.delta_j);
    }
    Ok(worst)
}

fn maximality() -> Outcome {
    let start = Instant::now();
    let (lq, lq_sol) = solve("lq_smoke", 512)?;
    let (ex, ex_sol) = solve("paper_example", 512)?;
    let r_lq = pmp_residual(&lq, &lq_sol, 256).map_err(e)?;
    let r_ex = pmp_residual(&ex, &ex_sol, 256).map_err(e)?;
    let dj_lq = sampled_needles(&lq, &lq_sol, 20, 1).map_err(e)?;
    let dj_ex = sampled_needles(&ex, &ex_sol, 20, 2).map_err(e)?;
    let secs = start.elapsed().as_secs_f64();
    check(
        r_lq <= 1e-3 && r_ex <= 1e-2 && dj_lq <= 1e-3 && dj_ex <= 1e-3 && secs < 60.0,
        format!(
            "residual lq_smoke {r_lq:.2e}, paper_example {r_ex:.2e}; max deltaJ over 20 needles {dj_lq:.2e} / {dj_ex:.2e}; {secs:.2} s"
        ),
    )
}

fn run_solve(dir: &Path) -> Result<(Vec<u8>, serde_json::Value, String), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_fracpmp"))
        .args(["solve", "--problem", "paper_example", "--n-steps", "256", "--out-dir"])
        .arg(dir)
        .output()
        .map_err(e)?;
    if !out.status.success() {
        return Err(format!("solve exited with {:?}", out.status.code()));
    }
    let csv = std::fs::read(dir.join("trajectory.csv")).map_err(e)?;
    let mut report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.join("report.json")).map_err(e)?).map_err(e)?;
    let obj = report.as_object_mut().ok_or("report is not an object")?;
    obj.remove("wall_time_seconds");
    obj.remove("outputs");
    Ok((csv, report, String::from_utf8_lossy(&out.stdout).into_owned()))
}

fn random_expr(rng: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return match rng.random_range(0..4) {
            0 => Expr::Const((rng.random_range(-50.0..50.0f64) * 8.0).round() / 8.0),
            1 => Expr::Time,
            2 => Expr::State(rng.random_range(0..2)),
            _ => Expr::Control(rng.random_range(0..2)),
        };
    }
    if rng.random_bool(0.3) {
        let op = UnaryOp::ALL[rng.random_range(0..UnaryOp::ALL.len())];
        Expr::unary(op, random_expr(rng, depth - 1))
    } else {
        let op = [BinaryOp::Add, BinaryOp::Sub, BinaryOp::Mul, BinaryOp::Div, BinaryOp::Pow][rng.random_range(0..5)];
        Expr::binary(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1))
    }
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let (csv_a, rep_a, _) = run_solve(&a)?;
    let (csv_b, rep_b, _) = run_solve(&b)?;
    let identical = csv_a == csv_b && rep_a == rep_b;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut stable = 0;
    for _ in 0..200 {
        let text = random_expr(&mut rng, 5).to_string();
        let once = parse_expression(&text, 2, 2).map_err(|err| format!("{text}: {err}"))?;
        let twice = parse_expression(&once.to_string(), 2, 2).map_err(e)?;
        if once.to_string() == text && once == twice {
            stable += 1;
        }
    }
    check(
        identical && stable == 200,
        format!("repeated solve byte-identical: {identical}; round trip stable on {stable}/200 expressions"),
    )
}

fn closed_form_window() -> Outcome {
    let dir = tempfile::tempdir().map_err(e)?;
    let (_, report, stdout) = run_solve(dir.path())?;
    let cmp = &report["closed_form"];
    let stated = stdout.contains("validity window") && stdout.contains("interior-argmax window");
    let pass = cmp["pass"].as_bool() == Some(true);
    check(
        stated && pass && report["closed_form_validity_start"].is_number(),
        format!(
            "validity window {}, interior window {}, compared nodes {}, max diff {}",
            cmp["validity_window"], cmp["interior_window"], cmp["compared_nodes"], cmp["max_abs_diff"]
        ),
    )
}

fn main() {
    let started = Instant::now();
    let needles = lq_needles();
    let results: Vec<(&str, Outcome)> = vec![
        ("1 special functions", special_functions()),
        ("2 operator power rules", power_rules()),
        ("3 integration by parts residual", ibp_residual()),
        ("4 forward solver", forward_solver()),
        ("5 example adjoint", example_adjoint()),
        ("6 needle distance bound", needles.as_ref().map_err(Clone::clone).and_then(|r| distance_bound(r))),
        ("7 variational limit", needles.as_ref().map_err(Clone::clone).and_then(|r| variational_limit(r))),
        ("8 maximality", maximality()),
        ("9 determinism", determinism()),
        ("10 closed-form window", closed_form_window()),
    ];
    let mut failed = 0;
    for (name, outcome) in &results {
        match outcome {
            Ok(d) => println!("PASS criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL criterion {name}: {d}");
            }
        }
    }
    println!("{}/{} criteria passed in {:.1} s", results.len() - failed, results.len(), started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
