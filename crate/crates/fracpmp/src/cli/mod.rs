//! The `fracpmp` command line.
//!
//! Exit codes: 0 success, 1 input error, 2 verification or convergence
//! failure, 3 solver failure.

pub mod convergence;
pub mod svg;
pub mod trajectory;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fde::transversality_readout;
use crate::pmp::{
    adjoint, closed_form_comparison, estimate_constants, forward_backward_sweep, needle_distance_bound, needle_experiment,
    objective, paper_extremal_control, paper_validity_start, pmp_residual, ClosedFormComparison, NeedleVariation,
    PmpSolution, SweepConfig,
};
use crate::problem::{builtin, load_problem, ProblemSpec};
use convergence::Study;
use trajectory::{read_trajectory, write_trajectory};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

/// Residual threshold of `verify`.
pub const VERIFY_TOL: f64 = 1e-2;
/// Probe points per control dimension for maximality checks.
pub const PROBE_POINTS: usize = 256;
const CONSTANT_SAMPLES: usize = 2000;

#[derive(Debug, Parser)]
#[command(name = "fracpmp", version, about = "Maximum-principle solver for multi-order Caputo optimal control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the forward-backward sweep and write trajectory.csv and report.json.
    Solve {
        #[command(flatten)]
        source: ProblemSource,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Recheck maximality, the adjoint equation and transversality on a trajectory file.
    Verify {
        #[command(flatten)]
        source: ProblemSource,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Needle-variation experiments on a converged solution.
    CheckLemmas {
        #[command(flatten)]
        source: ProblemSource,
        #[command(flatten)]
        overrides: Overrides,
        /// Needle start time; defaults to the middle of the horizon.
        #[arg(long)]
        tau: Option<f64>,
        /// Needle value; defaults to the upper control bound.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        v: Option<Vec<f64>>,
        /// Needle widths in grid steps.
        #[arg(long, value_delimiter = ',', default_value = "8,4,2,1")]
        theta_steps: Vec<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Measure empirical orders on problems with known solutions.
    Convergence {
        #[arg(long, value_delimiter = ',', default_value = "128,256,512,1024")]
        n_list: Vec<usize>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Render a trajectory file as a four-panel SVG.
    Plot { trajectory: PathBuf, out_svg: PathBuf },
}

#[derive(Debug, Args)]
pub struct ProblemSource {
    /// Problem file.
    pub config: Option<PathBuf>,
    /// Built-in problem instead of a file.
    #[arg(long, conflicts_with = "config")]
    pub problem: Option<String>,
}

#[derive(Debug, Args, Default)]
pub struct Overrides {
    #[arg(long)]
    pub n_steps: Option<usize>,
    #[arg(long)]
    pub relaxation: Option<f64>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Seed for the constants estimate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionResiduals {
    pub maximality: f64,
    pub adjoint: f64,
    pub transversality: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NeedleRow {
    pub theta: f64,
    pub sup_dist: f64,
    pub bound: f64,
    pub eta_gap: f64,
    pub delta_j: f64,
}

/// Summary written as `report.json`.
#[derive(Debug, Clone, Serialize, Default)]
pub struct RunReport {
    pub command: String,
    pub problem: String,
    pub n_steps: usize,
    pub sweep_iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub max_residual: f64,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditions: Option<ConditionResiduals>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form: Option<ClosedFormComparison>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_validity_start: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub needles: Option<Vec<NeedleRow>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub studies: Option<Vec<Study>>,
}

/// A failure and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub error: Error,
}

fn input(error: Error) -> Failure {
    Failure { code: EXIT_INPUT, error }
}

fn solver(error: Error) -> Failure {
    Failure { code: EXIT_SOLVER, error }
}

fn io_error(path: &Path, e: std::io::Error) -> Failure {
    input(Error::invalid(format!("{}: {e}", path.display())))
}

type Outcome = std::result::Result<(RunReport, i32), Failure>;

fn load(source: &ProblemSource) -> std::result::Result<ProblemSpec, Failure> {
    match (&source.config, &source.problem) {
        (Some(path), None) => load_problem(path).map_err(input),
        (None, Some(name)) => builtin(name).map_err(input),
        _ => Err(input(Error::invalid("give a problem file or --problem <name>"))),
    }
}

fn apply(problem: &mut ProblemSpec, o: &Overrides) -> std::result::Result<(), Failure> {
    let s = &mut problem.solver;
    s.n_steps = o.n_steps.unwrap_or(s.n_steps);
    s.relaxation = o.relaxation.unwrap_or(s.relaxation);
    s.control_tol = o.tol.unwrap_or(s.control_tol);
    s.max_iters = o.max_iters.unwrap_or(s.max_iters);
    problem.validate().map_err(input)
}

fn create_dir(dir: &Path) -> std::result::Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e))
}

fn write_report(dir: &Path, report: &mut RunReport) -> std::result::Result<(), Failure> {
    let path = dir.join("report.json");
    report.outputs.push(path.display().to_string());
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&path, json + "\n").map_err(|e| io_error(&path, e))
}

fn solve(problem: &ProblemSpec) -> std::result::Result<PmpSolution, Failure> {
    let grid = problem.grid(problem.solver.n_steps).map_err(input)?;
    forward_backward_sweep(problem, &grid, &SweepConfig::from_settings(&problem.solver)).map_err(solver)
}

fn base_report(command: &str, problem: &ProblemSpec, sol: &PmpSolution) -> RunReport {
    RunReport {
        command: command.into(),
        problem: problem.name.clone(),
        n_steps: sol.grid().n_steps(),
        sweep_iterations: sol.sweep_iterations,
        converged: sol.converged,
        objective: sol.objective,
        max_residual: sol.max_residual,
        ..RunReport::default()
    }
}

fn fmt_window(w: Option<(f64, f64)>) -> String {
    w.map_or_else(|| "empty".to_string(), |(a, b)| format!("[{a:.6}, {b:.6}]"))
}

fn cmd_solve(source: &ProblemSource, overrides: &Overrides, out_dir: &Path) -> Outcome {
    let mut problem = load(source)?;
    apply(&mut problem, overrides)?;
    let started = Instant::now();
    let sol = solve(&problem)?;
    create_dir(out_dir)?;
    let csv = out_dir.join("trajectory.csv");
    write_trajectory(&csv, &problem, &sol).map_err(solver)?;
    let mut report = base_report("solve", &problem, &sol);
    report.max_residual = pmp_residual(&problem, &sol, PROBE_POINTS).map_err(solver)?;
    report.outputs.push(csv.display().to_string());
    println!(
        "{}: N = {}, iterations = {}, converged = {}, objective = {:.10e}, max PMP residual = {:.3e}",
        problem.name, report.n_steps, sol.sweep_iterations, sol.converged, sol.objective, report.max_residual
    );
    if problem.name == "paper_example" {
        let start = paper_validity_start();
        let cmp = closed_form_comparison(&sol, &problem.omega, paper_extremal_control, 5e-2);
        println!("closed-form control atanh(Gamma(2/3)(5-t)^(1/3)) is defined for t > {start:.9}");
        println!(
            "  validity window on the grid: {} ({} nodes)",
            fmt_window(cmp.validity_window),
            cmp.validity_nodes
        );
        println!(
            "  interior-argmax window:      {} ({} nodes)",
            fmt_window(cmp.interior_window),
            cmp.interior_nodes
        );
        match cmp.max_abs_diff {
            Some(d) => println!("  compared on {} nodes, max |u* - closed form| = {d:.3e}", cmp.compared_nodes),
            None => println!("  intersection is empty: the computed control is bang-bang, nothing to compare"),
        }
        report.closed_form_validity_start = Some(start);
        report.closed_form = Some(cmp);
    }
    report.wall_time_seconds = started.elapsed().as_secs_f64();
    write_report(out_dir, &mut report)?;
    let code = if sol.converged { EXIT_OK } else { EXIT_CHECK_FAILED };
    Ok((report, code))
}

/// Residuals of the three conditions on a stored triple.
pub fn condition_residuals(problem: &ProblemSpec, sol: &PmpSolution) -> Result<ConditionResiduals> {
    let maximality = pmp_residual(problem, sol, PROBE_POINTS)?;
    let recomputed = adjoint(problem, &sol.x_star, &sol.u_star)?;
    let mut adjoint_res: f64 = 0.0;
    for k in 0..sol.grid().len() {
        if sol.lambda.is_flagged(k) || recomputed.is_flagged(k) {
            continue;
        }
        for i in 0..problem.state_dim() {
            let (a, b) = (sol.lambda.value(i, k), recomputed.value(i, k));
            adjoint_res = adjoint_res.max((a - b).abs() / (1.0 + b.abs()));
        }
    }
    let n = sol.grid().n_steps();
    let target = problem.terminal_grad(&sol.x_star.at(n))?;
    let read = transversality_readout(&sol.lambda, &problem.orders)?;
    let transversality = target.iter().zip(&read).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(ConditionResiduals { maximality, adjoint: adjoint_res, transversality, tolerance: VERIFY_TOL })
}

fn cmd_verify(source: &ProblemSource, trajectory: &Path, out_dir: Option<&Path>) -> Outcome {
    let started = Instant::now();
    let problem = load(source)?;
    let traj = read_trajectory(trajectory).map_err(input)?;
    if traj.state_dim() != problem.state_dim() || traj.control_dim() != problem.control_dim() {
        return Err(input(Error::dim(format!(
            "trajectory has n = {}, m = {}; problem has n = {}, m = {}",
            traj.state_dim(),
            traj.control_dim(),
            problem.state_dim(),
            problem.control_dim()
        ))));
    }
    let (x, u, lambda) = traj.paths().map_err(input)?;
    if x.grid().a() != problem.a || x.grid().b() != problem.b {
        return Err(input(Error::dim("trajectory does not span the problem horizon")));
    }
    let obj = objective(&problem, &x, &u).map_err(solver)?;
    let sol = PmpSolution {
        x_star: x,
        u_star: u,
        lambda,
        objective: obj,
        max_residual: 0.0,
        sweep_iterations: 0,
        converged: true,
    };
    let res = condition_residuals(&problem, &sol).map_err(solver)?;
    println!("maximality residual     {:.3e}", res.maximality);
    println!("adjoint residual        {:.3e}", res.adjoint);
    println!("transversality residual {:.3e}", res.transversality);
    let ok = res.maximality <= VERIFY_TOL && res.adjoint <= VERIFY_TOL && res.transversality <= VERIFY_TOL;
    println!("{}", if ok { "all conditions hold" } else { "verification failed" });
    let mut report = base_report("verify", &problem, &sol);
    report.max_residual = res.maximality;
    report.conditions = Some(res);
    report.wall_time_seconds = started.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_report(dir, &mut report)?;
    }
    Ok((report, if ok { EXIT_OK } else { EXIT_CHECK_FAILED }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_check_lemmas(
    source: &ProblemSource,
    overrides: &Overrides,
    tau: Option<f64>,
    v: Option<&[f64]>,
    theta_steps: &[usize],
    out_dir: Option<&Path>,
) -> Outcome {
    let mut problem = load(source)?;
    apply(&mut problem, overrides)?;
    if theta_steps.is_empty() || theta_steps.contains(&0) {
        return Err(input(Error::invalid("needle widths must be positive step counts")));
    }
    let started = Instant::now();
    let sol = solve(&problem)?;
    let grid = *sol.grid();
    let tau_node = grid.nearest_node(tau.unwrap_or(0.5 * (problem.a + problem.b)));
    let v = v.map_or_else(|| problem.omega.upper().to_vec(), <[f64]>::to_vec);
    let constants = estimate_constants(&problem, &grid, CONSTANT_SAMPLES, overrides.seed).map_err(solver)?;
    let abar = problem.orders.min();
    let widest = *theta_steps.iter().max().unwrap();
    let window = grid.t(tau_node) + widest as f64 * grid.h();
    let mut rows = Vec::new();
    let mut sorted = theta_steps.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    println!("{:>12} {:>14} {:>14} {:>14} {:>14}", "theta", "sup_dist", "bound", "eta_gap", "delta_j");
    for steps in sorted {
        let theta = steps as f64 * grid.h();
        let var = NeedleVariation { tau: tau_node, v: v.clone(), theta };
        let rec = needle_experiment(&problem, &sol, &var, Some(window)).map_err(|e| match e {
            Error::Domain(_) => input(e),
            e => solver(e),
        })?;
        let bound = needle_distance_bound(&constants, abar, theta, problem.b - problem.a).map_err(solver)?;
        println!(
            "{theta:>12.6e} {:>14.6e} {bound:>14.6e} {:>14.6e} {:>14.6e}",
            rec.sup_dist, rec.eta_gap, rec.delta_j
        );
        rows.push(NeedleRow { theta, sup_dist: rec.sup_dist, bound, eta_gap: rec.eta_gap, delta_j: rec.delta_j });
    }
    let bounded = rows.iter().all(|r| r.sup_dist <= r.bound);
    let decreasing = rows.windows(2).all(|w| w[1].eta_gap <= 1.1 * w[0].eta_gap);
    println!("eta_gap measured on [{window:.6}, {}]", problem.b);
    println!("sup_dist within bound: {bounded}; eta_gap decreasing: {decreasing}");
    let mut report = base_report("check-lemmas", &problem, &sol);
    report.needles = Some(rows);
    report.wall_time_seconds = started.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_report(dir, &mut report)?;
    }
    Ok((report, if bounded && decreasing { EXIT_OK } else { EXIT_CHECK_FAILED }))
}

fn cmd_convergence(n_list: &[usize], out_dir: Option<&Path>) -> Outcome {
    if n_list.len() < 2 || n_list.iter().any(|n| *n < 4) {
        return Err(input(Error::invalid("give at least two resolutions of 4 steps or more")));
    }
    let started = Instant::now();
    let studies = convergence::run_all(n_list).map_err(solver)?;
    for s in &studies {
        println!("{}", s.name);
        for (i, (n, e)) in s.n_list.iter().zip(&s.errors).enumerate() {
            match s.orders.get(i.wrapping_sub(1)) {
                Some(o) if i > 0 => println!("  N = {n:>6}  error = {e:.4e}  order = {o:.3}"),
                _ => println!("  N = {n:>6}  error = {e:.4e}"),
            }
        }
        println!("  required order {:.3}: {}", s.required_order, if s.pass { "ok" } else { "FAILED" });
    }
    let ok = studies.iter().all(|s| s.pass);
    let mut report = RunReport { command: "convergence".into(), ..RunReport::default() };
    report.n_steps = *n_list.iter().max().unwrap();
    report.studies = Some(studies);
    report.wall_time_seconds = started.elapsed().as_secs_f64();
    if let Some(dir) = out_dir {
        create_dir(dir)?;
        write_report(dir, &mut report)?;
    }
    Ok((report, if ok { EXIT_OK } else { EXIT_CHECK_FAILED }))
}

fn cmd_plot(trajectory: &Path, out_svg: &Path) -> Outcome {
    let started = Instant::now();
    let traj = read_trajectory(trajectory).map_err(input)?;
    std::fs::write(out_svg, svg::render(&traj)).map_err(|e| io_error(out_svg, e))?;
    println!("wrote {}", out_svg.display());
    let report = RunReport {
        command: "plot".into(),
        n_steps: traj.t.len() - 1,
        outputs: vec![out_svg.display().to_string()],
        wall_time_seconds: started.elapsed().as_secs_f64(),
        ..RunReport::default()
    };
    Ok((report, EXIT_OK))
}

/// Executes a parsed command.
pub fn execute(cli: &Cli) -> Outcome {
    match &cli.command {
        Command::Solve { source, overrides, out_dir } => cmd_solve(source, overrides, out_dir),
        Command::Verify { source, trajectory, out_dir } => cmd_verify(source, trajectory, out_dir.as_deref()),
        Command::CheckLemmas { source, overrides, tau, v, theta_steps, out_dir } => {
            cmd_check_lemmas(source, overrides, *tau, v.as_deref(), theta_steps, out_dir.as_deref())
        }
        Command::Convergence { n_list, out_dir } => cmd_convergence(n_list, out_dir.as_deref()),
        Command::Plot { trajectory, out_svg } => cmd_plot(trajectory, out_svg),
    }
}

/// Parses `args`, runs the command, reports errors on stderr, and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok((_, code)) => code,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_subcommands() {
        let cli = Cli::try_parse_from(["fracpmp", "solve", "--problem", "lq_smoke", "--n-steps", "64"]).unwrap();
        match cli.command {
            Command::Solve { source, overrides, .. } => {
                assert_eq!(source.problem.as_deref(), Some("lq_smoke"));
                assert_eq!(overrides.n_steps, Some(64));
            }
            other => panic!("{other:?}"),
        }
        let cli = Cli::try_parse_from(["fracpmp", "check-lemmas", "--problem", "x", "--v", "-1,2"]).unwrap();
        assert!(matches!(cli.command, Command::CheckLemmas { v: Some(ref v), .. } if v == &[-1.0, 2.0]));
        assert!(Cli::try_parse_from(["fracpmp", "solve", "a.toml", "--problem", "x"]).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["fracpmp", "solve", "--problem", "nope"]), EXIT_INPUT);
        assert_eq!(run(["fracpmp", "bogus"]), EXIT_INPUT);
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        assert_eq!(run(["fracpmp", "solve", "--problem", "zero_control", "--n-steps", "32", "--out-dir", out]), EXIT_OK);
        assert_eq!(
            run(["fracpmp", "solve", "--problem", "lq_smoke", "--n-steps", "32", "--max-iters", "1", "--out-dir", out]),
            EXIT_CHECK_FAILED
        );
    }

    #[test]
    fn verify_accepts_solver_output() {
        let problem = builtin("lq_smoke").unwrap();
        let sol = solve(&ProblemSpec { solver: crate::problem::SolverSettings { n_steps: 128, ..problem.solver }, ..problem.clone() })
            .unwrap();
        let res = condition_residuals(&problem, &sol).unwrap();
        assert!(res.maximality <= VERIFY_TOL && res.adjoint <= VERIFY_TOL && res.transversality <= VERIFY_TOL, "{res:?}");
    }
}
