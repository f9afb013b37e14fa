use approx::assert_abs_diff_eq;

use fracpmp::cli::convergence::{mittag_leffler_ivp_error, richardson_orders};
use fracpmp::fde::{solve_adjoint, solve_caputo_ivp, transversality_readout, FnField, TerminalData};
use fracpmp::fracops::{MultiOrder, SampledPath, TimeGrid};
use fracpmp::pmp::{adjoint, simulate};
use fracpmp::problem::builtin;
use fracpmp::specfun::{mittag_leffler, MittagLefflerParams};
use fracpmp::Error;

#[test]
fn mittag_leffler_ivp_order() {
    let n_list = [128, 256, 512, 1024];
    let errors: Vec<f64> = n_list.iter().map(|&n| mittag_leffler_ivp_error(n).unwrap()).collect();
    assert!(errors[2] <= 2e-3);
    let slope = *richardson_orders(&n_list, &errors).last().unwrap();
    assert!(slope >= 0.6, "slope {slope}");
}

#[test]
fn multi_order_decoupled_system() {
    let grid = TimeGrid::new(0.0, 2.0, 512).unwrap();
    let orders = MultiOrder::new(vec![0.4, 0.9]).unwrap();
    let field = FnField::new(2, 0, |_, x, _| vec![-x[0], -2.0 * x[1]]);
    let x = solve_caputo_ivp(&field, &SampledPath::zeros(grid, 0), &[1.0, 0.5], &orders, &grid).unwrap();
    let (m1, m2) = (MittagLefflerParams::new(0.4, 1.0).unwrap(), MittagLefflerParams::new(0.9, 1.0).unwrap());
    for (k, t) in grid.nodes().enumerate() {
        assert_abs_diff_eq!(x.value(0, k), mittag_leffler(m1, -t.powf(0.4)).unwrap(), epsilon = 1e-2);
        assert_abs_diff_eq!(x.value(1, k), 0.5 * mittag_leffler(m2, -2.0 * t.powf(0.9)).unwrap(), epsilon = 1e-2);
    }
}

#[test]
fn example_adjoint_and_transversality() {
    let problem = builtin("paper_example").unwrap();
    let grid = problem.grid(1024).unwrap();
    let u = SampledPath::new(grid, vec![vec![0.0; grid.len()]]).unwrap();
    let x = simulate(&problem, &u).unwrap();
    let lambda = adjoint(&problem, &x, &u).unwrap();
    // (5 - t)^(-1/6) / Gamma(5/6) and (5 - t)^(-1/2) / Gamma(1/2)
    let oracle = [
        (1.0, 0.703_144_618_917_795_7, 0.282_094_791_773_878_1),
        (3.0, 0.789_253_149_208_182_5, 0.398_942_280_401_432_7),
        (4.5, 0.994_396_656_383_208_3, 0.797_884_560_802_865_4),
        (4.875, 1.252_861_279_322_283_2, 1.595_769_121_605_730_7),
    ];
    for (t, l1, l2) in oracle {
        let k = grid.nearest_node(t);
        assert_abs_diff_eq!(lambda.value(0, k), l1, epsilon = 1e-2);
        assert_abs_diff_eq!(lambda.value(1, k), l2, epsilon = 1e-2);
    }
    assert!(lambda.is_flagged(grid.n_steps()));
    let read = transversality_readout(&lambda, &problem.orders).unwrap();
    assert_abs_diff_eq!(read[0], 0.0, epsilon = 2e-2);
    assert_abs_diff_eq!(read[1], 1.0, epsilon = 2e-2);
}

#[test]
fn coupled_adjoint_transversality() {
    let grid = TimeGrid::new(0.0, 1.0, 1024).unwrap();
    let orders = MultiOrder::new(vec![0.6, 0.8]).unwrap();
    let field = FnField::new(2, 1, |_, x, u| vec![x[1] - 0.5 * x[0], -x[0] + u[0]]);
    let u = SampledPath::from_fn(grid, 1, |t| vec![t.cos()]).unwrap();
    let x = solve_caputo_ivp(&field, &u, &[1.0, 0.0], &orders, &grid).unwrap();
    let grad = SampledPath::from_fn(grid, 2, |t| vec![t, 1.0]).unwrap();
    let terminal = TerminalData { weighted_terminal: vec![0.7, -0.3] };
    let lambda = solve_adjoint(&field, &grad, &x, &u, &terminal, &orders, &grid).unwrap();
    let read = transversality_readout(&lambda, &orders).unwrap();
    assert_abs_diff_eq!(read[0], 0.7, epsilon = 2e-2);
    assert_abs_diff_eq!(read[1], -0.3, epsilon = 2e-2);
}

#[test]
fn solver_input_errors() {
    let grid = TimeGrid::new(0.0, 1.0, 16).unwrap();
    let orders = MultiOrder::new(vec![0.5]).unwrap();
    let field = FnField::new(1, 1, |_, x, _| vec![x[0]]);
    let u = SampledPath::zeros(grid, 1);
    assert!(matches!(solve_caputo_ivp(&field, &u, &[1.0, 2.0], &orders, &grid), Err(Error::Dimension(_))));
    let blow_up = FnField::new(1, 1, |_, x, _| vec![x[0] * x[0] * 1e6]);
    assert!(solve_caputo_ivp(&blow_up, &u, &[10.0], &orders, &grid).is_err());
}
