//! Problem files: `[problem]`, `[control]`, `[dynamics]`, `[cost]` and an
//! optional `[solver]` and `[gradients]` section.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use super::expr::{parse_expression, Expr, ExprError};
use super::{ControlSet, Gradients, ProblemSpec, SolverSettings};
use crate::error::{Error, Result};
use crate::fracops::MultiOrder;

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Real {
    Int(i64),
    Float(f64),
}

impl Real {
    fn get(self) -> f64 {
        match self {
            Real::Int(i) => i as f64,
            Real::Float(f) => f,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OrderValue {
    Number(Real),
    Text(String),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    problem: Spanned<RawProblem>,
    control: Spanned<RawControl>,
    dynamics: Spanned<BTreeMap<String, Spanned<String>>>,
    cost: Spanned<RawCost>,
    solver: Option<RawSolver>,
    gradients: Option<Spanned<BTreeMap<String, Spanned<String>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    name: String,
    a: Spanned<Real>,
    b: Spanned<Real>,
    orders: Spanned<Vec<Spanned<OrderValue>>>,
    x_a: Spanned<Vec<Real>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawControl {
    lower: Vec<Real>,
    upper: Vec<Real>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCost {
    lagrangian: Spanned<String>,
    terminal: Spanned<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    n_steps: Option<usize>,
    relaxation: Option<Real>,
    control_tol: Option<Real>,
    max_iters: Option<usize>,
}

fn config_error(span: Range<usize>, message: impl Into<String>) -> Error {
    Error::Config { offset: Some(span.start), message: message.into() }
}

/// Parses an expression stored in a TOML basic string; offsets are reported
/// relative to the whole document.
fn expression(src: &Spanned<String>, n: usize, m: usize, what: &str) -> Result<Expr> {
    let base = src.span().start + 1;
    parse_expression(src.get_ref(), n, m).map_err(|e| {
        let offset = match &e {
            ExprError::Syntax { offset, .. }
            | ExprError::UnknownIdentifier { offset, .. }
            | ExprError::IndexOutOfRange { offset, .. } => base + offset,
            ExprError::Domain { .. } => src.span().start,
        };
        Error::Config { offset: Some(offset), message: format!("{what}: {e}") }
    })
}

fn order_value(v: &Spanned<OrderValue>) -> Result<f64> {
    match v.get_ref() {
        OrderValue::Number(r) => Ok(r.get()),
        OrderValue::Text(s) => {
            let span = v.span();
            let e = parse_expression(s, 0, 0)
                .map_err(|e| config_error(span.clone(), format!("order `{s}`: {e}")))?;
            e.eval(0.0, &[], &[]).map_err(|e| config_error(span, format!("order `{s}`: {e}")))
        }
    }
}

/// Parses a problem document.
pub fn parse_problem(src: &str) -> Result<ProblemSpec> {
    let raw: RawFile = toml::from_str(src).map_err(|e| Error::Config {
        offset: e.span().map(|s| s.start),
        message: e.message().to_string(),
    })?;
    let problem = raw.problem.get_ref();
    let orders: Vec<f64> = problem.orders.get_ref().iter().map(order_value).collect::<Result<_>>()?;
    let orders =
        MultiOrder::new(orders).map_err(|e| config_error(problem.orders.span(), e.to_string()))?;
    let n = orders.len();
    let x_a: Vec<f64> = problem.x_a.get_ref().iter().map(|r| r.get()).collect();
    if x_a.len() != n {
        return Err(config_error(
            problem.x_a.span(),
            format!("x_a has {} entries but {n} orders are declared", x_a.len()),
        ));
    }
    let (a, b) = (problem.a.get_ref().get(), problem.b.get_ref().get());
    if !(b > a) {
        return Err(config_error(problem.b.span(), format!("b = {b} must exceed a = {a}")));
    }

    let control = raw.control.get_ref();
    let omega = ControlSet::new(
        control.lower.iter().map(|r| r.get()).collect(),
        control.upper.iter().map(|r| r.get()).collect(),
    )
    .map_err(|e| config_error(raw.control.span(), e.to_string()))?;
    let m = omega.dim();

    let dynamics = raw.dynamics.get_ref();
    let mut f = Vec::with_capacity(n);
    for i in 1..=n {
        let key = format!("f{i}");
        let src = dynamics
            .get(&key)
            .ok_or_else(|| config_error(raw.dynamics.span(), format!("missing `{key}` in [dynamics]")))?;
        f.push(expression(src, n, m, &key)?);
    }
    if let Some((key, v)) = dynamics.iter().find(|(k, _)| !(1..=n).any(|i| **k == format!("f{i}"))) {
        return Err(config_error(v.span(), format!("unexpected `{key}` in [dynamics] for n = {n}")));
    }

    let cost = raw.cost.get_ref();
    let lagrangian = expression(&cost.lagrangian, n, m, "lagrangian")?;
    let terminal = expression(&cost.terminal, n, 0, "terminal")?;

    let gradients = match &raw.gradients {
        None => None,
        Some(g) => {
            let table = g.get_ref();
            let take = |key: String| {
                table
                    .get(&key)
                    .ok_or_else(|| config_error(g.span(), format!("missing `{key}` in [gradients]")))
                    .and_then(|s| expression(s, n, m, &key))
            };
            let f_x = (1..=n)
                .map(|i| (1..=n).map(|j| take(format!("f{i}_x{j}"))).collect::<Result<Vec<_>>>())
                .collect::<Result<Vec<_>>>()?;
            let lagrangian_x = (1..=n).map(|j| take(format!("lagrangian_x{j}"))).collect::<Result<Vec<_>>>()?;
            if table.len() != n * n + n {
                return Err(config_error(g.span(), "unexpected keys in [gradients]"));
            }
            Some(Gradients { f_x, lagrangian_x })
        }
    };

    let mut solver = SolverSettings::default();
    if let Some(s) = &raw.solver {
        solver.n_steps = s.n_steps.unwrap_or(solver.n_steps);
        solver.relaxation = s.relaxation.map_or(solver.relaxation, Real::get);
        solver.control_tol = s.control_tol.map_or(solver.control_tol, Real::get);
        solver.max_iters = s.max_iters.unwrap_or(solver.max_iters);
    }

    let spec = ProblemSpec {
        name: problem.name.clone(),
        orders,
        a,
        b,
        x_a,
        omega,
        f,
        lagrangian,
        terminal,
        gradients,
        solver,
    };
    spec.validate().map_err(|e| Error::Config { offset: None, message: e.to_string() })?;
    Ok(spec)
}

/// Reads and parses a problem file.
pub fn load_problem(path: &Path) -> Result<ProblemSpec> {
    let src = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { offset: None, message: format!("{}: {e}", path.display()) })?;
    parse_problem(&src)
}

#[derive(Serialize)]
struct OutFile<'a> {
    problem: OutProblem<'a>,
    control: &'a ControlSet,
    dynamics: BTreeMap<String, String>,
    cost: OutCost,
    solver: &'a SolverSettings,
    #[serde(skip_serializing_if = "Option::is_none")]
    gradients: Option<BTreeMap<String, String>>,
}

#[derive(Serialize)]
struct OutProblem<'a> {
    name: &'a str,
    a: f64,
    b: f64,
    orders: &'a [f64],
    x_a: &'a [f64],
}

#[derive(Serialize)]
struct OutCost {
    lagrangian: String,
    terminal: String,
}

pub(super) fn to_toml(p: &ProblemSpec) -> String {
    let out = OutFile {
        problem: OutProblem { name: &p.name, a: p.a, b: p.b, orders: p.orders.as_slice(), x_a: &p.x_a },
        control: &p.omega,
        dynamics: p.f.iter().enumerate().map(|(i, e)| (format!("f{}", i + 1), e.to_string())).collect(),
        cost: OutCost { lagrangian: p.lagrangian.to_string(), terminal: p.terminal.to_string() },
        solver: &p.solver,
        gradients: p.gradients.as_ref().map(|g| {
            let mut map = BTreeMap::new();
            for (i, row) in g.f_x.iter().enumerate() {
                for (j, e) in row.iter().enumerate() {
                    map.insert(format!("f{}_x{}", i + 1, j + 1), e.to_string());
                }
            }
            for (j, e) in g.lagrangian_x.iter().enumerate() {
                map.insert(format!("lagrangian_x{}", j + 1), e.to_string());
            }
            map
        }),
    };
    toml::to_string(&out).expect("problem serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::builtin_problems;

    const EXAMPLE: &str = r#"
[problem]
name = "paper_example"
a = 1
b = 5.0
orders = ["1/3", 0.5]
x_a = [1, 1]

[control]
lower = [-2]
upper = [7]

[dynamics]
f1 = "1 - exp(2*u1)"
f2 = "x1"

[cost]
lagrangian = "1 + exp(2*u1)"
terminal = "x2"

[solver]
n_steps = 256
"#;

    #[test]
    fn parses_document() {
        let p = parse_problem(EXAMPLE).unwrap();
        assert_eq!(p.orders.as_slice(), &[1.0 / 3.0, 0.5]);
        assert_eq!(p.x_a, vec![1.0, 1.0]);
        assert_eq!(p.omega.lower(), &[-2.0]);
        assert_eq!(p.solver.n_steps, 256);
        assert_eq!(p.solver.relaxation, 0.5);
        assert!(p.gradients.is_none());
    }

    #[test]
    fn builtins_round_trip() {
        for p in builtin_problems() {
            let back = parse_problem(&p.to_toml()).unwrap();
            assert_eq!(back, p);
        }
    }

    fn offset_of(src: &str) -> Option<usize> {
        match parse_problem(src) {
            Err(Error::Config { offset, .. }) => offset,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn expression_errors_point_into_the_document() {
        let bad = EXAMPLE.replace("f2 = \"x1\"", "f2 = \"x1 + * 2\"");
        let at = offset_of(&bad).unwrap();
        assert_eq!(&bad[at..at + 1], "*");
        let bad = EXAMPLE.replace("terminal = \"x2\"", "terminal = \"u1\"");
        let at = offset_of(&bad).unwrap();
        assert_eq!(&bad[at..at + 2], "u1");
    }

    #[test]
    fn structural_errors_have_offsets() {
        assert!(offset_of("[problem\nname = 1").is_some());
        let bad = EXAMPLE.replace("x_a = [1, 1]", "x_a = [1]");
        let at = offset_of(&bad).unwrap();
        assert!(bad[at..].starts_with("[1]"));
        let bad = EXAMPLE.replace("orders = [\"1/3\", 0.5]", "orders = [\"1/0\", 0.5]");
        assert!(offset_of(&bad).is_some());
        let bad = EXAMPLE.replace("f2 = \"x1\"", "f2 = \"x1\"\nf3 = \"0\"");
        assert!(offset_of(&bad).is_some());
        assert!(offset_of(&EXAMPLE.replace("[cost]", "[costs]")).is_some());
    }
}
