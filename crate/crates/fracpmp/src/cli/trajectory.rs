//! `trajectory.csv`: header `t,x1..xn,u1..um,lambda1..lambdan,H`; rows at
//! flagged nodes carry a trailing `S` field.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fracops::{SampledPath, TimeGrid};
use crate::pmp::{hamiltonian, PmpSolution};
use crate::problem::ProblemSpec;

pub const SINGULAR_MARK: &str = "S";

/// Columns of a trajectory file.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    pub h: Vec<f64>,
    pub flagged: Vec<bool>,
}

fn header(n: usize, m: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    cols.extend((1..=n).map(|i| format!("x{i}")));
    cols.extend((1..=m).map(|j| format!("u{j}")));
    cols.extend((1..=n).map(|i| format!("lambda{i}")));
    cols.push("H".into());
    cols
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("csv: {e}"))
}

pub fn write_trajectory(path: &Path, problem: &ProblemSpec, sol: &PmpSolution) -> Result<()> {
    let grid = sol.grid();
    let (n, m) = (problem.state_dim(), problem.control_dim());
    let mut out = csv::WriterBuilder::new().flexible(true).from_writer(Vec::new());
    out.write_record(header(n, m)).map_err(csv_error)?;
    for k in 0..grid.len() {
        let t = grid.t(k);
        let (x, u, l) = (sol.x_star.at(k), sol.u_star.at(k), sol.lambda.at(k));
        let h = hamiltonian(problem, t, &x, &u, &l)?;
        let mut row: Vec<String> = std::iter::once(t).chain(x).chain(u).chain(l).chain([h]).map(num).collect();
        if sol.lambda.is_flagged(k) || sol.x_star.is_flagged(k) {
            row.push(SINGULAR_MARK.into());
        }
        out.write_record(&row).map_err(csv_error)?;
    }
    let bytes = out.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    let mut file = std::fs::File::create(path).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    file.write_all(&bytes).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    Ok(())
}

/// Reads a trajectory file; the state and control dimensions come from the header.
pub fn read_trajectory(path: &Path) -> Result<Trajectory> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    let head: Vec<String> = rdr.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    let count = |prefix: &str| {
        head.iter()
            .filter(|c| c.strip_prefix(prefix).is_some_and(|d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit())))
            .count()
    };
    let (n, m) = (count("x"), count("u"));
    if n == 0 || head != header(n, m) {
        return Err(Error::dim(format!("unexpected trajectory header `{}`", head.join(","))));
    }
    let width = head.len();
    let mut traj = Trajectory {
        t: Vec::new(),
        x: vec![Vec::new(); n],
        u: vec![Vec::new(); m],
        lambda: vec![Vec::new(); n],
        h: Vec::new(),
        flagged: Vec::new(),
    };
    for (r, rec) in rdr.records().enumerate() {
        let row = r + 1;
        let rec = rec.map_err(csv_error)?;
        let flagged = match rec.len() {
            l if l == width => false,
            l if l == width + 1 && &rec[width] == SINGULAR_MARK => true,
            l => return Err(Error::dim(format!("row {row} has {l} fields, expected {width}"))),
        };
        let vals: Vec<f64> = (0..width)
            .map(|c| {
                let v: f64 = rec[c]
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("row {row}, column `{}`: `{}` is not a number", head[c], &rec[c])))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::invalid(format!("row {row}, column `{}`: non-finite value", head[c])))
                }
            })
            .collect::<Result<_>>()?;
        traj.t.push(vals[0]);
        for i in 0..n {
            traj.x[i].push(vals[1 + i]);
            traj.lambda[i].push(vals[1 + n + m + i]);
        }
        for j in 0..m {
            traj.u[j].push(vals[1 + n + j]);
        }
        traj.h.push(vals[width - 1]);
        traj.flagged.push(flagged);
    }
    if traj.t.len() < 5 {
        return Err(Error::invalid(format!("{} holds {} rows, at least 5 are needed", path.display(), traj.t.len())));
    }
    Ok(traj)
}

impl Trajectory {
    pub fn state_dim(&self) -> usize {
        self.x.len()
    }

    pub fn control_dim(&self) -> usize {
        self.u.len()
    }

    /// The uniform grid the rows were written on.
    pub fn grid(&self) -> Result<TimeGrid> {
        let len = self.t.len();
        let grid = TimeGrid::new(self.t[0], self.t[len - 1], len - 1)?;
        let tol = 1e-9 * (grid.b() - grid.a());
        if let Some(k) = (0..len).find(|&k| (grid.t(k) - self.t[k]).abs() > tol) {
            return Err(Error::invalid(format!("row {} breaks the uniform time grid", k + 1)));
        }
        Ok(grid)
    }

    /// `(x, u, lambda)` as paths; flagged rows mark the adjoint.
    pub fn paths(&self) -> Result<(SampledPath, SampledPath, SampledPath)> {
        let grid = self.grid()?;
        let x = SampledPath::new(grid, self.x.clone())?;
        let u = SampledPath::new(grid, self.u.clone())?;
        let mut lambda = SampledPath::new(grid, self.lambda.clone())?;
        for (k, f) in self.flagged.iter().enumerate() {
            if *f {
                lambda.flag(k);
            }
        }
        Ok((x, u, lambda))
    }
}
