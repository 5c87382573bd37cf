//! `duality` command line front end.
//!
//! Exit codes: 0 when everything ran and every check passed, 1 when a check
//! failed or a solver gave up, 2 for usage errors and unreadable scenarios.
//! Data goes to stdout (or `--csv`), diagnostics to stderr.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use crate::bessel::{estimate_defect, DefectEstimate};
use crate::deflator::check_nupbr;
use crate::dual::solve_dual;
use crate::error::Error;
use crate::lab::{self, FD_STEP};
use crate::primal::solve_primal;
use crate::scenario::Scenario;

const AFTER_HELP: &str = "\
CSV schemas:
  solve-primal   node,id,time,prob,dkappa,consumption,holding_<a>...,wealth_pre,wealth_post
  solve-dual     node,id,time,prob,dkappa,z,Y
  verify-duality check,value,tolerance,pass
  sweep          point,value,derivative  (then a '# summary ...' comment line)
  bessel-defect  t,paths,estimate,std_error,defect

Exit codes: 0 success, 1 failed check or solver error, 2 usage error.";

#[derive(Debug, Parser)]
#[command(name = "duality", version, about = "Convex duality for consumption and investment on event trees", after_help = AFTER_HELP)]
pub struct RunConfig {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test for no unbounded profit with bounded risk and print a witness deflator.
    CheckNupbr {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Maximise expected utility of consumption from initial capital x.
    SolvePrimal {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = positive)]
        x: f64,
        #[arg(long, default_value_t = 1e-8, value_parser = positive)]
        tol: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Minimise expected conjugate utility over dual processes at level y.
    SolveDual {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = positive)]
        y: f64,
        #[arg(long, default_value_t = 1e-8, value_parser = positive)]
        tol: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check the dual relations at x and, with --grid, conjugacy of u and v.
    VerifyDuality {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_parser = positive)]
        x: f64,
        /// Log-spaced x grid `lo:hi:n`; y points are u'(x) at each x.
        #[arg(long)]
        grid: Option<Grid>,
        #[arg(long, default_value_t = lab::SOLVER_TOL, value_parser = positive)]
        tol: f64,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tabulate u (axis x) or v (axis y) on a log-spaced grid.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Axis::X)]
        axis: Axis,
        #[arg(long)]
        grid: Grid,
        #[arg(long, default_value_t = lab::SOLVER_TOL, value_parser = positive)]
        tol: f64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Estimate the martingale defect 1 - E[1/R_t] of the inverse 3-d Bessel process.
    BesselDefect {
        #[arg(long, default_value_t = 1.0, value_parser = positive)]
        t: f64,
        #[arg(long, default_value_t = 1_000_000)]
        paths: u64,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Comma-separated horizons; emits one CSV row each.
        #[arg(long, value_delimiter = ',', value_parser = positive)]
        sweep: Option<Vec<f64>>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    X,
    Y,
}

/// `lo:hi:n`, expanded to `n` log-spaced points.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        lab::log_grid(self.lo, self.hi, self.n)
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, n] = parts[..] else {
            return Err(format!("expected lo:hi:n, got {s:?}"));
        };
        let lo: f64 = lo.parse().map_err(|e| format!("bad lower end {lo:?}: {e}"))?;
        let hi: f64 = hi.parse().map_err(|e| format!("bad upper end {hi:?}: {e}"))?;
        let n: usize = n.parse().map_err(|e| format!("bad point count {n:?}: {e}"))?;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0) {
            return Err("grid ends must be positive and finite".into());
        }
        if n == 0 || (n > 1 && hi <= lo) || (n == 1 && hi != lo) {
            return Err("grid must be strictly increasing".into());
        }
        Ok(Grid { lo, hi, n })
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {s}"))
    }
}

/// A failure that already knows its exit code.
struct Exit(i32, String);

impl From<Error> for Exit {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Schema(_)
            | Error::Json(_)
            | Error::Io(_)
            | Error::ProbabilityMismatch { .. }
            | Error::NegativeClock { .. }
            | Error::ClockBoundExceeded { .. }
            | Error::ZeroClockMass
            | Error::Dimension(_)
            | Error::InvalidArgument(_) => 2,
            _ => 1,
        };
        Exit(code, e.to_string())
    }
}

impl From<io::Error> for Exit {
    fn from(e: io::Error) -> Self {
        Exit(1, format!("output error: {e}"))
    }
}

impl From<csv::Error> for Exit {
    fn from(e: csv::Error) -> Self {
        Exit(1, format!("csv error: {e}"))
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(argv, &mut io::stdout().lock(), &mut io::stderr().lock())
}

pub fn run_with<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(config.command, out, err) {
        Ok(code) => code,
        Err(Exit(code, msg)) => {
            let _ = writeln!(err, "error: {msg}");
            code
        }
    }
}

fn load(path: &Path) -> Result<Scenario, Exit> {
    if !path.is_file() {
        return Err(Exit(2, format!("scenario file {} does not exist", path.display())));
    }
    Scenario::load(path).map_err(|e| Exit(2, format!("{}: {e}", path.display())))
}

fn dispatch(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Exit> {
    match command {
        Command::CheckNupbr { scenario } => {
            let sc = load(&scenario)?;
            let rep = check_nupbr(&sc.model)?;
            writeln!(out, "holds = {}", rep.holds)?;
            writeln!(out, "eps_star = {:.6}", rep.eps_star)?;
            if let Some(z) = &rep.witness {
                writeln!(out, "{:>6} {:>8} {:>12}", "node", "id", "z")?;
                for (n, zn) in z.values().iter().enumerate() {
                    writeln!(out, "{:>6} {:>8} {:>12.6}", n, sc.model.node(n).id, zn)?;
                }
            }
            if !rep.holds {
                writeln!(err, "NUPBR fails: the market admits an arbitrage")?;
                return Ok(1);
            }
            Ok(0)
        }
        Command::SolvePrimal { scenario, x, tol, csv } => {
            let sc = load(&scenario)?;
            let sol = solve_primal(&sc.model, &sc.utility, x, tol)?;
            let m = &sc.model;
            writeln!(out, "x = {x}")?;
            writeln!(out, "u = {:.10}", sol.value)?;
            writeln!(
                out,
                "{:>6} {:>8} {:>5} {:>14} {:>14} {:>14} holdings",
                "node", "id", "time", "consumption", "pre", "post"
            )?;
            for n in 0..m.len() {
                let h: Vec<String> = sol.holdings[n].iter().map(|v| format!("{v:.6}")).collect();
                writeln!(
                    out,
                    "{:>6} {:>8} {:>5} {:>14.8} {:>14.8} {:>14.8} {}",
                    n,
                    m.node(n).id,
                    m.node(n).time,
                    sol.plan.0[n],
                    sol.wealth.pre[n],
                    sol.wealth.post[n],
                    h.join(" ")
                )?;
            }
            if let Some(path) = csv {
                let mut w = csv_writer(&path)?;
                let mut header: Vec<String> =
                    ["node", "id", "time", "prob", "dkappa", "consumption"].iter().map(|s| s.to_string()).collect();
                header.extend((0..m.assets()).map(|a| format!("holding_{a}")));
                header.extend(["wealth_pre".to_string(), "wealth_post".to_string()]);
                w.write_record(&header)?;
                for n in 0..m.len() {
                    let node = m.node(n);
                    let mut row = vec![
                        n.to_string(),
                        node.id.to_string(),
                        node.time.to_string(),
                        node.prob.to_string(),
                        node.dkappa.to_string(),
                        sol.plan.0[n].to_string(),
                    ];
                    row.extend(sol.holdings[n].iter().map(|v| v.to_string()));
                    row.extend([sol.wealth.pre[n].to_string(), sol.wealth.post[n].to_string()]);
                    w.write_record(&row)?;
                }
                w.flush()?;
            }
            Ok(0)
        }
        Command::SolveDual { scenario, y, tol, csv } => {
            let sc = load(&scenario)?;
            let sol = solve_dual(&sc.model, &sc.utility, y, tol)?;
            let m = &sc.model;
            writeln!(out, "y = {y}")?;
            writeln!(out, "v = {:.10}", sol.value)?;
            writeln!(out, "{:>6} {:>8} {:>5} {:>14} {:>14}", "node", "id", "time", "z", "Y")?;
            for n in 0..m.len() {
                let yn = sol.yhat[n].map_or("-".to_string(), |v| format!("{v:.8}"));
                writeln!(
                    out,
                    "{:>6} {:>8} {:>5} {:>14.8} {:>14}",
                    n,
                    m.node(n).id,
                    m.node(n).time,
                    sol.zhat.values()[n],
                    yn
                )?;
            }
            if let Some(path) = csv {
                let mut w = csv_writer(&path)?;
                w.write_record(["node", "id", "time", "prob", "dkappa", "z", "Y"])?;
                for n in 0..m.len() {
                    let node = m.node(n);
                    w.write_record([
                        n.to_string(),
                        node.id.to_string(),
                        node.time.to_string(),
                        node.prob.to_string(),
                        node.dkappa.to_string(),
                        sol.zhat.values()[n].to_string(),
                        sol.yhat[n].map_or(String::new(), |v| v.to_string()),
                    ])?;
                }
                w.flush()?;
            }
            Ok(0)
        }
        Command::VerifyDuality { scenario, x, grid, tol, report } => {
            let sc = load(&scenario)?;
            let rel = lab::verify_dual_relations(&sc.model, &sc.utility, x, tol)?;
            let mut rows: Vec<(&str, f64, f64, bool)> = vec![
                ("u(x)", rel.u, f64::NAN, true),
                ("y = u'(x)", rel.y, f64::NAN, true),
                ("v(y)", rel.v, f64::NAN, true),
                ("conjugacy u = v + xy", rel.conjugacy_residual, lab::CONJUGACY_TOL, rel.conjugacy_pass),
                ("node |Y - U'(c)|", rel.max_node_residual, lab::RELATION_TOL, rel.node_pass),
                ("product E[sum c Y dk] = xy", rel.product_residual, lab::RELATION_TOL, rel.product_pass),
            ];
            let conj = match &grid {
                Some(g) => Some(lab::verify_conjugacy_paired(&sc.model, &sc.utility, &g.points(), lab::CONJUGACY_TOL)?),
                None => None,
            };
            if let Some(c) = &conj {
                rows.push(("grid max |v - sup(u - xy)|", c.primal_residual, c.tol, c.primal_residual <= c.tol));
                rows.push(("grid max |u - inf(v + xy)|", c.dual_residual, c.tol, c.dual_residual <= c.tol));
            }
            for (name, value, tolerance, pass) in &rows {
                if tolerance.is_nan() {
                    writeln!(out, "{name:<30} {value:>16.10}")?;
                } else {
                    let verdict = if *pass { "PASS" } else { "FAIL" };
                    writeln!(out, "{name:<30} {value:>16.3e}  tol {tolerance:.0e}  {verdict}")?;
                }
            }
            if let Some(path) = report {
                let mut w = csv_writer(&path)?;
                w.write_record(["check", "value", "tolerance", "pass"])?;
                for (name, value, tolerance, pass) in &rows {
                    let t = if tolerance.is_nan() { String::new() } else { tolerance.to_string() };
                    w.write_record([name.to_string(), value.to_string(), t, pass.to_string()])?;
                }
                w.flush()?;
            }
            let all = rows.iter().all(|r| r.3);
            if !all {
                writeln!(err, "duality check failed")?;
            }
            Ok(if all { 0 } else { 1 })
        }
        Command::Sweep { scenario, axis, grid, tol, csv } => {
            let sc = load(&scenario)?;
            let points = grid.points();
            let value = |p: f64| -> crate::Result<f64> {
                match axis {
                    Axis::X => solve_primal(&sc.model, &sc.utility, p, tol).map(|s| s.value),
                    Axis::Y => solve_dual(&sc.model, &sc.utility, p, tol).map(|s| s.value),
                }
            };
            let results: Vec<crate::Result<(f64, f64)>> = points
                .par_iter()
                .map(|&p| {
                    let h = FD_STEP * p;
                    Ok((value(p)?, (value(p + h)? - value(p - h)?) / (2.0 * h)))
                })
                .collect();
            let mut target: Box<dyn Write + '_> = match &csv {
                Some(path) => {
                    Box::new(File::create(path).map_err(|e| Exit(2, format!("cannot create {}: {e}", path.display())))?)
                }
                None => Box::new(&mut *out),
            };
            let mut rows = Vec::new();
            {
                let mut w = csv::Writer::from_writer(&mut target);
                w.write_record(["point", "value", "derivative"])?;
                for (p, r) in points.iter().zip(results) {
                    match r {
                        Ok((v, d)) => {
                            w.write_record([p.to_string(), v.to_string(), d.to_string()])?;
                            rows.push((*p, v, d));
                        }
                        Err(e) => {
                            w.flush()?;
                            return Err(Exit(1, format!("sweep stopped at {p}: {e}")));
                        }
                    }
                }
                w.flush()?;
            }
            let summary = SweepSummary::from_rows(axis, &rows);
            writeln!(target, "{}", summary.line())?;
            target.flush()?;
            drop(target);
            if !summary.ok() {
                writeln!(err, "sweep shape check failed: {}", summary.line())?;
                return Ok(1);
            }
            Ok(0)
        }
        Command::BesselDefect { t, paths, seed, sweep, csv } => {
            let ts = sweep.clone().unwrap_or_else(|| vec![t]);
            let estimates: Vec<DefectEstimate> =
                ts.iter().map(|&t| estimate_defect(t, paths, seed)).collect::<crate::Result<_>>()?;
            if sweep.is_none() && csv.is_none() {
                let e = estimates[0];
                writeln!(out, "t = {}", e.t)?;
                writeln!(out, "paths = {}", e.paths)?;
                writeln!(out, "estimate = {:.6}", e.estimate)?;
                writeln!(out, "std_error = {:.6e}", e.std_error)?;
                writeln!(out, "defect = {:.6}", e.defect)?;
                return Ok(0);
            }
            let target: Box<dyn Write + '_> = match &csv {
                Some(path) => {
                    Box::new(File::create(path).map_err(|e| Exit(2, format!("cannot create {}: {e}", path.display())))?)
                }
                None => Box::new(&mut *out),
            };
            let mut w = csv::Writer::from_writer(target);
            w.write_record(["t", "paths", "estimate", "std_error", "defect"])?;
            for e in &estimates {
                w.write_record([
                    e.t.to_string(),
                    e.paths.to_string(),
                    e.estimate.to_string(),
                    e.std_error.to_string(),
                    e.defect.to_string(),
                ])?;
            }
            w.flush()?;
            Ok(0)
        }
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>, Exit> {
    let f = File::create(path).map_err(|e| Exit(2, format!("cannot create {}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(f))
}

/// Shape of a swept value function: `u` should increase and be concave,
/// `v` decrease and be convex. Recomputable from the CSV rows alone.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub axis: Axis,
    pub points: usize,
    pub monotone: bool,
    pub curvature: bool,
}

impl SweepSummary {
    pub fn from_rows(axis: Axis, rows: &[(f64, f64, f64)]) -> Self {
        let sign = if axis == Axis::X { 1.0 } else { -1.0 };
        let slopes: Vec<f64> = rows.windows(2).map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0)).collect();
        let monotone = slopes.iter().all(|s| sign * s > 0.0) && rows.iter().all(|r| sign * r.2 > 0.0);
        // Slopes fall for a concave u and rise for a convex v; allow roundoff.
        let curvature = slopes.windows(2).all(|s| sign * (s[0] - s[1]) >= -1e-9 * s[0].abs().max(1.0));
        Self { axis, points: rows.len(), monotone, curvature }
    }

    pub fn ok(&self) -> bool {
        self.monotone && self.curvature
    }

    pub fn line(&self) -> String {
        let (dir, shape) = if self.axis == Axis::X { ("increasing", "concave") } else { ("decreasing", "convex") };
        format!("# summary points={} {dir}={} {shape}={}", self.points, self.monotone, self.curvature)
    }
}
