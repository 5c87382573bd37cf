//! Dual problem: minimise `E[sum_n V(n, y z_n) dkappa_n]` over the closure of
//! the deflator polytope.
//!
//! Since `V` is decreasing, the infimum over processes dominated by `y z` is
//! attained on `y z` itself, so the dual domain never has to be
//! materialised beyond the polytope.

use nalgebra::{DMatrix, DVector};

use crate::deflator::{build_polytope, check_nupbr, Deflator, MEMBERSHIP_TOL};
use crate::engine::{solve_convex, solve_lp, Objective, Sense, SmoothConvexProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::preferences::{ConjugateField, UtilityField};

#[derive(Debug, Clone)]
pub struct DualSolution {
    pub y: f64,
    pub value: f64,
    /// `Y = y z` on nodes with positive clock increment, `None` elsewhere.
    pub yhat: Vec<Option<f64>>,
    pub zhat: Deflator,
    pub status: SolveStatus,
    pub gap: f64,
}

/// `E[sum V(n, Y_n) dkappa_n]` for a node-indexed dual process.
pub fn expected_conjugate(model: &MarketModel, conj: &ConjugateField, yproc: &[f64]) -> f64 {
    model
        .clock_nodes()
        .map(|n| {
            let node = model.node(n);
            node.prob * node.dkappa * conj.evaluate(n, yproc[n])
        })
        .sum()
}

/// `E[sum c_n Y_n dkappa_n]`.
pub fn pairing(model: &MarketModel, c: &[f64], yproc: &[f64]) -> f64 {
    model
        .clock_nodes()
        .map(|n| {
            let node = model.node(n);
            node.prob * node.dkappa * c[n] * yproc[n]
        })
        .sum()
}

/// `z -> E[sum V(n, y z_n) dkappa_n]` over all node values `z`.
pub struct DualObjective {
    conj: ConjugateField,
    y: f64,
    clock: Vec<usize>,
    coef: Vec<f64>,
    dim: usize,
}

impl DualObjective {
    pub fn new(model: &MarketModel, utility: &UtilityField, y: f64) -> Self {
        let clock: Vec<usize> = model.clock_nodes().collect();
        let coef = clock.iter().map(|&n| model.node(n).prob * model.node(n).dkappa).collect();
        Self { conj: utility.conjugate_field(), y, clock, coef, dim: model.len() }
    }
}

impl Objective for DualObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, z: &[f64]) -> f64 {
        let mut total = 0.0;
        for (k, &n) in self.clock.iter().enumerate() {
            if z[n] < 0.0 {
                return f64::INFINITY;
            }
            total += self.coef[k] * self.conj.evaluate(n, self.y * z[n]);
        }
        total
    }

    fn gradient(&self, z: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for (k, &n) in self.clock.iter().enumerate() {
            g[n] = self.coef[k] * self.y * self.conj.derivative(n, self.y * z[n]);
        }
        g
    }

    fn hessian(&self, z: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (k, &n) in self.clock.iter().enumerate() {
            h[(n, n)] = self.coef[k] * self.y * self.y * self.conj.second_derivative(n, self.y * z[n]);
        }
        h
    }
}

pub fn solve_dual(model: &MarketModel, utility: &UtilityField, y: f64, tol: f64) -> Result<DualSolution> {
    solve_dual_with_floor(model, utility, y, 0.0, tol)
}

/// Dual solve restricted to `z >= floor`; `floor = 0` is the polytope closure.
pub fn solve_dual_with_floor(
    model: &MarketModel,
    utility: &UtilityField,
    y: f64,
    floor: f64,
    tol: f64,
) -> Result<DualSolution> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::InvalidArgument(format!("dual variable must be positive, got {y}")));
    }
    if !(floor.is_finite() && floor >= 0.0) {
        return Err(Error::InvalidArgument(format!("floor must be nonnegative, got {floor}")));
    }
    crate::primal::check_tolerance(tol)?;
    if utility.weights().len() != model.len() {
        return Err(Error::Dimension("utility weights do not match the tree".into()));
    }
    let report = check_nupbr(model)?;
    let Some(witness) = report.witness else {
        return Err(Error::NupbrFails { eps_star: report.eps_star });
    };
    let poly = build_polytope(model);
    let objective = DualObjective::new(model, utility, y);
    let all: Vec<usize> = (0..model.len()).collect();
    let mut program = SmoothConvexProgram::new(&objective)
        .with_equalities(poly.eq_matrix.clone(), poly.eq_rhs.clone())
        .with_orthant(&all, floor);
    if report.eps_star > floor {
        program = program.with_start(DVector::from_column_slice(witness.values()));
    }
    let sol = solve_convex(&program, tol);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::InvalidArgument(format!("no deflator stays above the floor {floor}")))
        }
        status => return Err(Error::Solver { status, context: "dual barrier solve".into() }),
    }
    let z: Vec<f64> = sol.x.iter().copied().collect();
    let yproc: Vec<f64> = z.iter().map(|v| y * v).collect();
    let value = expected_conjugate(model, &utility.conjugate_field(), &yproc);
    if !value.is_finite() {
        return Err(Error::NotFinite(format!("dual value at y = {y} is {value}")));
    }
    let yhat = (0..model.len()).map(|n| (model.node(n).dkappa > 0.0).then(|| yproc[n])).collect();
    Ok(DualSolution { y, value, yhat, zhat: Deflator::new(z), status: sol.status, gap: sol.gap })
}

/// Whether `Y` is dominated on clock nodes by `y z` for some `z` in the
/// polytope closure.
pub fn dual_domain_member(model: &MarketModel, yproc: &[f64], y: f64) -> Result<bool> {
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::InvalidArgument(format!("dual variable must be positive, got {y}")));
    }
    if yproc.len() != model.len() {
        return Err(Error::Dimension(format!("process has {} entries, tree has {} nodes", yproc.len(), model.len())));
    }
    if model.clock_nodes().any(|n| !(yproc[n].is_finite() && yproc[n] >= 0.0)) {
        return Err(Error::InvalidArgument("dual process must be nonnegative on clock nodes".into()));
    }
    let poly = build_polytope(model);
    let mut lp = poly.lp(Sense::Maximize);
    let delta = lp.add_free(1.0);
    for n in model.clock_nodes() {
        lp.add_ge(vec![(n, 1.0), (delta, -1.0)], yproc[n] / y);
    }
    let sol = solve_lp(&lp.build(), 1e-9);
    match sol.status {
        SolveStatus::Optimal => Ok(sol.x[delta] >= -MEMBERSHIP_TOL),
        SolveStatus::Infeasible => Ok(false),
        status => Err(Error::Solver { status, context: "dual-domain LP".into() }),
    }
}
