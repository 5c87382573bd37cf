//! Primal problem: maximise `E[sum_n U(n, c_n) dkappa_n]` over consumption
//! plans financeable from initial capital `x`.
//!
//! Consumption (on nodes with positive clock increment) and holdings are
//! optimised jointly; admissibility enters as the linear constraints
//! `post(n) >= 0` on post-consumption wealth, so incomplete markets need no
//! replication argument.

use nalgebra::{DMatrix, DVector};

use crate::deflator::{maximize_linear, require_nupbr};
use crate::engine::{solve_convex, solve_lp, LpBuilder, Objective, Sense, SmoothConvexProgram, SolveStatus};
use crate::error::{Error, Result};
use crate::market::{wealth_process, MarketModel, WealthProcess};
use crate::preferences::UtilityField;

/// Slack below zero tolerated when deciding admissibility, relative to `max(1, x)`.
pub const ADMISSIBILITY_TOL: f64 = 1e-9;

/// Node-indexed consumption rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConsumptionPlan(pub Vec<f64>);

impl ConsumptionPlan {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self(self.0.iter().map(|c| c * k).collect())
    }
}

#[derive(Debug, Clone)]
pub struct PrimalSolution {
    pub x: f64,
    pub value: f64,
    pub plan: ConsumptionPlan,
    /// Node-indexed holdings; zero at terminal nodes.
    pub holdings: Vec<Vec<f64>>,
    pub wealth: WealthProcess,
    pub status: SolveStatus,
    pub gap: f64,
}

/// Expected clock-weighted utility of a plan, with `-inf` when any consumed
/// node has `U = -inf`.
pub fn expected_utility(model: &MarketModel, utility: &UtilityField, plan: &[f64]) -> f64 {
    model
        .clock_nodes()
        .map(|n| {
            let node = model.node(n);
            node.prob * node.dkappa * utility.evaluate(n, plan[n])
        })
        .sum()
}

/// Variable layout: consumption on clock nodes, then `d` holdings per
/// non-terminal node.
struct Layout {
    clock: Vec<usize>,
    traders: Vec<usize>,
    assets: usize,
}

impl Layout {
    fn new(model: &MarketModel) -> Self {
        Self { clock: model.clock_nodes().collect(), traders: model.non_terminal().collect(), assets: model.assets() }
    }

    fn dim(&self) -> usize {
        self.clock.len() + self.traders.len() * self.assets
    }

    fn h_offset(&self, trader_pos: usize) -> usize {
        self.clock.len() + trader_pos * self.assets
    }

    /// Row `n` holds the coefficients of `post(n) - x` in the variables.
    fn wealth_rows(&self, model: &MarketModel) -> DMatrix<f64> {
        let n = model.len();
        let mut c_pos = vec![usize::MAX; n];
        for (k, &node) in self.clock.iter().enumerate() {
            c_pos[node] = k;
        }
        let mut t_pos = vec![usize::MAX; n];
        for (k, &node) in self.traders.iter().enumerate() {
            t_pos[node] = k;
        }
        let mut g = DMatrix::zeros(n, self.dim());
        for k in 0..n {
            if let Some(p) = model.node(k).parent {
                let prev = g.row(p).clone_owned();
                g.row_mut(k).copy_from(&prev);
                let inc = model.increment_into(k);
                let off = self.h_offset(t_pos[p]);
                for a in 0..self.assets {
                    g[(k, off + a)] += inc[a];
                }
            }
            if c_pos[k] != usize::MAX {
                g[(k, c_pos[k])] -= model.node(k).dkappa;
            }
        }
        g
    }
}

/// Minimisation form `-E[sum U(c) dkappa]` over `(c, H)`.
pub struct PrimalObjective<'a> {
    utility: &'a UtilityField,
    clock: Vec<usize>,
    coef: Vec<f64>,
    dim: usize,
}

impl<'a> PrimalObjective<'a> {
    pub fn new(model: &MarketModel, utility: &'a UtilityField) -> Self {
        let layout = Layout::new(model);
        let coef = layout.clock.iter().map(|&n| model.node(n).prob * model.node(n).dkappa).collect();
        Self { utility, dim: layout.dim(), clock: layout.clock, coef }
    }
}

impl Objective for PrimalObjective<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for (k, &n) in self.clock.iter().enumerate() {
            if x[k] <= 0.0 {
                let u0 = self.utility.evaluate(n, 0.0);
                if !u0.is_finite() || x[k] < 0.0 {
                    return f64::INFINITY;
                }
            }
            total -= self.coef[k] * self.utility.evaluate(n, x[k]);
        }
        total
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dim);
        for (k, &n) in self.clock.iter().enumerate() {
            g[k] = -self.coef[k] * self.utility.marginal(n, x[k]);
        }
        g
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let mut h = DMatrix::zeros(self.dim, self.dim);
        for (k, &n) in self.clock.iter().enumerate() {
            h[(k, k)] = -self.coef[k] * self.utility.second_derivative(n, x[k]);
        }
        h
    }
}

fn check_plan(model: &MarketModel, c: &[f64]) -> Result<()> {
    if c.len() != model.len() {
        return Err(Error::Dimension(format!("plan has {} entries, tree has {} nodes", c.len(), model.len())));
    }
    if c.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::InvalidArgument("consumption must be finite and nonnegative".into()));
    }
    Ok(())
}

fn check_capital(x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("initial capital must be positive, got {x}")))
    }
}

/// `max_H min_n post(n)`: the largest uniform wealth floor reachable while
/// financing `c` from `x`. Equals `x` minus the superhedging price of `c`.
pub fn superhedging_surplus(model: &MarketModel, c: &ConsumptionPlan, x: f64) -> Result<f64> {
    check_plan(model, c.values())?;
    let layout = Layout::new(model);
    let rows = layout.wealth_rows(model);
    let nc = layout.clock.len();
    let mut lp = LpBuilder::new(Sense::Maximize);
    let h_vars: Vec<usize> = (nc..layout.dim()).map(|_| lp.add_free(0.0)).collect();
    let delta = lp.add_free(1.0);
    for n in 0..model.len() {
        // post(n) = x + sum_H rows * H - (consumption part), fixed plan moved to the rhs.
        let consumed: f64 = layout.clock.iter().enumerate().map(|(k, &node)| rows[(n, k)] * c.0[node]).sum();
        let mut terms: Vec<(usize, f64)> = h_vars
            .iter()
            .enumerate()
            .filter(|(j, _)| rows[(n, nc + j)] != 0.0)
            .map(|(j, &v)| (v, rows[(n, nc + j)]))
            .collect();
        terms.push((delta, -1.0));
        lp.add_ge(terms, -(x + consumed));
    }
    let sol = solve_lp(&lp.build(), 1e-9);
    match sol.status {
        SolveStatus::Optimal => Ok(sol.x[delta]),
        status => Err(Error::Solver { status, context: "admissibility LP".into() }),
    }
}

/// Whether some strategy finances `c` from `x` with nonnegative wealth.
pub fn is_admissible(model: &MarketModel, c: &ConsumptionPlan, x: f64) -> Result<bool> {
    check_capital(x)?;
    Ok(superhedging_surplus(model, c, x)? >= -ADMISSIBILITY_TOL * x.max(1.0))
}

/// `sup_z E[sum c z dkappa]` over the deflator polytope closure; `c` is
/// `x`-admissible iff this does not exceed `x`.
pub fn deflator_budget(model: &MarketModel, c: &ConsumptionPlan) -> Result<f64> {
    check_plan(model, c.values())?;
    require_nupbr(model)?;
    let objective: Vec<f64> =
        model.nodes().iter().zip(c.values()).map(|(node, ci)| node.prob * node.dkappa * ci).collect();
    Ok(maximize_linear(model, &objective)?.0)
}

pub(crate) fn check_tolerance(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")))
    }
}

pub fn solve_primal(model: &MarketModel, utility: &UtilityField, x: f64, tol: f64) -> Result<PrimalSolution> {
    solve_primal_from(model, utility, x, tol, 0.5)
}

/// As [`solve_primal`], starting from the plan that spends the fraction
/// `start_fraction` of `x` along the busiest clock path with no trading.
pub fn solve_primal_from(
    model: &MarketModel,
    utility: &UtilityField,
    x: f64,
    tol: f64,
    start_fraction: f64,
) -> Result<PrimalSolution> {
    check_capital(x)?;
    check_tolerance(tol)?;
    if !(start_fraction > 0.0 && start_fraction < 1.0) {
        return Err(Error::InvalidArgument("start fraction must lie in (0, 1)".into()));
    }
    if utility.weights().len() != model.len() {
        return Err(Error::Dimension("utility weights do not match the tree".into()));
    }
    require_nupbr(model)?;

    let layout = Layout::new(model);
    let objective = PrimalObjective::new(model, utility);
    let nc = layout.clock.len();
    let mut start = DVector::zeros(layout.dim());
    for k in 0..nc {
        start[k] = start_fraction * x / model.clock_bound();
    }
    if !objective.value(start.as_slice()).is_finite() {
        return Err(Error::NotFinite("expected utility is -inf at every feasible starting plan".into()));
    }

    let rows = layout.wealth_rows(model);
    let h = DVector::from_element(model.len(), -x);
    let c_idx: Vec<usize> = (0..nc).collect();
    let program =
        SmoothConvexProgram::new(&objective).with_inequalities(rows, h).with_orthant(&c_idx, 0.0).with_start(start);
    let sol = solve_convex(&program, tol);
    match sol.status {
        SolveStatus::Optimal => {}
        SolveStatus::Unbounded => return Err(Error::NotFinite("primal value is +inf".into())),
        status => return Err(Error::Solver { status, context: "primal barrier solve".into() }),
    }

    let mut plan = vec![0.0; model.len()];
    for (k, &n) in layout.clock.iter().enumerate() {
        plan[n] = sol.x[k];
    }
    let mut holdings = vec![vec![0.0; model.assets()]; model.len()];
    for (t, &n) in layout.traders.iter().enumerate() {
        let off = layout.h_offset(t);
        holdings[n] = (0..model.assets()).map(|a| sol.x[off + a]).collect();
    }
    let wealth = wealth_process(model, x, &holdings, &plan)?;
    let value = expected_utility(model, utility, &plan);
    Ok(PrimalSolution { x, value, plan: ConsumptionPlan(plan), holdings, wealth, status: sol.status, gap: sol.gap })
}
