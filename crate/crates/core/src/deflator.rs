//! Deflators on a finite tree.
//!
//! A deflator is a node process `z > 0` with `z(root) = 1` such that, at
//! every non-terminal node `n`,
//!
//! ```text
//! sum_m (p_m / p_n) z_m             = z_n     (martingale)
//! sum_m (p_m / p_n) z_m (S_m - S_n) = 0       (orthogonality, d rows)
//! ```
//!
//! so that `z X` is a martingale for every self-financing wealth process `X`.
//! Together with `z >= 0` these rows cut out a compact polytope whose
//! strictly positive points are the deflators; its boundary points belong to
//! the closure only. The bound `z_n <= 1 / p_n` follows from the martingale
//! rows and is kept for membership checks.

use nalgebra::{DMatrix, DVector};

use crate::engine::linalg::affine_solution_set;
use crate::engine::{solve_lp, LpBuilder, Sense, SolveStatus};
use crate::error::{Error, Result};
use crate::market::MarketModel;

/// Linear residual and positivity tolerance for membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// `eps_star` above this value certifies a strictly positive deflator.
pub const STRICTNESS_THRESHOLD: f64 = 1e-9;

const LP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Deflator(Vec<f64>);

impl Deflator {
    pub fn new(z: Vec<f64>) -> Self {
        Self(z)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Normalization,
    Martingale(usize),
    Orthogonality(usize, usize),
}

#[derive(Debug, Clone)]
pub struct DeflatorPolytope {
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    pub row_kinds: Vec<RowKind>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    /// Strictly positive point of the polytope: a deflator.
    Interior,
    /// In the closure but touching `z = 0` somewhere.
    Boundary,
    Outside,
}

#[derive(Debug, Clone)]
pub struct NupbrReport {
    pub holds: bool,
    /// `max min_n z(n)` over the polytope closure (0 when it is empty).
    pub eps_star: f64,
    pub witness: Option<Deflator>,
}

impl DeflatorPolytope {
    pub fn num_nodes(&self) -> usize {
        self.eq_matrix.ncols()
    }

    /// Dimension of the affine hull `{z : A z = b}`.
    pub fn dimension(&self) -> usize {
        affine_solution_set(&self.eq_matrix, &self.eq_rhs, 1e-12).dimension()
    }

    pub fn residual(&self, z: &[f64]) -> f64 {
        let zv = DVector::from_column_slice(z);
        (&self.eq_matrix * zv - &self.eq_rhs).amax()
    }

    pub fn classify(&self, z: &[f64]) -> Membership {
        if z.len() != self.num_nodes()
            || z.iter().any(|v| !v.is_finite())
            || self.residual(z) > MEMBERSHIP_TOL
            || z.iter().zip(&self.upper).any(|(v, u)| *v < -MEMBERSHIP_TOL || *v > u + MEMBERSHIP_TOL)
        {
            return Membership::Outside;
        }
        if z.iter().all(|&v| v > 0.0) {
            Membership::Interior
        } else {
            Membership::Boundary
        }
    }

    /// LP skeleton over the closure: variables `z >= 0` (indices `0..n`) and
    /// the equality rows.
    pub fn lp(&self, sense: Sense) -> LpBuilder {
        let n = self.num_nodes();
        let mut lp = LpBuilder::new(sense);
        for _ in 0..n {
            lp.add_var(0.0, 0.0);
        }
        for i in 0..self.eq_matrix.nrows() {
            let terms =
                (0..n).filter(|&j| self.eq_matrix[(i, j)] != 0.0).map(|j| (j, self.eq_matrix[(i, j)])).collect();
            lp.add_eq(terms, self.eq_rhs[i]);
        }
        lp
    }
}

/// Normalisation row, then per non-terminal node one martingale row and
/// `d` orthogonality rows.
pub fn build_polytope(model: &MarketModel) -> DeflatorPolytope {
    let n = model.len();
    let d = model.assets();
    let internal: Vec<usize> = model.non_terminal().collect();
    let rows = 1 + internal.len() * (1 + d);
    let mut a = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    let mut kinds = Vec::with_capacity(rows);
    a[(0, 0)] = 1.0;
    b[0] = 1.0;
    kinds.push(RowKind::Normalization);
    let mut r = 1;
    for &k in &internal {
        let pk = model.node(k).prob;
        a[(r, k)] = -1.0;
        for &m in model.children(k) {
            a[(r, m)] = model.node(m).prob / pk;
        }
        kinds.push(RowKind::Martingale(k));
        r += 1;
        for asset in 0..d {
            for &m in model.children(k) {
                let ds = model.node(m).prices[asset] - model.node(k).prices[asset];
                a[(r, m)] = model.node(m).prob / pk * ds;
            }
            kinds.push(RowKind::Orthogonality(k, asset));
            r += 1;
        }
    }
    let upper = model.nodes().iter().map(|node| 1.0 / node.prob).collect();
    DeflatorPolytope { eq_matrix: a, eq_rhs: b, row_kinds: kinds, upper }
}

/// Decide NUPBR by maximising the smallest node value over the polytope.
pub fn check_nupbr(model: &MarketModel) -> Result<NupbrReport> {
    let poly = build_polytope(model);
    let n = poly.num_nodes();
    let mut lp = poly.lp(Sense::Maximize);
    let eps = lp.add_var(0.0, 1.0);
    for j in 0..n {
        lp.add_ge(vec![(j, 1.0), (eps, -1.0)], 0.0);
    }
    let sol = solve_lp(&lp.build(), LP_TOL);
    match sol.status {
        SolveStatus::Optimal => {
            let eps_star = sol.x[eps];
            let holds = eps_star > STRICTNESS_THRESHOLD;
            let witness = holds.then(|| Deflator(sol.x[..n].to_vec()));
            Ok(NupbrReport { holds, eps_star, witness })
        }
        SolveStatus::Infeasible => Ok(NupbrReport { holds: false, eps_star: 0.0, witness: None }),
        status => Err(Error::Solver { status, context: "deflator strict-feasibility LP".into() }),
    }
}

pub fn require_nupbr(model: &MarketModel) -> Result<NupbrReport> {
    let report = check_nupbr(model)?;
    if report.holds {
        Ok(report)
    } else {
        Err(Error::NupbrFails { eps_star: report.eps_star })
    }
}

pub fn is_deflator(model: &MarketModel, z: &[f64]) -> bool {
    build_polytope(model).classify(z) == Membership::Interior
}

/// Maximise `objective . z` over the polytope closure.
pub fn maximize_linear(model: &MarketModel, objective: &[f64]) -> Result<(f64, Deflator)> {
    let poly = build_polytope(model);
    let n = poly.num_nodes();
    if objective.len() != n {
        return Err(Error::Dimension(format!("objective has {} entries, tree has {n} nodes", objective.len())));
    }
    let mut built = poly.lp(Sense::Maximize).build();
    built.objective[..n].copy_from_slice(objective);
    let sol = solve_lp(&built, LP_TOL);
    match sol.status {
        SolveStatus::Optimal => Ok((sol.value, Deflator(sol.x[..n].to_vec()))),
        SolveStatus::Infeasible => Err(Error::NupbrFails { eps_star: 0.0 }),
        status => Err(Error::Solver { status, context: "linear functional over the deflator polytope".into() }),
    }
}

pub fn convex_combine(model: &MarketModel, deflators: &[Deflator], weights: &[f64]) -> Result<Deflator> {
    if deflators.is_empty() || deflators.len() != weights.len() {
        return Err(Error::InvalidArgument(format!("{} deflators with {} weights", deflators.len(), weights.len())));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
    }
    let poly = build_polytope(model);
    for (k, z) in deflators.iter().enumerate() {
        if poly.classify(z.values()) != Membership::Interior {
            return Err(Error::NotADeflator(format!("input {k}")));
        }
    }
    let n = model.len();
    let mut out = vec![0.0; n];
    for (z, &w) in deflators.iter().zip(weights) {
        for (o, v) in out.iter_mut().zip(z.values()) {
            *o += w * v;
        }
    }
    Ok(Deflator(out))
}
