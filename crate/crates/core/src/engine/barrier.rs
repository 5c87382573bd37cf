//! Log-barrier Newton method for
//!
//! ```text
//! minimize f(x)  s.t.  A x = b,  G x > h
//! ```
//!
//! with `f` smooth and convex. Equalities are eliminated once through an
//! orthonormal null-space basis; each centring step solves the reduced
//! Newton system by Cholesky. The barrier weight follows `mu <- mu / 10`
//! from `mu = 1`, and each centre is accepted once half the squared Newton
//! decrement drops below `mu`.

use nalgebra::{DMatrix, DVector};

use super::linalg::{affine_solution_set, solve_spd, AffineSubspace};
use super::lp::{solve_lp, LpBuilder, Sense, PHASE_ONE_THRESHOLD};
use super::SolveStatus;

/// Smooth convex objective. `value` returns `+inf` outside the domain.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> DVector<f64>;
    fn hessian(&self, x: &[f64]) -> DMatrix<f64>;
}

pub struct SmoothConvexProgram<'a> {
    pub objective: &'a dyn Objective,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
    /// Rows of `G` in the open barrier domain `G x > h`.
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub start: Option<DVector<f64>>,
}

impl<'a> SmoothConvexProgram<'a> {
    pub fn new(objective: &'a dyn Objective) -> Self {
        let n = objective.dim();
        Self {
            objective,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            start: None,
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.eq_matrix = a;
        self.eq_rhs = b;
        self
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.ineq_matrix = g;
        self.ineq_rhs = h;
        self
    }

    /// Adds `x_i > floor` for each listed index.
    pub fn with_orthant(mut self, indices: &[usize], floor: f64) -> Self {
        let n = self.objective.dim();
        let m0 = self.ineq_matrix.nrows();
        let mut g = DMatrix::zeros(m0 + indices.len(), n);
        g.rows_mut(0, m0).copy_from(&self.ineq_matrix);
        let mut h = DVector::zeros(m0 + indices.len());
        h.rows_mut(0, m0).copy_from(&self.ineq_rhs);
        for (k, &i) in indices.iter().enumerate() {
            g[(m0 + k, i)] = 1.0;
            h[m0 + k] = floor;
        }
        self.ineq_matrix = g;
        self.ineq_rhs = h;
        self
    }

    pub fn with_start(mut self, x0: DVector<f64>) -> Self {
        self.start = Some(x0);
        self
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOptions {
    pub initial_mu: f64,
    pub mu_factor: f64,
    pub max_newton_per_center: usize,
    pub max_outer: usize,
    /// Iterates beyond this norm (or objectives below its negative) signal
    /// an unbounded problem.
    pub blowup: f64,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self { initial_mu: 1.0, mu_factor: 0.1, max_newton_per_center: 200, max_outer: 80, blowup: 1e14 }
    }
}

#[derive(Debug, Clone)]
pub struct ConvexSolution {
    pub status: SolveStatus,
    pub value: f64,
    pub x: DVector<f64>,
    /// Barrier duality-gap bound `m * mu` at termination.
    pub gap: f64,
    /// Newton decrement of the last centring problem.
    pub decrement: f64,
    pub outer_iterations: usize,
    pub newton_iterations: usize,
}

impl ConvexSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

struct Reduced<'p, 'a> {
    program: &'p SmoothConvexProgram<'a>,
    space: AffineSubspace,
    g_red: DMatrix<f64>,
    h_red: DVector<f64>,
}

impl Reduced<'_, '_> {
    fn slack(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.g_red * theta - &self.h_red
    }

    fn x(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.space.point(theta)
    }

    /// `t f(x) - sum log s`, `+inf` outside the domain.
    fn phi(&self, theta: &DVector<f64>, t: f64) -> f64 {
        let s = self.slack(theta);
        if s.iter().any(|&v| v <= 0.0) {
            return f64::INFINITY;
        }
        let f = self.program.objective.value(self.x(theta).as_slice());
        if !f.is_finite() {
            return f64::INFINITY;
        }
        t * f - s.iter().map(|v| v.ln()).sum::<f64>()
    }

    fn newton_step(&self, theta: &DVector<f64>, t: f64) -> Option<(DVector<f64>, f64)> {
        let x = self.x(theta);
        let obj = self.program.objective;
        let n_basis = &self.space.basis;
        let s = self.slack(theta);
        let inv_s = s.map(|v| 1.0 / v);
        let mut grad = n_basis.transpose() * obj.gradient(x.as_slice()) * t;
        grad -= self.g_red.transpose() * &inv_s;
        let mut hess = n_basis.transpose() * obj.hessian(x.as_slice()) * n_basis * t;
        let mut scaled = self.g_red.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= inv_s[i];
        }
        hess += scaled.transpose() * &scaled;
        let step = solve_spd(&hess, &(-&grad))?;
        let dec2 = -grad.dot(&step);
        Some((step, dec2.max(0.0)))
    }
}

/// Solve a smooth convex program to barrier gap `tol`.
pub fn solve_convex(p: &SmoothConvexProgram, tol: f64) -> ConvexSolution {
    solve_convex_with(p, tol, &BarrierOptions::default())
}

pub fn solve_convex_with(p: &SmoothConvexProgram, tol: f64, opts: &BarrierOptions) -> ConvexSolution {
    let n = p.objective.dim();
    assert_eq!(p.eq_matrix.ncols(), n, "equality matrix width");
    assert_eq!(p.ineq_matrix.ncols(), n, "inequality matrix width");
    let fail = |status| ConvexSolution {
        status,
        value: f64::NAN,
        x: DVector::from_element(n, f64::NAN),
        gap: f64::NAN,
        decrement: f64::NAN,
        outer_iterations: 0,
        newton_iterations: 0,
    };

    let space = if p.eq_matrix.nrows() > 0 {
        affine_solution_set(&p.eq_matrix, &p.eq_rhs, 1e-12)
    } else {
        AffineSubspace { particular: DVector::zeros(n), basis: DMatrix::identity(n, n), rank: 0, consistent: true }
    };
    if !space.consistent {
        return fail(SolveStatus::Infeasible);
    }
    let g_red = &p.ineq_matrix * &space.basis;
    let h_red = &p.ineq_rhs - &p.ineq_matrix * &space.particular;
    let red = Reduced { program: p, space, g_red, h_red };
    let m = red.g_red.nrows();
    let k = red.space.dimension();

    let theta0 = match &p.start {
        Some(x0) => {
            let theta = red.space.coordinates(x0);
            let back = red.x(&theta);
            let eq_scale = 1.0 + p.eq_rhs.amax();
            if (&back - x0).amax() > 1e-8 * (1.0 + x0.amax()) * eq_scale || red.slack(&theta).iter().any(|&v| v <= 0.0)
            {
                phase_one(&red)
            } else {
                Some(theta)
            }
        }
        None => phase_one(&red),
    };
    let Some(mut theta) = theta0 else {
        return fail(SolveStatus::Infeasible);
    };
    if !p.objective.value(red.x(&theta).as_slice()).is_finite() {
        return fail(SolveStatus::Infeasible);
    }

    let mut mu = if m == 0 { 0.0 } else { opts.initial_mu };
    let mut newton_total = 0;
    let mut outer = 0;
    let mut decrement = f64::INFINITY;
    loop {
        outer += 1;
        let t = if m == 0 { 1.0 } else { 1.0 / mu };
        let newton_tol = if m == 0 { tol.min(1e-14) } else { mu };
        for _ in 0..opts.max_newton_per_center {
            if k == 0 {
                decrement = 0.0;
                break;
            }
            let Some((step, dec2)) = red.newton_step(&theta, t) else {
                break;
            };
            decrement = dec2.sqrt();
            if dec2 / 2.0 <= newton_tol {
                break;
            }
            newton_total += 1;
            // Largest step keeping the slacks positive.
            let s = red.slack(&theta);
            let ds = &red.g_red * &step;
            let mut alpha: f64 = 1.0;
            for i in 0..m {
                if ds[i] < 0.0 {
                    alpha = alpha.min(-0.99 * s[i] / ds[i]);
                }
            }
            let phi0 = red.phi(&theta, t);
            let slope = -dec2;
            let mut accepted = false;
            while alpha > 1e-14 {
                let cand = &theta + &step * alpha;
                let phi1 = red.phi(&cand, t);
                let armijo = phi1 <= phi0 + 0.25 * alpha * slope;
                let roundoff = dec2 < 1e-6 && phi1 <= phi0 + 1e-12 * phi0.abs().max(1.0);
                if phi1.is_finite() && (armijo || roundoff) {
                    theta = cand;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                break;
            }
            if theta.amax() > opts.blowup {
                return ConvexSolution { status: SolveStatus::Unbounded, ..fail(SolveStatus::Unbounded) };
            }
        }
        let x = red.x(&theta);
        let f = p.objective.value(x.as_slice());
        if f < -opts.blowup {
            return ConvexSolution {
                status: SolveStatus::Unbounded,
                value: f64::NEG_INFINITY,
                ..fail(SolveStatus::Unbounded)
            };
        }
        let gap = m as f64 * mu;
        if gap <= tol || m == 0 {
            let status = if decrement.is_finite() { SolveStatus::Optimal } else { SolveStatus::IterationLimit };
            return ConvexSolution {
                status,
                value: f,
                x,
                gap,
                decrement,
                outer_iterations: outer,
                newton_iterations: newton_total,
            };
        }
        if outer >= opts.max_outer {
            return ConvexSolution {
                status: SolveStatus::IterationLimit,
                value: f,
                x,
                gap,
                decrement,
                outer_iterations: outer,
                newton_iterations: newton_total,
            };
        }
        mu *= opts.mu_factor;
    }
}

/// Phase I: maximise the smallest slack `s` (capped at 1) by LP; a strictly
/// feasible point exists iff the optimum exceeds the Phase-I threshold.
fn phase_one(red: &Reduced) -> Option<DVector<f64>> {
    let m = red.g_red.nrows();
    let k = red.space.dimension();
    if m == 0 {
        return Some(DVector::zeros(k));
    }
    let mut lp = LpBuilder::new(Sense::Maximize);
    let theta: Vec<usize> = (0..k).map(|_| lp.add_free(0.0)).collect();
    let s = lp.add_free(1.0);
    lp.add_le(vec![(s, 1.0)], 1.0);
    for i in 0..m {
        let mut terms: Vec<(usize, f64)> = theta.iter().enumerate().map(|(j, &v)| (v, red.g_red[(i, j)])).collect();
        terms.push((s, -1.0));
        lp.add_ge(terms, red.h_red[i]);
    }
    let sol = solve_lp(&lp.build(), 1e-9);
    if !sol.is_optimal() || sol.x[s] <= PHASE_ONE_THRESHOLD {
        return None;
    }
    Some(DVector::from_iterator(k, theta.iter().map(|&v| sol.x[v])))
}
