//! Dense two-phase primal simplex.
//!
//! Problems are stated as `opt c.x  s.t.  A x = b,  x >= lower` where a lower
//! bound of `-inf` marks a free variable. Phase I minimises the sum of
//! artificial variables and declares infeasibility above
//! [`PHASE_ONE_THRESHOLD`]. Pricing is Dantzig's rule, switching to Bland's
//! rule after a run of degenerate pivots.

use nalgebra::{DMatrix, DVector};

use super::SolveStatus;

/// Phase-I artificial mass above which a system is declared infeasible.
pub const PHASE_ONE_THRESHOLD: f64 = 1e-9;

const PIVOT_TOL: f64 = 1e-11;
/// Slack allowed on basic values by the ratio test.
const FEAS_TOL: f64 = 1e-11;
const DEGENERATE_STREAK: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: Vec<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: Vec<f64>,
    pub lower: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub status: SolveStatus,
    pub value: f64,
    pub x: Vec<f64>,
    /// Multipliers of the equality rows, in the sign convention of `sense`.
    pub duals: Vec<f64>,
    /// Max of primal residual, dual infeasibility and complementarity.
    pub kkt_residual: f64,
    pub iterations: usize,
}

impl LpSolution {
    fn failed(status: SolveStatus, n: usize, m: usize, iterations: usize) -> Self {
        let value = match status {
            SolveStatus::Unbounded => f64::INFINITY,
            _ => f64::NAN,
        };
        Self { status, value, x: vec![f64::NAN; n], duals: vec![0.0; m], kkt_residual: f64::NAN, iterations }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

/// Incremental construction of a [`LinearProgram`] with inequality rows
/// turned into equalities over nonnegative slacks.
#[derive(Debug, Clone)]
pub struct LpBuilder {
    sense: Sense,
    costs: Vec<f64>,
    lower: Vec<f64>,
    rows: Vec<(Vec<(usize, f64)>, f64)>,
}

impl LpBuilder {
    pub fn new(sense: Sense) -> Self {
        Self { sense, costs: Vec::new(), lower: Vec::new(), rows: Vec::new() }
    }

    pub fn add_var(&mut self, lower: f64, cost: f64) -> usize {
        self.costs.push(cost);
        self.lower.push(lower);
        self.costs.len() - 1
    }

    pub fn add_free(&mut self, cost: f64) -> usize {
        self.add_var(f64::NEG_INFINITY, cost)
    }

    pub fn num_vars(&self) -> usize {
        self.costs.len()
    }

    pub fn add_eq(&mut self, terms: Vec<(usize, f64)>, rhs: f64) {
        self.rows.push((terms, rhs));
    }

    /// `terms <= rhs`
    pub fn add_le(&mut self, mut terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        let s = self.add_var(0.0, 0.0);
        terms.push((s, 1.0));
        self.rows.push((terms, rhs));
        s
    }

    /// `terms >= rhs`
    pub fn add_ge(&mut self, mut terms: Vec<(usize, f64)>, rhs: f64) -> usize {
        let s = self.add_var(0.0, 0.0);
        terms.push((s, -1.0));
        self.rows.push((terms, rhs));
        s
    }

    pub fn build(self) -> LinearProgram {
        let n = self.costs.len();
        let m = self.rows.len();
        let mut a = DMatrix::zeros(m, n);
        let mut b = Vec::with_capacity(m);
        for (i, (terms, rhs)) in self.rows.into_iter().enumerate() {
            for (j, v) in terms {
                a[(i, j)] += v;
            }
            b.push(rhs);
        }
        LinearProgram { sense: self.sense, objective: self.costs, eq_matrix: a, eq_rhs: b, lower: self.lower }
    }
}

/// Column of the standard-form problem: `x_orig = offset + sign * x_std`.
#[derive(Debug, Clone, Copy)]
struct ColMap {
    var: usize,
    sign: f64,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.width]
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (v, pv) in self.obj.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs pivots over columns `< allowed`; returns Optimal, Unbounded or
    /// IterationLimit.
    fn optimize(&mut self, allowed: usize, max_iter: usize, iters: &mut usize) -> SolveStatus {
        let opt_tol = 1e-10 * self.obj[..allowed].iter().fold(1.0_f64, |a, v| a.max(v.abs()));
        let mut degenerate = 0usize;
        loop {
            if *iters >= max_iter {
                return SolveStatus::IterationLimit;
            }
            let bland = degenerate >= DEGENERATE_STREAK;
            let entering = if bland {
                (0..allowed).find(|&j| self.obj[j] < -opt_tol)
            } else {
                (0..allowed).filter(|&j| self.obj[j] < -opt_tol).min_by(|&a, &b| self.obj[a].total_cmp(&self.obj[b]))
            };
            let Some(e) = entering else {
                return SolveStatus::Optimal;
            };
            // Harris ratio test: relax the bound by a feasibility tolerance,
            // then take the largest pivot among rows inside it.
            let mut bound = f64::INFINITY;
            for i in 0..self.rows.len() {
                let a = self.rows[i][e];
                if a > PIVOT_TOL {
                    bound = bound.min((self.rhs(i).max(0.0) + FEAS_TOL) / a);
                }
            }
            let mut leave: Option<(usize, f64)> = None;
            let mut best_pivot = 0.0;
            for i in 0..self.rows.len() {
                let a = self.rows[i][e];
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    if ratio <= bound
                        && (a > best_pivot
                            || (a == best_pivot && leave.is_some_and(|(k, _)| self.basis[i] < self.basis[k])))
                    {
                        best_pivot = a;
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return SolveStatus::Unbounded;
            };
            degenerate = if ratio <= 1e-14 { degenerate + 1 } else { 0 };
            self.pivot(r, e);
            *iters += 1;
        }
    }
}

/// Solve a linear program; `tol` bounds the KKT residual accepted as optimal.
pub fn solve_lp(lp: &LinearProgram, tol: f64) -> LpSolution {
    let n = lp.objective.len();
    let m = lp.eq_rhs.len();
    assert_eq!(lp.eq_matrix.shape(), (m, n), "equality matrix shape");
    assert_eq!(lp.lower.len(), n, "lower bound length");

    let sign = if lp.sense == Sense::Maximize { -1.0 } else { 1.0 };
    let mut cols: Vec<ColMap> = Vec::new();
    for j in 0..n {
        cols.push(ColMap { var: j, sign: 1.0 });
        if lp.lower[j] == f64::NEG_INFINITY {
            cols.push(ColMap { var: j, sign: -1.0 });
        }
    }
    let ns = cols.len();
    let offset: Vec<f64> = lp.lower.iter().map(|&l| if l.is_finite() { l } else { 0.0 }).collect();

    let mut a_std = DMatrix::zeros(m, ns);
    let mut b_std = DVector::zeros(m);
    let mut c_std = vec![0.0; ns];
    let mut flipped = vec![false; m];
    for (k, col) in cols.iter().enumerate() {
        for i in 0..m {
            a_std[(i, k)] = col.sign * lp.eq_matrix[(i, col.var)];
        }
        c_std[k] = sign * col.sign * lp.objective[col.var];
    }
    for i in 0..m {
        let shift: f64 = (0..n).map(|j| lp.eq_matrix[(i, j)] * offset[j]).sum();
        b_std[i] = lp.eq_rhs[i] - shift;
        if b_std[i] < 0.0 {
            flipped[i] = true;
            b_std[i] = -b_std[i];
            for k in 0..ns {
                a_std[(i, k)] = -a_std[(i, k)];
            }
        }
    }

    // Phase I over [A | I | b].
    let width = ns + m;
    let mut tab = Tableau {
        rows: (0..m)
            .map(|i| {
                let mut row = vec![0.0; width + 1];
                for k in 0..ns {
                    row[k] = a_std[(i, k)];
                }
                row[ns + i] = 1.0;
                row[width] = b_std[i];
                row
            })
            .collect(),
        obj: vec![0.0; width + 1],
        basis: (ns..ns + m).collect(),
        width,
    };
    for row in &tab.rows {
        for (o, r) in tab.obj[..ns].iter_mut().zip(row) {
            *o -= r;
        }
        tab.obj[width] -= row[width];
    }
    let max_iter = 50 * (m + ns + 10);
    let mut iters = 0;
    let status = tab.optimize(width, max_iter, &mut iters);
    if status != SolveStatus::Optimal {
        // Phase I is bounded below by zero; anything else is numerical breakdown.
        return LpSolution::failed(SolveStatus::IterationLimit, n, m, iters);
    }
    let infeasibility: f64 = tab.basis.iter().enumerate().filter(|(_, &b)| b >= ns).map(|(i, _)| tab.rhs(i)).sum();
    let b_scale = b_std.amax().max(1.0);
    if infeasibility > PHASE_ONE_THRESHOLD * b_scale {
        return LpSolution::failed(SolveStatus::Infeasible, n, m, iters);
    }

    // Pivot artificials out of the basis; rows where that is impossible are redundant.
    let mut kept_rows: Vec<usize> = (0..m).collect();
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= ns {
            let col = (0..ns)
                .filter(|&k| tab.rows[i][k].abs() > 1e-9)
                .max_by(|&a, &b| tab.rows[i][a].abs().total_cmp(&tab.rows[i][b].abs()));
            match col {
                Some(k) => tab.pivot(i, k),
                None => {
                    // The row's own artificial is still basic, so that
                    // original constraint is the redundant one.
                    let redundant = tab.basis[i] - ns;
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                    kept_rows.retain(|&r| r != redundant);
                    continue;
                }
            }
        }
        i += 1;
    }

    // Phase II.
    tab.obj = vec![0.0; width + 1];
    tab.obj[..ns].copy_from_slice(&c_std);
    for (r, &bcol) in tab.basis.clone().iter().enumerate() {
        let cb = if bcol < ns { c_std[bcol] } else { 0.0 };
        if cb != 0.0 {
            for k in 0..=width {
                tab.obj[k] -= cb * tab.rows[r][k];
            }
        }
    }
    let status = tab.optimize(ns, max_iter, &mut iters);
    if status != SolveStatus::Optimal {
        return LpSolution::failed(status, n, m, iters);
    }

    // Recompute basic values and multipliers from the original data.
    let mr = tab.rows.len();
    let mut basis_mat = DMatrix::zeros(mr, mr);
    let mut b_kept = DVector::zeros(mr);
    let mut c_basis = DVector::zeros(mr);
    for (r, &row) in kept_rows.iter().enumerate() {
        b_kept[r] = b_std[row];
        for (k, &bcol) in tab.basis.iter().enumerate() {
            basis_mat[(r, k)] = a_std[(row, bcol)];
        }
    }
    for (k, &bcol) in tab.basis.iter().enumerate() {
        c_basis[k] = c_std[bcol];
    }
    let mut x_std = vec![0.0; ns];
    for (r, &bcol) in tab.basis.iter().enumerate() {
        x_std[bcol] = tab.rhs(r).max(0.0);
    }
    let lu = basis_mat.clone().lu();
    if let Some(xb) = lu.solve(&b_kept) {
        if xb.iter().all(|v| v.is_finite() && *v >= -1e-9) {
            for (k, &bcol) in tab.basis.iter().enumerate() {
                x_std[bcol] = xb[k].max(0.0);
            }
        }
    }
    let y_kept = basis_mat.transpose().lu().solve(&c_basis).unwrap_or_else(|| DVector::zeros(mr));
    let mut y_std = vec![0.0; m];
    for (r, &row) in kept_rows.iter().enumerate() {
        y_std[row] = y_kept[r];
    }

    // KKT residuals in standard form.
    let mut kkt: f64 = 0.0;
    for i in 0..m {
        let ax: f64 = (0..ns).map(|k| a_std[(i, k)] * x_std[k]).sum();
        kkt = kkt.max((ax - b_std[i]).abs() / b_scale);
    }
    let c_scale = c_std.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    for k in 0..ns {
        let reduced = c_std[k] - (0..m).map(|i| a_std[(i, k)] * y_std[i]).sum::<f64>();
        kkt = kkt.max((-reduced).max(0.0) / c_scale);
        kkt = kkt.max((reduced * x_std[k]).abs() / (c_scale * b_scale));
    }

    let mut x = offset.clone();
    for (k, col) in cols.iter().enumerate() {
        x[col.var] += col.sign * x_std[k];
    }
    let value: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m).map(|i| sign * if flipped[i] { -y_std[i] } else { y_std[i] }).collect();
    let status = if kkt <= tol.max(1e-12) * 1e3 { SolveStatus::Optimal } else { SolveStatus::IterationLimit };
    LpSolution { status, value, x, duals, kkt_residual: kkt, iterations: iters }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redundant_row_out_of_order() {
        // Row 2 is a multiple of row 3 up to roundoff; the first two rows pin
        // x0 = 1 and x1 + x2 = 1.
        let mut b = LpBuilder::new(Sense::Maximize);
        let x: Vec<usize> = (0..3).map(|_| b.add_var(0.0, 0.0)).collect();
        let e = b.add_var(0.0, 1.0);
        b.add_eq(vec![(x[0], 1.0)], 1.0);
        b.add_eq(vec![(x[0], -1.0), (x[1], 0.7327177087676302), (x[2], 0.2672822912323698)], 0.0);
        b.add_eq(vec![(x[1], 0.03683240745556624), (x[2], -0.028270632466127002)], 0.0);
        b.add_eq(vec![(x[1], -0.12902956807493976), (x[2], 0.09903635815036785)], 0.0);
        for &v in &x {
            b.add_ge(vec![(v, 1.0), (e, -1.0)], 0.0);
        }
        let sol = solve_lp(&b.build(), 1e-9);
        assert_eq!(sol.status, SolveStatus::Optimal, "kkt {}", sol.kkt_residual);
        let (z1, z2) = (sol.x[1], sol.x[2]);
        assert!((0.7327177087676302 * z1 + 0.2672822912323698 * z2 - 1.0).abs() < 1e-12);
        assert!((0.03683240745556624 * z1 - 0.028270632466127002 * z2).abs() < 1e-12);
        assert!((sol.value - z1.min(z2).min(1.0)).abs() < 1e-12);
    }

    #[test]
    fn max_eps_under_two_caps() {
        let mut b = LpBuilder::new(Sense::Maximize);
        let e = b.add_free(1.0);
        b.add_le(vec![(e, 1.0)], 1.0);
        b.add_le(vec![(e, 1.0)], 2.0);
        let sol = solve_lp(&b.build(), 1e-9);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!((sol.x[e] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_box() {
        let mut b = LpBuilder::new(Sense::Minimize);
        let x = b.add_var(1.0, 0.0);
        b.add_le(vec![(x, 1.0)], 0.0);
        assert_eq!(solve_lp(&b.build(), 1e-9).status, SolveStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray() {
        let mut b = LpBuilder::new(Sense::Maximize);
        let x = b.add_var(0.0, 1.0);
        let y = b.add_var(0.0, 0.0);
        b.add_eq(vec![(x, 1.0), (y, -1.0)], 0.0);
        assert_eq!(solve_lp(&b.build(), 1e-9).status, SolveStatus::Unbounded);
    }

    #[test]
    fn bin1_deflator_eps() {
        // z_root = 1, martingale and orthogonality at the root, z >= eps.
        let mut b = LpBuilder::new(Sense::Maximize);
        let z: Vec<usize> = (0..3).map(|_| b.add_var(0.0, 0.0)).collect();
        let eps = b.add_var(0.0, 1.0);
        b.add_eq(vec![(z[0], 1.0)], 1.0);
        b.add_eq(vec![(z[1], 0.5), (z[2], 0.5), (z[0], -1.0)], 0.0);
        b.add_eq(vec![(z[1], 0.5), (z[2], -0.25)], 0.0);
        for &zi in &z {
            b.add_ge(vec![(zi, 1.0), (eps, -1.0)], 0.0);
        }
        let sol = solve_lp(&b.build(), 1e-9);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 2.0 / 3.0).abs() < 1e-12);
        assert!((sol.x[z[2]] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_rows_and_duals() {
        // min x + 2y  s.t. x + y = 1 (twice), x, y >= 0  -> x = 1, dual 1.
        let mut b = LpBuilder::new(Sense::Minimize);
        let x = b.add_var(0.0, 1.0);
        let y = b.add_var(0.0, 2.0);
        b.add_eq(vec![(x, 1.0), (y, 1.0)], 1.0);
        b.add_eq(vec![(x, 2.0), (y, 2.0)], 2.0);
        let sol = solve_lp(&b.build(), 1e-9);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 1.0).abs() < 1e-12);
        assert!(sol.kkt_residual < 1e-9);
    }

    #[test]
    fn negative_rhs_and_free_variables() {
        // max -|t| style: min u s.t. u >= x - 3, u >= 3 - x, x = -2  -> u = 5
        let mut b = LpBuilder::new(Sense::Minimize);
        let x = b.add_free(0.0);
        let u = b.add_free(1.0);
        b.add_ge(vec![(u, 1.0), (x, -1.0)], -3.0);
        b.add_ge(vec![(u, 1.0), (x, 1.0)], 3.0);
        b.add_eq(vec![(x, 1.0)], -2.0);
        let sol = solve_lp(&b.build(), 1e-9);
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!((sol.value - 5.0).abs() < 1e-12);
    }
}
