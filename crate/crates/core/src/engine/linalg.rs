use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// Parametrisation `{x : A x = b} = {particular + basis * theta}` with an
/// orthonormal `basis`; dependent rows of `A` are dropped.
#[derive(Debug, Clone)]
pub struct AffineSubspace {
    pub particular: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub rank: usize,
    pub consistent: bool,
}

impl AffineSubspace {
    pub fn dimension(&self) -> usize {
        self.basis.ncols()
    }

    pub fn point(&self, theta: &DVector<f64>) -> DVector<f64> {
        &self.particular + &self.basis * theta
    }

    pub fn coordinates(&self, x: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * (x - &self.particular)
    }
}

/// Gauss-Jordan elimination with partial pivoting. Entries below
/// `tol * max(1, max|A|)` are treated as zero.
pub fn affine_solution_set(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> AffineSubspace {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let mut rhs = b.clone();
    let scale = a.amax().max(1.0);
    let eps = tol * scale;

    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, val) =
            (row..m)
                .map(|i| (i, r[(i, col)].abs()))
                .fold((row, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if val <= eps {
            for i in row..m {
                r[(i, col)] = 0.0;
            }
            continue;
        }
        r.swap_rows(row, best);
        rhs.swap_rows(row, best);
        let p = r[(row, col)];
        for j in 0..n {
            r[(row, j)] /= p;
        }
        rhs[row] /= p;
        for i in 0..m {
            if i != row {
                let f = r[(i, col)];
                if f != 0.0 {
                    for j in 0..n {
                        r[(i, j)] -= f * r[(row, j)];
                    }
                    rhs[i] -= f * rhs[row];
                }
            }
        }
        pivots.push(col);
        row += 1;
    }
    let rank = pivots.len();
    let rhs_scale = b.amax().max(1.0);
    let consistent = (rank..m).all(|i| rhs[i].abs() <= tol * rhs_scale * 10.0);

    let mut particular = DVector::zeros(n);
    for (i, &c) in pivots.iter().enumerate() {
        particular[c] = rhs[i];
    }
    let free: Vec<usize> = (0..n).filter(|j| !pivots.contains(j)).collect();
    let mut raw = DMatrix::zeros(n, free.len());
    for (k, &f) in free.iter().enumerate() {
        raw[(f, k)] = 1.0;
        for (i, &c) in pivots.iter().enumerate() {
            raw[(c, k)] = -r[(i, f)];
        }
    }
    let basis = if free.is_empty() { raw } else { raw.qr().q() };
    if !free.is_empty() {
        // Minimum-norm particular solution.
        let proj = &basis * (basis.transpose() * &particular);
        particular -= proj;
    }
    AffineSubspace { particular, basis, rank, consistent }
}

/// Solve `M d = rhs` for symmetric positive (semi)definite `M`, adding a
/// growing multiple of the identity when the factorisation fails.
pub fn solve_spd(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Some(DVector::zeros(0));
    }
    let diag_scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut shifted = m.clone();
        if shift > 0.0 {
            for i in 0..n {
                shifted[(i, i)] += shift;
            }
        }
        if let Some(chol) = Cholesky::<f64, Dyn>::new(shifted) {
            let sol = chol.solve(rhs);
            if sol.iter().all(|v| v.is_finite()) {
                return Some(sol);
            }
        }
        shift = if shift == 0.0 { diag_scale * 1e-14 } else { shift * 100.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_dependent_rows() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0, 0.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = affine_solution_set(&a, &b, 1e-12);
        assert!(s.consistent);
        assert_eq!(s.rank, 2);
        assert_eq!(s.dimension(), 1);
        for t in [-1.0, 0.0, 2.5] {
            let x = s.point(&DVector::from_vec(vec![t]));
            assert!((&a * &x - &b).amax() < 1e-12);
        }
    }

    #[test]
    fn detects_inconsistency() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        assert!(!affine_solution_set(&a, &b, 1e-12).consistent);
    }

    #[test]
    fn spd_solve_handles_singular_directions() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]);
        let d = solve_spd(&m, &DVector::from_vec(vec![4.0, 0.0])).unwrap();
        assert!((d[0] - 2.0).abs() < 1e-9);
        assert!(d[1].abs() < 1e-9);
    }
}
