//! End-to-end checks of the duality between the primal and dual value
//! functions: conjugacy on grids, the node-wise dual relations, the product
//! identity and the bipolar relations between admissible plans and dual
//! processes.
//!
//! `u'(x)` is always taken by central differences of the primal value so the
//! dual solver is checked against something it did not produce.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::deflator::{maximize_linear, require_nupbr, Deflator};
use crate::dual::{pairing, solve_dual, solve_dual_with_floor};
use crate::error::{Error, Result};
use crate::market::MarketModel;
use crate::preferences::UtilityField;
use crate::primal::{deflator_budget, is_admissible, solve_primal, ConsumptionPlan};

/// Barrier tolerance used by the lab when the caller does not pick one.
pub const SOLVER_TOL: f64 = 1e-11;
pub const CONJUGACY_TOL: f64 = 1e-4;
pub const RELATION_TOL: f64 = 1e-5;
/// Relative step of the central difference for `u'(x)`.
pub const FD_STEP: f64 = 1e-4;
pub const PAIRING_SLACK: f64 = 1e-7;
pub const SUP_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ConjugacyReport {
    pub x_grid: Vec<f64>,
    pub u: Vec<f64>,
    pub y_grid: Vec<f64>,
    pub v: Vec<f64>,
    /// `max_y |v(y) - max_x (u(x) - x y)|`
    pub primal_residual: f64,
    /// `max_x |u(x) - min_y (v(y) + x y)|`
    pub dual_residual: f64,
    /// `max_{x, y} (u(x) - x y - v(y))`; weak duality says this is <= 0.
    pub weak_duality_excess: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct DualityReport {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
    /// `|u(x) - v(y) - x y|` at the matched pair.
    pub conjugacy_residual: f64,
    pub c_hat: Vec<f64>,
    pub y_hat: Vec<Option<f64>>,
    /// `|Y - U'(c)| / (1 + |U'(c)|)` on clock nodes.
    pub node_residuals: Vec<Option<f64>>,
    pub max_node_residual: f64,
    pub product: f64,
    /// `|E[sum c Y dkappa] - x y| / (x y)`
    pub product_residual: f64,
    pub conjugacy_pass: bool,
    pub node_pass: bool,
    pub product_pass: bool,
}

impl DualityReport {
    pub fn pass(&self) -> bool {
        self.conjugacy_pass && self.node_pass && self.product_pass
    }
}

#[derive(Debug, Clone, Default)]
pub struct BipolarReport {
    pub pairs: usize,
    /// Largest `E[sum c Y dkappa]` over sampled `c in A(1)`, `Y in Y(1)`.
    pub max_pairing: f64,
    pub pairing_violations: usize,
    pub scaled_plans: usize,
    /// Plans pushed over budget by some `Y` that were still declared admissible.
    pub admissibility_violations: usize,
    pub sup_checks: usize,
    pub max_sup_gap: f64,
    pub pass: bool,
}

/// `u(x)` and the central difference `u'(x)` with step `FD_STEP * x`.
pub fn value_and_marginal(model: &MarketModel, utility: &UtilityField, x: f64, tol: f64) -> Result<(f64, f64)> {
    Ok((solve_primal(model, utility, x, tol)?.value, marginal(model, utility, x, tol)?))
}

fn marginal(model: &MarketModel, utility: &UtilityField, x: f64, tol: f64) -> Result<f64> {
    let h = FD_STEP * x;
    let up = solve_primal(model, utility, x + h, tol)?.value;
    let dn = solve_primal(model, utility, x - h, tol)?.value;
    Ok((up - dn) / (2.0 * h))
}

/// Conjugacy residuals from tabulated values of `u` and `v`.
pub fn conjugacy_residuals(x: &[f64], u: &[f64], y: &[f64], v: &[f64], tol: f64) -> ConjugacyReport {
    let sup_u = |yy: f64| x.iter().zip(u).map(|(xi, ui)| ui - xi * yy).fold(f64::NEG_INFINITY, f64::max);
    let inf_v = |xx: f64| y.iter().zip(v).map(|(yi, vi)| vi + xx * yi).fold(f64::INFINITY, f64::min);
    let primal_residual = y.iter().zip(v).map(|(yi, vi)| (vi - sup_u(*yi)).abs()).fold(0.0, f64::max);
    let dual_residual = x.iter().zip(u).map(|(xi, ui)| (ui - inf_v(*xi)).abs()).fold(0.0, f64::max);
    let weak_duality_excess = y.iter().zip(v).map(|(yi, vi)| sup_u(*yi) - vi).fold(f64::NEG_INFINITY, f64::max);
    let finite = primal_residual.is_finite() && dual_residual.is_finite();
    ConjugacyReport {
        x_grid: x.to_vec(),
        u: u.to_vec(),
        y_grid: y.to_vec(),
        v: v.to_vec(),
        primal_residual,
        dual_residual,
        weak_duality_excess,
        tol,
        pass: finite && primal_residual <= tol && dual_residual <= tol,
    }
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() || grid.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
        return Err(Error::InvalidArgument(format!("{name} grid must be nonempty and positive")));
    }
    Ok(())
}

/// Solves the primal on `x_grid` and the dual on `y_grid` and compares both
/// against the discrete Legendre transforms of each other.
pub fn verify_conjugacy(
    model: &MarketModel,
    utility: &UtilityField,
    x_grid: &[f64],
    y_grid: &[f64],
    tol: f64,
) -> Result<ConjugacyReport> {
    check_grid("x", x_grid)?;
    check_grid("y", y_grid)?;
    require_nupbr(model)?;
    let u: Vec<f64> = x_grid
        .par_iter()
        .map(|&x| solve_primal(model, utility, x, SOLVER_TOL).map(|s| s.value))
        .collect::<Result<_>>()?;
    let v: Vec<f64> = y_grid
        .par_iter()
        .map(|&y| solve_dual(model, utility, y, SOLVER_TOL).map(|s| s.value))
        .collect::<Result<_>>()?;
    Ok(conjugacy_residuals(x_grid, &u, y_grid, &v, tol))
}

/// As [`verify_conjugacy`] with `y_k = u'(x_k)`, so every grid point of one
/// axis has its maximiser on the other.
pub fn verify_conjugacy_paired(
    model: &MarketModel,
    utility: &UtilityField,
    x_grid: &[f64],
    tol: f64,
) -> Result<ConjugacyReport> {
    check_grid("x", x_grid)?;
    require_nupbr(model)?;
    let uy: Vec<(f64, f64)> =
        x_grid.par_iter().map(|&x| value_and_marginal(model, utility, x, SOLVER_TOL)).collect::<Result<_>>()?;
    let u: Vec<f64> = uy.iter().map(|p| p.0).collect();
    let y: Vec<f64> = uy.iter().map(|p| p.1).collect();
    let v: Vec<f64> =
        y.par_iter().map(|&y| solve_dual(model, utility, y, SOLVER_TOL).map(|s| s.value)).collect::<Result<_>>()?;
    Ok(conjugacy_residuals(x_grid, &u, &y, &v, tol))
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let ratio = hi / lo;
    let mut g: Vec<f64> = (0..n).map(|k| lo * ratio.powf(k as f64 / (n - 1) as f64)).collect();
    g[n - 1] = hi;
    g
}

pub fn verify_dual_relations(model: &MarketModel, utility: &UtilityField, x: f64, tol: f64) -> Result<DualityReport> {
    if !(x.is_finite() && x > 0.0) {
        return Err(Error::InvalidArgument(format!("initial capital must be positive, got {x}")));
    }
    let primal = solve_primal(model, utility, x, tol)?;
    let u = primal.value;
    let y = marginal(model, utility, x, tol)?;
    if !(y.is_finite() && y > 0.0) {
        return Err(Error::NotFinite(format!("u'({x}) estimated as {y}")));
    }
    let dual = solve_dual(model, utility, y, tol)?;
    let c_hat = primal.plan.0;

    let mut node_residuals = vec![None; model.len()];
    let mut max_node_residual: f64 = 0.0;
    let mut yproc = vec![0.0; model.len()];
    for n in model.clock_nodes() {
        let yn = dual.yhat[n].expect("clock node carries a dual value");
        yproc[n] = yn;
        let mu = utility.marginal(n, c_hat[n]);
        let r = (yn - mu).abs() / (1.0 + mu.abs());
        node_residuals[n] = Some(r);
        max_node_residual = max_node_residual.max(if r.is_nan() { f64::INFINITY } else { r });
    }
    let product = pairing(model, &c_hat, &yproc);
    let product_residual = (product - x * y).abs() / (x * y);
    let conjugacy_residual = (u - dual.value - x * y).abs();
    Ok(DualityReport {
        x,
        y,
        u,
        v: dual.value,
        conjugacy_residual,
        c_hat,
        y_hat: dual.yhat,
        node_residuals,
        max_node_residual,
        product,
        product_residual,
        conjugacy_pass: conjugacy_residual <= CONJUGACY_TOL,
        node_pass: max_node_residual <= RELATION_TOL,
        product_pass: product_residual <= RELATION_TOL,
    })
}

/// `|v(y) - v_floor(y)|`: the effect of forcing every deflator value above
/// `floor`.
pub fn strict_positivity_shift(
    model: &MarketModel,
    utility: &UtilityField,
    y: f64,
    floor: f64,
    tol: f64,
) -> Result<f64> {
    let closed = solve_dual(model, utility, y, tol)?;
    let strict = solve_dual_with_floor(model, utility, y, floor, tol)?;
    Ok((closed.value - strict.value).abs())
}

/// A plan in `A(x)`, built by running a random self-financing strategy that
/// never lets wealth go negative and consuming a random share at each node.
pub fn sample_admissible_plan<R: Rng + ?Sized>(rng: &mut R, model: &MarketModel, x: f64) -> ConsumptionPlan {
    let d = model.assets();
    let mut pre = vec![0.0; model.len()];
    let mut plan = vec![0.0; model.len()];
    pre[0] = x;
    for n in 0..model.len() {
        let node = model.node(n);
        let mut post = pre[n];
        if node.dkappa > 0.0 {
            let share = rng.gen_range(0.0..1.0);
            plan[n] = share * pre[n] / node.dkappa;
            post = pre[n] - plan[n] * node.dkappa;
        }
        let kids = model.children(n);
        if kids.is_empty() {
            continue;
        }
        // Random direction; scale so post + H.dS >= 0 on every child.
        let dir: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut t_max = f64::INFINITY;
        for &m in kids {
            let gain: f64 = model.increment_into(m).iter().zip(&dir).map(|(a, b)| a * b).sum();
            if gain < 0.0 {
                t_max = t_max.min(post / -gain);
            }
        }
        let t = if t_max.is_finite() { rng.gen_range(0.0..1.0) * t_max } else { rng.gen_range(0.0..1.0) * post };
        for &m in kids {
            let gain: f64 = model.increment_into(m).iter().zip(&dir).map(|(a, b)| a * b).sum();
            pre[m] = (post + t * gain).max(0.0);
        }
    }
    ConsumptionPlan(plan)
}

/// An element of `Y(1)`: a random convex combination of polytope vertices,
/// shrunk componentwise.
pub fn sample_dual_process<R: Rng + ?Sized>(rng: &mut R, model: &MarketModel, vertices: &[Deflator]) -> Vec<f64> {
    let k = rng.gen_range(1..=vertices.len());
    let mut weights: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = weights.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    weights.iter_mut().for_each(|w| *w /= total);
    let mut y = vec![0.0; model.len()];
    for (w, idx) in weights.iter().zip((0..k).map(|_| rng.gen_range(0..vertices.len()))) {
        for (yn, zn) in y.iter_mut().zip(vertices[idx].values()) {
            *yn += w * zn;
        }
    }
    for yn in y.iter_mut() {
        *yn *= rng.gen_range(0.0..=1.0);
    }
    y
}

/// Polytope vertices reached by maximising random linear objectives.
pub fn random_vertices<R: Rng + ?Sized>(rng: &mut R, model: &MarketModel, count: usize) -> Result<Vec<Deflator>> {
    (0..count)
        .map(|_| {
            let obj: Vec<f64> = (0..model.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            maximize_linear(model, &obj).map(|(_, z)| z)
        })
        .collect()
}

/// Sampled check of the bipolar relations at unit capital:
/// (a) `E[sum c Y dkappa] <= 1` for admissible `c` and dual `Y`;
/// (b) a plan scaled past budget against some `Y` is not admissible;
/// (c) for fixed `c`, the sup over deflators matches the sup over sampled
/// dual processes (which include the maximising vertex).
pub fn verify_bipolar(model: &MarketModel, samples: usize, seed: u64) -> Result<BipolarReport> {
    require_nupbr(model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vertices = random_vertices(&mut rng, model, 8)?;
    let mut rep = BipolarReport::default();
    for _ in 0..samples {
        let c = sample_admissible_plan(&mut rng, model, 1.0);
        let y = sample_dual_process(&mut rng, model, &vertices);
        let pair = pairing(model, c.values(), &y);
        rep.pairs += 1;
        rep.max_pairing = rep.max_pairing.max(pair);
        if pair > 1.0 + PAIRING_SLACK {
            rep.pairing_violations += 1;
        }

        if pair > 1e-6 {
            let k = rng.gen_range(1.01..2.0) / pair;
            rep.scaled_plans += 1;
            if is_admissible(model, &c.scaled(k), 1.0)? {
                rep.admissibility_violations += 1;
            }
        }

        let budget = deflator_budget(model, &c)?;
        let obj: Vec<f64> =
            model.nodes().iter().zip(c.values()).map(|(node, ci)| node.prob * node.dkappa * ci).collect();
        let (_, best) = maximize_linear(model, &obj)?;
        let mut sampled_sup = pairing(model, c.values(), best.values());
        for _ in 0..4 {
            let extra = sample_dual_process(&mut rng, model, &vertices);
            sampled_sup = sampled_sup.max(pairing(model, c.values(), &extra));
        }
        rep.sup_checks += 1;
        rep.max_sup_gap = rep.max_sup_gap.max((sampled_sup - budget).abs());
    }
    rep.pass = rep.pairing_violations == 0 && rep.admissibility_violations == 0 && rep.max_sup_gap <= SUP_TOL;
    Ok(rep)
}

/// `I(n, Y_n(y))` must strictly decrease in `y` at every clock node.
pub fn consumption_decreases_in_y(
    model: &MarketModel,
    utility: &UtilityField,
    y_grid: &[f64],
    tol: f64,
) -> Result<bool> {
    check_grid("y", y_grid)?;
    let implied: Vec<Vec<f64>> = y_grid
        .par_iter()
        .map(|&y| {
            solve_dual(model, utility, y, tol).map(|d| {
                model.clock_nodes().map(|n| utility.inverse_marginal(n, d.yhat[n].unwrap_or(f64::NAN))).collect()
            })
        })
        .collect::<Result<_>>()?;
    Ok(implied.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b < a)))
}

/// Largest node difference between the optimal plans under weights `w` and `factor * w`.
pub fn weight_scaling_shift(model: &MarketModel, utility: &UtilityField, factor: f64, x: f64, tol: f64) -> Result<f64> {
    let a = solve_primal(model, utility, x, tol)?;
    let b = solve_primal(model, &utility.scaled(factor)?, x, tol)?;
    Ok(a.plan.values().iter().zip(b.plan.values()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
}
