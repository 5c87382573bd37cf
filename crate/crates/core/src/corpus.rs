//! Reference trees used by the tests, the acceptance suite and the CLI
//! demos, plus a random tree generator.

use rand::Rng;

use crate::market::{MarketModel, NodeSpec};

fn node(id: i64, parent: Option<i64>, prob: f64, prices: Vec<f64>, dkappa: f64) -> NodeSpec {
    NodeSpec { id, parent, prob, prices, dkappa }
}

fn one_period(s0: f64, leaves: &[(f64, f64)]) -> MarketModel {
    let mut nodes = vec![node(0, None, 1.0, vec![s0], 0.0)];
    for (k, &(p, s)) in leaves.iter().enumerate() {
        nodes.push(node(k as i64 + 1, Some(0), p, vec![s], 1.0));
    }
    MarketModel::new(1, 1.0, nodes).expect("valid one-period tree")
}

/// One-period binomial: `S_0 = 1`, up to 2 or down to 0.5 with probability
/// 1/2 each, unit clock mass at the leaves.
pub fn bin1() -> MarketModel {
    one_period(1.0, &[(0.5, 2.0), (0.5, 0.5)])
}

/// One-period market with a free lottery ticket: `S` moves 1 -> 2 or stays at 1.
pub fn arb1() -> MarketModel {
    one_period(1.0, &[(0.5, 2.0), (0.5, 1.0)])
}

/// Binomial shape with a price that never moves.
pub fn constant_prices() -> MarketModel {
    one_period(1.0, &[(0.5, 1.0), (0.5, 1.0)])
}

/// Incomplete one-period trinomial: 1 -> {1.5, 1, 0.5} with probabilities
/// 1/4, 1/2, 1/4. The deflators are `(1, a, 2 - a, a)` for `a` in `[0, 2]`.
pub fn trinomial() -> MarketModel {
    one_period(1.0, &[(0.25, 1.5), (0.5, 1.0), (0.25, 0.5)])
}

/// Trinomial where the flat middle leaf carries no clock mass. The optimal
/// dual puts zero weight there, so the dual optimum sits on the boundary of
/// the deflator polytope. For log utility `u(x) = ln(x) / 2`.
pub fn dormant_leaf() -> MarketModel {
    MarketModel::new(
        1,
        1.0,
        vec![
            node(0, None, 1.0, vec![1.0], 0.0),
            node(1, Some(0), 0.25, vec![1.5], 1.0),
            node(2, Some(0), 0.5, vec![1.0], 0.0),
            node(3, Some(0), 0.25, vec![0.5], 1.0),
        ],
    )
    .expect("valid trinomial")
}

/// BIN1 with a second asset that stays at 1.
pub fn two_asset_with_cash_like() -> MarketModel {
    MarketModel::new(
        2,
        1.0,
        vec![
            node(0, None, 1.0, vec![1.0, 1.0], 0.0),
            node(1, Some(0), 0.5, vec![2.0, 1.0], 1.0),
            node(2, Some(0), 0.5, vec![0.5, 1.0], 1.0),
        ],
    )
    .expect("valid two-asset tree")
}

/// Two-period binomial (up x2, down x0.5, probability 1/2) with clock
/// increments 0.5 at both stages.
pub fn binomial_two_period() -> MarketModel {
    let mut nodes = vec![node(0, None, 1.0, vec![1.0], 0.0)];
    let mut next = 1;
    let mut frontier = vec![(0i64, 1.0f64, 1.0f64)];
    for _stage in 0..2 {
        let mut new_frontier = Vec::new();
        for &(id, prob, s) in &frontier {
            for f in [2.0, 0.5] {
                nodes.push(node(next, Some(id), prob * 0.5, vec![s * f], 0.5));
                new_frontier.push((next, prob * 0.5, s * f));
                next += 1;
            }
        }
        frontier = new_frontier;
    }
    MarketModel::new(1, 1.0, nodes).expect("valid two-period tree")
}

/// Three trading stages with consumption at every node (clock increment
/// 0.25, root included). The root and stage-2 nodes branch three ways, so
/// the market is incomplete.
pub fn cons3() -> MarketModel {
    let tri = [(0.3, 1.2), (0.4, 1.0), (0.3, 0.85)];
    let bi = [(0.5, 1.1), (0.5, 0.9)];
    let mut nodes = vec![node(0, None, 1.0, vec![1.0], 0.25)];
    let mut next = 1;
    let mut frontier = vec![(0i64, 1.0f64, 1.0f64)];
    for stage in 0..3 {
        let branches: &[(f64, f64)] = if stage == 1 { &bi } else { &tri };
        let mut new_frontier = Vec::new();
        for &(id, prob, s) in &frontier {
            for &(q, f) in branches {
                nodes.push(node(next, Some(id), prob * q, vec![s * f], 0.25));
                new_frontier.push((next, prob * q, s * f));
                next += 1;
            }
        }
        frontier = new_frontier;
    }
    MarketModel::new(1, 1.0, nodes).expect("valid three-stage tree")
}

/// Deterministic path: the root trades nothing and one child consumes with
/// unit clock mass.
pub fn single_path() -> MarketModel {
    MarketModel::new(1, 1.0, vec![node(0, None, 1.0, vec![1.0], 0.0), node(1, Some(0), 1.0, vec![1.0], 1.0)])
        .expect("valid path")
}

#[derive(Debug, Clone, Copy)]
pub struct RandomTreeConfig {
    pub max_stages: usize,
    pub max_branches: usize,
    pub assets: usize,
    /// Centre every node's increments under a random positive measure, which
    /// rules out arbitrage.
    pub arbitrage_free: bool,
}

/// Random tree with 1..=max_stages stages and 1..=max_branches children per
/// node. Without `arbitrage_free`, increments come from a coarse grid so
/// that degenerate and arbitrage configurations occur often.
pub fn random_tree<R: Rng + ?Sized>(rng: &mut R, cfg: RandomTreeConfig) -> MarketModel {
    let stages = rng.gen_range(1..=cfg.max_stages);
    let d = cfg.assets;
    let clock_bound = 1.0;
    let per_node_clock = clock_bound / (stages as f64 + 1.0);

    let mut nodes = vec![node(0, None, 1.0, vec![1.0; d], per_node_clock * rng.gen_range(0..=1) as f64)];
    let mut frontier = vec![0usize];
    for stage in 0..stages {
        let mut new_frontier = Vec::new();
        for &parent in &frontier {
            let k = rng.gen_range(1..=cfg.max_branches);
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
            let total: f64 = raw.iter().sum();
            let cond: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let mut incs: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    (0..d)
                        .map(|_| {
                            if cfg.arbitrage_free {
                                rng.gen_range(-1.0..1.0)
                            } else {
                                0.5 * rng.gen_range(-2i32..=2) as f64
                            }
                        })
                        .collect()
                })
                .collect();
            if cfg.arbitrage_free {
                let q_raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..1.0)).collect();
                let qt: f64 = q_raw.iter().sum();
                for a in 0..d {
                    let mean: f64 = (0..k).map(|m| q_raw[m] / qt * incs[m][a]).sum();
                    for inc in incs.iter_mut() {
                        inc[a] -= mean;
                    }
                }
            }
            let last = stage + 1 == stages;
            for m in 0..k {
                let id = nodes.len();
                let prices: Vec<f64> = nodes[parent].prices.iter().zip(&incs[m]).map(|(s, dlt)| s + dlt).collect();
                let dkappa = if last { per_node_clock } else { per_node_clock * rng.gen_range(0..=1) as f64 };
                nodes.push(node(id as i64, Some(parent as i64), nodes[parent].prob * cond[m], prices, dkappa));
                new_frontier.push(id);
            }
        }
        frontier = new_frontier;
    }
    // Children probabilities were built from normalised conditionals; snap
    // the last child of each family so sums are exact.
    let mut kids: Vec<Vec<usize>> = vec![Vec::new(); nodes.len()];
    for (i, n) in nodes.iter().enumerate() {
        if let Some(p) = n.parent {
            kids[p as usize].push(i);
        }
    }
    for (p, ks) in kids.iter().enumerate() {
        if let Some((&last, rest)) = ks.split_last() {
            let others: f64 = rest.iter().map(|&k| nodes[k].prob).sum();
            nodes[last].prob = nodes[p].prob - others;
        }
    }
    MarketModel::new(d, clock_bound, nodes).expect("generator produces valid trees")
}
