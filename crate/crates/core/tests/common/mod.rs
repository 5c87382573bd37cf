//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use duality_core::corpus;
use duality_core::market::MarketModel;
use duality_core::{UtilityField, UtilityKind};

pub const BIN1_U1: f64 = 0.058_891_517_828_191_13;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One-period arbitrage among the increments `incs` (at most two assets).
/// An arbitrage cone in the plane, if nonempty, contains one of the
/// increments or one of their normals, so checking those is exhaustive.
pub fn local_arbitrage(incs: &[Vec<f64>]) -> bool {
    let d = incs[0].len();
    assert!(d <= 2, "brute force handles one or two assets");
    let mut candidates = Vec::new();
    for a in incs {
        candidates.push(a.clone());
        candidates.push(a.iter().map(|v| -v).collect());
        if d == 2 {
            candidates.push(vec![-a[1], a[0]]);
            candidates.push(vec![a[1], -a[0]]);
        }
    }
    candidates.iter().any(|h| {
        let gains: Vec<f64> = incs.iter().map(|a| dot(a, h)).collect();
        gains.iter().all(|&g| g >= -1e-12) && gains.iter().any(|&g| g > 1e-12)
    })
}

/// Arbitrage anywhere in the tree, node by node.
pub fn tree_has_arbitrage(model: &MarketModel) -> bool {
    model.non_terminal().any(|n| {
        let incs: Vec<Vec<f64>> = model.children(n).iter().map(|&m| model.increment_into(m)).collect();
        local_arbitrage(&incs)
    })
}

/// Golden-section minimum of `f` on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let a = hi - g * (hi - lo);
        let b = lo + g * (hi - lo);
        if f(a) < f(b) {
            hi = b;
        } else {
            lo = a;
        }
    }
    f(0.5 * (lo + hi))
}

/// Dual value on the trinomial fixture by search over the deflators `(1, a, 2 - a, a)`.
pub fn trinomial_dual_oracle(u: &UtilityField, y: f64) -> f64 {
    let v = u.conjugate_field();
    golden_min(
        |a| 0.25 * v.evaluate(1, y * a) + 0.5 * v.evaluate(2, y * (2.0 - a)) + 0.25 * v.evaluate(3, y * a),
        0.0,
        2.0,
    )
}

/// Fixtures with a utility each, covering complete, incomplete, multi-period,
/// weighted and boundary cases.
pub fn corpus_cases() -> Vec<(&'static str, MarketModel, UtilityField)> {
    let mut w = vec![1.0; 7];
    w[3..].iter_mut().for_each(|v| *v = 0.8);
    vec![
        ("bin1/log", corpus::bin1(), UtilityField::log(3)),
        ("bin1/power(-1)", corpus::bin1(), UtilityField::power(-1.0, 3).unwrap()),
        ("trinomial/power(0.5)", corpus::trinomial(), UtilityField::power(0.5, 4).unwrap()),
        ("trinomial/log", corpus::trinomial(), UtilityField::log(4)),
        (
            "two_period/power(-1) weighted",
            corpus::binomial_two_period(),
            UtilityField::new(UtilityKind::Power(-1.0), w).unwrap(),
        ),
        ("cons3/log", corpus::cons3(), UtilityField::log(28)),
        ("cons3/power(0.3)", corpus::cons3(), UtilityField::power(0.3, 28).unwrap()),
        ("dormant_leaf/log", corpus::dormant_leaf(), UtilityField::log(4)),
        ("two_asset/log", corpus::two_asset_with_cash_like(), UtilityField::log(3)),
        ("single_path/power(0.5)", corpus::single_path(), UtilityField::power(0.5, 2).unwrap()),
    ]
}
