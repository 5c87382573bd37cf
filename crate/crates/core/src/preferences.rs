//! Utility stochastic fields on the tree and their convex conjugates.
//!
//! A field is `U(n, x) = w(n) * u(x)` with `u` the log or power utility and
//! `w(n) > 0` a node weight. Values at the boundary follow the extended-real
//! conventions: `U(n, 0)` is the limit from the right and may be `-inf`, and
//! `V(n, 0) = sup_x U(n, x)` may be `+inf`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::MarketModel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UtilityKind {
    Log,
    /// `x^p / p` with `p < 1`, `p != 0`.
    Power(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityField {
    kind: UtilityKind,
    weights: Vec<f64>,
}

/// Conjugate field `V(n, y) = sup_{x > 0} (U(n, x) - x y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateField {
    field: UtilityField,
}

/// The `"utility"` object of a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
}

impl UtilityKind {
    pub fn validate(self) -> Result<Self> {
        match self {
            UtilityKind::Power(p) if !(p.is_finite() && p < 1.0 && p != 0.0) => {
                Err(Error::InvalidArgument(format!("power exponent must lie in (-inf, 0) U (0, 1), got {p}")))
            }
            k => Ok(k),
        }
    }
}

impl UtilityField {
    pub fn new(kind: UtilityKind, weights: Vec<f64>) -> Result<Self> {
        let kind = kind.validate()?;
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidArgument(format!("utility weights must be positive, got {w}")));
        }
        Ok(Self { kind, weights })
    }

    pub fn log(nodes: usize) -> Self {
        Self { kind: UtilityKind::Log, weights: vec![1.0; nodes] }
    }

    pub fn power(p: f64, nodes: usize) -> Result<Self> {
        Self::new(UtilityKind::Power(p), vec![1.0; nodes])
    }

    pub fn from_spec(spec: &UtilitySpec, model: &MarketModel) -> Result<Self> {
        let kind = match spec.kind.as_str() {
            "log" => UtilityKind::Log,
            "power" => UtilityKind::Power(spec.p.ok_or_else(|| Error::Schema("power utility requires \"p\"".into()))?),
            other => return Err(Error::Schema(format!("unknown utility kind {other:?}"))),
        };
        let mut weights = vec![1.0; model.len()];
        if let Some(map) = &spec.weights {
            for (key, &w) in map {
                let id: i64 =
                    key.parse().map_err(|_| Error::Schema(format!("utility weight key {key:?} is not a node id")))?;
                let n =
                    model.index_of(id).ok_or_else(|| Error::Schema(format!("utility weight for unknown node {id}")))?;
                weights[n] = w;
            }
        }
        Self::new(kind, weights)
    }

    pub fn to_spec(&self, model: &MarketModel) -> UtilitySpec {
        let (kind, p) = match self.kind {
            UtilityKind::Log => ("log", None),
            UtilityKind::Power(p) => ("power", Some(p)),
        };
        let weights = if self.weights.iter().all(|&w| w == 1.0) {
            None
        } else {
            Some(self.weights.iter().enumerate().map(|(n, &w)| (model.node(n).id.to_string(), w)).collect())
        };
        UtilitySpec { kind: kind.into(), p, weights }
    }

    pub fn kind(&self) -> UtilityKind {
        self.kind
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, node: usize) -> f64 {
        self.weights[node]
    }

    /// Same kind with every weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.kind, self.weights.iter().map(|w| w * factor).collect())
    }

    pub fn evaluate(&self, node: usize, x: f64) -> f64 {
        let w = self.weights[node];
        match self.kind {
            UtilityKind::Log => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    w * x.ln()
                }
            }
            UtilityKind::Power(p) => {
                if x <= 0.0 {
                    if p > 0.0 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                } else {
                    w * x.powf(p) / p
                }
            }
        }
    }

    pub fn marginal(&self, node: usize, x: f64) -> f64 {
        let w = self.weights[node];
        match self.kind {
            UtilityKind::Log => w / x,
            UtilityKind::Power(p) => w * x.powf(p - 1.0),
        }
    }

    pub fn second_derivative(&self, node: usize, x: f64) -> f64 {
        let w = self.weights[node];
        match self.kind {
            UtilityKind::Log => -w / (x * x),
            UtilityKind::Power(p) => w * (p - 1.0) * x.powf(p - 2.0),
        }
    }

    /// `I = (U')^{-1}`.
    pub fn inverse_marginal(&self, node: usize, y: f64) -> f64 {
        let w = self.weights[node];
        match self.kind {
            UtilityKind::Log => w / y,
            UtilityKind::Power(p) => (y / w).powf(1.0 / (p - 1.0)),
        }
    }

    pub fn conjugate_field(&self) -> ConjugateField {
        ConjugateField { field: self.clone() }
    }
}

impl ConjugateField {
    pub fn utility(&self) -> &UtilityField {
        &self.field
    }

    pub fn evaluate(&self, node: usize, y: f64) -> f64 {
        let w = self.field.weights[node];
        match self.field.kind {
            UtilityKind::Log => {
                if y <= 0.0 {
                    f64::INFINITY
                } else {
                    w * (-(y / w).ln() - 1.0)
                }
            }
            UtilityKind::Power(p) => {
                if y <= 0.0 {
                    if p > 0.0 {
                        f64::INFINITY
                    } else {
                        0.0
                    }
                } else {
                    w.powf(1.0 / (1.0 - p)) * ((1.0 - p) / p) * y.powf(p / (p - 1.0))
                }
            }
        }
    }

    /// `V'(n, y) = -I(n, y)`.
    pub fn derivative(&self, node: usize, y: f64) -> f64 {
        -self.field.inverse_marginal(node, y)
    }

    pub fn second_derivative(&self, node: usize, y: f64) -> f64 {
        let w = self.field.weights[node];
        match self.field.kind {
            UtilityKind::Log => w / (y * y),
            UtilityKind::Power(p) => self.field.inverse_marginal(node, y) / ((1.0 - p) * y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn field(kind: UtilityKind, w: f64) -> UtilityField {
        UtilityField::new(kind, vec![w]).unwrap()
    }

    #[test]
    fn evaluate_examples() {
        assert_eq!(field(UtilityKind::Log, 1.0).evaluate(0, 1.0), 0.0);
        assert!((field(UtilityKind::Power(0.5), 1.0).evaluate(0, 4.0) - 4.0).abs() < 1e-15);
        assert!((field(UtilityKind::Log, 2.0).evaluate(0, std::f64::consts::E) - 2.0).abs() < 1e-15);
        assert_eq!(field(UtilityKind::Log, 1.0).evaluate(0, 0.0), f64::NEG_INFINITY);
        assert_eq!(field(UtilityKind::Power(0.5), 1.0).evaluate(0, 0.0), 0.0);
        assert_eq!(field(UtilityKind::Power(-1.0), 1.0).evaluate(0, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn marginal_examples() {
        let log = field(UtilityKind::Log, 1.0);
        assert_eq!(log.marginal(0, 2.0), 0.5);
        assert_eq!(log.inverse_marginal(0, 0.5), 2.0);
        assert!((field(UtilityKind::Power(0.5), 1.0).marginal(0, 4.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn conjugate_examples() {
        assert!((field(UtilityKind::Log, 1.0).conjugate_field().evaluate(0, 1.0) + 1.0).abs() < 1e-15);
        assert!((field(UtilityKind::Power(0.5), 1.0).conjugate_field().evaluate(0, 1.0) - 1.0).abs() < 1e-15);
        assert_eq!(field(UtilityKind::Log, 1.0).conjugate_field().evaluate(0, 0.0), f64::INFINITY);
        assert_eq!(field(UtilityKind::Power(-2.0), 1.0).conjugate_field().evaluate(0, 0.0), 0.0);
    }

    #[test]
    fn inada_limits() {
        for kind in [UtilityKind::Log, UtilityKind::Power(0.3), UtilityKind::Power(-2.0)] {
            let u = field(kind, 1.0);
            assert!(u.marginal(0, 1e-8) > 1e4, "{kind:?}");
            assert!(u.marginal(0, 1e8) < 1e-4, "{kind:?}");
        }
        // Exponents near 1 move slowly; probe where x^(p-1) is 1e-5 and 1e5.
        for p in [0.5, 0.9, 0.99] {
            let u = field(UtilityKind::Power(p), 1.0);
            let far = 10f64.powf(5.0 / (1.0 - p));
            assert!(u.marginal(0, far) < 1e-4, "p = {p}");
            assert!(u.marginal(0, 1.0 / far) > 1e4, "p = {p}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(UtilityField::power(1.0, 1).is_err());
        assert!(UtilityField::power(0.0, 1).is_err());
        assert!(UtilityField::new(UtilityKind::Log, vec![0.0]).is_err());
    }

    fn kind_strategy() -> impl Strategy<Value = UtilityKind> {
        prop_oneof![
            Just(UtilityKind::Log),
            (0.05f64..0.95).prop_map(UtilityKind::Power),
            (-5.0f64..-0.05).prop_map(UtilityKind::Power),
        ]
    }

    /// Brute-force `sup_x U(x) - x y` on a log-spaced grid refined around the best point.
    /// The window must be wide: for p near 1 and small y the maximiser sits near `e^70`.
    fn grid_conjugate(u: &UtilityField, y: f64) -> f64 {
        let f = |lx: f64| u.evaluate(0, lx.exp()) - lx.exp() * y;
        let (mut lo, mut hi) = (-200.0_f64, 200.0_f64);
        for _ in 0..6 {
            let steps = 2000;
            let h = (hi - lo) / steps as f64;
            let best = (0..=steps).map(|i| lo + i as f64 * h).max_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap();
            lo = best - 2.0 * h;
            hi = best + 2.0 * h;
        }
        f(0.5 * (lo + hi))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn inverse_marginal_round_trip(kind in kind_strategy(), w in 0.1f64..10.0, x in 1e-3f64..1e3) {
            let u = field(kind, w);
            let back = u.inverse_marginal(0, u.marginal(0, x));
            prop_assert!((back - x).abs() <= 1e-12 * x);
        }

        #[test]
        fn fenchel_young(kind in kind_strategy(), w in 0.1f64..10.0, x in 1e-3f64..1e3, y in 1e-3f64..1e3) {
            let u = field(kind, w);
            let v = u.conjugate_field();
            let lhs = u.evaluate(0, x) - x * y;
            let rhs = v.evaluate(0, y);
            prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()));
            // Touching point.
            let yt = u.marginal(0, x);
            let touch = u.evaluate(0, x) - x * yt;
            prop_assert!((v.evaluate(0, yt) - touch).abs() <= 1e-9 * (1.0 + touch.abs()));
        }

        #[test]
        fn conjugate_matches_grid_search(kind in kind_strategy(), w in 0.2f64..5.0, y in 0.05f64..20.0) {
            let u = field(kind, w);
            let exact = u.conjugate_field().evaluate(0, y);
            let brute = grid_conjugate(&u, y);
            prop_assert!((exact - brute).abs() <= 1e-6 * (1.0 + exact.abs()), "{exact} vs {brute}");
        }

        #[test]
        fn strictly_concave(kind in kind_strategy(), a in 1e-2f64..1e2, b in 1e-2f64..1e2) {
            prop_assume!((a - b).abs() > 1e-3 * a.max(b));
            let u = field(kind, 1.0);
            let mid = u.evaluate(0, 0.5 * (a + b));
            prop_assert!(mid > 0.5 * (u.evaluate(0, a) + u.evaluate(0, b)));
        }

        #[test]
        fn conjugate_convex_decreasing(kind in kind_strategy(), a in 1e-2f64..1e2, b in 1e-2f64..1e2) {
            prop_assume!((a - b).abs() > 1e-3 * a.max(b));
            let v = field(kind, 1.0).conjugate_field();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(v.evaluate(0, lo) > v.evaluate(0, hi));
            prop_assert!(v.evaluate(0, 0.5 * (a + b)) < 0.5 * (v.evaluate(0, a) + v.evaluate(0, b)));
        }
    }
}
