//! Finite event-tree market: filtration, unconditional node probabilities,
//! discounted asset prices and the per-node clock increments that weight
//! consumption.
//!
//! Nodes are stored in breadth-first order, so index 0 is always the root and
//! every parent precedes its children. External node ids from scenario files
//! are kept alongside for reporting.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for "children probabilities sum to the parent's".
pub const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: i64,
    pub time: usize,
    pub parent: Option<usize>,
    pub prob: f64,
    pub prices: Vec<f64>,
    pub dkappa: f64,
}

/// One node as it appears in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: i64,
    pub parent: Option<i64>,
    pub prob: f64,
    pub prices: Vec<f64>,
    pub dkappa: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct ModelFile {
    assets: usize,
    clock_bound: f64,
    nodes: Vec<NodeSpec>,
}

#[derive(Debug, Clone)]
pub struct MarketModel {
    nodes: Vec<Node>,
    children: Vec<Vec<usize>>,
    assets: usize,
    horizon: usize,
    clock_bound: f64,
    index: HashMap<i64, usize>,
}

/// Price change along the edge `parent -> child`.
#[derive(Debug, Clone, PartialEq)]
pub struct Increment {
    pub parent: usize,
    pub child: usize,
    pub delta: Vec<f64>,
}

/// Wealth before (`pre`) and after (`post`) the consumption debit at each node.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthProcess {
    pub pre: Vec<f64>,
    pub post: Vec<f64>,
}

impl WealthProcess {
    pub fn min_post(&self) -> f64 {
        self.post.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Parse and validate the market part of a scenario document.
pub fn parse_scenario(text: &str) -> Result<MarketModel> {
    let file: ModelFile = serde_json::from_str(text)?;
    MarketModel::new(file.assets, file.clock_bound, file.nodes)
}

impl MarketModel {
    pub fn new(assets: usize, clock_bound: f64, specs: Vec<NodeSpec>) -> Result<Self> {
        if assets == 0 {
            return Err(Error::Schema("\"assets\" must be at least 1".into()));
        }
        if !(clock_bound.is_finite() && clock_bound > 0.0) {
            return Err(Error::Schema(format!("\"clock_bound\" must be positive and finite, got {clock_bound}")));
        }
        if specs.is_empty() {
            return Err(Error::Schema("\"nodes\" is empty".into()));
        }

        let mut by_id: HashMap<i64, usize> = HashMap::with_capacity(specs.len());
        for (k, s) in specs.iter().enumerate() {
            if by_id.insert(s.id, k).is_some() {
                return Err(Error::Schema(format!("duplicate node id {}", s.id)));
            }
            if s.prices.len() != assets {
                return Err(Error::Schema(format!("node {} has {} prices, expected {assets}", s.id, s.prices.len())));
            }
            if s.prices.iter().any(|p| !p.is_finite()) {
                return Err(Error::Schema(format!("node {} has a non-finite price", s.id)));
            }
            if !(s.prob.is_finite() && s.prob > 0.0) {
                return Err(Error::Schema(format!("node {} has non-positive probability {}", s.id, s.prob)));
            }
            if !s.dkappa.is_finite() {
                return Err(Error::Schema(format!("node {} has a non-finite dkappa", s.id)));
            }
            if s.dkappa < 0.0 {
                return Err(Error::NegativeClock { node: s.id, dkappa: s.dkappa });
            }
        }

        let roots: Vec<usize> = (0..specs.len()).filter(|&k| specs[k].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Schema(format!("expected exactly one root, found {}", roots.len())));
        }
        let root = roots[0];
        if (specs[root].prob - 1.0).abs() > PROB_TOL {
            return Err(Error::ProbabilityMismatch { node: specs[root].id, parent: 1.0, children: specs[root].prob });
        }

        let mut spec_children: Vec<Vec<usize>> = vec![Vec::new(); specs.len()];
        for (k, s) in specs.iter().enumerate() {
            if let Some(pid) = s.parent {
                let p = *by_id
                    .get(&pid)
                    .ok_or_else(|| Error::Schema(format!("node {} references unknown parent {pid}", s.id)))?;
                spec_children[p].push(k);
            }
        }

        // Breadth-first relabelling; unreachable nodes mean a cycle.
        let mut order = Vec::with_capacity(specs.len());
        let mut new_index = vec![usize::MAX; specs.len()];
        let mut queue = VecDeque::from([root]);
        while let Some(k) = queue.pop_front() {
            new_index[k] = order.len();
            order.push(k);
            queue.extend(spec_children[k].iter().copied());
        }
        if order.len() != specs.len() {
            return Err(Error::Schema("node graph is not a tree rooted at the root node".into()));
        }

        let mut nodes: Vec<Node> = Vec::with_capacity(specs.len());
        let mut children = vec![Vec::new(); specs.len()];
        for &k in &order {
            let s = &specs[k];
            let parent = s.parent.map(|pid| new_index[by_id[&pid]]);
            let time = parent.map_or(0, |p| nodes[p].time + 1);
            let me = nodes.len();
            if let Some(p) = parent {
                children[p].push(me);
            }
            nodes.push(Node { id: s.id, time, parent, prob: s.prob, prices: s.prices.clone(), dkappa: s.dkappa });
        }

        for (n, kids) in children.iter().enumerate() {
            if kids.is_empty() {
                continue;
            }
            let mass: f64 = kids.iter().map(|&m| nodes[m].prob).sum();
            if (mass - nodes[n].prob).abs() > PROB_TOL * nodes[n].prob {
                return Err(Error::ProbabilityMismatch { node: nodes[n].id, parent: nodes[n].prob, children: mass });
            }
        }

        let horizon = nodes.iter().map(|n| n.time).max().unwrap_or(0);
        let index = nodes.iter().enumerate().map(|(k, n)| (n.id, k)).collect();
        let model = Self { nodes, children, assets, horizon, clock_bound, index };

        let mut any_mass = false;
        for leaf in model.leaves() {
            let mass = model.path_clock_mass(leaf);
            if mass > clock_bound * (1.0 + 1e-12) {
                return Err(Error::ClockBoundExceeded { leaf: model.nodes[leaf].id, mass, bound: clock_bound });
            }
            any_mass |= mass > 0.0;
        }
        if !any_mass {
            return Err(Error::ZeroClockMass);
        }
        Ok(model)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn clock_bound(&self) -> f64 {
        self.clock_bound
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, n: usize) -> &Node {
        &self.nodes[n]
    }

    pub fn children(&self, n: usize) -> &[usize] {
        &self.children[n]
    }

    pub fn is_terminal(&self, n: usize) -> bool {
        self.children[n].is_empty()
    }

    /// Internal index of an external node id.
    pub fn index_of(&self, id: i64) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| self.is_terminal(n))
    }

    pub fn non_terminal(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| !self.is_terminal(n))
    }

    /// Nodes that carry a consumption decision (`dkappa > 0`).
    pub fn clock_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&n| self.nodes[n].dkappa > 0.0)
    }

    /// Root-to-`n` path, root first.
    pub fn path(&self, n: usize) -> Vec<usize> {
        let mut path = vec![n];
        let mut cur = n;
        while let Some(p) = self.nodes[cur].parent {
            path.push(p);
            cur = p;
        }
        path.reverse();
        path
    }

    /// Total clock mass from the root (inclusive) down to `n` (inclusive).
    pub fn path_clock_mass(&self, n: usize) -> f64 {
        self.path(n).iter().map(|&k| self.nodes[k].dkappa).sum()
    }

    /// `E[sum_n f(n) dkappa(n)]`, the tree version of `E[int f dkappa]`.
    pub fn clock_expectation(&self, f: &[f64]) -> f64 {
        self.nodes
            .iter()
            .zip(f)
            .filter(|(node, _)| node.dkappa > 0.0)
            .map(|(node, v)| node.prob * node.dkappa * v)
            .sum()
    }

    /// `E[f | n]` for a function living on the children of `n`.
    pub fn conditional_expectation(&self, n: usize, f: &[f64]) -> f64 {
        let p = self.nodes[n].prob;
        self.children[n].iter().map(|&m| self.nodes[m].prob / p * f[m]).sum()
    }

    /// `E[f(X_t)]` over the nodes at stage `t`.
    pub fn stage_expectation(&self, t: usize, f: &[f64]) -> f64 {
        self.nodes.iter().zip(f).filter(|(node, _)| node.time == t).map(|(node, v)| node.prob * v).sum()
    }

    /// `S(child) - S(parent)` for the edge into `child`; zero for the root.
    pub fn increment_into(&self, child: usize) -> Vec<f64> {
        match self.nodes[child].parent {
            Some(p) => self.nodes[child].prices.iter().zip(&self.nodes[p].prices).map(|(a, b)| a - b).collect(),
            None => vec![0.0; self.assets],
        }
    }

    /// Back to the scenario-file representation.
    pub fn node_specs(&self) -> Vec<NodeSpec> {
        self.nodes
            .iter()
            .map(|n| NodeSpec {
                id: n.id,
                parent: n.parent.map(|p| self.nodes[p].id),
                prob: n.prob,
                prices: n.prices.clone(),
                dkappa: n.dkappa,
            })
            .collect()
    }
}

/// Price increments over every parent-to-child edge, in child order.
pub fn price_increments(model: &MarketModel) -> Vec<Increment> {
    (1..model.len())
        .map(|m| Increment {
            parent: model.node(m).parent.expect("non-root node has a parent"),
            child: m,
            delta: model.increment_into(m),
        })
        .collect()
}

/// Wealth recursion: `post(n) = pre(n) - c(n) dkappa(n)` and
/// `pre(m) = post(n) + H(n) . (S(m) - S(n))` for each child `m` of `n`.
///
/// `holdings` is node-indexed; entries at terminal nodes are ignored.
pub fn wealth_process(
    model: &MarketModel,
    x: f64,
    holdings: &[Vec<f64>],
    consumption: &[f64],
) -> Result<WealthProcess> {
    let n = model.len();
    if holdings.len() != n || consumption.len() != n {
        return Err(Error::Dimension(format!(
            "expected {n} node entries, got holdings {} and consumption {}",
            holdings.len(),
            consumption.len()
        )));
    }
    if let Some(k) = model.non_terminal().find(|&k| holdings[k].len() != model.assets()) {
        return Err(Error::Dimension(format!(
            "holdings at node {} have length {}, expected {}",
            model.node(k).id,
            holdings[k].len(),
            model.assets()
        )));
    }
    let mut pre = vec![0.0; n];
    let mut post = vec![0.0; n];
    for k in 0..n {
        pre[k] = match model.node(k).parent {
            None => x,
            Some(p) => {
                let gain: f64 = holdings[p]
                    .iter()
                    .zip(&model.node(k).prices)
                    .zip(&model.node(p).prices)
                    .map(|((h, s1), s0)| h * (s1 - s0))
                    .sum();
                post[p] + gain
            }
        };
        post[k] = pre[k] - consumption[k] * model.node(k).dkappa;
    }
    Ok(WealthProcess { pre, post })
}
