//! Scenario documents: a market model plus the utility field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::market::{MarketModel, NodeSpec};
use crate::preferences::{UtilityField, UtilitySpec};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: MarketModel,
    pub utility: UtilityField,
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    assets: usize,
    clock_bound: f64,
    nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    utility: Option<UtilitySpec>,
}

impl Scenario {
    pub fn new(model: MarketModel, utility: UtilityField) -> Self {
        Self { model, utility }
    }

    /// Parses a scenario; a missing `"utility"` key means unit-weight log utility.
    pub fn parse(text: &str) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        let model = MarketModel::new(file.assets, file.clock_bound, file.nodes)?;
        let utility = match &file.utility {
            Some(spec) => UtilityField::from_spec(spec, &model)?,
            None => UtilityField::log(model.len()),
        };
        Ok(Self { model, utility })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            assets: self.model.assets(),
            clock_bound: self.model.clock_bound(),
            nodes: self.model.node_specs(),
            utility: Some(self.utility.to_spec(&self.model)),
        };
        serde_json::to_string_pretty(&file).expect("scenario serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;
    use crate::preferences::UtilityKind;

    #[test]
    fn round_trips_through_json() {
        let model = corpus::cons3();
        let weights: Vec<f64> = model.nodes().iter().map(|n| 0.9f64.powi(n.time as i32)).collect();
        let utility = UtilityField::new(UtilityKind::Power(-1.5), weights).unwrap();
        let s = Scenario::new(model, utility);
        let back = Scenario::parse(&s.to_json()).unwrap();
        assert_eq!(back.utility, s.utility);
        assert_eq!(back.model.node_specs(), s.model.node_specs());
    }

    #[test]
    fn utility_defaults_to_log() {
        let s = Scenario::parse(
            r#"{"assets":1,"clock_bound":1,"nodes":[{"id":5,"parent":null,"prob":1,"prices":[1],"dkappa":1}]}"#,
        )
        .unwrap();
        assert_eq!(s.utility.kind(), UtilityKind::Log);
    }

    #[test]
    fn rejects_unknown_weight_node() {
        let text = r#"{"assets":1,"clock_bound":1,"nodes":[{"id":5,"parent":null,"prob":1,"prices":[1],"dkappa":1}],
            "utility":{"kind":"power","p":0.5,"weights":{"6":2.0}}}"#;
        assert!(Scenario::parse(text).is_err());
    }
}
