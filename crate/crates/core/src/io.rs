//! Strict JSON instance files.
//!
//! Unknown keys are rejected everywhere. Floats are written by `serde_json`
//! in shortest round-trip form, so `parse(serialize(x)) == x` bit for bit.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ambiguity::AmbiguityModel;
use crate::cost::CostAmbiguityModel;
use crate::error::{Error, Violation};
use crate::mdp::{Kernel, MdpInstance, StageKernel};
use crate::oracle::OracleConfig;
use crate::risk::AvarSpec;
use crate::soc::SocSpec;

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("no bundled example named '{0}'")]
    UnknownFixture(String),
    #[error(transparent)]
    Invalid(#[from] Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSection {
    /// State names per stage, `T + 1` lists.
    pub states: Vec<Vec<String>>,
    /// Per decision stage, the actions of every state.
    pub actions: Vec<BTreeMap<String, Vec<String>>>,
    /// Per decision stage, `state -> [action][next state]`; omitted states cost nothing.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub costs: Vec<BTreeMap<String, Vec<Vec<f64>>>>,
    /// Omitted states have terminal cost 0.
    #[serde(default)]
    pub terminal_cost: BTreeMap<String, f64>,
    pub initial_state: String,
}

/// Cost ambiguity together with the known kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub kernel: Vec<StageKernel>,
    pub stages: CostAmbiguityModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub mdp: MdpSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambiguity: Option<AmbiguityModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_ambiguity: Option<CostSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub avar: Option<AvarSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub soc: Option<SocSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleConfig>,
}

impl MdpSection {
    pub fn from_instance(inst: &MdpInstance) -> Self {
        let h = inst.horizon();
        let actions = (0..h)
            .map(|t| {
                (0..inst.num_states(t))
                    .map(|s| (inst.state_name(t, s).to_string(), inst.actions(t, s).to_vec()))
                    .collect()
            })
            .collect();
        let costs: Vec<BTreeMap<String, Vec<Vec<f64>>>> = (0..h)
            .map(|t| {
                (0..inst.num_states(t))
                    .filter(|&s| inst.stage_costs(t)[s].iter().flatten().any(|&c| c != 0.0))
                    .map(|s| (inst.state_name(t, s).to_string(), inst.stage_costs(t)[s].clone()))
                    .collect()
            })
            .collect();
        let any_cost = costs.iter().any(|m| !m.is_empty());
        MdpSection {
            states: (0..=h).map(|t| inst.states(t).to_vec()).collect(),
            actions,
            costs: if any_cost { costs } else { Vec::new() },
            terminal_cost: (0..inst.num_states(h))
                .map(|s| (inst.state_name(h, s).to_string(), inst.terminal_cost()[s]))
                .collect(),
            initial_state: inst.state_name(0, inst.initial_state()).to_string(),
        }
    }

    pub fn to_instance(&self) -> Result<MdpInstance, Error> {
        let mut v = Vec::new();
        if self.states.len() < 2 {
            return Err(Error::InvalidInstance(vec![Violation::new(
                "states must list at least two stages",
            )]));
        }
        let h = self.states.len() - 1;
        if self.actions.len() != h {
            v.push(Violation::new(format!("actions given for {} stages, expected {h}", self.actions.len())));
        }
        if !self.costs.is_empty() && self.costs.len() != h {
            v.push(Violation::new(format!("costs given for {} stages, expected {h}", self.costs.len())));
        }
        if !v.is_empty() {
            return Err(Error::InvalidInstance(v));
        }
        let mut actions = Vec::new();
        let mut costs = Vec::new();
        for t in 0..h {
            for name in self.actions[t].keys() {
                if !self.states[t].contains(name) {
                    v.push(Violation::new(format!("actions given for undeclared state '{name}'")).at_stage(t));
                }
            }
            let mut stage_actions = Vec::new();
            let mut stage_costs = Vec::new();
            let n = self.states[t + 1].len();
            for s in &self.states[t] {
                let acts = match self.actions[t].get(s) {
                    Some(a) => a.clone(),
                    None => {
                        v.push(Violation::new("no actions listed").at_stage(t).at_state(s.clone()));
                        Vec::new()
                    }
                };
                let c = self.costs.get(t).and_then(|m| m.get(s)).cloned();
                stage_costs.push(c.unwrap_or_else(|| vec![vec![0.0; n]; acts.len()]));
                stage_actions.push(acts);
            }
            if let Some(m) = self.costs.get(t) {
                for name in m.keys() {
                    if !self.states[t].contains(name) {
                        v.push(Violation::new(format!("costs given for undeclared state '{name}'")).at_stage(t));
                    }
                }
            }
            actions.push(stage_actions);
            costs.push(stage_costs);
        }
        let last = &self.states[h];
        for name in self.terminal_cost.keys() {
            if !last.contains(name) {
                v.push(Violation::new(format!("terminal cost for undeclared state '{name}'")));
            }
        }
        let terminal = last.iter().map(|s| self.terminal_cost.get(s).copied().unwrap_or(0.0)).collect();
        let initial = self.states[0].iter().position(|s| *s == self.initial_state);
        if initial.is_none() {
            v.push(Violation::new(format!("initial state '{}' is not a first-stage state", self.initial_state)));
        }
        if !v.is_empty() {
            return Err(Error::InvalidInstance(v));
        }
        MdpInstance::new(self.states.clone(), actions, costs, terminal, initial.unwrap())
    }
}

/// Everything an instance file describes, validated.
#[derive(Debug, Clone)]
pub struct LoadedInstance {
    pub description: Option<String>,
    pub instance: MdpInstance,
    pub ambiguity: Option<AmbiguityModel>,
    pub cost: Option<(Kernel, CostAmbiguityModel)>,
    pub avar: Option<AvarSpec>,
    pub soc: Option<SocSpec>,
    pub oracle: OracleConfig,
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, LoadError> {
        serde_json::from_str(text).map_err(|e| LoadError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn read(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files always serialize")
    }

    pub fn from_parts(inst: &MdpInstance) -> Self {
        InstanceFile {
            description: None,
            mdp: MdpSection::from_instance(inst),
            ambiguity: None,
            cost_ambiguity: None,
            avar: None,
            soc: None,
            oracle: None,
        }
    }

    /// Builds and validates every section.
    pub fn load(&self) -> Result<LoadedInstance, Error> {
        let instance = self.mdp.to_instance()?;
        if self.ambiguity.is_none() && self.cost_ambiguity.is_none() && self.avar.is_none() && self.soc.is_none() {
            return Err(Error::InvalidModel(vec![Violation::new(
                "file describes no ambiguity (need ambiguity, cost_ambiguity, avar or soc)",
            )]));
        }
        if let Some(m) = &self.ambiguity {
            m.validate(&instance, crate::DEFAULT_CAP)?;
        }
        let cost = match &self.cost_ambiguity {
            Some(c) => {
                let k = Kernel::new(&instance, c.kernel.clone())?;
                c.stages.validate(&instance, crate::DEFAULT_CAP)?;
                Some((k, c.stages.clone()))
            }
            None => None,
        };
        if let Some(a) = &self.avar {
            a.kernel(&instance)?;
        }
        if let Some(s) = &self.soc {
            if (0..instance.horizon()).any(|t| instance.stage_costs(t).iter().flatten().flatten().any(|&c| c != 0.0)) {
                return Err(Error::CostConflict(
                    "stage costs come from the noise model; the mdp section must not list costs".into(),
                ));
            }
            let v = s.violations(&instance);
            if !v.is_empty() {
                return Err(Error::InvalidModel(v));
            }
        }
        let oracle = self.oracle.unwrap_or_default();
        oracle.validate()?;
        Ok(LoadedInstance {
            description: self.description.clone(),
            instance,
            ambiguity: self.ambiguity.clone(),
            cost,
            avar: self.avar.clone(),
            soc: self.soc.clone(),
            oracle,
        })
    }
}

pub fn load_instance_file(path: &Path) -> Result<LoadedInstance, LoadError> {
    Ok(InstanceFile::read(path)?.load()?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"{
  "mdp": {
    "states": [["s"], ["x", "y"]],
    "actions": [{"s": ["a", "b"]}],
    "costs": [{"s": [[1.0, 0.0], [0.1, 0.1]]}],
    "terminal_cost": {"x": 2.5},
    "initial_state": "s"
  },
  "ambiguity": [{"kind": "singleton", "kernel": [[[0.5, 0.5], [0.0, 1.0]]]}]
}"#;

    #[test]
    fn parses_and_round_trips() {
        let f = InstanceFile::parse(SMALL).unwrap();
        let l = f.load().unwrap();
        assert_eq!(l.instance.terminal_cost(), &[2.5, 0.0]);
        assert_eq!(l.instance.cost(0, 0, 1, 1), 0.1);
        let again = InstanceFile::parse(&f.to_json()).unwrap();
        assert_eq!(again, f);
        assert_eq!(again.load().unwrap().instance, l.instance);
        let rebuilt = MdpSection::from_instance(&l.instance).to_instance().unwrap();
        assert_eq!(rebuilt, l.instance);
    }

    #[test]
    fn unknown_keys_are_rejected_with_position() {
        let bad = SMALL.replace("\"initial_state\"", "\"initial\": 1, \"initial_state\"");
        match InstanceFile::parse(&bad) {
            Err(LoadError::Parse { line, message, .. }) => {
                assert_eq!(line, 7);
                assert!(message.contains("unknown field"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn undeclared_names_are_reported() {
        let bad = SMALL.replace("\"x\": 2.5", "\"z\": 2.5");
        let err = InstanceFile::parse(&bad).unwrap().load().unwrap_err();
        assert!(err.to_string().contains("'z'"));
    }
}
