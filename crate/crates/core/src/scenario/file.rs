//! JSON scenario files.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_expr, AgentSpec, Algorithm, Gains, Scenario};
use crate::error::{Error, Result};
use crate::graph::CommGraph;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    #[serde(rename = "A", default = "one")]
    a: f64,
    cost: String,
    activity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lower: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    upper: Option<String>,
}

fn one() -> f64 {
    1.0
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    agents: Vec<AgentFile>,
    edges: Vec<[usize; 2]>,
    gains: Gains,
    t_end: f64,
    dt: f64,
    x0: Vec<f64>,
    lambda0: Vec<f64>,
    theta0: Vec<f64>,
    theta0p: Vec<f64>,
    algorithm: Algorithm,
    #[serde(default)]
    seed: u64,
}

impl Scenario {
    /// Parses and fully validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|err| {
            let path = err.path().to_string();
            let inner = err.into_inner();
            let message = inner.to_string();
            // missing fields are reported against their parent; name the field itself
            let field = match message.split('`').nth(1) {
                Some(name) if message.starts_with("missing field") => {
                    if path == "." {
                        name.to_owned()
                    } else {
                        format!("{path}.{name}")
                    }
                }
                _ => path,
            };
            Error::schema(field, message)
        })?;

        let agents = file
            .agents
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let expr = |field: &str, text: &str| {
                    parse_expr(text)
                        .map_err(|e| Error::schema(format!("agents[{i}].{field}"), e.to_string()))
                };
                let lower = a.lower.as_deref().map(|s| expr("lower", s)).transpose()?;
                let upper = a.upper.as_deref().map(|s| expr("upper", s)).transpose()?;
                AgentSpec::new(
                    a.a,
                    expr("cost", &a.cost)?,
                    expr("activity", &a.activity)?,
                    lower,
                    upper,
                )
                .map_err(|e| as_invariant(format!("agents[{i}]: "), e))
            })
            .collect::<Result<Vec<_>>>()?;
        let edges: Vec<(usize, usize)> = file.edges.iter().map(|&[i, j]| (i, j)).collect();
        let graph =
            CommGraph::new(agents.len(), &edges).map_err(|e| as_invariant(String::new(), e))?;

        let scenario = Scenario {
            name: file.name.unwrap_or_else(|| "custom".to_owned()),
            agents,
            graph,
            gains: file.gains,
            t_end: file.t_end,
            dt: file.dt,
            x0: file.x0,
            lambda0: file.lambda0,
            theta0: file.theta0,
            theta0p: file.theta0p,
            algorithm: file.algorithm,
            seed: file.seed,
        };
        scenario
            .validate()
            .map_err(|e| as_invariant(String::new(), e))?;
        Ok(scenario)
    }

    /// Pretty-printed JSON document that `from_json` reads back unchanged.
    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            name: Some(self.name.clone()),
            agents: self
                .agents
                .iter()
                .map(|a| AgentFile {
                    a: a.a,
                    cost: a.cost.to_string(),
                    activity: a.activity.to_string(),
                    lower: a.lower.as_ref().map(|g| g.expr.to_string()),
                    upper: a.upper.as_ref().map(|g| g.expr.to_string()),
                })
                .collect(),
            edges: self.graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
            gains: self.gains.clone(),
            t_end: self.t_end,
            dt: self.dt,
            x0: self.x0.clone(),
            lambda0: self.lambda0.clone(),
            theta0: self.theta0.clone(),
            theta0p: self.theta0p.clone(),
            algorithm: self.algorithm,
            seed: self.seed,
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }
}

fn as_invariant(prefix: String, e: Error) -> Error {
    match e {
        Error::InvariantViolation(m) => Error::InvariantViolation(prefix + &m),
        other => Error::InvariantViolation(prefix + &other.to_string()),
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    Scenario::from_json(&std::fs::read_to_string(path)?)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, scenario.to_json() + "\n")?;
    Ok(())
}
