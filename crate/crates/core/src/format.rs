//! JSON file formats: instances, assignments and solver configuration.
//!
//! Instance files look like
//!
//! ```json
//! {"machines": [[0.2, 0.8], [0.5, 0.1]],
//!  "rules": [{"if": [[0, 0]], "then": {"machine": 1, "tasks": [0]}}]}
//! ```
//!
//! with an optional `"extra_cost"` per rule. Indices are 0-based.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Assignment, Instance, Rule};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    machines: Vec<Vec<f64>>,
    #[serde(default)]
    rules: Vec<RuleDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleDoc {
    #[serde(rename = "if")]
    conditions: Vec<(usize, usize)>,
    then: TargetDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    extra_cost: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TargetDoc {
    machine: usize,
    tasks: Vec<usize>,
}

pub fn parse_instance(text: &str) -> Result<Instance> {
    let doc: InstanceDoc = serde_json::from_str(text)?;
    let rules = doc
        .rules
        .into_iter()
        .map(|r| Rule::new(r.conditions, r.then.machine, r.then.tasks, r.extra_cost))
        .collect();
    Instance::new(doc.machines, rules)
}

pub fn parse_instance_bytes(bytes: &[u8]) -> Result<Instance> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| Error::InvalidInstance(format!("not UTF-8: {e}")))?;
    parse_instance(text)
}

/// Pretty-printed instance document with a trailing newline.
pub fn instance_to_json(instance: &Instance) -> String {
    let doc = InstanceDoc {
        machines: instance.times().to_vec(),
        rules: instance
            .rules()
            .iter()
            .map(|r| RuleDoc {
                conditions: r.conditions.clone(),
                then: TargetDoc {
                    machine: r.target_machine,
                    tasks: r.target_tasks.clone(),
                },
                extra_cost: r.extra_cost,
            })
            .collect(),
    };
    let mut s = serde_json::to_string_pretty(&doc).expect("instance documents serialize");
    s.push('\n');
    s
}

#[derive(Deserialize)]
#[serde(untagged)]
enum AssignmentDoc {
    Bare(Vec<usize>),
    Wrapped { assignment: Vec<usize> },
}

/// Accepts a bare array (`[0, 2, 1]`) or any object with an
/// `"assignment"` array, such as a solve result document.
pub fn parse_assignment(text: &str) -> Result<Assignment> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match serde_json::from_value::<AssignmentDoc>(value) {
        Ok(AssignmentDoc::Bare(v)) | Ok(AssignmentDoc::Wrapped { assignment: v }) => {
            Ok(Assignment(v))
        }
        Err(_) => Err(Error::InvalidAssignment(
            "expected an array of task indices or an object with an \"assignment\" array".into(),
        )),
    }
}

/// Solver settings file. Every field is optional; keys mirror the
/// iterative and genetic configuration fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub tau: Option<f64>,
    pub max_iterations: Option<usize>,
    pub population: Option<usize>,
    pub active_tasks_per_machine: Option<usize>,
    pub rules_per_individual: Option<usize>,
    pub mutations_per_child: Option<usize>,
    pub survival_ratio: Option<f64>,
    pub max_generations: Option<usize>,
    pub crossover_swaps: Option<usize>,
    pub seed: Option<u64>,
}

pub fn parse_config(text: &str) -> Result<ConfigFile> {
    let cfg: ConfigFile = serde_json::from_str(text)?;
    if let Some(t) = cfg.tau {
        if !(t.is_finite() && t > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {t}")));
        }
    }
    if let Some(r) = cfg.survival_ratio {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Config(format!("survival_ratio must lie in (0, 1], got {r}")));
        }
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const INSTANCE_A: &str = r#"{"machines": [[0.2, 0.8], [0.5, 0.1]],
        "rules": [{"if": [[0, 0]], "then": {"machine": 1, "tasks": [0]}}]}"#;

    #[test]
    fn parses_instance() {
        let inst = parse_instance(INSTANCE_A).unwrap();
        assert_eq!(inst.machine_count(), 2);
        assert_eq!(inst.rules(), &[Rule::simple((0, 0), (1, 0))]);
        let back = parse_instance(&instance_to_json(&inst)).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn extra_cost_and_missing_rules() {
        let inst = parse_instance(
            r#"{"machines": [[1, 2], [3]], "rules": [{"if": [[1, 0]], "then": {"machine": 0, "tasks": [1, 0]}, "extra_cost": 0.5}]}"#,
        )
        .unwrap();
        assert_eq!(inst.rules()[0].target_tasks, vec![0, 1]);
        assert_eq!(inst.rules()[0].extra_cost, Some(0.5));
        assert!(parse_instance(r#"{"machines": [[1]]}"#).unwrap().rules().is_empty());
    }

    #[test]
    fn malformed_instances() {
        let err = parse_instance("{\n\"machines\": [[1, 2],\n oops]}").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert!(parse_instance(r#"{"machines": [[1]], "extra": 1}"#).is_err());
        assert!(matches!(
            parse_instance(r#"{"machines": [[1], [1]], "rules": [{"if": [[0, 3]], "then": {"machine": 1, "tasks": [0]}}]}"#),
            Err(Error::InvalidInstance(_))
        ));
        assert!(parse_instance(r#"{"machines": [[-1]]}"#).is_err());
        assert!(parse_instance_bytes(&[0xff, 0xfe]).is_err());
    }

    #[test]
    fn assignments() {
        assert_eq!(parse_assignment("[0, 2]").unwrap(), Assignment(vec![0, 2]));
        assert_eq!(
            parse_assignment(r#"{"assignment": [1, 0], "feasible": true}"#).unwrap(),
            Assignment(vec![1, 0])
        );
        assert!(parse_assignment(r#"{"tasks": [1]}"#).is_err());
        assert!(parse_assignment("[-1]").is_err());
    }

    #[test]
    fn configs() {
        let c = parse_config(r#"{"population": 10, "survival_ratio": 0.5, "tau": 5}"#).unwrap();
        assert_eq!(c.population, Some(10));
        assert_eq!(c.tau, Some(5.0));
        assert!(parse_config(r#"{"popsize": 10}"#).is_err());
        assert!(parse_config(r#"{"survival_ratio": 1.5}"#).is_err());
        assert!(parse_config(r#"{"tau": 0}"#).is_err());
    }
}
