//! Constraints read directly off the model graph.
//!
//! Edge cardinalities become shapes, declared attribute ranges become
//! formulas and declared grammars become structural constraints. Rules
//! name their node by id or by name; the node's name is the artifact
//! element kind the constraint governs.

use serde::{Deserialize, Serialize};

use crate::compiler::GrammarSpec;
use crate::graph::{Entity, SourceRef, TypedGraph};
use crate::validators::{LinearFormula, Rat, Requirement, Shape};

use super::{Anchor, ConstraintBody, ConstraintError, ConstraintRecord, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeRule {
    pub node: String,
    pub attribute: String,
    #[serde(default)]
    pub min: Option<Rat>,
    #[serde(default)]
    pub max: Option<Rat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrammarRule {
    pub node: String,
    pub grammar: GrammarSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Channel1Rules {
    /// Turn edge cardinalities into shapes.
    pub cardinalities: bool,
    pub ranges: Vec<RangeRule>,
    pub grammars: Vec<GrammarRule>,
}

impl Default for Channel1Rules {
    fn default() -> Self {
        Channel1Rules {
            cardinalities: true,
            ranges: Vec::new(),
            grammars: Vec::new(),
        }
    }
}

fn resolve<'g>(graph: &'g TypedGraph, key: &str) -> Result<&'g Entity, ConstraintError> {
    graph
        .node(key)
        .or_else(|| graph.nodes().iter().find(|n| n.name == key))
        .ok_or_else(|| ConstraintError::UnknownKind(key.to_owned()))
}

pub fn extract_channel1(
    graph: &TypedGraph,
    rules: &Channel1Rules,
) -> Result<Vec<ConstraintRecord>, ConstraintError> {
    let mut out = Vec::new();
    let self_ref = |locator: String| SourceRef {
        source_id: "channel1".into(),
        locator,
    };

    for rule in &rules.grammars {
        let node = resolve(graph, &rule.node)?;
        let body = ConstraintBody::Structural {
            grammar: rule.grammar.clone(),
        };
        body.check()?;
        let mut prov = graph.provenance(&node.id).to_vec();
        prov.push(self_ref(format!("grammar:{}", node.id)));
        out.push(ConstraintRecord::new(body, Anchor::Node(node.id.clone()), prov, Status::Admitted)?);
    }

    if rules.cardinalities {
        for e in graph.edges() {
            let (src, dst) = (
                graph.node(&e.src).expect("edge endpoints exist"),
                graph.node(&e.dst).expect("edge endpoints exist"),
            );
            let c = e.cardinality;
            let mut reqs = Vec::new();
            if c.min >= 1 {
                reqs.push(Requirement::RefExists {
                    role: e.kind.clone(),
                    dst_kind: dst.name.clone(),
                });
            }
            if c.min > 0 || c.max.is_some() {
                reqs.push(Requirement::Cardinality {
                    role: e.kind.clone(),
                    min: c.min,
                    max: c.max,
                });
            }
            if reqs.is_empty() {
                continue;
            }
            let shape = Shape {
                id: String::new(),
                target_kind: src.name.clone(),
                requirements: reqs,
                provenance: graph.provenance(&e.id).to_vec(),
            };
            let mut prov = graph.provenance(&e.id).to_vec();
            prov.push(self_ref(format!("edge:{}", e.id)));
            let body = ConstraintBody::Semantic { shape };
            body.check()?;
            out.push(ConstraintRecord::new(body, Anchor::Node(src.id.clone()), prov, Status::Admitted)?);
        }
    }

    for rule in &rules.ranges {
        let node = resolve(graph, &rule.node)?;
        let mut parts = Vec::new();
        if let Some(min) = &rule.min {
            parts.push(format!("{} >= {}", rule.attribute, min));
        }
        if let Some(max) = &rule.max {
            parts.push(format!("{} <= {}", rule.attribute, max));
        }
        if parts.is_empty() {
            continue;
        }
        let mut formula = LinearFormula::parse("", &parts.join(" && "))?;
        formula.target_kind = Some(node.name.clone());
        let mut prov = graph.provenance(&node.id).to_vec();
        prov.push(self_ref(format!("range:{}.{}", node.id, rule.attribute)));
        formula.provenance = prov.clone();
        out.push(ConstraintRecord::new(
            ConstraintBody::Logical { formula },
            Anchor::Node(node.id.clone()),
            prov,
            Status::Admitted,
        )?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::GrammarKind;

    fn graph() -> TypedGraph {
        TypedGraph::from_json(
            r#"{"nodes":[{"id":"A","name":"Event","kind":"Class","attributes":{"period":"integer"}},
                         {"id":"B","name":"Operation","kind":"Class"}],
                "edges":[{"src":"A","dst":"B","kind":"op","cardinality":{"min":1,"max":1}}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn edges_ranges_and_grammars() {
        let rules = Channel1Rules {
            cardinalities: true,
            ranges: vec![RangeRule {
                node: "Event".into(),
                attribute: "period".into(),
                min: Some(Rat::int(1)),
                max: Some(Rat::int(1000)),
            }],
            grammars: vec![GrammarRule {
                node: "B".into(),
                grammar: GrammarSpec::regex("[A-Z][a-zA-Z0-9]*"),
            }],
        };
        let recs = extract_channel1(&graph(), &rules).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.status == Status::Admitted && r.anchor != Anchor::Abstract));
        let ConstraintBody::Structural { grammar } = &recs[0].body else { panic!() };
        assert_eq!(grammar.kind, GrammarKind::Regex);
        let shape = recs[1].shape().unwrap();
        assert_eq!(shape.target_kind, "Event");
        assert_eq!(shape.requirements.len(), 2);
        let f = recs[2].formula().unwrap();
        assert_eq!(f.to_string(), "period >= 1 && period <= 1000");
    }

    #[test]
    fn unknown_kind() {
        let rules = Channel1Rules {
            ranges: vec![RangeRule {
                node: "Nope".into(),
                attribute: "x".into(),
                min: None,
                max: Some(Rat::int(1)),
            }],
            ..Channel1Rules::default()
        };
        assert_eq!(
            extract_channel1(&graph(), &rules).unwrap_err(),
            ConstraintError::UnknownKind("Nope".into())
        );
    }
}
