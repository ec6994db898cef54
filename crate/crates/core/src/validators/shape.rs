//! Shape constraints over artifact graphs.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::{LogicalClock, Timestamp};
use crate::graph::SourceRef;

use super::artifact::{ArtifactGraph, Element};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Requirement {
    /// Every target of `role` exists and has kind `dst_kind`; at least one
    /// target is present.
    RefExists { role: String, dst_kind: String },
    /// The number of targets of `role` lies in `[min, max]`.
    Cardinality {
        role: String,
        min: u32,
        #[serde(default)]
        max: Option<u32>,
    },
    AttrPresent { name: String },
    /// When the attribute is present its value is one of `allowed`.
    AttrEnum { name: String, allowed: Vec<Value> },
}

impl Requirement {
    /// The role or attribute the requirement talks about.
    pub fn subject(&self) -> &str {
        match self {
            Requirement::RefExists { role, .. } | Requirement::Cardinality { role, .. } => role,
            Requirement::AttrPresent { name } | Requirement::AttrEnum { name, .. } => name,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Requirement::RefExists { role, dst_kind } => {
                format!("{role} references an existing {dst_kind}")
            }
            Requirement::Cardinality { role, min, max } => match max {
                Some(max) => format!("{role} has between {min} and {max} targets"),
                None => format!("{role} has at least {min} targets"),
            },
            Requirement::AttrPresent { name } => format!("attribute {name} is present"),
            Requirement::AttrEnum { name, allowed } => {
                let allowed: Vec<String> = allowed.iter().map(Value::to_string).collect();
                format!("attribute {name} is one of {}", allowed.join(", "))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Shape {
    pub id: String,
    pub target_kind: String,
    pub requirements: Vec<Requirement>,
    #[serde(default)]
    pub provenance: Vec<SourceRef>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("shape {shape}: {message}")]
pub struct ShapeError {
    pub shape: String,
    pub message: String,
}

impl Shape {
    pub fn check_well_formed(&self) -> Result<(), ShapeError> {
        for r in &self.requirements {
            if let Requirement::Cardinality { min, max: Some(max), .. } = r {
                if min > max {
                    return Err(ShapeError {
                        shape: self.id.clone(),
                        message: format!("cardinality min {min} exceeds max {max}"),
                    });
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemViolation {
    pub shape_id: String,
    pub element_id: String,
    /// `element-id/role-or-attr`.
    pub path: String,
    pub expected: String,
    pub requirement: Requirement,
    pub provenance: Vec<SourceRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SemTrace {
    pub shapes_checked: Vec<String>,
    /// Number of (element, requirement) pairs evaluated.
    pub evaluated: usize,
    pub violations: Vec<SemViolation>,
    pub started: Timestamp,
    pub finished: Timestamp,
    pub pass: bool,
}

fn violation(shape: &Shape, e: &Element, req: &Requirement, expected: String) -> SemViolation {
    SemViolation {
        shape_id: shape.id.clone(),
        element_id: e.id.clone(),
        path: format!("{}/{}", e.id, req.subject()),
        expected,
        requirement: req.clone(),
        provenance: shape.provenance.clone(),
    }
}

pub fn check_requirement(
    graph: &ArtifactGraph,
    shape: &Shape,
    e: &Element,
    req: &Requirement,
    out: &mut Vec<SemViolation>,
) {
    match req {
        Requirement::RefExists { role, dst_kind } => {
            let targets = e.refs.get(role).map_or(&[][..], |s| s.targets.as_slice());
            if targets.is_empty() {
                out.push(violation(shape, e, req, req.describe()));
            }
            for t in targets {
                match graph.element(t) {
                    None => out.push(violation(
                        shape,
                        e,
                        req,
                        format!("{}; {t:?} does not exist", req.describe()),
                    )),
                    Some(d) if &d.kind != dst_kind => out.push(violation(
                        shape,
                        e,
                        req,
                        format!("{}; {t:?} is a {}", req.describe(), d.kind),
                    )),
                    Some(_) => {}
                }
            }
        }
        Requirement::Cardinality { role, min, max } => {
            let n = e.refs.get(role).map_or(0, |s| s.targets.len());
            if n < *min as usize || max.is_some_and(|m| n > m as usize) {
                out.push(violation(shape, e, req, format!("{}; found {n}", req.describe())));
            }
        }
        Requirement::AttrPresent { name } => {
            if e.attrs.get(name).is_none_or(Value::is_null) {
                out.push(violation(shape, e, req, req.describe()));
            }
        }
        Requirement::AttrEnum { name, allowed } => {
            if let Some(v) = e.attrs.get(name) {
                if !allowed.contains(v) {
                    out.push(violation(shape, e, req, format!("{}; found {v}", req.describe())));
                }
            }
        }
    }
}

/// Evaluate `shape` on the given elements, or on every element of its
/// target kind when `only` is `None`. Returns the number of pairs evaluated.
pub fn check_shape(
    graph: &ArtifactGraph,
    shape: &Shape,
    only: Option<&[String]>,
    out: &mut Vec<SemViolation>,
) -> usize {
    let mut evaluated = 0;
    for e in graph.of_kind(&shape.target_kind) {
        if only.is_some_and(|ids| !ids.contains(&e.id)) {
            continue;
        }
        for req in &shape.requirements {
            evaluated += 1;
            check_requirement(graph, shape, e, req, out);
        }
    }
    evaluated
}

pub fn validate_semantic(graph: &ArtifactGraph, shapes: &[Shape], clock: &LogicalClock) -> SemTrace {
    let started = clock.tick();
    let mut violations = Vec::new();
    let mut evaluated = 0;
    for s in shapes {
        evaluated += check_shape(graph, s, None, &mut violations);
    }
    let finished = clock.tick();
    SemTrace {
        shapes_checked: shapes.iter().map(|s| s.id.clone()).collect(),
        evaluated,
        pass: violations.is_empty(),
        violations,
        started,
        finished,
    }
}
