//! Admission of externally proposed constraint candidates.
//!
//! A candidate names its target in free text. It is admitted only when the
//! name aligns to a model node and the constraint is compatible with what
//! the model already requires of that node; otherwise it is quarantined.
//! Nothing is silently dropped.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clock::LogicalClock;
use crate::graph::{align_candidate, Disposition, MissPolicy, SourceRef, TypedGraph, DEFAULT_THETA_LINK};
use crate::validators::logic::{decide, Decision, DEFAULT_FM_CAP};
use crate::validators::{
    validate_semantic, ArtifactGraph, Conjunct, Element, LinearFormula, LogicError, Rat,
    Requirement, Shape,
};

use super::store::IcmStore;
use super::{Anchor, ConstraintBody, ConstraintError, ConstraintRecord, Family, Status};

/// Largest witness artifact built by the semantic compatibility check.
pub const WITNESS_ELEMENT_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub target: String,
    pub family: Family,
    /// A formula string for logical candidates; for semantic candidates an
    /// object with a `requirements` list (or the list itself).
    pub body: Value,
    pub confidence: f64,
    pub doc_id: String,
    pub para: Value,
    #[serde(default)]
    pub defines: Vec<String>,
}

/// Parsed candidate body, before a target kind is known.
#[derive(Debug, Clone, PartialEq)]
pub enum CandidateBody {
    Semantic(Vec<Requirement>),
    Logical(LinearFormula),
}

impl Candidate {
    pub fn parse_body(&self) -> Result<CandidateBody, ConstraintError> {
        let bad = |m: String| ConstraintError::MalformedCandidate(format!("{}: {m}", self.target));
        match self.family {
            Family::Logical => {
                let text = match &self.body {
                    Value::String(s) => s.as_str(),
                    Value::Object(o) => o
                        .get("formula")
                        .and_then(Value::as_str)
                        .ok_or_else(|| bad("logical body needs a formula string".into()))?,
                    _ => return Err(bad("logical body must be a formula string".into())),
                };
                LinearFormula::parse("", text)
                    .map(CandidateBody::Logical)
                    .map_err(|e| bad(e.to_string()))
            }
            Family::Semantic => {
                let list = match &self.body {
                    Value::Object(o) => o
                        .get("requirements")
                        .cloned()
                        .ok_or_else(|| bad("semantic body needs requirements".into()))?,
                    v @ Value::Array(_) => v.clone(),
                    _ => return Err(bad("semantic body must be a shape object".into())),
                };
                let reqs: Vec<Requirement> =
                    serde_json::from_value(list).map_err(|e| bad(e.to_string()))?;
                if reqs.is_empty() {
                    return Err(bad("shape has no requirements".into()));
                }
                Ok(CandidateBody::Semantic(reqs))
            }
            Family::Structural => Err(bad("structural candidates are not accepted".into())),
        }
    }

    fn check(&self) -> Result<CandidateBody, ConstraintError> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(ConstraintError::MalformedCandidate(format!(
                "{}: confidence {} outside [0, 1]",
                self.target, self.confidence
            )));
        }
        self.parse_body()
    }

    pub fn source_ref(&self) -> SourceRef {
        let para = match &self.para {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        SourceRef {
            source_id: self.doc_id.clone(),
            locator: para,
        }
    }

    fn body_for(&self, parsed: CandidateBody, kind: &str) -> ConstraintBody {
        match parsed {
            CandidateBody::Semantic(requirements) => ConstraintBody::Semantic {
                shape: Shape {
                    id: String::new(),
                    target_kind: kind.to_owned(),
                    requirements,
                    provenance: vec![self.source_ref()],
                },
            },
            CandidateBody::Logical(mut formula) => {
                formula.target_kind = Some(kind.to_owned());
                formula.provenance = vec![self.source_ref()];
                ConstraintBody::Logical { formula }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmissionOptions {
    pub theta_link: f64,
    pub miss: MissPolicy,
}

impl Default for AdmissionOptions {
    fn default() -> Self {
        AdmissionOptions {
            theta_link: DEFAULT_THETA_LINK,
            miss: MissPolicy::Quarantine,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Witness {
    /// Artifact text satisfying the shapes.
    Artifact(String),
    /// Assignment satisfying the formulas.
    Model(BTreeMap<String, Rat>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Compatibility {
    Compatible(Witness),
    Incompatible(String),
    /// The bounded search gave up.
    Unknown(String),
}

/// Decide whether some artifact satisfies `c` together with the context
/// records that govern the same element kind.
pub fn check_semantic_compatibility(
    c: &ConstraintRecord,
    graph: &TypedGraph,
    context: &[ConstraintRecord],
) -> Compatibility {
    match &c.body {
        ConstraintBody::Logical { formula } => logical_compatibility(formula, context),
        ConstraintBody::Semantic { shape } => semantic_compatibility(shape, graph, context),
        // Structural bodies compile or they do not; there is nothing to pair.
        ConstraintBody::Structural { .. } => Compatibility::Compatible(Witness::Model(BTreeMap::new())),
    }
}

fn logical_compatibility(formula: &LinearFormula, context: &[ConstraintRecord]) -> Compatibility {
    let mut system: Vec<Conjunct> = Vec::new();
    let mut push = |f: &LinearFormula, tag: &str| {
        for c in &f.conjuncts {
            let mut c = c.clone();
            c.id = format!("{tag}/{}", c.id);
            system.push(c);
        }
    };
    push(formula, "candidate");
    for r in context.iter().filter(|r| r.is_active()) {
        if let Some(f) = r.formula() {
            if f.target_kind == formula.target_kind {
                push(f, &r.id);
            }
        }
    }
    let refs: Vec<&Conjunct> = system.iter().collect();
    match decide(&refs, DEFAULT_FM_CAP) {
        Ok(Decision::Sat(model)) => Compatibility::Compatible(Witness::Model(model)),
        Ok(Decision::Unsat) => {
            Compatibility::Incompatible("no assignment satisfies the formula with the model's ranges".into())
        }
        Err(LogicError::UnboundedGrowth { cap }) => {
            Compatibility::Unknown(format!("elimination exceeded {cap} constraints"))
        }
        Err(e) => Compatibility::Unknown(e.to_string()),
    }
}

fn placeholder(ty: Option<&str>) -> Value {
    match ty {
        Some("string") => Value::from(""),
        Some("boolean") => Value::from(false),
        _ => Value::from(0),
    }
}

fn semantic_compatibility(shape: &Shape, graph: &TypedGraph, context: &[ConstraintRecord]) -> Compatibility {
    let kind = &shape.target_kind;
    let Some(anchor) = graph.nodes().iter().find(|n| &n.name == kind) else {
        return Compatibility::Incompatible(format!("kind {kind} is absent from the model"));
    };
    let mut shapes = vec![shape.clone()];
    for r in context.iter().filter(|r| r.is_active()) {
        if let Some(s) = r.shape() {
            if &s.target_kind == kind {
                shapes.push(s.clone());
            }
        }
    }

    struct RoleNeed {
        lo: u32,
        hi: Option<u32>,
        dst: Option<String>,
    }
    let mut roles: BTreeMap<String, RoleNeed> = BTreeMap::new();
    let mut present: Vec<String> = Vec::new();
    let mut enums: BTreeMap<String, Vec<Value>> = BTreeMap::new();
    for s in &shapes {
        for req in &s.requirements {
            match req {
                Requirement::RefExists { role, dst_kind } => {
                    let need = roles.entry(role.clone()).or_insert(RoleNeed { lo: 0, hi: None, dst: None });
                    need.lo = need.lo.max(1);
                    match &need.dst {
                        Some(d) if d != dst_kind => {
                            return Compatibility::Incompatible(format!(
                                "role {role} must reference both {d} and {dst_kind}"
                            ))
                        }
                        _ => need.dst = Some(dst_kind.clone()),
                    }
                }
                Requirement::Cardinality { role, min, max } => {
                    let need = roles.entry(role.clone()).or_insert(RoleNeed { lo: 0, hi: None, dst: None });
                    need.lo = need.lo.max(*min);
                    need.hi = match (need.hi, max) {
                        (Some(a), Some(b)) => Some(a.min(*b)),
                        (a, b) => a.or(*b),
                    };
                }
                Requirement::AttrPresent { name } => present.push(name.clone()),
                Requirement::AttrEnum { name, allowed } => match enums.get_mut(name) {
                    Some(cur) => cur.retain(|v| allowed.contains(v)),
                    None => {
                        enums.insert(name.clone(), allowed.clone());
                    }
                },
            }
        }
    }

    let mut elements = vec![Element {
        id: "w0".into(),
        kind: kind.clone(),
        attrs: Default::default(),
        refs: Default::default(),
    }];
    for name in &present {
        let value = match enums.get(name) {
            Some(allowed) => match allowed.first() {
                Some(v) => v.clone(),
                None => {
                    return Compatibility::Incompatible(format!("attribute {name} has no admissible value"))
                }
            },
            None => placeholder(anchor.attributes.get(name).map(String::as_str)),
        };
        elements[0].attrs.insert(name.clone(), value);
    }
    let mut targets = Vec::new();
    for (role, need) in &roles {
        if need.hi.is_some_and(|h| need.lo > h) {
            return Compatibility::Incompatible(format!("role {role} cannot meet its cardinality bounds"));
        }
        let dst = need.dst.clone().or_else(|| {
            graph
                .outgoing(&anchor.id)
                .find(|e| &e.kind == role)
                .and_then(|e| graph.node(&e.dst))
                .map(|n| n.name.clone())
        });
        let dst = dst.unwrap_or_else(|| kind.clone());
        if !graph.nodes().iter().any(|n| n.name == dst) {
            return Compatibility::Incompatible(format!("kind {dst} is absent from the model"));
        }
        let mut ids = Vec::new();
        for _ in 0..need.lo {
            if elements.len() + targets.len() >= WITNESS_ELEMENT_LIMIT {
                return Compatibility::Unknown(format!(
                    "witness needs more than {WITNESS_ELEMENT_LIMIT} elements"
                ));
            }
            let id = format!("w{}", elements.len() + targets.len());
            targets.push(Element {
                id: id.clone(),
                kind: dst.clone(),
                attrs: Default::default(),
                refs: Default::default(),
            });
            ids.push(id);
        }
        if !ids.is_empty() {
            elements[0].refs.insert(
                role.clone(),
                crate::validators::artifact::RefSlot {
                    many: ids.len() > 1,
                    targets: ids,
                },
            );
        }
    }
    elements.extend(targets);
    let witness = ArtifactGraph::from_elements(elements);
    let trace = validate_semantic(&witness, &shapes, &LogicalClock::default());
    if trace.pass {
        Compatibility::Compatible(Witness::Artifact(witness.to_text()))
    } else {
        Compatibility::Unknown("constructed witness does not satisfy every shape".into())
    }
}

/// Records already governing the node, from the store.
fn context_for(icm: &IcmStore, node: &str) -> Vec<ConstraintRecord> {
    icm.records()
        .into_iter()
        .filter(|r| r.anchor.node() == Some(node) && r.is_active())
        .collect()
}

pub fn admit_candidate(
    candidate: &Candidate,
    graph: &TypedGraph,
    icm: &IcmStore,
    opts: &AdmissionOptions,
) -> Result<ConstraintRecord, ConstraintError> {
    let parsed = candidate.check()?;
    let alignment = align_candidate(&candidate.target, &candidate.target, graph, opts.theta_link, opts.miss);
    let prov = vec![candidate.source_ref()];
    let record = match (&alignment.disposition, &alignment.matched) {
        (Disposition::Aligned, Some(node_id)) => {
            let node = graph.node(node_id).expect("aligned to an existing node");
            let body = candidate.body_for(parsed, &node.name);
            body.check()?;
            let mut rec =
                ConstraintRecord::new(body, Anchor::Node(node_id.clone()), prov, Status::Admitted)?;
            rec.defines = candidate.defines.clone();
            match check_semantic_compatibility(&rec, graph, &context_for(icm, node_id)) {
                Compatibility::Compatible(_) => rec,
                Compatibility::Incompatible(why) => rec.quarantined(format!("incompatible: {why}")),
                Compatibility::Unknown(why) => rec.quarantined(format!("unknown: {why}")),
            }
        }
        (disposition, _) => {
            let body = candidate.body_for(parsed, &candidate.target);
            body.check()?;
            let mut rec = ConstraintRecord::new(body, Anchor::Abstract, prov, Status::Quarantined)?;
            rec.defines = candidate.defines.clone();
            let what = if *disposition == Disposition::NewNode {
                "new node proposed"
            } else {
                "no anchor"
            };
            rec.quarantined(format!("{what}: best alignment score {:.3}", alignment.score))
        }
    };
    icm.put(&record).map_err(|e| ConstraintError::InvalidBody(e.to_string()))?;
    Ok(record)
}

/// A candidate dropped because it contradicts an earlier one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    /// Index of the dropped candidate in the request.
    pub dropped: usize,
    pub kept_id: String,
    pub reason: String,
}

/// Turn a request's candidates into ephemeral records. Logical candidates
/// that are jointly unsatisfiable with an earlier kept candidate on the same
/// target are dropped.
pub fn synthesize_dynamic(
    request: &[Candidate],
    graph: &TypedGraph,
    opts: &AdmissionOptions,
) -> Result<(Vec<ConstraintRecord>, Vec<Conflict>), ConstraintError> {
    let mut kept: Vec<ConstraintRecord> = Vec::new();
    let mut conflicts = Vec::new();
    for (i, cand) in request.iter().enumerate() {
        let parsed = cand.check()?;
        let alignment = align_candidate(&cand.target, &cand.target, graph, opts.theta_link, opts.miss);
        let (anchor, kind) = match &alignment.matched {
            Some(id) if alignment.disposition == Disposition::Aligned => {
                (Anchor::Node(id.clone()), graph.node(id).expect("aligned node").name.clone())
            }
            _ => (Anchor::Abstract, cand.target.clone()),
        };
        let body = cand.body_for(parsed, &kind);
        body.check()?;
        let mut rec = ConstraintRecord::new(body, anchor, vec![cand.source_ref()], Status::Ephemeral)?;
        rec.defines = cand.defines.clone();
        if let Some(f) = rec.formula() {
            let clash = kept.iter().find(|k| {
                k.formula().is_some_and(|g| {
                    g.target_kind == f.target_kind && jointly_unsat(f, g)
                })
            });
            if let Some(k) = clash {
                log::info!("dropping candidate {i} ({}): conflicts with {}", cand.target, k.id);
                conflicts.push(Conflict {
                    dropped: i,
                    kept_id: k.id.clone(),
                    reason: format!("{f} contradicts {}", k.formula().expect("logical")),
                });
                continue;
            }
        }
        kept.push(rec);
    }
    Ok((kept, conflicts))
}

fn jointly_unsat(a: &LinearFormula, b: &LinearFormula) -> bool {
    let all: Vec<&Conjunct> = a.conjuncts.iter().chain(&b.conjuncts).collect();
    matches!(decide(&all, DEFAULT_FM_CAP), Ok(Decision::Unsat))
}
