//! Evidence-driven repair of validated artifacts.
//!
//! Violations are read off a bundle's semantic and logic traces, ordered
//! by the dependency lattice of the constraints behind them, and handed to
//! a [`Patcher`]. Each accepted patch must keep the re-serialized artifact
//! inside the structural automaton; the edited elements are revalidated
//! locally, and after every sweep the whole artifact is revalidated and a
//! new bundle version is sealed. Whatever the patcher cannot fix comes back
//! as manual-review tickets.

mod patcher;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::clock::LogicalClock;
use crate::compiler::PrefixDfa;
use crate::constraints::{ConstraintRecord, DependencyLattice, IcmStore, Layer, StoreError};
use crate::decoder::{check_structure, AuditTrail};
use crate::digest::Digest;
use crate::evidence::{enrich, seal, validate_layers, ComposedTrace, EvidenceBundle, LayerError};
use crate::validators::shape::check_shape;
use crate::validators::{
    validate_formula, ArtifactError, ArtifactGraph, LinearFormula,
    LogicError, LogicTrace, Outcome, ProjectionRules, Requirement, SemViolation, Shape,
};

pub use patcher::DeterministicPatcher;

/// Where a violation sits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Locator {
    /// An element and the `element/subject` path inside it.
    Element { element: String, path: String },
    /// The unsat core of one formula instance.
    Core {
        formula: String,
        element: Option<String>,
        conjuncts: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub id: String,
    pub layer: Layer,
    pub locator: Locator,
    pub expected: String,
    /// Id of the constraint record (shape or formula) that was violated.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requirement: Option<Requirement>,
    pub auto_repairable: bool,
}

impl Violation {
    pub fn element(&self) -> Option<&str> {
        match &self.locator {
            Locator::Element { element, .. } => Some(element),
            Locator::Core { element, .. } => element.as_deref(),
        }
    }

    /// Violations describe the same defect when they share constraint,
    /// element and (for shapes) requirement.
    fn same_defect(&self, other: &Violation) -> bool {
        self.provenance == other.provenance
            && self.element() == other.element()
            && self.requirement == other.requirement
    }
}

fn sem_violation(v: &SemViolation) -> Violation {
    Violation {
        id: format!("sem:{}:{}", v.shape_id, v.path),
        layer: Layer::L2Sem,
        locator: Locator::Element {
            element: v.element_id.clone(),
            path: v.path.clone(),
        },
        expected: v.expected.clone(),
        provenance: v.shape_id.clone(),
        requirement: Some(v.requirement.clone()),
        auto_repairable: false,
    }
}

fn logic_violation(t: &LogicTrace) -> Option<Violation> {
    let Outcome::Unsat { core } = &t.outcome else {
        return None;
    };
    let scope = t.element_id.as_deref().unwrap_or("*");
    Some(Violation {
        id: format!("logic:{}:{scope}", t.formula_id),
        layer: Layer::L2Logic,
        locator: Locator::Core {
            formula: t.formula_id.clone(),
            element: t.element_id.clone(),
            conjuncts: core.clone(),
        },
        expected: format!("{} holds for {scope}; core {}", t.formula_id, core.join(", ")),
        provenance: t.formula_id.clone(),
        requirement: None,
        auto_repairable: false,
    })
}

/// Make ids unique by suffixing repeats with `#n`, then set the
/// capability flag.
fn finish(mut out: Vec<Violation>, patcher: Option<&dyn Patcher>) -> Vec<Violation> {
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();
    for v in &mut out {
        let n = seen.entry(v.id.clone()).or_insert(0);
        *n += 1;
        if *n > 1 {
            v.id = format!("{}#{n}", v.id);
        }
        v.auto_repairable = patcher.is_some_and(|p| p.capable(v));
    }
    out
}

/// One violation per semantic finding and per unsat formula instance.
pub fn extract_violations(bundle: &EvidenceBundle, patcher: Option<&dyn Patcher>) -> Vec<Violation> {
    let mut out = Vec::new();
    if let Some(sem) = &bundle.evidence.semantic {
        out.extend(sem.violations.iter().map(sem_violation));
    }
    if let Some(logic) = &bundle.evidence.logic {
        out.extend(logic.traces.iter().filter_map(logic_violation));
    }
    finish(out, patcher)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairPlan {
    pub order: Vec<String>,
    /// Dependency edges `(before, after)` between violation ids.
    pub edges: Vec<(String, String)>,
    /// Set when the edges formed a cycle; `order` then falls back to
    /// layer then id.
    pub cycle: Option<Vec<String>>,
}

/// Order violations: a violation comes before another when its constraint
/// precedes the other's in the lattice or sits on an earlier layer. Ties
/// go by id.
pub fn plan_repairs(violations: &[Violation], lattice: &DependencyLattice) -> RepairPlan {
    let mut edges = Vec::new();
    for a in violations {
        for b in violations {
            if a.id == b.id || a.provenance == b.provenance {
                continue;
            }
            if a.layer < b.layer || lattice.precedes(&a.provenance, &b.provenance) {
                edges.push((a.id.clone(), b.id.clone()));
            }
        }
    }
    edges.sort();
    edges.dedup();

    let key: BTreeMap<&str, (Layer, &str)> =
        violations.iter().map(|v| (v.id.as_str(), (v.layer, v.id.as_str()))).collect();
    let mut indeg: BTreeMap<&str, usize> = key.keys().map(|k| (*k, 0)).collect();
    for (_, b) in &edges {
        *indeg.get_mut(b.as_str()).expect("edge endpoints are violations") += 1;
    }
    let mut ready: BTreeSet<(Layer, &str)> = indeg.iter().filter(|(_, d)| **d == 0).map(|(k, _)| key[k]).collect();
    let mut order = Vec::with_capacity(violations.len());
    while let Some(first) = ready.pop_first() {
        order.push(first.1.to_owned());
        for (a, b) in &edges {
            if a == first.1 {
                let d = indeg.get_mut(b.as_str()).expect("known");
                *d -= 1;
                if *d == 0 {
                    ready.insert(key[b.as_str()]);
                }
            }
        }
    }
    if order.len() == violations.len() {
        return RepairPlan { order, edges, cycle: None };
    }
    let done: BTreeSet<&String> = order.iter().collect();
    let mut cycle: Vec<String> = key.keys().map(|k| k.to_string()).filter(|k| !done.contains(k)).collect();
    cycle.sort();
    log::warn!("violation dependencies form a cycle through {cycle:?}; using layer order");
    let mut fallback: Vec<(Layer, &str)> = key.values().copied().collect();
    fallback.sort();
    RepairPlan {
        order: fallback.into_iter().map(|(_, id)| id.to_owned()).collect(),
        edges,
        cycle: Some(cycle),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    /// Ids of elements the patch changed.
    pub edited: Vec<String>,
    pub description: String,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum PatchError {
    #[error("no unique {kind} to bind to (candidates: {candidates:?})")]
    NoUniqueTarget { kind: String, candidates: Vec<String> },
    #[error("not auto-repairable: {0}")]
    NotAutoRepairable(String),
    #[error("cannot apply patch: {0}")]
    Unresolvable(String),
}

/// The pluggable patching seam.
pub trait Patcher {
    fn name(&self) -> &str;
    /// Whether this patcher handles the violation's class at all.
    fn capable(&self, v: &Violation) -> bool;
    fn patch(&self, graph: &mut ArtifactGraph, v: &Violation, formulas: &[LinearFormula]) -> Result<Patch, PatchError>;
}

/// Apply `patcher` to a copy of `graph`.
pub fn apply_patch(
    graph: &ArtifactGraph,
    v: &Violation,
    patcher: &dyn Patcher,
    formulas: &[LinearFormula],
) -> Result<(ArtifactGraph, Patch), PatchError> {
    if !patcher.capable(v) {
        return Err(PatchError::NotAutoRepairable(format!(
            "{} has no rule for {}",
            patcher.name(),
            v.expected
        )));
    }
    let mut out = graph.clone();
    let patch = patcher.patch(&mut out, v, formulas)?;
    Ok((out, patch))
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Revalidation {
    pub residuals: Vec<Violation>,
    /// Shapes and formulas that were re-run.
    pub shapes_run: Vec<String>,
    pub formulas_run: Vec<String>,
}

/// Re-run only the shapes and formulas that target the kinds of the edited
/// elements, and only on those elements.
pub fn local_revalidate(
    graph: &ArtifactGraph,
    edited: &[String],
    shapes: &[Shape],
    formulas: &[LinearFormula],
    clock: &LogicalClock,
) -> Result<Revalidation, LogicError> {
    let kinds: BTreeSet<&str> = edited
        .iter()
        .filter_map(|id| graph.element(id))
        .map(|e| e.kind.as_str())
        .collect();
    let mut out = Revalidation::default();
    let mut sem = Vec::new();
    for s in shapes.iter().filter(|s| kinds.contains(s.target_kind.as_str())) {
        out.shapes_run.push(s.id.clone());
        check_shape(graph, s, Some(edited), &mut sem);
    }
    let mut found: Vec<Violation> = sem.iter().map(sem_violation).collect();
    for f in formulas {
        if !f.target_kind.as_deref().is_some_and(|k| kinds.contains(k)) {
            continue;
        }
        out.formulas_run.push(f.id.clone());
        found.extend(validate_formula(graph, f, Some(edited), clock)?.iter().filter_map(logic_violation));
    }
    out.residuals = finish(found, None);
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum RepairError {
    #[error("no constraint record {0}")]
    UnknownProvenance(String),
    #[error("max_iterations must be at least 1")]
    ZeroIterations,
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Logic(#[from] LogicError),
    #[error(transparent)]
    Store(StoreError),
    #[error(transparent)]
    Layer(#[from] LayerError),
    #[error("cannot write ticket {path}: {source}")]
    Ticket { path: PathBuf, source: io::Error },
}

/// Persist the record as promoted so later generation contexts list it
/// first. Records not yet in the store are looked up in `records`.
pub fn promote_constraint(
    provenance: &str,
    store: &IcmStore,
    records: &[ConstraintRecord],
) -> Result<ConstraintRecord, RepairError> {
    let fallback = records.iter().find(|r| r.id == provenance);
    store.promote(provenance, fallback).map_err(|e| match e {
        StoreError::UnknownRecord(id) => RepairError::UnknownProvenance(id),
        other => RepairError::Store(other),
    })
}

/// A residual handed to a human.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewTicket {
    pub violation: String,
    pub locator: Locator,
    pub expected: String,
    pub provenance: String,
    pub reason: String,
    pub suggested_candidates: Vec<String>,
}

impl ReviewTicket {
    fn new(v: &Violation, reason: impl Into<String>, suggested: Vec<String>) -> Self {
        ReviewTicket {
            violation: v.id.clone(),
            locator: v.locator.clone(),
            expected: v.expected.clone(),
            provenance: v.provenance.clone(),
            reason: reason.into(),
            suggested_candidates: suggested,
        }
    }
}

/// One JSON file per ticket, named by index and violation id.
pub fn write_tickets(dir: &Path, tickets: &[ReviewTicket]) -> Result<Vec<PathBuf>, RepairError> {
    let err = |path: &Path| {
        let path = path.to_owned();
        move |source| RepairError::Ticket { path, source }
    };
    fs::create_dir_all(dir).map_err(err(dir))?;
    let mut out = Vec::new();
    for (i, t) in tickets.iter().enumerate() {
        let safe: String = t
            .violation
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
            .collect();
        let path = dir.join(format!("{:03}-{safe}.json", i + 1));
        let text = serde_json::to_string_pretty(t).expect("ticket serializes");
        fs::write(&path, text + "\n").map_err(err(&path))?;
        out.push(path);
    }
    Ok(out)
}

/// Inputs shared by every iteration of the loop.
pub struct RepairContext<'a> {
    pub dfa: &'a PrefixDfa,
    pub projection: &'a ProjectionRules,
    pub shapes: &'a [Shape],
    pub formulas: &'a [LinearFormula],
    pub lattice: &'a DependencyLattice,
    /// Records behind the shapes and formulas, for promotion.
    pub records: &'a [ConstraintRecord],
    pub store: Option<&'a IcmStore>,
    pub clock: &'a LogicalClock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AppliedPatch {
    pub iteration: usize,
    pub violation: String,
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RepairStatus {
    Repaired,
    ManualReview,
}

#[derive(Debug, Clone)]
pub struct RepairReport {
    pub status: RepairStatus,
    /// The artifact after all accepted patches.
    pub artifact: Vec<u8>,
    /// One sealed bundle per sweep, oldest first. Each names its
    /// predecessor's address.
    pub bundles: Vec<EvidenceBundle>,
    pub iterations: usize,
    pub applied: Vec<AppliedPatch>,
    pub promoted: Vec<String>,
    pub tickets: Vec<ReviewTicket>,
}

impl RepairReport {
    pub fn final_bundle(&self) -> Option<&EvidenceBundle> {
        self.bundles.last()
    }
}

/// Validate `artifact` on all three layers and compose the traces.
pub fn full_validation(
    artifact: &[u8],
    ctx: &RepairContext<'_>,
) -> Result<ComposedTrace, RepairError> {
    let st = check_structure(ctx.dfa, artifact, ctx.clock);
    Ok(validate_layers(st, artifact, ctx.projection, ctx.shapes, ctx.formulas, ctx.clock)?)
}

/// Plan, patch and revalidate until the bundle passes, nothing more can
/// be patched, or `max_iterations` sweeps have run. A sweep attempts every
/// planned violation before residuals are reported.
pub fn run_repair_loop(
    artifact: &[u8],
    bundle: &EvidenceBundle,
    ctx: &RepairContext<'_>,
    patcher: &dyn Patcher,
    max_iterations: usize,
) -> Result<RepairReport, RepairError> {
    if max_iterations == 0 {
        return Err(RepairError::ZeroIterations);
    }
    let mut report = RepairReport {
        status: RepairStatus::ManualReview,
        artifact: artifact.to_vec(),
        bundles: Vec::new(),
        iterations: 0,
        applied: Vec::new(),
        promoted: Vec::new(),
        tickets: Vec::new(),
    };
    if bundle.verdict() {
        report.status = RepairStatus::Repaired;
        return Ok(report);
    }
    let mut graph = ArtifactGraph::project(artifact, ctx.projection)?;
    let mut current = bundle.clone();
    let mut violations = extract_violations(bundle, Some(patcher));

    while report.iterations < max_iterations {
        report.iterations += 1;
        let iteration = report.iterations;
        let plan = plan_repairs(&violations, ctx.lattice);
        let by_id: BTreeMap<&str, &Violation> = violations.iter().map(|v| (v.id.as_str(), v)).collect();
        let mut tickets = Vec::new();
        for id in &plan.order {
            let v = by_id[id.as_str()];
            if let Some(store) = ctx.store {
                match promote_constraint(&v.provenance, store, ctx.records) {
                    Ok(_) => {
                        if !report.promoted.contains(&v.provenance) {
                            report.promoted.push(v.provenance.clone());
                        }
                    }
                    Err(RepairError::UnknownProvenance(p)) => log::debug!("cannot promote unknown record {p}"),
                    Err(e) => return Err(e),
                }
            }
            let (patched, patch) = match apply_patch(&graph, v, patcher, ctx.formulas) {
                Ok(ok) => ok,
                Err(e) => {
                    let suggested = match &e {
                        PatchError::NoUniqueTarget { candidates, .. } => candidates.clone(),
                        _ => vec![],
                    };
                    tickets.push(ReviewTicket::new(v, e.to_string(), suggested));
                    continue;
                }
            };
            if patch.edited.is_empty() {
                continue;
            }
            if !ctx.dfa.accepts(patched.to_text().as_bytes()) {
                tickets.push(ReviewTicket::new(v, "patch would break the structural grammar", vec![]));
                continue;
            }
            let local = local_revalidate(&patched, &patch.edited, ctx.shapes, ctx.formulas, ctx.clock)?;
            if local.residuals.iter().any(|r| r.same_defect(v)) {
                tickets.push(ReviewTicket::new(v, format!("{} did not resolve it", patch.description), vec![]));
                continue;
            }
            graph = patched;
            report.applied.push(AppliedPatch {
                iteration,
                violation: v.id.clone(),
                description: patch.description,
            });
        }

        let text = if report.applied.is_empty() {
            artifact.to_vec()
        } else {
            graph.to_text().into_bytes()
        };
        let composed = full_validation(&text, ctx)?;
        let trail = AuditTrail::new(ctx.dfa.automaton_id(), current.audit.mode);
        let mut next = enrich(composed, trail).expect("trail bound to the same automaton");
        let previous = Digest::of(&current.to_canonical_bytes());
        next = current.successor(next.evidence, next.audit, previous);
        let sealed = seal(&text, next, ctx.clock.tick()).expect("fresh bundle is unsealed");
        report.artifact = text;
        report.bundles.push(sealed.clone());
        current = sealed;

        if current.verdict() {
            report.status = RepairStatus::Repaired;
            report.tickets.clear();
            return Ok(report);
        }
        violations = extract_violations(&current, Some(patcher));
        if !tickets.is_empty() {
            // Anything still open that no ticket covers yet is reported too.
            let mut extra = Vec::new();
            for v in &violations {
                let covered = tickets
                    .iter()
                    .any(|t| t.provenance == v.provenance && t.locator == v.locator);
                if !covered {
                    extra.push(ReviewTicket::new(v, "still open after the sweep", vec![]));
                }
            }
            tickets.extend(extra);
            report.tickets = tickets;
            return Ok(report);
        }
    }
    report.tickets = violations
        .iter()
        .map(|v| ReviewTicket::new(v, format!("still open after {max_iterations} iterations"), vec![]))
        .collect();
    Ok(report)
}
