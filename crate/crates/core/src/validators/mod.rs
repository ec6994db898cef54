//! Post-hoc validation of finished artifacts.
//!
//! [`shape`] checks reference and attribute requirements over the element
//! graph projected from an artifact; [`logic`] decides linear constraints
//! over attribute values and returns a model or a minimal unsatisfiable
//! core as its certificate.

pub mod artifact;
pub mod logic;
pub mod shape;

use std::collections::BTreeMap;

pub use artifact::{ArtifactError, ArtifactGraph, Element, ProjectionRules, Reference};
pub use logic::{
    check_certificate, decide, minimize_unsat_core, validate_logic, Cmp, Conjunct, Decision,
    LinearFormula, LogicError, LogicTrace, Outcome, Rat,
};
pub use shape::{validate_semantic, Requirement, SemTrace, SemViolation, Shape};

use crate::clock::LogicalClock;

/// Numeric attributes of `element` for the formula's variables.
pub fn bindings_for(formula: &LinearFormula, element: &Element) -> BTreeMap<String, Rat> {
    formula
        .variables
        .iter()
        .filter_map(|v| {
            let value = element.attrs.get(v)?;
            Some((v.clone(), Rat::from_json(value)?))
        })
        .collect()
}

/// Check every formula against the artifact: per element of its target
/// kind, or once with all variables free when it has none.
///
/// A per-element formula whose variables are missing from an element (and
/// not declared free) fails for that element with an empty core.
pub fn validate_formulas(
    graph: &ArtifactGraph,
    formulas: &[LinearFormula],
    clock: &LogicalClock,
) -> Result<Vec<LogicTrace>, LogicError> {
    let mut out = Vec::new();
    for f in formulas {
        out.extend(validate_formula(graph, f, None, clock)?);
    }
    Ok(out)
}

/// Traces for one formula, restricted to `only` elements when given.
pub fn validate_formula(
    graph: &ArtifactGraph,
    formula: &LinearFormula,
    only: Option<&[String]>,
    clock: &LogicalClock,
) -> Result<Vec<LogicTrace>, LogicError> {
    let Some(kind) = &formula.target_kind else {
        let mut free = formula.clone();
        free.free = formula.variables.clone();
        let mut t = validate_logic(&free, &BTreeMap::new(), None, clock)?;
        t.formula_id = formula.id.clone();
        return Ok(vec![t]);
    };
    let mut out = Vec::new();
    for e in graph.of_kind(kind) {
        if only.is_some_and(|ids| !ids.contains(&e.id)) {
            continue;
        }
        let bindings = bindings_for(formula, e);
        match validate_logic(formula, &bindings, Some(&e.id), clock) {
            Ok(t) => out.push(t),
            Err(LogicError::UnboundVariable(v)) => {
                let started = clock.tick();
                out.push(LogicTrace {
                    formula_id: formula.id.clone(),
                    element_id: Some(e.id.clone()),
                    bindings,
                    outcome: Outcome::Unsat {
                        core: vec![format!("unbound:{v}")],
                    },
                    started,
                    finished: clock.tick(),
                    pass: false,
                });
            }
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}
