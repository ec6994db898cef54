//! The built-in deterministic patcher.

use std::collections::BTreeMap;

use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde_json::Value;

use super::{Locator, Patch, PatchError, Patcher, Violation};
use crate::validators::{bindings_for, ArtifactGraph, Cmp, LinearFormula, Rat, Requirement};

/// Rebinds broken references to the unique element of the required kind
/// and clamps a single out-of-range attribute into the interval its
/// formula allows. Everything else is left for manual review.
#[derive(Debug, Clone, Copy, Default)]
pub struct DeterministicPatcher;

impl Patcher for DeterministicPatcher {
    fn name(&self) -> &str {
        "deterministic"
    }

    fn capable(&self, v: &Violation) -> bool {
        match &v.locator {
            Locator::Element { .. } => matches!(v.requirement, Some(Requirement::RefExists { .. })),
            Locator::Core { conjuncts, .. } => clamp_variable(conjuncts).is_some(),
        }
    }

    fn patch(&self, graph: &mut ArtifactGraph, v: &Violation, formulas: &[LinearFormula]) -> Result<Patch, PatchError> {
        match (&v.locator, &v.requirement) {
            (Locator::Element { element, .. }, Some(Requirement::RefExists { role, dst_kind })) => {
                rebind(graph, element, role, dst_kind)
            }
            (Locator::Core { formula, element: Some(element), conjuncts }, _) => {
                let var = clamp_variable(conjuncts)
                    .ok_or_else(|| PatchError::NotAutoRepairable("core spans several variables".into()))?;
                let f = formulas
                    .iter()
                    .find(|f| &f.id == formula)
                    .ok_or_else(|| PatchError::NotAutoRepairable(format!("formula {formula} is not available")))?;
                clamp(graph, element, f, var)
            }
            _ => Err(PatchError::NotAutoRepairable(format!("no rule for {}", v.expected))),
        }
    }
}

/// The one variable a core is about, when the core binds exactly that
/// variable and every other member mentions no other variable. Conjunct
/// ids of the formula itself are checked later against its text.
fn clamp_variable(core: &[String]) -> Option<&str> {
    let mut bound = core.iter().filter_map(|c| c.strip_prefix("bind:"));
    let var = bound.next()?;
    if bound.next().is_some() || core.iter().any(|c| c.starts_with("unbound:")) {
        return None;
    }
    Some(var)
}

fn rebind(graph: &mut ArtifactGraph, element: &str, role: &str, dst_kind: &str) -> Result<Patch, PatchError> {
    let candidates: Vec<String> = graph.of_kind(dst_kind).map(|e| e.id.clone()).collect();
    let e = graph
        .element(element)
        .ok_or_else(|| PatchError::Unresolvable(format!("element {element} is gone")))?;
    let broken: Vec<usize> = match e.refs.get(role) {
        None => vec![],
        Some(slot) => slot
            .targets
            .iter()
            .enumerate()
            .filter(|(_, t)| graph.element(t).is_none_or(|d| d.kind != dst_kind))
            .map(|(i, _)| i)
            .collect(),
    };
    let missing = e.refs.get(role).is_none_or(|s| s.targets.is_empty());
    if broken.is_empty() && !missing {
        return Ok(Patch {
            edited: vec![],
            description: format!("{element}/{role} already resolves"),
        });
    }
    let [target] = candidates.as_slice() else {
        return Err(PatchError::NoUniqueTarget {
            kind: dst_kind.to_owned(),
            candidates,
        });
    };
    let target = target.clone();
    let e = graph.element_mut(element).expect("checked above");
    let slot = e.refs.entry(role.to_owned()).or_insert_with(|| crate::validators::artifact::RefSlot {
        many: false,
        targets: vec![],
    });
    if slot.targets.is_empty() {
        slot.targets.push(target.clone());
    }
    for i in broken {
        slot.targets[i] = target.clone();
    }
    Ok(Patch {
        edited: vec![element.to_owned()],
        description: format!("rebound {element}/{role} to {target}"),
    })
}

fn clamp(graph: &mut ArtifactGraph, element: &str, f: &LinearFormula, var: &str) -> Result<Patch, PatchError> {
    let e = graph
        .element(element)
        .ok_or_else(|| PatchError::Unresolvable(format!("element {element} is gone")))?;
    let mut bindings: BTreeMap<String, Rat> = bindings_for(f, e);
    let current = bindings
        .remove(var)
        .ok_or_else(|| PatchError::NotAutoRepairable(format!("{var} is not bound")))?;
    let (lo, hi) = interval(f, var, &bindings)?;
    let x = &current.0;
    let target = match (&lo, &hi) {
        (Some(l), _) if x < l => nearest(l, hi.as_ref(), current.is_integer(), true),
        (_, Some(h)) if x > h => nearest(h, lo.as_ref(), current.is_integer(), false),
        _ => return Err(PatchError::Unresolvable(format!("{var} already lies in its interval"))),
    };
    let value = json_number(&target)
        .ok_or_else(|| PatchError::NotAutoRepairable(format!("{target} has no exact JSON number")))?;
    let e = graph.element_mut(element).expect("checked above");
    e.attrs.insert(var.to_owned(), value);
    Ok(Patch {
        edited: vec![element.to_owned()],
        description: format!("clamped {element}.{var} from {current} to {}", Rat(target)),
    })
}

/// Closest admissible value to the violated bound `b`, preferring an
/// integer when the old value was one and the interval holds one.
fn nearest(b: &BigRational, other: Option<&BigRational>, integral: bool, lower: bool) -> BigRational {
    if integral && !b.is_integer() {
        let r = if lower { b.ceil() } else { b.floor() };
        let inside = other.is_none_or(|o| if lower { &r <= o } else { &r >= o });
        if inside {
            return r;
        }
    }
    b.clone()
}

/// Feasible interval of `var` with every other variable fixed.
fn interval(
    f: &LinearFormula,
    var: &str,
    others: &BTreeMap<String, Rat>,
) -> Result<(Option<BigRational>, Option<BigRational>), PatchError> {
    let mut lo: Option<BigRational> = None;
    let mut hi: Option<BigRational> = None;
    for c in &f.conjuncts {
        let mut a = BigRational::zero();
        let mut rest = c.constant.0.clone();
        for (coef, v) in &c.terms {
            if v == var {
                a += &coef.0;
            } else {
                let val = others.get(v).ok_or_else(|| {
                    PatchError::NotAutoRepairable(format!("{} also depends on unbound {v}", c.id))
                })?;
                rest -= &coef.0 * &val.0;
            }
        }
        if a.is_zero() {
            if !c.op.holds(&BigRational::zero(), &rest) {
                return Err(PatchError::NotAutoRepairable(format!("{} fails regardless of {var}", c.id)));
            }
            continue;
        }
        let bound = &rest / &a;
        let op = match (c.op, a.is_negative()) {
            (Cmp::Le, true) => Cmp::Ge,
            (Cmp::Ge, true) => Cmp::Le,
            (op, _) => op,
        };
        if matches!(op, Cmp::Ge | Cmp::Eq) && lo.as_ref().is_none_or(|l| &bound > l) {
            lo = Some(bound.clone());
        }
        if matches!(op, Cmp::Le | Cmp::Eq) && hi.as_ref().is_none_or(|h| &bound < h) {
            hi = Some(bound);
        }
    }
    if let (Some(l), Some(h)) = (&lo, &hi) {
        if l > h {
            return Err(PatchError::NotAutoRepairable(format!("no value of {var} satisfies the formula")));
        }
    }
    Ok((lo, hi))
}

fn json_number(r: &BigRational) -> Option<Value> {
    let rat = Rat(r.clone());
    if r.is_integer() {
        return match rat.to_json() {
            v @ Value::Number(_) => Some(v),
            _ => None,
        };
    }
    let f = rat.to_f64();
    let back = BigRational::from_float(f)?;
    (back == *r).then(|| serde_json::Number::from_f64(f).map(Value::Number)).flatten()
}
