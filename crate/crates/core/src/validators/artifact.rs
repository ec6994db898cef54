//! Projection of canonical artifact text to an element graph.
//!
//! An artifact is a JSON object whose `elements` array holds objects of the
//! form `{"id": .., "kind": .., "attrs": {..}, "refs": {role: id | [ids]}}`.
//! The key names are configurable through [`ProjectionRules`]. Member order
//! is preserved so a patched graph serializes back in the same layout.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionRules {
    pub elements: String,
    pub id: String,
    pub kind: String,
    pub attrs: String,
    pub refs: String,
}

impl Default for ProjectionRules {
    fn default() -> Self {
        ProjectionRules {
            elements: "elements".into(),
            id: "id".into(),
            kind: "kind".into(),
            attrs: "attrs".into(),
            refs: "refs".into(),
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
#[error("unparseable artifact: {0}")]
pub struct ArtifactError(pub String);

/// Targets of one reference role. `many` records whether the artifact
/// wrote a list or a single id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefSlot {
    pub many: bool,
    pub targets: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Element {
    pub id: String,
    pub kind: String,
    pub attrs: IndexMap<String, Value>,
    pub refs: IndexMap<String, RefSlot>,
}

/// One reference edge; `dangling` when `dst` names no element.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub src: String,
    pub role: String,
    pub dst: String,
    pub dangling: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ArtifactGraph {
    elements: IndexMap<String, Element>,
    rules: ProjectionRules,
}

fn scalar(v: &Value) -> bool {
    !matches!(v, Value::Array(_) | Value::Object(_))
}

impl ArtifactGraph {
    pub fn project(artifact: &[u8], rules: &ProjectionRules) -> Result<ArtifactGraph, ArtifactError> {
        let mut g = ArtifactGraph {
            elements: IndexMap::new(),
            rules: rules.clone(),
        };
        if artifact.iter().all(u8::is_ascii_whitespace) {
            return Ok(g);
        }
        let doc: Value =
            serde_json::from_slice(artifact).map_err(|e| ArtifactError(e.to_string()))?;
        let root = doc
            .as_object()
            .ok_or_else(|| ArtifactError("top level must be an object".into()))?;
        let Some(items) = root.get(&rules.elements) else {
            return Ok(g);
        };
        let items = items
            .as_array()
            .ok_or_else(|| ArtifactError(format!("{} must be an array", rules.elements)))?;
        for (i, item) in items.iter().enumerate() {
            let obj = item
                .as_object()
                .ok_or_else(|| ArtifactError(format!("element {i} is not an object")))?;
            let text = |key: &str| -> Result<String, ArtifactError> {
                obj.get(key)
                    .and_then(Value::as_str)
                    .map(str::to_owned)
                    .ok_or_else(|| ArtifactError(format!("element {i} lacks string {key:?}")))
            };
            let id = text(&rules.id)?;
            let kind = text(&rules.kind)?;
            let mut attrs = IndexMap::new();
            if let Some(a) = obj.get(&rules.attrs) {
                let a = a
                    .as_object()
                    .ok_or_else(|| ArtifactError(format!("element {id}: attrs must be an object")))?;
                for (k, v) in a {
                    if !scalar(v) {
                        return Err(ArtifactError(format!("element {id}: attr {k} is not a scalar")));
                    }
                    attrs.insert(k.clone(), v.clone());
                }
            }
            let mut refs = IndexMap::new();
            if let Some(r) = obj.get(&rules.refs) {
                let r = r
                    .as_object()
                    .ok_or_else(|| ArtifactError(format!("element {id}: refs must be an object")))?;
                for (role, v) in r {
                    let slot = match v {
                        Value::String(s) => RefSlot {
                            many: false,
                            targets: vec![s.clone()],
                        },
                        Value::Array(list) => RefSlot {
                            many: true,
                            targets: list
                                .iter()
                                .map(|t| {
                                    t.as_str().map(str::to_owned).ok_or_else(|| {
                                        ArtifactError(format!("element {id}: ref {role} must name ids"))
                                    })
                                })
                                .collect::<Result<_, _>>()?,
                        },
                        _ => return Err(ArtifactError(format!("element {id}: ref {role} must name ids"))),
                    };
                    refs.insert(role.clone(), slot);
                }
            }
            if g.elements.contains_key(&id) {
                return Err(ArtifactError(format!("duplicate element id {id:?}")));
            }
            g.elements.insert(id.clone(), Element { id, kind, attrs, refs });
        }
        Ok(g)
    }

    pub fn from_elements(elements: Vec<Element>) -> ArtifactGraph {
        ArtifactGraph {
            elements: elements.into_iter().map(|e| (e.id.clone(), e)).collect(),
            rules: ProjectionRules::default(),
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = &Element> {
        self.elements.values()
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn element(&self, id: &str) -> Option<&Element> {
        self.elements.get(id)
    }

    pub fn element_mut(&mut self, id: &str) -> Option<&mut Element> {
        self.elements.get_mut(id)
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a Element> + 'a {
        self.elements.values().filter(move |e| e.kind == kind)
    }

    pub fn references(&self) -> Vec<Reference> {
        let mut out = Vec::new();
        for e in self.elements.values() {
            for (role, slot) in &e.refs {
                for t in &slot.targets {
                    out.push(Reference {
                        src: e.id.clone(),
                        role: role.clone(),
                        dst: t.clone(),
                        dangling: !self.elements.contains_key(t),
                    });
                }
            }
        }
        out
    }

    /// Serialize back to artifact text in the projected layout.
    pub fn to_text(&self) -> String {
        let r = &self.rules;
        let items: Vec<Value> = self
            .elements
            .values()
            .map(|e| {
                let mut obj = Map::new();
                obj.insert(r.id.clone(), Value::String(e.id.clone()));
                obj.insert(r.kind.clone(), Value::String(e.kind.clone()));
                if !e.attrs.is_empty() {
                    let attrs: Map<String, Value> =
                        e.attrs.iter().map(|(k, v)| (k.clone(), v.clone())).collect();
                    obj.insert(r.attrs.clone(), Value::Object(attrs));
                }
                if !e.refs.is_empty() {
                    let refs: Map<String, Value> = e
                        .refs
                        .iter()
                        .map(|(role, slot)| {
                            let v = if slot.many {
                                Value::Array(slot.targets.iter().cloned().map(Value::String).collect())
                            } else {
                                Value::String(slot.targets.first().cloned().unwrap_or_default())
                            };
                            (role.clone(), v)
                        })
                        .collect();
                    obj.insert(r.refs.clone(), Value::Object(refs));
                }
                Value::Object(obj)
            })
            .collect();
        let mut root = Map::new();
        root.insert(r.elements.clone(), Value::Array(items));
        serde_json::to_string(&Value::Object(root)).expect("JSON value serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOC: &str = r#"{"elements":[{"id":"e1","kind":"Event","attrs":{"period":5},"refs":{"op":"o1"}},{"id":"o1","kind":"Operation"}]}"#;

    #[test]
    fn projects_elements_and_refs() {
        let g = ArtifactGraph::project(DOC.as_bytes(), &ProjectionRules::default()).unwrap();
        assert_eq!(g.len(), 2);
        let refs = g.references();
        assert_eq!(refs.len(), 1);
        assert!(!refs[0].dangling);
    }

    #[test]
    fn dangling_refs_are_kept() {
        let doc = r#"{"elements":[{"id":"e1","kind":"Event","refs":{"op":"missing"}}]}"#;
        let g = ArtifactGraph::project(doc.as_bytes(), &ProjectionRules::default()).unwrap();
        assert!(g.references()[0].dangling);
    }

    #[test]
    fn empty_artifact() {
        assert!(ArtifactGraph::project(b"", &ProjectionRules::default()).unwrap().is_empty());
        assert!(ArtifactGraph::project(br#"{"elements":[]}"#, &ProjectionRules::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn round_trips_layout() {
        let g = ArtifactGraph::project(DOC.as_bytes(), &ProjectionRules::default()).unwrap();
        assert_eq!(g.to_text(), DOC);
    }

    #[test]
    fn rejects_bad_input() {
        let rules = ProjectionRules::default();
        assert!(ArtifactGraph::project(b"{", &rules).is_err());
        assert!(ArtifactGraph::project(br#"{"elements":[{"id":"a","kind":"K"},{"id":"a","kind":"K"}]}"#, &rules).is_err());
        assert!(ArtifactGraph::project(br#"{"elements":[{"id":"a","kind":"K","attrs":{"x":[1]}}]}"#, &rules).is_err());
    }
}
