//! Stratified constraints anchored to the domain model.
//!
//! Constraints come in three families, each living on its own layer:
//! structural constraints (grammars, enforced while decoding), semantic
//! shapes and logical formulas (both checked on the finished artifact).
//! Records enter either by extraction from the model graph
//! ([`extract_channel1`]) or as externally proposed candidates that must
//! align to a model node and pass a compatibility check
//! ([`admit_candidate`]).

mod admission;
mod extract;
mod lattice;
mod store;

use serde::{Deserialize, Serialize};

use crate::compiler::{CompileError, GrammarSpec};
use crate::digest::Digest;
use crate::graph::SourceRef;
use crate::validators::{LinearFormula, LogicError, Shape};

pub use admission::{
    admit_candidate, check_semantic_compatibility, synthesize_dynamic, AdmissionOptions, Candidate,
    CandidateBody, Compatibility, Conflict, Witness,
};
pub use extract::{extract_channel1, Channel1Rules, GrammarRule, RangeRule};
pub use lattice::{build_dependency_lattice, DependencyLattice};
pub use store::{IcmStore, StoreError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Structural,
    Semantic,
    Logical,
}

/// Evaluation layer. Ordered: structural before semantic before logic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Layer {
    #[serde(rename = "L1")]
    L1,
    #[serde(rename = "L2-sem")]
    L2Sem,
    #[serde(rename = "L2-logic")]
    L2Logic,
}

impl Family {
    pub fn layer(self) -> Layer {
        match self {
            Family::Structural => Layer::L1,
            Family::Semantic => Layer::L2Sem,
            Family::Logical => Layer::L2Logic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Admitted,
    Quarantined,
    Ephemeral,
    Promoted,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Anchor {
    Node(String),
    Abstract,
}

impl Anchor {
    pub fn node(&self) -> Option<&str> {
        match self {
            Anchor::Node(n) => Some(n),
            Anchor::Abstract => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ConstraintBody {
    Structural { grammar: GrammarSpec },
    Semantic { shape: Shape },
    Logical { formula: LinearFormula },
}

impl ConstraintBody {
    pub fn family(&self) -> Family {
        match self {
            ConstraintBody::Structural { .. } => Family::Structural,
            ConstraintBody::Semantic { .. } => Family::Semantic,
            ConstraintBody::Logical { .. } => Family::Logical,
        }
    }

    /// Symbols the body reads: formula variables, shape roles and
    /// attributes, and the kinds shapes point at.
    pub fn references(&self) -> Vec<String> {
        let mut out: Vec<String> = match self {
            ConstraintBody::Structural { .. } => Vec::new(),
            ConstraintBody::Semantic { shape } => shape
                .requirements
                .iter()
                .flat_map(|r| {
                    let mut v = vec![r.subject().to_owned()];
                    if let crate::validators::Requirement::RefExists { dst_kind, .. } = r {
                        v.push(dst_kind.clone());
                    }
                    v
                })
                .collect(),
            ConstraintBody::Logical { formula } => formula.variables.clone(),
        };
        out.sort();
        out.dedup();
        out
    }

    /// Check that the body is well-formed under its family.
    pub fn check(&self) -> Result<(), ConstraintError> {
        match self {
            ConstraintBody::Structural { grammar } => {
                crate::compiler::lower(grammar, &Default::default())?;
            }
            ConstraintBody::Semantic { shape } => shape
                .check_well_formed()
                .map_err(|e| ConstraintError::InvalidBody(e.to_string()))?,
            ConstraintBody::Logical { formula } => formula.check_well_formed()?,
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRecord {
    pub id: String,
    pub family: Family,
    pub layer: Layer,
    pub body: ConstraintBody,
    pub anchor: Anchor,
    pub provenance: Vec<SourceRef>,
    pub status: Status,
    /// Why a record was quarantined.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Symbols this record defines for others to depend on.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub defines: Vec<String>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum ConstraintError {
    #[error("rule references unknown kind {0:?}")]
    UnknownKind(String),
    #[error("malformed candidate: {0}")]
    MalformedCandidate(String),
    #[error("invalid constraint body: {0}")]
    InvalidBody(String),
    #[error("admitted record {0} has no anchor")]
    UnanchoredAdmission(String),
    #[error("dependency cycle: {}", .0.join(" -> "))]
    DependencyCycle(Vec<String>),
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error(transparent)]
    Logic(#[from] LogicError),
}

impl ConstraintRecord {
    /// Build a record whose layer follows its family. The id is derived
    /// from the body, anchor and provenance.
    pub fn new(
        body: ConstraintBody,
        anchor: Anchor,
        provenance: Vec<SourceRef>,
        status: Status,
    ) -> Result<ConstraintRecord, ConstraintError> {
        let family = body.family();
        let id = record_id(&body, &anchor, &provenance);
        let mut rec = ConstraintRecord {
            id,
            family,
            layer: family.layer(),
            body,
            anchor,
            provenance,
            status,
            reason: None,
            defines: Vec::new(),
        };
        rec.sync_body_id();
        rec.check_invariants()?;
        Ok(rec)
    }

    /// Validator inputs carry the record id so violations point back here.
    fn sync_body_id(&mut self) {
        match &mut self.body {
            ConstraintBody::Semantic { shape } => shape.id = self.id.clone(),
            ConstraintBody::Logical { formula } => formula.id = self.id.clone(),
            ConstraintBody::Structural { .. } => {}
        }
    }

    pub fn check_invariants(&self) -> Result<(), ConstraintError> {
        if self.status == Status::Admitted && self.anchor == Anchor::Abstract {
            return Err(ConstraintError::UnanchoredAdmission(self.id.clone()));
        }
        if self.layer != self.family.layer() || self.body.family() != self.family {
            return Err(ConstraintError::InvalidBody(format!(
                "record {} mixes family and layer",
                self.id
            )));
        }
        Ok(())
    }

    pub fn quarantined(mut self, reason: impl Into<String>) -> Self {
        self.status = Status::Quarantined;
        self.reason = Some(reason.into());
        self
    }

    pub fn shape(&self) -> Option<&Shape> {
        match &self.body {
            ConstraintBody::Semantic { shape } => Some(shape),
            _ => None,
        }
    }

    pub fn formula(&self) -> Option<&LinearFormula> {
        match &self.body {
            ConstraintBody::Logical { formula } => Some(formula),
            _ => None,
        }
    }

    /// Records that take part in validation.
    pub fn is_active(&self) -> bool {
        matches!(self.status, Status::Admitted | Status::Promoted | Status::Ephemeral)
    }
}

fn record_id(body: &ConstraintBody, anchor: &Anchor, provenance: &[SourceRef]) -> String {
    let mut body = body.clone();
    match &mut body {
        ConstraintBody::Semantic { shape } => shape.id.clear(),
        ConstraintBody::Logical { formula } => formula.id.clear(),
        ConstraintBody::Structural { .. } => {}
    }
    let bytes = crate::canonical::to_canonical_bytes(&(&body, anchor, provenance))
        .expect("records serialize");
    format!("c-{}", &Digest::of(&bytes).to_hex()[..16])
}

/// Shapes of the active semantic records.
pub fn shapes_of(records: &[ConstraintRecord]) -> Vec<Shape> {
    records
        .iter()
        .filter(|r| r.is_active())
        .filter_map(|r| r.shape().cloned())
        .collect()
}

/// Formulas of the active logical records.
pub fn formulas_of(records: &[ConstraintRecord]) -> Vec<LinearFormula> {
    records
        .iter()
        .filter(|r| r.is_active())
        .filter_map(|r| r.formula().cloned())
        .collect()
}
