//! Composite evidence, sealing and independent verification.
//!
//! Per-layer traces are joined by sequential composition, which requires
//! each trace to start no earlier than the previous one finished. The
//! composed trace is then enriched with the audit trail, which never
//! changes any pass/fail state, and sealed with a digest over the artifact,
//! the canonical bundle and a timestamp. [`verify`] re-derives everything
//! from the sources alone: it recompiles the grammar, replays the recorded
//! run over the artifact and re-runs the post-hoc validators.

mod registry;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical::to_canonical_bytes;
use crate::clock::{LogicalClock, Timestamp};
use crate::compiler::{compile, CompileError, CompileOptions, GrammarSpec};
use crate::constraints::{ConstraintRecord, Layer, Status};
use crate::decoder::{replay_trail, AuditMode, AuditTrail, StructTrace, Vocabulary};
use crate::digest::Digest;
use crate::validators::{
    check_certificate, validate_formulas, validate_semantic, ArtifactError, ArtifactGraph,
    LinearFormula, LogicError, LogicTrace, Outcome, ProjectionRules, SemTrace, Shape,
};

pub use registry::{ManifestEntry, Registry, RegistryError, DEFAULT_CACHE_CAPACITY};

pub const BUNDLE_FORMAT: &str = "certgen-evidence/1";

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum EvidenceError {
    #[error("temporal order violated: {first:?} finished at {finished}, {second:?} started at {started}")]
    TemporalOrder {
        first: Layer,
        finished: u64,
        second: Layer,
        started: u64,
    },
    #[error("layer {0:?} appears twice in the composition")]
    DuplicateLayer(Layer),
    #[error("audit trail is bound to {trail}, structural trace to {structural}")]
    AutomatonIdMismatch { trail: Digest, structural: Digest },
    #[error("bundle is already sealed")]
    AlreadySealed,
}

/// All logic traces of one validation pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicLayer {
    pub traces: Vec<LogicTrace>,
    pub started: Timestamp,
    pub finished: Timestamp,
}

impl LogicLayer {
    /// Wrap traces; the span covers them, or is a fresh tick when empty.
    pub fn collect(traces: Vec<LogicTrace>, clock: &LogicalClock) -> LogicLayer {
        let started = traces.iter().map(|t| t.started).min();
        let finished = traces.iter().map(|t| t.finished).max();
        match (started, finished) {
            (Some(s), Some(f)) => LogicLayer {
                traces,
                started: s,
                finished: f,
            },
            _ => {
                let t = clock.tick();
                LogicLayer {
                    traces,
                    started: t,
                    finished: t,
                }
            }
        }
    }

    pub fn pass(&self) -> bool {
        self.traces.iter().all(|t| t.pass)
    }
}

/// One entry of the composition-order record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpan {
    pub layer: Layer,
    pub started: Timestamp,
    pub finished: Timestamp,
    pub pass: bool,
}

/// Sequentially composed layer traces. Each layer appears at most once;
/// `order` records the composition order with each layer's time span.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComposedTrace {
    pub structural: Option<StructTrace>,
    pub semantic: Option<SemTrace>,
    pub logic: Option<LogicLayer>,
    pub order: Vec<LayerSpan>,
}

impl ComposedTrace {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn verdict(&self) -> bool {
        self.structural.as_ref().is_none_or(|t| t.pass())
            && self.semantic.as_ref().is_none_or(|t| t.pass)
            && self.logic.as_ref().is_none_or(|t| t.pass())
    }

    pub fn failed_layers(&self) -> Vec<Layer> {
        self.order.iter().filter(|s| !s.pass).map(|s| s.layer).collect()
    }

    fn first_started(&self) -> Option<&LayerSpan> {
        self.order.iter().min_by_key(|s| s.started.logical)
    }

    fn last_finished(&self) -> Option<&LayerSpan> {
        self.order.iter().max_by_key(|s| s.finished.logical)
    }

    /// The order record agrees with the slots and is temporally monotone.
    pub fn check_order(&self) -> Result<(), String> {
        let mut expected = Vec::new();
        if let Some(t) = &self.structural {
            expected.push((Layer::L1, t.started, t.finished, t.pass()));
        }
        if let Some(t) = &self.semantic {
            expected.push((Layer::L2Sem, t.started, t.finished, t.pass));
        }
        if let Some(t) = &self.logic {
            expected.push((Layer::L2Logic, t.started, t.finished, t.pass()));
        }
        if expected.len() != self.order.len() {
            return Err("order record does not list every layer once".into());
        }
        for span in &self.order {
            let found = expected.iter().any(|(l, s, f, p)| {
                *l == span.layer && *s == span.started && *f == span.finished && *p == span.pass
            });
            if !found {
                return Err(format!("order entry for {:?} disagrees with its trace", span.layer));
            }
        }
        for w in self.order.windows(2) {
            if w[0].finished.logical > w[1].started.logical {
                return Err(format!("{:?} starts before {:?} finished", w[1].layer, w[0].layer));
            }
        }
        Ok(())
    }
}

impl From<StructTrace> for ComposedTrace {
    fn from(t: StructTrace) -> Self {
        ComposedTrace {
            order: vec![LayerSpan {
                layer: Layer::L1,
                started: t.started,
                finished: t.finished,
                pass: t.pass(),
            }],
            structural: Some(t),
            ..Self::default()
        }
    }
}

impl From<SemTrace> for ComposedTrace {
    fn from(t: SemTrace) -> Self {
        ComposedTrace {
            order: vec![LayerSpan {
                layer: Layer::L2Sem,
                started: t.started,
                finished: t.finished,
                pass: t.pass,
            }],
            semantic: Some(t),
            ..Self::default()
        }
    }
}

impl From<LogicLayer> for ComposedTrace {
    fn from(t: LogicLayer) -> Self {
        ComposedTrace {
            order: vec![LayerSpan {
                layer: Layer::L2Logic,
                started: t.started,
                finished: t.finished,
                pass: t.pass(),
            }],
            logic: Some(t),
            ..Self::default()
        }
    }
}

/// Sequential composition. `second` must not start before `first` has
/// finished (logical time; equal counters are allowed).
pub fn compose_seq(first: ComposedTrace, second: ComposedTrace) -> Result<ComposedTrace, EvidenceError> {
    if let (Some(a), Some(b)) = (first.last_finished(), second.first_started()) {
        if a.finished.logical > b.started.logical {
            return Err(EvidenceError::TemporalOrder {
                first: a.layer,
                finished: a.finished.logical,
                second: b.layer,
                started: b.started.logical,
            });
        }
    }
    fn join<T>(a: Option<T>, b: Option<T>, layer: Layer) -> Result<Option<T>, EvidenceError> {
        match (a, b) {
            (Some(_), Some(_)) => Err(EvidenceError::DuplicateLayer(layer)),
            (a, b) => Ok(a.or(b)),
        }
    }
    let mut order = first.order;
    order.extend(second.order);
    Ok(ComposedTrace {
        structural: join(first.structural, second.structural, Layer::L1)?,
        semantic: join(first.semantic, second.semantic, Layer::L2Sem)?,
        logic: join(first.logic, second.logic, Layer::L2Logic)?,
        order,
    })
}

/// `v1`, `v2`, ... or `final`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum VersionTag {
    V(u32),
    Final,
}

impl VersionTag {
    pub const FIRST: VersionTag = VersionTag::V(1);

    pub fn next(self) -> VersionTag {
        match self {
            VersionTag::V(n) => VersionTag::V(n + 1),
            VersionTag::Final => VersionTag::Final,
        }
    }
}

impl fmt::Display for VersionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VersionTag::V(n) => write!(f, "v{n}"),
            VersionTag::Final => f.write_str("final"),
        }
    }
}

impl FromStr for VersionTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "final" {
            return Ok(VersionTag::Final);
        }
        s.strip_prefix('v')
            .filter(|n| !n.starts_with('0') && !n.starts_with('+'))
            .and_then(|n| n.parse::<u32>().ok())
            .map(VersionTag::V)
            .ok_or_else(|| format!("invalid version tag {s:?}"))
    }
}

impl Serialize for VersionTag {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for VersionTag {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A constraint that took part in validation. Ephemeral records from
/// dynamic synthesis are listed with their status.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintRef {
    pub id: String,
    pub layer: Layer,
    pub status: Status,
}

impl From<&ConstraintRecord> for ConstraintRef {
    fn from(r: &ConstraintRecord) -> Self {
        ConstraintRef {
            id: r.id.clone(),
            layer: r.layer,
            status: r.status,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seal {
    pub digest: Digest,
    pub timestamp: Timestamp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvidenceBundle {
    pub format: String,
    pub version: VersionTag,
    pub evidence: ComposedTrace,
    pub audit: AuditTrail,
    #[serde(default)]
    pub constraints: Vec<ConstraintRef>,
    /// Registry address of the bundle this one supersedes.
    #[serde(default)]
    pub previous: Option<Digest>,
    #[serde(default)]
    pub seal: Option<Seal>,
}

impl EvidenceBundle {
    pub fn verdict(&self) -> bool {
        self.evidence.verdict()
    }

    pub fn is_sealed(&self) -> bool {
        self.seal.is_some()
    }

    pub fn to_canonical_bytes(&self) -> Vec<u8> {
        to_canonical_bytes(self).expect("bundle serializes")
    }

    pub fn from_slice(bytes: &[u8]) -> Result<EvidenceBundle, serde_json::Error> {
        serde_json::from_slice(bytes)
    }

    /// A fresh unsealed successor carrying the next version tag.
    pub fn successor(&self, evidence: ComposedTrace, audit: AuditTrail, previous: Digest) -> EvidenceBundle {
        EvidenceBundle {
            format: BUNDLE_FORMAT.into(),
            version: self.version.next(),
            evidence,
            audit,
            constraints: self.constraints.clone(),
            previous: Some(previous),
            seal: None,
        }
    }
}

/// Attach the audit trail. Pass/fail states are carried over untouched.
pub fn enrich(composed: ComposedTrace, trail: AuditTrail) -> Result<EvidenceBundle, EvidenceError> {
    if let Some(s) = &composed.structural {
        if s.automaton_id != trail.automaton_id {
            return Err(EvidenceError::AutomatonIdMismatch {
                trail: trail.automaton_id,
                structural: s.automaton_id,
            });
        }
    }
    Ok(EvidenceBundle {
        format: BUNDLE_FORMAT.into(),
        version: VersionTag::FIRST,
        evidence: composed,
        audit: trail,
        constraints: Vec::new(),
        previous: None,
        seal: None,
    })
}

/// Digest over length-prefixed artifact bytes, canonical unsealed bundle
/// and canonical timestamp.
pub fn seal_digest(artifact: &[u8], bundle: &EvidenceBundle, timestamp: Timestamp) -> Digest {
    let mut unsealed = bundle.clone();
    unsealed.seal = None;
    let body = unsealed.to_canonical_bytes();
    let ts = to_canonical_bytes(&timestamp).expect("timestamp serializes");
    let a_len = (artifact.len() as u64).to_be_bytes();
    let b_len = (body.len() as u64).to_be_bytes();
    Digest::of_parts(&[&a_len, artifact, &b_len, &body, &ts])
}

pub fn seal(artifact: &[u8], bundle: EvidenceBundle, timestamp: Timestamp) -> Result<EvidenceBundle, EvidenceError> {
    if bundle.is_sealed() {
        return Err(EvidenceError::AlreadySealed);
    }
    let digest = seal_digest(artifact, &bundle, timestamp);
    Ok(EvidenceBundle {
        seal: Some(Seal { digest, timestamp }),
        ..bundle
    })
}

/// Whether the seal matches; `None` for unsealed bundles.
pub fn check_seal(artifact: &[u8], bundle: &EvidenceBundle) -> Option<bool> {
    let s = bundle.seal?;
    Some(seal_digest(artifact, bundle, s.timestamp) == s.digest)
}

/// Everything a verifier needs besides the artifact and the bundle. None
/// of it involves the proposer.
#[derive(Debug, Clone)]
pub struct VerifySources<'a> {
    pub grammar: &'a GrammarSpec,
    pub options: CompileOptions,
    pub projection: &'a ProjectionRules,
    pub shapes: &'a [Shape],
    pub formulas: &'a [LinearFormula],
    /// When given, the audit tuples are replayed too.
    pub vocab: Option<&'a Vocabulary>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum VerifyError {
    #[error("identity mismatch: bundle records {recorded}, sources give {supplied}")]
    IdentityMismatch { recorded: Digest, supplied: Digest },
    #[error("replay divergence: {0}")]
    ReplayDivergence(String),
    #[error("seal does not match artifact and bundle")]
    SealMismatch,
    #[error("recorded {layer:?} trace differs from the re-run: {detail}")]
    RecordDivergence { layer: Layer, detail: String },
    #[error("bundle has no {0:?} trace")]
    MissingLayer(Layer),
    #[error("malformed bundle: {0}")]
    Malformed(String),
    #[error("grammar source does not compile: {0}")]
    Compile(#[from] CompileError),
    #[error("artifact cannot be projected: {0}")]
    Projection(#[from] ArtifactError),
    #[error("formula cannot be decided: {0}")]
    Logic(#[from] LogicError),
}

impl VerifyError {
    /// Errors that mean the artifact or bundle is not what was sealed.
    pub fn is_tamper(&self) -> bool {
        matches!(
            self,
            VerifyError::ReplayDivergence(_)
                | VerifyError::SealMismatch
                | VerifyError::RecordDivergence { .. }
                | VerifyError::Malformed(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Verdict {
    pub holds: bool,
    pub failed_layers: Vec<Layer>,
    pub sealed: bool,
}

/// Project the artifact when there is anything to check on it. Artifacts
/// of grammars without post-hoc constraints need not be element documents.
pub fn project_for(
    artifact: &[u8],
    rules: &ProjectionRules,
    shapes: &[Shape],
    formulas: &[LinearFormula],
) -> Result<ArtifactGraph, ArtifactError> {
    if shapes.is_empty() && formulas.is_empty() {
        return Ok(ArtifactGraph::default());
    }
    ArtifactGraph::project(artifact, rules)
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum LayerError {
    #[error("artifact cannot be projected: {0}")]
    Projection(#[from] ArtifactError),
    #[error("formula cannot be decided: {0}")]
    Logic(#[from] LogicError),
}

/// Run the post-hoc validators after `structural` and compose all three
/// layers in order.
pub fn validate_layers(
    structural: StructTrace,
    artifact: &[u8],
    projection: &ProjectionRules,
    shapes: &[Shape],
    formulas: &[LinearFormula],
    clock: &LogicalClock,
) -> Result<ComposedTrace, LayerError> {
    clock.observe(structural.finished);
    let graph = project_for(artifact, projection, shapes, formulas)?;
    let sem = validate_semantic(&graph, shapes, clock);
    let logic = LogicLayer::collect(validate_formulas(&graph, formulas, clock)?, clock);
    let composed = compose_seq(structural.into(), sem.into()).expect("clock observed the structural trace");
    Ok(compose_seq(composed, logic.into()).expect("validators run in order"))
}

/// Parse bundle bytes, rejecting anything that is not the canonical
/// encoding of a well-formed bundle, then [`verify`].
pub fn verify_bytes(
    bundle_bytes: &[u8],
    artifact: &[u8],
    sources: &VerifySources<'_>,
    clock: &LogicalClock,
) -> Result<Verdict, VerifyError> {
    let bundle = EvidenceBundle::from_slice(bundle_bytes).map_err(|e| VerifyError::Malformed(e.to_string()))?;
    if bundle.to_canonical_bytes() != bundle_bytes {
        return Err(VerifyError::Malformed("bundle bytes are not canonical".into()));
    }
    verify(&bundle, artifact, sources, clock)
}

pub fn verify(
    bundle: &EvidenceBundle,
    artifact: &[u8],
    sources: &VerifySources<'_>,
    clock: &LogicalClock,
) -> Result<Verdict, VerifyError> {
    if bundle.format != BUNDLE_FORMAT {
        return Err(VerifyError::Malformed(format!("unknown format {:?}", bundle.format)));
    }
    let ev = &bundle.evidence;
    let st = ev.structural.as_ref().ok_or(VerifyError::MissingLayer(Layer::L1))?;
    let sem = ev.semantic.as_ref().ok_or(VerifyError::MissingLayer(Layer::L2Sem))?;
    let logic = ev.logic.as_ref().ok_or(VerifyError::MissingLayer(Layer::L2Logic))?;
    ev.check_order().map_err(VerifyError::Malformed)?;

    let supplied = sources.grammar.identity();
    for recorded in [st.automaton_id, bundle.audit.automaton_id] {
        if recorded != supplied {
            return Err(VerifyError::IdentityMismatch { recorded, supplied });
        }
    }
    let dfa = compile(sources.grammar, &sources.options)?;

    match dfa.run(artifact) {
        None => return Err(VerifyError::ReplayDivergence("artifact leaves the automaton".into())),
        Some(run) if run != st.run => {
            let at = run.iter().zip(&st.run).position(|(a, b)| a != b);
            let detail = match at {
                Some(i) => format!("run differs at position {i}"),
                None => format!("run has {} states, recorded {}", run.len(), st.run.len()),
            };
            return Err(VerifyError::ReplayDivergence(detail));
        }
        Some(run) => {
            let accepted = dfa.is_accepting(*run.last().expect("nonempty run"));
            if accepted != st.accepted {
                return Err(VerifyError::ReplayDivergence("recorded acceptance flag is wrong".into()));
            }
        }
    }
    if let Some(vocab) = sources.vocab {
        if bundle.audit.token_count > 0 && bundle.audit.mode != AuditMode::KeyEvent {
            let (_, bytes) = replay_trail(&bundle.audit, &dfa, vocab)
                .map_err(|e| VerifyError::ReplayDivergence(format!("audit trail: {e}")))?;
            if bytes != artifact {
                return Err(VerifyError::ReplayDivergence(
                    "audit trail reproduces a different artifact".into(),
                ));
            }
        }
    }

    if check_seal(artifact, bundle) == Some(false) {
        return Err(VerifyError::SealMismatch);
    }

    let graph = project_for(artifact, sources.projection, sources.shapes, sources.formulas)?;
    let sem_now = validate_semantic(&graph, sources.shapes, clock);
    if sem_now.violations != sem.violations || sem_now.shapes_checked != sem.shapes_checked {
        return Err(VerifyError::RecordDivergence {
            layer: Layer::L2Sem,
            detail: format!(
                "{} violations recorded, {} found",
                sem.violations.len(),
                sem_now.violations.len()
            ),
        });
    }
    let logic_now = validate_formulas(&graph, sources.formulas, clock)?;
    let same = logic_now.len() == logic.traces.len()
        && logic_now.iter().zip(&logic.traces).all(|(a, b)| {
            a.formula_id == b.formula_id
                && a.element_id == b.element_id
                && a.bindings == b.bindings
                && a.pass == b.pass
        });
    if !same {
        return Err(VerifyError::RecordDivergence {
            layer: Layer::L2Logic,
            detail: "formula outcomes differ".into(),
        });
    }
    for t in &logic.traces {
        let Some(f) = sources.formulas.iter().find(|f| f.id == t.formula_id) else {
            return Err(VerifyError::RecordDivergence {
                layer: Layer::L2Logic,
                detail: format!("unknown formula {}", t.formula_id),
            });
        };
        let unbound = matches!(&t.outcome, Outcome::Unsat { core }
            if core.iter().any(|c| c.starts_with("unbound:")));
        if !unbound && !check_certificate(f, t) {
            return Err(VerifyError::RecordDivergence {
                layer: Layer::L2Logic,
                detail: format!("certificate of {} does not check", t.formula_id),
            });
        }
    }

    let holds = st.accepted && sem_now.pass && logic_now.iter().all(|t| t.pass);
    Ok(Verdict {
        holds,
        failed_layers: ev.failed_layers(),
        sealed: bundle.is_sealed(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::{check_structure, AuditMode};
    use crate::compiler::compile_regex;

    fn structural(pass: bool, start: u64, end: u64) -> StructTrace {
        let dfa = compile_regex("ab").unwrap();
        let clock = LogicalClock::starting_at(start);
        let mut t = check_structure(&dfa, if pass { b"ab" } else { b"a" }, &clock);
        t.started = Timestamp::at(start);
        t.finished = Timestamp::at(end);
        t
    }

    fn semantic(pass: bool, start: u64, end: u64) -> SemTrace {
        SemTrace {
            shapes_checked: vec![],
            evaluated: 0,
            violations: vec![],
            started: Timestamp::at(start),
            finished: Timestamp::at(end),
            pass,
        }
    }

    #[test]
    fn order_condition() {
        let ok = compose_seq(structural(true, 1, 10).into(), semantic(true, 11, 12).into()).unwrap();
        assert!(ok.verdict());
        ok.check_order().unwrap();
        let err = compose_seq(structural(true, 1, 10).into(), semantic(true, 9, 12).into()).unwrap_err();
        assert!(matches!(err, EvidenceError::TemporalOrder { .. }));
        let dup = compose_seq(semantic(true, 1, 2).into(), semantic(true, 3, 4).into()).unwrap_err();
        assert_eq!(dup, EvidenceError::DuplicateLayer(Layer::L2Sem));
    }

    #[test]
    fn conjunction_on_all_combinations() {
        for a in [false, true] {
            for b in [false, true] {
                let c = compose_seq(structural(a, 1, 2).into(), semantic(b, 3, 4).into()).unwrap();
                assert_eq!(c.verdict(), a && b);
            }
        }
    }

    #[test]
    fn enrich_keeps_verdict_and_checks_identity() {
        let s = structural(false, 1, 2);
        let trail = AuditTrail::new(s.automaton_id, AuditMode::Summary);
        let c: ComposedTrace = s.into();
        let b = enrich(c.clone(), trail).unwrap();
        assert_eq!(b.verdict(), c.verdict());
        let other = AuditTrail::new(Digest::of(b"x"), AuditMode::Summary);
        assert!(matches!(enrich(c, other), Err(EvidenceError::AutomatonIdMismatch { .. })));
    }

    #[test]
    fn seal_is_deterministic_and_single_use() {
        let s = structural(true, 1, 2);
        let b = enrich(s.clone().into(), AuditTrail::new(s.automaton_id, AuditMode::Summary)).unwrap();
        let x = seal(b"ab", b.clone(), Timestamp::at(5)).unwrap();
        let y = seal(b"ab", b.clone(), Timestamp::at(5)).unwrap();
        let z = seal(b"ab", b, Timestamp::at(6)).unwrap();
        assert_eq!(x.seal, y.seal);
        assert_ne!(x.seal.unwrap().digest, z.seal.unwrap().digest);
        assert_eq!(check_seal(b"ab", &x), Some(true));
        assert_eq!(check_seal(b"aB", &x), Some(false));
        assert_eq!(seal(b"ab", x, Timestamp::at(7)).unwrap_err(), EvidenceError::AlreadySealed);
    }

    #[test]
    fn version_tags_round_trip() {
        for t in ["v1", "v2", "v17", "final"] {
            assert_eq!(t.parse::<VersionTag>().unwrap().to_string(), t);
        }
        for bad in ["v0", "v01", "V1", "final ", "v"] {
            assert!(bad.parse::<VersionTag>().is_err(), "{bad}");
        }
        assert_eq!(VersionTag::V(1).next(), VersionTag::V(2));
    }
}
