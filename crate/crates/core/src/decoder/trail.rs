//! Per-step audit records and their replay.

use serde::{Deserialize, Serialize};

use super::vocab::{escape, Vocabulary};
use crate::compiler::PrefixDfa;
use crate::digest::Digest;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditMode {
    /// One tuple per accepted token.
    #[default]
    Summary,
    /// Tuples plus the allowed set when it is small.
    Full,
    /// Closure, end-of-sequence and coverage-gate flips only.
    KeyEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditTuple {
    pub step: u64,
    pub state_before: u32,
    pub allowed_count: u32,
    pub token_id: u32,
    /// Equal to `state_before` for end-of-sequence.
    pub state_after: u32,
    pub latency_ns: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allowed_set: Option<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "event")]
pub enum KeyEventKind {
    Closure {
        suffix: String,
        state_before: u32,
        state_after: u32,
    },
    Eos {
        state: u32,
    },
    CoverageGate {
        open: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEvent {
    pub step: u64,
    #[serde(flatten)]
    pub kind: KeyEventKind,
}

/// The generation provenance trail, bound to one automaton.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditTrail {
    pub automaton_id: Digest,
    pub mode: AuditMode,
    /// Tokens accepted, end-of-sequence included, whether or not tuples
    /// were kept.
    pub token_count: u64,
    tuples: Vec<AuditTuple>,
    events: Vec<KeyEvent>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("trail is bound to automaton {trail}, not {dfa}")]
    IdentityMismatch { trail: Digest, dfa: Digest },
    #[error("trail in {0:?} mode has no tuples to replay")]
    NoTuples(AuditMode),
    #[error("step {step}: {detail}")]
    Divergence { step: u64, detail: String },
}

impl AuditTrail {
    pub fn new(automaton_id: Digest, mode: AuditMode) -> Self {
        AuditTrail {
            automaton_id,
            mode,
            token_count: 0,
            tuples: Vec::new(),
            events: Vec::new(),
        }
    }

    pub fn tuples(&self) -> &[AuditTuple] {
        &self.tuples
    }

    pub fn events(&self) -> &[KeyEvent] {
        &self.events
    }

    pub fn closures(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, KeyEventKind::Closure { .. }))
            .count()
    }

    pub(crate) fn push_tuple(&mut self, tuple: AuditTuple) {
        self.token_count += 1;
        if self.mode != AuditMode::KeyEvent {
            self.tuples.push(tuple);
        }
    }

    pub(crate) fn push_event(&mut self, event: KeyEvent) {
        self.events.push(event);
    }

    /// Tuples then events, one JSON object per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = serde_json::json!({
            "automaton_id": self.automaton_id,
            "mode": self.mode,
            "token_count": self.token_count,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for t in &self.tuples {
            out.push_str(&serde_json::to_string(t).expect("tuple serializes"));
            out.push('\n');
        }
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}

/// Replay the tuples through `dfa`, checking each recorded transition, and
/// return the final state with the emitted bytes (closure suffix included).
pub fn replay_trail(
    trail: &AuditTrail,
    dfa: &PrefixDfa,
    vocab: &Vocabulary,
) -> Result<(u32, Vec<u8>), ReplayError> {
    if trail.automaton_id != dfa.automaton_id() {
        return Err(ReplayError::IdentityMismatch {
            trail: trail.automaton_id,
            dfa: dfa.automaton_id(),
        });
    }
    if trail.mode == AuditMode::KeyEvent && trail.token_count > 0 {
        return Err(ReplayError::NoTuples(trail.mode));
    }
    let mut state = dfa.start();
    let mut emitted = Vec::new();
    let diverge = |step: u64, detail: String| ReplayError::Divergence { step, detail };
    for t in &trail.tuples {
        if t.state_before != state {
            return Err(diverge(t.step, format!("recorded state {} but replay is at {state}", t.state_before)));
        }
        if t.allowed_count == 0 {
            return Err(diverge(t.step, "token accepted from an empty allowed set".into()));
        }
        if t.token_id as usize >= vocab.len() {
            return Err(diverge(t.step, format!("token {} outside the vocabulary", t.token_id)));
        }
        if vocab.is_eos(t.token_id) {
            if !dfa.is_accepting(state) || t.state_after != state {
                return Err(diverge(t.step, "end-of-sequence at a non-accepting state".into()));
            }
            continue;
        }
        let bytes = vocab.bytes(t.token_id);
        let next = dfa
            .fold(state, bytes)
            .ok_or_else(|| diverge(t.step, format!("token {} is not allowed", escape(bytes))))?;
        if next != t.state_after {
            return Err(diverge(t.step, format!("recorded state {} but token leads to {next}", t.state_after)));
        }
        emitted.extend_from_slice(bytes);
        state = next;
    }
    for e in &trail.events {
        if let KeyEventKind::Closure {
            suffix,
            state_before,
            state_after,
        } = &e.kind
        {
            if *state_before != state {
                return Err(diverge(e.step, "closure does not start at the replayed state".into()));
            }
            let bytes = dfa.completion(state);
            if escape(&bytes) != *suffix {
                return Err(diverge(e.step, "closure suffix is not the shortest completion".into()));
            }
            emitted.extend_from_slice(&bytes);
            state = dfa.fold(state, &bytes).expect("completion stays in the automaton");
            if state != *state_after {
                return Err(diverge(e.step, "closure lands on a different state".into()));
            }
        }
    }
    Ok((state, emitted))
}
