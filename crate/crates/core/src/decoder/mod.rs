//! Masked generation against a token proposer.
//!
//! At every step the proposer's weights are restricted to the tokens whose
//! bytes keep the automaton inside its retained states, renormalized and
//! sampled with a seeded generator. Every accepted token is logged as an
//! audit tuple. When generation stops at a non-accepting state, the
//! shortest completion is appended as one closure edit.

mod proposer;
mod trail;
mod vocab;

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{LogicalClock, Timestamp};
use crate::compiler::PrefixDfa;
use crate::digest::Digest;

pub use proposer::{AdversarialProposer, NgramProposer, Proposer, ScriptProposer, UniformProposer};
pub use trail::{replay_trail, AuditMode, ReplayError, AuditTrail, AuditTuple, KeyEvent, KeyEventKind};
pub use vocab::{escape, VocabError, Vocabulary};

pub const DEFAULT_DEBUG_SET_THRESHOLD: usize = 1000;

/// Allowed tokens at one state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllowedSet {
    /// Content tokens in id order, with the state each one leads to.
    pub moves: Vec<(u32, u32)>,
    /// End-of-sequence is allowed.
    pub eos: bool,
}

impl AllowedSet {
    pub fn len(&self) -> usize {
        self.moves.len() + self.eos as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self, vocab: &Vocabulary) -> Vec<u32> {
        let mut ids: Vec<u32> = self.moves.iter().map(|(t, _)| *t).collect();
        if self.eos {
            if let Some(e) = vocab.eos() {
                ids.push(e);
                ids.sort_unstable();
            }
        }
        ids
    }
}

/// Token `y` is allowed at `state` when folding its bytes stays inside the
/// automaton; end-of-sequence is allowed at accepting states when the
/// vocabulary has one.
pub fn allowed_tokens(dfa: &PrefixDfa, state: u32, vocab: &Vocabulary) -> AllowedSet {
    let moves = vocab
        .content_ids()
        .filter_map(|id| dfa.fold(state, vocab.bytes(id)).map(|q| (id, q)))
        .collect();
    AllowedSet {
        moves,
        eos: vocab.eos().is_some() && dfa.is_accepting(state),
    }
}

/// An automaton and vocabulary with a lazily filled per-state mask table.
/// Sessions over one decoder share the table and may run in parallel.
#[derive(Debug)]
pub struct Decoder {
    dfa: Arc<PrefixDfa>,
    vocab: Arc<Vocabulary>,
    masks: Vec<OnceLock<Arc<[(u32, u32)]>>>,
}

impl Decoder {
    pub fn new(dfa: Arc<PrefixDfa>, vocab: Arc<Vocabulary>) -> Decoder {
        let masks = (0..dfa.state_count()).map(|_| OnceLock::new()).collect();
        Decoder { dfa, vocab, masks }
    }

    pub fn dfa(&self) -> &Arc<PrefixDfa> {
        &self.dfa
    }

    pub fn vocab(&self) -> &Arc<Vocabulary> {
        &self.vocab
    }

    /// Cached `(token, next state)` pairs for content tokens at `state`.
    pub fn moves(&self, state: u32) -> &Arc<[(u32, u32)]> {
        self.masks[state as usize].get_or_init(|| allowed_tokens(&self.dfa, state, &self.vocab).moves.into())
    }

    pub fn session<'a>(&'a self, policy: DecodePolicy, seed: u64, clock: &'a LogicalClock) -> DecodeSession<'a> {
        DecodeSession::new(self, policy, seed, clock)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum WeightTransform {
    Identity,
    /// Highest weight wins; ties go to the lowest id.
    Greedy,
    /// Weights raised to `1 / t`.
    Temperature(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodePolicy {
    pub max_steps: usize,
    pub transform: WeightTransform,
    /// Minimum traversal counts per symbol tag before end-of-sequence.
    pub min_coverage: BTreeMap<String, u64>,
    pub audit_mode: AuditMode,
    pub debug_set_threshold: usize,
}

impl Default for DecodePolicy {
    fn default() -> Self {
        DecodePolicy {
            max_steps: 256,
            transform: WeightTransform::Identity,
            min_coverage: BTreeMap::new(),
            audit_mode: AuditMode::Summary,
            debug_set_threshold: DEFAULT_DEBUG_SET_THRESHOLD,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("no token is allowed at state {state}")]
    DeadEnd { state: u32 },
    #[error("max_steps must be at least 1")]
    ZeroSteps,
    #[error("session already finished")]
    Finished,
}

/// Evidence for the structural layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructTrace {
    pub automaton_id: Digest,
    /// States visited reading the artifact, one more than its length.
    pub run: Vec<u32>,
    pub accepted: bool,
    /// Structural edits applied at close (0 or 1).
    pub closures: u32,
    pub steps_exhausted: bool,
    /// Generation stopped because no token was allowed.
    pub dead_end: bool,
    pub coverage_met: bool,
    pub started: Timestamp,
    pub finished: Timestamp,
}

impl StructTrace {
    pub fn pass(&self) -> bool {
        self.accepted
    }
}

/// Structural trace of an existing byte string: the run up to the first
/// undefined transition, and whether it ends accepting.
pub fn check_structure(dfa: &PrefixDfa, bytes: &[u8], clock: &LogicalClock) -> StructTrace {
    let started = clock.tick();
    let mut run = Vec::with_capacity(bytes.len() + 1);
    let mut q = dfa.start();
    run.push(q);
    let mut complete = true;
    for &b in bytes {
        match dfa.next(q, b) {
            Some(n) => {
                q = n;
                run.push(q);
            }
            None => {
                complete = false;
                break;
            }
        }
    }
    StructTrace {
        automaton_id: dfa.automaton_id(),
        accepted: complete && dfa.is_accepting(q),
        run,
        closures: 0,
        steps_exhausted: false,
        dead_end: false,
        coverage_met: true,
        started,
        finished: clock.tick(),
    }
}

pub struct DecodeSession<'d> {
    decoder: &'d Decoder,
    clock: &'d LogicalClock,
    policy: DecodePolicy,
    rng: ChaCha8Rng,
    state: u32,
    emitted: Vec<u8>,
    steps: usize,
    trail: AuditTrail,
    coverage: BTreeMap<String, u64>,
    gate_open: bool,
    finished: bool,
    started: Timestamp,
}

impl<'d> DecodeSession<'d> {
    fn new(decoder: &'d Decoder, policy: DecodePolicy, seed: u64, clock: &'d LogicalClock) -> Self {
        let dfa = &decoder.dfa;
        let mut s = DecodeSession {
            decoder,
            clock,
            rng: ChaCha8Rng::seed_from_u64(seed),
            state: dfa.start(),
            emitted: Vec::new(),
            steps: 0,
            trail: AuditTrail::new(dfa.automaton_id(), policy.audit_mode),
            coverage: BTreeMap::new(),
            gate_open: false,
            finished: false,
            started: clock.tick(),
            policy,
        };
        s.gate_open = s.coverage_gate();
        s
    }

    pub fn state(&self) -> u32 {
        self.state
    }

    pub fn emitted(&self) -> &[u8] {
        &self.emitted
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn coverage(&self) -> &BTreeMap<String, u64> {
        &self.coverage
    }

    pub fn trail(&self) -> &AuditTrail {
        &self.trail
    }

    /// True when every minimum in the policy's coverage table is met.
    pub fn coverage_gate(&self) -> bool {
        self.policy
            .min_coverage
            .iter()
            .all(|(tag, min)| self.coverage.get(tag).copied().unwrap_or(0) >= *min)
    }

    /// The current mask, with the coverage gate applied to end-of-sequence.
    pub fn allowed(&self) -> AllowedSet {
        let moves = self.decoder.moves(self.state).to_vec();
        AllowedSet {
            moves,
            eos: self.eos_allowed(),
        }
    }

    fn eos_allowed(&self) -> bool {
        self.decoder.vocab.eos().is_some() && self.decoder.dfa.is_accepting(self.state) && self.gate_open
    }

    /// Sample one token from `weights` restricted to the mask and advance.
    pub fn step(&mut self, weights: &[f64]) -> Result<u32, DecodeError> {
        if self.finished {
            return Err(DecodeError::Finished);
        }
        let t0 = Instant::now();
        let moves = Arc::clone(self.decoder.moves(self.state));
        let eos_ok = self.eos_allowed();
        let eos_id = self.decoder.vocab.eos();
        let allowed_count = moves.len() + eos_ok as usize;
        if allowed_count == 0 {
            return Err(DecodeError::DeadEnd { state: self.state });
        }
        // Candidate i < moves.len() is a content token; the last may be eos.
        let weight_of = |id: u32| -> f64 {
            let w = weights.get(id as usize).copied().unwrap_or(0.0);
            if w.is_finite() && w > 0.0 {
                w
            } else {
                0.0
            }
        };
        let candidate_id = |i: usize| -> u32 {
            if i < moves.len() {
                moves[i].0
            } else {
                eos_id.expect("eos allowed only with an eos token")
            }
        };
        let pick = self.sample(allowed_count, |i| weight_of(candidate_id(i)));
        let token = candidate_id(pick);
        let before = self.state;

        let full_set = (self.policy.audit_mode == AuditMode::Full
            && allowed_count < self.policy.debug_set_threshold)
            .then(|| {
                let mut ids: Vec<u32> = moves.iter().map(|m| m.0).collect();
                if eos_ok {
                    ids.push(eos_id.expect("eos allowed"));
                }
                ids
            });

        if pick >= moves.len() {
            self.finished = true;
            self.steps += 1;
            let latency = t0.elapsed().as_nanos() as u64;
            self.trail.push_tuple(AuditTuple {
                step: self.steps as u64 - 1,
                state_before: before,
                allowed_count: allowed_count as u32,
                token_id: token,
                state_after: before,
                latency_ns: latency,
                allowed_set: full_set,
            });
            self.trail.push_event(KeyEvent {
                step: self.steps as u64 - 1,
                kind: KeyEventKind::Eos { state: before },
            });
            return Ok(token);
        }

        let after = moves[pick].1;
        let bytes = self.decoder.vocab.bytes(token);
        let dfa = &self.decoder.dfa;
        let mut tags: BTreeSet<&str> = BTreeSet::new();
        let mut q = before;
        for &b in bytes {
            q = dfa.next(q, b).expect("mask guarantees the fold is defined");
            if let Some(tag) = dfa.symbol_tag(q) {
                tags.insert(tag);
            }
        }
        debug_assert_eq!(q, after);
        for tag in tags {
            *self.coverage.entry(tag.to_owned()).or_insert(0) += 1;
        }
        self.emitted.extend_from_slice(bytes);
        self.state = after;
        self.steps += 1;
        let latency = t0.elapsed().as_nanos() as u64;
        self.trail.push_tuple(AuditTuple {
            step: self.steps as u64 - 1,
            state_before: before,
            allowed_count: allowed_count as u32,
            token_id: token,
            state_after: after,
            latency_ns: latency,
            allowed_set: full_set,
        });
        let gate = self.coverage_gate();
        if gate != self.gate_open {
            self.gate_open = gate;
            self.trail.push_event(KeyEvent {
                step: self.steps as u64 - 1,
                kind: KeyEventKind::CoverageGate { open: gate },
            });
        }
        Ok(token)
    }

    /// Index in `0..n` drawn according to `weight`, after the policy's
    /// transform. Zero total mass falls back to uniform.
    fn sample(&mut self, n: usize, weight: impl Fn(usize) -> f64) -> usize {
        let transform = self.policy.transform;
        let w = |i: usize| -> f64 {
            let x = weight(i);
            match transform {
                WeightTransform::Temperature(t) if t > 0.0 && x > 0.0 => x.powf(1.0 / t),
                _ => x,
            }
        };
        if transform == WeightTransform::Greedy {
            let mut best = 0;
            let mut best_w = w(0);
            for i in 1..n {
                let x = w(i);
                if x > best_w {
                    best = i;
                    best_w = x;
                }
            }
            return best;
        }
        let total: f64 = (0..n).map(&w).sum();
        if !(total > 0.0 && total.is_finite()) {
            return self.rng.gen_range(0..n);
        }
        let mut u = self.rng.gen::<f64>() * total;
        for i in 0..n {
            let x = w(i);
            if u < x {
                return i;
            }
            u -= x;
        }
        // Rounding can leave u just above the last positive weight.
        (0..n).rev().find(|&i| w(i) > 0.0).unwrap_or(n - 1)
    }

    /// Finish the session, appending the shortest completion when the
    /// current state does not accept.
    pub fn close(self) -> Generation {
        self.close_with(false, false)
    }

    fn close_with(mut self, steps_exhausted: bool, dead_end: bool) -> Generation {
        let dfa = &self.decoder.dfa;
        let mut closures = 0;
        if !dfa.is_accepting(self.state) {
            let suffix = dfa.completion(self.state);
            let before = self.state;
            self.emitted.extend_from_slice(&suffix);
            self.state = dfa.fold(before, &suffix).expect("completion stays in the automaton");
            closures = 1;
            self.trail.push_event(KeyEvent {
                step: self.steps as u64,
                kind: KeyEventKind::Closure {
                    suffix: escape(&suffix),
                    state_before: before,
                    state_after: self.state,
                },
            });
        }
        let run = dfa.run(&self.emitted).expect("emitted bytes stay in the automaton");
        let trace = StructTrace {
            automaton_id: dfa.automaton_id(),
            accepted: dfa.is_accepting(*run.last().expect("run has a start state")),
            run,
            closures,
            steps_exhausted,
            dead_end,
            coverage_met: self.coverage_gate(),
            started: self.started,
            finished: self.clock.tick(),
        };
        Generation {
            artifact: self.emitted,
            trace,
            trail: self.trail,
            coverage: self.coverage,
        }
    }
}

/// Result of a finished session.
#[derive(Debug, Clone)]
pub struct Generation {
    pub artifact: Vec<u8>,
    pub trace: StructTrace,
    pub trail: AuditTrail,
    pub coverage: BTreeMap<String, u64>,
}

/// Run the proposer under the mask until end-of-sequence or `max_steps`,
/// then close.
pub fn generate(
    proposer: &dyn Proposer,
    decoder: &Decoder,
    policy: &DecodePolicy,
    seed: u64,
    clock: &LogicalClock,
) -> Result<Generation, DecodeError> {
    if policy.max_steps == 0 {
        return Err(DecodeError::ZeroSteps);
    }
    let mut session = decoder.session(policy.clone(), seed, clock);
    while session.steps < policy.max_steps {
        let weights = proposer.weights(&session.emitted, session.steps, &decoder.vocab);
        match session.step(&weights) {
            Ok(_) if session.finished => return Ok(session.close_with(false, false)),
            Ok(_) => {}
            Err(DecodeError::DeadEnd { state }) => {
                log::debug!("no token allowed at state {state}; closing");
                return Ok(session.close_with(false, true));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(session.close_with(true, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_gbnf, compile_regex};

    fn decoder(pattern: &str, tokens: &[&str]) -> Decoder {
        Decoder::new(
            Arc::new(compile_regex(pattern).unwrap()),
            Arc::new(Vocabulary::from_strs(tokens, true).unwrap()),
        )
    }

    #[test]
    fn mask_examples() {
        let dfa = compile_regex("ab*").unwrap();
        let v = Vocabulary::from_strs(&["a", "b", "ab"], true).unwrap();
        assert_eq!(allowed_tokens(&dfa, dfa.start(), &v).ids(&v), vec![0, 2]);
        let q = dfa.fold(dfa.start(), b"a").unwrap();
        assert_eq!(allowed_tokens(&dfa, q, &v).ids(&v), vec![1, 3]);
        let empty = Vocabulary::default();
        assert!(allowed_tokens(&dfa, q, &empty).is_empty());
    }

    #[test]
    fn deterministic_under_seed() {
        let d = decoder("(a|b)*c", &["a", "b", "c", "ab"]);
        let clock = LogicalClock::default();
        let run = |seed| {
            generate(&UniformProposer, &d, &DecodePolicy::default(), seed, &clock)
                .unwrap()
                .artifact
        };
        assert_eq!(run(42), run(42));
    }

    #[test]
    fn masked_mass_falls_back_to_uniform() {
        let d = decoder("ab*", &["a", "b", "ab"]);
        let clock = LogicalClock::default();
        let mut s = d.session(DecodePolicy::default(), 7, &clock);
        // All weight on "b" and eos, which are masked at the start.
        let t = s.step(&[0.0, 5.0, 0.0, 5.0]).unwrap();
        assert!(t == 0 || t == 2);
    }

    #[test]
    fn close_appends_completion_once() {
        let d = decoder("ab", &["a", "b"]);
        let clock = LogicalClock::default();
        let mut s = d.session(DecodePolicy::default(), 1, &clock);
        s.step(&[1.0, 0.0, 0.0]).unwrap();
        let g = s.close();
        assert_eq!(g.artifact, b"ab");
        assert_eq!(g.trace.closures, 1);
        assert!(g.trace.accepted);
        assert_eq!(g.trace.run.len(), 3);
        let d = decoder("ab*", &["ab"]);
        let mut s = d.session(DecodePolicy::default(), 1, &clock);
        s.step(&[1.0, 0.0]).unwrap();
        let g = s.close();
        assert_eq!((g.artifact.as_slice(), g.trace.closures), (&b"ab"[..], 0));
    }

    #[test]
    fn single_literal_grammar() {
        let d = decoder("a", &["a", "b"]);
        let g = generate(&UniformProposer, &d, &DecodePolicy::default(), 3, &LogicalClock::default()).unwrap();
        assert_eq!(g.artifact, b"a");
        assert!(g.trail.tuples().len() <= 2);
    }

    #[test]
    fn coverage_gate_holds_back_eos() {
        let dfa = compile_gbnf("root ::= item*\nitem ::= \"x\"", 1).unwrap();
        let v = Vocabulary::from_strs(&["x"], true).unwrap();
        let d = Decoder::new(Arc::new(dfa), Arc::new(v));
        let mut policy = DecodePolicy::default();
        policy.min_coverage.insert("item".into(), 1);
        policy.audit_mode = AuditMode::KeyEvent;
        let clock = LogicalClock::default();
        let mut s = d.session(policy, 0, &clock);
        assert!(!s.coverage_gate());
        assert!(!s.allowed().eos);
        // Mass on eos only; the gate removes it so "x" is taken.
        assert_eq!(s.step(&[0.0, 1.0]).unwrap(), 0);
        assert!(s.coverage_gate());
        assert_eq!(s.step(&[0.0, 1.0]).unwrap(), 1);
        let g = s.close();
        assert!(g.trail.tuples().is_empty());
        let kinds: Vec<_> = g.trail.events().iter().map(|e| e.kind.clone()).collect();
        assert!(matches!(kinds[0], KeyEventKind::CoverageGate { open: true }));
        assert!(matches!(kinds[1], KeyEventKind::Eos { .. }));
    }

    #[test]
    fn greedy_and_zero_steps() {
        let d = decoder("a|b", &["a", "b"]);
        let policy = DecodePolicy {
            transform: WeightTransform::Greedy,
            ..DecodePolicy::default()
        };
        let clock = LogicalClock::default();
        let mut s = d.session(policy, 0, &clock);
        assert_eq!(s.step(&[1.0, 2.0, 0.0]).unwrap(), 1);
        let zero = DecodePolicy {
            max_steps: 0,
            ..DecodePolicy::default()
        };
        assert_eq!(
            generate(&UniformProposer, &d, &zero, 0, &LogicalClock::default()).unwrap_err(),
            DecodeError::ZeroSteps
        );
    }

    #[test]
    fn full_mode_records_small_sets() {
        let d = decoder("ab*", &["a", "b", "ab"]);
        let policy = DecodePolicy {
            audit_mode: AuditMode::Full,
            ..DecodePolicy::default()
        };
        let clock = LogicalClock::default();
        let mut s = d.session(policy, 0, &clock);
        s.step(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.trail().tuples()[0].allowed_set.as_deref(), Some(&[0u32, 2][..]));
    }
}
