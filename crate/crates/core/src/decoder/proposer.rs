//! Token proposers: the stand-in for a language model.
//!
//! A proposer maps the bytes emitted so far and the step number to a
//! non-negative weight per token id. The engine masks and renormalizes.

use std::collections::HashMap;
use std::sync::Arc;

use crate::compiler::PrefixDfa;

use super::vocab::Vocabulary;

pub trait Proposer: Send + Sync {
    fn weights(&self, emitted: &[u8], step: usize, vocab: &Vocabulary) -> Vec<f64>;
}

impl<P: Proposer + ?Sized> Proposer for Box<P> {
    fn weights(&self, emitted: &[u8], step: usize, vocab: &Vocabulary) -> Vec<f64> {
        (**self).weights(emitted, step, vocab)
    }
}

impl<P: Proposer + ?Sized> Proposer for Arc<P> {
    fn weights(&self, emitted: &[u8], step: usize, vocab: &Vocabulary) -> Vec<f64> {
        (**self).weights(emitted, step, vocab)
    }
}

/// Equal weight on every token.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformProposer;

impl Proposer for UniformProposer {
    fn weights(&self, _: &[u8], _: usize, vocab: &Vocabulary) -> Vec<f64> {
        vec![1.0; vocab.len()]
    }
}

/// Byte n-gram statistics lifted to tokens: a token's weight is the count
/// of its first byte after the longest known context, plus smoothing.
/// End-of-sequence is scored like a byte that never follows anything,
/// unless the corpus ends with the context.
#[derive(Debug, Clone)]
pub struct NgramProposer {
    order: usize,
    /// Context → counts of the next byte (index 256 counts end of text).
    table: HashMap<Vec<u8>, Vec<f64>>,
    smoothing: f64,
}

impl NgramProposer {
    /// `order` is the number of context bytes (0 gives a unigram model).
    pub fn train(corpus: &[&[u8]], order: usize) -> NgramProposer {
        let mut table: HashMap<Vec<u8>, Vec<f64>> = HashMap::new();
        for text in corpus {
            for i in 0..=text.len() {
                let next = text.get(i).map_or(256, |&b| b as usize);
                for k in 0..=order.min(i) {
                    let ctx = text[i - k..i].to_vec();
                    table.entry(ctx).or_insert_with(|| vec![0.0; 257])[next] += 1.0;
                }
            }
        }
        NgramProposer {
            order,
            table,
            smoothing: 0.01,
        }
    }

    fn counts(&self, emitted: &[u8]) -> Option<&Vec<f64>> {
        (0..=self.order.min(emitted.len()))
            .rev()
            .find_map(|k| self.table.get(&emitted[emitted.len() - k..]))
    }
}

impl Proposer for NgramProposer {
    fn weights(&self, emitted: &[u8], _: usize, vocab: &Vocabulary) -> Vec<f64> {
        let counts = self.counts(emitted);
        (0..vocab.len() as u32)
            .map(|id| {
                let slot = if vocab.is_eos(id) { 256 } else { vocab.bytes(id)[0] as usize };
                self.smoothing + counts.map_or(0.0, |c| c[slot])
            })
            .collect()
    }
}

/// Steers towards a fixed target text: tokens that continue the target get
/// weight proportional to the square of their length; end-of-sequence gets
/// weight once the target is complete.
#[derive(Debug, Clone)]
pub struct ScriptProposer {
    target: Vec<u8>,
}

impl ScriptProposer {
    pub fn new(target: impl Into<Vec<u8>>) -> Self {
        ScriptProposer { target: target.into() }
    }
}

impl Proposer for ScriptProposer {
    fn weights(&self, emitted: &[u8], _: usize, vocab: &Vocabulary) -> Vec<f64> {
        let rest = self.target.strip_prefix(emitted).unwrap_or(&[]);
        (0..vocab.len() as u32)
            .map(|id| {
                if vocab.is_eos(id) {
                    return if rest.is_empty() && emitted == self.target.as_slice() { 1.0 } else { 0.0 };
                }
                let t = vocab.bytes(id);
                if rest.starts_with(t) {
                    (t.len() * t.len()) as f64
                } else {
                    0.0
                }
            })
            .collect()
    }
}

/// Puts all mass on tokens the automaton would reject at the current
/// prefix, so every step exercises the masking fallback.
#[derive(Debug, Clone)]
pub struct AdversarialProposer {
    dfa: Arc<PrefixDfa>,
}

impl AdversarialProposer {
    pub fn new(dfa: Arc<PrefixDfa>) -> Self {
        AdversarialProposer { dfa }
    }
}

impl Proposer for AdversarialProposer {
    fn weights(&self, emitted: &[u8], _: usize, vocab: &Vocabulary) -> Vec<f64> {
        let state = self.dfa.fold(self.dfa.start(), emitted);
        (0..vocab.len() as u32)
            .map(|id| {
                let allowed = match state {
                    None => false,
                    Some(q) if vocab.is_eos(id) => self.dfa.is_accepting(q),
                    Some(q) => self.dfa.fold(q, vocab.bytes(id)).is_some(),
                };
                if allowed {
                    0.0
                } else {
                    1.0
                }
            })
            .collect()
    }
}
