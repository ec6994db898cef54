//! Subset construction, dead-state pruning and completion annotation.

use std::collections::{HashMap, VecDeque};

use crate::digest::Digest;

use super::expr::ByteSet;
use super::nfa::Nfa;
use super::CompileError;

/// Marks an undefined transition.
pub const DEAD: u32 = u32::MAX;

/// A deterministic automaton before pruning and annotation.
///
/// Bytes are mapped to equivalence classes; `trans[state * stride + class]`
/// is the successor or [`DEAD`].
#[derive(Debug, Clone)]
pub struct RawDfa {
    classes: [u8; 256],
    stride: usize,
    trans: Vec<u32>,
    start: u32,
    accepting: Vec<bool>,
    tags: Vec<Option<u32>>,
    tag_names: Vec<String>,
    identity: Option<Digest>,
}

impl RawDfa {
    /// An automaton with `states` states, no transitions and start state 0.
    /// Every byte is its own class.
    pub fn new(states: usize) -> Self {
        let mut classes = [0u8; 256];
        for (i, c) in classes.iter_mut().enumerate() {
            *c = i as u8;
        }
        RawDfa {
            classes,
            stride: 256,
            trans: vec![DEAD; states * 256],
            start: 0,
            accepting: vec![false; states],
            tags: vec![None; states],
            tag_names: Vec::new(),
            identity: None,
        }
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    /// Only valid for automata built with [`RawDfa::new`].
    pub fn set_transition(&mut self, from: u32, byte: u8, to: u32) {
        assert_eq!(self.stride, 256, "set_transition needs an identity class map");
        self.trans[from as usize * 256 + byte as usize] = to;
    }

    pub fn set_accepting(&mut self, state: u32, accepting: bool) {
        self.accepting[state as usize] = accepting;
    }

    pub fn set_start(&mut self, state: u32) {
        self.start = state;
    }

    pub fn set_tag(&mut self, state: u32, label: &str) {
        let idx = match self.tag_names.iter().position(|t| t == label) {
            Some(i) => i,
            None => {
                self.tag_names.push(label.to_owned());
                self.tag_names.len() - 1
            }
        };
        self.tags[state as usize] = Some(idx as u32);
    }

    pub(crate) fn with_identity(mut self, id: Digest) -> Self {
        self.identity = Some(id);
        self
    }

    fn next(&self, state: u32, byte: u8) -> u32 {
        self.trans[state as usize * self.stride + self.classes[byte as usize] as usize]
    }

    fn structural_digest(&self) -> Digest {
        let mut buf = Vec::with_capacity(self.trans.len() * 4 + 512);
        buf.extend_from_slice(b"raw-dfa\0");
        buf.extend_from_slice(&self.classes);
        buf.extend_from_slice(&(self.stride as u32).to_le_bytes());
        buf.extend_from_slice(&self.start.to_le_bytes());
        for t in &self.trans {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        for a in &self.accepting {
            buf.push(*a as u8);
        }
        Digest::of(&buf)
    }
}

/// Partition the byte alphabet so that bytes in one class behave the same
/// on every NFA edge.
fn byte_classes(sets: &[ByteSet]) -> ([u8; 256], usize) {
    let mut classes = [0u8; 256];
    let mut index: HashMap<Vec<bool>, u8> = HashMap::new();
    for b in 0..=255u8 {
        let sig: Vec<bool> = sets.iter().map(|s| s.contains(b)).collect();
        let next = index.len();
        let c = *index.entry(sig).or_insert(next as u8);
        classes[b as usize] = c;
    }
    (classes, index.len())
}

pub(crate) fn determinize(nfa: &Nfa, limit: usize) -> Result<RawDfa, CompileError> {
    let mut sets: Vec<ByteSet> = nfa
        .states
        .iter()
        .filter_map(|s| s.byte.map(|(set, _)| set))
        .collect();
    sets.sort_unstable();
    sets.dedup();
    let (classes, stride) = byte_classes(&sets);
    let mut reps = vec![0u8; stride];
    for b in (0..=255u8).rev() {
        reps[classes[b as usize] as usize] = b;
    }

    let mut mark = vec![u32::MAX; nfa.states.len()];
    let mut generation = 0u32;
    let mut closure = |seeds: &[u32], generation: u32| -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack: Vec<u32> = seeds.to_vec();
        while let Some(s) = stack.pop() {
            if mark[s as usize] == generation {
                continue;
            }
            mark[s as usize] = generation;
            out.push(s);
            for &t in &nfa.states[s as usize].eps {
                if mark[t as usize] != generation {
                    stack.push(t);
                }
            }
        }
        out.sort_unstable();
        out
    };

    let start_set = closure(&[nfa.start], generation);
    let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
    let mut subsets: Vec<Vec<u32>> = Vec::new();
    ids.insert(start_set.clone(), 0);
    subsets.push(start_set);
    let mut trans: Vec<u32> = Vec::new();
    let mut i = 0;
    while i < subsets.len() {
        trans.resize((i + 1) * stride, DEAD);
        for (c, &rep) in reps.iter().enumerate() {
            let mut seeds: Vec<u32> = Vec::new();
            for &s in &subsets[i] {
                if let Some((set, t)) = nfa.states[s as usize].byte {
                    if set.contains(rep) {
                        seeds.push(t);
                    }
                }
            }
            if seeds.is_empty() {
                continue;
            }
            generation += 1;
            let next = closure(&seeds, generation);
            let id = match ids.get(&next) {
                Some(&id) => id,
                None => {
                    if subsets.len() >= limit {
                        return Err(CompileError::StateBudgetExceeded { limit });
                    }
                    let id = subsets.len() as u32;
                    ids.insert(next.clone(), id);
                    subsets.push(next);
                    id
                }
            };
            trans[i * stride + c] = id;
        }
        i += 1;
    }

    let accepting = subsets
        .iter()
        .map(|s| s.binary_search(&nfa.accept).is_ok())
        .collect();
    let tags = subsets
        .iter()
        .map(|s| {
            s.iter()
                .filter_map(|&n| {
                    let st = &nfa.states[n as usize];
                    if st.byte_target {
                        st.tag
                    } else {
                        None
                    }
                })
                .min_by(|a, b| nfa.tags[*a as usize].cmp(&nfa.tags[*b as usize]))
        })
        .collect();
    Ok(RawDfa {
        classes,
        stride,
        trans,
        start: 0,
        accepting,
        tags,
        tag_names: nfa.tags.clone(),
        identity: None,
    }
    .minimize())
}

impl RawDfa {
    /// Merge equivalent states (Moore partition refinement). States with
    /// different acceptance or symbol tags are never merged.
    pub(crate) fn minimize(self) -> RawDfa {
        let n = self.num_states();
        let mut block: Vec<u32> = {
            let mut index: HashMap<(bool, Option<u32>), u32> = HashMap::new();
            (0..n)
                .map(|q| {
                    let next = index.len() as u32;
                    *index.entry((self.accepting[q], self.tags[q])).or_insert(next)
                })
                .collect()
        };
        let mut count = block.iter().max().map_or(0, |m| m + 1);
        loop {
            let mut index: HashMap<Vec<u32>, u32> = HashMap::new();
            let mut next_block = Vec::with_capacity(n);
            for q in 0..n {
                let mut sig = Vec::with_capacity(self.stride + 1);
                sig.push(block[q]);
                for &t in &self.trans[q * self.stride..(q + 1) * self.stride] {
                    sig.push(if t == DEAD { DEAD } else { block[t as usize] });
                }
                let fresh = index.len() as u32;
                next_block.push(*index.entry(sig).or_insert(fresh));
            }
            let new_count = index.len() as u32;
            block = next_block;
            if new_count == count {
                break;
            }
            count = new_count;
        }
        let m = count as usize;
        let mut trans = vec![DEAD; m * self.stride];
        let mut accepting = vec![false; m];
        let mut tags = vec![None; m];
        for q in 0..n {
            let b = block[q] as usize;
            accepting[b] = self.accepting[q];
            tags[b] = self.tags[q];
            for c in 0..self.stride {
                let t = self.trans[q * self.stride + c];
                trans[b * self.stride + c] = if t == DEAD { DEAD } else { block[t as usize] };
            }
        }
        RawDfa {
            classes: self.classes,
            stride: self.stride,
            trans,
            start: block[self.start as usize],
            accepting,
            tags,
            tag_names: self.tag_names,
            identity: self.identity,
        }
    }
}

/// A pruned, prefix-closed DFA: every state can reach acceptance.
///
/// Each state carries its shortest-completion length and the first byte of
/// its lexicographically least shortest completion.
#[derive(Debug, Clone)]
pub struct PrefixDfa {
    classes: [u8; 256],
    stride: usize,
    trans: Vec<u32>,
    start: u32,
    accepting: Vec<bool>,
    completion_len: Vec<u32>,
    completion_next: Vec<u8>,
    tags: Vec<Option<u32>>,
    tag_names: Vec<String>,
    automaton_id: Digest,
}

/// Prune dead and unreachable states and compute completion tables.
pub fn annotate(raw: RawDfa) -> Result<PrefixDfa, CompileError> {
    let n = raw.num_states();
    let stride = raw.stride;
    let identity = raw.identity.unwrap_or_else(|| raw.structural_digest());

    // Backward BFS from accepting states.
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for q in 0..n {
        for c in 0..stride {
            let t = raw.trans[q * stride + c];
            if t != DEAD {
                preds[t as usize].push(q as u32);
            }
        }
    }
    let mut dist = vec![u32::MAX; n];
    let mut queue = VecDeque::new();
    for q in 0..n {
        if raw.accepting[q] {
            dist[q] = 0;
            queue.push_back(q as u32);
        }
    }
    while let Some(q) = queue.pop_front() {
        for &p in &preds[q as usize] {
            if dist[p as usize] == u32::MAX {
                dist[p as usize] = dist[q as usize] + 1;
                queue.push_back(p);
            }
        }
    }
    if n == 0 || dist[raw.start as usize] == u32::MAX {
        return Err(CompileError::StartStateDead);
    }

    // Forward BFS over live states, in byte order, assigns the new numbering.
    let mut renumber = vec![DEAD; n];
    let mut order = vec![raw.start];
    renumber[raw.start as usize] = 0;
    let mut i = 0;
    while i < order.len() {
        let q = order[i];
        for b in 0..=255u8 {
            let t = raw.next(q, b);
            if t != DEAD && dist[t as usize] != u32::MAX && renumber[t as usize] == DEAD {
                renumber[t as usize] = order.len() as u32;
                order.push(t);
            }
        }
        i += 1;
    }

    let m = order.len();
    let mut trans = vec![DEAD; m * stride];
    let mut accepting = Vec::with_capacity(m);
    let mut completion_len = Vec::with_capacity(m);
    let mut completion_next = Vec::with_capacity(m);
    let mut tags = Vec::with_capacity(m);
    for (new, &old) in order.iter().enumerate() {
        for c in 0..stride {
            let t = raw.trans[old as usize * stride + c];
            if t != DEAD && renumber[t as usize] != DEAD {
                trans[new * stride + c] = renumber[t as usize];
            }
        }
        accepting.push(raw.accepting[old as usize]);
        let d = dist[old as usize];
        completion_len.push(d);
        let mut next_byte = 0u8;
        if d > 0 {
            for b in 0..=255u8 {
                let t = raw.next(old, b);
                if t != DEAD && dist[t as usize] == d - 1 {
                    next_byte = b;
                    break;
                }
            }
        }
        completion_next.push(next_byte);
        tags.push(raw.tags[old as usize]);
    }

    Ok(PrefixDfa {
        classes: raw.classes,
        stride,
        trans,
        start: 0,
        accepting,
        completion_len,
        completion_next,
        tags,
        tag_names: raw.tag_names,
        automaton_id: identity,
    })
}

impl PrefixDfa {
    pub fn start(&self) -> u32 {
        self.start
    }

    pub fn state_count(&self) -> usize {
        self.accepting.len()
    }

    pub fn automaton_id(&self) -> Digest {
        self.automaton_id
    }

    #[inline]
    pub fn next(&self, state: u32, byte: u8) -> Option<u32> {
        let t = self.trans[state as usize * self.stride + self.classes[byte as usize] as usize];
        (t != DEAD).then_some(t)
    }

    /// Fold `bytes` from `state`; `None` once a transition is undefined.
    #[inline]
    pub fn fold(&self, state: u32, bytes: &[u8]) -> Option<u32> {
        let mut q = state;
        for &b in bytes {
            let t = self.trans[q as usize * self.stride + self.classes[b as usize] as usize];
            if t == DEAD {
                return None;
            }
            q = t;
        }
        Some(q)
    }

    pub fn is_accepting(&self, state: u32) -> bool {
        self.accepting[state as usize]
    }

    /// Whether `state` is a retained state. Retained states always reach
    /// acceptance.
    pub fn reach_accept(&self, state: u32) -> bool {
        (state as usize) < self.state_count() && self.completion_len[state as usize] != u32::MAX
    }

    pub fn accepts(&self, bytes: &[u8]) -> bool {
        self.fold(self.start, bytes)
            .is_some_and(|q| self.is_accepting(q))
    }

    /// The state sequence visited while reading `bytes`, starting with the
    /// start state. `None` if the input leaves the automaton.
    pub fn run(&self, bytes: &[u8]) -> Option<Vec<u32>> {
        let mut out = Vec::with_capacity(bytes.len() + 1);
        let mut q = self.start;
        out.push(q);
        for &b in bytes {
            q = self.next(q, b)?;
            out.push(q);
        }
        Some(out)
    }

    /// Length of the shortest accepting suffix from `state`.
    pub fn completion_len(&self, state: u32) -> usize {
        self.completion_len[state as usize] as usize
    }

    /// Lexicographically least among the shortest accepting suffixes.
    pub fn completion(&self, state: u32) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.completion_len(state));
        let mut q = state;
        while !self.accepting[q as usize] {
            let b = self.completion_next[q as usize];
            out.push(b);
            q = self.next(q, b).expect("completion table is consistent");
        }
        out
    }

    pub fn symbol_tag(&self, state: u32) -> Option<&str> {
        self.tags[state as usize].map(|i| self.tag_names[i as usize].as_str())
    }

    pub fn symbol_tags(&self) -> &[String] {
        &self.tag_names
    }

    /// All bytes with a defined transition out of `state`.
    pub fn outgoing(&self, state: u32) -> ByteSet {
        let mut set = ByteSet::empty();
        for b in 0..=255u8 {
            if self.next(state, b).is_some() {
                set.insert(b);
            }
        }
        set
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Hand-built DFA for "ab" with an extra dead branch on 'x'.
    fn ab_raw() -> RawDfa {
        let mut raw = RawDfa::new(4);
        raw.set_transition(0, b'a', 1);
        raw.set_transition(1, b'b', 2);
        raw.set_transition(0, b'x', 3);
        raw.set_accepting(2, true);
        raw
    }

    #[test]
    fn prunes_dead_states() {
        let dfa = annotate(ab_raw()).unwrap();
        assert_eq!(dfa.state_count(), 3);
        assert_eq!(dfa.next(0, b'x'), None);
        assert!(dfa.accepts(b"ab"));
        assert!(!dfa.accepts(b"a"));
    }

    #[test]
    fn completion_after_a_is_b() {
        let dfa = annotate(ab_raw()).unwrap();
        let q = dfa.fold(dfa.start(), b"a").unwrap();
        assert_eq!(dfa.completion(q), b"b");
        assert_eq!(dfa.completion_len(q), 1);
    }

    #[test]
    fn accepting_start_has_empty_completion() {
        let mut raw = RawDfa::new(1);
        raw.set_accepting(0, true);
        let dfa = annotate(raw).unwrap();
        assert_eq!(dfa.completion(0), b"");
        assert_eq!(dfa.completion_len(0), 0);
    }

    #[test]
    fn dead_start_is_an_error() {
        let mut raw = RawDfa::new(2);
        raw.set_transition(0, b'a', 1);
        assert!(matches!(annotate(raw), Err(CompileError::StartStateDead)));
    }

    #[test]
    fn tie_break_prefers_smaller_byte() {
        // a(b|c), written with 'c' inserted first.
        let mut raw = RawDfa::new(3);
        raw.set_transition(0, b'a', 1);
        raw.set_transition(1, b'c', 2);
        raw.set_transition(1, b'b', 2);
        raw.set_accepting(2, true);
        let dfa = annotate(raw).unwrap();
        let q = dfa.fold(0, b"a").unwrap();
        assert_eq!(dfa.completion(q), b"b");
    }

    #[test]
    fn tags_survive_renumbering() {
        let mut raw = ab_raw();
        raw.set_tag(2, "tail");
        let dfa = annotate(raw).unwrap();
        let q = dfa.fold(0, b"ab").unwrap();
        assert_eq!(dfa.symbol_tag(q), Some("tail"));
        assert_eq!(dfa.symbol_tag(0), None);
    }
}
