//! Thompson construction from [`Expr`] to an epsilon-NFA.

use std::collections::HashMap;

use super::expr::{ByteSet, Expr};
use super::CompileError;

#[derive(Debug, Clone, Default)]
pub(crate) struct NfaState {
    pub eps: Vec<u32>,
    pub byte: Option<(ByteSet, u32)>,
    pub tag: Option<u32>,
    /// Entered by consuming a byte. Only these states label DFA states.
    pub byte_target: bool,
}

#[derive(Debug)]
pub(crate) struct Nfa {
    pub states: Vec<NfaState>,
    pub start: u32,
    pub accept: u32,
    pub tags: Vec<String>,
}

struct Builder {
    states: Vec<NfaState>,
    tags: Vec<String>,
    tag_index: HashMap<String, u32>,
    limit: usize,
}

impl Builder {
    fn add(&mut self, tag: Option<u32>) -> Result<u32, CompileError> {
        if self.states.len() >= self.limit {
            return Err(CompileError::StateBudgetExceeded { limit: self.limit });
        }
        self.states.push(NfaState {
            tag,
            ..NfaState::default()
        });
        Ok((self.states.len() - 1) as u32)
    }

    fn eps(&mut self, from: u32, to: u32) {
        self.states[from as usize].eps.push(to);
    }

    fn intern(&mut self, label: &str) -> u32 {
        if let Some(&i) = self.tag_index.get(label) {
            return i;
        }
        let i = self.tags.len() as u32;
        self.tags.push(label.to_owned());
        self.tag_index.insert(label.to_owned(), i);
        i
    }

    fn build(&mut self, e: &Expr, tag: Option<u32>) -> Result<(u32, u32), CompileError> {
        match e {
            Expr::Empty => Ok((self.add(tag)?, self.add(tag)?)),
            Expr::Epsilon => {
                let s = self.add(tag)?;
                let t = self.add(tag)?;
                self.eps(s, t);
                Ok((s, t))
            }
            Expr::Bytes(set) => {
                let s = self.add(tag)?;
                let t = self.add(tag)?;
                self.states[s as usize].byte = Some((*set, t));
                self.states[t as usize].byte_target = true;
                Ok((s, t))
            }
            Expr::Concat(parts) => {
                let s = self.add(tag)?;
                let mut cur = s;
                for p in parts {
                    let (a, b) = self.build(p, tag)?;
                    self.eps(cur, a);
                    cur = b;
                }
                Ok((s, cur))
            }
            Expr::Alt(parts) => {
                let s = self.add(tag)?;
                let t = self.add(tag)?;
                for p in parts {
                    let (a, b) = self.build(p, tag)?;
                    self.eps(s, a);
                    self.eps(b, t);
                }
                Ok((s, t))
            }
            Expr::Repeat { inner, min, max } => {
                let s = self.add(tag)?;
                let mut cur = s;
                for _ in 0..*min {
                    let (a, b) = self.build(inner, tag)?;
                    self.eps(cur, a);
                    cur = b;
                }
                match max {
                    None => {
                        let hub = self.add(tag)?;
                        self.eps(cur, hub);
                        let (a, b) = self.build(inner, tag)?;
                        self.eps(hub, a);
                        self.eps(b, hub);
                        Ok((s, hub))
                    }
                    Some(max) => {
                        let t = self.add(tag)?;
                        self.eps(cur, t);
                        for _ in *min..*max {
                            let (a, b) = self.build(inner, tag)?;
                            self.eps(cur, a);
                            cur = b;
                            self.eps(cur, t);
                        }
                        Ok((s, t))
                    }
                }
            }
            Expr::Tag(label, inner) => {
                let id = self.intern(label);
                self.build(inner, Some(id))
            }
        }
    }
}

pub(crate) fn build_nfa(e: &Expr, limit: usize) -> Result<Nfa, CompileError> {
    let mut b = Builder {
        states: Vec::new(),
        tags: Vec::new(),
        tag_index: HashMap::new(),
        limit,
    };
    let (start, accept) = b.build(e, None)?;
    Ok(Nfa {
        states: b.states,
        start,
        accept,
        tags: b.tags,
    })
}
