//! GBNF grammars and their bounded unfolding into a regular expression.
//!
//! Syntax: `name ::= alternatives`, quoted terminals (`"..."` with `\n`,
//! `\t`, `\r`, `\\`, `\"`, `\xHH` escapes), byte classes (`[a-z]`,
//! `[^"]`), `.` for any byte, `|`, `( )`, `*`, `+`, `?`, `{m}`, `{m,}`,
//! `{m,n}` and `#` comments. The start symbol is `root` when defined,
//! otherwise the first rule.
//!
//! Alternatives can be switched on or off: `%set name = true|false`
//! declares a toggle, and an alternative that begins with `@name` is only
//! present while the toggle is on.
//!
//! Unfolding bounds how deeply *recursive* nonterminals (those on a cycle
//! of the reference graph) nest in a derivation. Non-recursive
//! nonterminals never consume depth. Derivations that would nest a
//! recursive nonterminal deeper than `d` are cut off.

use std::collections::{BTreeMap, HashMap};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::expr::{ByteSet, Expr};
use super::CompileError;

const MAX_REPEAT: u32 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Terminal(Vec<u8>),
    Class(ByteSet),
    /// Index into [`Grammar::rules`].
    Ref(usize),
    Group(Vec<Alternative>),
    Repeat {
        item: Box<Item>,
        min: u32,
        max: Option<u32>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alternative {
    pub guard: Option<String>,
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub name: String,
    pub alternatives: Vec<Alternative>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub rules: Vec<Rule>,
    pub start: usize,
    pub toggles: BTreeMap<String, bool>,
}

impl Grammar {
    pub fn rule_index(&self, name: &str) -> Option<usize> {
        self.rules.iter().position(|r| r.name == name)
    }

    /// Flags for every rule: true when the rule can reach itself.
    pub fn recursive_rules(&self) -> Vec<bool> {
        let mut g = DiGraph::<usize, ()>::new();
        let nodes: Vec<_> = (0..self.rules.len()).map(|i| g.add_node(i)).collect();
        let mut self_loop = vec![false; self.rules.len()];
        for (i, rule) in self.rules.iter().enumerate() {
            let mut refs = Vec::new();
            for alt in &rule.alternatives {
                collect_refs(&alt.items, &mut refs);
            }
            for r in refs {
                if r == i {
                    self_loop[i] = true;
                }
                g.add_edge(nodes[i], nodes[r], ());
            }
        }
        let mut recursive = self_loop;
        for scc in tarjan_scc(&g) {
            if scc.len() > 1 {
                for n in scc {
                    recursive[g[n]] = true;
                }
            }
        }
        recursive
    }
}

fn collect_refs(items: &[Item], out: &mut Vec<usize>) {
    for item in items {
        match item {
            Item::Ref(r) => out.push(*r),
            Item::Group(alts) => {
                for a in alts {
                    collect_refs(&a.items, out);
                }
            }
            Item::Repeat { item, .. } => collect_refs(std::slice::from_ref(item.as_ref()), out),
            Item::Terminal(_) | Item::Class(_) => {}
        }
    }
}

/// Unresolved reference, replaced by [`Item::Ref`] once all rules are known.
const PENDING: usize = usize::MAX;

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    pending: Vec<String>,
}

fn syntax(offset: usize, message: impl Into<String>) -> CompileError {
    CompileError::Syntax {
        offset,
        message: message.into(),
    }
}

fn is_name_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_'
}

fn is_name_char(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'-'
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    /// Skip whitespace and comments. Newlines are skipped too; rule
    /// boundaries are found by looking ahead for `name ::=`.
    fn skip_ws(&mut self) {
        while let Some(b) = self.peek() {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(c) = self.peek() {
                    if c == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else {
                break;
            }
        }
    }

    fn name(&mut self) -> Option<String> {
        let start = self.pos;
        if !self.peek().is_some_and(is_name_start) {
            return None;
        }
        while self.peek().is_some_and(is_name_char) {
            self.pos += 1;
        }
        Some(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    /// True when the input at the cursor is `name ::=`.
    fn at_rule_head(&self) -> bool {
        let mut p = self.pos;
        if !self.src.get(p).copied().is_some_and(is_name_start) {
            return false;
        }
        while self.src.get(p).copied().is_some_and(is_name_char) {
            p += 1;
        }
        while self.src.get(p).is_some_and(|b| *b == b' ' || *b == b'\t') {
            p += 1;
        }
        self.src[p..].starts_with(b"::=")
    }

    fn alternatives(&mut self) -> Result<Vec<Alternative>, CompileError> {
        let mut alts = vec![self.sequence()?];
        loop {
            self.skip_ws();
            if self.peek() == Some(b'|') {
                self.pos += 1;
                alts.push(self.sequence()?);
            } else {
                return Ok(alts);
            }
        }
    }

    fn sequence(&mut self) -> Result<Alternative, CompileError> {
        self.skip_ws();
        let mut guard = None;
        if self.peek() == Some(b'@') {
            self.pos += 1;
            let at = self.pos;
            guard = Some(self.name().ok_or_else(|| syntax(at, "expected toggle name"))?);
        }
        let mut items = Vec::new();
        loop {
            self.skip_ws();
            match self.peek() {
                None | Some(b'|') | Some(b')') | Some(b'%') => break,
                _ if self.at_rule_head() => break,
                _ => {
                    let atom = self.atom()?;
                    items.push(self.postfix(atom)?);
                }
            }
        }
        Ok(Alternative { guard, items })
    }

    fn postfix(&mut self, mut item: Item) -> Result<Item, CompileError> {
        loop {
            let (min, max) = match self.peek() {
                Some(b'*') => (0, None),
                Some(b'+') => (1, None),
                Some(b'?') => (0, Some(1)),
                Some(b'{') => {
                    let (min, max) = self.counted()?;
                    item = Item::Repeat {
                        item: Box::new(item),
                        min,
                        max,
                    };
                    continue;
                }
                _ => return Ok(item),
            };
            self.pos += 1;
            item = Item::Repeat {
                item: Box::new(item),
                min,
                max,
            };
        }
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|b| b.is_ascii_digit()) {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos]).ok()?.parse().ok()
    }

    fn counted(&mut self) -> Result<(u32, Option<u32>), CompileError> {
        let open = self.pos;
        self.pos += 1;
        let min = self.number().ok_or_else(|| syntax(open, "expected repetition count"))?;
        let max = if self.peek() == Some(b',') {
            self.pos += 1;
            if self.peek() == Some(b'}') {
                None
            } else {
                Some(self.number().ok_or_else(|| syntax(self.pos, "expected upper bound"))?)
            }
        } else {
            Some(min)
        };
        if self.peek() != Some(b'}') {
            return Err(syntax(self.pos, "expected '}'"));
        }
        self.pos += 1;
        if max.is_some_and(|m| m < min) || min > MAX_REPEAT || max.is_some_and(|m| m > MAX_REPEAT) {
            return Err(syntax(open, "invalid repetition bounds"));
        }
        Ok((min, max))
    }

    fn escape(&mut self) -> Result<u8, CompileError> {
        let at = self.pos;
        let c = self.peek().ok_or_else(|| syntax(at, "dangling escape"))?;
        self.pos += 1;
        Ok(match c {
            b'n' => b'\n',
            b't' => b'\t',
            b'r' => b'\r',
            b'\\' | b'"' | b'[' | b']' | b'-' | b'^' => c,
            b'x' => {
                let hex = self.src.get(self.pos..self.pos + 2).ok_or_else(|| syntax(at, "short \\x escape"))?;
                let v = std::str::from_utf8(hex)
                    .ok()
                    .and_then(|h| u8::from_str_radix(h, 16).ok())
                    .ok_or_else(|| syntax(at, "bad \\x escape"))?;
                self.pos += 2;
                v
            }
            _ => {
                return Err(CompileError::UnsupportedOperator {
                    op: format!("\\{}", c as char),
                    offset: at - 1,
                })
            }
        })
    }

    fn atom(&mut self) -> Result<Item, CompileError> {
        let at = self.pos;
        match self.peek() {
            Some(b'"') => {
                self.pos += 1;
                let mut bytes = Vec::new();
                loop {
                    match self.peek() {
                        None => return Err(syntax(at, "unterminated string")),
                        Some(b'"') => {
                            self.pos += 1;
                            break;
                        }
                        Some(b'\\') => {
                            self.pos += 1;
                            bytes.push(self.escape()?);
                        }
                        Some(b) => {
                            self.pos += 1;
                            bytes.push(b);
                        }
                    }
                }
                Ok(Item::Terminal(bytes))
            }
            Some(b'[') => self.class(),
            Some(b'.') => {
                self.pos += 1;
                Ok(Item::Class(ByteSet::full()))
            }
            Some(b'(') => {
                self.pos += 1;
                let alts = self.alternatives()?;
                self.skip_ws();
                if self.peek() != Some(b')') {
                    return Err(syntax(self.pos, "expected ')'"));
                }
                self.pos += 1;
                Ok(Item::Group(alts))
            }
            Some(b) if is_name_start(b) => {
                let name = self.name().expect("name start checked");
                self.pending.push(name);
                Ok(Item::Ref(PENDING - (self.pending.len() - 1)))
            }
            Some(b) => Err(syntax(at, format!("unexpected '{}'", b as char))),
            None => Err(syntax(at, "unexpected end of grammar")),
        }
    }

    fn class(&mut self) -> Result<Item, CompileError> {
        let open = self.pos;
        self.pos += 1;
        let negated = self.peek() == Some(b'^');
        if negated {
            self.pos += 1;
        }
        let mut set = ByteSet::empty();
        loop {
            let lo = match self.peek() {
                None => return Err(syntax(open, "unterminated class")),
                Some(b']') => {
                    self.pos += 1;
                    break;
                }
                Some(b'\\') => {
                    self.pos += 1;
                    self.escape()?
                }
                Some(b) if b >= 0x80 => {
                    return Err(CompileError::UnsupportedOperator {
                        op: "non-ASCII character in class".into(),
                        offset: self.pos,
                    })
                }
                Some(b) => {
                    self.pos += 1;
                    b
                }
            };
            let hi = if self.peek() == Some(b'-') && self.src.get(self.pos + 1) != Some(&b']') {
                self.pos += 1;
                match self.peek() {
                    Some(b'\\') => {
                        self.pos += 1;
                        self.escape()?
                    }
                    Some(b) if b < 0x80 => {
                        self.pos += 1;
                        b
                    }
                    _ => return Err(syntax(self.pos, "bad class range")),
                }
            } else {
                lo
            };
            if hi < lo {
                return Err(syntax(open, "inverted class range"));
            }
            set = set.union(&ByteSet::range(lo, hi));
        }
        Ok(Item::Class(if negated { set.complement() } else { set }))
    }

    fn directive(&mut self, toggles: &mut BTreeMap<String, bool>) -> Result<(), CompileError> {
        let at = self.pos;
        self.pos += 1;
        if self.name().as_deref() != Some("set") {
            return Err(syntax(at, "unknown directive"));
        }
        self.skip_inline_ws();
        let name = self.name().ok_or_else(|| syntax(self.pos, "expected toggle name"))?;
        self.skip_inline_ws();
        if self.peek() != Some(b'=') {
            return Err(syntax(self.pos, "expected '='"));
        }
        self.pos += 1;
        self.skip_inline_ws();
        let value = match self.name().as_deref() {
            Some("true") => true,
            Some("false") => false,
            _ => return Err(syntax(self.pos, "expected true or false")),
        };
        toggles.insert(name, value);
        Ok(())
    }

    fn skip_inline_ws(&mut self) {
        while self.peek().is_some_and(|b| b == b' ' || b == b'\t') {
            self.pos += 1;
        }
    }
}

pub fn parse_grammar(source: &str) -> Result<Grammar, CompileError> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
        pending: Vec::new(),
    };
    let mut rules: Vec<Rule> = Vec::new();
    let mut toggles = BTreeMap::new();
    loop {
        p.skip_ws();
        match p.peek() {
            None => break,
            Some(b'%') => p.directive(&mut toggles)?,
            _ => {
                let at = p.pos;
                if !p.at_rule_head() {
                    return Err(syntax(at, "expected 'name ::='"));
                }
                let name = p.name().expect("rule head checked");
                p.skip_inline_ws();
                p.pos += 3;
                let alternatives = p.alternatives()?;
                if p.peek() == Some(b')') {
                    return Err(syntax(p.pos, "unbalanced ')'"));
                }
                if rules.iter().any(|r| r.name == name) {
                    return Err(syntax(at, format!("rule {name} defined twice")));
                }
                rules.push(Rule { name, alternatives });
            }
        }
    }
    if rules.is_empty() {
        return Err(CompileError::NoStartSymbol);
    }

    let index: HashMap<&str, usize> =
        rules.iter().enumerate().map(|(i, r)| (r.name.as_str(), i)).collect();
    let mut resolved = Vec::with_capacity(p.pending.len());
    for name in &p.pending {
        match index.get(name.as_str()) {
            Some(&i) => resolved.push(i),
            None => return Err(CompileError::UndefinedNonterminal(name.clone())),
        }
    }
    let mut rules_out = rules.clone();
    for rule in &mut rules_out {
        for alt in &mut rule.alternatives {
            if let Some(g) = &alt.guard {
                if !toggles.contains_key(g) {
                    return Err(syntax(0, format!("toggle @{g} is not declared with %set")));
                }
            }
            resolve(&mut alt.items, &resolved, &toggles)?;
        }
    }
    let start = index.get("root").copied().unwrap_or(0);
    Ok(Grammar {
        rules: rules_out,
        start,
        toggles,
    })
}

fn resolve(
    items: &mut [Item],
    resolved: &[usize],
    toggles: &BTreeMap<String, bool>,
) -> Result<(), CompileError> {
    for item in items {
        match item {
            Item::Ref(r) => *r = resolved[PENDING - *r],
            Item::Group(alts) => {
                for a in alts {
                    if let Some(g) = &a.guard {
                        if !toggles.contains_key(g) {
                            return Err(syntax(0, format!("toggle @{g} is not declared with %set")));
                        }
                    }
                    resolve(&mut a.items, resolved, toggles)?;
                }
            }
            Item::Repeat { item, .. } => resolve(std::slice::from_mut(item.as_mut()), resolved, toggles)?,
            Item::Terminal(_) | Item::Class(_) => {}
        }
    }
    Ok(())
}

struct Unfolder<'g> {
    grammar: &'g Grammar,
    recursive: Vec<bool>,
    depth: u32,
    budget: usize,
    memo: HashMap<(usize, u32), Expr>,
}

impl Unfolder<'_> {
    fn rule(&mut self, r: usize, used: u32) -> Result<Expr, CompileError> {
        let used = if self.recursive[r] { used + 1 } else { used };
        if used > self.depth {
            return Ok(Expr::Empty);
        }
        if let Some(e) = self.memo.get(&(r, used)) {
            return Ok(e.clone());
        }
        let rule = &self.grammar.rules[r];
        let body = self.alternatives(&rule.alternatives, used)?;
        let e = Expr::tag(rule.name.clone(), body);
        if e.size() > self.budget {
            return Err(CompileError::StateBudgetExceeded { limit: self.budget });
        }
        self.memo.insert((r, used), e.clone());
        Ok(e)
    }

    fn alternatives(&mut self, alts: &[Alternative], used: u32) -> Result<Expr, CompileError> {
        let mut out = Vec::with_capacity(alts.len());
        for alt in alts {
            if let Some(g) = &alt.guard {
                if !self.grammar.toggles[g] {
                    continue;
                }
            }
            let mut parts = Vec::with_capacity(alt.items.len());
            for item in &alt.items {
                parts.push(self.item(item, used)?);
            }
            out.push(Expr::concat(parts));
        }
        Ok(Expr::alt(out))
    }

    fn item(&mut self, item: &Item, used: u32) -> Result<Expr, CompileError> {
        Ok(match item {
            Item::Terminal(bytes) => Expr::literal(bytes),
            Item::Class(set) => {
                if set.is_empty() {
                    Expr::Empty
                } else {
                    Expr::Bytes(*set)
                }
            }
            Item::Ref(r) => self.rule(*r, used)?,
            Item::Group(alts) => self.alternatives(alts, used)?,
            Item::Repeat { item, min, max } => Expr::repeat(self.item(item, used)?, *min, *max),
        })
    }
}

/// Unfold `grammar` from its start symbol, nesting recursive nonterminals
/// at most `depth` deep. `budget` caps the size of the resulting expression.
pub fn unfold(grammar: &Grammar, depth: u32, budget: usize) -> Result<Expr, CompileError> {
    if depth == 0 {
        return Err(CompileError::InvalidDepth);
    }
    let mut u = Unfolder {
        grammar,
        recursive: grammar.recursive_rules(),
        depth,
        budget,
        memo: HashMap::new(),
    };
    u.rule(grammar.start, 0)
}
