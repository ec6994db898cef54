//! Fixtures and brute-force oracles shared by the integration suites.
//!
//! Every oracle here is written against the definition of the language or
//! relation it checks, without going through the crate's compiler or
//! decision procedure.

#![allow(dead_code)]

use std::cell::RefCell;
use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use num_rational::Ratio;
use serde_json::Value;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use certgen_core::clock::LogicalClock;
use certgen_core::compiler::{compile, CompileOptions, GrammarSpec, PrefixDfa};
use certgen_core::decoder::{
    generate, AdversarialProposer, DecodePolicy, Decoder, NgramProposer, Proposer, ScriptProposer,
    UniformProposer, Vocabulary,
};
use certgen_core::evidence::{enrich, seal, validate_layers, EvidenceBundle};
use certgen_core::validators::{LinearFormula, ProjectionRules, Requirement, Shape};

// ---------------------------------------------------------------------------
// Enumeration

/// Every string over `alphabet` of length at most `max_len`, shortest first.
pub fn strings_upto(alphabet: &[u8], max_len: usize) -> Vec<Vec<u8>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(layer.len() * alphabet.len());
        for s in &layer {
            for &b in alphabet {
                let mut t: Vec<u8> = s.clone();
                t.push(b);
                next.push(t);
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

// ---------------------------------------------------------------------------
// Regex fixtures: the oracle is the `regex` crate in byte mode.

pub struct RegexFixture {
    pub pattern: &'static str,
    /// Bytes the brute force ranges over; includes at least one byte the
    /// pattern never uses.
    pub alphabet: &'static [u8],
}

pub const REGEX_FIXTURES: &[RegexFixture] = &[
    RegexFixture { pattern: "a(b|c)*d", alphabet: b"abcdx" },
    RegexFixture { pattern: "(ab|a)(bc|c)?", alphabet: b"abcx" },
    RegexFixture { pattern: "[0-2]{2,3}|x+", alphabet: b"012x9" },
    RegexFixture { pattern: "(a|b)*abb", alphabet: b"abc" },
    RegexFixture { pattern: "[^a]a?[^b]", alphabet: b"abc" },
    RegexFixture { pattern: "((ab)*|c+)d?", alphabet: b"abcd" },
    RegexFixture { pattern: "a{0,2}b{1,}c{2}", alphabet: b"abcx" },
    RegexFixture { pattern: "(?:a|)(?:b|)c", alphabet: b"abc" },
    RegexFixture { pattern: "x(y(z|w)?)+", alphabet: b"xyzw" },
];

pub fn regex_oracle(pattern: &str) -> regex::bytes::Regex {
    regex::bytes::Regex::new(&format!("(?s-u)^(?:{pattern})$")).expect("oracle pattern compiles")
}

// ---------------------------------------------------------------------------
// JSON-Schema fixtures: the oracle parses the candidate as JSON, requires
// that it is the canonical serialization and checks the schema by hand.

pub struct SchemaFixture {
    pub schema: &'static str,
    pub alphabet: &'static [u8],
}

pub const SCHEMA_FIXTURES: &[SchemaFixture] = &[
    SchemaFixture { schema: r#"{"type":"boolean"}"#, alphabet: b"truefx" },
    SchemaFixture { schema: r#"{"type":"integer","minimum":-3,"maximum":12}"#, alphabet: b"-0123" },
    SchemaFixture { schema: r#"{"type":"integer","minimum":95}"#, alphabet: b"0159" },
    SchemaFixture { schema: r#"{"enum":["a","b",3,true]}"#, alphabet: b"\"ab3t" },
    SchemaFixture { schema: r#"{"type":"string","pattern":"[ab]+c?"}"#, alphabet: b"\"abc\\" },
    SchemaFixture {
        schema: r#"{"type":"array","items":{"type":"integer","minimum":0,"maximum":1},"minItems":1,"maxItems":3}"#,
        alphabet: b"[],01",
    },
    SchemaFixture {
        schema: r#"{"type":"object","properties":{"a":{"enum":[1]}}}"#,
        alphabet: b"{}\":a1",
    },
    SchemaFixture {
        schema: r#"{"type":"object","properties":{"a":{"type":"integer","minimum":0,"maximum":9}},"required":["a"]}"#,
        alphabet: b"{}\":a1",
    },
];

thread_local! {
    static PATTERNS: RefCell<HashMap<String, regex::bytes::Regex>> = RefCell::new(HashMap::new());
}

fn string_char_ok(b: u8) -> bool {
    (0x20..=0x7e).contains(&b) && b != b'"' && b != b'\\'
}

fn schema_valid(schema: &Value, v: &Value) -> bool {
    let s = schema.as_object().expect("schema object");
    let ty = s.get("type").and_then(Value::as_str);
    let type_ok = |v: &Value| match ty {
        None | Some("enum") => true,
        Some("string") => v.is_string(),
        Some("integer") => v.is_i64() || v.is_u64(),
        Some("boolean") => v.is_boolean(),
        Some("object") => v.is_object(),
        Some("array") => v.is_array(),
        Some(_) => false,
    };
    if let Some(Value::Array(values)) = s.get("enum") {
        return type_ok(v) && values.iter().any(|e| e == v);
    }
    if !type_ok(v) {
        return false;
    }
    match ty {
        Some("boolean") => true,
        Some("integer") => {
            let n = match v.as_i64() {
                Some(n) => n as i128,
                None => v.as_u64().expect("integer") as i128,
            };
            let lo = s.get("minimum").and_then(Value::as_i64).map(i128::from);
            let hi = s.get("maximum").and_then(Value::as_i64).map(i128::from);
            lo.is_none_or(|l| n >= l) && hi.is_none_or(|h| n <= h)
        }
        Some("string") => {
            let text = v.as_str().unwrap();
            if !text.bytes().all(string_char_ok) {
                return false;
            }
            match s.get("pattern").and_then(Value::as_str) {
                None => true,
                Some(p) => PATTERNS.with(|cache| {
                    cache
                        .borrow_mut()
                        .entry(p.to_owned())
                        .or_insert_with(|| regex_oracle(p))
                        .is_match(text.as_bytes())
                }),
            }
        }
        Some("array") => {
            let items = v.as_array().unwrap();
            let lo = s.get("minItems").and_then(Value::as_u64).unwrap_or(0) as usize;
            let hi = s.get("maxItems").and_then(Value::as_u64).map(|m| m as usize);
            items.len() >= lo
                && hi.is_none_or(|h| items.len() <= h)
                && items.iter().all(|i| schema_valid(&s["items"], i))
        }
        Some("object") => {
            let obj = v.as_object().unwrap();
            let empty = serde_json::Map::new();
            let props = s.get("properties").and_then(Value::as_object).unwrap_or(&empty);
            let declared: Vec<&String> = props.keys().collect();
            // Members must appear in declared order.
            let mut cursor = 0;
            for (k, val) in obj {
                let Some(at) = declared.iter().position(|d| *d == k) else {
                    return false;
                };
                if at < cursor || !schema_valid(&props[k], val) {
                    return false;
                }
                cursor = at + 1;
            }
            let required = s.get("required").and_then(Value::as_array).cloned().unwrap_or_default();
            required.iter().all(|r| obj.contains_key(r.as_str().unwrap()))
        }
        _ => false,
    }
}

/// Whether `bytes` is the canonical serialization of an instance of `schema`.
pub fn schema_oracle(schema: &Value, bytes: &[u8]) -> bool {
    let Ok(v) = serde_json::from_slice::<Value>(bytes) else {
        return false;
    };
    if serde_json::to_vec(&v).unwrap() != bytes {
        return false;
    }
    schema_valid(schema, &v)
}

// ---------------------------------------------------------------------------
// Context-free fixtures with bounded nesting of recursive rules.

#[derive(Debug, Clone)]
pub enum G {
    Lit(&'static str),
    /// Byte class given by its members.
    Class(&'static [u8]),
    Ref(&'static str),
    Seq(Vec<G>),
    Alt(Vec<G>),
    Rep(Box<G>, u32, Option<u32>),
}

pub fn rep(g: G, min: u32, max: Option<u32>) -> G {
    G::Rep(Box::new(g), min, max)
}

#[derive(Debug, Clone)]
pub struct Cfg {
    pub name: &'static str,
    /// The first rule is the start symbol.
    pub rules: Vec<(&'static str, G)>,
    pub alphabet: &'static [u8],
}

fn render(g: &G, out: &mut String) {
    match g {
        G::Lit(s) => {
            out.push('"');
            for b in s.bytes() {
                match b {
                    b'"' => out.push_str("\\\""),
                    b'\\' => out.push_str("\\\\"),
                    _ => out.push(b as char),
                }
            }
            out.push('"');
        }
        G::Class(members) => {
            out.push('[');
            for &b in *members {
                let _ = write!(out, "\\x{b:02x}");
            }
            out.push(']');
        }
        G::Ref(name) => out.push_str(name),
        G::Seq(parts) => {
            out.push('(');
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push(' ');
                }
                render(p, out);
            }
            out.push(')');
        }
        G::Alt(parts) => {
            out.push('(');
            for (i, p) in parts.iter().enumerate() {
                if i > 0 {
                    out.push_str(" | ");
                }
                render(p, out);
            }
            out.push(')');
        }
        G::Rep(inner, min, max) => {
            out.push('(');
            render(inner, out);
            out.push(')');
            match (min, max) {
                (0, None) => out.push('*'),
                (1, None) => out.push('+'),
                (0, Some(1)) => out.push('?'),
                (m, None) => {
                    let _ = write!(out, "{{{m},}}");
                }
                (m, Some(n)) => {
                    let _ = write!(out, "{{{m},{n}}}");
                }
            }
        }
    }
}

impl Cfg {
    pub fn to_gbnf(&self) -> String {
        let mut out = String::new();
        for (name, body) in &self.rules {
            let _ = write!(out, "{name} ::= ");
            render(body, &mut out);
            out.push('\n');
        }
        out
    }

    fn index(&self, name: &str) -> usize {
        self.rules.iter().position(|(n, _)| *n == name).expect("rule exists")
    }

    fn refs(g: &G, out: &mut Vec<&'static str>) {
        match g {
            G::Ref(n) => out.push(n),
            G::Seq(ps) | G::Alt(ps) => ps.iter().for_each(|p| Self::refs(p, out)),
            G::Rep(inner, ..) => Self::refs(inner, out),
            G::Lit(_) | G::Class(_) => {}
        }
    }

    /// Rules that can reach themselves, by plain graph search.
    pub fn recursive(&self) -> Vec<bool> {
        let n = self.rules.len();
        let succ: Vec<Vec<usize>> = self
            .rules
            .iter()
            .map(|(_, g)| {
                let mut r = Vec::new();
                Self::refs(g, &mut r);
                r.into_iter().map(|name| self.index(name)).collect()
            })
            .collect();
        (0..n)
            .map(|start| {
                let mut seen = vec![false; n];
                let mut stack = succ[start].clone();
                while let Some(x) = stack.pop() {
                    if x == start {
                        return true;
                    }
                    if !seen[x] {
                        seen[x] = true;
                        stack.extend(&succ[x]);
                    }
                }
                false
            })
            .collect()
    }

    /// Membership in the language where no derivation path nests more than
    /// `depth` recursive rules.
    pub fn member(&self, depth: u32, s: &[u8]) -> bool {
        let mut m = Matcher {
            cfg: self,
            rec: self.recursive(),
            depth,
            s,
            memo: HashMap::new(),
        };
        m.rule(0, 0, 0).contains(&s.len())
    }
}

struct Matcher<'a> {
    cfg: &'a Cfg,
    rec: Vec<bool>,
    depth: u32,
    s: &'a [u8],
    memo: HashMap<(usize, usize, u32), BTreeSet<usize>>,
}

impl Matcher<'_> {
    fn rule(&mut self, r: usize, pos: usize, used: u32) -> BTreeSet<usize> {
        let used = used + self.rec[r] as u32;
        if used > self.depth {
            return BTreeSet::new();
        }
        if let Some(hit) = self.memo.get(&(r, pos, used)) {
            return hit.clone();
        }
        let body = self.cfg.rules[r].1.clone();
        let ends = self.ends(&body, pos, used);
        self.memo.insert((r, pos, used), ends.clone());
        ends
    }

    fn ends(&mut self, g: &G, pos: usize, used: u32) -> BTreeSet<usize> {
        match g {
            G::Lit(lit) => {
                let lit = lit.as_bytes();
                if self.s[pos..].starts_with(lit) {
                    BTreeSet::from([pos + lit.len()])
                } else {
                    BTreeSet::new()
                }
            }
            G::Class(members) => match self.s.get(pos) {
                Some(b) if members.contains(b) => BTreeSet::from([pos + 1]),
                _ => BTreeSet::new(),
            },
            G::Ref(name) => {
                let r = self.cfg.index(name);
                self.rule(r, pos, used)
            }
            G::Seq(parts) => {
                let mut cur = BTreeSet::from([pos]);
                for p in parts {
                    let mut next = BTreeSet::new();
                    for &q in &cur {
                        next.extend(self.ends(p, q, used));
                    }
                    cur = next;
                }
                cur
            }
            G::Alt(parts) => {
                let mut out = BTreeSet::new();
                for p in parts {
                    out.extend(self.ends(p, pos, used));
                }
                out
            }
            G::Rep(inner, min, max) => {
                let mut cur = BTreeSet::from([pos]);
                for _ in 0..*min {
                    let mut next = BTreeSet::new();
                    for &q in &cur {
                        next.extend(self.ends(inner, q, used));
                    }
                    cur = next;
                }
                let mut all = cur.clone();
                let mut frontier = cur;
                let mut extra = 0;
                while !frontier.is_empty() && max.is_none_or(|m| extra < m - min) {
                    let mut next = BTreeSet::new();
                    for &q in &frontier {
                        next.extend(self.ends(inner, q, used));
                    }
                    extra += 1;
                    // Positions already collected add nothing new when the
                    // repetition is unbounded; bounded counts still need
                    // every layer.
                    frontier = if max.is_none() {
                        next.difference(&all).copied().collect()
                    } else {
                        next.clone()
                    };
                    all.extend(next);
                }
                all
            }
        }
    }
}

pub fn cfg_fixtures() -> Vec<Cfg> {
    use G::*;
    vec![
        Cfg {
            name: "brackets",
            rules: vec![("root", rep(Ref("pair"), 1, None)), ("pair", Seq(vec![Lit("("), rep(Ref("pair"), 0, None), Lit(")")]))],
            alphabet: b"()x",
        },
        Cfg {
            name: "arith",
            rules: vec![
                ("root", Ref("expr")),
                ("expr", Seq(vec![Ref("term"), rep(Seq(vec![Lit("+"), Ref("term")]), 0, None)])),
                ("term", Alt(vec![Class(b"12"), Seq(vec![Lit("("), Ref("expr"), Lit(")")])])),
            ],
            alphabet: b"1+()",
        },
        Cfg {
            name: "nested-lists",
            rules: vec![
                ("root", Ref("list")),
                ("list", Seq(vec![Lit("["), rep(Seq(vec![Ref("item"), rep(Seq(vec![Lit(","), Ref("item")]), 0, None)]), 0, Some(1)), Lit("]")])),
                ("item", Alt(vec![Lit("0"), Ref("list")])),
            ],
            alphabet: b"[],0",
        },
        Cfg {
            name: "palindromes",
            rules: vec![("root", Alt(vec![Lit(""), Lit("a"), Lit("b"), Seq(vec![Lit("a"), Ref("root"), Lit("a")]), Seq(vec![Lit("b"), Ref("root"), Lit("b")])]))],
            alphabet: b"abc",
        },
        Cfg {
            name: "mutual",
            rules: vec![
                ("root", Seq(vec![Ref("even"), Lit(".")])),
                ("even", Alt(vec![Lit(""), Seq(vec![Lit("a"), Ref("odd")])])),
                ("odd", Seq(vec![Lit("b"), Ref("even")])),
            ],
            alphabet: b"ab.",
        },
        Cfg {
            name: "flat-kv",
            rules: vec![
                ("root", Seq(vec![Ref("pair"), rep(Seq(vec![Lit(";"), Ref("pair")]), 0, Some(2))])),
                ("pair", Seq(vec![Ref("key"), Lit("="), rep(Class(b"01"), 1, Some(2))])),
                ("key", Alt(vec![Lit("k"), Lit("kk")])),
            ],
            alphabet: b"k=01;",
        },
    ]
}

pub const GBNF_DEPTHS: [u32; 4] = [1, 2, 3, 8];

// ---------------------------------------------------------------------------
// Decoding fixtures

/// A grammar to decode under, with a vocabulary that covers its bytes.
pub struct DecodeFixture {
    pub label: String,
    pub decoder: Decoder,
}

impl DecodeFixture {
    fn new(label: String, dfa: PrefixDfa, vocab: Vocabulary) -> Self {
        DecodeFixture {
            label,
            decoder: Decoder::new(Arc::new(dfa), Arc::new(vocab)),
        }
    }

    pub fn dfa(&self) -> &PrefixDfa {
        self.decoder.dfa()
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.decoder.vocab()
    }
}

pub fn vocab_for(bytes: &[u8], multi: &[&str]) -> Vocabulary {
    let mut tokens: Vec<Vec<u8>> = bytes.iter().map(|&b| vec![b]).collect();
    tokens.sort();
    tokens.dedup();
    for m in multi {
        let t = m.as_bytes().to_vec();
        if !tokens.contains(&t) {
            tokens.push(t);
        }
    }
    Vocabulary::new(tokens, true).expect("vocabulary")
}

pub fn decode_fixtures() -> Vec<DecodeFixture> {
    let opts = CompileOptions::default();
    let mut out = Vec::new();
    for f in REGEX_FIXTURES {
        out.push(DecodeFixture::new(
            format!("regex {}", f.pattern),
            compile(&GrammarSpec::regex(f.pattern), &opts).unwrap(),
            vocab_for(f.alphabet, &["ab", "bc", "xy", "abb"]),
        ));
    }
    for f in SCHEMA_FIXTURES {
        let mut bytes = f.alphabet.to_vec();
        bytes.extend_from_slice(b"truefals");
        out.push(DecodeFixture::new(
            format!("schema {}", f.schema),
            compile(&GrammarSpec::json_schema(f.schema), &opts).unwrap(),
            vocab_for(&bytes, &["true", "false", "\"a\"", "{\"", "\":", "[0,", "12"]),
        ));
    }
    for c in cfg_fixtures() {
        for d in [2, 3, 5] {
            out.push(DecodeFixture::new(
                format!("gbnf {} d={d}", c.name),
                compile(&GrammarSpec::gbnf(c.to_gbnf(), d), &opts).unwrap(),
                vocab_for(c.alphabet, &["()", "((", "1+", "[0", "],", "ab", "k=", "01"]),
            ));
        }
    }
    out
}

/// Fresh pseudo-random weights at every step, fixed by the seed.
pub struct RandomProposer {
    pub seed: u64,
}

impl Proposer for RandomProposer {
    fn weights(&self, emitted: &[u8], step: usize, vocab: &Vocabulary) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ ((step as u64) << 32) ^ emitted.len() as u64);
        (0..vocab.len()).map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() }).collect()
    }
}

/// One of four proposer families, chosen by `kind % 4`.
pub fn mock_proposer(kind: usize, seed: u64, fixture: &DecodeFixture) -> Box<dyn Proposer> {
    match kind % 4 {
        0 => Box::new(UniformProposer),
        1 => {
            let dfa = fixture.dfa();
            let sample = dfa.completion(dfa.start());
            Box::new(NgramProposer::train(&[&sample, b"()ab01"], 2))
        }
        2 => Box::new(AdversarialProposer::new(Arc::clone(fixture.decoder.dfa()))),
        _ => Box::new(RandomProposer { seed }),
    }
}

// ---------------------------------------------------------------------------
// Linear systems: exact vertex enumeration over a bounding box.

pub type Q = Ratio<i128>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rel {
    Le,
    Ge,
    Eq,
}

/// `coeffs · (x, y, z) rel rhs` with small integer data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Row {
    pub coeffs: [i64; 3],
    pub rel: Rel,
    pub rhs: i64,
}

pub const VARS: [&str; 3] = ["x", "y", "z"];

/// Coordinates of a basic solution of a system with coefficients in
/// [-3, 3] and right-hand sides in [-12, 12] stay below this bound.
const BOX: i128 = 100_000;

fn solve3(a: [[Q; 3]; 3], b: [Q; 3]) -> Option<[Q; 3]> {
    let mut m = [[Q::from(0); 4]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][j];
        }
        m[i][3] = b[i];
    }
    for col in 0..3 {
        let pivot = (col..3).find(|&r| m[r][col] != Q::from(0))?;
        m.swap(col, pivot);
        for r in 0..3 {
            if r != col && m[r][col] != Q::from(0) {
                let f = m[r][col] / m[col][col];
                for c in col..4 {
                    let sub = f * m[col][c];
                    m[r][c] -= sub;
                }
            }
        }
    }
    Some([m[0][3] / m[0][0], m[1][3] / m[1][1], m[2][3] / m[2][2]])
}

/// Satisfiability over the rationals. The feasible region intersected with
/// the box is a polytope; it is nonempty exactly when some choice of three
/// independent tight rows gives a point satisfying everything.
pub fn lp_oracle(rows: &[Row]) -> bool {
    // Half-planes a·x <= b.
    let mut hs: Vec<([Q; 3], Q)> = Vec::new();
    let q = |v: i64| Q::from(v as i128);
    for r in rows {
        let a = [q(r.coeffs[0]), q(r.coeffs[1]), q(r.coeffs[2])];
        let neg = [-a[0], -a[1], -a[2]];
        match r.rel {
            Rel::Le => hs.push((a, q(r.rhs))),
            Rel::Ge => hs.push((neg, -q(r.rhs))),
            Rel::Eq => {
                hs.push((a, q(r.rhs)));
                hs.push((neg, -q(r.rhs)));
            }
        }
    }
    for i in 0..3 {
        let mut e = [Q::from(0); 3];
        e[i] = Q::from(1);
        hs.push((e, Q::from(BOX)));
        let mut e = [Q::from(0); 3];
        e[i] = Q::from(-1);
        hs.push((e, Q::from(BOX)));
    }
    let feasible = |x: &[Q; 3]| {
        hs.iter()
            .all(|(a, b)| a[0] * x[0] + a[1] * x[1] + a[2] * x[2] <= *b)
    };
    let n = hs.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                if let Some(x) = solve3([hs[i].0, hs[j].0, hs[k].0], [hs[i].1, hs[j].1, hs[k].1]) {
                    if feasible(&x) {
                        return true;
                    }
                }
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// Element documents

/// Element documents: ids, kinds Event/Operation, an integer `period`
/// attribute and an `op` reference.
pub const ELEMENTS_SCHEMA: &str = r#"{
  "type": "object",
  "properties": {
    "elements": {
      "type": "array",
      "maxItems": 8,
      "items": {
        "type": "object",
        "properties": {
          "id": {"type": "string", "pattern": "[a-z][a-z0-9]*"},
          "kind": {"enum": ["Event", "Operation"]},
          "attrs": {
            "type": "object",
            "properties": {"period": {"type": "integer", "minimum": 0, "maximum": 999}}
          },
          "refs": {
            "type": "object",
            "properties": {"op": {"type": "string", "pattern": "[a-z][a-z0-9]*"}}
          }
        },
        "required": ["id", "kind"]
      }
    }
  },
  "required": ["elements"]
}"#;

pub fn elements_dfa() -> PrefixDfa {
    compile(&GrammarSpec::json_schema(ELEMENTS_SCHEMA), &CompileOptions::default()).unwrap()
}

pub fn event_shapes() -> Vec<Shape> {
    vec![Shape {
        id: "event-op".into(),
        target_kind: "Event".into(),
        requirements: vec![Requirement::RefExists {
            role: "op".into(),
            dst_kind: "Operation".into(),
        }],
        provenance: vec![],
    }]
}

pub fn event_formulas() -> Vec<LinearFormula> {
    let mut f = LinearFormula::parse("period-range", "period >= 1, period <= 100").unwrap();
    f.target_kind = Some("Event".into());
    vec![f]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    DanglingOp,
    PeriodOutOfRange,
}

/// A document with one Operation `o1` and `events` Events that all satisfy
/// [`event_shapes`] and [`event_formulas`], except for the listed faults
/// (event index, fault).
pub fn element_doc(rng: &mut ChaCha8Rng, events: usize, faults: &[(usize, Fault)]) -> String {
    let mut elements = Vec::new();
    for i in 0..events {
        let fault = faults.iter().find(|(k, _)| *k == i).map(|(_, f)| *f);
        let period = match fault {
            Some(Fault::PeriodOutOfRange) => {
                if rng.gen_bool(0.3) {
                    0
                } else {
                    rng.gen_range(101..=999)
                }
            }
            _ => rng.gen_range(1..=100),
        };
        let op = match fault {
            Some(Fault::DanglingOp) => format!("zz{}", rng.gen_range(0..100)),
            _ => "o1".to_owned(),
        };
        elements.push(serde_json::json!({
            "id": format!("e{i}"),
            "kind": "Event",
            "attrs": {"period": period},
            "refs": {"op": op},
        }));
    }
    elements.push(serde_json::json!({"id": "o1", "kind": "Operation"}));
    serde_json::to_string(&serde_json::json!({ "elements": elements })).unwrap()
}

/// Decode `target` under the elements grammar, validate it, and seal the
/// result. Returns the artifact and the canonical bundle bytes.
pub fn sealed_pair(decoder: &Decoder, target: &str, clock: &LogicalClock) -> (Vec<u8>, Vec<u8>) {
    let proposer = ScriptProposer::new(target.as_bytes().to_vec());
    let policy = DecodePolicy {
        max_steps: 4096,
        ..DecodePolicy::default()
    };
    let g = generate(&proposer, decoder, &policy, 7, clock).expect("decode");
    assert_eq!(g.artifact, target.as_bytes(), "script proposer reproduces its target");
    let composed = validate_layers(
        g.trace,
        &g.artifact,
        &ProjectionRules::default(),
        &event_shapes(),
        &event_formulas(),
        clock,
    )
    .unwrap();
    let bundle: EvidenceBundle = enrich(composed, g.trail).unwrap();
    let sealed = seal(&g.artifact, bundle, clock.tick()).unwrap();
    (g.artifact, sealed.to_canonical_bytes())
}
