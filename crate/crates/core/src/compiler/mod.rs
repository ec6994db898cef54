//! Compilation of structural constraints into prefix-closed DFAs.
//!
//! Three source languages are accepted: a byte-level regex dialect, a subset
//! of JSON Schema (compiled to its canonical serialization language), and
//! GBNF with recursive nonterminals unfolded to a fixed depth. All of them
//! lower to [`expr::Expr`], then to a Thompson NFA, a subset-construction
//! DFA, and finally a pruned [`PrefixDfa`].

mod dfa;
pub mod expr;
pub mod gbnf;
mod nfa;
pub mod regex;
pub mod schema;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::digest::Digest;

pub use dfa::{annotate, PrefixDfa, RawDfa, DEAD};

/// Default bound on nested recursive nonterminals for GBNF.
pub const DEFAULT_UNFOLD_DEPTH: u32 = 8;
/// Default cap on DFA states.
pub const DEFAULT_MAX_STATES: usize = 100_000;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum CompileError {
    #[error("unsupported operator {op:?} at offset {offset}")]
    UnsupportedOperator { op: String, offset: usize },
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("pattern matches no string")]
    EmptyLanguage,
    #[error("unsupported schema keyword {0:?}")]
    UnsupportedKeyword(String),
    #[error("unsatisfiable schema: {0}")]
    UnsatisfiableSchema(String),
    #[error("invalid schema document: {0}")]
    InvalidSchema(String),
    #[error("undefined nonterminal {0:?}")]
    UndefinedNonterminal(String),
    #[error("grammar defines no rules")]
    NoStartSymbol,
    #[error("unfold depth must be at least 1")]
    InvalidDepth,
    #[error("automaton exceeds the state budget of {limit}")]
    StateBudgetExceeded { limit: usize },
    #[error("start state is dead: the language is empty")]
    StartStateDead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GrammarKind {
    Regex,
    JsonSchema,
    Gbnf,
}

impl GrammarKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            GrammarKind::Regex => "regex",
            GrammarKind::JsonSchema => "json-schema",
            GrammarKind::Gbnf => "gbnf",
        }
    }
}

impl fmt::Display for GrammarKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GrammarKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "regex" => Ok(GrammarKind::Regex),
            "json-schema" | "schema" => Ok(GrammarKind::JsonSchema),
            "gbnf" => Ok(GrammarKind::Gbnf),
            other => Err(format!("unknown grammar kind {other:?}")),
        }
    }
}

/// Source of a structural constraint. `unfold_depth` only matters for GBNF.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub kind: GrammarKind,
    pub source: String,
    #[serde(default = "default_depth")]
    pub unfold_depth: u32,
}

fn default_depth() -> u32 {
    DEFAULT_UNFOLD_DEPTH
}

impl GrammarSpec {
    pub fn regex(pattern: impl Into<String>) -> Self {
        GrammarSpec {
            kind: GrammarKind::Regex,
            source: pattern.into(),
            unfold_depth: DEFAULT_UNFOLD_DEPTH,
        }
    }

    pub fn json_schema(schema: impl Into<String>) -> Self {
        GrammarSpec {
            kind: GrammarKind::JsonSchema,
            source: schema.into(),
            unfold_depth: DEFAULT_UNFOLD_DEPTH,
        }
    }

    pub fn gbnf(grammar: impl Into<String>, depth: u32) -> Self {
        GrammarSpec {
            kind: GrammarKind::Gbnf,
            source: grammar.into(),
            unfold_depth: depth,
        }
    }

    /// Depth as it participates in identity: zero for non-GBNF kinds.
    fn identity_depth(&self) -> u32 {
        match self.kind {
            GrammarKind::Gbnf => self.unfold_depth,
            _ => 0,
        }
    }

    pub fn identity(&self) -> Digest {
        automaton_identity(self)
    }
}

/// Line endings normalized to `\n`, trailing whitespace removed from every
/// line, trailing blank lines dropped.
pub fn canonical_source(source: &str) -> String {
    let unified = source.replace("\r\n", "\n").replace('\r', "\n");
    let lines: Vec<&str> = unified.split('\n').map(|l| l.trim_end()).collect();
    let mut out = lines.join("\n");
    let trimmed = out.trim_end_matches('\n').len();
    out.truncate(trimmed);
    out
}

/// SHA-256 over `kind ‖ 0x00 ‖ depth (decimal) ‖ 0x00 ‖ canonical source`.
pub fn automaton_identity(spec: &GrammarSpec) -> Digest {
    let depth = spec.identity_depth().to_string();
    let canonical = canonical_source(&spec.source);
    Digest::of_parts(&[
        spec.kind.as_str().as_bytes(),
        b"\0",
        depth.as_bytes(),
        b"\0",
        canonical.as_bytes(),
    ])
}

#[derive(Debug, Clone, Copy)]
pub struct CompileOptions {
    pub max_states: usize,
    /// Cap on intermediate NFA states (and on unfolded expression size).
    pub max_nfa_states: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            max_states: DEFAULT_MAX_STATES,
            max_nfa_states: DEFAULT_MAX_STATES * 20,
        }
    }
}

/// Lower a spec to its byte-level expression without building automata.
pub fn lower(spec: &GrammarSpec, opts: &CompileOptions) -> Result<expr::Expr, CompileError> {
    let source = canonical_source(&spec.source);
    match spec.kind {
        GrammarKind::Regex => regex::parse(&source),
        GrammarKind::JsonSchema => schema::lower(&source),
        GrammarKind::Gbnf => {
            if spec.unfold_depth == 0 {
                return Err(CompileError::InvalidDepth);
            }
            let grammar = gbnf::parse_grammar(&source)?;
            gbnf::unfold(&grammar, spec.unfold_depth, opts.max_nfa_states)
        }
    }
}

pub fn compile(spec: &GrammarSpec, opts: &CompileOptions) -> Result<PrefixDfa, CompileError> {
    let e = lower(spec, opts)?;
    let nfa = nfa::build_nfa(&e, opts.max_nfa_states)?;
    let raw = dfa::determinize(&nfa, opts.max_states)?.with_identity(spec.identity());
    annotate(raw).map_err(|err| match (err, spec.kind) {
        (CompileError::StartStateDead, GrammarKind::JsonSchema) => {
            CompileError::UnsatisfiableSchema("no document satisfies the schema".into())
        }
        (CompileError::StartStateDead, _) => CompileError::EmptyLanguage,
        (other, _) => other,
    })
}

pub fn compile_regex(pattern: &str) -> Result<PrefixDfa, CompileError> {
    compile(&GrammarSpec::regex(pattern), &CompileOptions::default())
}

pub fn compile_json_schema(schema: &str) -> Result<PrefixDfa, CompileError> {
    compile(&GrammarSpec::json_schema(schema), &CompileOptions::default())
}

pub fn compile_gbnf(grammar: &str, depth: u32) -> Result<PrefixDfa, CompileError> {
    compile(&GrammarSpec::gbnf(grammar, depth), &CompileOptions::default())
}

impl PrefixDfa {
    /// The unconstrained automaton: every byte string is accepted.
    pub fn all_allow() -> PrefixDfa {
        compile_regex(ALL_ALLOW_PATTERN).expect("all-allow pattern compiles")
    }
}

/// Source of [`PrefixDfa::all_allow`].
pub const ALL_ALLOW_PATTERN: &str = ".*";
