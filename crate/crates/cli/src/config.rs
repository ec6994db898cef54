//! Run configuration and loading of pipeline inputs.
//!
//! Values come from three places. A JSON configuration file wins over
//! command-line flags, which win over built-in defaults. Relative paths in
//! the configuration file resolve against the file's directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use certgen_core::compiler::{CompileOptions, GrammarKind, GrammarSpec, DEFAULT_UNFOLD_DEPTH};
use certgen_core::constraints::{
    admit_candidate, build_dependency_lattice, formulas_of, shapes_of, AdmissionOptions, Candidate,
    ConstraintRecord, DependencyLattice, IcmStore,
};
use certgen_core::decoder::{
    AuditMode, DecodePolicy, NgramProposer, Proposer, ScriptProposer, UniformProposer, Vocabulary,
    WeightTransform,
};
use certgen_core::evidence::Registry;
use certgen_core::graph::{TypedGraph, DEFAULT_THETA_LINK};
use certgen_core::validators::{LinearFormula, ProjectionRules, Shape};
use clap::Args;
use serde::Deserialize;

/// Fields shared by the configuration file and the flags. Every field is
/// optional so the two sources can be layered.
#[derive(Debug, Clone, Default, Deserialize, Args)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Grammar source file.
    #[arg(long)]
    pub grammar: Option<PathBuf>,
    /// Grammar kind: regex, json-schema or gbnf. Guessed from the file
    /// extension when absent.
    #[arg(long)]
    pub kind: Option<String>,
    /// Unfold depth for recursive GBNF nonterminals.
    #[arg(long)]
    pub depth: Option<u32>,
    /// Vocabulary file; printable ASCII bytes when absent.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// JSON array of shapes.
    #[arg(long)]
    pub shapes: Option<PathBuf>,
    /// JSON array of formula declarations.
    #[arg(long)]
    pub formulas: Option<PathBuf>,
    /// Domain model graph declaration.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// JSON array of constraint candidates to admit against the graph.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    /// Constraint store directory; in memory when absent.
    #[arg(long)]
    pub icm: Option<PathBuf>,
    /// Evidence registry directory.
    #[arg(long)]
    pub registry: Option<PathBuf>,
    #[arg(long)]
    pub theta_link: Option<f64>,
    #[arg(skip)]
    pub projection: Option<ProjectionRules>,

    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Weight exponent 1/t applied before sampling.
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Always take the heaviest allowed token.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub greedy: Option<bool>,
    /// summary, full or key-event.
    #[arg(long)]
    pub audit_mode: Option<String>,
    #[arg(long)]
    pub debug_set_threshold: Option<usize>,
    /// Minimum traversals per grammar symbol before end-of-sequence, as
    /// `symbol=count`. Repeatable.
    #[arg(long = "min-coverage", value_parser = parse_coverage)]
    #[serde(skip)]
    pub min_coverage_flags: Vec<(String, u64)>,
    #[arg(skip)]
    pub min_coverage: Option<BTreeMap<String, u64>>,
    /// uniform, ngram or script.
    #[arg(long)]
    pub proposer: Option<String>,
    /// Training text for the n-gram proposer.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub ngram_order: Option<usize>,
    /// Target text for the script proposer.
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Where to write the artifact.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    /// Directory for manual-review tickets.
    #[arg(long)]
    pub tickets: Option<PathBuf>,
}

fn parse_coverage(s: &str) -> Result<(String, u64), String> {
    let (tag, n) = s.split_once('=').ok_or("expected symbol=count")?;
    let n = n.parse().map_err(|_| format!("invalid count in {s:?}"))?;
    Ok((tag.to_owned(), n))
}

macro_rules! layer {
    ($file:ident, $flags:ident; $($field:ident),*) => {
        RunConfig {
            $($field: $file.$field.or($flags.$field),)*
            min_coverage_flags: $flags.min_coverage_flags,
        }
    };
}

impl RunConfig {
    /// Read a configuration file, resolving its relative paths.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.grammar,
            &mut cfg.vocab,
            &mut cfg.shapes,
            &mut cfg.formulas,
            &mut cfg.graph,
            &mut cfg.candidates,
            &mut cfg.icm,
            &mut cfg.registry,
            &mut cfg.corpus,
            &mut cfg.target,
            &mut cfg.out,
            &mut cfg.tickets,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `file` values take precedence over `flags`.
    pub fn layered(file: RunConfig, flags: RunConfig) -> RunConfig {
        layer!(file, flags; grammar, kind, depth, vocab, shapes, formulas, graph, candidates, icm,
            registry, theta_link, projection, seed, max_steps, temperature, greedy, audit_mode,
            debug_set_threshold, min_coverage, proposer, corpus, ngram_order, target, out,
            max_iterations, tickets)
    }

    pub fn check_paths(&self) -> Result<()> {
        for p in [
            &self.grammar,
            &self.vocab,
            &self.shapes,
            &self.formulas,
            &self.graph,
            &self.candidates,
            &self.corpus,
            &self.target,
        ]
        .into_iter()
        .flatten()
        {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        Ok(())
    }

    pub fn grammar_spec(&self) -> Result<GrammarSpec> {
        let path = self.grammar.as_ref().context("no grammar given (--grammar)")?;
        let source = fs::read_to_string(path).with_context(|| format!("reading grammar {}", path.display()))?;
        let kind = match &self.kind {
            Some(k) => k.parse::<GrammarKind>().map_err(anyhow::Error::msg)?,
            None => guess_kind(path),
        };
        Ok(GrammarSpec {
            kind,
            source,
            unfold_depth: self.depth.unwrap_or(DEFAULT_UNFOLD_DEPTH),
        })
    }

    pub fn compile_options(&self) -> CompileOptions {
        CompileOptions::default()
    }

    pub fn vocabulary(&self) -> Result<Vocabulary> {
        match &self.vocab {
            None => Ok(Vocabulary::printable_ascii()),
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading vocabulary {}", p.display()))?;
                Vocabulary::parse(&text).with_context(|| format!("parsing vocabulary {}", p.display()))
            }
        }
    }

    pub fn projection(&self) -> ProjectionRules {
        self.projection.clone().unwrap_or_default()
    }

    pub fn policy(&self) -> Result<DecodePolicy> {
        let mut p = DecodePolicy::default();
        if let Some(n) = self.max_steps {
            if n == 0 {
                bail!("max-steps must be at least 1");
            }
            p.max_steps = n;
        }
        p.transform = match (self.greedy, self.temperature) {
            (Some(true), _) => WeightTransform::Greedy,
            (_, Some(t)) if t > 0.0 => WeightTransform::Temperature(t),
            (_, Some(t)) => bail!("temperature must be positive, got {t}"),
            _ => WeightTransform::Identity,
        };
        if let Some(m) = &self.audit_mode {
            p.audit_mode = match m.as_str() {
                "summary" => AuditMode::Summary,
                "full" => AuditMode::Full,
                "key-event" => AuditMode::KeyEvent,
                other => bail!("unknown audit mode {other:?}"),
            };
        }
        if let Some(t) = self.debug_set_threshold {
            p.debug_set_threshold = t;
        }
        p.min_coverage = self.min_coverage.clone().unwrap_or_default();
        for (tag, n) in &self.min_coverage_flags {
            p.min_coverage.entry(tag.clone()).or_insert(*n);
        }
        Ok(p)
    }

    pub fn proposer(&self) -> Result<Arc<dyn Proposer>> {
        Ok(match self.proposer.as_deref().unwrap_or("uniform") {
            "uniform" => Arc::new(UniformProposer),
            "ngram" => {
                let path = self.corpus.as_ref().context("the ngram proposer needs --corpus")?;
                let text = fs::read(path).with_context(|| format!("reading corpus {}", path.display()))?;
                let docs: Vec<&[u8]> = text.split(|b| *b == b'\n').filter(|l| !l.is_empty()).collect();
                Arc::new(NgramProposer::train(&docs, self.ngram_order.unwrap_or(3)))
            }
            "script" => {
                let path = self.target.as_ref().context("the script proposer needs --target")?;
                let text = fs::read(path).with_context(|| format!("reading target {}", path.display()))?;
                Arc::new(ScriptProposer::new(text))
            }
            other => bail!("unknown proposer {other:?}"),
        })
    }

    /// Shapes and formulas from files plus active records admitted from
    /// candidates, with the records themselves and their lattice.
    pub fn constraints(&self) -> Result<Constraints> {
        let mut shapes: Vec<Shape> = match &self.shapes {
            Some(p) => read_json(p, "shapes")?,
            None => Vec::new(),
        };
        let mut formulas = Vec::new();
        if let Some(p) = &self.formulas {
            let decls: Vec<FormulaDecl> = read_json(p, "formulas")?;
            for d in decls {
                let mut f = LinearFormula::parse(&d.id, &d.formula)
                    .with_context(|| format!("formula {}", d.id))?;
                f.target_kind = d.target_kind;
                f.free = d.free;
                f.check_well_formed().with_context(|| format!("formula {}", d.id))?;
                formulas.push(f);
            }
        }
        let store = match &self.icm {
            Some(dir) => IcmStore::open(dir).with_context(|| format!("opening store {}", dir.display()))?,
            None => IcmStore::in_memory(),
        };
        if let Some(p) = &self.candidates {
            let graph_path = self.graph.as_ref().context("candidates need a model graph (--graph)")?;
            let text = fs::read_to_string(graph_path)?;
            let graph = TypedGraph::from_json(&text).with_context(|| format!("graph {}", graph_path.display()))?;
            let candidates: Vec<Candidate> = read_json(p, "candidates")?;
            let opts = AdmissionOptions {
                theta_link: self.theta_link.unwrap_or(DEFAULT_THETA_LINK),
                ..AdmissionOptions::default()
            };
            for c in &candidates {
                admit_candidate(c, &graph, &store, &opts).with_context(|| format!("candidate for {}", c.target))?;
            }
        }
        let records = store.generation_context();
        shapes.extend(shapes_of(&records));
        formulas.extend(formulas_of(&records));
        let lattice = build_dependency_lattice(&records)?;
        Ok(Constraints {
            shapes,
            formulas,
            records,
            lattice,
            store,
        })
    }

    pub fn open_registry(&self) -> Result<Registry> {
        let dir = self.registry.clone().unwrap_or_else(|| PathBuf::from(".certgen"));
        Registry::open(&dir).with_context(|| format!("opening registry {}", dir.display()))
    }
}

pub struct Constraints {
    pub shapes: Vec<Shape>,
    pub formulas: Vec<LinearFormula>,
    pub records: Vec<ConstraintRecord>,
    pub lattice: DependencyLattice,
    pub store: IcmStore,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FormulaDecl {
    id: String,
    formula: String,
    #[serde(default)]
    target_kind: Option<String>,
    #[serde(default)]
    free: Vec<String>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {what} {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {what} {}", path.display()))
}

pub fn guess_kind(path: &Path) -> GrammarKind {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => GrammarKind::JsonSchema,
        Some("gbnf") => GrammarKind::Gbnf,
        _ => GrammarKind::Regex,
    }
}
