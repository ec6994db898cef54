//! `certgen`: compile grammars, generate under a mask, validate, verify,
//! repair and inspect the evidence registry.
//!
//! Exit codes: 0 pass, 1 unreadable or invalid input, 2 validation failed,
//! 3 identity mismatch or tampering, 4 usage error.

mod config;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use certgen_core::clock::LogicalClock;
use certgen_core::compiler::{compile, PrefixDfa};
use certgen_core::decoder::{check_structure, generate, escape, AuditTrail, Decoder};
use certgen_core::digest::Digest;
use certgen_core::evidence::{
    enrich, seal, validate_layers, verify_bytes, ConstraintRef, EvidenceBundle, ManifestEntry, Registry,
    VerifyError, VerifySources, VersionTag,
};
use certgen_core::repair::{run_repair_loop, write_tickets, DeterministicPatcher, RepairContext, RepairStatus};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use config::{guess_kind, Constraints, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "certgen", version, about = "Constrained generation with re-checkable evidence")]
struct Cli {
    /// Output style.
    #[arg(long, value_enum, default_value_t = Format::Human, global = true)]
    format: Format,
    /// JSON configuration file. Its values override flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Human,
    Machine,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a grammar and print its automaton summary.
    Compile {
        path: PathBuf,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        depth: Option<u32>,
    },
    /// Generate an artifact, validate it and seal the evidence.
    Generate {
        #[command(flatten)]
        run: RunConfig,
        /// Run the repair loop when validation fails.
        #[arg(long)]
        repair: bool,
    },
    /// Validate an existing artifact and seal the evidence.
    Validate {
        #[arg(long)]
        artifact: PathBuf,
        #[command(flatten)]
        run: RunConfig,
    },
    /// Re-check an artifact against its bundle from the sources alone.
    Verify {
        #[arg(long)]
        artifact: PathBuf,
        /// Registry address or bundle file.
        #[arg(long)]
        bundle: String,
        #[command(flatten)]
        run: RunConfig,
    },
    /// Repair an artifact whose bundle records violations.
    Repair {
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        bundle: String,
        #[command(flatten)]
        run: RunConfig,
    },
    /// Inspect the evidence registry.
    Registry {
        #[arg(long)]
        registry: Option<PathBuf>,
        #[command(subcommand)]
        action: RegistryAction,
    },
}

#[derive(Debug, Subcommand)]
enum RegistryAction {
    /// List manifest entries.
    Ls,
    /// Print one stored object.
    Show { address: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Code {
    Pass = 0,
    Input = 1,
    ValidationFailed = 2,
    Tamper = 3,
    Usage = 4,
}

/// Errors that are the caller's fault rather than the input's.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

struct Outcome {
    code: Code,
    report: Map<String, Value>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Code::Usage as u8),
            };
        }
    };
    let format = cli.format;
    match run(cli) {
        Ok(out) => {
            print_report(format, &out.report);
            ExitCode::from(out.code as u8)
        }
        Err(e) => {
            let code = if e.is::<UsageError>() { Code::Usage } else { Code::Input };
            match format {
                Format::Machine => println!("{}", json!({"error": format!("{e:#}"), "exit": code as u8})),
                Format::Human => eprintln!("error: {e:#}"),
            }
            ExitCode::from(code as u8)
        }
    }
}

fn print_report(format: Format, report: &Map<String, Value>) {
    match format {
        Format::Machine => println!("{}", Value::Object(report.clone())),
        Format::Human => {
            for (k, v) in report {
                match v {
                    Value::String(s) => println!("{k}: {s}"),
                    Value::Array(items) if items.iter().all(Value::is_string) => {
                        println!("{k}:");
                        for i in items {
                            println!("  {}", i.as_str().unwrap_or_default());
                        }
                    }
                    other => println!("{k}: {other}"),
                }
            }
        }
    }
}

fn settle(cli_config: Option<&Path>, flags: RunConfig) -> Result<RunConfig> {
    let cfg = match cli_config {
        Some(p) => RunConfig::layered(RunConfig::from_file(p)?, flags),
        None => flags,
    };
    cfg.check_paths().map_err(|e| UsageError(e.to_string()))?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<Outcome> {
    let config = cli.config.as_deref();
    match cli.command {
        Command::Compile { path, kind, depth } => {
            let flags = RunConfig {
                grammar: Some(path),
                kind,
                depth,
                ..RunConfig::default()
            };
            cmd_compile(&settle(config, flags)?)
        }
        Command::Generate { run, repair } => cmd_generate(&settle(config, run)?, repair),
        Command::Validate { artifact, run } => cmd_validate(&settle(config, run)?, &artifact),
        Command::Verify { artifact, bundle, run } => cmd_verify(&settle(config, run)?, &artifact, &bundle),
        Command::Repair { artifact, bundle, run } => cmd_repair(&settle(config, run)?, &artifact, &bundle),
        Command::Registry { registry, action } => {
            let flags = RunConfig {
                registry,
                ..RunConfig::default()
            };
            cmd_registry(&settle(config, flags)?, action)
        }
    }
}

fn compile_grammar(cfg: &RunConfig) -> Result<PrefixDfa> {
    let spec = cfg.grammar_spec()?;
    let path = cfg.grammar.as_deref().unwrap_or(Path::new("?"));
    compile(&spec, &cfg.compile_options()).with_context(|| format!("compiling {}", path.display()))
}

fn cmd_compile(cfg: &RunConfig) -> Result<Outcome> {
    let dfa = compile_grammar(cfg)?;
    let path = cfg.grammar.as_ref().expect("compile sets the grammar");
    let kind = match &cfg.kind {
        Some(k) => k.clone(),
        None => guess_kind(path).to_string(),
    };
    let mut report = Map::new();
    report.insert("kind".into(), json!(kind));
    report.insert("states".into(), json!(dfa.state_count()));
    report.insert("shortest-accepted-length".into(), json!(dfa.completion_len(dfa.start())));
    report.insert("shortest-accepted".into(), json!(escape(&dfa.completion(dfa.start()))));
    report.insert("automaton-id".into(), json!(dfa.automaton_id().to_hex()));
    Ok(Outcome {
        code: Code::Pass,
        report,
    })
}

fn constraint_refs(c: &Constraints) -> Vec<ConstraintRef> {
    c.records.iter().map(ConstraintRef::from).collect()
}

fn write_artifact(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn bundle_report(report: &mut Map<String, Value>, entry: &ManifestEntry, bundle: &EvidenceBundle) {
    report.remove("failed-layers");
    report.remove("violations");
    report.insert("artifact-address".into(), json!(entry.artifact.to_hex()));
    report.insert("bundle-address".into(), json!(entry.bundle.to_hex()));
    report.insert("version".into(), json!(entry.version.to_string()));
    report.insert("verdict".into(), json!(if bundle.verdict() { "pass" } else { "fail" }));
    let failed: Vec<String> = bundle
        .evidence
        .failed_layers()
        .iter()
        .map(|l| serde_json::to_value(l).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default())
        .collect();
    if !failed.is_empty() {
        report.insert("failed-layers".into(), json!(failed));
    }
    let mut findings = Vec::new();
    if let Some(sem) = &bundle.evidence.semantic {
        for v in &sem.violations {
            findings.push(format!("{} [{}]: expected {}", v.path, v.shape_id, v.expected));
        }
    }
    if let Some(logic) = &bundle.evidence.logic {
        for t in logic.traces.iter().filter(|t| !t.pass) {
            if let certgen_core::validators::Outcome::Unsat { core } = &t.outcome {
                let scope = t.element_id.as_deref().unwrap_or("*");
                findings.push(format!("{scope} [{}]: unsat core {}", t.formula_id, core.join(", ")));
            }
        }
    }
    if !findings.is_empty() {
        report.insert("violations".into(), json!(findings));
    }
}

fn cmd_generate(cfg: &RunConfig, repair: bool) -> Result<Outcome> {
    let out_path = cfg
        .out
        .clone()
        .ok_or_else(|| UsageError("generate needs an output path (--out)".into()))?;
    let dfa = Arc::new(compile_grammar(cfg)?);
    let vocab = Arc::new(cfg.vocabulary()?);
    let policy = cfg.policy().map_err(|e| UsageError(e.to_string()))?;
    let proposer = cfg.proposer()?;
    let constraints = cfg.constraints()?;
    let registry = cfg.open_registry()?;
    let clock = LogicalClock::global();

    let decoder = Decoder::new(Arc::clone(&dfa), Arc::clone(&vocab));
    let gen = generate(proposer.as_ref(), &decoder, &policy, cfg.seed.unwrap_or(0), clock)?;
    let projection = cfg.projection();
    let composed = validate_layers(
        gen.trace.clone(),
        &gen.artifact,
        &projection,
        &constraints.shapes,
        &constraints.formulas,
        clock,
    )?;
    let mut bundle = enrich(composed, gen.trail)?;
    bundle.constraints = constraint_refs(&constraints);
    let sealed = seal(&gen.artifact, bundle, clock.tick())?;
    let entry = registry.publish(&gen.artifact, &sealed)?;
    write_artifact(&out_path, &gen.artifact)?;

    let mut report = Map::new();
    report.insert("artifact".into(), json!(out_path.display().to_string()));
    report.insert("steps".into(), json!(sealed.audit.token_count));
    report.insert("closures".into(), json!(gen.trace.closures));
    if gen.trace.steps_exhausted {
        report.insert("steps-exhausted".into(), json!(true));
    }
    bundle_report(&mut report, &entry, &sealed);
    if sealed.verdict() {
        return Ok(Outcome {
            code: Code::Pass,
            report,
        });
    }
    if !repair {
        return Ok(Outcome {
            code: Code::ValidationFailed,
            report,
        });
    }
    repair_and_report(cfg, &dfa, &constraints, &registry, &gen.artifact, &sealed, &out_path, report)
}

#[allow(clippy::too_many_arguments)]
fn repair_and_report(
    cfg: &RunConfig,
    dfa: &PrefixDfa,
    constraints: &Constraints,
    registry: &Registry,
    artifact: &[u8],
    bundle: &EvidenceBundle,
    out_path: &Path,
    mut report: Map<String, Value>,
) -> Result<Outcome> {
    let projection = cfg.projection();
    let ctx = RepairContext {
        dfa,
        projection: &projection,
        shapes: &constraints.shapes,
        formulas: &constraints.formulas,
        lattice: &constraints.lattice,
        records: &constraints.records,
        store: Some(&constraints.store),
        clock: LogicalClock::global(),
    };
    let max = cfg.max_iterations.unwrap_or(3);
    if max == 0 {
        return Err(UsageError("max-iterations must be at least 1".into()).into());
    }
    let r = run_repair_loop(artifact, bundle, &ctx, &DeterministicPatcher, max)?;
    let mut last = None;
    for b in &r.bundles {
        last = Some((registry.publish(&r.artifact, b)?, b));
    }
    write_artifact(out_path, &r.artifact)?;
    report.insert("repair".into(), json!(r.status));
    report.insert("iterations".into(), json!(r.iterations));
    report.insert(
        "patches".into(),
        json!(r.applied.iter().map(|a| a.description.clone()).collect::<Vec<_>>()),
    );
    if !r.promoted.is_empty() {
        report.insert("promoted".into(), json!(r.promoted));
    }
    if let Some((entry, b)) = last {
        bundle_report(&mut report, &entry, b);
        if r.status == RepairStatus::Repaired {
            registry.record(&ManifestEntry {
                version: VersionTag::Final,
                previous: Some(entry.bundle),
                ..entry
            })?;
        }
    }
    if r.status == RepairStatus::Repaired {
        return Ok(Outcome {
            code: Code::Pass,
            report,
        });
    }
    let dir = cfg.tickets.clone().unwrap_or_else(|| {
        let mut p = out_path.as_os_str().to_owned();
        p.push(".tickets");
        PathBuf::from(p)
    });
    let paths = write_tickets(&dir, &r.tickets)?;
    report.insert(
        "tickets".into(),
        json!(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>()),
    );
    Ok(Outcome {
        code: Code::ValidationFailed,
        report,
    })
}

fn cmd_validate(cfg: &RunConfig, artifact_path: &Path) -> Result<Outcome> {
    let artifact = fs::read(artifact_path).with_context(|| format!("reading {}", artifact_path.display()))?;
    let dfa = compile_grammar(cfg)?;
    let constraints = cfg.constraints()?;
    let clock = LogicalClock::global();
    let st = check_structure(&dfa, &artifact, clock);
    let composed = validate_layers(
        st,
        &artifact,
        &cfg.projection(),
        &constraints.shapes,
        &constraints.formulas,
        clock,
    )?;
    let mut bundle = enrich(composed, AuditTrail::new(dfa.automaton_id(), Default::default()))?;
    bundle.constraints = constraint_refs(&constraints);
    let sealed = seal(&artifact, bundle, clock.tick())?;
    let registry = cfg.open_registry()?;
    let entry = registry.publish(&artifact, &sealed)?;
    let mut report = Map::new();
    bundle_report(&mut report, &entry, &sealed);
    Ok(Outcome {
        code: if sealed.verdict() { Code::Pass } else { Code::ValidationFailed },
        report,
    })
}

fn load_bundle_bytes(cfg: &RunConfig, bundle: &str) -> Result<Vec<u8>> {
    if let Ok(address) = bundle.parse::<Digest>() {
        let registry = cfg.open_registry()?;
        return Ok(registry.get(&address)?.to_vec());
    }
    let path = Path::new(bundle);
    if !path.exists() {
        return Err(UsageError(format!("{bundle} is neither a registry address nor a file")).into());
    }
    fs::read(path).with_context(|| format!("reading {}", path.display()))
}

fn cmd_verify(cfg: &RunConfig, artifact_path: &Path, bundle: &str) -> Result<Outcome> {
    let artifact = fs::read(artifact_path).with_context(|| format!("reading {}", artifact_path.display()))?;
    let bundle_bytes = load_bundle_bytes(cfg, bundle)?;
    let spec = cfg.grammar_spec()?;
    let constraints = cfg.constraints()?;
    let projection = cfg.projection();
    let vocab = match &cfg.vocab {
        Some(_) => Some(cfg.vocabulary()?),
        None => None,
    };
    let sources = VerifySources {
        grammar: &spec,
        options: cfg.compile_options(),
        projection: &projection,
        shapes: &constraints.shapes,
        formulas: &constraints.formulas,
        vocab: vocab.as_ref(),
    };
    let mut report = Map::new();
    let code = match verify_bytes(&bundle_bytes, &artifact, &sources, LogicalClock::global()) {
        Ok(v) => {
            report.insert("verdict".into(), json!(if v.holds { "pass" } else { "fail" }));
            report.insert("sealed".into(), json!(v.sealed));
            if !v.failed_layers.is_empty() {
                report.insert("failed-layers".into(), json!(v.failed_layers));
            }
            if v.holds {
                Code::Pass
            } else {
                Code::ValidationFailed
            }
        }
        Err(e) => {
            let class = match &e {
                VerifyError::IdentityMismatch { .. } => "identity-mismatch",
                VerifyError::ReplayDivergence(_) => "replay-divergence",
                VerifyError::SealMismatch => "seal-mismatch",
                VerifyError::RecordDivergence { .. } => "record-divergence",
                VerifyError::Malformed(_) => "malformed-bundle",
                _ => bail!(e),
            };
            report.insert("verdict".into(), json!("fail"));
            report.insert("error".into(), json!(class));
            report.insert("detail".into(), json!(e.to_string()));
            Code::Tamper
        }
    };
    Ok(Outcome { code, report })
}

fn cmd_repair(cfg: &RunConfig, artifact_path: &Path, bundle: &str) -> Result<Outcome> {
    let artifact = fs::read(artifact_path).with_context(|| format!("reading {}", artifact_path.display()))?;
    let bytes = load_bundle_bytes(cfg, bundle)?;
    let bundle = EvidenceBundle::from_slice(&bytes).context("parsing bundle")?;
    let dfa = compile_grammar(cfg)?;
    if bundle.evidence.structural.as_ref().map(|s| s.automaton_id) != Some(dfa.automaton_id()) {
        bail!("bundle was not produced for this grammar");
    }
    let constraints = cfg.constraints()?;
    let registry = cfg.open_registry()?;
    let out_path = cfg.out.clone().unwrap_or_else(|| artifact_path.to_owned());
    let mut report = Map::new();
    report.insert("artifact".into(), json!(out_path.display().to_string()));
    repair_and_report(cfg, &dfa, &constraints, &registry, &artifact, &bundle, &out_path, report)
}

fn cmd_registry(cfg: &RunConfig, action: RegistryAction) -> Result<Outcome> {
    let registry = cfg.open_registry()?;
    let mut report = Map::new();
    match action {
        RegistryAction::Ls => {
            let entries = registry.manifest()?;
            let lines: Vec<String> = entries
                .iter()
                .map(|e| format!("{} {} {}", e.version, e.artifact.to_hex(), e.bundle.to_hex()))
                .collect();
            report.insert("entries".into(), json!(lines));
        }
        RegistryAction::Show { address } => {
            let address: Digest = address.parse().map_err(|e| UsageError(format!("{e}")))?;
            let bytes = registry.get(&address)?;
            let value = match serde_json::from_slice::<Value>(&bytes) {
                Ok(v) => v,
                Err(_) => Value::String(String::from_utf8_lossy(&bytes).into_owned()),
            };
            report.insert("address".into(), json!(address.to_hex()));
            report.insert("content".into(), value);
        }
    }
    Ok(Outcome {
        code: Code::Pass,
        report,
    })
}
