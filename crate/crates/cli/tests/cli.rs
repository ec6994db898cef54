use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn certgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_certgen"))
        .args(args)
        .output()
        .expect("spawn certgen")
}

fn machine(args: &[&str]) -> (i32, Value) {
    let mut full = vec!["--format", "machine"];
    full.extend_from_slice(args);
    let out = certgen(&full);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().last().unwrap_or("{}");
    let report = serde_json::from_str(line)
        .unwrap_or_else(|e| panic!("bad report {line:?}: {e}\nstderr: {}", String::from_utf8_lossy(&out.stderr)));
    (out.status.code().expect("exit code"), report)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace { dir: TempDir::new().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn registry(&self) -> PathBuf {
        self.path("reg")
    }

    /// Generate from the fixture config into `out` and return (exit, report).
    fn generate(&self, out: &str, extra: &[&str]) -> (i32, Value) {
        let config = fixture("config.json");
        let reg = self.registry();
        let out = self.path(out);
        let mut args = vec!["--config", s(&config), "generate", "--registry", s(&reg), "--out", s(&out)];
        args.extend_from_slice(extra);
        machine(&args)
    }

    fn verify(&self, artifact: &Path, bundle: &str, extra: &[&str]) -> (i32, Value) {
        let reg = self.registry();
        let mut args = vec!["verify", "--registry", s(&reg), "--artifact", s(artifact), "--bundle", bundle];
        args.extend_from_slice(extra);
        machine(&args)
    }
}

fn schema_sources() -> Vec<String> {
    vec![
        "--grammar".into(),
        fixture("elements.schema.json").to_str().unwrap().into(),
        "--shapes".into(),
        fixture("shapes.json").to_str().unwrap().into(),
        "--formulas".into(),
        fixture("formulas.json").to_str().unwrap().into(),
    ]
}

#[test]
fn compile_brackets_reports_states_and_identity() {
    let g = fixture("brackets.gbnf");
    let (code, a) = machine(&["compile", s(&g), "--depth", "3"]);
    assert_eq!(code, 0);
    assert_eq!(a["kind"], "gbnf");
    assert!(a["states"].as_u64().unwrap() > 0);
    assert_eq!(a["shortest-accepted"], "()");
    assert_eq!(a["shortest-accepted-length"], 2);
    let id = a["automaton-id"].as_str().unwrap();
    assert_eq!(id.len(), 64);

    let (_, b) = machine(&["compile", s(&g), "--depth", "3"]);
    assert_eq!(a["automaton-id"], b["automaton-id"]);
    let (_, deeper) = machine(&["compile", s(&g), "--depth", "4"]);
    assert_ne!(a["automaton-id"], deeper["automaton-id"]);
}

#[test]
fn compile_human_output_is_key_value_lines() {
    let g = fixture("brackets.gbnf");
    let out = certgen(&["compile", s(&g), "--depth", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("states: ")));
    assert!(text.lines().any(|l| l.starts_with("automaton-id: ")));
}

#[test]
fn compile_rejects_malformed_grammar_with_diagnostic() {
    let ws = Workspace::new();
    let bad = ws.path("bad.gbnf");
    std::fs::write(&bad, "root ::= \"a").unwrap();
    let out = certgen(&["compile", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("unterminated"), "stderr: {err}");
}

#[test]
fn missing_input_and_bad_subcommand_are_usage_errors() {
    assert_eq!(certgen(&["compile", "/nonexistent/grammar.gbnf"]).status.code(), Some(4));
    assert_eq!(certgen(&["frobnicate"]).status.code(), Some(4));
    let ws = Workspace::new();
    let g = fixture("brackets.gbnf");
    // generate without an output path
    let out = certgen(&["generate", "--grammar", s(&g), "--registry", s(&ws.registry())]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn generate_is_deterministic_for_a_fixed_seed() {
    let ws = Workspace::new();
    let g = fixture("brackets.gbnf");
    let v = fixture("brackets.vocab");
    let c = fixture("brackets.corpus");
    let reg = ws.registry();
    let mut artifacts = Vec::new();
    for name in ["a.txt", "b.txt"] {
        let out = ws.path(name);
        let (code, report) = machine(&[
            "generate", "--grammar", s(&g), "--depth", "3", "--vocab", s(&v), "--proposer", "ngram",
            "--corpus", s(&c), "--seed", "42", "--registry", s(&reg), "--out", s(&out),
        ]);
        assert_eq!(code, 0, "{report}");
        assert_eq!(report["verdict"], "pass");
        artifacts.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(artifacts[0], artifacts[1]);
    assert!(!artifacts[0].is_empty());
}

#[test]
fn failing_shape_exits_two_with_a_sealed_bundle() {
    let ws = Workspace::new();
    let (code, report) = ws.generate("a.json", &[]);
    assert_eq!(code, 2);
    assert_eq!(report["verdict"], "fail");
    assert_eq!(report["version"], "v1");
    assert_eq!(report["failed-layers"], serde_json::json!(["L2-sem"]));
    let violations = report["violations"].as_array().unwrap();
    assert_eq!(violations.len(), 1);
    assert!(violations[0].as_str().unwrap().contains("e1/op"));

    let addr = report["bundle-address"].as_str().unwrap();
    let (code, shown) = machine(&["registry", "--registry", s(&ws.registry()), "show", addr]);
    assert_eq!(code, 0);
    let bundle = &shown["content"];
    assert_eq!(bundle["format"], "certgen-evidence/1");
    assert_eq!(bundle["seal"]["digest"].as_str().unwrap().len(), 64);
}

#[test]
fn generate_with_repair_produces_repaired_artifact_and_successor() {
    let ws = Workspace::new();
    let (code, report) = ws.generate("a.json", &["--repair"]);
    assert_eq!(code, 0, "{report}");
    assert_eq!(report["verdict"], "pass");
    assert_eq!(report["version"], "v2");
    assert!(report.get("violations").is_none(), "stale findings in {report}");
    assert!(report.get("failed-layers").is_none());
    let repaired = std::fs::read_to_string(ws.path("a.json")).unwrap();
    assert_eq!(repaired, std::fs::read_to_string(fixture("good.target")).unwrap());

    let (_, listing) = machine(&["registry", "--registry", s(&ws.registry()), "ls"]);
    let versions: Vec<String> = listing["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e.as_str().unwrap().split_whitespace().next().unwrap().to_owned())
        .collect();
    assert_eq!(versions, ["v1", "v2", "final"]);
}

#[test]
fn verify_untampered_pair_and_tampering_classes() {
    let ws = Workspace::new();
    let (_, report) = ws.generate("a.json", &["--repair"]);
    let addr = report["bundle-address"].as_str().unwrap().to_owned();
    let artifact = ws.path("a.json");
    let src = schema_sources();
    let src: Vec<&str> = src.iter().map(String::as_str).collect();

    let (code, ok) = ws.verify(&artifact, &addr, &src);
    assert_eq!(code, 0, "{ok}");
    assert_eq!(ok["verdict"], "pass");

    // The DFA rejects a digit-leading reference, so replay diverges.
    let text = std::fs::read_to_string(&artifact).unwrap();
    let broken = ws.path("broken.json");
    std::fs::write(&broken, text.replace("\"o1\"}}", "\"1o\"}}")).unwrap();
    let (code, r) = ws.verify(&broken, &addr, &src);
    assert_eq!(code, 3);
    assert_eq!(r["error"], "replay-divergence");

    // Still grammatical, but no longer the sealed artifact.
    let swapped = ws.path("swapped.json");
    std::fs::write(&swapped, text.replace("\"period\":5", "\"period\":7")).unwrap();
    let (code, r) = ws.verify(&swapped, &addr, &src);
    assert_eq!(code, 3);
    assert_eq!(r["error"], "seal-mismatch");

    let g = fixture("brackets.gbnf");
    let (code, r) = ws.verify(&artifact, &addr, &["--grammar", s(&g)]);
    assert_eq!(code, 3);
    assert_eq!(r["error"], "identity-mismatch");
}

#[test]
fn verify_accepts_a_bundle_file_and_flags_byte_edits() {
    let ws = Workspace::new();
    let (_, report) = ws.generate("a.json", &[]);
    let addr = report["bundle-address"].as_str().unwrap();
    let object = ws.registry().join("objects").join(&addr[..2]).join(&addr[2..]);
    let content = std::fs::read_to_string(object).unwrap();
    let bundle_file = ws.path("bundle.json");
    std::fs::write(&bundle_file, &content).unwrap();
    let src = schema_sources();
    let src: Vec<&str> = src.iter().map(String::as_str).collect();
    let artifact = ws.path("a.json");

    // The failing verdict holds up under verification.
    let (code, r) = ws.verify(&artifact, s(&bundle_file), &src);
    assert_eq!(code, 2, "{r}");

    // Flip the recorded semantic verdict.
    let forged = content.replacen("\"pass\":false", "\"pass\":true", 1);
    assert_ne!(forged, content);
    std::fs::write(&bundle_file, forged).unwrap();
    let (code, _) = ws.verify(&artifact, s(&bundle_file), &src);
    assert_eq!(code, 3);

    std::fs::write(&bundle_file, "{not json").unwrap();
    let (code, r) = ws.verify(&artifact, s(&bundle_file), &src);
    assert_eq!(code, 3);
    assert_eq!(r["error"], "malformed-bundle");
}

#[test]
fn validate_and_repair_subcommands() {
    let ws = Workspace::new();
    let config = fixture("config.json");
    let dangling = fixture("dangling.target");
    let reg = ws.registry();
    let (code, r) = machine(&["--config", s(&config), "validate", "--registry", s(&reg), "--artifact", s(&dangling)]);
    assert_eq!(code, 2, "{r}");
    let addr = r["bundle-address"].as_str().unwrap().to_owned();

    let out = ws.path("fixed.json");
    let (code, r) = machine(&[
        "--config", s(&config), "repair", "--registry", s(&reg), "--artifact", s(&dangling), "--bundle", &addr,
        "--out", s(&out),
    ]);
    assert_eq!(code, 0, "{r}");
    assert_eq!(r["verdict"], "pass");
    assert!(std::fs::read_to_string(&out).unwrap().contains("\"op\":\"o1\""));
}
