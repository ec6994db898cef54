mod common;

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use certgen_core::clock::LogicalClock;
use certgen_core::compiler::{compile, CompileOptions, GrammarSpec};
use certgen_core::constraints::Layer;
use certgen_core::decoder::{Decoder, Vocabulary};
use certgen_core::evidence::{Registry, RegistryError};
use certgen_core::evidence::{check_seal, compose_seq, seal, verify_bytes, EvidenceBundle, VerifyError, VerifySources};
use certgen_core::validators::ProjectionRules;
use certgen_core::Digest;
use common::{element_doc, event_formulas, event_shapes, sealed_pair, Fault, ELEMENTS_SCHEMA};

struct Setup {
    spec: GrammarSpec,
    vocab: Arc<Vocabulary>,
    decoder: Decoder,
}

fn setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let spec = GrammarSpec::json_schema(ELEMENTS_SCHEMA);
        let dfa = Arc::new(compile(&spec, &CompileOptions::default()).unwrap());
        let vocab = Arc::new(Vocabulary::printable_ascii());
        let decoder = Decoder::new(dfa, Arc::clone(&vocab));
        Setup { spec, vocab, decoder }
    })
}

fn verify_pair(bundle: &[u8], artifact: &[u8]) -> Result<certgen_core::evidence::Verdict, VerifyError> {
    let s = setup();
    let shapes = event_shapes();
    let formulas = event_formulas();
    let rules = ProjectionRules::default();
    let sources = VerifySources {
        grammar: &s.spec,
        options: CompileOptions::default(),
        projection: &rules,
        shapes: &shapes,
        formulas: &formulas,
        vocab: Some(&s.vocab),
    };
    verify_bytes(bundle, artifact, &sources, &LogicalClock::default())
}

/// Up to five events with at most one fault each.
fn document() -> impl Strategy<Value = (u64, usize, Vec<(usize, Fault)>)> {
    (any::<u64>(), 1usize..6).prop_flat_map(|(seed, events)| {
        let fault = prop_oneof![Just(None), Just(Some(Fault::DanglingOp)), Just(Some(Fault::PeriodOutOfRange))];
        prop::collection::vec(fault, events).prop_map(move |fs| {
            let faults = fs.into_iter().enumerate().filter_map(|(i, f)| f.map(|f| (i, f))).collect();
            (seed, events, faults)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn sealed_pairs_verify_with_the_recorded_verdict((seed, events, faults) in document()) {
        let doc = element_doc(&mut ChaCha8Rng::seed_from_u64(seed), events, &faults);
        let clock = LogicalClock::default();
        let (artifact, bytes) = sealed_pair(&setup().decoder, &doc, &clock);
        let verdict = verify_pair(&bytes, &artifact).unwrap();

        let mut expected = Vec::new();
        if faults.iter().any(|(_, f)| *f == Fault::DanglingOp) {
            expected.push(Layer::L2Sem);
        }
        if faults.iter().any(|(_, f)| *f == Fault::PeriodOutOfRange) {
            expected.push(Layer::L2Logic);
        }
        prop_assert_eq!(verdict.holds, faults.is_empty());
        prop_assert_eq!(&verdict.failed_layers, &expected);
        prop_assert!(verdict.sealed);

        let bundle = EvidenceBundle::from_slice(&bytes).unwrap();
        prop_assert_eq!(bundle.to_canonical_bytes(), bytes);
        prop_assert_eq!(bundle.verdict(), faults.is_empty());
        prop_assert_eq!(check_seal(&artifact, &bundle), Some(true));
    }

    #[test]
    fn seals_bind_every_artifact_byte(seed in any::<u64>(), at in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let doc = element_doc(&mut ChaCha8Rng::seed_from_u64(seed), 2, &[]);
        let (artifact, bytes) = sealed_pair(&setup().decoder, &doc, &LogicalClock::default());
        let bundle = EvidenceBundle::from_slice(&bytes).unwrap();
        let mut edited = artifact.clone();
        let i = at.index(edited.len());
        edited[i] ^= flip;
        prop_assert_eq!(check_seal(&edited, &bundle), Some(false));
        let err = verify_pair(&bytes, &edited).unwrap_err();
        prop_assert!(err.is_tamper(), "{:?}", err);
    }
}

#[test]
fn resealing_with_a_new_timestamp_changes_only_the_seal() {
    let clock = LogicalClock::default();
    let doc = element_doc(&mut ChaCha8Rng::seed_from_u64(3), 3, &[]);
    let (artifact, bytes) = sealed_pair(&setup().decoder, &doc, &clock);
    let bundle = EvidenceBundle::from_slice(&bytes).unwrap();
    let original = bundle.seal.unwrap();
    let mut unsealed = bundle.clone();
    unsealed.seal = None;
    assert_eq!(check_seal(&artifact, &unsealed), None);
    let again = seal(&artifact, unsealed, clock.tick()).unwrap();
    assert_ne!(again.seal.unwrap().digest, original.digest);
    assert_eq!(again.evidence, bundle.evidence);
    assert_eq!(check_seal(&artifact, &again), Some(true));
}

#[test]
fn composing_a_trace_with_itself_is_rejected() {
    let doc = element_doc(&mut ChaCha8Rng::seed_from_u64(4), 1, &[]);
    let (_, bytes) = sealed_pair(&setup().decoder, &doc, &LogicalClock::default());
    let bundle = EvidenceBundle::from_slice(&bytes).unwrap();
    assert!(compose_seq(bundle.evidence.clone(), bundle.evidence).is_err());
}

#[test]
fn registry_round_trips_and_detects_corruption() {
    let dir = tempfile::tempdir().unwrap();
    let reg = Registry::open(dir.path()).unwrap();
    let clock = LogicalClock::default();
    let doc = element_doc(&mut ChaCha8Rng::seed_from_u64(5), 2, &[(1, Fault::DanglingOp)]);
    let (artifact, bytes) = sealed_pair(&setup().decoder, &doc, &clock);
    let bundle = EvidenceBundle::from_slice(&bytes).unwrap();

    let entry = reg.publish(&artifact, &bundle).unwrap();
    assert_eq!(entry.bundle, Digest::of(&bytes));
    assert_eq!(entry.artifact, Digest::of(&artifact));
    assert_eq!(reg.get_bundle(&entry.bundle).unwrap(), bundle);
    assert_eq!(&*reg.get(&entry.artifact).unwrap(), &artifact[..]);
    assert_eq!(reg.manifest().unwrap(), vec![entry.clone()]);

    // A successor links back and the chain follows the link.
    let next = bundle.successor(bundle.evidence.clone(), bundle.audit.clone(), entry.bundle);
    let next = seal(&artifact, next, clock.tick()).unwrap();
    let second = reg.publish(&artifact, &next).unwrap();
    assert_eq!(second.previous, Some(entry.bundle));
    assert_ne!(second.version, entry.version);
    assert_eq!(reg.chain(&second.bundle).unwrap(), vec![entry.clone(), second.clone()]);

    let hex = entry.bundle.to_hex();
    let path = dir.path().join("objects").join(&hex[..2]).join(&hex[2..]);
    let mut stored = std::fs::read(&path).unwrap();
    stored[10] ^= 1;
    std::fs::write(&path, stored).unwrap();
    let reopened = Registry::open(dir.path()).unwrap();
    assert!(matches!(reopened.get(&entry.bundle), Err(RegistryError::Corrupt(_))));
    let missing = Digest::of(b"never stored");
    assert!(matches!(reopened.get(&missing), Err(RegistryError::NotFound(_))));
}
