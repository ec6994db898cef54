mod common;

use proptest::prelude::*;

use certgen_core::compiler::{compile, CompileError, CompileOptions, GrammarSpec, PrefixDfa};
use common::{cfg_fixtures, regex_oracle, strings_upto};

const ALPHABET: &[u8] = b"abcx";

/// Patterns over `a`, `b`, `c` in the syntax both dialects share.
fn pattern() -> impl Strategy<Value = String> {
    let atom = prop_oneof![
        Just("a".to_owned()),
        Just("b".to_owned()),
        Just("c".to_owned()),
        Just("[ab]".to_owned()),
        Just("[^a]".to_owned()),
        Just(".".to_owned()),
    ];
    atom.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(|v| v.concat()),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| format!("(?:{l}|{r})")),
            inner.clone().prop_map(|e| format!("(?:{e})*")),
            inner.clone().prop_map(|e| format!("(?:{e})+")),
            inner.clone().prop_map(|e| format!("(?:{e})?")),
            (inner, 0u32..3, 0u32..2).prop_map(|(e, m, extra)| format!("(?:{e}){{{m},{}}}", m + extra)),
        ]
    })
}

fn regex_dfa(p: &str) -> PrefixDfa {
    compile(&GrammarSpec::regex(p), &CompileOptions::default()).expect("pattern compiles")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_patterns_agree_with_reference_engine(p in pattern()) {
        let oracle = regex_oracle(&p);
        let dfa = match compile(&GrammarSpec::regex(&p), &CompileOptions::default()) {
            Ok(d) => d,
            Err(CompileError::EmptyLanguage | CompileError::StartStateDead) => {
                for s in strings_upto(ALPHABET, 5) {
                    prop_assert!(!oracle.is_match(&s));
                }
                return Ok(());
            }
            Err(e) => return Err(TestCaseError::fail(format!("{p}: {e}"))),
        };
        for s in strings_upto(ALPHABET, 5) {
            prop_assert_eq!(dfa.accepts(&s), oracle.is_match(&s), "{} on {:?}", p, String::from_utf8_lossy(&s));
        }
    }

    #[test]
    fn live_prefixes_complete_and_dead_prefixes_do_not(p in pattern()) {
        let Ok(dfa) = compile(&GrammarSpec::regex(&p), &CompileOptions::default()) else {
            return Ok(());
        };
        let oracle = regex_oracle(&p);
        let tails = strings_upto(ALPHABET, 3);
        for s in strings_upto(ALPHABET, 4) {
            match dfa.fold(dfa.start(), &s) {
                Some(q) => {
                    prop_assert!(dfa.reach_accept(q));
                    let tail = dfa.completion(q);
                    prop_assert_eq!(tail.len(), dfa.completion_len(q));
                    let mut full = s.clone();
                    full.extend_from_slice(&tail);
                    prop_assert!(oracle.is_match(&full), "{} completes {:?} badly", p, full);
                }
                None => {
                    for t in &tails {
                        let mut full = s.clone();
                        full.extend_from_slice(t);
                        prop_assert!(!oracle.is_match(&full), "{} dropped live prefix {:?}", p, s);
                    }
                }
            }
        }
    }

    #[test]
    fn integer_ranges_accept_exactly_canonical_members(
        lo in prop::option::of(-400i64..400),
        width in prop::option::of(0i64..500),
    ) {
        let hi = match (lo, width) {
            (Some(l), Some(w)) => Some(l + w),
            (None, Some(w)) => Some(w - 250),
            _ => None,
        };
        let mut schema = serde_json::json!({"type": "integer"});
        if let Some(l) = lo {
            schema["minimum"] = l.into();
        }
        if let Some(h) = hi {
            schema["maximum"] = h.into();
        }
        let dfa = compile(&GrammarSpec::json_schema(schema.to_string()), &CompileOptions::default()).unwrap();
        for n in -1200i64..1200 {
            let member = lo.is_none_or(|l| n >= l) && hi.is_none_or(|h| n <= h);
            prop_assert_eq!(dfa.accepts(n.to_string().as_bytes()), member, "{} for {}", n, schema);
        }
        for bad in ["-0", "00", "01", "+1", "-", "", "1.0", "1e2", " 1"] {
            prop_assert!(!dfa.accepts(bad.as_bytes()), "{:?} accepted by {}", bad, schema);
        }
    }
}

#[test]
fn deeper_unfolding_only_adds_strings() {
    for cfg in cfg_fixtures() {
        let strings = strings_upto(cfg.alphabet, 6);
        let mut previous: Option<PrefixDfa> = None;
        for depth in 1..=5 {
            let dfa = compile(&GrammarSpec::gbnf(cfg.to_gbnf(), depth), &CompileOptions::default()).ok();
            if let (Some(shallow), Some(deep)) = (&previous, &dfa) {
                for s in &strings {
                    if shallow.accepts(s) {
                        assert!(deep.accepts(s), "{} loses {:?} at depth {depth}", cfg.name, s);
                    }
                }
            }
            if dfa.is_some() {
                previous = dfa;
            } else {
                assert!(previous.is_none(), "{} became empty at depth {depth}", cfg.name);
            }
        }
    }
}

#[test]
fn identity_ignores_line_endings_and_trailing_space() {
    for cfg in cfg_fixtures() {
        let plain = cfg.to_gbnf();
        let noisy: String = plain.lines().map(|l| format!("{l}  \r\n")).collect::<String>() + "\r\n\n";
        let a = compile(&GrammarSpec::gbnf(plain.clone(), 3), &CompileOptions::default()).unwrap();
        let b = compile(&GrammarSpec::gbnf(noisy, 3), &CompileOptions::default()).unwrap();
        assert_eq!(a.automaton_id(), b.automaton_id(), "{}", cfg.name);
        let c = compile(&GrammarSpec::gbnf(plain, 4), &CompileOptions::default()).unwrap();
        assert_ne!(a.automaton_id(), c.automaton_id(), "{}", cfg.name);
    }
}

#[test]
fn every_fixture_pattern_is_minimal_up_to_reachability() {
    // Two distinct live states must be distinguished by some short suffix.
    for f in common::REGEX_FIXTURES {
        let dfa = regex_dfa(f.pattern);
        let suffixes = strings_upto(f.alphabet, 5);
        let reached: Vec<u32> = {
            let mut seen = std::collections::BTreeSet::new();
            for s in strings_upto(f.alphabet, 5) {
                if let Some(q) = dfa.fold(dfa.start(), &s) {
                    seen.insert(q);
                }
            }
            seen.into_iter().collect()
        };
        for (i, &p) in reached.iter().enumerate() {
            for &q in &reached[i + 1..] {
                let split = suffixes.iter().any(|t| {
                    let ap = dfa.fold(p, t).is_some_and(|r| dfa.is_accepting(r));
                    let aq = dfa.fold(q, t).is_some_and(|r| dfa.is_accepting(r));
                    ap != aq
                });
                assert!(split, "{}: states {p} and {q} are equivalent", f.pattern);
            }
        }
    }
}
