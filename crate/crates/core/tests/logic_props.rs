mod common;

use std::collections::BTreeMap;

use proptest::prelude::*;

use certgen_core::clock::LogicalClock;
use certgen_core::validators::logic::{
    check_certificate, decide, minimize_unsat_core, validate_logic, Cmp, Conjunct, Decision, LinearFormula, Outcome,
    Rat, DEFAULT_FM_CAP,
};
use common::{lp_oracle, Rel, Row, VARS};

fn row() -> impl Strategy<Value = Row> {
    (
        [-3i64..=3, -3i64..=3, -3i64..=3],
        prop_oneof![Just(Rel::Le), Just(Rel::Ge), Just(Rel::Eq)],
        -12i64..=12,
    )
        .prop_map(|(coeffs, rel, rhs)| Row { coeffs, rel, rhs })
}

fn system() -> impl Strategy<Value = Vec<Row>> {
    prop::collection::vec(row(), 1..7)
}

fn conjunct(id: String, r: &Row) -> Conjunct {
    let terms = r
        .coeffs
        .iter()
        .zip(VARS)
        .filter(|(c, _)| **c != 0)
        .map(|(c, v)| (Rat::int(*c), v))
        .collect();
    let op = match r.rel {
        Rel::Le => Cmp::Le,
        Rel::Ge => Cmp::Ge,
        Rel::Eq => Cmp::Eq,
    };
    Conjunct::new(id, terms, op, Rat::int(r.rhs))
}

fn conjuncts(rows: &[Row]) -> Vec<Conjunct> {
    rows.iter().enumerate().map(|(i, r)| conjunct(format!("c{}", i + 1), r)).collect()
}

fn free_formula(rows: &[Row]) -> LinearFormula {
    LinearFormula {
        id: "sys".into(),
        variables: VARS.iter().map(|v| v.to_string()).collect(),
        conjuncts: conjuncts(rows),
        free: VARS.iter().map(|v| v.to_string()).collect(),
        target_kind: None,
        provenance: vec![],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn decision_agrees_with_vertex_enumeration(rows in system()) {
        let cs = conjuncts(&rows);
        let refs: Vec<&Conjunct> = cs.iter().collect();
        let expected = lp_oracle(&rows);
        match decide(&refs, DEFAULT_FM_CAP).unwrap() {
            Decision::Sat(model) => {
                prop_assert!(expected, "decided sat, oracle says unsat: {:?}", rows);
                for c in &cs {
                    prop_assert!(c.holds(&model), "model {:?} violates {}", model, c);
                }
            }
            Decision::Unsat => prop_assert!(!expected, "decided unsat, oracle says sat: {:?}", rows),
        }
    }

    #[test]
    fn cores_are_unsat_and_one_minimal_by_the_oracle(rows in system()) {
        let cs = conjuncts(&rows);
        let refs: Vec<&Conjunct> = cs.iter().collect();
        if lp_oracle(&rows) {
            prop_assert!(minimize_unsat_core(&refs, DEFAULT_FM_CAP).is_err());
            return Ok(());
        }
        let core = minimize_unsat_core(&refs, DEFAULT_FM_CAP).unwrap();
        let picked: Vec<Row> = core
            .iter()
            .map(|id| rows[id[1..].parse::<usize>().unwrap() - 1].clone())
            .collect();
        prop_assert!(!lp_oracle(&picked));
        for i in 0..picked.len() {
            let mut rest = picked.clone();
            rest.remove(i);
            prop_assert!(lp_oracle(&rest), "core {:?} not minimal without {}", core, core[i]);
        }
    }

    #[test]
    fn certificates_check_and_forgeries_do_not(rows in system()) {
        let formula = free_formula(&rows);
        let clock = LogicalClock::default();
        let trace = validate_logic(&formula, &BTreeMap::new(), None, &clock).unwrap();
        prop_assert!(check_certificate(&formula, &trace));
        prop_assert_eq!(trace.pass, lp_oracle(&rows));

        let mut flipped = trace.clone();
        flipped.pass = !flipped.pass;
        prop_assert!(!check_certificate(&formula, &flipped));

        if let Outcome::Unsat { core } = &trace.outcome {
            let mut short = trace.clone();
            let mut smaller = core.clone();
            smaller.pop();
            short.outcome = Outcome::Unsat { core: smaller };
            prop_assert!(!check_certificate(&formula, &short));
        }
        if let Outcome::Sat { model } = &trace.outcome {
            let mut moved = model.clone();
            let x = moved.get_mut("x").unwrap();
            *x = Rat(&x.0 + Rat::int(1).0);
            let still = formula.conjuncts.iter().all(|c| c.holds(&moved));
            let mut forged = trace.clone();
            forged.outcome = Outcome::Sat { model: moved };
            prop_assert_eq!(check_certificate(&formula, &forged), still);
        }
    }

    #[test]
    fn rendered_formulas_parse_back(rows in system()) {
        let rows: Vec<Row> = rows.into_iter().filter(|r| r.coeffs.iter().any(|&c| c != 0)).collect();
        prop_assume!(!rows.is_empty());
        let formula = free_formula(&rows);
        let parsed = LinearFormula::parse("sys", &formula.to_string()).unwrap();
        prop_assert_eq!(parsed.conjuncts, formula.conjuncts);
    }
}

#[test]
fn bound_attributes_pin_variables() {
    let formula = LinearFormula::parse("period-range", "period >= 1, period <= 100").unwrap();
    let clock = LogicalClock::default();
    for p in -5i64..110 {
        let bindings = BTreeMap::from([("period".to_owned(), Rat::int(p))]);
        let trace = validate_logic(&formula, &bindings, Some("e0"), &clock).unwrap();
        assert_eq!(trace.pass, (1..=100).contains(&p), "period {p}");
        assert!(check_certificate(&formula, &trace));
        if let Outcome::Unsat { core } = &trace.outcome {
            assert_eq!(core.len(), 2, "{core:?}");
            assert!(core.contains(&"bind:period".to_owned()));
        }
    }
}
