//! Conjunctions of linear constraints over the rationals.
//!
//! Satisfiability is decided by Fourier–Motzkin elimination in exact
//! arithmetic. A satisfying model is recovered by back-substitution, and an
//! unsatisfiable system yields a 1-minimal core by deletion.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::clock::{LogicalClock, Timestamp};
use crate::graph::SourceRef;

/// Cap on the number of inequalities alive during elimination.
pub const DEFAULT_FM_CAP: usize = 10_000;

/// Exact rational. Serialized as a JSON integer when integral and in `i64`
/// range, otherwise as the string `"p/q"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Rat(pub BigRational);

impl Rat {
    pub fn int(n: i64) -> Rat {
        Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Rat {
        Rat(BigRational::zero())
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    /// Exact value of a JSON number (integers and finite floats).
    pub fn from_json(v: &serde_json::Value) -> Option<Rat> {
        if let Some(i) = v.as_i64() {
            return Some(Rat::int(i));
        }
        if let Some(u) = v.as_u64() {
            return Some(Rat(BigRational::from_integer(BigInt::from(u))));
        }
        v.as_f64().and_then(BigRational::from_float).map(Rat)
    }

    pub fn to_json(&self) -> serde_json::Value {
        if self.0.is_integer() {
            if let Some(i) = self.0.to_integer().to_i64() {
                return serde_json::Value::from(i);
            }
        }
        serde_json::Value::String(self.to_string())
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_integer() {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl FromStr for Rat {
    type Err = String;

    /// Accepts `12`, `-3/4` and `2.75`.
    fn from_str(s: &str) -> Result<Rat, String> {
        let s = s.trim();
        let bad = || format!("not a rational number: {s:?}");
        if let Some((p, q)) = s.split_once('/') {
            let p: BigInt = p.trim().parse().map_err(|_| bad())?;
            let q: BigInt = q.trim().parse().map_err(|_| bad())?;
            if q.is_zero() {
                return Err(bad());
            }
            return Ok(Rat(BigRational::new(p, q)));
        }
        if let Some((int, frac)) = s.split_once('.') {
            if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let negative = int.starts_with('-');
            let whole: BigInt = if int.is_empty() || int == "-" || int == "+" {
                BigInt::zero()
            } else {
                int.parse().map_err(|_| bad())?
            };
            let scale = BigInt::from(10).pow(frac.len() as u32);
            let frac: BigInt = frac.parse().map_err(|_| bad())?;
            let mag = whole.abs() * &scale + frac;
            let num = if negative { -mag } else { mag };
            return Ok(Rat(BigRational::new(num, scale)));
        }
        s.parse::<BigInt>().map(|n| Rat(BigRational::from_integer(n))).map_err(|_| bad())
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Rat, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match &v {
            serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            serde_json::Value::Number(_) => {
                Rat::from_json(&v).ok_or_else(|| serde::de::Error::custom("number out of range"))
            }
            _ => Err(serde::de::Error::custom("expected a number or \"p/q\" string")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cmp {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "=")]
    Eq,
}

impl Cmp {
    pub fn holds(self, lhs: &BigRational, rhs: &BigRational) -> bool {
        match self {
            Cmp::Le => lhs <= rhs,
            Cmp::Ge => lhs >= rhs,
            Cmp::Eq => lhs == rhs,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Cmp::Le => "<=",
            Cmp::Ge => ">=",
            Cmp::Eq => "=",
        }
    }
}

/// `Σ coeff·var ⋈ constant`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conjunct {
    pub id: String,
    pub terms: Vec<(Rat, String)>,
    pub op: Cmp,
    pub constant: Rat,
}

impl Conjunct {
    pub fn new(id: impl Into<String>, terms: Vec<(Rat, &str)>, op: Cmp, constant: Rat) -> Conjunct {
        Conjunct {
            id: id.into(),
            terms: terms.into_iter().map(|(c, v)| (c, v.to_owned())).collect(),
            op,
            constant,
        }
    }

    /// `var = value`, used to pin a variable to an artifact attribute.
    pub fn binding(var: &str, value: Rat) -> Conjunct {
        Conjunct::new(format!("bind:{var}"), vec![(Rat::int(1), var)], Cmp::Eq, value)
    }

    pub fn variables(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(|(_, v)| v.as_str())
    }

    pub fn lhs(&self, model: &BTreeMap<String, Rat>) -> Option<BigRational> {
        let mut sum = BigRational::zero();
        for (c, v) in &self.terms {
            sum += &c.0 * &model.get(v)?.0;
        }
        Some(sum)
    }

    pub fn holds(&self, model: &BTreeMap<String, Rat>) -> bool {
        self.lhs(model).is_some_and(|l| self.op.holds(&l, &self.constant.0))
    }
}

impl fmt::Display for Conjunct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            write!(f, "0")?;
        }
        for (i, (c, v)) in self.terms.iter().enumerate() {
            let neg = c.0.is_negative();
            let mag = Rat(c.0.abs());
            match (i, neg) {
                (0, true) => write!(f, "-")?,
                (0, false) => {}
                (_, true) => write!(f, " - ")?,
                (_, false) => write!(f, " + ")?,
            }
            if mag.0.is_one() {
                write!(f, "{v}")?;
            } else {
                write!(f, "{mag}*{v}")?;
            }
        }
        write!(f, " {} {}", self.op.symbol(), self.constant)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearFormula {
    pub id: String,
    pub variables: Vec<String>,
    pub conjuncts: Vec<Conjunct>,
    /// Variables that are never bound from the artifact.
    #[serde(default)]
    pub free: Vec<String>,
    /// When set, the formula is checked once per element of this kind with
    /// variables bound to that element's attributes.
    #[serde(default)]
    pub target_kind: Option<String>,
    #[serde(default)]
    pub provenance: Vec<SourceRef>,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum LogicError {
    #[error("formula syntax at {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("conjunct {conjunct} uses undeclared variable {variable}")]
    UndeclaredVariable { conjunct: String, variable: String },
    #[error("variable {0} is neither bound nor declared free")]
    UnboundVariable(String),
    #[error("elimination exceeded {cap} intermediate constraints")]
    UnboundedGrowth { cap: usize },
    #[error("the conjunct set is satisfiable")]
    InputSatisfiable,
}

impl LinearFormula {
    /// Parse `2*x + y <= 4 && x >= 3`. Conjuncts are separated by `&&`,
    /// `∧` or `,` and named `c1`, `c2`, ... in order.
    pub fn parse(id: &str, text: &str) -> Result<LinearFormula, LogicError> {
        let mut conjuncts = Vec::new();
        let mut variables: Vec<String> = Vec::new();
        let mut offset = 0;
        let normalized = text.replace("&&", ",").replace('∧', ",");
        for part in normalized.split(',') {
            let c = parse_conjunct(&format!("c{}", conjuncts.len() + 1), part, offset)?;
            for v in c.variables() {
                if !variables.iter().any(|x| x == v) {
                    variables.push(v.to_owned());
                }
            }
            conjuncts.push(c);
            offset += part.len() + 1;
        }
        Ok(LinearFormula {
            id: id.to_owned(),
            variables,
            conjuncts,
            free: Vec::new(),
            target_kind: None,
            provenance: Vec::new(),
        })
    }

    pub fn check_well_formed(&self) -> Result<(), LogicError> {
        for c in &self.conjuncts {
            for v in c.variables() {
                if !self.variables.iter().any(|x| x == v) {
                    return Err(LogicError::UndeclaredVariable {
                        conjunct: c.id.clone(),
                        variable: v.to_owned(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn conjunct(&self, id: &str) -> Option<&Conjunct> {
        self.conjuncts.iter().find(|c| c.id == id)
    }
}

impl fmt::Display for LinearFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

/// Parse one `lhs ⋈ rhs` conjunct; both sides are linear expressions.
pub fn parse_conjunct(id: &str, text: &str, base: usize) -> Result<Conjunct, LogicError> {
    let syntax = |message: &str| LogicError::Syntax {
        offset: base,
        message: format!("{message} in {:?}", text.trim()),
    };
    let text = text.replace('≤', "<=").replace('≥', ">=");
    let (op, at, width) = if let Some(i) = text.find("<=") {
        (Cmp::Le, i, 2)
    } else if let Some(i) = text.find(">=") {
        (Cmp::Ge, i, 2)
    } else if let Some(i) = text.find("==") {
        (Cmp::Eq, i, 2)
    } else if let Some(i) = text.find('=') {
        (Cmp::Eq, i, 1)
    } else {
        return Err(syntax("expected <=, >= or ="));
    };
    let (lhs, rhs) = (&text[..at], &text[at + width..]);
    if rhs.contains(['<', '>', '=']) {
        return Err(syntax("more than one comparison"));
    }
    let (lt, lc) = parse_linear(lhs).map_err(|m| syntax(&m))?;
    let (rt, rc) = parse_linear(rhs).map_err(|m| syntax(&m))?;
    // lhs - rhs ⋈ 0  ⇒  Σ (l - r) ⋈ rc - lc
    let mut coeffs: BTreeMap<String, BigRational> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (c, v) in lt.into_iter().chain(rt.into_iter().map(|(c, v)| (-c, v))) {
        if !coeffs.contains_key(&v) {
            order.push(v.clone());
        }
        *coeffs.entry(v).or_insert_with(BigRational::zero) += c;
    }
    let terms: Vec<(Rat, String)> = order
        .into_iter()
        .filter_map(|v| {
            let c = coeffs.remove(&v)?;
            (!c.is_zero()).then_some((Rat(c), v))
        })
        .collect();
    Ok(Conjunct {
        id: id.to_owned(),
        terms,
        op,
        constant: Rat(rc - lc),
    })
}

type Linear = (Vec<(BigRational, String)>, BigRational);

fn parse_linear(text: &str) -> Result<Linear, String> {
    let words: Vec<&str> = text.split_whitespace().collect();
    for pair in words.windows(2) {
        // Does the first word end in an identifier? (`2 x` is a product.)
        let tail: String = pair[0]
            .chars()
            .rev()
            .take_while(|c| c.is_alphanumeric() || *c == '_' || *c == '.')
            .collect();
        let ends = tail.chars().last().is_some_and(|c| c.is_alphabetic() || c == '_');
        let starts = pair[1].chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_');
        if ends && starts {
            return Err(format!("missing operator between {:?} and {:?}", pair[0], pair[1]));
        }
    }
    let mut terms = Vec::new();
    let mut constant = BigRational::zero();
    let src: Vec<char> = text.chars().filter(|c| !c.is_whitespace()).collect();
    if src.is_empty() {
        return Err("empty side".into());
    }
    let mut i = 0;
    while i < src.len() {
        let mut sign = BigRational::one();
        let mut saw_sign = false;
        while i < src.len() && (src[i] == '+' || src[i] == '-') {
            if src[i] == '-' {
                sign = -sign;
            }
            saw_sign = true;
            i += 1;
        }
        if i > 0 && !saw_sign {
            return Err("expected + or - between terms".into());
        }
        let start = i;
        while i < src.len() && (src[i].is_ascii_digit() || src[i] == '.' || src[i] == '/') {
            i += 1;
        }
        let number: Option<BigRational> = if i > start {
            let s: String = src[start..i].iter().collect();
            Some(s.parse::<Rat>()?.0)
        } else {
            None
        };
        if i < src.len() && src[i] == '*' {
            if number.is_none() {
                return Err("'*' without a coefficient".into());
            }
            i += 1;
        }
        let vstart = i;
        if i < src.len() && (src[i].is_alphabetic() || src[i] == '_') {
            while i < src.len() && (src[i].is_alphanumeric() || src[i] == '_' || src[i] == '.') {
                i += 1;
            }
        }
        let var: String = src[vstart..i].iter().collect();
        match (number, var.is_empty()) {
            (Some(n), true) => constant += sign * n,
            (n, false) => terms.push((sign * n.unwrap_or_else(BigRational::one), var)),
            (None, true) => {
                return Err(format!(
                    "unexpected {:?}",
                    src.get(i).map_or("end".to_owned(), |c| c.to_string())
                ))
            }
        }
    }
    Ok((terms, constant))
}

/// `Σ a·x <= b` over a dense variable vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Row {
    coeffs: Vec<BigRational>,
    rhs: BigRational,
}

impl Row {
    /// Scale so the first nonzero coefficient has magnitude one.
    fn normalize(mut self) -> Row {
        if let Some(lead) = self.coeffs.iter().find(|c| !c.is_zero()).map(|c| c.abs()) {
            for c in &mut self.coeffs {
                *c /= &lead;
            }
            self.rhs /= lead;
        }
        self
    }
}

fn rows_of(conjuncts: &[&Conjunct], vars: &[String]) -> Vec<Row> {
    let mut rows = Vec::new();
    for c in conjuncts {
        let mut coeffs = vec![BigRational::zero(); vars.len()];
        for (a, v) in &c.terms {
            let j = vars.iter().position(|x| x == v).expect("variable collected");
            coeffs[j] += &a.0;
        }
        let le = Row {
            coeffs: coeffs.clone(),
            rhs: c.constant.0.clone(),
        };
        let ge = Row {
            coeffs: coeffs.into_iter().map(|a| -a).collect(),
            rhs: -c.constant.0.clone(),
        };
        match c.op {
            Cmp::Le => rows.push(le),
            Cmp::Ge => rows.push(ge),
            Cmp::Eq => {
                rows.push(le);
                rows.push(ge);
            }
        }
    }
    rows
}

/// Decision procedure result.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    Sat(BTreeMap<String, Rat>),
    Unsat,
}

/// Decide a conjunction by Fourier–Motzkin elimination. On success the
/// model assigns every variable; each variable takes the value in its
/// feasible interval closest to zero.
pub fn decide(conjuncts: &[&Conjunct], cap: usize) -> Result<Decision, LogicError> {
    let mut vars: Vec<String> = Vec::new();
    for c in conjuncts {
        for v in c.variables() {
            if !vars.iter().any(|x| x == v) {
                vars.push(v.to_owned());
            }
        }
    }
    let n = vars.len();
    let mut system: Vec<Row> = dedup(rows_of(conjuncts, &vars).into_iter().map(Row::normalize));
    let mut stages: Vec<(usize, Vec<Row>)> = Vec::with_capacity(n);
    let mut remaining: Vec<usize> = (0..n).collect();
    while !remaining.is_empty() {
        // Eliminate the variable producing the fewest new rows.
        let (k, &j) = remaining
            .iter()
            .enumerate()
            .min_by_key(|(_, &j)| {
                let pos = system.iter().filter(|r| r.coeffs[j].is_positive()).count();
                let neg = system.iter().filter(|r| r.coeffs[j].is_negative()).count();
                (pos * neg) as isize - (pos + neg) as isize
            })
            .expect("remaining is non-empty");
        remaining.remove(k);
        let (mut pos, mut neg, mut next) = (Vec::new(), Vec::new(), Vec::new());
        for r in &system {
            if r.coeffs[j].is_positive() {
                pos.push(r);
            } else if r.coeffs[j].is_negative() {
                neg.push(r);
            } else {
                next.push(r.clone());
            }
        }
        if next.len() + pos.len() * neg.len() > cap {
            return Err(LogicError::UnboundedGrowth { cap });
        }
        for p in &pos {
            for q in &neg {
                let (a, b) = (&p.coeffs[j], -&q.coeffs[j]);
                let coeffs: Vec<BigRational> = p
                    .coeffs
                    .iter()
                    .zip(&q.coeffs)
                    .map(|(x, y)| x * &b + y * a)
                    .collect();
                let rhs = &p.rhs * &b + &q.rhs * a;
                next.push(Row { coeffs, rhs }.normalize());
            }
        }
        let next = dedup(next.into_iter());
        stages.push((j, std::mem::replace(&mut system, next)));
    }
    if system.iter().any(|r| r.rhs.is_negative()) {
        return Ok(Decision::Unsat);
    }

    let mut value: Vec<Option<BigRational>> = vec![None; n];
    for (j, rows) in stages.iter().rev() {
        let (mut lo, mut hi): (Option<BigRational>, Option<BigRational>) = (None, None);
        for r in rows {
            let a = &r.coeffs[*j];
            if a.is_zero() {
                continue;
            }
            let mut rest = r.rhs.clone();
            for (k, c) in r.coeffs.iter().enumerate() {
                if k != *j && !c.is_zero() {
                    rest -= c * value[k].as_ref().expect("later variables are assigned");
                }
            }
            let bound = rest / a;
            if a.is_positive() {
                hi = Some(hi.map_or(bound.clone(), |h| h.min(bound)));
            } else {
                lo = Some(lo.map_or(bound.clone(), |l| l.max(bound)));
            }
        }
        let mut v = BigRational::zero();
        if let Some(l) = &lo {
            v = v.max(l.clone());
        }
        if let Some(h) = &hi {
            v = v.min(h.clone());
        }
        value[*j] = Some(v);
    }
    Ok(Decision::Sat(
        vars.into_iter()
            .zip(value)
            .map(|(k, v)| (k, Rat(v.expect("every variable assigned"))))
            .collect(),
    ))
}

fn dedup(rows: impl Iterator<Item = Row>) -> Vec<Row> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for r in rows {
        // Trivially true rows carry no information.
        if r.coeffs.iter().all(Zero::is_zero) && !r.rhs.is_negative() {
            continue;
        }
        if seen.insert(r.clone()) {
            out.push(r);
        }
    }
    out
}

pub fn is_satisfiable(conjuncts: &[&Conjunct], cap: usize) -> Result<bool, LogicError> {
    Ok(matches!(decide(conjuncts, cap)?, Decision::Sat(_)))
}

/// Deletion-based minimization: drop each conjunct in turn and keep the
/// drop whenever the rest stays unsatisfiable. The result is 1-minimal.
pub fn minimize_unsat_core(conjuncts: &[&Conjunct], cap: usize) -> Result<Vec<String>, LogicError> {
    if is_satisfiable(conjuncts, cap)? {
        return Err(LogicError::InputSatisfiable);
    }
    let mut core: Vec<&Conjunct> = conjuncts.to_vec();
    let mut i = 0;
    while i < core.len() {
        let without: Vec<&Conjunct> = core
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, c)| *c)
            .collect();
        if !is_satisfiable(&without, cap)? {
            core = without;
        } else {
            i += 1;
        }
    }
    Ok(core.into_iter().map(|c| c.id.clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Outcome {
    Sat { model: BTreeMap<String, Rat> },
    Unsat { core: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogicTrace {
    pub formula_id: String,
    /// Element whose attributes were bound, for per-element formulas.
    #[serde(default)]
    pub element_id: Option<String>,
    pub bindings: BTreeMap<String, Rat>,
    pub outcome: Outcome,
    pub started: Timestamp,
    pub finished: Timestamp,
    pub pass: bool,
}

/// The formula's conjuncts plus one `bind:` equality per bound variable.
pub fn bound_system(formula: &LinearFormula, bindings: &BTreeMap<String, Rat>) -> Vec<Conjunct> {
    let mut all = formula.conjuncts.clone();
    for v in &formula.variables {
        if let Some(value) = bindings.get(v) {
            all.push(Conjunct::binding(v, value.clone()));
        }
    }
    all
}

pub fn validate_logic(
    formula: &LinearFormula,
    bindings: &BTreeMap<String, Rat>,
    element_id: Option<&str>,
    clock: &LogicalClock,
) -> Result<LogicTrace, LogicError> {
    validate_logic_with_cap(formula, bindings, element_id, clock, DEFAULT_FM_CAP)
}

pub fn validate_logic_with_cap(
    formula: &LinearFormula,
    bindings: &BTreeMap<String, Rat>,
    element_id: Option<&str>,
    clock: &LogicalClock,
    cap: usize,
) -> Result<LogicTrace, LogicError> {
    formula.check_well_formed()?;
    for v in &formula.variables {
        if !bindings.contains_key(v) && !formula.free.contains(v) {
            return Err(LogicError::UnboundVariable(v.clone()));
        }
    }
    let started = clock.tick();
    let system = bound_system(formula, bindings);
    let refs: Vec<&Conjunct> = system.iter().collect();
    let outcome = match decide(&refs, cap)? {
        Decision::Sat(mut model) => {
            for v in &formula.variables {
                model.entry(v.clone()).or_insert_with(Rat::zero);
            }
            Outcome::Sat { model }
        }
        Decision::Unsat => Outcome::Unsat {
            core: minimize_unsat_core(&refs, cap)?,
        },
    };
    let finished = clock.tick();
    Ok(LogicTrace {
        formula_id: formula.id.clone(),
        element_id: element_id.map(str::to_owned),
        bindings: bindings.clone(),
        pass: matches!(outcome, Outcome::Sat { .. }),
        outcome,
        started,
        finished,
    })
}

/// Re-check a logic certificate from the formula alone.
pub fn check_certificate(formula: &LinearFormula, trace: &LogicTrace) -> bool {
    let system = bound_system(formula, &trace.bindings);
    match &trace.outcome {
        Outcome::Sat { model } => trace.pass && system.iter().all(|c| c.holds(model)),
        Outcome::Unsat { core } => {
            if trace.pass {
                return false;
            }
            let Some(members) = core
                .iter()
                .map(|id| system.iter().find(|c| &c.id == id))
                .collect::<Option<Vec<&Conjunct>>>()
            else {
                return false;
            };
            if is_satisfiable(&members, DEFAULT_FM_CAP).unwrap_or(true) {
                return false;
            }
            (0..members.len()).all(|i| {
                let rest: Vec<&Conjunct> = members
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i)
                    .map(|(_, c)| *c)
                    .collect();
                is_satisfiable(&rest, DEFAULT_FM_CAP).unwrap_or(false)
            })
        }
    }
}
