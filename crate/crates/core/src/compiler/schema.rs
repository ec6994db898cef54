//! JSON-Schema subset lowered to the language of canonical serializations.
//!
//! Canonical form: no insignificant whitespace, object members in the order
//! the schema declares them, integers in plain decimal without leading
//! zeros, strings restricted to printable ASCII without escapes.
//!
//! Supported keywords: `type` (object, array, string, integer, boolean,
//! enum), `enum`, `properties`, `required`, `items`, `minItems`, `maxItems`
//! (at most 8), `pattern`, `minimum`, `maximum`. Annotation keywords
//! (`title`, `description`, `$schema`, `$id`, `$comment`, `examples`) are
//! ignored. Objects are closed: undeclared members are rejected.

use serde_json::{Map, Value};

use super::expr::{ByteSet, Expr};
use super::{regex, CompileError};

/// Largest supported `maxItems`.
pub const MAX_ITEMS_LIMIT: u64 = 8;

const ANNOTATIONS: &[&str] = &["title", "description", "$schema", "$id", "$comment", "examples"];

/// Bytes allowed inside a canonical string: printable ASCII except `"` and `\`.
pub fn string_chars() -> ByteSet {
    let mut s = ByteSet::range(0x20, 0x7e);
    s = s.intersect(&ByteSet::single(b'"').complement());
    s.intersect(&ByteSet::single(b'\\').complement())
}

pub fn lower(source: &str) -> Result<Expr, CompileError> {
    let doc: Value =
        serde_json::from_str(source).map_err(|e| CompileError::InvalidSchema(e.to_string()))?;
    lower_value(&doc, "#")
}

fn obj<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>, CompileError> {
    v.as_object()
        .ok_or_else(|| CompileError::InvalidSchema(format!("{path}: schema must be an object")))
}

fn lower_value(v: &Value, path: &str) -> Result<Expr, CompileError> {
    let schema = obj(v, path)?;
    for key in schema.keys() {
        let known = matches!(
            key.as_str(),
            "type" | "enum" | "properties" | "required" | "items" | "minItems" | "maxItems"
                | "pattern" | "minimum" | "maximum"
        );
        if !known && !ANNOTATIONS.contains(&key.as_str()) {
            return Err(CompileError::UnsupportedKeyword(key.clone()));
        }
    }
    let ty = match schema.get("type") {
        None => None,
        Some(Value::String(t)) => Some(t.as_str()),
        Some(_) => return Err(CompileError::UnsupportedKeyword("type (non-string)".into())),
    };
    if let Some(values) = schema.get("enum") {
        return lower_enum(values, ty, path);
    }
    match ty {
        Some("object") => lower_object(schema, path),
        Some("array") => lower_array(schema, path),
        Some("string") => lower_string(schema),
        Some("integer") => lower_integer(schema, path),
        Some("boolean") => Ok(Expr::alt(vec![Expr::literal(b"true"), Expr::literal(b"false")])),
        Some("enum") => Err(CompileError::InvalidSchema(format!(
            "{path}: type enum needs an enum keyword"
        ))),
        Some(other) => Err(CompileError::UnsupportedKeyword(format!("type:{other}"))),
        None => Err(CompileError::InvalidSchema(format!("{path}: missing type"))),
    }
}

fn matches_type(value: &Value, ty: Option<&str>) -> bool {
    match ty {
        None | Some("enum") => true,
        Some("string") => value.is_string(),
        Some("integer") => value.is_i64() || value.is_u64(),
        Some("boolean") => value.is_boolean(),
        Some("object") => value.is_object(),
        Some("array") => value.is_array(),
        Some(_) => false,
    }
}

fn lower_enum(values: &Value, ty: Option<&str>, path: &str) -> Result<Expr, CompileError> {
    let values = values
        .as_array()
        .ok_or_else(|| CompileError::InvalidSchema(format!("{path}: enum must be an array")))?;
    let mut alts = Vec::new();
    for v in values {
        if v.is_f64() {
            return Err(CompileError::UnsupportedKeyword("enum (non-integer number)".into()));
        }
        if let Value::String(s) = v {
            if !s.bytes().all(|b| string_chars().contains(b)) {
                return Err(CompileError::UnsupportedKeyword(
                    "enum (string needing escapes)".into(),
                ));
            }
        }
        if matches_type(v, ty) {
            let text = serde_json::to_string(v).expect("JSON value serializes");
            alts.push(Expr::literal(text.as_bytes()));
        }
    }
    if alts.is_empty() {
        return Err(CompileError::UnsatisfiableSchema(format!("{path}: enum admits no value")));
    }
    Ok(Expr::alt(alts))
}

fn lower_object(schema: &Map<String, Value>, path: &str) -> Result<Expr, CompileError> {
    let empty = Map::new();
    let props = match schema.get("properties") {
        None => &empty,
        Some(p) => obj(p, path)?,
    };
    let required: Vec<&str> = match schema.get("required") {
        None => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|r| {
                r.as_str().ok_or_else(|| {
                    CompileError::InvalidSchema(format!("{path}: required entries must be strings"))
                })
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(CompileError::InvalidSchema(format!("{path}: required must be an array")))
        }
    };
    for r in &required {
        if !props.contains_key(*r) {
            return Err(CompileError::UnsatisfiableSchema(format!(
                "{path}: required member {r:?} is not declared and objects are closed"
            )));
        }
    }

    // (member text, required?) in declared order.
    let mut members = Vec::with_capacity(props.len());
    for (name, sub) in props {
        let value = lower_value(sub, &format!("{path}/properties/{name}"))?;
        let key = serde_json::to_string(name).expect("string serializes");
        let mut text = key.into_bytes();
        text.push(b':');
        let member = Expr::tag(name.clone(), Expr::concat(vec![Expr::literal(&text), value]));
        members.push((member, required.contains(&name.as_str())));
    }

    let comma = || Expr::literal(b",");
    // Members after the first present one: each is ",m" (required) or (",m")?.
    let tail = |from: usize| -> Expr {
        Expr::concat(
            members[from..]
                .iter()
                .map(|(m, req)| {
                    let item = Expr::concat(vec![comma(), m.clone()]);
                    if *req {
                        item
                    } else {
                        Expr::optional(item)
                    }
                })
                .collect(),
        )
    };
    // Choose which member is the first one present.
    let mut alts = Vec::new();
    let mut all_optional = true;
    for (i, (m, req)) in members.iter().enumerate() {
        alts.push(Expr::concat(vec![m.clone(), tail(i + 1)]));
        if *req {
            all_optional = false;
            break;
        }
    }
    if all_optional {
        alts.push(Expr::Epsilon);
    }
    Ok(Expr::concat(vec![
        Expr::literal(b"{"),
        Expr::alt(alts),
        Expr::literal(b"}"),
    ]))
}

fn as_count(v: Option<&Value>, key: &str, path: &str) -> Result<Option<u64>, CompileError> {
    match v {
        None => Ok(None),
        Some(v) => v.as_u64().map(Some).ok_or_else(|| {
            CompileError::InvalidSchema(format!("{path}: {key} must be a non-negative integer"))
        }),
    }
}

fn lower_array(schema: &Map<String, Value>, path: &str) -> Result<Expr, CompileError> {
    let items = schema
        .get("items")
        .ok_or_else(|| CompileError::InvalidSchema(format!("{path}: array needs items")))?;
    let item = lower_value(items, &format!("{path}/items"))?;
    let min = as_count(schema.get("minItems"), "minItems", path)?.unwrap_or(0);
    let max = as_count(schema.get("maxItems"), "maxItems", path)?;
    if min > MAX_ITEMS_LIMIT || max.is_some_and(|m| m > MAX_ITEMS_LIMIT) {
        return Err(CompileError::UnsupportedKeyword(format!(
            "minItems/maxItems above {MAX_ITEMS_LIMIT}"
        )));
    }
    if let Some(max) = max {
        if max < min {
            return Err(CompileError::UnsatisfiableSchema(format!(
                "{path}: minItems {min} exceeds maxItems {max}"
            )));
        }
    }
    let body = if max == Some(0) {
        Expr::Epsilon
    } else {
        let rest_min = min.saturating_sub(1) as u32;
        let rest_max = max.map(|m| (m - 1) as u32);
        let rest = Expr::repeat(
            Expr::concat(vec![Expr::literal(b","), item.clone()]),
            rest_min,
            rest_max,
        );
        let nonempty = Expr::concat(vec![item, rest]);
        if min == 0 {
            Expr::alt(vec![Expr::Epsilon, nonempty])
        } else {
            nonempty
        }
    };
    Ok(Expr::concat(vec![Expr::literal(b"["), body, Expr::literal(b"]")]))
}

fn lower_string(schema: &Map<String, Value>) -> Result<Expr, CompileError> {
    let content = match schema.get("pattern") {
        None => Expr::star(Expr::Bytes(string_chars())),
        Some(Value::String(p)) => regex::parse(p)?.restrict_bytes(&string_chars()),
        Some(_) => return Err(CompileError::InvalidSchema("pattern must be a string".into())),
    };
    Ok(Expr::concat(vec![Expr::literal(b"\""), content, Expr::literal(b"\"")]))
}

fn as_bound(v: Option<&Value>, key: &str) -> Result<Option<i64>, CompileError> {
    match v {
        None => Ok(None),
        Some(v) => v
            .as_i64()
            .map(Some)
            .ok_or_else(|| CompileError::UnsupportedKeyword(format!("{key} (non-integer)"))),
    }
}

fn lower_integer(schema: &Map<String, Value>, path: &str) -> Result<Expr, CompileError> {
    let min = as_bound(schema.get("minimum"), "minimum")?;
    let max = as_bound(schema.get("maximum"), "maximum")?;
    if let (Some(lo), Some(hi)) = (min, max) {
        if lo > hi {
            return Err(CompileError::UnsatisfiableSchema(format!(
                "{path}: minimum {lo} exceeds maximum {hi}"
            )));
        }
    }
    Ok(integer_range(min, max))
}

/// Decimal numerals of every integer in `[min, max]` (bounds optional).
pub fn integer_range(min: Option<i64>, max: Option<i64>) -> Expr {
    let min = min.map(i128::from);
    let max = max.map(i128::from);
    let mut alts = Vec::new();

    // Non-negative part.
    let lo = min.map_or(0, |m| m.max(0));
    if max.is_none_or(|h| h >= lo) {
        let lo = lo as u128;
        alts.push(match max {
            Some(h) => uint_range(lo, h as u128),
            None => uint_at_least(lo),
        });
    }
    // Negative part, as "-" followed by the absolute value.
    if min.is_none_or(|m| m < 0) {
        let abs_lo = max.map_or(1, |h| if h < 0 { -h } else { 1 }) as u128;
        let abs_hi = min.map(|m| (-m) as u128);
        if abs_hi.is_none_or(|h| h >= abs_lo) {
            let digits = match abs_hi {
                Some(h) => uint_range(abs_lo, h),
                None => uint_at_least(abs_lo),
            };
            alts.push(Expr::concat(vec![Expr::literal(b"-"), digits]));
        }
    }
    Expr::alt(alts)
}

fn digits_of(n: u128) -> Vec<u8> {
    n.to_string().into_bytes()
}

fn any_digits(n: usize) -> Expr {
    Expr::repeat(Expr::Bytes(ByteSet::range(b'0', b'9')), n as u32, Some(n as u32))
}

/// Same-length digit strings `s` with `a <= s <= b`.
fn same_len(a: &[u8], b: &[u8]) -> Expr {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return Expr::Epsilon;
    }
    if a[0] == b[0] {
        return Expr::concat(vec![Expr::literal(&a[..1]), same_len(&a[1..], &b[1..])]);
    }
    let n = a.len() - 1;
    let nines = vec![b'9'; n];
    let zeros = vec![b'0'; n];
    let mut alts = vec![Expr::concat(vec![Expr::literal(&a[..1]), same_len(&a[1..], &nines)])];
    if a[0] + 1 < b[0] {
        alts.push(Expr::concat(vec![
            Expr::Bytes(ByteSet::range(a[0] + 1, b[0] - 1)),
            any_digits(n),
        ]));
    }
    alts.push(Expr::concat(vec![Expr::literal(&b[..1]), same_len(&zeros, &b[1..])]));
    Expr::alt(alts)
}

/// Canonical numerals for every integer in `[lo, hi]`, `lo <= hi`.
pub fn uint_range(lo: u128, hi: u128) -> Expr {
    let mut alts = Vec::new();
    let lo_len = digits_of(lo).len();
    let hi_len = digits_of(hi).len();
    for len in lo_len..=hi_len {
        let floor = if len == 1 { 0 } else { 10u128.pow(len as u32 - 1) };
        let ceil = 10u128.pow(len as u32) - 1;
        let a = lo.max(floor);
        let b = hi.min(ceil);
        if a <= b {
            alts.push(same_len(&digits_of(a), &digits_of(b)));
        }
    }
    Expr::alt(alts)
}

fn uint_at_least(lo: u128) -> Expr {
    let len = digits_of(lo).len();
    let ceil = 10u128.pow(len as u32) - 1;
    let longer = Expr::concat(vec![
        Expr::Bytes(ByteSet::range(b'1', b'9')),
        Expr::repeat(Expr::Bytes(ByteSet::range(b'0', b'9')), len as u32, None),
    ]);
    Expr::alt(vec![uint_range(lo, ceil), longer])
}
