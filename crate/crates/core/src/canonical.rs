//! Canonical JSON encoding for hashing.
//!
//! Object keys are sorted by byte order, arrays keep their order, and no
//! insignificant whitespace is emitted. Numbers are written the way
//! `serde_json` writes them; the evidence types only ever carry integers.

use serde::Serialize;
use serde_json::{Map, Value};

pub fn to_canonical_value(value: &Value) -> Value {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            let mut out = Map::new();
            for k in keys {
                out.insert(k.clone(), to_canonical_value(&map[k]));
            }
            Value::Object(out)
        }
        Value::Array(items) => Value::Array(items.iter().map(to_canonical_value).collect()),
        other => other.clone(),
    }
}

/// Canonical bytes of any serializable value.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<Vec<u8>> {
    let v = serde_json::to_value(value)?;
    serde_json::to_vec(&to_canonical_value(&v))
}

pub fn to_canonical_string<T: Serialize + ?Sized>(value: &T) -> serde_json::Result<String> {
    let bytes = to_canonical_bytes(value)?;
    Ok(String::from_utf8(bytes).expect("serde_json emits UTF-8"))
}
