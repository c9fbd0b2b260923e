//! Canonical JSON encoding.
//!
//! Object keys are sorted by their UTF-8 bytes at every depth, no whitespace
//! is emitted and strings are escaped the way `serde_json` escapes them
//! (non-ASCII characters are written as raw UTF-8). The same bytes are
//! produced regardless of the key order or formatting of the input text.

use serde::Serialize;
use serde_json::Value;

/// Encodes a JSON value canonically.
pub fn to_canonical_bytes(value: &Value) -> Vec<u8> {
    let mut out = Vec::with_capacity(256);
    write_value(value, &mut out);
    out
}

/// Serializes `value` through `serde_json::Value` and encodes it canonically.
pub fn canonical_bytes_of<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    // Every type we encode is built from maps, strings, integers and bools;
    // serialization into a `Value` cannot fail for them.
    let value = serde_json::to_value(value).expect("canonical types serialize to JSON");
    to_canonical_bytes(&value)
}

fn write_value(value: &Value, out: &mut Vec<u8>) {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => out.extend_from_slice(n.to_string().as_bytes()),
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out);
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out);
            }
            out.push(b'}');
        }
    }
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    let quoted = serde_json::to_string(s).expect("strings always serialize");
    out.extend_from_slice(quoted.as_bytes());
}
