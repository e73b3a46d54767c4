//! Canonical JSON encoding.
//!
//! Object keys are emitted in byte order, there is no insignificant
//! whitespace, integral floats below 1e16 print as integers, and every
//! other float uses the shortest decimal that round-trips. The output is
//! the hashing input for cache keys, artifact versions and audit digests.

use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};

/// Serializes any value to canonical bytes. Non-finite floats are rejected.
pub fn to_canonical_bytes<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>> {
    let value = serde_json::to_value(value)
        .map_err(|e| Error::invalid(format!("not serializable: {e}")))?;
    let mut out = Vec::with_capacity(256);
    write_value(&value, &mut out)?;
    Ok(out)
}

pub fn value_to_canonical_bytes(value: &Value) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(256);
    write_value(value, &mut out)?;
    Ok(out)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<()> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                let f = n
                    .as_f64()
                    .ok_or_else(|| Error::invalid("unrepresentable number"))?;
                out.extend_from_slice(format_f64(f)?.as_bytes());
            }
        }
        Value::String(s) => {
            out.extend_from_slice(serde_json::to_string(s)?.as_bytes());
        }
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push(b'{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                out.extend_from_slice(serde_json::to_string(key)?.as_bytes());
                out.push(b':');
                write_value(&map[key], out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

/// Shortest round-trip decimal for a finite float, without a trailing `.0`.
pub fn format_f64(f: f64) -> Result<String> {
    if !f.is_finite() {
        return Err(Error::invalid(format!("non-finite number {f}")));
    }
    if f == 0.0 {
        return Ok("0".to_string());
    }
    if f.fract() == 0.0 && f.abs() < 1e16 {
        return Ok(format!("{}", f as i64));
    }
    let s = serde_json::to_string(&f)?;
    Ok(match s.strip_suffix(".0") {
        Some(stripped) => stripped.to_string(),
        None => s,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn keys_are_sorted_and_compact() {
        let v = json!({"b": 1, "a": [true, null, "x"], "c": {"z": 0.5, "y": -2}});
        let bytes = value_to_canonical_bytes(&v).unwrap();
        assert_eq!(
            std::str::from_utf8(&bytes).unwrap(),
            r#"{"a":[true,null,"x"],"b":1,"c":{"y":-2,"z":0.5}}"#
        );
    }

    #[test]
    fn float_formatting() {
        assert_eq!(format_f64(1.0).unwrap(), "1");
        assert_eq!(format_f64(-0.0).unwrap(), "0");
        assert_eq!(format_f64(0.1).unwrap(), "0.1");
        assert_eq!(format_f64(-2.5).unwrap(), "-2.5");
        assert!(format_f64(f64::NAN).is_err());
        assert!(format_f64(f64::INFINITY).is_err());
        for f in [1e20, 1.5e-7, 123456.789, f64::MAX, f64::MIN_POSITIVE, 1e16, 0.30000000000000004] {
            let s = format_f64(f).unwrap();
            assert!(!s.ends_with(".0"), "{s}");
            assert_eq!(s.parse::<f64>().unwrap(), f, "{s}");
        }
    }
}
