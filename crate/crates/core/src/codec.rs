//! Canonical JSON encoding of scalar values, field maps, and record
//! payloads. One codec serves the commit log, the wire protocol, and the
//! file sinks so a record survives every hop bit-identically.
//!
//! Scalars map to natural JSON where JSON can represent them exactly:
//! integers stay integers, finite floats keep full round-trip precision,
//! text and booleans are themselves. The two cases JSON cannot express
//! natively use a single-key tagged object:
//!
//! - `{"$ts": 1585847107000}` — Timestamp, integer milliseconds UTC
//! - `{"$f": "Infinity"}` / `{"$f": "-Infinity"}` — non-finite floats
//!
//! Nested objects never occur otherwise (nested values are out of scope),
//! so the tags are unambiguous.

use crate::model::{FieldMap, Record, ScalarValue, TimestampMs};
use serde_json::{json, Map, Number, Value};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unrepresentable value for field {0}: {1}")]
    BadValue(String, String),
}

pub fn scalar_to_json(v: &ScalarValue) -> Value {
    match v {
        ScalarValue::Null => Value::Null,
        ScalarValue::Bool(b) => Value::Bool(*b),
        ScalarValue::Int(i) => Value::Number((*i).into()),
        ScalarValue::Float(f) => {
            if f.is_finite() {
                // NaN is rejected upstream; finite floats round-trip exactly.
                Value::Number(Number::from_f64(*f).expect("finite float"))
            } else if *f > 0.0 {
                json!({"$f": "Infinity"})
            } else {
                json!({"$f": "-Infinity"})
            }
        }
        ScalarValue::Text(s) => Value::String(s.clone()),
        ScalarValue::Timestamp(ms) => json!({"$ts": ms}),
    }
}

pub fn scalar_from_json(v: &Value) -> Result<ScalarValue, CodecError> {
    match v {
        Value::Null => Ok(ScalarValue::Null),
        Value::Bool(b) => Ok(ScalarValue::Bool(*b)),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(ScalarValue::Int(i))
            } else if let Some(f) = n.as_f64() {
                Ok(ScalarValue::Float(f))
            } else {
                Err(CodecError::Json(format!("number out of range: {n}")))
            }
        }
        Value::String(s) => Ok(ScalarValue::Text(s.clone())),
        Value::Object(obj) if obj.len() == 1 => {
            if let Some(ts) = obj.get("$ts") {
                let ms = ts
                    .as_i64()
                    .ok_or_else(|| CodecError::Json("$ts must be integer milliseconds".into()))?;
                Ok(ScalarValue::Timestamp(ms as TimestampMs))
            } else if let Some(f) = obj.get("$f") {
                match f.as_str() {
                    Some("Infinity") => Ok(ScalarValue::Float(f64::INFINITY)),
                    Some("-Infinity") => Ok(ScalarValue::Float(f64::NEG_INFINITY)),
                    _ => Err(CodecError::Json("unknown $f marker".into())),
                }
            } else {
                Err(CodecError::Json("unknown tagged value".into()))
            }
        }
        Value::Object(_) => Err(CodecError::Json("nested objects are not supported".into())),
        Value::Array(_) => Err(CodecError::Json("arrays are not supported".into())),
    }
}

/// Field map as a JSON object, preserving field order.
pub fn fields_to_json(fields: &FieldMap) -> Value {
    let mut obj = Map::new();
    for (name, value) in fields {
        obj.insert(name.clone(), scalar_to_json(value));
    }
    Value::Object(obj)
}

pub fn fields_from_json(v: &Value) -> Result<FieldMap, CodecError> {
    let obj = v
        .as_object()
        .ok_or_else(|| CodecError::Json("record value must be a JSON object".into()))?;
    let mut map = FieldMap::new();
    for (name, value) in obj {
        let scalar = scalar_from_json(value)
            .map_err(|e| CodecError::BadValue(name.clone(), e.to_string()))?;
        map.insert(crate::model::canonical_ident(name), scalar);
    }
    Ok(map)
}

/// Field map as one compact JSON line with member names sorted, the file
/// sink's output format.
pub fn fields_to_sorted_json_line(fields: &FieldMap) -> String {
    let mut names: Vec<&String> = fields.keys().collect();
    names.sort();
    let mut obj = Map::new();
    for name in names {
        obj.insert(name.clone(), scalar_to_json(&fields[name]));
    }
    Value::Object(obj).to_string()
}

/// Serialized payload of a log entry: the field map plus headers, so
/// dead-letter metadata survives a durable restart. Headers are omitted
/// when empty to keep the common case compact.
pub fn record_payload_to_bytes(value: &FieldMap, headers: &[(String, String)]) -> Vec<u8> {
    let mut obj = Map::new();
    obj.insert("f".into(), fields_to_json(value));
    if !headers.is_empty() {
        let hs: Vec<Value> = headers
            .iter()
            .map(|(k, v)| json!([k, v]))
            .collect();
        obj.insert("h".into(), Value::Array(hs));
    }
    Value::Object(obj).to_string().into_bytes()
}

pub fn record_payload_from_bytes(
    bytes: &[u8],
) -> Result<(FieldMap, Vec<(String, String)>), CodecError> {
    let v: Value =
        serde_json::from_slice(bytes).map_err(|e| CodecError::Json(e.to_string()))?;
    let obj = v
        .as_object()
        .ok_or_else(|| CodecError::Json("payload must be an object".into()))?;
    let fields = fields_from_json(
        obj.get("f")
            .ok_or_else(|| CodecError::Json("payload missing field map".into()))?,
    )?;
    let mut headers = Vec::new();
    if let Some(Value::Array(hs)) = obj.get("h") {
        for h in hs {
            let pair = h
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| CodecError::Json("header must be a [key, value] pair".into()))?;
            let k = pair[0]
                .as_str()
                .ok_or_else(|| CodecError::Json("header key must be text".into()))?;
            let val = pair[1]
                .as_str()
                .ok_or_else(|| CodecError::Json("header value must be text".into()))?;
            headers.push((k.to_string(), val.to_string()));
        }
    }
    Ok((fields, headers))
}

/// Record as it rides the wire and appears in fetch/subscribe frames.
pub fn record_to_json(r: &Record) -> Value {
    let mut obj = Map::new();
    obj.insert("topic".into(), Value::String(r.topic.clone()));
    obj.insert("partition".into(), Value::Number(r.partition.into()));
    obj.insert("offset".into(), Value::Number(r.offset.into()));
    obj.insert("event_time".into(), Value::Number(r.event_time.into()));
    obj.insert(
        "key".into(),
        r.key.clone().map_or(Value::Null, Value::String),
    );
    obj.insert("value".into(), fields_to_json(&r.value));
    if !r.headers.is_empty() {
        obj.insert(
            "headers".into(),
            Value::Array(r.headers.iter().map(|(k, v)| json!([k, v])).collect()),
        );
    }
    Value::Object(obj)
}

pub fn record_from_json(v: &Value) -> Result<Record, CodecError> {
    let obj = v
        .as_object()
        .ok_or_else(|| CodecError::Json("record must be an object".into()))?;
    let get = |k: &str| obj.get(k).ok_or_else(|| CodecError::Json(format!("record missing {k}")));
    let topic = get("topic")?
        .as_str()
        .ok_or_else(|| CodecError::Json("topic must be text".into()))?
        .to_string();
    let partition = get("partition")?
        .as_u64()
        .ok_or_else(|| CodecError::Json("partition must be a non-negative integer".into()))?
        as u32;
    let offset = get("offset")?
        .as_u64()
        .ok_or_else(|| CodecError::Json("offset must be a non-negative integer".into()))?;
    let event_time = get("event_time")?
        .as_i64()
        .ok_or_else(|| CodecError::Json("event_time must be integer milliseconds".into()))?;
    let key = match obj.get("key") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(CodecError::Json("key must be text or null".into())),
    };
    let value = fields_from_json(get("value")?)?;
    let mut headers = Vec::new();
    if let Some(Value::Array(hs)) = obj.get("headers") {
        for h in hs {
            let pair = h
                .as_array()
                .filter(|a| a.len() == 2)
                .ok_or_else(|| CodecError::Json("header must be a [key, value] pair".into()))?;
            headers.push((
                pair[0]
                    .as_str()
                    .ok_or_else(|| CodecError::Json("header key must be text".into()))?
                    .to_string(),
                pair[1]
                    .as_str()
                    .ok_or_else(|| CodecError::Json("header value must be text".into()))?
                    .to_string(),
            ));
        }
    }
    Ok(Record { topic, partition, offset, event_time, key, value, headers })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::canonical_ident;

    fn sample_map() -> FieldMap {
        let mut m = FieldMap::new();
        m.insert(canonical_ident("rain_mm"), ScalarValue::Float(287.4));
        m.insert(canonical_ident("station"), ScalarValue::Text("bloem".into()));
        m.insert(canonical_ident("ts"), ScalarValue::Timestamp(1585847107000));
        m.insert(canonical_ident("n"), ScalarValue::Null);
        m.insert(canonical_ident("c"), ScalarValue::Int(3));
        m
    }

    #[test]
    fn fields_round_trip() {
        let m = sample_map();
        let back = fields_from_json(&fields_to_json(&m)).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn timestamp_distinct_from_int() {
        let mut m = FieldMap::new();
        m.insert("T".into(), ScalarValue::Timestamp(5));
        m.insert("I".into(), ScalarValue::Int(5));
        let back = fields_from_json(&fields_to_json(&m)).unwrap();
        assert_eq!(back["T"], ScalarValue::Timestamp(5));
        assert_eq!(back["I"], ScalarValue::Int(5));
    }

    #[test]
    fn infinity_round_trips() {
        let mut m = FieldMap::new();
        m.insert("X".into(), ScalarValue::Float(f64::INFINITY));
        m.insert("Y".into(), ScalarValue::Float(f64::NEG_INFINITY));
        let back = fields_from_json(&fields_to_json(&m)).unwrap();
        assert_eq!(back["X"], ScalarValue::Float(f64::INFINITY));
        assert_eq!(back["Y"], ScalarValue::Float(f64::NEG_INFINITY));
    }

    #[test]
    fn float_precision_survives() {
        let mut m = FieldMap::new();
        m.insert("V".into(), ScalarValue::Float(0.1 + 0.2));
        let text = fields_to_json(&m).to_string();
        let back = fields_from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back["V"], ScalarValue::Float(0.1 + 0.2));
    }

    #[test]
    fn payload_with_headers_round_trips() {
        let m = sample_map();
        let headers = vec![("error".to_string(), "bad row".to_string())];
        let bytes = record_payload_to_bytes(&m, &headers);
        let (fields, hs) = record_payload_from_bytes(&bytes).unwrap();
        assert_eq!(fields, m);
        assert_eq!(hs, headers);
    }

    #[test]
    fn payload_serialization_is_deterministic() {
        let m = sample_map();
        assert_eq!(
            record_payload_to_bytes(&m, &[]),
            record_payload_to_bytes(&m, &[])
        );
    }

    #[test]
    fn sorted_line_orders_members() {
        let mut m = FieldMap::new();
        m.insert("B".into(), ScalarValue::Int(2));
        m.insert("A".into(), ScalarValue::Int(1));
        assert_eq!(fields_to_sorted_json_line(&m), r#"{"A":1,"B":2}"#);
    }

    #[test]
    fn record_round_trip() {
        let mut r = Record::new("RAIN", 1585847107000, Some("stationA".into()), sample_map());
        r.partition = 2;
        r.offset = 41;
        r.headers.push(("k".into(), "v".into()));
        let back = record_from_json(&record_to_json(&r)).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn rejects_nested_and_array_values() {
        let v: Value = serde_json::from_str(r#"{"A": {"x": 1, "y": 2}}"#).unwrap();
        assert!(fields_from_json(&v).is_err());
        let v: Value = serde_json::from_str(r#"{"A": [1, 2]}"#).unwrap();
        assert!(fields_from_json(&v).is_err());
    }
}
