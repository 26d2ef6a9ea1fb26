//! Core record, scalar value, and schema types shared by every layer,
//! plus partition routing.
//!
//! All identifiers (topic names, field names) are case-insensitive and
//! canonicalized to upper case at the boundary. Values are immutable once
//! constructed and safe to share across threads.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Milliseconds since the Unix epoch, UTC. Never negative in a stored record.
pub type TimestampMs = i64;

/// Ordered field map of a record value.
pub type FieldMap = IndexMap<String, ScalarValue>;

/// Canonical form of an identifier: ASCII upper case.
pub fn canonical_ident(name: &str) -> String {
    name.to_ascii_uppercase()
}

/// Topic and field names must match `[A-Za-z_][A-Za-z0-9_]*`.
pub fn is_valid_ident(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Scalar type tag for schema fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    Bool,
    Int,
    Float,
    Text,
    Timestamp,
}

impl ScalarType {
    pub fn name(self) -> &'static str {
        match self {
            ScalarType::Bool => "BOOL",
            ScalarType::Int => "INT",
            ScalarType::Float => "FLOAT",
            ScalarType::Text => "TEXT",
            ScalarType::Timestamp => "TIMESTAMP",
        }
    }

    pub fn parse(name: &str) -> Option<ScalarType> {
        match canonical_ident(name).as_str() {
            "BOOL" | "BOOLEAN" => Some(ScalarType::Bool),
            "INT" | "BIGINT" | "INTEGER" => Some(ScalarType::Int),
            "FLOAT" | "DOUBLE" => Some(ScalarType::Float),
            "TEXT" | "STRING" | "VARCHAR" => Some(ScalarType::Text),
            "TIMESTAMP" => Some(ScalarType::Timestamp),
            _ => None,
        }
    }
}

impl fmt::Display for ScalarType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A single value inside a record.
///
/// Timestamps are milliseconds since the Unix epoch, UTC, and non-negative.
/// NaN floats are rejected at validation; infinities are permitted.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalarValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(String),
    Timestamp(TimestampMs),
}

impl ScalarValue {
    pub fn scalar_type(&self) -> Option<ScalarType> {
        match self {
            ScalarValue::Null => None,
            ScalarValue::Bool(_) => Some(ScalarType::Bool),
            ScalarValue::Int(_) => Some(ScalarType::Int),
            ScalarValue::Float(_) => Some(ScalarType::Float),
            ScalarValue::Text(_) => Some(ScalarType::Text),
            ScalarValue::Timestamp(_) => Some(ScalarType::Timestamp),
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, ScalarValue::Null)
    }

    /// Numeric view for arithmetic and aggregation; Int widens to f64.
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ScalarValue::Int(i) => Some(*i as f64),
            ScalarValue::Float(f) => Some(*f),
            _ => None,
        }
    }
}

impl fmt::Display for ScalarValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarValue::Null => f.write_str("NULL"),
            ScalarValue::Bool(b) => write!(f, "{b}"),
            ScalarValue::Int(i) => write!(f, "{i}"),
            ScalarValue::Float(v) => write!(f, "{v}"),
            ScalarValue::Text(s) => f.write_str(s),
            ScalarValue::Timestamp(ms) => write!(f, "{ms}"),
        }
    }
}

/// One field declaration in a schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDef {
    pub name: String,
    #[serde(rename = "type")]
    pub ty: ScalarType,
    #[serde(default = "default_nullable")]
    pub nullable: bool,
}

fn default_nullable() -> bool {
    true
}

impl FieldDef {
    pub fn new(name: &str, ty: ScalarType, nullable: bool) -> Self {
        FieldDef { name: canonical_ident(name), ty, nullable }
    }
}

/// Ordered list of field declarations with an optional event-time designation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub fields: Vec<FieldDef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_time_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemaError {
    #[error("invalid field name {0:?}")]
    InvalidFieldName(String),
    #[error("duplicate field {0} (names are case-insensitive)")]
    DuplicateField(String),
    #[error("event-time field {0} not present in schema")]
    UnknownEventTimeField(String),
    #[error("event-time field {0} must have type TIMESTAMP, found {1}")]
    EventTimeNotTimestamp(String, ScalarType),
}

impl Schema {
    /// Builds a schema, folding names to canonical form and rejecting
    /// case-insensitive duplicates.
    pub fn new(fields: Vec<FieldDef>) -> Result<Schema, SchemaError> {
        let mut canonical = Vec::with_capacity(fields.len());
        let mut seen = std::collections::HashSet::new();
        for f in fields {
            let name = canonical_ident(&f.name);
            if !is_valid_ident(&name) {
                return Err(SchemaError::InvalidFieldName(f.name));
            }
            if !seen.insert(name.clone()) {
                return Err(SchemaError::DuplicateField(name));
            }
            canonical.push(FieldDef { name, ty: f.ty, nullable: f.nullable });
        }
        Ok(Schema { fields: canonical, event_time_field: None })
    }

    /// Designates the event-time field; it must exist and be a Timestamp.
    pub fn with_event_time(mut self, name: &str) -> Result<Schema, SchemaError> {
        let canonical = canonical_ident(name);
        match self.field(&canonical) {
            None => return Err(SchemaError::UnknownEventTimeField(canonical)),
            Some(f) if f.ty != ScalarType::Timestamp => {
                return Err(SchemaError::EventTimeNotTimestamp(canonical, f.ty));
            }
            Some(_) => {}
        }
        self.event_time_field = Some(canonical);
        Ok(self)
    }

    pub fn field(&self, name: &str) -> Option<&FieldDef> {
        let canonical = canonical_ident(name);
        self.fields.iter().find(|f| f.name == canonical)
    }

    pub fn field_names(&self) -> impl Iterator<Item = &str> {
        self.fields.iter().map(|f| f.name.as_str())
    }

    /// Re-validates an already-constructed schema (used after deserializing
    /// from storage or config files).
    pub fn validate(&self) -> Result<(), SchemaError> {
        let rebuilt = Schema::new(self.fields.clone())?;
        if let Some(et) = &self.event_time_field {
            rebuilt.with_event_time(et)?;
        }
        Ok(())
    }

    /// Rebuilds a schema that arrived through serde, re-applying name
    /// canonicalization and the event-time checks that deserialization
    /// bypasses.
    pub fn canonicalized(self) -> Result<Schema, SchemaError> {
        let rebuilt = Schema::new(self.fields)?;
        match self.event_time_field {
            Some(et) => rebuilt.with_event_time(&et),
            None => Ok(rebuilt),
        }
    }
}

/// One reason a value failed validation against a schema.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

/// Checks a field map against a schema. Violations are values, not failures.
///
/// Passes iff every non-nullable field is present with the declared type,
/// nullable fields are absent, Null, or the declared type, and no unknown
/// field is present. NaN floats are always violations.
pub fn validate_record(schema: &Schema, value: &FieldMap) -> Vec<Violation> {
    let mut violations = Vec::new();
    for field in &schema.fields {
        match value.get(&field.name) {
            None => {
                if !field.nullable {
                    violations.push(Violation {
                        field: field.name.clone(),
                        reason: format!("missing field {}", field.name),
                    });
                }
            }
            Some(ScalarValue::Null) => {
                if !field.nullable {
                    violations.push(Violation {
                        field: field.name.clone(),
                        reason: "null value for non-nullable field".into(),
                    });
                }
            }
            Some(v) => {
                if v.scalar_type() != Some(field.ty) {
                    violations.push(Violation {
                        field: field.name.clone(),
                        reason: format!(
                            "expected {}, found {}",
                            field.ty,
                            v.scalar_type().map_or("NULL".into(), |t| t.to_string())
                        ),
                    });
                }
            }
        }
    }
    for (name, value) in value {
        if schema.field(name).is_none() {
            violations.push(Violation {
                field: name.clone(),
                reason: format!("unknown field {name}"),
            });
        }
        if let ScalarValue::Float(f) = value {
            if f.is_nan() {
                violations.push(Violation {
                    field: name.clone(),
                    reason: "NaN is not storable".into(),
                });
            }
        }
        if let ScalarValue::Timestamp(ms) = value {
            if *ms < 0 {
                violations.push(Violation {
                    field: name.clone(),
                    reason: "negative timestamp".into(),
                });
            }
        }
    }
    violations
}

/// A timestamped key/value event; the unit flowing through every layer.
///
/// `offset` is assigned by the broker on append and immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub topic: String,
    pub partition: u32,
    pub offset: u64,
    pub event_time: TimestampMs,
    pub key: Option<String>,
    pub value: FieldMap,
    pub headers: Vec<(String, String)>,
}

impl Record {
    pub fn new(topic: &str, event_time: TimestampMs, key: Option<String>, value: FieldMap) -> Self {
        Record {
            topic: canonical_ident(topic),
            partition: 0,
            offset: 0,
            event_time,
            key,
            value,
            headers: Vec::new(),
        }
    }
}

/// Declarative topic definition. Replication factor is reported only; this
/// is a single-replica engine.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub name: String,
    pub partitions: u32,
    pub replication_display: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TopicSpecError {
    #[error("invalid topic name {0:?}")]
    InvalidName(String),
    #[error("topic must have at least one partition")]
    ZeroPartitions,
}

impl TopicSpec {
    pub fn new(name: &str) -> Result<TopicSpec, TopicSpecError> {
        TopicSpec::with_partitions(name, 1, 1)
    }

    pub fn with_partitions(
        name: &str,
        partitions: u32,
        replication_display: u32,
    ) -> Result<TopicSpec, TopicSpecError> {
        if !is_valid_ident(name) {
            return Err(TopicSpecError::InvalidName(name.to_string()));
        }
        if partitions == 0 {
            return Err(TopicSpecError::ZeroPartitions);
        }
        Ok(TopicSpec {
            name: canonical_ident(name),
            partitions,
            replication_display: replication_display.max(1),
        })
    }
}

const FNV_OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a 64-bit hash over the raw key bytes.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET_BASIS;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Routes a record to a partition: keyed records hash deterministically,
/// keyless records round-robin on the caller's counter.
pub fn partition_for(key: Option<&str>, partitions: u32, round_robin_counter: u64) -> u32 {
    debug_assert!(partitions >= 1);
    match key {
        Some(k) => (fnv1a_64(k.as_bytes()) % u64::from(partitions)) as u32,
        None => (round_robin_counter % u64::from(partitions)) as u32,
    }
}
