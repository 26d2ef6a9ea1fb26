//! File and generator connectors: sources normalize external data into
//! topics, sinks persist topics to files, and single-message transforms
//! adjust records on the way through.

pub mod generator;
pub mod sink;
pub mod source;

pub use generator::{generate_rain, GeneratorMode, GeneratorParams};
pub use sink::{csv_lines, jsonl_line, run_sink, SinkKillPoint, SinkOptions};
pub use source::{
    parse_csv_header, parse_csv_line, parse_jsonl_line, run_source, SourceKillPoint, SourceOptions,
};

use crate::broker::BrokerError;
use crate::model::{canonical_ident, FieldMap, Schema, ScalarType, ScalarValue, TimestampMs};
use parking_lot::Mutex;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

#[derive(Debug, thiserror::Error)]
pub enum ConnectError {
    #[error("bad connector config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Broker(#[from] BrokerError),
}

/// Whole config file: `{"sources": [...], "sinks": [...]}`.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ConnectConfig {
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default)]
    pub sinks: Vec<SinkConfig>,
}

impl ConnectConfig {
    pub fn from_json(text: &str) -> Result<ConnectConfig, ConnectError> {
        let config: ConnectConfig =
            serde_json::from_str(text).map_err(|e| ConnectError::Config(e.to_string()))?;
        for s in &config.sources {
            s.validate()?;
        }
        for s in &config.sinks {
            s.validate()?;
        }
        Ok(config)
    }

    pub fn from_file(path: &Path) -> Result<ConnectConfig, ConnectError> {
        ConnectConfig::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    CsvFile,
    JsonlFile,
    Generator,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SourceConfig {
    pub name: String,
    pub kind: SourceKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorParams>,
    pub target_topic: String,
    pub schema: Schema,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_time_field: Option<String>,
    #[serde(default = "default_poll_ms")]
    pub poll_interval_ms: u64,
    #[serde(default)]
    pub transforms: Vec<TransformSpec>,
    /// Defaults to `<path>.ckpt`; generators without one restart from 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint_path: Option<PathBuf>,
}

fn default_poll_ms() -> u64 {
    200
}

impl SourceConfig {
    pub fn validate(&self) -> Result<(), ConnectError> {
        match self.kind {
            SourceKind::CsvFile | SourceKind::JsonlFile => {
                if self.path.is_none() {
                    return Err(ConnectError::Config(format!(
                        "source {}: file sources need a path",
                        self.name
                    )));
                }
            }
            SourceKind::Generator => {
                if self.generator.is_none() {
                    return Err(ConnectError::Config(format!(
                        "source {}: generator sources need generator params",
                        self.name
                    )));
                }
            }
        }
        let schema = self.canonical_schema()?;
        transform_output_schema(&schema, &self.transforms)
            .map_err(|e| ConnectError::Config(format!("source {}: {e}", self.name)))?;
        Ok(())
    }

    /// Rebuilds the configured schema so names are canonical even when the
    /// config file wrote them in lower case, and checks the event-time field.
    pub fn canonical_schema(&self) -> Result<Schema, ConnectError> {
        let bad = |e: String| ConnectError::Config(format!("source {}: {e}", self.name));
        let mut schema = Schema::new(self.schema.fields.clone()).map_err(|e| bad(e.to_string()))?;
        let designated = self.event_time_field.as_ref().or(self.schema.event_time_field.as_ref());
        if let Some(field) = designated {
            schema = schema.with_event_time(field).map_err(|e| bad(e.to_string()))?;
        }
        Ok(schema)
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_millis(self.poll_interval_ms)
    }

    pub fn checkpoint_file(&self) -> Option<PathBuf> {
        if let Some(explicit) = &self.checkpoint_path {
            return Some(explicit.clone());
        }
        self.path.as_ref().map(|p| PathBuf::from(format!("{}.ckpt", p.display())))
    }

    /// Dead-letter topic taking rows the source cannot deliver.
    pub fn dead_letter_topic(&self) -> String {
        format!("{}__DLQ", canonical_ident(&self.target_topic))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkKind {
    JsonlFile,
    CsvFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FromPosition {
    #[default]
    Earliest,
    Latest,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SinkConfig {
    pub name: String,
    pub kind: SinkKind,
    pub source_topic: String,
    pub path: PathBuf,
    #[serde(default)]
    pub transforms: Vec<TransformSpec>,
    #[serde(default)]
    pub from_position: FromPosition,
    #[serde(default = "default_poll_ms")]
    pub poll_interval_ms: u64,
}

impl SinkConfig {
    pub fn validate(&self) -> Result<(), ConnectError> {
        if self.name.is_empty() || self.source_topic.is_empty() {
            return Err(ConnectError::Config("sink needs a name and source_topic".into()));
        }
        Ok(())
    }

    pub fn poll_interval(&self) -> Duration {
        Duration::from_millis(self.poll_interval_ms)
    }

    /// Consumer group, so progress survives restarts.
    pub fn group(&self) -> String {
        format!("sink-{}", self.name)
    }
}

/// One lightweight record modification; chains apply strictly in order.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformSpec {
    Rename { from: String, to: String },
    Cast { field: String, to_type: ScalarType },
    SetKey { field: String },
    Drop { field: String },
    InsertWallclock { field: String },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("transform {index}: {reason}")]
pub struct TransformError {
    pub index: usize,
    pub reason: String,
}

/// Applies the chain to a record's key and fields. The first failing
/// transform aborts the record, naming its position.
pub fn apply_transforms(
    transforms: &[TransformSpec],
    key: Option<String>,
    mut value: FieldMap,
) -> Result<(Option<String>, FieldMap), TransformError> {
    let mut key = key;
    for (index, spec) in transforms.iter().enumerate() {
        let fail = |reason: String| TransformError { index, reason };
        match spec {
            TransformSpec::Rename { from, to } => {
                let from = canonical_ident(from);
                let to = canonical_ident(to);
                if !value.contains_key(&from) {
                    return Err(fail(format!("no field {from} to rename")));
                }
                if from != to && value.contains_key(&to) {
                    return Err(fail(format!("rename target {to} already exists")));
                }
                // Rebuild to keep the field in place rather than moving
                // it to the end.
                value = value
                    .drain(..)
                    .map(|(name, v)| if name == from { (to.clone(), v) } else { (name, v) })
                    .collect();
            }
            TransformSpec::Cast { field, to_type } => {
                let field = canonical_ident(field);
                let slot = value
                    .get_mut(&field)
                    .ok_or_else(|| fail(format!("no field {field} to cast")))?;
                *slot = cast_scalar(slot, *to_type)
                    .map_err(|reason| fail(format!("cast {field} to {}: {reason}", to_type.name())))?;
            }
            TransformSpec::SetKey { field } => {
                let field = canonical_ident(field);
                let v = value
                    .get(&field)
                    .ok_or_else(|| fail(format!("no field {field} for key")))?;
                key = Some(match v {
                    ScalarValue::Null => {
                        return Err(fail(format!("field {field} is null, cannot key on it")))
                    }
                    ScalarValue::Text(s) => s.clone(),
                    ScalarValue::Bool(b) => b.to_string(),
                    ScalarValue::Int(i) => i.to_string(),
                    ScalarValue::Float(x) => format!("{x:?}"),
                    ScalarValue::Timestamp(ms) => ms.to_string(),
                });
            }
            TransformSpec::Drop { field } => {
                let field = canonical_ident(field);
                if value.shift_remove(&field).is_none() {
                    return Err(fail(format!("no field {field} to drop")));
                }
            }
            TransformSpec::InsertWallclock { field } => {
                let field = canonical_ident(field);
                value.insert(field, ScalarValue::Timestamp(now_ms()));
            }
        }
    }
    Ok((key, value))
}

/// Derives the record shape after a transform chain runs, so a source can
/// attach the right schema to its target topic and a CSV sink can lay out
/// columns for what it will actually write. Fails statically when a
/// transform references a field that cannot exist at its point in the
/// chain.
pub fn transform_output_schema(
    input: &Schema,
    transforms: &[TransformSpec],
) -> Result<Schema, TransformError> {
    let mut fields = input.fields.clone();
    let mut event_time = input.event_time_field.clone();
    for (index, spec) in transforms.iter().enumerate() {
        let fail = |reason: String| TransformError { index, reason };
        let position = |fields: &[crate::model::FieldDef], name: &str| {
            fields.iter().position(|f| f.name == name)
        };
        match spec {
            TransformSpec::Rename { from, to } => {
                let from = canonical_ident(from);
                let to = canonical_ident(to);
                let at = position(&fields, &from)
                    .ok_or_else(|| fail(format!("no field {from} to rename")))?;
                if from != to && position(&fields, &to).is_some() {
                    return Err(fail(format!("rename target {to} already exists")));
                }
                fields[at].name = to.clone();
                if event_time.as_deref() == Some(from.as_str()) {
                    event_time = Some(to);
                }
            }
            TransformSpec::Cast { field, to_type } => {
                let field = canonical_ident(field);
                let at = position(&fields, &field)
                    .ok_or_else(|| fail(format!("no field {field} to cast")))?;
                fields[at].ty = *to_type;
                if event_time.as_deref() == Some(field.as_str())
                    && *to_type != ScalarType::Timestamp
                {
                    event_time = None;
                }
            }
            TransformSpec::SetKey { field } => {
                let field = canonical_ident(field);
                position(&fields, &field)
                    .ok_or_else(|| fail(format!("no field {field} for key")))?;
            }
            TransformSpec::Drop { field } => {
                let field = canonical_ident(field);
                let at = position(&fields, &field)
                    .ok_or_else(|| fail(format!("no field {field} to drop")))?;
                fields.remove(at);
                if event_time.as_deref() == Some(field.as_str()) {
                    event_time = None;
                }
            }
            TransformSpec::InsertWallclock { field } => {
                let field = canonical_ident(field);
                match position(&fields, &field) {
                    Some(at) => fields[at] = crate::model::FieldDef::new(&field, ScalarType::Timestamp, false),
                    None => fields.push(crate::model::FieldDef::new(&field, ScalarType::Timestamp, false)),
                }
            }
        }
    }
    let mut schema = Schema::new(fields)
        .map_err(|e| TransformError { index: transforms.len(), reason: e.to_string() })?;
    if let Some(et) = event_time {
        schema = schema
            .with_event_time(&et)
            .map_err(|e| TransformError { index: transforms.len(), reason: e.to_string() })?;
    }
    Ok(schema)
}

fn cast_scalar(v: &ScalarValue, to: ScalarType) -> Result<ScalarValue, String> {
    if v.is_null() {
        return Ok(ScalarValue::Null);
    }
    if v.scalar_type() == Some(to) {
        return Ok(v.clone());
    }
    match (v, to) {
        (ScalarValue::Int(i), ScalarType::Float) => Ok(ScalarValue::Float(*i as f64)),
        (ScalarValue::Float(x), ScalarType::Int) => {
            // Only exact conversions; truncation would silently lose data.
            if x.fract() == 0.0 && *x >= i64::MIN as f64 && *x <= i64::MAX as f64 {
                Ok(ScalarValue::Int(*x as i64))
            } else {
                Err(format!("{x:?} is not an exact integer"))
            }
        }
        (ScalarValue::Int(i), ScalarType::Timestamp) => Ok(ScalarValue::Timestamp(*i)),
        (ScalarValue::Timestamp(ms), ScalarType::Int) => Ok(ScalarValue::Int(*ms)),
        (ScalarValue::Bool(b), ScalarType::Text) => Ok(ScalarValue::Text(b.to_string())),
        (ScalarValue::Int(i), ScalarType::Text) => Ok(ScalarValue::Text(i.to_string())),
        (ScalarValue::Float(x), ScalarType::Text) => Ok(ScalarValue::Text(format!("{x:?}"))),
        (ScalarValue::Timestamp(ms), ScalarType::Text) => Ok(ScalarValue::Text(ms.to_string())),
        (ScalarValue::Text(s), ScalarType::Int) => {
            s.trim().parse::<i64>().map(ScalarValue::Int).map_err(|_| format!("{s:?} is not an integer"))
        }
        (ScalarValue::Text(s), ScalarType::Float) => {
            s.trim().parse::<f64>().map(ScalarValue::Float).map_err(|_| format!("{s:?} is not a number"))
        }
        (ScalarValue::Text(s), ScalarType::Bool) => match s.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(ScalarValue::Bool(true)),
            "false" => Ok(ScalarValue::Bool(false)),
            _ => Err(format!("{s:?} is not a boolean")),
        },
        (ScalarValue::Text(s), ScalarType::Timestamp) => parse_timestamp(s)
            .map(ScalarValue::Timestamp)
            .ok_or_else(|| format!("{s:?} is not a timestamp")),
        (v, to) => Err(format!("cannot cast {:?} to {}", v, to.name())),
    }
}

/// Accepts integer epoch milliseconds or an ISO-8601 instant, converted
/// to UTC.
pub fn parse_timestamp(text: &str) -> Option<TimestampMs> {
    let text = text.trim();
    if let Ok(ms) = text.parse::<i64>() {
        return Some(ms);
    }
    chrono::DateTime::parse_from_rfc3339(text)
        .ok()
        .map(|dt| dt.with_timezone(&chrono::Utc).timestamp_millis())
}

pub(crate) fn now_ms() -> TimestampMs {
    chrono::Utc::now().timestamp_millis()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConnectorState {
    Running,
    /// Transient problem, e.g. an unreadable path; the connector keeps
    /// retrying at its poll interval.
    Retrying(String),
    Failed(String),
    Finished,
    Stopped,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConnectorStatus {
    pub state: ConnectorState,
    pub records_out: u64,
    pub dead_letters: u64,
}

pub(crate) struct ConnectorShared {
    pub state: Mutex<ConnectorState>,
    pub records_out: AtomicU64,
    pub dead_letters: AtomicU64,
}

impl ConnectorShared {
    pub fn new() -> Arc<ConnectorShared> {
        Arc::new(ConnectorShared {
            state: Mutex::new(ConnectorState::Running),
            records_out: AtomicU64::new(0),
            dead_letters: AtomicU64::new(0),
        })
    }

    pub fn fail(&self, message: String) {
        *self.state.lock() = ConnectorState::Failed(message);
    }

    pub fn running(&self) {
        let mut state = self.state.lock();
        if matches!(*state, ConnectorState::Retrying(_)) {
            *state = ConnectorState::Running;
        }
    }

    pub fn retrying(&self, message: String) {
        let mut state = self.state.lock();
        if *state == ConnectorState::Running || matches!(*state, ConnectorState::Retrying(_)) {
            *state = ConnectorState::Retrying(message);
        }
    }
}

/// Handle to a running connector; dropping it stops the task.
pub struct ConnectorHandle {
    name: String,
    stop: Arc<AtomicBool>,
    shared: Arc<ConnectorShared>,
    thread: Option<JoinHandle<()>>,
}

impl ConnectorHandle {
    pub(crate) fn new(
        name: String,
        stop: Arc<AtomicBool>,
        shared: Arc<ConnectorShared>,
        thread: JoinHandle<()>,
    ) -> ConnectorHandle {
        ConnectorHandle { name, stop, shared, thread: Some(thread) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn status(&self) -> ConnectorStatus {
        ConnectorStatus {
            state: self.shared.state.lock().clone(),
            records_out: self.shared.records_out.load(Ordering::Relaxed),
            dead_letters: self.shared.dead_letters.load(Ordering::Relaxed),
        }
    }

    pub fn is_finished(&self) -> bool {
        self.thread.as_ref().is_none_or(|t| t.is_finished())
    }

    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
        let mut state = self.shared.state.lock();
        if matches!(*state, ConnectorState::Running | ConnectorState::Retrying(_)) {
            *state = ConnectorState::Stopped;
        }
    }
}

impl Drop for ConnectorHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Sleeps in small slices so a stop request interrupts promptly.
pub(crate) fn sleep_responsive(stop: &AtomicBool, total: Duration) {
    let slice = Duration::from_millis(25);
    let mut left = total;
    while !stop.load(Ordering::SeqCst) && !left.is_zero() {
        let step = left.min(slice);
        std::thread::sleep(step);
        left -= step;
    }
}

/// Reads a checkpoint written by `write_checkpoint`; absent or garbled
/// files mean "start over", never an error.
pub(crate) fn read_checkpoint(path: &Path) -> u64 {
    std::fs::read_to_string(path)
        .ok()
        .and_then(|s| s.trim().parse::<u64>().ok())
        .unwrap_or(0)
}

/// Atomic via a temp file so a crash never leaves a half-written value.
pub(crate) fn write_checkpoint(path: &Path, value: u64) -> std::io::Result<()> {
    let tmp = path.with_extension("ckpt.tmp");
    std::fs::write(&tmp, value.to_string())?;
    std::fs::rename(&tmp, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldDef;

    fn value(pairs: &[(&str, ScalarValue)]) -> FieldMap {
        pairs.iter().map(|(n, v)| (n.to_string(), v.clone())).collect()
    }

    #[test]
    fn rename_preserves_field_position() {
        let v = value(&[
            ("A", ScalarValue::Int(1)),
            ("RAIN", ScalarValue::Float(5.0)),
            ("Z", ScalarValue::Int(2)),
        ]);
        let t = vec![TransformSpec::Rename { from: "rain".into(), to: "RAIN_MM".into() }];
        let (_, out) = apply_transforms(&t, None, v).unwrap();
        let names: Vec<&String> = out.keys().collect();
        assert_eq!(names, ["A", "RAIN_MM", "Z"]);
        assert_eq!(out.get("RAIN_MM"), Some(&ScalarValue::Float(5.0)));
    }

    #[test]
    fn lossy_cast_rejected_exact_cast_ok() {
        let t = vec![TransformSpec::Cast { field: "RAIN_MM".into(), to_type: ScalarType::Int }];
        let err = apply_transforms(&t, None, value(&[("RAIN_MM", ScalarValue::Float(287.4))]))
            .unwrap_err();
        assert_eq!(err.index, 0);
        assert!(err.reason.contains("not an exact integer"), "{err}");
        let (_, out) =
            apply_transforms(&t, None, value(&[("RAIN_MM", ScalarValue::Float(287.0))])).unwrap();
        assert_eq!(out.get("RAIN_MM"), Some(&ScalarValue::Int(287)));
    }

    #[test]
    fn empty_chain_is_identity() {
        let v = value(&[("X", ScalarValue::Text("keep".into()))]);
        let (key, out) = apply_transforms(&[], Some("k".into()), v.clone()).unwrap();
        assert_eq!(key.as_deref(), Some("k"));
        assert_eq!(out, v);
    }

    #[test]
    fn set_key_drop_and_wallclock() {
        let v = value(&[
            ("STATION", ScalarValue::Text("S1".into())),
            ("SECRET", ScalarValue::Int(42)),
        ]);
        let t = vec![
            TransformSpec::SetKey { field: "STATION".into() },
            TransformSpec::Drop { field: "SECRET".into() },
            TransformSpec::InsertWallclock { field: "INGESTED_AT".into() },
        ];
        let before = now_ms();
        let (key, out) = apply_transforms(&t, None, v).unwrap();
        assert_eq!(key.as_deref(), Some("S1"));
        assert!(!out.contains_key("SECRET"));
        match out.get("INGESTED_AT") {
            Some(ScalarValue::Timestamp(ms)) => assert!(*ms >= before),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn failures_name_the_transform_index() {
        let t = vec![
            TransformSpec::InsertWallclock { field: "AT".into() },
            TransformSpec::Drop { field: "MISSING".into() },
        ];
        let err = apply_transforms(&t, None, FieldMap::new()).unwrap_err();
        assert_eq!(err.index, 1);
        assert!(err.reason.contains("MISSING"), "{err}");
    }

    #[test]
    fn output_schema_follows_the_chain() {
        let input = Schema::new(vec![
            FieldDef::new("TS", ScalarType::Timestamp, false),
            FieldDef::new("RAIN", ScalarType::Float, false),
            FieldDef::new("NOTE", ScalarType::Text, true),
        ])
        .unwrap()
        .with_event_time("TS")
        .unwrap();
        let chain = vec![
            TransformSpec::Rename { from: "RAIN".into(), to: "RAIN_MM".into() },
            TransformSpec::Drop { field: "NOTE".into() },
            TransformSpec::InsertWallclock { field: "SEEN_AT".into() },
        ];
        let out = transform_output_schema(&input, &chain).unwrap();
        assert_eq!(out.field_names().collect::<Vec<_>>(), ["TS", "RAIN_MM", "SEEN_AT"]);
        assert_eq!(out.event_time_field.as_deref(), Some("TS"));
        assert_eq!(out.field("SEEN_AT").unwrap().ty, ScalarType::Timestamp);

        // identity chain changes nothing
        assert_eq!(transform_output_schema(&input, &[]).unwrap(), input);

        // dropping the event-time field clears the designation
        let out = transform_output_schema(
            &input,
            &[TransformSpec::Drop { field: "ts".into() }],
        )
        .unwrap();
        assert_eq!(out.event_time_field, None);

        // a reference to a field that cannot exist fails statically
        let err = transform_output_schema(
            &input,
            &[
                TransformSpec::Drop { field: "NOTE".into() },
                TransformSpec::Cast { field: "NOTE".into(), to_type: ScalarType::Int },
            ],
        )
        .unwrap_err();
        assert_eq!(err.index, 1);
    }

    #[test]
    fn timestamp_accepts_iso_and_millis() {
        assert_eq!(parse_timestamp("2020-04-02T17:05:07Z"), Some(1_585_847_107_000));
        assert_eq!(parse_timestamp("1585847107000"), Some(1_585_847_107_000));
        assert_eq!(parse_timestamp("2020-04-02T19:05:07+02:00"), Some(1_585_847_107_000));
        assert_eq!(parse_timestamp("yesterday"), None);
    }

    #[test]
    fn config_file_round_trip_and_validation() {
        let text = r#"{
            "sources": [{
                "name": "rain_csv",
                "kind": "csv_file",
                "path": "/data/rain.csv",
                "target_topic": "RAIN",
                "schema": {
                    "fields": [
                        {"name": "ts", "type": "timestamp", "nullable": false},
                        {"name": "rain", "type": "float", "nullable": false}
                    ]
                },
                "event_time_field": "TS",
                "transforms": [{"rename": {"from": "RAIN", "to": "RAIN_MM"}}]
            }],
            "sinks": [{
                "name": "ep_out",
                "kind": "jsonl_file",
                "source_topic": "EP",
                "path": "/out/ep.jsonl"
            }]
        }"#;
        let config = ConnectConfig::from_json(text).unwrap();
        assert_eq!(config.sources.len(), 1);
        assert_eq!(config.sources[0].poll_interval_ms, 200, "default applies");
        assert_eq!(config.sinks[0].from_position, FromPosition::Earliest);
        assert_eq!(config.sinks[0].group(), "sink-ep_out");
        assert_eq!(config.sources[0].dead_letter_topic(), "RAIN__DLQ");
        let schema = config.sources[0].canonical_schema().unwrap();
        assert_eq!(schema.field_names().collect::<Vec<_>>(), ["TS", "RAIN"]);
        assert_eq!(schema.event_time_field.as_deref(), Some("TS"));
        let out = transform_output_schema(&schema, &config.sources[0].transforms).unwrap();
        assert_eq!(out.field_names().collect::<Vec<_>>(), ["TS", "RAIN_MM"]);
    }

    #[test]
    fn event_time_field_must_be_timestamp() {
        let config = SourceConfig {
            name: "s".into(),
            kind: SourceKind::CsvFile,
            path: Some("/tmp/x.csv".into()),
            generator: None,
            target_topic: "T".into(),
            schema: Schema::new(vec![FieldDef::new("V", ScalarType::Float, false)]).unwrap(),
            event_time_field: Some("V".into()),
            poll_interval_ms: 200,
            transforms: Vec::new(),
            checkpoint_path: None,
        };
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("TIMESTAMP"), "{err}");
    }
}
