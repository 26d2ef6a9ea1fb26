//! Source connectors: tail a CSV or JSONL file, or run a generator, and
//! publish each row to a topic. Progress is a checkpoint beside the input,
//! advanced only after the broker acknowledges, so restarts redeliver
//! rather than drop.

use super::{
    apply_transforms, generate_rain, now_ms, parse_timestamp, read_checkpoint, sleep_responsive,
    write_checkpoint, ConnectError, ConnectorHandle, ConnectorShared, GeneratorParams,
    SourceConfig, SourceKind,
};
use crate::broker::{BrokerApi, BrokerError, ProduceRecord};
use crate::model::{
    canonical_ident, validate_record, FieldMap, Schema, ScalarType, ScalarValue, TimestampMs,
    TopicSpec,
};
use std::io::Read;
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

/// Splits one CSV line into cells, honoring quoting.
fn split_csv(line: &str) -> Result<Vec<String>, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(line.as_bytes());
    let mut cells = csv::StringRecord::new();
    match reader.read_record(&mut cells) {
        Ok(true) => Ok(cells.iter().map(str::to_string).collect()),
        Ok(false) => Err("empty line".into()),
        Err(e) => Err(e.to_string()),
    }
}

/// Matches a CSV header row against the schema. Columns may come in any
/// order and any case, but the name set must equal the schema's exactly.
/// Returns the canonical column names in file order.
pub fn parse_csv_header(schema: &Schema, line: &str) -> Result<Vec<String>, String> {
    let columns: Vec<String> = split_csv(line)?.iter().map(|c| canonical_ident(c.trim())).collect();
    let mut expected: Vec<&str> = schema.field_names().collect();
    for name in &columns {
        match expected.iter().position(|e| e == name) {
            Some(i) => {
                expected.remove(i);
            }
            None => return Err(format!("header column {name} is not in the schema")),
        }
    }
    if !expected.is_empty() {
        return Err(format!("header is missing column {}", expected[0]));
    }
    Ok(columns)
}

fn parse_csv_cell(cell: &str, ty: ScalarType) -> Result<ScalarValue, String> {
    if cell.is_empty() {
        return Ok(ScalarValue::Null);
    }
    match ty {
        ScalarType::Bool => match cell.trim().to_ascii_lowercase().as_str() {
            "true" => Ok(ScalarValue::Bool(true)),
            "false" => Ok(ScalarValue::Bool(false)),
            _ => Err(format!("{cell:?} is not a boolean")),
        },
        ScalarType::Int => {
            cell.trim().parse::<i64>().map(ScalarValue::Int).map_err(|_| format!("{cell:?} is not an integer"))
        }
        ScalarType::Float => {
            cell.trim().parse::<f64>().map(ScalarValue::Float).map_err(|_| format!("{cell:?} is not a number"))
        }
        ScalarType::Text => Ok(ScalarValue::Text(cell.to_string())),
        ScalarType::Timestamp => parse_timestamp(cell)
            .map(ScalarValue::Timestamp)
            .ok_or_else(|| format!("{cell:?} is not a timestamp")),
    }
}

/// Parses one CSV data row against the header previously matched by
/// `parse_csv_header`. The result is in schema field order regardless of
/// column order in the file, so CSV and JSONL inputs land identically.
pub fn parse_csv_line(schema: &Schema, columns: &[String], line: &str) -> Result<FieldMap, String> {
    let cells = split_csv(line)?;
    if cells.len() != columns.len() {
        return Err(format!("expected {} cells, found {}", columns.len(), cells.len()));
    }
    let mut out = FieldMap::with_capacity(schema.fields.len());
    for field in &schema.fields {
        let at = columns.iter().position(|c| *c == field.name).expect("header was matched");
        let value = parse_csv_cell(&cells[at], field.ty)
            .map_err(|e| format!("column {}: {e}", field.name))?;
        out.insert(field.name.clone(), value);
    }
    Ok(out)
}

/// Parses one JSONL row. Member names match the schema case-insensitively,
/// unknown members are errors, absent members become Null, and integers
/// widen to float where the schema asks for one.
pub fn parse_jsonl_line(schema: &Schema, line: &str) -> Result<FieldMap, String> {
    let parsed: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| format!("invalid JSON at byte {}: {e}", e.column().saturating_sub(1)))?;
    let object = parsed.as_object().ok_or("line is not a JSON object")?;
    let mut staged: FieldMap = FieldMap::with_capacity(object.len());
    for (member, value) in object {
        let name = canonical_ident(member);
        let def = schema.field(&name).ok_or_else(|| format!("unknown member {member}"))?;
        if staged.contains_key(&name) {
            return Err(format!("duplicate member {member}"));
        }
        let converted = match (&def.ty, value) {
            (_, serde_json::Value::Null) => ScalarValue::Null,
            (ScalarType::Bool, serde_json::Value::Bool(b)) => ScalarValue::Bool(*b),
            (ScalarType::Int, v) if v.as_i64().is_some() => ScalarValue::Int(v.as_i64().unwrap()),
            (ScalarType::Float, v) if v.as_f64().is_some() => ScalarValue::Float(v.as_f64().unwrap()),
            (ScalarType::Float, serde_json::Value::String(s))
                if matches!(s.as_str(), "Infinity" | "-Infinity") =>
            {
                ScalarValue::Float(if s.starts_with('-') { f64::NEG_INFINITY } else { f64::INFINITY })
            }
            (ScalarType::Text, serde_json::Value::String(s)) => ScalarValue::Text(s.clone()),
            (ScalarType::Timestamp, v) if v.as_i64().is_some() => {
                ScalarValue::Timestamp(v.as_i64().unwrap())
            }
            (ScalarType::Timestamp, serde_json::Value::String(s)) => parse_timestamp(s)
                .map(ScalarValue::Timestamp)
                .ok_or_else(|| format!("member {member}: {s:?} is not a timestamp"))?,
            (ty, v) => return Err(format!("member {member}: {v} does not fit {}", ty.name())),
        };
        staged.insert(name, converted);
    }
    Ok(schema
        .fields
        .iter()
        .map(|f| (f.name.clone(), staged.shift_remove(&f.name).unwrap_or(ScalarValue::Null)))
        .collect())
}

/// Fault-injection points for crash testing: the simulated kill lands
/// after the broker acknowledged but before the checkpoint moved, or
/// right after the checkpoint moved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceKillPoint {
    AfterProduce,
    AfterCheckpoint,
}

#[derive(Debug, Clone)]
pub struct SourceOptions {
    pub batch_max: usize,
    pub kill_after_outputs: Option<(u64, SourceKillPoint)>,
}

impl Default for SourceOptions {
    fn default() -> SourceOptions {
        SourceOptions { batch_max: 500, kill_after_outputs: None }
    }
}

fn ensure_topic(broker: &dyn BrokerApi, name: &str, schema: Option<&Schema>) -> Result<(), ConnectError> {
    match broker.create_topic(
        TopicSpec::new(name).map_err(BrokerError::InvalidTopic)?,
        schema.cloned(),
    ) {
        Ok(_) => Ok(()),
        Err(BrokerError::DuplicateTopic(_)) => {
            if let Some(schema) = schema {
                if broker.schema_of(name)?.is_none() {
                    broker.attach_schema(name, schema.clone())?;
                }
            }
            Ok(())
        }
        Err(e) => Err(e.into()),
    }
}

/// Starts a source connector on its own thread.
pub fn run_source(
    broker: Arc<dyn BrokerApi>,
    config: SourceConfig,
    options: SourceOptions,
) -> Result<ConnectorHandle, ConnectError> {
    config.validate()?;
    let schema = config.canonical_schema()?;
    let out_schema = super::transform_output_schema(&schema, &config.transforms)
        .map_err(|e| ConnectError::Config(format!("source {}: {e}", config.name)))?;
    let topic = canonical_ident(&config.target_topic);
    ensure_topic(broker.as_ref(), &topic, Some(&out_schema))?;
    if config.kind == SourceKind::Generator {
        generator_fields(&schema)?;
    }
    let stop = Arc::new(AtomicBool::new(false));
    let shared = ConnectorShared::new();
    let name = config.name.clone();
    let thread = {
        let stop = Arc::clone(&stop);
        let shared = Arc::clone(&shared);
        std::thread::Builder::new()
            .name(format!("source-{name}"))
            .spawn(move || {
                let runner =
                    SourceRunner { broker, config, schema, out_schema, topic, stop, shared, options };
                let outcome = match runner.config.kind {
                    SourceKind::Generator => runner.generator_loop(),
                    SourceKind::CsvFile | SourceKind::JsonlFile => runner.file_loop(),
                };
                if let Err(e) = outcome {
                    runner.shared.fail(e.to_string());
                }
            })
            .expect("spawn source thread")
    };
    Ok(ConnectorHandle::new(name, stop, shared, thread))
}

/// Picks the generator's output fields: the schema must hold exactly one
/// Timestamp field and one Float field.
fn generator_fields(schema: &Schema) -> Result<(String, String), ConnectError> {
    let ts: Vec<&str> = schema
        .fields
        .iter()
        .filter(|f| f.ty == ScalarType::Timestamp)
        .map(|f| f.name.as_str())
        .collect();
    let val: Vec<&str> = schema
        .fields
        .iter()
        .filter(|f| f.ty == ScalarType::Float)
        .map(|f| f.name.as_str())
        .collect();
    if ts.len() == 1 && val.len() == 1 && schema.fields.len() == 2 {
        Ok((ts[0].to_string(), val[0].to_string()))
    } else {
        Err(ConnectError::Config(
            "generator schema must be exactly one TIMESTAMP and one FLOAT field".into(),
        ))
    }
}

struct SourceRunner {
    broker: Arc<dyn BrokerApi>,
    config: SourceConfig,
    /// Shape of the raw input rows.
    schema: Schema,
    /// Shape after transforms; what the target topic carries.
    out_schema: Schema,
    topic: String,
    stop: Arc<AtomicBool>,
    shared: Arc<ConnectorShared>,
    options: SourceOptions,
}

enum AfterBatch {
    Continue,
    Killed,
}

impl SourceRunner {
    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn kill_due(&self, point: SourceKillPoint) -> bool {
        match self.options.kill_after_outputs {
            Some((threshold, at)) => {
                at == point && self.shared.records_out.load(Ordering::Relaxed) >= threshold
            }
            None => false,
        }
    }

    fn event_time_of(&self, value: &FieldMap) -> Option<TimestampMs> {
        let field = self.schema.event_time_field.as_ref()?;
        match value.get(field) {
            Some(ScalarValue::Timestamp(ms)) => Some(*ms),
            _ => None,
        }
    }

    /// Parses, transforms, and validates one raw line. A failure at any
    /// step dead-letters the raw line instead of stalling the stream.
    fn prepare_line(&self, columns: Option<&[String]>, raw: &str) -> Result<ProduceRecord, String> {
        let parsed = match self.config.kind {
            SourceKind::CsvFile => parse_csv_line(&self.schema, columns.expect("csv header"), raw)?,
            SourceKind::JsonlFile => parse_jsonl_line(&self.schema, raw)?,
            SourceKind::Generator => unreachable!("generator rows are built, not parsed"),
        };
        let event_time = self.event_time_of(&parsed);
        let (key, value) =
            apply_transforms(&self.config.transforms, None, parsed).map_err(|e| e.to_string())?;
        let violations = validate_record(&self.out_schema, &value);
        if !violations.is_empty() {
            let detail: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
            return Err(detail.join("; "));
        }
        let mut record = ProduceRecord::new(value);
        record.key = key;
        record.event_time = event_time;
        Ok(record)
    }

    /// Publishes prepared records in batch_max slices, checking the kill
    /// hook after each acknowledged produce.
    fn produce_all(&self, topic: &str, records: Vec<ProduceRecord>) -> Result<AfterBatch, ConnectError> {
        let mut rest = records;
        while !rest.is_empty() {
            let take = rest.len().min(self.options.batch_max.max(1));
            let slice: Vec<ProduceRecord> = rest.drain(..take).collect();
            let n = slice.len() as u64;
            self.broker.produce(topic, slice)?;
            self.shared.records_out.fetch_add(n, Ordering::Relaxed);
            if self.kill_due(SourceKillPoint::AfterProduce) {
                return Ok(AfterBatch::Killed);
            }
        }
        Ok(AfterBatch::Continue)
    }

    fn dead_letter(&self, lines: Vec<(String, String)>) -> Result<(), ConnectError> {
        if lines.is_empty() {
            return Ok(());
        }
        let dlq = self.config.dead_letter_topic();
        ensure_topic(self.broker.as_ref(), &dlq, None)?;
        let batch: Vec<ProduceRecord> = lines
            .into_iter()
            .map(|(raw, error)| {
                let mut value = FieldMap::new();
                value.insert("LINE".into(), ScalarValue::Text(raw));
                let mut record = ProduceRecord::new(value);
                record.event_time = Some(now_ms());
                record.headers.push(("error".into(), error));
                record
            })
            .collect();
        self.shared.dead_letters.fetch_add(batch.len() as u64, Ordering::Relaxed);
        self.broker.produce(&dlq, batch)?;
        Ok(())
    }

    fn file_loop(&self) -> Result<(), ConnectError> {
        let path = self.config.path.clone().expect("validated");
        let ckpt_path = self.config.checkpoint_file().expect("file source");
        let mut offset = read_checkpoint(&ckpt_path);
        let mut header: Option<(Vec<String>, u64)> = None;
        let poll = self.config.poll_interval();
        let mut backoff = poll;

        while !self.stopped() {
            let chunk = match read_complete_lines(&path, &mut header, &self.schema, self.config.kind, offset) {
                Ok(c) => {
                    self.shared.running();
                    backoff = poll;
                    c
                }
                Err(ReadError::Unreadable(detail)) => {
                    self.shared.retrying(detail);
                    sleep_responsive(&self.stop, backoff);
                    backoff = (backoff * 2).min(Duration::from_secs(5));
                    continue;
                }
                Err(ReadError::BadHeader(detail)) => {
                    return Err(ConnectError::Config(format!("{}: {detail}", path.display())));
                }
            };
            let Some(chunk) = chunk else {
                sleep_responsive(&self.stop, poll);
                continue;
            };
            let columns = header.as_ref().map(|(c, _)| c.as_slice());
            let mut good = Vec::new();
            let mut bad = Vec::new();
            for raw in &chunk.lines {
                if raw.is_empty() {
                    continue;
                }
                match self.prepare_line(columns, raw) {
                    Ok(record) => good.push(record),
                    Err(error) => bad.push((raw.clone(), error)),
                }
            }
            if matches!(self.produce_all(&self.topic, good)?, AfterBatch::Killed) {
                *self.shared.state.lock() = super::ConnectorState::Stopped;
                return Ok(());
            }
            self.dead_letter(bad)?;
            write_checkpoint(&ckpt_path, chunk.next_offset)?;
            offset = chunk.next_offset;
            if self.kill_due(SourceKillPoint::AfterCheckpoint) {
                *self.shared.state.lock() = super::ConnectorState::Stopped;
                return Ok(());
            }
        }
        Ok(())
    }

    fn generator_loop(&self) -> Result<(), ConnectError> {
        let params: GeneratorParams = self.config.generator.expect("validated");
        let (ts_field, val_field) = generator_fields(&self.schema)?;
        let rows = generate_rain(&params);
        let ckpt_path = self.config.checkpoint_path.clone();
        let mut seq = ckpt_path.as_deref().map(read_checkpoint).unwrap_or(0) as usize;
        let uses_event_time = self.schema.event_time_field.as_deref() == Some(ts_field.as_str());

        while !self.stopped() && seq < rows.len() {
            let take = (rows.len() - seq).min(self.options.batch_max.max(1));
            let batch: Vec<ProduceRecord> = rows[seq..seq + take]
                .iter()
                .map(|(ts, v)| {
                    let mut value = FieldMap::with_capacity(2);
                    for field in &self.schema.fields {
                        if field.name == ts_field {
                            value.insert(field.name.clone(), ScalarValue::Timestamp(*ts));
                        } else if field.name == val_field {
                            value.insert(field.name.clone(), ScalarValue::Float(*v));
                        }
                    }
                    let mut record = ProduceRecord::new(value);
                    if uses_event_time {
                        record.event_time = Some(*ts);
                    }
                    record
                })
                .collect();
            if matches!(self.produce_all(&self.topic, batch)?, AfterBatch::Killed) {
                *self.shared.state.lock() = super::ConnectorState::Stopped;
                return Ok(());
            }
            seq += take;
            if let Some(p) = &ckpt_path {
                write_checkpoint(p, seq as u64)?;
            }
            if self.kill_due(SourceKillPoint::AfterCheckpoint) {
                *self.shared.state.lock() = super::ConnectorState::Stopped;
                return Ok(());
            }
        }
        if seq >= rows.len() {
            *self.shared.state.lock() = super::ConnectorState::Finished;
        }
        Ok(())
    }
}

struct LineChunk {
    lines: Vec<String>,
    next_offset: u64,
}

enum ReadError {
    /// Transient: missing or unreadable file; keep retrying.
    Unreadable(String),
    /// Fatal: the CSV header does not fit the schema.
    BadHeader(String),
}

/// Reads every complete, newline-terminated line past `offset`. A trailing
/// partial line stays in the file for the next poll, so a writer mid-append
/// never produces a torn record. For CSV the header always comes from byte
/// zero, even when resuming from a checkpoint.
fn read_complete_lines(
    path: &Path,
    header: &mut Option<(Vec<String>, u64)>,
    schema: &Schema,
    kind: SourceKind,
    offset: u64,
) -> Result<Option<LineChunk>, ReadError> {
    let mut file = std::fs::File::open(path).map_err(|e| ReadError::Unreadable(e.to_string()))?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| ReadError::Unreadable(e.to_string()))?;

    let mut start = offset as usize;
    if kind == SourceKind::CsvFile {
        if header.is_none() {
            let Some(nl) = bytes.iter().position(|b| *b == b'\n') else {
                return Ok(None); // header not fully written yet
            };
            let line = trim_line(&bytes[..nl]);
            let columns = parse_csv_header(schema, &String::from_utf8_lossy(line))
                .map_err(ReadError::BadHeader)?;
            *header = Some((columns, nl as u64 + 1));
        }
        let header_end = header.as_ref().map(|(_, end)| *end).expect("just set") as usize;
        start = start.max(header_end);
    }
    if start >= bytes.len() {
        return Ok(None);
    }
    let tail = &bytes[start..];
    let Some(last_nl) = tail.iter().rposition(|b| *b == b'\n') else {
        return Ok(None);
    };
    let lines = tail[..last_nl]
        .split(|b| *b == b'\n')
        .map(|line| String::from_utf8_lossy(trim_line(line)).into_owned())
        .collect();
    Ok(Some(LineChunk { lines, next_offset: (start + last_nl + 1) as u64 }))
}

fn trim_line(line: &[u8]) -> &[u8] {
    match line.last() {
        Some(b'\r') => &line[..line.len() - 1],
        _ => line,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::FieldDef;

    fn rain_schema() -> Schema {
        Schema::new(vec![
            FieldDef::new("TS", ScalarType::Timestamp, false),
            FieldDef::new("RAIN_MM", ScalarType::Float, false),
        ])
        .unwrap()
        .with_event_time("TS")
        .unwrap()
    }

    #[test]
    fn header_matches_any_order_and_case() {
        let schema = rain_schema();
        assert_eq!(parse_csv_header(&schema, "ts,rain_mm").unwrap(), ["TS", "RAIN_MM"]);
        assert_eq!(parse_csv_header(&schema, "Rain_MM,TS").unwrap(), ["RAIN_MM", "TS"]);
        let err = parse_csv_header(&schema, "ts,rain_mm,extra").unwrap_err();
        assert!(err.contains("EXTRA"), "{err}");
        let err = parse_csv_header(&schema, "ts").unwrap_err();
        assert!(err.contains("RAIN_MM"), "{err}");
    }

    #[test]
    fn csv_rows_land_in_schema_order() {
        let schema = rain_schema();
        let columns = parse_csv_header(&schema, "rain_mm,ts").unwrap();
        let row = parse_csv_line(&schema, &columns, "287.4,2020-04-02T17:05:07Z").unwrap();
        let names: Vec<&String> = row.keys().collect();
        assert_eq!(names, ["TS", "RAIN_MM"]);
        assert_eq!(row.get("TS"), Some(&ScalarValue::Timestamp(1_585_847_107_000)));
        assert_eq!(row.get("RAIN_MM"), Some(&ScalarValue::Float(287.4)));
    }

    #[test]
    fn csv_quoting_empty_cells_and_bad_numbers() {
        let schema = Schema::new(vec![
            FieldDef::new("NAME", ScalarType::Text, false),
            FieldDef::new("N", ScalarType::Int, true),
        ])
        .unwrap();
        let columns = parse_csv_header(&schema, "name,n").unwrap();
        let row = parse_csv_line(&schema, &columns, "\"a, quoted \"\"cell\"\"\",7").unwrap();
        assert_eq!(row.get("NAME"), Some(&ScalarValue::Text("a, quoted \"cell\"".into())));
        let row = parse_csv_line(&schema, &columns, "x,").unwrap();
        assert_eq!(row.get("N"), Some(&ScalarValue::Null));
        let err = parse_csv_line(&schema, &columns, "x,seven").unwrap_err();
        assert!(err.contains("not an integer"), "{err}");
        let err = parse_csv_line(&schema, &columns, "only-one-cell").unwrap_err();
        assert!(err.contains("expected 2 cells"), "{err}");
    }

    #[test]
    fn jsonl_widens_ints_and_rejects_unknown_members() {
        let schema = rain_schema();
        let row =
            parse_jsonl_line(&schema, r#"{"rain_mm": 287, "ts": "2020-04-02T17:05:07Z"}"#).unwrap();
        let names: Vec<&String> = row.keys().collect();
        assert_eq!(names, ["TS", "RAIN_MM"], "schema order, not member order");
        assert_eq!(row.get("RAIN_MM"), Some(&ScalarValue::Float(287.0)));
        assert_eq!(row.get("TS"), Some(&ScalarValue::Timestamp(1_585_847_107_000)));

        let err = parse_jsonl_line(&schema, r#"{"ts": 0, "wind": 3}"#).unwrap_err();
        assert!(err.contains("unknown member wind"), "{err}");
        let err = parse_jsonl_line(&schema, "{\"ts\": ").unwrap_err();
        assert!(err.contains("byte"), "{err}");
        let row = parse_jsonl_line(&schema, r#"{"ts": 1585847107000}"#).unwrap();
        assert_eq!(row.get("RAIN_MM"), Some(&ScalarValue::Null), "absent member is null");
    }

    #[test]
    fn csv_and_jsonl_parse_identically() {
        let schema = rain_schema();
        let columns = parse_csv_header(&schema, "ts,rain_mm").unwrap();
        let from_csv = parse_csv_line(&schema, &columns, "1585847107000,12.5").unwrap();
        let from_json = parse_jsonl_line(&schema, r#"{"TS": 1585847107000, "Rain_Mm": 12.5}"#).unwrap();
        assert_eq!(from_csv, from_json);
    }

    #[test]
    fn infinity_strings_parse_for_float_fields() {
        let schema =
            Schema::new(vec![FieldDef::new("V", ScalarType::Float, true)]).unwrap();
        let row = parse_jsonl_line(&schema, r#"{"v": "Infinity"}"#).unwrap();
        assert_eq!(row.get("V"), Some(&ScalarValue::Float(f64::INFINITY)));
        let row = parse_jsonl_line(&schema, r#"{"v": "-Infinity"}"#).unwrap();
        assert_eq!(row.get("V"), Some(&ScalarValue::Float(f64::NEG_INFINITY)));
    }

    #[test]
    fn partial_trailing_line_waits_for_its_newline() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rain.csv");
        std::fs::write(&path, "ts,rain_mm\n0,1.0\n300000,2.0\n600000,3").unwrap();
        let schema = rain_schema();
        let mut header = None;
        let chunk = read_complete_lines(&path, &mut header, &schema, SourceKind::CsvFile, 0)
            .ok()
            .flatten()
            .unwrap();
        assert_eq!(chunk.lines, ["0,1.0", "300000,2.0"]);
        // completing the third line makes it visible from the checkpoint
        std::fs::write(&path, "ts,rain_mm\n0,1.0\n300000,2.0\n600000,3.0\n").unwrap();
        let chunk =
            read_complete_lines(&path, &mut header, &schema, SourceKind::CsvFile, chunk.next_offset)
                .ok()
                .flatten()
                .unwrap();
        assert_eq!(chunk.lines, ["600000,3.0"]);
    }
}
