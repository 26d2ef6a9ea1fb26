//! Sink connectors: drain a topic into a JSONL or CSV file. Each sink is
//! a consumer group, commits only after bytes are durably written, and so
//! delivers every record at least once across restarts.

use super::{
    apply_transforms, sleep_responsive, ConnectError, ConnectorHandle, ConnectorShared,
    ConnectorState, FromPosition, SinkConfig, SinkKind,
};
use crate::broker::{BrokerApi, BrokerError};
use crate::model::{canonical_ident, FieldMap, Record, Schema, ScalarValue};
use std::io::Write;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

/// Fault-injection points for crash testing: the simulated kill lands
/// after bytes hit the file but before the offset commit, or right after
/// the commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SinkKillPoint {
    AfterWrite,
    AfterCommit,
}

#[derive(Debug, Clone)]
pub struct SinkOptions {
    pub batch_max: usize,
    pub kill_after_outputs: Option<(u64, SinkKillPoint)>,
}

impl Default for SinkOptions {
    fn default() -> SinkOptions {
        SinkOptions { batch_max: 500, kill_after_outputs: None }
    }
}

/// Renders a field map as one plain JSON object with members in sorted
/// name order, so byte-identical values always produce byte-identical
/// lines. Timestamps become integer epoch milliseconds; non-finite floats
/// become the strings the JSONL parser accepts back.
pub fn jsonl_line(value: &FieldMap) -> String {
    let mut names: Vec<&String> = value.keys().collect();
    names.sort();
    let mut object = serde_json::Map::with_capacity(names.len());
    for name in names {
        object.insert(name.clone(), scalar_to_plain_json(&value[name]));
    }
    serde_json::Value::Object(object).to_string()
}

fn scalar_to_plain_json(v: &ScalarValue) -> serde_json::Value {
    match v {
        ScalarValue::Null => serde_json::Value::Null,
        ScalarValue::Bool(b) => serde_json::Value::Bool(*b),
        ScalarValue::Int(i) => serde_json::Value::from(*i),
        ScalarValue::Float(x) => match serde_json::Number::from_f64(*x) {
            Some(n) => serde_json::Value::Number(n),
            None => serde_json::Value::String(
                if x.is_nan() { "NaN" } else if *x > 0.0 { "Infinity" } else { "-Infinity" }
                    .to_string(),
            ),
        },
        ScalarValue::Text(s) => serde_json::Value::String(s.clone()),
        ScalarValue::Timestamp(ms) => serde_json::Value::from(*ms),
    }
}

fn csv_cell(v: Option<&ScalarValue>) -> String {
    match v {
        None | Some(ScalarValue::Null) => String::new(),
        Some(ScalarValue::Bool(b)) => b.to_string(),
        Some(ScalarValue::Int(i)) => i.to_string(),
        Some(ScalarValue::Float(x)) => format!("{x:?}"),
        Some(ScalarValue::Text(s)) => s.clone(),
        Some(ScalarValue::Timestamp(ms)) => ms.to_string(),
    }
}

/// Renders a batch of rows as CSV in schema field order, quoting per the
/// usual rules. `with_header` prepends the column row.
pub fn csv_lines(schema: &Schema, rows: &[FieldMap], with_header: bool) -> Result<Vec<u8>, String> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    if with_header {
        writer
            .write_record(schema.field_names())
            .map_err(|e| e.to_string())?;
    }
    for row in rows {
        let cells: Vec<String> =
            schema.fields.iter().map(|f| csv_cell(row.get(&f.name))).collect();
        writer.write_record(&cells).map_err(|e| e.to_string())?;
    }
    writer.into_inner().map_err(|e| e.to_string())
}

/// Starts a sink connector on its own thread.
pub fn run_sink(
    broker: Arc<dyn BrokerApi>,
    config: SinkConfig,
    options: SinkOptions,
) -> Result<ConnectorHandle, ConnectError> {
    config.validate()?;
    if let Some(parent) = config.path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let stop = Arc::new(AtomicBool::new(false));
    let shared = ConnectorShared::new();
    let name = config.name.clone();
    let thread = {
        let stop = Arc::clone(&stop);
        let shared = Arc::clone(&shared);
        std::thread::Builder::new()
            .name(format!("sink-{name}"))
            .spawn(move || {
                let runner = SinkRunner {
                    topic: canonical_ident(&config.source_topic),
                    broker,
                    config,
                    stop,
                    shared,
                    options,
                };
                if let Err(e) = runner.run() {
                    runner.shared.fail(e.to_string());
                }
            })
            .expect("spawn sink thread")
    };
    Ok(ConnectorHandle::new(name, stop, shared, thread))
}

struct SinkRunner {
    broker: Arc<dyn BrokerApi>,
    config: SinkConfig,
    topic: String,
    stop: Arc<AtomicBool>,
    shared: Arc<ConnectorShared>,
    options: SinkOptions,
}

impl SinkRunner {
    fn stopped(&self) -> bool {
        self.stop.load(Ordering::SeqCst)
    }

    fn kill_due(&self, point: SinkKillPoint) -> bool {
        match self.options.kill_after_outputs {
            Some((threshold, at)) => {
                at == point && self.shared.records_out.load(Ordering::Relaxed) >= threshold
            }
            None => false,
        }
    }

    /// Waits for the topic to exist; sources create their targets, so a
    /// sink may simply have started first.
    fn wait_for_topic(&self) -> Result<Option<u32>, ConnectError> {
        loop {
            match self.broker.describe_topic(&self.topic) {
                Ok(info) => return Ok(Some(info.partitions)),
                Err(BrokerError::UnknownTopic(_)) if !self.stopped() => {
                    self.shared.retrying(format!("waiting for topic {}", self.topic));
                    sleep_responsive(&self.stop, self.config.poll_interval());
                }
                Err(BrokerError::UnknownTopic(_)) => return Ok(None),
                Err(e) => return Err(e.into()),
            }
        }
    }

    fn run(&self) -> Result<(), ConnectError> {
        let Some(partitions) = self.wait_for_topic()? else {
            return Ok(());
        };
        self.shared.running();
        let schema = match self.config.kind {
            SinkKind::CsvFile => {
                let on_topic = self.broker.schema_of(&self.topic)?.ok_or_else(|| {
                    ConnectError::Config(format!(
                        "csv sink {} needs a schema on topic {}",
                        self.config.name, self.topic
                    ))
                })?;
                // Columns follow the shape this sink writes, not the raw
                // topic shape.
                let written = super::transform_output_schema(&on_topic, &self.config.transforms)
                    .map_err(|e| {
                        ConnectError::Config(format!("sink {}: {e}", self.config.name))
                    })?;
                Some(written)
            }
            SinkKind::JsonlFile => None,
        };
        let group = self.config.group();
        let mut next: Vec<u64> = Vec::with_capacity(partitions as usize);
        for p in 0..partitions {
            let committed = self.broker.committed_offset(&group, &self.topic, p)?;
            next.push(if committed == 0 && self.config.from_position == FromPosition::Latest {
                self.broker.end_offset(&self.topic, p).unwrap_or(0)
            } else {
                committed
            });
        }

        while !self.stopped() {
            let mut idle = true;
            for partition in 0..partitions {
                let from = next[partition as usize];
                let batch = match self.broker.fetch(
                    &self.topic,
                    partition,
                    from,
                    self.options.batch_max.max(1),
                    std::time::Duration::ZERO,
                ) {
                    Ok(batch) => batch,
                    Err(BrokerError::OffsetOutOfRange { earliest, .. }) => {
                        next[partition as usize] = earliest;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let Some(last) = batch.last() else { continue };
                idle = false;
                let upto = last.offset + 1;
                let written = self.write_batch(schema.as_ref(), &batch)?;
                self.shared.records_out.fetch_add(written, Ordering::Relaxed);
                if self.kill_due(SinkKillPoint::AfterWrite) {
                    *self.shared.state.lock() = ConnectorState::Stopped;
                    return Ok(());
                }
                self.broker.commit_offset(&group, &self.topic, partition, upto)?;
                next[partition as usize] = upto;
                if self.kill_due(SinkKillPoint::AfterCommit) {
                    *self.shared.state.lock() = ConnectorState::Stopped;
                    return Ok(());
                }
            }
            if idle {
                sleep_responsive(&self.stop, self.config.poll_interval());
            }
        }
        Ok(())
    }

    /// Transforms and appends one fetched batch, returning how many rows
    /// were written. Rows whose transform chain fails are skipped and
    /// counted, never blocking the stream.
    fn write_batch(&self, schema: Option<&Schema>, batch: &[Record]) -> Result<u64, ConnectError> {
        let mut rows = Vec::with_capacity(batch.len());
        for record in batch {
            match apply_transforms(&self.config.transforms, record.key.clone(), record.value.clone())
            {
                Ok((_, value)) => rows.push(value),
                Err(_) => {
                    self.shared.dead_letters.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        if rows.is_empty() {
            return Ok(0);
        }
        let need_header = std::fs::metadata(&self.config.path).map(|m| m.len() == 0).unwrap_or(true);
        let bytes = match schema {
            Some(schema) => {
                csv_lines(schema, &rows, need_header).map_err(ConnectError::Config)?
            }
            None => {
                let mut out = String::new();
                for row in &rows {
                    out.push_str(&jsonl_line(row));
                    out.push('\n');
                }
                out.into_bytes()
            }
        };
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.config.path)?;
        file.write_all(&bytes)?;
        file.sync_data()?;
        Ok(rows.len() as u64)
    }
}
