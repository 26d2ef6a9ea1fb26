//! TCP server: one thread per connection, one JSON frame per line.
//! Simple operations answer inline; subscriptions and streaming queries
//! spawn per-request worker threads that push frames tagged with the
//! request's correlation number.

use super::{Frame, WireError, BAD_FRAME_CORR};
use crate::broker::{Broker, BrokerError, ProduceRecord, StartPosition, TopicInfo};
use crate::codec;
use crate::eql::{EqlError, ExecOutcome, QueryEngine, SelectOutcome, Statement};
use crate::model::{canonical_ident, Schema, TopicSpec};
use parking_lot::Mutex;
use serde_json::{json, Map, Value};
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

/// A listening server; dropping the handle shuts it down and joins every
/// connection after in-flight responses have been written.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    accept: Option<JoinHandle<()>>,
    connections: Arc<Mutex<Vec<JoinHandle<()>>>>,
}

impl ServerHandle {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn port(&self) -> u16 {
        self.addr.port()
    }

    pub fn shutdown(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.accept.take() {
            let _ = t.join();
        }
        let threads: Vec<JoinHandle<()>> = std::mem::take(&mut *self.connections.lock());
        for t in threads {
            let _ = t.join();
        }
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Binds and starts accepting. Fails fast when the address is taken.
pub fn serve(
    bind: &str,
    broker: Arc<Broker>,
    engine: Arc<QueryEngine>,
) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    listener.set_nonblocking(true)?;
    let stop = Arc::new(AtomicBool::new(false));
    let connections: Arc<Mutex<Vec<JoinHandle<()>>>> = Arc::new(Mutex::new(Vec::new()));

    let accept = {
        let stop = Arc::clone(&stop);
        let connections = Arc::clone(&connections);
        std::thread::Builder::new()
            .name("wire-accept".into())
            .spawn(move || loop {
                if stop.load(Ordering::SeqCst) {
                    return;
                }
                match listener.accept() {
                    Ok((stream, _)) => {
                        let broker = Arc::clone(&broker);
                        let engine = Arc::clone(&engine);
                        let stop = Arc::clone(&stop);
                        let handle = std::thread::Builder::new()
                            .name("wire-conn".into())
                            .spawn(move || run_connection(stream, broker, engine, stop))
                            .expect("spawn connection thread");
                        connections.lock().push(handle);
                    }
                    Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                        std::thread::sleep(Duration::from_millis(20));
                    }
                    Err(_) => std::thread::sleep(Duration::from_millis(20)),
                }
            })
            .expect("spawn accept thread")
    };

    Ok(ServerHandle { addr, stop, accept: Some(accept), connections })
}

/// Shared per-connection writer. All frames for one connection funnel
/// through here, so a response and a push can never interleave mid-line.
struct ConnWriter {
    stream: Mutex<TcpStream>,
    alive: AtomicBool,
}

impl ConnWriter {
    fn write(&self, frame: &Frame) -> bool {
        let line = frame.encode();
        let mut stream = self.stream.lock();
        if !self.alive.load(Ordering::SeqCst) {
            return false;
        }
        if stream.write_all(line.as_bytes()).is_err() {
            self.alive.store(false, Ordering::SeqCst);
            return false;
        }
        true
    }

    fn alive(&self) -> bool {
        self.alive.load(Ordering::SeqCst)
    }
}

struct Conn {
    broker: Arc<Broker>,
    engine: Arc<QueryEngine>,
    writer: Arc<ConnWriter>,
    server_stop: Arc<AtomicBool>,
    /// Set when the read loop ends; tells idle workers to wind down.
    /// Distinct from `writer.alive`: a draining worker may still write
    /// its final response after the client stopped sending.
    done: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
    /// Cancel flags of selects started on this connection, flipped when
    /// the connection goes away so their workers unwind.
    cancels: Vec<Arc<AtomicBool>>,
}

fn run_connection(
    stream: TcpStream,
    broker: Arc<Broker>,
    engine: Arc<QueryEngine>,
    server_stop: Arc<AtomicBool>,
) {
    // The listener is non-blocking; accepted sockets must not inherit that.
    if stream.set_nonblocking(false).is_err() {
        return;
    }
    if stream.set_read_timeout(Some(Duration::from_millis(100))).is_err() {
        return;
    }
    let Ok(write_half) = stream.try_clone() else { return };
    let writer =
        Arc::new(ConnWriter { stream: Mutex::new(write_half), alive: AtomicBool::new(true) });
    let done = Arc::new(AtomicBool::new(false));
    let mut conn = Conn {
        broker,
        engine,
        writer: Arc::clone(&writer),
        server_stop: Arc::clone(&server_stop),
        done: Arc::clone(&done),
        workers: Vec::new(),
        cancels: Vec::new(),
    };

    let mut reader = BufReader::new(stream);
    let mut buf: Vec<u8> = Vec::new();
    loop {
        if server_stop.load(Ordering::SeqCst) || !writer.alive() {
            break;
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => {
                if buf.last() == Some(&b'\n') {
                    let line = String::from_utf8_lossy(&buf).into_owned();
                    buf.clear();
                    conn.handle_line(&line);
                }
                // otherwise a partial line: EOF follows on the next read
            }
            Err(e)
                if matches!(
                    e.kind(),
                    std::io::ErrorKind::WouldBlock
                        | std::io::ErrorKind::TimedOut
                        | std::io::ErrorKind::Interrupted
                ) => {}
            Err(_) => break,
        }
    }

    // Teardown: unblock every worker, then wait for them. The writer stays
    // nominally alive so a draining query can still emit its final response;
    // if the peer is really gone that write fails and kills it anyway.
    done.store(true, Ordering::SeqCst);
    for cancel in &conn.cancels {
        cancel.store(true, Ordering::SeqCst);
    }
    for t in conn.workers.drain(..) {
        let _ = t.join();
    }
}

impl Conn {
    fn respond(&self, corr: u64, result: Result<Value, WireError>) {
        self.writer.write(&Frame::Response { corr, result });
    }

    fn handle_line(&mut self, line: &str) {
        if line.trim().is_empty() {
            return;
        }
        match Frame::decode(line) {
            Err(e) => self.respond(BAD_FRAME_CORR, Err(e)),
            Ok(Frame::Request { op, corr, payload }) => self.handle_request(&op, corr, payload),
            Ok(_) => self.respond(
                BAD_FRAME_CORR,
                Err(WireError::bad_frame("expected a request frame")),
            ),
        }
    }

    fn handle_request(&mut self, op: &str, corr: u64, payload: Map<String, Value>) {
        match op {
            "subscribe" => self.start_subscription(corr, &payload),
            "query" => self.start_query(corr, &payload),
            _ => {
                let result = dispatch_simple(&self.broker, &self.engine, op, &payload);
                self.respond(corr, result);
            }
        }
    }

    fn start_subscription(&mut self, corr: u64, payload: &Map<String, Value>) {
        let prepared = (|| {
            let topic = canonical_ident(need_str(payload, "topic")?);
            let group = need_str(payload, "group")?.to_string();
            let position = match payload.get("position").and_then(Value::as_str) {
                None | Some("earliest") => StartPosition::Earliest,
                Some("latest") => StartPosition::Latest,
                Some(other) => {
                    return Err(WireError::new(
                        "bad_request",
                        format!("position must be earliest or latest, not {other:?}"),
                    ))
                }
            };
            let info = self.broker.describe_topic(&topic).map_err(|e| broker_to_wire(&e))?;
            Ok((topic, group, position, info.partitions))
        })();
        let (topic, group, position, partitions) = match prepared {
            Ok(p) => p,
            Err(e) => return self.respond(corr, Err(e)),
        };
        self.respond(corr, Ok(json!({"subscribed": topic, "partitions": partitions})));

        let broker = Arc::clone(&self.broker);
        let writer = Arc::clone(&self.writer);
        let stop = SubStop {
            server_stop: Arc::clone(&self.server_stop),
            conn_done: Arc::clone(&self.done),
        };
        let worker = std::thread::Builder::new()
            .name("wire-sub".into())
            .spawn(move || {
                push_subscription(broker, writer, stop, corr, topic, group, position, partitions)
            })
            .expect("spawn subscription worker");
        self.workers.push(worker);
    }

    fn start_query(&mut self, corr: u64, payload: &Map<String, Value>) {
        let text = match need_str(payload, "statement") {
            Ok(t) => t,
            Err(e) => return self.respond(corr, Err(e)),
        };
        let stmt = match crate::eql::parse_statement(text) {
            Ok(s) => s,
            Err(e) => return self.respond(corr, Err(eql_to_wire(&e))),
        };
        let select = match stmt {
            Statement::Select(select) => select,
            other => {
                let result = self
                    .engine
                    .run_command(&other)
                    .map(|o| outcome_to_json(&o))
                    .map_err(|e| eql_to_wire(&e));
                return self.respond(corr, result);
            }
        };
        let prepared = match self.engine.begin_select(&select) {
            Ok(p) => p,
            Err(e) => return self.respond(corr, Err(eql_to_wire(&e))),
        };
        let cancel = prepared.cancel_flag();
        self.cancels.push(Arc::clone(&cancel));

        let engine = Arc::clone(&self.engine);
        let writer = Arc::clone(&self.writer);
        let server_stop = Arc::clone(&self.server_stop);
        let done = Arc::clone(&self.done);
        let worker = std::thread::Builder::new()
            .name("wire-query".into())
            .spawn(move || {
                let id = prepared.id.clone();
                writer.write(&Frame::Push {
                    corr,
                    event: "query_started".into(),
                    body: as_map(json!({"id": id})),
                });
                let mut rows = 0u64;
                let outcome = engine.run_select(prepared, &mut |record| {
                    if server_stop.load(Ordering::SeqCst)
                        || done.load(Ordering::SeqCst)
                        || !writer.alive()
                    {
                        cancel.store(true, Ordering::SeqCst);
                        return;
                    }
                    let pushed = writer.write(&Frame::Push {
                        corr,
                        event: "record".into(),
                        body: as_map(json!({"record": codec::record_to_json(record)})),
                    });
                    if pushed {
                        rows += 1;
                    } else {
                        cancel.store(true, Ordering::SeqCst);
                    }
                });
                let result = match outcome {
                    Ok(SelectOutcome::LimitReached) => {
                        Ok(json!({"kind": "select_done", "outcome": "limit", "rows": rows}))
                    }
                    Ok(SelectOutcome::Terminated) => {
                        Ok(json!({"kind": "select_done", "outcome": "terminated", "rows": rows}))
                    }
                    Err(e) => Err(eql_to_wire(&e)),
                };
                writer.write(&Frame::Response { corr, result });
            })
            .expect("spawn query worker");
        self.workers.push(worker);
    }
}

/// Why a subscription pusher stops besides write failure: the whole server
/// shutting down, or its own connection's read loop ending.
struct SubStop {
    server_stop: Arc<AtomicBool>,
    conn_done: Arc<AtomicBool>,
}

impl SubStop {
    fn stopped(&self) -> bool {
        self.server_stop.load(Ordering::SeqCst) || self.conn_done.load(Ordering::SeqCst)
    }
}

#[allow(clippy::too_many_arguments)]
fn push_subscription(
    broker: Arc<Broker>,
    writer: Arc<ConnWriter>,
    stop: SubStop,
    corr: u64,
    topic: String,
    group: String,
    position: StartPosition,
    partitions: u32,
) {
    let mut next: Vec<u64> = (0..partitions)
        .map(|p| {
            let committed = broker.committed_offset(&group, &topic, p);
            if committed == 0 && position == StartPosition::Latest {
                broker.end_offset(&topic, p).unwrap_or(0)
            } else {
                committed
            }
        })
        .collect();
    while writer.alive() && !stop.stopped() {
        let mut idle = true;
        for p in 0..partitions {
            let batch =
                match broker.fetch(&topic, p, next[p as usize], 500, Duration::ZERO) {
                    Ok(batch) => batch,
                    Err(BrokerError::OffsetOutOfRange { earliest, .. }) => {
                        next[p as usize] = earliest;
                        continue;
                    }
                    Err(_) => return,
                };
            let Some(last) = batch.last() else { continue };
            idle = false;
            next[p as usize] = last.offset + 1;
            for record in &batch {
                let body = as_map(json!({"record": codec::record_to_json(record)}));
                if !writer.write(&Frame::Push { corr, event: "record".into(), body }) {
                    return;
                }
            }
        }
        if idle {
            std::thread::sleep(Duration::from_millis(25));
        }
    }
}

fn as_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("built from an object literal"),
    }
}

fn need_str<'a>(payload: &'a Map<String, Value>, key: &str) -> Result<&'a str, WireError> {
    payload
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| WireError::new("bad_request", format!("missing text field {key}")))
}

fn need_u64(payload: &Map<String, Value>, key: &str) -> Result<u64, WireError> {
    payload
        .get(key)
        .and_then(Value::as_u64)
        .ok_or_else(|| WireError::new("bad_request", format!("missing integer field {key}")))
}

fn opt_u64(payload: &Map<String, Value>, key: &str, default: u64) -> u64 {
    payload.get(key).and_then(Value::as_u64).unwrap_or(default)
}

fn dispatch_simple(
    broker: &Broker,
    engine: &QueryEngine,
    op: &str,
    payload: &Map<String, Value>,
) -> Result<Value, WireError> {
    match op {
        "create_topic" => {
            let name = need_str(payload, "topic")?;
            let partitions = opt_u64(payload, "partitions", 1) as u32;
            let replication = opt_u64(payload, "replication", 1) as u32;
            let spec = TopicSpec::with_partitions(name, partitions, replication)
                .map_err(|e| WireError::new("bad_request", e))?;
            let schema = match payload.get("schema") {
                None | Some(Value::Null) => None,
                Some(v) => Some(schema_from_json(v)?),
            };
            let created = spec.name.clone();
            broker.create_topic(spec, schema).map_err(|e| broker_to_wire(&e))?;
            Ok(json!({"topic": created, "partitions": partitions}))
        }
        "list_topics" => {
            let include_internal =
                payload.get("include_internal").and_then(Value::as_bool).unwrap_or(false);
            let topics: Vec<Value> =
                broker.list_topics(include_internal).iter().map(topic_info_to_json).collect();
            Ok(json!({"topics": topics}))
        }
        "describe" => {
            let name = need_str(payload, "topic")?;
            let info = broker.describe_topic(name).map_err(|e| broker_to_wire(&e))?;
            Ok(topic_info_to_json(&info))
        }
        "attach_schema" => {
            let name = need_str(payload, "topic")?;
            let schema = schema_from_json(
                payload
                    .get("schema")
                    .ok_or_else(|| WireError::new("bad_request", "missing field schema"))?,
            )?;
            broker.attach_schema(name, schema).map_err(|e| broker_to_wire(&e))?;
            Ok(json!({"attached": canonical_ident(name)}))
        }
        "produce" => {
            let name = need_str(payload, "topic")?;
            let records = payload
                .get("records")
                .and_then(Value::as_array)
                .ok_or_else(|| WireError::new("bad_request", "missing array field records"))?;
            let mut batch = Vec::with_capacity(records.len());
            for r in records {
                batch.push(produce_record_from_json(r)?);
            }
            let assignments = broker.produce(name, batch).map_err(|e| broker_to_wire(&e))?;
            let assignments: Vec<Value> = assignments
                .iter()
                .map(|(p, o)| json!({"partition": p, "offset": o}))
                .collect();
            Ok(json!({"assignments": assignments}))
        }
        "fetch" => {
            let name = need_str(payload, "topic")?;
            let partition = opt_u64(payload, "partition", 0) as u32;
            let offset = need_u64(payload, "offset")?;
            let max = opt_u64(payload, "max_records", 500) as usize;
            let wait = Duration::from_millis(opt_u64(payload, "max_wait_ms", 0));
            let records =
                broker.fetch(name, partition, offset, max, wait).map_err(|e| broker_to_wire(&e))?;
            let end =
                broker.end_offset(name, partition).map_err(|e| broker_to_wire(&e))?;
            let records: Vec<Value> = records.iter().map(codec::record_to_json).collect();
            Ok(json!({"records": records, "end_offset": end}))
        }
        "commit" => {
            let group = need_str(payload, "group")?;
            let name = need_str(payload, "topic")?;
            let partition = opt_u64(payload, "partition", 0) as u32;
            let offset = need_u64(payload, "offset")?;
            let effective = broker
                .commit_offset(group, name, partition, offset)
                .map_err(|e| broker_to_wire(&e))?;
            Ok(json!({"offset": effective}))
        }
        "committed" => {
            let group = need_str(payload, "group")?;
            let name = need_str(payload, "topic")?;
            let partition = opt_u64(payload, "partition", 0) as u32;
            Ok(json!({"offset": broker.committed_offset(group, name, partition)}))
        }
        "terminate_query" => {
            let id = canonical_ident(need_str(payload, "id")?);
            let outcome = engine
                .run_command(&Statement::Terminate { query_id: id })
                .map_err(|e| eql_to_wire(&e))?;
            Ok(outcome_to_json(&outcome))
        }
        other => Err(WireError::new("unknown_op", format!("no such operation {other:?}"))),
    }
}

fn produce_record_from_json(v: &Value) -> Result<ProduceRecord, WireError> {
    let obj = v
        .as_object()
        .ok_or_else(|| WireError::new("bad_request", "each record must be an object"))?;
    let value = codec::fields_from_json(
        obj.get("value")
            .ok_or_else(|| WireError::new("bad_request", "record missing value"))?,
    )
    .map_err(|e| WireError::new("bad_request", e))?;
    let mut record = ProduceRecord::new(value);
    match obj.get("key") {
        None | Some(Value::Null) => {}
        Some(Value::String(s)) => record.key = Some(s.clone()),
        Some(_) => return Err(WireError::new("bad_request", "key must be text or null")),
    }
    match obj.get("event_time") {
        None | Some(Value::Null) => {}
        Some(v) => {
            record.event_time = Some(v.as_i64().ok_or_else(|| {
                WireError::new("bad_request", "event_time must be integer milliseconds")
            })?)
        }
    }
    if let Some(Value::Array(hs)) = obj.get("headers") {
        for h in hs {
            let pair = h.as_array().filter(|a| a.len() == 2).ok_or_else(|| {
                WireError::new("bad_request", "each header must be a [key, value] pair")
            })?;
            let (Some(k), Some(val)) = (pair[0].as_str(), pair[1].as_str()) else {
                return Err(WireError::new("bad_request", "header key and value must be text"));
            };
            record.headers.push((k.to_string(), val.to_string()));
        }
    }
    Ok(record)
}

fn schema_from_json(v: &Value) -> Result<Schema, WireError> {
    let raw: Schema = serde_json::from_value(v.clone())
        .map_err(|e| WireError::new("bad_request", format!("bad schema: {e}")))?;
    raw.canonicalized().map_err(|e| WireError::new("bad_request", e))
}

pub(crate) fn topic_info_to_json(info: &TopicInfo) -> Value {
    let mut obj = Map::new();
    obj.insert("name".into(), Value::String(info.name.clone()));
    obj.insert("partitions".into(), Value::from(info.partitions));
    obj.insert("replication".into(), Value::from(info.replication_display));
    obj.insert("percent_in_sync".into(), Value::from(info.percent_in_sync));
    obj.insert(
        "end_offsets".into(),
        Value::Array(info.end_offsets.iter().map(|o| Value::from(*o)).collect()),
    );
    if let Some(schema) = &info.schema {
        obj.insert("schema".into(), serde_json::to_value(schema).expect("schema serializes"));
    }
    Value::Object(obj)
}

pub(crate) fn outcome_to_json(outcome: &ExecOutcome) -> Value {
    match outcome {
        ExecOutcome::StreamCreated { name } => json!({"kind": "stream_created", "name": name}),
        ExecOutcome::QueryStarted { id, sink } => {
            json!({"kind": "query_started", "id": id, "sink": sink})
        }
        ExecOutcome::Streams(defs) => {
            let streams: Vec<Value> = defs
                .iter()
                .map(|d| {
                    json!({
                        "name": d.name,
                        "topic": d.topic,
                        "format": serde_json::to_value(d.format).expect("format serializes"),
                        "schema": serde_json::to_value(&d.schema).expect("schema serializes"),
                    })
                })
                .collect();
            json!({"kind": "streams", "streams": streams})
        }
        ExecOutcome::Queries(rows) => {
            let queries: Vec<Value> = rows
                .iter()
                .map(|q| {
                    json!({
                        "id": q.id,
                        "state": q.state.label(),
                        "sink": q.sink,
                        "statement": q.statement,
                    })
                })
                .collect();
            json!({"kind": "queries", "queries": queries})
        }
        ExecOutcome::Topics(infos) => {
            let topics: Vec<Value> = infos.iter().map(topic_info_to_json).collect();
            json!({"kind": "topics", "topics": topics})
        }
        ExecOutcome::Terminated { id } => json!({"kind": "terminated", "id": id}),
    }
}

fn broker_to_wire(e: &BrokerError) -> WireError {
    let code = match e {
        BrokerError::DuplicateTopic(_) => "duplicate_topic",
        BrokerError::UnknownTopic(_) => "unknown_topic",
        BrokerError::UnknownPartition { .. } => "unknown_partition",
        BrokerError::Validation { .. } => "validation",
        BrokerError::OffsetBeyondEnd { .. } | BrokerError::OffsetOutOfRange { .. } => {
            "offset_out_of_range"
        }
        BrokerError::InvalidTopic(_) => "bad_request",
        _ => "broker",
    };
    WireError::new(code, e)
}

fn eql_to_wire(e: &EqlError) -> WireError {
    match e {
        EqlError::Lex { .. } | EqlError::Parse { .. } => WireError::new("eql_parse", e),
        EqlError::Broker(b) => broker_to_wire(b),
        _ => WireError::new("eql", e),
    }
}
