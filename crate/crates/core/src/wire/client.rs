//! Blocking client. A reader thread routes every inbound frame to the
//! request that owns its correlation number, so the handle is safe to
//! share across threads and overlapped requests cannot steal each other's
//! responses.

use super::{Frame, WireError};
use crate::broker::{BrokerApi, BrokerError, ProduceRecord, TopicInfo};
use crate::codec;
use crate::model::{Record, Schema, TopicSpec};
use parking_lot::Mutex;
use serde_json::{json, Map, Value};
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{Receiver, RecvTimeoutError, Sender};
use std::sync::Arc;
use std::time::Duration;

enum Inbound {
    Reply(Result<Value, WireError>),
    Push { event: String, body: Map<String, Value> },
}

/// Routing state shared with the reader thread. Kept separate from
/// `ClientInner` so the reader never owns the handle that would, on its
/// last drop, try to join the reader itself.
struct RouteTable {
    routes: Mutex<HashMap<u64, Sender<Inbound>>>,
    closed: Mutex<Option<String>>,
}

struct ClientInner {
    writer: Mutex<TcpStream>,
    table: Arc<RouteTable>,
    next_corr: AtomicU64,
    reader: Mutex<Option<std::thread::JoinHandle<()>>>,
}

/// One TCP connection to a broker. Cloning shares the connection.
#[derive(Clone)]
pub struct Connection {
    inner: Arc<ClientInner>,
}

impl Connection {
    pub fn connect(addr: &str) -> Result<Connection, WireError> {
        let stream = TcpStream::connect(addr)
            .map_err(|e| WireError::new("connect", format!("{addr}: {e}")))?;
        let read_half = stream
            .try_clone()
            .map_err(|e| WireError::new("connect", e))?;
        let table = Arc::new(RouteTable {
            routes: Mutex::new(HashMap::new()),
            closed: Mutex::new(None),
        });
        let inner = Arc::new(ClientInner {
            writer: Mutex::new(stream),
            table: Arc::clone(&table),
            next_corr: AtomicU64::new(1),
            reader: Mutex::new(None),
        });
        let reader = std::thread::Builder::new()
            .name("wire-client-reader".into())
            .spawn(move || read_loop(read_half, table))
            .map_err(|e| WireError::new("connect", e))?;
        *inner.reader.lock() = Some(reader);
        Ok(Connection { inner })
    }

    fn check_open(&self) -> Result<(), WireError> {
        match &*self.inner.table.closed.lock() {
            Some(reason) => Err(WireError::closed(reason)),
            None => Ok(()),
        }
    }

    fn send(&self, frame: &Frame) -> Result<(), WireError> {
        self.check_open()?;
        let line = frame.encode();
        let mut stream = self.inner.writer.lock();
        stream.write_all(line.as_bytes()).map_err(|e| {
            *self.inner.table.closed.lock() = Some(e.to_string());
            WireError::closed(e)
        })
    }

    fn open_route(&self) -> Result<(u64, Receiver<Inbound>), WireError> {
        self.check_open()?;
        let corr = self.inner.next_corr.fetch_add(1, Ordering::Relaxed);
        let (tx, rx) = std::sync::mpsc::channel();
        self.inner.table.routes.lock().insert(corr, tx);
        Ok((corr, rx))
    }

    fn close_route(&self, corr: u64) {
        self.inner.table.routes.lock().remove(&corr);
    }

    /// One blocking round trip. Push frames for other requests are routed
    /// elsewhere and never returned here.
    pub fn request(&self, op: &str, payload: Value) -> Result<Value, WireError> {
        let Value::Object(payload) = payload else {
            return Err(WireError::new("bad_request", "payload must be a JSON object"));
        };
        let (corr, rx) = self.open_route()?;
        let sent = self.send(&Frame::Request { op: op.into(), corr, payload });
        if let Err(e) = sent {
            self.close_route(corr);
            return Err(e);
        }
        loop {
            match rx.recv() {
                Ok(Inbound::Reply(result)) => {
                    self.close_route(corr);
                    return result;
                }
                Ok(Inbound::Push { .. }) => continue,
                Err(_) => {
                    self.close_route(corr);
                    return Err(self.closed_error());
                }
            }
        }
    }

    /// Registers interest in a topic; records arrive through the returned
    /// subscription as the server pushes them.
    pub fn subscribe(
        &self,
        topic: &str,
        group: &str,
        position: &str,
    ) -> Result<Subscription, WireError> {
        let (corr, rx) = self.open_route()?;
        let payload = as_map(json!({"topic": topic, "group": group, "position": position}));
        let sent = self.send(&Frame::Request { op: "subscribe".into(), corr, payload });
        if let Err(e) = sent {
            self.close_route(corr);
            return Err(e);
        }
        loop {
            match rx.recv() {
                Ok(Inbound::Reply(Ok(info))) => {
                    return Ok(Subscription { conn: self.clone(), corr, rx, info })
                }
                Ok(Inbound::Reply(Err(e))) => {
                    self.close_route(corr);
                    return Err(e);
                }
                Ok(Inbound::Push { .. }) => continue,
                Err(_) => {
                    self.close_route(corr);
                    return Err(self.closed_error());
                }
            }
        }
    }

    /// Sends a statement. Commands finish with the final reply; streaming
    /// selects deliver `QueryEvent`s first. Poll the returned handle.
    pub fn start_query(&self, statement: &str) -> Result<RunningQuery, WireError> {
        let (corr, rx) = self.open_route()?;
        let payload = as_map(json!({"statement": statement}));
        let sent = self.send(&Frame::Request { op: "query".into(), corr, payload });
        if let Err(e) = sent {
            self.close_route(corr);
            return Err(e);
        }
        Ok(RunningQuery { conn: self.clone(), corr, rx: Some(rx), id: None, outcome: None })
    }

    pub fn commit(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
        offset: u64,
    ) -> Result<(), WireError> {
        self.request(
            "commit",
            json!({"group": group, "topic": topic, "partition": partition, "offset": offset}),
        )
        .map(|_| ())
    }

    fn closed_error(&self) -> WireError {
        match &*self.inner.table.closed.lock() {
            Some(reason) => WireError::closed(reason),
            None => WireError::closed("connection lost"),
        }
    }
}

impl Drop for ClientInner {
    fn drop(&mut self) {
        let _ = self.writer.lock().shutdown(std::net::Shutdown::Both);
        if let Some(t) = self.reader.lock().take() {
            let _ = t.join();
        }
    }
}

fn read_loop(stream: TcpStream, table: Arc<RouteTable>) {
    let mut reader = BufReader::new(stream);
    let mut line = String::new();
    let reason = loop {
        line.clear();
        match reader.read_line(&mut line) {
            Ok(0) => break "server closed the connection".to_string(),
            Ok(_) => {
                let Ok(frame) = Frame::decode(&line) else { continue };
                let (corr, inbound) = match frame {
                    Frame::Response { corr, result } => (corr, Inbound::Reply(result)),
                    Frame::Push { corr, event, body } => (corr, Inbound::Push { event, body }),
                    Frame::Request { .. } => continue,
                };
                if let Some(tx) = table.routes.lock().get(&corr) {
                    let _ = tx.send(inbound);
                }
            }
            Err(e) => break e.to_string(),
        }
    };
    let mut closed = table.closed.lock();
    if closed.is_none() {
        *closed = Some(reason);
    }
    drop(closed);
    // Dropping the senders wakes every waiting caller with a closed error.
    table.routes.lock().clear();
}

/// A live subscription; `next` blocks up to the given timeout for the
/// next pushed record.
pub struct Subscription {
    conn: Connection,
    corr: u64,
    rx: Receiver<Inbound>,
    info: Value,
}

impl Subscription {
    /// The subscribe acknowledgment: `{"subscribed": ..., "partitions": N}`.
    pub fn info(&self) -> &Value {
        &self.info
    }

    /// `Ok(None)` means the timeout passed quietly.
    pub fn next(&mut self, timeout: Duration) -> Result<Option<Record>, WireError> {
        loop {
            match self.rx.recv_timeout(timeout) {
                Ok(Inbound::Push { event, body }) if event == "record" => {
                    let record = body
                        .get("record")
                        .ok_or_else(|| WireError::new("protocol", "record push missing record"))?;
                    return codec::record_from_json(record)
                        .map(Some)
                        .map_err(|e| WireError::new("protocol", e));
                }
                Ok(_) => continue,
                Err(RecvTimeoutError::Timeout) => return Ok(None),
                Err(RecvTimeoutError::Disconnected) => return Err(self.conn.closed_error()),
            }
        }
    }
}

impl Drop for Subscription {
    fn drop(&mut self) {
        self.conn.close_route(self.corr);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryEvent {
    Started { id: String },
    Row(Record),
}

/// What a poll of a running query produced.
#[derive(Debug, Clone, PartialEq)]
pub enum Polled {
    Event(QueryEvent),
    /// Nothing arrived within the timeout; the query is still running.
    Idle,
    /// The final reply arrived; see `outcome`.
    Done,
}

pub struct RunningQuery {
    conn: Connection,
    corr: u64,
    rx: Option<Receiver<Inbound>>,
    id: Option<String>,
    outcome: Option<Value>,
}

impl RunningQuery {
    /// Server-assigned query id, known once the start push arrives.
    pub fn id(&self) -> Option<&str> {
        self.id.as_deref()
    }

    /// Final result JSON, present after `poll` returned `Done`.
    pub fn outcome(&self) -> Option<&Value> {
        self.outcome.as_ref()
    }

    pub fn poll(&mut self, timeout: Duration) -> Result<Polled, WireError> {
        let Some(rx) = &self.rx else { return Ok(Polled::Done) };
        match rx.recv_timeout(timeout) {
            Ok(Inbound::Reply(Ok(outcome))) => {
                self.outcome = Some(outcome);
                self.finish();
                Ok(Polled::Done)
            }
            Ok(Inbound::Reply(Err(e))) => {
                self.finish();
                Err(e)
            }
            Ok(Inbound::Push { event, body }) => match event.as_str() {
                "query_started" => {
                    let id = body
                        .get("id")
                        .and_then(Value::as_str)
                        .ok_or_else(|| WireError::new("protocol", "start push missing id"))?
                        .to_string();
                    self.id = Some(id.clone());
                    Ok(Polled::Event(QueryEvent::Started { id }))
                }
                "record" => {
                    let record = body
                        .get("record")
                        .ok_or_else(|| WireError::new("protocol", "record push missing record"))?;
                    let record = codec::record_from_json(record)
                        .map_err(|e| WireError::new("protocol", e))?;
                    Ok(Polled::Event(QueryEvent::Row(record)))
                }
                _ => Ok(Polled::Idle),
            },
            Err(RecvTimeoutError::Timeout) => Ok(Polled::Idle),
            Err(RecvTimeoutError::Disconnected) => {
                self.finish();
                Err(self.conn.closed_error())
            }
        }
    }

    /// Runs the query to completion, feeding each event to the callback.
    pub fn drive(
        &mut self,
        on_event: &mut dyn FnMut(QueryEvent),
    ) -> Result<Value, WireError> {
        loop {
            match self.poll(Duration::from_millis(100))? {
                Polled::Event(e) => on_event(e),
                Polled::Idle => continue,
                Polled::Done => {
                    return Ok(self.outcome.clone().expect("outcome set on Done"));
                }
            }
        }
    }

    /// Asks the server to stop this query. Returns false when the id is
    /// not yet known (no start push seen).
    pub fn terminate(&self) -> Result<bool, WireError> {
        let Some(id) = &self.id else { return Ok(false) };
        self.conn.request("terminate_query", json!({"id": id}))?;
        Ok(true)
    }

    fn finish(&mut self) {
        self.rx = None;
        self.conn.close_route(self.corr);
    }
}

impl Drop for RunningQuery {
    fn drop(&mut self) {
        self.conn.close_route(self.corr);
    }
}

fn as_map(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("built from an object literal"),
    }
}

/// Recovers the broker-side error variant from a wire error code so code
/// written against `BrokerApi` can branch the same way over TCP as it
/// does in process. Structured payloads (offsets, partition numbers) are
/// not carried on the wire; only the variant and message survive.
fn wire_to_broker(e: WireError) -> BrokerError {
    fn topic_from(msg: &str, prefix: &str, suffix: &str) -> String {
        msg.strip_prefix(prefix)
            .and_then(|m| m.strip_suffix(suffix))
            .unwrap_or(msg)
            .to_string()
    }
    match e.code.as_str() {
        "duplicate_topic" => {
            BrokerError::DuplicateTopic(topic_from(&e.msg, "topic ", " already exists"))
        }
        "unknown_topic" => BrokerError::UnknownTopic(topic_from(&e.msg, "unknown topic ", "")),
        "unknown_partition" => {
            BrokerError::UnknownPartition { topic: e.msg, partition: 0 }
        }
        "offset_out_of_range" => BrokerError::OffsetOutOfRange { requested: 0, earliest: 0 },
        _ => BrokerError::Io(std::io::Error::other(e.to_string())),
    }
}

fn schema_from_wire(v: &Value) -> Result<Schema, BrokerError> {
    let raw: Schema = serde_json::from_value(v.clone())
        .map_err(|e| BrokerError::Io(std::io::Error::other(format!("bad schema: {e}"))))?;
    raw.canonicalized()
        .map_err(|e| BrokerError::Io(std::io::Error::other(e.to_string())))
}

impl BrokerApi for Connection {
    fn create_topic(&self, spec: TopicSpec, schema: Option<Schema>) -> Result<(), BrokerError> {
        let mut payload = json!({
            "topic": spec.name,
            "partitions": spec.partitions,
            "replication": spec.replication_display,
        });
        if let Some(s) = schema {
            payload["schema"] =
                serde_json::to_value(&s).expect("schema serializes");
        }
        self.request("create_topic", payload).map(drop).map_err(wire_to_broker)
    }

    fn attach_schema(&self, topic: &str, schema: Schema) -> Result<(), BrokerError> {
        let schema = serde_json::to_value(&schema).expect("schema serializes");
        self.request("attach_schema", json!({"topic": topic, "schema": schema}))
            .map(drop)
            .map_err(wire_to_broker)
    }

    fn schema_of(&self, topic: &str) -> Result<Option<Schema>, BrokerError> {
        let info = self.request("describe", json!({"topic": topic})).map_err(wire_to_broker)?;
        match info.get("schema") {
            None | Some(Value::Null) => Ok(None),
            Some(v) => Ok(Some(schema_from_wire(v)?)),
        }
    }

    fn describe_topic(&self, topic: &str) -> Result<TopicInfo, BrokerError> {
        let info = self.request("describe", json!({"topic": topic})).map_err(wire_to_broker)?;
        let bad =
            |what: &str| BrokerError::Io(std::io::Error::other(format!("describe: {what}")));
        let schema = match info.get("schema") {
            None | Some(Value::Null) => None,
            Some(v) => Some(schema_from_wire(v)?),
        };
        Ok(TopicInfo {
            name: info["name"].as_str().ok_or_else(|| bad("missing name"))?.to_string(),
            partitions: info["partitions"].as_u64().ok_or_else(|| bad("missing partitions"))?
                as u32,
            replication_display: info["replication"]
                .as_u64()
                .ok_or_else(|| bad("missing replication"))? as u32,
            percent_in_sync: info["percent_in_sync"]
                .as_u64()
                .ok_or_else(|| bad("missing percent_in_sync"))? as u32,
            end_offsets: info["end_offsets"]
                .as_array()
                .ok_or_else(|| bad("missing end_offsets"))?
                .iter()
                .map(|v| v.as_u64().unwrap_or(0))
                .collect(),
            schema,
        })
    }

    fn produce(
        &self,
        topic: &str,
        records: Vec<ProduceRecord>,
    ) -> Result<Vec<(u32, u64)>, BrokerError> {
        let records: Vec<Value> = records
            .into_iter()
            .map(|r| {
                let mut obj = Map::new();
                obj.insert("value".into(), codec::fields_to_json(&r.value));
                if let Some(k) = r.key {
                    obj.insert("key".into(), Value::String(k));
                }
                if let Some(t) = r.event_time {
                    obj.insert("event_time".into(), Value::from(t));
                }
                if !r.headers.is_empty() {
                    let hs: Vec<Value> =
                        r.headers.iter().map(|(k, v)| json!([k, v])).collect();
                    obj.insert("headers".into(), Value::Array(hs));
                }
                Value::Object(obj)
            })
            .collect();
        let reply = self
            .request("produce", json!({"topic": topic, "records": records}))
            .map_err(wire_to_broker)?;
        let assignments = reply["assignments"]
            .as_array()
            .ok_or_else(|| BrokerError::Io(std::io::Error::other("produce: no assignments")))?;
        Ok(assignments
            .iter()
            .map(|a| {
                (a["partition"].as_u64().unwrap_or(0) as u32, a["offset"].as_u64().unwrap_or(0))
            })
            .collect())
    }

    fn fetch(
        &self,
        topic: &str,
        partition: u32,
        from: u64,
        max: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, BrokerError> {
        let reply = self
            .request(
                "fetch",
                json!({
                    "topic": topic,
                    "partition": partition,
                    "offset": from,
                    "max_records": max,
                    "max_wait_ms": max_wait.as_millis() as u64,
                }),
            )
            .map_err(wire_to_broker)?;
        let records = reply["records"]
            .as_array()
            .ok_or_else(|| BrokerError::Io(std::io::Error::other("fetch: no records")))?;
        records
            .iter()
            .map(|v| {
                codec::record_from_json(v)
                    .map_err(|e| BrokerError::Io(std::io::Error::other(e)))
            })
            .collect()
    }

    fn commit_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
        next_offset: u64,
    ) -> Result<u64, BrokerError> {
        let reply = self
            .request(
                "commit",
                json!({
                    "group": group,
                    "topic": topic,
                    "partition": partition,
                    "offset": next_offset,
                }),
            )
            .map_err(wire_to_broker)?;
        Ok(reply["offset"].as_u64().unwrap_or(next_offset))
    }

    fn committed_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
    ) -> Result<u64, BrokerError> {
        let reply = self
            .request(
                "committed",
                json!({"group": group, "topic": topic, "partition": partition}),
            )
            .map_err(wire_to_broker)?;
        Ok(reply["offset"].as_u64().unwrap_or(0))
    }

    fn end_offset(&self, topic: &str, partition: u32) -> Result<u64, BrokerError> {
        let info = BrokerApi::describe_topic(self, topic)?;
        info.end_offsets.get(partition as usize).copied().ok_or(BrokerError::UnknownPartition {
            topic: topic.to_string(),
            partition,
        })
    }
}
