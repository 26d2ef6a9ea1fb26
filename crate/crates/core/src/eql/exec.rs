//! The query engine: a streams catalog over broker topics, persistent
//! queries running as topology tasks, and interactive selects that
//! stream rows to a caller. Every catalog change is journaled to an
//! internal topic and replayed on open, so streams and queries survive
//! restarts.

use crate::broker::{Broker, BrokerError, ProduceRecord};
use crate::eql::analyze::{
    analyze_create_declared, analyze_select, AnalyzedSelect, ResolvedSource, StreamFormat,
};
use crate::eql::ast::{CreateBody, CreateStream, SelectStmt, ShowKind, Statement};
use crate::eql::plan::plan_topology;
use crate::eql::EqlError;
use crate::broker::TopicInfo;
use crate::engine::runtime::{run_topology, TaskHandle, TaskOptions, TaskState};
use crate::engine::Pipeline;
use crate::model::{FieldMap, Record, Schema, ScalarValue, TopicSpec};
use indexmap::IndexMap;
use parking_lot::Mutex;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Duration;

/// Internal topic journaling catalog statements and query state changes.
pub const QUERIES_TOPIC: &str = "__QUERIES";

/// A registered stream: a name bound to a topic plus its schema.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamDef {
    pub name: String,
    pub topic: String,
    pub schema: Schema,
    pub format: StreamFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueryState {
    Running,
    Completed,
    Terminated,
    Failed,
}

impl QueryState {
    pub fn label(self) -> &'static str {
        match self {
            QueryState::Running => "RUNNING",
            QueryState::Completed => "COMPLETED",
            QueryState::Terminated => "TERMINATED",
            QueryState::Failed => "FAILED",
        }
    }

    fn parse(label: &str) -> Option<QueryState> {
        match label {
            "RUNNING" => Some(QueryState::Running),
            "COMPLETED" => Some(QueryState::Completed),
            "TERMINATED" => Some(QueryState::Terminated),
            "FAILED" => Some(QueryState::Failed),
            _ => None,
        }
    }
}

/// One row of SHOW QUERIES.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub id: String,
    pub state: QueryState,
    pub sink: Option<String>,
    pub statement: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExecOutcome {
    StreamCreated { name: String },
    QueryStarted { id: String, sink: String },
    Streams(Vec<StreamDef>),
    Queries(Vec<QueryRow>),
    Topics(Vec<TopicInfo>),
    Terminated { id: String },
}

/// How an interactive select ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectOutcome {
    LimitReached,
    Terminated,
}

struct QueryEntry {
    statement: String,
    sink: Option<String>,
    state: QueryState,
    task: Option<TaskHandle>,
    cancel: Option<Arc<AtomicBool>>,
}

struct EngineState {
    streams: IndexMap<String, StreamDef>,
    queries: IndexMap<String, QueryEntry>,
    next_query: u64,
}

pub struct QueryEngine {
    broker: Arc<Broker>,
    state: Mutex<EngineState>,
}

/// An interactive select that has been registered but not yet streamed.
pub struct PreparedSelect {
    pub id: String,
    analyzed: AnalyzedSelect,
    cancel: Arc<AtomicBool>,
}

impl PreparedSelect {
    /// Flips when the query is terminated from any connection.
    pub fn cancel_flag(&self) -> Arc<AtomicBool> {
        Arc::clone(&self.cancel)
    }
}

impl QueryEngine {
    /// Opens the engine over a broker, ensuring the journal topic and
    /// replaying it: declared streams come back, persistent queries
    /// resume from their committed offsets, and interactive queries
    /// orphaned by a crash are closed out.
    pub fn open(broker: Arc<Broker>) -> Result<QueryEngine, EqlError> {
        match broker.create_topic(TopicSpec::new(QUERIES_TOPIC)?, None) {
            Ok(_) | Err(BrokerError::DuplicateTopic(_)) => {}
            Err(e) => return Err(e.into()),
        }
        let engine = QueryEngine {
            broker,
            state: Mutex::new(EngineState {
                streams: IndexMap::new(),
                queries: IndexMap::new(),
                next_query: 1,
            }),
        };
        engine.replay()?;
        Ok(engine)
    }

    pub fn broker(&self) -> &Arc<Broker> {
        &self.broker
    }

    /// Runs any statement except an interactive SELECT.
    pub fn run_command(&self, stmt: &Statement) -> Result<ExecOutcome, EqlError> {
        match stmt {
            Statement::CreateStream(c) => self.create_stream(c, true, None),
            Statement::Show(kind) => self.show(*kind),
            Statement::Terminate { query_id } => self.terminate(query_id),
            Statement::Select(_) => Err(EqlError::Semantic(
                "interactive SELECT must stream rows; this entry point takes commands".into(),
            )),
        }
    }

    /// Convenience for command statements given as text.
    pub fn execute(&self, text: &str) -> Result<ExecOutcome, EqlError> {
        let stmt = crate::eql::parser::parse_statement(text)?;
        self.run_command(&stmt)
    }

    fn resolve_source(&self, state: &EngineState, name: &str) -> Option<ResolvedSource> {
        if let Some(def) = state.streams.get(name) {
            return Some(ResolvedSource {
                stream: def.name.clone(),
                topic: def.topic.clone(),
                schema: def.schema.clone(),
            });
        }
        // Fall back to a bare topic, which needs an attached schema to
        // be queryable.
        let schema = self.broker.schema_of(name).ok()??;
        Some(ResolvedSource { stream: name.to_string(), topic: name.to_string(), schema })
    }

    fn create_stream(
        &self,
        c: &CreateStream,
        journal: bool,
        replay_id: Option<(String, QueryState)>,
    ) -> Result<ExecOutcome, EqlError> {
        match &c.body {
            CreateBody::Declared { columns, props } => {
                let analyzed = analyze_create_declared(&c.name, columns, props)?;
                let mut state = self.state.lock();
                if state.streams.contains_key(&analyzed.name) {
                    return Err(EqlError::DuplicateStream(analyzed.name));
                }
                self.ensure_topic(&analyzed.topic, &analyzed.schema)?;
                state.streams.insert(analyzed.name.clone(), StreamDef {
                    name: analyzed.name.clone(),
                    topic: analyzed.topic,
                    schema: analyzed.schema,
                    format: analyzed.format,
                });
                drop(state);
                if journal {
                    self.journal(None, &Statement::CreateStream(c.clone()).to_string(), "COMPLETED")?;
                }
                Ok(ExecOutcome::StreamCreated { name: c.name.clone() })
            }
            CreateBody::AsSelect(select) => self.start_persistent(c, select, journal, replay_id),
        }
    }

    fn start_persistent(
        &self,
        c: &CreateStream,
        select: &SelectStmt,
        journal: bool,
        replay_id: Option<(String, QueryState)>,
    ) -> Result<ExecOutcome, EqlError> {
        let mut state = self.state.lock();
        if state.streams.contains_key(&c.name) {
            return Err(EqlError::DuplicateStream(c.name.clone()));
        }
        let analyzed = {
            let resolve = |name: &str| self.resolve_source(&state, name);
            analyze_select(select, &resolve, true)?
        };
        let (id, run) = match &replay_id {
            Some((id, final_state)) => (id.clone(), *final_state == QueryState::Running),
            None => (format!("Q_{:04}", state.next_query), true),
        };
        let task = if run {
            let topology = plan_topology(&id, &analyzed, &c.name);
            Some(run_topology(Arc::clone(&self.broker), topology, TaskOptions::default())?)
        } else {
            // Replaying a terminated query: the derived stream and its
            // topic still exist, the task does not restart.
            self.ensure_topic(&c.name, &analyzed.output_schema)?;
            None
        };
        if replay_id.is_none() {
            state.next_query += 1;
        }
        state.streams.insert(c.name.clone(), StreamDef {
            name: c.name.clone(),
            topic: c.name.clone(),
            schema: analyzed.output_schema.clone(),
            format: StreamFormat::Json,
        });
        let statement = Statement::CreateStream(c.clone()).to_string();
        state.queries.insert(id.clone(), QueryEntry {
            statement: statement.clone(),
            sink: Some(c.name.clone()),
            state: if run { QueryState::Running } else { QueryState::Terminated },
            task,
            cancel: None,
        });
        drop(state);
        if journal {
            self.journal(Some(&id), &statement, "RUNNING")?;
        }
        Ok(ExecOutcome::QueryStarted { id, sink: c.name.clone() })
    }

    fn ensure_topic(&self, topic: &str, schema: &Schema) -> Result<(), EqlError> {
        match self.broker.create_topic(TopicSpec::new(topic)?, Some(schema.clone())) {
            Ok(_) => Ok(()),
            Err(BrokerError::DuplicateTopic(_)) => match self.broker.schema_of(topic)? {
                None => {
                    self.broker.attach_schema(topic, schema.clone())?;
                    Ok(())
                }
                Some(existing) if existing == *schema => Ok(()),
                Some(_) => Err(EqlError::Semantic(format!(
                    "topic {topic} already carries a different schema"
                ))),
            },
            Err(e) => Err(e.into()),
        }
    }

    fn show(&self, kind: ShowKind) -> Result<ExecOutcome, EqlError> {
        let state = self.state.lock();
        match kind {
            ShowKind::Streams => {
                let mut defs: Vec<StreamDef> = state.streams.values().cloned().collect();
                defs.sort_by(|a, b| a.name.cmp(&b.name));
                Ok(ExecOutcome::Streams(defs))
            }
            ShowKind::Queries => {
                let rows = state
                    .queries
                    .iter()
                    .map(|(id, q)| QueryRow {
                        id: id.clone(),
                        state: q.live_state(),
                        sink: q.sink.clone(),
                        statement: q.statement.clone(),
                    })
                    .collect();
                Ok(ExecOutcome::Queries(rows))
            }
            ShowKind::Topics => Ok(ExecOutcome::Topics(self.broker.list_topics(false))),
        }
    }

    fn terminate(&self, query_id: &str) -> Result<ExecOutcome, EqlError> {
        let mut state = self.state.lock();
        let entry = state
            .queries
            .get_mut(query_id)
            .ok_or_else(|| EqlError::UnknownQuery(query_id.to_string()))?;
        let was_running = entry.state == QueryState::Running;
        if was_running {
            if let Some(mut task) = entry.task.take() {
                task.stop();
            }
            if let Some(cancel) = &entry.cancel {
                cancel.store(true, Ordering::SeqCst);
            }
            entry.state = QueryState::Terminated;
            let statement = entry.statement.clone();
            drop(state);
            self.journal(Some(query_id), &statement, "TERMINATED")?;
        }
        Ok(ExecOutcome::Terminated { id: query_id.to_string() })
    }

    /// Registers an interactive select: analyzes it, assigns a query id,
    /// and journals it as running. Streaming happens in `run_select`.
    pub fn begin_select(&self, stmt: &SelectStmt) -> Result<PreparedSelect, EqlError> {
        let mut state = self.state.lock();
        let analyzed = {
            let resolve = |name: &str| self.resolve_source(&state, name);
            analyze_select(stmt, &resolve, false)?
        };
        let id = format!("Q_{:04}", state.next_query);
        state.next_query += 1;
        let cancel = Arc::new(AtomicBool::new(false));
        let statement = Statement::Select(stmt.clone()).to_string();
        state.queries.insert(id.clone(), QueryEntry {
            statement: statement.clone(),
            sink: None,
            state: QueryState::Running,
            task: None,
            cancel: Some(Arc::clone(&cancel)),
        });
        drop(state);
        self.journal(Some(&id), &statement, "RUNNING")?;
        Ok(PreparedSelect { id, analyzed, cancel })
    }

    /// Streams rows for a prepared select from the earliest offset until
    /// the LIMIT is reached or the query is cancelled. Emitted records
    /// carry the stream name in their topic field.
    pub fn run_select(
        &self,
        prepared: PreparedSelect,
        on_row: &mut dyn FnMut(&Record),
    ) -> Result<SelectOutcome, EqlError> {
        let PreparedSelect { id, analyzed, cancel } = prepared;
        let outcome = self.stream_rows(&analyzed, &cancel, on_row);
        let mut state = self.state.lock();
        if let Some(entry) = state.queries.get_mut(&id) {
            if entry.state == QueryState::Running {
                entry.state = match outcome {
                    Ok(SelectOutcome::LimitReached) => QueryState::Completed,
                    Ok(SelectOutcome::Terminated) | Err(_) => QueryState::Terminated,
                };
                let label = entry.state.label();
                let statement = entry.statement.clone();
                drop(state);
                self.journal(Some(&id), &statement, label)?;
            }
        }
        outcome
    }

    fn stream_rows(
        &self,
        analyzed: &AnalyzedSelect,
        cancel: &AtomicBool,
        on_row: &mut dyn FnMut(&Record),
    ) -> Result<SelectOutcome, EqlError> {
        let topic = &analyzed.source.topic;
        let partitions = self.broker.describe_topic(topic)?.partitions;
        let operators = crate::eql::plan::plan_operators(analyzed);
        let mut pipelines: Vec<Pipeline> =
            (0..partitions).map(|_| Pipeline::new(&operators)).collect();
        let mut next = vec![0u64; partitions as usize];
        let mut emitted = 0u64;
        loop {
            if cancel.load(Ordering::SeqCst) {
                return Ok(SelectOutcome::Terminated);
            }
            let mut progressed = false;
            for p in 0..partitions {
                let batch = match self.broker.fetch(topic, p, next[p as usize], 500, Duration::ZERO)
                {
                    Ok(batch) => batch,
                    Err(BrokerError::OffsetOutOfRange { earliest, .. }) => {
                        // Retention moved the log start; resume there.
                        next[p as usize] = earliest;
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                if batch.is_empty() {
                    continue;
                }
                progressed = true;
                next[p as usize] = batch.last().expect("non-empty").offset + 1;
                for record in &batch {
                    for mut out in pipelines[p as usize].push(record) {
                        out.topic = analyzed.source.stream.clone();
                        on_row(&out);
                        emitted += 1;
                        if analyzed.limit == Some(emitted) {
                            return Ok(SelectOutcome::LimitReached);
                        }
                    }
                }
            }
            if !progressed {
                // Idle tail: sleep briefly instead of long-polling so the
                // cancel flag stays responsive.
                std::thread::sleep(Duration::from_millis(25));
            }
        }
    }

    pub fn stream(&self, name: &str) -> Option<StreamDef> {
        self.state.lock().streams.get(&crate::model::canonical_ident(name)).cloned()
    }

    /// Live state of one query, reflecting task failures.
    pub fn query_state(&self, id: &str) -> Option<QueryState> {
        self.state.lock().queries.get(id).map(|q| q.live_state())
    }

    fn journal(&self, id: Option<&str>, statement: &str, state: &str) -> Result<(), EqlError> {
        let mut value = FieldMap::new();
        value.insert(
            "ID".into(),
            id.map_or(ScalarValue::Null, |s| ScalarValue::Text(s.to_string())),
        );
        value.insert("STATEMENT".into(), ScalarValue::Text(statement.to_string()));
        value.insert("STATE".into(), ScalarValue::Text(state.to_string()));
        self.broker.produce(QUERIES_TOPIC, vec![ProduceRecord::new(value)])?;
        Ok(())
    }

    fn replay(&self) -> Result<(), EqlError> {
        #[derive(Clone)]
        struct Seen {
            statement: String,
            first_row: usize,
            last_state: QueryState,
        }
        let mut rows: Vec<(Option<String>, String, QueryState)> = Vec::new();
        let mut from = 0u64;
        loop {
            let batch = self.broker.fetch(QUERIES_TOPIC, 0, from, 1024, Duration::ZERO)?;
            if batch.is_empty() {
                break;
            }
            from = batch.last().expect("non-empty").offset + 1;
            for record in &batch {
                let id = match record.value.get("ID") {
                    Some(ScalarValue::Text(s)) => Some(s.clone()),
                    Some(ScalarValue::Null) | None => None,
                    Some(_) => continue,
                };
                let (Some(ScalarValue::Text(statement)), Some(ScalarValue::Text(state))) =
                    (record.value.get("STATEMENT"), record.value.get("STATE"))
                else {
                    log::warn!("skipping malformed journal row at offset {}", record.offset);
                    continue;
                };
                let Some(state) = QueryState::parse(state) else {
                    log::warn!("skipping journal row with state {state:?}");
                    continue;
                };
                rows.push((id, statement.clone(), state));
            }
        }

        let mut queries: IndexMap<String, Seen> = IndexMap::new();
        let mut max_id = 0u64;
        for (i, (id, statement, state)) in rows.iter().enumerate() {
            let Some(id) = id else { continue };
            if let Some(n) = id.strip_prefix("Q_").and_then(|d| d.parse::<u64>().ok()) {
                max_id = max_id.max(n);
            }
            queries
                .entry(id.clone())
                .and_modify(|s| s.last_state = *state)
                .or_insert_with(|| Seen {
                    statement: statement.clone(),
                    first_row: i,
                    last_state: *state,
                });
        }
        self.state.lock().next_query = max_id + 1;

        let mut orphans = Vec::new();
        for (i, (id, statement, _)) in rows.iter().enumerate() {
            match id {
                None => {
                    // Declared stream: re-execute, tolerating reruns of
                    // the same statement.
                    match crate::eql::parser::parse_statement(statement) {
                        Ok(Statement::CreateStream(c)) => {
                            match self.create_stream(&c, false, None) {
                                Ok(_) | Err(EqlError::DuplicateStream(_)) => {}
                                Err(e) => {
                                    log::warn!("replay of {statement:?} failed: {e}");
                                }
                            }
                        }
                        Ok(_) | Err(_) => {
                            log::warn!("skipping unreplayable journal row {statement:?}");
                        }
                    }
                }
                Some(id) => {
                    let seen = &queries[id.as_str()];
                    if seen.first_row != i {
                        continue;
                    }
                    match crate::eql::parser::parse_statement(&seen.statement) {
                        Ok(Statement::CreateStream(c)) => {
                            let replay = Some((id.clone(), seen.last_state));
                            if let Err(e) = self.create_stream(&c, false, replay) {
                                log::warn!("replay of query {id} failed: {e}");
                            }
                        }
                        Ok(Statement::Select(_)) => {
                            // Interactive history. A still-RUNNING row
                            // means the previous process died mid-query.
                            let final_state = match seen.last_state {
                                QueryState::Running => {
                                    orphans.push((id.clone(), seen.statement.clone()));
                                    QueryState::Terminated
                                }
                                other => other,
                            };
                            self.state.lock().queries.insert(id.clone(), QueryEntry {
                                statement: seen.statement.clone(),
                                sink: None,
                                state: final_state,
                                task: None,
                                cancel: None,
                            });
                        }
                        Ok(_) | Err(_) => {
                            log::warn!("skipping unreplayable journal row for {id}");
                        }
                    }
                }
            }
        }
        for (id, statement) in orphans {
            self.journal(Some(&id), &statement, "TERMINATED")?;
        }
        Ok(())
    }
}

impl QueryEntry {
    fn live_state(&self) -> QueryState {
        if self.state == QueryState::Running {
            if let Some(task) = &self.task {
                return match task.status().state {
                    TaskState::Running => QueryState::Running,
                    TaskState::Failed(_) => QueryState::Failed,
                    TaskState::Stopped => QueryState::Terminated,
                };
            }
        }
        self.state
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::BrokerConfig;
    use crate::model::ScalarType;
    use std::time::Instant;

    const RAIN_DDL: &str = "CREATE STREAM RAIN (TS TIMESTAMP NOT NULL, RAIN_MM DOUBLE NOT NULL) \
                            WITH (topic = 'RAIN', timestamp = 'TS');";
    const EP_CSAS: &str =
        "CREATE STREAM EP AS SELECT (RAIN_MM - 5) * 0.75 AS VALUE FROM RAIN EMIT CHANGES;";

    fn engine() -> QueryEngine {
        QueryEngine::open(Arc::new(Broker::open(BrokerConfig::in_memory()).unwrap())).unwrap()
    }

    fn produce_rain(broker: &Broker, times_and_mm: &[(i64, f64)]) {
        let records = times_and_mm
            .iter()
            .map(|(t, mm)| {
                let mut value = FieldMap::new();
                value.insert("TS".into(), ScalarValue::Timestamp(*t));
                value.insert("RAIN_MM".into(), ScalarValue::Float(*mm));
                ProduceRecord::new(value).with_event_time(*t)
            })
            .collect();
        broker.produce("RAIN", records).unwrap();
    }

    fn wait_for<F: Fn() -> bool>(what: &str, cond: F) {
        let deadline = Instant::now() + Duration::from_secs(10);
        while !cond() {
            assert!(Instant::now() < deadline, "timed out waiting for {what}");
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    #[test]
    fn declared_stream_registers_topic_and_schema() {
        let engine = engine();
        let out = engine.execute(RAIN_DDL).unwrap();
        assert_eq!(out, ExecOutcome::StreamCreated { name: "RAIN".into() });
        let def = engine.stream("rain").unwrap();
        assert_eq!(def.topic, "RAIN");
        assert_eq!(def.schema.event_time_field.as_deref(), Some("TS"));
        let attached = engine.broker().schema_of("RAIN").unwrap().unwrap();
        assert_eq!(attached.field("RAIN_MM").unwrap().ty, ScalarType::Float);
        assert!(matches!(
            engine.execute(RAIN_DDL),
            Err(EqlError::DuplicateStream(n)) if n == "RAIN"
        ));
    }

    #[test]
    fn persistent_query_transforms_and_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        {
            let broker =
                Arc::new(Broker::open(BrokerConfig::durable(dir.path())).unwrap());
            let engine = QueryEngine::open(Arc::clone(&broker)).unwrap();
            engine.execute(RAIN_DDL).unwrap();
            let out = engine.execute(EP_CSAS).unwrap();
            assert_eq!(
                out,
                ExecOutcome::QueryStarted { id: "Q_0001".into(), sink: "EP".into() }
            );
            produce_rain(&broker, &[(1_000, 287.4), (2_000, 287.4)]);
            wait_for("derived records", || broker.end_offset("EP", 0).unwrap() == 2);
        }
        // Reopen: stream defs and the running query come back, and the
        // resumed task picks up records produced after the restart.
        let broker = Arc::new(Broker::open(BrokerConfig::durable(dir.path())).unwrap());
        let engine = QueryEngine::open(Arc::clone(&broker)).unwrap();
        assert!(engine.stream("EP").is_some());
        assert_eq!(engine.query_state("Q_0001"), Some(QueryState::Running));
        produce_rain(&broker, &[(3_000, 5.0)]);
        wait_for("resumed task output", || broker.end_offset("EP", 0).unwrap() == 3);
        let out = broker.fetch("EP", 0, 2, 10, Duration::ZERO).unwrap();
        assert_eq!(out[0].value.get("VALUE"), Some(&ScalarValue::Float(0.0)));
    }

    #[test]
    fn interactive_select_limit_reached() {
        let engine = engine();
        engine.execute(RAIN_DDL).unwrap();
        produce_rain(engine.broker(), &[(1_000, 287.4), (2_000, 10.0), (3_000, 287.4)]);
        let Statement::Select(stmt) = crate::eql::parser::parse_statement(
            "SELECT (RAIN_MM - 5) * 0.75 AS VALUE FROM RAIN LIMIT 2;",
        )
        .unwrap() else {
            panic!()
        };
        let prepared = engine.begin_select(&stmt).unwrap();
        let id = prepared.id.clone();
        let mut rows = Vec::new();
        let outcome = engine
            .run_select(prepared, &mut |r| rows.push(r.clone()))
            .unwrap();
        assert_eq!(outcome, SelectOutcome::LimitReached);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].topic, "RAIN", "rows carry the stream name");
        assert_eq!(rows[0].event_time, 1_000);
        assert_eq!(rows[0].value.get("VALUE"), Some(&ScalarValue::Float((287.4 - 5.0) * 0.75)));
        assert_eq!(engine.query_state(&id), Some(QueryState::Completed));
    }

    #[test]
    fn interactive_select_cancelled_from_another_thread() {
        let engine = Arc::new(engine());
        engine.execute(RAIN_DDL).unwrap();
        produce_rain(engine.broker(), &[(1_000, 1.0)]);
        let Statement::Select(stmt) =
            crate::eql::parser::parse_statement("SELECT * FROM RAIN;").unwrap()
        else {
            panic!()
        };
        let prepared = engine.begin_select(&stmt).unwrap();
        let id = prepared.id.clone();
        let terminator = {
            let engine = Arc::clone(&engine);
            let id = id.clone();
            std::thread::spawn(move || {
                std::thread::sleep(Duration::from_millis(150));
                engine.execute(&format!("TERMINATE {id};")).unwrap();
            })
        };
        let mut rows = 0;
        let outcome = engine.run_select(prepared, &mut |_| rows += 1).unwrap();
        terminator.join().unwrap();
        assert_eq!(outcome, SelectOutcome::Terminated);
        assert_eq!(rows, 1, "tailing query saw the existing record before cancel");
        assert_eq!(engine.query_state(&id), Some(QueryState::Terminated));
    }

    #[test]
    fn show_streams_queries_topics() {
        let engine = engine();
        engine.execute(RAIN_DDL).unwrap();
        engine.execute(EP_CSAS).unwrap();
        let ExecOutcome::Streams(streams) = engine.execute("SHOW STREAMS;").unwrap() else {
            panic!()
        };
        assert_eq!(
            streams.iter().map(|s| s.name.as_str()).collect::<Vec<_>>(),
            ["EP", "RAIN"]
        );
        let ExecOutcome::Queries(queries) = engine.execute("SHOW QUERIES;").unwrap() else {
            panic!()
        };
        assert_eq!(queries.len(), 1);
        assert_eq!(queries[0].id, "Q_0001");
        assert_eq!(queries[0].state, QueryState::Running);
        assert_eq!(queries[0].sink.as_deref(), Some("EP"));
        let ExecOutcome::Topics(topics) = engine.execute("SHOW TOPICS;").unwrap() else {
            panic!()
        };
        let names: Vec<&str> = topics.iter().map(|t| t.name.as_str()).collect();
        assert!(names.contains(&"RAIN") && names.contains(&"EP"));
        assert!(!names.iter().any(|n| n.starts_with("__")), "internals stay hidden");
    }

    #[test]
    fn terminate_stops_task_and_unknown_id_errors() {
        let engine = engine();
        engine.execute(RAIN_DDL).unwrap();
        engine.execute(EP_CSAS).unwrap();
        let out = engine.execute("TERMINATE Q_0001;").unwrap();
        assert_eq!(out, ExecOutcome::Terminated { id: "Q_0001".into() });
        assert_eq!(engine.query_state("Q_0001"), Some(QueryState::Terminated));
        // Idempotent re-terminate; unknown ids are a distinct error.
        engine.execute("TERMINATE Q_0001;").unwrap();
        assert!(matches!(
            engine.execute("TERMINATE Q_9999;"),
            Err(EqlError::UnknownQuery(id)) if id == "Q_9999"
        ));
    }

    #[test]
    fn terminated_query_stays_terminated_after_restart() {
        let dir = tempfile::tempdir().unwrap();
        {
            let broker =
                Arc::new(Broker::open(BrokerConfig::durable(dir.path())).unwrap());
            let engine = QueryEngine::open(Arc::clone(&broker)).unwrap();
            engine.execute(RAIN_DDL).unwrap();
            engine.execute(EP_CSAS).unwrap();
            engine.execute("TERMINATE Q_0001;").unwrap();
        }
        let broker = Arc::new(Broker::open(BrokerConfig::durable(dir.path())).unwrap());
        let engine = QueryEngine::open(Arc::clone(&broker)).unwrap();
        assert_eq!(engine.query_state("Q_0001"), Some(QueryState::Terminated));
        assert!(engine.stream("EP").is_some(), "derived stream outlives its query");
        produce_rain(&broker, &[(9_000, 100.0)]);
        std::thread::sleep(Duration::from_millis(150));
        assert_eq!(broker.end_offset("EP", 0).unwrap(), 0, "no task runs");
        // The id counter moves past replayed ids.
        let out = engine
            .execute("CREATE STREAM EP2 AS SELECT RAIN_MM AS V FROM RAIN EMIT CHANGES;")
            .unwrap();
        assert_eq!(out, ExecOutcome::QueryStarted { id: "Q_0002".into(), sink: "EP2".into() });
    }

    #[test]
    fn querying_bare_topic_needs_schema() {
        let engine = engine();
        engine
            .broker()
            .create_topic(TopicSpec::new("NAKED").unwrap(), None)
            .unwrap();
        let err = engine
            .execute("CREATE STREAM X AS SELECT * FROM NAKED EMIT CHANGES;")
            .unwrap_err();
        assert!(matches!(err, EqlError::UnknownSource(_)), "{err}");
    }

    #[test]
    fn windowed_csas_emits_on_window_close() {
        let engine = engine();
        engine.execute(RAIN_DDL).unwrap();
        engine
            .execute(
                "CREATE STREAM RAIN_5M AS SELECT SUM(RAIN_MM) AS TOTAL FROM RAIN \
                 WINDOW TUMBLING (SIZE 5 MINUTES) EMIT CHANGES;",
            )
            .unwrap();
        produce_rain(engine.broker(), &[(0, 1.5), (60_000, 2.5), (300_000, 9.0)]);
        wait_for("window emission", || {
            engine.broker().end_offset("RAIN_5M", 0).unwrap() == 1
        });
        let out = engine.broker().fetch("RAIN_5M", 0, 0, 10, Duration::ZERO).unwrap();
        assert_eq!(out[0].value.get("TOTAL"), Some(&ScalarValue::Float(4.0)));
        assert_eq!(
            out[0].value.get("WINDOW_START"),
            Some(&ScalarValue::Timestamp(0))
        );
        let def = engine.stream("RAIN_5M").unwrap();
        let names: Vec<&str> = def.schema.field_names().collect();
        assert_eq!(names, ["WINDOW_START", "WINDOW_END", "TOTAL"]);
    }
}
