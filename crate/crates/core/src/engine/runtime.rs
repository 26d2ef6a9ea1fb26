//! Operator topologies and the tasks that run them: consume a source
//! topic, push records through the node chain, produce to an output
//! topic, and commit offsets only after produce acknowledgment.

use crate::broker::{Broker, BrokerError, ProduceRecord};
use crate::engine::expr::{Expr, ListExpr};
use crate::engine::window::{
    AggSpec, NegationState, Stimulus, WindowAggState, WindowEmit, WindowSpec,
};
use crate::model::{FieldMap, Record, Schema, ScalarValue, TopicSpec};
use parking_lot::Mutex;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

/// One dataflow operator. Aggregation and Negation hold windowed state at
/// run time; the rest are stateless.
#[derive(Debug, Clone, PartialEq)]
pub enum OperatorSpec {
    Filter { predicate: Expr },
    Map { assignments: Vec<(String, Expr)> },
    FlatMap { list: ListExpr, alias: String },
    Projection { fields: Vec<String> },
    Aggregation { window: WindowSpec, aggregates: Vec<AggSpec>, group_by: Vec<String> },
    Negation { window: WindowSpec, predicate: Expr },
}

impl OperatorSpec {
    pub fn is_stateless(&self) -> bool {
        !matches!(self, OperatorSpec::Aggregation { .. } | OperatorSpec::Negation { .. })
    }
}

/// A linear operator pipeline from one source topic to one output topic.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub name: String,
    pub source: String,
    pub output: String,
    pub operators: Vec<OperatorSpec>,
    /// Attached to the output topic when the task auto-creates it.
    pub output_schema: Option<Schema>,
}

/// Applies a stateless operator to one record, yielding 0, 1, or many
/// outputs. Pure: depends only on the node and the record.
///
/// Panics if handed a windowed operator; those need state.
pub fn apply_stateless(node: &OperatorSpec, record: &Record) -> Vec<Record> {
    match node {
        OperatorSpec::Filter { predicate } => {
            if predicate.eval(&record.value) == ScalarValue::Bool(true) {
                vec![record.clone()]
            } else {
                Vec::new()
            }
        }
        OperatorSpec::Map { assignments } => {
            // All right-hand sides see the original record, so one
            // assignment never observes another's result.
            let computed: Vec<(String, ScalarValue)> = assignments
                .iter()
                .map(|(name, expr)| (name.clone(), expr.eval(&record.value)))
                .collect();
            let mut out = record.clone();
            for (name, v) in computed {
                out.value.insert(name, v);
            }
            vec![out]
        }
        OperatorSpec::FlatMap { list, alias } => list
            .eval(&record.value)
            .into_iter()
            .map(|element| {
                let mut out = record.clone();
                out.value.insert(alias.clone(), element);
                out
            })
            .collect(),
        OperatorSpec::Projection { fields } => {
            let mut value = FieldMap::new();
            for f in fields {
                value.insert(f.clone(), record.value.get(f).cloned().unwrap_or(ScalarValue::Null));
            }
            let mut out = record.clone();
            out.value = value;
            vec![out]
        }
        OperatorSpec::Aggregation { .. } | OperatorSpec::Negation { .. } => {
            panic!("apply_stateless called on a windowed operator")
        }
    }
}

enum NodeState {
    Stateless(OperatorSpec),
    Aggregation(WindowAggState),
    Negation(NegationState),
}

impl NodeState {
    fn instantiate(spec: &OperatorSpec) -> NodeState {
        match spec {
            OperatorSpec::Aggregation { window, aggregates, group_by } => NodeState::Aggregation(
                WindowAggState::new(*window, aggregates.clone(), group_by.clone()),
            ),
            OperatorSpec::Negation { window, predicate } => {
                NodeState::Negation(NegationState::new(*window, predicate.clone()))
            }
            stateless => NodeState::Stateless(stateless.clone()),
        }
    }

    fn process(&mut self, record: &Record) -> Vec<Record> {
        match self {
            NodeState::Stateless(spec) => apply_stateless(spec, record),
            NodeState::Aggregation(state) => {
                emits_to_records(state.fold(record), record)
            }
            NodeState::Negation(state) => {
                emits_to_records(state.advance(Stimulus::Record(record)), record)
            }
        }
    }

    fn replay_floor(&self) -> Option<u64> {
        match self {
            NodeState::Stateless(_) => None,
            NodeState::Aggregation(state) => state.replay_floor(),
            NodeState::Negation(state) => state.replay_floor(),
        }
    }

    fn late_records(&self) -> u64 {
        match self {
            NodeState::Stateless(_) => 0,
            NodeState::Aggregation(state) => state.late_records(),
            NodeState::Negation(state) => state.late_records(),
        }
    }
}

fn emits_to_records(emits: Vec<WindowEmit>, origin: &Record) -> Vec<Record> {
    emits
        .into_iter()
        .map(|e| Record {
            topic: origin.topic.clone(),
            partition: origin.partition,
            offset: origin.offset,
            event_time: e.window_end,
            key: e.key,
            value: e.value,
            headers: Vec::new(),
        })
        .collect()
}

/// An instantiated operator chain. Stateless nodes share one spec copy;
/// windowed nodes carry their own accumulation state, so a Pipeline is
/// scoped to one source partition.
pub struct Pipeline {
    nodes: Vec<NodeState>,
}

impl Pipeline {
    pub fn new(operators: &[OperatorSpec]) -> Pipeline {
        Pipeline { nodes: operators.iter().map(NodeState::instantiate).collect() }
    }

    /// Pushes one record through the chain and returns whatever reaches
    /// the end, which may be nothing or several records.
    pub fn push(&mut self, record: &Record) -> Vec<Record> {
        let mut current = vec![record.clone()];
        for node in self.nodes.iter_mut() {
            let mut next = Vec::new();
            for r in &current {
                next.extend(node.process(r));
            }
            current = next;
            if current.is_empty() {
                break;
            }
        }
        current
    }

    /// Earliest source offset still feeding an open window, if any node
    /// holds one. Committing past this would lose state on restart.
    pub fn replay_floor(&self) -> Option<u64> {
        self.nodes.iter().filter_map(NodeState::replay_floor).min()
    }

    pub fn late_records(&self) -> u64 {
        self.nodes.iter().map(NodeState::late_records).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskState {
    Running,
    Stopped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskStatus {
    pub state: TaskState,
    pub records_in: u64,
    pub records_out: u64,
    pub late_records: u64,
}

/// Simulated crash points for at-least-once testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KillPoint {
    /// Halt after outputs are produced but before the offset commit.
    AfterProduce,
    /// Halt right after an offset commit.
    AfterCommit,
}

#[derive(Debug, Clone)]
pub struct TaskOptions {
    pub batch_max: usize,
    pub poll: Duration,
    /// Kill the task at the given point once this many records have been
    /// produced. Test-only crash injection; None in normal operation.
    pub kill_after_outputs: Option<(u64, KillPoint)>,
}

impl Default for TaskOptions {
    fn default() -> TaskOptions {
        TaskOptions { batch_max: 500, poll: Duration::from_millis(250), kill_after_outputs: None }
    }
}

struct TaskShared {
    state: Mutex<TaskState>,
    records_in: AtomicU64,
    records_out: AtomicU64,
    late_records: AtomicU64,
}

/// Handle to a running topology. Dropping it stops the task.
pub struct TaskHandle {
    name: String,
    stop: Arc<AtomicBool>,
    shared: Arc<TaskShared>,
    threads: Vec<JoinHandle<()>>,
}

impl TaskHandle {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn status(&self) -> TaskStatus {
        TaskStatus {
            state: self.shared.state.lock().clone(),
            records_in: self.shared.records_in.load(Ordering::Relaxed),
            records_out: self.shared.records_out.load(Ordering::Relaxed),
            late_records: self.shared.late_records.load(Ordering::Relaxed),
        }
    }

    /// Signals the task to stop and waits for its threads to finish.
    pub fn stop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
        let mut state = self.shared.state.lock();
        if *state == TaskState::Running {
            *state = TaskState::Stopped;
        }
    }
}

impl Drop for TaskHandle {
    fn drop(&mut self) {
        self.stop();
    }
}

/// Consumer group used by a topology, shared with the query registry so
/// progress survives restarts.
pub fn topology_group(name: &str) -> String {
    format!("query-{name}")
}

/// Starts a persistent processing task for the topology: one thread per
/// source partition, each consuming as group `query-<name>` from its
/// committed offset. The output topic is created (1 partition) when
/// absent. A missing source surfaces as the Failed state, not an error.
pub fn run_topology(
    broker: Arc<Broker>,
    topology: Topology,
    options: TaskOptions,
) -> Result<TaskHandle, BrokerError> {
    match broker.create_topic(
        TopicSpec::new(&topology.output).map_err(BrokerError::InvalidTopic)?,
        topology.output_schema.clone(),
    ) {
        Ok(_) | Err(BrokerError::DuplicateTopic(_)) => {}
        Err(e) => return Err(e),
    }

    let partitions = match broker.describe_topic(&topology.source) {
        Ok(info) => info.partitions,
        // Let the task report the missing source as a Failed state.
        Err(_) => 1,
    };

    let stop = Arc::new(AtomicBool::new(false));
    let shared = Arc::new(TaskShared {
        state: Mutex::new(TaskState::Running),
        records_in: AtomicU64::new(0),
        records_out: AtomicU64::new(0),
        late_records: AtomicU64::new(0),
    });

    let mut threads = Vec::new();
    for partition in 0..partitions {
        let broker = Arc::clone(&broker);
        let topology = topology.clone();
        let options = options.clone();
        let stop = Arc::clone(&stop);
        let shared = Arc::clone(&shared);
        threads.push(std::thread::spawn(move || {
            partition_loop(&broker, &topology, partition, &options, &stop, &shared);
        }));
    }

    Ok(TaskHandle { name: topology.name, stop, shared, threads })
}

fn partition_loop(
    broker: &Broker,
    topology: &Topology,
    partition: u32,
    options: &TaskOptions,
    stop: &AtomicBool,
    shared: &TaskShared,
) {
    let group = topology_group(&topology.name);
    let mut pipeline = Pipeline::new(&topology.operators);
    let fail = |message: String| {
        *shared.state.lock() = TaskState::Failed(message);
    };
    let mut next = broker.committed_offset(&group, &topology.source, partition);

    while !stop.load(Ordering::SeqCst) {
        let batch = match broker.fetch(
            &topology.source,
            partition,
            next,
            options.batch_max,
            options.poll,
        ) {
            Ok(batch) => batch,
            Err(e) => {
                fail(format!("source fetch: {e}"));
                return;
            }
        };
        if batch.is_empty() {
            continue;
        }

        let mut outputs = Vec::new();
        for record in &batch {
            shared.records_in.fetch_add(1, Ordering::Relaxed);
            outputs.extend(pipeline.push(record));
        }
        next = batch.last().expect("non-empty").offset + 1;

        if !outputs.is_empty() {
            let produced: Vec<ProduceRecord> = outputs
                .into_iter()
                .map(|r| ProduceRecord {
                    key: r.key,
                    value: r.value,
                    event_time: Some(r.event_time),
                    headers: r.headers,
                })
                .collect();
            let n = produced.len() as u64;
            if let Err(e) = broker.produce(&topology.output, produced) {
                fail(format!("output produce: {e}"));
                return;
            }
            shared.records_out.fetch_add(n, Ordering::Relaxed);
        }
        shared.late_records.store(pipeline.late_records(), Ordering::Relaxed);

        let produced_so_far = shared.records_out.load(Ordering::Relaxed);
        if let Some((after, KillPoint::AfterProduce)) = options.kill_after_outputs {
            if produced_so_far >= after {
                fail("fault injection kill".into());
                return;
            }
        }

        // Commit the replay floor: the earliest offset still feeding an
        // open window, or everything processed when no window is open.
        let floor = pipeline.replay_floor().unwrap_or(next);
        if let Err(e) = broker.commit_offset(&group, &topology.source, partition, floor) {
            fail(format!("offset commit: {e}"));
            return;
        }
        if let Some((after, KillPoint::AfterCommit)) = options.kill_after_outputs {
            if produced_so_far >= after {
                fail("fault injection kill".into());
                return;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::broker::BrokerConfig;
    use crate::engine::expr::BinaryOp;
    use crate::engine::window::AggFunc;
    use std::time::Instant;

    fn rain_value(mm: f64) -> FieldMap {
        let mut m = FieldMap::new();
        m.insert("RAIN_MM".into(), ScalarValue::Float(mm));
        m
    }

    fn ep_expr() -> Expr {
        Expr::binary(
            BinaryOp::Mul,
            Expr::binary(
                BinaryOp::Sub,
                Expr::field("RAIN_MM"),
                Expr::literal(ScalarValue::Int(5)),
            ),
            Expr::literal(ScalarValue::Float(0.75)),
        )
    }

    fn ep_topology() -> Topology {
        Topology {
            name: "EP_TEST".into(),
            source: "RAIN".into(),
            output: "EP".into(),
            operators: vec![
                OperatorSpec::Map { assignments: vec![("VALUE".into(), ep_expr())] },
                OperatorSpec::Projection { fields: vec!["VALUE".into()] },
            ],
            output_schema: None,
        }
    }

    fn wait_for<F: Fn() -> bool>(what: &str, cond: F) {
        let deadline = Instant::now() + Duration::from_secs(10);
        while !cond() {
            assert!(Instant::now() < deadline, "timed out waiting for {what}");
            std::thread::sleep(Duration::from_millis(10));
        }
    }

    fn fast_options() -> TaskOptions {
        TaskOptions { poll: Duration::from_millis(20), ..TaskOptions::default() }
    }

    #[test]
    fn precipitation_map_topology_end_to_end() {
        let broker = Arc::new(Broker::open(BrokerConfig::in_memory()).unwrap());
        broker.create_topic(TopicSpec::new("RAIN").unwrap(), None).unwrap();
        let records = (0..5)
            .map(|i| ProduceRecord {
                key: None,
                value: rain_value(287.4),
                event_time: Some(1_585_847_107_000 + i * 300_000),
                headers: Vec::new(),
            })
            .collect();
        broker.produce("RAIN", records).unwrap();

        let mut task = run_topology(Arc::clone(&broker), ep_topology(), fast_options()).unwrap();
        wait_for("5 outputs on EP", || broker.end_offset("EP", 0).unwrap() == 5);
        let out = broker.fetch("EP", 0, 0, 10, Duration::ZERO).unwrap();
        assert_eq!(out.len(), 5);
        for (i, r) in out.iter().enumerate() {
            let got = match r.value.get("VALUE") {
                Some(ScalarValue::Float(f)) => *f,
                other => panic!("bad VALUE {other:?}"),
            };
            assert!((got - 211.8).abs() < 1e-9);
            assert_eq!(r.value.len(), 1, "projection keeps only VALUE");
            assert_eq!(r.event_time, 1_585_847_107_000 + i as i64 * 300_000);
        }
        wait_for("source offset committed", || {
            broker.committed_offset("query-EP_TEST", "RAIN", 0) == 5
        });
        task.stop();
        assert_eq!(task.status().state, TaskState::Stopped);
    }

    #[test]
    fn empty_source_keeps_running_with_empty_output() {
        let broker = Arc::new(Broker::open(BrokerConfig::in_memory()).unwrap());
        broker.create_topic(TopicSpec::new("RAIN").unwrap(), None).unwrap();
        let mut task = run_topology(Arc::clone(&broker), ep_topology(), fast_options()).unwrap();
        std::thread::sleep(Duration::from_millis(100));
        assert_eq!(task.status().state, TaskState::Running);
        assert_eq!(broker.end_offset("EP", 0).unwrap(), 0);
        task.stop();
        assert_eq!(task.status().state, TaskState::Stopped);
    }

    #[test]
    fn missing_source_enters_failed_state() {
        let broker = Arc::new(Broker::open(BrokerConfig::in_memory()).unwrap());
        let topology = Topology { source: "NO_SUCH".into(), ..ep_topology() };
        let task = run_topology(broker, topology, fast_options()).unwrap();
        wait_for("failed state", || matches!(task.status().state, TaskState::Failed(_)));
    }

    #[test]
    fn windowed_commit_stays_at_open_window_floor() {
        let broker = Arc::new(Broker::open(BrokerConfig::in_memory()).unwrap());
        broker.create_topic(TopicSpec::new("RAIN").unwrap(), None).unwrap();
        let topology = Topology {
            name: "AVG_TEST".into(),
            source: "RAIN".into(),
            output: "AVG_RAIN".into(),
            operators: vec![OperatorSpec::Aggregation {
                window: WindowSpec::tumbling(300_000).unwrap(),
                aggregates: vec![AggSpec::new(AggFunc::Avg, Some("RAIN_MM"), "VALUE")],
                group_by: Vec::new(),
            }],
            output_schema: None,
        };
        let _task = run_topology(Arc::clone(&broker), topology, fast_options()).unwrap();

        let at = |t: i64, mm: f64| ProduceRecord {
            key: None,
            value: rain_value(mm),
            event_time: Some(t),
            headers: Vec::new(),
        };
        broker
            .produce("RAIN", vec![at(0, 1.0), at(60_000, 2.0), at(299_000, 3.0)])
            .unwrap();
        wait_for("3 records in", || {
            broker.committed_offset("query-AVG_TEST", "RAIN", 0) == 0
                && broker.end_offset("AVG_RAIN", 0).unwrap() == 0
        });
        std::thread::sleep(Duration::from_millis(120));
        assert_eq!(
            broker.committed_offset("query-AVG_TEST", "RAIN", 0),
            0,
            "open window holds the commit at its first record"
        );

        broker.produce("RAIN", vec![at(300_000, 9.0)]).unwrap();
        wait_for("window closed", || broker.end_offset("AVG_RAIN", 0).unwrap() == 1);
        let out = broker.fetch("AVG_RAIN", 0, 0, 10, Duration::ZERO).unwrap();
        assert_eq!(out[0].value.get("VALUE"), Some(&ScalarValue::Float(2.0)));
        assert_eq!(out[0].event_time, 300_000, "event time is the window end");
        wait_for("commit advanced to new floor", || {
            broker.committed_offset("query-AVG_TEST", "RAIN", 0) == 3
        });
    }

    #[test]
    fn kill_between_produce_and_commit_duplicates_but_never_loses() {
        let broker = Arc::new(Broker::open(BrokerConfig::in_memory()).unwrap());
        broker.create_topic(TopicSpec::new("SRC").unwrap(), None).unwrap();
        let records = (0..10)
            .map(|i| {
                let mut value = FieldMap::new();
                value.insert("SEQ".into(), ScalarValue::Int(i));
                ProduceRecord { key: None, value, event_time: Some(i * 1000), headers: Vec::new() }
            })
            .collect();
        broker.produce("SRC", records).unwrap();

        let topology = Topology {
            name: "COPY".into(),
            source: "SRC".into(),
            output: "DST".into(),
            operators: Vec::new(),
            output_schema: None,
        };
        let crashing = TaskOptions {
            kill_after_outputs: Some((4, KillPoint::AfterProduce)),
            batch_max: 2,
            ..fast_options()
        };
        let task = run_topology(Arc::clone(&broker), topology.clone(), crashing).unwrap();
        wait_for("fault kill", || matches!(task.status().state, TaskState::Failed(_)));
        drop(task);

        let mut resumed = run_topology(Arc::clone(&broker), topology, fast_options()).unwrap();
        wait_for("all inputs delivered", || {
            broker.committed_offset("query-COPY", "SRC", 0) == 10
        });
        resumed.stop();

        let out = broker
            .fetch("DST", 0, 0, 100, Duration::ZERO)
            .unwrap();
        assert!(out.len() >= 10, "at-least-once may duplicate, never drop");
        let mut seen = [false; 10];
        for r in &out {
            match r.value.get("SEQ") {
                Some(ScalarValue::Int(s)) => seen[*s as usize] = true,
                other => panic!("bad SEQ {other:?}"),
            }
        }
        assert!(seen.iter().all(|s| *s), "every input appears in the output");
    }

    #[test]
    fn flat_map_emits_one_record_per_element() {
        let mut value = FieldMap::new();
        value.insert("CSV".into(), ScalarValue::Text("x,y".into()));
        let record = Record::new("S", 0, None, value);
        let node = OperatorSpec::FlatMap {
            list: ListExpr::Split { arg: Expr::field("CSV"), delimiter: ",".into() },
            alias: "PART".into(),
        };
        let out = apply_stateless(&node, &record);
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].value.get("PART"), Some(&ScalarValue::Text("x".into())));
        assert_eq!(out[1].value.get("PART"), Some(&ScalarValue::Text("y".into())));
    }

    #[test]
    fn projection_example_keeps_listed_fields_only() {
        let mut value = FieldMap::new();
        value.insert("VALUE".into(), ScalarValue::Float(211.8));
        value.insert("EXTRA".into(), ScalarValue::Int(1));
        let record = Record::new("EP", 0, None, value);
        let node = OperatorSpec::Projection { fields: vec!["VALUE".into()] };
        let out = apply_stateless(&node, &record);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].value.len(), 1);
        assert_eq!(out[0].value.get("VALUE"), Some(&ScalarValue::Float(211.8)));
    }

    #[test]
    fn filter_keeps_true_drops_false_and_null() {
        let pred = Expr::binary(
            BinaryOp::Gt,
            Expr::field("RAIN_MM"),
            Expr::literal(ScalarValue::Int(100)),
        );
        let node = OperatorSpec::Filter { predicate: pred };
        let keep = Record::new("R", 0, None, rain_value(287.4));
        assert_eq!(apply_stateless(&node, &keep).len(), 1);
        let drop = Record::new("R", 0, None, rain_value(5.0));
        assert_eq!(apply_stateless(&node, &drop).len(), 0);
        let mut null_value = FieldMap::new();
        null_value.insert("RAIN_MM".into(), ScalarValue::Null);
        let null_rec = Record::new("R", 0, None, null_value);
        assert_eq!(apply_stateless(&node, &null_rec).len(), 0, "null predicate drops");
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_value() -> impl Strategy<Value = ScalarValue> {
            prop_oneof![
                Just(ScalarValue::Null),
                any::<i64>().prop_map(ScalarValue::Int),
                (-1.0e6..1.0e6f64).prop_map(ScalarValue::Float),
            ]
        }

        fn arb_record() -> impl Strategy<Value = Record> {
            (arb_value(), arb_value()).prop_map(|(x, y)| {
                let mut value = FieldMap::new();
                value.insert("X".into(), x);
                value.insert("Y".into(), y);
                Record::new("S", 0, None, value)
            })
        }

        fn arb_predicate() -> impl Strategy<Value = Expr> {
            (prop_oneof![Just("X"), Just("Y")], -100..100i64).prop_map(|(field, lit)| {
                Expr::binary(
                    BinaryOp::Gt,
                    Expr::field(field),
                    Expr::literal(ScalarValue::Int(lit)),
                )
            })
        }

        proptest! {
            #[test]
            fn filter_fusion(record in arb_record(), p in arb_predicate(), q in arb_predicate()) {
                let fp = OperatorSpec::Filter { predicate: p.clone() };
                let fq = OperatorSpec::Filter { predicate: q.clone() };
                let fused = OperatorSpec::Filter {
                    predicate: Expr::binary(BinaryOp::And, p, q),
                };
                let two_step: Vec<Record> = apply_stateless(&fp, &record)
                    .iter()
                    .flat_map(|r| apply_stateless(&fq, r))
                    .collect();
                prop_assert_eq!(two_step, apply_stateless(&fused, &record));
            }

            #[test]
            fn projection_idempotent(record in arb_record()) {
                let proj = OperatorSpec::Projection { fields: vec!["X".into()] };
                let once = apply_stateless(&proj, &record);
                let twice: Vec<Record> =
                    once.iter().flat_map(|r| apply_stateless(&proj, r)).collect();
                prop_assert_eq!(once, twice);
            }

            #[test]
            fn stateless_application_is_pure(record in arb_record(), p in arb_predicate()) {
                let node = OperatorSpec::Filter { predicate: p };
                prop_assert_eq!(
                    apply_stateless(&node, &record),
                    apply_stateless(&node, &record)
                );
            }
        }
    }
}
