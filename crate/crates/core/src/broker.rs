//! Topic registry and publish/subscribe hub: produce, fetch with long
//! polling, consumer-group offsets, and first-come partition assignment.
//!
//! One broker owns every partition log. Calls are safe from any thread;
//! appends to a partition are serialized by its log mutex, and fetches on
//! other partitions never wait on them. Group offsets are journaled to the
//! internal `__OFFSETS` topic so committed positions survive restarts.

use crate::commitlog::{EntryData, LogError, PartitionLog, RetentionPolicy, StoredRecord};
use crate::model::{
    canonical_ident, partition_for, validate_record, FieldMap, Record, Schema, ScalarValue,
    TimestampMs, TopicSpec, TopicSpecError, Violation,
};
use indexmap::IndexMap;
use parking_lot::{Condvar, Mutex, RwLock};
use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

/// Internal single-partition topic holding the consumer-offset journal.
pub const OFFSETS_TOPIC: &str = "__OFFSETS";

const DEFAULT_ROLL_BYTES: u64 = 16 * 1024 * 1024;
const META_FILE: &str = "meta.json";

#[derive(Debug, Clone)]
pub struct BrokerConfig {
    /// Storage root for durable mode; `None` keeps everything in memory.
    pub data_dir: Option<PathBuf>,
    pub roll_bytes: u64,
}

impl BrokerConfig {
    pub fn in_memory() -> BrokerConfig {
        BrokerConfig { data_dir: None, roll_bytes: DEFAULT_ROLL_BYTES }
    }

    pub fn durable(data_dir: impl Into<PathBuf>) -> BrokerConfig {
        BrokerConfig { data_dir: Some(data_dir.into()), roll_bytes: DEFAULT_ROLL_BYTES }
    }
}

/// A record handed to `produce`, before partition and offset assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct ProduceRecord {
    pub key: Option<String>,
    pub value: FieldMap,
    /// Event time in epoch milliseconds; broker wall clock when absent.
    pub event_time: Option<TimestampMs>,
    pub headers: Vec<(String, String)>,
}

impl ProduceRecord {
    pub fn new(value: FieldMap) -> ProduceRecord {
        ProduceRecord { key: None, value, event_time: None, headers: Vec::new() }
    }

    pub fn with_key(mut self, key: impl Into<String>) -> ProduceRecord {
        self.key = Some(key.into());
        self
    }

    pub fn with_event_time(mut self, at: TimestampMs) -> ProduceRecord {
        self.event_time = Some(at);
        self
    }
}

/// Where a fresh subscription starts when the group has no committed offset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StartPosition {
    #[default]
    Earliest,
    Latest,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicInfo {
    pub name: String,
    pub partitions: u32,
    pub replication_display: u32,
    pub percent_in_sync: u32,
    pub end_offsets: Vec<u64>,
    pub schema: Option<Schema>,
}

#[derive(Debug, thiserror::Error)]
pub enum BrokerError {
    #[error("topic {0} already exists")]
    DuplicateTopic(String),
    #[error(transparent)]
    InvalidTopic(#[from] TopicSpecError),
    #[error("unknown topic {0}")]
    UnknownTopic(String),
    #[error("topic {topic} has no partition {partition}")]
    UnknownPartition { topic: String, partition: u32 },
    #[error("record {index} failed schema validation: {}", format_violations(.violations))]
    Validation { index: usize, violations: Vec<Violation> },
    #[error("commit offset {requested} is beyond partition end {end}")]
    OffsetBeyondEnd { requested: u64, end: u64 },
    #[error("offset {requested} is below the retention floor; earliest available is {earliest}")]
    OffsetOutOfRange { requested: u64, earliest: u64 },
    #[error("log error: {0}")]
    Log(LogError),
    #[error("corrupt topic metadata at {path}: {detail}")]
    CorruptMeta { path: PathBuf, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("{}: {}", v.field, v.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

impl From<LogError> for BrokerError {
    fn from(e: LogError) -> BrokerError {
        match e {
            LogError::OutOfRange { requested, earliest } => {
                BrokerError::OffsetOutOfRange { requested, earliest }
            }
            other => BrokerError::Log(other),
        }
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct TopicMeta {
    name: String,
    partitions: u32,
    replication_display: u32,
    schema: Option<Schema>,
}

struct PartitionState {
    log: Mutex<PartitionLog>,
    data: Condvar,
}

struct Topic {
    spec: TopicSpec,
    schema: RwLock<Option<Schema>>,
    partitions: Vec<PartitionState>,
    round_robin: AtomicU64,
}

impl Topic {
    fn partition(&self, partition: u32) -> Result<&PartitionState, BrokerError> {
        self.partitions.get(partition as usize).ok_or_else(|| BrokerError::UnknownPartition {
            topic: self.spec.name.clone(),
            partition,
        })
    }
}

type GroupOffsets = HashMap<(String, u32), u64>;

pub struct Broker {
    data_dir: Option<PathBuf>,
    roll_bytes: u64,
    topics: RwLock<IndexMap<String, Arc<Topic>>>,
    groups: Mutex<HashMap<String, GroupOffsets>>,
    /// (group, topic) → partition → subscriber token; first come, first served.
    assignments: Mutex<HashMap<(String, String), HashMap<u32, u64>>>,
}

impl Broker {
    /// Opens a broker, recovering all topics, logs, and committed offsets
    /// from `data_dir` when one is configured.
    pub fn open(config: BrokerConfig) -> Result<Broker, BrokerError> {
        let broker = Broker {
            data_dir: config.data_dir,
            roll_bytes: config.roll_bytes,
            topics: RwLock::new(IndexMap::new()),
            groups: Mutex::new(HashMap::new()),
            assignments: Mutex::new(HashMap::new()),
        };
        if let Some(dir) = broker.data_dir.clone() {
            std::fs::create_dir_all(&dir)?;
            broker.load_topics(&dir)?;
        }
        if broker.lookup(OFFSETS_TOPIC).is_err() {
            broker.create_topic(TopicSpec::new(OFFSETS_TOPIC).expect("valid"), None)?;
        }
        broker.replay_offsets()?;
        Ok(broker)
    }

    fn load_topics(&self, dir: &Path) -> Result<(), BrokerError> {
        let mut metas: Vec<TopicMeta> = Vec::new();
        for dirent in std::fs::read_dir(dir)? {
            let meta_path = dirent?.path().join(META_FILE);
            if !meta_path.is_file() {
                continue;
            }
            let bytes = std::fs::read(&meta_path)?;
            let meta: TopicMeta = serde_json::from_slice(&bytes).map_err(|e| {
                BrokerError::CorruptMeta { path: meta_path.clone(), detail: e.to_string() }
            })?;
            metas.push(meta);
        }
        metas.sort_by(|a, b| a.name.cmp(&b.name));
        let mut topics = self.topics.write();
        for meta in metas {
            let spec = TopicSpec {
                name: meta.name,
                partitions: meta.partitions,
                replication_display: meta.replication_display,
            };
            let topic = self.build_topic(&spec, meta.schema)?;
            topics.insert(spec.name.clone(), Arc::new(topic));
        }
        Ok(())
    }

    fn build_topic(&self, spec: &TopicSpec, schema: Option<Schema>) -> Result<Topic, BrokerError> {
        let mut partitions = Vec::with_capacity(spec.partitions as usize);
        for p in 0..spec.partitions {
            let log = match &self.data_dir {
                None => PartitionLog::in_memory(),
                Some(dir) => {
                    let pdir = dir.join(&spec.name).join(p.to_string());
                    PartitionLog::open_durable_with_roll(&pdir, self.roll_bytes)?
                }
            };
            partitions.push(PartitionState { log: Mutex::new(log), data: Condvar::new() });
        }
        Ok(Topic {
            spec: spec.clone(),
            schema: RwLock::new(schema),
            partitions,
            round_robin: AtomicU64::new(0),
        })
    }

    fn lookup(&self, name: &str) -> Result<Arc<Topic>, BrokerError> {
        let canonical = canonical_ident(name);
        self.topics
            .read()
            .get(&canonical)
            .cloned()
            .ok_or(BrokerError::UnknownTopic(canonical))
    }

    /// Creates a topic with empty logs; it is describable immediately.
    pub fn create_topic(
        &self,
        spec: TopicSpec,
        schema: Option<Schema>,
    ) -> Result<TopicInfo, BrokerError> {
        let mut topics = self.topics.write();
        if topics.contains_key(&spec.name) {
            return Err(BrokerError::DuplicateTopic(spec.name));
        }
        if let Some(dir) = &self.data_dir {
            let tdir = dir.join(&spec.name);
            std::fs::create_dir_all(&tdir)?;
            let meta = TopicMeta {
                name: spec.name.clone(),
                partitions: spec.partitions,
                replication_display: spec.replication_display,
                schema: schema.clone(),
            };
            std::fs::write(tdir.join(META_FILE), serde_json::to_vec_pretty(&meta).unwrap())?;
        }
        let topic = Arc::new(self.build_topic(&spec, schema)?);
        let info = describe(&topic);
        topics.insert(spec.name.clone(), topic);
        Ok(info)
    }

    /// Attaches or replaces the validation schema on an existing topic.
    pub fn attach_schema(&self, name: &str, schema: Schema) -> Result<(), BrokerError> {
        let topic = self.lookup(name)?;
        *topic.schema.write() = Some(schema.clone());
        if let Some(dir) = &self.data_dir {
            let meta = TopicMeta {
                name: topic.spec.name.clone(),
                partitions: topic.spec.partitions,
                replication_display: topic.spec.replication_display,
                schema: Some(schema),
            };
            let tdir = dir.join(&topic.spec.name);
            std::fs::write(tdir.join(META_FILE), serde_json::to_vec_pretty(&meta).unwrap())?;
        }
        Ok(())
    }

    pub fn schema_of(&self, name: &str) -> Result<Option<Schema>, BrokerError> {
        Ok(self.lookup(name)?.schema.read().clone())
    }

    /// Appends records, routing each by key hash (round robin when keyless).
    /// Returns `(partition, offset)` per record in input order. The whole
    /// batch is rejected when any record fails the topic schema.
    pub fn produce(
        &self,
        name: &str,
        records: Vec<ProduceRecord>,
    ) -> Result<Vec<(u32, u64)>, BrokerError> {
        let topic = self.lookup(name)?;
        {
            let schema = topic.schema.read();
            for (index, rec) in records.iter().enumerate() {
                let violations = match schema.as_ref() {
                    Some(s) => validate_record(s, &rec.value),
                    None => nan_violations(&rec.value),
                };
                if !violations.is_empty() {
                    return Err(BrokerError::Validation { index, violations });
                }
            }
        }

        let now = chrono::Utc::now().timestamp_millis();
        let n_partitions = topic.spec.partitions;
        // Group into per-partition batches, remembering each record's
        // position so assignments come back in input order.
        let mut by_partition: IndexMap<u32, (Vec<EntryData>, Vec<usize>)> = IndexMap::new();
        for (index, rec) in records.into_iter().enumerate() {
            let rr = topic.round_robin.fetch_add(1, Ordering::Relaxed);
            let partition = partition_for(rec.key.as_deref(), n_partitions, rr);
            let entry = EntryData {
                event_time: rec.event_time.unwrap_or(now),
                key: rec.key,
                value: rec.value,
                headers: rec.headers,
            };
            let slot = by_partition.entry(partition).or_default();
            slot.0.push(entry);
            slot.1.push(index);
        }

        let mut assignments = vec![(0u32, 0u64); by_partition.values().map(|(_, i)| i.len()).sum()];
        for (partition, (batch, indexes)) in by_partition {
            let state = topic.partition(partition)?;
            let mut log = state.log.lock();
            let base = log.append(&batch)?;
            for (i, index) in indexes.into_iter().enumerate() {
                assignments[index] = (partition, base + i as u64);
            }
            state.data.notify_all();
        }
        Ok(assignments)
    }

    /// Long-poll read: returns as soon as records exist at `from`, or an
    /// empty list once `max_wait` elapses.
    pub fn fetch(
        &self,
        name: &str,
        partition: u32,
        from: u64,
        max: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, BrokerError> {
        let topic = self.lookup(name)?;
        let state = topic.partition(partition)?;
        let deadline = Instant::now() + max_wait;
        let mut log = state.log.lock();
        loop {
            let stored = log.read(from, max)?;
            if !stored.is_empty() {
                return Ok(stored
                    .into_iter()
                    .map(|r| materialize(&topic.spec.name, partition, r))
                    .collect());
            }
            if Instant::now() >= deadline {
                return Ok(Vec::new());
            }
            if state.data.wait_until(&mut log, deadline).timed_out() {
                return Ok(Vec::new());
            }
        }
    }

    pub fn end_offset(&self, name: &str, partition: u32) -> Result<u64, BrokerError> {
        let topic = self.lookup(name)?;
        let end = topic.partition(partition)?.log.lock().end_offset();
        Ok(end)
    }

    /// Records the group's next offset to consume. Commits are monotone:
    /// an older commit never moves the position backwards. Returns the
    /// offset in effect afterwards.
    pub fn commit_offset(
        &self,
        group: &str,
        name: &str,
        partition: u32,
        next_offset: u64,
    ) -> Result<u64, BrokerError> {
        let topic = self.lookup(name)?;
        let end = topic.partition(partition)?.log.lock().end_offset();
        if next_offset > end {
            return Err(BrokerError::OffsetBeyondEnd { requested: next_offset, end });
        }
        let committed = {
            let mut groups = self.groups.lock();
            let slot = groups
                .entry(group.to_string())
                .or_default()
                .entry((topic.spec.name.clone(), partition))
                .or_insert(0);
            *slot = (*slot).max(next_offset);
            *slot
        };
        self.journal_commit(group, &topic.spec.name, partition, committed)?;
        Ok(committed)
    }

    /// The group's next offset to consume, or 0 when it never committed.
    pub fn committed_offset(&self, group: &str, name: &str, partition: u32) -> u64 {
        let canonical = canonical_ident(name);
        self.groups
            .lock()
            .get(group)
            .and_then(|g| g.get(&(canonical, partition)))
            .copied()
            .unwrap_or(0)
    }

    fn journal_commit(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
        next_offset: u64,
    ) -> Result<(), BrokerError> {
        let journal = self.lookup(OFFSETS_TOPIC)?;
        let mut value = FieldMap::new();
        value.insert("GROUP_ID".into(), ScalarValue::Text(group.to_string()));
        value.insert("TOPIC".into(), ScalarValue::Text(topic.to_string()));
        value.insert("PARTITION".into(), ScalarValue::Int(partition as i64));
        value.insert("NEXT_OFFSET".into(), ScalarValue::Int(next_offset as i64));
        let entry = EntryData {
            event_time: chrono::Utc::now().timestamp_millis(),
            key: Some(format!("{group}/{topic}/{partition}")),
            value,
            headers: Vec::new(),
        };
        let state = journal.partition(0)?;
        state.log.lock().append(std::slice::from_ref(&entry))?;
        Ok(())
    }

    fn replay_offsets(&self) -> Result<(), BrokerError> {
        let journal = self.lookup(OFFSETS_TOPIC)?;
        let state = journal.partition(0)?;
        let mut from = {
            let log = state.log.lock();
            log.earliest_offset()
        };
        let mut groups = self.groups.lock();
        loop {
            let batch = state.log.lock().read(from, 1024)?;
            if batch.is_empty() {
                break;
            }
            from = batch.last().unwrap().offset + 1;
            for rec in batch {
                let v = &rec.entry.value;
                let (Some(ScalarValue::Text(group)), Some(ScalarValue::Text(topic))) =
                    (v.get("GROUP_ID"), v.get("TOPIC"))
                else {
                    continue;
                };
                let (Some(ScalarValue::Int(partition)), Some(ScalarValue::Int(next))) =
                    (v.get("PARTITION"), v.get("NEXT_OFFSET"))
                else {
                    continue;
                };
                let slot = groups
                    .entry(group.clone())
                    .or_default()
                    .entry((topic.clone(), *partition as u32))
                    .or_insert(0);
                *slot = (*slot).max(*next as u64);
            }
        }
        Ok(())
    }

    pub fn describe_topic(&self, name: &str) -> Result<TopicInfo, BrokerError> {
        let topic = self.lookup(name)?;
        Ok(describe(&topic))
    }

    /// All topics sorted by name. Internal `__`-prefixed topics are
    /// hidden unless asked for, mirroring platform "show internal" toggles.
    pub fn list_topics(&self, include_internal: bool) -> Vec<TopicInfo> {
        let mut infos: Vec<TopicInfo> = self
            .topics
            .read()
            .values()
            .filter(|t| include_internal || !t.spec.name.starts_with("__"))
            .map(|t| describe(t))
            .collect();
        infos.sort_by(|a, b| a.name.cmp(&b.name));
        infos
    }

    /// Claims every unassigned partition of the topic for `subscriber`
    /// within the group and returns `(partition, start offset)` pairs.
    /// Partitions already held by another live subscriber are skipped.
    pub fn subscribe(
        &self,
        group: &str,
        name: &str,
        subscriber: u64,
        position: StartPosition,
    ) -> Result<Vec<(u32, u64)>, BrokerError> {
        let topic = self.lookup(name)?;
        let mut assignments = self.assignments.lock();
        let held = assignments
            .entry((group.to_string(), topic.spec.name.clone()))
            .or_default();
        let mut assigned = Vec::new();
        for p in 0..topic.spec.partitions {
            let owner = held.entry(p).or_insert(subscriber);
            if *owner != subscriber {
                continue;
            }
            let committed = self.committed_offset(group, &topic.spec.name, p);
            let start = if committed > 0 {
                committed
            } else {
                match position {
                    StartPosition::Earliest => topic.partition(p)?.log.lock().earliest_offset(),
                    StartPosition::Latest => topic.partition(p)?.log.lock().end_offset(),
                }
            };
            assigned.push((p, start));
        }
        Ok(assigned)
    }

    /// Releases every partition held by `subscriber` across all groups,
    /// as when its connection closes.
    pub fn unsubscribe(&self, subscriber: u64) {
        let mut assignments = self.assignments.lock();
        for held in assignments.values_mut() {
            held.retain(|_, owner| *owner != subscriber);
        }
        assignments.retain(|_, held| !held.is_empty());
    }

    /// Applies a retention policy to every partition of a topic and
    /// returns the number of deleted segments.
    pub fn enforce_retention(
        &self,
        name: &str,
        policy: &RetentionPolicy,
    ) -> Result<usize, BrokerError> {
        let topic = self.lookup(name)?;
        let now = chrono::Utc::now().timestamp_millis();
        let mut deleted = 0;
        for state in &topic.partitions {
            deleted += state.log.lock().enforce_retention(policy, now)?;
        }
        Ok(deleted)
    }
}

/// The producer and consumer surface a broker client needs, abstracted
/// over transport. The in-process `Broker` implements it directly; the
/// TCP `Connection` implements it by speaking the protocol, so the same
/// connector code runs embedded or against a remote daemon.
pub trait BrokerApi: Send + Sync {
    fn create_topic(&self, spec: TopicSpec, schema: Option<Schema>) -> Result<(), BrokerError>;
    fn attach_schema(&self, topic: &str, schema: Schema) -> Result<(), BrokerError>;
    fn schema_of(&self, topic: &str) -> Result<Option<Schema>, BrokerError>;
    fn describe_topic(&self, topic: &str) -> Result<TopicInfo, BrokerError>;
    fn produce(
        &self,
        topic: &str,
        records: Vec<ProduceRecord>,
    ) -> Result<Vec<(u32, u64)>, BrokerError>;
    fn fetch(
        &self,
        topic: &str,
        partition: u32,
        from: u64,
        max: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, BrokerError>;
    fn commit_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
        next_offset: u64,
    ) -> Result<u64, BrokerError>;
    fn committed_offset(&self, group: &str, topic: &str, partition: u32)
        -> Result<u64, BrokerError>;
    fn end_offset(&self, topic: &str, partition: u32) -> Result<u64, BrokerError>;
}

impl BrokerApi for Broker {
    fn create_topic(&self, spec: TopicSpec, schema: Option<Schema>) -> Result<(), BrokerError> {
        Broker::create_topic(self, spec, schema).map(drop)
    }

    fn attach_schema(&self, topic: &str, schema: Schema) -> Result<(), BrokerError> {
        Broker::attach_schema(self, topic, schema)
    }

    fn schema_of(&self, topic: &str) -> Result<Option<Schema>, BrokerError> {
        Broker::schema_of(self, topic)
    }

    fn describe_topic(&self, topic: &str) -> Result<TopicInfo, BrokerError> {
        Broker::describe_topic(self, topic)
    }

    fn produce(
        &self,
        topic: &str,
        records: Vec<ProduceRecord>,
    ) -> Result<Vec<(u32, u64)>, BrokerError> {
        Broker::produce(self, topic, records)
    }

    fn fetch(
        &self,
        topic: &str,
        partition: u32,
        from: u64,
        max: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, BrokerError> {
        Broker::fetch(self, topic, partition, from, max, max_wait)
    }

    fn commit_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
        next_offset: u64,
    ) -> Result<u64, BrokerError> {
        Broker::commit_offset(self, group, topic, partition, next_offset)
    }

    fn committed_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
    ) -> Result<u64, BrokerError> {
        Ok(Broker::committed_offset(self, group, topic, partition))
    }

    fn end_offset(&self, topic: &str, partition: u32) -> Result<u64, BrokerError> {
        Broker::end_offset(self, topic, partition)
    }
}

fn describe(topic: &Topic) -> TopicInfo {
    let end_offsets = topic.partitions.iter().map(|p| p.log.lock().end_offset()).collect();
    TopicInfo {
        name: topic.spec.name.clone(),
        partitions: topic.spec.partitions,
        replication_display: topic.spec.replication_display,
        percent_in_sync: 100,
        end_offsets,
        schema: topic.schema.read().clone(),
    }
}

fn materialize(topic: &str, partition: u32, stored: StoredRecord) -> Record {
    Record {
        topic: topic.to_string(),
        partition,
        offset: stored.offset,
        event_time: stored.entry.event_time,
        key: stored.entry.key,
        value: stored.entry.value,
        headers: stored.entry.headers,
    }
}

fn nan_violations(value: &FieldMap) -> Vec<Violation> {
    value
        .iter()
        .filter(|(_, v)| matches!(v, ScalarValue::Float(f) if f.is_nan()))
        .map(|(name, _)| Violation {
            field: name.clone(),
            reason: "NaN is not a valid field value".into(),
        })
        .collect()
}
