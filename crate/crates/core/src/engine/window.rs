//! Event-time windowing: tumbling and hopping specs, per-window aggregate
//! state, and the absence (negation) pattern.
//!
//! The watermark is the maximum event time observed. A window [s, s+size)
//! closes once watermark ≥ s + size + grace; closing emits exactly once,
//! and records whose windows have all closed are dropped as late. Window
//! starts align to multiples of the advance from epoch 0, so bucketing is
//! independent of arrival order and first-record time.

use crate::codec::scalar_to_json;
use crate::engine::expr::{compare_scalars, Expr};
use crate::model::{FieldMap, Record, ScalarValue, TimestampMs};
use indexmap::IndexMap;
use std::collections::BTreeMap;

pub const WINDOW_START_FIELD: &str = "WINDOW_START";
pub const WINDOW_END_FIELD: &str = "WINDOW_END";
pub const ABSENT_FIELD: &str = "ABSENT";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Tumbling,
    Hopping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum WindowSpecError {
    #[error("window size must be positive")]
    ZeroSize,
    #[error("hopping advance must satisfy 0 < advance <= size")]
    BadAdvance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub size_ms: i64,
    pub advance_ms: i64,
    pub grace_ms: i64,
}

impl WindowSpec {
    pub fn tumbling(size_ms: i64) -> Result<WindowSpec, WindowSpecError> {
        if size_ms <= 0 {
            return Err(WindowSpecError::ZeroSize);
        }
        Ok(WindowSpec { kind: WindowKind::Tumbling, size_ms, advance_ms: size_ms, grace_ms: 0 })
    }

    pub fn hopping(size_ms: i64, advance_ms: i64) -> Result<WindowSpec, WindowSpecError> {
        if size_ms <= 0 {
            return Err(WindowSpecError::ZeroSize);
        }
        if advance_ms <= 0 || advance_ms > size_ms {
            return Err(WindowSpecError::BadAdvance);
        }
        Ok(WindowSpec { kind: WindowKind::Hopping, size_ms, advance_ms, grace_ms: 0 })
    }

    pub fn with_grace(mut self, grace_ms: i64) -> WindowSpec {
        self.grace_ms = grace_ms.max(0);
        self
    }

    pub fn align_down(&self, t: TimestampMs) -> i64 {
        t.div_euclid(self.advance_ms) * self.advance_ms
    }

    /// Starts of every window covering event time `t`, ascending, never
    /// negative. A tumbling spec yields exactly one.
    pub fn covering_starts(&self, t: TimestampMs) -> Vec<i64> {
        let mut s = {
            let lo = t - self.size_ms + 1;
            let aligned = self.align_down(lo);
            if aligned < lo {
                aligned + self.advance_ms
            } else {
                aligned
            }
        };
        s = s.max(0);
        let mut out = Vec::new();
        while s <= t {
            out.push(s);
            s += self.advance_ms;
        }
        out
    }

    /// The last (newest) window start covering `t`.
    pub fn last_covering_start(&self, t: TimestampMs) -> i64 {
        self.align_down(t.max(0))
    }

    /// Origin for absence tracking on the first stimulus: one window span
    /// back from `t`, aligned, clamped at epoch 0. Keeps the backlog of
    /// empty windows bounded no matter how large the first timestamp is.
    pub fn absence_origin(&self, t: TimestampMs) -> i64 {
        self.align_down((t - self.size_ms).max(0))
    }

    fn closes_at_or_before(&self, start: i64, watermark: i64) -> bool {
        start + self.size_ms + self.grace_ms <= watermark
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Avg,
    Sum,
    Count,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Avg => "AVG",
            AggFunc::Sum => "SUM",
            AggFunc::Count => "COUNT",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }

    pub fn parse(name: &str) -> Option<AggFunc> {
        match name.to_ascii_uppercase().as_str() {
            "AVG" => Some(AggFunc::Avg),
            "SUM" => Some(AggFunc::Sum),
            "COUNT" => Some(AggFunc::Count),
            "MIN" => Some(AggFunc::Min),
            "MAX" => Some(AggFunc::Max),
            _ => None,
        }
    }
}

/// One aggregate column: function, input field (None = COUNT(*)), output
/// alias.
#[derive(Debug, Clone, PartialEq)]
pub struct AggSpec {
    pub func: AggFunc,
    pub field: Option<String>,
    pub alias: String,
}

impl AggSpec {
    pub fn new(func: AggFunc, field: Option<&str>, alias: &str) -> AggSpec {
        AggSpec {
            func,
            field: field.map(crate::model::canonical_ident),
            alias: crate::model::canonical_ident(alias),
        }
    }
}

/// A record emitted by a closing window; event time is the window end.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowEmit {
    pub window_start: i64,
    pub window_end: i64,
    pub key: Option<String>,
    pub value: FieldMap,
}

#[derive(Debug, Default)]
struct Acc {
    count: u64,
    sum_f: f64,
    sum_i: i128,
    saw_float: bool,
    min: Option<ScalarValue>,
    max: Option<ScalarValue>,
}

impl Acc {
    fn fold(&mut self, v: &ScalarValue) {
        self.count += 1;
        match v {
            ScalarValue::Int(i) => {
                self.sum_i += *i as i128;
                self.sum_f += *i as f64;
            }
            ScalarValue::Float(f) => {
                self.saw_float = true;
                self.sum_f += *f;
            }
            _ => {}
        }
        for slot in [&mut self.min, &mut self.max] {
            if slot.is_none() {
                *slot = Some(v.clone());
            }
        }
        if let Some(m) = &self.min {
            if compare_scalars(v, m).is_some_and(|o| o.is_lt()) {
                self.min = Some(v.clone());
            }
        }
        if let Some(m) = &self.max {
            if compare_scalars(v, m).is_some_and(|o| o.is_gt()) {
                self.max = Some(v.clone());
            }
        }
    }

    fn finalize(&self, func: AggFunc) -> ScalarValue {
        match func {
            AggFunc::Count => ScalarValue::Int(self.count as i64),
            AggFunc::Avg => {
                if self.count == 0 {
                    ScalarValue::Null
                } else {
                    ScalarValue::Float(self.sum_f / self.count as f64)
                }
            }
            AggFunc::Sum => {
                if self.count == 0 {
                    ScalarValue::Null
                } else if self.saw_float {
                    ScalarValue::Float(self.sum_f)
                } else {
                    ScalarValue::Int(self.sum_i.clamp(i64::MIN as i128, i64::MAX as i128) as i64)
                }
            }
            AggFunc::Min => self.min.clone().unwrap_or(ScalarValue::Null),
            AggFunc::Max => self.max.clone().unwrap_or(ScalarValue::Null),
        }
    }
}

struct GroupAcc {
    key_values: Vec<ScalarValue>,
    accs: Vec<Acc>,
}

struct Bucket {
    groups: IndexMap<String, GroupAcc>,
    min_offset: u64,
}

/// Windowed aggregation state for one partition of one topology.
pub struct WindowAggState {
    spec: WindowSpec,
    aggs: Vec<AggSpec>,
    group_by: Vec<String>,
    windows: BTreeMap<i64, Bucket>,
    watermark: Option<i64>,
    late: u64,
}

fn group_key_string(values: &[ScalarValue]) -> String {
    values
        .iter()
        .map(|v| scalar_to_json(v).to_string())
        .collect::<Vec<_>>()
        .join("\u{1f}")
}

impl WindowAggState {
    pub fn new(spec: WindowSpec, aggs: Vec<AggSpec>, group_by: Vec<String>) -> WindowAggState {
        let group_by = group_by.iter().map(|g| crate::model::canonical_ident(g)).collect();
        WindowAggState { spec, aggs, group_by, windows: BTreeMap::new(), watermark: None, late: 0 }
    }

    pub fn watermark(&self) -> Option<i64> {
        self.watermark
    }

    pub fn late_records(&self) -> u64 {
        self.late
    }

    /// Smallest source offset still needed to rebuild open-window state;
    /// None when no window is open.
    pub fn replay_floor(&self) -> Option<u64> {
        self.windows.values().map(|b| b.min_offset).min()
    }

    /// Folds one record and returns every window closed by the watermark
    /// it carried, oldest first.
    pub fn fold(&mut self, record: &Record) -> Vec<WindowEmit> {
        let t = record.event_time;
        let pre_watermark = self.watermark.unwrap_or(i64::MIN);
        let open: Vec<i64> = self
            .spec
            .covering_starts(t)
            .into_iter()
            .filter(|s| !self.spec.closes_at_or_before(*s, pre_watermark))
            .collect();
        if open.is_empty() {
            // Every window for this event time has already closed.
            self.late += 1;
            return Vec::new();
        }

        let key_values: Vec<ScalarValue> = self
            .group_by
            .iter()
            .map(|g| record.value.get(g).cloned().unwrap_or(ScalarValue::Null))
            .collect();
        let key = group_key_string(&key_values);
        for start in open {
            let bucket = self
                .windows
                .entry(start)
                .or_insert_with(|| Bucket { groups: IndexMap::new(), min_offset: record.offset });
            bucket.min_offset = bucket.min_offset.min(record.offset);
            let group = bucket.groups.entry(key.clone()).or_insert_with(|| GroupAcc {
                key_values: key_values.clone(),
                accs: self.aggs.iter().map(|_| Acc::default()).collect(),
            });
            for (agg, acc) in self.aggs.iter().zip(&mut group.accs) {
                match &agg.field {
                    None => acc.count += 1,
                    Some(f) => match record.value.get(f) {
                        None | Some(ScalarValue::Null) => {}
                        Some(v) => acc.fold(v),
                    },
                }
            }
        }

        self.watermark = Some(pre_watermark.max(t));
        self.close_due()
    }

    /// Advances the watermark without folding a record, closing whatever
    /// becomes due. Used by tests and end-of-stream flushes.
    pub fn tick(&mut self, t: TimestampMs) -> Vec<WindowEmit> {
        self.watermark = Some(self.watermark.unwrap_or(i64::MIN).max(t));
        self.close_due()
    }

    fn close_due(&mut self) -> Vec<WindowEmit> {
        let Some(watermark) = self.watermark else {
            return Vec::new();
        };
        let mut out = Vec::new();
        while let Some((&start, _)) = self.windows.first_key_value() {
            if !self.spec.closes_at_or_before(start, watermark) {
                break;
            }
            let bucket = self.windows.remove(&start).expect("bucket exists");
            let end = start + self.spec.size_ms;
            for (_, group) in bucket.groups {
                let mut value = FieldMap::new();
                value.insert(WINDOW_START_FIELD.into(), ScalarValue::Timestamp(start));
                value.insert(WINDOW_END_FIELD.into(), ScalarValue::Timestamp(end));
                for (name, v) in self.group_by.iter().zip(&group.key_values) {
                    value.insert(name.clone(), v.clone());
                }
                for (agg, acc) in self.aggs.iter().zip(&group.accs) {
                    value.insert(agg.alias.clone(), acc.finalize(agg.func));
                }
                let key = if self.group_by.is_empty() {
                    None
                } else {
                    Some(group_key_string(&group.key_values))
                };
                out.push(WindowEmit { window_start: start, window_end: end, key, value });
            }
        }
        out
    }
}

/// A stimulus for absence tracking: a record, or a bare watermark advance.
pub enum Stimulus<'a> {
    Record(&'a Record),
    Tick(TimestampMs),
}

/// Absence detection: per window, emit one record iff no record matching
/// the predicate arrived before the window closed.
pub struct NegationState {
    spec: WindowSpec,
    predicate: Expr,
    /// Start of the oldest window not yet closed; set on first stimulus.
    next_start: Option<i64>,
    /// Open windows in which a matching record was seen.
    matched: BTreeMap<i64, bool>,
    /// Newest covering window start → smallest offset folded there, for
    /// the replay floor.
    pending: BTreeMap<i64, u64>,
    watermark: Option<i64>,
    late: u64,
}

impl NegationState {
    pub fn new(spec: WindowSpec, predicate: Expr) -> NegationState {
        NegationState {
            spec,
            predicate,
            next_start: None,
            matched: BTreeMap::new(),
            pending: BTreeMap::new(),
            watermark: None,
            late: 0,
        }
    }

    pub fn late_records(&self) -> u64 {
        self.late
    }

    pub fn replay_floor(&self) -> Option<u64> {
        self.pending.values().copied().min()
    }

    pub fn advance(&mut self, stimulus: Stimulus<'_>) -> Vec<WindowEmit> {
        let t = match &stimulus {
            Stimulus::Record(r) => r.event_time,
            Stimulus::Tick(t) => *t,
        };
        let origin = *self.next_start.get_or_insert_with(|| self.spec.absence_origin(t));

        if let Stimulus::Record(record) = stimulus {
            let last = self.spec.last_covering_start(t);
            if last < origin {
                self.late += 1;
                return Vec::new();
            }
            let entry = self.pending.entry(last).or_insert(record.offset);
            *entry = (*entry).min(record.offset);
            if self.predicate.eval(&record.value) == ScalarValue::Bool(true) {
                for s in self.spec.covering_starts(t) {
                    if s >= origin {
                        self.matched.insert(s, true);
                    }
                }
            }
        }

        self.watermark = Some(self.watermark.unwrap_or(i64::MIN).max(t));
        self.close_due()
    }

    fn close_due(&mut self) -> Vec<WindowEmit> {
        let (Some(watermark), Some(mut next)) = (self.watermark, self.next_start) else {
            return Vec::new();
        };
        let mut out = Vec::new();
        while self.spec.closes_at_or_before(next, watermark) {
            if !self.matched.remove(&next).unwrap_or(false) {
                let end = next + self.spec.size_ms;
                let mut value = FieldMap::new();
                value.insert(WINDOW_START_FIELD.into(), ScalarValue::Timestamp(next));
                value.insert(WINDOW_END_FIELD.into(), ScalarValue::Timestamp(end));
                value.insert(ABSENT_FIELD.into(), ScalarValue::Bool(true));
                out.push(WindowEmit { window_start: next, window_end: end, key: None, value });
            }
            next += self.spec.advance_ms;
        }
        self.next_start = Some(next);
        self.pending = self.pending.split_off(&next);
        out
    }
}
