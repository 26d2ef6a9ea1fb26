//! Randomized equivalence check: windowed aggregation against a naive
//! oracle that scans every candidate window and every record directly.

use estemd_core::engine::{AggFunc, AggSpec, WindowAggState, WindowSpec};
use estemd_core::model::{FieldMap, Record, ScalarValue};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use std::collections::BTreeMap;

const TRIALS: usize = 200;
const MAX_RECORDS: usize = 1000;
const TIME_RANGE_MS: i64 = 2_000_000;

#[derive(Clone, Debug)]
struct Row {
    t: i64,
    v: Option<ScalarValue>,
    g: Option<String>,
}

fn close_enough(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn as_f64(v: &ScalarValue) -> f64 {
    match v {
        ScalarValue::Int(i) => *i as f64,
        ScalarValue::Float(f) => *f,
        other => panic!("non-numeric {other:?}"),
    }
}

/// Directly computes every aggregate for one window's rows, walking them
/// in arrival order just like the fold does.
fn oracle_window(rows: &[&Row]) -> BTreeMap<String, ScalarValue> {
    let present: Vec<&ScalarValue> = rows.iter().filter_map(|r| r.v.as_ref()).collect();
    let mut out = BTreeMap::new();
    out.insert("A_ALL".into(), ScalarValue::Int(rows.len() as i64));
    out.insert("A_CNT".into(), ScalarValue::Int(present.len() as i64));
    if present.is_empty() {
        for name in ["A_AVG", "A_SUM", "A_MIN", "A_MAX"] {
            out.insert(name.into(), ScalarValue::Null);
        }
        return out;
    }
    let sum_f: f64 = present.iter().map(|v| as_f64(v)).sum();
    out.insert("A_AVG".into(), ScalarValue::Float(sum_f / present.len() as f64));
    let all_int = present.iter().all(|v| matches!(v, ScalarValue::Int(_)));
    let sum = if all_int {
        let s: i64 = present
            .iter()
            .map(|v| match v {
                ScalarValue::Int(i) => *i,
                _ => unreachable!(),
            })
            .sum();
        ScalarValue::Int(s)
    } else {
        ScalarValue::Float(sum_f)
    };
    out.insert("A_SUM".into(), sum);
    let mut min = present[0].clone();
    let mut max = present[0].clone();
    for v in &present[1..] {
        if as_f64(v) < as_f64(&min) {
            min = (*v).clone();
        }
        if as_f64(v) > as_f64(&max) {
            max = (*v).clone();
        }
    }
    out.insert("A_MIN".into(), min);
    out.insert("A_MAX".into(), max);
    out
}

fn scalar_matches(got: &ScalarValue, want: &ScalarValue) -> bool {
    match (got, want) {
        (ScalarValue::Null, ScalarValue::Null) => true,
        (ScalarValue::Int(a), ScalarValue::Int(b)) => a == b,
        (ScalarValue::Float(a), ScalarValue::Float(b)) => close_enough(*a, *b),
        _ => false,
    }
}

fn aggs() -> Vec<AggSpec> {
    vec![
        AggSpec::new(AggFunc::Avg, Some("V"), "A_AVG"),
        AggSpec::new(AggFunc::Sum, Some("V"), "A_SUM"),
        AggSpec::new(AggFunc::Count, Some("V"), "A_CNT"),
        AggSpec::new(AggFunc::Count, None, "A_ALL"),
        AggSpec::new(AggFunc::Min, Some("V"), "A_MIN"),
        AggSpec::new(AggFunc::Max, Some("V"), "A_MAX"),
    ]
}

fn run_trial(rng: &mut StdRng, trial: usize) {
    let size_ms = rng.gen_range(1..=60) * 1000;
    let hopping = rng.gen_bool(0.5);
    let spec = if hopping {
        let advance_ms = rng.gen_range(1..=size_ms / 1000) * 1000;
        WindowSpec::hopping(size_ms, advance_ms).unwrap()
    } else {
        WindowSpec::tumbling(size_ms).unwrap()
    };
    let grouped = rng.gen_bool(0.5);

    let n = rng.gen_range(1..=MAX_RECORDS);
    let mut rows: Vec<Row> = (0..n)
        .map(|_| {
            let v = if rng.gen_bool(0.1) {
                None
            } else if rng.gen_bool(0.5) {
                Some(ScalarValue::Int(rng.gen_range(-1_000_000..1_000_000)))
            } else {
                Some(ScalarValue::Float(rng.gen_range(-1.0e6..1.0e6)))
            };
            Row {
                t: rng.gen_range(0..TIME_RANGE_MS),
                v,
                g: grouped.then(|| ["A", "B", "C"][rng.gen_range(0..3)].to_string()),
            }
        })
        .collect();
    // In-order arrival so no record is late and every one folds.
    rows.sort_by_key(|r| r.t);

    let group_by: Vec<String> = if grouped { vec!["G".into()] } else { Vec::new() };
    let mut state = WindowAggState::new(spec, aggs(), group_by);
    let mut emitted = Vec::new();
    for (offset, row) in rows.iter().enumerate() {
        let mut value = FieldMap::new();
        value.insert("V".into(), row.v.clone().unwrap_or(ScalarValue::Null));
        if let Some(g) = &row.g {
            value.insert("G".into(), ScalarValue::Text(g.clone()));
        }
        let record = Record {
            topic: "T".into(),
            partition: 0,
            offset: offset as u64,
            event_time: row.t,
            key: None,
            value,
            headers: Vec::new(),
        };
        emitted.extend(state.fold(&record));
    }
    let max_t = rows.last().unwrap().t;
    emitted.extend(state.tick(max_t + size_ms + 1));
    assert_eq!(state.late_records(), 0, "trial {trial}: sorted feed has no late records");

    // Every candidate start in range, tested by plain inequalities.
    let advance = spec.advance_ms;
    let mut expected: BTreeMap<(i64, Option<String>), BTreeMap<String, ScalarValue>> =
        BTreeMap::new();
    let mut start = 0i64;
    while start <= max_t {
        for group in if grouped {
            vec![Some("A".to_string()), Some("B".to_string()), Some("C".to_string())]
        } else {
            vec![None]
        } {
            let members: Vec<&Row> = rows
                .iter()
                .filter(|r| r.t >= start && r.t < start + size_ms && r.g == group)
                .collect();
            if !members.is_empty() {
                expected.insert((start, group), oracle_window(&members));
            }
        }
        start += advance;
    }

    assert_eq!(
        emitted.len(),
        expected.len(),
        "trial {trial} ({spec:?}): emission count differs"
    );
    for emit in &emitted {
        let group = emit.value.get("G").map(|g| match g {
            ScalarValue::Text(s) => s.clone(),
            other => panic!("group field {other:?}"),
        });
        let want = expected
            .get(&(emit.window_start, group.clone()))
            .unwrap_or_else(|| panic!("trial {trial}: unexpected window {emit:?}"));
        assert_eq!(emit.window_end, emit.window_start + size_ms);
        for (name, want_v) in want {
            let got_v = emit
                .value
                .get(name)
                .unwrap_or_else(|| panic!("trial {trial}: missing {name}"));
            assert!(
                scalar_matches(got_v, want_v),
                "trial {trial} window {} group {group:?} {name}: got {got_v:?} want {want_v:?}",
                emit.window_start
            );
        }
    }
}

#[test]
fn randomized_windows_agree_with_brute_force() {
    let mut rng = StdRng::seed_from_u64(0x57A7E5);
    for trial in 0..TRIALS {
        run_trial(&mut rng, trial);
    }
}
