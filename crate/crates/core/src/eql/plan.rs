//! Turns an analyzed SELECT into the operator chain a task executes.
//! Operator order is fixed: filter, then computed columns, then the
//! windowed stage, then the final projection.

use crate::eql::analyze::AnalyzedSelect;
use crate::engine::runtime::{OperatorSpec, Topology};

pub fn plan_operators(a: &AnalyzedSelect) -> Vec<OperatorSpec> {
    let mut ops = Vec::new();
    if let Some(predicate) = &a.filter {
        ops.push(OperatorSpec::Filter { predicate: predicate.clone() });
    }
    if !a.assignments.is_empty() {
        ops.push(OperatorSpec::Map { assignments: a.assignments.clone() });
    }
    if !a.aggregates.is_empty() {
        ops.push(OperatorSpec::Aggregation {
            window: a.window.expect("aggregates imply a window"),
            aggregates: a.aggregates.clone(),
            group_by: a.group_by.clone(),
        });
    }
    if let Some(predicate) = &a.negation {
        ops.push(OperatorSpec::Negation {
            window: a.window.expect("absence implies a window"),
            predicate: predicate.clone(),
        });
    }
    if let Some(fields) = &a.projection {
        ops.push(OperatorSpec::Projection { fields: fields.clone() });
    }
    ops
}

/// Builds the runnable topology for a persistent query writing to
/// `output` (the topic backing the derived stream).
pub fn plan_topology(name: &str, a: &AnalyzedSelect, output: &str) -> Topology {
    Topology {
        name: name.to_string(),
        source: a.source.topic.clone(),
        output: output.to_string(),
        operators: plan_operators(a),
        output_schema: Some(a.output_schema.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eql::analyze::{analyze_select, ResolvedSource};
    use crate::eql::parser::parse_statement;
    use crate::eql::Statement;
    use crate::model::{FieldDef, Record, ScalarType, ScalarValue, Schema};

    fn source() -> ResolvedSource {
        ResolvedSource {
            stream: "RAIN".into(),
            topic: "RAIN".into(),
            schema: Schema::new(vec![
                FieldDef::new("STATION", ScalarType::Text, false),
                FieldDef::new("RAIN_MM", ScalarType::Float, false),
            ])
            .unwrap(),
        }
    }

    fn plan(text: &str) -> Vec<OperatorSpec> {
        let Statement::Select(stmt) = parse_statement(text).unwrap() else { panic!() };
        let resolve = |name: &str| (name == "RAIN").then(source);
        plan_operators(&analyze_select(&stmt, &resolve, true).unwrap())
    }

    #[test]
    fn star_plans_to_nothing() {
        assert!(plan("SELECT * FROM RAIN;").is_empty());
    }

    #[test]
    fn filter_map_projection_in_order() {
        let ops = plan(
            "SELECT (RAIN_MM - 5) * 0.75 AS VALUE FROM RAIN WHERE RAIN_MM > 5 EMIT CHANGES;",
        );
        assert_eq!(ops.len(), 3);
        assert!(matches!(&ops[0], OperatorSpec::Filter { .. }));
        assert!(matches!(&ops[1], OperatorSpec::Map { .. }));
        assert!(matches!(&ops[2], OperatorSpec::Projection { fields } if fields == &["VALUE"]));
    }

    #[test]
    fn aggregation_has_no_trailing_projection() {
        let ops = plan(
            "SELECT STATION, SUM(RAIN_MM) AS TOTAL FROM RAIN \
             WINDOW TUMBLING (SIZE 5 MINUTES) GROUP BY STATION EMIT CHANGES;",
        );
        assert_eq!(ops.len(), 1);
        let OperatorSpec::Aggregation { window, aggregates, group_by } = &ops[0] else {
            panic!()
        };
        assert_eq!(window.size_ms, 300_000);
        assert_eq!(aggregates.len(), 1);
        assert_eq!(group_by, &["STATION"]);
    }

    #[test]
    fn absence_moves_where_into_negation() {
        let ops = plan(
            "SELECT * FROM RAIN WHERE RAIN_MM > 0 WINDOW TUMBLING (SIZE 1 HOURS) EMIT ABSENCE;",
        );
        assert_eq!(ops.len(), 1);
        assert!(matches!(&ops[0], OperatorSpec::Negation { .. }));
    }

    /// The planned chain really computes the derived value: a record at
    /// 287.4 mm yields 211.8 through the planned operators.
    #[test]
    fn planned_chain_computes_derived_value() {
        use crate::engine::runtime::Pipeline;
        let ops = plan("SELECT (RAIN_MM - 5) * 0.75 AS VALUE FROM RAIN EMIT CHANGES;");
        let mut pipeline = Pipeline::new(&ops);
        let mut value = crate::model::FieldMap::new();
        value.insert("STATION".into(), ScalarValue::Text("S1".into()));
        value.insert("RAIN_MM".into(), ScalarValue::Float(287.4));
        let out = pipeline.push(&Record::new("RAIN", 0, None, value));
        assert_eq!(out.len(), 1);
        let got = match out[0].value.get("VALUE") {
            Some(ScalarValue::Float(f)) => *f,
            other => panic!("{other:?}"),
        };
        assert!((got - 211.8).abs() < 1e-9);
        assert_eq!(out[0].value.len(), 1);
    }
}
