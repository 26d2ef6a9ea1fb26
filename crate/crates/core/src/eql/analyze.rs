//! Semantic analysis: resolves the source, type-checks expressions, and
//! shapes the output schema before any operator runs.

use crate::eql::ast::{ColumnDef, EmitKind, SelectItem, SelectStmt, WindowClause};
use crate::eql::EqlError;
use crate::engine::expr::Expr;
use crate::engine::window::{
    AggFunc, AggSpec, WindowKind, WindowSpec, ABSENT_FIELD, WINDOW_END_FIELD, WINDOW_START_FIELD,
};
use crate::model::{canonical_ident, is_valid_ident, FieldDef, Schema, ScalarType, ScalarValue};

/// What a FROM clause resolved to: a registered stream or a bare topic
/// with an attached schema.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedSource {
    pub stream: String,
    pub topic: String,
    pub schema: Schema,
}

/// External encoding declared for a stream; the broker stores typed
/// fields either way, connectors honor this on the edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    Json,
    Csv,
}

/// A type-checked SELECT, ready for planning.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzedSelect {
    pub source: ResolvedSource,
    pub filter: Option<Expr>,
    /// Computed output columns, evaluated against the source record.
    pub assignments: Vec<(String, Expr)>,
    /// Final field order; None means pass-through (SELECT *).
    pub projection: Option<Vec<String>>,
    pub window: Option<WindowSpec>,
    pub aggregates: Vec<AggSpec>,
    pub group_by: Vec<String>,
    /// EMIT ABSENCE predicate; windows with no matching record emit.
    pub negation: Option<Expr>,
    pub limit: Option<u64>,
    pub output_schema: Schema,
}

fn semantic(message: impl Into<String>) -> EqlError {
    EqlError::Semantic(message.into())
}

fn window_spec(clause: &WindowClause) -> Result<WindowSpec, EqlError> {
    let size_ms = (clause.size as i64)
        .checked_mul(clause.size_unit.ms())
        .ok_or_else(|| semantic("window size overflows"))?;
    match clause.kind {
        WindowKind::Tumbling => {
            if clause.advance.is_some() {
                return Err(semantic("TUMBLING windows take no ADVANCE BY"));
            }
            WindowSpec::tumbling(size_ms).map_err(|e| semantic(e.to_string()))
        }
        WindowKind::Hopping => {
            let (n, unit) = clause
                .advance
                .ok_or_else(|| semantic("HOPPING windows require ADVANCE BY"))?;
            let advance_ms = (n as i64)
                .checked_mul(unit.ms())
                .ok_or_else(|| semantic("window advance overflows"))?;
            WindowSpec::hopping(size_ms, advance_ms).map_err(|e| semantic(e.to_string()))
        }
    }
}

fn check_boolean(expr: &Expr, schema: &Schema, clause: &str) -> Result<(), EqlError> {
    match expr.infer_type(schema).map_err(|e| semantic(e.to_string()))? {
        None | Some(ScalarType::Bool) => Ok(()),
        Some(other) => Err(semantic(format!("{clause} must be boolean, got {}", other.name()))),
    }
}

pub fn analyze_select(
    stmt: &SelectStmt,
    resolve: &dyn Fn(&str) -> Option<ResolvedSource>,
    persistent: bool,
) -> Result<AnalyzedSelect, EqlError> {
    let source =
        resolve(&stmt.from).ok_or_else(|| EqlError::UnknownSource(stmt.from.clone()))?;
    let schema = &source.schema;

    if persistent && stmt.limit.is_some() {
        return Err(semantic("LIMIT is only allowed in interactive SELECT"));
    }
    let window = stmt.window.as_ref().map(window_spec).transpose()?;
    for g in &stmt.group_by {
        if schema.field(g).is_none() {
            return Err(semantic(format!("unknown column {g} in GROUP BY")));
        }
    }

    if stmt.emit == Some(EmitKind::Absence) {
        return analyze_absence(stmt, source, window);
    }

    // SELECT * becomes one bare-field item per source column.
    let items: Vec<SelectItem> = stmt
        .items
        .iter()
        .flat_map(|item| match item {
            SelectItem::Star => schema
                .field_names()
                .map(|f| SelectItem::Expr { expr: Expr::field(f), alias: None })
                .collect(),
            other => vec![other.clone()],
        })
        .collect();
    let has_aggregates = items.iter().any(|i| matches!(i, SelectItem::Aggregate { .. }));

    if has_aggregates && window.is_none() {
        return Err(semantic("aggregate functions require a WINDOW clause"));
    }
    if window.is_some() && !has_aggregates {
        return Err(semantic("WINDOW requires aggregate functions or EMIT ABSENCE"));
    }
    if !has_aggregates && !stmt.group_by.is_empty() {
        return Err(semantic("GROUP BY requires aggregate functions"));
    }
    if let Some(w) = &stmt.where_clause {
        check_boolean(w, schema, "WHERE")?;
    }

    if has_aggregates {
        analyze_aggregated(stmt, source, window.expect("checked"), items)
    } else {
        analyze_plain(stmt, source, items)
    }
}

fn analyze_absence(
    stmt: &SelectStmt,
    source: ResolvedSource,
    window: Option<WindowSpec>,
) -> Result<AnalyzedSelect, EqlError> {
    let window = window.ok_or_else(|| semantic("EMIT ABSENCE requires a WINDOW clause"))?;
    let predicate = stmt
        .where_clause
        .clone()
        .ok_or_else(|| semantic("EMIT ABSENCE requires a WHERE clause"))?;
    if stmt.items != [SelectItem::Star] {
        return Err(semantic("EMIT ABSENCE emits fixed absence rows; use SELECT *"));
    }
    if !stmt.group_by.is_empty() {
        return Err(semantic("EMIT ABSENCE does not support GROUP BY"));
    }
    check_boolean(&predicate, &source.schema, "WHERE")?;
    let output_schema = Schema::new(vec![
        FieldDef::new(WINDOW_START_FIELD, ScalarType::Timestamp, false),
        FieldDef::new(WINDOW_END_FIELD, ScalarType::Timestamp, false),
        FieldDef::new(ABSENT_FIELD, ScalarType::Bool, false),
    ])
    .expect("fixed absence schema");
    Ok(AnalyzedSelect {
        source,
        filter: None,
        assignments: Vec::new(),
        projection: None,
        window: Some(window),
        aggregates: Vec::new(),
        group_by: Vec::new(),
        negation: Some(predicate),
        limit: stmt.limit,
        output_schema,
    })
}

fn analyze_aggregated(
    stmt: &SelectStmt,
    source: ResolvedSource,
    window: WindowSpec,
    items: Vec<SelectItem>,
) -> Result<AnalyzedSelect, EqlError> {
    let schema = &source.schema;
    let mut aggregates = Vec::new();
    let mut agg_fields = Vec::new();
    let mut grouped_seen = Vec::new();
    for (i, item) in items.iter().enumerate() {
        match item {
            SelectItem::Aggregate { func, field, alias } => {
                if let Some(field) = field {
                    let def = schema
                        .field(field)
                        .ok_or_else(|| semantic(format!("unknown column {field}")))?;
                    let numeric = matches!(def.ty, ScalarType::Int | ScalarType::Float);
                    if matches!(func, AggFunc::Avg | AggFunc::Sum) && !numeric {
                        return Err(semantic(format!(
                            "{} requires a numeric column, {field} is {}",
                            func.name(),
                            def.ty.name()
                        )));
                    }
                    let name = alias.clone().unwrap_or_else(|| format!("COL_{}", i + 1));
                    agg_fields.push(agg_field_def(&name, *func, Some(def.ty)));
                    aggregates.push(AggSpec::new(*func, Some(field), &name));
                } else {
                    let name = alias.clone().unwrap_or_else(|| format!("COL_{}", i + 1));
                    agg_fields.push(agg_field_def(&name, *func, None));
                    aggregates.push(AggSpec::new(*func, None, &name));
                }
            }
            SelectItem::Expr { expr: Expr::Field(name), alias } => {
                if alias.is_some() {
                    return Err(semantic(format!("grouped column {name} cannot be aliased")));
                }
                if !stmt.group_by.contains(name) {
                    return Err(semantic(format!("column {name} must appear in GROUP BY")));
                }
                grouped_seen.push(name.clone());
            }
            SelectItem::Expr { .. } => {
                return Err(semantic(
                    "only aggregates and grouped columns are allowed with a WINDOW",
                ));
            }
            SelectItem::Star => unreachable!("expanded before"),
        }
    }
    for g in &stmt.group_by {
        if !grouped_seen.contains(g) {
            return Err(semantic(format!("grouped column {g} missing from SELECT list")));
        }
    }

    // Emission shape is fixed: window bounds, then group columns in
    // GROUP BY order, then the aggregates in projection order.
    let mut fields = vec![
        FieldDef::new(WINDOW_START_FIELD, ScalarType::Timestamp, false),
        FieldDef::new(WINDOW_END_FIELD, ScalarType::Timestamp, false),
    ];
    for g in &stmt.group_by {
        let def = schema.field(g).expect("validated");
        fields.push(def.clone());
    }
    fields.extend(agg_fields);
    let output_schema = Schema::new(fields)
        .map_err(|e| semantic(format!("bad output columns: {e}")))?;

    Ok(AnalyzedSelect {
        source,
        filter: stmt.where_clause.clone(),
        assignments: Vec::new(),
        projection: None,
        window: Some(window),
        aggregates,
        group_by: stmt.group_by.clone(),
        negation: None,
        limit: stmt.limit,
        output_schema,
    })
}

fn agg_field_def(name: &str, func: AggFunc, input: Option<ScalarType>) -> FieldDef {
    match func {
        AggFunc::Count => FieldDef::new(name, ScalarType::Int, false),
        AggFunc::Avg => FieldDef::new(name, ScalarType::Float, true),
        AggFunc::Sum | AggFunc::Min | AggFunc::Max => {
            FieldDef::new(name, input.unwrap_or(ScalarType::Float), true)
        }
    }
}

fn analyze_plain(
    stmt: &SelectStmt,
    source: ResolvedSource,
    items: Vec<SelectItem>,
) -> Result<AnalyzedSelect, EqlError> {
    let schema = &source.schema;
    let pass_through = stmt.items == [SelectItem::Star];
    let mut assignments = Vec::new();
    let mut names = Vec::new();
    let mut fields = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let SelectItem::Expr { expr, alias } = item else { unreachable!("no aggregates here") };
        let inferred = expr.infer_type(schema).map_err(|e| semantic(e.to_string()))?;
        let (name, def) = match (expr, alias) {
            (Expr::Field(f), None) => {
                (f.clone(), schema.field(f).expect("typed above").clone())
            }
            (_, alias) => {
                let name = alias.clone().unwrap_or_else(|| format!("COL_{}", i + 1));
                let ty = inferred.ok_or_else(|| {
                    semantic(format!("column {name} has no type; a bare NULL needs context"))
                })?;
                assignments.push((name.clone(), expr.clone()));
                (name.clone(), FieldDef::new(&name, ty, true))
            }
        };
        names.push(name);
        fields.push(def);
    }
    let output_schema = if pass_through {
        schema.clone()
    } else {
        Schema::new(fields).map_err(|e| semantic(format!("bad output columns: {e}")))?
    };
    Ok(AnalyzedSelect {
        source,
        filter: stmt.where_clause.clone(),
        assignments,
        projection: if pass_through { None } else { Some(names) },
        window: None,
        aggregates: Vec::new(),
        group_by: Vec::new(),
        negation: None,
        limit: stmt.limit,
        output_schema,
    })
}

/// Checks a declared CREATE STREAM body and resolves its properties.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyzedCreate {
    pub name: String,
    pub topic: String,
    pub format: StreamFormat,
    pub schema: Schema,
}

pub fn analyze_create_declared(
    name: &str,
    columns: &[ColumnDef],
    props: &[(String, ScalarValue)],
) -> Result<AnalyzedCreate, EqlError> {
    let fields = columns
        .iter()
        .map(|c| FieldDef::new(&c.name, c.ty, !c.not_null))
        .collect();
    let mut schema = Schema::new(fields).map_err(|e| semantic(e.to_string()))?;

    let mut topic = name.to_string();
    let mut format = StreamFormat::Json;
    for (key, value) in props {
        match key.as_str() {
            "topic" => match value {
                ScalarValue::Text(t) => {
                    let canonical = canonical_ident(t);
                    if !is_valid_ident(&canonical) {
                        return Err(semantic(format!("bad topic name {t:?}")));
                    }
                    topic = canonical;
                }
                _ => return Err(semantic("property topic takes a text value")),
            },
            "format" => match value {
                ScalarValue::Text(t) if t.eq_ignore_ascii_case("json") => {
                    format = StreamFormat::Json;
                }
                ScalarValue::Text(t) if t.eq_ignore_ascii_case("csv") => {
                    format = StreamFormat::Csv;
                }
                _ => return Err(semantic("property format must be 'json' or 'csv'")),
            },
            "timestamp" => match value {
                ScalarValue::Text(t) => {
                    schema =
                        schema.with_event_time(t).map_err(|e| semantic(e.to_string()))?;
                }
                _ => return Err(semantic("property timestamp takes a column name")),
            },
            other => return Err(semantic(format!("unknown property {other}"))),
        }
    }
    Ok(AnalyzedCreate { name: name.to_string(), topic, format, schema })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eql::parser::parse_statement;
    use crate::eql::Statement;

    fn rain_source() -> ResolvedSource {
        ResolvedSource {
            stream: "RAIN".into(),
            topic: "RAIN".into(),
            schema: Schema::new(vec![
                FieldDef::new("TS", ScalarType::Timestamp, false),
                FieldDef::new("STATION", ScalarType::Text, false),
                FieldDef::new("RAIN_MM", ScalarType::Float, false),
            ])
            .unwrap(),
        }
    }

    fn analyze(text: &str, persistent: bool) -> Result<AnalyzedSelect, EqlError> {
        let Statement::Select(stmt) = parse_statement(text).unwrap() else {
            panic!("not a select")
        };
        let resolve = |name: &str| (name == "RAIN").then(rain_source);
        analyze_select(&stmt, &resolve, persistent)
    }

    #[test]
    fn derived_value_column_and_schema() {
        let a = analyze("SELECT (RAIN_MM - 5) * 0.75 AS VALUE FROM RAIN EMIT CHANGES;", true)
            .unwrap();
        assert_eq!(a.assignments.len(), 1);
        assert_eq!(a.assignments[0].0, "VALUE");
        assert_eq!(a.projection, Some(vec!["VALUE".into()]));
        assert_eq!(a.output_schema.fields.len(), 1);
        assert_eq!(a.output_schema.fields[0].ty, ScalarType::Float);
        assert!(a.output_schema.fields[0].nullable, "arithmetic can produce null");
    }

    #[test]
    fn star_is_pass_through() {
        let a = analyze("SELECT * FROM RAIN;", false).unwrap();
        assert_eq!(a.projection, None);
        assert!(a.assignments.is_empty());
        assert_eq!(a.output_schema, rain_source().schema);
    }

    #[test]
    fn star_expansion_keeps_source_nullability() {
        let a = analyze("SELECT *, RAIN_MM * 2 AS D FROM RAIN;", false).unwrap();
        assert_eq!(
            a.projection,
            Some(vec!["TS".into(), "STATION".into(), "RAIN_MM".into(), "D".into()])
        );
        assert!(!a.output_schema.field("RAIN_MM").unwrap().nullable);
    }

    #[test]
    fn unknown_source_and_column() {
        assert!(matches!(
            analyze("SELECT * FROM NOPE;", false),
            Err(EqlError::UnknownSource(n)) if n == "NOPE"
        ));
        let err = analyze("SELECT WIND FROM RAIN;", false).unwrap_err();
        assert!(err.to_string().contains("unknown column WIND"), "{err}");
    }

    #[test]
    fn where_must_be_boolean() {
        let err = analyze("SELECT * FROM RAIN WHERE RAIN_MM + 1;", false).unwrap_err();
        assert!(err.to_string().contains("WHERE must be boolean"), "{err}");
        analyze("SELECT * FROM RAIN WHERE RAIN_MM > 5;", false).unwrap();
    }

    #[test]
    fn aggregates_need_window_and_vice_versa() {
        let err = analyze("SELECT AVG(RAIN_MM) FROM RAIN;", true).unwrap_err();
        assert!(err.to_string().contains("require a WINDOW"), "{err}");
        let err =
            analyze("SELECT RAIN_MM FROM RAIN WINDOW TUMBLING (SIZE 5 MINUTES);", true)
                .unwrap_err();
        assert!(err.to_string().contains("WINDOW requires aggregate"), "{err}");
    }

    #[test]
    fn aggregated_output_schema_shape() {
        let a = analyze(
            "SELECT STATION, AVG(RAIN_MM) AS MEAN_MM, COUNT(*) AS N FROM RAIN \
             WINDOW TUMBLING (SIZE 5 MINUTES) GROUP BY STATION EMIT CHANGES;",
            true,
        )
        .unwrap();
        let names: Vec<&str> = a.output_schema.field_names().collect();
        assert_eq!(names, ["WINDOW_START", "WINDOW_END", "STATION", "MEAN_MM", "N"]);
        assert_eq!(a.output_schema.field("N").unwrap().ty, ScalarType::Int);
        assert!(!a.output_schema.field("N").unwrap().nullable);
        assert_eq!(a.aggregates.len(), 2);
        assert_eq!(a.window.unwrap().size_ms, 300_000);
    }

    #[test]
    fn non_grouped_bare_column_rejected() {
        let err = analyze(
            "SELECT STATION, AVG(RAIN_MM) FROM RAIN WINDOW TUMBLING (SIZE 5 MINUTES);",
            true,
        )
        .unwrap_err();
        assert!(err.to_string().contains("must appear in GROUP BY"), "{err}");
    }

    #[test]
    fn avg_needs_numeric_column() {
        let err = analyze(
            "SELECT AVG(STATION) FROM RAIN WINDOW TUMBLING (SIZE 5 MINUTES);",
            true,
        )
        .unwrap_err();
        assert!(err.to_string().contains("numeric"), "{err}");
    }

    #[test]
    fn tumbling_rejects_advance_hopping_requires_it() {
        let err = analyze(
            "SELECT COUNT(*) FROM RAIN WINDOW TUMBLING (SIZE 10 MINUTES, ADVANCE BY 5 MINUTES);",
            true,
        )
        .unwrap_err();
        assert!(err.to_string().contains("no ADVANCE"), "{err}");
        let err = analyze(
            "SELECT COUNT(*) FROM RAIN WINDOW HOPPING (SIZE 10 MINUTES);",
            true,
        )
        .unwrap_err();
        assert!(err.to_string().contains("require ADVANCE"), "{err}");
    }

    #[test]
    fn limit_is_interactive_only() {
        let err = analyze("SELECT * FROM RAIN LIMIT 5;", true).unwrap_err();
        assert!(err.to_string().contains("interactive"), "{err}");
        assert_eq!(analyze("SELECT * FROM RAIN LIMIT 5;", false).unwrap().limit, Some(5));
    }

    #[test]
    fn absence_requires_window_where_and_star() {
        let a = analyze(
            "SELECT * FROM RAIN WHERE RAIN_MM > 0 WINDOW TUMBLING (SIZE 1 HOURS) EMIT ABSENCE;",
            true,
        )
        .unwrap();
        assert!(a.negation.is_some());
        assert!(a.filter.is_none(), "predicate moves into the absence node");
        let names: Vec<&str> = a.output_schema.field_names().collect();
        assert_eq!(names, ["WINDOW_START", "WINDOW_END", "ABSENT"]);

        let err = analyze("SELECT * FROM RAIN WHERE RAIN_MM > 0 EMIT ABSENCE;", true)
            .unwrap_err();
        assert!(err.to_string().contains("requires a WINDOW"), "{err}");
        let err = analyze(
            "SELECT * FROM RAIN WINDOW TUMBLING (SIZE 1 HOURS) EMIT ABSENCE;",
            true,
        )
        .unwrap_err();
        assert!(err.to_string().contains("requires a WHERE"), "{err}");
        let err = analyze(
            "SELECT RAIN_MM FROM RAIN WHERE RAIN_MM > 0 WINDOW TUMBLING (SIZE 1 HOURS) EMIT ABSENCE;",
            true,
        )
        .unwrap_err();
        assert!(err.to_string().contains("use SELECT *"), "{err}");
    }

    #[test]
    fn declared_create_resolves_props() {
        let Statement::CreateStream(c) = parse_statement(
            "CREATE STREAM RAIN (TS TIMESTAMP NOT NULL, RAIN_MM DOUBLE NOT NULL) \
             WITH (topic = 'rain_raw', format = 'json', timestamp = 'TS');",
        )
        .unwrap() else {
            panic!()
        };
        let crate::eql::CreateBody::Declared { columns, props } = &c.body else { panic!() };
        let a = analyze_create_declared(&c.name, columns, props).unwrap();
        assert_eq!(a.topic, "RAIN_RAW");
        assert_eq!(a.format, StreamFormat::Json);
        assert_eq!(a.schema.event_time_field.as_deref(), Some("TS"));

        let bad = vec![("bogus".to_string(), ScalarValue::Int(1))];
        let err = analyze_create_declared("X", columns, &bad).unwrap_err();
        assert!(err.to_string().contains("unknown property"), "{err}");
    }

    #[test]
    fn timestamp_prop_must_name_timestamp_column() {
        let Statement::CreateStream(c) = parse_statement(
            "CREATE STREAM R (TS TIMESTAMP, V DOUBLE) WITH (timestamp = 'V');",
        )
        .unwrap() else {
            panic!()
        };
        let crate::eql::CreateBody::Declared { columns, props } = &c.body else { panic!() };
        let err = analyze_create_declared(&c.name, columns, props).unwrap_err();
        assert!(err.to_string().contains("TIMESTAMP"), "{err}");
    }
}
