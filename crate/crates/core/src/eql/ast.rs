//! Statement trees. Identifiers are stored canonically (uppercase), so a
//! printed statement reparses to an equal tree.

use crate::engine::expr::Expr;
use crate::engine::window::{AggFunc, WindowKind};
use crate::model::{ScalarType, ScalarValue};
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    CreateStream(CreateStream),
    Select(SelectStmt),
    Show(ShowKind),
    Terminate { query_id: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CreateStream {
    pub name: String,
    pub body: CreateBody,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CreateBody {
    /// Explicit columns plus WITH properties (property names lowercased).
    Declared { columns: Vec<ColumnDef>, props: Vec<(String, ScalarValue)> },
    AsSelect(SelectStmt),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDef {
    pub name: String,
    pub ty: ScalarType,
    pub not_null: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectStmt {
    pub items: Vec<SelectItem>,
    pub from: String,
    pub where_clause: Option<Expr>,
    pub window: Option<WindowClause>,
    pub group_by: Vec<String>,
    pub emit: Option<EmitKind>,
    pub limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SelectItem {
    Star,
    /// Aggregate call; `field` None means COUNT(*).
    Aggregate { func: AggFunc, field: Option<String>, alias: Option<String> },
    Expr { expr: Expr, alias: Option<String> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeUnit {
    Seconds,
    Minutes,
    Hours,
}

impl TimeUnit {
    pub fn ms(self) -> i64 {
        match self {
            TimeUnit::Seconds => 1000,
            TimeUnit::Minutes => 60 * 1000,
            TimeUnit::Hours => 3600 * 1000,
        }
    }

    pub fn keyword(self) -> &'static str {
        match self {
            TimeUnit::Seconds => "SECONDS",
            TimeUnit::Minutes => "MINUTES",
            TimeUnit::Hours => "HOURS",
        }
    }

    pub fn parse(word: &str) -> Option<TimeUnit> {
        match word.to_ascii_uppercase().as_str() {
            "SECONDS" | "SECOND" => Some(TimeUnit::Seconds),
            "MINUTES" | "MINUTE" => Some(TimeUnit::Minutes),
            "HOURS" | "HOUR" => Some(TimeUnit::Hours),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowClause {
    pub kind: WindowKind,
    pub size: u64,
    pub size_unit: TimeUnit,
    pub advance: Option<(u64, TimeUnit)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmitKind {
    Changes,
    Absence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShowKind {
    Streams,
    Queries,
    Topics,
}

impl ShowKind {
    pub fn keyword(self) -> &'static str {
        match self {
            ShowKind::Streams => "STREAMS",
            ShowKind::Queries => "QUERIES",
            ShowKind::Topics => "TOPICS",
        }
    }
}

fn fmt_literal(v: &ScalarValue, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "{}", Expr::Literal(v.clone()))
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::CreateStream(c) => write!(f, "{c};"),
            Statement::Select(s) => write!(f, "{s};"),
            Statement::Show(kind) => write!(f, "SHOW {};", kind.keyword()),
            Statement::Terminate { query_id } => write!(f, "TERMINATE {query_id};"),
        }
    }
}

impl fmt::Display for CreateStream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CREATE STREAM {}", self.name)?;
        match &self.body {
            CreateBody::Declared { columns, props } => {
                write!(f, " (")?;
                for (i, c) in columns.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{} {}", c.name, c.ty.name())?;
                    if c.not_null {
                        write!(f, " NOT NULL")?;
                    }
                }
                write!(f, ") WITH (")?;
                for (i, (name, value)) in props.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{name} = ")?;
                    fmt_literal(value, f)?;
                }
                write!(f, ")")
            }
            CreateBody::AsSelect(s) => write!(f, " AS {s}"),
        }
    }
}

impl fmt::Display for SelectStmt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SELECT ")?;
        for (i, item) in self.items.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            match item {
                SelectItem::Star => write!(f, "*")?,
                SelectItem::Aggregate { func, field, alias } => {
                    match field {
                        Some(name) => write!(f, "{}({name})", func.name())?,
                        None => write!(f, "{}(*)", func.name())?,
                    }
                    if let Some(alias) = alias {
                        write!(f, " AS {alias}")?;
                    }
                }
                SelectItem::Expr { expr, alias } => {
                    write!(f, "{expr}")?;
                    if let Some(alias) = alias {
                        write!(f, " AS {alias}")?;
                    }
                }
            }
        }
        write!(f, " FROM {}", self.from)?;
        if let Some(w) = &self.where_clause {
            write!(f, " WHERE {w}")?;
        }
        if let Some(win) = &self.window {
            let kind = match win.kind {
                WindowKind::Tumbling => "TUMBLING",
                WindowKind::Hopping => "HOPPING",
            };
            write!(f, " WINDOW {kind} (SIZE {} {}", win.size, win.size_unit.keyword())?;
            if let Some((n, unit)) = &win.advance {
                write!(f, ", ADVANCE BY {n} {}", unit.keyword())?;
            }
            write!(f, ")")?;
        }
        if !self.group_by.is_empty() {
            write!(f, " GROUP BY {}", self.group_by.join(", "))?;
        }
        match self.emit {
            Some(EmitKind::Changes) => write!(f, " EMIT CHANGES")?,
            Some(EmitKind::Absence) => write!(f, " EMIT ABSENCE")?,
            None => {}
        }
        if let Some(n) = self.limit {
            write!(f, " LIMIT {n}")?;
        }
        Ok(())
    }
}
