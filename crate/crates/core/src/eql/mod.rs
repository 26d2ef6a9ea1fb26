//! EQL, the query language: lexer, parser, semantic analysis, planning
//! into operator topologies, and the engine that registers streams and
//! runs persistent and interactive queries.

pub mod analyze;
pub mod ast;
pub mod exec;
pub mod parser;
pub mod plan;
pub mod token;

pub use analyze::{analyze_select, AnalyzedSelect, ResolvedSource};
pub use ast::{
    ColumnDef, CreateBody, CreateStream, EmitKind, SelectItem, SelectStmt, ShowKind, Statement,
    TimeUnit, WindowClause,
};
pub use exec::{
    ExecOutcome, QueryEngine, QueryRow, QueryState, SelectOutcome, StreamDef, QUERIES_TOPIC,
};
pub use parser::{parse_script, parse_statement};
pub use token::tokenize;

use crate::broker::BrokerError;
use crate::model::TopicSpecError;

#[derive(Debug, thiserror::Error)]
pub enum EqlError {
    #[error("{message} at byte {pos}")]
    Lex { pos: usize, message: String },
    #[error("{message} at byte {pos}")]
    Parse { pos: usize, message: String },
    #[error("{0}")]
    Semantic(String),
    #[error("unknown stream or topic {0}")]
    UnknownSource(String),
    #[error("stream {0} already exists")]
    DuplicateStream(String),
    #[error("unknown query {0}")]
    UnknownQuery(String),
    #[error(transparent)]
    Broker(#[from] BrokerError),
}

impl From<TopicSpecError> for EqlError {
    fn from(e: TopicSpecError) -> EqlError {
        EqlError::Broker(BrokerError::InvalidTopic(e))
    }
}
