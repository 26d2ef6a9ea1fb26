//! Uniform client interface over the broker data plane. Connectors and
//! tools program against `StreamClient` so the same code runs in process
//! against a `Broker` or remotely through the wire client.

use crate::broker::{Broker, BrokerError, ProduceRecord, TopicInfo};
use crate::model::{Record, Schema, TopicSpec};
use std::time::Duration;

/// Stable machine-readable error codes carried across the wire.
pub mod code {
    pub const DUPLICATE_TOPIC: &str = "duplicate_topic";
    pub const INVALID_TOPIC: &str = "invalid_topic";
    pub const UNKNOWN_TOPIC: &str = "unknown_topic";
    pub const UNKNOWN_PARTITION: &str = "unknown_partition";
    pub const VALIDATION: &str = "validation";
    pub const OFFSET_BEYOND_END: &str = "offset_beyond_end";
    pub const OFFSET_OUT_OF_RANGE: &str = "offset_out_of_range";
    pub const STORAGE: &str = "storage";
    pub const BAD_REQUEST: &str = "bad_request";
    pub const BAD_FRAME: &str = "bad_frame";
    pub const UNKNOWN_QUERY: &str = "unknown_query";
    pub const QUERY: &str = "query";
    pub const INTERNAL: &str = "internal";
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum ClientError {
    /// The server understood the request and refused it.
    #[error("{message}")]
    Domain { code: String, message: String },
    /// The request never completed: connection, io, or protocol failure.
    #[error("transport error: {0}")]
    Transport(String),
}

impl ClientError {
    pub fn domain(code: &str, message: impl Into<String>) -> ClientError {
        ClientError::Domain { code: code.to_string(), message: message.into() }
    }

    pub fn code(&self) -> &str {
        match self {
            ClientError::Domain { code, .. } => code,
            ClientError::Transport(_) => "transport",
        }
    }

    /// True for schema-validation rejections, which connectors divert to
    /// dead-letter topics instead of halting.
    pub fn is_validation(&self) -> bool {
        self.code() == code::VALIDATION
    }

    pub fn is_unknown_topic(&self) -> bool {
        self.code() == code::UNKNOWN_TOPIC
    }
}

/// Maps a broker refusal to its wire error code.
pub fn broker_error_code(e: &BrokerError) -> &'static str {
    match e {
        BrokerError::DuplicateTopic(_) => code::DUPLICATE_TOPIC,
        BrokerError::InvalidTopic(_) => code::INVALID_TOPIC,
        BrokerError::UnknownTopic(_) => code::UNKNOWN_TOPIC,
        BrokerError::UnknownPartition { .. } => code::UNKNOWN_PARTITION,
        BrokerError::Validation { .. } => code::VALIDATION,
        BrokerError::OffsetBeyondEnd { .. } => code::OFFSET_BEYOND_END,
        BrokerError::OffsetOutOfRange { .. } => code::OFFSET_OUT_OF_RANGE,
        BrokerError::Log(_) | BrokerError::CorruptMeta { .. } | BrokerError::Io(_) => code::STORAGE,
    }
}

impl From<BrokerError> for ClientError {
    fn from(e: BrokerError) -> ClientError {
        ClientError::domain(broker_error_code(&e), e.to_string())
    }
}

/// The broker data plane as seen by producers, consumers, and connectors.
pub trait StreamClient: Send + Sync {
    fn create_topic(
        &self,
        spec: TopicSpec,
        schema: Option<Schema>,
    ) -> Result<TopicInfo, ClientError>;

    fn list_topics(&self, include_internal: bool) -> Result<Vec<TopicInfo>, ClientError>;

    fn describe_topic(&self, name: &str) -> Result<TopicInfo, ClientError>;

    fn produce(
        &self,
        topic: &str,
        records: Vec<ProduceRecord>,
    ) -> Result<Vec<(u32, u64)>, ClientError>;

    fn fetch(
        &self,
        topic: &str,
        partition: u32,
        from: u64,
        max: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, ClientError>;

    fn commit_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
        next_offset: u64,
    ) -> Result<u64, ClientError>;

    fn committed_offset(&self, group: &str, topic: &str, partition: u32)
        -> Result<u64, ClientError>;
}

impl StreamClient for Broker {
    fn create_topic(
        &self,
        spec: TopicSpec,
        schema: Option<Schema>,
    ) -> Result<TopicInfo, ClientError> {
        Ok(Broker::create_topic(self, spec, schema)?)
    }

    fn list_topics(&self, include_internal: bool) -> Result<Vec<TopicInfo>, ClientError> {
        Ok(Broker::list_topics(self, include_internal))
    }

    fn describe_topic(&self, name: &str) -> Result<TopicInfo, ClientError> {
        Ok(Broker::describe_topic(self, name)?)
    }

    fn produce(
        &self,
        topic: &str,
        records: Vec<ProduceRecord>,
    ) -> Result<Vec<(u32, u64)>, ClientError> {
        Ok(Broker::produce(self, topic, records)?)
    }

    fn fetch(
        &self,
        topic: &str,
        partition: u32,
        from: u64,
        max: usize,
        max_wait: Duration,
    ) -> Result<Vec<Record>, ClientError> {
        Ok(Broker::fetch(self, topic, partition, from, max, max_wait)?)
    }

    fn commit_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
        next_offset: u64,
    ) -> Result<u64, ClientError> {
        Ok(Broker::commit_offset(self, group, topic, partition, next_offset)?)
    }

    fn committed_offset(
        &self,
        group: &str,
        topic: &str,
        partition: u32,
    ) -> Result<u64, ClientError> {
        Ok(Broker::committed_offset(self, group, topic, partition))
    }
}
