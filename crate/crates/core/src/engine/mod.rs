//! The operator dataflow engine: expression evaluation over records,
//! event-time window state, and the runtime that executes topologies
//! against the broker.

pub mod expr;
pub mod runtime;
pub mod window;

pub use expr::{BinaryOp, Expr, ListExpr, ScalarFunc, TypeError, UnaryOp};
pub use runtime::{
    apply_stateless, run_topology, KillPoint, OperatorSpec, Pipeline, TaskHandle, TaskOptions,
    TaskState, TaskStatus, Topology,
};
pub use window::{
    AggFunc, AggSpec, NegationState, Stimulus, WindowAggState, WindowEmit, WindowKind, WindowSpec,
    WindowSpecError,
};
