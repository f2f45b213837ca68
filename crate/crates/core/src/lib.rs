//! Component-based ML workflow engine: flows, planning, parallel execution
//! over a budgeted columnar store, a SQL subset and a tool-using agent.

pub mod agent;
pub mod bench;
pub mod codec;
pub mod components;
pub mod executor;
pub mod flow;
pub mod frame;
pub mod graph;
pub mod numeric;
pub mod planner;
pub mod sql;
pub mod store;
pub mod synth;

pub use components::{ComponentError, Registry};
pub use executor::{ContextStatus, Engine, ExecError, ExecutionContext, RunRecord, TaskEvent};
pub use flow::{parse_flow, serialize_flow, validate, Flow, FlowEdge, FlowError, FlowNode, ParamValue, StagePhase, ValidationIssue};
pub use frame::{Column, ColumnRole, DType, Field, Frame, FrameBuilder, Schema, Value};
pub use planner::{build_plan, sequential_plan, CostModel, ExecutionPlan, PlanError, PlanMode};
pub use store::{FrameHandle, RunId, Store, StoreConfig, StoreError, Tier};
