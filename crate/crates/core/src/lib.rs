//! Cycle-accurate simulator of a fully associative update-conflation queue
//! that hides off-chip read latency in read-modify-write statistics
//! collection, together with an RLDRAM-style memory timing model and
//! analytical FPGA resource estimators for the competing implementations.

pub mod conflation;
pub mod datapath;
pub mod estimator;
pub mod harness;
pub mod memory;
pub mod rmw;
pub mod stats;

pub use conflation::{
    Cascade, CascadeOutput, DspStage, RefStage, ScheduleConfig, StageConfig, StageOutput,
};
pub use datapath::{Key, LayoutConfig, PackedWord, Slot};
pub use harness::{run_sim, Metrics, RunConfig};
pub use memory::{MemReply, MemoryConfig, MemoryModel};
pub use rmw::{MemOp, OpKind, RmwEngine, Scheduler};
