//! Simulation-study orchestration on top of a transactional SQL store.

pub mod analysis;
pub mod cli;
pub mod paramspace;
pub mod runner;
pub mod storage;
pub mod studies;
pub mod value;

pub use paramspace::{Axis, Configuration, ParamSpace};
pub use storage::{ResultRecord, ResultSchema, StoreHandle};
pub use value::{Structured, Value};
