pub mod config;
pub mod error;
pub mod generate;
pub mod graph;
pub mod infer;
pub mod metrics;
pub mod model;
pub mod par;
pub mod pipeline;
pub mod rwt;

pub use error::{Error, ErrorKind, Result};
pub use graph::{DegreeSequence, Graph, SmoothedOperator};
