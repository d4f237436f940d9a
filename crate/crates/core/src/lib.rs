//! In-memory relational query engine with interchangeable execution
//! backends: a dynamically dispatched operator pipeline and a fused loop.

pub mod harness;
pub mod imperative;
pub mod oracle;
pub mod pipeline;
pub mod plan;
pub mod prepared;
pub mod relmodel;
pub mod sql;
pub mod suite;
pub mod value;

pub use harness::{Backend, Variant};
pub use oracle::ResultSet;
pub use pipeline::{GenOptions, Strategy};
pub use relmodel::{Catalog, Database, Field, RelError, Row, Schema, TableData};
pub use value::{DataType, Value};
