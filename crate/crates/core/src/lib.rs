//! Session-based next-item recommendation with sliding-window session
//! hypergraphs and hypergraph attention.

pub mod error;
pub mod hypergraph;
pub mod linalg;
pub mod model;
pub mod data;
pub mod checkpoint;
pub mod eval;
pub mod training;
pub mod synthetic;
pub mod config;
pub mod cli;
