pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod kg;
pub mod model;
pub mod numerics;
pub mod reasoner;
pub mod rules;
pub mod subgraph;
pub mod train;

pub use error::{Error, Result};
