pub mod gateway;
pub mod protocol;
pub mod retrieval;
pub mod text;
pub mod memoize;
pub mod eval;
pub mod orchestrator;
pub mod rewards;
pub mod config;
