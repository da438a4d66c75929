pub mod artifact;
pub mod cate;
pub mod data;
pub mod error;
pub mod exec;
pub mod nuisance;
pub mod regress;
pub mod router;
pub mod seed;
pub mod synthetic;
pub mod config;
pub mod harness;
