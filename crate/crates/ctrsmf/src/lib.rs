pub mod hetrec;
pub mod snapshot;
pub mod exec;
pub mod report;
pub mod config;
pub mod cli;
