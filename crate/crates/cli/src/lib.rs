//! Batch front end: instance files, the worked examples and seeded campaigns.

pub mod commands;
pub mod instance;
pub mod report;
