//! Performance sanitizer toolkit.
//!
//! Instrumented containers ([`shims`]) log method calls through a buffered
//! [`logger`] into the compact [`wirefmt`] log. Offline, [`tracedb`] rebuilds
//! per-instance timelines, [`rules`] flags library-usage anti-patterns and
//! [`report`] renders severity-sorted findings and histograms.

pub mod corpus;
pub mod logger;
pub mod report;
pub mod rules;
pub mod shims;
pub mod symbols;
pub mod tracedb;
pub mod vocab;
pub mod wirefmt;
