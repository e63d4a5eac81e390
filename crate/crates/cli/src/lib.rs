//! File formats, command line and closed-loop runs on top of `dampopt-core`.

pub mod case_file;
pub mod commands;
pub mod csv_io;
pub mod scenario_file;
