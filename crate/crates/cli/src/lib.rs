//! Command-line front end: expression parser, scenario and certificate files,
//! trajectory output and the `hocbf` commands.

pub mod certificate;
pub mod commands;
pub mod output;
pub mod parser;
pub mod scenario;
