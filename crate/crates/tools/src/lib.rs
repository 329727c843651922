//! File formats, reports and command workflows around `vcsp-core`.

pub mod commands;
pub mod error;
pub mod format;
pub mod report;

pub use error::ToolError;
pub use report::Report;
