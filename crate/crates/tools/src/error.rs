use std::path::PathBuf;

use vcsp_core::Error;

#[derive(Debug, thiserror::Error)]
pub enum ToolError {
    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Core { context: String, source: Error },
}

impl ToolError {
    pub fn core(context: impl Into<String>, source: Error) -> Self {
        ToolError::Core { context: context.into(), source }
    }

    /// 2 for input and configuration problems, 3 for exceeded caps and
    /// budgets, 4 for solver non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            ToolError::Core { source: Error::CapExceeded { .. } | Error::BudgetExhausted(_), .. } => 3,
            ToolError::Core { source: Error::NonConvergence(_), .. } => 4,
            _ => 2,
        }
    }
}
