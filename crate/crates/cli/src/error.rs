use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] obsplan::Error),
    #[error("{0}")]
    Schema(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Sweep finished with failed points; carries the first failure's code.
    #[error("{failed} sweep point(s) failed")]
    PointsFailed { failed: usize, code: i32 },
}

impl CliError {
    /// 2 config, 3 numerical failure, 4 infeasible plan, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        use obsplan::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::Infeasible { .. } | E::WaypointUnreachable { .. } => 4,
                E::InvalidArgument(_) | E::Format { .. } => 2,
                E::Io(_) => 1,
                _ => 3,
            },
            CliError::Schema(_) => 2,
            CliError::Io(_) => 1,
            CliError::PointsFailed { code, .. } => *code,
        }
    }
}
