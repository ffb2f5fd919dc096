use coil_core::coil::CoilError;
use coil_core::features::FeatureSchema;

/// Failures reported by the command-line tool. Each maps to a stable code
/// printed as `error[CODE]: message`.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", .0.join("; "))]
    Config(Vec<String>),
    #[error("{0}")]
    Io(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("demonstration schema ({got}) does not match environment schema ({expected})")]
    Schema { expected: FeatureSchema, got: FeatureSchema },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Run(#[from] CoilError),
}

impl CliError {
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "E_CONFIG",
            CliError::Io(_) => "E_IO",
            CliError::Parse { .. } => "E_PARSE",
            CliError::Schema { .. } => "E_SCHEMA",
            CliError::Usage(_) => "E_USAGE",
            CliError::Run(e) => match e {
                CoilError::Config(_) => "E_CONFIG",
                CoilError::Schema { .. } => "E_SCHEMA",
                CoilError::NoDemos => "E_DEMOS",
                CoilError::ExpertTooWeak { .. } => "E_EXPERT",
                CoilError::Io(_) => "E_IO",
                _ => "E_RUN",
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }

    /// The single diagnostic line.
    pub fn render(&self) -> String {
        let msg = self.to_string().replace('\n', " ");
        format!("error[{}]: {msg}", self.code())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
