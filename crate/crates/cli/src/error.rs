use std::fmt;

use rdp_forge::environments::EnvError;
use rdp_forge::languages::LangError;
use rdp_forge::learner::LearnError;
use rdp_forge::metrics::MetricError;
use rdp_forge::pipeline::PipelineError;
use rdp_forge::planner::PlanError;
use rdp_forge::trace::TraceError;

pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;
pub const EXIT_BUDGET: i32 = 4;

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config or input files.
    Validation(String),
    Runtime(String),
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Budget(_) => EXIT_BUDGET,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "invalid input: {m}"),
            CliError::Runtime(m) => write!(f, "{m}"),
            CliError::Budget(m) => write!(f, "budget exceeded: {m}"),
        }
    }
}

impl From<EnvError> for CliError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::UnknownEnv(_) => CliError::Validation(format!("--env: {e}")),
            EnvError::InvalidParam(_) => CliError::Validation(e.to_string()),
            EnvError::Trace(t) => t.into(),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        match e {
            TraceError::Io(_) => CliError::Runtime(e.to_string()),
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        match e {
            MetricError::Config(_) | MetricError::Lang(LangError::InvalidIndex(_) | LangError::SizeLimit { .. }) => {
                CliError::Validation(e.to_string())
            }
            MetricError::BudgetExceeded => CliError::Budget(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

impl From<LearnError> for CliError {
    fn from(e: LearnError) -> Self {
        match e {
            LearnError::BudgetExceeded(_) => CliError::Budget(e.to_string()),
            LearnError::Metric(m) => m.into(),
            LearnError::Trace(t) => t.into(),
            LearnError::Format(_) | LearnError::EmptyDataset | LearnError::History(_) => {
                CliError::Validation(e.to_string())
            }
            LearnError::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Env(x) => x.into(),
            PipelineError::Learn(x) => x.into(),
            PipelineError::Plan(x) => x.into(),
        }
    }
}

pub fn io_error(path: &std::path::Path, e: impl fmt::Display) -> CliError {
    CliError::Runtime(format!("{}: {e}", path.display()))
}
