use std::fmt;
use std::path::Path;

use hydrosentinel_core::detect::DetectError;
use hydrosentinel_core::gnn::GnnError;
use hydrosentinel_core::graph::GraphError;
use hydrosentinel_core::hydro::HydroError;
use hydrosentinel_core::network::InpError;
use hydrosentinel_core::placement::PlacementError;

/// Failure class, which fixes the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Failure {
    Config,
    Data,
    Numerical,
}

impl Failure {
    pub fn exit_code(self) -> i32 {
        match self {
            Failure::Config => 2,
            Failure::Data => 3,
            Failure::Numerical => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Failure,
    pub message: String,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            kind: Failure::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError {
            kind: Failure::Data,
            message: message.into(),
        }
    }

    /// Prefixes the message with where the failure happened.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        CliError::data(format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

fn hydro_kind(e: &HydroError) -> Failure {
    match e {
        HydroError::NonConvergence { .. } | HydroError::Singular => Failure::Numerical,
        HydroError::AtTime { source, .. } => hydro_kind(source),
        HydroError::InvalidConfig(_) | HydroError::NoFixedHead | HydroError::DisconnectedComponent(_) => {
            Failure::Config
        }
        _ => Failure::Data,
    }
}

impl From<HydroError> for CliError {
    fn from(e: HydroError) -> Self {
        CliError {
            kind: hydro_kind(&e),
            message: e.to_string(),
        }
    }
}

impl From<GnnError> for CliError {
    fn from(e: GnnError) -> Self {
        let kind = match &e {
            GnnError::Divergence { .. } | GnnError::NonFiniteActivation { .. } => Failure::Numerical,
            GnnError::InvalidArchitecture(_) | GnnError::InvalidTraining(_) => Failure::Config,
            _ => Failure::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        let kind = match e {
            GraphError::NonConvergence { .. } => Failure::Numerical,
            _ => Failure::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<PlacementError> for CliError {
    fn from(e: PlacementError) -> Self {
        let kind = match e {
            PlacementError::NonConvergence(_) => Failure::Numerical,
            PlacementError::IsolatedNode(_) => Failure::Data,
            _ => Failure::Config,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        let kind = match e {
            DetectError::IntervalTooShort { .. } | DetectError::InvalidParameter(_) => Failure::Config,
            _ => Failure::Data,
        };
        CliError {
            kind,
            message: e.to_string(),
        }
    }
}

impl From<InpError> for CliError {
    fn from(e: InpError) -> Self {
        CliError::data(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::data(e.to_string())
    }
}
