//! Exit-code taxonomy: 1 usage, 2 parse/input, 3 adapter, 4 internal.

use std::fmt;

use mvlabel_core::dataio::DataError;
use mvlabel_core::geometry::GeometryError;
use mvlabel_core::heatmap::raster::RasterError;
use mvlabel_core::heatmap::{DetectionError, HeatmapError};
use mvlabel_core::metrics::MetricsError;
use mvlabel_core::orchestrator::OrchestratorError;
use mvlabel_core::simulator::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Parse = 2,
    Adapter = 3,
    Internal = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub exit: Exit,
    pub error: anyhow::Error,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn new(exit: Exit, error: impl Into<anyhow::Error>) -> Self {
        Self {
            exit,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl fmt::Display) -> Self {
        Self::new(Exit::Usage, anyhow::anyhow!("{msg}"))
    }

    pub fn parse(msg: impl fmt::Display) -> Self {
        Self::new(Exit::Parse, anyhow::anyhow!("{msg}"))
    }

    pub fn context(mut self, ctx: impl fmt::Display) -> Self {
        self.error = self.error.context(ctx.to_string());
        self
    }
}

pub trait Classify {
    fn exit(&self) -> Exit;
}

impl<E> From<E> for CliError
where
    E: Classify + std::error::Error + Send + Sync + 'static,
{
    fn from(e: E) -> Self {
        CliError::new(e.exit(), e)
    }
}

impl Classify for std::io::Error {
    fn exit(&self) -> Exit {
        Exit::Internal
    }
}

impl Classify for DataError {
    fn exit(&self) -> Exit {
        match self {
            DataError::InvalidRatios(_) => Exit::Usage,
            _ => Exit::Parse,
        }
    }
}

impl Classify for RasterError {
    fn exit(&self) -> Exit {
        Exit::Parse
    }
}

impl Classify for DetectionError {
    fn exit(&self) -> Exit {
        Exit::Parse
    }
}

impl Classify for HeatmapError {
    fn exit(&self) -> Exit {
        match self {
            HeatmapError::InvalidKernelSpec(_) | HeatmapError::InvalidParameters(_) => Exit::Usage,
            _ => Exit::Parse,
        }
    }
}

impl Classify for GeometryError {
    fn exit(&self) -> Exit {
        match self {
            GeometryError::InvalidGrid(_) | GeometryError::UnknownPreset(_) => Exit::Usage,
            _ => Exit::Parse,
        }
    }
}

impl Classify for MetricsError {
    fn exit(&self) -> Exit {
        match self {
            MetricsError::InvalidRadius(_) => Exit::Usage,
            _ => Exit::Parse,
        }
    }
}

impl Classify for SimError {
    fn exit(&self) -> Exit {
        Exit::Usage
    }
}

impl Classify for OrchestratorError {
    fn exit(&self) -> Exit {
        match self {
            OrchestratorError::Adapter(_) | OrchestratorError::Coverage { .. } => Exit::Adapter,
            OrchestratorError::Data(e) => e.exit(),
            OrchestratorError::Heatmap(e) => e.exit(),
            OrchestratorError::Metrics(e) => e.exit(),
            OrchestratorError::Io { .. } => Exit::Internal,
            OrchestratorError::Config(_)
            | OrchestratorError::Precondition(_)
            | OrchestratorError::MissingComponent(_)
            | OrchestratorError::Locked(_)
            | OrchestratorError::CampaignExists(_) => Exit::Usage,
        }
    }
}

impl Classify for serde_json::Error {
    fn exit(&self) -> Exit {
        Exit::Parse
    }
}
