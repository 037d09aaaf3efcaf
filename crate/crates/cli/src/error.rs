use std::path::PathBuf;

use spillover::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{stage} needs {}; run `spillover {run}` first", missing.display())]
    Prerequisite {
        stage: &'static str,
        missing: PathBuf,
        run: &'static str,
    },
    #[error("{stage}{}: {source}", context.as_ref().map(|c| format!(" [{c}]")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        context: Option<String>,
        #[source]
        source: CoreError,
    },
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Prerequisite { .. } => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_DATA,
            CliError::Stage { source, .. } => match source {
                CoreError::Load { .. }
                | CoreError::Calendar(_)
                | CoreError::Io { .. }
                | CoreError::Diagnostics(_)
                | CoreError::Alignment(_)
                | CoreError::Standardization(_)
                | CoreError::Export(_)
                | CoreError::Serialization(_) => EXIT_DATA,
                _ => EXIT_NUMERICAL,
            },
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attaches a stage name (and optionally a series) to core errors.
pub(crate) trait StageContext<T> {
    fn stage(self, stage: &'static str) -> CliResult<T>;
    fn stage_at(self, stage: &'static str, context: &str) -> CliResult<T>;
}

impl<T> StageContext<T> for spillover::Result<T> {
    fn stage(self, stage: &'static str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage {
            stage,
            context: None,
            source,
        })
    }

    fn stage_at(self, stage: &'static str, context: &str) -> CliResult<T> {
        self.map_err(|source| CliError::Stage {
            stage,
            context: Some(context.to_string()),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_class() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        let data: spillover::Result<()> = Err(CoreError::Calendar("gap".into()));
        assert_eq!(data.stage("ingest").unwrap_err().exit_code(), 3);
        let num: spillover::Result<()> = Err(CoreError::TvpVar("singular".into()));
        let e = num.stage_at("connect", "volatility").unwrap_err();
        assert_eq!(e.exit_code(), 4);
        assert_eq!(e.to_string(), "connect [volatility]: TVP-VAR error: singular");
    }

    #[test]
    fn prerequisite_message_names_the_upstream_command() {
        let e = CliError::Prerequisite {
            stage: "connect",
            missing: "out/gjrsk/panels/return.csv".into(),
            run: "gjrsk",
        };
        assert_eq!(
            e.to_string(),
            "connect needs out/gjrsk/panels/return.csv; run `spillover gjrsk` first"
        );
        assert_eq!(e.exit_code(), 2);
    }
}
