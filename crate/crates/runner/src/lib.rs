//! Scenario runner: INI configuration, the built-in catalog, and deterministic
//! CSV/JSON output with a run manifest.

pub mod config;
pub mod output;
pub mod run;
pub mod scenarios;

pub use config::{parse_config, ConfigError, ConfigErrors, ScenarioConfig};
pub use run::{exit_code, run, RunOptions, RunOutcome, RunStatus};

/// Resolve `arg` as a built-in scenario id or a config file path.
pub fn load(arg: &str) -> Result<ScenarioConfig, LoadError> {
    let path = std::path::Path::new(arg);
    let text = if let Some(s) = scenarios::find(arg) {
        s.config.to_string()
    } else if path.is_file() {
        std::fs::read_to_string(path).map_err(|source| LoadError::Read {
            path: arg.to_string(),
            source,
        })?
    } else {
        return Err(LoadError::Unknown {
            arg: arg.to_string(),
            ids: scenarios::ids().join(", "),
        });
    };
    parse_config(&text).map_err(LoadError::Invalid)
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("`{arg}` is neither a config file nor a scenario id; valid ids: {ids}")]
    Unknown { arg: String, ids: String },
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration:\n{0}")]
    Invalid(ConfigErrors),
}
