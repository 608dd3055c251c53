use thiserror::Error;

/// A configuration value violated its contract. `field` names the offending
/// key using the config file's `section.key` path.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid value for `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Failures while running a simulation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "table detection supports at most 3 concurrent transmissions per cluster in a slot, \
         got (n1, n2) = ({n1}, {n2}); use detection = \"physical\" or table_overflow = \"clamp\""
    )]
    TableOverflow { n1: usize, n2: usize },
    #[error("benchmark grid needs {required} evaluations, above the cap of {cap}")]
    GridTooLarge { required: usize, cap: usize },
    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),
}
