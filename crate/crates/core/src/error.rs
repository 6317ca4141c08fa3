/// Coarse classification of failures, used by callers to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorCategory {
    /// Bad input data or configuration.
    Validation,
    /// A judge, generator or other backend answered outside its contract.
    Protocol,
    /// A backend could not be reached.
    Transport,
}

impl ErrorCategory {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCategory::Validation => "validation",
            ErrorCategory::Protocol => "protocol",
            ErrorCategory::Transport => "transport",
        }
    }
}
