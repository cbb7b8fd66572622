use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{0}")]
    Capacity(String),

    /// Names of the checks that failed.
    #[error("failed checks: {}", .0.join(", "))]
    Check(Vec<String>),

    #[error("{0}")]
    Internal(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl From<brl_core::Error> for CliError {
    fn from(e: brl_core::Error) -> Self {
        use brl_core::Error as E;
        match e {
            E::Capacity { .. } => CliError::Capacity(e.to_string()),
            E::Parameter(_) | E::Model(_) | E::Format(_) => CliError::Config(e.to_string()),
            E::Numerical(_) => CliError::Internal(e.to_string()),
            E::Io(io) => CliError::Io(io),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) | CliError::Internal(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Capacity(_) => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Capacity(_) => "capacity",
            CliError::Check(_) => "check",
            CliError::Internal(_) => "internal",
            CliError::Io(_) => "io",
        }
    }

    /// Single line: `error kind=<kind> code=<code> reason=<json string>`.
    pub fn line(&self) -> String {
        let reason = serde_json::to_string(&self.to_string()).expect("string serializes");
        format!("error kind={} code={} reason={}", self.kind(), self.exit_code(), reason)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lines_are_single_and_quoted() {
        let e = CliError::Config("unknown field `x`\nat line 1".into());
        let l = e.line();
        assert!(!l.contains('\n'));
        assert!(l.starts_with("error kind=config code=2 reason=\""));
        let cap: CliError = brl_core::Error::Capacity { what: "history nodes", count: 11, cap: 10 }.into();
        assert_eq!(cap.exit_code(), 3);
        assert_eq!(CliError::Check(vec!["a".into(), "b".into()]).to_string(), "failed checks: a, b");
    }
}
