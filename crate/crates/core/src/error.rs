use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum Error {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("program contains more than one `target;` statement")]
    MultipleTargets,
    #[error("program contains no `target;` statement")]
    MissingTarget,
    #[error("unreachable code: vertex {0} is not reachable from start or cannot reach the terminal")]
    UnreachableCode(usize),
    #[error("assignment normalization unsupported for `{var}`: {reason}")]
    NormalizationUnsupported { var: String, reason: String },
    #[error("irreducible control flow at vertex {0}")]
    IrreducibleCfg(usize),
    #[error("chain program form exceeds the cap of {cap} chains")]
    ChainExplosion { cap: usize },
    #[error("temporary counter for `{var}` in chain {chain} has ambiguous reset chain")]
    AmbiguousReset { chain: usize, var: String },
    #[error("unsupported literal: {0}")]
    UnsupportedLiteral(String),
    #[error("witness does not drive the program to the target: {0}")]
    ValidationFailure(String),
    #[error("external solver failed: {0}")]
    ExternalSolver(String),
    #[error("cannot read input: {0}")]
    Io(String),
}
