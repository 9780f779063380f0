use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state has length {got}, instance has {expected} agents")]
    Dimension { expected: usize, got: usize },

    #[error("agent {agent} out of range for {n} agents")]
    AgentIndex { agent: usize, n: usize },

    #[error("set {set} is empty")]
    EmptySet { set: usize },

    #[error("set {set} references agent {member}, but n = {n}")]
    MemberOutOfRange { set: usize, member: usize, n: usize },

    #[error("set {set} lists agent {member} more than once")]
    RepeatedMember { set: usize, member: usize },

    #[error("set {set} duplicates the member list of set {first}")]
    DuplicateSet { set: usize, first: usize },

    #[error("cost of agent {agent} must be positive")]
    NonPositiveCost { agent: usize },

    #[error("weight of set {set} must be positive")]
    NonPositiveWeight { set: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },

    #[error("n = {n} exceeds the exhaustive-search cap {nmax}; use the LP lower bound instead")]
    TooLarge { n: usize, nmax: usize },

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
