use thiserror::Error;

use crate::topology::{HostId, LinkId};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("fat-tree port count must be an even integer >= 4, got {0}")]
    InvalidPortCount(usize),
    #[error("link rate must be positive")]
    InvalidLinkRate,
    #[error("unknown host id {0}")]
    UnknownHost(HostId),
    #[error("source and destination are the same host ({0})")]
    SameEndpoints(HostId),
    #[error("no path between hosts {0} and {1}")]
    NoPath(HostId, HostId),
    #[error("flow path references nonexistent link {0}")]
    UnknownLink(LinkId),
    #[error("flow {0} has no assigned path")]
    Unscheduled(u32),
    #[error("flow {0} is already scheduled")]
    DuplicateFlow(u32),
    #[error("flow {0} is not scheduled")]
    UnknownFlow(u32),
    #[error("flow {0} has zero allocated rate with {1} bits remaining")]
    Livelock(u32, f64),
    #[error("power profile has no port power entry for link rate {0} bit/s")]
    MissingPortRate(u64),
    #[error("invalid power profile: {0}")]
    InvalidProfile(String),
    #[error("invalid switch state: {0}")]
    InvalidSwitchState(String),
    #[error("total power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("baseline power must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("degradation bounds are degenerate (LP-v4 {lower} W, Smart SP {upper} W)")]
    DegenerateBounds { lower: f64, upper: f64 },
    #[error("utilization rate must lie in (0, 1], got {0}")]
    InvalidUtilization(f64),
    #[error("requested {requested} flows but at most {max} host pairs exist")]
    TooManyFlows { requested: usize, max: usize },
    #[error("cannot pair the remaining hosts across distinct pods")]
    PairingImpossible,
    #[error("invalid experiment config: {0}")]
    InvalidConfig(String),
    #[error("unknown variant `{0}`")]
    UnknownVariant(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
