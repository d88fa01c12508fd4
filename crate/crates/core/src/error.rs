use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("packet leaks off grid: boundary amplitude ratio {ratio:.3e} exceeds 1e-8")]
    PacketLeak { ratio: f64 },

    #[error("invalid packet: {0}")]
    InvalidPacket(String),

    #[error("point {point:?} outside grid")]
    OutsideGrid { point: Vec<f64> },

    #[error("non-finite value in field after step {step}")]
    NonFinite { step: usize },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("node configuration: total density {density:.3e} below node threshold")]
    NodeConfiguration { density: f64 },

    #[error("branches are not disjoint (overlap mass {overlap:.3e}); weights undefined")]
    NotDisjoint { overlap: f64 },

    #[error("refusing to prune occupied branch {0}")]
    PruneOccupied(usize),

    #[error("sampling requires product initial state")]
    EntangledInitialState,

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("no branch coupled: selector window matches no branch")]
    NoBranchCoupled,

    #[error("memory budget exceeded: {0}")]
    MemoryBudget(String),

    #[error("kernel is not unitary: norm change {0:.3e}")]
    NonUnitary(f64),

    #[error("schedule normalization violated: integral {0:.12}")]
    ScheduleNormalization(f64),

    #[error("adiabaticity violated: excited population {0:.3} exceeds 5%")]
    Adiabaticity(f64),

    #[error("invalid scenario: {0}")]
    Scenario(String),
}
