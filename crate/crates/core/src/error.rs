use thiserror::Error;

/// A value outside the range its hardware field can hold.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("crystal id {0} out of range 0..=528")]
    CrystalOutOfRange(u16),
    #[error("crystal component (row {row}, col {col}) out of range 0..=22")]
    ComponentOutOfRange { row: u8, col: u8 },
    #[error("raw position ({x}, {y}) out of range 0..=511")]
    PositionOutOfRange { x: u16, y: u16 },
    #[error("doi {0} out of range 0..=15")]
    DoiOutOfRange(u8),
    #[error("module id {0} out of range 0..=11")]
    ModuleOutOfRange(u8),
    #[error("block id {0} out of range 0..=3")]
    BlockOutOfRange(u8),
    #[error("crystal count {0} is not a perfect square")]
    NotSquare(u64),
    #[error("crystal count {0} too small: need at least a 2x2 array")]
    TooFewCrystals(u64),
    #[error("bit width must be between 1 and 31, got {0}")]
    BitWidth(u32),
    #[error("energy window low {low} above high {high}")]
    InvertedWindow { low: u16, high: u16 },
    #[error("peak LUT entry for crystal {0} is zero")]
    ZeroPeak(u16),
    #[error("energy scale shift {0} out of range 0..=11")]
    ScaleShift(u8),
}
