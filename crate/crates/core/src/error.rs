use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("quantile values are not nondecreasing at index {0}")]
    NonMonotone(usize),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("empty measure")]
    Empty,
    #[error("parameter out of range: {0}")]
    OutOfRange(String),
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("degenerate spectrum: repeated eigenvalue {0}")]
    DegenerateSpectrum(f64),
    #[error("degenerate alternant: evaluation points are not distinct")]
    DegenerateAlternant,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("precision insufficient at {0} bits, raise precision")]
    Precision(u32),
    #[error("chain stuck: acceptance {0:.3} after tuning")]
    ChainStuck(f64),
    #[error("subordination did not converge: residual {0:.3e}")]
    NoConvergence(f64),
    #[error("density bound exceeded: quantile increment {0:.3e} below 1/m")]
    DensityBound(f64),
    #[error("schedule needs at least two sizes")]
    ShortSchedule,
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
