use thiserror::Error;

/// Errors raised by the simulator and signal-processing chain.
#[derive(Debug, Error)]
pub enum IsacError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("service area is empty: {0}")]
    EmptyArea(String),

    #[error("communication-for-sensing sectors of users {0} and {1} overlap")]
    OverlappingSectors(usize, usize),

    #[error("divisor symbol at slot {slot}, symbol {symbol}, subcarrier {subcarrier} has magnitude {magnitude:e}")]
    DegenerateSymbol {
        slot: usize,
        symbol: usize,
        subcarrier: usize,
        magnitude: f64,
    },

    #[error("CFAR window {window_rows}x{window_cols} does not fit a {rows}x{cols} matrix")]
    WindowTooLarge {
        window_rows: usize,
        window_cols: usize,
        rows: usize,
        cols: usize,
    },

    #[error("noise subspace is empty: order {order} with dimension {dimension}")]
    EmptyNoiseSubspace { order: usize, dimension: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("trial {trial} (seed {seed}): {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<IsacError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, IsacError>;
