use thiserror::Error;

use crate::scenario::ValidationReport;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(ValidationReport),

    #[error("malformed configuration file: {0}")]
    ConfigParse(String),

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("{which} delay {delay_s:.4e} s outside the unambiguous interval [0, {max_s:.4e}) s")]
    DelayAlias {
        which: &'static str,
        delay_s: f64,
        max_s: f64,
    },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("transmitted symbol is zero at antenna {antenna}, subcarrier {subcarrier}, symbol {symbol}")]
    ZeroSymbol {
        antenna: usize,
        subcarrier: usize,
        symbol: usize,
    },

    #[error("transform length {len} is shorter than the input ({input})")]
    TransformTooShort { len: usize, input: usize },

    #[error("no stable offset peaks survived the antenna consistency test")]
    NoStableOffsets,

    #[error("ranging inputs are geometrically inconsistent (cosine argument {0:.4})")]
    InconsistentRanging(f64),

    #[error("angular search window is empty: {0}")]
    EmptyWindow(String),

    #[error("spatial peak sits on the edge of the search window (bin {0})")]
    WindowMiss(i64),

    #[error("insufficient trials: {got} given, at least {required} needed for the requested false-alarm resolution")]
    InsufficientTrials { required: usize, got: usize },

    #[error("unknown sweep parameter `{0}`")]
    UnknownParameter(String),

    #[error("unknown recipe `{0}`")]
    UnknownRecipe(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("malformed grid dump: {0}")]
    GridFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn at(stage: &'static str) -> impl Fn(Error) -> Error + Copy {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
