use thiserror::Error;

/// Errors raised by validation, estimation and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "cell counts do not sum to n_tot: n15={n15} + n2={n2} + n4={n4} + n6={n6} + n37={n37} = {sum}, but n_tot={n_tot}"
    )]
    SumMismatch {
        n15: u64,
        n2: u64,
        n4: u64,
        n6: u64,
        n37: u64,
        sum: u64,
        n_tot: u64,
    },

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("probability `{name}` = {value} is outside {range}")]
    Probability {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("duplicate record id `{0}`")]
    DuplicateId(String),

    #[error("record `{0}` is in the anchor sample but has no anchor result")]
    MissingAnchorResult(String),

    #[error("population size {population} is smaller than the {observed} individuals present in the records")]
    PopulationTooSmall { population: u64, observed: u64 },

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("missing key `{0}` in counts document")]
    MissingKey(&'static str),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("enumeration too large: {0}")]
    EnumerationTooLarge(String),

    #[error("{method}: {source}")]
    Method {
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Wraps an inner error with the name of the method that produced it.
    pub fn in_method(self, method: impl Into<String>) -> Self {
        Error::Method {
            method: method.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad user input, as opposed to I/O failures.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Io(_) => false,
            Error::Method { source, .. } => source.is_validation(),
            _ => true,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Probability {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

pub(crate) fn check_open_probability(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::Probability {
            name,
            value,
            range: "(0, 1)",
        })
    }
}
