use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid {field}: {message}")]
    Validation { field: String, message: String },

    #[error("unknown ion species `{0}`")]
    UnknownSpecies(String),

    #[error("field evaluation outside domain: {0}")]
    Domain(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("{shape} cannot produce a {direction}-shim: electrode is mirror symmetric in y")]
    StructurallyUnavailable { shape: String, direction: String },

    #[error("step {step} (x = {x_um:.3} um) is infeasible")]
    InfeasibleStep { step: usize, x_um: f64 },

    #[error("malformed document: {0}")]
    Parse(String),
}

impl Error {
    pub fn validation(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            message: message.into(),
        }
    }
}
