use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown type id {type_id} at particle index {index}")]
    UnknownType { index: usize, type_id: usize },

    #[error("infeasible collision: inputs carry {available} energy, outputs need {required}")]
    InfeasibleCollision { available: f64, required: f64 },

    #[error("outgoing kinetic energy {value} outside [0, {max}]")]
    EnergyOutOfRange { value: f64, max: f64 },

    #[error("infeasible unary reaction {from} -> {to}: resulting kinetic energy {kinetic} < 0")]
    InfeasibleUnary { from: usize, to: usize, kinetic: f64 },

    #[error("particle indices must differ and lie below {len}, got ({i}, {j})")]
    BadPair { i: usize, j: usize, len: usize },

    #[error("negative or non-finite rate {rate} from {source_desc}")]
    NegativeRate { rate: f64, source_desc: String },

    #[error("no probability mass at total energy {total}: conditioning is impossible")]
    EmptyConditioning { total: f64 },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("invalid input in `{field}`: {rule}")]
    Invalid { field: String, rule: String },

    #[error("solver blow-up at step {step} (t = {time}): {reason}; try a smaller dt")]
    BlowUp { step: usize, time: f64, reason: String },

    #[error("simulation fault at t = {time} (event {event}): {source}")]
    Event {
        time: f64,
        event: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn invalid(field: impl Into<String>, rule: impl Into<String>) -> Self {
        Error::Invalid {
            field: field.into(),
            rule: rule.into(),
        }
    }

    /// Short machine-readable kind, used in the CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnknownType { .. } => "unknown_type",
            Error::InfeasibleCollision { .. } => "infeasible_collision",
            Error::EnergyOutOfRange { .. } => "energy_out_of_range",
            Error::InfeasibleUnary { .. } => "infeasible_unary",
            Error::BadPair { .. } => "bad_pair",
            Error::NegativeRate { .. } => "negative_rate",
            Error::EmptyConditioning { .. } => "empty_conditioning",
            Error::Undefined(_) => "undefined",
            Error::Invalid { .. } => "invalid",
            Error::BlowUp { .. } => "blow_up",
            Error::Event { source, .. } => source.kind(),
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
        }
    }
}
