use thiserror::Error;

use crate::Millis;

#[derive(Debug, Error)]
pub enum Error {
    #[error("event scheduled in the past: fire_at={fire_at} < now={now}")]
    ScheduleInPast { fire_at: Millis, now: Millis },

    #[error("run_until target {t_end} precedes clock {now}")]
    RunBackwards { t_end: Millis, now: Millis },

    #[error("invalid config: {field}: {reason}")]
    Config { field: String, reason: String },

    #[error("unknown service `{0}`")]
    UnknownService(String),

    #[error("unknown metric `{0}` in hypothesis")]
    UnknownMetric(String),

    #[error("experiment pool is empty")]
    EmptyPool,

    #[error("snapshot window starts at {start} before trace start")]
    WindowBeforeTrace { start: i64 },

    #[error("window ending at {at} extends past trace end {end}")]
    WindowAfterTrace { at: Millis, end: Millis },

    #[error("empty evaluation window ({from}, {to}]")]
    EmptyWindow { from: Millis, to: Millis },

    #[error("trace parse error on line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
