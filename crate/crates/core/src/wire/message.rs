use std::fmt;

use serde::{Deserialize, Serialize};

/// Longest request id accepted on the wire, in bytes.
pub const MAX_ID_LEN: usize = 64;

/// Variable type of one coordinate of a point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Continuous,
    Ordinal,
    Binary,
    Categorical,
}

impl ValueKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ValueKind::Continuous => "continuous",
            ValueKind::Ordinal => "ordinal",
            ValueKind::Binary => "binary",
            ValueKind::Categorical => "categorical",
        }
    }

    /// Whether `value` lies in the range allowed for this kind.
    ///
    /// Continuous values live in the unit interval, binary values are 0 or 1,
    /// ordinal and categorical values are non-negative integer indices.
    pub fn admits(self, value: f64) -> bool {
        match self {
            ValueKind::Continuous => (0.0..=1.0).contains(&value),
            ValueKind::Binary => value == 0.0 || value == 1.0,
            ValueKind::Ordinal | ValueKind::Categorical => {
                value.is_finite() && value >= 0.0 && value.fract() == 0.0
            }
        }
    }
}

impl fmt::Display for ValueKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One coordinate of an evaluation point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Value {
    #[serde(rename = "type")]
    pub kind: ValueKind,
    pub value: f64,
}

impl Value {
    pub fn new(kind: ValueKind, value: f64) -> Self {
        Self { kind, value }
    }

    pub fn continuous(value: f64) -> Self {
        Self::new(ValueKind::Continuous, value)
    }

    pub fn binary(bit: bool) -> Self {
        Self::new(ValueKind::Binary, if bit { 1.0 } else { 0.0 })
    }

    pub fn ordinal(index: u32) -> Self {
        Self::new(ValueKind::Ordinal, f64::from(index))
    }

    pub fn categorical(index: u32) -> Self {
        Self::new(ValueKind::Categorical, f64::from(index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Evaluate,
    Describe,
    List,
    Health,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

/// Failure categories carried in error responses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownBenchmark,
    DimensionMismatch,
    TypeMismatch,
    ValueOutOfRange,
    WorkerUnavailable,
    WorkerTimeout,
    MalformedRequest,
    Internal,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 8] = [
        ErrorCode::UnknownBenchmark,
        ErrorCode::DimensionMismatch,
        ErrorCode::TypeMismatch,
        ErrorCode::ValueOutOfRange,
        ErrorCode::WorkerUnavailable,
        ErrorCode::WorkerTimeout,
        ErrorCode::MalformedRequest,
        ErrorCode::Internal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::UnknownBenchmark => "unknown_benchmark",
            ErrorCode::DimensionMismatch => "dimension_mismatch",
            ErrorCode::TypeMismatch => "type_mismatch",
            ErrorCode::ValueOutOfRange => "value_out_of_range",
            ErrorCode::WorkerUnavailable => "worker_unavailable",
            ErrorCode::WorkerTimeout => "worker_timeout",
            ErrorCode::MalformedRequest => "malformed_request",
            ErrorCode::Internal => "internal",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRequest {
    pub id: String,
    pub method: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<Value>>,
}

impl EvalRequest {
    pub fn evaluate(
        id: impl Into<String>,
        benchmark: impl Into<String>,
        values: Vec<Value>,
    ) -> Self {
        Self {
            id: id.into(),
            method: Method::Evaluate,
            benchmark: Some(benchmark.into()),
            values: Some(values),
        }
    }

    pub fn describe(id: impl Into<String>, benchmark: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            method: Method::Describe,
            benchmark: Some(benchmark.into()),
            values: None,
        }
    }

    pub fn list(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            method: Method::List,
            benchmark: None,
            values: None,
        }
    }

    pub fn health(id: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            method: Method::Health,
            benchmark: None,
            values: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResponse {
    pub id: String,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

impl EvalResponse {
    pub fn result(id: impl Into<String>, result: f64) -> Self {
        Self {
            id: id.into(),
            status: Status::Ok,
            result: Some(result),
            payload: None,
            error_code: None,
            message: None,
        }
    }

    pub fn payload(id: impl Into<String>, payload: serde_json::Value) -> Self {
        Self {
            id: id.into(),
            status: Status::Ok,
            result: None,
            payload: Some(payload),
            error_code: None,
            message: None,
        }
    }

    pub fn error(id: impl Into<String>, code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            status: Status::Error,
            result: None,
            payload: None,
            error_code: Some(code),
            message: Some(message.into()),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }
}

/// Reason a message fails its type invariants.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InvalidMessage {
    #[error("request id must be non-empty")]
    EmptyId,
    #[error("request id is {0} bytes, limit is {MAX_ID_LEN}")]
    IdTooLong(usize),
    #[error("method {0:?} requires field `{1}`")]
    MissingField(Method, &'static str),
    #[error("non-finite number in field `{0}`")]
    NonFinite(&'static str),
    #[error("ok response carries an error_code")]
    OkWithErrorCode,
    #[error("error response carries a result")]
    ErrorWithResult,
    #[error("error response lacks an error_code")]
    ErrorWithoutCode,
}

/// Messages that can travel inside a frame.
pub trait WireMessage: Serialize + serde::de::DeserializeOwned {
    fn validate(&self) -> Result<(), InvalidMessage>;
}

impl WireMessage for EvalRequest {
    fn validate(&self) -> Result<(), InvalidMessage> {
        if self.id.is_empty() {
            return Err(InvalidMessage::EmptyId);
        }
        if self.id.len() > MAX_ID_LEN {
            return Err(InvalidMessage::IdTooLong(self.id.len()));
        }
        match self.method {
            Method::Evaluate => {
                if self.benchmark.is_none() {
                    return Err(InvalidMessage::MissingField(self.method, "benchmark"));
                }
                let values = self
                    .values
                    .as_ref()
                    .ok_or(InvalidMessage::MissingField(self.method, "values"))?;
                if values.iter().any(|v| !v.value.is_finite()) {
                    return Err(InvalidMessage::NonFinite("values"));
                }
            }
            Method::Describe => {
                if self.benchmark.is_none() {
                    return Err(InvalidMessage::MissingField(self.method, "benchmark"));
                }
            }
            Method::List | Method::Health => {}
        }
        Ok(())
    }
}

impl WireMessage for EvalResponse {
    fn validate(&self) -> Result<(), InvalidMessage> {
        match self.status {
            Status::Ok => {
                if self.error_code.is_some() {
                    return Err(InvalidMessage::OkWithErrorCode);
                }
                if matches!(self.result, Some(r) if !r.is_finite()) {
                    return Err(InvalidMessage::NonFinite("result"));
                }
            }
            Status::Error => {
                if self.result.is_some() {
                    return Err(InvalidMessage::ErrorWithResult);
                }
                if self.error_code.is_none() {
                    return Err(InvalidMessage::ErrorWithoutCode);
                }
            }
        }
        Ok(())
    }
}
