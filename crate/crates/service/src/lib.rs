//! HTTP service running adaptive identification sessions: register an
//! instance, open a session with a builder configuration, and answer the
//! queries it asks until an object or group is identified.

pub mod error;
pub mod http;
pub mod sessions;

pub use error::{ServiceError, ServiceResult};
pub use http::{app, router, serve, ServerConfig};
pub use sessions::{
    AnswerRecord, Candidate, CreateSession, GroupCandidate, InstanceSummary, SessionService, SessionView, Status,
    SubmitAnswer, DEFAULT_IDLE_TIMEOUT,
};
