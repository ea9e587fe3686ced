use thiserror::Error;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Conflict(String),
    #[error("storage error: {0}")]
    Storage(#[from] std::io::Error),
}

impl From<querytree::Error> for ServiceError {
    fn from(e: querytree::Error) -> Self {
        match e {
            querytree::Error::Io(io) => ServiceError::Storage(io),
            other => ServiceError::BadRequest(other.to_string()),
        }
    }
}

pub type ServiceResult<T> = Result<T, ServiceError>;
