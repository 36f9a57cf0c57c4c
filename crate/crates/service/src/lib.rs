//! JSON API over a file-backed store of datasets, sessions and models.

pub mod api;
pub mod error;
pub mod http;
pub mod store;

pub use api::Service;
pub use error::{ApiError, ErrorBody, ErrorKind};
