//! Between-shot session service: propose an ECH profile for a target
//! pressure, record the measured shot, inspect posterior slices and history.

pub mod http;
pub mod session;

pub use http::{router, serve, status_of, ApiError};
pub use session::*;
