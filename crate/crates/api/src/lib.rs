//! HTTP and websocket service for collaborative video annotation, and the
//! admin command line built on the same operations.

pub mod auth;
pub mod cli;
pub mod config;
pub mod error;
pub mod media;
pub mod model;
pub mod permissions;
pub mod routes;
pub mod service;
mod ws;

pub use config::{Config, PasswordCost};
pub use error::{ApiError, ApiResult};
pub use permissions::{authorize, PermissionAction};
pub use routes::{router, serve};
pub use service::{Actor, App, GroupEdit};
