//! HTTP service and command-line front end for the set expansion engine.
//!
//! A [`workspace::Workspace`] keeps projects under a store directory; the
//! [`api`] module serves them over HTTP and the `setexpand` binary drives
//! the same operations from the shell.

pub mod api;
pub mod config;
pub mod workspace;

pub use api::{router, AppState};
pub use workspace::{CorpusFormat, Project, ServiceError, Workspace};
