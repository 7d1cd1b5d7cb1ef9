//! HTTP service and CLI around `orthoplan-core`.
//!
//! [`api::router`] builds the REST API over an [`api::AppState`]; patients
//! are kept in a [`store::Store`] and evaluated by a [`pipeline::Pipeline`].

pub mod api;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod store;

pub use api::{router, AppState, SharedState};
