//! Chat front end for a trained search-assistant policy: rule-based NLU,
//! session management, templated replies and an HTTP API.

pub mod demo;
pub mod engine;
pub mod error;
pub mod http;
pub mod model;
pub mod nlu;
pub mod session;
pub mod templates;

pub use engine::{handle_turn, AgentResponse, Assistant, Message};
pub use error::{Result, ServeError};
pub use http::{router, serve, MessageBody};
pub use model::Model;
