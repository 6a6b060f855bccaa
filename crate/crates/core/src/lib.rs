//! Reinforcement-learning workbench for a conversational search assistant.
//!
//! A virtual user estimated from session logs converses with an agent over
//! a small tag-indexed asset catalog. Agents are trained either with
//! tabular Q-learning ([`qagent`]) or with asynchronous advantage
//! actor-critic over an LSTM policy ([`a3c`], built on [`neural`]).

// NaN must fail range checks, so they are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod a3c;
pub mod domain;
pub mod env;
pub mod error;
pub mod neural;
pub mod par;
pub mod qagent;
pub mod search;
pub mod synth;
pub mod usersim;

pub use error::{Error, Result};
