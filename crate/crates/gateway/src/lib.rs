//! Command line and HTTP access to reward-trail sessions.

pub mod cli;
pub mod http;
pub mod service;
