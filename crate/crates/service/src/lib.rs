//! Service layer for touchstone: the `/v1` HTTP API with its server-sent
//! event stream, on-disk persistence, the external explanation client and
//! the batch commands behind the `touchstone` binary.

pub mod api;
pub mod commands;
pub mod llm;
pub mod store;
