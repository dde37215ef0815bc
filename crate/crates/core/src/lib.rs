//! Smart-farm chatbot service for a lettuce plot: a chat gateway, an intent
//! matcher, a threshold recommendation engine, a simulated field and an
//! append-only store, tied together by the orchestrator's tick loop.

pub mod config;
pub mod gateway;
pub mod intent;
pub mod orchestrator;
pub mod recommend;
pub mod sim;
pub mod store;
pub mod replay;
pub mod server;
