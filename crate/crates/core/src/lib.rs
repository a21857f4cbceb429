//! Experiment platform for comparing a generic support chatbot with
//! "self-clone" chatbots that imitate the participant's own supportive
//! style.
//!
//! The crate covers the whole study pipeline: prompt rendering, supportive
//! strategy profiling, an LLM gateway, the session state machine, survey
//! scoring, behavioural metrics, durable storage, the analysis report and an
//! HTTP API for the web front end.

pub mod chat;
pub mod clock;
pub mod dataset;
pub mod gateway;
pub mod http;
pub mod instruments;
pub mod metrics;
pub mod orchestrator;
pub mod prompt;
pub mod report;
pub mod session;
pub mod simulate;
pub mod ssp;
pub mod store;

pub use selfclone_stats as stats;
