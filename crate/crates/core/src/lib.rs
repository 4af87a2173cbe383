//! Multi-language program translation with large language models,
//! judged by executing the translations against test cases.
//!
//! The pipeline: load a corpus ([`task`]), render prompts ([`prompt`]),
//! sample completions ([`llm`]) under a translation strategy
//! ([`strategy`]), build and test the extracted programs ([`exec`]) and
//! aggregate pass@k ([`metrics`]). [`run`] ties the steps together into
//! resumable runs.

pub mod digest;
pub mod error;
pub mod exec;
pub mod lang;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod run;
pub mod strategy;
pub mod task;

pub use error::{Error, Result};
pub use lang::ProgrammingLanguage;
