//! Classify software-repository artifacts with LLM approaches and evaluate them.
//!
//! The crate is organized around interchangeable strategies that are looked up
//! by name at runtime:
//!
//! * [`approach`]: single-turn baselines and agent loops behind [`approach::Approach`].
//! * [`gateway`]: text-generation backends behind [`gateway::Backend`].
//! * [`sandbox`]: isolation mechanisms behind [`sandbox::Isolation`].
//!
//! Around those sit the task registry ([`task`]), price accounting
//! ([`accounting`]), the experiment runner ([`runner`]) and report builders
//! ([`analysis`]).

pub mod accounting;
pub mod analysis;
pub mod approach;
pub mod gateway;
pub mod runner;
pub mod sandbox;
pub mod shell;
pub mod task;

/// Estimate a token count from text length (characters / 4, rounded up).
///
/// Only used for cache-marker placement, context sizing and the mock backend;
/// billing always uses backend-reported usage.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}
