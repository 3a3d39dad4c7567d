//! A live future-prediction environment with delayed rewards.
//!
//! Questions flow from [`sources`] through the [`qpipeline`] (templating,
//! filtering, domain-balanced resampling) into [`prompts`]; agents answer them
//! in [`rollout`]s whose prediction-time prefixes land in the [`ledger`]. Once
//! outcomes are retrieved by [`resolve`], the ledger backfills labels and
//! rewards and exports training groups. [`scoring`] holds every metric and the
//! [`orchestrator`] drives the daily cycle.

pub mod clock;
pub mod domain;
pub mod jsonl;
pub mod ledger;
pub mod orchestrator;
pub mod prompts;
pub mod qpipeline;
pub mod resolve;
pub mod rollout;
pub mod scoring;
pub mod seeding;
pub mod sources;

#[cfg(test)]
mod testutil;
