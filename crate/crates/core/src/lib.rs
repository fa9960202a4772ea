//! Online multi-agent Volt-VAR control.
//!
//! The crate bundles a balanced distribution-network simulator ([`grid`]),
//! the constrained Markov game built on it ([`env`]), a small reverse-mode
//! neural substrate ([`neural`]), the multi-agent constrained soft
//! actor-critic learner ([`macsac`]) with its baselines ([`baselines`]), a
//! discrete-event simulation of asynchronous online learning and
//! decentralized control ([`oldc`]), and an experiment runner
//! ([`experiment`]).

pub mod baselines;
pub mod env;
pub mod experiment;
pub mod grid;
pub mod macsac;
pub mod neural;
pub mod oldc;
pub mod seed;

#[cfg(test)]
mod testutil;
