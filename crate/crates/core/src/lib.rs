//! Two-phase cooperative broadcasting with batched sparse (BATS) codes.
//!
//! A source broadcasts fountain-coded batches to a group of nearby users
//! over an erasure channel; the users then repair each other with recoded
//! packets until everyone can decode. The crate contains:
//!
//! - [`gf`]: GF(2^8) arithmetic and dense linear algebra,
//! - [`codec`]: batch encoding, recoding, and BP/inactivation decoding,
//! - [`sched`]: per-user usefulness estimates and transmit queues,
//! - [`analytics`]: the closed-form planner (batch counts, stopping time,
//!   redundancy, rank distributions),
//! - [`sim`]: a seeded Monte-Carlo simulator of the whole protocol.

pub mod analytics;
pub mod codec;
pub mod error;
pub mod gf;
pub mod sched;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
