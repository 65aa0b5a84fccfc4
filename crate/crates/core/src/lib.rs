//! Real-time wandering detection from GPS point streams.
//!
//! Raw points are compressed into stay points and blocks ([`preprocess`]),
//! heavy stay points are clustered into geofenced regions that cut blocks into
//! trajectories ([`region`]), trajectories become Hilbert-cell token
//! sequences ([`geohash`]), historical sequences are mined into a closed,
//! prefix-pruned pattern set ([`mining`]), and ongoing sequences are scored
//! against it by local alignment ([`detect`]).

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geo;
pub mod geohash;
pub mod preprocess;
pub mod region;
pub mod mining;
pub mod detect;
pub mod ibdd;
pub mod synth;
pub mod eval;
pub mod pipeline;

pub use error::{Error, Result};
