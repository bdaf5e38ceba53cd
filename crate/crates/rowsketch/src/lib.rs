//! Streaming randomized numerical linear algebra over row streams that
//! contain duplicates.
//!
//! The input model is a stream of `(row, tag)` pairs where rows sharing a
//! tag are exact copies, or a turnstile stream of signed integer rows.
//! Everything in this crate answers questions about the *deduplicated*
//! matrix: the one keeping a single copy of each tag (or of each row with
//! positive net frequency).
//!
//! The main entry points:
//!
//! * [`dedup_embed::dedup_subspace_embedding`] - one pass over a tagged
//!   stream, producing a small weighted row subset whose lp norms match
//!   the deduplicated matrix on every direction.
//! * [`linf_lra::RidgeCoreset`] - deterministic online coreset for
//!   max-distance (l-infinity) subspace approximation, with lp, outer
//!   radius, width and ellipsoid-region variants built on top.
//! * [`turnstile`] - linear sketches (L0 estimation/sampling, sparse
//!   recovery) and the multipass sensitivity-sampling embedding for
//!   streams with deletions.
//!
//! Supporting layers: offline and online lp sensitivities
//! ([`sensitivity`], [`online`]), well-conditioned bases ([`basis`]),
//! lp-to-l-infinity scaling matrices ([`linf_embed`]), and shared
//! numerical kernels ([`solvers`]: pseudo-inverse quadratic forms, a
//! certified dense LP solver, and IRLS p-norm minimization).
//!
//! All randomness is seeded and deterministic per `(seed, input)`;
//! streams are single-consumer, while distinct streams and seeds are safe
//! to run in parallel.

pub mod basis;
pub mod config;
pub mod dedup_embed;
pub mod error;
pub mod hashing;
pub mod io;
pub mod linalg;
pub mod linf_embed;
pub mod linf_lra;
pub mod online;
pub mod sensitivity;
pub mod solvers;
pub mod stats;
pub mod stream;
pub mod turnstile;

pub use config::Config;
pub use error::{Error, Result};

/// Dense matrix of reals; rows are stream elements, columns coordinates.
pub type Mat = nalgebra::DMatrix<f64>;
/// Dense column vector of reals.
pub type Vec64 = nalgebra::DVector<f64>;
