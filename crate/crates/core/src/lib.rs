//! Sybil extension games.
//!
//! Symmetric aggregative games in which a player may enter under several
//! identities, together with the mechanisms that remove the incentive to do
//! so: pie-shrinking reward splits, a lottery cake-cutting protocol, bidding
//! rings in second-price auctions and two-phase identity-commitment games.
//!
//! Every closed form in the crate is paired with a brute-force or numerical
//! route that can be used to check it: deviation searches over grids,
//! best-response dynamics, adaptive quadrature and Monte Carlo.
//!
//! - [`game`]: payoff oracles, Sybil payoffs and the deviation verifier.
//! - [`equilibrium`]: symmetric, mixed and pro-rata equilibria, price of anarchy.
//! - [`rdm`]: reward-distribution mechanisms.
//! - [`cake`]: piecewise-constant cake cutting with the lottery mechanism.
//! - [`ring`]: second-price auctions and `(T, g)` bidding rings.
//! - [`commitment`]: Sybil-commitment games.
//! - [`experiment`]: CSV-emitting experiment drivers used by the CLI.

// Validation uses `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cake;
pub mod commitment;
pub mod dist;
pub mod equilibrium;
pub mod error;
pub mod experiment;
pub mod game;
pub mod numeric;
pub mod rdm;
pub mod ring;
pub mod rng;

pub use error::{Error, Result};
