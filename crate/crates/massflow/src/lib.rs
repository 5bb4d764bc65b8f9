//! Coalescing diffusions on the line that aggregate mass.
//!
//! The model: particles indexed by a mass coordinate `u` on `[0, b]` start at
//! positions given by a non-decreasing profile `g`. Each cluster diffuses as a
//! Brownian motion with variance rate `1/mass`; when clusters meet they stick,
//! sum their masses, and diffuse more slowly from then on. This crate provides
//!
//! * piecewise-constant initial profiles and the operators on them
//!   ([`profile`]),
//! * a discrete-time simulator with pool-adjacent-violators coalescence and a
//!   Brownian-bridge crossing correction ([`sim`]),
//! * reproducible keyed random streams ([`rng`]),
//! * streaming Monte Carlo estimators, exponent fits and quadrature
//!   ([`estimators`]),
//! * statistical checks of the model's probability bounds, martingale and
//!   quadratic-variation identities, rescaling invariance and small-time
//!   exponents ([`verify`]).

// Validation guards are written `!(x > 0.0)` so NaN parameters are rejected
// along with out-of-range ones. Check entry points mirror the experiment
// parameter lists.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod estimators;
pub mod profile;
pub mod rng;
pub mod runner;
pub mod sim;
pub mod special;
pub mod verify;
