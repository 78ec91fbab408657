//! A pseudospectral laboratory for the Klein-Gordon-Schrodinger system
//!
//! ```text
//! i u_t + Lap u        = -u n
//! n_tt + (1 - Lap) n   = |u|^2
//! ```
//!
//! in its first-order form `n_pm = n +/- i <D>^{-1} n_t` on a periodic torus
//! `[0, 2 pi L)^d`, `d = 1, 2, 3`. The crate provides:
//!
//! * dealiased spectral kernels ([`spectral`]),
//! * Gevrey and Bourgain space-time norms ([`gevrey`]),
//! * the coupled system, its commutator operator and analytic initial data
//!   with a planted radius of analyticity ([`model`]),
//! * exact linear propagators, Strang splitting, Duhamel quadrature and a
//!   Picard fixed-point solver with measured contraction ([`evolution`]),
//! * radius-of-analyticity estimation, charge and almost-conservation
//!   monitoring, and decay-exponent fits ([`tracker`]),
//! * numerical probes of bilinear, commutator and convolution-integral
//!   estimates ([`probe`]),
//! * a batch CLI harness with deterministic CSV/JSON artifacts ([`harness`]).

// `!(x > 0.0)` is used throughout to reject NaN along with the sign check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
mod fft;
pub mod evolution;
pub mod gevrey;
pub mod harness;
pub mod model;
pub mod probe;
pub mod spectral;
pub mod testutil;
pub mod tracker;

pub use error::{KgsError, Result};
