//! Tri-hybrid multi-user MIMO precoding with pattern-reconfigurable antennas.
//!
//! The base station precodes in three domains: a digital baseband matrix, a
//! constant-modulus analog network, and a per-antenna radiation pattern. Two
//! pattern models are supported:
//!
//! * **selection** – each antenna picks one pattern out of a finite candidate set
//!   ([`patterns::CandidateSet`]);
//! * **synthesis** – each antenna radiates an arbitrary pattern expressed in a
//!   truncated real spherical-harmonics basis ([`sph_harmonics`]).
//!
//! Both are folded into a lifted channel ([`channel::EffectiveChannel`]) so the
//! pattern choice becomes a block-diagonal right factor, and then optimized by
//! weighted-MMSE block coordinate descent under per-antenna power budgets
//! ([`wmmse`]). The optimized fully digital precoder is finally split into analog
//! and digital parts ([`hybrid_decomp`]).

pub mod baselines;
pub mod channel;
pub mod error;
pub mod hybrid_decomp;
pub mod manifold;
pub mod metrics;
pub mod patterns;
pub mod sph_harmonics;
pub mod units;
pub mod wmmse;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;
