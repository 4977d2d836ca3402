//! Real Airy functions and integer-order modified Bessel functions of the
//! first kind, with exponentially scaled variants for large arguments.
//!
//! Scaling conventions:
//!
//! * Airy, `x > 0`: `Ai` and `Ai'` are multiplied by `exp(+zeta)`, `Bi` and
//!   `Bi'` by `exp(-zeta)`, with `zeta = (2/3) x^(3/2)`. For `x <= 0` the
//!   scaled and unscaled values coincide.
//! * Bessel: the scaled value is `exp(-x) I_n(x)`.

mod airy;
mod bessel;

pub use airy::{airy, airy_zeta, AiryPair};
pub use bessel::{bessel_i, bessel_i_deriv, bessel_i_scaled, BesselIValue, MAX_BESSEL_ORDER};
