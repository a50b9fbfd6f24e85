//! Scalar abstraction for the numeric core.
//!
//! Everything downstream (channel model, bounds, Blahut-Arimoto, the
//! autoencoder) is generic over [`Real`], so the same code runs in `f32`
//! or `f64`. The crate root exports `f64` aliases for the common types;
//! `f64` is what the CLI and the reference tolerances assume.

use std::fmt::{Debug, Display};
use std::iter::{Product, Sum};

use num_traits::{Float, FloatConst, FromPrimitive, NumAssignOps, ToPrimitive};
use rand::Rng;
use rand_distr::StandardNormal;

/// Floating-point scalar usable throughout the crate.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssignOps
    + Sum
    + Product
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn of(x: f64) -> Self;

    /// One standard normal draw.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// One uniform draw from `[0, 1)`.
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// `self` as `f64` (exact for `f64`, widening for `f32`).
    fn to_f64_lossy(self) -> f64;
}

impl Real for f64 {
    #[inline]
    fn of(x: f64) -> Self {
        x
    }

    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f64>()
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Real for f32 {
    #[inline]
    fn of(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.sample(StandardNormal)
    }

    #[inline]
    fn unit_uniform<R: Rng + ?Sized>(rng: &mut R) -> Self {
        rng.gen::<f32>()
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}

/// dB value to linear power ratio: `10^(db/10)`.
#[inline]
pub fn db_to_lin<F: Real>(db: F) -> F {
    F::of(10.0).powf(db / F::of(10.0))
}

/// Linear power ratio to dB: `10·log10(lin)`.
#[inline]
pub fn lin_to_db<F: Real>(lin: F) -> F {
    F::of(10.0) * lin.log10()
}

/// dBm to linear power in mW (same arithmetic as [`db_to_lin`], kept
/// separate so call sites read in the right unit).
#[inline]
pub fn dbm_to_mw<F: Real>(dbm: F) -> F {
    db_to_lin(dbm)
}

/// Linear power in mW to dBm.
#[inline]
pub fn mw_to_dbm<F: Real>(mw: F) -> F {
    lin_to_db(mw)
}

/// Numerically stable `ln(Σ exp(x_i))` over a slice.
pub fn log_sum_exp<F: Real>(xs: &[F]) -> F {
    let mut m = F::neg_infinity();
    for &x in xs {
        if x > m {
            m = x;
        }
    }
    if m == F::neg_infinity() {
        return F::neg_infinity();
    }
    let mut acc = F::zero();
    for &x in xs {
        acc += (x - m).exp();
    }
    m + acc.ln()
}
