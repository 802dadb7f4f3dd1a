//! Whole-plane Loewner evolutions driven by Lévy processes.
//!
//! The closed-form layers (`special_fn`, `exact_spectra`, `spiral_maps`,
//! `pde_verify`) are generic over a [`Real`] scalar. The stochastic layers
//! (`levy_driving`, `loewner_sim`) work in `f64`, and the exact recursion in
//! `lle_fuchsian` works over big rationals and a quadratic extension.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst};

pub mod cli;
pub mod error;
pub mod exact_spectra;
pub mod levy_driving;
pub mod lle_fuchsian;
pub mod loewner_sim;
pub mod pde_verify;
pub mod special_fn;
pub mod spiral_maps;

pub use error::{Error, Result};

/// Floating-point scalar accepted by the generic modules.
pub trait Real: Float + FloatConst + Debug + Display + Send + Sync + 'static {
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from(x).expect("literal representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type C64 = Complex<f64>;
pub type C32 = Complex<f32>;
pub type Rational = num_rational::BigRational;
pub type QuadExt = lle_fuchsian::QuadExtScalar;

pub type MomentExponents64 = exact_spectra::MomentExponents<f64>;
pub type SleParams64 = exact_spectra::SleParams<f64>;
pub type SpectrumResult64 = exact_spectra::SpectrumResult<f64>;
pub type RedParabolaPoint64 = exact_spectra::RedParabolaPoint<f64>;
pub type LqgQuantities64 = exact_spectra::LqgQuantities<f64>;
pub type HypergeometricParams64 = special_fn::HypergeometricParams<f64>;
pub type CandidateG64 = pde_verify::CandidateG<f64>;
