//! Residuals of the two-point operator on the product-form solutions.
//!
//! The operator acts on `G(z₁, w)` with `w = z̄₂` treated as an independent
//! variable. Drift terms follow the `(1 - ia)` convention of
//! [`crate::exact_spectra`]: `z₁((z₁+1)/(z₁-1) - ia)∂₁` and
//! `w((w+1)/(w-1) + ia)∂_w`.

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::exact_spectra::{MomentExponents, SleParams};
use crate::levy_driving::LevySymbol;
use crate::lle_fuchsian::{fourier_recursion_residual, relative_recursion_residual, FourierTable};
use crate::{Error, Real, Result, C64};

pub const DEFAULT_MARGIN: f64 = 1e-3;

/// `G(z₁, w) = (1-z₁)^α (1-w)^ᾱ (1-z₁w)^{-κ|α|²/2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CandidateG<T> {
    pub alpha: Complex<T>,
    pub kappa: T,
    pub a: T,
}

/// First and second logarithmic derivatives of a [`CandidateG`].
#[derive(Debug, Clone, Copy)]
pub struct LogDerivatives<T> {
    pub l1: Complex<T>,
    pub lw: Complex<T>,
    pub l11: Complex<T>,
    pub lww: Complex<T>,
    pub l1w: Complex<T>,
}

impl<T: Real> CandidateG<T> {
    pub fn new(alpha: Complex<T>, kappa: T, a: T) -> Result<Self> {
        if !(alpha.re.is_finite() && alpha.im.is_finite() && kappa.is_finite() && a.is_finite()) {
            return Err(Error::Domain("non-finite candidate parameters".into()));
        }
        Ok(Self { alpha, kappa, a })
    }

    /// Exponent `κ|α|²/2` of the cross factor.
    pub fn cross_exponent(&self) -> T {
        self.kappa * self.alpha.norm_sqr() / T::lit(2.0)
    }

    pub fn check_margin(&self, z1: Complex<T>, w: Complex<T>, margin: T) -> Result<()> {
        let one = Complex::new(T::one(), T::zero());
        let m = (one - z1).norm().min((one - w).norm()).min((one - z1 * w).norm());
        if m < margin || z1.norm() >= T::one() || w.norm() >= T::one() {
            return Err(Error::Margin(format!("z1 = {z1}, w = {w}, distance {m} < {margin}")));
        }
        Ok(())
    }

    pub fn log_value(&self, z1: Complex<T>, w: Complex<T>) -> Complex<T> {
        let one = Complex::new(T::one(), T::zero());
        let s = Complex::new(self.cross_exponent(), T::zero());
        self.alpha * (one - z1).ln() + self.alpha.conj() * (one - w).ln() - s * (one - z1 * w).ln()
    }

    pub fn value(&self, z1: Complex<T>, w: Complex<T>) -> Complex<T> {
        self.log_value(z1, w).exp()
    }

    pub fn log_derivatives(&self, z1: Complex<T>, w: Complex<T>) -> LogDerivatives<T> {
        let one = Complex::new(T::one(), T::zero());
        let s = Complex::new(self.cross_exponent(), T::zero());
        let (u1, uw, uc) = (one - z1, one - w, one - z1 * w);
        let ab = self.alpha.conj();
        LogDerivatives {
            l1: -self.alpha / u1 + s * w / uc,
            lw: -ab / uw + s * z1 / uc,
            l11: -self.alpha / (u1 * u1) + s * w * w / (uc * uc),
            lww: -ab / (uw * uw) + s * z1 * z1 / (uc * uc),
            l1w: s / (uc * uc),
        }
    }
}

/// Coefficients of `𝒫(∂)(1-z)^α = A(1-z)^α + B(1-z)^{α-1} + C(1-z)^{α-2}`.
pub fn abc_coefficients<T: Real>(
    alpha: Complex<T>,
    exps: &MomentExponents<T>,
    params: &SleParams<T>,
) -> (Complex<T>, Complex<T>, Complex<T>) {
    let k = Complex::new(params.kappa, T::zero());
    let half = T::lit(0.5);
    let ia = Complex::new(T::zero(), params.a);
    let one = Complex::new(T::one(), T::zero());
    let a2 = alpha * alpha;
    let big_a = -k * a2 * half + (one - ia) * alpha + exps.p - exps.q;
    let big_b = k * a2 - (k * half + T::lit(3.0) - ia) * alpha + exps.q;
    let big_c = -k * a2 * half + (k * half + T::lit(2.0)) * alpha - exps.p;
    (big_a, big_b, big_c)
}

/// `𝒫(∂)(1-z)^α` from analytic derivatives of `(1-z)^α`.
pub fn single_variable_operator<T: Real>(
    alpha: Complex<T>,
    exps: &MomentExponents<T>,
    params: &SleParams<T>,
    z: Complex<T>,
) -> Complex<T> {
    let one = Complex::new(T::one(), T::zero());
    let u = one - z;
    let g = (alpha * u.ln()).exp();
    let g1 = -alpha * g / u;
    let g2 = alpha * (alpha - one) * g / (u * u);
    let zd2 = z * g1 + z * z * g2;
    let ia = Complex::new(T::zero(), params.a);
    let half_k = Complex::new(params.kappa / T::lit(2.0), T::zero());
    -half_k * zd2 + ((z + one) / (z - one) - ia) * z * g1 + (exps.p - exps.q + exps.q / u - exps.p / (u * u)) * g
}

fn operator_over_g<T: Real>(
    z1: Complex<T>,
    w: Complex<T>,
    d: &LogDerivatives<T>,
    exps: &MomentExponents<T>,
    params: &SleParams<T>,
) -> Complex<T> {
    let one = Complex::new(T::one(), T::zero());
    let two = T::lit(2.0);
    let ia = Complex::new(T::zero(), params.a);
    let half_k = Complex::new(params.kappa / two, T::zero());
    let diffusion = z1 * d.l1 + z1 * z1 * (d.l11 + d.l1 * d.l1) - z1 * w * (d.l1w + d.l1 * d.lw) * two
        + w * d.lw
        + w * w * (d.lww + d.lw * d.lw);
    let drift = z1 * ((z1 + one) / (z1 - one) - ia) * d.l1 + w * ((w + one) / (w - one) + ia) * d.lw;
    let (p, q) = (exps.p, exps.q);
    let (pb, qb) = (p.conj(), q.conj());
    let (u1, uw) = (one - z1, one - w);
    let potential = p - q + pb - qb - p / (u1 * u1) + q / u1 - pb / (uw * uw) + qb / uw;
    -half_k * diffusion + drift + potential
}

/// `𝒫(D)G` at `(z₁, w)`.
pub fn residual<T: Real>(
    candidate: &CandidateG<T>,
    exps: &MomentExponents<T>,
    params: &SleParams<T>,
    z1: Complex<T>,
    w: Complex<T>,
) -> Result<Complex<T>> {
    candidate.check_margin(z1, w, T::lit(DEFAULT_MARGIN))?;
    let d = candidate.log_derivatives(z1, w);
    Ok(candidate.value(z1, w) * operator_over_g(z1, w, &d, exps, params))
}

/// `|𝒫(D)G| / |G|`.
pub fn relative_residual<T: Real>(
    candidate: &CandidateG<T>,
    exps: &MomentExponents<T>,
    params: &SleParams<T>,
    z1: Complex<T>,
    w: Complex<T>,
) -> Result<T> {
    candidate.check_margin(z1, w, T::lit(DEFAULT_MARGIN))?;
    let d = candidate.log_derivatives(z1, w);
    Ok(operator_over_g(z1, w, &d, exps, params).norm())
}

/// Same operator with derivatives of `G` from central differences of step `h`.
pub fn residual_finite_difference<T: Real>(
    candidate: &CandidateG<T>,
    exps: &MomentExponents<T>,
    params: &SleParams<T>,
    z1: Complex<T>,
    w: Complex<T>,
    h: T,
) -> Result<Complex<T>> {
    candidate.check_margin(z1, w, T::lit(DEFAULT_MARGIN))?;
    let g = |a: Complex<T>, b: Complex<T>| candidate.value(a, b);
    let hc = Complex::new(h, T::zero());
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let g0 = g(z1, w);
    let g1 = (g(z1 + hc, w) - g(z1 - hc, w)) / (hc * two);
    let gw = (g(z1, w + hc) - g(z1, w - hc)) / (hc * two);
    let g11 = (g(z1 + hc, w) - g0 * two + g(z1 - hc, w)) / (hc * hc);
    let gww = (g(z1, w + hc) - g0 * two + g(z1, w - hc)) / (hc * hc);
    let g1w = (g(z1 + hc, w + hc) - g(z1 + hc, w - hc) - g(z1 - hc, w + hc) + g(z1 - hc, w - hc)) / (hc * hc * four);
    let d = LogDerivatives {
        l1: g1 / g0,
        lw: gw / g0,
        l11: g11 / g0 - (g1 / g0) * (g1 / g0),
        lww: gww / g0 - (gw / g0) * (gw / g0),
        l1w: g1w / g0 - (g1 / g0) * (gw / g0),
    };
    Ok(g0 * operator_over_g(z1, w, &d, exps, params))
}

/// Residuals over a list of points, evaluated in parallel.
pub fn residual_grid<T: Real>(
    candidate: &CandidateG<T>,
    exps: &MomentExponents<T>,
    params: &SleParams<T>,
    points: &[(Complex<T>, Complex<T>)],
) -> Result<Vec<PointResidual<T>>> {
    points
        .par_iter()
        .map(|&(z1, w)| {
            let r = residual(candidate, exps, params, z1, w)?;
            let g = candidate.value(z1, w);
            Ok(PointResidual { z1, w, residual: r, relative: r.norm() / g.norm() })
        })
        .collect()
}

/// `n × n` grid of `(z₁, w)` pairs with `z₁` on a polar grid of radius at most
/// `r_max` and `w = conj(z₁)` rotated by a fixed angle.
pub fn default_grid<T: Real>(n: usize, r_max: T) -> Vec<(Complex<T>, Complex<T>)> {
    let mut out = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let r = r_max * T::from(i + 1).unwrap() / T::from(n).unwrap();
            let th = T::TAU() * (T::from(j).unwrap() + T::lit(0.5)) / T::from(n).unwrap();
            let z1 = Complex::from_polar(r, th);
            let w = Complex::from_polar(r * T::lit(0.9), -th + T::lit(0.7));
            out.push((z1, w));
        }
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PointResidual<T> {
    pub z1: Complex<T>,
    pub w: Complex<T>,
    pub residual: Complex<T>,
    pub relative: T,
}

#[derive(Debug, Clone, Serialize)]
pub struct PdeReport {
    pub alpha: C64,
    pub kappa: f64,
    pub a: f64,
    pub p: C64,
    pub q: C64,
    pub points: Vec<PointResidual<f64>>,
    pub max_relative: f64,
}

impl PdeReport {
    pub fn new(candidate: &CandidateG<f64>, exps: &MomentExponents<f64>, points: Vec<PointResidual<f64>>) -> Self {
        let max_relative = points.iter().map(|p| p.relative).fold(0.0, f64::max);
        Self { alpha: candidate.alpha, kappa: candidate.kappa, a: candidate.a, p: exps.p, q: exps.q, points, max_relative }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// `Λ(z^k z̄^l) = -η(k-l) z^k z̄^l`.
pub fn lambda_monomial(symbol: &LevySymbol, k: i32, l: i32, z: C64) -> C64 {
    -symbol.eta((k - l) as f64) * z.powi(k) * z.conj().powi(l)
}

/// `-κ/2 (z∂ - z̄∂̄)² u + ia (z∂ - z̄∂̄) u` for `u = z^k z̄^l`, applied as a
/// differential operator.
pub fn brownian_generator_monomial(kappa: f64, a: f64, k: i32, l: i32, z: C64) -> C64 {
    // (z∂ - z̄∂̄) maps z^k z̄^l to (k - l) z^k z̄^l
    let m = z.powi(k) * z.conj().powi(l);
    let e = C64::new((k - l) as f64, 0.0);
    let once = e * m;
    let twice = e * once;
    C64::new(-kappa / 2.0, 0.0) * twice + C64::new(0.0, a) * once
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModeResidual {
    pub n: i64,
    pub max_abs: f64,
    pub max_relative: f64,
}

/// Per-mode residuals of the Fourier recursion for `p = 2`.
///
/// Modes `|n| ≤ min(truncation, table.checked_modes)` are evaluated.
pub fn levy_mode_residual(table: &FourierTable, xis: &[f64], truncation: usize) -> Result<Vec<ModeResidual>> {
    if truncation < 2 {
        return Err(Error::Domain("truncation must be at least 2".into()));
    }
    let top = truncation.min(table.checked_modes) as i64;
    (-top..=top)
        .map(|n| {
            let mut max_abs = 0.0f64;
            let mut max_relative = 0.0f64;
            for &xi in xis {
                max_abs = max_abs.max(fourier_recursion_residual(table, n, xi)?.abs());
                max_relative = max_relative.max(relative_recursion_residual(table, n, xi)?);
            }
            Ok(ModeResidual { n, max_abs, max_relative })
        })
        .collect()
}
