//! Closed-form integral means spectra of drifted whole-plane SLE, the LQG
//! helper functions behind them, and the phase-transition diagram.

use std::fmt::Write as _;
use std::io::Write;

use num_complex::Complex;
use serde::Serialize;

use crate::{spiral_maps, Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentExponents<T> {
    pub p: Complex<T>,
    pub q: Complex<T>,
}

impl<T: Real> MomentExponents<T> {
    pub fn new(p: Complex<T>, q: Complex<T>) -> Self {
        Self { p, q }
    }

    pub fn real(p: T, q: T) -> Self {
        Self { p: Complex::new(p, T::zero()), q: Complex::new(q, T::zero()) }
    }

    pub fn is_finite(&self) -> bool {
        self.p.re.is_finite() && self.p.im.is_finite() && self.q.re.is_finite() && self.q.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SleParams<T> {
    pub kappa: T,
    pub a: T,
}

impl<T: Real> SleParams<T> {
    pub fn new(kappa: T, a: T) -> Result<Self> {
        if !(kappa >= T::zero()) || !a.is_finite() {
            return Err(Error::Domain(format!("kappa = {kappa}, a = {a}")));
        }
        Ok(Self { kappa, a })
    }

    fn require_positive(&self) -> Result<()> {
        if self.kappa > T::zero() {
            Ok(())
        } else {
            Err(Error::Domain("formula requires kappa > 0".into()))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Sign {
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Branch {
    Tip,
    /// The constant candidate `0` of the spiral spectra.
    Zero,
    Bulk0(Sign),
    Lin,
    One(Sign),
    /// The second spiral candidate `-2 Re((p-q)/(1-ia)) + Re p - 1`.
    Two,
    /// Red-parabola bulk value `kappa |alpha|^2 / 2`.
    Bulk,
}

impl Branch {
    pub fn label(&self) -> &'static str {
        match self {
            Branch::Tip => "tip",
            Branch::Zero => "zero",
            Branch::Bulk0(Sign::Minus) => "bulk0",
            Branch::Bulk0(Sign::Plus) => "bulk0+",
            Branch::Lin => "lin",
            Branch::One(Sign::Plus) => "one",
            Branch::One(Sign::Minus) => "one-",
            Branch::Two => "two",
            Branch::Bulk => "bulk",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumResult<T> {
    pub beta: T,
    pub branch: Branch,
    pub tau: Option<T>,
    pub valid: bool,
}

impl<T: Real> SpectrumResult<T> {
    fn new(beta: T, branch: Branch, tau: Option<T>) -> Self {
        Self { beta, branch, tau, valid: beta.is_finite() }
    }
}

/// Largest candidate; earlier entries win ties.
pub(crate) fn sup_of<T: Real>(candidates: &[(T, Branch)]) -> SpectrumResult<T> {
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if c.0 > best.0 {
            best = c;
        }
    }
    SpectrumResult::new(best.0, best.1, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftlessPhases<T> {
    /// `None` when the square root argument is negative.
    pub tip: Option<T>,
    pub bulk0: Option<T>,
    pub lin: T,
    pub one: Option<T>,
}

fn sqrt_opt<T: Real>(x: T) -> Option<T> {
    if x >= T::zero() {
        Some(x.sqrt())
    } else {
        None
    }
}

pub fn beta_driftless_phases<T: Real>(p: T, q: T, kappa: T) -> Result<DriftlessPhases<T>> {
    SleParams::new(kappa, T::zero())?.require_positive()?;
    let (one, two, four) = (T::one(), T::lit(2.0), T::lit(4.0));
    let half = T::lit(0.5);
    let k4 = four + kappa;
    let disc = sqrt_opt(k4 * k4 - T::lit(8.0) * kappa * p);
    let tau = p - q;
    Ok(DriftlessPhases {
        tip: disc.map(|d| -p - one + (k4 - d) / four),
        bulk0: disc.map(|d| -p + k4 / (four * kappa) * (k4 - d)),
        lin: p - k4 * k4 / (T::lit(16.0) * kappa),
        one: sqrt_opt(one + two * kappa * tau).map(|s| p + two * tau - half - half * s),
    })
}

/// Special points `Q0 = (-1 - 3k/8, -2 - 7k/8)` and `P0`.
pub fn q0_point<T: Real>(kappa: T) -> (T, T) {
    (-T::one() - T::lit(3.0) * kappa / T::lit(8.0), -T::lit(2.0) - T::lit(7.0) * kappa / T::lit(8.0))
}

pub fn p0_point<T: Real>(kappa: T) -> (T, T) {
    let k4 = T::lit(4.0) + kappa;
    (
        T::lit(3.0) * k4 * k4 / (T::lit(32.0) * kappa),
        k4 * (T::lit(8.0) + kappa) / (T::lit(16.0) * kappa),
    )
}

fn s1<T: Real>(tau: T, kappa: T, sign: Sign) -> T {
    let root = (T::one() + T::lit(2.0) * kappa * tau).max(T::zero()).sqrt();
    let half = T::lit(0.5);
    match sign {
        Sign::Plus => T::lit(2.0) * tau + half - half * root,
        Sign::Minus => T::lit(2.0) * tau + half + half * root,
    }
}

/// `(Re w + |w|) / 2`, free of cancellation when `Re w < 0`.
fn half_re_plus_abs<T: Real>(re: T, im: T) -> T {
    let norm = re.hypot(im);
    if re >= T::zero() {
        T::lit(0.5) * (re + norm)
    } else if norm == T::zero() {
        T::zero()
    } else {
        T::lit(0.5) * im * im / (norm - re)
    }
}

/// `1 + 2 kappa tau` from the complex drifted formula.
pub fn one_plus_2kappa_tau<T: Real>(exps: &MomentExponents<T>, params: &SleParams<T>) -> T {
    let ia = Complex::new(T::one(), -params.a);
    let w = ia * ia + (exps.p - exps.q) * (T::lit(2.0) * params.kappa);
    half_re_plus_abs(w.re, w.im)
}

/// Both branches `(beta_1^+, beta_1^-)`.
pub fn beta1_pm<T: Real>(exps: &MomentExponents<T>, params: &SleParams<T>) -> (SpectrumResult<T>, SpectrumResult<T>) {
    let kappa = params.kappa;
    let tau = if kappa == T::zero() {
        spiral_maps::spiral_tau(exps, params.a)
    } else {
        (one_plus_2kappa_tau(exps, params) - T::one()) / (T::lit(2.0) * kappa)
    };
    let shift = exps.p.re - T::one();
    let plus = SpectrumResult::new(s1(tau, kappa, Sign::Plus) + shift, Branch::One(Sign::Plus), Some(tau));
    let minus = SpectrumResult::new(s1(tau, kappa, Sign::Minus) + shift, Branch::One(Sign::Minus), Some(tau));
    (plus, minus)
}

/// Physical branch `beta_1 = beta_1^+` for complex exponents.
pub fn beta1_complex<T: Real>(exps: &MomentExponents<T>, params: &SleParams<T>) -> SpectrumResult<T> {
    beta1_pm(exps, params).0
}

pub fn tau_real_drift<T: Real>(p: T, q: T, params: &SleParams<T>) -> T {
    let two = T::lit(2.0);
    let a2 = params.a * params.a;
    let m = T::one() - a2 + two * params.kappa * (p - q);
    let one_plus = half_re_plus_abs(m, two * params.a);
    (one_plus - T::one()) / (two * params.kappa)
}

pub fn beta1_real_drift<T: Real>(p: T, q: T, params: &SleParams<T>) -> Result<SpectrumResult<T>> {
    params.require_positive()?;
    let tau = tau_real_drift(p, q, params);
    Ok(SpectrumResult::new(s1(tau, params.kappa, Sign::Plus) + p - T::one(), Branch::One(Sign::Plus), Some(tau)))
}

/// Inverse of the reduced variable: `p - q = tau (1 + a^2 / (1 + 2 kappa tau))`.
pub fn p_minus_q_from_tau<T: Real>(tau: T, params: &SleParams<T>) -> T {
    tau * (T::one() + params.a * params.a / (T::one() + T::lit(2.0) * params.kappa * tau))
}

pub fn b_prime<T: Real>(kappa: T) -> T {
    let k4 = T::lit(4.0) + kappa;
    k4 * k4 / (T::lit(8.0) * kappa)
}

/// Both branches `(beta_0^+, beta_0^-)` of the complex bulk spectrum.
pub fn beta0_pm<T: Real>(p: Complex<T>, kappa: T) -> Result<(SpectrumResult<T>, SpectrumResult<T>)> {
    SleParams::new(kappa, T::zero())?.require_positive()?;
    let bp = b_prime(kappa);
    let d = Complex::new(bp, T::zero()) - p;
    let tau_bar = half_re_plus_abs(d.re, d.im);
    let cross = T::lit(2.0) * (bp * tau_bar).sqrt();
    let base = T::one() + T::lit(2.0) * tau_bar + p.re - T::one();
    Ok((
        SpectrumResult::new(base + cross, Branch::Bulk0(Sign::Plus), Some(tau_bar)),
        SpectrumResult::new(base - cross, Branch::Bulk0(Sign::Minus), Some(tau_bar)),
    ))
}

pub fn beta0_complex<T: Real>(p: Complex<T>, kappa: T) -> Result<SpectrumResult<T>> {
    Ok(beta0_pm(p, kappa)?.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RedParabolaPoint<T> {
    pub alpha: Complex<T>,
    pub exps: MomentExponents<T>,
    pub kappa: T,
    pub a: T,
}

impl<T: Real> RedParabolaPoint<T> {
    pub fn bulk_beta(&self) -> T {
        T::lit(0.5) * self.kappa * self.alpha.norm_sqr()
    }

    /// Tip value, defined when `2 Re alpha <= -1`.
    pub fn tip_beta(&self) -> Option<T> {
        let two = T::lit(2.0);
        (two * self.alpha.re <= -T::one()).then(|| self.bulk_beta() - two * self.alpha.re - T::one())
    }

    pub fn spectrum(&self) -> SpectrumResult<T> {
        match self.tip_beta() {
            Some(t) if t > self.bulk_beta() => SpectrumResult::new(t, Branch::Tip, None),
            _ => SpectrumResult::new(self.bulk_beta(), Branch::Bulk, None),
        }
    }
}

pub fn red_parabola<T: Real>(alpha: Complex<T>, params: &SleParams<T>) -> Result<RedParabolaPoint<T>> {
    params.require_positive()?;
    let kappa = params.kappa;
    let half_k = T::lit(0.5) * kappa;
    let a2 = alpha * alpha;
    let p = -a2 * half_k + alpha * (T::lit(2.0) + half_k);
    let q_minus_p = -a2 * half_k + alpha * Complex::new(T::one(), -params.a);
    Ok(RedParabolaPoint { alpha, exps: MomentExponents::new(p, p + q_minus_p), kappa, a: params.a })
}

/// The real point of the red parabola for nonzero drift.
pub fn red_parabola_real_alpha<T: Real>(params: &SleParams<T>) -> Complex<T> {
    let kappa = params.kappa;
    let scale = (T::lit(4.0) + kappa) / (T::lit(2.0) * kappa);
    Complex::new(scale, -scale * T::lit(2.0) * params.a / (T::lit(2.0) + kappa))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LqgQuantities<T> {
    pub kappa: T,
    pub a: T,
    pub b: T,
    pub b_prime: T,
    pub c: T,
    pub x1: T,
    pub x1_tilde: T,
    pub t0_tilde: T,
}

pub fn lqg_suite<T: Real>(params: &SleParams<T>) -> Result<LqgQuantities<T>> {
    params.require_positive()?;
    let kappa = params.kappa;
    let (two, four, six, eight) = (T::lit(2.0), T::lit(4.0), T::lit(6.0), T::lit(8.0));
    Ok(LqgQuantities {
        kappa,
        a: params.a,
        b: (four - kappa) * (four - kappa) / (eight * kappa),
        b_prime: b_prime(kappa),
        c: (two * kappa).recip(),
        x1: (six - kappa) * (kappa - two) / (eight * kappa),
        x1_tilde: (six - kappa) / (two * kappa),
        t0_tilde: params.a / kappa,
    })
}

impl<T: Real> LqgQuantities<T> {
    /// KPZ function.
    pub fn u(&self, x: T) -> T {
        T::lit(0.25) * x * (self.kappa * x + T::lit(4.0) - self.kappa)
    }

    pub fn u_inv(&self, x: T) -> Result<T> {
        let k = self.kappa;
        let four = T::lit(4.0);
        let disc = (four - k) * (four - k) + T::lit(16.0) * k * x;
        let root = sqrt_opt(disc).ok_or_else(|| Error::Domain(format!("U^-1 undefined at {x}")))?;
        Ok((k - four + root) / (T::lit(2.0) * k))
    }

    pub fn v(&self, x: T) -> T {
        let k = self.kappa;
        let four = T::lit(4.0);
        (k * k * x * x - (four - k) * (four - k)) / (T::lit(16.0) * k)
    }

    pub fn x1_of_s(&self, s: T) -> Result<T> {
        Ok(T::lit(2.0) * self.v(self.u_inv(s)? + self.u_inv(self.x1_tilde)?))
    }

    pub fn k_of_s(&self, s: T) -> Result<T> {
        Ok(T::one() + self.u_inv(s)? / self.u_inv(self.x1_tilde)?)
    }

    /// Winding-weighted tip exponent, driftless centering.
    pub fn x1_hat(&self, s: T, t_tilde: T) -> Result<T> {
        let x = self.x1_of_s(s)?;
        Ok(x - T::lit(0.25) * t_tilde * t_tilde / (x + self.b))
    }

    /// Tip exponent re-centered around the spiral rate.
    pub fn x1_hat_drift(&self, s: T, t_tilde: T) -> Result<T> {
        self.x1_hat(s, t_tilde - self.t0_tilde)
    }

    /// `(+)`-branch reduced variable `tau(t, t~)` including the drift recentering.
    pub fn tau(&self, t: T, t_tilde: T) -> T {
        let shift = self.a * self.a / (T::lit(2.0) * self.kappa);
        let dt = t_tilde - self.t0_tilde;
        let e = t + self.c - shift;
        T::lit(0.5) * (t - self.c - shift + (e * e + dt * dt).sqrt())
    }

    /// Forward relation `t = tau + a^2/2k - (t~ - t~0)^2 / (4 (tau + c))`.
    pub fn t_of_tau(&self, tau: T, t_tilde: T) -> T {
        let dt = t_tilde - self.t0_tilde;
        tau + self.a * self.a / (T::lit(2.0) * self.kappa) - T::lit(0.25) * dt * dt / (tau + self.c)
    }
}

/// `a_0(kappa)` for `kappa < 4`.
pub fn a0_threshold<T: Real>(kappa: T) -> T {
    (T::lit(2.0) + kappa) / (T::lit(4.0) * (T::lit(4.0) - kappa))
}

/// `a~_0(kappa)` for `kappa > 4`.
pub fn a0_tilde_threshold<T: Real>(kappa: T) -> T {
    (T::lit(8.0) + kappa) / (T::lit(8.0) * (kappa - T::lit(4.0)))
}

/// `q~_0`, the second coordinate of `P0` after the drift transform.
pub fn q0_translated<T: Real>(params: &SleParams<T>) -> T {
    let k = params.kappa;
    let (p0, _) = p0_point(k);
    p0 + (T::lit(16.0) - k * k) / (T::lit(32.0) * k) * (T::one() + T::lit(16.0) * params.a * params.a / (k * k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DriftThresholds {
    /// From the closed-form conditions on `a^2 / kappa^2`.
    pub first_bisector_enters_iv: bool,
    pub second_bisector_enters_iii: bool,
    /// From the position of the translated `P0` relative to the bisectors.
    pub first_by_geometry: bool,
    pub second_by_geometry: bool,
}

pub fn drift_thresholds<T: Real>(params: &SleParams<T>) -> DriftThresholds {
    let k = params.kappa;
    let four = T::lit(4.0);
    let ratio = params.a * params.a / (k * k);
    let (p0, _) = p0_point(k);
    let q0t = q0_translated(params);
    DriftThresholds {
        first_bisector_enters_iv: k < four && ratio >= a0_threshold(k),
        second_bisector_enters_iii: k > four && ratio >= a0_tilde_threshold(k),
        first_by_geometry: q0t - T::lit(2.0) * p0 >= T::zero(),
        second_by_geometry: q0t <= T::zero(),
    }
}

pub(crate) fn bisect<T: Real, F: Fn(T) -> T>(f: F, mut lo: T, mut hi: T) -> Result<T> {
    let (mut flo, fhi) = (f(lo), f(hi));
    if flo == T::zero() {
        return Ok(lo);
    }
    if fhi == T::zero() {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Bracket(format!("f({lo}) and f({hi}) share a sign")));
    }
    for _ in 0..200 {
        let mid = T::lit(0.5) * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(T::lit(0.5) * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum CurveId {
    TipOne,
    ZeroOne,
    ZeroLin,
    LinOne,
    TipZero,
    /// Static reference line `p - q = 1 + kappa/2`.
    D2,
    /// Static reference line `q - p = (16 - kappa^2) / 32 kappa`.
    D1,
    /// Static reference point `P3`.
    P3,
    /// Translated triple point.
    P0,
}

impl CurveId {
    pub fn label(&self) -> &'static str {
        match self {
            CurveId::TipOne => "tip_one",
            CurveId::ZeroOne => "zero_one",
            CurveId::ZeroLin => "zero_lin",
            CurveId::LinOne => "lin_one",
            CurveId::TipZero => "tip_zero",
            CurveId::D2 => "ref_D2",
            CurveId::D1 => "ref_D1",
            CurveId::P3 => "ref_P3",
            CurveId::P0 => "P0",
        }
    }
}

/// `tau` where `d s_1 / d tau = 0`, i.e. `1 + 2 kappa tau = kappa^2 / 16`.
fn tau_min<T: Real>(kappa: T) -> Result<T> {
    let slope = |tau: T| T::lit(2.0) - kappa / (T::lit(2.0) * (T::one() + T::lit(2.0) * kappa * tau).sqrt());
    let lo = -(T::lit(2.0) * kappa).recip() * (T::one() - T::lit(1e-15));
    let mut hi = T::one();
    while slope(hi) <= T::zero() {
        hi = hi * T::lit(2.0);
    }
    bisect(slope, lo, hi)
}

/// Driftless `tau = p - q` on the increasing branch of `s_1` where
/// `s_1(tau) + p - 1 = target`.
fn solve_tau_for_beta1<T: Real>(target: T, p: T, kappa: T) -> Result<T> {
    let lo = tau_min(kappa)?;
    let g = |tau: T| s1(tau, kappa, Sign::Plus) + p - T::one() - target;
    if g(lo) > T::zero() {
        return Err(Error::Bracket(format!("beta_1 exceeds the target everywhere at p = {p}")));
    }
    let mut hi = lo.abs().max(T::one());
    while g(hi) < T::zero() {
        hi = hi * T::lit(2.0);
    }
    bisect(g, lo, hi)
}

fn phases<T: Real>(p: T, kappa: T) -> Result<DriftlessPhases<T>> {
    beta_driftless_phases(p, p, kappa)
}

/// Driftless separatrix at abscissa `p`: returns `tau = p - q`.
pub fn driftless_locus_tau<T: Real>(curve: CurveId, p: T, kappa: T) -> Result<T> {
    let ph = phases(p, kappa)?;
    let missing = || Error::Domain(format!("square root undefined at p = {p}"));
    match curve {
        CurveId::TipOne => solve_tau_for_beta1(ph.tip.ok_or_else(missing)?, p, kappa),
        CurveId::ZeroOne => solve_tau_for_beta1(ph.bulk0.ok_or_else(missing)?, p, kappa),
        // beta_1 >= beta_lin with equality only at the minimum of s_1: a double
        // root, so the tangency is located through the derivative instead.
        CurveId::LinOne => tau_min(kappa),
        _ => Err(Error::Domain(format!("{} is not a graph over p", curve.label()))),
    }
}

/// Abscissa of the vertical separatrices `beta_0 = beta_lin` and `beta_tip = beta_0`.
pub fn vertical_locus_p<T: Real>(curve: CurveId, kappa: T) -> Result<T> {
    let four = T::lit(4.0);
    let k4 = four + kappa;
    let bp = b_prime(kappa);
    match curve {
        CurveId::ZeroLin => {
            // beta_0 - beta_lin is convex with a double zero; bisect its derivative.
            let d = |p: T| -T::lit(2.0) + k4 / (k4 * k4 - T::lit(8.0) * kappa * p).sqrt();
            let (qp, _) = q0_point(kappa);
            bisect(d, qp, bp * (T::one() - T::lit(1e-12)))
        }
        CurveId::TipZero => {
            let g = |p: T| {
                let ph = phases(p, kappa).expect("kappa > 0");
                ph.tip.unwrap() - ph.bulk0.unwrap()
            };
            let mut lo = -T::one();
            while g(lo) <= T::zero() {
                lo = lo * T::lit(2.0);
            }
            bisect(g, lo, bp)
        }
        _ => Err(Error::Domain(format!("{} is not a vertical line", curve.label()))),
    }
}

/// Image `(p, q) -> (p, p - tau (1 + a^2 / (1 + 2 kappa tau)))` with `tau = p - q`.
pub fn transform_point<T: Real>(p: T, q: T, params: &SleParams<T>) -> (T, T) {
    (p, p - p_minus_q_from_tau(p - q, params))
}

/// Direct drifted equality locus `beta_X(p) = beta_1(p, q; kappa, a)`, solved in `q`.
pub fn drifted_locus_q<T: Real>(curve: CurveId, p: T, params: &SleParams<T>) -> Result<T> {
    params.require_positive()?;
    let ph = phases(p, params.kappa)?;
    let missing = || Error::Domain(format!("square root undefined at p = {p}"));
    let target = match curve {
        CurveId::TipOne => ph.tip.ok_or_else(missing)?,
        CurveId::ZeroOne => ph.bulk0.ok_or_else(missing)?,
        _ => return Err(Error::Domain(format!("{} has no direct drifted solver", curve.label()))),
    };
    let d_min = p_minus_q_from_tau(tau_min(params.kappa)?, params);
    let g = |q: T| beta1_real_drift(p, q, params).expect("kappa > 0").beta - target;
    let q_hi = p - d_min;
    if g(q_hi) > T::zero() {
        return Err(Error::Bracket(format!("no crossing at p = {p}")));
    }
    let mut step = T::one();
    let mut q_lo = q_hi - step;
    while g(q_lo) < T::zero() {
        step = step * T::lit(2.0);
        q_lo = q_hi - step;
    }
    bisect(g, q_lo, q_hi)
}

/// Phase region at a real point, following the separatrix topology.
pub fn phase_region<T: Real>(p: T, q: T, params: &SleParams<T>) -> Result<Branch> {
    params.require_positive()?;
    let kappa = params.kappa;
    let (p_left, _) = q0_point(kappa);
    let (p_right, _) = p0_point(kappa);
    let tau_drift = tau_real_drift(p, q, params);
    let boundary = if p <= p_left {
        (CurveId::TipOne, Branch::Tip)
    } else if p <= p_right {
        (CurveId::ZeroOne, Branch::Bulk0(Sign::Minus))
    } else {
        (CurveId::LinOne, Branch::Lin)
    };
    let tau_star = driftless_locus_tau(boundary.0, p, kappa)?;
    Ok(if tau_drift <= tau_star { boundary.1 } else { Branch::One(Sign::Plus) })
}

/// Generalized spectrum at a real point for drifted SLE.
pub fn generalized_spectrum<T: Real>(p: T, q: T, params: &SleParams<T>) -> Result<SpectrumResult<T>> {
    let region = phase_region(p, q, params)?;
    let ph = phases(p, params.kappa)?;
    let missing = || Error::Domain(format!("square root undefined at p = {p}"));
    Ok(match region {
        Branch::Tip => SpectrumResult::new(ph.tip.ok_or_else(missing)?, Branch::Tip, None),
        Branch::Bulk0(s) => SpectrumResult::new(ph.bulk0.ok_or_else(missing)?, Branch::Bulk0(s), None),
        Branch::Lin => SpectrumResult::new(ph.lin, Branch::Lin, None),
        _ => beta1_real_drift(p, q, params)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseCurve<T> {
    pub id: CurveId,
    /// Phase on the left of the direction of travel (above a graph over `p`).
    pub left: Option<Branch>,
    pub right: Option<Branch>,
    pub points: Vec<(T, T)>,
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseDiagram<T> {
    pub params: SleParams<T>,
    pub p_range: (T, T),
    pub resolution: usize,
    pub curves: Vec<PhaseCurve<T>>,
    pub references: Vec<PhaseCurve<T>>,
    pub thresholds: DriftThresholds,
}

fn linspace<T: Real>(lo: T, hi: T, n: usize) -> impl Iterator<Item = T> {
    (0..n).map(move |i| lo + (hi - lo) * T::from(i).unwrap() / T::from(n - 1).unwrap())
}

fn graph_curve<T: Real>(id: CurveId, left: Branch, window: (T, T), params: &SleParams<T>, n: usize) -> PhaseCurve<T> {
    let mut curve = PhaseCurve { id, left: Some(left), right: Some(Branch::One(Sign::Plus)), points: vec![], failures: vec![] };
    if window.0 >= window.1 {
        return curve;
    }
    for p in linspace(window.0, window.1, n) {
        match driftless_locus_tau(id, p, params.kappa) {
            Ok(tau) => curve.points.push(transform_point(p, p - tau, params)),
            Err(e) => curve.failures.push(format!("p = {p}: {e}")),
        }
    }
    curve
}

pub fn phase_diagram<T: Real>(params: &SleParams<T>, p_range: (T, T), resolution: usize) -> Result<PhaseDiagram<T>> {
    params.require_positive()?;
    if resolution < 16 || !(p_range.0 < p_range.1) {
        return Err(Error::Domain("need resolution >= 16 and an increasing p range".into()));
    }
    let kappa = params.kappa;
    let (pl, _) = q0_point(kappa);
    let (p0, q0) = p0_point(kappa);
    let clip = |lo: T, hi: T| (lo.max(p_range.0), hi.min(p_range.1));
    let mut curves = vec![
        graph_curve(CurveId::TipOne, Branch::Tip, clip(p_range.0, pl), params, resolution),
        graph_curve(CurveId::ZeroOne, Branch::Bulk0(Sign::Minus), clip(pl, p0), params, resolution),
        graph_curve(CurveId::LinOne, Branch::Lin, clip(p0, p_range.1), params, resolution),
    ];
    let height = p_range.1 - p_range.0;
    for (id, left, right, top) in [
        (CurveId::ZeroLin, Branch::Bulk0(Sign::Minus), Branch::Lin, p0_point(kappa)),
        (CurveId::TipZero, Branch::Tip, Branch::Bulk0(Sign::Minus), q0_point(kappa)),
    ] {
        let mut curve = PhaseCurve { id, left: Some(left), right: Some(right), points: vec![], failures: vec![] };
        match vertical_locus_p(id, kappa) {
            Ok(p) if p >= p_range.0 && p <= p_range.1 => {
                let tau_top = p - top.1;
                for q in linspace(top.1, top.1 + height, resolution) {
                    let tau = p - q;
                    // The transform is singular where 1 + 2 kappa tau = 0.
                    if T::one() + T::lit(2.0) * kappa * tau > T::zero() || params.a == T::zero() {
                        curve.points.push(transform_point(p, q, params));
                    }
                }
                let _ = tau_top;
            }
            Ok(_) => {}
            Err(e) => curve.failures.push(e.to_string()),
        }
        curves.push(curve);
    }
    let d2 = T::one() + kappa / T::lit(2.0);
    let d1 = (T::lit(16.0) - kappa * kappa) / (T::lit(32.0) * kappa);
    let p3 = (T::one() + T::lit(2.0) / kappa, (T::lit(4.0) - kappa * kappa) / (T::lit(2.0) * kappa));
    let line = |id: CurveId, offset: T| PhaseCurve {
        id,
        left: None,
        right: None,
        points: vec![(p_range.0, p_range.0 + offset), (p_range.1, p_range.1 + offset)],
        failures: vec![],
    };
    let point = |id: CurveId, pt: (T, T)| PhaseCurve { id, left: None, right: None, points: vec![pt], failures: vec![] };
    let references = vec![
        line(CurveId::D2, -d2),
        line(CurveId::D1, d1),
        point(CurveId::P3, p3),
        point(CurveId::P0, (p0, if params.a == T::zero() { q0 } else { q0_translated(params) })),
    ];
    Ok(PhaseDiagram { params: *params, p_range, resolution, curves, references, thresholds: drift_thresholds(params) })
}

impl<T: Real> PhaseDiagram<T> {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::Quality(e.to_string());
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["p", "q", "curve_id", "branch_left", "branch_right"]).map_err(io)?;
        for c in self.curves.iter().chain(&self.references) {
            let left = c.left.map(|b| b.label()).unwrap_or("");
            let right = c.right.map(|b| b.label()).unwrap_or("");
            for (p, q) in &c.points {
                w.write_record([p.to_string(), q.to_string(), c.id.label().to_string(), left.into(), right.into()])
                    .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::Quality(e.to_string()))
    }

    pub fn to_svg(&self) -> String {
        let all: Vec<(f64, f64)> = self
            .curves
            .iter()
            .chain(&self.references)
            .flat_map(|c| c.points.iter().map(|(p, q)| (p.to_f64().unwrap(), q.to_f64().unwrap())))
            .collect();
        let (pmin, pmax) = (self.p_range.0.to_f64().unwrap(), self.p_range.1.to_f64().unwrap());
        let qmin = all.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
        let qmax = all.iter().map(|x| x.1).fold(f64::NEG_INFINITY, f64::max);
        let (w, h) = (800.0, 600.0);
        let sx = |p: f64| (p - pmin) / (pmax - pmin) * w;
        let sy = |q: f64| h - (q - qmin) / (qmax - qmin).max(1e-12) * h;
        let mut s = String::new();
        let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
        let _ = writeln!(s, r#"<rect x="0" y="0" width="{w}" height="{h}" fill="none" stroke="black"/>"#);
        for c in self.curves.iter().chain(&self.references) {
            if c.points.len() < 2 {
                for (p, q) in &c.points {
                    let (x, y) = (sx(p.to_f64().unwrap()), sy(q.to_f64().unwrap()));
                    let _ = writeln!(s, r#"<circle id="{}" cx="{x:.3}" cy="{y:.3}" r="3"/>"#, c.id.label());
                }
                continue;
            }
            let d: Vec<String> = c
                .points
                .iter()
                .enumerate()
                .map(|(i, (p, q))| {
                    let cmd = if i == 0 { 'M' } else { 'L' };
                    format!("{cmd}{:.3},{:.3}", sx(p.to_f64().unwrap()), sy(q.to_f64().unwrap()))
                })
                .collect();
            let _ = writeln!(s, r#"<path id="{}" d="{}" fill="none" stroke="black"/>"#, c.id.label(), d.join(" "));
        }
        s.push_str("</svg>\n");
        s
    }
}
