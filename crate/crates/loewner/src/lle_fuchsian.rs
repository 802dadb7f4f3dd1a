//! Fourier-mode recursion for the Lévy-Loewner two-point function.
//!
//! Two symbol families are covered. For `η₂ = 4 - q` the first two modes are
//! hypergeometric and the spectrum is closed form. For `η₂ = -q` the modes are
//! polynomial in `1 - ξ` with an exact matrix recursion over `ℚ(√d)`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::special_fn::{hyp2f1, hyp2f1_at_one, HypergeometricParams};
use crate::spiral_maps::regression_slope;
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Exact scalars
// ---------------------------------------------------------------------------

/// Builds the rational `n / d`.
pub fn rational(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Parses `"a/b"`, an integer or a terminating decimal into an exact rational.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Domain(format!("not a rational number: {s:?}"));
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(n, d));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_digits = int.trim_start_matches(['-', '+']);
        if !int_digits.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let digits: BigInt = format!("{int_digits}{frac}").parse().map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10), frac.len());
        let value = BigRational::new(digits, scale);
        return Ok(if negative { -value } else { value });
    }
    let n: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(n))
}

const TRIAL_LIMIT: u64 = 1_000_000;

/// Splits `n > 0` as `s² · d` with `d` square-free.
///
/// Trial division runs up to `10⁶`; a cofactor left over after that is
/// checked for being a perfect square and otherwise taken as square-free.
fn square_free_split(n: &BigInt) -> (BigInt, BigInt) {
    let mut rest = n.clone();
    let mut root = BigInt::one();
    let mut free = BigInt::one();
    let mut p = 2u64;
    while p <= TRIAL_LIMIT {
        let bp = BigInt::from(p);
        if &bp * &bp > rest {
            break;
        }
        let mut e = 0u32;
        while (&rest % &bp).is_zero() {
            rest /= &bp;
            e += 1;
        }
        root *= num_traits::pow(bp.clone(), (e / 2) as usize);
        if e % 2 == 1 {
            free *= &bp;
        }
        p += if p == 2 { 1 } else { 2 };
    }
    let r = rest.sqrt();
    if &r * &r == rest {
        return (root * r, free);
    }
    (root, free * rest)
}

/// Element `a + b√d` of a real quadratic field, `d` a square-free integer.
///
/// Rational elements carry `b = 0`, `d = 1`. Binary operations adopt the
/// radicand of whichever operand has a nonzero radical part and panic if
/// both do with different radicands.
#[derive(Debug, Clone)]
pub struct QuadExtScalar {
    pub a: BigRational,
    pub b: BigRational,
    pub d: BigInt,
}

impl QuadExtScalar {
    pub fn from_rational(a: BigRational) -> Self {
        Self { a, b: BigRational::zero(), d: BigInt::one() }
    }

    pub fn from_int(n: i64) -> Self {
        Self::from_rational(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn zero() -> Self {
        Self::from_int(0)
    }

    pub fn one() -> Self {
        Self::from_int(1)
    }

    /// `a + b√d` with the radicand reduced to its square-free part.
    pub fn new(a: BigRational, b: BigRational, d: BigInt) -> Result<Self> {
        if d.is_negative() {
            return Err(Error::Domain(format!("negative radicand {d}")));
        }
        if d.is_zero() || b.is_zero() {
            return Ok(Self::from_rational(a));
        }
        let (s, d) = square_free_split(&d);
        Ok(Self::normalized(a, b * BigRational::from_integer(s), d))
    }

    /// `√r` for a rational `r ≥ 0`.
    pub fn sqrt(r: &BigRational) -> Result<Self> {
        if r.is_negative() {
            return Err(Error::Domain(format!("square root of negative rational {r}")));
        }
        if r.is_zero() {
            return Ok(Self::zero());
        }
        let n = r.numer() * r.denom();
        let (s, d) = square_free_split(&n);
        let coef = BigRational::new(s, r.denom().clone());
        Ok(Self::normalized(BigRational::zero(), coef, d))
    }

    fn normalized(a: BigRational, b: BigRational, d: BigInt) -> Self {
        if b.is_zero() {
            Self::from_rational(a)
        } else if d.is_one() {
            Self::from_rational(a + b)
        } else {
            Self { a, b, d }
        }
    }

    pub fn is_rational(&self) -> bool {
        self.b.is_zero()
    }

    pub fn as_rational(&self) -> Option<&BigRational> {
        self.is_rational().then_some(&self.a)
    }

    pub fn is_zero(&self) -> bool {
        self.a.is_zero() && self.b.is_zero()
    }

    pub fn conjugate(&self) -> Self {
        Self { a: self.a.clone(), b: -&self.b, d: self.d.clone() }
    }

    /// Field norm `a² - b²d`.
    pub fn norm(&self) -> BigRational {
        &self.a * &self.a - &self.b * &self.b * BigRational::from_integer(self.d.clone())
    }

    pub fn inverse(&self) -> Result<Self> {
        if self.is_zero() {
            return Err(Error::Domain("inverse of zero".into()));
        }
        let n = self.norm();
        let c = self.conjugate();
        Ok(Self::normalized(c.a / &n, c.b / &n, c.d))
    }

    pub fn scale(&self, r: &BigRational) -> Self {
        Self::normalized(&self.a * r, &self.b * r, self.d.clone())
    }

    /// Sign of the real number `a + b√d`.
    pub fn signum(&self) -> Ordering {
        let sa = self.a.cmp(&BigRational::zero());
        let sb = self.b.cmp(&BigRational::zero());
        if sb == Ordering::Equal {
            return sa;
        }
        if sa == Ordering::Equal || sa == sb {
            return sb;
        }
        // opposite signs: compare a² with b²d
        let a2 = &self.a * &self.a;
        let b2d = &self.b * &self.b * BigRational::from_integer(self.d.clone());
        match a2.cmp(&b2d) {
            Ordering::Greater => sa,
            Ordering::Less => sb,
            Ordering::Equal => Ordering::Equal,
        }
    }

    pub fn to_f64(&self) -> f64 {
        let a = self.a.to_f64().unwrap_or(f64::NAN);
        if self.b.is_zero() {
            return a;
        }
        a + self.b.to_f64().unwrap_or(f64::NAN) * self.d.to_f64().unwrap_or(f64::NAN).sqrt()
    }

    fn radicand_with(&self, other: &Self) -> BigInt {
        match (self.b.is_zero(), other.b.is_zero()) {
            (true, _) => other.d.clone(),
            (_, true) => self.d.clone(),
            _ => {
                assert_eq!(self.d, other.d, "mixed quadratic fields");
                self.d.clone()
            }
        }
    }
}

impl PartialEq for QuadExtScalar {
    fn eq(&self, other: &Self) -> bool {
        self.a == other.a && self.b == other.b && (self.b.is_zero() || self.d == other.d)
    }
}

impl Eq for QuadExtScalar {}

impl fmt::Display for QuadExtScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.b.is_zero() {
            return write!(f, "{}", self.a);
        }
        if self.a.is_zero() {
            write!(f, "{}*sqrt({})", self.b, self.d)
        } else if self.b.is_negative() {
            write!(f, "{}-{}*sqrt({})", self.a, -&self.b, self.d)
        } else {
            write!(f, "{}+{}*sqrt({})", self.a, self.b, self.d)
        }
    }
}

impl From<BigRational> for QuadExtScalar {
    fn from(r: BigRational) -> Self {
        Self::from_rational(r)
    }
}

impl From<&BigRational> for QuadExtScalar {
    fn from(r: &BigRational) -> Self {
        Self::from_rational(r.clone())
    }
}

impl<'a> Add<&'a QuadExtScalar> for &'a QuadExtScalar {
    type Output = QuadExtScalar;
    fn add(self, o: &QuadExtScalar) -> QuadExtScalar {
        let d = self.radicand_with(o);
        QuadExtScalar::normalized(&self.a + &o.a, &self.b + &o.b, d)
    }
}

impl<'a> Sub<&'a QuadExtScalar> for &'a QuadExtScalar {
    type Output = QuadExtScalar;
    fn sub(self, o: &QuadExtScalar) -> QuadExtScalar {
        let d = self.radicand_with(o);
        QuadExtScalar::normalized(&self.a - &o.a, &self.b - &o.b, d)
    }
}

impl<'a> Mul<&'a QuadExtScalar> for &'a QuadExtScalar {
    type Output = QuadExtScalar;
    fn mul(self, o: &QuadExtScalar) -> QuadExtScalar {
        let d = self.radicand_with(o);
        let dr = BigRational::from_integer(d.clone());
        let a = &self.a * &o.a + &self.b * &o.b * dr;
        let b = &self.a * &o.b + &o.a * &self.b;
        QuadExtScalar::normalized(a, b, d)
    }
}

impl<'a> Div<&'a QuadExtScalar> for &'a QuadExtScalar {
    type Output = QuadExtScalar;
    fn div(self, o: &QuadExtScalar) -> QuadExtScalar {
        self * &o.inverse().expect("division by zero in quadratic field")
    }
}

impl Neg for &QuadExtScalar {
    type Output = QuadExtScalar;
    fn neg(self) -> QuadExtScalar {
        QuadExtScalar { a: -&self.a, b: -&self.b, d: self.d.clone() }
    }
}

macro_rules! forward_owned {
    ($($tr:ident $m:ident),*) => {$(
        impl $tr<QuadExtScalar> for QuadExtScalar {
            type Output = QuadExtScalar;
            fn $m(self, o: QuadExtScalar) -> QuadExtScalar { (&self).$m(&o) }
        }
        impl<'a> $tr<&'a QuadExtScalar> for QuadExtScalar {
            type Output = QuadExtScalar;
            fn $m(self, o: &QuadExtScalar) -> QuadExtScalar { (&self).$m(o) }
        }
        impl<'a> $tr<QuadExtScalar> for &'a QuadExtScalar {
            type Output = QuadExtScalar;
            fn $m(self, o: QuadExtScalar) -> QuadExtScalar { self.$m(&o) }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul, Div div);

impl Neg for QuadExtScalar {
    type Output = QuadExtScalar;
    fn neg(self) -> QuadExtScalar {
        -&self
    }
}

type Q = QuadExtScalar;
pub type Vector3 = [QuadExtScalar; 3];
pub type Matrix3 = [[QuadExtScalar; 3]; 3];

fn qr(r: &BigRational) -> Q {
    Q::from_rational(r.clone())
}

fn qi(n: i64) -> Q {
    Q::from_int(n)
}

pub fn det3(m: &Matrix3) -> Q {
    let minor = |r1: usize, r2: usize, c1: usize, c2: usize| &m[r1][c1] * &m[r2][c2] - &m[r1][c2] * &m[r2][c1];
    &m[0][0] * minor(1, 2, 1, 2) - &m[0][1] * minor(1, 2, 0, 2) + &m[0][2] * minor(1, 2, 0, 1)
}

pub fn mat_vec(m: &Matrix3, v: &Vector3) -> Vector3 {
    std::array::from_fn(|i| &(&(&m[i][0] * &v[0]) + &(&m[i][1] * &v[1])) + &(&m[i][2] * &v[2]))
}

/// Cramer's rule; `None` when the matrix is singular.
pub fn solve3(m: &Matrix3, rhs: &Vector3) -> Option<Vector3> {
    let det = det3(m);
    if det.is_zero() {
        return None;
    }
    Some(std::array::from_fn(|col| {
        let mut mm = m.clone();
        for (row, r) in mm.iter_mut().zip(rhs) {
            row[col] = r.clone();
        }
        det3(&mm) / &det
    }))
}

fn cross(u: &Vector3, v: &Vector3) -> Vector3 {
    [
        &u[1] * &v[2] - &u[2] * &v[1],
        &u[2] * &v[0] - &u[0] * &v[2],
        &u[0] * &v[1] - &u[1] * &v[0],
    ]
}

fn is_zero_vec(v: &Vector3) -> bool {
    v.iter().all(Q::is_zero)
}

// ---------------------------------------------------------------------------
// Fourier tables
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct HyperMode {
    q: f64,
    c: f64,
    /// `a₊ / (2 - q)`, computed without dividing by `2 - q`.
    ratio: f64,
    f: HypergeometricParams<f64>,
    f1: HypergeometricParams<f64>,
    f2: HypergeometricParams<f64>,
    delta: f64,
}

impl HyperMode {
    /// `(f₀, f₀′, f₁, f₁′)` at `x`.
    fn eval(&self, x: f64) -> Result<[f64; 4]> {
        let HypergeometricParams { a, b, .. } = self.f;
        let c = self.c;
        let big = hyp2f1(&self.f, x)?;
        let big1 = hyp2f1(&self.f1, x)?;
        let big2 = hyp2f1(&self.f2, x)?;
        let f0 = big;
        let f0p = a * b / c * big1;
        let k = b * self.ratio / c;
        let f1 = self.ratio * big + k * (x - 1.0) * big1;
        let f1p = self.ratio * f0p + k * (big1 + (x - 1.0) * (a + 1.0) * (b + 1.0) / (c + 1.0) * big2);
        Ok([f0, f0p, f1, f1p])
    }
}

#[derive(Debug, Clone)]
enum ThetaKind {
    Zero,
    ThreeMinusQ,
    OneMinusQ,
    Hypergeometric(Box<HyperMode>),
    Polynomial { alpha: f64, coeffs: Vec<[f64; 3]> },
}

/// Fourier modes `θ_n(ξ)` of `h(z, z̄) = Σ θ_n(ξ) zⁿ` with `ξ = z z̄`.
///
/// Only nonnegative modes are stored; `θ_{-n}(ξ) = ξⁿ θ_n(ξ)`. Modes past
/// the stored ones evaluate to zero.
#[derive(Debug, Clone)]
pub struct FourierTable {
    pub q: f64,
    /// `η_0, η_1, ...`; missing entries read as zero.
    pub eta: Vec<f64>,
    /// Truncation used by residual sweeps.
    pub truncation: usize,
    /// Highest mode whose equation is fully determined by the stored modes.
    pub checked_modes: usize,
    kind: ThetaKind,
    perturbation: Option<(usize, f64)>,
}

impl FourierTable {
    /// All modes zero.
    pub fn zero(q: f64) -> Self {
        Self { q, eta: vec![0.0], truncation: 2, checked_modes: 2, kind: ThetaKind::Zero, perturbation: None }
    }

    /// `η₁ = 3 - q`: `θ₀ = (1-ξ)^{-(3-q)}`, all higher modes zero.
    pub fn three_minus_q(q: f64) -> Result<Self> {
        if q >= 3.0 {
            return Err(Error::Domain(format!("eta1 = 3 - q needs q < 3, got {q}")));
        }
        Ok(Self {
            q,
            eta: vec![0.0, 3.0 - q],
            truncation: 2,
            checked_modes: 2,
            kind: ThetaKind::ThreeMinusQ,
            perturbation: None,
        })
    }

    /// `η₁ = 1 - q`: `θ₀ = (1+ξ)(1-ξ)^{-(4-q)}`, `θ₁ = -2/(2-q) (1-ξ)^{-(4-q)}`.
    ///
    /// `θ₂` is not zero for this symbol but drops out of the first two
    /// equations, so only modes 0 and 1 are checked.
    pub fn one_minus_q(q: f64) -> Result<Self> {
        if q > 1.0 {
            return Err(Error::Domain(format!("eta1 = 1 - q needs q <= 1, got {q}")));
        }
        Ok(Self {
            q,
            eta: vec![0.0, 1.0 - q],
            truncation: 2,
            checked_modes: 1,
            kind: ThetaKind::OneMinusQ,
            perturbation: None,
        })
    }

    /// Polynomial ansatz `θ_j = (1-ξ)^{-α} Σ_k A_j^k (1-ξ)^k`, `j = 0, 1, 2`.
    pub fn polynomial(q: f64, eta1: f64, alpha: f64, coeffs: Vec<[f64; 3]>) -> Self {
        Self {
            q,
            eta: vec![0.0, eta1, -q],
            truncation: coeffs.len() + 1,
            checked_modes: 2,
            kind: ThetaKind::Polynomial { alpha, coeffs },
            perturbation: None,
        }
    }

    /// Copy with `eps` added to `θ_mode`.
    pub fn perturbed(&self, mode: usize, eps: f64) -> Self {
        Self { perturbation: Some((mode, eps)), ..self.clone() }
    }

    pub fn eta_n(&self, n: i64) -> f64 {
        self.eta.get(n.unsigned_abs() as usize).copied().unwrap_or(0.0)
    }

    fn bump(&self, n: usize) -> f64 {
        match self.perturbation {
            Some((m, eps)) if m == n => eps,
            _ => 0.0,
        }
    }

    /// `(θ_n, θ_n′)` for `n ≥ 0`.
    fn mode(&self, n: usize, xi: f64) -> Result<(f64, f64)> {
        let q = self.q;
        let u = 1.0 - xi;
        let (v, dv) = match &self.kind {
            ThetaKind::Zero => (0.0, 0.0),
            ThetaKind::ThreeMinusQ => match n {
                0 => (u.powf(q - 3.0), (3.0 - q) * u.powf(q - 4.0)),
                _ => (0.0, 0.0),
            },
            ThetaKind::OneMinusQ => {
                let s = 4.0 - q;
                match n {
                    0 => ((1.0 + xi) * u.powf(-s), u.powf(-s) + (1.0 + xi) * s * u.powf(-s - 1.0)),
                    1 => {
                        let k = -2.0 / (2.0 - q);
                        (k * u.powf(-s), k * s * u.powf(-s - 1.0))
                    }
                    _ => (0.0, 0.0),
                }
            }
            ThetaKind::Hypergeometric(h) => {
                if n > 1 {
                    (0.0, 0.0)
                } else {
                    let [f0, f0p, f1, f1p] = h.eval(xi)?;
                    let (f, fp) = if n == 0 { (f0, f0p) } else { (f1, f1p) };
                    let w = u.powf(-h.delta);
                    (w * f, h.delta * u.powf(-h.delta - 1.0) * f + w * fp)
                }
            }
            ThetaKind::Polynomial { alpha, coeffs } => {
                if n > 2 {
                    (0.0, 0.0)
                } else {
                    let mut f = 0.0;
                    let mut fp = 0.0;
                    for (k, row) in coeffs.iter().enumerate() {
                        f += row[n] * u.powi(k as i32);
                        if k > 0 {
                            fp -= k as f64 * row[n] * u.powi(k as i32 - 1);
                        }
                    }
                    let w = u.powf(-alpha);
                    (w * f, alpha * u.powf(-alpha - 1.0) * f + w * fp)
                }
            }
        };
        Ok((v + self.bump(n), dv))
    }

    /// `θ_n(ξ)` for any integer `n`.
    pub fn theta(&self, n: i64, xi: f64) -> Result<f64> {
        let m = n.unsigned_abs() as usize;
        let (v, _) = self.mode(m, xi)?;
        Ok(if n < 0 { xi.powi(m as i32) * v } else { v })
    }

    /// `θ_n′(ξ)` for any integer `n`.
    pub fn theta_prime(&self, n: i64, xi: f64) -> Result<f64> {
        let m = n.unsigned_abs() as usize;
        let (v, dv) = self.mode(m, xi)?;
        if n >= 0 {
            return Ok(dv);
        }
        Ok(m as f64 * xi.powi(m as i32 - 1) * v + xi.powi(m as i32) * dv)
    }
}

fn recursion_terms(table: &FourierTable, n: i64, xi: f64) -> Result<[f64; 4]> {
    let e = table.eta_n(n);
    let nf = n as f64;
    let q = table.q;
    Ok([
        2.0 * xi * (xi - 1.0) * table.theta_prime(n, xi)?,
        -(e + nf + (e + 2.0 * q - nf - 6.0) * xi) * table.theta(n, xi)?,
        xi * (e + nf + q - 2.0) * table.theta(n + 1, xi)?,
        (e - nf + q - 2.0) * table.theta(n - 1, xi)?,
    ])
}

/// Left-hand side of the mode-`n` equation.
pub fn fourier_recursion_residual(table: &FourierTable, n: i64, xi: f64) -> Result<f64> {
    Ok(recursion_terms(table, n, xi)?.iter().sum())
}

/// Residual divided by the sum of the magnitudes of its four terms.
pub fn relative_recursion_residual(table: &FourierTable, n: i64, xi: f64) -> Result<f64> {
    let t = recursion_terms(table, n, xi)?;
    let scale: f64 = t.iter().map(|v| v.abs()).sum();
    let r: f64 = t.iter().sum();
    Ok(if scale == 0.0 { 0.0 } else { r.abs() / scale })
}

/// `I(r) / 2π = (1 + r²) θ₀(r²) - 2 r² θ₁(r²)`.
pub fn integral_means_from_table(table: &FourierTable, r: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&r) {
        return Err(Error::Domain(format!("radius {r} outside [0, 1)")));
    }
    let x = r * r;
    Ok((1.0 + x) * table.theta(0, x)? - 2.0 * x * table.theta(1, x)?)
}

/// Slope of `log I` against `log 1/(1 - r²)` over the given `r²` values.
pub fn fitted_beta_from_table(table: &FourierTable, xs: &[f64]) -> Result<f64> {
    let mut lx = Vec::with_capacity(xs.len());
    let mut ly = Vec::with_capacity(xs.len());
    for &x in xs {
        let i = integral_means_from_table(table, x.sqrt())?;
        if !(i > 0.0) {
            return Err(Error::Quality(format!("integral mean {i} at r^2 = {x}")));
        }
        lx.push(-(1.0 - x).ln());
        ly.push(i.ln());
    }
    Ok(regression_slope(&lx, &ly))
}

/// Geometric grid of `r²` values with `1 - r²` from `10^{-lo}` to `10^{-hi}`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| {
            let e = lo + (hi - lo) * i as f64 / (count - 1) as f64;
            1.0 - 10f64.powf(-e)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// η₂ = 4 - q
// ---------------------------------------------------------------------------

/// Whether `(q, η₁)` lies in `q ≤ 4, η₁ ≥ 1 - q/4`.
pub fn in_domain_4mq(q: f64, eta1: f64) -> bool {
    q <= 4.0 + 1e-12 && eta1 >= 1.0 - q / 4.0 - 1e-12
}

/// `Z = η₁² - 2(2-q)(η₁+q-3)`.
pub fn z_4mq(q: f64, eta1: f64) -> f64 {
    eta1 * eta1 - 2.0 * (2.0 - q) * (eta1 + q - 3.0)
}

/// `β(2, q) = 3 - q + (√Z - η₁)/2`.
pub fn beta_4mq(q: f64, eta1: f64) -> Result<f64> {
    let z = z_4mq(q, eta1);
    if z < -1e-12 {
        return Err(Error::Domain(format!("Z = {z} < 0 at (q, eta1) = ({q}, {eta1})")));
    }
    Ok(3.0 - q + (z.max(0.0).sqrt() - eta1) / 2.0)
}

#[derive(Debug, Clone)]
pub struct Solution4mq {
    pub q: f64,
    pub eta1: f64,
    pub z: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub delta_prime: f64,
    pub delta: f64,
    /// Spectrum `β(2, q) = δ₊`.
    pub beta: f64,
    /// Limit of `(1 - r²)^δ I(r)/2π`; `None` on `Z = 0`, where it diverges.
    pub constant: Option<f64>,
    /// Degree of `f₀` when the series terminates.
    pub f0_degree: Option<usize>,
    pub table: FourierTable,
}

fn snap_integer(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() <= 1e-12 * (1.0 + r.abs()) {
        r
    } else {
        v
    }
}

/// Hypergeometric solution on the `(+)` branch for `η₂ = 4 - q`.
///
/// `a₊ = (2-q)(η₁+q-3)/(η₁+√Z)` is used in place of `(η₁ - √Z)/2`, so the
/// point `q = 2` needs no special path.
pub fn solve_4mq(q: f64, eta1: f64) -> Result<Solution4mq> {
    if !in_domain_4mq(q, eta1) {
        return Err(Error::Domain(format!("(q, eta1) = ({q}, {eta1}) outside q <= 4, eta1 >= 1 - q/4")));
    }
    let z = z_4mq(q, eta1);
    if z < -1e-12 {
        return Err(Error::Domain(format!("Z = {z} < 0")));
    }
    let sz = z.max(0.0).sqrt();
    let ratio = (eta1 + q - 3.0) / (eta1 + sz);
    let a = snap_integer((2.0 - q) * ratio);
    let b = snap_integer(0.5 - 0.5 * sz);
    let c = 0.5 * (1.0 + eta1);
    let delta_prime = -a;
    let delta = 3.0 - q + delta_prime;
    let f = HypergeometricParams::with_exactness(a, b, c, false)?;
    let f1 = HypergeometricParams::with_exactness(a + 1.0, b + 1.0, c + 1.0, false)?;
    let f2 = HypergeometricParams::with_exactness(a + 2.0, b + 2.0, c + 2.0, false)?;
    let constant = match hyp2f1_at_one(&f) {
        Ok(v) => Some(2.0 * (1.0 - ratio) * v),
        Err(Error::Divergence(_)) => None,
        Err(e) => return Err(e),
    };
    let f0_degree = f.polynomial_degree();
    let mode = HyperMode { q, c, ratio, f, f1, f2, delta };
    let table = FourierTable {
        q,
        eta: vec![0.0, eta1, 4.0 - q],
        truncation: 2,
        checked_modes: 3,
        kind: ThetaKind::Hypergeometric(Box::new(mode)),
        perturbation: None,
    };
    Ok(Solution4mq { q, eta1, z, a, b, c, delta_prime, delta, beta: delta, constant, f0_degree, table })
}

impl Solution4mq {
    /// `(f₀(x), f₁(x))`.
    pub fn f(&self, x: f64) -> Result<(f64, f64)> {
        match &self.table.kind {
            ThetaKind::Hypergeometric(h) => {
                debug_assert_eq!(h.q, self.q);
                let [f0, _, f1, _] = h.eval(x)?;
                Ok((f0, f1))
            }
            _ => unreachable!("solve_4mq always builds a hypergeometric table"),
        }
    }
}

/// The `(a₊, b₊, a₋, b₋, c)` parameters over `ℚ(√Z)` at rational `(q, η₁)`.
pub fn exact_parameters_4mq(q: &BigRational, eta1: &BigRational) -> Result<[QuadExtScalar; 5]> {
    let two = rational(2, 1);
    let three = rational(3, 1);
    let z = eta1 * eta1 - &two * (&two - q) * (eta1 + q - &three);
    let s = Q::sqrt(&z)?;
    let half = rational(1, 2);
    let e = qr(eta1);
    let a_plus = (&e - &s).scale(&half);
    let a_minus = (&e + &s).scale(&half);
    let b_plus = (qi(1) - &s).scale(&half);
    let b_minus = (qi(1) + &s).scale(&half);
    let c = (qi(1) + e).scale(&half);
    Ok([a_plus, b_plus, a_minus, b_minus, c])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FamilyKind {
    /// `a₊ = -n`.
    Hyperbola,
    /// `b₊ = -n`, upper sign of the square root.
    EllipsePlus,
    /// `b₊ = -n`, lower sign.
    EllipseMinus,
}

/// A one-parameter family of terminating solutions for `η₂ = 4 - q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlgebraicFamily {
    pub n: usize,
    pub kind: FamilyKind,
    /// Closed `q` interval inside the domain; the lower end may be `-∞`.
    pub window: (f64, f64),
}

impl AlgebraicFamily {
    pub fn eta1(&self, q: f64) -> f64 {
        let n = self.n as f64;
        match self.kind {
            FamilyKind::Hyperbola => ((2.0 - q) * (3.0 - q) - 2.0 * n * n) / (2.0 - q + 2.0 * n),
            FamilyKind::EllipsePlus => 2.0 - q + self.radical(q),
            FamilyKind::EllipseMinus => 2.0 - q - self.radical(q),
        }
    }

    fn radical(&self, q: f64) -> f64 {
        let m = 2.0 * self.n as f64 + 1.0;
        ((2.0 - q) * (q - 4.0) + m * m).max(0.0).sqrt()
    }

    pub fn beta(&self, q: f64) -> f64 {
        let n = self.n as f64;
        match self.kind {
            FamilyKind::Hyperbola => 3.0 - q + n,
            FamilyKind::EllipsePlus => 0.5 * (2.0 * n + 5.0 - q - self.radical(q)),
            FamilyKind::EllipseMinus => 0.5 * (2.0 * n + 5.0 - q + self.radical(q)),
        }
    }

    pub fn contains(&self, q: f64) -> bool {
        q >= self.window.0 && q <= self.window.1
    }

    /// `count` points spread over the window (a unit-spaced run below the
    /// upper end when the window is unbounded).
    pub fn sample_points(&self, count: usize) -> Vec<(f64, f64)> {
        let (lo, hi) = self.window;
        (0..count)
            .map(|i| {
                let t = (i as f64 + 0.5) / count as f64;
                let q = if lo.is_finite() { lo + (hi - lo) * t } else { hi - 4.0 * t };
                (q, self.eta1(q))
            })
            .collect()
    }

    pub fn label(&self) -> String {
        match self.kind {
            FamilyKind::Hyperbola => format!("a+=-{}", self.n),
            FamilyKind::EllipsePlus => format!("b+=-{} (+)", self.n),
            FamilyKind::EllipseMinus => format!("b+=-{} (-)", self.n),
        }
    }
}

/// Terminating families of order `n`, restricted to `q ≤ 4, η₁ ≥ 1 - q/4`.
pub fn algebraic_families_4mq(n: usize) -> Vec<AlgebraicFamily> {
    let nf = n as f64;
    let hyper_hi = match n {
        0 => 8.0 / 3.0,
        1 => 0.0,
        _ => 2.0 - 2.0 * nf,
    };
    let mut out = vec![AlgebraicFamily { n, kind: FamilyKind::Hyperbola, window: (f64::NEG_INFINITY, hyper_hi) }];
    let m = 2.0 * nf + 1.0;
    let lo = 3.0 - (m * m + 1.0).sqrt();
    // η₁ = 1 - q/4 meets the ellipse at q = (12 ± 4m)/5.
    let (q_lo, q_hi) = ((12.0 - 4.0 * m) / 5.0, (12.0 + 4.0 * m) / 5.0);
    let (mut plo, mut phi) = (lo, 4.0f64);
    if lo > 4.0 / 3.0 {
        plo = plo.max(q_lo);
        phi = phi.min(q_hi);
    }
    if plo <= phi {
        out.push(AlgebraicFamily { n, kind: FamilyKind::EllipsePlus, window: (plo, phi) });
    }
    let mhi = (4.0f64 / 3.0).min(q_lo);
    if lo <= mhi {
        out.push(AlgebraicFamily { n, kind: FamilyKind::EllipseMinus, window: (lo, mhi) });
    }
    out
}

/// Pochhammer symbol `(b)_k` over the rationals.
pub fn pochhammer(b: &BigRational, k: usize) -> BigRational {
    (0..k).fold(BigRational::one(), |acc, j| acc * (b + BigRational::from_integer(BigInt::from(j))))
}

// ---------------------------------------------------------------------------
// η₂ = -q: exact recursion
// ---------------------------------------------------------------------------

/// Whether `(q, η₁)` lies in `q ≤ 0, η₁ ≥ -q/4`.
pub fn in_domain_mq(q: &BigRational, eta1: &BigRational) -> bool {
    !q.is_positive() && *eta1 >= -q / rational(4, 1)
}

/// `Ẑ = (η₁-2)² + 2q(η₁+q-3)`.
pub fn z_hat(q: &BigRational, eta1: &BigRational) -> BigRational {
    let two = rational(2, 1);
    let e2 = eta1 - &two;
    &e2 * &e2 + &two * q * (eta1 + q - rational(3, 1))
}

/// `Z(η₁, q) = η₁² - 2(2-q)(η₁+q-3)` over the rationals.
pub fn z_exact(q: &BigRational, eta1: &BigRational) -> BigRational {
    let two = rational(2, 1);
    eta1 * eta1 - &two * (&two - q) * (eta1 + q - rational(3, 1))
}

/// `α₀± = 3 - q + (2 - η₁ ± √Ẑ)/2`.
pub fn alpha0_pm(q: &BigRational, eta1: &BigRational) -> Result<(QuadExtScalar, QuadExtScalar)> {
    let zh = z_hat(q, eta1);
    let s = Q::sqrt(&zh)?.scale(&rational(1, 2));
    let base = qr(&(rational(3, 1) - q + (rational(2, 1) - eta1) / rational(2, 1)));
    Ok((&base + &s, &base - &s))
}

/// `D₀(α)`; `D_k(α) = D₀(α - k)`.
pub fn d0_matrix(alpha: &QuadExtScalar, q: &BigRational, eta1: &BigRational) -> Matrix3 {
    let qq = qr(q);
    let e = qr(eta1);
    let z = Q::zero();
    [
        [-(alpha + &qq - qi(3)), &qq - qi(2), z.clone()],
        [&e + &qq - qi(3), qi(-2) * (&e + alpha + &qq - qi(3)), &e + &qq - qi(1)],
        [z, qi(-4), qi(-2) * (alpha - qi(3))],
    ]
}

/// `C₀(α)`; `C_k(α) = C₀(α - k)`.
pub fn c0_matrix(alpha: &QuadExtScalar, q: &BigRational, eta1: &BigRational) -> Matrix3 {
    let qq = qr(q);
    let e = qr(eta1);
    let z = Q::zero();
    [
        [z.clone(), z.clone(), z.clone()],
        [z.clone(), -(&e + qi(2) * alpha + qi(2) * &qq - qi(7)), &e + &qq - qi(1)],
        [z.clone(), z, -(qi(2) * alpha + &qq - qi(8))],
    ]
}

/// `det D₀(α) = 2(1-α)[2(α+q-3)(η₁+α+q-5) - q(η₁+q-3)]`.
pub fn det_d0_closed_form(alpha: &QuadExtScalar, q: &BigRational, eta1: &BigRational) -> QuadExtScalar {
    let qq = qr(q);
    let e = qr(eta1);
    let e0 = qi(2) * (alpha + &qq - qi(3)) * (&e + alpha + &qq - qi(5)) - &qq * (&e + &qq - qi(3));
    qi(2) * (qi(1) - alpha) * e0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Collision {
    /// `α₀⁺ - k = α₀⁻`.
    MinusBranch,
    /// `α₀⁺ - k = 1`.
    Unit,
}

impl Collision {
    pub fn describe(&self) -> &'static str {
        match self {
            Collision::MinusBranch => "alpha0+ - k = alpha0-",
            Collision::Unit => "alpha0+ - k = 1",
        }
    }
}

/// Exact polynomial ansatz for `η₂ = -q` up to degree `n`.
#[derive(Debug, Clone)]
pub struct RecursionState {
    pub n: usize,
    pub q: BigRational,
    pub eta1: BigRational,
    pub z_hat: BigRational,
    pub alpha: QuadExtScalar,
    pub alpha_minus: QuadExtScalar,
    /// `A^k = (A_0^k, A_1^k, A_2^k)` for `k = 0..=n`, scaled so `Σ_k A_0^k = 1`.
    pub a: Vec<Vector3>,
    /// Singular steps resolved by the explicit particular solution.
    pub collisions: Vec<(usize, Collision)>,
}

impl RecursionState {
    pub fn d_matrix(&self, k: usize) -> Matrix3 {
        d0_matrix(&(&self.alpha - &qi(k as i64)), &self.q, &self.eta1)
    }

    pub fn c_matrix(&self, k: usize) -> Matrix3 {
        c0_matrix(&(&self.alpha - &qi(k as i64)), &self.q, &self.eta1)
    }

    /// `C_n Aⁿ`: zero exactly when the ansatz closes at degree `n`.
    pub fn closure_vector(&self) -> Vector3 {
        mat_vec(&self.c_matrix(self.n), &self.a[self.n])
    }

    /// `D_k A^k - C_{k-1} A^{k-1}` for `k = 0..=n` (with `C_{-1} = 0`).
    pub fn consistency_residuals(&self) -> Vec<Vector3> {
        (0..=self.n)
            .map(|k| {
                let lhs = mat_vec(&self.d_matrix(k), &self.a[k]);
                if k == 0 {
                    lhs
                } else {
                    let rhs = mat_vec(&self.c_matrix(k - 1), &self.a[k - 1]);
                    std::array::from_fn(|i| &lhs[i] - &rhs[i])
                }
            })
            .collect()
    }

    pub fn is_consistent(&self) -> bool {
        self.consistency_residuals().iter().all(is_zero_vec)
    }

    /// `θ₀(0) = Σ_k A_0^k`.
    pub fn theta0_at_zero(&self) -> QuadExtScalar {
        self.a.iter().fold(Q::zero(), |acc, v| acc + &v[0])
    }

    /// Floating-point table for residual checks.
    pub fn table(&self) -> FourierTable {
        let coeffs = self.a.iter().map(|v| [v[0].to_f64(), v[1].to_f64(), v[2].to_f64()]).collect();
        FourierTable::polynomial(
            self.q.to_f64().unwrap_or(f64::NAN),
            self.eta1.to_f64().unwrap_or(f64::NAN),
            self.alpha.to_f64(),
            coeffs,
        )
    }
}

fn null_vector(m: &Matrix3) -> Option<Vector3> {
    let rows = [(0, 1), (0, 2), (1, 2)];
    let v = rows.iter().map(|&(i, j)| cross(&m[i], &m[j])).find(|v| !is_zero_vec(v))?;
    if !is_zero_vec(&mat_vec(m, &v)) {
        return None;
    }
    Some(if v[0].is_zero() { v } else { let s = v[0].clone(); v.map(|x| x / &s) })
}

fn classify_collision(state_alpha: &Q, alpha_minus: &Q, k: usize) -> Option<Collision> {
    let shifted = state_alpha - &qi(k as i64);
    if &shifted == alpha_minus {
        Some(Collision::MinusBranch)
    } else if shifted == qi(1) {
        Some(Collision::Unit)
    } else {
        None
    }
}

/// Particular solution of the singular step `k = 1` with `A_2^1 = 0`:
/// `A_1^1 = -(η₁+q-1)/4 · A_2^0`, `A_0^1 = (q-2)/(α+q-4) · A_1^1`. When
/// `α + q = 4` the first row no longer fixes `A_0^1` and the two remaining
/// rows are solved directly.
fn collision_solution(dk: &Matrix3, rhs: &Vector3, alpha: &Q, q: &BigRational, eta1: &BigRational, a0: &Vector3) -> Option<Vector3> {
    let qq = qr(q);
    let a11 = qr(&(-(eta1 + q - rational(1, 1)) / rational(4, 1))) * &a0[2];
    let den = alpha + &qq - qi(4);
    let candidate = if den.is_zero() {
        // rows 1 and 2 restricted to columns 0 and 1
        let det = &dk[1][0] * &dk[2][1] - &dk[1][1] * &dk[2][0];
        if det.is_zero() {
            return None;
        }
        let x0 = (&rhs[1] * &dk[2][1] - &dk[1][1] * &rhs[2]) / &det;
        let x1 = (&dk[1][0] * &rhs[2] - &rhs[1] * &dk[2][0]) / &det;
        [x0, x1, Q::zero()]
    } else {
        [(&qq - qi(2)) / den * &a11, a11, Q::zero()]
    };
    (mat_vec(dk, &candidate) == *rhs).then_some(candidate)
}

/// Runs `D_k A^k = C_{k-1} A^{k-1}` for `k = 1..=n` at `α = α₀⁺`.
pub fn build_recursion_mq(q: &BigRational, eta1: &BigRational, n: usize) -> Result<RecursionState> {
    if !in_domain_mq(q, eta1) {
        return Err(Error::Domain(format!("(q, eta1) = ({q}, {eta1}) outside q <= 0, eta1 >= -q/4")));
    }
    let zh = z_hat(q, eta1);
    if zh.is_negative() {
        return Err(Error::Domain(format!("Z-hat = {zh} < 0")));
    }
    let (alpha, alpha_minus) = alpha0_pm(q, eta1)?;
    let d0 = d0_matrix(&alpha, q, eta1);
    let a0 = null_vector(&d0).ok_or_else(|| Error::Singular {
        k: 0,
        collision: "D_0(alpha0+) has no one-dimensional kernel".into(),
    })?;
    let mut a = vec![a0];
    let mut collisions = Vec::new();
    for k in 1..=n {
        let dk = d0_matrix(&(&alpha - &qi(k as i64)), q, eta1);
        let ck = c0_matrix(&(&alpha - &qi(k as i64 - 1)), q, eta1);
        let rhs = mat_vec(&ck, &a[k - 1]);
        if let Some(v) = solve3(&dk, &rhs) {
            a.push(v);
            continue;
        }
        let collision = classify_collision(&alpha, &alpha_minus, k);
        let describe = collision.map(|c| c.describe()).unwrap_or("unclassified");
        if k == 1 && collision == Some(Collision::MinusBranch) {
            if let Some(v) = collision_solution(&dk, &rhs, &alpha, q, eta1, &a[0]) {
                a.push(v);
                collisions.push((k, Collision::MinusBranch));
                continue;
            }
        }
        return Err(Error::Singular { k, collision: describe.into() });
    }
    let s = a.iter().fold(Q::zero(), |acc, v| acc + &v[0]);
    if s.is_zero() {
        return Err(Error::Singular { k: n, collision: "theta_0(0) vanishes".into() });
    }
    let a = a.into_iter().map(|v| v.map(|x| x / &s)).collect();
    Ok(RecursionState { n, q: q.clone(), eta1: eta1.clone(), z_hat: zh, alpha, alpha_minus, a, collisions })
}

/// Whether `(q-1)² + (η₁+q-2)² = (2n-1)² + 1`.
pub fn on_ellipse(n: usize, q: &BigRational, eta1: &BigRational) -> bool {
    let one = rational(1, 1);
    let x = q - &one;
    let y = eta1 + q - rational(2, 1);
    let m = rational(2 * n as i64 - 1, 1);
    &x * &x + &y * &y == &m * &m + one
}

#[derive(Debug, Clone)]
pub struct ClosureVerdict {
    pub closed: bool,
    pub a2n_zero: bool,
    pub bracket_zero: bool,
    pub closure_vector_zero: bool,
    pub beta: QuadExtScalar,
    pub state: RecursionState,
}

/// Recursion at a rational point of `Ẑ = (2n-1)²` and its closure verdict.
pub fn verify_closure_on_ellipse(n: usize, q: &BigRational, eta1: &BigRational) -> Result<ClosureVerdict> {
    if n == 0 {
        return Err(Error::Domain("closure degree must be >= 1".into()));
    }
    if !on_ellipse(n, q, eta1) {
        return Err(Error::Domain(format!("({q}, {eta1}) is not on the ellipse of order {n}")));
    }
    let state = build_recursion_mq(q, eta1, n)?;
    let a2n_zero = state.a[n][2].is_zero();
    let bracket = qi(2 * n as i64) - (qr(eta1) + qi(2) * &state.alpha + qi(2) * qr(q) - qi(7));
    let bracket_zero = bracket.is_zero();
    let closure_vector_zero = is_zero_vec(&state.closure_vector());
    Ok(ClosureVerdict {
        closed: a2n_zero && bracket_zero,
        a2n_zero,
        bracket_zero,
        closure_vector_zero,
        beta: state.alpha.clone(),
        state,
    })
}

/// Rational points of `Ê_n` inside `q < 0, η₁ ≥ -q/4`, from chords through
/// `(X̂, Y) = (2n-1, 1)` with `X̂ = q - 1`, `Y = η₁ + q - 2`.
pub fn ellipse_points(n: usize, count: usize) -> Vec<(BigRational, BigRational)> {
    let m = rational(2 * n as i64 - 1, 1);
    let one = rational(1, 1);
    let two = rational(2, 1);
    let mut out: Vec<(BigRational, BigRational)> = Vec::new();
    'outer: for num in -60i64..=60 {
        for den in 1i64..=12 {
            let t = rational(num, den);
            let s = -&two * (&m + &t) / (&one + &t * &t);
            let x = &m + &s;
            let y = &one + &t * &s;
            let q = &x + &one;
            let eta1 = y - &q + &two;
            if q.is_negative() && in_domain_mq(&q, &eta1) && !out.contains(&(q.clone(), eta1.clone())) {
                out.push((q, eta1));
                if out.len() == count {
                    break 'outer;
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct AlternativeWitness {
    pub eta1: BigRational,
    /// `(η₁+q+1) A_1ⁿ - (η₁+q-1) A_2ⁿ`.
    pub witness: QuadExtScalar,
    /// Whether `2n - (2α + q - 8) = 0` at `α = α₀⁺`.
    pub eq8_bracket_zero: bool,
    pub no_further_solution: bool,
    pub state: RecursionState,
}

/// `η₁ = q(q-2)/(4(n+1)) - n - q + 1`.
pub fn alternative_eta1(n: usize, q: &BigRational) -> BigRational {
    let nr = rational(n as i64, 1);
    q * (q - rational(2, 1)) / (rational(4, 1) * (&nr + rational(1, 1))) - nr - q + rational(1, 1)
}

/// Witness that the second closure route yields no solution at `(q, η₁(q))`.
pub fn falsify_alternative_condition(n: usize, q: &BigRational) -> Result<AlternativeWitness> {
    if n == 0 {
        return Err(Error::Domain("closure degree must be >= 1".into()));
    }
    let eta1 = alternative_eta1(n, q);
    let state = build_recursion_mq(q, &eta1, n)?;
    let an = &state.a[n];
    let e = qr(&eta1);
    let qq = qr(q);
    let witness = (&e + &qq + qi(1)) * &an[1] - (&e + &qq - qi(1)) * &an[2];
    let eq8 = qi(2 * n as i64) - (qi(2) * &state.alpha + &qq - qi(8));
    Ok(AlternativeWitness {
        eta1,
        no_further_solution: !witness.is_zero(),
        witness,
        eq8_bracket_zero: eq8.is_zero(),
        state,
    })
}

// ---------------------------------------------------------------------------
// Fuchsian form
// ---------------------------------------------------------------------------

/// Residue matrix at `ξ = 0`.
pub fn fuchsian_a_matrix(q: &BigRational, eta1: &BigRational) -> Matrix3 {
    let h = rational(1, 2);
    let qq = qr(q);
    let e = qr(eta1);
    let z = Q::zero();
    let m = [
        [z.clone(), z.clone(), z.clone()],
        [&e + &qq - qi(3), -(&e + qi(1)), z.clone()],
        [z.clone(), qi(-4), &qq - qi(2)],
    ];
    m.map(|row| row.map(|x| x.scale(&h)))
}

/// Residue matrix at `ξ = 1`.
pub fn fuchsian_b_matrix(q: &BigRational, eta1: &BigRational) -> Matrix3 {
    let h = rational(1, 2);
    let qq = qr(q);
    let e = qr(eta1);
    let z = Q::zero();
    let m = [
        [qi(2) * (qi(3) - &qq), qi(2) * (&qq - qi(2)), z.clone()],
        [&e + &qq - qi(3), qi(-2) * (&e + &qq - qi(3)), &e + &qq - qi(1)],
        [z, qi(-4), qi(6)],
    ];
    m.map(|row| row.map(|x| x.scale(&h)))
}

/// `det(𝔹 - α I)`.
pub fn det_b_minus(alpha: &QuadExtScalar, q: &BigRational, eta1: &BigRational) -> QuadExtScalar {
    let mut m = fuchsian_b_matrix(q, eta1);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = &row[i] - alpha;
    }
    det3(&m)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FuchsianClassification {
    pub alpha_plus: f64,
    pub alpha_minus: f64,
    pub unit: f64,
    /// Pairs of local exponents at `ξ = 1` differing by an integer.
    pub resonances: Vec<(String, i64)>,
    pub beta: f64,
}

/// Local exponents `{α₀⁺, α₀⁻, 1}` at `ξ = 1` and `β(2, q) = α₀⁺`.
pub fn fuchsian_classification(q: f64, eta1: f64) -> Result<FuchsianClassification> {
    if !(q <= 0.0 && eta1 >= -q / 4.0) {
        return Err(Error::Domain(format!("(q, eta1) = ({q}, {eta1}) outside q <= 0, eta1 >= -q/4")));
    }
    let zh = (eta1 - 2.0).powi(2) + 2.0 * q * (eta1 + q - 3.0);
    if zh < -1e-12 {
        return Err(Error::Domain(format!("Z-hat = {zh} < 0")));
    }
    let s = zh.max(0.0).sqrt();
    let base = 3.0 - q + 0.5 * (2.0 - eta1);
    let (ap, am) = (base + 0.5 * s, base - 0.5 * s);
    let mut resonances = Vec::new();
    for (label, d) in [("alpha0+ - alpha0-", ap - am), ("alpha0+ - 1", ap - 1.0), ("alpha0- - 1", am - 1.0)] {
        let r = d.round();
        if (d - r).abs() <= 1e-12 * (1.0 + d.abs()) {
            resonances.push((label.to_string(), r as i64));
        }
    }
    Ok(FuchsianClassification { alpha_plus: ap, alpha_minus: am, unit: 1.0, resonances, beta: ap })
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Verification report for the exact recursion.
#[derive(Debug, Clone, Serialize)]
pub struct LleReport {
    pub case: String,
    pub n: usize,
    pub point: [String; 2],
    pub alpha: String,
    pub coefficients: Vec<[String; 3]>,
    pub closed: bool,
    pub beta: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<String>,
}

impl LleReport {
    fn from_state(case: &str, state: &RecursionState, closed: bool, witness: Option<String>) -> Self {
        Self {
            case: case.into(),
            n: state.n,
            point: [state.q.to_string(), state.eta1.to_string()],
            alpha: state.alpha.to_string(),
            coefficients: state.a.iter().map(|v| v.clone().map(|x| x.to_string())).collect(),
            closed,
            beta: state.alpha.to_string(),
            witness,
        }
    }

    pub fn from_closure(v: &ClosureVerdict) -> Self {
        Self::from_state("closure", &v.state, v.closed, None)
    }

    pub fn from_witness(w: &AlternativeWitness) -> Self {
        Self::from_state("falsify", &w.state, !w.no_further_solution, Some(w.witness.to_string()))
    }

    pub fn from_recursion(state: &RecursionState) -> Self {
        let closed = is_zero_vec(&state.closure_vector());
        Self::from_state("mq", state, closed, None)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn r(n: i64, d: i64) -> BigRational {
        rational(n, d)
    }

    #[test]
    fn quad_field_arithmetic() {
        let s2 = Q::sqrt(&r(8, 9)).unwrap();
        assert_eq!(s2.d, BigInt::from(2));
        assert_eq!(s2.b, r(2, 3));
        assert_eq!(&s2 * &s2, qr(&r(8, 9)));
        let x = qi(3) + Q::sqrt(&r(5, 1)).unwrap();
        let y = x.inverse().unwrap();
        assert_eq!(&x * &y, Q::one());
        assert!(Q::sqrt(&r(49, 4)).unwrap().is_rational());
        assert_eq!(Q::sqrt(&r(49, 4)).unwrap(), qr(&r(7, 2)));
        assert_eq!((qi(1) - Q::sqrt(&r(2, 1)).unwrap()).signum(), Ordering::Less);
        assert_eq!((qi(2) - Q::sqrt(&r(3, 1)).unwrap()).signum(), Ordering::Greater);
        assert_eq!(format!("{}", qi(1) - Q::sqrt(&r(12, 1)).unwrap()), "1-2*sqrt(3)");
    }

    #[test]
    fn square_free_split_handles_large_cofactors() {
        let p = BigInt::from(1_000_003u64);
        let (s, d) = square_free_split(&(&p * &p * BigInt::from(6)));
        assert_eq!((s, d), (p, BigInt::from(6)));
        let (s, d) = square_free_split(&BigInt::from(720));
        assert_eq!((s, d), (BigInt::from(12), BigInt::from(5)));
    }

    #[test]
    fn rationals_parse() {
        assert_eq!(parse_rational("-2/5").unwrap(), r(-2, 5));
        assert_eq!(parse_rational("11/5").unwrap(), r(11, 5));
        assert_eq!(parse_rational("-0.4").unwrap(), r(-2, 5));
        assert_eq!(parse_rational("3").unwrap(), r(3, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("x").is_err());
    }

    #[test]
    fn zero_table_has_zero_residual() {
        let t = FourierTable::zero(0.7);
        for n in -2..=2 {
            assert_eq!(fourier_recursion_residual(&t, n, 0.4).unwrap(), 0.0);
        }
    }

    #[test]
    fn three_minus_q_table() {
        let t = FourierTable::three_minus_q(1.0).unwrap();
        for n in -3..=3 {
            for k in 1..10 {
                let xi = k as f64 / 10.0;
                assert!(fourier_recursion_residual(&t, n, xi).unwrap().abs() < 1e-12);
            }
        }
        let i = integral_means_from_table(&t, 0.5f64.sqrt()).unwrap();
        assert!((i - 6.0).abs() < 1e-12);
        assert!((integral_means_from_table(&t, 0.0).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_minus_q_table() {
        for q in [0.0, -1.0, 0.5] {
            let t = FourierTable::one_minus_q(q).unwrap();
            for n in -1..=1 {
                for k in 1..10 {
                    let xi = k as f64 / 10.0;
                    assert!(relative_recursion_residual(&t, n, xi).unwrap() < 1e-12, "q={q} n={n} xi={xi}");
                }
            }
        }
        let t = FourierTable::one_minus_q(-1.0).unwrap();
        assert!(fourier_recursion_residual(&t, 1, 0.3).unwrap().abs() < 1e-12);
        let t = FourierTable::one_minus_q(0.0).unwrap();
        let beta = fitted_beta_from_table(&t, &log_grid(3.0, 4.0, 5)).unwrap();
        assert!((beta - 4.0).abs() < 1e-3, "{beta}");
    }

    #[test]
    fn perturbation_is_detected() {
        let t = FourierTable::one_minus_q(0.0).unwrap().perturbed(1, 1e-4);
        let worst = (1..10)
            .map(|k| fourier_recursion_residual(&t, 1, k as f64 / 10.0).unwrap().abs())
            .fold(0.0, f64::max);
        assert!(worst >= 1e-5, "{worst}");
    }

    #[test]
    fn solve_4mq_special_values() {
        let s = solve_4mq(2.0, 1.7).unwrap();
        assert!((s.beta - 1.0).abs() < 1e-14);
        let (f0, _) = s.f(0.4).unwrap();
        assert!((f0 - 1.0).abs() < 1e-14);
        for eta1 in [0.5, 1.0, 1.7, 3.0] {
            let s = solve_4mq(2.0, eta1).unwrap();
            let c = s.constant.unwrap();
            assert!((c - (1.0 + 1.0 / eta1)).abs() < 1e-12, "eta1={eta1}: {c}");
        }
        let s = solve_4mq(4.0, 0.9).unwrap();
        assert!(s.beta.abs() < 1e-14);
        assert_eq!(s.f0_degree, Some(1));
        for x in [0.1, 0.5, 0.9] {
            let (f0, f1) = s.f(x).unwrap();
            assert!((f0 - (1.0 + x)).abs() < 1e-14);
            assert!((f1 - 1.0).abs() < 1e-14, "{f1}");
        }
        assert!(solve_4mq(4.5, 1.0).is_err());
        assert!(solve_4mq(0.0, 0.5).is_err());
    }

    #[test]
    fn q_two_matches_limit_formula() {
        let eta1 = 1.6;
        let s = solve_4mq(2.0, eta1).unwrap();
        let bb = HypergeometricParams::new(1.0, 0.5 * (3.0 - eta1), 0.5 * (3.0 + eta1)).unwrap();
        for x in [0.2, 0.6, 0.95] {
            let g = hyp2f1(&bb, x).unwrap();
            let f1 = (eta1 - 1.0) / (2.0 * eta1) * (1.0 - (1.0 - eta1) / (1.0 + eta1) * (1.0 - x) * g);
            assert!((s.f(x).unwrap().1 - f1).abs() < 1e-13);
        }
        let near = solve_4mq(2.0 + 1e-7, eta1).unwrap();
        assert!((near.f(0.6).unwrap().1 - s.f(0.6).unwrap().1).abs() < 1e-6);
    }

    #[test]
    fn sle_line_transition() {
        for q in [-3.0, 0.0, 1.0, 2.0, 12.0 / 5.0, 3.0, 3.9] {
            let b = beta_4mq(q, 1.0 - q / 4.0).unwrap();
            let expected = if q >= 12.0 / 5.0 { 1.0 - q / 4.0 } else { 4.0 - 1.5 * q };
            assert!((b - expected).abs() < 1e-12, "q={q}");
        }
        let q = r(12, 5);
        assert_eq!(rational(1, 1) - &q / r(4, 1), r(4, 1) - r(3, 2) * &q);
        assert_eq!(z_exact(&q, &r(2, 5)), BigRational::zero());
        assert!(solve_4mq(2.4, 0.4).unwrap().constant.is_none());
    }

    fn interior_points() -> Vec<(f64, f64)> {
        vec![(0.0, 2.0), (-1.0, 3.5), (1.0, 1.5), (3.0, 1.0), (-2.5, 2.2)]
    }

    #[test]
    fn hypergeometric_tables_solve_the_recursion() {
        for (q, e) in interior_points().into_iter().chain([(2.0, 0.8), (4.0, 0.3), (1.9, 1.2)]) {
            let s = solve_4mq(q, e).unwrap();
            for n in -3..=3 {
                for k in 1..10 {
                    let xi = k as f64 / 10.0;
                    let rel = relative_recursion_residual(&s.table, n, xi).unwrap();
                    assert!(rel < 1e-11, "(q,eta1)=({q},{e}) n={n} xi={xi}: {rel}");
                }
            }
            assert!((s.table.theta(0, 0.0).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn hypergeometric_slopes() {
        let grid = log_grid(2.0, 4.0, 9);
        for (q, e) in interior_points() {
            let s = solve_4mq(q, e).unwrap();
            let fit = fitted_beta_from_table(&s.table, &grid).unwrap();
            assert!((fit - s.beta).abs() < 1e-2, "({q},{e}): {fit} vs {}", s.beta);
            let x: f64 = 1.0 - 1e-6;
            let lim = integral_means_from_table(&s.table, x.sqrt()).unwrap() * (1.0 - x).powf(s.beta);
            let c = s.constant.unwrap();
            assert!((lim - c).abs() < 2e-2 * c, "({q},{e}): {lim} vs {c}");
        }
    }

    #[test]
    fn families_cover_examples() {
        let fams = algebraic_families_4mq(0);
        let plus = fams.iter().find(|f| f.kind == FamilyKind::EllipsePlus).unwrap();
        assert!((plus.window.0 - 1.6).abs() < 1e-12 && (plus.window.1 - 3.2).abs() < 1e-12);
        assert!(fams.iter().all(|f| f.kind != FamilyKind::EllipseMinus));
        assert!((plus.eta1(2.0) - 1.0).abs() < 1e-15);
        assert!((plus.beta(2.0) - 1.0).abs() < 1e-15);
        assert!((solve_4mq(2.0, 1.0).unwrap().beta - 1.0).abs() < 1e-15);

        let fams = algebraic_families_4mq(1);
        let plus = fams.iter().find(|f| f.kind == FamilyKind::EllipsePlus).unwrap();
        assert!((plus.window.0 - (3.0 - 10f64.sqrt())).abs() < 1e-12 && plus.window.1 == 4.0);
        let minus = fams.iter().find(|f| f.kind == FamilyKind::EllipseMinus).unwrap();
        assert!(minus.window.1.abs() < 1e-12);
        let hyper = fams.iter().find(|f| f.kind == FamilyKind::Hyperbola).unwrap();
        assert!((hyper.eta1(-3.0) - 4.0).abs() < 1e-14);

        let h2 = algebraic_families_4mq(2).into_iter().find(|f| f.kind == FamilyKind::Hyperbola).unwrap();
        assert_eq!(h2.window.1, -2.0);
        assert!((h2.eta1(-2.0) - 1.5).abs() < 1e-15);
        let s = solve_4mq(-2.0, 1.5).unwrap();
        assert_eq!(s.f0_degree, Some(2));
    }

    #[test]
    fn families_terminate_inside_domain() {
        for n in 0..=3 {
            for fam in algebraic_families_4mq(n) {
                for (q, e) in fam.sample_points(5) {
                    assert!(in_domain_4mq(q, e), "{} at q={q}", fam.label());
                    let s = solve_4mq(q, e).unwrap();
                    let deg = s.f0_degree.unwrap_or_else(|| panic!("{} at q={q}: a={} b={}", fam.label(), s.a, s.b));
                    assert!(deg <= n);
                    assert!((s.beta - fam.beta(q)).abs() < 1e-10, "{} at q={q}", fam.label());
                    for k in 1..10 {
                        let xi = k as f64 / 10.0;
                        assert!(relative_recursion_residual(&s.table, 1, xi).unwrap() < 1e-11);
                    }
                }
            }
        }
    }

    #[test]
    fn ellipse_series_terminates_exactly() {
        for n in 0..=4usize {
            let m = rational(2 * n as i64 + 1, 1);
            // chord through (X, Y) = (m, 1) on X² + Y² = m² + 1
            for t in [r(1, 3), r(-2, 7), r(5, 2)] {
                let one = rational(1, 1);
                let s = -rational(2, 1) * (&m + &t) / (&one + &t * &t);
                let x = &m + &s;
                let y = &one + &t * &s;
                let q = x + rational(3, 1);
                let eta1 = y - &q + rational(2, 1);
                assert_eq!(z_exact(&q, &eta1), &m * &m);
                let [_, b_plus, ..] = exact_parameters_4mq(&q, &eta1).unwrap();
                let b = b_plus.as_rational().unwrap().clone();
                assert_eq!(b, rational(-(n as i64), 1));
                assert!(pochhammer(&b, n + 1).is_zero());
                assert!(n == 0 || !pochhammer(&b, n).is_zero());
            }
        }
    }

    fn small_rational() -> impl Strategy<Value = BigRational> {
        (-40i64..40, 1i64..9).prop_map(|(n, d)| rational(n, d))
    }

    proptest! {
        #[test]
        fn branch_duality(q in small_rational(), eta1 in small_rational()) {
            let z = z_exact(&q, &eta1);
            prop_assume!(!z.is_negative());
            let [ap, bp, am, bm, c] = exact_parameters_4mq(&q, &eta1).unwrap();
            prop_assert_eq!(&c - &am, bp.clone());
            prop_assert_eq!(&c - &bm, ap.clone());
            prop_assert_eq!(&am + &bm - &c, &c - &ap - &bp);
            // δ′₋ - δ′₊ = c - a₋ - b₋ with δ′ = -a
            prop_assert_eq!(-&am + &ap, &c - &am - &bm);
        }

        #[test]
        fn det_d0_symbolic(a in small_rational(), q in small_rational(), eta1 in small_rational()) {
            let alpha = qr(&a);
            prop_assert_eq!(det3(&d0_matrix(&alpha, &q, &eta1)), det_d0_closed_form(&alpha, &q, &eta1));
            let quarter = det_d0_closed_form(&alpha, &q, &eta1).scale(&rational(1, 4));
            prop_assert_eq!(det_b_minus(&alpha, &q, &eta1), quarter);
        }

        #[test]
        fn z_hat_is_translated_z(q in small_rational(), eta1 in small_rational()) {
            let two = rational(2, 1);
            prop_assert_eq!(z_hat(&q, &eta1), z_exact(&(&q + &two), &(&eta1 - &two)));
        }

        #[test]
        fn shift_relation(a in small_rational(), q in small_rational(), eta1 in small_rational(), k in 0usize..5) {
            let alpha = qr(&a);
            let shifted = &alpha - &qi(k as i64);
            let dk = d0_matrix(&shifted, &q, &eta1);
            let direct = d0_matrix(&alpha, &q, &eta1);
            for i in 0..3 {
                let expect = if i == 0 { &direct[0][0] + &qi(k as i64) } else { &direct[i][i] + &qi(2 * k as i64) };
                prop_assert_eq!(dk[i][i].clone(), expect);
            }
        }

        #[test]
        fn alpha_pm_are_roots(q in (-40i64..=0, 1i64..9), eta1 in small_rational()) {
            let q = rational(q.0, q.1);
            prop_assume!(!z_hat(&q, &eta1).is_negative());
            let (ap, am) = alpha0_pm(&q, &eta1).unwrap();
            prop_assert!(det_d0_closed_form(&ap, &q, &eta1).is_zero());
            prop_assert!(det_d0_closed_form(&am, &q, &eta1).is_zero());
        }
    }

    #[test]
    fn n1_explicit_coefficients() {
        let (q, e) = (r(-2, 5), r(11, 5));
        let v = verify_closure_on_ellipse(1, &q, &e).unwrap();
        assert!(v.closed && v.closure_vector_zero);
        assert_eq!(v.beta, qr(&r(19, 5)));
        let a = &v.state.a;
        let expect = [[r(3, 2), r(-1, 4), r(5, 8)], [r(-1, 2), r(-1, 8), r(0, 1)]];
        for k in 0..2 {
            for j in 0..3 {
                assert_eq!(a[k][j], qr(&expect[k][j]), "A_{j}^{k}");
            }
        }
        // closed forms in (q, η₁)
        let one = r(1, 1);
        let two = r(2, 1);
        let three = r(3, 1);
        let d = &e + &one;
        let closed = [
            [&two * (&two - &q) / &d, (&e - &three) / &d, r(4, 1) * (&e + &q - &three) / ((&q - &two) * &d)],
            [
                (&e + &two * &q - &three) / &d,
                (&e + &q - &one) * (&e + &q - &three) / ((&two - &q) * &d),
                BigRational::zero(),
            ],
        ];
        for k in 0..2 {
            for j in 0..3 {
                assert_eq!(a[k][j], qr(&closed[k][j]));
            }
        }
        assert_eq!(v.state.collisions, vec![(1, Collision::MinusBranch)]);
        assert!(v.state.is_consistent());
    }

    #[test]
    fn closure_on_ellipses() {
        for n in 1..=4 {
            let pts = ellipse_points(n, 3);
            assert_eq!(pts.len(), 3);
            for (q, e) in pts {
                let v = verify_closure_on_ellipse(n, &q, &e).unwrap();
                assert!(v.closed, "n={n} ({q},{e})");
                assert!(v.closure_vector_zero);
                assert!(v.state.is_consistent());
                assert_eq!(v.state.theta0_at_zero(), Q::one());
                let t = v.state.table();
                for m in 0..=2 {
                    for k in 1..10 {
                        let xi = k as f64 / 10.0;
                        let rel = relative_recursion_residual(&t, m, xi).unwrap();
                        assert!(rel < 1e-11, "n={n} mode {m} xi={xi}: {rel}");
                    }
                }
                let fit = fitted_beta_from_table(&t, &log_grid(2.0, 4.0, 9)).unwrap();
                assert!((fit - v.beta.to_f64()).abs() < 1e-2);
            }
        }
    }

    #[test]
    fn boundary_point_of_first_ellipse() {
        let (q, e) = (r(0, 1), r(1, 1));
        let v = verify_closure_on_ellipse(1, &q, &e).unwrap();
        assert!(v.closed);
        assert_eq!(v.beta, qi(4));
    }

    #[test]
    fn tangency_point_has_double_root() {
        let (ap, am) = alpha0_pm(&r(0, 1), &r(2, 1)).unwrap();
        assert_eq!(ap, am);
        assert!(z_hat(&r(0, 1), &r(2, 1)).is_zero());
    }

    #[test]
    fn off_ellipse_points_do_not_close() {
        let state = build_recursion_mq(&r(-1, 2), &r(3, 1), 2).unwrap();
        assert!(!state.z_hat.is_zero());
        assert!(state.is_consistent());
        assert!(!is_zero_vec(&state.closure_vector()));
        assert!(verify_closure_on_ellipse(2, &r(-1, 2), &r(3, 1)).is_err());
    }

    #[test]
    fn alternative_condition_fails() {
        let frozen = [(1, r(-1, 1), r(15, 16)), (1, r(-7, 3), r(-95, 1008)), (2, r(-3, 2), r(-165, 1952)), (2, r(-9, 2), r(-85, 3488))];
        for (n, q, value) in frozen {
            let w = falsify_alternative_condition(n, &q).unwrap();
            assert!(in_domain_mq(&q, &w.eta1));
            assert!(w.eq8_bracket_zero, "n={n} q={q}");
            assert!(w.no_further_solution, "n={n} q={q}");
            assert_eq!(w.witness, qr(&value));
        }
        assert_eq!(alternative_eta1(1, &r(-1, 1)), r(11, 8));
    }

    #[test]
    fn alternative_condition_exceptional_points() {
        // (q, η₁) = (-4, 7) lies on η₁ = 3 - q, where θ₁ ≡ 0.
        let w = falsify_alternative_condition(1, &r(-4, 1)).unwrap();
        assert_eq!(w.eta1, r(7, 1));
        assert_eq!(w.state.alpha, qi(7));
        assert!(w.witness.is_zero());
        assert!(w.state.a[1].iter().all(Q::is_zero));
        // (q, η₁) = (-4, 5) lies on the ellipse Ẑ = 25 of order 3.
        let w = falsify_alternative_condition(2, &r(-4, 1)).unwrap();
        assert_eq!(w.eta1, r(5, 1));
        assert!(on_ellipse(3, &r(-4, 1), &r(5, 1)));
        assert!(w.witness.is_zero());
        assert!(is_zero_vec(&w.state.closure_vector()));
    }

    #[test]
    fn ellipse_points_satisfy_closure_identity() {
        // on Ê₁ the eq7 row of C₁A¹ vanishes together with A₂¹
        let (q, e) = ellipse_points(1, 1).remove(0);
        let v = verify_closure_on_ellipse(1, &q, &e).unwrap();
        let c = v.state.closure_vector();
        assert!(c[1].is_zero() && c[2].is_zero());
    }

    #[test]
    fn fuchsian_values() {
        for e in [0.0, 0.5, 1.0, 1.5, 2.0] {
            let f = fuchsian_classification(0.0, e).unwrap();
            assert!((f.beta - (5.0 - e)).abs() < 1e-12);
        }
        for e in [2.0, 3.0, 7.5] {
            assert!((fuchsian_classification(0.0, e).unwrap().beta - 3.0).abs() < 1e-12);
        }
        for q in [-0.5, -1.0, -3.0, -10.0] {
            let f = fuchsian_classification(q, -q / 4.0).unwrap();
            assert!((f.beta - (5.0 - 1.5 * q)).abs() < 1e-12);
        }
        let f = fuchsian_classification(-0.4, 2.2).unwrap();
        assert!(f.resonances.iter().any(|(l, d)| l == "alpha0+ - alpha0-" && *d == 1));
        assert!(fuchsian_classification(1.0, 1.0).is_err());
    }

    #[test]
    fn report_serializes_fractions() {
        let v = verify_closure_on_ellipse(1, &r(-2, 5), &r(11, 5)).unwrap();
        let rep = LleReport::from_closure(&v);
        let js = rep.to_json();
        assert!(js.contains("\"19/5\""));
        assert!(js.contains("\"-1/8\""));
        assert!(rep.closed);
    }
}
