//! Gamma function and the Gauss hypergeometric function on `[0, 1)`.

use crate::{Error, Real, Result};

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

const SERIES_CAP: usize = 100_000;
const SERIES_STOP: f64 = 1e-17;
const SERIES_STREAK: usize = 3;
/// Above this argument the connection formula in `1 - x` is preferred.
const CONNECTION_SWITCH: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypergeometricParams<T> {
    pub a: T,
    pub b: T,
    pub c: T,
    /// When set, integer tests on the parameters use exact equality.
    /// Otherwise a parameter within `1e-12` of a non-positive integer
    /// counts as that integer.
    pub exact: bool,
}

impl<T: Real> HypergeometricParams<T> {
    pub fn new(a: T, b: T, c: T) -> Result<Self> {
        Self::with_exactness(a, b, c, true)
    }

    pub fn with_exactness(a: T, b: T, c: T, exact: bool) -> Result<Self> {
        let p = Self { a, b, c, exact };
        if p.nonpositive_integer(c).is_some() {
            return Err(Error::Domain(format!("c = {c} is a pole of the series")));
        }
        Ok(p)
    }

    fn nonpositive_integer(&self, v: T) -> Option<usize> {
        let r = v.round();
        if r > T::zero() {
            return None;
        }
        let hit = if self.exact {
            v == r
        } else {
            (v - r).abs() <= T::lit(1e-12)
        };
        if hit {
            r.neg().to_usize()
        } else {
            None
        }
    }

    /// Degree of the terminating series, if `a` or `b` is a non-positive integer.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match (self.nonpositive_integer(self.a), self.nonpositive_integer(self.b)) {
            (Some(n), Some(m)) => Some(n.min(m)),
            (Some(n), None) | (None, Some(n)) => Some(n),
            (None, None) => None,
        }
    }

    pub fn excess(&self) -> T {
        self.c - self.a - self.b
    }
}

fn sin_pi<T: Real>(x: T) -> T {
    let n = x.round();
    let r = x - n;
    let s = (T::PI() * r).sin();
    let odd = n.to_i64().map(|k| k.rem_euclid(2) == 1).unwrap_or(false);
    if odd {
        -s
    } else {
        s
    }
}

fn lanczos<T: Real>(x: T) -> T {
    // Valid for x >= 0.5.
    let xm = x - T::one();
    let mut acc = T::lit(LANCZOS[0]);
    for (i, &coef) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + T::lit(coef) / (xm + T::from(i).unwrap());
    }
    let t = xm + T::lit(LANCZOS_G + 0.5);
    let half = t.powf((xm + T::lit(0.5)) / T::lit(2.0));
    (T::TAU()).sqrt() * half * (half * (-t).exp()) * acc
}

pub fn gamma<T: Real>(x: T) -> Result<T> {
    if x <= T::zero() && x == x.round() {
        return Err(Error::Pole(x.to_f64().unwrap_or(f64::NAN)));
    }
    if x < T::lit(0.5) {
        Ok(T::PI() / (sin_pi(x) * lanczos(T::one() - x)))
    } else {
        Ok(lanczos(x))
    }
}

/// `1/Γ(x)`, equal to zero at the poles.
pub fn rgamma<T: Real>(x: T) -> T {
    match gamma(x) {
        Ok(g) => g.recip(),
        Err(_) => T::zero(),
    }
}

fn check_argument<T: Real>(x: T) -> Result<()> {
    if x.is_nan() || x < T::zero() || x >= T::one() {
        return Err(Error::Domain(format!("x = {x} outside [0, 1)")));
    }
    Ok(())
}

fn polynomial_sum<T: Real>(a: T, b: T, c: T, x: T, degree: usize) -> T {
    let mut term = T::one();
    let mut sum = T::one();
    for k in 0..degree {
        let kf = T::from(k).unwrap();
        term = term * (a + kf) * (b + kf) / ((c + kf) * (kf + T::one())) * x;
        sum = sum + term;
    }
    sum
}

fn series<T: Real>(a: T, b: T, c: T, x: T) -> Result<T> {
    let mut term = T::one();
    let mut sum = T::one();
    let mut streak = 0;
    for k in 0..SERIES_CAP {
        let kf = T::from(k).unwrap();
        term = term * (a + kf) * (b + kf) / ((c + kf) * (kf + T::one())) * x;
        sum = sum + term;
        if stopped(term, sum, &mut streak) {
            return Ok(sum);
        }
    }
    Err(Error::NonConvergence(SERIES_CAP))
}

fn near_integer<T: Real>(v: T) -> bool {
    (v - v.round()).abs() < T::lit(1e-6)
}

/// Digamma function.
pub fn digamma<T: Real>(x: T) -> Result<T> {
    if x <= T::zero() && x == x.round() {
        return Err(Error::Pole(x.to_f64().unwrap_or(f64::NAN)));
    }
    if x < T::lit(0.5) {
        let cot = (T::PI() * x).cos() / sin_pi(x);
        return Ok(digamma(T::one() - x)? - T::PI() * cot);
    }
    let mut acc = T::zero();
    let mut y = x;
    while y < T::lit(12.0) {
        acc = acc - y.recip();
        y = y + T::one();
    }
    let inv2 = (y * y).recip();
    // Asymptotic series with Bernoulli coefficients B_{2k}/(2k).
    let tail = inv2
        * (T::lit(1.0 / 12.0)
            - inv2
                * (T::lit(1.0 / 120.0)
                    - inv2 * (T::lit(1.0 / 252.0) - inv2
                        * (T::lit(1.0 / 240.0)
                            - inv2 * (T::lit(1.0 / 132.0) - inv2 * T::lit(691.0 / 32_760.0))))));
    Ok(acc + y.ln() - T::lit(0.5) / y - tail)
}

fn stopped<T: Real>(term: T, sum: T, streak: &mut usize) -> bool {
    if term.abs() <= T::lit(SERIES_STOP) * sum.abs() {
        *streak += 1;
    } else {
        *streak = 0;
    }
    *streak == SERIES_STREAK
}

/// Limiting connection formula for `c = a + b + m` with integer `m >= 0`.
fn integer_excess<T: Real>(a: T, b: T, m: usize, x: T) -> Result<T> {
    let mf = T::from(m).unwrap();
    let c = a + b + mf;
    let y = T::one() - x;
    let mut finite = T::zero();
    if m > 0 {
        let mut term = T::one();
        finite = T::one();
        for n in 0..m - 1 {
            let nf = T::from(n).unwrap();
            term = term * (a + nf) * (b + nf) / ((nf + T::one()) * (T::one() - mf + nf)) * y;
            finite = finite + term;
        }
        finite = finite * gamma(mf)? * gamma(c)? * rgamma(a + mf) * rgamma(b + mf);
    }
    let lead = rgamma(a) * rgamma(b);
    if lead == T::zero() {
        return Ok(finite);
    }
    let mut psi_n1 = digamma(T::one())?;
    let mut psi_nm1 = digamma(mf + T::one())?;
    let mut psi_a = digamma(a + mf)?;
    let mut psi_b = digamma(b + mf)?;
    let ln_y = y.ln();
    let mut coef = rgamma(mf + T::one());
    let mut sum = coef * (ln_y - psi_n1 - psi_nm1 + psi_a + psi_b);
    let mut streak = 0;
    for n in 0..SERIES_CAP {
        let nf = T::from(n).unwrap();
        coef = coef * (a + mf + nf) * (b + mf + nf) / ((nf + T::one()) * (nf + mf + T::one())) * y;
        psi_n1 = psi_n1 + (nf + T::one()).recip();
        psi_nm1 = psi_nm1 + (nf + mf + T::one()).recip();
        psi_a = psi_a + (a + mf + nf).recip();
        psi_b = psi_b + (b + mf + nf).recip();
        let term = coef * (ln_y - psi_n1 - psi_nm1 + psi_a + psi_b);
        sum = sum + term;
        if stopped(term, sum, &mut streak) {
            let sign = if m % 2 == 0 { T::one() } else { -T::one() };
            return Ok(finite - sign * y.powi(m as i32) * gamma(c)? * lead * sum);
        }
    }
    Err(Error::NonConvergence(SERIES_CAP))
}

fn connection<T: Real>(a: T, b: T, c: T, x: T) -> Result<T> {
    let s = c - a - b;
    let y = T::one() - x;
    let g1 = gamma(c)? * gamma(s)? * rgamma(c - a) * rgamma(c - b);
    let g2 = gamma(c)? * gamma(-s)? * rgamma(a) * rgamma(b);
    let mut total = T::zero();
    if g1 != T::zero() {
        total = total + g1 * series(a, b, T::one() - s, y)?;
    }
    if g2 != T::zero() {
        total = total + g2 * y.powf(s) * series(c - a, c - b, T::one() + s, y)?;
    }
    Ok(total)
}

/// `₂F₁(a, b; c; x)` for `0 <= x < 1`.
pub fn hyp2f1<T: Real>(params: &HypergeometricParams<T>, x: T) -> Result<T> {
    check_argument(x)?;
    let HypergeometricParams { a, b, c, .. } = *params;
    if let Some(n) = params.polynomial_degree() {
        return Ok(polynomial_sum(a, b, c, x, n));
    }
    if x <= T::lit(CONNECTION_SWITCH) {
        return series(a, b, c, x);
    }
    let s = params.excess();
    let r = s.round();
    let integral = if params.exact { s == r } else { (s - r).abs() <= T::lit(1e-12) };
    if integral {
        let m = r.abs().to_usize().unwrap_or(usize::MAX);
        return if r >= T::zero() {
            integer_excess(a, b, m, x)
        } else {
            Ok((T::one() - x).powf(s) * integer_excess(c - a, c - b, m, x)?)
        };
    }
    if near_integer(s) && x <= T::lit(0.999) {
        // The connection formula cancels badly here; the direct series
        // still converges within the cap.
        return if s < T::zero() {
            series(c - a, c - b, c, x).map(|v| v * (T::one() - x).powf(s))
        } else {
            series(a, b, c, x)
        };
    }
    connection(a, b, c, x)
}

/// Gauss summation `₂F₁(a, b; c; 1)`.
pub fn hyp2f1_at_one<T: Real>(params: &HypergeometricParams<T>) -> Result<T> {
    let HypergeometricParams { a, b, c, .. } = *params;
    if let Some(n) = params.polynomial_degree() {
        return Ok(polynomial_sum(a, b, c, T::one(), n));
    }
    let s = params.excess();
    if s <= T::zero() {
        return Err(Error::Divergence(format!("c - a - b = {s} <= 0")));
    }
    Ok(gamma(c)? * gamma(s)? * rgamma(c - a) * rgamma(c - b))
}

/// Evaluates `(1-x)^{c-a-b} ₂F₁(c-a, c-b; c; x)`.
pub fn euler_transform<T: Real>(params: &HypergeometricParams<T>, x: T) -> Result<T> {
    check_argument(x)?;
    let HypergeometricParams { a, b, c, exact } = *params;
    let swapped = HypergeometricParams::with_exactness(c - a, c - b, c, exact)?;
    Ok((T::one() - x).powf(params.excess()) * hyp2f1(&swapped, x)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;

    fn hp(a: f64, b: f64, c: f64) -> HypergeometricParams<f64> {
        HypergeometricParams::new(a, b, c).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    fn factorial(n: u64) -> BigInt {
        (1..=n).fold(BigInt::from(1), |acc, k| acc * k)
    }

    fn big_ratio(num: &BigInt, den: &BigInt) -> f64 {
        // Both can exceed f64 range; shift to keep 60 significant bits.
        let shift = num.bits().max(den.bits()) as i64 - 900;
        let (n, d) = if shift > 0 {
            (num >> shift as usize, den >> shift as usize)
        } else {
            (num.clone(), den.clone())
        };
        let nf: f64 = n.to_string().parse().unwrap();
        let df: f64 = d.to_string().parse().unwrap();
        nf / df
    }

    #[test]
    fn gamma_trivial_values() {
        assert!(rel(gamma(1.0).unwrap(), 1.0) < 1e-15);
        assert!(rel(gamma(0.5).unwrap(), 1.772_453_850_905_516) < 1e-15);
        assert!(rel(gamma(6.0).unwrap(), 120.0) < 1e-14);
    }

    #[test]
    fn gamma_poles() {
        for x in [0.0, -1.0, -7.0, -50.0] {
            assert!(matches!(gamma(x), Err(Error::Pole(_))));
            assert_eq!(rgamma(x), 0.0);
        }
    }

    #[test]
    fn gamma_factorials_up_to_fifty() {
        for n in 1..=50u64 {
            let exact = big_ratio(&factorial(n - 1), &BigInt::from(1));
            assert!(rel(gamma(n as f64).unwrap(), exact) < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn gamma_half_integers_both_signs() {
        // Γ(n+1/2) = (2n)! √π / (4^n n!); Γ(1/2-n) = (-4)^n n! √π / (2n)!.
        let sqrt_pi = std::f64::consts::PI.sqrt();
        for n in 0..=49u64 {
            let num = factorial(2 * n);
            let den = BigInt::from(4).pow(n as u32) * factorial(n);
            let pos = big_ratio(&num, &den) * sqrt_pi;
            assert!(rel(gamma(n as f64 + 0.5).unwrap(), pos) < 1e-13, "n = {n}");
            let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
            let neg = sign * big_ratio(&den, &num) * sqrt_pi;
            assert!(rel(gamma(0.5 - n as f64).unwrap(), neg) < 1e-13, "n = {n}");
        }
    }

    #[test]
    fn gamma_f32_instantiation() {
        assert!((gamma(5.0f32).unwrap() - 24.0).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn gamma_recurrence(x in -49.0f64..49.0) {
            prop_assume!((x - x.round()).abs() > 1e-3 && (x + 1.0 - (x + 1.0).round()).abs() > 1e-3);
            let lhs = gamma(x + 1.0).unwrap();
            let rhs = x * gamma(x).unwrap();
            prop_assert!(rel(lhs, rhs) < 1e-13);
        }

        #[test]
        fn gamma_reflection(x in 0.01f64..0.99) {
            let lhs = gamma(x).unwrap() * gamma(1.0 - x).unwrap();
            let rhs = std::f64::consts::PI / (std::f64::consts::PI * x).sin();
            prop_assert!(rel(lhs, rhs) < 1e-14);
        }
    }

    /// Fixed-point big-integer summation of the series with rational
    /// parameters `a = an/d`, `b = bn/d`, `c = cn/d`, `x = xn/xd`.
    fn series_oracle(an: i64, bn: i64, cn: i64, d: i64, xn: i64, xd: i64, terms: usize) -> f64 {
        let scale = BigInt::from(10).pow(80);
        let mut term = scale.clone();
        let mut sum = scale.clone();
        for k in 0..terms as i64 {
            let num = BigInt::from(an + d * k) * BigInt::from(bn + d * k) * BigInt::from(xn);
            let den = BigInt::from(d) * BigInt::from(cn + d * k) * BigInt::from(k + 1) * BigInt::from(xd);
            term = term * num / den;
            sum += &term;
        }
        big_ratio(&sum, &scale)
    }

    const ORACLE_03_07_11_05: f64 = 1.134_207_645_378_367_7;

    #[test]
    fn hyp2f1_matches_big_integer_series() {
        let oracle = series_oracle(3, 7, 11, 10, 1, 2, 10_000);
        assert!((oracle - ORACLE_03_07_11_05).abs() < 1e-15, "oracle {oracle:.17}");
        let v = hyp2f1(&hp(0.3, 0.7, 1.1), 0.5).unwrap();
        assert!(rel(v, oracle) < 1e-12);
    }

    #[test]
    fn hyp2f1_near_one_matches_oracle() {
        // x = 0.95 uses the connection formula; the oracle sums directly.
        let oracle = series_oracle(3, 7, 11, 10, 19, 20, 4_000);
        let v = hyp2f1(&hp(0.3, 0.7, 1.1), 0.95).unwrap();
        assert!(rel(v, oracle) < 1e-12, "{v} vs {oracle}");
        let oracle = series_oracle(2, 3, 15, 10, 99, 100, 20_000);
        let v = hyp2f1(&hp(0.2, 0.3, 1.5), 0.99).unwrap();
        assert!(rel(v, oracle) < 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn integer_excess_matches_oracle() {
        // c - a - b = 0 and c - a - b = -1.
        let oracle = series_oracle(3, 7, 10, 10, 9, 10, 3_000);
        let v = hyp2f1(&hp(0.3, 0.7, 1.0), 0.9).unwrap();
        assert!(rel(v, oracle) < 1e-12, "{v} vs {oracle}");
        let oracle = series_oracle(7, 9, 6, 10, 9, 10, 3_000);
        let v = hyp2f1(&hp(0.7, 0.9, 0.6), 0.9).unwrap();
        assert!(rel(v, oracle) < 1e-12, "{v} vs {oracle}");
        let oracle = series_oracle(5, 15, 40, 10, 999, 1000, 60_000);
        let v = hyp2f1(&hp(0.5, 1.5, 4.0), 0.999).unwrap();
        assert!(rel(v, oracle) < 1e-12, "{v} vs {oracle}");
    }

    #[test]
    fn digamma_values() {
        let euler = 0.577_215_664_901_532_9_f64;
        assert!((digamma(1.0).unwrap() + euler).abs() < 1e-15);
        assert!((digamma(0.5).unwrap() + euler + 2.0 * 2f64.ln()).abs() < 1e-14);
        assert!((digamma(-0.5f64).unwrap() - (digamma(0.5f64).unwrap() + 2.0)).abs() < 1e-13);
        assert!(digamma(-3.0f64).is_err());
    }

    proptest! {
        #[test]
        fn digamma_recurrence(x in -20.0f64..20.0) {
            prop_assume!((x - x.round()).abs() > 1e-3);
            let lhs = digamma(x + 1.0).unwrap();
            let rhs = digamma(x).unwrap() + x.recip();
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn hyp2f1_trivial_cases() {
        assert_eq!(hyp2f1(&hp(2.3, 0.0, 1.7), 0.7).unwrap(), 1.0);
        let (b, c, x) = (0.4, 1.3, 0.6);
        let v = hyp2f1(&hp(-1.0, b, c), x).unwrap();
        assert!((v - (1.0 - b / c * x)).abs() < 1e-15);
        assert!(HypergeometricParams::new(1.0, 1.0, -2.0).is_err());
        assert!(hyp2f1(&hp(1.0, 1.0, 2.0), 1.0).is_err());
    }

    #[test]
    fn polynomial_detection_respects_exactness() {
        let exact = hp(-2.0 + 1e-13, 1.0, 1.5);
        assert_eq!(exact.polynomial_degree(), None);
        let loose = HypergeometricParams::with_exactness(-2.0 + 1e-13, 1.0, 1.5, false).unwrap();
        assert_eq!(loose.polynomial_degree(), Some(2));
    }

    #[test]
    fn at_one_trivial_and_near_one() {
        assert_eq!(hyp2f1_at_one(&hp(0.7, 0.0, 1.4)).unwrap(), 1.0);
        let v = hyp2f1_at_one(&hp(-1.0, 0.4, 1.3)).unwrap();
        assert!((v - (1.0 - 0.4 / 1.3)).abs() < 1e-15);
        let g = hyp2f1_at_one(&hp(0.2, 0.3, 1.5)).unwrap();
        let near = hyp2f1(&hp(0.2, 0.3, 1.5), 1.0 - 1e-6).unwrap();
        assert!((g - near).abs() < 1e-5);
        assert!(matches!(hyp2f1_at_one(&hp(1.0, 1.0, 1.5)), Err(Error::Divergence(_))));
    }

    #[test]
    fn euler_transform_examples() {
        assert_eq!(euler_transform(&hp(0.3, 0.7, 1.1), 0.0).unwrap(), 1.0);
        let lhs = euler_transform(&hp(0.3, 0.7, 1.1), 0.9).unwrap();
        let rhs = hyp2f1(&hp(0.3, 0.7, 1.1), 0.9).unwrap();
        assert!((lhs - rhs).abs() < 1e-11);
        let (b, c, x) = (0.4, 1.3, 0.6);
        let v = euler_transform(&hp(-1.0, b, c), x).unwrap();
        assert!((v - (1.0 - b / c * x)).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn euler_identity(a in -1.5f64..1.5, b in -1.5f64..1.5, s in -1.95f64..1.95, x in 0.0f64..0.95) {
            prop_assume!((s - s.round()).abs() > 1e-2);
            let c = a + b + s;
            prop_assume!((c - c.round()).abs() > 1e-2 || c > 0.0);
            let p = hp(a, b, c);
            let f = hyp2f1(&p, x).unwrap();
            let e = euler_transform(&p, x).unwrap();
            prop_assert!((f - e).abs() <= 1e-11 * (1.0 + f.abs()), "{f} vs {e}");
        }

        #[test]
        fn derivative_contiguity(a in -1.0f64..2.0, b in -1.0f64..2.0, c in 0.5f64..3.0, x in 0.05f64..0.9) {
            let h = 1e-5;
            let fd = (hyp2f1(&hp(a, b, c), x + h).unwrap() - hyp2f1(&hp(a, b, c), x - h).unwrap()) / (2.0 * h);
            let exact = a * b / c * hyp2f1(&hp(a + 1.0, b + 1.0, c + 1.0), x).unwrap();
            prop_assert!((fd - exact).abs() <= 1e-7 * (1.0 + exact.abs()), "{fd} vs {exact}");
        }

        #[test]
        fn gauss_value_consistency(a in -1.0f64..1.0, b in -1.0f64..1.0, s in 0.3f64..2.0) {
            let c = a + b + s;
            let p = hp(a, b, c);
            let eps = 1e-6f64;
            let g = hyp2f1_at_one(&p).unwrap();
            let near = hyp2f1(&p, 1.0 - eps).unwrap();
            let bound = 10.0 * eps.powf(s.min(1.0)) * (1.0 + g.abs()) * (1.0 + a.abs() * b.abs());
            prop_assert!((g - near).abs() <= bound, "{g} vs {near}");
        }
    }
}
