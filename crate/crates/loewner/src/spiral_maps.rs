//! Conformal map onto the complement of the whole logarithmic spiral
//! `t -> exp((1 + ia) t)` and its integral means.

use num_complex::Complex;
use serde::Serialize;

use crate::exact_spectra::{sup_of, Branch, MomentExponents, Sign, SpectrumResult};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpiralParams<T> {
    pub a: T,
}

impl<T: Real> SpiralParams<T> {
    pub fn new(a: T) -> Result<Self> {
        if a.is_finite() {
            Ok(Self { a })
        } else {
            Err(Error::Domain(format!("spiral rate {a}")))
        }
    }

    /// Point `gamma(t)` of the spiral.
    pub fn gamma(&self, t: T) -> Complex<T> {
        (Complex::new(T::one(), self.a) * t).exp()
    }
}

/// `log xi(z)` with `xi = i (1 - z) / (1 + z)` in the upper half-plane.
fn log_xi<T: Real>(z: Complex<T>) -> Result<Complex<T>> {
    let one = Complex::new(T::one(), T::zero());
    if (one - z).norm() == T::zero() || (one + z).norm() == T::zero() {
        return Err(Error::Domain("phi is undefined at z = +-1".into()));
    }
    Ok((Complex::<T>::i() * (one - z) / (one + z)).ln())
}

fn log_phi<T: Real>(z: Complex<T>, a: T) -> Result<Complex<T>> {
    let c = Complex::new(T::lit(2.0), T::zero()) / Complex::new(T::one(), -a);
    Ok(c * log_xi(z)?)
}

fn log_phi_prime<T: Real>(z: Complex<T>, a: T) -> Result<Complex<T>> {
    let one = Complex::new(T::one(), T::zero());
    let lead = (Complex::new(-T::lit(4.0), T::zero()) / Complex::new(T::one(), -a)).ln();
    Ok(lead + log_phi(z, a)? - (one - z * z).ln())
}

pub fn phi<T: Real>(z: Complex<T>, a: T) -> Result<Complex<T>> {
    Ok(log_phi(z, a)?.exp())
}

pub fn phi_prime<T: Real>(z: Complex<T>, a: T) -> Result<Complex<T>> {
    let one = Complex::new(T::one(), T::zero());
    let lead = Complex::new(-T::lit(4.0), T::zero()) / Complex::new(T::one(), -a);
    Ok(lead * phi(z, a)? / (one - z * z))
}

/// `Im((1 - ia)/2 log phi(z))`, which lies in `(0, pi)` on the disk.
pub fn strip_argument<T: Real>(z: Complex<T>, a: T) -> Result<T> {
    Ok((Complex::new(T::one(), -a) * log_phi(z, a)? * T::lit(0.5)).im)
}

/// `|phi'(z)^p / phi(z)^q|` with powers taken through the strip logarithm.
pub fn integrand<T: Real>(z: Complex<T>, exps: &MomentExponents<T>, a: T) -> Result<T> {
    Ok((exps.p * log_phi_prime(z, a)? - exps.q * log_phi(z, a)?).re.exp())
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 7/15-point Gauss-Kronrod panel: `(kronrod, error estimate)`.
fn gk15<T: Real, F: Fn(T) -> Result<T>>(f: &F, lo: T, hi: T) -> Result<(T, T)> {
    let half = T::lit(0.5) * (hi - lo);
    let mid = T::lit(0.5) * (hi + lo);
    let fc = f(mid)?;
    let mut kron = fc * T::lit(GK_WEIGHTS[7]);
    let mut gauss = fc * T::lit(GAUSS_WEIGHTS[3]);
    for j in 0..7 {
        let dx = half * T::lit(GK_NODES[j]);
        let pair = f(mid - dx)? + f(mid + dx)?;
        kron = kron + pair * T::lit(GK_WEIGHTS[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::lit(GAUSS_WEIGHTS[j / 2]);
        }
    }
    Ok((kron * half, ((kron - gauss) * half).abs()))
}

/// Globally adaptive Gauss-Kronrod over the given breakpoints.
pub(crate) fn adaptive_gk<T: Real, F: Fn(T) -> Result<T>>(f: F, breaks: &[T], rel_tol: T, max_panels: usize) -> Result<T> {
    let mut panels = Vec::new();
    for w in breaks.windows(2) {
        let (v, e) = gk15(&f, w[0], w[1])?;
        panels.push((w[0], w[1], v, e));
    }
    loop {
        let total: T = panels.iter().fold(T::zero(), |s, p| s + p.2);
        let err: T = panels.iter().fold(T::zero(), |s, p| s + p.3);
        if err <= rel_tol * total.abs() {
            return Ok(total);
        }
        if panels.len() >= max_panels {
            return Err(Error::Quadrature(format!("refinement stalled: error {err} on total {total}")));
        }
        let (k, _) = panels
            .iter()
            .enumerate()
            .fold((0, -T::one()), |best, (i, p)| if p.3 > best.1 { (i, p.3) } else { best });
        let (lo, hi, _, _) = panels.swap_remove(k);
        let mid = T::lit(0.5) * (lo + hi);
        if mid <= lo || mid >= hi {
            return Err(Error::Quadrature("panel width underflow".into()));
        }
        for (a, b) in [(lo, mid), (mid, hi)] {
            let (v, e) = gk15(&f, a, b)?;
            panels.push((a, b, v, e));
        }
    }
}

/// Breakpoints on `[0, 2 pi]` graded geometrically towards `0`, `pi`, `2 pi`
/// down to the scale `1 - r`.
fn graded_breaks<T: Real>(r: T) -> Vec<T> {
    let pi = T::PI();
    let width = (T::one() - r).max(T::lit(1e-14));
    let mut offsets = vec![T::zero()];
    let mut h = width;
    while h < pi / T::lit(2.0) {
        offsets.push(h);
        h = h * T::lit(4.0);
    }
    offsets.push(pi / T::lit(2.0));
    let mut breaks = Vec::new();
    for centre in [T::zero(), pi] {
        for &o in &offsets {
            breaks.push(centre + o);
        }
        for &o in offsets.iter().rev().skip(1) {
            breaks.push(centre + pi - o);
        }
    }
    breaks.push(T::lit(2.0) * pi);
    breaks.dedup();
    breaks
}

pub fn spiral_integral_means<T: Real>(exps: &MomentExponents<T>, a: T, r: T) -> Result<T> {
    if !(r > T::zero() && r < T::one()) {
        return Err(Error::Domain(format!("radius {r} outside (0, 1)")));
    }
    let f = |theta: T| integrand(Complex::from_polar(r, theta), exps, a);
    let tol = T::epsilon().sqrt().max(T::lit(1e-10));
    Ok(r * adaptive_gk(f, &graded_breaks(r), tol, 20_000)?)
}

/// Least-squares slope of `log I(r)` against `log 1/(1 - r)`.
pub fn fitted_slope<T: Real>(exps: &MomentExponents<T>, a: T, radii: &[T]) -> Result<T> {
    let mut xs = Vec::with_capacity(radii.len());
    let mut ys = Vec::with_capacity(radii.len());
    for &r in radii {
        xs.push(-(T::one() - r).ln());
        ys.push(spiral_integral_means(exps, a, r)?.ln());
    }
    Ok(regression_slope(&xs, &ys))
}

pub(crate) fn regression_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = T::from(xs.len()).unwrap();
    let mx = xs.iter().fold(T::zero(), |s, &x| s + x) / n;
    let my = ys.iter().fold(T::zero(), |s, &y| s + y) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
    }
    sxy / sxx
}

/// `Re((p - q)/(1 - ia))`, the reduced variable at `kappa = 0`.
pub fn spiral_tau<T: Real>(exps: &MomentExponents<T>, a: T) -> T {
    ((exps.p - exps.q) / Complex::new(T::one(), -a)).re
}

pub fn spiral_spectrum_complete<T: Real>(exps: &MomentExponents<T>, a: T) -> SpectrumResult<T> {
    let two_tau = T::lit(2.0) * spiral_tau(exps, a);
    let shift = exps.p.re - T::one();
    let mut r = sup_of(&[(T::zero(), Branch::Zero), (two_tau + shift, Branch::One(Sign::Plus)), (shift - two_tau, Branch::Two)]);
    r.tau = Some(two_tau / T::lit(2.0));
    r
}

pub fn spiral_spectrum_half<T: Real>(exps: &MomentExponents<T>, a: T) -> SpectrumResult<T> {
    let tau = spiral_tau(exps, a);
    let mut r = sup_of(&[
        (-exps.p.re - T::one(), Branch::Tip),
        (T::zero(), Branch::Zero),
        (T::lit(2.0) * tau + exps.p.re - T::one(), Branch::One(Sign::Plus)),
    ]);
    r.tau = Some(tau);
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact_spectra::{beta1_complex, SleParams};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    type C = Complex<f64>;

    #[test]
    fn phi_examples() {
        assert!((phi(C::new(0.0, 0.0), 0.0).unwrap() - C::new(-1.0, 0.0)).norm() < 1e-15);
        assert!(phi(C::new(1.0 - 1e-9, 0.0), 0.7).unwrap().norm() < 1e-6);
        assert!(phi(C::new(-1.0 + 1e-9, 0.0), 0.7).unwrap().norm() > 1e6);
        assert!(phi(C::new(1.0, 0.0), 0.7).is_err());
        assert!(phi(C::new(-1.0, 0.0), 0.7).is_err());
    }

    #[test]
    fn phi_is_conformal_on_a_grid() {
        let h = 1e-5;
        for a in [0.0, 1.0, -2.5] {
            for i in 0..9 {
                for j in 0..16 {
                    let r = 0.1 * i as f64;
                    let z = C::from_polar(r, j as f64 * std::f64::consts::PI / 8.0 + 0.1);
                    let fd = (phi(z + h, a).unwrap() - phi(z - h, a).unwrap()) / (2.0 * h);
                    let an = phi_prime(z, a).unwrap();
                    assert!((fd - an).norm() <= 1e-8 * (1.0 + an.norm()), "z {z} a {a}");
                }
            }
        }
        let z = C::new(0.3, 0.2);
        let fd = (phi(z + 1e-5, 1.0).unwrap() - phi(z - 1e-5, 1.0).unwrap()) / 2e-5;
        assert!((fd - phi_prime(z, 1.0).unwrap()).norm() < 1e-8);
    }

    #[test]
    fn image_lies_in_strip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let z = C::from_polar(rng.random_range(0.0..0.9999), rng.random_range(0.0..std::f64::consts::TAU));
            let a = rng.random_range(-5.0..5.0);
            let s = strip_argument(z, a).unwrap();
            assert!(s > 0.0 && s < std::f64::consts::PI);
        }
    }

    #[test]
    fn phi_maps_onto_spiral_complement() {
        let a = 1.0;
        let sp = SpiralParams::new(a).unwrap();
        let w = phi(C::from_polar(1.0 - 1e-12, 1.0), a).unwrap();
        let t = w.norm().ln();
        let g = sp.gamma(t);
        let ratio = w / g;
        assert!((ratio - 1.0).norm() < 1e-5, "{ratio}");
    }

    #[test]
    fn integral_means_of_unit_integrand() {
        let exps = MomentExponents::real(0.0, 0.0);
        for r in [0.1, 0.5, 0.999] {
            let v = spiral_integral_means(&exps, 1.3, r).unwrap();
            assert!((v - std::f64::consts::TAU * r).abs() < 1e-10);
        }
    }

    #[test]
    fn slope_matches_complete_spectrum() {
        let radii = [0.99, 0.995, 0.999, 0.9995, 0.9999];
        let exps = MomentExponents::real(1.0f64, 0.0);
        let slope = fitted_slope(&exps, 1.0, &radii).unwrap();
        let want = spiral_spectrum_complete(&exps, 1.0).beta;
        assert_eq!(want, 1.0);
        assert!((slope - want).abs() < 0.05, "slope {slope}");

        let exps = MomentExponents::new(C::new(2.0, 1.0), C::new(0.0, 0.0));
        let slope = fitted_slope(&exps, 2.0, &radii).unwrap();
        let want = spiral_spectrum_complete(&exps, 2.0).beta;
        assert!((slope - want).abs() < 0.1, "slope {slope} vs {want}");
    }

    #[test]
    fn asymptotic_ratio_is_bounded() {
        let exps = MomentExponents::new(C::new(1.5, 0.5), C::new(0.5, -0.2));
        let a = 0.8;
        let e = (exps.p - exps.q) * 2.0 / C::new(1.0, -a);
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for r in [0.9, 0.99, 0.999] {
            for j in 0..200 {
                let z = C::from_polar(r, j as f64 * std::f64::consts::TAU / 200.0);
                let one = C::new(1.0, 0.0);
                let model = (e.re * ((one - z) / (one + z)).norm().ln()
                    - e.im * ((one - z) / (one + z)).arg()
                    - exps.p.re * ((one - z).norm().ln() + (one + z).norm().ln()))
                .exp();
                let ratio = integrand(z, &exps, a).unwrap() / model;
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        assert!(lo > 0.0 && hi / lo < 1e4, "{lo} {hi}");
    }

    #[test]
    fn spectrum_examples() {
        let e = MomentExponents::real(1.0f64, 0.0);
        let r = spiral_spectrum_complete(&e, 1.0);
        assert!((r.beta - 1.0).abs() < 1e-15);
        assert_eq!(r.branch, Branch::One(Sign::Plus));
        assert_eq!(spiral_spectrum_complete(&MomentExponents::real(0.0, 0.0), 0.0).beta, 0.0);
        let e = MomentExponents::real(2.5, 2.5);
        assert_eq!(spiral_spectrum_complete(&e, 3.0).beta, 1.5);

        let e = MomentExponents::real(-4.0, 0.0);
        let r = spiral_spectrum_half(&e, 1.0);
        assert_eq!((r.beta, r.branch), (3.0, Branch::Tip));
        let r = spiral_spectrum_half(&MomentExponents::real(0.0, 0.0), 0.4);
        assert_eq!((r.beta, r.branch), (0.0, Branch::Zero));
    }

    #[test]
    fn small_kappa_limit_of_drifted_beta1() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let exps = MomentExponents::new(
                C::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
                C::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)),
            );
            let a = rng.random_range(-3.0..3.0);
            let tau0 = spiral_tau(&exps, a);
            let eps = beta1_complex(&exps, &SleParams::new(1e-8, a).unwrap());
            let want = 2.0 * tau0 + exps.p.re - 1.0;
            assert!((eps.tau.unwrap() - tau0).abs() < 1e-6, "{exps:?} {a}");
            assert!((eps.beta - want).abs() < 1e-6);
            let exact = beta1_complex(&exps, &SleParams::new(0.0, a).unwrap());
            assert!((exact.beta - want).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn inversion_duality(pr in -5.0f64..5.0, pi in -5.0f64..5.0, qr in -5.0f64..5.0, qi in -5.0f64..5.0, a in -4.0f64..4.0) {
            let p = C::new(pr, pi);
            let q = C::new(qr, qi);
            let lhs = spiral_spectrum_complete(&MomentExponents::new(p, q), a).beta;
            let rhs = spiral_spectrum_complete(&MomentExponents::new(p, p * 2.0 - q), a).beta;
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }
}
