use loewner::exact_spectra::{red_parabola, MomentExponents, SleParams};
use loewner::levy_driving::LevySymbol;
use loewner::loewner_sim::{estimate_beta, polar, AngularRule, BetaFitSettings, MonteCarloSettings};
use loewner::C64;

/// `∫ |1 - r e^{iθ}|^{2α} dθ (1 - r²)^{-κα²/2}` for real `α`.
fn red_parabola_means(alpha: f64, kappa: f64, r: f64) -> f64 {
    let m = 4096;
    let s: f64 = (0..m)
        .map(|j| (C64::new(1.0, 0.0) - polar(r, std::f64::consts::TAU * j as f64 / m as f64)).norm().powf(2.0 * alpha))
        .sum();
    s * std::f64::consts::TAU / m as f64 * (1.0 - r * r).powf(-0.5 * kappa * alpha * alpha)
}

#[test]
fn trivial_exponents_have_flat_means() {
    let sym = LevySymbol::DriftedBrownian { kappa: 0.0, a: 0.0 };
    let fit = BetaFitSettings { angular: AngularRule::Trapezoid { n: 32 }, ..Default::default() };
    let b = estimate_beta(&sym, &MomentExponents::real(0.0, 0.0), &[0.9, 0.95, 0.98, 0.99], &MonteCarloSettings::new(1, 8.0, 1e-2, 0), &fit)
        .unwrap();
    assert!(b.beta_hat.abs() < 0.02, "{}", b.beta_hat);
    for m in &b.estimate.m_hat {
        assert!((m - std::f64::consts::TAU).abs() < 1e-9);
    }
}

#[test]
fn sle6_red_parabola_slope() {
    let (kappa, alpha) = (6.0, 0.25);
    let pt = red_parabola(C64::new(alpha, 0.0), &SleParams::new(kappa, 0.0).unwrap()).unwrap();
    assert!((pt.exps.p.re - 1.0625).abs() < 1e-15 && (pt.exps.q.re - 1.125).abs() < 1e-15);
    let exps = MomentExponents::new(pt.exps.p, pt.exps.q);
    let sym = LevySymbol::DriftedBrownian { kappa, a: 0.0 };
    let radii = [0.9, 0.93, 0.96, 0.98, 0.99];
    let fit = BetaFitSettings { angular: AngularRule::Trapezoid { n: 32 }, max_rel_stderr: 1.0, ..Default::default() };
    let b = estimate_beta(&sym, &exps, &radii, &MonteCarloSettings::new(200, 12.0, 1e-2, 1), &fit).unwrap();
    let target = 0.5 * kappa * alpha * alpha;
    assert!((b.beta_hat - target).abs() < 0.1, "beta_hat {} vs {target}", b.beta_hat);
    let m = red_parabola_means(alpha, kappa, 0.9);
    let (got, se) = (b.estimate.m_hat[0], b.estimate.stderr[0]);
    assert!((got - m).abs() < 4.0 * se + 0.03 * m, "M(0.9) {got} ± {se} vs {m}");
}
