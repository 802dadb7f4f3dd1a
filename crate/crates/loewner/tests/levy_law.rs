use loewner::levy_driving::{mix64, sample_path, LevySymbol};
use loewner::C64;
use rayon::prelude::*;

const PATHS: u64 = 100_000;

fn endpoints(symbol: &LevySymbol, horizon: f64, dt: f64, master: u64) -> Vec<f64> {
    (0..PATHS)
        .into_par_iter()
        .map(|i| *sample_path(symbol, horizon, dt, mix64(master, i)).unwrap().values.last().unwrap())
        .collect()
}

fn check_characteristic_function(symbol: LevySymbol, horizon: f64, dt: f64, master: u64) {
    let ends = endpoints(&symbol, horizon, dt, master);
    let n = ends.len() as f64;
    for xi in [1.0, 2.0, 3.0] {
        let target = (-symbol.eta(xi) * horizon).exp();
        let samples: Vec<C64> = ends.iter().map(|&l| C64::from_polar(1.0, xi * l)).collect();
        let mean = samples.iter().sum::<C64>() / n;
        let var_re = samples.iter().map(|s| (s.re - mean.re).powi(2)).sum::<f64>() / (n - 1.0);
        let var_im = samples.iter().map(|s| (s.im - mean.im).powi(2)).sum::<f64>() / (n - 1.0);
        let (se_re, se_im) = ((var_re / n).sqrt(), (var_im / n).sqrt());
        assert!(
            (mean.re - target.re).abs() <= 4.0 * se_re + 1e-12,
            "{symbol:?} xi={xi}: re {} vs {}",
            mean.re,
            target.re
        );
        assert!(
            (mean.im - target.im).abs() <= 4.0 * se_im + 1e-12,
            "{symbol:?} xi={xi}: im {} vs {}",
            mean.im,
            target.im
        );
    }
}

#[test]
fn drifted_brownian_characteristic_function() {
    check_characteristic_function(LevySymbol::DriftedBrownian { kappa: 4.0, a: 0.0 }, 1.0, 0.05, 1);
    check_characteristic_function(LevySymbol::DriftedBrownian { kappa: 0.5, a: 1.3 }, 1.0, 0.05, 2);
}

#[test]
fn stable_characteristic_function() {
    for (k, alpha) in [0.7, 1.0, 1.5, 2.0].into_iter().enumerate() {
        check_characteristic_function(LevySymbol::SymmetricStable { alpha }, 1.0, 0.05, 10 + k as u64);
    }
}

#[test]
fn jump_characteristic_function() {
    check_characteristic_function(LevySymbol::BrownianPlusOddPiJumps { kappa: 0.5, rate: 0.8 }, 1.0, 0.05, 20);
    check_characteristic_function(LevySymbol::BrownianPlusOddPiJumps { kappa: 0.0, rate: 0.3 }, 2.0, 0.1, 21);
}

#[test]
fn drifted_brownian_e_minus_two() {
    let ends = endpoints(&LevySymbol::DriftedBrownian { kappa: 4.0, a: 0.0 }, 1.0, 0.05, 99);
    let n = ends.len() as f64;
    let re: Vec<f64> = ends.iter().map(|l| l.cos()).collect();
    let mean = re.iter().sum::<f64>() / n;
    let var = re.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - (-2f64).exp()).abs() <= 3.0 * (var / n).sqrt());
}

#[test]
fn brownian_increments_are_stationary() {
    let symbol = LevySymbol::DriftedBrownian { kappa: 2.0, a: 0.5 };
    let paths: Vec<Vec<f64>> = (0..20_000u64)
        .into_par_iter()
        .map(|i| sample_path(&symbol, 2.0, 0.1, mix64(5, i)).unwrap().values)
        .collect();
    let n = paths.len() as f64;
    let variance = |k0: usize, k1: usize| {
        let inc: Vec<f64> = paths.iter().map(|p| p[k1] - p[k0]).collect();
        let m = inc.iter().sum::<f64>() / n;
        inc.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)
    };
    // Var = kappa * 0.5; sample-variance standard error is about var * sqrt(2/n).
    let expected = 1.0;
    for k0 in [0, 5, 10, 15] {
        let v = variance(k0, k0 + 5);
        assert!((v - expected).abs() < 5.0 * expected * (2.0 / n).sqrt(), "start {k0}: {v}");
    }
}
