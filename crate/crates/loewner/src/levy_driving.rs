//! Lévy symbols and sampled driving paths.

use std::f64::consts::{FRAC_PI_2, PI};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant")]
pub enum LevySymbol {
    /// `L_t = sqrt(kappa) B_t + a t`.
    DriftedBrownian { kappa: f64, a: f64 },
    /// Symmetric alpha-stable process with `E exp(i xi L_t) = exp(-t |xi|^alpha / 2)`.
    SymmetricStable { alpha: f64 },
    /// Brownian motion plus compound-Poisson jumps of size `±pi`.
    BrownianPlusOddPiJumps { kappa: f64, rate: f64 },
}

impl LevySymbol {
    /// True when the path carries no randomness.
    pub fn is_deterministic(&self) -> bool {
        match *self {
            LevySymbol::DriftedBrownian { kappa, .. } => kappa == 0.0,
            LevySymbol::SymmetricStable { .. } => false,
            LevySymbol::BrownianPlusOddPiJumps { kappa, rate } => kappa == 0.0 && rate == 0.0,
        }
    }

    /// True when paths can jump.
    pub fn has_jumps(&self) -> bool {
        match *self {
            LevySymbol::DriftedBrownian { .. } => false,
            LevySymbol::SymmetricStable { alpha } => alpha < 2.0,
            LevySymbol::BrownianPlusOddPiJumps { rate, .. } => rate > 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LevySymbol::DriftedBrownian { kappa, a } => {
                if !(kappa >= 0.0) || !a.is_finite() {
                    return Err(Error::Domain(format!("kappa = {kappa}, a = {a}")));
                }
            }
            LevySymbol::SymmetricStable { alpha } => {
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(Error::Domain(format!("stability index {alpha} outside (0, 2]")));
                }
            }
            LevySymbol::BrownianPlusOddPiJumps { kappa, rate } => {
                if !(kappa >= 0.0) || !(rate >= 0.0) {
                    return Err(Error::Domain(format!("kappa = {kappa}, rate = {rate}")));
                }
            }
        }
        Ok(())
    }

    pub fn eta(&self, xi: f64) -> C64 {
        match *self {
            LevySymbol::DriftedBrownian { kappa, a } => C64::new(0.5 * kappa * xi * xi, -a * xi),
            LevySymbol::SymmetricStable { alpha } => C64::new(0.5 * xi.abs().powf(alpha), 0.0),
            LevySymbol::BrownianPlusOddPiJumps { kappa, rate } => {
                C64::new(0.5 * kappa * xi * xi + rate * (1.0 - (PI * xi).cos()), 0.0)
            }
        }
    }

    pub fn eta1(&self) -> f64 {
        self.eta(1.0).re
    }

    pub fn eta2(&self) -> f64 {
        self.eta(2.0).re
    }

    /// Brownian diffusivity, zero for the stable variant.
    pub fn kappa(&self) -> f64 {
        match *self {
            LevySymbol::DriftedBrownian { kappa, .. } | LevySymbol::BrownianPlusOddPiJumps { kappa, .. } => kappa,
            LevySymbol::SymmetricStable { .. } => 0.0,
        }
    }

    pub fn drift(&self) -> f64 {
        match *self {
            LevySymbol::DriftedBrownian { a, .. } => a,
            _ => 0.0,
        }
    }
}

/// The jump-plus-Brownian symbol with prescribed `Re eta(1)` and `Re eta(2)`.
pub fn symbol_for_pair(eta1: f64, eta2: f64) -> Result<LevySymbol> {
    if !(eta2 >= 0.0) || !(eta1 >= eta2 / 4.0) {
        return Err(Error::Domain(format!("need eta1 >= eta2/4 >= 0, got ({eta1}, {eta2})")));
    }
    Ok(LevySymbol::BrownianPlusOddPiJumps {
        kappa: eta2 / 2.0,
        rate: (eta1 - eta2 / 4.0) / 2.0,
    })
}

/// SplitMix64-style mixing of a master seed with a stream index.
pub fn mix64(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sampled `L` on a time grid. The grid is uniform with step `dt` unless
/// `times` is present.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverPath {
    pub dt: f64,
    pub values: Vec<f64>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

impl DriverPath {
    /// The constant driver `L == value`.
    pub fn constant(value: f64, horizon: f64, dt: f64) -> Self {
        let steps = step_count(horizon, dt);
        Self { dt, values: vec![value; steps + 1], seed: 0, times: None }
    }

    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    /// Time of grid point `k`.
    pub fn time(&self, k: usize) -> f64 {
        match &self.times {
            Some(t) => t[k],
            None => k as f64 * self.dt,
        }
    }

    /// Length of step `k`, from grid point `k` to `k + 1`.
    pub fn step(&self, k: usize) -> f64 {
        match &self.times {
            Some(t) => t[k + 1] - t[k],
            None => self.dt,
        }
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps())
    }

    /// `lambda = exp(i L)` at grid index `k`.
    pub fn lambda(&self, k: usize) -> C64 {
        C64::from_polar(1.0, self.values[k])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Quality(e.to_string());
        w.write_record(["t", "L_t"]).map_err(io)?;
        for (k, v) in self.values.iter().enumerate() {
            w.write_record([format!("{}", self.time(k)), format!("{v}")]).map_err(io)?;
        }
        w.flush().map_err(|e| Error::Quality(e.to_string()))
    }
}

fn step_count(horizon: f64, dt: f64) -> usize {
    ((horizon / dt).round() as usize).max(1)
}

/// Step lengths `min(dt, c (delta0 + t)²)` covering `[0, horizon]`.
pub fn graded_steps(horizon: f64, dt: f64, delta0: f64, c: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && horizon > 0.0 && delta0 > 0.0 && c > 0.0) {
        return Err(Error::Domain(format!("graded grid needs positive T, dt, delta0, c; got {horizon}, {dt}, {delta0}, {c}")));
    }
    let mut out = Vec::new();
    let mut t = 0.0;
    while t < horizon * (1.0 - 1e-14) {
        let h = dt.min(c * (delta0 + t).powi(2)).min(horizon - t);
        out.push(h);
        t += h;
    }
    Ok(out)
}

/// Standard symmetric stable variable with `E exp(i xi X) = exp(-|xi|^alpha)`.
fn chambers_mallows_stuck<R: Rng>(alpha: f64, rng: &mut R) -> f64 {
    let v = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
    let w: f64 = Exp1.sample(rng);
    if alpha == 1.0 {
        return v.tan();
    }
    (alpha * v).sin() / v.cos().powf(1.0 / alpha) * (((1.0 - alpha) * v).cos() / w).powf((1.0 - alpha) / alpha)
}

/// `L` on a uniform grid of step `dt` over `[0, horizon]`.
pub fn sample_path(symbol: &LevySymbol, horizon: f64, dt: f64, seed: u64) -> Result<DriverPath> {
    symbol.validate()?;
    if !(dt > 0.0) || !(dt <= horizon) {
        return Err(Error::Domain(format!("need 0 < dt <= T, got dt = {dt}, T = {horizon}")));
    }
    let steps = step_count(horizon, dt);
    let values = sample_values(symbol, steps, |_| dt, |k| k as f64 * dt, seed)?;
    Ok(DriverPath { dt, values, seed, times: None })
}

/// `L` on the grid with the given step lengths.
pub fn sample_path_on_steps(symbol: &LevySymbol, steps: &[f64], seed: u64) -> Result<DriverPath> {
    symbol.validate()?;
    if steps.is_empty() || steps.iter().any(|&h| !(h > 0.0)) {
        return Err(Error::Domain("step lengths must be positive".into()));
    }
    let mut times = Vec::with_capacity(steps.len() + 1);
    times.push(0.0);
    for &h in steps {
        times.push(times[times.len() - 1] + h);
    }
    let values = sample_values(symbol, steps.len(), |k| steps[k - 1], |k| times[k], seed)?;
    let dt = steps.iter().cloned().fold(0.0, f64::max);
    Ok(DriverPath { dt, values, seed, times: Some(times) })
}

/// Values at grid points `0..=steps`; `h(k)` is the length of the step ending
/// at point `k`, `t(k)` the time of point `k`.
fn sample_values<H: Fn(usize) -> f64, T: Fn(usize) -> f64>(
    symbol: &LevySymbol,
    steps: usize,
    h: H,
    t: T,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(steps + 1);
    values.push(0.0);
    let mut noise = 0.0;
    match *symbol {
        LevySymbol::DriftedBrownian { kappa, a } => {
            for k in 1..=steps {
                if kappa > 0.0 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    noise += (kappa * h(k)).sqrt() * g;
                }
                values.push(a * t(k) + noise);
            }
        }
        LevySymbol::SymmetricStable { alpha } => {
            for k in 1..=steps {
                noise += if alpha == 2.0 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    h(k).sqrt() * g
                } else {
                    (h(k) / 2.0).powf(1.0 / alpha) * chambers_mallows_stuck(alpha, &mut rng)
                };
                values.push(noise);
            }
        }
        LevySymbol::BrownianPlusOddPiJumps { kappa, rate } => {
            for k in 1..=steps {
                if kappa > 0.0 {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    noise += (kappa * h(k)).sqrt() * g;
                }
                if rate > 0.0 {
                    let pois = Poisson::new(rate * h(k)).map_err(|e| Error::Domain(e.to_string()))?;
                    let count = pois.sample(&mut rng) as u64;
                    for _ in 0..count {
                        noise += if rng.random::<bool>() { PI } else { -PI };
                    }
                }
                values.push(noise);
            }
        }
    }
    Ok(values)
}
