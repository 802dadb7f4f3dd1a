//! Reversed radial Loewner flow and Monte Carlo moment estimation.
//!
//! The reversed flow `∂ₜf̃ = f̃(f̃+λ)/(f̃-λ)`, `f̃₀(z) = z`, is integrated
//! jointly with the logarithms `L = log(f̃/z) + t` and `D = log f̃′ + t`.
//! Both satisfy smooth equations
//!
//! ```text
//! ∂ₜL = 2f̃/(f̃-λ),    ∂ₜD = 2f̃(f̃-2λ)/(f̃-λ)²,
//! ```
//!
//! so their branches are continuous in time by construction, and
//! `e^T f̃_T(z) = z e^{L_T}`, `e^T f̃′_T(z) = e^{D_T}`.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;
use serde::Serialize;

use crate::exact_spectra::MomentExponents;
use crate::levy_driving::{graded_steps, mix64, sample_path, sample_path_on_steps, DriverPath, LevySymbol};
use crate::spiral_maps::adaptive_gk;
use crate::{Error, Result, C64};

pub const DEFAULT_GRADE: f64 = 0.0;
pub const DEFAULT_FLOOR: f64 = 1e-9;
pub const DEFAULT_SUBSTEPS: usize = 4;
pub const DEFAULT_N_THETA: usize = 256;
pub const DEFAULT_WINDOW: f64 = 0.1;
pub const MAX_DISCARD_FRACTION: f64 = 0.01;
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SimConfig {
    /// RK4 substeps per frozen driver step.
    pub substeps: usize,
    /// Abort threshold for `|f̃ - λ|`.
    pub floor: f64,
    pub interpolation: Interpolation,
}

/// Driver values between grid points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// `λ` frozen at the left grid point.
    #[default]
    Frozen,
    /// `L` linear between grid points. Ignored for paths with jumps.
    Linear,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self { substeps: DEFAULT_SUBSTEPS, floor: DEFAULT_FLOOR, interpolation: Interpolation::Frozen }
    }
}

impl SimConfig {
    pub fn linear() -> Self {
        Self { interpolation: Interpolation::Linear, ..Self::default() }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.substeps < 4 {
            return Err(Error::Domain(format!("need at least 4 substeps, got {}", self.substeps)));
        }
        if !(self.floor > 0.0) {
            return Err(Error::Domain(format!("singularity floor {}", self.floor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapSample {
    pub z: C64,
    /// `e^T f̃_T(z)`.
    pub f: C64,
    /// `e^T f̃′_T(z)`.
    pub fprime: C64,
    #[serde(rename = "T")]
    pub horizon: f64,
    /// Continuous `log(f/z)`.
    pub log_f_over_z: C64,
    /// Continuous `log f′`.
    pub log_fprime: C64,
}

impl MapSample {
    /// `|f′^p (z/f)^q| = exp Re(p log f′ - q log(f/z))`.
    pub fn integrand(&self, exps: &MomentExponents<f64>) -> f64 {
        (exps.p * self.log_fprime - exps.q * self.log_f_over_z).re.exp()
    }

    /// Same quantity for the exterior map `F(ζ) = 1/f(1/ζ)` at `ζ = 1/z`,
    /// i.e. `|F′^p (ζ/F)^q|`.
    pub fn exterior_integrand(&self, exps: &MomentExponents<f64>) -> f64 {
        let log_fp_ext = self.log_fprime - self.log_f_over_z * 2.0;
        (exps.p * log_fp_ext + exps.q * self.log_f_over_z).re.exp()
    }
}

#[derive(Clone, Copy)]
struct State {
    f: C64,
    l: C64,
    d: C64,
}

#[inline]
fn rhs(s: &State, lambda: C64, floor: f64) -> Result<State> {
    let gap = s.f - lambda;
    let n = gap.norm();
    if n < floor {
        return Err(Error::BlowUp(n));
    }
    let inv = gap.inv();
    let g = s.f * inv * 2.0;
    Ok(State { f: s.f * (s.f + lambda) * inv, l: g, d: g * (s.f - lambda * 2.0) * inv })
}

#[inline]
fn axpy(s: &State, h: f64, k: &State) -> State {
    State { f: s.f + k.f * h, l: s.l + k.l * h, d: s.d + k.d * h }
}

/// One RK4 step with driver values `l0`, `lm`, `l1` at the start, midpoint
/// and end.
fn rk4(s: State, l0: C64, lm: C64, l1: C64, h: f64, floor: f64) -> Result<State> {
    let k1 = rhs(&s, l0, floor)?;
    let k2 = rhs(&axpy(&s, h / 2.0, &k1), lm, floor)?;
    let k3 = rhs(&axpy(&s, h / 2.0, &k2), lm, floor)?;
    let k4 = rhs(&axpy(&s, h, &k3), l1, floor)?;
    let w = h / 6.0;
    Ok(State {
        f: s.f + (k1.f + (k2.f + k3.f) * 2.0 + k4.f) * w,
        l: s.l + (k1.l + (k2.l + k3.l) * 2.0 + k4.l) * w,
        d: s.d + (k1.d + (k2.d + k3.d) * 2.0 + k4.d) * w,
    })
}

/// Driver steps `(L_start, L_end, duration)` covering `[0, horizon]`.
fn schedule(driver: &DriverPath, horizon: f64) -> Result<Vec<(f64, f64, f64)>> {
    if !(horizon >= 0.0) || horizon > driver.horizon() * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("horizon {horizon} outside [0, {}]", driver.horizon())));
    }
    let mut out = Vec::new();
    let tol = 1e-12 * driver.dt.max(1.0);
    for k in 0..driver.steps() {
        let t0 = driver.time(k);
        if t0 >= horizon - tol {
            break;
        }
        let full = driver.step(k);
        let dur = full.min(horizon - t0);
        let l0 = driver.values[k];
        let l1 = l0 + (driver.values[k + 1] - l0) * (dur / full);
        out.push((l0, l1, dur));
    }
    Ok(out)
}

fn check_point(z: C64) -> Result<()> {
    if !(z.norm() < 1.0) {
        return Err(Error::Domain(format!("|z| = {} is not inside the disk", z.norm())));
    }
    Ok(())
}

fn finish(z: C64, horizon: f64, s: State) -> MapSample {
    MapSample { z, f: z * s.l.exp(), fprime: s.d.exp(), horizon, log_f_over_z: s.l, log_fprime: s.d }
}

/// `(e^T f̃_T(z), e^T f̃′_T(z))` with the default integrator settings.
pub fn evolve(driver: &DriverPath, z: C64, horizon: f64) -> Result<MapSample> {
    evolve_with(driver, z, horizon, &SimConfig::default())
}

/// RK4 with `config.substeps` substeps per driver step.
pub fn evolve_with(driver: &DriverPath, z: C64, horizon: f64, config: &SimConfig) -> Result<MapSample> {
    config.validate()?;
    check_point(z)?;
    let mut s = State { f: z, l: C64::new(0.0, 0.0), d: C64::new(0.0, 0.0) };
    let m = config.substeps;
    let cis = |x: f64| C64::from_polar(1.0, x);
    for (a, b, dur) in schedule(driver, horizon)? {
        let h = dur / m as f64;
        match config.interpolation {
            Interpolation::Frozen => {
                let lambda = cis(a);
                for _ in 0..m {
                    s = rk4(s, lambda, lambda, lambda, h, config.floor)?;
                }
            }
            Interpolation::Linear => {
                let slope = (b - a) / m as f64;
                for j in 0..m {
                    let x = a + slope * j as f64;
                    s = rk4(s, cis(x), cis(x + slope / 2.0), cis(x + slope), h, config.floor)?;
                }
            }
        }
    }
    Ok(finish(z, horizon, s))
}

/// Piecewise-constant flow, `λ` frozen at the left grid point, advanced by
/// the exact solution of each step.
///
/// For constant `λ`, `u = f̃/λ` satisfies `(u+1)²/u = e^t (u₀+1)²/u₀`.
pub fn evolve_frozen_exact(driver: &DriverPath, z: C64, horizon: f64) -> Result<MapSample> {
    check_point(z)?;
    let mut s = State { f: z, l: C64::new(0.0, 0.0), d: C64::new(0.0, 0.0) };
    if z == C64::new(0.0, 0.0) {
        return Ok(finish(z, horizon, s));
    }
    let one = C64::new(1.0, 0.0);
    for (a, _, dur) in schedule(driver, horizon)? {
        let lambda = C64::from_polar(1.0, a);
        let u0 = s.f / lambda;
        if (u0 - one).norm() < DEFAULT_FLOOR {
            return Err(Error::BlowUp((u0 - one).norm()));
        }
        let k = (u0 + one) * (u0 + one) / u0 * dur.exp();
        // u² + (2 - K)u + 1 = 0; root inside the disk, computed stably
        let b = C64::new(2.0, 0.0) - k;
        let disc = (b * b - 4.0).sqrt();
        let big = if (-b + disc).norm() > (-b - disc).norm() { (-b + disc) / 2.0 } else { (-b - disc) / 2.0 };
        let u = one / big;
        let dl = (u / u0).ln() + dur;
        let ratio = (u0 * u0 - one) * u * u / (u0 * u0 * (u * u - one));
        let dd = ratio.ln() + 2.0 * dur;
        s = State { f: u * lambda, l: s.l + dl, d: s.d + dd };
    }
    Ok(finish(z, horizon, s))
}

/// `f₀(z) = e^{iθ₀} w/(1+w)²` and its derivative, `w = e^{-iθ₀} z`, the limit
/// map for the constant driver `λ ≡ e^{iθ₀}`.
pub fn constant_driver_map(theta0: f64, z: C64) -> (C64, C64) {
    let rot = C64::from_polar(1.0, theta0);
    let w = z / rot;
    let one = C64::new(1.0, 0.0);
    let f = rot * w / ((one + w) * (one + w));
    let fp = (one - w) / ((one + w) * (one + w) * (one + w));
    (f, fp)
}

/// `10 + 5 log(1/(1 - r_max))`.
pub fn default_horizon(r_max: f64) -> f64 {
    10.0 + 5.0 * (1.0 / (1.0 - r_max)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MonteCarloSettings {
    pub n: usize,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub sim: SimConfig,
    /// Grading constant `c` of the step `min(dt, c (delta0 + t)²)` used for
    /// random drivers, with `delta0` the distance of the evaluation points to
    /// the circle. Zero, the default, keeps the uniform grid.
    pub grade: f64,
}

impl MonteCarloSettings {
    pub fn new(n: usize, horizon: f64, dt: f64, seed: u64) -> Self {
        Self { n, horizon, dt, seed, sim: SimConfig::default(), grade: DEFAULT_GRADE }
    }

    pub fn graded(mut self, c: f64) -> Self {
        self.grade = c;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Domain("need at least one sample".into()));
        }
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.dt <= self.horizon) {
            return Err(Error::Domain(format!("need 0 < dt <= T, got dt = {}, T = {}", self.dt, self.horizon)));
        }
        if !(self.grade >= 0.0) {
            return Err(Error::Domain(format!("grading constant {} is negative", self.grade)));
        }
        self.sim.validate()
    }
}

/// Welford accumulator over vectors of equal length.
#[derive(Debug, Clone)]
struct Welford {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    discarded: usize,
}

impl Welford {
    fn new(len: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; len], m2: vec![0.0; len], discarded: 0 }
    }

    fn push(&mut self, xs: &[f64]) {
        self.count += 1.0;
        for ((m, s), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(xs) {
            let d = x - *m;
            *m += d / self.count;
            *s += d * (x - *m);
        }
    }

    fn merge(&mut self, other: &Welford) {
        self.discarded += other.discarded;
        if other.count == 0.0 {
            return;
        }
        let n = self.count + other.count;
        for i in 0..self.mean.len() {
            let d = other.mean[i] - self.mean[i];
            self.mean[i] += d * other.count / n;
            self.m2[i] += other.m2[i] + d * d * self.count * other.count / n;
        }
        self.count = n;
    }

    fn stderr(&self, i: usize) -> f64 {
        if self.count < 2.0 {
            return 0.0;
        }
        (self.m2[i] / (self.count - 1.0) / self.count).sqrt()
    }
}

/// Runs `eval` on each driver sample and reduces over fixed chunks in index
/// order, so the result does not depend on the number of worker threads.
fn run_samples<F>(symbol: &LevySymbol, settings: &MonteCarloSettings, delta0: f64, len: usize, eval: F) -> Result<Welford>
where
    F: Fn(&DriverPath, &SimConfig) -> Result<Vec<f64>> + Sync,
{
    symbol.validate()?;
    settings.validate()?;
    let steps = if settings.grade > 0.0 && !symbol.is_deterministic() {
        let s = graded_steps(settings.horizon, settings.dt, delta0.max(1e-12), settings.grade)?;
        if s.iter().all(|&h| h == settings.dt) { None } else { Some(s) }
    } else {
        None
    };
    let sim = if symbol.has_jumps() { SimConfig { interpolation: Interpolation::Frozen, ..settings.sim } } else { settings.sim };
    let sample = |seed: u64| match &steps {
        Some(s) => sample_path_on_steps(symbol, s, seed),
        None => sample_path(symbol, settings.horizon, settings.dt, seed),
    };
    let chunks: Vec<usize> = (0..settings.n.div_ceil(CHUNK)).collect();
    let partial: Vec<Result<Welford>> = chunks
        .par_iter()
        .map(|&c| {
            let mut acc = Welford::new(len);
            for i in c * CHUNK..((c + 1) * CHUNK).min(settings.n) {
                let path = sample(mix64(settings.seed, i as u64))?;
                match eval(&path, &sim) {
                    Ok(v) => acc.push(&v),
                    Err(Error::BlowUp(_)) => acc.discarded += 1,
                    Err(e) => return Err(e),
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = Welford::new(len);
    for p in partial {
        total.merge(&p?);
    }
    if total.discarded as f64 > MAX_DISCARD_FRACTION * settings.n as f64 {
        return Err(Error::Quality(format!("{} of {} samples hit the singularity floor", total.discarded, settings.n)));
    }
    if total.count == 0.0 {
        return Err(Error::Quality("every sample was discarded".into()));
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PointEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_used: usize,
    pub discarded: usize,
}

/// Mean and standard error of `|f′(z)^p (z/f(z))^q|` over driver samples.
pub fn estimate_moment_pointwise(
    symbol: &LevySymbol,
    exps: &MomentExponents<f64>,
    z: C64,
    settings: &MonteCarloSettings,
) -> Result<PointEstimate> {
    check_point(z)?;
    let acc = run_samples(symbol, settings, 1.0 - z.norm(), 1, |path, sim| {
        Ok(vec![evolve_with(path, z, settings.horizon, sim)?.integrand(exps)])
    })?;
    Ok(PointEstimate { mean: acc.mean[0], stderr: acc.stderr(0), n_used: acc.count as usize, discarded: acc.discarded })
}

/// Quadrature over the circle `|z| = r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule")]
pub enum AngularRule {
    /// Uniform trapezoid rule with `n` angles.
    Trapezoid { n: usize },
    /// Adaptive Gauss-Kronrod per sample, for drivers whose integrand is not
    /// smoothed by averaging (deterministic drivers).
    Adaptive { rel_tol: f64, max_panels: usize },
}

impl Default for AngularRule {
    fn default() -> Self {
        AngularRule::Trapezoid { n: DEFAULT_N_THETA }
    }
}

impl AngularRule {
    fn validate(&self) -> Result<()> {
        match *self {
            AngularRule::Trapezoid { n } if n == 0 => Err(Error::Domain("need at least one angle".into())),
            AngularRule::Adaptive { rel_tol, max_panels } if !(rel_tol > 0.0) || max_panels < 16 => {
                Err(Error::Domain(format!("adaptive rule needs rel_tol > 0 and max_panels >= 16, got {rel_tol}, {max_panels}")))
            }
            _ => Ok(()),
        }
    }

    fn integrate<F: Fn(f64) -> Result<f64>>(&self, f: F) -> Result<f64> {
        let tau = std::f64::consts::TAU;
        match *self {
            AngularRule::Trapezoid { n } => {
                let w = tau / n as f64;
                let mut sum = 0.0;
                for j in 0..n {
                    sum += f(w * j as f64)?;
                }
                Ok(sum * w)
            }
            AngularRule::Adaptive { rel_tol, max_panels } => {
                let breaks: Vec<f64> = (0..=16).map(|j| tau * j as f64 / 16.0).collect();
                adaptive_gk(f, &breaks, rel_tol, max_panels)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub symbol: LevySymbol,
    pub p: C64,
    pub q: C64,
    pub r_grid: Vec<f64>,
    #[serde(rename = "M_hat")]
    pub m_hat: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_samples: usize,
    pub discarded: usize,
    pub angular: AngularRule,
    pub seed: u64,
    pub dt: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
}

impl MomentEstimate {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let io = |e: csv::Error| Error::Quality(e.to_string());
        w.write_record(["r", "M_hat", "stderr"]).map_err(io)?;
        for i in 0..self.r_grid.len() {
            w.write_record([self.r_grid[i].to_string(), self.m_hat[i].to_string(), self.stderr[i].to_string()])
                .map_err(io)?;
        }
        w.flush().map_err(|e| Error::Quality(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("estimate serializes")
    }
}

/// Estimate of `∫ E|f′^p (z/f)^q| dθ` on each circle `|z| = r`.
pub fn estimate_integral_means(
    symbol: &LevySymbol,
    exps: &MomentExponents<f64>,
    r_grid: &[f64],
    angular: AngularRule,
    settings: &MonteCarloSettings,
) -> Result<MomentEstimate> {
    if r_grid.is_empty() || r_grid.windows(2).any(|w| !(w[0] < w[1])) || !(r_grid[0] > 0.0) || !(r_grid[r_grid.len() - 1] < 1.0) {
        return Err(Error::Domain("radii must be strictly increasing in (0, 1)".into()));
    }
    angular.validate()?;
    let acc = run_samples(symbol, settings, 1.0 - r_grid[r_grid.len() - 1], r_grid.len(), |path, sim| {
        r_grid
            .iter()
            .map(|&r| {
                angular.integrate(|th| Ok(evolve_with(path, polar(r, th), settings.horizon, sim)?.integrand(exps)))
            })
            .collect()
    })?;
    let m_hat = acc.mean.clone();
    if m_hat.iter().any(|&m| !(m > 0.0) || !m.is_finite()) {
        return Err(Error::Quality("non-positive integral mean".into()));
    }
    Ok(MomentEstimate {
        symbol: *symbol,
        p: exps.p,
        q: exps.q,
        r_grid: r_grid.to_vec(),
        m_hat,
        stderr: (0..r_grid.len()).map(|i| acc.stderr(i)).collect(),
        n_samples: acc.count as usize,
        discarded: acc.discarded,
        angular,
        seed: settings.seed,
        dt: settings.dt,
        horizon: settings.horizon,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaFitSettings {
    pub angular: AngularRule,
    /// Only radii with `1 - r <= window` enter the fit.
    pub window: f64,
    /// Largest admissible relative standard error per radius.
    pub max_rel_stderr: f64,
}

impl Default for BetaFitSettings {
    fn default() -> Self {
        Self { angular: AngularRule::default(), window: DEFAULT_WINDOW, max_rel_stderr: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaEstimate {
    pub beta_hat: f64,
    pub ci: (f64, f64),
    pub slope_stderr: f64,
    pub fit_points: usize,
    pub estimate: MomentEstimate,
}

/// Least-squares slope and its standard error.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    if xs.len() < 3 {
        return (slope, 0.0);
    }
    let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
    (slope, (rss / (n - 2.0) / sxx).sqrt())
}

/// Slope of `log M̂(r)` against `log 1/(1-r)` with a 95% interval.
pub fn estimate_beta(
    symbol: &LevySymbol,
    exps: &MomentExponents<f64>,
    r_grid: &[f64],
    settings: &MonteCarloSettings,
    fit: &BetaFitSettings,
) -> Result<BetaEstimate> {
    if r_grid.len() < 4 {
        return Err(Error::Domain(format!("need at least 4 radii, got {}", r_grid.len())));
    }
    let estimate = estimate_integral_means(symbol, exps, r_grid, fit.angular, settings)?;
    for (i, (&m, &s)) in estimate.m_hat.iter().zip(&estimate.stderr).enumerate() {
        if s / m > fit.max_rel_stderr {
            return Err(Error::Quality(format!("relative stderr {} at r = {}", s / m, estimate.r_grid[i])));
        }
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = estimate
        .r_grid
        .iter()
        .zip(&estimate.m_hat)
        .filter(|(&r, _)| 1.0 - r <= fit.window + 1e-12)
        .map(|(&r, &m)| (-(1.0 - r).ln(), m.ln()))
        .unzip();
    if xs.len() < 2 {
        return Err(Error::Domain(format!("fewer than two radii with 1 - r <= {}", fit.window)));
    }
    let (beta_hat, se) = ols_slope(&xs, &ys);
    // noise of the end points propagated through the slope
    let spread = xs[xs.len() - 1] - xs[0];
    let rel = |i: usize| estimate.stderr[i] / estimate.m_hat[i];
    let used: Vec<usize> = (0..estimate.r_grid.len()).filter(|&i| 1.0 - estimate.r_grid[i] <= fit.window + 1e-12).collect();
    let mc = (rel(used[0]).powi(2) + rel(used[used.len() - 1]).powi(2)).sqrt() / spread;
    let half = 1.96 * (se * se + mc * mc).sqrt();
    Ok(BetaEstimate { beta_hat, ci: (beta_hat - half, beta_hat + half), slope_stderr: se, fit_points: xs.len(), estimate })
}

/// `Complex` helper for tests and callers building probe points.
pub fn polar(r: f64, theta: f64) -> C64 {
    Complex::from_polar(r, theta)
}
