//! Command-line front end.
//!
//! Every artifact starts with a metadata block (`#` lines for CSV, a `meta`
//! object for JSON, an XML comment for SVG) holding the tool version and the
//! full parameter set. Thread counts are never recorded, so output is
//! identical for any `--threads`.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::BigRational;
use serde::Serialize;
use serde_json::{json, Value};

use crate::exact_spectra::{generalized_spectrum, phase_diagram, red_parabola, MomentExponents, SleParams};
use crate::levy_driving::{sample_path, symbol_for_pair, LevySymbol};
use crate::lle_fuchsian::{
    beta_4mq, build_recursion_mq, falsify_alternative_condition, fuchsian_classification, parse_rational,
    solve_4mq, verify_closure_on_ellipse, LleReport,
};
use crate::loewner_sim::{
    default_horizon, estimate_beta, estimate_moment_pointwise, AngularRule, BetaFitSettings, MonteCarloSettings, SimConfig,
    DEFAULT_N_THETA, DEFAULT_WINDOW,
};
use crate::pde_verify::{default_grid, residual_grid, CandidateG, PdeReport};
use crate::spiral_maps::{fitted_slope, spiral_integral_means, spiral_spectrum_complete};
use crate::{Error, C64};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 2;
pub const EXIT_QUALITY: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const THREADS_ENV: &str = "LOEWNER_THREADS";

#[derive(Debug, Parser)]
#[command(name = "loewner", version, about = "Loewner evolutions driven by Lévy processes")]
pub struct Cli {
    /// Worker thread cap (overrides LOEWNER_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output file; stdout when absent.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactCase {
    Sle,
    Spiral,
    Lle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum LleCase {
    #[value(name = "4mq")]
    #[serde(rename = "4mq")]
    FourMinusQ,
    Mq,
    Closure,
    Falsify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SymbolKind {
    Brownian,
    Stable,
    Jumps,
    Pair,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SymbolArgs {
    #[arg(long, value_enum, default_value = "brownian")]
    pub symbol: SymbolKind,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    pub kappa: f64,
    /// Drift of the Brownian driver.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a: f64,
    /// Stability index for `--symbol stable`.
    #[arg(long, default_value_t = 1.5)]
    pub stability: f64,
    /// Jump intensity for `--symbol jumps`.
    #[arg(long, default_value_t = 0.0)]
    pub rate: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub eta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta2: Option<f64>,
}

impl SymbolArgs {
    fn symbol(&self) -> Result<LevySymbol, Error> {
        let s = match self.symbol {
            SymbolKind::Brownian => LevySymbol::DriftedBrownian { kappa: self.kappa, a: self.a },
            SymbolKind::Stable => LevySymbol::SymmetricStable { alpha: self.stability },
            SymbolKind::Jumps => LevySymbol::BrownianPlusOddPiJumps { kappa: self.kappa, rate: self.rate },
            SymbolKind::Pair => {
                let (Some(e1), Some(e2)) = (self.eta1, self.eta2) else {
                    return Err(Error::Domain("--symbol pair needs --eta1 and --eta2".into()));
                };
                symbol_for_pair(e1, e2)?
            }
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExponentArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub p: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub q: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub p_im: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub q_im: f64,
}

impl ExponentArgs {
    fn exps(&self) -> MomentExponents<f64> {
        MomentExponents::new(C64::new(self.p, self.p_im), C64::new(self.q, self.q_im))
    }

    fn is_real(&self) -> bool {
        self.p_im == 0.0 && self.q_im == 0.0
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct McArgs {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    /// Horizon; defaults to 10 + 5 log(1/(1 - r_max)).
    #[arg(long = "T")]
    #[serde(rename = "T")]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 1e-2)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Interpolate the driver linearly within each step instead of freezing it.
    #[arg(long)]
    pub linear: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExactBetaArgs {
    #[command(flatten)]
    pub exps: ExponentArgs,
    #[arg(long, value_enum, default_value = "sle")]
    pub case: ExactCase,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub eta1: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub eta2: Option<f64>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EstimateBetaArgs {
    #[command(flatten)]
    pub symbol: SymbolArgs,
    #[command(flatten)]
    pub exps: ExponentArgs,
    #[command(flatten)]
    pub mc: McArgs,
    /// Comma-separated radii.
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.93,0.96,0.98,0.99")]
    pub radii: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_N_THETA)]
    pub n_theta: usize,
    /// Use adaptive angular quadrature with this relative tolerance instead
    /// of the trapezoid rule.
    #[arg(long)]
    pub adaptive_tol: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_WINDOW)]
    pub window: f64,
    #[arg(long, default_value_t = 0.2)]
    pub max_rel_stderr: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct MomentArgs {
    #[command(flatten)]
    pub symbol: SymbolArgs,
    #[command(flatten)]
    pub exps: ExponentArgs,
    #[command(flatten)]
    pub mc: McArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub z_re: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub z_im: f64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PhaseDiagramArgs {
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub drift: f64,
    #[arg(long, default_value_t = -6.0, allow_hyphen_values = true)]
    pub p_min: f64,
    #[arg(long, default_value_t = 6.0, allow_hyphen_values = true)]
    pub p_max: f64,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyPdeArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha_re: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub alpha_im: f64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub a: f64,
    /// Grid side length.
    #[arg(long, default_value_t = 10)]
    pub grid: usize,
    #[arg(long, default_value_t = 0.9)]
    pub r_max: f64,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VerifyLleArgs {
    #[arg(long, value_enum)]
    pub case: LleCase,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    /// Rational, e.g. `-2/5`.
    #[arg(long, allow_hyphen_values = true)]
    pub q: String,
    /// Rational; not used by `--case falsify`.
    #[arg(long, allow_hyphen_values = true)]
    pub eta1: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpiralMeansArgs {
    #[command(flatten)]
    pub exps: ExponentArgs,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub a: f64,
    #[arg(long, value_delimiter = ',', default_value = "0.9,0.95,0.98,0.99,0.995,0.999")]
    pub radii: Vec<f64>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SampleDriverArgs {
    #[command(flatten)]
    pub symbol: SymbolArgs,
    #[arg(long = "T", default_value_t = 1.0)]
    #[serde(rename = "T")]
    pub horizon: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Closed-form spectrum at a point.
    ExactBeta(ExactBetaArgs),
    /// Monte Carlo integral means and fitted spectrum.
    EstimateBeta(EstimateBetaArgs),
    /// Monte Carlo one-point function.
    Moment(MomentArgs),
    /// Phase-diagram separatrices.
    PhaseDiagram(PhaseDiagramArgs),
    /// Residual of the two-point equation on the product-form solution.
    VerifyPde(VerifyPdeArgs),
    /// Exact recursions for the Lévy-Loewner Fourier system.
    VerifyLle(VerifyLleArgs),
    /// Integral means of the logarithmic spiral map.
    SpiralMeans(SpiralMeansArgs),
    /// One sampled driving path.
    SampleDriver(SampleDriverArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ExactBeta(_) => "exact-beta",
            Command::EstimateBeta(_) => "estimate-beta",
            Command::Moment(_) => "moment",
            Command::PhaseDiagram(_) => "phase-diagram",
            Command::VerifyPde(_) => "verify-pde",
            Command::VerifyLle(_) => "verify-lle",
            Command::SpiralMeans(_) => "spiral-means",
            Command::SampleDriver(_) => "sample-driver",
        }
    }
}

/// Result of a subcommand: the artifact and whether its verification passed.
struct Artifact {
    body: Vec<u8>,
    passed: bool,
}

impl Artifact {
    fn ok(body: Vec<u8>) -> Self {
        Self { body, passed: true }
    }
}

fn meta(cmd: &Command) -> Value {
    json!({
        "tool": "loewner",
        "version": env!("CARGO_PKG_VERSION"),
        "command": cmd.name(),
        "parameters": serde_json::to_value(cmd).expect("arguments serialize"),
    })
}

fn csv_header(cmd: &Command, extra: &[(&str, String)]) -> Vec<u8> {
    let mut out = format!("# loewner {}\n# command: {}\n", env!("CARGO_PKG_VERSION"), cmd.name());
    let params = serde_json::to_value(cmd).expect("arguments serialize");
    out.push_str(&format!("# parameters: {params}\n"));
    for (k, v) in extra {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.into_bytes()
}

fn json_doc(cmd: &Command, result: Value) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(&json!({ "meta": meta(cmd), "result": result })).expect("json");
    s.push('\n');
    s.into_bytes()
}

fn to_value<S: Serialize>(s: &S) -> Value {
    serde_json::to_value(s).expect("result serializes")
}

fn rational_arg(s: &str, name: &str) -> Result<BigRational, Error> {
    parse_rational(s).map_err(|_| Error::Domain(format!("--{name}: cannot parse {s:?} as a rational")))
}

fn exact_beta(cmd: &Command, args: &ExactBetaArgs) -> Result<Artifact, Error> {
    let exps = args.exps.exps();
    let (beta, detail) = match args.case {
        ExactCase::Sle => {
            if !args.exps.is_real() {
                return Err(Error::Domain("--case sle takes real exponents".into()));
            }
            let params = SleParams::new(args.kappa, args.a)?;
            let s = generalized_spectrum(args.exps.p, args.exps.q, &params)?;
            (s.beta, to_value(&s))
        }
        ExactCase::Spiral => {
            let s = spiral_spectrum_complete(&exps, args.a);
            (s.beta, to_value(&s))
        }
        ExactCase::Lle => {
            let (Some(eta1), Some(eta2)) = (args.eta1, args.eta2) else {
                return Err(Error::Domain("--case lle needs --eta1 and --eta2".into()));
            };
            if !args.exps.is_real() || args.exps.p != 2.0 {
                return Err(Error::Domain("exact LLE spectra are available for p = 2 only".into()));
            }
            let q = args.exps.q;
            let tol = 1e-12 * (1.0 + q.abs());
            if (eta2 - (4.0 - q)).abs() <= tol {
                let b = beta_4mq(q, eta1)?;
                (b, json!({ "family": "eta2 = 4 - q", "beta": b }))
            } else if (eta2 + q).abs() <= tol {
                let f = fuchsian_classification(q, eta1)?;
                (f.beta, json!({ "family": "eta2 = -q", "fuchsian": to_value(&f) }))
            } else {
                return Err(Error::Domain(format!("no closed form for eta2 = {eta2} at q = {q}")));
            }
        }
    };
    let body = match args.format {
        Format::Json => json_doc(cmd, json!({ "beta": beta, "detail": detail })),
        Format::Csv => {
            let mut b = csv_header(cmd, &[]);
            b.extend_from_slice(format!("beta\n{beta}\n").as_bytes());
            b
        }
        Format::Svg => return Err(Error::Domain("svg output is available for phase-diagram only".into())),
    };
    Ok(Artifact::ok(body))
}

fn mc_settings(mc: &McArgs, r_max: f64) -> MonteCarloSettings {
    let mut s = MonteCarloSettings::new(mc.n, mc.horizon.unwrap_or_else(|| default_horizon(r_max)), mc.dt, mc.seed);
    if mc.linear {
        s.sim = SimConfig::linear();
    }
    s
}

fn mc_extra(s: &MonteCarloSettings) -> Vec<(&'static str, String)> {
    vec![("seed", s.seed.to_string()), ("dt", s.dt.to_string()), ("T", s.horizon.to_string()), ("n", s.n.to_string())]
}

fn estimate_beta_cmd(cmd: &Command, args: &EstimateBetaArgs) -> Result<Artifact, Error> {
    let symbol = args.symbol.symbol()?;
    let r_max = args.radii.iter().cloned().fold(0.0, f64::max);
    let settings = mc_settings(&args.mc, r_max);
    let angular = match args.adaptive_tol {
        Some(rel_tol) => AngularRule::Adaptive { rel_tol, max_panels: 4096 },
        None => AngularRule::Trapezoid { n: args.n_theta },
    };
    let fit = BetaFitSettings { angular, window: args.window, max_rel_stderr: args.max_rel_stderr };
    let b = estimate_beta(&symbol, &args.exps.exps(), &args.radii, &settings, &fit)?;
    let body = match args.format {
        Format::Json => json_doc(cmd, to_value(&b)),
        Format::Csv => {
            let mut extra = mc_extra(&settings);
            extra.push(("beta_hat", b.beta_hat.to_string()));
            extra.push(("ci", format!("[{}, {}]", b.ci.0, b.ci.1)));
            extra.push(("discarded", b.estimate.discarded.to_string()));
            let mut out = csv_header(cmd, &extra);
            b.estimate.write_csv(&mut out)?;
            out
        }
        Format::Svg => return Err(Error::Domain("svg output is available for phase-diagram only".into())),
    };
    Ok(Artifact::ok(body))
}

fn moment_cmd(cmd: &Command, args: &MomentArgs) -> Result<Artifact, Error> {
    let symbol = args.symbol.symbol()?;
    let z = C64::new(args.z_re, args.z_im);
    let settings = mc_settings(&args.mc, z.norm());
    let e = estimate_moment_pointwise(&symbol, &args.exps.exps(), z, &settings)?;
    let body = match args.format {
        Format::Json => json_doc(cmd, to_value(&e)),
        Format::Csv => {
            let mut out = csv_header(cmd, &mc_extra(&settings));
            out.extend_from_slice(
                format!("z_re,z_im,mean,stderr,n_used,discarded\n{},{},{},{},{},{}\n", z.re, z.im, e.mean, e.stderr, e.n_used, e.discarded)
                    .as_bytes(),
            );
            out
        }
        Format::Svg => return Err(Error::Domain("svg output is available for phase-diagram only".into())),
    };
    Ok(Artifact::ok(body))
}

fn phase_diagram_cmd(cmd: &Command, args: &PhaseDiagramArgs) -> Result<Artifact, Error> {
    let params = SleParams::new(args.kappa, args.drift)?;
    let d = phase_diagram(&params, (args.p_min, args.p_max), args.resolution)?;
    let body = match args.format {
        Format::Json => json_doc(cmd, to_value(&d)),
        Format::Csv => {
            let mut out = csv_header(cmd, &[]);
            d.write_csv(&mut out)?;
            out
        }
        Format::Svg => {
            let svg = d.to_svg();
            let comment = format!("<!-- {} -->\n", serde_json::to_string(&meta(cmd)).expect("json").replace("--", "- -"));
            // the XML declaration, if any, must stay first
            match svg.strip_prefix("<?xml") {
                Some(rest) => {
                    let end = rest.find("?>").map(|i| i + 2).unwrap_or(0);
                    format!("<?xml{}\n{}{}", &rest[..end], comment, rest[end..].trim_start()).into_bytes()
                }
                None => format!("{comment}{svg}").into_bytes(),
            }
        }
    };
    Ok(Artifact::ok(body))
}

fn verify_pde_cmd(cmd: &Command, args: &VerifyPdeArgs) -> Result<Artifact, Error> {
    let alpha = C64::new(args.alpha_re, args.alpha_im);
    let params = SleParams::new(args.kappa, args.a)?;
    let exps = red_parabola(alpha, &params)?.exps;
    let cand = CandidateG::new(alpha, args.kappa, args.a)?;
    if args.grid == 0 || !(args.r_max > 0.0 && args.r_max < 1.0) {
        return Err(Error::Domain("need --grid >= 1 and 0 < --r-max < 1".into()));
    }
    let pts = default_grid(args.grid, args.r_max);
    let report = PdeReport::new(&cand, &exps, residual_grid(&cand, &exps, &params, &pts)?);
    let passed = report.max_relative <= args.tol;
    Ok(Artifact { body: json_doc(cmd, json!({ "passed": passed, "report": to_value(&report) })), passed })
}

fn verify_lle_cmd(cmd: &Command, args: &VerifyLleArgs) -> Result<Artifact, Error> {
    let q = rational_arg(&args.q, "q")?;
    let eta1 = || -> Result<BigRational, Error> {
        let s = args.eta1.as_deref().ok_or_else(|| Error::Domain("--eta1 is required for this case".into()))?;
        rational_arg(s, "eta1")
    };
    let (result, passed) = match args.case {
        LleCase::FourMinusQ => {
            let e = eta1()?;
            let (qf, ef) = (rat_f64(&q), rat_f64(&e));
            let s = solve_4mq(qf, ef)?;
            let v = json!({
                "case": "4mq",
                "point": [q.to_string(), e.to_string()],
                "z": s.z, "a": s.a, "b": s.b, "c": s.c,
                "delta_prime": s.delta_prime, "delta": s.delta,
                "beta": s.beta, "constant": s.constant, "f0_degree": s.f0_degree,
            });
            (v, true)
        }
        LleCase::Mq => {
            let state = build_recursion_mq(&q, &eta1()?, args.n)?;
            let consistent = state.is_consistent();
            let mut v = to_value(&LleReport::from_recursion(&state));
            v["consistent"] = json!(consistent);
            (v, consistent)
        }
        LleCase::Closure => {
            let verdict = verify_closure_on_ellipse(args.n, &q, &eta1()?)?;
            let mut v = to_value(&LleReport::from_closure(&verdict));
            v["a2n_zero"] = json!(verdict.a2n_zero);
            v["bracket_zero"] = json!(verdict.bracket_zero);
            v["closure_vector_zero"] = json!(verdict.closure_vector_zero);
            (v, verdict.closed)
        }
        LleCase::Falsify => {
            let w = falsify_alternative_condition(args.n, &q)?;
            let mut v = to_value(&LleReport::from_witness(&w));
            v["eta1"] = json!(w.eta1.to_string());
            v["eq8_bracket_zero"] = json!(w.eq8_bracket_zero);
            v["no_further_solution"] = json!(w.no_further_solution);
            (v, w.no_further_solution)
        }
    };
    Ok(Artifact { body: json_doc(cmd, result), passed })
}

fn rat_f64(r: &BigRational) -> f64 {
    use num_traits::ToPrimitive;
    r.to_f64().unwrap_or(f64::NAN)
}

fn spiral_means_cmd(cmd: &Command, args: &SpiralMeansArgs) -> Result<Artifact, Error> {
    let exps = args.exps.exps();
    if args.radii.len() < 2 {
        return Err(Error::Domain("need at least two radii".into()));
    }
    let values: Vec<f64> = args.radii.iter().map(|&r| spiral_integral_means(&exps, args.a, r)).collect::<Result<_, _>>()?;
    let slope = fitted_slope(&exps, args.a, &args.radii)?;
    let exact = spiral_spectrum_complete(&exps, args.a);
    let body = match args.format {
        Format::Json => json_doc(
            cmd,
            json!({ "r": args.radii, "I": values, "fitted_slope": slope, "exact": to_value(&exact) }),
        ),
        Format::Csv => {
            let extra = [("fitted_slope", slope.to_string()), ("beta_exact", exact.beta.to_string())];
            let mut out = csv_header(cmd, &extra);
            out.extend_from_slice(b"r,I\n");
            for (r, v) in args.radii.iter().zip(&values) {
                out.extend_from_slice(format!("{r},{v}\n").as_bytes());
            }
            out
        }
        Format::Svg => return Err(Error::Domain("svg output is available for phase-diagram only".into())),
    };
    Ok(Artifact::ok(body))
}

fn sample_driver_cmd(cmd: &Command, args: &SampleDriverArgs) -> Result<Artifact, Error> {
    let symbol = args.symbol.symbol()?;
    let path = sample_path(&symbol, args.horizon, args.dt, args.seed)?;
    let extra = [
        ("seed", args.seed.to_string()),
        ("dt", args.dt.to_string()),
        ("T", args.horizon.to_string()),
        ("n", "1".to_string()),
    ];
    let mut out = csv_header(cmd, &extra);
    path.write_csv(&mut out)?;
    Ok(Artifact::ok(out))
}

fn dispatch(cmd: &Command) -> Result<Artifact, Error> {
    match cmd {
        Command::ExactBeta(a) => exact_beta(cmd, a),
        Command::EstimateBeta(a) => estimate_beta_cmd(cmd, a),
        Command::Moment(a) => moment_cmd(cmd, a),
        Command::PhaseDiagram(a) => phase_diagram_cmd(cmd, a),
        Command::VerifyPde(a) => verify_pde_cmd(cmd, a),
        Command::VerifyLle(a) => verify_lle_cmd(cmd, a),
        Command::SpiralMeans(a) => spiral_means_cmd(cmd, a),
        Command::SampleDriver(a) => sample_driver_cmd(cmd, a),
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Domain(_) | Error::Pole(_) | Error::Margin(_) | Error::Bracket(_) | Error::Singular { .. } => EXIT_DOMAIN,
        Error::Divergence(_)
        | Error::NonConvergence(_)
        | Error::BlowUp(_)
        | Error::Quality(_)
        | Error::Quadrature(_) => EXIT_QUALITY,
    }
}

fn thread_cap(flag: Option<usize>) -> Result<Option<usize>, String> {
    if let Some(n) = flag {
        return Ok(Some(n));
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| format!("{THREADS_ENV}={v:?} is not a thread count")),
        Err(_) => Ok(None),
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the exit code. Diagnostics go to `err`, artifacts to `out` unless
/// `--output` names a file.
pub fn run_with<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    let threads = match thread_cap(cli.threads) {
        Ok(t) => t,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_USAGE;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        if n == 0 {
            let _ = writeln!(err, "error: --threads must be positive");
            return EXIT_USAGE;
        }
        builder = builder.num_threads(n);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_QUALITY;
        }
    };
    let artifact = match pool.install(|| dispatch(&cli.command)) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return exit_code(&e);
        }
    };
    let written = match &cli.output {
        Some(path) => File::create(path).and_then(|mut f| f.write_all(&artifact.body)),
        None => out.write_all(&artifact.body),
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: cannot write output: {e}");
        return EXIT_DOMAIN;
    }
    if artifact.passed {
        EXIT_OK
    } else {
        let _ = writeln!(err, "verification failed");
        EXIT_QUALITY
    }
}

/// Entry point used by the binary.
pub fn run() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
