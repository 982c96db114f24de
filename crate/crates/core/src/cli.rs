//! Batch driver behind the `bates-hybrid` binary.
//!
//! A run is described by a TOML file:
//!
//! ```toml
//! [model]            # every ModelParams field; s0 is replaced by each spot
//! s0 = 100.0
//! v0 = 0.04
//! # ...
//!
//! [option]
//! strike = 100.0
//! maturity = 0.5
//! exercise = "european"   # or "american"
//! payoff = "call"         # or "put"
//! spots = [80.0, 90.0, 100.0, 110.0, 120.0]
//!
//! [[method]]              # one block per run entry
//! kind = "htfd"           # htfd | mc | ls | cf
//! label = "HTFDa"         # optional, defaults to the kind
//! n_steps = 50
//! dy = [0.01, 0.005]      # htfd only
//!
//! [[method]]
//! kind = "mc"
//! n_steps = 100
//! paths = [10000, 50000]  # mc and ls
//! seed = 7                # optional, default 1
//! exercise_dates = 20     # ls only
//!
//! [output]
//! csv = "table.csv"       # optional; CSV goes to stdout otherwise
//! verbosity = "summary"   # or "quiet"
//! ```
//!
//! A `[smile]` block drives the `smile` command instead of `[[method]]`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::analytics::{implied_vol, price_cf_bates, CfQuadratureConfig};
use crate::error::{PricingError, Result};
use crate::htfd::{Boundary, HtfdConfig, HtfdEngine, HtfdMode, ShiftInterpolation};
use crate::mc::{price_american_ls, price_european_mc, McConfig};
use crate::model::{Exercise, ModelParams, OptionSpec, Payoff};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodKind {
    Htfd,
    Mc,
    Ls,
    Cf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSetting {
    Bates,
    BatesHullWhite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationSetting {
    Linear,
    Cubic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundarySetting {
    Payoff,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verbosity {
    Quiet,
    #[default]
    Summary,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionBlock {
    pub strike: f64,
    pub maturity: f64,
    pub exercise: Exercise,
    #[serde(default = "default_payoff")]
    pub payoff: Payoff,
    pub spots: Vec<f64>,
}

fn default_payoff() -> Payoff {
    Payoff::Call
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodBlock {
    pub kind: MethodKind,
    pub label: Option<String>,
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub dy: Vec<f64>,
    #[serde(default)]
    pub paths: Vec<usize>,
    pub seed: Option<u64>,
    pub exercise_dates: Option<usize>,
    pub basis_degree: Option<usize>,
    /// Defaults to `bates-hull-white` when `sigma_r > 0`, `bates` otherwise.
    pub mode: Option<ModeSetting>,
    pub interpolation: Option<InterpolationSetting>,
    pub boundary: Option<BoundarySetting>,
    pub discount_threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub verbosity: Verbosity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmileAxis {
    Moneyness,
    Maturity,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmileBlock {
    pub axis: SmileAxis,
    /// Explicit grid values.
    #[serde(default)]
    pub values: Vec<f64>,
    /// `[from, to, step]`, used when `values` is empty.
    pub range: Option<[f64; 3]>,
    pub htfd_steps: usize,
    pub htfd_dy: f64,
    pub mc_steps: usize,
    pub mc_paths: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelParams,
    pub option: OptionBlock,
    #[serde(default)]
    pub method: Vec<MethodBlock>,
    #[serde(default)]
    pub output: OutputBlock,
    pub smile: Option<SmileBlock>,
}

/// The discretization of one job.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discretization {
    Htfd { n_steps: usize, dy: f64 },
    Mc { n_steps: usize, paths: usize },
    Cf,
}

/// One CSV row to compute.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub spot: f64,
    pub method: String,
    pub entry: usize,
    pub discretization: Discretization,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PriceRow {
    pub spot: f64,
    pub method: String,
    #[serde(rename = "N_t")]
    pub n_steps: Option<usize>,
    pub dy_or_paths: Option<f64>,
    pub price: f64,
    pub ci_halfwidth: Option<f64>,
    pub wall_time_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmileRow {
    pub moneyness_or_maturity: f64,
    pub iv_htfd: Option<f64>,
    pub iv_mc: Option<f64>,
    pub iv_cf: Option<f64>,
}

fn cfg_err(field: impl Into<String>, reason: impl Into<String>) -> PricingError {
    PricingError::config(field, reason)
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let mut field = String::from("config");
            if let Some(span) = e.span() {
                let line = text[..span.start].lines().count().max(1);
                field = format!("line {line}");
            }
            cfg_err(field, e.message().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| PricingError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Checks everything that does not need a pricing run.
    pub fn validate(&self) -> Result<()> {
        let o = &self.option;
        if o.spots.is_empty() {
            return Err(cfg_err("option.spots", "must not be empty"));
        }
        if let Some(s) = o.spots.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(cfg_err("option.spots", format!("spot {s} must be > 0")));
        }
        self.spec()?;
        self.model.with_spot(o.spots[0]).validate().map_err(|e| match e {
            PricingError::Domain { field, reason } => cfg_err(format!("model.{field}"), reason),
            other => other,
        })?;
        for (i, m) in self.method.iter().enumerate() {
            let at = |f: &str| format!("method[{i}].{f}");
            match m.kind {
                MethodKind::Htfd => {
                    if m.dy.is_empty() {
                        return Err(cfg_err(at("dy"), "htfd needs at least one dy"));
                    }
                    if m.dy.iter().any(|d| !(*d > 0.0)) {
                        return Err(cfg_err(at("dy"), "must be > 0"));
                    }
                    if m.n_steps.unwrap_or(0) == 0 {
                        return Err(cfg_err(at("n_steps"), "must be >= 1"));
                    }
                }
                MethodKind::Mc | MethodKind::Ls => {
                    if m.paths.is_empty() {
                        return Err(cfg_err(at("paths"), "needs at least one path count"));
                    }
                    let n_steps = m.n_steps.ok_or_else(|| cfg_err(at("n_steps"), "required"))?;
                    for &paths in &m.paths {
                        self.mc_config(m, n_steps, paths, None)
                            .validate()
                            .map_err(|e| match e {
                                PricingError::Config { field, reason } => cfg_err(at(&field), reason),
                                other => other,
                            })?;
                    }
                    let expected = if m.kind == MethodKind::Mc { Exercise::European } else { Exercise::American };
                    if o.exercise != expected {
                        return Err(cfg_err(
                            at("kind"),
                            format!("{:?} needs {expected:?} exercise", m.kind),
                        ));
                    }
                }
                MethodKind::Cf => {
                    if o.exercise != Exercise::European || o.payoff != Payoff::Call {
                        return Err(cfg_err(at("kind"), "cf prices European calls only"));
                    }
                    if self.model.sigma_r != 0.0 {
                        return Err(cfg_err(at("kind"), "cf needs sigma_r = 0"));
                    }
                }
            }
        }
        if let Some(s) = &self.smile {
            self.smile_grid(s)?;
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<OptionSpec> {
        let o = &self.option;
        OptionSpec::new(o.strike, o.maturity, o.exercise, o.payoff).map_err(|e| match e {
            PricingError::Domain { field, reason } => cfg_err(format!("option.{field}"), reason),
            other => other,
        })
    }

    fn mc_config(&self, m: &MethodBlock, n_steps: usize, paths: usize, seed: Option<u64>) -> McConfig {
        let mut cfg = McConfig::new(paths, n_steps, seed.or(m.seed).unwrap_or(1));
        if m.kind == MethodKind::Ls {
            cfg.exercise_dates = m.exercise_dates.unwrap_or(n_steps);
        }
        if let Some(d) = m.basis_degree {
            cfg.basis_degree = d;
        }
        cfg
    }

    fn htfd_config(&self, m: &MethodBlock, n_steps: usize, dy: f64) -> HtfdConfig {
        let mode = match m.mode {
            Some(ModeSetting::Bates) => HtfdMode::StandardBates,
            Some(ModeSetting::BatesHullWhite) => HtfdMode::BatesHullWhite,
            None if self.model.is_standard_bates() => HtfdMode::StandardBates,
            None => HtfdMode::BatesHullWhite,
        };
        let mut cfg = HtfdConfig::new(n_steps, dy, mode);
        cfg.interpolation = match m.interpolation {
            Some(InterpolationSetting::Cubic) => ShiftInterpolation::Cubic,
            _ => ShiftInterpolation::Linear,
        };
        if m.boundary == Some(BoundarySetting::Zero) {
            cfg.boundary = Boundary::Zero;
        }
        cfg.discount_threshold = m.discount_threshold;
        cfg
    }

    /// Every `(spot, method, discretization)` in output order: spots outer,
    /// then method entries, then their discretizations.
    pub fn jobs(&self) -> Vec<Job> {
        let mut jobs = Vec::new();
        for &spot in &self.option.spots {
            for (entry, m) in self.method.iter().enumerate() {
                let method = m.label.clone().unwrap_or_else(|| format!("{:?}", m.kind).to_uppercase());
                let n_steps = m.n_steps.unwrap_or(0);
                let discs: Vec<Discretization> = match m.kind {
                    MethodKind::Htfd => m.dy.iter().map(|&dy| Discretization::Htfd { n_steps, dy }).collect(),
                    MethodKind::Mc | MethodKind::Ls => m
                        .paths
                        .iter()
                        .map(|&paths| Discretization::Mc { n_steps, paths })
                        .collect(),
                    MethodKind::Cf => vec![Discretization::Cf],
                };
                for discretization in discs {
                    jobs.push(Job {
                        spot,
                        method: method.clone(),
                        entry,
                        discretization,
                    });
                }
            }
        }
        jobs
    }

    /// Prices one job; the wall time covers only the numerical kernel.
    pub fn run_job(&self, job: &Job, seed: Option<u64>) -> Result<PriceRow> {
        let m = &self.method[job.entry];
        let params = self.model.with_spot(job.spot);
        let spec = self.spec()?;
        let start = Instant::now();
        let (price, ci, n_steps, disc) = match job.discretization {
            Discretization::Htfd { n_steps, dy } => {
                let cfg = self.htfd_config(m, n_steps, dy);
                let r = HtfdEngine::new(&params, &spec, &cfg)?.run()?;
                (r.price, None, Some(n_steps), Some(dy))
            }
            Discretization::Mc { n_steps, paths } => {
                let cfg = self.mc_config(m, n_steps, paths, seed);
                let e = match m.kind {
                    MethodKind::Ls => price_american_ls(&params, &spec, &cfg)?,
                    _ => price_european_mc(&params, &spec, &cfg)?,
                };
                (e.price, Some(e.ci_halfwidth), Some(n_steps), Some(paths as f64))
            }
            Discretization::Cf => (price_cf_bates(&params, &spec, &CfQuadratureConfig::default())?, None, None, None),
        };
        Ok(PriceRow {
            spot: job.spot,
            method: job.method.clone(),
            n_steps,
            dy_or_paths: disc,
            price,
            ci_halfwidth: ci,
            wall_time_seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Grid of moneyness values `K / S0` or maturities.
    pub fn smile_grid(&self, s: &SmileBlock) -> Result<Vec<f64>> {
        let grid = if !s.values.is_empty() {
            s.values.clone()
        } else if let Some([from, to, step]) = s.range {
            if !(step > 0.0) || to < from {
                return Err(cfg_err("smile.range", "needs from <= to and step > 0"));
            }
            let n = ((to - from) / step + 1e-9).floor() as usize + 1;
            (0..n).map(|i| from + i as f64 * step).collect()
        } else {
            return Err(cfg_err("smile.values", "give values or range"));
        };
        if grid.iter().any(|g| !(*g > 0.0)) {
            return Err(cfg_err("smile.values", "grid values must be > 0"));
        }
        Ok(grid)
    }

    /// Implied volatilities of European calls along the smile grid, using the
    /// first spot.
    pub fn run_smile(&self, seed: Option<u64>) -> Result<Vec<SmileRow>> {
        let s = self.smile.as_ref().ok_or_else(|| cfg_err("smile", "missing [smile] block"))?;
        let spot = self.option.spots[0];
        let params = self.model.with_spot(spot);
        let mode = if params.is_standard_bates() { HtfdMode::StandardBates } else { HtfdMode::BatesHullWhite };
        let mut rows = Vec::new();
        for g in self.smile_grid(s)? {
            let (strike, maturity) = match s.axis {
                SmileAxis::Moneyness => (g * spot, self.option.maturity),
                SmileAxis::Maturity => (self.option.strike, g),
            };
            let spec = OptionSpec::new(strike, maturity, Exercise::European, Payoff::Call)?;
            let iv = |price: f64| match implied_vol(price, spot, strike, maturity, params.r0, params.eta) {
                Ok(v) => Ok(Some(v)),
                Err(PricingError::OutOfBand { .. }) => Ok(None),
                Err(e) => Err(e),
            };
            let htfd = HtfdEngine::new(&params, &spec, &HtfdConfig::new(s.htfd_steps, s.htfd_dy, mode))?.run()?;
            let mc = price_european_mc(
                &params,
                &spec,
                &McConfig::new(s.mc_paths, s.mc_steps, seed.or(s.seed).unwrap_or(1)),
            )?;
            let iv_cf = if params.is_standard_bates() {
                iv(price_cf_bates(&params, &spec, &CfQuadratureConfig::default())?)?
            } else {
                None
            };
            rows.push(SmileRow {
                moneyness_or_maturity: g,
                iv_htfd: iv(htfd.price)?,
                iv_mc: iv(mc.price)?,
                iv_cf,
            });
        }
        Ok(rows)
    }
}

fn write_csv<T: Serialize>(rows: &[T], out: Option<&Path>) -> Result<()> {
    let io = |e: std::io::Error| PricingError::Io(e.to_string());
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(fs::File::create(p).map_err(|e| PricingError::Io(format!("{}: {e}", p.display())))?),
        None => Box::new(std::io::stdout()),
    };
    let mut w = csv::Writer::from_writer(sink);
    for r in rows {
        w.serialize(r).map_err(|e| PricingError::Io(e.to_string()))?;
    }
    w.flush().map_err(io)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.4}"))
}

/// The summary table printed after a `price` run.
pub fn summary(rows: &[PriceRow]) -> String {
    let mut s = format!(
        "{:>8} {:>10} {:>5} {:>10} {:>10} {:>8} {:>9}\n",
        "spot", "method", "N_t", "dy/paths", "price", "ci", "time(s)"
    );
    for r in rows {
        let disc = match (r.ci_halfwidth, r.dy_or_paths) {
            (Some(_), Some(p)) => format!("{p:.0}"),
            (None, Some(d)) => format!("{d}"),
            _ => "-".into(),
        };
        s += &format!(
            "{:>8.2} {:>10} {:>5} {:>10} {:>10.4} {:>8} {:>9.2}\n",
            r.spot,
            r.method,
            r.n_steps.map_or_else(|| "-".into(), |n| n.to_string()),
            disc,
            r.price,
            fmt_opt(r.ci_halfwidth),
            r.wall_time_seconds
        );
    }
    s
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

/// Runs every entry of the config at `path` and writes the CSV.
pub fn run(path: &Path, overrides: &Overrides) -> Result<Vec<PriceRow>> {
    let cfg = RunConfig::load(path)?;
    cfg.validate()?;
    if cfg.method.is_empty() {
        return Err(cfg_err("method", "no [[method]] entries"));
    }
    let rows = cfg
        .jobs()
        .iter()
        .map(|j| cfg.run_job(j, overrides.seed))
        .collect::<Result<Vec<_>>>()?;
    let out = overrides.out.as_deref().or(cfg.output.csv.as_deref());
    write_csv(&rows, out)?;
    if cfg.output.verbosity == Verbosity::Summary {
        let text = summary(&rows);
        // Keep stdout clean when it carries the CSV.
        if out.is_some() {
            print!("{text}");
        } else {
            eprint!("{text}");
        }
    }
    Ok(rows)
}

/// Runs the `[smile]` sweep of the config at `path` and writes the CSV.
pub fn smile_report(path: &Path, overrides: &Overrides) -> Result<Vec<SmileRow>> {
    let cfg = RunConfig::load(path)?;
    cfg.validate()?;
    let rows = cfg.run_smile(overrides.seed)?;
    write_csv(&rows, overrides.out.as_deref().or(cfg.output.csv.as_deref()))?;
    Ok(rows)
}

/// Process exit code for an error: 1 for configuration problems, 2 for
/// numerical failures.
pub fn exit_code(err: &PricingError) -> i32 {
    if err.is_config_error() {
        1
    } else {
        2
    }
}
