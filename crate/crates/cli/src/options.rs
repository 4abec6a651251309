//! Command-line flags and their JSON config-file equivalents.
//!
//! Every subcommand's flags deserialize from a JSON object whose keys are
//! the long flag names (`--extended-tol` becomes `"extended-tol"`). Values
//! given on the command line win over the file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use singfit::model::{ModelFamily, Objective};
use singfit::simulator::RecursionFamily;
use singfit::{ParamName, SeriesKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Price,
    Inflation,
    LogPrice,
    Gri,
}

impl From<Kind> for SeriesKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Price => SeriesKind::PriceIndex,
            Kind::Inflation => SeriesKind::InflationPct,
            Kind::LogPrice => SeriesKind::LogPrice,
            Kind::Gri => SeriesKind::Gri,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Cagan,
    Lf,
    Nlf,
    /// NLF log-price formula fitted to raw prices
    Stz,
}

impl From<Model> for ModelFamily {
    fn from(m: Model) -> Self {
        match m {
            Model::Cagan => ModelFamily::Cagan,
            Model::Lf => ModelFamily::LinearFeedback,
            Model::Nlf => ModelFamily::NonlinearFeedback,
            Model::Stz => ModelFamily::StzDirect,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveArg {
    LogCpi,
    RawCpi,
    /// growth rates and log-prices together
    Joint,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::LogCpi => Objective::LogCpi,
            ObjectiveArg::RawCpi => Objective::RawCpi,
            ObjectiveArg::Joint => Objective::JointGriLogCpi,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Cagan,
    Lf,
    Nlf,
}

impl From<Family> for ModelFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Cagan => ModelFamily::Cagan,
            Family::Lf => ModelFamily::LinearFeedback,
            Family::Nlf => ModelFamily::NonlinearFeedback,
        }
    }
}

impl From<Family> for RecursionFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Cagan => RecursionFamily::Cagan,
            Family::Lf => RecursionFamily::LinearFeedback,
            Family::Nlf => RecursionFamily::NonlinearFeedback,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimMode {
    /// noisy samples of the closed-form log-price
    ClosedForm,
    /// the discrete two-step recursion, emitted as growth rates
    Recursion,
}

/// Inclusive year range written `FROM..TO`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct YearRange {
    pub from: i32,
    pub to: i32,
}

impl FromStr for YearRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s
            .split_once("..")
            .ok_or_else(|| format!("expected FROM..TO, got `{s}`"))?;
        let year = |x: &str| x.trim().parse::<i32>().map_err(|e| format!("bad year `{x}`: {e}"));
        Ok(YearRange {
            from: year(a)?,
            to: year(b)?,
        })
    }
}

impl fmt::Display for YearRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.from, self.to)
    }
}

impl TryFrom<String> for YearRange {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<YearRange> for String {
    fn from(r: YearRange) -> String {
        r.to_string()
    }
}

/// A parameter held fixed, written `NAME=VALUE`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Freeze {
    pub name: ParamName,
    pub value: f64,
}

impl FromStr for Freeze {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (n, v) = s
            .split_once('=')
            .ok_or_else(|| format!("expected NAME=VALUE, got `{s}`"))?;
        Ok(Freeze {
            name: n.trim().parse()?,
            value: v.trim().parse().map_err(|e| format!("bad value `{v}`: {e}"))?,
        })
    }
}

impl TryFrom<String> for Freeze {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Freeze> for String {
    fn from(f: Freeze) -> String {
        format!("{}={}", f.name, f.value)
    }
}

/// One step of a transform pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Op {
    /// inflation or GRI to a price index starting at the given base
    Cpi(f64),
    Normalize(i32),
    Log,
    Gri,
    Window(YearRange),
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let need = || arg.ok_or_else(|| format!("`{name}` needs an argument, e.g. `{name}:1980`"));
        match name {
            "cpi" => Ok(Op::Cpi(match arg {
                Some(a) => a.parse().map_err(|e| format!("bad base `{a}`: {e}"))?,
                None => 1.0,
            })),
            "normalize" => Ok(Op::Normalize(need()?.parse().map_err(|e| format!("bad year: {e}"))?)),
            "log" => Ok(Op::Log),
            "gri" => Ok(Op::Gri),
            "window" => Ok(Op::Window(need()?.parse()?)),
            other => Err(format!(
                "unknown operation `{other}` (expected cpi, normalize, log, gri or window)"
            )),
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Op::Cpi(b) => write!(f, "cpi:{b}"),
            Op::Normalize(y) => write!(f, "normalize:{y}"),
            Op::Log => f.write_str("log"),
            Op::Gri => f.write_str("gri"),
            Op::Window(r) => write!(f, "window:{r}"),
        }
    }
}

impl TryFrom<String> for Op {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<Op> for String {
    fn from(o: Op) -> String {
        o.to_string()
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TransformArgs {
    /// JSON file supplying defaults for any flag
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `year,value` CSV
    pub input: Option<PathBuf>,
    /// What the input values measure [default: price]
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Operations applied in order: cpi[:BASE], normalize:YEAR, log, gri, window:FROM..TO
    #[arg(long = "op")]
    pub ops: Vec<Op>,
    /// Directory for series.csv and manifest.json [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct FitArgs {
    /// JSON file supplying defaults for any flag
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `year,value` CSV
    pub input: Option<PathBuf>,
    /// What the input values measure [default: price]
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// [default: nlf]
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// [default: raw-cpi for stz, log-cpi otherwise]
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    /// Fitted years, FROM..TO
    #[arg(long)]
    pub window: Option<YearRange>,
    /// Hold a parameter fixed, e.g. p0=0 (repeatable)
    #[arg(long)]
    pub freeze: Vec<Freeze>,
    /// Relative chi-square change that ends the fit [default: 1e-3]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Continue the best start down to this relative change
    #[arg(long)]
    pub extended_tol: Option<f64>,
    /// [default: 500]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Reference year of the parameters [default: first fitted year]
    #[arg(long)]
    pub t0: Option<f64>,
    /// Years past the last observation covered by the model curve [default: 10]
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Directory for report.json, curves.csv and manifest.json [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ProfileArgs {
    /// JSON file supplying defaults for any flag
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// `year,value` CSV
    pub input: Option<PathBuf>,
    /// What the input values measure [default: price]
    #[arg(long, value_enum)]
    pub kind: Option<Kind>,
    /// Only nlf has a beta/t_c profile [default: nlf]
    #[arg(long, value_enum)]
    pub model: Option<Model>,
    /// Fitted years, FROM..TO
    #[arg(long)]
    pub window: Option<YearRange>,
    /// Hold a parameter fixed, e.g. p0=0 (repeatable)
    #[arg(long)]
    pub freeze: Vec<Freeze>,
    /// Threshold used to pick the best start [default: 1e-3]
    #[arg(long)]
    pub tol: Option<f64>,
    /// Threshold of the continued run [default: 1e-5]
    #[arg(long)]
    pub extended_tol: Option<f64>,
    /// [default: 500]
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Directory for profile.csv and manifest.json [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SimulateArgs {
    /// JSON file supplying defaults for any flag
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub family: Option<Family>,
    /// [default: closed-form]
    #[arg(long, value_enum)]
    pub mode: Option<SimMode>,
    /// Emitted years, FROM..TO
    #[arg(long)]
    pub years: Option<YearRange>,
    /// Reference year [default: first emitted year]
    #[arg(long)]
    pub t0: Option<f64>,
    /// Log-price at t0 [default: 0]
    #[arg(long)]
    pub p0: Option<f64>,
    #[arg(long)]
    pub r0: Option<f64>,
    #[arg(long)]
    pub a_p: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Critical year; an alternative to --a-p for nlf
    #[arg(long)]
    pub t_c: Option<f64>,
    /// Recursion seed rates R1,R2 [default: r0,r0]
    #[arg(long, value_delimiter = ',')]
    pub r_init: Vec<f64>,
    /// Recursion sub-steps per period [default: 1]
    #[arg(long)]
    pub refinement: Option<u32>,
    /// Gaussian noise scale (log-price, or rate in recursion mode) [default: 0]
    #[arg(long)]
    pub noise: Option<f64>,
    /// Noise seed; SINGFIT_SEED takes precedence [default: 0]
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory for series.csv and manifest.json [default: .]
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

/// Overlays the flags given on the command line onto the config file.
pub fn layered<T: Serialize + DeserializeOwned>(cli: &T, config: Option<&Path>) -> anyhow::Result<T> {
    let Value::Object(flags) = serde_json::to_value(cli)? else {
        bail!("flags do not form an object");
    };
    let mut merged = match config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            match serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))? {
                Value::Object(map) => map,
                _ => bail!("{}: config must be a JSON object", path.display()),
            }
        }
        None => Default::default(),
    };
    for (k, v) in flags {
        let unset = v.is_null() || v.as_array().is_some_and(|a| a.is_empty());
        if !unset {
            merged.insert(k, v);
        }
    }
    let what = config.map_or_else(|| "flags".to_string(), |p| p.display().to_string());
    serde_json::from_value(Value::Object(merged)).with_context(|| format!("invalid options in {what}"))
}
