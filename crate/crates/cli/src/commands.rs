use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::Serialize;
use singfit::fitter::{LmStatus, ProfileIterate};
use singfit::model::{self, ModelFamily, Objective, StzParameterSet};
use singfit::simulator::{self, RecursionSpec};
use singfit::{series, FitConfig, FitError, FitResult, ModelSpec, ObservationSeries, ParamName, ParameterSet, SeriesKind};

use crate::options::{
    layered, FitArgs, Kind, Model, ObjectiveArg, Op, ProfileArgs, SimMode, SimulateArgs, TransformArgs,
};
use crate::output::OutputDir;

pub const SEED_ENV: &str = "SINGFIT_SEED";
pub const REPORT_SCHEMA: u32 = 1;
/// Model-curve sampling points per period.
const CURVE_DENSITY: usize = 10;
/// Curves end this many periods before the critical time.
const CURVE_STOP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Done,
    NoConvergence,
}

fn out_dir(dir: &Option<PathBuf>) -> PathBuf {
    dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn read_input(path: &Option<PathBuf>, kind: Option<Kind>) -> anyhow::Result<(PathBuf, ObservationSeries)> {
    let path = path.clone().context("no input file given")?;
    let kind = kind.unwrap_or(Kind::Price);
    let data = series::read_csv_path(&path, kind.into()).with_context(|| path.display().to_string())?;
    Ok((path, data))
}

fn csv_bytes(s: &ObservationSeries) -> anyhow::Result<Vec<u8>> {
    let mut buf = Vec::new();
    series::write_csv(s, &mut buf)?;
    Ok(buf)
}

pub fn transform(args: &TransformArgs) -> anyhow::Result<Status> {
    let a = layered(args, args.config.as_deref())?;
    let (input, mut s) = read_input(&a.input, a.kind)?;
    for op in &a.ops {
        s = apply(&s, *op).with_context(|| format!("operation `{op}`"))?;
    }
    let mut out = OutputDir::create(&out_dir(&a.out_dir))?;
    out.write("series.csv", &csv_bytes(&s)?)?;
    println!(
        "{} {} values, {}..{}",
        s.len(),
        s.kind.label(),
        s.start_year,
        s.last_year()
    );
    out.finish("transform", vec![input.display().to_string()], serde_json::to_value(&a)?, "ok")?;
    Ok(Status::Done)
}

fn apply(s: &ObservationSeries, op: Op) -> anyhow::Result<ObservationSeries> {
    Ok(match op {
        Op::Cpi(base) => match s.kind {
            SeriesKind::InflationPct => series::inflation_to_cpi(s, base)?,
            SeriesKind::Gri => series::gri_to_cpi(s, base)?,
            other => bail!("needs an inflation or gri series, got {}", other.label()),
        },
        Op::Normalize(year) => series::normalize(s, year)?,
        Op::Log => series::log_transform(s)?,
        Op::Gri => series::cpi_to_gri(s)?,
        Op::Window(r) => series::window(s, r.from, r.to)?,
    })
}

#[derive(Serialize)]
struct Derived {
    a_p: f64,
    t_c: Option<f64>,
    alpha: Option<f64>,
    stz: Option<StzParameterSet>,
}

#[derive(Serialize)]
struct FitReport<'a> {
    schema: u32,
    command: &'static str,
    input: String,
    chi_definition: &'static str,
    converged: bool,
    derived: Derived,
    result: &'a FitResult,
}

pub fn fit(args: &FitArgs) -> anyhow::Result<Status> {
    let a = layered(args, args.config.as_deref())?;
    let (input, data) = read_input(&a.input, a.kind)?;
    let horizon = a.horizon.unwrap_or(10.0);
    if !(horizon >= 0.0 && horizon.is_finite()) {
        bail!("horizon must be >= 0, got {horizon}");
    }
    let model = a.model.unwrap_or(Model::Nlf);
    let objective = a.objective.unwrap_or(match model {
        Model::Stz => ObjectiveArg::RawCpi,
        _ => ObjectiveArg::LogCpi,
    });
    let mut cfg = FitConfig::new(ModelSpec::new(model.into(), objective.into())?);
    if let Some(w) = a.window {
        cfg = cfg.window(w.from, w.to);
    }
    for f in &a.freeze {
        cfg = cfg.freeze(f.name, f.value);
    }
    if let Some(t) = a.tol {
        cfg.stop_rel_chi2 = t;
    }
    if let Some(t) = a.extended_tol {
        cfg = cfg.extended(t);
    }
    if let Some(n) = a.max_iter {
        cfg = cfg.max_iter(n);
    }
    cfg.t0 = a.t0;

    let (result, status) = match singfit::fit(&data, &cfg) {
        Ok(r) => (r, Status::Done),
        Err(FitError::NoConvergence { best }) => (*best, Status::NoConvergence),
        Err(e) => return Err(e.into()),
    };

    let ps = &result.params;
    let report = FitReport {
        schema: REPORT_SCHEMA,
        command: "fit",
        input: input.display().to_string(),
        chi_definition: "r.m.s. residue, unweighted",
        converged: result.converged,
        derived: Derived {
            a_p: ps.a_p(),
            t_c: ps.t_c(),
            alpha: (ps.beta > 0.0).then(|| model::alpha_from_beta(ps.beta).ok()).flatten(),
            stz: (ps.beta > 0.0).then(|| model::native_to_stz(ps).ok()).flatten(),
        },
        result: &result,
    };
    let mut json = serde_json::to_vec_pretty(&report)?;
    json.push(b'\n');

    let mut out = OutputDir::create(&out_dir(&a.out_dir))?;
    out.write("report.json", &json)?;
    out.write("curves.csv", curves(&data, &result, horizon)?.as_bytes())?;
    print_summary(&result);
    let label = match status {
        Status::Done => "ok",
        Status::NoConvergence => "no_convergence",
    };
    out.finish("fit", vec![input.display().to_string()], serde_json::to_value(&a)?, label)?;
    if status == Status::NoConvergence {
        eprintln!("warning: no start converged ({:?}); report written anyway", result.status);
    }
    Ok(status)
}

fn print_summary(r: &FitResult) {
    println!(
        "{:?} / {:?}, window {}..{}, {} points, {} starts",
        r.model.family, r.model.objective, r.window.0, r.window.1, r.n_points, r.starts
    );
    for &name in ParamName::for_family(r.model.family) {
        let v = r.value_of(name);
        match r.sigma_of(name) {
            Some(s) => println!("  {:<5} = {v:.6} +/- {s:.3e}", name.as_str()),
            None => println!("  {:<5} = {v} (frozen)", name.as_str()),
        }
    }
    if r.model.family != ModelFamily::LinearFeedback && r.params.beta > 0.0 {
        println!("  a_p   = {:.6} (derived)", r.params.a_p());
    }
    println!("  chi   = {:.6e} (r.m.s. residue, unweighted)", r.chi);
    let how = if r.status == LmStatus::MaxIterations || !r.converged {
        "stopped"
    } else {
        "converged"
    };
    println!("  {how} after {} iterations ({:?})", r.iterations, r.status);
}

/// Rows `kind,year,data,model,residual`: the fitted observations, a dense
/// model curve and, when there is one, the critical-time marker.
fn curves(data: &ObservationSeries, r: &FitResult, horizon: f64) -> anyhow::Result<String> {
    let fam = r.model.family;
    let ps = &r.params;
    let data = series::window(data, r.window.0, r.window.1)?;
    let (levels, rates) = match (r.model.objective, data.kind) {
        (Objective::LogCpi, SeriesKind::LogPrice) | (Objective::RawCpi, _) => (data.clone(), None),
        (Objective::LogCpi, _) => (series::log_transform(&data)?, None),
        (Objective::JointGriLogCpi, _) => {
            let rates = (data.len() >= 2).then(|| series::cpi_to_gri(&data)).transpose()?;
            (series::log_transform(&data)?, rates)
        }
    };

    let mut s = String::from("kind,year,data,model,residual\n");
    for (t, y) in levels.points() {
        let m = model::log_price(fam, ps, t)?;
        writeln!(s, "data,{t},{y},{m},{}", y - m)?;
    }
    for (t, y) in rates.iter().flat_map(|g| g.points()) {
        // labelled at the interval end, measured at its midpoint
        let m = model::rate(fam, ps, t - 0.5 * data.dt)?;
        writeln!(s, "gri,{t},{y},{m},{}", y - m)?;
    }

    let t_c = ps.t_c();
    let start = data.first_year();
    let mut end = data.last_year() + horizon;
    if let Some(t_c) = t_c {
        end = end.min(t_c - CURVE_STOP * data.dt);
    }
    let h = data.dt / CURVE_DENSITY as f64;
    let n = ((end - start) / h).floor().max(0.0) as usize;
    let mut grid: Vec<f64> = (0..=n).map(|i| start + i as f64 * h).collect();
    if grid.last().is_some_and(|&t| end - t > 1e-9 * h) {
        grid.push(end);
    }
    for t in grid {
        match model::log_price(fam, ps, t) {
            Ok(m) => writeln!(s, "model,{t},,{m},")?,
            // past an overflow the curve has nothing more to show
            Err(_) => break,
        }
    }
    if let Some(t_c) = t_c {
        writeln!(s, "t_c,{t_c},,,")?;
    }
    Ok(s)
}

pub fn profile(args: &ProfileArgs) -> anyhow::Result<Status> {
    let a = layered(args, args.config.as_deref())?;
    let (input, data) = read_input(&a.input, a.kind)?;
    let model = a.model.unwrap_or(Model::Nlf);
    let mut cfg = FitConfig::new(ModelSpec::log_cpi(model.into()));
    if let Some(w) = a.window {
        cfg = cfg.window(w.from, w.to);
    }
    for f in &a.freeze {
        cfg = cfg.freeze(f.name, f.value);
    }
    if let Some(t) = a.tol {
        cfg.stop_rel_chi2 = t;
    }
    if let Some(t) = a.extended_tol {
        cfg = cfg.extended(t);
    }
    if let Some(n) = a.max_iter {
        cfg = cfg.max_iter(n);
    }
    let path = singfit::profile_beta_tc(&data, &cfg)?;

    let mut s = String::from("iter,beta,t_c,beta_times_span,a_p,chi2\n");
    for p in &path {
        let ProfileIterate {
            iter,
            beta,
            t_c,
            beta_times_span,
            a_p,
            chi2,
            ..
        } = *p;
        writeln!(s, "{iter},{beta},{t_c},{beta_times_span},{a_p},{chi2}")?;
    }
    let mut out = OutputDir::create(&out_dir(&a.out_dir))?;
    out.write("profile.csv", s.as_bytes())?;
    if let (Some(first), Some(last)) = (path.first(), path.last()) {
        println!(
            "{} iterates: beta {:.4e} -> {:.4e}, t_c {:.3} -> {:.3}, a_p {:.5}",
            path.len(),
            first.beta,
            last.beta,
            first.t_c,
            last.t_c,
            last.a_p
        );
    }
    out.finish("profile", vec![input.display().to_string()], serde_json::to_value(&a)?, "ok")?;
    Ok(Status::Done)
}

fn seed(flag: Option<u64>) -> anyhow::Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}=`{v}` is not an unsigned integer")),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

pub fn simulate(args: &SimulateArgs) -> anyhow::Result<Status> {
    let a = layered(args, args.config.as_deref())?;
    let family = a.family.context("--family is required")?;
    let years = a.years.context("--years is required")?;
    let noise = a.noise.unwrap_or(0.0);
    let seed = seed(a.seed)?;

    let s = match a.mode.unwrap_or(SimMode::ClosedForm) {
        SimMode::ClosedForm => {
            let ps = closed_form_params(&a, years.from)?;
            simulator::synthesize(&ps, family.into(), years.from, years.to, noise, seed)
                .with_context(|| format!("sampling {years}"))?
        }
        SimMode::Recursion => {
            if years.to - years.from < 1 {
                bail!("the recursion needs at least two years, got {years}");
            }
            let r_init = match a.r_init[..] {
                [] => {
                    let r0 = a.r0.context("--r0 or --r-init is required")?;
                    (r0, r0)
                }
                [x, y] => (x, y),
                _ => bail!("--r-init takes exactly two rates"),
            };
            let steps = (years.to - years.from - 1) as usize;
            let mut spec = RecursionSpec::new(
                family.into(),
                r_init,
                a.a_p.unwrap_or(0.0),
                a.beta.unwrap_or(0.0),
                steps,
            );
            spec.start_year = years.from;
            spec.noise_sigma = Some(noise);
            spec.seed = seed;
            spec.refinement = a.refinement.unwrap_or(1);
            let run = simulator::iterate_rates(&spec).with_context(|| format!("iterating {years}"))?;
            if let Some(k) = run.blowup_step {
                bail!("the recursion overflows at {} inside {years}", years.from + k as i32);
            }
            run.series
        }
    };

    let mut out = OutputDir::create(&out_dir(&a.out_dir))?;
    out.write("series.csv", &csv_bytes(&s)?)?;
    println!("{} {} values, {}..{}, seed {seed}", s.len(), s.kind.label(), s.start_year, s.last_year());
    let mut config = serde_json::to_value(&a)?;
    config["seed"] = seed.into();
    out.finish("simulate", Vec::new(), config, "ok")?;
    Ok(Status::Done)
}

fn closed_form_params(a: &SimulateArgs, first_year: i32) -> anyhow::Result<ParameterSet> {
    let t0 = a.t0.unwrap_or(first_year as f64);
    let p0 = a.p0.unwrap_or(0.0);
    let r0 = a.r0.context("--r0 is required")?;
    let family = a.family.context("--family is required")?;
    Ok(match ModelFamily::from(family) {
        ModelFamily::Cagan => ParameterSet::cagan(t0, 1.0, p0, r0),
        ModelFamily::LinearFeedback => ParameterSet::linear(t0, 1.0, p0, r0, a.a_p.context("--a-p is required for lf")?),
        _ => {
            let beta = a.beta.context("--beta is required for nlf")?;
            match (a.t_c, a.a_p) {
                (Some(t_c), None) => ParameterSet::nonlinear(t0, 1.0, p0, r0, beta, t_c),
                (None, Some(a_p)) => ParameterSet::nonlinear_with_strength(t0, 1.0, p0, r0, beta, a_p),
                _ => bail!("nlf needs exactly one of --t-c and --a-p"),
            }
        }
    })
}
