use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use acar::fit::{fit, quadratic_threshold, FitConfig, FitResult, ThresholdResult};
use acar::infer::{compare_models, portmanteau_test, ComparisonResult, PortmanteauResult, SMode};
use acar::mc::{run_recovery_study, run_scenario_study, MCDesign, ScenarioDesign};
use acar::sim::{simulate, SimConfig};
use acar::{simulation_design, AcarError, ParameterVector};
use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::cli::*;
use crate::climate::{align, build_seasonal_covariates, AlignedData, CovariateConfig, DroppedYear};
use crate::io::{self, CovariateTable};
use crate::search::{enumerate_candidates, search_models, ModelSearchReport};

/// Settings read from `--config`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub fit: Option<FitConfig>,
    pub covariates: Option<CovariateConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Marks an error as a usage error (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

/// Exit code for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match err.downcast_ref::<AcarError>() {
        Some(
            AcarError::NonFiniteLatent { .. }
            | AcarError::NonFiniteObjective
            | AcarError::Singular { .. }
            | AcarError::NonConvergence { .. }
            | AcarError::DegenerateQuadratic(_),
        ) => 2,
        _ => 1,
    }
}

struct RunContext {
    seed: u64,
    format: Format,
    file: FileConfig,
}

impl RunContext {
    fn fit_config(&self, opts: &FitOptions) -> FitConfig {
        let mut c = self.file.fit.clone().unwrap_or_default();
        c.seed = self.seed;
        if let Some(v) = opts.n_starts {
            c.n_starts = v;
        }
        if let Some(v) = opts.epsilon {
            c.epsilon = v;
        }
        if let Some(v) = opts.eta0 {
            c.eta0 = v;
        }
        if let Some(v) = opts.max_iterations {
            c.max_iterations = v;
        }
        c
    }
}

/// Runs a parsed command and returns the report body.
pub fn run(cli: &Cli) -> Result<String> {
    let file = FileConfig::load(cli.common.config.as_deref())?;
    let seed = cli
        .common
        .seed
        .or(file.seed)
        .or(file.fit.as_ref().map(|f| f.seed))
        .unwrap_or(0);
    let default_format = match cli.command {
        Command::Simulate(_) | Command::BuildCovariates(_) => Format::Text,
        _ => Format::Json,
    };
    let ctx = RunContext {
        seed,
        format: cli.common.format.unwrap_or(default_format),
        file,
    };
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(&ctx, a),
        Command::Fit(a) => cmd_fit(&ctx, a),
        Command::Diagnose(a) => cmd_diagnose(&ctx, a),
        Command::Compare(a) => cmd_compare(&ctx, a),
        Command::Mc(a) => cmd_mc(&ctx, a),
        Command::BuildCovariates(a) => cmd_build_covariates(&ctx, a),
        Command::Search(a) => cmd_search(&ctx, a),
    }
}

/// Runs a command and writes its report to `--out` or standard output.
pub fn run_and_write(cli: &Cli) -> Result<()> {
    let body = run(cli)?;
    match &cli.common.out {
        Some(path) => fs::write(path, body).with_context(|| format!("cannot write {}", path.display()))?,
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(body.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// `table1:N` or a comma-separated list ordered omega, gamma, alpha, beta.
pub fn parse_theta(spec: &str, k: Option<usize>, p: Option<usize>) -> Result<ParameterVector> {
    let theta = if let Some(id) = spec.strip_prefix("table1:") {
        let id: usize = id
            .parse()
            .map_err(|_| usage(format!("invalid design id in '{spec}'")))?;
        simulation_design(id).ok_or_else(|| usage(format!("unknown design '{spec}' (expected table1:1..3)")))?
    } else {
        let values = spec
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| usage(format!("cannot parse theta '{spec}'")))?;
        let k = k.ok_or_else(|| usage("--k is required with an explicit theta"))?;
        let p = p.unwrap_or_else(|| values.len().saturating_sub(3 * k));
        ParameterVector::from_flat(k, p, values).map_err(|e| usage(e.to_string()))?
    };
    if k.is_some_and(|k| k != theta.k()) || p.is_some_and(|p| p != theta.p()) {
        bail!(usage(format!(
            "theta has K = {}, P = {}, which disagrees with --k/--p",
            theta.k(),
            theta.p()
        )));
    }
    Ok(theta)
}

fn cmd_simulate(ctx: &RunContext, a: &SimulateArgs) -> Result<String> {
    let theta = parse_theta(&a.theta, a.k, a.p)?;
    let mut config = SimConfig::new(theta.clone(), a.n, ctx.seed);
    if let Some(b) = a.burn_in {
        config.burn_in = b;
    }
    if let Some(f) = &ctx.file.fit {
        config.eta0 = f.eta0;
    }
    config.validate().map_err(|e| usage(e.to_string()))?;
    let data = simulate(&config)?;
    let years: Vec<i32> = (0..a.n as i32).map(|t| a.start_year + t).collect();
    match ctx.format {
        Format::Text => {
            let mut buf = Vec::new();
            io::write_combined(&mut buf, &years, &data.series, &data.covariates)?;
            Ok(String::from_utf8(buf)?)
        }
        Format::Json => {
            #[derive(Serialize)]
            struct Out<'a> {
                seed: u64,
                n: usize,
                burn_in: usize,
                theta: &'a ParameterVector,
                years: &'a [i32],
                levels: &'a [usize],
                covariate_names: &'a [String],
                covariates: Vec<&'a [f64]>,
            }
            to_json(&Out {
                seed: ctx.seed,
                n: a.n,
                burn_in: config.burn_in,
                theta: &theta,
                years: &years,
                levels: data.series.levels(),
                covariate_names: data.covariates.column_names(),
                covariates: (0..a.n).map(|t| data.covariates.row(t)).collect(),
            })
        }
    }
}

fn load_data(
    series: &Path,
    covariates: Option<&Path>,
    columns: Option<&[String]>,
    lag: i32,
    k: Option<usize>,
) -> Result<AlignedData> {
    let ys = io::load_ordinal_series(series, k)?;
    let table = match covariates {
        Some(p) => io::load_covariate_table(p)?,
        None => CovariateTable {
            years: ys.years.clone(),
            names: Vec::new(),
            rows: vec![Vec::new(); ys.years.len()],
        },
    };
    let table = match columns {
        Some(cols) => table.select(cols)?,
        None => table,
    };
    Ok(align(&ys, &table, lag)?)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into())
}

fn fit_text(f: &FitResult, out: &mut String) {
    let _ = writeln!(
        out,
        "n = {}  terms = {}  negloglik = {:.6}  AIC = {:.4}  converged = {}  ({})",
        f.n_obs, f.n_terms, f.negloglik, f.aic, f.converged, f.termination
    );
    let _ = writeln!(
        out,
        "{:<24} {:>12} {:>12} {:>10} {:>10}",
        "parameter", "estimate", "std.error", "t", "p"
    );
    for (i, name) in f.parameter_names.iter().enumerate() {
        let label = match f.theta_hat.layout().gamma_index(i) {
            Some(j) => format!("{name} ({})", f.covariate_names[j]),
            None => name.clone(),
        };
        let _ = writeln!(
            out,
            "{:<24} {:>12.5} {:>12} {:>10} {:>10}",
            label,
            f.theta_hat.as_slice()[i],
            fmt_opt(f.std_errors.as_ref().map(|s| s[i])),
            fmt_opt(f.t_stats.as_ref().map(|s| s[i])),
            fmt_opt(f.p_values.as_ref().map(|s| s[i])),
        );
    }
    for w in &f.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    if let Some(e) = &f.covariance_error {
        let _ = writeln!(out, "warning: {e}");
    }
}

#[derive(Serialize)]
struct ThresholdReport {
    linear: String,
    quadratic: String,
    scale: f64,
    /// In covariate units.
    estimate: ThresholdResult,
    /// Divided by the scale.
    raw_units: ThresholdResult,
    /// Raw-unit interval clipped below at zero.
    raw_units_truncated: (f64, f64),
}

#[derive(Serialize)]
struct FitReport<'a> {
    #[serde(flatten)]
    fit: &'a FitResult,
    dropped_years: &'a [i32],
    threshold: Option<ThresholdReport>,
}

fn cmd_fit(ctx: &RunContext, a: &FitArgs) -> Result<String> {
    let d = &a.data;
    let data = load_data(&d.series, d.covariates.as_deref(), d.columns.as_deref(), d.lag, d.k)?;
    let f = fit(&data.series, &data.covariates, &ctx.fit_config(&a.fit))?;
    let threshold = match &a.threshold {
        Some(names) => {
            if names.len() != 2 {
                return Err(usage(format!(
                    "--threshold takes two column names, got {}",
                    names.len()
                )));
            }
            let idx = |name: &String| {
                f.covariate_names
                    .iter()
                    .position(|n| n == name)
                    .map(|j| f.layout().gamma(j))
                    .ok_or_else(|| usage(format!("threshold column '{name}' is not in the model")))
            };
            let est = quadratic_threshold(&f, idx(&names[0])?, idx(&names[1])?)?;
            let raw = est.in_raw_units(a.threshold_scale);
            Some(ThresholdReport {
                linear: names[0].clone(),
                quadratic: names[1].clone(),
                scale: a.threshold_scale,
                estimate: est,
                raw_units: raw,
                raw_units_truncated: raw.truncated_at_zero(),
            })
        }
        None => None,
    };
    match ctx.format {
        Format::Json => to_json(&FitReport {
            fit: &f,
            dropped_years: &data.dropped_years,
            threshold,
        }),
        Format::Text => {
            let mut out = String::new();
            fit_text(&f, &mut out);
            if let Some(t) = threshold {
                let (lo, hi) = t.raw_units_truncated;
                let _ = writeln!(
                    out,
                    "threshold {}/{}: {:.4} (se {:.4}); raw units {:.3}, 95% CI [{:.3}, {:.3}]",
                    t.linear, t.quadratic, t.estimate.estimate, t.estimate.std_error, t.raw_units.estimate, lo, hi
                );
            }
            Ok(out)
        }
    }
}

#[derive(Serialize)]
struct DiagnoseReport<'a> {
    parameter_names: &'a [String],
    covariate_names: &'a [String],
    theta_hat: &'a [f64],
    std_errors: &'a Option<Vec<f64>>,
    negloglik: f64,
    aic: f64,
    n_obs: usize,
    converged: bool,
    at_bound: &'a [bool],
    portmanteau: Vec<PortmanteauResult>,
}

fn portmanteau_text(p: &PortmanteauResult) -> String {
    format!(
        "portmanteau q = {}: statistic = {:.4}, df = {}, p = {:.4}\n",
        p.q, p.statistic, p.df, p.p_value
    )
}

fn cmd_diagnose(ctx: &RunContext, a: &DiagnoseArgs) -> Result<String> {
    let d = &a.data;
    let data = load_data(&d.series, d.covariates.as_deref(), d.columns.as_deref(), d.lag, d.k)?;
    let f = fit(&data.series, &data.covariates, &ctx.fit_config(&a.fit))?;
    let tests =
        a.q.iter()
            .map(|&q| portmanteau_test(&f, q))
            .collect::<acar::Result<Vec<_>>>()?;
    match ctx.format {
        Format::Json => to_json(&DiagnoseReport {
            parameter_names: &f.parameter_names,
            covariate_names: &f.covariate_names,
            theta_hat: f.theta_hat.as_slice(),
            std_errors: &f.std_errors,
            negloglik: f.negloglik,
            aic: f.aic,
            n_obs: f.n_obs,
            converged: f.converged,
            at_bound: &f.at_bound,
            portmanteau: tests,
        }),
        Format::Text => {
            let mut out = String::new();
            fit_text(&f, &mut out);
            for t in &tests {
                out.push_str(&portmanteau_text(t));
            }
            Ok(out)
        }
    }
}

fn s_mode(arg: SModeArg) -> SMode {
    match arg {
        SModeArg::AssumedZero => SMode::AssumedZero,
        SModeArg::Empirical => SMode::Empirical,
    }
}

#[derive(Serialize)]
struct CompareReport<'a> {
    #[serde(flatten)]
    comparison: &'a ComparisonResult,
    negloglik: [f64; 2],
    theta_hat: [&'a [f64]; 2],
}

fn cmd_compare(ctx: &RunContext, a: &CompareArgs) -> Result<String> {
    let d1 = load_data(&a.series1, a.covariates1.as_deref(), a.columns.as_deref(), a.lag, a.k)?;
    let d2 = load_data(&a.series2, a.covariates2.as_deref(), a.columns.as_deref(), a.lag, a.k)?;
    let config = ctx.fit_config(&a.fit);
    let f1 = fit(&d1.series, &d1.covariates, &config)?;
    let f2 = fit(&d2.series, &d2.covariates, &config)?;
    let c = compare_models(&f1, &f2, s_mode(a.s_mode))?;
    match ctx.format {
        Format::Json => to_json(&CompareReport {
            comparison: &c,
            negloglik: [f1.negloglik, f2.negloglik],
            theta_hat: [f1.theta_hat.as_slice(), f2.theta_hat.as_slice()],
        }),
        Format::Text => {
            let mut out = String::new();
            let _ = writeln!(out, "{:<12} {:>10} {:>10} {:>10}", "parameter", "diff", "z", "p");
            for i in 0..c.difference.len() {
                let _ = writeln!(
                    out,
                    "{:<12} {:>10.4} {:>10} {:>10}",
                    c.parameter_names[i],
                    c.difference[i],
                    fmt_opt(c.per_param_z[i]),
                    fmt_opt(c.per_param_p[i])
                );
            }
            let _ = writeln!(
                out,
                "global: statistic = {}, df = {}, p = {}",
                fmt_opt(c.global_statistic),
                c.global_df,
                fmt_opt(c.global_p)
            );
            Ok(out)
        }
    }
}

fn cmd_mc(ctx: &RunContext, a: &McArgs) -> Result<String> {
    let fit_config = ctx.fit_config(&a.fit);
    match a.design {
        McDesignArg::Recovery => {
            let theta0 = parse_theta(&a.theta, None, None)?;
            let mut design = MCDesign::new(theta0, a.n.clone(), a.b, ctx.seed);
            design.fit_config = fit_config;
            if let Some(b) = a.burn_in {
                design.burn_in = b;
            }
            design.validate().map_err(|e| usage(e.to_string()))?;
            let summaries = run_recovery_study(&design)?;
            match ctx.format {
                Format::Json => to_json(&summaries),
                Format::Text => {
                    let mut out = String::new();
                    for s in &summaries {
                        let _ = writeln!(
                            out,
                            "n = {}: {} of {} replications used ({} failed, {} at bound)",
                            s.n, s.used, s.replications, s.failures, s.at_bound
                        );
                        let _ = writeln!(
                            out,
                            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}",
                            "parameter", "theta0", "CMLE", "TSE", "MAE", "MSE", "cover"
                        );
                        for p in &s.parameters {
                            let _ = writeln!(
                                out,
                                "{:<10} {:>8.3} {:>8.3} {:>8.3} {:>8.3} {:>8.4} {:>8.3}",
                                p.name, p.theta0, p.cmle, p.tse, p.mae, p.mse, p.coverage
                            );
                        }
                    }
                    Ok(out)
                }
            }
        }
        McDesignArg::Scenario => {
            let scenario = a
                .scenario
                .ok_or_else(|| usage("--scenario is required for the scenario design"))?;
            let n = *a.n.first().ok_or_else(|| usage("--n is required"))?;
            let mut design = ScenarioDesign::new(scenario, n, a.b, ctx.seed);
            design.alpha = a.alpha;
            design.fit_config = fit_config;
            design.s_mode = a.s_mode.map(s_mode);
            if let Some(b) = a.burn_in {
                design.burn_in = b;
            }
            let report = run_scenario_study(&design).map_err(|e| match e {
                AcarError::InvalidInput(m) => usage(m),
                other => other.into(),
            })?;
            match ctx.format {
                Format::Json => to_json(&report),
                Format::Text => Ok(format!(
                    "scenario {} ({:?} coupling, S {:?}), n = {}: rejection rate {:.3} over {} usable replications ({} failed, {} at bound); mean statistic {:.3}\n",
                    report.scenario,
                    report.coupling,
                    report.s_mode,
                    report.n,
                    report.rejection_rate,
                    report.used,
                    report.failures,
                    report.at_bound,
                    report.mean_statistic
                )),
            }
        }
    }
}

#[derive(Serialize)]
struct CovariateReport<'a> {
    scale: f64,
    min_coverage: f64,
    /// Set when rows are keyed by response year.
    lag: Option<i32>,
    columns: &'a [String],
    years: &'a [i32],
    rows: &'a [Vec<Option<f64>>],
    dropped_climate_years: &'a [DroppedYear],
    dropped_response_years: &'a [i32],
}

fn cmd_build_covariates(ctx: &RunContext, a: &BuildCovariatesArgs) -> Result<String> {
    let mut config = ctx.file.covariates.unwrap_or_default();
    if let Some(s) = a.scale {
        config.scale = s;
    }
    if let Some(c) = a.min_coverage {
        config.min_coverage = c;
    }
    let daily = io::load_daily_climate_file(&a.climate)?;
    let built = build_seasonal_covariates(&daily, &config)?;
    let (table, lag, dropped_response) = match &a.series {
        Some(path) => {
            let ys = io::load_ordinal_series(path, None)?;
            let aligned = align(&ys, &built.table, a.lag)?;
            let rows = (0..aligned.years.len())
                .map(|t| aligned.covariates.row(t).iter().map(|&v| Some(v)).collect())
                .collect();
            (
                CovariateTable {
                    years: aligned.years.clone(),
                    names: built.table.names.clone(),
                    rows,
                },
                Some(a.lag),
                aligned.dropped_years,
            )
        }
        None => (built.table.clone(), None, Vec::new()),
    };
    match ctx.format {
        Format::Text => {
            let mut buf = Vec::new();
            io::write_covariate_table(&mut buf, &table)?;
            Ok(String::from_utf8(buf)?)
        }
        Format::Json => to_json(&CovariateReport {
            scale: config.scale,
            min_coverage: config.min_coverage,
            lag,
            columns: &table.names,
            years: &table.years,
            rows: &table.rows,
            dropped_climate_years: &built.dropped,
            dropped_response_years: &dropped_response,
        }),
    }
}

fn read_candidates(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            l.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect()
        })
        .collect())
}

fn cmd_search(ctx: &RunContext, a: &SearchArgs) -> Result<String> {
    let d = &a.data;
    let data = load_data(&d.series, d.covariates.as_deref(), d.columns.as_deref(), d.lag, d.k)?;
    let candidates = match &a.candidates {
        Some(p) => read_candidates(p)?,
        None => {
            enumerate_candidates(data.covariates.column_names(), a.max_covariates).map_err(|e| usage(e.to_string()))?
        }
    };
    let report = search_models(
        &data.series,
        &data.covariates,
        &candidates,
        a.q,
        a.alpha,
        &ctx.fit_config(&a.fit),
    )
    .map_err(|e| match e {
        AcarError::InvalidInput(m) => usage(m),
        other => other.into(),
    })?;
    match ctx.format {
        Format::Json => to_json(&report),
        Format::Text => Ok(search_text(&report)),
    }
}

fn search_text(r: &ModelSearchReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} candidates, {} eligible", r.candidates.len(), r.ranking.len());
    for &i in &r.ranking {
        let c = &r.candidates[i];
        let _ = writeln!(
            out,
            "#{:<4} significant = {:<2} AIC = {:<10} portmanteau p = {:<8} [{}]",
            c.index,
            c.significant_covariates,
            fmt_opt(c.aic),
            fmt_opt(c.portmanteau_p),
            c.columns.join(", ")
        );
    }
    match r.selected_candidate() {
        Some(c) => {
            let _ = writeln!(out, "selected #{}: [{}]", c.index, c.columns.join(", "));
        }
        None => out.push_str("no candidate passed the filters\n"),
    }
    out
}

/// Sets the worker count from `ACAR_THREADS` when present.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ACAR_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| usage(format!("ACAR_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            bail!(usage("ACAR_THREADS must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| anyhow!("cannot configure threads: {e}"))?;
    }
    Ok(())
}
