//! Configuration-driven experiments: one set of metric rows per ε grid point,
//! optional log-log slope fits, and acceptance checks read from the config.

pub mod config;
pub mod output;
pub mod verify;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;

pub use config::{Acceptance, BudgetM, ExperimentConfig, ExperimentKind, Problem, SizeD, SizeN, EXPERIMENT_NAMES};
pub use output::{fit_log_slope, read_csv, read_csv_file, write_csv, write_csv_file, ResultRow, SlopeFit};
pub use verify::{verify, Fault, VerifyCheck, VerifyReport};

use crate::attacks::{fingerprint_statistic_cvx_sums, fingerprint_statistic_scvx_sums, run_recall_game, AdversarySpec};
use crate::error::{Error, Result};
use crate::hypercube::{sample_prior_cvx, sample_prior_scvx, DenseVector, ProductDistribution, SignSums};
use crate::info::{
    cmi_gen_bound, cmi_proxy_exact_masks, correlation_set, exact_cmi_full, exact_cmi_per_grid, mean_and_stderr,
    proxy_from_counts, DistributionSource, Flavor, MAX_ENUMERATION_N, MAX_GRID_BITS,
};
use crate::learners::{Learner, LearnerKind, LearnerSpec};
use crate::rng::{SeedSpec, Stream};
use crate::sco::{excess_risk, ProblemKind};

/// One resolved grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub index: usize,
    pub eps: f64,
    pub n: usize,
    pub d: usize,
    pub learner: LearnerSpec,
    pub seeds: SeedSpec,
}

/// Resolves `n`, `d`, the learner budget and the per-point seeds.
pub fn resolve_points(cfg: &ExperimentConfig) -> Result<Vec<Point>> {
    cfg.eps_grid
        .iter()
        .enumerate()
        .map(|(index, &eps)| {
            let m = match cfg.learner_m {
                BudgetM::Fixed(m) => Some(m),
                _ => None,
            };
            let mut learner = LearnerSpec::from_name(&cfg.learner, eps, cfg.delta, m)?;
            let n = cfg.n.resolve(eps, || learner.nominal_n())?;
            if cfg.learner_m == BudgetM::N {
                learner.m = Some(n);
            }
            if let Some(b) = learner.budget()? {
                if b > n {
                    return Err(Error::Config(format!("learner budget {b} exceeds n = {n} at eps {eps}")));
                }
            }
            let d = cfg.resolve_d(n)?;
            Ok(Point { index, eps, n, d, learner, seeds: SeedSpec::new(cfg.seed).derive("point", index as u64) })
        })
        .collect()
}

/// A metric value at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Metric {
    pub name: &'static str,
    pub value: f64,
    pub stderr: f64,
}

fn metric(name: &'static str, (value, stderr): (f64, f64)) -> Metric {
    Metric { name, value, stderr }
}

fn rate(hits: usize, trials: usize) -> (f64, f64) {
    let p = hits as f64 / trials as f64;
    (p, (p * (1.0 - p) / trials as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcceptCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub rows: Vec<ResultRow>,
    pub checks: Vec<AcceptCheck>,
}

impl RunReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    /// Console summary: the rows, then one line per acceptance check.
    pub fn summary(&self) -> String {
        let mut s = format!("experiment {}\n", self.experiment.name());
        for r in &self.rows {
            let _ = writeln!(s, "  {}", describe_row(r));
        }
        for c in &self.checks {
            let _ = writeln!(s, "[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        s
    }
}

fn describe_row(r: &ResultRow) -> String {
    let mut s = String::new();
    if let Some(e) = r.eps {
        let _ = write!(s, "eps={e} ");
    }
    if let (Some(n), Some(d)) = (r.n, r.d) {
        let _ = write!(s, "n={n} d={d} ");
    }
    let _ = write!(s, "{} = {:.6} ± {:.6}", r.metric, r.value, r.stderr);
    s
}

/// Runs every grid point and checks the config's acceptance thresholds.
pub fn run(cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    let rows = if cfg.experiment == ExperimentKind::LemmaVerify {
        verify_rows(cfg, &verify(cfg.seed, None)?)
    } else {
        point_rows(cfg)?
    };
    let checks = acceptance(cfg, &rows);
    Ok(RunReport { experiment: cfg.experiment, rows, checks })
}

/// [`run`] plus a `slope:<metric>` row for every metric that is positive at
/// every grid point. Needs at least three distinct ε.
pub fn sweep(cfg: &ExperimentConfig) -> Result<RunReport> {
    let mut distinct = cfg.eps_grid.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 || cfg.experiment == ExperimentKind::LemmaVerify {
        return Err(Error::DegenerateGrid(format!(
            "sweep needs at least 3 distinct eps values, got {}",
            distinct.len()
        )));
    }
    let mut report = run(cfg)?;
    let mut slopes = Vec::new();
    for (name, (eps, values)) in series(&report.rows) {
        if let Ok(fit) = fit_log_slope(&eps, &values) {
            slopes.push(ResultRow {
                experiment: cfg.experiment.name().into(),
                eps: None,
                delta: cfg.delta,
                n: None,
                d: None,
                trials: cfg.trials,
                metric: format!("slope:{name}"),
                value: fit.slope,
                stderr: fit.stderr,
                seed: cfg.seed,
            });
        }
    }
    report.rows.extend(slopes);
    Ok(report)
}

/// Per-metric `(ε, value)` series of point rows, in row order.
fn series(rows: &[ResultRow]) -> BTreeMap<String, (Vec<f64>, Vec<f64>)> {
    let mut out: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        if let Some(e) = r.eps {
            let entry = out.entry(r.metric.clone()).or_default();
            entry.0.push(e);
            entry.1.push(r.value);
        }
    }
    out
}

fn acceptance(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Vec<AcceptCheck> {
    let mut checks = Vec::new();
    if cfg.experiment == ExperimentKind::LemmaVerify {
        let failed: Vec<&str> =
            rows.iter().filter(|r| r.metric.ends_with(":pass") && r.value != 1.0).map(|r| r.metric.as_str()).collect();
        checks.push(AcceptCheck {
            name: "lemma suite".into(),
            pass: failed.is_empty(),
            detail: if failed.is_empty() { "all checks pass".into() } else { format!("failed: {}", failed.join(", ")) },
        });
    }
    let series = series(rows);
    let bounds = cfg.accept.min.iter().map(|(k, v)| (k, *v, true)).chain(cfg.accept.max.iter().map(|(k, v)| (k, *v, false)));
    for (name, bound, is_min) in bounds {
        let label = format!("{name} {} {bound}", if is_min { ">=" } else { "<=" });
        let check = match series.get(name) {
            None => AcceptCheck { name: label, pass: false, detail: "metric not produced".into() },
            Some((eps, values)) => {
                let bad: Vec<String> = eps
                    .iter()
                    .zip(values)
                    .filter(|(_, &v)| if is_min { !(v >= bound) } else { !(v <= bound) })
                    .map(|(e, v)| format!("eps={e}: {v:.6}"))
                    .collect();
                AcceptCheck {
                    name: label,
                    pass: bad.is_empty(),
                    detail: if bad.is_empty() { format!("{} points ok", values.len()) } else { bad.join("; ") },
                }
            }
        };
        checks.push(check);
    }
    if let Some(name) = &cfg.accept.slope_metric {
        let lo = cfg.accept.slope_min.unwrap_or(f64::NEG_INFINITY);
        let hi = cfg.accept.slope_max.unwrap_or(f64::INFINITY);
        let label = format!("slope of log({name}) vs log(1/eps) in [{lo}, {hi}]");
        let check = match series.get(name).map(|(e, v)| fit_log_slope(e, v)) {
            None => AcceptCheck { name: label, pass: false, detail: "metric not produced".into() },
            Some(Err(e)) => AcceptCheck { name: label, pass: false, detail: e.to_string() },
            Some(Ok(fit)) => AcceptCheck {
                name: label,
                pass: fit.slope >= lo && fit.slope <= hi,
                detail: format!("slope {:.4} ± {:.4}", fit.slope, fit.stderr),
            },
        };
        checks.push(check);
    }
    checks
}

/// Rows of a verify report: each check value plus a `:pass` flag row.
pub fn verify_rows(cfg: &ExperimentConfig, report: &VerifyReport) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for c in &report.checks {
        for (suffix, value) in [("", c.value), (":pass", if c.pass { 1.0 } else { 0.0 })] {
            rows.push(ResultRow {
                experiment: cfg.experiment.name().into(),
                eps: None,
                delta: cfg.delta,
                n: c.n,
                d: c.d,
                trials: c.trials,
                metric: format!("{}{suffix}", c.name),
                value,
                stderr: 0.0,
                seed: cfg.seed,
            });
        }
    }
    rows
}

fn point_rows(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for p in resolve_points(cfg)? {
        for m in point_metrics(cfg, &p)? {
            rows.push(ResultRow {
                experiment: cfg.experiment.name().into(),
                eps: Some(p.eps),
                delta: cfg.delta,
                n: Some(p.n),
                d: Some(p.d),
                trials: cfg.trials,
                metric: m.name.into(),
                value: m.value,
                stderr: m.stderr,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

/// Metrics of one grid point.
pub fn point_metrics(cfg: &ExperimentConfig, p: &Point) -> Result<Vec<Metric>> {
    let cvx = cfg.experiment.is_cvx(cfg.problem);
    match cfg.experiment {
        ExperimentKind::CmiTradeoffCvx | ExperimentKind::CmiTradeoffScvx => tradeoff(cfg, p, cvx),
        ExperimentKind::RecallGameCvx | ExperimentKind::RecallGameScvx => recall_game(cfg, p, cvx),
        ExperimentKind::FingerprintCheck => fingerprint(cfg, p, cvx),
        ExperimentKind::UpperBoundCheck => upper_bound(cfg, p, cvx),
        ExperimentKind::ExactCmiDemo => exact_demo(cfg, p, cvx),
        ExperimentKind::LemmaVerify => Err(Error::Config("lemma-verify has no grid points".into())),
    }
}

fn problem_kind(cvx: bool) -> ProblemKind {
    if cvx {
        ProblemKind::cvx()
    } else {
        ProblemKind::scvx()
    }
}

fn draw_prior(cvx: bool, eps: f64, d: usize, rng: &mut Stream) -> Result<ProductDistribution> {
    if cvx {
        sample_prior_cvx(eps, d, rng)
    } else {
        sample_prior_scvx(d, rng)
    }
}

fn source(cvx: bool, eps: f64, d: usize) -> DistributionSource {
    if cvx {
        DistributionSource::PriorCvx { eps, dim: d }
    } else {
        DistributionSource::PriorScvx { dim: d }
    }
}

fn flavor(cfg: &ExperimentConfig, cvx: bool, eps: f64) -> Flavor {
    if cvx {
        Flavor::Cvx { eps }
    } else {
        Flavor::Scvx { beta: cfg.beta }
    }
}

fn tradeoff(cfg: &ExperimentConfig, p: &Point, cvx: bool) -> Result<Vec<Metric>> {
    let src = source(cvx, p.eps, p.d);
    let fl = flavor(cfg, cvx, p.eps);
    let kind = problem_kind(cvx);
    let per_trial: Vec<(usize, bool, f64)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let ss = src.trial_supersample(p.n, &p.seeds, t)?;
            let theta = p.learner.fit(&ss.training_set())?;
            let set = correlation_set(fl, &theta, &ss)?;
            Ok((set.len(), set.ghost_ok, excess_risk(&kind, &theta, ss.distribution())?))
        })
        .collect::<Result<_>>()?;
    let counts: Vec<(usize, bool)> = per_trial.iter().map(|&(s, g, _)| (s, g)).collect();
    let proxy = proxy_from_counts(&counts, p.n);
    let excess: Vec<f64> = per_trial.iter().map(|t| t.2).collect();
    let fails = counts.iter().filter(|c| !c.1).count();
    Ok(vec![
        metric("cmi_proxy", (proxy.cmi.value, proxy.cmi.stderr)),
        metric("iscmi_proxy", (proxy.iscmi.value, proxy.iscmi.stderr)),
        metric("mean_set_size", (proxy.mean_set_size, proxy.iscmi.stderr)),
        metric("ghost_failure_rate", rate(fails, cfg.trials)),
        metric("mean_excess", mean_and_stderr(&excess)),
        metric("gen_bound", (cmi_gen_bound(1.0, 1.0, proxy.cmi.value, p.n)?, 0.0)),
    ])
}

fn recall_game(cfg: &ExperimentConfig, p: &Point, cvx: bool) -> Result<Vec<Metric>> {
    let adversary = AdversarySpec::from_name(&cfg.adversary, p.eps, Some(cfg.beta))?;
    let outcomes: Vec<(bool, usize)> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let dist = draw_prior(cvx, p.eps, p.d, &mut p.seeds.stream("prior", t))?;
            let g = run_recall_game(&p.learner, &adversary, &dist, p.n, &p.seeds, t)?;
            Ok((g.soundness_violated, g.recall))
        })
        .collect::<Result<_>>()?;
    let violations = outcomes.iter().filter(|o| o.0).count();
    let recall: Vec<f64> = outcomes.iter().map(|o| o.1 as f64).collect();
    Ok(vec![metric("soundness_rate", rate(violations, cfg.trials)), metric("mean_recall", mean_and_stderr(&recall))])
}

fn mean_based(kind: &LearnerKind) -> bool {
    match kind {
        LearnerKind::MeanErm
        | LearnerKind::SubsampleMean
        | LearnerKind::NormalizedMean
        | LearnerKind::SubsampleNormalizedMean => true,
        LearnerKind::Projected(inner) => mean_based(inner),
        _ => false,
    }
}

/// Draws `n` training points from `dist` and fits. Learners that only see
/// the sample mean are fed binomial sign sums instead of points.
fn fit_trial(learner: &LearnerSpec, dist: &ProductDistribution, n: usize, rng: &mut Stream) -> Result<(DenseVector, SignSums)> {
    if mean_based(&learner.kind) {
        let head_len = learner.budget()?.unwrap_or(n);
        let head = dist.sample_sums(head_len, rng);
        let theta = learner.fit_sums(&head)?;
        let all = if n > head_len { head.merge(&dist.sample_sums(n - head_len, rng))? } else { head };
        Ok((theta, all))
    } else {
        let pts = dist.sample_points(n, rng);
        let theta = learner.fit(&pts)?;
        Ok((theta, SignSums::from_points(&pts)?))
    }
}

fn fingerprint(cfg: &ExperimentConfig, p: &Point, cvx: bool) -> Result<Vec<Metric>> {
    let stats: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let dist = draw_prior(cvx, p.eps, p.d, &mut p.seeds.stream("prior", t))?;
            let (theta, sums) = fit_trial(&p.learner, &dist, p.n, &mut p.seeds.stream("fp-sample", t))?;
            if cvx {
                fingerprint_statistic_cvx_sums(&theta, &sums, &dist, p.eps)
            } else {
                fingerprint_statistic_scvx_sums(&theta, &sums, &dist)
            }
        })
        .collect::<Result<_>>()?;
    let bound = if cvx { 6.0 * p.eps - 4.0 * cfg.delta } else { 1.0 / 3.0 - 2.0 * p.eps - 3.0 * cfg.delta };
    Ok(vec![metric("fp_statistic", mean_and_stderr(&stats)), metric("fp_lower_bound", (bound, 0.0))])
}

fn upper_bound(cfg: &ExperimentConfig, p: &Point, cvx: bool) -> Result<Vec<Metric>> {
    let kind = problem_kind(cvx);
    let excess: Vec<f64> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let dist = draw_prior(cvx, p.eps, p.d, &mut p.seeds.stream("prior", t))?;
            let (theta, _) = fit_trial(&p.learner, &dist, p.n, &mut p.seeds.stream("ub-sample", t))?;
            excess_risk(&kind, &theta, &dist)
        })
        .collect::<Result<_>>()?;
    let failures = excess.iter().filter(|&&e| e > p.eps).count();
    Ok(vec![metric("failure_rate", rate(failures, cfg.trials)), metric("mean_excess", mean_and_stderr(&excess))])
}

fn exact_demo(cfg: &ExperimentConfig, p: &Point, cvx: bool) -> Result<Vec<Metric>> {
    if p.n > MAX_ENUMERATION_N {
        return Err(Error::Config(format!("exact-cmi-demo needs n <= {MAX_ENUMERATION_N}, got {}", p.n)));
    }
    let src = source(cvx, p.eps, p.d);
    let per_grid = exact_cmi_per_grid(&p.learner, &src, p.n, cfg.trials, &p.seeds)?;
    let proxy = cmi_proxy_exact_masks(&p.learner, &src, p.n, cfg.trials, flavor(cfg, cvx, p.eps), &p.seeds)?;
    let mut out = vec![
        metric("exact_cmi", mean_and_stderr(&per_grid)),
        metric("exact_cmi_max_grid", (per_grid.iter().cloned().fold(0.0, f64::max), 0.0)),
        metric("cmi_proxy", (proxy.value, proxy.stderr)),
    ];
    if let Some(m) = p.learner.budget()? {
        out.push(metric("structural_cap", (m.min(p.n) as f64, 0.0)));
    }
    if 2 * p.n * p.d <= MAX_GRID_BITS {
        let full = exact_cmi_full(&p.learner, &ProductDistribution::uniform(p.d)?, p.n)?;
        out.push(metric("exact_cmi_uniform", (full.value, 0.0)));
    }
    Ok(out)
}

/// Text summary of a results file: every row, then refitted slopes for each
/// `(experiment, metric)` series with at least three grid points.
pub fn report(rows: &[ResultRow]) -> String {
    let mut s = String::new();
    let mut by_exp: BTreeMap<&str, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        by_exp.entry(r.experiment.as_str()).or_default().push(r);
    }
    for (exp, rs) in by_exp {
        let _ = writeln!(s, "experiment {exp} (seed {})", rs[0].seed);
        for r in &rs {
            let _ = writeln!(s, "  {}", describe_row(r));
        }
        let owned: Vec<ResultRow> = rs.iter().map(|r| (*r).clone()).collect();
        for (name, (eps, values)) in series(&owned) {
            if let Ok(fit) = fit_log_slope(&eps, &values) {
                let _ = writeln!(s, "  fit {name}: slope {:.4} ± {:.4} over {} points", fit.slope, fit.stderr, fit.points);
            }
        }
    }
    s
}
