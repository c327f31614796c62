use std::time::Instant;

use rayon::prelude::*;

use super::config::{BaseSource, ConfigError, ExperimentConfig, ExperimentKind};
use super::{records_table, Cell, HarnessError, RunRecord, Table};
use crate::bounds::{empirical_constant, lift_bound_optimized, OptimizedBound};
use crate::lift::{build_graph_lift, build_lift, center_graph_lift, DENSE_LIMIT};
use crate::model::{clique_union_padded, BaseMatrix, GraphSpec};
use crate::moments::{
    check_prop_compare_with, check_y_lower_bound, exact_trace_moment, mc_trace_moment, CheckOutcome, Evaluation,
    MomentError, MC_BAND,
};
use crate::rng::RngState;
use crate::spectral::{
    default_max_iter, full_spectrum_dense, new_eigenvalue_norm, new_eigenvalue_norm_dense, remove_spectrum,
    spectral_norm_dense, spectral_norm_iterative, NewEigenMethod,
};
use crate::stats::mean_stderr;

/// Lifts up to this dimension get a dense norm in `mc_norm`; larger ones use Lanczos.
pub const MC_DENSE_LIMIT: usize = 1024;
/// Tolerance for the spectrum-containment audit.
pub const CONTAINMENT_TOL: f64 = 1e-8;
/// Tolerance for the removal-versus-centered audit.
pub const IDENTITY_TOL: f64 = 1e-6;

/// What every experiment produces: a summary table, per-trial records (empty
/// for enumeration experiments) and whether its gate passed.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub table: Table,
    pub records: Vec<RunRecord>,
    pub gate_ok: bool,
}

impl ExperimentOutput {
    pub fn records_table(&self) -> Table {
        records_table(&self.records)
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, HarnessError> {
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| HarnessError::Pool(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs `f` once per trial on stream `trial_index`, returning records in trial order.
fn run_trials<F>(cfg: &ExperimentConfig, group: &str, statistic: &str, f: F) -> Result<Vec<RunRecord>, HarnessError>
where
    F: Fn(&mut RngState) -> Result<f64, HarnessError> + Sync,
{
    (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            let start = cfg.timing.then(Instant::now);
            let mut rng = RngState::new(cfg.master_seed, t);
            let value = f(&mut rng)?;
            Ok(RunRecord {
                group: group.to_string(),
                trial_index: t,
                stream_id: t,
                statistic: statistic.to_string(),
                value,
                wall_time_ms: start.map(|s| s.elapsed().as_secs_f64() * 1e3),
            })
        })
        .collect()
}

fn values(records: &[RunRecord]) -> Vec<f64> {
    records.iter().map(|r| r.value).collect()
}

fn base_of(cfg: &ExperimentConfig) -> Result<&BaseSource, HarnessError> {
    cfg.base.as_ref().ok_or_else(|| ConfigError::Missing("base".into()).into())
}

fn bad_base(msg: String) -> HarnessError {
    ConfigError::BadValue { line: None, field: "base".into(), msg }.into()
}

/// Fitted C at each ε; 0 when the first term alone already covers the observation.
fn fitted_constants(
    cfg: &ExperimentConfig,
    observed: f64,
    sigma: f64,
    sigma_star: f64,
    k: usize,
    n: usize,
) -> Result<Vec<f64>, HarnessError> {
    cfg.eps
        .iter()
        .map(|&e| {
            if sigma_star == 0.0 {
                return Ok(0.0);
            }
            Ok(empirical_constant(observed, sigma, sigma_star, k, n, e)?.value())
        })
        .collect()
}

fn fmt_param(x: f64) -> String {
    format!("{x}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct McNormSummary {
    pub k: usize,
    pub n: usize,
    pub sigma: f64,
    pub sigma_star: f64,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Optimized lift bound at each configured C.
    pub bounds: Vec<OptimizedBound>,
    /// Fitted C at each configured ε.
    pub empirical_c: Vec<f64>,
    pub gate_bound: f64,
    pub gate_ok: bool,
    pub records: Vec<RunRecord>,
}

/// Mean and standard error of ‖A^(k,π)‖ for each configured k.
pub fn run_mc_norm(cfg: &ExperimentConfig) -> Result<Vec<McNormSummary>, HarnessError> {
    let a = base_of(cfg)?.matrix().map_err(bad_base)?;
    let spread = a.spread();
    with_pool(cfg.threads, || {
        cfg.k
            .iter()
            .map(|&k| {
                let dist = resize_law(&cfg.dist, k)?;
                let records = run_trials(cfg, &format!("k={k}"), "spectral_norm", |rng| {
                    let lift = build_lift(&a, &dist, rng);
                    let dim = lift.dim();
                    if dim <= MC_DENSE_LIMIT {
                        Ok(spectral_norm_dense(&lift.to_dense()?)?)
                    } else {
                        let est = spectral_norm_iterative(
                            |x, y| lift.matvec_into(x, y).expect("dimensions agree"),
                            dim,
                            cfg.tol,
                            default_max_iter(dim),
                            rng,
                        );
                        Ok(est.require_converged()?)
                    }
                })?;
                let s = mean_stderr(&values(&records));
                let bounds = cfg
                    .c_values
                    .iter()
                    .map(|&c| lift_bound_optimized(spread.sigma, spread.sigma_star, k, a.n(), c))
                    .collect::<Result<Vec<_>, _>>()?;
                let gate_bound = lift_bound_optimized(spread.sigma, spread.sigma_star, k, a.n(), cfg.gate_c)?.value;
                Ok(McNormSummary {
                    k,
                    n: a.n(),
                    sigma: spread.sigma,
                    sigma_star: spread.sigma_star,
                    trials: cfg.trials,
                    mean: s.mean,
                    stderr: s.stderr,
                    bounds,
                    empirical_c: fitted_constants(cfg, s.mean, spread.sigma, spread.sigma_star, k, a.n())?,
                    gate_bound,
                    gate_ok: s.mean <= gate_bound,
                    records,
                })
            })
            .collect()
    })?
}

/// The configured law at block size `k`: families are re-instantiated, fixed-size laws must match.
fn resize_law(
    dist: &crate::distribution::LiftDistribution,
    k: usize,
) -> Result<crate::distribution::LiftDistribution, HarnessError> {
    use crate::distribution::LiftDistribution as D;
    let out = match dist {
        D::CenteredPermutation { .. } => D::centered_permutation(k)?,
        D::HaarOrthogonal { .. } => D::haar_orthogonal(k)?,
        D::HaarSpecialOrthogonal { .. } => D::haar_special_orthogonal(k)?,
        other if other.k() == k => other.clone(),
        other => {
            return Err(ConfigError::BadValue {
                line: None,
                field: "k".into(),
                msg: format!("{other} has fixed block size {}, not {k}", other.k()),
            }
            .into())
        }
    };
    Ok(out)
}

fn mc_norm_table(cfg: &ExperimentConfig, rows: &[McNormSummary]) -> Table {
    let mut cols: Vec<String> =
        ["k", "n", "sigma", "sigma_star", "trials", "mean", "stderr"].iter().map(|s| s.to_string()).collect();
    for c in &cfg.c_values {
        cols.push(format!("bound_opt_C{}", fmt_param(*c)));
        cols.push(format!("eps_star_C{}", fmt_param(*c)));
    }
    for e in &cfg.eps {
        cols.push(format!("empirical_C_eps{}", fmt_param(*e)));
    }
    cols.extend(["gate_C".to_string(), "gate_bound".into(), "gate_ok".into()]);
    let mut t = Table::new(cols);
    for r in rows {
        let mut row: Vec<Cell> = vec![
            r.k.into(),
            r.n.into(),
            r.sigma.into(),
            r.sigma_star.into(),
            r.trials.into(),
            r.mean.into(),
            r.stderr.into(),
        ];
        for b in &r.bounds {
            row.push(b.value.into());
            row.push(b.eps_star.into());
        }
        row.extend(r.empirical_c.iter().map(|&c| Cell::from(c)));
        row.extend([cfg.gate_c.into(), r.gate_bound.into(), r.gate_ok.into()]);
        t.push(row);
    }
    t
}

/// How one oracle row ended.
#[derive(Clone, Debug, PartialEq)]
pub enum RowStatus {
    Ok,
    Violated,
    /// Hypotheses not met or out of budget; excluded from aggregation.
    Skipped(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleRow {
    pub instance_id: String,
    pub p: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub mode: String,
    pub stderr_lhs: f64,
    pub stderr_rhs: f64,
    pub status: RowStatus,
}

impl OracleRow {
    fn from_outcome(id: String, p: usize, out: CheckOutcome) -> Self {
        Self {
            instance_id: id,
            p,
            lhs: out.lhs,
            rhs: out.rhs,
            mode: out.mode.as_str().into(),
            stderr_lhs: out.stderr_lhs,
            stderr_rhs: out.stderr_rhs,
            status: if out.ok { RowStatus::Ok } else { RowStatus::Violated },
        }
    }

    fn skipped(id: String, p: usize, reason: &MomentError) -> Self {
        Self {
            instance_id: id,
            p,
            lhs: f64::NAN,
            rhs: f64::NAN,
            mode: "skipped".into(),
            stderr_lhs: f64::NAN,
            stderr_rhs: f64::NAN,
            status: RowStatus::Skipped(skip_reason(reason)),
        }
    }

    pub fn ok(&self) -> bool {
        self.status == RowStatus::Ok
    }

    pub fn is_skipped(&self) -> bool {
        matches!(self.status, RowStatus::Skipped(_))
    }
}

fn skip_reason(e: &MomentError) -> String {
    match e {
        MomentError::SigmaStarTooLarge(_) => "SigmaStarTooLarge".into(),
        MomentError::BudgetExceeded { .. } => "BudgetExceeded".into(),
        MomentError::NotContractive(_) => "NotContractive".into(),
        MomentError::Dist(crate::distribution::DistError::NotCentered { .. }) => "NotCentered".into(),
        other => other.to_string(),
    }
}

fn is_skippable(e: &MomentError) -> bool {
    matches!(
        e,
        MomentError::SigmaStarTooLarge(_)
            | MomentError::BudgetExceeded { .. }
            | MomentError::NotContractive(_)
            | MomentError::Dist(crate::distribution::DistError::NotCentered { .. })
            | MomentError::Dist(crate::distribution::DistError::ContinuousSupport(_))
            | MomentError::Dist(crate::distribution::DistError::SupportTooLarge(_))
    )
}

fn instance_matrix(inst: &super::config::Instance) -> Result<BaseMatrix, HarnessError> {
    inst.base.matrix().map_err(|msg| ConfigError::BadValue { line: None, field: "instances".into(), msg }.into())
}

fn prop_rows(cfg: &ExperimentConfig, eval: Evaluation, prefix: &str) -> Result<Vec<OracleRow>, HarnessError> {
    let mut rows = Vec::new();
    for inst in &cfg.instances {
        let a = instance_matrix(inst)?;
        for &p in &cfg.p {
            let id = format!("{prefix}{}", inst.id);
            rows.push(match check_prop_compare_with(&a, &inst.dist, p, eval) {
                Ok(out) => OracleRow::from_outcome(id, p, out),
                Err(e) if is_skippable(&e) => OracleRow::skipped(id, p, &e),
                Err(e) => return Err(e.into()),
            });
        }
    }
    Ok(rows)
}

/// The moment comparison over the configured battery and every configured p.
/// Expectations are exact when enumerable, Monte Carlo otherwise.
pub fn run_prop_compare(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>, HarnessError> {
    let eval = Evaluation::ExactOrMonteCarlo { trials: cfg.trials, master_seed: cfg.master_seed };
    with_pool(cfg.threads, || prop_rows(cfg, eval, ""))?
}

/// Exact-mode comparison rows, Monte Carlo versus exact moment rows, and
/// the lower bound for Y moments at σ² ∈ {1, 2, 3}.
pub fn run_oracle_suite(cfg: &ExperimentConfig) -> Result<Vec<OracleRow>, HarnessError> {
    with_pool(cfg.threads, || {
        let mut rows = prop_rows(cfg, Evaluation::Exact, "prop_compare/")?;
        for inst in &cfg.instances {
            let a = instance_matrix(inst)?;
            for &p in &cfg.p {
                let id = format!("mc_vs_exact/{}", inst.id);
                let exact = match exact_trace_moment(&a, &inst.dist, p) {
                    Ok(v) => v,
                    Err(e) if is_skippable(&e) => {
                        rows.push(OracleRow::skipped(id, p, &e));
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                };
                let mc = mc_trace_moment(&a, &inst.dist, p, cfg.trials, cfg.master_seed)?;
                let ok = (mc.value - exact).abs() <= (MC_BAND * mc.stderr).max(1e-9 * exact.abs().max(1.0));
                rows.push(OracleRow {
                    instance_id: id,
                    p,
                    lhs: mc.value,
                    rhs: exact,
                    mode: "mc".into(),
                    stderr_lhs: mc.stderr,
                    stderr_rhs: 0.0,
                    status: if ok { RowStatus::Ok } else { RowStatus::Violated },
                });
            }
        }
        for sigma_sq in [1usize, 2, 3] {
            for &p in &cfg.p {
                let id = format!("y_lower_bound/sigma^2={sigma_sq}");
                match check_y_lower_bound((sigma_sq as f64).sqrt(), p) {
                    Ok(out) => rows.push(OracleRow::from_outcome(id, p, out)),
                    Err(e) if is_skippable(&e) => rows.push(OracleRow::skipped(id, p, &e)),
                    Err(e) => return Err(e.into()),
                }
            }
        }
        Ok(rows)
    })?
}

fn oracle_table(rows: &[OracleRow], with_status: bool) -> Table {
    let mut cols = vec!["instance_id", "p", "lhs", "rhs", "mode", "stderr_lhs", "stderr_rhs", "ok"];
    if with_status {
        cols.push("status");
    }
    let mut t = Table::new(cols);
    for r in rows {
        let mut row = vec![
            Cell::from(r.instance_id.as_str()),
            r.p.into(),
            r.lhs.into(),
            r.rhs.into(),
            r.mode.as_str().into(),
            r.stderr_lhs.into(),
            r.stderr_rhs.into(),
            r.ok().into(),
        ];
        if with_status {
            row.push(match &r.status {
                RowStatus::Ok => "ok".into(),
                RowStatus::Violated => "violated".into(),
                RowStatus::Skipped(why) => format!("skipped:{why}").into(),
            });
        }
        t.push(row);
    }
    t
}

fn oracle_gate(rows: &[OracleRow]) -> bool {
    rows.iter().filter(|r| !r.is_skipped()).all(OracleRow::ok)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CliqueScalingRow {
    /// Requested size.
    pub n: usize,
    /// Size actually built, padded up to a multiple of s.
    pub n_actual: usize,
    pub s: usize,
    pub delta: usize,
    pub trials: usize,
    pub mean_norm: f64,
    pub stderr: f64,
    /// mean_norm / √(ln n_actual)
    pub ratio_sqrt_log: f64,
    /// mean_norm / (ln n_actual)^{1/4}
    pub ratio_quarter_log: f64,
    pub records: Vec<RunRecord>,
}

/// Centered k-lift norms of a disjoint union of cliques of size ⌈√(ln n)⌉
/// across the configured n grid.
pub fn run_clique_scaling(cfg: &ExperimentConfig) -> Result<Vec<CliqueScalingRow>, HarnessError> {
    let k = *cfg.k.first().ok_or_else(|| ConfigError::Missing("k".into()))?;
    with_pool(cfg.threads, || {
        cfg.n_grid
            .iter()
            .map(|&n| {
                let (n_actual, s) = clique_union_padded(n);
                let g = GraphSpec::clique_union(n_actual, s)?;
                let records = run_trials(cfg, &format!("n={n}"), "centered_norm", |rng| {
                    let lift = build_graph_lift(&g, k, rng);
                    let mut best = 0.0f64;
                    for part in lift.component_lifts() {
                        best = best.max(spectral_norm_dense(&center_graph_lift(&part).to_dense()?)?);
                    }
                    Ok(best)
                })?;
                let st = mean_stderr(&values(&records));
                let ln = (n_actual as f64).ln();
                Ok(CliqueScalingRow {
                    n,
                    n_actual,
                    s,
                    delta: s - 1,
                    trials: cfg.trials,
                    mean_norm: st.mean,
                    stderr: st.stderr,
                    ratio_sqrt_log: st.mean / ln.sqrt(),
                    ratio_quarter_log: st.mean / ln.powf(0.25),
                    records,
                })
            })
            .collect()
    })?
}

/// The √(ln n) ratio varies by at most 2× while the (ln n)^{1/4} ratio strictly increases.
pub fn clique_scaling_gate(rows: &[CliqueScalingRow]) -> bool {
    let sq: Vec<f64> = rows.iter().map(|r| r.ratio_sqrt_log).collect();
    let max = sq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = sq.iter().cloned().fold(f64::INFINITY, f64::min);
    let spread_ok = rows.is_empty() || (min > 0.0 && max / min <= 2.0);
    let increasing = rows.windows(2).all(|w| w[1].ratio_quarter_log > w[0].ratio_quarter_log);
    spread_ok && increasing
}

fn clique_table(rows: &[CliqueScalingRow]) -> Table {
    let mut t = Table::new([
        "n",
        "n_actual",
        "s",
        "Delta",
        "trials",
        "mean_norm",
        "stderr",
        "mean_norm_over_sqrt_ln_n",
        "mean_norm_over_ln_n_quarter",
    ]);
    for r in rows {
        t.push(vec![
            r.n.into(),
            r.n_actual.into(),
            r.s.into(),
            r.delta.into(),
            r.trials.into(),
            r.mean_norm.into(),
            r.stderr.into(),
            r.ratio_sqrt_log.into(),
            r.ratio_quarter_log.into(),
        ]);
    }
    t
}

#[derive(Clone, Debug, PartialEq)]
pub struct KliftSweepRow {
    pub k: usize,
    pub n: usize,
    pub delta: usize,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    /// Optimized k-lift bound at each configured C.
    pub bounds: Vec<f64>,
    pub two_sqrt_delta: f64,
    pub friedman_ref: f64,
    /// Fitted C at each configured ε.
    pub empirical_c: Vec<f64>,
    /// spec(A) embeds in spec(A^(k)) on the audited trial.
    pub containment_ok: bool,
    /// Removal-based and centered new-eigenvalue norms agree on the audited trial.
    pub identity_ok: bool,
    pub gate_bound: f64,
    pub gate_ok: bool,
    pub records: Vec<RunRecord>,
}

/// New-eigenvalue norms of random k-lifts of the base graph for each configured k.
pub fn run_klift_sweep(cfg: &ExperimentConfig) -> Result<Vec<KliftSweepRow>, HarnessError> {
    let g = base_of(cfg)?.graph().map_err(bad_base)?;
    let n = g.n();
    let delta = g.max_degree();
    let sqrt_delta = (delta as f64).sqrt();
    if let Some(&k) = cfg.k.iter().find(|&&k| k * n > DENSE_LIMIT) {
        return Err(ConfigError::BadValue {
            line: None,
            field: "k".into(),
            msg: format!("k = {k} gives kn = {} above the dense limit {DENSE_LIMIT}", k * n),
        }
        .into());
    }
    with_pool(cfg.threads, || {
        cfg.k
            .iter()
            .map(|&k| {
                let records = run_trials(cfg, &format!("k={k}"), "new_eig_norm", |rng| {
                    let lift = build_graph_lift(&g, k, rng);
                    Ok(new_eigenvalue_norm(&lift, NewEigenMethod::Auto, rng)?)
                })?;
                let st = mean_stderr(&values(&records));

                let audited = build_graph_lift(&g, k, &mut RngState::new(cfg.master_seed, 0));
                let lifted = full_spectrum_dense(&audited.adjacency().to_dense()?)?;
                let base = full_spectrum_dense(g.adjacency().entries())?;
                let containment_ok = remove_spectrum(&lifted, &base, CONTAINMENT_TOL).is_ok();
                let removal = new_eigenvalue_norm_dense(&audited)?;
                let centered = spectral_norm_dense(&center_graph_lift(&audited).to_dense()?)?;
                let identity_ok = (removal - centered).abs() <= IDENTITY_TOL;

                let bounds = cfg
                    .c_values
                    .iter()
                    .map(|&c| Ok(lift_bound_optimized(sqrt_delta, 1.0, k, n, c)?.value))
                    .collect::<Result<Vec<_>, HarnessError>>()?;
                let gate_bound = lift_bound_optimized(sqrt_delta, 1.0, k, n, cfg.gate_c)?.value;
                Ok(KliftSweepRow {
                    k,
                    n,
                    delta,
                    trials: cfg.trials,
                    mean: st.mean,
                    stderr: st.stderr,
                    bounds,
                    two_sqrt_delta: 2.0 * sqrt_delta,
                    friedman_ref: 2.0 * (delta.max(1) as f64 - 1.0).sqrt(),
                    empirical_c: fitted_constants(cfg, st.mean, sqrt_delta, 1.0, k, n)?,
                    containment_ok,
                    identity_ok,
                    gate_bound,
                    gate_ok: st.mean <= gate_bound && containment_ok && identity_ok,
                    records,
                })
            })
            .collect()
    })?
}

fn klift_table(cfg: &ExperimentConfig, rows: &[KliftSweepRow]) -> Table {
    let mut cols: Vec<String> = ["k", "n", "Delta", "trials", "mean", "stderr"].iter().map(|s| s.to_string()).collect();
    for c in &cfg.c_values {
        cols.push(format!("bound_C{}", fmt_param(*c)));
    }
    cols.extend(["two_sqrt_delta".to_string(), "friedman_ref".into()]);
    for e in &cfg.eps {
        cols.push(format!("empirical_C_eps{}", fmt_param(*e)));
    }
    cols.extend(["containment_ok", "identity_ok", "gate_C", "gate_bound", "gate_ok"].map(String::from));
    let mut t = Table::new(cols);
    for r in rows {
        let mut row: Vec<Cell> =
            vec![r.k.into(), r.n.into(), r.delta.into(), r.trials.into(), r.mean.into(), r.stderr.into()];
        row.extend(r.bounds.iter().map(|&b| Cell::from(b)));
        row.extend([r.two_sqrt_delta.into(), r.friedman_ref.into()]);
        row.extend(r.empirical_c.iter().map(|&c| Cell::from(c)));
        row.extend([
            r.containment_ok.into(),
            r.identity_ok.into(),
            cfg.gate_c.into(),
            r.gate_bound.into(),
            r.gate_ok.into(),
        ]);
        t.push(row);
    }
    t
}

/// Dispatches on the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput, HarnessError> {
    Ok(match cfg.experiment {
        ExperimentKind::McNorm => {
            let rows = run_mc_norm(cfg)?;
            ExperimentOutput {
                table: mc_norm_table(cfg, &rows),
                gate_ok: rows.iter().all(|r| r.gate_ok),
                records: rows.into_iter().flat_map(|r| r.records).collect(),
            }
        }
        ExperimentKind::PropCompare => {
            let rows = run_prop_compare(cfg)?;
            ExperimentOutput { table: oracle_table(&rows, true), gate_ok: oracle_gate(&rows), records: Vec::new() }
        }
        ExperimentKind::OracleSuite => {
            let rows = run_oracle_suite(cfg)?;
            ExperimentOutput { table: oracle_table(&rows, false), gate_ok: oracle_gate(&rows), records: Vec::new() }
        }
        ExperimentKind::CliqueScaling => {
            let rows = run_clique_scaling(cfg)?;
            ExperimentOutput {
                table: clique_table(&rows),
                gate_ok: clique_scaling_gate(&rows),
                records: rows.into_iter().flat_map(|r| r.records).collect(),
            }
        }
        ExperimentKind::KliftSweep => {
            let rows = run_klift_sweep(cfg)?;
            ExperimentOutput {
                table: klift_table(cfg, &rows),
                gate_ok: rows.iter().all(|r| r.gate_ok),
                records: rows.into_iter().flat_map(|r| r.records).collect(),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::LiftDistribution;
    use crate::model::Generator;

    fn cfg(text: &str) -> ExperimentConfig {
        ExperimentConfig::parse(text).unwrap()
    }

    #[test]
    fn mc_norm_single_edge_rademacher_is_one() {
        let rows = run_mc_norm(&cfg("experiment = mc_norm\nbase = single_edge\ndist = rademacher\nk = 1\ntrials = 50"))
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert!((rows[0].mean - 1.0).abs() < 1e-14);
        assert!(rows[0].stderr < 1e-14);
        assert_eq!(rows[0].records.len(), 50);
        assert!(rows[0].gate_ok);
    }

    #[test]
    fn mc_norm_triangle_matches_enumeration() {
        // exact mean over the 8 joint outcomes
        let a = GraphSpec::complete(3).adjacency();
        let support = LiftDistribution::centered_permutation(2).unwrap().enumerate_support().unwrap();
        let mut exact = 0.0;
        for x in &support {
            for y in &support {
                for z in &support {
                    let mut d = nalgebra::DMatrix::<f64>::zeros(6, 6);
                    for (&(i, j), m) in [(0usize, 1usize), (0, 2), (1, 2)].iter().zip([&x.0, &y.0, &z.0]) {
                        for r in 0..2 {
                            for c in 0..2 {
                                d[(2 * i + r, 2 * j + c)] = a.get(i, j) * m[(r, c)];
                                d[(2 * j + c, 2 * i + r)] = a.get(i, j) * m[(r, c)];
                            }
                        }
                    }
                    exact += x.1 * y.1 * z.1 * spectral_norm_dense(&d).unwrap();
                }
            }
        }
        let rows = run_mc_norm(&cfg(
            "experiment = mc_norm\nbase = complete(3)\ndist = centered_permutation(2)\nk = 2\ntrials = 10000\nmaster_seed = 3",
        ))
        .unwrap();
        let r = &rows[0];
        assert!((r.mean - exact).abs() <= 5.0 * r.stderr.max(1e-15), "{} vs {exact}", r.mean);
    }

    #[test]
    fn mc_norm_zero_base() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("z.txt"), "symmetric 3\n").unwrap();
        std::fs::write(dir.path().join("c.cfg"), "experiment = mc_norm\nbase = z.txt\ntrials = 5\nk = 1").unwrap();
        let rows = run_mc_norm(&ExperimentConfig::from_file(&dir.path().join("c.cfg")).unwrap()).unwrap();
        assert_eq!(rows[0].mean, 0.0);
        assert_eq!(rows[0].empirical_c, vec![0.0]);
    }

    #[test]
    fn mc_norm_large_lift_uses_lanczos() {
        let c = cfg("experiment = mc_norm\nbase = complete(300)\ndist = centered_permutation(4)\nk = 4\ntrials = 2");
        let rows = run_mc_norm(&c).unwrap();
        assert!(rows[0].mean > 0.0 && rows[0].mean.is_finite());
    }

    #[test]
    fn mc_norm_rejects_fixed_size_mismatch() {
        assert!(
            run_mc_norm(&cfg("experiment = mc_norm\nbase = petersen\ndist = rademacher\nk = 3\ntrials = 2")).is_err()
        );
    }

    #[test]
    fn prop_compare_default_battery_passes() {
        let rows = run_prop_compare(&cfg("experiment = prop_compare")).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.ok() && r.mode == "exact"));
        let first = &rows[0];
        assert_eq!((first.lhs, first.rhs), (2.0, 2.0));
    }

    #[test]
    fn prop_compare_marks_hypothesis_violations() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("big.txt"), "symmetric 2\n0 1 2\n").unwrap();
        std::fs::write(
            dir.path().join("c.cfg"),
            "experiment = prop_compare\ninstances = big.txt:rademacher, single_edge:rademacher\np = 1",
        )
        .unwrap();
        let c = ExperimentConfig::from_file(&dir.path().join("c.cfg")).unwrap();
        let out = run_experiment(&c).unwrap();
        let rows = run_prop_compare(&c).unwrap();
        assert_eq!(rows[0].status, RowStatus::Skipped("SigmaStarTooLarge".into()));
        assert!(rows[1].ok());
        assert!(out.gate_ok);
    }

    #[test]
    fn empty_battery_succeeds() {
        let out = run_experiment(&cfg("experiment = prop_compare\ninstances =")).unwrap();
        assert!(out.table.rows.is_empty());
        assert!(out.gate_ok);
    }

    #[test]
    fn oracle_suite_small() {
        let out = run_experiment(&cfg("experiment = oracle_suite\ntrials = 2000\np = 1, 2")).unwrap();
        assert_eq!(out.table.columns, ["instance_id", "p", "lhs", "rhs", "mode", "stderr_lhs", "stderr_rhs", "ok"]);
        assert_eq!(out.table.rows.len(), 6 + 6 + 6);
        assert!(out.gate_ok, "{}", out.table.to_csv_string());
    }

    #[test]
    fn clique_scaling_small_grid() {
        let rows = run_clique_scaling(&cfg("experiment = clique_scaling\nn_grid = 64\ntrials = 20")).unwrap();
        assert_eq!((rows[0].n, rows[0].n_actual, rows[0].s, rows[0].delta), (64, 66, 3, 2));
        assert!(rows[0].mean_norm > 0.0);
    }

    #[test]
    fn klift_single_edge_is_one() {
        let rows = run_klift_sweep(&cfg("experiment = klift_sweep\nbase = single_edge\nk = 2\ntrials = 30")).unwrap();
        assert!((rows[0].mean - 1.0).abs() < 1e-12);
        assert!(rows[0].containment_ok && rows[0].identity_ok);
    }

    #[test]
    fn klift_k1_is_zero() {
        let rows = run_klift_sweep(&cfg("experiment = klift_sweep\nbase = petersen\nk = 1\ntrials = 5")).unwrap();
        assert_eq!(rows[0].mean, 0.0);
        assert!(rows[0].records.iter().all(|r| r.value == 0.0));
    }

    #[test]
    fn klift_rejects_oversized_lifts() {
        let c = cfg("experiment = klift_sweep\nbase = complete(100)\nk = 50\ntrials = 2");
        assert!(matches!(run_klift_sweep(&c), Err(HarnessError::Config(_))));
    }

    #[test]
    fn sequential_reruns_are_byte_identical_and_parallel_agrees() {
        let text = "experiment = klift_sweep\nbase = petersen\nk = 2, 3\ntrials = 40\nmaster_seed = 11\nthreads = 1";
        let a = run_experiment(&cfg(text)).unwrap();
        let b = run_experiment(&cfg(text)).unwrap();
        assert_eq!(a.table.to_csv_string(), b.table.to_csv_string());
        assert_eq!(a.records_table().to_csv_string(), b.records_table().to_csv_string());
        let mut par = cfg(text);
        par.threads = 4;
        let c = run_experiment(&par).unwrap();
        for (x, y) in a.table.reals("mean").unwrap().iter().zip(c.table.reals("mean").unwrap()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn generators_round_trip_through_instances() {
        let g: Generator = "clique_union(6,3)".parse().unwrap();
        assert_eq!(BaseSource::Generator(g).graph().unwrap().n(), 6);
    }
}
