//! Trace-moment machinery for lifts: exact expectations of Tr[(A^(k,π))^{2p}]
//! by walk expansion, Monte Carlo estimates, moments of the auxiliary matrix
//! Y_r, and the comparison inequalities between them.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use thiserror::Error;

use crate::distribution::{DistError, LiftDistribution};
use crate::lift::{build_lift, LiftedBlockMatrix};
use crate::model::BaseMatrix;
use crate::rng::RngState;
use crate::shapes::{
    enumerate_closed_shapes, enumerate_shapes, falling_factorial_from, for_each_cycle_of_shape, path_weight, Cycle,
    CycleShape, ShapeError,
};
use crate::stats::mean_stderr;

/// Elementary-operation budget for exact enumeration.
pub const DEFAULT_BUDGET: f64 = 1e8;
/// Slack for exact-mode inequality checks.
pub const EXACT_TOL: f64 = 1e-9;
/// Width, in standard errors, of Monte Carlo comparison bands.
pub const MC_BAND: f64 = 5.0;
/// Above this dimension Monte Carlo traces use repeated matvecs instead of dense powers.
const DENSE_TRACE_LIMIT: usize = 512;

#[derive(Debug, Error, PartialEq)]
pub enum MomentError {
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("estimated {estimated:.3e} operations exceeds the budget of {budget:.3e}")]
    BudgetExceeded { estimated: f64, budget: f64 },
    #[error("σ* = {0} exceeds 1")]
    SigmaStarTooLarge(f64),
    #[error("{0} has atoms of spectral norm above 1")]
    NotContractive(String),
    #[error("at least 2 trials are required, got {0}")]
    TooFewTrials(usize),
    #[error("cycle length {len} does not match 2p = {expected}")]
    CycleLength { len: usize, expected: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Exact,
    MonteCarlo,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Exact => "exact",
            Mode::MonteCarlo => "mc",
        }
    }
}

/// A moment value; `stderr` is zero for exact values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentEstimate {
    pub value: f64,
    pub stderr: f64,
    pub mode: Mode,
}

impl MomentEstimate {
    fn exact(value: f64) -> Self {
        Self { value, stderr: 0.0, mode: Mode::Exact }
    }
}

/// One side-by-side inequality check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckOutcome {
    pub lhs: f64,
    pub rhs: f64,
    pub stderr_lhs: f64,
    pub stderr_rhs: f64,
    pub mode: Mode,
    pub ok: bool,
}

/// ⌈x⌉ for a value that should be an integer up to rounding; `2 + 4e-16`
/// counts as 2.
pub fn ceil_tolerant(x: f64) -> usize {
    (x - 1e-12 * x.abs().max(1.0)).ceil().max(0.0) as usize
}

/// Σ over Γ_{s,u} of the path weight, against σ^{2(m(s)−1)}.
pub fn check_path_weight_bound(a: &BaseMatrix, s: &CycleShape, u: usize) -> Result<CheckOutcome, MomentError> {
    let spread = a.spread();
    if spread.sigma_star > 1.0 {
        return Err(MomentError::SigmaStarTooLarge(spread.sigma_star));
    }
    let mut lhs = 0.0;
    let mut err = None;
    for_each_cycle_of_shape(s, u, a.n(), |w| {
        let c = Cycle::new(w.to_vec()).expect("shape length is even");
        match path_weight(a, &c) {
            Ok(x) => lhs += x,
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e.into());
    }
    let rhs = a.sigma_squared().powi(s.span() as i32 - 1);
    Ok(CheckOutcome { lhs, rhs, stderr_lhs: 0.0, stderr_rhs: 0.0, mode: Mode::Exact, ok: lhs <= rhs + 1e-12 })
}

/// Per-shape data for the walk expansion: the step sequence expressed as
/// (distinct edge index, direction from lower to higher label).
struct ShapeSteps {
    shape: CycleShape,
    edges: Vec<(usize, usize)>,
    steps: Vec<(usize, bool)>,
}

impl ShapeSteps {
    fn new(shape: &CycleShape) -> Self {
        let labels = shape.labels();
        let len = labels.len();
        let mut edges: Vec<(usize, usize)> = Vec::new();
        let mut steps = Vec::with_capacity(len);
        for j in 0..len {
            let (x, y) = (labels[j] - 1, labels[(j + 1) % len] - 1);
            let e = (x.min(y), x.max(y));
            let idx = match edges.iter().position(|f| *f == e) {
                Some(i) => i,
                None => {
                    edges.push(e);
                    edges.len() - 1
                }
            };
            steps.push((idx, x < y));
        }
        Self { shape: shape.clone(), edges, steps }
    }
}

/// E Tr[∏ Π_{u_j u_{j+1}}] for a step sequence over `d` independent edges,
/// where step `(e, transposed)` contributes Π_e or Π_eᵀ.
fn expected_trace_of_product(support: &[(DMatrix<f64>, f64)], k: usize, d: usize, steps: &[(usize, bool)]) -> f64 {
    let s = support.len();
    let mut choice = vec![0usize; d];
    let mut total = 0.0;
    loop {
        let prob: f64 = choice.iter().map(|&c| support[c].1).product();
        if prob > 0.0 {
            let mut prod = DMatrix::<f64>::identity(k, k);
            for &(e, transposed) in steps {
                let m = &support[choice[e]].0;
                prod = if transposed { prod * m.transpose() } else { prod * m };
            }
            total += prob * prod.trace();
        }
        // odometer over the s^d joint atom choices
        let mut pos = 0;
        loop {
            if pos == d {
                return total;
            }
            choice[pos] += 1;
            if choice[pos] < s {
                break;
            }
            choice[pos] = 0;
            pos += 1;
        }
    }
}

/// E Tr[∏_j Π_{u_j u_{j+1}}] for one cycle, with Π_ji = Π_ijᵀ and Π_ii = 0.
pub fn cycle_expectation(dist: &LiftDistribution, c: &Cycle) -> Result<f64, MomentError> {
    let support = dist.enumerate_support()?;
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut steps = Vec::new();
    for (x, y) in c.steps() {
        if x == y {
            return Ok(0.0);
        }
        let e = (x.min(y), x.max(y));
        let idx = match edges.iter().position(|f| *f == e) {
            Some(i) => i,
            None => {
                edges.push(e);
                edges.len() - 1
            }
        };
        steps.push((idx, x > y));
    }
    Ok(expected_trace_of_product(&support, dist.k(), edges.len(), &steps))
}

pub fn exact_trace_moment(a: &BaseMatrix, dist: &LiftDistribution, p: usize) -> Result<f64, MomentError> {
    exact_trace_moment_with_budget(a, dist, p, DEFAULT_BUDGET)
}

/// Exact E Tr[(A^(k,π))^{2p}] by summing the walk expansion over cycles.
///
/// For a centered law only walks traversing every edge at least twice are
/// summed (the others vanish); otherwise all loop-free closed walks are. The
/// block expectation depends only on the shape and on which way each distinct
/// edge is oriented, so it is cached on that key.
pub fn exact_trace_moment_with_budget(
    a: &BaseMatrix,
    dist: &LiftDistribution,
    p: usize,
    budget: f64,
) -> Result<f64, MomentError> {
    let support = dist.enumerate_support()?;
    let centered = dist.check_centered().is_ok();
    let shapes = enumerate_closed_shapes(p, if centered { 2 } else { 1 })?;
    let n = a.n();
    let k = dist.k() as f64;
    let s = support.len() as f64;
    let prepared: Vec<ShapeSteps> = shapes.shapes().iter().map(ShapeSteps::new).collect();

    let estimated: f64 = prepared
        .iter()
        .map(|sh| {
            let m = sh.shape.span();
            let d = sh.edges.len() as i32;
            let walks = n as f64 * falling_factorial_from(n, m) * (2 * p) as f64;
            let expectations = 2f64.powi(d).min(walks) * s.powi(d) * (2 * p) as f64 * k.powi(3);
            walks + expectations
        })
        .sum();
    if estimated > budget {
        return Err(MomentError::BudgetExceeded { estimated, budget });
    }

    let mut cache: HashMap<(usize, u64), f64> = HashMap::new();
    let mut total = 0.0;
    for (idx, sh) in prepared.iter().enumerate() {
        if sh.shape.span() > n {
            continue;
        }
        for u in 0..n {
            for_each_cycle_of_shape(&sh.shape, u, n, |walk| {
                let weight: f64 = (0..walk.len()).map(|j| a.get(walk[j], walk[(j + 1) % walk.len()])).product();
                if weight == 0.0 {
                    return;
                }
                let labels = sh.shape.labels();
                let vertex = |label: usize| walk[labels.iter().position(|&l| l == label + 1).expect("label present")];
                let mut bits = 0u64;
                for (e, &(lo, hi)) in sh.edges.iter().enumerate() {
                    if vertex(lo) < vertex(hi) {
                        bits |= 1 << e;
                    }
                }
                let expectation = *cache.entry((idx, bits)).or_insert_with(|| {
                    let steps: Vec<(usize, bool)> = sh
                        .steps
                        .iter()
                        .map(|&(e, forward)| {
                            let lo_below_hi = bits & (1 << e) != 0;
                            // stored block is Π_{min,max}; the step uses it
                            // untransposed when it moves from the smaller vertex
                            (e, forward != lo_below_hi)
                        })
                        .collect();
                    expected_trace_of_product(&support, dist.k(), sh.edges.len(), &steps)
                });
                total += weight * expectation;
            })?;
        }
    }
    Ok(total)
}

/// Tr[M^{2p}] of a lift: ‖M^p‖_F² densely at small scale, otherwise
/// Σ_i ‖M^p e_i‖² by repeated matvec.
pub fn trace_power(m: &LiftedBlockMatrix, p: usize) -> f64 {
    let dim = m.dim();
    if dim <= DENSE_TRACE_LIMIT {
        let d = m.to_dense().expect("below dense limit");
        let mut pow = d.clone();
        for _ in 1..p {
            pow = &pow * &d;
        }
        return pow.iter().map(|x| x * x).sum();
    }
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut total = 0.0;
    for i in 0..dim {
        x.fill(0.0);
        x[i] = 1.0;
        for _ in 0..p {
            m.matvec_into(&x, &mut y).expect("dimensions agree");
            std::mem::swap(&mut x, &mut y);
        }
        total += x.iter().map(|v| v * v).sum::<f64>();
    }
    total
}

/// Sample mean and standard error of Tr[(A^(k,π))^{2p}] over `trials`
/// independent lifts; trial `t` uses stream `t` under `master_seed`.
pub fn mc_trace_moment(
    a: &BaseMatrix,
    dist: &LiftDistribution,
    p: usize,
    trials: usize,
    master_seed: u64,
) -> Result<MomentEstimate, MomentError> {
    if trials < 2 {
        return Err(MomentError::TooFewTrials(trials));
    }
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let lift = build_lift(a, dist, &mut RngState::new(master_seed, t));
            trace_power(&lift, p)
        })
        .collect();
    let s = mean_stderr(&values);
    Ok(MomentEstimate { value: s.mean, stderr: s.stderr, mode: Mode::MonteCarlo })
}

/// All-ones off-diagonal r×r matrix; its k = 1 lift under the Y entry law is Y_r.
pub fn y_base(r: usize) -> Option<BaseMatrix> {
    if r < 2 {
        return None;
    }
    Some(BaseMatrix::new(DMatrix::from_fn(r, r, |i, j| if i == j { 0.0 } else { 1.0 })).expect("valid"))
}

/// Exact E Tr[Y_r^{2p}] = Σ_{s ∈ S_2p} r(r−1)···(r−m(s)+1) · ∏_e E[Y^{mult(e)}].
pub fn y_trace_moment_exact(r: usize, p: usize) -> Result<f64, MomentError> {
    let shapes = enumerate_shapes(p).map_err(|e| match e {
        ShapeError::TooLarge(_) => MomentError::BudgetExceeded { estimated: f64::INFINITY, budget: DEFAULT_BUDGET },
        other => other.into(),
    })?;
    let y = LiftDistribution::YEntry;
    let mut total = 0.0;
    for s in shapes.shapes() {
        let count = r as f64 * falling_factorial_from(r, s.span());
        if count == 0.0 {
            continue;
        }
        let mut factor = 1.0;
        for (_, mult) in s.edge_multiplicities() {
            factor *= y.moment_scalar(mult as u32)?;
        }
        total += count * factor;
    }
    Ok(total)
}

pub fn y_trace_moment_mc(r: usize, p: usize, trials: usize, master_seed: u64) -> Result<MomentEstimate, MomentError> {
    match y_base(r) {
        Some(base) => mc_trace_moment(&base, &LiftDistribution::YEntry, p, trials, master_seed),
        None if trials >= 2 => Ok(MomentEstimate { value: 0.0, stderr: 0.0, mode: Mode::MonteCarlo }),
        None => Err(MomentError::TooFewTrials(trials)),
    }
}

/// How [`y_trace_moment`] and the comparison checks evaluate expectations.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Evaluation {
    Exact,
    MonteCarlo {
        trials: usize,
        master_seed: u64,
    },
    /// Exact when within budget, otherwise Monte Carlo.
    ExactOrMonteCarlo {
        trials: usize,
        master_seed: u64,
    },
}

pub fn y_trace_moment(r: usize, p: usize, eval: Evaluation) -> Result<MomentEstimate, MomentError> {
    match eval {
        Evaluation::Exact => y_trace_moment_exact(r, p).map(MomentEstimate::exact),
        Evaluation::MonteCarlo { trials, master_seed } => y_trace_moment_mc(r, p, trials, master_seed),
        Evaluation::ExactOrMonteCarlo { trials, master_seed } => match y_trace_moment_exact(r, p) {
            Ok(v) => Ok(MomentEstimate::exact(v)),
            Err(MomentError::BudgetExceeded { .. }) => y_trace_moment_mc(r, p, trials, master_seed),
            Err(e) => Err(e),
        },
    }
}

fn lift_moment(
    a: &BaseMatrix,
    dist: &LiftDistribution,
    p: usize,
    eval: Evaluation,
) -> Result<MomentEstimate, MomentError> {
    match eval {
        Evaluation::Exact => exact_trace_moment(a, dist, p).map(MomentEstimate::exact),
        Evaluation::MonteCarlo { trials, master_seed } => mc_trace_moment(a, dist, p, trials, master_seed),
        Evaluation::ExactOrMonteCarlo { trials, master_seed } => match exact_trace_moment(a, dist, p) {
            Ok(v) => Ok(MomentEstimate::exact(v)),
            Err(MomentError::BudgetExceeded { .. })
            | Err(MomentError::Dist(DistError::ContinuousSupport(_)))
            | Err(MomentError::Dist(DistError::SupportTooLarge(_))) => mc_trace_moment(a, dist, p, trials, master_seed),
            Err(e) => Err(e),
        },
    }
}

pub fn check_prop_compare(a: &BaseMatrix, dist: &LiftDistribution, p: usize) -> Result<CheckOutcome, MomentError> {
    check_prop_compare_with(a, dist, p, Evaluation::Exact)
}

/// E Tr[(A^(k,π))^{2p}] against (kn/r) · E Tr[Y_r^{2p}] with r = ⌈σ²⌉ + p.
///
/// Requires σ* ≤ 1 and a centered law with atoms of norm at most one. Exact
/// comparisons allow [`EXACT_TOL`]; Monte Carlo ones allow [`MC_BAND`]
/// combined standard errors.
pub fn check_prop_compare_with(
    a: &BaseMatrix,
    dist: &LiftDistribution,
    p: usize,
    eval: Evaluation,
) -> Result<CheckOutcome, MomentError> {
    let spread = a.spread();
    if spread.sigma_star > 1.0 {
        return Err(MomentError::SigmaStarTooLarge(spread.sigma_star));
    }
    if !dist.is_contractive() {
        return Err(MomentError::NotContractive(dist.to_string()));
    }
    dist.check_centered()?;
    let r = ceil_tolerant(a.sigma_squared()) + p;
    let lhs = lift_moment(a, dist, p, eval)?;
    let y = y_trace_moment(r, p, eval)?;
    let scale = (dist.k() * a.n()) as f64 / r as f64;
    let rhs = scale * y.value;
    let stderr_rhs = scale * y.stderr;
    let mode = if lhs.mode == Mode::Exact && y.mode == Mode::Exact { Mode::Exact } else { Mode::MonteCarlo };
    let slack = match mode {
        Mode::Exact => EXACT_TOL,
        Mode::MonteCarlo => MC_BAND * (lhs.stderr.powi(2) + stderr_rhs.powi(2)).sqrt(),
    };
    Ok(CheckOutcome { lhs: lhs.value, rhs, stderr_lhs: lhs.stderr, stderr_rhs, mode, ok: lhs.value <= rhs + slack })
}

/// E Tr[Y_r^{2p}] ≥ r · Σ_{s ∈ S_2p} σ^{2(m(s)−1)} with r = ⌈σ²⌉ + p.
pub fn check_y_lower_bound(sigma: f64, p: usize) -> Result<CheckOutcome, MomentError> {
    let sigma_sq = sigma * sigma;
    let r = ceil_tolerant(sigma_sq) + p;
    let lhs = y_trace_moment_exact(r, p)?;
    let shapes = enumerate_shapes(p)?;
    let rhs = r as f64 * shapes.shapes().iter().map(|s| sigma_sq.powi(s.span() as i32 - 1)).sum::<f64>();
    Ok(CheckOutcome { lhs, rhs, stderr_lhs: 0.0, stderr_rhs: 0.0, mode: Mode::Exact, ok: lhs >= rhs - EXACT_TOL })
}

/// Growth of E Tr[Y_r^{2p}] against r(2√r + C√p)^{2p}: the C that would make
/// it an equality. Informational only; no value of C is asserted anywhere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct YGrowth {
    pub r: usize,
    pub p: usize,
    pub moment: f64,
    /// (E Tr[Y_r^{2p}] / r)^{1/2p}
    pub root: f64,
    pub implied_c: f64,
}

pub fn y_growth(r: usize, p: usize) -> Result<YGrowth, MomentError> {
    let moment = y_trace_moment_exact(r, p)?;
    let root = (moment / r as f64).powf(1.0 / (2 * p) as f64);
    let implied_c = (root - 2.0 * (r as f64).sqrt()) / (p as f64).sqrt();
    Ok(YGrowth { r, p, moment, root, implied_c })
}
