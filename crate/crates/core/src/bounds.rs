//! Closed-form norm bounds for lifts and related matrix series, and the
//! inversion that reads an empirical constant off a measured norm.
//!
//! Every suppressed absolute constant is an explicit argument. Logarithms are
//! natural.

use thiserror::Error;

use crate::model::{BaseMatrix, SpreadParams};

pub const EPS_MIN: f64 = 1e-4;
pub const EPS_MAX: f64 = 0.5;
pub const EPS_GRID_POINTS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("ε = {0} is outside (0, 1/2]")]
    EpsOutOfRange(f64),
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// σ√(2 + 2 ln 2n).
pub fn nck_bound(sigma: f64, n: usize) -> f64 {
    sigma * (2.0 + 2.0 * (2.0 * n as f64).ln()).sqrt()
}

/// c·σ√(ln n), the entrywise form of the noncommutative Khintchine bound.
pub fn nck_entrywise_bound(sigma: f64, n: usize, c: f64) -> f64 {
    c * sigma * (n as f64).ln().sqrt()
}

/// c(σ + σ*√(ln n)) from given spread parameters.
pub fn bvh_bound_from(spread: SpreadParams, n: usize, c: f64) -> f64 {
    c * (spread.sigma + spread.sigma_star * (n as f64).ln().sqrt())
}

pub fn bvh_bound(a: &BaseMatrix, c: f64) -> f64 {
    bvh_bound_from(a.spread(), a.n(), c)
}

/// C(σ + σ*√(ln n)) with the dimension-free constant C of the conjectured form.
pub fn conjectured_bound(sigma: f64, sigma_star: f64, n: usize, c: f64) -> f64 {
    bvh_bound_from(SpreadParams { sigma, sigma_star }, n, c)
}

fn check_lift_inputs(k: usize, n: usize, c: f64) -> Result<(), BoundError> {
    if n < 2 || k < 1 {
        return Err(BoundError::InvalidInput(format!("need n ≥ 2 and k ≥ 1, got n = {n}, k = {k}")));
    }
    if c.is_nan() || c <= 0.0 {
        return Err(BoundError::InvalidInput(format!("C must be positive, got {c}")));
    }
    Ok(())
}

fn lift_bound_unchecked(sigma: f64, sigma_star: f64, k: usize, n: usize, eps: f64, c: f64) -> f64 {
    2.0 * (1.0 + eps) * sigma + c / (1.0 + eps).ln().sqrt() * sigma_star * ((k * n) as f64).ln().sqrt()
}

/// 2(1+ε)σ + C/√(ln(1+ε)) · σ*√(ln kn) for ε ∈ (0, 1/2].
pub fn lift_bound(sigma: f64, sigma_star: f64, k: usize, n: usize, eps: f64, c: f64) -> Result<f64, BoundError> {
    if !(eps > 0.0 && eps <= EPS_MAX) {
        return Err(BoundError::EpsOutOfRange(eps));
    }
    check_lift_inputs(k, n, c)?;
    Ok(lift_bound_unchecked(sigma, sigma_star, k, n, eps, c))
}

/// Geometric grid of [`EPS_GRID_POINTS`] values in (EPS_MIN, EPS_MAX], ending exactly at EPS_MAX.
pub fn eps_grid() -> Vec<f64> {
    let ratio = EPS_MAX / EPS_MIN;
    let mut grid: Vec<f64> =
        (1..=EPS_GRID_POINTS).map(|i| EPS_MIN * ratio.powf(i as f64 / EPS_GRID_POINTS as f64)).collect();
    grid[EPS_GRID_POINTS - 1] = EPS_MAX;
    grid
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizedBound {
    pub value: f64,
    pub eps_star: f64,
}

/// Minimizes [`lift_bound`] over ε: best grid point, then golden-section
/// search between its neighbours. The refined point replaces the grid point
/// only if it is strictly better.
pub fn lift_bound_optimized(
    sigma: f64,
    sigma_star: f64,
    k: usize,
    n: usize,
    c: f64,
) -> Result<OptimizedBound, BoundError> {
    check_lift_inputs(k, n, c)?;
    let f = |eps: f64| lift_bound_unchecked(sigma, sigma_star, k, n, eps, c);
    let grid = eps_grid();
    let (best, _) =
        grid.iter()
            .enumerate()
            .map(|(i, &e)| (i, f(e)))
            .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    let mut out = OptimizedBound { value: f(grid[best]), eps_star: grid[best] };

    let mut lo = if best == 0 { EPS_MIN } else { grid[best - 1] };
    let mut hi = grid[(best + 1).min(grid.len() - 1)];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..100 {
        if hi - lo <= 1e-12 * hi {
            break;
        }
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let (x, v) = if f1 < f2 { (x1, f1) } else { (x2, f2) };
    if v < out.value && x > 0.0 && x <= EPS_MAX {
        out = OptimizedBound { value: v, eps_star: x };
    }
    Ok(out)
}

/// The k-lift bound for a graph of maximum degree Δ: lift_bound(√Δ, 1, ...).
pub fn klift_bound(delta: usize, k: usize, n: usize, eps: f64, c: f64) -> Result<f64, BoundError> {
    lift_bound((delta as f64).sqrt(), 1.0, k, n, eps, c)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EmpiricalConstant {
    Fitted(f64),
    /// The observed norm is already below 2(1+ε)σ; any C > 0 works.
    FirstTermDominates,
}

impl EmpiricalConstant {
    /// The fitted constant, or 0 when the first term dominates.
    pub fn value(self) -> f64 {
        match self {
            EmpiricalConstant::Fitted(c) => c,
            EmpiricalConstant::FirstTermDominates => 0.0,
        }
    }
}

/// Solves lift_bound(σ, σ*, k, n, ε, C) = observed for C.
pub fn empirical_constant(
    observed_norm: f64,
    sigma: f64,
    sigma_star: f64,
    k: usize,
    n: usize,
    eps: f64,
) -> Result<EmpiricalConstant, BoundError> {
    if !(eps > 0.0 && eps <= EPS_MAX) {
        return Err(BoundError::EpsOutOfRange(eps));
    }
    if sigma_star.is_nan() || sigma_star <= 0.0 {
        return Err(BoundError::InvalidInput(format!("σ* must be positive, got {sigma_star}")));
    }
    check_lift_inputs(k, n, 1.0)?;
    let first = 2.0 * (1.0 + eps) * sigma;
    if observed_norm <= first {
        return Ok(EmpiricalConstant::FirstTermDominates);
    }
    Ok(EmpiricalConstant::Fitted(
        (observed_norm - first) * (1.0 + eps).ln().sqrt() / (sigma_star * ((k * n) as f64).ln().sqrt()),
    ))
}

/// One evaluated bound with the inputs that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub name: String,
    pub value: f64,
    pub sigma: Option<f64>,
    pub sigma_star: Option<f64>,
    pub n: Option<usize>,
    pub k: Option<usize>,
    pub eps: Option<f64>,
    pub c: Option<f64>,
}

impl BoundReport {
    fn new(name: &str, value: f64) -> Self {
        Self { name: name.to_string(), value, sigma: None, sigma_star: None, n: None, k: None, eps: None, c: None }
    }
}

/// Every bound evaluated at one parameter point.
pub fn bound_table(spread: SpreadParams, n: usize, k: usize, eps: f64, c: f64) -> Result<Vec<BoundReport>, BoundError> {
    let SpreadParams { sigma, sigma_star } = spread;
    let opt = lift_bound_optimized(sigma, sigma_star, k, n, c)?;
    let mut rows = vec![
        BoundReport { sigma: Some(sigma), n: Some(n), ..BoundReport::new("nck", nck_bound(sigma, n)) },
        BoundReport {
            sigma: Some(sigma),
            n: Some(n),
            c: Some(c),
            ..BoundReport::new("nck_entrywise", nck_entrywise_bound(sigma, n, c))
        },
        BoundReport {
            sigma: Some(sigma),
            sigma_star: Some(sigma_star),
            n: Some(n),
            c: Some(c),
            ..BoundReport::new("bvh", bvh_bound_from(spread, n, c))
        },
        BoundReport {
            sigma: Some(sigma),
            sigma_star: Some(sigma_star),
            n: Some(n * k),
            c: Some(c),
            ..BoundReport::new("conjectured", conjectured_bound(sigma, sigma_star, n * k, c))
        },
        BoundReport {
            sigma: Some(sigma),
            sigma_star: Some(sigma_star),
            n: Some(n),
            k: Some(k),
            eps: Some(eps),
            c: Some(c),
            ..BoundReport::new("lift", lift_bound(sigma, sigma_star, k, n, eps, c)?)
        },
        BoundReport {
            sigma: Some(sigma),
            sigma_star: Some(sigma_star),
            n: Some(n),
            k: Some(k),
            eps: Some(opt.eps_star),
            c: Some(c),
            ..BoundReport::new("lift_optimized", opt.value)
        },
    ];
    for r in &mut rows {
        debug_assert!(r.value.is_finite() && r.value >= 0.0);
        r.value = r.value.max(0.0);
    }
    Ok(rows)
}
