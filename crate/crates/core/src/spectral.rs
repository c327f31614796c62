//! Spectral norms and spectra: dense symmetric eigendecomposition for small
//! matrices, matrix-free Lanczos for lifts beyond dense reach.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::lift::{center_graph_lift, GraphLift, LiftError, DENSE_LIMIT};
use crate::rng::RngState;

pub const DEFAULT_TOL: f64 = 1e-8;
/// Matching tolerance when removing base eigenvalues from a lifted spectrum.
pub const SPECTRUM_MATCH_TOL: f64 = 1e-6;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum SpectralError {
    #[error("matrix is not symmetric: |M[{i},{j}] - M[{j},{i}]| = {diff}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("matrix is not square ({0}x{1})")]
    NotSquare(usize, usize),
    #[error("iteration did not converge: best estimate {value} with residual {residual}")]
    NotConverged { value: f64, residual: f64 },
    #[error("base eigenvalue {eigenvalue} has no match in the lifted spectrum (nearest at distance {distance})")]
    SpectrumNotContained { eigenvalue: f64, distance: f64 },
    #[error(transparent)]
    Lift(#[from] LiftError),
}

/// Result of an iterative norm computation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormEstimate {
    pub value: f64,
    /// ‖Mx − θx‖ for the returned Ritz pair.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl NormEstimate {
    pub fn require_converged(self) -> Result<f64, SpectralError> {
        if self.converged {
            Ok(self.value)
        } else {
            Err(SpectralError::NotConverged { value: self.value, residual: self.residual })
        }
    }
}

/// `10·√dim + 200`, capped at `dim`.
pub fn default_max_iter(dim: usize) -> usize {
    ((10.0 * (dim as f64).sqrt()) as usize + 200).min(dim.max(1))
}

fn check_dense(m: &DMatrix<f64>) -> Result<(), SpectralError> {
    let (r, c) = m.shape();
    if r != c {
        return Err(SpectralError::NotSquare(r, c));
    }
    if r > DENSE_LIMIT {
        return Err(SpectralError::TooLarge { dim: r, limit: DENSE_LIMIT });
    }
    let scale = m.amax().max(1.0);
    for i in 0..r {
        for j in (i + 1)..r {
            let diff = (m[(i, j)] - m[(j, i)]).abs();
            if diff > SYMMETRY_TOL * scale {
                return Err(SpectralError::NotSymmetric { i, j, diff });
            }
        }
    }
    Ok(())
}

/// All eigenvalues in ascending order, with multiplicity.
pub fn full_spectrum_dense(m: &DMatrix<f64>) -> Result<Vec<f64>, SpectralError> {
    check_dense(m)?;
    if m.is_empty() {
        return Ok(Vec::new());
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

pub fn spectral_norm_dense(m: &DMatrix<f64>) -> Result<f64, SpectralError> {
    Ok(full_spectrum_dense(m)?.iter().fold(0.0_f64, |a, x| a.max(x.abs())))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
            return v;
        }
    }
}

/// Largest |eigenvalue| of a symmetric operator by Lanczos with full
/// reorthogonalization.
///
/// Both extreme Ritz values are tracked; the run stops when each has residual
/// at most `tol · value`, or when the Krylov space becomes invariant (the
/// residual is then recorded as zero). Without convergence the best estimate is
/// returned with `converged = false`.
pub fn spectral_norm_iterative<F>(mut op: F, dim: usize, tol: f64, max_iter: usize, rng: &mut RngState) -> NormEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    assert!(tol > 0.0, "tolerance must be positive");
    if dim == 0 {
        return NormEstimate { value: 0.0, residual: 0.0, iterations: 0, converged: true };
    }
    let max_iter = max_iter.clamp(1, dim);
    let mut basis: Vec<Vec<f64>> = vec![random_unit(dim, rng)];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut w = vec![0.0; dim];
    let mut scale = 0.0_f64;
    let mut best = NormEstimate { value: 0.0, residual: f64::INFINITY, iterations: 0, converged: false };

    for j in 0..max_iter {
        op(&basis[j], &mut w);
        let alpha = dot(&w, &basis[j]);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        // Two Gram–Schmidt sweeps keep the basis orthogonal to working precision.
        for _ in 0..2 {
            for q in &basis {
                let h = dot(&w, q);
                axpy(-h, q, &mut w);
            }
        }
        let beta = dot(&w, &w).sqrt();
        alphas.push(alpha);
        scale = scale.max(alpha.abs()).max(beta);
        let invariant = beta <= 1e-13 * scale || scale == 0.0;
        let steps = j + 1;
        let due = steps <= 20 || steps % 4 == 0 || invariant || steps == max_iter;
        if due {
            let (value, res_lo, res_hi, res_top) = ritz_extremes(&alphas, &betas, beta);
            let (res_max, res_top) = if invariant { (0.0, 0.0) } else { (res_lo.max(res_hi), res_top) };
            best = NormEstimate { value, residual: res_top, iterations: steps, converged: res_max <= tol * value };
            if best.converged || invariant {
                return best;
            }
        }
        betas.push(beta);
        basis.push(w.iter().map(|x| x / beta).collect());
    }
    best
}

/// Extreme Ritz values of the Lanczos tridiagonal: returns (max |θ|, residual
/// of the lowest pair, residual of the highest pair, residual of the pair
/// attaining max |θ|).
fn ritz_extremes(alphas: &[f64], betas: &[f64], beta_next: f64) -> (f64, f64, f64, f64) {
    let m = alphas.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alphas[i];
        if i + 1 < m {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (mut lo, mut hi) = (0, 0);
    for i in 0..m {
        if eig.eigenvalues[i] < eig.eigenvalues[lo] {
            lo = i;
        }
        if eig.eigenvalues[i] > eig.eigenvalues[hi] {
            hi = i;
        }
    }
    let res = |i: usize| beta_next * eig.eigenvectors[(m - 1, i)].abs();
    let (theta_lo, theta_hi) = (eig.eigenvalues[lo], eig.eigenvalues[hi]);
    let top = if theta_hi.abs() >= theta_lo.abs() { hi } else { lo };
    (theta_lo.abs().max(theta_hi.abs()), res(lo), res(hi), res(top))
}

/// Power iteration on M², kept as an independent cross-check of the Lanczos path.
pub fn spectral_norm_power<F>(mut op: F, dim: usize, tol: f64, max_iter: usize, rng: &mut RngState) -> NormEstimate
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return NormEstimate { value: 0.0, residual: 0.0, iterations: 0, converged: true };
    }
    let mut v = random_unit(dim, rng);
    let mut x = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    let mut est = NormEstimate { value: 0.0, residual: f64::INFINITY, iterations: 0, converged: false };
    for it in 1..=max_iter.max(1) {
        op(&v, &mut x);
        let value = dot(&x, &x).sqrt();
        if value == 0.0 {
            return NormEstimate { value: 0.0, residual: 0.0, iterations: it, converged: true };
        }
        op(&x, &mut y);
        let lambda2 = value * value;
        let r: f64 = y.iter().zip(&v).map(|(yi, vi)| (yi - lambda2 * vi).powi(2)).sum::<f64>().sqrt();
        est = NormEstimate { value, residual: r / value, iterations: it, converged: r / value <= tol * value };
        if est.converged {
            break;
        }
        let ny = dot(&y, &y).sqrt();
        v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = yi / ny);
    }
    est
}

/// Removes each `base` eigenvalue from `lifted` by greedy nearest match within
/// `tol`; returns what is left, ascending.
pub fn remove_spectrum(lifted: &[f64], base: &[f64], tol: f64) -> Result<Vec<f64>, SpectralError> {
    let mut used = vec![false; lifted.len()];
    for &b in base {
        let nearest = lifted
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, &x)| (i, (x - b).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match nearest {
            Some((i, d)) if d <= tol => used[i] = true,
            Some((_, d)) => return Err(SpectralError::SpectrumNotContained { eigenvalue: b, distance: d }),
            None => return Err(SpectralError::SpectrumNotContained { eigenvalue: b, distance: f64::INFINITY }),
        }
    }
    Ok(lifted.iter().zip(&used).filter(|(_, u)| !**u).map(|(x, _)| *x).collect())
}

/// Which route [`new_eigenvalue_norm`] takes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NewEigenMethod {
    /// Remove spec(A) from spec(A^(k)) and take the largest remaining |η|.
    SpectrumRemoval,
    /// Lanczos on the centered operator A^(k) − E A^(k).
    Centered { tol: f64 },
    /// Spectrum removal when kn fits the dense limit, otherwise Lanczos.
    Auto,
}

/// max |η| over the eigenvalues of the lifted adjacency not inherited from the base graph.
pub fn new_eigenvalue_norm(lift: &GraphLift, method: NewEigenMethod, rng: &mut RngState) -> Result<f64, SpectralError> {
    let dim = lift.base().n() * lift.k();
    match method {
        NewEigenMethod::SpectrumRemoval => new_eigenvalue_norm_dense(lift),
        NewEigenMethod::Auto if dim <= DENSE_LIMIT => new_eigenvalue_norm_dense(lift),
        NewEigenMethod::Auto => centered_norm_iterative(lift, DEFAULT_TOL, rng).require_converged(),
        NewEigenMethod::Centered { tol } => centered_norm_iterative(lift, tol, rng).require_converged(),
    }
}

pub fn new_eigenvalue_norm_dense(lift: &GraphLift) -> Result<f64, SpectralError> {
    let lifted = full_spectrum_dense(&lift.adjacency().to_dense()?)?;
    let base = full_spectrum_dense(lift.base().adjacency().entries())?;
    let rest = remove_spectrum(&lifted, &base, SPECTRUM_MATCH_TOL)?;
    Ok(rest.iter().fold(0.0_f64, |a, x| a.max(x.abs())))
}

pub fn centered_norm_iterative(lift: &GraphLift, tol: f64, rng: &mut RngState) -> NormEstimate {
    let c = center_graph_lift(lift);
    let dim = c.dim();
    spectral_norm_iterative(|x, y| c.matvec_into(x, y).expect("dimensions agree"), dim, tol, default_max_iter(dim), rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::LiftDistribution;
    use crate::lift::{build_graph_lift, build_lift, expected_graph_lift, GraphLift};
    use crate::model::GraphSpec;

    #[test]
    fn dense_norm_examples() {
        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!((spectral_norm_dense(&swap).unwrap() - 1.0).abs() < 1e-14);
        for n in 2..8 {
            let k = GraphSpec::complete(n).adjacency();
            assert!((spectral_norm_dense(k.entries()).unwrap() - (n - 1) as f64).abs() < 1e-10);
        }
        assert_eq!(spectral_norm_dense(&DMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn dense_errors() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.5, 0.0]);
        assert!(matches!(spectral_norm_dense(&m), Err(SpectralError::NotSymmetric { .. })));
        assert!(matches!(
            full_spectrum_dense(&DMatrix::zeros(DENSE_LIMIT + 1, DENSE_LIMIT + 1)),
            Err(SpectralError::TooLarge { .. })
        ));
    }

    #[test]
    fn spectrum_examples() {
        let k3 = full_spectrum_dense(GraphSpec::complete(3).adjacency().entries()).unwrap();
        for (a, b) in k3.iter().zip([-1.0, -1.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let c = 2.5;
        let m = DMatrix::from_row_slice(2, 2, &[0.0, c, c, 0.0]);
        let s = full_spectrum_dense(&m).unwrap();
        assert!((s[0] + c).abs() < 1e-14 && (s[1] - c).abs() < 1e-14);
        let e = expected_graph_lift(&GraphSpec::complete(3), 2).to_dense().unwrap();
        let s = full_spectrum_dense(&e).unwrap();
        for (a, b) in s.iter().zip([-1.0, -1.0, 0.0, 0.0, 0.0, 2.0]) {
            assert!((a - b).abs() < 1e-12, "{s:?}");
        }
    }

    #[test]
    fn expected_k3_lift_keeps_base_spectrum() {
        let e = expected_graph_lift(&GraphSpec::complete(3), 3).to_dense().unwrap();
        let s = full_spectrum_dense(&e).unwrap();
        let nonzero: Vec<f64> = s.into_iter().filter(|x| x.abs() > 1e-9).collect();
        assert_eq!(nonzero.len(), 3);
        for (a, b) in nonzero.iter().zip([-1.0, -1.0, 2.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn iterative_trivial_operators() {
        let mut rng = RngState::new(0, 0);
        let c = -3.5;
        let est =
            spectral_norm_iterative(|x, y| y.iter_mut().zip(x).for_each(|(a, b)| *a = c * b), 50, 1e-10, 100, &mut rng);
        assert!(est.converged);
        assert!((est.value - 3.5).abs() < 1e-12);
        assert_eq!(est.iterations, 1);
        let est = spectral_norm_iterative(|_, y| y.fill(0.0), 30, 1e-8, 100, &mut rng);
        assert!(est.converged);
        assert_eq!(est.value, 0.0);
    }

    #[test]
    fn iterative_matches_dense_on_lift() {
        let a = GraphSpec::complete(10).adjacency();
        let d = LiftDistribution::haar_orthogonal(10).unwrap();
        let l = build_lift(&a, &d, &mut RngState::new(1, 0));
        let dense = spectral_norm_dense(&l.to_dense().unwrap()).unwrap();
        let est = spectral_norm_iterative(
            |x, y| l.matvec_into(x, y).unwrap(),
            l.dim(),
            1e-10,
            default_max_iter(l.dim()),
            &mut RngState::new(1, 1),
        );
        assert!(est.converged);
        assert!(est.residual <= 1e-10 * est.value);
        assert!((est.value - dense).abs() <= 1e-8 * dense, "{} vs {dense}", est.value);
    }

    #[test]
    fn power_iteration_cross_check() {
        let a = GraphSpec::petersen().adjacency();
        let l = build_lift(&a, &LiftDistribution::centered_permutation(3).unwrap(), &mut RngState::new(2, 0));
        let dense = spectral_norm_dense(&l.to_dense().unwrap()).unwrap();
        let est =
            spectral_norm_power(|x, y| l.matvec_into(x, y).unwrap(), l.dim(), 1e-9, 20_000, &mut RngState::new(2, 1));
        assert!(est.converged, "{est:?}");
        assert!((est.value - dense).abs() < 1e-6 * dense);
    }

    #[test]
    fn unconverged_is_reported() {
        let a = GraphSpec::complete(30).adjacency();
        let l = build_lift(&a, &LiftDistribution::haar_orthogonal(4).unwrap(), &mut RngState::new(3, 0));
        let est =
            spectral_norm_iterative(|x, y| l.matvec_into(x, y).unwrap(), l.dim(), 1e-14, 3, &mut RngState::new(0, 0));
        assert!(!est.converged);
        assert!(matches!(est.require_converged(), Err(SpectralError::NotConverged { .. })));
    }

    #[test]
    fn default_iteration_budget() {
        assert_eq!(default_max_iter(10_000), 1200);
        assert_eq!(default_max_iter(50), 50);
    }

    #[test]
    fn remove_spectrum_greedy() {
        let rest = remove_spectrum(&[-2.0, -1.0, -1.0, 1.0, 1.0, 2.0], &[-1.0, -1.0, 2.0], 1e-6).unwrap();
        assert_eq!(rest, vec![-2.0, 1.0, 1.0]);
        assert!(matches!(remove_spectrum(&[0.0, 1.0], &[0.5], 1e-6), Err(SpectralError::SpectrumNotContained { .. })));
    }

    #[test]
    fn new_eigenvalue_examples() {
        let mut rng = RngState::new(0, 0);
        let l1 = build_graph_lift(&GraphSpec::petersen(), 1, &mut rng);
        assert_eq!(new_eigenvalue_norm_dense(&l1).unwrap(), 0.0);
        for perm in [vec![0, 1], vec![1, 0]] {
            let l = GraphLift::new(GraphSpec::complete(2), 2, vec![perm]).unwrap();
            assert!((new_eigenvalue_norm_dense(&l).unwrap() - 1.0).abs() < 1e-12);
        }
        // identity matchings on all three edges give two disjoint triangles
        let tri = GraphLift::new(GraphSpec::complete(3), 2, vec![vec![0, 1]; 3]).unwrap();
        let s = full_spectrum_dense(&tri.adjacency().to_dense().unwrap()).unwrap();
        for (a, b) in s.iter().zip([-1.0, -1.0, -1.0, -1.0, 2.0, 2.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((new_eigenvalue_norm_dense(&tri).unwrap() - 2.0).abs() < 1e-12);
        let it = new_eigenvalue_norm(&tri, NewEigenMethod::Centered { tol: 1e-10 }, &mut rng).unwrap();
        assert!((it - 2.0).abs() < 1e-8);
    }
}
