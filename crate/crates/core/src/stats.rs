//! Order-fixed summary statistics. Values are always reduced in index order so
//! results do not depend on how trials were scheduled.

/// Pairwise (cascade) summation over a fixed split tree.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MeanStderr {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

/// Sample mean and standard error (sample standard deviation over √count).
pub fn mean_stderr(xs: &[f64]) -> MeanStderr {
    let count = xs.len();
    if count == 0 {
        return MeanStderr { mean: f64::NAN, stderr: f64::NAN, count };
    }
    let mean = pairwise_sum(xs) / count as f64;
    if count == 1 {
        return MeanStderr { mean, stderr: 0.0, count };
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean).powi(2)).collect();
    let var = pairwise_sum(&dev) / (count - 1) as f64;
    MeanStderr { mean, stderr: (var / count as f64).sqrt(), count }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_exact_values() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn constant_sample_has_zero_stderr() {
        let s = mean_stderr(&[1.0; 50]);
        assert_eq!((s.mean, s.stderr, s.count), (1.0, 0.0, 50));
    }

    #[test]
    fn stderr_of_two_points() {
        let s = mean_stderr(&[0.0, 2.0]);
        assert_eq!(s.mean, 1.0);
        assert!((s.stderr - 1.0).abs() < 1e-15);
    }
}
