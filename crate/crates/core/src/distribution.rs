//! Lifting laws π on k×k matrices.
//!
//! Built-in families are centered with spectral norm at most one, except
//! [`LiftDistribution::YEntry`], which is the scalar entry law of the auxiliary
//! comparison matrix Y_r (its atom √3 has modulus above one).

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{content_lines, split_call};

/// Slack on the spectral-norm-at-most-one check for atoms built in floating point.
pub const NORM_TOL: f64 = 1e-9;
/// Largest allowed |entry| of the mean of a centered discrete law.
pub const CENTER_TOL: f64 = 1e-9;
/// Allowed deviation of the atom probabilities' sum from one.
pub const PROB_SUM_TOL: f64 = 1e-12;
/// Largest k for which the k! atoms of the centered permutation law are enumerated.
pub const MAX_ENUMERABLE_PERMUTATION_K: usize = 6;

#[derive(Debug, Error, PartialEq)]
pub enum DistError {
    #[error("block size k must be at least 1")]
    ZeroK,
    #[error("special orthogonal law with k = 1 is a point mass at 1 and is not centered")]
    SpecialOrthogonalK1,
    #[error("discrete law has no atoms")]
    Empty,
    #[error("atom {0} has a negative or non-finite probability")]
    BadProbability(usize),
    #[error("atom probabilities sum to {0}, not 1")]
    ProbabilitySum(f64),
    #[error("atom {atom} is {rows}x{cols}, expected {k}x{k}")]
    AtomShape { atom: usize, rows: usize, cols: usize, k: usize },
    #[error("atom {atom} has spectral norm {norm} > 1")]
    NormExceedsOne { atom: usize, norm: f64 },
    #[error("law is not centered: mean has an entry of magnitude {max_entry}")]
    NotCentered { max_entry: f64 },
    #[error("{0} has continuous support")]
    ContinuousSupport(String),
    #[error("support of {0} is too large to enumerate")]
    SupportTooLarge(String),
    #[error("{0} is not a scalar (k = 1) law")]
    NotScalar(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown distribution `{0}`")]
    Unknown(String),
}

/// A finite law: atoms with probabilities, sampled by inverse CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLaw {
    k: usize,
    atoms: Vec<(DMatrix<f64>, f64)>,
    cumulative: Vec<f64>,
}

impl DiscreteLaw {
    /// Checks shapes and probabilities only.
    pub fn new(k: usize, atoms: Vec<(DMatrix<f64>, f64)>) -> Result<Self, DistError> {
        if k == 0 {
            return Err(DistError::ZeroK);
        }
        if atoms.is_empty() {
            return Err(DistError::Empty);
        }
        for (idx, (m, p)) in atoms.iter().enumerate() {
            if m.shape() != (k, k) {
                return Err(DistError::AtomShape { atom: idx, rows: m.nrows(), cols: m.ncols(), k });
            }
            if !(p.is_finite() && *p >= 0.0) {
                return Err(DistError::BadProbability(idx));
            }
        }
        let total: f64 = atoms.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > PROB_SUM_TOL {
            return Err(DistError::ProbabilitySum(total));
        }
        let mut acc = 0.0;
        let cumulative = atoms
            .iter()
            .map(|(_, p)| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self { k, atoms, cumulative })
    }

    pub fn scalar(atoms: &[(f64, f64)]) -> Result<Self, DistError> {
        Self::new(1, atoms.iter().map(|&(x, p)| (DMatrix::from_element(1, 1, x), p)).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn atoms(&self) -> &[(DMatrix<f64>, f64)] {
        &self.atoms
    }

    /// Parses `discrete k m`, then per atom a probability line and k rows of k reals.
    pub fn parse(text: &str) -> Result<Self, DistError> {
        let perr = |line, msg: &str| DistError::Parse { line, msg: msg.to_string() };
        let mut lines = content_lines(text);
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing `discrete k m` header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        let (k, m) = match f.as_slice() {
            ["discrete", k, m] => (
                k.parse::<usize>().map_err(|_| perr(hl, "bad k"))?,
                m.parse::<usize>().map_err(|_| perr(hl, "bad atom count"))?,
            ),
            _ => return Err(perr(hl, "expected `discrete k m` header")),
        };
        let mut atoms = Vec::with_capacity(m);
        for _ in 0..m {
            let (pl, pline) = lines.next().ok_or_else(|| perr(hl, "missing atom probability"))?;
            let p: f64 = pline.parse().map_err(|_| perr(pl, "bad probability"))?;
            let mut mat = DMatrix::zeros(k, k);
            for r in 0..k {
                let (rl, row) = lines.next().ok_or_else(|| perr(pl, "missing atom row"))?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| perr(rl, "bad matrix entry")))
                    .collect::<Result<_, _>>()?;
                if vals.len() != k {
                    return Err(perr(rl, "atom row has the wrong length"));
                }
                for (c, v) in vals.into_iter().enumerate() {
                    mat[(r, c)] = v;
                }
            }
            atoms.push((mat, p));
        }
        if let Some((l, _)) = lines.next() {
            return Err(perr(l, "trailing content after last atom"));
        }
        Self::new(k, atoms)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("discrete {} {}\n", self.k, self.atoms.len());
        for (m, p) in &self.atoms {
            s.push_str(&format!("{}\n", crate::model::fmt_real(*p)));
            for r in 0..self.k {
                let row: Vec<String> = (0..self.k).map(|c| crate::model::fmt_real(m[(r, c)])).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        let u: f64 = rng.random();
        let idx = self.cumulative.partition_point(|&c| c <= u).min(self.atoms.len() - 1);
        self.atoms[idx].0.clone()
    }

    fn mean(&self) -> DMatrix<f64> {
        self.atoms.iter().fold(DMatrix::zeros(self.k, self.k), |acc, (m, p)| acc + m * *p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LiftDistribution {
    /// Uniform on {+1, −1}, k = 1.
    Rademacher,
    /// Uniform on {P − J_k/k : P a k×k permutation matrix}.
    CenteredPermutation {
        k: usize,
    },
    /// Haar measure on O(k).
    HaarOrthogonal {
        k: usize,
    },
    /// Haar measure on SO(k), k ≥ 2.
    HaarSpecialOrthogonal {
        k: usize,
    },
    /// √3 with probability 1/4, −1/√3 with probability 3/4.
    YEntry,
    Discrete(DiscreteLaw),
}

impl LiftDistribution {
    pub fn centered_permutation(k: usize) -> Result<Self, DistError> {
        if k == 0 {
            return Err(DistError::ZeroK);
        }
        Ok(Self::CenteredPermutation { k })
    }

    pub fn haar_orthogonal(k: usize) -> Result<Self, DistError> {
        if k == 0 {
            return Err(DistError::ZeroK);
        }
        Ok(Self::HaarOrthogonal { k })
    }

    pub fn haar_special_orthogonal(k: usize) -> Result<Self, DistError> {
        match k {
            0 => Err(DistError::ZeroK),
            1 => Err(DistError::SpecialOrthogonalK1),
            _ => Ok(Self::HaarSpecialOrthogonal { k }),
        }
    }

    /// A discrete law that must be centered with every atom of norm at most one.
    pub fn discrete(law: DiscreteLaw) -> Result<Self, DistError> {
        for (idx, (m, _)) in law.atoms.iter().enumerate() {
            let norm = operator_norm(m);
            if norm > 1.0 + NORM_TOL {
                return Err(DistError::NormExceedsOne { atom: idx, norm });
            }
        }
        let d = Self::Discrete(law);
        d.check_centered()?;
        Ok(d)
    }

    /// A discrete law exempt from the norm and centering checks (test fixtures
    /// such as a point mass at the identity).
    pub fn discrete_unchecked(law: DiscreteLaw) -> Self {
        Self::Discrete(law)
    }

    pub fn k(&self) -> usize {
        match self {
            Self::Rademacher | Self::YEntry => 1,
            Self::CenteredPermutation { k } | Self::HaarOrthogonal { k } | Self::HaarSpecialOrthogonal { k } => *k,
            Self::Discrete(d) => d.k,
        }
    }

    /// Whether every atom has spectral norm at most one (within [`NORM_TOL`]).
    pub fn is_contractive(&self) -> bool {
        match self {
            Self::YEntry => false,
            Self::Discrete(d) => d.atoms.iter().all(|(m, _)| operator_norm(m) <= 1.0 + NORM_TOL),
            _ => true,
        }
    }

    pub fn has_finite_support(&self) -> bool {
        !matches!(self, Self::HaarOrthogonal { .. } | Self::HaarSpecialOrthogonal { .. })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DMatrix<f64> {
        match self {
            Self::Rademacher => {
                let s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                DMatrix::from_element(1, 1, s)
            }
            Self::YEntry => {
                let x = if rng.random::<f64>() < 0.25 { 3f64.sqrt() } else { -1.0 / 3f64.sqrt() };
                DMatrix::from_element(1, 1, x)
            }
            Self::CenteredPermutation { k } => centered_permutation_matrix(&sample_permutation(*k, rng)),
            Self::HaarOrthogonal { k } => sample_haar(*k, false, rng),
            Self::HaarSpecialOrthogonal { k } => sample_haar(*k, true, rng),
            Self::Discrete(d) => d.sample(rng),
        }
    }

    pub fn mean(&self) -> DMatrix<f64> {
        match self {
            Self::Discrete(d) => d.mean(),
            _ => DMatrix::zeros(self.k(), self.k()),
        }
    }

    pub fn check_centered(&self) -> Result<(), DistError> {
        let max_entry = self.mean().iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        if max_entry > CENTER_TOL {
            Err(DistError::NotCentered { max_entry })
        } else {
            Ok(())
        }
    }

    /// The complete finite support with exact probabilities.
    pub fn enumerate_support(&self) -> Result<Vec<(DMatrix<f64>, f64)>, DistError> {
        let scalar = |x: f64| DMatrix::from_element(1, 1, x);
        match self {
            Self::Rademacher => Ok(vec![(scalar(1.0), 0.5), (scalar(-1.0), 0.5)]),
            Self::YEntry => Ok(vec![(scalar(3f64.sqrt()), 0.25), (scalar(-1.0 / 3f64.sqrt()), 0.75)]),
            Self::CenteredPermutation { k } => {
                if *k > MAX_ENUMERABLE_PERMUTATION_K {
                    return Err(DistError::SupportTooLarge(self.to_string()));
                }
                let perms = all_permutations(*k);
                let p = 1.0 / perms.len() as f64;
                Ok(perms.iter().map(|s| (centered_permutation_matrix(s), p)).collect())
            }
            Self::HaarOrthogonal { .. } | Self::HaarSpecialOrthogonal { .. } => {
                Err(DistError::ContinuousSupport(self.to_string()))
            }
            Self::Discrete(d) => Ok(d.atoms.clone()),
        }
    }

    /// Exact m-th moment Σ p_a x_a^m of a finite scalar law.
    pub fn moment_scalar(&self, m: u32) -> Result<f64, DistError> {
        if self.k() != 1 {
            return Err(DistError::NotScalar(self.to_string()));
        }
        if let Self::YEntry = self {
            return Ok(y_entry_moment(m));
        }
        Ok(self.enumerate_support()?.iter().map(|(x, p)| p * x[(0, 0)].powi(m as i32)).sum())
    }
}

/// E[Y^m] = (3^{m/2} + (−1)^m · 3^{1−m/2}) / 4, arranged so that E[Y] = 0 and
/// E[Y²] = 1 come out exactly.
fn y_entry_moment(m: u32) -> f64 {
    let half = 3f64.powi((m / 2) as i32);
    if m.is_multiple_of(2) {
        0.25 * (half + 3.0 / half)
    } else {
        0.25 * half * 3f64.sqrt() * (1.0 - 1.0 / (half * half))
    }
}

impl fmt::Display for LiftDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Rademacher => write!(f, "rademacher"),
            Self::YEntry => write!(f, "y_entry"),
            Self::CenteredPermutation { k } => write!(f, "centered_permutation({k})"),
            Self::HaarOrthogonal { k } => write!(f, "haar_orthogonal({k})"),
            Self::HaarSpecialOrthogonal { k } => write!(f, "haar_special_orthogonal({k})"),
            Self::Discrete(d) => write!(f, "discrete({},{})", d.k, d.atoms.len()),
        }
    }
}

impl FromStr for LiftDistribution {
    type Err = DistError;

    /// Built-in families only; discrete laws come from files.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let unknown = || DistError::Unknown(s.to_string());
        let (name, args) = split_call(s).ok_or_else(unknown)?;
        let k = match args.as_slice() {
            [] => None,
            [k] => Some(k.parse::<usize>().map_err(|_| unknown())?),
            _ => return Err(unknown()),
        };
        match (name, k) {
            ("rademacher", None) => Ok(Self::Rademacher),
            ("y_entry", None) => Ok(Self::YEntry),
            ("centered_permutation", Some(k)) => Self::centered_permutation(k),
            ("haar_orthogonal", Some(k)) => Self::haar_orthogonal(k),
            ("haar_special_orthogonal", Some(k)) => Self::haar_special_orthogonal(k),
            _ => Err(unknown()),
        }
    }
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().iter().fold(0.0_f64, |a, &b| a.max(b))
}

/// Uniform permutation of `0..k` by Fisher–Yates; row `i` maps to column `perm[i]`.
pub fn sample_permutation<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    perm.shuffle(rng);
    perm
}

pub fn permutation_matrix(perm: &[usize]) -> DMatrix<f64> {
    let k = perm.len();
    let mut m = DMatrix::zeros(k, k);
    for (r, &c) in perm.iter().enumerate() {
        m[(r, c)] = 1.0;
    }
    m
}

/// P − J_k/k for the permutation matrix P of `perm`.
pub fn centered_permutation_matrix(perm: &[usize]) -> DMatrix<f64> {
    let k = perm.len();
    let mut m = DMatrix::from_element(k, k, -1.0 / k as f64);
    for (r, &c) in perm.iter().enumerate() {
        m[(r, c)] += 1.0;
    }
    m
}

/// All permutations of `0..k` in lexicographic order.
pub fn all_permutations(k: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..k).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..k).rev().find(|&i| cur[i - 1] < cur[i]) else {
            return out;
        };
        let j = (i..k).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot has a successor");
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

fn sample_haar<R: Rng + ?Sized>(k: usize, special: bool, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(k, k, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if special && q.determinant() < 0.0 {
        q.row_mut(0).neg_mut();
    }
    q
}
