//! Base matrices, graphs and the spread parameters (row-norm σ and max-entry σ*)
//! that every bound in the crate is expressed in.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("dimension {0} is below the minimum of 2")]
    TooSmall(usize),
    #[error("entries ({i},{j}) and ({j},{i}) differ")]
    AsymmetricInput { i: usize, j: usize },
    #[error("diagonal entry ({0},{0}) is nonzero; split it off with split_diagonal first")]
    NonzeroDiagonal(usize),
    #[error("entry ({i},{j}) is not finite")]
    NonFinite { i: usize, j: usize },
    #[error("edge {{{0},{1}}} is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge {{{i},{j}}} has an endpoint outside [0, {n})")]
    VertexOutOfRange { i: usize, j: usize, n: usize },
    #[error("edge {{{0},{1}}} appears more than once")]
    DuplicateEdge(usize, usize),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid generator `{0}`")]
    Generator(String),
}

/// Symmetric real matrix with zero diagonal, stored dense.
#[derive(Clone, Debug, PartialEq)]
pub struct BaseMatrix {
    entries: DMatrix<f64>,
}

impl BaseMatrix {
    /// Validates user data. Symmetry is checked with exact equality.
    pub fn new(entries: DMatrix<f64>) -> Result<Self, ModelError> {
        let (rows, cols) = entries.shape();
        if rows != cols {
            return Err(ModelError::NotSquare { rows, cols });
        }
        if rows < 2 {
            return Err(ModelError::TooSmall(rows));
        }
        for i in 0..rows {
            for j in 0..cols {
                if !entries[(i, j)].is_finite() {
                    return Err(ModelError::NonFinite { i, j });
                }
            }
        }
        for i in 0..rows {
            if entries[(i, i)] != 0.0 {
                return Err(ModelError::NonzeroDiagonal(i));
            }
            for j in (i + 1)..cols {
                if entries[(i, j)] != entries[(j, i)] {
                    return Err(ModelError::AsymmetricInput { i, j });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(ModelError::NotSquare { rows: n, cols: bad.len() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn zeros(n: usize) -> Result<Self, ModelError> {
        Self::new(DMatrix::zeros(n, n))
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Nonzero strictly-upper-triangular entries `(i, j, A_ij)` with `i < j`, row-major.
    pub fn upper_nonzeros(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let a = self.entries[(i, j)];
                if a != 0.0 {
                    out.push((i, j, a));
                }
            }
        }
        out
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { entries: &self.entries * c }
    }

    /// Largest squared row norm, computed without a square root so that
    /// integer-valued inputs give an exact ⌈σ²⌉.
    pub fn sigma_squared(&self) -> f64 {
        self.entries.row_iter().map(|r| r.iter().map(|x| x * x).sum::<f64>()).fold(0.0, f64::max)
    }

    pub fn spread(&self) -> SpreadParams {
        compute_spread(self)
    }

    /// Parses the coordinate format: header `symmetric n`, then `i j value`
    /// lines for the upper triangle (0-indexed). Blank lines and `#` comments
    /// are skipped.
    pub fn parse_coordinate(text: &str) -> Result<Self, ModelError> {
        let mut lines = content_lines(text);
        let (hl, header) =
            lines.next().ok_or(ModelError::Parse { line: 1, msg: "missing `symmetric n` header".into() })?;
        let n = parse_header(hl, header, "symmetric")?;
        let mut m = DMatrix::zeros(n, n);
        let mut seen = BTreeSet::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(ln, "expected `i j value`"));
            }
            let i: usize = f[0].parse().map_err(|_| perr(ln, "bad row index"))?;
            let j: usize = f[1].parse().map_err(|_| perr(ln, "bad column index"))?;
            let v: f64 = f[2].parse().map_err(|_| perr(ln, "bad value"))?;
            if i >= n || j >= n {
                return Err(perr(ln, "index out of range"));
            }
            if i > j {
                return Err(perr(ln, "entries must be upper triangular (i <= j)"));
            }
            if !seen.insert((i, j)) {
                return Err(perr(ln, "duplicate entry"));
            }
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        Self::new(m)
    }

    pub fn to_coordinate(&self) -> String {
        let mut s = format!("symmetric {}\n", self.n());
        for (i, j, a) in self.upper_nonzeros() {
            s.push_str(&format!("{i} {j} {}\n", fmt_real(a)));
        }
        s
    }
}

/// Splits an arbitrary symmetric matrix into its diagonal and a zero-diagonal
/// [`BaseMatrix`]. The lift of the diagonal part is left to the caller.
pub fn split_diagonal(m: &DMatrix<f64>) -> Result<(Vec<f64>, BaseMatrix), ModelError> {
    let diag: Vec<f64> = m.diagonal().iter().copied().collect();
    let mut off = m.clone();
    off.fill_diagonal(0.0);
    Ok((diag, BaseMatrix::new(off)?))
}

/// σ (max row norm) and σ* (max absolute entry).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpreadParams {
    pub sigma: f64,
    pub sigma_star: f64,
}

pub fn compute_spread(a: &BaseMatrix) -> SpreadParams {
    let sigma_star = a.entries.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    SpreadParams { sigma: a.sigma_squared().sqrt(), sigma_star }
}

/// Simple undirected graph on `0..n`; edges are stored as `(i, j)` with `i < j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSpec {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl GraphSpec {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self, ModelError> {
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(ModelError::SelfLoop(a, b));
            }
            if a >= n || b >= n {
                return Err(ModelError::VertexOutOfRange { i: a, j: b, n });
            }
            let e = (a.min(b), a.max(b));
            if !set.insert(e) {
                return Err(ModelError::DuplicateEdge(e.0, e.1));
            }
        }
        Ok(Self { n, edges: set.into_iter().collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sorted edge list, each as `(i, j)` with `i < j`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut d = vec![0; self.n];
        for &(i, j) in &self.edges {
            d[i] += 1;
            d[j] += 1;
        }
        d
    }

    pub fn max_degree(&self) -> usize {
        max_degree(self)
    }

    pub fn adjacency(&self) -> BaseMatrix {
        adjacency_from_graph(self)
    }

    /// Vertex sets of the connected components, each sorted, ordered by smallest vertex.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for &(i, j) in &self.edges {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri != rj {
                parent[ri.max(rj)] = ri.min(rj);
            }
        }
        let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
        for v in 0..self.n {
            let r = find(&mut parent, v);
            groups.entry(r).or_default().push(v);
        }
        groups.into_values().collect()
    }

    /// Induced subgraph on `vertices` (sorted), relabelled to `0..vertices.len()`.
    pub fn induced(&self, vertices: &[usize]) -> GraphSpec {
        let mut index = vec![usize::MAX; self.n];
        for (new, &old) in vertices.iter().enumerate() {
            index[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|(i, j)| index[*i] != usize::MAX && index[*j] != usize::MAX)
            .map(|&(i, j)| (index[i], index[j]))
            .collect();
        GraphSpec { n: vertices.len(), edges }
    }

    pub fn complete(n: usize) -> Self {
        let edges = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        Self { n, edges }
    }

    pub fn path(n: usize) -> Self {
        Self { n, edges: (1..n).map(|i| (i - 1, i)).collect() }
    }

    pub fn cycle(n: usize) -> Self {
        let mut edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        if n >= 3 {
            edges.push((0, n - 1));
        }
        Self::new(n, edges).expect("cycle edges are distinct")
    }

    /// Disjoint union of `n / s` cliques of `s` vertices each. `n` must be a
    /// multiple of `s`; see [`clique_union_padded`] for the rounding rule.
    pub fn clique_union(n: usize, s: usize) -> Result<Self, ModelError> {
        if s == 0 || !n.is_multiple_of(s) {
            return Err(ModelError::Generator(format!("clique_union({n},{s}): s must divide n")));
        }
        let mut edges = Vec::new();
        for c in 0..n / s {
            let base = c * s;
            for a in 0..s {
                for b in (a + 1)..s {
                    edges.push((base + a, base + b));
                }
            }
        }
        Ok(Self { n, edges })
    }

    pub fn petersen() -> Self {
        let mut edges = Vec::with_capacity(15);
        for i in 0..5 {
            edges.push((i, (i + 1) % 5));
            edges.push((i, i + 5));
            edges.push((5 + i, 5 + (i + 2) % 5));
        }
        Self::new(10, edges).expect("petersen edges are distinct")
    }

    /// Parses `graph n` followed by `i j` lines.
    pub fn parse_edge_list(text: &str) -> Result<Self, ModelError> {
        let mut lines = content_lines(text);
        let (hl, header) = lines.next().ok_or(ModelError::Parse { line: 1, msg: "missing `graph n` header".into() })?;
        let n = parse_header(hl, header, "graph")?;
        let mut edges = Vec::new();
        for (ln, line) in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(perr(ln, "expected `i j`"));
            }
            let i: usize = f[0].parse().map_err(|_| perr(ln, "bad vertex"))?;
            let j: usize = f[1].parse().map_err(|_| perr(ln, "bad vertex"))?;
            edges.push((i, j));
        }
        Self::new(n, edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("graph {}\n", self.n);
        for (i, j) in &self.edges {
            s.push_str(&format!("{i} {j}\n"));
        }
        s
    }
}

/// Side length and padded vertex count for the clique-union construction:
/// `s = ⌈√ln n⌉` and `n` rounded up to the next multiple of `s`.
pub fn clique_union_padded(n: usize) -> (usize, usize) {
    let s = ((n as f64).ln().sqrt().ceil() as usize).max(1);
    (n.div_ceil(s) * s, s)
}

pub fn adjacency_from_graph(g: &GraphSpec) -> BaseMatrix {
    let mut m = DMatrix::zeros(g.n, g.n);
    for &(i, j) in &g.edges {
        m[(i, j)] = 1.0;
        m[(j, i)] = 1.0;
    }
    BaseMatrix { entries: m }
}

pub fn max_degree(g: &GraphSpec) -> usize {
    g.degrees().into_iter().max().unwrap_or(0)
}

/// Named base instances used by configs and the CLI.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Generator {
    Complete(usize),
    Path(usize),
    Cycle(usize),
    CliqueUnion(usize, usize),
    Petersen,
    SingleEdge,
}

impl Generator {
    pub fn graph(&self) -> Result<GraphSpec, ModelError> {
        let g = match *self {
            Generator::Complete(n) => GraphSpec::complete(n),
            Generator::Path(n) => GraphSpec::path(n),
            Generator::Cycle(n) => GraphSpec::cycle(n),
            Generator::CliqueUnion(n, s) => GraphSpec::clique_union(n, s)?,
            Generator::Petersen => GraphSpec::petersen(),
            Generator::SingleEdge => GraphSpec::complete(2),
        };
        if g.n() < 2 {
            return Err(ModelError::Generator(format!("{self} has fewer than 2 vertices")));
        }
        Ok(g)
    }
}

impl fmt::Display for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Generator::Complete(n) => write!(f, "complete({n})"),
            Generator::Path(n) => write!(f, "path({n})"),
            Generator::Cycle(n) => write!(f, "cycle({n})"),
            Generator::CliqueUnion(n, s) => write!(f, "clique_union({n},{s})"),
            Generator::Petersen => write!(f, "petersen"),
            Generator::SingleEdge => write!(f, "single_edge"),
        }
    }
}

impl FromStr for Generator {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Generator(s.to_string());
        let (name, args) = split_call(s).ok_or_else(bad)?;
        let nums: Vec<usize> = args.iter().map(|a| a.parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        match (name, nums.as_slice()) {
            ("complete", [n]) => Ok(Generator::Complete(*n)),
            ("path", [n]) => Ok(Generator::Path(*n)),
            ("cycle", [n]) => Ok(Generator::Cycle(*n)),
            ("clique_union", [n, s]) => Ok(Generator::CliqueUnion(*n, *s)),
            ("petersen", []) => Ok(Generator::Petersen),
            ("single_edge", []) => Ok(Generator::SingleEdge),
            _ => Err(bad()),
        }
    }
}

/// Splits `name(a,b)` into `("name", ["a","b"])`; a bare `name` has no args.
pub(crate) fn split_call(s: &str) -> Option<(&str, Vec<&str>)> {
    let s = s.trim();
    match s.find('(') {
        None => Some((s, Vec::new())),
        Some(open) => {
            let inner = s[open + 1..].strip_suffix(')')?;
            let args = inner.split(',').map(str::trim).filter(|a| !a.is_empty()).collect();
            Some((s[..open].trim(), args))
        }
    }
}

/// 17 significant digits; parses back to the identical `f64`.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub(crate) fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn parse_header(line: usize, header: &str, keyword: &str) -> Result<usize, ModelError> {
    let f: Vec<&str> = header.split_whitespace().collect();
    match f.as_slice() {
        [k, n] if *k == keyword => n.parse().map_err(|_| perr(line, "bad dimension in header")),
        _ => Err(perr(line, &format!("expected `{keyword} n` header"))),
    }
}

fn perr(line: usize, msg: &str) -> ModelError {
    ModelError::Parse { line, msg: msg.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> BaseMatrix {
        GraphSpec::complete(3).adjacency()
    }

    #[test]
    fn validate_base_cases() {
        let a = BaseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(a.n(), 2);
        assert_eq!(BaseMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]]), Err(ModelError::NonzeroDiagonal(0)));
        assert_eq!(
            BaseMatrix::from_rows(&[vec![0.0, 2.0], vec![1.0, 0.0]]),
            Err(ModelError::AsymmetricInput { i: 0, j: 1 })
        );
        assert_eq!(BaseMatrix::from_rows(&[vec![0.0]]), Err(ModelError::TooSmall(1)));
        assert!(matches!(BaseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0]]), Err(ModelError::NotSquare { .. })));
    }

    #[test]
    fn spread_examples() {
        let s = triangle().spread();
        assert_eq!(s.sigma, 2f64.sqrt());
        assert_eq!(s.sigma_star, 1.0);
        let z = BaseMatrix::zeros(3).unwrap().spread();
        assert_eq!((z.sigma, z.sigma_star), (0.0, 0.0));
        let t = BaseMatrix::from_rows(&[vec![0.0, 3.0], vec![3.0, 0.0]]).unwrap().spread();
        assert_eq!((t.sigma, t.sigma_star), (3.0, 3.0));
    }

    #[test]
    fn adjacency_examples() {
        let p = GraphSpec::path(3).adjacency();
        let expect = BaseMatrix::from_rows(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 0.0]]).unwrap();
        assert_eq!(p, expect);
        assert_eq!(GraphSpec::new(2, []).unwrap().adjacency(), BaseMatrix::zeros(2).unwrap());
        assert_eq!(GraphSpec::complete(4).adjacency().spread().sigma, 3f64.sqrt());
    }

    #[test]
    fn degree_examples() {
        assert_eq!(max_degree(&GraphSpec::complete(4)), 3);
        assert_eq!(max_degree(&GraphSpec::path(3)), 2);
        assert_eq!(max_degree(&GraphSpec::clique_union(8, 2).unwrap()), 1);
        assert_eq!(max_degree(&GraphSpec::petersen()), 3);
        assert!(GraphSpec::petersen().degrees().iter().all(|&d| d == 3));
    }

    #[test]
    fn graph_validation() {
        assert_eq!(GraphSpec::new(3, [(1, 1)]), Err(ModelError::SelfLoop(1, 1)));
        assert_eq!(GraphSpec::new(3, [(0, 1), (1, 0)]), Err(ModelError::DuplicateEdge(0, 1)));
        assert!(matches!(GraphSpec::new(3, [(0, 3)]), Err(ModelError::VertexOutOfRange { .. })));
    }

    #[test]
    fn clique_union_padding() {
        assert_eq!(clique_union_padded(64), (66, 3));
        assert_eq!(clique_union_padded(4096), (4098, 3));
        assert!(GraphSpec::clique_union(7, 2).is_err());
        let g = GraphSpec::clique_union(9, 3).unwrap();
        assert_eq!(g.components().len(), 3);
        assert_eq!(g.edges().len(), 9);
    }

    #[test]
    fn components_and_induced() {
        let g = GraphSpec::new(5, [(0, 2), (3, 4)]).unwrap();
        assert_eq!(g.components(), vec![vec![0, 2], vec![1], vec![3, 4]]);
        let h = g.induced(&[3, 4]);
        assert_eq!(h.edges(), &[(0, 1)]);
    }

    #[test]
    fn split_diagonal_separates_parts() {
        let m = DMatrix::from_row_slice(2, 2, &[5.0, 1.0, 1.0, -2.0]);
        let (d, off) = split_diagonal(&m).unwrap();
        assert_eq!(d, vec![5.0, -2.0]);
        assert_eq!(off.get(0, 1), 1.0);
        assert_eq!(off.get(1, 1), 0.0);
    }

    #[test]
    fn coordinate_format_round_trip() {
        let a = BaseMatrix::from_rows(&[vec![0.0, 0.1, 0.0], vec![0.1, 0.0, -2.5], vec![0.0, -2.5, 0.0]]).unwrap();
        let text = a.to_coordinate();
        assert!(text.starts_with("symmetric 3\n"));
        assert_eq!(BaseMatrix::parse_coordinate(&text).unwrap(), a);
    }

    #[test]
    fn coordinate_format_rejects_bad_input() {
        assert!(matches!(
            BaseMatrix::parse_coordinate("symmetric 2\n1 0 1.0\n"),
            Err(ModelError::Parse { line: 2, .. })
        ));
        assert_eq!(BaseMatrix::parse_coordinate("symmetric 2\n0 0 1.0\n"), Err(ModelError::NonzeroDiagonal(0)));
        assert!(BaseMatrix::parse_coordinate("matrix 2\n").is_err());
    }

    #[test]
    fn edge_list_round_trip() {
        let g = GraphSpec::petersen();
        assert_eq!(GraphSpec::parse_edge_list(&g.to_edge_list()).unwrap(), g);
    }

    #[test]
    fn generator_parsing() {
        assert_eq!("complete(4)".parse::<Generator>().unwrap(), Generator::Complete(4));
        assert_eq!("clique_union(8, 2)".parse::<Generator>().unwrap(), Generator::CliqueUnion(8, 2));
        assert_eq!("petersen".parse::<Generator>().unwrap(), Generator::Petersen);
        assert!("complete".parse::<Generator>().is_err());
        assert!("path(1)".parse::<Generator>().unwrap().graph().is_err());
        for g in ["complete(5)", "path(3)", "cycle(6)", "clique_union(6,3)", "petersen", "single_edge"] {
            let parsed: Generator = g.parse().unwrap();
            assert_eq!(parsed.to_string(), g.replace(' ', ""));
        }
    }

    #[test]
    fn fmt_real_round_trips() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, std::f64::consts::PI, 1e300] {
            assert_eq!(fmt_real(x).parse::<f64>().unwrap(), x);
        }
    }
}
