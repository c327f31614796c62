//! The lifted matrix A^(k,π) = Σ A_ij (E_ij ⊗ Π_ij) in block-sparse form, and
//! random k-lifts of graphs.
//!
//! Coordinates are vertex-major: base vertex `i` owns `i*k .. (i+1)*k`. Only the
//! upper blocks `(i, j)` with `i < j` are stored; block `(j, i)` is the transpose.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::distribution::{centered_permutation_matrix, permutation_matrix, sample_permutation, LiftDistribution};
use crate::model::{content_lines, fmt_real, BaseMatrix, GraphSpec};
use crate::rng::RngState;

/// Largest dimension `to_dense` will materialize.
pub const DENSE_LIMIT: usize = 4096;

#[derive(Debug, Error, PartialEq)]
pub enum LiftError {
    #[error("vector has length {got}, operator dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("dimension {dim} exceeds the dense limit {limit}")]
    TooLarge { dim: usize, limit: usize },
    #[error("block ({i},{j}) is not an upper off-diagonal block of an n = {n} lift")]
    BlockIndex { i: usize, j: usize, n: usize },
    #[error("block ({i},{j}) is {rows}x{cols}, expected {k}x{k}")]
    BlockShape { i: usize, j: usize, rows: usize, cols: usize, k: usize },
    #[error("block ({0},{1}) is stored twice")]
    DuplicateBlock(usize, usize),
    #[error("edge {edge} carries an invalid permutation")]
    NotPermutation { edge: usize },
    #[error("expected {expected} permutations, got {got}")]
    PermutationCount { expected: usize, got: usize },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct LiftBlock {
    pub i: usize,
    pub j: usize,
    pub coeff: f64,
    pub block: DMatrix<f64>,
}

/// Symmetric kn×kn operator stored as its upper k×k blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedBlockMatrix {
    n: usize,
    k: usize,
    blocks: Vec<LiftBlock>,
}

/// Options for [`build_lift_with`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LiftOptions {
    /// Draw Π_ij for every pair `i < j`, including those with A_ij = 0, so the
    /// stream consumption matches a literal all-pairs sampler.
    pub sample_all_pairs: bool,
}

impl LiftedBlockMatrix {
    pub fn new(n: usize, k: usize, mut blocks: Vec<LiftBlock>) -> Result<Self, LiftError> {
        for b in &blocks {
            if b.i >= b.j || b.j >= n {
                return Err(LiftError::BlockIndex { i: b.i, j: b.j, n });
            }
            if b.block.shape() != (k, k) {
                return Err(LiftError::BlockShape { i: b.i, j: b.j, rows: b.block.nrows(), cols: b.block.ncols(), k });
            }
        }
        blocks.sort_by_key(|b| (b.i, b.j));
        if let Some(w) = blocks.windows(2).find(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(LiftError::DuplicateBlock(w[0].i, w[0].j));
        }
        Ok(Self { n, k, blocks })
    }

    pub fn zero(n: usize, k: usize) -> Self {
        Self { n, k, blocks: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.n * self.k
    }

    pub fn blocks(&self) -> &[LiftBlock] {
        &self.blocks
    }

    pub fn matvec(&self, v: &[f64]) -> Result<Vec<f64>, LiftError> {
        let mut out = vec![0.0; self.dim()];
        self.matvec_into(v, &mut out)?;
        Ok(out)
    }

    /// `out = M v`.
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) -> Result<(), LiftError> {
        let dim = self.dim();
        for len in [v.len(), out.len()] {
            if len != dim {
                return Err(LiftError::DimensionMismatch { expected: dim, got: len });
            }
        }
        out.fill(0.0);
        let k = self.k;
        for b in &self.blocks {
            // Column-major block: entry (r, c) at data[c * k + r].
            let data = b.block.as_slice();
            let (bi, bj) = (b.i * k, b.j * k);
            for c in 0..k {
                let xj = b.coeff * v[bj + c];
                let col = &data[c * k..(c + 1) * k];
                let mut acc = 0.0;
                for r in 0..k {
                    out[bi + r] += col[r] * xj;
                    acc += col[r] * v[bi + r];
                }
                out[bj + c] += b.coeff * acc;
            }
        }
        Ok(())
    }

    pub fn to_dense(&self) -> Result<DMatrix<f64>, LiftError> {
        let dim = self.dim();
        if dim > DENSE_LIMIT {
            return Err(LiftError::TooLarge { dim, limit: DENSE_LIMIT });
        }
        let k = self.k;
        let mut d = DMatrix::zeros(dim, dim);
        for b in &self.blocks {
            for r in 0..k {
                for c in 0..k {
                    let x = b.coeff * b.block[(r, c)];
                    d[(b.i * k + r, b.j * k + c)] = x;
                    d[(b.j * k + c, b.i * k + r)] = x;
                }
            }
        }
        Ok(d)
    }

    /// Dump format: `lift n k`, then per block `i j coeff` and k rows of k reals.
    pub fn to_dump(&self) -> String {
        let mut s = format!("lift {} {}\n", self.n, self.k);
        for b in &self.blocks {
            s.push_str(&format!("{} {} {}\n", b.i, b.j, fmt_real(b.coeff)));
            for r in 0..self.k {
                let row: Vec<String> = (0..self.k).map(|c| fmt_real(b.block[(r, c)])).collect();
                s.push_str(&row.join(" "));
                s.push('\n');
            }
        }
        s
    }

    pub fn parse_dump(text: &str) -> Result<Self, LiftError> {
        let perr = |line, msg: &str| LiftError::Parse { line, msg: msg.to_string() };
        let mut lines = content_lines(text).peekable();
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "missing `lift n k` header"))?;
        let f: Vec<&str> = header.split_whitespace().collect();
        let (n, k) = match f.as_slice() {
            ["lift", n, k] => {
                (n.parse::<usize>().map_err(|_| perr(hl, "bad n"))?, k.parse::<usize>().map_err(|_| perr(hl, "bad k"))?)
            }
            _ => return Err(perr(hl, "expected `lift n k` header")),
        };
        let mut blocks = Vec::new();
        while let Some((bl, line)) = lines.next() {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return Err(perr(bl, "expected `i j coeff`"));
            }
            let i = f[0].parse().map_err(|_| perr(bl, "bad i"))?;
            let j = f[1].parse().map_err(|_| perr(bl, "bad j"))?;
            let coeff = f[2].parse().map_err(|_| perr(bl, "bad coefficient"))?;
            let mut block = DMatrix::zeros(k, k);
            for r in 0..k {
                let (rl, row) = lines.next().ok_or_else(|| perr(bl, "missing block row"))?;
                let vals: Vec<f64> = row
                    .split_whitespace()
                    .map(|x| x.parse().map_err(|_| perr(rl, "bad block entry")))
                    .collect::<Result<_, _>>()?;
                if vals.len() != k {
                    return Err(perr(rl, "block row has the wrong length"));
                }
                for (c, x) in vals.into_iter().enumerate() {
                    block[(r, c)] = x;
                }
            }
            blocks.push(LiftBlock { i, j, coeff, block });
        }
        Self::new(n, k, blocks)
    }
}

pub fn build_lift(a: &BaseMatrix, dist: &LiftDistribution, rng: &mut RngState) -> LiftedBlockMatrix {
    build_lift_with(a, dist, rng, LiftOptions::default())
}

/// One independent Π_ij per `i < j` with A_ij ≠ 0, drawn in row-major pair order.
pub fn build_lift_with(
    a: &BaseMatrix,
    dist: &LiftDistribution,
    rng: &mut RngState,
    opts: LiftOptions,
) -> LiftedBlockMatrix {
    let n = a.n();
    let mut blocks = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let coeff = a.get(i, j);
            if coeff != 0.0 {
                blocks.push(LiftBlock { i, j, coeff, block: dist.sample(rng) });
            } else if opts.sample_all_pairs {
                dist.sample(rng);
            }
        }
    }
    LiftedBlockMatrix { n, k: dist.k(), blocks }
}

/// A k-lift of a graph: one permutation of `0..k` per base edge, aligned with
/// `base.edges()`. Copy `a` of vertex `i` is joined to copy `perm[a]` of `j`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphLift {
    base: GraphSpec,
    k: usize,
    perms: Vec<Vec<usize>>,
}

impl GraphLift {
    pub fn new(base: GraphSpec, k: usize, perms: Vec<Vec<usize>>) -> Result<Self, LiftError> {
        if perms.len() != base.edges().len() {
            return Err(LiftError::PermutationCount { expected: base.edges().len(), got: perms.len() });
        }
        for (edge, p) in perms.iter().enumerate() {
            let mut seen = vec![false; k];
            if p.len() != k || !p.iter().all(|&x| x < k && !std::mem::replace(&mut seen[x], true)) {
                return Err(LiftError::NotPermutation { edge });
            }
        }
        Ok(Self { base, k, perms })
    }

    pub fn base(&self) -> &GraphSpec {
        &self.base
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn permutations(&self) -> &[Vec<usize>] {
        &self.perms
    }

    /// Adjacency of G^(k).
    pub fn adjacency(&self) -> LiftedBlockMatrix {
        self.blocks_from(permutation_matrix)
    }

    /// The lift restricted to each connected component of the base graph.
    pub fn component_lifts(&self) -> Vec<GraphLift> {
        self.base
            .components()
            .into_iter()
            .map(|verts| {
                let sub = self.base.induced(&verts);
                let mut index = vec![usize::MAX; self.base.n()];
                for (new, &old) in verts.iter().enumerate() {
                    index[old] = new;
                }
                let perms = self
                    .base
                    .edges()
                    .iter()
                    .zip(&self.perms)
                    .filter(|((i, _), _)| index[*i] != usize::MAX)
                    .map(|(_, p)| p.clone())
                    .collect();
                GraphLift { base: sub, k: self.k, perms }
            })
            .collect()
    }

    fn blocks_from(&self, f: impl Fn(&[usize]) -> DMatrix<f64>) -> LiftedBlockMatrix {
        let blocks = self
            .base
            .edges()
            .iter()
            .zip(&self.perms)
            .map(|(&(i, j), p)| LiftBlock { i, j, coeff: 1.0, block: f(p) })
            .collect();
        LiftedBlockMatrix { n: self.base.n(), k: self.k, blocks }
    }
}

/// Uniform independent perfect matching per edge, in edge order.
pub fn build_graph_lift(g: &GraphSpec, k: usize, rng: &mut RngState) -> GraphLift {
    let perms = g.edges().iter().map(|_| sample_permutation(k, rng)).collect();
    GraphLift { base: g.clone(), k, perms }
}

/// E A^(k) = A ⊗ (J_k / k).
pub fn expected_graph_lift(g: &GraphSpec, k: usize) -> LiftedBlockMatrix {
    let j = DMatrix::from_element(k, k, 1.0 / k as f64);
    let blocks = g.edges().iter().map(|&(a, b)| LiftBlock { i: a, j: b, coeff: 1.0, block: j.clone() }).collect();
    LiftedBlockMatrix { n: g.n(), k, blocks }
}

/// A^(k) − E A^(k): blocks Π_e − J_k/k.
pub fn center_graph_lift(l: &GraphLift) -> LiftedBlockMatrix {
    l.blocks_from(centered_permutation_matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distribution::DiscreteLaw;
    use crate::model::GraphSpec;

    fn point_mass_one() -> LiftDistribution {
        LiftDistribution::discrete_unchecked(DiscreteLaw::scalar(&[(1.0, 1.0)]).unwrap())
    }

    fn dense_mul(d: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
        (d * nalgebra::DVector::from_column_slice(v)).as_slice().to_vec()
    }

    #[test]
    fn point_mass_lift_reproduces_base() {
        let a = BaseMatrix::from_rows(&[vec![0.0, 2.0, -1.0], vec![2.0, 0.0, 0.5], vec![-1.0, 0.5, 0.0]]).unwrap();
        let l = build_lift(&a, &point_mass_one(), &mut RngState::new(0, 0));
        assert_eq!(l.to_dense().unwrap(), *a.entries());
        let v = [0.3, -1.0, 2.0];
        let got = l.matvec(&v).unwrap();
        let want = dense_mul(a.entries(), &v);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn rademacher_single_edge_is_signed_swap() {
        let a = GraphSpec::complete(2).adjacency();
        let mut plus = 0;
        for s in 0..200 {
            let d = build_lift(&a, &LiftDistribution::Rademacher, &mut RngState::new(s, 0)).to_dense().unwrap();
            assert_eq!(d[(0, 0)], 0.0);
            assert_eq!(d[(0, 1)], d[(1, 0)]);
            assert_eq!(d[(0, 1)].abs(), 1.0);
            if d[(0, 1)] > 0.0 {
                plus += 1;
            }
        }
        assert!((60..140).contains(&plus));
    }

    #[test]
    fn zero_entries_draw_no_blocks() {
        let g = GraphSpec::path(4);
        let l =
            build_lift(&g.adjacency(), &LiftDistribution::centered_permutation(3).unwrap(), &mut RngState::new(1, 0));
        assert_eq!(l.blocks().len(), 3);
        assert_eq!(l.dim(), 12);
    }

    #[test]
    fn sample_all_pairs_keeps_law_but_shifts_stream() {
        let a = GraphSpec::path(3).adjacency();
        let d = LiftDistribution::haar_orthogonal(2).unwrap();
        let opts = LiftOptions { sample_all_pairs: true };
        let sparse = build_lift(&a, &d, &mut RngState::new(4, 0));
        let full = build_lift_with(&a, &d, &mut RngState::new(4, 0), opts);
        assert_eq!(full.blocks().len(), 2);
        // pair (0,2) is skipped in between, so the (1,2) block differs
        assert_eq!(sparse.blocks()[0], full.blocks()[0]);
        assert_ne!(sparse.blocks()[1], full.blocks()[1]);
    }

    #[test]
    fn zero_operator_matvec() {
        let l = LiftedBlockMatrix::zero(3, 2);
        assert_eq!(l.matvec(&[1.0; 6]).unwrap(), vec![0.0; 6]);
        assert_eq!(l.matvec(&[1.0; 5]), Err(LiftError::DimensionMismatch { expected: 6, got: 5 }));
    }

    #[test]
    fn matvec_matches_dense_product() {
        let g = GraphSpec::complete(4);
        let a = g.adjacency().scaled(0.7);
        let mut rng = RngState::new(21, 0);
        for dist in [LiftDistribution::haar_orthogonal(3).unwrap(), LiftDistribution::centered_permutation(3).unwrap()]
        {
            let l = build_lift(&a, &dist, &mut rng);
            let d = l.to_dense().unwrap();
            let v: Vec<f64> = (0..12).map(|i| ((i * 7 + 3) % 11) as f64 - 5.0).collect();
            let got = l.matvec(&v).unwrap();
            for (g, w) in got.iter().zip(dense_mul(&d, &v)) {
                assert!((g - w).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn dense_layout_single_block() {
        let block = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let l = LiftedBlockMatrix::new(2, 2, vec![LiftBlock { i: 0, j: 1, coeff: 1.0, block: block.clone() }]).unwrap();
        let d = l.to_dense().unwrap();
        assert_eq!(d.view((0, 2), (2, 2)), block);
        assert_eq!(d.view((2, 0), (2, 2)), block.transpose());
        assert_eq!(d.view((0, 0), (2, 2)), DMatrix::<f64>::zeros(2, 2));
        assert_eq!(d, d.transpose());
    }

    #[test]
    fn triangle_lift_has_zero_trace() {
        let l = build_lift(
            &GraphSpec::complete(3).adjacency(),
            &LiftDistribution::centered_permutation(2).unwrap(),
            &mut RngState::new(5, 0),
        );
        let d = l.to_dense().unwrap();
        assert_eq!(d.trace(), 0.0);
        assert_eq!((&d - d.transpose()).amax(), 0.0);
    }

    #[test]
    fn to_dense_guard() {
        let l = LiftedBlockMatrix::zero(2049, 2);
        assert_eq!(l.to_dense(), Err(LiftError::TooLarge { dim: 4098, limit: DENSE_LIMIT }));
    }

    #[test]
    fn block_validation() {
        let b = |i, j, k| LiftBlock { i, j, coeff: 1.0, block: DMatrix::zeros(k, k) };
        assert!(matches!(LiftedBlockMatrix::new(3, 2, vec![b(1, 1, 2)]), Err(LiftError::BlockIndex { .. })));
        assert!(matches!(LiftedBlockMatrix::new(3, 2, vec![b(0, 3, 2)]), Err(LiftError::BlockIndex { .. })));
        assert!(matches!(LiftedBlockMatrix::new(3, 2, vec![b(0, 1, 3)]), Err(LiftError::BlockShape { .. })));
        assert_eq!(LiftedBlockMatrix::new(3, 2, vec![b(0, 1, 2), b(0, 1, 2)]), Err(LiftError::DuplicateBlock(0, 1)));
    }

    #[test]
    fn dump_round_trip_is_exact() {
        let l = build_lift(
            &GraphSpec::petersen().adjacency().scaled(1.0 / 3.0),
            &LiftDistribution::haar_special_orthogonal(3).unwrap(),
            &mut RngState::new(8, 0),
        );
        let text = l.to_dump();
        assert!(text.starts_with("lift 10 3\n"));
        assert_eq!(LiftedBlockMatrix::parse_dump(&text).unwrap(), l);
        assert!(matches!(LiftedBlockMatrix::parse_dump("lift 2 1\n0 1 1.0\n"), Err(LiftError::Parse { .. })));
    }

    #[test]
    fn single_edge_graph_lift_both_matchings() {
        let g = GraphSpec::complete(2);
        let mut identity = 0;
        for s in 0..400 {
            let l = build_graph_lift(&g, 2, &mut RngState::new(s, 0));
            let d = l.adjacency().to_dense().unwrap();
            // perfect matching between {0,1} and {2,3}
            for r in 0..4 {
                assert_eq!(d.row(r).sum(), 1.0);
            }
            if l.permutations()[0] == vec![0, 1] {
                identity += 1;
            }
        }
        assert!((150..250).contains(&identity), "{identity}");
    }

    #[test]
    fn degenerate_k1_lift_is_base() {
        let g = GraphSpec::petersen();
        let l = build_graph_lift(&g, 1, &mut RngState::new(0, 0));
        assert_eq!(l.adjacency().to_dense().unwrap(), *g.adjacency().entries());
        assert_eq!(expected_graph_lift(&g, 1).to_dense().unwrap(), *g.adjacency().entries());
        assert_eq!(center_graph_lift(&l).to_dense().unwrap(), DMatrix::zeros(10, 10));
    }

    #[test]
    fn expected_single_edge_blocks() {
        let e = expected_graph_lift(&GraphSpec::complete(2), 2);
        assert_eq!(e.blocks()[0].block, DMatrix::from_element(2, 2, 0.5));
    }

    #[test]
    fn centered_identity_matching() {
        let l = GraphLift::new(GraphSpec::complete(2), 2, vec![vec![0, 1]]).unwrap();
        let c = center_graph_lift(&l);
        assert_eq!(c.blocks()[0].block, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
    }

    #[test]
    fn center_plus_expected_is_adjacency() {
        let g = GraphSpec::petersen();
        for s in 0..5 {
            let l = build_graph_lift(&g, 3, &mut RngState::new(s, 0));
            let sum = center_graph_lift(&l).to_dense().unwrap() + expected_graph_lift(&g, 3).to_dense().unwrap();
            let adj = l.adjacency().to_dense().unwrap();
            assert!((sum - adj).amax() < 1e-15);
        }
    }

    #[test]
    fn graph_lift_preserves_degrees() {
        let g = GraphSpec::new(5, [(0, 1), (0, 2), (0, 3), (3, 4)]).unwrap();
        let deg = g.degrees();
        let l = build_graph_lift(&g, 4, &mut RngState::new(3, 0));
        let adj = l.adjacency();
        let ones = vec![1.0; adj.dim()];
        let rows = adj.matvec(&ones).unwrap();
        for (idx, r) in rows.iter().enumerate() {
            assert_eq!(*r, deg[idx / 4] as f64);
        }
    }

    #[test]
    fn graph_lift_validation() {
        let g = GraphSpec::complete(2);
        assert_eq!(GraphLift::new(g.clone(), 2, vec![vec![0, 0]]), Err(LiftError::NotPermutation { edge: 0 }));
        assert_eq!(GraphLift::new(g, 2, vec![]), Err(LiftError::PermutationCount { expected: 1, got: 0 }));
    }

    #[test]
    fn component_lifts_partition_edges() {
        let g = GraphSpec::clique_union(9, 3).unwrap();
        let l = build_graph_lift(&g, 2, &mut RngState::new(2, 0));
        let parts = l.component_lifts();
        assert_eq!(parts.len(), 3);
        for (c, part) in parts.iter().enumerate() {
            assert_eq!(part.base(), &GraphSpec::complete(3));
            assert_eq!(part.permutations(), &l.permutations()[3 * c..3 * c + 3]);
        }
    }
}
