//! Closed walks, their shapes (first-appearance relabelings), and enumeration
//! of the shape set in which every edge is traversed at least twice.

use thiserror::Error;

use crate::model::BaseMatrix;

/// Largest half-length for which shapes are enumerated.
pub const MAX_SHAPE_P: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ShapeError {
    #[error("a cycle needs a positive even number of vertices, got {0}")]
    OddOrEmptyCycle(usize),
    #[error("label sequence is not a canonical shape")]
    NotCanonical,
    #[error("shape enumeration is limited to p <= {MAX_SHAPE_P}, got p = {0}")]
    TooLarge(usize),
    #[error("p must be positive")]
    ZeroP,
    #[error("shape spans {span} vertices but n = {n}")]
    SpanExceedsN { span: usize, n: usize },
    #[error("vertex {vertex} is outside [0, {n})")]
    VertexOutOfRange { vertex: usize, n: usize },
}

/// A closed walk u_1 → … → u_2p → u_1 (the closing step is implicit).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cycle {
    vertices: Vec<usize>,
}

impl Cycle {
    pub fn new(vertices: Vec<usize>) -> Result<Self, ShapeError> {
        if vertices.is_empty() || !vertices.len().is_multiple_of(2) {
            return Err(ShapeError::OddOrEmptyCycle(vertices.len()));
        }
        Ok(Self { vertices })
    }

    pub fn vertices(&self) -> &[usize] {
        &self.vertices
    }

    pub fn p(&self) -> usize {
        self.vertices.len() / 2
    }

    /// Steps `(u_j, u_{j+1})` including the closing one.
    pub fn steps(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let len = self.vertices.len();
        (0..len).map(move |j| (self.vertices[j], self.vertices[(j + 1) % len]))
    }
}

/// Canonical relabeling: labels start at 1 and each new vertex takes the next
/// unused label.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CycleShape {
    labels: Vec<usize>,
}

impl CycleShape {
    pub fn new(labels: Vec<usize>) -> Result<Self, ShapeError> {
        if labels.is_empty() || !labels.len().is_multiple_of(2) {
            return Err(ShapeError::OddOrEmptyCycle(labels.len()));
        }
        let mut max = 0;
        for &l in &labels {
            if l == 0 || l > max + 1 {
                return Err(ShapeError::NotCanonical);
            }
            max = max.max(l);
        }
        Ok(Self { labels })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn span(&self) -> usize {
        span(self)
    }

    /// Distinct undirected label edges in first-traversal order, each as
    /// `(lo, hi)` with 1-based labels, and the traversal count of each.
    pub fn edge_multiplicities(&self) -> Vec<((usize, usize), usize)> {
        let mut out: Vec<((usize, usize), usize)> = Vec::new();
        let len = self.labels.len();
        for j in 0..len {
            let (a, b) = (self.labels[j], self.labels[(j + 1) % len]);
            let e = (a.min(b), a.max(b));
            match out.iter_mut().find(|(f, _)| *f == e) {
                Some((_, c)) => *c += 1,
                None => out.push((e, 1)),
            }
        }
        out
    }

    pub fn has_self_loop(&self) -> bool {
        let len = self.labels.len();
        (0..len).any(|j| self.labels[j] == self.labels[(j + 1) % len])
    }
}

pub fn shape_of(c: &Cycle) -> CycleShape {
    let mut seen: Vec<usize> = Vec::new();
    let labels = c
        .vertices
        .iter()
        .map(|v| match seen.iter().position(|s| s == v) {
            Some(i) => i + 1,
            None => {
                seen.push(*v);
                seen.len()
            }
        })
        .collect();
    CycleShape { labels }
}

/// Number of distinct vertices a cycle of this shape visits.
pub fn span(s: &CycleShape) -> usize {
    s.labels.iter().copied().max().unwrap_or(0)
}

/// Shapes of length 2p with a fixed minimum multiplicity per edge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeSet {
    p: usize,
    shapes: Vec<CycleShape>,
}

impl ShapeSet {
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn shapes(&self) -> &[CycleShape] {
        &self.shapes
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }
}

/// Shapes of length-2p closed walks without self-loop steps in which every
/// undirected edge (closing edge included) is traversed at least twice.
pub fn enumerate_shapes(p: usize) -> Result<ShapeSet, ShapeError> {
    enumerate_closed_shapes(p, 2)
}

/// Shapes of length-2p closed walks without self-loop steps whose edges are
/// each traversed at least `min_mult` times (`min_mult = 1` gives every
/// loop-free closed shape).
pub fn enumerate_closed_shapes(p: usize, min_mult: usize) -> Result<ShapeSet, ShapeError> {
    if p == 0 {
        return Err(ShapeError::ZeroP);
    }
    if p > MAX_SHAPE_P {
        return Err(ShapeError::TooLarge(p));
    }
    let len = 2 * p;
    let mut shapes = Vec::new();
    let mut labels = Vec::with_capacity(len);
    labels.push(1);
    grow(&mut labels, 1, len, &mut |l: &[usize]| {
        if l[len - 1] == l[0] {
            return;
        }
        let s = CycleShape { labels: l.to_vec() };
        if s.edge_multiplicities().iter().all(|(_, c)| *c >= min_mult) {
            shapes.push(s);
        }
    });
    Ok(ShapeSet { p, shapes })
}

fn grow(labels: &mut Vec<usize>, max: usize, len: usize, emit: &mut impl FnMut(&[usize])) {
    if labels.len() == len {
        emit(labels);
        return;
    }
    let prev = *labels.last().expect("non-empty prefix");
    for next in 1..=max + 1 {
        if next == prev {
            continue;
        }
        labels.push(next);
        grow(labels, max.max(next), len, emit);
        labels.pop();
    }
}

/// Calls `visit` with the vertex sequence of every cycle in Γ_{s,u}, in
/// lexicographic order of the label-to-vertex assignment.
pub fn for_each_cycle_of_shape(
    s: &CycleShape,
    u: usize,
    n: usize,
    mut visit: impl FnMut(&[usize]),
) -> Result<(), ShapeError> {
    let m = s.span();
    if m > n {
        return Err(ShapeError::SpanExceedsN { span: m, n });
    }
    if u >= n {
        return Err(ShapeError::VertexOutOfRange { vertex: u, n });
    }
    let mut assign = vec![usize::MAX; m];
    let mut used = vec![false; n];
    assign[0] = u;
    used[u] = true;
    let mut walk = vec![0; s.len()];
    assign_labels(s, &mut assign, &mut used, 1, &mut walk, &mut visit);
    Ok(())
}

fn assign_labels(
    s: &CycleShape,
    assign: &mut [usize],
    used: &mut [bool],
    next: usize,
    walk: &mut [usize],
    visit: &mut impl FnMut(&[usize]),
) {
    if next == assign.len() {
        for (w, l) in walk.iter_mut().zip(&s.labels) {
            *w = assign[l - 1];
        }
        visit(walk);
        return;
    }
    for v in 0..used.len() {
        if !used[v] {
            used[v] = true;
            assign[next] = v;
            assign_labels(s, assign, used, next + 1, walk, visit);
            used[v] = false;
        }
    }
}

/// Γ_{s,u}: all cycles of shape `s` starting at `u` on `n` vertices.
pub fn enumerate_cycles_of_shape(s: &CycleShape, u: usize, n: usize) -> Result<Vec<Cycle>, ShapeError> {
    let mut out = Vec::new();
    for_each_cycle_of_shape(s, u, n, |w| out.push(Cycle { vertices: w.to_vec() }))?;
    Ok(out)
}

/// (n−1)(n−2)···(n−m+1) = |Γ_{s,u}| for a shape of span m.
pub fn falling_factorial_from(n: usize, m: usize) -> f64 {
    (1..m).map(|i| n.saturating_sub(i) as f64).product()
}

/// Product of |A| along the closed walk.
pub fn path_weight(a: &BaseMatrix, c: &Cycle) -> Result<f64, ShapeError> {
    let n = a.n();
    if let Some(&v) = c.vertices.iter().find(|&&v| v >= n) {
        return Err(ShapeError::VertexOutOfRange { vertex: v, n });
    }
    Ok(c.steps().map(|(x, y)| a.get(x, y).abs()).product())
}
