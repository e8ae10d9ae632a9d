//! Distance matrices and exact 0-dimensional Vietoris-Rips persistence.
//!
//! For 0-dimensional features the persistence-critical edges of the
//! Vietoris-Rips filtration are exactly the minimum-spanning-tree edges of
//! the complete graph weighted by the distance matrix: sweeping the scale
//! parameter upward, two components merge precisely when an MST edge
//! appears. We compute them with Kruskal's algorithm over a union-find with
//! path compression and union by rank. Ties between equal distances break
//! lexicographically on (i, j) so results are reproducible.
//!
//! Instances are treated as flat vectors as-is in both spaces; no feature
//! normalization is applied before distance computation.

use crate::autodiff::pairwise_sq;
use crate::tensor::Tensor;

#[derive(Debug, thiserror::Error)]
pub enum PersistenceError {
    #[error("distance matrix: expected {expected} entries for n = {n}, got {got}")]
    WrongSize { n: usize, expected: usize, got: usize },
    #[error("distance matrix: non-finite entry at ({i}, {j})")]
    NonFinite { i: usize, j: usize },
    #[error("distance matrix: negative entry {value} at ({i}, {j})")]
    Negative { i: usize, j: usize, value: f64 },
    #[error("distance matrix: nonzero diagonal entry {value} at ({i}, {i})")]
    NonzeroDiagonal { i: usize, value: f64 },
    #[error("distance matrix: asymmetric at ({i}, {j}): {a} vs {b}")]
    Asymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("points: non-finite coordinate in row {row}")]
    NonFinitePoint { row: usize },
    #[error("points: expected a rank-2 array, got shape {shape:?}")]
    NotPoints { shape: Vec<usize> },
    #[error("pairing refers to point {index} but the matrix has only {n} points")]
    PairingOutOfRange { index: usize, n: usize },
}

pub type Result<T> = std::result::Result<T, PersistenceError>;

/// Symmetric nonnegative pairwise-distance matrix of one bag's instances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates and wraps a row-major n×n distance matrix.
    pub fn new(n: usize, entries: Vec<f64>) -> Result<Self> {
        if entries.len() != n * n {
            return Err(PersistenceError::WrongSize {
                n,
                expected: n * n,
                got: entries.len(),
            });
        }
        for i in 0..n {
            for j in 0..n {
                let v = entries[i * n + j];
                if !v.is_finite() {
                    return Err(PersistenceError::NonFinite { i, j });
                }
                if v < 0.0 {
                    return Err(PersistenceError::Negative { i, j, value: v });
                }
            }
            let d = entries[i * n + i];
            if d != 0.0 {
                return Err(PersistenceError::NonzeroDiagonal { i, value: d });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (entries[i * n + j], entries[j * n + i]);
                if a != b {
                    return Err(PersistenceError::Asymmetric { i, j, a, b });
                }
            }
        }
        Ok(DistanceMatrix { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }
}

/// The 0-dim persistence-critical edges of a distance matrix: exactly the
/// MST edges, listed with `i < j` in non-decreasing death order.
#[derive(Clone, Debug, PartialEq)]
pub struct PersistencePairing {
    pub edges: Vec<(usize, usize)>,
    pub deaths: Vec<f64>,
}

impl PersistencePairing {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// 0-dimensional persistence diagram: one (birth = 0, death) point per
/// pairing edge.
#[derive(Clone, Debug, PartialEq)]
pub struct PersistenceDiagram0D {
    pub points: Vec<(f64, f64)>,
}

/// Euclidean distances between the rows of an n×d point array.
///
/// The upper triangle is computed and mirrored, so the result is exactly
/// symmetric with a zero diagonal. Uses the same squared-distance kernel as
/// the differentiable path so both sides of the topological loss agree
/// bitwise.
pub fn euclidean_distance_matrix(points: &Tensor) -> Result<DistanceMatrix> {
    if points.shape().len() != 2 {
        return Err(PersistenceError::NotPoints {
            shape: points.shape().to_vec(),
        });
    }
    let (n, d) = (points.rows(), points.cols());
    for i in 0..n {
        if points.row(i).iter().any(|v| !v.is_finite()) {
            return Err(PersistenceError::NonFinitePoint { row: i });
        }
    }
    let mut entries = pairwise_sq(points.data(), n, d);
    for v in &mut entries {
        *v = v.sqrt();
    }
    DistanceMatrix::new(n, entries)
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false if x and y were already in the same set.
    fn union(&mut self, x: usize, y: usize) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        match self.rank[rx].cmp(&self.rank[ry]) {
            std::cmp::Ordering::Less => self.parent[rx] = ry,
            std::cmp::Ordering::Greater => self.parent[ry] = rx,
            std::cmp::Ordering::Equal => {
                self.parent[ry] = rx;
                self.rank[rx] += 1;
            }
        }
        true
    }
}

/// 0-dimensional persistence pairing of a distance matrix.
///
/// Kruskal over all n(n-1)/2 edges sorted ascending by (distance, i, j);
/// the accepted edges are the component-merge events of the filtration.
pub fn vr_persistence_0d(matrix: &DistanceMatrix) -> PersistencePairing {
    let n = matrix.n();
    if n <= 1 {
        return PersistencePairing {
            edges: Vec::new(),
            deaths: Vec::new(),
        };
    }
    let mut edge_list: Vec<(usize, usize)> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            edge_list.push((i, j));
        }
    }
    edge_list.sort_by(|&(i1, j1), &(i2, j2)| {
        matrix
            .get(i1, j1)
            .total_cmp(&matrix.get(i2, j2))
            .then(i1.cmp(&i2))
            .then(j1.cmp(&j2))
    });
    let mut uf = UnionFind::new(n);
    let mut edges = Vec::with_capacity(n - 1);
    let mut deaths = Vec::with_capacity(n - 1);
    for (i, j) in edge_list {
        if uf.union(i, j) {
            edges.push((i, j));
            deaths.push(matrix.get(i, j));
            if edges.len() == n - 1 {
                break;
            }
        }
    }
    PersistencePairing { edges, deaths }
}

/// Expands a pairing into a persistence diagram: (0, d[i][j]) per edge.
pub fn diagram_from_pairing(
    matrix: &DistanceMatrix,
    pairing: &PersistencePairing,
) -> Result<PersistenceDiagram0D> {
    let n = matrix.n();
    let mut points = Vec::with_capacity(pairing.edges.len());
    for &(i, j) in &pairing.edges {
        if i >= n || j >= n {
            return Err(PersistenceError::PairingOutOfRange {
                index: i.max(j),
                n,
            });
        }
        points.push((0.0, matrix.get(i, j)));
    }
    Ok(PersistenceDiagram0D { points })
}
