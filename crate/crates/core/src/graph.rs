//! Undirected communication topology of the formation.
//!
//! The graph is unweighted (`a_ij ∈ {0, 1}`) and immutable after
//! construction. Spectral quantities are computed on dense matrices with a
//! symmetric eigensolver; formation sizes are a handful of vehicles.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use thiserror::Error;

use crate::Vec3;

/// Relative tolerance used to decide that an eigenvalue is zero.
pub const ZERO_EIGEN_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("a formation needs at least one vehicle")]
    Empty,
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({i}, {j}) references a vehicle outside 0..{n}")]
    OutOfRange { i: usize, j: usize, n: usize },
    #[error(
        "graph is disconnected; positive definiteness of L⊗C1 + B⊗C2 requires a connected graph"
    )]
    Disconnected,
    #[error("pinning vector has length {got}, expected {expected}")]
    PinningLength { got: usize, expected: usize },
    #[error("pinning entry {index} is negative ({value})")]
    NegativePinning { index: usize, value: f64 },
}

/// Undirected graph over `n` vehicles, stored as a dense 0/1 adjacency matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationGraph {
    n: usize,
    adjacency: DMatrix<f64>,
}

impl FormationGraph {
    /// Builds a graph from 0-based edge pairs. Duplicate edges are harmless.
    pub fn new(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut adjacency = DMatrix::zeros(n, n);
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::OutOfRange { i, j, n });
            }
            if i == j {
                return Err(GraphError::SelfLoop(i, j));
            }
            adjacency[(i, j)] = 1.0;
            adjacency[(j, i)] = 1.0;
        }
        Ok(Self { n, adjacency })
    }

    /// Builds a graph from 1-based edge pairs, the numbering used in scenario files.
    pub fn from_one_based(n: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let mut zero_based = Vec::with_capacity(edges.len());
        for &(i, j) in edges {
            if i == 0 || j == 0 {
                return Err(GraphError::OutOfRange {
                    i: i.wrapping_sub(1),
                    j: j.wrapping_sub(1),
                    n,
                });
            }
            zero_based.push((i - 1, j - 1));
        }
        Self::new(n, &zero_based)
    }

    /// The complete graph K_n.
    pub fn complete(n: usize) -> Result<Self, GraphError> {
        let edges: Vec<_> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        Self::new(n, &edges)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn is_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[(i, j)] != 0.0
    }

    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&j| self.is_edge(i, j))
    }

    /// Undirected edges as 0-based pairs with `i < j`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n)
            .flat_map(|i| (i + 1..self.n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.is_edge(i, j))
            .collect()
    }

    /// Row sums of the adjacency matrix.
    pub fn degrees(&self) -> DVector<f64> {
        DVector::from_iterator(self.n, self.adjacency.row_iter().map(|r| r.sum()))
    }

    /// `L = D − A`.
    pub fn laplacian(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.degrees()) - &self.adjacency
    }

    /// Eigenvalues of the Laplacian in ascending order.
    pub fn laplacian_spectrum(&self) -> Vec<f64> {
        sorted_eigenvalues(self.laplacian())
    }

    /// Breadth-first reachability from vehicle 0.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = queue.pop_front() {
            for j in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    queue.push_back(j);
                }
            }
        }
        count == self.n
    }

    /// Laplacian algebraic connectivity λ₂ (0 for a single vehicle).
    pub fn algebraic_connectivity(&self) -> f64 {
        self.laplacian_spectrum().get(1).copied().unwrap_or(0.0)
    }
}

/// Nonnegative diagonal pinning matrix `B = diag(b_1, …, b_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PinningMatrix {
    diag: DVector<f64>,
}

impl PinningMatrix {
    pub fn new(diag: Vec<f64>) -> Result<Self, GraphError> {
        if let Some((index, &value)) = diag.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(GraphError::NegativePinning { index, value });
        }
        Ok(Self {
            diag: DVector::from_vec(diag),
        })
    }

    pub fn diag(&self) -> &DVector<f64> {
        &self.diag
    }

    pub fn rank(&self) -> usize {
        self.diag.iter().filter(|v| **v > 0.0).count()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.diag)
    }
}

/// `λ_min(L ⊗ C₁ + B ⊗ C₂)` for positive diagonal `C₁ = diag(c1)`, `C₂ = diag(c2)`.
///
/// A disconnected graph is rejected. A pinning matrix of rank zero leaves
/// `1ₙ ⊗ q` in the kernel, so the returned value is (numerically) zero and a
/// warning is logged.
pub fn lemma2_min_eigenvalue(
    g: &FormationGraph,
    b: &PinningMatrix,
    c1: &Vec3,
    c2: &Vec3,
) -> Result<f64, GraphError> {
    if b.diag.len() != g.n {
        return Err(GraphError::PinningLength {
            got: b.diag.len(),
            expected: g.n,
        });
    }
    if !g.is_connected() {
        return Err(GraphError::Disconnected);
    }
    if b.rank() == 0 {
        log::warn!("pinning matrix has rank 0; L⊗C1 + B⊗C2 is singular");
    }
    let c1 = DMatrix::from_diagonal(&DVector::from_column_slice(c1.as_slice()));
    let c2 = DMatrix::from_diagonal(&DVector::from_column_slice(c2.as_slice()));
    let m = g.laplacian().kronecker(&c1) + b.matrix().kronecker(&c2);
    let values = sorted_eigenvalues(m.clone());
    let lambda_min = values[0];
    // Snap roundoff-level values to zero, relative to the matrix scale.
    if lambda_min.abs() <= ZERO_EIGEN_TOL * m.norm().max(1.0) {
        return Ok(0.0);
    }
    Ok(lambda_min)
}

/// `Iₙ ⊗ diag(k) + L ⊗ diag(c)`, the stacked gain of a consensus-coupled
/// per-vehicle law.
pub fn coupled_gain(g: &FormationGraph, k: &Vec3, c: &Vec3) -> DMatrix<f64> {
    let k = DMatrix::from_diagonal(&DVector::from_column_slice(k.as_slice()));
    let c = DMatrix::from_diagonal(&DVector::from_column_slice(c.as_slice()));
    DMatrix::identity(g.n, g.n).kronecker(&k) + g.laplacian().kronecker(&c)
}

/// Ascending eigenvalues of a symmetric matrix.
pub fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    let mut values: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vshape() -> FormationGraph {
        FormationGraph::from_one_based(5, &[(1, 2), (1, 3), (2, 3), (2, 4), (3, 4), (3, 5), (4, 5)])
            .unwrap()
    }

    #[test]
    fn vshape_adjacency_and_degrees() {
        let g = vshape();
        let expected = [
            [0., 1., 1., 0., 0.],
            [1., 0., 1., 1., 0.],
            [1., 1., 0., 1., 1.],
            [0., 1., 1., 0., 1.],
            [0., 0., 1., 1., 0.],
        ];
        for (i, row) in expected.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                assert_eq!(g.adjacency()[(i, j)], *v);
            }
        }
        assert_eq!(g.degrees().as_slice(), &[2., 3., 4., 3., 2.]);
        let l = g.laplacian();
        assert_eq!(
            l.row(0).iter().copied().collect::<Vec<_>>(),
            vec![2., -1., -1., 0., 0.]
        );
        assert!(g.is_connected());
    }

    #[test]
    fn single_edge_graph() {
        let g = FormationGraph::new(2, &[(0, 1)]).unwrap();
        assert_eq!(g.adjacency()[(0, 1)], 1.0);
        assert_eq!(g.adjacency()[(1, 0)], 1.0);
        let spec = g.laplacian_spectrum();
        assert_relative_eq!(spec[0], 0.0, epsilon = 1e-12);
        assert_relative_eq!(spec[1], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn empty_and_complete_graphs() {
        let empty = FormationGraph::new(3, &[]).unwrap();
        assert_eq!(empty.degrees().as_slice(), &[0., 0., 0.]);
        assert!(!empty.is_connected());
        let k3 = FormationGraph::complete(3).unwrap();
        assert_eq!(k3.degrees().as_slice(), &[2., 2., 2.]);
        let path = FormationGraph::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        assert!(path.is_connected());
    }

    #[test]
    fn rejects_self_loops_and_bad_indices() {
        assert_eq!(
            FormationGraph::new(3, &[(1, 1)]),
            Err(GraphError::SelfLoop(1, 1))
        );
        assert!(matches!(
            FormationGraph::new(3, &[(0, 3)]),
            Err(GraphError::OutOfRange { .. })
        ));
        assert!(matches!(
            FormationGraph::from_one_based(3, &[(0, 2)]),
            Err(GraphError::OutOfRange { .. })
        ));
    }

    #[test]
    fn laplacian_annihilates_ones() {
        let l = vshape().laplacian();
        let ones = DVector::from_element(5, 1.0);
        assert!((l * ones).norm() < 1e-15);
    }

    #[test]
    fn lemma2_k2_closed_form() {
        // L + B = [[2,-1],[-1,1]] has eigenvalues (3 ± √5)/2; Kronecker with I₃
        // triplicates them.
        let g = FormationGraph::new(2, &[(0, 1)]).unwrap();
        let b = PinningMatrix::new(vec![1.0, 0.0]).unwrap();
        let one = Vec3::new(1.0, 1.0, 1.0);
        let v = lemma2_min_eigenvalue(&g, &b, &one, &one).unwrap();
        assert_relative_eq!(v, (3.0 - 5f64.sqrt()) / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn coupled_gain_blocks() {
        let g = FormationGraph::new(2, &[(0, 1)]).unwrap();
        let m = coupled_gain(&g, &Vec3::new(1.0, 2.0, 3.0), &Vec3::new(0.5, 0.5, 0.5));
        assert_eq!(m.shape(), (6, 6));
        assert_eq!(m[(0, 0)], 1.5);
        assert_eq!(m[(1, 1)], 2.5);
        assert_eq!(m[(0, 3)], -0.5);
        assert_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn lemma2_zero_pinning_and_disconnected() {
        let g = vshape();
        let one = Vec3::new(1.0, 1.0, 1.0);
        let zero = PinningMatrix::new(vec![0.0; 5]).unwrap();
        assert_eq!(lemma2_min_eigenvalue(&g, &zero, &one, &one).unwrap(), 0.0);
        let split = FormationGraph::new(4, &[(0, 1), (2, 3)]).unwrap();
        let b = PinningMatrix::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(
            lemma2_min_eigenvalue(&split, &b, &one, &one),
            Err(GraphError::Disconnected)
        );
        assert!(PinningMatrix::new(vec![1.0, -0.5]).is_err());
    }
}
