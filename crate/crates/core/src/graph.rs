//! Sparse graph storage, symmetric normalization and K-step feature propagation.
//!
//! The adjacency is held in compressed sparse-row form. [`normalize`] adds one
//! self-loop per node and rescales every stored entry by
//! `1 / sqrt(deg_i * deg_j)` where degrees are taken over the self-looped
//! adjacency. [`propagate`] applies the normalized operator `k` times to a dense
//! feature matrix, one sparse-dense product per hop.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Compressed sparse-row adjacency.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGraph {
    n_nodes: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    normalized: bool,
}

impl SparseGraph {
    /// Builds a graph from raw CSR arrays, checking the structural invariants.
    pub fn from_csr(
        n_nodes: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_nodes + 1 {
            return Err(Error::DimensionMismatch {
                context: "row_offsets",
                expected: n_nodes + 1,
                actual: row_offsets.len(),
            });
        }
        if col_indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "CSR values",
                expected: col_indices.len(),
                actual: values.len(),
            });
        }
        if row_offsets[0] != 0 || *row_offsets.last().unwrap() != col_indices.len() {
            return Err(Error::InvalidInput(
                "row_offsets must start at 0 and end at the entry count".into(),
            ));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidInput("row_offsets must be non-decreasing".into()));
        }
        if let Some(&bad) = col_indices.iter().find(|&&c| c >= n_nodes) {
            return Err(Error::NodeOutOfRange { index: bad, n_nodes });
        }
        for (position, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    context: "edge weights",
                    position,
                    value,
                });
            }
            if value < 0.0 {
                return Err(Error::InvalidInput(format!(
                    "edge weight {value} at position {position} is negative"
                )));
            }
        }
        Ok(Self {
            n_nodes,
            row_offsets,
            col_indices,
            values,
            normalized: false,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Number of stored entries (each undirected edge counts twice).
    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    /// Number of undirected edges between distinct nodes.
    pub fn n_undirected_edges(&self) -> usize {
        let mut off_diagonal = 0;
        for i in 0..self.n_nodes {
            off_diagonal += self.row(i).0.iter().filter(|&&j| j != i).count();
        }
        off_diagonal / 2
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Whether this graph is the output of [`normalize`].
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Column indices and weights of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        (&self.col_indices[range.clone()], &self.values[range])
    }

    /// Weighted degree of node `i` (row sum).
    pub fn degree(&self, i: usize) -> f64 {
        self.row(i).1.iter().sum()
    }

    /// Stored weight at `(i, j)`, or 0 when absent.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        cols.binary_search(&j).map(|p| vals[p]).unwrap_or(0.0)
    }

    /// Dense row-major copy, intended for small graphs and test oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_nodes]; self.n_nodes];
        for (i, row) in dense.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                row[j] = v;
            }
        }
        dense
    }
}

/// Dense row-major node feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    n_nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_nodes: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_nodes * dim {
            return Err(Error::DimensionMismatch {
                context: "feature matrix data",
                expected: n_nodes * dim,
                actual: data.len(),
            });
        }
        if let Some((position, &value)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "feature matrix",
                position,
                value,
            });
        }
        Ok(Self { n_nodes, dim, data })
    }

    pub fn zeros(n_nodes: usize, dim: usize) -> Self {
        Self {
            n_nodes,
            dim,
            data: vec![0.0; n_nodes * dim],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch {
                context: "feature rows",
                expected: dim,
                actual: bad.len(),
            });
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// The result `S^K X`, used as Bernoulli rates by the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct PropagatedFeatures {
    pub data: FeatureMatrix,
    pub k_used: usize,
}

impl PropagatedFeatures {
    pub fn n_nodes(&self) -> usize {
        self.data.n_nodes()
    }

    pub fn dim(&self) -> usize {
        self.data.dim()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.data.row(i)
    }
}

/// Builds an undirected unit-weight graph from an edge list.
///
/// Both directions are stored; duplicate edges collapse to a single entry of
/// weight 1. Self-loops in the input are dropped, since [`normalize`] adds the
/// self-connection itself.
pub fn build_graph(edges: &[(usize, usize)], n_nodes: usize) -> Result<SparseGraph> {
    let weighted: Vec<(usize, usize, f64)> = edges.iter().map(|&(i, j)| (i, j, 1.0)).collect();
    build_weighted_graph(&weighted, n_nodes)
}

/// Like [`build_graph`] but with explicit non-negative weights. Duplicate
/// edges keep the largest weight seen.
pub fn build_weighted_graph(edges: &[(usize, usize, f64)], n_nodes: usize) -> Result<SparseGraph> {
    let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_nodes];
    for (position, &(i, j, w)) in edges.iter().enumerate() {
        for index in [i, j] {
            if index >= n_nodes {
                return Err(Error::NodeOutOfRange { index, n_nodes });
            }
        }
        if !w.is_finite() || w < 0.0 {
            return Err(Error::InvalidInput(format!(
                "edge {position} ({i}, {j}) has invalid weight {w}"
            )));
        }
        if i == j {
            continue;
        }
        neighbours[i].push((j, w));
        neighbours[j].push((i, w));
    }

    let mut row_offsets = Vec::with_capacity(n_nodes + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for row in &mut neighbours {
        row.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)));
        row.dedup_by_key(|e| e.0);
        for &(j, w) in row.iter() {
            col_indices.push(j);
            values.push(w);
        }
        row_offsets.push(col_indices.len());
    }
    SparseGraph::from_csr(n_nodes, row_offsets, col_indices, values)
}

/// Returns `S = D^-1/2 (A + I) D^-1/2` with `D` the degree matrix of `A + I`.
pub fn normalize(g: &SparseGraph) -> SparseGraph {
    let n = g.n_nodes;
    // Self-looped rows: merge a unit diagonal into each row, keeping columns sorted.
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(g.nnz() + n);
    let mut values = Vec::with_capacity(g.nnz() + n);
    row_offsets.push(0);
    for i in 0..n {
        let (cols, vals) = g.row(i);
        let mut diagonal_done = false;
        for (&j, &v) in cols.iter().zip(vals) {
            if !diagonal_done && j >= i {
                if j == i {
                    col_indices.push(i);
                    values.push(v + 1.0);
                    diagonal_done = true;
                    continue;
                }
                col_indices.push(i);
                values.push(1.0);
                diagonal_done = true;
            }
            col_indices.push(j);
            values.push(v);
        }
        if !diagonal_done {
            col_indices.push(i);
            values.push(1.0);
        }
        row_offsets.push(col_indices.len());
    }

    let degrees: Vec<f64> = (0..n)
        .map(|i| values[row_offsets[i]..row_offsets[i + 1]].iter().sum())
        .collect();
    for i in 0..n {
        for p in row_offsets[i]..row_offsets[i + 1] {
            let j = col_indices[p];
            values[p] /= (degrees[i] * degrees[j]).sqrt();
        }
    }

    SparseGraph {
        n_nodes: n,
        row_offsets,
        col_indices,
        values,
        normalized: true,
    }
}

fn check_propagation_inputs(s: &SparseGraph, x: &FeatureMatrix) -> Result<()> {
    if !s.normalized {
        return Err(Error::InvalidInput(
            "propagation expects a graph produced by normalize()".into(),
        ));
    }
    if x.n_nodes != s.n_nodes {
        return Err(Error::DimensionMismatch {
            context: "propagation node count",
            expected: s.n_nodes,
            actual: x.n_nodes,
        });
    }
    Ok(())
}

fn accumulate_row(s: &SparseGraph, x: &FeatureMatrix, i: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let (cols, vals) = s.row(i);
    for (&j, &w) in cols.iter().zip(vals) {
        for (o, &xv) in out.iter_mut().zip(x.row(j)) {
            *o += w * xv;
        }
    }
}

/// One sparse-dense product `S X`. Each output row is a single sequential
/// accumulation, so the result does not depend on the thread count.
pub fn sparse_dense_product(s: &SparseGraph, x: &FeatureMatrix) -> FeatureMatrix {
    let dim = x.dim;
    let mut out = FeatureMatrix::zeros(x.n_nodes, dim);
    if dim == 0 {
        return out;
    }
    out.data
        .par_chunks_mut(dim)
        .enumerate()
        .for_each(|(i, row)| accumulate_row(s, x, i, row));
    out
}

/// Computes `H = S^k X` as `k` successive sparse-dense products.
pub fn propagate(s: &SparseGraph, x: &FeatureMatrix, k: usize) -> Result<PropagatedFeatures> {
    check_propagation_inputs(s, x)?;
    let mut current = x.clone();
    for _ in 0..k {
        current = sparse_dense_product(s, &current);
    }
    Ok(PropagatedFeatures {
        data: current,
        k_used: k,
    })
}

/// Single-hop representation of node `i`: row `i` of `S X`.
pub fn propagate_node(s: &SparseGraph, x: &FeatureMatrix, i: usize) -> Result<Vec<f64>> {
    check_propagation_inputs(s, x)?;
    if i >= s.n_nodes {
        return Err(Error::NodeOutOfRange {
            index: i,
            n_nodes: s.n_nodes,
        });
    }
    let mut out = vec![0.0; x.dim];
    accumulate_row(s, x, i, &mut out);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_graph_has_no_entries() {
        let g = build_graph(&[], 2).unwrap();
        assert_eq!(g.nnz(), 0);
        assert_eq!(g.row_offsets(), &[0, 0, 0]);
    }

    #[test]
    fn single_edge_is_symmetrized() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        assert_eq!(g.to_dense(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn duplicates_collapse_to_unit_weight() {
        let g = build_graph(&[(0, 1), (1, 0), (0, 1)], 3).unwrap();
        assert_eq!(g.nnz(), 2);
        assert_eq!(g.get(0, 1), 1.0);
        assert_eq!(g.n_undirected_edges(), 1);
    }

    #[test]
    fn out_of_range_edge_is_rejected() {
        let err = build_graph(&[(0, 5)], 3).unwrap_err();
        assert!(matches!(err, Error::NodeOutOfRange { index: 5, n_nodes: 3 }));
    }

    #[test]
    fn isolated_nodes_normalize_to_identity() {
        let s = normalize(&build_graph(&[], 2).unwrap());
        assert_eq!(s.to_dense(), vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
    }

    #[test]
    fn single_edge_normalizes_to_halves() {
        let s = normalize(&build_graph(&[(0, 1)], 2).unwrap());
        assert_eq!(s.to_dense(), vec![vec![0.5, 0.5], vec![0.5, 0.5]]);
    }

    #[test]
    fn normalizing_twice_keeps_one_diagonal_entry() {
        let g = build_graph(&[(0, 1), (1, 2)], 3).unwrap();
        let twice = normalize(&normalize(&g));
        for i in 0..3 {
            let (cols, _) = twice.row(i);
            assert_eq!(cols.iter().filter(|&&c| c == i).count(), 1);
        }
    }

    #[test]
    fn zero_hops_returns_input() {
        let s = normalize(&build_graph(&[(0, 1), (1, 2)], 3).unwrap());
        let x = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        assert_eq!(propagate(&s, &x, 0).unwrap().data, x);
    }

    #[test]
    fn identity_operator_is_a_fixed_point() {
        let s = normalize(&build_graph(&[], 3).unwrap());
        let x = FeatureMatrix::from_rows(&[vec![0.1], vec![0.7], vec![0.3]]).unwrap();
        assert_eq!(propagate(&s, &x, 5).unwrap().data, x);
    }

    #[test]
    fn unnormalized_graph_is_rejected() {
        let g = build_graph(&[(0, 1)], 2).unwrap();
        let x = FeatureMatrix::zeros(2, 1);
        assert!(propagate(&g, &x, 1).is_err());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let s = normalize(&build_graph(&[(0, 1)], 2).unwrap());
        let x = FeatureMatrix::zeros(3, 1);
        assert!(matches!(
            propagate(&s, &x, 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn isolated_node_keeps_its_features() {
        let s = normalize(&build_graph(&[(0, 1)], 3).unwrap());
        let x = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.25, 0.75]]).unwrap();
        assert_eq!(propagate_node(&s, &x, 2).unwrap(), vec![0.25, 0.75]);
    }

    #[test]
    fn single_edge_mixes_equally() {
        let s = normalize(&build_graph(&[(0, 1)], 2).unwrap());
        let x = FeatureMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(propagate_node(&s, &x, 0).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn propagate_node_checks_range() {
        let s = normalize(&build_graph(&[(0, 1)], 2).unwrap());
        let x = FeatureMatrix::zeros(2, 1);
        assert!(matches!(
            propagate_node(&s, &x, 2),
            Err(Error::NodeOutOfRange { index: 2, .. })
        ));
    }

    #[test]
    fn non_finite_features_are_rejected() {
        assert!(FeatureMatrix::new(1, 2, vec![0.0, f64::NAN]).is_err());
    }
}
