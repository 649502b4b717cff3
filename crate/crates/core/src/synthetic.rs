//! Small constructed datasets for smoke runs and tests.

use crate::dataset::Dataset;
use crate::error::Result;
use crate::graph::{build_graph, FeatureMatrix};

/// Two disjoint cliques of `clique_size` nodes. Nodes of clique `c` carry the
/// one-hot feature `e_c` and label `c`, so the classes are linearly separable
/// both before and after propagation.
pub fn two_cliques(clique_size: usize) -> Result<Dataset> {
    let n = 2 * clique_size;
    let mut edges = Vec::new();
    for block in 0..2 {
        let base = block * clique_size;
        for i in 0..clique_size {
            for j in i + 1..clique_size {
                edges.push((base + i, base + j));
            }
        }
    }
    let graph = build_graph(&edges, n)?;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            if i < clique_size {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        })
        .collect();
    let features = FeatureMatrix::from_rows(&rows)?;
    let labels = (0..n).map(|i| usize::from(i >= clique_size)).collect();
    let mut ds = Dataset::new(graph, features, labels, vec!["a".into(), "b".into()])?;
    ds.node_ids = (0..n).map(|i| format!("n{i}")).collect();
    ds.citation_lines = edges.len();
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clique_shape() {
        let ds = two_cliques(10).unwrap();
        assert_eq!(ds.n_nodes(), 20);
        assert_eq!(ds.graph.n_undirected_edges(), 90);
        assert_eq!(ds.nodes_by_class()[1].len(), 10);
        assert_eq!(ds.graph.get(0, 10), 0.0);
    }
}
