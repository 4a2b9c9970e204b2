//! Geometry- and topology-derived synthetic property targets.

use super::{DataError, DataResult, MoleculeGraph, MoleculeRecord};
use std::collections::VecDeque;

/// Names of the labels attached by `attach_synthetic_labels`, in order.
pub const LABEL_NAMES: [&str; 3] = ["radius_of_gyration", "wiener_index", "charge_sum"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticTargets {
    pub radius_of_gyration: f64,
    pub wiener_index: f64,
    pub charge_sum: f64,
}

/// All-pairs shortest-path lengths by BFS from every node.
pub fn graph_distances(graph: &MoleculeGraph) -> Vec<Vec<usize>> {
    let n = graph.num_atoms();
    let adj = graph.adjacency();
    let mut dist = vec![vec![usize::MAX; n]; n];
    for s in 0..n {
        dist[s][s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &adj[u] {
                if dist[s][v] == usize::MAX {
                    dist[s][v] = dist[s][u] + 1;
                    q.push_back(v);
                }
            }
        }
    }
    dist
}

/// Radius of gyration, Wiener index, and formal-charge sum. The geometric
/// target requires a conformer; the other two do not.
pub fn synthetic_targets(record: &MoleculeRecord) -> DataResult<SyntheticTargets> {
    let conformer = record
        .conformer
        .as_ref()
        .ok_or_else(|| DataError::MissingConformer {
            id: record.id.clone(),
        })?;
    let centroid = conformer.centroid();
    let n = conformer.num_atoms() as f64;
    let msd: f64 = conformer
        .coords
        .iter()
        .map(|r| {
            (0..3)
                .map(|k| (r[k] - centroid[k]) * (r[k] - centroid[k]))
                .sum::<f64>()
        })
        .sum::<f64>()
        / n;

    let dist = graph_distances(&record.graph);
    let mut wiener = 0usize;
    for i in 0..record.graph.num_atoms() {
        for j in (i + 1)..record.graph.num_atoms() {
            wiener += dist[i][j];
        }
    }

    let charge_sum: i64 = record
        .graph
        .atoms
        .iter()
        .map(|a| a.formal_charge_value())
        .sum();

    Ok(SyntheticTargets {
        radius_of_gyration: msd.sqrt(),
        wiener_index: wiener as f64,
        charge_sum: charge_sum as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moldata::{path_graph, Conformer};

    #[test]
    fn symmetric_dumbbell_radius_is_one() {
        let record = MoleculeRecord {
            id: "d".into(),
            graph: path_graph(2, 6),
            conformer: Some(Conformer {
                coords: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
            }),
            labels: None,
        };
        let t = synthetic_targets(&record).unwrap();
        assert!((t.radius_of_gyration - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wiener_index_of_three_chain_is_four() {
        let record = MoleculeRecord {
            id: "w".into(),
            graph: path_graph(3, 6),
            conformer: Some(Conformer {
                coords: vec![[0.0; 3], [1.5, 0.0, 0.0], [3.0, 0.0, 0.0]],
            }),
            labels: None,
        };
        let t = synthetic_targets(&record).unwrap();
        assert_eq!(t.wiener_index, 4.0);
        assert_eq!(t.charge_sum, 0.0);
    }

    #[test]
    fn missing_conformer_is_an_error() {
        let record = MoleculeRecord {
            id: "n".into(),
            graph: path_graph(3, 6),
            conformer: None,
            labels: None,
        };
        assert!(matches!(
            synthetic_targets(&record),
            Err(DataError::MissingConformer { .. })
        ));
    }
}
