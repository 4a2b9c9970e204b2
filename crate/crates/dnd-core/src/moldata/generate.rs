//! Synthetic molecule generation: connected random trees with optional
//! single ring closures, featurized consistently with their topology, and
//! conformers produced by the relaxation oracle.

use super::jsonl::round_sig9;
use super::relax::relax_geometry;
use super::targets::synthetic_targets;
use super::{
    AtomFeatures, Bond, BondFeatures, DataError, DataResult, Dataset, MoleculeGraph,
    MoleculeRecord, FORMAL_CHARGE_NEUTRAL,
};
use crate::seeding::{derive_seed, derive_seed_ints, rng_from};
use rand::Rng;

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SyntheticConfig {
    pub count: usize,
    pub seed: u64,
    pub min_atoms: usize,
    pub max_atoms: usize,
    pub element_set: Vec<u8>,
    pub ring_probability: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            count: 100,
            seed: 0,
            min_atoms: 4,
            max_atoms: 9,
            element_set: vec![6, 7, 8, 9, 15, 16],
            ring_probability: 0.3,
        }
    }
}

impl SyntheticConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.count == 0 {
            out.push("count must be at least 1".into());
        }
        if !(4..=30).contains(&self.min_atoms)
            || self.max_atoms > 30
            || self.min_atoms > self.max_atoms
        {
            out.push(format!(
                "atom bounds must satisfy 4 <= min ({}) <= max ({}) <= 30",
                self.min_atoms, self.max_atoms
            ));
        }
        if self.element_set.is_empty() || self.element_set.iter().any(|&z| z == 0) {
            out.push("element_set must be non-empty atomic numbers >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.ring_probability) {
            out.push(format!(
                "ring_probability must lie in [0, 1], got {}",
                self.ring_probability
            ));
        }
        out
    }
}

/// A simple chain on `n` atoms of one element, featurized consistently.
pub fn path_graph(n: usize, element: u8) -> MoleculeGraph {
    let bonds: Vec<Bond> = (1..n)
        .map(|v| Bond {
            u: v - 1,
            v,
            features: BondFeatures {
                bond_type: 0,
                stereo: 0,
                is_conjugated: 0,
            },
        })
        .collect();
    let atoms = (0..n)
        .map(|i| {
            let degree = bonds.iter().filter(|b| b.u == i || b.v == i).count() as u8;
            AtomFeatures {
                atomic_number: element,
                chirality: 0,
                degree,
                formal_charge: FORMAL_CHARGE_NEUTRAL,
                num_hydrogens: 4u8.saturating_sub(degree),
                num_radical_electrons: 0,
                hybridization: degree.min(3),
                is_aromatic: 0,
                is_in_ring: 0,
            }
        })
        .collect();
    MoleculeGraph { atoms, bonds }
}

/// Tree path between two nodes (used to mark ring membership after a
/// closure edge is added).
fn tree_path(adj: &[Vec<usize>], from: usize, to: usize) -> Vec<usize> {
    let mut parent = vec![usize::MAX; adj.len()];
    let mut queue = std::collections::VecDeque::from([from]);
    parent[from] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            break;
        }
        for &v in &adj[u] {
            if parent[v] == usize::MAX {
                parent[v] = u;
                queue.push_back(v);
            }
        }
    }
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = parent[cur];
        path.push(cur);
    }
    path
}

fn generate_one(config: &SyntheticConfig, index: usize) -> MoleculeRecord {
    let record_seed = derive_seed_ints(config.seed, &[index as u64]);
    let mut rng = rng_from(record_seed);
    let n = rng.gen_range(config.min_atoms..=config.max_atoms);

    // Random tree: each node after the first attaches to a uniform parent.
    let mut edges: Vec<(usize, usize)> = (1..n).map(|k| (rng.gen_range(0..k), k)).collect();
    let mut adj = vec![Vec::new(); n];
    for &(u, v) in &edges {
        adj[u].push(v);
        adj[v].push(u);
    }

    // Optional single ring closure between non-adjacent nodes.
    let mut in_ring = vec![false; n];
    if n >= 3 && rng.gen::<f64>() < config.ring_probability {
        for _attempt in 0..16 {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            if u == v || adj[u].contains(&v) {
                continue;
            }
            for &node in &tree_path(&adj, u, v) {
                in_ring[node] = true;
            }
            let (u, v) = (u.min(v), u.max(v));
            edges.push((u, v));
            adj[u].push(v);
            adj[v].push(u);
            break;
        }
    }

    let atoms: Vec<AtomFeatures> = (0..n)
        .map(|i| {
            let element = config.element_set[rng.gen_range(0..config.element_set.len())];
            let degree = adj[i].len() as u8;
            let charge_roll: f64 = rng.gen();
            let formal_charge = if charge_roll < 0.025 {
                FORMAL_CHARGE_NEUTRAL - 1
            } else if charge_roll < 0.05 {
                FORMAL_CHARGE_NEUTRAL + 1
            } else {
                FORMAL_CHARGE_NEUTRAL
            };
            AtomFeatures {
                atomic_number: element,
                chirality: 0,
                degree,
                formal_charge,
                num_hydrogens: 4u8.saturating_sub(degree),
                num_radical_electrons: 0,
                hybridization: degree.min(3),
                is_aromatic: 0,
                is_in_ring: in_ring[i] as u8,
            }
        })
        .collect();

    edges.sort();
    let bonds = edges
        .into_iter()
        .map(|(u, v)| Bond {
            u,
            v,
            features: BondFeatures {
                bond_type: 0,
                stereo: 0,
                is_conjugated: 0,
            },
        })
        .collect();
    let graph = MoleculeGraph { atoms, bonds };

    // Relax; retry with a fresh seed in the (unobserved) event the sanity
    // bound on pair distances is violated by a non-converged minimization.
    let mut conformer = None;
    for attempt in 0u64.. {
        let relax_seed = derive_seed(record_seed, &[b"relax", &attempt.to_le_bytes()]);
        let outcome = relax_geometry(&graph, relax_seed);
        if !outcome.converged {
            log::warn!(
                "relaxation did not converge for record {index} (attempt {attempt}, {} steps)",
                outcome.steps
            );
        }
        let mut c = outcome.conformer;
        for row in &mut c.coords {
            *row = row.map(round_sig9);
        }
        if c.problems(n).is_empty() {
            conformer = Some(c);
            break;
        }
        if attempt >= 8 {
            break;
        }
    }

    MoleculeRecord {
        id: format!("syn{}-{index:06}", config.seed),
        graph,
        conformer,
        labels: None,
    }
}

/// Deterministically generate `config.count` validated records.
pub fn generate_synthetic(config: &SyntheticConfig) -> DataResult<Dataset> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(DataError::BadConfig(problems));
    }
    let records = (0..config.count).map(|i| generate_one(config, i)).collect();
    Dataset::new(records)
}

/// Attach the three synthetic targets (radius of gyration, Wiener index,
/// charge sum) as labels; requires conformers.
pub fn attach_synthetic_labels(dataset: &Dataset) -> DataResult<Dataset> {
    let mut records = Vec::with_capacity(dataset.len());
    for r in dataset.iter() {
        let t = synthetic_targets(r)?;
        let mut r = r.clone();
        r.labels = Some(vec![
            Some(round_sig9(t.radius_of_gyration)),
            Some(t.wiener_index),
            Some(t.charge_sum),
        ]);
        records.push(r);
    }
    Ok(Dataset::from_validated(records))
}
