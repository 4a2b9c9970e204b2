//! Dataset-overlap statistics at element, composition, and molecule level.
//!
//! Molecule identity uses a self-contained canonicalization: the
//! lexicographically minimal serialization over BFS orderings started from
//! every atom, with neighbor ties broken by feature tuple. Complete on
//! feature-distinguishable graphs; highly symmetric graphs may canonicalize
//! permuted copies differently.

use super::{DataError, DataResult, Dataset, MoleculeGraph};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

/// Percentages in [0, 100], measured on `a` against `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapStats {
    pub element_pct: f64,
    pub composition_pct: f64,
    pub molecule_pct: f64,
}

fn elements(ds: &Dataset) -> BTreeSet<u8> {
    ds.iter()
        .flat_map(|r| r.graph.atoms.iter().map(|a| a.atomic_number))
        .collect()
}

/// Heavy-atom element multiset as sorted (element, count) pairs.
fn composition(graph: &MoleculeGraph) -> Vec<(u8, usize)> {
    let mut counts: BTreeMap<u8, usize> = BTreeMap::new();
    for a in &graph.atoms {
        *counts.entry(a.atomic_number).or_default() += 1;
    }
    counts.into_iter().collect()
}

/// Label-invariant vertex colors: feature tuple refined by three rounds of
/// neighbor-multiset hashing. Ties that survive are structurally equivalent
/// up to 1-WL, which is where canonicalization may remain incomplete.
fn wl_colors(graph: &MoleculeGraph, adj: &[Vec<usize>]) -> Vec<u64> {
    use sha2::{Digest, Sha256};
    let hash = |bytes: &[u8]| -> u64 {
        let d = Sha256::digest(bytes);
        u64::from_le_bytes(d[..8].try_into().unwrap())
    };
    let mut colors: Vec<u64> = graph
        .atoms
        .iter()
        .map(|a| hash(&a.codes()))
        .collect();
    for _round in 0..3 {
        let mut next = Vec::with_capacity(colors.len());
        for (v, neighbors) in adj.iter().enumerate() {
            let mut around: Vec<u64> = neighbors.iter().map(|&u| colors[u]).collect();
            around.sort_unstable();
            let mut bytes = colors[v].to_le_bytes().to_vec();
            for c in around {
                bytes.extend_from_slice(&c.to_le_bytes());
            }
            next.push(hash(&bytes));
        }
        colors = next;
    }
    colors
}

fn bfs_order(graph: &MoleculeGraph, adj: &[Vec<usize>], colors: &[u64], start: usize) -> Vec<usize> {
    let n = graph.num_atoms();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        let mut next: Vec<usize> = adj[u].iter().copied().filter(|&v| !seen[v]).collect();
        next.sort_by_key(|&v| (graph.atoms[v].codes(), colors[v], v));
        for v in next {
            seen[v] = true;
            queue.push_back(v);
        }
    }
    order
}

fn serialize_under(graph: &MoleculeGraph, order: &[usize]) -> String {
    let n = graph.num_atoms();
    let mut pos = vec![0usize; n];
    for (new, &old) in order.iter().enumerate() {
        pos[old] = new;
    }
    let mut s = String::new();
    for &old in order {
        let c = graph.atoms[old].codes();
        s.push_str(&format!(
            "A{},{},{},{},{},{},{},{},{};",
            c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7], c[8]
        ));
    }
    let mut bonds: Vec<(usize, usize, [u8; 3])> = graph
        .bonds
        .iter()
        .map(|b| {
            let (x, y) = (pos[b.u], pos[b.v]);
            (x.min(y), x.max(y), b.features.codes())
        })
        .collect();
    bonds.sort();
    for (u, v, f) in bonds {
        s.push_str(&format!("B{u},{v},{},{},{};", f[0], f[1], f[2]));
    }
    s
}

/// Canonical string identity of a molecular graph.
pub fn canonical_form(graph: &MoleculeGraph) -> String {
    let adj = graph.adjacency();
    let colors = wl_colors(graph, &adj);
    (0..graph.num_atoms())
        .map(|start| serialize_under(graph, &bfs_order(graph, &adj, &colors, start)))
        .min()
        .unwrap_or_default()
}

/// Fraction of `a` covered by `b` at each of the three levels.
pub fn dataset_overlap(a: &Dataset, b: &Dataset) -> DataResult<OverlapStats> {
    if a.is_empty() || b.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let elems_a = elements(a);
    let elems_b = elements(b);
    let element_pct =
        100.0 * elems_a.intersection(&elems_b).count() as f64 / elems_a.len() as f64;

    let comps_b: BTreeSet<Vec<(u8, usize)>> =
        b.iter().map(|r| composition(&r.graph)).collect();
    let comp_hits = a
        .iter()
        .filter(|r| comps_b.contains(&composition(&r.graph)))
        .count();
    let composition_pct = 100.0 * comp_hits as f64 / a.len() as f64;

    let canon_b: BTreeSet<String> = b.iter().map(|r| canonical_form(&r.graph)).collect();
    let mol_hits = a
        .iter()
        .filter(|r| canon_b.contains(&canonical_form(&r.graph)))
        .count();
    let molecule_pct = 100.0 * mol_hits as f64 / a.len() as f64;

    Ok(OverlapStats {
        element_pct,
        composition_pct,
        molecule_pct,
    })
}

/// CSV with header `level,percent`.
pub fn write_overlap_csv(stats: &OverlapStats, path: impl AsRef<Path>) -> DataResult<()> {
    let text = format!(
        "level,percent\nelement,{}\ncomposition,{}\nmolecule,{}\n",
        stats.element_pct, stats.composition_pct, stats.molecule_pct
    );
    std::fs::write(path.as_ref(), text)
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moldata::{generate_synthetic, SyntheticConfig};

    fn dataset(seed: u64, count: usize) -> Dataset {
        generate_synthetic(&SyntheticConfig {
            count,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    #[test]
    fn self_overlap_is_total() {
        let ds = dataset(2, 25);
        let s = dataset_overlap(&ds, &ds).unwrap();
        assert_eq!(s.element_pct, 100.0);
        assert_eq!(s.composition_pct, 100.0);
        assert_eq!(s.molecule_pct, 100.0);
    }

    #[test]
    fn element_counting() {
        // a uses {6,7,8,9}; b misses 9 -> 75%.
        let a = generate_synthetic(&SyntheticConfig {
            count: 60,
            seed: 4,
            element_set: vec![6, 7, 8, 9],
            ..Default::default()
        })
        .unwrap();
        let b = generate_synthetic(&SyntheticConfig {
            count: 60,
            seed: 5,
            element_set: vec![6, 7, 8],
            ..Default::default()
        })
        .unwrap();
        let sa = super::elements(&a);
        assert_eq!(sa.len(), 4, "generator should have used all 4 elements");
        let s = dataset_overlap(&a, &b).unwrap();
        assert_eq!(s.element_pct, 75.0);
    }

    #[test]
    fn molecule_overlap_never_exceeds_composition_overlap() {
        // Identical canonical molecules share an element multiset.
        for seed in 0..4 {
            let a = dataset(seed, 30);
            let b = dataset(seed + 100, 30);
            let s = dataset_overlap(&a, &b).unwrap();
            assert!(s.molecule_pct <= s.composition_pct + 1e-9);
        }
    }

    #[test]
    fn canonical_form_invariant_to_relabeling() {
        let ds = dataset(8, 20);
        for r in ds.iter() {
            let g = &r.graph;
            let n = g.num_atoms();
            // Reverse relabeling keeps feature-distinguishable graphs equal.
            let perm: Vec<usize> = (0..n).rev().collect();
            let mut atoms = vec![g.atoms[0]; n];
            for (old, &new) in perm.iter().enumerate() {
                atoms[new] = g.atoms[old];
            }
            let mut bonds: Vec<_> = g
                .bonds
                .iter()
                .map(|b| {
                    let (u, v) = (perm[b.u], perm[b.v]);
                    super::super::Bond {
                        u: u.min(v),
                        v: u.max(v),
                        features: b.features,
                    }
                })
                .collect();
            bonds.sort_by_key(|b| (b.u, b.v));
            let permuted = MoleculeGraph { atoms, bonds };
            assert_eq!(canonical_form(g), canonical_form(&permuted), "{}", r.id);
        }
    }
}
