//! Analytic geometry relaxation.
//!
//! The synthetic potential E = Σ_bonds (d_uv − 1.5)² + Σ_nonbonded
//! max(0, 2.0 − d_uv)² is minimized by monotone gradient descent with
//! backtracking from a seeded random start, then centered at the origin.

use super::{distance, Conformer, MoleculeGraph};
use crate::seeding::rng_from;
use rand_distr::{Distribution, StandardNormal};

pub const BOND_LENGTH: f64 = 1.5;
pub const NONBONDED_FLOOR: f64 = 2.0;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const MAX_STEPS: usize = 5000;

#[derive(Debug, Clone)]
pub struct RelaxOutcome {
    pub conformer: Conformer,
    pub converged: bool,
    pub steps: usize,
    pub initial_energy: f64,
    pub final_energy: f64,
}

fn bonded_mask(graph: &MoleculeGraph) -> Vec<Vec<bool>> {
    let n = graph.num_atoms();
    let mut m = vec![vec![false; n]; n];
    for b in &graph.bonds {
        m[b.u][b.v] = true;
        m[b.v][b.u] = true;
    }
    m
}

/// Potential energy of a coordinate assignment for this graph.
pub fn relax_energy(graph: &MoleculeGraph, coords: &[[f64; 3]]) -> f64 {
    let bonded = bonded_mask(graph);
    let n = coords.len();
    let mut e = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(coords[i], coords[j]);
            if bonded[i][j] {
                let x = d - BOND_LENGTH;
                e += x * x;
            } else {
                let gap = NONBONDED_FLOOR - d;
                if gap > 0.0 {
                    e += gap * gap;
                }
            }
        }
    }
    e
}

fn gradient(coords: &[[f64; 3]], bonded: &[Vec<bool>]) -> Vec<[f64; 3]> {
    let n = coords.len();
    let mut g = vec![[0.0; 3]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = distance(coords[i], coords[j]).max(1e-9);
            // dE/dd, then chain through the unit direction.
            let de_dd = if bonded[i][j] {
                2.0 * (d - BOND_LENGTH)
            } else if d < NONBONDED_FLOOR {
                -2.0 * (NONBONDED_FLOOR - d)
            } else {
                0.0
            };
            if de_dd == 0.0 {
                continue;
            }
            for k in 0..3 {
                let dir = (coords[i][k] - coords[j][k]) / d;
                g[i][k] += de_dd * dir;
                g[j][k] -= de_dd * dir;
            }
        }
    }
    g
}

fn grad_norm(g: &[[f64; 3]]) -> f64 {
    g.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

/// Minimize the synthetic potential from a seeded random start. Descent is
/// monotone, so the final energy never exceeds the initial one; the result
/// is centered at the origin.
pub fn relax_geometry(graph: &MoleculeGraph, seed: u64) -> RelaxOutcome {
    let n = graph.num_atoms();
    let mut rng = rng_from(seed);
    let spread = 1.2 * (n as f64).cbrt();
    let mut coords: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            let mut p = [0.0; 3];
            for x in &mut p {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x = z * spread;
            }
            p
        })
        .collect();

    let bonded = bonded_mask(graph);
    let initial_energy = relax_energy(graph, &coords);
    let mut energy = initial_energy;
    let mut step_size = 0.05;
    let mut converged = false;
    let mut steps = 0;
    while steps < MAX_STEPS {
        let g = gradient(&coords, &bonded);
        if grad_norm(&g) < GRAD_TOLERANCE {
            converged = true;
            break;
        }
        // Backtracking line search along -g.
        let mut alpha = step_size;
        let mut accepted = false;
        while alpha > 1e-14 {
            let trial: Vec<[f64; 3]> = coords
                .iter()
                .zip(&g)
                .map(|(c, gi)| [c[0] - alpha * gi[0], c[1] - alpha * gi[1], c[2] - alpha * gi[2]])
                .collect();
            let trial_energy = relax_energy(graph, &trial);
            if trial_energy <= energy {
                coords = trial;
                energy = trial_energy;
                step_size = (alpha * 1.2).min(0.5);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        steps += 1;
        if !accepted {
            break;
        }
    }

    // Center at the origin.
    let c = Conformer { coords };
    let centroid = c.centroid();
    let coords = c
        .coords
        .into_iter()
        .map(|r| [r[0] - centroid[0], r[1] - centroid[1], r[2] - centroid[2]])
        .collect();

    RelaxOutcome {
        conformer: Conformer { coords },
        converged,
        steps,
        initial_energy,
        final_energy: energy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moldata::path_graph;

    #[test]
    fn two_atoms_settle_at_bond_length() {
        let g = path_graph(2, 6);
        let out = relax_geometry(&g, 3);
        assert!(out.converged);
        let d = distance(out.conformer.coords[0], out.conformer.coords[1]);
        assert!((d - BOND_LENGTH).abs() < 1e-3, "d = {d}");
    }

    #[test]
    fn three_atom_chain_geometry() {
        let g = path_graph(3, 6);
        let out = relax_geometry(&g, 11);
        let c = &out.conformer.coords;
        let d01 = distance(c[0], c[1]);
        let d12 = distance(c[1], c[2]);
        let d02 = distance(c[0], c[2]);
        assert!((d01 - BOND_LENGTH).abs() < 1e-2, "d01 = {d01}");
        assert!((d12 - BOND_LENGTH).abs() < 1e-2, "d12 = {d12}");
        assert!(d02 >= NONBONDED_FLOOR - 1e-3, "d02 = {d02}");
    }

    #[test]
    fn output_is_centered() {
        let g = path_graph(5, 6);
        let out = relax_geometry(&g, 7);
        let centroid = out.conformer.centroid();
        for a in centroid {
            assert!(a.abs() < 1e-6);
        }
    }

    #[test]
    fn descent_property() {
        for seed in 0..5 {
            let g = path_graph(6, 6);
            let out = relax_geometry(&g, seed);
            assert!(out.final_energy <= out.initial_energy);
        }
    }
}
