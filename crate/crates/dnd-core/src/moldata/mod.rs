//! Molecular data model: featurized 2D graphs paired with 3D conformers,
//! file ingestion, synthetic generation, splits, label normalization, and
//! dataset-overlap statistics.
//!
//! Heavy atoms only; hydrogens are counted in `num_hydrogens` but never
//! materialized as nodes.

mod generate;
mod jsonl;
mod normalize;
mod overlap;
mod relax;
mod split;
mod targets;

pub use generate::{attach_synthetic_labels, generate_synthetic, path_graph, SyntheticConfig};
pub use jsonl::{parse_jsonl, parse_jsonl_str, write_jsonl, write_jsonl_string};
pub use normalize::{normalize_labels, LabelNormalizer};
pub use overlap::{canonical_form, dataset_overlap, write_overlap_csv, OverlapStats};
pub use relax::{relax_energy, relax_geometry, RelaxOutcome};
pub use split::split_random;
pub use targets::{graph_distances, synthetic_targets, SyntheticTargets, LABEL_NAMES};

use std::collections::BTreeSet;
use std::fmt;

/// Offset between the stored formal-charge code and the signed charge
/// (code 5 is neutral, following the OGB-style categorical encoding).
pub const FORMAL_CHARGE_NEUTRAL: u8 = 5;

/// Closest two heavy atoms may legitimately sit (ångström).
pub const MIN_ATOM_DISTANCE: f64 = 0.5;

/// Nine small categorical codes per atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AtomFeatures {
    pub atomic_number: u8,
    pub chirality: u8,
    pub degree: u8,
    pub formal_charge: u8,
    pub num_hydrogens: u8,
    pub num_radical_electrons: u8,
    pub hybridization: u8,
    pub is_aromatic: u8,
    pub is_in_ring: u8,
}

impl AtomFeatures {
    pub fn codes(&self) -> [u8; 9] {
        [
            self.atomic_number,
            self.chirality,
            self.degree,
            self.formal_charge,
            self.num_hydrogens,
            self.num_radical_electrons,
            self.hybridization,
            self.is_aromatic,
            self.is_in_ring,
        ]
    }

    pub fn from_codes(codes: [u8; 9]) -> Self {
        AtomFeatures {
            atomic_number: codes[0],
            chirality: codes[1],
            degree: codes[2],
            formal_charge: codes[3],
            num_hydrogens: codes[4],
            num_radical_electrons: codes[5],
            hybridization: codes[6],
            is_aromatic: codes[7],
            is_in_ring: codes[8],
        }
    }

    /// Signed formal charge decoded from the categorical code.
    pub fn formal_charge_value(&self) -> i64 {
        self.formal_charge as i64 - FORMAL_CHARGE_NEUTRAL as i64
    }
}

/// Three categorical codes per bond.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BondFeatures {
    pub bond_type: u8,
    pub stereo: u8,
    pub is_conjugated: u8,
}

impl BondFeatures {
    pub fn codes(&self) -> [u8; 3] {
        [self.bond_type, self.stereo, self.is_conjugated]
    }
}

/// Undirected bond between atoms `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub u: usize,
    pub v: usize,
    pub features: BondFeatures,
}

/// Featurized 2D molecular graph over heavy atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeGraph {
    pub atoms: Vec<AtomFeatures>,
    pub bonds: Vec<Bond>,
}

impl MoleculeGraph {
    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    /// Neighbor lists (undirected).
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.u].push(b.v);
            adj[b.v].push(b.u);
        }
        adj
    }

    pub fn is_connected(&self) -> bool {
        let n = self.atoms.len();
        if n == 0 {
            return false;
        }
        let adj = self.adjacency();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == n
    }

    /// All structural problems, empty when valid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.atoms.len();
        if n == 0 {
            out.push("molecule has no atoms".into());
            return out;
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if a.atomic_number == 0 {
                out.push(format!("atom {i} has atomic number 0"));
            }
        }
        let mut seen = BTreeSet::new();
        for (i, b) in self.bonds.iter().enumerate() {
            if b.u >= b.v {
                out.push(format!("bond {i} not ordered u < v: ({}, {})", b.u, b.v));
            }
            if b.v >= n {
                out.push(format!("bond {i} index {} out of range (N = {n})", b.v));
                continue;
            }
            if !seen.insert((b.u, b.v)) {
                out.push(format!("duplicate bond ({}, {})", b.u, b.v));
            }
        }
        if out.is_empty() && !self.is_connected() {
            out.push("graph is disconnected".into());
        }
        out
    }
}

/// 3D coordinates of each atom, in ångström.
#[derive(Debug, Clone, PartialEq)]
pub struct Conformer {
    pub coords: Vec<[f64; 3]>,
}

impl Conformer {
    pub fn num_atoms(&self) -> usize {
        self.coords.len()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.coords.len().max(1) as f64;
        let mut c = [0.0; 3];
        for r in &self.coords {
            for a in 0..3 {
                c[a] += r[a];
            }
        }
        c.map(|x| x / n)
    }

    pub fn problems(&self, expected_atoms: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.coords.len() != expected_atoms {
            out.push(format!(
                "conformer has {} rows for {} atoms",
                self.coords.len(),
                expected_atoms
            ));
        }
        if self.coords.iter().flatten().any(|x| !x.is_finite()) {
            out.push("conformer has non-finite coordinates".into());
        } else {
            for i in 0..self.coords.len() {
                for j in (i + 1)..self.coords.len() {
                    if distance(self.coords[i], self.coords[j]) < MIN_ATOM_DISTANCE {
                        out.push(format!("atoms {i} and {j} closer than {MIN_ATOM_DISTANCE} Å"));
                    }
                }
            }
        }
        out
    }
}

pub fn distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let mut s = 0.0;
    for k in 0..3 {
        let d = a[k] - b[k];
        s += d * d;
    }
    s.sqrt()
}

/// One molecule: id, graph, optional conformer, optional labels
/// (missing labels are explicit `None`s for masked multi-target tasks).
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeRecord {
    pub id: String,
    pub graph: MoleculeGraph,
    pub conformer: Option<Conformer>,
    pub labels: Option<Vec<Option<f64>>>,
}

impl MoleculeRecord {
    pub fn problems(&self) -> Vec<String> {
        let mut out = self.graph.problems();
        if self.id.is_empty() {
            out.push("empty record id".into());
        }
        if let Some(c) = &self.conformer {
            out.extend(c.problems(self.graph.num_atoms()));
        }
        if let Some(ls) = &self.labels {
            if ls.iter().flatten().any(|x| !x.is_finite()) {
                out.push("non-finite label value".into());
            }
        }
        out
    }
}

/// An immutable, validated collection of molecule records.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    records: Vec<MoleculeRecord>,
}

impl Dataset {
    /// Validate every record, id uniqueness, and label-arity consistency.
    pub fn new(records: Vec<MoleculeRecord>) -> DataResult<Self> {
        let mut failures = Vec::new();
        let mut ids = BTreeSet::new();
        let mut width: Option<usize> = None;
        for (i, r) in records.iter().enumerate() {
            let mut problems = r.problems();
            if !ids.insert(r.id.clone()) {
                problems.push(format!("duplicate id {}", r.id));
            }
            if let Some(ls) = &r.labels {
                match width {
                    None => width = Some(ls.len()),
                    Some(w) if w != ls.len() => {
                        problems.push(format!("label arity {} differs from {}", ls.len(), w))
                    }
                    _ => {}
                }
            }
            if !problems.is_empty() {
                failures.push(LineFailure {
                    line: i + 1,
                    id: Some(r.id.clone()),
                    message: problems.join("; "),
                });
            }
        }
        if failures.is_empty() {
            Ok(Dataset { records })
        } else {
            Err(DataError::InvalidRecords(failures))
        }
    }

    pub fn records(&self) -> &[MoleculeRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, idx: usize) -> &MoleculeRecord {
        &self.records[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = &MoleculeRecord> {
        self.records.iter()
    }

    pub fn find(&self, id: &str) -> Option<&MoleculeRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Records carrying labels all share this arity.
    pub fn label_width(&self) -> Option<usize> {
        self.records.iter().find_map(|r| r.labels.as_ref().map(|l| l.len()))
    }

    /// Clone out a subset by index; validation is preserved by construction.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Apply a per-record transform that keeps ids and arity intact.
    pub(crate) fn map_records(&self, f: impl Fn(&MoleculeRecord) -> MoleculeRecord) -> Dataset {
        Dataset {
            records: self.records.iter().map(f).collect(),
        }
    }

    pub(crate) fn from_validated(records: Vec<MoleculeRecord>) -> Dataset {
        Dataset { records }
    }
}

/// A single bad line or record, with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct LineFailure {
    pub line: usize,
    pub id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataError {
    Io(String),
    /// Malformed lines and invariant breaches, collected per line.
    InvalidRecords(Vec<LineFailure>),
    EmptyDataset,
    BadSplitRatios { sum: f64 },
    BadConfig(Vec<String>),
    MissingConformer { id: String },
    /// Fewer than two non-missing training values for a target.
    InsufficientLabels { target: usize, count: usize },
    /// A target column is constant on the training split.
    ConstantTarget { target: usize },
    NoLabels,
}

impl fmt::Display for DataError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataError::Io(m) => write!(f, "io error: {m}"),
            DataError::InvalidRecords(fails) => {
                writeln!(f, "{} invalid record(s):", fails.len())?;
                for fail in fails {
                    match &fail.id {
                        Some(id) => writeln!(f, "  line {}: [{}] {}", fail.line, id, fail.message)?,
                        None => writeln!(f, "  line {}: {}", fail.line, fail.message)?,
                    }
                }
                Ok(())
            }
            DataError::EmptyDataset => write!(f, "dataset is empty"),
            DataError::BadSplitRatios { sum } => {
                write!(f, "split ratios must sum to 1, got {sum}")
            }
            DataError::BadConfig(problems) => {
                write!(f, "invalid config: {}", problems.join("; "))
            }
            DataError::MissingConformer { id } => {
                write!(f, "record {id} has no conformer")
            }
            DataError::InsufficientLabels { target, count } => {
                write!(f, "target {target} has only {count} non-missing training values")
            }
            DataError::ConstantTarget { target } => {
                write!(f, "target {target} is constant on the training split")
            }
            DataError::NoLabels => write!(f, "dataset carries no labels"),
        }
    }
}

impl std::error::Error for DataError {}

pub type DataResult<T> = Result<T, DataError>;
