//! JSONL ingestion and canonical serialization.
//!
//! One record per line: `{"id": str, "atoms": [[9 ints]...],
//! "bonds": [[u, v, 3 ints]...], "coords": [[x,y,z]...]|null,
//! "labels": [num|null...]|null}`. Coordinates are written with up to
//! 9 significant digits, so `write ∘ parse` is byte-stable and
//! `parse ∘ write` is the identity on values.

use super::{
    AtomFeatures, Bond, BondFeatures, Conformer, DataError, DataResult, Dataset, LineFailure,
    MoleculeGraph, MoleculeRecord,
};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct RawRecord {
    id: String,
    atoms: Vec<[i64; 9]>,
    bonds: Vec<[i64; 5]>,
    coords: Option<Vec<[f64; 3]>>,
    labels: Option<Vec<Option<f64>>>,
}

fn code(x: i64, what: &str, problems: &mut Vec<String>) -> u8 {
    if (0..=255).contains(&x) {
        x as u8
    } else {
        problems.push(format!("{what} code {x} outside 0..=255"));
        0
    }
}

fn record_from_raw(raw: RawRecord, problems: &mut Vec<String>) -> MoleculeRecord {
    let atoms = raw
        .atoms
        .iter()
        .map(|a| {
            let mut c = [0u8; 9];
            for (k, &x) in a.iter().enumerate() {
                c[k] = code(x, "atom feature", problems);
            }
            AtomFeatures::from_codes(c)
        })
        .collect();
    let bonds = raw
        .bonds
        .iter()
        .map(|b| {
            let (u, v) = (b[0], b[1]);
            if u < 0 || v < 0 {
                problems.push(format!("negative bond endpoint ({u}, {v})"));
            }
            Bond {
                u: u.max(0) as usize,
                v: v.max(0) as usize,
                features: BondFeatures {
                    bond_type: code(b[2], "bond type", problems),
                    stereo: code(b[3], "bond stereo", problems),
                    is_conjugated: code(b[4], "bond conjugation", problems),
                },
            }
        })
        .collect();
    MoleculeRecord {
        id: raw.id,
        graph: MoleculeGraph { atoms, bonds },
        conformer: raw.coords.map(|coords| Conformer { coords }),
        labels: raw.labels,
    }
}

fn raw_from_record(r: &MoleculeRecord) -> RawRecord {
    RawRecord {
        id: r.id.clone(),
        atoms: r
            .graph
            .atoms
            .iter()
            .map(|a| a.codes().map(|c| c as i64))
            .collect(),
        bonds: r
            .graph
            .bonds
            .iter()
            .map(|b| {
                let f = b.features.codes();
                [b.u as i64, b.v as i64, f[0] as i64, f[1] as i64, f[2] as i64]
            })
            .collect(),
        coords: r
            .conformer
            .as_ref()
            .map(|c| c.coords.iter().map(|r| r.map(round_sig9)).collect()),
        labels: r.labels.clone(),
    }
}

/// Round to at most 9 significant digits (the serialized precision).
pub fn round_sig9(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return 0.0f64.max(x);
    }
    format!("{x:.8e}").parse().expect("formatted float reparses")
}

pub fn parse_jsonl_str(text: &str) -> DataResult<Dataset> {
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawRecord>(line) {
            Err(e) => failures.push(LineFailure {
                line: line_no,
                id: None,
                message: format!("malformed record: {e}"),
            }),
            Ok(raw) => {
                let mut problems = Vec::new();
                let record = record_from_raw(raw, &mut problems);
                problems.extend(record.problems());
                if problems.is_empty() {
                    records.push(record);
                } else {
                    failures.push(LineFailure {
                        line: line_no,
                        id: Some(record.id.clone()),
                        message: problems.join("; "),
                    });
                }
            }
        }
    }
    if !failures.is_empty() {
        return Err(DataError::InvalidRecords(failures));
    }
    // Dataset-level invariants (id uniqueness, label arity).
    Dataset::new(records)
}

pub fn parse_jsonl(path: impl AsRef<Path>) -> DataResult<Dataset> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_jsonl_str(&text)
}

pub fn write_jsonl_string(dataset: &Dataset) -> String {
    let mut out = String::new();
    for r in dataset.iter() {
        out.push_str(&serde_json::to_string(&raw_from_record(r)).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn write_jsonl(dataset: &Dataset, path: impl AsRef<Path>) -> DataResult<()> {
    std::fs::write(path.as_ref(), write_jsonl_string(dataset))
        .map_err(|e| DataError::Io(format!("{}: {e}", path.as_ref().display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn methane_like() -> MoleculeRecord {
        MoleculeRecord {
            id: "m1".into(),
            graph: MoleculeGraph {
                atoms: vec![AtomFeatures::from_codes([6, 0, 0, 5, 4, 0, 3, 0, 0])],
                bonds: vec![],
            },
            conformer: Some(Conformer {
                coords: vec![[0.0, 0.0, 0.0]],
            }),
            labels: Some(vec![Some(1.25), None]),
        }
    }

    #[test]
    fn single_record_roundtrips_byte_stable() {
        let ds = Dataset::new(vec![methane_like()]).unwrap();
        let text = write_jsonl_string(&ds);
        let reparsed = parse_jsonl_str(&text).unwrap();
        assert_eq!(reparsed.records(), ds.records());
        assert_eq!(write_jsonl_string(&reparsed), text);
    }

    #[test]
    fn bond_index_out_of_range_names_the_record() {
        let line = r#"{"id":"bad1","atoms":[[6,0,0,5,0,0,0,0,0]],"bonds":[[0,1,0,0,0]],"coords":null,"labels":null}"#;
        let err = parse_jsonl_str(line).unwrap_err();
        match err {
            DataError::InvalidRecords(fails) => {
                assert_eq!(fails.len(), 1);
                assert_eq!(fails[0].id.as_deref(), Some("bad1"));
                assert_eq!(fails[0].line, 1);
                assert!(fails[0].message.contains("out of range"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let text = "\n{not json}\n";
        let err = parse_jsonl_str(text).unwrap_err();
        match err {
            DataError::InvalidRecords(fails) => {
                assert_eq!(fails[0].line, 2);
                assert!(fails[0].message.contains("malformed"));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn rounding_keeps_nine_significant_digits() {
        assert_eq!(round_sig9(1.5), 1.5);
        assert_eq!(round_sig9(0.0), 0.0);
        assert_eq!(round_sig9(-1.234567894e-3), -1.23456789e-3);
        assert_eq!(round_sig9(round_sig9(std::f64::consts::PI)), round_sig9(std::f64::consts::PI));
    }
}
