//! Randomized gradient verification across every registered operation.
//!
//! Each trial draws fresh inputs, builds a scalar composition around one
//! operation, and compares the reverse pass against central differences.
//! Inputs near non-differentiable points (relu and l1 kinks) are nudged away
//! so the comparison stays meaningful.

use super::gradcheck::grad_check;
use super::tensor::Tensor;
use super::{AdResult, Tape, VarId};
use crate::seeding::{derive_seed_ints, rng_from};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

#[derive(Debug, Clone)]
pub struct OpCheck {
    pub name: &'static str,
    pub max_error: f64,
}

fn rand_tensor(rng: &mut ChaCha20Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

fn rand_tensor_away_from(rng: &mut ChaCha20Rng, rows: usize, cols: usize, gap: f64) -> Tensor<f64> {
    let mut t = rand_tensor(rng, rows, cols);
    for v in t.data_mut() {
        if v.abs() < gap {
            *v += if *v >= 0.0 { gap } else { -gap };
        }
    }
    t
}

/// Scalarize with a random weighting so every output coordinate gets a
/// distinct cotangent.
fn weighted_sum(tape: &mut Tape<f64>, x: VarId, weights: &Tensor<f64>) -> AdResult<VarId> {
    let w = tape.constant(weights.clone());
    let prod = tape.mul(x, w)?;
    tape.sum_all(prod)
}

type Case = (Vec<Tensor<f64>>, Box<dyn Fn(&mut Tape<f64>, &[VarId]) -> AdResult<VarId>>);

fn cases(op: &str, rng: &mut ChaCha20Rng) -> Case {
    match op {
        "matmul" => {
            let a = rand_tensor(rng, 3, 4);
            let b = rand_tensor(rng, 4, 2);
            let w = rand_tensor(rng, 3, 2);
            (
                vec![a, b],
                Box::new(move |t, ids| {
                    let p = t.matmul(ids[0], ids[1])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "transpose" => {
            let a = rand_tensor(rng, 2, 5);
            let w = rand_tensor(rng, 5, 2);
            (
                vec![a],
                Box::new(move |t, ids| {
                    let p = t.transpose(ids[0])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "add" | "sub" | "mul" => {
            let a = rand_tensor(rng, 3, 3);
            let b = rand_tensor(rng, 3, 3);
            let w = rand_tensor(rng, 3, 3);
            let which = op.to_string();
            (
                vec![a, b],
                Box::new(move |t, ids| {
                    let p = match which.as_str() {
                        "add" => t.add(ids[0], ids[1])?,
                        "sub" => t.sub(ids[0], ids[1])?,
                        _ => t.mul(ids[0], ids[1])?,
                    };
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "scale" => {
            let a = rand_tensor(rng, 2, 4);
            let w = rand_tensor(rng, 2, 4);
            let factor = rng.gen_range(0.3..1.7);
            (
                vec![a],
                Box::new(move |t, ids| {
                    let p = t.scale(ids[0], factor)?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "bias_add" => {
            let x = rand_tensor(rng, 3, 4);
            let b = Tensor::vector((0..4).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let w = rand_tensor(rng, 3, 4);
            (
                vec![x, b],
                Box::new(move |t, ids| {
                    let p = t.bias_add(ids[0], ids[1])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "silu" => {
            let x = rand_tensor(rng, 2, 5);
            let w = rand_tensor(rng, 2, 5);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.silu(ids[0])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "relu" => {
            let x = rand_tensor_away_from(rng, 2, 5, 0.05);
            let w = rand_tensor(rng, 2, 5);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.relu(ids[0])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "concat" => {
            let a = rand_tensor(rng, 2, 3);
            let b = rand_tensor(rng, 2, 2);
            let c = rand_tensor(rng, 2, 4);
            let w = rand_tensor(rng, 2, 9);
            (
                vec![a, b, c],
                Box::new(move |t, ids| {
                    let p = t.concat(&[ids[0], ids[1], ids[2]], 1)?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "concat_rows" => {
            let a = rand_tensor(rng, 2, 3);
            let b = rand_tensor(rng, 1, 3);
            let w = rand_tensor(rng, 3, 3);
            (
                vec![a, b],
                Box::new(move |t, ids| {
                    let p = t.concat(&[ids[0], ids[1]], 0)?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "slice_cols" => {
            let x = rand_tensor(rng, 3, 6);
            let w = rand_tensor(rng, 3, 3);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.slice_cols(ids[0], 1, 4)?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "repeat_cols" => {
            let x = rand_tensor(rng, 4, 1);
            let w = rand_tensor(rng, 4, 3);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.repeat_cols(ids[0], 3)?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "gather_rows" => {
            // Repeated index exercises gradient accumulation.
            let x = rand_tensor(rng, 4, 3);
            let w = rand_tensor(rng, 3, 3);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.gather_rows(ids[0], &[2, 0, 2])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "scatter_add_rows" => {
            let x = rand_tensor(rng, 3, 2);
            let w = rand_tensor(rng, 4, 2);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.scatter_add_rows(4, &[1, 1, 3], ids[0])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "sum_axis" | "mean_axis" => {
            let x = rand_tensor(rng, 3, 4);
            let axis = rng.gen_range(0..2usize);
            let (or, oc) = if axis == 0 { (1, 4) } else { (3, 1) };
            let w = rand_tensor(rng, or, oc);
            let mean = op == "mean_axis";
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = if mean {
                        t.mean_axis(ids[0], axis)?
                    } else {
                        t.sum_axis(ids[0], axis)?
                    };
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "softmax_rows" => {
            let x = rand_tensor(rng, 3, 5);
            let w = rand_tensor(rng, 3, 5);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.softmax_rows(ids[0], None)?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "softmax_rows_masked" => {
            let x = rand_tensor(rng, 2, 5);
            let w = rand_tensor(rng, 2, 5);
            let valid = vec![true, false, true, true, false];
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.softmax_rows(ids[0], Some(&valid))?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "layer_norm" => {
            let x = rand_tensor(rng, 3, 4);
            let g = Tensor::vector((0..4).map(|_| rng.gen_range(0.5..1.5)).collect());
            let b = Tensor::vector((0..4).map(|_| rng.gen_range(-0.5..0.5)).collect());
            let w = rand_tensor(rng, 3, 4);
            (
                vec![x, g, b],
                Box::new(move |t, ids| {
                    let p = t.layer_norm(ids[0], ids[1], ids[2])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "normalize_rows" => {
            let mut x = rand_tensor(rng, 3, 4);
            // Keep rows comfortably away from the zero-norm floor.
            for v in x.data_mut() {
                *v += if *v >= 0.0 { 0.3 } else { -0.3 };
            }
            let w = rand_tensor(rng, 3, 4);
            (
                vec![x],
                Box::new(move |t, ids| {
                    let p = t.normalize_rows(ids[0])?;
                    weighted_sum(t, p, &w)
                }),
            )
        }
        "mse" => {
            let p = rand_tensor(rng, 2, 3);
            let q = rand_tensor(rng, 2, 3);
            (
                vec![p, q],
                Box::new(move |t, ids| t.mse(ids[0], ids[1])),
            )
        }
        "l1" => {
            let p = rand_tensor(rng, 2, 3);
            let mut q = rand_tensor(rng, 2, 3);
            // Push targets well away from predictions (kink at equality).
            for qv in q.data_mut() {
                *qv += 1.5;
            }
            (
                vec![p, q],
                Box::new(move |t, ids| t.l1(ids[0], ids[1], None)),
            )
        }
        "l1_masked" => {
            let p = rand_tensor(rng, 2, 3);
            let mut q = rand_tensor(rng, 2, 3);
            for qv in q.data_mut() {
                *qv += 1.5;
            }
            let valid = vec![true, true, false, true, false, true];
            (
                vec![p, q],
                Box::new(move |t, ids| t.l1(ids[0], ids[1], Some(&valid))),
            )
        }
        "bce_with_logits" => {
            let x = rand_tensor(rng, 2, 3);
            let y = Tensor::matrix(2, 3, (0..6).map(|_| rng.gen_range(0.1..0.9)).collect()).unwrap();
            (
                vec![x, y],
                Box::new(move |t, ids| t.bce_with_logits(ids[0], ids[1], None)),
            )
        }
        "bce_with_logits_masked" => {
            let x = rand_tensor(rng, 2, 3);
            let y = Tensor::matrix(2, 3, (0..6).map(|_| rng.gen_range(0.1..0.9)).collect()).unwrap();
            let valid = vec![true, false, true, true, true, false];
            (
                vec![x, y],
                Box::new(move |t, ids| t.bce_with_logits(ids[0], ids[1], Some(&valid))),
            )
        }
        "nll_diagonal" => {
            let x = rand_tensor(rng, 3, 3);
            (vec![x], Box::new(move |t, ids| t.nll_diagonal(ids[0])))
        }
        other => panic!("unknown op {other}"),
    }
}

pub const REGISTERED_OPS: &[&str] = &[
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "scale",
    "bias_add",
    "silu",
    "relu",
    "concat",
    "concat_rows",
    "slice_cols",
    "repeat_cols",
    "gather_rows",
    "scatter_add_rows",
    "sum_axis",
    "mean_axis",
    "softmax_rows",
    "softmax_rows_masked",
    "layer_norm",
    "normalize_rows",
    "mse",
    "l1",
    "l1_masked",
    "bce_with_logits",
    "bce_with_logits_masked",
    "nll_diagonal",
];

/// Run `trials` randomized grad checks for every registered operation at
/// step `h`; returns the worst error per op.
pub fn check_registered_ops(seed: u64, trials: usize, h: f64) -> AdResult<Vec<OpCheck>> {
    let mut out = Vec::with_capacity(REGISTERED_OPS.len());
    for (op_idx, &op) in REGISTERED_OPS.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for trial in 0..trials {
            let mut rng = rng_from(derive_seed_ints(seed, &[op_idx as u64, trial as u64]));
            let (inputs, f) = cases(op, &mut rng);
            worst = worst.max(grad_check(&f, &inputs, h)?);
        }
        out.push(OpCheck {
            name: op,
            max_error: worst,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_ops_pass_randomized_grad_checks() {
        for check in check_registered_ops(11, 10, 1e-5).unwrap() {
            assert!(
                check.max_error < 1e-4,
                "{} failed: {}",
                check.name,
                check.max_error
            );
        }
    }
}
