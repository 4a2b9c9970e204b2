//! Finite-difference verification of backward rules.
//!
//! The harness is fixed to 64-bit precision: central differences at a
//! sensible step are meaningless against f32 rounding.

use super::tensor::Tensor;
use super::{AdError, AdResult, Tape, VarId};

/// A scalar-valued differentiable function under test.
pub type ScalarFn<'a> = dyn Fn(&mut Tape<f64>, &[VarId]) -> AdResult<VarId> + 'a;

fn eval(f: &ScalarFn, inputs: &[Tensor<f64>]) -> AdResult<f64> {
    let mut tape = Tape::new();
    let ids: Vec<VarId> = inputs.iter().map(|t| tape.constant(t.clone())).collect();
    let out = f(&mut tape, &ids)?;
    let v = tape.value(out);
    if v.numel() != 1 {
        return Err(AdError::NonScalarOutput {
            shape: v.shape().to_vec(),
        });
    }
    Ok(v.item())
}

/// Gradients from the reverse pass, one tensor per input.
pub fn analytic_gradients(f: &ScalarFn, inputs: &[Tensor<f64>]) -> AdResult<Vec<Tensor<f64>>> {
    let mut tape = Tape::new();
    let ids: Vec<VarId> = inputs.iter().map(|t| tape.input(t.clone(), true)).collect();
    let out = f(&mut tape, &ids)?;
    if tape.value(out).numel() != 1 {
        return Err(AdError::NonScalarOutput {
            shape: tape.value(out).shape().to_vec(),
        });
    }
    let grads = tape.backward(out)?;
    Ok(ids
        .iter()
        .zip(inputs)
        .map(|(&id, t)| {
            grads
                .get(id)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect())
}

/// Central differences at step `h`, one tensor per input.
pub fn numeric_gradients(
    f: &ScalarFn,
    inputs: &[Tensor<f64>],
    h: f64,
) -> AdResult<Vec<Tensor<f64>>> {
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[i].shape().to_vec());
        for c in 0..inputs[i].numel() {
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[c] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[c] -= h;
            grad.data_mut()[c] = (eval(f, &plus)? - eval(f, &minus)?) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Worst relative error between two gradient lists, with denominator
/// max(|analytic|, |numeric|, 1e-8).
pub fn max_relative_error(analytic: &[Tensor<f64>], numeric: &[Tensor<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            let denom = av.abs().max(nv.abs()).max(1e-8);
            worst = worst.max((av - nv).abs() / denom);
        }
    }
    worst
}

/// Compare the reverse pass against central differences at step `h`;
/// returns the worst relative error over every input coordinate.
pub fn grad_check(f: &ScalarFn, inputs: &[Tensor<f64>], h: f64) -> AdResult<f64> {
    let analytic = analytic_gradients(f, inputs)?;
    let numeric = numeric_gradients(f, inputs, h)?;
    Ok(max_relative_error(&analytic, &numeric))
}
