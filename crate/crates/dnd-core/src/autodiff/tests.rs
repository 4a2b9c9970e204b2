use super::*;

fn mat(rows: usize, cols: usize, data: &[f64]) -> Tensor<f64> {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

#[test]
fn matmul_identity_and_projector() {
    let mut tape: Tape<f64> = Tape::new();
    let eye = tape.constant(mat(2, 2, &[1.0, 0.0, 0.0, 1.0]));
    let a = tape.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    let out = tape.matmul(eye, a).unwrap();
    assert_eq!(tape.value(out).data(), &[1.0, 2.0, 3.0, 4.0]);

    let proj = tape.constant(mat(2, 2, &[1.0, 0.0, 0.0, 0.0]));
    let b = tape.constant(mat(2, 2, &[5.0, 6.0, 7.0, 8.0]));
    let out = tape.matmul(proj, b).unwrap();
    assert_eq!(tape.value(out).data(), &[5.0, 6.0, 0.0, 0.0]);
}

#[test]
fn matmul_shape_mismatch_reports_both_shapes() {
    let mut tape = Tape::<f64>::new();
    let a = tape.constant(Tensor::zeros(vec![2, 3]));
    let b = tape.constant(Tensor::zeros(vec![2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("[2, 3]"), "message should carry shapes: {msg}");
}

#[test]
fn grad_of_sum_matmul_wrt_a_is_row_sums_of_b() {
    // d/dA sum(A·B) has entry (i,k) = Σ_j B[k,j], identical for every row i.
    let a = mat(2, 3, &[0.3, -0.4, 0.9, 1.2, 0.1, -0.7]);
    let b = mat(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let f = |tape: &mut Tape<f64>, ids: &[VarId]| {
        let p = tape.matmul(ids[0], ids[1])?;
        tape.sum_all(p)
    };
    let analytic = analytic_gradients(&f, &[a.clone(), b.clone()]).unwrap();
    for i in 0..2 {
        for k in 0..3 {
            let row_sum: f64 = (0..2).map(|j| b.at(k, j)).sum();
            assert!((analytic[0].at(i, k) - row_sum).abs() < 1e-12);
        }
    }
    let err = grad_check(&f, &[a, b], 1e-5).unwrap();
    assert!(err < 1e-4, "err = {err}");
}

#[test]
fn softmax_symmetry_stability_and_closed_form() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(Tensor::vector(vec![0.0, 0.0]));
    let s = tape.softmax_rows(x, None).unwrap();
    assert_eq!(tape.value(s).data(), &[0.5, 0.5]);

    let x = tape.constant(Tensor::vector(vec![1000.0, 0.0]));
    let s = tape.softmax_rows(x, None).unwrap();
    let v = tape.value(s).data();
    assert!(v[0] > 1.0 - 1e-12 && v[1] < 1e-12 && v.iter().all(|x| x.is_finite()));

    let x = tape.constant(Tensor::vector(vec![1.0f64.ln(), 3.0f64.ln()]));
    let s = tape.softmax_rows(x, None).unwrap();
    let v = tape.value(s).data();
    assert!((v[0] - 0.25).abs() < 1e-12 && (v[1] - 0.75).abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one_and_shift_invariant() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(mat(2, 3, &[0.3, -1.2, 2.0, 0.0, 0.5, -0.5]));
    let s = tape.softmax_rows(x, None).unwrap();
    for r in 0..2 {
        let sum: f64 = tape.value(s).row(r).iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
    let shifted = tape.constant(mat(2, 3, &[5.3, 3.8, 7.0, 5.0, 5.5, 4.5]));
    let s2 = tape.softmax_rows(shifted, None).unwrap();
    for i in 0..6 {
        assert!((tape.value(s).data()[i] - tape.value(s2).data()[i]).abs() < 1e-12);
    }
}

#[test]
fn softmax_all_masked_row_is_degenerate() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let err = tape.softmax_rows(x, Some(&[false, false])).unwrap_err();
    assert!(matches!(err, AdError::DegenerateRow { .. }));
}

#[test]
fn softmax_mask_zeroes_entries() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(Tensor::vector(vec![3.0, 100.0, 3.0]));
    let s = tape.softmax_rows(x, Some(&[true, false, true])).unwrap();
    let v = tape.value(s).data();
    assert_eq!(v[1], 0.0);
    assert!((v[0] - 0.5).abs() < 1e-12 && (v[2] - 0.5).abs() < 1e-12);
}

#[test]
fn layer_norm_examples() {
    let mut tape: Tape<f64> = Tape::new();
    let gain = tape.constant(Tensor::vector(vec![1.0; 3]));
    let bias = tape.constant(Tensor::vector(vec![0.0; 3]));

    // Constant row: epsilon-guarded zero output.
    let x = tape.constant(Tensor::vector(vec![5.0, 5.0, 5.0]));
    let y = tape.layer_norm(x, gain, bias).unwrap();
    assert!(tape.value(y).data().iter().all(|v| v.abs() < 1e-9));

    // Population variance: [1,3] -> [-1, 1].
    let gain2 = tape.constant(Tensor::vector(vec![1.0; 2]));
    let bias2 = tape.constant(Tensor::vector(vec![0.0; 2]));
    let x = tape.constant(Tensor::vector(vec![1.0, 3.0]));
    let y = tape.layer_norm(x, gain2, bias2).unwrap();
    let v = tape.value(y).data();
    assert!((v[0] + 1.0).abs() < 1e-4 && (v[1] - 1.0).abs() < 1e-4);

    // Zero gain: all-bias output.
    let zero_gain = tape.constant(Tensor::vector(vec![0.0; 2]));
    let b = tape.constant(Tensor::vector(vec![0.7, -0.3]));
    let x = tape.constant(Tensor::vector(vec![2.0, 9.0]));
    let y = tape.layer_norm(x, zero_gain, b).unwrap();
    assert_eq!(tape.value(y).data(), &[0.7, -0.3]);
}

#[test]
fn layer_norm_empty_last_axis_rejected() {
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::zeros(vec![2, 0]));
    let g = tape.constant(Tensor::zeros(vec![0]));
    let b = tape.constant(Tensor::zeros(vec![0]));
    assert!(tape.layer_norm(x, g, b).is_err());
}

#[test]
fn elementwise_suite_examples() {
    let mut tape: Tape<f64> = Tape::new();
    // scatter_add(3, [0,0,2], [[1],[2],[3]]) -> [[3],[0],[3]]
    let rows = tape.constant(mat(3, 1, &[1.0, 2.0, 3.0]));
    let out = tape.scatter_add_rows(3, &[0, 0, 2], rows).unwrap();
    assert_eq!(tape.value(out).data(), &[3.0, 0.0, 3.0]);

    // silu(0) = 0
    let x = tape.constant(Tensor::vector(vec![0.0]));
    let y = tape.silu(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0]);

    // mean over last axis of [[2,4]] -> [3]
    let x = tape.constant(mat(1, 2, &[2.0, 4.0]));
    let y = tape.mean_axis(x, 1).unwrap();
    assert_eq!(tape.value(y).data(), &[3.0]);
}

#[test]
fn gather_out_of_range_is_index_error() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]));
    assert!(matches!(
        tape.gather_rows(x, &[0, 2]),
        Err(AdError::IndexOutOfRange { .. })
    ));
    let rows = tape.constant(mat(1, 2, &[1.0, 2.0]));
    assert!(matches!(
        tape.scatter_add_rows(1, &[1], rows),
        Err(AdError::IndexOutOfRange { .. })
    ));
}

#[test]
fn scatter_then_gather_on_distinct_indices_is_identity() {
    let mut tape: Tape<f64> = Tape::new();
    let rows = tape.constant(mat(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
    let indices = [4, 0, 2];
    let scattered = tape.scatter_add_rows(5, &indices, rows).unwrap();
    let back = tape.gather_rows(scattered, &indices).unwrap();
    assert_eq!(tape.value(back), tape.value(rows));
}

#[test]
fn loss_examples() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(mat(2, 2, &[0.4, -1.0, 2.0, 0.0]));
    let loss = tape.mse(x, x).unwrap();
    assert_eq!(tape.value(loss).item(), 0.0);

    let logits = tape.constant(Tensor::scalar(0.0));
    let target = tape.constant(Tensor::scalar(1.0));
    let loss = tape.bce_with_logits(logits, target, None).unwrap();
    assert!((tape.value(loss).item() - 2.0f64.ln()).abs() < 1e-12);

    let p = tape.constant(Tensor::vector(vec![1.0, -1.0]));
    let t = tape.constant(Tensor::vector(vec![0.0, 0.0]));
    let loss = tape.l1(p, t, None).unwrap();
    assert_eq!(tape.value(loss).item(), 1.0);
}

#[test]
fn fully_masked_loss_is_degenerate() {
    let mut tape: Tape<f64> = Tape::new();
    let p = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let t = tape.constant(Tensor::vector(vec![0.0, 0.0]));
    assert!(matches!(
        tape.bce_with_logits(p, t, Some(&[false, false])),
        Err(AdError::DegenerateLoss { .. })
    ));
    assert!(matches!(
        tape.l1(p, t, Some(&[false, false])),
        Err(AdError::DegenerateLoss { .. })
    ));
}

#[test]
fn masked_entries_do_not_contribute() {
    let mut tape: Tape<f64> = Tape::new();
    let logits = tape.constant(Tensor::vector(vec![0.0, 500.0]));
    let targets = tape.constant(Tensor::vector(vec![1.0, 0.0]));
    let masked = tape
        .bce_with_logits(logits, targets, Some(&[true, false]))
        .unwrap();
    assert!((tape.value(masked).item() - 2.0f64.ln()).abs() < 1e-12);
}

#[test]
fn gradients_accumulate_across_uses() {
    // y = x·x + x (elementwise on a 1x1): dy/dx = 2x + 1.
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.input(mat(1, 1, &[3.0]), true);
    let sq = tape.mul(x, x).unwrap();
    let y = tape.add(sq, x).unwrap();
    let s = tape.sum_all(y).unwrap();
    let grads = tape.backward(s).unwrap();
    assert_eq!(grads.get(x).unwrap().data(), &[7.0]);
}

#[test]
fn frozen_subgraph_receives_no_gradients() {
    let mut tape: Tape<f64> = Tape::new();
    let frozen = tape.input(mat(2, 2, &[1.0, 2.0, 3.0, 4.0]), false);
    let live = tape.input(mat(2, 2, &[0.5, 0.5, 0.5, 0.5]), true);
    let prod = tape.matmul(frozen, live).unwrap();
    let loss = tape.sum_all(prod).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert!(grads.get(frozen).is_none());
    assert!(grads.get(live).is_some());
}

#[test]
fn backward_requires_scalar_root() {
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.input(mat(1, 2, &[1.0, 2.0]), true);
    assert!(matches!(
        tape.backward(x),
        Err(AdError::NonScalarOutput { .. })
    ));
}

#[test]
fn nll_diagonal_matches_closed_form() {
    // 2x2 logits [[a, b], [c, d]]: loss = (ln(e^a+e^b) - a + ln(e^c+e^d) - d)/2
    let mut tape: Tape<f64> = Tape::new();
    let x = tape.constant(mat(2, 2, &[2.0, -1.0, 0.5, 1.5]));
    let loss = tape.nll_diagonal(x).unwrap();
    let expect = (((2.0f64).exp() + (-1.0f64).exp()).ln() - 2.0
        + ((0.5f64).exp() + (1.5f64).exp()).ln()
        - 1.5)
        / 2.0;
    assert!((tape.value(loss).item() - expect).abs() < 1e-12);
}

#[test]
fn repeat_cols_broadcasts_and_sums_back() {
    let f = |tape: &mut Tape<f64>, ids: &[VarId]| {
        let wide = tape.repeat_cols(ids[0], 3)?;
        let w = tape.constant(mat(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let prod = tape.mul(wide, w)?;
        tape.sum_all(prod)
    };
    let x = mat(2, 1, &[1.5, -0.5]);
    let analytic = analytic_gradients(&f, &[x]).unwrap();
    // Gradient of each column entry is the row sum of the weights.
    assert_eq!(analytic[0].data(), &[6.0, 15.0]);
}
