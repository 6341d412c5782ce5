//! Central-difference gradient checks of the MLP backward pass on a few
//! randomized shapes, perturbing parameters through the public flat
//! snapshot API.

use esgrl_core::nn::{read_checkpoint, write_checkpoint, Mlp, MlpGrads};

/// Scalar loss L = Σ_k (k+1)·y_k; the upstream gradient mixes all outputs
/// with distinct weights so no path through the net cancels silently.
fn loss_and_upstream(y: &[f64]) -> (f64, Vec<f64>) {
    let mut loss = 0.0;
    let mut up = Vec::with_capacity(y.len());
    for (k, v) in y.iter().enumerate() {
        let c = (k + 1) as f64;
        loss += c * v;
        up.push(c);
    }
    (loss, up)
}

fn perturbed(mlp: &Mlp<f64>, flat_index: usize, eps: f64) -> Mlp<f64> {
    let mut flat = mlp.flat_params();
    flat[flat_index] += eps;
    Mlp::from_flat_params(mlp.sizes(), &flat).unwrap()
}

fn gradcheck(sizes: &[usize], seed: u64) {
    let mlp = Mlp::<f64>::init(sizes, seed).unwrap();
    let input: Vec<f64> =
        (0..sizes[0]).map(|i| ((i * 7 + 3) as f64 * 0.37).sin() * 0.8).collect();

    let (y, cache) = mlp.forward(&input).unwrap();
    let (_, upstream) = loss_and_upstream(&y);
    let grads = mlp.backward(&cache, &upstream).unwrap();
    let analytic: Vec<f64> = grads.flat().into_iter().flatten().copied().collect();

    let n = mlp.n_params();
    assert_eq!(analytic.len(), n);
    let h = 1e-6;
    for p in 0..n {
        let plus = perturbed(&mlp, p, h);
        let minus = perturbed(&mlp, p, -h);
        let (yp, _) = plus.forward(&input).unwrap();
        let (ym, _) = minus.forward(&input).unwrap();
        let (lp, _) = loss_and_upstream(&yp);
        let (lm, _) = loss_and_upstream(&ym);
        let numeric = (lp - lm) / (2.0 * h);
        let tol = 1e-7 * (1.0 + numeric.abs());
        assert!(
            (analytic[p] - numeric).abs() < tol,
            "sizes {sizes:?} param {p}: analytic {} vs numeric {numeric}",
            analytic[p]
        );
    }
}

#[test]
fn backward_matches_central_differences_on_three_shapes() {
    gradcheck(&[3, 5, 2], 11);
    gradcheck(&[6, 8, 8, 3], 12);
    gradcheck(&[2, 4, 1], 13);
}

#[test]
fn flat_params_round_trip_and_reject_bad_lengths() {
    let mlp = Mlp::<f64>::init(&[5, 7, 3], 21).unwrap();
    let flat = mlp.flat_params();
    assert_eq!(flat.len(), mlp.n_params());
    let back = Mlp::from_flat_params(mlp.sizes(), &flat).unwrap();
    assert_eq!(back, mlp);
    assert!(Mlp::from_flat_params(mlp.sizes(), &flat[1..]).is_err());
}

#[test]
fn checkpoint_preserves_forward_and_gradients_bitwise() {
    let mlp = Mlp::<f64>::init(&[4, 6, 2], 9).unwrap();
    let mut buf = Vec::new();
    write_checkpoint(&mut buf, &mlp, None).unwrap();
    let (back, log_std) = read_checkpoint::<f64>(&String::from_utf8(buf).unwrap()).unwrap();
    assert!(log_std.is_none());

    let input = [0.3, -0.7, 0.1, 0.9];
    let (y0, c0) = mlp.forward(&input).unwrap();
    let (y1, c1) = back.forward(&input).unwrap();
    assert_eq!(y0, y1);
    let up = vec![1.0; 2];
    let g0 = mlp.backward(&c0, &up).unwrap();
    let g1 = back.backward(&c1, &up).unwrap();
    assert_eq!(g0.flat(), g1.flat());
    let _ = MlpGrads::zeros_like(&back);
}
