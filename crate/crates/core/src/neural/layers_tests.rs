use super::*;
use crate::neural::gradcheck;
use crate::rng;

fn random(rows: usize, cols: usize, seed: u64) -> Tensor<f64> {
    let mut r = rng::seeded(seed);
    Tensor { rows, cols, data: (0..rows * cols).map(|_| rng::standard_normal(&mut r)).collect() }
}

/// Gradient check of `Dense(3→5) · layer · Dense(w→2)` under the loss
/// `Σ out ⊙ R`, plus a check of the input gradient.
fn check_layer(layer: Layer<f64>, mode: Mode) -> f64 {
    let mut r = rng::seeded(7);
    let mid = layer.out_dim(5);
    let mut net = Net::new(3, vec![Layer::Dense(Dense::new(3, 5, &mut r)), layer, Layer::Dense(Dense::new(mid, 2, &mut r))]);
    let x = random(6, 3, 1);
    let weights = random(6, 2, 2);
    let loss = |net: &mut Net<f64>, x: &Tensor<f64>| -> Result<f64> {
        let y = net.forward(x, mode, &mut rng::seeded(99))?;
        Ok(y.data.iter().zip(&weights.data).map(|(a, b)| a * b).sum())
    };
    let report = gradcheck::check(
        &mut net,
        1e-3,
        1e-3,
        |net| {
            net.zero_grad();
            let l = loss(net, &x)?;
            net.backward(&weights)?;
            Ok(l)
        },
        |net| loss(net, &x),
        |net, f| net.visit_params("", f),
    )
    .unwrap();
    assert!(report.checked > 0);

    // Input gradient.
    net.zero_grad();
    loss(&mut net, &x).unwrap();
    let gx = net.backward(&weights).unwrap();
    let mut worst = report.max_rel_error;
    for k in 0..x.data.len() {
        let mut up = x.clone();
        up.data[k] += 1e-3;
        let mut down = x.clone();
        down.data[k] -= 1e-3;
        let numeric = (loss(&mut net, &up).unwrap() - loss(&mut net, &down).unwrap()) / 2e-3;
        worst = worst.max(gradcheck::rel_error(gx.data[k], numeric, 1e-3));
    }
    worst
}

#[test]
fn every_layer_passes_gradient_check() {
    let cases: Vec<(&str, Layer<f64>, Mode)> = vec![
        ("dense", Layer::Dense(Dense::new(5, 4, &mut rng::seeded(3))), Mode::Train),
        ("relu", Layer::relu(), Mode::Train),
        ("leaky", Layer::leaky_relu(0.2), Mode::Train),
        ("tanh", Layer::tanh(), Mode::Train),
        ("batchnorm-train", Layer::BatchNorm(BatchNorm::new(5)), Mode::Train),
        ("batchnorm-eval", Layer::BatchNorm(BatchNorm::new(5)), Mode::Eval),
        ("dropout", Layer::dropout(0.5), Mode::Train),
        (
            "concat-skip",
            Layer::ConcatSkip(Box::new(Net::new(
                5,
                vec![Layer::Dense(Dense::new(5, 4, &mut rng::seeded(4))), Layer::BatchNorm(BatchNorm::new(4)), Layer::relu()],
            ))),
            Mode::Train,
        ),
        (
            "heads",
            Layer::Heads(
                Heads::new(vec![
                    HeadSpan { start: 0, width: 1, act: HeadAct::Tanh },
                    HeadSpan { start: 1, width: 2, act: HeadAct::Softmax },
                    HeadSpan { start: 3, width: 2, act: HeadAct::Gumbel { tau: 0.2 } },
                ])
                .unwrap(),
            ),
            Mode::Train,
        ),
    ];
    for (name, layer, mode) in cases {
        let err = check_layer(layer, mode);
        assert!(err <= 1e-3, "{name}: relative error {err}");
    }
}

#[test]
fn identity_dense_and_zero_dropout() {
    let mut eye = Tensor::zeros(3, 3);
    for i in 0..3 {
        eye.set(i, i, 1.0);
    }
    let dense = Dense::from_params(eye, Tensor::zeros(1, 3)).unwrap();
    let mut net = Net::new(3, vec![Layer::Dense(dense), Layer::dropout(0.0)]);
    let x = random(4, 3, 5);
    let mut r = rng::seeded(0);
    assert_eq!(net.forward(&x, Mode::Train, &mut r).unwrap(), x);
    assert_eq!(net.forward(&x, Mode::Eval, &mut r).unwrap(), x);
}

#[test]
fn zero_output_gradient_gives_zero_parameter_gradients() {
    let mut r = rng::seeded(1);
    let mut net = mlp::<f64, _>(3, &[4], 2, || vec![Layer::relu()], &mut r);
    net.forward(&random(5, 3, 2), Mode::Train, &mut r).unwrap();
    net.zero_grad();
    net.backward(&Tensor::zeros(5, 2)).unwrap();
    net.visit_params("", &mut |_, p| assert!(p.grad.data.iter().all(|&g| g == 0.0)));
}

#[test]
fn tanh_derivative_at_zero() {
    let mut layer = Layer::<f64>::tanh();
    layer.forward(&Tensor::zeros(1, 1), Mode::Train, &mut rng::seeded(0)).unwrap();
    assert_eq!(layer.backward(&Tensor::filled(1, 1, 1.0)).unwrap().data, [1.0]);
}

#[test]
fn backward_before_forward_is_an_error() {
    let mut net = mlp::<f32, _>(2, &[3], 1, Vec::new, &mut rng::seeded(0));
    assert_eq!(net.backward(&Tensor::zeros(1, 1)), Err(Error::BackwardBeforeForward));
}

#[test]
fn softmax_heads_normalize() {
    let mut heads = Heads::<f32>::new(vec![
        HeadSpan { start: 0, width: 3, act: HeadAct::Softmax },
        HeadSpan { start: 3, width: 2, act: HeadAct::Gumbel { tau: 0.2 } },
    ])
    .unwrap();
    let x = random(8, 5, 3).cast::<f32>();
    let mut r = rng::seeded(1);
    for mode in [Mode::Train, Mode::Eval, Mode::Sample] {
        let y = heads.forward(&x, mode, &mut r).unwrap();
        for i in 0..8 {
            assert!((y.row(i)[..3].iter().sum::<f32>() - 1.0).abs() < 1e-6);
            assert!((y.row(i)[3..].iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
    let y = heads.forward(&x, Mode::Sample, &mut r).unwrap();
    for i in 0..8 {
        assert!(y.row(i)[3..].iter().all(|&v| v == 0.0 || v == 1.0));
    }
    assert!(Heads::<f32>::new(vec![HeadSpan { start: 1, width: 2, act: HeadAct::Identity }]).is_err());
}

#[test]
fn gumbel_softmax_properties() {
    let mut r = rng::seeded(3);
    for _ in 0..200 {
        let y = gumbel_softmax(&[0.3f64, -1.0, 2.0], 0.5, &mut r, false).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        assert!(y.iter().all(|&v| v > 0.0));
        let h = gumbel_softmax(&[0.3f64, -1.0, 2.0], 0.5, &mut r, true).unwrap();
        assert_eq!(h.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(h.iter().filter(|&&v| v == 0.0).count(), 2);
    }
    assert!(gumbel_softmax(&[0.0f64], 0.0, &mut r, false).is_err());
}

#[test]
fn gumbel_dominant_logit_bound() {
    // With |g| < 10, component 0 of softmax(([50,0,0] + g)/0.2) has logit
    // gap at least (50 - 20)/0.2 = 150 over the others.
    let worst = [(50.0 - 10.0) / 0.2, (0.0 + 10.0) / 0.2, (0.0 + 10.0) / 0.2];
    let mut v = worst.to_vec();
    softmax_in_place(&mut v);
    assert!(v[0] > 0.999);
    let mut r = rng::seeded(8);
    for _ in 0..1000 {
        let y = gumbel_softmax(&[50.0f64, 0.0, 0.0], 0.2, &mut r, false).unwrap();
        assert!(y[0] > 0.999);
    }
}

#[test]
fn batchnorm_train_statistics() {
    let mut bn = BatchNorm::<f64>::new(3);
    let x = random(64, 3, 4).map(|v| 3.0 * v + 2.0);
    bn.forward(&x, Mode::Train).unwrap();
    let xhat = bn.normalized().unwrap();
    for j in 0..3 {
        let col: Vec<f64> = (0..64).map(|i| xhat.get(i, j)).collect();
        let mean = col.iter().sum::<f64>() / 64.0;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 64.0;
        assert!(mean.abs() <= 1e-5);
        assert!((var - 1.0).abs() <= 1e-4);
    }
}

#[test]
fn eval_forward_is_deterministic() {
    let mut r = rng::seeded(2);
    let mut net = Net::new(
        3,
        vec![Layer::Dense(Dense::new(3, 4, &mut r)), Layer::BatchNorm(BatchNorm::new(4)), Layer::dropout(0.5), Layer::relu()],
    );
    let x = random(5, 3, 9).cast::<f32>();
    net.forward(&x, Mode::Train, &mut r).unwrap();
    let a = net.forward(&x, Mode::Eval, &mut rng::seeded(1)).unwrap();
    let b = net.forward(&x, Mode::Eval, &mut rng::seeded(2)).unwrap();
    assert_eq!(a, b);
}
