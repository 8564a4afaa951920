use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use super::*;
use crate::models::matrix_tensor;
use crate::neural::gradcheck;
use crate::rng;
use crate::table::ColumnData;

fn toy_table(n: usize, seed: u64) -> Table {
    let mut r = rng::seeded(seed);
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut c = Vec::new();
    for _ in 0..n {
        let k = r.gen_range(0..3usize);
        x.push(k as f64 * 2.0 + rng::standard_normal(&mut r) * 0.2);
        y.push(rng::standard_normal(&mut r));
        c.push(["a", "b", "c"][k]);
    }
    Table::from_columns(
        "toy",
        vec![
            ("x".to_string(), ColumnData::numeric(x)),
            ("c".to_string(), ColumnData::categorical(c)),
            ("y".to_string(), ColumnData::numeric(y)),
        ],
    )
    .unwrap()
}

fn small_config() -> VaeConfig {
    VaeConfig { hidden: vec![6, 5], latent: 3, batch_size: 16, signature_dim: 8, ..VaeConfig::default() }
}

fn setup<T: Real>(variant: VaeVariant, config: VaeConfig, table: &Table, seed: u64) -> (Vae<T>, Tensor<T>) {
    let transformer = ColumnTransformer::fit(table, 3, 7).unwrap();
    let matrix = transformer.encode_table(table, &mut rng::seeded(1)).unwrap();
    let sig = if variant == VaeVariant::Stvaem {
        stvaem_signatures(&transformer, SignatureSource::Hashing, config.signature_dim).unwrap()
    } else {
        Vec::new()
    };
    let model = Vae::new(variant, transformer, config, sig, &mut rng::seeded(seed)).unwrap();
    (model, matrix_tensor(&matrix))
}

#[test]
fn zero_noise_gives_mean() {
    let table = toy_table(30, 1);
    let (mut m, data) = setup::<f64>(VaeVariant::Stvae, small_config(), &table, 2);
    let eps = Tensor::zeros(data.rows, 3);
    let f = m.forward(&data, Some(&eps), Mode::Eval, &mut rng::seeded(0)).unwrap();
    assert_eq!(f.z, f.mu);
}

#[test]
fn discrete_heads_are_distributions() {
    let table = toy_table(30, 2);
    let (mut m, data) = setup::<f32>(VaeVariant::Tvae, small_config(), &table, 3);
    let f = m.forward(&data, None, Mode::Train, &mut rng::seeded(0)).unwrap();
    for b in m.transformer.blocks().iter().filter(|b| b.kind != BlockKind::Alpha) {
        for i in 0..f.output.rows {
            let s: f32 = f.output.row(i)[b.span.range()].iter().sum();
            assert!((s - 1.0).abs() <= 1e-6);
        }
    }
    for b in m.transformer.blocks().iter().filter(|b| b.kind == BlockKind::Alpha) {
        assert!((0..f.output.rows).all(|i| f.output.get(i, b.span.start).abs() <= 1.0));
    }
}

#[test]
fn stvaem_input_width() {
    let table = toy_table(30, 3);
    let (m, data) = setup::<f32>(VaeVariant::Stvaem, small_config(), &table, 4);
    assert_eq!(m.input_width(), data.cols + 3 * 8);
    let (m, _) = setup::<f32>(VaeVariant::Stvae, small_config(), &table, 4);
    assert_eq!(m.input_width(), data.cols);
}

#[test]
fn width_mismatch_is_rejected() {
    let table = toy_table(30, 3);
    let (mut m, data) = setup::<f32>(VaeVariant::Stvae, small_config(), &table, 4);
    let bad = data.slice_cols(0, data.cols - 1);
    assert!(m.forward(&bad, None, Mode::Eval, &mut rng::seeded(0)).is_err());
}

/// Logits reproducing `target` exactly: α through `atanh`, ±1000 on the
/// one-hot blocks.
fn perfect_logits(blocks: &[Block], target: &Tensor<f64>) -> Tensor<f64> {
    let mut l = Tensor::zeros(target.rows, target.cols);
    for i in 0..target.rows {
        for b in blocks {
            for k in b.span.range() {
                let t = target.get(i, k);
                let v = match b.kind {
                    BlockKind::Alpha => libm::atanh(t),
                    _ => 1000.0 * t,
                };
                l.set(i, k, v);
            }
        }
    }
    l
}

#[test]
fn perfect_reconstruction_has_zero_loss() {
    let table = toy_table(20, 4);
    let transformer = ColumnTransformer::fit(&table, 3, 7).unwrap();
    let blocks = transformer.blocks();
    let mut target = matrix_tensor::<f64>(&transformer.encode_table(&table, &mut rng::seeded(1)).unwrap());
    for b in blocks.iter().filter(|b| b.kind == BlockKind::Alpha) {
        for i in 0..target.rows {
            target.set(i, b.span.start, 0.0);
        }
    }
    let logits = perfect_logits(&blocks, &target);
    let zeros = Tensor::zeros(target.rows, 4);
    let e = elbo_loss(VaeVariant::Stvae, &blocks, &logits, &target, &zeros, &zeros, None, 1.0).unwrap();
    assert_eq!(e.loss, 0.0);
}

#[test]
fn tvae_numeric_term_at_mean() {
    // One numerical column: at α = ᾱ the loss is ½ ln(2πδ²).
    let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let table = Table::from_columns("t", vec![("x".to_string(), ColumnData::numeric(x))]).unwrap();
    let transformer = ColumnTransformer::fit(&table, 1, 7).unwrap();
    let blocks = transformer.blocks();
    let target = matrix_tensor::<f64>(&transformer.encode_table(&table, &mut rng::seeded(1)).unwrap());
    let logits = perfect_logits(&blocks, &target);
    let zeros = Tensor::zeros(target.rows, 2);
    for delta in [0.1, 0.5, 2.0] {
        let e = elbo_loss(VaeVariant::Tvae, &blocks, &logits, &target, &zeros, &zeros, Some(&[delta]), 1.0).unwrap();
        let hand = 0.5 * libm::log(2.0 * core::f64::consts::PI * delta * delta);
        assert!((e.loss - hand).abs() < 1e-9, "{} vs {hand}", e.loss);
    }
}

#[test]
fn stvae_numeric_term_is_scaled_squared_error() {
    let x: Vec<f64> = (0..20).map(|i| i as f64).collect();
    let table = Table::from_columns("t", vec![("x".to_string(), ColumnData::numeric(x))]).unwrap();
    let transformer = ColumnTransformer::fit(&table, 1, 7).unwrap();
    let blocks = transformer.blocks();
    let target = matrix_tensor::<f64>(&transformer.encode_table(&table, &mut rng::seeded(1)).unwrap());
    let mut logits = perfect_logits(&blocks, &target);
    // Every α̂ is off by 0.1.
    for i in 0..target.rows {
        logits.set(i, 0, libm::atanh(target.get(i, 0) + 0.1));
    }
    let zeros = Tensor::zeros(target.rows, 2);
    for scale in [1.0, 50.0] {
        let e = elbo_loss(VaeVariant::Stvae, &blocks, &logits, &target, &zeros, &zeros, None, scale).unwrap();
        assert!((e.loss - scale * 0.01).abs() < 1e-9, "{} at scale {scale}", e.loss);
    }
}

#[test]
fn delta_presence_is_checked() {
    let table = toy_table(10, 5);
    let transformer = ColumnTransformer::fit(&table, 3, 7).unwrap();
    let blocks = transformer.blocks();
    let t = Tensor::<f64>::zeros(2, transformer.width);
    let z = Tensor::<f64>::zeros(2, 3);
    assert!(elbo_loss(VaeVariant::Tvae, &blocks, &t, &t, &z, &z, None, 1.0).is_err());
    assert!(elbo_loss(VaeVariant::Tvae, &blocks, &t, &t, &z, &z, Some(&[1.0]), 1.0).is_err());
    assert!(elbo_loss(VaeVariant::Stvae, &blocks, &t, &t, &z, &z, Some(&[1.0, 1.0]), 1.0).is_err());
    assert!(elbo_loss(VaeVariant::Tvae, &blocks, &t, &t, &z, &z, Some(&[1.0, 1.0]), 1.0).is_ok());
}

fn gradient_check(variant: VaeVariant) {
    let table = toy_table(12, 6);
    let (mut m, data) = setup::<f64>(variant, small_config(), &table, 7);
    let data = data.gather_rows(&(0..12).collect::<Vec<_>>());
    let eps = normal_tensor::<f64, _>(12, 3, &mut rng::seeded(8));
    if let Some(d) = m.delta.as_mut() {
        d.value.data = vec![0.3, 0.7];
    }
    let report = gradcheck::check(
        &mut m,
        1e-6,
        1e-4,
        |m| {
            m.zero_grad();
            Ok(m.objective(&data, Some(&eps), Mode::Train, &mut rng::seeded(0))?.loss)
        },
        |m| {
            let f = m.forward(&data, Some(&eps), Mode::Train, &mut rng::seeded(0))?;
            Ok(m.loss_of(&f, &data)?.loss)
        },
        |m, f| m.visit_params(f),
    )
    .unwrap();
    assert!(report.checked > 100);
    assert!(report.max_rel_error <= 1e-3, "{variant:?}: {report:?}");
}

#[test]
fn tvae_gradients() {
    gradient_check(VaeVariant::Tvae);
}

#[test]
fn stvae_gradients() {
    gradient_check(VaeVariant::Stvae);
}

#[test]
fn stvaem_gradients() {
    gradient_check(VaeVariant::Stvaem);
}

#[test]
fn sampling_yields_valid_rows() {
    let table = toy_table(50, 9);
    let (mut m, _) = setup::<f32>(VaeVariant::Stvae, small_config(), &table, 10);
    let out = m.sample(37, &mut rng::seeded(1)).unwrap();
    assert_eq!(out.n_rows(), 37);
    let j = out.column_index("c").unwrap();
    assert!(out.rows.iter().all(|r| out.label(j, r[j]).is_some()));
    assert_eq!(m.sample(0, &mut rng::seeded(1)).unwrap().n_rows(), 0);
}

#[test]
fn learns_gaussian_mean() {
    let mut r = rng::seeded(11);
    let x: Vec<f64> = (0..1000).map(|_| 5.0 + rng::standard_normal(&mut r)).collect();
    let table = Table::from_columns("g", vec![("x".to_string(), ColumnData::numeric(x))]).unwrap();
    let config = VaeConfig { hidden: vec![32, 32], latent: 8, batch_size: 100, ..VaeConfig::default() };
    let (mut m, data) = setup::<f32>(VaeVariant::Stvae, config, &table, 12);
    for _ in 0..60 {
        let mut order: Vec<usize> = (0..data.rows).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut r);
        for chunk in order.chunks(100) {
            m.train_batch(&data.gather_rows(chunk), &mut r).unwrap();
        }
    }
    let out = m.sample(2000, &mut r).unwrap();
    let mean = out.numeric_values(0).iter().sum::<f64>() / 2000.0;
    assert!((4.5..=5.5).contains(&mean), "{mean}");
}

#[test]
fn delta_is_clamped() {
    let table = toy_table(40, 13);
    let (mut m, data) = setup::<f32>(VaeVariant::Tvae, small_config(), &table, 14);
    m.delta.as_mut().unwrap().value.data = vec![1e-4, 1e-4];
    m.train_batch(&data, &mut rng::seeded(1)).unwrap();
    assert!(m.delta.as_ref().unwrap().value.data.iter().all(|&d| d >= 1e-3));
}

#[test]
fn signatures_follow_column_names() {
    let table = toy_table(20, 15);
    let t = ColumnTransformer::fit(&table, 3, 7).unwrap();
    let a = stvaem_signatures(&t, SignatureSource::Hashing, 8).unwrap();
    assert_eq!(a.len(), 24);
    let mut renamed = t.clone();
    renamed.columns[1].name = "something_else".into();
    let b = stvaem_signatures(&renamed, SignatureSource::Hashing, 8).unwrap();
    assert_eq!(a[..8], b[..8]);
    assert_ne!(a[8..16], b[8..16]);
    assert_eq!(a[16..], b[16..]);
    assert!(stvaem_signatures(&t, SignatureSource::Hashing, 0).unwrap().is_empty());

    let mut map = BTreeMap::new();
    map.insert("x".to_string(), vec![1.0; 4]);
    assert_eq!(stvaem_signatures(&t, SignatureSource::External(&map), 4), Err(Error::MissingEmbedding("y".into())));
    map.insert("y".to_string(), vec![2.0; 4]);
    map.insert("c".to_string(), vec![3.0; 4]);
    assert_eq!(stvaem_signatures(&t, SignatureSource::External(&map), 4).unwrap()[4..8], [2.0; 4]);
}

#[test]
fn signature_is_row_constant() {
    let table = toy_table(20, 16);
    let (m, data) = setup::<f32>(VaeVariant::Stvaem, small_config(), &table, 17);
    let x = m.with_signature(&data).unwrap();
    let w = data.cols;
    assert!((1..x.rows).all(|i| x.row(i)[w..] == x.row(0)[w..]));
}

#[test]
fn empty_signature_matches_stvae() {
    let table = toy_table(64, 18);
    let config = VaeConfig { signature_dim: 0, ..small_config() };
    let (mut a, data) = setup::<f32>(VaeVariant::Stvae, config.clone(), &table, 19);
    let (mut b, _) = setup::<f32>(VaeVariant::Stvaem, config, &table, 19);
    let (mut ra, mut rb) = (rng::seeded(3), rng::seeded(3));
    for _ in 0..10 {
        let la = a.train_batch(&data, &mut ra).unwrap();
        let lb = b.train_batch(&data, &mut rb).unwrap();
        assert_eq!(la, lb);
    }
}

#[test]
fn transfer_reinitializes_heads_only() {
    let (mut src, _) = setup::<f32>(VaeVariant::Stvae, small_config(), &toy_table(30, 20), 21);
    let params = src.export_params();
    let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let table = Table::from_columns("other", vec![("x".to_string(), ColumnData::numeric(x))]).unwrap();
    let (mut dst, _) = setup::<f32>(VaeVariant::Stvae, small_config(), &table, 22);
    let report = dst.load_body(&params);
    assert_eq!(report.reinitialized, ["enc.0.w", "enc.0.b", "dec.4.w", "dec.4.b"]);
    assert!(report.loaded.iter().any(|n| n == "mu.w"));
    assert!(report.loaded.iter().any(|n| n == "dec.2.w"));
    assert_eq!(dst.export_params()["enc.2.w"], params["enc.2.w"]);
}
