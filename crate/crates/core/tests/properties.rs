use proptest::prelude::*;
use tabfm_core::clean::{clean_table, CleaningConfig};
use tabfm_core::eval::{ks_shape, trend_categorical, trend_numeric, tvd_shape};
use tabfm_core::great::bpe::train_bpe;
use tabfm_core::kmeans::kmeans;
use tabfm_core::split::{random_split_ids, SplitSpec};
use tabfm_core::table::infer_schema;
use tabfm_core::transform::gmm::fit_em;
use tabfm_core::transform::text::{parse_row_text, serialize_row_text};
use tabfm_core::{rng, Cell, ColumnMeta, Table};

fn samples() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1000i32..1000, 1..60).prop_map(|v| v.into_iter().map(f64::from).collect())
}

fn labels() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..5, 1..60)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn tokenizer_round_trips_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let vocab = train_bpe(&["the cat is on the mat, the dog is not", "x is 1.5, y is -2"], 320).unwrap();
        let ids = vocab.encode_bytes(&bytes);
        prop_assert_eq!(vocab.decode_bytes(&ids).unwrap(), bytes);
    }

    #[test]
    fn ks_is_a_symmetric_score(a in samples(), b in samples()) {
        let s = ks_shape(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s, ks_shape(&b, &a).unwrap());
        prop_assert_eq!(ks_shape(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ks_ignores_strictly_monotone_maps(a in samples(), b in samples()) {
        // Exact in f64 for integers this small.
        let f = |v: &f64| v * v * v + 2.0 * v - 7.0;
        let fa: Vec<f64> = a.iter().map(f).collect();
        let fb: Vec<f64> = b.iter().map(f).collect();
        prop_assert_eq!(ks_shape(&a, &b).unwrap(), ks_shape(&fa, &fb).unwrap());
        // Decreasing maps read the CDF from the other side, which rounds
        // differently.
        let ga: Vec<f64> = a.iter().map(|v| -v).collect();
        let gb: Vec<f64> = b.iter().map(|v| -v).collect();
        prop_assert!((ks_shape(&a, &b).unwrap() - ks_shape(&ga, &gb).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn tvd_is_a_symmetric_score(a in labels(), b in labels()) {
        let s = tvd_shape(&a, &b).unwrap();
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!((s - tvd_shape(&b, &a).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(tvd_shape(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn trends_do_not_depend_on_pair_order(
        rows in prop::collection::vec((-50i32..50, -50i32..50, 0u8..3, 0u8..4), 2..40),
        syn in prop::collection::vec((-50i32..50, -50i32..50, 0u8..3, 0u8..4), 2..40),
    ) {
        let col = |r: &[(i32, i32, u8, u8)], k: usize| -> Vec<f64> { r.iter().map(|t| f64::from(if k == 0 { t.0 } else { t.1 })).collect() };
        let cat = |r: &[(i32, i32, u8, u8)], k: usize| -> Vec<u8> { r.iter().map(|t| if k == 0 { t.2 } else { t.3 }).collect() };
        let (x, y, sx, sy) = (col(&rows, 0), col(&rows, 1), col(&syn, 0), col(&syn, 1));
        let t = trend_numeric((&x, &y), (&sx, &sy)).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert!((t - trend_numeric((&y, &x), (&sy, &sx)).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(trend_numeric((&x, &y), (&x, &y)).unwrap(), 1.0);

        let (a, b, sa, sb) = (cat(&rows, 0), cat(&rows, 1), cat(&syn, 0), cat(&syn, 1));
        let t = trend_categorical((&a, &b), (&sa, &sb)).unwrap();
        prop_assert!((0.0..=1.0).contains(&t));
        prop_assert!((t - trend_categorical((&b, &a), (&sb, &sa)).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(trend_categorical((&a, &b), (&a, &b)).unwrap(), 1.0);
    }

    #[test]
    fn kmeans_wcss_never_rises(points in prop::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 4..60), k in 1usize..5, seed in any::<u64>()) {
        let vectors: Vec<Vec<f64>> = points.iter().map(|&(x, y)| vec![x, y]).collect();
        let fit = kmeans(&vectors, k.min(vectors.len()), seed, 50).unwrap();
        for w in fit.wcss_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9 * w[0].abs().max(1.0), "{:?}", fit.wcss_trace);
        }
    }

    #[test]
    fn em_log_likelihood_never_falls(values in prop::collection::vec(-30.0f64..30.0, 10..120), k in 1usize..5, seed in any::<u64>()) {
        let fit = fit_em(&values, k, seed).unwrap();
        for w in fit.log_likelihood.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8 * w[0].abs().max(1.0), "{:?}", fit.log_likelihood);
        }
    }

    #[test]
    fn text_rows_round_trip_in_any_order(
        nums in prop::collection::vec(-99_999i32..99_999, 1..4),
        cats in prop::collection::vec(("[a-z ,\"\\\\]{1,8}", 0u32..3), 1..4),
        seed in any::<u64>(),
    ) {
        let mut schema = Vec::new();
        let mut row = Vec::new();
        for (i, v) in nums.iter().enumerate() {
            schema.push(ColumnMeta::numerical(format!("n{i}")));
            row.push(Cell::Num(f64::from(*v) / 100.0));
        }
        for (i, (label, k)) in cats.iter().enumerate() {
            let categories = (0..3).map(|c| format!("{label}{c}")).collect();
            schema.push(ColumnMeta::categorical(format!("c {i}"), categories));
            row.push(Cell::Cat(*k));
        }
        let text = serialize_row_text(&schema, &row, Some(&mut rng::seeded(seed))).unwrap();
        prop_assert_eq!(parse_row_text(&schema, &text).unwrap(), row);
    }

    #[test]
    fn random_splits_partition_the_corpus(n in 3usize..80, seed in any::<u64>(), a in 1u32..8, b in 1u32..8, c in 1u32..8) {
        let total = f64::from(a + b + c);
        let spec = SplitSpec::random((f64::from(a) / total, f64::from(b) / total, f64::from(c) / total), seed);
        let ids: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        if let Ok(split) = random_split_ids(&ids, &spec) {
            split.check_partition(&ids).unwrap();
            prop_assert_eq!(split, random_split_ids(&ids, &spec).unwrap());
        }
    }

    #[test]
    fn cleaning_is_idempotent(
        rows in prop::collection::vec((prop::option::weighted(0.9, -100i32..100), prop::option::weighted(0.9, 0u8..4), prop::option::weighted(0.7, 0u8..30)), 25..80),
    ) {
        let header = ["x", "c", "d"];
        let raw: Vec<Vec<String>> = rows
            .iter()
            .map(|(x, c, d)| {
                vec![
                    x.map_or(String::new(), |v| format!("{}", f64::from(v) / 4.0)),
                    c.map_or(String::new(), |v| format!("k{v}")),
                    d.map_or(String::new(), |v| format!("w{v}")),
                ]
            })
            .collect();
        let table = infer_schema(&Table::from_raw("p", &header, &raw).unwrap());
        let config = CleaningConfig::default();
        if let (Some(once), _) = clean_table(&table, &config) {
            prop_assert!(once.rows.iter().flatten().all(|c| !c.is_null()));
            let (twice, report) = clean_table(&infer_schema(&once), &config);
            prop_assert!(report.is_fixpoint());
            prop_assert_eq!(twice.unwrap(), once);
        }
    }
}
