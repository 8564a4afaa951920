use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::*;
use crate::rng;
use crate::table::ColumnData;

fn brute_ks(a: &[f64], b: &[f64]) -> f64 {
    let cdf = |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
    let sup = a.iter().chain(b).map(|&x| (cdf(a, x) - cdf(b, x)).abs()).fold(0.0, f64::max);
    1.0 - sup
}

#[test]
fn ks_examples() {
    let a = [3.0, 1.0, 2.0];
    assert_eq!(ks_shape(&a, &a).unwrap(), 1.0);
    assert_eq!(ks_shape(&[0.0; 5], &[1.0; 7]).unwrap(), 0.0);
    assert_eq!(ks_shape(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 10.0]).unwrap(), 0.75);
    assert!(ks_shape(&[], &a).is_err());
}

#[test]
fn ks_matches_brute_force() {
    let mut r = rng::seeded(1);
    for _ in 0..200 {
        let n = r.gen_range(1..30);
        let m = r.gen_range(1..30);
        let a: Vec<f64> = (0..n).map(|_| r.gen_range(0..8) as f64).collect();
        let b: Vec<f64> = (0..m).map(|_| r.gen_range(0..8) as f64).collect();
        assert!((ks_shape(&a, &b).unwrap() - brute_ks(&a, &b)).abs() < 1e-12);
    }
}

#[test]
fn tvd_examples() {
    assert_eq!(tvd_shape(&["A", "B"], &["B", "A"]).unwrap(), 1.0);
    assert_eq!(tvd_shape(&["A", "B"], &["A", "A", "A", "B"]).unwrap(), 0.75);
    assert_eq!(tvd_shape(&["A", "B"], &["C"]).unwrap(), 0.0);
    assert!(tvd_shape::<&str>(&["A"], &[]).is_err());
}

#[test]
fn pearson_examples() {
    let x = [1.0, 2.0, 3.0, 4.5, 7.0];
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
    assert!((pearson(&x, &y).unwrap() - 1.0).abs() <= 1e-12);
    let neg: Vec<f64> = x.iter().map(|v| -v).collect();
    assert!((pearson(&x, &neg).unwrap() + 1.0).abs() <= 1e-12);
    assert!((pearson(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 0.5).abs() <= 1e-12);
    assert_eq!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    assert!(pearson(&[1.0, 2.0], &[1.0]).is_err());
}

#[test]
fn trend_examples() {
    assert_eq!(trend_from_correlations(0.3, 0.3), 1.0);
    assert_eq!(trend_from_correlations(-1.0, 1.0), 0.0);
    assert_eq!(trend_from_correlations(0.0, 0.5), 0.75);

    let (ra, rb) = ([0, 0, 1, 1], [0, 1, 0, 1]);
    let (sa, sb) = ([0, 1], [0, 1]);
    assert_eq!(trend_categorical((&ra, &rb), (&ra, &rb)).unwrap(), 1.0);
    assert_eq!(trend_categorical((&ra, &rb), (&sa, &sb)).unwrap(), 0.5);
    assert_eq!(trend_categorical((&[0], &[0]), (&[1], &[1])).unwrap(), 0.0);
}

#[test]
fn binning() {
    let mut r = rng::seeded(2);
    let real: Vec<f64> = (0..1000).map(|_| r.gen::<f64>()).collect();
    let (rb, sb) = bin_numeric(&real, &[-5.0, 0.5, 7.0], 10).unwrap();
    for k in 0..10 {
        let f = rb.iter().filter(|&&b| b == k).count() as f64 / 1000.0;
        assert!((f - 0.1).abs() <= 0.02, "bin {k}: {f}");
    }
    assert_eq!(sb[0], 0);
    assert_eq!(sb[2], 9);

    let (rb, sb) = bin_numeric(&[4.0; 10], &[1.0, 4.0, 9.0], 10).unwrap();
    assert!(rb.iter().chain(&sb).all(|&b| b == 0));
    assert!(bin_numeric(&[], &[1.0], 10).is_err());
}

fn mixed_table(n: usize, seed: u64) -> Table {
    let mut r = rng::seeded(seed);
    let x: Vec<f64> = (0..n).map(|_| rng::standard_normal(&mut r)).collect();
    let y: Vec<f64> = x.iter().map(|v| v + 0.3 * rng::standard_normal(&mut r)).collect();
    let c: Vec<&str> = x.iter().map(|&v| if v > 0.0 { "hi" } else { "lo" }).collect();
    Table::from_columns(
        "mixed",
        vec![("x".to_string(), ColumnData::numeric(x)), ("y".to_string(), ColumnData::numeric(y)), ("c".to_string(), ColumnData::categorical(c))],
    )
    .unwrap()
}

#[test]
fn self_comparison_is_perfect() {
    let t = mixed_table(200, 3);
    let rep = table_report(&t, &t).unwrap();
    assert_eq!((rep.shape, rep.trend, rep.overall), (1.0, Some(1.0), 1.0));
    assert_eq!(rep.pairs.len(), 3);
    assert_eq!(rep.pairs[1].metric, Metric::BinnedContingency);
}

#[test]
fn shuffled_column_breaks_trends_only() {
    let t = mixed_table(300, 4);
    let mut s = t.clone();
    let mut col: Vec<Cell> = s.rows.iter().map(|r| r[1]).collect();
    rand::seq::SliceRandom::shuffle(col.as_mut_slice(), &mut rng::seeded(5));
    for (r, c) in s.rows.iter_mut().zip(col) {
        r[1] = c;
    }
    let rep = table_report(&t, &s).unwrap();
    assert_eq!(rep.shape, 1.0);
    assert!(rep.trend.unwrap() < 1.0);
    assert!((rep.overall - (rep.shape + rep.trend.unwrap()) / 2.0).abs() <= 1e-12);
}

#[test]
fn single_column_falls_back_to_shape() {
    let t = Table::from_columns("one", vec![("x".to_string(), ColumnData::numeric([1.0, 2.0, 3.0, 4.0]))]).unwrap();
    let s = Table::from_columns("one", vec![("x".to_string(), ColumnData::numeric([1.0, 2.0, 3.0, 10.0]))]).unwrap();
    let rep = table_report(&t, &s).unwrap();
    assert_eq!(rep.trend, None);
    assert_eq!(rep.overall, 0.75);
}

#[test]
fn schema_mismatch_is_rejected() {
    let t = mixed_table(20, 6);
    let mut s = t.clone();
    s.columns[0].name = "z".into();
    assert!(table_report(&t, &s).is_err());
}

#[test]
fn labels_compare_by_name() {
    let t = Table::from_columns("t", vec![("c".to_string(), ColumnData::categorical(["a", "b", "b"]))]).unwrap();
    let mut s = t.clone();
    s.columns[0].categories.reverse();
    for r in &mut s.rows {
        r[0] = Cell::Cat(1 - r[0].as_cat().unwrap() as u32);
    }
    assert_eq!(table_report(&t, &s).unwrap().overall, 1.0);
}

#[test]
fn histogram_counts() {
    let t = mixed_table(100, 7);
    let h = histograms(&t, &t, 10).unwrap();
    assert_eq!(h.len(), 3);
    assert_eq!(h[0].real.iter().sum::<usize>(), 100);
    assert_eq!(h[0].real, h[0].synthetic);
    assert_eq!(h[2].labels.len(), 2);
}

/// Exact two-sided p by listing every subset of the pooled sample.
fn brute_exact_p(a: &[f64], b: &[f64]) -> f64 {
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let n = a.len();
    let big = pooled.len();
    let rank = |x: f64| {
        let less = pooled.iter().filter(|&&v| v < x).count() as f64;
        let eq = pooled.iter().filter(|&&v| v == x).count() as f64;
        less + (eq + 1.0) / 2.0
    };
    let ranks: Vec<f64> = pooled.iter().map(|&x| rank(x)).collect();
    let mean = n as f64 * (big + 1) as f64 / 2.0;
    let obs = (ranks[..n].iter().sum::<f64>() - mean).abs();
    let (mut hit, mut all) = (0u64, 0u64);
    for mask in 0u32..(1 << big) {
        if mask.count_ones() as usize != n {
            continue;
        }
        let s: f64 = (0..big).filter(|i| mask >> i & 1 == 1).map(|i| ranks[i]).sum();
        all += 1;
        if (s - mean).abs() >= obs - 1e-9 {
            hit += 1;
        }
    }
    hit as f64 / all as f64
}

#[test]
fn mann_whitney_examples() {
    let r = mann_whitney_u(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
    assert_eq!(r.u, 0.0);
    assert!(r.exact);
    assert!((r.p - 0.1).abs() < 1e-12);
    let a = [0.5, 0.7, 0.7, 0.9];
    assert_eq!(mann_whitney_u(&a, &a).unwrap().p, 1.0);
    assert!(mann_whitney_u(&[], &a).is_err());
}

#[test]
fn exact_matches_enumeration() {
    let mut r = rng::seeded(8);
    for big in 2..=10 {
        for n in 1..big {
            for _ in 0..5 {
                let a: Vec<f64> = (0..n).map(|_| r.gen_range(0..5) as f64).collect();
                let b: Vec<f64> = (0..big - n).map(|_| r.gen_range(0..5) as f64).collect();
                let e = mann_whitney_u_exact(&a, &b).unwrap();
                assert!((e.p - brute_exact_p(&a, &b)).abs() < 1e-12, "{a:?} {b:?}");
            }
        }
    }
}

/// Every possible `U` at `|a| = |b| = 8` without ties. The corrected
/// normal approximation stays within 0.01 of the exact p except for
/// `6 ≤ |U − 32| ≤ 9`, where the gaps below were computed with scipy.
#[test]
fn approximation_tracks_exact_at_eight_by_eight() {
    let mut seen = [false; 65];
    for mask in 0u32..1 << 16 {
        if mask.count_ones() != 8 {
            continue;
        }
        let (a, b): (Vec<f64>, Vec<f64>) = {
            let (a, b): (Vec<u32>, Vec<u32>) = (0..16).partition(|i| mask >> i & 1 == 1);
            (a.iter().map(|&v| v as f64).collect(), b.iter().map(|&v| v as f64).collect())
        };
        let e = mann_whitney_u_exact(&a, &b).unwrap();
        if core::mem::replace(&mut seen[e.u as usize], true) {
            continue;
        }
        let n = mann_whitney_u_approx(&a, &b).unwrap();
        assert_eq!(e.u, n.u);
        let gap = (e.p - n.p).abs();
        let off = (e.u - 32.0).abs() as usize;
        if (6..=9).contains(&off) {
            let scipy = [0.010213657259656, 0.010524767248208, 0.010905598066374, 0.010255043713939][off - 6];
            assert!((gap - scipy).abs() < 1e-9, "U = {}: {gap}", e.u);
        } else {
            assert!(gap <= 0.01, "U = {}: {gap}", e.u);
        }
    }
    assert!(seen.iter().all(|&s| s));
}

fn report(overall: f64) -> TableReport {
    TableReport { table: "t".into(), columns: vec![], pairs: vec![], shape: overall, trend: Some(overall), overall, real_rows: 1, synthetic_rows: 1 }
}

fn key(method: &str, regime: Regime, table: &str) -> ReportKey {
    ReportKey { split: "random".into(), method: method.into(), regime, table: table.into() }
}

#[test]
fn leaderboard_rows() {
    let reports = vec![
        (key("stvae", Regime::PretrainedFinetuned, "a"), report(0.9)),
        (key("stvae", Regime::Scratch, "a"), report(0.8)),
    ];
    let lb = build_leaderboard(&reports).unwrap();
    assert_eq!(lb.len(), 2);
    assert_eq!(lb[0].overall_std, 0.0);
    assert_eq!(lb[0].p_value, Some(1.0));
    let csv = leaderboard_csv(&lb);
    assert!(csv.starts_with(LEADERBOARD_HEADER));
    assert!(csv.lines().all(|l| l.split(',').count() == 10));

    let same: Vec<_> = ["a", "b", "c"]
        .iter()
        .flat_map(|t| [(key("ctgan", Regime::PretrainedFinetuned, t), report(0.7)), (key("ctgan", Regime::Scratch, t), report(0.7))])
        .collect();
    assert_eq!(build_leaderboard(&same).unwrap()[0].p_value, Some(1.0));
}

#[test]
fn leaderboard_rejects_uneven_coverage() {
    let reports = vec![
        (key("stvae", Regime::PretrainedFinetuned, "a"), report(0.9)),
        (key("stvae", Regime::Scratch, "b"), report(0.8)),
    ];
    assert!(build_leaderboard(&reports).is_err());
}
