//! Synthetic-versus-real quality: column shapes, pairwise trends and their
//! average.

mod leaderboard;
mod mwu;

pub use leaderboard::{build_leaderboard, leaderboard_csv, leaderboard_text, Leaderboard, LeaderboardRow, Regime, ReportKey, LEADERBOARD_HEADER};
pub use mwu::{mann_whitney_u, mann_whitney_u_approx, mann_whitney_u_exact, MannWhitney, EXACT_LIMIT};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{Cell, ColumnKind, Table};

/// Number of quantile bins used for numeric columns in mixed pairs.
pub const TREND_BINS: usize = 10;

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// `1 − sup |F_syn − F_real|` over the pooled sample points.
pub fn ks_shape(real: &[f64], syn: &[f64]) -> Result<f64> {
    if real.is_empty() || syn.is_empty() {
        return Err(Error::EmptyInput("ks_shape sample"));
    }
    let (a, b) = (sorted(real), sorted(syn));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut sup: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = if a[i] <= b[j] { a[i] } else { b[j] };
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        sup = sup.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok((1.0 - sup).clamp(0.0, 1.0))
}

fn fractions<L: Ord + Clone>(labels: &[L]) -> BTreeMap<L, f64> {
    let mut m = BTreeMap::new();
    for l in labels {
        *m.entry(l.clone()).or_insert(0.0) += 1.0;
    }
    let n = labels.len() as f64;
    for v in m.values_mut() {
        *v /= n;
    }
    m
}

fn total_variation<L: Ord + Clone>(real: &[L], syn: &[L]) -> f64 {
    let (r, s) = (fractions(real), fractions(syn));
    let mut sum = 0.0;
    for (k, v) in &r {
        sum += (v - s.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, v) in &s {
        if !r.contains_key(k) {
            sum += v;
        }
    }
    (1.0 - 0.5 * sum).clamp(0.0, 1.0)
}

/// `1 − ½ Σ |R_syn(w) − R_real(w)|` over the union of observed labels.
pub fn tvd_shape<L: Ord + Clone>(real: &[L], syn: &[L]) -> Result<f64> {
    if real.is_empty() || syn.is_empty() {
        return Err(Error::EmptyInput("tvd_shape sample"));
    }
    Ok(total_variation(real, syn))
}

/// Sample correlation; 0 when either input has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("pearson: {} vs {} values", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("pearson needs at least two points".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// `1 − |ρ_syn − ρ_real| / 2`.
pub fn trend_from_correlations(rho_real: f64, rho_syn: f64) -> f64 {
    (1.0 - (rho_syn - rho_real).abs() / 2.0).clamp(0.0, 1.0)
}

pub fn trend_numeric(real: (&[f64], &[f64]), syn: (&[f64], &[f64])) -> Result<f64> {
    Ok(trend_from_correlations(pearson(real.0, real.1)?, pearson(syn.0, syn.1)?))
}

/// `1 − ½ ΣΣ |R_syn(a,b) − R_real(a,b)|` over the union of observed pairs.
pub fn trend_categorical<A: Ord + Clone, B: Ord + Clone>(real: (&[A], &[B]), syn: (&[A], &[B])) -> Result<f64> {
    if real.0.len() != real.1.len() || syn.0.len() != syn.1.len() {
        return Err(Error::Shape("trend_categorical: pair columns differ in length".into()));
    }
    if real.0.is_empty() || syn.0.is_empty() {
        return Err(Error::EmptyInput("trend_categorical sample"));
    }
    let zip = |p: (&[A], &[B])| -> Vec<(A, B)> { p.0.iter().cloned().zip(p.1.iter().cloned()).collect() };
    Ok(total_variation(&zip(real), &zip(syn)))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(s: &[f64], p: f64) -> f64 {
    let h = (s.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Bin edges at the `k / bins` quantiles of `real`, duplicates collapsed.
/// Always starts at the minimum and ends at the maximum.
pub fn bin_edges(real: &[f64], bins: usize) -> Result<Vec<f64>> {
    if real.is_empty() {
        return Err(Error::EmptyInput("bin_numeric real sample"));
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("bins must be positive".into()));
    }
    let s = sorted(real);
    let mut edges: Vec<f64> = (0..=bins).map(|k| quantile(&s, k as f64 / bins as f64)).collect();
    edges.dedup();
    Ok(edges)
}

/// Bin of `v` given full edges; values outside the range clamp to the end bins.
pub fn bin_index(edges: &[f64], v: f64) -> usize {
    let interior = if edges.len() > 2 { &edges[1..edges.len() - 1] } else { &[][..] };
    interior.partition_point(|&e| e <= v)
}

/// Maps both samples through the quantile edges of the real one.
pub fn bin_numeric(real: &[f64], syn: &[f64], bins: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let edges = bin_edges(real, bins)?;
    let map = |v: &[f64]| v.iter().map(|&x| bin_index(&edges, x)).collect();
    Ok((map(real), map(syn)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Ks,
    Tvd,
    Pearson,
    Contingency,
    BinnedContingency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScore {
    pub column: String,
    pub metric: Metric,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub left: String,
    pub right: String,
    pub metric: Metric,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableReport {
    pub table: String,
    pub columns: Vec<ColumnScore>,
    pub pairs: Vec<PairScore>,
    pub shape: f64,
    /// `None` for single-column tables, where the overall score falls back
    /// to the shape score.
    pub trend: Option<f64>,
    pub overall: f64,
    pub real_rows: usize,
    pub synthetic_rows: usize,
}

#[derive(Clone, Copy)]
enum Col {
    Num,
    Cat,
}

/// Column values as seen by the metrics. Categorical cells become their
/// labels so that tables with different category orders compare correctly.
#[derive(Clone, PartialEq, PartialOrd)]
enum Value<'a> {
    Num(f64),
    Label(&'a str),
}

fn values(table: &Table, j: usize) -> Vec<Option<Value<'_>>> {
    table
        .rows
        .iter()
        .map(|r| match r[j] {
            Cell::Null => None,
            Cell::Num(x) => Some(Value::Num(x)),
            c => table.label(j, c).map(Value::Label),
        })
        .collect()
}

fn nums(v: &[Option<Value>]) -> Vec<f64> {
    v.iter().filter_map(|x| if let Some(Value::Num(n)) = x { Some(*n) } else { None }).collect()
}

fn labels<'a>(v: &[Option<Value<'a>>]) -> Vec<&'a str> {
    v.iter().filter_map(|x| if let Some(Value::Label(s)) = x { Some(*s) } else { None }).collect()
}

/// Rows where both cells are present.
fn complete<'a>(a: &[Option<Value<'a>>], b: &[Option<Value<'a>>]) -> (Vec<Option<Value<'a>>>, Vec<Option<Value<'a>>>) {
    a.iter().zip(b).filter(|(x, y)| x.is_some() && y.is_some()).map(|(x, y)| (x.clone(), y.clone())).unzip()
}

fn check_schemas(real: &Table, syn: &Table) -> Result<()> {
    let same = real.columns.len() == syn.columns.len() && real.columns.iter().zip(&syn.columns).all(|(a, b)| a.name == b.name && a.kind == b.kind);
    if same {
        Ok(())
    } else {
        Err(Error::Incompatible(format!("synthetic table does not match the schema of `{}`", real.name)))
    }
}

fn pair_score(kinds: (Col, Col), real: (&[Option<Value>], &[Option<Value>]), syn: (&[Option<Value>], &[Option<Value>])) -> Result<(Metric, f64)> {
    let (ra, rb) = complete(real.0, real.1);
    let (sa, sb) = complete(syn.0, syn.1);
    Ok(match kinds {
        (Col::Num, Col::Num) => (Metric::Pearson, trend_numeric((&nums(&ra), &nums(&rb)), (&nums(&sa), &nums(&sb)))?),
        (Col::Cat, Col::Cat) => (Metric::Contingency, trend_categorical((&labels(&ra), &labels(&rb)), (&labels(&sa), &labels(&sb)))?),
        (Col::Num, Col::Cat) => {
            let (r, s) = bin_numeric(&nums(&ra), &nums(&sa), TREND_BINS)?;
            (Metric::BinnedContingency, trend_categorical((&r, &labels(&rb)), (&s, &labels(&sb)))?)
        }
        (Col::Cat, Col::Num) => {
            let (r, s) = bin_numeric(&nums(&rb), &nums(&sb), TREND_BINS)?;
            (Metric::BinnedContingency, trend_categorical((&labels(&ra), &r), (&labels(&sa), &s))?)
        }
    })
}

/// Shape score per column, trend score per unordered column pair, and
/// their means. Rejected columns are ignored.
pub fn table_report(real: &Table, syn: &Table) -> Result<TableReport> {
    check_schemas(real, syn)?;
    let cols: Vec<(usize, Col)> = real
        .columns
        .iter()
        .enumerate()
        .filter_map(|(j, c)| match c.kind {
            ColumnKind::Numerical => Some((j, Col::Num)),
            ColumnKind::Categorical => Some((j, Col::Cat)),
            ColumnKind::Rejected(_) => None,
        })
        .collect();
    if cols.is_empty() {
        return Err(Error::EmptyInput("table_report columns"));
    }
    let rv: Vec<_> = cols.iter().map(|&(j, _)| values(real, j)).collect();
    let sv: Vec<_> = cols.iter().map(|&(j, _)| values(syn, j)).collect();

    let mut columns = Vec::with_capacity(cols.len());
    for (k, &(j, kind)) in cols.iter().enumerate() {
        let (metric, score) = match kind {
            Col::Num => (Metric::Ks, ks_shape(&nums(&rv[k]), &nums(&sv[k]))?),
            Col::Cat => (Metric::Tvd, tvd_shape(&labels(&rv[k]), &labels(&sv[k]))?),
        };
        columns.push(ColumnScore { column: real.columns[j].name.clone(), metric, score });
    }
    let mut pairs = Vec::new();
    for a in 0..cols.len() {
        for b in a + 1..cols.len() {
            let (metric, score) = pair_score((cols[a].1, cols[b].1), (&rv[a], &rv[b]), (&sv[a], &sv[b]))?;
            pairs.push(PairScore { left: real.columns[cols[a].0].name.clone(), right: real.columns[cols[b].0].name.clone(), metric, score });
        }
    }
    let shape = columns.iter().map(|c| c.score).sum::<f64>() / columns.len() as f64;
    let trend = if pairs.is_empty() { None } else { Some(pairs.iter().map(|p| p.score).sum::<f64>() / pairs.len() as f64) };
    let overall = trend.map_or(shape, |t| (shape + t) / 2.0);
    Ok(TableReport {
        table: real.name.clone(),
        columns,
        pairs,
        shape,
        trend,
        overall,
        real_rows: real.n_rows(),
        synthetic_rows: syn.n_rows(),
    })
}

/// Real and synthetic counts per bin (numeric) or per label (categorical).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub column: String,
    /// Bin edges for numeric columns; empty for categorical ones.
    pub edges: Vec<f64>,
    /// Bin labels: the label for categorical columns, `[lo, hi)` otherwise.
    pub labels: Vec<String>,
    pub real: Vec<usize>,
    pub synthetic: Vec<usize>,
}

pub fn histograms(real: &Table, syn: &Table, bins: usize) -> Result<Vec<Histogram>> {
    check_schemas(real, syn)?;
    let mut out = Vec::new();
    for (j, meta) in real.columns.iter().enumerate() {
        let (rv, sv) = (values(real, j), values(syn, j));
        let h = match meta.kind {
            ColumnKind::Numerical => {
                let (r, s) = (nums(&rv), nums(&sv));
                let edges = bin_edges(&r, bins)?;
                let n = edges.len().saturating_sub(1).max(1);
                let count = |v: &[f64]| {
                    let mut c = alloc::vec![0; n];
                    v.iter().for_each(|&x| c[bin_index(&edges, x)] += 1);
                    c
                };
                let labels = (0..n).map(|k| format!("[{}, {})", edges[k], edges[(k + 1).min(edges.len() - 1)])).collect();
                Histogram { column: meta.name.clone(), labels, real: count(&r), synthetic: count(&s), edges }
            }
            ColumnKind::Categorical => {
                let (r, s) = (labels(&rv), labels(&sv));
                let mut all: Vec<&str> = meta.categories.iter().map(String::as_str).collect();
                for l in r.iter().chain(&s) {
                    if !all.contains(l) {
                        all.push(l);
                    }
                }
                let count = |v: &[&str]| all.iter().map(|l| v.iter().filter(|x| *x == l).count()).collect();
                Histogram { column: meta.name.clone(), edges: Vec::new(), real: count(&r), synthetic: count(&s), labels: all.iter().map(|s| s.to_string()).collect() }
            }
            ColumnKind::Rejected(_) => continue,
        };
        out.push(h);
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
