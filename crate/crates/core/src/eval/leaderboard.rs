use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{mann_whitney_u, TableReport};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    PretrainedFinetuned,
    Scratch,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::PretrainedFinetuned => "pretrained-finetuned",
            Regime::Scratch => "scratch",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReportKey {
    pub split: String,
    pub method: String,
    pub regime: Regime,
    pub table: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub split: String,
    pub method: String,
    pub regime: Regime,
    pub tables: usize,
    pub shape_mean: f64,
    pub shape_std: f64,
    /// `None` when no table in the group has a column pair.
    pub trend_mean: Option<f64>,
    pub trend_std: Option<f64>,
    pub overall_mean: f64,
    pub overall_std: f64,
    /// Mann-Whitney p-value of pretrained-finetuned against scratch overall
    /// scores for this method; `None` when only one regime was run.
    pub p_value: Option<f64>,
}

pub type Leaderboard = Vec<LeaderboardRow>;

pub const LEADERBOARD_HEADER: &str = "split,method,regime,shape_mean,shape_std,trend_mean,trend_std,overall_mean,overall_std,p_value";

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var))
}

/// One row per (split, method, regime). Within a split every group must
/// cover the same tables.
pub fn build_leaderboard(reports: &[(ReportKey, TableReport)]) -> Result<Leaderboard> {
    if reports.is_empty() {
        return Err(Error::EmptyInput("leaderboard reports"));
    }
    let mut groups: BTreeMap<(String, String, Regime), BTreeMap<String, &TableReport>> = BTreeMap::new();
    for (k, r) in reports {
        let g = groups.entry((k.split.clone(), k.method.clone(), k.regime)).or_default();
        if g.insert(k.table.clone(), r).is_some() {
            return Err(Error::InvalidArgument(format!("duplicate report for table `{}` ({}, {}, {})", k.table, k.split, k.method, k.regime)));
        }
    }
    let mut coverage: BTreeMap<&str, BTreeSet<&String>> = BTreeMap::new();
    for ((split, method, regime), g) in &groups {
        let tables: BTreeSet<&String> = g.keys().collect();
        match coverage.get(split.as_str()) {
            Some(t) if *t != tables => {
                return Err(Error::Incompatible(format!("{method}/{regime} covers different tables than the rest of split `{split}`")));
            }
            Some(_) => {}
            None => {
                coverage.insert(split, tables);
            }
        }
    }

    let overall = |g: &BTreeMap<String, &TableReport>| -> Vec<f64> { g.values().map(|r| r.overall).collect() };
    let mut rows = Vec::new();
    for ((split, method, regime), g) in &groups {
        let shape: Vec<f64> = g.values().map(|r| r.shape).collect();
        let trend: Vec<f64> = g.values().filter_map(|r| r.trend).collect();
        let over = overall(g);
        let (shape_mean, shape_std) = mean_std(&shape);
        let (overall_mean, overall_std) = mean_std(&over);
        let (trend_mean, trend_std) = if trend.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(&trend);
            (Some(m), Some(s))
        };
        let pre = groups.get(&(split.clone(), method.clone(), Regime::PretrainedFinetuned));
        let scr = groups.get(&(split.clone(), method.clone(), Regime::Scratch));
        let p_value = match (pre, scr) {
            (Some(a), Some(b)) => Some(mann_whitney_u(&overall(a), &overall(b))?.p),
            _ => None,
        };
        rows.push(LeaderboardRow {
            split: split.clone(),
            method: method.clone(),
            regime: *regime,
            tables: g.len(),
            shape_mean,
            shape_std,
            trend_mean,
            trend_std,
            overall_mean,
            overall_std,
            p_value,
        });
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// CSV with [`LEADERBOARD_HEADER`] columns; missing values are empty cells.
pub fn leaderboard_csv(rows: &[LeaderboardRow]) -> String {
    let mut out = String::from(LEADERBOARD_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{},{},{:.6},{:.6},{}\n",
            csv_field(&r.split),
            csv_field(&r.method),
            r.regime,
            r.shape_mean,
            r.shape_std,
            opt(r.trend_mean),
            opt(r.trend_std),
            r.overall_mean,
            r.overall_std,
            opt(r.p_value)
        ));
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        String::from(s)
    }
}

/// Plain-text table: scores as `mean (std)`, one line per row.
pub fn leaderboard_text(rows: &[LeaderboardRow]) -> String {
    let cell = |m: Option<f64>, s: Option<f64>| match (m, s) {
        (Some(m), Some(s)) => format!("{m:.3} ({s:.3})"),
        _ => String::from("-"),
    };
    let mut out = format!("{:<10} {:<8} {:<21} {:<15} {:<15} {:<15} {}\n", "split", "method", "regime", "Shape", "Trends", "Overall", "p-value");
    for r in rows {
        out.push_str(&format!(
            "{:<10} {:<8} {:<21} {:<15} {:<15} {:<15} {}\n",
            r.split,
            r.method,
            r.regime.name(),
            cell(Some(r.shape_mean), Some(r.shape_std)),
            cell(r.trend_mean, r.trend_std),
            cell(Some(r.overall_mean), Some(r.overall_std)),
            r.p_value.map(|p| format!("{p:.3}")).unwrap_or_else(|| String::from("-"))
        ));
    }
    out
}
