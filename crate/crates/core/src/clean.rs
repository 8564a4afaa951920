//! Automated cleaning: identity and timestamp removal, sparse categorical
//! pruning, null imputation and table-level rejection.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::patterns;
use crate::table::{Cell, ColumnKind, ColumnMeta, RejectReason, Table};

/// Fraction of non-null cells that must look like dates for a column to be
/// treated as a timestamp.
pub const TIMESTAMP_MATCH_FRACTION: f64 = 0.9;
pub const EPOCH_SECONDS_RANGE: (f64, f64) = (1e8, 2e10);
pub const MIN_KEPT_COLUMNS: usize = 2;
pub const MIN_KEPT_ROWS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CleaningConfig {
    pub category_uniqueness_max: f64,
    pub min_avg_category_freq: f64,
    pub max_null_fraction: f64,
    pub max_rejected_column_fraction: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self {
            category_uniqueness_max: 0.90,
            min_avg_category_freq: 0.03,
            max_null_fraction: 0.50,
            max_rejected_column_fraction: 0.90,
        }
    }
}

impl CleaningConfig {
    pub fn validate(&self) -> crate::Result<()> {
        for (name, v) in [
            ("category_uniqueness_max", self.category_uniqueness_max),
            ("min_avg_category_freq", self.min_avg_category_freq),
            ("max_null_fraction", self.max_null_fraction),
            ("max_rejected_column_fraction", self.max_rejected_column_fraction),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(crate::Error::InvalidArgument(alloc::format!("{name} = {v} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    Rejected { code: RejectReason },
    Identity,
    Timestamp,
    SparseCategories,
    LowCategoryFrequency,
    TooManyNulls,
    AllNull,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum ColumnAction {
    Kept,
    Dropped { why: DropReason },
    Imputed { count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    TooManyColumnsDropped,
    TooFewColumns,
    TooFewRows,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum TableVerdict {
    Kept,
    Discarded { why: DiscardReason },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnReport {
    pub column: String,
    pub action: ColumnAction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub table: String,
    /// One entry per original column, in original order.
    pub columns: Vec<ColumnReport>,
    pub verdict: TableVerdict,
}

impl CleaningReport {
    pub fn dropped(&self) -> usize {
        self.columns.iter().filter(|c| matches!(c.action, ColumnAction::Dropped { .. })).count()
    }

    pub fn is_fixpoint(&self) -> bool {
        self.verdict == TableVerdict::Kept && self.columns.iter().all(|c| c.action == ColumnAction::Kept)
    }
}

/// True when every non-null value is distinct and the column either has an
/// id-like name (`/(^|_)id$/i`) or holds a contiguous run of integers.
pub fn detect_identity(meta: &ColumnMeta, cells: &[Cell]) -> bool {
    let values: Vec<Cell> = cells.iter().copied().filter(|c| !c.is_null()).collect();
    if values.is_empty() {
        return false;
    }
    match meta.kind {
        ColumnKind::Numerical => {
            let mut nums: Vec<f64> = values.iter().filter_map(Cell::as_num).collect();
            nums.sort_by(f64::total_cmp);
            if nums.windows(2).any(|w| w[0] == w[1]) {
                return false;
            }
            if patterns::is_id_name(&meta.name) {
                return true;
            }
            let integral = nums.iter().all(|&v| libm::trunc(v) == v);
            integral && nums.len() > 1 && nums[nums.len() - 1] - nums[0] + 1.0 == nums.len() as f64
        }
        ColumnKind::Categorical | ColumnKind::Rejected(_) => {
            let distinct: BTreeSet<usize> = values.iter().filter_map(Cell::as_cat).collect();
            distinct.len() == values.len() && patterns::is_id_name(&meta.name)
        }
    }
}

/// True when at least 90% of non-null cells are dates / datetimes, or the
/// column has a time-like name and holds epoch seconds.
pub fn detect_timestamp(meta: &ColumnMeta, cells: &[Cell]) -> bool {
    let non_null: Vec<Cell> = cells.iter().copied().filter(|c| !c.is_null()).collect();
    if non_null.is_empty() {
        return false;
    }
    let hits = match meta.kind {
        ColumnKind::Numerical => {
            if !patterns::is_time_name(&meta.name) {
                return false;
            }
            let (lo, hi) = EPOCH_SECONDS_RANGE;
            non_null.iter().filter_map(Cell::as_num).filter(|v| (lo..=hi).contains(v)).count()
        }
        _ => non_null
            .iter()
            .filter_map(|c| c.as_cat().and_then(|k| meta.categories.get(k)))
            .filter(|l| patterns::is_date_like(l))
            .count(),
    };
    hits as f64 >= TIMESTAMP_MATCH_FRACTION * non_null.len() as f64
}

/// Keep / drop decision for a categorical column. Returns the reason when
/// the column should be dropped.
pub fn categorical_sparsity_check(meta: &ColumnMeta, cells: &[Cell], config: &CleaningConfig) -> Option<DropReason> {
    let codes: Vec<usize> = cells.iter().filter_map(Cell::as_cat).collect();
    if codes.is_empty() {
        return None;
    }
    let mut counts = vec![0usize; meta.categories.len()];
    for &k in &codes {
        counts[k] += 1;
    }
    let present: Vec<usize> = counts.into_iter().filter(|&c| c > 0).collect();
    let non_null = codes.len() as f64;
    if present.len() as f64 / non_null > config.category_uniqueness_max {
        return Some(DropReason::SparseCategories);
    }
    let avg_freq = present.iter().map(|&c| c as f64 / non_null).sum::<f64>() / present.len() as f64;
    if avg_freq < config.min_avg_category_freq {
        return Some(DropReason::LowCategoryFrequency);
    }
    None
}

pub fn categorical_keep(meta: &ColumnMeta, cells: &[Cell], config: &CleaningConfig) -> bool {
    categorical_sparsity_check(meta, cells, config).is_none()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Imputation {
    /// Column with nulls filled in, and how many were filled.
    Filled(Vec<Cell>, usize),
    Dropped(DropReason),
}

/// Mean imputation for numerical columns, modal imputation (ties to the
/// earliest category) for categorical ones. Columns with more than
/// `max_null_fraction` nulls are dropped.
pub fn impute_column(meta: &ColumnMeta, cells: &[Cell], config: &CleaningConfig) -> Imputation {
    let nulls = cells.iter().filter(|c| c.is_null()).count();
    if nulls == cells.len() {
        return Imputation::Dropped(DropReason::AllNull);
    }
    if nulls as f64 / cells.len() as f64 > config.max_null_fraction {
        return Imputation::Dropped(DropReason::TooManyNulls);
    }
    if nulls == 0 {
        return Imputation::Filled(cells.to_vec(), 0);
    }
    let fill = match meta.kind {
        ColumnKind::Numerical => {
            let vals: Vec<f64> = cells.iter().filter_map(Cell::as_num).collect();
            Cell::Num(vals.iter().sum::<f64>() / vals.len() as f64)
        }
        _ => {
            let mut counts = vec![0usize; meta.categories.len()];
            for k in cells.iter().filter_map(Cell::as_cat) {
                counts[k] += 1;
            }
            let mut best = 0;
            for (k, &c) in counts.iter().enumerate() {
                if c > counts[best] {
                    best = k;
                }
            }
            Cell::Cat(best as u32)
        }
    };
    let filled = cells.iter().map(|&c| if c.is_null() { fill } else { c }).collect();
    Imputation::Filled(filled, nulls)
}

/// Runs the cleaning rules in fixed order (schema rejection, identity,
/// timestamp, categorical sparsity, imputation) and decides whether the
/// table survives. The input must have gone through
/// [`infer_schema`](crate::table::infer_schema).
pub fn clean_table(table: &Table, config: &CleaningConfig) -> (Option<Table>, CleaningReport) {
    let n_cols = table.n_cols();
    let mut actions = Vec::with_capacity(n_cols);
    let mut new_cells: Vec<Option<Vec<Cell>>> = Vec::with_capacity(n_cols);
    for (j, meta) in table.columns.iter().enumerate() {
        let cells: Vec<Cell> = table.column_cells(j).collect();
        let drop = if let ColumnKind::Rejected(code) = meta.kind {
            Some(DropReason::Rejected { code })
        } else if detect_identity(meta, &cells) {
            Some(DropReason::Identity)
        } else if detect_timestamp(meta, &cells) {
            Some(DropReason::Timestamp)
        } else if meta.kind == ColumnKind::Categorical {
            categorical_sparsity_check(meta, &cells, config)
        } else {
            None
        };
        let (action, kept) = match drop {
            Some(why) => (ColumnAction::Dropped { why }, None),
            None => match impute_column(meta, &cells, config) {
                Imputation::Dropped(why) => (ColumnAction::Dropped { why }, None),
                Imputation::Filled(c, 0) => (ColumnAction::Kept, Some(c)),
                Imputation::Filled(c, count) => (ColumnAction::Imputed { count }, Some(c)),
            },
        };
        actions.push(ColumnReport { column: meta.name.clone(), action });
        new_cells.push(kept);
    }

    let dropped = new_cells.iter().filter(|c| c.is_none()).count();
    let remaining = n_cols - dropped;
    let verdict = if n_cols > 0 && dropped as f64 / n_cols as f64 > config.max_rejected_column_fraction {
        TableVerdict::Discarded { why: DiscardReason::TooManyColumnsDropped }
    } else if remaining < MIN_KEPT_COLUMNS {
        TableVerdict::Discarded { why: DiscardReason::TooFewColumns }
    } else if table.n_rows() < MIN_KEPT_ROWS {
        TableVerdict::Discarded { why: DiscardReason::TooFewRows }
    } else {
        TableVerdict::Kept
    };
    let report = CleaningReport { table: table.name.clone(), columns: actions, verdict };
    if verdict != TableVerdict::Kept {
        return (None, report);
    }

    let mut columns = Vec::with_capacity(remaining);
    let mut rows = vec![Vec::with_capacity(remaining); table.n_rows()];
    for (meta, cells) in table.columns.iter().zip(new_cells) {
        let Some(cells) = cells else { continue };
        let mut meta = meta.clone();
        meta.null_fraction = 0.0;
        columns.push(meta);
        for (row, c) in rows.iter_mut().zip(cells) {
            row.push(c);
        }
    }
    (Some(Table { name: table.name.clone(), columns, rows }), report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{infer_schema, ColumnData};
    use alloc::string::ToString;

    fn num(name: &str, vals: &[f64]) -> (ColumnMeta, Vec<Cell>) {
        (ColumnMeta::numerical(name), vals.iter().map(|&v| Cell::Num(v)).collect())
    }

    fn cat(name: &str, labels: &[&str]) -> (ColumnMeta, Vec<Cell>) {
        let t = Table::from_columns("t", vec![(name.to_string(), ColumnData::categorical(labels.iter().copied()))]).unwrap();
        (t.columns[0].clone(), t.column_cells(0).collect())
    }

    #[test]
    fn identity_rules() {
        let (m, c) = num("user_id", &[1.0, 2.0, 3.0, 4.0]);
        assert!(detect_identity(&m, &c));
        let (m, c) = num("age", &[21.0, 21.0, 35.0]);
        assert!(!detect_identity(&m, &c));
        let (m, c) = num("code", &[7.0, 3.0, 9.0, 1.0]);
        assert!(!detect_identity(&m, &c));
        let (m, c) = num("row", &[5.0, 3.0, 4.0, 6.0]);
        assert!(detect_identity(&m, &c));
        let (m, c) = cat("ID", &["a1", "b7", "c3"]);
        assert!(detect_identity(&m, &c));
    }

    #[test]
    fn timestamp_rules() {
        let (m, c) = cat("d", &["2021-03-01", "2021-03-02"]);
        assert!(detect_timestamp(&m, &c));
        let (m, c) = cat("d", &["red", "blue"]);
        assert!(!detect_timestamp(&m, &c));
        let (m, c) = num("timestamp", &[1.6e9, 1.6e9 + 17.0, 1.6e9 + 3600.0]);
        assert!(detect_timestamp(&m, &c));
        let (m, c) = num("price", &[1.6e9, 1.6e9 + 17.0]);
        assert!(!detect_timestamp(&m, &c));
    }

    #[test]
    fn sparsity_rules() {
        let cfg = CleaningConfig::default();
        let labels: Vec<String> = (0..100).map(|i| alloc::format!("c{}", i.min(94))).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let (m, c) = cat("x", &refs);
        assert_eq!(categorical_sparsity_check(&m, &c, &cfg), Some(DropReason::SparseCategories));

        let refs: Vec<&str> = (0..100).map(|i| if i % 2 == 0 { "a" } else { "b" }).collect();
        let (m, c) = cat("x", &refs);
        assert!(categorical_keep(&m, &c, &cfg));

        let labels: Vec<String> = (0..100).map(|i| alloc::format!("c{}", i % 50)).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let (m, c) = cat("x", &refs);
        assert_eq!(categorical_sparsity_check(&m, &c, &cfg), Some(DropReason::LowCategoryFrequency));
    }

    #[test]
    fn imputation_rules() {
        let cfg = CleaningConfig::default();
        let m = ColumnMeta::numerical("x");
        let cells = [Cell::Num(1.0), Cell::Num(2.0), Cell::Null, Cell::Num(3.0)];
        assert_eq!(
            impute_column(&m, &cells, &cfg),
            Imputation::Filled(vec![Cell::Num(1.0), Cell::Num(2.0), Cell::Num(2.0), Cell::Num(3.0)], 1)
        );
        let m = ColumnMeta::categorical("c", vec!["A".into(), "B".into()]);
        let cells = [Cell::Cat(0), Cell::Cat(0), Cell::Cat(1), Cell::Null];
        assert_eq!(
            impute_column(&m, &cells, &cfg),
            Imputation::Filled(vec![Cell::Cat(0), Cell::Cat(0), Cell::Cat(1), Cell::Cat(0)], 1)
        );
        let mut cells = vec![Cell::Null; 6];
        cells.extend([Cell::Num(1.0); 4]);
        assert_eq!(impute_column(&ColumnMeta::numerical("x"), &cells, &cfg), Imputation::Dropped(DropReason::TooManyNulls));
        assert_eq!(impute_column(&ColumnMeta::numerical("x"), &[Cell::Null; 3], &cfg), Imputation::Dropped(DropReason::AllNull));
        // Ties go to the earliest category.
        let m = ColumnMeta::categorical("c", vec!["A".into(), "B".into()]);
        let cells = [Cell::Cat(1), Cell::Cat(0), Cell::Null];
        assert_eq!(impute_column(&m, &cells, &cfg), Imputation::Filled(vec![Cell::Cat(1), Cell::Cat(0), Cell::Cat(0)], 1));
    }

    fn sample_table() -> Table {
        let n = 12;
        Table::from_columns(
            "shop",
            vec![
                ("id".into(), ColumnData::numeric((0..n).map(|i| i as f64))),
                ("date".into(), ColumnData::categorical((0..n).map(|i| alloc::format!("2021-01-{:02}", i + 1)))),
                ("price".into(), ColumnData::numeric((0..n).map(|i| (i % 5) as f64 * 1.5))),
                ("color".into(), ColumnData::categorical((0..n).map(|i| ["red", "blue", "green"][i % 3]))),
            ],
        )
        .unwrap()
    }

    #[test]
    fn rule_composition() {
        let t = infer_schema(&sample_table());
        let (cleaned, report) = clean_table(&t, &CleaningConfig::default());
        let cleaned = cleaned.unwrap();
        let names: Vec<&str> = cleaned.columns.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names, ["price", "color"]);
        assert_eq!(report.columns[0].action, ColumnAction::Dropped { why: DropReason::Identity });
        assert_eq!(report.columns[1].action, ColumnAction::Dropped { why: DropReason::Timestamp });

        let (again, report2) = clean_table(&infer_schema(&cleaned), &CleaningConfig::default());
        assert_eq!(again.unwrap(), cleaned);
        assert!(report2.is_fixpoint());
    }

    #[test]
    fn all_dropped_table_discarded() {
        let n = 12;
        let cols = (0..10)
            .map(|j| (alloc::format!("c{j}_id"), ColumnData::numeric((0..n).map(|i| i as f64))))
            .collect();
        let t = infer_schema(&Table::from_columns("ids", cols).unwrap());
        let (out, report) = clean_table(&t, &CleaningConfig::default());
        assert!(out.is_none());
        assert_eq!(report.verdict, TableVerdict::Discarded { why: DiscardReason::TooManyColumnsDropped });
        assert_eq!(report.dropped(), 10);
    }
}
