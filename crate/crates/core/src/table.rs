//! In-memory tables, majority-parse typing and schema inference.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::patterns;

/// Fraction of non-null cells that must parse as finite numbers for a
/// column to be typed numerical.
pub const NUMERIC_PARSE_THRESHOLD: f64 = 0.95;
/// Median label length above which a column is treated as free text.
pub const LONG_TEXT_MEDIAN_LEN: usize = 50;
/// Fraction of non-null labels that must match a URL / path / phone shape
/// before the column is rejected for it.
pub const PATTERN_REJECT_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    LongText,
    Url,
    Path,
    Phone,
}

impl RejectReason {
    pub fn code(self) -> &'static str {
        match self {
            RejectReason::LongText => "long_text",
            RejectReason::Url => "url",
            RejectReason::Path => "path",
            RejectReason::Phone => "phone",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numerical,
    Categorical,
    Rejected(RejectReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    pub name: String,
    pub kind: ColumnKind,
    /// Distinct labels in first-appearance order. Empty for numerical columns.
    pub categories: Vec<String>,
    pub null_fraction: f64,
}

impl ColumnMeta {
    pub fn numerical(name: impl Into<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Numerical, categories: Vec::new(), null_fraction: 0.0 }
    }

    pub fn categorical(name: impl Into<String>, categories: Vec<String>) -> Self {
        Self { name: name.into(), kind: ColumnKind::Categorical, categories, null_fraction: 0.0 }
    }

    pub fn is_numerical(&self) -> bool {
        self.kind == ColumnKind::Numerical
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }
}

/// A single cell. Categorical cells index into their column's category list.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Null,
    Num(f64),
    Cat(u32),
}

impl Cell {
    pub fn is_null(&self) -> bool {
        matches!(self, Cell::Null)
    }

    pub fn as_num(&self) -> Option<f64> {
        match *self {
            Cell::Num(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_cat(&self) -> Option<usize> {
        match *self {
            Cell::Cat(k) => Some(k as usize),
            _ => None,
        }
    }
}

/// Column payload used to build tables programmatically.
#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<Option<String>>),
}

impl ColumnData {
    pub fn numeric(values: impl IntoIterator<Item = f64>) -> Self {
        ColumnData::Numeric(values.into_iter().map(Some).collect())
    }

    pub fn categorical<S: ToString>(labels: impl IntoIterator<Item = S>) -> Self {
        ColumnData::Categorical(labels.into_iter().map(|s| Some(s.to_string())).collect())
    }

    fn len(&self) -> usize {
        match self {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<ColumnMeta>,
    /// Row-major cells; every row has `columns.len()` entries.
    pub rows: Vec<Vec<Cell>>,
}

fn parse_finite(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

impl Table {
    /// Builds a table and checks every invariant.
    pub fn new(name: impl Into<String>, columns: Vec<ColumnMeta>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        let table = Self { name: name.into(), columns, rows };
        table.validate()?;
        Ok(table)
    }

    pub fn validate(&self) -> Result<()> {
        for col in &self.columns {
            if !(0.0..=1.0).contains(&col.null_fraction) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "column `{}` null fraction {} outside [0, 1]",
                    col.name, col.null_fraction
                )));
            }
            if col.is_numerical() && !col.categories.is_empty() {
                return Err(Error::InvalidArgument(alloc::format!("numerical column `{}` has categories", col.name)));
            }
            let mut seen = BTreeMap::new();
            for c in &col.categories {
                if seen.insert(c.as_str(), ()).is_some() {
                    return Err(Error::InvalidArgument(alloc::format!("duplicate category `{c}` in `{}`", col.name)));
                }
            }
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.columns.len() {
                return Err(Error::RaggedRows { row: r, expected: self.columns.len(), found: row.len() });
            }
            for (cell, col) in row.iter().zip(&self.columns) {
                let ok = match (*cell, col.kind) {
                    (Cell::Null, _) => true,
                    (Cell::Num(v), ColumnKind::Numerical) => v.is_finite(),
                    (Cell::Cat(k), ColumnKind::Categorical | ColumnKind::Rejected(_)) => (k as usize) < col.categories.len(),
                    _ => false,
                };
                if !ok {
                    return Err(Error::InvalidArgument(alloc::format!(
                        "row {r}: cell {cell:?} invalid for column `{}`",
                        col.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Types raw string cells by per-column majority parse: a column is
    /// numerical when at least 95% of its non-null cells parse as finite
    /// numbers (the stragglers become null), categorical otherwise. Empty
    /// strings are null.
    pub fn from_raw<H: AsRef<str>, S: AsRef<str>>(name: impl Into<String>, header: &[H], rows: &[Vec<S>]) -> Result<Self> {
        let width = header.len();
        if rows.is_empty() {
            return Err(Error::NoDataRows);
        }
        for (r, row) in rows.iter().enumerate() {
            if row.len() != width {
                return Err(Error::RaggedRows { row: r, expected: width, found: row.len() });
            }
        }
        let mut columns = Vec::with_capacity(width);
        let mut cells = alloc::vec![alloc::vec![Cell::Null; width]; rows.len()];
        for (j, head) in header.iter().enumerate() {
            let raw: Vec<&str> = rows.iter().map(|r| r[j].as_ref()).collect();
            let non_null = raw.iter().filter(|s| !s.is_empty()).count();
            let parsed = raw.iter().filter(|s| !s.is_empty() && parse_finite(s).is_some()).count();
            let numeric = non_null > 0 && parsed as f64 >= NUMERIC_PARSE_THRESHOLD * non_null as f64;
            let mut meta = if numeric {
                for (i, s) in raw.iter().enumerate() {
                    cells[i][j] = parse_finite(s).map_or(Cell::Null, Cell::Num);
                }
                ColumnMeta::numerical(head.as_ref())
            } else {
                let mut index: BTreeMap<&str, u32> = BTreeMap::new();
                let mut categories = Vec::new();
                for (i, s) in raw.iter().enumerate() {
                    if s.is_empty() {
                        continue;
                    }
                    let next = categories.len() as u32;
                    let k = *index.entry(s).or_insert_with(|| {
                        categories.push(s.to_string());
                        next
                    });
                    cells[i][j] = Cell::Cat(k);
                }
                ColumnMeta::categorical(head.as_ref(), categories)
            };
            meta.null_fraction = cells.iter().filter(|r| r[j].is_null()).count() as f64 / rows.len() as f64;
            columns.push(meta);
        }
        Ok(Self { name: name.into(), columns, rows: cells })
    }

    /// Builds a table from typed column vectors. Categories are enumerated
    /// in first-appearance order.
    pub fn from_columns(name: impl Into<String>, data: Vec<(String, ColumnData)>) -> Result<Self> {
        let n = data.first().map_or(0, |(_, c)| c.len());
        if let Some((col, d)) = data.iter().find(|(_, d)| d.len() != n) {
            return Err(Error::Shape(alloc::format!("column `{col}` has {} values, expected {n}", d.len())));
        }
        let mut columns = Vec::with_capacity(data.len());
        let mut rows = alloc::vec![Vec::with_capacity(data.len()); n];
        for (name, d) in data {
            match d {
                ColumnData::Numeric(vals) => {
                    for (row, v) in rows.iter_mut().zip(vals) {
                        row.push(v.map_or(Cell::Null, Cell::Num));
                    }
                    columns.push(ColumnMeta::numerical(name));
                }
                ColumnData::Categorical(labels) => {
                    let mut categories: Vec<String> = Vec::new();
                    for (row, l) in rows.iter_mut().zip(labels) {
                        let cell = match l {
                            None => Cell::Null,
                            Some(l) => {
                                let k = match categories.iter().position(|c| *c == l) {
                                    Some(k) => k,
                                    None => {
                                        categories.push(l);
                                        categories.len() - 1
                                    }
                                };
                                Cell::Cat(k as u32)
                            }
                        };
                        row.push(cell);
                    }
                    columns.push(ColumnMeta::categorical(name, categories));
                }
            }
        }
        let mut table = Self { name: name.into(), columns, rows };
        table.refresh_null_fractions();
        table.validate()?;
        Ok(table)
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn column_cells(&self, j: usize) -> impl Iterator<Item = Cell> + '_ {
        self.rows.iter().map(move |r| r[j])
    }

    /// Non-null values of a numerical column.
    pub fn numeric_values(&self, j: usize) -> Vec<f64> {
        self.column_cells(j).filter_map(|c| c.as_num()).collect()
    }

    /// Non-null category indices of a categorical column.
    pub fn category_codes(&self, j: usize) -> Vec<usize> {
        self.column_cells(j).filter_map(|c| c.as_cat()).collect()
    }

    /// Label of a categorical cell.
    pub fn label(&self, j: usize, cell: Cell) -> Option<&str> {
        cell.as_cat().and_then(|k| self.columns[j].categories.get(k)).map(String::as_str)
    }

    pub fn refresh_null_fractions(&mut self) {
        let n = self.rows.len();
        for j in 0..self.columns.len() {
            let nulls = self.rows.iter().filter(|r| r[j].is_null()).count();
            self.columns[j].null_fraction = if n == 0 { 0.0 } else { nulls as f64 / n as f64 };
        }
    }

    /// Keeps only the columns whose index satisfies `keep`.
    pub fn retain_columns(&mut self, mut keep: impl FnMut(usize) -> bool) {
        let mask: Vec<bool> = (0..self.columns.len()).map(&mut keep).collect();
        let mut it = mask.iter();
        self.columns.retain(|_| *it.next().unwrap());
        for row in &mut self.rows {
            let mut it = mask.iter();
            row.retain(|_| *it.next().unwrap());
        }
    }

    /// Copy of this table restricted to the given rows.
    pub fn select_rows(&self, rows: &[usize]) -> Table {
        Table {
            name: self.name.clone(),
            columns: self.columns.clone(),
            rows: rows.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    pub fn has_nulls(&self) -> bool {
        self.rows.iter().any(|r| r.iter().any(Cell::is_null))
    }
}

/// Assigns a [`ColumnKind`] to every column. Categorical columns whose
/// labels look like long free text, URLs, file paths or phone numbers are
/// marked rejected; everything else keeps its majority-parse type.
pub fn infer_schema(table: &Table) -> Table {
    let mut out = table.clone();
    for j in 0..out.columns.len() {
        if out.columns[j].kind == ColumnKind::Numerical {
            continue;
        }
        let labels: Vec<&str> = table.column_cells(j).filter_map(|c| table.label(j, c)).collect();
        out.columns[j].kind = match rejection(&labels) {
            Some(reason) => ColumnKind::Rejected(reason),
            None => ColumnKind::Categorical,
        };
    }
    out.refresh_null_fractions();
    out
}

fn rejection(labels: &[&str]) -> Option<RejectReason> {
    if labels.is_empty() {
        return None;
    }
    let mut lens: Vec<usize> = labels.iter().map(|l| l.chars().count()).collect();
    lens.sort_unstable();
    let mid = lens.len() / 2;
    let median = if lens.len() % 2 == 0 { (lens[mid - 1] + lens[mid]) as f64 / 2.0 } else { lens[mid] as f64 };
    if median > LONG_TEXT_MEDIAN_LEN as f64 {
        return Some(RejectReason::LongText);
    }
    let frac = |f: fn(&str) -> bool| labels.iter().filter(|l| f(l)).count() as f64 / labels.len() as f64;
    if frac(patterns::is_url) > PATTERN_REJECT_FRACTION {
        Some(RejectReason::Url)
    } else if frac(patterns::is_path) > PATTERN_REJECT_FRACTION {
        Some(RejectReason::Path)
    } else if frac(patterns::is_phone) > PATTERN_REJECT_FRACTION {
        Some(RejectReason::Phone)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn raw(header: &[&str], rows: &[&[&str]]) -> Result<Table> {
        let rows: Vec<Vec<&str>> = rows.iter().map(|r| r.to_vec()).collect();
        Table::from_raw("t", header, &rows)
    }

    #[test]
    fn majority_parse_types_columns() {
        let t = raw(&["a", "b"], &[&["1", "x"], &["2", "y"]]).unwrap();
        assert_eq!(t.n_rows(), 2);
        assert_eq!(t.columns[0].kind, ColumnKind::Numerical);
        assert_eq!(t.columns[1].kind, ColumnKind::Categorical);
        assert_eq!(t.columns[1].categories, vec!["x", "y"]);
    }

    #[test]
    fn empty_cell_is_null() {
        let t = raw(&["a", "b"], &[&["1", ""], &["", "y"]]).unwrap();
        assert_eq!(t.rows[0][1], Cell::Null);
        assert_eq!(t.rows[1][0], Cell::Null);
        assert_eq!(t.columns[0].null_fraction, 0.5);
    }

    #[test]
    fn ragged_rows_rejected() {
        let err = raw(&["a", "b"], &[&["1", "x"], &["2"]]).unwrap_err();
        assert!(matches!(err, Error::RaggedRows { row: 1, expected: 2, found: 1 }));
        assert_eq!(raw(&["a"], &[]).unwrap_err(), Error::NoDataRows);
    }

    #[test]
    fn stray_tokens_become_null_in_numeric_columns() {
        let mut rows: Vec<Vec<String>> = (0..40).map(|i| vec![i.to_string()]).collect();
        rows.push(vec!["n/a".to_string()]);
        let t = Table::from_raw("t", &["v"], &rows).unwrap();
        assert_eq!(t.columns[0].kind, ColumnKind::Numerical);
        assert_eq!(t.rows[40][0], Cell::Null);
        rows.extend((0..3).map(|_| vec!["?".to_string()]));
        let t = Table::from_raw("t", &["v"], &rows).unwrap();
        assert_eq!(t.columns[0].kind, ColumnKind::Categorical);
    }

    #[test]
    fn schema_examples() {
        let t = raw(&["g"], &[&["M"], &["F"], &["M"]]).unwrap();
        let s = infer_schema(&t);
        assert_eq!(s.columns[0].kind, ColumnKind::Categorical);
        assert_eq!(s.columns[0].categories, vec!["M", "F"]);

        let t = raw(&["u"], &[&["http://a.com/1"], &["https://b.org"], &["http://c.net"]]).unwrap();
        let s = infer_schema(&t);
        assert_eq!(s.columns[0].kind, ColumnKind::Rejected(RejectReason::Url));
        assert_eq!(RejectReason::Url.code(), "url");

        let t = raw(&["x"], &[&["1.5"], &["2.5"], &[""]]).unwrap();
        let s = infer_schema(&t);
        assert_eq!(s.columns[0].kind, ColumnKind::Numerical);
        assert!((s.columns[0].null_fraction - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn long_text_and_paths_rejected() {
        let long = "a".repeat(60);
        let t = raw(&["txt"], &[&[long.as_str()], &[long.as_str()]]).unwrap();
        assert_eq!(infer_schema(&t).columns[0].kind, ColumnKind::Rejected(RejectReason::LongText));
        let t = raw(&["p"], &[&["img/1.png"], &["img/2.png"]]).unwrap();
        assert_eq!(infer_schema(&t).columns[0].kind, ColumnKind::Rejected(RejectReason::Path));
        let t = raw(&["tel"], &[&["555-123-4567"], &["555-987-6543"]]).unwrap();
        assert_eq!(infer_schema(&t).columns[0].kind, ColumnKind::Rejected(RejectReason::Phone));
    }

    #[test]
    fn from_columns_checks_lengths() {
        let t = Table::from_columns(
            "t",
            vec![("a".into(), ColumnData::numeric([1.0, 2.0])), ("b".into(), ColumnData::categorical(["x", "x"]))],
        )
        .unwrap();
        assert_eq!(t.columns[1].categories, vec!["x"]);
        let bad = Table::from_columns(
            "t",
            vec![("a".into(), ColumnData::numeric([1.0])), ("b".into(), ColumnData::categorical(["x", "y"]))],
        );
        assert!(bad.is_err());
    }
}
