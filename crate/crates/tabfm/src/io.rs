//! CSV tables with schema sidecars, JSON helpers and provenance files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tabfm_core::table::infer_schema;
use tabfm_core::{Cell, ColumnKind, ColumnMeta, Table};

use crate::error::{CliError, Result};

const SCHEMA_SUFFIX: &str = ".schema.json";
const PROVENANCE_SUFFIX: &str = ".provenance.json";

/// `<dir>/<name>.schema.json` next to `<dir>/<name>.csv`.
pub fn schema_path(csv: &Path) -> PathBuf {
    csv.with_extension("schema.json")
}

pub fn table_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_records(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let csv_err = |source| CliError::Csv { path: path.to_path_buf(), source };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        rows.push(rec.map_err(csv_err)?.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

/// Reads a CSV as a typed table. A schema sidecar, when present, fixes the
/// column types and category order; otherwise types come from the cells.
pub fn read_table(path: &Path) -> Result<Table> {
    let sidecar = schema_path(path);
    let schema: Option<Vec<ColumnMeta>> = if sidecar.exists() { Some(read_json(&sidecar)?) } else { None };
    read_table_with(path, schema.as_deref())
}

/// Reads a CSV against a known schema. Unknown labels extend the category
/// list and unparseable numbers become nulls.
pub fn read_table_with(path: &Path, schema: Option<&[ColumnMeta]>) -> Result<Table> {
    let (header, rows) = read_records(path)?;
    let name = table_name(path);
    let Some(schema) = schema else {
        return Ok(Table::from_raw(name, &header, &rows)?);
    };
    let names: Vec<&str> = schema.iter().map(|c| c.name.as_str()).collect();
    if header != names {
        return Err(CliError::Data(format!("{}: header {header:?} does not match schema {names:?}", path.display())));
    }
    let mut columns = schema.to_vec();
    let mut cells = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(CliError::Data(format!("{}: row {r} has {} fields, expected {}", path.display(), row.len(), columns.len())));
        }
        let mut out = Vec::with_capacity(row.len());
        for (meta, s) in columns.iter_mut().zip(row) {
            out.push(if s.is_empty() {
                Cell::Null
            } else if meta.kind == ColumnKind::Numerical {
                s.trim().parse::<f64>().ok().filter(|v| v.is_finite()).map_or(Cell::Null, Cell::Num)
            } else {
                let k = meta.category_index(s).unwrap_or_else(|| {
                    meta.categories.push(s.clone());
                    meta.categories.len() - 1
                });
                Cell::Cat(k as u32)
            });
        }
        cells.push(out);
    }
    let mut table = Table::new(name, columns, cells)?;
    table.refresh_null_fractions();
    Ok(table)
}

/// Reads a CSV and runs schema inference over it.
pub fn ingest(path: &Path) -> Result<Table> {
    Ok(infer_schema(&read_table(path)?))
}

/// CSV text of a table: header, then one line per row with labels for
/// categorical cells and empty fields for nulls.
pub fn table_csv(table: &Table) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<&str> = table.columns.iter().map(|c| c.name.as_str()).collect();
    let csv_err = |source| CliError::Csv { path: PathBuf::from(&table.name), source };
    w.write_record(&header).map_err(csv_err)?;
    for row in &table.rows {
        let fields: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(j, &c)| match c {
                Cell::Null => String::new(),
                Cell::Num(v) => v.to_string(),
                c => table.label(j, c).unwrap_or_default().to_string(),
            })
            .collect();
        w.write_record(&fields).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

/// Writes `<path>` and its schema sidecar.
pub fn write_table(path: &Path, table: &Table) -> Result<()> {
    write_bytes(path, &table_csv(table)?)?;
    write_json(&schema_path(path), &table.columns)
}

/// CSV files in a directory, sorted by name.
pub fn csv_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(CliError::io(dir))? {
        let path = entry.map_err(CliError::io(dir))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(parent))?;
    }
    fs::write(path, bytes).map_err(CliError::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(CliError::io(path))?;
    serde_json::from_str(&text).map_err(CliError::json(path))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::json(path))?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Name → vector map, used for table and column embeddings.
pub fn read_embeddings(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    read_json(path)
}

/// Where an output came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputProvenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
}

/// `<file>.provenance.json` for outputs that cannot carry a header.
pub fn provenance_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(PROVENANCE_SUFFIX);
    PathBuf::from(s)
}

pub fn write_provenance(path: &Path, prov: &OutputProvenance) -> Result<()> {
    write_json(&provenance_path(path), prov)
}

/// True for the sidecars this module writes, which are not tables.
pub fn is_sidecar(path: &Path) -> bool {
    let s = path.to_string_lossy();
    s.ends_with(SCHEMA_SUFFIX) || s.ends_with(PROVENANCE_SUFFIX)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_keeps_schema() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let header = ["x", "c"];
        let rows = vec![vec!["0.1", "7"], vec!["", "a"], vec!["1e300", "7"], vec!["-3", ""]];
        let t = Table::from_raw("t", &header, &rows).unwrap();
        write_table(&path, &t).unwrap();
        let back = read_table(&path).unwrap();
        assert_eq!(back, t);
        assert_eq!(table_csv(&back).unwrap(), fs::read(&path).unwrap());
    }

    #[test]
    fn schema_fixes_types_and_extends_labels() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        write_bytes(&path, b"x,c\n1,b\nzz,q\n").unwrap();
        let schema = vec![ColumnMeta::numerical("x"), ColumnMeta::categorical("c", vec!["a".into(), "b".into()])];
        let t = read_table_with(&path, Some(&schema)).unwrap();
        assert_eq!(t.rows[0], [Cell::Num(1.0), Cell::Cat(1)]);
        assert_eq!(t.rows[1], [Cell::Null, Cell::Cat(2)]);
        assert_eq!(t.columns[1].categories, ["a", "b", "q"]);
        let bad = vec![ColumnMeta::numerical("y"), ColumnMeta::numerical("c")];
        assert!(read_table_with(&path, Some(&bad)).is_err());
    }

    #[test]
    fn sidecars_are_recognised() {
        assert!(is_sidecar(Path::new("a/t.schema.json")));
        assert!(is_sidecar(&provenance_path(Path::new("a/t.csv"))));
        assert!(!is_sidecar(Path::new("a/t.csv")));
        assert_eq!(schema_path(Path::new("a/t.csv")), Path::new("a/t.schema.json"));
    }
}
