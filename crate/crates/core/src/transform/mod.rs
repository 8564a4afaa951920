//! Mode-specific normalization of numerical columns, one-hot encoding of
//! categorical ones, and the text serialization used by GReaT.

pub mod gmm;
pub mod text;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::table::{Cell, ColumnKind, ColumnMeta, Table};

pub use gmm::{fit_gmm, mode_responsibilities, GmmParams, DEFAULT_MODES};
pub use text::{parse_row_text, serialize_row_text, ParseFailure};

/// Mode-specific encoding of one value: the sampled mode `k*` (index among
/// active modes) and the normalized offset α within it.
pub fn encode_numeric<R: Rng + ?Sized>(params: &GmmParams, c: f64, rng: &mut R) -> Result<(f64, Vec<f64>)> {
    let (alpha, mode) = encode_numeric_index(params, c, rng)?;
    let mut beta = vec![0.0; params.n_active()];
    beta[mode] = 1.0;
    Ok((alpha, beta))
}

fn encode_numeric_index<R: Rng + ?Sized>(params: &GmmParams, c: f64, rng: &mut R) -> Result<(f64, usize)> {
    if !c.is_finite() {
        return Err(Error::NonFinite("numeric cell"));
    }
    let rho = mode_responsibilities(params, c);
    let mode = if rho.len() == 1 { 0 } else { rng::weighted_index(rng, &rho) };
    let k = params.active_modes()[mode];
    let alpha = ((c - params.means[k]) / (4.0 * params.stds[k])).clamp(-1.0, 1.0);
    Ok((alpha, mode))
}

fn one_hot_index(v: &[f64]) -> Option<usize> {
    let mut hot = None;
    for (i, &x) in v.iter().enumerate() {
        if x == 1.0 {
            if hot.is_some() {
                return None;
            }
            hot = Some(i);
        } else if x != 0.0 {
            return None;
        }
    }
    hot
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn decode_alpha(params: &GmmParams, alpha: f64, mode: usize) -> f64 {
    let k = params.active_modes()[mode];
    alpha * 4.0 * params.stds[k] + params.means[k]
}

pub fn decode_numeric(params: &GmmParams, alpha: f64, beta: &[f64]) -> Result<f64> {
    if beta.len() != params.n_active() {
        return Err(Error::Shape(format!("mode vector of width {} for {} active modes", beta.len(), params.n_active())));
    }
    let mode = one_hot_index(beta).ok_or(Error::NotOneHot)?;
    Ok(decode_alpha(params, alpha, mode))
}

pub fn encode_categorical(order: &[String], label: &str) -> Result<Vec<f64>> {
    if order.is_empty() {
        return Err(Error::EmptyInput("category order"));
    }
    let k = order.iter().position(|c| c == label).ok_or_else(|| Error::UnknownLabel(label.into()))?;
    let mut v = vec![0.0; order.len()];
    v[k] = 1.0;
    Ok(v)
}

pub fn decode_categorical<'a>(order: &'a [String], v: &[f64]) -> Result<&'a str> {
    if order.is_empty() {
        return Err(Error::EmptyInput("category order"));
    }
    if v.len() != order.len() {
        return Err(Error::Shape(format!("vector of width {} for {} categories", v.len(), order.len())));
    }
    Ok(&order[argmax(v)])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub width: usize,
}

impl Span {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.start..self.start + self.width
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnCodec {
    Numeric { gmm: GmmParams },
    Categorical { categories: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransform {
    pub name: String,
    /// Position of the column in the source schema.
    pub source: usize,
    pub codec: ColumnCodec,
    pub span: Span,
}

/// What a contiguous slice of the encoded row holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockKind {
    /// Normalized offset α (width 1).
    Alpha,
    /// One-hot mode indicator β.
    Mode,
    /// One-hot category indicator d.
    Category,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Block {
    pub kind: BlockKind,
    pub span: Span,
    /// Index into [`ColumnTransformer::columns`].
    pub column: usize,
}

/// Fitted per-column encoders. Numerical columns come first, then
/// categorical ones, each group in schema order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnTransformer {
    pub schema: Vec<ColumnMeta>,
    pub columns: Vec<ColumnTransform>,
    pub width: usize,
}

impl ColumnTransformer {
    /// Fits one mixture per numerical column (at most `modes` modes) and
    /// records the category order of categorical ones.
    pub fn fit(table: &Table, modes: usize, seed: u64) -> Result<Self> {
        let mut order: Vec<usize> = (0..table.n_cols()).filter(|&j| table.columns[j].is_numerical()).collect();
        order.extend((0..table.n_cols()).filter(|&j| table.columns[j].is_categorical()));
        if order.len() != table.n_cols() {
            return Err(Error::InvalidArgument("table still has rejected columns".into()));
        }
        let gmm_root = rng::derive_seed(seed, "gmm");
        let mut columns = Vec::with_capacity(order.len());
        let mut start = 0;
        for j in order {
            let meta = &table.columns[j];
            let (codec, width) = match meta.kind {
                ColumnKind::Numerical => {
                    let values = table.numeric_values(j);
                    let gmm = fit_gmm(&values, modes, rng::derive_seed(gmm_root, &meta.name))?;
                    let w = 1 + gmm.n_active();
                    (ColumnCodec::Numeric { gmm }, w)
                }
                _ => {
                    if meta.categories.is_empty() {
                        return Err(Error::EmptyInput("category order"));
                    }
                    (ColumnCodec::Categorical { categories: meta.categories.clone() }, meta.categories.len())
                }
            };
            columns.push(ColumnTransform { name: meta.name.clone(), source: j, codec, span: Span { start, width } });
            start += width;
        }
        let mut schema = table.columns.clone();
        for m in &mut schema {
            m.null_fraction = 0.0;
        }
        Ok(Self { schema, columns, width: start })
    }

    pub fn blocks(&self) -> Vec<Block> {
        let mut out = Vec::new();
        for (c, col) in self.columns.iter().enumerate() {
            match &col.codec {
                ColumnCodec::Numeric { .. } => {
                    out.push(Block { kind: BlockKind::Alpha, span: Span { start: col.span.start, width: 1 }, column: c });
                    out.push(Block {
                        kind: BlockKind::Mode,
                        span: Span { start: col.span.start + 1, width: col.span.width - 1 },
                        column: c,
                    });
                }
                ColumnCodec::Categorical { .. } => out.push(Block { kind: BlockKind::Category, span: col.span, column: c }),
            }
        }
        out
    }

    pub fn numeric_columns(&self) -> impl Iterator<Item = &ColumnTransform> {
        self.columns.iter().filter(|c| matches!(c.codec, ColumnCodec::Numeric { .. }))
    }

    pub fn categorical_columns(&self) -> impl Iterator<Item = &ColumnTransform> {
        self.columns.iter().filter(|c| matches!(c.codec, ColumnCodec::Categorical { .. }))
    }

    /// Checks that `table` has the schema this transformer was fitted on
    /// (same column names and kinds, in order).
    pub fn check_schema(&self, table: &Table) -> Result<()> {
        if table.n_cols() != self.schema.len() {
            return Err(Error::Shape(format!("table has {} columns, transformer {}", table.n_cols(), self.schema.len())));
        }
        for (a, b) in table.columns.iter().zip(&self.schema) {
            if a.name != b.name || a.kind != b.kind {
                return Err(Error::Incompatible(format!("column `{}` does not match `{}`", a.name, b.name)));
            }
        }
        Ok(())
    }

    pub fn encode_table<R: Rng + ?Sized>(&self, table: &Table, rng: &mut R) -> Result<TransformedMatrix> {
        self.check_schema(table)?;
        // Map the table's category codes onto the fitted order.
        let remap: Vec<Vec<usize>> = self
            .columns
            .iter()
            .map(|col| match &col.codec {
                ColumnCodec::Categorical { categories } => table.columns[col.source]
                    .categories
                    .iter()
                    .map(|l| categories.iter().position(|c| c == l).ok_or_else(|| Error::UnknownLabel(l.clone())))
                    .collect::<Result<Vec<_>>>(),
                ColumnCodec::Numeric { .. } => Ok(Vec::new()),
            })
            .collect::<Result<_>>()?;
        let n = table.n_rows();
        let mut data = vec![0.0; n * self.width];
        for (i, row) in table.rows.iter().enumerate() {
            let out = &mut data[i * self.width..(i + 1) * self.width];
            for (c, col) in self.columns.iter().enumerate() {
                let cell = row[col.source];
                match &col.codec {
                    ColumnCodec::Numeric { gmm } => {
                        let v = cell.as_num().ok_or(Error::NonFinite("null numeric cell"))?;
                        let (alpha, mode) = encode_numeric_index(gmm, v, rng)?;
                        out[col.span.start] = alpha;
                        out[col.span.start + 1 + mode] = 1.0;
                    }
                    ColumnCodec::Categorical { .. } => {
                        let k = cell.as_cat().ok_or_else(|| Error::UnknownLabel("<null>".into()))?;
                        let slot = *remap[c].get(k).ok_or_else(|| Error::UnknownLabel(format!("code {k}")))?;
                        out[col.span.start + slot] = 1.0;
                    }
                }
            }
        }
        Ok(TransformedMatrix { n_rows: n, width: self.width, data })
    }

    /// Inverts the encoding. Mode and category blocks are read by argmax so
    /// relaxed model outputs decode as well as exact one-hots.
    pub fn decode_table(&self, name: &str, matrix: &TransformedMatrix) -> Result<Table> {
        if matrix.width != self.width {
            return Err(Error::Shape(format!("matrix width {} != encoded width {}", matrix.width, self.width)));
        }
        let mut rows = vec![vec![Cell::Null; self.schema.len()]; matrix.n_rows];
        for (i, row) in rows.iter_mut().enumerate() {
            let r = matrix.row(i);
            for col in &self.columns {
                let s = &r[col.span.range()];
                row[col.source] = match &col.codec {
                    ColumnCodec::Numeric { gmm } => Cell::Num(decode_alpha(gmm, s[0], argmax(&s[1..]))),
                    ColumnCodec::Categorical { .. } => Cell::Cat(argmax(s) as u32),
                };
            }
        }
        let mut columns = self.schema.clone();
        for col in &self.columns {
            if let ColumnCodec::Categorical { categories } = &col.codec {
                columns[col.source].categories = categories.clone();
            }
        }
        Table::new(name, columns, rows)
    }
}

/// Encoded rows, row-major, `n_rows × width`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedMatrix {
    pub n_rows: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl TransformedMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ColumnData;

    fn single(mean: f64, std: f64) -> GmmParams {
        GmmParams { weights: vec![1.0], means: vec![mean], stds: vec![std], active: vec![true] }
    }

    #[test]
    fn numeric_codec() {
        let mut r = rng::seeded(0);
        let p = single(0.0, 1.0);
        assert_eq!(encode_numeric(&p, 0.0, &mut r).unwrap(), (0.0, vec![1.0]));
        assert_eq!(encode_numeric(&p, 2.0, &mut r).unwrap().0, 0.5);
        assert_eq!(encode_numeric(&p, 100.0, &mut r).unwrap().0, 1.0);
        assert!(encode_numeric(&p, f64::NAN, &mut r).is_err());

        let p = single(10.0, 2.0);
        assert_eq!(decode_numeric(&p, 0.5, &[1.0]).unwrap(), 14.0);
        assert_eq!(decode_numeric(&p, 0.0, &[1.0]).unwrap(), 10.0);
        assert_eq!(decode_numeric(&p, 0.0, &[0.7]), Err(Error::NotOneHot));
        let (a, b) = encode_numeric(&p, 11.3, &mut r).unwrap();
        assert!((decode_numeric(&p, a, &b).unwrap() - 11.3).abs() < 1e-12);
    }

    #[test]
    fn categorical_codec() {
        let mf: Vec<String> = ["M", "F"].iter().map(|s| String::from(*s)).collect();
        assert_eq!(encode_categorical(&mf, "F").unwrap(), vec![0.0, 1.0]);
        assert!(encode_categorical(&mf, "X").is_err());
        assert!(encode_categorical(&[], "X").is_err());
        let abc: Vec<String> = ["a", "b", "c"].iter().map(|s| String::from(*s)).collect();
        assert_eq!(decode_categorical(&abc, &[0.2, 0.9, 0.1]).unwrap(), "b");
        assert_eq!(decode_categorical(&abc, &[0.5, 0.5, 0.1]).unwrap(), "a");
        for l in &abc {
            assert_eq!(decode_categorical(&abc, &encode_categorical(&abc, l).unwrap()).unwrap(), l);
        }
    }

    fn mixed_table() -> Table {
        Table::from_columns(
            "mixed",
            vec![
                ("color".into(), ColumnData::categorical((0..40).map(|i| ["r", "g", "b", "y"][i % 4]))),
                ("x".into(), ColumnData::numeric((0..40).map(|i| if i % 2 == 0 { i as f64 * 0.1 } else { 50.0 + i as f64 }))),
                ("y".into(), ColumnData::numeric((0..40).map(|i| (i * 7 % 13) as f64))),
            ],
        )
        .unwrap()
    }

    #[test]
    fn spans_numeric_first_and_round_trip() {
        let t = mixed_table();
        let tf = ColumnTransformer::fit(&t, 4, 1).unwrap();
        assert_eq!(tf.columns.iter().map(|c| c.name.as_str()).collect::<Vec<_>>(), ["x", "y", "color"]);
        let expected: usize = tf.columns.iter().map(|c| c.span.width).sum();
        assert_eq!(tf.width, expected);
        let mut next = 0;
        for c in &tf.columns {
            assert_eq!(c.span.start, next);
            next += c.span.width;
        }
        let mut r = rng::seeded(4);
        let m = tf.encode_table(&t, &mut r).unwrap();
        for i in 0..m.n_rows {
            for b in tf.blocks().iter().filter(|b| b.kind != BlockKind::Alpha) {
                assert!(one_hot_index(&m.row(i)[b.span.range()]).is_some());
            }
        }
        let back = tf.decode_table("mixed", &m).unwrap();
        for (a, b) in back.rows.iter().zip(&t.rows) {
            for (x, y) in a.iter().zip(b) {
                match (x, y) {
                    (Cell::Num(p), Cell::Num(q)) => assert!((p - q).abs() <= 1e-5 * q.abs().max(1.0)),
                    _ => assert_eq!(x, y),
                }
            }
        }
    }

    #[test]
    fn width_bookkeeping() {
        let gm = |k: usize| GmmParams {
            weights: vec![1.0 / k as f64; k],
            means: (0..k).map(|i| i as f64).collect(),
            stds: vec![1.0; k],
            active: vec![true; k],
        };
        let cats: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| String::from(*s)).collect();
        let mut columns = Vec::new();
        let mut start = 0;
        for (i, codec) in [
            ColumnCodec::Numeric { gmm: gm(3) },
            ColumnCodec::Numeric { gmm: gm(2) },
            ColumnCodec::Categorical { categories: cats.clone() },
        ]
        .into_iter()
        .enumerate()
        {
            let width = match &codec {
                ColumnCodec::Numeric { gmm } => 1 + gmm.n_active(),
                ColumnCodec::Categorical { categories } => categories.len(),
            };
            columns.push(ColumnTransform { name: format!("c{i}"), source: i, codec, span: Span { start, width } });
            start += width;
        }
        assert_eq!(start, 11);
    }

    #[test]
    fn empty_table_and_mismatch() {
        let t = mixed_table();
        let tf = ColumnTransformer::fit(&t, 3, 1).unwrap();
        let empty = t.select_rows(&[]);
        let m = tf.encode_table(&empty, &mut rng::seeded(0)).unwrap();
        assert_eq!((m.n_rows, m.width, m.data.len()), (0, tf.width, 0));
        let bad = TransformedMatrix { n_rows: 0, width: tf.width + 1, data: vec![] };
        assert!(tf.decode_table("t", &bad).is_err());
    }
}
