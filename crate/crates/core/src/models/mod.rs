//! Generators: CTGAN and the TVAE / STVAE / STVAEM family.

pub mod ctgan;
pub mod vae;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Param, Tensor};
use crate::real::Real;
use crate::rng;
use crate::transform::{argmax, ColumnTransformer, Span, TransformedMatrix};

pub use ctgan::{Ctgan, CtganConfig};
pub use vae::{Vae, VaeConfig, VaeVariant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Ctgan,
    Tvae,
    Stvae,
    Stvaem,
    Great,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [ModelKind::Ctgan, ModelKind::Tvae, ModelKind::Stvae, ModelKind::Stvaem, ModelKind::Great];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ctgan => "ctgan",
            ModelKind::Tvae => "tvae",
            ModelKind::Stvae => "stvae",
            ModelKind::Stvaem => "stvaem",
            ModelKind::Great => "great",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

/// Hidden-layer widths: "normal" is two blocks of 256, "small" two of 128.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetSize {
    Small,
    #[default]
    Normal,
}

impl NetSize {
    pub fn hidden(self) -> Vec<usize> {
        match self {
            NetSize::Small => vec![128, 128],
            NetSize::Normal => vec![256, 256],
        }
    }
}

/// Offsets of each categorical column's one-hot mask inside the
/// conditional vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CondLayout {
    pub offsets: Vec<usize>,
    pub widths: Vec<usize>,
    /// Where each categorical column's block sits in the encoded row.
    pub row_spans: Vec<Span>,
    pub width: usize,
}

impl CondLayout {
    pub fn new(transformer: &ColumnTransformer) -> Self {
        let mut offsets = Vec::new();
        let mut widths = Vec::new();
        let mut row_spans = Vec::new();
        let mut at = 0;
        for col in transformer.categorical_columns() {
            offsets.push(at);
            widths.push(col.span.width);
            row_spans.push(col.span);
            at += col.span.width;
        }
        Self { offsets, widths, row_spans, width: at }
    }

    pub fn from_widths(widths: &[usize]) -> Self {
        let mut offsets = Vec::new();
        let mut at = 0;
        for &w in widths {
            offsets.push(at);
            at += w;
        }
        Self { offsets, widths: widths.to_vec(), row_spans: Vec::new(), width: at }
    }

    pub fn n_columns(&self) -> usize {
        self.widths.len()
    }

    pub fn index(&self, column: usize, category: usize) -> Result<usize> {
        let w = *self.widths.get(column).ok_or_else(|| Error::InvalidArgument(format!("no categorical column {column}")))?;
        if category >= w {
            return Err(Error::InvalidArgument(format!("category {category} out of range for column {column}")));
        }
        Ok(self.offsets[column] + category)
    }
}

/// All-zero conditional vector with a single one at `(column, category)`.
pub fn build_cond_vector<T: Real>(layout: &CondLayout, column: usize, category: usize) -> Result<Vec<T>> {
    let at = layout.index(column, category)?;
    let mut v = vec![T::zero(); layout.width];
    v[at] = T::one();
    Ok(v)
}

/// Category statistics of the training rows, used to draw conditions and
/// matching real rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CondSampler {
    pub layout: CondLayout,
    /// Category counts per categorical column.
    pub counts: Vec<Vec<f64>>,
    /// Rows holding each category, per column.
    pub rows_by_category: Vec<Vec<Vec<usize>>>,
    pub n_rows: usize,
}

impl CondSampler {
    pub fn new(layout: &CondLayout, matrix: &TransformedMatrix) -> Self {
        let mut counts: Vec<Vec<f64>> = layout.widths.iter().map(|&w| vec![0.0; w]).collect();
        let mut rows: Vec<Vec<Vec<usize>>> = layout.widths.iter().map(|&w| vec![Vec::new(); w]).collect();
        for i in 0..matrix.n_rows {
            let r = matrix.row(i);
            for (c, span) in layout.row_spans.iter().enumerate() {
                let k = argmax(&r[span.range()]);
                counts[c][k] += 1.0;
                rows[c][k].push(i);
            }
        }
        Self { layout: layout.clone(), counts, rows_by_category: rows, n_rows: matrix.n_rows }
    }

    /// Sampler over explicit per-column category counts (no rows).
    pub fn from_counts(counts: Vec<Vec<f64>>) -> Self {
        let widths: Vec<usize> = counts.iter().map(Vec::len).collect();
        let rows = widths.iter().map(|&w| vec![Vec::new(); w]).collect();
        Self { layout: CondLayout::from_widths(&widths), counts, rows_by_category: rows, n_rows: 0 }
    }

    /// Training-by-sampling PMF over the categories of `column`,
    /// proportional to `log(1 + count)`.
    pub fn log_frequency_pmf(&self, column: usize) -> Vec<f64> {
        let w: Vec<f64> = self.counts[column].iter().map(|&c| libm::log1p(c)).collect();
        let total: f64 = w.iter().sum();
        w.iter().map(|x| x / total).collect()
    }
}

/// Draws `(i*, k*)`: the column uniformly, the category from the
/// log-frequency PMF. `None` when the table has no categorical column.
pub fn sample_condition<R: Rng + ?Sized>(sampler: &CondSampler, rng: &mut R) -> Option<(usize, usize)> {
    let n = sampler.layout.n_columns();
    if n == 0 {
        return None;
    }
    let i = rng.gen_range(0..n);
    let w: Vec<f64> = sampler.counts[i].iter().map(|&c| libm::log1p(c)).collect();
    Some((i, rng::weighted_index(rng, &w)))
}

/// Like [`sample_condition`] but with the category drawn from the raw
/// training frequencies; used at generation time so the synthetic
/// marginals follow the data.
pub fn sample_condition_empirical<R: Rng + ?Sized>(sampler: &CondSampler, rng: &mut R) -> Option<(usize, usize)> {
    let n = sampler.layout.n_columns();
    if n == 0 {
        return None;
    }
    let i = rng.gen_range(0..n);
    Some((i, rng::weighted_index(rng, &sampler.counts[i])))
}

/// Uniform draw among the training rows whose column `column` holds
/// category `category`.
pub fn sample_real_conditioned<R: Rng + ?Sized>(sampler: &CondSampler, column: usize, category: usize, rng: &mut R) -> Result<usize> {
    let rows = sampler
        .rows_by_category
        .get(column)
        .and_then(|c| c.get(category))
        .ok_or_else(|| Error::InvalidArgument(format!("no condition ({column}, {category})")))?;
    if rows.is_empty() {
        return Err(Error::NoMatchingRow);
    }
    Ok(rows[rng.gen_range(0..rows.len())])
}

pub fn matrix_tensor<T: Real>(m: &TransformedMatrix) -> Tensor<T> {
    Tensor { rows: m.n_rows, cols: m.width, data: m.data.iter().map(|&v| T::from_f64(v)).collect() }
}

pub fn tensor_matrix<T: Real>(t: &Tensor<T>) -> TransformedMatrix {
    TransformedMatrix { n_rows: t.rows, width: t.cols, data: t.data.iter().map(|v| v.as_f64()).collect() }
}

/// Standard-normal `[rows, cols]` tensor.
pub fn normal_tensor<T: Real, R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    Tensor { rows, cols, data: (0..rows * cols).map(|_| T::from_f64(rng::standard_normal(rng))).collect() }
}

/// Named parameter values (trainable tensors and normalization buffers).
pub type ParamMap<T = f32> = BTreeMap<String, Tensor<T>>;

/// How parameters were carried over from a pretrained body.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransferReport {
    pub loaded: Vec<String>,
    /// Loaded in part (rows that carry the same meaning in both tables).
    pub partial: Vec<String>,
    pub reinitialized: Vec<String>,
}

/// Common surface of the trainable generators.
pub trait TabularModel<T: Real = f32> {
    fn kind(&self) -> ModelKind;
    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>));
    fn visit_buffers(&mut self, f: &mut dyn FnMut(&str, &mut Tensor<T>));
    /// Table-dependent parameters, re-initialized when transferring.
    fn is_head(&self, name: &str) -> bool;

    fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    fn export_params(&mut self) -> ParamMap<T> {
        let mut out = ParamMap::new();
        self.visit_params(&mut |n, p| {
            out.insert(String::from(n), p.value.clone());
        });
        self.visit_buffers(&mut |n, t| {
            out.insert(String::from(n), t.clone());
        });
        out
    }

    /// Overwrites every parameter and buffer; shapes must match exactly.
    fn import_params(&mut self, params: &ParamMap<T>) -> Result<()> {
        let mut err = None;
        let mut apply = |name: &str, t: &mut Tensor<T>| match params.get(name) {
            Some(v) if v.shape() == t.shape() => t.clone_from(v),
            Some(v) => err = Some(Error::Shape(format!("`{name}` is {:?}, checkpoint has {:?}", t.shape(), v.shape()))),
            None => err = Some(Error::Incompatible(format!("checkpoint lacks `{name}`"))),
        };
        self.visit_params(&mut |n, p| apply(n, &mut p.value));
        self.visit_buffers(&mut |n, t| apply(n, t));
        err.map_or(Ok(()), Err)
    }

    /// Loads body parameters whose shapes match; heads keep their fresh
    /// initialization.
    fn load_body(&mut self, params: &ParamMap<T>) -> TransferReport {
        let mut report = TransferReport::default();
        let heads: Vec<String> = {
            let mut names = Vec::new();
            self.visit_params(&mut |n, _| names.push(String::from(n)));
            names.into_iter().filter(|n| self.is_head(n)).collect()
        };
        let mut apply = |name: &str, t: &mut Tensor<T>| {
            if heads.iter().any(|h| h == name) {
                report.reinitialized.push(String::from(name));
                return;
            }
            match params.get(name) {
                Some(v) if v.shape() == t.shape() => {
                    t.clone_from(v);
                    report.loaded.push(String::from(name));
                }
                _ => report.reinitialized.push(String::from(name)),
            }
        };
        self.visit_params(&mut |n, p| apply(n, &mut p.value));
        self.visit_buffers(&mut |n, t| apply(n, t));
        report
    }
}

/// Shape/value hash of the parameters not flagged as heads, FNV-1a over
/// the little-endian bytes. Used to check that learning happened.
pub fn body_hash<T: Real, M: TabularModel<T> + ?Sized>(model: &mut M) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut names = Vec::new();
    model.visit_params(&mut |n, _| names.push(String::from(n)));
    let heads: Vec<bool> = names.iter().map(|n| model.is_head(n)).collect();
    let mut idx = 0;
    model.visit_params(&mut |_, p| {
        if !heads[idx] {
            for v in &p.value.data {
                for b in v.as_f64().to_le_bytes() {
                    h ^= b as u64;
                    h = h.wrapping_mul(0x0000_0100_0000_01b3);
                }
            }
        }
        idx += 1;
    });
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cond_vector_layout() {
        let layout = CondLayout::from_widths(&[3, 2]);
        assert_eq!(build_cond_vector::<f32>(&layout, 1, 0).unwrap(), [0.0, 0.0, 0.0, 1.0, 0.0]);
        let mut seen = Vec::new();
        for i in 0..2 {
            for k in 0..layout.widths[i] {
                let v = build_cond_vector::<f64>(&layout, i, k).unwrap();
                assert_eq!(v.iter().sum::<f64>(), 1.0);
                seen.push(v.iter().position(|&x| x == 1.0).unwrap());
            }
        }
        // Brute force: positions enumerate 0..width in order.
        assert_eq!(seen, (0..5).collect::<Vec<_>>());
        assert!(build_cond_vector::<f32>(&layout, 2, 0).is_err());
        assert!(build_cond_vector::<f32>(&layout, 0, 3).is_err());
    }

    #[test]
    fn single_category_condition() {
        let s = CondSampler::from_counts(vec![vec![7.0]]);
        let mut r = rng::seeded(1);
        for _ in 0..50 {
            assert_eq!(sample_condition(&s, &mut r), Some((0, 0)));
        }
        assert_eq!(sample_condition(&CondSampler::from_counts(vec![]), &mut r), None);
    }

    #[test]
    fn condition_column_frequencies() {
        let s = CondSampler::from_counts(vec![vec![5.0, 5.0], vec![1.0, 100.0, 3.0]]);
        let mut r = rng::seeded(2);
        let n = 10_000;
        let first = (0..n).filter(|_| sample_condition(&s, &mut r).unwrap().0 == 0).count();
        assert!((first as f64 / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn log_frequency_ratio() {
        let e = core::f64::consts::E;
        let s = CondSampler::from_counts(vec![vec![1.0, e - 1.0]]);
        let mut counts = [0usize; 2];
        let mut r = rng::seeded(3);
        for _ in 0..100_000 {
            counts[sample_condition(&s, &mut r).unwrap().1] += 1;
        }
        let ratio = counts[0] as f64 / counts[1] as f64;
        let expected = libm::log(2.0);
        assert!((ratio / expected - 1.0).abs() < 0.02, "{ratio} vs {expected}");
        let pmf = s.log_frequency_pmf(0);
        assert!((pmf[0] / pmf[1] - expected).abs() < 1e-12);
    }

    #[test]
    fn conditioned_real_rows() {
        let mut s = CondSampler::from_counts(vec![vec![3.0, 1.0]]);
        s.rows_by_category = vec![vec![vec![0, 2, 3], vec![1]]];
        let mut r = rng::seeded(4);
        for _ in 0..20 {
            assert_eq!(sample_real_conditioned(&s, 0, 1, &mut r).unwrap(), 1);
        }
        let mut hist = [0usize; 4];
        let n = 100_000;
        for _ in 0..n {
            hist[sample_real_conditioned(&s, 0, 0, &mut r).unwrap()] += 1;
        }
        for &i in &[0, 2, 3] {
            assert!((hist[i] as f64 / n as f64 - 1.0 / 3.0).abs() < 0.03 / 3.0);
        }
        s.rows_by_category[0][1].clear();
        assert_eq!(sample_real_conditioned(&s, 0, 1, &mut r), Err(Error::NoMatchingRow));
    }
}
