//! Rows as text for an autoregressive language model: a byte-level BPE
//! tokenizer, a small transformer and sampling with parse-back.

pub mod bpe;
pub mod gpt;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bpe::{train_bpe, Vocab, BOS, EOS, PAD};
pub use gpt::{next_token_loss, Gpt, GptConfig, KvCache};

use crate::error::{Error, Result};
use crate::models::{ModelKind, NetSize, TabularModel};
use crate::neural::{Adam, AdamConfig, Param, Tensor};
use crate::real::Real;
use crate::rng;
use crate::table::{ColumnMeta, Table};
use crate::transform::text::{parse_row_text, serialize_row_text};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreatConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub context: usize,
    /// Upper bound on the tokenizer vocabulary.
    pub vocab_size: usize,
    pub temperature: f64,
    pub max_retries: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
}

impl Default for GreatConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            n_heads: 4,
            n_layers: 4,
            context: 256,
            vocab_size: 2048,
            temperature: 0.7,
            max_retries: 5,
            batch_size: 32,
            adam: AdamConfig { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.0 },
        }
    }
}

impl GreatConfig {
    /// "small" halves the width and depth of the default transformer.
    pub fn with_size(size: NetSize) -> Self {
        match size {
            NetSize::Small => Self { d_model: 64, n_layers: 2, ..Self::default() },
            NetSize::Normal => Self::default(),
        }
    }
}

/// One sentence per row. With `permute`, each row gets its own random
/// clause order.
pub fn serialize_table<R: Rng + ?Sized>(table: &Table, mut permute: Option<&mut R>) -> Result<Vec<String>> {
    table.rows.iter().map(|row| serialize_row_text(&table.columns, row, permute.as_deref_mut())).collect()
}

/// Sampled rows plus parse statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub table: Table,
    pub attempted: usize,
    pub valid: usize,
    /// Rows given up after exhausting the retries.
    pub skipped: usize,
    /// Parse failures by reason.
    pub failures: BTreeMap<String, usize>,
}

impl Generation {
    pub fn validity_rate(&self) -> f64 {
        if self.attempted == 0 {
            0.0
        } else {
            self.valid as f64 / self.attempted as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct Great<T: Real = f32> {
    pub config: GreatConfig,
    pub vocab: Vocab,
    pub schema: Vec<ColumnMeta>,
    pub gpt: Gpt<T>,
    pub optimizer: Adam<T>,
}

impl<T: Real> Great<T> {
    pub fn new<R: Rng + ?Sized>(vocab: Vocab, schema: Vec<ColumnMeta>, config: GreatConfig, rng: &mut R) -> Result<Self> {
        let gc = GptConfig {
            vocab_size: vocab.len(),
            context: config.context,
            d_model: config.d_model,
            n_heads: config.n_heads,
            n_layers: config.n_layers,
            mlp_ratio: 4,
        };
        let gpt = Gpt::new(gc, rng)?;
        let optimizer = Adam::new(config.adam);
        Ok(Self { config, vocab, schema, gpt, optimizer })
    }

    /// `[BOS] tokens [EOS]`; longer than the context is an error.
    pub fn encode_sentence(&self, s: &str) -> Result<Vec<u32>> {
        let mut ids = Vec::with_capacity(s.len() + 2);
        ids.push(BOS);
        ids.extend(self.vocab.encode(s));
        ids.push(EOS);
        if ids.len() > self.config.context {
            return Err(Error::ContextOverflow { len: ids.len(), context: self.config.context });
        }
        Ok(ids)
    }

    fn check_schema(&self, table: &Table) -> Result<()> {
        if table.columns.len() != self.schema.len() || table.columns.iter().zip(&self.schema).any(|(a, b)| a.name != b.name || a.kind != b.kind) {
            return Err(Error::Incompatible(format!("table `{}` does not match the model schema", table.name)));
        }
        Ok(())
    }

    pub fn sequences<R: Rng + ?Sized>(&self, table: &Table, permute: Option<&mut R>) -> Result<Vec<Vec<u32>>> {
        self.check_schema(table)?;
        serialize_table(table, permute)?.iter().map(|s| self.encode_sentence(s)).collect()
    }

    /// Right-pads with PAD to the longest sequence. Since attention is
    /// causal and PAD targets are masked, this equals padding to the full
    /// context.
    pub fn pad(seqs: &[Vec<u32>]) -> Vec<Vec<u32>> {
        let len = seqs.iter().map(Vec::len).max().unwrap_or(0);
        seqs.iter()
            .map(|s| {
                let mut p = s.clone();
                p.resize(len, PAD);
                p
            })
            .collect()
    }

    pub fn loss(&self, batch: &[Vec<u32>]) -> Result<f64> {
        let padded = Self::pad(batch);
        let (logits, _) = self.gpt.forward(&padded)?;
        Ok(next_token_loss(&logits, &padded)?.0.as_f64())
    }

    /// Mean next-token loss of `batch` before the Adam update it triggers.
    pub fn train_step(&mut self, batch: &[Vec<u32>]) -> Result<f64> {
        let padded = Self::pad(batch);
        self.gpt.zero_grad();
        let (logits, cache) = self.gpt.forward(&padded)?;
        let (loss, dl) = next_token_loss(&logits, &padded)?;
        self.gpt.backward(&cache, &dl)?;
        let opt = &mut self.optimizer;
        let mut result = Ok(());
        self.gpt.visit_params(&mut |n, p| {
            if result.is_ok() {
                result = opt.update(n, p);
            }
        });
        result?;
        Ok(loss.as_f64())
    }

    /// One pass over `table` with fresh clause permutations and a shuffled
    /// row order; returns the mean batch loss.
    pub fn train_epoch<R: Rng + ?Sized>(&mut self, table: &Table, rng: &mut R) -> Result<f64> {
        let mut seqs = self.sequences(table, Some(&mut *rng))?;
        if seqs.is_empty() {
            return Err(Error::NoDataRows);
        }
        seqs.shuffle(rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in seqs.chunks(self.config.batch_size.max(1)) {
            total += self.train_step(chunk)?;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    /// Mean loss over `table` in schema clause order.
    pub fn evaluate(&self, table: &Table) -> Result<f64> {
        let seqs = self.sequences::<rng::StreamRng>(table, None)?;
        if seqs.is_empty() {
            return Err(Error::NoDataRows);
        }
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in seqs.chunks(self.config.batch_size.max(1)) {
            total += self.loss(chunk)?;
            batches += 1;
        }
        Ok(total / batches as f64)
    }

    /// Samples one sentence from BOS until EOS or the context limit.
    /// `temperature <= 0` decodes greedily.
    pub fn sample_sentence<R: Rng + ?Sized>(&self, temperature: f64, rng: &mut R) -> Result<String> {
        let mut kv = KvCache::default();
        let mut out = Vec::new();
        let mut token = BOS;
        while kv.len() < self.config.context {
            let logits = self.gpt.step(token, &mut kv)?;
            let mut l: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
            l[BOS as usize] = f64::NEG_INFINITY;
            l[PAD as usize] = f64::NEG_INFINITY;
            token = if temperature <= 0.0 {
                crate::transform::argmax(&l) as u32
            } else {
                let top = l.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = l.iter().map(|&v| libm::exp((v - top) / temperature)).collect();
                rng::weighted_index(rng, &w) as u32
            };
            if token == EOS {
                break;
            }
            out.push(token);
        }
        self.vocab.decode(&out)
    }

    /// Up to `n` parsed rows. Each row gets `1 + max_retries` attempts.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, temperature: f64, max_retries: usize, rng: &mut R) -> Result<Generation> {
        let mut rows = Vec::with_capacity(n);
        let mut attempted = 0;
        let mut skipped = 0;
        let mut failures = BTreeMap::new();
        for _ in 0..n {
            let mut done = false;
            for _ in 0..=max_retries {
                attempted += 1;
                let s = self.sample_sentence(temperature, rng)?;
                match parse_row_text(&self.schema, &s) {
                    Ok(row) => {
                        rows.push(row);
                        done = true;
                        break;
                    }
                    Err(e) => *failures.entry(String::from(e.reason())).or_insert(0) += 1,
                }
            }
            if !done {
                skipped += 1;
            }
        }
        let valid = rows.len();
        let table = Table::new("synthetic", self.schema.clone(), rows)?;
        Ok(Generation { table, attempted, valid, skipped, failures })
    }
}

impl<T: Real> TabularModel<T> for Great<T> {
    fn kind(&self) -> ModelKind {
        ModelKind::Great
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&str, &mut Param<T>)) {
        self.gpt.visit_params(f);
    }

    fn visit_buffers(&mut self, _f: &mut dyn FnMut(&str, &mut Tensor<T>)) {}

    /// The vocabulary is shared across tables, so every weight transfers.
    fn is_head(&self, _name: &str) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;
    use crate::table::ColumnData;

    fn tiny_config() -> GreatConfig {
        GreatConfig {
            d_model: 32,
            n_heads: 2,
            n_layers: 2,
            context: 48,
            vocab_size: 300,
            batch_size: 8,
            adam: AdamConfig { lr: 3e-3, ..GreatConfig::default().adam },
            ..GreatConfig::default()
        }
    }

    fn one_row() -> Table {
        Table::from_columns(
            "one",
            vec![("Age".to_string(), ColumnData::numeric([26.0])), ("Gender".to_string(), ColumnData::categorical(["M"]))],
        )
        .unwrap()
    }

    fn model(table: &Table, config: GreatConfig) -> Great<f32> {
        let corpus = serialize_table::<rng::StreamRng>(table, None).unwrap();
        let vocab = train_bpe(&corpus, config.vocab_size).unwrap();
        Great::new(vocab, table.columns.clone(), config, &mut rng::seeded(1)).unwrap()
    }

    #[test]
    fn untrained_loss_is_near_uniform() {
        let t = one_row();
        let m = model(&t, tiny_config());
        let seqs = m.sequences::<rng::StreamRng>(&t, None).unwrap();
        let loss = m.loss(&seqs).unwrap();
        let uniform = libm::log(m.vocab.len() as f64);
        assert!((loss / uniform - 1.0).abs() <= 0.1, "{loss} vs {uniform}");
    }

    #[test]
    fn memorizes_one_sentence_and_replays_it() {
        let t = one_row();
        let mut m = model(&t, tiny_config());
        let seqs = m.sequences::<rng::StreamRng>(&t, None).unwrap();
        let batch = vec![seqs[0].clone(); 4];
        let mut first50 = Vec::new();
        let mut loss = f64::INFINITY;
        for step in 0..200 {
            loss = m.train_step(&batch).unwrap();
            if step < 50 {
                first50.push(loss);
            }
        }
        assert!(first50[49] < first50[0]);
        assert!(loss < 0.1, "{loss}");
        let g = m.generate(5, 0.0, 0, &mut rng::seeded(2)).unwrap();
        assert_eq!(g.valid, 5);
        assert_eq!(g.validity_rate(), 1.0);
        assert!(g.table.rows.iter().all(|r| r == &t.rows[0]));
    }

    #[test]
    fn context_overflow_is_reported() {
        let t = one_row();
        let m = model(&t, GreatConfig { context: 4, ..tiny_config() });
        assert!(matches!(m.encode_sentence("Age is 26 and Gender is M"), Err(Error::ContextOverflow { .. })));
    }

    #[test]
    fn validity_bookkeeping() {
        let t = one_row();
        let m = model(&t, tiny_config());
        let g = m.generate(4, 1.0, 2, &mut rng::seeded(3)).unwrap();
        assert_eq!(g.valid + g.skipped, 4);
        assert_eq!(g.failures.values().sum::<usize>() + g.valid, g.attempted);
        assert!((g.validity_rate() - g.valid as f64 / g.attempted as f64).abs() < 1e-15);
        assert_eq!(g.table.n_rows(), g.valid);
    }

    #[test]
    fn permutation_changes_clause_order() {
        let t = Table::from_columns(
            "t",
            vec![
                ("a".to_string(), ColumnData::numeric([1.0; 20])),
                ("b".to_string(), ColumnData::numeric([2.0; 20])),
                ("c".to_string(), ColumnData::numeric([3.0; 20])),
            ],
        )
        .unwrap();
        let mut r = rng::seeded(4);
        let s = serialize_table(&t, Some(&mut r)).unwrap();
        assert!(s.iter().any(|x| !x.starts_with("a is")));
        for x in &s {
            assert_eq!(parse_row_text(&t.columns, x).unwrap(), t.rows[0]);
        }
    }
}
