//! Pretraining over a corpus, fine-tuning from a pretrained body and
//! training from scratch, with early stopping and checkpoint snapshots.

mod log;

pub use log::{EarlyStopper, EpochRecord, StopReason, TrainLog};

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::table_report;
use crate::great::{serialize_table, train_bpe, Generation, Great, GreatConfig, Vocab};
use crate::models::{
    body_hash, matrix_tensor, CondLayout, CondSampler, Ctgan, CtganConfig, ModelKind, NetSize, ParamMap, TabularModel, Vae, VaeConfig, VaeVariant,
};
use crate::models::vae::{stvaem_signatures, SignatureSource};
use crate::neural::{Adam, Tensor};
use crate::rng::{self, StreamRng};
use crate::table::{Cell, ColumnMeta, Table};
use crate::transform::ColumnTransformer;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const DEFAULT_PATIENCE: usize = 30;
pub const DEFAULT_MIN_DELTA: f64 = 1e-4;
pub const DEFAULT_CKPT_EVERY: usize = 50;
pub const DEFAULT_VAL_FRACTION: f64 = 0.1;

/// Which model to build and its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub size: NetSize,
    /// Maximum mixture modes per numerical column.
    pub modes: usize,
    pub ctgan: CtganConfig,
    pub vae: VaeConfig,
    pub great: GreatConfig,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::new(ModelKind::Stvae, NetSize::Normal)
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, size: NetSize) -> Self {
        Self {
            kind,
            size,
            modes: crate::transform::gmm::DEFAULT_MODES,
            ctgan: CtganConfig::with_size(size),
            vae: VaeConfig::with_size(size),
            great: GreatConfig::with_size(size),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub patience: usize,
    pub min_delta: f64,
    /// Share of rows held out for validation (early stopping or snapshot
    /// selection). 0 disables both.
    pub val_fraction: f64,
    /// CTGAN snapshot interval in epochs.
    pub ckpt_every: usize,
    pub seed: u64,
    /// Wall-clock limit, checked between epochs.
    pub budget_secs: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            patience: DEFAULT_PATIENCE,
            min_delta: DEFAULT_MIN_DELTA,
            val_fraction: DEFAULT_VAL_FRACTION,
            ckpt_every: DEFAULT_CKPT_EVERY,
            seed: 0,
            budget_secs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub model: ModelSpec,
    pub iterations: usize,
    /// Wall-clock limit, checked between iterations.
    pub budget_secs: Option<f64>,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { model: ModelSpec::default(), iterations: 500, budget_secs: None, seed: 0 }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidArgument("pretraining needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// Outside inputs: a clock for budgets and optional column-name
/// embeddings for STVAEM signatures.
#[derive(Clone, Copy, Default)]
pub struct Env<'a> {
    /// Seconds since the run started.
    pub clock: Option<&'a dyn Fn() -> f64>,
    pub column_embeddings: Option<&'a BTreeMap<String, Vec<f64>>>,
}

impl Env<'_> {
    fn over_budget(&self, budget: Option<f64>) -> bool {
        match (budget, self.clock) {
            (Some(b), Some(clock)) => clock() >= b,
            _ => false,
        }
    }

    fn signature_source(&self) -> SignatureSource<'_> {
        match self.column_embeddings {
            Some(m) => SignatureSource::External(m),
            None => SignatureSource::Hashing,
        }
    }
}

/// Everything besides the weights needed to rebuild a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelState {
    Tabular {
        transformer: ColumnTransformer,
        /// CTGAN category counts (empty for the VAEs).
        frequencies: Vec<Vec<f64>>,
        /// STVAEM signature (empty otherwise).
        signature: Vec<f64>,
    },
    Text {
        vocab: Vocab,
        schema: Vec<ColumnMeta>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub regime: String,
    pub tables: Vec<String>,
    /// FNV-1a hash of the training tables, hex.
    pub corpus_hash: String,
    pub seed: u64,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCheckpoint {
    pub version: u32,
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub state: ModelState,
    /// Parameters and buffers by name.
    pub params: ParamMap<f32>,
    pub provenance: Provenance,
}

impl ModelCheckpoint {
    pub fn check_version(&self) -> Result<()> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion { found: self.version, expected: CHECKPOINT_VERSION });
        }
        Ok(())
    }
}

/// FNV-1a over table names, schemas and cells.
pub fn corpus_hash(tables: &[&Table]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    for t in tables {
        eat(t.name.as_bytes());
        for c in &t.columns {
            eat(c.name.as_bytes());
            for l in &c.categories {
                eat(l.as_bytes());
            }
        }
        for row in &t.rows {
            for cell in row {
                match *cell {
                    Cell::Null => eat(&[0]),
                    Cell::Num(x) => eat(&x.to_bits().to_le_bytes()),
                    Cell::Cat(k) => eat(&k.to_le_bytes()),
                }
            }
        }
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone)]
pub enum AnyModel {
    Ctgan(Ctgan<f32>),
    Vae(Vae<f32>),
    Great(Great<f32>),
}

/// A table encoded for one model.
struct Prepared {
    transformer: ColumnTransformer,
    train: Tensor<f32>,
    sampler: CondSampler,
}

/// The transformer sees the whole table so that validation rows never
/// carry unknown categories; only the training rows are encoded.
fn prepare(full: &Table, train: &Table, modes: usize, seed: u64) -> Result<Prepared> {
    let transformer = ColumnTransformer::fit(full, modes, rng::derive_seed(seed, "transform"))?;
    let matrix = transformer.encode_table(train, &mut rng::stream(seed, "encode"))?;
    let sampler = CondSampler::new(&CondLayout::new(&transformer), &matrix);
    Ok(Prepared { transformer, train: matrix_tensor(&matrix), sampler })
}

impl AnyModel {
    fn build_tabular(spec: &ModelSpec, transformer: &ColumnTransformer, counts: &[Vec<f64>], env: &Env, rng: &mut StreamRng) -> Result<Self> {
        let transformer = transformer.clone();
        Ok(match spec.kind {
            ModelKind::Ctgan => AnyModel::Ctgan(Ctgan::new(transformer, counts.to_vec(), spec.ctgan.clone(), rng)?),
            ModelKind::Great => return Err(Error::InvalidArgument("GReaT is not a tabular-matrix model".into())),
            kind => {
                let variant = VaeVariant::from_kind(kind).expect("VAE kind");
                let signature = if variant == VaeVariant::Stvaem {
                    stvaem_signatures(&transformer, env.signature_source(), spec.vae.signature_dim)?
                } else {
                    Vec::new()
                };
                AnyModel::Vae(Vae::new(variant, transformer, spec.vae.clone(), signature, rng)?)
            }
        })
    }

    /// Rebuilds a model from its checkpoint with the exact stored weights.
    pub fn from_checkpoint(ckpt: &ModelCheckpoint) -> Result<Self> {
        ckpt.check_version()?;
        let mut init = rng::seeded(0);
        let mut model = match (&ckpt.state, ckpt.kind) {
            (ModelState::Text { vocab, schema }, ModelKind::Great) => AnyModel::Great(Great::new(vocab.clone(), schema.clone(), ckpt.spec.great.clone(), &mut init)?),
            (ModelState::Tabular { transformer, frequencies, .. }, ModelKind::Ctgan) => {
                AnyModel::Ctgan(Ctgan::new(transformer.clone(), frequencies.clone(), ckpt.spec.ctgan.clone(), &mut init)?)
            }
            (ModelState::Tabular { transformer, signature, .. }, kind) if kind != ModelKind::Great => {
                let variant = VaeVariant::from_kind(kind).expect("VAE kind");
                AnyModel::Vae(Vae::new(variant, transformer.clone(), ckpt.spec.vae.clone(), signature.clone(), &mut init)?)
            }
            _ => return Err(Error::Incompatible(format!("checkpoint state does not fit a {} model", ckpt.kind))),
        };
        model.as_model().import_params(&ckpt.params)?;
        Ok(model)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            AnyModel::Ctgan(_) => ModelKind::Ctgan,
            AnyModel::Vae(v) => v.variant.kind(),
            AnyModel::Great(_) => ModelKind::Great,
        }
    }

    pub fn as_model(&mut self) -> &mut dyn TabularModel<f32> {
        match self {
            AnyModel::Ctgan(m) => m,
            AnyModel::Vae(m) => m,
            AnyModel::Great(m) => m,
        }
    }

    fn optimizer(&mut self) -> &mut Adam<f32> {
        match self {
            AnyModel::Ctgan(m) => &mut m.optimizer,
            AnyModel::Vae(m) => &mut m.optimizer,
            AnyModel::Great(m) => &mut m.optimizer,
        }
    }

    pub fn state(&self) -> ModelState {
        match self {
            AnyModel::Ctgan(m) => ModelState::Tabular { transformer: m.transformer.clone(), frequencies: m.frequencies.clone(), signature: Vec::new() },
            AnyModel::Vae(m) => ModelState::Tabular {
                transformer: m.transformer.clone(),
                frequencies: Vec::new(),
                signature: m.signature.iter().map(|&v| v as f64).collect(),
            },
            AnyModel::Great(m) => ModelState::Text { vocab: m.vocab.clone(), schema: m.schema.clone() },
        }
    }

    /// Up to `n` rows; GReaT may return fewer when parsing keeps failing.
    pub fn sample(&mut self, n: usize, rng: &mut StreamRng) -> Result<Table> {
        match self {
            AnyModel::Ctgan(m) => m.sample(n, rng),
            AnyModel::Vae(m) => m.sample(n, rng),
            AnyModel::Great(m) => Ok(m.generate(n, m.config.temperature, m.config.max_retries, rng)?.table),
        }
    }

    /// GReaT sampling with parse statistics.
    pub fn generate_text(&mut self, n: usize, rng: &mut StreamRng) -> Result<Generation> {
        match self {
            AnyModel::Great(m) => m.generate(n, m.config.temperature, m.config.max_retries, rng),
            _ => Err(Error::InvalidArgument("parse statistics exist for GReaT only".into())),
        }
    }

    fn checkpoint(&mut self, spec: &ModelSpec, provenance: Provenance) -> ModelCheckpoint {
        ModelCheckpoint {
            version: CHECKPOINT_VERSION,
            kind: self.kind(),
            spec: spec.clone(),
            state: self.state(),
            params: self.as_model().export_params(),
            provenance,
        }
    }
}

/// Splits off `round(fraction · n)` validation rows (at least one when the
/// fraction is positive and the table has two rows or more).
pub fn split_validation(table: &Table, fraction: f64, seed: u64) -> (Table, Option<Table>) {
    let n = table.n_rows();
    let mut k = libm::round(fraction * n as f64) as usize;
    if fraction > 0.0 && n >= 2 {
        k = k.clamp(1, n - 1);
    } else {
        k = 0;
    }
    if k == 0 {
        return (table.clone(), None);
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "split"));
    let mut val: Vec<usize> = idx[..k].to_vec();
    let mut train: Vec<usize> = idx[k..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (table.select_rows(&train), Some(table.select_rows(&val)))
}

/// Per-epoch data for one model.
enum Data {
    Tabular { train: Tensor<f32>, sampler: CondSampler, val: Option<(Tensor<f32>, Table)> },
    Text { train: Table, val: Option<Table> },
}

/// Streams shared by every training regime so that equal seeds replay
/// equal runs.
struct Streams {
    init: StreamRng,
    batch: StreamRng,
    noise: StreamRng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self { init: rng::stream(seed, "model-init"), batch: rng::stream(seed, "batch"), noise: rng::stream(seed, "noise") }
    }
}

fn vae_epoch(m: &mut Vae<f32>, data: &Tensor<f32>, rng: &mut StreamRng) -> Result<f64> {
    let mut order: Vec<usize> = (0..data.rows).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0;
    for chunk in order.chunks(m.config.batch_size.max(1)) {
        total += m.train_batch(&data.gather_rows(chunk), rng)?.loss;
        batches += 1;
    }
    Ok(total / batches as f64)
}

fn ctgan_epoch(m: &mut Ctgan<f32>, data: &Tensor<f32>, sampler: &CondSampler, batch: &mut StreamRng, noise: &mut StreamRng) -> Result<f64> {
    let steps = (data.rows / m.config.batch_size.max(1)).max(1);
    let mut total = 0.0;
    for _ in 0..steps {
        total += m.train_batch(data, sampler, batch, noise)?.generator;
    }
    Ok(total / steps as f64)
}

/// One pass over the training data; returns the mean training loss.
fn run_epoch(model: &mut AnyModel, data: &Data, s: &mut Streams) -> Result<f64> {
    match (model, data) {
        (AnyModel::Ctgan(m), Data::Tabular { train, sampler, .. }) => ctgan_epoch(m, train, sampler, &mut s.batch, &mut s.noise),
        (AnyModel::Vae(m), Data::Tabular { train, .. }) => vae_epoch(m, train, &mut s.batch),
        (AnyModel::Great(m), Data::Text { train, .. }) => m.train_epoch(train, &mut s.batch),
        _ => Err(Error::Incompatible("model and training data disagree".into())),
    }
}

/// Validation loss; the noise stream is reseeded each time so that
/// equal weights give equal losses.
fn validation_loss(model: &mut AnyModel, data: &Data, seed: u64) -> Result<Option<f64>> {
    Ok(match (model, data) {
        (AnyModel::Vae(m), Data::Tabular { val: Some((v, _)), .. }) => Some(m.evaluate(v, &mut rng::stream(seed, "val"))?.loss),
        (AnyModel::Great(m), Data::Text { val: Some(v), .. }) => Some(m.evaluate(v)?),
        _ => None,
    })
}

/// Overall score of a same-size synthetic sample against the validation rows.
fn validation_score(model: &mut AnyModel, data: &Data, seed: u64) -> Result<Option<f64>> {
    let val = match data {
        Data::Tabular { val: Some((_, t)), .. } => t,
        Data::Text { val: Some(t), .. } => t,
        _ => return Ok(None),
    };
    let syn = model.sample(val.n_rows(), &mut rng::stream(seed, "val-sample"))?;
    if syn.n_rows() == 0 {
        return Ok(Some(0.0));
    }
    Ok(Some(table_report(val, &syn)?.overall))
}

fn tabular_data(p: Prepared, val: Option<Table>, seed: u64) -> Result<Data> {
    let val = match val {
        Some(t) => {
            let m = p.transformer.encode_table(&t, &mut rng::stream(seed, "encode-val"))?;
            Some((matrix_tensor(&m), t))
        }
        None => None,
    };
    Ok(Data::Tabular { train: p.train, sampler: p.sampler, val })
}

/// Epoch loop shared by fine-tuning and training from scratch. The VAEs
/// and GReaT stop early on the validation loss and keep the best epoch;
/// CTGAN keeps the snapshot with the best validation Overall score.
fn fit(model: &mut AnyModel, data: &Data, config: &TrainConfig, env: &Env, s: &mut Streams, dataset: &str) -> Result<TrainLog> {
    let mut log = TrainLog::new();
    let is_gan = model.kind() == ModelKind::Ctgan;
    let mut stopper = EarlyStopper::new(config.patience, config.min_delta);
    let mut best: Option<(f64, ParamMap<f32>)> = None;
    log.stop = StopReason::MaxEpochs;
    for epoch in 1..=config.epochs {
        if env.over_budget(config.budget_secs) {
            log.stop = StopReason::Budget;
            break;
        }
        let train_loss = run_epoch(model, data, s)?;
        let val_loss = validation_loss(model, data, config.seed)?;
        let mut val_score = None;
        let mut stop = false;
        if is_gan {
            let snapshot = config.ckpt_every > 0 && epoch % config.ckpt_every == 0 || epoch == config.epochs;
            if snapshot {
                log.checkpoints.push(epoch);
                val_score = validation_score(model, data, config.seed)?;
                if let Some(score) = val_score {
                    if best.as_ref().map_or(true, |(b, _)| score > *b) {
                        best = Some((score, model.as_model().export_params()));
                        log.best_epoch = Some(epoch);
                    }
                }
            }
        } else if let Some(v) = val_loss {
            let step = stopper.observe(epoch, v);
            if step.new_best {
                best = Some((v, model.as_model().export_params()));
                log.best_epoch = Some(epoch);
            }
            stop = step.stop;
        }
        let hash = body_hash(model.as_model());
        log.records.push(EpochRecord { epoch, dataset: dataset.to_string(), train_loss, val_loss, val_score, body_hash: hash });
        if stop {
            log.stop = StopReason::EarlyStop;
            break;
        }
    }
    if let Some((_, params)) = best {
        model.as_model().import_params(&params)?;
    }
    Ok(log)
}

fn build_for_table(
    spec: &ModelSpec,
    full: &Table,
    train: &Table,
    vocab: Option<Vocab>,
    env: &Env,
    seed: u64,
    init: &mut StreamRng,
) -> Result<(AnyModel, Option<Prepared>)> {
    if spec.kind == ModelKind::Great {
        let vocab = match vocab {
            Some(v) => v,
            None => train_bpe(&serialize_table::<StreamRng>(train, None)?, spec.great.vocab_size)?,
        };
        return Ok((AnyModel::Great(Great::new(vocab, full.columns.clone(), spec.great.clone(), init)?), None));
    }
    let p = prepare(full, train, spec.modes, seed)?;
    let model = AnyModel::build_tabular(spec, &p.transformer, &p.sampler.counts, env, init)?;
    Ok((model, Some(p)))
}

fn head_params(model: &mut dyn TabularModel<f32>) -> ParamMap<f32> {
    let mut out = ParamMap::new();
    let mut names = Vec::new();
    model.visit_params(&mut |n, _| names.push(String::from(n)));
    let keep: Vec<bool> = names.iter().map(|n| model.is_head(n)).collect();
    let mut idx = 0;
    model.visit_params(&mut |n, p| {
        if keep[idx] {
            out.insert(String::from(n), p.value.clone());
        }
        idx += 1;
    });
    out
}

fn restore_heads(model: &mut dyn TabularModel<f32>, heads: &ParamMap<f32>) {
    model.visit_params(&mut |n, p| {
        if let Some(v) = heads.get(n).filter(|v| v.shape() == p.value.shape()) {
            p.value.clone_from(v);
        }
    });
}

fn data_for(prepared: Option<Prepared>, train: &Table, val: Option<Table>, seed: u64) -> Result<Data> {
    match prepared {
        Some(p) => tabular_data(p, val, seed),
        None => Ok(Data::Text { train: train.clone(), val }),
    }
}

fn provenance(regime: &str, tables: &[&Table], seed: u64, log: &TrainLog) -> Provenance {
    Provenance {
        regime: regime.to_string(),
        tables: tables.iter().map(|t| t.name.clone()).collect(),
        corpus_hash: corpus_hash(tables),
        seed,
        epoch: log.best_epoch.or_else(|| log.records.last().map(|r| r.epoch)).unwrap_or(0),
    }
}

/// Trains a fresh model on `table`.
pub fn train_scratch(spec: &ModelSpec, table: &Table, config: &TrainConfig, env: &Env) -> Result<(ModelCheckpoint, TrainLog)> {
    if table.n_rows() == 0 {
        return Err(Error::NoDataRows);
    }
    let (train, val) = split_validation(table, config.val_fraction, config.seed);
    let mut s = Streams::new(config.seed);
    let (mut model, prepared) = build_for_table(spec, table, &train, None, env, config.seed, &mut s.init)?;
    let data = data_for(prepared, &train, val, config.seed)?;
    let log = fit(&mut model, &data, config, env, &mut s, &table.name)?;
    let prov = provenance("scratch", &[table], config.seed, &log);
    Ok((model.checkpoint(spec, prov), log))
}

/// Loads the body of `ckpt` into a model built for `table` (fresh heads)
/// and continues training.
pub fn finetune(ckpt: &ModelCheckpoint, kind: ModelKind, table: &Table, config: &TrainConfig, env: &Env) -> Result<(ModelCheckpoint, TrainLog)> {
    ckpt.check_version()?;
    if ckpt.kind != kind {
        return Err(Error::KindMismatch { expected: kind.to_string(), found: ckpt.kind.to_string() });
    }
    if table.n_rows() == 0 {
        return Err(Error::NoDataRows);
    }
    let vocab = match &ckpt.state {
        ModelState::Text { vocab, .. } => Some(vocab.clone()),
        ModelState::Tabular { .. } => None,
    };
    let (train, val) = split_validation(table, config.val_fraction, config.seed);
    let mut s = Streams::new(config.seed);
    let (mut model, prepared) = build_for_table(&ckpt.spec, table, &train, vocab, env, config.seed, &mut s.init)?;
    model.as_model().load_body(&ckpt.params);
    let data = data_for(prepared, &train, val, config.seed)?;
    let log = fit(&mut model, &data, config, env, &mut s, &table.name)?;
    let prov = provenance("pretrained-finetuned", &[table], config.seed, &log);
    Ok((model.checkpoint(&ckpt.spec, prov), log))
}

/// Body-sharing pretraining: every iteration reshuffles the corpus and
/// runs one epoch per table. Moving to a different table swaps in that
/// table's heads (fresh on the first visit, its own trained heads after)
/// and drops their optimizer state.
pub fn pretrain(corpus: &[Table], config: &PretrainConfig, env: &Env) -> Result<(ModelCheckpoint, TrainLog)> {
    config.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyInput("pretraining corpus"));
    }
    let spec = &config.model;
    let seed = config.seed;
    let mut s = Streams::new(seed);
    let mut order_rng = rng::stream(seed, "pretrain-order");

    // GReaT shares one vocabulary across the corpus; the VAEs and CTGAN
    // encode every table once.
    let vocab = if spec.kind == ModelKind::Great {
        let mut sentences = Vec::new();
        for t in corpus {
            sentences.extend(serialize_table::<StreamRng>(t, None)?);
        }
        Some(train_bpe(&sentences, spec.great.vocab_size)?)
    } else {
        None
    };
    let mut datasets: Vec<Option<Data>> = (0..corpus.len()).map(|_| None).collect();
    // Transformer and category counts per table, fitted on first visit.
    let mut fitted: Vec<Option<(ColumnTransformer, Vec<Vec<f64>>)>> = (0..corpus.len()).map(|_| None).collect();
    // Head weights of each table, kept between its visits.
    let mut heads: Vec<Option<ParamMap<f32>>> = (0..corpus.len()).map(|_| None).collect();

    let mut log = TrainLog::new();
    log.stop = StopReason::MaxIterations;
    let mut current: Option<(usize, AnyModel)> = None;
    let one_epoch = TrainConfig { epochs: 1, val_fraction: 0.0, seed, ..TrainConfig::default() };
    let mut pass = 0;
    for _ in 0..config.iterations {
        if env.over_budget(config.budget_secs) {
            log.stop = StopReason::Budget;
            break;
        }
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        order.shuffle(&mut order_rng);
        for &i in &order {
            let table = &corpus[i];
            let same = matches!(current, Some((j, _)) if j == i);
            if !same {
                let (mut fresh, prepared) = match &fitted[i] {
                    Some((transformer, counts)) => (AnyModel::build_tabular(spec, transformer, counts, env, &mut s.init)?, None),
                    None => build_for_table(spec, table, table, vocab.clone(), env, seed, &mut s.init)?,
                };
                if let Some(p) = &prepared {
                    fitted[i] = Some((p.transformer.clone(), p.sampler.counts.clone()));
                }
                if let Some((j, mut prev)) = current.take() {
                    let body = prev.as_model().export_params();
                    heads[j] = Some(head_params(prev.as_model()));
                    let report = fresh.as_model().load_body(&body);
                    if let Some(h) = &heads[i] {
                        restore_heads(fresh.as_model(), h);
                    }
                    let mut opt = core::mem::replace(prev.optimizer(), Adam::new(Default::default()));
                    for name in report.reinitialized.iter().chain(&report.partial) {
                        opt.forget(name);
                    }
                    *fresh.optimizer() = opt;
                }
                if datasets[i].is_none() {
                    datasets[i] = Some(data_for(prepared, table, None, seed)?);
                }
                current = Some((i, fresh));
            }
            let (_, model) = current.as_mut().expect("model for the current table");
            let data = datasets[i].as_ref().expect("prepared dataset");
            let pass_log = fit(model, data, &one_epoch, env, &mut s, &table.name)?;
            for mut r in pass_log.records {
                pass += 1;
                r.epoch = pass;
                log.records.push(r);
            }
        }
    }
    let (_, mut model) = current.ok_or(Error::EmptyInput("pretraining passes"))?;
    let tables: Vec<&Table> = corpus.iter().collect();
    let prov = provenance("pretrained", &tables, seed, &log);
    Ok((model.checkpoint(spec, prov), log))
}
