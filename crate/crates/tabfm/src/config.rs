//! Run configuration: built-in defaults, then a JSON file, then its flat
//! `overrides` section, then `--section.key=value` flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tabfm_core::clean::CleaningConfig;
use tabfm_core::models::ModelKind;
use tabfm_core::split::SplitSpec;
use tabfm_core::training::{ModelSpec, TrainConfig};

use crate::checkpoint::sha256_hex;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub corpus_dir: PathBuf,
    pub work_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self { corpus_dir: PathBuf::from("corpus"), work_dir: PathBuf::from("work") }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    #[default]
    Random,
    Domain,
}

impl SplitKind {
    pub fn name(self) -> &'static str {
        match self {
            SplitKind::Random => "random",
            SplitKind::Domain => "domain",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    pub mode: SplitKind,
    /// Train, val and test fractions.
    pub ratios: [f64; 3],
    /// Cluster count for domain splits.
    pub k: usize,
    /// Table-name embeddings (JSON map). Hashed name embeddings otherwise.
    pub embeddings: Option<PathBuf>,
    pub embedding_dim: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self { mode: SplitKind::Random, ratios: [0.8, 0.1, 0.1], k: 100, embeddings: None, embedding_dim: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainSection {
    pub iterations: usize,
    pub budget_secs: Option<f64>,
}

impl Default for PretrainSection {
    fn default() -> Self {
        Self { iterations: 500, budget_secs: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub methods: Vec<ModelKind>,
    /// Split parts whose tables are evaluated.
    pub parts: Vec<Part>,
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self { methods: vec![ModelKind::Stvae], parts: vec![Part::Test] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    /// Root of every random stream in the run.
    pub seed: u64,
    /// Benchmark worker threads; 0 uses every core.
    pub workers: usize,
    pub split: SplitConfig,
    pub cleaning: CleaningConfig,
    /// Method (`model.kind`) and hyperparameters.
    pub model: ModelSpec,
    pub pretrain: PretrainSection,
    /// Per-table training; `train.seed` is replaced by a stream of `seed`.
    pub train: TrainConfig,
    pub benchmark: BenchmarkSection,
    /// Column-name embeddings for STVAEM signatures (JSON map).
    pub column_embeddings: Option<PathBuf>,
    /// Dotted keys applied after the rest of the file.
    pub overrides: BTreeMap<String, Value>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            seed: 0,
            workers: 0,
            split: SplitConfig::default(),
            cleaning: CleaningConfig::default(),
            model: ModelSpec::default(),
            pretrain: PretrainSection::default(),
            train: TrainConfig::default(),
            benchmark: BenchmarkSection::default(),
            column_embeddings: None,
            overrides: BTreeMap::new(),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Recursively merges `patch` into `base`. Objects merge key by key,
/// everything else replaces.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Flag values are JSON when they parse as JSON and strings otherwise.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Sets `a.b.c` in `root`. The path must name an existing setting.
fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let Value::Object(map) = cur else {
            return Err(usage(format!("`{key}`: `{}` is not a section", parts[..i].join("."))));
        };
        let Some(next) = map.get_mut(*part) else {
            return Err(usage(format!("unknown setting `{key}`")));
        };
        cur = next;
    }
    *cur = value;
    Ok(())
}

impl RunConfig {
    /// Defaults, then `file`, then the file's overrides, then `flags`.
    pub fn resolve(file: Option<&Path>, flags: &[(String, Value)]) -> Result<Self> {
        let mut value = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        let mut overrides = Map::new();
        if let Some(path) = file {
            let mut doc: Value = crate::io::read_json(path)?;
            if let Some(Value::Object(o)) = doc.as_object_mut().and_then(|m| m.remove("overrides")) {
                overrides = o;
            }
            merge(&mut value, doc);
        }
        for (k, v) in overrides {
            set_path(&mut value, &k, v)?;
        }
        for (k, v) in flags {
            set_path(&mut value, k, v.clone())?;
        }
        let config: RunConfig = serde_json::from_value(value).map_err(|e| usage(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |e: tabfm_core::Error| usage(format!("invalid configuration: {e}"));
        self.cleaning.validate().map_err(invalid)?;
        self.split_spec(self.seed).validate().map_err(invalid)?;
        if self.pretrain.iterations == 0 {
            return Err(usage("pretrain.iterations must be at least 1"));
        }
        if self.benchmark.methods.is_empty() {
            return Err(usage("benchmark.methods is empty"));
        }
        if !(0.0..1.0).contains(&self.train.val_fraction) {
            return Err(usage("train.val_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn split_spec(&self, seed: u64) -> SplitSpec {
        let [a, b, c] = self.split.ratios;
        match self.split.mode {
            SplitKind::Random => SplitSpec::random((a, b, c), seed),
            SplitKind::Domain => SplitSpec::domain((a, b, c), seed, self.split.k),
        }
    }

    pub fn spec_for(&self, kind: ModelKind) -> ModelSpec {
        ModelSpec { kind, ..self.model.clone() }
    }

    /// SHA-256 of the configuration without the paths and worker count,
    /// which do not change any output.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        c.workers = 0;
        c.split.embeddings = None;
        c.column_embeddings = None;
        c.overrides.clear();
        sha256_hex(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn work(&self, sub: &str) -> PathBuf {
        self.paths.work_dir.join(sub)
    }
}

/// Splits `--section.key=value` flags from the rest of the arguments.
/// Dotted flags without `=` take the next argument as their value.
pub fn extract_dotted(args: Vec<String>) -> Result<(Vec<String>, Vec<(String, Value)>)> {
    let mut rest = Vec::new();
    let mut dotted = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let Some(body) = arg.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, value) = match body.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (body.to_string(), None),
        };
        if !key.contains('.') {
            rest.push(arg);
            continue;
        }
        let value = match value {
            Some(v) => v,
            None => it.next().ok_or_else(|| usage(format!("--{key} needs a value")))?,
        };
        dotted.push((key, parse_value(&value)));
    }
    Ok((rest, dotted))
}
