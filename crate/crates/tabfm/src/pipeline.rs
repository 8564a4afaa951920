//! Commands and the benchmark grid.
//!
//! Everything lives under the work directory:
//! `cleaned/` tables with schema sidecars, `splits/` manifests,
//! `checkpoints/`, `samples/` and `reports/`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tabfm_core::clean::{clean_table, CleaningReport, ColumnAction, TableVerdict};
use tabfm_core::embedding::name_embedding;
use tabfm_core::eval::{build_leaderboard, histograms, leaderboard_csv, leaderboard_text, table_report, Histogram, Regime, ReportKey, TableReport};
use tabfm_core::models::ModelKind;
use tabfm_core::rng;
use tabfm_core::split::{dataset_stats, domain_split, random_split, DatasetSplit, SplitStats};
use tabfm_core::training::{finetune, pretrain, train_scratch, AnyModel, Env, ModelCheckpoint, PretrainConfig, StopReason, TrainConfig, TrainLog};
use tabfm_core::{ColumnKind, Table};

use crate::checkpoint;
use crate::config::{Part, RunConfig, SplitKind};
use crate::error::{CliError, Result};
use crate::io::{self, OutputProvenance};

pub const CLEANED: &str = "cleaned";
pub const SPLITS: &str = "splits";
pub const CHECKPOINTS: &str = "checkpoints";
pub const SAMPLES: &str = "samples";
pub const REPORTS: &str = "reports";

/// What a command did: lines for the terminal and whether a wall-clock
/// budget cut training short.
#[derive(Debug, Default)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub budget_exceeded: bool,
}

impl Outcome {
    fn say(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }
}

pub struct Runner {
    pub config: RunConfig,
    config_hash: String,
    column_embeddings: Option<BTreeMap<String, Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub files: usize,
    pub failed: usize,
    pub kept: usize,
    pub discarded: usize,
    pub columns_dropped: usize,
    pub cells_imputed: usize,
    pub rows_total: usize,
    pub rows_mean: f64,
    pub columns_mean: f64,
    pub numerical_columns: usize,
    pub categorical_columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningLog {
    pub provenance: OutputProvenance,
    pub reports: Vec<CleaningReport>,
    /// File name and error for inputs that could not be read.
    pub failures: Vec<(String, String)>,
    pub stats: CorpusStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub provenance: OutputProvenance,
    pub split: DatasetSplit,
    pub stats: SplitStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub provenance: OutputProvenance,
    pub key: ReportKey,
    pub report: TableReport,
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub stop: StopReason,
    pub checkpoint: String,
    pub checkpoint_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub provenance: OutputProvenance,
    pub report: TableReport,
    pub histograms: Vec<Histogram>,
}

struct Trained {
    ckpt: ModelCheckpoint,
    log: TrainLog,
}

fn missing(what: &str, path: &Path, hint: &str) -> CliError {
    CliError::Data(format!("missing {what} {} ({hint})", path.display()))
}

fn budget_hit(log: &TrainLog) -> bool {
    log.stop == StopReason::Budget
}

impl Runner {
    pub fn new(config: RunConfig) -> Result<Self> {
        let column_embeddings = match &config.column_embeddings {
            Some(p) => Some(io::read_embeddings(p)?),
            None => None,
        };
        Ok(Self { config_hash: config.hash(), config, column_embeddings })
    }

    fn provenance(&self, command: &str) -> OutputProvenance {
        OutputProvenance {
            command: command.to_string(),
            config_hash: self.config_hash.clone(),
            seed: self.config.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    fn write_csv(&self, path: &Path, bytes: &[u8], command: &str) -> Result<()> {
        io::write_bytes(path, bytes)?;
        io::write_provenance(path, &self.provenance(command))
    }

    fn with_env<T>(&self, f: impl FnOnce(&Env) -> T) -> T {
        let start = Instant::now();
        let clock = move || start.elapsed().as_secs_f64();
        let env = Env { clock: Some(&clock), column_embeddings: self.column_embeddings.as_ref() };
        f(&env)
    }

    fn task_config(&self, table: &str) -> TrainConfig {
        TrainConfig { seed: rng::derive_seed(self.config.seed, &format!("task/{table}")), ..self.config.train.clone() }
    }

    fn cleaned_dir(&self) -> PathBuf {
        self.config.work(CLEANED)
    }

    fn manifest_path(&self) -> PathBuf {
        self.config.work(SPLITS).join(format!("{}.json", self.config.split.mode.name()))
    }

    fn pretrained_path(&self, kind: ModelKind) -> PathBuf {
        self.config.work(CHECKPOINTS).join(format!("pretrained-{}-{kind}.ckpt", self.config.split.mode.name()))
    }

    fn loss_path(&self, stem: &str) -> PathBuf {
        self.config.work(REPORTS).join("loss").join(format!("{stem}.csv"))
    }

    /// ingest, schema inference and cleaning over every CSV in `corpus`.
    pub fn clean(&self, corpus: &Path, out_dir: &Path) -> Result<Outcome> {
        if !corpus.is_dir() {
            return Err(missing("corpus directory", corpus, "check paths.corpus_dir"));
        }
        let files = io::csv_files(corpus)?;
        if files.is_empty() {
            return Err(CliError::Data(format!("no CSV files in {}", corpus.display())));
        }
        let mut out = Outcome::default();
        let mut reports = Vec::new();
        let mut failures = Vec::new();
        let mut kept = Vec::new();
        for path in &files {
            let name = io::table_name(path);
            let table = match io::ingest(path) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("warning: skipping {}: {e}", path.display());
                    failures.push((name, e.to_string()));
                    continue;
                }
            };
            let (cleaned, report) = clean_table(&table, &self.config.cleaning);
            let target = out_dir.join(format!("{name}.csv"));
            match cleaned {
                Some(t) => {
                    io::write_table(&target, &t)?;
                    io::write_provenance(&target, &self.provenance("clean"))?;
                    kept.push(t);
                }
                None => {
                    for stale in [target.clone(), io::schema_path(&target), io::provenance_path(&target)] {
                        if stale.exists() {
                            fs::remove_file(&stale).map_err(CliError::io(&stale))?;
                        }
                    }
                }
            }
            if let TableVerdict::Discarded { why } = report.verdict {
                out.say(format!("{name}: discarded ({why:?})"));
            } else {
                out.say(format!("{name}: kept, {} column(s) dropped", report.dropped()));
            }
            reports.push(report);
        }
        if reports.is_empty() {
            return Err(CliError::Data(format!("none of the {} CSV files in {} could be read", files.len(), corpus.display())));
        }
        let stats = corpus_stats(files.len(), failures.len(), &reports, &kept);
        out.say(format!("{} of {} tables kept", stats.kept, stats.files));
        let log = CleaningLog { provenance: self.provenance("clean"), reports, failures, stats };
        io::write_json(&self.config.work(REPORTS).join("cleaning.json"), &log)?;
        io::write_json(&self.config.work(REPORTS).join("corpus_stats.json"), &log.stats)?;
        Ok(out)
    }

    fn load_dir(&self, dir: &Path) -> Result<Vec<Table>> {
        if !dir.is_dir() {
            return Err(missing("cleaned directory", dir, "run `tabfm clean` first"));
        }
        let files = io::csv_files(dir)?;
        if files.is_empty() {
            return Err(CliError::Data(format!("no cleaned tables in {}", dir.display())));
        }
        files.iter().map(|p| io::read_table(p)).collect()
    }

    fn load_named(&self, names: &[String]) -> Result<Vec<Table>> {
        let dir = self.cleaned_dir();
        names
            .iter()
            .map(|n| {
                let p = dir.join(format!("{n}.csv"));
                if !p.exists() {
                    return Err(missing("cleaned table", &p, "the split manifest and cleaned/ disagree"));
                }
                io::read_table(&p)
            })
            .collect()
    }

    /// A table given either as a CSV path or by name in `cleaned/`.
    pub fn resolve_table(&self, table: &str) -> Result<Table> {
        let path = Path::new(table);
        if path.extension().is_some_and(|e| e == "csv") && path.exists() {
            return io::read_table(path);
        }
        self.load_named(&[table.to_string()]).map(|mut v| v.remove(0))
    }

    fn table_embeddings(&self, corpus: &[Table]) -> Result<BTreeMap<String, Vec<f64>>> {
        match &self.config.split.embeddings {
            Some(p) => io::read_embeddings(p),
            None => corpus.iter().map(|t| Ok((t.name.clone(), name_embedding(&t.name, self.config.split.embedding_dim)?))).collect(),
        }
    }

    /// Partitions the cleaned corpus and writes `splits/<mode>.json`.
    pub fn split(&self, clean_dir: Option<&Path>) -> Result<(Manifest, Outcome)> {
        let dir = clean_dir.map_or_else(|| self.cleaned_dir(), Path::to_path_buf);
        let corpus = self.load_dir(&dir)?;
        let spec = self.config.split_spec(rng::derive_seed(self.config.seed, "split"));
        let split = match self.config.split.mode {
            SplitKind::Random => random_split(&corpus, &spec)?,
            SplitKind::Domain => domain_split(&corpus, &self.table_embeddings(&corpus)?, &spec)?,
        };
        let ids: Vec<String> = corpus.iter().map(|t| t.name.clone()).collect();
        split.check_partition(&ids)?;
        let stats = dataset_stats(&split, &corpus)?;
        let manifest = Manifest { provenance: self.provenance("split"), split, stats };
        let path = self.manifest_path();
        io::write_json(&path, &manifest)?;
        let mut out = Outcome::default();
        for (part, names) in manifest.split.parts() {
            out.say(format!("{part}: {} table(s)", names.len()));
        }
        out.say(format!("manifest written to {}", path.display()));
        Ok((manifest, out))
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let path = self.manifest_path();
        if !path.exists() {
            return Err(missing("split manifest", &path, "run `tabfm split` first"));
        }
        io::read_json(&path)
    }

    fn save_run(&self, stem: &str, path: &Path, run: &Trained) -> Result<String> {
        let sha = checkpoint::save(&run.ckpt, path, Some(&self.config_hash))?;
        self.write_csv(&self.loss_path(stem), run.log.to_csv().as_bytes(), "train")?;
        Ok(sha)
    }

    fn pretrain_kind(&self, kind: ModelKind, train: &[Table]) -> Result<Trained> {
        let config = PretrainConfig {
            model: self.config.spec_for(kind),
            iterations: self.config.pretrain.iterations,
            budget_secs: self.config.pretrain.budget_secs,
            seed: rng::derive_seed(self.config.seed, "pretrain"),
        };
        let (ckpt, log) = self.with_env(|env| pretrain(train, &config, env))?;
        Ok(Trained { ckpt, log })
    }

    /// Pretrains `kind` on the train part of the split.
    pub fn pretrain(&self, kind: ModelKind) -> Result<Outcome> {
        let manifest = self.manifest()?;
        let train = self.load_named(&manifest.split.train)?;
        let run = self.pretrain_kind(kind, &train)?;
        let path = self.pretrained_path(kind);
        let stem = format!("pretrained-{}-{kind}", self.config.split.mode.name());
        let sha = self.save_run(&stem, &path, &run)?;
        let mut out = Outcome { budget_exceeded: budget_hit(&run.log), ..Outcome::default() };
        out.say(format!("{} passes over {} table(s), stop: {:?}", run.log.records.len(), train.len(), run.log.stop));
        out.say(format!("{} {sha}", path.display()));
        Ok(out)
    }

    fn train_one(&self, kind: ModelKind, pretrained: Option<&ModelCheckpoint>, table: &Table) -> Result<Trained> {
        let config = self.task_config(&table.name);
        let (ckpt, log) = self.with_env(|env| match pretrained {
            Some(p) => finetune(p, kind, table, &config, env),
            None => train_scratch(&self.config.spec_for(kind), table, &config, env),
        })?;
        Ok(Trained { ckpt, log })
    }

    /// Fine-tunes a pretrained checkpoint on one table.
    pub fn finetune(&self, ckpt_path: &Path, table: &str, method: Option<ModelKind>) -> Result<Outcome> {
        let pre = checkpoint::load(ckpt_path)?;
        let kind = method.unwrap_or(pre.kind);
        let table = self.resolve_table(table)?;
        let run = self.train_one(kind, Some(&pre), &table)?;
        self.finish_single(&format!("finetuned-{kind}-{}", table.name), run)
    }

    /// Trains a fresh model on one table.
    pub fn train_scratch(&self, table: &str, method: ModelKind) -> Result<Outcome> {
        let table = self.resolve_table(table)?;
        let run = self.train_one(method, None, &table)?;
        self.finish_single(&format!("scratch-{method}-{}", table.name), run)
    }

    fn finish_single(&self, stem: &str, run: Trained) -> Result<Outcome> {
        let path = self.config.work(CHECKPOINTS).join(format!("{stem}.ckpt"));
        let sha = self.save_run(stem, &path, &run)?;
        let mut out = Outcome { budget_exceeded: budget_hit(&run.log), ..Outcome::default() };
        let last = run.log.records.last().map_or(f64::NAN, |r| r.train_loss);
        out.say(format!("{} epoch(s), final train loss {last:.6}, best epoch {:?}, stop: {:?}", run.log.records.len(), run.log.best_epoch, run.log.stop));
        out.say(format!("{} {sha}", path.display()));
        Ok(out)
    }

    fn draw(&self, ckpt: &ModelCheckpoint, rows: usize, seed: u64, name: &str) -> Result<Table> {
        let mut model = AnyModel::from_checkpoint(ckpt)?;
        let mut t = model.sample(rows, &mut rng::stream(seed, "sample"))?;
        t.name = name.to_string();
        Ok(t)
    }

    /// Draws `rows` synthetic rows into a CSV.
    pub fn sample(&self, ckpt_path: &Path, rows: usize, out_path: Option<&Path>) -> Result<Outcome> {
        let ckpt = checkpoint::load(ckpt_path)?;
        let stem = io::table_name(ckpt_path);
        let path = out_path.map_or_else(|| self.config.work(SAMPLES).join(format!("{stem}.csv")), Path::to_path_buf);
        let table = self.draw(&ckpt, rows, rng::derive_seed(self.config.seed, "sample"), &stem)?;
        self.write_csv(&path, &io::table_csv(&table)?, "sample")?;
        let mut out = Outcome::default();
        out.say(format!("{} row(s) written to {}", table.n_rows(), path.display()));
        Ok(out)
    }

    /// Scores a synthetic CSV against the real table it imitates.
    pub fn evaluate(&self, real: &Path, synthetic: &Path, out_path: Option<&Path>) -> Result<Outcome> {
        let real_t = io::read_table(real)?;
        let syn = io::read_table_with(synthetic, Some(&real_t.columns))?;
        let report = table_report(&real_t, &syn)?;
        let hist = histograms(&real_t, &syn, tabfm_core::eval::TREND_BINS)?;
        let path = out_path.map_or_else(|| self.config.work(REPORTS).join(format!("eval-{}.json", io::table_name(synthetic))), Path::to_path_buf);
        let mut out = Outcome::default();
        out.say(format!(
            "shape {:.4}, trend {}, overall {:.4}",
            report.shape,
            report.trend.map_or("n/a".to_string(), |t| format!("{t:.4}")),
            report.overall
        ));
        io::write_json(&path, &Evaluation { provenance: self.provenance("evaluate"), report, histograms: hist })?;
        out.say(format!("report written to {}", path.display()));
        Ok(out)
    }

    fn task_dir(&self, sub: &str) -> PathBuf {
        self.config.work(sub).join(self.config.split.mode.name())
    }

    fn run_task(&self, key: &ReportKey, kind: ModelKind, pretrained: Option<&ModelCheckpoint>, table: &Table) -> Result<TaskRecord> {
        let run = self.train_one(kind, pretrained, table)?;
        let stem = format!("{}-{}-{}", key.method, key.regime, key.table);
        let ckpt_path = self.task_dir(CHECKPOINTS).join(format!("{stem}.ckpt"));
        let sha = self.save_run(&format!("{}/{stem}", self.config.split.mode.name()), &ckpt_path, &run)?;
        let seed = self.task_config(&table.name).seed;
        let syn = self.draw(&run.ckpt, table.n_rows(), seed, &table.name)?;
        self.write_csv(&self.task_dir(SAMPLES).join(format!("{stem}.csv")), &io::table_csv(&syn)?, "benchmark")?;
        if syn.n_rows() == 0 {
            return Err(CliError::Data(format!("{stem}: the model produced no valid rows")));
        }
        let report = table_report(table, &syn)?;
        let record = TaskRecord {
            provenance: self.provenance("benchmark"),
            key: key.clone(),
            report,
            epochs: run.log.records.len(),
            best_epoch: run.log.best_epoch,
            stop: run.log.stop,
            checkpoint: relative(&self.config.paths.work_dir, &ckpt_path),
            checkpoint_sha256: sha,
        };
        io::write_json(&self.task_dir(REPORTS).join("tasks").join(format!("{stem}.json")), &record)?;
        Ok(record)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new().num_threads(self.config.workers).build().map_err(|e| CliError::Data(e.to_string()))
    }

    /// Pretrains every method, then fine-tunes and trains from scratch on
    /// each evaluation table, samples, scores and renders the leaderboard.
    pub fn benchmark(&self) -> Result<Outcome> {
        let mut out = Outcome::default();
        let manifest = if self.manifest_path().exists() { self.manifest()? } else { self.split(None)?.0 };
        let mut names = Vec::new();
        for part in &self.config.benchmark.parts {
            names.extend(match part {
                Part::Val => manifest.split.val.iter().cloned(),
                Part::Test => manifest.split.test.iter().cloned(),
            });
        }
        let eval_tables = self.load_named(&names)?;
        let train = self.load_named(&manifest.split.train)?;
        let methods = self.config.benchmark.methods.clone();
        let split = self.config.split.mode.name();
        let pool = self.pool()?;

        let pretrained: Vec<(ModelKind, Trained, String)> = pool.install(|| {
            methods
                .par_iter()
                .map(|&kind| {
                    let run = self.pretrain_kind(kind, &train)?;
                    let sha = self.save_run(&format!("pretrained-{split}-{kind}"), &self.pretrained_path(kind), &run)?;
                    Ok((kind, run, sha))
                })
                .collect::<Result<_>>()
        })?;
        let mut checksums: Vec<(String, String)> = Vec::new();
        for (kind, run, sha) in &pretrained {
            out.budget_exceeded |= budget_hit(&run.log);
            checksums.push((relative(&self.config.paths.work_dir, &self.pretrained_path(*kind)), sha.clone()));
        }

        let mut tasks = Vec::new();
        for (m, &kind) in methods.iter().enumerate() {
            for (t, table) in eval_tables.iter().enumerate() {
                for regime in [Regime::PretrainedFinetuned, Regime::Scratch] {
                    let key = ReportKey { split: split.to_string(), method: kind.name().to_string(), regime, table: table.name.clone() };
                    tasks.push((key, kind, m, t));
                }
            }
        }
        let records: Vec<TaskRecord> = pool.install(|| {
            tasks
                .par_iter()
                .map(|(key, kind, m, t)| {
                    let pre = (key.regime == Regime::PretrainedFinetuned).then(|| &pretrained[*m].1.ckpt);
                    self.run_task(key, *kind, pre, &eval_tables[*t])
                })
                .collect::<Result<_>>()
        })?;
        for r in &records {
            out.budget_exceeded |= r.stop == StopReason::Budget;
            checksums.push((r.checkpoint.clone(), r.checkpoint_sha256.clone()));
            out.say(format!("{} {} {}: overall {:.4}", r.key.method, r.key.regime, r.key.table, r.report.overall));
        }
        checksums.sort();
        let listing: String = checksums.iter().map(|(p, s)| format!("{s}  {p}\n")).collect();
        io::write_bytes(&self.config.work(REPORTS).join("checkpoints.sha256"), listing.as_bytes())?;
        let report = self.report()?;
        out.lines.extend(report.lines);
        Ok(out)
    }

    fn task_records(&self) -> Result<Vec<TaskRecord>> {
        let root = self.config.work(REPORTS);
        let mut files = Vec::new();
        if root.is_dir() {
            for entry in fs::read_dir(&root).map_err(CliError::io(&root))? {
                let tasks = entry.map_err(CliError::io(&root))?.path().join("tasks");
                if tasks.is_dir() {
                    for f in fs::read_dir(&tasks).map_err(CliError::io(&tasks))? {
                        let p = f.map_err(CliError::io(&tasks))?.path();
                        if p.extension().is_some_and(|e| e == "json") {
                            files.push(p);
                        }
                    }
                }
            }
        }
        if files.is_empty() {
            return Err(missing("task reports under", &root, "run `tabfm benchmark` first"));
        }
        files.sort();
        files.iter().map(|p| io::read_json(p)).collect()
    }

    /// Renders the leaderboard and per-column / per-pair delta exports from
    /// the task reports.
    pub fn report(&self) -> Result<Outcome> {
        let records = self.task_records()?;
        let pairs: Vec<(ReportKey, TableReport)> = records.iter().map(|r| (r.key.clone(), r.report.clone())).collect();
        let board = build_leaderboard(&pairs)?;
        let dir = self.config.work(REPORTS);
        self.write_csv(&dir.join("leaderboard.csv"), leaderboard_csv(&board).as_bytes(), "report")?;
        let text = leaderboard_text(&board);
        io::write_bytes(&dir.join("leaderboard.txt"), text.as_bytes())?;
        self.write_csv(&dir.join("deltas").join("columns.csv"), column_deltas(&records)?.as_slice(), "report")?;
        self.write_csv(&dir.join("deltas").join("pairs.csv"), pair_deltas(&records)?.as_slice(), "report")?;
        let mut out = Outcome::default();
        out.lines.extend(text.lines().map(str::to_string));
        Ok(out)
    }
}

fn relative(base: &Path, path: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().replace('\\', "/")
}

fn key_fields(k: &ReportKey) -> [String; 4] {
    [k.split.clone(), k.method.clone(), k.regime.to_string(), k.table.clone()]
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let err = |source| CliError::Csv { path: PathBuf::from("deltas"), source };
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(&r).map_err(err)?;
    }
    w.into_inner().map_err(|e| CliError::Data(e.to_string()))
}

fn metric_name<T: Serialize>(m: &T) -> String {
    serde_json::to_value(m).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

/// One line per column score; `delta` is `1 − score`.
fn column_deltas(records: &[TaskRecord]) -> Result<Vec<u8>> {
    let rows = records
        .iter()
        .flat_map(|r| {
            r.report.columns.iter().map(move |c| {
                let mut row = key_fields(&r.key).to_vec();
                row.extend([c.column.clone(), metric_name(&c.metric), format!("{:.6}", c.score), format!("{:.6}", 1.0 - c.score)]);
                row
            })
        })
        .collect();
    csv_bytes(&["split", "method", "regime", "table", "column", "metric", "score", "delta"], rows)
}

fn pair_deltas(records: &[TaskRecord]) -> Result<Vec<u8>> {
    let rows = records
        .iter()
        .flat_map(|r| {
            r.report.pairs.iter().map(move |p| {
                let mut row = key_fields(&r.key).to_vec();
                row.extend([p.left.clone(), p.right.clone(), metric_name(&p.metric), format!("{:.6}", p.score), format!("{:.6}", 1.0 - p.score)]);
                row
            })
        })
        .collect();
    csv_bytes(&["split", "method", "regime", "table", "left", "right", "metric", "score", "delta"], rows)
}

fn corpus_stats(files: usize, failed: usize, reports: &[CleaningReport], kept: &[Table]) -> CorpusStats {
    let n = kept.len();
    let mean = |f: &dyn Fn(&Table) -> usize| if n == 0 { 0.0 } else { kept.iter().map(|t| f(t) as f64).sum::<f64>() / n as f64 };
    let count_kind = |k: ColumnKind| kept.iter().map(|t| t.columns.iter().filter(|c| c.kind == k).count()).sum();
    CorpusStats {
        files,
        failed,
        kept: n,
        discarded: reports.len() - n,
        columns_dropped: reports.iter().map(CleaningReport::dropped).sum(),
        cells_imputed: reports
            .iter()
            .flat_map(|r| &r.columns)
            .map(|c| if let ColumnAction::Imputed { count } = c.action { count } else { 0 })
            .sum(),
        rows_total: kept.iter().map(Table::n_rows).sum(),
        rows_mean: mean(&Table::n_rows),
        columns_mean: mean(&Table::n_cols),
        numerical_columns: count_kind(ColumnKind::Numerical),
        categorical_columns: count_kind(ColumnKind::Categorical),
    }
}
