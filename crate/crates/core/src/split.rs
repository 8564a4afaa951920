//! Corpus splitting into pretraining / validation / test parts.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::kmeans;
use crate::rng;
use crate::table::Table;

pub const KMEANS_MAX_ITER: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitMode {
    Random,
    Domain { k: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// (train, val, test) fractions.
    pub ratios: (f64, f64, f64),
    pub seed: u64,
    pub mode: SplitMode,
}

impl SplitSpec {
    pub fn random(ratios: (f64, f64, f64), seed: u64) -> Self {
        Self { ratios, seed, mode: SplitMode::Random }
    }

    pub fn domain(ratios: (f64, f64, f64), seed: u64, k: usize) -> Self {
        Self { ratios, seed, mode: SplitMode::Domain { k } }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, c) = self.ratios;
        if !(a > 0.0 && b > 0.0 && c > 0.0) {
            return Err(Error::InvalidArgument("every split ratio must be positive".into()));
        }
        if (a + b + c - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(alloc::format!("split ratios sum to {}", a + b + c)));
        }
        if let SplitMode::Domain { k } = self.mode {
            if k == 0 {
                return Err(Error::InvalidArgument("domain split needs k >= 1".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
    pub provenance: SplitSpec,
    /// Table name to cluster id, domain splits only.
    pub cluster_assignments: Option<BTreeMap<String, usize>>,
}

impl DatasetSplit {
    pub fn parts(&self) -> [(&'static str, &[String]); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }

    /// Checks that the three parts partition `corpus` and, for domain
    /// splits, that no cluster straddles two parts.
    pub fn check_partition(&self, corpus: &[String]) -> Result<()> {
        let mut seen = BTreeSet::new();
        for (_, part) in self.parts() {
            for id in part {
                if !seen.insert(id.as_str()) {
                    return Err(Error::InvalidArgument(alloc::format!("`{id}` appears in more than one part")));
                }
            }
        }
        let all: BTreeSet<&str> = corpus.iter().map(String::as_str).collect();
        if seen != all {
            return Err(Error::InvalidArgument("split parts do not cover the corpus exactly".into()));
        }
        if let Some(clusters) = &self.cluster_assignments {
            let mut owner: BTreeMap<usize, &str> = BTreeMap::new();
            for (name, part) in self.parts() {
                for id in part {
                    let c = *clusters.get(id).ok_or_else(|| Error::MissingEmbedding(id.clone()))?;
                    if *owner.entry(c).or_insert(name) != name {
                        return Err(Error::InvalidArgument(alloc::format!("cluster {c} straddles parts")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn table_ids(corpus: &[Table]) -> Result<Vec<String>> {
    let ids: Vec<String> = corpus.iter().map(|t| t.name.clone()).collect();
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::InvalidArgument("corpus table names must be unique".into()));
    }
    Ok(ids)
}

fn non_empty(split: DatasetSplit) -> Result<DatasetSplit> {
    for (name, part) in split.parts() {
        if part.is_empty() {
            return Err(Error::EmptySplitPart(name));
        }
    }
    Ok(split)
}

/// Seeded shuffle, then cut: `floor(train·n)` tables for train, `floor(val·n)`
/// for val, the remainder for test.
pub fn random_split(corpus: &[Table], spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let ids = table_ids(corpus)?;
    random_split_ids(&ids, spec)
}

pub fn random_split_ids(ids: &[String], spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    if ids.len() < 3 {
        return Err(Error::InvalidArgument(alloc::format!("need at least 3 tables, got {}", ids.len())));
    }
    let n = ids.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, "split"));
    let n_train = libm::floor(spec.ratios.0 * n as f64 + 1e-9) as usize;
    let n_val = libm::floor(spec.ratios.1 * n as f64 + 1e-9) as usize;
    let take = |r: core::ops::Range<usize>| order[r].iter().map(|&i| ids[i].clone()).collect::<Vec<_>>();
    non_empty(DatasetSplit {
        train: take(0..n_train),
        val: take(n_train..(n_train + n_val).min(n)),
        test: take((n_train + n_val).min(n)..n),
        provenance: *spec,
        cluster_assignments: None,
    })
}

/// Clusters table-name embeddings with k-means and assigns whole clusters to
/// parts: clusters are shuffled, ordered largest first, and each goes to the
/// part furthest below its target size.
pub fn domain_split(corpus: &[Table], embeddings: &BTreeMap<String, Vec<f64>>, spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let SplitMode::Domain { k } = spec.mode else {
        return Err(Error::InvalidArgument("domain_split needs a domain split spec".into()));
    };
    let ids = table_ids(corpus)?;
    if k > ids.len() {
        return Err(Error::InvalidArgument(alloc::format!("k = {k} exceeds corpus size {}", ids.len())));
    }
    let vectors = ids
        .iter()
        .map(|id| embeddings.get(id).cloned().ok_or_else(|| Error::MissingEmbedding(id.clone())))
        .collect::<Result<Vec<_>>>()?;
    let clustering = kmeans(&vectors, k, rng::derive_seed(spec.seed, "kmeans"), KMEANS_MAX_ITER)?;

    let mut members: Vec<Vec<usize>> = alloc::vec![Vec::new(); k];
    for (i, &c) in clustering.assignments.iter().enumerate() {
        members[c].push(i);
    }
    let mut cluster_order: Vec<usize> = (0..k).filter(|&c| !members[c].is_empty()).collect();
    cluster_order.shuffle(&mut rng::stream(spec.seed, "split"));
    cluster_order.sort_by_key(|&c| core::cmp::Reverse(members[c].len()));

    let n = ids.len() as f64;
    let targets = [spec.ratios.0 * n, spec.ratios.1 * n, spec.ratios.2 * n];
    let mut parts: [Vec<String>; 3] = Default::default();
    for c in cluster_order {
        let mut best = 0;
        for p in 1..3 {
            if targets[p] - parts[p].len() as f64 > targets[best] - parts[best].len() as f64 {
                best = p;
            }
        }
        parts[best].extend(members[c].iter().map(|&i| ids[i].clone()));
    }
    let [train, val, test] = parts;
    let clusters = ids.iter().cloned().zip(clustering.assignments.iter().copied()).collect();
    non_empty(DatasetSplit { train, val, test, provenance: *spec, cluster_assignments: Some(clusters) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartStats {
    pub part: String,
    pub tables: usize,
    pub avg_columns: f64,
    pub avg_rows: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub parts: Vec<PartStats>,
    pub total: PartStats,
}

fn stats_of(part: &str, tables: &[&Table]) -> PartStats {
    let n = tables.len();
    let avg = |f: fn(&Table) -> usize| if n == 0 { 0.0 } else { tables.iter().map(|t| f(t) as f64).sum::<f64>() / n as f64 };
    PartStats { part: part.into(), tables: n, avg_columns: avg(Table::n_cols), avg_rows: avg(Table::n_rows) }
}

/// Per-part table counts and mean column / row counts.
pub fn dataset_stats(split: &DatasetSplit, corpus: &[Table]) -> Result<SplitStats> {
    let by_name: BTreeMap<&str, &Table> = corpus.iter().map(|t| (t.name.as_str(), t)).collect();
    let mut parts = Vec::new();
    let mut all = Vec::new();
    for (name, ids) in split.parts() {
        let tables = ids
            .iter()
            .map(|id| by_name.get(id.as_str()).copied().ok_or_else(|| Error::DanglingTable(id.clone())))
            .collect::<Result<Vec<_>>>()?;
        all.extend(tables.iter().copied());
        parts.push(stats_of(name, &tables));
    }
    Ok(SplitStats { parts, total: stats_of("all", &all) })
}
