#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use tabfm_core::rng;

/// `tabfm` invoked in-process; returns the exit code.
pub fn tabfm(args: &[&str]) -> i32 {
    let mut argv = vec!["tabfm".to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    tabfm::cli::run(argv)
}

/// Flags that keep training to a fraction of a second per table.
pub const FAST: &[&str] = &[
    "--model.size=small",
    "--model.modes=3",
    "--model.vae.hidden=[16,16]",
    "--model.vae.latent=4",
    "--model.vae.batch_size=32",
    "--model.ctgan.generator_hidden=[16,16]",
    "--model.ctgan.critic_hidden=[16,16]",
    "--model.ctgan.batch_size=20",
    "--model.ctgan.pac=2",
    "--pretrain.iterations=2",
    "--train.epochs=3",
];

pub fn with_fast<'a>(args: &[&'a str]) -> Vec<&'a str> {
    let mut v = args.to_vec();
    v.extend_from_slice(FAST);
    v
}

/// Two related numerics and a category derived from the first.
pub fn related_csv(n: usize, shift: f64, seed: u64) -> String {
    let mut r = rng::seeded(seed);
    let mut s = String::from("x,y,c\n");
    for _ in 0..n {
        let k = r.gen_range(0..2usize);
        let x = shift + 4.0 * k as f64 + 0.5 * rng::standard_normal(&mut r);
        let y = 0.5 * x + 0.3 * rng::standard_normal(&mut r);
        writeln!(s, "{x:.4},{y:.4},{}", ["lo", "hi"][k]).unwrap();
    }
    s
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    fs::create_dir_all(dir).unwrap();
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Five tables; `tiny` has too few rows and `keys` keeps only one column.
pub fn mixed_corpus(dir: &Path) {
    write(dir, "alpha.csv", &related_csv(60, 0.0, 1));
    write(dir, "beta.csv", &related_csv(60, 1.0, 2));
    let mut gamma = String::from("id,score,group,note\n");
    for i in 0..40 {
        let note = if i % 3 == 0 { "" } else { "ok" };
        writeln!(gamma, "{i},{},{},{note}", (i * 7 % 13) as f64 / 2.0, ["a", "b", "c"][i % 3]).unwrap();
    }
    write(dir, "gamma.csv", &gamma);
    write(dir, "tiny.csv", "a,b\n1,x\n2,y\n3,x\n");
    let mut keys = String::from("user_id,when,v\n");
    for i in 0..30 {
        writeln!(keys, "{i},2021-03-{:02},{}", i % 28 + 1, i % 4).unwrap();
    }
    write(dir, "keys.csv", &keys);
}

/// `n` structurally similar tables.
pub fn similar_corpus(dir: &Path, n: usize, rows: usize) {
    for i in 0..n {
        write(dir, &format!("t{i}.csv"), &related_csv(rows, 0.3 * i as f64, 100 + i as u64));
    }
}

pub fn csv_names(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    v.sort();
    v
}
