//! Trains a matrix of configurations over several seeds and tabulates test AUC.
//!
//! Matrix file: base `key = value` lines (including `seeds = 0, 1, 2`), then one
//! `[name]` section per configuration holding its overrides.

use std::fmt::Write as _;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::auc::SliceAuc;
use super::{evaluate_test, LONGTAIL_THRESHOLDS};
use crate::error::{Error, Result};
use crate::pipeline::{key_values, train, Dataset, Prepared, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationMatrix {
    pub variants: Vec<(String, TrainConfig)>,
    pub seeds: Vec<u64>,
}

impl AblationMatrix {
    pub fn parse(text: &str) -> Result<Self> {
        let mut base: Vec<(String, String)> = Vec::new();
        let mut sections: Vec<(String, Vec<(String, String)>)> = Vec::new();
        let mut seeds = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let name = name.trim();
                if name.is_empty() || sections.iter().any(|(s, _)| s == name) {
                    return Err(Error::Config(format!("line {}: bad or duplicate section {name:?}", n + 1)));
                }
                sections.push((name.to_string(), Vec::new()));
                continue;
            }
            for (k, v) in key_values(line)? {
                if k == "seeds" {
                    if !sections.is_empty() {
                        return Err(Error::Config("`seeds` belongs before the first section".into()));
                    }
                    seeds = Some(parse_seeds(&v)?);
                } else {
                    match sections.last_mut() {
                        Some((_, kv)) => kv.push((k, v)),
                        None => base.push((k, v)),
                    }
                }
            }
        }
        if sections.is_empty() {
            return Err(Error::Usage("ablation matrix has no [config] sections".into()));
        }
        let mut variants = Vec::with_capacity(sections.len());
        for (name, overrides) in sections {
            let mut config = TrainConfig::default();
            for (k, v) in base.iter().chain(&overrides) {
                config.set(k, v)?;
            }
            config.validate()?;
            variants.push((name, config));
        }
        Ok(AblationMatrix {
            variants,
            seeds: seeds.unwrap_or_else(|| vec![0]),
        })
    }
}

fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let seeds: Vec<u64> = v
        .split(',')
        .map(|s| s.trim().parse().map_err(|_| Error::Config(format!("bad seed {s:?}"))))
        .collect::<Result<_>>()?;
    if seeds.is_empty() {
        return Err(Error::Config("no seeds".into()));
    }
    Ok(seeds)
}

/// Hash of the resolved configuration with the seed left out.
pub fn fingerprint(config: &TrainConfig) -> String {
    let text: String = config
        .to_text()
        .lines()
        .filter(|l| !l.starts_with("seed "))
        .map(|l| format!("{l}\n"))
        .collect();
    Sha256::digest(text.as_bytes())[..6].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub name: String,
    pub fingerprint: String,
    pub seed: u64,
    pub test_auc: Option<f64>,
    pub longtail: Vec<SliceAuc>,
    pub wall_secs: f64,
    /// Set when training or evaluation failed.
    pub error: Option<String>,
}

/// Trains every variant for every seed; failures are recorded, not propagated.
pub fn run_ablation(matrix: &AblationMatrix, dataset: &Dataset) -> Vec<AblationResult> {
    run_ablation_with(matrix, dataset, |_| {})
}

pub fn run_ablation_with<F: FnMut(&AblationResult)>(
    matrix: &AblationMatrix,
    dataset: &Dataset,
    mut on_result: F,
) -> Vec<AblationResult> {
    let mut out = Vec::new();
    for (name, config) in &matrix.variants {
        let prepared = Prepared::new(dataset.clone(), config);
        for &seed in &matrix.seeds {
            let config = TrainConfig { seed, ..config.clone() };
            let start = Instant::now();
            let outcome = prepared.as_ref().map_err(Error::to_string).and_then(|p| {
                train(&config, p)
                    .and_then(|o| evaluate_test(&o.best, p))
                    .map_err(|e| e.to_string())
            });
            let mut result = AblationResult {
                name: name.clone(),
                fingerprint: fingerprint(&config),
                seed,
                test_auc: None,
                longtail: Vec::new(),
                wall_secs: start.elapsed().as_secs_f64(),
                error: None,
            };
            match outcome {
                Ok(report) => {
                    result.test_auc = report.auc.value();
                    result.longtail = report.slices.iter().map(|s| s.1).collect();
                    if result.test_auc.is_none() {
                        result.error = Some("test split lacks a class".into());
                    }
                }
                Err(e) => result.error = Some(e),
            }
            on_result(&result);
            out.push(result);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub name: String,
    pub fingerprint: String,
    /// Successful runs.
    pub runs: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub longtail_mean: Vec<Option<f64>>,
    pub longtail_std: Vec<Option<f64>>,
}

/// Mean and sample standard deviation over finite values.
pub fn mean_std(values: &[f64]) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (Some(mean), Some(std))
}

pub fn summarize(results: &[AblationResult]) -> Vec<Summary> {
    let mut names: Vec<&str> = Vec::new();
    for r in results {
        if !names.contains(&r.name.as_str()) {
            names.push(&r.name);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&AblationResult> = results.iter().filter(|r| r.name == name).collect();
            let aucs: Vec<f64> = rows.iter().filter_map(|r| r.test_auc).collect();
            let (mean, std) = mean_std(&aucs);
            let (mut longtail_mean, mut longtail_std) = (Vec::new(), Vec::new());
            for j in 0..LONGTAIL_THRESHOLDS.len() {
                let vals: Vec<f64> = rows.iter().filter_map(|r| r.longtail.get(j).and_then(|s| s.value())).collect();
                let (m, s) = mean_std(&vals);
                longtail_mean.push(m);
                longtail_std.push(s);
            }
            Summary {
                name: name.to_string(),
                fingerprint: rows[0].fingerprint.clone(),
                runs: aucs.len(),
                mean,
                std,
                longtail_mean,
                longtail_std,
            }
        })
        .collect()
}

pub const TABLE_HEADER: &str = "config\tfingerprint\tseed\ttest_auc\tauc_k3\tauc_k5\tauc_k10\twall_secs\tstatus";

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.6}"))
}

/// Tab-separated table: one row per (config, seed), then `mean` and `std` rows per config.
pub fn format_table(results: &[AblationResult]) -> String {
    let mut out = format!("{TABLE_HEADER}\n");
    for r in results {
        let slices: Vec<String> = (0..LONGTAIL_THRESHOLDS.len())
            .map(|j| cell(r.longtail.get(j).and_then(|s| s.value())))
            .collect();
        let status = r.error.as_deref().map_or("ok".to_string(), |e| format!("failed: {}", e.replace(['\t', '\n'], " ")));
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{:.3}\t{}",
            r.name,
            r.fingerprint,
            r.seed,
            cell(r.test_auc),
            slices.join("\t"),
            r.wall_secs,
            status
        );
    }
    for s in summarize(results) {
        for (label, auc, slices) in [("mean", s.mean, &s.longtail_mean), ("std", s.std, &s.longtail_std)] {
            let slices: Vec<String> = slices.iter().map(|&v| cell(v)).collect();
            let _ = writeln!(
                out,
                "{}\t{}\t{label}\t{}\t{}\t\t{} runs",
                s.name,
                s.fingerprint,
                cell(auc),
                slices.join("\t"),
                s.runs
            );
        }
    }
    out
}
