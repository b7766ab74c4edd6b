//! Full-model gradient check: analytic backward against central finite differences.

use std::borrow::Borrow;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::network::{batch_loss_and_gradient, instance_rng, log_loss, Mode};
use super::params::{ModelConfig, PigatParams};
use crate::error::Result;
use crate::features::EncodedInstance;
use crate::fixtures::{toy_batch, toy_schema};
use crate::numeric::relative_error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckOptions {
    pub step: f64,
    /// Denominator floor of the relative error.
    pub floor: f64,
    pub tolerance: f64,
    /// Coordinates probed per tensor; smaller tensors are probed exhaustively.
    pub coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        GradcheckOptions {
            step: 1e-5,
            floor: 1e-6,
            tolerance: 1e-4,
            coords_per_tensor: 6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    /// Probes whose ±step crossed an activation kink or the probability clamp.
    pub skipped: usize,
    pub max_rel: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn max_rel(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel() < self.tolerance && self.checked() > 0
    }

    pub fn checked(&self) -> usize {
        self.tensors.iter().map(|t| t.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.tensors.iter().map(|t| t.skipped).sum()
    }

    /// Worst relative error per parameter group (tensor name up to the first dot).
    pub fn groups(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = Vec::new();
        for t in &self.tensors {
            let group = t.name.split('.').next().unwrap_or(&t.name).to_string();
            match out.iter_mut().find(|(g, _)| *g == group) {
                Some(entry) => entry.1 = entry.1.max(t.max_rel),
                None => out.push((group, t.max_rel)),
            }
        }
        out
    }

    /// Folds another report in, keeping the worst figures per tensor.
    pub fn merge(&mut self, other: &GradcheckReport) {
        for t in &other.tensors {
            match self.tensors.iter_mut().find(|m| m.name == t.name) {
                Some(m) => {
                    m.checked += t.checked;
                    m.skipped += t.skipped;
                    m.max_rel = m.max_rel.max(t.max_rel);
                    m.max_abs = m.max_abs.max(t.max_abs);
                }
                None => self.tensors.push(t.clone()),
            }
        }
    }
}

fn loss_and_signature<B: Borrow<EncodedInstance>>(params: &PigatParams, batch: &[B], seed: u64) -> Result<(f64, Vec<bool>)> {
    let mut probs = Vec::with_capacity(batch.len());
    let mut labels = Vec::with_capacity(batch.len());
    let mut sig = Vec::new();
    for (i, inst) in batch.iter().enumerate() {
        let inst = inst.borrow();
        let cache = params.forward(inst, Mode::Train, &mut instance_rng(seed, i))?;
        probs.push(cache.probability);
        labels.push(inst.label);
        sig.extend(cache.kink_signature());
    }
    Ok((log_loss(&probs, &labels)?, sig))
}

/// Checks every trainable tensor of `params` on the train-mode loss of `batch`.
pub fn gradcheck<B: Borrow<EncodedInstance>>(
    params: &PigatParams,
    batch: &[B],
    dropout_seed: u64,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    gradcheck_with(params, batch, dropout_seed, opts, |_| {})
}

/// As [`gradcheck`], with `tamper` applied to the analytic gradient before comparison.
pub fn gradcheck_with<B: Borrow<EncodedInstance>, F: FnOnce(&mut PigatParams)>(
    params: &PigatParams,
    batch: &[B],
    dropout_seed: u64,
    opts: &GradcheckOptions,
    tamper: F,
) -> Result<GradcheckReport> {
    let mut grads = params.zeros_like();
    batch_loss_and_gradient(params, batch, dropout_seed, &mut grads)?;
    tamper(&mut grads);
    let (_, base_sig) = loss_and_signature(params, batch, dropout_seed)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = params.clone();
    let analytic = grads.named_tensors();
    let mut tensors = Vec::new();
    for (t, (name, trains, grad)) in analytic.iter().enumerate() {
        if !trains {
            continue;
        }
        let coords = probe_coordinates(grad.data(), opts.coords_per_tensor, &mut rng);
        let mut check = TensorCheck {
            name: name.clone(),
            checked: 0,
            skipped: 0,
            max_rel: 0.0,
            max_abs: 0.0,
        };
        for j in coords {
            let orig = work.named_tensors()[t].2.data()[j];
            let mut eval = |value: f64| -> Result<(f64, Vec<bool>)> {
                work.named_tensors_mut()[t].2.data_mut()[j] = value;
                loss_and_signature(&work, batch, dropout_seed)
            };
            let (plus, sig_plus) = eval(orig + opts.step)?;
            let (minus, sig_minus) = eval(orig - opts.step)?;
            work.named_tensors_mut()[t].2.data_mut()[j] = orig;
            if sig_plus != base_sig || sig_minus != base_sig {
                check.skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = grad.data()[j];
            check.checked += 1;
            check.max_rel = check.max_rel.max(relative_error(a, numeric, opts.floor));
            check.max_abs = check.max_abs.max((a - numeric).abs());
        }
        tensors.push(check);
    }
    Ok(GradcheckReport {
        tensors,
        tolerance: opts.tolerance,
    })
}

/// Up to `n` coordinates, half of them drawn from entries with a nonzero analytic gradient.
fn probe_coordinates<R: Rng>(grad: &[f64], n: usize, rng: &mut R) -> Vec<usize> {
    if grad.len() <= n {
        return (0..grad.len()).collect();
    }
    let active: Vec<usize> = (0..grad.len()).filter(|&j| grad[j] != 0.0).collect();
    let from_active = (n / 2).min(active.len());
    let mut out: Vec<usize> = sample(rng, active.len(), from_active).into_iter().map(|i| active[i]).collect();
    for j in sample(rng, grad.len(), n) {
        if out.len() == n {
            break;
        }
        if !out.contains(&j) {
            out.push(j);
        }
    }
    out.sort_unstable();
    out
}

/// Width of the toy model used by [`gradcheck_seeds`].
pub const TINY_WIDTH: usize = 8;

/// `config`'s switches on a model small enough to check exhaustively.
pub fn tiny_config(config: &ModelConfig) -> ModelConfig {
    ModelConfig {
        hidden: 8,
        max_neighbors: 4,
        ..*config
    }
}

/// Checks a freshly initialised tiny model per seed on the toy batch and merges the reports.
pub fn gradcheck_seeds<I: IntoIterator<Item = u64>>(
    config: &ModelConfig,
    seeds: I,
    opts: &GradcheckOptions,
) -> Result<GradcheckReport> {
    let config = tiny_config(config);
    let schema = toy_schema(TINY_WIDTH);
    let mut merged: Option<GradcheckReport> = None;
    for seed in seeds {
        let params = PigatParams::new(&schema, config, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let batch = toy_batch(&schema, seed, config.max_neighbors)?;
        let opts = GradcheckOptions { seed, ..*opts };
        let report = gradcheck(&params, &batch, seed.wrapping_mul(31).wrapping_add(7), &opts)?;
        match merged.as_mut() {
            Some(m) => m.merge(&report),
            None => merged = Some(report),
        }
    }
    Ok(merged.unwrap_or(GradcheckReport {
        tensors: Vec::new(),
        tolerance: opts.tolerance,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::confidence::ConfidenceVariant;
    use crate::fixtures::{toy_batch, toy_schema};
    use crate::model::{AttentionKind, ModelConfig, PoolingMode};

    fn model(config: ModelConfig, seed: u64) -> (PigatParams, Vec<EncodedInstance>) {
        let schema = toy_schema(8);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = PigatParams::new(&schema, config, &mut rng).unwrap();
        (params, toy_batch(&schema, seed, config.max_neighbors).unwrap())
    }

    fn toy_config() -> ModelConfig {
        ModelConfig {
            hidden: 8,
            max_neighbors: 4,
            dropout: 0.2,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn default_configuration_passes() {
        let (p, b) = model(toy_config(), 1);
        let r = gradcheck(&p, &b, 7, &GradcheckOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.skipped() * 4 < r.checked(), "too many kink skips: {r:?}");
    }

    #[test]
    fn switches_pass() {
        for (literal, in_pool, pooling) in [
            (true, true, PoolingMode::Attention),
            (false, false, PoolingMode::Attention),
            (false, true, PoolingMode::Average),
        ] {
            let cfg = ModelConfig {
                literal_eq3: literal,
                confidence_in_pooling: in_pool,
                pooling,
                confidence: ConfidenceVariant::Rce,
                attention: AttentionKind::Dot,
                ..toy_config()
            };
            let (p, b) = model(cfg, 3);
            let r = gradcheck(&p, &b, 11, &GradcheckOptions::default()).unwrap();
            assert!(r.passed(), "{cfg:?}: {r:?}");
        }
    }

    #[test]
    fn corrupted_gradient_fails() {
        let (p, b) = model(toy_config(), 2);
        let r = gradcheck_with(&p, &b, 7, &GradcheckOptions::default(), |g| {
            for v in g.mlp.layers[0].weight.data_mut() {
                *v += 1e-2;
            }
        })
        .unwrap();
        assert!(!r.passed());
        let worst = r.groups().into_iter().find(|(g, _)| g == "mlp").unwrap();
        assert!(worst.1 > 1e-4);
    }

    #[test]
    fn seeded_runs_merge() {
        let r = gradcheck_seeds(&toy_config(), 0..3, &GradcheckOptions::default()).unwrap();
        assert!(r.passed(), "{r:?}");
        assert!(r.groups().iter().any(|(g, _)| g == "mlp"));
    }

    #[test]
    fn average_pooling_freezes_heads() {
        let cfg = ModelConfig {
            pooling: PoolingMode::Average,
            ..toy_config()
        };
        let (p, b) = model(cfg, 4);
        let r = gradcheck(&p, &b, 1, &GradcheckOptions::default()).unwrap();
        assert!(r.tensors.iter().all(|t| !t.name.starts_with("user_interactive")));
    }
}
