//! Forward and reverse pass from an encoded instance to a preference probability.
//!
//! Per side, neighbour embeddings are looked up, confidence rows are added, two
//! attention heads (interactive and adaptive) pool the sequence, and the pooled
//! vectors are integrated with the profile embeddings before the MLP head.

use std::borrow::Borrow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::attention::HeadCache;
use super::params::{PigatParams, PoolingMode, QuerySource};
use crate::error::{Error, Result};
use crate::features::EncodedInstance;
use crate::numeric::{
    axpy, clamp_probability, dense_leaky_forward, dot, dropout_mask, leaky_relu_backward, masked_softmax, sigmoid,
    softmax_backward, Dense, FfnCache, LEAKY_SLOPE, PROB_FLOOR,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[derive(Debug, Clone)]
struct SideCache {
    raw: Vec<Vec<f64>>,
    aug: Vec<Vec<f64>>,
    mask: Vec<bool>,
    heads: [Option<HeadCache>; 2],
    weights: [Vec<f64>; 2],
    pooled: [Vec<f64>; 2],
}

impl SideCache {
    fn pool_source(&self, augmented: bool) -> &[Vec<f64>] {
        if augmented {
            &self.aug
        } else {
            &self.raw
        }
    }
}

/// Everything the reverse pass needs from one forward call.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    version: u64,
    e_u: Vec<f64>,
    e_i: Vec<f64>,
    user: SideCache,
    item: SideCache,
    /// integrate_user, integrate_item, adaptive_user, adaptive_item
    dense_in: [Vec<f64>; 4],
    dense_pre: [Vec<f64>; 4],
    dropout: Vec<f64>,
    mlp: FfnCache,
    pub logit: f64,
    /// Unclamped sigmoid output.
    pub raw_probability: f64,
    /// Clamped into `[1e-7, 1 - 1e-7]`.
    pub probability: f64,
}

impl ForwardCache {
    pub fn clamped(&self) -> bool {
        self.raw_probability != self.probability
    }

    /// Attention weights `[interactive, adaptive]` of the user side.
    pub fn user_weights(&self) -> &[Vec<f64>; 2] {
        &self.user.weights
    }

    pub fn item_weights(&self) -> &[Vec<f64>; 2] {
        &self.item.weights
    }

    /// `[h_ui, h_ua, h_ii, h_ia]`
    pub fn pooled(&self) -> [&[f64]; 4] {
        [&self.user.pooled[0], &self.user.pooled[1], &self.item.pooled[0], &self.item.pooled[1]]
    }

    /// Outputs of the four integrate layers `[h_u, h_i, h'_u, h'_i]`.
    pub fn integrated(&self) -> Vec<Vec<f64>> {
        self.dense_pre
            .iter()
            .map(|p| p.iter().map(|&v| if v > 0.0 { v } else { LEAKY_SLOPE * v }).collect())
            .collect()
    }

    /// Sign of every leaky-relu pre-activation plus the clamp state. Two forward
    /// passes with equal signatures lie on the same smooth piece of the loss.
    pub fn kink_signature(&self) -> Vec<bool> {
        let mut sig = Vec::new();
        for side in [&self.user, &self.item] {
            for c in side.heads.iter().flatten() {
                if let HeadCache::Ffn(caches) = c {
                    for fc in caches.iter().flatten() {
                        fc.extend_signature(&mut sig);
                    }
                }
            }
        }
        for p in &self.dense_pre {
            sig.extend(p.iter().map(|&v| v > 0.0));
        }
        self.mlp.extend_signature(&mut sig);
        sig.push(self.clamped());
        sig
    }
}

fn concat(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(a.len() + b.len());
    v.extend_from_slice(a);
    v.extend_from_slice(b);
    v
}

fn dense_backward(layer: &Dense, input: &[f64], pre: &[f64], dout: &[f64], grad: &mut Dense) -> Result<Vec<f64>> {
    let mut g = dout.to_vec();
    leaky_relu_backward(pre, &mut g, LEAKY_SLOPE);
    layer.backward(input, &g, grad)
}

impl PigatParams {
    fn check_instance(&self, inst: &EncodedInstance) -> Result<()> {
        let d = &self.dims;
        let k = inst.user_mask.len();
        let ok = inst.user_profile.len() == d.user_fields
            && inst.item_profile.len() == d.item_fields
            && inst.user_sequence.len() == k
            && inst.user_sequence.iter().all(|ids| ids.len() == d.item_fields)
            && inst.item_sequence.len() == inst.item_mask.len()
            && k <= self.config.max_neighbors
            && inst.item_mask.len() <= self.config.max_neighbors;
        if !ok {
            return Err(Error::SchemaMismatch {
                expected: format!(
                    "{} user fields, {} item fields, k <= {}",
                    d.user_fields, d.item_fields, self.config.max_neighbors
                ),
                found: format!(
                    "{} user fields, {} item fields, k = {}",
                    inst.user_profile.len(),
                    inst.item_profile.len(),
                    k
                ),
            });
        }
        Ok(())
    }

    fn query<'a>(&self, head: usize, e_u: &'a [f64], e_i: &'a [f64]) -> &'a [f64] {
        match self.query_source(head) {
            QuerySource::User => e_u,
            QuerySource::Item => e_i,
        }
    }

    fn side_forward(&self, side: usize, raw: Vec<Vec<f64>>, mask: &[bool], e_u: &[f64], e_i: &[f64]) -> Result<SideCache> {
        let table = if side == 0 { &self.user_confidence } else { &self.item_confidence };
        let mut aug = raw.clone();
        table.apply(&mut aug, mask)?;
        let live = mask.iter().filter(|&&m| m).count();

        let mut heads = [None, None];
        let mut weights = [Vec::new(), Vec::new()];
        let mut pooled = [Vec::new(), Vec::new()];
        for j in 0..2 {
            let h = 2 * side + j;
            let a = match self.config.pooling {
                PoolingMode::Attention => {
                    let (logits, cache) = self.heads[h].logits(self.query(h, e_u, e_i), &aug, mask)?;
                    heads[j] = Some(cache);
                    masked_softmax(&logits, mask)?
                }
                PoolingMode::Average => mask
                    .iter()
                    .map(|&m| if m { 1.0 / live as f64 } else { 0.0 })
                    .collect(),
            };
            let source = if self.config.confidence_in_pooling { &aug } else { &raw };
            let width = table.width();
            let mut h_out = vec![0.0; width];
            for (w, row) in a.iter().zip(source) {
                if *w != 0.0 {
                    axpy(*w, row, &mut h_out);
                }
            }
            weights[j] = a;
            pooled[j] = h_out;
        }
        Ok(SideCache {
            raw,
            aug,
            mask: mask.to_vec(),
            heads,
            weights,
            pooled,
        })
    }

    /// Predicts `ŷ` for one instance. In train mode dropout is drawn from `rng`.
    pub fn forward(&self, inst: &EncodedInstance, mode: Mode, rng: &mut ChaCha8Rng) -> Result<ForwardCache> {
        self.check_instance(inst)?;
        let e_u = self.user_table.lookup(&inst.user_profile)?;
        let e_i = self.item_table.lookup(&inst.item_profile)?;

        let user_rows = inst
            .user_sequence
            .iter()
            .map(|ids| self.item_table.lookup(ids))
            .collect::<Result<Vec<_>>>()?;
        let item_rows = inst
            .item_sequence
            .iter()
            .map(|&id| self.user_table.lookup(&[id]))
            .collect::<Result<Vec<_>>>()?;
        let user = self.side_forward(0, user_rows, &inst.user_mask, &e_u, &e_i)?;
        let item = self.side_forward(1, item_rows, &inst.item_mask, &e_u, &e_i)?;

        let dense_in = [
            concat(&e_u, &user.pooled[0]),
            concat(&e_i, &item.pooled[0]),
            concat(&user.pooled[0], &user.pooled[1]),
            concat(&item.pooled[0], &item.pooled[1]),
        ];
        let layers = [&self.integrate_user, &self.integrate_item, &self.adaptive_user, &self.adaptive_item];
        let mut dense_pre: [Vec<f64>; 4] = Default::default();
        let mut mlp_in = Vec::with_capacity(4 * self.config.hidden);
        for (idx, layer) in layers.iter().enumerate() {
            let (pre, out) = dense_leaky_forward(layer, &dense_in[idx])?;
            mlp_in.extend_from_slice(&out);
            dense_pre[idx] = pre;
        }
        let dropout = dropout_mask(mlp_in.len(), self.config.dropout, mode == Mode::Train, rng)?;
        mlp_in.iter_mut().zip(&dropout).for_each(|(x, m)| *x *= m);
        let (out, mlp) = self.mlp.forward(&mlp_in)?;
        let logit = out[0];
        let raw_probability = sigmoid(logit);
        Ok(ForwardCache {
            version: self.version(),
            e_u,
            e_i,
            user,
            item,
            dense_in,
            dense_pre,
            dropout,
            mlp,
            logit,
            raw_probability,
            probability: clamp_probability(raw_probability),
        })
    }

    /// Evaluation-mode probability.
    pub fn predict(&self, inst: &EncodedInstance) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Ok(self.forward(inst, Mode::Eval, &mut rng)?.probability)
    }

    /// Reverse pass of the log-loss of one instance, scaled by `scale`, accumulated into `grads`.
    pub fn backward(&self, cache: &ForwardCache, inst: &EncodedInstance, scale: f64, grads: &mut PigatParams) -> Result<()> {
        if cache.version != self.version() {
            return Err(Error::Usage(format!(
                "forward cache from parameter version {} replayed against version {}",
                cache.version,
                self.version()
            )));
        }
        if grads.dims != self.dims || grads.config != self.config {
            return Err(Error::Usage("gradient accumulator has a different structure".into()));
        }
        let y = f64::from(inst.label);
        let dlogit = if cache.clamped() { 0.0 } else { (cache.raw_probability - y) * scale };
        if dlogit == 0.0 {
            return Ok(());
        }

        let mut dmlp_in = self.mlp.backward(&cache.mlp, &[dlogit], &mut grads.mlp)?;
        dmlp_in.iter_mut().zip(&cache.dropout).for_each(|(g, m)| *g *= m);
        let d = self.config.hidden;
        let layers = [&self.integrate_user, &self.integrate_item, &self.adaptive_user, &self.adaptive_item];
        let mut din: Vec<Vec<f64>> = Vec::with_capacity(4);
        for (idx, layer) in layers.iter().enumerate() {
            let grad_layer = match idx {
                0 => &mut grads.integrate_user,
                1 => &mut grads.integrate_item,
                2 => &mut grads.adaptive_user,
                _ => &mut grads.adaptive_item,
            };
            din.push(dense_backward(
                layer,
                &cache.dense_in[idx],
                &cache.dense_pre[idx],
                &dmlp_in[idx * d..(idx + 1) * d],
                grad_layer,
            )?);
        }

        let up = self.dims.user_profile;
        let ip = self.dims.item_profile;
        let un = self.dims.user_neighbor();
        let inb = self.dims.item_neighbor;
        let mut de_u = din[0][..up].to_vec();
        let mut de_i = din[1][..ip].to_vec();
        let mut dh_ui = din[0][up..].to_vec();
        axpy(1.0, &din[2][..un], &mut dh_ui);
        let dh_ua = din[2][un..].to_vec();
        let mut dh_ii = din[1][ip..].to_vec();
        axpy(1.0, &din[3][..inb], &mut dh_ii);
        let dh_ia = din[3][inb..].to_vec();

        let user_raw = self.side_backward(0, &cache.user, [&dh_ui, &dh_ua], cache, &mut de_u, &mut de_i, grads)?;
        let item_raw = self.side_backward(1, &cache.item, [&dh_ii, &dh_ia], cache, &mut de_u, &mut de_i, grads)?;

        for (l, ids) in inst.user_sequence.iter().enumerate() {
            if inst.user_mask[l] {
                grads.item_table.scatter_gradient(ids, &user_raw[l])?;
            }
        }
        for (l, &id) in inst.item_sequence.iter().enumerate() {
            if inst.item_mask[l] {
                grads.user_table.scatter_gradient(&[id], &item_raw[l])?;
            }
        }
        grads.user_table.scatter_gradient(&inst.user_profile, &de_u)?;
        grads.item_table.scatter_gradient(&inst.item_profile, &de_i)?;
        Ok(())
    }

    /// Returns the gradient with respect to the raw neighbour embeddings of one side.
    #[allow(clippy::too_many_arguments)]
    fn side_backward(
        &self,
        side: usize,
        sc: &SideCache,
        dpooled: [&[f64]; 2],
        cache: &ForwardCache,
        de_u: &mut [f64],
        de_i: &mut [f64],
        grads: &mut PigatParams,
    ) -> Result<Vec<Vec<f64>>> {
        let k = sc.mask.len();
        let width = if side == 0 { self.dims.user_neighbor() } else { self.dims.item_neighbor };
        let augmented = self.config.confidence_in_pooling;
        let source = sc.pool_source(augmented);
        let mut daug = vec![vec![0.0; width]; k];
        let mut dsource = vec![vec![0.0; width]; k];

        for (j, dh) in dpooled.into_iter().enumerate() {
            let a = &sc.weights[j];
            let mut da = vec![0.0; k];
            for l in 0..k {
                if !sc.mask[l] {
                    continue;
                }
                da[l] = dot(dh, &source[l]);
                axpy(a[l], dh, &mut dsource[l]);
            }
            if let Some(head_cache) = &sc.heads[j] {
                let h = 2 * side + j;
                let ds = softmax_backward(a, &da);
                let query = self.query(h, &cache.e_u, &cache.e_i);
                let mut dq = vec![0.0; query.len()];
                self.heads[h].backward(query, &sc.aug, head_cache, &ds, &mut grads.heads[h], &mut dq, &mut daug)?;
                match self.query_source(h) {
                    QuerySource::User => axpy(1.0, &dq, de_u),
                    QuerySource::Item => axpy(1.0, &dq, de_i),
                }
            }
        }

        let mut draw = daug;
        if augmented {
            for (r, s) in draw.iter_mut().zip(&dsource) {
                axpy(1.0, s, r);
            }
            if self.config.confidence.trainable() {
                let table = if side == 0 { &mut grads.user_confidence } else { &mut grads.item_confidence };
                table.accumulate(&draw, &sc.mask);
            }
        } else {
            if self.config.confidence.trainable() {
                let table = if side == 0 { &mut grads.user_confidence } else { &mut grads.item_confidence };
                table.accumulate(&draw, &sc.mask);
            }
            for (r, s) in draw.iter_mut().zip(&dsource) {
                axpy(1.0, s, r);
            }
        }
        Ok(draw)
    }
}

/// Mean negative log-likelihood over a batch of clamped probabilities.
pub fn log_loss(probabilities: &[f64], labels: &[u8]) -> Result<f64> {
    if probabilities.is_empty() {
        return Err(Error::Domain("log-loss of an empty batch".into()));
    }
    if probabilities.len() != labels.len() {
        return Err(Error::shape("log_loss", (probabilities.len(), 1), (labels.len(), 1)));
    }
    let total: f64 = probabilities
        .iter()
        .zip(labels)
        .map(|(&p, &y)| instance_loss(p, y))
        .sum();
    Ok(total / probabilities.len() as f64)
}

fn instance_loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Dropout randomness for instance `index` of a batch, independent of evaluation order.
pub fn instance_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mean batch loss in train mode, dropout seeded by `seed`.
pub fn batch_loss<B: Borrow<EncodedInstance>>(params: &PigatParams, batch: &[B], seed: u64) -> Result<f64> {
    let mut probs = Vec::with_capacity(batch.len());
    for (i, inst) in batch.iter().enumerate() {
        probs.push(params.forward(inst.borrow(), Mode::Train, &mut instance_rng(seed, i))?.probability);
    }
    let labels: Vec<u8> = batch.iter().map(|i| i.borrow().label).collect();
    log_loss(&probs, &labels)
}

/// Mean batch loss and its gradient, accumulated into `grads` (not zeroed here).
pub fn batch_loss_and_gradient<B: Borrow<EncodedInstance>>(
    params: &PigatParams,
    batch: &[B],
    seed: u64,
    grads: &mut PigatParams,
) -> Result<f64> {
    let scale = 1.0 / batch.len().max(1) as f64;
    let mut total = 0.0;
    for (i, inst) in batch.iter().enumerate() {
        let inst = inst.borrow();
        let cache = params.forward(inst, Mode::Train, &mut instance_rng(seed, i))?;
        total += instance_loss(cache.probability, inst.label);
        params.backward(&cache, inst, scale, grads)?;
    }
    if batch.is_empty() {
        return Err(Error::Domain("log-loss of an empty batch".into()));
    }
    Ok(total * scale)
}
