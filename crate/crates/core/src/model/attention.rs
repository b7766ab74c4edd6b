use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::{axpy, dot, masked_softmax, Dense, Ffn, FfnCache, Matrix, LEAKY_SLOPE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AttentionKind {
    Ffn1,
    Ffn2,
    Ffn3,
    Dot,
    ScaledDot,
}

impl AttentionKind {
    pub const ALL: [AttentionKind; 5] = [
        AttentionKind::Dot,
        AttentionKind::ScaledDot,
        AttentionKind::Ffn1,
        AttentionKind::Ffn2,
        AttentionKind::Ffn3,
    ];

    fn hidden_layers(self) -> &'static [usize] {
        match self {
            AttentionKind::Ffn1 => &[],
            AttentionKind::Ffn2 => &[32],
            AttentionKind::Ffn3 => &[64, 32],
            AttentionKind::Dot | AttentionKind::ScaledDot => &[],
        }
    }
}

impl fmt::Display for AttentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionKind::Ffn1 => "ffn-1",
            AttentionKind::Ffn2 => "ffn-2",
            AttentionKind::Ffn3 => "ffn-3",
            AttentionKind::Dot => "dot",
            AttentionKind::ScaledDot => "scaled-dot",
        })
    }
}

impl FromStr for AttentionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ffn-1" => AttentionKind::Ffn1,
            "ffn-2" => AttentionKind::Ffn2,
            "ffn-3" => AttentionKind::Ffn3,
            "dot" => AttentionKind::Dot,
            "scaled-dot" => AttentionKind::ScaledDot,
            other => return Err(Error::Config(format!("unknown attention kind {other:?}"))),
        })
    }
}

/// Scores each neighbour against a query.
///
/// FFN heads score `FFN([query ‖ neighbour])`. Dot heads score `⟨P·query + c, neighbour⟩`
/// (divided by `√H` when scaled), with the affine projection present only when the
/// query and neighbour widths differ.
#[derive(Debug, Clone, PartialEq)]
pub enum AttentionHead {
    Ffn(Ffn),
    Dot { projection: Option<Dense>, scaled: bool },
}

#[derive(Debug, Clone)]
pub enum HeadCache {
    Ffn(Vec<Option<FfnCache>>),
    Dot { projected: Vec<f64> },
}

impl AttentionHead {
    pub fn new<R: Rng + ?Sized>(kind: AttentionKind, query_width: usize, neighbor_width: usize, rng: &mut R) -> Result<Self> {
        Ok(match kind {
            AttentionKind::Dot | AttentionKind::ScaledDot => AttentionHead::Dot {
                projection: (query_width != neighbor_width).then(|| Dense::new(query_width, neighbor_width, rng)),
                scaled: kind == AttentionKind::ScaledDot,
            },
            _ => {
                let mut dims = vec![query_width + neighbor_width];
                dims.extend_from_slice(kind.hidden_layers());
                dims.push(1);
                AttentionHead::Ffn(Ffn::new(&dims, LEAKY_SLOPE, rng)?)
            }
        })
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            AttentionHead::Ffn(f) => AttentionHead::Ffn(f.zeros_like()),
            AttentionHead::Dot { projection, scaled } => AttentionHead::Dot {
                projection: projection.as_ref().map(Dense::zeros_like),
                scaled: *scaled,
            },
        }
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        match self {
            AttentionHead::Ffn(f) => f.tensors(),
            AttentionHead::Dot { projection, .. } => projection.iter().flat_map(|p| p.tensors()).collect(),
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            AttentionHead::Ffn(f) => f.tensors_mut(),
            AttentionHead::Dot { projection, .. } => projection.iter_mut().flat_map(|p| p.tensors_mut()).collect(),
        }
    }

    /// Per-position logits; dead positions get 0 and no cache.
    pub fn logits(&self, query: &[f64], rows: &[Vec<f64>], mask: &[bool]) -> Result<(Vec<f64>, HeadCache)> {
        if rows.len() != mask.len() {
            return Err(Error::shape("attention_logits", (rows.len(), 1), (mask.len(), 1)));
        }
        match self {
            AttentionHead::Ffn(ffn) => {
                let mut logits = vec![0.0; rows.len()];
                let mut caches = Vec::with_capacity(rows.len());
                let mut input = Vec::with_capacity(ffn.input_dim());
                for (l, (row, &live)) in rows.iter().zip(mask).enumerate() {
                    if !live {
                        caches.push(None);
                        continue;
                    }
                    input.clear();
                    input.extend_from_slice(query);
                    input.extend_from_slice(row);
                    let (out, cache) = ffn.forward(&input)?;
                    logits[l] = out[0];
                    caches.push(Some(cache));
                }
                Ok((logits, HeadCache::Ffn(caches)))
            }
            AttentionHead::Dot { projection, scaled } => {
                let projected = match projection {
                    Some(p) => p.forward(query)?,
                    None => query.to_vec(),
                };
                let scale = if *scaled { (projected.len() as f64).sqrt() } else { 1.0 };
                let mut logits = vec![0.0; rows.len()];
                for (l, (row, &live)) in rows.iter().zip(mask).enumerate() {
                    if !live {
                        continue;
                    }
                    if row.len() != projected.len() {
                        return Err(Error::shape("dot_attention", (projected.len(), 1), (row.len(), 1)));
                    }
                    logits[l] = dot(&projected, row) / scale;
                }
                Ok((logits, HeadCache::Dot { projected }))
            }
        }
    }

    /// Backward of [`logits`](Self::logits). Accumulates parameter gradients into `grad`,
    /// the query gradient into `dquery` and the neighbour gradients into `drows`.
    #[allow(clippy::too_many_arguments)]
    pub fn backward(
        &self,
        query: &[f64],
        rows: &[Vec<f64>],
        cache: &HeadCache,
        dlogits: &[f64],
        grad: &mut AttentionHead,
        dquery: &mut [f64],
        drows: &mut [Vec<f64>],
    ) -> Result<()> {
        match (self, cache, grad) {
            (AttentionHead::Ffn(ffn), HeadCache::Ffn(caches), AttentionHead::Ffn(gffn)) => {
                let qw = query.len();
                for (l, c) in caches.iter().enumerate() {
                    let Some(c) = c else { continue };
                    if dlogits[l] == 0.0 {
                        continue;
                    }
                    let din = ffn.backward(c, &[dlogits[l]], gffn)?;
                    axpy(1.0, &din[..qw], dquery);
                    axpy(1.0, &din[qw..], &mut drows[l]);
                }
                Ok(())
            }
            (
                AttentionHead::Dot { projection, scaled },
                HeadCache::Dot { projected },
                AttentionHead::Dot { projection: gproj, .. },
            ) => {
                let scale = if *scaled { (projected.len() as f64).sqrt() } else { 1.0 };
                let mut dprojected = vec![0.0; projected.len()];
                for (l, row) in rows.iter().enumerate() {
                    let g = dlogits[l] / scale;
                    if g == 0.0 {
                        continue;
                    }
                    axpy(g, row, &mut dprojected);
                    axpy(g, projected, &mut drows[l]);
                }
                match (projection, gproj) {
                    (Some(p), Some(gp)) => {
                        let dq = p.backward(query, &dprojected, gp)?;
                        axpy(1.0, &dq, dquery);
                    }
                    (None, None) => axpy(1.0, &dprojected, dquery),
                    _ => return Err(Error::Usage("gradient head does not match attention head".into())),
                }
                Ok(())
            }
            _ => Err(Error::Usage("attention cache or gradient does not match head kind".into())),
        }
    }
}

/// Attention weights: masked softmax over the head's logits.
pub fn attention_coefficients(head: &AttentionHead, query: &[f64], rows: &[Vec<f64>], mask: &[bool]) -> Result<Vec<f64>> {
    let (logits, _) = head.logits(query, rows, mask)?;
    masked_softmax(&logits, mask)
}

/// `Σ_l weights_l · rows_l`
pub fn pooled_embedding(weights: &[f64], rows: &[Vec<f64>]) -> Result<Vec<f64>> {
    if weights.len() != rows.len() {
        return Err(Error::shape("pooled_embedding", (weights.len(), 1), (rows.len(), 1)));
    }
    let width = rows.first().map_or(0, |r| r.len());
    let mut out = vec![0.0; width];
    for (&w, row) in weights.iter().zip(rows) {
        if row.len() != width {
            return Err(Error::shape("pooled_embedding", (1, width), (1, row.len())));
        }
        if w != 0.0 {
            axpy(w, row, &mut out);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn identical_neighbors_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for kind in AttentionKind::ALL {
            let head = AttentionHead::new(kind, 3, 2, &mut rng).unwrap();
            let rows = vec![vec![0.3, -0.2], vec![0.3, -0.2], vec![0.0, 0.0]];
            let w = attention_coefficients(&head, &[0.1, 0.2, 0.3], &rows, &[true, true, false]).unwrap();
            assert!((w[0] - 0.5).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15 && w[2] == 0.0, "{kind}");
            let w = attention_coefficients(&head, &[0.1, 0.2, 0.3], &rows, &[false, true, false]).unwrap();
            assert_eq!(w, vec![0.0, 1.0, 0.0]);
        }
    }

    #[test]
    fn dot_attention_example() {
        let head = AttentionHead::Dot {
            projection: None,
            scaled: false,
        };
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let w = attention_coefficients(&head, &[1.0, 0.0], &rows, &[true, true]).unwrap();
        let e = std::f64::consts::E;
        assert!((w[0] - e / (e + 1.0)).abs() < 1e-15);
        assert!((w[0] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert!((w[1] - 0.268_941_421_369_995_1).abs() < 1e-12);
    }

    #[test]
    fn larger_inner_product_gets_more_weight() {
        let head = AttentionHead::Dot {
            projection: None,
            scaled: true,
        };
        let q = [0.5, -1.0, 2.0];
        let mut rows = vec![vec![0.1, 0.2, 0.3], vec![0.3, 0.1, -0.2], vec![-0.4, 0.0, 0.5]];
        let mask = [true; 3];
        let mut last = attention_coefficients(&head, &q, &rows, &mask).unwrap()[1];
        for _ in 0..5 {
            axpy(0.1, &q, &mut rows[1]);
            let now = attention_coefficients(&head, &q, &rows, &mask).unwrap()[1];
            assert!(now > last);
            last = now;
        }
    }

    #[test]
    fn pooling_examples() {
        let rows = vec![vec![1.0, 2.0], vec![3.0, 6.0]];
        assert_eq!(pooled_embedding(&[1.0, 0.0], &rows).unwrap(), vec![1.0, 2.0]);
        assert_eq!(pooled_embedding(&[0.5, 0.5], &rows).unwrap(), vec![2.0, 4.0]);
        assert_eq!(pooled_embedding(&[0.0, 0.0], &rows).unwrap(), vec![0.0, 0.0]);
        assert!(pooled_embedding(&[1.0], &rows).is_err());
    }

    #[test]
    fn pooling_matches_explicit_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let rows: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
            let w: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let got = pooled_embedding(&w, &rows).unwrap();
            for j in 0..4 {
                let mut acc = 0.0;
                for l in 0..5 {
                    acc += w[l] * rows[l][j];
                }
                assert!((got[j] - acc).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn kinds_parse() {
        for k in AttentionKind::ALL {
            assert_eq!(k.to_string().parse::<AttentionKind>().unwrap(), k);
        }
        assert!("ffn-4".parse::<AttentionKind>().is_err());
    }
}
