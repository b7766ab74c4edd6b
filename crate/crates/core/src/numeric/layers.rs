//! Differentiable building blocks with explicit forward and backward passes.

use rand::Rng;

use super::matrix::{axpy, dot, Matrix};
use crate::error::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const PROB_FLOOR: f64 = 1e-7;

/// `W·x + b`
pub fn affine_forward(w: &Matrix, x: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != w.rows() {
        return Err(Error::shape("affine_forward", w.shape(), (b.len(), 1)));
    }
    let mut y = w.matvec(x)?;
    axpy(1.0, b, &mut y);
    Ok(y)
}

pub fn leaky_relu(x: &[f64], slope: f64) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { slope * v }).collect()
}

/// Multiplies `grad` in place by the derivative of leaky-relu at `pre`.
pub fn leaky_relu_backward(pre: &[f64], grad: &mut [f64], slope: f64) {
    for (g, &p) in grad.iter_mut().zip(pre) {
        if p <= 0.0 {
            *g *= slope;
        }
    }
}

pub fn softmax(z: &[f64]) -> Result<Vec<f64>> {
    if z.is_empty() {
        return Err(Error::Domain("softmax of an empty vector".into()));
    }
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = z.iter().map(|&v| (v - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Softmax over the live positions; dead positions get exactly zero. All-dead yields all zeros.
pub fn masked_softmax(z: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if z.len() != mask.len() {
        return Err(Error::shape("masked_softmax", (z.len(), 1), (mask.len(), 1)));
    }
    let max = z
        .iter()
        .zip(mask)
        .filter(|(_, &live)| live)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Ok(vec![0.0; z.len()]);
    }
    let mut out: Vec<f64> = z
        .iter()
        .zip(mask)
        .map(|(&v, &live)| if live { (v - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Backward of (masked) softmax given its output `a` and upstream `da`.
pub fn softmax_backward(a: &[f64], da: &[f64]) -> Vec<f64> {
    let inner = dot(a, da);
    a.iter().zip(da).map(|(&ai, &gi)| ai * (gi - inner)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn clamp_probability(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// Fully connected layer. The bias is stored as an `out × 1` matrix so that every
/// trainable tensor has the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Matrix,
}

impl Dense {
    pub fn new<R: Rng + ?Sized>(input: usize, output: usize, rng: &mut R) -> Self {
        Dense {
            weight: Matrix::glorot(output, input, rng),
            bias: Matrix::zeros(output, 1),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Dense {
            weight: Matrix::zeros(self.weight.rows(), self.weight.cols()),
            bias: Matrix::zeros(self.bias.rows(), 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        affine_forward(&self.weight, x, self.bias.data())
    }

    /// Accumulates `dW += dy·xᵀ`, `db += dy` into `grad` and returns `dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grad: &mut Dense) -> Result<Vec<f64>> {
        grad.weight.add_outer(dy, x)?;
        axpy(1.0, dy, grad.bias.data_mut());
        let mut dx = vec![0.0; x.len()];
        self.weight.matvec_t_acc(dy, &mut dx)?;
        Ok(dx)
    }

    pub fn tensors(&self) -> [&Matrix; 2] {
        [&self.weight, &self.bias]
    }

    pub fn tensors_mut(&mut self) -> [&mut Matrix; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

/// Linear layer followed by leaky-relu.
pub fn dense_leaky_forward(layer: &Dense, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let pre = layer.forward(x)?;
    let out = leaky_relu(&pre, LEAKY_SLOPE);
    Ok((pre, out))
}

/// Feed-forward stack: leaky-relu after every layer except the last, which is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Ffn {
    pub layers: Vec<Dense>,
    pub slope: f64,
}

#[derive(Debug, Clone)]
pub struct FfnCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl FfnCache {
    /// Sign pattern of every hidden pre-activation, used to detect kinks during gradient checks.
    pub fn extend_signature(&self, out: &mut Vec<bool>) {
        let hidden = self.pre.len().saturating_sub(1);
        for p in &self.pre[..hidden] {
            out.extend(p.iter().map(|&v| v > 0.0));
        }
    }
}

impl Ffn {
    /// `dims = [input, hidden.., output]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], slope: f64, rng: &mut R) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Domain(format!("invalid FFN dimensions {dims:?}")));
        }
        let layers = dims.windows(2).map(|w| Dense::new(w[0], w[1], rng)).collect();
        Ok(Ffn { layers, slope })
    }

    pub fn from_layers(layers: Vec<Dense>, slope: f64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Domain("FFN needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(Error::shape(
                    "Ffn::from_layers",
                    w[0].weight.shape(),
                    w[1].weight.shape(),
                ));
            }
        }
        Ok(Ffn { layers, slope })
    }

    pub fn zeros_like(&self) -> Self {
        Ffn {
            layers: self.layers.iter().map(Dense::zeros_like).collect(),
            slope: self.slope,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, FfnCache)> {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.to_vec();
        let last = self.layers.len() - 1;
        for (idx, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(&current)?;
            let next = if idx < last {
                leaky_relu(&z, self.slope)
            } else {
                z.clone()
            };
            inputs.push(std::mem::replace(&mut current, next));
            pre.push(z);
        }
        Ok((current, FfnCache { inputs, pre }))
    }

    pub fn backward(&self, cache: &FfnCache, upstream: &[f64], grad: &mut Ffn) -> Result<Vec<f64>> {
        if cache.inputs.len() != self.layers.len() || grad.layers.len() != self.layers.len() {
            return Err(Error::Usage("FFN cache does not match this network".into()));
        }
        for (layer, (x, z)) in self.layers.iter().zip(cache.inputs.iter().zip(&cache.pre)) {
            if x.len() != layer.input_dim() || z.len() != layer.output_dim() {
                return Err(Error::Usage("stale FFN cache".into()));
            }
        }
        let last = self.layers.len() - 1;
        let mut g = upstream.to_vec();
        for idx in (0..self.layers.len()).rev() {
            if idx < last {
                leaky_relu_backward(&cache.pre[idx], &mut g, self.slope);
            }
            g = self.layers[idx].backward(&cache.inputs[idx], &g, &mut grad.layers[idx])?;
        }
        Ok(g)
    }

    pub fn tensors(&self) -> Vec<&Matrix> {
        self.layers.iter().flat_map(|l| l.tensors()).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().flat_map(|l| l.tensors_mut()).collect()
    }
}
