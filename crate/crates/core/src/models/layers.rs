use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::error::Result;
use crate::tensor::Tensor;

pub const LEAKY_SLOPE: f64 = 0.01;

/// Affine layer `x W + b` with `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    /// Glorot-normal weights, zero bias.
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let std = (2.0 / (in_dim + out_dim) as f64).sqrt();
        let normal = Normal::new(0.0, std).expect("positive std");
        let w: Vec<f64> = (0..in_dim * out_dim).map(|_| normal.sample(rng)).collect();
        Dense {
            weight: store.add(format!("{name}.w"), Tensor::new(vec![in_dim, out_dim], w).expect("sized")),
            bias: store.add(format!("{name}.b"), Tensor::zeros(&[out_dim])),
            in_dim,
            out_dim,
        }
    }

    pub fn zeroed(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize) -> Self {
        Dense {
            weight: store.add(format!("{name}.w"), Tensor::zeros(&[in_dim, out_dim])),
            bias: store.add(format!("{name}.b"), Tensor::zeros(&[out_dim])),
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight)?;
        let b = g.param(self.bias)?;
        let h = g.matmul(x, w)?;
        g.add_bias(h, b)
    }
}

/// Stack of dense layers, each followed by LeakyReLU.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub in_dim: usize,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, sizes: &[usize], rng: &mut impl Rng) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut d = in_dim;
        for (i, &s) in sizes.iter().enumerate() {
            layers.push(Dense::new(store, &format!("{name}.{i}"), d, s, rng));
            d = s;
        }
        Mlp { layers, in_dim }
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(self.in_dim, |l| l.out_dim)
    }

    pub fn forward(&self, g: &mut Graph, mut x: NodeId) -> Result<NodeId> {
        for l in &self.layers {
            let h = l.forward(g, x)?;
            x = g.leaky_relu(h, LEAKY_SLOPE)?;
        }
        Ok(x)
    }
}
