//! Finite-difference checks of reverse-mode gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iakrec::autodiff::{Graph, NodeId, ParamId, ParamStore};
use iakrec::datagen::{DomainIds, DomainKey, Topic};
use iakrec::iak::{FinetuneBatch, IakAdapter, IakConfig};
use iakrec::models::{Composition, Labels};
use iakrec::Tensor;

pub const SEEDS: u64 = 100;
pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared absolutely; finite differences
/// cannot resolve relative error below their own round-off.
pub const FLOOR: f64 = 1e-6;

type Loss = Box<dyn Fn(&mut Graph) -> NodeId>;

fn uniform(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Values in `[-2, 2]` at least 0.05 away from zero, so kinks are not straddled.
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let x = rng.random_range(0.05..2.0);
            if rng.random_bool(0.5) {
                x
            } else {
                -x
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// `sum(y * r)` for a fixed random `r`, so every output entry carries a
/// distinct weight into the scalar loss.
fn project(g: &mut Graph, y: NodeId, r: &Tensor) -> NodeId {
    let r = g.input(r.clone()).unwrap();
    let p = g.mul(y, r).unwrap();
    g.sum(p).unwrap()
}

fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Largest relative error over every trainable entry of `store`.
fn max_error<M>(
    model: &mut M,
    store: fn(&mut M) -> &mut ParamStore,
    value_and_grads: impl Fn(&M) -> (f64, Vec<(ParamId, Tensor)>),
) -> f64 {
    let (_, grads) = value_and_grads(model);
    let mut worst: f64 = 0.0;
    for (id, grad) in grads {
        for k in 0..grad.len() {
            let original = store(model).get(id).value.data()[k];
            store(model).get_mut(id).value.data_mut()[k] = original + STEP;
            let up = value_and_grads(model).0;
            store(model).get_mut(id).value.data_mut()[k] = original - STEP;
            let down = value_and_grads(model).0;
            store(model).get_mut(id).value.data_mut()[k] = original;
            let numeric = (up - down) / (2.0 * STEP);
            worst = worst.max(relative_error(grad.data()[k], numeric));
        }
    }
    worst
}

fn graph_error(mut store: ParamStore, loss: Loss) -> f64 {
    max_error(&mut store, |s| s, |s| {
        let mut g = Graph::new(s);
        let l = loss(&mut g);
        let value = g.value(l).item().unwrap();
        let grads = g.backward(l).unwrap();
        let per_param = s
            .iter()
            .map(|(id, p)| (id, grads.get(id).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape()))))
            .collect();
        (value, per_param)
    })
}

/// One randomly sized instance of `op`.
fn case(op: &str, rng: &mut ChaCha8Rng) -> (ParamStore, Loss) {
    let n = rng.random_range(1..5);
    let m = rng.random_range(1..5);
    let mut s = ParamStore::new();
    let r = uniform(rng, &[n, m], -1.0, 1.0);
    let a = s.add("a", uniform(rng, &[n, m], -2.0, 2.0));
    let loss: Loss = match op {
        "matmul" => {
            let k = rng.random_range(1..5);
            let b = s.add("b", uniform(rng, &[m, k], -2.0, 2.0));
            let r = uniform(rng, &[n, k], -1.0, 1.0);
            Box::new(move |g| {
                let (x, y) = (g.param(a).unwrap(), g.param(b).unwrap());
                let z = g.matmul(x, y).unwrap();
                project(g, z, &r)
            })
        }
        "add_bias" => {
            let b = s.add("b", uniform(rng, &[m], -2.0, 2.0));
            Box::new(move |g| {
                let (x, y) = (g.param(a).unwrap(), g.param(b).unwrap());
                let z = g.add_bias(x, y).unwrap();
                let z = g.square(z).unwrap();
                project(g, z, &r)
            })
        }
        "add" | "sub" | "mul" => {
            let b = s.add("b", uniform(rng, &[n, m], -2.0, 2.0));
            let op = op.to_string();
            Box::new(move |g| {
                let (x, y) = (g.param(a).unwrap(), g.param(b).unwrap());
                let z = match op.as_str() {
                    "add" => g.add(x, y),
                    "sub" => g.sub(x, y),
                    _ => g.mul(x, y),
                }
                .unwrap();
                let z = g.square(z).unwrap();
                project(g, z, &r)
            })
        }
        "mul_col" => {
            let c = s.add("c", uniform(rng, &[n, 1], -2.0, 2.0));
            Box::new(move |g| {
                let (x, y) = (g.param(a).unwrap(), g.param(c).unwrap());
                let z = g.mul_col(x, y).unwrap();
                project(g, z, &r)
            })
        }
        "scale" | "add_scalar" => {
            let c = rng.random_range(-3.0..3.0);
            let op = op.to_string();
            Box::new(move |g| {
                let x = g.param(a).unwrap();
                let z = if op == "scale" { g.scale(x, c) } else { g.add_scalar(x, c) }.unwrap();
                let z = g.square(z).unwrap();
                project(g, z, &r)
            })
        }
        "sigmoid" | "softplus" | "exp" | "square" | "softmax" => {
            let op = op.to_string();
            Box::new(move |g| {
                let x = g.param(a).unwrap();
                let z = match op.as_str() {
                    "sigmoid" => g.sigmoid(x),
                    "softplus" => g.softplus(x),
                    "exp" => g.exp(x),
                    "square" => g.square(x),
                    _ => g.softmax(x),
                }
                .unwrap();
                project(g, z, &r)
            })
        }
        "leaky_relu" => {
            s.get_mut(a).value = away_from_zero(rng, &[n, m]);
            let slope = rng.random_range(0.0..0.5);
            Box::new(move |g| {
                let x = g.param(a).unwrap();
                let z = g.leaky_relu(x, slope).unwrap();
                project(g, z, &r)
            })
        }
        "log" => {
            s.get_mut(a).value = uniform(rng, &[n, m], 0.5, 3.0);
            Box::new(move |g| {
                let x = g.param(a).unwrap();
                let z = g.log(x).unwrap();
                project(g, z, &r)
            })
        }
        "concat" => {
            let k = rng.random_range(1..4);
            let b = s.add("b", uniform(rng, &[n, k], -2.0, 2.0));
            let r = uniform(rng, &[n, m + k + m], -1.0, 1.0);
            Box::new(move |g| {
                let (x, y) = (g.param(a).unwrap(), g.param(b).unwrap());
                let z = g.concat(&[x, y, x]).unwrap();
                project(g, z, &r)
            })
        }
        "slice_cols" => {
            let start = rng.random_range(0..m);
            let end = rng.random_range(start + 1..=m);
            let r = uniform(rng, &[n, end - start], -1.0, 1.0);
            Box::new(move |g| {
                let x = g.param(a).unwrap();
                let z = g.slice_cols(x, start, end).unwrap();
                project(g, z, &r)
            })
        }
        "sum" | "mean" => {
            let op = op.to_string();
            Box::new(move |g| {
                let x = g.param(a).unwrap();
                let sq = g.square(x).unwrap();
                let z = if op == "sum" { g.sum(sq) } else { g.mean(sq) }.unwrap();
                g.mul(z, z).unwrap()
            })
        }
        "bce" => {
            let labels: Vec<f64> = (0..n * m).map(|_| rng.random_range(0..2) as f64).collect();
            Box::new(move |g| {
                let x = g.param(a).unwrap();
                let p = g.sigmoid(x).unwrap();
                g.bce(p, labels.clone()).unwrap()
            })
        }
        "gather" | "gather_mean" => {
            let vocab = rng.random_range(1..6);
            let dim = m;
            let t = s.add("table", uniform(rng, &[vocab, dim], -2.0, 2.0));
            let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..vocab)).collect();
            let groups: Vec<Vec<usize>> = (0..n)
                .map(|_| (0..rng.random_range(0..4)).map(|_| rng.random_range(0..vocab)).collect())
                .collect();
            let op = op.to_string();
            Box::new(move |g| {
                let z = if op == "gather" {
                    g.gather(t, rows.clone())
                } else {
                    g.gather_mean(t, groups.clone())
                }
                .unwrap();
                let z = g.square(z).unwrap();
                project(g, z, &r)
            })
        }
        other => panic!("unknown op {other}"),
    };
    (s, loss)
}

pub const OPS: [&str; 22] = [
    "matmul",
    "add_bias",
    "add",
    "sub",
    "mul",
    "mul_col",
    "scale",
    "add_scalar",
    "sigmoid",
    "leaky_relu",
    "softplus",
    "exp",
    "log",
    "square",
    "softmax",
    "concat",
    "slice_cols",
    "sum",
    "mean",
    "bce",
    "gather",
    "gather_mean",
];

fn random_batch(rng: &mut ChaCha8Rng, n: usize, in_dim: usize) -> FinetuneBatch {
    let click: Vec<f64> = (0..n).map(|_| rng.random_range(0..2) as f64).collect();
    let purchase = click.iter().map(|&c| if c == 1.0 && rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
    FinetuneBatch {
        representation: uniform(rng, &[n, in_dim], -2.0, 2.0),
        logits: uniform(rng, &[n, 2], -2.0, 2.0),
        labels: Labels { click, purchase },
        domains: vec![
            DomainIds {
                scene: 1,
                region: 1,
                period: 1
            };
            n
        ],
    }
}

/// Worst relative error of the complete adapter objective, cross-entropy plus
/// the scaled KL of the encoder posterior, differentiated through
/// reparameterised weight samples with the noise held fixed.
pub fn ib_loss_error(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let in_dim = rng.random_range(2..6);
    let config = IakConfig {
        d_e: rng.random_range(1..4),
        encoder_hidden: if seed % 2 == 0 { vec![] } else { vec![3] },
        decoder_hidden: vec![rng.random_range(1..4)],
        beta: [0.0, 1e-3, 0.5, 10.0][(seed % 4) as usize],
        ..IakConfig::default()
    };
    let composition = if seed % 3 == 0 { Composition::Independent } else { Composition::ChainProduct };
    let mut adapter =
        IakAdapter::new(config, DomainKey::single(Topic::Region, 1), composition, in_dim, seed).unwrap();
    // Move the zero-initialised output layer so every weight receives gradient.
    for p in adapter.store_mut().iter_mut() {
        for v in p.value.data_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
    }
    let n = rng.random_range(1..6);
    let batch = random_batch(&mut rng, n, in_dim);
    let noise = adapter.sample_noise(&mut rng);
    max_error(&mut adapter, IakAdapter::store_mut, |a| {
        let mut g = Graph::new(a.store());
        let nodes = a.loss(&mut g, &batch, Some(&noise)).unwrap();
        let value = g.value(nodes.total).item().unwrap();
        let grads = g.backward(nodes.total).unwrap();
        let per_param = a
            .store()
            .iter()
            .map(|(id, p)| (id, grads.get(id).cloned().unwrap_or_else(|| Tensor::zeros(p.value.shape()))))
            .collect();
        (value, per_param)
    })
}

/// Worst relative error of one random instance of `op`.
pub fn op_error(op: &str, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (store, loss) = case(op, &mut rng);
    graph_error(store, loss)
}
