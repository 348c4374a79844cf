use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::autodiff::{softplus, Graph, NodeId, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Initial posterior standard deviation of every variational weight.
pub const SIGMA_INIT: f64 = 0.05;

/// Inverse of softplus: the `rho` giving `softplus(rho) == sigma`.
pub fn rho_for_sigma(sigma: f64) -> f64 {
    sigma.exp_m1().ln()
}

/// Whether weights are drawn from the posterior or fixed at its mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Stochastic,
    Mean,
}

/// Per-entry KL divergence of `N(mu, sigma^2)` from `N(0, 1)`.
pub fn gaussian_kl(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::Invariant(format!("posterior sigma {sigma} is not positive")));
    }
    Ok(0.5 * (mu * mu + sigma * sigma - 1.0 - 2.0 * sigma.ln()))
}

/// Standard-normal draws for one layer's weight and bias, fixed for one batch.
#[derive(Clone, Debug)]
pub struct LayerNoise {
    pub weight: Tensor,
    pub bias: Tensor,
}

/// Linear layer whose weights follow a factorised Gaussian posterior
/// `w = mu + softplus(rho) * eps`.
///
/// The forward pass is `x W / sqrt(in_dim) + b`; the fan-in scaling keeps
/// activations bounded when `mu` starts from the standard-normal prior.
#[derive(Clone, Debug)]
pub struct VariationalLinear {
    pub w_mu: ParamId,
    pub w_rho: ParamId,
    pub b_mu: ParamId,
    pub b_rho: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl VariationalLinear {
    pub fn new(store: &mut ParamStore, name: &str, in_dim: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        let rho = rho_for_sigma(SIGMA_INIT);
        let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(rng)).collect() };
        let w = normal(in_dim * out_dim);
        let b = normal(out_dim);
        VariationalLinear {
            w_mu: store.add(format!("{name}.w_mu"), Tensor::new(vec![in_dim, out_dim], w).expect("sized")),
            w_rho: store.add(format!("{name}.w_rho"), Tensor::full(&[in_dim, out_dim], rho)),
            b_mu: store.add(format!("{name}.b_mu"), Tensor::new(vec![out_dim], b).expect("sized")),
            b_rho: store.add(format!("{name}.b_rho"), Tensor::full(&[out_dim], rho)),
            in_dim,
            out_dim,
        }
    }

    pub fn n_weights(&self) -> usize {
        self.in_dim * self.out_dim + self.out_dim
    }

    pub fn sample_noise(&self, rng: &mut impl Rng) -> LayerNoise {
        let mut normal = |shape: &[usize]| {
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| StandardNormal.sample(rng)).collect()).expect("sized")
        };
        LayerNoise {
            weight: normal(&[self.in_dim, self.out_dim]),
            bias: normal(&[self.out_dim]),
        }
    }

    /// Realised `(weight, bias)` values: the posterior mean, or one sample.
    pub fn sample_weights(&self, store: &ParamStore, rng: &mut impl Rng, mode: SampleMode) -> (Tensor, Tensor) {
        let (w, b) = (store.value(self.w_mu).clone(), store.value(self.b_mu).clone());
        match mode {
            SampleMode::Mean => (w, b),
            SampleMode::Stochastic => {
                let noise = self.sample_noise(rng);
                let draw = |mu: Tensor, rho: ParamId, eps: &Tensor| {
                    let mut out = mu;
                    for ((m, &r), &e) in out.data_mut().iter_mut().zip(store.value(rho).data()).zip(eps.data()) {
                        *m += softplus(r) * e;
                    }
                    out
                };
                (draw(w, self.w_rho, &noise.weight), draw(b, self.b_rho, &noise.bias))
            }
        }
    }

    fn realise(&self, g: &mut Graph, mu: ParamId, rho: ParamId, eps: Option<&Tensor>) -> Result<NodeId> {
        let m = g.param(mu)?;
        let Some(eps) = eps else { return Ok(m) };
        let r = g.param(rho)?;
        let sigma = g.softplus(r)?;
        let e = g.input(eps.clone())?;
        let scaled = g.mul(sigma, e)?;
        g.add(m, scaled)
    }

    /// Pre-activation output; `noise == None` uses the posterior mean.
    pub fn forward(&self, g: &mut Graph, x: NodeId, noise: Option<&LayerNoise>) -> Result<NodeId> {
        let w = self.realise(g, self.w_mu, self.w_rho, noise.map(|n| &n.weight))?;
        let b = self.realise(g, self.b_mu, self.b_rho, noise.map(|n| &n.bias))?;
        let h = g.matmul(x, w)?;
        let h = g.scale(h, 1.0 / (self.in_dim as f64).sqrt())?;
        g.add_bias(h, b)
    }

    /// Summed KL of every weight and bias entry from the standard normal, as a graph node.
    pub fn kl_graph(&self, g: &mut Graph) -> Result<NodeId> {
        let mut total = None;
        for (mu, rho) in [(self.w_mu, self.w_rho), (self.b_mu, self.b_rho)] {
            let m = g.param(mu)?;
            let r = g.param(rho)?;
            let sigma = g.softplus(r)?;
            let m2 = g.square(m)?;
            let s2 = g.square(sigma)?;
            let log_s = g.log(sigma)?;
            let log_s2 = g.scale(log_s, 2.0)?;
            let a = g.add(m2, s2)?;
            let a = g.sub(a, log_s2)?;
            let a = g.add_scalar(a, -1.0)?;
            let s = g.sum(a)?;
            let s = g.scale(s, 0.5)?;
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s)?,
            });
        }
        Ok(total.expect("two blocks"))
    }

    /// Summed KL of every entry, computed directly from parameter values.
    pub fn kl(&self, store: &ParamStore) -> Result<f64> {
        let mut total = 0.0;
        for (mu, rho) in [(self.w_mu, self.w_rho), (self.b_mu, self.b_rho)] {
            for (&m, &r) in store.value(mu).data().iter().zip(store.value(rho).data()) {
                total += gaussian_kl(m, softplus(r))?;
            }
        }
        Ok(total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    /// Simpson integration of `q ln(q / p)` over `mu ± 14 sigma`.
    fn kl_quadrature(mu: f64, sigma: f64) -> f64 {
        let n = 40_000;
        let (a, b) = (mu - 14.0 * sigma, mu + 14.0 * sigma);
        let h = (b - a) / n as f64;
        let f = |w: f64| {
            let z = (w - mu) / sigma;
            let log_q = -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            let log_p = -0.5 * w * w - 0.5 * (2.0 * std::f64::consts::PI).ln();
            log_q.exp() * (log_q - log_p)
        };
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(gaussian_kl(0.0, 1.0).unwrap(), 0.0);
        assert!((gaussian_kl(1.0, 1.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((gaussian_kl(0.0, 2.0).unwrap() - 0.5 * (3.0 - 4f64.ln())).abs() < 1e-15);
        assert!((kl_quadrature(1.0, 1.0) - 0.5).abs() < 1e-6);
        assert!((kl_quadrature(0.0, 2.0) - 0.806_852_819_440_054_7).abs() < 1e-6);
        assert!(gaussian_kl(0.0, 0.0).is_err());
    }

    #[test]
    fn closed_form_matches_quadrature_on_grid() {
        for i in 0..20 {
            for j in 0..20 {
                let mu = -3.0 + 6.0 * i as f64 / 19.0;
                let sigma = 0.1 + 4.9 * j as f64 / 19.0;
                let closed = gaussian_kl(mu, sigma).unwrap();
                let quad = kl_quadrature(mu, sigma);
                assert!(closed >= 0.0);
                assert!((closed - quad).abs() < 1e-6, "mu={mu} sigma={sigma}: {closed} vs {quad}");
            }
        }
    }

    #[test]
    fn rho_inverts_softplus() {
        for s in [0.01, 0.05, 1.0, 3.0] {
            assert!((softplus(rho_for_sigma(s)) - s).abs() < 1e-14);
        }
    }

    #[test]
    fn mean_mode_returns_mu_and_samples_average_to_mu() {
        let mut store = ParamStore::new();
        let mut rng = stream_rng(5, 0);
        let vl = VariationalLinear::new(&mut store, "v", 1, 1, &mut rng);
        let (w, _) = vl.sample_weights(&store, &mut rng, SampleMode::Mean);
        assert_eq!(w, *store.value(vl.w_mu));
        store.get_mut(vl.w_rho).value = Tensor::full(&[1, 1], rho_for_sigma(0.7));
        let mu = store.value(vl.w_mu).data()[0];
        let n = 100_000;
        let mean = (0..n)
            .map(|_| vl.sample_weights(&store, &mut rng, SampleMode::Stochastic).0.data()[0])
            .sum::<f64>()
            / n as f64;
        assert!((mean - mu).abs() < 3.0 * 0.7 / (n as f64).sqrt());
        store.get_mut(vl.w_rho).value = Tensor::full(&[1, 1], -60.0);
        let w = vl.sample_weights(&store, &mut rng, SampleMode::Stochastic).0.data()[0];
        assert!((w - mu).abs() < 1e-20);
    }

    #[test]
    fn kl_graph_matches_values_and_vanishes_at_prior() {
        let mut store = ParamStore::new();
        let vl = VariationalLinear::new(&mut store, "v", 3, 2, &mut stream_rng(1, 0));
        let mut g = Graph::new(&store);
        let node = vl.kl_graph(&mut g).unwrap();
        let direct = vl.kl(&store).unwrap();
        assert!((g.value(node).item().unwrap() - direct).abs() < 1e-9 * direct);
        for id in [vl.w_mu, vl.b_mu] {
            store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        for id in [vl.w_rho, vl.b_rho] {
            store.get_mut(id).value.data_mut().iter_mut().for_each(|v| *v = rho_for_sigma(1.0));
        }
        assert!(vl.kl(&store).unwrap().abs() < 1e-12);
    }
}
