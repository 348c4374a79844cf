use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{AdagradDecay, Gradients, Graph, NodeId, ParamStore};
use crate::checkpoint::{sha256, Checkpoint};
use crate::datagen::{DomainIds, DomainKey};
use crate::error::{Error, Result};
use crate::iak::variational::{LayerNoise, SampleMode, VariationalLinear};
use crate::models::{multitask_bce, Composition, Dense, Labels, Mlp, Prediction, LEAKY_SLOPE};
use crate::rng::{stream_rng, STREAM_ADAPTER_INIT};
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IakConfig {
    /// Width of the encoder output.
    pub d_e: usize,
    /// Weight of the per-weight averaged KL term.
    pub beta: f64,
    /// Variational layers before the final `d_e` layer.
    pub encoder_hidden: Vec<usize>,
    /// Deterministic decoder layers before the zero-initialised output layer.
    pub decoder_hidden: Vec<usize>,
    /// Weight realisation used while training; inference always uses the mean.
    pub sample_mode: SampleMode,
    pub loss_weights: [f64; 2],
}

impl Default for IakConfig {
    fn default() -> Self {
        IakConfig {
            d_e: 50,
            beta: 1e-3,
            encoder_hidden: Vec::new(),
            decoder_hidden: vec![32],
            sample_mode: SampleMode::Stochastic,
            loss_weights: [1.0, 1.0],
        }
    }
}

impl IakConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_e == 0 || self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::InvalidArgument("adapter layer widths must be positive".into()));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!("beta {} must be finite and non-negative", self.beta)));
        }
        Ok(())
    }
}

/// Frozen backbone outputs and labels for one fine-tuning batch.
#[derive(Clone, Debug)]
pub struct FinetuneBatch {
    pub representation: Tensor,
    pub logits: Tensor,
    pub labels: Labels,
    pub domains: Vec<DomainIds>,
}

impl FinetuneBatch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> FinetuneBatch {
        FinetuneBatch {
            representation: self.representation.select_rows(idx),
            logits: self.logits.select_rows(idx),
            labels: self.labels.select(idx),
            domains: idx.iter().map(|&i| self.domains[i]).collect(),
        }
    }
}

/// Loss terms recorded on a graph.
#[derive(Clone, Copy, Debug)]
pub struct LossNodes {
    pub total: NodeId,
    pub bce: NodeId,
    pub kl: NodeId,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub bce: f64,
    pub kl: f64,
    pub grad_norm: f64,
}

/// `bce + beta * kl_total / n_weights`.
pub fn ib_loss(bce: f64, kl_total: f64, n_weights: usize, beta: f64) -> f64 {
    bce + beta * kl_total / n_weights as f64
}

#[derive(Serialize, Deserialize)]
struct AdapterMeta {
    config: IakConfig,
    domain: String,
    composition: Composition,
    in_dim: usize,
}

/// Residual encoder–decoder adapter for one domain.
///
/// `logits = base_logits + decoder(encoder(representation))`. The decoder's
/// output layer starts at zero, so a fresh adapter reproduces the backbone.
#[derive(Clone, Debug)]
pub struct IakAdapter {
    config: IakConfig,
    domain: DomainKey,
    composition: Composition,
    in_dim: usize,
    store: ParamStore,
    encoder: Vec<VariationalLinear>,
    decoder: Mlp,
    decoder_out: Dense,
}

const PREDICT_CHUNK: usize = 4096;

pub(crate) fn domain_seed(seed: u64, domain: &DomainKey) -> u64 {
    let h = sha256(domain.to_string().as_bytes());
    seed ^ u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

impl IakAdapter {
    pub fn new(
        config: IakConfig,
        domain: DomainKey,
        composition: Composition,
        in_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if in_dim == 0 {
            return Err(Error::InvalidArgument("adapter input width must be positive".into()));
        }
        let mut rng = stream_rng(domain_seed(seed, &domain), STREAM_ADAPTER_INIT);
        let mut store = ParamStore::new();
        let mut encoder = Vec::new();
        let mut d = in_dim;
        for (i, &w) in config.encoder_hidden.iter().chain([&config.d_e]).enumerate() {
            encoder.push(VariationalLinear::new(&mut store, &format!("encoder.{i}"), d, w, &mut rng));
            d = w;
        }
        let decoder = Mlp::new(&mut store, "decoder", config.d_e, &config.decoder_hidden, &mut rng);
        let decoder_out = Dense::zeroed(&mut store, "decoder.out", decoder.out_dim(), 2);
        Ok(IakAdapter {
            config,
            domain,
            composition,
            in_dim,
            store,
            encoder,
            decoder,
            decoder_out,
        })
    }

    pub fn config(&self) -> &IakConfig {
        &self.config
    }

    pub fn domain(&self) -> &DomainKey {
        &self.domain
    }

    pub fn composition(&self) -> Composition {
        self.composition
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &[VariationalLinear] {
        &self.encoder
    }

    pub fn n_encoder_weights(&self) -> usize {
        self.encoder.iter().map(VariationalLinear::n_weights).sum()
    }

    pub fn sample_noise(&self, rng: &mut impl Rng) -> Vec<LayerNoise> {
        self.encoder.iter().map(|l| l.sample_noise(rng)).collect()
    }

    /// Encoder output; `noise == None` uses posterior means.
    pub fn encode_graph(&self, g: &mut Graph, x: NodeId, noise: Option<&[LayerNoise]>) -> Result<NodeId> {
        let mut h = x;
        for (i, layer) in self.encoder.iter().enumerate() {
            let pre = layer.forward(g, h, noise.map(|n| &n[i]))?;
            h = g.leaky_relu(pre, LEAKY_SLOPE)?;
        }
        Ok(h)
    }

    /// Corrected logits `[n, 2]` and the encoding `[n, d_e]`.
    pub fn forward(
        &self,
        g: &mut Graph,
        representation: NodeId,
        base_logits: NodeId,
        noise: Option<&[LayerNoise]>,
    ) -> Result<(NodeId, NodeId)> {
        let (rs, ls) = (g.value(representation).shape().to_vec(), g.value(base_logits).shape().to_vec());
        if rs.len() != 2 || rs[1] != self.in_dim || ls != [rs[0], 2] {
            return Err(Error::shape(
                "iak_forward",
                format!("representation {rs:?} and logits {ls:?} for adapter input width {}", self.in_dim),
            ));
        }
        let z = self.encode_graph(g, representation, noise)?;
        let h = self.decoder.forward(g, z)?;
        let delta = self.decoder_out.forward(g, h)?;
        Ok((g.add(base_logits, delta)?, z))
    }

    pub fn kl_graph(&self, g: &mut Graph) -> Result<NodeId> {
        let mut total = None;
        for layer in &self.encoder {
            let k = layer.kl_graph(g)?;
            total = Some(match total {
                None => k,
                Some(t) => g.add(t, k)?,
            });
        }
        Ok(total.expect("encoder has at least one layer"))
    }

    /// Total KL of the encoder posterior from the standard-normal prior.
    pub fn kl(&self) -> Result<f64> {
        self.encoder.iter().map(|l| l.kl(&self.store)).sum()
    }

    /// The information-bottleneck objective of `batch` recorded on `g`.
    pub fn loss(&self, g: &mut Graph, batch: &FinetuneBatch, noise: Option<&[LayerNoise]>) -> Result<LossNodes> {
        let rep = g.input(batch.representation.clone())?;
        let base = g.input(batch.logits.clone())?;
        let (logits, _) = self.forward(g, rep, base, noise)?;
        let (bce, _) = multitask_bce(g, self.composition, logits, &batch.labels, self.config.loss_weights)?;
        let kl = self.kl_graph(g)?;
        let reg = g.scale(kl, self.config.beta / self.n_encoder_weights() as f64)?;
        let total = g.add(bce, reg)?;
        Ok(LossNodes { total, bce, kl })
    }

    fn check_domains(&self, batch: &FinetuneBatch, allow_mixing: bool) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty fine-tuning batch".into()));
        }
        if !allow_mixing {
            if let Some(ids) = batch.domains.iter().find(|ids| !self.domain.matches(ids)) {
                return Err(Error::InvalidArgument(format!(
                    "record from scene={},region={},period={} in a batch for adapter {}",
                    ids.scene, ids.region, ids.period, self.domain
                )));
            }
        }
        Ok(())
    }

    /// Loss statistics and gradients of one batch, without updating parameters.
    pub fn gradients(
        &self,
        batch: &FinetuneBatch,
        rng: &mut impl Rng,
        allow_mixing: bool,
    ) -> Result<(StepStats, Gradients)> {
        self.check_domains(batch, allow_mixing)?;
        let noise = match self.config.sample_mode {
            SampleMode::Stochastic => Some(self.sample_noise(rng)),
            SampleMode::Mean => None,
        };
        let mut g = Graph::new(&self.store);
        let nodes = self.loss(&mut g, batch, noise.as_deref())?;
        let loss = g.value(nodes.total).item().expect("scalar");
        let bce = g.value(nodes.bce).item().expect("scalar");
        let kl = g.value(nodes.kl).item().expect("scalar");
        let grads = g.backward(nodes.total)?;
        let grad_norm = grads.norm();
        Ok((
            StepStats {
                loss,
                bce,
                kl,
                grad_norm,
            },
            grads,
        ))
    }

    pub fn apply(&mut self, opt: &mut AdagradDecay, grads: &Gradients, lr: f64) -> Result<()> {
        self.store.zero_grad();
        self.store.accumulate(grads);
        opt.step(&mut self.store, lr)
    }

    /// One optimizer step on this adapter's parameters.
    pub fn finetune_step(
        &mut self,
        opt: &mut AdagradDecay,
        batch: &FinetuneBatch,
        lr: f64,
        rng: &mut impl Rng,
        allow_mixing: bool,
    ) -> Result<StepStats> {
        let (stats, grads) = self.gradients(batch, rng, allow_mixing)?;
        self.apply(opt, &grads, lr)?;
        Ok(stats)
    }

    fn check_inputs(&self, representation: &Tensor, base_logits: &Tensor) -> Result<()> {
        if representation.ndim() != 2
            || representation.cols() != self.in_dim
            || base_logits.shape() != [representation.rows(), 2]
        {
            return Err(Error::shape(
                "iak_forward",
                format!(
                    "representation {:?} and logits {:?} for adapter input width {}",
                    representation.shape(),
                    base_logits.shape(),
                    self.in_dim
                ),
            ));
        }
        Ok(())
    }

    /// Mean-mode corrected logits for every row.
    pub fn corrected_logits(&self, representation: &Tensor, base_logits: &Tensor) -> Result<Tensor> {
        self.check_inputs(representation, base_logits)?;
        let n = representation.rows();
        let mut out = Vec::with_capacity(2 * n);
        for start in (0..n).step_by(PREDICT_CHUNK) {
            let idx: Vec<usize> = (start..n.min(start + PREDICT_CHUNK)).collect();
            let mut g = Graph::new(&self.store);
            let rep = g.input(representation.select_rows(&idx))?;
            let base = g.input(base_logits.select_rows(&idx))?;
            let (logits, _) = self.forward(&mut g, rep, base, None)?;
            out.extend_from_slice(g.value(logits).data());
        }
        Tensor::new(vec![n, 2], out)
    }

    pub fn predict(&self, representation: &Tensor, base_logits: &Tensor) -> Result<Vec<Prediction>> {
        let logits = self.corrected_logits(representation, base_logits)?;
        Ok((0..logits.rows())
            .map(|i| self.composition.apply([logits.get(i, 0), logits.get(i, 1)]))
            .collect())
    }

    /// Encoder outputs. In stochastic mode every row gets its own weight
    /// sample, so the encoder acts as a noisy channel.
    pub fn encode(&self, representation: &Tensor, mode: SampleMode, rng: &mut impl Rng) -> Result<Tensor> {
        if representation.ndim() != 2 || representation.cols() != self.in_dim {
            return Err(Error::shape("encode", format!("{:?}", representation.shape())));
        }
        let n = representation.rows();
        let mut out = Vec::with_capacity(n * self.config.d_e);
        match mode {
            SampleMode::Mean => {
                let mut g = Graph::new(&self.store);
                let x = g.input(representation.clone())?;
                let z = self.encode_graph(&mut g, x, None)?;
                out.extend_from_slice(g.value(z).data());
            }
            SampleMode::Stochastic => {
                for i in 0..n {
                    let noise = self.sample_noise(rng);
                    let mut g = Graph::new(&self.store);
                    let x = g.input(representation.select_rows(&[i]))?;
                    let z = self.encode_graph(&mut g, x, Some(&noise))?;
                    out.extend_from_slice(g.value(z).data());
                }
            }
        }
        Tensor::new(vec![n, self.config.d_e], out)
    }

    /// Parameter blocks named `adapter/<domain>/<param>` plus JSON metadata.
    pub fn to_blocks(&self) -> (String, Vec<(String, Tensor)>) {
        let meta = AdapterMeta {
            config: self.config.clone(),
            domain: self.domain.to_string(),
            composition: self.composition,
            in_dim: self.in_dim,
        };
        let prefix = format!("adapter/{}", self.domain);
        let blocks = self
            .store
            .named_values()
            .into_iter()
            .map(|(n, t)| (format!("{prefix}/{n}"), t))
            .collect();
        (serde_json::to_string(&meta).expect("metadata serializes"), blocks)
    }

    pub fn from_blocks(meta: &str, blocks: Vec<(String, Tensor)>) -> Result<Self> {
        let meta: AdapterMeta =
            serde_json::from_str(meta).map_err(|e| Error::Checkpoint(format!("bad adapter metadata: {e}")))?;
        let domain: DomainKey = meta.domain.parse()?;
        let mut adapter = IakAdapter::new(meta.config, domain, meta.composition, meta.in_dim, 0)?;
        adapter.store.load_values(blocks)?;
        Ok(adapter)
    }
}

/// Packs adapters into one checkpoint; metadata is a JSON array of the
/// per-adapter metadata in the given order.
pub fn adapters_to_checkpoint(adapters: &[IakAdapter], config_text: &str) -> Checkpoint {
    let mut metas = Vec::new();
    let mut blocks = Vec::new();
    for a in adapters {
        let (meta, b) = a.to_blocks();
        metas.push(serde_json::from_str::<serde_json::Value>(&meta).expect("metadata is JSON"));
        blocks.extend(b);
    }
    Checkpoint::new(config_text, serde_json::Value::Array(metas).to_string(), blocks)
}

/// Unpacks [`adapters_to_checkpoint`]. Blocks are namespaced by domain, so a
/// checkpoint holding two adapters for one domain is rejected.
pub fn adapters_from_checkpoint(ck: &Checkpoint) -> Result<Vec<IakAdapter>> {
    let metas: Vec<serde_json::Value> =
        serde_json::from_str(&ck.meta).map_err(|e| Error::Checkpoint(format!("bad adapter metadata: {e}")))?;
    let mut seen = std::collections::HashSet::new();
    metas
        .into_iter()
        .map(|m| {
            let domain = m
                .get("domain")
                .and_then(|d| d.as_str())
                .ok_or_else(|| Error::Checkpoint("adapter metadata without a domain".into()))?
                .to_string();
            if !seen.insert(domain.clone()) {
                return Err(Error::Checkpoint(format!("two adapters for domain {domain}")));
            }
            IakAdapter::from_blocks(&m.to_string(), ck.namespace(&format!("adapter/{domain}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::Topic;
    use crate::iak::variational::rho_for_sigma;
    use rand_distr::{Distribution, StandardNormal};

    fn key(id: u32) -> DomainKey {
        DomainKey::single(Topic::Region, id)
    }

    fn ids(region: u32) -> DomainIds {
        DomainIds {
            scene: 1,
            region,
            period: 1,
        }
    }

    fn random_batch(n: usize, in_dim: usize, region: u32, seed: u64) -> FinetuneBatch {
        let mut rng = stream_rng(seed, 99);
        let mut normal = |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
        let representation = Tensor::new(vec![n, in_dim], normal(n * in_dim)).unwrap();
        let logits = Tensor::new(vec![n, 2], normal(2 * n)).unwrap();
        let click: Vec<f64> = (0..n).map(|i| (i % 3 == 0) as u8 as f64).collect();
        let purchase: Vec<f64> = (0..n).map(|i| (i % 6 == 0) as u8 as f64).collect();
        FinetuneBatch {
            representation,
            logits,
            labels: Labels { click, purchase },
            domains: vec![ids(region); n],
        }
    }

    fn small_config() -> IakConfig {
        IakConfig {
            d_e: 5,
            decoder_hidden: vec![4],
            ..IakConfig::default()
        }
    }

    #[test]
    fn fresh_adapter_reproduces_backbone() {
        for composition in [Composition::Independent, Composition::ChainProduct] {
            let a = IakAdapter::new(small_config(), key(1), composition, 6, 3).unwrap();
            let b = random_batch(50, 6, 1, 1);
            let got = a.predict(&b.representation, &b.logits).unwrap();
            for (i, p) in got.iter().enumerate() {
                assert_eq!(*p, composition.apply([b.logits.get(i, 0), b.logits.get(i, 1)]));
            }
        }
    }

    #[test]
    fn adapters_are_isolated_and_mean_mode_is_deterministic() {
        let mut a = IakAdapter::new(small_config(), key(1), Composition::Independent, 6, 3).unwrap();
        let mut b = IakAdapter::new(small_config(), key(2), Composition::Independent, 6, 3).unwrap();
        let batch = random_batch(40, 6, 1, 2);
        let mut rng = stream_rng(0, 0);
        let mut opt = AdagradDecay::with_defaults(a.store());
        for _ in 0..5 {
            a.finetune_step(&mut opt, &batch, 0.05, &mut rng, false).unwrap();
        }
        let b_before = b.corrected_logits(&batch.representation, &batch.logits).unwrap();
        let a_out = a.corrected_logits(&batch.representation, &batch.logits).unwrap();
        assert_eq!(a_out, a.corrected_logits(&batch.representation, &batch.logits).unwrap());
        for p in b.store_mut().iter_mut() {
            p.value.data_mut().iter_mut().for_each(|v| *v += 1.0);
        }
        assert_eq!(a_out, a.corrected_logits(&batch.representation, &batch.logits).unwrap());
        assert_ne!(b_before, b.corrected_logits(&batch.representation, &batch.logits).unwrap());
    }

    #[test]
    fn ib_loss_examples() {
        let mut cfg = small_config();
        cfg.beta = 0.0;
        cfg.loss_weights = [0.5, 0.5];
        let mut a = IakAdapter::new(cfg.clone(), key(1), Composition::Independent, 4, 1).unwrap();
        let mut batch = random_batch(8, 4, 1, 5);
        batch.logits = Tensor::zeros(&[8, 2]);
        let eval = |a: &IakAdapter| {
            let mut g = Graph::new(a.store());
            let n = a.loss(&mut g, &batch, None).unwrap();
            (g.value(n.total).item().unwrap(), g.value(n.bce).item().unwrap())
        };
        let (total, bce) = eval(&a);
        assert_eq!(total, bce);
        assert!((bce - std::f64::consts::LN_2).abs() < 1e-15);
        // Every entry at mu = 1, sigma = 1 contributes KL 0.5.
        for p in a.store_mut().iter_mut() {
            if p.name.ends_with("_mu") {
                p.value.data_mut().iter_mut().for_each(|v| *v = 1.0);
            } else if p.name.ends_with("_rho") {
                p.value.data_mut().iter_mut().for_each(|v| *v = rho_for_sigma(1.0));
            }
        }
        cfg.beta = 1.0;
        let mut b = IakAdapter::new(cfg, key(1), Composition::Independent, 4, 1).unwrap();
        b.store_mut().load_values(a.store().named_values()).unwrap();
        let (total, _) = eval(&b);
        assert!((total - (std::f64::consts::LN_2 + 0.5)).abs() < 1e-12);
        assert!((ib_loss(std::f64::consts::LN_2, 0.5 * 24.0, 24, 1.0) - total).abs() < 1e-12);
    }

    #[test]
    fn perfect_predictions_at_prior_have_no_loss() {
        let mut a = IakAdapter::new(small_config(), key(1), Composition::Independent, 4, 1).unwrap();
        for p in a.store_mut().iter_mut() {
            if p.name.ends_with("_mu") {
                p.value.data_mut().iter_mut().for_each(|v| *v = 0.0);
            } else if p.name.ends_with("_rho") {
                p.value.data_mut().iter_mut().for_each(|v| *v = rho_for_sigma(1.0));
            }
        }
        let mut batch = random_batch(6, 4, 1, 5);
        batch.logits = Tensor::from_rows(
            &(0..6)
                .map(|i| {
                    let s = |y: f64| if y == 1.0 { 60.0 } else { -60.0 };
                    vec![s(batch.labels.click[i]), s(batch.labels.purchase[i])]
                })
                .collect::<Vec<_>>(),
        )
        .unwrap();
        let mut g = Graph::new(a.store());
        let n = a.loss(&mut g, &batch, None).unwrap();
        assert!(g.value(n.total).item().unwrap() <= 1e-11);
    }

    #[test]
    fn zero_gradient_batch_leaves_adapter_unchanged() {
        let mut cfg = small_config();
        cfg.beta = 0.0;
        let mut a = IakAdapter::new(cfg, key(1), Composition::Independent, 4, 1).unwrap();
        let mut batch = random_batch(6, 4, 1, 5);
        batch.labels.click = vec![1.0; 6];
        batch.labels.purchase = vec![1.0; 6];
        batch.logits = Tensor::full(&[6, 2], 40.0);
        let before = a.store().named_values();
        let mut opt = AdagradDecay::with_defaults(a.store());
        let stats = a.finetune_step(&mut opt, &batch, 0.1, &mut stream_rng(0, 0), false).unwrap();
        assert_eq!(stats.grad_norm, 0.0);
        assert_eq!(before, a.store().named_values());
    }

    #[test]
    fn wrong_domain_rejected_unless_mixing() {
        let mut a = IakAdapter::new(small_config(), key(1), Composition::Independent, 4, 1).unwrap();
        let batch = random_batch(6, 4, 2, 5);
        let mut opt = AdagradDecay::with_defaults(a.store());
        let mut rng = stream_rng(0, 0);
        assert!(a.finetune_step(&mut opt, &batch, 0.1, &mut rng, false).is_err());
        assert!(a.finetune_step(&mut opt, &batch, 0.1, &mut rng, true).is_ok());
        let wide = random_batch(6, 5, 1, 5);
        assert!(a.predict(&wide.representation, &wide.logits).is_err());
    }

    #[test]
    fn training_reduces_loss_on_separable_toy_domain() {
        let n = 200;
        let mut batch = random_batch(n, 4, 1, 9);
        batch.logits = Tensor::zeros(&[n, 2]);
        for i in 0..n {
            let y = (batch.representation.get(i, 0) + batch.representation.get(i, 1) > 0.0) as u8 as f64;
            batch.labels.click[i] = y;
            batch.labels.purchase[i] = y;
        }
        let mut a = IakAdapter::new(small_config(), key(1), Composition::Independent, 4, 2).unwrap();
        let mut opt = AdagradDecay::with_defaults(a.store());
        let mut rng = stream_rng(1, 1);
        let initial = a.gradients(&batch, &mut rng, false).unwrap().0.bce;
        let mut last = initial;
        for _ in 0..200 {
            last = a.finetune_step(&mut opt, &batch, 0.01, &mut rng, false).unwrap().bce;
        }
        assert!(last < initial, "{last} !< {initial}");
    }

    #[test]
    fn blocks_round_trip() {
        let mut a = IakAdapter::new(small_config(), key(3), Composition::ChainProduct, 4, 1).unwrap();
        let batch = random_batch(20, 4, 3, 5);
        let mut opt = AdagradDecay::with_defaults(a.store());
        a.finetune_step(&mut opt, &batch, 0.05, &mut stream_rng(0, 0), false).unwrap();
        let (meta, blocks) = a.to_blocks();
        let prefix = format!("adapter/{}/", a.domain());
        let stripped = blocks
            .into_iter()
            .map(|(n, t)| (n.strip_prefix(&prefix).unwrap().to_string(), t))
            .collect();
        let b = IakAdapter::from_blocks(&meta, stripped).unwrap();
        let other = IakAdapter::new(small_config(), key(4), Composition::ChainProduct, 4, 2).unwrap();
        let ck = adapters_to_checkpoint(&[other.clone(), a.clone()], "");
        let both = adapters_from_checkpoint(&Checkpoint::from_bytes(&ck.to_bytes()).unwrap()).unwrap();
        assert_eq!(both[0].store().named_values(), other.store().named_values());
        assert_eq!(both[1].store().named_values(), a.store().named_values());
        assert_eq!(b.domain(), a.domain());
        let duplicate = adapters_to_checkpoint(&[a.clone(), b.clone()], "");
        assert!(adapters_from_checkpoint(&duplicate).is_err());
        assert_eq!(
            a.corrected_logits(&batch.representation, &batch.logits).unwrap(),
            b.corrected_logits(&batch.representation, &batch.logits).unwrap()
        );
    }
}
