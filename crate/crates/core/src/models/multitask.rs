//! Shared Bottom, ESMM, MMoE and the composite base recommender.
//!
//! Every kind shares [`FeatureEmbedder`] and exposes the same outputs: two
//! head logits `[n, 2]` and the pre-logit representation `[n, 2 * h]`, the
//! concatenation of the two task towers' last hidden activations. The base
//! recommender is MMoE whose per-task output layers are replaced by one
//! stacked logits layer reading both towers.

use serde::{Deserialize, Serialize};

use crate::autodiff::{sigmoid, Graph, NodeId, ParamStore};
use crate::checkpoint::{store_digest, Checkpoint};
use crate::datagen::{GeneratorConfig, InteractionRecord, Topic};
use crate::error::{Error, Result};
use crate::models::embedding::{EncodedBatch, FeatureEmbedder, FeatureVocab};
use crate::models::layers::{Dense, Mlp};
use crate::rng::{stream_rng, STREAM_MODEL_INIT};
use crate::tensor::Tensor;

pub const TASK_NAMES: [&str; 2] = ["ctr", "ctcvr"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    SharedBottom,
    Esmm,
    Mmoe,
    Base,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::SharedBottom, ModelKind::Esmm, ModelKind::Mmoe, ModelKind::Base];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::SharedBottom => "shared_bottom",
            ModelKind::Esmm => "esmm",
            ModelKind::Mmoe => "mmoe",
            ModelKind::Base => "base",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown model kind {s:?}")))
    }

    pub fn composition(self) -> Composition {
        match self {
            ModelKind::Esmm => Composition::ChainProduct,
            _ => Composition::Independent,
        }
    }
}

/// How the two head logits turn into task probabilities.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Composition {
    /// `p_ctr = σ(l0)`, `p_ctcvr = σ(l1)`.
    Independent,
    /// `p_ctr = σ(l0)`, `p_cvr = σ(l1)`, `p_ctcvr = p_ctr · p_cvr`.
    ChainProduct,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub p_ctr: f64,
    pub p_cvr: Option<f64>,
    pub p_ctcvr: f64,
}

impl Composition {
    pub fn apply(self, logits: [f64; 2]) -> Prediction {
        let p_ctr = sigmoid(logits[0]);
        match self {
            Composition::Independent => Prediction {
                p_ctr,
                p_cvr: None,
                p_ctcvr: sigmoid(logits[1]),
            },
            Composition::ChainProduct => {
                let p_cvr = sigmoid(logits[1]);
                Prediction {
                    p_ctr,
                    p_cvr: Some(p_cvr),
                    p_ctcvr: p_ctr * p_cvr,
                }
            }
        }
    }

    /// Graph version of [`Composition::apply`]; returns `(p_ctr, p_ctcvr)` columns.
    pub fn apply_graph(self, g: &mut Graph, logits: NodeId) -> Result<(NodeId, NodeId)> {
        let l0 = g.slice_cols(logits, 0, 1)?;
        let l1 = g.slice_cols(logits, 1, 2)?;
        let p_ctr = g.sigmoid(l0)?;
        let second = g.sigmoid(l1)?;
        let p_ctcvr = match self {
            Composition::Independent => second,
            Composition::ChainProduct => g.mul(p_ctr, second)?,
        };
        Ok((p_ctr, p_ctcvr))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub hidden_sizes: Vec<usize>,
    pub n_experts: usize,
    pub embedding_dim: usize,
    pub loss_weights: [f64; 2],
    pub history_len: usize,
    pub vocab: FeatureVocab,
}

impl ModelConfig {
    /// Desk-scale defaults sized for data produced by `gen`.
    pub fn for_data(kind: ModelKind, gen: &GeneratorConfig) -> Self {
        ModelConfig {
            kind,
            hidden_sizes: vec![64, 32, 16],
            n_experts: 2,
            embedding_dim: 8,
            loss_weights: [1.0, 1.0],
            history_len: gen.history_len,
            vocab: FeatureVocab {
                users: gen.n_users + 1,
                items: gen.n_items + 1,
                scenes: gen.domains_of(Topic::Scene).len() + 1,
                regions: gen.domains_of(Topic::Region).len() + 1,
                periods: gen.domains_of(Topic::Period).len() + 1,
                context: gen.context_vocab().to_vec(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::InvalidArgument("hidden sizes must be non-empty and positive".into()));
        }
        if self.n_experts == 0 {
            return Err(Error::InvalidArgument("n_experts must be at least 1".into()));
        }
        if self.embedding_dim == 0 {
            return Err(Error::InvalidArgument("embedding_dim must be positive".into()));
        }
        let v = &self.vocab;
        if [v.users, v.items, v.scenes, v.regions, v.periods].contains(&0) || v.context.contains(&0) {
            return Err(Error::InvalidArgument("vocabulary sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn tower_hidden(&self) -> usize {
        *self.hidden_sizes.last().unwrap()
    }

    pub fn representation_dim(&self) -> usize {
        2 * self.tower_hidden()
    }

    fn bottom_sizes(&self) -> &[usize] {
        &self.hidden_sizes[..self.hidden_sizes.len() - 1]
    }
}

/// Task tower: one hidden layer then a scalar logit (absent for the base
/// model, whose stacked layer produces both logits).
#[derive(Clone, Debug)]
struct Tower {
    hidden: Mlp,
    out: Option<Dense>,
}

#[derive(Clone, Debug)]
enum Head {
    SharedBottom {
        trunk: Mlp,
        towers: [Tower; 2],
    },
    Esmm {
        towers: [Tower; 2],
    },
    Mmoe {
        experts: Vec<Mlp>,
        gates: [Dense; 2],
        towers: [Tower; 2],
        stacked: Option<Dense>,
    },
}

/// Forward results of one batch.
pub struct HeadOutput {
    pub logits: NodeId,
    pub representation: NodeId,
    /// Per-task softmax gate rows (MMoE and base only).
    pub gates: Option<[NodeId; 2]>,
}

/// Frozen backbone outputs for a set of records.
#[derive(Clone, Debug)]
pub struct BackboneOutputs {
    pub representation: Tensor,
    pub logits: Tensor,
}

const PREDICT_CHUNK: usize = 2048;

#[derive(Clone, Debug)]
pub struct MultiTaskModel {
    config: ModelConfig,
    store: ParamStore,
    embed: FeatureEmbedder,
    head: Head,
}

impl MultiTaskModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(seed, STREAM_MODEL_INIT);
        let mut store = ParamStore::new();
        let embed = FeatureEmbedder::new(&mut store, &config.vocab, config.embedding_dim, config.history_len, &mut rng);
        let in_dim = embed.out_dim();
        let th = config.tower_hidden();
        let bottom = config.bottom_sizes().to_vec();
        let bottom_out = bottom.last().copied().unwrap_or(in_dim);
        let stacked_kind = config.kind == ModelKind::Base;
        let mut tower = |store: &mut ParamStore, name: &str, input: usize, sizes: &[usize], with_out: bool| Tower {
            hidden: Mlp::new(store, &format!("{name}.hidden"), input, sizes, &mut rng),
            out: with_out.then(|| Dense::new(store, &format!("{name}.out"), *sizes.last().unwrap(), 1, &mut rng)),
        };
        let head = match config.kind {
            ModelKind::SharedBottom => {
                let towers = [
                    tower(&mut store, "tower.ctr", bottom_out, &[th], true),
                    tower(&mut store, "tower.ctcvr", bottom_out, &[th], true),
                ];
                let trunk = Mlp::new(&mut store, "trunk", in_dim, &bottom, &mut stream_rng(seed, STREAM_MODEL_INIT + 1));
                Head::SharedBottom { trunk, towers }
            }
            ModelKind::Esmm => Head::Esmm {
                towers: [
                    tower(&mut store, "tower.ctr", in_dim, &config.hidden_sizes, true),
                    tower(&mut store, "tower.cvr", in_dim, &config.hidden_sizes, true),
                ],
            },
            ModelKind::Mmoe | ModelKind::Base => {
                let towers = [
                    tower(&mut store, "tower.ctr", bottom_out, &[th], !stacked_kind),
                    tower(&mut store, "tower.ctcvr", bottom_out, &[th], !stacked_kind),
                ];
                let mut rng = stream_rng(seed, STREAM_MODEL_INIT + 1);
                let experts = (0..config.n_experts)
                    .map(|e| Mlp::new(&mut store, &format!("expert{e}"), in_dim, &bottom, &mut rng))
                    .collect();
                let gates = [
                    Dense::new(&mut store, "gate.ctr", in_dim, config.n_experts, &mut rng),
                    Dense::new(&mut store, "gate.ctcvr", in_dim, config.n_experts, &mut rng),
                ];
                let stacked = stacked_kind.then(|| Dense::new(&mut store, "stacked_logits", 2 * th, 2, &mut rng));
                Head::Mmoe {
                    experts,
                    gates,
                    towers,
                    stacked,
                }
            }
        };
        Ok(MultiTaskModel {
            config,
            store,
            embed,
            head,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn composition(&self) -> Composition {
        self.config.kind.composition()
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn freeze(&mut self) {
        self.store.freeze_all();
    }

    pub fn digest(&self) -> String {
        store_digest(&self.store)
    }

    pub fn representation_dim(&self) -> usize {
        self.config.representation_dim()
    }

    pub fn encode(&self, records: &[InteractionRecord]) -> EncodedBatch {
        EncodedBatch::from_records(records, self.embed.context.len(), self.config.history_len)
    }

    fn tower_forward(g: &mut Graph, t: &Tower, x: NodeId) -> Result<(NodeId, Option<NodeId>)> {
        let h = t.hidden.forward(g, x)?;
        let logit = match &t.out {
            Some(d) => Some(d.forward(g, h)?),
            None => None,
        };
        Ok((h, logit))
    }

    /// Records the forward pass of `batch` on `g`.
    pub fn forward(&self, g: &mut Graph, batch: &EncodedBatch) -> Result<HeadOutput> {
        let x = self.embed.forward(g, batch)?;
        match &self.head {
            Head::SharedBottom { trunk, towers } => {
                let shared = trunk.forward(g, x)?;
                let (h0, l0) = Self::tower_forward(g, &towers[0], shared)?;
                let (h1, l1) = Self::tower_forward(g, &towers[1], shared)?;
                Ok(HeadOutput {
                    logits: g.concat(&[l0.unwrap(), l1.unwrap()])?,
                    representation: g.concat(&[h0, h1])?,
                    gates: None,
                })
            }
            Head::Esmm { towers } => {
                let (h0, l0) = Self::tower_forward(g, &towers[0], x)?;
                let (h1, l1) = Self::tower_forward(g, &towers[1], x)?;
                Ok(HeadOutput {
                    logits: g.concat(&[l0.unwrap(), l1.unwrap()])?,
                    representation: g.concat(&[h0, h1])?,
                    gates: None,
                })
            }
            Head::Mmoe {
                experts,
                gates,
                towers,
                stacked,
            } => {
                let outs = experts
                    .iter()
                    .map(|e| e.forward(g, x))
                    .collect::<Result<Vec<_>>>()?;
                let mut gate_nodes = [x; 2];
                let mut hidden = [x; 2];
                let mut logits = [None; 2];
                for t in 0..2 {
                    let gl = gates[t].forward(g, x)?;
                    let gate = g.softmax(gl)?;
                    gate_nodes[t] = gate;
                    let mut mix = None;
                    for (e, &out) in outs.iter().enumerate() {
                        let w = g.slice_cols(gate, e, e + 1)?;
                        let term = g.mul_col(out, w)?;
                        mix = Some(match mix {
                            None => term,
                            Some(acc) => g.add(acc, term)?,
                        });
                    }
                    let (h, l) = Self::tower_forward(g, &towers[t], mix.unwrap())?;
                    hidden[t] = h;
                    logits[t] = l;
                }
                let representation = g.concat(&hidden)?;
                let logits = match stacked {
                    Some(d) => d.forward(g, representation)?,
                    None => g.concat(&[logits[0].unwrap(), logits[1].unwrap()])?,
                };
                Ok(HeadOutput {
                    logits,
                    representation,
                    gates: Some(gate_nodes),
                })
            }
        }
    }

    /// Weighted multi-task BCE of one batch, recorded on `g`.
    pub fn loss(&self, g: &mut Graph, batch: &EncodedBatch, labels: &Labels) -> Result<(NodeId, [NodeId; 2])> {
        let out = self.forward(g, batch)?;
        multitask_bce(g, self.composition(), out.logits, labels, self.config.loss_weights)
    }

    /// Representation and logits for every record, computed in chunks.
    pub fn outputs(&self, records: &[InteractionRecord]) -> Result<BackboneOutputs> {
        let mut reps = Vec::new();
        let mut logits = Vec::new();
        for chunk in records.chunks(PREDICT_CHUNK) {
            let batch = self.encode(chunk);
            let mut g = Graph::new(&self.store);
            let out = self.forward(&mut g, &batch)?;
            reps.extend_from_slice(g.value(out.representation).data());
            logits.extend_from_slice(g.value(out.logits).data());
        }
        Ok(BackboneOutputs {
            representation: Tensor::new(vec![records.len(), self.representation_dim()], reps)?,
            logits: Tensor::new(vec![records.len(), 2], logits)?,
        })
    }

    pub fn predict(&self, records: &[InteractionRecord]) -> Result<Vec<Prediction>> {
        let out = self.outputs(records)?;
        let c = self.composition();
        Ok((0..records.len())
            .map(|i| c.apply([out.logits.get(i, 0), out.logits.get(i, 1)]))
            .collect())
    }

    pub fn to_checkpoint(&self, config_text: &str) -> Checkpoint {
        let meta = serde_json::to_string(&self.config).expect("config serializes");
        let blocks = self
            .store
            .named_values()
            .into_iter()
            .map(|(n, t)| (format!("backbone/{n}"), t))
            .collect();
        Checkpoint::new(config_text, meta, blocks)
    }

    /// Rebuilds a model from a checkpoint written by [`Self::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let config: ModelConfig = serde_json::from_str(&ck.meta)
            .map_err(|e| Error::Checkpoint(format!("bad model metadata: {e}")))?;
        let mut model = MultiTaskModel::new(config, 0)?;
        model.store.load_values(ck.namespace("backbone"))?;
        Ok(model)
    }
}

/// Per-record 0/1 labels for both tasks.
#[derive(Clone, Debug, Default)]
pub struct Labels {
    pub click: Vec<f64>,
    pub purchase: Vec<f64>,
}

impl Labels {
    pub fn from_records(records: &[InteractionRecord]) -> Self {
        Labels {
            click: records.iter().map(|r| r.click as f64).collect(),
            purchase: records.iter().map(|r| r.purchase as f64).collect(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> Labels {
        Labels {
            click: idx.iter().map(|&i| self.click[i]).collect(),
            purchase: idx.iter().map(|&i| self.purchase[i]).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.click.len()
    }

    pub fn is_empty(&self) -> bool {
        self.click.is_empty()
    }
}

/// `w0 * BCE(p_ctr, click) + w1 * BCE(p_ctcvr, purchase)`. The CVR factor of
/// ESMM is only reached through the CTCVR term.
pub fn multitask_bce(
    g: &mut Graph,
    composition: Composition,
    logits: NodeId,
    labels: &Labels,
    weights: [f64; 2],
) -> Result<(NodeId, [NodeId; 2])> {
    let (p_ctr, p_ctcvr) = composition.apply_graph(g, logits)?;
    let l0 = g.bce(p_ctr, labels.click.clone())?;
    let l1 = g.bce(p_ctcvr, labels.purchase.clone())?;
    let a = g.scale(l0, weights[0])?;
    let b = g.scale(l1, weights[1])?;
    Ok((g.add(a, b)?, [l0, l1]))
}

/// Weighted per-task BCE over plain predictions, each task averaged over the batch.
pub fn bce_loss(predictions: &[Prediction], labels: &[(u8, u8)], weights: [f64; 2]) -> Result<f64> {
    if predictions.len() != labels.len() || predictions.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let eps = crate::autodiff::PROB_EPS;
    let term = |p: f64, y: u8| -> Result<f64> {
        let p = p.clamp(eps, 1.0 - eps);
        match y {
            1 => Ok(-p.ln()),
            0 => Ok(-(1.0 - p).ln()),
            _ => Err(Error::InvalidArgument(format!("label {y} is not 0 or 1"))),
        }
    };
    let n = predictions.len() as f64;
    let mut sums = [0.0; 2];
    for (p, &(c, b)) in predictions.iter().zip(labels) {
        sums[0] += term(p.p_ctr, c)?;
        sums[1] += term(p.p_ctcvr, b)?;
    }
    Ok(weights[0] * sums[0] / n + weights[1] * sums[1] / n)
}
