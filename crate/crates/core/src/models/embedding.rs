use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, NodeId, ParamId, ParamStore};
use crate::datagen::InteractionRecord;
use crate::error::Result;
use crate::tensor::Tensor;

/// A lookup table; row 0 absorbs every out-of-vocabulary id.
#[derive(Clone, Debug)]
pub struct EmbeddingTable {
    pub vocab_size: usize,
    pub dim: usize,
    pub rows: ParamId,
}

impl EmbeddingTable {
    pub fn new(store: &mut ParamStore, name: &str, vocab_size: usize, dim: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, 0.1).expect("valid");
        let data = (0..vocab_size * dim).map(|_| normal.sample(rng)).collect();
        EmbeddingTable {
            vocab_size,
            dim,
            rows: store.add(
                format!("{name}.emb"),
                Tensor::new(vec![vocab_size, dim], data).expect("sized"),
            ),
        }
    }

    pub fn index(&self, id: u32) -> usize {
        let i = id as usize;
        if i < self.vocab_size {
            i
        } else {
            0
        }
    }

    pub fn lookup(&self, g: &mut Graph, ids: &[u32]) -> Result<NodeId> {
        g.gather(self.rows, ids.iter().map(|&i| self.index(i)).collect())
    }
}

/// Vocabulary sizes for every categorical input (each includes row 0).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVocab {
    pub users: usize,
    pub items: usize,
    pub scenes: usize,
    pub regions: usize,
    pub periods: usize,
    pub context: Vec<usize>,
}

/// Column-major view of a batch of records, ready for embedding.
#[derive(Clone, Debug)]
pub struct EncodedBatch {
    pub users: Vec<u32>,
    pub items: Vec<u32>,
    pub scenes: Vec<u32>,
    pub regions: Vec<u32>,
    pub periods: Vec<u32>,
    pub context: Vec<Vec<u32>>,
    pub history: Vec<Vec<u32>>,
}

impl EncodedBatch {
    /// `feature_ids` layout: `n_context` context columns, then `history_len`
    /// recent item ids (0 = padding). Later columns are ignored; missing
    /// columns read as 0.
    pub fn from_records(records: &[InteractionRecord], n_context: usize, history_len: usize) -> Self {
        let col = |r: &InteractionRecord, j: usize| r.feature_ids.get(j).copied().unwrap_or(0);
        EncodedBatch {
            users: records.iter().map(|r| r.user_id).collect(),
            items: records.iter().map(|r| r.item_id).collect(),
            scenes: records.iter().map(|r| r.domain_ids.scene).collect(),
            regions: records.iter().map(|r| r.domain_ids.region).collect(),
            periods: records.iter().map(|r| r.domain_ids.period).collect(),
            context: (0..n_context)
                .map(|j| records.iter().map(|r| col(r, j)).collect())
                .collect(),
            history: records
                .iter()
                .map(|r| {
                    (0..history_len)
                        .map(|k| col(r, n_context + k))
                        .filter(|&id| id != 0)
                        .collect()
                })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

/// The embedding layer shared by every model kind: one table per field,
/// with the user history mean-pooled through the item table.
#[derive(Clone, Debug)]
pub struct FeatureEmbedder {
    pub user: EmbeddingTable,
    pub item: EmbeddingTable,
    pub scene: EmbeddingTable,
    pub region: EmbeddingTable,
    pub period: EmbeddingTable,
    pub context: Vec<EmbeddingTable>,
    pub history_len: usize,
}

impl FeatureEmbedder {
    pub fn new(store: &mut ParamStore, vocab: &FeatureVocab, dim: usize, history_len: usize, rng: &mut impl Rng) -> Self {
        FeatureEmbedder {
            user: EmbeddingTable::new(store, "embed.user", vocab.users, dim, rng),
            item: EmbeddingTable::new(store, "embed.item", vocab.items, dim, rng),
            scene: EmbeddingTable::new(store, "embed.scene", vocab.scenes, dim, rng),
            region: EmbeddingTable::new(store, "embed.region", vocab.regions, dim, rng),
            period: EmbeddingTable::new(store, "embed.period", vocab.periods, dim, rng),
            context: vocab
                .context
                .iter()
                .enumerate()
                .map(|(i, &v)| EmbeddingTable::new(store, &format!("embed.ctx{i}"), v, dim, rng))
                .collect(),
            history_len,
        }
    }

    pub fn out_dim(&self) -> usize {
        self.user.dim * (6 + self.context.len())
    }

    pub fn forward(&self, g: &mut Graph, batch: &EncodedBatch) -> Result<NodeId> {
        let mut parts = vec![
            self.user.lookup(g, &batch.users)?,
            self.item.lookup(g, &batch.items)?,
            self.scene.lookup(g, &batch.scenes)?,
            self.region.lookup(g, &batch.regions)?,
            self.period.lookup(g, &batch.periods)?,
        ];
        for (table, ids) in self.context.iter().zip(&batch.context) {
            parts.push(table.lookup(g, ids)?);
        }
        let groups = batch
            .history
            .iter()
            .map(|h| h.iter().map(|&i| self.item.index(i)).collect())
            .collect();
        parts.push(g.gather_mean(self.item.rows, groups)?);
        g.concat(&parts)
    }
}
