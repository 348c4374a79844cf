use std::collections::HashMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::datagen::{DomainIds, DomainKey, InteractionRecord, Topic};
use crate::error::{Error, Result};
use crate::iak::IakAdapter;
use crate::models::MultiTaskModel;
use crate::tensor::Tensor;

/// `served_by` value when no adapter matches the request's domain.
pub const ZERO_SHOT: &str = "zero_shot";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RouterConfig {
    /// Topics forming the routing key; every loaded adapter must be keyed on
    /// exactly these topics.
    pub routing_topics: Vec<Topic>,
    /// Evaluate only the selected adapter instead of all of them.
    pub lazy_activation: bool,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig {
            routing_topics: vec![Topic::Region],
            lazy_activation: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreRequest {
    pub user_id: u32,
    pub item_id: u32,
    pub domain_ids: DomainIds,
    pub feature_ids: Vec<u32>,
}

impl ScoreRequest {
    pub fn from_record(r: &InteractionRecord) -> Self {
        ScoreRequest {
            user_id: r.user_id,
            item_id: r.item_id,
            domain_ids: r.domain_ids,
            feature_ids: r.feature_ids.clone(),
        }
    }

    fn to_record(&self) -> InteractionRecord {
        InteractionRecord {
            timestamp: 0,
            user_id: self.user_id,
            item_id: self.item_id,
            domain_ids: self.domain_ids,
            feature_ids: self.feature_ids.clone(),
            click: 0,
            purchase: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub p_ctr: f64,
    pub p_ctcvr: f64,
    pub served_by: String,
    pub latency_micros: u64,
}

impl ScoreResponse {
    /// Equality ignoring latency.
    pub fn same_scores(&self, other: &ScoreResponse) -> bool {
        self.p_ctr.to_bits() == other.p_ctr.to_bits()
            && self.p_ctcvr.to_bits() == other.p_ctcvr.to_bits()
            && self.served_by == other.served_by
    }
}

/// A frozen backbone plus one adapter per routing key. Every request is run
/// through the backbone, all adapters score the shared representation, and the
/// adapter whose key matches the request is returned. Requests from unknown
/// domains get the backbone's own (zero-shot) scores.
#[derive(Clone, Debug)]
pub struct DomainRouter {
    backbone: MultiTaskModel,
    adapters: Vec<IakAdapter>,
    index: HashMap<DomainKey, usize>,
    config: RouterConfig,
}

impl DomainRouter {
    pub fn new(backbone: MultiTaskModel, adapters: Vec<IakAdapter>, config: RouterConfig) -> Result<Self> {
        let topics = DomainKey::new(config.routing_topics.iter().map(|&t| (t, 0)).collect())?.topics();
        let mut index = HashMap::new();
        for (i, a) in adapters.iter().enumerate() {
            if a.domain().topics() != topics {
                return Err(Error::InvalidArgument(format!(
                    "adapter {} is not keyed on the routing topics {:?}",
                    a.domain(),
                    config.routing_topics
                )));
            }
            if a.in_dim() != backbone.representation_dim() || a.composition() != backbone.composition() {
                return Err(Error::InvalidArgument(format!("adapter {} does not fit the backbone", a.domain())));
            }
            if index.insert(a.domain().clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate adapter for {}", a.domain())));
            }
        }
        Ok(DomainRouter {
            backbone,
            adapters,
            index,
            config,
        })
    }

    pub fn backbone(&self) -> &MultiTaskModel {
        &self.backbone
    }

    pub fn adapters(&self) -> &[IakAdapter] {
        &self.adapters
    }

    pub fn adapters_mut(&mut self) -> &mut [IakAdapter] {
        &mut self.adapters
    }

    pub fn config(&self) -> &RouterConfig {
        &self.config
    }

    /// Index of the adapter serving `ids`, if any.
    pub fn select(&self, ids: &DomainIds) -> Option<usize> {
        let key = DomainKey::project(ids, &self.config.routing_topics).ok()?;
        self.index.get(&key).copied()
    }

    /// Scores a batch of requests; each response is identical to scoring the
    /// request alone.
    pub fn route_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>> {
        let start = Instant::now();
        let records: Vec<InteractionRecord> = requests.iter().map(ScoreRequest::to_record).collect();
        let out = self.backbone.outputs(&records)?;
        let selected: Vec<Option<usize>> = requests.iter().map(|r| self.select(&r.domain_ids)).collect();
        let mut corrected: Vec<Option<Tensor>> = vec![None; self.adapters.len()];
        for (i, (a, slot)) in self.adapters.iter().zip(&mut corrected).enumerate() {
            let wanted = !self.config.lazy_activation || selected.contains(&Some(i));
            if wanted {
                *slot = Some(a.corrected_logits(&out.representation, &out.logits)?);
            }
        }
        let per_request = (start.elapsed().as_micros() as u64) / requests.len().max(1) as u64;
        let composition = self.backbone.composition();
        Ok(selected
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (logits, served_by) = match s {
                    Some(a) => {
                        let t = corrected[*a].as_ref().expect("selected adapter evaluated");
                        ([t.get(i, 0), t.get(i, 1)], self.adapters[*a].domain().to_string())
                    }
                    None => ([out.logits.get(i, 0), out.logits.get(i, 1)], ZERO_SHOT.to_string()),
                };
                let p = composition.apply(logits);
                ScoreResponse {
                    p_ctr: p.p_ctr,
                    p_ctcvr: p.p_ctcvr,
                    served_by,
                    latency_micros: per_request,
                }
            })
            .collect())
    }

    pub fn route_score(&self, request: &ScoreRequest) -> Result<ScoreResponse> {
        Ok(self.route_batch(std::slice::from_ref(request))?.remove(0))
    }
}
