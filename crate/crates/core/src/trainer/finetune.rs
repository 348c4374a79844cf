use rand::seq::SliceRandom;
use serde::Serialize;

use crate::autodiff::AdagradDecay;
use crate::datagen::{last_days, DomainKey, InteractionRecord};
use crate::error::{Error, Result};
use crate::iak::{FinetuneBatch, IakAdapter, IakConfig};
use crate::models::{Labels, MultiTaskModel};
use crate::rng::{stream_rng, STREAM_ADAPTER_NOISE, STREAM_SHUFFLE};
use crate::tensor::Tensor;
use crate::trainer::{domain_seed, dynamic_lr, mix_domains, TrainConfig};

/// Records feeding one adapter, with their mixing weight.
#[derive(Clone, Debug)]
pub struct FinetuneSource {
    pub records: Vec<InteractionRecord>,
    pub weight: f64,
}

/// One adapter to train. `sources[0]` holds the domain's own records; further
/// sources are auxiliary domains mixed in by weight.
#[derive(Clone, Debug)]
pub struct FinetuneTask {
    pub domain: DomainKey,
    pub sources: Vec<FinetuneSource>,
}

impl FinetuneTask {
    pub fn single(domain: DomainKey, records: Vec<InteractionRecord>) -> Self {
        FinetuneTask {
            domain,
            sources: vec![FinetuneSource { records, weight: 1.0 }],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FinetuneCurvePoint {
    pub domain: String,
    pub step: usize,
    pub n_samples: usize,
    pub lr: f64,
    pub loss: f64,
    pub bce: f64,
    pub kl: f64,
    pub grad_norm: f64,
}

#[derive(Clone, Debug)]
pub struct FinetuneReport {
    pub adapters: Vec<IakAdapter>,
    pub curve: Vec<FinetuneCurvePoint>,
    /// Joint steps where one domain took practically the whole learning rate.
    pub saturated_steps: usize,
}

/// The domain's records among the last `days` days of `train`.
pub fn finetune_window(train: &[InteractionRecord], domain: &DomainKey, days: usize) -> Result<Vec<InteractionRecord>> {
    let window = last_days(train, days)?;
    let records: Vec<InteractionRecord> = window.into_iter().filter(|r| r.in_domain(domain)).collect();
    if records.is_empty() {
        return Err(Error::InvalidArgument(format!("no records for domain {domain} in the last {days} days")));
    }
    Ok(records)
}

/// Frozen backbone outputs, labels and domain ids of `records`.
pub fn backbone_batch(backbone: &MultiTaskModel, records: &[InteractionRecord]) -> Result<FinetuneBatch> {
    let out = backbone.outputs(records)?;
    Ok(FinetuneBatch {
        representation: out.representation,
        logits: out.logits,
        labels: Labels::from_records(records),
        domains: records.iter().map(|r| r.domain_ids).collect(),
    })
}

/// A task's sources merged into one batch, its slot stream, and the state of
/// its adapter.
struct Prepared {
    adapter: IakAdapter,
    opt: AdagradDecay,
    pool: FinetuneBatch,
    slots: Vec<usize>,
    mixing: bool,
    noise: rand_chacha::ChaCha8Rng,
}

impl Prepared {
    fn batch(&self, slots: &[usize]) -> FinetuneBatch {
        self.pool.select(slots)
    }
}

fn prepare(
    backbone: &MultiTaskModel,
    task: &FinetuneTask,
    iak: &IakConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Prepared> {
    if task.sources.is_empty() || task.sources.iter().any(|s| s.records.is_empty()) {
        return Err(Error::InvalidArgument(format!("dataset missing for domain {}", task.domain)));
    }
    let parts = task
        .sources
        .iter()
        .map(|s| backbone_batch(backbone, &s.records))
        .collect::<Result<Vec<_>>>()?;
    let mut offsets = vec![0];
    for p in &parts {
        offsets.push(offsets.last().unwrap() + p.len());
    }
    let pool = FinetuneBatch {
        representation: Tensor::vstack(&parts.iter().map(|p| &p.representation).collect::<Vec<_>>())?,
        logits: Tensor::vstack(&parts.iter().map(|p| &p.logits).collect::<Vec<_>>())?,
        labels: Labels {
            click: parts.iter().flat_map(|p| p.labels.click.clone()).collect(),
            purchase: parts.iter().flat_map(|p| p.labels.purchase.clone()).collect(),
        },
        domains: parts.iter().flat_map(|p| p.domains.clone()).collect(),
    };
    let sizes: Vec<usize> = task.sources.iter().map(|s| s.records.len()).collect();
    let weights: Vec<f64> = task.sources.iter().map(|s| s.weight).collect();
    if !(weights[0] > 0.0) {
        return Err(Error::InvalidArgument(format!("domain {} has zero weight on its own records", task.domain)));
    }
    let per_epoch = (sizes[0] as f64 / weights[0]).round() as usize;
    let tseed = domain_seed(seed, &task.domain);
    let slots = mix_domains(&sizes, &weights, per_epoch * cfg.finetune_epochs, tseed)?
        .into_iter()
        .map(|(d, i)| offsets[d] + i)
        .collect();
    let adapter = IakAdapter::new(
        iak.clone(),
        task.domain.clone(),
        backbone.composition(),
        backbone.representation_dim(),
        seed,
    )?;
    let opt = AdagradDecay::new(adapter.store(), cfg.decay, cfg.epsilon)?;
    Ok(Prepared {
        adapter,
        opt,
        pool,
        slots,
        mixing: task.sources.len() > 1,
        noise: stream_rng(tseed, STREAM_ADAPTER_NOISE),
    })
}

/// Trains one adapter per task on the frozen backbone's outputs.
///
/// Sequential mode runs each adapter's own batch stream at the base rate.
/// Joint mode interleaves all streams into shared batches and scales every
/// adapter's rate with [`dynamic_lr`]; adapters absent from a batch are not
/// updated.
pub fn finetune_all(
    backbone: &MultiTaskModel,
    tasks: &[FinetuneTask],
    iak: &IakConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<FinetuneReport> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::InvalidArgument("no domains to fine-tune".into()));
    }
    if backbone.store().n_trainable_values() != 0 {
        return Err(Error::InvalidArgument("backbone must be frozen before fine-tuning".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    for t in tasks {
        if !seen.insert(t.domain.to_string()) {
            return Err(Error::InvalidArgument(format!("domain {} listed twice", t.domain)));
        }
    }
    let mut prepared = tasks
        .iter()
        .map(|t| prepare(backbone, t, iak, cfg, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut curve = Vec::new();
    let mut saturated_steps = 0;
    let lambda = cfg.finetune_lr;
    let bs = cfg.finetune_batch_size;
    if !cfg.joint {
        for p in &mut prepared {
            let slots = std::mem::take(&mut p.slots);
            for (step, chunk) in slots.chunks(bs).enumerate() {
                let batch = p.batch(chunk);
                let stats = p.adapter.finetune_step(&mut p.opt, &batch, lambda, &mut p.noise, p.mixing)?;
                curve.push(FinetuneCurvePoint {
                    domain: p.adapter.domain().to_string(),
                    step: step + 1,
                    n_samples: chunk.len(),
                    lr: lambda,
                    loss: stats.loss,
                    bce: stats.bce,
                    kl: stats.kl,
                    grad_norm: stats.grad_norm,
                });
            }
        }
    } else {
        let mut owner: Vec<usize> = prepared.iter().enumerate().flat_map(|(t, p)| vec![t; p.slots.len()]).collect();
        owner.shuffle(&mut stream_rng(seed, STREAM_SHUFFLE + 100));
        let mut cursor = vec![0usize; prepared.len()];
        let mut prev_norm = vec![1.0; prepared.len()];
        for (step, chunk) in owner.chunks(bs).enumerate() {
            let mut n_b = vec![0usize; prepared.len()];
            let mut parts: Vec<Vec<usize>> = vec![Vec::new(); prepared.len()];
            for &t in chunk {
                parts[t].push(prepared[t].slots[cursor[t]]);
                cursor[t] += 1;
                n_b[t] += 1;
            }
            let state = dynamic_lr(&n_b, &prev_norm, lambda)?;
            if state.saturated(lambda) {
                saturated_steps += 1;
            }
            for (t, p) in prepared.iter_mut().enumerate() {
                if n_b[t] == 0 {
                    continue;
                }
                let batch = p.batch(&parts[t]);
                let (stats, grads) = p.adapter.gradients(&batch, &mut p.noise, p.mixing)?;
                if state.lambda_hat[t] > 0.0 {
                    p.adapter.apply(&mut p.opt, &grads, state.lambda_hat[t])?;
                }
                prev_norm[t] = stats.grad_norm;
                curve.push(FinetuneCurvePoint {
                    domain: p.adapter.domain().to_string(),
                    step: step + 1,
                    n_samples: n_b[t],
                    lr: state.lambda_hat[t],
                    loss: stats.loss,
                    bce: stats.bce,
                    kl: stats.kl,
                    grad_norm: stats.grad_norm,
                });
            }
        }
    }
    Ok(FinetuneReport {
        adapters: prepared.into_iter().map(|p| p.adapter).collect(),
        curve,
        saturated_steps,
    })
}
