//! The end-to-end recipe: generate, split, pretrain, fine-tune, evaluate.
//!
//! Each step is a function of the run configuration and the previous step's
//! output only, so running the steps in separate processes (as the command
//! line tool does, with files in between) gives the same result as running
//! them back to back.

use crate::config::RunConfig;
use crate::datagen::{before_last_days, generate, split_chronological, DomainKey, InteractionRecord};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::iak::IakAdapter;
use crate::models::{MultiTaskModel, Prediction};
use crate::router::{DomainRouter, ScoreRequest};
use crate::trainer::{finetune_all, finetune_window, pretrain, FinetuneReport, FinetuneSource, FinetuneTask, PretrainReport};

pub fn generate_data(cfg: &RunConfig) -> Result<Vec<InteractionRecord>> {
    generate(&cfg.datagen.generator(cfg.seed)?)
}

pub fn split(cfg: &RunConfig, data: &[InteractionRecord]) -> Result<(Vec<InteractionRecord>, Vec<InteractionRecord>)> {
    let [a, b] = cfg.datagen.split;
    split_chronological(data, (a, b))
}

/// Pretrains the configured backbone on the training split minus the
/// held-out fine-tuning days, then freezes it.
pub fn pretrain_backbone(cfg: &RunConfig, train: &[InteractionRecord]) -> Result<(MultiTaskModel, PretrainReport)> {
    let gen = cfg.datagen.generator(cfg.seed)?;
    let mut model = MultiTaskModel::new(cfg.model.model_config(cfg.model.kind, &gen), cfg.seed)?;
    let history = before_last_days(train, cfg.train.pretrain_holdout_days)?;
    let report = pretrain(&mut model, &history, &cfg.train, cfg.seed)?;
    model.freeze();
    Ok((model, report))
}

pub fn target_domains(cfg: &RunConfig) -> Result<Vec<DomainKey>> {
    cfg.eval.target_domains.iter().map(|d| d.parse()).collect()
}

/// One task per target domain over the fine-tuning window. A target listed
/// in `train.mixing` draws from every listed domain with the given weights;
/// the others train on their own records only.
pub fn finetune_tasks(cfg: &RunConfig, train: &[InteractionRecord]) -> Result<Vec<FinetuneTask>> {
    let days = cfg.train.finetune_window_days;
    let mixing: Vec<(DomainKey, f64)> = cfg
        .train
        .mixing
        .iter()
        .map(|(k, &w)| Ok((k.parse()?, w)))
        .collect::<Result<_>>()?;
    target_domains(cfg)?
        .into_iter()
        .map(|d| {
            if !mixing.iter().any(|(k, _)| *k == d) {
                return Ok(FinetuneTask::single(d.clone(), finetune_window(train, &d, days)?));
            }
            // The target's own records come first: they define the epoch length.
            let mut ordered: Vec<&(DomainKey, f64)> = mixing.iter().filter(|(k, _)| *k == d).collect();
            ordered.extend(mixing.iter().filter(|(k, _)| *k != d));
            let sources = ordered
                .into_iter()
                .map(|(k, w)| {
                    Ok(FinetuneSource {
                        records: finetune_window(train, k, days)?,
                        weight: *w,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(FinetuneTask { domain: d, sources })
        })
        .collect()
}

pub fn finetune_targets(cfg: &RunConfig, backbone: &MultiTaskModel, train: &[InteractionRecord]) -> Result<FinetuneReport> {
    finetune_all(backbone, &finetune_tasks(cfg, train)?, &cfg.iak, &cfg.train, cfg.seed)
}

fn labels(records: &[InteractionRecord]) -> Vec<(u8, u8)> {
    records.iter().map(|r| (r.click, r.purchase)).collect()
}

/// The adapters keyed on exactly the router's topics; only these can be
/// served together.
pub fn routable(cfg: &RunConfig, adapters: &[IakAdapter]) -> Vec<IakAdapter> {
    let mut topics = cfg.router.routing_topics.clone();
    topics.sort();
    topics.dedup();
    adapters.iter().filter(|a| a.domain().topics() == topics).cloned().collect()
}

/// Test metrics: for every adapter's domain, the zero-shot backbone and the
/// adapted model on that domain's records; then the zero-shot backbone and the
/// routed system (see [`routable`]) on the whole test split.
pub fn evaluate_test(
    cfg: &RunConfig,
    backbone: &MultiTaskModel,
    adapters: &[IakAdapter],
    test: &[InteractionRecord],
) -> Result<Vec<EvalReport>> {
    if test.is_empty() {
        return Err(Error::InvalidArgument("the test split is empty".into()));
    }
    let mut reports = Vec::new();
    for a in adapters {
        let records: Vec<InteractionRecord> = test.iter().filter(|r| r.in_domain(a.domain())).cloned().collect();
        if records.is_empty() {
            continue;
        }
        let out = backbone.outputs(&records)?;
        let c = backbone.composition();
        let zs: Vec<Prediction> = (0..records.len())
            .map(|i| c.apply([out.logits.get(i, 0), out.logits.get(i, 1)]))
            .collect();
        let tuned = a.predict(&out.representation, &out.logits)?;
        let name = a.domain().to_string();
        reports.push(evaluate(&name, "zero_shot", cfg.seed, &zs, &labels(&records))?);
        reports.push(evaluate(&name, "iak", cfg.seed, &tuned, &labels(&records))?);
    }
    let router = DomainRouter::new(backbone.clone(), routable(cfg, adapters), cfg.router.clone())?;
    let requests: Vec<ScoreRequest> = test.iter().map(ScoreRequest::from_record).collect();
    let routed: Vec<Prediction> = router
        .route_batch(&requests)?
        .into_iter()
        .map(|r| Prediction {
            p_ctr: r.p_ctr,
            p_cvr: None,
            p_ctcvr: r.p_ctcvr,
        })
        .collect();
    reports.push(evaluate("all", "zero_shot", cfg.seed, &backbone.predict(test)?, &labels(test))?);
    reports.push(evaluate("all", "routed", cfg.seed, &routed, &labels(test))?);
    Ok(reports)
}
