use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::datagen::{DomainKey, InteractionRecord};
use crate::error::{Error, Result};
use crate::eval::info::{kl_empirical, representation_mi};
use crate::eval::metrics::auc;
use crate::iak::{IakAdapter, IakConfig, SampleMode};
use crate::models::{ModelKind, MultiTaskModel, Prediction};
use crate::recipe;
use crate::report::to_csv_string;
use crate::rng::{stream_rng, STREAM_ADAPTER_NOISE};
use crate::trainer::{finetune_all, finetune_window, FinetuneSource, FinetuneTask, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub seeds: Vec<u64>,
    /// Domains receiving adapters in every experiment.
    pub target_domains: Vec<String>,
    /// Backbones compared by `baseline_compare`.
    pub models: Vec<ModelKind>,
    pub windows: Vec<usize>,
    pub d_e_grid: Vec<usize>,
    pub beta_grid: Vec<f64>,
    /// `overlap`: the primary domain, the correlated auxiliary domain, and the
    /// primary's share of the mixed stream.
    pub mix_primary: String,
    pub mix_aux: String,
    pub mix_weight: f64,
    pub mi_bins: usize,
    /// Fine-tuning records per domain used for the MI estimate.
    pub mi_samples: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seeds: vec![1, 2, 3, 4, 5],
            target_domains: vec!["scene=2".into(), "region=4".into(), "period=1".into()],
            models: vec![ModelKind::Base, ModelKind::SharedBottom, ModelKind::Esmm, ModelKind::Mmoe],
            windows: vec![1, 3, 5, 7],
            d_e_grid: vec![10, 30, 50, 80, 100],
            beta_grid: vec![0.0, 1e-3, 1e-1, 10.0],
            mix_primary: "region=4".into(),
            mix_aux: "region=5".into(),
            mix_weight: 0.7,
            mi_bins: 10,
            mi_samples: 2000,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        for d in self.target_domains.iter().chain([&self.mix_primary, &self.mix_aux]) {
            d.parse::<DomainKey>()?;
        }
        if self.seeds.is_empty() || self.target_domains.is_empty() {
            return Err(Error::InvalidArgument("need at least one seed and one target domain".into()));
        }
        if !(self.mix_weight > 0.0 && self.mix_weight <= 1.0) {
            return Err(Error::InvalidArgument("mix_weight must be in (0, 1]".into()));
        }
        if self.mi_bins < 2 || self.mi_samples < 2 {
            return Err(Error::InvalidArgument("mi_bins and mi_samples must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    WindowSweep,
    Overlap,
    DeSweep,
    BetaSweep,
    BaselineCompare,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 5] = [
        ExperimentKind::WindowSweep,
        ExperimentKind::Overlap,
        ExperimentKind::DeSweep,
        ExperimentKind::BetaSweep,
        ExperimentKind::BaselineCompare,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::WindowSweep => "window_sweep",
            ExperimentKind::Overlap => "overlap",
            ExperimentKind::DeSweep => "de_sweep",
            ExperimentKind::BetaSweep => "beta_sweep",
            ExperimentKind::BaselineCompare => "baseline_compare",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment kind {s:?}")))
    }
}

/// One CSV row: a condition on one seed and domain, or (`seed == "mean"`) the
/// mean over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentRow {
    pub kind: String,
    pub condition: String,
    pub seed: String,
    pub domain: String,
    pub n_test: usize,
    pub zs_ctr_auc: Option<f64>,
    pub zs_ctcvr_auc: Option<f64>,
    pub iak_ctr_auc: Option<f64>,
    pub iak_ctcvr_auc: Option<f64>,
    pub ctr_gain: Option<f64>,
    pub ctcvr_gain: Option<f64>,
    /// Binned MI between adapter input and (stochastic) encoder output.
    pub mi: Option<f64>,
    /// KL between the test click-rate profile over item-popularity deciles and
    /// the predicted profile, for the backbone alone and with the adapter.
    pub kl_zero_shot: Option<f64>,
    pub kl_iak: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub rows: Vec<ExperimentRow>,
}

impl ExperimentOutput {
    pub fn to_csv(&self) -> Result<String> {
        to_csv_string(&self.rows)
    }

    pub fn summary(&self) -> impl Iterator<Item = &ExperimentRow> {
        self.rows.iter().filter(|r| r.seed == "mean")
    }

    /// The summary row of `condition` on `domain`.
    pub fn mean(&self, condition: &str, domain: &str) -> Option<&ExperimentRow> {
        self.summary().find(|r| r.condition == condition && r.domain == domain)
    }

    pub fn per_seed(&self) -> impl Iterator<Item = &ExperimentRow> {
        self.rows.iter().filter(|r| r.seed != "mean")
    }
}

/// Data split and frozen pretrained backbone for one seed and model kind.
pub struct SeedContext {
    pub seed: u64,
    pub train: Vec<InteractionRecord>,
    pub test: Vec<InteractionRecord>,
    pub backbone: MultiTaskModel,
    item_decile: HashMap<u32, usize>,
}

/// Deciles of items by training click count (decile 0 the least clicked).
fn item_deciles(train: &[InteractionRecord]) -> HashMap<u32, usize> {
    let mut clicks: BTreeMap<u32, u64> = BTreeMap::new();
    for r in train {
        *clicks.entry(r.item_id).or_default() += r.click as u64;
    }
    let mut items: Vec<(u32, u64)> = clicks.into_iter().collect();
    items.sort_by_key(|&(id, c)| (c, id));
    let n = items.len();
    items.into_iter().enumerate().map(|(rank, (id, _))| (id, rank * 10 / n.max(1))).collect()
}

impl SeedContext {
    /// KL from the observed click-rate profile over item deciles to the
    /// predicted one.
    fn profile_kl(&self, records: &[InteractionRecord], preds: &[Prediction]) -> Option<f64> {
        let mut observed = [0.0; 10];
        let mut predicted = [0.0; 10];
        let mut counts = [0usize; 10];
        for (r, p) in records.iter().zip(preds) {
            let d = *self.item_decile.get(&r.item_id).unwrap_or(&0);
            observed[d] += r.click as f64;
            predicted[d] += p.p_ctr;
            counts[d] += 1;
        }
        for d in 0..10 {
            if counts[d] > 0 {
                observed[d] /= counts[d] as f64;
                predicted[d] /= counts[d] as f64;
            }
        }
        kl_empirical(&observed, &predicted).ok()
    }
}

/// Runs experiments, pretraining each (seed, model kind) backbone once.
pub struct Workbench {
    cfg: RunConfig,
    contexts: HashMap<(u64, ModelKind), Arc<SeedContext>>,
}

struct Evaluated {
    zs: (Option<f64>, Option<f64>),
    iak: (Option<f64>, Option<f64>),
    n_test: usize,
    kl_zs: Option<f64>,
    kl_iak: Option<f64>,
}

fn aucs(preds: &[Prediction], records: &[InteractionRecord]) -> Result<(Option<f64>, Option<f64>)> {
    let clicks: Vec<u8> = records.iter().map(|r| r.click).collect();
    let buys: Vec<u8> = records.iter().map(|r| r.purchase).collect();
    Ok((
        auc(&preds.iter().map(|p| p.p_ctr).collect::<Vec<_>>(), &clicks)?,
        auc(&preds.iter().map(|p| p.p_ctcvr).collect::<Vec<_>>(), &buys)?,
    ))
}

fn diff(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    Some(a? - b?)
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.collect::<Option<Vec<f64>>>()?;
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Workbench {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Workbench {
            cfg,
            contexts: HashMap::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn context(&mut self, seed: u64, kind: ModelKind) -> Result<Arc<SeedContext>> {
        if let Some(c) = self.contexts.get(&(seed, kind)) {
            return Ok(Arc::clone(c));
        }
        let mut cfg = self.cfg.clone();
        cfg.seed = seed;
        cfg.model.kind = kind;
        let data = recipe::generate_data(&cfg)?;
        let (train, test) = recipe::split(&cfg, &data)?;
        let (backbone, _) = recipe::pretrain_backbone(&cfg, &train)?;
        let ctx = Arc::new(SeedContext {
            seed,
            item_decile: item_deciles(&train),
            train,
            test,
            backbone,
        });
        self.contexts.insert((seed, kind), Arc::clone(&ctx));
        Ok(ctx)
    }

    fn targets(&self) -> Result<Vec<DomainKey>> {
        self.cfg.eval.target_domains.iter().map(|d| d.parse()).collect()
    }

    fn evaluate(ctx: &SeedContext, adapter: &IakAdapter) -> Result<Evaluated> {
        let records: Vec<InteractionRecord> =
            ctx.test.iter().filter(|r| r.in_domain(adapter.domain())).cloned().collect();
        if records.is_empty() {
            return Err(Error::InvalidArgument(format!("no test records for {}", adapter.domain())));
        }
        let out = ctx.backbone.outputs(&records)?;
        let c = ctx.backbone.composition();
        let zs: Vec<Prediction> = (0..records.len())
            .map(|i| c.apply([out.logits.get(i, 0), out.logits.get(i, 1)]))
            .collect();
        let tuned = adapter.predict(&out.representation, &out.logits)?;
        Ok(Evaluated {
            zs: aucs(&zs, &records)?,
            iak: aucs(&tuned, &records)?,
            n_test: records.len(),
            kl_zs: ctx.profile_kl(&records, &zs),
            kl_iak: ctx.profile_kl(&records, &tuned),
        })
    }

    fn row(kind: ExperimentKind, condition: &str, seed: u64, domain: &DomainKey, e: &Evaluated) -> ExperimentRow {
        ExperimentRow {
            kind: kind.name().into(),
            condition: condition.into(),
            seed: seed.to_string(),
            domain: domain.to_string(),
            n_test: e.n_test,
            zs_ctr_auc: e.zs.0,
            zs_ctcvr_auc: e.zs.1,
            iak_ctr_auc: e.iak.0,
            iak_ctcvr_auc: e.iak.1,
            ctr_gain: diff(e.iak.0, e.zs.0),
            ctcvr_gain: diff(e.iak.1, e.zs.1),
            mi: None,
            kl_zero_shot: e.kl_zs,
            kl_iak: e.kl_iak,
        }
    }

    /// Fine-tunes one adapter per target domain and evaluates each on its test records.
    fn tune_and_evaluate(
        &mut self,
        kind: ExperimentKind,
        condition: &str,
        model: ModelKind,
        seed: u64,
        iak: &IakConfig,
        train: &TrainConfig,
    ) -> Result<Vec<(ExperimentRow, IakAdapter)>> {
        let ctx = self.context(seed, model)?;
        let tasks = self
            .targets()?
            .into_iter()
            .map(|d| Ok(FinetuneTask::single(d.clone(), finetune_window(&ctx.train, &d, train.finetune_window_days)?)))
            .collect::<Result<Vec<_>>>()?;
        let report = finetune_all(&ctx.backbone, &tasks, iak, train, seed)?;
        report
            .adapters
            .into_iter()
            .map(|a| {
                let e = Self::evaluate(&ctx, &a)?;
                Ok((Self::row(kind, condition, seed, a.domain(), &e), a))
            })
            .collect()
    }

    pub fn run(&mut self, kind: ExperimentKind) -> Result<ExperimentOutput> {
        let eval = self.cfg.eval.clone();
        let base_iak = self.cfg.iak.clone();
        let base_train = self.cfg.train.clone();
        let main = self.cfg.model.kind;
        let mut rows = Vec::new();
        for &seed in &eval.seeds {
            match kind {
                ExperimentKind::BaselineCompare => {
                    for &m in &eval.models {
                        let r = self.tune_and_evaluate(kind, m.name(), m, seed, &base_iak, &base_train)?;
                        rows.extend(r.into_iter().map(|x| x.0));
                    }
                }
                ExperimentKind::WindowSweep => {
                    for &w in &eval.windows {
                        let t = TrainConfig {
                            finetune_window_days: w,
                            ..base_train.clone()
                        };
                        let r = self.tune_and_evaluate(kind, &format!("window={w}"), main, seed, &base_iak, &t)?;
                        rows.extend(r.into_iter().map(|x| x.0));
                    }
                }
                ExperimentKind::DeSweep => {
                    for &d_e in &eval.d_e_grid {
                        let c = IakConfig { d_e, ..base_iak.clone() };
                        let r = self.tune_and_evaluate(kind, &format!("d_e={d_e}"), main, seed, &c, &base_train)?;
                        rows.extend(r.into_iter().map(|x| x.0));
                    }
                }
                ExperimentKind::BetaSweep => {
                    for &beta in &eval.beta_grid {
                        let c = IakConfig { beta, ..base_iak.clone() };
                        let cond = format!("beta={beta}");
                        let r = self.tune_and_evaluate(kind, &cond, main, seed, &c, &base_train)?;
                        let ctx = self.context(seed, main)?;
                        for (mut row, adapter) in r {
                            row.mi = Some(self.encoder_mi(&ctx, &adapter, seed)?);
                            rows.push(row);
                        }
                    }
                }
                ExperimentKind::Overlap => rows.extend(self.overlap(seed, main)?),
            }
        }
        rows.extend(summarize(&rows));
        Ok(ExperimentOutput { rows })
    }

    /// MI between the adapter's input and its stochastic encoder output on the
    /// domain's fine-tuning records.
    fn encoder_mi(&self, ctx: &SeedContext, adapter: &IakAdapter, seed: u64) -> Result<f64> {
        let window = finetune_window(&ctx.train, adapter.domain(), self.cfg.train.finetune_window_days)?;
        let n = window.len().min(self.cfg.eval.mi_samples);
        let rep = ctx.backbone.outputs(&window[window.len() - n..])?.representation;
        let mut rng = stream_rng(seed, STREAM_ADAPTER_NOISE + 1000);
        let z = adapter.encode(&rep, SampleMode::Stochastic, &mut rng)?;
        representation_mi(&rep, &z, self.cfg.eval.mi_bins)
    }

    fn overlap(&mut self, seed: u64, model: ModelKind) -> Result<Vec<ExperimentRow>> {
        let eval = self.cfg.eval.clone();
        let train = self.cfg.train.clone();
        let ctx = self.context(seed, model)?;
        let primary: DomainKey = eval.mix_primary.parse()?;
        let aux: DomainKey = eval.mix_aux.parse()?;
        let own = finetune_window(&ctx.train, &primary, train.finetune_window_days)?;
        let other = finetune_window(&ctx.train, &aux, train.finetune_window_days)?;
        let isolated = FinetuneTask::single(primary.clone(), own.clone());
        let mixed = FinetuneTask {
            domain: primary.clone(),
            sources: vec![
                FinetuneSource {
                    records: own,
                    weight: eval.mix_weight,
                },
                FinetuneSource {
                    records: other,
                    weight: 1.0 - eval.mix_weight,
                },
            ],
        };
        let mut rows = Vec::new();
        for (cond, task) in [("isolated", isolated), ("mixed", mixed)] {
            let report = finetune_all(&ctx.backbone, &[task], &self.cfg.iak, &train, seed)?;
            let e = Self::evaluate(&ctx, &report.adapters[0])?;
            rows.push(Self::row(ExperimentKind::Overlap, cond, seed, &primary, &e));
        }
        Ok(rows)
    }
}

/// Mean over seeds per (condition, domain), then per condition over domains
/// (`domain == "all"`).
fn summarize(rows: &[ExperimentRow]) -> Vec<ExperimentRow> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.condition.clone(), r.domain.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mean_row = |group: Vec<&ExperimentRow>, condition: &str, domain: &str| -> ExperimentRow {
        let f = |get: fn(&ExperimentRow) -> Option<f64>| mean_of(group.iter().map(|r| get(r)));
        ExperimentRow {
            kind: group[0].kind.clone(),
            condition: condition.into(),
            seed: "mean".into(),
            domain: domain.into(),
            n_test: group.iter().map(|r| r.n_test).sum::<usize>() / group.len(),
            zs_ctr_auc: f(|r| r.zs_ctr_auc),
            zs_ctcvr_auc: f(|r| r.zs_ctcvr_auc),
            iak_ctr_auc: f(|r| r.iak_ctr_auc),
            iak_ctcvr_auc: f(|r| r.iak_ctcvr_auc),
            ctr_gain: f(|r| r.ctr_gain),
            ctcvr_gain: f(|r| r.ctcvr_gain),
            mi: f(|r| r.mi),
            kl_zero_shot: f(|r| r.kl_zero_shot),
            kl_iak: f(|r| r.kl_iak),
        }
    };
    let mut out: Vec<ExperimentRow> = keys
        .iter()
        .map(|(c, d)| mean_row(rows.iter().filter(|r| &r.condition == c && &r.domain == d).collect(), c, d))
        .collect();
    let mut conditions: Vec<String> = Vec::new();
    for (c, _) in &keys {
        if !conditions.contains(c) {
            conditions.push(c.clone());
        }
    }
    let per_domain = out.clone();
    for c in conditions {
        let group: Vec<&ExperimentRow> = per_domain.iter().filter(|r| r.condition == c).collect();
        if group.len() > 1 {
            out.push(mean_row(group, &c, "all"));
        }
    }
    out
}

/// Runs one experiment kind from scratch.
pub fn run_experiment(kind: ExperimentKind, cfg: &RunConfig) -> Result<ExperimentOutput> {
    Workbench::new(cfg.clone())?.run(kind)
}
