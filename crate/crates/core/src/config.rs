//! The run configuration: one TOML file with a section per component.
//!
//! Every key has a default, unknown keys are rejected, and `key=value`
//! overrides (dotted paths such as `train.base_lr=0.01`) take precedence over
//! the file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{DomainLayout, GeneratorConfig};
use crate::error::{Error, Result};
use crate::eval::EvalConfig;
use crate::iak::IakConfig;
use crate::models::{ModelConfig, ModelKind};
use crate::router::RouterConfig;
use crate::trainer::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatagenSettings {
    pub n_users: usize,
    pub n_items: usize,
    pub n_days: usize,
    pub records_per_day: usize,
    pub latent_dim: usize,
    pub target_click_rate: f64,
    pub target_purchase_rate_given_click: f64,
    pub affinity: f64,
    pub popularity: f64,
    pub history_len: usize,
    pub n_extra_features: usize,
    pub shift_onset_day: usize,
    /// Train:test ratio of whole days.
    pub split: [u32; 2],
    pub layout: DomainLayout,
}

impl Default for DatagenSettings {
    fn default() -> Self {
        DatagenSettings {
            n_users: 2000,
            n_items: 400,
            n_days: 14,
            records_per_day: 5000,
            latent_dim: 16,
            target_click_rate: 0.06,
            target_purchase_rate_given_click: 0.15,
            affinity: 1.5,
            popularity: 0.3,
            history_len: 5,
            n_extra_features: 1,
            shift_onset_day: 0,
            split: [6, 1],
            layout: reference_layout(),
        }
    }
}

/// Three shifted domains, one per topic: scene 2 favours popular items,
/// period 1 weakens personal affinity, and region 4 (a minority region, the
/// strongest shift) does both. Region 5 shares region 4's shift, making it a
/// natural auxiliary source for mixed fine-tuning.
pub fn reference_layout() -> DomainLayout {
    DomainLayout {
        scene_shift: vec![0.0, 0.5],
        region_shift: vec![0.0, 0.0, 0.0, 1.0, 0.6, 0.0],
        period_shift: vec![0.5, 0.0, 0.0],
        shift_correlation: 0.8,
        scene_popularity: vec![1.0, 2.5],
        region_affinity: vec![1.0, 1.0, 1.0, 0.3, 0.3, 1.0],
        region_popularity: vec![1.0, 1.0, 1.0, 3.0, 3.0, 1.0],
        period_affinity: vec![0.4, 1.0, 1.0],
        ..DomainLayout::default()
    }
}

impl DatagenSettings {
    pub fn generator(&self, seed: u64) -> Result<GeneratorConfig> {
        let mut g = GeneratorConfig::new(&self.layout, seed)?;
        if self.latent_dim != g.latent_dim {
            g.latent_dim = self.latent_dim;
            g.domains = self.layout.build(self.latent_dim, seed)?;
        }
        g.n_users = self.n_users;
        g.n_items = self.n_items;
        g.n_days = self.n_days;
        g.records_per_day = self.records_per_day;
        g.target_click_rate = self.target_click_rate;
        g.target_purchase_rate_given_click = self.target_purchase_rate_given_click;
        g.affinity = self.affinity;
        g.popularity = self.popularity;
        g.history_len = self.history_len;
        g.n_extra_features = self.n_extra_features;
        g.shift_onset_day = self.shift_onset_day;
        g.validate()?;
        Ok(g)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSettings {
    pub kind: ModelKind,
    pub hidden_sizes: Vec<usize>,
    pub n_experts: usize,
    pub embedding_dim: usize,
    pub loss_weights: [f64; 2],
}

impl Default for ModelSettings {
    fn default() -> Self {
        ModelSettings {
            kind: ModelKind::Base,
            hidden_sizes: vec![64, 32, 16],
            n_experts: 2,
            embedding_dim: 8,
            loss_weights: [1.0, 1.0],
        }
    }
}

impl ModelSettings {
    pub fn model_config(&self, kind: ModelKind, gen: &GeneratorConfig) -> ModelConfig {
        ModelConfig {
            hidden_sizes: self.hidden_sizes.clone(),
            n_experts: self.n_experts,
            embedding_dim: self.embedding_dim,
            loss_weights: self.loss_weights,
            ..ModelConfig::for_data(kind, gen)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub datagen: DatagenSettings,
    pub model: ModelSettings,
    pub iak: IakConfig,
    pub train: TrainConfig,
    pub router: RouterConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            datagen: DatagenSettings::default(),
            model: ModelSettings::default(),
            iak: IakConfig::default(),
            train: TrainConfig::default(),
            router: RouterConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Sets `path` (dotted) in `table` to `raw`, parsed as a TOML value when
/// possible and as a bare string otherwise.
fn set_path(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let mut parts: Vec<&str> = path.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| Error::Config(format!("empty key in {path:?}")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("{path}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), parse_value(raw));
    Ok(())
}

impl RunConfig {
    /// Parses `text` and applies `overrides` of the form `key=value`.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not key=value")))?;
            set_path(&mut table, k.trim(), v.trim())?;
        }
        let cfg: RunConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.datagen.generator(self.seed).map_err(wrap)?;
        if self.datagen.split[0] == 0 {
            return Err(Error::Config("datagen.split needs at least one training day share".into()));
        }
        self.iak.validate().map_err(wrap)?;
        self.train.validate().map_err(wrap)?;
        self.eval.validate().map_err(wrap)?;
        Ok(())
    }

    /// The effective configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig::default();
        assert_eq!(RunConfig::parse(&cfg.to_toml(), &[]).unwrap(), cfg);
        assert_eq!(RunConfig::parse("", &[]).unwrap(), cfg);
    }

    #[test]
    fn overrides_take_precedence() {
        let cfg = RunConfig::parse(
            "seed = 3\n[train]\nbase_lr = 0.1\n",
            &["train.base_lr=0.02".into(), "model.kind=esmm".into(), "datagen.layout.shift_correlation=0.5".into()],
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.train.base_lr, 0.02);
        assert_eq!(cfg.model.kind, ModelKind::Esmm);
        assert_eq!(cfg.datagen.layout.shift_correlation, 0.5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("[train]\nbatchsize = 3\n", &[]).is_err());
        assert!(RunConfig::parse("", &["bogus=1".into()]).is_err());
        assert!(RunConfig::parse("", &["datagen.layout.nope=1".into()]).is_err());
        assert!(RunConfig::parse("", &["train.batch_size=0".into()]).is_err());
        assert!(RunConfig::parse("", &["noequals".into()]).is_err());
    }
}
