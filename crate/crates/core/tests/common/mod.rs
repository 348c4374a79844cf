#![allow(dead_code)]

pub mod gradcheck;
pub mod oracles;

use iakrec::datagen::{generate, DomainLayout, GeneratorConfig, InteractionRecord};
use iakrec::models::{ModelConfig, ModelKind, MultiTaskModel};

/// A few thousand records over four days.
pub fn small_data(seed: u64) -> (GeneratorConfig, Vec<InteractionRecord>) {
    let mut gen = GeneratorConfig::new(&DomainLayout::default(), seed).unwrap();
    gen.n_users = 300;
    gen.n_items = 80;
    gen.n_days = 4;
    gen.records_per_day = 1000;
    gen.target_click_rate = 0.2;
    gen.target_purchase_rate_given_click = 0.3;
    let data = generate(&gen).unwrap();
    (gen, data)
}

pub fn small_model(kind: ModelKind, gen: &GeneratorConfig, seed: u64) -> MultiTaskModel {
    let mut cfg = ModelConfig::for_data(kind, gen);
    cfg.hidden_sizes = vec![16, 8];
    MultiTaskModel::new(cfg, seed).unwrap()
}
