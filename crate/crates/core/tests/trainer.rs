mod common;

use iakrec::datagen::{DomainKey, Topic};
use iakrec::iak::IakConfig;
use iakrec::models::ModelKind;
use iakrec::trainer::{finetune_all, finetune_window, pretrain, FinetuneSource, FinetuneTask, TrainConfig};

fn cfg() -> TrainConfig {
    TrainConfig {
        batch_size: 256,
        finetune_batch_size: 64,
        finetune_lr: 0.02,
        finetune_window_days: 2,
        ..TrainConfig::default()
    }
}

fn iak() -> IakConfig {
    IakConfig {
        d_e: 8,
        decoder_hidden: vec![8],
        ..IakConfig::default()
    }
}

#[test]
fn pretrain_steps_determinism_and_convergence() {
    let (gen, data) = common::small_data(1);
    let mut c = cfg();
    c.epochs = 3;
    let mut a = common::small_model(ModelKind::Base, &gen, 2);
    let ra = pretrain(&mut a, &data, &c, 5).unwrap();
    assert_eq!(ra.steps(), 3 * data.len().div_ceil(256));
    let mut b = common::small_model(ModelKind::Base, &gen, 2);
    let rb = pretrain(&mut b, &data, &c, 5).unwrap();
    assert_eq!(a.digest(), b.digest());
    assert_eq!(ra.curve, rb.curve);
    let first = ra.curve[0].loss;
    let last: f64 = ra.curve.iter().rev().take(5).map(|p| p.loss).sum::<f64>() / 5.0;
    assert!(last < first, "{last} !< {first}");
    assert!(pretrain(&mut b, &[], &c, 5).is_err());
}

fn tasks(data: &[iakrec::datagen::InteractionRecord], days: usize) -> Vec<FinetuneTask> {
    [1, 2]
        .into_iter()
        .map(|s| {
            let key = DomainKey::single(Topic::Scene, s);
            FinetuneTask::single(key.clone(), finetune_window(data, &key, days).unwrap())
        })
        .collect()
}

#[test]
fn finetune_keeps_backbone_frozen_and_adapters_isolated() {
    let (gen, data) = common::small_data(3);
    let mut backbone = common::small_model(ModelKind::Base, &gen, 4);
    pretrain(&mut backbone, &data, &cfg(), 1).unwrap();
    let c = cfg();
    assert!(finetune_all(&backbone, &tasks(&data, 2), &iak(), &c, 9).is_err(), "unfrozen backbone accepted");
    backbone.freeze();
    let digest = backbone.digest();
    let t = tasks(&data, 2);
    let report = finetune_all(&backbone, &t, &iak(), &c, 9).unwrap();
    assert_eq!(backbone.digest(), digest);
    assert_eq!(report.adapters.len(), 2);

    let mut flipped = t.clone();
    for r in &mut flipped[1].sources[0].records {
        r.click = 1 - r.click;
        r.purchase = 0;
    }
    let other = finetune_all(&backbone, &flipped, &iak(), &c, 9).unwrap();
    assert_eq!(report.adapters[0].store().named_values(), other.adapters[0].store().named_values());
    assert_ne!(report.adapters[1].store().named_values(), other.adapters[1].store().named_values());

    let again = finetune_all(&backbone, &t, &iak(), &c, 9).unwrap();
    assert_eq!(report.curve, again.curve);
}

#[test]
fn joint_mode_with_one_domain_is_the_sequential_loop() {
    let (gen, data) = common::small_data(5);
    let mut backbone = common::small_model(ModelKind::Mmoe, &gen, 4);
    backbone.freeze();
    let t = &tasks(&data, 2)[..1];
    let seq = finetune_all(&backbone, t, &iak(), &cfg(), 2).unwrap();
    let joint = finetune_all(&backbone, t, &iak(), &TrainConfig { joint: true, ..cfg() }, 2).unwrap();
    assert_eq!(seq.curve, joint.curve);
    assert_eq!(seq.adapters[0].store().named_values(), joint.adapters[0].store().named_values());
    assert!(joint.curve.iter().all(|p| p.lr == cfg().finetune_lr));
}

#[test]
fn joint_mode_masks_absent_domains_and_conserves_rate() {
    let (gen, data) = common::small_data(6);
    let mut backbone = common::small_model(ModelKind::Base, &gen, 4);
    backbone.freeze();
    let c = TrainConfig { joint: true, ..cfg() };
    let report = finetune_all(&backbone, &tasks(&data, 2), &iak(), &c, 2).unwrap();
    let steps = report.curve.iter().map(|p| p.step).max().unwrap();
    for s in 1..=steps {
        let rows: Vec<_> = report.curve.iter().filter(|p| p.step == s).collect();
        assert!(rows.iter().all(|p| p.n_samples > 0));
        let total: f64 = rows.iter().map(|p| p.lr / c.finetune_lr).sum();
        assert!((total - 1.0).abs() < 1e-12, "step {s}: {total}");
    }
}

#[test]
fn mixing_trains_on_auxiliary_records() {
    let (gen, data) = common::small_data(7);
    let mut backbone = common::small_model(ModelKind::Base, &gen, 4);
    backbone.freeze();
    let t = tasks(&data, 2);
    let mixed = FinetuneTask {
        domain: t[0].domain.clone(),
        sources: vec![
            FinetuneSource {
                records: t[0].sources[0].records.clone(),
                weight: 0.7,
            },
            FinetuneSource {
                records: t[1].sources[0].records.clone(),
                weight: 0.3,
            },
        ],
    };
    let r = finetune_all(&backbone, &[mixed.clone()], &iak(), &cfg(), 2).unwrap();
    let n: usize = r.curve.iter().map(|p| p.n_samples).sum();
    let expected = (t[0].sources[0].records.len() as f64 / 0.7).round() as usize;
    assert_eq!(n, expected);
    let mut bad = mixed;
    bad.sources[1].weight = 0.5;
    assert!(finetune_all(&backbone, &[bad], &iak(), &cfg(), 2).is_err());
}

#[test]
fn missing_data_errors() {
    let (gen, data) = common::small_data(8);
    let mut backbone = common::small_model(ModelKind::Base, &gen, 4);
    backbone.freeze();
    assert!(finetune_window(&data, &DomainKey::single(Topic::Scene, 1), 40).is_err());
    assert!(finetune_window(&data, &DomainKey::single(Topic::Scene, 9), 2).is_err());
    let empty = FinetuneTask::single(DomainKey::single(Topic::Scene, 1), vec![]);
    assert!(finetune_all(&backbone, &[empty], &iak(), &cfg(), 2).is_err());
}
