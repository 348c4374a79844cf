use rand::seq::SliceRandom;
use serde::Serialize;

use crate::autodiff::{AdagradDecay, Graph};
use crate::datagen::InteractionRecord;
use crate::error::{Error, Result};
use crate::models::{Labels, MultiTaskModel};
use crate::rng::{stream_rng, STREAM_SHUFFLE};
use crate::trainer::TrainConfig;

/// One row of the pretraining curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvePoint {
    pub step: usize,
    pub epoch: usize,
    pub loss: f64,
    pub ctr_loss: f64,
    pub ctcvr_loss: f64,
}

#[derive(Clone, Debug)]
pub struct PretrainReport {
    pub curve: Vec<CurvePoint>,
}

impl PretrainReport {
    pub fn steps(&self) -> usize {
        self.curve.len()
    }
}

/// Trains every parameter of `model` on `dataset` with shuffled mini-batches.
pub fn pretrain(
    model: &mut MultiTaskModel,
    dataset: &[InteractionRecord],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<PretrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("cannot pretrain on an empty dataset".into()));
    }
    let mut opt = AdagradDecay::new(model.store(), cfg.decay, cfg.epsilon)?;
    let mut rng = stream_rng(seed, STREAM_SHUFFLE);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut curve = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let records: Vec<InteractionRecord> = chunk.iter().map(|&i| dataset[i].clone()).collect();
            let batch = model.encode(&records);
            let labels = Labels::from_records(&records);
            let (grads, point) = {
                let mut g = Graph::new(model.store());
                let (loss, parts) = model.loss(&mut g, &batch, &labels)?;
                let point = CurvePoint {
                    step: curve.len() + 1,
                    epoch: epoch + 1,
                    loss: g.value(loss).item().expect("scalar"),
                    ctr_loss: g.value(parts[0]).item().expect("scalar"),
                    ctcvr_loss: g.value(parts[1]).item().expect("scalar"),
                };
                (g.backward(loss)?, point)
            };
            let store = model.store_mut();
            store.zero_grad();
            store.accumulate(&grads);
            opt.step(store, cfg.base_lr)?;
            curve.push(point);
        }
    }
    Ok(PretrainReport { curve })
}
