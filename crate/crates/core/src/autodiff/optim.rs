use crate::autodiff::param::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_DECAY: f64 = 0.9999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adagrad with a decaying squared-gradient accumulator.
///
/// `acc <- decay * acc + g^2`, `w <- w - lr * g / (sqrt(acc) + eps)`.
#[derive(Clone, Debug)]
pub struct AdagradDecay {
    pub decay: f64,
    pub epsilon: f64,
    accumulators: Vec<Tensor>,
}

impl AdagradDecay {
    pub fn new(store: &ParamStore, decay: f64, epsilon: f64) -> Result<Self> {
        if !(decay > 0.0 && decay <= 1.0) {
            return Err(Error::InvalidArgument(format!("decay {decay} outside (0, 1]")));
        }
        if epsilon < 0.0 {
            return Err(Error::InvalidArgument(format!("negative epsilon {epsilon}")));
        }
        let accumulators = store.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Ok(AdagradDecay {
            decay,
            epsilon,
            accumulators,
        })
    }

    pub fn with_defaults(store: &ParamStore) -> Self {
        Self::new(store, DEFAULT_DECAY, DEFAULT_EPSILON).expect("default settings are valid")
    }

    pub fn accumulator(&self, index: usize) -> &Tensor {
        &self.accumulators[index]
    }

    /// Applies the stored gradients of every trainable parameter.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if !(lr > 0.0) || !lr.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate {lr} must be positive")));
        }
        if self.accumulators.len() != store.len() {
            return Err(Error::InvalidArgument("optimizer built for a different store".into()));
        }
        if store.iter().any(|(_, p)| p.trainable && !p.gradient.is_finite()) {
            return Err(Error::NonFinite("gradient"));
        }
        for (p, acc) in store.iter_mut().zip(&mut self.accumulators) {
            if !p.trainable {
                continue;
            }
            for ((w, &g), a) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(p.gradient.data())
                .zip(acc.data_mut())
            {
                *a = self.decay * *a + g * g;
                *w -= lr * g / (a.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::param::ParamStore;

    fn scalar_store(v: f64, g: f64) -> ParamStore {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(v));
        s.get_mut(id).gradient = Tensor::scalar(g);
        s
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = scalar_store(0.7, 0.0);
        let mut opt = AdagradDecay::with_defaults(&s);
        opt.step(&mut s, 0.005).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = scalar_store(1.0, 1.0);
        let mut opt = AdagradDecay::new(&s, 1.0, 0.0).unwrap();
        opt.step(&mut s, 0.005).unwrap();
        assert_eq!(s.iter().next().unwrap().1.value.data(), &[1.0 - 0.005]);
    }

    #[test]
    fn identical_params_stay_identical() {
        let mut s = ParamStore::new();
        let a = s.add("a", Tensor::scalar(0.3));
        let b = s.add("b", Tensor::scalar(0.3));
        let mut opt = AdagradDecay::with_defaults(&s);
        for k in 0..50 {
            let g = (k as f64 * 0.37).sin();
            s.get_mut(a).gradient = Tensor::scalar(g);
            s.get_mut(b).gradient = Tensor::scalar(g);
            opt.step(&mut s, 0.005).unwrap();
        }
        assert_eq!(s.value(a), s.value(b));
    }

    #[test]
    fn frozen_untouched_and_nan_rejected() {
        let mut s = scalar_store(0.5, 1.0);
        let id = s.id_of("w").unwrap();
        s.set_trainable(id, false);
        let mut opt = AdagradDecay::with_defaults(&s);
        opt.step(&mut s, 0.1).unwrap();
        assert_eq!(s.value(id).data(), &[0.5]);

        let mut s = scalar_store(0.5, f64::NAN);
        let mut opt = AdagradDecay::with_defaults(&s);
        assert!(matches!(opt.step(&mut s, 0.1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn accumulator_non_decreasing_without_decay() {
        let mut s = scalar_store(0.0, 0.5);
        let mut opt = AdagradDecay::new(&s, 1.0, 1e-8).unwrap();
        let mut prev = 0.0;
        for _ in 0..10 {
            opt.step(&mut s, 0.01).unwrap();
            let a = opt.accumulator(0).data()[0];
            assert!(a >= prev);
            prev = a;
        }
    }
}
