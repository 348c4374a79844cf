use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_MIXING};

/// Endless sequence of indices `0..len`, reshuffled at every pass.
#[derive(Clone, Debug)]
pub struct EpochSampler {
    order: Vec<usize>,
    pos: usize,
    rng: ChaCha8Rng,
}

impl EpochSampler {
    pub fn new(len: usize, rng: ChaCha8Rng) -> Result<Self> {
        if len == 0 {
            return Err(Error::InvalidArgument("cannot sample from an empty dataset".into()));
        }
        let mut s = EpochSampler {
            order: (0..len).collect(),
            pos: 0,
            rng,
        };
        s.order.shuffle(&mut s.rng);
        Ok(s)
    }

    pub fn next_index(&mut self) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(&mut self.rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn source_rng(seed: u64, source: usize) -> ChaCha8Rng {
    stream_rng(seed.wrapping_add(source as u64 + 1), STREAM_MIXING)
}

/// `n` indices of a single dataset in shuffled epochs; the unmixed stream.
pub fn shuffled_stream(len: usize, n: usize, seed: u64) -> Result<Vec<usize>> {
    let mut s = EpochSampler::new(len, source_rng(seed, 0))?;
    Ok((0..n).map(|_| s.next_index()).collect())
}

/// A stream of `(source, index)` slots: each slot picks source `d` with
/// probability `weights[d]`, then the next record of that source's shuffled
/// epoch. Source 0 is the primary dataset.
pub fn mix_domains(sizes: &[usize], weights: &[f64], n_slots: usize, seed: u64) -> Result<Vec<(usize, usize)>> {
    if sizes.len() != weights.len() || sizes.is_empty() {
        return Err(Error::InvalidArgument(format!("{} sources vs {} weights", sizes.len(), weights.len())));
    }
    let total: f64 = weights.iter().sum();
    if weights.iter().any(|&w| !(w >= 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("mixing weights must be non-negative and sum to 1, got {total}")));
    }
    let mut samplers = sizes
        .iter()
        .enumerate()
        .map(|(d, &len)| if weights[d] > 0.0 { EpochSampler::new(len, source_rng(seed, d)).map(Some) } else { Ok(None) })
        .collect::<Result<Vec<_>>>()?;
    let active: Vec<usize> = (0..sizes.len()).filter(|&d| weights[d] > 0.0).collect();
    let mut chooser = stream_rng(seed, STREAM_MIXING);
    let mut out = Vec::with_capacity(n_slots);
    for _ in 0..n_slots {
        let d = if active.len() == 1 {
            active[0]
        } else {
            let u: f64 = chooser.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = *active.last().unwrap();
            for &d in &active {
                acc += weights[d];
                if u < acc {
                    pick = d;
                    break;
                }
            }
            pick
        };
        out.push((d, samplers[d].as_mut().expect("active source").next_index()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_source_matches_unmixed_stream() {
        let mixed = mix_domains(&[37], &[1.0], 100, 4).unwrap();
        let plain = shuffled_stream(37, 100, 4).unwrap();
        assert_eq!(mixed.iter().map(|s| s.1).collect::<Vec<_>>(), plain);
        assert!(mixed.iter().all(|s| s.0 == 0));
    }

    #[test]
    fn each_epoch_is_a_permutation() {
        let s = shuffled_stream(10, 30, 1).unwrap();
        for chunk in s.chunks(10) {
            let mut c = chunk.to_vec();
            c.sort();
            assert_eq!(c, (0..10).collect::<Vec<_>>());
        }
    }

    #[test]
    fn weights_control_fractions() {
        let s = mix_domains(&[500, 300], &[0.7, 0.3], 100_000, 9).unwrap();
        let b = s.iter().filter(|x| x.0 == 1).count() as f64 / 1e5;
        assert!((0.29..=0.31).contains(&b), "{b}");
        assert_eq!(s, mix_domains(&[500, 300], &[0.7, 0.3], 100_000, 9).unwrap());
        assert!(s.iter().all(|&(d, i)| i < [500, 300][d]));
    }

    #[test]
    fn invalid_weights() {
        assert!(mix_domains(&[5, 5], &[0.7, 0.2], 10, 0).is_err());
        assert!(mix_domains(&[5], &[0.5, 0.5], 10, 0).is_err());
        assert!(mix_domains(&[0], &[1.0], 10, 0).is_err());
    }
}
