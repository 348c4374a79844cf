//! Seeded synthetic impressions with per-domain preference shifts.
//!
//! Every user and item gets a Gaussian latent vector. A record's click
//! probability is `sigmoid(bias + affinity * <u + s, v> / sqrt(L) + pop * p_i)`
//! where `s` is the sum of the preference shifts of the record's scene,
//! region and period. Which item is shown is drawn from a per-domain
//! distribution tilted by the domains' popularity tilt vectors. Purchases
//! are drawn only for clicks.

use std::collections::VecDeque;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::sigmoid;
use crate::datagen::record::{DomainIds, InteractionRecord, Topic, SECONDS_PER_DAY};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, STREAM_CALIBRATION, STREAM_LATENTS, STREAM_RECORDS};

/// 2023-07-20T00:00:00Z.
pub const EPOCH_START: i64 = 1_689_811_200;

/// Number of leading context columns in `feature_ids`: age bucket, item category, hour.
pub const N_CONTEXT_FEATURES: usize = 3;
pub const AGE_BUCKETS: u32 = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub topic: Topic,
    pub id: u32,
    /// Traffic share within the topic (normalized over the topic).
    pub weight: f64,
    pub preference_shift: Vec<f64>,
    pub item_popularity_tilt: Vec<f64>,
    /// Multiplier on the user-item affinity term for records in this domain.
    pub affinity_scale: f64,
    /// Multiplier on the item popularity term for records in this domain.
    pub popularity_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_days: usize,
    pub records_per_day: usize,
    pub latent_dim: usize,
    pub target_click_rate: f64,
    pub target_purchase_rate_given_click: f64,
    /// Scale of the user-item affinity term in the click logit.
    pub affinity: f64,
    /// Weight of the item popularity term in the click logit.
    pub popularity: f64,
    /// Recent clicked items appended to `feature_ids`.
    pub history_len: usize,
    /// Trailing columns carrying a random device id no model reads by default.
    pub n_extra_features: usize,
    /// First day on which preference shifts apply; earlier days follow the
    /// unshifted click model. Zero applies shifts throughout.
    pub shift_onset_day: usize,
    pub domains: Vec<DomainSpec>,
    pub seed: u64,
}

/// Per-topic layout from which [`DomainSpec`]s are derived.
///
/// Shift and tilt magnitudes are expressed as the standard deviation (over
/// items) of the logit contribution they cause. Directions are random unit
/// vectors; `shift_correlation` mixes a topic-wide common direction into each
/// domain's direction, making domains of one topic correlated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DomainLayout {
    pub scene_weights: Vec<f64>,
    pub region_weights: Vec<f64>,
    pub period_weights: Vec<f64>,
    pub scene_shift: Vec<f64>,
    pub region_shift: Vec<f64>,
    pub period_shift: Vec<f64>,
    pub scene_tilt: Vec<f64>,
    pub region_tilt: Vec<f64>,
    pub period_tilt: Vec<f64>,
    /// Per-domain multipliers on the affinity and popularity terms; a record's
    /// multiplier is the product over its scene, region and period.
    pub scene_affinity: Vec<f64>,
    pub region_affinity: Vec<f64>,
    pub period_affinity: Vec<f64>,
    pub scene_popularity: Vec<f64>,
    pub region_popularity: Vec<f64>,
    pub period_popularity: Vec<f64>,
    pub shift_correlation: f64,
}

impl Default for DomainLayout {
    fn default() -> Self {
        DomainLayout {
            scene_weights: vec![0.7, 0.3],
            region_weights: vec![0.3, 0.15, 0.2, 0.12, 0.12, 0.11],
            period_weights: vec![0.15, 0.45, 0.4],
            scene_shift: vec![0.0, 0.0],
            region_shift: vec![0.0; 6],
            period_shift: vec![0.0; 3],
            scene_tilt: vec![0.0, 0.0],
            region_tilt: vec![0.0; 6],
            period_tilt: vec![0.0; 3],
            scene_affinity: vec![1.0; 2],
            region_affinity: vec![1.0; 6],
            period_affinity: vec![1.0; 3],
            scene_popularity: vec![1.0; 2],
            region_popularity: vec![1.0; 6],
            period_popularity: vec![1.0; 3],
            shift_correlation: 0.0,
        }
    }
}

fn unit_vector(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl DomainLayout {
    #[allow(clippy::type_complexity)]
    fn topic_parts(&self, t: Topic) -> (&[f64], [(&'static str, &[f64]); 4]) {
        match t {
            Topic::Scene => (
                &self.scene_weights,
                [
                    ("shift", &self.scene_shift),
                    ("tilt", &self.scene_tilt),
                    ("affinity", &self.scene_affinity),
                    ("popularity", &self.scene_popularity),
                ],
            ),
            Topic::Region => (
                &self.region_weights,
                [
                    ("shift", &self.region_shift),
                    ("tilt", &self.region_tilt),
                    ("affinity", &self.region_affinity),
                    ("popularity", &self.region_popularity),
                ],
            ),
            Topic::Period => (
                &self.period_weights,
                [
                    ("shift", &self.period_shift),
                    ("tilt", &self.period_tilt),
                    ("affinity", &self.period_affinity),
                    ("popularity", &self.period_popularity),
                ],
            ),
        }
    }

    pub fn build(&self, latent_dim: usize, seed: u64) -> Result<Vec<DomainSpec>> {
        if !(0.0..=1.0).contains(&self.shift_correlation) {
            return Err(Error::InvalidArgument("shift_correlation must be in [0, 1]".into()));
        }
        let mut rng = stream_rng(seed, STREAM_LATENTS + 100);
        let scale = (latent_dim as f64).sqrt();
        let rho = self.shift_correlation;
        let own = (1.0 - rho * rho).sqrt();
        let mut out = Vec::new();
        for t in Topic::ALL {
            let (weights, parts) = self.topic_parts(t);
            if weights.is_empty() {
                return Err(Error::InvalidArgument(format!("topic {t} has no domains")));
            }
            for (name, v) in parts {
                if v.len() != weights.len() {
                    return Err(Error::InvalidArgument(format!(
                        "{t}_{name} has {} entries, {t}_weights has {}",
                        v.len(),
                        weights.len()
                    )));
                }
            }
            let common_shift = unit_vector(&mut rng, latent_dim);
            let common_tilt = unit_vector(&mut rng, latent_dim);
            for (i, &w) in weights.iter().enumerate() {
                let ds = unit_vector(&mut rng, latent_dim);
                let dt = unit_vector(&mut rng, latent_dim);
                let mix = |common: &[f64], d: &[f64], mag: f64| -> Vec<f64> {
                    let raw: Vec<f64> = common.iter().zip(d).map(|(c, x)| rho * c + own * x).collect();
                    let n = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
                    raw.iter().map(|x| mag * scale * x / n).collect()
                };
                out.push(DomainSpec {
                    topic: t,
                    id: i as u32 + 1,
                    weight: w,
                    preference_shift: mix(&common_shift, &ds, parts[0].1[i]),
                    item_popularity_tilt: mix(&common_tilt, &dt, parts[1].1[i]),
                    affinity_scale: parts[2].1[i],
                    popularity_scale: parts[3].1[i],
                });
            }
        }
        Ok(out)
    }
}

impl GeneratorConfig {
    pub fn new(layout: &DomainLayout, seed: u64) -> Result<Self> {
        let latent_dim = 16;
        Ok(GeneratorConfig {
            n_users: 2000,
            n_items: 400,
            n_days: 7,
            records_per_day: 5000,
            latent_dim,
            target_click_rate: 0.06,
            target_purchase_rate_given_click: 0.15,
            affinity: 1.5,
            popularity: 0.3,
            history_len: 5,
            n_extra_features: 1,
            shift_onset_day: 0,
            domains: layout.build(latent_dim, seed)?,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 {
            return Err(Error::InvalidArgument("need at least one user and one item".into()));
        }
        if self.n_days < 2 {
            return Err(Error::InvalidArgument("n_days must be at least 2".into()));
        }
        if self.latent_dim == 0 {
            return Err(Error::InvalidArgument("latent_dim must be positive".into()));
        }
        for (name, r) in [
            ("target_click_rate", self.target_click_rate),
            ("target_purchase_rate_given_click", self.target_purchase_rate_given_click),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(Error::InvalidArgument(format!("{name} must be in (0, 1)")));
            }
        }
        for t in Topic::ALL {
            let n = self.domains.iter().filter(|d| d.topic == t).count();
            if n == 0 {
                return Err(Error::InvalidArgument(format!("topic {t} has no domains")));
            }
        }
        for d in &self.domains {
            if d.preference_shift.len() != self.latent_dim || d.item_popularity_tilt.len() != self.latent_dim {
                return Err(Error::InvalidArgument(format!(
                    "domain {}={} vectors must have latent_dim entries",
                    d.topic, d.id
                )));
            }
            if d.preference_shift.iter().chain(&d.item_popularity_tilt).any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite domain vector".into()));
            }
            if !(d.affinity_scale.is_finite() && d.popularity_scale.is_finite()) {
                return Err(Error::InvalidArgument("non-finite domain scale".into()));
            }
            if !(d.weight >= 0.0) {
                return Err(Error::InvalidArgument("domain weights must be non-negative".into()));
            }
        }
        Ok(())
    }

    pub fn domains_of(&self, topic: Topic) -> Vec<&DomainSpec> {
        let mut v: Vec<_> = self.domains.iter().filter(|d| d.topic == topic).collect();
        v.sort_by_key(|d| d.id);
        v
    }

    /// Vocabulary size of each context column (index 0 reserved for unknown).
    pub fn context_vocab(&self) -> [usize; N_CONTEXT_FEATURES] {
        [AGE_BUCKETS as usize + 1, self.latent_dim + 1, 25]
    }
}

struct World {
    users: Vec<Vec<f64>>,
    user_age: Vec<u32>,
    user_region: Vec<u32>,
    items: Vec<Vec<f64>>,
    item_pop: Vec<f64>,
    item_category: Vec<u32>,
    scenes: Vec<DomainSpec>,
    regions: Vec<DomainSpec>,
    periods: Vec<DomainSpec>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn pick(rng: &mut impl Rng, cdf: &[f64]) -> usize {
    let total = *cdf.last().unwrap();
    let u = rng.random::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn cdf(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

impl World {
    fn new(cfg: &GeneratorConfig) -> Self {
        let mut rng = stream_rng(cfg.seed, STREAM_LATENTS);
        let l = cfg.latent_dim;
        let gauss = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
            (0..l).map(|_| StandardNormal.sample(rng)).collect()
        };
        let regions: Vec<DomainSpec> = cfg.domains_of(Topic::Region).into_iter().cloned().collect();
        let region_cdf = cdf(regions.iter().map(|d| d.weight));
        // Index 0 is the unknown user / item and is never sampled.
        let mut users = vec![vec![0.0; l]];
        let mut user_age = vec![0];
        let mut user_region = vec![0];
        for _ in 0..cfg.n_users {
            users.push(gauss(&mut rng));
            user_age.push(rng.random_range(1..=AGE_BUCKETS));
            user_region.push(regions[pick(&mut rng, &region_cdf)].id);
        }
        let mut items = vec![vec![0.0; l]];
        let mut item_pop = vec![0.0];
        let mut item_category = vec![0];
        for _ in 0..cfg.n_items {
            let v = gauss(&mut rng);
            let cat = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i as u32 + 1)
                .unwrap();
            items.push(v);
            item_pop.push(StandardNormal.sample(&mut rng));
            item_category.push(cat);
        }
        World {
            users,
            user_age,
            user_region,
            items,
            item_pop,
            item_category,
            scenes: cfg.domains_of(Topic::Scene).into_iter().cloned().collect(),
            regions,
            periods: cfg.domains_of(Topic::Period).into_iter().cloned().collect(),
        }
    }

    fn combo_vectors(&self, ids: &DomainIds) -> (Shift, Vec<f64>) {
        let l = self.items[0].len();
        let mut shift = Shift::none(l);
        let mut tilt = vec![0.0; l];
        for (set, id) in [
            (&self.scenes, ids.scene),
            (&self.regions, ids.region),
            (&self.periods, ids.period),
        ] {
            let d = &set[(id - 1) as usize];
            for k in 0..l {
                shift.preference[k] += d.preference_shift[k];
                tilt[k] += d.item_popularity_tilt[k];
            }
            shift.affinity *= d.affinity_scale;
            shift.popularity *= d.popularity_scale;
        }
        (shift, tilt)
    }
}

/// How one domain combination deviates from the shared click model.
#[derive(Clone, Debug)]
struct Shift {
    preference: Vec<f64>,
    affinity: f64,
    popularity: f64,
}

impl Shift {
    fn none(latent_dim: usize) -> Self {
        Shift {
            preference: vec![0.0; latent_dim],
            affinity: 1.0,
            popularity: 1.0,
        }
    }
}

/// Per-domain-combination item sampling tables and shifts.
struct ComboTables {
    n_regions: usize,
    n_periods: usize,
    shifts: Vec<Shift>,
    item_cdfs: Vec<Vec<f64>>,
}

impl ComboTables {
    fn new(world: &World) -> Self {
        let l = world.items[0].len() as f64;
        let (ns, nr, np) = (world.scenes.len(), world.regions.len(), world.periods.len());
        let mut shifts = Vec::new();
        let mut item_cdfs = Vec::new();
        for s in 1..=ns as u32 {
            for r in 1..=nr as u32 {
                for p in 1..=np as u32 {
                    let ids = DomainIds { scene: s, region: r, period: p };
                    let (shift, tilt) = world.combo_vectors(&ids);
                    let weights = (1..world.items.len())
                        .map(|i| (world.item_pop[i] + dot(&tilt, &world.items[i]) / l.sqrt()).exp());
                    item_cdfs.push(cdf(weights));
                    shifts.push(shift);
                }
            }
        }
        ComboTables {
            n_regions: nr,
            n_periods: np,
            shifts,
            item_cdfs,
        }
    }

    fn index(&self, ids: &DomainIds) -> usize {
        ((ids.scene as usize - 1) * self.n_regions + ids.region as usize - 1) * self.n_periods
            + ids.period as usize
            - 1
    }
}

fn logit_without_bias(cfg: &GeneratorConfig, world: &World, shift: &Shift, user: usize, item: usize) -> f64 {
    let l = (cfg.latent_dim as f64).sqrt();
    let v = &world.items[item];
    shift.affinity * cfg.affinity * dot(&world.users[user], v) / l
        + dot(&shift.preference, v) / l
        + shift.popularity * cfg.popularity * world.item_pop[item]
}

/// Bias that makes the expected click probability equal the target,
/// found by bisection over a Monte-Carlo sample of impressions.
fn calibrate_bias(cfg: &GeneratorConfig, world: &World, tables: &ComboTables) -> f64 {
    let mut rng = stream_rng(cfg.seed, STREAM_CALIBRATION);
    let scene_cdf = cdf(world.scenes.iter().map(|d| d.weight));
    let period_cdf = cdf(world.periods.iter().map(|d| d.weight));
    let zs: Vec<f64> = (0..20_000)
        .map(|_| {
            let user = rng.random_range(1..=cfg.n_users);
            let ids = DomainIds {
                scene: pick(&mut rng, &scene_cdf) as u32 + 1,
                region: world.user_region[user],
                period: pick(&mut rng, &period_cdf) as u32 + 1,
            };
            let c = tables.index(&ids);
            let item = pick(&mut rng, &tables.item_cdfs[c]) + 1;
            logit_without_bias(cfg, world, &tables.shifts[c], user, item)
        })
        .collect();
    let mean_rate = |b: f64| zs.iter().map(|z| sigmoid(b + z)).sum::<f64>() / zs.len() as f64;
    let (mut lo, mut hi) = (-30.0, 30.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_rate(mid) < cfg.target_click_rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generates a chronologically ordered dataset.
pub fn generate(cfg: &GeneratorConfig) -> Result<Vec<InteractionRecord>> {
    cfg.validate()?;
    let world = World::new(cfg);
    let tables = ComboTables::new(&world);
    let bias = calibrate_bias(cfg, &world, &tables);
    let purchase_ratio = cfg.target_purchase_rate_given_click / cfg.target_click_rate;

    let mut rng = stream_rng(cfg.seed, STREAM_RECORDS);
    let scene_cdf = cdf(world.scenes.iter().map(|d| d.weight));
    let period_cdf = cdf(world.periods.iter().map(|d| d.weight));
    let n_periods = world.periods.len() as i64;
    let mut history: Vec<VecDeque<u32>> = vec![VecDeque::new(); cfg.n_users + 1];
    let mut out = Vec::with_capacity(cfg.n_days * cfg.records_per_day);
    let no_shift = Shift::none(cfg.latent_dim);

    for day in 0..cfg.n_days as i64 {
        let day_start = EPOCH_START + day * SECONDS_PER_DAY;
        let mut slots: Vec<(i64, u32, u32, u32)> = (0..cfg.records_per_day)
            .map(|_| {
                let period = pick(&mut rng, &period_cdf) as i64;
                let span = SECONDS_PER_DAY / n_periods;
                let t = day_start + period * span + rng.random_range(0..span);
                let user = rng.random_range(1..=cfg.n_users as u32);
                let scene = pick(&mut rng, &scene_cdf) as u32 + 1;
                (t, user, scene, period as u32 + 1)
            })
            .collect();
        slots.sort_unstable();
        for (t, user, scene, period) in slots {
            let u = user as usize;
            let ids = DomainIds {
                scene,
                region: world.user_region[u],
                period,
            };
            let c = tables.index(&ids);
            let item = pick(&mut rng, &tables.item_cdfs[c]) + 1;
            let shift = if day as usize >= cfg.shift_onset_day { &tables.shifts[c] } else { &no_shift };
            let p = sigmoid(bias + logit_without_bias(cfg, &world, shift, u, item));
            let click = rng.random::<f64>() < p;
            let purchase = click && rng.random::<f64>() < (purchase_ratio * p).clamp(0.0, 1.0);

            let hour = ((t - day_start) / 3600) as u32;
            let mut features = vec![world.user_age[u], world.item_category[item], hour + 1];
            let h = &history[u];
            features.extend((0..cfg.history_len).map(|k| h.get(k).copied().unwrap_or(0)));
            for _ in 0..cfg.n_extra_features {
                features.push(rng.random_range(1..=4));
            }
            if click {
                let h = &mut history[u];
                h.push_front(item as u32);
                h.truncate(cfg.history_len);
            }
            out.push(InteractionRecord {
                timestamp: t,
                user_id: user,
                item_id: item as u32,
                domain_ids: ids,
                feature_ids: features,
                click: click as u8,
                purchase: purchase as u8,
            });
        }
    }
    Ok(out)
}
