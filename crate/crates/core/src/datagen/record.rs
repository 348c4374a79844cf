use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topic {
    Scene,
    Region,
    Period,
}

impl Topic {
    pub const ALL: [Topic; 3] = [Topic::Scene, Topic::Region, Topic::Period];

    pub fn name(self) -> &'static str {
        match self {
            Topic::Scene => "scene",
            Topic::Region => "region",
            Topic::Period => "period",
        }
    }
}

impl fmt::Display for Topic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Topic {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scene" => Ok(Topic::Scene),
            "region" => Ok(Topic::Region),
            "period" => Ok(Topic::Period),
            _ => Err(Error::InvalidArgument(format!("unknown topic {s:?}"))),
        }
    }
}

/// Domain id per topic. Ids start at 1; 0 means unknown.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainIds {
    pub scene: u32,
    pub region: u32,
    pub period: u32,
}

impl DomainIds {
    pub fn get(&self, topic: Topic) -> u32 {
        match topic {
            Topic::Scene => self.scene,
            Topic::Region => self.region,
            Topic::Period => self.period,
        }
    }
}

/// One impression.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionRecord {
    pub timestamp: i64,
    pub user_id: u32,
    pub item_id: u32,
    pub domain_ids: DomainIds,
    pub feature_ids: Vec<u32>,
    pub click: u8,
    pub purchase: u8,
}

impl InteractionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.click > 1 || self.purchase > 1 {
            return Err(Error::Invariant(format!(
                "labels must be 0 or 1 (click={}, purchase={})",
                self.click, self.purchase
            )));
        }
        if self.purchase > self.click {
            return Err(Error::Invariant("purchase=1 requires click=1".into()));
        }
        Ok(())
    }

    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(SECONDS_PER_DAY)
    }

    pub fn in_domain(&self, key: &DomainKey) -> bool {
        key.matches(&self.domain_ids)
    }
}

/// Identifies an adapter's domain: one id on each of a set of topics.
///
/// A single-topic key such as `region=4` is the common case; cross-topic keys
/// like `scene=1,region=3` select the intersection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DomainKey(Vec<(Topic, u32)>);

impl DomainKey {
    pub fn new(mut parts: Vec<(Topic, u32)>) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument("empty domain key".into()));
        }
        parts.sort();
        if parts.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("topic repeated in domain key".into()));
        }
        Ok(DomainKey(parts))
    }

    pub fn single(topic: Topic, id: u32) -> Self {
        DomainKey(vec![(topic, id)])
    }

    /// The key of `ids` restricted to `topics`.
    pub fn project(ids: &DomainIds, topics: &[Topic]) -> Result<Self> {
        DomainKey::new(topics.iter().map(|&t| (t, ids.get(t))).collect())
    }

    pub fn parts(&self) -> &[(Topic, u32)] {
        &self.0
    }

    pub fn topics(&self) -> Vec<Topic> {
        self.0.iter().map(|(t, _)| *t).collect()
    }

    pub fn matches(&self, ids: &DomainIds) -> bool {
        self.0.iter().all(|&(t, id)| ids.get(t) == id)
    }
}

impl fmt::Display for DomainKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (t, id)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{t}={id}")?;
        }
        Ok(())
    }
}

impl FromStr for DomainKey {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut parts = Vec::new();
        for piece in s.split(',') {
            let (t, id) = piece
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("bad domain key {s:?}")))?;
            let id: u32 = id
                .trim()
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad domain id in {s:?}")))?;
            parts.push((t.trim().parse()?, id));
        }
        DomainKey::new(parts)
    }
}
