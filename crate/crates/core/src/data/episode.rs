//! Episodic C-way N-shot sampling.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::dataset::Dataset;
use crate::data::schema::Label;
use crate::error::{Error, Result};

pub const DEFAULT_QUERIES: usize = 15;

/// Task shape: `ways` classes, `shots` support and `queries` query samples
/// per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeShape {
    pub ways: usize,
    pub shots: usize,
    pub queries: usize,
}

impl EpisodeShape {
    pub fn new(ways: usize, shots: usize, queries: usize) -> Result<Self> {
        if ways == 0 || shots == 0 || queries == 0 {
            return Err(Error::Sampling(format!(
                "ways, shots and queries must be positive (got {ways}, {shots}, {queries})"
            )));
        }
        Ok(Self { ways, shots, queries })
    }

    pub fn support_len(&self) -> usize {
        self.ways * self.shots
    }

    pub fn query_len(&self) -> usize {
        self.ways * self.queries
    }
}

impl Default for EpisodeShape {
    fn default() -> Self {
        Self {
            ways: 2,
            shots: 2,
            queries: DEFAULT_QUERIES,
        }
    }
}

/// Reference to a dataset row together with its episode-local class index
/// (position of its label in the roster).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeItem {
    pub index: usize,
    pub label: Label,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    /// Sampled classes in ascending order.
    pub classes: Vec<Label>,
    /// Class-major: `shots` items for `classes[0]`, then `classes[1]`, ...
    pub support: Vec<EpisodeItem>,
    /// Class-major, `queries` items per class.
    pub query: Vec<EpisodeItem>,
}

impl Episode {
    pub fn ways(&self) -> usize {
        self.classes.len()
    }

    pub fn class_of(&self, label: Label) -> Option<usize> {
        self.classes.iter().position(|&c| c == label)
    }

    pub fn support_classes(&self) -> Vec<usize> {
        self.support.iter().map(|i| i.class).collect()
    }

    pub fn query_classes(&self) -> Vec<usize> {
        self.query.iter().map(|i| i.class).collect()
    }

    /// Queries whose label is normal.
    pub fn normal_queries(&self) -> impl Iterator<Item = &EpisodeItem> {
        self.query.iter().filter(|i| i.label == Label::Normal)
    }

    pub fn abnormal_queries(&self) -> impl Iterator<Item = &EpisodeItem> {
        self.query.iter().filter(|i| i.label != Label::Normal)
    }

    /// Row-major feature matrix of the given items.
    pub fn gather(ds: &Dataset, items: &[EpisodeItem]) -> Vec<f64> {
        items.iter().flat_map(|i| ds.row(i.index).iter().copied()).collect()
    }
}

/// Owns a seeded generator; successive calls yield a reproducible stream of
/// episodes.
#[derive(Debug, Clone)]
pub struct EpisodeSampler {
    rng: ChaCha8Rng,
}

impl EpisodeSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn sample(&mut self, ds: &Dataset, shape: EpisodeShape) -> Result<Episode> {
        let available = ds.classes();
        if available.len() < shape.ways {
            return Err(Error::Sampling(format!(
                "{}-way episode requested but dataset has {} class(es)",
                shape.ways,
                available.len()
            )));
        }
        let mut picked: Vec<usize> = index::sample(&mut self.rng, available.len(), shape.ways).into_vec();
        picked.sort_unstable();
        let classes: Vec<Label> = picked.iter().map(|&i| available[i]).collect();
        let need = shape.shots + shape.queries;
        for &c in &classes {
            let have = ds.class_indices(c).len();
            if have < need {
                return Err(Error::Sampling(format!(
                    "class {c} has {have} samples, episode needs {need} ({} shots + {} queries)",
                    shape.shots, shape.queries
                )));
            }
        }
        let mut support = Vec::with_capacity(shape.support_len());
        let mut query = Vec::with_capacity(shape.query_len());
        for (class, &label) in classes.iter().enumerate() {
            let pool = ds.class_indices(label);
            let draw = index::sample(&mut self.rng, pool.len(), need);
            for (k, pos) in draw.iter().enumerate() {
                let item = EpisodeItem {
                    index: pool[pos],
                    label,
                    class,
                };
                if k < shape.shots {
                    support.push(item);
                } else {
                    query.push(item);
                }
            }
        }
        Ok(Episode {
            classes,
            support,
            query,
        })
    }
}

/// Draws a single episode from a fresh generator seeded with `seed`.
pub fn sample_episode(ds: &Dataset, shape: EpisodeShape, seed: u64) -> Result<Episode> {
    EpisodeSampler::new(seed).sample(ds, shape)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn toy(normal: usize, abnormal: usize) -> Dataset {
        let rows: Vec<Vec<f64>> = (0..normal + abnormal).map(|i| vec![i as f64]).collect();
        let labels: Vec<Label> = (0..normal + abnormal)
            .map(|i| if i < normal { Label::Normal } else { Label::Abnormal })
            .collect();
        Dataset::from_rows(&rows, &labels).unwrap()
    }

    #[test]
    fn default_shape_sizes() {
        let ds = toy(40, 40);
        let ep = sample_episode(&ds, EpisodeShape::default(), 3).unwrap();
        assert_eq!(ep.support.len(), 4);
        assert_eq!(ep.query.len(), 30);
        assert_eq!(ep.classes, vec![Label::Normal, Label::Abnormal]);
        let s: BTreeSet<usize> = ep.support.iter().map(|i| i.index).collect();
        assert!(ep.query.iter().all(|q| !s.contains(&q.index)));
        assert_eq!(ep.normal_queries().count(), 15);
    }

    #[test]
    fn same_seed_same_episode() {
        let ds = toy(30, 50);
        let shape = EpisodeShape::new(2, 5, 10).unwrap();
        assert_eq!(
            sample_episode(&ds, shape, 11).unwrap(),
            sample_episode(&ds, shape, 11).unwrap()
        );
    }

    #[test]
    fn exact_class_size_uses_every_sample() {
        let ds = toy(17, 20);
        let shape = EpisodeShape::new(2, 2, 15).unwrap();
        let ep = sample_episode(&ds, shape, 0).unwrap();
        let normal: BTreeSet<usize> = ep
            .support
            .iter()
            .chain(&ep.query)
            .filter(|i| i.label == Label::Normal)
            .map(|i| i.index)
            .collect();
        assert_eq!(normal, (0..17).collect());
    }

    #[test]
    fn insufficient_class_is_named() {
        let ds = toy(5, 40);
        let err = sample_episode(&ds, EpisodeShape::default(), 0).unwrap_err();
        assert!(matches!(&err, Error::Sampling(m) if m.contains("normal")), "{err}");
        let err = sample_episode(&toy(40, 0), EpisodeShape::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Sampling(_)));
    }
}
