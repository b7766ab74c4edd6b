//! Synthetic interaction streams with drifting user tastes and power-law item popularity.
//!
//! Every user holds `interests` latent vectors and every item one latent vector near the
//! centre of its category. An event picks a user uniformly, draws `candidates` items by
//! popularity, and keeps one with probability proportional to `exp(selectivity·a)`,
//! where `a` is the item's affinity: its best inner product with the user's interests.
//! The label is Bernoulli(sigmoid(a − label_offset)). After each of their events, all
//! interests of the user take one AR(1) step of size `drift`.

use std::fmt::Write as _;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::key_values;
use crate::error::{Error, Result};
use crate::numeric::{dot, sigmoid};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub users: usize,
    pub items: usize,
    pub events: usize,
    pub latent_dim: usize,
    /// AR(1) innovation weight per user event, in [0, 1].
    pub drift: f64,
    /// Popularity of the item at rank `r` is proportional to `(r + 1)^-tail_exponent`.
    pub tail_exponent: f64,
    pub seed: u64,
    pub categories: usize,
    /// Spread of items around their category centre.
    pub category_noise: f64,
    pub interests: usize,
    pub candidates: usize,
    pub selectivity: f64,
    /// Standard deviation of user-item inner products.
    pub signal_scale: f64,
    pub label_offset: f64,
    pub start_time: i64,
    pub time_step: i64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            users: 200,
            items: 2000,
            events: 10_000,
            latent_dim: 8,
            drift: 0.1,
            tail_exponent: 1.1,
            seed: 0,
            categories: 20,
            category_noise: 0.5,
            interests: 1,
            candidates: 20,
            selectivity: 1.0,
            signal_scale: 2.0,
            label_offset: 0.0,
            start_time: 1_600_000_000,
            time_step: 60,
        }
    }
}

pub const SYNTH_KEYS: [&str; 16] = [
    "users",
    "items",
    "events",
    "latent_dim",
    "drift",
    "tail_exponent",
    "seed",
    "categories",
    "category_noise",
    "interests",
    "candidates",
    "selectivity",
    "signal_scale",
    "label_offset",
    "start_time",
    "time_step",
];

fn num<T: std::str::FromStr>(k: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{k}: cannot parse {v:?}")))
}

impl SynthSpec {
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "users" => self.users = num(key, v)?,
            "items" => self.items = num(key, v)?,
            "events" => self.events = num(key, v)?,
            "latent_dim" => self.latent_dim = num(key, v)?,
            "drift" => self.drift = num(key, v)?,
            "tail_exponent" => self.tail_exponent = num(key, v)?,
            "seed" => self.seed = num(key, v)?,
            "categories" => self.categories = num(key, v)?,
            "category_noise" => self.category_noise = num(key, v)?,
            "interests" => self.interests = num(key, v)?,
            "candidates" => self.candidates = num(key, v)?,
            "selectivity" => self.selectivity = num(key, v)?,
            "signal_scale" => self.signal_scale = num(key, v)?,
            "label_offset" => self.label_offset = num(key, v)?,
            "start_time" => self.start_time = num(key, v)?,
            "time_step" => self.time_step = num(key, v)?,
            other => return Err(Error::Config(format!("unknown synth key {other:?}"))),
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = SynthSpec::default();
        for (k, v) in key_values(text)? {
            spec.set(&k, &v)?;
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("degenerate synth spec: {m}")));
        if self.users == 0 || self.items == 0 || self.events == 0 || self.latent_dim == 0 {
            return bad("users, items, events and latent_dim must be positive");
        }
        if self.categories == 0 || self.interests == 0 || self.candidates == 0 {
            return bad("categories, interests and candidates must be positive");
        }
        if !(0.0..=1.0).contains(&self.drift) {
            return bad("drift must lie in [0, 1]");
        }
        if !(self.tail_exponent >= 0.0 && self.tail_exponent.is_finite()) {
            return bad("tail_exponent must be finite and non-negative");
        }
        for (name, v) in [
            ("category_noise", self.category_noise),
            ("selectivity", self.selectivity),
            ("signal_scale", self.signal_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be finite and non-negative"));
            }
        }
        if !self.label_offset.is_finite() || self.time_step <= 0 || self.start_time < 0 {
            return bad("label_offset must be finite, time_step positive, start_time non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthEvent {
    pub timestamp: i64,
    pub user: usize,
    pub item: usize,
    pub category: usize,
    /// Probability behind the sampled label.
    pub probability: f64,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub events: Vec<SynthEvent>,
    pub item_latents: Vec<Vec<f64>>,
    pub item_categories: Vec<usize>,
    /// Per user, the interests before the first event.
    pub initial_interests: Vec<Vec<Vec<f64>>>,
    pub final_interests: Vec<Vec<Vec<f64>>>,
}

fn normal_vec<R: Rng>(rng: &mut R, d: usize, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn generate_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.latent_dim;

    let centres: Vec<Vec<f64>> = (0..spec.categories).map(|_| normal_vec(&mut rng, d, 1.0)).collect();
    let item_scale = spec.signal_scale / (d as f64 * (1.0 + spec.category_noise.powi(2))).sqrt();
    let item_categories: Vec<usize> = (0..spec.items).map(|_| rng.gen_range(0..spec.categories)).collect();
    let item_latents: Vec<Vec<f64>> = item_categories
        .iter()
        .map(|&c| {
            let noise = normal_vec(&mut rng, d, spec.category_noise);
            centres[c].iter().zip(noise).map(|(m, e)| item_scale * (m + e)).collect()
        })
        .collect();

    let mut ranks: Vec<usize> = (0..spec.items).collect();
    ranks.shuffle(&mut rng);
    let popularity = WeightedIndex::new(ranks.iter().map(|&r| ((r + 1) as f64).powf(-spec.tail_exponent)))
        .map_err(|e| Error::Config(format!("popularity weights: {e}")))?;

    let mut interests: Vec<Vec<Vec<f64>>> = (0..spec.users)
        .map(|_| (0..spec.interests).map(|_| normal_vec(&mut rng, d, 1.0)).collect())
        .collect();
    let initial_interests = interests.clone();
    let keep = (1.0 - spec.drift * spec.drift).sqrt();

    let mut events = Vec::with_capacity(spec.events);
    for t in 0..spec.events {
        let user = rng.gen_range(0..spec.users);
        let affinity = |item: usize| {
            interests[user]
                .iter()
                .map(|u| dot(u, &item_latents[item]))
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let pool: Vec<usize> = (0..spec.candidates).map(|_| popularity.sample(&mut rng)).collect();
        let scores: Vec<f64> = pool.iter().map(|&i| spec.selectivity * affinity(i)).collect();
        let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pick = WeightedIndex::new(scores.iter().map(|s| (s - top).exp()))
            .map_err(|e| Error::Config(format!("selection weights: {e}")))?
            .sample(&mut rng);
        let item = pool[pick];
        let p = sigmoid(affinity(item) - spec.label_offset);
        let label = u8::from(rng.gen::<f64>() < p);
        events.push(SynthEvent {
            timestamp: spec.start_time + t as i64 * spec.time_step,
            user,
            item,
            category: item_categories[item],
            probability: p,
            label,
        });
        if spec.drift > 0.0 {
            for u in interests[user].iter_mut() {
                for x in u.iter_mut() {
                    *x = keep * *x + spec.drift * rng.sample::<f64, _>(StandardNormal);
                }
            }
        }
    }
    Ok(SynthData {
        events,
        item_latents,
        item_categories,
        initial_interests,
        final_interests: interests,
    })
}

fn csv(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(",")
}

impl SynthData {
    /// The interactions file.
    pub fn to_interactions_text(&self) -> String {
        let mut out = String::with_capacity(self.events.len() * 48);
        for e in &self.events {
            let _ = writeln!(
                out,
                "{}\tuser_id=u{}\titem_id=i{};item_cat=c{}\t{}",
                e.timestamp, e.user, e.item, e.category, e.label
            );
        }
        out
    }

    /// Ground truth: `user<TAB>id<TAB>interest<TAB>initial<TAB>final` and
    /// `item<TAB>id<TAB>category<TAB>latent` lines, vectors comma-separated.
    pub fn latents_text(&self) -> String {
        let mut out = String::new();
        for (u, (start, end)) in self.initial_interests.iter().zip(&self.final_interests).enumerate() {
            for (m, (a, b)) in start.iter().zip(end).enumerate() {
                let _ = writeln!(out, "user\tu{u}\t{m}\t{}\t{}", csv(a), csv(b));
            }
        }
        for (i, (v, c)) in self.item_latents.iter().zip(&self.item_categories).enumerate() {
            let _ = writeln!(out, "item\ti{i}\tc{c}\t{}", csv(v));
        }
        out
    }

    pub fn item_degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.item_latents.len()];
        for e in &self.events {
            deg[e.item] += 1;
        }
        deg
    }

    pub fn positive_rate(&self) -> f64 {
        self.events.iter().filter(|e| e.label == 1).count() as f64 / self.events.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DegreeSummary {
    pub items: usize,
    pub touched: usize,
    pub max_degree: usize,
    /// Fraction of all items with at most `k` interactions, for each threshold.
    pub longtail: Vec<(usize, f64)>,
}

pub fn degree_summary(degrees: &[usize], thresholds: &[usize]) -> DegreeSummary {
    let n = degrees.len().max(1) as f64;
    DegreeSummary {
        items: degrees.len(),
        touched: degrees.iter().filter(|&&d| d > 0).count(),
        max_degree: degrees.iter().copied().max().unwrap_or(0),
        longtail: thresholds
            .iter()
            .map(|&k| (k, degrees.iter().filter(|&&d| d <= k).count() as f64 / n))
            .collect(),
    }
}

impl DegreeSummary {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "items\t{}\nitems_with_interactions\t{}\nmax_degree\t{}\n",
            self.items, self.touched, self.max_degree
        );
        for (k, f) in &self.longtail {
            let _ = writeln!(out, "fraction_degree<={k}\t{f:.4}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            users: 20,
            items: 100,
            events: 500,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate_synthetic(&small()).unwrap();
        let b = generate_synthetic(&small()).unwrap();
        assert_eq!(a.to_interactions_text(), b.to_interactions_text());
        assert_eq!(a.latents_text(), b.latents_text());
        let c = generate_synthetic(&SynthSpec { seed: 1, ..small() }).unwrap();
        assert_ne!(a.to_interactions_text(), c.to_interactions_text());
    }

    #[test]
    fn heavy_tail_leaves_most_items_rare() {
        let spec = SynthSpec {
            tail_exponent: 1.5,
            ..SynthSpec::default()
        };
        let data = generate_synthetic(&spec).unwrap();
        let s = degree_summary(&data.item_degrees(), &[3]);
        assert!(s.longtail[0].1 > 0.5, "{s:?}");
    }

    #[test]
    fn no_drift_keeps_interests() {
        let data = generate_synthetic(&SynthSpec { drift: 0.0, ..small() }).unwrap();
        assert_eq!(data.initial_interests, data.final_interests);
        let moved = generate_synthetic(&small()).unwrap();
        assert_ne!(moved.initial_interests, moved.final_interests);
    }

    #[test]
    fn spec_parsing() {
        let s = SynthSpec::parse("users = 3\nitems = 4\nevents = 10\ndrift = 0.5\n").unwrap();
        assert_eq!((s.users, s.items, s.events, s.drift), (3, 4, 10, 0.5));
        assert!(SynthSpec::parse("users = 0").is_err());
        assert!(SynthSpec::parse("drift = 1.5").is_err());
        assert!(SynthSpec::parse("colour = red").is_err());
    }

    #[test]
    fn summary_recounts() {
        let s = degree_summary(&[0, 1, 4, 9], &[3, 5]);
        assert_eq!(s.touched, 3);
        assert_eq!(s.longtail, vec![(3, 0.5), (5, 0.75)]);
    }
}
