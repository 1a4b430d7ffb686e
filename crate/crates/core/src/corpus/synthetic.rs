//! Seeded two-class corpus built from disjoint keyword pools plus shared
//! noise words. The generating label of every post is known, which makes the
//! corpus an oracle for classifier, explainer and pseudo-labeling checks.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Label, Post, Source};
use crate::textprep::{preprocess, EmbeddingTable, PreprocessConfig};

pub const DEPRESSED_WORDS: &[&str] = &[
    "hopeless",
    "worthless",
    "empty",
    "exhausted",
    "numb",
    "crying",
    "lonely",
    "guilty",
    "insomnia",
    "miserable",
    "despair",
    "sad",
    "meaningless",
    "isolated",
    "broken",
    "ashamed",
    "grief",
    "failure",
    "pointless",
    "dread",
    "withdrawn",
    "sleepless",
    "burden",
    "darkness",
    "aching",
    "weeping",
    "gloomy",
    "bleak",
    "drained",
    "unmotivated",
];

pub const CONTROL_WORDS: &[&str] = &[
    "excited",
    "vacation",
    "hiking",
    "celebrate",
    "grateful",
    "energetic",
    "garden",
    "cooking",
    "concert",
    "laughing",
    "friends",
    "sunshine",
    "proud",
    "promotion",
    "festival",
    "beach",
    "painting",
    "adventure",
    "cheerful",
    "relaxed",
    "wedding",
    "puppy",
    "delicious",
    "victory",
    "bicycle",
    "picnic",
    "dancing",
    "optimistic",
    "thrilled",
    "playful",
];

pub const NOISE_WORDS: &[&str] = &[
    "weather",
    "monday",
    "coffee",
    "train",
    "office",
    "email",
    "phone",
    "street",
    "bus",
    "computer",
    "window",
    "kitchen",
    "store",
    "city",
    "road",
    "morning",
    "evening",
    "week",
    "month",
    "book",
    "movie",
    "music",
    "car",
    "door",
    "table",
    "paper",
    "meeting",
    "class",
    "school",
    "project",
    "lunch",
    "dinner",
    "water",
    "house",
    "apartment",
    "neighbor",
    "schedule",
    "parking",
    "ticket",
    "package",
    "laptop",
    "river",
    "shirt",
    "shoes",
    "market",
    "bank",
    "news",
    "game",
    "team",
    "jacket",
];

#[derive(Debug, Clone, Copy)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub min_keywords: usize,
    pub max_keywords: usize,
    pub min_noise: usize,
    pub max_noise: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { docs: 200, min_keywords: 3, max_keywords: 6, min_noise: 10, max_noise: 18, seed: 7 }
    }
}

/// Balanced corpus; even-indexed posts are depressed.
pub fn generate(spec: &SyntheticSpec) -> Vec<Post> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.docs)
        .map(|i| {
            let label = Label::from_bool(i % 2 == 0);
            let pool = if label.is_positive() { DEPRESSED_WORDS } else { CONTROL_WORDS };
            let k = rng.random_range(spec.min_keywords..=spec.max_keywords);
            let z = rng.random_range(spec.min_noise..=spec.max_noise);
            let mut words: Vec<&str> = (0..k).map(|_| *pool.choose(&mut rng).unwrap()).collect();
            words.extend((0..z).map(|_| *NOISE_WORDS.choose(&mut rng).unwrap()));
            words.shuffle(&mut rng);
            let mut text = words.join(" ");
            text.push('.');
            Post {
                id: format!("syn-{i:04}"),
                text,
                label: Some(label),
                source: Source::Synthetic,
                author_id: Some(format!("author-{}", i / 3)),
            }
        })
        .collect()
}

/// Standard-normal vectors for the preprocessed form of every generator word.
pub fn embedding_table(dim: usize, seed: u64) -> EmbeddingTable {
    clustered_embedding_table(dim, seed, 0.0)
}

/// Like [`embedding_table`], but depressed-pool words are shifted by
/// `separation` along a random unit direction and control-pool words by
/// `-separation`, so each pool forms a cluster the way related words do in
/// pretrained embeddings. Noise words stay centred.
pub fn clustered_embedding_table(dim: usize, seed: u64, separation: f64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = EmbeddingTable::new(dim);
    let axis: Vec<f64> = {
        let raw: Vec<f64> = (0..dim).map(|_| -> f64 { StandardNormal.sample(&mut rng) }).collect();
        let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        raw.into_iter().map(|v| v / norm).collect()
    };
    let pools = [(DEPRESSED_WORDS, separation), (CONTROL_WORDS, -separation), (NOISE_WORDS, 0.0)];
    for (pool, shift) in pools {
        for w in pool {
            for tok in preprocess(w, PreprocessConfig::default()).tokens {
                if table.get(&tok).is_none() {
                    let v: Vec<f64> = axis
                        .iter()
                        .map(|a| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            z + shift * a
                        })
                        .collect();
                    table.insert(tok, v);
                }
            }
        }
    }
    table
}
