//! Seeded synthetic dataset with text, categorical and numeric columns.
//!
//! Version 1 layout: `id` int, `label` int (class index), `text` utf8,
//! `category` utf8, `region` utf8, `amount` float, `count` int. Each class
//! owns five marker tokens `k{class}_{j}`; a row carries one or two of its
//! class's markers with probability `signal`, and one marker of a random
//! class with probability `noise`. Filler tokens `w000..` are uniform. Half
//! the categories are drawn from a per-class pair, the rest uniformly.
//! `region` is pure noise; `amount` shifts with the class.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::frame::{Column, ColumnRole, DType, Field, Frame};

pub const GENERATOR_VERSION: u32 = 1;

const CATEGORIES: [&str; 6] = ["cat_a", "cat_b", "cat_c", "cat_d", "cat_e", "cat_f"];
const REGIONS: [&str; 4] = ["east", "north", "south", "west"];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub rows: usize,
    /// Relative class frequencies; the class count is its length.
    pub class_weights: Vec<f64>,
    pub vocab: usize,
    pub signal: f64,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions { rows: 5000, class_weights: vec![0.45, 0.35, 0.2], vocab: 200, signal: 0.6, noise: 0.1, seed: 42 }
    }
}

fn pick_class(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if x < *w {
            return i;
        }
        x -= w;
    }
    weights.len() - 1
}

pub fn synth_dataset(opts: &SynthOptions) -> Frame {
    assert!(!opts.class_weights.is_empty() && opts.vocab > 0);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let classes = opts.class_weights.len();
    let n = opts.rows;
    let (mut id, mut label, mut text, mut cat, mut region, mut amount, mut count) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for r in 0..n {
        let class = pick_class(&mut rng, &opts.class_weights);
        let len = rng.random_range(6..=12);
        let mut tokens: Vec<String> = (0..len).map(|_| format!("w{:03}", rng.random_range(0..opts.vocab))).collect();
        if rng.random::<f64>() < opts.signal {
            for _ in 0..rng.random_range(1..=2) {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, format!("k{class}_{}", rng.random_range(0..5)));
            }
        }
        if rng.random::<f64>() < opts.noise {
            let other = rng.random_range(0..classes);
            let at = rng.random_range(0..=tokens.len());
            tokens.insert(at, format!("k{other}_{}", rng.random_range(0..5)));
        }
        let c = if rng.random::<bool>() {
            CATEGORIES[(2 * class + rng.random_range(0..2)) % CATEGORIES.len()]
        } else {
            CATEGORIES[rng.random_range(0..CATEGORIES.len())]
        };
        id.push(Some(r as i64));
        label.push(Some(class as i64));
        text.push(Some(tokens.join(" ")));
        cat.push(Some(c.to_string()));
        region.push(Some(REGIONS[rng.random_range(0..REGIONS.len())].to_string()));
        let a: f64 = 10.0 + 2.0 * class as f64 + rng.random_range(0.0..8.0);
        amount.push(Some((a * 100.0).round() / 100.0));
        count.push(Some(rng.random_range(1..=20)));
    }
    Frame::new(
        vec![
            Field::plain("id", DType::Int64),
            Field::new("label", DType::Int64, ColumnRole::Label),
            Field::plain("text", DType::Utf8),
            Field::plain("category", DType::Utf8),
            Field::plain("region", DType::Utf8),
            Field::plain("amount", DType::Float64),
            Field::plain("count", DType::Int64),
        ],
        vec![
            Column::Int64(id),
            Column::Int64(label),
            Column::Utf8(text),
            Column::Utf8(cat),
            Column::Utf8(region),
            Column::Float64(amount),
            Column::Int64(count),
        ],
    )
    .expect("generator builds a consistent frame")
}

/// `round(fraction * rows)` rows drawn without replacement, kept in their
/// original order.
pub fn sample_rows(frame: &Frame, fraction: f64, seed: u64) -> Frame {
    let n = frame.row_count();
    let take = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..take {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    let mut chosen = idx[..take].to_vec();
    chosen.sort_unstable();
    frame.take(&chosen)
}
