//! Seeded synthetic corpora for demos and end-to-end tests.
//!
//! The dialog generator produces emotionally coloured prompts whose
//! replies either echo the prompt's affect or fall back to a generic dull
//! response. The review generator produces reviews whose usefulness votes
//! correlate with a small set of marker words.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::affect::{AffectLexicon, AffectVector};
use crate::corpus::{preprocess_text, Review, TextPair};
use crate::rewards::DULL_RESPONSES;

const POSITIVE: [(&str, f64, f64, f64); 6] = [
    ("happy", 8.2, 6.5, 7.0),
    ("great", 7.9, 6.0, 6.8),
    ("wonderful", 8.4, 6.3, 7.1),
    ("lovely", 8.0, 5.4, 6.6),
    ("glad", 7.6, 5.2, 6.7),
    ("fun", 8.1, 7.1, 6.5),
];

const NEGATIVE: [(&str, f64, f64, f64); 6] = [
    ("sad", 1.8, 4.1, 3.2),
    ("terrible", 1.9, 6.8, 3.5),
    ("awful", 2.0, 6.2, 3.4),
    ("upset", 2.3, 6.0, 3.1),
    ("angry", 2.5, 7.6, 4.9),
    ("lonely", 2.2, 4.5, 2.9),
];

const TOPICS: [&str; 8] = [
    "movie", "dinner", "weekend", "job", "trip", "party", "game", "concert",
];

/// Lexicon covering the affect words used by [`affect_dialog_corpus`].
/// The scores are illustrative, not taken from a published norm set.
pub fn synthetic_lexicon() -> AffectLexicon {
    let mut lex = AffectLexicon::new();
    for (w, v, a, d) in POSITIVE.iter().chain(&NEGATIVE) {
        lex.insert(w, AffectVector::new(*v, *a, *d))
            .expect("synthetic scores are in range");
    }
    lex
}

/// `n` (prompt, reply) pairs. Each prompt mentions a topic with a positive
/// or negative word; the reply is affect-consistent with probability
/// `1 - dull_rate`, otherwise one of the standard dull responses (mostly
/// the first one).
pub fn affect_dialog_corpus(n: usize, dull_rate: f64, seed: u64) -> Vec<TextPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let topic = TOPICS.choose(&mut rng).expect("non-empty");
            let positive = rng.gen_bool(0.5);
            let pool = if positive { &POSITIVE } else { &NEGATIVE };
            let word = pool.choose(&mut rng).expect("non-empty").0;
            let prompt = match rng.gen_range(0..3) {
                0 => format!("the {topic} was {word} ."),
                1 => format!("i feel {word} about the {topic} ."),
                _ => format!("my {topic} made me {word} ."),
            };
            let reply = if rng.gen_bool(dull_rate) {
                let idx = if rng.gen_bool(0.7) {
                    0
                } else {
                    rng.gen_range(0..DULL_RESPONSES.len())
                };
                DULL_RESPONSES[idx].to_string()
            } else {
                let echo = pool.choose(&mut rng).expect("non-empty").0;
                match rng.gen_range(0..3) {
                    0 => format!("that sounds {echo} ."),
                    1 => format!("a {echo} {topic} indeed ."),
                    _ => format!("so {echo} , tell me more ."),
                }
            };
            TextPair {
                source: preprocess_text(&prompt),
                target: preprocess_text(&reply),
            }
        })
        .collect()
}

const USEFUL_MARKERS: [&str; 8] = [
    "detailed",
    "recommend",
    "tip",
    "price",
    "parking",
    "menu",
    "portion",
    "service",
];
const NOISE_MARKERS: [&str; 6] = ["lol", "meh", "whatever", "ugh", "omg", "idk"];
const FILLER: [&str; 10] = [
    "the", "place", "was", "we", "went", "here", "food", "and", "it", "really",
];

/// `n` reviews; useful ones use marker vocabulary and get 5-10 votes,
/// the rest get 0-4 votes. About `unrated_rate` of reviews carry no vote.
/// One review always has 10 votes and one has 0 so the normalized range
/// equals the raw one.
pub fn review_corpus(n: usize, unrated_rate: f64, seed: u64) -> Vec<Review> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let useful = if i < 2 { i == 0 } else { rng.gen_bool(0.5) };
            let markers: &[&str] = if useful {
                &USEFUL_MARKERS
            } else {
                &NOISE_MARKERS
            };
            let mut words: Vec<&str> = (0..rng.gen_range(4..9))
                .map(|_| *FILLER.choose(&mut rng).expect("non-empty"))
                .collect();
            for _ in 0..rng.gen_range(1..4) {
                let pos = rng.gen_range(0..=words.len());
                words.insert(pos, markers.choose(&mut rng).expect("non-empty"));
            }
            let votes = match i {
                0 => 10,
                1 => 0,
                _ if useful => rng.gen_range(5..=10),
                _ => rng.gen_range(0..=4),
            };
            let rated = i < 2 || !rng.gen_bool(unrated_rate);
            Review {
                text: words.join(" "),
                useful_raw: rated.then_some(votes),
                useful_normalized: None,
            }
        })
        .collect()
}
