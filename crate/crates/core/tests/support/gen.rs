//! Seeded random instances.

use interview_assess::corpus::{Source, Transcript, Utterance, Word};
use interview_assess::textsim::{Channel, SimilarityMatrix};
use rand::seq::IndexedRandom;
use rand::Rng;

/// Entries in [-0.25, 1]. With `dyadic`, entries are multiples of 1/1024 so
/// every sum is exact.
pub fn matrix(rng: &mut impl Rng, rows: usize, cols: usize, dyadic: bool) -> SimilarityMatrix {
    let rows = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    if dyadic {
                        rng.random_range(-256i32..=1024) as f64 / 1024.0
                    } else {
                        rng.random_range(-0.25..=1.0)
                    }
                })
                .collect()
        })
        .collect();
    SimilarityMatrix::from_rows(Channel::Embedding, rows)
}

/// Similarity-like matrix in [0, 1] for gap instances.
pub fn unit_matrix(rng: &mut impl Rng, rows: usize, cols: usize, channel: Channel) -> SimilarityMatrix {
    let cells = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
    SimilarityMatrix::from_cells(channel, rows, cols, cells)
}

const VOCAB: &[&str] = &[
    "i", "you", "the", "month", "sleep", "work", "yes", "no", "about", "three", "often", "dreams", "maybe", "home",
    "memories", "okay", "really", "past", "felt", "job",
];

pub fn words(rng: &mut impl Rng, n: usize) -> Vec<Word> {
    (0..n).map(|_| Word::new(*VOCAB.choose(rng).expect("vocab"))).collect()
}

/// Splits `words` into turns of 1..=6 words with speakers drawn from
/// `speakers`.
pub fn chunk(rng: &mut impl Rng, id: &str, source: Source, words: Vec<Word>, speakers: &[&str]) -> Transcript {
    let mut utterances = Vec::new();
    let mut rest = words.as_slice();
    while !rest.is_empty() {
        let k = rng.random_range(1..=6).min(rest.len());
        let speaker = speakers.choose(rng).expect("speakers");
        utterances.push(Utterance::from_words(utterances.len(), *speaker, rest[..k].to_vec()));
        rest = &rest[k..];
    }
    Transcript {
        interview_id: id.to_string(),
        source,
        utterances,
    }
}

pub fn transcript(rng: &mut impl Rng, n_words: usize, speakers: &[&str]) -> Transcript {
    let w = words(rng, n_words);
    chunk(rng, "rand", Source::Reference, w, speakers)
}

/// A word sequence with random substitutions, deletions and insertions.
pub fn perturb(rng: &mut impl Rng, words: &[Word], rate: f64) -> Vec<Word> {
    let mut out = Vec::new();
    for w in words {
        let r: f64 = rng.random();
        if r < rate / 3.0 {
            continue;
        } else if r < 2.0 * rate / 3.0 {
            out.push(Word::new(*VOCAB.choose(rng).expect("vocab")));
        } else {
            out.push(w.clone());
            if r < rate {
                out.push(Word::new(*VOCAB.choose(rng).expect("vocab")));
            }
        }
    }
    if out.is_empty() {
        out.push(words[0].clone());
    }
    out
}

/// Renames speakers through `f`.
pub fn relabel(t: &Transcript, f: impl Fn(&str) -> String) -> Transcript {
    let mut t = t.clone();
    for u in &mut t.utterances {
        u.speaker = f(&u.speaker);
    }
    t
}
