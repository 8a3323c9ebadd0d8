mod support;

use interview_assess::segment::seqalign::total_score;
use interview_assess::segment::sequence_alignment;
use interview_assess::textsim::{Channel, SimilarityMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{gen, oracles};

#[test]
fn dp_matches_brute_force_on_exact_values() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5A);
    for case in 0..500 {
        let (r, c) = (rng.random_range(0..=10), rng.random_range(0..=5));
        let s = gen::matrix(&mut rng, r, c, true);
        let dp = total_score(&sequence_alignment(&s));
        assert_eq!(dp, oracles::brute_alignment(&s), "case {case}");
    }
}

#[test]
fn dp_matches_brute_force_on_reals() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5B);
    for case in 0..200 {
        let (r, c) = (rng.random_range(0..=10), rng.random_range(0..=5));
        let s = gen::matrix(&mut rng, r, c, false);
        let dp = total_score(&sequence_alignment(&s));
        let brute = oracles::brute_alignment(&s);
        assert!((dp - brute).abs() <= 1e-12, "case {case}: {dp} vs {brute}");
    }
}

#[test]
fn hand_traced_fixture() {
    // rows are utterances; the diagonal 0.9 + 0.8 beats 0.95 alone
    let s = SimilarityMatrix::from_rows(
        Channel::Embedding,
        vec![vec![0.9, 0.95], vec![0.1, 0.8], vec![0.2, 0.1]],
    );
    let a = sequence_alignment(&s);
    assert_eq!(
        a.iter().map(|x| (x.utt, x.col)).collect::<Vec<_>>(),
        vec![(0, 0), (1, 1)]
    );
    assert!((total_score(&a) - 1.7).abs() < 1e-12);
}

proptest! {
    #[test]
    fn alignment_is_strictly_monotone(seed in any::<u64>(), rows in 0usize..12, cols in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = gen::matrix(&mut rng, rows, cols, false);
        let a = sequence_alignment(&s);
        for w in a.windows(2) {
            prop_assert!(w[0].utt < w[1].utt && w[0].col < w[1].col);
        }
        for x in &a {
            prop_assert_eq!(x.score, s.get(x.utt, x.col));
        }
    }
}
