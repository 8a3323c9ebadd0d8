mod support;

use interview_assess::segment::bipartite::is_ascending;
use interview_assess::segment::{solve_bipartite, Gap, DEFAULT_COEFFICIENTS};
use interview_assess::textsim::{Channel, SimilarityMatrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{gen, oracles};

fn instance(rng: &mut impl Rng) -> (SimilarityMatrix, SimilarityMatrix, Vec<bool>) {
    let u = rng.random_range(0..=8);
    let q = rng.random_range(0..=4);
    let emb = gen::unit_matrix(rng, u, q, Channel::Embedding);
    let lev = gen::unit_matrix(rng, u, q, Channel::Levenshtein);
    let core = (0..q).map(|_| rng.random_bool(0.5)).collect();
    (emb, lev, core)
}

#[test]
fn solver_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB1);
    for case in 0..500 {
        let (emb, lev, core) = instance(&mut rng);
        let gap = Gap {
            emb: &emb,
            lev: &lev,
            core: &core,
            edge: 0.4,
        };
        let sol = solve_bipartite(gap, &DEFAULT_COEFFICIENTS, 1 << 20);
        let (y, _) = oracles::exhaustive_bipartite(&gap, &DEFAULT_COEFFICIENTS);
        assert!(sol.exhaustive, "case {case} ran out of budget");
        assert_eq!(
            sol.y.to_bits(),
            y.to_bits(),
            "case {case}: solver {} vs oracle {y}",
            sol.y
        );
        assert_eq!(
            gap.objective(&sol.pairs, &DEFAULT_COEFFICIENTS).to_bits(),
            sol.y.to_bits()
        );
    }
}

#[test]
fn random_coefficients_also_match() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB2);
    for _ in 0..100 {
        let (emb, lev, core) = instance(&mut rng);
        let mut a = [0.0; 9];
        a.iter_mut().for_each(|x| *x = rng.random_range(0.0..2.0));
        let gap = Gap {
            emb: &emb,
            lev: &lev,
            core: &core,
            edge: 0.4,
        };
        let sol = solve_bipartite(gap, &a, 1 << 20);
        assert_eq!(sol.y, oracles::exhaustive_bipartite(&gap, &a).0);
    }
}

#[test]
fn default_coefficients_and_edge_rule() {
    // a = (1, 1, 1, 1, 0.1, 0.1, 0.1, 0.2, 0.2)
    assert_eq!(DEFAULT_COEFFICIENTS, [1.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 0.2, 0.2]);
    // an edge at exactly 0.4 is dropped
    let emb = SimilarityMatrix::from_rows(Channel::Embedding, vec![vec![0.4]]);
    let lev = SimilarityMatrix::from_rows(Channel::Levenshtein, vec![vec![0.9]]);
    let gap = Gap {
        emb: &emb,
        lev: &lev,
        core: &[true],
        edge: 0.4,
    };
    assert!(solve_bipartite(gap, &DEFAULT_COEFFICIENTS, 1000).pairs.is_empty());
}

proptest! {
    #[test]
    fn solutions_are_feasible(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (emb, lev, core) = instance(&mut rng);
        let gap = Gap { emb: &emb, lev: &lev, core: &core, edge: 0.4 };
        let sol = solve_bipartite(gap, &DEFAULT_COEFFICIENTS, 1 << 20);
        prop_assert!(is_ascending(&sol.pairs));
        for &(u, q) in &sol.pairs {
            prop_assert!(emb.get(u, q) > 0.4);
        }
        prop_assert!(sol.y >= 0.0);
    }

    #[test]
    fn budget_exhaustion_still_feasible(seed in any::<u64>(), budget in 1u64..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (emb, lev, core) = instance(&mut rng);
        let gap = Gap { emb: &emb, lev: &lev, core: &core, edge: 0.4 };
        let sol = solve_bipartite(gap, &DEFAULT_COEFFICIENTS, budget);
        prop_assert!(is_ascending(&sol.pairs));
        prop_assert_eq!(gap.objective(&sol.pairs, &DEFAULT_COEFFICIENTS), sol.y);
        let best = oracles::exhaustive_bipartite(&gap, &DEFAULT_COEFFICIENTS).0;
        prop_assert!(sol.y <= best);
    }
}
