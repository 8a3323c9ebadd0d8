//! The constrained bipartite matching used to fill gaps between anchors.
//!
//! A matching assigns questions to utterances with both sides strictly
//! ascending, using only edges whose embedding similarity exceeds the edge
//! threshold. Its value is `y = Σ aᵢ·xᵢ` over nine features:
//!
//! | feature | meaning |
//! |---|---|
//! | x1, x2 | sum of embedding / Levenshtein scores of matched edges |
//! | x3, x4 | the same sums divided by the number of matched questions |
//! | x5 | matched core questions |
//! | x6, x7 | matched questions whose utterance attains that question's best embedding / Levenshtein score among kept edges |
//! | x8, x9 | x6 and x7 restricted to core questions |

use serde::{Deserialize, Serialize};

use crate::textsim::SimilarityMatrix;

pub const DEFAULT_COEFFICIENTS: [f64; 9] = [1.0, 1.0, 1.0, 1.0, 0.1, 0.1, 0.1, 0.2, 0.2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BipartiteSolution {
    /// (utterance row, question column), ascending in both.
    pub pairs: Vec<(usize, usize)>,
    pub y: f64,
    /// False when the node budget ran out and a greedy result was used.
    pub exhaustive: bool,
}

/// Read-only view of a gap: rows are utterances, columns questions.
#[derive(Debug, Clone, Copy)]
pub struct Gap<'a> {
    pub emb: &'a SimilarityMatrix,
    pub lev: &'a SimilarityMatrix,
    pub core: &'a [bool],
    pub edge: f64,
}

impl Gap<'_> {
    fn kept(&self, u: usize, q: usize) -> bool {
        self.emb.get(u, q) > self.edge
    }

    /// Best embedding and Levenshtein score per question over kept edges.
    fn maxima(&self) -> (Vec<Option<f64>>, Vec<Option<f64>>) {
        let mut e = vec![None; self.emb.cols];
        let mut l = vec![None; self.emb.cols];
        for q in 0..self.emb.cols {
            for u in 0..self.emb.rows {
                if self.kept(u, q) {
                    let (ev, lv) = (self.emb.get(u, q), self.lev.get(u, q));
                    e[q] = Some(e[q].map_or(ev, |x: f64| x.max(ev)));
                    l[q] = Some(l[q].map_or(lv, |x: f64| x.max(lv)));
                }
            }
        }
        (e, l)
    }

    /// Feature vector of a matching given as (utterance, question) pairs.
    pub fn features(&self, pairs: &[(usize, usize)]) -> [f64; 9] {
        let (emax, lmax) = self.maxima();
        self.features_with(pairs, &emax, &lmax)
    }

    fn features_with(&self, pairs: &[(usize, usize)], emax: &[Option<f64>], lmax: &[Option<f64>]) -> [f64; 9] {
        let mut x = [0.0; 9];
        for &(u, q) in pairs {
            let (ev, lv) = (self.emb.get(u, q), self.lev.get(u, q));
            x[0] += ev;
            x[1] += lv;
            let core = self.core[q];
            let top_e = emax[q] == Some(ev);
            let top_l = lmax[q] == Some(lv);
            x[4] += f64::from(u8::from(core));
            x[5] += f64::from(u8::from(top_e));
            x[6] += f64::from(u8::from(top_l));
            x[7] += f64::from(u8::from(core && top_e));
            x[8] += f64::from(u8::from(core && top_l));
        }
        if !pairs.is_empty() {
            x[2] = x[0] / pairs.len() as f64;
            x[3] = x[1] / pairs.len() as f64;
        }
        x
    }

    pub fn objective(&self, pairs: &[(usize, usize)], coeffs: &[f64; 9]) -> f64 {
        objective_of(&self.features(pairs), coeffs)
    }
}

pub fn objective_of(x: &[f64; 9], a: &[f64; 9]) -> f64 {
    x.iter().zip(a).fold(0.0, |acc, (x, a)| acc + a * x)
}

/// True when every pair of `pairs` is ordered consistently on both sides.
pub fn is_ascending(pairs: &[(usize, usize)]) -> bool {
    pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1)
}

struct Search<'a> {
    gap: Gap<'a>,
    coeffs: &'a [f64; 9],
    emax: Vec<Option<f64>>,
    lmax: Vec<Option<f64>>,
    global_e: f64,
    global_l: f64,
    prune: bool,
    budget: u64,
    nodes: u64,
    aborted: bool,
    current: Vec<(usize, usize)>,
    best: Vec<(usize, usize)>,
    best_y: f64,
}

impl Search<'_> {
    fn eval(&self, pairs: &[(usize, usize)]) -> f64 {
        objective_of(&self.gap.features_with(pairs, &self.emax, &self.lmax), self.coeffs)
    }

    /// Admissible bound on y for any extension of `current` that only uses
    /// questions ≥ q0 and utterances ≥ u0.
    fn bound(&self, q0: usize, u0: usize) -> f64 {
        let x = self.gap.features_with(&self.current, &self.emax, &self.lmax);
        let mut ub = x;
        for q in q0..self.gap.emb.cols {
            let mut be: Option<f64> = None;
            let mut bl: Option<f64> = None;
            for u in u0..self.gap.emb.rows {
                if self.gap.kept(u, q) {
                    be = Some(be.map_or(self.gap.emb.get(u, q), |b| b.max(self.gap.emb.get(u, q))));
                    bl = Some(bl.map_or(self.gap.lev.get(u, q), |b| b.max(self.gap.lev.get(u, q))));
                }
            }
            if let (Some(be), Some(bl)) = (be, bl) {
                let core = f64::from(u8::from(self.gap.core[q]));
                ub[0] += be.max(0.0);
                ub[1] += bl.max(0.0);
                ub[4] += core;
                ub[5] += 1.0;
                ub[6] += 1.0;
                ub[7] += core;
                ub[8] += core;
            }
        }
        ub[2] = self.global_e.max(x[2]);
        ub[3] = self.global_l.max(x[3]);
        objective_of(&ub, self.coeffs)
    }

    fn dfs(&mut self, q0: usize, u0: usize) {
        if self.prune && self.bound(q0, u0) + 1e-9 < self.best_y {
            return;
        }
        for q in q0..self.gap.emb.cols {
            for u in u0..self.gap.emb.rows {
                if !self.gap.kept(u, q) {
                    continue;
                }
                self.nodes += 1;
                if self.nodes > self.budget {
                    self.aborted = true;
                    return;
                }
                self.current.push((u, q));
                let y = self.eval(&self.current);
                if y > self.best_y {
                    self.best_y = y;
                    self.best = self.current.clone();
                }
                self.dfs(q + 1, u + 1);
                self.current.pop();
                if self.aborted {
                    return;
                }
            }
        }
    }
}

/// Exact branch-and-bound over ascending matchings; after `budget` explored
/// nodes it falls back to a greedy matching by embedding score.
pub fn solve_bipartite(gap: Gap<'_>, coeffs: &[f64; 9], budget: u64) -> BipartiteSolution {
    assert_eq!(gap.emb.rows, gap.lev.rows, "channel shapes differ");
    assert_eq!(gap.emb.cols, gap.lev.cols, "channel shapes differ");
    assert_eq!(gap.emb.cols, gap.core.len(), "core flags do not match questions");
    let (emax, lmax) = gap.maxima();
    let global_e = emax.iter().flatten().copied().fold(0.0, f64::max);
    let global_l = lmax.iter().flatten().copied().fold(0.0, f64::max);
    let mut s = Search {
        gap,
        coeffs,
        emax,
        lmax,
        global_e,
        global_l,
        prune: coeffs.iter().all(|&a| a >= 0.0),
        budget,
        nodes: 0,
        aborted: false,
        current: Vec::new(),
        best: Vec::new(),
        best_y: 0.0,
    };
    s.best_y = s.eval(&[]);
    s.dfs(0, 0);
    if !s.aborted {
        return BipartiteSolution {
            pairs: s.best,
            y: s.best_y,
            exhaustive: true,
        };
    }
    let greedy = greedy_matching(&gap);
    let gy = s.eval(&greedy);
    log::warn!(
        "bipartite search exceeded {budget} nodes on a {}x{} gap; using greedy fallback",
        gap.emb.rows,
        gap.emb.cols
    );
    let (pairs, y) = if gy > s.best_y {
        (greedy, gy)
    } else {
        (s.best, s.best_y)
    };
    BipartiteSolution {
        pairs,
        y,
        exhaustive: false,
    }
}

fn greedy_matching(gap: &Gap<'_>) -> Vec<(usize, usize)> {
    let mut edges: Vec<(usize, usize)> = (0..gap.emb.rows)
        .flat_map(|u| (0..gap.emb.cols).map(move |q| (u, q)))
        .filter(|&(u, q)| gap.kept(u, q))
        .collect();
    edges.sort_by(|a, b| gap.emb.get(b.0, b.1).total_cmp(&gap.emb.get(a.0, a.1)).then(a.cmp(b)));
    let mut chosen: Vec<(usize, usize)> = Vec::new();
    for (u, q) in edges {
        let fits = chosen.iter().all(|&(cu, cq)| (cu < u && cq < q) || (cu > u && cq > q));
        if fits {
            chosen.push((u, q));
        }
    }
    chosen.sort_unstable();
    chosen
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textsim::Channel;

    fn mat(ch: Channel, rows: Vec<Vec<f64>>) -> SimilarityMatrix {
        SimilarityMatrix::from_rows(ch, rows)
    }

    #[test]
    fn worked_example() {
        let emb = mat(Channel::Embedding, vec![vec![0.9, 0.1], vec![0.5, 0.6]]);
        let lev = mat(Channel::Levenshtein, vec![vec![0.8, 0.2], vec![0.4, 0.5]]);
        let core = [true, false];
        let gap = Gap {
            emb: &emb,
            lev: &lev,
            core: &core,
            edge: 0.4,
        };
        let sol = solve_bipartite(gap, &DEFAULT_COEFFICIENTS, 1 << 20);
        assert_eq!(sol.pairs, vec![(0, 0), (1, 1)]);
        assert!((sol.y - 5.1).abs() < 1e-12);
        assert!(sol.exhaustive);
    }

    #[test]
    fn no_kept_edges_gives_empty_matching() {
        let emb = mat(Channel::Embedding, vec![vec![0.4, 0.1]]);
        let lev = mat(Channel::Levenshtein, vec![vec![0.9, 0.9]]);
        let gap = Gap {
            emb: &emb,
            lev: &lev,
            core: &[true, true],
            edge: 0.4,
        };
        let sol = solve_bipartite(gap, &DEFAULT_COEFFICIENTS, 1 << 20);
        assert!(sol.pairs.is_empty());
        assert_eq!(sol.y, 0.0);
    }

    #[test]
    fn single_forced_edge() {
        let emb = mat(Channel::Embedding, vec![vec![0.7]]);
        let lev = mat(Channel::Levenshtein, vec![vec![0.5]]);
        let gap = Gap {
            emb: &emb,
            lev: &lev,
            core: &[true],
            edge: 0.4,
        };
        let sol = solve_bipartite(gap, &DEFAULT_COEFFICIENTS, 1 << 20);
        assert_eq!(sol.pairs, vec![(0, 0)]);
        let expected = 0.7 + 0.5 + 0.7 + 0.5 + 0.1 * 3.0 + 0.2 * 2.0;
        assert!((sol.y - expected).abs() < 1e-12);
    }

    #[test]
    fn tiny_budget_falls_back_to_greedy() {
        let emb = mat(Channel::Embedding, vec![vec![0.9, 0.8], vec![0.8, 0.9]]);
        let lev = emb.clone();
        let gap = Gap {
            emb: &emb,
            lev: &lev,
            core: &[false, false],
            edge: 0.4,
        };
        let sol = solve_bipartite(gap, &DEFAULT_COEFFICIENTS, 1);
        assert!(!sol.exhaustive);
        assert!(is_ascending(&sol.pairs));
    }
}
