//! Max-weight strictly monotone assignment of questions to utterances.

use crate::textsim::SimilarityMatrix;

/// One assigned cell of a similarity matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aligned {
    pub utt: usize,
    pub col: usize,
    pub score: f64,
}

/// Assigns each question (column) at most one utterance (row) so that
/// utterance indices strictly increase with question order and the total
/// similarity is maximal. Questions that cannot be placed are left out.
pub fn sequence_alignment(s: &SimilarityMatrix) -> Vec<Aligned> {
    let (n, m) = (s.rows, s.cols);
    if n == 0 || m == 0 {
        return Vec::new();
    }
    let w = m + 1;
    // f[i*w + j]: best total over utterances i.. and questions j..
    let mut f = vec![0.0f64; (n + 1) * w];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            let take = s.get(i, j) + f[(i + 1) * w + j + 1];
            let skip_u = f[(i + 1) * w + j];
            let skip_q = f[i * w + j + 1];
            f[i * w + j] = take.max(skip_u).max(skip_q);
        }
    }
    let mut out = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n && j < m {
        let here = f[i * w + j];
        if s.get(i, j) + f[(i + 1) * w + j + 1] == here {
            out.push(Aligned {
                utt: i,
                col: j,
                score: s.get(i, j),
            });
            i += 1;
            j += 1;
        } else if f[(i + 1) * w + j] == here {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// Sum of scores in question order.
pub fn total_score(aligned: &[Aligned]) -> f64 {
    aligned.iter().fold(0.0, |acc, a| acc + a.score)
}
