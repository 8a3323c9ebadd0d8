//! Merging a speaker-diarized transcript with a verbatim one, plus WER and
//! text-based diarization error rate.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Source, Transcript, Utterance, Word};
use crate::error::{Error, Result};
use crate::textsim::{edit_distance, normalize};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordAlignment {
    /// (diarized index, verbatim index), strictly increasing in both.
    pub pairs: Vec<(usize, usize)>,
    pub unmatched_diarized: Vec<usize>,
    pub unmatched_verbatim: Vec<usize>,
}

/// Interns normalized word forms; forms that normalize to nothing never
/// match anything.
fn intern(a: &[Word], b: &[Word]) -> (Vec<Option<u32>>, Vec<Option<u32>>) {
    let mut ids: HashMap<String, u32> = HashMap::new();
    let mut go = |ws: &[Word]| -> Vec<Option<u32>> {
        ws.iter()
            .map(|w| {
                let n = normalize(&w.text);
                if n.is_empty() {
                    return None;
                }
                let next = ids.len() as u32;
                Some(*ids.entry(n).or_insert(next))
            })
            .collect()
    };
    let x = go(a);
    let y = go(b);
    (x, y)
}

/// Maximum-cardinality monotone alignment of equal normalized words. Among
/// optimal alignments the one whose verbatim indices are lexicographically
/// smallest is returned.
pub fn align_words(diarized: &[Word], verbatim: &[Word]) -> WordAlignment {
    let (a, b) = intern(diarized, verbatim);
    let pairs = lcs_pairs(&a, &b);
    debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
    let da: BTreeSet<usize> = pairs.iter().map(|p| p.0).collect();
    let vb: BTreeSet<usize> = pairs.iter().map(|p| p.1).collect();
    WordAlignment {
        unmatched_diarized: (0..a.len()).filter(|i| !da.contains(i)).collect(),
        unmatched_verbatim: (0..b.len()).filter(|j| !vb.contains(j)).collect(),
        pairs,
    }
}

fn lcs_pairs(a: &[Option<u32>], b: &[Option<u32>]) -> Vec<(usize, usize)> {
    let (n, m) = (a.len(), b.len());
    let w = m + 1;
    // suffix table: l[i*w + j] = LCS(a[i..], b[j..])
    let mut l = vec![0u32; (n + 1) * w];
    let eq = |i: usize, j: usize| a[i].is_some() && a[i] == b[j];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            l[i * w + j] = if eq(i, j) {
                l[(i + 1) * w + j + 1] + 1
            } else {
                l[(i + 1) * w + j].max(l[i * w + j + 1])
            };
        }
    }
    let mut pairs = Vec::with_capacity(l[0] as usize);
    let (mut i, mut j) = (0, 0);
    while l[i * w + j] > 0 {
        let k = l[i * w + j];
        let mut found = None;
        'scan: for jj in j..m {
            if l[i * w + jj] < k {
                break;
            }
            for ii in i..n {
                let rest = l[(ii + 1) * w + jj + 1];
                if rest + 1 < k {
                    break;
                }
                if eq(ii, jj) && rest + 1 == k {
                    found = Some((ii, jj));
                    break 'scan;
                }
            }
        }
        let (ii, jj) = found.expect("suffix table guarantees a continuation");
        pairs.push((ii, jj));
        i = ii + 1;
        j = jj + 1;
    }
    pairs
}

/// Re-attributes verbatim words to diarized speaker turns.
///
/// Each diarized utterance is anchored at its first and last aligned words;
/// the turn spans every verbatim word in between. Verbatim words outside all
/// turns join the preceding turn (leading ones join the first), except that
/// when timestamps are available a word joins whichever neighbouring turn is
/// closer in time.
pub fn merge_transcripts(diarized: &Transcript, verbatim: &Transcript) -> Result<Transcript> {
    let dwords: Vec<(usize, &Word)> = diarized.word_stream();
    let vwords: Vec<&Word> = verbatim.word_stream().into_iter().map(|(_, w)| w).collect();
    let dlist: Vec<Word> = dwords.iter().map(|(_, w)| (*w).clone()).collect();
    let vlist: Vec<Word> = vwords.iter().map(|w| (*w).clone()).collect();
    let alignment = align_words(&dlist, &vlist);

    // (utterance index, first verbatim index, last verbatim index)
    let mut turns: Vec<(usize, usize, usize)> = Vec::new();
    for &(di, vi) in &alignment.pairs {
        let utt = dwords[di].0;
        match turns.last_mut() {
            Some(t) if t.0 == utt => t.2 = vi,
            _ => turns.push((utt, vi, vi)),
        }
    }
    if turns.is_empty() {
        return Err(Error::Alignment(format!(
            "no diarized utterance of {} could be anchored in the verbatim stream",
            diarized.interview_id
        )));
    }
    for (u, _) in diarized.utterances.iter().enumerate() {
        if !turns.iter().any(|t| t.0 == u) {
            log::debug!("utterance {u} has no aligned words; dropped from merge");
        }
    }

    let mut bounds: Vec<(usize, usize)> = turns.iter().map(|t| (t.1, t.2)).collect();
    bounds[0].0 = 0;
    let last = bounds.len() - 1;
    bounds[last].1 = vlist.len() - 1;
    for k in 0..last {
        let gap_start = bounds[k].1 + 1;
        let gap_end = bounds[k + 1].0; // exclusive
        let split = split_gap(&vlist, bounds[k].1, gap_start..gap_end, bounds[k + 1].0);
        bounds[k].1 = split - 1;
        bounds[k + 1].0 = split;
    }

    let utterances = turns
        .iter()
        .zip(&bounds)
        .enumerate()
        .map(|(id, (t, &(lo, hi)))| {
            Utterance::from_words(id, diarized.utterances[t.0].speaker.clone(), vlist[lo..=hi].to_vec())
        })
        .collect();
    Ok(Transcript {
        interview_id: diarized.interview_id.clone(),
        source: Source::Merged,
        utterances,
    })
}

/// Returns the first index of the gap that goes to the following turn.
fn split_gap(words: &[Word], prev_last: usize, gap: std::ops::Range<usize>, next_first: usize) -> usize {
    let (Some(prev_end), Some(next_start)) = (words[prev_last].end_ms, words[next_first].start_ms) else {
        return gap.end;
    };
    for i in gap.clone() {
        let (Some(s), Some(e)) = (words[i].start_ms, words[i].end_ms) else {
            return gap.end;
        };
        if s - prev_end > next_start - e {
            return i;
        }
    }
    gap.end
}

fn norm_tokens(words: &[Word]) -> Vec<String> {
    words
        .iter()
        .map(|w| normalize(&w.text))
        .filter(|t| !t.is_empty())
        .collect()
}

/// Word edit distance over normalized forms divided by reference length.
pub fn wer(reference: &[Word], hypothesis: &[Word]) -> Result<f64> {
    let r = norm_tokens(reference);
    if r.is_empty() {
        return Err(Error::EmptyReference);
    }
    let h = norm_tokens(hypothesis);
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Text-based diarization error rate: (mis-attributed + missed + inserted
/// words) / reference words, with hypothesis speaker labels mapped one-to-one
/// onto reference labels so as to minimise the count.
pub fn tder(reference: &Transcript, hypothesis: &Transcript) -> Result<f64> {
    let rs = reference.word_stream();
    let hs = hypothesis.word_stream();
    if rs.is_empty() {
        return Err(Error::EmptyReference);
    }
    let rw: Vec<Word> = rs.iter().map(|(_, w)| (*w).clone()).collect();
    let hw: Vec<Word> = hs.iter().map(|(_, w)| (*w).clone()).collect();
    let al = align_words(&rw, &hw);

    let mut rlabels: Vec<&str> = reference.utterances.iter().map(|u| u.speaker.as_str()).collect();
    let mut hlabels: Vec<&str> = hypothesis.utterances.iter().map(|u| u.speaker.as_str()).collect();
    rlabels.sort_unstable();
    rlabels.dedup();
    hlabels.sort_unstable();
    hlabels.dedup();
    let mut agree = vec![vec![0usize; rlabels.len()]; hlabels.len()];
    for &(ri, hi) in &al.pairs {
        let r = &reference.utterances[rs[ri].0].speaker;
        let h = &hypothesis.utterances[hs[hi].0].speaker;
        let r = rlabels.binary_search(&r.as_str()).expect("label present");
        let h = hlabels.binary_search(&h.as_str()).expect("label present");
        agree[h][r] += 1;
    }
    let best = max_assignment(&agree)?;
    let mis = al.pairs.len() - best;
    let errors = mis + al.unmatched_diarized.len() + al.unmatched_verbatim.len();
    Ok(errors as f64 / rw.len() as f64)
}

/// Maximum total weight of a one-to-one (partial) assignment of rows to
/// columns, by DP over subsets of the smaller side.
fn max_assignment(w: &[Vec<usize>]) -> Result<usize> {
    let rows = w.len();
    let cols = w.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return Ok(0);
    }
    let transpose = cols > rows;
    let (outer, inner) = if transpose { (cols, rows) } else { (rows, cols) };
    if inner > 20 {
        return Err(Error::Alignment(format!(
            "{inner} speaker labels is too many to map exactly"
        )));
    }
    let at = |o: usize, i: usize| if transpose { w[i][o] } else { w[o][i] };
    let mut dp = vec![0usize; 1 << inner];
    for o in 0..outer {
        let prev = dp.clone();
        for (mask, &base) in prev.iter().enumerate() {
            for i in 0..inner {
                if mask & (1 << i) == 0 {
                    let next = mask | (1 << i);
                    dp[next] = dp[next].max(base + at(o, i));
                }
            }
        }
    }
    Ok(dp.into_iter().max().unwrap_or(0))
}
