//! Section and session segmentation.
//!
//! 1. Each section's core questions are aligned against the transcript on
//!    both similarity channels ([`section_match`]); a section is present when
//!    its column maxima pass the gate.
//! 2. Utterances claimed by two sections go to the section with more strong
//!    matches ([`remove_overlap`]).
//! 3. Matches that are strong on both channels become anchors. Optional
//!    follow-ups are matched between anchors, and the remaining gaps are
//!    filled by a constrained bipartite matching ([`bipartite`]).
//! 4. Each matched question's session runs from its utterance to the next
//!    match, or to the sentinel: the start of the next section, or the last
//!    utterance of the transcript.

pub mod bipartite;
pub mod seqalign;

use std::collections::{BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Transcript, Utterance};
use crate::error::{Error, Result};
use crate::par::{self, ExecMode};
use crate::schema::{Question, QuestionSet};
use crate::textsim::{similarity_matrix_with, Channel, Embedder, SimilarityMatrix};
pub use bipartite::{solve_bipartite, BipartiteSolution, Gap, DEFAULT_COEFFICIENTS};
pub use seqalign::{sequence_alignment, Aligned};

/// Question id carried by the sentinel tuple closing a section.
pub const SENTINEL_QID: &str = "$end";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchTuple {
    pub utterance_id: usize,
    pub question_id: String,
    pub score: f64,
}

impl MatchTuple {
    pub fn new(utterance_id: usize, question_id: impl Into<String>, score: f64) -> MatchTuple {
        MatchTuple {
            utterance_id,
            question_id: question_id.into(),
            score,
        }
    }

    pub fn is_sentinel(&self) -> bool {
        self.question_id == SENTINEL_QID
    }
}

/// Tuples ordered by strictly ascending utterance id.
pub type MatchList = Vec<MatchTuple>;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Session {
    #[serde(rename = "qid")]
    pub question_id: String,
    pub start_utt: usize,
    /// Exclusive.
    pub end_utt: usize,
}

impl Session {
    pub fn new(question_id: impl Into<String>, start_utt: usize, end_utt: usize) -> Session {
        Session {
            question_id: question_id.into(),
            start_utt,
            end_utt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionSegments {
    pub section_id: String,
    pub present: bool,
    pub sessions: Vec<Session>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentedInterview {
    pub interview_id: String,
    pub sections: Vec<SectionSegments>,
}

impl SegmentedInterview {
    pub fn section(&self, section_id: &str) -> Option<&SectionSegments> {
        self.sections.iter().find(|s| s.section_id == section_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentParams {
    /// Column-maxima average must exceed this.
    pub gate_average: f64,
    pub gate_high: f64,
    pub gate_high_count: usize,
    pub gate_very_high: f64,
    pub gate_very_high_count: usize,
    pub anchor_embedding: f64,
    pub anchor_levenshtein: f64,
    pub overlap: f64,
    /// Bipartite edges need embedding similarity above this.
    pub edge: f64,
    pub coefficients: [f64; 9],
    pub search_budget: u64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            gate_average: 0.6,
            gate_high: 0.8,
            gate_high_count: 3,
            gate_very_high: 0.9,
            gate_very_high_count: 2,
            anchor_embedding: 0.8,
            anchor_levenshtein: 0.7,
            overlap: 0.6,
            edge: 0.4,
            coefficients: DEFAULT_COEFFICIENTS,
            search_budget: 1 << 20,
        }
    }
}

impl SegmentParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("gate_average", self.gate_average),
            ("gate_high", self.gate_high),
            ("gate_very_high", self.gate_very_high),
            ("anchor_embedding", self.anchor_embedding),
            ("anchor_levenshtein", self.anchor_levenshtein),
            ("overlap", self.overlap),
            ("edge", self.edge),
        ];
        for (name, v) in named {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("segmentation.{name} = {v} is outside [0, 1]")));
            }
        }
        if self.search_budget == 0 {
            return Err(Error::Config("segmentation.search_budget must be positive".into()));
        }
        Ok(())
    }

    /// The presence gate over column maxima.
    pub fn gate(&self, maxima: &[f64]) -> bool {
        if maxima.is_empty() {
            return false;
        }
        let avg = maxima.iter().sum::<f64>() / maxima.len() as f64;
        avg > self.gate_average
            && (select(maxima, self.gate_high).len() >= self.gate_high_count
                || select(maxima, self.gate_very_high).len() >= self.gate_very_high_count)
    }
}

/// Scores strictly greater than `s`, in order.
pub fn select(t: &[f64], s: f64) -> Vec<f64> {
    t.iter().copied().filter(|&x| x > s).collect()
}

fn select_tuples(r: &[MatchTuple], s: f64) -> Vec<MatchTuple> {
    r.iter().filter(|t| t.score > s).cloned().collect()
}

/// Gated alignment on a precomputed utterance × core-question matrix.
pub fn section_match_matrix(s: &SimilarityMatrix, qids: &[String], params: &SegmentParams) -> MatchList {
    assert_eq!(s.cols, qids.len(), "one question id per column");
    if !params.gate(&s.column_maxima()) {
        return Vec::new();
    }
    sequence_alignment(s)
        .into_iter()
        .map(|a| MatchTuple::new(a.utt, qids[a.col].clone(), a.score))
        .collect()
}

pub fn section_match(
    utterances: &[Utterance],
    core: &[&Question],
    channel: Channel,
    embedder: &Embedder,
    params: &SegmentParams,
) -> Result<MatchList> {
    let texts: Vec<String> = core.iter().map(|q| q.text.clone()).collect();
    let qids: Vec<String> = core.iter().map(|q| q.qid.clone()).collect();
    let s = similarity_matrix_with(ExecMode::Sequential, utterances, &texts, channel, embedder)?;
    Ok(section_match_matrix(&s, &qids, params))
}

/// Resolves utterances claimed by both lists: the list with more tuples
/// scoring above `threshold` on the shared utterances keeps them; on a tie
/// the first list gives them up.
pub fn remove_overlap(r1: &[MatchTuple], r2: &[MatchTuple], threshold: f64) -> (MatchList, MatchList) {
    let ids1: HashSet<usize> = r1.iter().map(|t| t.utterance_id).collect();
    let ids2: HashSet<usize> = r2.iter().map(|t| t.utterance_id).collect();
    let shared1: Vec<MatchTuple> = r1.iter().filter(|t| ids2.contains(&t.utterance_id)).cloned().collect();
    let shared2: Vec<MatchTuple> = r2.iter().filter(|t| ids1.contains(&t.utterance_id)).cloned().collect();
    if shared1.is_empty() {
        return (r1.to_vec(), r2.to_vec());
    }
    let c1 = select_tuples(&shared1, threshold).len();
    let c2 = select_tuples(&shared2, threshold).len();
    if c1 > c2 {
        let r2 = r2.iter().filter(|t| !ids1.contains(&t.utterance_id)).cloned().collect();
        (r1.to_vec(), r2)
    } else {
        let r1 = r1.iter().filter(|t| !ids2.contains(&t.utterance_id)).cloned().collect();
        (r1, r2.to_vec())
    }
}

/// (utterance, question) pairs of `a` that also occur in `b`, scored from `a`.
fn intersect_pairs(a: &[MatchTuple], b: &[MatchTuple]) -> MatchList {
    let keys: HashSet<(usize, &str)> = b.iter().map(|t| (t.utterance_id, t.question_id.as_str())).collect();
    a.iter()
        .filter(|t| keys.contains(&(t.utterance_id, t.question_id.as_str())))
        .cloned()
        .collect()
}

/// Per-section similarity data shared by all stages.
struct SectionData {
    section_id: String,
    qids: Vec<String>,
    core: Vec<bool>,
    recurrent: Vec<bool>,
    /// Index of each question's parent within the section.
    parent: Vec<Option<usize>>,
    emb: SimilarityMatrix,
    lev: SimilarityMatrix,
    re: MatchList,
    rl: MatchList,
}

impl SectionData {
    fn build(
        mode: ExecMode,
        utterances: &[Utterance],
        set: &QuestionSet,
        embedder: &Embedder,
        params: &SegmentParams,
    ) -> Result<SectionData> {
        let texts: Vec<String> = set.questions.iter().map(|q| q.text.clone()).collect();
        let qids: Vec<String> = set.questions.iter().map(|q| q.qid.clone()).collect();
        let emb = similarity_matrix_with(mode, utterances, &texts, Channel::Embedding, embedder)?;
        let lev = similarity_matrix_with(mode, utterances, &texts, Channel::Levenshtein, embedder)?;
        let core: Vec<bool> = set.questions.iter().map(|q| q.core).collect();
        let core_cols: Vec<usize> = (0..core.len()).filter(|&j| core[j]).collect();
        let rows: Vec<usize> = (0..utterances.len()).collect();
        let core_qids: Vec<String> = core_cols.iter().map(|&j| qids[j].clone()).collect();
        let re = section_match_matrix(&emb.select(&rows, &core_cols), &core_qids, params);
        let rl = section_match_matrix(&lev.select(&rows, &core_cols), &core_qids, params);
        let parent = set
            .questions
            .iter()
            .map(|q| q.parent.as_ref().and_then(|p| qids.iter().position(|x| x == p)))
            .collect();
        Ok(SectionData {
            section_id: set.section_id.clone(),
            recurrent: set.questions.iter().map(|q| q.recurrent).collect(),
            qids,
            core,
            parent,
            emb,
            lev,
            re,
            rl,
        })
    }

    fn col(&self, qid: &str) -> usize {
        self.qids.iter().position(|q| q == qid).expect("qid from this section")
    }

    fn gate_passed(&self) -> bool {
        !self.re.is_empty() || !self.rl.is_empty()
    }

    /// True when `q`'s parent chain reaches `ancestor`.
    fn descends_from(&self, q: usize, ancestor: usize) -> bool {
        let mut cur = self.parent[q];
        for _ in 0..self.qids.len() {
            match cur {
                Some(p) if p == ancestor => return true,
                Some(p) => cur = self.parent[p],
                None => return false,
            }
        }
        false
    }
}

/// Holds everything computed once per interview.
struct Prepared {
    n: usize,
    sections: Vec<SectionData>,
    /// Anchors (C without the sentinel) per section; `None` when absent.
    anchors: Vec<Option<MatchList>>,
}

impl Prepared {
    fn new(
        mode: ExecMode,
        utterances: &[Utterance],
        sets: &[QuestionSet],
        embedder: &Embedder,
        params: &SegmentParams,
    ) -> Result<Prepared> {
        if utterances.is_empty() {
            return Err(Error::EmptyInput("transcript has no utterances".into()));
        }
        let sections = par::try_map(mode, sets, |set| {
            SectionData::build(ExecMode::Sequential, utterances, set, embedder, params)
        })?;
        let anchors = (0..sections.len()).map(|k| anchors_for(&sections, k, params)).collect();
        Ok(Prepared {
            n: utterances.len(),
            sections,
            anchors,
        })
    }

    /// First utterance of the section that follows section k, or the last
    /// utterance of the transcript.
    fn sentinel(&self, k: usize) -> usize {
        let own = self.anchors[k].as_deref().unwrap_or_default();
        let last = own.last().map_or(0, |t| t.utterance_id);
        let next = self
            .anchors
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != k)
            .filter_map(|(_, a)| a.as_ref()?.first().map(|t| t.utterance_id))
            .filter(|&u| u > last)
            .min();
        next.unwrap_or(self.n - 1).max(last + 1)
    }

    /// Utterance after the latest anchor of any other section that precedes
    /// section k's first anchor.
    fn region_start(&self, k: usize) -> usize {
        let first = self.anchors[k]
            .as_deref()
            .and_then(|a| a.first())
            .map_or(0, |t| t.utterance_id);
        self.anchors
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != k)
            .filter_map(|(_, a)| a.as_ref())
            .flat_map(|a| a.iter().map(|t| t.utterance_id))
            .filter(|&u| u < first)
            .max()
            .map_or(0, |u| u + 1)
    }
}

fn anchors_for(sections: &[SectionData], k: usize, params: &SegmentParams) -> Option<MatchList> {
    let me = &sections[k];
    if !me.gate_passed() {
        return None;
    }
    let mut ce = me.re.clone();
    let mut cl = me.rl.clone();
    for (m, other) in sections.iter().enumerate() {
        if m == k {
            continue;
        }
        // the earlier section in schema order always plays R1
        if m > k {
            ce = remove_overlap(&ce, &other.re, params.overlap).0;
            cl = remove_overlap(&cl, &other.rl, params.overlap).0;
        } else {
            ce = remove_overlap(&other.re, &ce, params.overlap).1;
            cl = remove_overlap(&other.rl, &cl, params.overlap).1;
        }
    }
    let se = select_tuples(&ce, params.anchor_embedding);
    let sl = select_tuples(&cl, params.anchor_levenshtein);
    let mut c = intersect_pairs(&se, &sl);
    if c.is_empty() {
        // one channel failed the gate or nothing agreed; use whichever
        // channel produced strong matches
        c = if se.is_empty() { sl } else { se };
    }
    if c.is_empty() {
        None
    } else {
        Some(c)
    }
}

fn session_match_prepared(prep: &Prepared, k: usize, params: &SegmentParams) -> Result<MatchList> {
    let sec = &prep.sections[k];
    let Some(anchors) = prep.anchors[k].clone() else {
        return Err(Error::SectionAbsent(sec.section_id.clone()));
    };
    let sentinel = prep.sentinel(k);
    let nq = sec.qids.len();
    let mut matched: BTreeSet<usize> = anchors.iter().map(|t| sec.col(&t.question_id)).collect();

    // optional follow-ups between consecutive anchors
    let mut bounds: Vec<usize> = anchors.iter().map(|t| t.utterance_id).collect();
    bounds.push(sentinel);
    let mut optional = Vec::new();
    for (i, anchor) in anchors.iter().enumerate() {
        let rows: Vec<usize> = (anchor.utterance_id + 1..bounds[i + 1]).collect();
        let parent = sec.col(&anchor.question_id);
        let cols: Vec<usize> = (0..nq)
            .filter(|&q| !sec.core[q] && sec.descends_from(q, parent))
            .filter(|&q| sec.recurrent[q] || !matched.contains(&q))
            .collect();
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let ae = sequence_alignment(&sec.emb.select(&rows, &cols));
        let al = sequence_alignment(&sec.lev.select(&rows, &cols));
        let to_tuples = |v: Vec<Aligned>, s: f64| -> MatchList {
            v.into_iter()
                .filter(|a| a.score > s)
                .map(|a| MatchTuple::new(rows[a.utt], sec.qids[cols[a.col]].clone(), a.score))
                .collect()
        };
        let both = intersect_pairs(
            &to_tuples(ae, params.anchor_embedding),
            &to_tuples(al, params.anchor_levenshtein),
        );
        for t in both {
            matched.insert(sec.col(&t.question_id));
            optional.push(t);
        }
    }

    let mut v: MatchList = anchors.into_iter().chain(optional).collect();
    v.sort_by_key(|t| t.utterance_id);

    // fill each gap of V, including the stretch before the first anchor
    let mut filled = Vec::new();
    let mut edges: Vec<(usize, Option<usize>)> = Vec::with_capacity(v.len() + 2);
    edges.push((prep.region_start(k), None));
    edges.extend(v.iter().map(|t| (t.utterance_id, Some(sec.col(&t.question_id)))));
    edges.push((sentinel, None));
    for w in 0..edges.len() - 1 {
        let (lo_u, lo_q) = edges[w];
        let (hi_u, hi_q) = edges[w + 1];
        let first_row = if w == 0 { lo_u } else { lo_u + 1 };
        let rows: Vec<usize> = (first_row..hi_u).collect();
        let cols: Vec<usize> = (0..nq)
            .filter(|&q| lo_q.is_none_or(|l| q > l) && hi_q.is_none_or(|h| q < h))
            .filter(|&q| sec.recurrent[q] || !matched.contains(&q))
            .collect();
        if rows.is_empty() || cols.is_empty() {
            continue;
        }
        let emb = sec.emb.select(&rows, &cols);
        let lev = sec.lev.select(&rows, &cols);
        let core: Vec<bool> = cols.iter().map(|&q| sec.core[q]).collect();
        let gap = Gap {
            emb: &emb,
            lev: &lev,
            core: &core,
            edge: params.edge,
        };
        let sol = solve_bipartite(gap, &params.coefficients, params.search_budget);
        for (u, q) in sol.pairs {
            matched.insert(cols[q]);
            filled.push(MatchTuple::new(rows[u], sec.qids[cols[q]].clone(), emb.get(u, q)));
        }
    }

    let mut out: MatchList = v.into_iter().chain(filled).collect();
    out.sort_by_key(|t| t.utterance_id);
    out.push(MatchTuple::new(sentinel, SENTINEL_QID, 0.0));
    Ok(out)
}

/// Runs the full session matching for one section. Similarity matrices for
/// every section are computed because overlap removal and the sentinel
/// depend on the other sections.
pub fn session_match(
    utterances: &[Utterance],
    sections: &[QuestionSet],
    k: usize,
    embedder: &Embedder,
    params: &SegmentParams,
) -> Result<MatchList> {
    let prep = Prepared::new(ExecMode::default(), utterances, sections, embedder, params)?;
    session_match_prepared(&prep, k, params)
}

/// Turns a session match list (ending with the sentinel) into sessions.
pub fn sessions_from_matches(list: &[MatchTuple]) -> Vec<Session> {
    list.windows(2)
        .filter(|w| !w[0].is_sentinel())
        .map(|w| Session::new(w[0].question_id.clone(), w[0].utterance_id, w[1].utterance_id))
        .collect()
}

pub fn segment_interview(
    transcript: &Transcript,
    sections: &[QuestionSet],
    embedder: &Embedder,
    params: &SegmentParams,
) -> Result<SegmentedInterview> {
    segment_interview_with(ExecMode::default(), transcript, sections, embedder, params)
}

pub fn segment_interview_with(
    mode: ExecMode,
    transcript: &Transcript,
    sections: &[QuestionSet],
    embedder: &Embedder,
    params: &SegmentParams,
) -> Result<SegmentedInterview> {
    if sections.is_empty() {
        return Err(Error::schema("schema declares no sections"));
    }
    let prep = Prepared::new(mode, &transcript.utterances, sections, embedder, params)?;
    let idx: Vec<usize> = (0..sections.len()).collect();
    let lists = par::map(mode, &idx, |&k| session_match_prepared(&prep, k, params));
    let mut out = Vec::with_capacity(sections.len());
    for (k, res) in lists.into_iter().enumerate() {
        let section_id = sections[k].section_id.clone();
        match res {
            Ok(list) => out.push(SectionSegments {
                section_id,
                present: true,
                sessions: sessions_from_matches(&list),
            }),
            Err(Error::SectionAbsent(_)) => out.push(SectionSegments {
                section_id,
                present: false,
                sessions: Vec::new(),
            }),
            Err(e) => return Err(e),
        }
    }
    clip_section_tails(&mut out);
    Ok(SegmentedInterview {
        interview_id: transcript.interview_id.clone(),
        sections: out,
    })
}

/// A section's last session may run past questions that gap filling placed
/// into the following section; end it where that section now starts.
fn clip_section_tails(sections: &mut [SectionSegments]) {
    let starts: Vec<Option<usize>> = sections
        .iter()
        .map(|s| s.sessions.first().map(|x| x.start_utt))
        .collect();
    for (k, sec) in sections.iter_mut().enumerate() {
        let Some(last) = sec.sessions.last_mut() else {
            continue;
        };
        let next = starts
            .iter()
            .enumerate()
            .filter(|&(m, _)| m != k)
            .filter_map(|(_, s)| *s)
            .filter(|&s| s > last.start_utt)
            .min();
        if let Some(next) = next {
            last.end_utt = last.end_utt.min(next);
        }
    }
}
