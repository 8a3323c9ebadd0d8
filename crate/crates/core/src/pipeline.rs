//! End-to-end batch run over a corpus: optional transcript merge, then
//! segmentation, assessment and evaluation for every interview.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::align::{merge_transcripts, tder, wer};
use crate::assess::{assess_interview, AssessSettings, InterviewReport, Prediction, SlotComparison};
use crate::corpus::{GoldAssessment, Transcript, Word};
use crate::error::{Error, Result};
use crate::llm::LlmClient;
use crate::metrics::{boundary_f1, evaluate_run, EvalReport, MetricOptions};
use crate::par;
use crate::schema::Schema;
use crate::segment::SegmentedInterview;
use crate::textsim::Embedder;

/// One interview to process. With `diarized` present the two transcripts
/// are merged first and `transcript` also serves as the quality reference.
#[derive(Debug, Clone)]
pub struct RunItem {
    pub transcript: Transcript,
    pub diarized: Option<Transcript>,
    pub truth: Option<SegmentedInterview>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptQuality {
    pub wer_diarized: f64,
    pub tder_diarized: f64,
    pub tder_merged: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewSummary {
    pub interview_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quality: Option<TranscriptQuality>,
    /// Only scored when segmentation ran on the transcript the truth indexes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boundary_f1: Option<f64>,
    pub report: InterviewReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub interviews: Vec<InterviewSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation: Option<EvalReport>,
}

impl RunReport {
    pub fn predictions(&self) -> impl Iterator<Item = &Prediction> {
        self.interviews.iter().flat_map(|i| &i.report.predictions)
    }

    pub fn slot_comparisons(&self) -> impl Iterator<Item = &SlotComparison> {
        self.interviews.iter().flat_map(|i| &i.report.slot_comparisons)
    }
}

fn words(t: &Transcript) -> Vec<Word> {
    t.word_stream().into_iter().map(|(_, w)| w.clone()).collect()
}

fn quality(reference: &Transcript, diarized: &Transcript, merged: &Transcript) -> Result<TranscriptQuality> {
    Ok(TranscriptQuality {
        wer_diarized: wer(&words(reference), &words(diarized))?,
        tder_diarized: tder(reference, diarized)?,
        tder_merged: tder(reference, merged)?,
    })
}

fn run_one(
    item: &RunItem,
    schema: &Schema,
    gold: Option<&GoldAssessment>,
    embedder: &Embedder,
    client: &LlmClient,
    settings: &AssessSettings,
) -> Result<InterviewSummary> {
    let (input, q) = match &item.diarized {
        Some(d) => {
            let merged = merge_transcripts(d, &item.transcript)?;
            let q = quality(&item.transcript, d, &merged)?;
            (merged, Some(q))
        }
        None => (item.transcript.clone(), None),
    };
    let report = assess_interview(&input, schema, gold, embedder, client, settings)?;
    let f1 = match (&item.truth, &item.diarized) {
        (Some(t), None) => Some(boundary_f1(&report.segmentation, t)),
        _ => None,
    };
    Ok(InterviewSummary {
        interview_id: item.transcript.interview_id.clone(),
        quality: q,
        boundary_f1: f1,
        report,
    })
}

/// Processes every interview (in parallel when `settings.mode` allows) and
/// evaluates against gold when any is supplied. Output is ordered by
/// interview id whatever the execution order.
pub fn run_corpus(
    items: &[RunItem],
    schema: &Schema,
    gold: &[GoldAssessment],
    embedder: &Embedder,
    client: &LlmClient,
    settings: &AssessSettings,
    metric_options: &MetricOptions,
) -> Result<RunReport> {
    let gold_by: BTreeMap<&str, &GoldAssessment> = gold.iter().map(|g| (g.interview_id.as_str(), g)).collect();
    let mut seen = std::collections::BTreeSet::new();
    for it in items {
        if !seen.insert(it.transcript.interview_id.as_str()) {
            return Err(Error::schema(format!(
                "duplicate interview {}",
                it.transcript.interview_id
            )));
        }
    }
    let mut interviews = par::try_map(settings.mode, items, |it| {
        let g = gold_by.get(it.transcript.interview_id.as_str()).copied();
        run_one(it, schema, g, embedder, client, settings)
    })?;
    interviews.sort_by(|a, b| a.interview_id.cmp(&b.interview_id));

    let evaluation = if gold.is_empty() {
        None
    } else {
        let preds: Vec<Prediction> = interviews.iter().flat_map(|i| i.report.predictions.clone()).collect();
        let comps: Vec<SlotComparison> = interviews
            .iter()
            .flat_map(|i| i.report.slot_comparisons.clone())
            .collect();
        Some(evaluate_run(&preds, &comps, gold, schema, metric_options)?)
    };
    Ok(RunReport { interviews, evaluation })
}
