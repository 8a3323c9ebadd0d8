//! Accuracy, RMSE, bias and slot recall, rolled up by variable type and
//! section; plus boundary F1 for segmentation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::assess::{Prediction, SlotComparison};
use crate::corpus::GoldAssessment;
use crate::error::{Error, Result};
use crate::schema::{group_scale, MeasureUnit, Schema, Value, VarType, VariableSpec};
use crate::segment::{SegmentedInterview, SENTINEL_QID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BiasDenominator {
    /// Every retained pair, so exact matches pull bias toward 0.
    #[default]
    All,
    /// Only pairs with a non-zero residual.
    Nonzero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    #[serde(rename = "bias_denominator")]
    pub bias_denominator: BiasDenominator,
    /// Allowed absolute difference for month-valued measures.
    pub months_tolerance: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            bias_denominator: BiasDenominator::All,
            months_tolerance: 0.0,
        }
    }
}

/// Exact-match rate. `None` predictions (abstentions, errors) are misses.
pub fn accuracy<T: PartialEq>(pairs: &[(Option<T>, T)]) -> Result<f64> {
    accuracy_by(pairs, |p, g| p == g)
}

pub fn accuracy_by<T>(pairs: &[(Option<T>, T)], eq: impl Fn(&T, &T) -> bool) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput("accuracy over no pairs".into()));
    }
    let hits = pairs
        .iter()
        .filter(|(p, g)| p.as_ref().is_some_and(|p| eq(p, g)))
        .count();
    Ok(hits as f64 / pairs.len() as f64)
}

fn retained(pairs: &[(Option<f64>, f64)]) -> Vec<(f64, f64)> {
    pairs.iter().filter_map(|&(p, g)| Some((p?, g))).collect()
}

/// Root mean squared residual over non-abstaining pairs.
pub fn rmse(pairs: &[(Option<f64>, f64)]) -> Result<f64> {
    let r = retained(pairs);
    if r.is_empty() {
        return Err(Error::EmptyInput("rmse over no retained pairs".into()));
    }
    let sq: f64 = r.iter().map(|(p, g)| (p - g) * (p - g)).sum();
    Ok((sq / r.len() as f64).sqrt())
}

/// (#over − #under) / denominator over non-abstaining pairs.
pub fn bias(pairs: &[(Option<f64>, f64)], denominator: BiasDenominator) -> Result<f64> {
    let r = retained(pairs);
    if r.is_empty() {
        return Err(Error::EmptyInput("bias over no retained pairs".into()));
    }
    let over = r.iter().filter(|(p, g)| p > g).count() as f64;
    let under = r.iter().filter(|(p, g)| p < g).count() as f64;
    let denom = match denominator {
        BiasDenominator::All => r.len() as f64,
        BiasDenominator::Nonzero => over + under,
    };
    Ok(if denom == 0.0 { 0.0 } else { (over - under) / denom })
}

/// Pooled recall over slots the gold note covers.
pub fn recall_slots(comparisons: &[SlotComparison]) -> Result<f64> {
    let (mut hit, mut total) = (0usize, 0usize);
    for s in comparisons.iter().flat_map(|c| &c.slots) {
        if s.gold_present == Some(true) {
            total += 1;
            hit += usize::from(s.predicted_present);
        }
    }
    if total == 0 {
        return Err(Error::EmptyInput("no gold-present slots".into()));
    }
    Ok(hit as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Variable type, or `scale_g` for grouped scales.
    pub var_type: String,
    /// Section id, or `all`.
    pub section: String,
    pub count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<MetricRow>,
}

impl EvalReport {
    pub fn row(&self, var_type: &str, section: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.var_type == var_type && r.section == section)
    }

    /// Plain-text table: Type, Section, Count, Accuracy, RMSE, Bias, Recall.
    pub fn render_table(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.3}"));
        let mut out = format!(
            "{:<10} {:<10} {:>6} {:>9} {:>7} {:>7} {:>7}\n",
            "Type", "Section", "Count", "Accuracy", "RMSE", "Bias", "Recall"
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:<10} {:>6} {:>9} {:>7} {:>7} {:>7}",
                r.var_type,
                r.section,
                r.count,
                cell(r.accuracy),
                cell(r.rmse),
                cell(r.bias),
                cell(r.recall)
            );
        }
        out
    }
}

fn values_equal(var: &VariableSpec, p: &Value, g: &Value, opts: &MetricOptions) -> bool {
    match (var.var_type, p.as_f64(), g.as_f64()) {
        (VarType::Measure, Some(p), Some(g)) if var.prompt_fields.unit == MeasureUnit::Months => {
            (p - g).abs() <= opts.months_tolerance
        }
        (_, Some(p), Some(g)) => p == g,
        _ => p == g,
    }
}

#[derive(Default)]
struct Bucket {
    hits: Vec<bool>,
    numeric: Vec<(Option<f64>, f64)>,
}

/// Joins predictions with gold on (interview, variable) and computes the
/// per-type metric set for every section and overall.
pub fn evaluate_run(
    predictions: &[Prediction],
    comparisons: &[SlotComparison],
    gold: &[GoldAssessment],
    schema: &Schema,
    opts: &MetricOptions,
) -> Result<EvalReport> {
    let gold_by: BTreeMap<&str, &GoldAssessment> = gold.iter().map(|g| (g.interview_id.as_str(), g)).collect();
    let interviews: BTreeSet<&str> = predictions
        .iter()
        .map(|p| p.interview_id.as_str())
        .chain(comparisons.iter().map(|c| c.interview_id.as_str()))
        .filter(|i| gold_by.contains_key(i))
        .collect();
    if interviews.is_empty() {
        return Err(Error::EmptyInput("no interview has both predictions and gold".into()));
    }

    // (type label, section) -> bucket
    let mut buckets: BTreeMap<(String, String), Bucket> = BTreeMap::new();
    let mut push = |ty: &str, section: &str, hit: bool, num: Option<(Option<f64>, f64)>| {
        for s in [section, "all"] {
            let b = buckets.entry((ty.to_string(), s.to_string())).or_default();
            b.hits.push(hit);
            if let Some(n) = num {
                b.numeric.push(n);
            }
        }
    };
    for p in predictions {
        let Some(g) = gold_by.get(p.interview_id.as_str()) else {
            continue;
        };
        let var = schema
            .variable(&p.var_id)
            .ok_or_else(|| Error::schema(format!("prediction for unknown variable {}", p.var_id)))?;
        if var.var_type == VarType::Notes {
            continue;
        }
        let Some(gv) = g.values.get(&p.var_id) else {
            continue;
        };
        let pv = p.answer.value();
        let hit = pv.is_some_and(|pv| values_equal(var, pv, gv, opts));
        let gnum = gv.as_f64();
        let num = gnum.map(|g| (pv.and_then(Value::as_f64), g));
        push(var.var_type.as_str(), &var.section_id, hit, num);
        if var.var_type == VarType::Scale && var.scale_groupable {
            let gg = gv.as_i64().and_then(|v| group_scale(v).ok());
            let pg = pv.and_then(Value::as_i64).and_then(|v| group_scale(v).ok());
            if let Some(gg) = gg {
                push("scale_g", &var.section_id, pg == Some(gg), None);
            }
        }
    }

    let mut rows = Vec::new();
    for ((ty, section), b) in &buckets {
        let (acc, rm, bi) = match ty.as_str() {
            "scale" | "rule" => (true, true, true),
            "measure" => (true, false, true),
            _ => (true, false, false),
        };
        let count = b.hits.len();
        rows.push(MetricRow {
            var_type: ty.clone(),
            section: section.clone(),
            count,
            accuracy: (acc && count > 0).then(|| b.hits.iter().filter(|h| **h).count() as f64 / count as f64),
            rmse: if rm { rmse(&b.numeric).ok() } else { None },
            bias: if bi {
                bias(&b.numeric, opts.bias_denominator).ok()
            } else {
                None
            },
            recall: None,
        });
    }

    let mut notes: BTreeMap<String, Vec<SlotComparison>> = BTreeMap::new();
    for c in comparisons
        .iter()
        .filter(|c| gold_by.contains_key(c.interview_id.as_str()))
    {
        let var = schema
            .variable(&c.notes_var_id)
            .ok_or_else(|| Error::schema(format!("comparison for unknown variable {}", c.notes_var_id)))?;
        for s in [var.section_id.as_str(), "all"] {
            notes.entry(s.to_string()).or_default().push(c.clone());
        }
    }
    for (section, cs) in notes {
        let count = cs
            .iter()
            .flat_map(|c| &c.slots)
            .filter(|s| s.gold_present == Some(true))
            .count();
        rows.push(MetricRow {
            var_type: "notes".into(),
            section,
            count,
            accuracy: None,
            rmse: None,
            bias: None,
            recall: recall_slots(&cs).ok(),
        });
    }

    let type_order = |t: &str| {
        ["scale", "scale_g", "category", "measure", "notes", "rule"]
            .iter()
            .position(|x| *x == t)
    };
    let section_order = |s: &str| {
        if s == "all" {
            0
        } else {
            schema.section_index(s).map_or(usize::MAX, |i| i + 1)
        }
    };
    rows.sort_by_key(|r| (type_order(&r.var_type), section_order(&r.section), r.section.clone()));
    Ok(EvalReport { rows })
}

/// Session boundaries as (section, qid, utterance): each session start plus
/// the end of each section's last session.
pub fn boundaries(seg: &SegmentedInterview) -> BTreeSet<(String, String, usize)> {
    let mut out = BTreeSet::new();
    for sec in seg.sections.iter().filter(|s| s.present) {
        for s in &sec.sessions {
            out.insert((sec.section_id.clone(), s.question_id.clone(), s.start_utt));
        }
        if let Some(last) = sec.sessions.last() {
            out.insert((sec.section_id.clone(), SENTINEL_QID.to_string(), last.end_utt));
        }
    }
    out
}

/// F1 of predicted against true boundaries; 1.0 when both are empty.
pub fn boundary_f1(predicted: &SegmentedInterview, truth: &SegmentedInterview) -> f64 {
    let p = boundaries(predicted);
    let t = boundaries(truth);
    if p.is_empty() && t.is_empty() {
        return 1.0;
    }
    let tp = p.intersection(&t).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let precision = tp / p.len() as f64;
    let recall = tp / t.len() as f64;
    2.0 * precision * recall / (precision + recall)
}
