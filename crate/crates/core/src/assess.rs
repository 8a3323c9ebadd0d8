//! Per-interview assessment: variable prediction, the Notes slot pipeline,
//! rule computation and the report.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_json, GoldAssessment, Transcript};
use crate::error::{Error, Result};
use crate::llm::{
    extract_array, extract_object, parse_answer, CompletionRequest, DecodeParams, InvalidKind, LlmClient, Outcome,
    RequestKey,
};
use crate::par::{self, ExecMode};
use crate::prompt::{
    assemble_payload, assemble_variable_payload, render_notes_stage_prompt, render_slot_instruction, Exemplars,
    NotesStage, PromptPayload, ShotSetting,
};
use crate::schema::rule::RuleError;
use crate::schema::{evaluate_compiled, resolve_variable_sessions, Schema, Value, VarType, VariableSpec};
use crate::segment::{segment_interview_with, SegmentParams, SegmentedInterview, Session};
use crate::textsim::Embedder;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Format,
    Range,
    Type,
    Provider,
    ContextOverflow,
    MissingDependency,
    Rule,
    Config,
}

impl From<InvalidKind> for ErrorClass {
    fn from(k: InvalidKind) -> Self {
        match k {
            InvalidKind::Format => ErrorClass::Format,
            InvalidKind::Range => ErrorClass::Range,
            InvalidKind::Type => ErrorClass::Type,
        }
    }
}

fn classify(e: &Error) -> ErrorClass {
    match e {
        Error::Provider(_) => ErrorClass::Provider,
        Error::ContextOverflow { .. } => ErrorClass::ContextOverflow,
        Error::Config(_) | Error::Schema(_) => ErrorClass::Config,
        Error::Format(_) => ErrorClass::Format,
        Error::Rule(RuleError::MissingDependency(_)) => ErrorClass::MissingDependency,
        Error::Rule(RuleError::Range { .. }) => ErrorClass::Range,
        Error::Rule(_) => ErrorClass::Rule,
        _ => ErrorClass::Config,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Answer {
    Value { value: Value },
    Abstention,
    Error { class: ErrorClass, message: String },
}

impl Answer {
    pub fn value(&self) -> Option<&Value> {
        match self {
            Answer::Value { value } => Some(value),
            _ => None,
        }
    }

    fn error(class: ErrorClass, message: impl Into<String>) -> Answer {
        Answer::Error {
            class,
            message: message.into(),
        }
    }
}

impl From<Outcome> for Answer {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Parsed { value } => Answer::Value { value },
            Outcome::Abstention => Answer::Abstention,
            Outcome::Invalid { kind, message } => Answer::error(kind.into(), message),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub provider: String,
    pub setting: ShotSetting,
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub interview_id: String,
    pub var_id: String,
    pub var_type: VarType,
    pub section_id: String,
    pub answer: Answer,
    pub reason: String,
    pub sessions_used: Vec<Session>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SlotOrigin {
    Generated,
    Merged,
    Refined,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSchema {
    pub notes_var_id: String,
    pub slots: Vec<String>,
    pub origin: SlotOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotResult {
    pub slot: String,
    /// `None` when there was no gold note to compare against.
    pub gold_present: Option<bool>,
    pub predicted_present: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotComparison {
    pub interview_id: String,
    pub notes_var_id: String,
    pub slots: Vec<SlotResult>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub var_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slot: Option<String>,
    pub class: ErrorClass,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterviewReport {
    pub interview_id: String,
    pub segmentation: SegmentedInterview,
    pub predictions: Vec<Prediction>,
    pub slot_comparisons: Vec<SlotComparison>,
    pub errors: Vec<ErrorRecord>,
}

impl InterviewReport {
    pub fn provider_errors(&self) -> usize {
        self.errors
            .iter()
            .filter(|e| matches!(e.class, ErrorClass::Provider | ErrorClass::ContextOverflow))
            .count()
    }
}

/// Operator edits applied to an induced slot schema.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlotOverride {
    /// New slot → slots it replaces; it takes the position of the first.
    pub merge: BTreeMap<String, Vec<String>>,
    pub rename: BTreeMap<String, String>,
    pub drop: Vec<String>,
    pub add: Vec<String>,
}

impl SlotOverride {
    pub fn load_all(path: impl AsRef<Path>) -> Result<BTreeMap<String, SlotOverride>> {
        read_json(path)
    }

    pub fn apply(&self, schema: &SlotSchema) -> SlotSchema {
        let mut slots = schema.slots.clone();
        for (new, olds) in &self.merge {
            let new = snake_case(new);
            let olds: BTreeSet<String> = olds.iter().map(|s| snake_case(s)).collect();
            if let Some(pos) = slots.iter().position(|s| olds.contains(s)) {
                slots[pos] = new.clone();
                let mut i = 0;
                slots.retain(|s| {
                    i += 1;
                    i - 1 == pos || !olds.contains(s)
                });
            }
        }
        for s in &mut slots {
            if let Some(n) = self.rename.get(s.as_str()) {
                *s = snake_case(n);
            }
        }
        let dropped: BTreeSet<String> = self.drop.iter().map(|s| snake_case(s)).collect();
        slots.retain(|s| !dropped.contains(s));
        slots.extend(self.add.iter().map(|s| snake_case(s)));
        SlotSchema {
            notes_var_id: schema.notes_var_id.clone(),
            slots: dedup(slots),
            origin: SlotOrigin::Refined,
        }
    }
}

pub fn snake_case(s: &str) -> String {
    let mut out = String::new();
    for c in s.trim().chars() {
        if c.is_alphanumeric() {
            out.extend(c.to_lowercase());
        } else if !out.ends_with('_') && !out.is_empty() {
            out.push('_');
        }
    }
    out.trim_end_matches('_').to_string()
}

fn dedup(slots: Vec<String>) -> Vec<String> {
    let mut seen = BTreeSet::new();
    slots
        .into_iter()
        .filter(|s| !s.is_empty() && seen.insert(s.clone()))
        .collect()
}

/// Knobs shared by every interview of a run.
#[derive(Debug, Clone)]
pub struct AssessSettings {
    pub setting: ShotSetting,
    pub params: DecodeParams,
    pub exemplars: Exemplars,
    pub history_budget: Option<usize>,
    pub segmentation: SegmentParams,
    pub slot_schemas: BTreeMap<String, SlotSchema>,
    pub timestamp: String,
    pub mode: ExecMode,
}

impl Default for AssessSettings {
    fn default() -> Self {
        AssessSettings {
            setting: ShotSetting::Zero,
            params: DecodeParams::deterministic(),
            exemplars: Exemplars::default(),
            history_budget: None,
            segmentation: SegmentParams::default(),
            slot_schemas: BTreeMap::new(),
            timestamp: resolve_timestamp(None),
            mode: ExecMode::default(),
        }
    }
}

/// The configured timestamp, else `SOURCE_DATE_EPOCH`, else now (RFC 3339).
pub fn resolve_timestamp(configured: Option<&str>) -> String {
    if let Some(t) = configured {
        return t.to_string();
    }
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    epoch
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn request(interview: &str, key: String, payload: PromptPayload, params: &DecodeParams) -> CompletionRequest {
    CompletionRequest {
        key: RequestKey::new(interview, key),
        payload,
        params: params.clone(),
    }
}

fn bare_payload(system: String, history: String) -> PromptPayload {
    PromptPayload {
        system,
        shots: Vec::new(),
        empty_history: history.is_empty(),
        history,
    }
}

/// Predicts one Scale, Category or Measure variable. Variables without
/// sessions abstain without calling the provider.
pub fn predict_variable(
    var: &VariableSpec,
    seg: &SegmentedInterview,
    transcript: &Transcript,
    schema: &Schema,
    client: &LlmClient,
    settings: &AssessSettings,
) -> Prediction {
    let sessions = resolve_variable_sessions(var, seg, schema);
    let mut pred = Prediction {
        interview_id: transcript.interview_id.clone(),
        var_id: var.var_id.clone(),
        var_type: var.var_type,
        section_id: var.section_id.clone(),
        answer: Answer::Abstention,
        reason: String::new(),
        sessions_used: sessions.clone(),
        provenance: Provenance {
            provider: client.provider_name().to_string(),
            setting: settings.setting,
            timestamp: settings.timestamp.clone(),
        },
    };
    if !matches!(var.var_type, VarType::Scale | VarType::Category | VarType::Measure) {
        pred.answer = Answer::error(
            ErrorClass::Config,
            "only scale, category and measure variables are predicted",
        );
        return pred;
    }
    if sessions.is_empty() {
        pred.reason = "no session in the transcript covers this variable".into();
        return pred;
    }
    let payload = match assemble_variable_payload(
        var,
        &sessions,
        transcript,
        settings.setting,
        &settings.exemplars,
        settings.history_budget,
    ) {
        Ok(p) => p,
        Err(e) => {
            pred.answer = Answer::error(classify(&e), e.to_string());
            return pred;
        }
    };
    let req = request(&transcript.interview_id, var.var_id.clone(), payload, &settings.params);
    match client.complete(&req) {
        Ok(c) => {
            let parsed = parse_answer(&c.text, var);
            if let Outcome::Invalid { kind, message } = &parsed.outcome {
                log::warn!(
                    "{}/{}: invalid answer ({kind:?}): {message}",
                    transcript.interview_id,
                    var.var_id
                );
            }
            pred.reason = parsed.reason;
            pred.answer = parsed.outcome.into();
        }
        Err(e) => pred.answer = Answer::error(classify(&e), e.to_string()),
    }
    pred
}

fn slot_names(values: &[serde_json::Value]) -> Vec<String> {
    values
        .iter()
        .filter_map(|v| match v {
            serde_json::Value::String(s) => Some(s.clone()),
            serde_json::Value::Object(m) => m.get("slot").and_then(|s| s.as_str()).map(str::to_string),
            _ => None,
        })
        .map(|s| snake_case(&s))
        .collect()
}

/// Generate → merge → optional operator override.
pub fn induce_slot_schema(
    var: &VariableSpec,
    gold_notes: &[String],
    client: &LlmClient,
    params: &DecodeParams,
    overrides: Option<&SlotOverride>,
) -> Result<SlotSchema> {
    if gold_notes.is_empty() {
        return Err(Error::EmptyInput(format!("no gold notes for {}", var.var_id)));
    }
    let gen_prompt = render_notes_stage_prompt(NotesStage::Generate { notes: gold_notes });
    let raw = client
        .complete(&request(
            "induction",
            format!("{}/generate", var.var_id),
            bare_payload(gen_prompt, String::new()),
            params,
        ))?
        .text;
    let generated =
        dedup(slot_names(&extract_array(&raw).ok_or_else(|| {
            Error::Format(format!("{}: slot list expected", var.var_id))
        })?));
    if generated.is_empty() {
        return Err(Error::Format(format!("{}: no slots generated", var.var_id)));
    }
    let merge_prompt = render_notes_stage_prompt(NotesStage::Merge { slots: &generated });
    let raw = client
        .complete(&request(
            "induction",
            format!("{}/merge", var.var_id),
            bare_payload(merge_prompt, String::new()),
            params,
        ))?
        .text;
    let merged =
        extract_object(&raw).ok_or_else(|| Error::Format(format!("{}: merged slot object expected", var.var_id)))?;
    let schema = SlotSchema {
        notes_var_id: var.var_id.clone(),
        slots: dedup(merged.keys().map(|k| snake_case(k)).collect()),
        origin: SlotOrigin::Merged,
    };
    Ok(match overrides {
        Some(o) => o.apply(&schema),
        None => schema,
    })
}

/// Slot → non-empty content, from an NSF fill response.
fn filled_slots(raw: &str, slots: &[String]) -> Option<BTreeMap<String, bool>> {
    let obj = extract_object(raw)?;
    Some(
        slots
            .iter()
            .map(|s| {
                let present = match obj.get(s) {
                    Some(serde_json::Value::String(t)) => {
                        let t = t.trim();
                        !(t.is_empty() || t == "''")
                    }
                    Some(serde_json::Value::Null) | None => false,
                    Some(serde_json::Value::Array(a)) => !a.is_empty(),
                    Some(_) => true,
                };
                (s.clone(), present)
            })
            .collect(),
    )
}

/// Compares slot coverage of the gold note against what the model finds in
/// the interview sessions.
#[allow(clippy::too_many_arguments)]
pub fn assess_notes_variable(
    var: &VariableSpec,
    seg: &SegmentedInterview,
    transcript: &Transcript,
    schema: &Schema,
    gold_note: Option<&str>,
    slots: &SlotSchema,
    client: &LlmClient,
    settings: &AssessSettings,
    errors: &mut Vec<ErrorRecord>,
) -> SlotComparison {
    let iid = &transcript.interview_id;
    let sessions = resolve_variable_sessions(var, seg, schema);
    let mut out = SlotComparison {
        interview_id: iid.clone(),
        notes_var_id: var.var_id.clone(),
        slots: slots
            .slots
            .iter()
            .map(|s| SlotResult {
                slot: s.clone(),
                gold_present: None,
                predicted_present: false,
                error: None,
            })
            .collect(),
    };
    if sessions.is_empty() {
        return out;
    }
    let mut record = |slot: Option<&str>, class: ErrorClass, message: String| {
        errors.push(ErrorRecord {
            var_id: var.var_id.clone(),
            slot: slot.map(str::to_string),
            class,
            message,
        });
    };

    if let Some(note) = gold_note {
        let prompt = render_notes_stage_prompt(NotesStage::Fill {
            slots: &slots.slots,
            text: note,
        });
        let req = request(
            iid,
            format!("{}/gold_fill", var.var_id),
            bare_payload(prompt, String::new()),
            &settings.params,
        );
        match client.complete(&req).map(|c| filled_slots(&c.text, &slots.slots)) {
            Ok(Some(present)) => {
                for r in &mut out.slots {
                    r.gold_present = Some(present[&r.slot]);
                }
            }
            Ok(None) => record(
                None,
                ErrorClass::Format,
                "gold fill response is not a JSON object".into(),
            ),
            Err(e) => record(None, classify(&e), e.to_string()),
        }
    }

    let fill = render_notes_stage_prompt(NotesStage::Fill {
        slots: &slots.slots,
        text: "",
    });
    let payload = assemble_payload(
        fill.trim_end().to_string(),
        &sessions,
        transcript,
        Vec::new(),
        settings.history_budget,
    );
    let req = request(iid, format!("{}/fill", var.var_id), payload, &settings.params);
    let formatted = match client.complete(&req) {
        Ok(c) => match extract_object(&c.text) {
            Some(obj) => serde_json::Value::Object(obj).to_string(),
            None => {
                record(
                    None,
                    ErrorClass::Format,
                    "interview fill response is not a JSON object".into(),
                );
                for r in &mut out.slots {
                    r.error = Some(ErrorClass::Format);
                }
                return out;
            }
        },
        Err(e) => {
            let class = classify(&e);
            record(None, class, e.to_string());
            for r in &mut out.slots {
                r.error = Some(class);
            }
            return out;
        }
    };
    for r in &mut out.slots {
        let payload = bare_payload(render_slot_instruction(&r.slot), formatted.clone());
        let req = request(
            iid,
            format!("{}/slot/{}", var.var_id, r.slot),
            payload,
            &settings.params,
        );
        match client.complete(&req) {
            Ok(c) => match parse_answer(&c.text, var).outcome {
                Outcome::Parsed { value: Value::Bool(b) } => r.predicted_present = b,
                Outcome::Parsed { .. } | Outcome::Abstention => {}
                Outcome::Invalid { kind, message } => {
                    r.error = Some(kind.into());
                    record(Some(&r.slot), kind.into(), message);
                }
            },
            Err(e) => {
                let class = classify(&e);
                r.error = Some(class);
                record(Some(&r.slot), class, e.to_string());
            }
        }
    }
    out
}

/// Segments, predicts every variable, computes rules and assembles the
/// report. Failures are recorded per variable; only segmentation errors
/// abort.
pub fn assess_interview(
    transcript: &Transcript,
    schema: &Schema,
    gold: Option<&GoldAssessment>,
    embedder: &Embedder,
    client: &LlmClient,
    settings: &AssessSettings,
) -> Result<InterviewReport> {
    let seg = segment_interview_with(
        settings.mode,
        transcript,
        schema.sections(),
        embedder,
        &settings.segmentation,
    )?;
    assess_segmented(transcript, seg, schema, gold, client, settings)
}

pub fn assess_segmented(
    transcript: &Transcript,
    seg: SegmentedInterview,
    schema: &Schema,
    gold: Option<&GoldAssessment>,
    client: &LlmClient,
    settings: &AssessSettings,
) -> Result<InterviewReport> {
    let predicted: Vec<&VariableSpec> = schema
        .variables()
        .filter(|v| matches!(v.var_type, VarType::Scale | VarType::Category | VarType::Measure))
        .collect();
    let mut predictions = par::map(settings.mode, &predicted, |v| {
        predict_variable(v, &seg, transcript, schema, client, settings)
    });

    let mut errors = Vec::new();
    let mut comparisons = Vec::new();
    for var in schema.variables().filter(|v| v.var_type == VarType::Notes) {
        let slots = settings.slot_schemas.get(&var.var_id).cloned().or_else(|| {
            (!var.prompt_fields.slots.is_empty()).then(|| SlotSchema {
                notes_var_id: var.var_id.clone(),
                slots: var.prompt_fields.slots.iter().map(|s| snake_case(s)).collect(),
                origin: SlotOrigin::Refined,
            })
        });
        let Some(slots) = slots else {
            errors.push(ErrorRecord {
                var_id: var.var_id.clone(),
                slot: None,
                class: ErrorClass::Config,
                message: "no slot schema for notes variable".into(),
            });
            continue;
        };
        let note = gold.and_then(|g| match g.values.get(&var.var_id) {
            Some(Value::Text(t)) => Some(t.as_str()),
            _ => None,
        });
        comparisons.push(assess_notes_variable(
            var,
            &seg,
            transcript,
            schema,
            note,
            &slots,
            client,
            settings,
            &mut errors,
        ));
    }

    // rules, dependencies first
    let mut values: BTreeMap<String, Value> = predictions
        .iter()
        .filter_map(|p| Some((p.var_id.clone(), p.answer.value()?.clone())))
        .collect();
    for rule_id in schema.rule_order() {
        let var = schema
            .variable(rule_id)
            .expect("rule order only lists declared variables");
        let expr = schema.rule(rule_id).expect("rules are compiled at load");
        let answer = match evaluate_compiled(var, expr, &values) {
            Ok(v) => {
                values.insert(rule_id.clone(), v.clone());
                Answer::Value { value: v }
            }
            Err(e) => {
                let e = Error::Rule(e);
                Answer::error(classify(&e), e.to_string())
            }
        };
        predictions.push(Prediction {
            interview_id: transcript.interview_id.clone(),
            var_id: rule_id.clone(),
            var_type: VarType::Rule,
            section_id: var.section_id.clone(),
            answer,
            reason: format!("computed from {}", var.related.join(", ")),
            sessions_used: Vec::new(),
            provenance: Provenance {
                provider: "rule".into(),
                setting: settings.setting,
                timestamp: settings.timestamp.clone(),
            },
        });
    }

    for p in &predictions {
        if let Answer::Error { class, message } = &p.answer {
            errors.push(ErrorRecord {
                var_id: p.var_id.clone(),
                slot: None,
                class: *class,
                message: message.clone(),
            });
        }
    }
    let order = |section: &str| schema.section_index(section).unwrap_or(usize::MAX);
    predictions.sort_by(|a, b| (order(&a.section_id), &a.var_id).cmp(&(order(&b.section_id), &b.var_id)));
    comparisons.sort_by(|a, b| a.notes_var_id.cmp(&b.notes_var_id));
    errors.sort();
    Ok(InterviewReport {
        interview_id: transcript.interview_id.clone(),
        segmentation: seg,
        predictions,
        slot_comparisons: comparisons,
        errors,
    })
}
