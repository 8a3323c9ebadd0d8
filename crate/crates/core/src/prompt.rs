//! Instruction templates, few-shot payload assembly and the Notes slot
//! prompts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{read_json, Transcript};
use crate::error::{Error, Result};
use crate::schema::{VarType, VariableSpec};
use crate::segment::Session;

pub const INTRO: &str = "Imagine you are a professional clinician";
pub const RETURN: &str = r#"Return the answer as a JSON object with "reason" and "answer" as the keys"#;
pub const REASON: &str = r#"The "reason" should provide a brief justification or explanation for the answer"#;

pub const SCALE_CATEGORY_TEMPLATE: &str = r#"[INTRO]. Based on the patient's interview history, please determine {keywords} that the patient {symptom}. [RETURN]. [REASON]. The "answer" should be in the range {range}.{attributes}"#;
pub const MEASURE_TEMPLATE: &str = r#"[INTRO]. Based on the patient's interview history, please calculate {keywords} that the patient have {symptom}. [RETURN]. [REASON]. The "answer" should be {type}."#;
pub const NOTES_TEMPLATE: &str = r#"[INTRO]. Based on the formatted data from patient's interview, please determine whether or not the formatted data includes this specified information {single_slot}. [RETURN]. The "reason" gives a brief explanation on whether the formatted data includes or omits the information. The "answer" should be either "yes" or "no", indicating the presence or absence of the information in formatted data."#;

pub const SLOT_GENERATE_PROMPT: &str = r#"As a clinician who has conducted interviews with multiple patients, you are tasked with structuring the interview data into a more organized format. To achieve this, identify general "slots" from the interview question and answers. These slots should represent key themes or types of information that can be adapted to various responses from different patients.
For each identified slot, provide a brief explanation of why it has been chosen, focusing on its relevance and utility in categorizing interview data.
Your findings should be presented in a JSON format as a list, for example: [{"reason": "This slot captures the primary health concern of the patient, a common theme across all interviews", "slot": "primary_health_concern" }, {"reason": "This slot pertains to the patient's lifestyle habits, which is crucial for understanding health context", "slot": "lifestyle_habits" } ].
Remember to ensure that the slots are broad enough to be applicable across different patient responses yet specific enough to offer meaningful categorization."#;

pub const SLOT_MERGE_PROMPT: &str = r#"Imagine you are a clinician who documents patient interviews in a structured, slot-filling manner. Sometimes, certain slots may have overlapping or similar content. Your task is to review a given list of slots and merge those that are similar. The merged results should be returned as a JSON object, where each key represents a merged slot, and the corresponding value is a list of the original slots that have been combined under this merged category.
For instance, if the list of slots is: ["daily_routine", "work_events", "daily_activity", "daytime_activities", "work_routine"], a possible merged result could be: {"daily_routine": ["daily_routine", "daily_activity", "daytime_activities"], "work": ["work_events", "work_routine"]}.
When you receive a list of slots, analyze and merge them accordingly, ensuring that the merged slots are logically grouped and accurately represent the original information categories."#;

pub const SLOT_FILL_TEMPLATE: &str = "Imagine you are a professional clinician. Based on the patient's interview history, please extract specific information and fill in the following slots: {slots}. If the interview history does not provide information for any of these slots, please enter an empty string ('') for that slot. Return the answer as a JSON object.";

fn expand_constants(t: &str) -> String {
    t.replace("[INTRO]", INTRO)
        .replace("[RETURN]", RETURN)
        .replace("[REASON]", REASON)
}

fn require<'a>(var: &VariableSpec, name: &str, v: &'a str) -> Result<&'a str> {
    if v.trim().is_empty() {
        Err(Error::schema(format!(
            "variable {} has no {name} prompt field",
            var.var_id
        )))
    } else {
        Ok(v)
    }
}

fn render_codes(codes: &BTreeMap<i64, String>) -> String {
    let mut out = String::new();
    for (code, label) in codes {
        let _ = write!(out, "\n{code}: {label}");
    }
    out
}

/// Renders the instruction for a Scale, Category or Measure variable.
/// Notes variables are prompted per slot ([`render_slot_instruction`]) and
/// rule variables are never prompted.
pub fn render_instruction(var: &VariableSpec) -> Result<String> {
    let pf = &var.prompt_fields;
    match var.var_type {
        VarType::Scale | VarType::Category => {
            let keywords = require(var, "keywords", &pf.keywords)?;
            let symptom = require(var, "symptom", &pf.symptom)?;
            let range = if var.var_type == VarType::Scale {
                let (lo, hi) = var
                    .range_bounds()
                    .ok_or_else(|| Error::schema(format!("scale {} has no range", var.var_id)))?;
                format!("{lo}-{hi}, where{}", render_codes(&pf.range))
            } else {
                if pf.labels.is_empty() {
                    return Err(Error::schema(format!("category {} has no labels", var.var_id)));
                }
                let codes: Vec<String> = pf.labels.keys().map(i64::to_string).collect();
                format!("{}, where{}", codes.join(", "), render_codes(&pf.labels))
            };
            let attributes: String = pf.attributes.iter().map(|a| format!("\n- {a}")).collect();
            Ok(expand_constants(SCALE_CATEGORY_TEMPLATE)
                .replace("{keywords}", keywords)
                .replace("{symptom}", symptom)
                .replace("{range}", &range)
                .replace("{attributes}", &attributes))
        }
        VarType::Measure => {
            let keywords = require(var, "keywords", &pf.keywords)?;
            let symptom = require(var, "symptom", &pf.symptom)?;
            let ty = require(var, "value_type", &pf.value_type)?;
            Ok(expand_constants(MEASURE_TEMPLATE)
                .replace("{keywords}", keywords)
                .replace("{symptom}", symptom)
                .replace("{type}", ty))
        }
        VarType::Notes => Err(Error::schema(format!(
            "notes variable {} is prompted per slot",
            var.var_id
        ))),
        VarType::Rule => Err(Error::schema(format!(
            "rule variable {} is computed, not prompted",
            var.var_id
        ))),
    }
}

pub fn render_slot_instruction(slot: &str) -> String {
    expand_constants(NOTES_TEMPLATE).replace("{single_slot}", slot)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShotSetting {
    #[default]
    Zero,
    FewSingle,
    FewAll,
}

impl std::str::FromStr for ShotSetting {
    type Err = Error;
    fn from_str(s: &str) -> Result<ShotSetting> {
        match s {
            "zero" => Ok(ShotSetting::Zero),
            "few_single" => Ok(ShotSetting::FewSingle),
            "few_all" => Ok(ShotSetting::FewAll),
            other => Err(Error::Config(format!("unknown shot setting {other:?}"))),
        }
    }
}

impl std::fmt::Display for ShotSetting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ShotSetting::Zero => "zero",
            ShotSetting::FewSingle => "few_single",
            ShotSetting::FewAll => "few_all",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotAnswer {
    pub reason: String,
    pub answer: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shot {
    pub history: String,
    pub answer: ShotAnswer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub var_type: VarType,
    pub shots: Vec<Shot>,
}

/// Few-shot exemplars grouped by variable type.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Exemplars {
    by_type: BTreeMap<VarType, Vec<Shot>>,
}

impl Exemplars {
    pub fn new(sets: Vec<ExemplarSet>) -> Exemplars {
        let mut by_type: BTreeMap<VarType, Vec<Shot>> = BTreeMap::new();
        for set in sets {
            by_type.entry(set.var_type).or_default().extend(set.shots);
        }
        Exemplars { by_type }
    }

    /// Reads one exemplar set or an array of them.
    pub fn load(path: impl AsRef<Path>) -> Result<Exemplars> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum File {
            Many(Vec<ExemplarSet>),
            One(ExemplarSet),
        }
        Ok(match read_json::<File>(path)? {
            File::Many(v) => Exemplars::new(v),
            File::One(s) => Exemplars::new(vec![s]),
        })
    }

    pub fn shots(&self, var_type: VarType) -> &[Shot] {
        self.by_type.get(&var_type).map_or(&[], Vec::as_slice)
    }

    fn select(&self, var: &VariableSpec, setting: ShotSetting) -> Result<Vec<Shot>> {
        if setting == ShotSetting::Zero {
            return Ok(Vec::new());
        }
        let pool = self.shots(var.var_type);
        if pool.is_empty() {
            return Err(Error::Config(format!(
                "{setting} requested for {} but no {} exemplars are configured",
                var.var_id,
                var.var_type.as_str()
            )));
        }
        match setting {
            ShotSetting::Zero => unreachable!(),
            ShotSetting::FewSingle => Ok(vec![pool[0].clone()]),
            ShotSetting::FewAll if var.var_type == VarType::Scale => var
                .prompt_fields
                .range
                .keys()
                .map(|score| {
                    pool.iter()
                        .find(|s| s.answer.answer.as_i64() == Some(*score))
                        .cloned()
                        .ok_or_else(|| {
                            Error::Config(format!(
                                "few_all needs a scale exemplar answering {score} for {}",
                                var.var_id
                            ))
                        })
                })
                .collect(),
            ShotSetting::FewAll => Ok(pool.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptPayload {
    pub system: String,
    pub shots: Vec<Shot>,
    pub history: String,
    pub empty_history: bool,
}

impl PromptPayload {
    /// Characters that will be sent to the provider.
    pub fn size(&self) -> usize {
        let shots: usize = self
            .shots
            .iter()
            .map(|s| s.history.len() + s.answer.reason.len() + s.answer.answer.to_string().len())
            .sum();
        self.system.len() + shots + self.history.len()
    }

    /// Chat messages in provider wire format.
    pub fn messages(&self) -> Vec<serde_json::Value> {
        let mut out = Vec::with_capacity(2 * self.shots.len() + 1);
        for s in &self.shots {
            out.push(serde_json::json!({"role": "user", "content": s.history}));
            let answer = serde_json::json!({"reason": s.answer.reason, "answer": s.answer.answer});
            out.push(serde_json::json!({"role": "assistant", "content": answer.to_string()}));
        }
        out.push(serde_json::json!({"role": "user", "content": self.history}));
        out
    }
}

/// Renders the utterances covered by `sessions` as "Speaker: text" lines,
/// each utterance once, in transcript order.
pub fn history_lines(sessions: &[Session], transcript: &Transcript) -> Vec<String> {
    let ids: BTreeSet<usize> = sessions
        .iter()
        .flat_map(|s| s.start_utt..s.end_utt.min(transcript.len()))
        .collect();
    ids.into_iter()
        .map(|i| {
            let u = &transcript.utterances[i];
            format!("{}: {}", u.speaker, u.text)
        })
        .collect()
}

/// Drops utterances from the middle until the history fits in `budget`
/// characters; the first and last lines are always kept.
pub fn truncate_history(mut lines: Vec<String>, budget: usize) -> Vec<String> {
    let size = |ls: &[String]| ls.iter().map(|l| l.len() + 1).sum::<usize>().saturating_sub(1);
    while lines.len() > 2 && size(&lines) > budget {
        lines.remove(lines.len() / 2);
    }
    lines
}

pub fn assemble_payload(
    system: String,
    sessions: &[Session],
    transcript: &Transcript,
    shots: Vec<Shot>,
    history_budget: Option<usize>,
) -> PromptPayload {
    let mut lines = history_lines(sessions, transcript);
    if let Some(b) = history_budget {
        lines = truncate_history(lines, b);
    }
    let history = lines.join("\n");
    PromptPayload {
        system,
        shots,
        empty_history: history.is_empty(),
        history,
    }
}

/// Payload for a Scale, Category or Measure variable.
pub fn assemble_variable_payload(
    var: &VariableSpec,
    sessions: &[Session],
    transcript: &Transcript,
    setting: ShotSetting,
    exemplars: &Exemplars,
    history_budget: Option<usize>,
) -> Result<PromptPayload> {
    let system = render_instruction(var)?;
    let shots = exemplars.select(var, setting)?;
    Ok(assemble_payload(system, sessions, transcript, shots, history_budget))
}

#[derive(Debug, Clone, Copy)]
pub enum NotesStage<'a> {
    Generate { notes: &'a [String] },
    Merge { slots: &'a [String] },
    Fill { slots: &'a [String], text: &'a str },
}

pub fn render_notes_stage_prompt(stage: NotesStage<'_>) -> String {
    match stage {
        NotesStage::Generate { notes } => format!("{SLOT_GENERATE_PROMPT}\n\n{}", notes.join("\n\n")),
        NotesStage::Merge { slots } => format!(
            "{SLOT_MERGE_PROMPT}\n\n{}",
            serde_json::to_string(slots).expect("strings serialize")
        ),
        NotesStage::Fill { slots, text } => {
            format!("{}\n\n{text}", SLOT_FILL_TEMPLATE.replace("{slots}", &slots.join(", ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Source, Utterance};
    use crate::schema::PromptFields;

    fn scale_var() -> VariableSpec {
        VariableSpec {
            var_id: "s".into(),
            var_type: VarType::Scale,
            section_id: "X".into(),
            prompt_fields: PromptFields {
                keywords: "how intense in the past month".into(),
                symptom: "has unwanted memories".into(),
                attributes: vec!["If the symptom only exists in dreams, the answer should be 0.".into()],
                range: (0..=4).map(|i| (i, format!("level {i}"))).collect(),
                ..Default::default()
            },
            rule_expr: None,
            related: vec![],
            scale_groupable: true,
        }
    }

    fn shot(a: i64) -> Shot {
        Shot {
            history: format!("C: q\nP: answer {a}"),
            answer: ShotAnswer {
                reason: "r".into(),
                answer: serde_json::json!(a),
            },
        }
    }

    #[test]
    fn scale_instruction_has_all_parts_once() {
        let s = render_instruction(&scale_var()).unwrap();
        assert!(s.starts_with("Imagine you are a professional clinician. Based on"));
        assert!(s.contains("how intense in the past month"));
        assert!(s.contains("in the range 0-4, where\n0: level 0\n"));
        assert!(s.ends_with("\n- If the symptom only exists in dreams, the answer should be 0."));
        assert_eq!(s.matches(RETURN).count(), 1);
        for placeholder in ["{keywords}", "{symptom}", "{range}", "{attributes}", "{type}"] {
            assert!(!s.contains(placeholder));
        }
    }

    #[test]
    fn rule_variables_are_not_prompted() {
        let mut v = scale_var();
        v.var_type = VarType::Rule;
        assert!(render_instruction(&v).is_err());
    }

    #[test]
    fn shot_selection() {
        let ex = Exemplars::new(vec![ExemplarSet {
            var_type: VarType::Scale,
            shots: vec![shot(3), shot(0), shot(4), shot(1), shot(2)],
        }]);
        let v = scale_var();
        assert!(ex.select(&v, ShotSetting::Zero).unwrap().is_empty());
        assert_eq!(ex.select(&v, ShotSetting::FewSingle).unwrap().len(), 1);
        let all = ex.select(&v, ShotSetting::FewAll).unwrap();
        let scores: Vec<i64> = all.iter().map(|s| s.answer.answer.as_i64().unwrap()).collect();
        assert_eq!(scores, vec![0, 1, 2, 3, 4]);
        assert!(Exemplars::default().select(&v, ShotSetting::FewSingle).is_err());
    }

    #[test]
    fn truncation_keeps_ends() {
        let lines: Vec<String> = (0..10).map(|i| format!("line{i}")).collect();
        let out = truncate_history(lines, 20);
        assert_eq!(out.first().unwrap(), "line0");
        assert_eq!(out.last().unwrap(), "line9");
        assert!(out.join("\n").len() <= 20);
    }

    #[test]
    fn history_and_empty_flag() {
        let t = Transcript {
            interview_id: "i".into(),
            source: Source::Merged,
            utterances: vec![
                Utterance::from_text(0, "C", "hello"),
                Utterance::from_text(1, "P", "hi"),
                Utterance::from_text(2, "C", "bye"),
            ],
        };
        let p = assemble_payload("sys".into(), &[Session::new("q", 0, 2)], &t, vec![], None);
        assert_eq!(p.history, "C: hello\nP: hi");
        assert!(!p.empty_history);
        let p = assemble_payload("sys".into(), &[], &t, vec![], None);
        assert!(p.empty_history && p.history.is_empty());
    }

    #[test]
    fn notes_stage_prompts() {
        let slots = vec!["a".to_string(), "b".to_string()];
        let fill = render_notes_stage_prompt(NotesStage::Fill {
            slots: &slots,
            text: "t",
        });
        assert!(fill.contains("fill in the following slots: a, b."));
        let merge = render_notes_stage_prompt(NotesStage::Merge {
            slots: &["daily_routine".to_string(), "work_events".to_string()],
        });
        assert!(merge.ends_with(r#"["daily_routine","work_events"]"#));
        let notes = vec!["n1".to_string(), "n2".to_string(), "n3".to_string()];
        let gen = render_notes_stage_prompt(NotesStage::Generate { notes: &notes });
        assert!(gen.ends_with("categorization.\n\nn1\n\nn2\n\nn3"));
    }
}
