//! Synthetic interviews with planted section, session and value truth.
//!
//! Each interview walks the schema in order: the clinician asks every core
//! question and, unless skipped, its optional follow-ups; the participant
//! answers with text that states the planted gold value. Small talk fills the
//! gaps. Every non-question turn is checked against all question texts with
//! the local embedder so that, without paraphrase or noise, the only strong
//! matches in a transcript are the questions themselves.
//!
//! Paraphrase, skip, filler and noise decisions draw from separate ChaCha8
//! streams, so raising one rate leaves the other draws unchanged.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    join_words, tokenize, write_json, write_transcript, GoldAssessment, Source, Transcript, Utterance,
};
use crate::error::{Error, Result};
use crate::schema::{evaluate_rule, MeasureUnit, Question, QuestionSet, Schema, Value, VarType, VariableSpec};
use crate::segment::{SectionSegments, SegmentedInterview, Session};
use crate::textsim::{cosine, lev_similarity, LocalHashEmbedder};

pub const CLINICIAN: &str = "Clinician";
pub const PARTICIPANT: &str = "Participant";

/// Non-question turns must stay at or below these similarities to every
/// question of the schema.
const MAX_COSINE: f64 = 0.35;
const MAX_LEV: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub interviews: usize,
    pub id_prefix: String,
    /// Section ids to realize, in schema order; empty means all.
    pub sections: Vec<String>,
    pub paraphrase_rate: f64,
    pub skip_optional_rate: f64,
    pub asr_noise_rate: f64,
    /// Inclusive range of small-talk turns after each answer.
    pub filler_turns: [usize; 2],
    /// Chance that a whole section is left out of an interview.
    pub section_drop_rate: f64,
    /// Chance that a canned model answer deviates from gold.
    pub mock_noise_rate: f64,
    /// Chance that a diarized turn boundary moves by one word.
    pub boundary_shift_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            interviews: 1,
            id_prefix: "synth-".into(),
            sections: Vec::new(),
            paraphrase_rate: 0.0,
            skip_optional_rate: 0.5,
            asr_noise_rate: 0.0,
            filler_turns: [0, 2],
            section_drop_rate: 0.0,
            mock_noise_rate: 0.0,
            boundary_shift_rate: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        let rates = [
            ("paraphrase_rate", self.paraphrase_rate),
            ("skip_optional_rate", self.skip_optional_rate),
            ("asr_noise_rate", self.asr_noise_rate),
            ("section_drop_rate", self.section_drop_rate),
            ("mock_noise_rate", self.mock_noise_rate),
            ("boundary_shift_rate", self.boundary_shift_rate),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("synth.{name} = {v} is outside [0, 1]")));
            }
        }
        if self.filler_turns[0] > self.filler_turns[1] {
            return Err(Error::Config("synth.filler_turns must be [min, max]".into()));
        }
        for s in &self.sections {
            if schema.section(s).is_none() {
                return Err(Error::Config(format!("synth.sections names unknown section {s}")));
            }
        }
        Ok(())
    }

    pub fn interview_id(&self, index: usize) -> String {
        format!("{}{:03}", self.id_prefix, index + 1)
    }

    fn interview_seed(&self, index: usize) -> u64 {
        self.seed ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthInterview {
    /// Verbatim-style transcript with clinician / participant turns.
    pub transcript: Transcript,
    /// The same words as an ASR system might emit them: anonymous speakers,
    /// noisy words and occasionally misplaced turn boundaries.
    pub diarized: Transcript,
    pub truth: SegmentedInterview,
    pub gold: GoldAssessment,
}

// Rule-based paraphrase tables.
const SYNONYMS: &[(&str, &str)] = &[
    ("admitted", "checked in"),
    ("affecting", "bothering"),
    ("ago", "back"),
    ("avoid", "steer clear of"),
    ("awake", "up"),
    ("bother", "trouble"),
    ("condition", "problem"),
    ("conditions", "problems"),
    ("consistent", "steady"),
    ("current", "ongoing"),
    ("currently", "right now"),
    ("discussed", "talked about"),
    ("dreams", "sleep"),
    ("efforts", "attempts"),
    ("emotional", "feelings"),
    ("event", "incident"),
    ("feelings", "emotions"),
    ("first", "initially"),
    ("happened", "went on"),
    ("home", "the house"),
    ("hospitalization", "a hospital stay"),
    ("impactful", "significant"),
    ("income", "money"),
    ("live", "stay"),
    ("medication", "medicine"),
    ("members", "people"),
    ("memories", "recollections"),
    ("month", "four weeks"),
    ("nightmares", "bad dreams"),
    ("nights", "evenings"),
    ("noticing", "seeing"),
    ("often", "frequently"),
    ("overall", "general"),
    ("overnight", "for a night"),
    ("past", "last"),
    ("physical", "bodily"),
    ("pretty", "fairly"),
    ("primary", "main"),
    ("problems", "issues"),
    ("psychiatric", "mental health"),
    ("rate", "score"),
    ("remembering", "recalling"),
    ("satisfaction", "happiness"),
    ("schedule", "routine"),
    ("source", "kind"),
    ("taking", "on"),
    ("team", "staff"),
    ("therapy", "counseling"),
    ("thoughts", "ideas"),
    ("traumas", "hard events"),
    ("treated", "seen"),
    ("tried", "attempted"),
    ("unpleasant", "disturbing"),
    ("unwanted", "unwelcome"),
    ("usually", "normally"),
];

const LEAD_INS: &[&str] = &["So,", "Okay, and", "Now,", "Alright,", "Let me ask,"];

const INTROS: &[&str] = &[
    "Hi, thanks for coming in today. We will go through several parts together.",
    "Good morning. Before we start, let me know if anything is unclear.",
    "Hello again. This will take a while, so let me know if a break helps.",
];
const INTRO_REPLIES: &[&str] = &["Sounds good.", "Okay, sure.", "Alright, I'm ready."];
const TRANSITIONS: &[&str] = &[
    "Okay, now we're going to move on to a different part.",
    "Alright, let's switch gears for a bit.",
    "Thanks. Next I'd like to cover something else.",
    "Good. We'll continue with another block now.",
];
const CLOSINGS: &[&str] = &[
    "That is everything for today. Thank you so much for your time.",
    "We're all done. Thanks again for coming in.",
];
const CLINICIAN_FILLERS: &[&str] = &[
    "Mm-hmm.",
    "Okay.",
    "I see.",
    "Got it, thanks.",
    "Sorry, I couldn't hear that. Go ahead.",
    "Take your time.",
];
const PARTICIPANT_FILLERS: &[&str] = &[
    "Yeah.",
    "Right.",
    "Uh, let me think.",
    "I mean, it's hard to say.",
    "Sorry, my phone buzzed.",
    "Hmm.",
];
const GENERIC_ANSWERS: &[&str] = &[
    "Yeah, I remember that.",
    "Not really, no.",
    "It depends on the day.",
    "I guess so.",
    "Kind of, sometimes.",
    "Mostly when I'm alone.",
];

const ONES: &[&str] = &[
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve",
];

/// Rejects text that is too close to any question.
struct Checker {
    embedder: LocalHashEmbedder,
    questions: Vec<(Vec<f64>, String)>,
}

impl Checker {
    fn new(schema: &Schema) -> Checker {
        let embedder = LocalHashEmbedder::default();
        let questions = schema
            .sections()
            .iter()
            .flat_map(|s| &s.questions)
            .map(|q| (embedder.embed_one(&q.text), q.text.clone()))
            .collect();
        Checker { embedder, questions }
    }

    fn safe(&self, text: &str) -> bool {
        let v = self.embedder.embed_one(text);
        self.questions
            .iter()
            .all(|(e, q)| cosine(&v, e).unwrap_or(0.0) <= MAX_COSINE && lev_similarity(text, q) <= MAX_LEV)
    }

    /// First safe candidate in a random order; "Mm-hmm." when none is.
    fn pick(&self, rng: &mut ChaCha8Rng, candidates: &[String]) -> String {
        let mut order: Vec<&String> = candidates.iter().collect();
        order.shuffle(rng);
        order
            .into_iter()
            .find(|c| self.safe(c))
            .cloned()
            .unwrap_or_else(|| "Mm-hmm.".to_string())
    }

    fn pick_str(&self, rng: &mut ChaCha8Rng, candidates: &[&str]) -> String {
        let owned: Vec<String> = candidates.iter().map(|s| s.to_string()).collect();
        self.pick(rng, &owned)
    }
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn lower_first(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_lowercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Synonym swaps, clause reordering and a lead-in.
pub fn paraphrase(text: &str, rng: &mut impl Rng) -> String {
    let mut s = text.trim().to_string();
    // "In the past month, have you ...?" -> "Have you ... in the past month?"
    if let Some((head, tail)) = s.split_once(", ") {
        if head.split_whitespace().count() <= 5 && tail.ends_with('?') && rng.random_bool(0.5) {
            let body = tail.trim_end_matches('?');
            s = format!("{} {}?", capitalize(body), lower_first(head));
        }
    }
    let words: Vec<&str> = s.split_whitespace().collect();
    let eligible: Vec<usize> = (0..words.len()).filter(|&i| synonym(words[i]).is_some()).collect();
    let forced = eligible.choose(rng).copied();
    let mut out = Vec::with_capacity(words.len());
    for (i, w) in words.iter().enumerate() {
        match synonym(w) {
            Some(rep) if Some(i) == forced || rng.random_bool(0.5) => out.push(rep),
            _ => out.push(w.to_string()),
        }
    }
    let mut s = out.join(" ");
    if rng.random_bool(0.5) {
        let lead = LEAD_INS.choose(rng).expect("non-empty table");
        s = format!("{lead} {}", lower_first(&s));
    }
    capitalize(&s)
}

/// Replacement for one whitespace token, keeping its punctuation and case.
fn synonym(word: &str) -> Option<String> {
    let start = word.find(|c: char| c.is_alphanumeric())?;
    let end = word.rfind(|c: char| c.is_alphanumeric())? + 1;
    let core = &word[start..end];
    let lower = core.to_lowercase();
    let (_, rep) = SYNONYMS.iter().find(|(k, _)| *k == lower)?;
    let rep = if core.chars().next().is_some_and(char::is_uppercase) {
        capitalize(rep)
    } else {
        rep.to_string()
    };
    Some(format!("{}{rep}{}", &word[..start], &word[end..]))
}

/// Character swaps, and digits read out as words.
fn corrupt_word(word: &str, rng: &mut impl Rng) -> String {
    let digits = word.trim_end_matches(|c: char| !c.is_alphanumeric());
    let trail = &word[digits.len()..];
    if let Ok(n) = digits.parse::<usize>() {
        if let Some(w) = ONES.get(n) {
            return format!("{w}{trail}");
        }
    }
    let mut chars: Vec<char> = word.chars().collect();
    let alpha: Vec<usize> = (0..chars.len().saturating_sub(1))
        .filter(|&i| chars[i].is_alphabetic() && chars[i + 1].is_alphabetic())
        .collect();
    if let Some(&i) = alpha.choose(rng) {
        chars.swap(i, i + 1);
    }
    chars.into_iter().collect()
}

fn add_noise(text: &str, rate: f64, rng: &mut impl Rng) -> String {
    if rate == 0.0 {
        return text.to_string();
    }
    text.split_whitespace()
        .map(|w| {
            if rng.random_bool(rate) {
                corrupt_word(w, rng)
            } else {
                w.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn short_label(label: &str) -> String {
    let head = label.split([',', '/', '(']).next().unwrap_or(label).trim();
    head.to_lowercase()
}

fn plant_value(var: &VariableSpec, rng: &mut impl Rng) -> Option<Value> {
    let pf = &var.prompt_fields;
    match var.var_type {
        VarType::Scale => pf
            .range
            .keys()
            .copied()
            .collect::<Vec<_>>()
            .choose(rng)
            .map(|v| Value::Int(*v)),
        VarType::Category => pf
            .labels
            .keys()
            .copied()
            .collect::<Vec<_>>()
            .choose(rng)
            .map(|v| Value::Int(*v)),
        VarType::Measure => Some(Value::Int(match pf.unit {
            MeasureUnit::Count | MeasureUnit::Real => rng.random_range(0..=30),
            MeasureUnit::Years => rng.random_range(8..=60),
            MeasureUnit::Months => rng.random_range(1..=120),
        })),
        VarType::Notes => {
            let slots = &pf.slots;
            if slots.is_empty() {
                return None;
            }
            let mut chosen: Vec<&String> = slots.iter().filter(|_| rng.random_bool(0.5)).collect();
            if chosen.is_empty() {
                chosen.push(slots.choose(rng).expect("non-empty"));
            }
            let note = chosen
                .iter()
                .map(|s| format!("{}: {}.", s, slot_detail(s)))
                .collect::<Vec<_>>()
                .join(" ");
            Some(Value::Text(note))
        }
        VarType::Rule => None,
    }
}

fn slot_detail(slot: &str) -> String {
    let known = [
        (
            "trauma_details",
            "a shooting at the family home when the participant was a child",
        ),
        ("trauma_reactions", "still startles at loud noises"),
        ("nightmare_details", "recurring bad dreams a few nights a week"),
        ("intrusive_experiences", "the scene pops up while driving"),
        ("coping_and_changes", "plays video games to keep busy"),
        ("family_and_social_context", "a daughter in a difficult relationship"),
        ("substance_use", "drinks more on weekends"),
        ("therapy_and_progress", "saw a counselor for a few months"),
    ];
    known.iter().find(|(k, _)| *k == slot).map_or_else(
        || format!("mentions {}", slot.replace('_', " ")),
        |(_, d)| d.to_string(),
    )
}

fn value_answers(var: &VariableSpec, value: &Value) -> Vec<String> {
    let pf = &var.prompt_fields;
    let n = value.as_i64().unwrap_or(0);
    match var.var_type {
        VarType::Scale => {
            let label = pf.range.get(&n).map(|l| short_label(l)).unwrap_or_default();
            vec![
                format!("I would say {label}."),
                format!("Honestly? {}.", capitalize(&label)),
                format!("Probably {label}, if I am being honest."),
                format!("I'd put it at {n}."),
            ]
        }
        VarType::Category => {
            let label = pf.labels.get(&n).map(|l| short_label(l)).unwrap_or_default();
            vec![
                format!("Right now it's {label}."),
                format!("{}, mostly.", capitalize(&label)),
                format!("I'd call it {label}."),
            ]
        }
        VarType::Measure => match pf.unit {
            MeasureUnit::Years => vec![format!("I was {n} years old."), format!("Around age {n}.")],
            MeasureUnit::Months => vec![format!("Around {n} months ago."), format!("Maybe {n} months.")],
            _ => vec![
                format!("{n} times, more or less."),
                format!("About {n}."),
                format!("I'd guess {n}."),
            ],
        },
        _ => Vec::new(),
    }
}

struct Builder<'a> {
    checker: &'a Checker,
    utterances: Vec<(String, String)>,
}

impl Builder<'_> {
    fn push(&mut self, speaker: &str, text: String) -> usize {
        self.utterances.push((speaker.to_string(), text));
        self.utterances.len() - 1
    }

    fn fillers(&mut self, rng: &mut ChaCha8Rng, range: [usize; 2]) {
        let k = rng.random_range(range[0]..=range[1]);
        for i in 0..k {
            let (speaker, table) = if i % 2 == 0 {
                (CLINICIAN, CLINICIAN_FILLERS)
            } else {
                (PARTICIPANT, PARTICIPANT_FILLERS)
            };
            let text = self.checker.pick_str(rng, table);
            self.push(speaker, text);
        }
    }
}

/// Questions asked in one section, in interview order.
fn asked_questions<'a>(set: &'a QuestionSet, skip_rate: f64, rng: &mut ChaCha8Rng) -> Vec<&'a Question> {
    let mut asked: Vec<&Question> = Vec::new();
    for q in &set.questions {
        let ok = q.core
            || (q.parent.as_ref().is_some_and(|p| asked.iter().any(|a| &a.qid == p)) && !rng.random_bool(skip_rate));
        if ok {
            asked.push(q);
        }
    }
    asked
}

/// One interview. `index` selects the seed stream and id within the corpus.
pub fn generate_at(spec: &SynthSpec, schema: &Schema, index: usize) -> Result<SynthInterview> {
    spec.validate(schema)?;
    let seed = spec.interview_seed(index);
    let mut main = ChaCha8Rng::seed_from_u64(seed);
    let mut para = ChaCha8Rng::seed_from_u64(seed ^ 0x5A5A_5A5A);
    let mut noise = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5_A5A5);
    let checker = Checker::new(schema);
    let mut b = Builder {
        checker: &checker,
        utterances: Vec::new(),
    };
    let interview_id = spec.interview_id(index);

    // planted values for every predicted and notes variable
    let mut planted: BTreeMap<String, Value> = BTreeMap::new();
    for var in schema.variables() {
        if let Some(v) = plant_value(var, &mut main) {
            planted.insert(var.var_id.clone(), v);
        }
    }
    // paraphrase draws per question, in schema order, independent of the rest
    let mut para_draws: BTreeMap<String, (f64, u64)> = BTreeMap::new();
    for q in schema.sections().iter().flat_map(|s| &s.questions) {
        para_draws.insert(q.qid.clone(), (para.random::<f64>(), para.random::<u64>()));
    }

    let intro = checker.pick_str(&mut main, INTROS);
    b.push(CLINICIAN, intro);
    let reply = checker.pick_str(&mut main, INTRO_REPLIES);
    b.push(PARTICIPANT, reply);

    let wanted = |id: &str| spec.sections.is_empty() || spec.sections.iter().any(|s| s == id);
    let mut truth_sections = Vec::new();
    let mut gold = BTreeMap::new();
    let mut stated: BTreeMap<String, usize> = BTreeMap::new();
    let mut first_section = true;
    for set in schema.sections() {
        let drop = main.random_bool(spec.section_drop_rate);
        if !wanted(&set.section_id) || drop {
            truth_sections.push(SectionSegments {
                section_id: set.section_id.clone(),
                present: false,
                sessions: Vec::new(),
            });
            continue;
        }
        if !first_section {
            let t = checker.pick_str(&mut main, TRANSITIONS);
            b.push(CLINICIAN, t);
        }
        first_section = false;
        let asked = asked_questions(set, spec.skip_optional_rate, &mut main);
        let mut starts = Vec::with_capacity(asked.len());
        for q in &asked {
            let (u, s) = para_draws[&q.qid];
            let text = if u < spec.paraphrase_rate {
                paraphrase(&q.text, &mut ChaCha8Rng::seed_from_u64(s))
            } else {
                q.text.clone()
            };
            starts.push((q.qid.clone(), b.push(CLINICIAN, text)));
            let answer = answer_for(q, schema, &planted, &mut stated, &checker, &mut main);
            b.push(PARTICIPANT, answer);
            b.fillers(&mut main, spec.filler_turns);
            for v in &q.variables {
                if let Some(val) = planted.get(v) {
                    gold.insert(v.clone(), val.clone());
                }
            }
        }
        truth_sections.push(SectionSegments {
            section_id: set.section_id.clone(),
            present: true,
            // ends are patched once the next section's start is known
            sessions: starts.into_iter().map(|(q, s)| Session::new(q, s, s)).collect(),
        });
    }
    let closing = checker.pick_str(&mut main, CLOSINGS);
    let closing_at = b.push(CLINICIAN, closing);

    // session ends: the next question in the section, else the next present
    // section's first question, else the closing turn
    let starts: Vec<Option<usize>> = truth_sections
        .iter()
        .map(|s| s.sessions.first().map(|x| x.start_utt))
        .collect();
    for (k, sec) in truth_sections.iter_mut().enumerate() {
        let next_section = starts[k + 1..].iter().flatten().next().copied().unwrap_or(closing_at);
        let n = sec.sessions.len();
        for i in 0..n {
            sec.sessions[i].end_utt = if i + 1 < n {
                sec.sessions[i + 1].start_utt
            } else {
                next_section
            };
        }
    }

    for rule_id in schema.rule_order() {
        let var = schema.variable(rule_id).expect("ordered rules are declared");
        if let Ok(v) = evaluate_rule(var, &gold) {
            gold.insert(rule_id.clone(), v);
        }
    }

    let utterances: Vec<Utterance> = b
        .utterances
        .into_iter()
        .enumerate()
        .map(|(i, (speaker, text))| Utterance::from_text(i, speaker, add_noise(&text, spec.asr_noise_rate, &mut noise)))
        .collect();
    let transcript = Transcript {
        interview_id: interview_id.clone(),
        source: Source::Verbatim,
        utterances,
    };
    let diarized = diarized_view(&transcript, spec, &mut noise);
    Ok(SynthInterview {
        truth: SegmentedInterview {
            interview_id: interview_id.clone(),
            sections: truth_sections,
        },
        gold: GoldAssessment {
            interview_id,
            values: gold,
        },
        transcript,
        diarized,
    })
}

fn answer_for(
    q: &Question,
    schema: &Schema,
    planted: &BTreeMap<String, Value>,
    stated: &mut BTreeMap<String, usize>,
    checker: &Checker,
    rng: &mut ChaCha8Rng,
) -> String {
    for v in &q.variables {
        let (Some(var), Some(value)) = (schema.variable(v), planted.get(v)) else {
            continue;
        };
        match var.var_type {
            VarType::Scale | VarType::Category | VarType::Measure if !stated.contains_key(v) => {
                stated.insert(v.clone(), 1);
                let mut c = value_answers(var, value);
                c.shuffle(rng);
                if let Some(a) = c.iter().find(|a| checker.safe(a)) {
                    return a.clone();
                }
            }
            VarType::Notes => {
                // walk through the planted slots one sentence at a time
                let Value::Text(note) = value else { continue };
                let parts: Vec<&str> = note.split(". ").collect();
                let i = stated.entry(v.clone()).or_insert(0);
                let part = parts[*i % parts.len()];
                *i += 1;
                let detail = part.split_once(": ").map_or(part, |(_, d)| d).trim_end_matches('.');
                let candidates = vec![
                    format!("Well, {detail}."),
                    format!("I guess {detail}."),
                    format!("{}.", capitalize(detail)),
                ];
                let pick = checker.pick(rng, &candidates);
                if pick != "Mm-hmm." {
                    return pick;
                }
            }
            _ => {}
        }
    }
    checker.pick_str(rng, GENERIC_ANSWERS)
}

/// ASR-style copy: speakers renamed (and sometimes swapped), word noise, and
/// boundary words moved to the previous turn.
fn diarized_view(t: &Transcript, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Transcript {
    let swap = rng.random_bool(0.5);
    let label = |s: &str| {
        let clin = (s == CLINICIAN) != swap;
        if clin { "SPEAKER_00" } else { "SPEAKER_01" }.to_string()
    };
    let mut turns: Vec<(String, Vec<String>)> = t
        .utterances
        .iter()
        .map(|u| {
            let words = tokenize(&add_noise(&u.text, spec.asr_noise_rate, rng))
                .into_iter()
                .map(|w| w.text)
                .collect();
            (label(&u.speaker), words)
        })
        .collect();
    for i in 1..turns.len() {
        if turns[i].1.len() >= 2 && rng.random_bool(spec.boundary_shift_rate) {
            let w = turns[i].1.remove(0);
            turns[i - 1].1.push(w);
        }
    }
    Transcript {
        interview_id: t.interview_id.clone(),
        source: Source::Diarized,
        utterances: turns
            .into_iter()
            .enumerate()
            .map(|(i, (speaker, words))| {
                let words: Vec<_> = words.into_iter().map(crate::corpus::Word::new).collect();
                let text = join_words(&words);
                Utterance {
                    id: i,
                    speaker,
                    text,
                    words,
                }
            })
            .collect(),
    }
}

pub fn generate(spec: &SynthSpec, schema: &Schema) -> Result<SynthInterview> {
    generate_at(spec, schema, 0)
}

pub fn generate_corpus(spec: &SynthSpec, schema: &Schema) -> Result<Vec<SynthInterview>> {
    (0..spec.interviews).map(|i| generate_at(spec, schema, i)).collect()
}

fn answer_json(reason: &str, answer: serde_json::Value) -> serde_json::Value {
    serde_json::json!({ "reason": reason, "answer": answer })
}

fn perturb(var: &VariableSpec, v: &Value, rng: &mut impl Rng) -> serde_json::Value {
    if rng.random_bool(0.25) {
        return serde_json::json!("NA");
    }
    let n = v.as_i64().unwrap_or(0);
    match var.var_type {
        VarType::Scale => {
            let (lo, hi) = var.range_bounds().unwrap_or((n, n));
            let up = if n == hi {
                false
            } else {
                n == lo || rng.random_bool(0.5)
            };
            serde_json::json!(if up { n + 1 } else { n - 1 }.clamp(lo, hi))
        }
        VarType::Category => {
            let others: Vec<i64> = var.prompt_fields.labels.keys().copied().filter(|k| *k != n).collect();
            serde_json::json!(others.choose(rng).copied().unwrap_or(n))
        }
        _ => serde_json::json!(n + rng.random_range(1..=3)),
    }
}

/// Canned mock-provider responses keyed `interview/variable[/stage]`.
/// Answers follow gold except for a `mock_noise_rate` share of deviations.
pub fn mock_responses(
    corpus: &[SynthInterview],
    schema: &Schema,
    spec: &SynthSpec,
) -> BTreeMap<String, serde_json::Value> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x00C0_FFEE);
    let mut out = BTreeMap::new();
    for it in corpus {
        let iid = &it.transcript.interview_id;
        for var in schema.variables() {
            let gold = it.gold.values.get(&var.var_id);
            match var.var_type {
                VarType::Scale | VarType::Category | VarType::Measure => {
                    let Some(g) = gold else { continue };
                    let answer = if rng.random_bool(spec.mock_noise_rate) {
                        perturb(var, g, &mut rng)
                    } else {
                        serde_json::to_value(g).expect("values serialize")
                    };
                    out.insert(
                        format!("{iid}/{}", var.var_id),
                        answer_json("based on the participant's answer", answer),
                    );
                }
                VarType::Notes => {
                    let Some(Value::Text(note)) = gold else { continue };
                    let slots = &var.prompt_fields.slots;
                    let present: BTreeMap<&str, bool> = slots
                        .iter()
                        .map(|s| (s.as_str(), note.contains(&format!("{s}:"))))
                        .collect();
                    let fill = |with: &dyn Fn(&str) -> bool| -> serde_json::Value {
                        slots
                            .iter()
                            .map(|s| {
                                let text = if with(s) { slot_detail(s) } else { String::new() };
                                (s.clone(), serde_json::Value::String(text))
                            })
                            .collect::<serde_json::Map<_, _>>()
                            .into()
                    };
                    out.insert(format!("{iid}/{}/gold_fill", var.var_id), fill(&|s| present[s]));
                    let mut predicted = BTreeMap::new();
                    for s in slots {
                        let flip = rng.random_bool(spec.mock_noise_rate);
                        predicted.insert(s.as_str(), present[s.as_str()] != flip);
                    }
                    out.insert(format!("{iid}/{}/fill", var.var_id), fill(&|s| predicted[s]));
                    for s in slots {
                        let yes = if predicted[s.as_str()] { "yes" } else { "no" };
                        out.insert(
                            format!("{iid}/{}/slot/{s}", var.var_id),
                            answer_json("checked the formatted data", serde_json::json!(yes)),
                        );
                    }
                }
                VarType::Rule => {}
            }
        }
    }
    out
}

/// Writes `transcripts/`, `diarized/`, `truth/`, `gold.json` and
/// `mock_llm.json` under `dir`.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    corpus: &[SynthInterview],
    mock: &BTreeMap<String, serde_json::Value>,
) -> Result<()> {
    let dir = dir.as_ref();
    for it in corpus {
        let id = &it.transcript.interview_id;
        write_transcript(dir.join("transcripts").join(format!("{id}.json")), &it.transcript)?;
        write_transcript(dir.join("diarized").join(format!("{id}.json")), &it.diarized)?;
        write_json(dir.join("truth").join(format!("{id}.json")), &it.truth)?;
    }
    let gold: Vec<&GoldAssessment> = corpus.iter().map(|c| &c.gold).collect();
    write_json(dir.join("gold.json"), &gold)?;
    write_json(dir.join("mock_llm.json"), mock)
}
