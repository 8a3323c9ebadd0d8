//! On-disk artifacts: transcripts, question-set schemas, gold assessments and
//! generic JSON reports.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{QuestionSet, Schema, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Word {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_ms: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_ms: Option<i64>,
}

impl Word {
    pub fn new(text: impl Into<String>) -> Word {
        Word {
            text: text.into(),
            start_ms: None,
            end_ms: None,
        }
    }

    pub fn timed(text: impl Into<String>, start_ms: i64, end_ms: i64) -> Word {
        Word {
            text: text.into(),
            start_ms: Some(start_ms),
            end_ms: Some(end_ms),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: usize,
    pub speaker: String,
    pub text: String,
    pub words: Vec<Word>,
}

impl Utterance {
    /// Builds an utterance from text, tokenizing on whitespace.
    pub fn from_text(id: usize, speaker: impl Into<String>, text: impl Into<String>) -> Utterance {
        let text = text.into();
        Utterance {
            id,
            speaker: speaker.into(),
            words: tokenize(&text),
            text,
        }
    }

    pub fn from_words(id: usize, speaker: impl Into<String>, words: Vec<Word>) -> Utterance {
        let text = join_words(&words);
        Utterance {
            id,
            speaker: speaker.into(),
            text,
            words,
        }
    }
}

pub fn tokenize(text: &str) -> Vec<Word> {
    text.split_whitespace().map(Word::new).collect()
}

pub fn join_words(words: &[Word]) -> String {
    let parts: Vec<&str> = words.iter().map(|w| w.text.as_str()).collect();
    parts.join(" ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Diarized,
    Verbatim,
    Merged,
    Reference,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Diarized => "diarized",
            Source::Verbatim => "verbatim",
            Source::Merged => "merged",
            Source::Reference => "reference",
        })
    }
}

impl FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Source> {
        match s {
            "diarized" => Ok(Source::Diarized),
            "verbatim" => Ok(Source::Verbatim),
            "merged" => Ok(Source::Merged),
            "reference" => Ok(Source::Reference),
            other => Err(Error::schema(format!("unknown transcript source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    pub interview_id: String,
    pub source: Source,
    pub utterances: Vec<Utterance>,
}

impl Transcript {
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// All words in utterance order, paired with the owning utterance index.
    pub fn word_stream(&self) -> Vec<(usize, &Word)> {
        self.utterances
            .iter()
            .enumerate()
            .flat_map(|(i, u)| u.words.iter().map(move |w| (i, w)))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.interview_id.trim().is_empty() {
            return Err(Error::schema("interview_id is empty"));
        }
        for (i, u) in self.utterances.iter().enumerate() {
            if u.id != i {
                return Err(Error::schema(format!(
                    "non-dense utterance ids: expected {i}, found {}",
                    u.id
                )));
            }
            if u.words.is_empty() {
                return Err(Error::schema(format!("utterance {i} has no words")));
            }
            for w in &u.words {
                if w.text.trim().is_empty() {
                    return Err(Error::schema(format!("utterance {i} has an empty word")));
                }
                if let (Some(s), Some(e)) = (w.start_ms, w.end_ms) {
                    if s > e {
                        return Err(Error::schema(format!(
                            "utterance {i}: word {:?} ends before it starts",
                            w.text
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct RawTranscript {
    interview_id: String,
    #[serde(default)]
    source: Option<Source>,
    utterances: Vec<RawUtterance>,
}

#[derive(Deserialize)]
struct RawUtterance {
    id: usize,
    speaker: String,
    text: String,
    #[serde(default)]
    words: Option<Vec<Word>>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn decode<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

/// Decodes transcript JSON. `source` overrides the file's own field.
pub fn transcript_from_str(text: &str, source: Option<Source>) -> Result<Transcript> {
    let raw: RawTranscript = serde_json::from_str(text).map_err(|e| Error::schema(format!("transcript: {e}")))?;
    let source = source
        .or(raw.source)
        .ok_or_else(|| Error::schema("transcript source is not specified"))?;
    let utterances = raw
        .utterances
        .into_iter()
        .map(|u| {
            let words = u.words.unwrap_or_else(|| tokenize(&u.text));
            Utterance {
                id: u.id,
                speaker: u.speaker,
                text: u.text,
                words,
            }
        })
        .collect();
    let t = Transcript {
        interview_id: raw.interview_id,
        source,
        utterances,
    };
    t.validate()?;
    Ok(t)
}

pub fn parse_transcript(path: impl AsRef<Path>, source: Source) -> Result<Transcript> {
    let path = path.as_ref();
    transcript_from_str(&read(path)?, Some(source)).map_err(|e| prefix(path, e))
}

/// Reads a transcript, taking the source from the file itself.
pub fn load_transcript(path: impl AsRef<Path>) -> Result<Transcript> {
    let path = path.as_ref();
    transcript_from_str(&read(path)?, None).map_err(|e| prefix(path, e))
}

fn prefix(path: &Path, e: Error) -> Error {
    match e {
        Error::Schema(m) if !m.starts_with(&path.display().to_string()) => {
            Error::Schema(format!("{}: {m}", path.display()))
        }
        other => other,
    }
}

pub fn write_transcript(path: impl AsRef<Path>, t: &Transcript) -> Result<()> {
    write_json(path, t)
}

/// Accepts either a single object or an array of them. Goes through
/// `serde_json::Value` because untagged enums cannot read integer map keys.
fn one_or_many<T: DeserializeOwned>(text: &str) -> serde_json::Result<Vec<T>> {
    match serde_json::from_str(text)? {
        serde_json::Value::Array(items) => items.into_iter().map(serde_json::from_value).collect(),
        single => Ok(vec![serde_json::from_value(single)?]),
    }
}

pub fn question_sets_from_str(text: &str) -> Result<Vec<QuestionSet>> {
    let sets: Vec<QuestionSet> = one_or_many(text).map_err(|e| Error::schema(format!("question sets: {e}")))?;
    // validation lives in Schema::new; hand back the normalised sections
    Ok(Schema::new(sets)?.into_sections())
}

pub fn parse_question_sets(path: impl AsRef<Path>) -> Result<Vec<QuestionSet>> {
    let path = path.as_ref();
    question_sets_from_str(&read(path)?).map_err(|e| prefix(path, e))
}

pub fn load_schema(path: impl AsRef<Path>) -> Result<Schema> {
    Schema::new(parse_question_sets(path)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldAssessment {
    pub interview_id: String,
    pub values: BTreeMap<String, Value>,
}

pub fn gold_from_str(text: &str, schema: &Schema) -> Result<Vec<GoldAssessment>> {
    let raw: Vec<GoldAssessment> = one_or_many(text).map_err(|e| Error::schema(format!("gold: {e}")))?;
    raw.into_iter()
        .map(|g| {
            let values = g
                .values
                .iter()
                .map(|(k, v)| Ok((k.clone(), schema.check_value(k, v)?)))
                .collect::<Result<_>>()?;
            Ok(GoldAssessment {
                interview_id: g.interview_id,
                values,
            })
        })
        .collect()
}

pub fn parse_gold(path: impl AsRef<Path>, schema: &Schema) -> Result<Vec<GoldAssessment>> {
    let path = path.as_ref();
    gold_from_str(&read(path)?, schema).map_err(|e| prefix(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    decode(path, &read(path)?)
}

/// Pretty JSON with a trailing newline, creating parent directories.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = to_json_string(value);
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable values")
}
