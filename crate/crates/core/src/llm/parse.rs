//! Turning raw model output into typed answers.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::schema::{check_value, Value, VarType, VariableSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidKind {
    /// No JSON object with an "answer" key could be found.
    Format,
    Range,
    Type,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    Parsed { value: Value },
    Abstention,
    Invalid { kind: InvalidKind, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub reason: String,
    pub outcome: Outcome,
    pub raw: String,
}

impl ParsedAnswer {
    pub fn value(&self) -> Option<&Value> {
        match &self.outcome {
            Outcome::Parsed { value } => Some(value),
            _ => None,
        }
    }
}

/// The whole string if it is a JSON object, else the first balanced `{...}`
/// substring that is.
pub fn extract_object(raw: &str) -> Option<Map<String, Json>> {
    if let Ok(Json::Object(m)) = serde_json::from_str::<Json>(raw.trim()) {
        return Some(m);
    }
    let bytes = raw.as_bytes();
    for (start, _) in raw.char_indices().filter(|&(_, c)| c == '{') {
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(Json::Object(m)) = serde_json::from_str::<Json>(&raw[start..=end]) {
                return Some(m);
            }
        }
    }
    None
}

/// The whole string if it is a JSON array, else the first balanced `[...]`
/// substring that is.
pub fn extract_array(raw: &str) -> Option<Vec<Json>> {
    if let Ok(Json::Array(v)) = serde_json::from_str::<Json>(raw.trim()) {
        return Some(v);
    }
    let bytes = raw.as_bytes();
    for (start, _) in raw.char_indices().filter(|&(_, c)| c == '[') {
        if let Some(end) = balanced_end(bytes, start) {
            if let Ok(Json::Array(v)) = serde_json::from_str::<Json>(&raw[start..=end]) {
                return Some(v);
            }
        }
    }
    None
}

/// Index of the bracket closing the one at `start`, honouring JSON strings.
fn balanced_end(bytes: &[u8], start: usize) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_str = false;
    let mut escaped = false;
    for (i, &b) in bytes.iter().enumerate().skip(start) {
        if in_str {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_str = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_str = true,
            b'{' | b'[' => depth += 1,
            b'}' | b']' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn is_na(s: &str) -> bool {
    let s = s.trim().trim_end_matches('.').to_ascii_lowercase();
    matches!(s.as_str(), "" | "na" | "n/a" | "none" | "null" | "unknown")
}

fn invalid(kind: InvalidKind, message: impl Into<String>) -> Outcome {
    Outcome::Invalid {
        kind,
        message: message.into(),
    }
}

/// First number in a string such as "about 12 times".
fn leading_number(s: &str) -> Option<f64> {
    if let Ok(x) = s.trim().parse::<f64>() {
        return x.is_finite().then_some(x);
    }
    let start = s.find(|c: char| c.is_ascii_digit())?;
    let neg = s[..start].ends_with('-');
    let tail = &s[start..];
    let end = tail
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(tail.len());
    let x: f64 = tail[..end].trim_end_matches('.').parse().ok()?;
    Some(if neg { -x } else { x })
}

fn coerce(answer: &Json, var: &VariableSpec) -> Outcome {
    if answer.is_null() {
        return Outcome::Abstention;
    }
    let text = answer.as_str();
    match var.var_type {
        VarType::Notes => match answer {
            Json::Bool(b) => Outcome::Parsed { value: Value::Bool(*b) },
            Json::String(s) => {
                let s = s.trim().trim_end_matches('.').to_ascii_lowercase();
                match s.as_str() {
                    "yes" | "true" => Outcome::Parsed {
                        value: Value::Bool(true),
                    },
                    "no" | "false" => Outcome::Parsed {
                        value: Value::Bool(false),
                    },
                    _ if is_na(&s) => Outcome::Abstention,
                    _ => invalid(InvalidKind::Type, format!("expected yes or no, got {s:?}")),
                }
            }
            other => invalid(InvalidKind::Type, format!("expected yes or no, got {other}")),
        },
        VarType::Category => {
            let labels = &var.prompt_fields.labels;
            if let Some(s) = text {
                let t = s.trim();
                if let Some((code, _)) = labels.iter().find(|(_, l)| l.eq_ignore_ascii_case(t)) {
                    return Outcome::Parsed {
                        value: Value::Int(*code),
                    };
                }
                if is_na(t) {
                    return Outcome::Abstention;
                }
            }
            let code = match answer {
                Json::Number(n) => n
                    .as_i64()
                    .or_else(|| n.as_f64().filter(|x| x.fract() == 0.0).map(|x| x as i64)),
                Json::String(s) => s.trim().parse::<i64>().ok(),
                _ => None,
            };
            match code {
                Some(c) if labels.contains_key(&c) => Outcome::Parsed { value: Value::Int(c) },
                Some(c) => invalid(InvalidKind::Range, format!("unknown category code {c}")),
                None => invalid(InvalidKind::Type, format!("not a category: {answer}")),
            }
        }
        VarType::Scale | VarType::Rule | VarType::Measure => {
            if text.is_some_and(is_na) {
                return Outcome::Abstention;
            }
            let x = match answer {
                Json::Number(n) => n.as_f64(),
                Json::String(s) if var.var_type == VarType::Measure => leading_number(s),
                Json::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            let Some(x) = x.filter(|x| x.is_finite()) else {
                return invalid(InvalidKind::Type, format!("not a number: {answer}"));
            };
            if var.var_type != VarType::Measure && x.fract() != 0.0 {
                return invalid(InvalidKind::Type, format!("expected an integer, got {x}"));
            }
            match check_value(var, &Value::from_f64(x)) {
                Ok(v) => Outcome::Parsed { value: v },
                Err(m) => invalid(InvalidKind::Range, m),
            }
        }
    }
}

/// Parses a model response against `var`. Never fails: problems are
/// recorded in the outcome.
pub fn parse_answer(raw: &str, var: &VariableSpec) -> ParsedAnswer {
    let Some(obj) = extract_object(raw) else {
        return ParsedAnswer {
            reason: String::new(),
            outcome: invalid(InvalidKind::Format, "no JSON object in response"),
            raw: raw.to_string(),
        };
    };
    let reason = match obj.get("reason") {
        Some(Json::String(s)) => s.clone(),
        Some(other) => other.to_string(),
        None => String::new(),
    };
    let outcome = match obj.get("answer") {
        Some(a) => coerce(a, var),
        None => invalid(InvalidKind::Format, "response object has no \"answer\" key"),
    };
    ParsedAnswer {
        reason,
        outcome,
        raw: raw.to_string(),
    }
}
