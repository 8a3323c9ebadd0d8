mod support;

use interview_assess::corpus::load_schema;
use interview_assess::llm::{extract_array, extract_object, parse_answer, InvalidKind, Outcome};
use interview_assess::schema::{check_value, Value, VarType, VariableSpec};
use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn variables() -> Vec<VariableSpec> {
    load_schema(support::data_dir().join("schema.json"))
        .unwrap()
        .variables()
        .filter(|v| v.var_type != VarType::Rule)
        .cloned()
        .collect()
}

const PIECES: &[&str] = &[
    "{",
    "}",
    "[",
    "]",
    "\"",
    ":",
    ",",
    "\"answer\"",
    "\"reason\"",
    "null",
    "\"NA\"",
    "3",
    "-1",
    "2.5",
    "1e309",
    "\"yes\"",
    "\"no\"",
    "true",
    "Sure! ",
    "\\",
    "\n",
    "\"Full-Time Gainful Employment\"",
    "é",
    "{\"answer\":",
    "9999999999999999999999",
    "\u{0}",
];

fn fuzz_input(rng: &mut impl Rng) -> String {
    if rng.random_bool(0.5) {
        let n = rng.random_range(0..64);
        let bytes: Vec<u8> = (0..n).map(|_| rng.random()).collect();
        String::from_utf8_lossy(&bytes).into_owned()
    } else {
        let n = rng.random_range(0..16);
        (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect()
    }
}

#[test]
fn parse_is_total_on_fuzzed_input() {
    let vars = variables();
    let mut rng = ChaCha8Rng::seed_from_u64(0xF022);
    for i in 0..10_000 {
        let raw = fuzz_input(&mut rng);
        let var = &vars[i % vars.len()];
        let out = std::panic::catch_unwind(|| parse_answer(&raw, var));
        let parsed = out.unwrap_or_else(|_| panic!("parse_answer panicked on {raw:?}"));
        assert_eq!(parsed.raw, raw);
        if let Outcome::Parsed { value } = &parsed.outcome {
            if var.var_type == VarType::Notes {
                // notes are asked slot by slot and answer yes or no
                assert!(matches!(value, Value::Bool(_)), "{raw:?}");
            } else {
                assert_eq!(check_value(var, value).as_ref(), Ok(value), "{raw:?}");
            }
        }
        let _ = extract_array(&raw);
    }
}

#[test]
fn well_formed_answers_always_parse() {
    for var in variables() {
        let answer = match var.var_type {
            VarType::Scale => Value::Int(var.range_bounds().unwrap().0),
            VarType::Category => Value::Int(*var.prompt_fields.labels.keys().next().unwrap()),
            VarType::Measure => Value::Int(3),
            VarType::Notes => Value::Text("yes".into()),
            VarType::Rule => unreachable!(),
        };
        let raw = serde_json::json!({"reason": "r", "answer": answer}).to_string();
        let p = parse_answer(&raw, &var);
        assert!(
            matches!(p.outcome, Outcome::Parsed { .. }),
            "{}: {:?}",
            var.var_id,
            p.outcome
        );
        assert_eq!(p.reason, "r");
    }
}

#[test]
fn classification_examples() {
    let vars = variables();
    let scale = vars.iter().find(|v| v.var_id == "b01_distress").unwrap();
    let cat = vars.iter().find(|v| v.var_id == "lbi_a1").unwrap();
    let o = |raw: &str, v: &VariableSpec| parse_answer(raw, v).outcome;
    assert_eq!(
        o(r#"{"reason":"r","answer":3}"#, scale),
        Outcome::Parsed { value: Value::Int(3) }
    );
    assert_eq!(
        o(r#"Sure! {"reason":"r","answer":"2"} hope that helps"#, scale),
        Outcome::Parsed { value: Value::Int(2) }
    );
    assert!(matches!(
        o(r#"{"reason":"r","answer":9}"#, scale),
        Outcome::Invalid {
            kind: InvalidKind::Range,
            ..
        }
    ));
    assert_eq!(o(r#"{"reason":"r","answer":"NA"}"#, scale), Outcome::Abstention);
    assert_eq!(o(r#"{"reason":"r","answer":null}"#, scale), Outcome::Abstention);
    assert!(matches!(
        o("no json here", scale),
        Outcome::Invalid {
            kind: InvalidKind::Format,
            ..
        }
    ));
    assert!(matches!(
        o(r#"{"reason":"r"}"#, scale),
        Outcome::Invalid {
            kind: InvalidKind::Format,
            ..
        }
    ));
    let (code, label) = cat.prompt_fields.labels.iter().next().unwrap();
    let raw = serde_json::json!({"reason": "r", "answer": label}).to_string();
    assert_eq!(
        o(&raw, cat),
        Outcome::Parsed {
            value: Value::Int(*code)
        }
    );
}

/// First balanced `{...}` by plain brace counting, ignoring strings.
fn naive_object(raw: &str) -> Option<&str> {
    let start = raw.find('{')?;
    let mut depth = 0usize;
    for (i, c) in raw[start..].char_indices() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&raw[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

proptest! {
    #[test]
    fn extraction_finds_embedded_objects(prefix in "[a-zA-Z !?.]{0,20}", suffix in "[a-zA-Z !?.]{0,20}", n in 0i64..100) {
        let body = format!(r#"{{"reason":"because","answer":{n}}}"#);
        let raw = format!("{prefix}{body}{suffix}");
        prop_assert_eq!(naive_object(&raw), Some(body.as_str()));
        let obj = extract_object(&raw).unwrap();
        prop_assert_eq!(obj.get("answer").and_then(|a| a.as_i64()), Some(n));
    }

    #[test]
    fn arbitrary_strings_never_panic(raw in ".{0,80}") {
        for var in variables().iter().take(6) {
            let _ = parse_answer(&raw, var);
        }
    }
}
