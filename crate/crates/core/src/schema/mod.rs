//! Question sets, the five-type variable model, rule evaluation and scale
//! grouping.

pub mod rule;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::segment::{SegmentedInterview, Session};
use rule::{RuleError, RuleExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarType {
    Scale,
    Category,
    Measure,
    Notes,
    Rule,
}

impl VarType {
    pub fn as_str(self) -> &'static str {
        match self {
            VarType::Scale => "scale",
            VarType::Category => "category",
            VarType::Measure => "measure",
            VarType::Notes => "notes",
            VarType::Rule => "rule",
        }
    }
}

/// Unit of a Measure variable; months are compared with a configurable
/// tolerance during evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureUnit {
    #[default]
    Count,
    Years,
    Months,
    Real,
}

/// Replaceable prompt patterns plus answer-space declarations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptFields {
    pub keywords: String,
    pub symptom: String,
    pub attributes: Vec<String>,
    /// Score → label, for Scale and Rule variables.
    pub range: BTreeMap<i64, String>,
    /// Code → label, for Category variables.
    pub labels: BTreeMap<i64, String>,
    /// Free-text description of a Measure's value, rendered into the prompt.
    pub value_type: String,
    pub unit: MeasureUnit,
    /// Slot names for Notes variables; may be empty until induced.
    pub slots: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableSpec {
    pub var_id: String,
    pub var_type: VarType,
    #[serde(default)]
    pub section_id: String,
    #[serde(default)]
    pub prompt_fields: PromptFields,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rule_expr: Option<String>,
    #[serde(default)]
    pub related: Vec<String>,
    #[serde(default)]
    pub scale_groupable: bool,
}

impl VariableSpec {
    /// Declared integer range (min, max) for scale and ranged rule variables.
    pub fn range_bounds(&self) -> Option<(i64, i64)> {
        let r = &self.prompt_fields.range;
        Some((*r.keys().next()?, *r.keys().next_back()?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub qid: String,
    pub text: String,
    pub core: bool,
    #[serde(default)]
    pub parent: Option<String>,
    #[serde(default)]
    pub recurrent: bool,
    #[serde(default)]
    pub variables: Vec<String>,
}

/// One interview section: its questions in interview order and the variables
/// they feed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSet {
    pub section_id: String,
    pub questions: Vec<Question>,
    #[serde(default)]
    pub variables: Vec<VariableSpec>,
}

impl QuestionSet {
    pub fn core_questions(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter().filter(|q| q.core)
    }

    pub fn optional_questions(&self) -> impl Iterator<Item = &Question> {
        self.questions.iter().filter(|q| !q.core)
    }
}

/// A typed assessment value. Booleans only occur as Notes slot answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Real(f64),
    Text(String),
}

impl Value {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(v) => Some(*v as f64),
            Value::Real(v) => Some(*v),
            Value::Bool(_) | Value::Text(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int(v) => Some(*v),
            Value::Real(v) if v.fract() == 0.0 && v.is_finite() => Some(*v as i64),
            _ => None,
        }
    }

    /// Integral reals collapse to `Int`.
    pub fn from_f64(v: f64) -> Value {
        if v.fract() == 0.0 && v.is_finite() && v.abs() < 9.0e15 {
            Value::Int(v as i64)
        } else {
            Value::Real(v)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScaleGroup {
    #[serde(rename = "0")]
    G0,
    #[serde(rename = "1")]
    G1,
    #[serde(rename = "2+")]
    G2Plus,
}

impl ScaleGroup {
    pub fn index(self) -> i64 {
        match self {
            ScaleGroup::G0 => 0,
            ScaleGroup::G1 => 1,
            ScaleGroup::G2Plus => 2,
        }
    }
}

/// Collapses a 0-4 severity score into the 0 / 1 / 2+ groups.
pub fn group_scale(v: i64) -> Result<ScaleGroup, RuleError> {
    match v {
        0 => Ok(ScaleGroup::G0),
        1 => Ok(ScaleGroup::G1),
        2..=4 => Ok(ScaleGroup::G2Plus),
        _ => Err(RuleError::Range {
            value: v as f64,
            lo: 0,
            hi: 4,
        }),
    }
}

/// A validated set of sections with lookup indices and compiled rules.
#[derive(Debug, Clone)]
pub struct Schema {
    sections: Vec<QuestionSet>,
    var_index: HashMap<String, (usize, usize)>,
    question_index: HashMap<String, (usize, usize)>,
    rules: HashMap<String, RuleExpr>,
    rule_order: Vec<String>,
}

impl Schema {
    pub fn new(mut sections: Vec<QuestionSet>) -> Result<Schema> {
        if sections.is_empty() {
            return Err(Error::schema("schema declares no sections"));
        }
        let mut section_ids = BTreeSet::new();
        let mut var_index = HashMap::new();
        let mut question_index = HashMap::new();
        for (si, set) in sections.iter_mut().enumerate() {
            if set.section_id.trim().is_empty() {
                return Err(Error::schema("empty section_id"));
            }
            if !section_ids.insert(set.section_id.clone()) {
                return Err(Error::schema(format!("duplicate section {}", set.section_id)));
            }
            if set.core_questions().next().is_none() {
                return Err(Error::schema(format!(
                    "section {} requires ≥1 core question",
                    set.section_id
                )));
            }
            for (qi, q) in set.questions.iter().enumerate() {
                if q.qid.trim().is_empty() {
                    return Err(Error::schema(format!("empty qid in section {}", set.section_id)));
                }
                if question_index.insert(q.qid.clone(), (si, qi)).is_some() {
                    return Err(Error::schema(format!("duplicate qid {}", q.qid)));
                }
            }
            for (vi, var) in set.variables.iter_mut().enumerate() {
                if var.section_id.is_empty() {
                    var.section_id = set.section_id.clone();
                } else if var.section_id != set.section_id {
                    return Err(Error::schema(format!(
                        "variable {} declares section {} but sits in {}",
                        var.var_id, var.section_id, set.section_id
                    )));
                }
                if var_index.insert(var.var_id.clone(), (si, vi)).is_some() {
                    return Err(Error::schema(format!("duplicate variable {}", var.var_id)));
                }
            }
        }

        for set in &sections {
            let local: HashMap<&str, &Question> = set.questions.iter().map(|q| (q.qid.as_str(), q)).collect();
            for q in &set.questions {
                for v in &q.variables {
                    if !var_index.contains_key(v) {
                        return Err(Error::schema(format!(
                            "question {} references undeclared variable {v}",
                            q.qid
                        )));
                    }
                }
                if let Some(parent) = &q.parent {
                    if !local.contains_key(parent.as_str()) {
                        return Err(Error::schema(format!(
                            "question {} has undeclared parent {parent}",
                            q.qid
                        )));
                    }
                } else if !q.core {
                    return Err(Error::schema(format!("optional question {} has no parent", q.qid)));
                }
                // parent chains must terminate
                let mut cur = q;
                for _ in 0..=set.questions.len() {
                    match cur.parent.as_deref() {
                        Some(p) => cur = local[p],
                        None => break,
                    }
                }
                if cur.parent.is_some() {
                    return Err(Error::schema(format!("cyclic parent chain at {}", q.qid)));
                }
            }
        }

        let mut rules = HashMap::new();
        for set in &sections {
            for var in &set.variables {
                validate_variable(var)?;
                if var.var_type == VarType::Rule {
                    for r in &var.related {
                        if !var_index.contains_key(r) {
                            return Err(Error::schema(format!(
                                "rule {} relates to undeclared variable {r}",
                                var.var_id
                            )));
                        }
                    }
                    let src = var.rule_expr.as_deref().unwrap_or_default();
                    let expr = RuleExpr::parse(src).map_err(|e| Error::schema(format!("rule {}: {e}", var.var_id)))?;
                    for r in expr.references() {
                        if !var.related.contains(&r) {
                            return Err(Error::schema(format!(
                                "rule {} references {r} which is not in its related list",
                                var.var_id
                            )));
                        }
                    }
                    rules.insert(var.var_id.clone(), expr);
                }
            }
        }

        let mut schema = Schema {
            sections,
            var_index,
            question_index,
            rules,
            rule_order: Vec::new(),
        };
        schema.rule_order = schema.topological_rules()?;
        Ok(schema)
    }

    /// Rule variables ordered so that every rule follows the rules it
    /// depends on. Cycles are a schema error.
    fn topological_rules(&self) -> Result<Vec<String>> {
        #[derive(Clone, Copy, PartialEq)]
        enum Mark {
            Temp,
            Done,
        }
        fn visit(schema: &Schema, id: &str, marks: &mut HashMap<String, Mark>, out: &mut Vec<String>) -> Result<()> {
            match marks.get(id) {
                Some(Mark::Done) => return Ok(()),
                Some(Mark::Temp) => return Err(Error::schema(format!("cyclic rule dependency through {id}"))),
                None => {}
            }
            let Some(var) = schema.variable(id) else {
                return Ok(());
            };
            if var.var_type != VarType::Rule {
                return Ok(());
            }
            marks.insert(id.to_string(), Mark::Temp);
            for dep in &var.related {
                visit(schema, dep, marks, out)?;
            }
            marks.insert(id.to_string(), Mark::Done);
            out.push(id.to_string());
            Ok(())
        }
        let mut marks = HashMap::new();
        let mut out = Vec::new();
        for var in self.variables() {
            visit(self, &var.var_id, &mut marks, &mut out)?;
        }
        Ok(out)
    }

    pub fn sections(&self) -> &[QuestionSet] {
        &self.sections
    }

    pub fn into_sections(self) -> Vec<QuestionSet> {
        self.sections
    }

    pub fn section(&self, section_id: &str) -> Option<&QuestionSet> {
        self.sections.iter().find(|s| s.section_id == section_id)
    }

    pub fn variables(&self) -> impl Iterator<Item = &VariableSpec> {
        self.sections.iter().flat_map(|s| s.variables.iter())
    }

    pub fn variable(&self, var_id: &str) -> Option<&VariableSpec> {
        self.var_index.get(var_id).map(|&(s, v)| &self.sections[s].variables[v])
    }

    pub fn question(&self, qid: &str) -> Option<&Question> {
        self.question_index
            .get(qid)
            .map(|&(s, q)| &self.sections[s].questions[q])
    }

    /// Position of a question within its section.
    pub fn question_position(&self, qid: &str) -> Option<(usize, usize)> {
        self.question_index.get(qid).copied()
    }

    pub fn section_index(&self, section_id: &str) -> Option<usize> {
        self.sections.iter().position(|s| s.section_id == section_id)
    }

    pub fn rule(&self, var_id: &str) -> Option<&RuleExpr> {
        self.rules.get(var_id)
    }

    /// Rule variable ids in dependency order.
    pub fn rule_order(&self) -> &[String] {
        &self.rule_order
    }

    /// Questions (any section) that feed `var_id`.
    pub fn questions_for_variable<'a>(&'a self, var_id: &'a str) -> impl Iterator<Item = &'a Question> {
        self.sections
            .iter()
            .flat_map(|s| s.questions.iter())
            .filter(move |q| q.variables.iter().any(|v| v == var_id))
    }

    /// Checks a gold value against its variable and normalises it to the
    /// canonical representation (integral reals become ints).
    pub fn check_value(&self, var_id: &str, value: &Value) -> Result<Value> {
        let var = self
            .variable(var_id)
            .ok_or_else(|| Error::schema(format!("unknown variable {var_id}")))?;
        check_value(var, value).map_err(Error::Schema)
    }
}

fn validate_variable(var: &VariableSpec) -> Result<()> {
    let pf = &var.prompt_fields;
    match var.var_type {
        VarType::Scale => {
            let Some((lo, hi)) = var.range_bounds() else {
                return Err(Error::schema(format!("scale {} declares no range", var.var_id)));
            };
            if (hi - lo + 1) as usize != pf.range.len() {
                return Err(Error::schema(format!("scale {} range is not contiguous", var.var_id)));
            }
        }
        VarType::Category => {
            if pf.labels.is_empty() {
                return Err(Error::schema(format!("category {} declares no labels", var.var_id)));
            }
        }
        VarType::Rule => {
            if var.related.is_empty() || var.rule_expr.as_deref().is_none_or(|s| s.trim().is_empty()) {
                return Err(Error::schema(format!(
                    "rule {} needs a rule_expr and related variables",
                    var.var_id
                )));
            }
        }
        VarType::Notes => {
            let mut seen = BTreeSet::new();
            for s in &pf.slots {
                if s.trim().is_empty() || !seen.insert(s.as_str()) {
                    return Err(Error::schema(format!(
                        "notes {} has an empty or duplicate slot",
                        var.var_id
                    )));
                }
            }
        }
        VarType::Measure => {}
    }
    Ok(())
}

/// Type- and range-checks `value` for `var`.
pub fn check_value(var: &VariableSpec, value: &Value) -> std::result::Result<Value, String> {
    let id = &var.var_id;
    match var.var_type {
        VarType::Scale | VarType::Rule => {
            let Some(x) = value.as_f64() else {
                return Err(format!("{id}: expected a number, got {value:?}"));
            };
            match var.range_bounds() {
                Some((lo, hi)) => {
                    let v = value
                        .as_i64()
                        .ok_or_else(|| format!("{id}: expected an integer, got {x}"))?;
                    if v < lo || v > hi {
                        return Err(format!("{id}: value {v} outside range {lo}..={hi}"));
                    }
                    Ok(Value::Int(v))
                }
                None => Ok(Value::from_f64(x)),
            }
        }
        VarType::Category => {
            let v = value
                .as_i64()
                .ok_or_else(|| format!("{id}: expected a category code, got {value:?}"))?;
            if !var.prompt_fields.labels.contains_key(&v) {
                return Err(format!("{id}: unknown category code {v}"));
            }
            Ok(Value::Int(v))
        }
        VarType::Measure => value
            .as_f64()
            .map(Value::from_f64)
            .ok_or_else(|| format!("{id}: expected a number, got {value:?}")),
        VarType::Notes => match value {
            Value::Text(_) => Ok(value.clone()),
            _ => Err(format!("{id}: expected note text, got {value:?}")),
        },
    }
}

/// Computes a rule variable from the values of its related variables.
pub fn evaluate_rule(var: &VariableSpec, values: &BTreeMap<String, Value>) -> std::result::Result<Value, RuleError> {
    let src = var.rule_expr.as_deref().unwrap_or_default();
    let expr = RuleExpr::parse(src)?;
    evaluate_compiled(var, &expr, values)
}

pub fn evaluate_compiled(
    var: &VariableSpec,
    expr: &RuleExpr,
    values: &BTreeMap<String, Value>,
) -> std::result::Result<Value, RuleError> {
    let mut env = HashMap::new();
    for dep in &var.related {
        let v = values
            .get(dep)
            .ok_or_else(|| RuleError::MissingDependency(dep.clone()))?;
        let x = v.as_f64().ok_or_else(|| RuleError::NonNumeric(dep.clone()))?;
        env.insert(dep.as_str(), x);
    }
    let out = expr.eval(&|name| env.get(name).copied())?;
    match var.range_bounds() {
        Some((lo, hi)) => {
            if out.fract() != 0.0 || !out.is_finite() {
                return Err(RuleError::NotIntegral(out));
            }
            if out < lo as f64 || out > hi as f64 {
                return Err(RuleError::Range { value: out, lo, hi });
            }
            Ok(Value::Int(out as i64))
        }
        None => Ok(Value::from_f64(out)),
    }
}

/// All sessions whose question feeds `var`, in transcript order.
pub fn resolve_variable_sessions(var: &VariableSpec, seg: &SegmentedInterview, schema: &Schema) -> Vec<Session> {
    let mut out: Vec<Session> = seg
        .sections
        .iter()
        .filter(|s| s.present)
        .flat_map(|s| s.sessions.iter())
        .filter(|sess| {
            schema
                .question(&sess.question_id)
                .is_some_and(|q| q.variables.contains(&var.var_id))
        })
        .cloned()
        .collect();
    out.sort_by_key(|s| (s.start_utt, s.end_utt));
    out.dedup();
    out
}
