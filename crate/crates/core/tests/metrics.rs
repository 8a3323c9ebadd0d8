mod support;

use interview_assess::assess::{Answer, Prediction, Provenance, SlotComparison, SlotResult};
use interview_assess::corpus::{load_schema, GoldAssessment};
use interview_assess::metrics::{accuracy, bias, evaluate_run, recall_slots, rmse, BiasDenominator, MetricOptions};
use interview_assess::prompt::ShotSetting;
use interview_assess::schema::{group_scale, Schema, Value};
use interview_assess::Error;
use proptest::prelude::*;

fn schema() -> Schema {
    load_schema(support::data_dir().join("schema.json")).unwrap()
}

fn pred(schema: &Schema, iid: &str, var: &str, answer: Option<i64>) -> Prediction {
    let v = schema.variable(var).unwrap();
    Prediction {
        interview_id: iid.into(),
        var_id: var.into(),
        var_type: v.var_type,
        section_id: v.section_id.clone(),
        answer: answer.map_or(Answer::Abstention, |x| Answer::Value { value: Value::Int(x) }),
        reason: String::new(),
        sessions_used: Vec::new(),
        provenance: Provenance {
            provider: "mock".into(),
            setting: ShotSetting::Zero,
            timestamp: "t".into(),
        },
    }
}

fn gold(iid: &str, values: &[(&str, i64)]) -> GoldAssessment {
    GoldAssessment {
        interview_id: iid.into(),
        values: values.iter().map(|(k, v)| (k.to_string(), Value::Int(*v))).collect(),
    }
}

fn nums(p: &[(f64, f64)]) -> Vec<(Option<f64>, f64)> {
    p.iter().map(|&(a, b)| (Some(a), b)).collect()
}

#[test]
fn scalar_fixtures() {
    let all = BiasDenominator::All;
    assert_eq!(accuracy(&[(Some(1), 1), (Some(2), 3)]).unwrap(), 0.5);
    assert_eq!(accuracy(&[(None, 2)]).unwrap(), 0.0);
    assert!(matches!(accuracy::<i64>(&[]), Err(Error::EmptyInput(_))));
    assert_eq!(rmse(&nums(&[(1.0, 2.0), (3.0, 2.0)])).unwrap(), 1.0);
    assert_eq!(rmse(&nums(&[(0.0, 2.0), (4.0, 2.0)])).unwrap(), 2.0);
    assert!(matches!(rmse(&[(None, 1.0)]), Err(Error::EmptyInput(_))));
    assert_eq!(bias(&nums(&[(3.0, 2.0), (1.0, 2.0), (2.0, 2.0)]), all).unwrap(), 0.0);
    assert_eq!(bias(&nums(&[(3.0, 2.0), (4.0, 1.0)]), all).unwrap(), 1.0);
    let b = bias(&nums(&[(3.0, 2.0), (3.0, 2.0), (1.0, 2.0)]), all).unwrap();
    assert!((b - 1.0 / 3.0).abs() < 1e-9);
    // zero residuals only count under the default denominator
    let z = nums(&[(3.0, 2.0), (2.0, 2.0)]);
    assert_eq!(bias(&z, all).unwrap(), 0.5);
    assert_eq!(bias(&z, BiasDenominator::Nonzero).unwrap(), 1.0);
}

fn comparison(slots: &[(Option<bool>, bool)]) -> SlotComparison {
    SlotComparison {
        interview_id: "i".into(),
        notes_var_id: "critaprobenotes".into(),
        slots: slots
            .iter()
            .enumerate()
            .map(|(i, &(g, p))| SlotResult {
                slot: format!("s{i}"),
                gold_present: g,
                predicted_present: p,
                error: None,
            })
            .collect(),
    }
}

#[test]
fn recall_pools_over_notes() {
    let perfect = comparison(&[(Some(true), true), (Some(true), true)]);
    assert_eq!(recall_slots(&[perfect]).unwrap(), 1.0);
    let partial = comparison(&[(Some(true), true), (Some(true), false), (Some(true), true)]);
    assert!((recall_slots(std::slice::from_ref(&partial)).unwrap() - 2.0 / 3.0).abs() < 1e-9);
    let nothing = comparison(&[(Some(false), true), (None, true)]);
    assert!((recall_slots(&[partial, nothing.clone()]).unwrap() - 2.0 / 3.0).abs() < 1e-9);
    assert!(matches!(recall_slots(&[nothing]), Err(Error::EmptyInput(_))));
}

#[test]
fn grouped_scale_counts_what_raw_misses() {
    let s = schema();
    let preds = vec![pred(&s, "a", "b01_distress", Some(3))];
    let g = vec![gold("a", &[("b01_distress", 2)])];
    let r = evaluate_run(&preds, &[], &g, &s, &MetricOptions::default()).unwrap();
    assert_eq!(r.row("scale", "all").unwrap().accuracy, Some(0.0));
    assert_eq!(r.row("scale_g", "all").unwrap().accuracy, Some(1.0));
    assert_eq!(r.row("scale", "CAP").unwrap().count, 1);
}

#[test]
fn metric_sets_follow_the_type() {
    let s = schema();
    let preds = vec![
        pred(&s, "a", "b01_distress", Some(1)),
        pred(&s, "a", "b01_num", Some(4)),
        pred(&s, "a", "thh_hosp", Some(1)),
        pred(&s, "a", "b01_severity", Some(1)),
        pred(&s, "a", "lbi_e1", None),
    ];
    let g = vec![gold(
        "a",
        &[
            ("b01_distress", 2),
            ("b01_num", 3),
            ("thh_hosp", 1),
            ("b01_severity", 2),
            ("lbi_e1", 5),
        ],
    )];
    let r = evaluate_run(&preds, &[], &g, &s, &MetricOptions::default()).unwrap();
    let rule = r.row("rule", "all").unwrap();
    assert!(rule.rmse.is_some() && rule.bias.is_some());
    let cat = r.row("category", "all").unwrap();
    assert_eq!(cat.accuracy, Some(1.0));
    assert!(cat.rmse.is_none() && cat.bias.is_none() && cat.recall.is_none());
    let m = r.row("measure", "all").unwrap();
    assert_eq!(m.bias, Some(1.0));
    assert!(m.rmse.is_none());
    let sc = r.row("scale", "all").unwrap();
    assert_eq!(sc.count, 2);
    assert_eq!(sc.accuracy, Some(0.0));
    // the abstention is excluded from the residual metrics
    assert_eq!(sc.rmse, Some(1.0));
    assert_eq!(sc.bias, Some(-1.0));
    assert!(r.row("scale", "LBI").is_some());
    assert!(r.row("notes", "all").is_none());
    let order: Vec<&str> = r.rows.iter().map(|x| x.var_type.as_str()).collect();
    let mut sorted = order.clone();
    let rank = |t: &str| {
        ["scale", "scale_g", "category", "measure", "notes", "rule"]
            .iter()
            .position(|x| *x == t)
    };
    sorted.sort_by_key(|t| rank(t));
    assert_eq!(order, sorted);
}

#[test]
fn evaluation_needs_overlap_and_known_variables() {
    let s = schema();
    let preds = vec![pred(&s, "a", "b01_distress", Some(1))];
    let g = vec![gold("b", &[("b01_distress", 1)])];
    assert!(matches!(
        evaluate_run(&preds, &[], &g, &s, &MetricOptions::default()),
        Err(Error::EmptyInput(_))
    ));
    let mut bad = pred(&s, "a", "b01_distress", Some(1));
    bad.var_id = "nope".into();
    let g = vec![gold("a", &[("b01_distress", 1)])];
    assert!(matches!(
        evaluate_run(&[bad], &[], &g, &s, &MetricOptions::default()),
        Err(Error::Schema(_))
    ));
}

#[test]
fn notes_rows_report_recall() {
    let s = schema();
    let g = vec![gold("i", &[])];
    let c = comparison(&[(Some(true), true), (Some(true), false)]);
    let r = evaluate_run(&[], &[c], &g, &s, &MetricOptions::default()).unwrap();
    let row = r.row("notes", "CRA").unwrap();
    assert_eq!(row.recall, Some(0.5));
    assert_eq!(row.count, 2);
    assert!(row.accuracy.is_none());
}

fn pairs() -> impl Strategy<Value = Vec<(Option<f64>, f64)>> {
    prop::collection::vec((prop::option::weighted(0.9, 0i64..5), 0i64..5), 1..40)
        .prop_map(|v| v.into_iter().map(|(p, g)| (p.map(|x| x as f64), g as f64)).collect())
}

proptest! {
    #[test]
    fn bias_flips_under_swap(p in pairs()) {
        let kept: Vec<(Option<f64>, f64)> = p.iter().filter_map(|&(a, b)| a.map(|a| (Some(a), b))).collect();
        prop_assume!(!kept.is_empty());
        let swapped: Vec<(Option<f64>, f64)> = kept.iter().map(|&(a, b)| (Some(b), a.unwrap())).collect();
        for d in [BiasDenominator::All, BiasDenominator::Nonzero] {
            let b = bias(&kept, d).unwrap();
            prop_assert_eq!(bias(&swapped, d).unwrap(), -b);
            prop_assert!(b.abs() <= 1.0);
        }
    }

    #[test]
    fn identical_pairs_are_perfect(g in prop::collection::vec(0i64..5, 1..30)) {
        let p: Vec<(Option<f64>, f64)> = g.iter().map(|&x| (Some(x as f64), x as f64)).collect();
        prop_assert_eq!(rmse(&p).unwrap(), 0.0);
        prop_assert_eq!(bias(&p, BiasDenominator::All).unwrap(), 0.0);
        let q: Vec<(Option<i64>, i64)> = g.iter().map(|&x| (Some(x), x)).collect();
        prop_assert_eq!(accuracy(&q).unwrap(), 1.0);
    }

    #[test]
    fn grouping_never_lowers_accuracy(p in pairs()) {
        let raw: Vec<(Option<i64>, i64)> = p.iter().map(|&(a, b)| (a.map(|x| x as i64), b as i64)).collect();
        let grouped: Vec<_> = raw
            .iter()
            .map(|&(a, b)| (a.map(|x| group_scale(x).unwrap()), group_scale(b).unwrap()))
            .collect();
        prop_assert!(accuracy(&grouped).unwrap() >= accuracy(&raw).unwrap());
    }
}
