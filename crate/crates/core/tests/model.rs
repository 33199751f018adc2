mod common;

use itemchurn::model::{check_matched, compute_item_accuracy, parse_trials_with_report, TrialFormat};
use itemchurn::{parse_trials, Error};
use num_rational::Ratio;

const JSONL: &str = r#"{"item_id":"b","model_id":"m","sample_index":1,"correct":true}
{"item_id":"a","model_id":"m","sample_index":0,"correct":false,"valid":false}
{"item_id":"a","model_id":"m","sample_index":1,"correct":true,"domain":"law"}
{"item_id":"b","model_id":"m","sample_index":0,"correct":true}
{"item_id":"c","model_id":"m","sample_index":0,"correct":true}
"#;

#[test]
fn accuracy_is_the_exact_ratio() {
    let spec = common::uniform_shift(200, 7, 3, -0.2, 0.2);
    let v1 = common::pair_input(&spec, false).v1;
    let v1 = common::with_invalid(&v1, 0.2, 5);
    for (row, block) in compute_item_accuracy(&v1).rows.iter().zip(v1.items()) {
        assert_eq!(row.k_valid, block.k_valid());
        match row.p {
            None => assert_eq!(row.k_valid, 0),
            Some(p) => {
                let exact = Ratio::new(i64::from(row.n_correct), i64::from(row.k_valid));
                let nearest = *exact.numer() as f64 / *exact.denom() as f64;
                assert_eq!(p, nearest);
            }
        }
    }
}

#[test]
fn validation_report_counts_the_stream() {
    let (set, report) = parse_trials_with_report(JSONL.as_bytes(), TrialFormat::Jsonl, 2, 2).unwrap();
    assert_eq!(report.n_trials, 5);
    assert_eq!(report.n_trials, report.n_valid + report.n_invalid);
    assert_eq!(report.n_invalid, 1);
    assert_eq!(report.n_missing_slots, 1);
    assert_eq!(report.items_below_min_valid, vec!["a".to_string(), "c".to_string()]);
    let ids: Vec<&str> = set.items().iter().map(|b| b.item_id.as_str()).collect();
    assert_eq!(ids, ["a", "b", "c"]);
    assert_eq!(set.items()[0].domain, "law");
}

#[test]
fn hard_faults_are_validation_errors() {
    let dup = format!("{JSONL}{}\n", r#"{"item_id":"b","model_id":"m","sample_index":1,"correct":false}"#);
    let err = parse_trials(dup.as_bytes(), TrialFormat::Jsonl, 2).unwrap_err();
    assert!(matches!(err, Error::DuplicateKey { .. }) && err.is_validation());

    let oor = r#"{"item_id":"a","model_id":"m","sample_index":5,"correct":true}"#;
    let err = parse_trials(oor.as_bytes(), TrialFormat::Jsonl, 2).unwrap_err();
    assert!(matches!(err, Error::SampleIndexOutOfRange { sample_index: 5, .. }));

    let bad = "{\"item_id\": 3}\n";
    assert!(parse_trials(bad.as_bytes(), TrialFormat::Jsonl, 2).unwrap_err().is_validation());
}

#[test]
fn csv_and_jsonl_agree() {
    let jsonl = parse_trials(JSONL.as_bytes(), TrialFormat::Jsonl, 2).unwrap();
    let mut buf = Vec::new();
    jsonl.write(&mut buf, TrialFormat::Csv).unwrap();
    let csv = parse_trials(buf.as_slice(), TrialFormat::Csv, 2).unwrap();
    assert_eq!(compute_item_accuracy(&csv), compute_item_accuracy(&jsonl));
}

#[test]
fn unmatched_item_sets_are_rejected() {
    let a = parse_trials(JSONL.as_bytes(), TrialFormat::Jsonl, 2).unwrap();
    let short: String = JSONL.lines().filter(|l| !l.contains("\"c\"")).map(|l| format!("{l}\n")).collect();
    let b = parse_trials(short.as_bytes(), TrialFormat::Jsonl, 2).unwrap();
    match check_matched(&a, &b).unwrap_err() {
        Error::ItemSetMismatch { only_v1, only_v2 } => {
            assert_eq!(only_v1, vec!["c".to_string()]);
            assert!(only_v2.is_empty());
        }
        e => panic!("{e}"),
    }
}
