mod common;

use itemchurn::report::{format_p, render_markdown, scatter_svg, write_outputs};
use itemchurn::{analyze, AnalysisConfig, Bundle, Category, PipelineInput};
use serde_json::Value;

fn bundle(second: bool) -> Bundle {
    let a = common::uniform_shift(300, 10, 41, -0.4, 0.4);
    let b = common::uniform_shift(300, 10, 42, -0.2, 0.5);
    let input = PipelineInput {
        pair: common::pair_input(&a, true),
        second: second.then(|| common::pair_input(&b, true)),
    };
    analyze(&input, &AnalysisConfig { n_splits: 200, n_permutations: 100, ..AnalysisConfig::default() }).unwrap()
}

fn leaves(v: &Value, key: &str, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.push(n.as_f64().unwrap()),
        Value::Array(a) => a.iter().for_each(|x| leaves(x, key, out)),
        Value::Object(o) => {
            for (k, x) in o {
                // Field names such as frac_ge_0_2 carry their threshold.
                if let Some(rest) = k.strip_prefix("frac_ge_") {
                    out.push(rest.replace('_', ".").parse().unwrap());
                }
                leaves(x, k, out);
            }
        }
        _ => {}
    }
}

fn decimals(tok: &str) -> i32 {
    tok.split_once('.').map_or(0, |(_, d)| d.len() as i32)
}

#[test]
fn every_report_numeral_comes_from_the_bundle() {
    let b = bundle(true);
    let md = render_markdown(&b);
    let mut values = Vec::new();
    leaves(&serde_json::to_value(&b).unwrap(), "", &mut values);
    let mut checked = 0;
    for raw in md.split(|c: char| c.is_whitespace() || "|[](),;:=/".contains(c)) {
        let tok = raw.trim_end_matches('.');
        if tok.is_empty() || tok.chars().any(|c| c.is_ascii_alphabetic() && c != 'e') || !tok.chars().any(|c| c.is_ascii_digit()) {
            continue;
        }
        if tok == ".001" || tok.chars().any(|c| c.is_alphabetic() && !c.is_ascii()) {
            continue;
        }
        let (num, pct) = match tok.strip_suffix('%') {
            Some(n) => (n, true),
            None => (tok, false),
        };
        let Ok(x) = num.parse::<f64>() else {
            panic!("unparseable numeral {tok:?}");
        };
        let found = if num.contains('e') {
            values.iter().any(|v| format!("{v:.2e}") == num)
        } else {
            let d = decimals(num);
            let scale = 10f64.powi(d);
            values.iter().any(|v| {
                let v = if pct { 100.0 * v } else { *v };
                ((v * scale).round() - x * scale).abs() < 1e-6
            })
        };
        assert!(found, "{tok} in report has no source in the bundle");
        checked += 1;
    }
    assert!(checked > 50, "only {checked} numerals checked");
}

#[test]
fn sections_always_present() {
    let b = bundle(false);
    let md = render_markdown(&b);
    for heading in [
        "### Reliability",
        "### Churn",
        "### Permutation null",
        "### Churn by difficulty",
        "### Domains",
        "### Stratified S_diff",
        "### Greedy comparison",
        "## Cross-pair comparison",
    ] {
        assert!(md.contains(heading), "{heading}");
    }
    assert!(md.contains("_Not computed: no second pair supplied._"));
}

#[test]
fn small_p_values_show_both_forms() {
    assert_eq!(format_p(0.0123), "0.012");
    let s = format_p(2.5e-7);
    assert!(s.starts_with("< .001") && s.contains("2.50e-7"), "{s}");
}

#[test]
fn scatter_colours_recount_to_categories() {
    let b = bundle(false);
    let svg = scatter_svg(&b.pair).unwrap();
    let count = |c: Category| svg.matches(&format!("data-category=\"{}\"", c.label())).count();
    assert_eq!(count(Category::Improved), b.pair.churn.n_improved);
    assert_eq!(count(Category::Deteriorated), b.pair.churn.n_deteriorated);
    assert_eq!(count(Category::NoChange), b.pair.churn.n_no_change);
}

#[test]
fn output_tree_matches_interface() {
    let b = bundle(true);
    let dir = tempfile::tempdir().unwrap();
    let out = write_outputs(&b, dir.path()).unwrap();
    for name in ["report.md", "bundle.json", "classifications.csv", "bins.csv", "contingency.csv", "pair2_classifications.csv"] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
    let svgs: Vec<_> = std::fs::read_dir(dir.path().join("plots")).unwrap().collect();
    assert_eq!(svgs.len(), 8);
    assert!(out.notices.is_empty(), "{:?}", out.notices);
    let header = std::fs::read_to_string(dir.path().join("classifications.csv")).unwrap();
    assert!(header.starts_with("item_id,domain,p_v1,p_v2,delta_p,rci,category,exclusion_reason\n"));
    let back = Bundle::from_json(&std::fs::read_to_string(dir.path().join("bundle.json")).unwrap()).unwrap();
    assert_eq!(back, b);
}
