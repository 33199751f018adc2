//! Churn decomposition by baseline difficulty and domain, cross-pair
//! comparisons, and agreement with single-shot greedy scoring.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::GreedyRun;
use crate::rci::{self, Category, ChurnReport, RciClassification};
use crate::stats;

pub const DEFAULT_EDGES: [f64; 6] = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBin {
    pub lo: f64,
    pub hi: f64,
    /// Only the last bin includes its upper edge.
    pub closed_hi: bool,
    pub n: usize,
    pub n_improved: usize,
    pub n_no_change: usize,
    pub n_deteriorated: usize,
    pub churn_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyBinTable {
    pub bins: Vec<DifficultyBin>,
    pub n_analysable: usize,
}

/// Bins analysable items by baseline accuracy p_v1. Excluded items are
/// ignored.
pub fn difficulty_bins(classifications: &[RciClassification], edges: &[f64]) -> Result<DifficultyBinTable> {
    rci::check_edges(edges)?;
    let mut bins: Vec<DifficultyBin> = edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| DifficultyBin {
            lo: w[0],
            hi: w[1],
            closed_hi: i == edges.len() - 2,
            n: 0,
            n_improved: 0,
            n_no_change: 0,
            n_deteriorated: 0,
            churn_rate: None,
        })
        .collect();
    let mut n_analysable = 0;
    for c in classifications.iter().filter(|c| !c.category.is_excluded()) {
        let p = c.p_v1.ok_or_else(|| {
            Error::invalid(format!("item '{}' is analysable but has undefined p_v1", c.item_id))
        })?;
        let idx = rci::bin_index(p, edges)
            .ok_or_else(|| Error::invalid(format!("p_v1 = {p} outside the bin range")))?;
        let bin = &mut bins[idx];
        bin.n += 1;
        match c.category {
            Category::Improved => bin.n_improved += 1,
            Category::Deteriorated => bin.n_deteriorated += 1,
            _ => bin.n_no_change += 1,
        }
        n_analysable += 1;
    }
    for b in &mut bins {
        b.churn_rate = (b.n > 0).then(|| (b.n_improved + b.n_deteriorated) as f64 / b.n as f64);
    }
    Ok(DifficultyBinTable { bins, n_analysable })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainRow {
    pub domain: String,
    /// Counts in the order improved, no change, deteriorated.
    pub counts: [usize; 3],
    /// Improved / deteriorated; absent when nothing deteriorated.
    pub improvement_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyResult {
    pub rows: Vec<DomainRow>,
    pub columns: [Category; 3],
    pub n: usize,
    pub chi2: f64,
    pub df: usize,
    pub p_value: f64,
    pub cramers_v: f64,
}

pub fn cramers_v(chi2: f64, n: usize, rows: usize, cols: usize) -> f64 {
    let m = (rows.min(cols) - 1) as f64;
    (chi2 / (n as f64 * m)).sqrt()
}

fn column(c: Category) -> Option<usize> {
    match c {
        Category::Improved => Some(0),
        Category::NoChange => Some(1),
        Category::Deteriorated => Some(2),
        _ => None,
    }
}

/// Pearson chi-squared test of independence between domain and RCI category
/// over analysable items, without continuity correction.
pub fn domain_contingency(classifications: &[RciClassification]) -> Result<ContingencyResult> {
    let mut table: BTreeMap<&str, [usize; 3]> = BTreeMap::new();
    for c in classifications {
        if let Some(j) = column(c.category) {
            table.entry(c.domain.as_str()).or_default()[j] += 1;
        }
    }
    if table.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "domain contingency needs at least 2 domains with analysable items, found {}",
            table.len()
        )));
    }
    let counts: Vec<[usize; 3]> = table.values().copied().collect();
    let row_totals: Vec<usize> = counts.iter().map(|r| r.iter().sum()).collect();
    let col_totals: Vec<usize> = (0..3).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let n: usize = row_totals.iter().sum();
    if let Some(j) = col_totals.iter().position(|&t| t == 0) {
        return Err(Error::Degenerate(format!(
            "expected count is zero for every domain in category '{}'; merge categories before testing",
            Category::CHANGE[j]
        )));
    }
    let mut chi2 = 0.0;
    for (row, &rt) in counts.iter().zip(&row_totals) {
        for j in 0..3 {
            let expected = rt as f64 * col_totals[j] as f64 / n as f64;
            let d = row[j] as f64 - expected;
            chi2 += d * d / expected;
        }
    }
    let r = counts.len();
    let df = (r - 1) * 2;
    Ok(ContingencyResult {
        rows: table
            .iter()
            .map(|(d, c)| DomainRow {
                domain: d.to_string(),
                counts: *c,
                improvement_ratio: (c[2] > 0).then(|| c[0] as f64 / c[2] as f64),
            })
            .collect(),
        columns: Category::CHANGE,
        n,
        chi2,
        df,
        p_value: stats::chi2_sf(chi2, df),
        cramers_v: cramers_v(chi2, n, r, 3),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    Full,
    PostExclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTest {
    pub denominator: Denominator,
    pub rate_a: f64,
    pub n_a: usize,
    pub rate_b: f64,
    pub n_b: usize,
    pub z: f64,
    pub p_value: f64,
}

/// Pooled two-proportion z statistic from success counts.
pub fn two_proportion_z(x_a: f64, n_a: usize, x_b: f64, n_b: usize) -> Result<(f64, f64)> {
    if n_a == 0 || n_b == 0 {
        return Err(Error::InsufficientData("two-proportion test needs positive denominators".into()));
    }
    let (na, nb) = (n_a as f64, n_b as f64);
    let pooled = (x_a + x_b) / (na + nb);
    if pooled <= 0.0 || pooled >= 1.0 {
        return Err(Error::Degenerate(format!(
            "pooled proportion {pooled} leaves the z statistic with zero variance"
        )));
    }
    let se = (pooled * (1.0 - pooled) * (1.0 / na + 1.0 / nb)).sqrt();
    let z = (x_a / na - x_b / nb) / se;
    Ok((z, stats::normal_two_sided(z)))
}

/// Compares churn rates of two pairs with a pooled two-proportion z-test.
pub fn churn_rate_z_test(a: &ChurnReport, b: &ChurnReport, denominator: Denominator) -> Result<ZTest> {
    let n_of = |r: &ChurnReport| match denominator {
        Denominator::Full => r.n_total,
        Denominator::PostExclusion => r.n_analysable,
    };
    let (n_a, n_b) = (n_of(a), n_of(b));
    let (x_a, x_b) = (a.n_changed(), b.n_changed());
    let (z, p) = two_proportion_z(x_a as f64, n_a, x_b as f64, n_b)?;
    Ok(ZTest {
        denominator,
        rate_a: x_a as f64 / n_a as f64,
        n_a,
        rate_b: x_b as f64 / n_b as f64,
        n_b,
        z,
        p_value: p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPairResult {
    pub n_shared: usize,
    pub pearson_r: f64,
    pub t: f64,
    pub df: usize,
    pub p_value: f64,
    /// Always "students_t": the exact t distribution is used at every n.
    pub p_method: String,
}

pub fn correlation_p_value(r: f64, n: usize) -> (f64, f64) {
    let df = (n - 2) as f64;
    if r.abs() >= 1.0 {
        return (f64::INFINITY.copysign(r), 0.0);
    }
    let t = r * (df / (1.0 - r * r)).sqrt();
    (t, stats::t_two_sided(t, df))
}

/// Pearson correlation of item-level RCI values over items analysable in
/// both pairs.
pub fn cross_pair_correlation(a: &[RciClassification], b: &[RciClassification]) -> Result<CrossPairResult> {
    let rb: BTreeMap<&str, f64> = b
        .iter()
        .filter(|c| !c.category.is_excluded())
        .filter_map(|c| c.rci.map(|r| (c.item_id.as_str(), r)))
        .collect();
    let mut pairs: Vec<(&str, f64, f64)> = a
        .iter()
        .filter(|c| !c.category.is_excluded())
        .filter_map(|c| Some((c.item_id.as_str(), c.rci?, *rb.get(c.item_id.as_str())?)))
        .collect();
    pairs.sort_by(|x, y| x.0.cmp(y.0));
    let n = pairs.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!(
            "cross-pair correlation needs at least 3 shared analysable items, found {n}"
        )));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    let r = stats::pearson(&x, &y)
        .ok_or_else(|| Error::Degenerate("RCI values have zero variance in one pair".into()))?;
    let (t, p) = correlation_p_value(r, n);
    Ok(CrossPairResult {
        n_shared: n,
        pearson_r: r,
        t,
        df: n - 2,
        p_value: p,
        p_method: "students_t".into(),
    })
}

/// Which RCI categories the greedy comparison uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum GreedyView {
    /// Every item; excluded items count as no reliable change.
    #[default]
    FullBenchmark,
    /// Analysable items only.
    PostExclusion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discordance {
    pub count: usize,
    pub total: usize,
    pub rate: Option<f64>,
}

impl Discordance {
    pub fn new(count: usize, total: usize) -> Self {
        Discordance {
            count,
            total,
            rate: (total > 0).then(|| count as f64 / total as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyComparison {
    pub view: GreedyView,
    pub n_matched: usize,
    pub exact_agreement_rate: Option<f64>,
    /// Greedy flagged a change, RCI found none.
    pub greedy_changed_rci_nochange: Discordance,
    /// RCI found a reliable change, greedy saw none.
    pub rci_changed_greedy_nochange: Discordance,
    /// confusion[greedy][rci], both indexed improved, no change, deteriorated.
    pub confusion: [[usize; 3]; 3],
    /// Classified items missing from at least one greedy run.
    pub unmatched: Vec<String>,
    /// Greedy items with no classification.
    pub greedy_only: Vec<String>,
    /// Excluded items dropped under the post-exclusion view.
    pub n_excluded_dropped: usize,
}

pub fn greedy_direction(before: bool, after: bool) -> Category {
    match (before, after) {
        (false, true) => Category::Improved,
        (true, false) => Category::Deteriorated,
        _ => Category::NoChange,
    }
}

pub fn greedy_compare(
    greedy_v1: &GreedyRun,
    greedy_v2: &GreedyRun,
    classifications: &[RciClassification],
    view: GreedyView,
) -> Result<GreedyComparison> {
    let mut confusion = [[0usize; 3]; 3];
    let mut unmatched = Vec::new();
    let mut dropped = 0;
    for c in classifications {
        let (Some(&g1), Some(&g2)) = (greedy_v1.outcomes.get(&c.item_id), greedy_v2.outcomes.get(&c.item_id)) else {
            unmatched.push(c.item_id.clone());
            continue;
        };
        let rci_cat = match view {
            GreedyView::FullBenchmark => c.category.full_benchmark(),
            GreedyView::PostExclusion if c.category.is_excluded() => {
                dropped += 1;
                continue;
            }
            GreedyView::PostExclusion => c.category,
        };
        let g = column(greedy_direction(g1, g2)).expect("direction is a change category");
        let r = column(rci_cat).expect("non-excluded");
        confusion[g][r] += 1;
    }
    let classified: BTreeSet<&str> = classifications.iter().map(|c| c.item_id.as_str()).collect();
    let greedy_only: Vec<String> = greedy_v1
        .outcomes
        .keys()
        .chain(greedy_v2.outcomes.keys())
        .filter(|id| !classified.contains(id.as_str()))
        .cloned()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let n_matched: usize = confusion.iter().flatten().sum();
    let agree: usize = (0..3).map(|i| confusion[i][i]).sum();
    let greedy_changed = confusion[0].iter().sum::<usize>() + confusion[2].iter().sum::<usize>();
    let rci_changed: usize = (0..3).map(|g| confusion[g][0] + confusion[g][2]).sum();
    Ok(GreedyComparison {
        view,
        n_matched,
        exact_agreement_rate: (n_matched > 0).then(|| agree as f64 / n_matched as f64),
        greedy_changed_rci_nochange: Discordance::new(confusion[0][1] + confusion[2][1], greedy_changed),
        rci_changed_greedy_nochange: Discordance::new(confusion[1][0] + confusion[1][2], rci_changed),
        confusion,
        unmatched,
        greedy_only,
        n_excluded_dropped: dropped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cls(id: &str, domain: &str, p1: f64, rci: f64, cat: Category) -> RciClassification {
        RciClassification {
            item_id: id.into(),
            domain: domain.into(),
            p_v1: Some(p1),
            p_v2: Some(p1),
            delta_p: Some(0.0),
            rci: (!cat.is_excluded()).then_some(rci),
            category: cat,
        }
    }

    #[test]
    fn reference_cramers_v() {
        assert!((cramers_v(26.5, 952, 4, 3) - 0.118).abs() < 5e-4);
        assert!((cramers_v(28.6, 652, 4, 3) - 0.148).abs() < 5e-4);
    }

    #[test]
    fn independent_table_has_zero_chi2() {
        let mut c = Vec::new();
        for d in ["law", "physics"] {
            for (i, cat) in [Category::Improved, Category::NoChange, Category::NoChange, Category::Deteriorated]
                .into_iter()
                .enumerate()
            {
                c.push(cls(&format!("{d}{i}"), d, 0.5, 0.0, cat));
            }
        }
        let res = domain_contingency(&c).unwrap();
        assert_eq!(res.chi2, 0.0);
        assert_eq!(res.cramers_v, 0.0);
        assert_eq!(res.p_value, 1.0);
        assert_eq!(res.df, 2);
    }

    #[test]
    fn empty_category_column_is_error() {
        let c = vec![
            cls("a", "x", 0.5, 0.0, Category::NoChange),
            cls("b", "y", 0.5, 3.0, Category::Improved),
        ];
        assert!(matches!(domain_contingency(&c), Err(Error::Degenerate(_))));
    }

    #[test]
    fn reference_z() {
        let (z, p) = two_proportion_z(0.621 * 952.0, 952, 0.859 * 652.0, 652).unwrap();
        assert!((z + 10.4).abs() < 0.05, "{z}");
        assert!(p < 1e-3);
        let (z, p) = two_proportion_z(30.0, 100, 30.0, 100).unwrap();
        assert_eq!(z, 0.0);
        assert_eq!(p, 1.0);
        assert!(two_proportion_z(0.0, 10, 0.0, 10).is_err());
    }

    #[test]
    fn correlation_reference_p() {
        let (t, p) = correlation_p_value(0.11, 431);
        assert!((t - 2.29).abs() < 0.01, "{t}");
        assert!((p - 0.022).abs() < 0.001, "{p}");
    }

    #[test]
    fn self_and_negated_correlation() {
        let a: Vec<RciClassification> = (0..10)
            .map(|i| cls(&format!("{i}"), "d", 0.5, (i * i) as f64 - 20.0, Category::NoChange))
            .collect();
        assert_relative_eq!(cross_pair_correlation(&a, &a).unwrap().pearson_r, 1.0, epsilon = 1e-12);
        let neg: Vec<RciClassification> = a
            .iter()
            .map(|c| RciClassification { rci: c.rci.map(|r| -r), ..c.clone() })
            .collect();
        assert_relative_eq!(cross_pair_correlation(&a, &neg).unwrap().pearson_r, -1.0, epsilon = 1e-12);
        assert!(cross_pair_correlation(&a[..2], &a[..2]).is_err());
    }

    #[test]
    fn reference_discordance_ratios() {
        assert!((Discordance::new(83, 329).rate.unwrap() - 0.252).abs() < 5e-4);
        assert!((Discordance::new(179, 425).rate.unwrap() - 0.421).abs() < 5e-4);
    }

    #[test]
    fn greedy_unmatched_reported() {
        let c = vec![
            cls("a", "d", 0.5, 3.0, Category::Improved),
            cls("b", "d", 0.0, 0.0, Category::ExcludedFloorCeiling),
            cls("c", "d", 0.5, 0.0, Category::NoChange),
        ];
        let g1 = GreedyRun {
            model_id: "v1".into(),
            outcomes: [("a", false), ("b", false), ("z", true)].map(|(k, v)| (k.to_string(), v)).into(),
        };
        let g2 = GreedyRun {
            model_id: "v2".into(),
            outcomes: [("a", true), ("b", false)].map(|(k, v)| (k.to_string(), v)).into(),
        };
        let res = greedy_compare(&g1, &g2, &c, GreedyView::FullBenchmark).unwrap();
        assert_eq!(res.n_matched, 2);
        assert_eq!(res.unmatched, vec!["c"]);
        assert_eq!(res.greedy_only, vec!["z"]);
        assert_eq!(res.exact_agreement_rate, Some(1.0));
        let post = greedy_compare(&g1, &g2, &c, GreedyView::PostExclusion).unwrap();
        assert_eq!(post.n_matched, 1);
        assert_eq!(post.n_excluded_dropped, 1);
    }

    #[test]
    fn point_mass_bins() {
        let c: Vec<RciClassification> = (0..6).map(|i| cls(&format!("{i}"), "d", 0.5, 0.0, Category::NoChange)).collect();
        let t = difficulty_bins(&c, &DEFAULT_EDGES).unwrap();
        let ns: Vec<usize> = t.bins.iter().map(|b| b.n).collect();
        assert_eq!(ns, vec![0, 0, 6, 0, 0]);
        assert!(t.bins[4].closed_hi && !t.bins[0].closed_hi);
    }
}
