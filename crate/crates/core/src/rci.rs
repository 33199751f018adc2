//! Reliable Change Index engine: measurement error, exclusions,
//! classification, churn reporting and the difficulty-stratified sensitivity
//! analysis.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AccuracyRow, AccuracyTable};
use crate::stats::{self, SdConvention};

pub const DEFAULT_THRESHOLD: f64 = 1.96;
pub const DEFAULT_MIN_VALID: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Improved,
    NoChange,
    Deteriorated,
    ExcludedInsufficientValid,
    ExcludedFloorCeiling,
}

impl Category {
    pub const CHANGE: [Category; 3] = [Category::Improved, Category::NoChange, Category::Deteriorated];

    pub fn is_excluded(self) -> bool {
        matches!(self, Category::ExcludedInsufficientValid | Category::ExcludedFloorCeiling)
    }

    pub fn is_changed(self) -> bool {
        matches!(self, Category::Improved | Category::Deteriorated)
    }

    /// Full-benchmark view: excluded items count as no reliable change.
    pub fn full_benchmark(self) -> Category {
        if self.is_excluded() {
            Category::NoChange
        } else {
            self
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Improved => "improved",
            Category::NoChange => "no_change",
            Category::Deteriorated => "deteriorated",
            Category::ExcludedInsufficientValid => "excluded_insufficient_valid",
            Category::ExcludedFloorCeiling => "excluded_floor_ceiling",
        }
    }

    pub fn from_label(s: &str) -> Option<Category> {
        [
            Category::Improved,
            Category::NoChange,
            Category::Deteriorated,
            Category::ExcludedInsufficientValid,
            Category::ExcludedFloorCeiling,
        ]
        .into_iter()
        .find(|c| c.label() == s)
    }

    pub fn exclusion_reason(self) -> &'static str {
        match self {
            Category::ExcludedInsufficientValid => "insufficient_valid",
            Category::ExcludedFloorCeiling => "floor_ceiling",
            _ => "",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Which (p_v1, p_v2) pairs count as floor/ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FloorCeilingRule {
    /// Both models at the same extreme: (0, 0) or (1, 1).
    #[default]
    SameExtreme,
    /// Both values extreme, possibly different ((0, 1) and (1, 0) excluded too).
    BothExtreme,
}

/// Items entering SD(p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SdItemSet {
    /// Items passing the valid-response rule, before floor/ceiling exclusion.
    #[default]
    PreFloorCeiling,
    /// Analysable items only.
    Analysable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RciConfig {
    pub threshold: f64,
    pub min_valid: u32,
    pub floor_ceiling: FloorCeilingRule,
    pub sd_convention: SdConvention,
    pub sd_items: SdItemSet,
}

impl Default for RciConfig {
    fn default() -> Self {
        RciConfig {
            threshold: DEFAULT_THRESHOLD,
            min_valid: DEFAULT_MIN_VALID,
            floor_ceiling: FloorCeilingRule::default(),
            sd_convention: SdConvention::default(),
            sd_items: SdItemSet::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairMeasurement {
    pub sem_v1: f64,
    pub sem_v2: f64,
    pub s_diff: f64,
    pub min_detectable_delta: f64,
    pub alpha_threshold: f64,
    pub r_xx_v1: Option<f64>,
    pub r_xx_v2: Option<f64>,
    pub sd_p_v1: Option<f64>,
    pub sd_p_v2: Option<f64>,
    pub n_sd_items: Option<usize>,
    /// S_diff is zero; no item can be classified.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemResult {
    pub sem: f64,
    pub sd_p: f64,
    pub n_items: usize,
    /// Reliability at or above 1; SEM forced to 0.
    pub degenerate: bool,
}

/// Which items of an accuracy table enter SD(p).
#[derive(Debug, Clone, PartialEq)]
pub enum ItemSelection {
    AllDefined,
    MinValid(u32),
    Ids(BTreeSet<String>),
}

impl ItemSelection {
    fn admits(&self, row: &AccuracyRow) -> bool {
        row.p.is_some()
            && match self {
                ItemSelection::AllDefined => true,
                ItemSelection::MinValid(m) => row.k_valid >= *m,
                ItemSelection::Ids(ids) => ids.contains(&row.item_id),
            }
    }
}

/// Standard error of measurement: SD(p) * sqrt(1 - r_xx).
pub fn sem(acc: &AccuracyTable, r_xx: f64, selection: &ItemSelection, convention: SdConvention) -> Result<SemResult> {
    if !r_xx.is_finite() || r_xx < 0.0 {
        return Err(Error::invalid(format!("SEM needs 0 <= r_xx, got {r_xx}")));
    }
    let ps: Vec<f64> = acc.rows.iter().filter(|r| selection.admits(r)).filter_map(|r| r.p).collect();
    if ps.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "SEM for '{}' needs at least 2 selected items, found {}",
            acc.model_id,
            ps.len()
        )));
    }
    let sd_p = stats::std_dev(&ps, convention).expect("n >= 2");
    let degenerate = r_xx >= 1.0;
    let sem = if degenerate { 0.0 } else { sd_p * (1.0 - r_xx).sqrt() };
    Ok(SemResult {
        sem,
        sd_p,
        n_items: ps.len(),
        degenerate,
    })
}

pub fn pair_measurement(sem_v1: f64, sem_v2: f64, threshold: f64) -> Result<PairMeasurement> {
    if !(sem_v1 >= 0.0 && sem_v2 >= 0.0) {
        return Err(Error::invalid(format!("SEMs must be non-negative, got {sem_v1}, {sem_v2}")));
    }
    if !(threshold > 0.0 && threshold.is_finite()) {
        return Err(Error::invalid(format!("threshold must be positive, got {threshold}")));
    }
    let s_diff = (sem_v1 * sem_v1 + sem_v2 * sem_v2).sqrt();
    Ok(PairMeasurement {
        sem_v1,
        sem_v2,
        s_diff,
        min_detectable_delta: threshold * s_diff,
        alpha_threshold: threshold,
        r_xx_v1: None,
        r_xx_v2: None,
        sd_p_v1: None,
        sd_p_v2: None,
        n_sd_items: None,
        degenerate: s_diff == 0.0,
    })
}

fn check_same_items(acc_v1: &AccuracyTable, acc_v2: &AccuracyTable) -> Result<()> {
    let a: BTreeSet<&str> = acc_v1.rows.iter().map(|r| r.item_id.as_str()).collect();
    let b: BTreeSet<&str> = acc_v2.rows.iter().map(|r| r.item_id.as_str()).collect();
    if a == b && a.len() == acc_v1.rows.len() && b.len() == acc_v2.rows.len() {
        return Ok(());
    }
    Err(Error::ItemSetMismatch {
        only_v1: a.difference(&b).map(|s| s.to_string()).collect(),
        only_v2: b.difference(&a).map(|s| s.to_string()).collect(),
    })
}

fn paired_rows<'a>(
    acc_v1: &'a AccuracyTable,
    acc_v2: &'a AccuracyTable,
) -> Result<Vec<(&'a AccuracyRow, &'a AccuracyRow)>> {
    check_same_items(acc_v1, acc_v2)?;
    let mut v1: Vec<&AccuracyRow> = acc_v1.rows.iter().collect();
    let mut v2: Vec<&AccuracyRow> = acc_v2.rows.iter().collect();
    v1.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    v2.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    Ok(v1.into_iter().zip(v2).collect())
}

fn at_extreme(row: &AccuracyRow) -> Option<u8> {
    if row.k_valid == 0 {
        None
    } else if row.n_correct == 0 {
        Some(0)
    } else if row.n_correct == row.k_valid {
        Some(1)
    } else {
        None
    }
}

/// Exclusion status of one matched item, `None` when analysable.
pub fn exclusion(v1: &AccuracyRow, v2: &AccuracyRow, cfg: &RciConfig) -> Option<Category> {
    if v1.k_valid < cfg.min_valid || v2.k_valid < cfg.min_valid || v1.k_valid == 0 || v2.k_valid == 0 {
        return Some(Category::ExcludedInsufficientValid);
    }
    let floor_ceiling = match (at_extreme(v1), at_extreme(v2), cfg.floor_ceiling) {
        (Some(a), Some(b), FloorCeilingRule::SameExtreme) => a == b,
        (Some(_), Some(_), FloorCeilingRule::BothExtreme) => true,
        _ => false,
    };
    floor_ceiling.then_some(Category::ExcludedFloorCeiling)
}

/// Δp = p_v2 - p_v1 from counts, with a single rounding.
pub fn delta_p(v1: &AccuracyRow, v2: &AccuracyRow) -> Option<f64> {
    if v1.k_valid == 0 || v2.k_valid == 0 {
        return None;
    }
    let (c1, k1) = (i64::from(v1.n_correct), i64::from(v1.k_valid));
    let (c2, k2) = (i64::from(v2.n_correct), i64::from(v2.k_valid));
    Some((c2 * k1 - c1 * k2) as f64 / (k1 * k2) as f64)
}

pub fn categorize(rci: f64, threshold: f64) -> Category {
    if rci > threshold {
        Category::Improved
    } else if rci < -threshold {
        Category::Deteriorated
    } else {
        Category::NoChange
    }
}

/// Items entering SD(p) for a matched pair.
pub fn sd_selection(acc_v1: &AccuracyTable, acc_v2: &AccuracyTable, cfg: &RciConfig) -> Result<BTreeSet<String>> {
    Ok(paired_rows(acc_v1, acc_v2)?
        .into_iter()
        .filter(|(a, b)| match exclusion(a, b, cfg) {
            None => true,
            Some(Category::ExcludedFloorCeiling) => cfg.sd_items == SdItemSet::PreFloorCeiling,
            Some(_) => false,
        })
        .map(|(a, _)| a.item_id.clone())
        .collect())
}

/// SEMs and S_diff for a matched pair over the configured SD(p) item set.
pub fn measure_pair(
    acc_v1: &AccuracyTable,
    acc_v2: &AccuracyTable,
    r_xx_v1: f64,
    r_xx_v2: f64,
    cfg: &RciConfig,
) -> Result<PairMeasurement> {
    let ids = sd_selection(acc_v1, acc_v2, cfg)?;
    measure_on(acc_v1, acc_v2, r_xx_v1, r_xx_v2, ids, cfg)
}

fn measure_on(
    acc_v1: &AccuracyTable,
    acc_v2: &AccuracyTable,
    r_xx_v1: f64,
    r_xx_v2: f64,
    ids: BTreeSet<String>,
    cfg: &RciConfig,
) -> Result<PairMeasurement> {
    let n = ids.len();
    let selection = ItemSelection::Ids(ids);
    let s1 = sem(acc_v1, r_xx_v1, &selection, cfg.sd_convention)?;
    let s2 = sem(acc_v2, r_xx_v2, &selection, cfg.sd_convention)?;
    let mut pm = pair_measurement(s1.sem, s2.sem, cfg.threshold)?;
    pm.r_xx_v1 = Some(r_xx_v1);
    pm.r_xx_v2 = Some(r_xx_v2);
    pm.sd_p_v1 = Some(s1.sd_p);
    pm.sd_p_v2 = Some(s2.sd_p);
    pm.n_sd_items = Some(n);
    Ok(pm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RciClassification {
    pub item_id: String,
    pub domain: String,
    pub p_v1: Option<f64>,
    pub p_v2: Option<f64>,
    pub delta_p: Option<f64>,
    /// `None` for excluded items.
    pub rci: Option<f64>,
    pub category: Category,
}

/// Classifies every matched item. Exclusions apply first (insufficient valid
/// responses, then floor/ceiling); the rest are labelled by RCI against
/// `pm.alpha_threshold`, with |RCI| equal to the threshold counting as no
/// change.
pub fn classify_items(
    acc_v1: &AccuracyTable,
    acc_v2: &AccuracyTable,
    pm: &PairMeasurement,
    cfg: &RciConfig,
) -> Result<Vec<RciClassification>> {
    let rows = paired_rows(acc_v1, acc_v2)?;
    let mut out = Vec::with_capacity(rows.len());
    for (a, b) in rows {
        let dp = delta_p(a, b);
        let (rci, category) = match exclusion(a, b, cfg) {
            Some(excluded) => (None, excluded),
            None => {
                if pm.s_diff <= 0.0 {
                    return Err(Error::Degenerate(format!(
                        "S_diff is zero but item '{}' is analysable",
                        a.item_id
                    )));
                }
                let rci = dp.expect("analysable items have defined p") / pm.s_diff;
                (Some(rci), categorize(rci, pm.alpha_threshold))
            }
        };
        out.push(RciClassification {
            item_id: a.item_id.clone(),
            domain: a.domain.clone(),
            p_v1: a.p,
            p_v2: b.p,
            delta_p: dp,
            rci,
            category,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryRates {
    pub denominator: usize,
    pub improved: f64,
    pub no_change: f64,
    pub deteriorated: f64,
    pub churn: f64,
}

impl CategoryRates {
    fn new(improved: usize, no_change: usize, deteriorated: usize) -> Option<Self> {
        let d = improved + no_change + deteriorated;
        (d > 0).then(|| {
            let df = d as f64;
            CategoryRates {
                denominator: d,
                improved: improved as f64 / df,
                no_change: no_change as f64 / df,
                deteriorated: deteriorated as f64 / df,
                churn: (improved + deteriorated) as f64 / df,
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSummary {
    pub n: usize,
    pub mean_abs_delta: f64,
    pub median_abs_delta: f64,
    pub frac_ge_0_2: f64,
    pub frac_ge_0_4: f64,
}

impl EffectSummary {
    pub fn from_abs_deltas(mut abs: Vec<f64>) -> Option<Self> {
        if abs.is_empty() {
            return None;
        }
        abs.sort_by(f64::total_cmp);
        let n = abs.len();
        let nf = n as f64;
        Some(EffectSummary {
            n,
            mean_abs_delta: abs.iter().sum::<f64>() / nf,
            median_abs_delta: stats::median_sorted(&abs).expect("non-empty"),
            frac_ge_0_2: abs.iter().filter(|&&d| d >= 0.2).count() as f64 / nf,
            frac_ge_0_4: abs.iter().filter(|&&d| d >= 0.4).count() as f64 / nf,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSizes {
    pub analysable: Option<EffectSummary>,
    pub changed: Option<EffectSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChurnReport {
    pub n_total: usize,
    pub n_excluded_insufficient: usize,
    pub n_excluded_floor_ceiling: usize,
    pub n_analysable: usize,
    pub n_improved: usize,
    pub n_no_change: usize,
    pub n_deteriorated: usize,
    /// Denominator n_total; excluded items count as no reliable change.
    pub full_benchmark_rates: CategoryRates,
    /// Denominator n_analysable; absent when nothing is analysable.
    pub post_exclusion_rates: Option<CategoryRates>,
    pub churn_rate_full: f64,
    pub churn_rate_post: Option<f64>,
    pub net_surplus: i64,
    pub effect_sizes: EffectSizes,
}

impl ChurnReport {
    pub fn n_changed(&self) -> usize {
        self.n_improved + self.n_deteriorated
    }
}

pub fn churn_report(classifications: &[RciClassification]) -> Result<ChurnReport> {
    if classifications.is_empty() {
        return Err(Error::InsufficientData("churn report needs at least one item".into()));
    }
    let count = |c: Category| classifications.iter().filter(|x| x.category == c).count();
    let n_total = classifications.len();
    let n_ins = count(Category::ExcludedInsufficientValid);
    let n_fc = count(Category::ExcludedFloorCeiling);
    let n_imp = count(Category::Improved);
    let n_nc = count(Category::NoChange);
    let n_det = count(Category::Deteriorated);
    let full = CategoryRates::new(n_imp, n_nc + n_ins + n_fc, n_det).expect("n_total > 0");
    let post = CategoryRates::new(n_imp, n_nc, n_det);
    let abs_of = |keep: fn(Category) -> bool| -> Vec<f64> {
        classifications
            .iter()
            .filter(|c| keep(c.category))
            .filter_map(|c| c.delta_p.map(f64::abs))
            .collect()
    };
    Ok(ChurnReport {
        n_total,
        n_excluded_insufficient: n_ins,
        n_excluded_floor_ceiling: n_fc,
        n_analysable: n_imp + n_nc + n_det,
        n_improved: n_imp,
        n_no_change: n_nc,
        n_deteriorated: n_det,
        churn_rate_full: full.churn,
        churn_rate_post: post.as_ref().map(|r| r.churn),
        full_benchmark_rates: full,
        post_exclusion_rates: post,
        net_surplus: n_imp as i64 - n_det as i64,
        effect_sizes: EffectSizes {
            analysable: EffectSummary::from_abs_deltas(abs_of(|c| !c.is_excluded())),
            changed: EffectSummary::from_abs_deltas(abs_of(Category::is_changed)),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumResult {
    pub lo: f64,
    pub hi: f64,
    pub n_items: usize,
    pub measurement: PairMeasurement,
    pub classifications: Vec<RciClassification>,
    pub n_changed: usize,
    pub n_changed_global: usize,
    pub n_analysable: usize,
    pub churn_rate: Option<f64>,
    pub churn_rate_global: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedStratum {
    pub lo: f64,
    pub hi: f64,
    pub n_items: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedSensitivity {
    pub edges: Vec<f64>,
    pub strata: Vec<StratumResult>,
    pub skipped: Vec<SkippedStratum>,
    /// Reliably changed items across computed strata, stratified vs global.
    pub n_changed: usize,
    pub n_changed_global: usize,
    pub n_analysable: usize,
}

/// Validates bin edges: strictly increasing, starting at 0 and ending at 1.
pub fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2
        || edges[0] != 0.0
        || *edges.last().expect("len >= 2") != 1.0
        || edges.windows(2).any(|w| !(w[0] < w[1]))
    {
        return Err(Error::invalid(format!(
            "bin edges must increase strictly from 0 to 1, got {edges:?}"
        )));
    }
    Ok(())
}

/// Bin of `p` under half-open bins [e_i, e_{i+1}) with a closed last bin.
pub fn bin_index(p: f64, edges: &[f64]) -> Option<usize> {
    let last = edges.len() - 2;
    if p == edges[last + 1] {
        return Some(last);
    }
    (0..=last).find(|&i| edges[i] <= p && p < edges[i + 1])
}

/// Recomputes SD(p), SEM and S_diff within each baseline-difficulty stratum
/// (binned by p_v1) and reclassifies the stratum's items.
pub fn stratified_sensitivity(
    acc_v1: &AccuracyTable,
    acc_v2: &AccuracyTable,
    r_xx_v1: f64,
    r_xx_v2: f64,
    edges: &[f64],
    global: &[RciClassification],
    cfg: &RciConfig,
) -> Result<StratifiedSensitivity> {
    check_edges(edges)?;
    let members_all = sd_selection(acc_v1, acc_v2, cfg)?;
    let global_by_id: std::collections::BTreeMap<&str, Category> =
        global.iter().map(|c| (c.item_id.as_str(), c.category)).collect();

    let n_bins = edges.len() - 1;
    let mut bins: Vec<BTreeSet<String>> = vec![BTreeSet::new(); n_bins];
    for row in &acc_v1.rows {
        if !members_all.contains(&row.item_id) {
            continue;
        }
        let p = row.p.expect("selected items have defined p");
        let b = bin_index(p, edges).expect("p in [0, 1]");
        bins[b].insert(row.item_id.clone());
    }

    let mut out = StratifiedSensitivity {
        edges: edges.to_vec(),
        strata: Vec::new(),
        skipped: Vec::new(),
        n_changed: 0,
        n_changed_global: 0,
        n_analysable: 0,
    };
    for (i, ids) in bins.into_iter().enumerate() {
        let (lo, hi) = (edges[i], edges[i + 1]);
        let n_items = ids.len();
        let skip = |reason: String| SkippedStratum { lo, hi, n_items, reason };
        if n_items < 2 {
            out.skipped.push(skip(format!("{n_items} item(s); at least 2 needed")));
            continue;
        }
        let sub_v1 = restrict(acc_v1, &ids);
        let sub_v2 = restrict(acc_v2, &ids);
        let pm = measure_on(&sub_v1, &sub_v2, r_xx_v1, r_xx_v2, ids.clone(), cfg)?;
        let classifications = match classify_items(&sub_v1, &sub_v2, &pm, cfg) {
            Ok(c) => c,
            Err(Error::Degenerate(msg)) => {
                out.skipped.push(skip(msg));
                continue;
            }
            Err(e) => return Err(e),
        };
        let n_changed = classifications.iter().filter(|c| c.category.is_changed()).count();
        let n_analysable = classifications.iter().filter(|c| !c.category.is_excluded()).count();
        let n_changed_global = ids
            .iter()
            .filter(|id| global_by_id.get(id.as_str()).is_some_and(|c| c.is_changed()))
            .count();
        let rate = |n: usize| (n_analysable > 0).then(|| n as f64 / n_analysable as f64);
        out.n_changed += n_changed;
        out.n_changed_global += n_changed_global;
        out.n_analysable += n_analysable;
        out.strata.push(StratumResult {
            lo,
            hi,
            n_items,
            measurement: pm,
            churn_rate: rate(n_changed),
            churn_rate_global: rate(n_changed_global),
            classifications,
            n_changed,
            n_changed_global,
            n_analysable,
        });
    }
    Ok(out)
}

fn restrict(acc: &AccuracyTable, ids: &BTreeSet<String>) -> AccuracyTable {
    AccuracyTable {
        model_id: acc.model_id.clone(),
        k: acc.k,
        rows: acc.rows.iter().filter(|r| ids.contains(&r.item_id)).cloned().collect(),
    }
}
