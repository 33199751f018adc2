//! End-to-end analysis of one model pair (optionally a second pair for
//! cross-pair comparisons) into a serialisable result bundle.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::cohort::{self, ContingencyResult, CrossPairResult, DifficultyBinTable, GreedyComparison, GreedyView, ZTest};
use crate::error::{Error, Result};
use crate::model::{aggregate_accuracy, check_matched, compute_item_accuracy, GreedyRun, TrialSet};
use crate::null::{self, NullCalibration, NullConfig, SdiffMode};
use crate::rci::{self, ChurnReport, PairMeasurement, RciClassification, RciConfig, StratifiedSensitivity};
use crate::reliability::{self, ProphecyResult, ReliabilityEstimate};
use crate::seeding;

/// Items entering split-half reliability and ICC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReliabilityItems {
    /// Every fully valid item.
    #[default]
    FullyValid,
    /// Fully valid items that are also analysable in the pair.
    Analysable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub seed: u64,
    pub n_splits: usize,
    /// Zero disables the permutation null.
    pub n_permutations: usize,
    pub null_sdiff_mode: SdiffMode,
    pub null_reestimate_splits: usize,
    pub threshold: f64,
    pub min_valid: u32,
    pub floor_ceiling: rci::FloorCeilingRule,
    pub sd_convention: crate::stats::SdConvention,
    pub sd_items: rci::SdItemSet,
    pub reliability_items: ReliabilityItems,
    pub bin_edges: Vec<f64>,
    pub strata_edges: Vec<f64>,
    pub greedy_view: GreedyView,
    pub prophecy_targets: Vec<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            seed: 42,
            n_splits: reliability::DEFAULT_SPLITS,
            n_permutations: null::DEFAULT_PERMUTATIONS,
            null_sdiff_mode: SdiffMode::Fixed,
            null_reestimate_splits: NullConfig::default().reestimate_splits,
            threshold: rci::DEFAULT_THRESHOLD,
            min_valid: rci::DEFAULT_MIN_VALID,
            floor_ceiling: Default::default(),
            sd_convention: Default::default(),
            sd_items: Default::default(),
            reliability_items: Default::default(),
            bin_edges: cohort::DEFAULT_EDGES.to_vec(),
            strata_edges: cohort::DEFAULT_EDGES.to_vec(),
            greedy_view: Default::default(),
            prophecy_targets: vec![0.8, 0.9],
        }
    }
}

impl AnalysisConfig {
    pub fn rci(&self) -> RciConfig {
        RciConfig {
            threshold: self.threshold,
            min_valid: self.min_valid,
            floor_ceiling: self.floor_ceiling,
            sd_convention: self.sd_convention,
            sd_items: self.sd_items,
        }
    }

    pub fn null(&self) -> NullConfig {
        NullConfig {
            n_permutations: self.n_permutations,
            sdiff_mode: self.null_sdiff_mode,
            reestimate_splits: self.null_reestimate_splits,
        }
    }

    /// Seed of a named procedure for the pair labelled `pair`.
    pub fn procedure_seed(&self, pair: &str, procedure: &str) -> u64 {
        seeding::derive_labeled(self.seed, &format!("{pair}/{procedure}"))
    }

    pub fn validate(&self) -> Result<()> {
        rci::check_edges(&self.bin_edges)?;
        rci::check_edges(&self.strata_edges)?;
        if self.n_splits == 0 {
            return Err(Error::Config("n_splits must be positive".into()));
        }
        if self.n_permutations != 0 && self.n_permutations < null::MIN_PERMUTATIONS {
            return Err(Error::Config(format!(
                "n_permutations must be 0 (disabled) or at least {}",
                null::MIN_PERMUTATIONS
            )));
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(Error::Config("threshold must be positive".into()));
        }
        Ok(())
    }
}

/// A result that may be absent, with the reason kept alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "snake_case")]
pub enum Section<T> {
    Computed(T),
    NotComputed(String),
}

impl<T> Section<T> {
    pub fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Section::Computed(v),
            Err(e) => Section::NotComputed(e.to_string()),
        }
    }

    pub fn computed(&self) -> Option<&T> {
        match self {
            Section::Computed(v) => Some(v),
            Section::NotComputed(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairInput {
    pub v1: TrialSet,
    pub v2: TrialSet,
    pub greedy: Option<(GreedyRun, GreedyRun)>,
}

#[derive(Debug, Clone)]
pub struct PipelineInput {
    pub pair: PairInput,
    pub second: Option<PairInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub accuracy: f64,
    pub n_items_defined: usize,
    pub reliability: ReliabilityEstimate,
    pub icc: Section<f64>,
    pub prophecy: Section<ProphecyResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAnalysis {
    pub label: String,
    pub n_items: usize,
    pub k: usize,
    pub v1: ModelSummary,
    pub v2: ModelSummary,
    pub measurement: PairMeasurement,
    pub classifications: Vec<RciClassification>,
    pub churn: ChurnReport,
    pub null: Section<NullCalibration>,
    pub bins: Section<DifficultyBinTable>,
    pub contingency: Section<ContingencyResult>,
    pub stratified: Section<StratifiedSensitivity>,
    pub greedy: Section<GreedyComparison>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossPair {
    pub z_full: Section<ZTest>,
    pub z_post_exclusion: Section<ZTest>,
    pub correlation: Section<CrossPairResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub tool_version: String,
    pub config: AnalysisConfig,
    pub pair: PairAnalysis,
    pub second_pair: Section<PairAnalysis>,
    pub cross_pair: Section<CrossPair>,
}

impl Bundle {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub const PRIMARY_LABEL: &str = "pair1";
pub const SECOND_LABEL: &str = "pair2";

pub fn analyze(input: &PipelineInput, config: &AnalysisConfig) -> Result<Bundle> {
    config.validate()?;
    let pair = analyze_pair(&input.pair, PRIMARY_LABEL, config)?;
    let (second_pair, cross_pair) = match &input.second {
        None => (
            Section::NotComputed("no second pair supplied".into()),
            Section::NotComputed("no second pair supplied".into()),
        ),
        Some(second) => {
            let b = analyze_pair(second, SECOND_LABEL, config)?;
            let cross = cross_pair(&pair, &b);
            (Section::Computed(b), Section::Computed(cross))
        }
    };
    Ok(Bundle {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        pair,
        second_pair,
        cross_pair,
    })
}

pub fn cross_pair(a: &PairAnalysis, b: &PairAnalysis) -> CrossPair {
    CrossPair {
        z_full: Section::from_result(cohort::churn_rate_z_test(&a.churn, &b.churn, cohort::Denominator::Full)),
        z_post_exclusion: Section::from_result(cohort::churn_rate_z_test(
            &a.churn,
            &b.churn,
            cohort::Denominator::PostExclusion,
        )),
        correlation: Section::from_result(cohort::cross_pair_correlation(&a.classifications, &b.classifications)),
    }
}

fn reliability_subset(
    input: &PairInput,
    config: &AnalysisConfig,
) -> Result<Option<BTreeSet<String>>> {
    match config.reliability_items {
        ReliabilityItems::FullyValid => Ok(None),
        ReliabilityItems::Analysable => {
            let (a1, a2) = (compute_item_accuracy(&input.v1), compute_item_accuracy(&input.v2));
            let cfg = config.rci();
            Ok(Some(
                a1.rows
                    .iter()
                    .zip(&a2.rows)
                    .filter(|(x, y)| rci::exclusion(x, y, &cfg).is_none())
                    .map(|(x, _)| x.item_id.clone())
                    .collect(),
            ))
        }
    }
}

fn model_summary(
    trials: &TrialSet,
    subset: Option<&BTreeSet<String>>,
    seed: u64,
    config: &AnalysisConfig,
) -> Result<ModelSummary> {
    let acc = compute_item_accuracy(trials);
    let accuracy = aggregate_accuracy(&acc)?;
    let mut rel = reliability::split_half_reliability_on(trials, subset, config.n_splits, seed)?;
    let icc = Section::from_result(reliability::icc_2_1_on(trials, subset));
    rel.icc = icc.computed().copied();
    let prophecy = Section::from_result(reliability::prophecy_k(rel.r_xx, trials.k(), &config.prophecy_targets));
    Ok(ModelSummary {
        model_id: trials.model_id().to_string(),
        accuracy,
        n_items_defined: acc.rows.iter().filter(|r| r.p.is_some()).count(),
        reliability: rel,
        icc,
        prophecy,
    })
}

pub fn analyze_pair(input: &PairInput, label: &str, config: &AnalysisConfig) -> Result<PairAnalysis> {
    check_matched(&input.v1, &input.v2)?;
    if input.v1.k() != input.v2.k() {
        return Err(Error::invalid(format!(
            "models disagree on K: {} vs {}",
            input.v1.k(),
            input.v2.k()
        )));
    }
    let cfg = config.rci();
    let subset = reliability_subset(input, config)?;
    let v1 = model_summary(&input.v1, subset.as_ref(), config.procedure_seed(label, "split_half:v1"), config)?;
    let v2 = model_summary(&input.v2, subset.as_ref(), config.procedure_seed(label, "split_half:v2"), config)?;

    let acc1 = compute_item_accuracy(&input.v1);
    let acc2 = compute_item_accuracy(&input.v2);
    let measurement = rci::measure_pair(&acc1, &acc2, v1.reliability.r_xx, v2.reliability.r_xx, &cfg)?;
    let classifications = rci::classify_items(&acc1, &acc2, &measurement, &cfg)?;
    let churn = rci::churn_report(&classifications)?;

    let null = if config.n_permutations == 0 {
        Section::NotComputed("permutation null disabled (n_permutations = 0)".into())
    } else if measurement.degenerate {
        Section::NotComputed("S_diff is zero; no item can change reliably".into())
    } else {
        Section::Computed(null::empirical_null(
            &input.v1,
            &input.v2,
            &measurement,
            config.procedure_seed(label, "null"),
            &config.null(),
            &cfg,
        )?)
    };

    let bins = if churn.n_analysable == 0 {
        Section::NotComputed("no analysable items".into())
    } else {
        Section::from_result(cohort::difficulty_bins(&classifications, &config.bin_edges))
    };
    let contingency = Section::from_result(cohort::domain_contingency(&classifications));
    let stratified = Section::from_result(rci::stratified_sensitivity(
        &acc1,
        &acc2,
        v1.reliability.r_xx,
        v2.reliability.r_xx,
        &config.strata_edges,
        &classifications,
        &cfg,
    ));
    let greedy = match &input.greedy {
        None => Section::NotComputed("no greedy runs supplied".into()),
        Some((g1, g2)) => Section::from_result(cohort::greedy_compare(g1, g2, &classifications, config.greedy_view)),
    };

    Ok(PairAnalysis {
        label: label.to_string(),
        n_items: input.v1.len(),
        k: input.v1.k(),
        v1,
        v2,
        measurement,
        classifications,
        churn,
        null,
        bins,
        contingency,
        stratified,
        greedy,
    })
}
