//! Empirical null for reliable-change counts via block-level version-label
//! permutation.
//!
//! A block is one item's full K-sample set for one model. Each permutation
//! swaps the v1 and v2 blocks of every item independently with probability
//! 1/2, re-applies the exclusion rules and reclassifies.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_matched, compute_item_accuracy, AccuracyRow, AccuracyTable, TrialSet};
use crate::rci::{self, Category, PairMeasurement, RciConfig};
use crate::reliability;
use crate::seeding;
use crate::stats;

pub const DEFAULT_PERMUTATIONS: usize = 1000;
pub const MIN_PERMUTATIONS: usize = 100;
pub const NULL_QUANTILE: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SdiffMode {
    /// S_diff held at the observed-data value.
    #[default]
    Fixed,
    /// Split-half reliability and SEMs re-estimated on every permutation.
    Reestimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullConfig {
    pub n_permutations: usize,
    pub sdiff_mode: SdiffMode,
    /// Split count used per permutation when re-estimating.
    pub reestimate_splits: usize,
}

impl Default for NullConfig {
    fn default() -> Self {
        NullConfig {
            n_permutations: DEFAULT_PERMUTATIONS,
            sdiff_mode: SdiffMode::Fixed,
            reestimate_splits: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountSummary {
    pub mean: f64,
    pub min: usize,
    pub median: usize,
    pub p95: usize,
    pub max: usize,
}

impl CountSummary {
    fn from_counts(counts: &[usize]) -> Self {
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        CountSummary {
            mean: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
            min: sorted[0],
            median: stats::nearest_rank(&sorted, 0.5).expect("non-empty"),
            p95: stats::nearest_rank(&sorted, NULL_QUANTILE).expect("non-empty"),
            max: *sorted.last().expect("non-empty"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub n_permutations: usize,
    pub seed: u64,
    pub sdiff_mode: SdiffMode,
    pub observed_improved: usize,
    pub observed_deteriorated: usize,
    pub null_improved_p95: usize,
    pub null_deteriorated_p95: usize,
    pub null_improved: CountSummary,
    pub null_deteriorated: CountSummary,
    pub exceeds_improved: bool,
    pub exceeds_deteriorated: bool,
    /// Per-permutation (improved, deteriorated) counts in permutation order.
    pub samples: Vec<(usize, usize)>,
}

/// Coin flips for one permutation, one per item in canonical order; `true`
/// swaps the item's blocks.
pub fn swap_mask(n_items: usize, seed: u64) -> Vec<bool> {
    let mut rng = seeding::stream(seed);
    (0..n_items).map(|_| rng.gen::<bool>()).collect()
}

pub fn permutation_seed(seed: u64, index: usize) -> u64 {
    seeding::derive_indexed(seed, index as u64)
}

pub fn permute_with_mask(v1: &TrialSet, v2: &TrialSet, mask: &[bool]) -> Result<(TrialSet, TrialSet)> {
    check_matched(v1, v2)?;
    if mask.len() != v1.len() {
        return Err(Error::invalid(format!(
            "swap mask has {} entries for {} items",
            mask.len(),
            v1.len()
        )));
    }
    let mut a = Vec::with_capacity(v1.len());
    let mut b = Vec::with_capacity(v1.len());
    for ((x, y), &swap) in v1.items().iter().zip(v2.items()).zip(mask) {
        let (first, second) = if swap { (y, x) } else { (x, y) };
        a.push(crate::model::ItemBlock {
            item_id: x.item_id.clone(),
            domain: x.domain.clone(),
            slots: first.slots.clone(),
        });
        b.push(crate::model::ItemBlock {
            item_id: y.item_id.clone(),
            domain: y.domain.clone(),
            slots: second.slots.clone(),
        });
    }
    Ok((
        TrialSet::new(v1.model_id(), v1.k(), a)?,
        TrialSet::new(v2.model_id(), v2.k(), b)?,
    ))
}

/// Swaps each item's blocks between the two models with probability 1/2.
pub fn permute_pair(v1: &TrialSet, v2: &TrialSet, seed: u64) -> Result<(TrialSet, TrialSet)> {
    if v1.k() != v2.k() {
        return Err(Error::invalid("block permutation needs equal K in both models"));
    }
    permute_with_mask(v1, v2, &swap_mask(v1.len(), seed))
}

fn counts_fixed(rows: &[(&AccuracyRow, &AccuracyRow)], mask: &[bool], pm: &PairMeasurement, cfg: &RciConfig) -> (usize, usize) {
    let (mut imp, mut det) = (0, 0);
    for (&(a, b), &swap) in rows.iter().zip(mask) {
        let (x, y) = if swap { (b, a) } else { (a, b) };
        if rci::exclusion(x, y, cfg).is_some() {
            continue;
        }
        let dp = rci::delta_p(x, y).expect("analysable");
        match rci::categorize(dp / pm.s_diff, pm.alpha_threshold) {
            Category::Improved => imp += 1,
            Category::Deteriorated => det += 1,
            _ => {}
        }
    }
    (imp, det)
}

fn counts_reestimated(
    v1: &TrialSet,
    v2: &TrialSet,
    mask: &[bool],
    perm_seed: u64,
    null_cfg: &NullConfig,
    cfg: &RciConfig,
) -> Result<(usize, usize)> {
    let (p1, p2) = permute_with_mask(v1, v2, mask)?;
    let r1 = reliability::split_half_reliability(&p1, null_cfg.reestimate_splits, seeding::derive_labeled(perm_seed, "split_half:v1"))?;
    let r2 = reliability::split_half_reliability(&p2, null_cfg.reestimate_splits, seeding::derive_labeled(perm_seed, "split_half:v2"))?;
    let (a1, a2) = (compute_item_accuracy(&p1), compute_item_accuracy(&p2));
    let pm = rci::measure_pair(&a1, &a2, r1.r_xx, r2.r_xx, cfg)?;
    let cls = rci::classify_items(&a1, &a2, &pm, cfg)?;
    Ok((
        cls.iter().filter(|c| c.category == Category::Improved).count(),
        cls.iter().filter(|c| c.category == Category::Deteriorated).count(),
    ))
}

/// Builds the permutation null and compares the observed counts to its 95th
/// percentiles (nearest rank).
pub fn empirical_null(
    v1: &TrialSet,
    v2: &TrialSet,
    pm: &PairMeasurement,
    seed: u64,
    null_cfg: &NullConfig,
    cfg: &RciConfig,
) -> Result<NullCalibration> {
    if null_cfg.n_permutations < MIN_PERMUTATIONS {
        return Err(Error::invalid(format!(
            "empirical null needs at least {MIN_PERMUTATIONS} permutations, got {}",
            null_cfg.n_permutations
        )));
    }
    if pm.s_diff <= 0.0 {
        return Err(Error::Degenerate("empirical null needs S_diff > 0".into()));
    }
    check_matched(v1, v2)?;
    let (acc1, acc2): (AccuracyTable, AccuracyTable) = (compute_item_accuracy(v1), compute_item_accuracy(v2));
    let rows: Vec<(&AccuracyRow, &AccuracyRow)> = acc1.rows.iter().zip(&acc2.rows).collect();

    let observed = counts_fixed(&rows, &vec![false; rows.len()], pm, cfg);
    let samples: Vec<(usize, usize)> = (0..null_cfg.n_permutations)
        .into_par_iter()
        .map(|i| {
            let perm_seed = permutation_seed(seed, i);
            let mask = swap_mask(rows.len(), perm_seed);
            match null_cfg.sdiff_mode {
                SdiffMode::Fixed => Ok(counts_fixed(&rows, &mask, pm, cfg)),
                SdiffMode::Reestimated => counts_reestimated(v1, v2, &mask, perm_seed, null_cfg, cfg),
            }
        })
        .collect::<Result<_>>()?;

    let imp: Vec<usize> = samples.iter().map(|s| s.0).collect();
    let det: Vec<usize> = samples.iter().map(|s| s.1).collect();
    let null_improved = CountSummary::from_counts(&imp);
    let null_deteriorated = CountSummary::from_counts(&det);
    Ok(NullCalibration {
        n_permutations: null_cfg.n_permutations,
        seed,
        sdiff_mode: null_cfg.sdiff_mode,
        observed_improved: observed.0,
        observed_deteriorated: observed.1,
        null_improved_p95: null_improved.p95,
        null_deteriorated_p95: null_deteriorated.p95,
        exceeds_improved: observed.0 > null_improved.p95,
        exceeds_deteriorated: observed.1 > null_deteriorated.p95,
        null_improved,
        null_deteriorated,
        samples,
    })
}
