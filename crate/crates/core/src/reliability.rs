//! Stochastic-stability reliability of per-item accuracy: split-half
//! resampling with Spearman-Brown correction, ICC(2,1), and prophecy
//! extrapolation of the sample count needed for a target reliability.

use std::collections::BTreeSet;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ItemBlock, TrialSet};
use crate::seeding;
use crate::stats;

pub const DEFAULT_SPLITS: usize = 1000;
pub const CI_LEVEL: f64 = 0.95;
const CI_LOW_Q: f64 = 0.025;
const CI_HIGH_Q: f64 = 0.975;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityEstimate {
    pub model_id: String,
    /// Median Spearman-Brown corrected split-half reliability.
    pub r_xx: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
    pub n_splits: usize,
    /// Splits whose half-vectors had zero variance; skipped, not imputed.
    pub n_undefined_splits: usize,
    pub icc: Option<f64>,
    pub n_items_used: usize,
    /// Items left out because at least one slot was invalid.
    pub n_items_partial: usize,
    pub half_sizes: (usize, usize),
    /// Set when K is odd and the halves differ in size; the two-half
    /// correction is then an approximation.
    pub unequal_halves: bool,
    pub seed: u64,
    /// Corrected reliability per split, in split order.
    pub replicates: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProphecyResult {
    pub r_k: f64,
    pub k: usize,
    /// Implied single-sample reliability.
    pub r_single: f64,
    pub table: Vec<ProphecyRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProphecyRow {
    pub target_r: f64,
    pub k_needed: u64,
}

/// Spearman-Brown correction of a half-length correlation to full length.
pub fn spearman_brown(r_half: f64) -> Result<f64> {
    if !r_half.is_finite() || r_half <= -1.0 || r_half > 1.0 {
        return Err(Error::invalid(format!(
            "Spearman-Brown needs -1 < r <= 1, got {r_half}"
        )));
    }
    Ok(2.0 * r_half / (1.0 + r_half))
}

/// Reliability of a measurement lengthened by `factor` given reliability `r`
/// at unit length.
pub fn prophecy(r: f64, factor: f64) -> f64 {
    factor * r / (1.0 + (factor - 1.0) * r)
}

/// Single-sample reliability implied by reliability `r_k` at `k` samples.
pub fn single_sample_reliability(r_k: f64, k: usize) -> f64 {
    let k = k as f64;
    r_k / (k - (k - 1.0) * r_k)
}

pub fn prophecy_k(r_k: f64, k: usize, targets: &[f64]) -> Result<ProphecyResult> {
    if !(r_k > 0.0 && r_k < 1.0) {
        return Err(Error::invalid(format!("prophecy needs 0 < r_K < 1, got {r_k}")));
    }
    if k < 1 {
        return Err(Error::invalid("prophecy needs K >= 1"));
    }
    let r_single = single_sample_reliability(r_k, k);
    let mut table = Vec::with_capacity(targets.len());
    for &target in targets {
        if !(target > 0.0 && target < 1.0) {
            return Err(Error::invalid(format!("prophecy target must lie in (0, 1), got {target}")));
        }
        table.push(ProphecyRow {
            target_r: target,
            k_needed: minimal_k(r_single, target),
        });
    }
    Ok(ProphecyResult {
        r_k,
        k,
        r_single,
        table,
    })
}

fn minimal_k(r_single: f64, target: f64) -> u64 {
    const TOL: f64 = 1e-12;
    let meets = |k: u64| prophecy(r_single, k as f64) >= target - TOL;
    // closed form, then nudge past rounding either way
    let guess = target * (1.0 - r_single) / (r_single * (1.0 - target));
    let mut k = (guess.ceil().max(1.0)) as u64;
    while !meets(k) {
        k += 1;
    }
    while k > 1 && meets(k - 1) {
        k -= 1;
    }
    k
}

/// Half sizes for K samples: ceil(K/2) and floor(K/2).
pub fn half_sizes(k: usize) -> (usize, usize) {
    (k.div_ceil(2), k / 2)
}

/// Seed of the `split`-th replicate.
pub fn split_seed(seed: u64, split: usize) -> u64 {
    seeding::derive_indexed(seed, split as u64)
}

/// Draws this split's half-A / half-B correct counts for every item.
///
/// Each item gets its own Fisher-Yates shuffle of sample positions, drawn in
/// canonical item order from the split's stream; the first ceil(K/2)
/// positions form half A.
fn split_counts(items: &[&ItemBlock], k: usize, seed: u64) -> (Vec<u32>, Vec<u32>) {
    let (ha, _) = half_sizes(k);
    let mut rng = seeding::stream(seed);
    let mut positions: Vec<usize> = (0..k).collect();
    let mut a = Vec::with_capacity(items.len());
    let mut b = Vec::with_capacity(items.len());
    for item in items {
        for (i, p) in positions.iter_mut().enumerate() {
            *p = i;
        }
        for i in (1..k).rev() {
            let j = rng.gen_range(0..=i);
            positions.swap(i, j);
        }
        let mut ca = 0u32;
        let mut cb = 0u32;
        for (rank, &pos) in positions.iter().enumerate() {
            if item.slots[pos].counts_correct() {
                if rank < ha {
                    ca += 1;
                } else {
                    cb += 1;
                }
            }
        }
        a.push(ca);
        b.push(cb);
    }
    (a, b)
}

/// Split-half reliability over all fully valid items.
pub fn split_half_reliability(trials: &TrialSet, n_splits: usize, seed: u64) -> Result<ReliabilityEstimate> {
    split_half_reliability_on(trials, None, n_splits, seed)
}

/// Split-half reliability restricted to `subset` (when given) among the fully
/// valid items.
///
/// Correlating counts instead of proportions is exact here: within a half all
/// items share the same denominator, and Pearson's r is scale invariant.
pub fn split_half_reliability_on(
    trials: &TrialSet,
    subset: Option<&BTreeSet<String>>,
    n_splits: usize,
    seed: u64,
) -> Result<ReliabilityEstimate> {
    if n_splits == 0 {
        return Err(Error::invalid("n_splits must be positive"));
    }
    let k = trials.k();
    let candidates: Vec<&ItemBlock> = trials
        .items()
        .iter()
        .filter(|b| subset.is_none_or(|s| s.contains(&b.item_id)))
        .collect();
    let used: Vec<&ItemBlock> = candidates.iter().copied().filter(|b| b.fully_valid()).collect();
    let n_partial = candidates.len() - used.len();
    if used.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "split-half reliability for '{}' needs at least 3 fully valid items, found {}",
            trials.model_id(),
            used.len()
        )));
    }

    let replicates: Vec<Option<f64>> = (0..n_splits)
        .into_par_iter()
        .map(|s| {
            let (a, b) = split_counts(&used, k, split_seed(seed, s));
            stats::pearson_counts(&a, &b).and_then(|r| spearman_brown(r).ok())
        })
        .collect();

    let mut defined: Vec<f64> = replicates.iter().flatten().copied().collect();
    let n_undefined = n_splits - defined.len();
    if defined.is_empty() {
        return Err(Error::Degenerate(format!(
            "every split of '{}' had a zero-variance half; reliability undefined",
            trials.model_id()
        )));
    }
    defined.sort_by(f64::total_cmp);
    let (ha, hb) = half_sizes(k);
    Ok(ReliabilityEstimate {
        model_id: trials.model_id().to_string(),
        r_xx: stats::median_sorted(&defined).expect("non-empty"),
        ci_low: stats::nearest_rank(&defined, CI_LOW_Q).expect("non-empty"),
        ci_high: stats::nearest_rank(&defined, CI_HIGH_Q).expect("non-empty"),
        ci_level: CI_LEVEL,
        n_splits,
        n_undefined_splits: n_undefined,
        icc: None,
        n_items_used: used.len(),
        n_items_partial: n_partial,
        half_sizes: (ha, hb),
        unequal_halves: ha != hb,
        seed,
        replicates,
    })
}

/// ICC(2,1): two-way random effects, single measures, over the binary
/// item x sample-position matrix of fully valid items.
pub fn icc_2_1(trials: &TrialSet) -> Result<f64> {
    icc_2_1_on(trials, None)
}

pub fn icc_2_1_on(trials: &TrialSet, subset: Option<&BTreeSet<String>>) -> Result<f64> {
    let rows: Vec<&ItemBlock> = trials
        .items()
        .iter()
        .filter(|b| b.fully_valid() && subset.is_none_or(|s| s.contains(&b.item_id)))
        .collect();
    let n = rows.len();
    let k = trials.k();
    if n < 2 || k < 2 {
        return Err(Error::InsufficientData(format!(
            "ICC needs at least 2 fully valid items and 2 samples, found {n} x {k}"
        )));
    }

    // Sums of squares scaled by N = n*k stay integral for a 0/1 matrix.
    let mut col = vec![0i128; k];
    let mut sum_row_sq = 0i128;
    let mut total = 0i128;
    for b in &rows {
        let mut r = 0i128;
        for (j, s) in b.slots.iter().enumerate() {
            if s.counts_correct() {
                r += 1;
                col[j] += 1;
            }
        }
        sum_row_sq += r * r;
        total += r;
    }
    let sum_col_sq: i128 = col.iter().map(|c| c * c).sum();
    let (ni, ki) = (n as i128, k as i128);
    let big_n = ni * ki;
    let sst = big_n * total - total * total;
    if sst == 0 {
        return Err(Error::Degenerate(
            "ICC undefined: every cell of the correctness matrix is equal".into(),
        ));
    }
    let ssr = ni * sum_row_sq - total * total;
    let ssc = ki * sum_col_sq - total * total;
    let sse = sst - ssr - ssc;

    let scale = big_n as f64;
    let ms_r = ssr as f64 / scale / (n - 1) as f64;
    let ms_c = ssc as f64 / scale / (k - 1) as f64;
    let ms_e = sse as f64 / scale / ((n - 1) * (k - 1)) as f64;
    let kf = k as f64;
    let denom = ms_r + (kf - 1.0) * ms_e + kf / n as f64 * (ms_c - ms_e);
    if denom == 0.0 {
        return Err(Error::Degenerate("ICC undefined: zero denominator".into()));
    }
    Ok((ms_r - ms_e) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Slot;
    use approx::assert_relative_eq;

    fn set_from_rows(rows: &[Vec<bool>]) -> TrialSet {
        let k = rows[0].len();
        TrialSet::new(
            "m",
            k,
            rows.iter()
                .enumerate()
                .map(|(i, r)| ItemBlock {
                    item_id: format!("i{i:03}"),
                    domain: "d".into(),
                    slots: r.iter().map(|&c| Slot::observed(c)).collect(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn spearman_brown_values() {
        assert_eq!(spearman_brown(0.0).unwrap(), 0.0);
        assert_relative_eq!(spearman_brown(1.0 / 3.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_eq!(spearman_brown(1.0).unwrap(), 1.0);
        assert!(spearman_brown(-1.0).is_err());
        assert!(spearman_brown(f64::NAN).is_err());
    }

    #[test]
    fn spearman_brown_reference_value() {
        // 2r/(1+r) at r = .9487 is 1.8974/1.9487 = .97367...; the inverse map
        // r = s/(2-s) recovers the input.
        let s = spearman_brown(0.9487).unwrap();
        assert!((s - 0.9737).abs() < 5e-5, "{s}");
        assert_relative_eq!(s / (2.0 - s), 0.9487, epsilon = 1e-12);
    }

    #[test]
    fn prophecy_reference_targets() {
        let res = prophecy_k(0.973, 10, &[0.80, 0.90]).unwrap();
        assert_eq!(res.table[0].k_needed, 2);
        assert_eq!(res.table[1].k_needed, 3);
        let id = prophecy_k(0.5, 1, &[0.5]).unwrap();
        assert_eq!(id.table[0].k_needed, 1);
        assert!(prophecy_k(1.0, 10, &[0.8]).is_err());
        assert!(prophecy_k(0.9, 10, &[1.0]).is_err());
    }

    #[test]
    fn deterministic_items_give_unit_reliability() {
        let rows: Vec<Vec<bool>> = (0..12).map(|i| vec![i % 3 == 0; 10]).collect();
        let est = split_half_reliability(&set_from_rows(&rows), 50, 1).unwrap();
        assert_eq!(est.r_xx, 1.0);
        assert_eq!((est.ci_low, est.ci_high), (1.0, 1.0));
        assert_eq!(est.n_undefined_splits, 0);
        assert_eq!(icc_2_1(&set_from_rows(&rows)).unwrap(), 1.0);
    }

    #[test]
    fn too_few_items() {
        let rows = vec![vec![true, false], vec![false, true]];
        assert!(matches!(
            split_half_reliability(&set_from_rows(&rows), 10, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn constant_matrix_is_degenerate() {
        let rows = vec![vec![true; 4]; 5];
        assert!(matches!(icc_2_1(&set_from_rows(&rows)), Err(Error::Degenerate(_))));
        assert!(matches!(
            split_half_reliability(&set_from_rows(&rows), 10, 1),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn odd_k_flags_unequal_halves() {
        let rows: Vec<Vec<bool>> = (0..8)
            .map(|i| (0..5).map(|j| (i + j) % 3 != 0 || i < 3).collect())
            .collect();
        let est = split_half_reliability(&set_from_rows(&rows), 20, 3).unwrap();
        assert_eq!(est.half_sizes, (3, 2));
        assert!(est.unequal_halves);
    }
}
