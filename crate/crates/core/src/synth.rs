//! Synthetic paired trial sets with known per-item success probabilities.
//!
//! Every sample is an independent Bernoulli(q) draw whose uniform variate
//! comes from a seed keyed by (model, item, sample), so adding items or
//! samples never perturbs existing draws.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GreedyRun, ItemBlock, Slot, TrialSet};
use crate::seeding;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Baseline {
    Uniform { lo: f64, hi: f64 },
    /// q drawn uniformly from {0, 1/(levels-1), ..., 1}.
    Grid { levels: usize },
    /// Mixture of two uniform clusters near the extremes.
    Clustered { low: (f64, f64), high: (f64, f64), frac_low: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shift {
    None,
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probabilities {
    Explicit {
        q_v1: Vec<f64>,
        q_v2: Vec<f64>,
    },
    Recipe {
        baseline: Baseline,
        shift: Shift,
        /// Fraction of items pinned at q = 0 in both versions.
        #[serde(default)]
        floor_frac: f64,
        /// Fraction of items pinned at q = 1 in both versions.
        #[serde(default)]
        ceiling_frac: f64,
    },
}

fn default_domains() -> Vec<String> {
    ["economics", "law", "physics", "psychology"].map(String::from).to_vec()
}

fn default_models() -> (String, String) {
    ("v1".into(), "v2".into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_items: usize,
    pub k: usize,
    pub seed: u64,
    pub probabilities: Probabilities,
    /// Assigned round-robin by item index.
    #[serde(default = "default_domains")]
    pub domains: Vec<String>,
    #[serde(default = "default_models")]
    pub model_ids: (String, String),
}

impl SynthSpec {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: SynthSpec = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::invalid(format!("synthetic K must be at least 2, got {}", self.k)));
        }
        if self.domains.is_empty() {
            return Err(Error::invalid("at least one domain label is required"));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        match &self.probabilities {
            Probabilities::Explicit { q_v1, q_v2 } => {
                if q_v1.len() != self.n_items || q_v2.len() != self.n_items {
                    return Err(Error::invalid(format!(
                        "explicit probabilities need {} entries per model, got {} and {}",
                        self.n_items,
                        q_v1.len(),
                        q_v2.len()
                    )));
                }
                if !q_v1.iter().chain(q_v2).all(|&q| unit(q)) {
                    return Err(Error::invalid("probabilities must lie in [0, 1]"));
                }
            }
            Probabilities::Recipe { baseline, shift, floor_frac, ceiling_frac } => {
                let ok = match baseline {
                    Baseline::Uniform { lo, hi } => unit(*lo) && unit(*hi) && lo <= hi,
                    Baseline::Grid { levels } => *levels >= 2,
                    Baseline::Clustered { low, high, frac_low } => {
                        unit(low.0) && unit(low.1) && low.0 <= low.1 && unit(high.0) && unit(high.1) && high.0 <= high.1 && unit(*frac_low)
                    }
                };
                if !ok {
                    return Err(Error::invalid(format!("invalid baseline recipe {baseline:?}")));
                }
                if let Shift::Uniform { lo, hi } = shift {
                    if lo > hi {
                        return Err(Error::invalid("shift range must have lo <= hi"));
                    }
                }
                if !(unit(*floor_frac) && unit(*ceiling_frac) && floor_frac + ceiling_frac <= 1.0) {
                    return Err(Error::invalid("floor and ceiling fractions must be in [0, 1] and sum to at most 1"));
                }
            }
        }
        Ok(())
    }

    pub fn item_id(&self, index: usize) -> String {
        let width = self.n_items.saturating_sub(1).to_string().len().max(5);
        format!("item_{index:0width$}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthItem {
    pub item_id: String,
    pub domain: String,
    pub q_v1: f64,
    pub q_v2: f64,
    pub true_delta: f64,
    /// Both versions pinned at the same extreme.
    pub true_floor_ceiling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub seed: u64,
    pub k: usize,
    pub items: Vec<TruthItem>,
}

fn unit_draw(seed: u64, label: &str, index: usize) -> f64 {
    seeding::unit_f64(seeding::mix64(seeding::derive_indexed(
        seeding::derive_labeled(seed, label),
        index as u64,
    )))
}

fn probabilities(spec: &SynthSpec) -> Vec<(f64, f64)> {
    match &spec.probabilities {
        Probabilities::Explicit { q_v1, q_v2 } => q_v1.iter().copied().zip(q_v2.iter().copied()).collect(),
        Probabilities::Recipe { baseline, shift, floor_frac, ceiling_frac } => (0..spec.n_items)
            .map(|i| {
                let u_ext = unit_draw(spec.seed, "extremes", i);
                if u_ext < *floor_frac {
                    return (0.0, 0.0);
                }
                if u_ext < floor_frac + ceiling_frac {
                    return (1.0, 1.0);
                }
                let u = unit_draw(spec.seed, "baseline", i);
                let q1 = match baseline {
                    Baseline::Uniform { lo, hi } => lo + (hi - lo) * u,
                    Baseline::Grid { levels } => {
                        let step = ((u * *levels as f64) as usize).min(levels - 1);
                        step as f64 / (levels - 1) as f64
                    }
                    Baseline::Clustered { low, high, frac_low } => {
                        let v = unit_draw(spec.seed, "cluster", i);
                        let (lo, hi) = if v < *frac_low { *low } else { *high };
                        lo + (hi - lo) * u
                    }
                };
                let s = match shift {
                    Shift::None => 0.0,
                    Shift::Constant { value } => *value,
                    Shift::Uniform { lo, hi } => lo + (hi - lo) * unit_draw(spec.seed, "shift", i),
                };
                (q1, (q1 + s).clamp(0.0, 1.0))
            })
            .collect(),
    }
}

/// Seed of one Bernoulli draw.
pub fn trial_seed(master: u64, model: usize, item: usize, sample: usize) -> u64 {
    let base = seeding::derive_labeled(master, "trials");
    let m = seeding::derive_indexed(base, model as u64);
    let i = seeding::derive_indexed(m, item as u64);
    seeding::derive_indexed(i, sample as u64)
}

fn bernoulli(seed: u64, q: f64) -> bool {
    seeding::unit_f64(seeding::mix64(seed)) < q
}

pub fn generate_pair(spec: &SynthSpec) -> Result<(TrialSet, TrialSet, GroundTruth)> {
    spec.validate()?;
    let qs = probabilities(spec);
    let mut truth = Vec::with_capacity(spec.n_items);
    let mut blocks = [Vec::with_capacity(spec.n_items), Vec::with_capacity(spec.n_items)];
    for (i, &(q1, q2)) in qs.iter().enumerate() {
        let item_id = spec.item_id(i);
        let domain = spec.domains[i % spec.domains.len()].clone();
        for (m, q) in [q1, q2].into_iter().enumerate() {
            let slots = (0..spec.k)
                .map(|s| {
                    let seed = trial_seed(spec.seed, m, i, s);
                    Slot {
                        correct: bernoulli(seed, q),
                        valid: true,
                        seed: Some(seed),
                    }
                })
                .collect();
            blocks[m].push(ItemBlock {
                item_id: item_id.clone(),
                domain: domain.clone(),
                slots,
            });
        }
        truth.push(TruthItem {
            item_id,
            domain,
            q_v1: q1,
            q_v2: q2,
            true_delta: q2 - q1,
            true_floor_ceiling: q1 == q2 && (q1 == 0.0 || q1 == 1.0),
        });
    }
    let [b1, b2] = blocks;
    Ok((
        TrialSet::new(spec.model_ids.0.clone(), spec.k, b1)?,
        TrialSet::new(spec.model_ids.1.clone(), spec.k, b2)?,
        GroundTruth {
            seed: spec.seed,
            k: spec.k,
            items: truth,
        },
    ))
}

/// One extra single-shot Bernoulli draw per item and model, standing in for a
/// greedy run.
pub fn generate_greedy(spec: &SynthSpec, truth: &GroundTruth) -> (GreedyRun, GreedyRun) {
    let base = seeding::derive_labeled(spec.seed, "greedy");
    let mut runs = [
        GreedyRun { model_id: spec.model_ids.0.clone(), outcomes: Default::default() },
        GreedyRun { model_id: spec.model_ids.1.clone(), outcomes: Default::default() },
    ];
    for (i, item) in truth.items.iter().enumerate() {
        for (m, q) in [item.q_v1, item.q_v2].into_iter().enumerate() {
            let seed = seeding::derive_indexed(seeding::derive_indexed(base, m as u64), i as u64);
            runs[m].outcomes.insert(item.item_id.clone(), bernoulli(seed, q));
        }
    }
    let [a, b] = runs;
    (a, b)
}
