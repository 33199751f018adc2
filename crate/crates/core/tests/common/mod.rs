#![allow(dead_code)]

use itemchurn::model::{ItemBlock, TrialSet};
use itemchurn::seeding;
use itemchurn::synth::{generate_greedy, generate_pair, Baseline, Probabilities, Shift, SynthSpec};
use itemchurn::PairInput;

pub fn recipe(n_items: usize, k: usize, seed: u64, baseline: Baseline, shift: Shift) -> SynthSpec {
    SynthSpec {
        n_items,
        k,
        seed,
        probabilities: Probabilities::Recipe {
            baseline,
            shift,
            floor_frac: 0.1,
            ceiling_frac: 0.1,
        },
        domains: ["economics", "law", "physics", "psychology"].map(String::from).to_vec(),
        model_ids: ("v1".into(), "v2".into()),
    }
}

pub fn uniform_shift(n_items: usize, k: usize, seed: u64, lo: f64, hi: f64) -> SynthSpec {
    recipe(n_items, k, seed, Baseline::Uniform { lo: 0.0, hi: 1.0 }, Shift::Uniform { lo, hi })
}

pub fn pure_null(n_items: usize, k: usize, seed: u64) -> SynthSpec {
    recipe(n_items, k, seed, Baseline::Uniform { lo: 0.0, hi: 1.0 }, Shift::None)
}

pub fn pair_input(spec: &SynthSpec, greedy: bool) -> PairInput {
    let (v1, v2, truth) = generate_pair(spec).unwrap();
    let greedy = greedy.then(|| generate_greedy(spec, &truth));
    PairInput { v1, v2, greedy }
}

/// Marks each slot invalid with probability `frac`, deterministically.
pub fn with_invalid(trials: &TrialSet, frac: f64, seed: u64) -> TrialSet {
    let items: Vec<ItemBlock> = trials
        .items()
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let mut b = b.clone();
            for (j, s) in b.slots.iter_mut().enumerate() {
                let u = seeding::unit_f64(seeding::mix64(seeding::derive_indexed(seed, (i * 1000 + j) as u64)));
                if u < frac {
                    s.valid = false;
                }
            }
            b
        })
        .collect();
    TrialSet::new(trials.model_id(), trials.k(), items).unwrap()
}
