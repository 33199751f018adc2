//! Acceptance checks. Prints one PASS / FAIL / SKIP line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use itemchurn::cohort::{cramers_v, difficulty_bins, greedy_compare, two_proportion_z, Discordance, GreedyView, DEFAULT_EDGES};
use itemchurn::config::RunConfig;
use itemchurn::model::compute_item_accuracy;
use itemchurn::null::{permute_with_mask, swap_mask, SdiffMode};
use itemchurn::oracle::{brute_force_pipeline, compare_bundles};
use itemchurn::rci::{churn_report, classify_items, measure_pair, pair_measurement, Category, RciConfig, SdItemSet};
use itemchurn::reliability::{icc_2_1, prophecy, prophecy_k, single_sample_reliability, spearman_brown};
use itemchurn::stats::SdConvention;
use itemchurn::synth::{generate_greedy, generate_pair, Baseline, Probabilities, Shift, SynthSpec};
use itemchurn::{analyze, AnalysisConfig, FloorCeilingRule, ItemBlock, PairInput, PipelineInput, Slot, TrialSet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn within(name: &str, got: f64, want: f64, tol: f64) -> Result<String, String> {
    if (got - want).abs() <= tol {
        Ok(format!("{name} = {got:.4} (target {want} +/- {tol})"))
    } else {
        Err(format!("{name} = {got:.6}, expected {want} +/- {tol}"))
    }
}

fn all(parts: Vec<Result<String, String>>) -> Check {
    let mut ok = Vec::new();
    for p in parts {
        ok.push(p?);
    }
    Ok(ok.join("; "))
}

fn crit1() -> Check {
    let a = pair_measurement(0.058, 0.062, 1.96).map_err(|e| e.to_string())?;
    let b = pair_measurement(0.045, 0.031, 1.96).map_err(|e| e.to_string())?;
    all(vec![
        within("S_diff(.058,.062)", a.s_diff, 0.085, 0.001),
        within("min delta(.058,.062)", a.min_detectable_delta, 0.167, 0.001),
        within("S_diff(.045,.031)", b.s_diff, 0.055, 0.001),
        within("min delta(.045,.031)", b.min_detectable_delta, 0.107, 0.001),
    ])
}

fn crit2() -> Check {
    all(vec![
        within("V(26.5, 952)", cramers_v(26.5, 952, 4, 3), 0.118, 0.001),
        within("V(28.6, 652)", cramers_v(28.6, 652, 4, 3), 0.148, 0.001),
    ])
}

fn crit3() -> Check {
    let (z, _) = two_proportion_z(0.621 * 952.0, 952, 0.859 * 652.0, 652).map_err(|e| e.to_string())?;
    within("z", z, -10.4, 0.05)
}

fn crit4() -> Check {
    let r = prophecy_k(0.973, 10, &[0.80, 0.90]).map_err(|e| e.to_string())?;
    let got: Vec<u64> = r.table.iter().map(|row| row.k_needed).collect();
    if got == [2, 3] {
        Ok("k_needed = 2 for .80, 3 for .90".into())
    } else {
        Err(format!("k_needed = {got:?}, expected [2, 3]"))
    }
}

fn crit5() -> Check {
    let a = Discordance::new(83, 329).rate.unwrap() * 100.0;
    let b = Discordance::new(179, 425).rate.unwrap() * 100.0;
    all(vec![within("83/329 %", a, 25.2, 0.1), within("179/425 %", b, 42.1, 0.1)])
}

fn random_spec(rng: &mut ChaCha8Rng, seed: u64) -> SynthSpec {
    let n = rng.gen_range(20..=100);
    let k = rng.gen_range(6..=10);
    let baseline = match rng.gen_range(0..3) {
        0 => Baseline::Uniform { lo: 0.0, hi: 1.0 },
        1 => Baseline::Grid { levels: rng.gen_range(3..=11) },
        _ => Baseline::Clustered { low: (0.0, 0.3), high: (0.7, 1.0), frac_low: rng.gen_range(0.2..0.8) },
    };
    let shift = match rng.gen_range(0..3) {
        0 => Shift::None,
        1 => Shift::Constant { value: rng.gen_range(-0.2..0.2) },
        _ => Shift::Uniform { lo: -0.4, hi: 0.4 },
    };
    let mut spec = common::recipe(n, k, seed, baseline, shift);
    if let Probabilities::Recipe { floor_frac, ceiling_frac, .. } = &mut spec.probabilities {
        *floor_frac = rng.gen_range(0.0..0.2);
        *ceiling_frac = rng.gen_range(0.0..0.2);
    }
    spec
}

fn random_config(rng: &mut ChaCha8Rng, seed: u64) -> AnalysisConfig {
    let mut cfg = AnalysisConfig { seed, ..AnalysisConfig::default() };
    if rng.gen_bool(0.3) {
        cfg.floor_ceiling = FloorCeilingRule::BothExtreme;
    }
    if rng.gen_bool(0.3) {
        cfg.sd_items = SdItemSet::Analysable;
    }
    if rng.gen_bool(0.2) {
        cfg.sd_convention = SdConvention::Sample;
    }
    if rng.gen_bool(0.2) {
        cfg.threshold = 1.645;
    }
    if rng.gen_bool(0.2) {
        cfg.greedy_view = GreedyView::PostExclusion;
    }
    if rng.gen_bool(0.1) {
        cfg.null_sdiff_mode = SdiffMode::Reestimated;
        cfg.null_reestimate_splits = 20;
        cfg.n_permutations = 100;
    }
    cfg
}

fn crit6() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut compared, mut both_failed) = (0, 0);
    for i in 0..60u64 {
        let spec = random_spec(&mut rng, 1000 + i);
        let cfg = random_config(&mut rng, i);
        let (v1, v2, truth) = generate_pair(&spec).map_err(|e| e.to_string())?;
        let invalid = rng.gen_range(0.0..0.08);
        let greedy = rng.gen_bool(0.5).then(|| generate_greedy(&spec, &truth));
        let input = PipelineInput {
            pair: PairInput {
                v1: common::with_invalid(&v1, invalid, i),
                v2: common::with_invalid(&v2, invalid, i + 7),
                greedy,
            },
            second: None,
        };
        match (analyze(&input, &cfg), brute_force_pipeline(&input, &cfg)) {
            (Ok(a), Ok(b)) => {
                if let Err(d) = compare_bundles(&a, &b, 1e-12) {
                    return Err(format!("spec {i}: {} mismatches, first {}", d.len(), d[0]));
                }
                compared += 1;
            }
            (Err(_), Err(_)) => both_failed += 1,
            (a, b) => return Err(format!("spec {i}: main ok = {}, oracle ok = {}", a.is_ok(), b.is_ok())),
        }
    }
    let elapsed = start.elapsed();
    if compared < 50 {
        return Err(format!("only {compared} specs compared ({both_failed} rejected by both)"));
    }
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:.1?}"));
    }
    Ok(format!("{compared} specs equivalent at 1e-12 ({both_failed} rejected by both) in {elapsed:.1?}"))
}

fn swapped(c: Category) -> Category {
    match c {
        Category::Improved => Category::Deteriorated,
        Category::Deteriorated => Category::Improved,
        other => other,
    }
}

fn property_round(rng: &mut ChaCha8Rng, i: u64) -> Result<(), String> {
    let spec = random_spec(rng, 5000 + i);
    let (v1, v2, truth) = generate_pair(&spec).map_err(|e| e.to_string())?;
    let v2 = common::with_invalid(&v2, 0.05, i);
    let (a1, a2) = (compute_item_accuracy(&v1), compute_item_accuracy(&v2));
    let cfg = RciConfig::default();
    let Ok(pm) = measure_pair(&a1, &a2, 0.8, 0.8, &cfg) else { return Ok(()) };
    let fwd = classify_items(&a1, &a2, &pm, &cfg).map_err(|e| e.to_string())?;
    let back = classify_items(&a2, &a1, &pm, &cfg).map_err(|e| e.to_string())?;
    for (f, b) in fwd.iter().zip(&back) {
        if b.category != swapped(f.category) || f.rci.map(|r| -r) != b.rci {
            return Err(format!("swap antisymmetry broken on {}", f.item_id));
        }
    }
    let strict = RciConfig { threshold: cfg.threshold + rng.gen_range(0.0..2.0), ..cfg };
    let mut pm_strict = pm.clone();
    pm_strict.alpha_threshold = strict.threshold;
    let tight = classify_items(&a1, &a2, &pm_strict, &strict).map_err(|e| e.to_string())?;
    for (l, h) in fwd.iter().zip(&tight) {
        if l.category == Category::NoChange && h.category != Category::NoChange {
            return Err(format!("threshold monotonicity broken on {}", l.item_id));
        }
    }
    let ch = churn_report(&fwd).map_err(|e| e.to_string())?;
    if ch.n_analysable > 0 {
        let bins = difficulty_bins(&fwd, &DEFAULT_EDGES).map_err(|e| e.to_string())?;
        let imp: usize = bins.bins.iter().map(|b| b.n_improved).sum();
        let det: usize = bins.bins.iter().map(|b| b.n_deteriorated).sum();
        let n: usize = bins.bins.iter().map(|b| b.n).sum();
        if (imp, det, n) != (ch.n_improved, ch.n_deteriorated, ch.n_analysable) {
            return Err("bin sums differ from churn report".into());
        }
    }
    let (g1, g2) = generate_greedy(&spec, &truth);
    let g = greedy_compare(&g1, &g2, &fwd, GreedyView::FullBenchmark).map_err(|e| e.to_string())?;
    let col = |j: usize| g.confusion.iter().map(|r| r[j]).sum::<usize>();
    if col(0) != ch.n_improved || col(2) != ch.n_deteriorated || col(1) != ch.n_total - ch.n_changed() {
        return Err("confusion marginals differ from category counts".into());
    }
    let mask = swap_mask(v1.len(), i);
    let flip: Vec<bool> = mask.iter().map(|m| !m).collect();
    let count = |m: &[bool]| -> Result<(usize, usize), String> {
        let (p1, p2) = permute_with_mask(&v1, &v2, m).map_err(|e| e.to_string())?;
        let c = classify_items(&compute_item_accuracy(&p1), &compute_item_accuracy(&p2), &pm, &cfg)
            .map_err(|e| e.to_string())?;
        let r = churn_report(&c).map_err(|e| e.to_string())?;
        Ok((r.n_improved, r.n_deteriorated))
    };
    let (x, y) = (count(&mask)?, count(&flip)?);
    if x != (y.1, y.0) {
        return Err("complementary permutations do not swap counts".into());
    }
    Ok(())
}

fn crit7() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..60 {
        property_round(&mut rng, i)?;
    }
    for _ in 0..2000 {
        let a: f64 = rng.gen_range(-0.99..0.99);
        let b: f64 = rng.gen_range(-0.99..0.99);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if lo != hi && spearman_brown(lo).unwrap() >= spearman_brown(hi).unwrap() {
            return Err("Spearman-Brown not strictly increasing".into());
        }
        let s = spearman_brown(a).unwrap();
        if (s / (2.0 - s) - a).abs() > 1e-12 {
            return Err("Spearman-Brown inverse round trip off by more than 1e-12".into());
        }
        let k = rng.gen_range(2..50);
        let r: f64 = rng.gen_range(0.01..0.99);
        if (prophecy(single_sample_reliability(r, k), k as f64) - r).abs() > 1e-12 {
            return Err("prophecy round trip off by more than 1e-12".into());
        }
    }
    for k in 2..=12 {
        let items: Vec<ItemBlock> = (0..15)
            .map(|i| ItemBlock {
                item_id: format!("i{i:02}"),
                domain: "d".into(),
                slots: vec![Slot { correct: i % 3 == 0, valid: true, seed: None }; k],
            })
            .collect();
        let icc = icc_2_1(&TrialSet::new("m", k, items).unwrap()).map_err(|e| e.to_string())?;
        if icc != 1.0 {
            return Err(format!("ICC = {icc} on a deterministic matrix with K = {k}"));
        }
    }
    let precedence = {
        let block = |valid: usize| ItemBlock {
            item_id: "x".into(),
            domain: "d".into(),
            slots: (0..10).map(|j| Slot { correct: false, valid: j < valid, seed: None }).collect(),
        };
        let a1 = compute_item_accuracy(&TrialSet::new("a", 10, vec![block(5)]).unwrap());
        let a2 = compute_item_accuracy(&TrialSet::new("b", 10, vec![block(10)]).unwrap());
        itemchurn::rci::exclusion(&a1.rows[0], &a2.rows[0], &RciConfig::default())
    };
    if precedence != Some(Category::ExcludedInsufficientValid) {
        return Err(format!("exclusion precedence gave {precedence:?}"));
    }
    let spec = common::uniform_shift(300, 10, 77, -0.3, 0.3);
    let input = PipelineInput { pair: common::pair_input(&spec, true), second: None };
    let cfg = AnalysisConfig { n_splits: 500, n_permutations: 500, ..AnalysisConfig::default() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| analyze(&input, &cfg).unwrap().to_json().unwrap())
    };
    let one = run(1);
    if one != run(3) || one != run(8) {
        return Err("bundle differs across worker counts".into());
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(60) {
        return Err(format!("took {elapsed:.1?}"));
    }
    Ok(format!("all properties held in {elapsed:.1?}"))
}

fn crit8() -> Check {
    let start = Instant::now();
    let spec = common::recipe(
        2000,
        10,
        8,
        Baseline::Clustered { low: (0.0, 0.15), high: (0.85, 1.0), frac_low: 0.5 },
        Shift::None,
    );
    let input = PipelineInput { pair: common::pair_input(&spec, false), second: None };
    let b = analyze(&input, &AnalysisConfig { n_permutations: 0, ..AnalysisConfig::default() }).map_err(|e| e.to_string())?;
    let bins = b.pair.bins.computed().ok_or("bins not computed")?;
    let (low, high) = (&bins.bins[0], bins.bins.last().unwrap());
    let summary = format!(
        "low bin +{} / -{}, high bin +{} / -{} ({:.1?})",
        low.n_improved,
        low.n_deteriorated,
        high.n_improved,
        high.n_deteriorated,
        start.elapsed()
    );
    if low.n_improved > 0 && low.n_deteriorated == 0 && high.n_deteriorated > 0 && high.n_improved == 0 {
        Ok(summary)
    } else {
        Err(summary)
    }
}

fn crit9() -> Option<Check> {
    let path = PathBuf::from(std::env::var_os("ITEMCHURN_PUBLISHED_DATA")?);
    Some((|| {
        let mut run = RunConfig::from_path(&path).map_err(|e| e.to_string())?;
        run.analysis.floor_ceiling = FloorCeilingRule::BothExtreme;
        let input = run.load_input().map_err(|e| e.to_string())?;
        let b = analyze(&input, &run.analysis).map_err(|e| e.to_string())?;
        let second = b.second_pair.computed().ok_or("config needs both pairs")?;
        let mut checks = Vec::new();
        for (m, want) in [(&b.pair.v1, 0.973), (&b.pair.v2, 0.966), (&second.v1, 0.988), (&second.v2, 0.996)] {
            checks.push(within(&format!("r_xx {}", m.model_id), m.reliability.r_xx, want, 0.002));
        }
        for (p, want) in [(&b.pair, 1048usize), (second, 1348)] {
            let got = p.churn.n_excluded_floor_ceiling + p.churn.n_excluded_insufficient;
            checks.push(if got == want {
                Ok(format!("{} excluded {got}", p.label))
            } else {
                Err(format!("{} excluded {got}, expected {want}", p.label))
            });
        }
        for (p, want) in [(&b.pair, [33.7, 37.9, 28.4]), (second, [46.9, 14.1, 39.0])] {
            let post = p.churn.post_exclusion_rates.as_ref().ok_or("no analysable items")?;
            for (name, got, w) in [
                ("improved", post.improved, want[0]),
                ("no change", post.no_change, want[1]),
                ("deteriorated", post.deteriorated, want[2]),
            ] {
                checks.push(within(&format!("{} {name} %", p.label), 100.0 * got, w, 0.3));
            }
        }
        for (p, want) in [(&b.pair, (229.0, 229.0)), (second, (299.0, 299.0))] {
            let null = p.null.computed().ok_or("null not computed")?;
            checks.push(within(&format!("{} null p95 improved", p.label), null.null_improved_p95 as f64, want.0, 5.0));
            checks.push(within(&format!("{} null p95 deteriorated", p.label), null.null_deteriorated_p95 as f64, want.1, 5.0));
        }
        all(checks)
    })())
}

fn crit10() -> Check {
    let spec = common::uniform_shift(2000, 10, 10, -0.3, 0.3);
    let second = common::uniform_shift(2000, 10, 11, -0.2, 0.4);
    let input = PipelineInput {
        pair: common::pair_input(&spec, true),
        second: Some(common::pair_input(&second, true)),
    };
    let start = Instant::now();
    analyze(&input, &AnalysisConfig::default()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let msg = format!("two pairs of 2000 x 10, 1000 splits, 1000 permutations in {elapsed:.2?}");
    if elapsed < Duration::from_secs(60) {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() {
    let results: Vec<(u32, &str, Option<Check>)> = vec![
        (1, "measurement error arithmetic", Some(crit1())),
        (2, "Cramer's V arithmetic", Some(crit2())),
        (3, "two-proportion z", Some(crit3())),
        (4, "prophecy k_needed", Some(crit4())),
        (5, "greedy discordance ratios", Some(crit5())),
        (6, "oracle equivalence", Some(crit6())),
        (7, "property suite", Some(crit7())),
        (8, "regression to the middle under a pure null", Some(crit8())),
        (9, "published data reproduction", crit9()),
        (10, "full-scale performance", Some(crit10())),
    ];
    let mut failed = 0;
    for (n, name, r) in results {
        match r {
            Some(Ok(msg)) => println!("criterion {n:>2} PASS  {name}: {msg}"),
            Some(Err(msg)) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {msg}");
            }
            None => println!("criterion {n:>2} SKIP  {name}: set ITEMCHURN_PUBLISHED_DATA to a run config for the published trial files"),
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
