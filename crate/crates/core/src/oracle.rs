//! Brute-force re-implementation of the whole analysis for small instances.
//!
//! Everything here is written as plain loops over the raw slot matrices and
//! shares nothing with the main modules except the seed derivation and the
//! random stream, which it replays call for call. It exists to check the main
//! pipeline field by field, so it favours clarity over speed.

use std::collections::BTreeMap;

use rand::Rng;
use serde_json::Value;

use crate::cohort::{
    ContingencyResult, CrossPairResult, DifficultyBin, DifficultyBinTable, Discordance, DomainRow, GreedyComparison,
    GreedyView, ZTest,
};
use crate::error::{Error, Result};
use crate::model::{GreedyRun, TrialSet};
use crate::null::{CountSummary, NullCalibration, SdiffMode};
use crate::pipeline::{
    AnalysisConfig, Bundle, CrossPair, ModelSummary, PairAnalysis, PairInput, PipelineInput, ReliabilityItems,
    Section, PRIMARY_LABEL, SECOND_LABEL,
};
use crate::rci::{
    Category, CategoryRates, ChurnReport, EffectSizes, EffectSummary, FloorCeilingRule, PairMeasurement,
    RciClassification, SdItemSet, SkippedStratum, StratifiedSensitivity, StratumResult,
};
use crate::reliability::{ProphecyResult, ProphecyRow, ReliabilityEstimate};
use crate::seeding;
use crate::stats::SdConvention;

pub const MAX_ITEMS: usize = 1000;
pub const MAX_K: usize = 20;

/// Raw item: id, domain, (correct, valid) per slot.
struct Item {
    id: String,
    domain: String,
    slots: Vec<(bool, bool)>,
}

fn items_of(t: &TrialSet) -> Vec<Item> {
    t.items()
        .iter()
        .map(|b| Item {
            id: b.item_id.clone(),
            domain: b.domain.clone(),
            slots: b.slots.iter().map(|s| (s.correct, s.valid)).collect(),
        })
        .collect()
}

fn counts(item: &Item) -> (u32, u32) {
    let mut correct = 0;
    let mut valid = 0;
    for &(c, v) in &item.slots {
        if v {
            valid += 1;
            if c {
                correct += 1;
            }
        }
    }
    (correct, valid)
}

fn prop(item: &Item) -> Option<f64> {
    let (c, v) = counts(item);
    if v == 0 {
        None
    } else {
        Some(c as f64 / v as f64)
    }
}

fn mean(xs: &[f64]) -> f64 {
    let mut s = 0.0;
    for x in xs {
        s += x;
    }
    s / xs.len() as f64
}

fn sd(xs: &[f64], conv: SdConvention) -> f64 {
    let m = mean(xs);
    let mut ss = 0.0;
    for x in xs {
        ss += (x - m).powi(2);
    }
    let d = match conv {
        SdConvention::Population => xs.len() as f64,
        SdConvention::Sample => (xs.len() - 1) as f64,
    };
    (ss / d).sqrt()
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn nearest_rank_f(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut rank = (q * v.len() as f64 - 1e-9).ceil() as usize;
    if rank < 1 {
        rank = 1;
    }
    if rank > v.len() {
        rank = v.len();
    }
    v[rank - 1]
}

fn nearest_rank_u(xs: &[usize], q: f64) -> usize {
    let mut v = xs.to_vec();
    v.sort();
    let mut rank = (q * v.len() as f64 - 1e-9).ceil() as usize;
    rank = rank.clamp(1, v.len());
    v[rank - 1]
}

fn pearson_f(x: &[f64], y: &[f64]) -> Option<f64> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for i in 0..x.len() {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

// ---------------------------------------------------------------- reliability

fn split_half(items: &[&Item], k: usize, n_splits: usize, seed: u64, model_id: &str) -> Result<ReliabilityEstimate> {
    let ha = (k + 1) / 2;
    let hb = k / 2;
    let mut replicates = Vec::new();
    for s in 0..n_splits {
        let mut rng = seeding::stream(seeding::derive_indexed(seed, s as u64));
        let mut xa = Vec::new();
        let mut xb = Vec::new();
        for item in items {
            let mut order: Vec<usize> = (0..k).collect();
            let mut i = k - 1;
            while i >= 1 {
                let j = rng.gen_range(0..=i);
                order.swap(i, j);
                i -= 1;
            }
            let mut a = 0.0;
            let mut b = 0.0;
            for (rank, pos) in order.iter().enumerate() {
                let (c, _) = item.slots[*pos];
                if c {
                    if rank < ha {
                        a += 1.0;
                    } else {
                        b += 1.0;
                    }
                }
            }
            xa.push(a / ha as f64);
            xb.push(b / hb as f64);
        }
        let r = pearson_f(&xa, &xb).map(|r| if (r.abs() - 1.0).abs() < 1e-12 { r.signum() } else { r });
        replicates.push(match r {
            Some(r) if r > -1.0 => Some(2.0 * r / (1.0 + r)),
            _ => None,
        });
    }
    let defined: Vec<f64> = replicates.iter().filter_map(|r| *r).collect();
    if defined.is_empty() {
        return Err(Error::Degenerate("oracle: all splits undefined".into()));
    }
    Ok(ReliabilityEstimate {
        model_id: model_id.to_string(),
        r_xx: median(&defined),
        ci_low: nearest_rank_f(&defined, 0.025),
        ci_high: nearest_rank_f(&defined, 0.975),
        ci_level: 0.95,
        n_splits,
        n_undefined_splits: n_splits - defined.len(),
        icc: None,
        n_items_used: items.len(),
        n_items_partial: 0,
        half_sizes: (ha, hb),
        unequal_halves: ha != hb,
        seed,
        replicates,
    })
}

fn icc(items: &[&Item], k: usize) -> Option<f64> {
    let n = items.len();
    if n < 2 {
        return None;
    }
    let x = |i: usize, j: usize| if items[i].slots[j].0 { 1.0 } else { 0.0 };
    let mut grand = 0.0;
    for i in 0..n {
        for j in 0..k {
            grand += x(i, j);
        }
    }
    grand /= (n * k) as f64;
    let mut sst = 0.0;
    let mut ssr = 0.0;
    let mut ssc = 0.0;
    for i in 0..n {
        let mut rm = 0.0;
        for j in 0..k {
            rm += x(i, j);
            sst += (x(i, j) - grand).powi(2);
        }
        rm /= k as f64;
        ssr += k as f64 * (rm - grand).powi(2);
    }
    for j in 0..k {
        let mut cm = 0.0;
        for i in 0..n {
            cm += x(i, j);
        }
        cm /= n as f64;
        ssc += n as f64 * (cm - grand).powi(2);
    }
    if sst == 0.0 {
        return None;
    }
    let sse = sst - ssr - ssc;
    let msr = ssr / (n - 1) as f64;
    let msc = ssc / (k - 1) as f64;
    let mse = sse / ((n - 1) * (k - 1)) as f64;
    let denom = msr + (k as f64 - 1.0) * mse + k as f64 * (msc - mse) / n as f64;
    if denom == 0.0 {
        None
    } else {
        Some((msr - mse) / denom)
    }
}

fn prophecy(r_k: f64, k: usize, targets: &[f64]) -> Option<ProphecyResult> {
    if !(r_k > 0.0 && r_k < 1.0) {
        return None;
    }
    let kf = k as f64;
    let r1 = r_k / (kf - (kf - 1.0) * r_k);
    let mut table = Vec::new();
    for &t in targets {
        if !(t > 0.0 && t < 1.0) {
            return None;
        }
        let mut m: u64 = 1;
        loop {
            let mf = m as f64;
            if mf * r1 / (1.0 + (mf - 1.0) * r1) >= t - 1e-12 {
                break;
            }
            m += 1;
        }
        table.push(ProphecyRow { target_r: t, k_needed: m });
    }
    Some(ProphecyResult { r_k, k, r_single: r1, table })
}

// ------------------------------------------------------------ classification

#[derive(Clone, Copy)]
struct Rules {
    threshold: f64,
    min_valid: u32,
    floor_ceiling: FloorCeilingRule,
}

fn excluded(a: &Item, b: &Item, rules: Rules) -> Option<Category> {
    let (c1, v1) = counts(a);
    let (c2, v2) = counts(b);
    if v1 < rules.min_valid || v2 < rules.min_valid || v1 == 0 || v2 == 0 {
        return Some(Category::ExcludedInsufficientValid);
    }
    let p1 = c1 as f64 / v1 as f64;
    let p2 = c2 as f64 / v2 as f64;
    let extreme = |p: f64| p == 0.0 || p == 1.0;
    let hit = match rules.floor_ceiling {
        FloorCeilingRule::SameExtreme => extreme(p1) && p1 == p2,
        FloorCeilingRule::BothExtreme => extreme(p1) && extreme(p2),
    };
    if hit {
        Some(Category::ExcludedFloorCeiling)
    } else {
        None
    }
}

fn label(rci: f64, t: f64) -> Category {
    if rci > t {
        Category::Improved
    } else if rci < -t {
        Category::Deteriorated
    } else {
        Category::NoChange
    }
}

fn classify(v1: &[&Item], v2: &[&Item], s_diff: f64, rules: Rules) -> Result<Vec<RciClassification>> {
    let mut out = Vec::new();
    for i in 0..v1.len() {
        let (p1, p2) = (prop(v1[i]), prop(v2[i]));
        let dp = match (p1, p2) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        let (rci, cat) = match excluded(v1[i], v2[i], rules) {
            Some(c) => (None, c),
            None => {
                if s_diff <= 0.0 {
                    return Err(Error::Degenerate("oracle: zero S_diff".into()));
                }
                let r = dp.unwrap() / s_diff;
                (Some(r), label(r, rules.threshold))
            }
        };
        out.push(RciClassification {
            item_id: v1[i].id.clone(),
            domain: v1[i].domain.clone(),
            p_v1: p1,
            p_v2: p2,
            delta_p: dp,
            rci,
            category: cat,
        });
    }
    Ok(out)
}

fn sd_members(v1: &[&Item], v2: &[&Item], rules: Rules, sd_items: SdItemSet) -> Vec<usize> {
    let mut idx = Vec::new();
    for i in 0..v1.len() {
        match excluded(v1[i], v2[i], rules) {
            None => idx.push(i),
            Some(Category::ExcludedFloorCeiling) if sd_items == SdItemSet::PreFloorCeiling => idx.push(i),
            _ => {}
        }
    }
    idx
}

fn measurement(
    v1: &[&Item],
    v2: &[&Item],
    members: &[usize],
    r1: f64,
    r2: f64,
    threshold: f64,
    conv: SdConvention,
) -> Result<PairMeasurement> {
    if members.len() < 2 {
        return Err(Error::InsufficientData("oracle: fewer than 2 SD items".into()));
    }
    let p1: Vec<f64> = members.iter().map(|&i| prop(v1[i]).unwrap()).collect();
    let p2: Vec<f64> = members.iter().map(|&i| prop(v2[i]).unwrap()).collect();
    let (sd1, sd2) = (sd(&p1, conv), sd(&p2, conv));
    let sem1 = if r1 >= 1.0 { 0.0 } else { sd1 * (1.0 - r1).sqrt() };
    let sem2 = if r2 >= 1.0 { 0.0 } else { sd2 * (1.0 - r2).sqrt() };
    let s_diff = (sem1.powi(2) + sem2.powi(2)).sqrt();
    Ok(PairMeasurement {
        sem_v1: sem1,
        sem_v2: sem2,
        s_diff,
        min_detectable_delta: threshold * s_diff,
        alpha_threshold: threshold,
        r_xx_v1: Some(r1),
        r_xx_v2: Some(r2),
        sd_p_v1: Some(sd1),
        sd_p_v2: Some(sd2),
        n_sd_items: Some(members.len()),
        degenerate: s_diff == 0.0,
    })
}

fn effect(abs: &[f64]) -> Option<EffectSummary> {
    if abs.is_empty() {
        return None;
    }
    let n = abs.len() as f64;
    // Δp here is a difference of two rounded proportions, so compare with a
    // tolerance far below the 1/(K1*K2) grid spacing.
    let ge = |t: f64| abs.iter().filter(|&&d| d >= t - 1e-9).count() as f64 / n;
    Some(EffectSummary {
        n: abs.len(),
        mean_abs_delta: mean(abs),
        median_abs_delta: median(abs),
        frac_ge_0_2: ge(0.2),
        frac_ge_0_4: ge(0.4),
    })
}

fn churn(cls: &[RciClassification]) -> ChurnReport {
    let mut n = [0usize; 5];
    let mut abs_all = Vec::new();
    let mut abs_changed = Vec::new();
    for c in cls {
        let slot = match c.category {
            Category::Improved => 0,
            Category::NoChange => 1,
            Category::Deteriorated => 2,
            Category::ExcludedInsufficientValid => 3,
            Category::ExcludedFloorCeiling => 4,
        };
        n[slot] += 1;
        if slot < 3 {
            abs_all.push(c.delta_p.unwrap().abs());
            if slot != 1 {
                abs_changed.push(c.delta_p.unwrap().abs());
            }
        }
    }
    let total = cls.len();
    let analysable = n[0] + n[1] + n[2];
    let rates = |imp: usize, nc: usize, det: usize| {
        let d = imp + nc + det;
        CategoryRates {
            denominator: d,
            improved: imp as f64 / d as f64,
            no_change: nc as f64 / d as f64,
            deteriorated: det as f64 / d as f64,
            churn: (imp + det) as f64 / d as f64,
        }
    };
    let full = rates(n[0], n[1] + n[3] + n[4], n[2]);
    let post = if analysable > 0 { Some(rates(n[0], n[1], n[2])) } else { None };
    ChurnReport {
        n_total: total,
        n_excluded_insufficient: n[3],
        n_excluded_floor_ceiling: n[4],
        n_analysable: analysable,
        n_improved: n[0],
        n_no_change: n[1],
        n_deteriorated: n[2],
        churn_rate_full: full.churn,
        churn_rate_post: post.as_ref().map(|p| p.churn),
        full_benchmark_rates: full,
        post_exclusion_rates: post,
        net_surplus: n[0] as i64 - n[2] as i64,
        effect_sizes: EffectSizes {
            analysable: effect(&abs_all),
            changed: effect(&abs_changed),
        },
    }
}

// ----------------------------------------------------------------- null

fn null(
    v1: &[&Item],
    v2: &[&Item],
    k: usize,
    pm: &PairMeasurement,
    seed: u64,
    cfg: &AnalysisConfig,
    rules: Rules,
) -> Result<NullCalibration> {
    let observed = {
        let cls = classify(v1, v2, pm.s_diff, rules)?;
        let imp = cls.iter().filter(|c| c.category == Category::Improved).count();
        let det = cls.iter().filter(|c| c.category == Category::Deteriorated).count();
        (imp, det)
    };
    let mut samples = Vec::new();
    for p in 0..cfg.n_permutations {
        let perm_seed = seeding::derive_indexed(seed, p as u64);
        let mut rng = seeding::stream(perm_seed);
        let mut a: Vec<&Item> = Vec::new();
        let mut b: Vec<&Item> = Vec::new();
        for i in 0..v1.len() {
            let swap: bool = rng.gen();
            if swap {
                a.push(v2[i]);
                b.push(v1[i]);
            } else {
                a.push(v1[i]);
                b.push(v2[i]);
            }
        }
        let s_diff = match cfg.null_sdiff_mode {
            SdiffMode::Fixed => pm.s_diff,
            SdiffMode::Reestimated => {
                let fa: Vec<&Item> = a.iter().copied().filter(|it| it.slots.iter().all(|s| s.1)).collect();
                let fb: Vec<&Item> = b.iter().copied().filter(|it| it.slots.iter().all(|s| s.1)).collect();
                let r1 = split_half(&fa, k, cfg.null_reestimate_splits, seeding::derive_labeled(perm_seed, "split_half:v1"), "")?.r_xx;
                let r2 = split_half(&fb, k, cfg.null_reestimate_splits, seeding::derive_labeled(perm_seed, "split_half:v2"), "")?.r_xx;
                let members = sd_members(&a, &b, rules, cfg.sd_items);
                measurement(&a, &b, &members, r1, r2, rules.threshold, cfg.sd_convention)?.s_diff
            }
        };
        let cls = classify(&a, &b, s_diff, rules)?;
        let imp = cls.iter().filter(|c| c.category == Category::Improved).count();
        let det = cls.iter().filter(|c| c.category == Category::Deteriorated).count();
        samples.push((imp, det));
    }
    let summary = |xs: &[usize]| CountSummary {
        mean: xs.iter().sum::<usize>() as f64 / xs.len() as f64,
        min: *xs.iter().min().unwrap(),
        median: nearest_rank_u(xs, 0.5),
        p95: nearest_rank_u(xs, 0.95),
        max: *xs.iter().max().unwrap(),
    };
    let imp: Vec<usize> = samples.iter().map(|s| s.0).collect();
    let det: Vec<usize> = samples.iter().map(|s| s.1).collect();
    let si = summary(&imp);
    let sdt = summary(&det);
    Ok(NullCalibration {
        n_permutations: cfg.n_permutations,
        seed,
        sdiff_mode: cfg.null_sdiff_mode,
        observed_improved: observed.0,
        observed_deteriorated: observed.1,
        null_improved_p95: si.p95,
        null_deteriorated_p95: sdt.p95,
        exceeds_improved: observed.0 > si.p95,
        exceeds_deteriorated: observed.1 > sdt.p95,
        null_improved: si,
        null_deteriorated: sdt,
        samples,
    })
}

// --------------------------------------------------------------- cohorts

fn in_bin(p: f64, edges: &[f64], i: usize) -> bool {
    let last = i == edges.len() - 2;
    p >= edges[i] && (p < edges[i + 1] || (last && p <= edges[i + 1]))
}

fn bins(cls: &[RciClassification], edges: &[f64]) -> DifficultyBinTable {
    let mut out = Vec::new();
    let mut total = 0;
    for i in 0..edges.len() - 1 {
        let mut b = DifficultyBin {
            lo: edges[i],
            hi: edges[i + 1],
            closed_hi: i == edges.len() - 2,
            n: 0,
            n_improved: 0,
            n_no_change: 0,
            n_deteriorated: 0,
            churn_rate: None,
        };
        for c in cls {
            if c.category.is_excluded() || !in_bin(c.p_v1.unwrap(), edges, i) {
                continue;
            }
            b.n += 1;
            match c.category {
                Category::Improved => b.n_improved += 1,
                Category::Deteriorated => b.n_deteriorated += 1,
                _ => b.n_no_change += 1,
            }
        }
        if b.n > 0 {
            b.churn_rate = Some((b.n_improved + b.n_deteriorated) as f64 / b.n as f64);
        }
        total += b.n;
        out.push(b);
    }
    DifficultyBinTable { bins: out, n_analysable: total }
}

fn contingency(cls: &[RciClassification]) -> Option<ContingencyResult> {
    let mut domains: Vec<String> = Vec::new();
    for c in cls {
        if !c.category.is_excluded() && !domains.contains(&c.domain) {
            domains.push(c.domain.clone());
        }
    }
    domains.sort();
    if domains.len() < 2 {
        return None;
    }
    let cols = [Category::Improved, Category::NoChange, Category::Deteriorated];
    let mut obs = vec![[0usize; 3]; domains.len()];
    for c in cls {
        for (r, d) in domains.iter().enumerate() {
            for (j, cat) in cols.iter().enumerate() {
                if &c.domain == d && c.category == *cat {
                    obs[r][j] += 1;
                }
            }
        }
    }
    let n: usize = obs.iter().map(|r| r.iter().sum::<usize>()).sum();
    let mut chi2 = 0.0;
    for r in 0..domains.len() {
        for j in 0..3 {
            let rt: usize = obs[r].iter().sum();
            let ct: usize = (0..domains.len()).map(|x| obs[x][j]).sum();
            if ct == 0 {
                return None;
            }
            let e = (rt * ct) as f64 / n as f64;
            chi2 += (obs[r][j] as f64 - e).powi(2) / e;
        }
    }
    let df = (domains.len() - 1) * 2;
    Some(ContingencyResult {
        rows: domains
            .iter()
            .zip(&obs)
            .map(|(d, o)| DomainRow {
                domain: d.clone(),
                counts: *o,
                improvement_ratio: if o[2] > 0 { Some(o[0] as f64 / o[2] as f64) } else { None },
            })
            .collect(),
        columns: cols,
        n,
        chi2,
        df,
        p_value: crate::stats::chi2_sf(chi2, df),
        cramers_v: (chi2 / (n as f64 * 2.0f64.min((domains.len() - 1) as f64))).sqrt(),
    })
}

#[allow(clippy::too_many_arguments)]
fn stratified(
    v1: &[&Item],
    v2: &[&Item],
    r1: f64,
    r2: f64,
    global: &[RciClassification],
    cfg: &AnalysisConfig,
    rules: Rules,
) -> Result<StratifiedSensitivity> {
    let edges = &cfg.strata_edges;
    let members = sd_members(v1, v2, rules, cfg.sd_items);
    let mut out = StratifiedSensitivity {
        edges: edges.clone(),
        strata: Vec::new(),
        skipped: Vec::new(),
        n_changed: 0,
        n_changed_global: 0,
        n_analysable: 0,
    };
    for b in 0..edges.len() - 1 {
        let idx: Vec<usize> = members.iter().copied().filter(|&i| in_bin(prop(v1[i]).unwrap(), edges, b)).collect();
        if idx.len() < 2 {
            out.skipped.push(SkippedStratum {
                lo: edges[b],
                hi: edges[b + 1],
                n_items: idx.len(),
                reason: format!("{} item(s); at least 2 needed", idx.len()),
            });
            continue;
        }
        let s1: Vec<&Item> = idx.iter().map(|&i| v1[i]).collect();
        let s2: Vec<&Item> = idx.iter().map(|&i| v2[i]).collect();
        let all: Vec<usize> = (0..idx.len()).collect();
        let pm = measurement(&s1, &s2, &all, r1, r2, rules.threshold, cfg.sd_convention)?;
        let cls = match classify(&s1, &s2, pm.s_diff, rules) {
            Ok(c) => c,
            Err(_) => {
                out.skipped.push(SkippedStratum {
                    lo: edges[b],
                    hi: edges[b + 1],
                    n_items: idx.len(),
                    reason: String::new(),
                });
                continue;
            }
        };
        let changed = cls.iter().filter(|c| c.category.is_changed()).count();
        let analysable = cls.iter().filter(|c| !c.category.is_excluded()).count();
        let changed_global = idx
            .iter()
            .filter(|&&i| global.iter().any(|g| g.item_id == v1[i].id && g.category.is_changed()))
            .count();
        let rate = |x: usize| if analysable > 0 { Some(x as f64 / analysable as f64) } else { None };
        out.n_changed += changed;
        out.n_changed_global += changed_global;
        out.n_analysable += analysable;
        out.strata.push(StratumResult {
            lo: edges[b],
            hi: edges[b + 1],
            n_items: idx.len(),
            measurement: pm,
            classifications: cls,
            n_changed: changed,
            n_changed_global: changed_global,
            n_analysable: analysable,
            churn_rate: rate(changed),
            churn_rate_global: rate(changed_global),
        });
    }
    Ok(out)
}

fn greedy(g1: &GreedyRun, g2: &GreedyRun, cls: &[RciClassification], view: GreedyView) -> GreedyComparison {
    let pos = |c: Category| match c {
        Category::Improved => 0,
        Category::Deteriorated => 2,
        _ => 1,
    };
    let mut m = [[0usize; 3]; 3];
    let mut unmatched = Vec::new();
    let mut dropped = 0;
    for c in cls {
        match (g1.outcomes.get(&c.item_id), g2.outcomes.get(&c.item_id)) {
            (Some(&a), Some(&b)) => {
                if view == GreedyView::PostExclusion && c.category.is_excluded() {
                    dropped += 1;
                    continue;
                }
                let g = if !a && b {
                    0
                } else if a && !b {
                    2
                } else {
                    1
                };
                m[g][pos(c.category)] += 1;
            }
            _ => unmatched.push(c.item_id.clone()),
        }
    }
    let mut greedy_only: Vec<String> = Vec::new();
    for id in g1.outcomes.keys().chain(g2.outcomes.keys()) {
        if !cls.iter().any(|c| &c.item_id == id) && !greedy_only.contains(id) {
            greedy_only.push(id.clone());
        }
    }
    greedy_only.sort();
    let total: usize = m.iter().map(|r| r.iter().sum::<usize>()).sum();
    let diag = m[0][0] + m[1][1] + m[2][2];
    let g_changed = m[0][0] + m[0][1] + m[0][2] + m[2][0] + m[2][1] + m[2][2];
    let r_changed = m[0][0] + m[1][0] + m[2][0] + m[0][2] + m[1][2] + m[2][2];
    GreedyComparison {
        view,
        n_matched: total,
        exact_agreement_rate: if total > 0 { Some(diag as f64 / total as f64) } else { None },
        greedy_changed_rci_nochange: Discordance {
            count: m[0][1] + m[2][1],
            total: g_changed,
            rate: if g_changed > 0 { Some((m[0][1] + m[2][1]) as f64 / g_changed as f64) } else { None },
        },
        rci_changed_greedy_nochange: Discordance {
            count: m[1][0] + m[1][2],
            total: r_changed,
            rate: if r_changed > 0 { Some((m[1][0] + m[1][2]) as f64 / r_changed as f64) } else { None },
        },
        confusion: m,
        unmatched,
        greedy_only,
        n_excluded_dropped: dropped,
    }
}

fn z_test(a: &ChurnReport, b: &ChurnReport, full: bool) -> Option<ZTest> {
    let (na, nb) = if full { (a.n_total, b.n_total) } else { (a.n_analysable, b.n_analysable) };
    if na == 0 || nb == 0 {
        return None;
    }
    let xa = (a.n_improved + a.n_deteriorated) as f64;
    let xb = (b.n_improved + b.n_deteriorated) as f64;
    let pa = xa / na as f64;
    let pb = xb / nb as f64;
    let pooled = (xa + xb) / (na + nb) as f64;
    if pooled <= 0.0 || pooled >= 1.0 {
        return None;
    }
    let z = (pa - pb) / (pooled * (1.0 - pooled) * (1.0 / na as f64 + 1.0 / nb as f64)).sqrt();
    let p = (2.0 * crate::stats::normal_sf(z.abs())).min(1.0);
    Some(ZTest {
        denominator: if full { crate::cohort::Denominator::Full } else { crate::cohort::Denominator::PostExclusion },
        rate_a: pa,
        n_a: na,
        rate_b: pb,
        n_b: nb,
        z,
        p_value: p,
    })
}

fn correlation(a: &[RciClassification], b: &[RciClassification]) -> Option<CrossPairResult> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for ca in a {
        if ca.category.is_excluded() {
            continue;
        }
        for cb in b {
            if cb.item_id == ca.item_id && !cb.category.is_excluded() {
                x.push(ca.rci.unwrap());
                y.push(cb.rci.unwrap());
            }
        }
    }
    let n = x.len();
    if n < 3 {
        return None;
    }
    let r = pearson_f(&x, &y)?.clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let (t, p) = if r.abs() >= 1.0 {
        (f64::INFINITY.copysign(r), 0.0)
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        (t, crate::stats::t_two_sided(t, df))
    };
    Some(CrossPairResult {
        n_shared: n,
        pearson_r: r,
        t,
        df: n - 2,
        p_value: p,
        p_method: "students_t".into(),
    })
}

// ------------------------------------------------------------- pipeline

fn section<T>(v: Option<T>) -> Section<T> {
    match v {
        Some(x) => Section::Computed(x),
        None => Section::NotComputed("oracle: not computed".into()),
    }
}

fn pair(input: &PairInput, label: &str, cfg: &AnalysisConfig) -> Result<PairAnalysis> {
    let k = input.v1.k();
    let all1 = items_of(&input.v1);
    let all2 = items_of(&input.v2);
    let v1: Vec<&Item> = all1.iter().collect();
    let v2: Vec<&Item> = all2.iter().collect();
    let rules = Rules {
        threshold: cfg.threshold,
        min_valid: cfg.min_valid,
        floor_ceiling: cfg.floor_ceiling,
    };

    let mut summaries = Vec::new();
    for (which, items) in [("v1", &v1), ("v2", &v2)] {
        let in_subset = |i: usize| match cfg.reliability_items {
            ReliabilityItems::FullyValid => true,
            ReliabilityItems::Analysable => excluded(v1[i], v2[i], rules).is_none(),
        };
        let candidates: Vec<usize> = (0..items.len()).filter(|&i| in_subset(i)).collect();
        let used: Vec<&Item> = candidates
            .iter()
            .map(|&i| items[i])
            .filter(|it| it.slots.iter().all(|s| s.1))
            .collect();
        let model_id = if which == "v1" { input.v1.model_id() } else { input.v2.model_id() };
        if used.len() < 3 {
            return Err(Error::InsufficientData("oracle: fewer than 3 reliability items".into()));
        }
        let seed = seeding::derive_labeled(cfg.seed, &format!("{label}/split_half:{which}"));
        let mut rel = split_half(&used, k, cfg.n_splits, seed, model_id)?;
        rel.n_items_partial = candidates.len() - used.len();
        rel.icc = icc(&used, k);
        let ps: Vec<f64> = items.iter().filter_map(|it| prop(it)).collect();
        if ps.is_empty() {
            return Err(Error::InsufficientData("oracle: no defined accuracy".into()));
        }
        summaries.push(ModelSummary {
            model_id: model_id.to_string(),
            accuracy: mean(&ps),
            n_items_defined: ps.len(),
            icc: section(rel.icc),
            prophecy: section(prophecy(rel.r_xx, k, &cfg.prophecy_targets)),
            reliability: rel,
        });
    }
    let s2 = summaries.pop().unwrap();
    let s1 = summaries.pop().unwrap();

    let members = sd_members(&v1, &v2, rules, cfg.sd_items);
    let pm = measurement(&v1, &v2, &members, s1.reliability.r_xx, s2.reliability.r_xx, cfg.threshold, cfg.sd_convention)?;
    let cls = classify(&v1, &v2, pm.s_diff, rules)?;
    let report = churn(&cls);
    let null_section = if cfg.n_permutations == 0 || pm.degenerate {
        Section::NotComputed(String::new())
    } else {
        let seed = seeding::derive_labeled(cfg.seed, &format!("{label}/null"));
        Section::Computed(null(&v1, &v2, k, &pm, seed, cfg, rules)?)
    };
    let bins_section = section((report.n_analysable > 0).then(|| bins(&cls, &cfg.bin_edges)));
    let strat = stratified(&v1, &v2, s1.reliability.r_xx, s2.reliability.r_xx, &cls, cfg, rules).ok();
    let greedy_section = section(input.greedy.as_ref().map(|(g1, g2)| greedy(g1, g2, &cls, cfg.greedy_view)));
    Ok(PairAnalysis {
        label: label.to_string(),
        n_items: v1.len(),
        k,
        v1: s1,
        v2: s2,
        measurement: pm,
        churn: report,
        null: null_section,
        bins: bins_section,
        contingency: section(contingency(&cls)),
        stratified: section(strat),
        greedy: greedy_section,
        classifications: cls,
    })
}

fn check_size(t: &TrialSet) -> Result<()> {
    if t.len() > MAX_ITEMS || t.k() > MAX_K {
        return Err(Error::invalid(format!(
            "oracle size guard: at most {MAX_ITEMS} items and K <= {MAX_K}, got {} x {}",
            t.len(),
            t.k()
        )));
    }
    Ok(())
}

/// Recomputes the full result bundle by brute force.
pub fn brute_force_pipeline(input: &PipelineInput, cfg: &AnalysisConfig) -> Result<Bundle> {
    let mut pairs = vec![&input.pair];
    pairs.extend(input.second.as_ref());
    for p in &pairs {
        check_size(&p.v1)?;
        check_size(&p.v2)?;
        crate::model::check_matched(&p.v1, &p.v2)?;
    }
    let first = pair(&input.pair, PRIMARY_LABEL, cfg)?;
    let (second, cross) = match &input.second {
        None => (Section::NotComputed(String::new()), Section::NotComputed(String::new())),
        Some(s) => {
            let b = pair(s, SECOND_LABEL, cfg)?;
            let cross = CrossPair {
                z_full: section(z_test(&first.churn, &b.churn, true)),
                z_post_exclusion: section(z_test(&first.churn, &b.churn, false)),
                correlation: section(correlation(&first.classifications, &b.classifications)),
            };
            (Section::Computed(b), Section::Computed(cross))
        }
    };
    Ok(Bundle {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        pair: first,
        second_pair: second,
        cross_pair: cross,
    })
}

/// Walks two bundles field by field. Integers, strings, booleans and section
/// status must match exactly; floats must agree to `tol` (relative to the
/// larger magnitude, absolute below 1). Free-text reasons (not-computed
/// sections, skipped strata) are ignored. Returns every mismatching path.
pub fn compare_bundles(a: &Bundle, b: &Bundle, tol: f64) -> std::result::Result<(), Vec<String>> {
    let va = serde_json::to_value(a).expect("serialisable");
    let vb = serde_json::to_value(b).expect("serialisable");
    let mut diffs = Vec::new();
    walk("$", &va, &vb, tol, &mut diffs);
    if diffs.is_empty() {
        Ok(())
    } else {
        Err(diffs)
    }
}

fn walk(path: &str, a: &Value, b: &Value, tol: f64, out: &mut Vec<String>) {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            if x.get("status").and_then(Value::as_str) == Some("not_computed")
                && y.get("status").and_then(Value::as_str) == Some("not_computed")
            {
                return;
            }
            let keys: std::collections::BTreeSet<&String> = x.keys().chain(y.keys()).collect();
            for k in keys {
                match (x.get(k), y.get(k)) {
                    (Some(_), Some(_)) if k == "reason" => {}
                    (Some(p), Some(q)) => walk(&format!("{path}.{k}"), p, q, tol, out),
                    _ => out.push(format!("{path}.{k}: present on one side only")),
                }
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            if x.len() != y.len() {
                out.push(format!("{path}: length {} vs {}", x.len(), y.len()));
                return;
            }
            for (i, (p, q)) in x.iter().zip(y).enumerate() {
                walk(&format!("{path}[{i}]"), p, q, tol, out);
            }
        }
        (Value::Number(x), Value::Number(y)) => {
            if x.is_f64() || y.is_f64() {
                let (p, q) = (x.as_f64().unwrap(), y.as_f64().unwrap());
                let scale = p.abs().max(q.abs()).max(1.0);
                if (p - q).abs() > tol * scale {
                    out.push(format!("{path}: {p} vs {q}"));
                }
            } else if x != y {
                out.push(format!("{path}: {x} vs {y}"));
            }
        }
        _ => {
            if a != b {
                out.push(format!("{path}: {a} vs {b}"));
            }
        }
    }
}

/// Counts per (model-agnostic) category, used by tests that recount a list.
pub fn recount(cls: &[RciClassification]) -> BTreeMap<Category, usize> {
    let mut m = BTreeMap::new();
    for c in cls {
        *m.entry(c.category).or_insert(0) += 1;
    }
    m
}
