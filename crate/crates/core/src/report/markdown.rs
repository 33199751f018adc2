use std::fmt::Write;

use super::{format_p, pairs};
use crate::pipeline::{Bundle, CrossPair, ModelSummary, PairAnalysis, Section};
use crate::rci::ChurnReport;

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

fn opt3(x: Option<f64>) -> String {
    x.map(f3).unwrap_or_else(|| "n/a".into())
}

fn skipped<T>(out: &mut String, s: &Section<T>) {
    if let Section::NotComputed(why) = s {
        let _ = writeln!(out, "_Not computed: {why}._\n");
    }
}

pub fn render_markdown(bundle: &Bundle) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Item-level reliable change report\n");
    let _ = writeln!(
        out,
        "Seed {}, {} split-half replicates, {} permutations, threshold {}.\n",
        bundle.config.seed,
        bundle.config.n_splits,
        bundle.config.n_permutations,
        bundle.config.threshold
    );
    for pair in pairs(bundle) {
        pair_section(&mut out, pair);
    }
    match &bundle.cross_pair {
        Section::Computed(cross) => cross_section(&mut out, cross),
        s => {
            let _ = writeln!(out, "## Cross-pair comparison\n");
            skipped(&mut out, s);
        }
    }
    out
}

fn model_row(out: &mut String, m: &ModelSummary) {
    let r = &m.reliability;
    let icc = m.icc.computed().copied();
    let prophecy = match &m.prophecy {
        Section::Computed(p) => p
            .table
            .iter()
            .map(|row| format!("{} at r = {}", row.k_needed, row.target_r))
            .collect::<Vec<_>>()
            .join(", "),
        Section::NotComputed(_) => "n/a".into(),
    };
    let _ = writeln!(
        out,
        "| {} | {} | {} | [{}, {}] | {} | {} | {} |",
        m.model_id,
        pct(m.accuracy),
        f3(r.r_xx),
        f3(r.ci_low),
        f3(r.ci_high),
        opt3(icc),
        r.n_items_used,
        prophecy
    );
}

fn churn_table(out: &mut String, c: &ChurnReport) {
    let _ = writeln!(out, "| | Full benchmark | Post-exclusion |");
    let _ = writeln!(out, "|---|---|---|");
    let post = c.post_exclusion_rates.as_ref();
    let fb = &c.full_benchmark_rates;
    let cell = |f: fn(&crate::rci::CategoryRates) -> f64| post.map(|p| pct(f(p))).unwrap_or_else(|| "n/a".into());
    let _ = writeln!(out, "| N | {} | {} |", fb.denominator, c.n_analysable);
    let _ = writeln!(out, "| Improved | {} | {} |", pct(fb.improved), cell(|r| r.improved));
    let _ = writeln!(out, "| No change | {} | {} |", pct(fb.no_change), cell(|r| r.no_change));
    let _ = writeln!(out, "| Deteriorated | {} | {} |", pct(fb.deteriorated), cell(|r| r.deteriorated));
    let _ = writeln!(out, "| Churn | {} | {} |\n", pct(fb.churn), cell(|r| r.churn));
    let _ = writeln!(
        out,
        "{} improved, {} deteriorated, {} unchanged; net surplus {}. Excluded: {} with insufficient valid samples, {} at floor or ceiling.\n",
        c.n_improved, c.n_deteriorated, c.n_no_change, c.net_surplus, c.n_excluded_insufficient, c.n_excluded_floor_ceiling
    );
    if let Some(e) = &c.effect_sizes.changed {
        let _ = writeln!(
            out,
            "Among reliably changed items: mean |Δp| {}, median {}, {} at or above 0.2, {} at or above 0.4.\n",
            f3(e.mean_abs_delta),
            f3(e.median_abs_delta),
            pct(e.frac_ge_0_2),
            pct(e.frac_ge_0_4)
        );
    }
}

fn pair_section(out: &mut String, pair: &PairAnalysis) {
    let _ = writeln!(out, "## {}: {} vs {}\n", pair.label, pair.v1.model_id, pair.v2.model_id);
    let _ = writeln!(out, "{} items, K = {} samples per item.\n", pair.n_items, pair.k);

    let _ = writeln!(out, "### Reliability\n");
    let _ = writeln!(out, "| Model | Accuracy | r_xx | CI | ICC | Items | Samples needed |");
    let _ = writeln!(out, "|---|---|---|---|---|---|---|");
    model_row(out, &pair.v1);
    model_row(out, &pair.v2);
    let m = &pair.measurement;
    let _ = writeln!(
        out,
        "\nSEM {} / {}, S_diff {}, minimum detectable |Δp| {}.\n",
        f3(m.sem_v1),
        f3(m.sem_v2),
        f3(m.s_diff),
        f3(m.min_detectable_delta)
    );
    if m.degenerate {
        let _ = writeln!(out, "S_diff is zero, so no item can be classified as reliably changed.\n");
    }

    let _ = writeln!(out, "### Churn\n");
    churn_table(out, &pair.churn);

    let _ = writeln!(out, "### Permutation null\n");
    match &pair.null {
        Section::Computed(n) => {
            let _ = writeln!(out, "| | Observed | Null mean | Null p95 | Exceeds |");
            let _ = writeln!(out, "|---|---|---|---|---|");
            let _ = writeln!(
                out,
                "| Improved | {} | {:.1} | {} | {} |",
                n.observed_improved, n.null_improved.mean, n.null_improved_p95, n.exceeds_improved
            );
            let _ = writeln!(
                out,
                "| Deteriorated | {} | {:.1} | {} | {} |\n",
                n.observed_deteriorated, n.null_deteriorated.mean, n.null_deteriorated_p95, n.exceeds_deteriorated
            );
        }
        s => skipped(out, s),
    }

    let _ = writeln!(out, "### Churn by difficulty\n");
    match &pair.bins {
        Section::Computed(t) => {
            let _ = writeln!(out, "| p_v1 bin | N | Improved | No change | Deteriorated | Churn |");
            let _ = writeln!(out, "|---|---|---|---|---|---|");
            for b in &t.bins {
                let close = if b.closed_hi { "]" } else { ")" };
                let _ = writeln!(
                    out,
                    "| [{}, {}{} | {} | {} | {} | {} | {} |",
                    b.lo,
                    b.hi,
                    close,
                    b.n,
                    b.n_improved,
                    b.n_no_change,
                    b.n_deteriorated,
                    b.churn_rate.map(pct).unwrap_or_else(|| "n/a".into())
                );
            }
            out.push('\n');
        }
        s => skipped(out, s),
    }

    let _ = writeln!(out, "### Domains\n");
    match &pair.contingency {
        Section::Computed(ct) => {
            let _ = writeln!(out, "| Domain | Improved | No change | Deteriorated | Imp/Det |");
            let _ = writeln!(out, "|---|---|---|---|---|");
            for r in &ct.rows {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} |",
                    r.domain,
                    r.counts[0],
                    r.counts[1],
                    r.counts[2],
                    r.improvement_ratio.map(|x| format!("{x:.2}")).unwrap_or_else(|| "n/a".into())
                );
            }
            let _ = writeln!(
                out,
                "\nχ²({}, N = {}) = {:.2}, p {}, Cramér's V = {}.\n",
                ct.df,
                ct.n,
                ct.chi2,
                p_phrase(ct.p_value),
                f3(ct.cramers_v)
            );
        }
        s => skipped(out, s),
    }

    let _ = writeln!(out, "### Stratified S_diff\n");
    match &pair.stratified {
        Section::Computed(s) => {
            let _ = writeln!(out, "| Stratum | Items | S_diff | Changed (stratified) | Changed (global) |");
            let _ = writeln!(out, "|---|---|---|---|---|");
            for st in &s.strata {
                let _ = writeln!(
                    out,
                    "| [{}, {}] | {} | {} | {} | {} |",
                    st.lo,
                    st.hi,
                    st.n_items,
                    f3(st.measurement.s_diff),
                    st.n_changed,
                    st.n_changed_global
                );
            }
            for sk in &s.skipped {
                let _ = writeln!(out, "| [{}, {}] | {} | skipped: {} | | |", sk.lo, sk.hi, sk.n_items, sk.reason);
            }
            let _ = writeln!(out, "\nTotal changed: {} stratified vs {} global.\n", s.n_changed, s.n_changed_global);
        }
        sec => skipped(out, sec),
    }

    let _ = writeln!(out, "### Greedy comparison\n");
    match &pair.greedy {
        Section::Computed(g) => {
            let _ = writeln!(
                out,
                "{} matched items; exact agreement {}.",
                g.n_matched,
                g.exact_agreement_rate.map(pct).unwrap_or_else(|| "n/a".into())
            );
            let _ = writeln!(
                out,
                "Greedy changed but RCI unchanged: {} of {}. RCI changed but greedy unchanged: {} of {}.\n",
                g.greedy_changed_rci_nochange.count,
                g.greedy_changed_rci_nochange.total,
                g.rci_changed_greedy_nochange.count,
                g.rci_changed_greedy_nochange.total
            );
        }
        s => skipped(out, s),
    }
}

fn p_phrase(p: f64) -> String {
    let s = format_p(p);
    if s.starts_with('<') {
        s
    } else {
        format!("= {s}")
    }
}

fn cross_section(out: &mut String, cross: &CrossPair) {
    let _ = writeln!(out, "## Cross-pair comparison\n");
    for (name, z) in [("full benchmark", &cross.z_full), ("post-exclusion", &cross.z_post_exclusion)] {
        match z {
            Section::Computed(z) => {
                let _ = writeln!(
                    out,
                    "Churn rate ({name}): {} of {} vs {} of {}, z = {:.2}, p {}.\n",
                    pct(z.rate_a),
                    z.n_a,
                    pct(z.rate_b),
                    z.n_b,
                    z.z,
                    p_phrase(z.p_value)
                );
            }
            s => skipped(out, s),
        }
    }
    match &cross.correlation {
        Section::Computed(c) => {
            let _ = writeln!(
                out,
                "RCI correlation across {} shared analysable items: r = {}, t({}) = {:.2}, p {}.\n",
                c.n_shared,
                f3(c.pearson_r),
                c.df,
                c.t,
                p_phrase(c.p_value)
            );
        }
        s => skipped(out, s),
    }
}
