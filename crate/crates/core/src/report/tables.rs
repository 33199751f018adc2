use crate::error::Result;
use crate::pipeline::PairAnalysis;

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| crate::Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn classifications_csv(pair: &PairAnalysis) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["item_id", "domain", "p_v1", "p_v2", "delta_p", "rci", "category", "exclusion_reason"])?;
    for c in &pair.classifications {
        w.write_record([
            c.item_id.clone(),
            c.domain.clone(),
            opt(c.p_v1),
            opt(c.p_v2),
            opt(c.delta_p),
            opt(c.rci),
            c.category.label().to_string(),
            c.category.exclusion_reason().to_string(),
        ])?;
    }
    finish(w)
}

pub fn bins_csv(pair: &PairAnalysis) -> Result<Option<String>> {
    let Some(table) = pair.bins.computed() else {
        return Ok(None);
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["lo", "hi", "closed_hi", "n", "improved", "no_change", "deteriorated", "churn_rate"])?;
    for b in &table.bins {
        w.write_record([
            b.lo.to_string(),
            b.hi.to_string(),
            b.closed_hi.to_string(),
            b.n.to_string(),
            b.n_improved.to_string(),
            b.n_no_change.to_string(),
            b.n_deteriorated.to_string(),
            opt(b.churn_rate),
        ])?;
    }
    finish(w).map(Some)
}

pub fn contingency_csv(pair: &PairAnalysis) -> Result<Option<String>> {
    let Some(ct) = pair.contingency.computed() else {
        return Ok(None);
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "improved", "no_change", "deteriorated", "improvement_ratio"])?;
    for r in &ct.rows {
        w.write_record([
            r.domain.clone(),
            r.counts[0].to_string(),
            r.counts[1].to_string(),
            r.counts[2].to_string(),
            opt(r.improvement_ratio),
        ])?;
    }
    finish(w).map(Some)
}

pub fn null_samples_csv(pair: &PairAnalysis) -> Result<Option<String>> {
    let Some(null) = pair.null.computed() else {
        return Ok(None);
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["permutation", "improved", "deteriorated"])?;
    for (i, (imp, det)) in null.samples.iter().enumerate() {
        w.write_record([i.to_string(), imp.to_string(), det.to_string()])?;
    }
    finish(w).map(Some)
}
