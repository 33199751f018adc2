//! Trial data model: raw trial records, per-model trial sets, ingestion and
//! per-item accuracy.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DOMAIN: &str = "unlabelled";

/// One generation attempt for one item by one model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub item_id: String,
    pub model_id: String,
    pub sample_index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub correct: bool,
    #[serde(default = "default_true")]
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_raw: Option<String>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialFormat {
    Jsonl,
    Csv,
}

impl TrialFormat {
    /// Guess the format from a file extension; anything but `.csv` is JSON Lines.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => TrialFormat::Csv,
            _ => TrialFormat::Jsonl,
        }
    }
}

impl FromStr for TrialFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(TrialFormat::Jsonl),
            "csv" => Ok(TrialFormat::Csv),
            other => Err(Error::invalid(format!("unknown trial format '{other}'"))),
        }
    }
}

/// Outcome of one sample slot. Slots that were never observed are
/// materialised with `valid = false`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Slot {
    pub correct: bool,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Slot {
    pub fn observed(correct: bool) -> Self {
        Slot {
            correct,
            valid: true,
            seed: None,
        }
    }

    pub fn counts_correct(&self) -> bool {
        self.valid && self.correct
    }
}

/// One item's K sample slots for one model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemBlock {
    pub item_id: String,
    pub domain: String,
    pub slots: Vec<Slot>,
}

impl ItemBlock {
    pub fn k_valid(&self) -> u32 {
        self.slots.iter().filter(|s| s.valid).count() as u32
    }

    pub fn n_correct(&self) -> u32 {
        self.slots.iter().filter(|s| s.counts_correct()).count() as u32
    }

    pub fn fully_valid(&self) -> bool {
        self.slots.iter().all(|s| s.valid)
    }
}

/// One model's item x sample matrix, canonically ordered by `item_id`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSet {
    model_id: String,
    k: usize,
    items: Vec<ItemBlock>,
}

impl TrialSet {
    /// Builds a trial set, sorting items by id. Every block must carry exactly
    /// `k` slots and item ids must be unique.
    pub fn new(model_id: impl Into<String>, k: usize, mut items: Vec<ItemBlock>) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("K must be at least 2, got {k}")));
        }
        items.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        for w in items.windows(2) {
            if w[0].item_id == w[1].item_id {
                return Err(Error::invalid(format!("item '{}' appears twice", w[0].item_id)));
            }
        }
        if let Some(bad) = items.iter().find(|b| b.slots.len() != k) {
            return Err(Error::invalid(format!(
                "item '{}' has {} slots, expected {k}",
                bad.item_id,
                bad.slots.len()
            )));
        }
        Ok(TrialSet {
            model_id: model_id.into(),
            k,
            items,
        })
    }

    pub fn empty(model_id: impl Into<String>, k: usize) -> Result<Self> {
        Self::new(model_id, k, Vec::new())
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn items(&self) -> &[ItemBlock] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_slots(&self) -> usize {
        self.items.len() * self.k
    }

    pub fn item_ids(&self) -> impl Iterator<Item = &str> {
        self.items.iter().map(|b| b.item_id.as_str())
    }

    pub fn with_model_id(mut self, model_id: impl Into<String>) -> Self {
        self.model_id = model_id.into();
        self
    }

    /// Flattens back into trial records in canonical order
    /// (item_id, sample_index).
    pub fn to_records(&self) -> Vec<TrialRecord> {
        let mut out = Vec::with_capacity(self.n_slots());
        for block in &self.items {
            for (idx, slot) in block.slots.iter().enumerate() {
                out.push(TrialRecord {
                    item_id: block.item_id.clone(),
                    model_id: self.model_id.clone(),
                    sample_index: idx as u32,
                    seed: slot.seed,
                    correct: slot.correct,
                    valid: slot.valid,
                    domain: Some(block.domain.clone()),
                    response_raw: None,
                });
            }
        }
        out
    }

    pub fn write<W: Write>(&self, writer: W, format: TrialFormat) -> Result<()> {
        write_records(writer, format, &self.to_records())
    }
}

pub fn write_records<W: Write>(mut writer: W, format: TrialFormat, records: &[TrialRecord]) -> Result<()> {
    match format {
        TrialFormat::Jsonl => {
            for r in records {
                serde_json::to_writer(&mut writer, r)?;
                writer
                    .write_all(b"\n")
                    .map_err(|e| Error::io("<output>", e))?;
            }
        }
        TrialFormat::Csv => {
            let mut w = csv::Writer::from_writer(writer);
            w.write_record(CSV_HEADER)?;
            for r in records {
                w.write_record([
                    r.item_id.clone(),
                    r.model_id.clone(),
                    r.sample_index.to_string(),
                    r.seed.map(|s| s.to_string()).unwrap_or_default(),
                    r.correct.to_string(),
                    r.valid.to_string(),
                    r.domain.clone().unwrap_or_default(),
                    r.response_raw.clone().unwrap_or_default(),
                ])?;
            }
            w.flush().map_err(|e| Error::io("<output>", e))?;
        }
    }
    Ok(())
}

const CSV_HEADER: [&str; 8] = [
    "item_id",
    "model_id",
    "sample_index",
    "seed",
    "correct",
    "valid",
    "domain",
    "response_raw",
];

/// Ingestion summary for one trial stream.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ValidationReport {
    pub model_id: String,
    pub n_items: usize,
    pub n_trials: usize,
    pub n_valid: usize,
    pub n_invalid: usize,
    pub n_missing_slots: usize,
    pub duplicate_keys: Vec<(String, String, u32)>,
    pub out_of_range: Vec<(String, u32)>,
    pub items_below_min_valid: Vec<String>,
}

impl ValidationReport {
    pub fn has_hard_faults(&self) -> bool {
        !self.duplicate_keys.is_empty() || !self.out_of_range.is_empty()
    }
}

/// Reads raw records from a stream, tagging each with its 1-based line
/// number in the source.
pub fn read_records<R: Read>(reader: R, format: TrialFormat) -> Result<Vec<(usize, TrialRecord)>> {
    match format {
        TrialFormat::Jsonl => {
            let mut out = Vec::new();
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = idx + 1;
                let line = line.map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: TrialRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                out.push((line_no, rec));
            }
            Ok(out)
        }
        TrialFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
            let headers = rdr.headers()?.clone();
            let mut out = Vec::new();
            for row in rdr.records() {
                let row = row.map_err(|e| Error::Parse {
                    line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                    message: e.to_string(),
                })?;
                let line = row.position().map(|p| p.line() as usize).unwrap_or(0);
                let parsed: CsvRow = row.deserialize(Some(&headers)).map_err(|e| Error::Parse {
                    line,
                    message: e.to_string(),
                })?;
                out.push((line, parsed.into_record()));
            }
            Ok(out)
        }
    }
}

#[derive(Deserialize)]
struct CsvRow {
    item_id: String,
    model_id: String,
    sample_index: u32,
    #[serde(default)]
    seed: Option<u64>,
    correct: bool,
    #[serde(default)]
    valid: Option<bool>,
    #[serde(default)]
    domain: Option<String>,
    #[serde(default)]
    response_raw: Option<String>,
}

impl CsvRow {
    fn into_record(self) -> TrialRecord {
        TrialRecord {
            item_id: self.item_id,
            model_id: self.model_id,
            sample_index: self.sample_index,
            seed: self.seed,
            correct: self.correct,
            valid: self.valid.unwrap_or(true),
            domain: self.domain.filter(|d| !d.is_empty()),
            response_raw: self.response_raw.filter(|r| !r.is_empty()),
        }
    }
}

/// Builds a trial set from keyed records and reports everything seen on the
/// way. The report is always returned, so callers can print it even when a
/// hard fault (duplicate key, out-of-range sample index, mixed models,
/// conflicting domains) makes the trial set unusable.
pub fn ingest(
    records: Vec<(usize, TrialRecord)>,
    declared_k: usize,
    min_valid: u32,
) -> (Result<TrialSet>, ValidationReport) {
    let mut report = ValidationReport::default();
    if declared_k < 2 {
        return (
            Err(Error::invalid(format!("declared K must be at least 2, got {declared_k}"))),
            report,
        );
    }
    let mut model_id: Option<String> = None;
    let mut blocks: BTreeMap<String, (Option<String>, Vec<Option<Slot>>)> = BTreeMap::new();
    let mut first_fault: Option<Error> = None;

    for (line, rec) in records {
        report.n_trials += 1;
        if rec.valid {
            report.n_valid += 1;
        } else {
            report.n_invalid += 1;
        }
        match &model_id {
            None => model_id = Some(rec.model_id.clone()),
            Some(m) if *m != rec.model_id => {
                first_fault.get_or_insert(Error::Parse {
                    line,
                    message: format!(
                        "model_id '{}' differs from '{}'; a trial file holds one model",
                        rec.model_id, m
                    ),
                });
                continue;
            }
            _ => {}
        }
        if rec.sample_index as usize >= declared_k {
            report.out_of_range.push((rec.item_id.clone(), rec.sample_index));
            first_fault.get_or_insert(Error::SampleIndexOutOfRange {
                line,
                item_id: rec.item_id.clone(),
                sample_index: rec.sample_index,
                k: declared_k,
            });
            continue;
        }
        let entry = blocks
            .entry(rec.item_id.clone())
            .or_insert_with(|| (None, vec![None; declared_k]));
        if let Some(d) = rec.domain.as_ref() {
            match &entry.0 {
                None => entry.0 = Some(d.clone()),
                Some(existing) if existing != d => {
                    first_fault.get_or_insert(Error::Parse {
                        line,
                        message: format!(
                            "item '{}' has conflicting domains '{}' and '{}'",
                            rec.item_id, existing, d
                        ),
                    });
                }
                _ => {}
            }
        }
        let slot = &mut entry.1[rec.sample_index as usize];
        if slot.is_some() {
            report
                .duplicate_keys
                .push((rec.item_id.clone(), rec.model_id.clone(), rec.sample_index));
            first_fault.get_or_insert(Error::DuplicateKey {
                item_id: rec.item_id.clone(),
                model_id: rec.model_id.clone(),
                sample_index: rec.sample_index,
            });
            continue;
        }
        *slot = Some(Slot {
            correct: rec.correct,
            valid: rec.valid,
            seed: rec.seed,
        });
    }

    let model_id = model_id.unwrap_or_default();
    report.model_id = model_id.clone();
    report.n_items = blocks.len();
    let items: Vec<ItemBlock> = blocks
        .into_iter()
        .map(|(item_id, (domain, slots))| {
            let slots: Vec<Slot> = slots
                .into_iter()
                .map(|s| {
                    s.unwrap_or_else(|| {
                        report.n_missing_slots += 1;
                        Slot::default()
                    })
                })
                .collect();
            ItemBlock {
                item_id,
                domain: domain.unwrap_or_else(|| DEFAULT_DOMAIN.to_string()),
                slots,
            }
        })
        .collect();
    report.items_below_min_valid = items
        .iter()
        .filter(|b| b.k_valid() < min_valid)
        .map(|b| b.item_id.clone())
        .collect();

    if let Some(fault) = first_fault {
        return (Err(fault), report);
    }
    (TrialSet::new(model_id, declared_k, items), report)
}

/// Parses a trial stream into a canonical trial set.
///
/// Rows are keyed by (item_id, sample_index) and sorted, so input order never
/// affects the result. Slots that never appear are materialised invalid.
pub fn parse_trials<R: Read>(reader: R, format: TrialFormat, declared_k: usize) -> Result<TrialSet> {
    parse_trials_with_report(reader, format, declared_k, 0).map(|(set, _)| set)
}

pub fn parse_trials_with_report<R: Read>(
    reader: R,
    format: TrialFormat,
    declared_k: usize,
    min_valid: u32,
) -> Result<(TrialSet, ValidationReport)> {
    let records = read_records(reader, format)?;
    let (set, report) = ingest(records, declared_k, min_valid);
    Ok((set?, report))
}

pub fn read_trial_file(path: &std::path::Path, declared_k: usize) -> Result<TrialSet> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trials(file, TrialFormat::from_path(path), declared_k)
}

/// Per-item accuracy row. Counts are the source of truth; `p` is derived.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub item_id: String,
    pub domain: String,
    pub k_valid: u32,
    pub n_correct: u32,
    /// Proportion correct among valid samples; `None` when no sample is valid.
    pub p: Option<f64>,
}

impl AccuracyRow {
    pub fn new(item_id: String, domain: String, n_correct: u32, k_valid: u32) -> Self {
        let p = (k_valid > 0).then(|| f64::from(n_correct) / f64::from(k_valid));
        AccuracyRow {
            item_id,
            domain,
            k_valid,
            n_correct,
            p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub model_id: String,
    pub k: usize,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    /// Items whose accuracy is undefined because no sample was valid.
    pub fn undefined_items(&self) -> Vec<&str> {
        self.rows
            .iter()
            .filter(|r| r.p.is_none())
            .map(|r| r.item_id.as_str())
            .collect()
    }

    pub fn get(&self, item_id: &str) -> Option<&AccuracyRow> {
        self.rows
            .binary_search_by(|r| r.item_id.as_str().cmp(item_id))
            .ok()
            .map(|i| &self.rows[i])
    }
}

pub fn compute_item_accuracy(trials: &TrialSet) -> AccuracyTable {
    AccuracyTable {
        model_id: trials.model_id().to_string(),
        k: trials.k(),
        rows: trials
            .items()
            .iter()
            .map(|b| AccuracyRow::new(b.item_id.clone(), b.domain.clone(), b.n_correct(), b.k_valid()))
            .collect(),
    }
}

/// Mean per-item accuracy over items with defined accuracy.
pub fn aggregate_accuracy(acc: &AccuracyTable) -> Result<f64> {
    let ps: Vec<f64> = acc.rows.iter().filter_map(|r| r.p).collect();
    if ps.is_empty() {
        return Err(Error::InsufficientData(format!(
            "model '{}' has no item with a valid sample",
            acc.model_id
        )));
    }
    Ok(ps.iter().sum::<f64>() / ps.len() as f64)
}

/// Checks that two trial sets cover the same items.
pub fn check_matched(v1: &TrialSet, v2: &TrialSet) -> Result<()> {
    let a: BTreeSet<&str> = v1.item_ids().collect();
    let b: BTreeSet<&str> = v2.item_ids().collect();
    if a == b {
        return Ok(());
    }
    Err(Error::ItemSetMismatch {
        only_v1: a.difference(&b).map(|s| s.to_string()).collect(),
        only_v2: b.difference(&a).map(|s| s.to_string()).collect(),
    })
}

/// Single-shot (greedy) binary outcomes for one model, keyed by item.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct GreedyRun {
    pub model_id: String,
    pub outcomes: BTreeMap<String, bool>,
}

impl GreedyRun {
    /// Writes one JSON line per item in item order.
    pub fn write_jsonl<W: Write>(&self, mut writer: W) -> Result<()> {
        for (item_id, correct) in &self.outcomes {
            let line = serde_json::json!({ "item_id": item_id, "model_id": self.model_id, "correct": correct });
            writeln!(writer, "{line}").map_err(|e| Error::io("<output>", e))?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct GreedyRecord {
    item_id: String,
    #[serde(default)]
    model_id: Option<String>,
    correct: bool,
    #[serde(default)]
    valid: Option<bool>,
}

/// Parses greedy outcomes: one record per item with `item_id`, `correct` and
/// optional `model_id` / `valid`. Invalid records are dropped (and surface as
/// unmatched items downstream); duplicate items are an error.
pub fn parse_greedy<R: Read>(reader: R, format: TrialFormat) -> Result<GreedyRun> {
    let mut rows: Vec<(usize, GreedyRecord)> = Vec::new();
    match format {
        TrialFormat::Jsonl => {
            for (idx, line) in BufReader::new(reader).lines().enumerate() {
                let line_no = idx + 1;
                let line = line.map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
                rows.push((line_no, rec));
            }
        }
        TrialFormat::Csv => {
            let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
            for (idx, row) in rdr.deserialize::<GreedyRecord>().enumerate() {
                let rec = row.map_err(|e| Error::Parse {
                    line: idx + 2,
                    message: e.to_string(),
                })?;
                rows.push((idx + 2, rec));
            }
        }
    }
    let mut run = GreedyRun::default();
    for (line, rec) in rows {
        if let Some(m) = rec.model_id {
            if run.model_id.is_empty() {
                run.model_id = m;
            }
        }
        if !rec.valid.unwrap_or(true) {
            continue;
        }
        if run.outcomes.insert(rec.item_id.clone(), rec.correct).is_some() {
            return Err(Error::Parse {
                line,
                message: format!("duplicate greedy record for item '{}'", rec.item_id),
            });
        }
    }
    Ok(run)
}

pub fn read_greedy_file(path: &std::path::Path) -> Result<GreedyRun> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_greedy(file, TrialFormat::from_path(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(item: &str, idx: u32, correct: bool, valid: bool) -> TrialRecord {
        TrialRecord {
            item_id: item.into(),
            model_id: "m".into(),
            sample_index: idx,
            seed: None,
            correct,
            valid,
            domain: Some("law".into()),
            response_raw: None,
        }
    }

    fn jsonl(records: &[TrialRecord]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_records(&mut buf, TrialFormat::Jsonl, records).unwrap();
        buf
    }

    #[test]
    fn empty_stream_is_empty_set() {
        let set = parse_trials(&b""[..], TrialFormat::Jsonl, 10).unwrap();
        assert_eq!(set.len(), 0);
        let set = parse_trials(&b"item_id,model_id,sample_index,seed,correct,valid\n"[..], TrialFormat::Csv, 10).unwrap();
        assert!(set.is_empty());
    }

    #[test]
    fn missing_slot_materialised_invalid() {
        let mut recs = Vec::new();
        for item in ["a", "b", "c"] {
            let n = if item == "b" { 3 } else { 4 };
            for i in 0..n {
                recs.push(rec(item, i, true, true));
            }
        }
        let (set, report) =
            parse_trials_with_report(&jsonl(&recs)[..], TrialFormat::Jsonl, 4, 0).unwrap();
        assert_eq!(set.len(), 3);
        let b = &set.items()[1];
        assert_eq!(b.item_id, "b");
        assert_eq!(b.slots.len(), 4);
        assert!(!b.slots[3].valid);
        assert_eq!(b.k_valid(), 3);
        assert_eq!(report.n_missing_slots, 1);
        assert_eq!(report.n_trials, 11);
    }

    #[test]
    fn duplicate_key_is_hard_error() {
        let recs = vec![rec("a", 0, true, true), rec("a", 1, true, true), rec("a", 0, false, true)];
        let err = parse_trials(&jsonl(&recs)[..], TrialFormat::Jsonl, 2).unwrap_err();
        assert!(matches!(err, Error::DuplicateKey { ref item_id, sample_index: 0, .. } if item_id == "a"));
    }

    #[test]
    fn sample_index_out_of_range() {
        let recs = vec![rec("a", 0, true, true), rec("a", 2, true, true)];
        let err = parse_trials(&jsonl(&recs)[..], TrialFormat::Jsonl, 2).unwrap_err();
        assert!(matches!(err, Error::SampleIndexOutOfRange { line: 2, .. }));
    }

    #[test]
    fn malformed_row_reports_line() {
        let text = "{\"item_id\":\"a\",\"model_id\":\"m\",\"sample_index\":0,\"correct\":true}\n{oops}\n";
        let err = parse_trials(text.as_bytes(), TrialFormat::Jsonl, 2).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let csv = "item_id,model_id,sample_index,correct\na,m,0,true\na,m,1,maybe\n";
        let err = parse_trials(csv.as_bytes(), TrialFormat::Csv, 2).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
    }

    #[test]
    fn accuracy_uses_valid_denominator() {
        let mut slots: Vec<Slot> = (0..10).map(|i| Slot::observed(i < 7)).collect();
        let block = ItemBlock { item_id: "x".into(), domain: "d".into(), slots: slots.clone() };
        // 4 invalid, 3 of remaining 6 correct
        for (i, s) in slots.iter_mut().enumerate() {
            s.valid = i >= 4;
            s.correct = (4..7).contains(&i);
        }
        let partial = ItemBlock { item_id: "y".into(), domain: "d".into(), slots };
        let dead = ItemBlock {
            item_id: "z".into(),
            domain: "d".into(),
            slots: vec![Slot::default(); 10],
        };
        let set = TrialSet::new("m", 10, vec![block, partial, dead]).unwrap();
        let acc = compute_item_accuracy(&set);
        assert_eq!(acc.rows[0].p, Some(0.7));
        assert_eq!(acc.rows[1].p, Some(0.5));
        assert_eq!(acc.rows[1].k_valid, 6);
        assert_eq!(acc.rows[2].p, None);
        assert_eq!(acc.undefined_items(), vec!["z"]);
    }

    #[test]
    fn aggregate_over_defined_items() {
        let acc = AccuracyTable {
            model_id: "m".into(),
            k: 2,
            rows: vec![
                AccuracyRow::new("a".into(), "d".into(), 0, 2),
                AccuracyRow::new("b".into(), "d".into(), 1, 2),
                AccuracyRow::new("c".into(), "d".into(), 2, 2),
                AccuracyRow::new("e".into(), "d".into(), 0, 0),
            ],
        };
        assert_eq!(aggregate_accuracy(&acc).unwrap(), 0.5);
        let none = AccuracyTable { model_id: "m".into(), k: 2, rows: vec![acc.rows[3].clone()] };
        assert!(matches!(aggregate_accuracy(&none), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn csv_round_trip() {
        let recs = vec![rec("b", 1, false, true), rec("a", 0, true, false), rec("b", 0, true, true), rec("a", 1, true, true)];
        let set = parse_trials(&jsonl(&recs)[..], TrialFormat::Jsonl, 2).unwrap();
        let mut buf = Vec::new();
        set.write(&mut buf, TrialFormat::Csv).unwrap();
        let again = parse_trials(&buf[..], TrialFormat::Csv, 2).unwrap();
        assert_eq!(set, again);
    }

    #[test]
    fn mismatch_lists_ids() {
        let mk = |ids: &[&str]| {
            TrialSet::new(
                "m",
                2,
                ids.iter()
                    .map(|i| ItemBlock { item_id: i.to_string(), domain: "d".into(), slots: vec![Slot::observed(true); 2] })
                    .collect(),
            )
            .unwrap()
        };
        let err = check_matched(&mk(&["a", "b"]), &mk(&["b", "c"])).unwrap_err();
        match err {
            Error::ItemSetMismatch { only_v1, only_v2 } => {
                assert_eq!(only_v1, vec!["a"]);
                assert_eq!(only_v2, vec!["c"]);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn greedy_parse() {
        let text = "{\"item_id\":\"a\",\"correct\":true}\n{\"item_id\":\"b\",\"correct\":false,\"valid\":false}\n";
        let run = parse_greedy(text.as_bytes(), TrialFormat::Jsonl).unwrap();
        assert_eq!(run.outcomes.len(), 1);
        let dup = "{\"item_id\":\"a\",\"correct\":true}\n{\"item_id\":\"a\",\"correct\":false}\n";
        assert!(parse_greedy(dup.as_bytes(), TrialFormat::Jsonl).is_err());
    }
}
