//! Human-readable rendering of a result bundle: a markdown report, flat CSV
//! tables and a handful of SVG figures. Every number shown is read from the
//! bundle; nothing is recomputed here.

mod markdown;
mod svg;
mod tables;

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pipeline::{Bundle, PairAnalysis};

pub use markdown::render_markdown;
pub use svg::{churn_by_bin_svg, domain_heatmap_svg, rci_histogram_svg, scatter_svg};
pub use tables::{bins_csv, classifications_csv, contingency_csv, null_samples_csv};

/// p-values below .001 are shown as "< .001" followed by the value itself.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        format!("< .001 ({p:.2e})")
    } else {
        format!("{p:.3}")
    }
}

/// Files written by [`write_outputs`] plus notices for anything skipped.
#[derive(Debug, Clone, Default)]
pub struct Outputs {
    pub written: Vec<PathBuf>,
    pub notices: Vec<String>,
}

/// Writes report.md, bundle.json, CSV tables and plots/*.svg under `dir`.
/// The first pair's files carry plain names; the second pair's are prefixed
/// with its label.
pub fn write_outputs(bundle: &Bundle, dir: &Path) -> Result<Outputs> {
    let plots = dir.join("plots");
    std::fs::create_dir_all(&plots).map_err(|e| Error::io(&plots, e))?;
    let mut out = Outputs::default();
    let put = |out: &mut Outputs, path: PathBuf, text: String| -> Result<()> {
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        out.written.push(path);
        Ok(())
    };
    put(&mut out, dir.join("report.md"), render_markdown(bundle))?;
    put(&mut out, dir.join("bundle.json"), bundle.to_json()?)?;
    for (i, pair) in pairs(bundle).into_iter().enumerate() {
        let prefix = if i == 0 { String::new() } else { format!("{}_", pair.label) };
        let name = |stem: &str| format!("{prefix}{stem}");
        put(&mut out, dir.join(name("classifications.csv")), classifications_csv(pair)?)?;
        let optional = [
            ("bins.csv", bins_csv(pair)?),
            ("contingency.csv", contingency_csv(pair)?),
            ("null_samples.csv", null_samples_csv(pair)?),
        ];
        for (stem, text) in optional {
            match text {
                Some(t) => put(&mut out, dir.join(name(stem)), t)?,
                None => out.notices.push(format!("{}: {stem} skipped (section not computed)", pair.label)),
            }
        }
        let figures = [
            ("rci_histogram.svg", rci_histogram_svg(pair)),
            ("churn_by_bin.svg", churn_by_bin_svg(pair)),
            ("domain_heatmap.svg", domain_heatmap_svg(pair)),
            ("scatter.svg", scatter_svg(pair)),
        ];
        for (stem, svg) in figures {
            match svg {
                Some(t) => put(&mut out, plots.join(name(stem)), t)?,
                None => out.notices.push(format!("{}: plot {stem} skipped (no data)", pair.label)),
            }
        }
    }
    Ok(out)
}

pub(crate) fn pairs(bundle: &Bundle) -> Vec<&PairAnalysis> {
    let mut v = vec![&bundle.pair];
    v.extend(bundle.second_pair.computed());
    v
}
