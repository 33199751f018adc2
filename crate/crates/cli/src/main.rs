use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use itemchurn::cohort::GreedyView;
use itemchurn::config::{PairPaths, RunConfig};
use itemchurn::model::{ingest, read_records, TrialFormat};
use itemchurn::null::SdiffMode;
use itemchurn::pipeline::ReliabilityItems;
use itemchurn::rci::SdItemSet;
use itemchurn::report::write_outputs;
use itemchurn::stats::SdConvention;
use itemchurn::synth::{generate_greedy, generate_pair, SynthSpec};
use itemchurn::{analyze, Bundle, Error, FloorCeilingRule};

const OUT_ENV: &str = "ITEMCHURN_OUT_DIR";
const DEFAULT_OUT: &str = "itemchurn-out";

#[derive(Parser)]
#[command(name = "itemchurn", version, about = "Item-level reliable change analysis for model version comparisons")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check trial files and print a validation report per file.
    Validate(ValidateArgs),
    /// Run the full analysis and write report, bundle, tables and plots.
    Analyze(Box<AnalyzeArgs>),
    /// Generate a synthetic trial pair with known ground truth.
    Simulate(SimulateArgs),
    /// Re-render report, tables and plots from an existing bundle.json.
    Report(ReportArgs),
}

#[derive(Args)]
struct ValidateArgs {
    /// Declared samples per item.
    #[arg(long, default_value_t = itemchurn::config::DEFAULT_K)]
    k: usize,
    #[arg(long, default_value_t = itemchurn::rci::DEFAULT_MIN_VALID)]
    min_valid: u32,
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// TOML run configuration; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    v1: Option<PathBuf>,
    #[arg(long)]
    v2: Option<PathBuf>,
    #[arg(long)]
    greedy_v1: Option<PathBuf>,
    #[arg(long)]
    greedy_v2: Option<PathBuf>,
    #[arg(long)]
    second_v1: Option<PathBuf>,
    #[arg(long)]
    second_v2: Option<PathBuf>,
    #[arg(long)]
    second_greedy_v1: Option<PathBuf>,
    #[arg(long)]
    second_greedy_v2: Option<PathBuf>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    splits: Option<usize>,
    /// 0 disables the permutation null.
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    min_valid: Option<u32>,
    #[arg(long, value_enum)]
    floor_ceiling: Option<FloorCeilingArg>,
    #[arg(long, value_enum)]
    null_sdiff: Option<SdiffArg>,
    #[arg(long, value_enum)]
    sd_convention: Option<SdConventionArg>,
    #[arg(long, value_enum)]
    sd_items: Option<SdItemsArg>,
    #[arg(long, value_enum)]
    reliability_items: Option<ReliabilityItemsArg>,
    #[arg(long, value_enum)]
    greedy_view: Option<GreedyViewArg>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Args)]
struct SimulateArgs {
    /// JSON synthetic specification.
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Also write single-shot greedy outcomes.
    #[arg(long)]
    greedy: bool,
    #[arg(long, value_enum, default_value_t = FormatArg::Jsonl)]
    format: FormatArg,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FloorCeilingArg {
    SameExtreme,
    BothExtreme,
}

#[derive(Clone, Copy, ValueEnum)]
enum SdiffArg {
    Fixed,
    Reestimated,
}

#[derive(Clone, Copy, ValueEnum)]
enum SdConventionArg {
    Population,
    Sample,
}

#[derive(Clone, Copy, ValueEnum)]
enum SdItemsArg {
    PreFloorCeiling,
    Analysable,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReliabilityItemsArg {
    FullyValid,
    Analysable,
}

#[derive(Clone, Copy, ValueEnum)]
enum GreedyViewArg {
    FullBenchmark,
    PostExclusion,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Csv,
}

fn out_dir(flag: Option<PathBuf>, from_config: Option<PathBuf>) -> PathBuf {
    flag.or(from_config)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn validate(args: ValidateArgs) -> Result<()> {
    let mut faults = Vec::new();
    for path in &args.files {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let records = read_records(file, TrialFormat::from_path(path)).with_context(|| path.display().to_string())?;
        let (set, report) = ingest(records, args.k, args.min_valid);
        println!("{}", serde_json::to_string_pretty(&report)?);
        if let Err(e) = set {
            faults.push(anyhow::Error::new(e).context(path.display().to_string()));
        }
    }
    match faults.into_iter().next() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn merge_pair(base: Option<PairPaths>, v1: Option<PathBuf>, v2: Option<PathBuf>, g1: Option<PathBuf>, g2: Option<PathBuf>) -> Option<PairPaths> {
    let mut pair = match (base, &v1, &v2) {
        (Some(p), _, _) => p,
        (None, Some(a), Some(b)) => PairPaths { v1: a.clone(), v2: b.clone(), greedy_v1: None, greedy_v2: None },
        _ => return None,
    };
    if let Some(a) = v1 {
        pair.v1 = a;
    }
    if let Some(b) = v2 {
        pair.v2 = b;
    }
    if g1.is_some() {
        pair.greedy_v1 = g1;
    }
    if g2.is_some() {
        pair.greedy_v2 = g2;
    }
    Some(pair)
}

fn run_config(args: &AnalyzeArgs) -> Result<RunConfig> {
    let file = match &args.config {
        Some(p) => Some(RunConfig::from_path(p)?),
        None => None,
    };
    let pair = merge_pair(
        file.as_ref().map(|c| c.pair.clone()),
        args.v1.clone(),
        args.v2.clone(),
        args.greedy_v1.clone(),
        args.greedy_v2.clone(),
    )
    .ok_or_else(|| Error::Config("need --config or both --v1 and --v2".into()))?;
    let mut cfg = file.unwrap_or_else(|| RunConfig::new(pair.v1.clone(), pair.v2.clone()));
    cfg.pair = pair;
    cfg.second_pair = merge_pair(
        cfg.second_pair.take(),
        args.second_v1.clone(),
        args.second_v2.clone(),
        args.second_greedy_v1.clone(),
        args.second_greedy_v2.clone(),
    );
    if let Some(k) = args.k {
        cfg.k = k;
    }
    let a = &mut cfg.analysis;
    if let Some(v) = args.seed {
        a.seed = v;
    }
    if let Some(v) = args.splits {
        a.n_splits = v;
    }
    if let Some(v) = args.permutations {
        a.n_permutations = v;
    }
    if let Some(v) = args.threshold {
        a.threshold = v;
    }
    if let Some(v) = args.min_valid {
        a.min_valid = v;
    }
    if let Some(v) = args.floor_ceiling {
        a.floor_ceiling = match v {
            FloorCeilingArg::SameExtreme => FloorCeilingRule::SameExtreme,
            FloorCeilingArg::BothExtreme => FloorCeilingRule::BothExtreme,
        };
    }
    if let Some(v) = args.null_sdiff {
        a.null_sdiff_mode = match v {
            SdiffArg::Fixed => SdiffMode::Fixed,
            SdiffArg::Reestimated => SdiffMode::Reestimated,
        };
    }
    if let Some(v) = args.sd_convention {
        a.sd_convention = match v {
            SdConventionArg::Population => SdConvention::Population,
            SdConventionArg::Sample => SdConvention::Sample,
        };
    }
    if let Some(v) = args.sd_items {
        a.sd_items = match v {
            SdItemsArg::PreFloorCeiling => SdItemSet::PreFloorCeiling,
            SdItemsArg::Analysable => SdItemSet::Analysable,
        };
    }
    if let Some(v) = args.reliability_items {
        a.reliability_items = match v {
            ReliabilityItemsArg::FullyValid => ReliabilityItems::FullyValid,
            ReliabilityItemsArg::Analysable => ReliabilityItems::Analysable,
        };
    }
    if let Some(v) = args.greedy_view {
        a.greedy_view = match v {
            GreedyViewArg::FullBenchmark => GreedyView::FullBenchmark,
            GreedyViewArg::PostExclusion => GreedyView::PostExclusion,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

fn emit(bundle: &Bundle, dir: &Path) -> Result<()> {
    let outputs = write_outputs(bundle, dir)?;
    for path in &outputs.written {
        println!("{}", path.display());
    }
    for note in &outputs.notices {
        eprintln!("note: {note}");
    }
    Ok(())
}

fn analyze_cmd(args: AnalyzeArgs) -> Result<()> {
    let cfg = run_config(&args)?;
    if args.print_config {
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let input = cfg.load_input()?;
    let bundle = analyze(&input, &cfg.analysis)?;
    if cfg.analysis.n_permutations == 0 {
        eprintln!("note: permutation null disabled (n_permutations = 0)");
    }
    emit(&bundle, &out_dir(args.out, cfg.output_dir))
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let spec = SynthSpec::from_path(&args.spec)?;
    let (v1, v2, truth) = generate_pair(&spec)?;
    let dir = out_dir(args.out, None);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let (format, ext) = match args.format {
        FormatArg::Jsonl => (TrialFormat::Jsonl, "jsonl"),
        FormatArg::Csv => (TrialFormat::Csv, "csv"),
    };
    let create = |name: &str| -> Result<(PathBuf, BufWriter<File>)> {
        let path = dir.join(name);
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok((path, BufWriter::new(file)))
    };
    for (name, set) in [("v1", &v1), ("v2", &v2)] {
        let (path, w) = create(&format!("{name}.{ext}"))?;
        set.write(w, format)?;
        println!("{}", path.display());
    }
    let (path, mut w) = create("truth.json")?;
    serde_json::to_writer_pretty(&mut w, &truth)?;
    println!("{}", path.display());
    if args.greedy {
        let (g1, g2) = generate_greedy(&spec, &truth);
        for (name, run) in [("greedy_v1.jsonl", &g1), ("greedy_v2.jsonl", &g2)] {
            let (path, w) = create(name)?;
            run.write_jsonl(w)?;
            println!("{}", path.display());
        }
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.bundle).map_err(|e| Error::io(&args.bundle, e))?;
    let bundle = Bundle::from_json(&text).with_context(|| args.bundle.display().to_string())?;
    emit(&bundle, &out_dir(args.out, None))
}

/// 1 validation fault, 2 analysis fault, 3 I/O fault.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_io() => 3,
        Some(e) if e.is_validation() => 1,
        Some(Error::Json(_) | Error::Config(_) | Error::InvalidArgument(_)) => 1,
        Some(_) => 2,
        None if err.downcast_ref::<std::io::Error>().is_some() => 3,
        None => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate(a) => validate(a),
        Command::Analyze(a) => analyze_cmd(*a),
        Command::Simulate(a) => simulate(a),
        Command::Report(a) => report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
