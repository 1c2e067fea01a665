use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use balancelab::documents::{alignment_report, survey_report, SurveyReport};
use balancelab::ingest::{self, fetch_paginated, generate_synthetic, FetchConfig, IngestReport, SyntheticSpec};
use balancelab::metrics::{shift_from_counts, unit_counts, DifficultyPolicy, DominanceMode, PopularityUnit};
use balancelab::report::{build_report, BalanceReport, MetricsConfig};
use balancelab::store::{load_era_registry, LogStore};
use balancelab::survey::{RdEstimator, SurveyDataset};

mod export;

const TOKEN_VAR: &str = "BALANCELAB_TOKEN";

#[derive(Parser)]
#[command(name = "balancelab", version, about = "Balance analytics over combat logs and player surveys")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest line-delimited JSON combat logs into a store.
    Ingest {
        #[arg(long)]
        store: PathBuf,
        /// Era registry (`label,start_utc,end_utc` per line) to register first.
        #[arg(long)]
        eras: Option<PathBuf>,
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Page combat logs from an HTTP endpoint into a store.
    Fetch {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        endpoint: String,
        #[arg(long)]
        era: Option<String>,
        #[arg(long, default_value_t = 100)]
        page_size: usize,
        #[arg(long)]
        eras: Option<PathBuf>,
    },
    /// Generate a seeded synthetic corpus, its store and ground truth.
    Synth {
        /// JSON synthetic spec.
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Slot shares per profession/specialization.
    Popularity {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        era: String,
        /// Reference era; adds the shift from it to `--era`.
        #[arg(long)]
        vs: Option<String>,
        #[arg(long, value_enum, default_value_t = Unit::Slot)]
        unit: Unit,
    },
    /// Balance report for one era.
    Metrics {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        era: String,
        #[arg(long, value_enum, default_value_t = Dominance::Quantile)]
        dominance: Dominance,
        #[arg(long, value_enum, default_value_t = Difficulty::Cv)]
        difficulty: Difficulty,
        /// Trimming band as LO,HI.
        #[arg(long, value_parser = parse_trim)]
        trim: Option<(f64, f64)>,
        #[arg(long, value_parser = parse_count)]
        min_n: Option<usize>,
        #[arg(long)]
        exclude_support: bool,
        /// Unit of popularity counts.
        #[arg(long, value_enum, default_value_t = Unit::Slot)]
        popularity_unit: Unit,
        #[arg(long)]
        vs: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Survey statistics report.
    Survey {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        scales: PathBuf,
        #[arg(long)]
        population: Option<u64>,
        /// How per-scale correlations reduce to an item's r_d.
        #[arg(long, value_enum, default_value_t = Rd::Mean)]
        rd_estimator: Rd,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare survey votes with a balance report.
    Reconcile {
        #[arg(long)]
        report: PathBuf,
        /// Survey report produced by `survey`.
        #[arg(long)]
        survey: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        vote_floor: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write plot data (CSV) from one or more balance reports.
    ExportPlot {
        #[arg(long, required = true, num_args = 1..)]
        report: Vec<PathBuf>,
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        out: PathBuf,
        /// Keep support builds in distribution plots.
        #[arg(long)]
        include_support: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Dominance {
    Strict,
    Quantile,
}

#[derive(Clone, Copy, ValueEnum)]
enum Difficulty {
    Cv,
    Variance,
}

#[derive(Clone, Copy, ValueEnum)]
enum Unit {
    /// Player slots.
    Slot,
    /// Distinct accounts.
    Account,
}

impl From<Unit> for PopularityUnit {
    fn from(u: Unit) -> Self {
        match u {
            Unit::Slot => PopularityUnit::PlayerSlot,
            Unit::Account => PopularityUnit::UniqueAccount,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Rd {
    /// Mean |r| against the other scales.
    Mean,
    /// Largest |r| against the other scales.
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PlotKind {
    Distributions,
    Popularity,
}

fn parse_trim(s: &str) -> std::result::Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad number `{lo}`"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad number `{hi}`"))?;
    Ok((lo, hi))
}

/// Accepts integers written in float notation, such as `1e9`.
fn parse_count(s: &str) -> std::result::Result<usize, String> {
    if let Ok(n) = s.parse::<usize>() {
        return Ok(n);
    }
    let x: f64 = s.parse().map_err(|_| format!("`{s}` is not a count"))?;
    if x.is_finite() && x >= 0.0 && x.fract() == 0.0 && x <= usize::MAX as f64 {
        Ok(x as usize)
    } else {
        Err(format!("`{s}` is not a non-negative integer"))
    }
}

/// A failure with data or I/O, reported verbatim with exit status 2.
struct DataError(String);

impl<E: std::fmt::Display> From<E> for DataError {
    fn from(e: E) -> Self {
        DataError(e.to_string())
    }
}

type Result<T> = std::result::Result<T, DataError>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(DataError(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Ingest { store, eras, files } => {
            let mut store = open_store(&store, eras.as_deref())?;
            let report = ingest::ingest_files(&files, &mut store);
            store.flush_index()?;
            print_ingest(&report)
        }
        Command::Fetch { store, endpoint, era, page_size, eras } => {
            let mut store = open_store(&store, eras.as_deref())?;
            let config = FetchConfig {
                page_size,
                era_filter: era,
                bearer_token: std::env::var(TOKEN_VAR).ok().filter(|t| !t.is_empty()),
                ..FetchConfig::default()
            };
            let mut stream = fetch_paginated(&endpoint, config)?;
            let mut report = IngestReport::default();
            let mut failure = None;
            for (i, item) in stream.by_ref().enumerate() {
                match item {
                    Ok(log) => report.record(&mut store, &endpoint, i + 1, Ok(log)),
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            store.flush_index()?;
            println!("requests\t{}", stream.requests());
            println!("skipped\t{}", stream.skipped());
            print_ingest(&report)?;
            match failure {
                Some(e) => Err(e.into()),
                None => Ok(()),
            }
        }
        Command::Synth { spec, out } => synth(&spec, &out),
        Command::Popularity { store, era, vs, unit } => {
            let store = LogStore::open(&store)?;
            require_era(&store, &era)?;
            let logs = store.scan(Some(&era), None)?;
            let counts = unit_counts(&logs, unit.into());
            let total: u64 = counts.values().sum();
            if total == 0 {
                return Err(DataError(format!("era `{era}` has no player slots")));
            }
            let mut out = String::from("build\tcount\tshare\n");
            for (build, c) in &counts {
                out += &format!("{build}\t{c}\t{}\n", *c as f64 / total as f64);
            }
            if let Some(reference) = vs {
                require_era(&store, &reference)?;
                let before = unit_counts(&store.scan(Some(&reference), None)?, unit.into());
                out += &format!("\nshift from {reference} to {era}\nbuild\tdelta_pp\n");
                for s in shift_from_counts(&reference, &before, &era, &counts)? {
                    out += &format!("{}\t{}\n", s.build, s.delta_pp);
                }
            }
            emit(None, &out)
        }
        Command::Metrics {
            store,
            era,
            dominance,
            difficulty,
            trim,
            min_n,
            exclude_support,
            popularity_unit,
            vs,
            out,
        } => {
            let mut config = MetricsConfig::default();
            config.dominance.mode = match dominance {
                Dominance::Strict => DominanceMode::Strict,
                Dominance::Quantile => DominanceMode::Quantile,
            };
            config.difficulty = match difficulty {
                Difficulty::Cv => DifficultyPolicy::RelativeDispersion,
                Difficulty::Variance => DifficultyPolicy::RawVariance,
            };
            if let Some(trim) = trim {
                config.dominance.trim = trim;
            }
            if let Some(n) = min_n {
                config.dominance.min_n = n;
            }
            config.exclude_support = exclude_support;
            config.popularity_unit = popularity_unit.into();
            config.reference_era = vs;
            let store = LogStore::open(&store)?;
            let report = build_report(&store, &era, &config)?;
            emit(out.as_deref(), &report.render())
        }
        Command::Survey { data, scales, population, rd_estimator, out } => {
            let ds = SurveyDataset::load(&data, &scales)?;
            let estimator = match rd_estimator {
                Rd::Mean => RdEstimator::MeanAbsOtherScales,
                Rd::Max => RdEstimator::MaxAbsOtherScales,
            };
            emit(out.as_deref(), &survey_report(&ds, population, estimator)?.render())
        }
        Command::Reconcile { report, survey, vote_floor, out } => {
            let report = BalanceReport::parse(&read(&report)?)?;
            let survey = SurveyReport::parse(&read(&survey)?)?;
            emit(out.as_deref(), &alignment_report(&report, &survey, vote_floor).render())
        }
        Command::ExportPlot { report, kind, out, include_support } => {
            let reports = report
                .iter()
                .map(|p| read(p).and_then(|t| Ok(BalanceReport::parse(&t)?)))
                .collect::<Result<Vec<_>>>()?;
            let csv = export::plot_csv(&reports, kind, include_support)?;
            emit(Some(&out), &csv)
        }
    }
}

fn open_store(root: &Path, eras: Option<&Path>) -> Result<LogStore> {
    match eras {
        Some(path) => Ok(LogStore::open_or_create(root, &load_era_registry(path)?)?),
        None => Ok(LogStore::open(root)?),
    }
}

fn require_era(store: &LogStore, era: &str) -> Result<()> {
    match store.era(era) {
        Some(_) => Ok(()),
        None => Err(DataError(format!("era `{era}` is not registered"))),
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| DataError(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| DataError(format!("{}: {e}", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            // A closed pipe is not an error worth a non-zero exit.
            let _ = stdout.write_all(text.as_bytes());
            Ok(())
        }
    }
}

fn print_ingest(report: &IngestReport) -> Result<()> {
    for r in &report.rejections {
        eprintln!("{}:{}\t{}\t{}", r.source, r.line, r.reason, r.detail);
    }
    emit(None, &report.to_string())?;
    if report.io_errors.is_empty() {
        Ok(())
    } else {
        Err(DataError(format!("{} input(s) could not be read", report.io_errors.len())))
    }
}

/// Writes `store/`, `corpus.log` (one canonical line per log), `eras` and
/// `manifest.json` under `out`.
fn synth(spec_path: &Path, out: &Path) -> Result<()> {
    let spec: SyntheticSpec = serde_json::from_str(&read(spec_path)?)
        .map_err(|e| DataError(format!("{}: {e}", spec_path.display())))?;
    let (logs, manifest) = generate_synthetic(&spec)?;
    fs::create_dir_all(out).map_err(|e| DataError(format!("{}: {e}", out.display())))?;
    let mut corpus = String::new();
    for log in &logs {
        corpus += &ingest::serialize_log(log);
        corpus.push('\n');
    }
    emit(Some(&out.join("corpus.log")), &corpus)?;
    let eras: String = spec
        .eras
        .iter()
        .map(|e| format!("{},{},{}\n", e.label, e.start_utc, e.end_utc))
        .collect();
    emit(Some(&out.join("eras")), &eras)?;
    emit(Some(&out.join("manifest.json")), &balancelab::report::render_sorted(&manifest))?;
    let mut store = LogStore::open_or_create(out.join("store"), &spec.eras)?;
    store.set_durability(balancelab::store::Durability::SyncOnFlush);
    let report = ingest::ingest_files(&[out.join("corpus.log")], &mut store);
    store.flush_index()?;
    print_ingest(&report)
}
