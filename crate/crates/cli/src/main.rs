//! `vrdlab` command-line front end.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use vrdlab_core::campaign::{self, Analysis, AnalysisOptions, CampaignConfig, CampaignError, Manifest, MANIFEST_FILE};
use vrdlab_core::device::{Grid, RdtModel};
use vrdlab_core::ecc::{self, EccKind};
use vrdlab_core::mitigation::{self, ActivationTrace, MitigationConfig, ParaProbability, Technique, TechniqueParams};
use vrdlab_core::params::AggOn;
use vrdlab_core::profiler::{Measurement, MeasurementSeries};
use vrdlab_core::report;
use vrdlab_core::sampling::{self, SamplingQuery};
use vrdlab_core::timing::{self, CampaignSpec, TimeEstimate, TimingParams};

#[derive(Parser)]
#[command(name = "vrdlab", version, about = "Variable read disturbance profiling and analysis")]
struct Cli {
    /// Master seed; overrides the config file's seed where one applies.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (or file, for single-table commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile every row and condition of a campaign config.
    Profile {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run analyses over a campaign manifest.
    Analyze {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated analyses; all when omitted.
        #[arg(long, value_delimiter = ',')]
        analyses: Option<Vec<Analysis>>,
        #[arg(long, default_value_t = 50)]
        acf_max_lag: usize,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value_t = 10_000)]
        mc_iterations: u64,
    },
    /// Sampling metrics for a single series CSV.
    Sample {
        #[arg(long)]
        series: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 3, 5, 10, 50, 500])]
        n: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.3, 0.4, 0.5])]
        margins: Vec<f64>,
        #[arg(long, default_value_t = 10_000)]
        iterations: u64,
        #[arg(long, default_value_t = 0)]
        row: u64,
    },
    /// Estimate the wall-clock time of a profiling campaign.
    Esttime {
        #[arg(long)]
        hammers: u64,
        #[arg(long, default_value = "tras")]
        taggon: AggOn,
        #[arg(long, default_value_t = 1)]
        rows: u64,
        #[arg(long, default_value_t = 1)]
        banks: u32,
        #[arg(long, default_value_t = 1)]
        parallel: u32,
        #[arg(long, default_value_t = 1)]
        measurements: u64,
        #[arg(long, default_value_t = 1)]
        patterns: u32,
        #[arg(long, default_value_t = 1)]
        temps: u32,
    },
    /// ECC failure probabilities at a bit error rate.
    Ecc {
        #[arg(long, default_value = "secded")]
        code: EccKind,
        #[arg(long, conflicts_with_all = ["bitflips", "batch"])]
        ber: Option<f64>,
        /// Derive the BER from a bitflip count in one row.
        #[arg(long)]
        bitflips: Option<u64>,
        #[arg(long, default_value_t = 65_536)]
        row_bits: u64,
        /// CSV with `label,ber` columns; prints one result per line.
        #[arg(long, conflicts_with = "bitflips")]
        batch: Option<PathBuf>,
    },
    /// Simulate a read-disturbance mitigation over an activation trace.
    Mitigate {
        #[arg(long)]
        technique: Technique,
        #[arg(long)]
        rdt: u64,
        #[arg(long, default_value_t = 0.0)]
        guardband: f64,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value_t = 1)]
        banks: u32,
        #[arg(long, default_value_t = 65_536)]
        rows_per_bank: u64,
        /// JSON RDT model for the victims; a constant at `--rdt` otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Fixed PARA selection probability.
        #[arg(long)]
        para_p: Option<f64>,
        #[arg(long)]
        window: Option<u64>,
        #[arg(long)]
        table_size: Option<usize>,
        /// Use the full threshold per aggressor instead of halving it.
        #[arg(long)]
        single_sided: bool,
        #[arg(long)]
        backoff_refreshes: Option<usize>,
    },
    /// Profile, analyze, and write `report.md` in one go.
    Report {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Input(String),
    Campaign(CampaignError),
    Io(PathBuf, std::io::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 3,
            CliError::Io(..) => 4,
            CliError::Campaign(e) => e.exit_code() as u8,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => f.write_str(m),
            CliError::Campaign(e) => write!(f, "{e}"),
            CliError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl From<CampaignError> for CliError {
    fn from(e: CampaignError) -> Self {
        CliError::Campaign(e)
    }
}

fn input<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Input(e.to_string())
}

fn print_json<T: Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn load_config(path: &Path, cli: &Cli) -> Result<CampaignConfig, CliError> {
    let mut cfg = CampaignConfig::load(path)?;
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.output_dir = o.clone();
    }
    Ok(cfg)
}

fn write_markdown(dir: &Path, md: &str) -> Result<PathBuf, CliError> {
    let p = dir.join("report.md");
    fs::write(&p, md).map_err(|e| CliError::Io(p.clone(), e))?;
    Ok(p)
}

#[derive(Serialize)]
struct ProfileSummary<'a> {
    manifest: PathBuf,
    series: usize,
    master_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<&'a Path>,
}

fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Profile { config } => {
            let cfg = load_config(config, cli)?;
            let manifest = campaign::run_campaign(&cfg, cli.jobs)?;
            print_json(&ProfileSummary {
                manifest: cfg.output_dir.join(MANIFEST_FILE),
                series: manifest.entries.len(),
                master_seed: manifest.master_seed,
                report: None,
            });
        }
        Command::Analyze { manifest, analyses, acf_max_lag, alpha, mc_iterations } => {
            let which: BTreeSet<Analysis> = match analyses {
                Some(a) => a.iter().copied().collect(),
                None => Analysis::ALL.into_iter().collect(),
            };
            let opts = AnalysisOptions {
                acf_max_lag: *acf_max_lag,
                alpha: *alpha,
                sampling: SamplingQuery { mc_iterations: *mc_iterations, ..SamplingQuery::default() },
            };
            let out = match &cli.out {
                Some(o) => o.clone(),
                None => manifest.parent().unwrap_or(Path::new(".")).join("analysis"),
            };
            let seed = cli.seed.unwrap_or(Manifest::load(manifest)?.master_seed);
            let rep = campaign::analyze(manifest, &which, &opts, &out, seed)?;
            if let Some(md) = &rep.markdown {
                write_markdown(&out, md)?;
            }
            let files: Vec<String> = rep.files.iter().map(|p| p.display().to_string()).collect();
            print_json(&files);
        }
        Command::Sample { series, n, margins, iterations, row } => {
            let text = fs::read(series).map_err(|e| CliError::Io(series.clone(), e))?;
            let values: Vec<u64> = MeasurementSeries::read_csv(text.as_slice())
                .map_err(|e| CliError::Input(format!("{}: {e}", series.display())))?
                .into_iter()
                .filter_map(Measurement::value)
                .collect();
            let query = SamplingQuery { n_values: n.clone(), margins: margins.clone(), mc_iterations: *iterations };
            let recs = sampling::analyze_values(*row, &values, &query, cli.seed.unwrap_or(0)).map_err(input)?;
            match &cli.out {
                Some(p) => report::write_sampling(p, &recs).map_err(|e| CliError::Io(p.clone(), e))?,
                None => print_json(&recs),
            }
        }
        Command::Esttime { hammers, taggon, rows, banks, parallel, measurements, patterns, temps } => {
            let spec = CampaignSpec {
                rows: *rows,
                banks: *banks,
                measurements_per_row: *measurements,
                hammer_count: *hammers,
                t_aggon: *taggon,
                patterns: *patterns,
                temperatures: *temps,
                parallel_banks: *parallel,
            };
            let t = timing::campaign_time(&TimingParams::default(), &spec).map_err(input)?;
            print_json(&TimeEstimate::from(t));
        }
        Command::Ecc { code, ber, bitflips, row_bits, batch } => {
            if let Some(path) = batch {
                let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                let mut out = Vec::new();
                for rec in rdr.deserialize::<(String, f64)>() {
                    let (label, p) = rec.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
                    out.push(serde_json::json!({ "label": label, "result": ecc::report(*code, p).map_err(input)? }));
                }
                print_json(&out);
                return Ok(());
            }
            let p = match (ber, bitflips) {
                (Some(p), _) => *p,
                (None, Some(f)) => ecc::row_bitflip_rate::<f64>(*f, *row_bits).map_err(input)?.get(),
                (None, None) => return Err(CliError::Input("one of --ber, --bitflips, or --batch is required".into())),
            };
            print_json(&ecc::report(*code, p).map_err(input)?);
        }
        Command::Mitigate {
            technique,
            rdt,
            guardband,
            trace,
            banks,
            rows_per_bank,
            model,
            para_p,
            window,
            table_size,
            single_sided,
            backoff_refreshes,
        } => {
            let mut params = TechniqueParams::default_for(*technique);
            match &mut params {
                TechniqueParams::Para { probability } => {
                    if let Some(p) = para_p {
                        *probability = ParaProbability::Fixed(*p);
                    }
                }
                TechniqueParams::Mint { window: w } => *w = window.unwrap_or(*w),
                TechniqueParams::Graphene { table_size: k, double_sided } => {
                    *k = table_size.unwrap_or(*k);
                    *double_sided = !single_sided;
                }
                TechniqueParams::Prac { double_sided, backoff_refreshes: b } => {
                    *b = backoff_refreshes.unwrap_or(*b);
                    *double_sided = !single_sided;
                }
            }
            let config = MitigationConfig::new(*rdt, *guardband, params).map_err(input)?;
            let model = match model {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| CliError::Io(p.clone(), e))?;
                    let m: RdtModel = serde_json::from_str(&text)
                        .map_err(|e| CliError::Campaign(CampaignError::Config(format!("{}: {e}", p.display()))))?;
                    m
                }
                None => RdtModel::constant(*rdt, Grid::unit(*rdt)),
            };
            let trace = ActivationTrace::load(trace, *banks, *rows_per_bank).map_err(|e| match e {
                mitigation::MitigationError::Io { path, source } => CliError::Io(path, source),
                other => input(other),
            })?;
            let outcome = mitigation::simulate(&trace, &config, &model, cli.seed.unwrap_or(0)).map_err(input)?;
            print_json(&outcome);
        }
        Command::Report { config } => {
            let cfg = load_config(config, cli)?;
            let manifest = campaign::run_campaign(&cfg, cli.jobs)?;
            let which: BTreeSet<Analysis> =
                if cfg.analyses.is_empty() { Analysis::ALL.into_iter().collect() } else { cfg.analyses.clone() };
            let manifest_path = cfg.output_dir.join(MANIFEST_FILE);
            let rep = campaign::analyze(&manifest_path, &which, &cfg.analysis, &cfg.output_dir, cfg.master_seed)?;
            let md = write_markdown(&cfg.output_dir, rep.markdown.as_deref().unwrap_or(""))?;
            print_json(&ProfileSummary {
                manifest: manifest_path,
                series: manifest.entries.len(),
                master_seed: manifest.master_seed,
                report: Some(&md),
            });
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
