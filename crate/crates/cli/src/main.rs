use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use mdscan_cli::{
    bench_generate, bench_score, export_selected, run_file, write_json_summary, write_pp_tsv,
    write_report_tsv, write_score_tsv, RunConfig,
};
use mdscan_core::calibrate::Method;
use mdscan_core::synth::{ResponseKind, SynthConfig};

#[derive(Parser)]
#[command(
    name = "mdscan",
    version,
    about = "All-relevant feature selection by exhaustive multidimensional \
             conditional-mutual-information search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the selection pipeline on a delimited file.
    Run(Box<RunArgs>),
    /// Benchmark utilities.
    #[command(subcommand)]
    Bench(BenchCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// Benjamini-Hochberg false discovery rate control.
    Fdr,
    /// Bonferroni-Holm family-wise error rate control.
    Fwer,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Fdr => Method::Fdr,
            MethodArg::Fwer => Method::Fwer,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Input CSV/TSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Name of the response column.
    #[arg(long)]
    response: String,
    /// Tuple dimension of the scan.
    #[arg(short)]
    k: usize,
    /// Categories for continuous descriptors.
    #[arg(long, default_value_t = 3)]
    bins: usize,
    /// Categories for a continuous response (defaults to --bins).
    #[arg(long)]
    response_bins: Option<usize>,
    /// Additional randomly shifted discretizations.
    #[arg(long, default_value_t = 0)]
    shifts: usize,
    /// Split-point perturbation as a fraction of one quantile interval.
    #[arg(long, default_value_t = 0.25)]
    shift_magnitude: f64,
    /// Multiple-testing regime for calling relevant variables.
    #[arg(long, value_enum, default_value_t = MethodArg::Fdr)]
    method: MethodArg,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    /// Scan worker threads (0 = auto).
    #[arg(long, env = "MDSCAN_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Permuted contrast copies appended for gamma fitting only.
    #[arg(long, default_value_t = 0)]
    contrast: usize,
    /// Report TSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON summary path.
    #[arg(long)]
    json_out: Option<PathBuf>,
    /// Probability-probability plot data path.
    #[arg(long)]
    pp_out: Option<PathBuf>,
    /// Reduced CSV of selected descriptors plus the response.
    #[arg(long)]
    export_selected: Option<PathBuf>,
    /// Suppress progress output.
    #[arg(long, default_value_t = false)]
    quiet: bool,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Write a synthetic benchmark dataset and its ground-truth manifest.
    Generate(GenerateArgs),
    /// Score a report TSV against a manifest: per-group found counts and
    /// rank summaries.
    Score(ScoreArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    out_dir: PathBuf,
    /// Response function: sphere, xor3, checkerboard, or random.
    #[arg(long, default_value = "sphere")]
    response: String,
    #[arg(long, default_value_t = 5000)]
    n_objects: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 0.15)]
    noise_amplitude: f64,
    /// Comma-separated sizes of the seven variable groups.
    #[arg(long, default_value = "3,3,20,20,5,100,200")]
    groups: String,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    /// Output TSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => match run(*args) {
            Ok(exit) => exit,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
        },
        Command::Bench(BenchCommand::Generate(args)) => report_errors(generate_cmd(args)),
        Command::Bench(BenchCommand::Score(args)) => report_errors(score_cmd(args)),
    }
}

fn report_errors(result: Result<()>) -> ExitCode {
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let config = RunConfig {
        response: args.response.clone(),
        k: args.k,
        bins: args.bins,
        response_bins: args.response_bins,
        n_shifts: args.shifts,
        shift_magnitude: args.shift_magnitude,
        method: args.method.into(),
        alpha: args.alpha,
        workers: args.workers,
        seed: args.seed,
        contrast_copies: args.contrast,
    };

    let last_percent = AtomicU64::new(u64::MAX);
    let progress = move |done: u64, total: u64| {
        let percent = done * 100 / total.max(1);
        if last_percent.swap(percent, Ordering::Relaxed) != percent {
            eprint!("\rscanning: {percent:3}% ({done}/{total} tuples)");
            if done == total {
                eprintln!();
            }
            let _ = io::stderr().flush();
        }
    };
    let show_progress = !args.quiet;
    let (output, raw) = run_file(
        &args.input,
        &config,
        if show_progress { Some(&progress) } else { None },
    )?;

    match &args.out {
        Some(path) => write_report_tsv(&output.report, BufWriter::new(File::create(path)?))?,
        None => write_report_tsv(&output.report, io::stdout().lock())?,
    }
    if let Some(path) = &args.json_out {
        write_json_summary(&output, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &args.pp_out {
        write_pp_tsv(&output.report, BufWriter::new(File::create(path)?))?;
    }
    if let Some(path) = &args.export_selected {
        export_selected(&raw, &output.report, path)?;
    }

    let n_relevant = output.report.rows.iter().filter(|r| r.relevant).count();
    eprintln!(
        "{} of {} variables relevant (k={}, {}, alpha={}){}",
        n_relevant,
        output.report.n_variables,
        output.report.k,
        output.report.method,
        output.report.alpha,
        if output.fallback {
            "; gamma fallback in effect"
        } else {
            ""
        }
    );
    Ok(if output.fallback {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

fn generate_cmd(args: GenerateArgs) -> Result<()> {
    let response_kind = ResponseKind::parse(&args.response)
        .ok_or_else(|| anyhow::anyhow!("unknown response kind '{}'", args.response))?;
    let sizes: Vec<usize> = args
        .groups
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()?;
    let group_sizes: [usize; 7] = sizes
        .try_into()
        .map_err(|_| anyhow::anyhow!("--groups needs exactly 7 comma-separated sizes"))?;
    let config = SynthConfig {
        n_objects: args.n_objects,
        group_sizes,
        noise_amplitude: args.noise_amplitude,
        response_kind,
        seed: args.seed,
    };
    let (data, manifest) = bench_generate(&config, &args.out_dir)?;
    eprintln!("wrote {} and {}", data.display(), manifest.display());
    Ok(())
}

fn score_cmd(args: ScoreArgs) -> Result<()> {
    let summary = bench_score(&args.report, &args.manifest)?;
    match &args.out {
        Some(path) => write_score_tsv(&summary, BufWriter::new(File::create(path)?))?,
        None => write_score_tsv(&summary, io::stdout().lock())?,
    }
    Ok(())
}
