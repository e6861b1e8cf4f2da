//! Command-line front end.
//!
//! Subcommands mirror the library layers: `construct` builds spec files,
//! `simulate` sweeps BLER over channel points, `estimate` produces
//! per-bit profiles, `flip-profile` derives flip-candidate sets from
//! them, `compare` runs estimator-versus-counting convergence studies,
//! and `export-bitmap` renders information-bit layouts.
//!
//! Exit status: 0 on success, 2 when results are valid but some stop
//! rule missed its error target (partial data), 1 for configuration or
//! I/O problems.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use polar_toolbox::channel::ChannelModel;
use polar_toolbox::code::{CodeSpec, CrcSpec};
use polar_toolbox::construct::{
    construct_bhattacharyya, construct_ga, construct_rm_polar, construct_sc_optimized,
    construct_scl_optimized, import_sequence, with_crc, OptimizeOptions,
};
use polar_toolbox::decoder::CheckNode;
use polar_toolbox::estimator::{
    estimate, estimate_exhaustive, flip_candidate_set, EstimateMode, EstimateOptions,
    EstimatorDecoder, StopRule,
};
use polar_toolbox::experiment::{
    comparison_to_csv, export_bit_distribution, profile_to_csv, run_bler_sweep,
    run_estimator_comparison, sweep_to_csv, worker_pool, SweepConfig, SweepDecoder,
};
use polar_toolbox::{Error, Result};

#[derive(Parser)]
#[command(
    name = "polar-toolbox",
    version,
    about = "Polar code construction, decoding, and error-rate estimation"
)]
struct Cli {
    /// Worker threads (default: POLAR_TOOLBOX_WORKERS, then all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a code spec and write it as JSON.
    Construct(ConstructArgs),
    /// Monte Carlo block-error sweep over channel points.
    Simulate(SimulateArgs),
    /// Per-bit error profile at one channel point.
    Estimate(EstimateArgs),
    /// Flip-candidate sets for a grid of profile thresholds.
    FlipProfile(FlipProfileArgs),
    /// Estimator-versus-counting convergence comparison.
    Compare(CompareArgs),
    /// Information-bit layout matrices and set differences.
    ExportBitmap(ExportBitmapArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Greedy search driven by the SC error profile.
    ScOpt,
    /// Greedy search driven by the SCL error profile.
    SclOpt,
    /// Bhattacharyya parameter recursion.
    Bhatta,
    /// Gaussian approximation of density evolution (AWGN design).
    Ga,
    /// Reed-Muller weight classes with reliability-ranked boundary.
    RmPolar,
    /// Reliability sequence or explicit set from --sequence-file.
    Import,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CrcKind {
    None,
    Crc16,
    #[value(alias = "crc24c")]
    Crc24,
}

impl CrcKind {
    fn spec(self) -> Option<CrcSpec> {
        match self {
            CrcKind::None => None,
            CrcKind::Crc16 => Some(CrcSpec::crc16()),
            CrcKind::Crc24 => Some(CrcSpec::crc24c()),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ChannelKind {
    Awgn,
    Bsc,
    Bec,
}

fn channel_at(kind: ChannelKind, value: f64) -> ChannelModel {
    match kind {
        ChannelKind::Awgn => ChannelModel::Awgn { esn0_db: value },
        ChannelKind::Bsc => ChannelModel::Bsc { p: value },
        ChannelKind::Bec => ChannelModel::Bec {
            erasure_prob: value,
        },
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DecoderKind {
    Sc,
    Scl,
    Dscf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeKind {
    Practical,
    Genie,
}

impl ModeKind {
    fn mode(self) -> EstimateMode {
        match self {
            ModeKind::Practical => EstimateMode::Practical,
            ModeKind::Genie => EstimateMode::Genie,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct ConstructArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Block length (power of two).
    #[arg(long)]
    n: usize,
    /// Payload bits, excluding any CRC.
    #[arg(long)]
    k: usize,
    #[arg(long, value_enum, default_value = "none")]
    crc: CrcKind,
    #[arg(long, value_enum)]
    channel: Option<ChannelKind>,
    /// Channel parameter: Es/N0 in dB (AWGN), crossover (BSC), or
    /// erasure probability (BEC).
    #[arg(long)]
    design_point: Option<f64>,
    /// List size for scl-opt.
    #[arg(long, default_value_t = 2)]
    list_size: usize,
    /// Per-round error target for the greedy searches.
    #[arg(long, default_value_t = 100)]
    target_errors: u64,
    /// Per-round sample budget for the greedy searches.
    #[arg(long, default_value_t = 1_000_000)]
    max_samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Text file with one 1-based index per line: a whole reliability
    /// sequence (least reliable first) or exactly k + crc-width
    /// information positions.
    #[arg(long)]
    sequence_file: Option<PathBuf>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    /// Spec JSON file; repeat to sweep several codes side by side.
    #[arg(long = "spec", required = true)]
    specs: Vec<PathBuf>,
    #[arg(long, value_enum)]
    channel: ChannelKind,
    /// Comma-separated channel parameters, one sweep point each.
    #[arg(long, value_delimiter = ',', required = true)]
    points: Vec<f64>,
    #[arg(long, value_enum, default_value = "sc")]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 8)]
    list_size: usize,
    /// CRC-aided final path selection (SCL only).
    #[arg(long)]
    crc_aided: bool,
    #[arg(long, default_value_t = 10)]
    dscf_attempts: usize,
    #[arg(long, default_value_t = 0.3367)]
    dscf_alpha: f64,
    /// Restrict flips to positions whose pilot-profile estimate reaches
    /// this threshold.
    #[arg(long)]
    dscf_gamma: Option<f64>,
    #[arg(long, default_value_t = 100)]
    target_errors: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_samples: u64,
    #[arg(long, default_value_t = 256)]
    chunk_size: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reuse one noise stream across specs at each point.
    #[arg(long)]
    paired: bool,
    /// Min-sum check nodes instead of the exact rule.
    #[arg(long)]
    min_sum: bool,
    /// Draw random payloads instead of the all-zero block.
    #[arg(long)]
    random_payload: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    channel: ChannelKind,
    #[arg(long)]
    design_point: f64,
    #[arg(long, value_enum, default_value = "practical")]
    mode: ModeKind,
    #[arg(long, value_enum, default_value = "sc")]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 8)]
    list_size: usize,
    #[arg(long)]
    crc_aided: bool,
    /// Walk the whole channel-output support instead of sampling
    /// (finite channels, small blocks).
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 100)]
    target_errors: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_samples: u64,
    #[arg(long, default_value_t = 256)]
    chunk_size: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    min_sum: bool,
    #[arg(long)]
    random_payload: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FlipProfileArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    channel: ChannelKind,
    #[arg(long)]
    design_point: f64,
    /// Comma-separated candidate thresholds.
    #[arg(long, value_delimiter = ',', required = true)]
    gammas: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    target_errors: u64,
    #[arg(long, default_value_t = 1_000_000)]
    max_samples: u64,
    #[arg(long, default_value_t = 256)]
    chunk_size: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    min_sum: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, value_enum)]
    channel: ChannelKind,
    #[arg(long)]
    design_point: f64,
    #[arg(long, value_enum, default_value = "practical")]
    mode: ModeKind,
    #[arg(long, value_enum, default_value = "sc")]
    decoder: DecoderKind,
    #[arg(long, default_value_t = 8)]
    list_size: usize,
    /// Comma-separated sample counts to snapshot.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<u64>,
    #[arg(long, default_value_t = 20)]
    runs: usize,
    /// Add an exact exhaustive reference (finite channels, small blocks).
    #[arg(long)]
    exhaustive: bool,
    #[arg(long, default_value_t = 256)]
    chunk_size: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    min_sum: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExportBitmapArgs {
    /// Spec JSON file; repeat to diff several codes.
    #[arg(long = "spec", required = true)]
    specs: Vec<PathBuf>,
    /// Grid rows; position c*rows + r + 1 lands at (r, c).
    #[arg(long)]
    rows: Option<usize>,
    /// Grid columns; alternative way to fix the shape.
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Status {
    Complete,
    Partial,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    let pool = match worker_pool(cli.workers) {
        Ok(pool) => pool,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| run(cli.command)) {
        Ok(Status::Complete) => ExitCode::SUCCESS,
        Ok(Status::Partial) => {
            eprintln!("warning: some rows missed their error target; results are partial");
            ExitCode::from(2)
        }
        Err(e @ Error::NotConverged { .. }) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::Construct(args) => run_construct(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Estimate(args) => run_estimate(args),
        Command::FlipProfile(args) => run_flip_profile(args),
        Command::Compare(args) => run_compare(args),
        Command::ExportBitmap(args) => run_export_bitmap(args),
    }
}

fn read_spec(path: &Path) -> Result<CodeSpec> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, content)?,
        None => print!("{content}"),
    }
    Ok(())
}

fn check_node(min_sum: bool) -> CheckNode {
    if min_sum {
        CheckNode::MinSum
    } else {
        CheckNode::Exact
    }
}

fn require_channel(args: &ConstructArgs) -> Result<ChannelModel> {
    match (args.channel, args.design_point) {
        (Some(kind), Some(value)) => Ok(channel_at(kind, value)),
        _ => Err(Error::Config(
            "this method needs --channel and --design-point".into(),
        )),
    }
}

fn run_construct(args: ConstructArgs) -> Result<Status> {
    let crc = args.crc.spec();
    let k_total = args.k + crc.as_ref().map_or(0, |c| c.width);
    let optimize = OptimizeOptions {
        stop: StopRule {
            target_errors: args.target_errors,
            max_samples: args.max_samples,
        },
        seed: args.seed,
        lane: 0,
        chunk_size: 256,
    };
    let base = match args.method {
        Method::Bhatta => construct_bhattacharyya(args.n, k_total, &require_channel(&args)?)?,
        Method::Ga => {
            if matches!(args.channel, Some(k) if k != ChannelKind::Awgn) {
                return Err(Error::Config(
                    "the Gaussian approximation designs for AWGN only".into(),
                ));
            }
            let esn0_db = args.design_point.ok_or_else(|| {
                Error::Config("--design-point (Es/N0 in dB) is required for ga".into())
            })?;
            construct_ga(args.n, k_total, esn0_db)?
        }
        Method::RmPolar => construct_rm_polar(args.n, k_total, &require_channel(&args)?)?,
        Method::ScOpt => {
            construct_sc_optimized(args.n, k_total, &require_channel(&args)?, &optimize)?.spec
        }
        Method::SclOpt => {
            construct_scl_optimized(
                args.n,
                k_total,
                args.list_size,
                &require_channel(&args)?,
                &optimize,
            )?
            .spec
        }
        Method::Import => {
            let path = args.sequence_file.as_ref().ok_or_else(|| {
                Error::Config("--sequence-file is required for import".into())
            })?;
            let values = read_index_file(path)?;
            import_sequence(args.n, k_total, &values)?
        }
    };
    let spec = match crc {
        Some(c) => with_crc(&base, c)?,
        None => base,
    };
    let mut text = serde_json::to_string_pretty(&spec)?;
    text.push('\n');
    emit(&args.out, &text)?;
    Ok(Status::Complete)
}

fn read_index_file(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path)?;
    let mut values = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        values.push(line.parse::<usize>().map_err(|_| {
            Error::Parse(format!("{}:{}: not an index: {line:?}", path.display(), ln + 1))
        })?);
    }
    Ok(values)
}

fn run_simulate(args: SimulateArgs) -> Result<Status> {
    let specs = args
        .specs
        .iter()
        .map(|p| read_spec(p))
        .collect::<Result<Vec<_>>>()?;
    let points = args
        .points
        .iter()
        .map(|&v| channel_at(args.channel, v))
        .collect();
    let decoder = match args.decoder {
        DecoderKind::Sc => SweepDecoder::Sc,
        DecoderKind::Scl => SweepDecoder::Scl {
            list_size: args.list_size,
            crc_aided: args.crc_aided,
        },
        DecoderKind::Dscf => SweepDecoder::Dscf {
            attempts: args.dscf_attempts,
            alpha: args.dscf_alpha,
            gamma: args.dscf_gamma,
        },
    };
    let config = SweepConfig {
        specs,
        points,
        decoder,
        stop: StopRule {
            target_errors: args.target_errors,
            max_samples: args.max_samples,
        },
        chunk_size: args.chunk_size,
        seed: args.seed,
        paired: args.paired,
        check_node: check_node(args.min_sum),
        random_payload: args.random_payload,
        collect_outcomes: false,
    };
    let rows = run_bler_sweep(&config)?;
    let content = match args.format {
        Format::Csv => sweep_to_csv(&rows),
        Format::Json => to_json_lines(&rows)?,
    };
    emit(&args.out, &content)?;
    if rows.iter().all(|r| r.converged) {
        Ok(Status::Complete)
    } else {
        Ok(Status::Partial)
    }
}

fn to_json_lines<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

#[allow(clippy::too_many_arguments)]
fn estimate_options(
    mode: ModeKind,
    decoder: DecoderKind,
    list_size: usize,
    crc_aided: bool,
    target_errors: u64,
    max_samples: u64,
    chunk_size: u64,
    seed: u64,
    min_sum: bool,
    random_payload: bool,
) -> Result<EstimateOptions> {
    let decoder = match decoder {
        DecoderKind::Sc => EstimatorDecoder::Sc,
        DecoderKind::Scl => EstimatorDecoder::Scl { list_size },
        DecoderKind::Dscf => {
            return Err(Error::Config(
                "flip decoding has no per-bit estimator; use simulate".into(),
            ))
        }
    };
    Ok(EstimateOptions {
        mode: mode.mode(),
        decoder,
        crc_aided,
        stop: StopRule {
            target_errors,
            max_samples,
        },
        chunk_size,
        seed,
        check_node: check_node(min_sum),
        random_payload,
        ..EstimateOptions::default()
    })
}

fn run_estimate(args: EstimateArgs) -> Result<Status> {
    let spec = read_spec(&args.spec)?;
    let channel = channel_at(args.channel, args.design_point);
    if args.exhaustive {
        if args.decoder != DecoderKind::Sc {
            return Err(Error::Config(
                "the exhaustive mode walks the SC decoder only".into(),
            ));
        }
        let report = estimate_exhaustive(&spec, &channel, args.mode.mode())?;
        let content = match args.format {
            Format::Json => to_json_lines(&report)?,
            Format::Csv => {
                let header = json!({
                    "estimator_bler": report.estimator_bler,
                    "protocol_bler": report.protocol_bler,
                    "outputs": report.outputs,
                });
                let mut out = format!("# {header}\nindex,estimate\n");
                for (i, &pos) in report.info_set.iter().enumerate() {
                    writeln!(out, "{},{}", pos, report.term_expectations[i]).unwrap();
                }
                out
            }
        };
        emit(&args.out, &content)?;
        return Ok(Status::Complete);
    }

    let options = estimate_options(
        args.mode,
        args.decoder,
        args.list_size,
        args.crc_aided,
        args.target_errors,
        args.max_samples,
        args.chunk_size,
        args.seed,
        args.min_sum,
        args.random_payload,
    )?;
    let report = estimate(&spec, &channel, &options)?;
    let content = match args.format {
        Format::Csv => profile_to_csv(&report.summary),
        Format::Json => to_json_lines(&report.summary)?,
    };
    emit(&args.out, &content)?;
    if report.converged {
        Ok(Status::Complete)
    } else {
        Ok(Status::Partial)
    }
}

fn run_flip_profile(args: FlipProfileArgs) -> Result<Status> {
    let spec = read_spec(&args.spec)?;
    let channel = channel_at(args.channel, args.design_point);
    let options = estimate_options(
        ModeKind::Practical,
        DecoderKind::Sc,
        1,
        false,
        args.target_errors,
        args.max_samples,
        args.chunk_size,
        args.seed,
        args.min_sum,
        false,
    )?;
    let report = estimate(&spec, &channel, &options)?;
    let sets: Vec<(f64, Vec<usize>)> = args
        .gammas
        .iter()
        .map(|&g| (g, flip_candidate_set(&report.summary, g)))
        .collect();
    let content = match args.format {
        Format::Csv => {
            let mut out = String::from("gamma,count,positions\n");
            for (gamma, set) in &sets {
                let positions = set
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join(";");
                writeln!(out, "{gamma},{},{positions}", set.len()).unwrap();
            }
            out
        }
        Format::Json => {
            let rows: Vec<serde_json::Value> = sets
                .iter()
                .map(|(gamma, set)| {
                    json!({ "gamma": gamma, "count": set.len(), "positions": set })
                })
                .collect();
            to_json_lines(&rows)?
        }
    };
    emit(&args.out, &content)?;
    if report.converged {
        Ok(Status::Complete)
    } else {
        Ok(Status::Partial)
    }
}

fn run_compare(args: CompareArgs) -> Result<Status> {
    let spec = read_spec(&args.spec)?;
    let channel = channel_at(args.channel, args.design_point);
    let options = estimate_options(
        args.mode,
        args.decoder,
        args.list_size,
        false,
        100,
        1_000_000,
        args.chunk_size,
        args.seed,
        args.min_sum,
        false,
    )?;
    let report =
        run_estimator_comparison(&spec, &channel, &options, &args.grid, args.runs, args.exhaustive)?;
    let content = match args.format {
        Format::Csv => comparison_to_csv(&report),
        Format::Json => to_json_lines(&report)?,
    };
    emit(&args.out, &content)?;
    Ok(Status::Complete)
}

fn run_export_bitmap(args: ExportBitmapArgs) -> Result<Status> {
    let specs = args
        .specs
        .iter()
        .map(|p| read_spec(p))
        .collect::<Result<Vec<_>>>()?;
    let n = specs
        .first()
        .map(CodeSpec::block_len)
        .ok_or_else(|| Error::Config("nothing to export".into()))?;
    let rows = match (args.rows, args.cols) {
        (Some(r), None) => r,
        (None, Some(c)) if c > 0 && n % c == 0 => n / c,
        (None, Some(c)) => {
            return Err(Error::Config(format!("{c} columns do not divide {n}")))
        }
        (Some(r), Some(c)) if r.checked_mul(c) == Some(n) => r,
        (Some(r), Some(c)) => {
            return Err(Error::Config(format!(
                "{r} x {c} does not match a block of {n}"
            )))
        }
        (None, None) => return Err(Error::Config("pass --rows or --cols".into())),
    };
    let export = export_bit_distribution(&specs, rows)?;
    let content = match args.format {
        Format::Csv => export.text.clone(),
        Format::Json => {
            let cols = n / rows;
            let matrices: Vec<serde_json::Value> = specs
                .iter()
                .map(|s| {
                    let matrix: Vec<Vec<u8>> = (0..rows)
                        .map(|r| {
                            (0..cols)
                                .map(|c| u8::from(s.is_info(c * rows + r + 1)))
                                .collect()
                        })
                        .collect();
                    json!({ "id": s.id(), "matrix": matrix })
                })
                .collect();
            to_json_lines(&json!({ "specs": matrices, "diffs": export.diffs }))?
        }
    };
    emit(&args.out, &content)?;
    Ok(Status::Complete)
}
