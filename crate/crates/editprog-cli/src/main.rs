//! Command-line pipelines over JSONL and plain-text corpora: build edit
//! programs from parallel pairs, realize programs back into text, corrupt
//! clean text into pretraining data, aggregate corpus statistics, decode
//! score matrices into pointer chains, and print latency reports.
//!
//! Records and reports go to stdout (or `--output`); per-line diagnostics
//! and the end-of-run summary go to stderr. The process exits zero only
//! when every line parsed and every built program round-tripped.

use std::fs;
use std::io::{self, BufRead, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use editprog::align::align_seqs;
use editprog::latency::{LatencyModel, ModelKind};
use editprog::metrics::{accumulate_stats, measure_pair, DatasetStats, PairStats};
use editprog::noise::{NoiseConfig, Noiser, TokenPool, DEFAULT_POOL_CAPACITY};
use editprog::pointer::{extract_permutation, sinkhorn, ExtractMethod, ScoreMatrix};
use editprog::program::EditProgram;
use editprog::realize::realize;
use editprog::token::{TokenSeq, TokenizerMode};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Lines processed per parallel batch; results are written back in input
/// order, so this is also the reorder-buffer size.
const BATCH_LINES: usize = 4096;

#[derive(Parser)]
#[command(
    name = "editprog",
    version,
    about = "Token-level edit programs: build, realize, corrupt, measure"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn {"source", "target"} JSONL pairs into edit-program JSONL.
    BuildDataset(BuildDatasetArgs),
    /// Apply edit-program JSONL back into plain text lines.
    Realize(RealizeArgs),
    /// Corrupt a plain-text corpus into pretraining programs.
    Noise(NoiseArgs),
    /// Aggregate length, insertion, and TER statistics over pairs.
    Stats(StatsArgs),
    /// Print latency estimates, break-even steps, and dataset reports.
    Latency(LatencyArgs),
    /// Decode a score-matrix file into a pointer chain.
    DecodePointer(DecodePointerArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TokenizerArg {
    /// Split on whitespace only.
    Whitespace,
    /// Split on whitespace, then detach punctuation runs.
    Punct,
}

impl TokenizerArg {
    fn mode(self) -> TokenizerMode {
        match self {
            TokenizerArg::Whitespace => TokenizerMode::Whitespace,
            TokenizerArg::Punct => TokenizerMode::WhitespacePunct,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Greedy,
    Exact,
}

impl MethodArg {
    fn method(self) -> ExtractMethod {
        match self {
            MethodArg::Greedy => ExtractMethod::Greedy,
            MethodArg::Exact => ExtractMethod::Exact,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MatrixFormat {
    /// JSON: either a bare score matrix or {"scores": ..., "tags": ...}.
    Json,
    /// Little-endian binary: u32 dimension, then row-major f32 scores.
    Binary,
}

#[derive(Args)]
struct BuildDatasetArgs {
    /// JSONL file of {"source", "target"} pairs; "-" reads stdin.
    input: PathBuf,
    /// Write program JSONL here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Punct)]
    tokenizer: TokenizerArg,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct RealizeArgs {
    /// JSONL file of edit programs; "-" reads stdin.
    input: PathBuf,
    /// Write text lines here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct NoiseArgs {
    /// Plain-text corpus, one sentence per line; "-" reads stdin.
    input: PathBuf,
    /// Write pretraining JSONL here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Seed for all corruption randomness; equal seeds give
    /// byte-identical output.
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Punct)]
    tokenizer: TokenizerArg,
    /// Chance, per token boundary, of dropping a span.
    #[arg(long, default_value_t = NoiseConfig::default().drop_prob)]
    drop_prob: f64,
    /// Chance, per token boundary, of swapping two adjacent spans.
    #[arg(long, default_value_t = NoiseConfig::default().swap_prob)]
    swap_prob: f64,
    /// Chance, per gap, of splicing in tokens from the corpus pool.
    #[arg(long, default_value_t = NoiseConfig::default().add_prob)]
    add_prob: f64,
    /// Geometric span-length parameter; mean span length is 1/span_p.
    #[arg(long, default_value_t = NoiseConfig::default().span_p)]
    span_p: f64,
    /// Reservoir size for the token pool feeding span additions.
    #[arg(long, default_value_t = DEFAULT_POOL_CAPACITY)]
    pool_capacity: usize,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct StatsArgs {
    /// JSONL file of {"source", "target"} pairs; "-" reads stdin.
    input: PathBuf,
    /// Write the JSON report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TokenizerArg::Punct)]
    tokenizer: TokenizerArg,
    /// Also write one TSV row of per-pair measurements here.
    #[arg(long)]
    tsv: Option<PathBuf>,
    /// Worker threads; 0 means one per core.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args)]
struct LatencyArgs {
    /// JSON file overriding the built-in cost constants.
    #[arg(long)]
    latency_config: Option<PathBuf>,
    /// Stats report (from `stats`) to estimate dataset latency from.
    #[arg(long)]
    stats: Option<PathBuf>,
    /// Input lengths to report at; beyond 512 values extrapolate.
    #[arg(long = "length", value_name = "TOKENS", default_values_t = vec![128.0, 512.0])]
    lengths: Vec<f64>,
    /// Decoder steps for a standalone estimate table.
    #[arg(long)]
    steps: Option<f64>,
    /// Model the speedup column is measured against.
    #[arg(long, default_value_t = ModelKind::Seq2seq12layer)]
    baseline: ModelKind,
    /// Write the JSON report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct DecodePointerArgs {
    /// Score-matrix file; "-" reads stdin.
    input: PathBuf,
    /// Write the pointer-chain JSON here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MatrixFormat::Json)]
    format: MatrixFormat,
    /// Row/column normalization rounds before extraction.
    #[arg(long, default_value_t = 20)]
    sinkhorn_iters: usize,
    /// Softmax temperature applied to the raw scores.
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, value_enum, default_value_t = MethodArg::Greedy)]
    method: MethodArg,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::BuildDataset(args) => cmd_build_dataset(args),
        Command::Realize(args) => cmd_realize(args),
        Command::Noise(args) => cmd_noise(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Latency(args) => cmd_latency(args),
        Command::DecodePointer(args) => cmd_decode_pointer(args),
    }
}

/// One {"source", "target"} input line.
#[derive(Deserialize)]
struct PairRecord {
    source: String,
    target: String,
}

/// Why a line produced no output record.
enum LineFailure {
    Error(String),
    RoundTrip(String),
}

#[derive(Default)]
struct LineReport {
    lines: usize,
    errors: usize,
    round_trip_failures: usize,
}

#[derive(Serialize)]
struct RunSummary {
    lines: usize,
    errors: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    round_trip_failures: Option<usize>,
}

fn open_input(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(io::BufReader::new(io::stdin())));
    }
    let file = fs::File::open(path).with_context(|| format!("opening input {}", path.display()))?;
    Ok(Box::new(io::BufReader::new(file)))
}

fn read_input_bytes(path: &Path) -> Result<Vec<u8>> {
    if path == Path::new("-") {
        let mut bytes = Vec::new();
        io::stdin()
            .read_to_end(&mut bytes)
            .context("reading stdin")?;
        return Ok(bytes);
    }
    fs::read(path).with_context(|| format!("reading input {}", path.display()))
}

fn open_output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    match path {
        Some(path) => {
            let file = fs::File::create(path)
                .with_context(|| format!("creating output {}", path.display()))?;
            Ok(Box::new(BufWriter::new(file)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")
}

/// Map items to output records in parallel, batch by batch, writing
/// results strictly in input order and reporting failures to stderr with
/// 1-based line numbers.
fn process_indexed<T, F>(
    items: impl Iterator<Item = io::Result<T>>,
    pool: &rayon::ThreadPool,
    output: &mut dyn Write,
    work: F,
) -> Result<LineReport>
where
    T: Send + Sync,
    F: Fn(u64, &T) -> Result<String, LineFailure> + Sync,
{
    let mut report = LineReport::default();
    let mut items = items.enumerate();
    let mut batch: Vec<(u64, T)> = Vec::with_capacity(BATCH_LINES);
    loop {
        batch.clear();
        for (index, item) in items.by_ref().take(BATCH_LINES) {
            batch.push((index as u64, item.context("reading input")?));
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<String, LineFailure>> = pool.install(|| {
            batch
                .par_iter()
                .map(|(index, item)| work(*index, item))
                .collect()
        });
        for ((index, _), result) in batch.iter().zip(results) {
            report.lines += 1;
            match result {
                Ok(record) => writeln!(output, "{record}").context("writing output")?,
                Err(LineFailure::Error(message)) => {
                    report.errors += 1;
                    eprintln!("line {}: {message}", index + 1);
                }
                Err(LineFailure::RoundTrip(message)) => {
                    report.round_trip_failures += 1;
                    eprintln!("line {}: {message}", index + 1);
                }
            }
        }
    }
    Ok(report)
}

/// Print the run summary to stderr and turn the failure counts into the
/// process exit code.
fn finish(report: LineReport, with_round_trip: bool) -> Result<ExitCode> {
    let summary = RunSummary {
        lines: report.lines,
        errors: report.errors,
        round_trip_failures: with_round_trip.then_some(report.round_trip_failures),
    };
    eprintln!("{}", serde_json::to_string(&summary)?);
    Ok(if report.errors == 0 && report.round_trip_failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn cmd_build_dataset(args: BuildDatasetArgs) -> Result<ExitCode> {
    let mode = args.tokenizer.mode();
    let pool = thread_pool(args.jobs)?;
    let input = open_input(&args.input)?;
    let mut output = open_output(&args.output)?;
    let report = process_indexed(input.lines(), &pool, &mut output, |_, line: &String| {
        let pair: PairRecord = serde_json::from_str(line)
            .map_err(|err| LineFailure::Error(format!("invalid pair record: {err}")))?;
        let source = TokenSeq::tokenize(&pair.source, mode);
        let target = TokenSeq::tokenize(&pair.target, mode);
        let program = align_seqs(&source, &target);
        let rendered = realize(&program);
        if rendered != target.joined() {
            return Err(LineFailure::RoundTrip(format!(
                "round-trip mismatch: program realizes to {rendered:?}, expected {:?}",
                target.joined()
            )));
        }
        serde_json::to_string(&program)
            .map_err(|err| LineFailure::Error(format!("serializing program: {err}")))
    })?;
    output.flush()?;
    finish(report, true)
}

fn cmd_realize(args: RealizeArgs) -> Result<ExitCode> {
    let pool = thread_pool(args.jobs)?;
    let input = open_input(&args.input)?;
    let mut output = open_output(&args.output)?;
    let report = process_indexed(input.lines(), &pool, &mut output, |_, line: &String| {
        let program: EditProgram = serde_json::from_str(line)
            .map_err(|err| LineFailure::Error(format!("invalid program: {err}")))?;
        Ok(realize(&program))
    })?;
    output.flush()?;
    finish(report, false)
}

fn cmd_noise(args: NoiseArgs) -> Result<ExitCode> {
    let mode = args.tokenizer.mode();
    let config = NoiseConfig {
        drop_prob: args.drop_prob,
        swap_prob: args.swap_prob,
        add_prob: args.add_prob,
        span_p: args.span_p,
        seed: args.seed,
    };
    let pool = thread_pool(args.jobs)?;
    // The token pool must see the whole corpus before any line is
    // corrupted, so the corpus is read up front and observed in order.
    let input = open_input(&args.input)?;
    let sentences: Vec<TokenSeq> = input
        .lines()
        .map(|line| line.map(|text| TokenSeq::tokenize(&text, mode)))
        .collect::<io::Result<_>>()
        .context("reading input")?;
    let mut reservoir = TokenPool::new(args.pool_capacity, args.seed);
    for sentence in &sentences {
        reservoir.observe_seq(sentence);
    }
    let noiser = Noiser::with_pool(config, reservoir)?;
    let mut output = open_output(&args.output)?;
    let report = process_indexed(
        sentences.into_iter().map(Ok),
        &pool,
        &mut output,
        |index, sentence: &TokenSeq| {
            let record = noiser.pretraining_record(sentence, index);
            if realize(&record.program) != record.target {
                return Err(LineFailure::RoundTrip(format!(
                    "round-trip mismatch: corrupted program does not rebuild {:?}",
                    record.target
                )));
            }
            serde_json::to_string(&record)
                .map_err(|err| LineFailure::Error(format!("serializing record: {err}")))
        },
    )?;
    output.flush()?;
    finish(report, true)
}

fn cmd_stats(args: StatsArgs) -> Result<ExitCode> {
    let mode = args.tokenizer.mode();
    let pool = thread_pool(args.jobs)?;
    let input = open_input(&args.input)?;
    let mut tsv = match &args.tsv {
        Some(path) => {
            let mut writer = BufWriter::new(
                fs::File::create(path)
                    .with_context(|| format!("creating TSV {}", path.display()))?,
            );
            writeln!(
                writer,
                "line\tsource_len\ttarget_len\tinsertion_tokens\tinsertions\tdeletions\tsubstitutions\tshifts\tter"
            )?;
            Some(writer)
        }
        None => None,
    };
    let mut errors = 0usize;
    let mut measured: Vec<PairStats> = Vec::new();
    let mut lines = input.lines().enumerate();
    let mut batch: Vec<(u64, String)> = Vec::with_capacity(BATCH_LINES);
    loop {
        batch.clear();
        for (index, line) in lines.by_ref().take(BATCH_LINES) {
            batch.push((index as u64, line.context("reading input")?));
        }
        if batch.is_empty() {
            break;
        }
        let results: Vec<Result<PairStats, String>> = pool.install(|| {
            batch
                .par_iter()
                .map(|(_, line)| {
                    let pair: PairRecord = serde_json::from_str(line)
                        .map_err(|err| format!("invalid pair record: {err}"))?;
                    measure_pair(&pair.source, &pair.target, mode).map_err(|err| err.to_string())
                })
                .collect()
        });
        for ((index, _), result) in batch.iter().zip(results) {
            match result {
                Ok(stats) => {
                    if let Some(writer) = tsv.as_mut() {
                        writeln!(
                            writer,
                            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.6}",
                            index + 1,
                            stats.source_len,
                            stats.target_len,
                            stats.insertion_tokens,
                            stats.edits.insertions,
                            stats.edits.deletions,
                            stats.edits.substitutions,
                            stats.edits.shifts,
                            stats.edits.total() as f64 / stats.target_len as f64,
                        )?;
                    }
                    measured.push(stats);
                }
                Err(message) => {
                    errors += 1;
                    eprintln!("line {}: {message}", index + 1);
                }
            }
        }
    }
    if let Some(mut writer) = tsv {
        writer.flush()?;
    }
    let lines_read = measured.len() + errors;
    let stats = accumulate_stats(measured).context("aggregating corpus statistics")?;
    let mut output = open_output(&args.output)?;
    writeln!(output, "{}", serde_json::to_string_pretty(&stats)?)?;
    output.flush()?;
    eprintln!(
        "{}",
        serde_json::to_string(&RunSummary {
            lines: lines_read,
            errors,
            round_trip_failures: None,
        })?
    );
    Ok(if errors == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

#[derive(Serialize)]
struct BreakEvenRow {
    input_length: f64,
    /// Decoder steps the editing model must save for its overhead to pay
    /// off against a same-size 1-layer decoder.
    steps: u64,
}

#[derive(Serialize)]
struct EstimateRow {
    model: ModelKind,
    input_length: f64,
    decoder_steps: f64,
    milliseconds: f64,
    decoder_encoder_ratio: f64,
    speedup_vs_baseline: f64,
}

#[derive(Serialize)]
struct DatasetLatencyReport {
    pairs: usize,
    /// Steps a full seq2seq decoder runs: the mean target length.
    seq2seq_decoder_steps: f64,
    /// Steps the editing decoder runs: the mean insertion-token count.
    editing_decoder_steps: f64,
    rows: Vec<EstimateRow>,
}

#[derive(Serialize)]
struct LatencyReport {
    baseline: ModelKind,
    break_even: Vec<BreakEvenRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    estimates: Vec<EstimateRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dataset: Option<DatasetLatencyReport>,
}

fn estimate_row(
    model: &LatencyModel,
    kind: ModelKind,
    baseline: ModelKind,
    input_length: f64,
    steps_for: impl Fn(ModelKind) -> f64,
) -> Result<EstimateRow> {
    let milliseconds = model.estimate(kind, input_length, steps_for(kind))?;
    let baseline_ms = model.estimate(baseline, input_length, steps_for(baseline))?;
    Ok(EstimateRow {
        model: kind,
        input_length,
        decoder_steps: steps_for(kind),
        milliseconds,
        decoder_encoder_ratio: model.decoder_encoder_ratio(kind, input_length, steps_for(kind))?,
        speedup_vs_baseline: baseline_ms / milliseconds,
    })
}

fn cmd_latency(args: LatencyArgs) -> Result<ExitCode> {
    let model = match &args.latency_config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading latency config {}", path.display()))?;
            LatencyModel::from_json_str(&text).context("parsing latency config")?
        }
        None => LatencyModel::default(),
    };
    for &length in &args.lengths {
        if model.extrapolates(length) {
            eprintln!(
                "warning: input length {length} is beyond the profiled range; \
                 values are linear extrapolations"
            );
        }
    }
    let break_even = args
        .lengths
        .iter()
        .map(|&length| {
            Ok(BreakEvenRow {
                input_length: length,
                steps: model.break_even_steps(length)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut estimates = Vec::new();
    if let Some(steps) = args.steps {
        for &length in &args.lengths {
            for kind in ModelKind::ALL {
                estimates.push(estimate_row(&model, kind, args.baseline, length, |_| {
                    steps
                })?);
            }
        }
    }
    let dataset = match &args.stats {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading stats report {}", path.display()))?;
            let stats: DatasetStats =
                serde_json::from_str(&text).context("parsing stats report")?;
            let steps_for = |kind: ModelKind| match kind {
                ModelKind::Editing => stats.mean_insertion_tokens,
                _ => stats.mean_target_len,
            };
            let mut rows = Vec::new();
            for &length in &args.lengths {
                for kind in ModelKind::ALL {
                    rows.push(estimate_row(
                        &model,
                        kind,
                        args.baseline,
                        length,
                        steps_for,
                    )?);
                }
            }
            Some(DatasetLatencyReport {
                pairs: stats.size,
                seq2seq_decoder_steps: stats.mean_target_len,
                editing_decoder_steps: stats.mean_insertion_tokens,
                rows,
            })
        }
        None => None,
    };
    let report = LatencyReport {
        baseline: args.baseline,
        break_even,
        estimates,
        dataset,
    };
    let mut output = open_output(&args.output)?;
    writeln!(output, "{}", serde_json::to_string_pretty(&report)?)?;
    output.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_decode_pointer(args: DecodePointerArgs) -> Result<ExitCode> {
    let matrix = match args.format {
        MatrixFormat::Json => {
            let bytes = read_input_bytes(&args.input)?;
            let text = String::from_utf8(bytes).context("score matrix is not UTF-8 JSON")?;
            ScoreMatrix::from_json_str(&text).context("parsing score matrix")?
        }
        MatrixFormat::Binary => ScoreMatrix::from_binary(&read_input_bytes(&args.input)?)
            .context("parsing score matrix")?,
    };
    let probabilities = sinkhorn(&matrix, args.sinkhorn_iters, args.temperature)
        .context("normalizing score matrix")?;
    let chain = extract_permutation(&probabilities, matrix.tags(), args.method.method())
        .context("extracting permutation")?;
    let mut output = open_output(&args.output)?;
    writeln!(output, "{}", serde_json::to_string(&chain)?)?;
    output.flush()?;
    Ok(ExitCode::SUCCESS)
}
