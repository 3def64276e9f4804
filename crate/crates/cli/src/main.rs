use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use rdbench::bd::{bd_metric, bd_metric_interval, bd_rate, Interp, IntervalOutcome, RDCurve, RateInterval};
use rdbench::codec::{mock_decode_file, mock_encode_file, CodecError};
use rdbench::media::{parse_fps, Container, RawFormat, VideoReader};
use rdbench::metrics::{score_sequence, si_ti, Aggregation};
use rdbench::pipeline::{
    collect_hr_items, prepare_sr_training_pairs, sweep, CellFailure, CodecBackend, ExperimentConfig, PipelineError,
    SweepOptions,
};
use rdbench::report::{load_results, AveragePolicy, OutputFormat, ReportBundle};
use rdbench::resample::{resample_file, FilterKind};

#[derive(Parser)]
#[command(name = "rdbench", version, about = "Rate-distortion benchmarking for video delivery approaches")]
struct Cli {
    /// Print errors on stderr as one-line JSON.
    #[arg(long, global = true)]
    json_errors: bool,
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Resize a video with a Lanczos or bicubic filter.
    Resample {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Target luma size, WxH.
        #[arg(long, value_name = "WxH")]
        size: String,
        #[arg(long, default_value = "lanczos:3")]
        filter: FilterKind,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// PSNR-Y and SSIM of a test video against a reference.
    Metrics {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "mean-of-frame-psnr")]
        aggregation: Aggregation,
        /// Include per-frame scores.
        #[arg(long)]
        per_frame: bool,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// Spatial and temporal information of a video.
    Siti {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// Bjøntegaard delta between two RD curves.
    Bd {
        #[arg(long)]
        anchor: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = "psnr_y")]
        metric: String,
        /// `rate` for BD-rate (%), `metric` for the quality delta.
        #[arg(long, default_value = "rate", value_parser = ["rate", "metric"])]
        mode: String,
        #[arg(long, default_value = "pchip")]
        interp: Interp,
        /// Restrict a BD-metric to a bitrate interval such as `-30`, `30-80`, `+80` or `a:b`.
        #[arg(long, allow_hyphen_values = true)]
        interval: Option<RateInterval>,
    },
    /// Run an experiment, optionally restricted to some sequences or approaches.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        sequence: Vec<String>,
        #[arg(long)]
        approach: Vec<String>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run every cell of an experiment on a worker pool, resuming finished cells.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        /// Discard earlier results first.
        #[arg(long)]
        clean: bool,
    },
    /// Build low-resolution coded / high-resolution pairs for SR training.
    PrepareSrData {
        /// Directory of Y4M high-resolution items.
        #[arg(long)]
        hr_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = [17, 22, 27, 32, 37])]
        qps: Vec<i32>,
        /// Experiment file providing tool templates for --encoder/--decoder.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, requires = "decoder", requires = "config")]
        encoder: Option<String>,
        #[arg(long, requires = "encoder")]
        decoder: Option<String>,
        #[arg(long, default_value = "bicubic:-0.5", allow_hyphen_values = true)]
        filter: FilterKind,
    },
    /// Plot data, BD-rate matrices and interval tables from sweep results.
    Report {
        #[arg(long)]
        config: PathBuf,
        /// Directory of result JSON files; defaults to the sweep's curves directory.
        #[arg(long)]
        results: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: OutputFormat,
        /// Write one file per table here instead of printing.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "available")]
        average: AveragePolicy,
    },
    /// Encode with the built-in mock codec.
    MockEncode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        qp: i32,
        /// Also write the reconstruction.
        #[arg(long)]
        recon: Option<PathBuf>,
        #[command(flatten)]
        raw: RawArgs,
    },
    /// Decode a mock codec bitstream.
    MockDecode {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Format of headerless YUV inputs; ignored for Y4M.
#[derive(Args)]
struct RawArgs {
    #[arg(long, value_name = "WxH")]
    raw_size: Option<String>,
    #[arg(long, default_value_t = 8)]
    raw_bit_depth: u8,
    #[arg(long, default_value = "60")]
    raw_fps: String,
}

impl RawArgs {
    fn format(&self) -> anyhow::Result<Option<RawFormat>> {
        let Some(size) = &self.raw_size else { return Ok(None) };
        let (width, height) = parse_size(size)?;
        let (fps_num, fps_den) = parse_fps(&self.raw_fps).ok_or_else(|| anyhow!("bad frame rate `{}`", self.raw_fps))?;
        Ok(Some(RawFormat {
            width,
            height,
            bit_depth: self.raw_bit_depth,
            fps_num,
            fps_den,
        }))
    }

    /// Raw format for `path`, required when it is not Y4M.
    fn for_path(&self, path: &Path) -> anyhow::Result<Option<RawFormat>> {
        let f = self.format()?;
        if f.is_none() && Container::from_path(path) == Container::Raw {
            bail!("{} is raw YUV; pass --raw-size (and --raw-bit-depth, --raw-fps)", path.display());
        }
        Ok(f)
    }
}

fn parse_size(s: &str) -> anyhow::Result<(usize, usize)> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| anyhow!("size `{s}` is not WxH"))?;
    Ok((w.trim().parse().context("width")?, h.trim().parse().context("height")?))
}

/// Cells that failed during `run` or `sweep`.
#[derive(Debug)]
struct CellsFailed(Vec<CellFailure>);

impl std::fmt::Display for CellsFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} cell(s) failed:", self.0.len())?;
        for c in &self.0 {
            write!(f, "\n  {c}")?;
        }
        Ok(())
    }
}

impl std::error::Error for CellsFailed {}

fn is_tool_failure(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<CellsFailed>().is_some_and(|f| f.0.iter().any(|x| x.tool_failure))
            || c.downcast_ref::<PipelineError>().is_some_and(|p| p.is_tool_failure())
            || c.downcast_ref::<CodecError>().is_some_and(|p| p.is_tool_failure())
    })
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn read_curve(path: &Path) -> anyhow::Result<RDCurve> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // Either a bare curve or a sweep result holding one.
    let v = v.get("curve").cloned().unwrap_or(v);
    serde_json::from_value(v).with_context(|| format!("{} is not an RD curve", path.display()))
}

fn experiment_outcome(failures: Vec<CellFailure>, summary: serde_json::Value) -> anyhow::Result<()> {
    print_json(&summary)?;
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CellsFailed(failures).into())
    }
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Resample {
            input,
            output,
            size,
            filter,
            raw,
        } => {
            let dims = parse_size(&size)?;
            let raw = raw.for_path(&input)?;
            let spec = resample_file(&input, raw.as_ref(), &output, Container::from_path(&output), dims, filter)?;
            print_json(&spec)
        }
        Command::Metrics {
            reference,
            test,
            aggregation,
            per_frame,
            raw,
        } => {
            let mut r = VideoReader::open(&reference, raw.for_path(&reference)?.as_ref())?;
            let mut t = VideoReader::open(&test, raw.for_path(&test)?.as_ref())?;
            let mut score = score_sequence(r.frames(), t.frames(), aggregation)?;
            if !per_frame {
                score.per_frame.clear();
            }
            print_json(&score)
        }
        Command::Siti { input, raw } => {
            let mut r = VideoReader::open(&input, raw.for_path(&input)?.as_ref())?;
            print_json(&si_ti(r.frames())?)
        }
        Command::Bd {
            anchor,
            test,
            metric,
            mode,
            interp,
            interval,
        } => {
            let (a, t) = (read_curve(&anchor)?, read_curve(&test)?);
            match (mode.as_str(), interval) {
                ("rate", Some(_)) => bail!("--interval applies to --mode metric"),
                ("rate", None) => print_json(&bd_rate(&a, &t, &metric, interp)?),
                (_, None) => print_json(&bd_metric(&a, &t, &metric, interp)?),
                (_, Some(iv)) => match bd_metric_interval(&a, &t, &metric, iv, interp)? {
                    IntervalOutcome::Value(r) => print_json(&r),
                    IntervalOutcome::InsufficientData { reason } => {
                        print_json(&serde_json::json!({"interval": iv, "insufficient_data": reason}))
                    }
                },
            }
        }
        Command::Run {
            config,
            sequence,
            approach,
            workers,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            for s in &sequence {
                if !cfg.sequences.iter().any(|x| &x.name == s) {
                    bail!("no sequence `{s}` in {}", config.display());
                }
            }
            for a in &approach {
                if !cfg.approaches.iter().any(|x| &x.label == a) {
                    bail!("no approach `{a}` in {}", config.display());
                }
            }
            if !sequence.is_empty() {
                cfg.sequences.retain(|s| sequence.contains(&s.name));
            }
            if !approach.is_empty() {
                cfg.approaches.retain(|a| approach.contains(&a.label));
                cfg.comparisons.clear();
            }
            run_sweep(&cfg, SweepOptions { workers, clean: false })
        }
        Command::Sweep { config, workers, clean } => {
            let cfg = ExperimentConfig::load(&config)?;
            run_sweep(&cfg, SweepOptions { workers, clean })
        }
        Command::PrepareSrData {
            hr_dir,
            out,
            qps,
            config,
            encoder,
            decoder,
            filter,
        } => {
            let (codec, tools) = match (encoder, decoder, config) {
                (Some(encoder), Some(decoder), Some(config)) => {
                    let cfg = ExperimentConfig::load(&config)?;
                    let container = Container::Raw;
                    (
                        CodecBackend::Tools {
                            encoder,
                            decoder,
                            container,
                        },
                        cfg.tools,
                    )
                }
                _ => (CodecBackend::Mock, Default::default()),
            };
            let items = collect_hr_items(&hr_dir)?;
            let m = prepare_sr_training_pairs(&items, &codec, &tools, &qps, &out, filter)?;
            print_json(&serde_json::json!({
                "pairs": m.pairs.len(),
                "failures": m.failures,
                "manifest": out.join("pairs.json"),
            }))?;
            if m.pairs.is_empty() {
                bail!("no training pairs were produced");
            }
            Ok(())
        }
        Command::Report {
            config,
            results,
            format,
            out,
            average,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let dir = results.unwrap_or_else(|| cfg.output_dir.join("curves"));
            let results = load_results(&dir)?;
            let bundle = ReportBundle::build(&cfg, &results, average)?;
            match out {
                Some(out) => {
                    let files = bundle.write(&out, format)?;
                    print_json(&files)
                }
                None => {
                    print!("{}", bundle.render(format));
                    Ok(())
                }
            }
        }
        Command::MockEncode {
            input,
            output,
            qp,
            recon,
            raw,
        } => {
            let fmt = raw.for_path(&input)?;
            let recon = recon.as_ref().map(|p| (p.as_path(), Container::from_path(p)));
            let spec = mock_encode_file(&input, fmt.as_ref(), &output, recon, qp)?;
            let bytes = std::fs::metadata(&output)?.len();
            print_json(&serde_json::json!({
                "spec": spec,
                "bytes": bytes,
                "bitrate_mbps": rdbench::codec::derive_bitrate(bytes, &spec)?,
            }))
        }
        Command::MockDecode { input, output } => {
            print_json(&mock_decode_file(&input, &output, Container::from_path(&output))?)
        }
    }
}

fn run_sweep(cfg: &ExperimentConfig, opts: SweepOptions) -> anyhow::Result<()> {
    let outcome = sweep(cfg, &opts)?;
    let summary = serde_json::json!({
        "cells_total": outcome.cells_total,
        "cells_executed": outcome.cells_executed,
        "cells_resumed": outcome.cells_resumed,
        "invocations": outcome.invocations,
        "failures": outcome.failures,
        "curves": cfg.output_dir.join("curves"),
    });
    experiment_outcome(outcome.failures, summary)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        // Keep stderr machine-readable.
        0 if cli.json_errors => "off",
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let json_errors = cli.json_errors;
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let tool = is_tool_failure(&e);
            let code: u8 = if tool { 2 } else { 1 };
            if json_errors {
                let failed_cells = e
                    .chain()
                    .find_map(|c| c.downcast_ref::<CellsFailed>())
                    .map(|f| f.0.clone())
                    .unwrap_or_default();
                let v = serde_json::json!({
                    "error": format!("{e:#}"),
                    "kind": if tool { "tool" } else { "validation" },
                    "exit_code": code,
                    "failed_cells": failed_cells,
                });
                eprintln!("{v}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code)
        }
    }
}
