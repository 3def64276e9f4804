//! External tool adapters (encoders, decoders, upscalers, VMAF) driven by
//! argument templates, plus the built-in mock codec.

pub mod mock;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use wait_timeout::ChildExt;

use crate::media::VideoSpec;

pub use mock::{mock_decode, mock_decode_file, mock_encode, mock_encode_file, MockEncoded};

/// Environment variable naming the directory that relative executables are
/// resolved against.
pub const TOOL_DIR_ENV: &str = "RDBENCH_TOOL_DIR";

pub const DEFAULT_TIMEOUT_S: u64 = 24 * 60 * 60;

const LOG_TAIL_LINES: usize = 20;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("tool `{tool}`: unknown placeholder `{{{name}}}` in template")]
    UnknownPlaceholder { tool: String, name: String },
    #[error("tool `{tool}`: unbalanced brace in `{token}`")]
    BadTemplate { tool: String, token: String },
    #[error("tool `{tool}`: placeholder `{{{name}}}` has no value")]
    Unbound { tool: String, name: String },
    #[error("tool `{tool}`: cannot start `{executable}`: {source}")]
    Spawn {
        tool: String,
        executable: String,
        source: io::Error,
    },
    #[error("tool `{tool}` timed out after {seconds} s and was killed; log tail:\n{tail}")]
    Timeout { tool: String, seconds: u64, tail: String },
    #[error("tool `{tool}` exited with {status}; log {log}; last lines:\n{tail}")]
    Failed {
        tool: String,
        status: String,
        log: PathBuf,
        tail: String,
    },
    #[error("tool `{tool}` did not produce a non-empty `{path}`")]
    MissingOutput { tool: String, path: PathBuf },
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot derive a bitrate for a stream with zero frames")]
    ZeroFrames,
    #[error("VMAF output {path}: field `{field}`: {detail}")]
    VmafParse {
        path: PathBuf,
        field: String,
        detail: String,
    },
    #[error("VMAF needs equal formats, got {reference} and {distorted}")]
    ResolutionMismatch { reference: String, distorted: String },
    #[error("mock codec: {0}")]
    Mock(String),
    #[error(transparent)]
    Media(#[from] crate::media::MediaError),
}

impl CodecError {
    /// True when an external program could not run or misbehaved.
    pub fn is_tool_failure(&self) -> bool {
        matches!(
            self,
            CodecError::Spawn { .. }
                | CodecError::Timeout { .. }
                | CodecError::Failed { .. }
                | CodecError::MissingOutput { .. }
                | CodecError::VmafParse { .. }
        )
    }
}

pub type Result<T, E = CodecError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CodecError + '_ {
    move |source| CodecError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Names that may appear as `{name}` in a tool template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Placeholder {
    Input,
    Output,
    Reference,
    Qp,
    Width,
    Height,
    Fps,
    Frames,
    BitDepth,
    BaseInput,
}

impl Placeholder {
    pub const ALL: [Placeholder; 10] = [
        Placeholder::Input,
        Placeholder::Output,
        Placeholder::Reference,
        Placeholder::Qp,
        Placeholder::Width,
        Placeholder::Height,
        Placeholder::Fps,
        Placeholder::Frames,
        Placeholder::BitDepth,
        Placeholder::BaseInput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Placeholder::Input => "input",
            Placeholder::Output => "output",
            Placeholder::Reference => "reference",
            Placeholder::Qp => "qp",
            Placeholder::Width => "width",
            Placeholder::Height => "height",
            Placeholder::Fps => "fps",
            Placeholder::Frames => "frames",
            Placeholder::BitDepth => "bit_depth",
            Placeholder::BaseInput => "base_input",
        }
    }
}

impl FromStr for Placeholder {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Placeholder::ALL.into_iter().find(|p| p.name() == s).ok_or(())
    }
}

impl fmt::Display for Placeholder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Piece {
    Text(String),
    Hole(Placeholder),
}

/// One argv entry split into literal text and placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
struct Token(Vec<Piece>);

impl Token {
    fn parse(tool: &str, raw: &str) -> Result<Token> {
        let bad = || CodecError::BadTemplate {
            tool: tool.to_string(),
            token: raw.to_string(),
        };
        let mut pieces = Vec::new();
        let mut text = String::new();
        let mut chars = raw.chars().peekable();
        while let Some(c) = chars.next() {
            match c {
                '{' if chars.peek() == Some(&'{') => {
                    chars.next();
                    text.push('{');
                }
                '}' if chars.peek() == Some(&'}') => {
                    chars.next();
                    text.push('}');
                }
                '{' => {
                    let mut name = String::new();
                    loop {
                        match chars.next() {
                            Some('}') => break,
                            Some(c) => name.push(c),
                            None => return Err(bad()),
                        }
                    }
                    let hole = name.parse().map_err(|_| CodecError::UnknownPlaceholder {
                        tool: tool.to_string(),
                        name: name.clone(),
                    })?;
                    if !text.is_empty() {
                        pieces.push(Piece::Text(std::mem::take(&mut text)));
                    }
                    pieces.push(Piece::Hole(hole));
                }
                '}' => return Err(bad()),
                c => text.push(c),
            }
        }
        if !text.is_empty() || pieces.is_empty() {
            pieces.push(Piece::Text(text));
        }
        Ok(Token(pieces))
    }

    fn render(&self, tool: &str, bindings: &Bindings) -> Result<String> {
        let mut out = String::new();
        for piece in &self.0 {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Hole(p) => out.push_str(bindings.get(*p).ok_or_else(|| CodecError::Unbound {
                    tool: tool.to_string(),
                    name: p.name().to_string(),
                })?),
            }
        }
        Ok(out)
    }

    fn holes(&self) -> impl Iterator<Item = Placeholder> + '_ {
        self.0.iter().filter_map(|p| match p {
            Piece::Hole(h) => Some(*h),
            Piece::Text(_) => None,
        })
    }
}

/// Values substituted into a template. Path-valued placeholders are made
/// absolute so runs do not depend on the working directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Bindings(BTreeMap<Placeholder, String>);

impl Bindings {
    pub fn new() -> Self {
        Bindings::default()
    }

    pub fn set(mut self, key: Placeholder, value: impl ToString) -> Self {
        self.insert(key, value);
        self
    }

    pub fn insert(&mut self, key: Placeholder, value: impl ToString) {
        self.0.insert(key, value.to_string());
    }

    pub fn path(mut self, key: Placeholder, path: &Path) -> Self {
        let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
        self.0.insert(key, abs.to_string_lossy().into_owned());
        self
    }

    /// Binds width, height, fps, frame count and bit depth from a spec.
    pub fn video(mut self, spec: &VideoSpec) -> Self {
        self.insert(Placeholder::Width, spec.width);
        self.insert(Placeholder::Height, spec.height);
        let fps = if spec.fps_den == 1 {
            spec.fps_num.to_string()
        } else {
            format!("{}", spec.fps())
        };
        self.insert(Placeholder::Fps, fps);
        self.insert(Placeholder::BitDepth, spec.bit_depth);
        if let Some(n) = spec.frame_count {
            self.insert(Placeholder::Frames, n);
        }
        self
    }

    pub fn get(&self, key: Placeholder) -> Option<&str> {
        self.0.get(&key).map(String::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawTemplate {
    name: String,
    executable: String,
    #[serde(default)]
    args: String,
    #[serde(default)]
    workdir: Option<PathBuf>,
    #[serde(default = "default_timeout")]
    timeout_s: u64,
    #[serde(default)]
    expected_outputs: Vec<String>,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_S
}

/// An external program and its argument template, validated at parse time.
///
/// `args` is split like a POSIX shell command line; each resulting word may
/// contain `{placeholder}`s, and `{{` / `}}` stand for literal braces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTemplate", into = "RawTemplate")]
pub struct ToolTemplate {
    raw: RawTemplate,
    args: Vec<Token>,
    outputs: Vec<Token>,
}

impl TryFrom<RawTemplate> for ToolTemplate {
    type Error = CodecError;

    fn try_from(raw: RawTemplate) -> Result<Self> {
        let words = shlex::split(&raw.args).ok_or_else(|| CodecError::BadTemplate {
            tool: raw.name.clone(),
            token: raw.args.clone(),
        })?;
        let args = words
            .iter()
            .map(|w| Token::parse(&raw.name, w))
            .collect::<Result<Vec<_>>>()?;
        let outputs = raw
            .expected_outputs
            .iter()
            .map(|w| Token::parse(&raw.name, w))
            .collect::<Result<Vec<_>>>()?;
        Ok(ToolTemplate { raw, args, outputs })
    }
}

impl From<ToolTemplate> for RawTemplate {
    fn from(t: ToolTemplate) -> Self {
        t.raw
    }
}

impl ToolTemplate {
    pub fn new(name: &str, executable: &str, args: &str) -> Result<Self> {
        RawTemplate {
            name: name.to_string(),
            executable: executable.to_string(),
            args: args.to_string(),
            workdir: None,
            timeout_s: DEFAULT_TIMEOUT_S,
            expected_outputs: Vec::new(),
        }
        .try_into()
    }

    pub fn with_timeout(mut self, seconds: u64) -> Self {
        self.raw.timeout_s = seconds;
        self
    }

    pub fn with_workdir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.raw.workdir = Some(dir.into());
        self
    }

    pub fn with_expected_outputs(mut self, outputs: &[&str]) -> Result<Self> {
        self.raw.expected_outputs = outputs.iter().map(|s| s.to_string()).collect();
        ToolTemplate::try_from(self.raw)
    }

    pub fn name(&self) -> &str {
        &self.raw.name
    }

    pub fn executable(&self) -> &str {
        &self.raw.executable
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs(self.raw.timeout_s)
    }

    /// Placeholders referenced by the arguments or expected outputs.
    pub fn placeholders(&self) -> Vec<Placeholder> {
        let mut v: Vec<_> = self.args.iter().chain(&self.outputs).flat_map(Token::holes).collect();
        v.sort();
        v.dedup();
        v
    }

    /// Substituted argument vector (without the executable).
    pub fn render_args(&self, bindings: &Bindings) -> Result<Vec<String>> {
        self.args.iter().map(|t| t.render(self.name(), bindings)).collect()
    }

    pub fn render_outputs(&self, bindings: &Bindings) -> Result<Vec<PathBuf>> {
        self.outputs
            .iter()
            .map(|t| t.render(self.name(), bindings).map(PathBuf::from))
            .collect()
    }

    /// Absolute executable path when it can be resolved locally; bare names
    /// not found under the tool directory are left to the `PATH` search.
    pub fn resolve_executable(&self) -> PathBuf {
        let exe = Path::new(&self.raw.executable);
        if exe.is_absolute() {
            return exe.to_path_buf();
        }
        if let Some(dir) = std::env::var_os(TOOL_DIR_ENV) {
            let candidate = Path::new(&dir).join(exe);
            if candidate.exists() {
                return std::path::absolute(&candidate).unwrap_or(candidate);
            }
        }
        if exe.components().count() > 1 {
            return std::path::absolute(exe).unwrap_or_else(|_| exe.to_path_buf());
        }
        exe.to_path_buf()
    }
}

/// Record of one completed tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolRun {
    pub tool: String,
    pub argv: Vec<String>,
    pub log_path: PathBuf,
    pub wall_time_s: f64,
    pub outputs: Vec<PathBuf>,
}

fn log_tail(path: &Path, lines: usize) -> String {
    let Ok(file) = File::open(path) else {
        return String::new();
    };
    let all: Vec<String> = BufReader::new(file).lines().map_while(|l| l.ok()).collect();
    all[all.len().saturating_sub(lines)..].join("\n")
}

/// Runs a tool with its stdout and stderr captured to `log_path`.
///
/// Fails on spawn errors, timeouts (the process is killed), nonzero exit and
/// expected outputs that are missing or empty.
pub fn run_tool(template: &ToolTemplate, bindings: &Bindings, log_path: &Path) -> Result<ToolRun> {
    let tool = template.name().to_string();
    let args = template.render_args(bindings)?;
    let outputs = template.render_outputs(bindings)?;
    let exe = template.resolve_executable();
    if let Some(parent) = log_path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let log = File::create(log_path).map_err(io_err(log_path))?;
    let log_err = log.try_clone().map_err(io_err(log_path))?;
    let mut cmd = Command::new(&exe);
    cmd.args(&args).stdin(Stdio::null()).stdout(log).stderr(log_err);
    if let Some(dir) = &template.raw.workdir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        cmd.current_dir(dir);
    }
    log::debug!("{tool}: {} {}", exe.display(), shlex::try_join(args.iter().map(String::as_str)).unwrap_or_default());
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|source| CodecError::Spawn {
        tool: tool.clone(),
        executable: exe.display().to_string(),
        source,
    })?;
    let status = match child.wait_timeout(template.timeout()).map_err(io_err(log_path))? {
        Some(status) => status,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(CodecError::Timeout {
                tool,
                seconds: template.raw.timeout_s,
                tail: log_tail(log_path, LOG_TAIL_LINES),
            });
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    if !status.success() {
        return Err(CodecError::Failed {
            tool,
            status: status.to_string(),
            log: log_path.to_path_buf(),
            tail: log_tail(log_path, LOG_TAIL_LINES),
        });
    }
    let workdir = template.raw.workdir.clone();
    let outputs: Vec<PathBuf> = outputs
        .into_iter()
        .map(|p| match (&workdir, p.is_relative()) {
            (Some(dir), true) => dir.join(p),
            _ => p,
        })
        .collect();
    for p in &outputs {
        if fs::metadata(p).map(|m| m.len() == 0).unwrap_or(true) {
            return Err(CodecError::MissingOutput { tool, path: p.clone() });
        }
    }
    Ok(ToolRun {
        tool,
        argv: std::iter::once(exe.display().to_string()).chain(args).collect(),
        log_path: log_path.to_path_buf(),
        wall_time_s,
        outputs,
    })
}

/// Bitrate in Mb/s of `bytes` spread over the stream duration.
pub fn derive_bitrate(bytes: u64, spec: &VideoSpec) -> Result<f64> {
    let frames = spec.frame_count.unwrap_or(0);
    if frames == 0 {
        return Err(CodecError::ZeroFrames);
    }
    let num = bytes as u128 * 8 * spec.fps_num as u128;
    let den = spec.fps_den as u128 * frames as u128 * 1_000_000;
    Ok(num as f64 / den as f64)
}

/// A measured bitstream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodeResult {
    pub bitstream_path: PathBuf,
    pub bitstream_bytes: u64,
    pub bitrate_mbps: f64,
    pub qp: i32,
    pub wall_time_s: f64,
    /// Last lines of the tool log; empty for in-process codecs.
    #[serde(default)]
    pub tool_log: String,
}

impl EncodeResult {
    /// Measures an existing bitstream file.
    pub fn measure(path: &Path, spec: &VideoSpec, qp: i32, wall_time_s: f64, tool_log: String) -> Result<Self> {
        let bytes = fs::metadata(path).map_err(io_err(path))?.len();
        Ok(EncodeResult {
            bitstream_path: path.to_path_buf(),
            bitstream_bytes: bytes,
            bitrate_mbps: derive_bitrate(bytes, spec)?,
            qp,
            wall_time_s,
            tool_log,
        })
    }
}

/// Runs an encoder template over `input` and measures `output`.
pub fn encode_with_tool(
    template: &ToolTemplate,
    input: &Path,
    spec: &VideoSpec,
    qp: i32,
    output: &Path,
    log_path: &Path,
) -> Result<EncodeResult> {
    let bindings = Bindings::new()
        .path(Placeholder::Input, input)
        .path(Placeholder::Output, output)
        .set(Placeholder::Qp, qp)
        .video(spec);
    let run = run_tool(template, &bindings, log_path)?;
    EncodeResult::measure(output, spec, qp, run.wall_time_s, log_tail(&run.log_path, LOG_TAIL_LINES))
}

/// Pooled and per-frame VMAF scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VmafScores {
    pub pooled_mean: f64,
    pub per_frame: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VmafOutcome {
    Scores(VmafScores),
    Unavailable { reason: String },
}

/// Parses the JSON log written by libvmaf.
pub fn parse_vmaf_json(text: &str, path: &Path) -> Result<VmafScores> {
    let err = |field: &str, detail: &str| CodecError::VmafParse {
        path: path.to_path_buf(),
        field: field.to_string(),
        detail: detail.to_string(),
    };
    let v: serde_json::Value = serde_json::from_str(text).map_err(|e| err("<document>", &e.to_string()))?;
    let pooled_mean = v
        .pointer("/pooled_metrics/vmaf/mean")
        .ok_or_else(|| err("pooled_metrics.vmaf.mean", "missing"))?
        .as_f64()
        .ok_or_else(|| err("pooled_metrics.vmaf.mean", "not a number"))?;
    let frames = v
        .get("frames")
        .ok_or_else(|| err("frames", "missing"))?
        .as_array()
        .ok_or_else(|| err("frames", "not an array"))?;
    let per_frame = frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let field = format!("frames[{i}].metrics.vmaf");
            f.pointer("/metrics/vmaf")
                .ok_or_else(|| err(&field, "missing"))?
                .as_f64()
                .ok_or_else(|| err(&field, "not a number"))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VmafScores { pooled_mean, per_frame })
}

/// Runs an external VMAF tool. `{reference}` is bound to the reference video,
/// `{input}` to the distorted one and `{output}` to the JSON log it writes.
/// A missing executable yields [`VmafOutcome::Unavailable`].
pub fn run_vmaf(
    template: &ToolTemplate,
    reference: (&Path, &VideoSpec),
    distorted: (&Path, &VideoSpec),
    json_out: &Path,
    log_path: &Path,
) -> Result<VmafOutcome> {
    if !reference.1.same_format(distorted.1) {
        return Err(CodecError::ResolutionMismatch {
            reference: reference.1.to_string(),
            distorted: distorted.1.to_string(),
        });
    }
    let bindings = Bindings::new()
        .path(Placeholder::Reference, reference.0)
        .path(Placeholder::Input, distorted.0)
        .path(Placeholder::Output, json_out)
        .video(reference.1);
    match run_tool(template, &bindings, log_path) {
        Ok(_) => {}
        Err(CodecError::Spawn { source, executable, .. }) if source.kind() == io::ErrorKind::NotFound => {
            log::warn!("vmaf unavailable: `{executable}` not found");
            return Ok(VmafOutcome::Unavailable {
                reason: format!("executable `{executable}` not found"),
            });
        }
        Err(e) => return Err(e),
    }
    let text = fs::read_to_string(json_out).map_err(io_err(json_out))?;
    Ok(VmafOutcome::Scores(parse_vmaf_json(&text, json_out)?))
}
