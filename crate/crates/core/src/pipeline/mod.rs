//! Delivery-approach experiments: simulcast, spatially scalable and
//! pre/post-processing pipelines swept over QPs, with resumable cells.
//!
//! Every pipeline measures quality of the reconstructed full-resolution video
//! against the original full-resolution source. Simulcast points are charged
//! for both the half- and full-resolution streams, scalable points for the one
//! layered stream and pre/post points for the half-resolution stream only.

mod cell;
mod sr;
mod sweep;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::{self, Read};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bd::{BdError, Interp, RDCurve, RDPoint, RateInterval};
use crate::codec::{CodecError, ToolTemplate};
use crate::media::{Container, MediaError, RawFormat};
use crate::metrics::{Aggregation, MetricsError};
use crate::resample::{FilterKind, ResampleError};

pub use cell::{run_pipeline, run_prepost, run_scalable, run_simulcast, Runner};
pub use sr::{collect_hr_items, prepare_sr_training_pairs, SrItemFailure, SrPair, SrPairsManifest};
pub use sweep::{clean_outputs, sweep, SweepOptions, SweepOutcome};

/// QPs shared by every approach.
pub const BASE_QPS: [i32; 4] = [22, 27, 32, 37];
pub const MAX_QPS: usize = 10;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("cannot parse {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{what}: expected {expected}, got {found}")]
    Geometry {
        what: String,
        expected: String,
        found: String,
    },
    #[error("{0}")]
    NonFinite(String),
    #[error("{0}")]
    Derived(String),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Media(#[from] MediaError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Bd(#[from] BdError),
}

impl PipelineError {
    /// True when an external program failed, as opposed to bad input.
    pub fn is_tool_failure(&self) -> bool {
        match self {
            PipelineError::Codec(e) => e.is_tool_failure(),
            _ => false,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(io_err(path))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub(crate) fn sha256_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("serialisable fingerprint");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Approach {
    #[serde(rename = "simulcast")]
    Simulcast,
    #[serde(rename = "scalable")]
    Scalable,
    #[serde(rename = "prepost")]
    PrePost,
}

impl Approach {
    /// The shared QPs, plus 17 for pre/post-processing and 42 for simulcast.
    pub fn default_qps(self) -> Vec<i32> {
        let mut qps = BASE_QPS.to_vec();
        match self {
            Approach::PrePost => qps.insert(0, 17),
            Approach::Simulcast => qps.push(42),
            Approach::Scalable => {}
        }
        qps
    }
}

/// How a pipeline produces bitstreams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecBackend {
    /// The in-process mock codec.
    Mock,
    /// Two mock streams (half and full resolution) concatenated into one
    /// layered bitstream; stands in for a scalable encoder.
    LayeredMock,
    /// External encoder and decoder templates, by tool name. `container` is
    /// the file format both tools read and write.
    Tools {
        encoder: String,
        decoder: String,
        #[serde(default = "raw_container")]
        container: Container,
    },
}

fn raw_container() -> Container {
    Container::Raw
}

/// Upscaler for the pre/post-processing pipeline: an internal filter such as
/// `"lanczos:3"`, or `{"tool": name}` for an external program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Upscaler {
    Resample(FilterKind),
    Tool { tool: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum MetricKind {
    #[serde(rename = "psnr_y")]
    PsnrY,
    #[serde(rename = "ssim")]
    Ssim,
    #[serde(rename = "vmaf")]
    Vmaf,
}

impl MetricKind {
    pub fn key(self) -> &'static str {
        match self {
            MetricKind::PsnrY => crate::bd::PSNR_Y,
            MetricKind::Ssim => crate::bd::SSIM,
            MetricKind::Vmaf => crate::bd::VMAF,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceConfig {
    pub name: String,
    /// Full-resolution source.
    pub source: PathBuf,
    /// Half-resolution version of the source; derived by bicubic
    /// downscaling when absent.
    #[serde(default, alias = "source_4k", skip_serializing_if = "Option::is_none")]
    pub low_res_source: Option<PathBuf>,
    /// Required when `source` is raw YUV.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<RawFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachConfig {
    pub label: String,
    #[serde(rename = "kind")]
    pub approach: Approach,
    pub codec: CodecBackend,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qps: Option<Vec<i32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upscaler: Option<Upscaler>,
}

/// A BD comparison between two approach labels, evaluated per sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Comparison {
    pub anchor: String,
    pub test: String,
    #[serde(default)]
    pub interp: Interp,
    /// Also compute BD-metric per bitrate interval.
    #[serde(default)]
    pub intervals: bool,
    /// Interval bounds such as `"-30"`, `"30-80"`, `"+80"`; defaults to those three.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_bounds: Option<Vec<String>>,
}

impl Comparison {
    pub fn rate_intervals(&self) -> Result<Vec<RateInterval>> {
        match &self.interval_bounds {
            None => Ok(RateInterval::broadcast_bands()),
            Some(v) => v.iter().map(|s| s.parse().map_err(PipelineError::from)).collect(),
        }
    }
}

fn default_metrics() -> Vec<MetricKind> {
    vec![MetricKind::PsnrY, MetricKind::Ssim]
}

fn default_output() -> PathBuf {
    PathBuf::from("rdbench-out")
}

fn default_workers() -> usize {
    1
}

fn default_downscale() -> FilterKind {
    FilterKind::DEFAULT_BICUBIC
}

/// The experiment file: sequences × approaches × QPs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub sequences: Vec<SequenceConfig>,
    #[serde(default)]
    pub tools: BTreeMap<String, ToolTemplate>,
    pub approaches: Vec<ApproachConfig>,
    #[serde(default = "default_metrics")]
    pub metrics: Vec<MetricKind>,
    /// Tool name used for VMAF; VMAF is reported unavailable without one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmaf_tool: Option<String>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default)]
    pub aggregation: Aggregation,
    /// Keep decoded and reconstructed videos after scoring.
    #[serde(default)]
    pub keep_decoded: bool,
    #[serde(default = "default_downscale")]
    pub downscale_filter: FilterKind,
    #[serde(default)]
    pub comparisons: Vec<Comparison>,
}

impl ExperimentConfig {
    /// Reads and validates an experiment file. Relative paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text).map_err(|source| PipelineError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        for s in &mut self.sequences {
            fix(&mut s.source);
            if let Some(p) = &mut s.low_res_source {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |m: String| Err(PipelineError::Config(m));
        if self.sequences.is_empty() || self.approaches.is_empty() {
            return cfg_err("at least one sequence and one approach are required".into());
        }
        if self.workers == 0 {
            return cfg_err("workers must be at least 1".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.sequences {
            if s.name.trim().is_empty() || !names.insert(&s.name) {
                return cfg_err(format!("sequence name `{}` is empty or repeated", s.name));
            }
        }
        let mut labels = BTreeSet::new();
        for a in &self.approaches {
            if a.label.trim().is_empty() || !labels.insert(&a.label) {
                return cfg_err(format!("approach label `{}` is empty or repeated", a.label));
            }
        }
        if let Some(t) = &self.vmaf_tool {
            if !self.tools.contains_key(t) {
                return cfg_err(format!("vmaf_tool `{t}` is not defined in tools"));
            }
        }
        for c in &self.comparisons {
            for l in [&c.anchor, &c.test] {
                if !labels.contains(l) {
                    return cfg_err(format!("comparison refers to unknown approach `{l}`"));
                }
            }
            c.rate_intervals()?;
        }
        for p in self.pipelines_unchecked() {
            p.validate()?;
        }
        Ok(())
    }

    fn pipelines_unchecked(&self) -> Vec<PipelineConfig> {
        let mut out = Vec::new();
        for s in &self.sequences {
            for a in &self.approaches {
                out.push(PipelineConfig {
                    sequence: s.clone(),
                    qps: a.qps.clone().unwrap_or_else(|| a.approach.default_qps()),
                    approach: a.clone(),
                    tools: self.tools.clone(),
                    metrics: self.metrics.clone(),
                    vmaf_tool: self.vmaf_tool.clone(),
                    output_dir: self.output_dir.clone(),
                    aggregation: self.aggregation,
                    keep_decoded: self.keep_decoded,
                    downscale_filter: self.downscale_filter,
                });
            }
        }
        out
    }

    /// One pipeline per (sequence, approach), in file order.
    pub fn pipelines(&self) -> Result<Vec<PipelineConfig>> {
        self.validate()?;
        Ok(self.pipelines_unchecked())
    }
}

/// One sequence run through one approach over a QP list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub sequence: SequenceConfig,
    pub approach: ApproachConfig,
    pub qps: Vec<i32>,
    pub tools: BTreeMap<String, ToolTemplate>,
    pub metrics: Vec<MetricKind>,
    pub vmaf_tool: Option<String>,
    pub output_dir: PathBuf,
    pub aggregation: Aggregation,
    pub keep_decoded: bool,
    pub downscale_filter: FilterKind,
}

impl PipelineConfig {
    /// A single-sequence pipeline with default QPs and metrics.
    pub fn new(sequence: SequenceConfig, approach: ApproachConfig, output_dir: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            qps: approach.qps.clone().unwrap_or_else(|| approach.approach.default_qps()),
            sequence,
            approach,
            tools: BTreeMap::new(),
            metrics: default_metrics(),
            vmaf_tool: None,
            output_dir: output_dir.into(),
            aggregation: Aggregation::default(),
            keep_decoded: false,
            downscale_filter: default_downscale(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let who = format!("{}/{}", self.sequence.name, self.approach.label);
        let err = |m: String| Err(PipelineError::Config(format!("{who}: {m}")));
        if self.qps.is_empty() || self.qps.len() > MAX_QPS {
            return err(format!("qp list must have 1 to {MAX_QPS} entries"));
        }
        let mut seen = BTreeSet::new();
        for &qp in &self.qps {
            if !(0..=51).contains(&qp) || !seen.insert(qp) {
                return err(format!("qp {qp} is out of [0, 51] or repeated"));
            }
        }
        if self.metrics.is_empty() {
            return err("no metrics requested".into());
        }
        self.downscale_filter.validate()?;
        let need_tool = |name: &str| -> Result<()> {
            if self.tools.contains_key(name) {
                Ok(())
            } else {
                err(format!("tool `{name}` is not defined"))
            }
        };
        match (&self.approach.codec, self.approach.approach) {
            (CodecBackend::LayeredMock, Approach::Scalable) | (CodecBackend::Mock, Approach::Simulcast | Approach::PrePost) => {}
            (CodecBackend::Tools { encoder, decoder, .. }, _) => {
                need_tool(encoder)?;
                need_tool(decoder)?;
            }
            (CodecBackend::Mock, Approach::Scalable) => {
                return err("scalable approach needs a layered encoder (layered_mock or tools)".into())
            }
            (CodecBackend::LayeredMock, _) => return err("layered_mock only applies to the scalable approach".into()),
        }
        match (&self.approach.upscaler, self.approach.approach) {
            (None, Approach::PrePost) => return err("prepost approach needs an upscaler".into()),
            (Some(_), Approach::Simulcast | Approach::Scalable) => {
                return err("an upscaler only applies to the prepost approach".into())
            }
            (Some(Upscaler::Tool { tool }), _) => need_tool(tool)?,
            (Some(Upscaler::Resample(f)), _) => f.validate()?,
            (None, _) => {}
        }
        Ok(())
    }

    pub(crate) fn tool(&self, name: &str) -> Result<&ToolTemplate> {
        self.tools
            .get(name)
            .ok_or_else(|| PipelineError::Config(format!("tool `{name}` is not defined")))
    }

    /// Hash of everything that determines this pipeline's outputs.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct Fingerprint<'a> {
            sequence: &'a SequenceConfig,
            approach: &'a ApproachConfig,
            qps: &'a [i32],
            tools: BTreeMap<&'a str, &'a ToolTemplate>,
            metrics: &'a [MetricKind],
            vmaf_tool: &'a Option<String>,
            aggregation: Aggregation,
            downscale_filter: FilterKind,
        }
        let tools = self.referenced_tools().into_iter().filter_map(|n| self.tools.get_key_value(n)).map(|(k, v)| (k.as_str(), v)).collect();
        sha256_json(&Fingerprint {
            sequence: &self.sequence,
            approach: &self.approach,
            qps: &self.qps,
            tools,
            metrics: &self.metrics,
            vmaf_tool: &self.vmaf_tool,
            aggregation: self.aggregation,
            downscale_filter: self.downscale_filter,
        })
    }

    pub(crate) fn referenced_tools(&self) -> Vec<&str> {
        let mut v = Vec::new();
        if let CodecBackend::Tools { encoder, decoder, .. } = &self.approach.codec {
            v.push(encoder.as_str());
            v.push(decoder.as_str());
        }
        if let Some(Upscaler::Tool { tool }) = &self.approach.upscaler {
            v.push(tool.as_str());
        }
        if self.metrics.contains(&MetricKind::Vmaf) {
            if let Some(t) = &self.vmaf_tool {
                v.push(t.as_str());
            }
        }
        v
    }
}

/// A bitstream charged to an RD point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamRecord {
    /// `low_res`, `full_res` or `layered`.
    pub role: String,
    /// Relative to the output directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
    pub frames: usize,
    pub bitrate_mbps: f64,
}

/// A supporting file (derived source, kept reconstruction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

/// Quality of the decoded half-resolution stream against its own source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowResQuality {
    #[serde(with = "crate::serde_util")]
    pub psnr_y: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VmafStatus {
    NotRequested,
    Unavailable { reason: String },
    Scored { pooled_mean: f64 },
}

/// Everything measured for one QP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub qp: i32,
    pub point: RDPoint,
    pub streams: Vec<StreamRecord>,
    pub artifacts: Vec<ArtifactRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low_res_quality: Option<LowResQuality>,
    pub vmaf: VmafStatus,
    /// Tool name to the version line found in its log, when any.
    #[serde(default)]
    pub tool_versions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub sequence: String,
    pub label: String,
    pub qp: i32,
    pub tool_failure: bool,
    pub message: String,
}

impl std::fmt::Display for CellFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{} qp {}: {}", self.sequence, self.label, self.qp, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub source: PathBuf,
    pub tool_versions: BTreeMap<String, String>,
}

/// RD curve of one (sequence, approach) pair and the cells behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub sequence: String,
    pub label: String,
    pub approach: Approach,
    pub curve: RDCurve,
    pub cells: Vec<CellRecord>,
    pub failures: Vec<CellFailure>,
    pub provenance: Provenance,
}

impl ExperimentResult {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }

    /// Stable pretty JSON.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("serialisable result");
        s.push('\n');
        s
    }
}
