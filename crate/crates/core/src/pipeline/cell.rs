use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, OnceLock};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{
    io_err, sha256_file, sha256_json, Approach, ArtifactRecord, CellFailure, CellRecord, CodecBackend, ExperimentResult,
    LowResQuality, MetricKind, PipelineConfig, PipelineError, Provenance, Result, StreamRecord, Upscaler, VmafStatus,
};
use crate::bd::{RDCurve, RDPoint, VMAF};
use crate::codec::{self, derive_bitrate, encode_with_tool, run_tool, run_vmaf, Bindings, Placeholder, VmafOutcome};
use crate::media::{Container, RawFormat, VideoReader, VideoSpec, VideoWriter};
use crate::metrics::{score_sequence, SequenceScore};
use crate::resample::resample_file;

const MOCK_VERSION: &str = "rdbench mock codec 1";

/// A video file and its format.
#[derive(Debug, Clone)]
pub(crate) struct Video {
    pub path: PathBuf,
    pub spec: VideoSpec,
    pub container: Container,
}

impl Video {
    pub fn probe(path: &Path, raw: Option<&RawFormat>) -> Result<Video> {
        let r = VideoReader::open(path, raw)?;
        Ok(Video {
            path: path.to_path_buf(),
            spec: *r.spec(),
            container: r.container(),
        })
    }

    pub fn raw(&self) -> Option<RawFormat> {
        (self.container == Container::Raw).then(|| self.spec.raw_format())
    }

    pub fn reader(&self) -> Result<VideoReader> {
        Ok(VideoReader::open(&self.path, self.raw().as_ref())?)
    }

    fn geometry(&self) -> String {
        format!("{}x{} {}-bit", self.spec.width, self.spec.height, self.spec.bit_depth)
    }

    fn check_geometry(&self, expected: &Video, what: &str) -> Result<()> {
        if self.geometry() != expected.geometry() {
            return Err(PipelineError::Geometry {
                what: what.to_string(),
                expected: expected.geometry(),
                found: self.geometry(),
            });
        }
        Ok(())
    }
}

fn extension(c: Container) -> &'static str {
    match c {
        Container::Raw => "yuv",
        Container::Y4m => "y4m",
    }
}

/// Path-safe version of a sequence or approach name.
pub(crate) fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Identity of an input file that changes when the file is replaced.
fn file_identity(path: &Path) -> Result<String> {
    let meta = fs::metadata(path).map_err(io_err(path))?;
    let mtime = meta
        .modified()
        .ok()
        .and_then(|t| t.duration_since(std::time::UNIX_EPOCH).ok())
        .map_or(0, |d| d.as_nanos());
    Ok(format!("{}|{}|{}", path.display(), meta.len(), mtime))
}

#[derive(Serialize, Deserialize)]
struct DerivedSidecar {
    fingerprint: String,
    sha256: String,
}

type DerivedSlot = Arc<OnceLock<std::result::Result<String, String>>>;

/// Shared state for a set of cells writing under one output directory:
/// derived-file cache, file hash memo and an invocation counter.
pub struct Runner {
    output_dir: PathBuf,
    invocations: AtomicUsize,
    derived: Mutex<HashMap<PathBuf, DerivedSlot>>,
    hashes: Mutex<HashMap<PathBuf, String>>,
}

impl Runner {
    pub fn new(output_dir: impl Into<PathBuf>) -> Self {
        Runner {
            output_dir: output_dir.into(),
            invocations: AtomicUsize::new(0),
            derived: Mutex::new(HashMap::new()),
            hashes: Mutex::new(HashMap::new()),
        }
    }

    pub fn output_dir(&self) -> &Path {
        &self.output_dir
    }

    /// Encoder, decoder, upscaler and VMAF runs performed so far.
    pub fn invocations(&self) -> usize {
        self.invocations.load(Ordering::SeqCst)
    }

    fn invoke(&self) {
        self.invocations.fetch_add(1, Ordering::SeqCst);
    }

    fn relative(&self, p: &Path) -> PathBuf {
        p.strip_prefix(&self.output_dir).unwrap_or(p).to_path_buf()
    }

    fn file_sha(&self, path: &Path) -> Result<String> {
        if let Some(h) = self.hashes.lock().unwrap().get(path) {
            return Ok(h.clone());
        }
        let h = sha256_file(path)?;
        self.hashes.lock().unwrap().insert(path.to_path_buf(), h.clone());
        Ok(h)
    }

    /// Builds `target` at most once per runner, and reuses a file left by an
    /// earlier run when its sidecar fingerprint and content hash match.
    /// Returns the content hash.
    fn derived(&self, target: &Path, fingerprint: &str, make: impl FnOnce(&Path) -> Result<()>) -> Result<String> {
        let slot = self.derived.lock().unwrap().entry(target.to_path_buf()).or_default().clone();
        slot.get_or_init(|| self.derive_now(target, fingerprint, make).map_err(|e| e.to_string()))
            .clone()
            .map_err(PipelineError::Derived)
    }

    fn derive_now(&self, target: &Path, fingerprint: &str, make: impl FnOnce(&Path) -> Result<()>) -> Result<String> {
        let sidecar = PathBuf::from(format!("{}.json", target.display()));
        if let Ok(text) = fs::read_to_string(&sidecar) {
            if let Ok(s) = serde_json::from_str::<DerivedSidecar>(&text) {
                if s.fingerprint == fingerprint && target.exists() && self.file_sha(target)? == s.sha256 {
                    return Ok(s.sha256);
                }
            }
        }
        let parent = target.parent().unwrap_or(Path::new("."));
        fs::create_dir_all(parent).map_err(io_err(parent))?;
        let tmp = PathBuf::from(format!("{}.partial", target.display()));
        make(&tmp)?;
        fs::rename(&tmp, target).map_err(io_err(target))?;
        self.hashes.lock().unwrap().remove(target);
        let sha256 = self.file_sha(target)?;
        let side = DerivedSidecar {
            fingerprint: fingerprint.to_string(),
            sha256: sha256.clone(),
        };
        fs::write(&sidecar, serde_json::to_string_pretty(&side).unwrap()).map_err(io_err(&sidecar))?;
        Ok(sha256)
    }

    pub(crate) fn cell_dir(&self, cfg: &PipelineConfig, qp: i32) -> PathBuf {
        self.output_dir
            .join("cells")
            .join(slug(&cfg.sequence.name))
            .join(slug(&cfg.approach.label))
            .join(format!("qp{qp:02}"))
    }
}

fn sniff_version(log: &Path) -> Option<String> {
    let text = fs::read_to_string(log).ok()?;
    let line = text.lines().find(|l| l.to_ascii_lowercase().contains("version"))?;
    Some(line.trim().chars().take(200).collect())
}

/// Per-cell manifest stored as `cell.json`.
#[derive(Serialize, Deserialize)]
struct CellManifest {
    fingerprint: String,
    sequence: String,
    label: String,
    record: CellRecord,
    wall_time_s: f64,
}

struct Cell<'a> {
    runner: &'a Runner,
    cfg: &'a PipelineConfig,
    qp: i32,
    dir: PathBuf,
    versions: BTreeMap<String, String>,
    artifacts: Vec<ArtifactRecord>,
    scratch: Vec<(String, PathBuf)>,
}

impl Cell<'_> {
    fn source(&self) -> Result<Video> {
        Video::probe(&self.cfg.sequence.source, self.cfg.sequence.raw.as_ref())
    }

    fn cache_dir(&self) -> PathBuf {
        self.runner.output_dir.join("cache").join(slug(&self.cfg.sequence.name))
    }

    /// The half-resolution source, given or derived once by downscaling.
    fn low_res(&mut self, full: &Video) -> Result<Video> {
        let target = full.spec.resized(full.spec.width / 2, full.spec.height / 2)?;
        if let Some(path) = &self.cfg.sequence.low_res_source {
            let raw = self.cfg.sequence.raw.map(|_| target.raw_format());
            let low = Video::probe(path, raw.as_ref())?;
            let expected = Video {
                path: path.clone(),
                spec: target,
                container: low.container,
            };
            low.check_geometry(&expected, "half-resolution source")?;
            return Ok(low);
        }
        let filter = self.cfg.downscale_filter;
        let path = self.cache_dir().join(format!("half_{}.y4m", slug(&filter.to_string())));
        let fingerprint = sha256_json(&(file_identity(&full.path)?, filter, "half"));
        let sha256 = self.runner.derived(&path, &fingerprint, |tmp| {
            log::info!("downscaling {} with {filter}", full.path.display());
            resample_file(&full.path, full.raw().as_ref(), tmp, Container::Y4m, (target.width, target.height), filter)?;
            Ok(())
        })?;
        self.artifacts.push(ArtifactRecord {
            role: "low_res_source".into(),
            path: self.runner.relative(&path),
            sha256,
        });
        Video::probe(&path, None)
    }

    /// `v` in the requested container, converting once into the cache.
    fn in_container(&mut self, v: &Video, container: Container) -> Result<Video> {
        if v.container == container {
            return Ok(v.clone());
        }
        let stem = v.path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let path = self.cache_dir().join(format!("{stem}.{}", extension(container)));
        let fingerprint = sha256_json(&(file_identity(&v.path)?, container));
        let sha256 = self.runner.derived(&path, &fingerprint, |tmp| {
            let mut r = v.reader()?;
            let mut w = VideoWriter::create(tmp, v.spec, container)?;
            for f in r.frames() {
                w.write_frame(&f?)?;
            }
            w.finish()?;
            Ok(())
        })?;
        self.artifacts.push(ArtifactRecord {
            role: format!("{}_copy", extension(container)),
            path: self.runner.relative(&path),
            sha256,
        });
        Ok(Video {
            path,
            spec: v.spec,
            container,
        })
    }

    fn stream_record(&self, role: &str, path: &Path, spec: &VideoSpec) -> Result<StreamRecord> {
        let bytes = fs::metadata(path).map_err(io_err(path))?.len();
        Ok(StreamRecord {
            role: role.to_string(),
            path: self.runner.relative(path),
            bytes,
            sha256: sha256_file(path)?,
            frames: spec.frame_count.unwrap_or(0),
            bitrate_mbps: derive_bitrate(bytes, spec)?,
        })
    }

    fn log_path(&self, name: &str) -> PathBuf {
        self.dir.join("logs").join(format!("{name}.log"))
    }

    fn note_version(&mut self, tool: &str, log: &Path) {
        if let Some(v) = sniff_version(log) {
            self.versions.insert(tool.to_string(), v);
        }
    }

    /// Encodes and decodes `input`, returning the stream record and the
    /// decoded video.
    fn code(&mut self, input: &Video, role: &str) -> Result<(StreamRecord, Video)> {
        match &self.cfg.approach.codec {
            CodecBackend::Mock | CodecBackend::LayeredMock => {
                let bs = self.dir.join(format!("{role}.bin"));
                let dec = self.dir.join(format!("{role}_decoded.y4m"));
                self.runner.invoke();
                let spec =
                    codec::mock_encode_file(&input.path, input.raw().as_ref(), &bs, Some((&dec, Container::Y4m)), self.qp)?;
                self.versions.insert("mock".into(), MOCK_VERSION.into());
                self.scratch.push((format!("{role}_decoded"), dec.clone()));
                Ok((self.stream_record(role, &bs, &spec)?, Video::probe(&dec, None)?))
            }
            CodecBackend::Tools {
                encoder,
                decoder,
                container,
            } => {
                let src = self.in_container(input, *container)?;
                let bs = self.dir.join(format!("{role}.bit"));
                let dec = self.dir.join(format!("{role}_decoded.{}", extension(*container)));
                let log = self.log_path(&format!("{role}_encode"));
                self.runner.invoke();
                encode_with_tool(self.cfg.tool(encoder)?, &src.path, &src.spec, self.qp, &bs, &log)?;
                self.note_version(encoder, &log);
                let log = self.log_path(&format!("{role}_decode"));
                let bindings = Bindings::new()
                    .path(Placeholder::Input, &bs)
                    .path(Placeholder::Output, &dec)
                    .set(Placeholder::Qp, self.qp)
                    .video(&src.spec);
                self.runner.invoke();
                run_tool(self.cfg.tool(decoder)?, &bindings, &log)?;
                self.note_version(decoder, &log);
                self.scratch.push((format!("{role}_decoded"), dec.clone()));
                let decoded = Video::probe(&dec, Some(&src.spec.raw_format()))?;
                decoded.check_geometry(&src, &format!("decoded {role} stream"))?;
                Ok((self.stream_record(role, &bs, &src.spec)?, decoded))
            }
        }
    }

    fn score(&self, reference: &Video, test: &Video) -> Result<SequenceScore> {
        test.check_geometry(reference, "reconstructed video")?;
        let mut r = reference.reader()?;
        let mut t = test.reader()?;
        Ok(score_sequence(r.frames(), t.frames(), self.cfg.aggregation)?)
    }

    fn low_res_quality(&self, reference: &Video, test: &Video) -> Result<LowResQuality> {
        let s = self.score(reference, test)?;
        Ok(LowResQuality {
            psnr_y: s.psnr_y_mean(),
            ssim: s.ssim_mean(),
        })
    }

    /// Full-resolution quality of a reconstruction against the original.
    fn measure(&mut self, reference: &Video, test: &Video) -> Result<(BTreeMap<String, f64>, VmafStatus)> {
        let scores = self.score(reference, test)?;
        let mut metrics = BTreeMap::new();
        let mut vmaf = VmafStatus::NotRequested;
        for &m in &self.cfg.metrics {
            match m {
                MetricKind::PsnrY => {
                    metrics.insert(m.key().to_string(), scores.psnr_y_mean());
                }
                MetricKind::Ssim => {
                    metrics.insert(m.key().to_string(), scores.ssim_mean());
                }
                MetricKind::Vmaf => vmaf = self.vmaf(reference, test)?,
            }
        }
        if let VmafStatus::Scored { pooled_mean } = vmaf {
            metrics.insert(VMAF.to_string(), pooled_mean);
        }
        if let Some((k, v)) = metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(PipelineError::NonFinite(format!(
                "{k} is {v} at qp {}; a lossless point cannot be placed on an RD curve",
                self.qp
            )));
        }
        Ok((metrics, vmaf))
    }

    fn vmaf(&mut self, reference: &Video, test: &Video) -> Result<VmafStatus> {
        let Some(name) = self.cfg.vmaf_tool.clone() else {
            return Ok(VmafStatus::Unavailable {
                reason: "no vmaf tool configured".into(),
            });
        };
        let log = self.log_path("vmaf");
        self.runner.invoke();
        let out = run_vmaf(
            self.cfg.tool(&name)?,
            (&reference.path, &reference.spec),
            (&test.path, &test.spec),
            &self.dir.join("vmaf.json"),
            &log,
        )?;
        self.note_version(&name, &log);
        Ok(match out {
            VmafOutcome::Scores(s) => VmafStatus::Scored {
                pooled_mean: s.pooled_mean,
            },
            VmafOutcome::Unavailable { reason } => VmafStatus::Unavailable { reason },
        })
    }

    fn upscale(&mut self, low: &Video, full: &Video) -> Result<Video> {
        let upscaler = self.cfg.approach.upscaler.clone();
        let rec = match upscaler {
            Some(Upscaler::Resample(filter)) => {
                let out = self.dir.join("reconstructed.y4m");
                self.runner.invoke();
                resample_file(&low.path, low.raw().as_ref(), &out, Container::Y4m, (full.spec.width, full.spec.height), filter)?;
                self.scratch.push(("reconstructed".into(), out.clone()));
                Video::probe(&out, None)?
            }
            Some(Upscaler::Tool { tool }) => {
                let out = self.dir.join(format!("reconstructed.{}", extension(low.container)));
                let log = self.log_path("upscale");
                let bindings = Bindings::new()
                    .path(Placeholder::Input, &low.path)
                    .path(Placeholder::Output, &out)
                    .set(Placeholder::Qp, self.qp)
                    .video(&full.spec);
                self.runner.invoke();
                run_tool(self.cfg.tool(&tool)?, &bindings, &log)?;
                self.note_version(&tool, &log);
                self.scratch.push(("reconstructed".into(), out.clone()));
                Video::probe(&out, Some(&full.spec.raw_format()))?
            }
            None => return Err(PipelineError::Config("prepost approach needs an upscaler".into())),
        };
        rec.check_geometry(full, "upscaled reconstruction")?;
        Ok(rec)
    }

    fn execute(&mut self) -> Result<CellRecord> {
        let full = self.source()?;
        let (streams, point_rate, low_q, (metrics, vmaf)) = match self.cfg.approach.approach {
            Approach::Simulcast => {
                let low = self.low_res(&full)?;
                let (s_low, d_low) = self.code(&low, "low_res")?;
                let low_q = self.low_res_quality(&low, &d_low)?;
                let (s_full, d_full) = self.code(&full, "full_res")?;
                let m = self.measure(&full, &d_full)?;
                let rate = s_low.bitrate_mbps + s_full.bitrate_mbps;
                (vec![s_low, s_full], rate, Some(low_q), m)
            }
            Approach::Scalable => self.scalable(&full)?,
            Approach::PrePost => {
                let low = self.low_res(&full)?;
                let (s_low, d_low) = self.code(&low, "low_res")?;
                let low_q = self.low_res_quality(&low, &d_low)?;
                let rec = self.upscale(&d_low, &full)?;
                let m = self.measure(&full, &rec)?;
                let rate = s_low.bitrate_mbps;
                (vec![s_low], rate, Some(low_q), m)
            }
        };
        let mut point = RDPoint::new(point_rate, Some(self.qp));
        point.metrics = metrics;
        Ok(CellRecord {
            qp: self.qp,
            point,
            streams,
            artifacts: std::mem::take(&mut self.artifacts),
            low_res_quality: low_q,
            vmaf,
            tool_versions: std::mem::take(&mut self.versions),
        })
    }

    #[allow(clippy::type_complexity)]
    fn scalable(
        &mut self,
        full: &Video,
    ) -> Result<(Vec<StreamRecord>, f64, Option<LowResQuality>, (BTreeMap<String, f64>, VmafStatus))> {
        match self.cfg.approach.codec.clone() {
            CodecBackend::LayeredMock => {
                let low = self.low_res(full)?;
                let (s_base, d_base) = self.code(&low, "base")?;
                let low_q = self.low_res_quality(&low, &d_base)?;
                let (s_enh, d_enh) = self.code(full, "enhancement")?;
                let layered = self.dir.join("layered.bin");
                let mut bytes = Vec::new();
                for s in [&s_base, &s_enh] {
                    let p = self.runner.output_dir.join(&s.path);
                    bytes.extend(fs::read(&p).map_err(io_err(&p))?);
                    fs::remove_file(&p).map_err(io_err(&p))?;
                }
                fs::write(&layered, &bytes).map_err(io_err(&layered))?;
                let stream = self.stream_record("layered", &layered, &full.spec)?;
                let m = self.measure(full, &d_enh)?;
                let rate = stream.bitrate_mbps;
                Ok((vec![stream], rate, Some(low_q), m))
            }
            CodecBackend::Tools {
                encoder,
                decoder,
                container,
            } => {
                let src = self.in_container(full, container)?;
                // Scalable encoders take the base layer as a second input.
                let low = self.low_res(full)?;
                let base = self.in_container(&low, container)?;
                let bs = self.dir.join("layered.bit");
                let el = self.dir.join(format!("enhancement_decoded.{}", extension(container)));
                let log = self.log_path("layered_encode");
                let bindings = Bindings::new()
                    .path(Placeholder::Input, &src.path)
                    .path(Placeholder::BaseInput, &base.path)
                    .path(Placeholder::Output, &bs)
                    .set(Placeholder::Qp, self.qp)
                    .video(&src.spec);
                self.runner.invoke();
                run_tool(self.cfg.tool(&encoder)?, &bindings, &log)?;
                self.note_version(&encoder, &log);
                let log = self.log_path("enhancement_decode");
                let bindings = Bindings::new()
                    .path(Placeholder::Input, &bs)
                    .path(Placeholder::Output, &el)
                    .set(Placeholder::Qp, self.qp)
                    .video(&src.spec);
                self.runner.invoke();
                run_tool(self.cfg.tool(&decoder)?, &bindings, &log)?;
                self.note_version(&decoder, &log);
                self.scratch.push(("enhancement_decoded".into(), el.clone()));
                let decoded = Video::probe(&el, Some(&src.spec.raw_format()))?;
                decoded.check_geometry(full, "decoded enhancement layer")?;
                let stream = self.stream_record("layered", &bs, &src.spec)?;
                let m = self.measure(full, &decoded)?;
                let rate = stream.bitrate_mbps;
                Ok((vec![stream], rate, None, m))
            }
            CodecBackend::Mock => Err(PipelineError::Config("scalable approach needs a layered encoder".into())),
        }
    }

    /// Deletes decoded videos, or records them as artifacts when kept.
    fn finish_scratch(&mut self, record: Option<&mut CellRecord>) -> Result<()> {
        let scratch = std::mem::take(&mut self.scratch);
        match (self.cfg.keep_decoded, record) {
            (true, Some(rec)) => {
                for (role, p) in scratch {
                    if p.exists() {
                        rec.artifacts.push(ArtifactRecord {
                            role,
                            path: self.runner.relative(&p),
                            sha256: sha256_file(&p)?,
                        });
                    }
                }
            }
            (false, Some(_)) => {
                for (_, p) in scratch {
                    let _ = fs::remove_file(&p);
                }
            }
            (_, None) => {}
        }
        Ok(())
    }
}

fn cell_fingerprint(cfg: &PipelineConfig, qp: i32) -> Result<String> {
    let mut single = cfg.clone();
    single.qps = vec![qp];
    single.approach.qps = None;
    let mut inputs = vec![file_identity(&cfg.sequence.source)?];
    if let Some(p) = &cfg.sequence.low_res_source {
        inputs.push(file_identity(p)?);
    }
    Ok(sha256_json(&(single.config_hash(), inputs)))
}

fn try_resume(runner: &Runner, manifest: &Path, fingerprint: &str) -> Option<CellRecord> {
    let text = fs::read_to_string(manifest).ok()?;
    let m: CellManifest = serde_json::from_str(&text).ok()?;
    if m.fingerprint != fingerprint {
        return None;
    }
    let files = m
        .record
        .streams
        .iter()
        .map(|s| (&s.path, &s.sha256))
        .chain(m.record.artifacts.iter().map(|a| (&a.path, &a.sha256)));
    for (path, sha) in files {
        let full = runner.output_dir.join(path);
        if !full.exists() || runner.file_sha(&full).ok()? != *sha {
            return None;
        }
    }
    Some(m.record)
}

/// Runs one QP of a pipeline, or reuses a matching earlier result. The flag
/// is true when the cell was resumed.
pub(crate) fn run_cell(runner: &Runner, cfg: &PipelineConfig, qp: i32) -> Result<(CellRecord, bool)> {
    let dir = runner.cell_dir(cfg, qp);
    let manifest = dir.join("cell.json");
    let fingerprint = cell_fingerprint(cfg, qp)?;
    if let Some(rec) = try_resume(runner, &manifest, &fingerprint) {
        log::info!("{}/{} qp {qp}: up to date", cfg.sequence.name, cfg.approach.label);
        return Ok((rec, true));
    }
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
    }
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let start = Instant::now();
    let mut cell = Cell {
        runner,
        cfg,
        qp,
        dir,
        versions: BTreeMap::new(),
        artifacts: Vec::new(),
        scratch: Vec::new(),
    };
    let mut record = cell.execute()?;
    cell.finish_scratch(Some(&mut record))?;
    let m = CellManifest {
        fingerprint,
        sequence: cfg.sequence.name.clone(),
        label: cfg.approach.label.clone(),
        record,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&m).expect("serialisable manifest");
    fs::write(&manifest, text).map_err(io_err(&manifest))?;
    log::info!(
        "{}/{} qp {qp}: {:.4} Mb/s in {:.1} s",
        cfg.sequence.name,
        cfg.approach.label,
        m.record.point.bitrate_mbps,
        m.wall_time_s
    );
    Ok((m.record, false))
}

pub(crate) fn failure(cfg: &PipelineConfig, qp: i32, e: &PipelineError) -> CellFailure {
    CellFailure {
        sequence: cfg.sequence.name.clone(),
        label: cfg.approach.label.clone(),
        qp,
        tool_failure: e.is_tool_failure(),
        message: e.to_string(),
    }
}

/// Builds the curve and provenance from per-QP outcomes (in QP order).
pub(crate) fn assemble(cfg: &PipelineConfig, outcomes: Vec<(i32, Result<CellRecord>)>) -> Result<ExperimentResult> {
    let mut cells: Vec<CellRecord> = Vec::new();
    let mut failures = Vec::new();
    for (qp, r) in outcomes {
        let r = r.and_then(|c| {
            let rate = c.point.bitrate_mbps;
            if !(rate.is_finite() && rate > 0.0) {
                return Err(PipelineError::Derived(format!("bitrate {rate} Mb/s is not positive")));
            }
            match cells.iter().find(|o| o.point.bitrate_mbps == rate) {
                Some(o) => Err(PipelineError::Derived(format!(
                    "bitrate {rate} Mb/s equals that of qp {}; the point is dropped",
                    o.qp
                ))),
                None => Ok(c),
            }
        });
        match r {
            Ok(c) => cells.push(c),
            Err(e) => {
                log::error!("{}/{} qp {qp}: {e}", cfg.sequence.name, cfg.approach.label);
                failures.push(failure(cfg, qp, &e));
            }
        }
    }
    let curve = RDCurve::new(cfg.approach.label.clone(), cells.iter().map(|c| c.point.clone()).collect())?;
    let tool_versions = cells.iter().flat_map(|c| c.tool_versions.clone()).collect();
    Ok(ExperimentResult {
        sequence: cfg.sequence.name.clone(),
        label: cfg.approach.label.clone(),
        approach: cfg.approach.approach,
        curve,
        cells,
        failures,
        provenance: Provenance {
            config_hash: cfg.config_hash(),
            source: cfg.sequence.source.clone(),
            tool_versions,
        },
    })
}

/// Runs every QP of one pipeline in order. Failed QPs are listed in the
/// result; the curve holds the points that succeeded.
pub fn run_pipeline(runner: &Runner, cfg: &PipelineConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let outcomes = cfg
        .qps
        .iter()
        .map(|&qp| (qp, run_cell(runner, cfg, qp).map(|(c, _)| c)))
        .collect();
    assemble(cfg, outcomes)
}

fn run_kind(cfg: &PipelineConfig, kind: Approach) -> Result<ExperimentResult> {
    if cfg.approach.approach != kind {
        return Err(PipelineError::Config(format!(
            "approach `{}` is {:?}, not {kind:?}",
            cfg.approach.label, cfg.approach.approach
        )));
    }
    run_pipeline(&Runner::new(&cfg.output_dir), cfg)
}

/// Half- and full-resolution streams coded independently; rate is their sum.
pub fn run_simulcast(cfg: &PipelineConfig) -> Result<ExperimentResult> {
    run_kind(cfg, Approach::Simulcast)
}

/// One layered stream; quality is measured on the decoded enhancement layer.
pub fn run_scalable(cfg: &PipelineConfig) -> Result<ExperimentResult> {
    run_kind(cfg, Approach::Scalable)
}

/// Downscale, code the half-resolution stream, upscale the decoded video.
pub fn run_prepost(cfg: &PipelineConfig) -> Result<ExperimentResult> {
    run_kind(cfg, Approach::PrePost)
}
