//! Raw planar YUV and Y4M video access.
//!
//! Frames are exposed as three `u16` planes regardless of bit depth. Raw
//! 10-bit samples are stored as little-endian 16-bit words; 8-bit samples
//! occupy one byte each. Only 4:2:0 chroma is supported.
//!
//! Streams are accessed frame-at-a-time: a [`VideoReader`] seeks to the
//! requested frame and never buffers the whole sequence.

use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const Y4M_MAGIC: &[u8] = b"YUV4MPEG2";
const Y4M_FRAME: &[u8] = b"FRAME";
const MAX_HEADER_LEN: usize = 4096;

#[derive(Debug, Error)]
pub enum MediaError {
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed Y4M header: {0}")]
    MalformedHeader(String),
    #[error("unsupported chroma tag `{0}` (only 4:2:0 at 8 or 10 bits is supported)")]
    UnsupportedChroma(String),
    #[error("invalid video format: {0}")]
    InvalidSpec(String),
    #[error("raw file size {size} is not a multiple of the frame size {frame_size}")]
    RawSizeMismatch { size: u64, frame_size: u64 },
    #[error("{0} is not a Y4M file; raw input needs explicit width, height, bit depth and fps")]
    MissingRawFormat(PathBuf),
    #[error("frame index {index} out of range (stream has {count} frames)")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("truncated stream: frame {index} is incomplete")]
    Truncated { index: usize },
    #[error("sample value {value} at offset {offset} of the {plane} plane exceeds {max}")]
    SampleOutOfRange {
        plane: &'static str,
        offset: usize,
        value: u16,
        max: u16,
    },
    #[error("plane geometry mismatch: {0}")]
    PlaneMismatch(String),
    #[error("frame format {found} does not match stream format {expected}")]
    FormatMismatch { expected: String, found: String },
    #[error("no frames to write")]
    Empty,
}

pub type Result<T, E = MediaError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> MediaError + '_ {
    move |source| MediaError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Chroma subsampling layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Chroma {
    #[default]
    #[serde(rename = "420")]
    Yuv420,
}

/// Geometry, sample format and timing of a video stream.
///
/// `frame_count` is `None` until the stream has been sized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VideoSpec {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    #[serde(default)]
    pub chroma: Chroma,
    pub fps_num: u32,
    pub fps_den: u32,
    #[serde(default)]
    pub frame_count: Option<usize>,
}

impl VideoSpec {
    pub fn new(width: usize, height: usize, bit_depth: u8, fps_num: u32, fps_den: u32) -> Result<Self> {
        let spec = VideoSpec {
            width,
            height,
            bit_depth,
            chroma: Chroma::Yuv420,
            fps_num,
            fps_den,
            frame_count: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(MediaError::InvalidSpec(format!(
                "dimensions must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !self.width.is_multiple_of(2) || !self.height.is_multiple_of(2) {
            return Err(MediaError::InvalidSpec(format!(
                "4:2:0 requires even dimensions, got {}x{}",
                self.width, self.height
            )));
        }
        if self.bit_depth != 8 && self.bit_depth != 10 {
            return Err(MediaError::InvalidSpec(format!(
                "bit depth must be 8 or 10, got {}",
                self.bit_depth
            )));
        }
        if self.fps_num == 0 || self.fps_den == 0 {
            return Err(MediaError::InvalidSpec(format!(
                "frame rate must be positive, got {}/{}",
                self.fps_num, self.fps_den
            )));
        }
        Ok(())
    }

    pub fn with_frame_count(mut self, frames: usize) -> Self {
        self.frame_count = Some(frames);
        self
    }

    /// Same spec at a new luma resolution.
    pub fn resized(&self, width: usize, height: usize) -> Result<Self> {
        let spec = VideoSpec {
            width,
            height,
            ..*self
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn max_sample(&self) -> u16 {
        ((1u32 << self.bit_depth) - 1) as u16
    }

    pub fn chroma_dims(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    pub fn bytes_per_sample(&self) -> usize {
        if self.bit_depth > 8 {
            2
        } else {
            1
        }
    }

    pub fn samples_per_frame(&self) -> usize {
        let (cw, ch) = self.chroma_dims();
        self.width * self.height + 2 * cw * ch
    }

    pub fn frame_size_bytes(&self) -> usize {
        self.samples_per_frame() * self.bytes_per_sample()
    }

    /// Flags needed to read this format back from a headerless file.
    pub fn raw_format(&self) -> RawFormat {
        RawFormat {
            width: self.width,
            height: self.height,
            bit_depth: self.bit_depth,
            fps_num: self.fps_num,
            fps_den: self.fps_den,
        }
    }

    pub fn fps(&self) -> f64 {
        self.fps_num as f64 / self.fps_den as f64
    }

    /// Equality of everything but the frame count.
    pub fn same_format(&self, other: &VideoSpec) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.bit_depth == other.bit_depth
            && self.chroma == other.chroma
            && self.fps_num == other.fps_num
            && self.fps_den == other.fps_den
    }
}

impl fmt::Display for VideoSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}x{} {}-bit 4:2:0 @ {}/{}",
            self.width, self.height, self.bit_depth, self.fps_num, self.fps_den
        )
    }
}

/// Explicit description of a headerless raw YUV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawFormat {
    pub width: usize,
    pub height: usize,
    pub bit_depth: u8,
    pub fps_num: u32,
    #[serde(default = "one")]
    pub fps_den: u32,
}

fn one() -> u32 {
    1
}

impl RawFormat {
    pub fn to_spec(&self) -> Result<VideoSpec> {
        VideoSpec::new(self.width, self.height, self.bit_depth, self.fps_num, self.fps_den)
    }
}

/// Parses a frame rate written as `60`, `60:1`, `60/1` or `59.94`.
pub fn parse_fps(s: &str) -> Option<(u32, u32)> {
    let s = s.trim();
    if let Some((n, d)) = s.split_once([':', '/']) {
        let n = n.parse().ok()?;
        let d = d.parse().ok()?;
        return (n > 0 && d > 0).then_some((n, d));
    }
    if let Ok(n) = s.parse::<u32>() {
        return (n > 0).then_some((n, 1));
    }
    match s {
        "23.976" => Some((24000, 1001)),
        "29.97" => Some((30000, 1001)),
        "59.94" => Some((60000, 1001)),
        "119.88" => Some((120000, 1001)),
        _ => None,
    }
}

/// A single image plane of `width * height` samples in row-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plane {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(MediaError::PlaneMismatch(format!(
                "{} samples for a {}x{} plane",
                data.len(),
                width,
                height
            )));
        }
        Ok(Plane {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u16) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Plane {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u16> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn row(&self, y: usize) -> &[u16] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, u16> {
        self.data.chunks_exact(self.width)
    }

    /// Horizontally mirrored copy.
    pub fn mirrored(&self) -> Plane {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.rows() {
            data.extend(row.iter().rev());
        }
        Plane {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

/// One decoded frame: a luma plane and two quarter-size chroma planes.
///
/// Construction validates plane geometry and sample range, so a
/// `FrameBuffer` always satisfies its spec.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameBuffer {
    spec: VideoSpec,
    luma: Plane,
    cb: Plane,
    cr: Plane,
}

impl FrameBuffer {
    pub fn new(spec: VideoSpec, luma: Plane, cb: Plane, cr: Plane) -> Result<Self> {
        spec.validate()?;
        let (cw, ch) = spec.chroma_dims();
        for (name, plane, dims) in [
            ("luma", &luma, (spec.width, spec.height)),
            ("cb", &cb, (cw, ch)),
            ("cr", &cr, (cw, ch)),
        ] {
            if plane.dims() != dims {
                return Err(MediaError::PlaneMismatch(format!(
                    "{name} plane is {}x{}, expected {}x{}",
                    plane.width, plane.height, dims.0, dims.1
                )));
            }
            check_range(name, &plane.data, spec.max_sample())?;
        }
        Ok(FrameBuffer { spec, luma, cb, cr })
    }

    /// Frame with every sample of each plane set to the given value.
    pub fn constant(spec: VideoSpec, y: u16, cb: u16, cr: u16) -> Result<Self> {
        let (cw, ch) = spec.chroma_dims();
        FrameBuffer::new(
            spec,
            Plane::filled(spec.width, spec.height, y),
            Plane::filled(cw, ch, cb),
            Plane::filled(cw, ch, cr),
        )
    }

    pub fn spec(&self) -> &VideoSpec {
        &self.spec
    }

    pub fn luma(&self) -> &Plane {
        &self.luma
    }

    pub fn cb(&self) -> &Plane {
        &self.cb
    }

    pub fn cr(&self) -> &Plane {
        &self.cr
    }

    pub fn planes(&self) -> [&Plane; 3] {
        [&self.luma, &self.cb, &self.cr]
    }

    pub fn into_planes(self) -> (VideoSpec, [Plane; 3]) {
        (self.spec, [self.luma, self.cb, self.cr])
    }
}

fn check_range(plane: &'static str, data: &[u16], max: u16) -> Result<()> {
    match data.iter().position(|&v| v > max) {
        Some(offset) => Err(MediaError::SampleOutOfRange {
            plane,
            offset,
            value: data[offset],
            max,
        }),
        None => Ok(()),
    }
}

/// Container layout of a video file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Container {
    Raw,
    Y4m,
}

impl Container {
    /// `.y4m` selects Y4M, anything else raw.
    pub fn from_path(path: &Path) -> Container {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("y4m") => Container::Y4m,
            _ => Container::Raw,
        }
    }
}

impl FromStr for Container {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "yuv" => Ok(Container::Raw),
            "y4m" => Ok(Container::Y4m),
            other => Err(format!("unknown container `{other}` (expected raw or y4m)")),
        }
    }
}

/// Parses the header line of a Y4M stream (without the trailing newline).
pub fn parse_y4m_header(line: &str) -> Result<VideoSpec> {
    let mut tokens = line.split_ascii_whitespace();
    if tokens.next() != Some("YUV4MPEG2") {
        return Err(MediaError::MalformedHeader("missing YUV4MPEG2 signature".into()));
    }
    let (mut width, mut height, mut fps) = (None, None, None);
    let mut bit_depth = 8;
    for token in tokens {
        let (tag, value) = token.split_at(1);
        match tag {
            "W" => width = Some(parse_field::<usize>("W", value)?),
            "H" => height = Some(parse_field::<usize>("H", value)?),
            "F" => {
                let (n, d) = value
                    .split_once(':')
                    .ok_or_else(|| MediaError::MalformedHeader(format!("bad frame rate `{value}`")))?;
                fps = Some((parse_field::<u32>("F", n)?, parse_field::<u32>("F", d)?));
            }
            "C" => {
                bit_depth = match value {
                    "420" | "420jpeg" | "420paldv" | "420mpeg2" => 8,
                    "420p10" => 10,
                    other => return Err(MediaError::UnsupportedChroma(other.to_string())),
                }
            }
            // interlacing, aspect ratio and extensions carry no geometry
            "I" | "A" | "X" => {}
            _ => return Err(MediaError::MalformedHeader(format!("unknown parameter `{token}`"))),
        }
    }
    let width = width.ok_or_else(|| MediaError::MalformedHeader("missing W".into()))?;
    let height = height.ok_or_else(|| MediaError::MalformedHeader("missing H".into()))?;
    let (fps_num, fps_den) = fps.ok_or_else(|| MediaError::MalformedHeader("missing F".into()))?;
    VideoSpec::new(width, height, bit_depth, fps_num, fps_den)
}

fn parse_field<T: FromStr>(tag: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| MediaError::MalformedHeader(format!("bad {tag} value `{value}`")))
}

pub fn y4m_header(spec: &VideoSpec) -> String {
    let chroma = if spec.bit_depth > 8 { "C420p10" } else { "C420" };
    format!(
        "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 {}",
        spec.width, spec.height, spec.fps_num, spec.fps_den, chroma
    )
}

#[derive(Debug, Clone)]
enum Layout {
    Raw,
    /// Byte offsets of each frame's sample data.
    Y4m(Vec<u64>),
}

fn read_line_limited<R: BufRead>(reader: &mut R, limit: usize) -> io::Result<Vec<u8>> {
    let mut line = Vec::new();
    reader.take(limit as u64).read_until(b'\n', &mut line)?;
    Ok(line)
}

fn scan(path: &Path, raw: Option<&RawFormat>) -> Result<(VideoSpec, Layout)> {
    let file = File::open(path).map_err(io_err(path))?;
    let size = file.metadata().map_err(io_err(path))?.len();
    let mut reader = BufReader::new(file);

    let mut magic = [0u8; 9];
    let is_y4m = match reader.read_exact(&mut magic) {
        Ok(()) => magic == Y4M_MAGIC,
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => false,
        Err(e) => return Err(io_err(path)(e)),
    };

    if !is_y4m {
        let raw = raw.ok_or_else(|| MediaError::MissingRawFormat(path.to_path_buf()))?;
        let spec = raw.to_spec()?;
        let frame_size = spec.frame_size_bytes() as u64;
        if size % frame_size != 0 {
            return Err(MediaError::RawSizeMismatch { size, frame_size });
        }
        return Ok((spec.with_frame_count((size / frame_size) as usize), Layout::Raw));
    }

    reader.seek(SeekFrom::Start(0)).map_err(io_err(path))?;
    let header = read_line_limited(&mut reader, MAX_HEADER_LEN).map_err(io_err(path))?;
    if header.last() != Some(&b'\n') {
        return Err(MediaError::MalformedHeader("header line not terminated".into()));
    }
    let header = std::str::from_utf8(&header[..header.len() - 1])
        .map_err(|_| MediaError::MalformedHeader("header is not ASCII".into()))?;
    let spec = parse_y4m_header(header)?;

    let frame_size = spec.frame_size_bytes() as u64;
    let mut offsets = Vec::new();
    let mut pos = reader.stream_position().map_err(io_err(path))?;
    while pos < size {
        let line = read_line_limited(&mut reader, MAX_HEADER_LEN).map_err(io_err(path))?;
        if !line.starts_with(Y4M_FRAME) || line.last() != Some(&b'\n') {
            return Err(MediaError::MalformedHeader(format!(
                "expected FRAME marker at byte {pos}"
            )));
        }
        let data = pos + line.len() as u64;
        if data + frame_size > size {
            return Err(MediaError::Truncated {
                index: offsets.len(),
            });
        }
        offsets.push(data);
        pos = data + frame_size;
        reader.seek(SeekFrom::Start(pos)).map_err(io_err(path))?;
    }
    Ok((spec.with_frame_count(offsets.len()), Layout::Y4m(offsets)))
}

/// Determines the format and frame count of a video file.
///
/// Y4M files are recognised by their signature; anything else is treated as
/// raw planar YUV described by `raw`.
pub fn probe_stream(path: &Path, raw: Option<&RawFormat>) -> Result<VideoSpec> {
    scan(path, raw).map(|(spec, _)| spec)
}

/// Random-access frame reader over a raw or Y4M file.
///
/// A reader is owned by one consumer; use [`VideoReader::reopen`] to obtain
/// an independent handle for another thread.
pub struct VideoReader {
    path: PathBuf,
    file: BufReader<File>,
    spec: VideoSpec,
    layout: Layout,
    buf: Vec<u8>,
}

impl VideoReader {
    pub fn open(path: impl AsRef<Path>, raw: Option<&RawFormat>) -> Result<Self> {
        let path = path.as_ref();
        let (spec, layout) = scan(path, raw)?;
        let file = File::open(path).map_err(io_err(path))?;
        Ok(VideoReader {
            path: path.to_path_buf(),
            file: BufReader::with_capacity(1 << 20, file),
            spec,
            layout,
            buf: Vec::new(),
        })
    }

    pub fn reopen(&self) -> Result<Self> {
        let file = File::open(&self.path).map_err(io_err(&self.path))?;
        Ok(VideoReader {
            path: self.path.clone(),
            file: BufReader::with_capacity(1 << 20, file),
            spec: self.spec,
            layout: self.layout.clone(),
            buf: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn spec(&self) -> &VideoSpec {
        &self.spec
    }

    pub fn container(&self) -> Container {
        match self.layout {
            Layout::Raw => Container::Raw,
            Layout::Y4m(_) => Container::Y4m,
        }
    }

    pub fn frame_count(&self) -> usize {
        self.spec.frame_count.unwrap_or(0)
    }

    pub fn read_frame(&mut self, index: usize) -> Result<FrameBuffer> {
        let count = self.frame_count();
        if index >= count {
            return Err(MediaError::IndexOutOfRange { index, count });
        }
        let frame_size = self.spec.frame_size_bytes();
        let offset = match &self.layout {
            Layout::Raw => (index * frame_size) as u64,
            Layout::Y4m(offsets) => offsets[index],
        };
        self.file
            .seek(SeekFrom::Start(offset))
            .map_err(io_err(&self.path))?;
        self.buf.resize(frame_size, 0);
        match self.file.read_exact(&mut self.buf) {
            Ok(()) => {}
            Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
                return Err(MediaError::Truncated { index })
            }
            Err(e) => return Err(io_err(&self.path)(e)),
        }
        decode_frame(&self.spec, &self.buf)
    }

    /// Iterates over all frames in order.
    pub fn frames(&mut self) -> impl Iterator<Item = Result<FrameBuffer>> + '_ {
        (0..self.frame_count()).map(move |i| self.read_frame(i))
    }
}

fn decode_frame(spec: &VideoSpec, bytes: &[u8]) -> Result<FrameBuffer> {
    let (cw, ch) = spec.chroma_dims();
    let sizes = [spec.width * spec.height, cw * ch, cw * ch];
    let bps = spec.bytes_per_sample();
    let mut planes = Vec::with_capacity(3);
    let mut pos = 0;
    for (i, n) in sizes.into_iter().enumerate() {
        let chunk = &bytes[pos..pos + n * bps];
        pos += n * bps;
        let data: Vec<u16> = if bps == 1 {
            chunk.iter().map(|&b| b as u16).collect()
        } else {
            chunk
                .chunks_exact(2)
                .map(|w| u16::from_le_bytes([w[0], w[1]]))
                .collect()
        };
        let (w, h) = if i == 0 { (spec.width, spec.height) } else { (cw, ch) };
        planes.push(Plane::new(w, h, data)?);
    }
    let cr = planes.pop().unwrap();
    let cb = planes.pop().unwrap();
    let luma = planes.pop().unwrap();
    FrameBuffer::new(*spec, luma, cb, cr)
}

fn encode_frame(frame: &FrameBuffer, out: &mut Vec<u8>) {
    out.clear();
    let wide = frame.spec().bit_depth > 8;
    for plane in frame.planes() {
        if wide {
            for &s in plane.data() {
                out.extend_from_slice(&s.to_le_bytes());
            }
        } else {
            out.extend(plane.data().iter().map(|&s| s as u8));
        }
    }
}

/// Streaming writer producing raw planar YUV or Y4M output.
pub struct VideoWriter {
    path: PathBuf,
    out: BufWriter<File>,
    spec: VideoSpec,
    container: Container,
    frames: usize,
    buf: Vec<u8>,
}

impl VideoWriter {
    pub fn create(path: impl AsRef<Path>, spec: VideoSpec, container: Container) -> Result<Self> {
        spec.validate()?;
        let path = path.as_ref();
        let file = File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        if container == Container::Y4m {
            writeln!(out, "{}", y4m_header(&spec)).map_err(io_err(path))?;
        }
        Ok(VideoWriter {
            path: path.to_path_buf(),
            out,
            spec,
            container,
            frames: 0,
            buf: Vec::new(),
        })
    }

    pub fn spec(&self) -> &VideoSpec {
        &self.spec
    }

    pub fn write_frame(&mut self, frame: &FrameBuffer) -> Result<()> {
        if !frame.spec().same_format(&self.spec) {
            return Err(MediaError::FormatMismatch {
                expected: self.spec.to_string(),
                found: frame.spec().to_string(),
            });
        }
        encode_frame(frame, &mut self.buf);
        if self.container == Container::Y4m {
            self.out.write_all(b"FRAME\n").map_err(io_err(&self.path))?;
        }
        self.out.write_all(&self.buf).map_err(io_err(&self.path))?;
        self.frames += 1;
        Ok(())
    }

    /// Flushes the file and returns the number of frames written.
    pub fn finish(mut self) -> Result<usize> {
        self.out.flush().map_err(io_err(&self.path))?;
        Ok(self.frames)
    }
}

/// Writes a whole frame sequence. All frames must share one format.
pub fn write_video<'a, I>(frames: I, path: impl AsRef<Path>, container: Container) -> Result<usize>
where
    I: IntoIterator<Item = &'a FrameBuffer>,
{
    let mut frames = frames.into_iter().peekable();
    let first = frames.peek().ok_or(MediaError::Empty)?;
    let mut writer = VideoWriter::create(path, *first.spec(), container)?;
    for frame in frames {
        writer.write_frame(frame)?;
    }
    writer.finish()
}
