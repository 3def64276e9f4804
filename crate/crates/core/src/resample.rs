//! Separable Lanczos and bicubic resampling of pixel planes.
//!
//! Output sample `i` is centred on source coordinate
//! `(i + 0.5) * src / dst - 0.5`. When shrinking, the kernel is stretched by
//! the scale factor so that it low-passes the source. Borders replicate the
//! edge sample and the weights of every output sample are renormalised to sum
//! to one. Both passes accumulate in `f64`; a single rounding happens at the
//! end.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{Container, FrameBuffer, MediaError, Plane, RawFormat, VideoReader, VideoSpec, VideoWriter};

#[derive(Debug, Error)]
pub enum ResampleError {
    #[error("plane is {found:?}, job expects {expected:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("resample dimensions must be positive, got {0}x{1}")]
    ZeroDimension(usize, usize),
    #[error("4:2:0 target must have even dimensions, got {0}x{1}")]
    OddChromaTarget(usize, usize),
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error(transparent)]
    Media(#[from] MediaError),
}

pub type Result<T, E = ResampleError> = std::result::Result<T, E>;

/// Interpolation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FilterKind {
    /// Windowed sinc with `a` lobes.
    Lanczos { a: u32 },
    /// Keys cubic convolution with sharpness `a` in `[-1, 0]`.
    Bicubic { a: f64 },
}

impl FilterKind {
    pub const DEFAULT_LANCZOS: FilterKind = FilterKind::Lanczos { a: 3 };
    pub const DEFAULT_BICUBIC: FilterKind = FilterKind::Bicubic { a: -0.5 };

    pub fn lanczos(a: u32) -> Result<Self> {
        let f = FilterKind::Lanczos { a };
        f.validate()?;
        Ok(f)
    }

    pub fn bicubic(a: f64) -> Result<Self> {
        let f = FilterKind::Bicubic { a };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FilterKind::Lanczos { a } if a < 1 => {
                Err(ResampleError::InvalidFilter(format!("lanczos lobes must be >= 1, got {a}")))
            }
            FilterKind::Bicubic { a } if !(-1.0..=0.0).contains(&a) => Err(ResampleError::InvalidFilter(
                format!("bicubic coefficient must lie in [-1, 0], got {a}"),
            )),
            _ => Ok(()),
        }
    }

    /// Half-width of the kernel at unit scale.
    pub fn support(&self) -> f64 {
        match *self {
            FilterKind::Lanczos { a } => a as f64,
            FilterKind::Bicubic { .. } => 2.0,
        }
    }

    pub fn weight(&self, x: f64) -> f64 {
        match *self {
            FilterKind::Lanczos { a } => lanczos_weight(x, a),
            FilterKind::Bicubic { a } => bicubic_weight(x, a),
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterKind::Lanczos { a } => write!(f, "lanczos:{a}"),
            FilterKind::Bicubic { a } => write!(f, "bicubic:{a}"),
        }
    }
}

impl FromStr for FilterKind {
    type Err = ResampleError;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let bad = || ResampleError::InvalidFilter(format!("cannot parse `{s}`"));
        match name.to_ascii_lowercase().as_str() {
            "lanczos" => FilterKind::lanczos(param.map_or(Ok(3), |p| p.parse().map_err(|_| bad()))?),
            "bicubic" => FilterKind::bicubic(param.map_or(Ok(-0.5), |p| p.parse().map_err(|_| bad()))?),
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for FilterKind {
    type Error = ResampleError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<FilterKind> for String {
    fn from(f: FilterKind) -> String {
        f.to_string()
    }
}

fn sinc(x: f64) -> f64 {
    let px = PI * x;
    px.sin() / px
}

/// Lanczos kernel `sinc(x) * sinc(x / a)` on `|x| < a`, zero elsewhere.
///
/// Returns exactly 1 at the origin and exactly 0 at every other integer.
pub fn lanczos_weight(x: f64, a: u32) -> f64 {
    let a = a as f64;
    let ax = x.abs();
    if ax >= a {
        return 0.0;
    }
    if ax.fract() == 0.0 {
        return if ax == 0.0 { 1.0 } else { 0.0 };
    }
    sinc(x) * sinc(x / a)
}

/// Two-piece cubic convolution kernel with sharpness `a`.
pub fn bicubic_weight(x: f64, a: f64) -> f64 {
    let ax = x.abs();
    if ax >= 2.0 {
        return 0.0;
    }
    if ax.fract() == 0.0 {
        return if ax == 0.0 { 1.0 } else { 0.0 };
    }
    let ax2 = ax * ax;
    let ax3 = ax2 * ax;
    if ax <= 1.0 {
        (a + 2.0) * ax3 - (a + 3.0) * ax2 + 1.0
    } else {
        a * ax3 - 5.0 * a * ax2 + 8.0 * a * ax - 4.0 * a
    }
}

/// Edge handling for taps that fall outside the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Replicate the nearest edge sample.
    #[default]
    Clamp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleJob {
    pub source_dims: (usize, usize),
    pub target_dims: (usize, usize),
    pub filter: FilterKind,
    #[serde(default)]
    pub boundary: Boundary,
}

impl ResampleJob {
    pub fn new(source_dims: (usize, usize), target_dims: (usize, usize), filter: FilterKind) -> Result<Self> {
        for (w, h) in [source_dims, target_dims] {
            if w == 0 || h == 0 {
                return Err(ResampleError::ZeroDimension(w, h));
            }
        }
        filter.validate()?;
        Ok(ResampleJob {
            source_dims,
            target_dims,
            filter,
            boundary: Boundary::Clamp,
        })
    }

    /// Same filter and scale factors applied to the half-size chroma grid.
    pub fn for_chroma(&self) -> Result<Self> {
        let (tw, th) = self.target_dims;
        if tw % 2 != 0 || th % 2 != 0 {
            return Err(ResampleError::OddChromaTarget(tw, th));
        }
        let (sw, sh) = self.source_dims;
        ResampleJob::new((sw / 2, sh / 2), (tw / 2, th / 2), self.filter)
    }

    pub fn horizontal_weights(&self) -> AxisWeights {
        AxisWeights::new(self.source_dims.0, self.target_dims.0, self.filter)
    }

    pub fn vertical_weights(&self) -> AxisWeights {
        AxisWeights::new(self.source_dims.1, self.target_dims.1, self.filter)
    }
}

/// Normalised 1-D filter taps for every output position along one axis.
#[derive(Debug, Clone)]
pub struct AxisWeights {
    /// `starts[i]..starts[i + 1]` indexes the taps of output `i`.
    starts: Vec<usize>,
    indices: Vec<usize>,
    weights: Vec<f64>,
}

impl AxisWeights {
    pub fn new(src: usize, dst: usize, filter: FilterKind) -> Self {
        let scale = src as f64 / dst as f64;
        let stretch = scale.max(1.0);
        let radius = filter.support() * stretch;
        let mut starts = Vec::with_capacity(dst + 1);
        let mut indices = Vec::new();
        let mut weights = Vec::new();
        let last = src as isize - 1;
        for i in 0..dst {
            starts.push(indices.len());
            let center = (i as f64 + 0.5) * scale - 0.5;
            let lo = (center - radius).floor() as isize;
            let hi = (center + radius).ceil() as isize;
            let first = weights.len();
            let mut sum = 0.0;
            for j in lo..=hi {
                let w = filter.weight((j as f64 - center) / stretch);
                if w != 0.0 {
                    indices.push(j.clamp(0, last) as usize);
                    weights.push(w);
                    sum += w;
                }
            }
            for w in &mut weights[first..] {
                *w /= sum;
            }
        }
        starts.push(indices.len());
        AxisWeights {
            starts,
            indices,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.starts.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Source indices (already clamped) and weights of output `i`.
    pub fn taps(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.starts[i]..self.starts[i + 1];
        (&self.indices[r.clone()], &self.weights[r])
    }
}

#[inline]
fn round_clip(v: f64, max: u16) -> u16 {
    v.round().clamp(0.0, max as f64) as u16
}

/// Resamples one plane; samples are clipped to `[0, max_value]`.
pub fn resample_plane(plane: &Plane, job: &ResampleJob, max_value: u16) -> Result<Plane> {
    if plane.dims() != job.source_dims {
        return Err(ResampleError::DimensionMismatch {
            expected: job.source_dims,
            found: plane.dims(),
        });
    }
    let sh = job.source_dims.1;
    let (tw, th) = job.target_dims;
    if tw == 0 || th == 0 {
        return Err(ResampleError::ZeroDimension(tw, th));
    }
    let hw = job.horizontal_weights();
    let vw = job.vertical_weights();

    let mut tmp = vec![0.0f64; sh * tw];
    tmp.par_chunks_mut(tw).enumerate().for_each(|(y, out)| {
        let row = plane.row(y);
        for (x, o) in out.iter_mut().enumerate() {
            let (idx, w) = hw.taps(x);
            *o = idx.iter().zip(w).map(|(&i, &w)| w * row[i] as f64).sum();
        }
    });

    let mut data = vec![0u16; tw * th];
    data.par_chunks_mut(tw).enumerate().for_each(|(y, out)| {
        let (idx, w) = vw.taps(y);
        for (x, o) in out.iter_mut().enumerate() {
            let v: f64 = idx.iter().zip(w).map(|(&j, &w)| w * tmp[j * tw + x]).sum();
            *o = round_clip(v, max_value);
        }
    });
    Ok(Plane::new(tw, th, data)?)
}

/// Resamples all three planes of a frame. `job` describes the luma plane.
pub fn resample_frame(frame: &FrameBuffer, job: &ResampleJob) -> Result<FrameBuffer> {
    let spec = frame.spec();
    if (spec.width, spec.height) != job.source_dims {
        return Err(ResampleError::DimensionMismatch {
            expected: job.source_dims,
            found: (spec.width, spec.height),
        });
    }
    let chroma = job.for_chroma()?;
    let target = spec.resized(job.target_dims.0, job.target_dims.1)?;
    let max = spec.max_sample();
    let ((luma, cb), cr) = rayon::join(
        || {
            rayon::join(
                || resample_plane(frame.luma(), job, max),
                || resample_plane(frame.cb(), &chroma, max),
            )
        },
        || resample_plane(frame.cr(), &chroma, max),
    );
    let target = match spec.frame_count {
        Some(n) => target.with_frame_count(n),
        None => target,
    };
    Ok(FrameBuffer::new(target, luma?, cb?, cr?)?)
}

/// Resamples a video file frame by frame into `output`. Returns the output spec.
pub fn resample_file(
    input: &Path,
    raw: Option<&RawFormat>,
    output: &Path,
    container: Container,
    target_dims: (usize, usize),
    filter: FilterKind,
) -> Result<VideoSpec> {
    let mut reader = VideoReader::open(input, raw)?;
    let spec = *reader.spec();
    let job = ResampleJob::new((spec.width, spec.height), target_dims, filter)?;
    job.for_chroma()?;
    let out_spec = spec.resized(target_dims.0, target_dims.1)?;
    let mut writer = VideoWriter::create(output, out_spec, container)?;
    for frame in reader.frames() {
        writer.write_frame(&resample_frame(&frame?, &job)?)?;
    }
    let n = writer.finish()?;
    Ok(out_spec.with_frame_count(n))
}
