//! Full-reference luma quality (PSNR-Y, SSIM) and content complexity (SI/TI).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::media::{FrameBuffer, MediaError, Plane, VideoSpec};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("frame formats differ: {0} vs {1}")]
    SpecMismatch(String, String),
    #[error("{what} needs at least {min}x{min} samples, got {width}x{height}")]
    TooSmall {
        what: &'static str,
        min: usize,
        width: usize,
        height: usize,
    },
    #[error("sequence lengths differ: reference has {reference} frames, test has {test}")]
    LengthMismatch { reference: usize, test: usize },
    #[error("no frames to score")]
    Empty,
    #[error(transparent)]
    Media(#[from] MediaError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn check_pair(a: &FrameBuffer, b: &FrameBuffer) -> Result<()> {
    if !a.spec().same_format(b.spec()) {
        return Err(MetricsError::SpecMismatch(a.spec().to_string(), b.spec().to_string()));
    }
    Ok(())
}

/// `10 * log10(max^2 / mse)`, or `+inf` when the error is zero.
pub fn psnr_from_mse(mse: f64, max: u16) -> f64 {
    if mse == 0.0 {
        return f64::INFINITY;
    }
    let peak = max as f64;
    10.0 * (peak * peak / mse).log10()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LumaError {
    pub mse: f64,
    pub psnr: f64,
}

pub fn plane_mse(a: &Plane, b: &Plane) -> f64 {
    let sse: u64 = a
        .data()
        .par_chunks(1 << 16)
        .zip(b.data().par_chunks(1 << 16))
        .map(|(x, y)| {
            x.iter()
                .zip(y)
                .map(|(&p, &q)| {
                    let d = p as i64 - q as i64;
                    (d * d) as u64
                })
                .sum::<u64>()
        })
        .sum();
    sse as f64 / a.data().len() as f64
}

/// Luma-only mean squared error and PSNR.
pub fn psnr_y(reference: &FrameBuffer, test: &FrameBuffer) -> Result<LumaError> {
    check_pair(reference, test)?;
    let mse = plane_mse(reference.luma(), test.luma());
    Ok(LumaError {
        mse,
        psnr: psnr_from_mse(mse, reference.spec().max_sample()),
    })
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

/// Normalised 1-D Gaussian taps of the SSIM window.
pub fn ssim_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Stabilising constants `(C1, C2)` for the given bit depth.
pub fn ssim_constants(bit_depth: u8) -> (f64, f64) {
    let l = ((1u32 << bit_depth) - 1) as f64;
    ((0.01 * l).powi(2), (0.03 * l).powi(2))
}

/// Local SSIM from windowed first and second moments.
#[inline]
pub fn ssim_from_moments(mu_x: f64, mu_y: f64, xx: f64, yy: f64, xy: f64, c1: f64, c2: f64) -> f64 {
    let var_x = xx - mu_x * mu_x;
    let var_y = yy - mu_y * mu_y;
    let cov = xy - mu_x * mu_y;
    ((2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)) / ((mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2))
}

/// Mean single-scale SSIM over all fully-contained 11x11 Gaussian windows.
pub fn ssim_plane(a: &Plane, b: &Plane, bit_depth: u8) -> Result<f64> {
    let (w, h) = a.dims();
    if b.dims() != (w, h) {
        return Err(MetricsError::SpecMismatch(format!("{w}x{h}"), format!("{}x{}", b.width(), b.height())));
    }
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall {
            what: "SSIM",
            min: SSIM_WINDOW,
            width: w,
            height: h,
        });
    }
    let k = ssim_kernel();
    let (c1, c2) = ssim_constants(bit_depth);
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);

    let total: f64 = (0..oh)
        .into_par_iter()
        .map(|y| {
            // vertical pass over the window rows, then horizontal
            let mut col = vec![[0.0f64; 5]; w];
            for (dy, &g) in k.iter().enumerate() {
                let ra = a.row(y + dy);
                let rb = b.row(y + dy);
                for x in 0..w {
                    let p = ra[x] as f64;
                    let q = rb[x] as f64;
                    let c = &mut col[x];
                    c[0] += g * p;
                    c[1] += g * q;
                    c[2] += g * (p * p);
                    c[3] += g * (q * q);
                    c[4] += g * (p * q);
                }
            }
            let mut row_sum = 0.0;
            for x in 0..ow {
                let mut m = [0.0f64; 5];
                for (dx, &g) in k.iter().enumerate() {
                    let c = &col[x + dx];
                    for i in 0..5 {
                        m[i] += g * c[i];
                    }
                }
                row_sum += ssim_from_moments(m[0], m[1], m[2], m[3], m[4], c1, c2);
            }
            row_sum
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();
    Ok(total / (ow * oh) as f64)
}

/// Luma SSIM between two frames.
pub fn ssim_y(reference: &FrameBuffer, test: &FrameBuffer) -> Result<f64> {
    check_pair(reference, test)?;
    ssim_plane(reference.luma(), test.luma(), reference.spec().bit_depth)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameScore {
    pub index: usize,
    #[serde(with = "crate::serde_util")]
    pub psnr_y: f64,
    pub ssim: f64,
    pub mse_y: f64,
}

pub fn score_frame(index: usize, reference: &FrameBuffer, test: &FrameBuffer) -> Result<FrameScore> {
    let e = psnr_y(reference, test)?;
    Ok(FrameScore {
        index,
        psnr_y: e.psnr,
        ssim: ssim_y(reference, test)?,
        mse_y: e.mse,
    })
}

/// How per-frame PSNR values are pooled into one sequence value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Aggregation {
    #[default]
    MeanOfFramePsnr,
    PsnrOfMeanMse,
}

impl std::str::FromStr for Aggregation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mean-of-frame-psnr" => Ok(Aggregation::MeanOfFramePsnr),
            "psnr-of-mean-mse" => Ok(Aggregation::PsnrOfMeanMse),
            _ => Err(format!("unknown aggregation mode `{s}`")),
        }
    }
}

/// Pooled values derived from the per-frame scores. Both PSNR pooling rules
/// are always reported.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub aggregation_mode: Aggregation,
    #[serde(with = "crate::serde_util")]
    pub psnr_y_mean: f64,
    #[serde(with = "crate::serde_util")]
    pub psnr_y_mean_of_frames: f64,
    #[serde(with = "crate::serde_util")]
    pub psnr_y_of_mean_mse: f64,
    pub mse_y_mean: f64,
    pub ssim_mean: f64,
}

impl Aggregates {
    pub fn from_frames(per_frame: &[FrameScore], max: u16, mode: Aggregation) -> Self {
        let n = per_frame.len() as f64;
        let mean_of_frames = per_frame.iter().map(|f| f.psnr_y).sum::<f64>() / n;
        let mse_y_mean = per_frame.iter().map(|f| f.mse_y).sum::<f64>() / n;
        let psnr_y_of_mean_mse = psnr_from_mse(mse_y_mean, max);
        Aggregates {
            aggregation_mode: mode,
            psnr_y_mean: match mode {
                Aggregation::MeanOfFramePsnr => mean_of_frames,
                Aggregation::PsnrOfMeanMse => psnr_y_of_mean_mse,
            },
            psnr_y_mean_of_frames: mean_of_frames,
            psnr_y_of_mean_mse,
            mse_y_mean,
            ssim_mean: per_frame.iter().map(|f| f.ssim).sum::<f64>() / n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub spec: VideoSpec,
    pub per_frame: Vec<FrameScore>,
    pub aggregates: Aggregates,
}

impl SequenceScore {
    pub fn psnr_y_mean(&self) -> f64 {
        self.aggregates.psnr_y_mean
    }

    pub fn ssim_mean(&self) -> f64 {
        self.aggregates.ssim_mean
    }

    /// Recomputes the pooled values from `per_frame`.
    pub fn recompute(&self) -> Aggregates {
        Aggregates::from_frames(&self.per_frame, self.spec.max_sample(), self.aggregates.aggregation_mode)
    }
}

/// Scores two equally long frame streams pairwise.
pub fn score_sequence<R, T>(reference: R, test: T, mode: Aggregation) -> Result<SequenceScore>
where
    R: IntoIterator<Item = Result<FrameBuffer, MediaError>>,
    T: IntoIterator<Item = Result<FrameBuffer, MediaError>>,
{
    let mut reference = reference.into_iter();
    let mut test = test.into_iter();
    let mut per_frame = Vec::new();
    let mut spec = None;
    loop {
        match (reference.next(), test.next()) {
            (None, None) => break,
            (Some(r), Some(t)) => {
                let (r, t) = (r?, t?);
                spec.get_or_insert(*r.spec());
                per_frame.push(score_frame(per_frame.len(), &r, &t)?);
            }
            (r, t) => {
                let n = per_frame.len();
                let extra = |it: Option<_>, rest: usize| if it.is_some() { n + 1 + rest } else { n };
                return Err(MetricsError::LengthMismatch {
                    reference: extra(r, reference.count()),
                    test: extra(t, test.count()),
                });
            }
        }
    }
    let spec = spec.ok_or(MetricsError::Empty)?;
    let aggregates = Aggregates::from_frames(&per_frame, spec.max_sample(), mode);
    Ok(SequenceScore {
        spec: spec.with_frame_count(per_frame.len()),
        per_frame,
        aggregates,
    })
}

/// Spatial and temporal information of a sequence on an 8-bit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiTiResult {
    pub si: f64,
    /// `None` when the sequence has a single frame.
    pub ti: Option<f64>,
    pub per_frame_si: Vec<f64>,
    pub per_frame_ti: Vec<f64>,
}

fn population_std(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    let mean = sum / n as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
    var.sqrt()
}

fn normalized_luma(frame: &FrameBuffer) -> Vec<f64> {
    let scale = (1u32 << (frame.spec().bit_depth - 8)) as f64;
    frame.luma().data().iter().map(|&v| v as f64 / scale).collect()
}

/// Standard deviation of the 3x3 Sobel gradient magnitude over interior pixels.
pub fn spatial_information(luma: &[f64], width: usize, height: usize) -> f64 {
    let at = |x: usize, y: usize| luma[y * width + x];
    let mut mags = Vec::with_capacity((width - 2) * (height - 2));
    for y in 1..height - 1 {
        for x in 1..width - 1 {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            mags.push((gx * gx + gy * gy).sqrt());
        }
    }
    population_std(mags.iter().copied())
}

/// Standard deviation of the pixelwise difference between consecutive frames.
pub fn temporal_information(current: &[f64], previous: &[f64]) -> f64 {
    population_std(current.iter().zip(previous).map(|(c, p)| c - p))
}

/// SI and TI of a frame stream, maximised over frames. 10-bit luma is
/// scaled to the 8-bit range first.
pub fn si_ti<I>(frames: I) -> Result<SiTiResult>
where
    I: IntoIterator<Item = Result<FrameBuffer, MediaError>>,
{
    let mut per_frame_si = Vec::new();
    let mut per_frame_ti = Vec::new();
    let mut previous: Option<(VideoSpec, Vec<f64>)> = None;
    for frame in frames {
        let frame = frame?;
        let spec = *frame.spec();
        if spec.width < 3 || spec.height < 3 {
            return Err(MetricsError::TooSmall {
                what: "SI",
                min: 3,
                width: spec.width,
                height: spec.height,
            });
        }
        let luma = normalized_luma(&frame);
        per_frame_si.push(spatial_information(&luma, spec.width, spec.height));
        if let Some((prev_spec, prev)) = &previous {
            if !prev_spec.same_format(&spec) {
                return Err(MetricsError::SpecMismatch(prev_spec.to_string(), spec.to_string()));
            }
            per_frame_ti.push(temporal_information(&luma, prev));
        }
        previous = Some((spec, luma));
    }
    if per_frame_si.is_empty() {
        return Err(MetricsError::Empty);
    }
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(SiTiResult {
        si: max(&per_frame_si),
        ti: (!per_frame_ti.is_empty()).then(|| max(&per_frame_ti)),
        per_frame_si,
        per_frame_ti,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(w: usize, h: usize, depth: u8) -> VideoSpec {
        VideoSpec::new(w, h, depth, 60, 1).unwrap()
    }

    fn frame_from_luma(spec: VideoSpec, luma: Plane) -> FrameBuffer {
        let (cw, ch) = spec.chroma_dims();
        FrameBuffer::new(spec, luma, Plane::filled(cw, ch, 0), Plane::filled(cw, ch, 0)).unwrap()
    }

    #[test]
    fn psnr_closed_forms() {
        let s = spec(16, 16, 8);
        let black = FrameBuffer::constant(s, 0, 0, 0).unwrap();
        let white = FrameBuffer::constant(s, 255, 0, 0).unwrap();
        let e = psnr_y(&black, &white).unwrap();
        assert_eq!(e.mse, 65025.0);
        assert!(e.psnr.abs() < 1e-9);

        let one = FrameBuffer::constant(s, 1, 0, 0).unwrap();
        let e = psnr_y(&black, &one).unwrap();
        assert_eq!(e.mse, 1.0);
        assert!((e.psnr - 20.0 * 255f64.log10()).abs() < 1e-9);
        assert!((e.psnr - 48.1308).abs() < 1e-4);

        let e = psnr_y(&white, &white).unwrap();
        assert_eq!(e.mse, 0.0);
        assert_eq!(e.psnr, f64::INFINITY);

        let other = FrameBuffer::constant(spec(16, 16, 10), 0, 0, 0).unwrap();
        assert!(matches!(psnr_y(&black, &other), Err(MetricsError::SpecMismatch(..))));
    }

    #[test]
    fn ssim_of_constant_planes_is_luminance_term() {
        let s = spec(16, 16, 8);
        let a = FrameBuffer::constant(s, 128, 0, 0).unwrap();
        let b = FrameBuffer::constant(s, 255, 0, 0).unwrap();
        let c1 = 6.5025;
        let expected = (2.0 * 128.0 * 255.0 + c1) / (128.0f64.powi(2) + 255.0f64.powi(2) + c1);
        assert!((expected - 0.801892766061353).abs() < 1e-12);
        assert!((ssim_y(&a, &b).unwrap() - expected).abs() < 1e-9);
        assert_eq!(ssim_y(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_tiny_frames() {
        let s = spec(10, 12, 8);
        let a = FrameBuffer::constant(s, 1, 0, 0).unwrap();
        assert!(matches!(ssim_y(&a, &a), Err(MetricsError::TooSmall { .. })));
    }

    #[test]
    fn kernel_is_normalised() {
        let k = ssim_kernel();
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(k[0], k[10]);
        assert!(k[5] > k[4]);
    }

    #[test]
    fn aggregation_modes() {
        let max = 255u16;
        let frames: Vec<_> = [40.0f64, 50.0, 60.0]
            .iter()
            .enumerate()
            .map(|(i, &p)| FrameScore {
                index: i,
                psnr_y: p,
                ssim: 0.9,
                mse_y: 65025.0 / 10f64.powf(p / 10.0),
            })
            .collect();
        let a = Aggregates::from_frames(&frames, max, Aggregation::MeanOfFramePsnr);
        assert!((a.psnr_y_mean - 50.0).abs() < 1e-12);
        // 10 log10(255^2 / mean(mse)); evaluated independently at high precision
        assert!((a.psnr_y_of_mean_mse - 44.31798275933005).abs() < 1e-9);
        assert!(a.psnr_y_of_mean_mse <= a.psnr_y_mean_of_frames);
        let b = Aggregates::from_frames(&frames, max, Aggregation::PsnrOfMeanMse);
        assert_eq!(b.psnr_y_mean, a.psnr_y_of_mean_mse);
    }

    #[test]
    fn score_sequence_errors() {
        let s = spec(16, 16, 8);
        let f = || Ok(FrameBuffer::constant(s, 9, 0, 0).unwrap());
        let empty = || Vec::<Result<FrameBuffer, MediaError>>::new();
        assert!(matches!(
            score_sequence(empty(), empty(), Aggregation::default()),
            Err(MetricsError::Empty)
        ));
        assert!(matches!(
            score_sequence(vec![f(), f()], vec![f()], Aggregation::default()),
            Err(MetricsError::LengthMismatch { reference: 2, test: 1 })
        ));
        let seq = score_sequence(vec![f(), f()], vec![f(), f()], Aggregation::default()).unwrap();
        assert_eq!(seq.per_frame.len(), 2);
        assert_eq!(seq.recompute(), seq.aggregates);
        assert_eq!(seq.psnr_y_mean(), f64::INFINITY);
        let json = serde_json::to_value(&seq).unwrap();
        assert_eq!(json["per_frame"][0]["psnr_y"], "inf");
    }

    #[test]
    fn si_of_step_edge() {
        // 8x8 frame, vertical edge of amplitude 100 between columns 3 and 4;
        // hand-evaluated Sobel field has two columns of magnitude 400 among
        // six interior columns
        let s = spec(8, 8, 8);
        let luma = Plane::from_fn(8, 8, |x, _| if x >= 4 { 100 } else { 0 });
        let r = si_ti(vec![Ok(frame_from_luma(s, luma))]).unwrap();
        assert!((r.si - 188.56180831641262).abs() < 1e-9);
        assert_eq!(r.ti, None);
        assert!(r.per_frame_ti.is_empty());
    }

    #[test]
    fn si_ti_zero_cases() {
        let s = spec(16, 8, 10);
        let flat = || Ok(FrameBuffer::constant(s, 700, 0, 0).unwrap());
        let r = si_ti(vec![flat(), flat(), flat()]).unwrap();
        assert_eq!(r.si, 0.0);
        assert_eq!(r.ti, Some(0.0));
        assert_eq!(r.per_frame_ti.len(), 2);

        let textured = || Ok(frame_from_luma(s, Plane::from_fn(16, 8, |x, y| ((x * x + 3 * y) % 1024) as u16)));
        let r = si_ti(vec![textured(), textured()]).unwrap();
        assert!(r.si > 0.0);
        assert_eq!(r.ti, Some(0.0));
    }

    #[test]
    fn ten_bit_is_scaled_to_eight_bit_range() {
        let p8 = Plane::from_fn(8, 8, |x, _| if x >= 4 { 100 } else { 0 });
        let p10 = Plane::from_fn(8, 8, |x, _| if x >= 4 { 400 } else { 0 });
        let a = si_ti(vec![Ok(frame_from_luma(spec(8, 8, 8), p8))]).unwrap();
        let b = si_ti(vec![Ok(frame_from_luma(spec(8, 8, 10), p10))]).unwrap();
        assert_eq!(a.si, b.si);
    }
}
