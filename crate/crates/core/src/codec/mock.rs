//! A small deterministic transform codec used for hermetic RD experiments.
//!
//! Every plane is split into 8×8 blocks (edges padded by replication), each
//! block is transformed with a fixed-point orthonormal DCT-II, quantised with
//! step `2^((qp - 4) / 6)` on coefficients carrying a gain of 8, and the levels
//! are written in zigzag order as signed exp-Golomb codes. All arithmetic on
//! the coding path is integer, so bitstreams are identical across platforms.
//!
//! The DC step is capped at 32 so that flat content is reconstructed exactly
//! at every qp, and any step of at most 1 reconstructs integer input exactly.

use std::path::Path;
use std::sync::LazyLock;

use rayon::prelude::*;

use super::{io_err, CodecError, Result};
use crate::media::{Container, FrameBuffer, Plane, RawFormat, VideoReader, VideoSpec, VideoWriter};

pub const MIN_QP: i32 = 0;
pub const MAX_QP: i32 = 51;

const MAGIC: &[u8; 4] = b"RDMK";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 27;

const N: usize = 8;
const BASIS_BITS: u32 = 20;
/// Quantisation steps for qp 0..5, in 1/64 units; each further 6 doubles.
const LEVEL_SCALE: [i128; 6] = [40, 45, 51, 57, 64, 72];
/// 32 in 1/64 units.
const DC_STEP_CAP: i128 = 32 * 64;

/// `B[k][n] = round(2^20 * alpha(k) * cos((2n + 1) k pi / 16))`, built from a
/// cosine table indexed by angle so that the symmetries of the continuous
/// basis hold exactly in integers.
static BASIS: LazyLock<[[i64; N]; N]> = LazyLock::new(|| {
    let half = (1i64 << (BASIS_BITS - 1)) as f64;
    let cos = |m: usize| (half * (m as f64 * std::f64::consts::PI / 16.0).cos()).round() as i64;
    let table: Vec<i64> = (0..=8).map(cos).collect();
    let dc = ((1i64 << BASIS_BITS) as f64 / 8f64.sqrt()).round() as i64;
    let mut b = [[0i64; N]; N];
    for (k, row) in b.iter_mut().enumerate() {
        for (n, v) in row.iter_mut().enumerate() {
            *v = if k == 0 {
                dc
            } else {
                match ((2 * n + 1) * k) % 32 {
                    a @ 0..=8 => table[a],
                    a @ 9..=16 => -table[16 - a],
                    a @ 17..=24 => -table[a - 16],
                    a => table[32 - a],
                }
            };
        }
    }
    b
});

static ZIGZAG: LazyLock<[usize; N * N]> = LazyLock::new(|| {
    let mut order = [0usize; N * N];
    let mut i = 0;
    for s in 0..(2 * N - 1) {
        let range: Vec<usize> = (0..N).filter(|&r| s >= r && s - r < N).collect();
        let rows: Box<dyn Iterator<Item = usize>> = if s % 2 == 0 {
            Box::new(range.into_iter().rev())
        } else {
            Box::new(range.into_iter())
        };
        for r in rows {
            order[i] = r * N + (s - r);
            i += 1;
        }
    }
    order
});

/// Quantisation step in 1/64 units.
fn step_64(qp: i32) -> i128 {
    LEVEL_SCALE[(qp % 6) as usize] << (qp / 6)
}

/// Real-valued quantisation step for a qp.
pub fn quant_step(qp: i32) -> f64 {
    step_64(qp) as f64 / 64.0
}

fn check_qp(qp: i32) -> Result<()> {
    if !(MIN_QP..=MAX_QP).contains(&qp) {
        return Err(CodecError::Mock(format!("qp {qp} outside [{MIN_QP}, {MAX_QP}]")));
    }
    Ok(())
}

fn div_round(num: i128, den: i128) -> i128 {
    let q = (2 * num.abs() + den) / (2 * den);
    if num < 0 {
        -q
    } else {
        q
    }
}

type Block = [i64; N * N];
type Levels = [i32; N * N];

fn forward(block: &Block) -> [i64; N * N] {
    let b = &*BASIS;
    let mut tmp = [0i64; N * N];
    for k in 0..N {
        for m in 0..N {
            tmp[k * N + m] = (0..N).map(|n| b[k][n] * block[n * N + m]).sum();
        }
    }
    let mut out = [0i64; N * N];
    for k in 0..N {
        for l in 0..N {
            out[k * N + l] = (0..N).map(|m| tmp[k * N + m] * b[l][m]).sum();
        }
    }
    out
}

fn steps(qp: i32) -> [i128; N * N] {
    let s = step_64(qp);
    let mut out = [s; N * N];
    out[0] = s.min(DC_STEP_CAP);
    out
}

fn quantise(coef: &[i64; N * N], steps: &[i128; N * N]) -> Levels {
    // level = round(8 * Y / 2^40 / step) with step = steps / 64
    let mut out = [0i32; N * N];
    for i in 0..N * N {
        out[i] = div_round(coef[i] as i128 * 512, steps[i] << (2 * BASIS_BITS)) as i32;
    }
    out
}

fn reconstruct(levels: &Levels, steps: &[i128; N * N], mid: i64, max: i64) -> Block {
    let b = &*BASIS;
    let deq: Vec<i128> = levels.iter().zip(steps).map(|(&l, &s)| l as i128 * s).collect();
    let mut tmp = [0i128; N * N];
    for n in 0..N {
        for l in 0..N {
            tmp[n * N + l] = (0..N).map(|k| b[k][n] as i128 * deq[k * N + l]).sum();
        }
    }
    let mut out = [0i64; N * N];
    for n in 0..N {
        for m in 0..N {
            let acc: i128 = (0..N).map(|l| tmp[n * N + l] * b[l][m] as i128).sum();
            let v = div_round(acc, 1i128 << (2 * BASIS_BITS + 9)) as i64 + mid;
            out[n * N + m] = v.clamp(0, max);
        }
    }
    out
}

fn padded(n: usize) -> usize {
    n.div_ceil(N) * N
}

/// Blocks of a plane in raster order, centred on `mid`, edges replicated.
fn blocks(plane: &Plane, mid: i64) -> Vec<Block> {
    let (w, h) = plane.dims();
    let (bw, bh) = (padded(w) / N, padded(h) / N);
    (0..bw * bh)
        .into_par_iter()
        .map(|i| {
            let (bx, by) = (i % bw, i / bw);
            let mut blk = [0i64; N * N];
            for y in 0..N {
                let sy = (by * N + y).min(h - 1);
                let row = plane.row(sy);
                for x in 0..N {
                    blk[y * N + x] = row[(bx * N + x).min(w - 1)] as i64 - mid;
                }
            }
            blk
        })
        .collect()
}

fn assemble(w: usize, h: usize, blocks: &[Block]) -> Plane {
    let bw = padded(w) / N;
    Plane::from_fn(w, h, |x, y| blocks[(y / N) * bw + x / N][(y % N) * N + x % N] as u16)
}

struct BitWriter {
    bytes: Vec<u8>,
    acc: u64,
    nbits: u32,
}

impl BitWriter {
    fn new() -> Self {
        BitWriter {
            bytes: Vec::new(),
            acc: 0,
            nbits: 0,
        }
    }

    fn put(&mut self, value: u64, n: u32) {
        debug_assert!(n <= 32);
        self.acc = (self.acc << n) | (value & ((1u64 << n) - 1));
        self.nbits += n;
        while self.nbits >= 8 {
            self.nbits -= 8;
            self.bytes.push((self.acc >> self.nbits) as u8);
        }
        self.acc &= (1u64 << self.nbits) - 1;
    }

    fn ue(&mut self, v: u32) {
        let x = v as u64 + 1;
        let len = 64 - x.leading_zeros();
        self.put(0, len - 1);
        self.put(x, len);
    }

    fn se(&mut self, v: i32) {
        let mapped = if v > 0 { 2 * v as i64 - 1 } else { -2 * v as i64 };
        self.ue(mapped as u32);
    }

    fn align(&mut self) {
        if self.nbits > 0 {
            self.put(0, 8 - self.nbits);
        }
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BitReader<'_> {
    fn bit(&mut self) -> Result<u64> {
        let byte = *self
            .bytes
            .get(self.pos / 8)
            .ok_or_else(|| CodecError::Mock("bitstream ends mid-frame".into()))?;
        let b = (byte >> (7 - self.pos % 8)) & 1;
        self.pos += 1;
        Ok(b as u64)
    }

    fn ue(&mut self) -> Result<u32> {
        let mut zeros = 0;
        while self.bit()? == 0 {
            zeros += 1;
            if zeros > 32 {
                return Err(CodecError::Mock("corrupt exp-Golomb code".into()));
            }
        }
        let mut x = 1u64;
        for _ in 0..zeros {
            x = (x << 1) | self.bit()?;
        }
        u32::try_from(x - 1).map_err(|_| CodecError::Mock("exp-Golomb value overflows".into()))
    }

    fn se(&mut self) -> Result<i32> {
        let k = self.ue()? as i64;
        let v = if k % 2 == 1 { (k + 1) / 2 } else { -k / 2 };
        Ok(v as i32)
    }

    fn align(&mut self) {
        self.pos = self.pos.div_ceil(8) * 8;
    }
}

fn write_levels(w: &mut BitWriter, levels: &Levels) {
    let zz = &*ZIGZAG;
    let count = zz.iter().rposition(|&i| levels[i] != 0).map_or(0, |p| p + 1);
    w.ue(count as u32);
    for &i in &zz[..count] {
        w.se(levels[i]);
    }
}

fn read_levels(r: &mut BitReader) -> Result<Levels> {
    let count = r.ue()? as usize;
    if count > N * N {
        return Err(CodecError::Mock(format!("block claims {count} coefficients")));
    }
    let mut levels = [0i32; N * N];
    for &i in &ZIGZAG[..count] {
        levels[i] = r.se()?;
    }
    Ok(levels)
}

fn plane_dims(spec: &VideoSpec) -> [(usize, usize); 3] {
    let c = spec.chroma_dims();
    [(spec.width, spec.height), c, c]
}

/// Incremental encoder; the bitstream is kept in memory.
pub struct MockEncoder {
    spec: VideoSpec,
    qp: i32,
    steps: [i128; N * N],
    out: BitWriter,
    frames: usize,
}

impl MockEncoder {
    pub fn new(spec: VideoSpec, qp: i32) -> Result<Self> {
        check_qp(qp)?;
        Ok(MockEncoder {
            spec: spec.with_frame_count(0),
            qp,
            steps: steps(qp),
            out: BitWriter::new(),
            frames: 0,
        })
    }

    /// Codes one frame and returns its reconstruction.
    pub fn encode_frame(&mut self, frame: &FrameBuffer) -> Result<FrameBuffer> {
        if !frame.spec().same_format(&self.spec) {
            return Err(CodecError::Mock(format!(
                "frame format {} differs from stream format {}",
                frame.spec(),
                self.spec
            )));
        }
        let mid = 1i64 << (self.spec.bit_depth - 1);
        let max = self.spec.max_sample() as i64;
        let mut planes = Vec::with_capacity(3);
        for plane in frame.planes() {
            let levels: Vec<Levels> = blocks(plane, mid)
                .par_iter()
                .map(|b| quantise(&forward(b), &self.steps))
                .collect();
            for l in &levels {
                write_levels(&mut self.out, l);
            }
            let recon: Vec<Block> = levels.par_iter().map(|l| reconstruct(l, &self.steps, mid, max)).collect();
            planes.push(assemble(plane.width(), plane.height(), &recon));
        }
        self.out.align();
        self.frames += 1;
        let [y, cb, cr]: [Plane; 3] = planes.try_into().expect("three planes");
        Ok(FrameBuffer::new(*frame.spec(), y, cb, cr)?)
    }

    /// Header plus payload.
    pub fn finish(self) -> Vec<u8> {
        let s = &self.spec;
        let mut out = Vec::with_capacity(HEADER_LEN + self.out.bytes.len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&(s.width as u32).to_le_bytes());
        out.extend_from_slice(&(s.height as u32).to_le_bytes());
        out.push(s.bit_depth);
        out.extend_from_slice(&s.fps_num.to_le_bytes());
        out.extend_from_slice(&s.fps_den.to_le_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.push(self.qp as u8);
        out.extend_from_slice(&self.out.bytes);
        out
    }
}

/// Bitstream and reconstruction of a whole sequence.
#[derive(Debug, Clone)]
pub struct MockEncoded {
    pub bitstream: Vec<u8>,
    pub decoded: Vec<FrameBuffer>,
}

/// Encodes a frame sequence held in memory.
pub fn mock_encode<I>(frames: I, qp: i32) -> Result<MockEncoded>
where
    I: IntoIterator<Item = crate::media::Result<FrameBuffer>>,
{
    check_qp(qp)?;
    let mut enc: Option<MockEncoder> = None;
    let mut decoded = Vec::new();
    for frame in frames {
        let frame = frame?;
        let e = match &mut enc {
            Some(e) => e,
            None => enc.insert(MockEncoder::new(*frame.spec(), qp)?),
        };
        decoded.push(e.encode_frame(&frame)?);
    }
    let enc = enc.ok_or_else(|| CodecError::Mock("no frames to encode".into()))?;
    Ok(MockEncoded {
        bitstream: enc.finish(),
        decoded,
    })
}

/// Stream parameters stored in a mock bitstream header.
pub fn parse_header(bytes: &[u8]) -> Result<(VideoSpec, i32)> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(CodecError::Mock("not a mock codec bitstream".into()));
    }
    if bytes[4] != VERSION {
        return Err(CodecError::Mock(format!("unsupported bitstream version {}", bytes[4])));
    }
    let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    let spec = VideoSpec::new(u32_at(5) as usize, u32_at(9) as usize, bytes[13], u32_at(14), u32_at(18))?
        .with_frame_count(u32_at(22) as usize);
    let qp = bytes[26] as i32;
    check_qp(qp)?;
    Ok((spec, qp))
}

/// Frame-by-frame decoder over an in-memory bitstream.
pub struct MockDecoder<'a> {
    spec: VideoSpec,
    steps: [i128; N * N],
    reader: BitReader<'a>,
    remaining: usize,
}

impl<'a> MockDecoder<'a> {
    pub fn new(bytes: &'a [u8]) -> Result<Self> {
        let (spec, qp) = parse_header(bytes)?;
        Ok(MockDecoder {
            remaining: spec.frame_count.unwrap_or(0),
            spec,
            steps: steps(qp),
            reader: BitReader {
                bytes: &bytes[HEADER_LEN..],
                pos: 0,
            },
        })
    }

    pub fn spec(&self) -> &VideoSpec {
        &self.spec
    }

    fn decode_frame(&mut self) -> Result<FrameBuffer> {
        let mid = 1i64 << (self.spec.bit_depth - 1);
        let max = self.spec.max_sample() as i64;
        let mut planes = Vec::with_capacity(3);
        for (w, h) in plane_dims(&self.spec) {
            let count = (padded(w) / N) * (padded(h) / N);
            let levels = (0..count)
                .map(|_| read_levels(&mut self.reader))
                .collect::<Result<Vec<_>>>()?;
            let recon: Vec<Block> = levels.par_iter().map(|l| reconstruct(l, &self.steps, mid, max)).collect();
            planes.push(assemble(w, h, &recon));
        }
        self.reader.align();
        let [y, cb, cr]: [Plane; 3] = planes.try_into().expect("three planes");
        Ok(FrameBuffer::new(self.spec, y, cb, cr)?)
    }
}

impl Iterator for MockDecoder<'_> {
    type Item = Result<FrameBuffer>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        let r = self.decode_frame();
        if r.is_err() {
            self.remaining = 0;
        }
        Some(r)
    }
}

/// Decodes a whole bitstream.
pub fn mock_decode(bytes: &[u8]) -> Result<Vec<FrameBuffer>> {
    MockDecoder::new(bytes)?.collect()
}

/// Encodes a video file, writing the bitstream and optionally the
/// reconstruction. Returns the input spec with its frame count.
pub fn mock_encode_file(
    input: &Path,
    raw: Option<&RawFormat>,
    bitstream: &Path,
    recon: Option<(&Path, Container)>,
    qp: i32,
) -> Result<VideoSpec> {
    let mut reader = VideoReader::open(input, raw)?;
    let spec = *reader.spec();
    let mut enc = MockEncoder::new(spec, qp)?;
    let mut writer = recon.map(|(p, c)| VideoWriter::create(p, spec, c)).transpose()?;
    for frame in reader.frames() {
        let rec = enc.encode_frame(&frame?)?;
        if let Some(w) = &mut writer {
            w.write_frame(&rec)?;
        }
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    let frames = enc.frames;
    std::fs::write(bitstream, enc.finish()).map_err(io_err(bitstream))?;
    Ok(spec.with_frame_count(frames))
}

/// Decodes a bitstream file into a video file.
pub fn mock_decode_file(bitstream: &Path, output: &Path, container: Container) -> Result<VideoSpec> {
    let bytes = std::fs::read(bitstream).map_err(io_err(bitstream))?;
    let dec = MockDecoder::new(&bytes)?;
    let spec = *dec.spec();
    let mut writer = VideoWriter::create(output, spec.with_frame_count(0), container)?;
    for frame in dec {
        writer.write_frame(&frame?)?;
    }
    writer.finish()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::plane_mse;
    use proptest::prelude::*;

    fn spec(w: usize, h: usize, depth: u8) -> VideoSpec {
        VideoSpec::new(w, h, depth, 30, 1).unwrap()
    }

    fn textured(spec: VideoSpec, t: usize) -> FrameBuffer {
        let max = spec.max_sample() as f64;
        let f = |x: usize, y: usize, s: f64| {
            let v = 0.5 + 0.2 * ((x as f64 + 1.7 * t as f64) * 0.31 * s).sin() * ((y as f64) * 0.17).cos()
                + 0.15 * (((x * 7 + y * 13 + t * 3) % 17) as f64 / 17.0 - 0.5);
            (v * max).round().clamp(0.0, max) as u16
        };
        let (cw, ch) = spec.chroma_dims();
        FrameBuffer::new(
            spec,
            Plane::from_fn(spec.width, spec.height, |x, y| f(x, y, 1.0)),
            Plane::from_fn(cw, ch, |x, y| f(x, y, 0.5)),
            Plane::from_fn(cw, ch, |x, y| f(y, x, 0.7)),
        )
        .unwrap()
    }

    #[test]
    fn basis_is_nearly_orthonormal() {
        let b = &*BASIS;
        let one = (1i128 << (2 * BASIS_BITS)) as f64;
        for i in 0..N {
            for j in 0..N {
                let dot: i128 = (0..N).map(|n| b[i][n] as i128 * b[j][n] as i128).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot as f64 / one - want).abs() < 1e-5, "{i} {j}");
            }
            if i > 0 {
                assert_eq!(b[i].iter().sum::<i64>(), 0, "row {i} must cancel on flat input");
            }
        }
    }

    #[test]
    fn zigzag_is_a_permutation() {
        let mut seen = *ZIGZAG;
        seen.sort_unstable();
        assert_eq!(seen.to_vec(), (0..64).collect::<Vec<_>>());
        assert_eq!(&ZIGZAG[..6], &[0, 1, 8, 16, 9, 2]);
    }

    #[test]
    fn steps_follow_the_exponential_law() {
        for qp in MIN_QP..=MAX_QP {
            let ideal = 2f64.powf((qp - 4) as f64 / 6.0);
            assert!((quant_step(qp) / ideal - 1.0).abs() < 0.01, "qp {qp}");
        }
        assert_eq!(quant_step(4), 1.0);
    }

    #[test]
    fn exp_golomb_round_trip() {
        let mut w = BitWriter::new();
        let vals = [0, 1, -1, 2, -2, 1000, -70000, i32::MAX / 4];
        for &v in &vals {
            w.se(v);
        }
        w.ue(0);
        w.ue(12345);
        w.align();
        let mut r = BitReader { bytes: &w.bytes, pos: 0 };
        for &v in &vals {
            assert_eq!(r.se().unwrap(), v);
        }
        assert_eq!(r.ue().unwrap(), 0);
        assert_eq!(r.ue().unwrap(), 12345);
    }

    #[test]
    fn qp_range_is_enforced() {
        let s = spec(16, 16, 8);
        assert!(MockEncoder::new(s, -1).is_err());
        assert!(MockEncoder::new(s, 52).is_err());
        assert!(mock_encode(Vec::new(), 22).is_err());
    }

    #[test]
    fn lossless_when_step_is_at_most_one() {
        for depth in [8, 10] {
            let s = spec(24, 20, depth);
            let frames: Vec<_> = (0..2).map(|t| textured(s, t)).collect();
            for qp in 0..=4 {
                let enc = mock_encode(frames.iter().cloned().map(Ok), qp).unwrap();
                assert_eq!(enc.decoded, frames, "depth {depth} qp {qp}");
            }
        }
    }

    #[test]
    fn flat_content_is_exact_at_every_qp() {
        for (depth, values) in [(8u8, [0u16, 1, 127, 128, 200, 255]), (10, [0, 3, 511, 512, 700, 1023])] {
            let s = spec(16, 8, depth);
            for &v in &values {
                let f = FrameBuffer::constant(s, v, values[1], values[5]).unwrap();
                for qp in MIN_QP..=MAX_QP {
                    let enc = mock_encode([Ok(f.clone())], qp).unwrap();
                    assert_eq!(enc.decoded[0], f, "depth {depth} value {v} qp {qp}");
                }
            }
        }
    }

    #[test]
    fn decoder_matches_encoder_reconstruction() {
        let s = spec(36, 22, 10);
        let frames: Vec<_> = (0..3).map(|t| textured(s, t)).collect();
        let enc = mock_encode(frames.into_iter().map(Ok), 30).unwrap();
        let decoded = mock_decode(&enc.bitstream).unwrap();
        for (d, e) in decoded.iter().zip(&enc.decoded) {
            assert_eq!(d.planes(), e.planes());
        }
        let (hdr, qp) = parse_header(&enc.bitstream).unwrap();
        assert_eq!(hdr, s.with_frame_count(3));
        assert_eq!(qp, 30);
        assert!(mock_decode(&enc.bitstream[..enc.bitstream.len() - 5]).is_err());
        assert!(mock_decode(b"nope").is_err());
    }

    #[test]
    fn rate_and_distortion_are_monotone_in_qp() {
        let s = spec(64, 48, 8);
        let frames: Vec<_> = (0..2).map(|t| textured(s, t)).collect();
        let mut last: Option<(usize, f64)> = None;
        for qp in [17, 22, 27, 32, 37, 42] {
            let enc = mock_encode(frames.iter().cloned().map(Ok), qp).unwrap();
            let mse: f64 = frames.iter().zip(&enc.decoded).map(|(a, b)| plane_mse(a.luma(), b.luma())).sum();
            assert!(mse > 0.0, "qp {qp} should be lossy");
            if let Some((bytes, prev)) = last {
                assert!(enc.bitstream.len() < bytes, "qp {qp}");
                assert!(mse > prev, "qp {qp}");
            }
            last = Some((enc.bitstream.len(), mse));
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = spec(20, 12, 8);
        let frames: Vec<_> = (0..3).map(|t| textured(s, t)).collect();
        let input = dir.path().join("in.y4m");
        crate::media::write_video(&frames, &input, Container::Y4m).unwrap();
        let bs = dir.path().join("s.bin");
        let rec = dir.path().join("rec.yuv");
        let out_spec = mock_encode_file(&input, None, &bs, Some((&rec, Container::Raw)), 27).unwrap();
        assert_eq!(out_spec.frame_count, Some(3));
        let dec = dir.path().join("dec.y4m");
        mock_decode_file(&bs, &dec, Container::Y4m).unwrap();
        let fmt = RawFormat {
            width: 20,
            height: 12,
            bit_depth: 8,
            fps_num: 30,
            fps_den: 1,
        };
        let a: Vec<_> = VideoReader::open(&rec, Some(&fmt)).unwrap().frames().map(|f| f.unwrap()).collect();
        let b: Vec<_> = VideoReader::open(&dec, None).unwrap().frames().map(|f| f.unwrap()).collect();
        assert_eq!(a, b);
        let again = dir.path().join("s2.bin");
        mock_encode_file(&input, None, &again, None, 27).unwrap();
        assert_eq!(std::fs::read(&bs).unwrap(), std::fs::read(&again).unwrap());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_blocks_lossless_at_unit_step(data in proptest::collection::vec(0u16..1024, 16 * 16), qp in 0i32..=4) {
            let s = spec(16, 16, 10);
            let luma = Plane::new(16, 16, data.clone()).unwrap();
            let chroma = Plane::new(8, 8, data[..64].to_vec()).unwrap();
            let f = FrameBuffer::new(s, luma, chroma.clone(), chroma).unwrap();
            let enc = mock_encode([Ok(f.clone())], qp).unwrap();
            prop_assert_eq!(&enc.decoded[0], &f);
        }
    }
}
