#![allow(dead_code)]

use std::f64::consts::TAU;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rdbench::media::{write_video, Container, FrameBuffer, Plane, VideoSpec};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_plane(rng: &mut ChaCha8Rng, width: usize, height: usize, max: u16) -> Plane {
    Plane::from_fn(width, height, |_, _| rng.random_range(0..=max))
}

/// Moving multi-frequency texture with mild noise, deterministic per seed.
pub fn textured_frames(spec: VideoSpec, frames: usize, seed: u64) -> Vec<FrameBuffer> {
    let mut rng = rng(seed);
    let max = spec.max_sample() as f64;
    let phase: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let (cw, ch) = spec.chroma_dims();
    (0..frames)
        .map(|t| {
            let t = t as f64;
            let mut luma = |x: usize, y: usize| {
                let (x, y) = (x as f64, y as f64);
                let v = 0.5
                    + 0.2 * (TAU * (x + 1.5 * t) / 37.0 + phase[0]).sin() * (TAU * (y - 0.5 * t) / 23.0).cos()
                    + 0.1 * (TAU * (0.7 * x + 0.3 * y + 2.0 * t) / 9.0 + phase[1]).sin()
                    + 0.05 * (TAU * (x - y) / 4.5 + phase[2]).sin()
                    + 0.1 * (x / spec.width as f64 - 0.5);
                let noise: f64 = rng.random_range(-0.01..0.01);
                ((v + noise) * max).round().clamp(0.0, max) as u16
            };
            let y = Plane::from_fn(spec.width, spec.height, &mut luma);
            let cb = Plane::from_fn(cw, ch, |x, y| {
                let v = 0.5 + 0.1 * (TAU * (x as f64 + t) / 19.0).sin() * (TAU * y as f64 / 13.0).cos();
                (v * max).round() as u16
            });
            let cr = Plane::from_fn(cw, ch, |x, y| {
                let v = 0.5 + 0.1 * (TAU * (y as f64 - t) / 17.0).sin();
                (v * max + (x % 3) as f64).round().min(max) as u16
            });
            FrameBuffer::new(spec, y, cb, cr).unwrap()
        })
        .collect()
}

pub fn write_textured(path: &Path, width: usize, height: usize, bit_depth: u8, frames: usize, seed: u64) -> VideoSpec {
    let spec = VideoSpec::new(width, height, bit_depth, 30, 1).unwrap();
    let v = textured_frames(spec, frames, seed);
    write_video(&v, path, Container::from_path(path)).unwrap();
    spec.with_frame_count(frames)
}

/// Smooth drifting gradients and low-frequency waves: content that survives
/// a 2:1 downscale largely intact, as natural high-resolution footage does.
pub fn write_smooth(path: &Path, width: usize, height: usize, frames: usize, seed: u64) -> VideoSpec {
    let spec = VideoSpec::new(width, height, 8, 30, 1).unwrap();
    let mut rng = rng(seed);
    let phase: [f64; 2] = std::array::from_fn(|_| rng.random_range(0.0..TAU));
    let (w, h) = (width as f64, height as f64);
    let (cw, ch) = spec.chroma_dims();
    let v: Vec<FrameBuffer> = (0..frames)
        .map(|t| {
            let t = t as f64;
            let y = Plane::from_fn(width, height, |x, y| {
                let (x, y) = (x as f64, y as f64);
                let v = 0.45
                    + 0.25 * (x + 2.0 * t) / w
                    + 0.15 * (TAU * (x - t) / 61.0 + phase[0]).sin() * (TAU * y / h).cos()
                    + 0.08 * (TAU * (0.6 * x + y + t) / 29.0 + phase[1]).sin();
                (v * 255.0).round().clamp(0.0, 255.0) as u16
            });
            let c = |off: f64| Plane::from_fn(cw, ch, move |x, y| (128.0 + 20.0 * (TAU * (x as f64 + y as f64 + t + off) / 47.0).sin()).round() as u16);
            FrameBuffer::new(spec, y, c(0.0), c(11.0)).unwrap()
        })
        .collect();
    write_video(&v, path, Container::from_path(path)).unwrap();
    spec.with_frame_count(frames)
}
