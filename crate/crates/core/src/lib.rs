//! Rate-distortion benchmarking for video coding: raw and Y4M I/O, resampling,
//! quality metrics, Bjøntegaard-delta analysis, codec tool adapters, experiment
//! pipelines and report generation.

pub mod bd;
pub mod codec;
pub mod media;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod resample;
pub mod serde_util;
