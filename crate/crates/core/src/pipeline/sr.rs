use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cell::Video;
use super::{io_err, CodecBackend, PipelineError, Result};
use crate::codec::{encode_with_tool, mock_encode_file, run_tool, Bindings, Placeholder, ToolTemplate};
use crate::media::{Container, VideoWriter};
use crate::resample::{resample_file, FilterKind};

/// A decoded low-resolution item and the high-resolution original it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrPair {
    pub hr_path: PathBuf,
    pub lr_decoded_path: PathBuf,
    pub qp: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrItemFailure {
    pub hr_path: PathBuf,
    /// None when the item failed before encoding.
    pub qp: Option<i32>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SrPairsManifest {
    pub pairs: Vec<SrPair>,
    pub failures: Vec<SrItemFailure>,
}

/// Y4M files directly inside `dir`, sorted by name.
pub fn collect_hr_items(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut items: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|e| e.eq_ignore_ascii_case("y4m")))
        .collect();
    items.sort();
    Ok(items)
}

fn code_item(
    lr: &Video,
    stem: &str,
    qp: i32,
    codec: &CodecBackend,
    tools: &BTreeMap<String, ToolTemplate>,
    out_dir: &Path,
) -> Result<PathBuf> {
    let tool = |name: &str| {
        tools
            .get(name)
            .ok_or_else(|| PipelineError::Config(format!("tool `{name}` is not defined")))
    };
    let name = format!("{stem}_qp{qp:02}");
    match codec {
        CodecBackend::Mock => {
            let bs = out_dir.join("bitstreams").join(format!("{name}.bin"));
            let dec = out_dir.join("decoded").join(format!("{name}.y4m"));
            mock_encode_file(&lr.path, lr.raw().as_ref(), &bs, Some((&dec, Container::Y4m)), qp)?;
            Ok(dec)
        }
        CodecBackend::Tools {
            encoder,
            decoder,
            container,
        } => {
            let ext = if *container == Container::Raw { "yuv" } else { "y4m" };
            let bs = out_dir.join("bitstreams").join(format!("{name}.bit"));
            let dec = out_dir.join("decoded").join(format!("{name}.{ext}"));
            let logs = out_dir.join("logs");
            encode_with_tool(tool(encoder)?, &lr.path, &lr.spec, qp, &bs, &logs.join(format!("{name}_encode.log")))?;
            let bindings = Bindings::new()
                .path(Placeholder::Input, &bs)
                .path(Placeholder::Output, &dec)
                .set(Placeholder::Qp, qp)
                .video(&lr.spec);
            run_tool(tool(decoder)?, &bindings, &logs.join(format!("{name}_decode.log")))?;
            Video::probe(&dec, Some(&lr.spec.raw_format()))?;
            Ok(dec)
        }
        CodecBackend::LayeredMock => Err(PipelineError::Config("SR pairs need a single-layer codec".into())),
    }
}

/// For each HR item: downscale by two, then encode and decode at every QP.
/// Items or QPs that fail are recorded and skipped. The manifest is also
/// written to `out_dir/pairs.json`.
pub fn prepare_sr_training_pairs(
    items: &[PathBuf],
    codec: &CodecBackend,
    tools: &BTreeMap<String, ToolTemplate>,
    qps: &[i32],
    out_dir: &Path,
    filter: FilterKind,
) -> Result<SrPairsManifest> {
    if qps.is_empty() {
        return Err(PipelineError::Config("the qp set is empty".into()));
    }
    if let Some(qp) = qps.iter().find(|q| !(0..=51).contains(*q)) {
        return Err(PipelineError::Config(format!("qp {qp} is out of [0, 51]")));
    }
    if items.is_empty() {
        return Err(PipelineError::Config("no HR items".into()));
    }
    filter.validate()?;
    let raw_out = matches!(codec, CodecBackend::Tools { container: Container::Raw, .. });
    for sub in ["lr", "bitstreams", "decoded", "logs"] {
        let p = out_dir.join(sub);
        fs::create_dir_all(&p).map_err(io_err(&p))?;
    }

    let mut manifest = SrPairsManifest::default();
    for hr in items {
        let stem = hr.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let lr = match downscale(hr, &stem, out_dir, filter, raw_out) {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping {}: {e}", hr.display());
                manifest.failures.push(SrItemFailure {
                    hr_path: hr.clone(),
                    qp: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        for &qp in qps {
            match code_item(&lr, &stem, qp, codec, tools, out_dir) {
                Ok(dec) => manifest.pairs.push(SrPair {
                    hr_path: hr.clone(),
                    lr_decoded_path: dec,
                    qp,
                }),
                Err(e) => {
                    log::warn!("{} qp {qp}: {e}", hr.display());
                    manifest.failures.push(SrItemFailure {
                        hr_path: hr.clone(),
                        qp: Some(qp),
                        message: e.to_string(),
                    });
                }
            }
        }
    }
    let path = out_dir.join("pairs.json");
    let text = serde_json::to_string_pretty(&manifest).expect("serialisable manifest") + "\n";
    fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

fn downscale(hr: &Path, stem: &str, out_dir: &Path, filter: FilterKind, raw_out: bool) -> Result<Video> {
    let src = Video::probe(hr, None)?;
    let half = src.spec.resized(src.spec.width / 2, src.spec.height / 2)?;
    let y4m = out_dir.join("lr").join(format!("{stem}.y4m"));
    let spec = resample_file(&src.path, None, &y4m, Container::Y4m, (half.width, half.height), filter)?;
    if !raw_out {
        return Video::probe(&y4m, None);
    }
    let yuv = y4m.with_extension("yuv");
    let lr = Video::probe(&y4m, None)?;
    let mut r = lr.reader()?;
    let mut w = VideoWriter::create(&yuv, spec, Container::Raw)?;
    for f in r.frames() {
        w.write_frame(&f?)?;
    }
    w.finish()?;
    Video::probe(&yuv, Some(&spec.raw_format()))
}
