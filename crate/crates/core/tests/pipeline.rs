mod common;

use std::fs;
use std::path::{Path, PathBuf};

use rdbench::bd::{bd_metric, Interp, PSNR_Y};
use rdbench::codec::derive_bitrate;
use rdbench::media::{Container, VideoReader};
use rdbench::metrics::{score_sequence, Aggregation};
use rdbench::pipeline::{
    collect_hr_items, prepare_sr_training_pairs, run_pipeline, run_prepost, sweep, CodecBackend, ExperimentConfig,
    PipelineConfig, PipelineError, Runner, SweepOptions,
};
use rdbench::resample::{resample_file, FilterKind};
use serde_json::json;
use tempfile::TempDir;

fn source(dir: &Path, name: &str, w: usize, h: usize, frames: usize) -> PathBuf {
    let p = dir.join(format!("{name}.y4m"));
    common::write_textured(&p, w, h, 8, frames, name.len() as u64);
    p
}

fn experiment(v: serde_json::Value) -> ExperimentConfig {
    let cfg: ExperimentConfig = serde_json::from_value(v).unwrap();
    cfg.validate().unwrap();
    cfg
}

fn single(dir: &Path, approach: serde_json::Value) -> PipelineConfig {
    let src = source(dir, "clip", 64, 32, 3);
    let cfg = experiment(json!({
        "sequences": [{"name": "clip", "source": src}],
        "approaches": [approach],
        "output_dir": dir.join("out"),
    }));
    cfg.pipelines().unwrap().remove(0)
}

#[test]
fn simulcast_rate_is_sum_of_both_streams() {
    let dir = TempDir::new().unwrap();
    let cfg = single(
        dir.path(),
        json!({"label": "sim", "kind": "simulcast", "codec": "mock", "qps": [22, 32, 42]}),
    );
    let r = run_pipeline(&Runner::new(&cfg.output_dir), &cfg).unwrap();
    assert!(r.is_complete());
    assert_eq!(r.curve.len(), 3);
    for cell in &r.cells {
        assert_eq!(cell.streams.len(), 2);
        let sum: f64 = cell.streams.iter().map(|s| s.bitrate_mbps).sum();
        assert_eq!(cell.point.bitrate_mbps, sum);
        for s in &cell.streams {
            let path = cfg.output_dir.join(&s.path);
            assert_eq!(fs::metadata(&path).unwrap().len(), s.bytes);
            let spec = VideoReader::open(path.with_file_name(format!("{}_decoded.y4m", s.role)), None);
            assert!(spec.is_err(), "decoded files are removed by default");
        }
        assert!(cell.streams.iter().all(|s| s.frames == 3));
        assert!(cell.low_res_quality.is_some());
    }
    // Sorted by rate, quality rising with rate.
    let psnr = r.curve.series(PSNR_Y).unwrap();
    assert!(psnr.1.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn low_res_source_is_derived_once() {
    let dir = TempDir::new().unwrap();
    let cfg = single(
        dir.path(),
        json!({"label": "sim", "kind": "simulcast", "codec": "mock", "qps": [22, 27, 32, 37]}),
    );
    let r = run_pipeline(&Runner::new(&cfg.output_dir), &cfg).unwrap();
    let cache: Vec<_> = fs::read_dir(cfg.output_dir.join("cache/clip"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "y4m"))
        .collect();
    assert_eq!(cache.len(), 1);
    let shas: Vec<_> = r
        .cells
        .iter()
        .flat_map(|c| c.artifacts.iter().filter(|a| a.role == "low_res_source"))
        .map(|a| a.sha256.clone())
        .collect();
    assert_eq!(shas.len(), 4);
    assert!(shas.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn given_low_res_source_must_be_half_size() {
    let dir = TempDir::new().unwrap();
    let src = source(dir.path(), "clip", 64, 32, 2);
    let wrong = source(dir.path(), "small", 16, 16, 2);
    let cfg = experiment(json!({
        "sequences": [{"name": "clip", "source": src, "low_res_source": wrong}],
        "approaches": [{"label": "sim", "kind": "simulcast", "codec": "mock", "qps": [30]}],
        "output_dir": dir.path().join("out"),
    }));
    let p = cfg.pipelines().unwrap().remove(0);
    let r = run_pipeline(&Runner::new(&p.output_dir), &p).unwrap();
    assert_eq!(r.failures.len(), 1);
    assert!(r.failures[0].message.contains("half-resolution source"), "{}", r.failures[0]);
    assert!(!r.failures[0].tool_failure);
}

#[test]
fn prepost_charges_only_the_low_res_stream() {
    let dir = TempDir::new().unwrap();
    let src = source(dir.path(), "clip", 64, 32, 3);
    let cfg = experiment(json!({
        "sequences": [{"name": "clip", "source": src}],
        "approaches": [
            {"label": "sim", "kind": "simulcast", "codec": "mock", "qps": [22, 32]},
            {"label": "pp", "kind": "prepost", "codec": "mock", "qps": [22, 32], "upscaler": "lanczos:3"},
        ],
        "output_dir": dir.path().join("out"),
    }));
    let out = sweep(&cfg, &SweepOptions::default()).unwrap();
    let (sim, pp) = (&out.results[0], &out.results[1]);
    for (a, b) in sim.cells.iter().zip(&pp.cells) {
        assert_eq!(b.streams.len(), 1);
        assert_eq!(b.point.bitrate_mbps, b.streams[0].bitrate_mbps);
        // Same half-resolution input and codec, so the same bitstream.
        assert_eq!(a.streams[0].sha256, b.streams[0].sha256);
        assert!(b.point.bitrate_mbps < a.point.bitrate_mbps);
    }
    assert_eq!(fs::read_dir(cfg.output_dir.join("cache/clip")).unwrap().count(), 2, "one file and its sidecar");
}

#[test]
fn lossless_prepost_equals_resampling_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = single(
        dir.path(),
        json!({"label": "pp", "kind": "prepost", "codec": "mock", "qps": [0, 4], "upscaler": "lanczos:3"}),
    );
    let r = run_prepost(&cfg).unwrap();
    assert!(r.is_complete(), "{:?}", r.failures);

    let half = dir.path().join("half.y4m");
    let back = dir.path().join("back.y4m");
    resample_file(&cfg.sequence.source, None, &half, Container::Y4m, (32, 16), FilterKind::DEFAULT_BICUBIC).unwrap();
    resample_file(&half, None, &back, Container::Y4m, (64, 32), FilterKind::DEFAULT_LANCZOS).unwrap();
    let mut a = VideoReader::open(&cfg.sequence.source, None).unwrap();
    let mut b = VideoReader::open(&back, None).unwrap();
    let s = score_sequence(a.frames(), b.frames(), Aggregation::default()).unwrap();
    for cell in &r.cells {
        assert_eq!(cell.point.metric(PSNR_Y), Some(s.psnr_y_mean()));
    }
}

#[test]
fn layered_mock_matches_simulcast_accounting() {
    let dir = TempDir::new().unwrap();
    let src = source(dir.path(), "clip", 64, 32, 3);
    let cfg = experiment(json!({
        "sequences": [{"name": "clip", "source": src}],
        "approaches": [
            {"label": "sim", "kind": "simulcast", "codec": "mock", "qps": [22, 27, 32, 37]},
            {"label": "shvc", "kind": "scalable", "codec": "layered_mock", "qps": [22, 27, 32, 37]},
        ],
        "output_dir": dir.path().join("out"),
        "workers": 3,
    }));
    let out = sweep(&cfg, &SweepOptions::default()).unwrap();
    let (sim, shvc) = (&out.results[0], &out.results[1]);
    for (a, b) in sim.cells.iter().zip(&shvc.cells) {
        assert_eq!(b.streams.len(), 1);
        let bytes: u64 = a.streams.iter().map(|s| s.bytes).sum();
        assert_eq!(b.streams[0].bytes, bytes);
        assert!((a.point.bitrate_mbps - b.point.bitrate_mbps).abs() <= 1e-12 * a.point.bitrate_mbps);
        assert_eq!(a.point.metrics, b.point.metrics);
    }
    let bd = bd_metric(&sim.curve, &shvc.curve, PSNR_Y, Interp::Pchip).unwrap();
    assert!(bd.value.abs() < 1e-9);
}

#[test]
fn sweep_counts_cells_and_resumes_without_work() {
    let dir = TempDir::new().unwrap();
    let seqs: Vec<_> = (0..5)
        .map(|i| {
            let name = format!("seq{i}");
            json!({"name": name, "source": source(dir.path(), &name, 32, 32, 2)})
        })
        .collect();
    let cfg = experiment(json!({
        "sequences": seqs,
        "approaches": [
            {"label": "sim", "kind": "simulcast", "codec": "mock", "qps": [22, 27, 32, 37]},
            {"label": "pp", "kind": "prepost", "codec": "mock", "qps": [22, 27, 32, 37], "upscaler": "lanczos:3"},
        ],
        "output_dir": dir.path().join("out"),
        "workers": 4,
    }));
    let first = sweep(&cfg, &SweepOptions::default()).unwrap();
    assert_eq!(first.cells_total, 40);
    assert_eq!(first.cells_executed, 40);
    assert!(first.failures.is_empty(), "{:?}", first.failures);
    assert_eq!(first.invocations, 20 * 2 + 20 * 2);

    let curve = cfg.output_dir.join("curves/seq3__pp.json");
    let before = fs::read(&curve).unwrap();
    let again = sweep(&cfg, &SweepOptions::default()).unwrap();
    assert_eq!(again.invocations, 0);
    assert_eq!(again.cells_resumed, 40);
    assert_eq!(fs::read(&curve).unwrap(), before);

    // A damaged bitstream invalidates just its cell.
    let victim = first.results[0].cells[1].streams[1].path.clone();
    fs::write(cfg.output_dir.join(victim), b"junk").unwrap();
    let third = sweep(&cfg, &SweepOptions::default()).unwrap();
    assert_eq!((third.cells_executed, third.cells_resumed), (1, 39));
    assert_eq!(fs::read(&curve).unwrap(), before);

    let clean = sweep(&cfg, &SweepOptions { workers: Some(1), clean: true }).unwrap();
    assert_eq!(clean.cells_executed, 40);
    assert_eq!(fs::read(&curve).unwrap(), before);
}

fn sh(name: &str, script: &str) -> serde_json::Value {
    json!({"name": name, "executable": "/bin/sh", "args": format!("-c '{script}' {name} {{input}} {{output}} {{qp}}"), "timeout_s": 30})
}

#[test]
fn failing_cells_are_isolated() {
    let dir = TempDir::new().unwrap();
    let src = source(dir.path(), "clip", 32, 32, 2);
    // Decoding brightens every sample by one so the reconstruction is lossy.
    let cfg = experiment(json!({
        "sequences": [{"name": "clip", "source": src}],
        "tools": {
            "enc": sh("enc", r#"if [ "$3" = 32 ]; then echo broken >&2; exit 3; fi; cp "$1" "$2""#),
            "dec": sh("dec", r#"tr "\\000-\\376" "\\001-\\377" < "$1" > "$2""#),
        },
        "approaches": [
            {"label": "ext", "kind": "simulcast", "codec": {"tools": {"encoder": "enc", "decoder": "dec"}}, "qps": [22, 32, 37]},
            {"label": "mock", "kind": "simulcast", "codec": "mock", "qps": [0, 22]},
        ],
        "output_dir": dir.path().join("out"),
        "workers": 2,
    }));
    let out = sweep(&cfg, &SweepOptions::default()).unwrap();
    let summary: Vec<_> = out.failures.iter().map(|f| (f.label.as_str(), f.qp, f.tool_failure)).collect();
    assert_eq!(summary, [("ext", 32, true), ("ext", 37, false), ("mock", 0, false)]);
    assert!(out.failures[0].message.contains("broken"), "{}", out.failures[0]);
    // The copying encoder gives every QP the same size.
    assert!(out.failures[1].message.contains("equals that of qp 22"));
    assert!(out.failures[2].message.contains("lossless"));

    let ext = &out.results[0];
    assert_eq!(ext.curve.len(), 1);
    let raw_bytes = (32 * 32 * 3 / 2 * 2) as u64;
    let spec = rdbench::media::VideoSpec::new(32, 32, 8, 30, 1).unwrap().with_frame_count(2);
    let expected = derive_bitrate(raw_bytes, &spec).unwrap() + derive_bitrate(raw_bytes / 4, &spec).unwrap();
    assert_eq!(ext.cells[0].point.bitrate_mbps, expected);
    assert!(ext.cells[0].point.metric(PSNR_Y).unwrap().is_finite());
    assert_eq!(out.results[1].curve.len(), 1);
}

#[test]
fn scalable_encoder_receives_the_base_layer() {
    let dir = TempDir::new().unwrap();
    let src = source(dir.path(), "clip", 64, 32, 2);
    let (full, base) = (64 * 32 * 3 / 2 * 2, 32 * 16 * 3 / 2 * 2);
    // The "layered" stream is the base layer followed by the full picture.
    let cfg = experiment(json!({
        "sequences": [{"name": "clip", "source": src}],
        "tools": {
            "enc": {"name": "enc", "executable": "/bin/sh",
                    "args": "-c 'cat \"$1\" \"$2\" > \"$3\"' enc {base_input} {input} {output}"},
            "dec": sh("dec", &format!(r#"tail -c {full} "$1" | tr "\\000-\\376" "\\001-\\377" > "$2""#)),
        },
        "approaches": [{"label": "shvc", "kind": "scalable", "codec": {"tools": {"encoder": "enc", "decoder": "dec"}}, "qps": [27]}],
        "output_dir": dir.path().join("out"),
    }));
    let p = cfg.pipelines().unwrap().remove(0);
    let r = run_pipeline(&Runner::new(&p.output_dir), &p).unwrap();
    assert!(r.is_complete(), "{:?}", r.failures);
    let cell = &r.cells[0];
    assert_eq!(cell.streams.len(), 1);
    assert_eq!(cell.streams[0].bytes, (full + base) as u64);
    assert!(cell.point.metric(PSNR_Y).unwrap().is_finite());
}

#[test]
fn upscaler_with_wrong_output_size_is_a_hard_error() {
    let dir = TempDir::new().unwrap();
    let src = source(dir.path(), "clip", 32, 32, 1);
    let cfg = experiment(json!({
        "sequences": [{"name": "clip", "source": src}],
        "tools": {"up": sh("up", r#"printf "YUV4MPEG2 W8 H8 F30:1 Ip A1:1 C420\nFRAME\n" > "$2"; head -c 96 /dev/zero >> "$2""#)},
        "approaches": [{"label": "sr", "kind": "prepost", "codec": "mock", "qps": [30], "upscaler": {"tool": "up"}}],
        "output_dir": dir.path().join("out"),
    }));
    let p = cfg.pipelines().unwrap().remove(0);
    let r = run_pipeline(&Runner::new(&p.output_dir), &p).unwrap();
    assert_eq!(r.failures.len(), 1);
    assert!(r.failures[0].message.contains("upscaled reconstruction"), "{}", r.failures[0]);
}

#[test]
fn sr_pairs_cover_items_and_qps() {
    let dir = TempDir::new().unwrap();
    let hr = dir.path().join("hr");
    fs::create_dir(&hr).unwrap();
    for i in 0..10 {
        source(&hr, &format!("img{i:02}"), 32, 32, 1);
    }
    // Its half-size version would have odd dimensions.
    source(&hr, "odd", 10, 10, 1);
    let items = collect_hr_items(&hr).unwrap();
    assert_eq!(items.len(), 11);
    let out = dir.path().join("sr");
    let tools = Default::default();
    let m = prepare_sr_training_pairs(&items, &CodecBackend::Mock, &tools, &[17, 22, 27, 32, 37], &out, FilterKind::DEFAULT_BICUBIC)
        .unwrap();
    assert_eq!(m.pairs.len(), 50);
    assert_eq!(m.failures.len(), 1);
    assert!(m.failures[0].hr_path.ends_with("odd.y4m"));
    assert!(m.pairs.iter().all(|p| p.lr_decoded_path.exists()));
    let written: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("pairs.json")).unwrap()).unwrap();
    assert_eq!(written["pairs"].as_array().unwrap().len(), 50);

    let err = prepare_sr_training_pairs(&items, &CodecBackend::Mock, &tools, &[], &out, FilterKind::DEFAULT_BICUBIC);
    assert!(matches!(err, Err(PipelineError::Config(_))));
}
