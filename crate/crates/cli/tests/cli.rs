use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rdbench::media::{write_video, Container, FrameBuffer, Plane, VideoSpec};
use serde_json::{json, Value};
use tempfile::TempDir;

fn rdbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rdbench")).args(args).output().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn write_clip(path: &Path, w: usize, h: usize, frames: usize) {
    let spec = VideoSpec::new(w, h, 8, 30, 1).unwrap();
    let v: Vec<_> = (0..frames)
        .map(|t| {
            let y = Plane::from_fn(w, h, |x, y| ((x * 7 + y * 3 + t * 5) % 200 + ((x * y) % 13) * 4) as u16);
            let c = Plane::from_fn(w / 2, h / 2, |x, y| (100 + (x + y + t) % 40) as u16);
            FrameBuffer::new(spec, y, c.clone(), c).unwrap()
        })
        .collect();
    write_video(&v, path, Container::from_path(path)).unwrap();
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unknown_flag_prints_usage_and_exits_1() {
    let o = rdbench(&["bd", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(rdbench(&["nonsense"]).status.code(), Some(1));
    assert_eq!(rdbench(&["--help"]).status.code(), Some(0));
}

#[test]
fn bd_prints_result_json() {
    let dir = TempDir::new().unwrap();
    let curve = |label: &str, k: f64| {
        json!({"label": label, "points": [
            {"bitrate_mbps": 1.0 * k, "metrics": {"psnr_y": 30.0}},
            {"bitrate_mbps": 2.0 * k, "metrics": {"psnr_y": 33.0}},
            {"bitrate_mbps": 4.0 * k, "metrics": {"psnr_y": 35.5}},
            {"bitrate_mbps": 8.0 * k, "metrics": {"psnr_y": 37.0}},
        ]})
    };
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    fs::write(&a, curve("anchor", 1.0).to_string()).unwrap();
    fs::write(&b, curve("test", 2.0).to_string()).unwrap();
    let r = stdout_json(&rdbench(&["bd", "--anchor", s(&a), "--test", s(&b), "--metric", "psnr_y"]));
    assert!((r["value"].as_f64().unwrap() - 100.0).abs() < 1e-6, "{r}");
    assert_eq!(r["kind"], "bd_rate_percent");

    let r = stdout_json(&rdbench(&["bd", "--anchor", s(&a), "--test", s(&a), "--mode", "metric", "--interp", "poly"]));
    assert_eq!(r["value"].as_f64(), Some(0.0));

    let r = stdout_json(&rdbench(&["bd", "--anchor", s(&a), "--test", s(&b), "--mode", "metric", "--interval", "-3"]));
    assert!(r["insufficient_data"].is_string(), "{r}");

    let o = rdbench(&["--json-errors", "bd", "--anchor", s(&a), "--test", s(&b), "--metric", "vmaf"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "validation");
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
}

#[test]
fn media_commands_round_trip() {
    let dir = TempDir::new().unwrap();
    let src = dir.path().join("src.y4m");
    write_clip(&src, 32, 32, 3);
    let bits = dir.path().join("src.bin");
    let recon = dir.path().join("recon.y4m");
    let dec = dir.path().join("dec.yuv");
    let enc = stdout_json(&rdbench(&["mock-encode", "--input", s(&src), "--output", s(&bits), "--qp", "30", "--recon", s(&recon)]));
    assert_eq!(enc["bytes"].as_u64(), Some(fs::metadata(&bits).unwrap().len()));
    stdout_json(&rdbench(&["mock-decode", "--input", s(&bits), "--output", s(&dec)]));
    assert_eq!(fs::metadata(&dec).unwrap().len(), 32 * 32 * 3 / 2 * 3);

    let m = stdout_json(&rdbench(&[
        "metrics", "--reference", s(&recon), "--test", s(&dec), "--raw-size", "32x32", "--raw-fps", "30",
    ]));
    assert_eq!(m["aggregates"]["psnr_y_mean"], "inf");

    let m = stdout_json(&rdbench(&["metrics", "--reference", s(&src), "--test", s(&recon), "--per-frame"]));
    assert_eq!(m["per_frame"].as_array().unwrap().len(), 3);
    assert!(m["aggregates"]["ssim_mean"].as_f64().unwrap() < 1.0);

    let up = dir.path().join("up.y4m");
    let r = stdout_json(&rdbench(&["resample", "--input", s(&src), "--output", s(&up), "--size", "64x48"]));
    assert_eq!((r["width"].as_u64(), r["height"].as_u64()), (Some(64), Some(48)));
    let t = stdout_json(&rdbench(&["siti", "--input", s(&up)]));
    assert!(t["si"].as_f64().unwrap() > 0.0);

    let o = rdbench(&["siti", "--input", s(&dec)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--raw-size"));
}

fn experiment(dir: &Path, extra: Value) -> std::path::PathBuf {
    let src = dir.join("clip.y4m");
    write_clip(&src, 32, 32, 2);
    let mut cfg = json!({
        "sequences": [{"name": "clip", "source": "clip.y4m"}],
        "approaches": [
            {"label": "simulcast", "kind": "simulcast", "codec": "mock", "qps": [22, 27, 32, 37]},
            {"label": "lanczos", "kind": "prepost", "codec": "mock", "qps": [17, 22, 27, 32], "upscaler": "lanczos:3"},
        ],
        "comparisons": [{"anchor": "simulcast", "test": "lanczos", "intervals": true, "interval_bounds": ["all"]}],
        "output_dir": "out",
        "workers": 2,
    });
    if let (Some(c), Some(e)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in e {
            c.insert(k.clone(), v.clone());
        }
    }
    let path = dir.join("exp.json");
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path
}

#[test]
fn sweep_then_report() {
    let dir = TempDir::new().unwrap();
    let cfg = experiment(dir.path(), json!({}));
    let first = stdout_json(&rdbench(&["sweep", "--config", s(&cfg)]));
    assert_eq!(first["cells_total"], 8);
    assert_eq!(first["cells_executed"], 8);
    let again = stdout_json(&rdbench(&["sweep", "--config", s(&cfg)]));
    assert_eq!(again["invocations"], 0);
    assert_eq!(again["cells_resumed"], 8);

    let text = rdbench(&["report", "--config", s(&cfg)]);
    assert!(text.status.success(), "{}", String::from_utf8_lossy(&text.stderr));
    let text = String::from_utf8(text.stdout).unwrap();
    assert!(text.contains("BD-rate (%) of lanczos against simulcast"));
    assert!(text.lines().any(|l| l.starts_with("Average")));
    assert!(text.contains("BD-metric per bit-rate interval"));

    let out = dir.path().join("report");
    let files = stdout_json(&rdbench(&["report", "--config", s(&cfg), "--format", "csv", "--out", s(&out)]));
    let names: Vec<String> = files
        .as_array()
        .unwrap()
        .iter()
        .map(|f| Path::new(f.as_str().unwrap()).file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert!(names.contains(&"bd_rate_lanczos_vs_simulcast.csv".to_string()), "{names:?}");
    assert!(names.contains(&"plot_clip__psnr_y.csv".to_string()));
    let plot = fs::read_to_string(out.join("plot_clip__psnr_y.csv")).unwrap();
    assert_eq!(plot.lines().next(), Some("bitrate_mbps,simulcast,lanczos"));
    let before = fs::read(out.join("bd_rate_lanczos_vs_simulcast.csv")).unwrap();
    stdout_json(&rdbench(&["report", "--config", s(&cfg), "--format", "csv", "--out", s(&out)]));
    assert_eq!(fs::read(out.join("bd_rate_lanczos_vs_simulcast.csv")).unwrap(), before);

    let r = stdout_json(&rdbench(&["run", "--config", s(&cfg), "--approach", "lanczos"]));
    assert_eq!(r["cells_total"], 4);
    assert_eq!(r["invocations"], 0);
    assert_eq!(rdbench(&["run", "--config", s(&cfg), "--approach", "nope"]).status.code(), Some(1));
}

#[test]
fn failing_tool_exits_2_and_names_the_cell() {
    let dir = TempDir::new().unwrap();
    let cfg = experiment(
        dir.path(),
        json!({
            "tools": {
                "enc": {"name": "enc", "executable": "/bin/sh", "args": "-c 'echo encoder crashed >&2; exit 4'"},
                "dec": {"name": "dec", "executable": "/bin/sh", "args": "-c 'exit 0'"},
            },
            "approaches": [
                {"label": "ext", "kind": "simulcast", "codec": {"tools": {"encoder": "enc", "decoder": "dec"}}, "qps": [27]},
                {"label": "mock", "kind": "simulcast", "codec": "mock", "qps": [27]},
            ],
            "comparisons": [],
        }),
    );
    let o = rdbench(&["--json-errors", "run", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["kind"], "tool");
    assert_eq!(err["failed_cells"][0]["label"], "ext");
    assert_eq!(err["failed_cells"][0]["qp"], 27);
    assert!(err["error"].as_str().unwrap().contains("encoder crashed"));
    let summary: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["cells_executed"], 1);
}

#[test]
fn prepare_sr_data_with_mock_codec() {
    let dir = TempDir::new().unwrap();
    let hr = dir.path().join("hr");
    fs::create_dir(&hr).unwrap();
    for i in 0..3 {
        write_clip(&hr.join(format!("{i}.y4m")), 32, 32, 1);
    }
    let out = dir.path().join("pairs");
    let r = stdout_json(&rdbench(&["prepare-sr-data", "--hr-dir", s(&hr), "--out", s(&out), "--qps", "22,37"]));
    assert_eq!(r["pairs"], 6);
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("pairs.json")).unwrap()).unwrap();
    assert_eq!(m["pairs"].as_array().unwrap().len(), 6);
}

#[test]
fn shipped_replication_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/replication.json");
    let cfg = rdbench::pipeline::ExperimentConfig::load(&path).unwrap();
    assert_eq!(cfg.sequences.len(), 5);
    assert_eq!(cfg.pipelines().unwrap().len(), 25);
}
