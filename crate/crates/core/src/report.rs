//! Plot data and BD tables built from experiment results.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bd::{bd_metric_interval, bd_rate, IntervalOutcome, Interp, RDCurve, RateInterval, PSNR_Y, SSIM, VMAF};
use crate::pipeline::{ExperimentConfig, ExperimentResult};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no curves to plot")]
    NoCurves,
    #[error("curve `{label}` has no `{metric}` values")]
    MissingMetric { label: String, metric: String },
    #[error("no results for approach `{0}`")]
    UnknownLabel(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("unknown format `{0}` (expected text, csv or json)")]
    Format(String),
    #[error(transparent)]
    Bd(#[from] crate::bd::BdError),
    #[error(transparent)]
    Pipeline(#[from] crate::pipeline::PipelineError),
}

pub type Result<T, E = ReportError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    Csv,
    Json,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Text => "txt",
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(OutputFormat::Text),
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(ReportError::Format(s.to_string())),
        }
    }
}

/// How Average rows treat sequences without a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AveragePolicy {
    /// Mean over the sequences that have a value.
    #[default]
    Available,
    /// Missing values count as zero; the mean is over all sequences.
    MissingAsZero,
}

impl FromStr for AveragePolicy {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "available" => Ok(AveragePolicy::Available),
            "missing-as-zero" => Ok(AveragePolicy::MissingAsZero),
            _ => Err(ReportError::Format(s.to_string())),
        }
    }
}

/// Column mean under `policy`; `None` when no cell has a value.
pub fn column_mean(cells: &[Option<f64>], policy: AveragePolicy) -> Option<f64> {
    let present: Vec<f64> = cells.iter().flatten().copied().collect();
    if present.is_empty() {
        return None;
    }
    let n = match policy {
        AveragePolicy::Available => present.len(),
        AveragePolicy::MissingAsZero => cells.len(),
    };
    Some(present.iter().sum::<f64>() / n as f64)
}

pub fn metric_title(metric: &str) -> String {
    match metric {
        PSNR_Y => "PSNR-Y".into(),
        SSIM => "SSIM".into(),
        VMAF => "VMAF".into(),
        m => m.to_string(),
    }
}

/// Decimals used for a BD-metric delta.
pub fn delta_decimals(metric: &str) -> usize {
    if metric == SSIM {
        3
    } else {
        2
    }
}

fn fixed(v: Option<f64>, decimals: usize) -> Option<String> {
    v.map(|v| {
        let s = format!("{v:.decimals$}");
        // No "-0.00".
        if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
            s.trim_start_matches('-').to_string()
        } else {
            s
        }
    })
}

/// A table of pre-formatted cells; text and CSV renderings share the strings.
struct Grid {
    title: String,
    header: Vec<String>,
    rows: Vec<Vec<Option<String>>>,
    notes: Vec<String>,
}

impl Grid {
    fn text(&self) -> String {
        let cols = self.header.len();
        let cell = |r: &[Option<String>], i: usize| r.get(i).cloned().flatten().unwrap_or_else(|| "-".into());
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.len()).collect();
        for r in &self.rows {
            for (i, w) in widths.iter_mut().enumerate() {
                *w = (*w).max(cell(r, i).len());
            }
        }
        let line = |cells: Vec<String>| {
            let parts: Vec<String> = cells
                .iter()
                .enumerate()
                .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
                .collect();
            parts.join("  ").trim_end().to_string() + "\n"
        };
        let mut out = String::new();
        if !self.title.is_empty() {
            out += &self.title;
            out.push('\n');
        }
        out += &line(self.header.clone());
        out += &line(widths.iter().map(|w| "-".repeat(*w)).collect());
        for r in &self.rows {
            out += &line((0..cols).map(|i| cell(r, i)).collect());
        }
        for n in &self.notes {
            out += n;
            out.push('\n');
        }
        out
    }

    fn csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory csv");
        for r in &self.rows {
            w.write_record(r.iter().map(|c| c.as_deref().unwrap_or(""))).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}

/// Columnar RD data: a merged, sorted bitrate axis and one column per curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotData {
    pub metric: String,
    pub labels: Vec<String>,
    pub rows: Vec<PlotRow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub bitrate_mbps: f64,
    /// One entry per label; `None` where that curve has no point at this rate.
    pub values: Vec<Option<f64>>,
}

pub fn emit_curve_plotdata(curves: &[&RDCurve], metric: &str) -> Result<PlotData> {
    if curves.is_empty() {
        return Err(ReportError::NoCurves);
    }
    let mut by_rate: BTreeMap<u64, Vec<Option<f64>>> = BTreeMap::new();
    for (i, c) in curves.iter().enumerate() {
        if !c.has_metric(metric) {
            return Err(ReportError::MissingMetric {
                label: c.label().to_string(),
                metric: metric.to_string(),
            });
        }
        for p in c.points() {
            // Positive finite floats order like their bit patterns.
            let row = by_rate.entry(p.bitrate_mbps.to_bits()).or_insert_with(|| vec![None; curves.len()]);
            row[i] = p.metric(metric);
        }
    }
    Ok(PlotData {
        metric: metric.to_string(),
        labels: curves.iter().map(|c| c.label().to_string()).collect(),
        rows: by_rate
            .into_iter()
            .map(|(bits, values)| PlotRow {
                bitrate_mbps: f64::from_bits(bits),
                values,
            })
            .collect(),
    })
}

impl PlotData {
    fn grid(&self) -> Grid {
        let mut header = vec!["bitrate_mbps".to_string()];
        header.extend(self.labels.iter().cloned());
        Grid {
            title: String::new(),
            header,
            rows: self
                .rows
                .iter()
                .map(|r| {
                    let mut row = vec![Some(format!("{}", r.bitrate_mbps))];
                    row.extend(r.values.iter().map(|v| v.map(|v| format!("{v}"))));
                    row
                })
                .collect(),
            notes: Vec::new(),
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Text => format!("# {}\n{}", self.metric, self.grid().text()),
            OutputFormat::Csv => self.grid().csv(),
            OutputFormat::Json => to_json(self),
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serialisable report") + "\n"
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub sequence: String,
    pub cells: Vec<Option<f64>>,
}

/// BD-rate (%) of `test` against `anchor`: sequences by metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdMatrix {
    pub anchor: String,
    pub test: String,
    pub metrics: Vec<String>,
    pub rows: Vec<MatrixRow>,
    /// Why cells are missing.
    pub notes: Vec<String>,
    pub policy: AveragePolicy,
}

impl BdMatrix {
    pub fn averages(&self) -> Vec<Option<f64>> {
        (0..self.metrics.len())
            .map(|j| {
                let col: Vec<_> = self.rows.iter().map(|r| r.cells.get(j).copied().flatten()).collect();
                column_mean(&col, self.policy)
            })
            .collect()
    }

    fn grid(&self) -> Grid {
        let mut header = vec!["Sequence".to_string()];
        header.extend(self.metrics.iter().map(|m| metric_title(m)));
        let mut rows: Vec<Vec<Option<String>>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![Some(r.sequence.clone())];
                row.extend(r.cells.iter().map(|&v| fixed(v, 2)));
                row
            })
            .collect();
        let mut avg = vec![Some("Average".to_string())];
        avg.extend(self.averages().into_iter().map(|v| fixed(v, 2)));
        rows.push(avg);
        let mut notes = Vec::new();
        if !self.notes.is_empty() {
            notes.push(format!("- : not computed, excluded from the average ({})", policy_note(self.policy)));
            notes.extend(self.notes.iter().map(|n| format!("  {n}")));
        }
        Grid {
            title: format!("BD-rate (%) of {} against {}", self.test, self.anchor),
            header,
            rows,
            notes,
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Text => self.grid().text(),
            OutputFormat::Csv => self.grid().csv(),
            OutputFormat::Json => to_json(&Rendered {
                table: self,
                averages: self.averages(),
            }),
        }
    }
}

fn policy_note(p: AveragePolicy) -> &'static str {
    match p {
        AveragePolicy::Available => "averages over sequences with a value",
        AveragePolicy::MissingAsZero => "averages count missing cells as zero",
    }
}

#[derive(Serialize)]
struct Rendered<'a, T: Serialize> {
    #[serde(flatten)]
    table: &'a T,
    averages: Vec<Option<f64>>,
}

/// Results of one approach label per sequence, in first-seen order.
fn by_sequence<'a>(results: &'a [ExperimentResult], label: &str) -> Vec<(&'a str, &'a RDCurve)> {
    results
        .iter()
        .filter(|r| r.label == label)
        .map(|r| (r.sequence.as_str(), &r.curve))
        .collect()
}

fn sequences(results: &[ExperimentResult]) -> Vec<String> {
    let mut seen = Vec::new();
    for r in results {
        if !seen.contains(&r.sequence) {
            seen.push(r.sequence.clone());
        }
    }
    seen
}

fn check_label(results: &[ExperimentResult], label: &str) -> Result<()> {
    if results.iter().any(|r| r.label == label) {
        Ok(())
    } else {
        Err(ReportError::UnknownLabel(label.to_string()))
    }
}

pub fn emit_bd_matrix(
    results: &[ExperimentResult],
    anchor: &str,
    test: &str,
    metrics: &[&str],
    interp: Interp,
    policy: AveragePolicy,
) -> Result<BdMatrix> {
    check_label(results, anchor)?;
    check_label(results, test)?;
    let anchors = by_sequence(results, anchor);
    let tests = by_sequence(results, test);
    let mut notes = Vec::new();
    let mut rows = Vec::new();
    for seq in sequences(results) {
        let a = anchors.iter().find(|(s, _)| *s == seq).map(|x| x.1);
        let t = tests.iter().find(|(s, _)| *s == seq).map(|x| x.1);
        let cells = metrics
            .iter()
            .map(|&m| match (a, t) {
                (Some(a), Some(t)) => match bd_rate(a, t, m, interp) {
                    Ok(r) => Some(r.value),
                    Err(e) => {
                        notes.push(format!("{seq} {}: {e}", metric_title(m)));
                        None
                    }
                },
                _ => {
                    notes.push(format!("{seq} {}: no result for one of the approaches", metric_title(m)));
                    None
                }
            })
            .collect();
        rows.push(MatrixRow { sequence: seq, cells });
    }
    Ok(BdMatrix {
        anchor: anchor.to_string(),
        test: test.to_string(),
        metrics: metrics.iter().map(|m| m.to_string()).collect(),
        rows,
        notes,
        policy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRow {
    pub sequence: String,
    pub interval: RateInterval,
    /// Method-major: all metrics of the first method, then the next.
    pub cells: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalAverage {
    pub interval: RateInterval,
    pub cells: Vec<Option<f64>>,
}

/// BD-metric per bitrate interval of several methods against one anchor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalTable {
    pub anchor: String,
    pub methods: Vec<String>,
    pub metrics: Vec<String>,
    pub intervals: Vec<RateInterval>,
    pub rows: Vec<IntervalRow>,
    pub notes: Vec<String>,
    pub policy: AveragePolicy,
}

impl IntervalTable {
    fn column_metric(&self, j: usize) -> &str {
        &self.metrics[j % self.metrics.len().max(1)]
    }

    pub fn averages(&self) -> Vec<IntervalAverage> {
        let ncols = self.methods.len() * self.metrics.len();
        self.intervals
            .iter()
            .map(|iv| {
                let rows: Vec<_> = self.rows.iter().filter(|r| r.interval == *iv).collect();
                IntervalAverage {
                    interval: *iv,
                    cells: (0..ncols)
                        .map(|j| {
                            let col: Vec<_> = rows.iter().map(|r| r.cells.get(j).copied().flatten()).collect();
                            column_mean(&col, self.policy)
                        })
                        .collect(),
                }
            })
            .collect()
    }

    fn grid(&self) -> Grid {
        let mut header = vec!["Sequence".to_string(), "Interval".to_string()];
        for method in &self.methods {
            for m in &self.metrics {
                header.push(format!("{method} BD-{}", metric_title(m)));
            }
        }
        let fmt_cells = |cells: &[Option<f64>]| -> Vec<Option<String>> {
            cells
                .iter()
                .enumerate()
                .map(|(j, &v)| fixed(v, delta_decimals(self.column_metric(j))))
                .collect()
        };
        let mut rows: Vec<Vec<Option<String>>> = self
            .rows
            .iter()
            .map(|r| {
                let mut row = vec![Some(r.sequence.clone()), Some(r.interval.to_string())];
                row.extend(fmt_cells(&r.cells));
                row
            })
            .collect();
        for a in self.averages() {
            let mut row = vec![Some("Average".to_string()), Some(a.interval.to_string())];
            row.extend(fmt_cells(&a.cells));
            rows.push(row);
        }
        let mut notes = vec![format!("- : fewer than four points in the interval ({})", policy_note(self.policy))];
        notes.extend(self.notes.iter().map(|n| format!("  {n}")));
        Grid {
            title: format!("BD-metric per bit-rate interval (Mb/s) against {}", self.anchor),
            header,
            rows,
            notes,
        }
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Text => self.grid().text(),
            OutputFormat::Csv => self.grid().csv(),
            OutputFormat::Json => {
                #[derive(Serialize)]
                struct Out<'a> {
                    #[serde(flatten)]
                    table: &'a IntervalTable,
                    averages: Vec<IntervalAverage>,
                }
                to_json(&Out {
                    table: self,
                    averages: self.averages(),
                })
            }
        }
    }
}

pub fn emit_interval_table(
    results: &[ExperimentResult],
    anchor: &str,
    methods: &[&str],
    metrics: &[&str],
    intervals: &[RateInterval],
    interp: Interp,
    policy: AveragePolicy,
) -> Result<IntervalTable> {
    check_label(results, anchor)?;
    for m in methods {
        check_label(results, m)?;
    }
    let anchors = by_sequence(results, anchor);
    let mut rows = Vec::new();
    let mut notes = Vec::new();
    for seq in sequences(results) {
        let a = anchors.iter().find(|(s, _)| *s == seq).map(|x| x.1);
        for iv in intervals {
            let mut cells = Vec::new();
            for method in methods {
                let t = by_sequence(results, method).into_iter().find(|(s, _)| *s == seq).map(|x| x.1);
                for &m in metrics {
                    let v = match (a, t) {
                        (Some(a), Some(t)) => match bd_metric_interval(a, t, m, *iv, interp) {
                            Ok(IntervalOutcome::Value(r)) => Some(r.value),
                            Ok(IntervalOutcome::InsufficientData { .. }) => None,
                            Err(e) => {
                                notes.push(format!("{seq} {iv} {method} {}: {e}", metric_title(m)));
                                None
                            }
                        },
                        _ => None,
                    };
                    cells.push(v);
                }
            }
            rows.push(IntervalRow {
                sequence: seq.clone(),
                interval: *iv,
                cells,
            });
        }
    }
    Ok(IntervalTable {
        anchor: anchor.to_string(),
        methods: methods.iter().map(|m| m.to_string()).collect(),
        metrics: metrics.iter().map(|m| m.to_string()).collect(),
        intervals: intervals.to_vec(),
        rows,
        notes,
        policy,
    })
}

/// Every table and plot file derived from an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    /// Keyed by `<sequence>__<metric>`.
    pub plots: BTreeMap<String, PlotData>,
    pub bd_matrices: Vec<BdMatrix>,
    pub interval_tables: Vec<IntervalTable>,
}

impl ReportBundle {
    /// Plot data per sequence and metric, a BD-rate matrix per comparison,
    /// and one interval table per anchor over comparisons that ask for it.
    pub fn build(cfg: &ExperimentConfig, results: &[ExperimentResult], policy: AveragePolicy) -> Result<Self> {
        // Configuration order, whatever order the files were read in.
        let rank = |r: &ExperimentResult| {
            let s = cfg.sequences.iter().position(|s| s.name == r.sequence).unwrap_or(usize::MAX);
            let a = cfg.approaches.iter().position(|a| a.label == r.label).unwrap_or(usize::MAX);
            (s, a)
        };
        let mut sorted = results.to_vec();
        sorted.sort_by_key(rank);
        let results = sorted.as_slice();
        let metrics: Vec<&str> = cfg.metrics.iter().map(|m| m.key()).collect();
        let mut plots = BTreeMap::new();
        for seq in sequences(results) {
            for &m in &metrics {
                let curves: Vec<&RDCurve> = results
                    .iter()
                    .filter(|r| r.sequence == seq && r.curve.has_metric(m))
                    .map(|r| &r.curve)
                    .collect();
                if !curves.is_empty() {
                    plots.insert(format!("{seq}__{m}"), emit_curve_plotdata(&curves, m)?);
                }
            }
        }
        let mut bd_matrices = Vec::new();
        let mut groups: Vec<(String, Vec<RateInterval>, Interp, Vec<String>)> = Vec::new();
        for c in &cfg.comparisons {
            bd_matrices.push(emit_bd_matrix(results, &c.anchor, &c.test, &metrics, c.interp, policy)?);
            if c.intervals {
                let ivs = c.rate_intervals()?;
                match groups.iter_mut().find(|g| g.0 == c.anchor && g.1 == ivs && g.2 == c.interp) {
                    Some(g) => g.3.push(c.test.clone()),
                    None => groups.push((c.anchor.clone(), ivs, c.interp, vec![c.test.clone()])),
                }
            }
        }
        let interval_tables = groups
            .iter()
            .map(|(anchor, ivs, interp, methods)| {
                let methods: Vec<&str> = methods.iter().map(String::as_str).collect();
                emit_interval_table(results, anchor, &methods, &metrics, ivs, *interp, policy)
            })
            .collect::<Result<_>>()?;
        Ok(ReportBundle {
            plots,
            bd_matrices,
            interval_tables,
        })
    }

    /// All tables in one document.
    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Json => to_json(&self.json_value()),
            _ => {
                let parts: Vec<String> = self
                    .bd_matrices
                    .iter()
                    .map(|m| m.render(format))
                    .chain(self.interval_tables.iter().map(|t| t.render(format)))
                    .collect();
                parts.join("\n")
            }
        }
    }

    fn json_value(&self) -> serde_json::Value {
        let tables = |v: Vec<String>| -> Vec<serde_json::Value> {
            v.iter().map(|s| serde_json::from_str(s).expect("own json")).collect()
        };
        serde_json::json!({
            "plots": self.plots,
            "bd_matrices": tables(self.bd_matrices.iter().map(|m| m.render(OutputFormat::Json)).collect()),
            "interval_tables": tables(self.interval_tables.iter().map(|t| t.render(OutputFormat::Json)).collect()),
        })
    }

    /// Writes one file per table and plot into `dir`; returns the paths.
    pub fn write(&self, dir: &Path, format: OutputFormat) -> Result<Vec<PathBuf>> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let ext = format.extension();
        let mut files: Vec<(String, String)> = Vec::new();
        for (key, p) in &self.plots {
            files.push((format!("plot_{}.{ext}", slug(key)), p.render(format)));
        }
        for m in &self.bd_matrices {
            files.push((format!("bd_rate_{}_vs_{}.{ext}", slug(&m.test), slug(&m.anchor)), m.render(format)));
        }
        for (i, t) in self.interval_tables.iter().enumerate() {
            let name = if i == 0 {
                format!("bd_intervals_{}.{ext}", slug(&t.anchor))
            } else {
                format!("bd_intervals_{}_{i}.{ext}", slug(&t.anchor))
            };
            files.push((name, t.render(format)));
        }
        files
            .into_iter()
            .map(|(name, text)| {
                let p = dir.join(name);
                fs::write(&p, text).map_err(io_err(&p))?;
                Ok(p)
            })
            .collect()
    }
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

/// Reads every `*.json` result under `dir`, sorted by file name.
pub fn load_results(dir: &Path) -> Result<Vec<ExperimentResult>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(io_err(p))?;
            serde_json::from_str(&text).map_err(|source| ReportError::Json { path: p.clone(), source })
        })
        .collect()
}

impl fmt::Display for BdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(OutputFormat::Text))
    }
}

impl fmt::Display for IntervalTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(OutputFormat::Text))
    }
}
