//! Artifact writers: deterministic CSV tables, JSON run summaries, and raw
//! binary grid dumps.
//!
//! Determinism contract: every byte written here is a pure function of the
//! data passed in. Floats are rendered with 17 significant digits
//! (`{:.16e}`), which round-trips every finite `f64` exactly, so a re-run
//! with the same seed produces byte-identical tables regardless of thread
//! count or platform.

use crate::error::Result;
use crate::stats::SummaryStats;
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// One Monte Carlo sample in the per-sample output table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleRow {
    /// Sample index `k` within the ensemble.
    pub index: u64,
    /// Derived per-sample seed.
    pub seed: u64,
    /// Scaled corrector sample `ε^{-β/2}·(u_ε - u⁰, φ)`.
    pub value: f64,
    /// Its linear (intermediate-kernel) part.
    pub linear_part: f64,
    /// `value - linear_part`.
    pub residual: f64,
}

/// Renders a float with 17 significant digits (exact `f64` round-trip).
fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Renders the per-sample table.
pub fn samples_csv(rows: &[SampleRow]) -> String {
    let mut s = String::from("index,seed,value,linear_part,residual\n");
    for row in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            row.index,
            row.seed,
            fmt_f64(row.value),
            fmt_f64(row.linear_part),
            fmt_f64(row.residual)
        );
    }
    s
}

/// Writes the per-sample table to `path`, creating parent directories.
pub fn write_samples_csv(path: &Path, rows: &[SampleRow]) -> Result<()> {
    write_text(path, &samples_csv(rows))
}

/// Parses a per-sample table back. Because the writer emits 17 significant
/// digits, the floats recovered here are bit-identical to the live run, so
/// statistics recomputed from the persisted table match bit-exactly.
pub fn read_samples_csv(text: &str) -> Result<Vec<SampleRow>> {
    let bad = |line: usize, msg: String| crate::error::Error::InvalidArgument(format!(
        "samples table line {line}: {msg}"
    ));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == "index,seed,value,linear_part,residual" => {}
        Some((_, header)) => {
            return Err(bad(1, format!("unexpected header '{header}'")));
        }
        None => return Err(bad(1, "empty table".into())),
    }
    let mut rows = Vec::new();
    for (ln, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(ln + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let field = |i: usize, name: &str| -> Result<f64> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| bad(ln + 1, format!("bad {name} '{}': {e}", fields[i])))
        };
        rows.push(SampleRow {
            index: fields[0]
                .parse::<u64>()
                .map_err(|e| bad(ln + 1, format!("bad index '{}': {e}", fields[0])))?,
            seed: fields[1]
                .parse::<u64>()
                .map_err(|e| bad(ln + 1, format!("bad seed '{}': {e}", fields[1])))?,
            value: field(2, "value")?,
            linear_part: field(3, "linear_part")?,
            residual: field(4, "residual")?,
        });
    }
    Ok(rows)
}

/// One row of a correlation-length scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct EpsilonScanRow {
    /// Correlation length ε.
    pub eps: f64,
    /// Empirical variance of the scaled samples.
    pub variance: f64,
    /// Batch standard error of the variance.
    pub variance_se: f64,
    /// Predicted intermediate variance at this ε's discretization.
    pub predicted_variance: f64,
    /// `mean|residual| / std(value)` — the nonlinear remainder share.
    pub residual_fraction: f64,
}

/// Renders a correlation-length scan table.
pub fn epsilon_scan_csv(rows: &[EpsilonScanRow]) -> String {
    let mut s = String::from("eps,variance,variance_se,predicted_variance,residual_fraction\n");
    for row in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt_f64(row.eps),
            fmt_f64(row.variance),
            fmt_f64(row.variance_se),
            fmt_f64(row.predicted_variance),
            fmt_f64(row.residual_fraction)
        );
    }
    s
}

/// Writes a correlation-length scan table to `path`.
pub fn write_epsilon_scan_csv(path: &Path, rows: &[EpsilonScanRow]) -> Result<()> {
    write_text(path, &epsilon_scan_csv(rows))
}

/// One row of a patch-ratio amplification scan.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AmplificationRow {
    /// Patch ratio r.
    pub r: f64,
    /// Empirical variance of the scaled samples at this r.
    pub variance: f64,
    /// Batch standard error of the variance.
    pub variance_se: f64,
    /// Predicted variance of the linear part at this discretization.
    pub intermediate_variance: f64,
    /// Predicted limiting variance from the reference solution.
    pub limit_variance: f64,
    /// Empirical variance ratio against the full-patch (r = 1) run.
    pub ratio_vs_full: f64,
    /// Standard error of that ratio (seed-coupled estimator).
    pub ratio_se: f64,
    /// Predicted ratio (`1/r²` scaling for short-range fields).
    pub predicted_ratio: f64,
}

/// Renders an amplification scan table.
pub fn amplification_csv(rows: &[AmplificationRow]) -> String {
    let mut s = String::from(
        "r,variance,variance_se,intermediate_variance,limit_variance,\
         ratio_vs_full,ratio_se,predicted_ratio\n",
    );
    for row in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            fmt_f64(row.r),
            fmt_f64(row.variance),
            fmt_f64(row.variance_se),
            fmt_f64(row.intermediate_variance),
            fmt_f64(row.limit_variance),
            fmt_f64(row.ratio_vs_full),
            fmt_f64(row.ratio_se),
            fmt_f64(row.predicted_ratio)
        );
    }
    s
}

/// Writes an amplification scan table to `path`.
pub fn write_amplification_csv(path: &Path, rows: &[AmplificationRow]) -> Result<()> {
    write_text(path, &amplification_csv(rows))
}

/// Wall-clock seconds spent in one named stage of a run.
#[derive(Debug, Clone, Serialize)]
pub struct StageTiming {
    /// Stage name (e.g. `assemble`, `ensemble`).
    pub stage: String,
    /// Elapsed seconds.
    pub seconds: f64,
}

/// Provenance block of a run: what produced the artifacts, from which
/// config, and how long it took.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    /// SHA-256 of the canonical config text.
    pub config_hash: String,
    /// Crate version that produced the artifacts.
    pub tool_version: String,
    /// Total wall-clock seconds.
    pub wall_seconds: f64,
    /// Per-stage wall-clock breakdown.
    pub timings: Vec<StageTiming>,
    /// Paths of the artifacts written by this run.
    pub artifacts: Vec<String>,
}

impl RunRecord {
    /// Starts a record for the given config hash with the crate version.
    pub fn new(config_hash: String) -> Self {
        Self {
            config_hash,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_seconds: 0.0,
            timings: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Appends a named stage timing.
    pub fn add_timing(&mut self, stage: &str, seconds: f64) {
        self.timings.push(StageTiming { stage: stage.to_string(), seconds });
    }

    /// Registers an artifact path.
    pub fn add_artifact(&mut self, path: &Path) {
        self.artifacts.push(path.display().to_string());
    }
}

/// Theory predictions attached to a run summary.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PredictedVariances {
    /// Intermediate (discretization-level) variance of the linear part.
    pub intermediate_variance: f64,
    /// Limiting variance from the reference solution.
    pub limit_variance: f64,
}

/// The JSON summary document of a Monte Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    /// Provenance: config hash, version, wall clock, timings, artifacts.
    pub record: RunRecord,
    /// Empirical statistics of the scaled samples.
    pub statistics: SummaryStats,
    /// Predicted variances at both levels.
    pub predicted: PredictedVariances,
    /// Samples dropped for assembly/solver failure.
    pub invalid_samples: u64,
}

/// Serializes any summary document as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    write_text(path, &text)
}

/// Paths produced by [`write_f64_grid`].
#[derive(Debug, Clone)]
pub struct GridArtifact {
    /// Raw little-endian `f64` payload, row-major.
    pub bin: PathBuf,
    /// JSON sidecar describing the dimensions and layout.
    pub sidecar: PathBuf,
}

#[derive(Debug, Serialize)]
struct GridSidecar {
    rows: usize,
    cols: usize,
    dtype: &'static str,
    byte_order: &'static str,
    layout: &'static str,
}

/// Dumps a row-major `rows × cols` grid as raw little-endian `f64` bytes
/// (`<base>.bin`) plus a JSON sidecar of the dimensions (`<base>.json`).
pub fn write_f64_grid(base: &Path, rows: usize, cols: usize, data: &[f64]) -> Result<GridArtifact> {
    assert_eq!(data.len(), rows * cols, "grid dump size mismatch");
    let bin = base.with_extension("bin");
    let sidecar = base.with_extension("json");
    let mut bytes = Vec::with_capacity(data.len() * 8);
    for v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(parent) = bin.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(&bin, bytes)?;
    write_json(
        &sidecar,
        &GridSidecar {
            rows,
            cols,
            dtype: "float64",
            byte_order: "little-endian",
            layout: "row-major",
        },
    )?;
    Ok(GridArtifact { bin, sidecar })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips_exactly() {
        for &x in &[
            1.0 / 3.0,
            -0.0,
            1.0 + f64::EPSILON,
            1e-300,
            6.02e23,
            -7.129847129e-5,
            f64::MIN_POSITIVE,
        ] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{x} -> {s} -> {back}");
        }
    }

    #[test]
    fn samples_table_has_documented_layout() {
        let rows = [
            SampleRow { index: 0, seed: 42, value: 1.0, linear_part: 0.5, residual: 0.5 },
            SampleRow { index: 1, seed: 43, value: -2.0, linear_part: -2.0, residual: 0.0 },
        ];
        let text = samples_csv(&rows);
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("index,seed,value,linear_part,residual"));
        assert_eq!(
            lines.next(),
            Some(
                "0,42,1.0000000000000000e0,5.0000000000000000e-1,5.0000000000000000e-1"
            )
        );
        assert_eq!(text.lines().count(), 3);
        assert!(text.ends_with('\n'));
    }

    #[test]
    fn samples_table_round_trips_bitwise() {
        let rows = vec![
            SampleRow {
                index: 0,
                seed: 0xdead_beef_dead_beef,
                value: 1.0 / 3.0,
                linear_part: 0.3333,
                residual: 1.0 / 3.0 - 0.3333,
            },
            SampleRow { index: 1, seed: 2, value: -1e-17, linear_part: 0.0, residual: -1e-17 },
        ];
        let text = samples_csv(&rows);
        let back = read_samples_csv(&text).unwrap();
        assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.index, b.index);
            assert_eq!(a.seed, b.seed);
            assert_eq!(a.value.to_bits(), b.value.to_bits());
            assert_eq!(a.linear_part.to_bits(), b.linear_part.to_bits());
            assert_eq!(a.residual.to_bits(), b.residual.to_bits());
        }
        assert!(read_samples_csv("wrong,header\n").is_err());
        assert!(read_samples_csv("index,seed,value,linear_part,residual\n1,2,x,0,0\n").is_err());
    }

    #[test]
    fn grid_dump_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let data = [1.5, -2.25, 0.0, 1e-12, 3.0, -4.0];
        let art = write_f64_grid(&dir.path().join("field"), 2, 3, &data).unwrap();
        let bytes = fs::read(&art.bin).unwrap();
        assert_eq!(bytes.len(), 48);
        let back: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        assert_eq!(back, data);
        let sidecar: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&art.sidecar).unwrap()).unwrap();
        assert_eq!(sidecar["rows"], 2);
        assert_eq!(sidecar["cols"], 3);
        assert_eq!(sidecar["byte_order"], "little-endian");
    }

    #[test]
    fn summary_json_nests_record_and_statistics() {
        let mut record = RunRecord::new("abc123".into());
        record.add_timing("assemble", 0.5);
        record.add_artifact(Path::new("out/samples.csv"));
        record.wall_seconds = 1.25;
        let summary = RunSummary {
            record,
            statistics: crate::stats::summarize(&[1.0, 2.0, 3.0, 2.0]),
            predicted: PredictedVariances { intermediate_variance: 0.5, limit_variance: 0.6 },
            invalid_samples: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.json");
        write_json(&path, &summary).unwrap();
        let doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(doc["record"]["config_hash"], "abc123");
        assert_eq!(doc["record"]["tool_version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(doc["predicted"]["intermediate_variance"], 0.5);
        assert_eq!(doc["statistics"]["n"], 4);
        assert_eq!(doc["record"]["artifacts"][0], "out/samples.csv");
    }

    #[test]
    fn writers_create_parent_directories() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/deeper/samples.csv");
        write_samples_csv(&path, &[]).unwrap();
        assert_eq!(
            fs::read_to_string(&path).unwrap(),
            "index,seed,value,linear_part,residual\n"
        );
    }
}
