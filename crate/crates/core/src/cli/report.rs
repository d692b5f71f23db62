//! CSV and JSON report files. Floats are written with 17 significant digits
//! so that reruns are byte-identical and parsing recovers every value.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::AuditReport;
use crate::rate_lab::{CalibrationReport, GrrCheckReport, RateReport, Verdict};

use super::config::ExperimentConfig;

/// Version string embedded in every output file.
pub const VERSION: &str = env!("ROUGHFBM_VERSION");

/// Compact JSON with every float written as `{:.16e}`.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W: ?Sized + Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, w: &mut W, value: f32) -> io::Result<()> {
        write!(w, "{:.16e}", value as f64)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Format(e.to_string()))?;
    buf.push(b'\n');
    String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// A report that can be written as one CSV table.
pub trait Tabular: Serialize {
    fn experiment_id(&self) -> &str;
    fn header(&self) -> Vec<&'static str>;
    fn rows(&self) -> Vec<Vec<String>>;
    fn passed(&self) -> bool;
}

impl Tabular for RateReport {
    fn experiment_id(&self) -> &str {
        &self.experiment_id
    }

    fn header(&self) -> Vec<&'static str> {
        vec![
            "experiment_id",
            "H",
            "p",
            "m",
            "error",
            "log2_error",
            "slope",
            "theory_exponent",
            "verdict",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.m_values
            .iter()
            .zip(&self.errors)
            .map(|(m, e)| {
                vec![
                    self.experiment_id.clone(),
                    fmt_f64(self.hurst),
                    self.p.map(fmt_f64).unwrap_or_default(),
                    m.to_string(),
                    fmt_f64(*e),
                    fmt_f64(e.log2()),
                    fmt_f64(self.slope),
                    fmt_f64(self.theory_exponent),
                    self.verdict.as_str().to_string(),
                ]
            })
            .collect()
    }

    fn passed(&self) -> bool {
        RateReport::passed(self)
    }
}

impl Tabular for CalibrationReport {
    fn experiment_id(&self) -> &str {
        &self.experiment_id
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["experiment_id", "H", "c_H", "t", "variance", "rel_error", "verdict"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    self.experiment_id.clone(),
                    fmt_f64(r.hurst),
                    fmt_f64(r.c_h),
                    fmt_f64(r.t),
                    fmt_f64(r.variance),
                    fmt_f64(r.rel_error),
                    Verdict::from_bool(r.rel_error <= self.tolerance).as_str().into(),
                ]
            })
            .collect()
    }

    fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Kernel audit wrapped with its experiment id.
#[derive(Debug, Clone, Serialize)]
pub struct AuditOutput {
    pub experiment_id: String,
    pub audit: AuditReport,
    pub verdict: Verdict,
}

impl AuditOutput {
    pub fn new(audit: AuditReport) -> Self {
        Self {
            experiment_id: "kernel-audit".into(),
            verdict: Verdict::from_bool(audit.passed()),
            audit,
        }
    }
}

impl Tabular for AuditOutput {
    fn experiment_id(&self) -> &str {
        &self.experiment_id
    }

    fn header(&self) -> Vec<&'static str> {
        vec![
            "experiment_id",
            "H",
            "bound_id",
            "regime",
            "max_ratio",
            "half_sample_max_ratio",
            "sample_size",
            "argmax_t",
            "argmax_s",
            "verdict",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.audit
            .bounds
            .iter()
            .map(|b| {
                vec![
                    self.experiment_id.clone(),
                    fmt_f64(self.audit.hurst),
                    b.bound_id.to_string(),
                    b.regime.to_string(),
                    fmt_f64(b.max_ratio),
                    fmt_f64(b.half_sample_max_ratio),
                    b.sample_size.to_string(),
                    fmt_f64(b.argmax.0),
                    fmt_f64(b.argmax.1),
                    Verdict::from_bool(b.stable).as_str().into(),
                ]
            })
            .collect()
    }

    fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

impl Tabular for GrrCheckReport {
    fn experiment_id(&self) -> &str {
        &self.experiment_id
    }

    fn header(&self) -> Vec<&'static str> {
        vec![
            "experiment_id",
            "stream_id",
            "bound",
            "i",
            "constant",
            "achieved",
            "margin",
            "verdict",
        ]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        let mut rows = Vec::new();
        for s in &self.streams {
            let c = &s.cert;
            let mut push = |bound: &str, i: usize, constant: f64, achieved: f64, margin: f64| {
                rows.push(vec![
                    self.experiment_id.clone(),
                    s.stream_id.to_string(),
                    bound.to_string(),
                    (i + 1).to_string(),
                    fmt_f64(constant),
                    fmt_f64(achieved),
                    fmt_f64(margin),
                    Verdict::from_bool(margin >= 1.0).as_str().into(),
                ]);
            };
            for i in 0..c.f.len() {
                push("F", i, c.f[i], c.achieved_sum_sup_per_i[i], c.sum_margin_per_i[i]);
            }
            for i in 0..c.g.len() {
                push("G", i, c.g[i], c.achieved_sup_per_i[i], c.margin_per_i[i]);
            }
        }
        rows
    }

    fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Provenance embedded in every output file.
#[derive(Debug, Clone, Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    seed: u64,
    config_sha256: String,
    report: &'a T,
}

fn io_context(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_context(path, e))
}

pub fn csv_text<T: Tabular>(report: &T, config: &ExperimentConfig) -> Result<String> {
    let mut out = format!(
        "# version={VERSION}\n# seed={}\n# config_sha256={}\n",
        config.seed,
        config.hash()
    );
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(report.header())
        .and_then(|_| report.rows().iter().try_for_each(|r| w.write_record(r)))
        .map_err(|e| Error::Format(e.to_string()))?;
    let body = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    out.push_str(&String::from_utf8(body).map_err(|e| Error::Format(e.to_string()))?);
    Ok(out)
}

pub fn json_text<T: Tabular>(report: &T, config: &ExperimentConfig) -> Result<String> {
    to_json(&Envelope {
        version: VERSION,
        seed: config.seed,
        config_sha256: config.hash(),
        report,
    })
}

/// Echo of the resolved configuration.
pub fn write_resolved_config(config: &ExperimentConfig) -> Result<PathBuf> {
    fs::create_dir_all(&config.out_dir).map_err(|e| io_context(&config.out_dir, e))?;
    #[derive(Serialize)]
    struct Resolved<'a> {
        version: &'a str,
        config_sha256: String,
        config: &'a ExperimentConfig,
    }
    let path = config.out_dir.join("resolved_config.json");
    write_file(
        &path,
        &to_json(&Resolved {
            version: VERSION,
            config_sha256: config.hash(),
            config,
        })?,
    )?;
    Ok(path)
}

/// Write `<experiment_id>.csv` and/or `.json` into the output directory.
pub fn write_report<T: Tabular>(report: &T, config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&config.out_dir).map_err(|e| io_context(&config.out_dir, e))?;
    let mut written = Vec::new();
    if config.format.csv() {
        let path = config.out_dir.join(format!("{}.csv", report.experiment_id()));
        write_file(&path, &csv_text(report, config)?)?;
        written.push(path);
    }
    if config.format.json() {
        let path = config.out_dir.join(format!("{}.json", report.experiment_id()));
        write_file(&path, &json_text(report, config)?)?;
        written.push(path);
    }
    Ok(written)
}

/// One row of a rate CSV.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RateCsvRow {
    pub experiment_id: String,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub p: Option<f64>,
    pub m: u32,
    pub error: f64,
    pub log2_error: f64,
    pub slope: f64,
    pub theory_exponent: f64,
    pub verdict: String,
}

/// Parse a rate CSV, skipping the `#` provenance lines.
pub fn read_rate_csv<R: io::Read>(r: R) -> Result<Vec<RateCsvRow>> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(r)
        .deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig17_json_round_trips() {
        let v = vec![0.1, 1.0 / 3.0, -2.5e-300, 6.02e23];
        let text = to_json(&v).unwrap();
        assert!(text.ends_with('\n'));
        assert!(text.contains("1.0000000000000001e-1"));
        let back: Vec<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, v);
    }

    #[test]
    fn non_finite_becomes_null() {
        assert_eq!(to_json(&f64::INFINITY).unwrap(), "null\n");
    }
}
