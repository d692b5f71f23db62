//! Command-line front end: parse, run one experiment, write its report.

mod config;
mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{resolve, Command, ExperimentConfig, Format, KEYS, SEED_ENV};
pub use report::{
    csv_text, fmt_f64, json_text, read_rate_csv, to_json, write_report, write_resolved_config,
    AuditOutput, RateCsvRow, Tabular, VERSION,
};

use crate::error::{Error, Result};
use crate::grr;
use crate::kernel::{bound_audit, calibrate_ch, HurstModel, HurstOptions};
use crate::rate_lab::{self, GrrSettings, McSettings};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NONCONVERGENCE: i32 = 4;

/// Hurst indices of the committed presets.
pub const PRESET_HURSTS: [f64; 5] = [0.3, 0.35, 0.4, 0.6, 0.75];

#[derive(Debug, Parser)]
#[command(name = "roughfbm", version = VERSION, arg_required_else_help = true)]
#[command(about = "Enhanced fractional Brownian motion: kernels, lifts and convergence experiments")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Calibrate c_H for the preset Hurst indices and check unit variance
    Calibrate(Flags),
    /// Sample the kernel bounds and report their largest ratios
    KernelAudit(Flags),
    /// Level-1 L² rate of the projected kernel (deterministic)
    Rate1(Flags),
    /// Level-2 mean squared error of W(m) against W(M_ref)
    Rate2(Flags),
    /// Projection error rate at t = 1
    ProjRate(Flags),
    /// Convergence of the modulus distance between W(m) and W(M_ref)
    DpConv(Flags),
    /// Certify the GRR bounds against the committed constants
    GrrCheck(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// Flat key = value file; flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    hurst: Option<String>,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    m_min: Option<String>,
    #[arg(long)]
    m_max: Option<String>,
    #[arg(long)]
    m_ref: Option<String>,
    #[arg(long)]
    n_samples: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    quad_tol: Option<String>,
    #[arg(long)]
    refine_tol: Option<String>,
    #[arg(long)]
    grid_level: Option<String>,
    #[arg(long)]
    audit_size: Option<String>,
    #[arg(long)]
    safety: Option<String>,
    #[arg(long)]
    allow_extended: bool,
    #[arg(long)]
    out_dir: Option<String>,
    /// csv, json or both
    #[arg(long)]
    format: Option<String>,
    /// Worker threads, 0 for all cores
    #[arg(long)]
    threads: Option<String>,
}

impl Flags {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let named = [
            ("hurst", &self.hurst),
            ("p", &self.p),
            ("d", &self.d),
            ("m_min", &self.m_min),
            ("m_max", &self.m_max),
            ("m_ref", &self.m_ref),
            ("n_samples", &self.n_samples),
            ("seed", &self.seed),
            ("quad_tol", &self.quad_tol),
            ("refine_tol", &self.refine_tol),
            ("grid_level", &self.grid_level),
            ("audit_size", &self.audit_size),
            ("safety", &self.safety),
            ("out_dir", &self.out_dir),
            ("format", &self.format),
            ("threads", &self.threads),
        ];
        let mut out: Vec<_> = named
            .into_iter()
            .filter_map(|(k, v)| v.clone().map(|v| (k, v)))
            .collect();
        if self.allow_extended {
            out.push(("allow_extended", "true".into()));
        }
        out
    }
}

/// Parse arguments (program name first) into a resolved configuration.
/// Help and version requests come back as `Ok(None)` after printing.
pub fn parse_config<I, T>(args: I, env_seed: Option<&str>) -> std::result::Result<Option<ExperimentConfig>, (i32, String)>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    Ok(None)
                }
                _ => Err((EXIT_CONFIG, e.render().to_string())),
            };
        }
    };
    let (command, flags) = match &cli.command {
        Sub::Calibrate(f) => (Command::Calibrate, f),
        Sub::KernelAudit(f) => (Command::KernelAudit, f),
        Sub::Rate1(f) => (Command::Rate1, f),
        Sub::Rate2(f) => (Command::Rate2, f),
        Sub::ProjRate(f) => (Command::ProjRate, f),
        Sub::DpConv(f) => (Command::DpConv, f),
        Sub::GrrCheck(f) => (Command::GrrCheck, f),
    };
    resolve(command, flags.config.as_deref(), env_seed, &flags.pairs())
        .map(Some)
        .map_err(|e| (exit_code(&e), e.to_string()))
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::NonConvergence { .. } => EXIT_NONCONVERGENCE,
        Error::Io(_) | Error::Format(_) => EXIT_IO,
        Error::Config { .. }
        | Error::Domain(_)
        | Error::InvalidInput(_)
        | Error::LevelMismatch(_)
        | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        Error::Invariant(_) => EXIT_FAIL,
    }
}

/// Outcome of one experiment run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub experiment_id: String,
    pub passed: bool,
    /// Too many streams failed to converge under refinement.
    pub nonconverged: bool,
    pub summary: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            EXIT_PASS
        } else if self.nonconverged {
            EXIT_NONCONVERGENCE
        } else {
            EXIT_FAIL
        }
    }
}

fn model_for(c: &ExperimentConfig, hurst: f64) -> Result<HurstModel> {
    calibrate_ch(
        hurst,
        HurstOptions {
            quad_tol: c.quad_tol,
            allow_extended: c.allow_extended,
        },
    )
}

fn mc_settings(c: &ExperimentConfig) -> McSettings {
    McSettings {
        d: c.d,
        n_samples: c.n_samples,
        m_values: c.m_values(),
        m_ref: c.m_ref,
        seed: c.seed,
        output_level: c.grid_level,
        refine_tol: c.refine_tol,
    }
}

fn finish<T: Tabular>(report: &T, c: &ExperimentConfig, nonconverged: bool, summary: Vec<String>) -> Result<Outcome> {
    let files = write_report(report, c)?;
    Ok(Outcome {
        experiment_id: report.experiment_id().to_string(),
        passed: report.passed(),
        nonconverged,
        summary,
        files,
    })
}

fn rate_outcome(r: &rate_lab::RateReport, c: &ExperimentConfig) -> Result<Outcome> {
    let mut summary = vec![format!(
        "{}: H={} slope={:.4} r2={:.4} verdict={}",
        r.experiment_id,
        r.hurst,
        r.slope,
        r.r2,
        r.verdict.as_str()
    )];
    for ch in &r.checks {
        summary.push(format!("  {} {}: {}", if ch.passed { "ok  " } else { "FAIL" }, ch.name, ch.detail));
    }
    let nc = r.check("nonconvergence").is_some_and(|ch| !ch.passed);
    finish(r, c, nc, summary)
}

/// Run the configured experiment and write its files.
pub fn execute(c: &ExperimentConfig) -> Result<Outcome> {
    write_resolved_config(c)?;
    match c.command {
        Command::Calibrate => {
            let mut hursts = PRESET_HURSTS.to_vec();
            if !hursts.contains(&c.hurst) {
                hursts.push(c.hurst);
            }
            let opts = HurstOptions {
                quad_tol: c.quad_tol,
                allow_extended: c.allow_extended,
            };
            let r = rate_lab::run_calibration(&hursts, &[0.25, 0.5, 0.75, 1.0], opts, 1e-3)?;
            let summary = vec![format!(
                "calibrate: max relative variance error {:.3e} (tolerance {:.0e}) verdict={}",
                r.max_rel_error,
                r.tolerance,
                r.verdict.as_str()
            )];
            finish(&r, c, false, summary)
        }
        Command::KernelAudit => {
            let audit = bound_audit(&model_for(c, c.hurst)?, c.audit_size)?;
            let out = AuditOutput::new(audit);
            let summary = out
                .audit
                .bounds
                .iter()
                .map(|b| {
                    format!(
                        "{}: max ratio {:.4} (half sample {:.4}) {}",
                        b.bound_id,
                        b.max_ratio,
                        b.half_sample_max_ratio,
                        if b.stable { "stable" } else { "UNSTABLE" }
                    )
                })
                .collect();
            finish(&out, c, false, summary)
        }
        Command::Rate1 => {
            let r = rate_lab::run_level1_rate(&model_for(c, c.hurst)?, &[(0.0, 1.0)], &c.m_values(), c.d)?;
            rate_outcome(&r, c)
        }
        Command::ProjRate => {
            let r = rate_lab::run_projection_rate(&model_for(c, c.hurst)?, &[1.0], &c.m_values())?;
            rate_outcome(&r, c)
        }
        Command::Rate2 => {
            let r = rate_lab::run_level2_rate(&model_for(c, c.hurst)?, &mc_settings(c), (0.0, 1.0))?;
            rate_outcome(&r, c)
        }
        Command::DpConv => {
            let r = rate_lab::run_dp_convergence(&model_for(c, c.hurst)?, c.p, &mc_settings(c))?;
            rate_outcome(&r, c)
        }
        Command::GrrCheck => {
            let g = GrrSettings {
                p: c.p,
                m: c.m_min,
                exponents: grr::theorem_exponents(c.hurst, c.p)?,
                integral_level: c.grid_level,
                sup_level: c.grid_level,
                safety: c.safety,
            };
            let r = rate_lab::run_grr_check(&model_for(c, c.hurst)?, &mc_settings(c), &g, &grr::COMMITTED_CONSTANTS)?;
            let summary = vec![
                format!(
                    "grr-check: {} violations over {} streams, min margin {:.3}, verdict={}",
                    r.violations,
                    r.n_samples,
                    r.min_margin,
                    r.verdict.as_str()
                ),
                format!("  committed    {:?}", r.committed),
                format!("  recalibrated {:?}", r.recalibrated),
            ];
            finish(&r, c, false, summary)
        }
    }
}

/// Full command-line run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let env_seed = std::env::var(SEED_ENV).ok();
    let config = match parse_config(args, env_seed.as_deref()) {
        Ok(Some(c)) => c,
        Ok(None) => return EXIT_PASS,
        Err((code, msg)) => {
            eprintln!("{}", msg.trim_end());
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(config.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start worker pool: {e}");
            return EXIT_CONFIG;
        }
    };
    match pool.install(|| execute(&config)) {
        Ok(out) => {
            for line in &out.summary {
                println!("{line}");
            }
            for f in &out.files {
                println!("wrote {}", f.display());
            }
            out.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
