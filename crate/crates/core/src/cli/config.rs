//! Flat `key = value` configuration with layered precedence:
//! defaults < config file < `ROUGHFBM_SEED` < command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grr;
use crate::kernel::{validate_hurst, DEFAULT_QUAD_TOL};

pub const SEED_ENV: &str = "ROUGHFBM_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Calibrate,
    KernelAudit,
    Rate1,
    Rate2,
    ProjRate,
    DpConv,
    GrrCheck,
}

impl Command {
    pub fn as_str(self) -> &'static str {
        match self {
            Command::Calibrate => "calibrate",
            Command::KernelAudit => "kernel-audit",
            Command::Rate1 => "rate1",
            Command::Rate2 => "rate2",
            Command::ProjRate => "proj-rate",
            Command::DpConv => "dp-conv",
            Command::GrrCheck => "grr-check",
        }
    }

    /// Experiments comparing against `W(M_ref)`.
    pub fn uses_reference(self) -> bool {
        matches!(self, Command::Rate2 | Command::DpConv | Command::GrrCheck)
    }

    pub fn uses_p(self) -> bool {
        matches!(self, Command::DpConv | Command::GrrCheck)
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        self != Format::Json
    }

    pub fn json(self) -> bool {
        self != Format::Csv
    }
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "both" => Ok(Format::Both),
            _ => Err(format!("expected csv, json or both, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(rename = "H")]
    pub hurst: f64,
    pub p: f64,
    pub d: usize,
    pub m_min: u32,
    pub m_max: u32,
    #[serde(rename = "M_ref")]
    pub m_ref: u32,
    pub n_samples: usize,
    pub seed: u64,
    pub quad_tol: f64,
    pub refine_tol: f64,
    pub grid_level: u32,
    pub audit_size: usize,
    pub safety: f64,
    pub allow_extended: bool,
    pub out_dir: PathBuf,
    pub format: Format,
    /// 0 means one worker per available core.
    pub threads: usize,
}

/// Keys accepted in config files; flags use the same names with dashes.
pub const KEYS: &[&str] = &[
    "hurst",
    "p",
    "d",
    "m_min",
    "m_max",
    "m_ref",
    "n_samples",
    "seed",
    "quad_tol",
    "refine_tol",
    "grid_level",
    "audit_size",
    "safety",
    "allow_extended",
    "out_dir",
    "format",
    "threads",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| Error::config(key, format!("cannot parse `{value}`: {e}")))
}

impl ExperimentConfig {
    pub fn defaults(command: Command) -> Self {
        let mut c = Self {
            command,
            hurst: 0.4,
            p: 2.6,
            d: 2,
            m_min: 3,
            m_max: 7,
            m_ref: 12,
            n_samples: 100,
            seed: 42,
            quad_tol: DEFAULT_QUAD_TOL,
            refine_tol: crate::enhanced::DEFAULT_REFINE_TOL,
            grid_level: 8,
            audit_size: 2000,
            safety: grr::DEFAULT_SAFETY,
            allow_extended: false,
            out_dir: PathBuf::from("out"),
            format: Format::Both,
            threads: 0,
        };
        match command {
            Command::Rate1 | Command::ProjRate => {
                c.hurst = 0.3;
                c.m_max = 9;
                c.d = 1;
            }
            Command::KernelAudit => c.hurst = 0.3,
            Command::Rate2 => c.n_samples = 200,
            Command::GrrCheck => {
                c.m_min = 5;
                c.m_ref = 11;
                c.seed = grr::CALIBRATION_SEED;
                c.n_samples = grr::CALIBRATION_STREAMS as usize;
            }
            Command::Calibrate | Command::DpConv => {}
        }
        c
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "hurst" => self.hurst = parse(k, value)?,
            "p" => self.p = parse(k, value)?,
            "d" => self.d = parse(k, value)?,
            "m_min" => self.m_min = parse(k, value)?,
            "m_max" => self.m_max = parse(k, value)?,
            "m_ref" => self.m_ref = parse(k, value)?,
            "n_samples" => self.n_samples = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "quad_tol" => self.quad_tol = parse(k, value)?,
            "refine_tol" => self.refine_tol = parse(k, value)?,
            "grid_level" => self.grid_level = parse(k, value)?,
            "audit_size" => self.audit_size = parse(k, value)?,
            "safety" => self.safety = parse(k, value)?,
            "allow_extended" => self.allow_extended = parse(k, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "format" => self.format = parse(k, value)?,
            "threads" => self.threads = parse(k, value)?,
            _ => return Err(Error::config(k, "unknown key")),
        }
        Ok(())
    }

    /// Apply a flat `key = value` text; `#` starts a comment line.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", n + 1), format!("expected key = value, got `{line}`")))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        validate_hurst(self.hurst, self.allow_extended)
            .map_err(|e| Error::config("hurst", e.to_string()))?;
        let positive = [
            ("quad_tol", self.quad_tol),
            ("refine_tol", self.refine_tol),
            ("safety", self.safety),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(k, format!("must be positive, got {v}")));
            }
        }
        if self.d == 0 {
            return Err(Error::config("d", "must be at least 1"));
        }
        if self.n_samples == 0 {
            return Err(Error::config("n_samples", "must be at least 1"));
        }
        if self.m_min == 0 {
            return Err(Error::config("m_min", "must be at least 1"));
        }
        if self.command != Command::GrrCheck && self.m_min >= self.m_max {
            return Err(Error::config(
                "m_max",
                format!("need m_min < m_max, got {} and {}", self.m_min, self.m_max),
            ));
        }
        if self.command != Command::GrrCheck && self.m_max - self.m_min < 2 {
            return Err(Error::config("m_max", "a rate fit needs at least three levels"));
        }
        if self.m_max > 20 {
            return Err(Error::config("m_max", format!("{} exceeds 20", self.m_max)));
        }
        if self.command.uses_reference() {
            let top = if self.command == Command::GrrCheck {
                self.m_min
            } else {
                self.m_max
            };
            if top + 4 > self.m_ref {
                return Err(Error::config(
                    "m_ref",
                    format!("need m_max <= M_ref - 4, got m_max = {top}, M_ref = {}", self.m_ref),
                ));
            }
            if self.m_ref > 20 {
                return Err(Error::config("m_ref", format!("{} exceeds 20", self.m_ref)));
            }
            if !(1..=12).contains(&self.grid_level) {
                return Err(Error::config("grid_level", "must lie in 1..=12"));
            }
        }
        if self.command.uses_p() {
            if !(self.p > 1.0 && self.p < 4.0) {
                return Err(Error::config("p", format!("{} outside (1, 4)", self.p)));
            }
            if !(self.p * self.hurst > 1.0) {
                return Err(Error::config(
                    "p",
                    format!("need pH > 1, got p = {}, H = {}", self.p, self.hurst),
                ));
            }
        }
        if self.command == Command::Rate2 {
            if !(self.hurst > 0.25 && self.hurst < 0.5) {
                return Err(Error::config("hurst", "rate2 needs H in (1/4, 1/2)"));
            }
            if self.d < 2 {
                return Err(Error::config("d", "rate2 needs d >= 2"));
            }
        }
        if self.command == Command::KernelAudit && self.audit_size < 2 {
            return Err(Error::config("audit_size", "must be at least 2"));
        }
        Ok(())
    }

    /// Canonical text of every setting that can change results. Output
    /// directory, format and thread count are left out.
    pub fn canonical(&self) -> String {
        format!(
            "command={}\nhurst={:.16e}\np={:.16e}\nd={}\nm_min={}\nm_max={}\nm_ref={}\nn_samples={}\nseed={}\nquad_tol={:.16e}\nrefine_tol={:.16e}\ngrid_level={}\naudit_size={}\nsafety={:.16e}\nallow_extended={}\n",
            self.command,
            self.hurst,
            self.p,
            self.d,
            self.m_min,
            self.m_max,
            self.m_ref,
            self.n_samples,
            self.seed,
            self.quad_tol,
            self.refine_tol,
            self.grid_level,
            self.audit_size,
            self.safety,
            self.allow_extended,
        )
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn m_values(&self) -> Vec<u32> {
        (self.m_min..=self.m_max).collect()
    }
}

/// Resolve a config from the parsed command-line settings, an optional
/// config file and the seed override.
pub fn resolve(
    command: Command,
    file: Option<&Path>,
    env_seed: Option<&str>,
    flags: &[(&str, String)],
) -> Result<ExperimentConfig> {
    let mut c = ExperimentConfig::defaults(command);
    if let Some(path) = file {
        c.apply_file(path)?;
    }
    if let Some(seed) = env_seed {
        c.seed = parse(SEED_ENV, seed)?;
    }
    for (k, v) in flags {
        c.set(k, v)?;
    }
    c.validate()?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        for cmd in [
            Command::Calibrate,
            Command::KernelAudit,
            Command::Rate1,
            Command::Rate2,
            Command::ProjRate,
            Command::DpConv,
            Command::GrrCheck,
        ] {
            ExperimentConfig::defaults(cmd).validate().unwrap();
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut c = ExperimentConfig::defaults(Command::Rate1);
        match c.apply_text("hurst = 0.35\nbogus = 1\n") {
            Err(Error::Config { field, .. }) => assert_eq!(field, "bogus"),
            other => panic!("{other:?}"),
        }
        assert_eq!(c.hurst, 0.35);
    }

    #[test]
    fn precedence() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.txt");
        std::fs::write(&path, "# comment\nseed = 5\nm_max = 8\nhurst=0.35\n").unwrap();
        let flags = [("hurst", "0.3".to_string())];
        let c = resolve(Command::Rate1, Some(&path), Some("9"), &flags).unwrap();
        assert_eq!((c.seed, c.m_max, c.hurst), (9, 8, 0.3));
        let c = resolve(Command::Rate1, Some(&path), Some("9"), &[("seed", "1".into())]).unwrap();
        assert_eq!(c.seed, 1);
    }

    #[test]
    fn proxy_bias_rule() {
        let flags = [("m_max", "9".to_string())];
        match resolve(Command::Rate2, None, None, &flags) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "m_ref"),
            other => panic!("{other:?}"),
        }
        assert!(resolve(Command::Rate1, None, None, &flags).is_ok());
    }

    #[test]
    fn hash_ignores_output_settings() {
        let a = ExperimentConfig::defaults(Command::Rate1);
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        b.threads = 3;
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }
}
