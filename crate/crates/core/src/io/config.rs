//! Run configuration: one TOML document with `[dopa]`, `[source]`,
//! `[detection]`, `[scan]`, `[meta]` and `[output]` sections.
//!
//! Unknown keys are rejected, missing keys take the defaults below (the
//! reference operating point). The resolved config is echoed into every
//! stream header.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dopa::DopaModel;
use crate::error::{Error, Result};
use crate::homodyne::{DetectionChain, MetaConfig, ScanConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DopaSection {
    pub kappa_per_sqrt_mw: f64,
    pub p_pump_mw: f64,
    pub phi_rad: f64,
    pub mu_gid: f64,
}

impl Default for DopaSection {
    /// Operating point with probe gains 2.51 (amplification) and 0.53
    /// (deamplification) at 1 mW.
    fn default() -> Self {
        let m = DopaModel::from_gains(2.51, 0.53, 1.0, 0.0).expect("valid default gains");
        Self::from(m)
    }
}

impl From<DopaModel> for DopaSection {
    fn from(m: DopaModel) -> Self {
        Self {
            kappa_per_sqrt_mw: m.kappa,
            p_pump_mw: m.p_pump_mw,
            phi_rad: m.phi,
            mu_gid: m.mu_gid,
        }
    }
}

impl DopaSection {
    pub fn model(&self) -> Result<DopaModel> {
        DopaModel::new(self.kappa_per_sqrt_mw, self.p_pump_mw, self.phi_rad, self.mu_gid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceConfig {
    /// Block the squeezed beam: the detector sees vacuum (shot-noise runs).
    pub signal_blocked: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamFormat {
    #[default]
    Bin,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    pub stream_file: String,
    pub format: StreamFormat,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: "out".into(),
            stream_file: "pulses.sqzp".into(),
            format: StreamFormat::Bin,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dopa: DopaSection,
    pub source: SourceConfig,
    pub detection: DetectionChain,
    pub scan: ScanConfig,
    pub meta: MetaConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dopa.model()?;
        self.detection.validate()?;
        self.scan.validate()?;
        for (name, v) in [
            ("wavelength_nm", self.meta.wavelength_nm),
            ("pulse_fwhm_fs", self.meta.pulse_fwhm_fs),
            ("crystal_len_um", self.meta.crystal_len_um),
            ("crystal_temp_c", self.meta.crystal_temp_c),
            ("waist_um", self.meta.waist_um),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, "metadata must be finite"));
            }
        }
        Ok(())
    }
}
