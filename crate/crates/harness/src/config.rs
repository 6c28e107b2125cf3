//! Sweep specification, read from TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};
use wbrtf_core::rtf::Method;
use wbrtf_core::scenario::{PowerProfile, ScenarioConfig};
use wbrtf_core::speech::SpeechConfig;

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Equicorrelated,
    Varcorrelated,
    Speech,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Equicorrelated => "equicorrelated",
            ScenarioKind::Varcorrelated => "varcorrelated",
            ScenarioKind::Speech => "speech",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweptParameter {
    #[serde(rename = "upsilon_f")]
    UpsilonF,
    #[serde(rename = "rho_f")]
    RhoF,
    #[serde(rename = "L")]
    Frames,
    #[serde(rename = "snr_db")]
    SnrDb,
}

impl SweptParameter {
    pub fn name(self) -> &'static str {
        match self {
            SweptParameter::UpsilonF => "upsilon_f",
            SweptParameter::RhoF => "rho_f",
            SweptParameter::Frames => "L",
            SweptParameter::SnrDb => "snr_db",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub scenario: ScenarioKind,
    pub swept_parameter: SweptParameter,
    pub values: Vec<f64>,
    #[serde(default)]
    pub fixed: ScenarioConfig,
    #[serde(default)]
    pub speech: SpeechConfig,
    #[serde(default = "default_trials")]
    pub n_trials: usize,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub compute_bounds: bool,
    #[serde(default)]
    pub base_seed: u64,
    /// Estimate `R_v` from a separate noise-only draw of `L` frames instead
    /// of using the true noise covariance (synthetic scenarios only).
    #[serde(default)]
    pub estimate_noise_covariance: bool,
}

fn default_trials() -> usize {
    200
}

fn default_methods() -> Vec<Method> {
    vec![Method::SvdDirect, Method::Cw]
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let spec: SweepSpec = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.values.is_empty() {
            return bad("values must be nonempty".into());
        }
        if self.n_trials == 0 {
            return bad("n_trials must be at least 1".into());
        }
        if self.methods.is_empty() {
            return bad("methods must be nonempty".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods must not repeat".into());
        }
        match self.scenario {
            ScenarioKind::Speech => {
                if matches!(self.swept_parameter, SweptParameter::UpsilonF | SweptParameter::RhoF) {
                    return bad(format!(
                        "{} cannot be swept in the speech scenario",
                        self.swept_parameter.name()
                    ));
                }
                if self.compute_bounds {
                    return bad("bounds are not available for the speech scenario".into());
                }
                for (i, _) in self.values.iter().enumerate() {
                    self.speech_config(i)?.validate().map_err(|e| point_error(self, i, e))?;
                }
            }
            _ => {
                if let Some(m) = self.methods.iter().find(|m| !m.uses_phase_adjustment()) {
                    return bad(format!(
                        "{m} needs STFT frames; synthetic scenarios support svd-direct and cw"
                    ));
                }
                for (i, _) in self.values.iter().enumerate() {
                    self.scenario_config(i)?.validate().map_err(|e| point_error(self, i, e))?;
                }
            }
        }
        Ok(())
    }

    /// Fixed configuration with sweep point `i` applied.
    pub fn scenario_config(&self, i: usize) -> Result<ScenarioConfig, HarnessError> {
        let v = self.values[i];
        let mut cfg = self.fixed.clone();
        cfg.powers = match self.scenario {
            ScenarioKind::Varcorrelated => PowerProfile::RandomUniform,
            _ => PowerProfile::Equal,
        };
        cfg.seed = self.base_seed;
        match self.swept_parameter {
            SweptParameter::UpsilonF => cfg.upsilon_f = v,
            SweptParameter::RhoF => cfg.rho_f = v,
            SweptParameter::SnrDb => cfg.snr_db = v,
            SweptParameter::Frames => cfg.frames = frames_value(self, i)?,
        }
        Ok(cfg)
    }

    pub fn speech_config(&self, i: usize) -> Result<SpeechConfig, HarnessError> {
        let mut cfg = self.speech.clone();
        cfg.repetitions = self.n_trials;
        cfg.seed = self.base_seed;
        match self.swept_parameter {
            SweptParameter::SnrDb => cfg.snr_db = self.values[i],
            SweptParameter::Frames => cfg.frames = frames_value(self, i)?,
            _ => unreachable!("rejected by validate"),
        }
        Ok(cfg)
    }
}

fn frames_value(spec: &SweepSpec, i: usize) -> Result<usize, HarnessError> {
    let v = spec.values[i];
    if v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
        Ok(v as usize)
    } else {
        Err(HarnessError::Config(format!("L must be a positive integer (got {v})")))
    }
}

pub(crate) fn point_error(spec: &SweepSpec, i: usize, source: wbrtf_core::Error) -> HarnessError {
    HarnessError::Point {
        parameter: spec.swept_parameter.name(),
        value: spec.values[i],
        source,
    }
}
