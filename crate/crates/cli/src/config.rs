//! Experiment configuration files (TOML).
//!
//! ```toml
//! name = "kirman"
//! t_end = 1000.0
//! sample_dt = 0.1
//! burn_in = 0.1
//! ensemble = 4
//! seed = 7
//!
//! [model.jump]
//! kind = "two-state"
//! sigma1 = 0.2
//! sigma2 = 0.2
//! h = 1.0
//! N = 100
//!
//! [analysis]
//! segment_len = 4096
//! ```
//!
//! Exactly one of `[model.jump]` or `[model.sde]` must be present. Run `i`
//! of an ensemble uses seed `seed + i`.

use std::path::{Path, PathBuf};

use herdlab_core::jump::JumpModel;
use herdlab_core::sde::{Boundary, IntegratorConfig, Sde, SdeModel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub t_end: f64,
    pub sample_dt: f64,
    /// Leading fraction of every run dropped before analysis.
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    #[serde(default = "default_ensemble")]
    pub ensemble: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    pub model: ModelSpec,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_burn_in() -> f64 {
    0.1
}

fn default_ensemble() -> usize {
    1
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Binary,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Binary => "bin",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jump: Option<JumpModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeModel>,
    /// Initial counts for jump models, initial state for SDEs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorOverrides>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundaries: Option<Vec<Boundary>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Column to analyse; defaults to the first one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub column: Option<String>,
    #[serde(default = "default_segment")]
    pub segment_len: usize,
    #[serde(default = "default_overlap")]
    pub overlap: f64,
    #[serde(default = "default_bpd")]
    pub bins_per_decade: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pdf_fit: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psd_fit: Option<[f64; 2]>,
    #[serde(default)]
    pub fracture: bool,
    /// For three-group models: analyse `|r|` over this return window
    /// instead of a raw column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_t: Option<f64>,
}

fn default_segment() -> usize {
    4096
}

fn default_overlap() -> f64 {
    0.5
}

fn default_bpd() -> usize {
    10
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            column: None,
            segment_len: default_segment(),
            overlap: default_overlap(),
            bins_per_decade: default_bpd(),
            pdf_fit: None,
            psd_fit: None,
            fracture: false,
            window_t: None,
        }
    }
}

/// The model of a config, resolved.
pub enum Model<'a> {
    Jump(&'a JumpModel),
    Sde(&'a SdeModel),
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn model(&self) -> Result<Model<'_>, CliError> {
        match (&self.model.jump, &self.model.sde) {
            (Some(j), None) => Ok(Model::Jump(j)),
            (None, Some(s)) => Ok(Model::Sde(s)),
            (None, None) => Err(CliError::Config(
                "no model: add a [model.jump] or [model.sde] table".into(),
            )),
            (Some(_), Some(_)) => Err(CliError::Config(
                "[model.jump] and [model.sde] are mutually exclusive".into(),
            )),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be positive, got {}", self.t_end));
        }
        if !(self.sample_dt > 0.0 && self.sample_dt <= self.t_end) {
            return bad(format!(
                "sample_dt must be in (0, t_end], got {}",
                self.sample_dt
            ));
        }
        if !(0.0..1.0).contains(&self.burn_in) {
            return bad(format!("burn_in must be in [0, 1), got {}", self.burn_in));
        }
        if self.ensemble == 0 {
            return bad("ensemble must be at least 1".into());
        }
        if self.seed.checked_add(self.ensemble as u64).is_none() {
            return bad("seed + ensemble overflows".into());
        }
        match self.model()? {
            Model::Jump(j) => {
                j.validate()?;
                if let Some(init) = &self.model.initial {
                    self.jump_initial_counts(init)?;
                }
            }
            Model::Sde(s) => {
                s.validate()?;
                self.integrator_config(s).validate(s.dim())?;
                if let Some(init) = &self.model.initial {
                    if init.len() != s.dim() {
                        return bad(format!(
                            "initial has {} entries, model needs {}",
                            init.len(),
                            s.dim()
                        ));
                    }
                }
            }
        }
        let a = &self.analysis;
        if !(a.segment_len >= 4 && a.segment_len.is_power_of_two()) {
            return bad("analysis.segment_len must be a power of two >= 4".into());
        }
        if !(0.0..1.0).contains(&a.overlap) {
            return bad("analysis.overlap must be in [0, 1)".into());
        }
        if a.bins_per_decade == 0 {
            return bad("analysis.bins_per_decade must be positive".into());
        }
        for r in [a.pdf_fit, a.psd_fit].into_iter().flatten() {
            if !(r[0] > 0.0 && r[1] > r[0]) {
                return bad(format!("fit range {r:?} must satisfy 0 < lo < hi"));
            }
        }
        Ok(())
    }

    pub fn jump_initial_counts(&self, init: &[f64]) -> Result<Vec<u32>, CliError> {
        let counts: Vec<u32> = init
            .iter()
            .map(|&v| {
                if v >= 0.0 && v.fract() == 0.0 && v <= u32::MAX as f64 {
                    Ok(v as u32)
                } else {
                    Err(CliError::Config(format!(
                        "initial count {v} is not a non-negative integer"
                    )))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(counts)
    }

    pub fn integrator_config(&self, model: &SdeModel) -> IntegratorConfig {
        let mut cfg = IntegratorConfig::for_model(model, self.sample_dt);
        if let Some(o) = &self.model.integrator {
            if let Some(k) = o.kappa {
                cfg.kappa = k;
            }
            if let Some(m) = o.max_dt {
                cfg.max_dt = m;
            }
            if let Some(b) = &o.boundaries {
                cfg.boundaries = b.clone();
            }
        }
        cfg
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.ensemble as u64).map(|i| self.seed + i).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KIRMAN: &str = r#"
name = "kirman"
t_end = 100.0
sample_dt = 0.5
ensemble = 3
seed = 11

[model.jump]
kind = "two-state"
sigma1 = 0.2
sigma2 = 0.3
h = 1.0
N = 50
"#;

    #[test]
    fn parses_minimal_config() {
        let c = ExperimentConfig::from_toml(KIRMAN).unwrap();
        assert_eq!(c.seeds(), vec![11, 12, 13]);
        assert_eq!(c.burn_in, 0.1);
        assert!(matches!(c.model().unwrap(), Model::Jump(JumpModel::TwoState(p)) if p.n == 50));
    }

    #[test]
    fn round_trip_is_identity() {
        let c = ExperimentConfig::from_toml(KIRMAN).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn sde_config_with_overrides() {
        let text = r#"
t_end = 10.0
sample_dt = 0.01
[model.sde]
kind = "three-state-transformed"
eps_cf = 3.0
eps_fc = 3.0
eps_cc = 3.0
H = 100.0
alpha = 2.0
N = 1000
[model.integrator]
kappa = 0.1
[analysis]
window_t = 1.0
fracture = true
"#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        let Model::Sde(m) = c.model().unwrap() else {
            panic!()
        };
        assert_eq!(c.integrator_config(m).kappa, 0.1);
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_configs() {
        let no_model = "t_end = 1.0\nsample_dt = 0.1\n[model]\n";
        assert!(ExperimentConfig::from_toml(no_model).is_err());
        let typo = KIRMAN.replace("ensemble", "ensembel");
        assert!(ExperimentConfig::from_toml(&typo).is_err());
        let neg = KIRMAN.replace("sigma1 = 0.2", "sigma1 = -0.2");
        assert!(ExperimentConfig::from_toml(&neg).is_err());
        let dt = KIRMAN.replace("sample_dt = 0.5", "sample_dt = 500.0");
        assert!(ExperimentConfig::from_toml(&dt).is_err());
    }
}
