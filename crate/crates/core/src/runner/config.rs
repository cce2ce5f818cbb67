//! Declarative scenario description, loaded from TOML and overridden by
//! command-line flags.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{CompleteSwapParams, Model, PartialSwapParams, SettingPair};
use crate::settings::{AnglePair, BobSweep};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    #[default]
    Singlet,
    PartialSwap,
    CompleteSwap,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Singlet => "singlet",
            Scenario::PartialSwap => "partial_swap",
            Scenario::CompleteSwap => "complete_swap",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "singlet" => Ok(Scenario::Singlet),
            "partial_swap" => Ok(Scenario::PartialSwap),
            "complete_swap" => Ok(Scenario::CompleteSwap),
            _ => Err(Error::config(
                "scenario",
                format!("`{s}` is not one of singlet, partial_swap, complete_swap"),
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::config("output_format", format!("`{s}` is not csv or json"))),
        }
    }
}

/// One experiment. Every field has a default, so a config file only needs
/// the fields it changes.
///
/// `n_trials` counts trials per analyzer setting; when absent each command
/// uses its own default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub eta: Option<f64>,
    pub limit: Option<f64>,
    pub n_trials: Option<u64>,
    pub seed: u64,
    pub n_shards: usize,
    pub alice_setting: AnglePair,
    pub bob_settings: Option<Vec<AnglePair>>,
    pub bob_sweep: Option<BobSweep>,
    pub limits: Option<Vec<f64>>,
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Singlet,
            eta: None,
            limit: None,
            n_trials: None,
            seed: 1,
            n_shards: 8,
            alice_setting: AnglePair(0.0, 0.0),
            bob_settings: None,
            bob_sweep: None,
            limits: None,
            output_path: None,
            output_format: OutputFormat::Csv,
        }
    }
}

fn check_unit_interval(field: &str, x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::config(field, format!("{x} is outside [0, 1]")));
    }
    Ok(())
}

fn check_angles(field: &str, p: &AnglePair) -> Result<()> {
    if !p.0.is_finite() || !p.1.is_finite() {
        return Err(Error::config(field, "angles must be finite"));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    /// Checks every field; the error names the first offending one.
    pub fn validate(&self) -> Result<()> {
        if self.n_trials == Some(0) {
            return Err(Error::config("n_trials", "must be at least 1"));
        }
        if self.n_shards == 0 {
            return Err(Error::config("n_shards", "must be at least 1"));
        }
        match self.scenario {
            Scenario::Singlet => {}
            Scenario::PartialSwap => {
                let eta = self.eta.ok_or_else(|| Error::config("eta", "required for partial_swap"))?;
                check_unit_interval("eta", eta)?;
            }
            Scenario::CompleteSwap => {
                let limit = self.limit.ok_or_else(|| Error::config("limit", "required for complete_swap"))?;
                check_unit_interval("limit", limit)?;
            }
        }
        if let Some(eta) = self.eta {
            check_unit_interval("eta", eta)?;
        }
        if let Some(limit) = self.limit {
            check_unit_interval("limit", limit)?;
        }
        check_angles("alice_setting", &self.alice_setting)?;
        if self.bob_settings.is_some() && self.bob_sweep.is_some() {
            return Err(Error::config("bob_settings", "give either bob_settings or bob_sweep, not both"));
        }
        if let Some(list) = &self.bob_settings {
            if list.is_empty() {
                return Err(Error::config("bob_settings", "list is empty"));
            }
            for b in list {
                check_angles("bob_settings", b)?;
            }
        }
        if let Some(sweep) = &self.bob_sweep {
            sweep.validate()?;
        }
        if let Some(limits) = &self.limits {
            if limits.is_empty() {
                return Err(Error::config("limits", "list is empty"));
            }
            for &l in limits {
                check_unit_interval("limits", l)?;
            }
        }
        Ok(())
    }

    pub fn trials_or(&self, default: u64) -> u64 {
        self.n_trials.unwrap_or(default)
    }

    /// The trial generator for the configured scenario.
    pub fn model(&self) -> Result<Model<f64>> {
        Ok(match self.scenario {
            Scenario::Singlet => Model::Singlet,
            Scenario::PartialSwap => Model::PartialSwap(PartialSwapParams::new(
                self.eta.ok_or_else(|| Error::config("eta", "required for partial_swap"))?,
            )?),
            Scenario::CompleteSwap => Model::CompleteSwap(CompleteSwapParams::new(
                self.limit.ok_or_else(|| Error::config("limit", "required for complete_swap"))?,
            )?),
        })
    }

    /// Bob's directions in setting order: the explicit list, the sweep, or
    /// Alice's own direction when neither is given.
    pub fn bob_directions(&self) -> Vec<AnglePair> {
        if let Some(list) = &self.bob_settings {
            return list.clone();
        }
        if let Some(sweep) = &self.bob_sweep {
            return sweep
                .angles_deg()
                .into_iter()
                .map(|t| AnglePair::from_direction(&sweep.plane.direction(t)))
                .collect();
        }
        vec![self.alice_setting]
    }

    pub fn setting_pairs(&self) -> Vec<SettingPair<f64>> {
        let a = self.alice_setting.direction();
        match &self.bob_sweep {
            Some(sweep) if self.bob_settings.is_none() => sweep
                .angles_deg()
                .into_iter()
                .enumerate()
                .map(|(i, t)| SettingPair::new(i, a, sweep.plane.direction(t)))
                .collect(),
            _ => self
                .bob_directions()
                .iter()
                .enumerate()
                .map(|(i, b)| SettingPair::new(i, a, b.direction()))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::settings::SweepPlane;

    #[test]
    fn parses_minimal_file() {
        let cfg = ScenarioConfig::from_toml_str("scenario = \"partial_swap\"\neta = 0.4\n").unwrap();
        assert_eq!(cfg.scenario, Scenario::PartialSwap);
        assert_eq!(cfg.eta, Some(0.4));
        assert_eq!(cfg.n_shards, 8);
        cfg.validate().unwrap();
    }

    #[test]
    fn parses_full_file() {
        let text = r#"
scenario = "complete_swap"
limit = 0.5
n_trials = 1000
seed = 7
n_shards = 3
alice_setting = [90.0, 0.0]
limits = [0.0, 0.5]
output_path = "out.csv"
output_format = "json"

[bob_sweep]
plane = "xy"
start_deg = 0.0
stop_deg = 360.0
step_deg = 10.0
"#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.bob_sweep.unwrap().plane, SweepPlane::Xy);
        assert_eq!(cfg.setting_pairs().len(), 36);
        assert_eq!(cfg.output_format, OutputFormat::Json);
        let back = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = ScenarioConfig::from_toml_str("scenaro = \"singlet\"\n").unwrap_err();
        assert!(err.to_string().contains("scenaro"), "{err}");
    }

    fn field_of(cfg: &ScenarioConfig) -> String {
        match cfg.validate().unwrap_err() {
            Error::Config { field, .. } => field,
            e => panic!("unexpected error {e}"),
        }
    }

    #[test]
    fn validation_names_the_field() {
        let base = ScenarioConfig::default();
        let cases: Vec<(ScenarioConfig, &str)> = vec![
            (ScenarioConfig { n_trials: Some(0), ..base.clone() }, "n_trials"),
            (ScenarioConfig { n_shards: 0, ..base.clone() }, "n_shards"),
            (ScenarioConfig { scenario: Scenario::PartialSwap, ..base.clone() }, "eta"),
            (
                ScenarioConfig {
                    scenario: Scenario::PartialSwap,
                    eta: Some(1.5),
                    ..base.clone()
                },
                "eta",
            ),
            (ScenarioConfig { scenario: Scenario::CompleteSwap, ..base.clone() }, "limit"),
            (ScenarioConfig { limits: Some(vec![0.2, -0.1]), ..base.clone() }, "limits"),
            (
                ScenarioConfig {
                    bob_settings: Some(vec![AnglePair(0.0, 0.0)]),
                    bob_sweep: Some("plane=xz,start=0,stop=360,step=5".parse().unwrap()),
                    ..base.clone()
                },
                "bob_settings",
            ),
            (
                ScenarioConfig {
                    bob_sweep: Some(BobSweep {
                        plane: SweepPlane::Xz,
                        start_deg: 0.0,
                        stop_deg: 360.0,
                        step_deg: 7.0,
                    }),
                    ..base.clone()
                },
                "bob_sweep.step_deg",
            ),
        ];
        for (cfg, field) in cases {
            assert_eq!(field_of(&cfg), field);
        }
    }

    #[test]
    fn default_bob_is_parallel() {
        let cfg = ScenarioConfig {
            alice_setting: AnglePair(30.0, 60.0),
            ..Default::default()
        };
        let pairs = cfg.setting_pairs();
        assert_eq!(pairs.len(), 1);
        assert!((pairs[0].alice.dot(&pairs[0].bob) - 1.0).abs() < 1e-15);
    }
}
