// Copyright 2026 optomech contributors
// SPDX-License-Identifier: Apache-2.0

//! Experiment configuration files and the shipped parameter presets.
//!
//! A config is TOML with one table per section:
//!
//! ```toml
//! [system]
//! kind = "single"        # or "double"; required
//! g0 = 0.839
//! mech_dim = 10
//!
//! [target]
//! state = "fock"         # "fock", "superposition" or "bell"; required
//! n = 2
//!
//! [schedule]
//! total_time = 50.0
//! steps = 50
//!
//! [rl]
//! seed = 1
//! ```
//!
//! Every other key has a default. Unknown sections and keys are rejected.
//! For a two-resonator system the second mode uses the `omega_m2`, `g02`,
//! `gamma_m2`, `n_th2` and `mech_dim2` keys.

use std::fmt;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::control::{BellState, EpisodeSpec, FidelityMode, TargetSpec};
use crate::dynamics::IntegratorOptions;
use crate::error::{Error, Result};
use crate::hilbert::{MechanicalMode, SystemConfig, SystemKind};
use crate::rl::Hyperparameters;

/// Names accepted by [`preset`].
pub const PRESETS: [&str; 7] = ["fock2", "fock6", "sup02", "sup06", "sup12", "bell_phi_plus", "bell_psi_plus"];

/// Flat physical parameters. Unset keys fall back to kind-dependent defaults
/// when resolved by [`SystemSection::resolve`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub kind: SystemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cavity_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mech_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g02: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_m2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mech_dim2: Option<usize>,
}

impl SystemSection {
    pub fn new(kind: SystemKind) -> Self {
        SystemSection {
            kind,
            cavity_dim: None,
            kappa: None,
            omega_m: None,
            g0: None,
            gamma_m: None,
            n_th: None,
            mech_dim: None,
            omega_m2: None,
            g02: None,
            gamma_m2: None,
            n_th2: None,
            mech_dim2: None,
        }
    }

    /// Fills defaults and validates every parameter.
    pub fn resolve(&self) -> Result<SystemConfig> {
        let double = self.kind == SystemKind::Double;
        if !double {
            let second = [
                ("omega_m2", self.omega_m2.is_some()),
                ("g02", self.g02.is_some()),
                ("gamma_m2", self.gamma_m2.is_some()),
                ("n_th2", self.n_th2.is_some()),
                ("mech_dim2", self.mech_dim2.is_some()),
            ];
            if let Some((key, _)) = second.iter().find(|(_, set)| *set) {
                return Err(config_err(format!("system.{key}"), "only valid with kind = \"double\""));
            }
        }
        let cavity_dim = self.cavity_dim.unwrap_or(3);
        if cavity_dim < 2 {
            return Err(config_err("system.cavity_dim", format!("expected an integer >= 2, got {cavity_dim}")));
        }
        let kappa = nonneg("system.kappa", self.kappa.unwrap_or(0.002))?;
        let mode1 = MechanicalMode {
            omega: positive("system.omega_m", self.omega_m.unwrap_or(1.0))?,
            g0: finite("system.g0", self.g0.unwrap_or(if double { 1.0 } else { 0.839 }))?,
            gamma: nonneg("system.gamma_m", self.gamma_m.unwrap_or(0.0004))?,
            n_th: nonneg("system.n_th", self.n_th.unwrap_or(0.0))?,
            dim: dim("system.mech_dim", self.mech_dim.unwrap_or(if double { 5 } else { 10 }))?,
        };
        let cfg = if double {
            let mode2 = MechanicalMode {
                omega: positive("system.omega_m2", self.omega_m2.unwrap_or(0.918))?,
                g0: finite("system.g02", self.g02.unwrap_or(0.918))?,
                gamma: nonneg("system.gamma_m2", self.gamma_m2.unwrap_or(0.0004))?,
                n_th: nonneg("system.n_th2", self.n_th2.unwrap_or(0.0))?,
                dim: dim("system.mech_dim2", self.mech_dim2.unwrap_or(5))?,
            };
            SystemConfig::double(cavity_dim, kappa, mode1, mode2)
        } else {
            SystemConfig::single(cavity_dim, kappa, mode1)
        };
        cfg.map_err(|e| prefixed("system", e))
    }
}

/// Target state. Superposition amplitudes are real, default to equal
/// weights and are normalized on load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "lowercase", deny_unknown_fields)]
pub enum TargetSection {
    Fock {
        n: usize,
    },
    Superposition {
        components: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        amplitudes: Option<Vec<f64>>,
    },
    Bell {
        which: BellState,
    },
}

impl TargetSection {
    pub fn resolve(&self) -> Result<TargetSpec> {
        match self {
            TargetSection::Fock { n } => Ok(TargetSpec::fock(*n)),
            TargetSection::Bell { which } => Ok(TargetSpec::bell(*which)),
            TargetSection::Superposition { components, amplitudes } => {
                if components.len() < 2 {
                    return Err(config_err("target.components", "expected at least two Fock indices"));
                }
                let amps = match amplitudes {
                    None => vec![1.0; components.len()],
                    Some(a) if a.len() == components.len() => a.clone(),
                    Some(a) => {
                        return Err(config_err(
                            "target.amplitudes",
                            format!("expected {} entries, got {}", components.len(), a.len()),
                        ))
                    }
                };
                let norm = amps.iter().map(|a| a * a).sum::<f64>().sqrt();
                if !(norm.is_finite() && norm > 0.0) {
                    return Err(config_err("target.amplitudes", "expected finite values with nonzero norm"));
                }
                let comps = components
                    .iter()
                    .zip(&amps)
                    .map(|(&n, &a)| (n, Complex64::new(a / norm, 0.0)))
                    .collect();
                TargetSpec::superposition(comps).map_err(|e| prefixed("target", e))
            }
        }
    }
}

/// Control grid: total time `T`, step count `S` and amplitude bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSection {
    #[serde(default = "default_total_time")]
    pub total_time: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Defaults to `0.2 · omega_m`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        ScheduleSection {
            total_time: default_total_time(),
            steps: default_steps(),
            omega_max: None,
        }
    }
}

fn default_total_time() -> f64 {
    50.0
}

fn default_steps() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentSection {
    pub fidelity: FidelityMode,
    pub accuracy: f64,
    pub trace_tolerance: f64,
    pub check_positivity: bool,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        let o = IntegratorOptions::default();
        EnvironmentSection {
            fidelity: FidelityMode::default(),
            accuracy: o.accuracy,
            trace_tolerance: o.trace_tolerance,
            check_positivity: o.check_positivity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("runs/out") }
    }
}

/// One experiment: system, target, control grid, environment switches,
/// training hyperparameters and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemSection,
    pub target: TargetSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub rl: Hyperparameters,
    #[serde(default)]
    pub output: OutputSection,
}

const SECTIONS: [&str; 6] = ["system", "target", "schedule", "environment", "rl", "output"];

impl ExperimentConfig {
    pub fn system_config(&self) -> Result<SystemConfig> {
        self.system.resolve()
    }

    pub fn target_spec(&self) -> Result<TargetSpec> {
        self.target.resolve()
    }

    pub fn omega_max(&self) -> Result<f64> {
        let cfg = self.system_config()?;
        positive("schedule.omega_max", self.schedule.omega_max.unwrap_or(0.2 * cfg.omega_ref()))
    }

    pub fn episode_spec(&self) -> Result<EpisodeSpec> {
        let s = &self.schedule;
        if s.steps == 0 {
            return Err(config_err("schedule.steps", "expected an integer >= 1"));
        }
        let e = &self.environment;
        if !(e.accuracy.is_finite() && e.accuracy > 0.0 && e.accuracy <= 1.0) {
            return Err(config_err("environment.accuracy", format!("expected a value in (0, 1], got {}", e.accuracy)));
        }
        Ok(EpisodeSpec {
            total_time: positive("schedule.total_time", s.total_time)?,
            steps: s.steps,
            omega_max: self.omega_max()?,
            fidelity: e.fidelity,
            integrator: IntegratorOptions {
                accuracy: e.accuracy,
                trace_tolerance: positive("environment.trace_tolerance", e.trace_tolerance)?,
                check_positivity: e.check_positivity,
            },
        })
    }

    /// Checks every section, reporting the first offending key.
    pub fn validate(&self) -> Result<()> {
        let cfg = self.system_config()?;
        let target = self.target_spec()?;
        self.episode_spec()?;
        self.rl.validate().map_err(|e| prefixed("rl", e))?;
        crate::hilbert::carrier_detunings(&target, &cfg).map_err(|e| match e {
            Error::UnsupportedTarget(reason) => config_err("target", reason),
            other => prefixed("target", other),
        })?;
        target.state_vector(&cfg.mech_dims()).map_err(|e| prefixed("target", e))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<serialize>", e.to_string()))
    }

    /// Parses TOML text and validates it.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| {
            let reason = e.message().to_string();
            config_err(key_hint(&reason).unwrap_or_else(|| "<toml>".into()), e.to_string())
        })?;
        let value = serde_json::to_value(table).map_err(|e| config_err("<toml>", e.to_string()))?;
        Self::from_value(value)
    }

    /// Builds a config from a JSON-like tree, checking one section at a time
    /// so that errors carry the section name.
    pub fn from_value(value: Value) -> Result<Self> {
        let Value::Object(mut map) = value else {
            return Err(config_err("<root>", "expected a table of sections"));
        };
        if let Some(unknown) = map.keys().find(|k| !SECTIONS.contains(&k.as_str())) {
            return Err(config_err(unknown.clone(), format!("unknown section, expected one of {SECTIONS:?}")));
        }
        let system = section(&mut map, "system")?.ok_or_else(|| config_err("system", "missing required section"))?;
        let target = section(&mut map, "target")?.ok_or_else(|| config_err("target", "missing required section"))?;
        let cfg = ExperimentConfig {
            system,
            target,
            schedule: section(&mut map, "schedule")?.unwrap_or_default(),
            environment: section(&mut map, "environment")?.unwrap_or_default(),
            rl: section(&mut map, "rl")?.unwrap_or_default(),
            output: section(&mut map, "output")?.unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ExperimentConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.to_toml() {
            Ok(s) => f.write_str(&s),
            Err(_) => Err(fmt::Error),
        }
    }
}

fn section<T: DeserializeOwned>(map: &mut serde_json::Map<String, Value>, name: &str) -> Result<Option<T>> {
    match map.remove(name) {
        None => Ok(None),
        Some(v) => serde_json::from_value(v).map(Some).map_err(|e| {
            let reason = e.to_string();
            let key = match key_hint(&reason) {
                Some(k) => format!("{name}.{k}"),
                None => name.to_string(),
            };
            config_err(key, reason)
        }),
    }
}

// First backquoted identifier in a serde message, e.g. "unknown field `kapa`".
fn key_hint(msg: &str) -> Option<String> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(msg[start..start + len].to_string())
}

/// Loads a TOML config, or the config echoed in a run manifest (`.json`).
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "json") {
        let mut v: Value = serde_json::from_str(&text).map_err(|e| config_err("<json>", e.to_string()))?;
        if let Some(inner) = v.get_mut("config") {
            v = inner.take();
        }
        ExperimentConfig::from_value(v)
    } else {
        ExperimentConfig::from_toml_str(&text)
    }
}

/// Parameter set pinned to a published figure.
pub fn preset(name: &str) -> Result<ExperimentConfig> {
    let single = |g0: f64, mech_dim: usize| SystemSection {
        cavity_dim: Some(3),
        kappa: Some(0.002),
        omega_m: Some(1.0),
        g0: Some(g0),
        gamma_m: Some(0.0004),
        n_th: Some(0.0),
        mech_dim: Some(mech_dim),
        ..SystemSection::new(SystemKind::Single)
    };
    let double = |g02: f64, omega_m2: f64, kappa: f64, gamma: f64| SystemSection {
        cavity_dim: Some(3),
        kappa: Some(kappa),
        omega_m: Some(1.0),
        g0: Some(1.0),
        gamma_m: Some(gamma),
        n_th: Some(0.0),
        mech_dim: Some(5),
        omega_m2: Some(omega_m2),
        g02: Some(g02),
        gamma_m2: Some(gamma),
        n_th2: Some(0.0),
        mech_dim2: Some(5),
        ..SystemSection::new(SystemKind::Double)
    };
    let sup = |a: usize, b: usize| TargetSection::Superposition {
        components: vec![a, b],
        amplitudes: None,
    };
    let (system, target, steps) = match name {
        "fock2" => (single(0.839, 10), TargetSection::Fock { n: 2 }, 50),
        "fock6" => (single(1.752, 13), TargetSection::Fock { n: 6 }, 98),
        "sup02" => (single(0.78, 11), sup(0, 2), 50),
        "sup06" => (single(1.716, 13), sup(0, 6), 98),
        "sup12" => (single(0.89, 10), sup(1, 2), 50),
        "bell_phi_plus" => (
            double(0.918, 0.918, 0.002, 0.0004),
            TargetSection::Bell { which: BellState::PhiPlus },
            100,
        ),
        "bell_psi_plus" => (
            double(0.595, 0.598, 0.001, 0.0002),
            TargetSection::Bell { which: BellState::PsiPlus },
            100,
        ),
        other => {
            return Err(config_err("preset", format!("unknown preset {other:?}, expected one of {PRESETS:?}")));
        }
    };
    let cfg = ExperimentConfig {
        system,
        target,
        schedule: ScheduleSection {
            total_time: steps as f64,
            steps,
            omega_max: Some(0.2),
        },
        environment: EnvironmentSection::default(),
        rl: Hyperparameters::default(),
        output: OutputSection {
            dir: PathBuf::from("runs").join(name),
        },
    };
    cfg.validate()?;
    Ok(cfg)
}

pub(crate) fn config_err(key: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

fn prefixed(section: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { name, reason } => config_err(format!("{section}.{name}"), reason),
        Error::Config { .. } => e,
        other => config_err(section, other.to_string()),
    }
}

fn finite(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(config_err(key, format!("expected a finite number, got {v}")))
    }
}

fn nonneg(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(config_err(key, format!("expected a finite number >= 0, got {v}")))
    }
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(config_err(key, format!("expected a finite number > 0, got {v}")))
    }
}

fn dim(key: &str, v: usize) -> Result<usize> {
    if v >= 2 {
        Ok(v)
    } else {
        Err(config_err(key, format!("expected an integer >= 2, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn fock2_preset_values() {
        let c = preset("fock2").unwrap();
        let sys = c.system_config().unwrap();
        assert_eq!(sys.cavity_dim, 3);
        assert_eq!(sys.kappa, 0.002);
        let m = sys.modes[0];
        assert_eq!((m.omega, m.g0, m.gamma, m.n_th, m.dim), (1.0, 0.839, 0.0004, 0.0, 10));
        assert_eq!(c.schedule.steps, 50);
        assert_eq!(c.schedule.total_time, 50.0);
        assert_eq!(c.target_spec().unwrap(), TargetSpec::fock(2));
    }

    #[test]
    fn bell_preset_values() {
        let c = preset("bell_phi_plus").unwrap();
        let sys = c.system_config().unwrap();
        assert_eq!(sys.modes[0].g0, 1.0);
        assert_eq!(sys.modes[1].g0, 0.918);
        assert_eq!(sys.modes[1].omega, 0.918);
        assert_eq!(sys.mech_dims(), vec![5, 5]);
        assert_eq!(c.schedule.steps, 100);
        let p = preset("bell_psi_plus").unwrap().system_config().unwrap();
        assert_eq!((p.kappa, p.modes[1].g0, p.modes[1].omega), (0.001, 0.595, 0.598));
    }

    #[test]
    fn all_presets_round_trip() {
        for name in PRESETS {
            let c = preset(name).unwrap();
            let text = c.to_toml().unwrap();
            assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), c, "{name}");
        }
        assert!(preset("fock3").is_err());
    }

    #[test]
    fn minimal_config_uses_defaults() {
        let c = ExperimentConfig::from_toml_str("[system]\nkind = \"single\"\n[target]\nstate = \"fock\"\nn = 2\n").unwrap();
        let sys = c.system_config().unwrap();
        assert_eq!(sys, preset("fock2").unwrap().system_config().unwrap());
        assert_eq!(c.omega_max().unwrap(), 0.2);
        assert_eq!(c.rl, Hyperparameters::default());
    }

    #[test]
    fn errors_name_the_key() {
        let base = "[target]\nstate = \"fock\"\nn = 2\n[system]\nkind = \"single\"\n";
        let e = ExperimentConfig::from_toml_str(&format!("{base}kappa = -0.1\n")).unwrap_err();
        assert_eq!(key_of(e), "system.kappa");
        let e = ExperimentConfig::from_toml_str(&format!("{base}kapa = 0.1\n")).unwrap_err();
        assert_eq!(key_of(e), "system.kapa");
        let e = ExperimentConfig::from_toml_str(&format!("{base}g02 = 0.1\n")).unwrap_err();
        assert_eq!(key_of(e), "system.g02");
        let e = ExperimentConfig::from_toml_str(&format!("{base}[rl]\ntau = 2.0\n")).unwrap_err();
        assert_eq!(key_of(e), "rl.tau");
        let e = ExperimentConfig::from_toml_str(&format!("{base}[extra]\na = 1\n")).unwrap_err();
        assert_eq!(key_of(e), "extra");
        let e = ExperimentConfig::from_toml_str("[target]\nstate = \"fock\"\nn = 2\n").unwrap_err();
        assert_eq!(key_of(e), "system");
        let e = ExperimentConfig::from_toml_str("[system]\nkind = \"single\"\n[target]\nstate = \"bell\"\nwhich = \"phi_plus\"\n")
            .unwrap_err();
        assert_eq!(key_of(e), "target");
        assert!(ExperimentConfig::from_toml_str("not toml [").unwrap_err().is_config_error());
    }

    #[test]
    fn superposition_amplitudes_normalized() {
        let c = ExperimentConfig::from_toml_str(
            "[system]\nkind = \"single\"\n[target]\nstate = \"superposition\"\ncomponents = [0, 2]\namplitudes = [1.0, 1.0]\n",
        )
        .unwrap();
        assert_eq!(c.target_spec().unwrap(), TargetSpec::equal_superposition(&[0, 2]).unwrap());
    }

    #[test]
    fn loads_files_and_manifests() {
        let dir = tempfile::tempdir().unwrap();
        let c = preset("sup12").unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(&toml_path, c.to_toml().unwrap()).unwrap();
        assert_eq!(load_config(&toml_path).unwrap(), c);
        let json_path = dir.path().join("manifest.json");
        let manifest = serde_json::json!({ "status": "complete", "config": c });
        std::fs::write(&json_path, manifest.to_string()).unwrap();
        assert_eq!(load_config(&json_path).unwrap(), c);
        assert!(matches!(load_config(&dir.path().join("missing.toml")), Err(Error::Io { .. })));
    }
}
