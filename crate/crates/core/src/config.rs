//! Run configuration loaded from JSON.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dynamics::RampShape;
use crate::error::{Error, Result};
use crate::hilbert::Frame;
use crate::model::SystemParams;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-9, atol: 1e-11 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub frame: Frame,
    /// Fock truncation per mode; chosen from the protocol when absent.
    pub fock_dim: Option<usize>,
    /// Largest integrator step in us; chosen from the frame when absent.
    pub dt_max: Option<f64>,
    pub tolerances: Tolerances,
    /// Concurrent simulations in sweeps and studies.
    pub workers: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { frame: Frame::JcFrame, fock_dim: None, dt_max: None, tolerances: Tolerances::default(), workers: 1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolName {
    Fock,
    Swap,
    Bell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: ProtocolName,
    pub n: usize,
    pub ramp_ns: f64,
    pub ramp_shape: RampShape,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self { name: ProtocolName::Fock, n: 1, ramp_ns: 200.0, ramp_shape: RampShape::Cosine }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Svg,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { directory: PathBuf::from("out"), formats: vec![OutputFormat::Csv, OutputFormat::Json, OutputFormat::Svg] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemParams,
    /// Lab-frame transition frequencies in GHz. Kept for reference only; the
    /// simulations work in rotating frames where they cancel.
    pub frequencies_ghz: BTreeMap<String, f64>,
    pub simulation: SimulationConfig,
    pub protocol: ProtocolConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    /// The measured device, including its lab frequencies.
    pub fn paper() -> Self {
        let frequencies_ghz =
            [("mem1", 6.915), ("mem2", 5.333), ("qubit", 6.269), ("readout", 7.706)].map(|(k, v)| (k.to_string(), v));
        Self { frequencies_ghz: BTreeMap::from(frequencies_ghz), ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate().map_err(|e| match e {
            Error::InvalidParams { field, reason } => Error::ConfigField { path: format!("system.{field}"), message: reason },
            other => other,
        })?;
        let field = |path: &str, message: &str| Err(Error::ConfigField { path: path.into(), message: message.into() });
        if let Some(d) = self.simulation.fock_dim {
            if d < 2 {
                return field("simulation.fock_dim", "needs at least 2 levels");
            }
        }
        if let Some(dt) = self.simulation.dt_max {
            if !(dt > 0.0 && dt.is_finite()) {
                return field("simulation.dt_max", "must be positive");
            }
        }
        let tol = &self.simulation.tolerances;
        if !(tol.rtol > 0.0 && tol.rtol < 1.0) {
            return field("simulation.tolerances.rtol", "must lie in (0, 1)");
        }
        if !(tol.atol > 0.0 && tol.atol.is_finite()) {
            return field("simulation.tolerances.atol", "must be positive");
        }
        if self.simulation.workers == 0 {
            return field("simulation.workers", "must be at least 1");
        }
        if self.protocol.n == 0 {
            return field("protocol.n", "must be at least 1");
        }
        if !(self.protocol.ramp_ns >= 0.0 && self.protocol.ramp_ns.is_finite()) {
            return field("protocol.ramp_ns", "must be non-negative");
        }
        for (k, v) in &self.frequencies_ghz {
            if !(v.is_finite() && *v > 0.0) {
                return field(&format!("frequencies_ghz.{k}"), "must be positive");
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig = parse_json(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Reads and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_json(&text)
}

/// JSON decoding with line/column on syntax errors and the field path on
/// type or unknown-field errors.
pub(crate) fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            Error::ConfigParse { line: inner.line(), column: inner.column(), message: inner.to_string() }
        } else {
            Error::ConfigField { path, message: inner.to_string() }
        }
    })?;
    de.end().map_err(|e| Error::ConfigParse { line: e.line(), column: e.column(), message: e.to_string() })?;
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_measured_device() {
        let c = RunConfig::from_json("{}").unwrap();
        assert_eq!(c.system.rabi_freq, 6.0);
        assert_eq!(c.system.chi_1, 0.035);
        let paper = RunConfig::paper();
        assert_eq!(RunConfig::from_json(&paper.to_json().unwrap()).unwrap(), paper);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let c = RunConfig::from_json(r#"{"system": {"rabi_freq": 12}, "simulation": {"frame": "drive"}}"#).unwrap();
        assert_eq!(c.system.rabi_freq, 12.0);
        assert_eq!(c.system.chi_2, 0.020);
        assert_eq!(c.simulation.frame, Frame::DriveFrame);
    }

    #[test]
    fn errors_name_their_location() {
        match RunConfig::from_json(r#"{"system": {"t2_echo_qubit": 50.0}}"#) {
            Err(Error::ConfigField { path, .. }) => assert_eq!(path, "system.t2_echo_qubit"),
            other => panic!("{other:?}"),
        }
        match RunConfig::from_json(r#"{"system": {"rabi": 6}}"#) {
            Err(Error::ConfigField { path, message }) => {
                assert_eq!(path, "system.rabi");
                assert!(message.contains("unknown field"));
            }
            other => panic!("{other:?}"),
        }
        match RunConfig::from_json("{\n  \"protocol\": {\"n\": 2,}\n}") {
            Err(Error::ConfigParse { line, column, .. }) => assert_eq!((line, column), (2, 23)),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::from_json(""), Err(Error::ConfigParse { .. })));
        assert!(matches!(RunConfig::from_json("{} {}"), Err(Error::ConfigParse { .. })));
        assert!(matches!(RunConfig::from_json(r#"{"protocol": {"n": 0}}"#), Err(Error::ConfigField { .. })));
    }

    #[test]
    fn frequencies_are_recorded_verbatim() {
        let c = RunConfig::from_json(r#"{"frequencies_ghz": {"mem1": 6.915, "qubit": 6.269}}"#).unwrap();
        assert_eq!(c.frequencies_ghz["mem1"], 6.915);
        assert_eq!(c.frequencies_ghz.len(), 2);
    }
}
