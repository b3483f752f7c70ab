//! Built-in models.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::hamcore::SystemDef;
use crate::orbits::OrbitFamily;

pub mod duffing;
pub mod holmes_marsden;
pub mod rtbp;

pub use duffing::{make_duffing_oscillator, make_duffing_planar, push_forward_planar};
pub use holmes_marsden::make_holmes_marsden;
pub use rtbp::make_rtbp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelId {
    DuffingOscillator,
    HolmesMarsden,
    RtbpMcGehee,
}

impl ModelId {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::DuffingOscillator => "duffing-oscillator",
            ModelId::HolmesMarsden => "holmes-marsden",
            ModelId::RtbpMcGehee => "rtbp-mcgehee",
        }
    }

    /// Parameter names and defaults.
    pub fn defaults(self) -> &'static [(&'static str, f64)] {
        match self {
            ModelId::DuffingOscillator => &[("alpha", 1.0), ("g0", 0.5)],
            ModelId::HolmesMarsden => &[("I0", 0.1), ("a2", -0.5), ("a3", 1.0 / 3.0), ("qc", 3.0)],
            ModelId::RtbpMcGehee => &[("rho0", 3.0), ("t_cap", 1e4)],
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "duffing-oscillator" => Ok(ModelId::DuffingOscillator),
            "holmes-marsden" => Ok(ModelId::HolmesMarsden),
            "rtbp-mcgehee" => Ok(ModelId::RtbpMcGehee),
            other => Err(Error::UnknownModel(other.to_string())),
        }
    }
}

/// Model id plus named parameters; missing parameters take defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub id: ModelId,
    pub params: BTreeMap<String, f64>,
}

impl ModelConfig {
    pub fn new(id: ModelId) -> Self {
        Self { id, params: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: f64) -> Self {
        self.params.insert(key.to_string(), value);
        self
    }

    /// Parameter value or its default.
    pub fn get(&self, key: &str) -> Result<f64> {
        if let Some(v) = self.params.get(key) {
            return Ok(*v);
        }
        self.id
            .defaults()
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| Error::InvalidInput(format!("{} has no parameter {key}", self.id)))
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.params {
            if !self.id.defaults().iter().any(|(d, _)| d == k) {
                return Err(Error::InvalidInput(format!("{} has no parameter {k}", self.id)));
            }
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("parameter {k} = {v}")));
            }
        }
        Ok(())
    }
}

/// A constructed model: the system, its homoclinic family and the energy
/// level of the loop.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub sys: SystemDef,
    pub family: OrbitFamily,
    pub h0: f64,
}

pub fn build_model(cfg: &ModelConfig) -> Result<Model> {
    cfg.validate()?;
    match cfg.id {
        ModelId::DuffingOscillator => make_duffing_oscillator(cfg.get("alpha")?, cfg.get("g0")?),
        ModelId::HolmesMarsden => {
            make_holmes_marsden(cfg.get("I0")?, holmes_marsden::Potential { a2: cfg.get("a2")?, a3: cfg.get("a3")?, qc: cfg.get("qc")? })
        }
        ModelId::RtbpMcGehee => make_rtbp(cfg.get("rho0")?, cfg.get("t_cap")?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in [ModelId::DuffingOscillator, ModelId::HolmesMarsden, ModelId::RtbpMcGehee] {
            assert_eq!(id.as_str().parse::<ModelId>().unwrap(), id);
        }
        assert!(matches!("kepler".parse::<ModelId>(), Err(Error::UnknownModel(_))));
    }

    #[test]
    fn unknown_parameter_rejected() {
        let c = ModelConfig::new(ModelId::RtbpMcGehee).with("alpha", 1.0);
        assert!(c.validate().is_err());
        assert_eq!(ModelConfig::new(ModelId::RtbpMcGehee).get("rho0").unwrap(), 3.0);
    }
}
