use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use subharm::hb::HbSettings;
use subharm::model::{
    build_boost_pvmc, build_model, input, CompensatorParams, PowerStageParams, Scheme,
    SwitchedLinearModel,
};
use subharm::numerics::Vector;
use subharm::presets::preset;
use subharm::sim::PERIOD_TOL;

/// Problems with the user's input, reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyChoice {
    #[default]
    Buck,
    /// Boost power stage; proportional voltage mode only.
    Boost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub power_stage: PowerStageParams,
    pub compensator: CompensatorParams,
    #[serde(default)]
    pub topology: TopologyChoice,
    #[serde(default)]
    pub hb: HbSettings,
    #[serde(default = "default_period_tol")]
    pub period_tol: f64,
}

fn default_period_tol() -> f64 {
    PERIOD_TOL
}

pub const STAGE_PARAMS: [&str; 8] = ["L", "C", "R", "Rc", "vs", "vr", "Vh", "fs"];

impl RunConfig {
    pub fn from_preset(n: u8) -> anyhow::Result<Self> {
        let p = preset(n).map_err(|e| config_error(e.to_string()))?;
        Ok(RunConfig {
            power_stage: p.power_stage,
            compensator: p.compensator,
            topology: TopologyChoice::Buck,
            hb: HbSettings::default(),
            period_tol: PERIOD_TOL,
        })
    }

    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_error(format!("invalid config at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let field = |section: &str, e: subharm::error::Error| {
            config_error(format!("invalid config at `{section}`: {e}"))
        };
        self.power_stage
            .validate()
            .map_err(|e| field("power_stage", e))?;
        for name in self.compensator.required_fields() {
            self.compensator
                .get(name)
                .map_err(|e| field(&format!("compensator.{name}"), e))?;
        }
        if self.topology == TopologyChoice::Boost && self.compensator.scheme != Scheme::Pvmc {
            return Err(config_error(
                "invalid config at `topology`: the boost model supports scheme PVMC only",
            ));
        }
        if self.hb.k == 0 {
            return Err(config_error(
                "invalid config at `hb.k`: harmonic count must be at least 1",
            ));
        }
        if !(self.period_tol > 0.0) {
            return Err(config_error(
                "invalid config at `period_tol`: must be positive",
            ));
        }
        Ok(())
    }

    pub fn model(&self) -> subharm::error::Result<SwitchedLinearModel> {
        match self.topology {
            TopologyChoice::Buck => build_model(&self.power_stage, &self.compensator),
            TopologyChoice::Boost => {
                build_boost_pvmc(&self.power_stage, self.compensator.get("kp")?)
            }
        }
    }

    pub fn input(&self) -> Vector {
        input(self.power_stage.vs, self.power_stage.vr)
    }

    /// Parameter names a sweep may vary for this configuration.
    pub fn sweepable(&self) -> Vec<&'static str> {
        let mut names = STAGE_PARAMS.to_vec();
        names.extend_from_slice(self.compensator.required_fields());
        names.push("delta");
        if matches!(self.compensator.scheme, Scheme::CmcOpen | Scheme::CmcClosed) {
            names.push("ma");
        }
        names
    }

    pub fn check_param(&self, name: &str) -> anyhow::Result<()> {
        if self.sweepable().contains(&name) {
            Ok(())
        } else {
            Err(config_error(format!(
                "parameter `{name}` does not exist for scheme {:?}; choose one of {}",
                self.compensator.scheme,
                self.sweepable().join(", ")
            )))
        }
    }

    /// Copy of the configuration with one named parameter replaced.
    pub fn with_param(&self, name: &str, value: f64) -> anyhow::Result<Self> {
        self.check_param(name)?;
        let mut cfg = *self;
        cfg.apply_param(name, value)?;
        Ok(cfg)
    }

    pub fn apply_param(&mut self, name: &str, value: f64) -> subharm::error::Result<()> {
        let ps = &mut self.power_stage;
        match name {
            "L" => ps.l = value,
            "C" => ps.c = value,
            "R" => ps.r = value,
            "Rc" => ps.rc = value,
            "vs" => ps.vs = value,
            "vr" => ps.vr = value,
            "Vh" => ps.vh = value,
            "fs" => ps.fs = value,
            _ => self.compensator.set(name, value)?,
        }
        Ok(())
    }
}

/// `name:min:max:points`.
#[derive(Debug, Clone, PartialEq)]
pub struct AxisSpec {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub points: usize,
}

impl AxisSpec {
    pub fn values(&self) -> Vec<f64> {
        subharm::roots::linspace(self.min, self.max, self.points)
    }

    pub fn is_duty(&self) -> bool {
        self.name == "D"
    }
}

impl FromStr for AxisSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [name, min, max, points] = parts[..] else {
            return Err(format!("axis `{s}` must look like name:min:max:points"));
        };
        let num = |t: &str, what: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("axis {what} `{t}` is not a number"))
        };
        let (min, max) = (num(min, "min")?, num(max, "max")?);
        let points: usize = points
            .trim()
            .parse()
            .map_err(|_| format!("axis point count `{points}` is not a whole number"))?;
        if name.is_empty() {
            return Err("axis name is empty".into());
        }
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(format!(
                "axis bounds must be ordered, got min {min} and max {max}"
            ));
        }
        if points < 2 {
            return Err(format!("axis needs at least 2 points, got {points}"));
        }
        Ok(AxisSpec {
            name: name.to_string(),
            min,
            max,
            points,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a: AxisSpec = "D:0.05:0.95:181".parse().unwrap();
        assert_eq!(
            a,
            AxisSpec {
                name: "D".into(),
                min: 0.05,
                max: 0.95,
                points: 181
            }
        );
        assert_eq!(a.values().len(), 181);
        assert!("D:0.9:0.1:10".parse::<AxisSpec>().is_err());
        assert!("D:0.1:0.9:1".parse::<AxisSpec>().is_err());
        assert!("D:0.1:0.9".parse::<AxisSpec>().is_err());
        assert!("kp:a:2:3".parse::<AxisSpec>().is_err());
    }

    #[test]
    fn config_reports_field_path() {
        let text = r#"{"power_stage": {"L": 1e-6, "C": "x"}, "compensator": {"scheme": "PVMC", "kp": 80}}"#;
        let msg = RunConfig::from_json(text).unwrap_err().to_string();
        assert!(msg.contains("power_stage.C"), "{msg}");
        let text = r#"{"power_stage": {"L": 1e-6, "C": 1e-4, "R": 2, "vs": 10, "vr": 4, "Vh": 1, "fs": 1e6},
                       "compensator": {"scheme": "PVMC"}}"#;
        let msg = RunConfig::from_json(text).unwrap_err().to_string();
        assert!(msg.contains("compensator.kp"), "{msg}");
    }

    #[test]
    fn preset_config_round_trips() {
        for n in 1..=11 {
            let cfg = RunConfig::from_preset(n).unwrap();
            let back = RunConfig::from_json(&serde_json::to_string(&cfg).unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn parameter_substitution() {
        let cfg = RunConfig::from_preset(2).unwrap();
        assert_eq!(
            cfg.with_param("kp", 300.0).unwrap().compensator.kp,
            Some(300.0)
        );
        assert_eq!(cfg.with_param("Rc", 0.0).unwrap().power_stage.rc, 0.0);
        assert!(cfg.with_param("p1", 1.0).is_err());
    }
}
