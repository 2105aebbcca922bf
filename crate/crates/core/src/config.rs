//! Structured configuration files (TOML).
//!
//! A config describes a model, an optional martingale tilt, and simulation
//! settings. Matrices are row-major; every real may be written either as a
//! TOML float or as a decimal string (handy for values that should parse
//! exactly as written).
//!
//! ```toml
//! [model]
//! kind = "bbm"            # "bbm" | "finite-type" | "degenerate"
//! rate = 1.0              # scalar, or one entry per type for finite-type
//! offspring = ["0.5", "0", "0.5"]   # pmf of A; default binary (A = 1)
//!
//! [martingale]
//! lambda = 0.5
//!
//! [sim]
//! t_max = 2.0
//! grid_step = 0.015625
//! start_x = 0.0
//! start_type = 1          # 1-based type index
//! node_cap = 1000000
//!
//! [verify]
//! threshold = 4.0
//! ```
//!
//! Finite-type models add `variance`, `theta` and the generator `q`:
//!
//! ```toml
//! [model]
//! kind = "finite-type"
//! variance = [1.0, 2.0]
//! rate = [1.0, 2.0]
//! theta = 1.0
//! q = [["-1", "1"], ["1", "-1"]]
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::eigen::MartingaleSpec;
use crate::model::{
    bbm_model, degenerate_model, finite_type_model, ModelError, ModelSpec, MotionLaw, Pmf,
};
use crate::simulate::{Measure, SimConfig, SimError};
use crate::tree::Point;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Eigen(#[from] crate::eigen::EigenError),
}

/// A real number, accepted as a float, an integer, or a decimal string.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(try_from = "RealRepr")]
pub struct Real(pub f64);

#[derive(Deserialize)]
#[serde(untagged)]
enum RealRepr {
    Float(f64),
    Int(i64),
    Text(String),
}

impl TryFrom<RealRepr> for Real {
    type Error = String;

    fn try_from(repr: RealRepr) -> Result<Self, Self::Error> {
        match repr {
            RealRepr::Float(f) => Ok(Real(f)),
            RealRepr::Int(i) => Ok(Real(i as f64)),
            RealRepr::Text(s) => s
                .trim()
                .parse::<f64>()
                .map(Real)
                .map_err(|e| format!("`{s}` is not a real: {e}")),
        }
    }
}

fn reals(v: &[Real]) -> Vec<f64> {
    v.iter().map(|r| r.0).collect()
}

/// A scalar or a per-type vector.
#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrVec {
    Scalar(Real),
    Vector(Vec<Real>),
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: String,
    pub rate: ScalarOrVec,
    #[serde(default)]
    pub offspring: Option<Vec<Real>>,
    #[serde(default)]
    pub drift: Option<Real>,
    #[serde(default)]
    pub variance: Option<Vec<Real>>,
    #[serde(default)]
    pub theta: Option<Real>,
    #[serde(default)]
    pub q: Option<Vec<Vec<Real>>>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MartingaleSection {
    pub lambda: Real,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_max: Real,
    #[serde(default)]
    pub grid_step: Option<Real>,
    #[serde(default)]
    pub start_x: Option<Real>,
    /// 1-based type index of the initial ancestor.
    #[serde(default)]
    pub start_type: Option<usize>,
    #[serde(default)]
    pub node_cap: Option<usize>,
}

#[derive(Clone, Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default)]
    pub threshold: Option<Real>,
    #[serde(default)]
    pub replicates: Option<u64>,
}

/// A parsed configuration file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub martingale: Option<MartingaleSection>,
    pub sim: SimSection,
    #[serde(default)]
    pub verify: Option<VerifySection>,
}

impl FileConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    fn offspring_pmf(&self) -> Result<Pmf, ConfigError> {
        match &self.model.offspring {
            None => Ok(Pmf::binary()),
            Some(v) => Ok(Pmf::new(reals(v))?),
        }
    }

    pub fn build_model(&self) -> Result<ModelSpec, ConfigError> {
        let pmf = self.offspring_pmf()?;
        match self.model.kind.as_str() {
            "bbm" => {
                let r = match &self.model.rate {
                    ScalarOrVec::Scalar(r) => r.0,
                    ScalarOrVec::Vector(_) => {
                        return Err(ConfigError::Invalid(
                            "bbm models take a scalar rate".into(),
                        ))
                    }
                };
                let mut model = bbm_model(r, pmf)?;
                if let Some(drift) = self.model.drift {
                    model.motion = MotionLaw::Bbm { drift: drift.0 };
                }
                Ok(model)
            }
            "degenerate" => {
                let r = match &self.model.rate {
                    ScalarOrVec::Scalar(r) => r.0,
                    ScalarOrVec::Vector(_) => {
                        return Err(ConfigError::Invalid(
                            "degenerate models take a scalar rate".into(),
                        ))
                    }
                };
                let drift = self
                    .model
                    .drift
                    .ok_or_else(|| ConfigError::Invalid("degenerate models need a drift".into()))?;
                Ok(degenerate_model(drift.0, r, pmf)?)
            }
            "finite-type" => {
                let variance = self
                    .model
                    .variance
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("finite-type needs `variance`".into()))?;
                let theta = self
                    .model
                    .theta
                    .ok_or_else(|| ConfigError::Invalid("finite-type needs `theta`".into()))?;
                let q = self
                    .model
                    .q
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("finite-type needs `q`".into()))?;
                let rates = match &self.model.rate {
                    ScalarOrVec::Scalar(r) => vec![r.0; variance.len()],
                    ScalarOrVec::Vector(v) => reals(v),
                };
                if self.model.offspring.is_some() {
                    return Err(ConfigError::Invalid(
                        "finite-type models branch binarily; omit `offspring`".into(),
                    ));
                }
                let q: Vec<Vec<f64>> = q.iter().map(|row| reals(row)).collect();
                Ok(finite_type_model(&reals(variance), &rates, theta.0, q)?)
            }
            other => Err(ConfigError::Invalid(format!("unknown model kind `{other}`"))),
        }
    }

    /// The martingale specification implied by the config (lambda plus the
    /// form matching the model kind).
    pub fn build_martingale(&self, model: &ModelSpec) -> Result<MartingaleSpec, ConfigError> {
        let lambda = self.martingale.as_ref().map(|m| m.lambda.0).unwrap_or(0.0);
        match &model.motion {
            MotionLaw::Bbm { .. } => Ok(MartingaleSpec::bbm(lambda)),
            MotionLaw::FiniteType { .. } => Ok(MartingaleSpec::for_finite_type(model, lambda)?),
            MotionLaw::Degenerate { .. } => Err(ConfigError::Invalid(
                "no martingale form for the degenerate test motion".into(),
            )),
        }
    }

    pub fn start_point(&self) -> Point {
        Point {
            x: self.sim.start_x.map(|r| r.0).unwrap_or(0.0),
            ty: self.sim.start_type.map(|t| t.saturating_sub(1)).unwrap_or(0),
        }
    }

    /// Assembles a simulation config; seed and replicate are filled by the
    /// caller.
    pub fn sim_config(&self, measure: Measure, seed: u64) -> Result<SimConfig, ConfigError> {
        let model = self.build_model()?;
        let mut config = SimConfig::new(model, measure, self.sim.t_max.0, seed)
            .with_start(self.start_point());
        if let Some(step) = self.sim.grid_step {
            config = config.with_grid_step(step.0);
        }
        if let Some(cap) = self.sim.node_cap {
            config = config.with_node_cap(cap);
        }
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{DEFAULT_GRID_STEP, DEFAULT_NODE_CAP};

    const BBM: &str = r#"
        [model]
        kind = "bbm"
        rate = 1.0
        offspring = ["0.5", "0", "0.5"]

        [martingale]
        lambda = "0.5"

        [sim]
        t_max = 2.0
        start_x = 0.25
    "#;

    const FT: &str = r#"
        [model]
        kind = "finite-type"
        variance = [1.0, 2.0]
        rate = ["1", "2"]
        theta = 1.0
        q = [["-1", "1"], ["1", "-1"]]

        [sim]
        t_max = 1.0
        start_type = 2
    "#;

    #[test]
    fn parses_bbm_with_string_reals() {
        let cfg = FileConfig::from_toml_str(BBM).unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.n_types(), 1);
        assert_eq!(model.offspring.mean_at(Point::untyped(0.0)), 1.0);
        let spec = cfg.build_martingale(&model).unwrap();
        assert_eq!(spec.lambda, 0.5);
        assert_eq!(cfg.start_point().x, 0.25);
        let sim = cfg.sim_config(Measure::P, 7).unwrap();
        assert_eq!(sim.t_max, 2.0);
        assert_eq!(sim.node_cap, DEFAULT_NODE_CAP);
        assert_eq!(sim.grid_step, DEFAULT_GRID_STEP);
    }

    #[test]
    fn parses_finite_type_matrices() {
        let cfg = FileConfig::from_toml_str(FT).unwrap();
        let model = cfg.build_model().unwrap();
        assert_eq!(model.n_types(), 2);
        // 1-based start type maps to index 1.
        assert_eq!(cfg.start_point().ty, 1);
        let spec = cfg.build_martingale(&model).unwrap();
        assert_eq!(spec.lambda, 0.0);
        assert!(spec.n_types() == Some(2));
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(FileConfig::from_toml_str("[model]\nkind='bbm'").is_err());
        let bad_kind = r#"
            [model]
            kind = "unknown"
            rate = 1.0
            [sim]
            t_max = 1.0
        "#;
        let cfg = FileConfig::from_toml_str(bad_kind).unwrap();
        assert!(matches!(cfg.build_model(), Err(ConfigError::Invalid(_))));
        let bad_real = r#"
            [model]
            kind = "bbm"
            rate = "one"
            [sim]
            t_max = 1.0
        "#;
        assert!(FileConfig::from_toml_str(bad_real).is_err());
    }
}
