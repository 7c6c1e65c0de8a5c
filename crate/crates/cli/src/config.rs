//! Scenario configuration: a TOML file with one table per concern.

use std::path::Path;

use bidomain::elasticity::LameParameters;
use bidomain::parabolic::CableCoefficients;
use bidomain::spectral::MAX_MODE;
use bidomain::transmission::{Conductivities, TransmissionCoefficients};
use bidomain::SpdTensor2;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key: key.into(), message: message.into() }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Seed of every randomized check.
    pub seed: u64,
    pub geometry: Geometry,
    pub coefficients: Coefficients,
    pub conductivities: ConductivityConfig,
    pub bump: Bump,
    pub cauchy: Cauchy,
    pub existence: Existence,
    pub supplement: Supplement,
    pub cardio: Option<Cardio>,
    pub elasticity: Option<Elasticity>,
    pub cable: Option<Cable>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Geometry {
    pub r_inner: f64,
    pub r_outer: f64,
    pub h: f64,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Coefficients {
    pub alpha_i: f64,
    pub alpha_e: f64,
    pub beta_e: f64,
    pub beta_i: f64,
    pub gamma: f64,
    pub c0: f64,
}

/// A conductivity is either a scalar `σ` (meaning `σI`) or a full tensor.
#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(untagged)]
pub enum Conductivity {
    Scalar(f64),
    Tensor(TensorEntries),
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntries {
    pub m11: f64,
    pub m12: f64,
    pub m22: f64,
}

impl Conductivity {
    fn tensor(self) -> bidomain::Result<SpdTensor2> {
        match self {
            Conductivity::Scalar(s) => SpdTensor2::isotropic(s),
            Conductivity::Tensor(t) => SpdTensor2::new(t.m11, t.m12, t.m22),
        }
    }
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConductivityConfig {
    pub sigma_i: Conductivity,
    pub sigma_e: Conductivity,
    pub sigma_b: Conductivity,
}

/// `H²₀` bump used by the null-space and cable experiments.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Bump {
    pub center: [f64; 2],
    pub radius: f64,
    pub amplitude: f64,
    /// Constant added to `u_i`.
    pub h0: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cauchy {
    pub lambdas: Vec<f64>,
}

/// Constant data of the existence check: volume source and outer flux.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Existence {
    pub source: f64,
    pub outer_flux: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Supplement {
    pub degree: usize,
    pub modes: Vec<usize>,
    /// Outer Dirichlet, outer flux and source amplitudes of each mode.
    pub f0: f64,
    pub f1: f64,
    pub g: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cardio {
    pub chi: f64,
    pub c_m: f64,
    pub eps_eps0: f64,
    pub a: [f64; 2],
    pub a0: f64,
    /// Constant source `b` of the ionic current.
    pub b: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Elasticity {
    pub lambda: f64,
    pub mu: f64,
    pub m0: f64,
    /// Inner material is the outer one scaled by this factor.
    pub inner_scale: f64,
    pub body_lambda: f64,
    pub body_mu: f64,
    pub direction: [f64; 2],
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cable {
    pub mu_i: f64,
    pub mu_e: f64,
    pub alpha_i: f64,
    pub alpha_e: f64,
    pub gamma: f64,
    pub a: [f64; 2],
    pub a0: f64,
    pub dt: f64,
    pub steps: usize,
    pub theta: f64,
    pub amplitudes: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            seed: 20240917,
            geometry: Geometry::default(),
            coefficients: Coefficients::default(),
            conductivities: ConductivityConfig::default(),
            bump: Bump::default(),
            cauchy: Cauchy::default(),
            existence: Existence::default(),
            supplement: Supplement::default(),
            cardio: None,
            elasticity: None,
            cable: None,
        }
    }
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry { r_inner: 1.0, r_outer: 2.0, h: 0.1 }
    }
}

impl Default for Coefficients {
    fn default() -> Self {
        Coefficients { alpha_i: 1.0, alpha_e: 1.0, beta_e: -1.0, beta_i: 0.0, gamma: 1.0, c0: 0.0 }
    }
}

impl Default for ConductivityConfig {
    fn default() -> Self {
        ConductivityConfig {
            sigma_i: Conductivity::Scalar(1.0),
            sigma_e: Conductivity::Scalar(1.0),
            sigma_b: Conductivity::Scalar(1.0),
        }
    }
}

impl Default for Bump {
    fn default() -> Self {
        Bump { center: [0.1, -0.1], radius: 0.6, amplitude: 1.0, h0: 0.0 }
    }
}

impl Default for Cauchy {
    fn default() -> Self {
        Cauchy { lambdas: vec![1e-2, 1e-4, 1e-6, 1e-8] }
    }
}

impl Default for Existence {
    fn default() -> Self {
        Existence { source: 1.0, outer_flux: 0.5 }
    }
}

impl Default for Supplement {
    fn default() -> Self {
        Supplement { degree: 3, modes: vec![0, 1, 2], f0: 0.7, f1: -0.4, g: 1.5 }
    }
}

impl Default for Cardio {
    fn default() -> Self {
        Cardio { chi: 1.4, c_m: 0.9, eps_eps0: 0.05, a: [0.0; 2], a0: 0.0, b: 1.0 }
    }
}

impl Default for Elasticity {
    fn default() -> Self {
        Elasticity { lambda: 1.2, mu: 0.9, m0: 0.1, inner_scale: 2.0, body_lambda: 0.5, body_mu: 1.0, direction: [0.6, 0.8] }
    }
}

impl Default for Cable {
    fn default() -> Self {
        let h = CableCoefficients::heat();
        Cable {
            mu_i: h.mu_i,
            mu_e: h.mu_e,
            alpha_i: h.alpha_i,
            alpha_e: h.alpha_e,
            gamma: h.gamma,
            a: h.a,
            a0: h.a0,
            dt: 0.002,
            steps: 50,
            theta: 1.0,
            amplitudes: vec![0.1, 0.3, 1.0],
        }
    }
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let g = &self.geometry;
        if !(g.r_inner > 0.0) {
            return Err(invalid("geometry.r_inner", format!("must be positive, got {}", g.r_inner)));
        }
        if !(g.r_inner < g.r_outer) {
            return Err(invalid(
                "geometry.r_inner",
                format!("must be smaller than geometry.r_outer = {}, got {}", g.r_outer, g.r_inner),
            ));
        }
        if !(g.h > 0.0 && g.h < g.r_inner) {
            return Err(invalid("geometry.h", format!("must lie in (0, r_inner), got {}", g.h)));
        }
        self.transmission().validate().map_err(|e| invalid("coefficients", e.to_string()))?;
        let c = &self.conductivities;
        for (key, s) in [
            ("conductivities.sigma_i", c.sigma_i),
            ("conductivities.sigma_e", c.sigma_e),
            ("conductivities.sigma_b", c.sigma_b),
        ] {
            s.tensor().map_err(|e| invalid(key, e.to_string()))?;
        }

        let b = &self.bump;
        if !(b.radius > 0.0) {
            return Err(invalid("bump.radius", "must be positive"));
        }
        if b.center[0].hypot(b.center[1]) + b.radius >= g.r_inner {
            return Err(invalid("bump.radius", "the bump support must lie inside the heart"));
        }
        if !(b.amplitude.is_finite() && b.h0.is_finite()) {
            return Err(invalid("bump.amplitude", "must be finite"));
        }
        if self.cauchy.lambdas.is_empty() || self.cauchy.lambdas.iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(invalid("cauchy.lambdas", "need a non-empty list of non-negative values"));
        }
        if !(self.existence.source.is_finite() && self.existence.outer_flux.is_finite()) {
            return Err(invalid("existence.source", "must be finite"));
        }
        let s = &self.supplement;
        if s.degree < 2 {
            return Err(invalid("supplement.degree", "need at least 2"));
        }
        if s.modes.is_empty() || s.modes.iter().any(|m| *m > MAX_MODE) {
            return Err(invalid("supplement.modes", format!("need a non-empty list of modes up to {MAX_MODE}")));
        }
        if let Some(cardio) = &self.cardio {
            for (key, v) in [("cardio.chi", cardio.chi), ("cardio.c_m", cardio.c_m), ("cardio.eps_eps0", cardio.eps_eps0)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(invalid(key, "must be positive"));
                }
            }
        }
        if let Some(e) = &self.elasticity {
            LameParameters::new(e.lambda, e.mu, e.m0).map_err(|err| invalid("elasticity.mu", err.to_string()))?;
            LameParameters::new(e.body_lambda, e.body_mu, e.m0).map_err(|err| invalid("elasticity.body_mu", err.to_string()))?;
            if !(e.inner_scale > 0.0) {
                return Err(invalid("elasticity.inner_scale", "must be positive"));
            }
        }
        if let Some(c) = &self.cable {
            self.cable_coefficients().kappa().map_err(|e| invalid("cable", e.to_string()))?;
            if !(c.dt > 0.0) {
                return Err(invalid("cable.dt", "must be positive"));
            }
            if c.steps == 0 {
                return Err(invalid("cable.steps", "must be positive"));
            }
            if !(0.0..=1.0).contains(&c.theta) {
                return Err(invalid("cable.theta", "must lie in [0, 1]"));
            }
            if c.amplitudes.is_empty() {
                return Err(invalid("cable.amplitudes", "must not be empty"));
            }
        }
        Ok(())
    }

    pub fn transmission(&self) -> TransmissionCoefficients {
        let c = self.coefficients;
        TransmissionCoefficients {
            alpha_i: c.alpha_i,
            alpha_e: c.alpha_e,
            beta_e: c.beta_e,
            beta_i: c.beta_i,
            gamma: c.gamma,
            c0: c.c0,
        }
    }

    pub fn conductivities(&self) -> bidomain::Result<Conductivities> {
        let c = &self.conductivities;
        Ok(Conductivities { m_i: c.sigma_i.tensor()?, m_e: c.sigma_e.tensor()?, m_b: c.sigma_b.tensor()? })
    }

    pub fn cable(&self) -> Cable {
        self.cable.clone().unwrap_or_default()
    }

    pub fn cable_coefficients(&self) -> CableCoefficients {
        let c = self.cable();
        CableCoefficients { mu_i: c.mu_i, mu_e: c.mu_e, alpha_i: c.alpha_i, alpha_e: c.alpha_e, gamma: c.gamma, a: c.a, a0: c.a0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_parses() {
        let cfg = ScenarioConfig::parse(include_str!("../config/default.toml")).unwrap();
        assert_eq!(cfg.seed, 20240917);
        assert_eq!(cfg.transmission().existence_prefactor(), 0.0);
        assert!(cfg.cardio.is_some() && cfg.elasticity.is_some() && cfg.cable.is_some());
        assert_eq!(cfg.conductivities().unwrap().m_i.as_isotropic(), Some(1.3));
    }

    #[test]
    fn empty_config_uses_defaults() {
        let cfg = ScenarioConfig::parse("").unwrap();
        assert_eq!(cfg.geometry.h, 0.1);
        assert_eq!(cfg.transmission(), TransmissionCoefficients::ecg(1.0, 0.0));
    }

    #[test]
    fn errors_name_their_key() {
        let key = |text: &str| match ScenarioConfig::parse(text) {
            Err(ConfigError::Invalid { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key("[geometry]\nh = 1.5\n"), "geometry.h");
        assert_eq!(key("[bump]\ncenter = [0.8, 0.0]\n"), "bump.radius");
        assert_eq!(key("[conductivities]\nsigma_e = -1.0\n"), "conductivities.sigma_e");
        assert_eq!(key("[cauchy]\nlambdas = []\n"), "cauchy.lambdas");
        assert_eq!(key("[elasticity]\nmu = 0.01\n"), "elasticity.mu");
        assert!(matches!(ScenarioConfig::parse("seed = \"x\"\n"), Err(ConfigError::Parse(_))));
    }
}
