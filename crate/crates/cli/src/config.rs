//! TOML run configurations and bundled presets.

use std::path::Path;

use serde::Deserialize;
use sha2::{Digest, Sha256};

use sbm_core::graph::{bernoulli_theta, gamma_theta, planted_theta, SbmSpec};
use sbm_core::spectral::Tau;

use crate::CliError;

pub const DEFAULT_REPLICATES: usize = 50;

const PRESETS: &[(&str, &str)] = &[
    ("figure1", include_str!("../presets/figure1.toml")),
    (
        "figure2-gamma",
        include_str!("../presets/figure2-gamma.toml"),
    ),
    (
        "figure2-bernoulli",
        include_str!("../presets/figure2-bernoulli.toml"),
    ),
    ("theory", include_str!("../presets/theory.toml")),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(name, _)| *name)
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Planted,
    Gamma,
    Bernoulli,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    K,
    Alpha,
    P,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::K => "k",
            Axis::Alpha => "alpha",
            Axis::P => "p",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub generator: Generator,
    pub k: usize,
    pub block_size: usize,
    pub theta_in: f64,
    /// Planted: `theta_out = out_degree / N`. Gamma and Bernoulli: mean
    /// off-diagonal `out_degree / (N - s)`.
    pub out_degree: f64,
    pub alpha: Option<f64>,
    pub p: Option<f64>,
    /// Laplacian regularizer; average degree when absent.
    pub tau: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Axis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySection {
    #[serde(default = "default_instances")]
    pub instances: usize,
    #[serde(default = "default_max_n")]
    pub max_n: usize,
    #[serde(default = "default_max_k")]
    pub max_k: usize,
    #[serde(default = "default_c_const")]
    pub c_const: f64,
}

fn default_instances() -> usize {
    200
}
fn default_max_n() -> usize {
    30
}
fn default_max_k() -> usize {
    4
}
fn default_c_const() -> f64 {
    1.0
}

impl Default for TheorySection {
    fn default() -> Self {
        Self {
            instances: default_instances(),
            max_n: default_max_n(),
            max_k: default_max_k(),
            c_const: default_c_const(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    pub model: Option<ModelSection>,
    pub sweep: Option<SweepSection>,
    pub theory: Option<TheorySection>,
}

/// A parsed config plus the label and digest of the text it came from.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub source: String,
    pub sha256: String,
}

impl Loaded {
    pub fn parse(text: &str, source: impl Into<String>) -> Result<Self, CliError> {
        let source = source.into();
        let config: Config =
            toml::from_str(text).map_err(|e| CliError::Usage(format!("{source}: {e}")))?;
        Ok(Self {
            config,
            source,
            sha256: sha256_hex(text.as_bytes()),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.display().to_string())
    }

    pub fn from_preset(name: &str) -> Result<Self, CliError> {
        let text = preset_text(name).ok_or_else(|| {
            let known: Vec<_> = preset_names().collect();
            CliError::Usage(format!(
                "unknown preset `{name}` (known: {})",
                known.join(", ")
            ))
        })?;
        Self::parse(text, format!("preset:{name}"))
    }

    /// Exactly one of `config` or `preset` must be given.
    pub fn resolve(config: Option<&Path>, preset: Option<&str>) -> Result<Self, CliError> {
        match (config, preset) {
            (Some(path), None) => Self::from_path(path),
            (None, Some(name)) => Self::from_preset(name),
            _ => Err(CliError::Usage(
                "pass exactly one of --config or --preset".into(),
            )),
        }
    }

    pub fn model(&self) -> Result<&ModelSection, CliError> {
        self.config
            .model
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("{}: missing [model] section", self.source)))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl ModelSection {
    pub fn n(&self) -> usize {
        self.k * self.block_size
    }

    pub fn tau(&self) -> Tau {
        self.tau.map_or(Tau::Auto, Tau::Value)
    }

    /// Copy of this model with the sweep axis set to `value`.
    pub fn with_axis(&self, axis: Axis, value: f64) -> Result<Self, CliError> {
        let mut m = self.clone();
        match axis {
            Axis::K => {
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(CliError::Usage(format!(
                        "axis k needs integers >= 2, got {value}"
                    )));
                }
                m.k = value as usize;
            }
            Axis::Alpha if m.generator == Generator::Gamma => m.alpha = Some(value),
            Axis::P if m.generator == Generator::Bernoulli => m.p = Some(value),
            _ => {
                return Err(CliError::Usage(format!(
                    "axis `{}` does not apply to the {:?} generator",
                    axis.name(),
                    m.generator
                )))
            }
        }
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Usage(msg));
        if self.k == 0 || self.block_size == 0 {
            return bad("k and block_size must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.theta_in) {
            return bad(format!("theta_in = {} outside [0, 1]", self.theta_in));
        }
        if !(self.out_degree >= 0.0 && self.out_degree.is_finite()) {
            return bad(format!(
                "out_degree = {} must be nonnegative",
                self.out_degree
            ));
        }
        if let Some(t) = self.tau {
            if !(t >= 0.0 && t.is_finite()) {
                return bad(format!("tau = {t} must be nonnegative"));
            }
        }
        match self.generator {
            Generator::Planted if self.out_degree / self.n() as f64 > 1.0 => {
                bad("out_degree / N exceeds 1".into())
            }
            Generator::Gamma if self.alpha.is_none() => bad("gamma generator needs alpha".into()),
            Generator::Bernoulli if self.p.is_none() => bad("bernoulli generator needs p".into()),
            _ => Ok(()),
        }
    }

    /// Draws the block matrix (random for gamma and bernoulli) and returns
    /// the `SbmSpec` with the number of clamped entries.
    pub fn spec(&self, seed: u64) -> Result<(SbmSpec, usize), CliError> {
        self.validate()?;
        let (k, s, n) = (self.k, self.block_size, self.n());
        let (theta, clamped) = match self.generator {
            Generator::Planted => (
                planted_theta(k, self.theta_in, self.out_degree / n as f64)?,
                0,
            ),
            Generator::Gamma => {
                let d = gamma_theta(
                    k,
                    self.alpha.unwrap_or(1.0),
                    self.theta_in,
                    self.out_degree,
                    n,
                    s,
                    seed,
                )?;
                (d.theta, d.clamped)
            }
            Generator::Bernoulli => {
                let d = bernoulli_theta(
                    k,
                    self.p.unwrap_or(1.0),
                    self.theta_in,
                    self.out_degree,
                    n,
                    s,
                    seed,
                )?;
                (d.theta, d.clamped)
            }
        };
        Ok((SbmSpec::balanced(k, s, theta)?, clamped))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        for name in preset_names() {
            let l = Loaded::from_preset(name).unwrap();
            assert_eq!(l.sha256.len(), 64);
            if let Some(m) = &l.config.model {
                m.validate().unwrap();
            }
        }
        let fig1 = Loaded::from_preset("figure1").unwrap();
        let sweep = fig1.config.sweep.unwrap();
        assert_eq!(sweep.axis, Axis::K);
        assert_eq!(sweep.values.first(), Some(&10.0));
        assert_eq!(sweep.values.last(), Some(&100.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = Loaded::parse("[run]\nseed = 1\n[model]\nk = \"x\"\n", "t").unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
        assert!(Loaded::parse("[run]\nseed = 1\nbogus = 2\n", "t").is_err());
    }

    #[test]
    fn axis_must_match_generator() {
        let l = Loaded::from_preset("figure1").unwrap();
        let m = l.model().unwrap();
        assert!(m.with_axis(Axis::Alpha, 0.2).is_err());
        assert!(m.with_axis(Axis::K, 2.5).is_err());
        assert_eq!(m.with_axis(Axis::K, 40.0).unwrap().n(), 800);
    }
}
