//! Project configuration: a single versioned JSON document. Unknown keys are
//! rejected so a typo cannot silently fall back to a default, and command
//! line overrides address leaf keys by dotted path before the document is
//! deserialized.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub version: u32,
    pub system: SystemConfig,
    pub quantizer: QuantizerConfig,
    #[serde(default)]
    pub abstraction: AbstractionConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Pendulum {
        #[serde(default = "default_omega")]
        omega: f64,
        #[serde(default = "default_gamma")]
        gamma: f64,
        #[serde(default = "default_u_hat")]
        u_hat: f64,
        #[serde(default = "default_t_sample")]
        t_sample: f64,
    },
    /// Vector field given as expressions in x1..xn and u1..um.
    Expression {
        rhs: Vec<String>,
        /// one value row per input symbol
        inputs: Vec<Vec<f64>>,
        t_sample: f64,
        #[serde(default = "default_ode_tol")]
        ode_tol: f64,
        #[serde(default)]
        period: Option<Vec<f64>>,
    },
    /// Shared library exporting the C ABI described in the README.
    Plugin { path: String },
}

fn default_omega() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    0.01
}
fn default_u_hat() -> f64 {
    2.0
}
fn default_t_sample() -> f64 {
    0.2
}
fn default_ode_tol() -> f64 {
    1e-9
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum QuantizerConfig {
    /// The hexagonal cylinder cover of the case study.
    HexCylinder {
        /// (col, row) ids of cells to reclassify as obstacles
        #[serde(default)]
        obstacles: Vec<(i32, i32)>,
        #[serde(default)]
        superset_radius: RadiusConfig,
    },
    Box {
        origin: [f64; 2],
        cell: [f64; 2],
        cols: i32,
        rows: i32,
    },
}

/// Either the literal string "auto" or a number.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq, Default)]
#[serde(try_from = "RadiusRepr", into = "RadiusRepr")]
pub enum RadiusConfig {
    /// Largest radius the certificate admits, rounded down a little.
    #[default]
    Auto,
    Fixed(f64),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RadiusRepr {
    Num(f64),
    Str(String),
}

impl TryFrom<RadiusRepr> for RadiusConfig {
    type Error = String;
    fn try_from(r: RadiusRepr) -> std::result::Result<Self, String> {
        match r {
            RadiusRepr::Num(x) => Ok(RadiusConfig::Fixed(x)),
            RadiusRepr::Str(s) if s == "auto" => Ok(RadiusConfig::Auto),
            RadiusRepr::Str(s) => Err(format!("superset_radius: expected a number or \"auto\", got \"{s}\"")),
        }
    }
}

impl From<RadiusConfig> for RadiusRepr {
    fn from(r: RadiusConfig) -> RadiusRepr {
        match r {
            RadiusConfig::Auto => RadiusRepr::Str("auto".into()),
            RadiusConfig::Fixed(x) => RadiusRepr::Num(x),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct AbstractionConfig {
    pub n_horizon: usize,
    pub candidate_margin: f64,
    /// worker threads; None defers to the environment, 0 means all cores
    #[serde(default)]
    pub threads: Option<usize>,
}

impl Default for AbstractionConfig {
    fn default() -> Self {
        AbstractionConfig {
            n_horizon: 3,
            candidate_margin: 0.75,
            threads: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    pub start: [f64; 2],
    pub target: TargetConfig,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    27
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        SynthesisConfig {
            start: [0.0, 0.0],
            target: TargetConfig::Ellipse,
            max_steps: default_max_steps(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetConfig {
    /// Cells contained in the stabilizable ellipsoid around the upright
    /// equilibrium (pendulum only).
    Ellipse,
    /// Explicit cell indices.
    Cells { cells: Vec<usize> },
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

fn default_formats() -> Vec<String> {
    vec!["json".into(), "csv".into(), "svg".into()]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: "out".into(),
            formats: default_formats(),
        }
    }
}

impl ProjectConfig {
    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config version {} unsupported (expected {SCHEMA_VERSION})",
                self.version
            )));
        }
        if self.abstraction.n_horizon == 0 {
            return Err(Error::Config("abstraction.n_horizon must be >= 1".into()));
        }
        if self.abstraction.candidate_margin <= 0.0 {
            return Err(Error::Config("abstraction.candidate_margin must be positive".into()));
        }
        match &self.system {
            SystemConfig::Pendulum { t_sample, .. } => {
                if *t_sample <= 0.0 {
                    return Err(Error::Config("system.t_sample must be positive".into()));
                }
            }
            SystemConfig::Expression {
                rhs,
                inputs,
                t_sample,
                ode_tol,
                ..
            } => {
                if rhs.is_empty() || inputs.is_empty() {
                    return Err(Error::Config("expression system needs rhs and inputs".into()));
                }
                if inputs.iter().any(|row| row.len() != inputs[0].len()) {
                    return Err(Error::Config("input rows must share a dimension".into()));
                }
                if *t_sample <= 0.0 || *ode_tol <= 0.0 {
                    return Err(Error::Config("t_sample and ode_tol must be positive".into()));
                }
            }
            SystemConfig::Plugin { path } => {
                if path.is_empty() {
                    return Err(Error::Config("plugin path must not be empty".into()));
                }
            }
        }
        if let QuantizerConfig::HexCylinder {
            superset_radius: RadiusConfig::Fixed(r),
            ..
        } = &self.quantizer
        {
            if *r <= 0.0 {
                return Err(Error::Config("superset_radius must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(src: &str, overrides: &[String]) -> Result<Self> {
        let mut doc: serde_json::Value =
            serde_json::from_str(src).map_err(|e| Error::Config(format!("bad JSON: {e}")))?;
        for ov in overrides {
            apply_override(&mut doc, ov)?;
        }
        let cfg: ProjectConfig = serde_json::from_value(doc)
            .map_err(|e| Error::Config(format!("bad config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Applies "a.b.c=value" to the JSON document. The value parses as JSON when
/// possible and falls back to a string, so both `n_horizon=3` and
/// `dir=results` work without quoting games.
pub fn apply_override(doc: &mut serde_json::Value, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override '{spec}' is not key=value")))?;
    let value: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if i + 1 == parts.len() {
            match cur {
                serde_json::Value::Object(map) => {
                    map.insert(part.to_string(), value);
                    return Ok(());
                }
                _ => {
                    return Err(Error::Config(format!(
                        "override '{spec}': '{part}' is not an object field"
                    )))
                }
            }
        }
        cur = match cur {
            serde_json::Value::Object(map) => map
                .entry(part.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default())),
            _ => {
                return Err(Error::Config(format!(
                    "override '{spec}': cannot descend into '{part}'"
                )))
            }
        };
    }
    unreachable!("split never yields zero parts")
}

/// The §V pendulum study, end to end.
pub fn pendulum_default_config() -> ProjectConfig {
    ProjectConfig {
        version: SCHEMA_VERSION,
        system: SystemConfig::Pendulum {
            omega: default_omega(),
            gamma: default_gamma(),
            u_hat: default_u_hat(),
            t_sample: default_t_sample(),
        },
        quantizer: QuantizerConfig::HexCylinder {
            obstacles: vec![],
            superset_radius: RadiusConfig::Fixed(0.4),
        },
        abstraction: AbstractionConfig::default(),
        synthesis: SynthesisConfig::default(),
        output: OutputConfig::default(),
    }
}
