//! Scenario configuration read from a JSON document.
//!
//! ```json
//! {
//!   "name": "drift",
//!   "kind": "polyhedral-sweeping",
//!   "n": 2,
//!   "q": [[2, 0], [0, 1]],
//!   "target": { "p": ["sin(t)", "0.5*t"] },
//!   "u": [[1, 0]], "v1": [0.1], "v2": [1],
//!   "horizon": 10, "step": 0.001, "x0": [0, 0]
//! }
//! ```
//!
//! The cost is `(x − c(t))ᵀQ(x − c(t))`. The target `c` is given directly
//! (`"c"`), through a linear term `xᵀQx + P(t)ᵀx` (`"p"`, so `c = −½Q⁻¹P`),
//! or as a scalar triangular wave.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{Expr, ExprError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Unconstrained,
    PolyhedralSweeping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSpec {
    C(Vec<String>),
    P(Vec<String>),
    TriangularWave { period: f64, slope: f64 },
}

/// Optional overrides for the derived constants.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ell_v: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub kind: Kind,
    pub n: usize,
    pub q: Vec<Vec<f64>>,
    pub target: TargetSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub u: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub v1: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub v2: Vec<f64>,
    pub horizon: f64,
    pub step: f64,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_default")]
    pub constants: ConstantOverrides,
}

fn is_default(c: &ConstantOverrides) -> bool {
    *c == ConstantOverrides::default()
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("invalid expression `{text}`: {source}")]
    Expr { text: String, source: ExprError },
    #[error("unknown builtin `{0}` (expected paper-ex1 or paper-ex2)")]
    UnknownBuiltin(String),
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        let n = self.n;
        if n == 0 {
            return bad("n must be positive".into());
        }
        if self.q.len() != n || self.q.iter().any(|r| r.len() != n) {
            return bad(format!("q must be {n} x {n}"));
        }
        match &self.target {
            TargetSpec::C(e) | TargetSpec::P(e) if e.len() != n => {
                return bad(format!("target needs {n} expressions, got {}", e.len()))
            }
            TargetSpec::TriangularWave { period, .. } if n != 1 || !(*period > 0.0) => {
                return bad("triangular wave needs n = 1 and a positive period".into())
            }
            _ => {}
        }
        let m = self.u.len();
        if self.u.iter().any(|r| r.len() != n) {
            return bad(format!("every row of u needs {n} entries"));
        }
        if self.v1.len() != m || self.v2.len() != m {
            return bad(format!("v1 and v2 need {m} entries to match u"));
        }
        match (self.kind, m) {
            (Kind::Unconstrained, 0) | (Kind::PolyhedralSweeping, 1..) => {}
            (Kind::Unconstrained, _) => return bad("unconstrained scenario with constraint rows".into()),
            (Kind::PolyhedralSweeping, 0) => return bad("polyhedral scenario without constraint rows".into()),
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return bad("horizon must be positive".into());
        }
        if !(self.step > 0.0) || !self.step.is_finite() {
            return bad("step must be positive".into());
        }
        if self.x0.len() != n {
            return bad(format!("x0 needs {n} entries"));
        }
        self.expressions()?;
        Ok(())
    }

    /// Parsed target expressions, if the target is expression-based.
    pub fn expressions(&self) -> Result<Vec<Expr>, ConfigError> {
        match &self.target {
            TargetSpec::C(list) | TargetSpec::P(list) => list
                .iter()
                .map(|text| {
                    text.parse().map_err(|source| ConfigError::Expr {
                        text: text.clone(),
                        source,
                    })
                })
                .collect(),
            TargetSpec::TriangularWave { .. } => Ok(Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SAMPLE: &str = r#"{
        "name": "drift",
        "kind": "polyhedral-sweeping",
        "n": 2,
        "q": [[2, 0], [0, 1]],
        "target": { "p": ["sin(t)", "0.5*t"] },
        "u": [[1, 0]], "v1": [0.1], "v2": [1],
        "horizon": 10, "step": 0.001, "x0": [0, 0],
        "constants": { "omega": 1 }
    }"#;

    #[test]
    fn parses_sample() {
        let cfg = ScenarioConfig::from_json(SAMPLE).unwrap();
        assert_eq!(cfg.kind, Kind::PolyhedralSweeping);
        assert_eq!(cfg.constants.omega, Some(1.0));
        assert_eq!(cfg.expressions().unwrap().len(), 2);
    }

    #[test]
    fn rejects_inconsistent_dimensions() {
        let bad = SAMPLE.replace(r#""x0": [0, 0]"#, r#""x0": [0]"#);
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(ConfigError::Invalid(_))));
        let bad = SAMPLE.replace("sin(t)", "exp(t)");
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(ConfigError::Expr { .. })));
        let bad = SAMPLE.replace(r#""name""#, r#""nmae""#);
        assert!(matches!(ScenarioConfig::from_json(&bad), Err(ConfigError::Json(_))));
    }

    fn finite() -> impl Strategy<Value = f64> {
        prop_oneof![-1e6f64..1e6, -1.0f64..1.0, Just(0.0)]
    }

    fn arb_config() -> impl Strategy<Value = ScenarioConfig> {
        (1usize..4, 0usize..4, any::<bool>()).prop_flat_map(|(n, m, use_p)| {
            (
                proptest::collection::vec(proptest::collection::vec(finite(), n), n),
                proptest::collection::vec(proptest::collection::vec(finite(), n), m),
                proptest::collection::vec(finite(), m),
                proptest::collection::vec(finite(), m),
                proptest::collection::vec(finite(), n),
                1e-6f64..1e3,
                1e-6f64..1.0,
                proptest::option::of(finite()),
            )
                .prop_map(move |(q, u, v1, v2, x0, horizon, step, omega)| ScenarioConfig {
                    name: format!("cfg-{n}-{m}"),
                    kind: if m == 0 { Kind::Unconstrained } else { Kind::PolyhedralSweeping },
                    n,
                    q,
                    target: if use_p {
                        TargetSpec::P(vec!["t".into(); n])
                    } else {
                        TargetSpec::C(vec!["sin(2*t)".into(); n])
                    },
                    u,
                    v1,
                    v2,
                    horizon,
                    step,
                    x0,
                    constants: ConstantOverrides {
                        omega,
                        ..Default::default()
                    },
                })
        })
    }

    proptest! {
        #[test]
        fn json_round_trip(cfg in arb_config()) {
            let back = ScenarioConfig::from_json(&cfg.to_json()).unwrap();
            prop_assert_eq!(back, cfg);
        }
    }
}
