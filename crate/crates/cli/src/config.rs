//! TOML run configuration.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::Context;
use lagrindex::dynamics::BvpOptions;
use lagrindex::lagrangian::{builtin, pendulum_period};
use lagrindex::{BoundaryCondition, Branch, ClosedFormBranch, LagrangianFamily, WarmStartBranch};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Marks an error as a configuration problem (exit code 2).
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

pub fn hash_text(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Interval length τ; defaults to the small-oscillation period for the
    /// pendulum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    /// Parameter value for single-point subcommands.
    #[serde(default)]
    pub lambda: f64,
    #[serde(default)]
    pub seed: u64,
    pub family: FamilySpec,
    #[serde(default)]
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub branch: BranchSpec,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub name: String,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum BoundarySpec {
    /// Spanning vectors of `V₀`, `V₁`; empty means pinned. Optional anchors.
    Product {
        #[serde(default)]
        v0: Vec<Vec<f64>>,
        #[serde(default)]
        v1: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a0: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        a1: Option<Vec<f64>>,
    },
    /// `x(τ) = E x(0)`, rows of `E`; identity when omitted.
    Twist {
        #[serde(rename = "E", default, skip_serializing_if = "Option::is_none")]
        e: Option<Vec<Vec<f64>>>,
    },
    Brake,
}

impl Default for BoundarySpec {
    fn default() -> Self {
        BoundarySpec::Product { v0: vec![], v1: vec![], a0: None, a1: None }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BranchSpec {
    /// `γ_λ ≡ 0`.
    #[default]
    Trivial,
    /// Solve the boundary problem at each λ from the given initial data.
    Shoot {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q0: Option<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        v0: Option<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    /// Finite elements on the time interval.
    pub elements: usize,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub lambda_points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { elements: 512, lambda_min: -0.3, lambda_max: 0.3, lambda_points: 101 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Nullity band; `h²` when omitted.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nullity: Option<f64>,
    pub focal: f64,
    pub kernel: f64,
    pub bvp: f64,
    pub el: f64,
    pub locate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { nullity: None, focal: 1e-6, kernel: 1e-7, bvp: 1e-10, el: 1e-3, locate: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    pub svg: bool,
}

impl RunConfig {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        toml::from_str(text).map_err(|e| config_error(format!("config: {e}")))
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(|e| config_error(format!("{e:#}")))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form with output settings removed, so the
    /// same problem written to different places hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputSpec::default();
        hash_text(&c.to_toml())
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        let t = &self.tolerances;
        let positive = [("focal", t.focal), ("kernel", t.kernel), ("bvp", t.bvp), ("el", t.el), ("locate", t.locate)];
        for (name, v) in positive.into_iter().chain(t.nullity.map(|v| ("nullity", v))) {
            if !(v > 0.0) {
                return Err(config_error(format!("tolerance `{name}` must be positive (got {v})")));
            }
        }
        if self.grid.elements < 32 {
            return Err(config_error(format!("grid.elements must be at least 32 (got {})", self.grid.elements)));
        }
        if self.grid.lambda_points < 2 || !(self.grid.lambda_min < self.grid.lambda_max) {
            return Err(config_error("lambda grid needs lambda_min < lambda_max and at least 2 points"));
        }
        if let Some(tau) = self.tau {
            if !(tau > 0.0) {
                return Err(config_error(format!("tau must be positive (got {tau})")));
            }
        }
        Ok(())
    }

    pub fn family(&self) -> anyhow::Result<LagrangianFamily> {
        builtin(&self.family.name, &self.family.params).map_err(|e| config_error(format!("family: {e}")))
    }

    pub fn tau(&self) -> anyhow::Result<f64> {
        match (self.tau, self.family.name.as_str()) {
            (Some(t), _) => Ok(t),
            (None, "pendulum") => {
                let p = &self.family.params;
                Ok(pendulum_period(*p.get("l").unwrap_or(&1.0), *p.get("g").unwrap_or(&1.0)))
            }
            (None, name) => Err(config_error(format!("tau is required for family `{name}`"))),
        }
    }

    pub fn boundary(&self, n: usize) -> anyhow::Result<BoundaryCondition> {
        let bad = |e: lagrindex::Error| config_error(format!("boundary: {e}"));
        let bc = match &self.boundary {
            BoundarySpec::Product { v0, v1, a0, a1 } => {
                let bc = BoundaryCondition::product_from_spans(n, v0, v1).map_err(bad)?;
                if a0.is_some() || a1.is_some() {
                    let vec = |a: &Option<Vec<f64>>| a.as_ref().map_or(DVector::zeros(n), |a| DVector::from_column_slice(a));
                    bc.with_anchors(vec(a0), vec(a1)).map_err(bad)?
                } else {
                    bc
                }
            }
            BoundarySpec::Twist { e: None } => BoundaryCondition::periodic(n),
            BoundarySpec::Twist { e: Some(rows) } => {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(config_error(format!("boundary: E must be {n} x {n}")));
                }
                BoundaryCondition::twist(DMatrix::from_fn(n, n, |i, j| rows[i][j])).map_err(bad)?
            }
            BoundarySpec::Brake => BoundaryCondition::brake(),
        };
        bc.check_dim(n).map_err(bad)?;
        Ok(bc)
    }

    pub fn bvp_options(&self) -> BvpOptions {
        BvpOptions { steps: 2 * self.grid.elements, tol: self.tolerances.bvp, el_tol: self.tolerances.el, ..BvpOptions::default() }
    }

    /// Initial data for shooting: the configured seed, zeros by default.
    pub fn shooting_guess(&self, n: usize) -> anyhow::Result<(DVector<f64>, DVector<f64>)> {
        let vec = |v: &Option<Vec<f64>>, what: &str| -> anyhow::Result<DVector<f64>> {
            match v {
                None => Ok(DVector::zeros(n)),
                Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
                Some(v) => Err(config_error(format!("branch.{what} has length {}, expected {n}", v.len()))),
            }
        };
        match &self.branch {
            BranchSpec::Trivial => Ok((DVector::zeros(n), DVector::zeros(n))),
            BranchSpec::Shoot { q0, v0 } => Ok((vec(q0, "q0")?, vec(v0, "v0")?)),
        }
    }

    pub fn branch(&self, n: usize, bc: &BoundaryCondition) -> anyhow::Result<Box<dyn Branch>> {
        let tau = self.tau()?;
        Ok(match &self.branch {
            BranchSpec::Trivial => {
                let span = if bc.is_half_interval() { 0.5 * tau } else { tau };
                let b = ClosedFormBranch::zero(n, span, 2 * self.grid.elements).with_el_tol(self.tolerances.el);
                Box::new(if bc.is_half_interval() { b.on_half_interval() } else { b })
            }
            BranchSpec::Shoot { .. } => Box::new(WarmStartBranch {
                bc: bc.clone(),
                tau,
                seed: self.shooting_guess(n)?,
                opts: self.bvp_options(),
            }),
        })
    }

    /// The built-in pendulum problem used by `demo pendulum`.
    pub fn pendulum_demo() -> Self {
        RunConfig {
            tau: None,
            lambda: 0.0,
            seed: 0,
            family: FamilySpec { name: "pendulum".into(), params: BTreeMap::from([("l".into(), 1.0), ("g".into(), 1.0)]) },
            boundary: BoundarySpec::Twist { e: None },
            branch: BranchSpec::Trivial,
            grid: GridSpec { lambda_points: 21, ..GridSpec::default() },
            tolerances: Tolerances::default(),
            output: OutputSpec::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
tau = 3.0
lambda = 0.25
seed = 7

[family]
name = "harmonic"
params = { n = 2, omega = 1.0, omega_slope = 1.0 }

[boundary]
type = "product"
v0 = [[1.0, 0.0]]
v1 = []

[branch]
kind = "shoot"
q0 = [0.0, 0.0]

[grid]
elements = 128
lambda_min = 0.0
lambda_max = 2.0
lambda_points = 11

[tolerances]
nullity = 1e-5
focal = 1e-7

[output]
dir = "out"
svg = true
"#;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.grid.elements, 128);
        assert_eq!(cfg.tolerances.kernel, 1e-7);
        assert_eq!(cfg.branch, BranchSpec::Shoot { q0: Some(vec![0.0, 0.0]), v0: None });
        let again = RunConfig::parse(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());

        for cfg in [RunConfig::pendulum_demo(), RunConfig { boundary: BoundarySpec::Brake, ..RunConfig::pendulum_demo() }] {
            assert_eq!(RunConfig::parse(&cfg.to_toml()).unwrap(), cfg);
        }
        let twist = RunConfig {
            boundary: BoundarySpec::Twist { e: Some(vec![vec![0.0, -1.0], vec![1.0, 0.0]]) },
            ..RunConfig::pendulum_demo()
        };
        let text = twist.to_toml();
        assert!(text.contains("E = "));
        assert_eq!(RunConfig::parse(&text).unwrap(), twist);
    }

    #[test]
    fn hash_ignores_output() {
        let a = RunConfig::parse(SAMPLE).unwrap();
        let mut b = a.clone();
        b.output.dir = Some("elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        b.grid.elements = 256;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = RunConfig::parse(SAMPLE).unwrap();
        cfg.grid.elements = 16;
        assert!(cfg.validate().is_err());
        let mut cfg = RunConfig::parse(SAMPLE).unwrap();
        cfg.tolerances.focal = 0.0;
        assert!(cfg.validate().is_err());
        assert!(RunConfig::parse("[family]\nname = \"free\"\nunknown = 1\n").is_err());
        let cfg = RunConfig::parse("[family]\nname = \"free\"\n").unwrap();
        assert!(cfg.tau().is_err());
        assert!(cfg.boundary(1).unwrap().is_point_target());
    }

    #[test]
    fn builds_boundaries() {
        let cfg = RunConfig::parse(SAMPLE).unwrap();
        assert_eq!(cfg.boundary(2).unwrap().kind(), "product");
        assert!(cfg.boundary(3).is_err());
        let brake = RunConfig { boundary: BoundarySpec::Brake, ..cfg.clone() };
        assert!(brake.boundary(2).unwrap().is_half_interval());
        let bad = RunConfig { boundary: BoundarySpec::Twist { e: Some(vec![vec![2.0]]) }, ..cfg };
        assert!(bad.boundary(1).is_err());
    }
}
