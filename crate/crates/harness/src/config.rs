//! Experiment configuration, loaded from JSON and hashed for reports.

use std::path::{Path, PathBuf};

use mlab_core::function_spaces::conjugate_exponent;
use mlab_core::grid::{GridSpec, DEFAULT_PERIOD};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};

/// Tolerance on `1/r = Σ 1/p_j`.
pub const HOLDER_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub d: usize,
    pub n: usize,
    #[serde(default = "default_period")]
    pub period: f64,
}

fn default_period() -> f64 {
    DEFAULT_PERIOD
}

impl GridConfig {
    /// Parses `DxN`, e.g. `2x16`.
    pub fn parse(s: &str) -> Result<Self> {
        let bad = || HarnessError::Usage(format!("grid must look like 2x16, got `{s}`"));
        let (d, n) = s.split_once(['x', 'X']).ok_or_else(bad)?;
        Ok(Self {
            d: d.trim().parse().map_err(|_| bad())?,
            n: n.trim().parse().map_err(|_| bad())?,
            period: DEFAULT_PERIOD,
        })
    }

    pub fn spec(&self) -> Result<GridSpec> {
        Ok(GridSpec::new(self.d, self.n, self.period)?)
    }
}

/// Random field family: modulus `(1 + |ξ|)^{-γ}` on the band
/// `min_radius <= |ξ| <= max_radius` (lattice units).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub size: usize,
    pub decay: f64,
    #[serde(default = "yes")]
    pub mean_zero: bool,
    #[serde(default)]
    pub min_radius: Option<f64>,
    #[serde(default)]
    pub max_radius: Option<f64>,
    /// Band limit of the test functions `φ`.
    #[serde(default = "default_phi_radius")]
    pub phi_radius: f64,
    /// `v = u + ε w` in the difference estimates; `0` gives `v = u`.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
}

fn yes() -> bool {
    true
}

fn default_phi_radius() -> f64 {
    1.5
}

fn default_perturbation() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationRange {
    pub t_min: u32,
    pub t_max: u32,
}

impl DilationRange {
    pub fn steps(&self) -> impl Iterator<Item = u32> {
        self.t_min..=self.t_max
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StrategyConfig {
    Direct,
    Separable { rank: usize },
}

/// Pass/fail policy. These are artifact choices, not constants from theory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Thresholds {
    /// Bound on `max_t R(t) / min_t R(t)` where `R` must be dilation invariant.
    pub invariance: f64,
    /// Bound on `max_t R(t) / R(t_min)` for oscillation families.
    pub oscillation: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            invariance: 1.01,
            oscillation: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub grid: GridConfig,
    pub symbol: String,
    /// `p_1, …, p_m`; their count is the arity `m`.
    pub exponents: Vec<f64>,
    pub r: f64,
    #[serde(default)]
    pub s: f64,
    #[serde(default)]
    pub k: u32,
    pub seed: u64,
    pub family: FamilyConfig,
    pub dilation: DilationRange,
    #[serde(default = "default_strategy")]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
}

fn default_strategy() -> StrategyConfig {
    StrategyConfig::Direct
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: Self = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.id.is_empty() || self.id.contains(['/', '\\']) || self.id.starts_with('.') {
            return bad(format!("experiment id `{}` is not a plain name", self.id));
        }
        self.grid.spec()?;
        if self.exponents.is_empty() {
            return bad("at least one exponent is required".into());
        }
        if self.exponents.iter().any(|&p| !(p > 1.0 && p.is_finite())) {
            return bad(format!("exponents must lie in (1, ∞): {:?}", self.exponents));
        }
        if !(self.r >= 1.0 && self.r.is_finite()) {
            return bad(format!("r must lie in [1, ∞), got {}", self.r));
        }
        let sum: f64 = self.exponents.iter().map(|p| 1.0 / p).sum();
        if (sum - 1.0 / self.r).abs() > HOLDER_TOL {
            return bad(format!("Hölder relation fails: Σ 1/p_j = {sum}, 1/r = {}", 1.0 / self.r));
        }
        if !(self.s >= 0.0 && self.s.is_finite()) {
            return bad(format!("s must be >= 0, got {}", self.s));
        }
        if self.family.size == 0 {
            return bad("family size must be positive".into());
        }
        if !(self.family.decay >= 0.0) {
            return bad(format!("decay must be >= 0, got {}", self.family.decay));
        }
        if self.dilation.t_min > self.dilation.t_max {
            return bad("empty dilation range".into());
        }
        if let StrategyConfig::Separable { rank: 0 } = self.strategy {
            return bad("separable rank must be positive".into());
        }
        Ok(())
    }

    pub fn m(&self) -> usize {
        self.exponents.len()
    }

    /// `r_* = r / (r - 1)`.
    pub fn r_star(&self) -> f64 {
        conjugate_exponent(self.r)
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out_dir.join(&self.id)
    }

    /// Built-in configuration for a subcommand, used when no file is given.
    pub fn default_for(experiment: &str) -> Self {
        let family = FamilyConfig {
            size: 4,
            decay: 1.0,
            mean_zero: true,
            min_radius: None,
            max_radius: None,
            phi_radius: default_phi_radius(),
            perturbation: default_perturbation(),
        };
        let mut cfg = Self {
            id: experiment.to_string(),
            grid: GridConfig { d: 2, n: 16, period: DEFAULT_PERIOD },
            symbol: "det_norm:2".into(),
            exponents: vec![2.0, 2.0],
            r: 1.0,
            s: 0.0,
            k: 0,
            seed: 0,
            family,
            dilation: DilationRange { t_min: 0, t_max: 3 },
            strategy: StrategyConfig::Direct,
            thresholds: Thresholds::default(),
            out_dir: default_out(),
        };
        match experiment {
            "thm3-scan" => {
                cfg.symbol = "det".into();
                cfg.k = 1;
                cfg.s = 0.5;
                cfg.family.max_radius = Some(4.0);
                cfg.dilation.t_max = 5;
            }
            "jacobian-estimate" => {
                cfg.symbol = "det".into();
                cfg.s = 0.5;
                cfg.family.max_radius = Some(4.0);
                cfg.dilation.t_max = 5;
            }
            "hessian-estimate" => {
                cfg.grid = GridConfig { d: 3, n: 8, period: DEFAULT_PERIOD };
                cfg.symbol = "det_pow:2".into();
                cfg.exponents = vec![3.0; 3];
                cfg.s = 4.0 / 3.0;
                cfg.family.size = 2;
                cfg.family.min_radius = Some(2.0);
                cfg.family.max_radius = Some(3.0);
                cfg.dilation.t_max = 5;
            }
            "decompose-symbol" => {
                cfg.strategy = StrategyConfig::Separable { rank: 32 };
            }
            _ => {}
        }
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for e in ["boundedness-scan", "thm3-scan", "jacobian-estimate", "hessian-estimate", "decompose-symbol"] {
            ExperimentConfig::default_for(e).validate().unwrap();
        }
    }

    #[test]
    fn holder_relation_is_enforced() {
        let mut cfg = ExperimentConfig::default_for("boundedness-scan");
        cfg.r = 1.0 + 1e-9;
        assert!(cfg.validate().is_err());
        cfg.exponents = vec![3.0, 6.0];
        cfg.r = 2.0;
        cfg.validate().unwrap();
        cfg.exponents = vec![0.5, 2.0];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn grid_flag_parses() {
        let g = GridConfig::parse("3x8").unwrap();
        assert_eq!((g.d, g.n), (3, 8));
        assert!(GridConfig::parse("3-8").is_err());
        assert!(GridConfig::parse("2x12").unwrap().spec().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default_for("boundedness-scan");
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
