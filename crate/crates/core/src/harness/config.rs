//! Experiment configuration: TOML with dotted sections, validated eagerly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bvfun::{BvFunction, BvKind};
use crate::error::{Error, Result};
use crate::pathgen::{Family, GeneratorSpec};
use crate::seminorm::{KeyParams, SeminormParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Occupation,
    Potential,
    Variability,
    Compose,
    Seminorm,
    KeyEstimate,
    Integrate,
    Berman,
    Verify,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Self::Occupation => "occupation",
            Self::Potential => "potential",
            Self::Variability => "variability",
            Self::Compose => "compose",
            Self::Seminorm => "seminorm",
            Self::KeyEstimate => "key_estimate",
            Self::Integrate => "integrate",
            Self::Berman => "berman",
            Self::Verify => "verify",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        ALL.iter().copied().find(|e| e.name() == s)
    }
}

pub const ALL: [Experiment; 9] = [
    Experiment::Occupation,
    Experiment::Potential,
    Experiment::Variability,
    Experiment::Compose,
    Experiment::Seminorm,
    Experiment::KeyEstimate,
    Experiment::Integrate,
    Experiment::Berman,
    Experiment::Verify,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Fbm,
    StableLevy,
    Linear,
    Tent,
    Step,
    PiecewiseLinear,
    Weierstrass,
}

/// `[generator]` section; family parameters are flat keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub family: FamilyName,
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one_f64")]
    pub t_total: f64,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hurst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jumps: Option<Vec<(f64, f64)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakpoints: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

fn one_usize() -> usize {
    1
}
fn one_f64() -> f64 {
    1.0
}

fn need<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| Error::Config(format!("missing key {key}")))
}

impl GeneratorConfig {
    pub fn family(&self) -> Result<Family> {
        Ok(match self.family {
            FamilyName::Fbm => Family::Fbm { hurst: need(&self.hurst, "generator.hurst")? },
            FamilyName::StableLevy => Family::StableLevy { alpha: need(&self.alpha, "generator.alpha")? },
            FamilyName::Linear => Family::Linear,
            FamilyName::Tent => Family::Tent,
            FamilyName::Step => Family::Step { jumps: need(&self.jumps, "generator.jumps")? },
            FamilyName::PiecewiseLinear => Family::PiecewiseLinear {
                breakpoints: need(&self.breakpoints, "generator.breakpoints")?,
                values: need(&self.values, "generator.values")?,
            },
            FamilyName::Weierstrass => Family::Weierstrass {
                a: need(&self.a, "generator.a")?,
                b: need(&self.b, "generator.b")?,
                lambda: need(&self.lambda, "generator.lambda")?,
            },
        })
    }

    /// Spec at refinement level r (N·2^r samples).
    pub fn spec(&self, seed: u64, refinement: usize) -> Result<GeneratorSpec> {
        let n = self.n.checked_shl(refinement as u32).filter(|n| *n >= self.n).ok_or_else(|| Error::Config("N overflows".into()))?;
        Ok(GeneratorSpec::new(self.family()?, self.t_total, n).dim(self.dim).seed(seed))
    }
}

/// `[bv]` section: `kind` plus the fields of that kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BvConfig {
    #[serde(default = "one_usize")]
    pub dim: usize,
    #[serde(default = "one_f64")]
    pub scale: f64,
    #[serde(flatten)]
    pub kind: BvKind,
}

impl BvConfig {
    pub fn function(&self) -> Result<BvFunction> {
        Ok(BvFunction::new(self.dim, self.kind.clone())?.scaled(self.scale))
    }
}

/// `[params]`: exponents and knobs shared by the experiments.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// resolution of sampled gradient measures
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// dyadic radii 2^-k_lo .. 2^-k_hi for ball masses
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_lo: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_hi: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_len: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_len: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simplify: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "one_usize")]
    pub refinements: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bv: Option<BvConfig>,
    #[serde(default)]
    pub params: Params,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_out() -> PathBuf {
    PathBuf::from("out")
}

pub const DEFAULT_H: f64 = 1e-3;

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn config_error(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = text.parse().map_err(|e: toml::de::Error| cfg_err(e.message().to_string()))?;
        let cfg: Self = toml::from_str(text).map_err(|e| cfg_err(e.message().to_string()))?;
        cfg.check_bv_keys(&raw)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical text used for hashing and for re-runs.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// `[bv]` flattens an internally tagged enum, which serde cannot combine
    /// with deny_unknown_fields; unknown keys are caught here instead.
    fn check_bv_keys(&self, raw: &toml::Table) -> Result<()> {
        let (Some(bv), Some(toml::Value::Table(given))) = (&self.bv, raw.get("bv")) else {
            return Ok(());
        };
        let known = toml::Table::try_from(bv).map_err(|e| cfg_err(e.to_string()))?;
        match given.keys().find(|k| !known.contains_key(*k)) {
            Some(k) => Err(cfg_err(format!("unknown key bv.{k}"))),
            None => Ok(()),
        }
    }

    pub fn generator(&self) -> Result<&GeneratorConfig> {
        self.generator.as_ref().ok_or_else(|| cfg_err("missing [generator] section"))
    }

    pub fn bv(&self) -> Result<BvFunction> {
        self.bv.as_ref().ok_or_else(|| cfg_err("missing [bv] section"))?.function().map_err(config_error)
    }

    fn param(&self, v: Option<f64>, key: &str) -> Result<f64> {
        v.ok_or_else(|| cfg_err(format!("missing key params.{key}")))
    }

    pub fn h(&self) -> f64 {
        self.params.h.unwrap_or(DEFAULT_H)
    }

    pub fn key_params(&self) -> Result<KeyParams> {
        let p = &self.params;
        Ok(KeyParams {
            s: self.param(p.s, "s")?,
            theta: self.param(p.theta, "theta")?,
            p: self.param(p.p, "p")?,
            q: self.param(p.q, "q")?,
            beta: self.param(p.beta, "beta")?,
            r: self.param(p.r, "r")?,
            h: self.h(),
        })
    }

    /// Every precondition that can be checked without computing.
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(cfg_err("seeds must not be empty"));
        }
        if self.refinements == 0 {
            return Err(cfg_err("refinements must be >= 1"));
        }
        if self.experiment == Experiment::Verify {
            return Ok(());
        }
        let g = self.generator()?;
        for r in 0..self.refinements {
            g.spec(0, r)?.validate().map_err(config_error)?;
        }
        let n = g.dim;
        let p = &self.params;
        if let Some(h) = p.h {
            if !(h > 0.0) {
                return Err(cfg_err("params.h must be positive"));
            }
        }
        let dim_match = |f: &BvFunction| {
            if f.dim != n {
                Err(cfg_err("bv.dim must equal generator.dim"))
            } else {
                Ok(())
            }
        };
        match self.experiment {
            Experiment::Occupation => {
                let (lo, hi) = (p.k_lo.unwrap_or(3), p.k_hi.unwrap_or(8));
                if lo >= hi || hi - lo < 2 {
                    return Err(cfg_err("need k_lo + 2 <= k_hi"));
                }
                if let Some(b) = p.bin_width {
                    if !(b > 0.0) || n > 3 {
                        return Err(cfg_err("bin_width must be positive, n <= 3"));
                    }
                }
            }
            Experiment::Potential => {
                let gamma = self.param(p.gamma, "gamma")?;
                let q = self.param(p.q, "q")?;
                if !(gamma > 0.0 && gamma < n as f64) || !(q >= 1.0) {
                    return Err(cfg_err("need 0 < gamma < n and q >= 1"));
                }
                if let Some(a) = p.alpha {
                    if !(a < 0.0 && a > -(n as f64)) || !(q > 1.0) {
                        return Err(cfg_err("negative Sobolev norm needs -n < alpha < 0 and q > 1"));
                    }
                }
            }
            Experiment::Variability => {
                dim_match(&self.bv()?)?;
                let s = self.param(p.s, "s")?;
                let pp = self.param(p.p, "p")?;
                if !(s > 0.0 && s < 1.0) || !(pp >= 1.0) {
                    return Err(cfg_err("need 0 < s < 1 and p >= 1"));
                }
            }
            Experiment::Compose => {
                dim_match(&self.bv()?)?;
                if let Some(s) = p.s {
                    if !(s > 0.0 && s < 1.0) {
                        return Err(cfg_err("need 0 < s < 1"));
                    }
                }
            }
            Experiment::Seminorm => {
                if let Some(bv) = &self.bv {
                    dim_match(&bv.function().map_err(config_error)?)?;
                }
                SeminormParams::new(self.param(p.theta, "theta")?, self.param(p.p, "p")?).map_err(config_error)?;
            }
            Experiment::KeyEstimate => {
                dim_match(&self.bv()?)?;
                self.key_params()?.check().map_err(config_error)?;
            }
            Experiment::Integrate => {
                if n != 1 {
                    return Err(cfg_err("integrate needs a scalar path"));
                }
                if let Some(bv) = &self.bv {
                    dim_match(&bv.function().map_err(config_error)?)?;
                }
                let a = self.param(p.alpha, "alpha")?;
                if !(a > 0.0 && a < 1.0) {
                    return Err(cfg_err("need 0 < alpha < 1"));
                }
            }
            Experiment::Berman => {
                let a = self.param(p.alpha, "alpha")?;
                let pp = self.param(p.p, "p")?;
                let nf = n as f64;
                if n > 2 || !(pp > 1.0) || !(a > -nf / pp && a < nf - nf / pp) {
                    return Err(cfg_err("need n <= 2, p > 1 and -n/p < alpha < n - n/p"));
                }
                let (lo, hi) = (p.min_len.unwrap_or(0.05), p.max_len.unwrap_or(0.5));
                if !(lo > 0.0 && lo <= hi && hi <= 1.0) || p.windows == Some(0) {
                    return Err(cfg_err("need 0 < min_len <= max_len <= 1 (fractions of T) and windows >= 1"));
                }
            }
            Experiment::Verify => {}
        }
        Ok(())
    }
}
