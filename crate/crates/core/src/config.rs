//! TOML run description for the command-line tool.
//!
//! Every section is optional and every key has a default; unknown keys are
//! rejected. A configuration converts to and from a [`NamedConfig`].

use crate::expfit::ExponentialBcf;
use crate::hops::{HopsMode, Tolerances};
use crate::master_eq::MeVariant;
use crate::spin_boson::{FitSpec, NamedConfig, ThermalMethod};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemSection {
    pub epsilon: f64,
    pub delta: f64,
}

impl Default for SystemSection {
    fn default() -> Self {
        Self {
            epsilon: 0.0,
            delta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BathSection {
    pub s: f64,
    pub omega_c: f64,
    pub alpha: f64,
}

impl Default for BathSection {
    fn default() -> Self {
        Self {
            s: 0.5,
            omega_c: 10.0,
            alpha: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    pub n_terms: usize,
    pub tau0: f64,
    pub p: f64,
    pub restarts: usize,
    pub seed: u64,
    pub max_rel_error: f64,
    /// Fit file to load instead of fitting.
    pub file: Option<PathBuf>,
    /// Inline terms as `[re, im]` pairs; used when both are given.
    pub g: Option<Vec<[f64; 2]>>,
    pub w: Option<Vec<[f64; 2]>>,
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            n_terms: 5,
            tau0: 15.0,
            p: 10.0,
            restarts: 64,
            seed: 1,
            max_rel_error: 0.02,
            file: None,
            g: None,
            w: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    /// Tolerance relative to `|alpha(0)|`.
    pub rel_tol: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { rel_tol: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HierarchySection {
    pub k_max: usize,
    pub mode: HopsMode,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for HierarchySection {
    fn default() -> Self {
        let t = Tolerances::default();
        Self {
            k_max: 5,
            mode: HopsMode::Nonlinear,
            rtol: t.rtol,
            atol: t.atol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_samples: usize,
    pub master_seed: u64,
    pub t_max: f64,
    pub dt: f64,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            master_seed: 1,
            t_max: 20.0,
            dt: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThermalSection {
    /// Bath temperature; `0` disables thermal effects.
    pub temperature: f64,
    pub method: ThermalMethod,
}

impl Default for ThermalSection {
    fn default() -> Self {
        Self {
            temperature: 0.0,
            method: ThermalMethod::StochasticShift,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// File stem; defaults to the label.
    pub stem: Option<String>,
    pub label: String,
    /// Master-equation variant for `me`.
    pub me_variant: MeVariant,
    pub skip_omega0: bool,
    pub freeze_transitions: bool,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            stem: None,
            label: "run".into(),
            me_variant: MeVariant::Constant,
            skip_omega0: false,
            freeze_transitions: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CliConfig {
    pub system: SystemSection,
    pub bath: BathSection,
    pub fit: FitSection,
    pub noise: NoiseSection,
    pub hierarchy: HierarchySection,
    pub ensemble: EnsembleSection,
    pub thermal: ThermalSection,
    pub output: OutputSection,
}

impl CliConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text)?;
        if let Some(f) = &cfg.fit.file {
            if f.is_relative() {
                if let Some(dir) = path.parent() {
                    cfg.fit.file = Some(dir.join(f));
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises")
    }

    fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.bath.omega_c > 0.0 && self.bath.s > 0.0 && self.bath.alpha >= 0.0) {
            return bad("bath needs s > 0, omega_c > 0, alpha >= 0");
        }
        if self.system.epsilon == 0.0 && self.system.delta == 0.0 {
            return bad("epsilon and delta both zero");
        }
        if self.fit.n_terms == 0 || !(self.fit.tau0 > 0.0) || !(self.fit.p >= 2.0) || self.fit.restarts == 0 {
            return bad("fit needs n_terms >= 1, tau0 > 0, p >= 2, restarts >= 1");
        }
        if self.fit.g.is_some() != self.fit.w.is_some() {
            return bad("inline fit needs both g and w");
        }
        if !(self.ensemble.t_max > 0.0 && self.ensemble.dt > 0.0) || self.ensemble.n_samples == 0 {
            return bad("ensemble needs t_max > 0, dt > 0, n_samples >= 1");
        }
        if !(self.noise.rel_tol > 0.0) || !(self.hierarchy.rtol > 0.0 && self.hierarchy.atol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.thermal.temperature >= 0.0 && self.thermal.temperature.is_finite()) {
            return bad("temperature must be finite and non-negative");
        }
        Ok(())
    }

    /// Inline exponential sum, if given.
    pub fn inline_fit(&self) -> Result<Option<ExponentialBcf>, ConfigError> {
        match (&self.fit.g, &self.fit.w) {
            (Some(g), Some(w)) => {
                let conv = |v: &[[f64; 2]]| v.iter().map(|p| Complex64::new(p[0], p[1])).collect();
                ExponentialBcf::new(conv(g), conv(w))
                    .map(Some)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            _ => Ok(None),
        }
    }

    pub fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.output.label.clone())
    }

    pub fn to_named(&self) -> NamedConfig {
        NamedConfig {
            label: self.output.label.clone(),
            epsilon: self.system.epsilon,
            delta: self.system.delta,
            s: self.bath.s,
            omega_c: self.bath.omega_c,
            alpha: self.bath.alpha,
            temperature: self.thermal.temperature,
            thermal_method: self.thermal.method,
            fit: FitSpec {
                n_terms: self.fit.n_terms,
                tau0: self.fit.tau0,
                p: self.fit.p,
                restarts: self.fit.restarts,
                seed: self.fit.seed,
                max_rel_error: self.fit.max_rel_error,
            },
            mode: self.hierarchy.mode,
            k_max: self.hierarchy.k_max,
            n_samples: self.ensemble.n_samples,
            master_seed: self.ensemble.master_seed,
            t_max: self.ensemble.t_max,
            dt: self.ensemble.dt,
            noise_rel_tol: self.noise.rel_tol,
            tol: Tolerances {
                rtol: self.hierarchy.rtol,
                atol: self.hierarchy.atol,
            },
            reference: None,
        }
    }

    pub fn from_named(n: &NamedConfig) -> Self {
        Self {
            system: SystemSection {
                epsilon: n.epsilon,
                delta: n.delta,
            },
            bath: BathSection {
                s: n.s,
                omega_c: n.omega_c,
                alpha: n.alpha,
            },
            fit: FitSection {
                n_terms: n.fit.n_terms,
                tau0: n.fit.tau0,
                p: n.fit.p,
                restarts: n.fit.restarts,
                seed: n.fit.seed,
                max_rel_error: n.fit.max_rel_error,
                ..FitSection::default()
            },
            noise: NoiseSection { rel_tol: n.noise_rel_tol },
            hierarchy: HierarchySection {
                k_max: n.k_max,
                mode: n.mode,
                rtol: n.tol.rtol,
                atol: n.tol.atol,
            },
            ensemble: EnsembleSection {
                n_samples: n.n_samples,
                master_seed: n.master_seed,
                t_max: n.t_max,
                dt: n.dt,
            },
            thermal: ThermalSection {
                temperature: n.temperature,
                method: n.thermal_method,
            },
            output: OutputSection {
                label: n.label.clone(),
                ..OutputSection::default()
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_boson::named_configs;

    #[test]
    fn empty_document_takes_defaults() {
        assert_eq!(CliConfig::parse("").unwrap(), CliConfig::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(CliConfig::parse("[bath]\nalpah = 0.1\n").is_err());
        assert!(CliConfig::parse("[bogus]\n").is_err());
    }

    #[test]
    fn partial_sections_merge_with_defaults() {
        let c = CliConfig::parse("[bath]\nalpha = 0.25\n[hierarchy]\nmode = \"linear\"\n").unwrap();
        assert_eq!(c.bath.alpha, 0.25);
        assert_eq!(c.bath.omega_c, 10.0);
        assert_eq!(c.hierarchy.mode, HopsMode::Linear);
    }

    #[test]
    fn named_configs_survive_toml() {
        for n in named_configs() {
            let text = CliConfig::from_named(&n).to_toml();
            let back = CliConfig::parse(&text).unwrap().to_named();
            assert_eq!(NamedConfig { reference: None, ..n }, back);
        }
    }

    #[test]
    fn inline_terms() {
        let c = CliConfig::parse("[fit]\ng = [[1.0, 0.5]]\nw = [[2.0, -1.0]]\n").unwrap();
        let e = c.inline_fit().unwrap().unwrap();
        assert_eq!(e.w()[0], Complex64::new(2.0, -1.0));
        assert!(CliConfig::parse("[fit]\ng = [[1.0, 0.5]]\n").is_err());
    }
}
