//! Flat `key = value` experiment configuration with CLI-flag overrides.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::{Budget, SolverKind};

/// Where the reference optimum comes from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceSpec {
    /// Solve with the projected-gradient oracle, caching next to the instance.
    Compute,
    /// Load a previously written reference cache file.
    Path(PathBuf),
}

impl ReferenceSpec {
    fn parse(s: &str) -> Self {
        if s.eq_ignore_ascii_case("compute") {
            ReferenceSpec::Compute
        } else {
            ReferenceSpec::Path(PathBuf::from(s))
        }
    }
}

/// Full configuration of one experiment run.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub instance: PathBuf,
    pub solver: SolverKind,
    pub p: f64,
    pub alpha: f64,
    pub gamma: f64,
    pub tau: f64,
    pub outer_budget: usize,
    pub inner_budget: u64,
    pub wall_seconds: Option<f64>,
    pub warm_start: bool,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub reference: ReferenceSpec,
    pub theta_root_find: bool,
    pub check_every: u64,
    pub check_bounds: bool,
    pub reference_tol: f64,
    pub label: Option<String>,
}

pub const ENV_OUT_DIR: &str = "IBPG_OUT_DIR";

impl Default for ExperimentConfig {
    fn default() -> Self {
        let out_dir = std::env::var(ENV_OUT_DIR)
            .map(PathBuf::from)
            .unwrap_or_else(|_| PathBuf::from("runs"));
        Self {
            instance: PathBuf::new(),
            solver: SolverKind::Ibpg,
            p: 1.1,
            alpha: 5.0,
            gamma: 2.0,
            tau: 1.0,
            outer_budget: 1_000_000_000,
            inner_budget: 500_000,
            wall_seconds: None,
            warm_start: false,
            seed: 0,
            out_dir,
            reference: ReferenceSpec::Compute,
            theta_root_find: false,
            check_every: 10,
            check_bounds: false,
            reference_tol: 1e-10,
            label: None,
        }
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` assignment.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("invalid {what} value '{value}'"));
        match key {
            "instance" => self.instance = PathBuf::from(value),
            "solver" => {
                self.solver = match value {
                    "ibpg" => SolverKind::Ibpg,
                    "vibpg" => SolverKind::Vibpg,
                    _ => return Err(Error::Config(format!("unknown solver '{value}'"))),
                }
            }
            "p" => self.p = value.parse().map_err(|_| bad("p"))?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "gamma" => self.gamma = value.parse().map_err(|_| bad("gamma"))?,
            "tau" => self.tau = value.parse().map_err(|_| bad("tau"))?,
            "outer_budget" => self.outer_budget = value.parse().map_err(|_| bad("outer_budget"))?,
            "inner_budget" => self.inner_budget = value.parse().map_err(|_| bad("inner_budget"))?,
            "wall_seconds" => self.wall_seconds = Some(value.parse().map_err(|_| bad("wall_seconds"))?),
            "warm_start" => self.warm_start = parse_bool(value)?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "reference" => self.reference = ReferenceSpec::parse(value),
            "theta_mode" => {
                self.theta_root_find = match value {
                    "closed_form" => false,
                    "root_find" => true,
                    _ => return Err(Error::Config(format!("unknown theta_mode '{value}'"))),
                }
            }
            "check_every" => self.check_every = value.parse().map_err(|_| bad("check_every"))?,
            "check_bounds" => self.check_bounds = parse_bool(value)?,
            "reference_tol" => self.reference_tol = value.parse().map_err(|_| bad("reference_tol"))?,
            "label" => self.label = Some(value.to_string()),
            _ => return Err(Error::Config(format!("unknown config key '{key}'"))),
        }
        Ok(())
    }

    /// Parses a whole config file body; later lines win.
    pub fn apply_file(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("config line {} is not 'key = value'", lineno + 1))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.instance.as_os_str().is_empty() {
            return Err(Error::Config("no instance given".into()));
        }
        if !(self.p > 0.0) {
            return Err(Error::Config(format!("p must be positive, got {}", self.p)));
        }
        if self.outer_budget == 0 || self.inner_budget == 0 {
            return Err(Error::Config("budgets must be positive".into()));
        }
        if let Some(w) = self.wall_seconds {
            if !(w > 0.0) {
                return Err(Error::Config("wall budget must be positive".into()));
            }
        }
        if !(self.gamma >= 1.0) || !(self.tau > 0.0) || !(self.alpha >= self.gamma + 1.0) {
            return Err(Error::Config(format!(
                "need gamma >= 1, tau > 0, alpha >= gamma + 1; got gamma = {}, tau = {}, alpha = {}",
                self.gamma, self.tau, self.alpha
            )));
        }
        Ok(())
    }

    pub fn budget(&self) -> Budget {
        Budget {
            outer: self.outer_budget,
            inner_total: self.inner_budget,
            wall: self.wall_seconds.map(Duration::from_secs_f64),
        }
    }

    /// Output file stem: explicit label or `{instance}_{solver}_p{p}`.
    pub fn run_label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let stem = self
            .instance
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "instance".into());
        format!("{stem}_{}_p{}", self.solver, self.p)
    }

    /// Key/value view used to echo the effective configuration.
    pub fn as_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        m.insert("instance".into(), self.instance.display().to_string());
        m.insert("solver".into(), self.solver.to_string());
        m.insert("p".into(), self.p.to_string());
        m.insert("alpha".into(), self.alpha.to_string());
        m.insert("gamma".into(), self.gamma.to_string());
        m.insert("tau".into(), self.tau.to_string());
        m.insert("outer_budget".into(), self.outer_budget.to_string());
        m.insert("inner_budget".into(), self.inner_budget.to_string());
        if let Some(w) = self.wall_seconds {
            m.insert("wall_seconds".into(), w.to_string());
        }
        m.insert("warm_start".into(), self.warm_start.to_string());
        m.insert("seed".into(), self.seed.to_string());
        m.insert("out_dir".into(), self.out_dir.display().to_string());
        m.insert(
            "reference".into(),
            match &self.reference {
                ReferenceSpec::Compute => "compute".into(),
                ReferenceSpec::Path(p) => p.display().to_string(),
            },
        );
        m.insert(
            "theta_mode".into(),
            if self.theta_root_find { "root_find" } else { "closed_form" }.into(),
        );
        m.insert("check_every".into(), self.check_every.to_string());
        m.insert("check_bounds".into(), self.check_bounds.to_string());
        m.insert("reference_tol".into(), self.reference_tol.to_string());
        m
    }
}

fn parse_bool(value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean '{value}'"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_parsing_and_overrides() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_file(
            "# experiment\ninstance = data/x.dat\nsolver = vibpg\np = 3.1\ninner_budget = 1000\n",
        )
        .unwrap();
        assert_eq!(cfg.solver, SolverKind::Vibpg);
        assert_eq!(cfg.p, 3.1);
        assert_eq!(cfg.inner_budget, 1000);
        // A later flag-style override wins.
        cfg.set("p", "1.1").unwrap();
        assert_eq!(cfg.p, 1.1);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_keys_and_values() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.set("granularity", "7").is_err());
        assert!(cfg.set("solver", "bfgs").is_err());
        assert!(cfg.apply_file("p 3.1").is_err());
        cfg.set("p", "-0.5").unwrap();
        cfg.set("instance", "x.dat").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn label_defaults_to_instance_solver_p() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("instance", "data/qap12a.dat").unwrap();
        cfg.set("p", "0.1").unwrap();
        assert_eq!(cfg.run_label(), "qap12a_ibpg_p0.1");
    }
}
