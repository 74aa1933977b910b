//! Flat `key = value` experiment configuration.
//!
//! Every key may appear in a file (one per line, `#` starts a comment) or as a
//! `key=value` override on the command line. Lists are comma separated.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use cutwave_core::assembly::NitscheMode;
use cutwave_core::geometry::{ArcDomain, BoundaryCondition};
use cutwave_core::stabilize::{EvsReference, StabilizationMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    RodSpectrum,
    RodConvergence,
    RodCutSweep,
    ArcConvergence,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::RodSpectrum => "rod-spectrum",
            Self::RodConvergence => "rod-convergence",
            Self::RodCutSweep => "rod-cutsweep",
            Self::ArcConvergence => "arc-convergence",
        }
    }

    /// Output file name inside the output directory.
    pub fn file_name(&self) -> String {
        format!("{}.csv", self.as_str().replace('-', "_"))
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "rod-spectrum" => Ok(Self::RodSpectrum),
            "rod-convergence" => Ok(Self::RodConvergence),
            "rod-cutsweep" => Ok(Self::RodCutSweep),
            "arc-convergence" => Ok(Self::ArcConvergence),
            other => Err(ConfigError(vec![format!("unknown experiment '{other}'")])),
        }
    }
}

/// One or more configuration problems, reported together.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub Vec<String>);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join("; "))
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub experiment: Experiment,
    pub degrees: Vec<usize>,
    pub n_el: Vec<usize>,
    pub bcs: Vec<BoundaryCondition>,
    pub stabilizations: Vec<StabilizationMode>,
    /// FCM indicator of the fictitious domain.
    pub alpha: f64,
    /// Material stabilization values of the spectrum study.
    pub ms_alphas: Vec<f64>,
    pub evs_epsilons: Vec<f64>,
    pub evs_threshold: f64,
    pub evs_reference: EvsReference,
    pub lambda_star: Option<f64>,
    pub nitsche: NitscheMode,
    /// Fixed step count; ignored with `fast`.
    pub n_steps: usize,
    /// `ceil(T / (0.5 dt_crit))` steps per cell.
    pub fast: bool,
    /// Cells needing more steps are reported with their critical step only.
    pub max_steps: Option<usize>,
    /// Companion boundary-fitted runs.
    pub reference: bool,
    pub rod_length: f64,
    pub rod_physical_length: f64,
    pub arc: ArcDomain,
    pub cut_fractions: Vec<f64>,
    pub sweep_n_el: usize,
    pub quadtree_depth: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub dump_field: bool,
}

fn log_spaced(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

impl Config {
    /// Defaults for `experiment`.
    pub fn new(experiment: Experiment) -> Self {
        use StabilizationMode::*;
        let both = vec![BoundaryCondition::Neumann, BoundaryCondition::Dirichlet];
        let mut cfg = Self {
            experiment,
            degrees: vec![1, 2, 3, 4],
            n_el: vec![10, 20, 40, 80],
            bcs: both,
            stabilizations: vec![GevsMass],
            alpha: 1e-10,
            ms_alphas: vec![1e-1, 1e-5, 1e-10],
            evs_epsilons: vec![1e-2, 1e-4],
            evs_threshold: 1e-2,
            evs_reference: EvsReference::Lumped,
            lambda_star: None,
            nitsche: NitscheMode::ComputedPenalty,
            n_steps: 100_000,
            fast: false,
            max_steps: None,
            reference: true,
            rod_length: 1.0,
            rod_physical_length: 0.9863,
            arc: ArcDomain::default(),
            cut_fractions: log_spaced(1e-8, 1e-1, 15),
            sweep_n_el: 20,
            quadtree_depth: 6,
            seed: 0,
            out: PathBuf::from("results"),
            dump_field: false,
        };
        match experiment {
            Experiment::RodSpectrum => {
                cfg.degrees = vec![2];
                cfg.n_el = vec![50];
                cfg.stabilizations = vec![Ms, Evs, GevsMass, GevsStiffness, GevsBoth];
            }
            Experiment::RodConvergence => {}
            Experiment::RodCutSweep => {
                cfg.stabilizations = vec![Ms, GevsMass];
                cfg.n_steps = 2_000_000;
                cfg.reference = false;
            }
            Experiment::ArcConvergence => {
                cfg.degrees = vec![1, 2, 3];
                cfg.n_el = vec![4, 8, 16, 32];
                cfg.stabilizations = vec![Ms, GevsMass];
                cfg.nitsche = NitscheMode::FixedPenalty(1e7);
                cfg.n_steps = 1_000_000;
                cfg.reference = false;
            }
        }
        cfg
    }

    /// Final time of the experiment for a rod of physical length `l_p`.
    pub fn final_time(&self, l_p: f64) -> f64 {
        match self.experiment {
            Experiment::ArcConvergence => PI / 2.0 - 2.0 * self.arc.theta_gamma,
            _ => 2.0 * l_p,
        }
    }

    /// Reads `key = value` lines from `path` on top of the current values.
    pub fn load_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(vec![format!("{}: {e}", path.display())]))?;
        let mut errors = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            match line.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v.trim()) {
                        errors.push(format!("{}:{}: {e}", path.display(), no + 1));
                    }
                }
                None => errors.push(format!("{}:{}: expected 'key = value'", path.display(), no + 1)),
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errors))
        }
    }

    /// Applies `key=value` overrides; all problems are collected.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<(), ConfigError> {
        let mut errors = Vec::new();
        for o in overrides {
            let o = o.as_ref();
            match o.split_once('=') {
                Some((k, v)) => {
                    if let Err(e) = self.set(k.trim(), v.trim()) {
                        errors.push(e);
                    }
                }
                None => errors.push(format!("override '{o}' is not of the form key=value")),
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(errors))
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let bad = |e: &dyn fmt::Display| format!("{key}: {e}");
        match key {
            "degrees" => self.degrees = list(value).map_err(|e| bad(&e))?,
            "n_el" => self.n_el = list(value).map_err(|e| bad(&e))?,
            "bc" => {
                self.bcs = match value {
                    "neumann" => vec![BoundaryCondition::Neumann],
                    "dirichlet" => vec![BoundaryCondition::Dirichlet],
                    "both" => vec![BoundaryCondition::Neumann, BoundaryCondition::Dirichlet],
                    other => return Err(bad(&format!("expected neumann, dirichlet or both, got '{other}'"))),
                }
            }
            "stabilization" => self.stabilizations = list(value).map_err(|e| bad(&e))?,
            "alpha" => self.alpha = scalar(value).map_err(|e| bad(&e))?,
            "ms_alphas" => self.ms_alphas = list(value).map_err(|e| bad(&e))?,
            "evs_epsilons" => self.evs_epsilons = list(value).map_err(|e| bad(&e))?,
            "evs_threshold" => self.evs_threshold = scalar(value).map_err(|e| bad(&e))?,
            "evs_reference" => {
                self.evs_reference = match value {
                    "lumped" => EvsReference::Lumped,
                    "consistent" => EvsReference::Consistent,
                    other => return Err(bad(&format!("expected lumped or consistent, got '{other}'"))),
                }
            }
            "lambda_star" => {
                self.lambda_star = if value == "auto" { None } else { Some(scalar(value).map_err(|e| bad(&e))?) }
            }
            "nitsche" => self.nitsche = parse_nitsche(value).map_err(|e| bad(&e))?,
            "n_steps" => self.n_steps = scalar(value).map_err(|e| bad(&e))?,
            "fast" => self.fast = scalar(value).map_err(|e| bad(&e))?,
            "max_steps" => {
                self.max_steps = if value == "none" { None } else { Some(scalar(value).map_err(|e| bad(&e))?) }
            }
            "reference" => self.reference = scalar(value).map_err(|e| bad(&e))?,
            "rod_length" => self.rod_length = scalar(value).map_err(|e| bad(&e))?,
            "rod_physical_length" => self.rod_physical_length = scalar(value).map_err(|e| bad(&e))?,
            "arc_side" => self.arc.side = scalar(value).map_err(|e| bad(&e))?,
            "arc_center" => self.arc.center = scalar(value).map_err(|e| bad(&e))?,
            "arc_inner_radius" => self.arc.inner_radius = scalar(value).map_err(|e| bad(&e))?,
            "arc_outer_radius" => self.arc.outer_radius = scalar(value).map_err(|e| bad(&e))?,
            "arc_theta_gamma" => self.arc.theta_gamma = scalar(value).map_err(|e| bad(&e))?,
            "cut_fractions" => self.cut_fractions = list(value).map_err(|e| bad(&e))?,
            "sweep_n_el" => self.sweep_n_el = scalar(value).map_err(|e| bad(&e))?,
            "quadtree_depth" => self.quadtree_depth = scalar(value).map_err(|e| bad(&e))?,
            "seed" => self.seed = scalar(value).map_err(|e| bad(&e))?,
            "out" => self.out = PathBuf::from(value),
            "dump_field" => self.dump_field = scalar(value).map_err(|e| bad(&e))?,
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    /// Every problem found, not only the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut e = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                e.push(msg.to_string());
            }
        };
        need(!self.degrees.is_empty(), "degrees must not be empty");
        need(self.degrees.iter().all(|&p| (1..=10).contains(&p)), "degrees must lie in 1..=10");
        need(!self.n_el.is_empty(), "n_el must not be empty");
        need(self.n_el.iter().all(|&n| n >= 1), "n_el entries must be positive");
        need(!self.bcs.is_empty(), "bc must not be empty");
        need(!self.stabilizations.is_empty(), "stabilization must not be empty");
        need(self.alpha > 0.0 && self.alpha <= 1.0, "alpha must lie in (0, 1]");
        need(self.ms_alphas.iter().all(|&a| a > 0.0 && a <= 1.0), "ms_alphas must lie in (0, 1]");
        need(self.evs_epsilons.iter().all(|&x| x > 0.0), "evs_epsilons must be positive");
        need(self.evs_threshold > 0.0 && self.evs_threshold < 1.0, "evs_threshold must lie in (0, 1)");
        need(self.lambda_star.is_none_or(|l| l > 0.0), "lambda_star must be positive");
        need(self.n_steps >= 1, "n_steps must be at least 1");
        need(self.rod_length > 0.0, "rod_length must be positive");
        need(
            self.rod_physical_length > 0.0 && self.rod_physical_length <= self.rod_length,
            "rod_physical_length must lie in (0, rod_length]",
        );
        need(self.arc.validate().is_ok(), "arc geometry is inconsistent");
        need(!self.cut_fractions.is_empty(), "cut_fractions must not be empty");
        need(self.cut_fractions.iter().all(|&c| c > 0.0 && c <= 1.0), "cut_fractions must lie in (0, 1]");
        need(self.sweep_n_el >= 1, "sweep_n_el must be positive");
        need(self.quadtree_depth <= 12, "quadtree_depth must not exceed 12");
        match self.nitsche {
            NitscheMode::FixedPenalty(l) | NitscheMode::PenaltyOnly(l) => need(l > 0.0, "Nitsche penalty must be positive"),
            NitscheMode::ComputedPenalty => {}
        }
        if e.is_empty() {
            Ok(())
        } else {
            Err(ConfigError(e))
        }
    }
}

fn scalar<T: FromStr>(value: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    value.parse().map_err(|e: T::Err| format!("'{value}': {e}"))
}

fn list<T: FromStr>(value: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(scalar).collect()
}

fn parse_nitsche(value: &str) -> Result<NitscheMode, String> {
    match value.split_once(':') {
        None if value == "computed" => Ok(NitscheMode::ComputedPenalty),
        Some(("fixed", v)) => Ok(NitscheMode::FixedPenalty(scalar(v)?)),
        Some(("penalty", v)) => Ok(NitscheMode::PenaltyOnly(scalar(v)?)),
        _ => Err(format!("expected computed, fixed:VALUE or penalty:VALUE, got '{value}'")),
    }
}
