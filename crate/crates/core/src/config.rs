//! Run configuration file (TOML). Every default lives here.
//!
//! ```toml
//! [problem]
//! a = [1.0, 0.5, 0.25, 1.0, 0.5, 0.25, 0.1]
//! u0 = 1.0471975511965976   # π/3
//! du0 = 0.0
//! t0 = 0.0
//! t_end = 10.0
//!
//! [network]
//! widths = [1, 128, 128, 128, 1]
//! activation = "asu"        # tanh | mish | sine | gcu | asu
//!
//! [training]
//! epochs_max = 50000
//! loss_threshold = 1e-3     # 0.0 effectively disables early stopping
//! lr = 1e-3
//! beta1 = 0.9
//! beta2 = 0.999
//! eps = 1e-8
//! seed = 1
//! n_train = 200
//! n_valid = 100
//! sampling = "equispaced"   # equispaced | uniform_random
//! transform = "second_order" # first_order | second_order
//! record_every = 10
//! ic_penalty_lambda = 0.0
//!
//! [reference]
//! method = "dopri45"        # dopri45 | rk4 | ab4
//! rtol = 1e-10
//! atol = 1e-12
//! h = 1e-3
//!
//! [output]
//! directory = "runs"
//! n_grid = 1001
//! ```
//!
//! Unknown keys are rejected.

use std::f64::consts::FRAC_PI_3;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::exec::Execution;
use crate::network::{validate_widths, DEFAULT_WIDTHS};
use crate::problem::{OscillatorProblem, SamplingMode, TrialTransformKind, DEFAULT_COEFFICIENTS};
use crate::training::{AdamHyper, TrainConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSection,
    pub network: NetworkSection,
    pub training: TrainingSection,
    pub reference: ReferenceSection,
    pub output: OutputSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSection {
    pub a: Vec<f64>,
    pub u0: f64,
    pub du0: f64,
    pub t0: f64,
    pub t_end: f64,
}

impl Default for ProblemSection {
    fn default() -> Self {
        Self {
            a: DEFAULT_COEFFICIENTS.to_vec(),
            u0: FRAC_PI_3,
            du0: 0.0,
            t0: 0.0,
            t_end: 10.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub widths: Vec<usize>,
    pub activation: ActivationKind,
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self {
            widths: DEFAULT_WIDTHS.to_vec(),
            activation: ActivationKind::Asu,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub epochs_max: usize,
    pub loss_threshold: f64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    pub n_train: usize,
    pub n_valid: usize,
    pub sampling: SamplingMode,
    pub transform: TrialTransformKind,
    pub record_every: usize,
    pub ic_penalty_lambda: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let adam = AdamHyper::default();
        Self {
            epochs_max: 50_000,
            loss_threshold: 1e-3,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            seed: 1,
            n_train: 200,
            n_valid: 100,
            sampling: SamplingMode::Equispaced,
            transform: TrialTransformKind::SecondOrder,
            record_every: 10,
            ic_penalty_lambda: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceMethod {
    #[default]
    Dopri45,
    Rk4,
    Ab4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceSection {
    pub method: ReferenceMethod,
    pub rtol: f64,
    pub atol: f64,
    pub h: f64,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        Self {
            method: ReferenceMethod::Dopri45,
            rtol: 1e-10,
            atol: 1e-12,
            h: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub n_grid: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("runs"),
            n_grid: 1001,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Collects every violation rather than stopping at the first.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let p = &self.problem;
        if p.a.len() != 7 {
            errs.push(format!("problem.a must have 7 entries, found {}", p.a.len()));
        } else if let Err(e) = self.problem() {
            errs.push(format!("problem: {e}"));
        }
        if let Err(e) = validate_widths(&self.network.widths) {
            errs.push(format!("network.widths: {e}"));
        }
        let t = &self.training;
        if t.epochs_max < 1 {
            errs.push("training.epochs_max must be at least 1".into());
        }
        if !(t.loss_threshold >= 0.0) {
            errs.push(format!("training.loss_threshold must be >= 0, got {}", t.loss_threshold));
        }
        if !(t.lr > 0.0) {
            errs.push(format!("training.lr must be positive, got {}", t.lr));
        }
        for (name, b) in [("beta1", t.beta1), ("beta2", t.beta2)] {
            if !(0.0..1.0).contains(&b) {
                errs.push(format!("training.{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(t.eps > 0.0) {
            errs.push(format!("training.eps must be positive, got {}", t.eps));
        }
        if t.n_train < 2 {
            errs.push(format!("training.n_train must be at least 2, got {}", t.n_train));
        }
        if t.n_valid < 2 {
            errs.push(format!("training.n_valid must be at least 2, got {}", t.n_valid));
        }
        if t.record_every < 1 {
            errs.push("training.record_every must be at least 1".into());
        }
        if !(t.ic_penalty_lambda >= 0.0) {
            errs.push(format!("training.ic_penalty_lambda must be >= 0, got {}", t.ic_penalty_lambda));
        }
        let r = &self.reference;
        if !(r.rtol > 0.0) || !(r.atol > 0.0) {
            errs.push("reference.rtol and reference.atol must be positive".into());
        }
        if !(r.h > 0.0) {
            errs.push(format!("reference.h must be positive, got {}", r.h));
        }
        if self.output.n_grid < 2 {
            errs.push(format!("output.n_grid must be at least 2, got {}", self.output.n_grid));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    pub fn problem(&self) -> Result<OscillatorProblem, crate::problem::ProblemError> {
        let p = &self.problem;
        let mut a = [0.0; 7];
        a.copy_from_slice(&p.a);
        OscillatorProblem::new(a, p.u0, p.du0, p.t0, p.t_end)
    }

    /// Training parameters for a given activation (the bench overrides it).
    pub fn train_config(&self, activation: ActivationKind) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            activation,
            widths: self.network.widths.clone(),
            seed: t.seed,
            epochs_max: t.epochs_max,
            loss_threshold: Some(t.loss_threshold),
            problem: self.problem().expect("validated config"),
            transform: t.transform,
            ic_penalty: t.ic_penalty_lambda,
            n_train: t.n_train,
            n_valid: t.n_valid,
            sampling: t.sampling,
            adam: AdamHyper { lr: t.lr, beta1: t.beta1, beta2: t.beta2, eps: t.eps },
            record_every: t.record_every,
            execution: Execution::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = RunConfig::from_toml("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.problem().unwrap(), OscillatorProblem::default_mems());
        let tc = cfg.train_config(ActivationKind::Asu);
        assert_eq!(tc.widths, DEFAULT_WIDTHS.to_vec());
        assert_eq!(tc.loss_threshold, Some(1e-3));
        assert_eq!(tc.adam, AdamHyper::default());
    }

    #[test]
    fn partial_sections_fill_in() {
        let cfg = RunConfig::from_toml("[network]\nactivation = \"gcu\"\n[training]\nseed = 4\n").unwrap();
        assert_eq!(cfg.network.activation, ActivationKind::Gcu);
        assert_eq!(cfg.network.widths, DEFAULT_WIDTHS.to_vec());
        assert_eq!(cfg.training.seed, 4);
        assert_eq!(cfg.training.n_train, 200);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = RunConfig::from_toml("[network]\nactivaton = \"asu\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse(ref m) if m.contains("activaton")), "{err}");
        assert!(RunConfig::from_toml("[plotting]\nx = 1\n").is_err());
        assert!(RunConfig::from_toml("[network]\nactivation = \"relu\"\n").is_err());
    }

    #[test]
    fn all_violations_reported() {
        let text = "[problem]\nt_end = -1.0\n[training]\nlr = 0.0\nn_train = 1\n[output]\nn_grid = 0\n";
        match RunConfig::from_toml(text).unwrap_err() {
            ConfigError::Invalid(v) => {
                assert_eq!(v.len(), 4, "{v:?}");
                assert!(v[0].contains("t_end"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.training.transform = TrialTransformKind::FirstOrder;
        cfg.reference.method = ReferenceMethod::Ab4;
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
