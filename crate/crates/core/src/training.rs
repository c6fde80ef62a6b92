//! Full-batch Adam training with loss history, validation tracking and an
//! optional early stop on a loss threshold.

use std::time::Instant;

use ndarray::Zip;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activations::ActivationKind;
use crate::autodiff::{loss_and_grad_with, network_jets, AutodiffError, GradientSet};
use crate::exec::Execution;
use crate::integrators::SolutionTrace;
use crate::network::{init_params, MlpParams, NetworkError, DEFAULT_WIDTHS};
use crate::problem::{
    collocation_points, equispaced, Objective, OscillatorProblem, ProblemError, SamplingMode,
    TrialMap, TrialTransformKind,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment accumulators, shaped like the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: GradientSet,
    pub v: GradientSet,
    pub step_count: u64,
    pub hyper: AdamHyper,
}

impl AdamState {
    pub fn new(params: &MlpParams, hyper: AdamHyper) -> Self {
        Self {
            m: GradientSet::zeros_like(params),
            v: GradientSet::zeros_like(params),
            step_count: 0,
            hyper,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(params: &mut MlpParams, grads: &GradientSet, state: &mut AdamState) {
    state.step_count += 1;
    let AdamHyper { lr, beta1, beta2, eps } = state.hyper;
    let k = state.step_count as i32;
    let c1 = 1.0 - beta1.powi(k);
    let c2 = 1.0 - beta2.powi(k);
    let update = |theta: &mut f64, g: &f64, m: &mut f64, v: &mut f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *theta -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    for (((p, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m.layers)
        .zip(&mut state.v.layers)
    {
        Zip::from(&mut p.weights)
            .and(&g.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .for_each(update);
        Zip::from(&mut p.biases)
            .and(&g.biases)
            .and(&mut m.biases)
            .and(&mut v.biases)
            .for_each(update);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub activation: ActivationKind,
    pub widths: Vec<usize>,
    pub seed: u64,
    pub epochs_max: usize,
    pub loss_threshold: Option<f64>,
    pub problem: OscillatorProblem,
    pub transform: TrialTransformKind,
    pub ic_penalty: f64,
    pub n_train: usize,
    pub n_valid: usize,
    pub sampling: SamplingMode,
    pub adam: AdamHyper,
    pub record_every: usize,
    pub execution: Execution,
}

impl TrainConfig {
    pub fn new(activation: ActivationKind, problem: OscillatorProblem) -> Self {
        Self {
            activation,
            widths: DEFAULT_WIDTHS.to_vec(),
            seed: 1,
            epochs_max: 10_000,
            loss_threshold: None,
            problem,
            transform: TrialTransformKind::SecondOrder,
            ic_penalty: 0.0,
            n_train: 200,
            n_valid: 100,
            sampling: SamplingMode::Equispaced,
            adam: AdamHyper::default(),
            record_every: 1,
            execution: Execution::default(),
        }
    }

    pub fn objective(&self) -> Objective {
        Objective {
            problem: self.problem.clone(),
            transform: self.transform,
            ic_penalty: self.ic_penalty,
        }
    }

    /// Seed for the validation draw, disjoint from the training seed stream.
    pub fn validation_seed(&self) -> u64 {
        self.seed ^ 0x5eed_0f_7a11d
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossPoint {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainRecord {
    pub train_loss_history: Vec<LossPoint>,
    pub valid_loss_history: Vec<LossPoint>,
    pub epochs_run: usize,
    pub wall_time_seconds: f64,
    pub final_params: MlpParams,
    pub converged: bool,
}

impl TrainRecord {
    /// Epoch at which the loss first met the threshold, if it did.
    pub fn epochs_to_threshold(&self) -> Option<usize> {
        self.converged.then_some(self.epochs_run)
    }

    pub fn final_train_loss(&self) -> f64 {
        self.train_loss_history.last().map_or(f64::NAN, |p| p.loss)
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("training diverged at epoch {epoch} with activation {activation}: {source}")]
    Diverged {
        epoch: usize,
        activation: ActivationKind,
        #[source]
        source: AutodiffError,
    },
}

/// Run the training loop described by `config`.
///
/// Epoch `e` evaluates the loss at the current parameters and then applies
/// one Adam step, so the epoch-0 loss is the loss of the initial network and
/// `epochs_run` counts applied updates. When the threshold is met the loop
/// stops before updating, leaving `epochs_run` equal to the number of
/// updates it took to get there.
pub fn train(config: &TrainConfig) -> Result<TrainRecord, TrainError> {
    if config.epochs_max == 0 {
        return Err(TrainError::Config("epochs_max must be at least 1".into()));
    }
    if config.record_every == 0 {
        return Err(TrainError::Config("record_every must be at least 1".into()));
    }
    let problem = &config.problem;
    let (t0, t_end) = (problem.t0(), problem.t_end());
    let train_pts = collocation_points(config.n_train, t0, t_end, config.sampling, config.seed)?;
    let valid_pts = collocation_points(
        config.n_valid,
        t0,
        t_end,
        SamplingMode::UniformRandom,
        config.validation_seed(),
    )?;
    let objective = config.objective();
    let mut params = init_params(&config.widths, config.activation, config.seed)?;
    let mut state = AdamState::new(&params, config.adam);
    let diverged = |epoch, source| TrainError::Diverged {
        epoch,
        activation: config.activation,
        source,
    };

    let mut train_hist = Vec::new();
    let mut valid_hist = Vec::new();
    let mut converged = false;
    let mut epochs_run = 0;
    let start = Instant::now();

    for epoch in 0..config.epochs_max {
        let (loss, grads) = loss_and_grad_with(&params, &objective, &train_pts, config.execution)
            .map_err(|e| diverged(epoch, e))?;
        converged = config.loss_threshold.is_some_and(|th| loss <= th);
        let last = epoch + 1 == config.epochs_max;
        if epoch % config.record_every == 0 || converged || last {
            let valid = crate::autodiff::loss_only(&params, &objective, &valid_pts, config.execution)
                .map_err(|e| diverged(epoch, e))?;
            train_hist.push(LossPoint { epoch, loss });
            valid_hist.push(LossPoint { epoch, loss: valid });
        }
        if converged {
            break;
        }
        adam_step(&mut params, &grads, &mut state);
        epochs_run += 1;
    }

    Ok(TrainRecord {
        train_loss_history: train_hist,
        valid_loss_history: valid_hist,
        epochs_run,
        wall_time_seconds: start.elapsed().as_secs_f64(),
        final_params: params,
        converged,
    })
}

/// Trial solution sampled on `n_grid` equispaced times over the domain.
pub fn evaluate_on_grid(
    params: &MlpParams,
    problem: &OscillatorProblem,
    transform: TrialTransformKind,
    n_grid: usize,
) -> Result<SolutionTrace, ProblemError> {
    if n_grid < 2 {
        return Err(ProblemError::TooFewPoints(n_grid));
    }
    let times = equispaced(n_grid, problem.t0(), problem.t_end());
    let jets = network_jets(params, &times, Execution::default());
    let trial: Vec<_> = times
        .iter()
        .zip(jets)
        .map(|(&t, net)| TrialMap::new(transform, problem, t).apply(net))
        .collect();
    Ok(SolutionTrace {
        values: trial.iter().map(|u| u.v).collect(),
        velocities: Some(trial.iter().map(|u| u.d1).collect()),
        times,
    })
}
