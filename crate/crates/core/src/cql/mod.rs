//! Conservative Q-learning on top of the soft actor-critic machinery.
//!
//! Each critic minimizes a Bellman error toward the soft TD target plus a
//! conservative term that pushes Q down on actions drawn away from the data
//! and up on the dataset actions. The actor maximizes the smaller of the two
//! critics with an entropy bonus whose temperature is tuned automatically.

mod losses;
mod train;

use serde::{Deserialize, Serialize};

pub use losses::{
    actor_loss, alpha2_objective, alpha2_update, critic_loss, soft_update, td_target, ActorLossOutput, ActorNoise,
    CriticDiagnostics, CriticLossOutput, CriticNoise,
};
pub use train::{
    train, train_state_checkpoint, train_step, write_metrics_csv, EpochMetrics, EvalSummary, StepReport, TrainOutcome,
};

use crate::adam::{Optimizer, ScalarAdam};
use crate::error::{Error, Result};
use crate::policy::{build, NetworkConfig, Networks};
use crate::rng::Rng;

/// How the conservative term of the critic loss is estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyMode {
    /// `α1·(E_{a~π}[Q] − E_D[Q])` with `N` policy samples per state, plus an
    /// explicit KL(π ‖ Unif) estimate as the regularizer.
    PaperLiteral,
    /// `α1·(log E[exp Q] − E_D[Q])`, the log-partition estimated by
    /// importance sampling over `N` policy and `M` uniform actions.
    LogSumExp,
}

impl PenaltyMode {
    pub fn name(self) -> &'static str {
        match self {
            PenaltyMode::PaperLiteral => "paper-literal",
            PenaltyMode::LogSumExp => "logsumexp",
        }
    }
}

impl std::str::FromStr for PenaltyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper-literal" => Ok(PenaltyMode::PaperLiteral),
            "logsumexp" => Ok(PenaltyMode::LogSumExp),
            other => Err(Error::InvalidArgument(format!("unknown penalty mode `{other}`"))),
        }
    }
}

/// Conservative weight: a constant, or a Lagrange multiplier that grows
/// while the penalty exceeds `target_gap`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Alpha1Mode {
    Fixed(f64),
    Lagrange { initial: f64, target_gap: f64, lr: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CqlHyperparams {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha1: Alpha1Mode,
    pub alpha2_lr: f64,
    pub initial_alpha2: f64,
    /// Defaults to `−act_dim` when `None`.
    pub target_entropy: Option<f64>,
    pub batch_size: usize,
    pub n_policy_actions: usize,
    /// Only used by [`PenaltyMode::LogSumExp`].
    pub n_random_actions: usize,
    pub penalty_mode: PenaltyMode,
    pub steps_per_epoch: usize,
    pub eval_episodes: usize,
}

impl Default for CqlHyperparams {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            alpha1: Alpha1Mode::Fixed(5.0),
            alpha2_lr: 3e-4,
            initial_alpha2: 1.0,
            target_entropy: None,
            batch_size: 256,
            n_policy_actions: 10,
            n_random_actions: 10,
            penalty_mode: PenaltyMode::LogSumExp,
            steps_per_epoch: 1000,
            eval_episodes: 10,
        }
    }
}

impl CqlHyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must be in (0, 1]");
        }
        if self.batch_size == 0
            || self.n_policy_actions == 0
            || self.n_random_actions == 0
            || self.steps_per_epoch == 0
            || self.eval_episodes == 0
        {
            return bad("batch size, sample counts, steps per epoch and eval episodes must be >= 1");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0 && self.alpha2_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.initial_alpha2 <= 0.0 {
            return bad("initial alpha2 must be positive");
        }
        match self.alpha1 {
            Alpha1Mode::Fixed(a) if a < 0.0 => bad("alpha1 must be non-negative"),
            Alpha1Mode::Lagrange { initial, lr, .. } if initial <= 0.0 || lr <= 0.0 => {
                bad("Lagrange alpha1 needs positive initial value and learning rate")
            }
            _ => Ok(()),
        }
    }

    pub fn target_entropy(&self, act_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(act_dim as f64))
    }
}

const ALPHA1_MAX: f64 = 1e6;

/// Everything a trainer owns: networks, optimizer moments, temperatures,
/// step counter and the sampling stream.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub nets: Networks,
    actor_opt: Optimizer,
    critic_opts: [Optimizer; 2],
    pub log_alpha2: f64,
    alpha2_opt: ScalarAdam,
    /// Only meaningful in Lagrange mode.
    pub log_alpha1: f64,
    alpha1_opt: ScalarAdam,
    pub step: u64,
    pub rng: Rng,
}

impl TrainState {
    pub fn new(cfg: &NetworkConfig, obs_dim: usize, act_dim: usize, hp: &CqlHyperparams, seed: u64) -> Result<Self> {
        hp.validate()?;
        let root = Rng::new(seed);
        let nets = build(cfg, obs_dim, act_dim, &root.split("init"));
        Ok(Self::from_networks(nets, hp, root.split("train")))
    }

    pub fn from_networks(nets: Networks, hp: &CqlHyperparams, rng: Rng) -> Self {
        let actor_opt = Optimizer::new(nets.actor.params(), hp.actor_lr);
        let critic_opts = [
            Optimizer::new(nets.critics[0].params(), hp.critic_lr),
            Optimizer::new(nets.critics[1].params(), hp.critic_lr),
        ];
        let (log_alpha1, alpha1_lr) = match hp.alpha1 {
            Alpha1Mode::Fixed(a) => (a.max(f64::MIN_POSITIVE).ln(), 1.0),
            Alpha1Mode::Lagrange { initial, lr, .. } => (initial.ln(), lr),
        };
        Self {
            nets,
            actor_opt,
            critic_opts,
            log_alpha2: hp.initial_alpha2.ln(),
            alpha2_opt: ScalarAdam::new(hp.alpha2_lr),
            log_alpha1,
            alpha1_opt: ScalarAdam::new(alpha1_lr),
            step: 0,
            rng,
        }
    }

    pub fn alpha2(&self) -> f64 {
        self.log_alpha2.exp()
    }

    /// The conservative weight in effect for `hp`.
    pub fn alpha1(&self, hp: &CqlHyperparams) -> f64 {
        match hp.alpha1 {
            Alpha1Mode::Fixed(a) => a,
            Alpha1Mode::Lagrange { .. } => self.log_alpha1.exp().clamp(0.0, ALPHA1_MAX),
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.nets.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.nets.act_dim()
    }
}
