use std::f64::consts::LN_2;

use crate::dataset::Batch;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::GradTape;
use crate::policy::{ActorNet, ActorTape, CriticNet, TanhGaussianSample};
use crate::rng::Rng;

use super::{CqlHyperparams, PenaltyMode, TrainState};

/// Sampling noise consumed by one critic-loss evaluation. Holding it fixed
/// makes the loss a deterministic function of the critic parameters.
#[derive(Clone, Debug)]
pub struct CriticNoise {
    /// `(batch, act_dim)` noise for `a' ~ π(·|s')`.
    pub next_eps: Matrix,
    /// `(batch·N, act_dim)` noise for the policy actions at `s`; rows
    /// `b·N .. (b+1)·N` belong to state `b`.
    pub policy_eps: Matrix,
    /// `(batch·M, act_dim)` uniform actions on `[−1, 1)`; empty in
    /// paper-literal mode.
    pub random_actions: Matrix,
}

impl CriticNoise {
    pub fn draw(rng: &mut Rng, batch: usize, act_dim: usize, hp: &CqlHyperparams) -> Self {
        let next_eps = rng.gaussian(batch, act_dim);
        let policy_eps = rng.gaussian(batch * hp.n_policy_actions, act_dim);
        let random_actions = match hp.penalty_mode {
            PenaltyMode::LogSumExp => rng.uniform_matrix(batch * hp.n_random_actions, act_dim, -1.0, 1.0),
            PenaltyMode::PaperLiteral => Matrix::zeros(0, act_dim),
        };
        Self {
            next_eps,
            policy_eps,
            random_actions,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ActorNoise {
    pub eps: Matrix,
}

impl ActorNoise {
    pub fn draw(rng: &mut Rng, batch: usize, act_dim: usize) -> Self {
        Self {
            eps: rng.gaussian(batch, act_dim),
        }
    }
}

/// Soft TD target
/// `r + γ·(1 − done)·(min_j Q'_j(s', a') − α2·log π(a'|s'))` with one
/// fresh `a'` per row. Treated as a constant by the losses.
pub fn td_target(
    batch: &Batch,
    actor: &ActorNet,
    targets: &[CriticNet; 2],
    alpha2: f64,
    gamma: f64,
    next_eps: &Matrix,
) -> Result<Matrix> {
    let (mean, log_std) = actor.forward(&batch.next_obs, None)?;
    let next = TanhGaussianSample::new(mean, log_std, next_eps.clone())?;
    let input = batch.next_obs.hstack(&next.action)?;
    let q1 = targets[0].q_of_input(&input, None)?;
    let q2 = targets[1].q_of_input(&input, None)?;
    Ok(Matrix::from_fn(batch.len(), 1, |r, _| {
        let soft = q1.get(r, 0).min(q2.get(r, 0)) - alpha2 * next.log_prob.get(r, 0);
        batch.rewards.get(r, 0) + gamma * (1.0 - batch.dones.get(r, 0)) * soft
    }))
}

#[derive(Clone, Debug, Default)]
pub struct CriticDiagnostics {
    /// `E_{a~π}[Q_i] − E_D[Q_i]` per critic.
    pub gap: [f64; 2],
    /// The conservative term before weighting by α1, per critic.
    pub penalty: [f64; 2],
    pub bellman: [f64; 2],
    /// Critic 1 means over dataset, policy and uniform actions (the last is
    /// NaN in paper-literal mode).
    pub mean_q_data: f64,
    pub mean_q_pi: f64,
    pub mean_q_random: f64,
    pub td_target_mean: f64,
    /// Estimate of KL(π ‖ Unif) from the policy samples.
    pub kl_to_uniform: f64,
}

#[derive(Clone, Debug)]
pub struct CriticLossOutput {
    pub losses: [f64; 2],
    pub grads: [Vec<Matrix>; 2],
    pub diagnostics: CriticDiagnostics,
}

/// Conservative critic loss for both live critics, with gradients.
///
/// Per critic: `α1·penalty + ½·E[(Q − y)²] (+ R)` where penalty is
/// `E_{a~π}[Q] − E_D[Q]` (paper-literal, R = KL(π ‖ Unif) estimate) or
/// `log E[exp Q] − E_D[Q]` estimated over policy and uniform proposals
/// (logsumexp). In Lagrange mode the penalty is offset by the target gap,
/// which shifts the loss but not its gradient.
pub fn critic_loss(
    batch: &Batch,
    state: &TrainState,
    hp: &CqlHyperparams,
    noise: &CriticNoise,
) -> Result<CriticLossOutput> {
    let b = batch.len();
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    let nets = &state.nets;
    let d = nets.act_dim();
    let n_pi = hp.n_policy_actions;
    let n_rand = match hp.penalty_mode {
        PenaltyMode::LogSumExp => hp.n_random_actions,
        PenaltyMode::PaperLiteral => 0,
    };
    if noise.next_eps.shape() != (b, d)
        || noise.policy_eps.shape() != (b * n_pi, d)
        || noise.random_actions.shape() != (b * n_rand, d)
    {
        return Err(Error::shape("critic noise", (b, d), noise.policy_eps.shape()));
    }
    let alpha1 = state.alpha1(hp);
    let alpha2 = state.alpha2();
    let y = td_target(batch, &nets.actor, &nets.targets, alpha2, hp.gamma, &noise.next_eps)?;

    let (mean, log_std) = nets.actor.forward(&batch.obs, None)?;
    let pi = TanhGaussianSample::new(
        mean.repeat_rows(n_pi),
        log_std.repeat_rows(n_pi),
        noise.policy_eps.clone(),
    )?;
    let data_in = batch.obs.hstack(&batch.actions)?;
    let pi_in = batch.obs.repeat_rows(n_pi).hstack(&pi.action)?;
    let stacked = if n_rand > 0 {
        let rand_in = batch.obs.repeat_rows(n_rand).hstack(&noise.random_actions)?;
        Matrix::vstack(&[&data_in, &pi_in, &rand_in])?
    } else {
        Matrix::vstack(&[&data_in, &pi_in])?
    };
    let pi_off = b;
    let rand_off = b + b * n_pi;
    let kl_to_uniform = pi.log_prob.mean() + d as f64 * LN_2;
    let target_gap = match hp.alpha1 {
        super::Alpha1Mode::Lagrange { target_gap, .. } => target_gap,
        super::Alpha1Mode::Fixed(_) => 0.0,
    };

    let mut losses = [0.0; 2];
    let mut grads: [Vec<Matrix>; 2] = [Vec::new(), Vec::new()];
    let mut diag = CriticDiagnostics {
        td_target_mean: y.mean(),
        kl_to_uniform,
        mean_q_random: f64::NAN,
        ..Default::default()
    };

    for (i, critic) in nets.critics.iter().enumerate() {
        let mut tape = GradTape::new();
        let q = critic.q_of_input(&stacked, Some(&mut tape))?;
        let qv = q.as_slice();
        let mut up = Matrix::zeros(q.rows(), 1);
        let g = up.as_mut_slice();

        let mut bellman = 0.0;
        let mut mean_q_data = 0.0;
        for r in 0..b {
            let err = qv[r] - y.get(r, 0);
            bellman += 0.5 * err * err / b as f64;
            g[r] += err / b as f64;
            mean_q_data += qv[r] / b as f64;
        }
        let mean_q_pi = qv[pi_off..rand_off].iter().sum::<f64>() / (b * n_pi) as f64;

        // Conservative term: pushes down on sampled actions, up on data.
        for gr in g.iter_mut().take(b) {
            *gr -= alpha1 / b as f64;
        }
        let (penalty, regularizer) = match hp.penalty_mode {
            PenaltyMode::PaperLiteral => {
                let w = alpha1 / (b * n_pi) as f64;
                g[pi_off..rand_off].iter_mut().for_each(|v| *v += w);
                (mean_q_pi - mean_q_data, kl_to_uniform)
            }
            PenaltyMode::LogSumExp => {
                let log_unif = -(d as f64) * LN_2;
                let log_count = ((n_pi + n_rand) as f64).ln();
                let mut lse_mean = 0.0;
                let mut cand = vec![0.0; n_pi + n_rand];
                for s in 0..b {
                    for j in 0..n_pi {
                        cand[j] = qv[pi_off + s * n_pi + j] - pi.log_prob.get(s * n_pi + j, 0);
                    }
                    for j in 0..n_rand {
                        cand[n_pi + j] = qv[rand_off + s * n_rand + j] - log_unif;
                    }
                    let max = cand.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = cand.iter().map(|c| (c - max).exp()).sum();
                    lse_mean += (max + sum.ln() - log_count) / b as f64;
                    let w = alpha1 / b as f64 / sum;
                    for j in 0..n_pi {
                        g[pi_off + s * n_pi + j] += w * (cand[j] - max).exp();
                    }
                    for j in 0..n_rand {
                        g[rand_off + s * n_rand + j] += w * (cand[n_pi + j] - max).exp();
                    }
                }
                if i == 0 {
                    diag.mean_q_random = qv[rand_off..].iter().sum::<f64>() / (b * n_rand) as f64;
                }
                (lse_mean - mean_q_data, 0.0)
            }
        };

        losses[i] = alpha1 * (penalty - target_gap) + bellman + regularizer;
        diag.gap[i] = mean_q_pi - mean_q_data;
        diag.penalty[i] = penalty;
        diag.bellman[i] = bellman;
        if i == 0 {
            diag.mean_q_data = mean_q_data;
            diag.mean_q_pi = mean_q_pi;
        }
        grads[i] = critic.backward(&mut tape, &up, true)?.params;
    }

    Ok(CriticLossOutput {
        losses,
        grads,
        diagnostics: diag,
    })
}

#[derive(Clone, Debug)]
pub struct ActorLossOutput {
    pub loss: f64,
    pub grads: Vec<Matrix>,
    pub mean_log_prob: f64,
    pub mean_min_q: f64,
}

/// `E[−min_j Q_j(s, a) + α2·log π(a|s)]` with `a` reparameterized through
/// `noise`. Gradients reach the actor only; the critics are read-only here.
pub fn actor_loss(
    batch: &Batch,
    state: &TrainState,
    hp: &CqlHyperparams,
    noise: &ActorNoise,
) -> Result<ActorLossOutput> {
    let _ = hp;
    let b = batch.len();
    if b == 0 {
        return Err(Error::EmptyBatch);
    }
    let nets = &state.nets;
    let alpha2 = state.alpha2();
    let mut actor_tape = ActorTape::default();
    let (mean, log_std) = nets.actor.forward(&batch.obs, Some(&mut actor_tape))?;
    let sample = TanhGaussianSample::new(mean, log_std, noise.eps.clone())?;
    let input = batch.obs.hstack(&sample.action)?;

    let mut tapes = [GradTape::new(), GradTape::new()];
    let q1 = nets.critics[0].q_of_input(&input, Some(&mut tapes[0]))?;
    let q2 = nets.critics[1].q_of_input(&input, Some(&mut tapes[1]))?;

    let mut loss = 0.0;
    let mut mean_min_q = 0.0;
    let mut ups = [Matrix::zeros(b, 1), Matrix::zeros(b, 1)];
    for r in 0..b {
        let (a, c) = (q1.get(r, 0), q2.get(r, 0));
        let (qmin, k) = if a <= c { (a, 0) } else { (c, 1) };
        loss += (-qmin + alpha2 * sample.log_prob.get(r, 0)) / b as f64;
        mean_min_q += qmin / b as f64;
        ups[k].set(r, 0, -1.0 / b as f64);
    }

    let mut g_action = Matrix::zeros(b, nets.act_dim());
    for ((critic, tape), up) in nets.critics.iter().zip(tapes.iter_mut()).zip(&ups) {
        let g = critic.backward(tape, up, false)?;
        g_action.add_assign(&critic.action_columns(&g.input))?;
    }
    let g_log_prob = Matrix::filled(b, 1, alpha2 / b as f64);
    let (g_mean, g_log_std) = sample.backward(Some(&g_action), Some(&g_log_prob));
    let grads = nets.actor.backward(actor_tape, &g_mean, &g_log_std)?;

    Ok(ActorLossOutput {
        loss,
        grads,
        mean_log_prob: sample.log_prob.mean(),
        mean_min_q,
    })
}

/// Temperature objective `−log α2·(E[log π] + target_entropy)` and its
/// derivative in `log α2`, with `log π` treated as a constant.
pub fn alpha2_objective(log_alpha2: f64, mean_log_prob: f64, target_entropy: f64) -> (f64, f64) {
    let slack = mean_log_prob + target_entropy;
    (-log_alpha2 * slack, -slack)
}

/// One Adam step on `log α2` from fresh policy samples at `batch.obs`.
/// Returns the new `log α2`.
pub fn alpha2_update(batch: &Batch, state: &mut TrainState, hp: &CqlHyperparams) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let (_, log_prob) = state.nets.actor.sample_action(&batch.obs, &mut state.rng)?;
    state.step_alpha2(log_prob.mean(), hp);
    Ok(state.log_alpha2)
}

impl TrainState {
    pub(super) fn step_alpha2(&mut self, mean_log_prob: f64, hp: &CqlHyperparams) {
        let (_, grad) = alpha2_objective(self.log_alpha2, mean_log_prob, hp.target_entropy(self.act_dim()));
        let mut v = self.log_alpha2;
        self.alpha2_opt.step(&mut v, grad);
        self.log_alpha2 = v;
    }
}

/// `target ← τ·live + (1 − τ)·target`.
pub fn soft_update(live: &CriticNet, target: &mut CriticNet, tau: f64) -> Result<()> {
    target.soft_update_from(live, tau)
}
