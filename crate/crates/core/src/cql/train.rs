use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::nn::checkpoint::Checkpoint;
use crate::policy::{NetworkConfig, Networks};

use super::losses::{actor_loss, critic_loss, ActorNoise, CriticNoise};
use super::{Alpha1Mode, CqlHyperparams, TrainState};

/// What one gradient step reports.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepReport {
    pub step: u64,
    pub critic_losses: [f64; 2],
    pub actor_loss: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    /// `E_{a~π}[Q₁] − E_D[Q₁]` on the batch.
    pub conservative_gap: f64,
    pub mean_q_data: f64,
    pub mean_q_pi: f64,
    pub mean_q_random: f64,
    pub mean_log_prob: f64,
}

impl StepReport {
    pub fn is_finite(&self) -> bool {
        self.critic_losses.iter().all(|v| v.is_finite())
            && self.actor_loss.is_finite()
            && self.alpha2.is_finite()
            && self.conservative_gap.is_finite()
    }
}

/// One batch: critics, then α1 (Lagrange mode only), actor, α2, targets.
pub fn train_step(state: &mut TrainState, dataset: &Dataset, hp: &CqlHyperparams) -> Result<StepReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = state.act_dim();
    let batch = dataset.sample_batch(&mut state.rng, hp.batch_size)?;
    let noise = CriticNoise::draw(&mut state.rng, batch.len(), d, hp);
    let critic = critic_loss(&batch, state, hp, &noise)?;
    for ((net, opt), grads) in state
        .nets
        .critics
        .iter_mut()
        .zip(&mut state.critic_opts)
        .zip(&critic.grads)
    {
        opt.step(net.params_mut(), grads)?;
    }

    if let Alpha1Mode::Lagrange { target_gap, .. } = hp.alpha1 {
        // Dual ascent on α1 ≥ 0: grows while the penalty exceeds the target.
        let penalty = 0.5 * (critic.diagnostics.penalty[0] + critic.diagnostics.penalty[1]);
        let grad = -state.alpha1(hp) * (penalty - target_gap);
        let mut v = state.log_alpha1;
        state.alpha1_opt.step(&mut v, grad);
        state.log_alpha1 = v;
    }

    let anoise = ActorNoise::draw(&mut state.rng, batch.len(), d);
    let actor = actor_loss(&batch, state, hp, &anoise)?;
    let actor_params = state.nets.actor.params_mut();
    state.actor_opt.step(actor_params, &actor.grads)?;

    state.step_alpha2(actor.mean_log_prob, hp);

    let tau = hp.tau;
    let nets = &mut state.nets;
    for (live, target) in nets.critics.iter().zip(nets.targets.iter_mut()) {
        target.soft_update_from(live, tau)?;
    }
    state.step += 1;

    let diag = critic.diagnostics;
    Ok(StepReport {
        step: state.step,
        critic_losses: critic.losses,
        actor_loss: actor.loss,
        alpha1: state.alpha1(hp),
        alpha2: state.alpha2(),
        conservative_gap: diag.gap[0],
        mean_q_data: diag.mean_q_data,
        mean_q_pi: diag.mean_q_pi,
        mean_q_random: diag.mean_q_random,
        mean_log_prob: actor.mean_log_prob,
    })
}

/// One row of the metrics CSV. Loss and Q columns are means over the
/// epoch's steps; `alpha2` is the value at the end of the epoch;
/// `wall_seconds` covers the gradient steps only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub critic1_loss: f64,
    pub critic2_loss: f64,
    pub actor_loss: f64,
    pub alpha2: f64,
    pub conservative_gap: f64,
    pub mean_q_data: f64,
    pub mean_q_pi: f64,
    pub eval_return_mean: f64,
    pub eval_return_std: f64,
    pub normalized_score: f64,
    pub wall_seconds: f64,
}

/// What the per-epoch evaluation hook hands back.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalSummary {
    pub return_mean: f64,
    pub return_std: f64,
    pub normalized_score: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub state: TrainState,
    pub metrics: Vec<EpochMetrics>,
}

/// Runs `epochs × steps_per_epoch` steps from a fresh state seeded by
/// `seed`, calling `eval_hook(epoch, networks)` after every epoch. With a
/// `checkpoint` path the networks are saved there after every epoch.
pub fn train<F>(
    cfg: &NetworkConfig,
    dataset: &Dataset,
    hp: &CqlHyperparams,
    epochs: usize,
    seed: u64,
    mut eval_hook: F,
    checkpoint: Option<&Path>,
) -> Result<TrainOutcome>
where
    F: FnMut(usize, &Networks) -> Result<EvalSummary>,
{
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut state = TrainState::new(cfg, dataset.obs_dim(), dataset.act_dim(), hp, seed)?;
    let mut metrics = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let start = Instant::now();
        let mut sums = [0.0; 6];
        for _ in 0..hp.steps_per_epoch {
            let r = train_step(&mut state, dataset, hp)?;
            let vals = [
                r.critic_losses[0],
                r.critic_losses[1],
                r.actor_loss,
                r.conservative_gap,
                r.mean_q_data,
                r.mean_q_pi,
            ];
            for (s, v) in sums.iter_mut().zip(vals) {
                *s += v;
            }
        }
        let wall_seconds = start.elapsed().as_secs_f64();
        let n = hp.steps_per_epoch as f64;
        let eval = eval_hook(epoch, &state.nets)?;
        metrics.push(EpochMetrics {
            epoch,
            critic1_loss: sums[0] / n,
            critic2_loss: sums[1] / n,
            actor_loss: sums[2] / n,
            alpha2: state.alpha2(),
            conservative_gap: sums[3] / n,
            mean_q_data: sums[4] / n,
            mean_q_pi: sums[5] / n,
            eval_return_mean: eval.return_mean,
            eval_return_std: eval.return_std,
            normalized_score: eval.normalized_score,
            wall_seconds,
        });
        if let Some(path) = checkpoint {
            train_state_checkpoint(&state, hp).save(path)?;
        }
    }
    Ok(TrainOutcome { state, metrics })
}

/// All five networks plus the temperatures and step counter as scalars.
pub fn train_state_checkpoint(state: &TrainState, hp: &CqlHyperparams) -> Checkpoint {
    let mut scalars = BTreeMap::new();
    scalars.insert("log_alpha2".to_string(), state.log_alpha2);
    scalars.insert("alpha1".to_string(), state.alpha1(hp));
    scalars.insert("step".to_string(), state.step as f64);
    state.nets.to_checkpoint(scalars)
}

/// Writes `rows` as CSV with a header line.
pub fn write_metrics_csv<W: Write>(out: W, rows: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if rows.is_empty() {
        w.write_record([
            "epoch",
            "critic1_loss",
            "critic2_loss",
            "actor_loss",
            "alpha2",
            "conservative_gap",
            "mean_q_data",
            "mean_q_pi",
            "eval_return_mean",
            "eval_return_std",
            "normalized_score",
            "wall_seconds",
        ])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
