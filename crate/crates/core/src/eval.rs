//! Policy evaluation, score normalization, parameter tables and epoch timing.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cql::{train_step, CqlHyperparams, EvalSummary, TrainState};
use crate::dataset::{reference_scores, Dataset};
use crate::env::EnvSpec;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::policy::{ActorNet, NetworkConfig, Networks};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub return_mean: f64,
    pub return_std: f64,
    pub normalized_score: f64,
    pub config: Option<String>,
    pub seed: u64,
}

impl EvalReport {
    pub fn with_config(mut self, name: &str) -> Self {
        self.config = Some(name.to_string());
        self
    }
}

/// `100·(learned − random)/(expert − random)`, unclipped.
pub fn normalized_score(learned: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    let span = expert_ref - random_ref;
    if span == 0.0 || !span.is_finite() {
        return Err(Error::DegenerateReference(random_ref));
    }
    Ok(100.0 * (learned - random_ref) / span)
}

/// Undiscounted returns of `tanh(mean)` rollouts, one per episode, with
/// episode `e` reset from `Rng::new(seed).split("episode-{e}")`.
/// All episodes run in lockstep so the actor sees one batch per time step.
pub fn episode_returns(actor: &ActorNet, spec: &EnvSpec, episodes: usize, seed: u64) -> Result<Vec<f64>> {
    if episodes == 0 {
        return Err(Error::InvalidArgument("episodes must be >= 1".into()));
    }
    if actor.obs_dim() != spec.obs_dim || actor.act_dim() != spec.act_dim {
        return Err(Error::DimMismatch(format!(
            "actor is {}→{}, {} is {}→{}",
            actor.obs_dim(),
            actor.act_dim(),
            spec.name(),
            spec.obs_dim,
            spec.act_dim
        )));
    }
    let root = Rng::new(seed);
    let mut states: Vec<_> = (0..episodes)
        .map(|e| spec.reset(&mut root.split(&format!("episode-{e}"))))
        .collect();
    let mut returns = vec![0.0; episodes];
    let mut live = vec![true; episodes];
    while live.iter().any(|&l| l) {
        let flat: Vec<f64> = states.iter().flat_map(|s| spec.observe(s)).collect();
        let obs = Matrix::from_vec(episodes, spec.obs_dim, flat)?;
        let actions = actor.deterministic_action(&obs)?;
        for (e, state) in states.iter_mut().enumerate() {
            if !live[e] {
                continue;
            }
            let step = spec.step(state, actions.row(e));
            returns[e] += step.reward;
            live[e] = !step.done;
            *state = step.next;
        }
    }
    Ok(returns)
}

/// Mean and population std of the deterministic-policy returns, scored
/// against the environment's reference returns.
pub fn evaluate(actor: &ActorNet, spec: &EnvSpec, episodes: usize, seed: u64) -> Result<EvalReport> {
    let (random_ref, expert_ref) = reference_scores(spec);
    evaluate_against(actor, spec, episodes, seed, random_ref, expert_ref)
}

/// [`evaluate`] with explicit reference returns.
pub fn evaluate_against(
    actor: &ActorNet,
    spec: &EnvSpec,
    episodes: usize,
    seed: u64,
    random_ref: f64,
    expert_ref: f64,
) -> Result<EvalReport> {
    let returns = episode_returns(actor, spec, episodes, seed)?;
    let (return_mean, return_std) = mean_std(&returns);
    Ok(EvalReport {
        episodes,
        return_mean,
        return_std,
        normalized_score: normalized_score(return_mean, random_ref, expert_ref)?,
        config: None,
        seed,
    })
}

/// The per-epoch hook `train` expects: deterministic rollouts of the
/// current actor in the dataset's environment, scored against the
/// dataset's reference returns. Every epoch uses the same `seed`.
pub fn dataset_eval_hook(
    dataset: &Dataset,
    episodes: usize,
    seed: u64,
) -> impl FnMut(usize, &Networks) -> Result<EvalSummary> + '_ {
    move |_, nets| {
        let r = evaluate_against(
            &nets.actor,
            &dataset.env,
            episodes,
            seed,
            dataset.random_score,
            dataset.expert_score,
        )?;
        Ok(EvalSummary {
            return_mean: r.return_mean,
            return_std: r.return_std,
            normalized_score: r.normalized_score,
        })
    }
}

pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamRow {
    pub config: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub actor_params: usize,
    pub critic_params: usize,
}

/// Every configuration at every `(obs_dim, act_dim)` pair, dims-major.
pub fn param_table(dims: &[(usize, usize)]) -> Vec<ParamRow> {
    dims.iter()
        .flat_map(|&(obs_dim, act_dim)| {
            NetworkConfig::all().iter().map(move |cfg| {
                let (actor_params, critic_params) = cfg.count_params(obs_dim, act_dim);
                ParamRow {
                    config: cfg.name.to_string(),
                    obs_dim,
                    act_dim,
                    actor_params,
                    critic_params,
                }
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: String,
    pub actor_params: usize,
    pub critic_params: usize,
    pub steps_per_epoch: usize,
    pub epochs_timed: usize,
    pub epoch_seconds: Vec<f64>,
    pub mean_epoch_seconds: f64,
    pub steps_per_second: f64,
}

pub const MIN_TIMED_EPOCHS: usize = 3;

/// Times `timed_epochs` (at least three) epochs of gradient steps after one
/// untimed warmup epoch. Dataset loading and evaluation are not included.
pub fn bench_epoch(
    cfg: &NetworkConfig,
    dataset: &Dataset,
    hp: &CqlHyperparams,
    timed_epochs: usize,
) -> Result<BenchReport> {
    let timed_epochs = timed_epochs.max(MIN_TIMED_EPOCHS);
    let mut state = TrainState::new(cfg, dataset.obs_dim(), dataset.act_dim(), hp, 0)?;
    for _ in 0..hp.steps_per_epoch {
        train_step(&mut state, dataset, hp)?;
    }
    let mut epoch_seconds = Vec::with_capacity(timed_epochs);
    for _ in 0..timed_epochs {
        let start = Instant::now();
        for _ in 0..hp.steps_per_epoch {
            train_step(&mut state, dataset, hp)?;
        }
        epoch_seconds.push(start.elapsed().as_secs_f64());
    }
    let mean_epoch_seconds = epoch_seconds.iter().sum::<f64>() / timed_epochs as f64;
    let (actor_params, critic_params) = cfg.count_params(dataset.obs_dim(), dataset.act_dim());
    Ok(BenchReport {
        config: cfg.name.to_string(),
        actor_params,
        critic_params,
        steps_per_epoch: hp.steps_per_epoch,
        epochs_timed: timed_epochs,
        epoch_seconds,
        mean_epoch_seconds,
        steps_per_second: hp.steps_per_epoch as f64 / mean_epoch_seconds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvSpec;

    fn zero_actor(spec: &EnvSpec) -> ActorNet {
        let cfg = NetworkConfig::by_name("mlp-a1c1").unwrap();
        let mut actor = ActorNet::build(&cfg, spec.obs_dim, spec.act_dim, &mut Rng::new(1));
        for p in actor.params_mut() {
            p.as_mut_slice().fill(0.0);
        }
        actor
    }

    #[test]
    fn normalization_formula() {
        assert_eq!(normalized_score(105.0, 5.0, 105.0).unwrap(), 100.0);
        assert_eq!(normalized_score(5.0, 5.0, 105.0).unwrap(), 0.0);
        assert_eq!(normalized_score(55.0, 5.0, 105.0).unwrap(), 50.0);
        assert!(normalized_score(150.0, 5.0, 105.0).unwrap() > 100.0);
        assert!(matches!(
            normalized_score(1.0, 3.0, 3.0),
            Err(Error::DegenerateReference(_))
        ));
    }

    #[test]
    fn zero_policy_matches_hand_recursion() {
        let spec = EnvSpec::pointmass2d();
        let actor = zero_actor(&spec);
        let report = evaluate(&actor, &spec, 1, 11).unwrap();
        assert_eq!(report.return_std, 0.0);

        // Zero thrust, integrated by hand.
        let s0 = spec.reset(&mut Rng::new(11).split("episode-0"));
        let (mut p, mut v) = ([s0.physical[0], s0.physical[1]], [s0.physical[2], s0.physical[3]]);
        let mut ret = 0.0;
        for _ in 0..spec.horizon {
            for i in 0..2 {
                v[i] = v[i].clamp(-1.0, 1.0);
                p[i] = (p[i] + v[i] * spec.dt).clamp(-1.0, 1.0);
            }
            ret -= ((p[0] - 0.7f64).powi(2) + (p[1] - 0.7f64).powi(2)).sqrt();
        }
        assert!(
            (report.return_mean - ret).abs() < 1e-12,
            "{} vs {ret}",
            report.return_mean
        );
    }

    #[test]
    fn evaluation_is_deterministic() {
        let spec = EnvSpec::pendulum1d();
        let cfg = NetworkConfig::by_name("kan-a1c1").unwrap();
        let actor = ActorNet::build(&cfg, 3, 1, &mut Rng::new(2));
        assert_eq!(
            evaluate(&actor, &spec, 3, 5).unwrap(),
            evaluate(&actor, &spec, 3, 5).unwrap()
        );
    }

    #[test]
    fn table_covers_all_configs() {
        let rows = param_table(&[(17, 6), (11, 3)]);
        assert_eq!(rows.len(), 20);
        let cell = |name: &str, o| {
            rows.iter()
                .find(|r| r.config == name && r.obs_dim == o)
                .unwrap()
                .actor_params
        };
        assert_eq!(cell("hyb-a1c3", 17), 14_762);
        assert_eq!(cell("kan-a2c2", 11), 49_932);
        assert_eq!(cell("mlp-a2c2", 17), 73_484);
    }

    #[test]
    fn bench_times_at_least_three_epochs() {
        let spec = EnvSpec::pointmass2d();
        let data = Dataset::generate(&spec, crate::dataset::Tier::Medium, 400, 3).unwrap();
        let hp = CqlHyperparams {
            steps_per_epoch: 2,
            batch_size: 8,
            n_policy_actions: 2,
            n_random_actions: 2,
            ..Default::default()
        };
        let cfg = NetworkConfig::by_name("mlp-a1c1").unwrap();
        let r = bench_epoch(&cfg, &data, &hp, 1).unwrap();
        assert_eq!(r.epochs_timed, 3);
        assert_eq!(r.epoch_seconds.len(), 3);
        assert!((r.steps_per_second - 2.0 / r.mean_epoch_seconds).abs() < 1e-9 * r.steps_per_second);
    }
}
