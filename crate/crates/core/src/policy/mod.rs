//! Actor and critic assembly for the ten network configurations.

mod actor;
mod config;
mod critic;

use std::collections::BTreeMap;

pub use actor::{tanh_gaussian_log_prob, ActorNet, ActorTape, TanhGaussianSample, LOG_STD_MAX, LOG_STD_MIN, TANH_EPS};
pub use config::{count_params, Backbone, NetworkConfig, CONFIGS, KAN_HIDDEN, MLP_HIDDEN};
pub use critic::CriticNet;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::checkpoint::{Checkpoint, Manifest, TensorEntry};
use crate::rng::Rng;

/// Actor, twin critics, and their target copies.
#[derive(Clone, Debug, PartialEq)]
pub struct Networks {
    pub config: NetworkConfig,
    pub actor: ActorNet,
    pub critics: [CriticNet; 2],
    pub targets: [CriticNet; 2],
}

/// Builds all five networks; targets start as exact copies of the critics.
pub fn build(cfg: &NetworkConfig, obs_dim: usize, act_dim: usize, rng: &Rng) -> Networks {
    let actor = ActorNet::build(cfg, obs_dim, act_dim, &mut rng.split("actor"));
    let critics = [
        CriticNet::build(cfg, obs_dim, act_dim, &mut rng.split("critic1")),
        CriticNet::build(cfg, obs_dim, act_dim, &mut rng.split("critic2")),
    ];
    let targets = critics.clone();
    Networks {
        config: *cfg,
        actor,
        critics,
        targets,
    }
}

const CRITIC_PREFIXES: [&str; 2] = ["critic1", "critic2"];
const TARGET_PREFIXES: [&str; 2] = ["target1", "target2"];

impl Networks {
    pub fn obs_dim(&self) -> usize {
        self.actor.obs_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.actor.act_dim()
    }

    fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out: Vec<(String, &Matrix)> = self
            .actor
            .param_names("actor")
            .into_iter()
            .zip(self.actor.params())
            .collect();
        for (nets, prefixes) in [(&self.critics, CRITIC_PREFIXES), (&self.targets, TARGET_PREFIXES)] {
            for (net, prefix) in nets.iter().zip(prefixes) {
                out.extend(net.network().param_names(prefix).into_iter().zip(net.params()));
            }
        }
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = self.actor.params_mut();
        for c in self.critics.iter_mut().chain(self.targets.iter_mut()) {
            out.extend(c.params_mut());
        }
        out
    }

    pub fn to_checkpoint(&self, scalars: BTreeMap<String, f64>) -> Checkpoint {
        let named = self.named_params();
        Checkpoint {
            manifest: Manifest {
                config: self.config.name.to_string(),
                obs_dim: self.obs_dim(),
                act_dim: self.act_dim(),
                scalars,
                tensors: named
                    .iter()
                    .map(|(name, m)| TensorEntry {
                        name: name.clone(),
                        rows: m.rows(),
                        cols: m.cols(),
                    })
                    .collect(),
            },
            tensors: named.into_iter().map(|(_, m)| m.clone()).collect(),
        }
    }

    /// Rebuilds the networks named by the manifest and loads every tensor.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let cfg = NetworkConfig::by_name(&ck.manifest.config)?;
        let mut nets = build(&cfg, ck.manifest.obs_dim, ck.manifest.act_dim, &Rng::new(0));
        let names: Vec<String> = nets.named_params().into_iter().map(|(n, _)| n).collect();
        if names.len() != ck.tensors.len() {
            return Err(Error::DimMismatch(format!(
                "{} expects {} tensors, checkpoint has {}",
                cfg.name,
                names.len(),
                ck.tensors.len()
            )));
        }
        for ((name, dst), (entry, src)) in names
            .iter()
            .zip(nets.params_mut())
            .zip(ck.manifest.tensors.iter().zip(&ck.tensors))
        {
            if *name != entry.name || dst.shape() != src.shape() {
                return Err(Error::DimMismatch(format!(
                    "expected {name} {:?}, found {} {:?}",
                    dst.shape(),
                    entry.name,
                    src.shape()
                )));
            }
            *dst = src.clone();
        }
        Ok(nets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn targets_start_as_bitwise_copies() {
        let cfg = NetworkConfig::by_name("hyb-a1c3").unwrap();
        let nets = build(&cfg, 5, 2, &Rng::new(3));
        assert_eq!(nets.targets, nets.critics);
        assert_ne!(nets.critics[0], nets.critics[1]);
    }

    #[test]
    fn built_counts_agree_with_formula() {
        for cfg in CONFIGS.iter() {
            for (obs, act) in [(17, 6), (11, 3), (4, 2)] {
                let nets = build(cfg, obs, act, &Rng::new(0));
                let (a, c) = cfg.count_params(obs, act);
                assert_eq!(nets.actor.param_count(), a, "{} actor", cfg.name);
                assert_eq!(nets.critics[0].param_count(), c, "{} critic", cfg.name);
            }
        }
    }

    #[test]
    fn hybrid_actor_count() {
        let cfg = NetworkConfig::by_name("hyb-a2c3").unwrap();
        assert_eq!(build(&cfg, 17, 6, &Rng::new(0)).actor.param_count(), 55_722);
    }

    #[test]
    fn checkpoint_round_trip() {
        for name in ["mlp-a1c1", "kan-a1c1"] {
            let cfg = NetworkConfig::by_name(name).unwrap();
            let nets = build(&cfg, 4, 2, &Rng::new(9));
            let ck = nets.to_checkpoint(BTreeMap::new());
            let bytes = ck.to_bytes().unwrap();
            let back = Networks::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
            assert_eq!(back, nets);
        }
    }

    #[test]
    fn critic_rows_are_independent() {
        let cfg = NetworkConfig::by_name("kan-a1c1").unwrap();
        let nets = build(&cfg, 3, 2, &Rng::new(1));
        let s = Matrix::from_rows(&[&[0.1, 0.2, 0.3]]).repeat_rows(6);
        let a = Matrix::from_rows(&[&[-0.5, 0.5]]).repeat_rows(6);
        let q = nets.critics[0].q_value(&s, &a, None).unwrap();
        assert_eq!(q.shape(), (6, 1));
        assert!(q.as_slice().iter().all(|&v| v == q.get(0, 0)));
    }

    #[test]
    fn zeroed_mlp_critic_outputs_zero() {
        let cfg = NetworkConfig::by_name("mlp-a1c1").unwrap();
        let mut nets = build(&cfg, 3, 2, &Rng::new(1));
        for p in nets.critics[0].params_mut() {
            p.scale(0.0);
        }
        let q = nets.critics[0]
            .q_value(&Rng::new(2).gaussian(4, 3), &Rng::new(3).gaussian(4, 2), None)
            .unwrap();
        assert!(q.as_slice().iter().all(|&v| v == 0.0));
    }
}
