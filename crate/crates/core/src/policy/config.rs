use std::fmt;

use serde::Serialize;

use crate::bspline::SplineGrid;
use crate::error::{Error, Result};

pub const MLP_HIDDEN: usize = 256;
pub const KAN_HIDDEN: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Mlp,
    Kan,
}

impl fmt::Display for Backbone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Backbone::Mlp => "MLP",
            Backbone::Kan => "KAN",
        })
    }
}

/// One actor/critic architecture pairing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct NetworkConfig {
    pub name: &'static str,
    pub actor_kind: Backbone,
    pub actor_hidden_layers: usize,
    pub actor_hidden_size: usize,
    pub critic_kind: Backbone,
    pub critic_hidden_layers: usize,
    pub critic_hidden_size: usize,
}

const fn cfg(
    name: &'static str,
    actor_kind: Backbone,
    actor_hidden_layers: usize,
    critic_kind: Backbone,
    critic_hidden_layers: usize,
) -> NetworkConfig {
    NetworkConfig {
        name,
        actor_kind,
        actor_hidden_layers,
        actor_hidden_size: hidden_size(actor_kind),
        critic_kind,
        critic_hidden_layers,
        critic_hidden_size: hidden_size(critic_kind),
    }
}

const fn hidden_size(kind: Backbone) -> usize {
    match kind {
        Backbone::Mlp => MLP_HIDDEN,
        Backbone::Kan => KAN_HIDDEN,
    }
}

use Backbone::{Kan, Mlp};

/// The ten architectures compared: pure MLP, pure KAN, and KAN actor with
/// MLP critics.
pub const CONFIGS: [NetworkConfig; 10] = [
    cfg("mlp-a1c1", Mlp, 1, Mlp, 1),
    cfg("mlp-a2c2", Mlp, 2, Mlp, 2),
    cfg("mlp-a3c3", Mlp, 3, Mlp, 3),
    cfg("kan-a0c0", Kan, 0, Kan, 0),
    cfg("kan-a1c1", Kan, 1, Kan, 1),
    cfg("kan-a2c2", Kan, 2, Kan, 2),
    cfg("hyb-a0c3", Kan, 0, Mlp, 3),
    cfg("hyb-a1c3", Kan, 1, Mlp, 3),
    cfg("hyb-a2c3", Kan, 2, Mlp, 3),
    cfg("hyb-a3c3", Kan, 3, Mlp, 3),
];

impl NetworkConfig {
    pub fn all() -> &'static [NetworkConfig] {
        &CONFIGS
    }

    pub fn by_name(name: &str) -> Result<NetworkConfig> {
        CONFIGS
            .iter()
            .find(|c| c.name == name)
            .copied()
            .ok_or_else(|| Error::UnknownConfig(name.to_string()))
    }

    /// Layer widths of the actor backbone. MLP actors emit mean and log-std
    /// together (`2·act_dim`); KAN actors emit the mean only.
    pub fn actor_widths(&self, obs_dim: usize, act_dim: usize) -> Vec<usize> {
        let out = match self.actor_kind {
            Backbone::Mlp => 2 * act_dim,
            Backbone::Kan => act_dim,
        };
        widths(obs_dim, self.actor_hidden_layers, self.actor_hidden_size, out)
    }

    pub fn critic_widths(&self, obs_dim: usize, act_dim: usize) -> Vec<usize> {
        widths(obs_dim + act_dim, self.critic_hidden_layers, self.critic_hidden_size, 1)
    }

    /// Exact `(actor, critic)` parameter totals for one actor and one critic.
    pub fn count_params(&self, obs_dim: usize, act_dim: usize) -> (usize, usize) {
        let edge = SplineGrid::default().num_basis() + 2;
        let actor = match self.actor_kind {
            Backbone::Mlp => dense_count(&self.actor_widths(obs_dim, act_dim)),
            // plus the act_dim → act_dim log-std head
            Backbone::Kan => kan_count(&self.actor_widths(obs_dim, act_dim), edge) + act_dim * act_dim + act_dim,
        };
        let critic_widths = self.critic_widths(obs_dim, act_dim);
        let critic = match self.critic_kind {
            Backbone::Mlp => dense_count(&critic_widths),
            Backbone::Kan => kan_count(&critic_widths, edge),
        };
        (actor, critic)
    }
}

impl fmt::Display for NetworkConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// Parameter counts for a named configuration.
pub fn count_params(name: &str, obs_dim: usize, act_dim: usize) -> Result<(usize, usize)> {
    Ok(NetworkConfig::by_name(name)?.count_params(obs_dim, act_dim))
}

fn widths(input: usize, hidden_layers: usize, hidden: usize, output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend(std::iter::repeat_n(hidden, hidden_layers));
    w.push(output);
    w
}

fn dense_count(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

fn kan_count(widths: &[usize], per_edge: usize) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] * per_edge).sum()
}
