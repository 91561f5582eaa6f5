use crate::bspline::SplineGrid;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{ActivationKind, GradTape, NetGrad, Network};
use crate::rng::Rng;

use super::config::{Backbone, NetworkConfig};

/// `Q(s, a)` over the concatenated `[s | a]` row; one output node.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticNet {
    net: Network,
    obs_dim: usize,
    act_dim: usize,
}

impl CriticNet {
    pub fn build(cfg: &NetworkConfig, obs_dim: usize, act_dim: usize, rng: &mut Rng) -> Self {
        let widths = cfg.critic_widths(obs_dim, act_dim);
        let net = match cfg.critic_kind {
            Backbone::Mlp => Network::mlp(&widths, ActivationKind::ReLU, rng),
            Backbone::Kan => Network::kan(&widths, &SplineGrid::default(), rng),
        };
        Self { net, obs_dim, act_dim }
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count()
    }

    pub fn params(&self) -> Vec<&Matrix> {
        self.net.params()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        self.net.params_mut()
    }

    pub fn q_value(&self, s: &Matrix, a: &Matrix, tape: Option<&mut GradTape>) -> Result<Matrix> {
        if s.cols() != self.obs_dim || a.cols() != self.act_dim || s.rows() != a.rows() {
            return Err(Error::shape("q_value", s.shape(), a.shape()));
        }
        self.q_of_input(&s.hstack(a)?, tape)
    }

    /// Q over pre-concatenated `[s | a]` rows.
    pub fn q_of_input(&self, input: &Matrix, tape: Option<&mut GradTape>) -> Result<Matrix> {
        self.net.forward(input, tape)
    }

    /// Gradients through the last recorded forward. `input` covers the full
    /// `[s | a]` row; see [`CriticNet::action_columns`].
    pub fn backward(&self, tape: &mut GradTape, upstream: &Matrix, param_grads: bool) -> Result<NetGrad> {
        self.net.backward(tape, upstream, param_grads)
    }

    /// The action part of an input gradient.
    pub fn action_columns(&self, input_grad: &Matrix) -> Matrix {
        input_grad.columns(self.obs_dim, self.obs_dim + self.act_dim)
    }

    /// Polyak averaging toward `live`.
    pub fn soft_update_from(&mut self, live: &CriticNet, tau: f64) -> Result<()> {
        self.net.blend_from(&live.net, tau)
    }
}
