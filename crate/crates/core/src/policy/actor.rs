use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::{ActivationKind, GradTape, LinearLayer, Network};
use crate::rng::Rng;

use super::config::{Backbone, NetworkConfig};
use crate::bspline::SplineGrid;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Added inside `log(1 − tanh²)` so saturated actions keep a finite density.
pub const TANH_EPS: f64 = 1e-6;

const HALF_LOG_2PI: f64 = 0.918_938_533_204_672_8;

/// Tanh-squashed Gaussian policy.
///
/// MLP actors produce `[mean | log_std]` from one final linear layer. KAN
/// actors produce the mean from the KAN stack and then map the mean through
/// a single `act_dim → act_dim` linear layer to get `log_std`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorNet {
    kind: Backbone,
    backbone: Network,
    std_head: Option<LinearLayer>,
    act_dim: usize,
}

/// Intermediates of one actor forward pass.
#[derive(Clone, Debug, Default)]
pub struct ActorTape {
    backbone: GradTape,
    head: GradTape,
    raw_log_std: Option<Matrix>,
}

impl ActorNet {
    pub fn build(cfg: &NetworkConfig, obs_dim: usize, act_dim: usize, rng: &mut Rng) -> Self {
        let widths = cfg.actor_widths(obs_dim, act_dim);
        match cfg.actor_kind {
            Backbone::Mlp => Self {
                kind: Backbone::Mlp,
                backbone: Network::mlp(&widths, ActivationKind::ReLU, rng),
                std_head: None,
                act_dim,
            },
            Backbone::Kan => Self {
                kind: Backbone::Kan,
                backbone: Network::kan(&widths, &SplineGrid::default(), rng),
                std_head: Some(LinearLayer::init(act_dim, act_dim, rng)),
                act_dim,
            },
        }
    }

    pub fn kind(&self) -> Backbone {
        self.kind
    }

    pub fn obs_dim(&self) -> usize {
        self.backbone.n_in()
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn backbone(&self) -> &Network {
        &self.backbone
    }

    pub fn backbone_mut(&mut self) -> &mut Network {
        &mut self.backbone
    }

    pub fn std_head(&self) -> Option<&LinearLayer> {
        self.std_head.as_ref()
    }

    pub fn std_head_mut(&mut self) -> Option<&mut LinearLayer> {
        self.std_head.as_mut()
    }

    pub fn param_count(&self) -> usize {
        self.backbone.param_count() + self.std_head.as_ref().map_or(0, LinearLayer::param_count)
    }

    pub fn params(&self) -> Vec<&Matrix> {
        let mut p = self.backbone.params();
        if let Some(h) = &self.std_head {
            p.extend(h.params());
        }
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut p = self.backbone.params_mut();
        if let Some(h) = &mut self.std_head {
            p.extend(h.params_mut());
        }
        p
    }

    pub fn param_names(&self, prefix: &str) -> Vec<String> {
        let mut names = self.backbone.param_names(prefix);
        if self.std_head.is_some() {
            names.extend(
                LinearLayer::param_names()
                    .iter()
                    .map(|n| format!("{prefix}.std_head.{n}")),
            );
        }
        names
    }

    /// `(mean, log_std)` with `log_std` clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub fn forward(&self, s: &Matrix, mut tape: Option<&mut ActorTape>) -> Result<(Matrix, Matrix)> {
        if s.cols() != self.obs_dim() {
            return Err(Error::shape("actor_forward", s.shape(), (s.rows(), self.obs_dim())));
        }
        let a = self.act_dim;
        let (mean, raw) = match &self.std_head {
            None => {
                let out = self.backbone.forward(s, tape.as_deref_mut().map(|t| &mut t.backbone))?;
                (out.columns(0, a), out.columns(a, 2 * a))
            }
            Some(head) => {
                let mean = self.backbone.forward(s, tape.as_deref_mut().map(|t| &mut t.backbone))?;
                let raw = head.forward(&mean, tape.as_deref_mut().map(|t| &mut t.head))?;
                (mean, raw)
            }
        };
        if let Some(t) = tape {
            t.raw_log_std = Some(raw.clone());
        }
        Ok((mean, raw.map(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX))))
    }

    /// Parameter gradients given upstream gradients on `mean` and on the
    /// clamped `log_std`.
    pub fn backward(&self, mut tape: ActorTape, g_mean: &Matrix, g_log_std: &Matrix) -> Result<Vec<Matrix>> {
        let raw = tape.raw_log_std.take().ok_or(Error::NoForward)?;
        let g_raw = raw.zip_map(g_log_std, |r, g| {
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&r) {
                g
            } else {
                0.0
            }
        })?;
        match &self.std_head {
            None => {
                let up = g_mean.hstack(&g_raw)?;
                Ok(self.backbone.backward(&mut tape.backbone, &up, true)?.params)
            }
            Some(head) => {
                let hg = head.backward(&mut tape.head, &g_raw, true)?;
                let mut up = g_mean.clone();
                up.add_assign(&hg.input)?;
                let mut grads = self.backbone.backward(&mut tape.backbone, &up, true)?.params;
                grads.extend(hg.params);
                Ok(grads)
            }
        }
    }

    /// `tanh(mean)`; the evaluation-time policy.
    pub fn deterministic_action(&self, s: &Matrix) -> Result<Matrix> {
        let (mean, _) = self.forward(s, None)?;
        Ok(mean.map(f64::tanh))
    }

    /// Reparameterized draw: `(action, log_prob)` with `log_prob` of shape
    /// `(batch, 1)`.
    pub fn sample_action(&self, s: &Matrix, rng: &mut Rng) -> Result<(Matrix, Matrix)> {
        let (mean, log_std) = self.forward(s, None)?;
        let eps = rng.gaussian(mean.rows(), mean.cols());
        let sample = TanhGaussianSample::new(mean, log_std, eps)?;
        Ok((sample.action, sample.log_prob))
    }
}

/// One reparameterized tanh-Gaussian draw and everything needed to
/// differentiate through it.
#[derive(Clone, Debug)]
pub struct TanhGaussianSample {
    pub mean: Matrix,
    pub log_std: Matrix,
    pub eps: Matrix,
    pub pre_tanh: Matrix,
    pub action: Matrix,
    pub log_prob: Matrix,
}

impl TanhGaussianSample {
    /// `u = mean + exp(log_std)·eps`, `a = tanh(u)`,
    /// `log π(a) = Σ_d [log N(u_d; mean_d, std_d) − log(1 − a_d² + TANH_EPS)]`.
    pub fn new(mean: Matrix, log_std: Matrix, eps: Matrix) -> Result<Self> {
        if mean.shape() != log_std.shape() || mean.shape() != eps.shape() {
            return Err(Error::shape("tanh_gaussian", mean.shape(), eps.shape()));
        }
        let (rows, cols) = mean.shape();
        let mut pre_tanh = Matrix::zeros(rows, cols);
        let mut action = Matrix::zeros(rows, cols);
        let mut log_prob = Matrix::zeros(rows, 1);
        for r in 0..rows {
            let mut lp = 0.0;
            for c in 0..cols {
                let (m, ls, e) = (mean.get(r, c), log_std.get(r, c), eps.get(r, c));
                let u = m + ls.exp() * e;
                let a = u.tanh();
                pre_tanh.set(r, c, u);
                action.set(r, c, a);
                lp += -0.5 * e * e - ls - HALF_LOG_2PI - (1.0 - a * a + TANH_EPS).ln();
            }
            log_prob.set(r, 0, lp);
        }
        Ok(Self {
            mean,
            log_std,
            eps,
            pre_tanh,
            action,
            log_prob,
        })
    }

    /// Chain rule from `(∂L/∂action, ∂L/∂log_prob)` to
    /// `(∂L/∂mean, ∂L/∂log_std)` with the noise held fixed. `g_log_prob`
    /// is `(batch, 1)`.
    pub fn backward(&self, g_action: Option<&Matrix>, g_log_prob: Option<&Matrix>) -> (Matrix, Matrix) {
        let (rows, cols) = self.mean.shape();
        let mut g_mean = Matrix::zeros(rows, cols);
        let mut g_log_std = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let glp = g_log_prob.map_or(0.0, |g| g.get(r, 0));
            for c in 0..cols {
                let a = self.action.get(r, c);
                let one_minus = 1.0 - a * a;
                let ga = g_action.map_or(0.0, |g| g.get(r, c));
                // d/du of −log(1 − tanh²u + eps)
                let dcorr = 2.0 * a * one_minus / (one_minus + TANH_EPS);
                let gu = ga * one_minus + glp * dcorr;
                let std_eps = self.log_std.get(r, c).exp() * self.eps.get(r, c);
                g_mean.set(r, c, gu);
                g_log_std.set(r, c, gu * std_eps - glp);
            }
        }
        (g_mean, g_log_std)
    }
}

/// Log-density of a given squashed action under `(mean, log_std)`, using the
/// same `TANH_EPS` correction as sampling. Actions must lie in `(−1, 1)`.
pub fn tanh_gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let u = a.atanh();
            let z = (u - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_2PI - (1.0 - a * a + TANH_EPS).ln()
        })
        .sum()
}
