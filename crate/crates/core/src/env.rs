//! Small deterministic continuous-control tasks and their scripted
//! controllers.
//!
//! `pointmass2d` is a double integrator on `[−1, 1]²` that has to reach a
//! fixed goal; `pendulum1d` is a damped torque-limited pendulum that has to
//! swing up and balance. Dynamics are pure functions of `(state, action)`;
//! only `reset` draws randomness.

use std::f64::consts::PI;
use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::Rng;

pub const POINTMASS_GOAL: [f64; 2] = [0.7, 0.7];
const POINTMASS_KP: f64 = 5.0;
const POINTMASS_KD: f64 = 2.0;

const PENDULUM_GRAVITY: f64 = 10.0;
const PENDULUM_TORQUE_SCALE: f64 = 2.0;
const PENDULUM_DAMPING: f64 = 0.1;
const PENDULUM_MAX_SPEED: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EnvKind {
    PointMass2d,
    Pendulum1d,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub horizon: usize,
    pub dt: f64,
}

/// Physical state plus the step counter.
///
/// `pointmass2d`: `[px, py, vx, vy]`. `pendulum1d`: `[θ, θ̇]` with `θ = 0`
/// upright.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvState {
    pub physical: Vec<f64>,
    pub t: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Step {
    pub next: EnvState,
    pub reward: f64,
    pub done: bool,
}

impl EnvSpec {
    pub fn pointmass2d() -> Self {
        Self {
            kind: EnvKind::PointMass2d,
            obs_dim: 4,
            act_dim: 2,
            horizon: 100,
            dt: 0.05,
        }
    }

    pub fn pendulum1d() -> Self {
        Self {
            kind: EnvKind::Pendulum1d,
            obs_dim: 3,
            act_dim: 1,
            horizon: 200,
            dt: 0.05,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "pointmass2d" => Ok(Self::pointmass2d()),
            "pendulum1d" => Ok(Self::pendulum1d()),
            other => Err(Error::UnknownEnv(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            EnvKind::PointMass2d => "pointmass2d",
            EnvKind::Pendulum1d => "pendulum1d",
        }
    }

    pub fn reset(&self, rng: &mut Rng) -> EnvState {
        let physical = match self.kind {
            EnvKind::PointMass2d => vec![rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0, 0.0],
            EnvKind::Pendulum1d => vec![rng.uniform(-PI, PI), rng.uniform(-1.0, 1.0)],
        };
        EnvState { physical, t: 0 }
    }

    pub fn observe(&self, state: &EnvState) -> Vec<f64> {
        match self.kind {
            EnvKind::PointMass2d => state.physical.clone(),
            EnvKind::Pendulum1d => {
                let (th, thd) = (state.physical[0], state.physical[1]);
                vec![th.cos(), th.sin(), thd]
            }
        }
    }

    /// Advances one step. Actions are clipped to `[−1, 1]`; the reward is
    /// computed on the post-step state and `done` is raised at the horizon.
    pub fn step(&self, state: &EnvState, action: &[f64]) -> Step {
        let a: Vec<f64> = action.iter().map(|v| v.clamp(-1.0, 1.0)).collect();
        let dt = self.dt;
        let (physical, reward) = match self.kind {
            EnvKind::PointMass2d => {
                let mut s = state.physical.clone();
                for d in 0..2 {
                    s[2 + d] = (s[2 + d] + a[d] * dt).clamp(-1.0, 1.0);
                    s[d] = (s[d] + s[2 + d] * dt).clamp(-1.0, 1.0);
                }
                let reward = -((s[0] - POINTMASS_GOAL[0]).powi(2) + (s[1] - POINTMASS_GOAL[1]).powi(2)).sqrt();
                (s, reward)
            }
            EnvKind::Pendulum1d => {
                let (th, thd) = (state.physical[0], state.physical[1]);
                let torque = PENDULUM_TORQUE_SCALE * a[0];
                let accel = 1.5 * PENDULUM_GRAVITY * th.sin() + 3.0 * torque - PENDULUM_DAMPING * thd;
                let thd = (thd + accel * dt).clamp(-PENDULUM_MAX_SPEED, PENDULUM_MAX_SPEED);
                let th = th + thd * dt;
                let w = wrap_angle(th);
                let reward = -(w * w + 0.1 * thd * thd + 0.001 * torque * torque);
                (vec![th, thd], reward)
            }
        };
        let t = state.t + 1;
        Step {
            next: EnvState { physical, t },
            reward,
            done: t >= self.horizon,
        }
    }
}

impl fmt::Display for EnvSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Angle mapped into `[−π, π)`.
pub fn wrap_angle(th: f64) -> f64 {
    (th + PI).rem_euclid(2.0 * PI) - PI
}

/// Hand-designed behavior policies used to generate offline data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScriptedPolicy {
    Random,
    /// The expert controller with its gains multiplied by `gain_scale` and
    /// Gaussian noise of `noise_std` added to each action before clipping.
    Controller {
        gain_scale: f64,
        noise_std: f64,
    },
}

impl ScriptedPolicy {
    pub const EXPERT: ScriptedPolicy = ScriptedPolicy::Controller {
        gain_scale: 1.0,
        noise_std: 0.0,
    };

    pub fn act(&self, spec: &EnvSpec, state: &EnvState, rng: &mut Rng) -> Vec<f64> {
        match *self {
            ScriptedPolicy::Random => (0..spec.act_dim).map(|_| rng.uniform(-1.0, 1.0)).collect(),
            ScriptedPolicy::Controller { gain_scale, noise_std } => {
                let mut a = controller_action(spec, state, gain_scale);
                if noise_std > 0.0 {
                    for v in a.iter_mut() {
                        *v = (*v + noise_std * rng.normal()).clamp(-1.0, 1.0);
                    }
                }
                a
            }
        }
    }
}

/// PD toward the goal for the point mass; energy pumping plus a PD balance
/// region near upright for the pendulum.
pub fn controller_action(spec: &EnvSpec, state: &EnvState, gain_scale: f64) -> Vec<f64> {
    let s = &state.physical;
    match spec.kind {
        EnvKind::PointMass2d => (0..2)
            .map(|d| {
                let u = POINTMASS_KP * (POINTMASS_GOAL[d] - s[d]) - POINTMASS_KD * s[2 + d];
                (gain_scale * u).clamp(-1.0, 1.0)
            })
            .collect(),
        EnvKind::Pendulum1d => {
            let (th, thd) = (s[0], s[1]);
            let w = wrap_angle(th);
            let a = if w.cos() > 0.95 {
                -gain_scale * (10.0 * w + 2.0 * thd) / PENDULUM_TORQUE_SCALE
            } else if thd.abs() < 1e-3 {
                1.0
            } else {
                // Drive the mechanical energy toward its upright value.
                let upright = 1.5 * PENDULUM_GRAVITY;
                let energy = 0.5 * thd * thd + upright * th.cos();
                gain_scale * 0.5 * thd * (upright - energy)
            };
            vec![a.clamp(-1.0, 1.0)]
        }
    }
}

/// Undiscounted return of one episode under `policy`.
pub fn rollout_return(spec: &EnvSpec, policy: &ScriptedPolicy, rng: &mut Rng) -> f64 {
    let mut state = spec.reset(rng);
    let mut total = 0.0;
    loop {
        let a = policy.act(spec, &state, rng);
        let step = spec.step(&state, &a);
        total += step.reward;
        if step.done {
            return total;
        }
        state = step.next;
    }
}
