//! Offline transition datasets and the ORDS file format.
//!
//! ORDS layout (little-endian, no padding):
//!
//! ```text
//! "ORDS" | version u32 = 1 | obs_dim u32 | act_dim u32 | n u64
//! random_score f64 | expert_score f64
//! env-name len u16 + UTF-8 | tier-name len u16 + UTF-8
//! s f64[n·obs_dim] | a f64[n·act_dim] | r f64[n] | s' f64[n·obs_dim] | done u8[n]
//! ```

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::env::{rollout_return, EnvSpec, ScriptedPolicy};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::checkpoint::take;
use crate::rng::Rng;

pub const ORDS_MAGIC: [u8; 4] = *b"ORDS";
pub const ORDS_VERSION: u32 = 1;

/// Episodes averaged for each reference score.
pub const REFERENCE_EPISODES: usize = 100;
const REFERENCE_SEED: u64 = 0x0005_eed0_f2ef;

const MEDIUM_GAIN: f64 = 0.5;
const MEDIUM_NOISE: f64 = 0.3;
const REPLAY_NOISE_SCHEDULE: [f64; 4] = [1.0, 0.7, 0.5, 0.3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Random,
    Medium,
    MediumReplay,
    MediumExpert,
    Expert,
}

impl Tier {
    pub const ALL: [Tier; 5] = [
        Tier::Random,
        Tier::Medium,
        Tier::MediumReplay,
        Tier::MediumExpert,
        Tier::Expert,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Random => "random",
            Tier::Medium => "medium",
            Tier::MediumReplay => "medium-replay",
            Tier::MediumExpert => "medium-expert",
            Tier::Expert => "expert",
        }
    }

    /// Behavior policy for episode `episode` out of `total` episodes.
    ///
    /// medium: expert gains halved plus N(0, 0.3²) action noise.
    /// medium-replay: medium gains with the noise stepping through
    /// 1.0 → 0.7 → 0.5 → 0.3 over four equal blocks of episodes.
    /// medium-expert: the first half medium, the second half expert.
    pub fn behavior(self, episode: usize, total: usize) -> ScriptedPolicy {
        let medium = ScriptedPolicy::Controller {
            gain_scale: MEDIUM_GAIN,
            noise_std: MEDIUM_NOISE,
        };
        match self {
            Tier::Random => ScriptedPolicy::Random,
            Tier::Expert => ScriptedPolicy::EXPERT,
            Tier::Medium => medium,
            Tier::MediumReplay => ScriptedPolicy::Controller {
                gain_scale: MEDIUM_GAIN,
                noise_std: REPLAY_NOISE_SCHEDULE[(episode * 4 / total.max(1)).min(3)],
            },
            Tier::MediumExpert => {
                if episode < total.div_ceil(2) {
                    medium
                } else {
                    ScriptedPolicy::EXPERT
                }
            }
        }
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Tier::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::UnknownTier(s.to_string()))
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A minibatch of transitions; `rewards` and `dones` are `(batch, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Matrix,
    pub next_obs: Matrix,
    pub dones: Matrix,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.rows() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub env: EnvSpec,
    pub tier: Tier,
    pub obs: Matrix,
    pub actions: Matrix,
    pub rewards: Vec<f64>,
    pub next_obs: Matrix,
    pub dones: Vec<bool>,
    /// Generator seed; not stored in the file, so `None` after loading.
    pub seed: Option<u64>,
    pub random_score: f64,
    pub expert_score: f64,
}

/// Mean random-policy and expert returns for `spec`, each over
/// [`REFERENCE_EPISODES`] episodes from a fixed per-environment seed.
pub fn reference_scores(spec: &EnvSpec) -> (f64, f64) {
    let root = Rng::new(REFERENCE_SEED).split(spec.name());
    let mean_return = |policy: ScriptedPolicy, label: &str| {
        let mut rng = root.split(label);
        (0..REFERENCE_EPISODES)
            .map(|_| rollout_return(spec, &policy, &mut rng))
            .sum::<f64>()
            / REFERENCE_EPISODES as f64
    };
    (
        mean_return(ScriptedPolicy::Random, "random"),
        mean_return(ScriptedPolicy::EXPERT, "expert"),
    )
}

impl Dataset {
    /// Rolls the tier's behavior policy for whole episodes until at least
    /// `n` transitions exist, then truncates to exactly `n`.
    pub fn generate(spec: &EnvSpec, tier: Tier, n: usize, seed: u64) -> Result<Self> {
        if n < spec.horizon {
            return Err(Error::InvalidArgument(format!(
                "need at least one episode ({} transitions), asked for {n}",
                spec.horizon
            )));
        }
        let (random_score, expert_score) = reference_scores(spec);
        if random_score == expert_score {
            return Err(Error::DegenerateReference(random_score));
        }
        let episodes = n.div_ceil(spec.horizon);
        let root = Rng::new(seed);
        let mut obs = Vec::with_capacity(n * spec.obs_dim);
        let mut actions = Vec::with_capacity(n * spec.act_dim);
        let mut rewards = Vec::with_capacity(n);
        let mut next_obs = Vec::with_capacity(n * spec.obs_dim);
        let mut dones = Vec::with_capacity(n);
        'episodes: for e in 0..episodes {
            let policy = tier.behavior(e, episodes);
            let mut rng = root.split(&format!("episode-{e}"));
            let mut state = spec.reset(&mut rng);
            loop {
                let a = policy.act(spec, &state, &mut rng);
                let step = spec.step(&state, &a);
                obs.extend(spec.observe(&state));
                actions.extend(a.iter().map(|v| v.clamp(-1.0, 1.0)));
                rewards.push(step.reward);
                next_obs.extend(spec.observe(&step.next));
                dones.push(step.done);
                if rewards.len() == n {
                    break 'episodes;
                }
                if step.done {
                    break;
                }
                state = step.next;
            }
        }
        Ok(Self {
            env: spec.clone(),
            tier,
            obs: Matrix::from_vec(n, spec.obs_dim, obs)?,
            actions: Matrix::from_vec(n, spec.act_dim, actions)?,
            rewards,
            next_obs: Matrix::from_vec(n, spec.obs_dim, next_obs)?,
            dones,
            seed: Some(seed),
            random_score,
            expert_score,
        })
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs.cols()
    }

    pub fn act_dim(&self) -> usize {
        self.actions.cols()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        Batch {
            obs: self.obs.select_rows(indices),
            actions: self.actions.select_rows(indices),
            rewards: Matrix::from_fn(indices.len(), 1, |i, _| self.rewards[indices[i]]),
            next_obs: self.next_obs.select_rows(indices),
            dones: Matrix::from_fn(indices.len(), 1, |i, _| f64::from(u8::from(self.dones[indices[i]]))),
        }
    }

    /// Uniform sample with replacement.
    pub fn sample_batch(&self, rng: &mut Rng, size: usize) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let idx: Vec<usize> = (0..size).map(|_| rng.below(self.len())).collect();
        Ok(self.batch(&idx))
    }

    /// Returns of the complete episodes (segments ending in `done`).
    pub fn episode_returns(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut acc = 0.0;
        for (r, &d) in self.rewards.iter().zip(&self.dones) {
            acc += r;
            if d {
                out.push(acc);
                acc = 0.0;
            }
        }
        out
    }

    pub fn mean_episode_return(&self) -> f64 {
        let r = self.episode_returns();
        r.iter().sum::<f64>() / r.len().max(1) as f64
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let n = self.len();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        let (od, ad) = (self.obs_dim(), self.act_dim());
        if self.obs.rows() != n || self.actions.rows() != n || self.next_obs.shape() != (n, od) || self.dones.len() != n
        {
            return Err(Error::DimMismatch("dataset columns have different lengths".into()));
        }
        let env = self.env.name().as_bytes();
        let tier = self.tier.name().as_bytes();
        let mut out = Vec::with_capacity(64 + 8 * n * (2 * od + ad + 1) + n);
        out.extend_from_slice(&ORDS_MAGIC);
        out.extend_from_slice(&ORDS_VERSION.to_le_bytes());
        out.extend_from_slice(&(od as u32).to_le_bytes());
        out.extend_from_slice(&(ad as u32).to_le_bytes());
        out.extend_from_slice(&(n as u64).to_le_bytes());
        out.extend_from_slice(&self.random_score.to_le_bytes());
        out.extend_from_slice(&self.expert_score.to_le_bytes());
        for name in [env, tier] {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name);
        }
        let floats = |out: &mut Vec<u8>, xs: &[f64]| xs.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        floats(&mut out, self.obs.as_slice());
        floats(&mut out, self.actions.as_slice());
        floats(&mut out, &self.rewards);
        floats(&mut out, self.next_obs.as_slice());
        out.extend(self.dones.iter().map(|&d| u8::from(d)));
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = bytes;
        let magic: [u8; 4] = take(&mut cur, 4, "magic")?.try_into().unwrap();
        if magic != ORDS_MAGIC {
            return Err(Error::BadMagic {
                expected: ORDS_MAGIC,
                found: magic,
            });
        }
        let u32_at =
            |cur: &mut &[u8], what| -> Result<u32> { Ok(u32::from_le_bytes(take(cur, 4, what)?.try_into().unwrap())) };
        let version = u32_at(&mut cur, "version")?;
        if version != ORDS_VERSION {
            return Err(Error::VersionMismatch {
                expected: ORDS_VERSION,
                found: version,
            });
        }
        let od = u32_at(&mut cur, "obs_dim")? as usize;
        let ad = u32_at(&mut cur, "act_dim")? as usize;
        let n = u64::from_le_bytes(take(&mut cur, 8, "n")?.try_into().unwrap()) as usize;
        let f64_at =
            |cur: &mut &[u8], what| -> Result<f64> { Ok(f64::from_le_bytes(take(cur, 8, what)?.try_into().unwrap())) };
        let random_score = f64_at(&mut cur, "random_score")?;
        let expert_score = f64_at(&mut cur, "expert_score")?;
        let mut name = |what| -> Result<String> {
            let len = u16::from_le_bytes(take(&mut cur, 2, what)?.try_into().unwrap()) as usize;
            String::from_utf8(take(&mut cur, len, what)?.to_vec())
                .map_err(|_| Error::DimMismatch(format!("{what} is not UTF-8")))
        };
        let env_name = name("env name")?;
        let tier_name = name("tier name")?;
        let env = EnvSpec::by_name(&env_name)?;
        let tier: Tier = tier_name.parse()?;
        if env.obs_dim != od || env.act_dim != ad {
            return Err(Error::DimMismatch(format!(
                "{env_name} has dims ({}, {}), header says ({od}, {ad})",
                env.obs_dim, env.act_dim
            )));
        }
        let mut floats = |count: usize, what| -> Result<Vec<f64>> {
            let bytes = count
                .checked_mul(8)
                .ok_or(Error::DimMismatch(format!("{what} length overflows")))?;
            Ok(take(&mut cur, bytes, what)?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect())
        };
        let obs = floats(n * od, "observations")?;
        let actions = floats(n * ad, "actions")?;
        let rewards = floats(n, "rewards")?;
        let next_obs = floats(n * od, "next observations")?;
        let dones: Vec<bool> = take(&mut cur, n, "done flags")?.iter().map(|&b| b != 0).collect();
        if !cur.is_empty() {
            return Err(Error::DimMismatch(format!("{} trailing bytes", cur.len())));
        }
        Ok(Self {
            env,
            tier,
            obs: Matrix::from_vec(n, od, obs)?,
            actions: Matrix::from_vec(n, ad, actions)?,
            rewards,
            next_obs: Matrix::from_vec(n, od, next_obs)?,
            dones,
            seed: None,
            random_score,
            expert_score,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
