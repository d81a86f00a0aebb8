use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::schedule::{step_embedding, NoiseSchedule, ScheduleParams, STEP_EMBED_DIM};
use super::VisualError;
use crate::env::{GoalSpec, Observation, SubgoalSpec, VideoRecord, GOAL_DIM, OBS_DIM, SUBGOAL_DIM};
use crate::nn::checkpoint::Checkpoint;
use crate::nn::loss::row_sum_squared_error;
use crate::nn::{fit, AdamWParams, FitOptions, Network, Tensor};

/// Conditioning slot width: subgoal encoding plus the null flag.
pub const COND_DIM: usize = SUBGOAL_DIM + 1;

/// What the denoiser is conditioned on besides the current observation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    Subgoal(SubgoalSpec),
    /// Goal-level token for the flat planner. Both verb bits are zero and the
    /// block-color slot carries the goal's color counts, so it never collides
    /// with a subgoal encoding.
    Goal(GoalSpec),
    Null,
}

impl Conditioning {
    pub fn encode(&self) -> [f64; COND_DIM] {
        let mut v = [0.0; COND_DIM];
        match self {
            Conditioning::Subgoal(w) => v[..SUBGOAL_DIM].copy_from_slice(&w.encode()),
            Conditioning::Goal(g) => {
                for (i, c) in g.encode().iter().enumerate() {
                    v[2 + i] = c / 3.0;
                }
            }
            Conditioning::Null => v[SUBGOAL_DIM] = 1.0,
        }
        const { assert!(GOAL_DIM + 2 <= SUBGOAL_DIM) };
        v
    }
}

/// What the network output means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    /// Output is the noise itself.
    Epsilon,
    /// Output is the clean trajectory minus the current observation tiled
    /// over every frame; the noise is recovered from it in closed form.
    Sample,
    /// Output is `sqrt(alpha_bar) eps - sqrt(1 - alpha_bar) tau_0`.
    Velocity,
}

impl Parameterization {
    fn code(self) -> f64 {
        match self {
            Parameterization::Epsilon => 0.0,
            Parameterization::Sample => 1.0,
            Parameterization::Velocity => 2.0,
        }
    }

    fn from_code(c: f64) -> Option<Self> {
        match c as i64 {
            0 => Some(Parameterization::Epsilon),
            1 => Some(Parameterization::Sample),
            2 => Some(Parameterization::Velocity),
            _ => None,
        }
    }
}

pub fn traj_dim(horizon: usize) -> usize {
    horizon * OBS_DIM
}

pub fn flatten(traj: &[Observation]) -> Vec<f64> {
    traj.iter().flat_map(|o| o.0.iter().copied()).collect()
}

pub fn unflatten(flat: &[f64]) -> Vec<Observation> {
    flat.chunks(OBS_DIM).map(|c| Observation(c.to_vec())).collect()
}

/// Noise predictor over flattened observation trajectories.
#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserNet {
    pub net: Network,
    pub param: Parameterization,
    pub horizon: usize,
    pub schedule: ScheduleParams,
    /// Null-token rate used in training; zero means the unconditional branch is untrained.
    pub drop_prob: f64,
}

pub const DENOISER_ROLE: &str = "denoiser";

impl DenoiserNet {
    pub fn input_dim(horizon: usize) -> usize {
        traj_dim(horizon) + STEP_EMBED_DIM + OBS_DIM + COND_DIM
    }

    pub fn new(horizon: usize, hidden: &[usize], param: Parameterization, schedule: ScheduleParams, seed: u64) -> Self {
        let d = traj_dim(horizon);
        let mut net = Network::mlp(Self::input_dim(horizon), hidden, d, seed);
        // Start from a trajectory-blind network: the first layer only reads
        // the step, observation and conditioning until training says otherwise.
        let first = &mut net.layers_mut()[0];
        let fo = first.fan_out();
        first.weight.data_mut()[..d * fo].fill(0.0);
        Self {
            net,
            param,
            horizon,
            schedule,
            drop_prob: 0.0,
        }
    }

    pub fn traj_dim(&self) -> usize {
        traj_dim(self.horizon)
    }

    /// Trajectory slot of the network input. Sample prediction scales `tau_k`
    /// by `sqrt(alpha_bar_k)` so the noisy trajectory fades out at high noise,
    /// where the clean plan is best read off the conditioning alone.
    fn network_traj(param: Parameterization, sched: &NoiseSchedule, tau_k: &[f64], k: usize) -> Vec<f64> {
        match param {
            Parameterization::Sample => {
                let a = sched.alpha_bar(k).sqrt();
                tau_k.iter().map(|t| a * t).collect()
            }
            _ => tau_k.to_vec(),
        }
    }

    fn push_input(row: &mut Vec<f64>, traj: &[f64], x_t: &[f64], cond: &Conditioning, k: usize) {
        row.extend_from_slice(traj);
        row.extend_from_slice(&step_embedding(k));
        row.extend_from_slice(x_t);
        row.extend_from_slice(&cond.encode());
    }

    fn check(&self, tau_k: &[f64], x_t: &[f64]) -> Result<(), VisualError> {
        if tau_k.len() != self.traj_dim() || x_t.len() != OBS_DIM {
            return Err(VisualError::ShapeMismatch(format!(
                "denoiser expects a {}-dim trajectory and {OBS_DIM}-dim observation, got {} and {}",
                self.traj_dim(),
                tau_k.len(),
                x_t.len()
            )));
        }
        Ok(())
    }

    /// Converts a raw network output row into a noise prediction.
    fn output_to_eps(&self, sched: &NoiseSchedule, out: &[f64], tau_k: &[f64], x_t: &[f64], k: usize) -> Vec<f64> {
        match self.param {
            Parameterization::Epsilon => out.to_vec(),
            Parameterization::Sample => {
                let ab = sched.alpha_bar(k);
                let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
                out.iter()
                    .zip(tau_k)
                    .enumerate()
                    .map(|(i, (f, t))| (t - a * (x_t[i % OBS_DIM] + f)) / s)
                    .collect()
            }
            Parameterization::Velocity => {
                let ab = sched.alpha_bar(k);
                let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
                out.iter().zip(tau_k).map(|(v, t)| s * t + a * v).collect()
            }
        }
    }

    /// Predicted noise for each conditioning, computed in one batched pass.
    pub fn predict_eps_many(
        &self,
        sched: &NoiseSchedule,
        tau_k: &[f64],
        x_t: &[f64],
        conds: &[Conditioning],
        k: usize,
    ) -> Result<Vec<Vec<f64>>, VisualError> {
        self.check(tau_k, x_t)?;
        let mut data = Vec::with_capacity(conds.len() * Self::input_dim(self.horizon));
        let traj = Self::network_traj(self.param, sched, tau_k, k);
        for c in conds {
            Self::push_input(&mut data, &traj, x_t, c, k);
        }
        let input = Tensor::new(vec![conds.len(), Self::input_dim(self.horizon)], data)?;
        let out = self.net.forward(&input)?;
        let d = self.traj_dim();
        Ok(out
            .data()
            .chunks(d)
            .map(|row| self.output_to_eps(sched, row, tau_k, x_t, k))
            .collect())
    }

    pub fn predict_eps(
        &self,
        sched: &NoiseSchedule,
        tau_k: &[f64],
        x_t: &[f64],
        cond: &Conditioning,
        k: usize,
    ) -> Result<Vec<f64>, VisualError> {
        Ok(self
            .predict_eps_many(sched, tau_k, x_t, std::slice::from_ref(cond), k)?
            .pop()
            .expect("one row"))
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            role: DENOISER_ROLE.into(),
            meta: vec![
                ("horizon".into(), self.horizon as f64),
                ("parameterization".into(), self.param.code()),
                ("drop_prob".into(), self.drop_prob),
                ("schedule.k".into(), self.schedule.k as f64),
                ("schedule.beta_1".into(), self.schedule.beta_1),
                ("schedule.beta_k".into(), self.schedule.beta_k),
            ],
            network: self.net.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, VisualError> {
        let bad = |m: &str| VisualError::Incompatible(format!("denoiser checkpoint: {m}"));
        if ck.role != DENOISER_ROLE {
            return Err(bad(&format!("role is {:?}", ck.role)));
        }
        let get = |k: &str| ck.meta_value(k).ok_or_else(|| bad(&format!("missing {k}")));
        let horizon = get("horizon")? as usize;
        let param = Parameterization::from_code(get("parameterization")?).ok_or_else(|| bad("parameterization"))?;
        let schedule = ScheduleParams {
            k: get("schedule.k")? as usize,
            beta_1: get("schedule.beta_1")?,
            beta_k: get("schedule.beta_k")?,
        };
        if ck.network.input_dim() != Self::input_dim(horizon) || ck.network.output_dim() != traj_dim(horizon) {
            return Err(bad("network dimensions do not match the horizon"));
        }
        Ok(Self {
            net: ck.network.clone(),
            param,
            horizon,
            schedule,
            drop_prob: get("drop_prob")?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DenoiserTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch: usize,
    /// Probability of replacing the subgoal with the null token.
    pub drop_prob: f64,
    /// Probability of replacing the subgoal with the goal-level token.
    pub goal_token_prob: f64,
    pub hidden: [usize; 2],
    pub parameterization: Parameterization,
    pub seed: u64,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 1e-4,
            weight_decay: 0.0,
            batch: 64,
            drop_prob: 0.1,
            goal_token_prob: 0.1,
            hidden: [512, 512],
            parameterization: Parameterization::Sample,
            seed: 0,
        }
    }
}

fn draw_conditioning<R: Rng>(rec: &VideoRecord, cfg: &DenoiserTrainConfig, rng: &mut R) -> Conditioning {
    let u: f64 = rng.random();
    if u < cfg.drop_prob {
        Conditioning::Null
    } else if u < cfg.drop_prob + cfg.goal_token_prob {
        Conditioning::Goal(rec.goal)
    } else {
        Conditioning::Subgoal(rec.subgoal)
    }
}

fn gaussian_vec<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Trains on the simplified denoising objective with uniformly drawn steps.
/// Sample-parameterized models regress the clean trajectory (relative to the
/// tiled first frame); epsilon-parameterized models regress the noise.
/// Returns the model and the per-epoch training loss.
pub fn train_denoiser(
    data: &[VideoRecord],
    sched: &NoiseSchedule,
    cfg: &DenoiserTrainConfig,
) -> Result<(DenoiserNet, Vec<f64>), VisualError> {
    if data.is_empty() {
        return Err(VisualError::EmptyDataset);
    }
    if !(0.0..1.0).contains(&(cfg.drop_prob + cfg.goal_token_prob)) || cfg.drop_prob < 0.0 || cfg.goal_token_prob < 0.0 {
        return Err(VisualError::InvalidConfig("token probabilities must be nonnegative and sum below 1".into()));
    }
    let horizon = data[0].obs.len();
    if data.iter().any(|r| r.obs.len() != horizon) {
        return Err(VisualError::ShapeMismatch("trajectories differ in length".into()));
    }
    let flat: Vec<Vec<f64>> = data.iter().map(|r| flatten(&r.obs)).collect();
    let d = traj_dim(horizon);
    let mut den = DenoiserNet::new(horizon, &cfg.hidden, cfg.parameterization, sched.params(), cfg.seed);
    den.drop_prob = cfg.drop_prob;
    let in_dim = DenoiserNet::input_dim(horizon);
    let opts = FitOptions {
        epochs: cfg.epochs,
        batch: cfg.batch,
        optim: AdamWParams::new(cfg.lr, cfg.weight_decay),
        seed: cfg.seed ^ 0x5eed,
    };
    let param = cfg.parameterization;
    let history = fit(
        &mut den.net,
        data.len(),
        &opts,
        |idx, rng| {
            let mut input = Vec::with_capacity(idx.len() * in_dim);
            let mut target = Vec::with_capacity(idx.len() * d);
            for &i in idx {
                let tau0 = &flat[i];
                let x_t = &tau0[..OBS_DIM];
                let k = rng.random_range(1..=sched.steps());
                let eps = gaussian_vec(d, rng);
                let tau_k = sched.q_sample(tau0, k, &eps).expect("shapes agree");
                let cond = draw_conditioning(&data[i], cfg, rng);
                DenoiserNet::push_input(&mut input, &DenoiserNet::network_traj(param, sched, &tau_k, k), x_t, &cond, k);
                match param {
                    Parameterization::Epsilon => target.extend_from_slice(&eps),
                    Parameterization::Sample => {
                        target.extend(tau0.iter().enumerate().map(|(j, v)| v - x_t[j % OBS_DIM]))
                    }
                    Parameterization::Velocity => {
                        let ab = sched.alpha_bar(k);
                        let (a, s) = (ab.sqrt(), (1.0 - ab).sqrt());
                        target.extend(eps.iter().zip(tau0).map(|(e, x)| a * e - s * x))
                    }
                }
            }
            let n = idx.len();
            (
                Tensor::new(vec![n, in_dim], input).expect("sized"),
                Tensor::new(vec![n, d], target).expect("sized"),
            )
        },
        row_sum_squared_error,
    )?;
    crate::nn::train::warn_if_not_decreasing("denoiser", &history);
    Ok((den, history))
}

/// Mean `||eps - eps_hat||^2` per trajectory over `draws` noised copies of each
/// record, with subgoal conditioning.
pub fn denoising_loss(
    den: &DenoiserNet,
    sched: &NoiseSchedule,
    data: &[VideoRecord],
    draws: usize,
    seed: u64,
) -> Result<f64, VisualError> {
    if data.is_empty() || draws == 0 {
        return Err(VisualError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for rec in data {
        let tau0 = flatten(&rec.obs);
        for _ in 0..draws {
            let k = rng.random_range(1..=sched.steps());
            let eps = gaussian_vec(tau0.len(), &mut rng);
            let tau_k = sched.q_sample(&tau0, k, &eps)?;
            let pred = den.predict_eps(sched, &tau_k, &tau0[..OBS_DIM], &Conditioning::Subgoal(rec.subgoal), k)?;
            total += eps.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
    }
    Ok(total / (data.len() * draws) as f64)
}
