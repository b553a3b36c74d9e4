//! Offline pipeline: random-trajectory generation, return-to-go labeling,
//! actor/critic training, prompted autoregressive rollout with best-of-n
//! selection, the per-timestep critic-error study, and the empirical
//! checker for the Lipschitz action-similarity bound.

use std::io::{BufRead, Write};

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Anchor, CanvasState, Env, FeatureMaps};
use crate::model::{features, Mlp, Role, RtgStats, LR_ACTOR, LR_CRITIC, WEIGHT_DECAY};
use crate::netlist::content_hash;
use crate::sldas::{knn, normalize, select_action_weighted, CandidateSet, ContinuousAction};
use crate::{Result, SgfError};

/// Amplitude of the seeded proposal noise that differentiates best-of-n
/// inference attempts.
pub const PROPOSAL_NOISE: f64 = 0.02;

const MAX_EPISODE_RETRIES: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub wirelength: f64,
    pub max_congestion: f64,
    pub max_heat: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub action: [usize; 3],
    pub reward: [f64; 3],
    pub rtg: [f64; 3],
}

impl StepRecord {
    pub fn anchor(&self) -> Anchor {
        Anchor::new(self.action[0], self.action[1], self.action[2])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub netlist: String,
    pub hash: String,
    pub seed: u64,
    pub failed: bool,
    pub totals: Totals,
    pub steps: Vec<StepRecord>,
}

impl Trajectory {
    /// Episode-level return (the return-to-go at the first step).
    pub fn episode_return(&self) -> [f64; 3] {
        self.steps.first().map(|s| s.rtg).unwrap_or([0.0; 3])
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

fn episode_seed(master: u64, episode: u64, attempt: u64) -> u64 {
    splitmix64(splitmix64(master ^ episode.wrapping_mul(0x9e3779b97f4a7c15)) ^ attempt)
}

/// Suffix-sum return-to-go labels over the received rewards.
pub fn label_rtg(steps: &mut [StepRecord]) {
    let mut acc = [0.0f64; 3];
    for step in steps.iter_mut().rev() {
        for i in 0..3 {
            acc[i] = step.reward[i] + acc[i];
        }
        step.rtg = acc;
    }
}

fn totals_of(state: &CanvasState) -> Totals {
    Totals {
        wirelength: state.wirelength(),
        max_congestion: state.max_congestion(),
        max_heat: state.max_heat(),
    }
}

/// Generate `count` complete random trajectories. Actions are drawn
/// uniformly from the legal set under a per-episode seeded generator;
/// dead-ended episodes are discarded and retried with a fresh derived seed.
pub fn gen_random(env: &Env, count: usize, seed: u64) -> Result<Vec<Trajectory>> {
    if count < 1 {
        return Err(SgfError::Invalid("trajectory count must be >= 1".into()));
    }
    let name = env.netlist().name.clone();
    let hash = content_hash(env.netlist());
    let mut out = Vec::with_capacity(count);
    for episode in 0..count as u64 {
        let mut done = false;
        for attempt in 0..MAX_EPISODE_RETRIES {
            let ep_seed = episode_seed(seed, episode, attempt);
            let mut rng = ChaCha8Rng::seed_from_u64(ep_seed);
            let mut state = env.reset();
            let mut steps = Vec::with_capacity(state.n_modules());
            let mut dead_end = false;
            while !state.done() {
                let legal = env.legal_actions(&state);
                if legal.is_empty() {
                    dead_end = true;
                    break;
                }
                let action = legal[rng.random_range(0..legal.len())];
                let (next, reward, _) = env.step(&state, action)?;
                steps.push(StepRecord {
                    t: state.t(),
                    action: [action.x, action.y, action.z],
                    reward: reward.as_array(),
                    rtg: [0.0; 3],
                });
                state = next;
            }
            if dead_end {
                continue;
            }
            label_rtg(&mut steps);
            out.push(Trajectory {
                netlist: name.clone(),
                hash: hash.clone(),
                seed: ep_seed,
                failed: false,
                totals: totals_of(&state),
                steps,
            });
            done = true;
            break;
        }
        if !done {
            return Err(SgfError::Runtime(format!(
                "episode {episode}: no complete placement within {MAX_EPISODE_RETRIES} retries"
            )));
        }
    }
    Ok(out)
}

/// Population mean/stddev of the episode-level returns.
pub fn dataset_stats(trajs: &[Trajectory]) -> Result<RtgStats> {
    let complete: Vec<&Trajectory> = trajs.iter().filter(|t| !t.failed).collect();
    if complete.is_empty() {
        return Err(SgfError::Invalid("no complete trajectories".into()));
    }
    let n = complete.len() as f64;
    let mut mu = [0.0f64; 3];
    for traj in &complete {
        let g0 = traj.episode_return();
        for i in 0..3 {
            mu[i] += g0[i];
        }
    }
    for v in &mut mu {
        *v /= n;
    }
    let mut var = [0.0f64; 3];
    for traj in &complete {
        let g0 = traj.episode_return();
        for i in 0..3 {
            let d = g0[i] - mu[i];
            var[i] += d * d;
        }
    }
    let sigma = [0, 1, 2].map(|i| (var[i] / n).sqrt());
    Ok(RtgStats::new(mu, sigma))
}

/// Inference prompt: push the wirelength component three standard
/// deviations above the dataset mean, keep the penalties neutral.
pub fn make_prompt(stats: &RtgStats) -> [f64; 3] {
    [stats.mu[0] + 3.0 * stats.sigma[0], stats.mu[1], stats.mu[2]]
}

/// Per-step training views of a replayed trajectory.
struct ReplayStep {
    features: Vec<f64>,
    action: Anchor,
    rtg: [f64; 3],
}

/// Walk a stored trajectory through a fresh environment, checking that
/// every recorded reward is reproduced exactly, and emit the per-step
/// feature vectors the models train on.
fn replay(env: &Env, traj: &Trajectory, stats: &RtgStats) -> Result<Vec<ReplayStep>> {
    let mut state = env.reset();
    let mut prev_state: Option<CanvasState> = None;
    let mut prev_action: Option<Anchor> = None;
    let mut out = Vec::with_capacity(traj.steps.len());
    for step in &traj.steps {
        let maps = env.feature_maps(prev_state.as_ref(), &state);
        let x = features(env, &state, &maps, step.rtg, stats, prev_action);
        let action = step.anchor();
        let (next, reward, _) = env.step(&state, action)?;
        if reward.as_array() != step.reward {
            return Err(SgfError::Invalid(format!(
                "trajectory step {} does not replay: stored reward {:?}, recomputed {:?}",
                step.t,
                step.reward,
                reward.as_array()
            )));
        }
        out.push(ReplayStep { features: x, action, rtg: step.rtg });
        prev_action = Some(action);
        prev_state = Some(state);
        state = next;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_role(role: Role, seed: u64) -> Self {
        TrainConfig {
            epochs: 200,
            batch: 64,
            lr: match role {
                Role::Actor => LR_ACTOR,
                Role::Critic => LR_CRITIC,
            },
            weight_decay: WEIGHT_DECAY,
            seed,
        }
    }
}

/// Flat supervised dataset extracted from labeled trajectories.
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
}

/// Build the supervised dataset for one role.
///
/// The actor maps features (which carry the previous action) to the
/// normalized action taken; the critic sees the same features with the
/// current action appended and regresses the scale-normalized
/// return-to-go.
pub fn build_dataset(
    role: Role,
    env: &Env,
    trajs: &[Trajectory],
    stats: &RtgStats,
) -> Result<Dataset> {
    let cfg = env.cfg();
    let feat_len = crate::model::feature_len(cfg.z);
    let in_dim = match role {
        Role::Actor => feat_len,
        Role::Critic => feat_len + 3,
    };
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    let mut rows = 0;
    for traj in trajs.iter().filter(|t| !t.failed) {
        for step in replay(env, traj, stats)? {
            let action_norm = normalize(step.action, &cfg).as_array();
            xs.extend(&step.features);
            match role {
                Role::Actor => ys.extend(action_norm),
                Role::Critic => {
                    xs.extend(action_norm);
                    ys.extend(stats.normalize_target(step.rtg));
                }
            }
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(SgfError::Invalid("empty training dataset".into()));
    }
    let x = Array2::from_shape_vec((rows, in_dim), xs).expect("dataset shape");
    let y = Array2::from_shape_vec((rows, 3), ys).expect("dataset shape");
    Ok(Dataset { x, y })
}

/// Offline training loop. Returns the trained network and the per-epoch
/// mean loss curve.
pub fn train(
    role: Role,
    env: &Env,
    trajs: &[Trajectory],
    stats: &RtgStats,
    cfg: &TrainConfig,
) -> Result<(Mlp, Vec<f64>)> {
    if cfg.epochs < 1 {
        return Err(SgfError::Invalid("epochs must be >= 1".into()));
    }
    let data = build_dataset(role, env, trajs, stats)?;
    let mut net = Mlp::new(role, data.x.ncols(), splitmix64(cfg.seed ^ 0x5347465f4e4554));
    let curve = train_on_dataset(&mut net, &data, cfg);
    Ok((net, curve))
}

/// Epoch/minibatch loop over a prebuilt dataset.
pub fn train_on_dataset(net: &mut Mlp, data: &Dataset, cfg: &TrainConfig) -> Vec<f64> {
    let rows = data.x.nrows();
    let batch = cfg.batch.max(1);
    let mut order: Vec<usize> = (0..rows).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ 0x53485546464c45));
    let mut curve = Vec::with_capacity(cfg.epochs);
    let mut bx = Array2::zeros((batch, data.x.ncols()));
    let mut by = Array2::zeros((batch, 3));
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        for chunk in order.chunks(batch) {
            for (r, &idx) in chunk.iter().enumerate() {
                bx.row_mut(r).assign(&data.x.row(idx));
                by.row_mut(r).assign(&data.y.row(idx));
            }
            let bx_view = bx.slice(ndarray::s![..chunk.len(), ..]);
            let by_view = by.slice(ndarray::s![..chunk.len(), ..]);
            let loss = net.train_batch(bx_view, by_view, cfg.lr, cfg.weight_decay);
            epoch_loss += loss * chunk.len() as f64;
            seen += chunk.len();
        }
        curve.push(epoch_loss / seen as f64);
    }
    curve
}

/// Frozen inference policy: actor proposal, k-NN projection, critic-guided
/// selection.
pub struct Policy<'a> {
    pub actor: &'a Mlp,
    pub critic: &'a Mlp,
    pub stats: RtgStats,
    pub k: usize,
    /// Per-component weights of the selection L1 distance.
    pub weights: [f64; 3],
}

/// Everything observable about one policy decision.
pub struct Decision {
    pub alpha: ContinuousAction,
    pub candidates: CandidateSet,
    pub predictions: Vec<[f64; 3]>,
    pub chosen: usize,
}

impl Decision {
    pub fn action(&self) -> Anchor {
        self.candidates.candidates[self.chosen].0
    }
}

impl<'a> Policy<'a> {
    /// One decision at the current state. `noise` perturbs the actor
    /// proposal (best-of-n diversification); pass `None` for the pure
    /// deterministic policy.
    pub fn decide(
        &self,
        env: &Env,
        state: &CanvasState,
        maps: &FeatureMaps,
        rtg: [f64; 3],
        prev: Option<Anchor>,
        noise: Option<&mut ChaCha8Rng>,
    ) -> Result<(Decision, Vec<f64>)> {
        let x = features(env, state, maps, rtg, &self.stats, prev);
        let mut alpha = self.actor.propose(&x);
        if let Some(rng) = noise {
            alpha.x = (alpha.x + rng.random_range(-PROPOSAL_NOISE..PROPOSAL_NOISE)).clamp(0.0, 1.0);
            alpha.y = (alpha.y + rng.random_range(-PROPOSAL_NOISE..PROPOSAL_NOISE)).clamp(0.0, 1.0);
            alpha.z = (alpha.z + rng.random_range(-PROPOSAL_NOISE..PROPOSAL_NOISE)).clamp(0.0, 1.0);
        }
        let legal = env.legal_actions(state);
        if legal.is_empty() {
            return Err(SgfError::IllegalAction("no legal anchors remain".into()));
        }
        let candidates = knn(alpha, &legal, self.k, &env.cfg())?;
        let cfg = env.cfg();
        let predictions: Vec<[f64; 3]> = candidates
            .anchors()
            .map(|a| {
                let mut xc = x.clone();
                xc.extend(normalize(a, &cfg).as_array());
                self.critic.forward_one(&xc)
            })
            .collect();
        let target = self.stats.normalize_target(rtg);
        let chosen = select_action_weighted(&predictions, target, self.weights);
        Ok((Decision { alpha, candidates, predictions, chosen }, x))
    }
}

/// One prompted autoregressive rollout. The return-to-go starts at
/// `prompt` and is decremented by each received reward (it may go
/// negative). `seed` drives only the proposal noise; with the same seed
/// the rollout is fully deterministic.
pub fn rollout(
    policy: &Policy,
    env: &Env,
    prompt: [f64; 3],
    seed: u64,
) -> Result<(Trajectory, CanvasState)> {
    let mut noise = ChaCha8Rng::seed_from_u64(seed);
    let mut state = env.reset();
    let mut prev_state: Option<CanvasState> = None;
    let mut prev_action: Option<Anchor> = None;
    let mut rtg = prompt;
    let mut steps = Vec::with_capacity(state.n_modules());
    let mut failed = false;
    while !state.done() {
        let maps = env.feature_maps(prev_state.as_ref(), &state);
        let decision =
            match policy.decide(env, &state, &maps, rtg, prev_action, Some(&mut noise)) {
                Ok((d, _)) => d,
                Err(SgfError::IllegalAction(_)) => {
                    failed = true;
                    break;
                }
                Err(e) => return Err(e),
            };
        let action = decision.action();
        let (next, reward, _) = env.step(&state, action)?;
        steps.push(StepRecord {
            t: state.t(),
            action: [action.x, action.y, action.z],
            reward: reward.as_array(),
            rtg: [0.0; 3],
        });
        for i in 0..3 {
            rtg[i] -= reward.as_array()[i];
        }
        prev_action = Some(action);
        prev_state = Some(state);
        state = next;
    }
    label_rtg(&mut steps);
    let traj = Trajectory {
        netlist: env.netlist().name.clone(),
        hash: content_hash(env.netlist()),
        seed,
        failed,
        totals: totals_of(&state),
        steps,
    };
    Ok((traj, state))
}

/// Index of the best completed rollout: smallest final wirelength, ties by
/// run order.
pub fn best_of_n(rollouts: &[Trajectory]) -> Result<usize> {
    let mut best: Option<usize> = None;
    for (i, traj) in rollouts.iter().enumerate() {
        if traj.failed {
            continue;
        }
        match best {
            Some(b) if rollouts[b].totals.wirelength <= traj.totals.wirelength => {}
            _ => best = Some(i),
        }
    }
    best.ok_or_else(|| SgfError::Runtime("all rollouts failed".into()))
}

/// Mean and variance of the critic's squared prediction error per
/// timestep, in scale-normalized units.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimestepError {
    pub t: usize,
    pub mean: [f64; 3],
    pub variance: [f64; 3],
    pub episodes: usize,
}

/// Evaluate the trained critic on held-out trajectories: at each timestep,
/// the squared error between the critic's prediction at the action actually
/// taken and the realized return-to-go.
pub fn critic_error_study(
    critic: &Mlp,
    env: &Env,
    held_out: &[Trajectory],
    stats: &RtgStats,
) -> Result<Vec<TimestepError>> {
    let horizon = env.netlist().modules.len();
    let cfg = env.cfg();
    let mut samples: Vec<Vec<[f64; 3]>> = vec![Vec::new(); horizon];
    for traj in held_out.iter().filter(|t| !t.failed) {
        for (t, step) in replay(env, traj, stats)?.into_iter().enumerate() {
            let mut x = step.features;
            x.extend(normalize(step.action, &cfg).as_array());
            let pred = critic.forward_one(&x);
            let target = stats.normalize_target(step.rtg);
            let sq = [0, 1, 2].map(|i| (pred[i] - target[i]).powi(2));
            samples[t].push(sq);
        }
    }
    Ok(samples
        .into_iter()
        .enumerate()
        .map(|(t, errs)| {
            let n = errs.len().max(1) as f64;
            let mut mean = [0.0f64; 3];
            for e in &errs {
                for i in 0..3 {
                    mean[i] += e[i];
                }
            }
            for v in &mut mean {
                *v /= n;
            }
            let mut variance = [0.0f64; 3];
            for e in &errs {
                for i in 0..3 {
                    let d = e[i] - mean[i];
                    variance[i] += d * d;
                }
            }
            for v in &mut variance {
                *v /= n;
            }
            TimestepError { t, mean, variance, episodes: errs.len() }
        })
        .collect())
}

pub fn error_curve_csv(curve: &[TimestepError]) -> String {
    let mut out = String::from(
        "t,episodes,mse_w,mse_c,mse_h,var_w,var_c,var_h\n",
    );
    for row in curve {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            row.t,
            row.episodes,
            row.mean[0],
            row.mean[1],
            row.mean[2],
            row.variance[0],
            row.variance[1],
            row.variance[2]
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// Lipschitz action-similarity bound checker
// ---------------------------------------------------------------------------

/// Limit above which the exhaustive action scan refuses to run.
pub const BOUND_CHECK_MAX_ACTIONS: usize = 500;

/// Per-step quantities of the empirical bound check.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BoundStep {
    pub rollout: usize,
    pub t: usize,
    /// Value gap of the selected action against the exhaustive optimum.
    pub delta: f64,
    /// Empirical Lipschitz estimate over all legal action pairs.
    pub l_hat: f64,
    /// Distance from the candidate set to the optimal action.
    pub d_t: f64,
    /// Distance from the actor proposal to the optimal action.
    pub delta_t: f64,
    /// Nearest-candidate radius.
    pub psi_k: f64,
    /// Observed critic error over the candidate set (denormalized).
    pub eps_c_hat: f64,
    pub holds: bool,
    /// Triangle inequality d_t <= delta_t + psi_k.
    pub triangle_holds: bool,
}

#[derive(Debug, Clone)]
pub struct BoundReport {
    pub component: usize,
    pub steps: Vec<BoundStep>,
}

impl BoundReport {
    pub fn holds_fraction(&self) -> f64 {
        if self.steps.is_empty() {
            return 1.0;
        }
        self.steps.iter().filter(|s| s.holds).count() as f64 / self.steps.len() as f64
    }

    pub fn triangle_fraction(&self) -> f64 {
        if self.steps.is_empty() {
            return 1.0;
        }
        self.steps.iter().filter(|s| s.triangle_holds).count() as f64 / self.steps.len() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("rollout,t,delta,l_hat,d_t,delta_t,psi_k,eps_c_hat,holds\n");
        for s in &self.steps {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                s.rollout, s.t, s.delta, s.l_hat, s.d_t, s.delta_t, s.psi_k, s.eps_c_hat, s.holds
            ));
        }
        out
    }
}

/// Realized scalar return of placing `action` now and then following the
/// deterministic (noise-free) policy to the end of the episode; the
/// objective is the suffix sum of the chosen reward component.
fn realized_return(
    policy: &Policy,
    env: &Env,
    state: &CanvasState,
    prev_state: Option<&CanvasState>,
    action: Anchor,
    rtg: [f64; 3],
    component: usize,
) -> Result<f64> {
    let (mut cur, reward, _) = env.step(state, action)?;
    let mut total = reward.as_array()[component];
    let mut g = rtg;
    for i in 0..3 {
        g[i] -= reward.as_array()[i];
    }
    let mut prev_action = Some(action);
    let mut prev = Some(state.clone());
    let _ = prev_state; // the pre-action diff map is rebuilt below per step
    while !cur.done() {
        let maps = env.feature_maps(prev.as_ref(), &cur);
        let decision = match policy.decide(env, &cur, &maps, g, prev_action, None) {
            Ok((d, _)) => d,
            // Dead end: the objective accumulates only what was realized.
            Err(SgfError::IllegalAction(_)) => break,
            Err(e) => return Err(e),
        };
        let a = decision.action();
        let (next, reward, _) = env.step(&cur, a)?;
        total += reward.as_array()[component];
        for i in 0..3 {
            g[i] -= reward.as_array()[i];
        }
        prev_action = Some(a);
        prev = Some(cur);
        cur = next;
    }
    Ok(total)
}

/// Run seeded rollouts on a toy-scale instance and check the one-step
/// suboptimality bound `delta <= L_hat * (delta_t + psi_k) + 2 eps_c_hat`
/// at every step, with every quantity measured empirically against an
/// exhaustive scan of the legal action set.
pub fn bound_check(
    policy: &Policy,
    env: &Env,
    prompt: [f64; 3],
    rollout_seeds: &[u64],
    component: usize,
) -> Result<BoundReport> {
    assert!(component < 3);
    let cfg = env.cfg();
    let mut steps = Vec::new();
    for (run, &seed) in rollout_seeds.iter().enumerate() {
        let mut noise = ChaCha8Rng::seed_from_u64(seed);
        let mut state = env.reset();
        let mut prev_state: Option<CanvasState> = None;
        let mut prev_action: Option<Anchor> = None;
        let mut rtg = prompt;
        while !state.done() {
            let legal = env.legal_actions(&state);
            if legal.is_empty() {
                break;
            }
            if legal.len() > BOUND_CHECK_MAX_ACTIONS {
                return Err(SgfError::Invalid(format!(
                    "action space too large for exhaustive scan: {} legal anchors (limit {})",
                    legal.len(),
                    BOUND_CHECK_MAX_ACTIONS
                )));
            }
            let maps = env.feature_maps(prev_state.as_ref(), &state);
            let (decision, _) =
                policy.decide(env, &state, &maps, rtg, prev_action, Some(&mut noise))?;

            // Exhaustive Q over the legal set under the frozen greedy policy.
            let mut q_values = Vec::with_capacity(legal.len());
            for &a in &legal {
                let q = realized_return(
                    policy,
                    env,
                    &state,
                    prev_state.as_ref(),
                    a,
                    rtg,
                    component,
                )?;
                q_values.push(q);
            }
            let mut best_idx = 0;
            for (i, &q) in q_values.iter().enumerate() {
                if q > q_values[best_idx] {
                    best_idx = i;
                }
            }
            let a_star = legal[best_idx];
            let a_star_norm = normalize(a_star, &cfg);

            // Empirical Lipschitz constant over all legal pairs.
            let norms: Vec<ContinuousAction> =
                legal.iter().map(|&a| normalize(a, &cfg)).collect();
            let mut l_hat = 0.0f64;
            for i in 0..legal.len() {
                for j in i + 1..legal.len() {
                    let dist = norms[i].dist(&norms[j]);
                    if dist > 0.0 {
                        l_hat = l_hat.max((q_values[i] - q_values[j]).abs() / dist);
                    }
                }
            }

            let chosen = decision.action();
            let chosen_idx = legal.iter().position(|&a| a == chosen).expect("candidate legal");
            let delta = q_values[best_idx] - q_values[chosen_idx];
            let delta_t = decision.alpha.dist(&a_star_norm);
            let psi_k = decision.candidates.psi_k;
            let d_t = decision
                .candidates
                .anchors()
                .map(|a| normalize(a, &cfg).dist(&a_star_norm))
                .fold(f64::INFINITY, f64::min);

            // Observed critic error over the candidate set, denormalized so
            // it shares units with the realized returns.
            let mut eps_c_hat = 0.0f64;
            for (pred, anchor) in decision.predictions.iter().zip(decision.candidates.anchors())
            {
                let denorm = policy.stats.denormalize_target(*pred)[component];
                let cand_idx =
                    legal.iter().position(|&a| a == anchor).expect("candidate legal");
                eps_c_hat = eps_c_hat.max((denorm - q_values[cand_idx]).abs());
            }

            let slack = 1e-9;
            steps.push(BoundStep {
                rollout: run,
                t: state.t(),
                delta,
                l_hat,
                d_t,
                delta_t,
                psi_k,
                eps_c_hat,
                holds: delta <= l_hat * (delta_t + psi_k) + 2.0 * eps_c_hat + slack,
                triangle_holds: d_t <= delta_t + psi_k + slack,
            });

            let (next, reward, _) = env.step(&state, chosen)?;
            for i in 0..3 {
                rtg[i] -= reward.as_array()[i];
            }
            prev_action = Some(chosen);
            prev_state = Some(state);
            state = next;
        }
    }
    Ok(BoundReport { component, steps })
}

// ---------------------------------------------------------------------------
// Trajectory store (JSON Lines)
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    netlist: String,
    hash: String,
    seed: u64,
    failed: bool,
    totals: Totals,
}

pub fn write_trajectories<W: Write>(mut w: W, trajs: &[Trajectory]) -> Result<()> {
    let io_err = |e: std::io::Error| SgfError::Runtime(format!("trajectory write: {e}"));
    for traj in trajs {
        let header = HeaderLine {
            netlist: traj.netlist.clone(),
            hash: traj.hash.clone(),
            seed: traj.seed,
            failed: traj.failed,
            totals: traj.totals,
        };
        serde_json::to_writer(&mut w, &header)
            .map_err(|e| SgfError::Runtime(format!("trajectory encode: {e}")))?;
        w.write_all(b"\n").map_err(io_err)?;
        for step in &traj.steps {
            serde_json::to_writer(&mut w, step)
                .map_err(|e| SgfError::Runtime(format!("trajectory encode: {e}")))?;
            w.write_all(b"\n").map_err(io_err)?;
        }
    }
    Ok(())
}

pub fn read_trajectories<R: BufRead>(r: R) -> Result<Vec<Trajectory>> {
    let mut out: Vec<Trajectory> = Vec::new();
    for (idx, line) in r.lines().enumerate() {
        let line = line.map_err(|e| SgfError::Runtime(format!("trajectory read: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(header) = serde_json::from_str::<HeaderLine>(&line) {
            out.push(Trajectory {
                netlist: header.netlist,
                hash: header.hash,
                seed: header.seed,
                failed: header.failed,
                totals: header.totals,
                steps: Vec::new(),
            });
            continue;
        }
        let step: StepRecord = serde_json::from_str(&line).map_err(|e| {
            SgfError::Invalid(format!("trajectory line {}: {e}", idx + 1))
        })?;
        out.last_mut()
            .ok_or_else(|| {
                SgfError::Invalid(format!("trajectory line {}: step before header", idx + 1))
            })?
            .steps
            .push(step);
    }
    Ok(out)
}
