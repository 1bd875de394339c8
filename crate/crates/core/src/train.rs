//! Fitting a principal flow: sample initial conditions, roll out, score with the
//! two-sided loss, backpropagate through the solver and take an Adam step.
//!
//! Every random draw comes from a stream derived from `(seed, purpose,
//! iteration)`, so a run is a pure function of its configuration.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::ShapeKind;
use crate::diffcore::{init_params, MlpArchitecture, ParamVector};
use crate::field::VelocityField;
use crate::integrate::{backprop_batch, simulate_batch, IntegratorSpec, Scheme};
use crate::loss::{nearest, principal_flow_loss, DataCloud};
use crate::{Error, Result, StateVector};

pub const ADAM_EPSILON: f64 = 1e-8;

/// Step size of training rollouts.
pub const DEFAULT_DT: f64 = 0.05;

const INIT_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

/// Neighbours per node in the graph used by [`data_horizon`].
const HORIZON_NEIGHBOURS: usize = 10;

/// splitmix64 finaliser over the combined inputs.
pub fn derive_seed(seed: u64, purpose: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(purpose.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Isotropic Gaussian over initial conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitDistribution {
    pub mean: StateVector,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub arch: MlpArchitecture,
    pub integrator: IntegratorSpec,
    pub n_trajectories: usize,
    pub init_distribution: InitDistribution,
    /// Per-component std of the Gaussian kick added after every training step.
    pub noise_sigma: f64,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub n_iterations: usize,
    pub seed: u64,
    /// Iterations over which the rollout horizon grows linearly from
    /// `warmup_start_fraction` of `integrator.n_steps` to all of it. 0 disables.
    pub horizon_warmup: usize,
    pub warmup_start_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: MlpArchitecture::default_field(),
            integrator: IntegratorSpec::default(),
            n_trajectories: 32,
            init_distribution: InitDistribution {
                mean: StateVector::ZERO,
                sigma: 0.02,
            },
            noise_sigma: 0.0,
            learning_rate: 1e-3,
            adam_betas: (0.9, 0.999),
            n_iterations: 2000,
            seed: 0,
            horizon_warmup: 500,
            warmup_start_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    /// Defaults anchored at the shape's start point, with the RK4 horizon set by
    /// [`data_horizon`] at `dt = 0.05`.
    pub fn for_shape(kind: ShapeKind, data: &DataCloud) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.init_distribution.mean = kind.anchor();
        let n_steps = (data_horizon(data, kind.anchor()) / DEFAULT_DT).ceil().max(1.0) as usize;
        cfg.integrator = IntegratorSpec::new(Scheme::Rk4, DEFAULT_DT, n_steps)?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.integrator.validate()?;
        if self.n_trajectories == 0 {
            return Err(Error::config("n_trajectories must be positive"));
        }
        if self.n_iterations == 0 {
            return Err(Error::config("n_iterations must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return Err(Error::config(format!("adam betas must lie in [0, 1), got ({b1}, {b2})")));
        }
        if !(self.init_distribution.sigma >= 0.0 && self.init_distribution.sigma.is_finite()) {
            return Err(Error::config("init sigma must be non-negative"));
        }
        if !self.init_distribution.mean.is_finite() {
            return Err(Error::config("init mean must be finite"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::config("noise_sigma must be non-negative"));
        }
        if !(self.warmup_start_fraction > 0.0 && self.warmup_start_fraction <= 1.0) {
            return Err(Error::config("warmup_start_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Rollout integrator used at `iteration`, following the horizon warm-up.
    pub fn integrator_at(&self, iteration: usize) -> IntegratorSpec {
        if iteration >= self.horizon_warmup {
            return self.integrator;
        }
        let progress = iteration as f64 / self.horizon_warmup as f64;
        let fraction = self.warmup_start_fraction + (1.0 - self.warmup_start_fraction) * progress;
        let n_steps = ((self.integrator.n_steps as f64 * fraction - 1e-9).ceil() as usize).clamp(1, self.integrator.n_steps);
        IntegratorSpec {
            n_steps,
            ..self.integrator
        }
    }
}

/// Longest shortest-path distance from `start` to any data point through a
/// symmetric k-nearest-neighbour graph of the cloud: the arc length a
/// unit-speed trajectory needs to reach the far end of the data.
///
/// Never less than the largest straight-line distance from `start`.
pub fn data_horizon(data: &DataCloud, start: StateVector) -> f64 {
    let mut nodes = Vec::with_capacity(data.len() + 1);
    nodes.push(start);
    nodes.extend_from_slice(&data.points);
    let n = nodes.len();
    let k = HORIZON_NEIGHBOURS.min(n - 1);
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        let mut d: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (nodes[i].distance(nodes[j]), j))
            .collect();
        d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(w, j) in d.iter().take(k) {
            adj[i].push((j, w));
            adj[j].push((i, w));
        }
    }
    let mut dist = vec![f64::INFINITY; n];
    dist[0] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((OrdF64(0.0), 0usize)));
    while let Some(Reverse((OrdF64(d), u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Reverse((OrdF64(nd), v)));
            }
        }
    }
    let geodesic = dist.iter().copied().filter(|d| d.is_finite()).fold(0.0, f64::max);
    let straight = data.points.iter().map(|p| p.distance(start)).fold(0.0, f64::max);
    geodesic.max(straight)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// `n_trajectories` draws from the initial-condition distribution for `iteration`.
pub fn sample_initial_conditions(cfg: &TrainConfig, iteration: usize) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, INIT_STREAM, iteration as u64));
    let InitDistribution { mean, sigma } = cfg.init_distribution;
    (0..cfg.n_trajectories)
        .map(|_| {
            let nx: f64 = StandardNormal.sample(&mut rng);
            let ny: f64 = StandardNormal.sample(&mut rng);
            mean + StateVector::new(nx, ny) * sigma
        })
        .collect()
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() || params.len() != state.v.len() {
        return Err(Error::contract(format!(
            "adam shapes differ: params {}, grads {}, moments {}/{}",
            params.len(),
            grads.len(),
            state.m.len(),
            state.v.len()
        )));
    }
    let (b1, b2) = betas;
    state.t += 1;
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub term1: f64,
    pub term2: f64,
    pub total: f64,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss_history: Vec<f64>,
    pub records: Vec<IterationRecord>,
    pub final_params: ParamVector,
    /// Seconds.
    pub wall_time: f64,
}

/// Training log CSV: `iteration,term1,term2,total,wall_ms`.
pub fn write_training_log_csv<W: Write>(mut w: W, records: &[IterationRecord]) -> Result<()> {
    writeln!(w, "iteration,term1,term2,total,wall_ms")?;
    for r in records {
        writeln!(w, "{},{},{},{},{:.3}", r.iteration, r.term1, r.term2, r.total, r.wall_ms)?;
    }
    Ok(())
}

pub fn fit_principal_flow(cfg: &TrainConfig, data: &DataCloud) -> Result<TrainReport> {
    fit_principal_flow_with(cfg, data, None, |_, _| {})
}

/// Fits from `initial` (or a fresh init from `cfg.seed`), calling `observer`
/// after every update with that iteration's record and the new parameters.
pub fn fit_principal_flow_with<O>(
    cfg: &TrainConfig,
    data: &DataCloud,
    initial: Option<ParamVector>,
    mut observer: O,
) -> Result<TrainReport>
where
    O: FnMut(&IterationRecord, &ParamVector),
{
    cfg.validate()?;
    let params = match initial {
        Some(p) if p.arch() != &cfg.arch => {
            return Err(Error::config("initial parameters do not match the configured architecture"))
        }
        Some(p) => p,
        None => init_params(&cfg.arch, cfg.seed),
    };
    let mut field = VelocityField::new(params);
    let mut adam = AdamState::new(field.params().len());
    let start = Instant::now();
    let mut records = Vec::with_capacity(cfg.n_iterations);

    for it in 0..cfg.n_iterations {
        let inits = sample_initial_conditions(cfg, it);
        let noise_seed = derive_seed(cfg.seed, NOISE_STREAM, it as u64);
        let trajs = simulate_batch(&field, &inits, &cfg.integrator_at(it), cfg.noise_sigma, noise_seed)
            .map_err(|e| e.at_iteration(it))?;
        let loss = principal_flow_loss(&trajs, data).map_err(|e| e.at_iteration(it))?;
        if !loss.total.is_finite() {
            return Err(Error::NumericInput(format!("loss {}", loss.total)).at_iteration(it));
        }
        let grad = backprop_batch(&field, &trajs, &loss.state_gradients).map_err(|e| e.at_iteration(it))?;
        update_params(&mut field, &grad, &mut adam, cfg).map_err(|e| e.at_iteration(it))?;

        let record = IterationRecord {
            iteration: it,
            term1: loss.traj_to_data,
            term2: loss.data_to_traj,
            total: loss.total,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer(&record, field.params());
        records.push(record);
    }

    Ok(TrainReport {
        loss_history: records.iter().map(|r| r.total).collect(),
        records,
        final_params: field.into_params(),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

pub(crate) fn update_params(
    field: &mut VelocityField,
    grad: &[f64],
    adam: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NumericInput(format!("gradient entry {i} is not finite")));
    }
    let values = field.params_mut().values_mut();
    adam_step(values, grad, adam, cfg.learning_rate, cfg.adam_betas, ADAM_EPSILON)?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("parameters became non-finite".into()));
    }
    Ok(())
}

/// Mean distance from each state to its nearest data point.
pub fn mean_nearest_data_distance(states: &[StateVector], data: &DataCloud) -> f64 {
    states.iter().map(|&s| nearest(s, &data.points).1).sum::<f64>() / states.len() as f64
}
