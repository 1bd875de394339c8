//! Fixed-step integration of autonomous fields and the unrolled reverse pass.
//!
//! Gradients are computed discretize-then-optimize: the backward pass walks the
//! recorded states in reverse and differentiates every integrator stage, so the
//! result is the exact gradient of the discrete rollout. Noise added between
//! steps is part of the recorded states and acts as a constant.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::field::{DiffField, Field};
use crate::{par, Error, Result, StateVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    #[default]
    Rk4,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "rk4" => Ok(Scheme::Rk4),
            other => Err(Error::config(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Scheme, step size and step count; the horizon is `dt · n_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorSpec {
    pub scheme: Scheme,
    pub dt: f64,
    pub n_steps: usize,
}

impl IntegratorSpec {
    pub fn new(scheme: Scheme, dt: f64, n_steps: usize) -> Result<Self> {
        let spec = Self {
            scheme,
            dt,
            n_steps,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Smallest number of steps of size at most `max_dt` covering `horizon`
    /// exactly; `dt` is shrunk to `horizon / n_steps`.
    pub fn over_horizon(scheme: Scheme, max_dt: f64, horizon: f64) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::config(format!("horizon must be positive, got {horizon}")));
        }
        if !(max_dt > 0.0 && max_dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {max_dt}")));
        }
        let n_steps = ((horizon / max_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        Self::new(scheme, horizon / n_steps as f64, n_steps)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::config("n_steps must be positive"));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }
}

impl Default for IntegratorSpec {
    /// RK4 with `dt = 0.05`, 40 steps.
    fn default() -> Self {
        Self {
            scheme: Scheme::Rk4,
            dt: 0.05,
            n_steps: 40,
        }
    }
}

/// States recorded at `t0 + k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<StateVector>,
    pub dt: f64,
    pub t0: f64,
    /// Scheme that produced the states; the reverse pass must use the same one.
    pub scheme: Scheme,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn last(&self) -> StateVector {
        *self.states.last().expect("trajectory has at least two states")
    }
}

#[inline]
fn finite_or_diverged(v: StateVector) -> Result<StateVector> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Divergence { step: 0 })
    }
}

#[inline]
pub(crate) fn step_with<F: Field>(
    f: &F,
    x: StateVector,
    dt: f64,
    scheme: Scheme,
    scratch: &mut F::Scratch,
) -> Result<StateVector> {
    let next = match scheme {
        Scheme::Euler => x + f.velocity(x, scratch)? * dt,
        Scheme::Rk4 => {
            let half = 0.5 * dt;
            let k1 = f.velocity(x, scratch)?;
            let k2 = f.velocity(finite_or_diverged(x + k1 * half)?, scratch)?;
            let k3 = f.velocity(finite_or_diverged(x + k2 * half)?, scratch)?;
            let k4 = f.velocity(finite_or_diverged(x + k3 * dt)?, scratch)?;
            x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
        }
    };
    finite_or_diverged(next)
}

fn tag_step(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence { .. } => Error::Divergence { step },
        other => other,
    }
}

/// One Euler or RK4 step of the autonomous field.
pub fn step<F: Field>(f: &F, x: StateVector, dt: f64, scheme: Scheme) -> Result<StateVector> {
    if !(dt > 0.0) {
        return Err(Error::contract(format!("dt must be positive, got {dt}")));
    }
    let mut scratch = f.scratch();
    step_with(f, x, dt, scheme, &mut scratch)
}

/// Terminal state after `spec.n_steps` noiseless steps.
pub fn flow_map<F: Field>(f: &F, x0: StateVector, spec: &IntegratorSpec) -> Result<StateVector> {
    spec.validate()?;
    let mut scratch = f.scratch();
    flow_map_with(f, x0, spec, &mut scratch)
}

pub(crate) fn flow_map_with<F: Field>(
    f: &F,
    x0: StateVector,
    spec: &IntegratorSpec,
    scratch: &mut F::Scratch,
) -> Result<StateVector> {
    let mut x = x0;
    for k in 0..spec.n_steps {
        x = step_with(f, x, spec.dt, spec.scheme, scratch).map_err(|e| tag_step(e, k))?;
    }
    Ok(x)
}

/// Flow map over an arbitrary horizon; a zero horizon is the identity.
pub fn flow_map_over<F: Field>(
    f: &F,
    x0: StateVector,
    scheme: Scheme,
    max_dt: f64,
    horizon: f64,
) -> Result<StateVector> {
    if horizon == 0.0 {
        return Ok(x0);
    }
    flow_map(f, x0, &IntegratorSpec::over_horizon(scheme, max_dt, horizon)?)
}

/// Random stream for trajectory `stream` of a batch seeded with `seed`.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn simulate_with<F: Field>(
    f: &F,
    x0: StateVector,
    spec: &IntegratorSpec,
    noise_sigma: f64,
    rng: &mut ChaCha8Rng,
    scratch: &mut F::Scratch,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(spec.n_steps + 1);
    states.push(x0);
    let mut x = x0;
    for k in 0..spec.n_steps {
        x = step_with(f, x, spec.dt, spec.scheme, scratch).map_err(|e| tag_step(e, k))?;
        if noise_sigma > 0.0 {
            let nx: f64 = StandardNormal.sample(rng);
            let ny: f64 = StandardNormal.sample(rng);
            x += StateVector::new(nx, ny) * noise_sigma;
        }
        states.push(x);
    }
    Ok(Trajectory {
        states,
        dt: spec.dt,
        t0: 0.0,
        scheme: spec.scheme,
    })
}

fn check_simulation_inputs(x0: StateVector, spec: &IntegratorSpec, noise_sigma: f64) -> Result<()> {
    spec.validate()?;
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::contract(format!(
            "noise_sigma must be non-negative, got {noise_sigma}"
        )));
    }
    if !x0.is_finite() {
        return Err(Error::NumericInput(format!("initial state {x0:?}")));
    }
    Ok(())
}

/// Unrolled integration from `x0`. With `noise_sigma > 0` an independent
/// Gaussian kick is added after every step, drawn from stream 0 of `seed`.
pub fn simulate_trajectory<F: Field>(
    f: &F,
    x0: StateVector,
    spec: &IntegratorSpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<Trajectory> {
    check_simulation_inputs(x0, spec, noise_sigma)?;
    let mut rng = noise_rng(seed, 0);
    let mut scratch = f.scratch();
    simulate_with(f, x0, spec, noise_sigma, &mut rng, &mut scratch)
}

/// Integrates every initial condition; trajectory `i` draws noise from
/// stream `i` of `seed`, independent of scheduling.
pub fn simulate_batch<F: Field>(
    f: &F,
    inits: &[StateVector],
    spec: &IntegratorSpec,
    noise_sigma: f64,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    for &x0 in inits {
        check_simulation_inputs(x0, spec, noise_sigma)?;
    }
    par::map_slice(inits, |i, &x0| {
        let mut rng = noise_rng(seed, i as u64);
        let mut scratch = f.scratch();
        simulate_with(f, x0, spec, noise_sigma, &mut rng, &mut scratch)
    })
    .into_iter()
    .collect()
}

/// Gradient of `Σ_k ⟨cotangent_k, state_k⟩` with respect to the field parameters.
pub fn backprop_through_solver<F: DiffField>(
    f: &F,
    traj: &Trajectory,
    state_cotangents: &[StateVector],
) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; f.n_params()];
    backprop_accumulate(f, traj, state_cotangents, &mut grad)?;
    Ok(grad)
}

/// Like [`backprop_through_solver`] but adds into `grad_params` and returns the
/// gradient with respect to the initial state.
pub fn backprop_accumulate<F: DiffField>(
    f: &F,
    traj: &Trajectory,
    state_cotangents: &[StateVector],
    grad_params: &mut [f64],
) -> Result<StateVector> {
    if state_cotangents.len() != traj.states.len() {
        return Err(Error::contract(format!(
            "{} cotangents for {} states",
            state_cotangents.len(),
            traj.states.len()
        )));
    }
    if grad_params.len() != f.n_params() {
        return Err(Error::contract(format!(
            "gradient buffer has {} entries, field has {} parameters",
            grad_params.len(),
            f.n_params()
        )));
    }
    if traj.states.is_empty() {
        return Err(Error::contract("empty trajectory"));
    }
    let h = traj.dt;
    let mut scratch: [F::Scratch; 4] = std::array::from_fn(|_| f.scratch());
    let last = traj.states.len() - 1;
    let mut adj = state_cotangents[last];
    for k in (0..last).rev() {
        let z = traj.states[k];
        let adj_z = match traj.scheme {
            Scheme::Euler => {
                f.velocity(z, &mut scratch[0])?;
                adj + f.velocity_vjp(adj * h, &mut scratch[0], grad_params)
            }
            Scheme::Rk4 => {
                let half = 0.5 * h;
                let [s1, s2, s3, s4] = &mut scratch;
                let k1 = f.velocity(z, s1)?;
                let k2 = f.velocity(z + k1 * half, s2)?;
                let k3 = f.velocity(z + k2 * half, s3)?;
                f.velocity(z + k3 * h, s4)?;

                let w = h / 6.0;
                let mut a_z = adj;
                let mut a_k3 = adj * (2.0 * w);
                let mut a_k2 = adj * (2.0 * w);
                let mut a_k1 = adj * w;
                let g4 = f.velocity_vjp(adj * w, s4, grad_params);
                a_z += g4;
                a_k3 += g4 * h;
                let g3 = f.velocity_vjp(a_k3, s3, grad_params);
                a_z += g3;
                a_k2 += g3 * half;
                let g2 = f.velocity_vjp(a_k2, s2, grad_params);
                a_z += g2;
                a_k1 += g2 * half;
                a_z + f.velocity_vjp(a_k1, s1, grad_params)
            }
        };
        adj = adj_z + state_cotangents[k];
    }
    Ok(adj)
}

/// Parameter gradient summed over a batch, accumulated in trajectory order.
pub fn backprop_batch<F: DiffField>(
    f: &F,
    trajs: &[Trajectory],
    cotangents: &[Vec<StateVector>],
) -> Result<Vec<f64>> {
    if trajs.len() != cotangents.len() {
        return Err(Error::contract(format!(
            "{} cotangent sets for {} trajectories",
            cotangents.len(),
            trajs.len()
        )));
    }
    let parts = par::map_slice(trajs, |i, t| backprop_through_solver(f, t, &cotangents[i]));
    let mut total = vec![0.0; f.n_params()];
    for part in parts {
        for (t, g) in total.iter_mut().zip(part?) {
            *t += g;
        }
    }
    Ok(total)
}

/// Trajectory CSV: `traj_id,step,t,x,y`, one row per recorded state.
pub fn write_trajectories_csv<W: Write>(mut w: W, trajs: &[Trajectory]) -> Result<()> {
    writeln!(w, "traj_id,step,t,x,y")?;
    for (id, traj) in trajs.iter().enumerate() {
        for (k, s) in traj.states.iter().enumerate() {
            writeln!(w, "{id},{k},{},{},{}", traj.time(k), s.x, s.y)?;
        }
    }
    Ok(())
}
