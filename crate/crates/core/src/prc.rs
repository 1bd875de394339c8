//! Phase response curves of a planar oscillator.
//!
//! The oscillator state is a point in the plane read as `(phase, amplitude)`
//! in polar form; the unperturbed orbit is the unit circle travelled
//! counter-clockwise at unit speed, so the period is `2π`.
//!
//! A perturbation scales the amplitude by an additive kick while keeping the
//! phase. The phase shift is read after a relaxation horizon as the angle of the
//! perturbed state minus the angle of an unperturbed reference started at the
//! same point, wrapped to `(−180°, 180°]`. Positive shifts are advances.

use std::f64::consts::{PI, TAU};
use std::io::Write;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{init_params, Activation, MlpArchitecture, ParamVector};
use crate::field::{Field, VelocityField};
use crate::ftle::FTLEGrid;
use crate::integrate::{backprop_batch, simulate_batch, step_with, IntegratorSpec, Scheme, Trajectory};
use crate::loss::{prc_mse, unit_circle_penalty_states};
use crate::train::{derive_seed, update_params, AdamState, IterationRecord, TrainConfig, TrainReport};
use crate::{Error, Result, StateVector};

const WARM_START_STREAM: u64 = 3;

/// A perturbed trajectory must end with `|a − 1|` below this to count as relaxed.
pub const RELAXED_TOLERANCE: f64 = 0.1;

/// Coefficients of `M(φ) = σ_φ − A1 sin(φ − ξ1) − A2 sin(2φ + ξ2)`, times `scale`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRCParams {
    pub sigma_phi: f64,
    pub xi1: f64,
    pub xi2: f64,
    pub a1: f64,
    pub a2: f64,
    pub scale: f64,
}

impl Default for PRCParams {
    fn default() -> Self {
        Self {
            sigma_phi: 0.05,
            xi1: 0.0,
            xi2: 0.0,
            a1: 0.4,
            a2: 0.2,
            scale: 100.0,
        }
    }
}

impl PRCParams {
    pub fn evaluate(&self, phi: f64) -> f64 {
        (self.sigma_phi - self.a1 * (phi - self.xi1).sin() - self.a2 * (2.0 * phi + self.xi2).sin()) * self.scale
    }
}

/// Phase and amplitude of an oscillator state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OscState {
    pub phase: f64,
    pub amplitude: f64,
}

impl OscState {
    pub fn new(phase: f64, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude.is_finite()) || !phase.is_finite() {
            return Err(Error::contract(format!(
                "invalid oscillator state (phase {phase}, amplitude {amplitude})"
            )));
        }
        Ok(Self {
            phase: phase.rem_euclid(TAU),
            amplitude,
        })
    }

    pub fn from_state(s: StateVector) -> Result<Self> {
        Self::new(s.y.atan2(s.x), s.norm())
    }

    pub fn to_state(self) -> StateVector {
        StateVector::new(self.amplitude * self.phase.cos(), self.amplitude * self.phase.sin())
    }
}

/// Adds `delta_a` to the amplitude, keeping the phase.
pub fn apply_perturbation(s: OscState, delta_a: f64) -> Result<OscState> {
    let amplitude = s.amplitude + delta_a;
    if !(amplitude > 0.0) {
        return Err(Error::contract(format!(
            "perturbation {delta_a} leaves non-positive amplitude {amplitude}"
        )));
    }
    Ok(OscState {
        phase: s.phase,
        amplitude,
    })
}

/// A sampled phase response curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PRCCurve {
    pub phases: Vec<f64>,
    pub shifts: Vec<f64>,
}

impl PRCCurve {
    pub fn new(phases: Vec<f64>, shifts: Vec<f64>) -> Result<Self> {
        if phases.len() != shifts.len() {
            return Err(Error::contract(format!(
                "{} phases but {} shifts",
                phases.len(),
                shifts.len()
            )));
        }
        if phases.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::contract("phases must be strictly increasing"));
        }
        if phases.iter().any(|p| !(0.0..TAU).contains(p)) {
            return Err(Error::contract("phases must lie in [0, 2π)"));
        }
        Ok(Self { phases, shifts })
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }
}

/// `n` uniform phases `k · 2π / n`.
pub fn uniform_phases(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::config("phase grid must have at least one sample"));
    }
    Ok((0..n).map(|k| k as f64 * TAU / n as f64).collect())
}

pub fn target_prc(phases: &[f64], p: &PRCParams) -> Result<PRCCurve> {
    PRCCurve::new(phases.to_vec(), phases.iter().map(|&phi| p.evaluate(phi)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftUnit {
    #[default]
    Degrees,
    Radians,
}

impl ShiftUnit {
    /// Multiplier from radians.
    pub fn per_radian(self) -> f64 {
        match self {
            ShiftUnit::Degrees => 180.0 / PI,
            ShiftUnit::Radians => 1.0,
        }
    }
}

/// Wraps an angle difference into `(−π, π]`.
pub fn wrap_angle(d: f64) -> f64 {
    let w = d.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

fn angle(s: StateVector) -> f64 {
    s.y.atan2(s.x)
}

/// `∂ atan2(y, x) / ∂(x, y)`.
fn angle_gradient(s: StateVector) -> StateVector {
    let r2 = s.norm_squared();
    StateVector::new(-s.y / r2, s.x / r2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseShift {
    pub shift: f64,
    /// Whether the perturbed state ended within [`RELAXED_TOLERANCE`] of the unit circle.
    pub relaxed: bool,
}

fn check_relax(relax: &IntegratorSpec) -> Result<()> {
    relax.validate()?;
    if relax.horizon() < TAU * (1.0 - 1e-9) {
        return Err(Error::contract(format!(
            "relaxation horizon {} is shorter than one period (2π)",
            relax.horizon()
        )));
    }
    Ok(())
}

fn start_points(phi0: f64, delta_a: f64) -> Result<(StateVector, StateVector)> {
    let reference = OscState::new(phi0, 1.0)?;
    let kicked = apply_perturbation(reference, delta_a)?;
    Ok((reference.to_state(), kicked.to_state()))
}

fn shift_between(perturbed: StateVector, reference: StateVector, unit: ShiftUnit) -> PhaseShift {
    PhaseShift {
        shift: wrap_angle(angle(perturbed) - angle(reference)) * unit.per_radian(),
        relaxed: (perturbed.norm() - 1.0).abs() < RELAXED_TOLERANCE,
    }
}

/// Phase shift in degrees caused by an amplitude kick `delta_a` at phase `phi0`.
pub fn measure_phase_shift<F: Field>(
    f: &F,
    phi0: f64,
    delta_a: f64,
    relax: &IntegratorSpec,
) -> Result<PhaseShift> {
    measure_phase_shift_in(f, phi0, delta_a, relax, ShiftUnit::Degrees)
}

pub fn measure_phase_shift_in<F: Field>(
    f: &F,
    phi0: f64,
    delta_a: f64,
    relax: &IntegratorSpec,
    unit: ShiftUnit,
) -> Result<PhaseShift> {
    check_relax(relax)?;
    let (reference, kicked) = start_points(phi0, delta_a)?;
    let ends = simulate_batch(f, &[reference, kicked], relax, 0.0, 0)?;
    Ok(shift_between(ends[1].last(), ends[0].last(), unit))
}

/// A simulated curve plus the relaxation flag of every sample.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPrc {
    pub curve: PRCCurve,
    pub relaxed: Vec<bool>,
}

pub fn simulate_prc<F: Field>(
    f: &F,
    phases: &[f64],
    delta_a: f64,
    relax: &IntegratorSpec,
) -> Result<SimulatedPrc> {
    simulate_prc_in(f, phases, delta_a, relax, ShiftUnit::Degrees)
}

pub fn simulate_prc_in<F: Field>(
    f: &F,
    phases: &[f64],
    delta_a: f64,
    relax: &IntegratorSpec,
    unit: ShiftUnit,
) -> Result<SimulatedPrc> {
    let rollout = rollout_prc(f, phases, delta_a, relax)?;
    let n = phases.len();
    let (shifts, relaxed) = (0..n)
        .map(|k| {
            let s = shift_between(rollout[n + k].last(), rollout[k].last(), unit);
            (s.shift, s.relaxed)
        })
        .unzip();
    Ok(SimulatedPrc {
        curve: PRCCurve::new(phases.to_vec(), shifts)?,
        relaxed,
    })
}

/// References for every phase followed by the kicked copies.
fn rollout_prc<F: Field>(f: &F, phases: &[f64], delta_a: f64, relax: &IntegratorSpec) -> Result<Vec<Trajectory>> {
    check_relax(relax)?;
    let mut starts = Vec::with_capacity(2 * phases.len());
    let mut kicked = Vec::with_capacity(phases.len());
    for &phi in phases {
        let (r, k) = start_points(phi, delta_a)?;
        starts.push(r);
        kicked.push(k);
    }
    starts.extend(kicked);
    simulate_batch(f, &starts, relax, 0.0, 0)
}

/// Supervised pre-fit of the raw network toward a stable unit limit cycle,
/// `v = t̂ + gain · (1 − r) r̂`, on samples from an annulus around it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WarmStart {
    pub iterations: usize,
    pub batch: usize,
    pub learning_rate: f64,
    pub radial_gain: f64,
    pub r_min: f64,
    pub r_max: f64,
}

impl Default for WarmStart {
    fn default() -> Self {
        Self {
            iterations: 1500,
            batch: 64,
            learning_rate: 3e-3,
            radial_gain: 1.0,
            r_min: 0.5,
            r_max: 1.5,
        }
    }
}

/// Unnormalised limit-cycle field used as the warm-start target.
pub fn limit_cycle_velocity(p: StateVector, radial_gain: f64) -> StateVector {
    let r = p.norm();
    let radial = p * (1.0 / r);
    let tangent = StateVector::new(-radial.y, radial.x);
    tangent + radial * (radial_gain * (1.0 - r))
}

pub fn warm_start_params(params: ParamVector, ws: &WarmStart, seed: u64) -> Result<ParamVector> {
    let mut params = params;
    let mut adam = AdamState::new(params.len());
    let mut scratch = params.scratch();
    let mut grad = vec![0.0; params.len()];
    for it in 0..ws.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, WARM_START_STREAM, it as u64));
        grad.iter_mut().for_each(|g| *g = 0.0);
        let scale = 2.0 / ws.batch as f64;
        for _ in 0..ws.batch {
            let r = rng.gen_range(ws.r_min..ws.r_max);
            let a = rng.gen_range(0.0..TAU);
            let p = StateVector::new(r * a.cos(), r * a.sin());
            let target = limit_cycle_velocity(p, ws.radial_gain);
            let out = params.forward_with(p.into(), &mut scratch);
            let cot = [(out[0] - target.x) * scale, (out[1] - target.y) * scale];
            params.backward_accumulate(cot, &mut scratch, &mut grad);
        }
        crate::train::adam_step(
            params.values_mut(),
            &grad,
            &mut adam,
            ws.learning_rate,
            (0.9, 0.999),
            crate::train::ADAM_EPSILON,
        )?;
    }
    if params.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericInput("warm start produced non-finite parameters".into()));
    }
    Ok(params)
}

/// Settings for fitting a field to a phase response curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrcFitConfig {
    /// Architecture, optimiser settings, iteration count and seed. The
    /// integrator is the relaxation rollout; trajectory sampling, noise and
    /// horizon warm-up fields are unused.
    pub train: TrainConfig,
    pub delta_a: f64,
    pub lambda_circle: f64,
    pub unit: ShiftUnit,
    pub warm_start: WarmStart,
    /// Return the parameters with the lowest total loss seen rather than the
    /// last iterate.
    pub keep_best: bool,
}

/// Default RK4 step of the relaxation rollout.
pub const DEFAULT_RELAX_DT: f64 = 0.1;

/// Three periods of RK4 steps of [`DEFAULT_RELAX_DT`].
pub fn default_relax() -> IntegratorSpec {
    IntegratorSpec::new(Scheme::Rk4, DEFAULT_RELAX_DT, (3.0 * TAU / DEFAULT_RELAX_DT).ceil() as usize).expect("valid")
}

impl Default for PrcFitConfig {
    fn default() -> Self {
        let train = TrainConfig {
            arch: MlpArchitecture::new(vec![2, 32, 32, 2], Activation::Tanh).expect("valid"),
            integrator: default_relax(),
            learning_rate: 2e-4,
            n_iterations: 800,
            ..TrainConfig::default()
        };
        Self {
            train,
            delta_a: 0.1,
            lambda_circle: 1e4,
            unit: ShiftUnit::Degrees,
            warm_start: WarmStart::default(),
            keep_best: true,
        }
    }
}

/// Default number of phase samples.
pub const DEFAULT_PHASES: usize = 64;

/// Loss and per-trajectory cotangents for one PRC rollout.
struct PrcObjective {
    mse: f64,
    penalty: f64,
    cotangents: Vec<Vec<StateVector>>,
}

fn prc_objective(
    rollout: &[Trajectory],
    target: &PRCCurve,
    lambda_circle: f64,
    unit: ShiftUnit,
) -> Result<PrcObjective> {
    let n = target.len();
    let scale = unit.per_radian();
    let shifts = (0..n)
        .map(|k| wrap_angle(angle(rollout[n + k].last()) - angle(rollout[k].last())) * scale)
        .collect();
    let simulated = PRCCurve {
        phases: target.phases.clone(),
        shifts,
    };
    let (mse, d_shift) = prc_mse(target, &simulated)?;

    let mut cotangents: Vec<Vec<StateVector>> = Vec::with_capacity(2 * n);
    let mut penalty = 0.0;
    for reference in &rollout[..n] {
        let (value, grads) = unit_circle_penalty_states(&reference.states)?;
        penalty += value / n as f64;
        cotangents.push(grads.into_iter().map(|g| g * (lambda_circle / n as f64)).collect());
    }
    for kicked in &rollout[n..] {
        cotangents.push(vec![StateVector::ZERO; kicked.len()]);
    }
    for k in 0..n {
        let w = d_shift[k] * scale;
        let last_ref = rollout[k].len() - 1;
        let last_kick = rollout[n + k].len() - 1;
        cotangents[k][last_ref] += angle_gradient(rollout[k].last()) * (-w);
        cotangents[n + k][last_kick] += angle_gradient(rollout[n + k].last()) * w;
    }
    Ok(PrcObjective {
        mse,
        penalty,
        cotangents,
    })
}

/// Total loss `prc_mse + λ · circle penalty` of a field against a target.
pub fn prc_loss<F: Field>(f: &F, target: &PRCCurve, cfg: &PrcFitConfig) -> Result<(f64, f64)> {
    let rollout = rollout_prc(f, &target.phases, cfg.delta_a, &cfg.train.integrator)?;
    let obj = prc_objective(&rollout, target, cfg.lambda_circle, cfg.unit)?;
    Ok((obj.mse, obj.penalty))
}

/// Gradient of [`prc_loss`]'s weighted total with respect to the field parameters.
pub fn prc_gradient(f: &VelocityField, target: &PRCCurve, cfg: &PrcFitConfig) -> Result<(f64, f64, Vec<f64>)> {
    let rollout = rollout_prc(f, &target.phases, cfg.delta_a, &cfg.train.integrator)?;
    let obj = prc_objective(&rollout, target, cfg.lambda_circle, cfg.unit)?;
    let grad = backprop_batch(f, &rollout, &obj.cotangents)?;
    Ok((obj.mse, obj.penalty, grad))
}

pub fn fit_prc(cfg: &PrcFitConfig, target: &PRCCurve) -> Result<TrainReport> {
    fit_prc_with(cfg, target, None, |_, _| {})
}

/// Fits from `initial`, or from a warm-started fresh init when `None`.
///
/// Log records carry `term1 = prc_mse`, `term2 = circle penalty` and
/// `total = term1 + λ · term2`.
pub fn fit_prc_with<O>(
    cfg: &PrcFitConfig,
    target: &PRCCurve,
    initial: Option<ParamVector>,
    mut observer: O,
) -> Result<TrainReport>
where
    O: FnMut(&IterationRecord, &ParamVector),
{
    cfg.train.validate()?;
    check_relax(&cfg.train.integrator)?;
    if !(cfg.lambda_circle > 0.0) {
        return Err(Error::config("lambda_circle must be positive"));
    }
    if target.is_empty() {
        return Err(Error::config("target PRC is empty"));
    }
    let start = Instant::now();
    let params = match initial {
        Some(p) => p,
        None => warm_start_params(init_params(&cfg.train.arch, cfg.train.seed), &cfg.warm_start, cfg.train.seed)?,
    };
    let mut field = VelocityField::new(params);
    let mut adam = AdamState::new(field.params().len());
    let mut records = Vec::with_capacity(cfg.train.n_iterations);
    let mut best: Option<(f64, ParamVector)> = None;
    for it in 0..cfg.train.n_iterations {
        let (mse, penalty, grad) = prc_gradient(&field, target, cfg).map_err(|e| e.at_iteration(it))?;
        let total = mse + cfg.lambda_circle * penalty;
        if !total.is_finite() {
            return Err(Error::NumericInput(format!("loss {total}")).at_iteration(it));
        }
        if cfg.keep_best && best.as_ref().is_none_or(|(b, _)| total < *b) {
            best = Some((total, field.params().clone()));
        }
        update_params(&mut field, &grad, &mut adam, &cfg.train).map_err(|e| e.at_iteration(it))?;
        let record = IterationRecord {
            iteration: it,
            term1: mse,
            term2: penalty,
            total,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        };
        observer(&record, field.params());
        records.push(record);
    }
    Ok(TrainReport {
        loss_history: records.iter().map(|r| r.total).collect(),
        records,
        final_params: best.map_or_else(|| field.into_params(), |(_, p)| p),
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Time for the unperturbed orbit from `phi0` on the unit circle to wind once,
/// linearly interpolated between steps. `None` if it does not wind within `max_time`.
pub fn return_time<F: Field>(f: &F, phi0: f64, scheme: Scheme, dt: f64, max_time: f64) -> Result<Option<f64>> {
    let mut scratch = f.scratch();
    let mut x = OscState::new(phi0, 1.0)?.to_state();
    let mut wound = 0.0;
    let mut t = 0.0;
    while t < max_time {
        let next = step_with(f, x, dt, scheme, &mut scratch)?;
        let d = wrap_angle(angle(next) - angle(x));
        if wound + d >= TAU {
            let frac = (TAU - wound) / d;
            return Ok(Some(t + frac * dt));
        }
        wound += d;
        x = next;
        t += dt;
    }
    Ok(None)
}

/// Amplitudes `|x|` of the unperturbed orbit from `phi0` over `horizon`.
pub fn orbit_amplitudes<F: Field>(f: &F, phi0: f64, spec: &IntegratorSpec) -> Result<Vec<f64>> {
    let start = OscState::new(phi0, 1.0)?.to_state();
    let t = crate::integrate::simulate_trajectory(f, start, spec, 0.0, 0)?;
    Ok(t.states.iter().map(|s| s.norm()).collect())
}

/// FTLE interpolated at the unit-circle point of every phase.
pub fn circle_ftle(grid: &FTLEGrid, phases: &[f64]) -> Vec<Option<f64>> {
    phases
        .iter()
        .map(|&phi| grid.sample(StateVector::new(phi.cos(), phi.sin())))
        .collect()
}

/// PRC CSV: `phi_rad,target_shift,simulated_shift,relaxed_flag`.
pub fn write_prc_csv<W: Write>(mut w: W, target: &PRCCurve, simulated: &SimulatedPrc) -> Result<()> {
    if target.phases != simulated.curve.phases {
        return Err(Error::contract("target and simulated curves use different phase grids"));
    }
    writeln!(w, "phi_rad,target_shift,simulated_shift,relaxed_flag")?;
    for k in 0..target.len() {
        writeln!(
            w,
            "{},{},{},{}",
            target.phases[k], target.shifts[k], simulated.curve.shifts[k], simulated.relaxed[k]
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{LinearField, RotationField};

    #[test]
    fn target_values() {
        let p = PRCParams::default();
        let c = target_prc(&[0.0, PI / 2.0, PI], &p).unwrap();
        assert!((c.shifts[0] - 5.0).abs() < 1e-12);
        assert!((c.shifts[1] + 35.0).abs() < 1e-12);
        assert!((c.shifts[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn perturbation_keeps_phase() {
        let s = apply_perturbation(OscState::new(0.0, 1.0).unwrap(), 0.1).unwrap().to_state();
        assert!((s.x - 1.1).abs() < 1e-15 && s.y.abs() < 1e-15);
        let s = apply_perturbation(OscState::new(PI / 2.0, 1.0).unwrap(), -0.2).unwrap().to_state();
        assert!(s.x.abs() < 1e-15 && (s.y - 0.8).abs() < 1e-15);
        let o = OscState::new(1.3, 0.7).unwrap();
        assert_eq!(apply_perturbation(o, 0.0).unwrap(), o);
        assert!(apply_perturbation(o, -0.7).is_err());
    }

    #[test]
    fn curve_validation() {
        assert!(PRCCurve::new(vec![0.0, 1.0], vec![0.0]).is_err());
        assert!(PRCCurve::new(vec![1.0, 0.5], vec![0.0, 0.0]).is_err());
        assert!(PRCCurve::new(vec![0.0, 7.0], vec![0.0, 0.0]).is_err());
        assert!(uniform_phases(0).is_err());
        assert_eq!(uniform_phases(4).unwrap()[2], PI);
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
    }

    #[test]
    fn rigid_rotation_has_no_phase_response() {
        let f = LinearField::rigid_rotation();
        let relax = default_relax();
        let phases = uniform_phases(16).unwrap();
        for &da in &[0.1, -0.3, 0.5] {
            let sim = simulate_prc(&f, &phases, da, &relax).unwrap();
            assert!(sim.curve.shifts.iter().all(|s| s.abs() < 1e-9), "{:?}", sim.curve.shifts);
        }
    }

    #[test]
    fn unit_speed_rotation_lags_when_kicked_outward() {
        // angular speed is 1 / r, so after time T the kicked copy trails by T (1/r − 1)
        let f = RotationField::default();
        let relax = default_relax();
        let t = relax.horizon();
        for &da in &[0.3, -0.2] {
            let r = 1.0 + da;
            let expected = wrap_angle(t / (r + f.epsilon) - t / (1.0 + f.epsilon)).to_degrees();
            for &phi in &[0.0, 2.0, 5.5] {
                let s = measure_phase_shift(&f, phi, da, &relax).unwrap();
                assert!((s.shift - expected).abs() < 1e-3, "{} vs {expected}", s.shift);
                assert!(!s.relaxed);
            }
        }
        let s = measure_phase_shift(&f, 1.0, 0.0, &relax).unwrap();
        assert_eq!(s.shift, 0.0);
        assert!(s.relaxed);
    }

    #[test]
    fn relax_horizon_must_cover_a_period() {
        let short = IntegratorSpec::new(Scheme::Rk4, 0.05, 10).unwrap();
        assert!(measure_phase_shift(&RotationField::default(), 0.0, 0.1, &short).is_err());
    }

    #[test]
    fn simulate_prc_shape_and_determinism() {
        let f = VelocityField::new(
            warm_start_params(
                init_params(&MlpArchitecture::new(vec![2, 16, 16, 2], Activation::Tanh).unwrap(), 1),
                &WarmStart { iterations: 200, ..WarmStart::default() },
                1,
            )
            .unwrap(),
        );
        let phases = uniform_phases(8).unwrap();
        let relax = IntegratorSpec::new(Scheme::Rk4, 0.1, 63).unwrap();
        let a = simulate_prc(&f, &phases, 0.1, &relax).unwrap();
        let b = simulate_prc(&f, &phases, 0.1, &relax).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.curve.len(), 8);
        let zero = simulate_prc(&f, &phases, 0.0, &relax).unwrap();
        assert!(zero.curve.shifts.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn prc_gradient_matches_finite_differences() {
        let arch = MlpArchitecture::new(vec![2, 6, 6, 2], Activation::Tanh).unwrap();
        let p = warm_start_params(init_params(&arch, 4), &WarmStart { iterations: 300, ..WarmStart::default() }, 4).unwrap();
        let cfg = PrcFitConfig {
            train: TrainConfig {
                arch: arch.clone(),
                integrator: IntegratorSpec::new(Scheme::Rk4, 0.2, 32).unwrap(),
                ..TrainConfig::default()
            },
            lambda_circle: 2.0,
            ..PrcFitConfig::default()
        };
        let target = target_prc(&uniform_phases(5).unwrap(), &PRCParams::default()).unwrap();
        let f = VelocityField::new(p.clone());
        let (_, _, grad) = prc_gradient(&f, &target, &cfg).unwrap();
        let total = |values: Vec<f64>| {
            let g = VelocityField::new(ParamVector::from_values(arch.clone(), values).unwrap());
            let (m, pen) = prc_loss(&g, &target, &cfg).unwrap();
            m + cfg.lambda_circle * pen
        };
        let h = 1e-6;
        for k in 0..grad.len() {
            let mut plus = p.values().to_vec();
            let mut minus = p.values().to_vec();
            plus[k] += h;
            minus[k] -= h;
            let fd = (total(plus) - total(minus)) / (2.0 * h);
            let scale = fd.abs().max(grad[k].abs()).max(1e-3);
            assert!((fd - grad[k]).abs() / scale < 1e-4, "param {k}: {fd} vs {}", grad[k]);
        }
    }

    #[test]
    fn keep_best_returns_lowest_loss_iterate() {
        let cfg = PrcFitConfig {
            train: TrainConfig {
                arch: MlpArchitecture::new(vec![2, 6, 6, 2], Activation::Tanh).unwrap(),
                integrator: IntegratorSpec::new(Scheme::Rk4, 0.2, 32).unwrap(),
                n_iterations: 12,
                learning_rate: 3e-2,
                ..TrainConfig::default()
            },
            warm_start: WarmStart { iterations: 100, ..WarmStart::default() },
            ..PrcFitConfig::default()
        };
        let target = target_prc(&uniform_phases(6).unwrap(), &PRCParams::default()).unwrap();
        let report = fit_prc(&cfg, &target).unwrap();
        let min = report.loss_history.iter().cloned().fold(f64::INFINITY, f64::min);
        let (m, pen) = prc_loss(&VelocityField::new(report.final_params), &target, &cfg).unwrap();
        assert_eq!(m + cfg.lambda_circle * pen, min);

        let last = fit_prc(&PrcFitConfig { keep_best: false, ..cfg.clone() }, &target).unwrap();
        assert_eq!(last.loss_history, report.loss_history);
    }

    #[test]
    fn zero_target_from_near_rotation_stays_small() {
        let cfg = PrcFitConfig {
            train: TrainConfig {
                arch: MlpArchitecture::new(vec![2, 16, 16, 2], Activation::Tanh).unwrap(),
                integrator: IntegratorSpec::new(Scheme::Rk4, 0.1, 63).unwrap(),
                n_iterations: 15,
                learning_rate: 1e-3,
                ..TrainConfig::default()
            },
            warm_start: WarmStart { iterations: 600, ..WarmStart::default() },
            ..PrcFitConfig::default()
        };
        let phases = uniform_phases(8).unwrap();
        let target = PRCCurve::new(phases.clone(), vec![0.0; 8]).unwrap();
        let report = fit_prc(&cfg, &target).unwrap();
        let h = &report.loss_history;
        // a near-rotation field shifts a 0.1 kick by only a few degrees
        assert!(h[0] < 100.0, "initial loss {}", h[0]);
        assert!(h.last().unwrap() < &h[0]);
    }

    #[test]
    fn csv_columns() {
        let phases = uniform_phases(2).unwrap();
        let target = target_prc(&phases, &PRCParams::default()).unwrap();
        let sim = SimulatedPrc { curve: PRCCurve::new(phases, vec![1.0, -1.0]).unwrap(), relaxed: vec![true, false] };
        let mut buf = Vec::new();
        write_prc_csv(&mut buf, &target, &sim).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("phi_rad,target_shift,simulated_shift,relaxed_flag\n0,5,1,true\n"));
    }
}
