//! Losses and their gradients with respect to simulated states.
//!
//! The principal-flow loss is the two-sided nearest-neighbour (Chamfer-style)
//! distance between every simulated state and the data cloud:
//!
//! - term 1: mean over simulated states of the distance to the nearest data point,
//! - term 2: mean over data points of the distance to the nearest simulated state.
//!
//! Distances are Euclidean, not squared. Ties go to the lowest index and
//! coincident pairs (distance below [`COINCIDENCE`]) contribute zero gradient.
//! Sums are taken over values sorted ascending, so every loss value is
//! bit-identical under any permutation of the data or of the trajectories.

use serde::{Deserialize, Serialize};

use crate::integrate::Trajectory;
use crate::prc::PRCCurve;
use crate::{par, Error, Result, StateVector};

/// Pairs closer than this contribute no gradient.
pub const COINCIDENCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataCloud {
    pub points: Vec<StateVector>,
    pub name: String,
}

impl DataCloud {
    pub fn new(points: Vec<StateVector>, name: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::contract("data cloud is empty"));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NumericInput(format!("data point {i} is not finite")));
        }
        Ok(Self {
            points,
            name: name.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.max(a.distance(*b));
            }
        }
        best
    }

    /// Componentwise bounding box `(min, max)`.
    pub fn bounds(&self) -> (StateVector, StateVector) {
        let mut lo = self.points[0];
        let mut hi = self.points[0];
        for p in &self.points {
            lo = StateVector::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = StateVector::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        (lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub traj_to_data: f64,
    pub data_to_traj: f64,
    pub total: f64,
    /// Gradient of `total` for every simulated state, grouped per trajectory.
    pub state_gradients: Vec<Vec<StateVector>>,
}

/// Index and distance of the nearest point; lowest index wins ties.
#[inline]
pub fn nearest(query: StateVector, points: &[StateVector]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        let d2 = (query - *p).norm_squared();
        if d2 < best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    (best, (query - points[best]).norm())
}

/// Sum of values in ascending order.
pub(crate) fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.into_iter().sum()
}

#[inline]
fn unit_or_zero(diff: StateVector, dist: f64) -> StateVector {
    if dist < COINCIDENCE {
        StateVector::ZERO
    } else {
        diff * (1.0 / dist)
    }
}

/// Two-sided nearest-neighbour loss between all simulated states and the data.
pub fn principal_flow_loss(simulated: &[Trajectory], data: &DataCloud) -> Result<LossBreakdown> {
    let states: Vec<StateVector> = simulated.iter().flat_map(|t| t.states.iter().copied()).collect();
    if states.is_empty() {
        return Err(Error::contract("no simulated states"));
    }
    if data.points.is_empty() {
        return Err(Error::contract("data cloud is empty"));
    }
    let n_states = states.len() as f64;
    let n_data = data.points.len() as f64;

    let to_data = par::map_slice(&states, |_, &z| nearest(z, &data.points));
    let to_traj = par::map_slice(&data.points, |_, &x| nearest(x, &states));

    let traj_to_data = sorted_sum(to_data.iter().map(|&(_, d)| d).collect()) / n_states;
    let data_to_traj = sorted_sum(to_traj.iter().map(|&(_, d)| d).collect()) / n_data;

    let mut flat_grad: Vec<StateVector> = states
        .iter()
        .zip(&to_data)
        .map(|(&z, &(j, d))| unit_or_zero(z - data.points[j], d) * (1.0 / n_states))
        .collect();
    for (&x, &(s, d)) in data.points.iter().zip(&to_traj) {
        flat_grad[s] += unit_or_zero(states[s] - x, d) * (1.0 / n_data);
    }

    let mut state_gradients = Vec::with_capacity(simulated.len());
    let mut rest = flat_grad.as_slice();
    for t in simulated {
        let (head, tail) = rest.split_at(t.states.len());
        state_gradients.push(head.to_vec());
        rest = tail;
    }

    Ok(LossBreakdown {
        traj_to_data,
        data_to_traj,
        total: traj_to_data + data_to_traj,
        state_gradients,
    })
}

/// Mean of `(x² + y² − 1)²` over the states, with its per-state gradient.
pub fn unit_circle_penalty(traj: &Trajectory) -> Result<(f64, Vec<StateVector>)> {
    unit_circle_penalty_states(&traj.states)
}

pub fn unit_circle_penalty_states(states: &[StateVector]) -> Result<(f64, Vec<StateVector>)> {
    if states.is_empty() {
        return Err(Error::contract("empty trajectory"));
    }
    let n = states.len() as f64;
    let mut terms = Vec::with_capacity(states.len());
    let grads = states
        .iter()
        .map(|s| {
            let r = s.norm_squared() - 1.0;
            terms.push(r * r);
            *s * (4.0 * r / n)
        })
        .collect();
    Ok((sorted_sum(terms) / n, grads))
}

/// Mean squared difference `mean((M̂ − M)²)` and its gradient `2(M̂ − M)/n`
/// with respect to each simulated sample.
pub fn prc_mse(target: &PRCCurve, simulated: &PRCCurve) -> Result<(f64, Vec<f64>)> {
    if target.phases.len() != simulated.phases.len()
        || target
            .phases
            .iter()
            .zip(&simulated.phases)
            .any(|(a, b)| a.to_bits() != b.to_bits())
    {
        return Err(Error::contract("PRC curves are sampled on different phase grids"));
    }
    if target.shifts.is_empty() {
        return Err(Error::contract("empty PRC curve"));
    }
    let n = target.shifts.len() as f64;
    let diffs: Vec<f64> = simulated
        .shifts
        .iter()
        .zip(&target.shifts)
        .map(|(s, t)| s - t)
        .collect();
    let value = diffs.iter().map(|d| d * d).sum::<f64>() / n;
    let grads = diffs.iter().map(|d| 2.0 * d / n).collect();
    Ok((value, grads))
}
