//! Velocity fields.
//!
//! [`VelocityField`] is the trained object: the raw network output divided by
//! `‖g_raw‖ + ε`. Away from zeros of `g_raw` this has unit norm; near them the
//! field smoothly vanishes, which is how approximate fixed points arise.
//!
//! Integrators and the FTLE code are written against the [`Field`] trait so
//! analytic fields can stand in as oracles. Fields take no time argument.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::diffcore::{MlpScratch, ParamVector};
use crate::{Error, Result};

/// Default normalisation guard.
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// A point (or vector) in the plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StateVector {
    pub x: f64,
    pub y: f64,
}

impl StateVector {
    pub const ZERO: StateVector = StateVector { x: 0.0, y: 0.0 };

    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.x * self.x + self.y * self.y
    }

    #[inline]
    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    #[inline]
    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for StateVector {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for StateVector {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for StateVector {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for StateVector {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

impl Mul<f64> for StateVector {
    type Output = Self;
    #[inline]
    fn mul(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }
}

impl Mul<StateVector> for f64 {
    type Output = StateVector;
    #[inline]
    fn mul(self, v: StateVector) -> StateVector {
        v * self
    }
}

impl From<[f64; 2]> for StateVector {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl From<StateVector> for [f64; 2] {
    fn from(v: StateVector) -> Self {
        [v.x, v.y]
    }
}

/// An autonomous planar vector field.
pub trait Field: Sync {
    /// Per-caller working memory, one per trajectory or thread.
    type Scratch: Send;

    fn scratch(&self) -> Self::Scratch;

    fn velocity(&self, x: StateVector, scratch: &mut Self::Scratch) -> Result<StateVector>;
}

/// A field whose velocity can be differentiated by reverse mode.
pub trait DiffField: Field {
    fn n_params(&self) -> usize;

    /// Reverse pass of the last [`Field::velocity`] call made with `scratch`.
    ///
    /// Adds `cotangentᵀ ∂v/∂p` into `grad_params` and returns `cotangentᵀ ∂v/∂x`.
    fn velocity_vjp(
        &self,
        cotangent: StateVector,
        scratch: &mut Self::Scratch,
        grad_params: &mut [f64],
    ) -> StateVector;
}

/// The learned unit-speed field `g_raw(x) / (‖g_raw(x)‖ + ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField {
    params: ParamVector,
    epsilon: f64,
}

#[derive(Debug, Clone)]
pub struct FieldScratch {
    mlp: MlpScratch,
    raw: [f64; 2],
}

impl VelocityField {
    pub fn new(params: ParamVector) -> Self {
        Self {
            params,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(params: ParamVector, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::config(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { params, epsilon })
    }

    pub fn params(&self) -> &ParamVector {
        &self.params
    }

    pub(crate) fn params_mut(&mut self) -> &mut ParamVector {
        &mut self.params
    }

    pub fn into_params(self) -> ParamVector {
        self.params
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Unnormalised network output.
    pub fn raw(&self, x: StateVector, scratch: &mut FieldScratch) -> [f64; 2] {
        self.params.forward_with(x.into(), &mut scratch.mlp)
    }
}

impl Field for VelocityField {
    type Scratch = FieldScratch;

    fn scratch(&self) -> FieldScratch {
        FieldScratch {
            mlp: self.params.scratch(),
            raw: [0.0; 2],
        }
    }

    #[inline]
    fn velocity(&self, x: StateVector, scratch: &mut FieldScratch) -> Result<StateVector> {
        if !x.is_finite() {
            return Err(Error::NumericInput(format!("state ({}, {})", x.x, x.y)));
        }
        let raw = self.params.forward_with(x.into(), &mut scratch.mlp);
        scratch.raw = raw;
        let n = raw[0].hypot(raw[1]);
        if !n.is_finite() {
            return Err(Error::NumericFailure { x: x.x, y: x.y });
        }
        let s = 1.0 / (n + self.epsilon);
        Ok(StateVector::new(raw[0] * s, raw[1] * s))
    }
}

impl DiffField for VelocityField {
    fn n_params(&self) -> usize {
        self.params.len()
    }

    fn velocity_vjp(
        &self,
        cotangent: StateVector,
        scratch: &mut FieldScratch,
        grad_params: &mut [f64],
    ) -> StateVector {
        let v = StateVector::from(scratch.raw);
        let n = v.norm();
        let d = n + self.epsilon;
        // cᵀ (I/d − v vᵀ / (n d²)); the rank-one term is dropped at v = 0.
        let mut raw_cot = cotangent * (1.0 / d);
        if n > 0.0 {
            raw_cot = raw_cot - v * (v.dot(cotangent) / (n * d * d));
        }
        self.params
            .backward_accumulate(raw_cot.into(), &mut scratch.mlp, grad_params)
            .into()
    }
}

/// Normalised field value at `x`.
pub fn eval_field(f: &VelocityField, x: StateVector) -> Result<StateVector> {
    let mut scratch = f.scratch();
    f.velocity(x, &mut scratch)
}

/// Reverse-mode derivative of [`eval_field`]: `(grad_params, grad_x)`.
pub fn eval_field_vjp(
    f: &VelocityField,
    x: StateVector,
    cotangent: StateVector,
) -> Result<(Vec<f64>, StateVector)> {
    if !cotangent.is_finite() {
        return Err(Error::NumericInput(format!("cotangent {cotangent:?}")));
    }
    let mut scratch = f.scratch();
    f.velocity(x, &mut scratch)?;
    let mut grad = vec![0.0; f.n_params()];
    let gx = f.velocity_vjp(cotangent, &mut scratch, &mut grad);
    Ok((grad, gx))
}

/// The same vector everywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField(pub StateVector);

impl Field for ConstantField {
    type Scratch = ();

    fn scratch(&self) {}

    fn velocity(&self, _x: StateVector, _: &mut ()) -> Result<StateVector> {
        Ok(self.0)
    }
}

impl DiffField for ConstantField {
    fn n_params(&self) -> usize {
        0
    }

    fn velocity_vjp(&self, _c: StateVector, _: &mut (), _g: &mut [f64]) -> StateVector {
        StateVector::ZERO
    }
}

/// Counter-clockwise rotation at unit speed: `(−y, x) / (‖(−y, x)‖ + ε)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationField {
    pub epsilon: f64,
}

impl Default for RotationField {
    fn default() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl Field for RotationField {
    type Scratch = StateVector;

    fn scratch(&self) -> StateVector {
        StateVector::ZERO
    }

    fn velocity(&self, x: StateVector, last: &mut StateVector) -> Result<StateVector> {
        *last = x;
        let v = StateVector::new(-x.y, x.x);
        Ok(v * (1.0 / (v.norm() + self.epsilon)))
    }
}

impl DiffField for RotationField {
    fn n_params(&self) -> usize {
        0
    }

    fn velocity_vjp(&self, c: StateVector, last: &mut StateVector, _g: &mut [f64]) -> StateVector {
        let v = StateVector::new(-last.y, last.x);
        let n = v.norm();
        let d = n + self.epsilon;
        let mut cv = c * (1.0 / d);
        if n > 0.0 {
            cv = cv - v * (v.dot(c) / (n * d * d));
        }
        // ∂v/∂x = [[0, −1], [1, 0]], so the pullback is (cv.y, −cv.x).
        StateVector::new(cv.y, -cv.x)
    }
}

/// Unnormalised linear field `A x`, e.g. the saddle `(x, −y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearField {
    pub matrix: [[f64; 2]; 2],
}

impl LinearField {
    pub fn saddle() -> Self {
        Self {
            matrix: [[1.0, 0.0], [0.0, -1.0]],
        }
    }

    /// `(−y, x)`: every radius turns at angular speed 1.
    pub fn rigid_rotation() -> Self {
        Self {
            matrix: [[0.0, -1.0], [1.0, 0.0]],
        }
    }
}

impl Field for LinearField {
    type Scratch = ();

    fn scratch(&self) {}

    fn velocity(&self, x: StateVector, _: &mut ()) -> Result<StateVector> {
        let m = self.matrix;
        Ok(StateVector::new(
            m[0][0] * x.x + m[0][1] * x.y,
            m[1][0] * x.x + m[1][1] * x.y,
        ))
    }
}

impl DiffField for LinearField {
    fn n_params(&self) -> usize {
        0
    }

    fn velocity_vjp(&self, c: StateVector, _: &mut (), _g: &mut [f64]) -> StateVector {
        let m = self.matrix;
        StateVector::new(m[0][0] * c.x + m[1][0] * c.y, m[0][1] * c.x + m[1][1] * c.y)
    }
}

/// Any `Fn(StateVector) -> StateVector` as a field.
pub struct FnField<F>(pub F);

impl<F> Field for FnField<F>
where
    F: Fn(StateVector) -> StateVector + Sync,
{
    type Scratch = ();

    fn scratch(&self) {}

    fn velocity(&self, x: StateVector, _: &mut ()) -> Result<StateVector> {
        Ok((self.0)(x))
    }
}
