//! Finite-time Lyapunov exponents on a rectangular grid.
//!
//! Every grid node is advected for horizon `T`. At interior nodes the flow-map
//! Jacobian is estimated by central differences of the advected positions of the
//! four neighbours, the Cauchy–Green tensor is `DΦᵀ DΦ`, and
//! `σ = ln √λ_max / T`. Boundary nodes (and nodes next to a diverged neighbour)
//! have no value.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::field::Field;
use crate::integrate::{flow_map_with, IntegratorSpec};
use crate::{par, Error, Result, StateVector};

/// Uniform node layout over `[x_min, x_max] × [y_min, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::config(format!("grid must be at least 3×3, got {nx}×{ny}")));
        }
        if !(x_min < x_max && y_min < y_max) || ![x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite()) {
            return Err(Error::config(format!(
                "invalid bounds [{x_min}, {x_max}] × [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
            nx,
            ny,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + (self.x_max - self.x_min) * i as f64 / (self.nx - 1) as f64
    }

    pub fn y(&self, j: usize) -> f64 {
        self.y_min + (self.y_max - self.y_min) * j as f64 / (self.ny - 1) as f64
    }

    pub fn node(&self, i: usize, j: usize) -> StateVector {
        StateVector::new(self.x(i), self.y(j))
    }

    pub fn x_coords(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        (0..self.ny).map(|j| self.y(j)).collect()
    }

    /// Flat index, `i` (along x) major.
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        i >= 1 && j >= 1 && i + 1 < self.nx && j + 1 < self.ny
    }
}

/// Terminal positions of every node; `None` where integration failed.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvectedGrid {
    pub grid: GridSpec,
    pub terminal: Vec<Option<StateVector>>,
}

impl AdvectedGrid {
    pub fn get(&self, i: usize, j: usize) -> Option<StateVector> {
        self.terminal[self.grid.index(i, j)]
    }
}

/// Applies the noiseless flow map to every node.
pub fn advect_grid<F: Field>(f: &F, grid: &GridSpec, spec: &IntegratorSpec) -> Result<AdvectedGrid> {
    spec.validate()?;
    let terminal = par::map_range(grid.len(), |k| {
        let (i, j) = (k / grid.ny, k % grid.ny);
        let mut scratch = f.scratch();
        flow_map_with(f, grid.node(i, j), spec, &mut scratch).ok()
    });
    Ok(AdvectedGrid {
        grid: *grid,
        terminal,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMapJacobian {
    /// `DΦ`, row = output component, column = input component.
    pub entries: [[f64; 2]; 2],
    /// `DΦᵀ DΦ`.
    pub cauchy_green: [[f64; 2]; 2],
    pub lambda_max: f64,
}

impl FlowMapJacobian {
    pub fn from_matrix(d: [[f64; 2]; 2]) -> Self {
        let a = d[0][0] * d[0][0] + d[1][0] * d[1][0];
        let b = d[0][0] * d[0][1] + d[1][0] * d[1][1];
        let c = d[0][1] * d[0][1] + d[1][1] * d[1][1];
        Self {
            entries: d,
            cauchy_green: [[a, b], [b, c]],
            lambda_max: symmetric_max_eigenvalue(a, b, c),
        }
    }
}

/// Largest eigenvalue of `[[a, b], [b, c]]`, clamped at zero.
pub fn symmetric_max_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    let mean = 0.5 * (a + c);
    let half_diff = 0.5 * (a - c);
    (mean + half_diff.hypot(b)).max(0.0)
}

/// Central-difference flow-map Jacobian at interior node `(i, j)`.
///
/// `None` on the boundary or when a neighbour's advection failed.
pub fn flow_map_jacobian(advected: &AdvectedGrid, i: usize, j: usize) -> Option<FlowMapJacobian> {
    let g = &advected.grid;
    if !g.is_interior(i, j) {
        return None;
    }
    let east = advected.get(i + 1, j)?;
    let west = advected.get(i - 1, j)?;
    let north = advected.get(i, j + 1)?;
    let south = advected.get(i, j - 1)?;
    let dx0 = g.x(i + 1) - g.x(i - 1);
    let dy0 = g.y(j + 1) - g.y(j - 1);
    Some(FlowMapJacobian::from_matrix([
        [(east.x - west.x) / dx0, (north.x - south.x) / dy0],
        [(east.y - west.y) / dx0, (north.y - south.y) / dy0],
    ]))
}

/// `ln √λ_max / T`; negative infinity when `λ_max = 0`.
pub fn ftle_value(jac: &FlowMapJacobian, horizon: f64) -> Result<f64> {
    ftle_from_lambda(jac.lambda_max, horizon)
}

pub fn ftle_from_lambda(lambda_max: f64, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::contract(format!("FTLE horizon must be positive, got {horizon}")));
    }
    if !(lambda_max >= 0.0) {
        return Err(Error::contract(format!("lambda_max must be non-negative, got {lambda_max}")));
    }
    if lambda_max == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(lambda_max.sqrt().ln() / horizon)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FTLEGrid {
    pub grid: GridSpec,
    /// Indexed by [`GridSpec::index`]; `None` on the boundary or where missing.
    pub sigma: Vec<Option<f64>>,
    pub horizon: f64,
}

impl FTLEGrid {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.sigma[self.grid.index(i, j)]
    }

    pub fn x_coords(&self) -> Vec<f64> {
        self.grid.x_coords()
    }

    pub fn y_coords(&self) -> Vec<f64> {
        self.grid.y_coords()
    }

    /// `(i, j, node, σ)` for every node with a value.
    pub fn values(&self) -> impl Iterator<Item = (usize, usize, StateVector, f64)> + '_ {
        (0..self.grid.nx).flat_map(move |i| {
            (0..self.grid.ny).filter_map(move |j| self.get(i, j).map(|s| (i, j, self.grid.node(i, j), s)))
        })
    }

    /// Bilinear interpolation from the four surrounding nodes.
    pub fn sample(&self, p: StateVector) -> Option<f64> {
        let g = &self.grid;
        let fx = (p.x - g.x_min) / (g.x_max - g.x_min) * (g.nx - 1) as f64;
        let fy = (p.y - g.y_min) / (g.y_max - g.y_min) * (g.ny - 1) as f64;
        if !(fx >= 0.0 && fy >= 0.0) || fx > (g.nx - 1) as f64 || fy > (g.ny - 1) as f64 {
            return None;
        }
        let i0 = (fx.floor() as usize).min(g.nx - 2);
        let j0 = (fy.floor() as usize).min(g.ny - 2);
        let (tx, ty) = (fx - i0 as f64, fy - j0 as f64);
        let corners = [
            (i0, j0, (1.0 - tx) * (1.0 - ty)),
            (i0 + 1, j0, tx * (1.0 - ty)),
            (i0, j0 + 1, (1.0 - tx) * ty),
            (i0 + 1, j0 + 1, tx * ty),
        ];
        let mut acc = 0.0;
        for (i, j, w) in corners {
            if w > 0.0 {
                acc += w * self.get(i, j)?;
            }
        }
        Some(acc)
    }
}

/// Full pipeline: advect, difference, Cauchy–Green, σ.
pub fn ftle_field<F: Field>(f: &F, grid: &GridSpec, spec: &IntegratorSpec) -> Result<FTLEGrid> {
    let advected = advect_grid(f, grid, spec)?;
    ftle_from_advected(&advected, spec.horizon())
}

pub fn ftle_from_advected(advected: &AdvectedGrid, horizon: f64) -> Result<FTLEGrid> {
    let g = advected.grid;
    let sigma = (0..g.len())
        .map(|k| {
            let (i, j) = (k / g.ny, k % g.ny);
            flow_map_jacobian(advected, i, j)
                .map(|jac| ftle_value(&jac, horizon))
                .transpose()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FTLEGrid {
        grid: g,
        sigma,
        horizon,
    })
}

/// FTLE CSV: `i,j,x,y,sigma`, sigma left empty where missing.
pub fn write_ftle_csv<W: Write>(mut w: W, field: &FTLEGrid) -> Result<()> {
    writeln!(w, "i,j,x,y,sigma")?;
    let g = &field.grid;
    for i in 0..g.nx {
        for j in 0..g.ny {
            match field.get(i, j) {
                Some(s) => writeln!(w, "{i},{j},{},{},{s}", g.x(i), g.y(j))?,
                None => writeln!(w, "{i},{j},{},{},", g.x(i), g.y(j))?,
            }
        }
    }
    Ok(())
}
