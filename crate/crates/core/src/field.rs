//! Dense reward values over a [`StateGrid`].

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::{ApproachState, GridIndex, StateGrid};
use crate::Scalar;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("value count {found} does not match grid size {expected}")]
    Size { expected: usize, found: usize },
    #[error("reward fields are defined on different grids")]
    GridMismatch,
    #[error("non-finite reward at grid point {0}")]
    NonFinite(usize),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Scalar reward for every state of a grid, stored in flattened grid order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardField<T> {
    pub grid: StateGrid<T>,
    pub values: Vec<T>,
}

impl<T: Scalar> RewardField<T> {
    pub fn zeros(grid: StateGrid<T>) -> Self {
        let n = grid.len();
        Self {
            grid,
            values: vec![T::zero(); n],
        }
    }

    pub fn new(grid: StateGrid<T>, values: Vec<T>) -> Result<Self, FieldError> {
        let f = Self { grid, values };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<(), FieldError> {
        if self.values.len() != self.grid.len() {
            return Err(FieldError::Size {
                expected: self.grid.len(),
                found: self.values.len(),
            });
        }
        if let Some(i) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(FieldError::NonFinite(i));
        }
        Ok(())
    }

    pub fn get(&self, i: GridIndex) -> T {
        self.values[self.grid.flat(i)]
    }

    /// Nearest-bin lookup of an arbitrary state.
    pub fn at(&self, s: &ApproachState<T>) -> T {
        self.values[self.grid.discretize_flat(s)]
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// Flat index of the first maximal entry.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        self.grid == other.grid
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, FieldError> {
        if !self.same_grid(other) {
            return Err(FieldError::GridMismatch);
        }
        Ok(Self {
            grid: self.grid.clone(),
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| a + b).collect(),
        })
    }
}

impl RewardField<f64> {
    pub fn to_json(&self) -> Result<String, FieldError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self, FieldError> {
        let f: Self = serde_json::from_str(s)?;
        f.grid.validate().map_err(|_| FieldError::GridMismatch)?;
        f.validate()?;
        Ok(f)
    }

    /// Writes the `(x, y)` slice at fixed heading, speed and gaze bins as CSV
    /// with columns `x,y,reward`.
    pub fn write_xy_slice_csv<W: Write>(&self, w: W, it: usize, iv: usize, ig: usize) -> Result<(), FieldError> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x", "y", "reward"]).map_err(std::io::Error::other)?;
        for ix in 0..self.grid.x_bins.len() {
            for iy in 0..self.grid.y_bins.len() {
                let v = self.get(GridIndex { ix, iy, it, iv, ig });
                wtr.write_record([
                    self.grid.x_bins[ix].to_string(),
                    self.grid.y_bins[iy].to_string(),
                    v.to_string(),
                ])
                .map_err(std::io::Error::other)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }

    /// Maximum over heading and speed for each `(x, y)` at the given gaze bin.
    pub fn max_projection(&self, ig: usize) -> Vec<Vec<f64>> {
        let [nx, ny, nt, nv, _] = self.grid.shape();
        (0..nx)
            .map(|ix| {
                (0..ny)
                    .map(|iy| {
                        let mut m = f64::NEG_INFINITY;
                        for it in 0..nt {
                            for iv in 0..nv {
                                m = m.max(self.get(GridIndex { ix, iy, it, iv, ig }));
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect()
    }
}
