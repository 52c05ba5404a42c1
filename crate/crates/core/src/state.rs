//! Relative approach state space and its fixed discretization.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::angle_dist;
use crate::Scalar;

/// Robot state relative to the human: position and heading in the human
/// frame, gaze flag and speed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproachState<T> {
    pub x: T,
    pub y: T,
    pub theta: T,
    pub g: u8,
    pub v: T,
}

impl<T: Scalar> ApproachState<T> {
    pub fn new(x: T, y: T, theta: T, g: u8, v: T) -> Self {
        Self { x, y, theta, g, v }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("bin list `{0}` must be non-empty and strictly increasing")]
    BadBins(&'static str),
    #[error("gaze bins must be a subset of {{0, 1}}")]
    BadGaze,
}

/// Index of a grid point along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridIndex {
    pub ix: usize,
    pub iy: usize,
    pub it: usize,
    pub iv: usize,
    pub ig: usize,
}

/// Tensor grid over `(x, y, theta, v, g)`. Flattened order is row-major with
/// `x` slowest and `g` fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGrid<T> {
    pub x_bins: Vec<T>,
    pub y_bins: Vec<T>,
    pub theta_bins: Vec<T>,
    pub v_bins: Vec<T>,
    pub g_bins: Vec<u8>,
}

fn strictly_increasing<T: Scalar>(v: &[T]) -> bool {
    !v.is_empty() && v.iter().all(|b| b.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

fn linspace<T: Scalar>(start: f64, step: f64, n: usize) -> Vec<T> {
    (0..n).map(|i| T::lit(start + step * i as f64)).collect()
}

impl<T: Scalar> Default for StateGrid<T> {
    /// x in {-6, -5.5, ..., 6}, y in {-3, ..., 3}, eight headings from -pi,
    /// speeds {0.15, 0.4, 0.65}, gaze {0, 1}.
    fn default() -> Self {
        let quarter = std::f64::consts::FRAC_PI_4;
        Self {
            x_bins: linspace(-6.0, 0.5, 25),
            y_bins: linspace(-3.0, 0.5, 13),
            theta_bins: (0..8)
                .map(|i| T::lit(-std::f64::consts::PI + quarter * i as f64))
                .collect(),
            v_bins: linspace(0.15, 0.25, 3),
            g_bins: vec![0, 1],
        }
    }
}

impl<T: Scalar> StateGrid<T> {
    pub fn new(
        x_bins: Vec<T>,
        y_bins: Vec<T>,
        theta_bins: Vec<T>,
        v_bins: Vec<T>,
        g_bins: Vec<u8>,
    ) -> Result<Self, GridError> {
        let grid = Self {
            x_bins,
            y_bins,
            theta_bins,
            v_bins,
            g_bins,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !strictly_increasing(&self.x_bins) {
            return Err(GridError::BadBins("x"));
        }
        if !strictly_increasing(&self.y_bins) {
            return Err(GridError::BadBins("y"));
        }
        if !strictly_increasing(&self.theta_bins) {
            return Err(GridError::BadBins("theta"));
        }
        if !strictly_increasing(&self.v_bins) {
            return Err(GridError::BadBins("v"));
        }
        if self.g_bins.is_empty()
            || self.g_bins.iter().any(|&g| g > 1)
            || self.g_bins.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(GridError::BadGaze);
        }
        Ok(())
    }

    /// Axis lengths `[x, y, theta, v, g]`.
    pub fn shape(&self) -> [usize; 5] {
        [
            self.x_bins.len(),
            self.y_bins.len(),
            self.theta_bins.len(),
            self.v_bins.len(),
            self.g_bins.len(),
        ]
    }

    /// Total number of grid points (15600 for the default grid).
    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn flat(&self, i: GridIndex) -> usize {
        let [_, ny, nt, nv, ng] = self.shape();
        (((i.ix * ny + i.iy) * nt + i.it) * nv + i.iv) * ng + i.ig
    }

    pub fn unflat(&self, mut flat: usize) -> GridIndex {
        let [_, ny, nt, nv, ng] = self.shape();
        let ig = flat % ng;
        flat /= ng;
        let iv = flat % nv;
        flat /= nv;
        let it = flat % nt;
        flat /= nt;
        let iy = flat % ny;
        GridIndex {
            ix: flat / ny,
            iy,
            it,
            iv,
            ig,
        }
    }

    pub fn state(&self, i: GridIndex) -> ApproachState<T> {
        ApproachState {
            x: self.x_bins[i.ix],
            y: self.y_bins[i.iy],
            theta: self.theta_bins[i.it],
            g: self.g_bins[i.ig],
            v: self.v_bins[i.iv],
        }
    }

    pub fn state_at(&self, flat: usize) -> ApproachState<T> {
        self.state(self.unflat(flat))
    }

    pub fn states(&self) -> impl Iterator<Item = ApproachState<T>> + '_ {
        (0..self.len()).map(move |k| self.state_at(k))
    }

    /// Snaps every field to its nearest bin. Out-of-range values clamp to the
    /// extreme bins; headings use circular distance. Ties go to the lower index.
    pub fn discretize(&self, s: &ApproachState<T>) -> GridIndex {
        let ig = self
            .g_bins
            .iter()
            .enumerate()
            .min_by_key(|(_, &b)| (b as i16 - s.g as i16).abs())
            .map_or(0, |(i, _)| i);
        GridIndex {
            ix: nearest(&self.x_bins, s.x),
            iy: nearest(&self.y_bins, s.y),
            it: nearest_circular(&self.theta_bins, s.theta),
            iv: nearest(&self.v_bins, s.v),
            ig,
        }
    }

    pub fn discretize_flat(&self, s: &ApproachState<T>) -> usize {
        self.flat(self.discretize(s))
    }

    /// Inducing points are the grid points with an even x-bin index.
    pub fn is_inducing(&self, i: GridIndex) -> bool {
        i.ix.is_multiple_of(2)
    }

    pub fn inducing_mask(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.is_inducing(self.unflat(k))).collect()
    }

    pub fn inducing_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&k| self.is_inducing(self.unflat(k))).collect()
    }

    /// The inducing points form a tensor sub-grid: every other x bin.
    pub fn inducing_grid(&self) -> StateGrid<T> {
        StateGrid {
            x_bins: self.x_bins.iter().copied().step_by(2).collect(),
            ..self.clone()
        }
    }
}

fn nearest<T: Scalar>(bins: &[T], v: T) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, &b) in bins.iter().enumerate() {
        let d = (b - v).abs();
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

fn nearest_circular<T: Scalar>(bins: &[T], v: T) -> usize {
    let mut best = 0;
    let mut best_d = T::infinity();
    for (i, &b) in bins.iter().enumerate() {
        let d = angle_dist(b, v);
        if d < best_d {
            best = i;
            best_d = d;
        }
    }
    best
}

/// Dimension scaling applied before the Euclidean norm inside the RBF
/// kernels. Gaze acts as a hard factor: states with different `g` are at
/// infinite distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateMetric<T> {
    pub scale_x: T,
    pub scale_y: T,
    pub scale_theta: T,
    pub scale_v: T,
}

impl<T: Scalar> Default for StateMetric<T> {
    fn default() -> Self {
        Self {
            scale_x: T::lit(0.5),
            scale_y: T::lit(0.5),
            scale_theta: T::FRAC_PI_4(),
            scale_v: T::lit(0.25),
        }
    }
}

/// Axis identifiers in flattened order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Theta,
    V,
}

impl<T: Scalar> StateMetric<T> {
    /// Scaled squared difference along one axis.
    pub fn axis_sq(&self, axis: Axis, a: T, b: T) -> T {
        let d = match axis {
            Axis::X => (a - b) / self.scale_x,
            Axis::Y => (a - b) / self.scale_y,
            Axis::Theta => angle_dist(a, b) / self.scale_theta,
            Axis::V => (a - b) / self.scale_v,
        };
        d * d
    }

    /// Scaled squared distance, `None` across differing gaze values.
    pub fn sq_dist(&self, a: &ApproachState<T>, b: &ApproachState<T>) -> Option<T> {
        if a.g != b.g {
            return None;
        }
        Some(
            self.axis_sq(Axis::X, a.x, b.x)
                + self.axis_sq(Axis::Y, a.y, b.y)
                + self.axis_sq(Axis::Theta, a.theta, b.theta)
                + self.axis_sq(Axis::V, a.v, b.v),
        )
    }
}


#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn discretize_idempotent_on_bin_centres(k in 0usize..15600) {
            let g = StateGrid::<f64>::default();
            let s = g.state_at(k);
            prop_assert_eq!(g.discretize_flat(&s), k);
        }

        #[test]
        fn discretize_is_nearest(x in -8.0..8.0f64, y in -4.0..4.0f64, t in -4.0..4.0f64, v in 0.0..1.0f64, gz in 0u8..2) {
            let g = StateGrid::<f64>::default();
            let s = ApproachState::new(x, y, t, gz, v);
            let i = g.discretize(&s);
            for (k, b) in g.x_bins.iter().enumerate() {
                prop_assert!((g.x_bins[i.ix] - x).abs() <= (b - x).abs() + 1e-12, "x bin {} closer", k);
            }
            for b in &g.theta_bins {
                prop_assert!(angle_dist(g.theta_bins[i.it], t) <= angle_dist(*b, t) + 1e-12);
            }
            let s2 = g.state(i);
            prop_assert_eq!(g.discretize(&s2), i);
        }
    }
}
