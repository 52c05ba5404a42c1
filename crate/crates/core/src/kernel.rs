//! Radial basis kernels over the scaled approach-state metric.

use serde::{Deserialize, Serialize};

use crate::linalg::DMat;
use crate::state::{ApproachState, Axis, StateGrid, StateMetric};
use crate::Scalar;

/// `k(a, b) = exp(-d(a, b)^2 / (2 sigma^2))`, zero across gaze values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rbf<T> {
    pub sigma: T,
    pub metric: StateMetric<T>,
}

impl<T: Scalar> Rbf<T> {
    pub fn new(sigma: T) -> Self {
        Self {
            sigma,
            metric: StateMetric::default(),
        }
    }

    pub fn with_metric(sigma: T, metric: StateMetric<T>) -> Self {
        Self { sigma, metric }
    }

    fn inv_two_var(&self) -> T {
        T::one() / (T::lit(2.0) * self.sigma * self.sigma)
    }

    pub fn eval(&self, a: &ApproachState<T>, b: &ApproachState<T>) -> T {
        match self.metric.sq_dist(a, b) {
            Some(d2) => (-d2 * self.inv_two_var()).exp(),
            None => T::zero(),
        }
    }

    /// One-dimensional factor along `axis`; the kernel is the product of the
    /// four factors times the gaze indicator.
    pub fn axis_factor(&self, axis: Axis, a: T, b: T) -> T {
        (-self.metric.axis_sq(axis, a, b) * self.inv_two_var()).exp()
    }

    fn axis_table(&self, axis: Axis, rows: &[T], cols: &[T]) -> DMat<T> {
        DMat::from_fn(rows.len(), cols.len(), |i, j| self.axis_factor(axis, rows[i], cols[j]))
    }

    /// Per-axis factor tables between two tensor grids.
    pub fn tables(&self, rows: &StateGrid<T>, cols: &StateGrid<T>) -> AxisTables<T> {
        AxisTables {
            x: self.axis_table(Axis::X, &rows.x_bins, &cols.x_bins),
            y: self.axis_table(Axis::Y, &rows.y_bins, &cols.y_bins),
            theta: self.axis_table(Axis::Theta, &rows.theta_bins, &cols.theta_bins),
            v: self.axis_table(Axis::V, &rows.v_bins, &cols.v_bins),
            g: DMat::from_fn(rows.g_bins.len(), cols.g_bins.len(), |i, j| {
                if rows.g_bins[i] == cols.g_bins[j] {
                    T::one()
                } else {
                    T::zero()
                }
            }),
        }
    }
}

/// Separable factorization of an RBF kernel matrix between two tensor grids:
/// the full matrix is `x ⊗ y ⊗ theta ⊗ v ⊗ g` in flattened order.
#[derive(Debug, Clone)]
pub struct AxisTables<T> {
    pub x: DMat<T>,
    pub y: DMat<T>,
    pub theta: DMat<T>,
    pub v: DMat<T>,
    pub g: DMat<T>,
}

impl<T: Scalar> AxisTables<T> {
    pub fn as_slice(&self) -> [&DMat<T>; 5] {
        [&self.x, &self.y, &self.theta, &self.v, &self.g]
    }

    /// Kernel matrix times a vector over the column grid.
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        crate::linalg::kron_matvec(&self.as_slice(), x)
    }
}
