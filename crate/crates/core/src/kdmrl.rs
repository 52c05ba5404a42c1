//! Kernel density matching reward learning.
//!
//! Demonstrations are turned into a leverage-weighted kernel density over the
//! relative approach state, and the reward is a kernel expansion over inducing
//! points whose coefficients maximize
//!
//! ```text
//! V(a) = (1/Z) a' K_U K_D g - (lambda/2) a' K_U a - (beta/2) a' a
//! ```
//!
//! The maximizer is `a = (1/Z) (lambda K_U + beta I)^-1 K_U K_D g`. For an
//! arbitrary inducing set it is computed with a dense Cholesky solve; when the
//! inducing points form a tensor sub-grid the kernel matrix is a Kronecker
//! product and the solve goes through per-axis eigendecompositions instead.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::RewardField;
use crate::kernel::Rbf;
use crate::linalg::{dot, kron_matvec, spd_solve, sym_eigen, DMat, LinalgError};
use crate::state::{ApproachState, Axis, StateGrid, StateMetric};
use crate::Scalar;

#[derive(Debug, Error, PartialEq)]
pub enum KdmrlError {
    #[error("invalid parameter: {0}")]
    Param(&'static str),
    #[error("no demonstration states")]
    NoData,
    #[error("leverage vector has {found} entries for {expected} data states")]
    LeverageLength { expected: usize, found: usize },
    #[error("non-finite kernel entry K_U[{row}][{col}]")]
    NonFiniteKernel { row: usize, col: usize },
    #[error("linear solve failed: {0}")]
    Solve(LinalgError),
    #[error("density vector is identically zero")]
    ZeroDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KdmrlParams<T> {
    /// Hilbert-norm smoothness weight.
    pub lambda: T,
    /// Coefficient norm regularizer.
    pub beta: T,
    /// Leverage decay in `[0, 1]`.
    pub delta: T,
    /// Normalization constant of the density estimate.
    pub z: T,
    /// Width of the reward kernel.
    pub sigma_k: T,
    /// Width of the density kernel.
    pub sigma_mu: T,
}

impl<T: Scalar> Default for KdmrlParams<T> {
    fn default() -> Self {
        Self {
            lambda: T::lit(0.01),
            beta: T::lit(0.2),
            delta: T::lit(0.8),
            z: T::lit(200.0),
            sigma_k: T::lit(1.0),
            sigma_mu: T::lit(0.5),
        }
    }
}

impl<T: Scalar> KdmrlParams<T> {
    pub fn validate(&self) -> Result<(), KdmrlError> {
        if !(self.lambda > T::zero()) {
            return Err(KdmrlError::Param("lambda must be > 0"));
        }
        if !(self.beta >= T::zero()) {
            return Err(KdmrlError::Param("beta must be >= 0"));
        }
        if !(self.z > T::zero()) {
            return Err(KdmrlError::Param("Z must be > 0"));
        }
        if !(self.delta >= T::zero() && self.delta <= T::one()) {
            return Err(KdmrlError::Param("delta must lie in [0, 1]"));
        }
        if !(self.sigma_k > T::zero() && self.sigma_mu > T::zero()) {
            return Err(KdmrlError::Param("kernel widths must be > 0"));
        }
        Ok(())
    }
}

/// One expert trajectory in the human frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration<T> {
    pub states: Vec<ApproachState<T>>,
}

impl<T: Scalar> Demonstration<T> {
    pub fn new(states: Vec<ApproachState<T>>) -> Result<Self, KdmrlError> {
        if states.is_empty() {
            return Err(KdmrlError::NoData);
        }
        Ok(Self { states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// `gamma_t = delta^(T - t)` for `t = 1..=T`.
pub fn leverage<T: Scalar>(len: usize, delta: T) -> Vec<T> {
    (1..=len)
        .map(|t| {
            let e = (len - t) as i32;
            if e == 0 {
                T::one()
            } else {
                delta.powi(e)
            }
        })
        .collect()
}

/// Data weight `cos(pi/2 * (1 - gamma))`.
pub fn leverage_weight<T: Scalar>(gamma: T) -> T {
    if gamma == T::one() {
        return T::one();
    }
    (T::FRAC_PI_2() * (T::one() - gamma)).cos()
}

/// All demonstration states stacked with their leverage weights `g_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet<T> {
    pub states: Vec<ApproachState<T>>,
    pub weights: Vec<T>,
}

impl<T: Scalar> DataSet<T> {
    pub fn from_demonstrations(demos: &[Demonstration<T>], delta: T) -> Self {
        let mut states = Vec::new();
        let mut weights = Vec::new();
        for d in demos {
            for (s, gamma) in d.states.iter().zip(leverage(d.len(), delta)) {
                states.push(*s);
                weights.push(leverage_weight(gamma));
            }
        }
        Self { states, weights }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Per-axis factors of an RBF centred at `c`, evaluated at every bin of `grid`.
struct AxisFactors<T> {
    x: Vec<T>,
    y: Vec<T>,
    theta: Vec<T>,
    v: Vec<T>,
    g: Vec<T>,
}

impl<T: Scalar> AxisFactors<T> {
    fn new(k: &Rbf<T>, grid: &StateGrid<T>, c: &ApproachState<T>) -> Self {
        let f = |axis, bins: &[T], cv: T| bins.iter().map(|&b| k.axis_factor(axis, b, cv)).collect::<Vec<_>>();
        Self {
            x: f(Axis::X, &grid.x_bins, c.x),
            y: f(Axis::Y, &grid.y_bins, c.y),
            theta: f(Axis::Theta, &grid.theta_bins, c.theta),
            v: f(Axis::V, &grid.v_bins, c.v),
            g: grid
                .g_bins
                .iter()
                .map(|&g| if g == c.g { T::one() } else { T::zero() })
                .collect(),
        }
    }

    /// Sum of the kernel over the whole tensor grid.
    fn total(&self) -> T {
        let s = |v: &[T]| v.iter().copied().fold(T::zero(), |a, b| a + b);
        s(&self.x) * s(&self.y) * s(&self.theta) * s(&self.v) * s(&self.g)
    }

    fn accumulate(&self, w: T, out: &mut [T]) {
        let mut k = 0;
        for &fx in &self.x {
            let wx = w * fx;
            for &fy in &self.y {
                let wy = wx * fy;
                for &ft in &self.theta {
                    let wt = wy * ft;
                    for &fv in &self.v {
                        let wv = wt * fv;
                        for &fg in &self.g {
                            out[k] += wv * fg;
                            k += 1;
                        }
                    }
                }
            }
        }
    }
}

/// The reward learner bound to a state grid and kernel metric.
#[derive(Debug, Clone)]
pub struct Kdmrl<T> {
    pub params: KdmrlParams<T>,
    pub metric: StateMetric<T>,
    pub grid: StateGrid<T>,
}

impl<T: Scalar> Kdmrl<T> {
    pub fn new(params: KdmrlParams<T>, grid: StateGrid<T>) -> Result<Self, KdmrlError> {
        params.validate()?;
        Ok(Self {
            params,
            metric: StateMetric::default(),
            grid,
        })
    }

    pub fn with_metric(mut self, metric: StateMetric<T>) -> Self {
        self.metric = metric;
        self
    }

    pub fn reward_kernel(&self) -> Rbf<T> {
        Rbf::with_metric(self.params.sigma_k, self.metric)
    }

    pub fn density_kernel(&self) -> Rbf<T> {
        Rbf::with_metric(self.params.sigma_mu, self.metric)
    }

    /// Sum over the grid of the unnormalized density kernel centred at `d`.
    pub fn density_normalizer(&self, d: &ApproachState<T>) -> T {
        AxisFactors::new(&self.density_kernel(), &self.grid, d).total()
    }

    /// Density kernel normalized to sum to one over the grid.
    pub fn k_mu(&self, x: &ApproachState<T>, d: &ApproachState<T>) -> T {
        let n = self.density_normalizer(d);
        if n == T::zero() {
            return T::zero();
        }
        self.density_kernel().eval(x, d) / n
    }

    fn normalized_weights(&self, data: &DataSet<T>) -> Vec<T> {
        data.states
            .iter()
            .zip(&data.weights)
            .map(|(d, &g)| {
                let n = self.density_normalizer(d);
                if n == T::zero() {
                    T::zero()
                } else {
                    g / n
                }
            })
            .collect()
    }

    /// `sum_k w_k k_mu(x, d_k)` at every point of a tensor grid.
    fn density_sum_on(&self, grid: &StateGrid<T>, data: &DataSet<T>) -> Vec<T> {
        let k = self.density_kernel();
        let w = self.normalized_weights(data);
        let mut out = vec![T::zero(); grid.len()];
        for (d, &wk) in data.states.iter().zip(&w) {
            if wk != T::zero() {
                AxisFactors::new(&k, grid, d).accumulate(wk, &mut out);
            }
        }
        out
    }

    /// Leverage-weighted kernel density estimate at every grid state.
    pub fn estimate_density(&self, demos: &[Demonstration<T>]) -> Result<Vec<T>, KdmrlError> {
        let data = DataSet::from_demonstrations(demos, self.params.delta);
        if data.is_empty() {
            return Err(KdmrlError::NoData);
        }
        let inv_z = T::one() / self.params.z;
        Ok(self.density_sum_on(&self.grid, &data).into_iter().map(|v| v * inv_z).collect())
    }

    /// `[K_U]_ij = k(u_i, u_j)`.
    pub fn inducing_kernel(&self, inducing: &[ApproachState<T>]) -> DMat<T> {
        let k = self.reward_kernel();
        DMat::from_fn(inducing.len(), inducing.len(), |i, j| k.eval(&inducing[i], &inducing[j]))
    }

    /// `K_D g` with `[K_D]_ij = k_mu(u_i, d_j)`.
    pub fn density_rhs(&self, inducing: &[ApproachState<T>], data: &DataSet<T>) -> Vec<T> {
        let k = self.density_kernel();
        let w = self.normalized_weights(data);
        inducing
            .iter()
            .map(|u| {
                data.states
                    .iter()
                    .zip(&w)
                    .map(|(d, &wk)| wk * k.eval(u, d))
                    .fold(T::zero(), |a, b| a + b)
            })
            .collect()
    }

    fn check_data(data: &DataSet<T>) -> Result<(), KdmrlError> {
        if data.is_empty() {
            return Err(KdmrlError::NoData);
        }
        if data.weights.len() != data.states.len() {
            return Err(KdmrlError::LeverageLength {
                expected: data.states.len(),
                found: data.weights.len(),
            });
        }
        Ok(())
    }

    /// Closed-form maximizer of the objective for an arbitrary inducing set.
    pub fn solve_alpha(&self, inducing: &[ApproachState<T>], data: &DataSet<T>) -> Result<Vec<T>, KdmrlError> {
        Self::check_data(data)?;
        let ku = self.inducing_kernel(inducing);
        if let Some((row, col)) = ku.first_non_finite() {
            return Err(KdmrlError::NonFiniteKernel { row, col });
        }
        let b = self.density_rhs(inducing, data);
        let rhs: Vec<T> = ku.matvec(&b).into_iter().map(|v| v / self.params.z).collect();
        let a = ku.scale_add_identity(self.params.lambda, self.params.beta);
        spd_solve(&a, &rhs).map_err(|e| match e {
            LinalgError::NonFinite(row, col) => KdmrlError::NonFiniteKernel { row, col },
            other => KdmrlError::Solve(other),
        })
    }

    /// Objective value for coefficients over an arbitrary inducing set.
    pub fn objective(&self, alpha: &[T], inducing: &[ApproachState<T>], data: &DataSet<T>) -> T {
        let ku = self.inducing_kernel(inducing);
        let b = self.density_rhs(inducing, data);
        objective_from_parts(alpha, &ku, &b, &self.params)
    }

    /// Fits coefficients on the grid's inducing sub-grid using the Kronecker
    /// structure of the kernel matrix.
    pub fn fit(&self, demos: &[Demonstration<T>]) -> Result<KdmrlModel<T>, KdmrlError> {
        let data = DataSet::from_demonstrations(demos, self.params.delta);
        self.fit_data(&data)
    }

    pub fn fit_data(&self, data: &DataSet<T>) -> Result<KdmrlModel<T>, KdmrlError> {
        Self::check_data(data)?;
        let inducing = self.grid.inducing_grid();
        let kernel = self.reward_kernel();
        let tables = kernel.tables(&inducing, &inducing);
        for m in tables.as_slice() {
            if let Some((row, col)) = m.first_non_finite() {
                return Err(KdmrlError::NonFiniteKernel { row, col });
            }
        }
        let b = self.density_sum_on(&inducing, data);

        let eig: Vec<(Vec<T>, DMat<T>)> = tables.as_slice().iter().map(|m| sym_eigen(m)).collect();
        let q: Vec<&DMat<T>> = eig.iter().map(|(_, v)| v).collect();
        let qt_owned: Vec<DMat<T>> = q.iter().map(|m| m.transpose()).collect();
        let qt: Vec<&DMat<T>> = qt_owned.iter().collect();
        let vals: Vec<&[T]> = eig.iter().map(|(w, _)| w.as_slice()).collect();

        let mut c = kron_matvec(&qt, &b);
        let shape = inducing.shape();
        let mut idx = [0usize; 5];
        let (lambda, beta) = (self.params.lambda, self.params.beta);
        for ci in c.iter_mut() {
            let e = (0..5).fold(T::one(), |acc, a| acc * vals[a][idx[a]]);
            let denom = lambda * e + beta;
            *ci = if denom == T::zero() { T::zero() } else { *ci * e / denom };
            for a in (0..5).rev() {
                idx[a] += 1;
                if idx[a] < shape[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
        let inv_z = T::one() / self.params.z;
        let alpha: Vec<T> = kron_matvec(&q, &c).into_iter().map(|v| v * inv_z).collect();
        if let Some(i) = alpha.iter().position(|v| !v.is_finite()) {
            return Err(KdmrlError::Solve(LinalgError::NonFinite(i, 0)));
        }

        let ku_alpha = tables.apply(&alpha);
        let objective = inv_z * dot(&ku_alpha, &b)
            - lambda / T::lit(2.0) * dot(&alpha, &ku_alpha)
            - beta / T::lit(2.0) * dot(&alpha, &alpha);
        Ok(KdmrlModel {
            alpha,
            inducing,
            kernel,
            objective,
        })
    }
}

/// Objective from an explicit kernel matrix and `b = K_D g`.
pub fn objective_from_parts<T: Scalar>(alpha: &[T], ku: &DMat<T>, b: &[T], params: &KdmrlParams<T>) -> T {
    let kb = ku.matvec(b);
    let ka = ku.matvec(alpha);
    dot(alpha, &kb) / params.z - params.lambda / T::lit(2.0) * dot(alpha, &ka) - params.beta / T::lit(2.0) * dot(alpha, alpha)
}

/// Kernel expansion `sum_i alpha_i k(x, u_i)`, summed in inducing-index order.
pub fn reward_at<T: Scalar>(x: &ApproachState<T>, alpha: &[T], inducing: &[ApproachState<T>], kernel: &Rbf<T>) -> T {
    alpha
        .iter()
        .zip(inducing)
        .map(|(&a, u)| a * kernel.eval(x, u))
        .fold(T::zero(), |acc, v| acc + v)
}

/// Fitted reward expansion over a tensor inducing grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdmrlModel<T> {
    pub alpha: Vec<T>,
    pub inducing: StateGrid<T>,
    pub kernel: Rbf<T>,
    pub objective: T,
}

impl<T: Scalar> KdmrlModel<T> {
    pub fn reward_at(&self, x: &ApproachState<T>) -> T {
        let states: Vec<_> = self.inducing.states().collect();
        reward_at(x, &self.alpha, &states, &self.kernel)
    }

    pub fn alpha_norm(&self) -> T {
        dot(&self.alpha, &self.alpha).sqrt()
    }

    /// Dense reward over `grid`.
    pub fn field(&self, grid: &StateGrid<T>) -> RewardField<T> {
        let tables = self.kernel.tables(grid, &self.inducing);
        RewardField {
            grid: grid.clone(),
            values: tables.apply(&self.alpha),
        }
    }
}

/// `mu / ||mu||`, the maximizer of `<mu, R>` over the unit ball.
pub fn exact_unit_norm_reward<T: Scalar>(mu: &[T]) -> Result<Vec<T>, KdmrlError> {
    let n = dot(mu, mu).sqrt();
    if !(n > T::zero()) {
        return Err(KdmrlError::ZeroDensity);
    }
    Ok(mu.iter().map(|&m| m / n).collect())
}
