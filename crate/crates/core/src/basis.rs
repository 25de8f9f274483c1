//! Gauss-Lobatto-Legendre reference basis on `[-1, 1]`.
//!
//! Nodes are the roots of `(1 - x^2) L_N'(x)`, found by Newton iteration on
//! `L_N'` starting from Chebyshev-Gauss-Lobatto points. Everything is
//! computed in `f64` and converted to the working precision afterwards.

use crate::error::{Result, SemError};
use crate::scalar::{cast_slice, Real};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// GLL nodes, weights and the Lagrange differentiation matrix for order `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralBasis<T> {
    order: usize,
    nodes: Vec<T>,
    weights: Vec<T>,
    /// Row-major `(N+1) x (N+1)`, `diff[i * (N+1) + j] = l_j'(xi_i)`.
    diff: Vec<T>,
}

/// Builds the order-`order` basis in the requested precision.
pub fn build_basis<T: Real>(order: usize) -> Result<SpectralBasis<T>> {
    SpectralBasis::new(order)
}

impl<T: Real> SpectralBasis<T> {
    pub fn new(order: usize) -> Result<Self> {
        let (nodes, weights, diff) = gll_f64(order)?;
        Ok(SpectralBasis {
            order,
            nodes: cast_slice(&nodes),
            weights: cast_slice(&weights),
            diff: cast_slice(&diff),
        })
    }

    /// Same basis in another precision, recomputed from the `f64` values.
    pub fn to_precision<U: Real>(&self) -> SpectralBasis<U> {
        SpectralBasis::new(self.order).expect("order was validated at construction")
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Points per direction, `N + 1`.
    pub fn points(&self) -> usize {
        self.order + 1
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn diff_matrix(&self) -> &[T] {
        &self.diff
    }

    #[inline(always)]
    pub fn diff(&self, i: usize, j: usize) -> T {
        self.diff[i * (self.order + 1) + j]
    }
}

/// Legendre polynomial `L_n(x)` and its derivative by the three-term recurrence.
pub fn legendre(n: usize, x: f64) -> (f64, f64) {
    if n == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p) = (1.0, x);
    let (mut dp_prev, mut dp) = (0.0, 1.0);
    for k in 1..n {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p - kf * p_prev) / (kf + 1.0);
        let dp_next = dp_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        dp_prev = dp;
        dp = dp_next;
    }
    (p, dp)
}

/// Nodes, weights and row-major differentiation matrix in `f64`.
pub(crate) fn gll_f64(order: usize) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    if order < 1 {
        return Err(SemError::InvalidOrder(order));
    }
    let n = order;
    let np = n + 1;
    let nf = n as f64;
    let lambda = nf * (nf + 1.0);

    let mut nodes = vec![0.0; np];
    nodes[0] = -1.0;
    nodes[n] = 1.0;
    for (i, node) in nodes.iter_mut().enumerate().take(n).skip(1) {
        let mut x = -(std::f64::consts::PI * i as f64 / nf).cos();
        for _ in 0..NEWTON_MAX_ITER {
            let (p, dp) = legendre(n, x);
            // L'' from the Legendre equation, valid away from the endpoints.
            let d2p = (2.0 * x * dp - lambda * p) / (1.0 - x * x);
            let step = dp / d2p;
            x -= step;
            if step.abs() <= NEWTON_TOL {
                break;
            }
        }
        *node = x;
    }
    for i in 0..np / 2 {
        let half = 0.5 * (nodes[n - i] - nodes[i]);
        nodes[i] = -half;
        nodes[n - i] = half;
    }
    if n.is_multiple_of(2) {
        nodes[n / 2] = 0.0;
    }

    let leg: Vec<f64> = nodes.iter().map(|&x| legendre(n, x).0).collect();
    let mut weights: Vec<f64> = leg.iter().map(|&l| 2.0 / (lambda * l * l)).collect();
    for i in 0..np / 2 {
        let avg = 0.5 * (weights[i] + weights[n - i]);
        weights[i] = avg;
        weights[n - i] = avg;
    }

    let mut diff = vec![0.0; np * np];
    for i in 0..np {
        let mut row_sum = 0.0;
        for j in 0..np {
            if i != j {
                let d = leg[i] / (leg[j] * (nodes[i] - nodes[j]));
                diff[i * np + j] = d;
                row_sum += d;
            }
        }
        diff[i * np + i] = -row_sum;
    }
    Ok((nodes, weights, diff))
}
