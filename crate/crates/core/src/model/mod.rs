//! Feynman–Kac models built from univariate components replicated over `D`
//! spatial dimensions, plus the linear-Gaussian model and its exact Kalman
//! oracle.
//!
//! Time indices are zero-based throughout the crate: `t = 0` is the initial
//! time and uses the initial density `m_1`; `t >= 1` uses the transition
//! density `m_t(x_{t-1}, x_t)`.
//!
//! All densities are kept in the log domain. Sums over the spatial index run
//! strictly left to right so results are bit-identical between runs.

mod gauss;
mod kalman;
mod observations;

pub use gauss::{GaussRw, ModelPreset};
pub use kalman::{
    a3_smoother_covariance, ffbs_exact_sample, kalman_smooth, lgssm_assumption_quantities, AssumptionQuantities,
    KalmanResult, LgssmSpec, A3_FILTER_VARIANCE,
};
pub use observations::{read_observations_csv, simulate_observations, write_observations_csv};

use rand::Rng;

use crate::error::{config, Result};

/// First and second derivative of a univariate log density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Derivs {
    pub d1: f64,
    pub d2: f64,
}

/// Partial derivatives of `log m_t(x_prev, x)` with respect to each argument.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionDerivs {
    pub d_prev: f64,
    pub d_cur: f64,
    pub d2_prev: f64,
    pub d2_cur: f64,
}

/// Univariate building blocks of a product-form Feynman–Kac model.
///
/// `d` is the spatial component the call refers to. Mutation densities are
/// usually shared across `d`, potentials typically depend on it through the
/// observations. Potentials must be strictly positive, i.e. `log_g` finite for
/// finite input.
pub trait Components: Send + Sync {
    fn log_m1(&self, d: usize, x: f64) -> f64;
    fn sample_m1<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> f64;
    /// Transition density into time `t >= 1`.
    fn log_m(&self, t: usize, d: usize, x_prev: f64, x: f64) -> f64;
    fn sample_m<R: Rng + ?Sized>(&self, t: usize, d: usize, x_prev: f64, rng: &mut R) -> f64;
    fn log_g(&self, t: usize, d: usize, x: f64) -> f64;

    fn d_log_m1(&self, _d: usize, _x: f64) -> Option<Derivs> {
        None
    }
    fn d_log_m(&self, _t: usize, _d: usize, _x_prev: f64, _x: f64) -> Option<TransitionDerivs> {
        None
    }
    fn d_log_g(&self, _t: usize, _d: usize, _x: f64) -> Option<Derivs> {
        None
    }
}

/// A `T x D` state trajectory, stored row-major by time.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    horizon: usize,
    dim: usize,
    values: Vec<f64>,
}

impl Path {
    pub fn zeros(horizon: usize, dim: usize) -> Self {
        Self { horizon, dim, values: vec![0.0; horizon * dim] }
    }

    pub fn from_values(horizon: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != horizon * dim {
            return config(format!(
                "path needs {} values for T={horizon}, D={dim}, got {}",
                horizon * dim,
                values.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return config("path entries must be finite");
        }
        Ok(Self { horizon, dim, values })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.dim..(t + 1) * self.dim]
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.values[t * self.dim + d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Product-form model: `D` copies of the univariate components over `T` time steps.
#[derive(Debug, Clone)]
pub struct ProductModel<C> {
    components: C,
    horizon: usize,
    dim: usize,
}

/// Builds a product model, rejecting empty horizons or dimensions.
pub fn build_product_model<C: Components>(components: C, horizon: usize, dim: usize) -> Result<ProductModel<C>> {
    ProductModel::new(components, horizon, dim)
}

impl<C: Components> ProductModel<C> {
    pub fn new(components: C, horizon: usize, dim: usize) -> Result<Self> {
        if horizon < 1 {
            return config("time horizon T must be at least 1");
        }
        if dim < 1 {
            return config("dimension D must be at least 1");
        }
        Ok(Self { components, horizon, dim })
    }

    pub fn components(&self) -> &C {
        &self.components
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `log G_t(x)`, summed over `d` in ascending order.
    #[inline]
    pub fn log_potential(&self, t: usize, x: &[f64]) -> f64 {
        let mut s = 0.0;
        for (d, &xd) in x.iter().enumerate() {
            s += self.components.log_g(t, d, xd);
        }
        s
    }

    /// `log m_t(prev, x)`; at `t = 0` this is `log m_1(x)` and `prev` is ignored.
    #[inline]
    pub fn log_mutation(&self, t: usize, prev: &[f64], x: &[f64]) -> f64 {
        let mut s = 0.0;
        if t == 0 {
            for (d, &xd) in x.iter().enumerate() {
                s += self.components.log_m1(d, xd);
            }
        } else {
            for (d, (&p, &xd)) in prev.iter().zip(x).enumerate() {
                s += self.components.log_m(t, d, p, xd);
            }
        }
        s
    }

    /// Draws `out ~ M_t(prev, .)` (or `M_1` at `t = 0`).
    pub fn sample_mutation<R: Rng + ?Sized>(&self, t: usize, prev: &[f64], out: &mut [f64], rng: &mut R) {
        if t == 0 {
            for (d, o) in out.iter_mut().enumerate() {
                *o = self.components.sample_m1(d, rng);
            }
        } else {
            for (d, (o, &p)) in out.iter_mut().zip(prev).enumerate() {
                *o = self.components.sample_m(t, d, p, rng);
            }
        }
    }

    /// Unnormalised log joint smoothing density of a full path.
    pub fn log_joint(&self, path: &Path) -> f64 {
        let mut s = 0.0;
        for t in 0..self.horizon {
            let prev = if t == 0 { &[][..] } else { path.row(t - 1) };
            s += self.log_mutation(t, prev, path.row(t));
            s += self.log_potential(t, path.row(t));
        }
        s
    }

    /// Draws a path from the mutation kernels alone (the prior of a state-space model).
    pub fn sample_prior_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Path {
        let mut path = Path::zeros(self.horizon, self.dim);
        let mut prev = vec![0.0; self.dim];
        for t in 0..self.horizon {
            let mut cur = vec![0.0; self.dim];
            self.sample_mutation(t, &prev, &mut cur, rng);
            path.row_mut(t).copy_from_slice(&cur);
            prev = cur;
        }
        path
    }

    pub(crate) fn check_path(&self, path: &Path) -> Result<()> {
        if path.horizon() != self.horizon || path.dim() != self.dim {
            return config(format!(
                "path shape {}x{} does not match model {}x{}",
                path.horizon(),
                path.dim(),
                self.horizon,
                self.dim
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;
    use std::f64::consts::PI;

    fn standard_model(dim: usize) -> ProductModel<GaussRw> {
        let gauss = GaussRw::new(vec![0.0; dim], dim, 1.0, 1.0).unwrap();
        build_product_model(gauss, 1, dim).unwrap()
    }

    #[test]
    fn potential_at_mode_two_dims() {
        let m = standard_model(2);
        let v = m.log_potential(0, &[0.0, 0.0]);
        assert!((v + (2.0 * PI).ln()).abs() < 1e-12);
        assert!((v - (-1.837877)).abs() < 1e-6);
    }

    #[test]
    fn potential_unit_penalty() {
        let m = standard_model(2);
        let v = m.log_potential(0, &[1.0, 0.0]);
        assert!((v - (-(2.0 * PI).ln() - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn potential_matches_direct_product() {
        let mut rng = stream(11, "test", &[]);
        let y: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let m = build_product_model(GaussRw::new(y.clone(), 5, 1.0, 1.0).unwrap(), 1, 5).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let direct: f64 = x
                .iter()
                .zip(&y)
                .map(|(xi, yi)| (-(yi - xi) * (yi - xi) / 2.0).exp() / (2.0 * PI).sqrt())
                .product();
            assert!((m.log_potential(0, &x) - direct.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_empty_sizes() {
        let g = GaussRw::new(vec![0.0], 1, 1.0, 1.0).unwrap();
        assert!(build_product_model(g.clone(), 0, 1).is_err());
        assert!(build_product_model(g, 1, 0).is_err());
    }

    #[test]
    fn sums_are_sequential_left_to_right() {
        let mut rng = stream(5, "test", &[]);
        let dim = 37;
        let y: Vec<f64> = (0..2 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let g = GaussRw::new(y, dim, 1.0, 1.0).unwrap();
        let m = build_product_model(g.clone(), 2, dim).unwrap();
        let prev: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        let mut s = 0.0;
        for d in 0..dim {
            s += g.log_m(1, d, prev[d], x[d]);
        }
        assert_eq!(s.to_bits(), m.log_mutation(1, &prev, &x).to_bits());
        let mut s = 0.0;
        for d in 0..dim {
            s += g.log_g(1, d, x[d]);
        }
        assert_eq!(s.to_bits(), m.log_potential(1, &x).to_bits());
    }
}
