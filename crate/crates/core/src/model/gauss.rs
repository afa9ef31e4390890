use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Components, Derivs, TransitionDerivs};
use crate::error::{config, Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Gaussian random walk observed in Gaussian noise, per dimension:
/// `x_1 ~ N(0, v0)`, `x_t = x_{t-1} + N(0, 1)`, `y_t ~ N(x_t, r)`.
///
/// With `time_factorised` set the transitions ignore the previous state and
/// every `x_t` is drawn from `N(0, v0)`.
#[derive(Debug, Clone)]
pub struct GaussRw {
    y: Vec<f64>,
    dim: usize,
    initial_variance: f64,
    obs_variance: f64,
    time_factorised: bool,
    log_norm_m1: f64,
    log_norm_g: f64,
}

impl GaussRw {
    /// `y` is `T x D`, row-major by time.
    pub fn new(y: Vec<f64>, dim: usize, initial_variance: f64, obs_variance: f64) -> Result<Self> {
        if dim == 0 || y.len() % dim != 0 || y.is_empty() {
            return config(format!("observation array of length {} is not a multiple of D={dim}", y.len()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return config("observations must be finite");
        }
        if !(initial_variance > 0.0 && initial_variance.is_finite()) {
            return config("initial variance must be positive");
        }
        if !(obs_variance > 0.0 && obs_variance.is_finite()) {
            return config("observation variance must be positive");
        }
        Ok(Self {
            y,
            dim,
            initial_variance,
            obs_variance,
            time_factorised: false,
            log_norm_m1: -HALF_LN_2PI - 0.5 * initial_variance.ln(),
            log_norm_g: -HALF_LN_2PI - 0.5 * obs_variance.ln(),
        })
    }

    /// Same potentials, but `m_t(x_prev, x) = N(x; 0, v0)` for every `t`.
    pub fn time_factorised(mut self) -> Self {
        self.time_factorised = true;
        self
    }

    pub fn is_time_factorised(&self) -> bool {
        self.time_factorised
    }

    pub fn horizon(&self) -> usize {
        self.y.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn initial_variance(&self) -> f64 {
        self.initial_variance
    }

    pub fn obs_variance(&self) -> f64 {
        self.obs_variance
    }

    #[inline]
    fn obs(&self, t: usize, d: usize) -> f64 {
        self.y[t * self.dim + d]
    }
}

impl Components for GaussRw {
    #[inline]
    fn log_m1(&self, _d: usize, x: f64) -> f64 {
        self.log_norm_m1 - 0.5 * x * x / self.initial_variance
    }

    fn sample_m1<R: Rng + ?Sized>(&self, _d: usize, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.initial_variance.sqrt() * z
    }

    #[inline]
    fn log_m(&self, _t: usize, _d: usize, x_prev: f64, x: f64) -> f64 {
        if self.time_factorised {
            self.log_norm_m1 - 0.5 * x * x / self.initial_variance
        } else {
            let e = x - x_prev;
            -HALF_LN_2PI - 0.5 * e * e
        }
    }

    fn sample_m<R: Rng + ?Sized>(&self, _t: usize, _d: usize, x_prev: f64, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        if self.time_factorised {
            self.initial_variance.sqrt() * z
        } else {
            x_prev + z
        }
    }

    #[inline]
    fn log_g(&self, t: usize, d: usize, x: f64) -> f64 {
        let e = self.obs(t, d) - x;
        self.log_norm_g - 0.5 * e * e / self.obs_variance
    }

    fn d_log_m1(&self, _d: usize, x: f64) -> Option<Derivs> {
        Some(Derivs { d1: -x / self.initial_variance, d2: -1.0 / self.initial_variance })
    }

    fn d_log_m(&self, _t: usize, _d: usize, x_prev: f64, x: f64) -> Option<TransitionDerivs> {
        if self.time_factorised {
            let v = self.initial_variance;
            return Some(TransitionDerivs { d_prev: 0.0, d_cur: -x / v, d2_prev: 0.0, d2_cur: -1.0 / v });
        }
        let e = x - x_prev;
        Some(TransitionDerivs { d_prev: e, d_cur: -e, d2_prev: -1.0, d2_cur: -1.0 })
    }

    fn d_log_g(&self, t: usize, d: usize, x: f64) -> Option<Derivs> {
        let r = self.obs_variance;
        Some(Derivs { d1: (self.obs(t, d) - x) / r, d2: -1.0 / r })
    }
}

/// Named model configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelPreset {
    /// Standard normal initial state, unit random-walk and observation noise.
    GaussRw,
    /// As `GaussRw` but with initial variance `sigma^2 + 1`, `sigma^2 = (sqrt 5 - 1)/2`,
    /// which makes the filtering variance stationary when `y = 0`.
    GaussRwA3,
}

impl ModelPreset {
    pub fn name(self) -> &'static str {
        match self {
            Self::GaussRw => "gauss-rw",
            Self::GaussRwA3 => "gauss-rw-a3",
        }
    }

    pub fn initial_variance(self) -> f64 {
        match self {
            Self::GaussRw => 1.0,
            Self::GaussRwA3 => super::A3_FILTER_VARIANCE + 1.0,
        }
    }

    pub fn build(self, y: Vec<f64>, dim: usize) -> Result<GaussRw> {
        GaussRw::new(y, dim, self.initial_variance(), 1.0)
    }
}

impl FromStr for ModelPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gauss-rw" => Ok(Self::GaussRw),
            "gauss-rw-a3" => Ok(Self::GaussRwA3),
            other => Err(Error::Config(format!("unknown model preset '{other}'"))),
        }
    }
}
