use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GaussRw, Path, ProductModel};
use crate::error::{config, Result};

/// Stationary filtering variance `(sqrt 5 - 1)/2` of the unit random walk
/// observed in unit noise with `y = 0`.
pub const A3_FILTER_VARIANCE: f64 = 0.618_033_988_749_894_8;

/// Linear-Gaussian state-space model, independent across dimensions.
#[derive(Debug, Clone)]
pub struct LgssmSpec {
    pub horizon: usize,
    pub dim: usize,
    /// `T x D`, row-major by time.
    pub y: Vec<f64>,
    pub initial_variance: f64,
    pub obs_variance: f64,
}

impl LgssmSpec {
    pub fn new(horizon: usize, dim: usize, y: Vec<f64>, initial_variance: f64) -> Result<Self> {
        let spec = Self { horizon, dim, y, initial_variance, obs_variance: 1.0 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_obs_variance(mut self, obs_variance: f64) -> Result<Self> {
        self.obs_variance = obs_variance;
        self.validate()?;
        Ok(self)
    }

    pub fn from_components(c: &GaussRw) -> Result<Self> {
        if c.is_time_factorised() {
            return config("Kalman recursions need the random-walk transition");
        }
        let spec = Self {
            horizon: c.horizon(),
            dim: c.dim(),
            y: c.y().to_vec(),
            initial_variance: c.initial_variance(),
            obs_variance: c.obs_variance(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon < 1 || self.dim < 1 {
            return config("T and D must be at least 1");
        }
        if self.y.len() != self.horizon * self.dim {
            return config(format!("y must have T*D = {} entries, got {}", self.horizon * self.dim, self.y.len()));
        }
        if self.y.iter().any(|v| !v.is_finite()) {
            return config("observations must be finite");
        }
        if !(self.initial_variance > 0.0 && self.obs_variance > 0.0) {
            return config("variances must be positive");
        }
        Ok(())
    }

    pub fn components(&self) -> Result<GaussRw> {
        GaussRw::new(self.y.clone(), self.dim, self.initial_variance, self.obs_variance)
    }

    pub fn model(&self) -> Result<ProductModel<GaussRw>> {
        ProductModel::new(self.components()?, self.horizon, self.dim)
    }
}

/// Exact filtering and smoothing moments, indexed `[t * D + d]`.
#[derive(Debug, Clone)]
pub struct KalmanResult {
    pub horizon: usize,
    pub dim: usize,
    pub filter_means: Vec<f64>,
    pub filter_variances: Vec<f64>,
    pub smoother_means: Vec<f64>,
    pub smoother_variances: Vec<f64>,
    /// `Cov(x_t, x_{t+1} | y)` for `t < T - 1`, indexed `[t * D + d]`.
    pub pairwise_smoother_covariances: Vec<f64>,
    pub log_marginal_likelihood: f64,
}

/// Kalman filter and Rauch–Tung–Striebel smoother, run independently per dimension.
pub fn kalman_smooth(spec: &LgssmSpec) -> Result<KalmanResult> {
    spec.validate()?;
    let (t_len, dim) = (spec.horizon, spec.dim);
    let r = spec.obs_variance;
    let mut fm = vec![0.0; t_len * dim];
    let mut fv = vec![0.0; t_len * dim];
    let mut sm = vec![0.0; t_len * dim];
    let mut sv = vec![0.0; t_len * dim];
    let mut pc = vec![0.0; t_len.saturating_sub(1) * dim];
    let mut loglik = 0.0;
    for d in 0..dim {
        for t in 0..t_len {
            let (pm, pv) = if t == 0 {
                (0.0, spec.initial_variance)
            } else {
                (fm[(t - 1) * dim + d], fv[(t - 1) * dim + d] + 1.0)
            };
            let s = pv + r;
            let e = spec.y[t * dim + d] - pm;
            loglik += -0.5 * (2.0 * std::f64::consts::PI * s).ln() - 0.5 * e * e / s;
            let k = pv / s;
            fm[t * dim + d] = pm + k * e;
            fv[t * dim + d] = pv * r / s;
        }
        let last = (t_len - 1) * dim + d;
        sm[last] = fm[last];
        sv[last] = fv[last];
        for t in (0..t_len - 1).rev() {
            let i = t * dim + d;
            let j = (t + 1) * dim + d;
            let pv = fv[i] + 1.0;
            let gain = fv[i] / pv;
            sm[i] = fm[i] + gain * (sm[j] - fm[i]);
            sv[i] = fv[i] + gain * gain * (sv[j] - pv);
            pc[i] = gain * sv[j];
        }
    }
    Ok(KalmanResult {
        horizon: t_len,
        dim,
        filter_means: fm,
        filter_variances: fv,
        smoother_means: sm,
        smoother_variances: sv,
        pairwise_smoother_covariances: pc,
        log_marginal_likelihood: loglik,
    })
}

impl KalmanResult {
    /// Full `T x T` posterior covariance of dimension `d`.
    pub fn smoother_covariance(&self, d: usize) -> Vec<Vec<f64>> {
        let t_len = self.horizon;
        let mut c = vec![vec![0.0; t_len]; t_len];
        for t in 0..t_len {
            c[t][t] = self.smoother_variances[t * self.dim + d];
            for s in (0..t).rev() {
                let fv = self.filter_variances[s * self.dim + d];
                let gain = fv / (fv + 1.0);
                c[s][t] = gain * c[s + 1][t];
                c[t][s] = c[s][t];
            }
        }
        c
    }

    /// Exact draw from the smoothing distribution by backward simulation.
    pub fn sample_path<R: Rng + ?Sized>(&self, rng: &mut R) -> Path {
        let (t_len, dim) = (self.horizon, self.dim);
        let mut path = Path::zeros(t_len, dim);
        for d in 0..dim {
            let last = (t_len - 1) * dim + d;
            let z: f64 = StandardNormal.sample(rng);
            let mut next = self.filter_means[last] + self.filter_variances[last].sqrt() * z;
            path.row_mut(t_len - 1)[d] = next;
            for t in (0..t_len - 1).rev() {
                let i = t * dim + d;
                let fv = self.filter_variances[i];
                let gain = fv / (fv + 1.0);
                let mean = self.filter_means[i] + gain * (next - self.filter_means[i]);
                let var = fv / (fv + 1.0);
                let z: f64 = StandardNormal.sample(rng);
                next = mean + var.sqrt() * z;
                path.row_mut(t)[d] = next;
            }
        }
        path
    }
}

/// Draws a path exactly from the joint smoothing distribution.
pub fn ffbs_exact_sample<R: Rng + ?Sized>(spec: &LgssmSpec, rng: &mut R) -> Result<Path> {
    Ok(kalman_smooth(spec)?.sample_path(rng))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AssumptionQuantities {
    pub r: f64,
    pub bound_ok: bool,
}

/// Closed-form lower bound `r_{T|T}` for the `gauss-rw-a3` model with `y = 0`.
pub fn lgssm_assumption_quantities(horizon: usize) -> Result<AssumptionQuantities> {
    if horizon < 1 {
        return config("T must be at least 1");
    }
    let s2 = A3_FILTER_VARIANCE;
    let u = s2 / (s2 + 1.0);
    let r = if horizon == 1 {
        0.5 * ((s2 + 2.0).ln() - s2)
    } else {
        0.5 * (2f64.ln() + (s2 * (u * u - 2.0) + u) / 2.0)
    };
    Ok(AssumptionQuantities { r, bound_ok: r > 0.15 })
}

/// Closed-form smoothing covariance of the `gauss-rw-a3` model with `y = 0`.
pub fn a3_smoother_covariance(horizon: usize) -> Vec<Vec<f64>> {
    let s2 = A3_FILTER_VARIANCE;
    let u = s2 / (s2 + 1.0);
    let var = |t: usize| {
        let k = (horizon - 1 - t) as i32;
        let head = if t + 1 < horizon { u * (1.0 - (u * u).powi(k)) / (1.0 - u * u) } else { 0.0 };
        head + (u * u).powi(k) * s2
    };
    let mut c = vec![vec![0.0; horizon]; horizon];
    for (s, row) in c.iter_mut().enumerate() {
        for (t, v) in row.iter_mut().enumerate() {
            *v = u.powi((t as i32 - s as i32).abs()) * var(s.max(t));
        }
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn a3_spec(t_len: usize) -> LgssmSpec {
        LgssmSpec::new(t_len, 1, vec![0.0; t_len], A3_FILTER_VARIANCE + 1.0).unwrap()
    }

    #[test]
    fn filter_variance_is_stationary() {
        let k = kalman_smooth(&a3_spec(8)).unwrap();
        for v in &k.filter_variances {
            assert!((v - 0.618034).abs() < 1e-6);
            assert!((v - A3_FILTER_VARIANCE).abs() < 1e-14);
        }
        assert!((k.smoother_variances[7] - A3_FILTER_VARIANCE).abs() < 1e-14);
    }

    #[test]
    fn filter_variance_constant_is_golden_ratio_conjugate() {
        assert!((A3_FILTER_VARIANCE - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn covariance_matches_closed_form() {
        for t_len in [1, 3, 5] {
            let k = kalman_smooth(&a3_spec(t_len)).unwrap();
            let c = k.smoother_covariance(0);
            let oracle = a3_smoother_covariance(t_len);
            for s in 0..t_len {
                for t in 0..t_len {
                    assert!((c[s][t] - oracle[s][t]).abs() < 1e-10, "T={t_len} ({s},{t})");
                }
            }
        }
    }

    #[test]
    fn pairwise_covariances_agree_with_full_matrix() {
        let mut rng = stream(1, "test", &[]);
        let y: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
        let k = kalman_smooth(&LgssmSpec::new(6, 2, y, 1.0).unwrap()).unwrap();
        for d in 0..2 {
            let c = k.smoother_covariance(d);
            for t in 0..5 {
                assert!((c[t][t + 1] - k.pairwise_smoother_covariances[t * 2 + d]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn assumption_quantities() {
        let r1 = lgssm_assumption_quantities(1).unwrap();
        let r2 = lgssm_assumption_quantities(2).unwrap();
        assert!((r1.r - 0.172195).abs() < 1e-6 && r1.bound_ok);
        assert!((r2.r - 0.155590).abs() < 1e-6 && r2.bound_ok);
        assert_eq!(lgssm_assumption_quantities(40).unwrap(), r2);
        assert!(lgssm_assumption_quantities(0).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = a3_spec(4);
        let a = ffbs_exact_sample(&spec, &mut stream(9, "init", &[1])).unwrap();
        let b = ffbs_exact_sample(&spec, &mut stream(9, "init", &[1])).unwrap();
        assert_eq!(a, b);
    }
}
