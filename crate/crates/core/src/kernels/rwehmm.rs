//! Random-walk embedded HMM: correlated Gaussian scattering around the
//! reference followed by exact sampling of an index path by forward
//! filtering and backward sampling.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::genealogy::decode_indices;
use super::{check_reference, read_off, EvalCounts, GenealogyRecord, KernelConfig, SmoothingKernel};
use crate::error::{config, Result};
use crate::model::{Components, Path, ProductModel};
use crate::selection::{log_sum_exp, softmax, Cdf};

/// `N + 1` particles per time, index 0 equal to the reference.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParticleCloud {
    pub horizon: usize,
    pub n1: usize,
    pub dim: usize,
    /// `[t][n][d]`
    pub z: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(horizon: usize, n1: usize, dim: usize) -> Self {
        Self { horizon, n1, dim, z: vec![0.0; horizon * n1 * dim] }
    }

    #[inline]
    pub fn particle(&self, t: usize, n: usize) -> &[f64] {
        let off = (t * self.n1 + n) * self.dim;
        &self.z[off..off + self.dim]
    }

    pub fn particle_mut(&mut self, t: usize, n: usize) -> &mut [f64] {
        let off = (t * self.n1 + n) * self.dim;
        &mut self.z[off..off + self.dim]
    }

    pub(crate) fn reshape(&mut self, horizon: usize, n1: usize, dim: usize) {
        self.horizon = horizon;
        self.n1 = n1;
        self.dim = dim;
        self.z.resize(horizon * n1 * dim, 0.0);
    }

    /// Scatters the time-`t` particles around `x_t` with scale `ell_t`.
    pub(crate) fn scatter_time<R: Rng + ?Sized>(&mut self, t: usize, x: &[f64], ell: f64, centre: &mut Vec<f64>, rng: &mut R) {
        let dim = self.dim;
        let sd = (ell / (2.0 * dim as f64)).sqrt();
        centre.resize(dim, 0.0);
        for (c, &xd) in centre.iter_mut().zip(x) {
            let e: f64 = StandardNormal.sample(rng);
            *c = xd + sd * e;
        }
        self.particle_mut(t, 0).copy_from_slice(x);
        for n in 1..self.n1 {
            let row = self.particle_mut(t, n);
            for (o, &c) in row.iter_mut().zip(centre.iter()) {
                let e: f64 = StandardNormal.sample(rng);
                *o = c + sd * e;
            }
        }
    }
}

/// Draws a cloud with `z_t^n - x_t ~ N(0, (ell_t/D) * (I + 11^T)/2)` jointly over `n`, independently over `(t, d)`.
pub fn scatter_cloud<R: Rng + ?Sized>(path: &Path, ell: &[f64], n: usize, rng: &mut R) -> Result<ParticleCloud> {
    let horizon = path.horizon();
    if ell.len() != 1 && ell.len() != horizon {
        return config("ell must have 1 or T entries");
    }
    if ell.iter().any(|&l| !(l > 0.0)) {
        return config("ell entries must be positive");
    }
    let mut cloud = ParticleCloud::new(horizon, n + 1, path.dim());
    let mut centre = Vec::new();
    for t in 0..horizon {
        let l = if ell.len() == 1 { ell[0] } else { ell[t] };
        cloud.scatter_time(t, path.row(t), l, &mut centre, rng);
    }
    Ok(cloud)
}

/// Log density of the time-`t` particles other than `centre`, given that
/// `centre` was the reference the cloud was scattered around.
pub fn scatter_log_density(cloud: &ParticleCloud, t: usize, centre: usize, ell: f64) -> f64 {
    let n = (cloud.n1 - 1) as f64;
    let s2 = ell / cloud.dim as f64;
    // Sigma = (I + 11^T)/2 on N coordinates: det = (N+1)/2^N,
    // inverse = 2 (I - 11^T/(N+1)).
    let log_det = (n + 1.0).ln() - n * 2f64.ln();
    let zc = cloud.particle(t, centre);
    let mut total = 0.0;
    for d in 0..cloud.dim {
        let (mut s, mut ss) = (0.0, 0.0);
        for m in 0..cloud.n1 {
            if m == centre {
                continue;
            }
            let e = cloud.particle(t, m)[d] - zc[d];
            s += e;
            ss += e * e;
        }
        let quad = 2.0 * (ss - s * s / (n + 1.0));
        total += -0.5 * n * (2.0 * std::f64::consts::PI * s2).ln() - 0.5 * log_det - 0.5 * quad / s2;
    }
    total
}

/// Forward-filtering tables reused across updates.
#[derive(Debug, Clone, Default)]
pub struct FfbsWorkspace {
    /// Normalised log forward weights, `[t * n1 + n]`.
    pub log_w: Vec<f64>,
    /// `trans[(t * n1 + m) * n1 + n] = log m_t(z_{t-1}^m, z_t^n)` for `t >= 1`.
    pub trans: Vec<f64>,
    /// `sum_t log sum_n w_t^n`: the log of the sum of the unnormalised
    /// target over all index paths.
    pub log_normaliser: f64,
    pub evals: EvalCounts,
    buf: Vec<f64>,
    probs: Vec<f64>,
    cdf: Cdf,
}

impl FfbsWorkspace {
    /// Runs the forward recursion on `cloud` under `model`.
    pub fn forward<C: Components>(&mut self, model: &ProductModel<C>, cloud: &ParticleCloud) -> f64 {
        let (horizon, n1) = (cloud.horizon, cloud.n1);
        self.log_w.resize(horizon * n1, 0.0);
        self.trans.resize(horizon * n1 * n1, 0.0);
        self.buf.resize(n1, 0.0);
        self.evals = EvalCounts::default();
        let mut log_norm = 0.0;
        for n in 0..n1 {
            let z = cloud.particle(0, n);
            self.log_w[n] = model.log_mutation(0, &[], z) + model.log_potential(0, z);
        }
        self.evals.mutation += n1 as u64;
        self.evals.potential += n1 as u64;
        log_norm += normalise(&mut self.log_w[..n1]);
        for t in 1..horizon {
            for m in 0..n1 {
                let zp = cloud.particle(t - 1, m);
                for n in 0..n1 {
                    self.trans[(t * n1 + m) * n1 + n] = model.log_mutation(t, zp, cloud.particle(t, n));
                }
            }
            self.evals.mutation += (n1 * n1) as u64;
            for n in 0..n1 {
                for m in 0..n1 {
                    self.buf[m] = self.log_w[(t - 1) * n1 + m] + self.trans[(t * n1 + m) * n1 + n];
                }
                self.log_w[t * n1 + n] = log_sum_exp(&self.buf) + model.log_potential(t, cloud.particle(t, n));
            }
            self.evals.potential += n1 as u64;
            log_norm += normalise(&mut self.log_w[t * n1..(t + 1) * n1]);
        }
        self.log_normaliser = log_norm;
        log_norm
    }

    /// Backward pass after [`forward`](Self::forward); fills `rec.selected`,
    /// the forward weights and the backward distributions.
    pub fn backward<R: Rng + ?Sized>(&mut self, horizon: usize, n1: usize, rng: &mut R, rec: &mut GenealogyRecord) {
        rec.reset(horizon, n1, false, true);
        rec.evals = self.evals;
        for t in 0..horizon {
            softmax(&self.log_w[t * n1..(t + 1) * n1], &mut rec.resample_weights[t]);
        }
        self.cdf.fill(&rec.resample_weights[horizon - 1]);
        rec.selected[horizon - 1] = self.cdf.sample(rng);
        self.buf.resize(n1, 0.0);
        for t in (0..horizon - 1).rev() {
            let next = rec.selected[t + 1];
            for k in 0..n1 {
                self.buf[k] = self.log_w[t * n1 + k] + self.trans[((t + 1) * n1 + k) * n1 + next];
            }
            softmax(&self.buf, &mut rec.backward_weights[t]);
            self.cdf.fill(&rec.backward_weights[t]);
            rec.selected[t] = self.cdf.sample(rng);
        }
        rec.finish_accepted();
    }

    /// Exact law of the backward pass over all index vectors.
    pub fn backward_law(&mut self, horizon: usize, n1: usize) -> Vec<f64> {
        let size = n1.pow(horizon as u32);
        let mut law = vec![0.0; size];
        self.probs.resize(n1, 0.0);
        self.buf.resize(n1, 0.0);
        let mut last = vec![0.0; n1];
        softmax(&self.log_w[(horizon - 1) * n1..horizon * n1], &mut last);
        for (code, slot) in law.iter_mut().enumerate() {
            let k = decode_indices(code, n1, horizon);
            let mut p = last[k[horizon - 1]];
            for t in (0..horizon - 1).rev() {
                for j in 0..n1 {
                    self.buf[j] = self.log_w[t * n1 + j] + self.trans[((t + 1) * n1 + j) * n1 + k[t + 1]];
                }
                softmax(&self.buf, &mut self.probs);
                p *= self.probs[k[t]];
            }
            *slot = p;
        }
        law
    }
}

fn normalise(logw: &mut [f64]) -> f64 {
    let c = log_sum_exp(logw);
    logw.iter_mut().for_each(|w| *w -= c);
    c
}

/// Exact draw of `K_{1:T}` from the discrete target induced by `cloud`.
pub fn ffbs_index_sample<C: Components, R: Rng + ?Sized>(
    cloud: &ParticleCloud,
    model: &ProductModel<C>,
    rng: &mut R,
) -> Vec<usize> {
    let mut ws = FfbsWorkspace::default();
    let mut rec = GenealogyRecord::default();
    ws.forward(model, cloud);
    ws.backward(cloud.horizon, cloud.n1, rng, &mut rec);
    rec.selected
}

/// Law of [`ffbs_index_sample`] over all `(N+1)^T` index vectors.
pub fn ffbs_index_law<C: Components>(cloud: &ParticleCloud, model: &ProductModel<C>) -> Vec<f64> {
    let mut ws = FfbsWorkspace::default();
    ws.forward(model, cloud);
    ws.backward_law(cloud.horizon, cloud.n1)
}

/// RW-EHMM kernel with reusable buffers.
#[derive(Debug, Clone)]
pub struct RwEhmm {
    cfg: KernelConfig,
    record: GenealogyRecord,
    cloud: ParticleCloud,
    ffbs: FfbsWorkspace,
    centre: Vec<f64>,
}

impl RwEhmm {
    pub fn new(cfg: KernelConfig) -> Self {
        Self {
            cfg,
            record: GenealogyRecord::default(),
            cloud: ParticleCloud::default(),
            ffbs: FfbsWorkspace::default(),
            centre: Vec::new(),
        }
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    /// Sum over `t` of the log forward normalisers of the most recent update.
    pub fn log_normaliser(&self) -> f64 {
        self.ffbs.log_normaliser
    }
}

impl SmoothingKernel for RwEhmm {
    fn config(&self) -> &KernelConfig {
        &self.cfg
    }

    fn update<C: Components, R: Rng + ?Sized>(
        &mut self,
        model: &ProductModel<C>,
        path: &mut Path,
        rng: &mut R,
    ) -> Result<()> {
        self.cfg.validate(model.horizon())?;
        check_reference(model, path)?;
        let (horizon, n1) = (model.horizon(), self.cfg.n + 1);
        self.cloud.reshape(horizon, n1, model.dim());
        for t in 0..horizon {
            self.cloud.scatter_time(t, path.row(t), self.cfg.ell_at(t), &mut self.centre, rng);
        }
        self.ffbs.forward(model, &self.cloud);
        self.ffbs.backward(horizon, n1, rng, &mut self.record);
        read_off(path, &self.cloud.z, n1, &self.record.selected);
        Ok(())
    }

    fn record(&self) -> &GenealogyRecord {
        &self.record
    }
}

/// One RW-EHMM update returning the new path and its genealogy.
pub fn rwehmm_update<C: Components, R: Rng + ?Sized>(
    model: &ProductModel<C>,
    path: &Path,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Path, GenealogyRecord)> {
    let mut k = RwEhmm::new(cfg.clone());
    let mut out = path.clone();
    k.update(model, &mut out, rng)?;
    Ok((out, k.record))
}
