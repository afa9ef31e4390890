//! Iterated conditional SMC with independent (prior) proposals.

use rand::Rng;

use super::genealogy::{sample_genealogy, DiscreteWeights, GenealogyWorkspace};
use super::{check_reference, read_off, EvalCounts, GenealogyRecord, KernelConfig, SmoothingKernel};
use crate::error::Result;
use crate::model::{Components, Path, ProductModel};

/// Particle system of one i-CSMC sweep. Particles at time `t` are generated
/// from their resampled parents when the genealogy sampler advances to `t`.
pub struct CsmcWeights<'a, C> {
    model: &'a ProductModel<C>,
    n1: usize,
    /// `[t][n][d]`
    pub z: &'a mut Vec<f64>,
    /// `g[t * n1 + n] = log G_t(z_t^n)`
    pub g: &'a mut Vec<f64>,
    pub evals: EvalCounts,
}

impl<'a, C: Components> CsmcWeights<'a, C> {
    /// Places the reference at index 0 of every time and draws the time-0 particles.
    pub fn init<R: Rng + ?Sized>(
        model: &'a ProductModel<C>,
        path: &Path,
        n1: usize,
        z: &'a mut Vec<f64>,
        g: &'a mut Vec<f64>,
        rng: &mut R,
    ) -> Self {
        let (horizon, dim) = (model.horizon(), model.dim());
        z.resize(horizon * n1 * dim, 0.0);
        g.resize(horizon * n1, 0.0);
        for t in 0..horizon {
            let off = t * n1 * dim;
            z[off..off + dim].copy_from_slice(path.row(t));
        }
        let mut w = Self { model, n1, z, g, evals: EvalCounts::default() };
        for n in 1..n1 {
            let off = n * dim;
            w.model.sample_mutation(0, &[], &mut w.z[off..off + dim], rng);
        }
        w.potentials(0);
        w
    }

    fn particle(&self, t: usize, n: usize) -> &[f64] {
        let dim = self.model.dim();
        let off = (t * self.n1 + n) * dim;
        &self.z[off..off + dim]
    }

    fn potentials(&mut self, t: usize) {
        for n in 0..self.n1 {
            let v = self.model.log_potential(t, self.particle(t, n));
            self.g[t * self.n1 + n] = v;
        }
        self.evals.potential += self.n1 as u64;
    }
}

impl<C: Components> DiscreteWeights for CsmcWeights<'_, C> {
    #[inline]
    fn log_weight(&mut self, t: usize, n: usize, _ancestor: usize) -> f64 {
        self.g[t * self.n1 + n]
    }

    fn log_backward_extra(&mut self, t: usize, n: usize, k_next: usize) -> f64 {
        self.evals.mutation += 1;
        self.model.log_mutation(t + 1, self.particle(t, n), self.particle(t + 1, k_next))
    }

    fn advance<R: Rng + ?Sized>(&mut self, t: usize, ancestors: &[usize], rng: &mut R) {
        let dim = self.model.dim();
        let n1 = self.n1;
        let (past, now) = self.z.split_at_mut(t * n1 * dim);
        let prev = &past[(t - 1) * n1 * dim..];
        for n in 1..n1 {
            let a = ancestors[n];
            self.model
                .sample_mutation(t, &prev[a * dim..(a + 1) * dim], &mut now[n * dim..(n + 1) * dim], rng);
        }
        self.potentials(t);
    }
}

/// i-CSMC kernel with reusable buffers.
#[derive(Debug, Clone)]
pub struct Csmc {
    cfg: KernelConfig,
    record: GenealogyRecord,
    ws: GenealogyWorkspace,
    z: Vec<f64>,
    g: Vec<f64>,
}

impl Csmc {
    pub fn new(cfg: KernelConfig) -> Self {
        Self { cfg, record: GenealogyRecord::default(), ws: GenealogyWorkspace::default(), z: Vec::new(), g: Vec::new() }
    }

    /// Particle values of the most recent update, laid out `[t][n][d]`.
    pub fn particles(&self) -> &[f64] {
        &self.z
    }
}

impl SmoothingKernel for Csmc {
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
        let n1 = self.cfg.n + 1;
        let mut w = CsmcWeights::init(model, path, n1, &mut self.z, &mut self.g, rng);
        sample_genealogy(
            &mut w,
            n1,
            model.horizon(),
            self.cfg.selection,
            self.cfg.index_selection,
            rng,
            &mut self.record,
            &mut self.ws,
        );
        self.record.evals = w.evals;
        read_off(path, &self.z, n1, &self.record.selected);
        Ok(())
    }

    fn record(&self) -> &GenealogyRecord {
        &self.record
    }
}

/// One i-CSMC update returning the new path and its genealogy.
pub fn icsmc_update<C: Components, R: Rng + ?Sized>(
    model: &ProductModel<C>,
    path: &Path,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Path, GenealogyRecord)> {
    let mut k = Csmc::new(cfg.clone());
    let mut out = path.clone();
    k.update(model, &mut out, rng)?;
    Ok((out, k.record))
}
