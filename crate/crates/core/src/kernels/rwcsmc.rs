//! Iterated random-walk conditional SMC.
//!
//! The cloud is scattered around the reference exactly as for RW-EHMM, but
//! index paths are built by conditional resampling on the joint weights
//! `log m_t(z_{t-1}^{a}, z_t^n) + log G_t(z_t^n)`, which costs `O(NT)`
//! density evaluations instead of `O(N^2 T)`.
//!
//! Unlike the i-CSMC kernel there is no unconditional SMC algorithm behind
//! this kernel: the proposal only makes sense relative to a reference path.

use rand::Rng;

use super::genealogy::{
    genealogy_law, sample_genealogy, DiscreteWeights, GenealogyWorkspace, TableWeights, DEFAULT_ENUMERATION_BOUND,
};
use super::rwehmm::ParticleCloud;
use super::{check_reference, read_off, EvalCounts, GenealogyRecord, KernelConfig, SmoothingKernel};
use crate::error::Result;
use crate::model::{Components, Path, ProductModel};

/// Joint mutation-potential weights on a fixed cloud.
pub struct RwCsmcWeights<'a, C> {
    pub model: &'a ProductModel<C>,
    pub cloud: &'a ParticleCloud,
    pub evals: EvalCounts,
}

impl<'a, C: Components> RwCsmcWeights<'a, C> {
    pub fn new(model: &'a ProductModel<C>, cloud: &'a ParticleCloud) -> Self {
        Self { model, cloud, evals: EvalCounts::default() }
    }
}

impl<C: Components> DiscreteWeights for RwCsmcWeights<'_, C> {
    #[inline]
    fn log_weight(&mut self, t: usize, n: usize, ancestor: usize) -> f64 {
        let z = self.cloud.particle(t, n);
        let prev = if t == 0 { &[][..] } else { self.cloud.particle(t - 1, ancestor) };
        self.evals.mutation += 1;
        self.evals.potential += 1;
        self.model.log_mutation(t, prev, z) + self.model.log_potential(t, z)
    }

    #[inline]
    fn log_backward_extra(&mut self, t: usize, n: usize, k_next: usize) -> f64 {
        self.evals.mutation += 1;
        self.model.log_mutation(t + 1, self.cloud.particle(t, n), self.cloud.particle(t + 1, k_next))
    }
}

/// i-RW-CSMC kernel with reusable buffers.
#[derive(Debug, Clone)]
pub struct RwCsmc {
    cfg: KernelConfig,
    record: GenealogyRecord,
    ws: GenealogyWorkspace,
    cloud: ParticleCloud,
    centre: Vec<f64>,
}

impl RwCsmc {
    pub fn new(cfg: KernelConfig) -> Self {
        Self {
            cfg,
            record: GenealogyRecord::default(),
            ws: GenealogyWorkspace::default(),
            cloud: ParticleCloud::default(),
            centre: Vec::new(),
        }
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }

    /// Scatters a fresh cloud around `path` without running the discrete part.
    pub fn scatter<R: Rng + ?Sized>(&mut self, path: &Path, rng: &mut R) -> &ParticleCloud {
        let (horizon, n1) = (path.horizon(), self.cfg.n + 1);
        self.cloud.reshape(horizon, n1, path.dim());
        for t in 0..horizon {
            self.cloud.scatter_time(t, path.row(t), self.cfg.ell_at(t), &mut self.centre, rng);
        }
        &self.cloud
    }
}

impl SmoothingKernel for RwCsmc {
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
        self.scatter(path, rng);
        let n1 = self.cfg.n + 1;
        let mut w = RwCsmcWeights::new(model, &self.cloud);
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
        read_off(path, &self.cloud.z, n1, &self.record.selected);
        Ok(())
    }

    fn record(&self) -> &GenealogyRecord {
        &self.record
    }
}

/// One i-RW-CSMC update returning the new path and its genealogy.
pub fn rwcsmc_update<C: Components, R: Rng + ?Sized>(
    model: &ProductModel<C>,
    path: &Path,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<(Path, GenealogyRecord)> {
    let mut k = RwCsmc::new(cfg.clone());
    let mut out = path.clone();
    k.update(model, &mut out, rng)?;
    Ok((out, k.record))
}

/// Exact transition matrix of the discrete index kernel on a fixed cloud:
/// row `j` is the law of `K_{1:T}` when the reference occupies indices `j_{1:T}`.
pub fn index_transition_matrix<C: Components>(
    cloud: &ParticleCloud,
    model: &ProductModel<C>,
    cfg: &KernelConfig,
) -> Result<Vec<Vec<f64>>> {
    let mut w = RwCsmcWeights::new(model, cloud);
    let table = TableWeights::from_weights(&mut w, cloud.n1, cloud.horizon);
    let size = cloud.n1.pow(cloud.horizon as u32);
    (0..size)
        .map(|code| {
            let j = super::decode_indices(code, cloud.n1, cloud.horizon);
            genealogy_law(&table, cfg.selection, cfg.index_selection, &j, DEFAULT_ENUMERATION_BOUND)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{brute_force_xi, ffbs_index_law, scatter_cloud, IndexSelection, SelectionVariant};
    use crate::model::GaussRw;
    use crate::rng::stream;
    use rand::Rng;

    fn tiny(horizon: usize, seed: u64, factorised: bool) -> (ProductModel<GaussRw>, Path) {
        let mut rng = stream(seed, "test", &[]);
        let y: Vec<f64> = (0..horizon).map(|_| rng.random_range(-1.5..1.5)).collect();
        let mut g = GaussRw::new(y, 1, 1.0, 1.0).unwrap();
        if factorised {
            g = g.time_factorised();
        }
        let model = ProductModel::new(g, horizon, 1).unwrap();
        let path = Path::from_values(horizon, 1, (0..horizon).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        (model, path)
    }

    const VARIANTS: [(SelectionVariant, IndexSelection); 6] = [
        (SelectionVariant::Boltzmann, IndexSelection::AncestralTrace),
        (SelectionVariant::ForcedMove, IndexSelection::AncestralTrace),
        (SelectionVariant::Boltzmann, IndexSelection::BackwardSampling),
        (SelectionVariant::ForcedMove, IndexSelection::BackwardSampling),
        (SelectionVariant::Boltzmann, IndexSelection::AncestorSampling),
        (SelectionVariant::ForcedMove, IndexSelection::AncestorSampling),
    ];

    #[test]
    fn xi_is_invariant_for_index_kernel() {
        for (n, horizon) in [(1, 2), (2, 2), (1, 3)] {
            for seed in 0..5 {
                let (model, path) = tiny(horizon, seed, false);
                let cloud = scatter_cloud(&path, &[1.0], n, &mut stream(seed, "cloud", &[])).unwrap();
                let mut w = RwCsmcWeights::new(&model, &cloud);
                let xi = brute_force_xi(&TableWeights::from_weights(&mut w, n + 1, horizon));
                for (sel, idx) in VARIANTS {
                    let cfg = KernelConfig::new(n, sel, idx, 1.0);
                    let p = index_transition_matrix(&cloud, &model, &cfg).unwrap();
                    for row in &p {
                        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    }
                    for k in 0..xi.len() {
                        let s: f64 = (0..xi.len()).map(|j| xi[j] * p[j][k]).sum();
                        assert!((s - xi[k]).abs() < 1e-10, "N={n} T={horizon} {sel:?} {idx:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn factorised_backward_sampling_equals_xi() {
        let (model, path) = tiny(2, 4, true);
        let cloud = scatter_cloud(&path, &[1.0], 2, &mut stream(4, "cloud", &[])).unwrap();
        let cfg = KernelConfig::new(2, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, 1.0);
        let p = index_transition_matrix(&cloud, &model, &cfg).unwrap();
        let xi = ffbs_index_law(&cloud, &model);
        for k in 0..xi.len() {
            assert!((p[0][k] - xi[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn evaluation_counts() {
        let (model, path) = tiny(3, 1, false);
        for (idx, extra) in [
            (IndexSelection::AncestralTrace, 0),
            (IndexSelection::BackwardSampling, 4 * 2),
            (IndexSelection::AncestorSampling, 4 * 2),
        ] {
            let cfg = KernelConfig::new(3, SelectionVariant::Boltzmann, idx, 1.0);
            let (_, rec) = rwcsmc_update(&model, &path, &cfg, &mut stream(1, "chain", &[])).unwrap();
            assert_eq!(rec.evals.potential, 4 * 3);
            assert_eq!(rec.evals.mutation, 4 * 3 + extra);
        }
        let (model, path) = tiny(1, 1, false);
        let cfg = KernelConfig::new(3, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, 1.0);
        let (_, rec) = rwcsmc_update(&model, &path, &cfg, &mut stream(1, "chain", &[])).unwrap();
        assert_eq!(rec.evals.mutation, 4);
    }

    #[test]
    fn constant_weights_give_uniform_selection() {
        let mut cloud = ParticleCloud::new(2, 3, 1);
        cloud.z.iter_mut().for_each(|v| *v = 0.0);
        let model = ProductModel::new(GaussRw::new(vec![0.0, 0.0], 1, 1.0, 1.0).unwrap().time_factorised(), 2, 1).unwrap();
        let mut w = RwCsmcWeights::new(&model, &cloud);
        let table = TableWeights::from_weights(&mut w, 3, 2);
        let law = genealogy_law(&table, SelectionVariant::Boltzmann, IndexSelection::AncestralTrace, &[0, 0], 1000).unwrap();
        let marg: Vec<f64> = (0..3).map(|k| (0..3).map(|a| law[a * 3 + k]).sum()).collect();
        for p in marg {
            assert!((p - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejected_times_keep_reference_values() {
        let (model, path) = tiny(3, 2, false);
        let cfg = KernelConfig::new(2, SelectionVariant::Boltzmann, IndexSelection::AncestralTrace, 1.0);
        let mut rng = stream(5, "chain", &[]);
        for _ in 0..50 {
            let (out, rec) = rwcsmc_update(&model, &path, &cfg, &mut rng).unwrap();
            for t in 0..3 {
                if rec.selected[t] == 0 {
                    assert_eq!(out.row(t), path.row(t));
                }
            }
        }
    }
}
