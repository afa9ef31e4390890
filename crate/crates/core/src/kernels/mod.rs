//! Markov kernels on paths that leave the joint smoothing distribution
//! invariant.
//!
//! Particle index 0 always carries the reference path. Index vectors over
//! `[N]_0^T` are encoded in mixed radix `N+1` with `t = 0` most significant
//! (see [`encode_indices`]).

mod csmc;
mod genealogy;
mod rwcsmc;
mod rwehmm;

pub use csmc::{icsmc_update, Csmc, CsmcWeights};
pub use genealogy::{
    brute_force_xi, decode_indices, encode_indices, genealogy_law, sample_genealogy, DiscreteWeights,
    GenealogyWorkspace, TableWeights, DEFAULT_ENUMERATION_BOUND,
};
pub use rwcsmc::{index_transition_matrix, rwcsmc_update, RwCsmc, RwCsmcWeights};
pub use rwehmm::{
    ffbs_index_law, ffbs_index_sample, rwehmm_update, scatter_cloud, scatter_log_density, FfbsWorkspace,
    ParticleCloud, RwEhmm,
};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{config, Error, Result};
use crate::model::{Components, Path, ProductModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionVariant {
    Boltzmann,
    ForcedMove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexSelection {
    AncestralTrace,
    BackwardSampling,
    AncestorSampling,
}

impl FromStr for IndexSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trace" | "ancestral_trace" => Ok(Self::AncestralTrace),
            "bs" | "backward_sampling" => Ok(Self::BackwardSampling),
            "as" | "ancestor_sampling" => Ok(Self::AncestorSampling),
            other => Err(Error::Config(format!("unknown index selection '{other}'"))),
        }
    }
}

impl fmt::Display for IndexSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::AncestralTrace => "trace",
            Self::BackwardSampling => "bs",
            Self::AncestorSampling => "as",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    /// Number of free particles; `N + 1` particles in total.
    pub n: usize,
    pub selection: SelectionVariant,
    pub index_selection: IndexSelection,
    /// Scale factors `ell_t`: a single value applies to every `t`.
    pub ell: Vec<f64>,
}

impl KernelConfig {
    pub fn new(n: usize, selection: SelectionVariant, index_selection: IndexSelection, ell: f64) -> Self {
        Self { n, selection, index_selection, ell: vec![ell] }
    }

    pub fn ell_at(&self, t: usize) -> f64 {
        if self.ell.len() == 1 {
            self.ell[0]
        } else {
            self.ell[t]
        }
    }

    pub fn validate(&self, horizon: usize) -> Result<()> {
        if self.n < 1 {
            return config("N must be at least 1");
        }
        if self.ell.len() != 1 && self.ell.len() != horizon {
            return config(format!("ell must have 1 or T={horizon} entries, got {}", self.ell.len()));
        }
        if self.ell.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return config("ell entries must be positive");
        }
        Ok(())
    }

    /// Short label such as `fm+bs` used in output files.
    pub fn variant_label(&self) -> String {
        let sel = match self.selection {
            SelectionVariant::Boltzmann => "boltzmann",
            SelectionVariant::ForcedMove => "fm",
        };
        format!("{sel}+{}", self.index_selection)
    }
}

/// Number of vector-valued density evaluations (each covering all `D` components).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub potential: u64,
    pub mutation: u64,
}

impl EvalCounts {
    pub fn total(&self) -> u64 {
        self.potential + self.mutation
    }
}

/// Discrete output of one kernel update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenealogyRecord {
    /// `ancestors[t][n]`: index at time `t` of the parent of particle `n` at `t + 1`.
    /// Empty for kernels without resampling.
    pub ancestors: Vec<Vec<usize>>,
    pub selected: Vec<usize>,
    pub accepted: Vec<bool>,
    /// Normalised time-`t` weights over `[N]_0`, one row per `t`.
    pub resample_weights: Vec<Vec<f64>>,
    /// Backward-sampling distributions at the realised `K_{t+1}`, one row per
    /// `t < T - 1`; empty without backward sampling.
    pub backward_weights: Vec<Vec<f64>>,
    pub evals: EvalCounts,
}

impl GenealogyRecord {
    pub(crate) fn reset(&mut self, horizon: usize, n1: usize, with_ancestors: bool, with_backward: bool) {
        fn shape<T: Clone + Default>(v: &mut Vec<Vec<T>>, rows: usize, cols: usize) {
            v.resize(rows, Vec::new());
            for r in v.iter_mut() {
                r.clear();
                r.resize(cols, T::default());
            }
        }
        shape(&mut self.ancestors, if with_ancestors { horizon - 1 } else { 0 }, n1);
        shape(&mut self.resample_weights, horizon, n1);
        shape(&mut self.backward_weights, if with_backward { horizon - 1 } else { 0 }, n1);
        self.selected.clear();
        self.selected.resize(horizon, 0);
        self.accepted.clear();
        self.accepted.resize(horizon, false);
        self.evals = EvalCounts::default();
    }

    pub(crate) fn finish_accepted(&mut self) {
        for (a, &k) in self.accepted.iter_mut().zip(&self.selected) {
            *a = k != 0;
        }
    }
}

/// A path-space Markov kernel with reusable internal workspace.
pub trait SmoothingKernel {
    fn config(&self) -> &KernelConfig;

    /// Replaces `path` by a draw from the kernel started at `path`.
    fn update<C: Components, R: Rng + ?Sized>(
        &mut self,
        model: &ProductModel<C>,
        path: &mut Path,
        rng: &mut R,
    ) -> Result<()>;

    /// Genealogy of the most recent update.
    fn record(&self) -> &GenealogyRecord;
}

/// Fails unless `path` has the model's shape and a finite log density.
pub fn check_reference<C: Components>(model: &ProductModel<C>, path: &Path) -> Result<()> {
    model.check_path(path)?;
    let lj = model.log_joint(path);
    if !lj.is_finite() {
        return Err(Error::Model(format!("reference path has non-finite log density ({lj})")));
    }
    Ok(())
}

/// The selected path `(z_t^{K_t})_t` from a particle array laid out `[t][n][d]`.
pub fn read_off(path: &mut Path, z: &[f64], n1: usize, selected: &[usize]) {
    let dim = path.dim();
    for (t, &k) in selected.iter().enumerate() {
        if k != 0 {
            let off = (t * n1 + k) * dim;
            path.row_mut(t).copy_from_slice(&z[off..off + dim]);
        }
    }
}

/// Kernel selected at run time.
#[derive(Debug, Clone)]
pub enum AnyKernel {
    Csmc(Csmc),
    RwEhmm(RwEhmm),
    RwCsmc(RwCsmc),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Icsmc,
    RwEhmm,
    RwCsmc,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Self::Icsmc => "icsmc",
            Self::RwEhmm => "rwehmm",
            Self::RwCsmc => "rwcsmc",
        }
    }
}

impl FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "icsmc" => Ok(Self::Icsmc),
            "rwehmm" => Ok(Self::RwEhmm),
            "rwcsmc" => Ok(Self::RwCsmc),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

impl AnyKernel {
    pub fn new(algorithm: Algorithm, cfg: KernelConfig) -> Self {
        match algorithm {
            Algorithm::Icsmc => Self::Csmc(Csmc::new(cfg)),
            Algorithm::RwEhmm => Self::RwEhmm(RwEhmm::new(cfg)),
            Algorithm::RwCsmc => Self::RwCsmc(RwCsmc::new(cfg)),
        }
    }
}

impl SmoothingKernel for AnyKernel {
    fn config(&self) -> &KernelConfig {
        match self {
            Self::Csmc(k) => k.config(),
            Self::RwEhmm(k) => k.config(),
            Self::RwCsmc(k) => k.config(),
        }
    }

    fn update<C: Components, R: Rng + ?Sized>(
        &mut self,
        model: &ProductModel<C>,
        path: &mut Path,
        rng: &mut R,
    ) -> Result<()> {
        match self {
            Self::Csmc(k) => k.update(model, path, rng),
            Self::RwEhmm(k) => k.update(model, path, rng),
            Self::RwCsmc(k) => k.update(model, path, rng),
        }
    }

    fn record(&self) -> &GenealogyRecord {
        match self {
            Self::Csmc(k) => k.record(),
            Self::RwEhmm(k) => k.record(),
            Self::RwCsmc(k) => k.record(),
        }
    }
}
