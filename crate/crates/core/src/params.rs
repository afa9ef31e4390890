//! Joint sampling of static parameters and latent paths: particle Gibbs and
//! the two all-particle alternatives built on the random-walk cloud.
//!
//! Throughout, the target is `mu(theta) prod_t m_{theta,t} G_{theta,t}`, so
//! the component densities must be normalised in the observations.

use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{config, Error, Result};
use crate::kernels::{
    read_off, sample_genealogy, scatter_cloud, Algorithm, AnyKernel, DiscreteWeights, EvalCounts, FfbsWorkspace,
    GenealogyRecord, GenealogyWorkspace, IndexSelection, KernelConfig, ParticleCloud, RwCsmc, RwCsmcWeights,
    SelectionVariant, SmoothingKernel,
};
use crate::model::{kalman_smooth, Components, GaussRw, LgssmSpec, Path, ProductModel};
use crate::selection::{log_sum_exp, softmax, Cdf};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// What a parameter proposal may look at.
#[derive(Debug, Clone, Copy)]
pub enum ProposalContext<'a> {
    None,
    Cloud(&'a ParticleCloud),
    Genealogy { cloud: &'a ParticleCloud, ancestors: &'a [Vec<usize>] },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThetaProposal {
    pub theta: Vec<f64>,
    /// `log q(theta -> theta')`
    pub log_q_forward: f64,
    /// `log q(theta' -> theta)`
    pub log_q_reverse: f64,
}

/// A family of models indexed by `theta`, with prior and proposal.
pub trait ThetaModel: Sync {
    type C: Components;

    fn theta_dim(&self) -> usize;

    /// `-inf` outside the support.
    fn log_prior(&self, theta: &[f64]) -> f64;

    fn build_model(&self, theta: &[f64]) -> Result<ProductModel<Self::C>>;

    fn sample_proposal<R: Rng + ?Sized>(&self, theta: &[f64], ctx: ProposalContext<'_>, rng: &mut R) -> Vec<f64>;

    fn log_proposal(&self, from: &[f64], to: &[f64], ctx: ProposalContext<'_>) -> f64;

    fn propose<R: Rng + ?Sized>(&self, theta: &[f64], ctx: ProposalContext<'_>, rng: &mut R) -> ThetaProposal {
        let new = self.sample_proposal(theta, ctx, rng);
        ThetaProposal {
            log_q_forward: self.log_proposal(theta, &new, ctx),
            log_q_reverse: self.log_proposal(&new, theta, ctx),
            theta: new,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecisionPrior {
    /// `log tau ~ N(mean, sd^2)`
    LogNormal { mean: f64, sd: f64 },
    PointMass(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PrecisionProposal {
    /// `log tau' = log tau + scale * eps`
    LogRandomWalk { scale: f64 },
    Identity,
}

/// Gaussian random walk with unknown observation precision `tau = theta[0]`.
#[derive(Debug, Clone)]
pub struct PrecisionModel {
    pub y: Vec<f64>,
    pub horizon: usize,
    pub dim: usize,
    pub initial_variance: f64,
    pub prior: PrecisionPrior,
    pub proposal: PrecisionProposal,
}

impl PrecisionModel {
    pub fn new(y: Vec<f64>, horizon: usize, dim: usize, prior: PrecisionPrior, proposal: PrecisionProposal) -> Result<Self> {
        if horizon == 0 || dim == 0 || y.len() != horizon * dim {
            return config(format!("expected {horizon} x {dim} observations, got {}", y.len()));
        }
        match prior {
            PrecisionPrior::LogNormal { sd, .. } if !(sd > 0.0) => return config("prior sd must be positive"),
            PrecisionPrior::PointMass(t) if !(t > 0.0) => return config("precision must be positive"),
            _ => {}
        }
        if let PrecisionProposal::LogRandomWalk { scale } = proposal {
            if !(scale > 0.0) {
                return config("proposal scale must be positive");
            }
        }
        Ok(Self { y, horizon, dim, initial_variance: 1.0, prior, proposal })
    }

    pub fn spec(&self, tau: f64) -> Result<LgssmSpec> {
        LgssmSpec::new(self.horizon, self.dim, self.y.clone(), self.initial_variance)?.with_obs_variance(1.0 / tau)
    }

    pub fn log_marginal_likelihood(&self, tau: f64) -> Result<f64> {
        Ok(kalman_smooth(&self.spec(tau)?)?.log_marginal_likelihood)
    }
}

fn log_normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -HALF_LN_2PI - sd.ln() - 0.5 * z * z
}

impl ThetaModel for PrecisionModel {
    type C = GaussRw;

    fn theta_dim(&self) -> usize {
        1
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let tau = theta[0];
        if !(tau > 0.0 && tau.is_finite()) {
            return f64::NEG_INFINITY;
        }
        match self.prior {
            PrecisionPrior::LogNormal { mean, sd } => log_normal_pdf(tau.ln(), mean, sd) - tau.ln(),
            PrecisionPrior::PointMass(t) => {
                if tau == t {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
        }
    }

    fn build_model(&self, theta: &[f64]) -> Result<ProductModel<GaussRw>> {
        self.spec(theta[0])?.model()
    }

    fn sample_proposal<R: Rng + ?Sized>(&self, theta: &[f64], _ctx: ProposalContext<'_>, rng: &mut R) -> Vec<f64> {
        match self.proposal {
            PrecisionProposal::LogRandomWalk { scale } => {
                let e: f64 = StandardNormal.sample(rng);
                vec![theta[0] * (scale * e).exp()]
            }
            PrecisionProposal::Identity => theta.to_vec(),
        }
    }

    fn log_proposal(&self, from: &[f64], to: &[f64], _ctx: ProposalContext<'_>) -> f64 {
        match self.proposal {
            PrecisionProposal::LogRandomWalk { scale } => log_normal_pdf(to[0].ln(), from[0].ln(), scale) - to[0].ln(),
            PrecisionProposal::Identity => 0.0,
        }
    }
}

/// Outcome of one sweep.
#[derive(Debug, Clone)]
pub struct ParamStep {
    pub theta: Vec<f64>,
    pub path: Path,
    pub accepted: bool,
    /// Log acceptance ratio of the parameter move (`-inf` if the proposal
    /// left the prior support).
    pub log_ratio: f64,
    pub evals: EvalCounts,
}

/// Metropolis-Hastings update of `theta` given the path, `steps` times.
pub fn theta_mh_step<M: ThetaModel, R: Rng + ?Sized>(
    tm: &M,
    theta: &[f64],
    path: &Path,
    steps: usize,
    rng: &mut R,
) -> Result<(Vec<f64>, bool, f64)> {
    let mut cur = theta.to_vec();
    let mut cur_lp = tm.log_prior(&cur) + tm.build_model(&cur)?.log_joint(path);
    let (mut accepted, mut log_ratio) = (false, f64::NEG_INFINITY);
    for _ in 0..steps {
        let prop = tm.propose(&cur, ProposalContext::None, rng);
        let prior = tm.log_prior(&prop.theta);
        let lp = if prior.is_finite() { prior + tm.build_model(&prop.theta)?.log_joint(path) } else { prior };
        log_ratio = lp - cur_lp + prop.log_q_reverse - prop.log_q_forward;
        accepted = rng.random::<f64>().ln() <= log_ratio;
        if accepted {
            cur = prop.theta;
            cur_lp = lp;
        }
    }
    Ok((cur, accepted, log_ratio))
}

/// Particle Gibbs: `theta` by Metropolis-Hastings given the path, then the
/// path by the configured smoothing kernel under the new `theta`.
pub fn particle_gibbs_step<M: ThetaModel, R: Rng + ?Sized>(
    tm: &M,
    theta: &[f64],
    path: &Path,
    kernel: &mut AnyKernel,
    theta_steps: usize,
    rng: &mut R,
) -> Result<ParamStep> {
    let (theta, accepted, log_ratio) = theta_mh_step(tm, theta, path, theta_steps, rng)?;
    let model = tm.build_model(&theta)?;
    let mut path = path.clone();
    kernel.update(&model, &mut path, rng)?;
    let evals = kernel.record().evals;
    Ok(ParamStep { theta, path, accepted, log_ratio, evals })
}

fn accept_parameter<M: ThetaModel, R: Rng + ?Sized>(
    tm: &M,
    theta: &[f64],
    prop: &ThetaProposal,
    log_target_cur: f64,
    log_target_prop: f64,
    rng: &mut R,
) -> (bool, f64) {
    let log_ratio = (tm.log_prior(&prop.theta) - tm.log_prior(theta))
        + (log_target_prop - log_target_cur)
        + (prop.log_q_reverse - prop.log_q_forward);
    let log_ratio = if log_ratio.is_nan() { f64::NEG_INFINITY } else { log_ratio };
    (rng.random::<f64>().ln() <= log_ratio, log_ratio)
}

/// All-particle update on the RW-EHMM cloud. The parameter move is accepted
/// with the ratio of the target summed over all `(N+1)^T` index paths.
pub fn rwehmm_param_step<M: ThetaModel, R: Rng + ?Sized>(
    tm: &M,
    theta: &[f64],
    path: &Path,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<ParamStep> {
    let model = tm.build_model(theta)?;
    cfg.validate(model.horizon())?;
    crate::kernels::check_reference(&model, path)?;
    let cloud = scatter_cloud(path, &cfg.ell, cfg.n, rng)?;
    let mut ws = FfbsWorkspace::default();
    let log_z = ws.forward(&model, &cloud);
    let mut evals = ws.evals;
    let prop = tm.propose(theta, ProposalContext::Cloud(&cloud), rng);
    let mut ws_prop = FfbsWorkspace::default();
    let log_z_prop = if tm.log_prior(&prop.theta).is_finite() {
        let model_prop = tm.build_model(&prop.theta)?;
        let z = ws_prop.forward(&model_prop, &cloud);
        evals.potential += ws_prop.evals.potential;
        evals.mutation += ws_prop.evals.mutation;
        z
    } else {
        f64::NEG_INFINITY
    };
    let (accepted, log_ratio) = accept_parameter(tm, theta, &prop, log_z, log_z_prop, rng);
    let mut rec = GenealogyRecord::default();
    let (horizon, n1) = (cloud.horizon, cloud.n1);
    let new_theta = if accepted {
        ws_prop.backward(horizon, n1, rng, &mut rec);
        prop.theta
    } else {
        ws.backward(horizon, n1, rng, &mut rec);
        theta.to_vec()
    };
    let mut out = path.clone();
    read_off(&mut out, &cloud.z, n1, &rec.selected);
    Ok(ParamStep { theta: new_theta, path: out, accepted, log_ratio, evals })
}

/// `sum_t log sum_n w_t^n` for given ancestors, filling `omega[t][n]`.
fn lineage_log_sum<W: DiscreteWeights>(w: &mut W, ancestors: &[Vec<usize>], omega: &mut [Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (t, row) in omega.iter_mut().enumerate() {
        for (n, o) in row.iter_mut().enumerate() {
            *o = w.log_weight(t, n, if t == 0 { 0 } else { ancestors[t - 1][n] });
        }
        total += log_sum_exp(row);
    }
    total
}

/// All-particle update on the i-RW-CSMC genealogy with backward sampling.
///
/// Fresh ancestors for all `N + 1` particles are drawn under the proposed
/// parameter, independently of those of the conditional sweep.
pub fn rwcsmc_param_step<M: ThetaModel, R: Rng + ?Sized>(
    tm: &M,
    theta: &[f64],
    path: &Path,
    cfg: &KernelConfig,
    rng: &mut R,
) -> Result<ParamStep> {
    if cfg.index_selection != IndexSelection::BackwardSampling || cfg.selection != SelectionVariant::Boltzmann {
        return config("the all-particle i-RW-CSMC update needs Boltzmann selection with backward sampling");
    }
    let model = tm.build_model(theta)?;
    cfg.validate(model.horizon())?;
    crate::kernels::check_reference(&model, path)?;
    let (horizon, n1) = (model.horizon(), cfg.n + 1);
    let mut kernel = RwCsmc::new(cfg.clone());
    kernel.scatter(path, rng);
    let cloud = kernel.cloud();

    // Conditional sweep under theta; its selection is the reject branch.
    let mut w = RwCsmcWeights::new(&model, cloud);
    let mut rec = GenealogyRecord::default();
    let mut gws = GenealogyWorkspace::default();
    sample_genealogy(&mut w, n1, horizon, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, rng, &mut rec, &mut gws);
    let mut omega = vec![vec![0.0; n1]; horizon];
    let log_den = lineage_log_sum(&mut w, &rec.ancestors, &mut omega);
    let mut evals = w.evals;

    let ctx = ProposalContext::Genealogy { cloud, ancestors: &rec.ancestors };
    let new = tm.sample_proposal(theta, ctx, rng);
    let log_q_forward = tm.log_proposal(theta, &new, ctx);
    let mut anc_prop = vec![vec![0usize; n1]; horizon - 1];
    let mut log_num = f64::NEG_INFINITY;
    let mut log_q_reverse = f64::NEG_INFINITY;
    if tm.log_prior(&new).is_finite() {
        let model_prop = tm.build_model(&new)?;
        let mut wp = RwCsmcWeights::new(&model_prop, cloud);
        let mut probs = vec![0.0; n1];
        let mut cdf = Cdf::default();
        log_num = 0.0;
        for t in 0..horizon {
            for n in 0..n1 {
                omega[t][n] = wp.log_weight(t, n, if t == 0 { 0 } else { anc_prop[t - 1][n] });
            }
            log_num += log_sum_exp(&omega[t]);
            if t + 1 < horizon {
                softmax(&omega[t], &mut probs);
                cdf.fill(&probs);
                for a in anc_prop[t].iter_mut() {
                    *a = cdf.sample(rng);
                }
            }
        }
        evals.potential += wp.evals.potential;
        evals.mutation += wp.evals.mutation;
        log_q_reverse = tm.log_proposal(&new, theta, ProposalContext::Genealogy { cloud, ancestors: &anc_prop });
    }
    let prop = ThetaProposal { theta: new, log_q_forward, log_q_reverse };
    let (accepted, log_ratio) = accept_parameter(tm, theta, &prop, log_den, log_num, rng);
    let (new_theta, selected) = if accepted {
        let mut probs = vec![0.0; n1];
        softmax(&omega[horizon - 1], &mut probs);
        let mut cdf = Cdf::default();
        cdf.fill(&probs);
        let mut k = vec![0usize; horizon];
        k[horizon - 1] = cdf.sample(rng);
        for t in (0..horizon - 1).rev() {
            k[t] = anc_prop[t][k[t + 1]];
        }
        (prop.theta, k)
    } else {
        (theta.to_vec(), rec.selected.clone())
    };
    let mut out = path.clone();
    read_off(&mut out, &cloud.z, n1, &selected);
    Ok(ParamStep { theta: new_theta, path: out, accepted, log_ratio, evals })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSampler {
    /// Particle Gibbs with the given path kernel.
    ParticleGibbs(Algorithm),
    EhmmAlt,
    RwCsmcAlt,
}

impl ParamSampler {
    pub fn name(self) -> String {
        match self {
            Self::ParticleGibbs(a) => format!("pg-{}", a.name()),
            Self::EhmmAlt => "ehmm-alt".into(),
            Self::RwCsmcAlt => "rwcsmc-alt".into(),
        }
    }
}

impl FromStr for ParamSampler {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pg" => Ok(Self::ParticleGibbs(Algorithm::Icsmc)),
            "ehmm-alt" => Ok(Self::EhmmAlt),
            "rwcsmc-alt" => Ok(Self::RwCsmcAlt),
            other => match other.strip_prefix("pg-") {
                Some(a) => Ok(Self::ParticleGibbs(a.parse()?)),
                None => Err(Error::Config(format!("unknown parameter sampler '{other}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamTrace {
    /// `theta` after each sweep.
    pub theta: Vec<Vec<f64>>,
    pub accepted: Vec<bool>,
    pub final_path: Path,
}

impl ParamTrace {
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.theta.iter().map(|t| t[i]).collect()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted.iter().filter(|&&a| a).count() as f64 / self.accepted.len().max(1) as f64
    }
}

/// Runs `sweeps` iterations of the chosen sampler.
pub fn run_param_chain<M: ThetaModel, R: Rng + ?Sized>(
    tm: &M,
    sampler: ParamSampler,
    cfg: &KernelConfig,
    theta_steps: usize,
    theta0: Vec<f64>,
    path0: Path,
    sweeps: usize,
    rng: &mut R,
) -> Result<ParamTrace> {
    if theta0.len() != tm.theta_dim() {
        return config(format!("theta has {} components, expected {}", theta0.len(), tm.theta_dim()));
    }
    if !tm.log_prior(&theta0).is_finite() {
        return config("initial theta is outside the prior support");
    }
    let mut kernel = match sampler {
        ParamSampler::ParticleGibbs(a) => Some(AnyKernel::new(a, cfg.clone())),
        _ => None,
    };
    let (mut theta, mut path) = (theta0, path0);
    let mut trace = ParamTrace { theta: Vec::with_capacity(sweeps), accepted: Vec::with_capacity(sweeps), final_path: path.clone() };
    for _ in 0..sweeps {
        let step = match (sampler, kernel.as_mut()) {
            (ParamSampler::ParticleGibbs(_), Some(k)) => particle_gibbs_step(tm, &theta, &path, k, theta_steps, rng)?,
            (ParamSampler::EhmmAlt, _) => rwehmm_param_step(tm, &theta, &path, cfg, rng)?,
            _ => rwcsmc_param_step(tm, &theta, &path, cfg, rng)?,
        };
        theta = step.theta;
        path = step.path;
        trace.theta.push(theta.clone());
        trace.accepted.push(step.accepted);
    }
    trace.final_path = path;
    Ok(trace)
}

/// Posterior of the precision on a uniform grid in `log tau`.
#[derive(Debug, Clone)]
pub struct QuadraturePosterior {
    pub log_tau: Vec<f64>,
    /// Normalised density of `log tau` at the grid points.
    pub density: Vec<f64>,
    cdf: Vec<f64>,
}

impl QuadraturePosterior {
    pub fn mean(&self) -> f64 {
        let h = self.log_tau[1] - self.log_tau[0];
        self.log_tau.iter().zip(&self.density).map(|(u, p)| u.exp() * p * h).sum()
    }

    /// `P(tau <= x)`, linear between grid points.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let u = x.ln();
        let (lo, h) = (self.log_tau[0], self.log_tau[1] - self.log_tau[0]);
        let pos = (u - lo) / h;
        if pos <= 0.0 {
            return 0.0;
        }
        let i = pos.floor() as usize;
        if i + 1 >= self.cdf.len() {
            return 1.0;
        }
        let f = pos - i as f64;
        self.cdf[i] * (1.0 - f) + self.cdf[i + 1] * f
    }

    /// Inverse-CDF draw of `tau`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let f = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (self.log_tau[i - 1] + f * (self.log_tau[i] - self.log_tau[i - 1])).exp()
    }

    /// Kolmogorov-Smirnov distance between the sample and this posterior.
    pub fn ks_distance(&self, sample: &[f64]) -> f64 {
        let mut s = sample.to_vec();
        s.sort_by(f64::total_cmp);
        let n = s.len() as f64;
        s.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = self.cdf(x);
                (f - i as f64 / n).abs().max((f - (i + 1) as f64 / n).abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Grid quadrature of `mu(tau) exp(log marginal likelihood(tau))` over
/// `points` values of `log tau` spanning the prior mean plus or minus
/// `width` prior standard deviations.
pub fn quadrature_posterior(tm: &PrecisionModel, points: usize, width: f64) -> Result<QuadraturePosterior> {
    let PrecisionPrior::LogNormal { mean, sd } = tm.prior else {
        return config("quadrature needs a log-normal prior");
    };
    if points < 2 {
        return config("need at least two grid points");
    }
    let (lo, hi) = (mean - width * sd, mean + width * sd);
    let h = (hi - lo) / (points - 1) as f64;
    let log_tau: Vec<f64> = (0..points).map(|i| lo + h * i as f64).collect();
    let logp = log_tau
        .iter()
        .map(|&u| Ok(log_normal_pdf(u, mean, sd) + tm.log_marginal_likelihood(u.exp())?))
        .collect::<Result<Vec<f64>>>()?;
    let c = log_sum_exp(&logp) + h.ln();
    let density: Vec<f64> = logp.iter().map(|l| (l - c).exp()).collect();
    let mut cdf = vec![0.0; points];
    for i in 1..points {
        cdf[i] = cdf[i - 1] + 0.5 * h * (density[i - 1] + density[i]);
    }
    let total = cdf[points - 1];
    cdf.iter_mut().for_each(|v| *v /= total);
    Ok(QuadraturePosterior { log_tau, density, cdf })
}
