use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::diagnostics::batch_means;
use crate::error::{Error, Result};
use crate::harness::experiment::run_chain;
use crate::kernels::{
    brute_force_xi, ffbs_index_law, genealogy_law, index_transition_matrix, scatter_cloud, Algorithm, AnyKernel,
    IndexSelection, KernelConfig, RwCsmc, RwCsmcWeights, SelectionVariant, SmoothingKernel, TableWeights,
    DEFAULT_ENUMERATION_BOUND,
};
use crate::limit_laws::{analytic_bounds, gauss_rw_moments, limit_acceptance_rates, LimitKernel, LimitMoments};
use crate::model::{
    a3_smoother_covariance, kalman_smooth, lgssm_assumption_quantities, simulate_observations, GaussRw, LgssmSpec,
    Path, ProductModel, A3_FILTER_VARIANCE,
};
use crate::params::{
    quadrature_posterior, run_param_chain, ParamSampler, PrecisionModel, PrecisionPrior, PrecisionProposal,
};
use crate::rng::stream;
use crate::selection::{boltzmann, rosenbluth_teller};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Selection,
    Invariance,
    Ffbs,
    Limits,
    Bounds,
    Params,
    All,
}

impl Suite {
    pub const EACH: [Suite; 6] = [Suite::Selection, Suite::Ffbs, Suite::Invariance, Suite::Bounds, Suite::Limits, Suite::Params];

    pub fn name(self) -> &'static str {
        match self {
            Self::Selection => "selection",
            Self::Invariance => "invariance",
            Self::Ffbs => "ffbs",
            Self::Limits => "limits",
            Self::Bounds => "bounds",
            Self::Params => "params",
            Self::All => "all",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::EACH
            .into_iter()
            .chain([Self::All])
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown suite '{s}'")))
    }
}

/// One measured quantity with its target.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: f64,
    pub target: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<11} {:<48} {:>14.6e}  {:<26} {}",
            self.suite,
            self.name,
            self.measured,
            self.target,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

fn within(suite: &'static str, name: impl Into<String>, measured: f64, expected: f64, tol: f64) -> Check {
    Check {
        suite,
        name: name.into(),
        measured,
        target: format!("{expected:.6} ± {tol:.1e}"),
        pass: (measured - expected).abs() <= tol,
    }
}

fn below(suite: &'static str, name: impl Into<String>, measured: f64, bound: f64) -> Check {
    Check { suite, name: name.into(), measured, target: format!("< {bound:.1e}"), pass: measured < bound }
}

fn above(suite: &'static str, name: impl Into<String>, measured: f64, bound: f64) -> Check {
    Check { suite, name: name.into(), measured, target: format!("> {bound:.6}"), pass: measured > bound }
}

pub fn run_suite(suite: Suite) -> Result<Vec<Check>> {
    match suite {
        Suite::Selection => selection_checks(),
        Suite::Ffbs => ffbs_checks(),
        Suite::Invariance => invariance_checks(),
        Suite::Bounds => bounds_checks(),
        Suite::Limits => limits_checks(),
        Suite::Params => params_checks(),
        Suite::All => {
            let mut out = Vec::new();
            for s in Suite::EACH {
                out.extend(run_suite(s)?);
            }
            Ok(out)
        }
    }
}

fn selection_checks() -> Result<Vec<Check>> {
    let mut rng = stream(0, "validate", &[0]);
    let (mut norm, mut violations, mut barker, mut mh) = (0.0f64, 0u64, 0.0f64, 0.0f64);
    for _ in 0..10_000 {
        let n = rng.random_range(1..=8);
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(-700.0..50.0)).collect();
        let b = boltzmann(&h);
        let z = rosenbluth_teller(&h);
        norm = norm.max((b.iter().sum::<f64>() - 1.0).abs()).max((z.iter().sum::<f64>() - 1.0).abs());
        if z[0] > b[0] {
            violations += 1;
        }
        if n == 1 {
            barker = barker.max((b[1] - 1.0 / (1.0 + (-h[0]).exp())).abs());
            mh = mh.max((z[1] - h[0].exp().min(1.0)).abs());
        }
    }
    Ok(vec![
        below("selection", "max normalisation error", norm, 1e-12),
        within("selection", "Peskun violations", violations as f64, 0.0, 0.0),
        below("selection", "N=1 Boltzmann vs Barker", barker, 1e-12),
        below("selection", "N=1 Rosenbluth-Teller vs MH", mh, 1e-12),
    ])
}

fn tiny_model(horizon: usize, seed: u64, factorised: bool) -> Result<(ProductModel<GaussRw>, Path)> {
    let mut rng = stream(seed, "validate-model", &[]);
    let y: Vec<f64> = (0..horizon).map(|_| rng.random_range(-1.5..1.5)).collect();
    let mut g = GaussRw::new(y, 1, 1.0, 1.0)?;
    if factorised {
        g = g.time_factorised();
    }
    let path = Path::from_values(horizon, 1, (0..horizon).map(|_| rng.random_range(-1.0..1.0)).collect())?;
    Ok((ProductModel::new(g, horizon, 1)?, path))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn ffbs_checks() -> Result<Vec<Check>> {
    let (model, path) = tiny_model(3, 1, false)?;
    let cloud = scatter_cloud(&path, &[1.0], 2, &mut stream(1, "validate", &[1]))?;
    let law = ffbs_index_law(&cloud, &model);
    let xi = brute_force_xi(&TableWeights::from_weights(&mut RwCsmcWeights::new(&model, &cloud), 3, 3));
    let (fmodel, fpath) = tiny_model(2, 2, true)?;
    let fcloud = scatter_cloud(&fpath, &[1.0], 2, &mut stream(2, "validate", &[1]))?;
    let table = TableWeights::from_weights(&mut RwCsmcWeights::new(&fmodel, &fcloud), 3, 2);
    let a3 = genealogy_law(&table, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, &[0, 0], DEFAULT_ENUMERATION_BOUND)?;
    Ok(vec![
        below("ffbs", "N=2 T=3: max |FFBS law - xi| over 27 cells", max_diff(&law, &xi), 1e-12),
        below("ffbs", "factorised N=2 T=2: max |BS law - xi|", max_diff(&a3, &brute_force_xi(&table)), 1e-12),
    ])
}

fn invariance_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let variants = [
        (SelectionVariant::Boltzmann, IndexSelection::AncestralTrace),
        (SelectionVariant::ForcedMove, IndexSelection::AncestralTrace),
        (SelectionVariant::Boltzmann, IndexSelection::BackwardSampling),
        (SelectionVariant::ForcedMove, IndexSelection::BackwardSampling),
    ];
    let mut worst = 0.0f64;
    for (n, horizon) in [(1, 2), (2, 2), (1, 3)] {
        for seed in 0..20 {
            let (model, path) = tiny_model(horizon, 100 + seed, false)?;
            let cloud = scatter_cloud(&path, &[1.0], n, &mut stream(seed, "validate", &[2]))?;
            let xi = brute_force_xi(&TableWeights::from_weights(&mut RwCsmcWeights::new(&model, &cloud), n + 1, horizon));
            for (sel, idx) in variants {
                let p = index_transition_matrix(&cloud, &model, &KernelConfig::new(n, sel, idx, 1.0))?;
                for k in 0..xi.len() {
                    let s: f64 = (0..xi.len()).map(|j| xi[j] * p[j][k]).sum();
                    worst = worst.max((s - xi[k]).abs());
                }
            }
        }
    }
    out.push(below("invariance", "max |xi P - xi| (60 clouds, 4 variants)", worst, 1e-10));

    let (horizon, dim, iters) = (5, 2, 100_000);
    let y = simulate_observations(horizon, dim, 1.0, 1.0, &mut stream(3, "obs", &[dim as u64, 0]));
    let spec = LgssmSpec::new(horizon, dim, y, 1.0)?;
    let kal = kalman_smooth(&spec)?;
    let model = spec.model()?;
    for alg in [Algorithm::Icsmc, Algorithm::RwEhmm, Algorithm::RwCsmc] {
        let cfg = KernelConfig::new(3, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, 1.0);
        let mut kernel = AnyKernel::new(alg, cfg);
        let mut rng = stream(3, "chain", &[alg as u64]);
        let mut path = kal.sample_path(&mut rng);
        let mut trace = vec![Vec::with_capacity(iters); horizon * dim];
        for _ in 0..iters {
            kernel.update(&model, &mut path, &mut rng)?;
            for (i, tr) in trace.iter_mut().enumerate() {
                tr.push(path.values()[i]);
            }
        }
        let mut z = 0.0f64;
        for (i, tr) in trace.iter().enumerate() {
            let (m, se) = batch_means(tr, 100);
            let sq: Vec<f64> = tr.iter().map(|x| (x - kal.smoother_means[i]).powi(2)).collect();
            let (v, sev) = batch_means(&sq, 100);
            z = z.max((m - kal.smoother_means[i]).abs() / se).max((v - kal.smoother_variances[i]).abs() / sev);
        }
        out.push(below("invariance", format!("{} max |z| vs Kalman smoother", alg.name()), z, 4.0));
    }
    Ok(out)
}

fn bounds_checks() -> Result<Vec<Check>> {
    let r1 = lgssm_assumption_quantities(1)?.r;
    let rt = lgssm_assumption_quantities(5)?.r;
    let spec = LgssmSpec::new(5, 1, vec![0.0; 5], A3_FILTER_VARIANCE + 1.0)?;
    let cov = kalman_smooth(&spec)?.smoother_covariance(0);
    let closed = a3_smoother_covariance(5);
    let dev = cov.iter().flatten().zip(closed.iter().flatten()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let b = analytic_bounds(1.0, 2.0, 31, None);
    Ok(vec![
        within("bounds", "r_1", r1, 0.172195, 1e-6),
        within("bounds", "r_T (T>1)", rt, 0.155590, 1e-6),
        above("bounds", "r_T above threshold", rt.min(r1), 0.15),
        below("bounds", "Kalman vs closed-form covariance, T=5", dev, 1e-10),
        within("bounds", "bs bound, ell=1 I=2 N=31", b.bs_bound, 0.807521, 1e-6),
        within("bounds", "RWMH rate, ell=1 I=2", b.rwmh_rate, 0.479500, 1e-6),
    ])
}

/// Acceptance rate of a single `T = N = 1` random-walk chain at large `D`.
fn t1_acceptance(selection: SelectionVariant, dim: usize, iters: usize, seed: u64) -> Result<f64> {
    let key = [dim as u64, seed];
    let y = simulate_observations(1, dim, 1.0, 1.0, &mut stream(seed, "obs", &key));
    let spec = LgssmSpec::new(1, dim, y, 1.0)?;
    let model = spec.model()?;
    let mut path = kalman_smooth(&spec)?.sample_path(&mut stream(seed, "init", &key));
    let mut k = RwCsmc::new(KernelConfig::new(1, selection, IndexSelection::AncestralTrace, 1.0));
    let stats = run_chain(&model, &mut k, &mut path, 0, iters, 1, &mut stream(seed, "chain", &key))?;
    Ok(stats.accept_count[0] as f64 / stats.updates as f64)
}

fn limits_checks() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let fm = t1_acceptance(SelectionVariant::ForcedMove, 1000, 20_000, 7)?;
    out.push(within("limits", "T=N=1 forced-move acceptance, D=1000", fm, analytic_bounds(1.0, 2.0, 1, None).rwmh_rate, 0.03));
    let exact = LimitMoments::from_values(vec![2.0], vec![0.0], vec![0.0], vec![-2.0], vec![0.0], vec![1.0]);
    let barker_limit = limit_acceptance_rates(
        &exact,
        1,
        LimitKernel::RwCsmc(SelectionVariant::Boltzmann, IndexSelection::AncestralTrace),
        100_000,
        7,
    )?[0]
        .0;
    let barker = t1_acceptance(SelectionVariant::Boltzmann, 1000, 20_000, 8)?;
    out.push(within("limits", "T=N=1 Boltzmann acceptance, D=1000", barker, barker_limit, 0.03));

    let m = gauss_rw_moments(5, 1.0, 200, 500, &[1.0], 9)?;
    for t in 0..5 {
        let expect = if t == 4 { 2.0 } else { 3.0 };
        out.push(within("limits", format!("I_{} (4 se)", t + 1), m.i[t], expect, 4.0 * m.i_se[t]));
        let ibp = -(m.mv[t] + m.mw[t]);
        out.push(within("limits", format!("integration by parts, t={}", t + 1), ibp, m.i[t], 4.0 * (m.i_se[t] + m.ibp_se[t])));
    }
    Ok(out)
}

fn params_checks() -> Result<Vec<Check>> {
    let y = simulate_observations(3, 1, 1.0, 0.5, &mut stream(11, "obs", &[]));
    let tm = PrecisionModel::new(
        y,
        3,
        1,
        PrecisionPrior::LogNormal { mean: 0.0, sd: 1.0 },
        PrecisionProposal::LogRandomWalk { scale: 1.0 },
    )?;
    let q = quadrature_posterior(&tm, 400, 7.0)?;
    let cfg = KernelConfig::new(7, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, 1.0);
    let mut out = Vec::new();
    for (i, s) in [ParamSampler::ParticleGibbs(Algorithm::Icsmc), ParamSampler::EhmmAlt, ParamSampler::RwCsmcAlt]
        .into_iter()
        .enumerate()
    {
        let mut rng = stream(12, "chain", &[i as u64]);
        let tau0 = q.sample(&mut rng);
        let path0 = kalman_smooth(&tm.spec(tau0)?)?.sample_path(&mut rng);
        let tr = run_param_chain(&tm, s, &cfg, 1, vec![tau0], path0, 200_000, &mut rng)?;
        let taus = tr.component(0);
        let (m, se) = batch_means(&taus, 100);
        out.push(within("params", format!("{} posterior mean of tau (3 se)", s.name()), m, q.mean(), 3.0 * se));
        out.push(below("params", format!("{} KS distance", s.name()), q.ks_distance(&taus), 0.02));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for s in ["selection", "invariance", "ffbs", "limits", "bounds", "params", "all"] {
            assert_eq!(s.parse::<Suite>().unwrap().name(), s);
        }
        assert!(matches!("nope".parse::<Suite>(), Err(Error::Config(_))));
    }

    #[test]
    fn fast_suites_pass() {
        for s in [Suite::Selection, Suite::Ffbs, Suite::Bounds] {
            for c in run_suite(s).unwrap() {
                assert!(c.pass, "{c}");
            }
        }
    }
}
