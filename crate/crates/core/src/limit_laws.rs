//! High-dimensional limits of the genealogy laws of the random-walk kernels,
//! their moment inputs and the closed-form acceptance-rate bounds.
//!
//! Writing `gbar_t(x_{t-1}, x_t) = log m_t(x_{t-1}, x_t) + log G_t(x_t)`
//! (and `gbar_{T+1} = 0`), the moments are the `pi_T`-expectations of
//! `d/dx_t gbar_t`, `d/dx_t gbar_{t+1}` and their second derivatives.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{
    sample_genealogy, DiscreteWeights, GenealogyRecord, GenealogyWorkspace, IndexSelection, SelectionVariant,
};
use crate::model::{
    kalman_smooth, simulate_observations, Components, Derivs, LgssmSpec, Path, TransitionDerivs,
};
use crate::rng::{stream, StreamRng};
use crate::selection::{boltzmann_relative, Cdf};

/// Estimates with Monte Carlo standard errors, one entry per time.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitMoments {
    pub i: Vec<f64>,
    pub v2: Vec<f64>,
    pub w2: Vec<f64>,
    pub cross: Vec<f64>,
    pub mv: Vec<f64>,
    pub mw: Vec<f64>,
    pub i_se: Vec<f64>,
    /// Standard error of the integration-by-parts estimate `-(mv + mw)`.
    pub ibp_se: Vec<f64>,
    pub ell: Vec<f64>,
    /// Number of univariate path draws averaged over.
    pub draws: u64,
}

impl LimitMoments {
    pub fn horizon(&self) -> usize {
        self.i.len()
    }

    /// Moments given directly (no sampling error), e.g. for injected tests.
    pub fn from_values(v2: Vec<f64>, w2: Vec<f64>, cross: Vec<f64>, mv: Vec<f64>, mw: Vec<f64>, ell: Vec<f64>) -> Self {
        let horizon = v2.len();
        let i = (0..horizon).map(|t| v2[t] + w2[t] + 2.0 * cross[t]).collect();
        Self { i, v2, w2, cross, mv, mw, i_se: vec![0.0; horizon], ibp_se: vec![0.0; horizon], ell, draws: 0 }
    }

    pub fn ell_at(&self, t: usize) -> f64 {
        if self.ell.len() == 1 {
            self.ell[0]
        } else {
            self.ell[t]
        }
    }
}

/// How derivatives of the log densities are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Analytic callbacks are required.
    Analytic,
    /// Central finite differences with step `1e-4 (1 + |x|)`.
    FiniteDifference,
    /// Analytic where available, finite differences otherwise.
    Auto,
}

fn fd(f: impl Fn(f64) -> f64, x: f64) -> Derivs {
    let h = 1e-4 * (1.0 + x.abs());
    let (fp, f0, fm) = (f(x + h), f(x), f(x - h));
    Derivs { d1: (fp - fm) / (2.0 * h), d2: (fp - 2.0 * f0 + fm) / (h * h) }
}

fn pick<T>(mode: DerivativeMode, analytic: Option<T>, numeric: impl FnOnce() -> T, what: &str) -> Result<T> {
    match (mode, analytic) {
        (DerivativeMode::FiniteDifference, _) => Ok(numeric()),
        (_, Some(v)) => Ok(v),
        (DerivativeMode::Auto, None) => Ok(numeric()),
        (DerivativeMode::Analytic, None) => Err(Error::Capability(format!("model has no analytic derivative of {what}"))),
    }
}

fn d_g<C: Components>(c: &C, mode: DerivativeMode, t: usize, d: usize, x: f64) -> Result<Derivs> {
    pick(mode, c.d_log_g(t, d, x), || fd(|u| c.log_g(t, d, u), x), "log G")
}

fn d_m1<C: Components>(c: &C, mode: DerivativeMode, d: usize, x: f64) -> Result<Derivs> {
    pick(mode, c.d_log_m1(d, x), || fd(|u| c.log_m1(d, u), x), "log m_1")
}

fn d_m<C: Components>(c: &C, mode: DerivativeMode, t: usize, d: usize, xp: f64, x: f64) -> Result<TransitionDerivs> {
    pick(
        mode,
        c.d_log_m(t, d, xp, x),
        || {
            let cur = fd(|u| c.log_m(t, d, xp, u), x);
            let prev = fd(|u| c.log_m(t, d, u, x), xp);
            TransitionDerivs { d_prev: prev.d1, d_cur: cur.d1, d2_prev: prev.d2, d2_cur: cur.d2 }
        },
        "log m_t",
    )
}

#[derive(Clone)]
struct Sums {
    n: f64,
    // v, w, v^2, w^2, vw, mv, mw, (v+w)^2, ((v+w)^2)^2, (mv+mw), (mv+mw)^2
    s: Vec<[f64; 11]>,
}

impl Sums {
    fn new(horizon: usize) -> Self {
        Self { n: 0.0, s: vec![[0.0; 11]; horizon] }
    }

    fn merge(mut self, o: Self) -> Self {
        self.n += o.n;
        for (a, b) in self.s.iter_mut().zip(&o.s) {
            for k in 0..11 {
                a[k] += b[k];
            }
        }
        self
    }
}

fn accumulate<C: Components>(c: &C, path: &Path, mode: DerivativeMode, sums: &mut Sums) -> Result<()> {
    let horizon = path.horizon();
    for d in 0..path.dim() {
        for t in 0..horizon {
            let x = path.get(t, d);
            let g = d_g(c, mode, t, d, x)?;
            let (dv, d2v) = if t == 0 {
                let m = d_m1(c, mode, d, x)?;
                (g.d1 + m.d1, g.d2 + m.d2)
            } else {
                let m = d_m(c, mode, t, d, path.get(t - 1, d), x)?;
                (g.d1 + m.d_cur, g.d2 + m.d2_cur)
            };
            let (dw, d2w) = if t + 1 < horizon {
                let m = d_m(c, mode, t + 1, d, x, path.get(t + 1, d))?;
                (m.d_prev, m.d2_prev)
            } else {
                (0.0, 0.0)
            };
            let s = &mut sums.s[t];
            let tot = dv + dw;
            let ibp = d2v + d2w;
            s[0] += dv;
            s[1] += dw;
            s[2] += dv * dv;
            s[3] += dw * dw;
            s[4] += dv * dw;
            s[5] += d2v;
            s[6] += d2w;
            s[7] += tot * tot;
            s[8] += tot * tot * tot * tot;
            s[9] += ibp;
            s[10] += ibp * ibp;
        }
        sums.n += 1.0;
    }
    Ok(())
}

/// Monte Carlo estimate of the limit moments from exact smoothing draws.
///
/// `sample` returns the components and a path drawn exactly from the
/// corresponding smoothing distribution; each spatial component of the path
/// counts as one univariate draw. Batches are generated from substreams
/// `(seed, "moments", [b])`, so the result does not depend on the thread count.
pub fn estimate_limit_moments<C, F>(
    horizon: usize,
    batches: usize,
    sample: F,
    mode: DerivativeMode,
    ell: &[f64],
    seed: u64,
) -> Result<LimitMoments>
where
    C: Components,
    F: Fn(&mut StreamRng) -> Result<(C, Path)> + Sync,
{
    let sums = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, "moments", &[b as u64]);
            let (c, path) = sample(&mut rng)?;
            if path.horizon() != horizon {
                return Err(Error::Config("sampler returned a path with the wrong horizon".into()));
            }
            let mut s = Sums::new(horizon);
            accumulate(&c, &path, mode, &mut s)?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(Sums::new(horizon), Sums::merge);
    let n = sums.n;
    let mut m = LimitMoments {
        i: Vec::new(),
        v2: Vec::new(),
        w2: Vec::new(),
        cross: Vec::new(),
        mv: Vec::new(),
        mw: Vec::new(),
        i_se: Vec::new(),
        ibp_se: Vec::new(),
        ell: ell.to_vec(),
        draws: n as u64,
    };
    for s in &sums.s {
        m.v2.push(s[2] / n);
        m.w2.push(s[3] / n);
        m.cross.push(s[4] / n);
        m.mv.push(s[5] / n);
        m.mw.push(s[6] / n);
        let i = s[7] / n;
        m.i.push(i);
        m.i_se.push(((s[8] / n - i * i).max(0.0) / n).sqrt());
        let ib = s[9] / n;
        m.ibp_se.push(((s[10] / n - ib * ib).max(0.0) / n).sqrt());
    }
    Ok(m)
}

/// Moments of the Gaussian random-walk model averaged over observations
/// drawn from the model: each batch simulates `dim` independent components
/// and draws one exact smoothing path for them.
pub fn gauss_rw_moments(
    horizon: usize,
    initial_variance: f64,
    batches: usize,
    dim: usize,
    ell: &[f64],
    seed: u64,
) -> Result<LimitMoments> {
    estimate_limit_moments(
        horizon,
        batches,
        |rng: &mut StreamRng| {
            let y = simulate_observations(horizon, dim, initial_variance, 1.0, rng);
            let spec = LgssmSpec::new(horizon, dim, y, initial_variance)?;
            let path = kalman_smooth(&spec)?.sample_path(rng);
            Ok((spec.components()?, path))
        },
        DerivativeMode::Auto,
        ell,
        seed,
    )
}

/// Draw of `(V_t^n, W_t^n)` for all `t` and `n`, with `V_t^0 = W_t^0 = 0`.
#[derive(Debug, Clone, Default)]
pub struct LimitDraw {
    pub n1: usize,
    /// `[t * n1 + n]`
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

fn correlated<R: Rng + ?Sized>(n1: usize, out: &mut [f64], rng: &mut R) {
    // X^n = sqrt(1/2) (xi_0 + xi_n): unit variances, correlation 1/2.
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let xi0: f64 = StandardNormal.sample(rng);
    out[0] = 0.0;
    for o in out.iter_mut().take(n1).skip(1) {
        let e: f64 = StandardNormal.sample(rng);
        *o = s * (xi0 + e);
    }
}

impl LimitDraw {
    pub fn sample<R: Rng + ?Sized>(m: &LimitMoments, n: usize, rng: &mut R) -> Self {
        let horizon = m.horizon();
        let n1 = n + 1;
        let mut d = Self { n1, v: vec![0.0; horizon * n1], w: vec![0.0; horizon * n1] };
        let mut xa = vec![0.0; n1];
        let mut xb = vec![0.0; n1];
        for t in 0..horizon {
            let ell = m.ell_at(t);
            let a = m.v2[t].max(0.0).sqrt();
            let b = if a > 0.0 { m.cross[t] / a } else { 0.0 };
            let c = (m.w2[t] - b * b).max(0.0).sqrt();
            let (muv, muw) = (0.5 * ell * m.mv[t], 0.5 * ell * m.mw[t]);
            let sl = ell.sqrt();
            correlated(n1, &mut xa, rng);
            correlated(n1, &mut xb, rng);
            for k in 1..n1 {
                d.v[t * n1 + k] = muv + sl * a * xa[k];
                d.w[t * n1 + k] = muw + sl * (b * xa[k] + c * xb[k]);
            }
        }
        d
    }
}

impl DiscreteWeights for LimitDraw {
    #[inline]
    fn log_weight(&mut self, t: usize, n: usize, ancestor: usize) -> f64 {
        let v = self.v[t * self.n1 + n];
        if t == 0 {
            v
        } else {
            v + self.w[(t - 1) * self.n1 + ancestor]
        }
    }

    #[inline]
    fn log_backward_extra(&mut self, t: usize, n: usize, _k_next: usize) -> f64 {
        self.w[t * self.n1 + n]
    }
}

/// One draw of the limiting i-RW-CSMC genealogy.
pub fn simulate_limit_genealogy<R: Rng + ?Sized>(
    m: &LimitMoments,
    n: usize,
    selection: SelectionVariant,
    index_selection: IndexSelection,
    rng: &mut R,
) -> Result<GenealogyRecord> {
    if index_selection == IndexSelection::AncestorSampling {
        return Err(Error::Config("the limit law is defined for ancestral tracing and backward sampling only".into()));
    }
    let mut draw = LimitDraw::sample(m, n, rng);
    let mut rec = GenealogyRecord::default();
    let mut ws = GenealogyWorkspace::default();
    sample_genealogy(&mut draw, n + 1, m.horizon(), selection, index_selection, rng, &mut rec, &mut ws);
    Ok(rec)
}

/// One draw of the limiting RW-EHMM indices: independent over `t`, with
/// `V_t ~ N(-ell_t I_t / 2, ell_t I_t Sigma)`.
pub fn simulate_limit_ehmm<R: Rng + ?Sized>(m: &LimitMoments, n: usize, rng: &mut R) -> Vec<usize> {
    let n1 = n + 1;
    let mut x = vec![0.0; n1];
    let mut logw = vec![0.0; n1];
    let mut p = vec![0.0; n1];
    let mut cdf = Cdf::default();
    (0..m.horizon())
        .map(|t| {
            let li = m.ell_at(t) * m.i[t];
            correlated(n1, &mut x, rng);
            logw[0] = 0.0;
            for k in 1..n1 {
                logw[k] = -0.5 * li + li.sqrt() * x[k];
            }
            boltzmann_relative(&logw, 0, &mut p);
            cdf.fill(&p);
            cdf.sample(rng)
        })
        .collect()
}

/// Which limiting kernel to simulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitKernel {
    RwCsmc(SelectionVariant, IndexSelection),
    RwEhmm,
}

const CHUNK: usize = 1000;

/// Per-`t` limiting acceptance rates `P(K_t != 0)` with standard errors,
/// from `reps` draws in chunks seeded by `(seed, "limit", [chunk])`.
pub fn limit_acceptance_rates(m: &LimitMoments, n: usize, kernel: LimitKernel, reps: usize, seed: u64) -> Result<Vec<(f64, f64)>> {
    if let LimitKernel::RwCsmc(_, IndexSelection::AncestorSampling) = kernel {
        return Err(Error::Config("the limit law is defined for ancestral tracing and backward sampling only".into()));
    }
    let horizon = m.horizon();
    let chunks = reps.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, "limit", &[c as u64]);
            let mut acc = vec![0u64; horizon];
            let todo = CHUNK.min(reps - c * CHUNK);
            for _ in 0..todo {
                let k = match kernel {
                    LimitKernel::RwCsmc(sel, idx) => simulate_limit_genealogy(m, n, sel, idx, &mut rng)?.selected,
                    LimitKernel::RwEhmm => simulate_limit_ehmm(m, n, &mut rng),
                };
                for (a, &kt) in acc.iter_mut().zip(&k) {
                    *a += u64::from(kt != 0);
                }
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(vec![0u64; horizon], |mut a, b| {
            a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
            a
        });
    Ok(counts
        .into_iter()
        .map(|c| {
            let p = c as f64 / reps as f64;
            (p, (p * (1.0 - p) / reps as f64).sqrt())
        })
        .collect())
}

/// Standard normal distribution function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticBounds {
    /// `(1 + e^{ell I}/N)^{-1}`: RW-EHMM and backward-sampling lower bound.
    pub bs_bound: f64,
    /// `exp(-e^{ell I}/C)` without backward sampling, when `N >= C T`.
    pub no_bs_bound: Option<f64>,
    /// `2 Phi(-sqrt(ell I)/2)`: limiting random-walk Metropolis acceptance rate.
    pub rwmh_rate: f64,
}

pub fn analytic_bounds(ell: f64, i: f64, n: usize, c: Option<f64>) -> AnalyticBounds {
    let e = (ell * i).exp();
    AnalyticBounds {
        bs_bound: 1.0 / (1.0 + e / n as f64),
        no_bs_bound: c.map(|c| (-e / c).exp()),
        rwmh_rate: 2.0 * std_normal_cdf(-(ell * i).sqrt() / 2.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{genealogy_law, TableWeights};
    use crate::model::GaussRw;
    use crate::selection::softmax;

    fn zero_moments(horizon: usize) -> LimitMoments {
        let z = vec![0.0; horizon];
        LimitMoments::from_values(z.clone(), z.clone(), z.clone(), z.clone(), z, vec![1.0])
    }

    #[test]
    fn normal_cdf_values() {
        assert!((std_normal_cdf(0.0) - 0.5).abs() < 1e-15);
        assert!((std_normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((std_normal_cdf(-1.0) - 0.158655253931457).abs() < 1e-12);
    }

    #[test]
    fn bounds_examples() {
        let b = analytic_bounds(1.0, 2.0, 31, Some(1.0));
        assert!((b.bs_bound - 0.807521).abs() < 1e-6);
        assert!((b.rwmh_rate - 0.479500).abs() < 1e-6);
        assert!((b.no_bs_bound.unwrap() - (-(2f64.exp())).exp()).abs() < 1e-15);
        let small = analytic_bounds(1.0, 1e-12, 31, None);
        assert!((small.bs_bound - 31.0 / 32.0).abs() < 1e-9);
        assert!((small.rwmh_rate - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gauss_rw_information() {
        let m = gauss_rw_moments(4, 1.0, 200, 500, &[1.0], 3).unwrap();
        for t in 0..4 {
            let expect = if t == 3 { 2.0 } else { 3.0 };
            assert!((m.i[t] - expect).abs() < 4.0 * m.i_se[t], "t={t}: {} ± {}", m.i[t], m.i_se[t]);
            let ibp = -(m.mv[t] + m.mw[t]);
            assert!((ibp - m.i[t]).abs() < 4.0 * (m.i_se[t] + m.ibp_se[t]));
            assert!((m.v2[t] + m.w2[t] + 2.0 * m.cross[t] - m.i[t]).abs() < 1e-9);
        }
        assert_eq!(m.w2[3], 0.0);
    }

    #[test]
    fn finite_differences_agree_with_analytic() {
        let a = gauss_rw_moments(3, 1.0, 20, 100, &[1.0], 4).unwrap();
        let f = estimate_limit_moments(
            3,
            20,
            |rng: &mut StreamRng| {
                let y = simulate_observations(3, 100, 1.0, 1.0, rng);
                let spec = LgssmSpec::new(3, 100, y, 1.0)?;
                let path = kalman_smooth(&spec)?.sample_path(rng);
                Ok((spec.components()?, path))
            },
            DerivativeMode::FiniteDifference,
            &[1.0],
            4,
        )
        .unwrap();
        for t in 0..3 {
            assert!((a.i[t] - f.i[t]).abs() < 1e-5 * a.i[t]);
            assert!((a.mv[t] - f.mv[t]).abs() < 1e-4);
        }
    }

    #[test]
    fn time_factorised_model_has_no_cross_terms() {
        let m = estimate_limit_moments(
            3,
            5,
            |rng: &mut StreamRng| {
                let c = GaussRw::new(vec![0.1; 30], 10, 1.0, 1.0)?.time_factorised();
                let vals = (0..30).map(|_| StandardNormal.sample(&mut *rng)).collect();
                Ok((c, Path::from_values(3, 10, vals)?))
            },
            DerivativeMode::Analytic,
            &[1.0],
            1,
        )
        .unwrap();
        for t in 0..3 {
            assert_eq!(m.w2[t], 0.0);
            assert_eq!(m.cross[t], 0.0);
        }
    }

    struct NoDerivs;
    impl Components for NoDerivs {
        fn log_m1(&self, _d: usize, x: f64) -> f64 {
            -0.5 * x * x
        }
        fn sample_m1<R: Rng + ?Sized>(&self, _d: usize, rng: &mut R) -> f64 {
            StandardNormal.sample(rng)
        }
        fn log_m(&self, _t: usize, _d: usize, xp: f64, x: f64) -> f64 {
            -0.5 * (x - xp) * (x - xp)
        }
        fn sample_m<R: Rng + ?Sized>(&self, _t: usize, _d: usize, xp: f64, rng: &mut R) -> f64 {
            xp + Distribution::<f64>::sample(&StandardNormal, rng)
        }
        fn log_g(&self, _t: usize, _d: usize, x: f64) -> f64 {
            -0.5 * x * x
        }
    }

    #[test]
    fn missing_derivatives_are_a_capability_error() {
        let r = estimate_limit_moments(1, 1, |_: &mut StreamRng| Ok((NoDerivs, Path::zeros(1, 1))), DerivativeMode::Analytic, &[1.0], 0);
        assert!(matches!(r, Err(Error::Capability(_))));
        let r = estimate_limit_moments(1, 1, |_: &mut StreamRng| Ok((NoDerivs, Path::zeros(1, 1))), DerivativeMode::Auto, &[1.0], 0);
        assert!(r.is_ok());
    }

    #[test]
    fn zero_moments_give_uniform_selection() {
        let m = zero_moments(3);
        let mut rng = stream(1, "test", &[]);
        let rec = simulate_limit_genealogy(&m, 4, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, &mut rng).unwrap();
        for row in rec.resample_weights.iter().chain(&rec.backward_weights) {
            for p in row {
                assert!((p - 0.2).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn covariance_construction() {
        let m = LimitMoments::from_values(vec![2.0], vec![1.0], vec![0.6], vec![-1.0], vec![-0.5], vec![1.5]);
        let mut rng = stream(2, "test", &[]);
        let reps = 100_000;
        let (mut sv, mut sw, mut svv, mut sww, mut svw, mut sv12) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for _ in 0..reps {
            let d = LimitDraw::sample(&m, 2, &mut rng);
            let (v, w) = (d.v[1], d.w[1]);
            sv += v;
            sw += w;
            svv += v * v;
            sww += w * w;
            svw += v * w;
            sv12 += v * d.v[2];
            assert_eq!((d.v[0], d.w[0]), (0.0, 0.0));
        }
        let n = reps as f64;
        let (mv, mw) = (sv / n, sw / n);
        assert!((mv - 0.75 * -1.0).abs() < 4.0 * (3.0 / n).sqrt());
        assert!((mw - 0.75 * -0.5).abs() < 4.0 * (1.5 / n).sqrt());
        let tol = |var: f64| 4.0 * var * (2.0 / n).sqrt();
        assert!((svv / n - mv * mv - 3.0).abs() < tol(3.0));
        assert!((sww / n - mw * mw - 1.5).abs() < tol(1.5));
        assert!((svw / n - mv * mw - 0.9).abs() < tol(1.5));
        assert!((sv12 / n - mv * mv - 1.5).abs() < tol(3.0));
    }

    #[test]
    fn factorised_limit_selects_independently() {
        // With w = 0 and backward sampling the index law factorises over t.
        let m = LimitMoments::from_values(vec![1.0; 2], vec![0.0; 2], vec![0.0; 2], vec![-1.0; 2], vec![0.0; 2], vec![1.0]);
        let mut d = LimitDraw::sample(&m, 2, &mut stream(5, "test", &[]));
        let table = TableWeights::from_weights(&mut d, 3, 2);
        let law = genealogy_law(&table, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, &[0, 0], 1000).unwrap();
        let mut p0 = [0.0; 3];
        softmax(&d.v[0..3], &mut p0);
        let mut p1 = [0.0; 3];
        softmax(&d.v[3..6], &mut p1);
        for a in 0..3 {
            for b in 0..3 {
                assert!((law[a * 3 + b] - p0[a] * p1[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn injected_draw_matches_hand_enumeration() {
        // N = 1, T = 2, no backward sampling: A^1 ~ beta(v_1), K_2 ~ beta(v_2 + w_1^{A^1}).
        let mut d = LimitDraw { n1: 2, v: vec![0.0, 0.4, 0.0, -0.3], w: vec![0.0, 0.7, 0.0, 0.0] };
        let table = TableWeights::from_weights(&mut d, 2, 2);
        let law = genealogy_law(&table, SelectionVariant::Boltzmann, IndexSelection::AncestralTrace, &[0, 0], 100).unwrap();
        let s = |x: f64| x.exp() / (1.0 + x.exp());
        let mut hand = [0.0; 4];
        for a in 0..2 {
            let pa = if a == 1 { s(0.4) } else { 1.0 - s(0.4) };
            let h = -0.3 + if a == 1 { 0.7 } else { 0.0 };
            let pk = s(h);
            hand[0] += pa * (1.0 - pk);
            hand[a * 2 + 1] += pa * pk;
        }
        for k in 0..4 {
            assert!((law[k] - hand[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn acceptance_is_deterministic_and_increases_with_n() {
        let m = gauss_rw_moments(3, 1.0, 50, 200, &[1.0], 7).unwrap();
        let k = LimitKernel::RwCsmc(SelectionVariant::Boltzmann, IndexSelection::BackwardSampling);
        let a = limit_acceptance_rates(&m, 7, k, 5000, 1).unwrap();
        assert_eq!(a, limit_acceptance_rates(&m, 7, k, 5000, 1).unwrap());
        let rates: Vec<f64> = [1, 7, 31]
            .iter()
            .map(|&n| limit_acceptance_rates(&m, n, k, 20_000, 2).unwrap().iter().map(|r| r.0).sum::<f64>())
            .collect();
        assert!(rates[0] < rates[1] && rates[1] < rates[2]);
        assert!(limit_acceptance_rates(&m, 3, LimitKernel::RwCsmc(SelectionVariant::Boltzmann, IndexSelection::AncestorSampling), 10, 1).is_err());
    }
}
