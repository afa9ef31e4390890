//! Conditional resampling, final selection and backward index selection on a
//! fixed set of log weights, plus exact enumeration of the induced law.
//!
//! The weight of particle `n` at time `t` may depend on its ancestor at
//! `t - 1`; this covers the i-CSMC weights `g_t(z_t^n)`, the joint
//! mutation-potential weights of i-RW-CSMC and the Gaussian limit of the
//! latter.

use rand::Rng;

use super::{GenealogyRecord, IndexSelection, SelectionVariant};
use crate::error::{Error, Result};
use crate::selection::{boltzmann_relative, rosenbluth_teller_relative, softmax, Cdf};

/// Upper bound on ancestor configurations visited by [`genealogy_law`].
pub const DEFAULT_ENUMERATION_BOUND: u128 = 10_000_000;

pub trait DiscreteWeights {
    /// Log weight of particle `n` at time `t` when its parent is `ancestor`
    /// (ignored at `t = 0`).
    fn log_weight(&mut self, t: usize, n: usize, ancestor: usize) -> f64;

    /// Additional backward-sampling term linking particle `n` at `t` to
    /// particle `k_next` at `t + 1`.
    fn log_backward_extra(&mut self, t: usize, n: usize, k_next: usize) -> f64;

    /// Hook run at the start of time `t >= 1` once the ancestors into `t`
    /// are fixed.
    fn advance<R: Rng + ?Sized>(&mut self, _t: usize, _ancestors: &[usize], _rng: &mut R) {}
}

#[derive(Debug, Clone, Default)]
pub struct GenealogyWorkspace {
    omega: Vec<Vec<f64>>,
    logw: Vec<f64>,
    probs: Vec<f64>,
    cdf: Cdf,
}

/// Runs the discrete part of a conditional SMC sweep with the reference at
/// index 0, filling `rec`.
pub fn sample_genealogy<W: DiscreteWeights, R: Rng + ?Sized>(
    w: &mut W,
    n1: usize,
    horizon: usize,
    selection: SelectionVariant,
    index_selection: IndexSelection,
    rng: &mut R,
    rec: &mut GenealogyRecord,
    ws: &mut GenealogyWorkspace,
) {
    let bs = index_selection == IndexSelection::BackwardSampling;
    let evals = rec.evals;
    rec.reset(horizon, n1, true, bs);
    rec.evals = evals;
    ws.omega.resize(horizon, Vec::new());
    for row in ws.omega.iter_mut() {
        row.resize(n1, 0.0);
    }
    ws.logw.resize(n1, 0.0);
    ws.probs.resize(n1, 0.0);

    for n in 0..n1 {
        ws.omega[0][n] = w.log_weight(0, n, 0);
    }
    for t in 1..horizon {
        softmax(&ws.omega[t - 1], &mut rec.resample_weights[t - 1]);
        ws.cdf.fill(&rec.resample_weights[t - 1]);
        let anc = &mut rec.ancestors[t - 1];
        anc[0] = 0;
        for a in anc.iter_mut().skip(1) {
            *a = ws.cdf.sample(rng);
        }
        if index_selection == IndexSelection::AncestorSampling {
            for n in 0..n1 {
                ws.logw[n] = ws.omega[t - 1][n] + w.log_backward_extra(t - 1, n, 0);
            }
            softmax(&ws.logw, &mut ws.probs);
            ws.cdf.fill(&ws.probs);
            anc[0] = ws.cdf.sample(rng);
        }
        w.advance(t, anc, rng);
        for n in 0..n1 {
            ws.omega[t][n] = w.log_weight(t, n, anc[n]);
        }
    }

    let last = horizon - 1;
    softmax(&ws.omega[last], &mut rec.resample_weights[last]);
    let k_last = match selection {
        SelectionVariant::Boltzmann => {
            ws.cdf.fill(&rec.resample_weights[last]);
            ws.cdf.sample(rng)
        }
        SelectionVariant::ForcedMove => {
            rosenbluth_teller_relative(&ws.omega[last], 0, &mut ws.probs);
            ws.cdf.fill(&ws.probs);
            ws.cdf.sample(rng)
        }
    };
    rec.selected[last] = k_last;
    for t in (0..last).rev() {
        let next = rec.selected[t + 1];
        rec.selected[t] = if bs {
            for n in 0..n1 {
                ws.logw[n] = ws.omega[t][n] + w.log_backward_extra(t, n, next);
            }
            softmax(&ws.logw, &mut rec.backward_weights[t]);
            ws.cdf.fill(&rec.backward_weights[t]);
            ws.cdf.sample(rng)
        } else {
            rec.ancestors[t][next]
        };
    }
    rec.finish_accepted();
}

/// All weights tabulated for exact enumeration.
#[derive(Debug, Clone)]
pub struct TableWeights {
    pub n1: usize,
    pub horizon: usize,
    /// `weight[t][a * n1 + n]`; at `t = 0` only `a = 0` is meaningful and
    /// the row is replicated.
    pub weight: Vec<Vec<f64>>,
    /// `backward[t][n * n1 + k]` for `t < T - 1`.
    pub backward: Vec<Vec<f64>>,
}

impl TableWeights {
    pub fn from_weights<W: DiscreteWeights>(w: &mut W, n1: usize, horizon: usize) -> Self {
        let mut weight = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let mut row = vec![0.0; n1 * n1];
            for a in 0..n1 {
                for n in 0..n1 {
                    row[a * n1 + n] = w.log_weight(t, n, if t == 0 { 0 } else { a });
                }
            }
            weight.push(row);
        }
        let mut backward = Vec::with_capacity(horizon.saturating_sub(1));
        for t in 0..horizon.saturating_sub(1) {
            let mut row = vec![0.0; n1 * n1];
            for n in 0..n1 {
                for k in 0..n1 {
                    row[n * n1 + k] = w.log_backward_extra(t, n, k);
                }
            }
            backward.push(row);
        }
        Self { n1, horizon, weight, backward }
    }

    fn w(&self, t: usize, a: usize, n: usize) -> f64 {
        self.weight[t][a * self.n1 + n]
    }
}

impl DiscreteWeights for TableWeights {
    fn log_weight(&mut self, t: usize, n: usize, ancestor: usize) -> f64 {
        self.w(t, if t == 0 { 0 } else { ancestor }, n)
    }

    fn log_backward_extra(&mut self, t: usize, n: usize, k_next: usize) -> f64 {
        self.backward[t][n * self.n1 + k_next]
    }
}

pub fn encode_indices(k: &[usize], n1: usize) -> usize {
    k.iter().fold(0, |acc, &x| acc * n1 + x)
}

pub fn decode_indices(mut code: usize, n1: usize, horizon: usize) -> Vec<usize> {
    let mut k = vec![0; horizon];
    for slot in k.iter_mut().rev() {
        *slot = code % n1;
        code /= n1;
    }
    k
}

/// Normalised `xi(k) ∝ exp(sum_t weight_t[k_{t-1}, k_t])` over all `(N+1)^T` index vectors.
pub fn brute_force_xi(table: &TableWeights) -> Vec<f64> {
    let (n1, horizon) = (table.n1, table.horizon);
    let size = n1.pow(horizon as u32);
    let mut logxi = vec![0.0; size];
    for (code, lx) in logxi.iter_mut().enumerate() {
        let k = decode_indices(code, n1, horizon);
        let mut s = table.w(0, 0, k[0]);
        for t in 1..horizon {
            s += table.w(t, k[t - 1], k[t]);
        }
        *lx = s;
    }
    let mut xi = vec![0.0; size];
    softmax(&logxi, &mut xi);
    xi
}

/// Exact law of `K_{1:T}` when the reference sits at `j_{1:T}`.
///
/// Ancestors of non-reference particles are resampled, the reference's
/// ancestor is pinned to `j_{t-1}` (or redrawn under ancestor sampling), and
/// the forced move is taken relative to `j_T`.
pub fn genealogy_law(
    table: &TableWeights,
    selection: SelectionVariant,
    index_selection: IndexSelection,
    j: &[usize],
    bound: u128,
) -> Result<Vec<f64>> {
    let (n1, horizon) = (table.n1, table.horizon);
    let per_step = if index_selection == IndexSelection::AncestorSampling { n1 } else { n1 - 1 };
    let digits = per_step * (horizon - 1);
    let size = (n1 as u128).checked_pow(digits as u32).unwrap_or(u128::MAX);
    if size > bound {
        return Err(Error::EnumerationTooLarge { size, bound });
    }
    let mut law = vec![0.0; n1.pow(horizon as u32)];
    let mut digit = vec![0usize; digits];
    let mut anc = vec![vec![0usize; n1]; horizon.saturating_sub(1)];
    let mut omega = vec![vec![0.0; n1]; horizon];
    let mut probs = vec![0.0; n1];
    let mut logw = vec![0.0; n1];
    loop {
        // Probability of this ancestor configuration.
        let mut p_anc = 1.0;
        omega[0].copy_from_slice(&table.weight[0][..n1]);
        let mut di = 0;
        for t in 1..horizon {
            softmax(&omega[t - 1], &mut probs);
            for n in 0..n1 {
                if n == j[t] {
                    continue;
                }
                anc[t - 1][n] = digit[di];
                p_anc *= probs[digit[di]];
                di += 1;
            }
            if index_selection == IndexSelection::AncestorSampling {
                for a in 0..n1 {
                    logw[a] = omega[t - 1][a] + table.backward[t - 1][a * n1 + j[t]];
                }
                softmax(&logw, &mut probs);
                anc[t - 1][j[t]] = digit[di];
                p_anc *= probs[digit[di]];
                di += 1;
            } else {
                anc[t - 1][j[t]] = j[t - 1];
            }
            for n in 0..n1 {
                omega[t][n] = table.w(t, anc[t - 1][n], n);
            }
        }
        if p_anc > 0.0 {
            accumulate_k(table, selection, index_selection, j, &anc, &omega, p_anc, &mut law);
        }
        // Odometer increment.
        let mut pos = 0;
        loop {
            if pos == digits {
                return Ok(law);
            }
            digit[pos] += 1;
            if digit[pos] < n1 {
                break;
            }
            digit[pos] = 0;
            pos += 1;
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn accumulate_k(
    table: &TableWeights,
    selection: SelectionVariant,
    index_selection: IndexSelection,
    j: &[usize],
    anc: &[Vec<usize>],
    omega: &[Vec<f64>],
    p_anc: f64,
    law: &mut [f64],
) {
    let (n1, horizon) = (table.n1, table.horizon);
    let last = horizon - 1;
    let mut p_last = vec![0.0; n1];
    match selection {
        SelectionVariant::Boltzmann => boltzmann_relative(&omega[last], j[last], &mut p_last),
        SelectionVariant::ForcedMove => rosenbluth_teller_relative(&omega[last], j[last], &mut p_last),
    }
    let bs = index_selection == IndexSelection::BackwardSampling;
    let mut k = vec![0usize; horizon];
    let mut logw = vec![0.0; n1];
    let mut probs = vec![0.0; n1];
    for code in 0..n1.pow(horizon as u32) {
        let kk = decode_indices(code, n1, horizon);
        k.copy_from_slice(&kk);
        let mut p = p_anc * p_last[k[last]];
        for t in (0..last).rev() {
            if p == 0.0 {
                break;
            }
            if bs {
                for n in 0..n1 {
                    logw[n] = omega[t][n] + table.backward[t][n * n1 + k[t + 1]];
                }
                softmax(&logw, &mut probs);
                p *= probs[k[t]];
            } else if anc[t][k[t + 1]] != k[t] {
                p = 0.0;
            }
        }
        law[code] += p;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_table(n1: usize, horizon: usize, seed: u64) -> TableWeights {
        let mut rng = stream(seed, "test", &[]);
        let weight = (0..horizon)
            .map(|t| {
                let base: Vec<f64> = (0..n1 * n1).map(|_| rng.random_range(-2.0..2.0)).collect();
                if t == 0 {
                    let first = base[..n1].to_vec();
                    (0..n1 * n1).map(|i| first[i % n1]).collect()
                } else {
                    base
                }
            })
            .collect();
        let backward = (0..horizon - 1)
            .map(|_| (0..n1 * n1).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        TableWeights { n1, horizon, weight, backward }
    }

    #[test]
    fn encode_decode_roundtrip() {
        for code in 0..27 {
            assert_eq!(encode_indices(&decode_indices(code, 3, 3), 3), code);
        }
        assert_eq!(decode_indices(5, 3, 2), vec![1, 2]);
    }

    #[test]
    fn laws_are_distributions() {
        let table = random_table(3, 3, 1);
        for sel in [SelectionVariant::Boltzmann, SelectionVariant::ForcedMove] {
            for idx in [IndexSelection::AncestralTrace, IndexSelection::BackwardSampling, IndexSelection::AncestorSampling] {
                let law = genealogy_law(&table, sel, idx, &[0, 2, 1], DEFAULT_ENUMERATION_BOUND).unwrap();
                assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn size_guard() {
        let table = random_table(3, 3, 2);
        let err = genealogy_law(&table, SelectionVariant::Boltzmann, IndexSelection::AncestralTrace, &[0, 0, 0], 10);
        assert!(matches!(err, Err(Error::EnumerationTooLarge { size: 81, bound: 10 })));
    }

    #[test]
    fn sampler_matches_law() {
        let table = random_table(2, 3, 3);
        for (sel, idx) in [
            (SelectionVariant::Boltzmann, IndexSelection::AncestralTrace),
            (SelectionVariant::ForcedMove, IndexSelection::BackwardSampling),
            (SelectionVariant::Boltzmann, IndexSelection::AncestorSampling),
        ] {
            let law = genealogy_law(&table, sel, idx, &[0, 0, 0], DEFAULT_ENUMERATION_BOUND).unwrap();
            let mut counts = vec![0usize; law.len()];
            let mut rng = stream(7, "test", &[]);
            let mut rec = GenealogyRecord::default();
            let mut ws = GenealogyWorkspace::default();
            let mut w = table.clone();
            let reps = 200_000;
            for _ in 0..reps {
                sample_genealogy(&mut w, 2, 3, sel, idx, &mut rng, &mut rec, &mut ws);
                counts[encode_indices(&rec.selected, 2)] += 1;
            }
            for (c, p) in counts.iter().zip(&law) {
                let sd = (reps as f64 * p * (1.0 - p)).sqrt().max(1.0);
                assert!((*c as f64 - reps as f64 * p).abs() < 4.5 * sd, "{sel:?} {idx:?}");
            }
        }
    }
}
