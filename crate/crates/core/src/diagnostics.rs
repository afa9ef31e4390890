//! Streaming per-time chain diagnostics: acceptance rates, expected squared
//! jumping distance, effective sample size of the selection weights and the
//! lag-`k` autocorrelation of the first coordinate.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::kernels::GenealogyRecord;
use crate::model::Path;
use crate::selection::ess;

const WEIGHT_TOL: f64 = 1e-8;

/// Exact streaming lag-`k` autocorrelation with the biased `1/L` autocovariance.
#[derive(Debug, Clone)]
pub struct LagAutocorr {
    lag: usize,
    n: u64,
    shift: f64,
    sum: f64,
    sumsq: f64,
    cross: f64,
    head: f64,
    window: VecDeque<f64>,
}

impl LagAutocorr {
    pub fn new(lag: usize) -> Self {
        Self { lag, n: 0, shift: 0.0, sum: 0.0, sumsq: 0.0, cross: 0.0, head: 0.0, window: VecDeque::with_capacity(lag + 1) }
    }

    pub fn push(&mut self, x: f64) {
        if self.n == 0 {
            self.shift = x;
        }
        let v = x - self.shift;
        if (self.n as usize) < self.lag {
            self.head += v;
        }
        if self.window.len() == self.lag {
            if let Some(&old) = self.window.front() {
                self.cross += old * v;
            }
            if self.lag > 0 {
                self.window.pop_front();
            }
        }
        if self.lag > 0 {
            self.window.push_back(v);
        } else {
            self.cross += v * v;
        }
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    /// `None` until more than `lag` values have been seen or if the series is constant.
    pub fn value(&self) -> Option<f64> {
        let n = self.n as f64;
        if self.n as usize <= self.lag {
            return None;
        }
        let k = self.lag as f64;
        let mean = self.sum / n;
        let gamma0 = self.sumsq / n - mean * mean;
        if gamma0 <= 0.0 {
            return None;
        }
        let tail: f64 = self.window.iter().sum();
        let lead = self.sum - tail;
        let trail = self.sum - self.head;
        let gamma_k = (self.cross - mean * (lead + trail) + (n - k) * mean * mean) / n;
        Some(gamma_k / gamma0)
    }
}

/// Diagnostics of a single chain.
#[derive(Debug, Clone)]
pub struct ChainStats {
    pub horizon: usize,
    pub lag: usize,
    pub updates: u64,
    pub accept_count: Vec<u64>,
    pub esjd_sum: Vec<f64>,
    pub ess_resample_sum: Vec<f64>,
    pub ess_resample_count: Vec<u64>,
    pub ess_backward_sum: Vec<f64>,
    pub ess_backward_count: Vec<u64>,
    pub autocorr: Vec<LagAutocorr>,
}

fn checked_ess(w: &[f64]) -> Result<f64> {
    let s: f64 = w.iter().sum();
    if (s - 1.0).abs() > WEIGHT_TOL || w.iter().any(|p| !(0.0..=1.0 + WEIGHT_TOL).contains(p)) {
        return Err(Error::Diagnostics(format!("weights not normalised (sum {s})")));
    }
    Ok(ess(w))
}

impl ChainStats {
    pub fn new(horizon: usize, lag: usize) -> Self {
        Self {
            horizon,
            lag,
            updates: 0,
            accept_count: vec![0; horizon],
            esjd_sum: vec![0.0; horizon],
            ess_resample_sum: vec![0.0; horizon],
            ess_resample_count: vec![0; horizon],
            ess_backward_sum: vec![0.0; horizon],
            ess_backward_count: vec![0; horizon],
            autocorr: (0..horizon).map(|_| LagAutocorr::new(lag)).collect(),
        }
    }

    /// Adds one update: `old` is the state before, `new` after.
    pub fn record_update(&mut self, rec: &GenealogyRecord, old: &Path, new: &Path) -> Result<()> {
        if rec.selected.len() != self.horizon || old.horizon() != self.horizon || new.horizon() != self.horizon {
            return Err(Error::Diagnostics("record and path shapes disagree".into()));
        }
        for (t, w) in rec.resample_weights.iter().enumerate() {
            let e = checked_ess(w)?;
            self.ess_resample_sum[t] += e;
            self.ess_resample_count[t] += 1;
        }
        for (t, w) in rec.backward_weights.iter().enumerate() {
            let e = checked_ess(w)?;
            self.ess_backward_sum[t] += e;
            self.ess_backward_count[t] += 1;
        }
        self.updates += 1;
        for t in 0..self.horizon {
            if rec.accepted[t] {
                self.accept_count[t] += 1;
            }
            let mut j = 0.0;
            for (a, b) in old.row(t).iter().zip(new.row(t)) {
                j += (b - a) * (b - a);
            }
            self.esjd_sum[t] += j;
            self.autocorr[t].push(new.get(t, 0));
        }
        Ok(())
    }
}

/// Per-time summary, pooled over replicate chains.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    /// One-based time index.
    pub t: usize,
    pub accept_count: u64,
    pub update_count: u64,
    pub accept_rate: f64,
    pub esjd: f64,
    pub ess_resample: Option<f64>,
    pub ess_backward: Option<f64>,
    /// Mean over chains of the per-chain lag-`k` autocorrelation.
    pub autocorr: Option<f64>,
}

/// Additive aggregate of several chains; `merge` is associative.
#[derive(Debug, Clone)]
pub struct Aggregate {
    pub horizon: usize,
    pub chains: u64,
    pub updates: u64,
    pub accept_count: Vec<u64>,
    pub esjd_sum: Vec<f64>,
    pub ess_resample_sum: Vec<f64>,
    pub ess_resample_count: Vec<u64>,
    pub ess_backward_sum: Vec<f64>,
    pub ess_backward_count: Vec<u64>,
    pub autocorr_sum: Vec<f64>,
    pub autocorr_count: Vec<u64>,
}

impl Aggregate {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            chains: 0,
            updates: 0,
            accept_count: vec![0; horizon],
            esjd_sum: vec![0.0; horizon],
            ess_resample_sum: vec![0.0; horizon],
            ess_resample_count: vec![0; horizon],
            ess_backward_sum: vec![0.0; horizon],
            ess_backward_count: vec![0; horizon],
            autocorr_sum: vec![0.0; horizon],
            autocorr_count: vec![0; horizon],
        }
    }

    pub fn from_chain(c: &ChainStats) -> Self {
        let mut a = Self::new(c.horizon);
        a.chains = 1;
        a.updates = c.updates;
        a.accept_count.clone_from(&c.accept_count);
        a.esjd_sum.clone_from(&c.esjd_sum);
        a.ess_resample_sum.clone_from(&c.ess_resample_sum);
        a.ess_resample_count.clone_from(&c.ess_resample_count);
        a.ess_backward_sum.clone_from(&c.ess_backward_sum);
        a.ess_backward_count.clone_from(&c.ess_backward_count);
        for (t, ac) in c.autocorr.iter().enumerate() {
            if let Some(v) = ac.value() {
                a.autocorr_sum[t] = v;
                a.autocorr_count[t] = 1;
            }
        }
        a
    }

    pub fn merge(&mut self, o: &Aggregate) {
        fn add<T: Copy + std::ops::AddAssign>(a: &mut [T], b: &[T]) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x += y);
        }
        self.chains += o.chains;
        self.updates += o.updates;
        add(&mut self.accept_count, &o.accept_count);
        add(&mut self.esjd_sum, &o.esjd_sum);
        add(&mut self.ess_resample_sum, &o.ess_resample_sum);
        add(&mut self.ess_resample_count, &o.ess_resample_count);
        add(&mut self.ess_backward_sum, &o.ess_backward_sum);
        add(&mut self.ess_backward_count, &o.ess_backward_count);
        add(&mut self.autocorr_sum, &o.autocorr_sum);
        add(&mut self.autocorr_count, &o.autocorr_count);
    }

    pub fn finalize(&self) -> Vec<SummaryRow> {
        let ratio = |s: f64, c: u64| if c > 0 { Some(s / c as f64) } else { None };
        (0..self.horizon)
            .map(|t| SummaryRow {
                t: t + 1,
                accept_count: self.accept_count[t],
                update_count: self.updates,
                accept_rate: if self.updates > 0 { self.accept_count[t] as f64 / self.updates as f64 } else { f64::NAN },
                esjd: if self.updates > 0 { self.esjd_sum[t] / self.updates as f64 } else { f64::NAN },
                ess_resample: ratio(self.ess_resample_sum[t], self.ess_resample_count[t]),
                ess_backward: ratio(self.ess_backward_sum[t], self.ess_backward_count[t]),
                autocorr: ratio(self.autocorr_sum[t], self.autocorr_count[t]),
            })
            .collect()
    }
}

/// Summary of a single chain.
pub fn finalize(stats: &ChainStats) -> Vec<SummaryRow> {
    Aggregate::from_chain(stats).finalize()
}

/// Sample mean and its batch-means standard error.
pub fn batch_means(xs: &[f64], batches: usize) -> (f64, f64) {
    let n = xs.len();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let b = batches.min(n).max(2);
    let size = n / b;
    let means: Vec<f64> = (0..b).map(|i| xs[i * size..(i + 1) * size].iter().sum::<f64>() / size as f64).collect();
    let mm = means.iter().sum::<f64>() / b as f64;
    let var = means.iter().map(|m| (m - mm) * (m - mm)).sum::<f64>() / (b - 1) as f64;
    (mean, (var / b as f64).sqrt())
}
