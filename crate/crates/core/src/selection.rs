//! Boltzmann and Rosenbluth–Teller selection functions in the log domain,
//! and categorical sampling by ascending inverse CDF.
//!
//! The public `boltzmann` / `rosenbluth_teller` take `h^{1:N}` with the
//! implicit `h^0 = 0`. The `*_relative` forms take a full vector of log
//! weights and the index `j` playing the role of the reference, so that
//! `h^n = logw[n] - logw[j]`. Log weights of `-inf` get probability zero.

use rand::Rng;

/// `ln(sum exp(logw))`; `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(logw: &[f64]) -> f64 {
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    let mut s = 0.0;
    for &w in logw {
        s += (w - m).exp();
    }
    m + s.ln()
}

/// Normalised `exp(logw)` written into `out`. An all `-inf` input yields the
/// uniform distribution.
pub fn softmax(logw: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logw.len(), out.len());
    let m = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        let u = 1.0 / out.len() as f64;
        out.iter_mut().for_each(|o| *o = u);
        return;
    }
    let mut s = 0.0;
    for (o, &w) in out.iter_mut().zip(logw) {
        *o = (w - m).exp();
        s += *o;
    }
    let inv = 1.0 / s;
    out.iter_mut().for_each(|o| *o *= inv);
}

struct Shifted {
    /// `exp(-c)`, the shifted weight of the reference.
    e_ref: f64,
    /// Sum over non-reference `exp(h^n - c)`, ascending index order.
    s: f64,
}

fn shifted(logw: &[f64], j: usize, out: &mut [f64]) -> Shifted {
    let w0 = logw[j];
    debug_assert!(w0.is_finite(), "reference log weight must be finite");
    let mut c: f64 = 0.0;
    for (n, &w) in logw.iter().enumerate() {
        if n != j {
            c = c.max(w - w0);
        }
    }
    let mut s = 0.0;
    for (n, (o, &w)) in out.iter_mut().zip(logw).enumerate() {
        if n == j {
            *o = 0.0;
        } else {
            *o = (w - w0 - c).exp();
            s += *o;
        }
    }
    Shifted { e_ref: (-c).exp(), s }
}

/// Boltzmann (multi-proposal Barker) selection relative to index `j`.
pub fn boltzmann_relative(logw: &[f64], j: usize, out: &mut [f64]) {
    let sh = shifted(logw, j, out);
    let inv = 1.0 / (sh.e_ref + sh.s);
    for (n, o) in out.iter_mut().enumerate() {
        *o = if n == j { sh.e_ref * inv } else { *o * inv };
    }
}

/// Rosenbluth–Teller (multi-proposal Metropolis–Hastings) selection relative
/// to index `j`.
///
/// The retention probability is evaluated as the Boltzmann one minus the
/// (non-negative) mass moved onto the other indices, which is algebraically
/// the complement and keeps `zeta^j <= beta^j` exact in floating point.
pub fn rosenbluth_teller_relative(logw: &[f64], j: usize, out: &mut [f64]) {
    let sh = shifted(logw, j, out);
    if sh.s == 0.0 {
        out.iter_mut().for_each(|o| *o = 0.0);
        out[j] = 1.0;
        return;
    }
    let w0 = logw[j];
    let one_plus_s = sh.e_ref + sh.s;
    let beta_ref = sh.e_ref / one_plus_s;
    let mut delta = 0.0;
    for (n, o) in out.iter_mut().enumerate() {
        if n == j {
            continue;
        }
        let h = logw[n] - w0;
        let e = *o;
        if e == 0.0 {
            continue;
        }
        if h >= 0.0 {
            *o = e / sh.s;
            delta += e * sh.e_ref / (sh.s * one_plus_s);
        } else {
            // (1 - e^h) e^{-c} + S', written with expm1 for h near 0.
            let rest = -h.exp_m1() * sh.e_ref + sh.s;
            *o = e / rest;
            delta += e * e / (one_plus_s * rest);
        }
    }
    out[j] = (beta_ref - delta).clamp(0.0, 1.0);
}

fn with_reference(h: &[f64]) -> Vec<f64> {
    let mut logw = Vec::with_capacity(h.len() + 1);
    logw.push(0.0);
    logw.extend_from_slice(h);
    logw
}

/// `beta^n = e^{h^n} / (1 + sum_m e^{h^m})` over `n = 0..=N`.
pub fn boltzmann(h: &[f64]) -> Vec<f64> {
    let logw = with_reference(h);
    let mut out = vec![0.0; logw.len()];
    boltzmann_relative(&logw, 0, &mut out);
    out
}

/// `zeta^n = e^{h^n} / (1 - 1 ∧ e^{h^n} + sum_m e^{h^m})` for `n >= 1`,
/// `zeta^0` the complement.
pub fn rosenbluth_teller(h: &[f64]) -> Vec<f64> {
    let logw = with_reference(h);
    let mut out = vec![0.0; logw.len()];
    rosenbluth_teller_relative(&logw, 0, &mut out);
    out
}

/// Categorical draw by linear inverse-CDF scan in ascending index order.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (n, &pn) in p.iter().enumerate() {
        acc += pn;
        if acc > u {
            return n;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(p.len() - 1)
}

/// Cumulative table for repeated draws from one distribution.
/// Gives the same index as `sample_index` for the same uniform.
#[derive(Debug, Clone, Default)]
pub struct Cdf {
    cum: Vec<f64>,
}

impl Cdf {
    pub fn fill(&mut self, p: &[f64]) {
        self.cum.clear();
        let mut acc = 0.0;
        for &pn in p {
            acc += pn;
            self.cum.push(acc);
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cum.last().expect("empty distribution");
        let u = rng.random::<f64>() * total;
        let i = self.cum.partition_point(|&c| c <= u);
        if i < self.cum.len() {
            i
        } else {
            let mut k = self.cum.len() - 1;
            while k > 0 && self.cum[k] == self.cum[k - 1] {
                k -= 1;
            }
            k
        }
    }
}

/// Effective sample size `1 / sum p^2` of a normalised weight vector.
pub fn ess(p: &[f64]) -> f64 {
    1.0 / p.iter().map(|x| x * x).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use proptest::prelude::*;
    use rand::Rng;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < tol)
    }

    #[test]
    fn boltzmann_examples() {
        assert!(close(&boltzmann(&[0.0, 0.0]), &[1.0 / 3.0; 3], 1e-15));
        assert!(close(&boltzmann(&[3f64.ln()]), &[0.25, 0.75], 1e-15));
    }

    #[test]
    fn rosenbluth_teller_examples() {
        assert!(close(&rosenbluth_teller(&[0.0]), &[0.0, 1.0], 1e-15));
        assert!(close(&rosenbluth_teller(&[3f64.ln()]), &[0.0, 1.0], 1e-15));
        assert!(close(&rosenbluth_teller(&[0.0, 0.0]), &[0.0, 0.5, 0.5], 1e-15));
    }

    #[test]
    fn boltzmann_matches_direct_formula() {
        let mut rng = stream(1, "test", &[]);
        for _ in 0..1000 {
            let h: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let denom = 1.0 + h.iter().map(|x: &f64| x.exp()).sum::<f64>();
            let mut direct = vec![1.0 / denom];
            direct.extend(h.iter().map(|x| x.exp() / denom));
            assert!(close(&boltzmann(&h), &direct, 1e-12));
        }
    }

    #[test]
    fn rosenbluth_teller_matches_direct_formula() {
        let mut rng = stream(2, "test", &[]);
        for _ in 0..1000 {
            let h: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let s: f64 = h.iter().map(|x| x.exp()).sum();
            let tail: Vec<f64> = h.iter().map(|x| x.exp() / (1.0 - x.exp().min(1.0) + s)).collect();
            let mut direct = vec![1.0 - tail.iter().sum::<f64>()];
            direct.extend(tail);
            assert!(close(&rosenbluth_teller(&h), &direct, 1e-12));
        }
    }

    #[test]
    fn relative_forms_move_the_reference() {
        let logw = [0.3, -1.2, 2.0, 0.0];
        let mut a = [0.0; 4];
        boltzmann_relative(&logw, 2, &mut a);
        let mut b = [0.0; 4];
        softmax(&logw, &mut b);
        assert!(close(&a, &b, 1e-15));
        rosenbluth_teller_relative(&logw, 2, &mut a);
        let h: Vec<f64> = [0usize, 1, 3].iter().map(|&n| logw[n] - logw[2]).collect();
        let z = rosenbluth_teller(&h);
        assert!(close(&[a[2], a[0], a[1], a[3]], &z, 1e-15));
    }

    #[test]
    fn neg_infinity_weights_get_zero_mass() {
        let h = [f64::NEG_INFINITY, 0.5];
        let b = boltzmann(&h);
        let z = rosenbluth_teller(&h);
        assert_eq!(b[1], 0.0);
        assert_eq!(z[1], 0.0);
        assert_eq!(rosenbluth_teller(&[f64::NEG_INFINITY]), vec![1.0, 0.0]);
    }

    #[test]
    fn point_masses() {
        let mut rng = stream(3, "test", &[]);
        let mut cdf = Cdf::default();
        for _ in 0..100 {
            assert_eq!(sample_index(&[1.0, 0.0, 0.0], &mut rng), 0);
            assert_eq!(sample_index(&[0.0, 1.0], &mut rng), 1);
            cdf.fill(&[0.0, 1.0, 0.0]);
            assert_eq!(cdf.sample(&mut rng), 1);
        }
    }

    #[test]
    fn uniform_frequencies() {
        let mut rng = stream(4, "test", &[]);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            counts[sample_index(&[0.25; 4], &mut rng)] += 1;
        }
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * 0.25).abs() < 4.0 * sd);
        }
    }

    #[test]
    fn cdf_agrees_with_linear_scan() {
        let p = [0.1, 0.0, 0.4, 0.2, 0.3];
        let mut cdf = Cdf::default();
        cdf.fill(&p);
        for seed in 0..2000 {
            let a = sample_index(&p, &mut stream(seed, "test", &[]));
            let b = cdf.sample(&mut stream(seed, "test", &[]));
            assert_eq!(a, b);
        }
    }

    #[test]
    fn ess_examples() {
        assert!((ess(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((ess(&[0.5, 0.25, 0.25]) - 8.0 / 3.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn normalised_and_peskun(h in prop::collection::vec(-700.0f64..50.0, 1..9)) {
            let b = boltzmann(&h);
            let z = rosenbluth_teller(&h);
            prop_assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!((z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(b.iter().chain(&z).all(|p| (0.0..=1.0).contains(p)));
            prop_assert!(b[0] >= z[0]);
        }

        #[test]
        fn single_proposal_reductions(h in -30.0f64..30.0) {
            let b = boltzmann(&[h]);
            let z = rosenbluth_teller(&[h]);
            prop_assert!((b[1] - h.exp() / (1.0 + h.exp())).abs() < 1e-12);
            prop_assert!((z[1] - h.exp().min(1.0)).abs() < 1e-12);
        }

        #[test]
        fn shift_does_not_change_moderate_outputs(h in prop::collection::vec(-20.0f64..20.0, 1..6)) {
            let b = boltzmann(&h);
            let denom = 1.0 + h.iter().map(|x| x.exp()).sum::<f64>();
            prop_assert!((b[0] - 1.0 / denom).abs() < 1e-12);
            for (n, x) in h.iter().enumerate() {
                prop_assert!((b[n + 1] - x.exp() / denom).abs() < 1e-12);
            }
        }
    }
}
