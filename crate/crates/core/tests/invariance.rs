use csmc_core::diagnostics::batch_means;
use csmc_core::kernels::{AnyKernel, Algorithm, IndexSelection, KernelConfig, SelectionVariant, SmoothingKernel};
use csmc_core::model::{kalman_smooth, simulate_observations, LgssmSpec};
use csmc_core::rng::stream;

fn variants(alg: Algorithm) -> Vec<(SelectionVariant, IndexSelection)> {
    let idx = [IndexSelection::AncestralTrace, IndexSelection::BackwardSampling, IndexSelection::AncestorSampling];
    match alg {
        Algorithm::RwEhmm => vec![(SelectionVariant::Boltzmann, IndexSelection::BackwardSampling)],
        _ => [SelectionVariant::Boltzmann, SelectionVariant::ForcedMove]
            .into_iter()
            .flat_map(|s| idx.into_iter().map(move |i| (s, i)))
            .collect(),
    }
}

#[test]
fn smoother_moments_are_reproduced_by_every_kernel() {
    let (horizon, dim, iters) = (5, 2, 100_000);
    let y = simulate_observations(horizon, dim, 1.0, 1.0, &mut stream(42, "obs", &[dim as u64, 0]));
    let spec = LgssmSpec::new(horizon, dim, y, 1.0).unwrap();
    let kal = kalman_smooth(&spec).unwrap();
    let model = spec.model().unwrap();
    let mut failures = Vec::new();
    for alg in [Algorithm::Icsmc, Algorithm::RwEhmm, Algorithm::RwCsmc] {
        for (vi, (sel, idx)) in variants(alg).into_iter().enumerate() {
            let mut kernel = AnyKernel::new(alg, KernelConfig::new(3, sel, idx, 1.0));
            let mut rng = stream(42, "chain", &[alg as u64, vi as u64]);
            let mut path = kal.sample_path(&mut stream(42, "init", &[alg as u64, vi as u64]));
            let mut trace = vec![Vec::with_capacity(iters); horizon * dim];
            for _ in 0..iters {
                kernel.update(&model, &mut path, &mut rng).unwrap();
                for (i, tr) in trace.iter_mut().enumerate() {
                    tr.push(path.values()[i]);
                }
            }
            for (i, tr) in trace.iter().enumerate() {
                let (mu, var) = (kal.smoother_means[i], kal.smoother_variances[i]);
                let (m, se) = batch_means(tr, 100);
                let sq: Vec<f64> = tr.iter().map(|x| (x - mu) * (x - mu)).collect();
                let (v, sev) = batch_means(&sq, 100);
                if (m - mu).abs() > 4.0 * se || (v - var).abs() > 4.0 * sev {
                    failures.push(format!("{alg:?} {sel:?} {idx:?} cell {i}: mean {m:.4} vs {mu:.4} (se {se:.4}), var {v:.4} vs {var:.4} (se {sev:.4})"));
                }
            }
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}
