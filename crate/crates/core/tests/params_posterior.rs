use csmc_core::diagnostics::batch_means;
use csmc_core::kernels::{Algorithm, IndexSelection, KernelConfig, SelectionVariant};
use csmc_core::model::{kalman_smooth, simulate_observations};
use csmc_core::params::{
    quadrature_posterior, run_param_chain, ParamSampler, PrecisionModel, PrecisionPrior, PrecisionProposal,
};
use csmc_core::rng::stream;

#[test]
fn every_sampler_targets_the_precision_posterior() {
    let y = simulate_observations(3, 1, 1.0, 0.5, &mut stream(11, "obs", &[]));
    let tm = PrecisionModel::new(
        y,
        3,
        1,
        PrecisionPrior::LogNormal { mean: 0.0, sd: 1.0 },
        PrecisionProposal::LogRandomWalk { scale: 1.0 },
    )
    .unwrap();
    let q = quadrature_posterior(&tm, 400, 7.0).unwrap();
    let cfg = KernelConfig::new(7, SelectionVariant::Boltzmann, IndexSelection::BackwardSampling, 1.0);
    let samplers = [
        ParamSampler::ParticleGibbs(Algorithm::Icsmc),
        ParamSampler::ParticleGibbs(Algorithm::RwEhmm),
        ParamSampler::ParticleGibbs(Algorithm::RwCsmc),
        ParamSampler::EhmmAlt,
        ParamSampler::RwCsmcAlt,
    ];
    for (i, s) in samplers.into_iter().enumerate() {
        let mut rng = stream(12, "chain", &[i as u64]);
        let tau0 = q.sample(&mut rng);
        let path0 = kalman_smooth(&tm.spec(tau0).unwrap()).unwrap().sample_path(&mut rng);
        let tr = run_param_chain(&tm, s, &cfg, 1, vec![tau0], path0, 50_000, &mut rng).unwrap();
        let taus = tr.component(0);
        let (m, se) = batch_means(&taus, 50);
        let ks = q.ks_distance(&taus);
        assert!((m - q.mean()).abs() < 4.0 * se, "{}: {m} ± {se} vs {}", s.name(), q.mean());
        assert!(ks < 0.04, "{}: ks {ks}", s.name());
    }
}
