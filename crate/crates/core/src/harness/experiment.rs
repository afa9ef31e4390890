use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path as FsPath, PathBuf};

use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, Variant};
use crate::diagnostics::{Aggregate, ChainStats};
use crate::error::{config, Error, Result};
use crate::kernels::{AnyKernel, SmoothingKernel};
use crate::model::{
    kalman_smooth, read_observations_csv, simulate_observations, Components, LgssmSpec, Path, ProductModel,
};
use crate::rng::stream;

pub const CSV_HEADER: &str =
    "algorithm,variant,T,D,N,ell,t,accept_rate,esjd,ess_resample,ess_backward,autocorr_lag,autocorr,replicates,seed";

/// One aggregated `(variant, D, t)` row of the results table.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub algorithm: String,
    pub variant: String,
    pub horizon: usize,
    pub dim: usize,
    pub n: usize,
    pub ell: f64,
    /// One-based.
    pub t: usize,
    pub accept_rate: f64,
    pub esjd: f64,
    pub ess_resample: Option<f64>,
    pub ess_backward: Option<f64>,
    pub autocorr_lag: usize,
    pub autocorr: Option<f64>,
    pub replicates: usize,
    pub seed: u64,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) if x.is_finite() => format!("{x}"),
        _ => "NA".into(),
    }
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.algorithm,
            self.variant,
            self.horizon,
            self.dim,
            self.n,
            self.ell,
            self.t,
            fmt_opt(Some(self.accept_rate)),
            fmt_opt(Some(self.esjd)),
            fmt_opt(self.ess_resample),
            fmt_opt(self.ess_backward),
            self.autocorr_lag,
            fmt_opt(self.autocorr),
            self.replicates,
            self.seed
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 15 {
            return Err(Error::Parse(format!("expected 15 fields, got {}: '{line}'", f.len())));
        }
        fn p<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse(format!("bad field '{s}'")))
        }
        fn opt(s: &str) -> Result<Option<f64>> {
            if s == "NA" {
                Ok(None)
            } else {
                p(s).map(Some)
            }
        }
        Ok(Self {
            algorithm: f[0].to_string(),
            variant: f[1].to_string(),
            horizon: p(f[2])?,
            dim: p(f[3])?,
            n: p(f[4])?,
            ell: p(f[5])?,
            t: p(f[6])?,
            accept_rate: opt(f[7])?.unwrap_or(f64::NAN),
            esjd: opt(f[8])?.unwrap_or(f64::NAN),
            ess_resample: opt(f[9])?,
            ess_backward: opt(f[10])?,
            autocorr_lag: p(f[11])?,
            autocorr: opt(f[12])?,
            replicates: p(f[13])?,
            seed: p(f[14])?,
        })
    }
}

pub fn write_csv<W: Write>(mut w: W, rows: &[ResultRow]) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

/// Reads a results table; an empty body is an error.
pub fn read_csv<R: BufRead>(r: R) -> Result<Vec<ResultRow>> {
    let mut lines = r.lines();
    let header = lines.next().transpose()?.ok_or_else(|| Error::Parse("empty file".into()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::Parse(format!("unexpected header '{}'", header.trim())));
    }
    let mut rows = Vec::new();
    for line in lines {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(ResultRow::from_csv(&line)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("no data rows".into()));
    }
    Ok(rows)
}

/// Runs `burn_in` unrecorded and `iterations` recorded updates from `path`.
pub fn run_chain<C: Components, K: SmoothingKernel, R: Rng + ?Sized>(
    model: &ProductModel<C>,
    kernel: &mut K,
    path: &mut Path,
    burn_in: usize,
    iterations: usize,
    lag: usize,
    rng: &mut R,
) -> Result<ChainStats> {
    for _ in 0..burn_in {
        kernel.update(model, path, rng)?;
    }
    let mut stats = ChainStats::new(model.horizon(), lag);
    let mut old = path.clone();
    for _ in 0..iterations {
        old.values_mut().copy_from_slice(path.values());
        kernel.update(model, path, rng)?;
        stats.record_update(kernel.record(), &old, path)?;
    }
    Ok(stats)
}

/// Loaded observations shared by every replicate.
struct Fixed {
    horizon: usize,
    dim: usize,
    y: Vec<f64>,
}

fn load_observations(cfg: &ExperimentConfig) -> Result<Option<Fixed>> {
    let Some(p) = &cfg.observations else { return Ok(None) };
    let file = fs::File::open(p).map_err(|e| Error::Config(format!("cannot open {}: {e}", p.display())))?;
    let (horizon, dim, y) = read_observations_csv(BufReader::new(file))?;
    if horizon != cfg.horizon || cfg.dims != [dim] {
        return config(format!(
            "observation file is {horizon} x {dim} but the configuration asks for T={} and D={:?}",
            cfg.horizon, cfg.dims
        ));
    }
    Ok(Some(Fixed { horizon, dim, y }))
}

fn replicate(cfg: &ExperimentConfig, fixed: Option<&Fixed>, v: &Variant, dim: usize, r: usize) -> Result<Aggregate> {
    let key = [dim as u64, r as u64];
    let v0 = cfg.model.initial_variance();
    let y = match fixed {
        Some(f) => {
            debug_assert_eq!((f.horizon, f.dim), (cfg.horizon, dim));
            f.y.clone()
        }
        None => simulate_observations(cfg.horizon, dim, v0, 1.0, &mut stream(cfg.seed, "obs", &key)),
    };
    let spec = LgssmSpec::new(cfg.horizon, dim, y, v0)?;
    let model = spec.model()?;
    let mut path = kalman_smooth(&spec)?.sample_path(&mut stream(cfg.seed, "init", &key));
    let mut kernel = AnyKernel::new(v.algorithm, v.kernel.clone());
    let mut rng = stream(cfg.seed, "chain", &key);
    let stats = run_chain(&model, &mut kernel, &mut path, cfg.burn_in, cfg.iterations, cfg.lag_for(dim), &mut rng)?;
    Ok(Aggregate::from_chain(&stats))
}

/// Runs every `(variant, D, replicate)` chain and aggregates per `(variant, D)`.
///
/// Replicates run in parallel on the current rayon pool; results are merged
/// in replicate order, so the output does not depend on the thread count.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    cfg.validate()?;
    let fixed = load_observations(cfg)?;
    let variants = cfg.variants();
    for v in &variants {
        v.kernel.validate(cfg.horizon)?;
    }
    let tasks: Vec<(usize, usize, usize)> = (0..variants.len())
        .flat_map(|vi| cfg.dims.iter().enumerate().flat_map(move |(di, _)| (0..cfg.replicates).map(move |r| (vi, di, r))))
        .collect();
    let aggs = tasks
        .par_iter()
        .map(|&(vi, di, r)| replicate(cfg, fixed.as_ref(), &variants[vi], cfg.dims[di], r))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (chunk, (vi, di)) in aggs
        .chunks(cfg.replicates)
        .zip((0..variants.len()).flat_map(|vi| (0..cfg.dims.len()).map(move |di| (vi, di))))
    {
        let mut total = Aggregate::new(cfg.horizon);
        for a in chunk {
            total.merge(a);
        }
        let (v, dim) = (&variants[vi], cfg.dims[di]);
        for s in total.finalize() {
            rows.push(ResultRow {
                algorithm: v.algorithm.name().to_string(),
                variant: v.kernel.variant_label(),
                horizon: cfg.horizon,
                dim,
                n: cfg.n,
                ell: cfg.ell,
                t: s.t,
                accept_rate: s.accept_rate,
                esjd: s.esjd,
                ess_resample: s.ess_resample,
                ess_backward: s.ess_backward,
                autocorr_lag: cfg.lag_for(dim),
                autocorr: s.autocorr,
                replicates: cfg.replicates,
                seed: cfg.seed,
            });
        }
    }
    Ok(rows)
}

/// Writes `results.csv` and `config.txt` (plus SVG panels if requested)
/// into the output directory and returns the files written.
pub fn write_experiment(cfg: &ExperimentConfig, rows: &[ResultRow]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(&cfg.output)?;
    let csv = cfg.output.join("results.csv");
    write_csv(fs::File::create(&csv)?, rows)?;
    let conf = cfg.output.join("config.txt");
    fs::write(&conf, cfg.to_text())?;
    let mut out = vec![csv, conf];
    if cfg.plot {
        out.extend(super::plot::plot_rows(rows, &cfg.output)?);
    }
    Ok(out)
}

/// Reads results tables from several files.
pub fn read_csv_files(paths: &[impl AsRef<FsPath>]) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for p in paths {
        let f = fs::File::open(p.as_ref())?;
        rows.extend(read_csv(BufReader::new(f))?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Algorithm, IndexSelection};

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            algorithms: vec![Algorithm::Icsmc, Algorithm::RwCsmc],
            index_selection: vec![IndexSelection::BackwardSampling],
            horizon: 4,
            dims: vec![2, 5],
            n: 3,
            iterations: 50,
            replicates: 3,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn smoke_run_has_one_row_per_d_and_t() {
        let cfg = ExperimentConfig { replicates: 1, iterations: 1, ..small() };
        let rows = run_experiment(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 2 * 4);
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        assert_eq!(back.len(), rows.len());
        assert!(rows.iter().all(|r| r.autocorr.is_none()));
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = small();
        let run = |threads| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            let rows = pool.install(|| run_experiment(&cfg)).unwrap();
            let mut buf = Vec::new();
            write_csv(&mut buf, &rows).unwrap();
            buf
        };
        let a = run(1);
        assert_eq!(a, run(3));
        assert_eq!(a, run(1));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rows = run_experiment(&small()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &rows).unwrap();
        let back = read_csv(&buf[..]).unwrap();
        for (a, b) in rows.iter().zip(&back) {
            assert_eq!(a.to_csv(), b.to_csv());
        }
        assert!(read_csv(&b"algorithm\n"[..]).is_err());
        assert!(read_csv(format!("{CSV_HEADER}\n").as_bytes()).is_err());
    }

    #[test]
    fn merge_order_does_not_matter() {
        let cfg = small();
        let v = &cfg.variants()[1];
        let parts: Vec<Aggregate> = (0..3).map(|r| replicate(&cfg, None, v, 2, r).unwrap()).collect();
        let mut fwd = Aggregate::new(4);
        parts.iter().for_each(|p| fwd.merge(p));
        let mut rev = Aggregate::new(4);
        parts.iter().rev().for_each(|p| rev.merge(p));
        for (a, b) in fwd.finalize().iter().zip(rev.finalize()) {
            assert_eq!(a.accept_count, b.accept_count);
            assert!((a.esjd - b.esjd).abs() < 1e-12);
            assert!((a.ess_resample.unwrap() - b.ess_resample.unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn observation_file_must_match() {
        let dir = std::env::temp_dir().join(format!("csmc-obs-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = dir.join("y.csv");
        let y = vec![0.1, 0.2, 0.3, 0.4];
        crate::model::write_observations_csv(fs::File::create(&p).unwrap(), 1, &y).unwrap();
        let mut cfg = ExperimentConfig { observations: Some(p.clone()), dims: vec![1], ..small() };
        assert_eq!(run_experiment(&cfg).unwrap().len(), 2 * 4);
        cfg.dims = vec![2];
        assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
        fs::remove_dir_all(dir).unwrap();
    }
}
