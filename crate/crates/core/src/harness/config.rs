use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use crate::error::{config, Error, Result};
use crate::kernels::{Algorithm, IndexSelection, KernelConfig, SelectionVariant};
use crate::model::ModelPreset;

/// Settings of one experiment. Lists expand to their cartesian product.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algorithms: Vec<Algorithm>,
    pub forced_move: Vec<bool>,
    pub index_selection: Vec<IndexSelection>,
    pub model: ModelPreset,
    /// CSV with header `t,d,value`; simulated per replicate when absent.
    pub observations: Option<PathBuf>,
    pub horizon: usize,
    pub dims: Vec<usize>,
    pub n: usize,
    pub ell: f64,
    pub iterations: usize,
    pub replicates: usize,
    pub burn_in: usize,
    /// Autocorrelation lag; `None` means lag `D`.
    pub lag: Option<usize>,
    pub seed: u64,
    pub output: PathBuf,
    pub threads: Option<usize>,
    pub plot: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            algorithms: vec![Algorithm::Icsmc, Algorithm::RwCsmc],
            forced_move: vec![false],
            index_selection: vec![IndexSelection::AncestralTrace, IndexSelection::BackwardSampling],
            model: ModelPreset::GaussRw,
            observations: None,
            horizon: 25,
            dims: vec![2, 16, 64, 256],
            n: 31,
            ell: 1.0,
            iterations: 5000,
            replicates: 20,
            burn_in: 0,
            lag: None,
            seed: 1,
            output: PathBuf::from("out"),
            threads: None,
            plot: false,
        }
    }
}

/// One kernel variant of an experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Variant {
    pub algorithm: Algorithm,
    pub kernel: KernelConfig,
}

fn list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, T::Err> {
    v.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).map(str::parse).collect()
}

fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim().parse().map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))
}

fn parse_bool(v: &str) -> Result<bool> {
    match v.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => config(format!("invalid boolean '{other}'")),
    }
}

impl ExperimentConfig {
    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "algorithm" => self.algorithms = list(v)?,
            "forced_move" => self.forced_move = v.split(',').map(parse_bool).collect::<Result<_>>()?,
            "index_selection" => self.index_selection = list(v)?,
            "model" => self.model = v.parse()?,
            "observations" => self.observations = if v.is_empty() { None } else { Some(PathBuf::from(v)) },
            "T" => self.horizon = num("T", v)?,
            "D" => self.dims = list(v).map_err(|_| Error::Config(format!("invalid D list '{v}'")))?,
            "N" => self.n = num("N", v)?,
            "ell" => self.ell = num("ell", v)?,
            "iterations" => self.iterations = num("iterations", v)?,
            "replicates" => self.replicates = num("replicates", v)?,
            "burn_in" => self.burn_in = num("burn_in", v)?,
            "lag" => self.lag = if v == "D" { None } else { Some(num("lag", v)?) },
            "seed" => self.seed = num("seed", v)?,
            "output" => self.output = PathBuf::from(v),
            "threads" => self.threads = if v.is_empty() { None } else { Some(num("threads", v)?) },
            "plot" => self.plot = parse_bool(v)?,
            other => return config(format!("unknown configuration key '{other}'")),
        }
        Ok(())
    }

    /// Applies an override of the form `key=value`.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
        self.set(k, v)
    }

    /// Parses a flat `key = value` file on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return config("D list is empty");
        }
        if self.algorithms.is_empty() || self.forced_move.is_empty() || self.index_selection.is_empty() {
            return config("variant lists must be nonempty");
        }
        if self.horizon == 0 || self.n == 0 || self.iterations == 0 || self.replicates == 0 || self.dims.contains(&0) {
            return config("T, N, D, iterations and replicates must be positive");
        }
        if !(self.ell > 0.0 && self.ell.is_finite()) {
            return config("ell must be positive");
        }
        if self.lag == Some(0) || self.threads == Some(0) {
            return config("lag and threads must be positive");
        }
        Ok(())
    }

    pub fn lag_for(&self, dim: usize) -> usize {
        self.lag.unwrap_or(dim)
    }

    /// Distinct kernel variants, in a fixed order. Selection flags are
    /// dropped for RW-EHMM, which has no selection step.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out: Vec<Variant> = Vec::new();
        for &algorithm in &self.algorithms {
            for &fm in &self.forced_move {
                for &idx in &self.index_selection {
                    let (sel, idx) = if algorithm == Algorithm::RwEhmm {
                        (SelectionVariant::Boltzmann, IndexSelection::BackwardSampling)
                    } else {
                        (if fm { SelectionVariant::ForcedMove } else { SelectionVariant::Boltzmann }, idx)
                    };
                    let v = Variant { algorithm, kernel: KernelConfig::new(self.n, sel, idx, self.ell) };
                    if !out.contains(&v) {
                        out.push(v);
                    }
                }
            }
        }
        out
    }

    /// Round-trippable `key = value` rendering.
    pub fn to_text(&self) -> String {
        let join = |v: Vec<String>| v.join(",");
        let mut s = String::new();
        let _ = writeln!(s, "algorithm = {}", join(self.algorithms.iter().map(|a| a.name().to_string()).collect()));
        let _ = writeln!(s, "forced_move = {}", join(self.forced_move.iter().map(|b| b.to_string()).collect()));
        let _ = writeln!(s, "index_selection = {}", join(self.index_selection.iter().map(|i| i.to_string()).collect()));
        let _ = writeln!(s, "model = {}", self.model.name());
        if let Some(p) = &self.observations {
            let _ = writeln!(s, "observations = {}", p.display());
        }
        let _ = writeln!(s, "T = {}", self.horizon);
        let _ = writeln!(s, "D = {}", join(self.dims.iter().map(|d| d.to_string()).collect()));
        let _ = writeln!(s, "N = {}", self.n);
        let _ = writeln!(s, "ell = {}", self.ell);
        let _ = writeln!(s, "iterations = {}", self.iterations);
        let _ = writeln!(s, "replicates = {}", self.replicates);
        let _ = writeln!(s, "burn_in = {}", self.burn_in);
        let _ = writeln!(s, "lag = {}", self.lag.map_or("D".to_string(), |l| l.to_string()));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output = {}", self.output.display());
        if let Some(t) = self.threads {
            let _ = writeln!(s, "threads = {t}");
        }
        let _ = writeln!(s, "plot = {}", self.plot);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text = "# desk run\nalgorithm = icsmc, rwehmm\nD = 2,16\nT=5\nforced_move = false,true\nlag = 3\nseed = 9 # trailing\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.algorithms, vec![Algorithm::Icsmc, Algorithm::RwEhmm]);
        assert_eq!(cfg.dims, vec![2, 16]);
        assert_eq!(cfg.horizon, 5);
        assert_eq!(cfg.lag_for(16), 3);
        assert_eq!(ExperimentConfig::parse(&cfg.to_text()).unwrap(), cfg);
        // icsmc: 2 selections x 2 index selections; rwehmm collapses to one.
        assert_eq!(cfg.variants().len(), 5);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::parse("D =").is_err());
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("N = -3").is_err());
        assert!(ExperimentConfig::parse("just a line").is_err());
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.apply_override("iterations=0").is_ok());
        assert!(cfg.validate().is_err());
        assert!(cfg.apply_override("no-equals").is_err());
    }

    #[test]
    fn lag_defaults_to_dimension() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.lag_for(64), 64);
    }
}
