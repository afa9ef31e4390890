use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Simulates `y` (`T x D`, row-major) from the Gaussian random-walk model.
pub fn simulate_observations<R: Rng + ?Sized>(
    horizon: usize,
    dim: usize,
    initial_variance: f64,
    obs_variance: f64,
    rng: &mut R,
) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    let mut y = Vec::with_capacity(horizon * dim);
    let obs_sd = obs_variance.sqrt();
    for t in 0..horizon {
        for xd in x.iter_mut() {
            let z: f64 = StandardNormal.sample(rng);
            *xd = if t == 0 { initial_variance.sqrt() * z } else { *xd + z };
            let e: f64 = StandardNormal.sample(rng);
            y.push(*xd + obs_sd * e);
        }
    }
    y
}

/// Reads a `t,d,value` CSV with 1-based indices. Returns `(T, D, y)`.
/// Every `(t, d)` cell of the grid must appear exactly once.
pub fn read_observations_csv<R: BufRead>(reader: R) -> Result<(usize, usize, Vec<f64>)> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse("empty observation file".into()))??;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols != ["t", "d", "value"] {
        return Err(Error::Parse(format!("expected header 't,d,value', got '{header}'")));
    }
    let mut cells = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Error::Parse(format!("line {}: malformed row '{line}'", lineno + 2));
        if parts.len() != 3 {
            return Err(bad());
        }
        let t: usize = parts[0].parse().map_err(|_| bad())?;
        let d: usize = parts[1].parse().map_err(|_| bad())?;
        let v: f64 = parts[2].parse().map_err(|_| bad())?;
        if t == 0 || d == 0 || !v.is_finite() {
            return Err(bad());
        }
        cells.push((t, d, v));
    }
    let horizon = cells.iter().map(|c| c.0).max().unwrap_or(0);
    let dim = cells.iter().map(|c| c.1).max().unwrap_or(0);
    if horizon == 0 {
        return Err(Error::Parse("observation file has no rows".into()));
    }
    let mut y = vec![f64::NAN; horizon * dim];
    for (t, d, v) in cells {
        let slot = &mut y[(t - 1) * dim + d - 1];
        if !slot.is_nan() {
            return Err(Error::Parse(format!("duplicate observation at t={t}, d={d}")));
        }
        *slot = v;
    }
    if let Some(i) = y.iter().position(|v| v.is_nan()) {
        return Err(Error::Parse(format!("missing observation at t={}, d={}", i / dim + 1, i % dim + 1)));
    }
    Ok((horizon, dim, y))
}

pub fn write_observations_csv<W: Write>(mut w: W, dim: usize, y: &[f64]) -> Result<()> {
    writeln!(w, "t,d,value")?;
    for (i, v) in y.iter().enumerate() {
        writeln!(w, "{},{},{v}", i / dim + 1, i % dim + 1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn csv_roundtrip() {
        let y = simulate_observations(4, 3, 1.0, 1.0, &mut stream(2, "obs", &[3, 0]));
        let mut buf = Vec::new();
        write_observations_csv(&mut buf, 3, &y).unwrap();
        let (t, d, back) = read_observations_csv(&buf[..]).unwrap();
        assert_eq!((t, d), (4, 3));
        assert_eq!(back, y);
    }

    #[test]
    fn csv_rejects_gaps_and_duplicates() {
        assert!(read_observations_csv(&b"t,d,value\n1,1,0.5\n2,2,0.1\n"[..]).is_err());
        assert!(read_observations_csv(&b"t,d,value\n1,1,0.5\n1,1,0.1\n"[..]).is_err());
        assert!(read_observations_csv(&b"x,y\n"[..]).is_err());
        assert!(read_observations_csv(&b"t,d,value\n"[..]).is_err());
        assert!(read_observations_csv(&b"t,d,value\n0,1,2\n"[..]).is_err());
    }

    #[test]
    fn simulated_increments_have_unit_scale() {
        let y = simulate_observations(2000, 1, 1.0, 1e-12, &mut stream(4, "obs", &[1, 0]));
        let n = (y.len() - 1) as f64;
        let v: f64 = y.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / n;
        assert!((v - 1.0).abs() < 4.0 * (2.0 / n).sqrt());
    }
}
