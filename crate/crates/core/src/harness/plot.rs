use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::experiment::ResultRow;
use crate::error::{Error, Result};

/// Quantities that get a panel each.
pub const QUANTITIES: [&str; 5] = ["accept_rate", "esjd", "ess_resample", "ess_backward", "autocorr"];

fn value(r: &ResultRow, q: &str) -> Option<f64> {
    let v = match q {
        "accept_rate" => Some(r.accept_rate),
        "esjd" => Some(r.esjd),
        "ess_resample" => r.ess_resample,
        "ess_backward" => r.ess_backward,
        "autocorr" => r.autocorr,
        _ => None,
    };
    v.filter(|x| x.is_finite())
}

/// A panel: one curve per `D`, ordered by `D`.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    pub title: String,
    pub quantity: String,
    pub curves: Vec<(usize, Vec<(f64, f64)>)>,
}

/// Groups rows into panels by `(algorithm, variant, quantity)`; panels with
/// no finite values are dropped.
pub fn panels(rows: &[ResultRow]) -> Vec<Panel> {
    let mut groups: BTreeMap<(String, String), Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.algorithm.clone(), r.variant.clone())).or_default().push(r);
    }
    let mut out = Vec::new();
    for ((alg, var), rs) in groups {
        for q in QUANTITIES {
            let mut by_d: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
            for r in &rs {
                if let Some(v) = value(r, q) {
                    by_d.entry(r.dim).or_default().push((r.t as f64, v));
                }
            }
            if by_d.is_empty() {
                continue;
            }
            let curves = by_d
                .into_iter()
                .map(|(d, mut pts)| {
                    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
                    (d, pts)
                })
                .collect();
            out.push(Panel { title: format!("{alg} {var}"), quantity: q.to_string(), curves });
        }
    }
    out
}

const COLOURS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

fn nice_range(lo: f64, hi: f64) -> (f64, f64) {
    if (hi - lo).abs() < 1e-12 {
        let pad = if lo.abs() > 0.0 { 0.1 * lo.abs() } else { 1.0 };
        (lo - pad, hi + pad)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Renders a panel as a standalone SVG document.
pub fn render_svg(p: &Panel) -> String {
    let (w, h) = (640.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 120.0, 40.0, 50.0);
    let pts = p.curves.iter().flat_map(|(_, c)| c.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let (x0, x1) = nice_range(x0, x1);
    let (y0, y1) = nice_range(y0, y1);
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| h - mb - (y - y0) / (y1 - y0) * (h - mt - mb);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, (ml + w - mr) / 2.0, p.title);
    let _ = writeln!(
        s,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - ml - mr,
        h - mt - mb
    );
    for i in 0..=4 {
        let fx = x0 + (x1 - x0) * i as f64 / 4.0;
        let fy = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{:.3}</text>"#, sx(fx), h - mb + 16.0, fx);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.3}</text>"#, ml - 6.0, sy(fy) + 4.0, fy);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">t</text>"#, (ml + w - mr) / 2.0, h - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        (mt + h - mb) / 2.0,
        (mt + h - mb) / 2.0,
        p.quantity
    );
    for (i, (d, c)) in p.curves.iter().enumerate() {
        let col = COLOURS[i % COLOURS.len()];
        let pts: Vec<String> = c.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{}"/>"#, pts.join(" "));
        let ly = mt + 16.0 + 18.0 * i as f64;
        let lx = w - mr + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{col}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">D = {d}</text>"#, lx + 26.0, ly + 4.0);
    }
    s.push_str("</svg>\n");
    s
}

fn file_name(p: &Panel) -> String {
    let base: String = p.title.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect();
    format!("{base}_{}.svg", p.quantity)
}

/// Writes one SVG per panel into `dir`. Nothing is written if `rows` is empty.
pub fn plot_rows(rows: &[ResultRow], dir: &Path) -> Result<Vec<PathBuf>> {
    let ps = panels(rows);
    if ps.is_empty() {
        return Err(Error::Parse("nothing to plot".into()));
    }
    fs::create_dir_all(dir)?;
    let mut out = Vec::new();
    for p in &ps {
        let f = dir.join(file_name(p));
        fs::write(&f, render_svg(p))?;
        out.push(f);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(dim: usize, t: usize, a: f64) -> ResultRow {
        ResultRow {
            algorithm: "icsmc".into(),
            variant: "boltzmann+bs".into(),
            horizon: 3,
            dim,
            n: 3,
            ell: 1.0,
            t,
            accept_rate: a,
            esjd: a,
            ess_resample: None,
            ess_backward: None,
            autocorr_lag: 1,
            autocorr: None,
            replicates: 1,
            seed: 1,
        }
    }

    #[test]
    fn single_d_gives_one_curve() {
        let rows: Vec<_> = (1..=3).map(|t| row(4, t, 0.5)).collect();
        let ps = panels(&rows);
        assert_eq!(ps.len(), 2);
        assert_eq!(ps[0].curves.len(), 1);
        let svg = render_svg(&ps[0]);
        assert!(svg.starts_with("<svg") && svg.contains("D = 4"));
    }

    #[test]
    fn curves_ordered_by_d() {
        let rows: Vec<_> = [256, 2, 16].iter().flat_map(|&d| (1..=3).map(move |t| row(d, t, 0.1 * t as f64))).collect();
        let p = &panels(&rows)[0];
        let ds: Vec<usize> = p.curves.iter().map(|c| c.0).collect();
        assert_eq!(ds, vec![2, 16, 256]);
        let svg = render_svg(p);
        let pos = |s: &str| svg.find(s).unwrap();
        assert!(pos("D = 2<") < pos("D = 16<") && pos("D = 16<") < pos("D = 256<"));
    }

    #[test]
    fn empty_input_writes_nothing() {
        let dir = std::env::temp_dir().join(format!("csmc-plot-empty-{}", std::process::id()));
        assert!(plot_rows(&[], &dir).is_err());
        assert!(!dir.exists());
    }
}
