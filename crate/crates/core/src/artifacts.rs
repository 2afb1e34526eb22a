//! CSV encoders/decoders and minimal SVG line plots.
//!
//! Floats are written in shortest round-trip form, so identical inputs give
//! identical bytes and a strip read back equals the one written.

use crate::adiabatic_lab::ConvergenceTable;
use crate::estimates::{EstimateReport, GammaProfile};
use crate::geometry::{wrap, Pt};
use crate::morse_flow::FlowPath;
use crate::strip_solver::{StripError, StripField};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("malformed strip CSV: {0}")]
    Malformed(String),
    #[error(transparent)]
    Strip(#[from] StripError),
}

fn writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Vec<u8> {
    w.into_inner().expect("in-memory CSV writer cannot fail")
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Nodes in storage order: `i,j,s,t,q1[,q2],p1[,p2]`, Q lifted.
pub fn strip_csv(u: &StripField) -> Vec<u8> {
    let mut w = writer();
    let mut header = vec!["i".to_string(), "j".into(), "s".into(), "t".into()];
    header.extend((1..=u.dim).map(|c| format!("q{c}")));
    header.extend((1..=u.dim).map(|c| format!("p{c}")));
    w.write_record(&header).expect("in-memory");
    for i in 0..=u.ns {
        for j in 0..=u.nt {
            let k = u.idx(i, j);
            let mut rec = vec![i.to_string(), j.to_string(), num(u.s(i)), num(u.t(j))];
            rec.extend((0..u.dim).map(|c| num(u.q[k][c])));
            rec.extend((0..u.dim).map(|c| num(u.p[k][c])));
            w.write_record(&rec).expect("in-memory");
        }
    }
    finish(w)
}

pub fn read_strip_csv(bytes: &[u8]) -> Result<StripField, ArtifactError> {
    let mut r = csv::ReaderBuilder::new().from_reader(bytes);
    let header = r.headers()?.clone();
    let dim = match header.len() {
        6 => 1,
        8 => 2,
        n => return Err(ArtifactError::Malformed(format!("{n} columns"))),
    };
    let mut rows: Vec<(usize, usize, f64, f64, Pt, Pt)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(ArtifactError::Malformed(format!("record of length {}", rec.len())));
        }
        let parse_f = |k: usize| -> Result<f64, ArtifactError> {
            rec[k].parse::<f64>().map_err(|e| ArtifactError::Malformed(format!("`{}`: {e}", &rec[k])))
        };
        let parse_u = |k: usize| -> Result<usize, ArtifactError> {
            rec[k].parse::<usize>().map_err(|e| ArtifactError::Malformed(format!("`{}`: {e}", &rec[k])))
        };
        let mut q = Pt::zeros();
        let mut p = Pt::zeros();
        for c in 0..dim {
            q[c] = parse_f(4 + c)?;
            p[c] = parse_f(4 + dim + c)?;
        }
        rows.push((parse_u(0)?, parse_u(1)?, parse_f(2)?, parse_f(3)?, q, p));
    }
    let (ns, nt) = match rows.last() {
        Some(&(i, j, ..)) if i > 0 && j > 0 => (i, j),
        _ => return Err(ArtifactError::Malformed("fewer than 2x2 nodes".into())),
    };
    if rows.len() != (ns + 1) * (nt + 1) {
        return Err(ArtifactError::Malformed(format!("{} nodes for a {ns}x{nt} grid", rows.len())));
    }
    let (s_min, s_max, t_max) = (rows[0].2, rows[rows.len() - 1].2, rows[rows.len() - 1].3);
    let mut u = StripField::on_rect(dim, s_min, s_max, t_max, ns, nt)?;
    for (k, (i, j, _, _, q, p)) in rows.into_iter().enumerate() {
        if u.idx(i, j) != k {
            return Err(ArtifactError::Malformed(format!("node ({i}, {j}) out of order")));
        }
        u.q[k] = q;
        u.p[k] = p;
    }
    Ok(u)
}

pub fn profile_csv(profile: &GammaProfile, report: &EstimateReport) -> Vec<u8> {
    let mut w = writer();
    w.write_record(["s", "gamma", "dgamma", "ddgamma", "dirichlet", "lhs", "envelope"]).expect("in-memory");
    let first = report.s.first().copied().unwrap_or(f64::INFINITY);
    let offset = (0..profile.s_grid.len()).find(|&i| profile.s_grid[i] >= first - 1e-12);
    for i in 0..profile.s_grid.len() {
        let k = offset.and_then(|o| i.checked_sub(o)).filter(|k| *k < report.s.len());
        let (l, e) = k.map(|k| (num(report.lhs[k]), num(report.envelope[k]))).unwrap_or_default();
        w.write_record([
            num(profile.s_grid[i]),
            num(profile.gamma[i]),
            num(profile.dgamma[i]),
            num(profile.ddgamma[i]),
            num(profile.dirichlet[i]),
            l,
            e,
        ])
        .expect("in-memory");
    }
    finish(w)
}

pub fn table_csv(table: &ConvergenceTable) -> Vec<u8> {
    let mut w = writer();
    w.write_record([
        "eps",
        "r",
        "ns",
        "nt",
        "converged",
        "residual_norm",
        "newton_iters",
        "sup_dist",
        "energy",
        "stokes_energy",
        "morse_energy",
        "f_difference",
        "measured_k",
        "measured_kappa",
        "violations",
    ])
    .expect("in-memory");
    for row in &table.rows {
        w.write_record([
            num(row.eps),
            num(row.r),
            row.ns.to_string(),
            row.nt.to_string(),
            row.converged.to_string(),
            num(row.residual_norm),
            row.newton_iters.to_string(),
            num(row.sup_dist),
            num(row.energy),
            num(row.stokes_energy),
            num(row.morse_energy),
            num(row.f_difference),
            num(row.measured_k),
            num(row.measured_kappa),
            row.violations.to_string(),
        ])
        .expect("in-memory");
    }
    finish(w)
}

/// Flow samples `sigma,q1[,q2],segment`, wrapped to the unit torus.
pub fn flow_csv(path: &FlowPath) -> Vec<u8> {
    let mut w = writer();
    let mut header = vec!["sigma".to_string()];
    header.extend((1..=path.dim).map(|c| format!("q{c}")));
    header.push("segment".into());
    w.write_record(&header).expect("in-memory");
    for (n, seg) in path.segments.iter().enumerate() {
        for (k, q) in seg.samples.iter().enumerate() {
            let q = wrap(q, path.dim);
            let mut rec = vec![num(seg.sigma0 + k as f64 * seg.step)];
            rec.extend((0..path.dim).map(|c| num(q[c])));
            rec.push(n.to_string());
            w.write_record(&rec).expect("in-memory");
        }
    }
    finish(w)
}

/// One labelled polyline.
pub struct Series<'a> {
    pub label: &'a str,
    pub points: Vec<(f64, f64)>,
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// Line plot on a fixed 640×400 viewbox; non-finite points are skipped.
pub fn svg_plot(title: &str, xlabel: &str, ylabel: &str, series: &[Series]) -> String {
    let (w, h, m) = (640.0, 400.0, 50.0);
    let finite = series.iter().flat_map(|s| s.points.iter()).filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in finite {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-300 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-300 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| m + (x - x0) / (x1 - x0) * (w - 2.0 * m);
    let py = |y: f64| h - m - (y - y0) / (y1 - y0) * (h - 2.0 * m);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w} {h}" width="{w}" height="{h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<polyline points="{m},{m} {m},{b} {r},{b}" fill="none" stroke="black"/>"#,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, w / 2.0, escape(title));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#, w / 2.0, h - 10.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {})">{}</text>"#,
        h / 2.0,
        h / 2.0,
        escape(ylabel)
    );
    let _ = writeln!(out, r#"<text x="{m}" y="{}" font-size="10">{x0:.4}</text>"#, h - m + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{x1:.4}</text>"#, w - m, h - m + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.4e}</text>"#, m - 4.0, h - m);
    let _ = writeln!(out, r#"<text x="{}" y="{m}" font-size="10" text-anchor="end">{y1:.4e}</text>"#, m - 4.0);
    for (n, s) in series.iter().enumerate() {
        let colour = PALETTE[n % PALETTE.len()];
        let pts: Vec<String> = s
            .points
            .iter()
            .filter(|(x, y)| x.is_finite() && y.is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#, pts.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{}</text>"#,
            w - m - 120.0,
            m + 14.0 * (n as f64 + 1.0),
            escape(s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strip_round_trip_is_exact() {
        let u = StripField::from_fn(2, 1.5, 6, 3, |s, t| {
            (Pt::new(0.1 * s + 1.0 / 3.0, t * t), Pt::new((s * t).sin(), -1e-17 * s))
        })
        .unwrap();
        let back = read_strip_csv(&strip_csv(&u)).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn truncated_strip_is_rejected() {
        let u = StripField::constant(1, 1.0, 4, 2, Pt::new(0.2, 0.0), Pt::zeros()).unwrap();
        let bytes = strip_csv(&u);
        let cut = &bytes[..bytes.len() - 20];
        assert!(read_strip_csv(cut).is_err());
    }

    #[test]
    fn csv_uses_lf_and_header() {
        let u = StripField::constant(1, 1.0, 2, 2, Pt::new(0.2, 0.0), Pt::zeros()).unwrap();
        let text = String::from_utf8(strip_csv(&u)).unwrap();
        assert!(text.starts_with("i,j,s,t,q1,p1\n"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn svg_is_well_formed_for_empty_series() {
        let svg = svg_plot("t", "x", "y", &[Series { label: "a<b", points: vec![] }]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a&lt;b"));
    }
}
