//! Text renderings of a hierarchy report. All outputs except the timings are
//! deterministic for identical inputs.

use std::fmt::Write as _;

use super::{Extraction, HierarchyReport};

pub fn to_markdown(report: &HierarchyReport, title: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(t) = title {
        let _ = writeln!(s, "# {t}\n");
    }
    let _ = writeln!(
        s,
        "Initial scaling: delta* = {:.6e}, w-bar = {:.6}\n",
        report.initial.delta, report.initial.upper_weight
    );
    let _ = writeln!(s, "| r | LB | UB | gap | block sizes | n | ranks | status |");
    let _ = writeln!(s, "|---|---|---|---|---|---|---|---|");
    for c in &report.certificates {
        let _ = writeln!(
            s,
            "| {} | {:.6} | {:.6} | {:.3e} | {} | {} | {}/{}{} | {:?} |",
            c.order,
            c.lower_bound,
            c.upper_bound,
            c.gap,
            c.sizes,
            c.sizes.n_y,
            c.flatness.rank,
            c.flatness.rank_prev,
            if c.flatness.flat { " flat" } else { "" },
            c.solver_status
        );
    }
    let _ = writeln!(s, "\nTermination: {:?}", report.termination);
    if let Some(f) = &report.failure {
        let _ = writeln!(s, "Failure: {f}");
    }
    let _ = writeln!(s, "Best feasible weight: {:.6}", report.final_weight);
    if let Some(Extraction::Extracted { weight, residual, .. }) = report.last().map(|c| &c.extraction) {
        let _ = writeln!(s, "Extracted minimizer weight: {weight:.6} (residual {residual:.1e})");
    }
    s
}

pub fn to_csv(report: &HierarchyReport) -> String {
    let mut s = String::from("r,lower_bound,upper_bound,gap,delta,n_y,rank,rank_prev,flat,certified,status\n");
    for c in &report.certificates {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{},{},{},{},{:?}",
            c.order,
            c.lower_bound,
            c.upper_bound,
            c.gap,
            c.delta,
            c.sizes.n_y,
            c.flatness.rank,
            c.flatness.rank_prev,
            c.flatness.flat,
            c.certified,
            c.solver_status
        );
    }
    s
}

pub fn timings_json(report: &HierarchyReport) -> String {
    serde_json::to_string_pretty(&report.timings).unwrap_or_else(|_| "[]".into())
}

/// Lower and upper bounds against the relaxation order.
pub fn to_svg(report: &HierarchyReport) -> String {
    let (w, h) = (480.0, 320.0);
    let (left, right, top, bottom) = (70.0, 20.0, 20.0, 50.0);
    let certs = &report.certificates;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    if certs.is_empty() {
        let _ = writeln!(s, r#"<text x="{}" y="{}">no stages</text></svg>"#, w / 2.0 - 30.0, h / 2.0);
        return s;
    }
    let vals = certs.iter().flat_map(|c| [c.lower_bound, c.upper_bound]);
    let (mut lo, mut hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let pad = ((hi - lo) * 0.1).max(1e-3 * hi.abs().max(1e-12));
    lo -= pad;
    hi += pad;
    let r0 = certs[0].order as f64;
    let r1 = certs[certs.len() - 1].order as f64;
    let xs = |r: f64| {
        if r1 > r0 {
            left + (r - r0) / (r1 - r0) * (w - left - right)
        } else {
            (left + w - right) / 2.0
        }
    };
    let ys = |v: f64| top + (hi - v) / (hi - lo) * (h - top - bottom);
    let _ = writeln!(
        s,
        r#"<polyline points="{left},{top} {left},{} {},{}" fill="none" stroke="black"/>"#,
        h - bottom,
        w - right,
        h - bottom
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let y = ys(v);
        let _ = writeln!(
            s,
            r##"<line x1="{}" y1="{y:.2}" x2="{left}" y2="{y:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{v:.4}</text>"##,
            left - 4.0,
            left - 6.0,
            y + 4.0
        );
    }
    for c in certs {
        let x = xs(c.order as f64);
        let _ = writeln!(
            s,
            r#"<text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"#,
            h - bottom + 16.0,
            c.order
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">relaxation order r</text>"#,
        (left + w - right) / 2.0,
        h - 10.0
    );
    for (name, color, get) in [
        ("lower bound", "#1f77b4", (|c: &super::Certificate| c.lower_bound) as fn(&super::Certificate) -> f64),
        ("upper bound", "#d62728", |c: &super::Certificate| c.upper_bound),
    ] {
        let pts: Vec<String> = certs
            .iter()
            .map(|c| format!("{:.2},{:.2}", xs(c.order as f64), ys(get(c))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        for p in &pts {
            let (x, y) = p.split_once(',').expect("formatted pair");
            let _ = writeln!(s, r#"<circle cx="{x}" cy="{y}" r="3.5" fill="{color}"/>"#);
        }
        let ly = if name.starts_with("lower") { top + 14.0 } else { top + 30.0 };
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{name}</text>"#,
            w - right - 120.0,
            ly - 4.0,
            w - right - 100.0,
            ly - 4.0,
            w - right - 94.0,
            ly
        );
    }
    s.push_str("</svg>\n");
    s
}
