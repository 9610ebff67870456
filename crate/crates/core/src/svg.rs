//! Minimal static SVG plots: Kaplan-Meier step curves and surface heatmaps.

use std::fmt::Write;

use crate::surface::SurfaceGrid;
use crate::survstats::KmCurve;

const W: f64 = 640.0;
const H: f64 = 420.0;
const M: f64 = 50.0;
const COLORS: [&str; 4] = ["#c0392b", "#2471a3", "#1e8449", "#7d3c98"];

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Step plot of survival curves with an optional log-rank p-value annotation.
pub fn km_svg(curves: &[(&str, &KmCurve)], p_value: Option<f64>) -> String {
    let mut out = String::new();
    header(&mut out, "Kaplan-Meier survival");
    let t_max = curves
        .iter()
        .flat_map(|(_, c)| c.steps.iter().map(|s| s.time))
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let px = |t: f64| M + t / t_max * (W - 2.0 * M);
    let py = |s: f64| H - M - s * (H - 2.0 * M);
    let _ = writeln!(
        out,
        r#"<path d="M{M} {} V{} H{}" fill="none" stroke="black"/>"#,
        M,
        H - M,
        W - M
    );
    for k in 0..=4 {
        let s = k as f64 / 4.0;
        let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{s:.2}</text>"#, M - 4.0, py(s) + 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{t_max:.0}</text>"#, W - M, H - M + 16.0);
    for (k, (name, curve)) in curves.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut d = format!("M{} {}", px(0.0), py(1.0));
        let mut s_prev = 1.0;
        for s in &curve.steps {
            let _ = write!(d, " H{:.2} V{:.2}", px(s.time), py(s.survival));
            if s.events == 0 && s.censored > 0 {
                let _ = write!(d, " M{:.2} {:.2}", px(s.time), py(s_prev));
            }
            s_prev = s.survival;
        }
        let _ = writeln!(out, r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - M - 120.0,
            M + 16.0 * (k as f64 + 1.0),
            escape(name)
        );
    }
    if let Some(p) = p_value {
        let _ = writeln!(out, r#"<text x="{}" y="{}">log-rank p = {p:.3e}</text>"#, M + 10.0, H - M - 10.0);
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of grid values with a diverging palette centered at zero.
pub fn heatmap_svg(grid: &SurfaceGrid, values: &[f64], title: &str) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let (cw, ch) = ((W - 2.0 * M) / grid.nx as f64, (H - 2.0 * M) / grid.ny as f64);
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let v = values[i + grid.nx * j];
            let t = if scale > 0.0 { v / scale } else { 0.0 };
            let (r, g, b) = if t >= 0.0 {
                (255.0, 255.0 * (1.0 - t), 255.0 * (1.0 - t))
            } else {
                (255.0 * (1.0 + t), 255.0 * (1.0 + t), 255.0)
            };
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({},{},{})"/>"#,
                M + i as f64 * cw,
                H - M - (j + 1) as f64 * ch,
                cw + 0.05,
                ch + 0.05,
                r.round(),
                g.round(),
                b.round()
            );
        }
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">birth</text>"#, W / 2.0, H - 12.0);
    let _ = writeln!(out, r#"<text x="14" y="{}" transform="rotate(-90 14 {})" text-anchor="middle">death</text>"#, H / 2.0, H / 2.0);
    let _ = writeln!(out, r#"<text x="{M}" y="{}">{:.1}</text>"#, H - M + 14.0, grid.x_min);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.1}</text>"#, W - M, H - M + 14.0, grid.x_max);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.1}</text>"#, M - 4.0, H - M, grid.y_min);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{:.1}</text>"#, M - 4.0, M + 10.0, grid.y_max);
    let _ = writeln!(out, r#"<text x="{}" y="40" text-anchor="end">max |value| {scale:.3e}</text>"#, W - M);
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cox::Survival;
    use crate::survstats::kaplan_meier;

    #[test]
    fn documents_are_well_formed_enough() {
        let km = kaplan_meier(&[Survival::new(1.0, true).unwrap(), Survival::new(2.0, false).unwrap()]).unwrap();
        let s = km_svg(&[("high <risk>", &km)], Some(0.01));
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert!(s.contains("&lt;risk&gt;"));
        let g = SurfaceGrid::new((0.0, 1.0), (0.0, 1.0), 2, 2).unwrap();
        let h = heatmap_svg(&g, &[1.0, -1.0, 0.0, 0.5], "beta");
        assert_eq!(h.matches("<rect").count(), 5);
    }
}
