//! Deterministic text output: number formatting, CSV helpers and SVG heatmaps.

use std::fmt::Write as _;

/// Fixed 12-decimal rendering with negative zero folded to zero, so output
/// files are byte-identical across runs and platforms.
pub fn fmt_float(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{x:.12}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

/// Blue (-1) through white (0) to red (+1).
fn diverging(v: f64) -> (u8, u8, u8) {
    let v = if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |t: f64| (255.0 * (1.0 - t)).round() as u8;
    if v >= 0.0 {
        (255, fade(v), fade(v))
    } else {
        (fade(-v), fade(-v), 255)
    }
}

/// Heatmap of `values` (row-major, `y` slowest) on a symmetric color scale.
pub fn heatmap_svg(title: &str, x_label: &str, y_label: &str, x: &[f64], y: &[f64], values: &[f64]) -> String {
    const CELL: usize = 8;
    const MARGIN: usize = 40;
    let (nx, ny) = (x.len(), y.len());
    let (w, h) = (nx * CELL + 2 * MARGIN, ny * CELL + 2 * MARGIN);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="12" text-anchor="middle">{}</text>"#, w / 2, escape(title));
    for j in 0..ny {
        for i in 0..nx {
            let (r, g, b) = diverging(values[j * nx + i]);
            // Larger y at the top.
            let top = MARGIN + (ny - 1 - j) * CELL;
            let _ = writeln!(
                out,
                r##"<rect x="{}" y="{top}" width="{CELL}" height="{CELL}" fill="#{r:02x}{g:02x}{b:02x}"/>"##,
                MARGIN + i * CELL
            );
        }
    }
    let axis = |v: &[f64]| match (v.first(), v.last()) {
        (Some(a), Some(b)) => format!("[{}, {}]", trim(*a), trim(*b)),
        _ => String::new(),
    };
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{} {}</text>"#,
        w / 2,
        h - 12,
        escape(x_label),
        axis(x)
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{}" font-size="10" text-anchor="middle" transform="rotate(-90 12 {})">{} {}</text>"#,
        h / 2,
        h / 2,
        escape(y_label),
        axis(y)
    );
    out.push_str("</svg>\n");
    out
}

/// Polyline plot of one or more series sharing an x axis.
pub fn line_plot_svg(title: &str, x_label: &str, x: &[f64], series: &[(&str, &[f64])]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 40.0;
    const COLORS: [&str; 4] = ["#1f4e99", "#b22222", "#2e7d32", "#6a1b9a"];
    let (x0, x1) = bounds(x.iter().copied());
    let (y0, y1) = bounds(series.iter().flat_map(|(_, ys)| ys.iter().copied()));
    let sx = |v: f64| M + (v - x0) / (x1 - x0) * (W - 2.0 * M);
    let sy = |v: f64| H - M - (v - y0) / (y1 - y0) * (H - 2.0 * M);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" font-size="12" text-anchor="middle">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{M}" y="{M}" width="{}" height="{}" fill="none" stroke="black" stroke-width="0.5"/>"#,
        W - 2.0 * M,
        H - 2.0 * M
    );
    for (k, (name, ys)) in series.iter().enumerate() {
        let points: Vec<String> = x.iter().zip(ys.iter()).map(|(a, b)| format!("{:.2},{:.2}", sx(*a), sy(*b))).collect();
        let color = COLORS[k % COLORS.len()];
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.2" points="{}"/>"#, points.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="10" fill="{color}">{}</text>"#,
            W - M + 4.0,
            M + 12.0 * k as f64 + 10.0,
            escape(name)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{} [{}, {}]</text>"#,
        W / 2.0,
        H - 12.0,
        escape(x_label),
        trim(x0),
        trim(x1)
    );
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="10">{}</text>"#, M - 4.0, trim(y1));
    let _ = writeln!(out, r#"<text x="4" y="{}" font-size="10">{}</text>"#, H - M, trim(y0));
    out.push_str("</svg>\n");
    out
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn trim(x: f64) -> String {
    format!("{x:.2}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting() {
        assert_eq!(fmt_float(1.0), "1.000000000000");
        assert_eq!(fmt_float(-1e-15), "0.000000000000");
        assert_eq!(fmt_float(0.9999999999999998), "1.000000000000");
        assert_eq!(fmt_float(-0.25), "-0.250000000000");
    }

    #[test]
    fn heatmap_is_deterministic() {
        let x = [-1.0, 0.0, 1.0];
        let a = heatmap_svg("t", "x", "y", &x, &x, &[0.0, 0.5, -0.5, 1.0, -1.0, 0.0, 0.2, 0.3, 0.4]);
        let b = heatmap_svg("t", "x", "y", &x, &x, &[0.0, 0.5, -0.5, 1.0, -1.0, 0.0, 0.2, 0.3, 0.4]);
        assert_eq!(a, b);
        assert_eq!(a.matches("<rect").count(), 10);
        assert!(a.contains("#ff0000") && a.contains("#0000ff"));
    }

    #[test]
    fn line_plot_has_one_polyline_per_series() {
        let x = [0.0, 1.0, 2.0];
        let svg = line_plot_svg("t", "x", &x, &[("a", &[0.0, 1.0, 0.0]), ("b", &[1.0, 1.0, 1.0])]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        let flat = line_plot_svg("t", "x", &x, &[("c", &[2.0, 2.0, 2.0])]);
        assert!(!flat.contains("NaN"));
    }
}
