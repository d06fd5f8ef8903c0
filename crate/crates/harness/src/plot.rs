//! Minimal SVG renderings of aggregate curves and visitation heatmaps.

use crate::output::AggregateRow;
use std::fmt::Write;

const W: f64 = 720.0;
const H: f64 = 420.0;
const PAD: f64 = 56.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"];

fn finite_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return None;
    }
    if lo == hi {
        Some((lo - 1.0, hi + 1.0))
    } else {
        Some((lo, hi))
    }
}

/// Mean curves with shaded confidence bands, one colour per series.
pub fn line_chart(title: &str, x_label: &str, rows: &[AggregateRow]) -> String {
    let mut series: Vec<(&str, Vec<&AggregateRow>)> = Vec::new();
    for r in rows {
        match series.iter_mut().find(|(name, _)| *name == r.series) {
            Some((_, v)) => v.push(r),
            None => series.push((&r.series, vec![r])),
        }
    }
    let (x0, x1) = finite_range(rows.iter().map(|r| r.index as f64)).unwrap_or((0.0, 1.0));
    let (y0, y1) = finite_range(rows.iter().flat_map(|r| [r.ci_low, r.ci_high])).unwrap_or((0.0, 1.0));
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        svg,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 16.0, escape(x_label));
    for (i, y) in [y0, (y0 + y1) / 2.0, y1].into_iter().enumerate() {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end" data-tick="{i}">{:.3}</text>"#, PAD - 6.0, sy(y) + 4.0, y);
    }
    let _ = writeln!(svg, r#"<text x="{PAD}" y="{}" text-anchor="middle">{x0}</text>"#, H - PAD + 16.0);
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">{x1}</text>"#, W - PAD, H - PAD + 16.0);

    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if pts.len() > 1 {
            let mut band = String::new();
            for p in pts.iter() {
                let _ = write!(band, "{:.2},{:.2} ", sx(p.index as f64), sy(p.ci_high));
            }
            for p in pts.iter().rev() {
                let _ = write!(band, "{:.2},{:.2} ", sx(p.index as f64), sy(p.ci_low));
            }
            let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.trim_end());
            let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.index as f64), sy(p.mean))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.join(" "));
        } else {
            for p in pts {
                let (x, y) = (sx(p.index as f64), sy(p.mean));
                let _ = writeln!(svg, r#"<line x1="{x:.2}" x2="{x:.2}" y1="{:.2}" y2="{:.2}" stroke="{color}"/>"#, sy(p.ci_low), sy(p.ci_high));
                let _ = writeln!(svg, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
            }
        }
        let ly = PAD + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<rect x="{}" y="{}" width="10" height="10" fill="{color}"/>"#, W - PAD - 150.0, ly - 9.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}">{}</text>"#, W - PAD - 135.0, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grey-scale grid of `ln(1 + count)`; position along x, velocity along y.
pub fn heatmap(title: &str, position_bins: usize, velocity_bins: usize, counts: &[u64]) -> String {
    let cell = ((W - 2.0 * PAD) / position_bins as f64).min((H - 2.0 * PAD) / velocity_bins as f64);
    let top = (counts.iter().copied().max().unwrap_or(0) as f64).ln_1p().max(1e-12);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    for p in 0..position_bins {
        for v in 0..velocity_bins {
            let shade = 255.0 * (1.0 - (counts[p * velocity_bins + v] as f64).ln_1p() / top);
            let g = shade.round() as u8;
            let _ = writeln!(
                svg,
                r#"<rect x="{:.2}" y="{:.2}" width="{cell:.2}" height="{cell:.2}" fill="rgb({g},{g},{g})"/>"#,
                PAD + p as f64 * cell,
                PAD + (velocity_bins - 1 - v) as f64 * cell
            );
        }
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">position</text>"#, PAD + cell * position_bins as f64 / 2.0, PAD + cell * velocity_bins as f64 + 18.0);
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(series: &str, index: usize, mean: f64) -> AggregateRow {
        AggregateRow { series: series.into(), index, n: 3, mean, ci_low: mean - 1.0, ci_high: mean + 1.0 }
    }

    #[test]
    fn one_polyline_per_curve() {
        let rows = vec![row("a", 0, 1.0), row("a", 1, 2.0), row("b<c", 0, 0.0), row("b<c", 1, 3.0)];
        let svg = line_chart("t", "episode", &rows);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert!(svg.contains("b&lt;c"));
    }

    #[test]
    fn single_points_become_error_bars() {
        let svg = line_chart("t", "k", &[row("a", 0, 1.0)]);
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn heatmap_has_one_rect_per_cell() {
        let svg = heatmap("h", 3, 2, &[0, 1, 2, 3, 4, 5]);
        assert_eq!(svg.matches("<rect x=").count(), 6);
    }
}
