//! Hand-written SVG figures. Coordinates are printed with fixed precision so
//! output bytes depend only on the inputs.

use std::fmt::Write as _;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
/// Larger matrices are averaged into this many bins per side.
pub const MAX_HEATMAP_BINS: usize = 200;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// One dataset's band: mean ± std in accuracy points, plus an optional single run.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSeries {
    pub name: String,
    pub checkpoints: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub overlay: Option<(String, Vec<f64>)>,
}

struct Axis {
    lo: f64,
    hi: f64,
    from: f64,
    to: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        if self.hi == self.lo {
            (self.from + self.to) / 2.0
        } else {
            self.from + (v - self.lo) / (self.hi - self.lo) * (self.to - self.from)
        }
    }
}

fn ticks(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if hi == lo {
        return vec![lo];
    }
    (0..=count)
        .map(|k| lo + (hi - lo) * k as f64 / count as f64)
        .collect()
}

pub fn trajectory_plot(title: &str, series: &[BandSeries]) -> String {
    let xs = series
        .iter()
        .flat_map(|s| s.checkpoints.iter().map(|&c| c as f64));
    let (xlo, xhi) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| {
        (a.min(x), b.max(x))
    });
    let ys = series.iter().flat_map(|s| {
        let band = s.mean.iter().zip(&s.std).flat_map(|(m, d)| [m - d, m + d]);
        band.chain(s.overlay.iter().flat_map(|(_, v)| v.iter().copied()))
    });
    let (mut ylo, mut yhi) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), y| {
        (a.min(y), b.max(y))
    });
    if !ylo.is_finite() {
        (ylo, yhi) = (0.0, 100.0);
    }
    let pad = ((yhi - ylo) * 0.05).max(0.5);
    let (ylo, yhi) = (ylo - pad, yhi + pad);
    let x = Axis {
        lo: xlo,
        hi: xhi,
        from: LEFT,
        to: WIDTH - RIGHT,
    };
    let y = Axis {
        lo: ylo,
        hi: yhi,
        from: HEIGHT - BOTTOM,
        to: TOP,
    };

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    axes(&mut out, &x, &y, "checkpoint", "accuracy");

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let pts = |vals: &[f64]| -> Vec<(f64, f64)> {
            s.checkpoints
                .iter()
                .zip(vals)
                .map(|(&c, &v)| (x.map(c as f64), y.map(v)))
                .collect()
        };
        let upper: Vec<f64> = s.mean.iter().zip(&s.std).map(|(m, d)| m + d).collect();
        let lower: Vec<f64> = s.mean.iter().zip(&s.std).map(|(m, d)| m - d).collect();
        let _ = writeln!(out, r#"<g class="series" data-name="{}">"#, escape(&s.name));
        if s.checkpoints.len() == 1 {
            let (cx, top) = pts(&upper)[0];
            let (_, bottom) = pts(&lower)[0];
            let (_, cy) = pts(&s.mean)[0];
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{top:.2}" width="8.00" height="{:.2}" fill="{color}" fill-opacity="0.2"/>"#,
                cx - 4.0,
                bottom - top
            );
            let _ = writeln!(
                out,
                r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{color}"/>"#
            );
        } else {
            let mut poly: Vec<(f64, f64)> = pts(&upper);
            poly.extend(pts(&lower).into_iter().rev());
            let _ = writeln!(
                out,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                join(&poly)
            );
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.8"/>"#,
                join(&pts(&s.mean))
            );
        }
        if let Some((run, vals)) = &s.overlay {
            let p = pts(vals);
            if p.len() == 1 {
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="none" stroke="{color}" stroke-dasharray="2 2"><title>{}</title></circle>"#,
                    p[0].0,
                    p[0].1,
                    escape(run)
                );
            } else {
                let _ = writeln!(
                    out,
                    r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1" stroke-dasharray="5 3"><title>{}</title></polyline>"#,
                    join(&p),
                    escape(run)
                );
            }
        }
        let ly = TOP + 16.0 * k as f64 + 8.0;
        let lx = WIDTH - RIGHT + 14.0;
        let _ = writeln!(
            out,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="3"/>"#,
            lx + 18.0
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            ly + 4.0,
            escape(&s.name)
        );
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

fn join(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .map(|(a, b)| format!("{a:.2},{b:.2}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn axes(out: &mut String, x: &Axis, y: &Axis, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (x.from, x.to, y.from, y.to);
    let _ = writeln!(out, r##"<g class="axes" stroke="#333" fill="#333">"##);
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}"/>"#
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}"/>"#
    );
    for v in ticks(x.lo, x.hi, 5) {
        let px = x.map(v);
        let _ = writeln!(
            out,
            r#"<text x="{px:.2}" y="{:.2}" stroke="none" text-anchor="middle">{v:.0}</text>"#,
            y0 + 16.0
        );
    }
    for v in ticks(y.lo, y.hi, 5) {
        let py = y.map(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" stroke="none" text-anchor="end">{v:.1}</text>"#,
            x0 - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" stroke="none" text-anchor="middle">{xlabel}</text>"#,
        (x0 + x1) / 2.0,
        y0 + 34.0
    );
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" stroke="none" text-anchor="middle" transform="rotate(-90 16 {:.2})">{ylabel}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    out.push_str("</g>\n");
}

/// Diverging color for a value in `[-1, 1]`: blue, white at 0, red.
pub fn diverging_color(v: Option<f64>) -> String {
    let Some(v) = v else {
        return "#cccccc".to_string();
    };
    let v = v.clamp(-1.0, 1.0);
    let (end, t) = if v < 0.0 {
        ((33.0, 102.0, 172.0), -v)
    } else {
        ((178.0, 24.0, 43.0), v)
    };
    let mix = |c: f64| (255.0 + (c - 255.0) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(end.0), mix(end.1), mix(end.2))
}

/// Square heatmap with a fixed `[-1, 1]` color scale.
///
/// `labels` are drawn when there are at most 40 of them. Matrices larger than
/// [`MAX_HEATMAP_BINS`] are shown as bin means over defined cells.
pub fn heatmap(
    title: &str,
    labels: &[String],
    value: impl Fn(usize, usize) -> Option<f64>,
    annotate: bool,
) -> String {
    let n = labels.len();
    let bins = n.clamp(1, MAX_HEATMAP_BINS);
    let show_labels = n <= 40;
    let margin = if show_labels { 110.0 } else { 30.0 };
    let side = 520.0;
    let cell = side / bins as f64;
    let (w, h) = (margin + side + 90.0, margin + side + 30.0);

    let bin_of = |b: usize| (b * n / bins)..((b + 1) * n / bins);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        margin + side / 2.0,
        escape(title)
    );
    if bins < n {
        let _ = writeln!(
            out,
            "<!-- {n} x {n} matrix shown as {bins} x {bins} bin means -->"
        );
    }
    let _ = writeln!(out, r#"<g class="cells" shape-rendering="crispEdges">"#);
    for bi in 0..bins {
        for bj in 0..bins {
            let mut vals = Vec::new();
            for i in bin_of(bi) {
                for j in bin_of(bj) {
                    if let Some(v) = value(i, j) {
                        vals.push(v);
                    }
                }
            }
            let v = (!vals.is_empty()).then(|| crate::numeric::mean(&vals));
            let (px, py) = (margin + bj as f64 * cell, margin + bi as f64 * cell);
            let _ = writeln!(
                out,
                r#"<rect x="{px:.2}" y="{py:.2}" width="{cell:.2}" height="{cell:.2}" fill="{}"/>"#,
                diverging_color(v)
            );
            if annotate {
                let text = v.map_or("NA".to_string(), |v| format!("{v:.2}"));
                let _ = writeln!(
                    out,
                    r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{text}</text>"#,
                    px + cell / 2.0,
                    py + cell / 2.0 + 3.0
                );
            }
        }
    }
    out.push_str("</g>\n");
    if show_labels {
        for (k, l) in labels.iter().enumerate() {
            let c = margin + (k as f64 + 0.5) * cell;
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                margin - 4.0,
                c + 3.0,
                escape(l)
            );
            let _ = writeln!(
                out,
                r#"<text x="{c:.2}" y="{:.2}" text-anchor="start" transform="rotate(-60 {c:.2} {:.2})">{}</text>"#,
                margin - 4.0,
                margin - 4.0,
                escape(l)
            );
        }
    }
    let lx = margin + side + 20.0;
    for k in 0..=20 {
        let v = 1.0 - k as f64 / 10.0;
        let _ = writeln!(
            out,
            r#"<rect x="{lx:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
            margin + k as f64 * side / 21.0,
            side / 21.0,
            diverging_color(Some(v))
        );
    }
    for (v, k) in [(1.0, 0.0), (0.0, 10.0), (-1.0, 20.0)] {
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{v:.0}</text>"#,
            lx + 20.0,
            margin + (k + 0.5) * side / 21.0 + 3.0
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn color_scale_endpoints() {
        assert_eq!(diverging_color(Some(0.0)), "#ffffff");
        assert_eq!(diverging_color(Some(1.0)), "#b2182b");
        assert_eq!(diverging_color(Some(-1.0)), "#2166ac");
        assert_eq!(diverging_color(None), "#cccccc");
    }

    #[test]
    fn single_checkpoint_band() {
        let s = BandSeries {
            name: "d".into(),
            checkpoints: vec![7],
            mean: vec![50.0],
            std: vec![2.0],
            overlay: Some(("seed0".into(), vec![51.0])),
        };
        let svg = trajectory_plot("t", &[s]);
        assert!(svg.contains("<circle"));
        assert!(!svg.contains("<polyline"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn large_heatmap_is_binned() {
        let labels: Vec<String> = (0..450).map(|i| i.to_string()).collect();
        let svg = heatmap(
            "m",
            &labels,
            |i, j| Some(if i == j { 1.0 } else { 0.0 }),
            false,
        );
        let rects = svg.matches("<rect").count();
        // background + bins² + legend
        assert_eq!(rects, 1 + MAX_HEATMAP_BINS * MAX_HEATMAP_BINS + 21);
    }
}
