//! Deterministic SVG rendering for the projection scatter plots and the
//! per-layer GDV curve. No external renderer; the files are plain text
//! and byte-stable for identical inputs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{LexError, Result};
use crate::geometry::{GdvReport, MdsPoint};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;

/// Distinguishable fills, one per word class.
const PALETTE: [&str; 13] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
    "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#393b79", "#8c6d31",
    "#843c39",
];
const OTHER_COLOR: &str = "#c7c7c7";
const OTHER_LABEL: &str = "OTHER";

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-12 {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

fn svg_open(out: &mut String, title: &str) {
    write!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" \
         text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        escape(title)
    )
    .expect("string write");
}

fn frame(out: &mut String) {
    let x1 = MARGIN_LEFT;
    let y1 = MARGIN_TOP;
    let x2 = WIDTH - MARGIN_RIGHT;
    let y2 = HEIGHT - MARGIN_BOTTOM;
    write!(
        out,
        "<rect x=\"{x1}\" y=\"{y1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" \
         stroke=\"#333333\" stroke-width=\"1\"/>\n",
        x2 - x1,
        y2 - y1
    )
    .expect("string write");
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Maps every label to a colour. More than 13 distinct labels get
/// regrouped: the ten most frequent keep their own colour, the rest
/// share the grey OTHER bucket.
fn color_assignment(points: &[MdsPoint]) -> BTreeMap<String, &'static str> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for p in points {
        *counts.entry(p.label.as_str()).or_insert(0) += 1;
    }
    let mut assignment = BTreeMap::new();
    if counts.len() <= PALETTE.len() {
        for (i, (&name, _)) in counts.iter().enumerate() {
            assignment.insert(name.to_string(), PALETTE[i]);
        }
        return assignment;
    }
    let mut ranked: Vec<(&str, usize)> = counts.iter().map(|(&n, &c)| (n, c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let kept: Vec<&str> = {
        let mut names: Vec<&str> = ranked.iter().take(10).map(|&(n, _)| n).collect();
        names.sort_unstable();
        names
    };
    for (i, &name) in kept.iter().enumerate() {
        assignment.insert(name.to_string(), PALETTE[i]);
    }
    for (&name, _) in &counts {
        assignment.entry(name.to_string()).or_insert(OTHER_COLOR);
    }
    assignment
}

/// Renders one layer's 2-D projection as an SVG scatter plot.
pub fn render_scatter(points: &[MdsPoint], title: &str) -> Result<String> {
    if points.is_empty() {
        return Err(LexError::Analysis("no points to plot".into()));
    }
    let assignment = color_assignment(points);
    let (x_lo, x_hi) = axis_range(points.iter().map(|p| p.x));
    let (y_lo, y_hi) = axis_range(points.iter().map(|p| p.y));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN_BOTTOM - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    svg_open(&mut out, title);
    frame(&mut out);
    for p in points {
        let color = assignment
            .get(&p.label)
            .copied()
            .unwrap_or(OTHER_COLOR);
        write!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"3\" fill=\"{}\" fill-opacity=\"0.75\"/>\n",
            sx(p.x),
            sy(p.y),
            color
        )
        .expect("string write");
    }
    write!(
        out,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\">dimension 1</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 18.0
    )
    .expect("string write");
    write!(
        out,
        "<text x=\"20\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">dimension 2</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    )
    .expect("string write");

    // legend: one swatch per colour bucket, OTHER last
    let mut entries: Vec<(&String, &&str)> = assignment
        .iter()
        .filter(|&(_, &c)| c != OTHER_COLOR)
        .collect();
    let has_other = assignment.values().any(|&c| c == OTHER_COLOR);
    let lx = WIDTH - MARGIN_RIGHT + 18.0;
    let mut ly = MARGIN_TOP + 12.0;
    entries.sort_by_key(|&(name, _)| name.clone());
    for (name, &color) in entries {
        write!(
            out,
            "<circle cx=\"{lx}\" cy=\"{:.1}\" r=\"5\" fill=\"{color}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
            ly,
            lx + 12.0,
            ly + 4.0,
            escape(name)
        )
        .expect("string write");
        ly += 20.0;
    }
    if has_other {
        write!(
            out,
            "<circle cx=\"{lx}\" cy=\"{:.1}\" r=\"5\" fill=\"{OTHER_COLOR}\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\">{OTHER_LABEL}</text>\n",
            ly,
            lx + 12.0,
            ly + 4.0,
        )
        .expect("string write");
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Renders the GDV-per-layer curve. `layer_names` labels the x axis and
/// must match the report rows.
pub fn render_gdv_curve(report: &GdvReport, layer_names: &[String], title: &str) -> Result<String> {
    if report.rows.is_empty() {
        return Err(LexError::Analysis("empty GDV report".into()));
    }
    if layer_names.len() != report.rows.len() {
        return Err(LexError::Contract(format!(
            "{} layer names for {} GDV rows",
            layer_names.len(),
            report.rows.len()
        )));
    }
    let (y_lo, y_hi) = axis_range(report.rows.iter().map(|r| r.gdv));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let n = report.rows.len();
    let sx = |i: usize| {
        if n == 1 {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + plot_w * i as f64 / (n - 1) as f64
        }
    };
    let sy = |y: f64| HEIGHT - MARGIN_BOTTOM - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut out = String::new();
    svg_open(&mut out, title);
    frame(&mut out);

    // horizontal gridlines with value labels at five even steps
    for k in 0..=4 {
        let y = y_lo + (y_hi - y_lo) * k as f64 / 4.0;
        let py = sy(y);
        write!(
            out,
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{py:.2}\" x2=\"{:.1}\" y2=\"{py:.2}\" \
             stroke=\"#dddddd\" stroke-width=\"1\"/>\n\
             <text x=\"{:.1}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"end\">{y:.3}</text>\n",
            WIDTH - MARGIN_RIGHT,
            MARGIN_LEFT - 6.0,
            py + 4.0
        )
        .expect("string write");
    }
    if y_lo < 0.0 && y_hi > 0.0 {
        let py = sy(0.0);
        write!(
            out,
            "<line x1=\"{MARGIN_LEFT}\" y1=\"{py:.2}\" x2=\"{:.1}\" y2=\"{py:.2}\" \
             stroke=\"#999999\" stroke-width=\"1\" stroke-dasharray=\"4 3\"/>\n",
            WIDTH - MARGIN_RIGHT
        )
        .expect("string write");
    }

    let mut path = String::new();
    for (i, row) in report.rows.iter().enumerate() {
        let cmd = if i == 0 { 'M' } else { 'L' };
        write!(path, "{cmd}{:.2} {:.2} ", sx(i), sy(row.gdv)).expect("string write");
    }
    write!(
        out,
        "<path d=\"{}\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n",
        path.trim_end()
    )
    .expect("string write");
    for (i, row) in report.rows.iter().enumerate() {
        write!(
            out,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"#1f77b4\"/>\n\
             <text x=\"{:.2}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\" \
             text-anchor=\"middle\">{}</text>\n",
            sx(i),
            sy(row.gdv),
            sx(i),
            HEIGHT - MARGIN_BOTTOM + 18.0,
            escape(&layer_names[i])
        )
        .expect("string write");
    }
    write!(
        out,
        "<text x=\"20\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"12\" \
         text-anchor=\"middle\" transform=\"rotate(-90 20 {:.1})\">GDV</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    )
    .expect("string write");
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::GdvRow;

    fn sample_points() -> Vec<MdsPoint> {
        vec![
            MdsPoint { sample_id: 0, label: "NOUN".into(), x: 1.0, y: 2.0 },
            MdsPoint { sample_id: 1, label: "VERB".into(), x: -1.0, y: 0.5 },
            MdsPoint { sample_id: 2, label: "NOUN".into(), x: 0.3, y: -2.0 },
        ]
    }

    #[test]
    fn scatter_is_deterministic_and_well_formed() {
        let points = sample_points();
        let a = render_scatter(&points, "layer 1").unwrap();
        let b = render_scatter(&points, "layer 1").unwrap();
        assert_eq!(a, b);
        assert!(a.starts_with("<svg"));
        assert!(a.trim_end().ends_with("</svg>"));
        assert_eq!(a.matches("<circle").count(), 3 + 2); // points + legend swatches
        assert!(a.contains(">NOUN</text>"));
        assert!(a.contains(">VERB</text>"));
        assert!(render_scatter(&[], "x").is_err());
    }

    #[test]
    fn scatter_colours_follow_sorted_names() {
        let points = sample_points();
        let svg = render_scatter(&points, "t").unwrap();
        // NOUN sorts before VERB so it takes the first palette slot
        let noun_pos = svg.find(">NOUN<").unwrap();
        let legend = &svg[..noun_pos];
        assert!(legend.rfind(PALETTE[0]).is_some());
        let assignment = color_assignment(&points);
        assert_eq!(assignment["NOUN"], PALETTE[0]);
        assert_eq!(assignment["VERB"], PALETTE[1]);
    }

    #[test]
    fn scatter_regroups_beyond_thirteen_labels() {
        let mut points = Vec::new();
        for c in 0..15u32 {
            // class 0 is most frequent, class 14 least
            for k in 0..(30 - c) {
                points.push(MdsPoint {
                    sample_id: (c * 100 + k) as u64,
                    label: format!("C{c:02}"),
                    x: c as f64,
                    y: k as f64,
                });
            }
        }
        let assignment = color_assignment(&points);
        let own: Vec<&String> = assignment
            .iter()
            .filter(|&(_, &col)| col != OTHER_COLOR)
            .map(|(n, _)| n)
            .collect();
        assert_eq!(own.len(), 10);
        assert!(own.iter().all(|n| n.as_str() < "C10"));
        assert_eq!(assignment["C13"], OTHER_COLOR);
        let svg = render_scatter(&points, "many").unwrap();
        assert!(svg.contains(OTHER_LABEL));
    }

    #[test]
    fn degenerate_extent_still_renders() {
        let points = vec![
            MdsPoint { sample_id: 0, label: "A".into(), x: 1.0, y: 1.0 },
            MdsPoint { sample_id: 1, label: "A".into(), x: 1.0, y: 1.0 },
        ];
        let svg = render_scatter(&points, "flat").unwrap();
        assert!(!svg.contains("NaN"));
        assert!(!svg.contains("inf"));
    }

    #[test]
    fn gdv_curve_renders_all_layers() {
        let report = GdvReport {
            rows: (0..6)
                .map(|i| GdvRow {
                    layer: i,
                    gdv: -0.05 * i as f64,
                    n_points: 100,
                    n_classes: 4,
                    d: 32,
                })
                .collect(),
        };
        let names: Vec<String> = vec![
            "layer 1".into(), "layer 2".into(), "layer 3".into(),
            "layer 4".into(), "flatten".into(), "output".into(),
        ];
        let svg = render_gdv_curve(&report, &names, "GDV").unwrap();
        assert_eq!(svg.matches("<circle").count(), 6);
        assert!(svg.contains(">flatten</text>"));
        assert!(svg.contains("M") && svg.contains("L"));
        let again = render_gdv_curve(&report, &names, "GDV").unwrap();
        assert_eq!(svg, again);

        let short = vec!["a".to_string()];
        assert!(render_gdv_curve(&report, &short, "GDV").is_err());
        assert!(render_gdv_curve(&GdvReport { rows: vec![] }, &[], "GDV").is_err());
    }
}
