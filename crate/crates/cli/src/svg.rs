//! Minimal SVG line-plot emitter for sweep curves and layered switch points.
//! No styling knobs; consumers wanting more should plot the CSV themselves.

use flowtime::nash::LayeredFlow;
use flowtime::network::Network;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn scale(points: &[(f64, f64)]) -> ((f64, f64), (f64, f64)) {
    let mut xmin = f64::INFINITY;
    let mut xmax = f64::NEG_INFINITY;
    let mut ymin = f64::INFINITY;
    let mut ymax = f64::NEG_INFINITY;
    for &(x, y) in points {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    if xmax - xmin < 1e-12 {
        xmax = xmin + 1.0;
    }
    if ymax - ymin < 1e-12 {
        ymax = ymin + 1.0;
    }
    ((xmin, xmax), (ymin, ymax))
}

fn polyline(points: &[(f64, f64)], xr: (f64, f64), yr: (f64, f64), color: &str) -> String {
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            let px = MARGIN + (x - xr.0) / (xr.1 - xr.0) * (W - 2.0 * MARGIN);
            let py = H - MARGIN - (y - yr.0) / (yr.1 - yr.0) * (H - 2.0 * MARGIN);
            format!("{px:.1},{py:.1}")
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Multi-series line plot; series share the axes.
pub fn line_plot(title: &str, x_label: &str, series: &[(&str, &Vec<(f64, f64)>)]) -> String {
    let all: Vec<(f64, f64)> = series
        .iter()
        .flat_map(|(_, pts)| pts.iter().copied())
        .collect();
    let (xr, yr) = scale(&all);
    let colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n"
    );
    out.push_str(&format!(
        "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{title}</text>\n",
        W / 2.0
    ));
    // axes
    out.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - MARGIN,
        W - MARGIN
    ));
    out.push_str(&format!(
        "<line x1=\"{MARGIN}\" y1=\"{MARGIN}\" x2=\"{MARGIN}\" y2=\"{}\" stroke=\"black\"/>\n",
        H - MARGIN
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{x_label}</text>\n",
        W / 2.0,
        H - 12.0
    ));
    out.push_str(&format!(
        "<text x=\"{MARGIN}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\">{:.4}</text>\n",
        H - MARGIN + 14.0,
        xr.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.4}</text>\n",
        W - MARGIN,
        H - MARGIN + 14.0,
        xr.1
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.4}</text>\n",
        MARGIN - 4.0,
        H - MARGIN,
        yr.0
    ));
    out.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">{:.4}</text>\n",
        MARGIN - 4.0,
        MARGIN + 4.0,
        yr.1
    ));
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = colors[i % colors.len()];
        out.push_str(&polyline(pts, xr, yr, color));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\" fill=\"{color}\">{name}</text>\n",
            W - MARGIN + 4.0,
            MARGIN + 14.0 * i as f64
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Staircase of switch points: x = θ, y = index of the path receiving flow.
pub fn theta_steps(layered: &LayeredFlow, net: &Network) -> String {
    let mut pts = Vec::new();
    for i in 1..layered.thetas.len() {
        pts.push((layered.thetas[i - 1], i as f64));
        pts.push((layered.thetas[i], i as f64));
    }
    let title = format!(
        "layered equilibrium: {} paths, deadline {}",
        layered.paths.len(),
        net.deadline
    );
    line_plot(&title, "theta", &[("active path", &pts)])
}
