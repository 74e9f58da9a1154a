//! Heat-map figures as plain SVG.
//!
//! Colour map: piecewise-linear through five anchors (dark blue, blue, green,
//! yellow, dark red) from `vmin` to `vmax`; values outside are clamped and
//! NaN cells are grey.

use ndarray::ArrayView2;

const ANCHORS: [[f64; 3]; 5] = [
    [38.0, 24.0, 95.0],
    [31.0, 119.0, 180.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
    [165.0, 0.0, 38.0],
];

const NAN_GREY: [u8; 3] = [160, 160, 160];

pub fn color(v: f64, vmin: f64, vmax: f64) -> [u8; 3] {
    let t = if vmax > vmin { ((v - vmin) / (vmax - vmin)).clamp(0.0, 1.0) } else { 0.5 };
    let t = if t.is_nan() { 0.0 } else { t };
    let x = t * (ANCHORS.len() - 1) as f64;
    let i = (x.floor() as usize).min(ANCHORS.len() - 2);
    let f = x - i as f64;
    let mut out = [0u8; 3];
    for k in 0..3 {
        out[k] = (ANCHORS[i][k] + f * (ANCHORS[i + 1][k] - ANCHORS[i][k])).round() as u8;
    }
    out
}

/// One rectangle per cell, row 0 at the top, with a title and a colour bar.
pub fn heatmap(values: ArrayView2<f64>, vmin: f64, vmax: f64, title: &str) -> String {
    let (rows, cols) = values.dim();
    let cell = (600.0 / cols.max(1) as f64).clamp(2.0, 24.0);
    let (w, h) = (cols as f64 * cell, rows as f64 * cell);
    let top = 28.0;
    let bar = 14.0;
    let total_h = top + h + 10.0 + bar + 24.0;
    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0}\" height=\"{:.0}\" shape-rendering=\"crispEdges\">\n",
        w + 20.0,
        total_h
    ));
    s.push_str(&format!(
        "<text x=\"10\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    ));
    for ((r, c), &v) in values.indexed_iter() {
        // masked entries arrive as NaN
        let [cr, cg, cb] = if v.is_nan() { NAN_GREY } else { color(v, vmin, vmax) };
        s.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#{cr:02x}{cg:02x}{cb:02x}\"/>\n",
            10.0 + c as f64 * cell,
            top + r as f64 * cell,
            cell,
            cell
        ));
    }
    let steps = 64;
    let y = top + h + 10.0;
    for i in 0..steps {
        let v = vmin + (vmax - vmin) * (i as f64 + 0.5) / steps as f64;
        let [cr, cg, cb] = color(v, vmin, vmax);
        s.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{y:.2}\" width=\"{:.2}\" height=\"{bar}\" fill=\"#{cr:02x}{cg:02x}{cb:02x}\"/>\n",
            10.0 + w * i as f64 / steps as f64,
            w / steps as f64
        ));
    }
    s.push_str(&format!(
        "<text x=\"10\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\">{vmin:.3}</text>\n",
        y + bar + 14.0
    ));
    s.push_str(&format!(
        "<text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{vmax:.3}</text>\n",
        10.0 + w,
        y + bar + 14.0
    ));
    s.push_str("</svg>\n");
    s
}

/// Bar chart of histogram counts.
pub fn histogram_svg(edges: &[f64], counts: &[usize], title: &str) -> String {
    let (w, h, top) = (600.0, 240.0, 28.0);
    let max = counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let bw = w / counts.len().max(1) as f64;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\">\n",
        w + 20.0,
        top + h + 30.0
    );
    s.push_str(&format!(
        "<text x=\"10\" y=\"18\" font-family=\"sans-serif\" font-size=\"14\">{}</text>\n",
        escape(title)
    ));
    for (i, &c) in counts.iter().enumerate() {
        let bh = h * c as f64 / max;
        s.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{bh:.2}\" fill=\"#1f77b4\"/>\n",
            10.0 + i as f64 * bw,
            top + h - bh,
            bw * 0.9
        ));
    }
    if let (Some(lo), Some(hi)) = (edges.first(), edges.last()) {
        s.push_str(&format!(
            "<text x=\"10\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\">{lo:.4}</text>\n",
            top + h + 16.0
        ));
        s.push_str(&format!(
            "<text x=\"{:.0}\" y=\"{:.0}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{hi:.4}</text>\n",
            10.0 + w,
            top + h + 16.0
        ));
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    #[test]
    fn colour_ends() {
        assert_eq!(color(0.0, 0.0, 1.0), [38, 24, 95]);
        assert_eq!(color(1.0, 0.0, 1.0), [165, 0, 38]);
        assert_eq!(color(7.0, 0.0, 1.0), color(1.0, 0.0, 1.0));
    }

    #[test]
    fn one_rect_per_cell() {
        let a = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64);
        let s = heatmap(a.view(), 0.0, 5.0, "a <b>");
        assert_eq!(s.matches("<rect").count(), 12 + 64);
        assert!(s.contains("a &lt;b&gt;"));
    }
}
