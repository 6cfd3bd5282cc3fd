use std::fmt::Write as _;

const CELL: usize = 12;

fn shade(t: f64) -> (u8, u8, u8) {
    // white to dark blue
    let t = t.clamp(0.0, 1.0);
    let lerp = |a: f64, b: f64| (a + (b - a) * t).round() as u8;
    (lerp(255.0, 8.0), lerp(255.0, 48.0), lerp(255.0, 107.0))
}

/// A row-major matrix as a grid of shaded squares, darkest at the maximum.
pub fn heatmap(rows: usize, cols: usize, values: &[f64]) -> String {
    let max = values.iter().copied().fold(0.0, f64::max);
    let (w, h) = (cols * CELL, rows * CELL);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n"
    );
    for (k, v) in values.iter().enumerate().take(rows * cols) {
        let (i, j) = (k / cols, k % cols);
        let (r, g, b) = shade(if max > 0.0 { v / max } else { 0.0 });
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#{r:02x}{g:02x}{b:02x}\"><title>({}, {}) {v}</title></rect>",
            j * CELL,
            i * CELL,
            i + 1,
            j + 1
        );
    }
    s.push_str("</svg>\n");
    s
}
