//! Static SVG 1.1 plots: learning curves with standard-error bands and
//! context-selection scatters.

use std::fmt::Write as _;
use std::path::Path;

use crate::environment;
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;

struct Axes {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Axes {
    fn sx(&self, x: f64) -> f64 {
        MARGIN + (x - self.x_min) / (self.x_max - self.x_min) * (WIDTH - 2.0 * MARGIN)
    }

    fn sy(&self, y: f64) -> f64 {
        // SVG y grows downward.
        HEIGHT - MARGIN - (y - self.y_min) / (self.y_max - self.y_min) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn svg_open(buf: &mut String) {
    let _ = writeln!(
        buf,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(buf, r#"<rect width="100%" height="100%" fill="white"/>"#);
}

fn svg_axes(buf: &mut String, axes: &Axes, x_label: &str, y_label: &str, title: &str) {
    let x0 = axes.sx(axes.x_min);
    let x1 = axes.sx(axes.x_max);
    let y0 = axes.sy(axes.y_min);
    let y1 = axes.sy(axes.y_max);
    let _ = writeln!(
        buf,
        r#"<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>"#
    );
    let _ = writeln!(
        buf,
        r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#
    );
    let _ = writeln!(
        buf,
        r#"<text x="{}" y="{}" font-size="13" text-anchor="middle">{x_label}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        buf,
        r#"<text x="18" y="{}" font-size="13" text-anchor="middle" transform="rotate(-90 18 {})">{y_label}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    let _ = writeln!(
        buf,
        r#"<text x="{}" y="25" font-size="15" text-anchor="middle">{title}</text>"#,
        WIDTH / 2.0
    );
    for frac in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let xv = axes.x_min + frac * (axes.x_max - axes.x_min);
        let yv = axes.y_min + frac * (axes.y_max - axes.y_min);
        let _ = writeln!(
            buf,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="middle">{:.3}</text>"#,
            axes.sx(xv),
            y0 + 16.0,
            xv
        );
        let _ = writeln!(
            buf,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{:.3}</text>"#,
            x0 - 6.0,
            axes.sy(yv) + 3.0,
            yv
        );
    }
}

/// Learning curve with a +-1 standard-error band from `summary.csv` rows
/// (episode, mean, stderr).
pub fn learning_curve_svg(rows: &[(f64, f64, f64)], title: &str) -> String {
    let mut buf = String::new();
    svg_open(&mut buf);
    if rows.is_empty() {
        buf.push_str("</svg>\n");
        return buf;
    }
    let x_min = rows.first().map(|r| r.0).unwrap_or(0.0);
    let x_max = rows.last().map(|r| r.0).unwrap_or(1.0).max(x_min + 1.0);
    let lo = rows.iter().map(|r| r.1 - r.2).fold(f64::INFINITY, f64::min);
    let hi = rows
        .iter()
        .map(|r| r.1 + r.2)
        .fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-9);
    let axes = Axes {
        x_min,
        x_max,
        y_min: lo - pad,
        y_max: hi + pad,
    };
    svg_axes(
        &mut buf,
        &axes,
        "episode",
        "mean offline performance",
        title,
    );

    // Error band as a closed polygon.
    let mut band = String::new();
    for (e, m, s) in rows {
        let _ = write!(band, "{},{} ", axes.sx(*e), axes.sy(m + s));
    }
    for (e, m, s) in rows.iter().rev() {
        let _ = write!(band, "{},{} ", axes.sx(*e), axes.sy(m - s));
    }
    let _ = writeln!(
        buf,
        r##"<polygon points="{}" fill="#4477aa" fill-opacity="0.25" stroke="none"/>"##,
        band.trim_end()
    );

    let mut line = String::new();
    for (e, m, _) in rows {
        let _ = write!(line, "{},{} ", axes.sx(*e), axes.sy(*m));
    }
    let _ = writeln!(
        buf,
        r##"<polyline points="{}" fill="none" stroke="#4477aa" stroke-width="2"/>"##,
        line.trim_end()
    );
    buf.push_str("</svg>\n");
    buf
}

/// Scatter of selected contexts over the context box; run 0 highlighted.
pub fn context_scatter_svg(points: &[(usize, f64, f64)], title: &str) -> String {
    let mut buf = String::new();
    svg_open(&mut buf);
    let (x_lo, x_hi) = environment::CONTEXT_X_RANGE;
    let (y_lo, y_hi) = environment::CONTEXT_Y_RANGE;
    let axes = Axes {
        x_min: x_lo - 0.05,
        x_max: x_hi + 0.05,
        y_min: y_lo - 0.1,
        y_max: y_hi + 0.1,
    };
    svg_axes(&mut buf, &axes, "context x", "context y", title);
    // Context-box outline.
    let _ = writeln!(
        buf,
        r##"<rect x="{}" y="{}" width="{}" height="{}" fill="none" stroke="#888888" stroke-dasharray="4 3"/>"##,
        axes.sx(x_lo),
        axes.sy(y_hi),
        axes.sx(x_hi) - axes.sx(x_lo),
        axes.sy(y_lo) - axes.sy(y_hi)
    );
    for (run, x, y) in points {
        if *run != 0 {
            let _ = writeln!(
                buf,
                r##"<circle cx="{}" cy="{}" r="2" fill="#4477aa" fill-opacity="0.45"/>"##,
                axes.sx(*x),
                axes.sy(*y)
            );
        }
    }
    for (run, x, y) in points {
        if *run == 0 {
            let _ = writeln!(
                buf,
                r##"<circle cx="{}" cy="{}" r="2.5" fill="#cc3311"/>"##,
                axes.sx(*x),
                axes.sy(*y)
            );
        }
    }
    buf.push_str("</svg>\n");
    buf
}

/// Reads `summary.csv` back into (episode, mean, stderr) rows.
pub fn read_summary_csv(path: &Path) -> Result<Vec<(f64, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 3 {
            return Err(Error::Config(format!("malformed summary row '{line}'")));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("bad number '{s}' in {}", path.display())))
        };
        rows.push((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?));
    }
    Ok(rows)
}

/// Reads `context_log.csv` back into (run, context_x, context_y) rows.
pub fn read_context_log_csv(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for line in text.lines().filter(|l| !l.starts_with('#')).skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(Error::Config(format!("malformed context row '{line}'")));
        }
        let run: usize = fields[0]
            .parse()
            .map_err(|_| Error::Config(format!("bad run index '{}'", fields[0])))?;
        let x: f64 = fields[2]
            .parse()
            .map_err(|_| Error::Config(format!("bad context x '{}'", fields[2])))?;
        let y: f64 = fields[3]
            .parse()
            .map_err(|_| Error::Config(format!("bad context y '{}'", fields[3])))?;
        rows.push((run, x, y));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_svg_is_well_formed() {
        let rows = vec![(10.0, -1.5, 0.2), (20.0, -1.0, 0.15), (30.0, -0.8, 0.1)];
        let svg = learning_curve_svg(&rows, "test");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("polygon"));
    }

    #[test]
    fn scatter_svg_marks_highlight_run() {
        let svg = context_scatter_svg(&[(0, 1.5, 0.0), (1, 2.0, 0.5)], "scatter");
        assert!(svg.contains("#cc3311"));
        assert!(svg.contains("#4477aa"));
    }
}
