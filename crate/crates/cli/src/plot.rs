//! Static SVG line charts from a metrics CSV.

use std::fmt::Write as _;
use std::path::Path;

use dppo_core::trainer::CSV_HEADER;
use dppo_core::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 60.0;

/// One point per update: the update's global step, its mean return (if any
/// episodes had finished) and its mean surrogate variance over epochs.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdatePoint {
    pub global_step: f64,
    pub mean_return: Option<f64>,
    pub surrogate_variance: f64,
}

fn field(cols: &[&str], name: &str, line: usize) -> Result<Option<f64>> {
    let pos = CSV_HEADER.split(',').position(|c| c == name).expect("known column");
    let raw = cols[pos];
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| Error::Input(format!("metrics line {line}: column {name}: not a number: {raw:?}")))
}

pub fn read_metrics(text: &str) -> Result<Vec<UpdatePoint>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CSV_HEADER => {}
        _ => return Err(Error::Input(format!("metrics header must be {CSV_HEADER}"))),
    }
    let width = CSV_HEADER.split(',').count();
    let mut points: Vec<UpdatePoint> = Vec::new();
    let mut current_update = None;
    let mut epochs = 0.0;
    for (n, line) in lines.enumerate() {
        let line_no = n + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != width {
            return Err(Error::Input(format!(
                "metrics line {line_no}: expected {width} columns, got {}",
                cols.len()
            )));
        }
        let required = |name| {
            field(&cols, name, line_no)?
                .ok_or_else(|| Error::Input(format!("metrics line {line_no}: column {name} is empty")))
        };
        let update = required("update")?;
        let variance = required("surrogate_variance")?;
        let step = required("global_step")?;
        let ret = field(&cols, "mean_return", line_no)?;
        if current_update != Some(update) {
            current_update = Some(update);
            epochs = 0.0;
            points.push(UpdatePoint {
                global_step: step,
                mean_return: ret,
                surrogate_variance: 0.0,
            });
        }
        let p = points.last_mut().expect("pushed above");
        epochs += 1.0;
        p.surrogate_variance += (variance - p.surrogate_variance) / epochs;
    }
    Ok(points)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// A single-series line chart with min/max tick labels on both axes.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, points: &[(f64, f64)]) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (0.0, 1.0, 0.0, 1.0);
    if let Some(&(x, y)) = points.first() {
        (x0, x1, y0, y1) = (x, x, y, y);
        for &(x, y) in points {
            x0 = f64::min(x0, x);
            x1 = f64::max(x1, x);
            y0 = f64::min(y0, y);
            y1 = f64::max(y1, y);
        }
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (plot_w, plot_h) = (WIDTH - 2.0 * MARGIN, HEIGHT - 2.0 * MARGIN);
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let _ = writeln!(
        svg,
        r#"<path d="M{m:.1} {t:.1} V{b:.1} H{r:.1}" fill="none" stroke="black"/>"#,
        m = MARGIN,
        t = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (value, x) in [(x0, sx(x0)), (x1, sx(x1))] {
        let _ = writeln!(
            svg,
            r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="11">{value:.6}</text>"#,
            HEIGHT - MARGIN + 16.0
        );
    }
    for (value, y) in [(y0, sy(y0)), (y1, sy(y1))] {
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{y:.1}" text-anchor="end" font-family="sans-serif" font-size="11">{value:.6}</text>"#,
            MARGIN - 6.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 16.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.1}" text-anchor="middle" font-family="sans-serif" font-size="12" transform="rotate(-90 16 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    if !points.is_empty() {
        let coords: Vec<String> = points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `returns.svg` and `variance.svg` into `out_dir`.
pub fn plot_metrics(metrics: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(metrics)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", metrics.display())))?;
    let points = read_metrics(&text)?;
    let returns: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.mean_return.map(|r| (p.global_step, r)))
        .collect();
    let variance: Vec<(f64, f64)> = points.iter().map(|p| (p.global_step, p.surrogate_variance)).collect();
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("returns.svg"),
        line_chart("Return", "environment steps", "mean episode return", &returns),
    )?;
    std::fs::write(
        out_dir.join("variance.svg"),
        line_chart("Surrogate objective variance", "environment steps", "variance", &variance),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> String {
        format!(
            "{CSV_HEADER}\n64,0,0,,1.5,0.1,2,0.69,64,,,0.001\n64,0,1,,2.5,0.1,2,0.69,60,0.2,-0.1,0.001\n128,1,0,12,3,0.1,2,0.69,64,,,0.0005\n"
        )
    }

    #[test]
    fn groups_rows_by_update() {
        let pts = read_metrics(&sample()).unwrap();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].surrogate_variance, 2.0);
        assert_eq!(pts[0].mean_return, None);
        assert_eq!(pts[1].mean_return, Some(12.0));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_metrics("a,b\n").is_err());
        assert!(read_metrics(&format!("{CSV_HEADER}\n1,2\n")).is_err());
        assert!(read_metrics(&format!("{CSV_HEADER}\nx,0,0,,1,0,0,0,1,,,0\n")).is_err());
    }

    #[test]
    fn chart_is_deterministic_and_closed() {
        let pts = [(0.0, 1.0), (1.0, 3.0)];
        let a = line_chart("t", "x", "y", &pts);
        assert_eq!(a, line_chart("t", "x", "y", &pts));
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("<polyline"));
        assert!(!line_chart("t", "x", "y", &[]).contains("<polyline"));
    }
}
